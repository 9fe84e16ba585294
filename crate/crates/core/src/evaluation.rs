//! Frame-level and pixel-level ROC protocols with AUC and EER.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::detector::AbnormalityMap;
use crate::error::{config_err, shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    FrameLevel,
    PixelLevel,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::FrameLevel => "frame_level",
            Protocol::PixelLevel => "pixel_level",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points ordered by FPR (then TPR), from `(0, 0)` to `(1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Per-frame score: the largest value of the map.
///
/// Thresholding this score is the same as asking whether any pixel reaches
/// the threshold.
pub fn frame_scores<T: Scalar>(maps: &[AbnormalityMap<T>]) -> Result<Vec<f64>> {
    if maps.is_empty() {
        return Err(config_err!("no maps to score"));
    }
    Ok(maps.iter().map(|m| m.max_value().to_f64_lossy()).collect())
}

/// Pads a video's `T-1` pair maps to `T` frames by repeating the last map
/// (the final frame has no outgoing flow).
pub fn align_to_frames<T: Scalar>(mut maps: Vec<AbnormalityMap<T>>, frames: usize) -> Result<Vec<AbnormalityMap<T>>> {
    if maps.len() + 1 == frames {
        let mut last = maps.last().cloned().ok_or_else(|| config_err!("no maps to align"))?;
        last.frame_index = frames - 1;
        maps.push(last);
    }
    if maps.len() != frames {
        return Err(shape_err!(
            "{} maps cannot be aligned with {} frames",
            maps.len(),
            frames
        ));
    }
    Ok(maps)
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both classes ({pos} abnormal, {neg} normal frames)"
        )));
    }
    Ok((pos, neg))
}

/// Distinct thresholds, highest first.
fn descending_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

fn finish_curve(mut points: Vec<RocPoint>) -> RocCurve {
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    RocCurve { points }
}

/// Exact ROC of frame scores: one point per distinct score (frames with
/// `score ≥ τ` are flagged).
pub fn frame_level_roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(shape_err!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN frame score".into()));
    }
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: tau,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(finish_curve(points))
}

/// Options of the localisation protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PixelProtocol {
    /// Fraction of ground-truth pixels a detection must cover (inclusive).
    pub coverage: f64,
    /// Count an abnormal frame whose detection misses the coverage as a
    /// false positive (in addition to it not being a true positive).
    pub missed_detection_is_false_positive: bool,
}

impl Default for PixelProtocol {
    fn default() -> Self {
        PixelProtocol {
            coverage: 0.4,
            missed_detection_is_false_positive: true,
        }
    }
}

/// What the pixel-level protocol needs to know about one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelFrame {
    /// Largest map value (any pixel `≥ τ` iff `τ ≤ max`).
    pub max: f64,
    /// For abnormal frames, the largest `τ` at which the detection still
    /// covers enough of the mask.
    pub critical: Option<f64>,
}

/// Number of mask pixels that must be covered.
pub fn required_pixels(mask_pixels: usize, coverage: f64) -> usize {
    ((coverage * mask_pixels as f64 - 1e-9).ceil() as usize).clamp(1, mask_pixels.max(1))
}

/// Per-frame summaries of one video's maps against its ground truth.
pub fn pixel_frames<T: Scalar>(
    maps: &[AbnormalityMap<T>],
    gt: &GroundTruth,
    protocol: &PixelProtocol,
) -> Result<Vec<PixelFrame>> {
    if maps.len() != gt.frame_labels.len() {
        return Err(shape_err!(
            "{} maps for {} labelled frames",
            maps.len(),
            gt.frame_labels.len()
        ));
    }
    maps.iter()
        .zip(&gt.frame_labels)
        .enumerate()
        .map(|(t, (map, &abnormal))| {
            let max = map.max_value().to_f64_lossy();
            if !abnormal {
                return Ok(PixelFrame { max, critical: None });
            }
            let mask = gt
                .pixel_masks
                .as_ref()
                .map(|m| &m[t])
                .filter(|m| !m.is_empty())
                .ok_or_else(|| Error::GroundTruthMissing(format!("abnormal frame {t} has no pixel mask")))?;
            if (mask.height, mask.width) != (map.height, map.width) {
                return Err(shape_err!(
                    "map {}x{} vs mask {}x{} at frame {t}",
                    map.height,
                    map.width,
                    mask.height,
                    mask.width
                ));
            }
            let mut inside: Vec<f64> = map
                .values
                .iter()
                .zip(&mask.data)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v.to_f64_lossy())
                .collect();
            inside.sort_by(|a, b| b.total_cmp(a));
            let k = required_pixels(inside.len(), protocol.coverage);
            Ok(PixelFrame {
                max,
                critical: Some(inside[k - 1]),
            })
        })
        .collect()
}

/// `(FPR, TPR)` of the localisation protocol at threshold `τ`.
pub fn pixel_rates_at(frames: &[PixelFrame], tau: f64, protocol: &PixelProtocol) -> (f64, f64) {
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for f in frames {
        match f.critical {
            None => {
                neg += 1;
                if f.max >= tau {
                    fp += 1;
                }
            }
            Some(c) => {
                pos += 1;
                if c >= tau {
                    tp += 1;
                } else if protocol.missed_detection_is_false_positive && f.max >= tau {
                    fp += 1;
                }
            }
        }
    }
    ((fp as f64 / neg.max(1) as f64).min(1.0), tp as f64 / pos.max(1) as f64)
}

/// ROC of the localisation protocol over every threshold at which a rate
/// can change.
pub fn pixel_level_roc(frames: &[PixelFrame], protocol: &PixelProtocol) -> Result<RocCurve> {
    let labels: Vec<bool> = frames.iter().map(|f| f.critical.is_some()).collect();
    class_counts(&labels)?;
    let mut cand: Vec<f64> = frames.iter().map(|f| f.max).collect();
    cand.extend(frames.iter().filter_map(|f| f.critical));
    if cand.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN map value".into()));
    }
    let points = descending_unique(cand)
        .into_iter()
        .map(|tau| {
            let (fpr, tpr) = pixel_rates_at(frames, tau, protocol);
            RocPoint {
                threshold: tau,
                fpr,
                tpr,
            }
        })
        .collect();
    Ok(finish_curve(points))
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Equal error rate: the FPR where `FPR = 1 - TPR` on the piecewise-linear
/// curve (first crossing).
pub fn eer(curve: &RocCurve) -> f64 {
    let g = |p: &RocPoint| p.fpr + p.tpr - 1.0;
    for w in curve.points.windows(2) {
        let (g0, g1) = (g(&w[0]), g(&w[1]));
        if g0 == 0.0 {
            return w[0].fpr;
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let s = -g0 / (g1 - g0);
            return (w[0].fpr + s * (w[1].fpr - w[0].fpr)).clamp(0.0, 1.0);
        }
    }
    curve.points.last().map_or(1.0, |p| p.fpr)
}

/// Ground-truth-aligned maps of one test video.
pub struct LabeledVideo<'a, T> {
    pub video_id: &'a str,
    pub maps: &'a [AbnormalityMap<T>],
    pub ground_truth: &'a GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMetric {
    pub video: String,
    /// `None` when the video holds only one class.
    pub auc: Option<f64>,
    pub eer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub auc: f64,
    pub eer: f64,
    pub per_video: Vec<VideoMetric>,
    #[serde(skip)]
    pub curve: Option<RocCurve>,
}

fn video_metric(video: &str, curve: Result<RocCurve>) -> Result<VideoMetric> {
    match curve {
        Ok(c) => Ok(VideoMetric {
            video: video.into(),
            auc: Some(auc(&c)),
            eer: Some(eer(&c)),
        }),
        Err(Error::UndefinedMetric(_)) => Ok(VideoMetric {
            video: video.into(),
            auc: None,
            eer: None,
        }),
        Err(e) => Err(e),
    }
}

/// Frame-level metrics pooled over all frames of all videos.
pub fn evaluate_frame_level<T: Scalar>(videos: &[LabeledVideo<'_, T>]) -> Result<MetricReport> {
    let (mut scores, mut labels, mut per_video) = (Vec::new(), Vec::new(), Vec::new());
    for v in videos {
        let s = frame_scores(v.maps)?;
        let l = &v.ground_truth.frame_labels;
        per_video.push(video_metric(v.video_id, frame_level_roc(&s, l))?);
        scores.extend(s);
        labels.extend_from_slice(l);
    }
    let curve = frame_level_roc(&scores, &labels)?;
    Ok(MetricReport {
        protocol: Protocol::FrameLevel,
        auc: auc(&curve),
        eer: eer(&curve),
        per_video,
        curve: Some(curve),
    })
}

/// Pixel-level metrics pooled over all frames of all videos.
pub fn evaluate_pixel_level<T: Scalar>(
    videos: &[LabeledVideo<'_, T>],
    protocol: &PixelProtocol,
) -> Result<MetricReport> {
    let (mut frames, mut per_video) = (Vec::new(), Vec::new());
    for v in videos {
        let f = pixel_frames(v.maps, v.ground_truth, protocol)?;
        per_video.push(video_metric(v.video_id, pixel_level_roc(&f, protocol))?);
        frames.extend(f);
    }
    let curve = pixel_level_roc(&frames, protocol)?;
    Ok(MetricReport {
        protocol: Protocol::PixelLevel,
        auc: auc(&curve),
        eer: eer(&curve),
        per_video,
        curve: Some(curve),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

/// `protocol,dataset,video,auc,eer` rows; the pooled result uses video `ALL`.
pub fn report_csv(dataset: &str, reports: &[MetricReport]) -> String {
    let mut s = String::from("protocol,dataset,video,auc,eer\n");
    for r in reports {
        s.push_str(&format!("{},{},ALL,{:.6},{:.6}\n", r.protocol, dataset, r.auc, r.eer));
        for v in &r.per_video {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.protocol,
                dataset,
                v.video,
                opt(v.auc),
                opt(v.eer)
            ));
        }
    }
    s
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        s.push_str(&format!("{},{:.9},{:.9}\n", p.threshold, p.fpr, p.tpr));
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> RocCurve {
        RocCurve {
            points: pts
                .iter()
                .map(|&(fpr, tpr)| RocPoint {
                    threshold: 0.0,
                    fpr,
                    tpr,
                })
                .collect(),
        }
    }

    #[test]
    fn diagonal_and_perfect_curves() {
        let d = curve(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!((auc(&d), eer(&d)), (0.5, 0.5));
        let p = curve(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!((auc(&p), eer(&p)), (1.0, 0.0));
    }

    #[test]
    fn separable_scores() {
        let c = frame_level_roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&c), 1.0);
        assert!(matches!(
            frame_level_roc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn coverage_count_is_inclusive() {
        assert_eq!(required_pixels(10, 0.4), 4);
        assert_eq!(required_pixels(15, 0.4), 6);
        assert_eq!(required_pixels(1, 0.4), 1);
    }

    #[test]
    fn last_map_repeated_for_final_frame() {
        let m = AbnormalityMap::<f32> {
            height: 1,
            width: 1,
            values: vec![0.3],
            frame_index: 0,
            lambda: 2.0,
        };
        let a = align_to_frames(vec![m.clone()], 2).unwrap();
        assert_eq!((a.len(), a[1].frame_index, a[1].values[0]), (2, 1, 0.3));
        assert!(align_to_frames(vec![m], 4).is_err());
    }
}
