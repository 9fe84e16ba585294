//! Fused per-pixel abnormality maps from the two reconstruction channels.
//!
//! For each test pair `t` the frame→flow generator predicts `p_O` from the
//! frame and the flow→frame generator predicts `p_F` from the flow image. The
//! motion channel compares `O` with `p_O` pixel by pixel; the appearance
//! channel compares frozen features of `F` and `p_F`. Both are normalised by
//! their video-wide maximum and summed as `A = N_S + λ·N_O`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::VideoSequence;
use crate::error::{config_err, shape_err, Error, Result};
use crate::gan::{Direction, Generator, NoiseSource};
use crate::imageops::{resize_plane, Sampling};
use crate::optflow::{FlowRange, FlowStore};
use crate::perception::{FeatureExtractor, FeatureMap};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::{derive_seed, flow_input};

/// Default weight of the motion channel in the fused map.
pub const DEFAULT_LAMBDA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapChannel {
    OpticalFlow,
    Semantic,
    SemanticUpsampled,
}

/// Nonnegative single-channel map.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceMap<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    pub channel: MapChannel,
}

impl<T: Scalar> DifferenceMap<T> {
    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }
}

/// Fused map for one frame, at ground-truth resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AbnormalityMap<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    pub frame_index: usize,
    pub lambda: f64,
}

impl<T: Scalar> AbnormalityMap<T> {
    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }
}

fn expect_direction<T>(g: &Generator<T>, want: Direction) -> Result<()> {
    if g.direction != want {
        return Err(config_err!("expected a {want} generator, got {}", g.direction));
    }
    Ok(())
}

/// `p_O = G^{F→O}(F)` for a frame already in model-input form.
pub fn reconstruct_flow<T: Scalar>(g: &Generator<T>, frame: &Tensor<T>, noise: NoiseSource) -> Result<Tensor<T>> {
    expect_direction(g, Direction::FrameToFlow)?;
    g.forward(frame, noise)
}

/// `p_F = G^{O→F}(O)` for an encoded flow image.
pub fn reconstruct_frame<T: Scalar>(g: &Generator<T>, flow: &Tensor<T>, noise: NoiseSource) -> Result<Tensor<T>> {
    expect_direction(g, Direction::FlowToFrame)?;
    g.forward(flow, noise)
}

/// Sum over channels of `|O - p_O|`.
pub fn flow_difference<T: Scalar>(o: &Tensor<T>, p_o: &Tensor<T>) -> Result<DifferenceMap<T>> {
    if o.dims() != p_o.dims() {
        return Err(shape_err!("flow images {:?} and {:?} differ", o.dims(), p_o.dims()));
    }
    let (c, h, w) = o.dims();
    let mut values = vec![T::zero(); h * w];
    for ch in 0..c {
        for ((v, &a), &b) in values.iter_mut().zip(o.plane(ch)).zip(p_o.plane(ch)) {
            *v += (a - b).abs();
        }
    }
    Ok(DifferenceMap {
        height: h,
        width: w,
        values,
        channel: MapChannel::OpticalFlow,
    })
}

/// Mean over feature channels of `|h(F) - h(p_F)|`.
pub fn semantic_difference<T: Scalar>(hf: &FeatureMap<T>, hpf: &FeatureMap<T>) -> Result<DifferenceMap<T>> {
    if hf.extractor != hpf.extractor {
        return Err(config_err!(
            "feature maps come from different extractors ({} vs {})",
            hf.extractor,
            hpf.extractor
        ));
    }
    let (a, b) = (&hf.values, &hpf.values);
    if a.dims() != b.dims() {
        return Err(shape_err!("feature maps {:?} and {:?} differ", a.dims(), b.dims()));
    }
    let (c, h, w) = a.dims();
    let mut values = vec![T::zero(); h * w];
    for ch in 0..c {
        for ((v, &x), &y) in values.iter_mut().zip(a.plane(ch)).zip(b.plane(ch)) {
            *v += (x - y).abs();
        }
    }
    let inv = T::one() / T::lit(c.max(1) as f64);
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(DifferenceMap {
        height: h,
        width: w,
        values,
        channel: MapChannel::Semantic,
    })
}

/// Bilinear (corner-aligned) upsampling to `height × width`.
pub fn upsample_map<T: Scalar>(m: &DifferenceMap<T>, height: usize, width: usize) -> Result<DifferenceMap<T>> {
    if height < m.height || width < m.width {
        return Err(config_err!(
            "cannot upsample {}x{} to smaller {}x{}",
            m.height,
            m.width,
            height,
            width
        ));
    }
    Ok(DifferenceMap {
        height,
        width,
        values: resize_plane(&m.values, m.height, m.width, height, width, Sampling::AlignCorners),
        channel: match m.channel {
            MapChannel::Semantic => MapChannel::SemanticUpsampled,
            c => c,
        },
    })
}

/// Divides every map by the largest element over the whole list.
///
/// Returns the maximum used; when it is zero every output is zero.
pub fn normalize_per_video<T: Scalar>(maps: &[DifferenceMap<T>]) -> Result<(Vec<DifferenceMap<T>>, T)> {
    if maps.is_empty() {
        return Err(config_err!("no maps to normalise"));
    }
    let m = maps.iter().map(DifferenceMap::max_value).fold(T::zero(), T::max);
    let out = maps
        .iter()
        .map(|d| DifferenceMap {
            values: if m > T::zero() {
                d.values.iter().map(|&v| v / m).collect()
            } else {
                vec![T::zero(); d.values.len()]
            },
            ..d.clone()
        })
        .collect();
    Ok((out, m))
}

/// `A = N_S + λ·N_O`, pointwise.
pub fn fuse<T: Scalar>(n_s: &DifferenceMap<T>, n_o: &DifferenceMap<T>, lambda: f64) -> Result<Vec<T>> {
    if (n_s.height, n_s.width) != (n_o.height, n_o.width) {
        return Err(shape_err!(
            "cannot fuse {}x{} with {}x{}",
            n_s.height,
            n_s.width,
            n_o.height,
            n_o.width
        ));
    }
    if !(lambda >= 0.0) {
        return Err(config_err!("fusion weight must be >= 0, got {lambda}"));
    }
    let l = T::lit(lambda);
    Ok(n_s.values.iter().zip(&n_o.values).map(|(&s, &o)| s + l * o).collect())
}

/// Which channels contribute to the final map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fusion {
    /// `N_S + λ·N_O`.
    Combined(f64),
    /// `N_S` alone (`λ = 0`).
    AppearanceOnly,
    /// `N_O` alone.
    MotionOnly,
}

/// Normalised channel maps of one video, kept so they can be re-fused.
#[derive(Clone, Debug)]
pub struct VideoDetection<T> {
    pub video_id: String,
    /// Ground-truth (source) resolution `(H, W)`.
    pub target_dims: (usize, usize),
    pub n_s: Vec<DifferenceMap<T>>,
    pub n_o: Vec<DifferenceMap<T>>,
    pub m_s: T,
    pub m_o: T,
}

impl<T: Scalar> VideoDetection<T> {
    /// Number of maps (`T - 1` for a `T`-frame video).
    pub fn len(&self) -> usize {
        self.n_o.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_o.is_empty()
    }

    /// Fused maps resized (bilinear) to the ground-truth resolution.
    pub fn fuse(&self, fusion: Fusion) -> Result<Vec<AbnormalityMap<T>>> {
        let (th, tw) = self.target_dims;
        self.n_s
            .iter()
            .zip(&self.n_o)
            .enumerate()
            .map(|(t, (s, o))| {
                let (values, lambda) = match fusion {
                    Fusion::Combined(l) => (fuse(s, o, l)?, l),
                    Fusion::AppearanceOnly => (s.values.clone(), 0.0),
                    Fusion::MotionOnly => (o.values.clone(), f64::INFINITY),
                };
                Ok(AbnormalityMap {
                    height: th,
                    width: tw,
                    values: resize_plane(&values, s.height, s.width, th, tw, Sampling::HalfPixel),
                    frame_index: t,
                    lambda,
                })
            })
            .collect()
    }
}

/// Two trained generators plus the frozen extractor and flow source.
pub struct Detector<'a, T: Scalar> {
    pub flow_generator: &'a Generator<T>,
    pub frame_generator: &'a Generator<T>,
    pub extractor: &'a dyn FeatureExtractor<T>,
    pub flows: &'a FlowStore,
    pub flow_range: FlowRange,
    /// Dropout stays on at test time with this seed; `None` disables it.
    pub dropout_seed: Option<u64>,
}

/// Raw differences of one pair, before video-wide normalisation.
struct PairDiffs<T> {
    delta_o: DifferenceMap<T>,
    delta_s: DifferenceMap<T>,
}

impl<'a, T: Scalar> Detector<'a, T> {
    pub fn new(
        flow_generator: &'a Generator<T>,
        frame_generator: &'a Generator<T>,
        extractor: &'a dyn FeatureExtractor<T>,
        flows: &'a FlowStore,
        flow_range: FlowRange,
    ) -> Result<Self> {
        expect_direction(flow_generator, Direction::FrameToFlow)?;
        expect_direction(frame_generator, Direction::FlowToFrame)?;
        if flow_generator.topology.resolution != frame_generator.topology.resolution {
            return Err(config_err!(
                "generators trained at different resolutions ({} vs {})",
                flow_generator.topology.resolution,
                frame_generator.topology.resolution
            ));
        }
        Ok(Detector {
            flow_generator,
            frame_generator,
            extractor,
            flows,
            flow_range,
            dropout_seed: Some(0),
        })
    }

    pub fn resolution(&self) -> usize {
        self.flow_generator.topology.resolution
    }

    fn noise(&self, t: usize, channel: u64) -> NoiseSource {
        match self.dropout_seed {
            Some(seed) => NoiseSource::seeded(derive_seed(seed, &[t as u64, channel])),
            None => NoiseSource::off(),
        }
    }

    fn pair_diffs(&self, video: &VideoSequence, t: usize) -> Result<PairDiffs<T>> {
        let res = self.resolution();
        let frame = video.frames[t].model_input::<T>(res);
        let flow = flow_input::<T>(self.flows, video, t, res, &self.flow_range)?;
        let p_o = reconstruct_flow(self.flow_generator, &frame, self.noise(t, 0))?;
        let delta_o = flow_difference(&flow, &p_o)?;
        let p_f = reconstruct_frame(self.frame_generator, &flow, self.noise(t, 1))?;
        let half = T::lit(0.5);
        let to_unit = |x: T| ((x + T::one()) * half).max(T::zero()).min(T::one());
        let hf = self.extractor.extract(&frame.map(to_unit))?;
        let hpf = self.extractor.extract(&p_f.map(to_unit))?;
        let delta_s = upsample_map(&semantic_difference(&hf, &hpf)?, res, res)?;
        Ok(PairDiffs { delta_o, delta_s })
    }

    /// Both passes for one video: per-pair differences (in parallel), then
    /// video-wide normalisation.
    pub fn detect_video(&self, video: &VideoSequence) -> Result<VideoDetection<T>> {
        if video.frames.len() < 2 {
            return Err(Error::DegenerateVideo {
                video: video.id.clone(),
                len: video.frames.len(),
            });
        }
        let diffs = (0..video.frames.len() - 1)
            .into_par_iter()
            .map(|t| self.pair_diffs(video, t))
            .collect::<Result<Vec<_>>>()?;
        let (delta_o, delta_s): (Vec<_>, Vec<_>) = diffs.into_iter().map(|d| (d.delta_o, d.delta_s)).unzip();
        let (n_o, m_o) = normalize_per_video(&delta_o)?;
        let (n_s, m_s) = normalize_per_video(&delta_s)?;
        Ok(VideoDetection {
            video_id: video.id.clone(),
            target_dims: video.source_resolution,
            n_s,
            n_o,
            m_s,
            m_o,
        })
    }
}

pub const AMP_MAGIC: &[u8; 4] = b"AMP1";

/// Raw map container: `b"AMP1"`, `u32` height, `u32` width, then
/// `height·width` little-endian `f32` values, row-major.
pub fn write_amp<T: Scalar>(path: &Path, height: usize, width: usize, values: &[T]) -> Result<()> {
    if values.len() != height * width {
        return Err(shape_err!(
            "map has {} values, expected {}x{}",
            values.len(),
            height,
            width
        ));
    }
    let mut out = Vec::with_capacity(12 + 4 * values.len());
    out.extend_from_slice(AMP_MAGIC);
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_amp(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != AMP_MAGIC {
        return Err(Error::Format(format!("{}: not an AMP1 map", path.display())));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + 4 * h * w {
        return Err(Error::Format(format!("{}: truncated AMP1 map", path.display())));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((h, w, values))
}

/// Linear grey-level rendering: `255 · A / scale`, saturated.
pub fn heatmap_image<T: Scalar>(map: &AbnormalityMap<T>, scale: f64) -> image::GrayImage {
    let s = if scale > 0.0 { 255.0 / scale } else { 0.0 };
    image::GrayImage::from_fn(map.width as u32, map.height as u32, |x, y| {
        let v = map.values[y as usize * map.width + x as usize].to_f64_lossy() * s;
        image::Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(h: usize, w: usize, values: Vec<f64>) -> DifferenceMap<f64> {
        DifferenceMap {
            height: h,
            width: w,
            values,
            channel: MapChannel::OpticalFlow,
        }
    }

    #[test]
    fn single_pixel_flow_difference() {
        let o = Tensor::<f64>::zeros(3, 2, 2);
        let mut p = o.clone();
        p.set(0, 1, 0, 0.1);
        p.set(1, 1, 0, -0.2);
        p.set(2, 1, 0, 0.3);
        let d = flow_difference(&o, &p).unwrap();
        assert!((d.values[2] - 0.6).abs() < 1e-12);
        assert_eq!(d.values.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn semantic_mean_over_channels() {
        let a = FeatureMap {
            values: Tensor::<f64>::zeros(2, 1, 1),
            extractor: "x".into(),
        };
        let b = FeatureMap {
            values: Tensor::from_vec(2, 1, 1, vec![1.0, -3.0]).unwrap(),
            extractor: "x".into(),
        };
        assert_eq!(semantic_difference(&a, &b).unwrap().values, vec![2.0]);
        let c = FeatureMap {
            extractor: "y".into(),
            ..b
        };
        assert!(matches!(semantic_difference(&a, &c), Err(Error::Config(_))));
    }

    #[test]
    fn upsample_keeps_corners_and_rejects_shrinking() {
        let m = dm(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let u = upsample_map(&m, 4, 4).unwrap();
        assert_eq!(
            [u.values[0], u.values[3], u.values[12], u.values[15]],
            [0.0, 1.0, 1.0, 0.0]
        );
        assert!(matches!(upsample_map(&m, 1, 4), Err(Error::Config(_))));
    }

    #[test]
    fn normalisation_and_fusion_arithmetic() {
        let (n, m) = normalize_per_video(&[dm(1, 2, vec![1.0, 4.0]), dm(1, 2, vec![2.0, 0.0])]).unwrap();
        assert_eq!(m, 4.0);
        assert_eq!(n[0].values, vec![0.25, 1.0]);
        let (z, m0) = normalize_per_video(&[dm(1, 1, vec![0.0])]).unwrap();
        assert_eq!((z[0].values[0], m0), (0.0, 0.0));
        assert!(normalize_per_video::<f64>(&[]).is_err());
        let a = fuse(&dm(1, 1, vec![0.5]), &dm(1, 1, vec![0.25]), 2.0).unwrap();
        assert_eq!(a, vec![1.0]);
        assert!(fuse(&dm(1, 1, vec![0.5]), &dm(1, 2, vec![0.0, 0.0]), 2.0).is_err());
    }

    #[test]
    fn amp_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.amp");
        write_amp(&p, 2, 3, &[0.0f32, 1.0, 2.0, 3.0, 4.0, 5.5]).unwrap();
        assert_eq!(read_amp(&p).unwrap(), (2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.5]));
    }
}
