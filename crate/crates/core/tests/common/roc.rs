//! Oracles for ROC, AUC, EER and the pixel-level protocol.

use cgan_anomaly::dataset::{GroundTruth, Mask};
use cgan_anomaly::detector::AbnormalityMap;
use cgan_anomaly::evaluation::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = rng.gen_range(2..=64);
        // coarse scores so ties are common
        let levels = rng.gen_range(2..20);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            return (scores, labels);
        }
    }
}

pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Point on the piecewise-linear curve at parameter `s ∈ [0, n-1]`.
pub fn along(curve: &RocCurve, s: f64) -> (f64, f64) {
    let i = (s.floor() as usize).min(curve.points.len() - 2);
    let f = s - i as f64;
    let (a, b) = (curve.points[i], curve.points[i + 1]);
    (a.fpr + f * (b.fpr - a.fpr), a.tpr + f * (b.tpr - a.tpr))
}

pub fn bisection_eer(curve: &RocCurve) -> f64 {
    let g = |s: f64| {
        let (fpr, tpr) = along(curve, s);
        fpr + tpr - 1.0
    };
    let (mut lo, mut hi) = (0.0, (curve.points.len() - 1) as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    along(curve, hi).0
}

/// Midpoint integration on a grid that contains every FPR breakpoint `k/neg`.
pub fn dense_auc(curve: &RocCurve, neg: usize) -> f64 {
    let per_cell = 64;
    let n = neg * per_cell;
    let dx = 1.0 / n as f64;
    let mut area = 0.0;
    for k in 0..n {
        let x = (k as f64 + 0.5) * dx;
        let left = curve.points.iter().rev().find(|p| p.fpr <= x).unwrap();
        let right = curve.points.iter().find(|p| p.fpr > x).unwrap();
        let t = (x - left.fpr) / (right.fpr - left.fpr);
        area += (left.tpr + t * (right.tpr - left.tpr)) * dx;
    }
    area
}

pub fn map(side: usize, values: Vec<f64>) -> AbnormalityMap<f64> {
    AbnormalityMap {
        height: side,
        width: side,
        values,
        frame_index: 0,
        lambda: 2.0,
    }
}

pub struct Instance {
    pub maps: Vec<AbnormalityMap<f64>>,
    pub gt: GroundTruth,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let side = 16;
    loop {
        let frames = rng.gen_range(4..12);
        let mut maps = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..frames {
            let levels = rng.gen_range(3..30);
            maps.push(map(
                side,
                (0..side * side)
                    .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
                    .collect(),
            ));
            let mut m = Mask::empty(side, side);
            if rng.gen_bool(0.5) {
                let (y0, x0) = (rng.gen_range(0..12), rng.gen_range(0..12));
                let (h, w) = (rng.gen_range(1..5), rng.gen_range(1..5));
                for y in y0..y0 + h {
                    for x in x0..x0 + w {
                        m.data[y * side + x] = true;
                    }
                }
                // bias the map upwards inside the mask
                let last = maps.last_mut().unwrap();
                for (v, &inside) in last.values.iter_mut().zip(&m.data) {
                    if inside && rng.gen_bool(0.5) {
                        *v += 0.5;
                    }
                }
            }
            masks.push(m);
        }
        let gt = GroundTruth::from_masks(masks);
        if gt.frame_labels.iter().any(|&l| l) && gt.frame_labels.iter().any(|&l| !l) {
            return Instance { maps, gt };
        }
    }
}

/// Per-pixel counting at threshold `tau`: `(fp, tp, normal, abnormal)`.
pub fn brute_force_counts(inst: &Instance, tau: f64, missed_is_fp: bool) -> (usize, usize, usize, usize) {
    let masks = inst.gt.pixel_masks.as_ref().unwrap();
    let (mut fp, mut tp, mut neg, mut pos) = (0, 0, 0, 0);
    for (m, mask) in inst.maps.iter().zip(masks) {
        let predicted: Vec<bool> = m.values.iter().map(|&v| v >= tau).collect();
        let any = predicted.iter().any(|&p| p);
        let gt = mask.count();
        if gt == 0 {
            neg += 1;
            fp += any as usize;
            continue;
        }
        pos += 1;
        let hit = predicted.iter().zip(&mask.data).filter(|(&p, &g)| p && g).count();
        // |P ∩ GT| ≥ 0.4 |GT| in integers
        if 5 * hit >= 2 * gt {
            tp += 1;
        } else if missed_is_fp && any {
            fp += 1;
        }
    }
    (fp, tp, neg, pos)
}

pub fn brute_force_curve(inst: &Instance, missed_is_fp: bool) -> Vec<(f64, f64)> {
    let mut taus: Vec<f64> = inst.maps.iter().flat_map(|m| m.values.clone()).collect();
    taus.push(f64::INFINITY);
    taus.push(f64::NEG_INFINITY);
    let mut pts: Vec<(f64, f64)> = taus
        .into_iter()
        .map(|t| {
            let (fp, tp, neg, pos) = brute_force_counts(inst, t, missed_is_fp);
            ((fp as f64 / neg as f64).min(1.0), tp as f64 / pos as f64)
        })
        .collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    pts
}

pub fn coverage_case(mask_pixels: usize, covered: usize) -> f64 {
    let side = 40;
    let mut mask = Mask::empty(side, side);
    let mut values = vec![0.0; side * side];
    for i in 0..mask_pixels {
        mask.data[i] = true;
        if i < covered {
            values[i] = 1.0;
        }
    }
    let gt = GroundTruth::from_masks(vec![mask, Mask::empty(side, side)]);
    let maps = vec![map(side, values), map(side, vec![0.0; side * side])];
    let protocol = PixelProtocol::default();
    let frames = pixel_frames(&maps, &gt, &protocol).unwrap();
    pixel_rates_at(&frames, 1.0, &protocol).1
}

/// AUC against Mann–Whitney and dense integration, EER against bisection.
pub fn check_auc_eer(seed: u64, cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let (scores, labels) = random_case(&mut rng);
        let curve = frame_level_roc(&scores, &labels).unwrap();
        let a = auc(&curve);
        assert!((a - mann_whitney(&scores, &labels)).abs() <= 1e-9);
        let neg = labels.iter().filter(|&&l| !l).count();
        assert!((a - dense_auc(&curve, neg)).abs() <= 1e-9);
        assert!((eer(&curve) - bisection_eer(&curve)).abs() <= 1e-6);
    }
}

/// Pixel-level rates and curve against per-pixel counting, both conventions.
pub fn check_pixel_curve(seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        for missed_is_fp in [true, false] {
            let protocol = PixelProtocol {
                missed_detection_is_false_positive: missed_is_fp,
                ..Default::default()
            };
            let frames = pixel_frames(&inst.maps, &inst.gt, &protocol).unwrap();
            for _ in 0..50 {
                let tau = rng.gen_range(-0.1..1.6);
                let (fp, tp, neg, pos) = brute_force_counts(&inst, tau, missed_is_fp);
                let expected = ((fp as f64 / neg as f64).min(1.0), tp as f64 / pos as f64);
                assert_eq!(pixel_rates_at(&frames, tau, &protocol), expected);
            }
            let curve = pixel_level_roc(&frames, &protocol).unwrap();
            let mut got: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
            got.dedup();
            assert_eq!(got, brute_force_curve(&inst, missed_is_fp));
        }
    }
}
