//! Coarse-to-fine variational flow with warping and Charbonnier penalties on
//! both the brightness-constancy and the smoothness term, solved per warp by
//! lagged-nonlinearity fixed-point iterations and SOR.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FlowField;
use crate::dataset::Frame;
use crate::error::{config_err, shape_err, Result};
use crate::imageops::{gaussian_blur, resize_plane, sample_clamped, Sampling};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Pyramid levels (capped so that the coarsest side stays >= 8 pixels).
    pub levels: usize,
    /// Smoothness weight (intensities are in [0, 255]).
    pub alpha: f64,
    pub warps: usize,
    pub fixed_point_iterations: usize,
    pub sor_iterations: usize,
    pub sor_omega: f64,
    /// Charbonnier epsilon.
    pub epsilon: f64,
    /// Gaussian pre-smoothing applied at every level.
    pub presmooth_sigma: f64,
    /// Width of the border band forced to zero flow.
    pub border: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            levels: 4,
            alpha: 12.0,
            warps: 5,
            fixed_point_iterations: 3,
            sor_iterations: 15,
            sor_omega: 1.8,
            epsilon: 1e-2,
            presmooth_sigma: 0.8,
            border: 2,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.warps == 0 || self.fixed_point_iterations == 0 || self.sor_iterations == 0 {
            return Err(config_err!("flow iteration counts must be positive"));
        }
        if !(self.alpha > 0.0) || !(0.0 < self.sor_omega && self.sor_omega < 2.0) || !(self.epsilon > 0.0) {
            return Err(config_err!("invalid flow regularisation parameters"));
        }
        Ok(())
    }

    /// Stable short hash used to key flow caches.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

/// Dense flow from frame `a` to frame `b`.
pub fn estimate_flow<T: Scalar>(a: &Frame, b: &Frame, cfg: &FlowConfig) -> Result<FlowField<T>> {
    if a.dims() != b.dims() {
        return Err(shape_err!(
            "flow needs equally sized frames, got {:?} and {:?}",
            a.dims(),
            b.dims()
        ));
    }
    let (h, w) = a.dims();
    estimate_flow_gray(&a.gray::<T>(), &b.gray::<T>(), h, w, cfg)
}

/// Dense flow between two luminance planes in `[0, 255]`.
pub fn estimate_flow_gray<T: Scalar>(a: &[T], b: &[T], h: usize, w: usize, cfg: &FlowConfig) -> Result<FlowField<T>> {
    cfg.validate()?;
    if a.len() != h * w || b.len() != h * w {
        return Err(shape_err!("luminance planes do not match {h}x{w}"));
    }
    if a == b {
        return Ok(FlowField::zeros(h, w));
    }
    // pyramid, finest first
    let mut pyr: Vec<(Vec<T>, Vec<T>, usize, usize)> = vec![(
        gaussian_blur(a, h, w, cfg.presmooth_sigma),
        gaussian_blur(b, h, w, cfg.presmooth_sigma),
        h,
        w,
    )];
    while pyr.len() < cfg.levels {
        let (pa, pb, ph, pw) = pyr.last().expect("nonempty");
        let (nh, nw) = (ph.div_ceil(2), pw.div_ceil(2));
        if nh < 8 || nw < 8 {
            break;
        }
        let da = resize_plane(&gaussian_blur(pa, *ph, *pw, 0.7), *ph, *pw, nh, nw, Sampling::HalfPixel);
        let db = resize_plane(&gaussian_blur(pb, *ph, *pw, 0.7), *ph, *pw, nh, nw, Sampling::HalfPixel);
        pyr.push((da, db, nh, nw));
    }

    let (_, _, ch, cw) = pyr.last().expect("nonempty");
    let mut flow = FlowField::<T>::zeros(*ch, *cw);
    for (i1, i2, lh, lw) in pyr.iter().rev() {
        if (flow.height, flow.width) != (*lh, *lw) {
            flow = flow.resized(*lh, *lw);
        }
        refine_level(i1, i2, *lh, *lw, &mut flow, cfg);
    }
    zero_border(&mut flow, cfg.border);
    Ok(flow)
}

fn zero_border<T: Scalar>(f: &mut FlowField<T>, border: usize) {
    for y in 0..f.height {
        for x in 0..f.width {
            if y < border || x < border || y + border >= f.height || x + border >= f.width {
                f.u[y * f.width + x] = T::zero();
                f.v[y * f.width + x] = T::zero();
            }
        }
    }
}

/// Five-point central derivative along x and y with clamped borders.
fn gradients<T: Scalar>(img: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
    let k = [
        T::lit(1.0 / 12.0),
        T::lit(-8.0 / 12.0),
        T::lit(8.0 / 12.0),
        T::lit(-1.0 / 12.0),
    ];
    let at = |y: isize, x: isize| img[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut gx = vec![T::zero(); h * w];
    let mut gy = vec![T::zero(); h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = k[0] * at(y, x - 2) + k[1] * at(y, x - 1) + k[2] * at(y, x + 1) + k[3] * at(y, x + 2);
            gy[i] = k[0] * at(y - 2, x) + k[1] * at(y - 1, x) + k[2] * at(y + 1, x) + k[3] * at(y + 2, x);
        }
    }
    (gx, gy)
}

fn refine_level<T: Scalar>(i1: &[T], i2: &[T], h: usize, w: usize, flow: &mut FlowField<T>, cfg: &FlowConfig) {
    let n = h * w;
    let alpha = T::lit(cfg.alpha);
    let eps2 = T::lit(cfg.epsilon * cfg.epsilon);
    let half = T::lit(0.5);
    let omega = T::lit(cfg.sor_omega);
    let (g1x, g1y) = gradients(i1, h, w);

    for _ in 0..cfg.warps {
        let mut warped = vec![T::zero(); n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                warped[i] = sample_clamped(i2, h, w, T::lit(y as f64) + flow.v[i], T::lit(x as f64) + flow.u[i]);
            }
        }
        let (g2x, g2y) = gradients(&warped, h, w);
        let ix: Vec<T> = g1x.iter().zip(&g2x).map(|(&a, &b)| (a + b) * half).collect();
        let iy: Vec<T> = g1y.iter().zip(&g2y).map(|(&a, &b)| (a + b) * half).collect();
        let it: Vec<T> = warped.iter().zip(i1).map(|(&a, &b)| a - b).collect();

        let mut du = vec![T::zero(); n];
        let mut dv = vec![T::zero(); n];
        let mut psi_d = vec![T::zero(); n];
        let mut psi_s = vec![T::zero(); n];
        for _ in 0..cfg.fixed_point_iterations {
            for i in 0..n {
                let r = it[i] + ix[i] * du[i] + iy[i] * dv[i];
                psi_d[i] = half / (r * r + eps2).sqrt();
            }
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let uu = |j: usize| flow.u[j] + du[j];
                    let vv = |j: usize| flow.v[j] + dv[j];
                    let (ux, vx) = if x + 1 < w {
                        (uu(i + 1) - uu(i), vv(i + 1) - vv(i))
                    } else {
                        (T::zero(), T::zero())
                    };
                    let (uy, vy) = if y + 1 < h {
                        (uu(i + w) - uu(i), vv(i + w) - vv(i))
                    } else {
                        (T::zero(), T::zero())
                    };
                    psi_s[i] = half / (ux * ux + uy * uy + vx * vx + vy * vy + eps2).sqrt();
                }
            }
            for _ in 0..cfg.sor_iterations {
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let mut wsum = T::zero();
                        let mut su = T::zero();
                        let mut sv = T::zero();
                        let mut visit = |j: usize| {
                            let wt = (psi_s[i] + psi_s[j]) * half;
                            wsum += wt;
                            su += wt * (flow.u[j] + du[j] - flow.u[i]);
                            sv += wt * (flow.v[j] + dv[j] - flow.v[i]);
                        };
                        if x > 0 {
                            visit(i - 1);
                        }
                        if x + 1 < w {
                            visit(i + 1);
                        }
                        if y > 0 {
                            visit(i - w);
                        }
                        if y + 1 < h {
                            visit(i + w);
                        }
                        let pd = psi_d[i];
                        let den_u = pd * ix[i] * ix[i] + alpha * wsum;
                        let num_u = -pd * ix[i] * (iy[i] * dv[i] + it[i]) + alpha * su;
                        if den_u > T::zero() {
                            du[i] = (T::one() - omega) * du[i] + omega * num_u / den_u;
                        }
                        let den_v = pd * iy[i] * iy[i] + alpha * wsum;
                        let num_v = -pd * iy[i] * (ix[i] * du[i] + it[i]) + alpha * sv;
                        if den_v > T::zero() {
                            dv[i] = (T::one() - omega) * dv[i] + omega * num_v / den_v;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            flow.u[i] += du[i];
            flow.v[i] += dv[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_give_zero_flow() {
        let img: Vec<f32> = (0..32 * 32)
            .map(|i| ((i * 37 % 101) as f32).sin() * 100.0 + 120.0)
            .collect();
        let f = estimate_flow_gray(&img, &img, 32, 32, &FlowConfig::default()).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = FlowConfig::default();
        assert_eq!(a.hash(), FlowConfig::default().hash());
        assert_ne!(
            a.hash(),
            FlowConfig {
                alpha: 3.0,
                ..a.clone()
            }
            .hash()
        );
    }

    #[test]
    fn size_mismatch_is_shape_error() {
        let a = Frame::new("v", 0, 64, 64, vec![0; 64 * 64 * 3]).unwrap();
        let b = Frame::new("v", 1, 32, 32, vec![0; 32 * 32 * 3]).unwrap();
        assert!(matches!(
            estimate_flow::<f32>(&a, &b, &FlowConfig::default()),
            Err(crate::Error::Shape(_))
        ));
    }
}
