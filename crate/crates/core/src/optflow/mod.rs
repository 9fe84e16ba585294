//! Dense optical flow: estimation, the three-channel flow image, and the
//! `FLO1` binary container.

mod cache;
mod encode;
mod estimate;
mod flo;

pub use cache::FlowStore;
pub use encode::{decode_flow, encode_flow, FlowImage, FlowRange};
pub use estimate::{estimate_flow, estimate_flow_gray, FlowConfig};
pub use flo::{load_precomputed_flow, read_flow, write_flow, FLOW_MAGIC};

use crate::error::{shape_err, Result};
use crate::imageops::{resize_plane, Sampling};
use crate::scalar::Scalar;

/// Per-pixel displacement in pixels/frame, row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    pub height: usize,
    pub width: usize,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField {
            height,
            width,
            u: vec![T::zero(); height * width],
            v: vec![T::zero(); height * width],
        }
    }

    pub fn new(height: usize, width: usize, u: Vec<T>, v: Vec<T>) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(shape_err!(
                "flow planes of {} and {} values do not match {height}x{width}",
                u.len(),
                v.len()
            ));
        }
        Ok(FlowField { height, width, u, v })
    }

    pub fn constant(height: usize, width: usize, u: T, v: T) -> Self {
        FlowField {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn magnitude(&self) -> Vec<T> {
        self.u.iter().zip(&self.v).map(|(&a, &b)| a.hypot(b)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Bilinear resize; displacements are rescaled into target-pixel units.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let sx = T::lit(width as f64 / self.width as f64);
        let sy = T::lit(height as f64 / self.height as f64);
        let u = resize_plane(&self.u, self.height, self.width, height, width, Sampling::HalfPixel);
        let v = resize_plane(&self.v, self.height, self.width, height, width, Sampling::HalfPixel);
        FlowField {
            height,
            width,
            u: u.into_iter().map(|x| x * sx).collect(),
            v: v.into_iter().map(|y| y * sy).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        let c = |x: &T| U::lit(x.to_f64_lossy());
        FlowField {
            height: self.height,
            width: self.width,
            u: self.u.iter().map(c).collect(),
            v: self.v.iter().map(c).collect(),
        }
    }

    /// Mean endpoint error against `other`, skipping `margin` border pixels.
    pub fn mean_endpoint_error(&self, other: &Self, margin: usize) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let i = y * self.width + x;
                let du = (self.u[i] - other.u[i]).to_f64_lossy();
                let dv = (self.v[i] - other.v[i]).to_f64_lossy();
                acc += du.hypot(dv);
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            acc / n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_rescales_displacements() {
        let f = FlowField::<f64>::constant(10, 20, 2.0, -1.0);
        let r = f.resized(5, 40);
        assert!(r.u.iter().all(|&u| (u - 4.0).abs() < 1e-12));
        assert!(r.v.iter().all(|&v| (v + 0.5).abs() < 1e-12));
    }
}
