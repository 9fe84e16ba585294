use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-sample, per-channel normalisation with a learned affine transform.
///
/// With batch size 1 this coincides with batch normalisation in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceNorm<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        InstanceNorm {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>)> {
        if x.channels() != self.channels {
            return Err(shape_err!(
                "instance norm expects {} channels, got {}",
                self.channels,
                x.channels()
            ));
        }
        let n = x.plane_len();
        let nf = T::lit(n as f64);
        let eps = T::lit(self.eps);
        let mut xhat = x.clone();
        let mut y = x.clone();
        let mut inv_std = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let plane = x.plane(c);
            let mean = plane.iter().copied().sum::<T>() / nf;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            let (g, b) = (self.gamma[c], self.beta[c]);
            for ((xh, yv), &v) in xhat.plane_mut(c).iter_mut().zip(y.plane_mut(c).iter_mut()).zip(plane) {
                *xh = (v - mean) * is;
                *yv = g * *xh + b;
            }
        }
        Ok((y, NormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &NormCache<T>, grad: &Tensor<T>, dgamma: &mut [T], dbeta: &mut [T]) -> Tensor<T> {
        let n = grad.plane_len();
        let nf = T::lit(n as f64);
        let mut dx = grad.clone();
        for c in 0..self.channels {
            let g = grad.plane(c);
            let xh = cache.xhat.plane(c);
            let sum_g: T = g.iter().copied().sum();
            let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            dgamma[c] += sum_gx;
            dbeta[c] += sum_g;
            let scale = self.gamma[c] * cache.inv_std[c] / nf;
            for ((d, &gv), &xv) in dx.plane_mut(c).iter_mut().zip(g).zip(xh) {
                *d = scale * (nf * gv - sum_g - xv * sum_gx);
            }
        }
        dx
    }
}
