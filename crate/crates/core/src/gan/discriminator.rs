use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::two_mut;
use super::{INIT_STD, LEAKY_SLOPE};
use crate::error::{config_err, shape_err, Result};
use crate::nn::{
    leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, Conv2d, ConvCache, Grads, InstanceNorm, NormCache,
    Parameterized,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Patch discriminator geometry: `strided_layers` 4×4 stride-2 convolutions,
/// then two 4×4 stride-1 convolutions. Three strided layers give the classic
/// 70×70 receptive field and a 30×30 grid at 256×256 input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorTopology {
    pub resolution: usize,
    pub base_channels: usize,
    pub strided_layers: usize,
}

impl DiscriminatorTopology {
    pub fn new(resolution: usize, base_channels: usize, strided_layers: usize) -> Result<Self> {
        let t = DiscriminatorTopology {
            resolution,
            base_channels,
            strided_layers,
        };
        if strided_layers == 0 || base_channels == 0 {
            return Err(config_err!(
                "discriminator needs at least one strided layer and one channel"
            ));
        }
        if t.grid_side().is_none() {
            return Err(config_err!(
                "resolution {resolution} too small for {strided_layers} strided discriminator layers"
            ));
        }
        Ok(t)
    }

    /// Default topology: three strided layers when the resolution allows it.
    pub fn for_resolution(resolution: usize, base_channels: usize) -> Result<Self> {
        let mut layers = 3;
        while layers > 1 && (resolution >> layers) < 3 {
            layers -= 1;
        }
        Self::new(resolution, base_channels, layers)
    }

    fn channels(&self, i: usize) -> usize {
        self.base_channels << i.min(3)
    }

    /// Side of the square output probability grid.
    pub fn grid_side(&self) -> Option<usize> {
        let mut side = self.resolution;
        for _ in 0..self.strided_layers {
            side = (side + 2).checked_sub(4)? / 2 + 1;
        }
        for _ in 0..2 {
            side = (side + 2).checked_sub(4)? + 1;
            if side == 0 {
                return None;
            }
        }
        Some(side)
    }

    /// Receptive field of one output patch, in input pixels.
    pub fn receptive_field(&self) -> usize {
        let mut rf = 1;
        for _ in 0..2 {
            rf += 3;
        }
        for _ in 0..self.strided_layers {
            rf = (rf - 1) * 2 + 4;
        }
        rf
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub topology: DiscriminatorTopology,
    convs: Vec<Conv2d<T>>,
    norms: Vec<Option<InstanceNorm<T>>>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<T> {
    conv: Vec<ConvCache<T>>,
    norm: Vec<Option<NormCache<T>>>,
    /// Pre-activation output of every hidden layer.
    hidden: Vec<Tensor<T>>,
    probs: Tensor<T>,
    cond_channels: usize,
}

impl<T> DiscriminatorCache<T> {
    pub fn probabilities(&self) -> &Tensor<T> {
        &self.probs
    }
}

impl<T: Scalar> Discriminator<T> {
    /// The final layer starts at zero, so an untrained discriminator outputs
    /// exactly 0.5 on every patch.
    pub fn new(topology: DiscriminatorTopology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = topology.strided_layers;
        let mut convs = Vec::with_capacity(n + 2);
        let mut norms = Vec::with_capacity(n + 2);
        for i in 0..n {
            let cin = if i == 0 { 6 } else { topology.channels(i - 1) };
            convs.push(Conv2d::new(&mut rng, cin, topology.channels(i), 4, 2, 1, INIT_STD));
            norms.push((i > 0).then(|| InstanceNorm::new(topology.channels(i))));
        }
        convs.push(Conv2d::new(
            &mut rng,
            topology.channels(n - 1),
            topology.channels(n),
            4,
            1,
            1,
            INIT_STD,
        ));
        norms.push(Some(InstanceNorm::new(topology.channels(n))));
        convs.push(Conv2d::zeroed(topology.channels(n), 1, 4, 1, 1));
        norms.push(None);
        Discriminator { topology, convs, norms }
    }

    /// Patch probabilities that `(x, candidate)` is a real pair.
    pub fn forward(&self, x: &Tensor<T>, candidate: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x, candidate)?.probs)
    }

    pub fn forward_train(&self, x: &Tensor<T>, candidate: &Tensor<T>) -> Result<DiscriminatorCache<T>> {
        if x.dims() != candidate.dims() {
            return Err(shape_err!(
                "discriminator inputs differ: {:?} vs {:?}",
                x.dims(),
                candidate.dims()
            ));
        }
        let r = self.topology.resolution;
        if x.dims() != (3, r, r) {
            return Err(shape_err!("discriminator configured for 3x{r}x{r}, got {:?}", x.dims()));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut h = x.concat_channels(candidate)?;
        let last = self.convs.len() - 1;
        let mut conv = Vec::with_capacity(self.convs.len());
        let mut norm = Vec::with_capacity(self.convs.len());
        let mut hidden = Vec::with_capacity(last);
        for (i, layer) in self.convs.iter().enumerate() {
            let (mut y, cc) = layer.forward(&h)?;
            conv.push(cc);
            let nc = match &self.norms[i] {
                Some(n) => {
                    let (z, c) = n.forward(&y)?;
                    y = z;
                    Some(c)
                }
                None => None,
            };
            norm.push(nc);
            if i < last {
                h = leaky_relu(&y, slope);
                hidden.push(y);
            } else {
                h = y;
            }
        }
        Ok(DiscriminatorCache {
            conv,
            norm,
            hidden,
            probs: sigmoid(&h),
            cond_channels: x.channels(),
        })
    }

    /// Backpropagates a gradient w.r.t. the probability map. Returns the
    /// gradient w.r.t. the candidate image.
    pub fn backward(&self, cache: &DiscriminatorCache<T>, grad: &Tensor<T>, grads: &mut Grads<T>) -> Tensor<T> {
        let slope = T::lit(LEAKY_SLOPE);
        let mut g = sigmoid_backward(&cache.probs, grad);
        let mut idx = grads.0.len();
        for i in (0..self.convs.len()).rev() {
            if i < self.convs.len() - 1 {
                g = leaky_relu_backward(&cache.hidden[i], &g, slope);
            }
            if let (Some(n), Some(nc)) = (&self.norms[i], &cache.norm[i]) {
                idx -= 2;
                let (dg, db) = two_mut(&mut grads.0, idx, idx + 1);
                g = n.backward(nc, &g, dg, db);
            }
            idx -= 2;
            let (dw, db) = two_mut(&mut grads.0, idx, idx + 1);
            g = self.convs[i].backward(&cache.conv[i], &g, dw, db);
        }
        g.split_channels(cache.cond_channels).1
    }
}

impl<T: Scalar> Parameterized<T> for Discriminator<T> {
    fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for (c, n) in self.convs.iter().zip(&self.norms) {
            out.push(&c.weight);
            out.push(&c.bias);
            if let Some(n) = n {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for (c, n) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
            if let Some(n) = n {
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_receptive_field() {
        let t = DiscriminatorTopology::for_resolution(256, 8).unwrap();
        assert_eq!(t.grid_side(), Some(30));
        assert_eq!(t.receptive_field(), 70);
        assert_eq!(
            DiscriminatorTopology::for_resolution(64, 8).unwrap().grid_side(),
            Some(6)
        );
        let toy = DiscriminatorTopology::for_resolution(8, 2).unwrap();
        assert_eq!(toy.strided_layers, 1);
        assert_eq!(toy.grid_side(), Some(2));
    }

    #[test]
    fn untrained_output_is_one_half() {
        let d = Discriminator::<f64>::new(DiscriminatorTopology::for_resolution(32, 4).unwrap(), 4);
        let x = Tensor::from_fn(3, 32, 32, |c, y, x| ((c * y + x) as f64).sin());
        let p = Tensor::from_fn(3, 32, 32, |c, y, x| ((c + y * x) as f64).cos());
        let out = d.forward(&x, &p).unwrap();
        assert_eq!(out.dims(), (1, 2, 2));
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let d = Discriminator::<f32>::new(DiscriminatorTopology::for_resolution(16, 2).unwrap(), 0);
        assert!(d.forward(&Tensor::zeros(3, 16, 16), &Tensor::zeros(3, 8, 8)).is_err());
    }
}
