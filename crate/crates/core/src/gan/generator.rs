use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Direction, NoiseSource, INIT_STD, LEAKY_SLOPE};
use crate::error::{config_err, shape_err, Result};
use crate::nn::{
    dropout_mask, leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward, Conv2d, ConvCache,
    ConvTranspose2d, ConvTransposeCache, Grads, InstanceNorm, NormCache, Parameterized,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// U-net geometry. The encoder halves the resolution `stages` times with
/// 4×4 stride-2 convolutions, `stages = log2(resolution) - 2`, so the
/// bottleneck is always 4×4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTopology {
    pub resolution: usize,
    pub base_channels: usize,
    pub stages: usize,
    pub dropout_rate: f64,
    /// Number of innermost decoder blocks followed by dropout.
    pub dropout_layers: usize,
}

impl GeneratorTopology {
    pub fn for_resolution(resolution: usize, base_channels: usize) -> Result<Self> {
        if resolution < 8 || !resolution.is_power_of_two() {
            return Err(config_err!(
                "generator resolution must be a power of two >= 8, got {resolution}"
            ));
        }
        if base_channels == 0 {
            return Err(config_err!("generator base channel count must be positive"));
        }
        Ok(GeneratorTopology {
            resolution,
            base_channels,
            stages: resolution.trailing_zeros() as usize - 2,
            dropout_rate: 0.5,
            dropout_layers: 3,
        })
    }

    /// Channels produced by encoder stage `i`.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels << i.min(3)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub topology: GeneratorTopology,
    pub direction: Direction,
    down: Vec<Conv2d<T>>,
    down_norm: Vec<Option<InstanceNorm<T>>>,
    up: Vec<ConvTranspose2d<T>>,
    up_norm: Vec<Option<InstanceNorm<T>>>,
}

/// Activations retained by a training forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorCache<T> {
    down_conv: Vec<ConvCache<T>>,
    down_norm: Vec<Option<NormCache<T>>>,
    encoded: Vec<Tensor<T>>,
    up_input: Vec<Tensor<T>>,
    up_conv: Vec<ConvTransposeCache<T>>,
    up_norm: Vec<Option<NormCache<T>>>,
    masks: Vec<Option<Vec<T>>>,
    output: Tensor<T>,
}

impl<T> GeneratorCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Generator<T> {
    pub fn new(topology: GeneratorTopology, direction: Direction, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = topology.stages;
        let ch = |i| topology.channels(i);
        let mut down = Vec::with_capacity(n);
        let mut down_norm = Vec::with_capacity(n);
        for i in 0..n {
            let cin = if i == 0 { 3 } else { ch(i - 1) };
            down.push(Conv2d::new(&mut rng, cin, ch(i), 4, 2, 1, INIT_STD));
            down_norm.push((i > 0).then(|| InstanceNorm::new(ch(i))));
        }
        let mut up = Vec::with_capacity(n);
        let mut up_norm = Vec::with_capacity(n);
        for j in 0..n {
            let cin = if j == 0 { ch(n - 1) } else { 2 * ch(n - 1 - j) };
            let last = j == n - 1;
            let cout = if last { 3 } else { ch(n - 2 - j) };
            up.push(ConvTranspose2d::new(&mut rng, cin, cout, 4, 2, 1, INIT_STD));
            up_norm.push((!last).then(|| InstanceNorm::new(cout)));
        }
        Generator {
            topology,
            direction,
            down,
            down_norm,
            up,
            up_norm,
        }
    }

    fn dropout_at(&self, j: usize) -> bool {
        j + 1 < self.topology.stages && j < self.topology.dropout_layers && self.topology.dropout_rate > 0.0
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let r = self.topology.resolution;
        if x.dims() != (3, r, r) {
            return Err(shape_err!("generator configured for 3x{r}x{r}, got {:?}", x.dims()));
        }
        Ok(())
    }

    /// Inference pass: `p = G(x, z)`.
    pub fn forward(&self, x: &Tensor<T>, noise: NoiseSource) -> Result<Tensor<T>> {
        Ok(self.forward_train(x, noise)?.output)
    }

    /// Forward pass that keeps everything needed by [`Generator::backward`].
    pub fn forward_train(&self, x: &Tensor<T>, noise: NoiseSource) -> Result<GeneratorCache<T>> {
        self.check_input(x)?;
        let n = self.topology.stages;
        let slope = T::lit(LEAKY_SLOPE);
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

        let mut down_conv = Vec::with_capacity(n);
        let mut down_norm = Vec::with_capacity(n);
        let mut encoded: Vec<Tensor<T>> = Vec::with_capacity(n);
        for i in 0..n {
            let input = if i == 0 {
                x.clone()
            } else {
                leaky_relu(&encoded[i - 1], slope)
            };
            let (mut h, cc) = self.down[i].forward(&input)?;
            down_conv.push(cc);
            let nc = match &self.down_norm[i] {
                Some(norm) => {
                    let (y, c) = norm.forward(&h)?;
                    h = y;
                    Some(c)
                }
                None => None,
            };
            down_norm.push(nc);
            encoded.push(h);
        }

        let mut up_input = Vec::with_capacity(n);
        let mut up_conv = Vec::with_capacity(n);
        let mut up_norm = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut carry = encoded[n - 1].clone();
        for j in 0..n {
            let (mut h, cc) = self.up[j].forward(&relu(&carry))?;
            up_conv.push(cc);
            up_input.push(carry);
            let nc = match &self.up_norm[j] {
                Some(norm) => {
                    let (y, c) = norm.forward(&h)?;
                    h = y;
                    Some(c)
                }
                None => None,
            };
            up_norm.push(nc);
            let mask = if noise.dropout && self.dropout_at(j) {
                let m = dropout_mask::<T, _>(&mut rng, h.data().len(), self.topology.dropout_rate);
                h.data_mut().iter_mut().zip(&m).for_each(|(v, &k)| *v *= k);
                Some(m)
            } else {
                None
            };
            masks.push(mask);
            carry = if j + 1 < n {
                h.concat_channels(&encoded[n - 2 - j])?
            } else {
                h
            };
        }
        let output = tanh(&carry);
        Ok(GeneratorCache {
            down_conv,
            down_norm,
            encoded,
            up_input,
            up_conv,
            up_norm,
            masks,
            output,
        })
    }

    /// Backpropagates `grad` (w.r.t. the output image). Parameter gradients are
    /// accumulated into `grads`; the input gradient is returned.
    pub fn backward(&self, cache: &GeneratorCache<T>, grad: &Tensor<T>, grads: &mut Grads<T>) -> Tensor<T> {
        let n = self.topology.stages;
        let slope = T::lit(LEAKY_SLOPE);
        let layout = self.layout();
        let mut g = tanh_backward(&cache.output, grad);
        let mut grad_enc: Vec<Option<Tensor<T>>> = vec![None; n];
        let add_enc = |slot: &mut Option<Tensor<T>>, t: Tensor<T>| {
            *slot = Some(match slot.take() {
                Some(prev) => prev.zip_map(&t, |a, b| a + b).expect("same dims"),
                None => t,
            });
        };

        for j in (0..n).rev() {
            if let Some(mask) = &cache.masks[j] {
                g.data_mut().iter_mut().zip(mask).for_each(|(v, &k)| *v *= k);
            }
            let (wi, bi, norm_idx) = layout.up[j];
            if let (Some(norm), Some(nc), Some((gi, bei))) = (&self.up_norm[j], &cache.up_norm[j], norm_idx) {
                let (dg, db) = two_mut(&mut grads.0, gi, bei);
                g = norm.backward(nc, &g, dg, db);
            }
            let (dw, db) = two_mut(&mut grads.0, wi, bi);
            let g_relu = self.up[j].backward(&cache.up_conv[j], &g, dw, db);
            let g_in = relu_backward(&cache.up_input[j], &g_relu);
            if j == 0 {
                add_enc(&mut grad_enc[n - 1], g_in);
            } else {
                let prev_ch = self.up[j - 1].out_channels;
                let (g_prev, g_skip) = g_in.split_channels(prev_ch);
                add_enc(&mut grad_enc[n - 1 - j], g_skip);
                g = g_prev;
            }
        }

        let mut grad_x = None;
        for i in (0..n).rev() {
            let mut g = grad_enc[i].take().expect("every encoder output receives gradient");
            let (wi, bi, norm_idx) = layout.down[i];
            if let (Some(norm), Some(nc), Some((gi, bei))) = (&self.down_norm[i], &cache.down_norm[i], norm_idx) {
                let (dg, db) = two_mut(&mut grads.0, gi, bei);
                g = norm.backward(nc, &g, dg, db);
            }
            let (dw, db) = two_mut(&mut grads.0, wi, bi);
            let g_in = self.down[i].backward(&cache.down_conv[i], &g, dw, db);
            if i == 0 {
                grad_x = Some(g_in);
            } else {
                add_enc(
                    &mut grad_enc[i - 1],
                    leaky_relu_backward(&cache.encoded[i - 1], &g_in, slope),
                );
            }
        }
        grad_x.expect("at least one stage")
    }

    fn layout(&self) -> ParamLayout {
        let mut idx = 0;
        let mut take = |norm: bool| {
            let w = idx;
            let b = idx + 1;
            idx += 2;
            let nrm = norm.then(|| {
                idx += 2;
                (idx - 2, idx - 1)
            });
            (w, b, nrm)
        };
        let down = self.down_norm.iter().map(|n| take(n.is_some())).collect();
        let up = self.up_norm.iter().map(|n| take(n.is_some())).collect();
        ParamLayout { down, up }
    }

    /// Names of the parameter blocks, aligned with [`Parameterized::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, norms) in [("down", &self.down_norm), ("up", &self.up_norm)] {
            for (i, n) in norms.iter().enumerate() {
                names.push(format!("{prefix}.{i}.weight"));
                names.push(format!("{prefix}.{i}.bias"));
                if n.is_some() {
                    names.push(format!("{prefix}.{i}.norm.gamma"));
                    names.push(format!("{prefix}.{i}.norm.beta"));
                }
            }
        }
        names
    }
}

/// Block indices of one layer: weight, bias, optional (gamma, beta).
type LayerSlots = (usize, usize, Option<(usize, usize)>);

struct ParamLayout {
    down: Vec<LayerSlots>,
    up: Vec<LayerSlots>,
}

/// Two disjoint mutable borrows out of the gradient list (`a < b`).
pub(crate) fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

impl<T: Scalar> Parameterized<T> for Generator<T> {
    fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for (c, n) in self.down.iter().zip(&self.down_norm) {
            out.push(&c.weight);
            out.push(&c.bias);
            if let Some(n) = n {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        for (c, n) in self.up.iter().zip(&self.up_norm) {
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
        for (c, n) in self.down.iter_mut().zip(self.down_norm.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
            if let Some(n) = n {
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        for (c, n) in self.up.iter_mut().zip(self.up_norm.iter_mut()) {
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

    fn input(r: usize) -> Tensor<f32> {
        Tensor::from_fn(3, r, r, |c, y, x| (((c + 1) * (y + 3) * (x + 7)) as f32 * 0.01).sin())
    }

    #[test]
    fn output_matches_input_shape() {
        for r in [8, 16, 32, 64] {
            let topo = GeneratorTopology::for_resolution(r, 4).unwrap();
            let g = Generator::<f32>::new(topo, Direction::FrameToFlow, 1);
            let y = g.forward(&input(r), NoiseSource::seeded(3)).unwrap();
            assert_eq!(y.dims(), (3, r, r));
            assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn stage_count_scales_with_resolution() {
        assert_eq!(GeneratorTopology::for_resolution(256, 8).unwrap().stages, 6);
        assert_eq!(GeneratorTopology::for_resolution(64, 8).unwrap().stages, 4);
        assert!(GeneratorTopology::for_resolution(48, 8).is_err());
        assert!(GeneratorTopology::for_resolution(4, 8).is_err());
    }

    #[test]
    fn resolution_mismatch_is_shape_error() {
        let g = Generator::<f32>::new(
            GeneratorTopology::for_resolution(16, 2).unwrap(),
            Direction::FlowToFrame,
            0,
        );
        assert!(matches!(
            g.forward(&input(8), NoiseSource::off()),
            Err(crate::Error::Shape(_))
        ));
    }

    #[test]
    fn dropout_depends_only_on_seed() {
        let g = Generator::<f32>::new(
            GeneratorTopology::for_resolution(32, 4).unwrap(),
            Direction::FrameToFlow,
            5,
        );
        let x = input(32);
        let a = g.forward(&x, NoiseSource::seeded(9)).unwrap();
        let b = g.forward(&x, NoiseSource::seeded(9)).unwrap();
        let c = g.forward(&x, NoiseSource::seeded(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let d = g.forward(&x, NoiseSource::off()).unwrap();
        assert_eq!(d, g.forward(&x, NoiseSource::off()).unwrap());
    }

    #[test]
    fn names_align_with_params() {
        let g = Generator::<f32>::new(
            GeneratorTopology::for_resolution(16, 2).unwrap(),
            Direction::FrameToFlow,
            0,
        );
        assert_eq!(g.param_names().len(), g.params().len());
    }
}
