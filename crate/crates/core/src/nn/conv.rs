use rand::Rng;

use super::normal_init;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn out_len(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// Unfolds `x` into a `[C·k·k, out_h·out_w]` row-major matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let cols_n = out_h * out_w;
    let mut cols = vec![T::zero(); channels * k * k * cols_n];
    for c in 0..channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back onto a `C×h×w` grid.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let cols_n = out_h * out_w;
    let mut x = vec![T::zero(); channels * h * w];
    for c in 0..channels {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[oy * out_w..(oy + 1) * out_w];
                    for (ox, &s) in src_row.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2-D convolution, weight layout `[out, in, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    in_h: usize,
    in_w: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
    ) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: normal_init(rng, out_channels * in_channels * kernel * kernel, init_std),
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Same layer with all weights and biases at zero.
    pub fn zeroed(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = out_len(h, self.kernel, self.stride, self.pad)?;
        let ow = out_len(w, self.kernel, self.stride, self.pad)?;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (c, h, w) = x.dims();
        if c != self.in_channels {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                c
            ));
        }
        let (oh, ow) = self
            .output_dims(h, w)
            .ok_or_else(|| shape_err!("input {}x{} too small for kernel {}", h, w, self.kernel))?;
        let cols = im2col(x.data(), c, h, w, self.kernel, self.stride, self.pad, oh, ow);
        let kk = c * self.kernel * self.kernel;
        let n = oh * ow;
        let mut out = Vec::with_capacity(self.out_channels * n);
        for &b in &self.bias {
            out.extend(std::iter::repeat_n(b, n));
        }
        T::gemm(
            self.out_channels,
            kk,
            n,
            T::one(),
            &self.weight,
            (kk, 1),
            &cols,
            (n, 1),
            T::one(),
            &mut out,
            (n, 1),
        );
        let y = Tensor::from_vec(self.out_channels, oh, ow, out)?;
        Ok((y, ConvCache { cols, in_h: h, in_w: w }))
    }

    /// Accumulates `dweight`/`dbias` and returns the input gradient.
    pub fn backward(&self, cache: &ConvCache<T>, grad: &Tensor<T>, dweight: &mut [T], dbias: &mut [T]) -> Tensor<T> {
        let (_, oh, ow) = grad.dims();
        let n = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        for (o, db) in dbias.iter_mut().enumerate() {
            *db += grad.plane(o).iter().copied().sum::<T>();
        }
        // dW[o, r] += sum_p grad[o, p] * cols[r, p]
        T::gemm(
            self.out_channels,
            n,
            kk,
            T::one(),
            grad.data(),
            (n, 1),
            &cache.cols,
            (1, n),
            T::one(),
            dweight,
            (kk, 1),
        );
        // dcols = W^T grad
        let mut dcols = vec![T::zero(); kk * n];
        T::gemm(
            kk,
            self.out_channels,
            n,
            T::one(),
            &self.weight,
            (1, kk),
            grad.data(),
            (n, 1),
            T::zero(),
            &mut dcols,
            (n, 1),
        );
        let dx = col2im(
            &dcols,
            self.in_channels,
            cache.in_h,
            cache.in_w,
            self.kernel,
            self.stride,
            self.pad,
            oh,
            ow,
        );
        Tensor::from_vec(self.in_channels, cache.in_h, cache.in_w, dx).expect("input geometry")
    }
}

/// Transposed (fractionally strided) convolution, weight layout `[in, out, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct ConvTransposeCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
    ) -> Self {
        ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: normal_init(rng, in_channels * out_channels * kernel * kernel, init_std),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let f = |n: usize| ((n - 1) * self.stride + self.kernel).checked_sub(2 * self.pad);
        if h == 0 || w == 0 {
            return None;
        }
        Some((f(h)?, f(w)?))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvTransposeCache<T>)> {
        let (c, h, w) = x.dims();
        if c != self.in_channels {
            return Err(shape_err!(
                "transposed conv expects {} input channels, got {}",
                self.in_channels,
                c
            ));
        }
        let (oh, ow) = self
            .output_dims(h, w)
            .ok_or_else(|| shape_err!("invalid transposed conv geometry for {}x{}", h, w))?;
        let kk = self.out_channels * self.kernel * self.kernel;
        let n = h * w;
        let mut cols = vec![T::zero(); kk * n];
        T::gemm(
            kk,
            c,
            n,
            T::one(),
            &self.weight,
            (1, kk),
            x.data(),
            (n, 1),
            T::zero(),
            &mut cols,
            (n, 1),
        );
        let mut out = col2im(
            &cols,
            self.out_channels,
            oh,
            ow,
            self.kernel,
            self.stride,
            self.pad,
            h,
            w,
        );
        let plane = oh * ow;
        for (o, &b) in self.bias.iter().enumerate() {
            out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += b);
        }
        let y = Tensor::from_vec(self.out_channels, oh, ow, out)?;
        Ok((y, ConvTransposeCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &ConvTransposeCache<T>,
        grad: &Tensor<T>,
        dweight: &mut [T],
        dbias: &mut [T],
    ) -> Tensor<T> {
        let (_, h, w) = cache.input.dims();
        let (_, oh, ow) = grad.dims();
        let n = h * w;
        let kk = self.out_channels * self.kernel * self.kernel;
        for (o, db) in dbias.iter_mut().enumerate() {
            *db += grad.plane(o).iter().copied().sum::<T>();
        }
        let dcols = im2col(
            grad.data(),
            self.out_channels,
            oh,
            ow,
            self.kernel,
            self.stride,
            self.pad,
            h,
            w,
        );
        // dW[i, r] += sum_p x[i, p] * dcols[r, p]
        T::gemm(
            self.in_channels,
            n,
            kk,
            T::one(),
            cache.input.data(),
            (n, 1),
            &dcols,
            (1, n),
            T::one(),
            dweight,
            (kk, 1),
        );
        let mut dx = vec![T::zero(); self.in_channels * n];
        T::gemm(
            self.in_channels,
            kk,
            n,
            T::one(),
            &self.weight,
            (kk, 1),
            &dcols,
            (n, 1),
            T::zero(),
            &mut dx,
            (n, 1),
        );
        Tensor::from_vec(self.in_channels, h, w, dx).expect("input geometry")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_conv(l: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = x.dims();
        let (oh, ow) = l.output_dims(h, w).unwrap();
        Tensor::from_fn(l.out_channels, oh, ow, |o, oy, ox| {
            let mut acc = l.bias[o];
            for i in 0..c {
                for ky in 0..l.kernel {
                    for kx in 0..l.kernel {
                        let iy = (oy * l.stride + ky) as isize - l.pad as isize;
                        let ix = (ox * l.stride + kx) as isize - l.pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += l.weight[((o * c + i) * l.kernel + ky) * l.kernel + kx]
                                * x.at(i, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn direct_conv_t(l: &ConvTranspose2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = x.dims();
        let (oh, ow) = l.output_dims(h, w).unwrap();
        let mut out = Tensor::from_fn(l.out_channels, oh, ow, |o, _, _| l.bias[o]);
        for i in 0..c {
            for iy in 0..h {
                for ix in 0..w {
                    for o in 0..l.out_channels {
                        for ky in 0..l.kernel {
                            for kx in 0..l.kernel {
                                let oy = (iy * l.stride + ky) as isize - l.pad as isize;
                                let ox = (ix * l.stride + kx) as isize - l.pad as isize;
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    let wv = l.weight[((i * l.out_channels + o) * l.kernel + ky) * l.kernel + kx];
                                    let cur = out.at(o, oy as usize, ox as usize);
                                    out.set(o, oy as usize, ox as usize, cur + wv * x.at(i, iy, ix));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = Conv2d::<f64>::new(&mut rng, 3, 5, 4, 2, 1, 0.3);
        l.bias = vec![0.1, -0.2, 0.3, 0.0, 0.5];
        let x = Tensor::from_fn(3, 8, 6, |c, y, x| ((c * 31 + y * 7 + x) as f64 * 0.13).sin());
        let (y, _) = l.forward(&x).unwrap();
        let e = direct_conv(&l, &x);
        assert_eq!(y.dims(), (5, 4, 3));
        for (a, b) in y.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_transpose_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = ConvTranspose2d::<f64>::new(&mut rng, 4, 3, 4, 2, 1, 0.3);
        let x = Tensor::from_fn(4, 3, 5, |c, y, x| ((c * 13 + y * 5 + x) as f64 * 0.29).cos());
        let (y, _) = l.forward(&x).unwrap();
        assert_eq!(y.dims(), (3, 6, 10));
        let e = direct_conv_t(&l, &x);
        for (a, b) in y.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Conv2d::<f32>::new(&mut rng, 3, 2, 3, 1, 1, 0.1);
        assert!(l.forward(&Tensor::zeros(1, 4, 4)).is_err());
    }
}
