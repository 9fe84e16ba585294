//! Plane-level resampling and filtering helpers.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sample-grid convention for bilinear resizing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Corner samples of source and target coincide; used for difference maps.
    AlignCorners,
    /// Pixel centres are aligned; used for frames and flow.
    HalfPixel,
}

fn source_coord(dst: usize, dst_len: usize, src_len: usize, sampling: Sampling) -> f64 {
    match sampling {
        Sampling::AlignCorners => {
            if dst_len <= 1 {
                0.0
            } else {
                dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
            }
        }
        Sampling::HalfPixel => {
            let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
            s.clamp(0.0, (src_len - 1) as f64)
        }
    }
}

/// Bilinear resize of one row-major plane.
pub fn resize_plane<T: Scalar>(
    src: &[T],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
    sampling: Sampling,
) -> Vec<T> {
    assert_eq!(src.len(), src_h * src_w);
    if src_h == dst_h && src_w == dst_w {
        return src.to_vec();
    }
    let xs: Vec<(usize, usize, T)> = (0..dst_w)
        .map(|x| {
            let sx = source_coord(x, dst_w, src_w, sampling);
            let x0 = (sx.floor() as usize).min(src_w - 1);
            let x1 = (x0 + 1).min(src_w - 1);
            (x0, x1, T::lit(sx - x0 as f64))
        })
        .collect();
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        let sy = source_coord(y, dst_h, src_h, sampling);
        let y0 = (sy.floor() as usize).min(src_h - 1);
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = T::lit(sy - y0 as f64);
        let r0 = &src[y0 * src_w..(y0 + 1) * src_w];
        let r1 = &src[y1 * src_w..(y1 + 1) * src_w];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Bilinear resize of every channel.
pub fn resize<T: Scalar>(t: &Tensor<T>, dst_h: usize, dst_w: usize, sampling: Sampling) -> Tensor<T> {
    let (c, h, w) = t.dims();
    let mut data = Vec::with_capacity(c * dst_h * dst_w);
    for ch in 0..c {
        data.extend(resize_plane(t.plane(ch), h, w, dst_h, dst_w, sampling));
    }
    Tensor::from_vec(c, dst_h, dst_w, data).expect("resize preserves geometry")
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur<T: Scalar>(src: &[T], h: usize, w: usize, sigma: f64) -> Vec<T> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);
    let kernel: Vec<T> = kernel.into_iter().map(T::lit).collect();

    let mut tmp = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Bilinear sample with clamped coordinates.
#[inline]
pub fn sample_clamped<T: Scalar>(src: &[T], h: usize, w: usize, y: T, x: T) -> T {
    let maxx = T::lit((w - 1) as f64);
    let maxy = T::lit((h - 1) as f64);
    let x = x.max(T::zero()).min(maxx);
    let y = y.max(T::zero()).min(maxy);
    let x0 = x.floor().to_usize().unwrap_or(0).min(w - 1);
    let y0 = y.floor().to_usize().unwrap_or(0).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - T::lit(x0 as f64);
    let fy = y - T::lit(y0 as f64);
    let top = src[y0 * w + x0] + (src[y0 * w + x1] - src[y0 * w + x0]) * fx;
    let bot = src[y1 * w + x0] + (src[y1 * w + x1] - src[y1 * w + x0]) * fx;
    top + (bot - top) * fy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn align_corners_keeps_corners() {
        let src = [0.0f64, 1.0, 1.0, 0.0];
        let out = resize_plane(&src, 2, 2, 4, 4, Sampling::AlignCorners);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[3], 1.0);
        assert_eq!(out[12], 1.0);
        assert_eq!(out[15], 0.0);
    }

    #[test]
    fn constant_survives_both_samplings() {
        let src = vec![0.7f64; 6 * 5];
        for s in [Sampling::AlignCorners, Sampling::HalfPixel] {
            for v in resize_plane(&src, 6, 5, 13, 9, s) {
                assert!((v - 0.7).abs() < 1e-15);
            }
            for v in resize_plane(&src, 6, 5, 3, 2, s) {
                assert!((v - 0.7).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blur_preserves_constant() {
        let src = vec![3.0f32; 10 * 7];
        for v in gaussian_blur(&src, 10, 7, 1.3) {
            assert!((v - 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn sample_at_integer_is_exact() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(sample_clamped(&src, 3, 4, 2.0, 1.0), 9.0);
        assert_eq!(sample_clamped(&src, 3, 4, 0.0, 0.5), 0.5);
        assert_eq!(sample_clamped(&src, 3, 4, -4.0, 10.0), 3.0);
    }
}
