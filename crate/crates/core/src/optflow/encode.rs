use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Frozen affine map from raw `(u, v, |flow|)` to the generator range
/// `[-1, 1]`: `lo[c] ↦ -1`, `hi[c] ↦ 1`. Values outside `[lo, hi]` are not
/// clipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRange {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl FlowRange {
    pub fn symmetric(max_displacement: f64) -> Self {
        let m = max_displacement.abs().max(f64::MIN_POSITIVE);
        FlowRange {
            lo: [-m, -m, 0.0],
            hi: [m, m, m],
        }
    }

    /// Percentile-based range over a set of training fields, with each
    /// channel's span widened (about its centre) to at least `min_span` pixels.
    pub fn from_percentiles<T: Scalar>(
        fields: &[&FlowField<T>],
        lower_pct: f64,
        upper_pct: f64,
        min_span: f64,
    ) -> Result<Self> {
        if fields.is_empty() {
            return Err(config_err!("cannot fit a flow range without training flow"));
        }
        if !(0.0..=100.0).contains(&lower_pct) || !(lower_pct..=100.0).contains(&upper_pct) {
            return Err(config_err!("invalid percentiles {lower_pct}/{upper_pct}"));
        }
        const BUDGET: usize = 1 << 21;
        let total: usize = fields.iter().map(|f| f.u.len()).sum();
        let stride = total.div_ceil(BUDGET).max(1);
        let mut chans: [Vec<f64>; 3] = Default::default();
        let mut k = 0usize;
        for f in fields {
            for i in 0..f.u.len() {
                if k.is_multiple_of(stride) {
                    let (u, v) = (f.u[i].to_f64_lossy(), f.v[i].to_f64_lossy());
                    chans[0].push(u);
                    chans[1].push(v);
                    chans[2].push(u.hypot(v));
                }
                k += 1;
            }
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for c in 0..3 {
            let vals = &mut chans[c];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite training flow".into()));
            }
            vals.sort_by(f64::total_cmp);
            let pick = |p: f64| vals[((p / 100.0) * (vals.len() - 1) as f64).round() as usize];
            let (mut l, mut h) = (pick(lower_pct), pick(upper_pct));
            if h - l < min_span {
                let mid = 0.5 * (l + h);
                l = mid - 0.5 * min_span;
                h = mid + 0.5 * min_span;
            }
            lo[c] = l;
            hi[c] = h;
        }
        Ok(FlowRange { lo, hi })
    }

    #[inline]
    pub fn encode_value(&self, c: usize, x: f64) -> f64 {
        2.0 * (x - self.lo[c]) / (self.hi[c] - self.lo[c]) - 1.0
    }

    #[inline]
    pub fn decode_value(&self, c: usize, y: f64) -> f64 {
        (y + 1.0) * 0.5 * (self.hi[c] - self.lo[c]) + self.lo[c]
    }
}

/// Three-channel flow image `(u, v, magnitude)` in generator units, with the
/// mapping needed to invert it.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowImage<T> {
    pub data: Tensor<T>,
    pub range: FlowRange,
}

impl<T: Scalar> FlowImage<T> {
    /// Channel `c` mapped back to pixels.
    pub fn raw_channel(&self, c: usize) -> Vec<T> {
        self.data
            .plane(c)
            .iter()
            .map(|&y| T::lit(self.range.decode_value(c, y.to_f64_lossy())))
            .collect()
    }
}

/// Encodes `f` as `(u, v, sqrt(u² + v²))`, mapped through `range`.
pub fn encode_flow<T: Scalar>(f: &FlowField<T>, range: &FlowRange) -> Result<FlowImage<T>> {
    if !f.all_finite() {
        return Err(Error::Numeric("flow field contains non-finite values".into()));
    }
    let mag = f.magnitude();
    let n = f.height * f.width;
    let mut data = Vec::with_capacity(3 * n);
    for (c, plane) in [&f.u, &f.v, &mag].into_iter().enumerate() {
        let scale = T::lit(2.0 / (range.hi[c] - range.lo[c]));
        let lo = T::lit(range.lo[c]);
        data.extend(plane.iter().map(|&x| (x - lo) * scale - T::one()));
    }
    Ok(FlowImage {
        data: Tensor::from_vec(3, f.height, f.width, data)?,
        range: *range,
    })
}

/// Recovers `(u, v)` from a flow image.
pub fn decode_flow<T: Scalar>(img: &FlowImage<T>) -> FlowField<T> {
    FlowField {
        height: img.data.height(),
        width: img.data.width(),
        u: img.raw_channel(0),
        v: img.raw_channel(1),
    }
}
