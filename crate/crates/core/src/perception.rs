//! Frozen semantic feature extractors `h(·)` for the appearance channel.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::{Dtype, SafeTensors};
use sha2::{Digest, Sha256};

use crate::error::{config_err, shape_err, Error, Result};
use crate::nn::{relu, Conv2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Environment variable naming the directory that holds backbone weights.
pub const CACHE_ENV: &str = "CGAN_ANOMALY_CACHE";
/// File looked up inside the cache directory for the convolutional backbone.
pub const ALEXNET_WEIGHTS_FILE: &str = "alexnet.safetensors";

/// Spatial feature map tagged with the extractor that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub values: Tensor<T>,
    pub extractor: String,
}

/// Frozen image → feature map function with a fixed stride and width.
///
/// Inputs are RGB tensors with values in `[0, 1]`. For an `H×W` input the
/// output is `channels() × ⌈H/s⌉ × ⌈W/s⌉`.
pub trait FeatureExtractor<T: Scalar>: Send + Sync {
    fn id(&self) -> &str;
    fn stride(&self) -> usize;
    fn channels(&self) -> usize;
    fn extract(&self, img: &Tensor<T>) -> Result<FeatureMap<T>>;

    fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.stride()), width.div_ceil(self.stride()))
    }
}

fn check_rgb<T: Scalar>(img: &Tensor<T>) -> Result<()> {
    if img.channels() != 3 {
        return Err(shape_err!(
            "feature extractor expects 3 channels, got {}",
            img.channels()
        ));
    }
    Ok(())
}

/// Weight-free stand-in: 3×3 box blur (clamped borders) followed by 8×8
/// average pooling. Linear and constant-preserving.
#[derive(Clone, Debug, Default)]
pub struct TestDoubleExtractor;

pub fn test_double_extractor() -> TestDoubleExtractor {
    TestDoubleExtractor
}

impl TestDoubleExtractor {
    pub const STRIDE: usize = 8;
}

fn box_blur3<T: Scalar>(p: &[T], h: usize, w: usize) -> Vec<T> {
    let ninth = T::lit(1.0 / 9.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut s = T::zero();
            for dy in [-1isize, 0, 1] {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in [-1isize, 0, 1] {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    s += p[yy * w + xx];
                }
            }
            out.push(s * ninth);
        }
    }
    out
}

/// Average pooling with window = stride = `s`; edge windows average only the
/// pixels they cover.
fn avg_pool<T: Scalar>(p: &[T], h: usize, w: usize, s: usize) -> Vec<T> {
    let (oh, ow) = (h.div_ceil(s), w.div_ceil(s));
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let (y1, x1) = (((oy + 1) * s).min(h), ((ox + 1) * s).min(w));
            let mut acc = T::zero();
            for y in oy * s..y1 {
                for x in ox * s..x1 {
                    acc += p[y * w + x];
                }
            }
            out.push(acc / T::lit(((y1 - oy * s) * (x1 - ox * s)) as f64));
        }
    }
    out
}

impl<T: Scalar> FeatureExtractor<T> for TestDoubleExtractor {
    fn id(&self) -> &str {
        "test-double-blur-pool8"
    }

    fn stride(&self) -> usize {
        Self::STRIDE
    }

    fn channels(&self) -> usize {
        3
    }

    fn extract(&self, img: &Tensor<T>) -> Result<FeatureMap<T>> {
        check_rgb(img)?;
        let (_, h, w) = img.dims();
        let (oh, ow) = <Self as FeatureExtractor<T>>::output_dims(self, h, w);
        let mut data = Vec::with_capacity(3 * oh * ow);
        for c in 0..3 {
            data.extend(avg_pool(&box_blur3(img.plane(c), h, w), h, w, Self::STRIDE));
        }
        Ok(FeatureMap {
            values: Tensor::from_vec(3, oh, ow, data)?,
            extractor: "test-double-blur-pool8".into(),
        })
    }
}

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// `(out_channels, kernel, stride, pad)` of the five convolutions; a 3×3
/// stride-2 max-pool follows the first two.
const ALEXNET_CONVS: [(usize, usize, usize, usize); 5] = [
    (64, 11, 4, 5),
    (192, 5, 1, 2),
    (384, 3, 1, 1),
    (256, 3, 1, 1),
    (256, 3, 1, 1),
];
/// Parameter indices inside `features.*` of the usual AlexNet layout.
const ALEXNET_KEYS: [usize; 5] = [0, 3, 6, 8, 10];

/// Five-convolution AlexNet trunk read out at the last convolution (ReLU
/// applied, before the final pooling). Paddings are chosen so every stage
/// divides the side by a ceiling: overall stride 16, 256 channels.
#[derive(Clone, Debug)]
pub struct ConvBackbone<T> {
    id: String,
    convs: Vec<Conv2d<T>>,
}

fn max_pool3s2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = x.dims();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    Tensor::from_fn(c, oh, ow, |ch, oy, ox| {
        let p = x.plane(ch);
        let mut m = T::neg_infinity();
        for y in (2 * oy).saturating_sub(1)..(2 * oy + 2).min(h) {
            for xx in (2 * ox).saturating_sub(1)..(2 * ox + 2).min(w) {
                m = m.max(p[y * w + xx]);
            }
        }
        m
    })
}

impl<T: Scalar> ConvBackbone<T> {
    /// Randomly initialised trunk; useful for shape checks and as a
    /// random-feature baseline.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let convs = ALEXNET_CONVS
            .iter()
            .map(|&(cout, k, s, p)| {
                let std = (2.0 / (cin * k * k) as f64).sqrt();
                let conv = Conv2d::new(&mut rng, cin, cout, k, s, p, std);
                cin = cout;
                conv
            })
            .collect();
        ConvBackbone {
            id: format!("alexnet-conv5-random-{seed}"),
            convs,
        }
    }

    /// Loads `features.{0,3,6,8,10}.{weight,bias}` from a safetensors file.
    pub fn from_safetensors(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = hex::encode(&Sha256::digest(&bytes)[..8]);
        let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let read = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let view = st
                .tensor(name)
                .map_err(|e| Error::Format(format!("{}: tensor {name}: {e}", path.display())))?;
            if view.shape() != shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    view.shape()
                )));
            }
            let data = view.data();
            match view.dtype() {
                Dtype::F32 => Ok(data
                    .chunks_exact(4)
                    .map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64))
                    .collect()),
                Dtype::F64 => Ok(data
                    .chunks_exact(8)
                    .map(|b| T::lit(f64::from_le_bytes(b.try_into().unwrap())))
                    .collect()),
                other => Err(Error::Format(format!("tensor {name}: unsupported dtype {other:?}"))),
            }
        };
        let mut cin = 3;
        let mut convs = Vec::new();
        for (&(cout, k, s, p), key) in ALEXNET_CONVS.iter().zip(ALEXNET_KEYS) {
            let mut conv = Conv2d::zeroed(cin, cout, k, s, p);
            conv.weight = read(&format!("features.{key}.weight"), &[cout, cin, k, k])?;
            conv.bias = read(&format!("features.{key}.bias"), &[cout])?;
            convs.push(conv);
            cin = cout;
        }
        Ok(ConvBackbone {
            id: format!("alexnet-conv5-{digest}"),
            convs,
        })
    }

    /// Weights file in the cache directory, if one is present.
    pub fn cached_weights_path() -> Option<PathBuf> {
        let dir = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("cgan-anomaly")))?;
        let p = dir.join(ALEXNET_WEIGHTS_FILE);
        p.is_file().then_some(p)
    }
}

impl<T: Scalar> FeatureExtractor<T> for ConvBackbone<T> {
    fn id(&self) -> &str {
        &self.id
    }

    fn stride(&self) -> usize {
        16
    }

    fn channels(&self) -> usize {
        256
    }

    fn extract(&self, img: &Tensor<T>) -> Result<FeatureMap<T>> {
        check_rgb(img)?;
        let mut x = Tensor::from_fn(3, img.height(), img.width(), |c, y, xx| {
            (img.at(c, y, xx) - T::lit(IMAGENET_MEAN[c])) / T::lit(IMAGENET_STD[c])
        });
        for (i, conv) in self.convs.iter().enumerate() {
            x = relu(&conv.forward(&x)?.0);
            if i < 2 {
                x = max_pool3s2(&x);
            }
        }
        if !x.all_finite() {
            return Err(Error::Numeric("non-finite backbone features".into()));
        }
        Ok(FeatureMap {
            values: x,
            extractor: self.id.clone(),
        })
    }
}

/// Named extractor choice, as used in run configurations.
pub fn extractor_by_name<T: Scalar>(name: &str, weights: Option<&Path>) -> Result<Box<dyn FeatureExtractor<T>>> {
    match name {
        "test_double" => Ok(Box::new(TestDoubleExtractor)),
        "alexnet" => {
            let path = match weights {
                Some(p) => p.to_path_buf(),
                None => ConvBackbone::<T>::cached_weights_path().ok_or_else(|| {
                    config_err!("no {ALEXNET_WEIGHTS_FILE} found; set {CACHE_ENV} or pass a weights path")
                })?,
            };
            Ok(Box::new(ConvBackbone::<T>::from_safetensors(&path)?))
        }
        other => Err(config_err!(
            "unknown feature extractor `{other}` (expected alexnet or test_double)"
        )),
    }
}
