//! Video datasets: frames, ground truth, UCSD-style directory I/O and the
//! synthetic crowd generator.

mod synthetic;
mod ucsd;

pub use synthetic::{generate_synthetic_corpus, AnomalyTrack, AnomalyType, SyntheticCorpus, SyntheticSpec};
pub use ucsd::{load_ucsd_layout, write_ucsd_layout, SPEC_SIDECAR};

use crate::error::{config_err, shape_err, Error, Result};
use crate::imageops::{resize, Sampling};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Minimum frame side accepted anywhere in the pipeline.
pub const MIN_FRAME_SIDE: usize = 8;

/// One RGB frame stored at source resolution (row-major, interleaved RGB).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub video_id: String,
    pub index: usize,
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        video_id: impl Into<String>,
        index: usize,
        height: usize,
        width: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if height < MIN_FRAME_SIDE || width < MIN_FRAME_SIDE {
            return Err(shape_err!(
                "frame {height}x{width} below the {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE} minimum"
            ));
        }
        if pixels.len() != height * width * 3 {
            return Err(shape_err!(
                "frame buffer holds {} bytes, expected {}",
                pixels.len(),
                height * width * 3
            ));
        }
        Ok(Frame {
            video_id: video_id.into(),
            index,
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Channel-major copy with intensities scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let scale = T::lit(1.0 / 255.0);
        Tensor::from_fn(3, self.height, self.width, |c, y, x| {
            T::lit(self.pixels[(y * self.width + x) * 3 + c] as f64) * scale
        })
    }

    /// Luminance plane in `[0, 255]`.
    pub fn gray<T: Scalar>(&self) -> Vec<T> {
        self.pixels
            .chunks_exact(3)
            .map(|p| T::lit(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
            .collect()
    }

    /// Generator input: bilinearly resized to `resolution²`, mapped to `[-1, 1]`.
    pub fn model_input<T: Scalar>(&self, resolution: usize) -> Tensor<T> {
        let t = resize(&self.to_tensor::<T>(), resolution, resolution, Sampling::HalfPixel);
        let two = T::lit(2.0);
        t.map(|v| v * two - T::one())
    }
}

/// Boolean per-pixel mask (true = abnormal).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// Frame-level labels and optional pixel masks for one video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub frame_labels: Vec<bool>,
    pub pixel_masks: Option<Vec<Mask>>,
}

impl GroundTruth {
    /// Labels derived as "mask nonempty".
    pub fn from_masks(masks: Vec<Mask>) -> Self {
        GroundTruth {
            frame_labels: masks.iter().map(|m| !m.is_empty()).collect(),
            pixel_masks: Some(masks),
        }
    }

    pub fn has_abnormal(&self) -> bool {
        self.frame_labels.iter().any(|&b| b)
    }

    fn validate(&self, frames: usize, dims: (usize, usize), video: &str) -> Result<()> {
        if self.frame_labels.len() != frames {
            return Err(config_err!(
                "video {video}: {} frame labels for {frames} frames",
                self.frame_labels.len()
            ));
        }
        if let Some(masks) = &self.pixel_masks {
            if masks.len() != frames {
                return Err(config_err!("video {video}: {} masks for {frames} frames", masks.len()));
            }
            for (t, (m, &label)) in masks.iter().zip(&self.frame_labels).enumerate() {
                if (m.height, m.width) != dims {
                    return Err(shape_err!(
                        "video {video}: mask {t} is {}x{}, frames are {}x{}",
                        m.height,
                        m.width,
                        dims.0,
                        dims.1
                    ));
                }
                if !m.is_empty() && !label {
                    return Err(config_err!(
                        "video {video}: frame {t} has abnormal pixels but a normal label"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub id: String,
    pub frames: Vec<Frame>,
    pub ground_truth: Option<GroundTruth>,
    pub source_resolution: (usize, usize),
    /// Set when a test video was loaded without any frame-level labels.
    pub labels_missing: bool,
}

impl VideoSequence {
    /// Validates indices, dimensions and ground-truth alignment.
    pub fn new(id: impl Into<String>, frames: Vec<Frame>, ground_truth: Option<GroundTruth>) -> Result<Self> {
        let id = id.into();
        if frames.len() < 2 {
            return Err(Error::DegenerateVideo {
                video: id,
                len: frames.len(),
            });
        }
        let dims = frames[0].dims();
        for (t, f) in frames.iter().enumerate() {
            if f.index != t {
                return Err(config_err!("video {id}: frame {t} carries index {}", f.index));
            }
            if f.dims() != dims {
                return Err(shape_err!(
                    "video {id}: frame {t} is {:?}, expected {:?}",
                    f.dims(),
                    dims
                ));
            }
        }
        if let Some(gt) = &ground_truth {
            gt.validate(frames.len(), dims, &id)?;
        }
        Ok(VideoSequence {
            id,
            frames,
            ground_truth,
            source_resolution: dims,
            labels_missing: false,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn has_abnormal_frames(&self) -> bool {
        self.ground_truth.as_ref().is_some_and(|g| g.has_abnormal())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<VideoSequence>,
    pub test: Vec<VideoSequence>,
}

/// Consecutive frame pairs `(F_t, F_{t+1})`, `t = 0..T-2`.
pub fn pair_frames(video: &VideoSequence) -> Result<Vec<(&Frame, &Frame)>> {
    if video.frames.len() < 2 {
        return Err(Error::DegenerateVideo {
            video: video.id.clone(),
            len: video.frames.len(),
        });
    }
    Ok(video.frames.windows(2).map(|w| (&w[0], &w[1])).collect())
}
