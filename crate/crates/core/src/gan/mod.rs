//! Conditional generator / patch discriminator pair and their losses.

mod discriminator;
mod generator;
mod loss;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use discriminator::{Discriminator, DiscriminatorCache, DiscriminatorTopology};
pub use generator::{Generator, GeneratorCache, GeneratorTopology};
pub use loss::{cgan_loss, generator_adv_loss, l1_loss, l1_loss_grad, CganLoss, LOG_EPS};

use crate::error::{config_err, Error};

/// Translation direction of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Frame in, flow image out.
    #[serde(rename = "F2O")]
    FrameToFlow,
    /// Flow image in, frame out.
    #[serde(rename = "O2F")]
    FlowToFrame,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::FrameToFlow => "F2O",
            Direction::FlowToFrame => "O2F",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace(['-', '>', '_'], "").as_str() {
            "F2O" | "FO" => Ok(Direction::FrameToFlow),
            "O2F" | "OF" => Ok(Direction::FlowToFrame),
            _ => Err(config_err!("unknown direction `{s}` (expected F2O or O2F)")),
        }
    }
}

/// Source of the generator's stochasticity (dropout masks).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub dropout: bool,
    pub seed: u64,
}

impl NoiseSource {
    pub fn off() -> Self {
        NoiseSource {
            dropout: false,
            seed: 0,
        }
    }

    pub fn seeded(seed: u64) -> Self {
        NoiseSource { dropout: true, seed }
    }
}

/// Initialisation std for convolution weights.
pub const INIT_STD: f64 = 0.02;
/// Negative slope of the encoder / discriminator leaky ReLUs.
pub const LEAKY_SLOPE: f64 = 0.2;
