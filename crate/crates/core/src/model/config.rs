use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "b0")]
    B0,
    #[serde(rename = "b1")]
    B1,
    #[serde(rename = "b1.5")]
    B1_5,
    #[serde(rename = "b2")]
    B2,
    #[serde(rename = "b3")]
    B3,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::B0, Variant::B1, Variant::B1_5, Variant::B2, Variant::B3];

    pub fn name(self) -> &'static str {
        match self {
            Variant::B0 => "b0",
            Variant::B1 => "b1",
            Variant::B1_5 => "b1.5",
            Variant::B2 => "b2",
            Variant::B3 => "b3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b0" => Ok(Variant::B0),
            "b1" => Ok(Variant::B1),
            "b1.5" | "b15" | "b1_5" => Ok(Variant::B1_5),
            "b2" => Ok(Variant::B2),
            "b3" => Ok(Variant::B3),
            other => Err(Error::InvalidParams(format!("unknown variant '{other}' (b0, b1, b1.5, b2, b3)"))),
        }
    }
}

/// A single reverted design decision on top of the baseline architecture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Baseline,
    /// Every MBConv unfused.
    UnfusedMbconv,
    /// LowFormer blocks dropped; one extra stride-1 MBConv per stage.
    AttentionRemoved,
    /// No down/upsampling around SDA.
    HighResAttention,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Baseline,
        Ablation::UnfusedMbconv,
        Ablation::AttentionRemoved,
        Ablation::HighResAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::UnfusedMbconv => "unfused-mbconv",
            Ablation::AttentionRemoved => "attention-removed",
            Ablation::HighResAttention => "high-res-attention",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "unknown ablation '{s}' (baseline, unfused-mbconv, attention-removed, high-res-attention)"
                ))
            })
    }
}

pub const NUM_STAGES: usize = 5;

/// Stage widths/depths plus the architecture knobs that are not pinned by
/// the published table (MLP ratio, head dim, expansion).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub in_channels: usize,
    pub channels: [usize; NUM_STAGES],
    pub depths: [usize; NUM_STAGES],
    /// MBConvs are fused iff their input channels are at most this.
    pub fusion_threshold: usize,
    pub attention_stages: Vec<usize>,
    /// Down/upsampling factor around SDA per stage (only read for attention stages).
    pub attention_downsample: [usize; NUM_STAGES],
    pub num_classes: usize,
    pub mlp_ratio: usize,
    pub head_dim: usize,
    pub expansion: usize,
}

impl ModelConfig {
    pub fn for_variant(v: Variant) -> Self {
        let (depths, channels) = match v {
            Variant::B0 => ([0, 0, 0, 3, 4], [16, 32, 64, 128, 256]),
            Variant::B1 => ([0, 0, 0, 5, 5], [16, 32, 64, 128, 256]),
            Variant::B1_5 => ([0, 0, 0, 6, 6], [20, 40, 80, 160, 320]),
            Variant::B2 => ([0, 0, 0, 6, 6], [24, 48, 96, 192, 384]),
            Variant::B3 => ([1, 1, 2, 6, 6], [32, 64, 128, 256, 512]),
        };
        ModelConfig {
            name: v.name().to_string(),
            in_channels: 3,
            channels,
            depths,
            fusion_threshold: 256,
            attention_stages: vec![3, 4],
            attention_downsample: [1, 1, 1, 2, 1],
            num_classes: 1000,
            mlp_ratio: 4,
            head_dim: 16,
            expansion: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.iter().any(|&c| c == 0) || self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::InvalidParams("model channels and classes must be >= 1".into()));
        }
        if self.expansion == 0 || self.mlp_ratio == 0 || self.head_dim == 0 {
            return Err(Error::InvalidParams("expansion, mlp_ratio and head_dim must be >= 1".into()));
        }
        for &s in &self.attention_stages {
            if s >= NUM_STAGES {
                return Err(Error::InvalidParams(format!("attention stage {s} out of range")));
            }
            let c = self.channels[s];
            if c % 2 != 0 || (c / 2) % self.head_dim != 0 {
                return Err(Error::InvalidParams(format!(
                    "stage {s}: C/2 = {} not divisible by head_dim {}",
                    c / 2,
                    self.head_dim
                )));
            }
            if !matches!(self.attention_downsample[s], 1 | 2) {
                return Err(Error::InvalidParams(format!("stage {s}: attention downsample must be 1 or 2")));
            }
        }
        Ok(())
    }
}
