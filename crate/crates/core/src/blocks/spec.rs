//! Declarative block descriptions. The executors and the MAC analyzer both
//! work from these.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::Activation;

/// Mobile inverted bottleneck.
///
/// Unfused: PW (C -> eC), DW 3x3 stride s, PW (eC -> C_out).
/// Fused: Conv 3x3 stride s (C -> eC), PW (eC -> C_out).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub expansion: usize,
    pub stride: usize,
    pub fused: bool,
    pub activation: Activation,
}

impl MbConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, expansion: usize, stride: usize, fused: bool) -> Result<Self> {
        let spec = MbConvSpec {
            in_ch,
            out_ch,
            expansion,
            stride,
            fused,
            activation: Activation::Gelu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_ch == 0 || self.out_ch == 0 || self.expansion == 0 {
            return Err(Error::InvalidParams(format!("mbconv dims must be >= 1: {self:?}")));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::InvalidParams(format!("mbconv stride must be 1 or 2, got {}", self.stride)));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.expansion * self.in_ch
    }

    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_ch == self.out_ch
    }
}

/// LowFormer attention: DW↓n -> PW (C -> 3·C/2) -> SDA over heads -> output
/// projection back to C (with ↑n). The output projection is either one
/// transposed 3x3 conv (`fuse_output`) or PW followed by a transposed DW.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub channels: usize,
    pub heads: usize,
    pub downsample: usize,
    pub kernel: usize,
    pub fuse_output: bool,
}

impl AttentionSpec {
    pub const DEFAULT_KERNEL: usize = 3;

    /// Heads are derived as `(C/2) / head_dim`.
    pub fn with_head_dim(channels: usize, head_dim: usize, downsample: usize) -> Result<Self> {
        if head_dim == 0 || channels % 2 != 0 || (channels / 2) % head_dim != 0 {
            return Err(Error::InvalidParams(format!(
                "attention: C/2 = {} not divisible by head_dim {head_dim} (C = {channels})",
                channels / 2
            )));
        }
        Self::new(channels, channels / 2 / head_dim, downsample)
    }

    pub fn new(channels: usize, heads: usize, downsample: usize) -> Result<Self> {
        let spec = AttentionSpec {
            channels,
            heads,
            downsample,
            kernel: Self::DEFAULT_KERNEL,
            fuse_output: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.channels % 2 != 0 {
            return Err(Error::InvalidParams(format!("attention channels must be even, got {}", self.channels)));
        }
        if self.heads == 0 || self.compressed() % self.heads != 0 {
            return Err(Error::InvalidParams(format!(
                "attention: C/2 = {} not divisible by {} heads",
                self.compressed(),
                self.heads
            )));
        }
        if self.downsample != 1 && self.downsample != 2 {
            return Err(Error::InvalidParams(format!("attention downsample must be 1 or 2, got {}", self.downsample)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidParams(format!("attention kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    pub fn compressed(&self) -> usize {
        self.channels / 2
    }

    pub fn head_dim(&self) -> usize {
        self.compressed() / self.heads
    }

    /// Token count seen by SDA for an `h x w` input.
    pub fn tokens(&self, h: usize, w: usize) -> usize {
        (h / self.downsample) * (w / self.downsample)
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.channels {
            return Err(Error::mismatch("attention", "input channels", self.channels, c));
        }
        if h % self.downsample != 0 || w % self.downsample != 0 {
            return Err(Error::InvalidResolution(format!(
                "attention with downsample {} needs divisible spatial dims, got {h}x{w}",
                self.downsample
            )));
        }
        Ok(())
    }
}

/// LN -> PW (C -> rC) -> activation -> PW (rC -> C).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub channels: usize,
    pub ratio: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(channels: usize, ratio: usize) -> Result<Self> {
        if channels == 0 || ratio == 0 {
            return Err(Error::InvalidParams(format!("mlp dims must be >= 1 (C = {channels}, r = {ratio})")));
        }
        Ok(MlpSpec {
            channels,
            ratio,
            activation: Activation::Gelu,
        })
    }

    pub fn hidden(&self) -> usize {
        self.channels * self.ratio
    }
}

/// Attention + MLP, each wrapped in a residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowFormerBlockSpec {
    pub attention: AttentionSpec,
    pub mlp: MlpSpec,
}

impl LowFormerBlockSpec {
    pub fn new(attention: AttentionSpec, mlp: MlpSpec) -> Result<Self> {
        if attention.channels != mlp.channels {
            return Err(Error::mismatch("lowformer block", "mlp channels", attention.channels, mlp.channels));
        }
        Ok(LowFormerBlockSpec { attention, mlp })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockSpec {
    MbConv(MbConvSpec),
    LowFormer(LowFormerBlockSpec),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_rule() {
        assert!(MbConvSpec::new(64, 64, 4, 1, true).unwrap().has_residual());
        assert!(!MbConvSpec::new(64, 64, 4, 2, true).unwrap().has_residual());
        assert!(!MbConvSpec::new(32, 64, 4, 1, false).unwrap().has_residual());
        assert!(MbConvSpec::new(32, 64, 4, 3, false).is_err());
    }

    #[test]
    fn attention_head_validation() {
        let a = AttentionSpec::with_head_dim(128, 16, 2).unwrap();
        assert_eq!((a.compressed(), a.heads, a.head_dim()), (64, 4, 16));
        assert_eq!(a.tokens(14, 14), 49);
        assert!(AttentionSpec::new(128, 3, 2).is_err());
        assert!(AttentionSpec::new(127, 1, 2).is_err());
        assert!(AttentionSpec::with_head_dim(40, 16, 1).is_err());
        assert!(a.check_input(128, 15, 14).is_err());
    }
}
