use serde::{Deserialize, Serialize};

use crate::blocks::{AttentionSpec, BlockSpec, LowFormerBlockSpec, MbConvSpec, MlpSpec};
use crate::error::{Error, Result};
use crate::model::config::{Ablation, ModelConfig, NUM_STAGES};
use crate::ops::ConvParams;

/// Input size must be a multiple of this (five stride-2 levels).
pub const INPUT_ALIGN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLayout {
    pub index: usize,
    /// Stride-2 MBConv entering the stage (none for stage 0, which follows the stem).
    pub downsample: Option<MbConvSpec>,
    pub blocks: Vec<BlockSpec>,
}

/// Fully resolved layer plan: stem, five stages, classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub config: ModelConfig,
    pub ablation: Ablation,
    pub stem: ConvParams,
    pub stages: Vec<StageLayout>,
    pub head_in: usize,
    pub num_classes: usize,
}

impl ModelLayout {
    pub fn new(config: &ModelConfig, ablation: Ablation) -> Result<Self> {
        config.validate()?;
        let c = &config.channels;
        let fuse = |in_ch: usize| ablation != Ablation::UnfusedMbconv && in_ch <= config.fusion_threshold;
        let mut stages = Vec::with_capacity(NUM_STAGES);
        for i in 0..NUM_STAGES {
            let downsample = if i == 0 {
                None
            } else {
                // The downsampler into the last stage is fused regardless of width.
                let fused = if i == NUM_STAGES - 1 {
                    ablation != Ablation::UnfusedMbconv
                } else {
                    fuse(c[i - 1])
                };
                Some(MbConvSpec::new(c[i - 1], c[i], config.expansion, 2, fused)?)
            };
            let is_attention = config.attention_stages.contains(&i);
            let mut blocks = Vec::new();
            let mbconv = || MbConvSpec::new(c[i], c[i], config.expansion, 1, fuse(c[i])).map(BlockSpec::MbConv);
            match (is_attention, ablation) {
                (true, Ablation::AttentionRemoved) => blocks.push(mbconv()?),
                (true, _) => {
                    let n = if ablation == Ablation::HighResAttention {
                        1
                    } else {
                        config.attention_downsample[i]
                    };
                    let spec = LowFormerBlockSpec::new(
                        AttentionSpec::with_head_dim(c[i], config.head_dim, n)?,
                        MlpSpec::new(c[i], config.mlp_ratio)?,
                    )?;
                    blocks.extend((0..config.depths[i]).map(|_| BlockSpec::LowFormer(spec)));
                }
                (false, _) => {
                    for _ in 0..config.depths[i] {
                        blocks.push(mbconv()?);
                    }
                    if ablation == Ablation::AttentionRemoved {
                        blocks.push(mbconv()?);
                    }
                }
            }
            stages.push(StageLayout {
                index: i,
                downsample,
                blocks,
            });
        }
        Ok(ModelLayout {
            config: config.clone(),
            ablation,
            stem: ConvParams::square(config.in_channels, c[0], 3, 2),
            stages,
            head_in: c[NUM_STAGES - 1],
            num_classes: config.num_classes,
        })
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.config.in_channels {
            return Err(Error::mismatch("model", "input channels", self.config.in_channels, c));
        }
        for (dim, v) in [("height", h), ("width", w)] {
            if v < INPUT_ALIGN || v % INPUT_ALIGN != 0 {
                return Err(Error::InvalidResolution(format!(
                    "input {dim} {v} must be >= {INPUT_ALIGN} and divisible by {INPUT_ALIGN}"
                )));
            }
        }
        Ok(())
    }

    /// Spatial size after the stem and after each stage.
    pub fn stage_resolutions(&self, h: usize, w: usize) -> Result<Vec<(usize, usize)>> {
        self.check_input(self.config.in_channels, h, w)?;
        Ok((1..=NUM_STAGES).map(|i| (h >> i, w >> i)).collect())
    }

    pub fn mbconvs(&self) -> impl Iterator<Item = &MbConvSpec> {
        self.stages.iter().flat_map(|s| {
            s.downsample.iter().chain(s.blocks.iter().filter_map(|b| match b {
                BlockSpec::MbConv(m) => Some(m),
                BlockSpec::LowFormer(_) => None,
            }))
        })
    }

    pub fn attention_blocks(&self) -> impl Iterator<Item = (usize, &LowFormerBlockSpec)> {
        self.stages.iter().flat_map(|s| {
            s.blocks.iter().filter_map(move |b| match b {
                BlockSpec::LowFormer(l) => Some((s.index, l)),
                BlockSpec::MbConv(_) => None,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    #[test]
    fn b1_stage_contents() {
        let l = ModelLayout::new(&ModelConfig::for_variant(Variant::B1), Ablation::Baseline).unwrap();
        let counts: Vec<usize> = l.stages.iter().map(|s| s.blocks.len()).collect();
        assert_eq!(counts, vec![0, 0, 0, 5, 5]);
        assert!(l.stages[3].blocks.iter().all(|b| matches!(b, BlockSpec::LowFormer(_))));
        assert!(l.mbconvs().all(|m| m.fused && m.stride == 2));
        let (_, a3) = l.attention_blocks().next().unwrap();
        assert_eq!(a3.attention.downsample, 2);
        let (_, a4) = l.attention_blocks().last().unwrap();
        assert_eq!(a4.attention.downsample, 1);
    }

    #[test]
    fn fusion_threshold_rule() {
        // B3: stage-4 blocks see 512 input channels; downsampler into stage 4 sees 256.
        let mut cfg = ModelConfig::for_variant(Variant::B3);
        let l = ModelLayout::new(&cfg, Ablation::AttentionRemoved).unwrap();
        assert!(l.stages[4].downsample.unwrap().fused);
        assert!(!match l.stages[4].blocks[0] {
            BlockSpec::MbConv(m) => m.fused,
            _ => unreachable!(),
        });
        // Last-stage downsampler stays fused even above the threshold.
        cfg.fusion_threshold = 64;
        let l = ModelLayout::new(&cfg, Ablation::Baseline).unwrap();
        assert!(l.stages[4].downsample.unwrap().fused);
        assert!(!l.stages[3].downsample.unwrap().fused);
        assert!(l.stages[2].downsample.unwrap().fused);
    }

    #[test]
    fn attention_removed_adds_one_mbconv_per_stage() {
        let l = ModelLayout::new(&ModelConfig::for_variant(Variant::B1), Ablation::AttentionRemoved).unwrap();
        assert_eq!(l.attention_blocks().count(), 0);
        let counts: Vec<usize> = l.stages.iter().map(|s| s.blocks.len()).collect();
        assert_eq!(counts, vec![1, 1, 1, 1, 1]);
    }

    #[test]
    fn input_alignment() {
        let l = ModelLayout::new(&ModelConfig::for_variant(Variant::B0), Ablation::Baseline).unwrap();
        assert_eq!(
            l.stage_resolutions(224, 224).unwrap(),
            vec![(112, 112), (56, 56), (28, 28), (14, 14), (7, 7)]
        );
        assert!(l.check_input(3, 240, 224).is_err());
        assert!(l.check_input(3, 16, 16).is_err());
        assert!(l.check_input(1, 224, 224).is_err());
    }

    #[test]
    fn bad_head_dim_fails_at_build() {
        let mut cfg = ModelConfig::for_variant(Variant::B1_5);
        cfg.head_dim = 48;
        assert!(ModelLayout::new(&cfg, Ablation::Baseline).is_err());
    }
}
