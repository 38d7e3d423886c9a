use std::collections::HashMap;

use crate::blocks::{
    BlockSpec, ConvBn, Init, Linear, LowFormerBlock, MbConv, ParamMut, ParamRef, Parameters,
};
use crate::error::{Error, Result};
use crate::io::{NamedTensor, WeightFile};
use crate::model::config::{Ablation, ModelConfig};
use crate::model::layout::ModelLayout;
use crate::ops::{global_avg_pool, Activation};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum Block {
    MbConv(MbConv),
    LowFormer(LowFormerBlock),
}

impl Block {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Block::MbConv(b) => b.forward(x),
            Block::LowFormer(b) => b.forward(x),
        }
    }
}

impl Parameters for Block {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        match self {
            Block::MbConv(b) => b.params(prefix, out),
            Block::LowFormer(b) => b.params(prefix, out),
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        match self {
            Block::MbConv(b) => b.params_mut(prefix, out),
            Block::LowFormer(b) => b.params_mut(prefix, out),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub downsample: Option<MbConv>,
    pub blocks: Vec<Block>,
}

/// Built network. Immutable after construction; `forward` takes `&self`
/// and may be called from several threads at once.
#[derive(Clone, Debug)]
pub struct Model {
    layout: ModelLayout,
    seed: u64,
    pub stem: ConvBn,
    pub stages: Vec<Stage>,
    pub head: Linear,
}

impl Model {
    pub fn build(config: &ModelConfig, ablation: Ablation, seed: u64) -> Result<Self> {
        Self::from_layout(ModelLayout::new(config, ablation)?, seed)
    }

    pub fn from_layout(layout: ModelLayout, seed: u64) -> Result<Self> {
        let init = Init::new(seed);
        let stem = ConvBn::new(layout.stem, Activation::Gelu, &init, "stem.conv")?;
        let mut stages = Vec::with_capacity(layout.stages.len());
        for s in &layout.stages {
            let prefix = format!("stage{}", s.index);
            let downsample = s
                .downsample
                .map(|d| MbConv::new(d, &init, &format!("{prefix}.down")))
                .transpose()?;
            let blocks = s
                .blocks
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let path = format!("{prefix}.block{j}");
                    Ok(match b {
                        BlockSpec::MbConv(m) => Block::MbConv(MbConv::new(*m, &init, &path)?),
                        BlockSpec::LowFormer(l) => Block::LowFormer(LowFormerBlock::new(*l, &init, &path)?),
                    })
                })
                .collect::<Result<_>>()?;
            stages.push(Stage { downsample, blocks });
        }
        let head = Linear::new(layout.head_in, layout.num_classes, &init, "head.fc");
        Ok(Model {
            layout,
            seed,
            stem,
            stages,
            head,
        })
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn config(&self) -> &ModelConfig {
        &self.layout.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Feature maps after each stage (five entries).
    pub fn forward_stages(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let s = x.shape();
        self.layout.check_input(s.c, s.h, s.w)?;
        let mut y = self.stem.forward(x)?;
        let mut outs = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            if let Some(d) = &stage.downsample {
                y = d.forward(&y)?;
            }
            for b in &stage.blocks {
                y = b.forward(&y)?;
            }
            outs.push(y.clone());
        }
        Ok(outs)
    }

    /// Logits as an `(n, num_classes, 1, 1)` tensor.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        self.layout.check_input(s.c, s.h, s.w)?;
        let mut y = self.stem.forward(x)?;
        for stage in &self.stages {
            if let Some(d) = &stage.downsample {
                y = d.forward(&y)?;
            }
            for b in &stage.blocks {
                y = b.forward(&y)?;
            }
        }
        self.head.forward(&global_avg_pool(&y))
    }

    pub fn export_weights(&self) -> WeightFile {
        let mut refs = Vec::new();
        self.params("", &mut refs);
        WeightFile {
            tensors: refs
                .into_iter()
                .map(|p| NamedTensor {
                    name: p.name,
                    dims: p.dims,
                    data: p.data.to_vec(),
                })
                .collect(),
        }
    }

    /// Replace every parameter from `file`; names and dims must match exactly.
    pub fn load_weights(&mut self, file: &WeightFile) -> Result<()> {
        let mut by_name: HashMap<&str, &NamedTensor> = HashMap::with_capacity(file.tensors.len());
        for t in &file.tensors {
            if by_name.insert(t.name.as_str(), t).is_some() {
                return Err(Error::Weights(format!("duplicate tensor '{}'", t.name)));
            }
        }
        let mut slots = Vec::new();
        self.params_mut("", &mut slots);
        if slots.len() != by_name.len() {
            return Err(Error::Weights(format!(
                "model has {} tensors, file has {}",
                slots.len(),
                by_name.len()
            )));
        }
        for slot in slots {
            let t = by_name
                .get(slot.name.as_str())
                .ok_or_else(|| Error::Weights(format!("missing tensor '{}'", slot.name)))?;
            if t.dims != slot.dims {
                return Err(Error::Weights(format!(
                    "tensor '{}': expected dims {:?}, found {:?}",
                    slot.name, slot.dims, t.dims
                )));
            }
            slot.data.copy_from_slice(&t.data);
        }
        Ok(())
    }
}

impl Parameters for Model {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        let p = |s: &str| crate::blocks::join(prefix, s);
        self.stem.params(&p("stem.conv"), out);
        for (i, stage) in self.stages.iter().enumerate() {
            if let Some(d) = &stage.downsample {
                d.params(&p(&format!("stage{i}.down")), out);
            }
            for (j, b) in stage.blocks.iter().enumerate() {
                b.params(&p(&format!("stage{i}.block{j}")), out);
            }
        }
        self.head.params(&p("head.fc"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let p = |s: &str| crate::blocks::join(prefix, s);
        self.stem.params_mut(&p("stem.conv"), out);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            if let Some(d) = &mut stage.downsample {
                d.params_mut(&p(&format!("stage{i}.down")), out);
            }
            for (j, b) in stage.blocks.iter_mut().enumerate() {
                b.params_mut(&p(&format!("stage{i}.block{j}")), out);
            }
        }
        self.head.params_mut(&p("head.fc"), out);
    }
}
