use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::{count, units, LayerKind};
use crate::error::{Error, Result};
use crate::harness::experiments::{run_and_write, ExperimentKind, Trend, Written};
use crate::harness::{time_forward, BenchProtocol, ModelWorkload};
use crate::io::{reference_values, sig6, Report};
use crate::model::{Ablation, Model, ModelConfig, ModelLayout, Variant, INPUT_ALIGN};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub models: Vec<(Variant, Ablation)>,
    pub resolutions: Vec<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            models: vec![(Variant::B1, Ablation::Baseline), (Variant::B1, Ablation::HighResAttention)],
            resolutions: vec![224, 384, 512, 768, 1024],
        }
    }
}

impl ScalingConfig {
    pub fn reduced() -> Self {
        ScalingConfig {
            resolutions: vec![64, 128],
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRow {
    pub variant: String,
    pub ablation: Ablation,
    pub resolution: usize,
    pub macs_m: f64,
    pub sda_tokens_stage3: u64,
    pub median_s: Option<f64>,
    pub images_per_s: Option<f64>,
    pub iqr_s: Option<f64>,
    /// Time over the baseline model of the same variant at this resolution.
    pub time_ratio_vs_baseline: Option<f64>,
    pub skipped: Option<String>,
    pub trend: Option<Trend>,
}

/// Token count seen by the first stage-3 SDA at `res x res`.
pub fn stage3_tokens(layout: &ModelLayout, res: usize) -> Result<u64> {
    Ok(units(layout, 1, res, res)?
        .iter()
        .flat_map(|u| &u.layers)
        .find(|l| l.kind == LayerKind::Sda && l.path.starts_with("stage3."))
        .map_or(0, |l| (l.input.h * l.input.w) as u64))
}

/// Median time per model and resolution; the high-res-attention variant's
/// gap to the baseline is the quantity of interest.
pub fn exp_resolution_scaling(cfg: &ScalingConfig, protocol: &BenchProtocol, dir: &Path) -> Result<(Report<ScalingRow>, Written)> {
    if let Some(r) = cfg.resolutions.iter().find(|&&r| r < INPUT_ALIGN || r % INPUT_ALIGN != 0) {
        return Err(Error::InvalidResolution(format!("resolution {r} is not a multiple of {INPUT_ALIGN}")));
    }
    let report = Report::new(
        ExperimentKind::ResScaling.id(),
        vec![protocol.clone()],
        reference_values(&["high-res-attention@1024", "b1.latency"]),
    );
    run_and_write(dir, ExperimentKind::ResScaling, report, |report| {
        for &(variant, ablation) in &cfg.models {
            let model = Model::build(&ModelConfig::for_variant(variant), ablation, 0)?;
            let mut prev = None;
            for &res in &cfg.resolutions {
                let macs = count(model.layout(), res, res)?.total_macs;
                let tokens = stage3_tokens(model.layout(), res)?;
                let w = ModelWorkload {
                    model: model.clone(),
                    h: res,
                    w: res,
                };
                let t = time_forward(&w, protocol)?;
                let median = t.timing().map(|t| t.median_s);
                if let (Some(p), Some(m)) = (prev, median) {
                    if m < p {
                        report.notes.push(format!(
                            "warning: {variant}/{ablation} time decreased from {p:.4}s to {m:.4}s at {res}"
                        ));
                    }
                }
                prev = median.or(prev);
                report.rows.push(ScalingRow {
                    variant: variant.name().into(),
                    ablation,
                    resolution: res,
                    macs_m: sig6(macs as f64 / 1e6),
                    sda_tokens_stage3: tokens,
                    median_s: median.map(sig6),
                    images_per_s: t.timing().map(|t| sig6(t.images_per_s)),
                    iqr_s: t.timing().map(|t| sig6(t.iqr_s)),
                    time_ratio_vs_baseline: None,
                    skipped: t.skip_reason().map(str::to_owned),
                    trend: None,
                });
            }
        }
        // Ratios against the same variant's baseline; the published finding is
        // a gap that widens with resolution.
        let rows = report.rows.clone();
        let mut last_ratio: Vec<((String, Ablation), f64)> = Vec::new();
        for r in report.rows.iter_mut().filter(|r| r.ablation != Ablation::Baseline) {
            let base = rows
                .iter()
                .find(|b| b.ablation == Ablation::Baseline && b.variant == r.variant && b.resolution == r.resolution);
            let Some(ratio) = base.and_then(|b| Some(r.median_s? / b.median_s?)) else { continue };
            r.time_ratio_vs_baseline = Some(sig6(ratio));
            let key = (r.variant.clone(), r.ablation);
            let grows = match last_ratio.iter().find(|(k, _)| *k == key) {
                Some((_, prev)) => ratio >= *prev,
                None => true,
            };
            r.trend = Some(Trend::from_bool(ratio > 1.0 && grows));
            last_ratio.retain(|(k, _)| *k != key);
            last_ratio.push((key, ratio));
        }
        for r in report.rows.iter().filter(|r| r.time_ratio_vs_baseline.is_some()) {
            report.notes.push(format!(
                "{}/{} at {}: {:+.1}% time vs baseline",
                r.variant,
                r.ablation,
                r.resolution,
                100.0 * (r.time_ratio_vs_baseline.unwrap() - 1.0)
            ));
        }
        Ok(Vec::new())
    })
}
