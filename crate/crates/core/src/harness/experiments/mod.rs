//! The four execution-time studies. Each produces a [`Report`] whose rows
//! carry measured times next to analytic MACs; published numbers travel
//! separately in `paper_reference_values`.

mod grid;
mod scaling;
mod scenarios;
mod toy;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use grid::{exp_fused_grid, GridCell, GridConfig, GridResult};
pub use scaling::{exp_resolution_scaling, ScalingConfig, ScalingRow};
pub use scenarios::{exp_res_vs_channel, ScenarioConfig, ScenarioRow, SCENARIOS};
pub use toy::{exp_depthwise_toy, toy_pair_ratio, ToyConfig, ToyRow};

use crate::error::{Error, Result};
use crate::harness::BenchProtocol;
use crate::io::{write_heatmaps, Heatmap, Report};

/// Whether a measured trend agrees with the published qualitative finding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Consistent,
    Inconsistent,
}

impl Trend {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Trend::Consistent
        } else {
            Trend::Inconsistent
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Depthwise,
    FusedGrid,
    ResVsChannel,
    ResScaling,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Depthwise,
        ExperimentKind::FusedGrid,
        ExperimentKind::ResVsChannel,
        ExperimentKind::ResScaling,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Depthwise => "depthwise",
            ExperimentKind::FusedGrid => "fused-grid",
            ExperimentKind::ResVsChannel => "res-vs-channel",
            ExperimentKind::ResScaling => "res-scaling",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.id() == s).ok_or_else(|| {
            Error::InvalidParams(format!(
                "unknown experiment '{s}' (depthwise, fused-grid, res-vs-channel, res-scaling)"
            ))
        })
    }
}

/// Files written for one experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Writes `<id>.json` marked incomplete, runs `body`, then writes the final
/// JSON, the CSV mirror and any heatmaps. On error the incomplete JSON stays.
pub fn run_and_write<R, F>(dir: &Path, kind: ExperimentKind, mut report: Report<R>, body: F) -> Result<(Report<R>, Written)>
where
    R: Serialize,
    F: FnOnce(&mut Report<R>) -> Result<Vec<Heatmap>>,
{
    std::fs::create_dir_all(dir)?;
    let json = dir.join(format!("{}.json", kind.id()));
    let csv = dir.join(format!("{}.csv", kind.id()));
    report.complete = false;
    report.write_json(&json)?;
    let heatmaps = body(&mut report)?;
    report.write_csv(&csv)?;
    let svg = if heatmaps.is_empty() {
        None
    } else {
        let p = dir.join(format!("{}.svg", kind.id()));
        write_heatmaps(&heatmaps, &p)?;
        Some(p)
    };
    report.complete = true;
    report.write_json(&json)?;
    Ok((report, Written { json, csv, svg }))
}

/// Settings shared by every experiment command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub protocol: BenchProtocol,
    /// Small grids and sizes that finish in minutes.
    pub reduced: bool,
}

/// Run one experiment with default (or reduced) configuration into `dir`.
pub fn run_experiment(kind: ExperimentKind, settings: &RunSettings, dir: &Path) -> Result<Written> {
    let p = &settings.protocol;
    let r = settings.reduced;
    Ok(match kind {
        ExperimentKind::Depthwise => {
            let cfg = if r { ToyConfig::reduced() } else { ToyConfig::default() };
            exp_depthwise_toy(&cfg, p, dir)?.1
        }
        ExperimentKind::FusedGrid => {
            let cfg = if r { GridConfig::reduced() } else { GridConfig::default() };
            exp_fused_grid(&cfg, p, dir)?.1
        }
        ExperimentKind::ResVsChannel => {
            let cfg = if r { ScenarioConfig::reduced() } else { ScenarioConfig::default() };
            exp_res_vs_channel(&cfg, p, dir)?.1
        }
        ExperimentKind::ResScaling => {
            let cfg = if r { ScalingConfig::reduced() } else { ScalingConfig::default() };
            exp_resolution_scaling(&cfg, p, dir)?.1
        }
    })
}

/// Relative error `(got - want) / want`.
pub fn rel_delta(got: f64, want: f64) -> f64 {
    (got - want) / want
}
