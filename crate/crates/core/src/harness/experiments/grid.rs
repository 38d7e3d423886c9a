use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::{mbconv_costs, mbconv_mac_ratio};
use crate::blocks::MbConvSpec;
use crate::error::{Error, Result};
use crate::harness::experiments::{run_and_write, ExperimentKind, Trend, Written};
use crate::harness::{time_forward, BenchProtocol, MbConvWorkload};
use crate::io::{sig6, Heatmap, Report};
use crate::tensor::Shape;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub channels: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub expansions: Vec<usize>,
    /// Cells with channels <= .0 and resolution <= .1 are not run.
    pub omit_corner: Option<(usize, usize)>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            channels: vec![64, 128, 256, 512, 768, 1024],
            resolutions: vec![28, 56, 112, 224],
            expansions: vec![4, 6],
            omit_corner: Some((64, 28)),
        }
    }
}

impl GridConfig {
    pub fn reduced() -> Self {
        GridConfig {
            channels: vec![64, 128],
            resolutions: vec![28, 56],
            ..Self::default()
        }
    }

    fn omitted(&self, c: usize, res: usize) -> bool {
        self.omit_corner.is_some_and(|(mc, mr)| c <= mc && res <= mr)
    }
}

/// One (expansion, channels, resolution) cell: fused over unfused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub expansion: usize,
    pub channels: usize,
    pub resolution: usize,
    pub macs_fused: u64,
    pub macs_unfused: u64,
    /// Exact (not rounded): must equal the closed form to 1e-12.
    pub ratio_macs: f64,
    pub time_fused_s: Option<f64>,
    pub time_unfused_s: Option<f64>,
    pub ratio_time: Option<f64>,
    pub skipped: Option<String>,
    pub trend: Option<Trend>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub channels: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn cell(&self, e: usize, c: usize, res: usize) -> Option<&GridCell> {
        self.cells.iter().find(|x| x.expansion == e && x.channels == c && x.resolution == res)
    }

    /// Time-ratio and MAC-ratio panels for one expansion factor.
    pub fn heatmaps(&self, e: usize) -> Vec<Heatmap> {
        let panel = |title: String, f: &dyn Fn(&GridCell) -> Option<f64>| Heatmap {
            title,
            row_label: "channels".into(),
            col_label: "resolution".into(),
            rows: self.channels.iter().map(|c| c.to_string()).collect(),
            cols: self.resolutions.iter().map(|r| r.to_string()).collect(),
            values: self
                .channels
                .iter()
                .map(|&c| self.resolutions.iter().map(|&r| self.cell(e, c, r).and_then(f)).collect())
                .collect(),
        };
        vec![
            panel(format!("fused / unfused time, e={e}"), &|x| x.ratio_time),
            panel(format!("fused / unfused MACs, e={e}"), &|x| {
                x.skipped.is_none().then_some(x.ratio_macs)
            }),
        ]
    }
}

fn block_macs(spec: &MbConvSpec, res: usize) -> Result<u64> {
    Ok(mbconv_costs(spec, "block", Shape::new(1, spec.in_ch, res, res))?.iter().map(|l| l.macs).sum())
}

/// Single stride-1 `C -> C` MBConv, fused vs unfused, over the grid.
pub fn exp_fused_grid(cfg: &GridConfig, protocol: &BenchProtocol, dir: &Path) -> Result<(GridResult, Written)> {
    if cfg.channels.is_empty() || cfg.resolutions.is_empty() || cfg.expansions.is_empty() {
        return Err(Error::InvalidParams("fused grid needs channels, resolutions and expansions".into()));
    }
    let report: Report<GridCell> = Report::new(ExperimentKind::FusedGrid.id(), vec![protocol.clone()], Vec::new());
    let mut result = GridResult {
        channels: cfg.channels.clone(),
        resolutions: cfg.resolutions.clone(),
        cells: Vec::new(),
    };
    let (_, written) = run_and_write(dir, ExperimentKind::FusedGrid, report, |report| {
        for &e in &cfg.expansions {
            for &c in &cfg.channels {
                for &res in &cfg.resolutions {
                    let fused = MbConvSpec::new(c, c, e, 1, true)?;
                    let unfused = MbConvSpec::new(c, c, e, 1, false)?;
                    let (mf, mu) = (block_macs(&fused, res)?, block_macs(&unfused, res)?);
                    let ratio_macs = mf as f64 / mu as f64;
                    let closed = mbconv_mac_ratio(c, e);
                    if (ratio_macs - closed).abs() > 1e-12 {
                        return Err(Error::Report(format!(
                            "C={c} e={e}: counted MAC ratio {ratio_macs} != closed form {closed}"
                        )));
                    }
                    let mut cell = GridCell {
                        expansion: e,
                        channels: c,
                        resolution: res,
                        macs_fused: mf,
                        macs_unfused: mu,
                        ratio_macs,
                        time_fused_s: None,
                        time_unfused_s: None,
                        ratio_time: None,
                        skipped: None,
                        trend: None,
                    };
                    if cfg.omitted(c, res) {
                        cell.skipped = Some("omitted corner".into());
                    } else {
                        let tf = time_forward(&MbConvWorkload::new(fused, res, 1)?, protocol)?;
                        let tu = time_forward(&MbConvWorkload::new(unfused, res, 1)?, protocol)?;
                        match (tf.timing(), tu.timing()) {
                            (Some(f), Some(u)) => {
                                let rt = f.median_s / u.median_s;
                                cell.time_fused_s = Some(sig6(f.median_s));
                                cell.time_unfused_s = Some(sig6(u.median_s));
                                cell.ratio_time = Some(sig6(rt));
                                // Published finding: fused is faster in many cells despite more MACs.
                                cell.trend = Some(Trend::from_bool(rt < 1.0));
                            }
                            _ => cell.skipped = tf.skip_reason().or(tu.skip_reason()).map(str::to_owned),
                        }
                    }
                    report.rows.push(cell.clone());
                    result.cells.push(cell);
                }
            }
            let measured: Vec<&GridCell> = result.cells.iter().filter(|x| x.expansion == e && x.ratio_time.is_some()).collect();
            let faster = measured.iter().filter(|x| x.trend == Some(Trend::Consistent)).count();
            let cheaper_than_macs = measured.iter().filter(|x| x.ratio_time.unwrap() < x.ratio_macs).count();
            report.notes.push(format!(
                "e={e}: fused faster in {faster}/{} measured cells; time ratio below MAC ratio in {cheaper_than_macs}/{}",
                measured.len(),
                measured.len()
            ));
        }
        Ok(cfg.expansions.iter().flat_map(|&e| result.heatmaps(e)).collect())
    })?;
    Ok((result, written))
}
