use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::experiments::{rel_delta, run_and_write, ExperimentKind, Trend, Written};
use crate::harness::{time_forward, BenchProtocol, ToySpec};
use crate::io::{reference_values, sig6, Report, TOY_MAC_TARGETS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Resolution the MAC targets refer to.
    pub reference_res: usize,
    /// Resolution actually timed.
    pub run_res: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            reference_res: 224,
            run_res: 224,
        }
    }
}

impl ToyConfig {
    pub fn reduced() -> Self {
        ToyConfig {
            reference_res: 224,
            run_res: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyRow {
    pub model: usize,
    pub pair: usize,
    pub channels: String,
    pub depthwise: bool,
    pub macs_m: f64,
    pub target_macs_m: f64,
    pub macs_delta: f64,
    pub run_res: usize,
    pub run_macs_m: f64,
    pub throughput_images_per_s: Option<f64>,
    pub throughput_median_s: Option<f64>,
    pub latency_median_s: Option<f64>,
    pub skipped: Option<String>,
    pub trend: Option<Trend>,
    pub trend_note: Option<String>,
}

/// Reconstructed MAC ratio of toy #1 over toy #2 at the reference resolution.
pub fn toy_pair_ratio(reference_res: usize) -> Result<f64> {
    let set = ToySpec::published_set();
    Ok(set[0].macs(reference_res)? as f64 / set[1].macs(reference_res)? as f64)
}

/// Six toy networks (three standard/depthwise pairs), timed under
/// `protocol` and its latency companion.
pub fn exp_depthwise_toy(cfg: &ToyConfig, protocol: &BenchProtocol, dir: &Path) -> Result<(Report<ToyRow>, Written)> {
    let latency = protocol.latency_companion();
    let report = Report::new(
        ExperimentKind::Depthwise.id(),
        vec![protocol.clone(), latency.clone()],
        reference_values(&["toy"]),
    );
    run_and_write(dir, ExperimentKind::Depthwise, report, |report| {
        for spec in ToySpec::published_set() {
            let macs = spec.macs(cfg.reference_res)? as f64 / 1e6;
            let target = TOY_MAC_TARGETS[spec.id - 1];
            let net = spec.build(cfg.run_res, spec.id as u64)?;
            let thr = time_forward(&net, protocol)?;
            let lat = time_forward(&net, &latency)?;
            let skipped = thr.skip_reason().or(lat.skip_reason()).map(str::to_owned);
            report.rows.push(ToyRow {
                model: spec.id,
                pair: spec.id.div_ceil(2),
                channels: spec.channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-"),
                depthwise: spec.depthwise,
                macs_m: sig6(macs),
                target_macs_m: target,
                macs_delta: sig6(rel_delta(macs, target)),
                run_res: cfg.run_res,
                run_macs_m: sig6(spec.macs(cfg.run_res)? as f64 / 1e6),
                throughput_images_per_s: thr.timing().map(|t| sig6(t.images_per_s)),
                throughput_median_s: thr.timing().map(|t| sig6(t.median_s)),
                latency_median_s: lat.timing().map(|t| sig6(t.median_s)),
                skipped,
                trend: None,
                trend_note: None,
            });
        }
        // Depthwise rows: the published finding is that far fewer MACs do not
        // buy a matching speed-up.
        for i in (0..report.rows.len()).step_by(2) {
            let (std_row, dw_row) = (&report.rows[i], &report.rows[i + 1]);
            if let (Some(ts), Some(td)) = (std_row.throughput_median_s, dw_row.throughput_median_s) {
                let mac_ratio = dw_row.run_macs_m / std_row.run_macs_m;
                let time_ratio = td / ts;
                let note = format!(
                    "depthwise uses {:.2}x the MACs and {:.2}x the time of its standard pair",
                    mac_ratio, time_ratio
                );
                let trend = Trend::from_bool(time_ratio > mac_ratio);
                report.rows[i + 1].trend = Some(trend);
                report.rows[i + 1].trend_note = Some(note);
            }
        }
        let ratio = toy_pair_ratio(cfg.reference_res)?;
        let target = TOY_MAC_TARGETS[0] / TOY_MAC_TARGETS[1];
        report.notes.push(format!(
            "toy #1/#2 MAC ratio: reconstructed {:.3}, published {:.3}, delta {:+.1}%",
            ratio,
            target,
            100.0 * rel_delta(ratio, target)
        ));
        for r in &report.rows {
            report.notes.push(format!(
                "toy #{}: {:.1}M MACs vs published {:.0}M ({:+.1}%)",
                r.model,
                r.macs_m,
                r.target_macs_m,
                100.0 * r.macs_delta
            ));
        }
        Ok(Vec::new())
    })
}
