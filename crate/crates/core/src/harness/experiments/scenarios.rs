use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::scenario_mac_ratio;
use crate::error::{Error, Result};
use crate::harness::experiments::{run_and_write, ExperimentKind, Trend, Written};
use crate::harness::{time_forward, BenchProtocol, ConvChain};
use crate::io::{reference_values, sig6, Report};

/// `((res_a, ch_a), (res_b, ch_b))` for the seven resolution/channel trades.
pub const SCENARIOS: [((usize, usize), (usize, usize)); 7] = [
    ((224, 24), (28, 196)),
    ((224, 48), (112, 96)),
    ((56, 96), (14, 384)),
    ((112, 96), (28, 384)),
    ((224, 96), (56, 384)),
    ((112, 24), (14, 196)),
    ((224, 48), (56, 196)),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kernel: usize,
    pub depth: usize,
    /// Every resolution is divided by this before timing (must divide all of them).
    pub res_divisor: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kernel: 3,
            depth: 20,
            res_divisor: 1,
        }
    }
}

impl ScenarioConfig {
    /// Resolutions /14 (224 -> 16, 14 -> 1), 2 stacked convs.
    pub fn reduced() -> Self {
        ScenarioConfig {
            kernel: 3,
            depth: 2,
            res_divisor: 14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRow {
    pub scenario: usize,
    pub side: String,
    pub resolution: usize,
    pub channels: usize,
    pub run_resolution: usize,
    pub depth: usize,
    pub macs: u64,
    /// Exact analytic ratio against the other side.
    pub rel_macs: f64,
    pub rel_throughput: Option<f64>,
    pub rel_latency: Option<f64>,
    pub throughput_images_per_s: Option<f64>,
    pub latency_median_s: Option<f64>,
    pub skipped: Option<String>,
    pub trend: Option<Trend>,
}

/// Stacks of identical stride-1 convs at matched MACs, high resolution and
/// few channels (side a) against low resolution and many channels (side b).
pub fn exp_res_vs_channel(cfg: &ScenarioConfig, protocol: &BenchProtocol, dir: &Path) -> Result<(Report<ScenarioRow>, Written)> {
    let d = cfg.res_divisor.max(1);
    for ((ra, _), (rb, _)) in SCENARIOS {
        if ra % d != 0 || rb % d != 0 {
            return Err(Error::InvalidResolution(format!("res_divisor {d} must divide {ra} and {rb}")));
        }
    }
    let latency = protocol.latency_companion();
    let report = Report::new(
        ExperimentKind::ResVsChannel.id(),
        vec![protocol.clone(), latency.clone()],
        reference_values(&["scenario"]),
    );
    run_and_write(dir, ExperimentKind::ResVsChannel, report, |report| {
        for (i, &((ra, ca), (rb, cb))) in SCENARIOS.iter().enumerate() {
            let sides = [("a", ra, ca), ("b", rb, cb)];
            let mut measured = Vec::new();
            let mut macs = Vec::new();
            for &(_, res, ch) in &sides {
                let chain = ConvChain::stack(ch, cfg.kernel, cfg.depth, res / d, (i * 2) as u64)?;
                macs.push(chain.costs(1)?.iter().map(|l| l.macs).sum::<u64>());
                let thr = time_forward(&chain, protocol)?;
                let lat = time_forward(&chain, &latency)?;
                measured.push((thr, lat));
            }
            let counted = macs[0] as f64 / macs[1] as f64;
            let closed = scenario_mac_ratio(ra, ca, rb, cb, cfg.kernel, cfg.depth);
            if (counted - closed).abs() > 1e-12 {
                return Err(Error::Report(format!(
                    "scenario {}: counted MAC ratio {counted} != closed form {closed}",
                    i + 1
                )));
            }
            for (s, &(side, res, ch)) in sides.iter().enumerate() {
                let o = 1 - s;
                let (thr, lat) = &measured[s];
                let (othr, olat) = &measured[o];
                let rel_thr = thr.timing().zip(othr.timing()).map(|(a, b)| sig6(a.images_per_s / b.images_per_s));
                let rel_lat = lat.timing().zip(olat.timing()).map(|(a, b)| sig6(a.median_s / b.median_s));
                let skipped = [thr, lat, othr, olat].iter().find_map(|x| x.skip_reason()).map(str::to_owned);
                // Published finding: high resolution with few channels runs slower at equal MACs.
                let trend = rel_thr.map(|r| Trend::from_bool(if s == 0 { r < 1.0 } else { r > 1.0 }));
                report.rows.push(ScenarioRow {
                    scenario: i + 1,
                    side: side.to_string(),
                    resolution: res,
                    channels: ch,
                    run_resolution: res / d,
                    depth: cfg.depth,
                    macs: macs[s],
                    rel_macs: if s == 0 { counted } else { macs[1] as f64 / macs[0] as f64 },
                    rel_throughput: rel_thr,
                    rel_latency: rel_lat,
                    throughput_images_per_s: thr.timing().map(|t| sig6(t.images_per_s)),
                    latency_median_s: lat.timing().map(|t| sig6(t.median_s)),
                    skipped,
                    trend,
                });
            }
        }
        Ok(Vec::new())
    })
}
