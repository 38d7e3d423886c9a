//! Published reference numbers, shipped as static data. They are only ever
//! emitted under `paper_reference_values`, never mixed into measured rows.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValue {
    pub key: String,
    pub value: f64,
    pub unit: String,
    pub source: String,
}

/// (key, value, unit, source).
type Entry = (&'static str, f64, &'static str, &'static str);

const RESULTS: &str = "results table (GPU, 224 unless noted)";
const ABLATION: &str = "B1 ablation table";
const TOY: &str = "depthwise vs standard toy table";
const SCENARIO: &str = "resolution vs channel table";
const SCALING: &str = "resolution scaling discussion";

/// Variant -> (MACs in M, params in M) at 224.
pub const ARCHITECTURE_TARGETS: [(&str, f64, f64); 5] = [
    ("b0", 944.0, 14.1),
    ("b1", 1410.0, 17.9),
    ("b1.5", 2573.0, 33.9),
    ("b2", 3689.0, 45.0),
    ("b3", 6098.0, 57.1),
];

/// Toy model id -> MACs in M.
pub const TOY_MAC_TARGETS: [f64; 6] = [887.0, 207.0, 2734.0, 750.0, 5270.0, 809.0];

const TABLE: &[Entry] = &[
    ("b0.macs", 944.0, "M", RESULTS),
    ("b0.params", 14.1, "M", RESULTS),
    ("b0.throughput", 5988.0, "images/s", RESULTS),
    ("b0.latency", 0.30, "ms", RESULTS),
    ("b1.macs", 1410.0, "M", RESULTS),
    ("b1.params", 17.9, "M", RESULTS),
    ("b1.throughput", 4237.0, "images/s", RESULTS),
    ("b1.latency", 0.43, "ms", RESULTS),
    ("b1@256.macs", 1843.0, "M", RESULTS),
    ("b1@256.throughput", 3378.0, "images/s", RESULTS),
    ("b1@256.latency", 0.48, "ms", RESULTS),
    ("b1.5.macs", 2573.0, "M", RESULTS),
    ("b1.5.params", 33.9, "M", RESULTS),
    ("b1.5.throughput", 2739.0, "images/s", RESULTS),
    ("b1.5.latency", 0.66, "ms", RESULTS),
    ("b2.macs", 3689.0, "M", RESULTS),
    ("b2.params", 45.0, "M", RESULTS),
    ("b2.throughput", 2227.0, "images/s", RESULTS),
    ("b2.latency", 0.88, "ms", RESULTS),
    ("b3@192.macs", 4479.0, "M", RESULTS),
    ("b3@192.throughput", 1562.0, "images/s", RESULTS),
    ("b3@192.latency", 1.24, "ms", RESULTS),
    ("b3.macs", 6098.0, "M", RESULTS),
    ("b3.params", 57.1, "M", RESULTS),
    ("b3.throughput", 1162.0, "images/s", RESULTS),
    ("b3.latency", 1.55, "ms", RESULTS),
    ("ablation.unfused-mbconv.macs", 716.0, "M", ABLATION),
    ("ablation.unfused-mbconv.params", 12.4, "M", ABLATION),
    ("ablation.unfused-mbconv.throughput", 3558.0, "images/s", ABLATION),
    ("ablation.unfused-mbconv.latency", 0.43, "ms", ABLATION),
    ("ablation.attention-removed.macs", 1643.0, "M", ABLATION),
    ("ablation.attention-removed.params", 14.46, "M", ABLATION),
    ("ablation.attention-removed.throughput", 4098.0, "images/s", ABLATION),
    ("ablation.attention-removed.latency", 0.41, "ms", ABLATION),
    ("ablation.high-res-attention.macs", 1494.0, "M", ABLATION),
    ("ablation.high-res-attention.params", 17.65, "M", ABLATION),
    ("ablation.high-res-attention.throughput", 3759.0, "images/s", ABLATION),
    ("ablation.high-res-attention.latency", 0.47, "ms", ABLATION),
    ("ablation.baseline.macs", 1410.0, "M", ABLATION),
    ("ablation.baseline.params", 17.94, "M", ABLATION),
    ("ablation.baseline.throughput", 4237.0, "images/s", ABLATION),
    ("ablation.baseline.latency", 0.43, "ms", ABLATION),
    ("toy1.macs", 887.0, "M", TOY),
    ("toy1.throughput", 5263.0, "images/s", TOY),
    ("toy1.cpu_latency", 7.22, "ms", TOY),
    ("toy1.gpu_latency", 0.26, "ms", TOY),
    ("toy2.macs", 207.0, "M", TOY),
    ("toy2.throughput", 5025.0, "images/s", TOY),
    ("toy2.cpu_latency", 10.05, "ms", TOY),
    ("toy2.gpu_latency", 0.24, "ms", TOY),
    ("toy3.macs", 2734.0, "M", TOY),
    ("toy3.throughput", 2617.0, "images/s", TOY),
    ("toy3.cpu_latency", 15.36, "ms", TOY),
    ("toy3.gpu_latency", 0.51, "ms", TOY),
    ("toy4.macs", 750.0, "M", TOY),
    ("toy4.throughput", 2624.0, "images/s", TOY),
    ("toy4.cpu_latency", 20.20, "ms", TOY),
    ("toy4.gpu_latency", 0.45, "ms", TOY),
    ("toy5.macs", 5270.0, "M", TOY),
    ("toy5.throughput", 1886.0, "images/s", TOY),
    ("toy5.cpu_latency", 22.32, "ms", TOY),
    ("toy5.gpu_latency", 0.74, "ms", TOY),
    ("toy6.macs", 809.0, "M", TOY),
    ("toy6.throughput", 1805.0, "images/s", TOY),
    ("toy6.cpu_latency", 25.84, "ms", TOY),
    ("toy6.gpu_latency", 0.65, "ms", TOY),
    ("scenario1.a.rel_throughput", 0.3, "x", SCENARIO),
    ("scenario1.a.rel_latency", 2.7, "x", SCENARIO),
    ("scenario1.b.rel_throughput", 3.3, "x", SCENARIO),
    ("scenario1.b.rel_latency", 0.37, "x", SCENARIO),
    ("scenario2.a.rel_throughput", 0.5, "x", SCENARIO),
    ("scenario2.a.rel_latency", 1.88, "x", SCENARIO),
    ("scenario2.b.rel_throughput", 1.9, "x", SCENARIO),
    ("scenario2.b.rel_latency", 0.53, "x", SCENARIO),
    ("scenario3.a.rel_throughput", 0.5, "x", SCENARIO),
    ("scenario3.a.rel_latency", 1.5, "x", SCENARIO),
    ("scenario3.b.rel_throughput", 2.2, "x", SCENARIO),
    ("scenario3.b.rel_latency", 0.67, "x", SCENARIO),
    ("scenario4.a.rel_throughput", 0.6, "x", SCENARIO),
    ("scenario4.a.rel_latency", 1.91, "x", SCENARIO),
    ("scenario4.b.rel_throughput", 1.8, "x", SCENARIO),
    ("scenario4.b.rel_latency", 0.52, "x", SCENARIO),
    ("scenario5.a.rel_throughput", 0.5, "x", SCENARIO),
    ("scenario5.a.rel_latency", 2.16, "x", SCENARIO),
    ("scenario5.b.rel_throughput", 1.9, "x", SCENARIO),
    ("scenario5.b.rel_latency", 0.46, "x", SCENARIO),
    ("scenario6.a.rel_throughput", 0.3, "x", SCENARIO),
    ("scenario6.a.rel_latency", 2.3, "x", SCENARIO),
    ("scenario6.b.rel_throughput", 3.3, "x", SCENARIO),
    ("scenario6.b.rel_latency", 0.44, "x", SCENARIO),
    ("scenario7.a.rel_throughput", 0.5, "x", SCENARIO),
    ("scenario7.a.rel_latency", 1.15, "x", SCENARIO),
    ("scenario7.b.rel_throughput", 2.0, "x", SCENARIO),
    ("scenario7.b.rel_latency", 0.87, "x", SCENARIO),
    ("scenario.rel_macs", 1.0, "x", SCENARIO),
    ("high-res-attention@1024.latency_increase", 0.70, "fraction", SCALING),
];

fn to_value(e: &Entry) -> ReferenceValue {
    ReferenceValue {
        key: e.0.to_string(),
        value: e.1,
        unit: e.2.to_string(),
        source: e.3.to_string(),
    }
}

/// All entries whose key starts with one of `prefixes`.
pub fn reference_values(prefixes: &[&str]) -> Vec<ReferenceValue> {
    TABLE
        .iter()
        .filter(|e| prefixes.iter().any(|p| e.0.starts_with(p)))
        .map(to_value)
        .collect()
}

pub fn find_reference(key: &str) -> Option<f64> {
    TABLE.iter().find(|e| e.0 == key).map(|e| e.1)
}

/// Reference MACs/params (M) for a variant and ablation at 224, if published.
pub fn architecture_reference(variant: &str, ablation: &str) -> Option<(f64, f64)> {
    let prefix = if ablation == "baseline" {
        variant.to_string()
    } else if variant == "b1" {
        format!("ablation.{ablation}")
    } else {
        return None;
    };
    Some((find_reference(&format!("{prefix}.macs"))?, find_reference(&format!("{prefix}.params"))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert_eq!(architecture_reference("b1", "baseline"), Some((1410.0, 17.9)));
        assert_eq!(architecture_reference("b1", "unfused-mbconv"), Some((716.0, 12.4)));
        assert_eq!(architecture_reference("b2", "unfused-mbconv"), None);
        for (v, m, p) in ARCHITECTURE_TARGETS {
            assert_eq!(architecture_reference(v, "baseline"), Some((m, p)));
        }
        for (i, m) in TOY_MAC_TARGETS.iter().enumerate() {
            assert_eq!(find_reference(&format!("toy{}.macs", i + 1)), Some(*m));
        }
        assert_eq!(reference_values(&["scenario1."]).len(), 4);
    }
}
