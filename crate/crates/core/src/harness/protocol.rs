use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Median,
}

/// Batch size, warm-up and timed iteration counts for one measurement.
/// Wall time is taken from the monotonic clock (`std::time::Instant`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchProtocol {
    pub name: String,
    pub batch: usize,
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub reducer: Reducer,
    /// Worker threads for the kernels; `None` keeps the ambient pool.
    pub threads: Option<usize>,
    pub clock: String,
    /// Estimated peak bytes per cell above which the cell is skipped.
    pub mem_cap_bytes: Option<u64>,
}

impl BenchProtocol {
    fn preset(name: &str, batch: usize, warmup_iters: usize, timed_iters: usize) -> Self {
        BenchProtocol {
            name: name.to_string(),
            batch,
            warmup_iters,
            timed_iters,
            reducer: Reducer::Median,
            threads: None,
            clock: "monotonic".to_string(),
            mem_cap_bytes: None,
        }
    }

    /// Batch 200, 5 warm-up, median of 100.
    pub fn throughput() -> Self {
        Self::preset("throughput", 200, 5, 100)
    }

    /// Batch 16, 5 warm-up, median of 400.
    pub fn latency() -> Self {
        Self::preset("latency", 16, 5, 400)
    }

    /// Small throughput-style run: batch 8, 1 warm-up, median of 10.
    pub fn reduced() -> Self {
        Self::preset("reduced", 8, 1, 10)
    }

    /// Small latency-style run: batch 1, 1 warm-up, median of 10.
    pub fn reduced_latency() -> Self {
        Self::preset("reduced-latency", 1, 1, 10)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "throughput" => Ok(Self::throughput()),
            "latency" => Ok(Self::latency()),
            "reduced" => Ok(Self::reduced()),
            "reduced-latency" => Ok(Self::reduced_latency()),
            other => Err(Error::InvalidParams(format!(
                "unknown protocol '{other}' (throughput, latency, reduced, reduced-latency)"
            ))),
        }
    }

    /// Latency counterpart used by experiments that report both metrics.
    pub fn latency_companion(&self) -> Self {
        let mut p = match self.name.as_str() {
            "reduced" | "reduced-latency" => Self::reduced_latency(),
            _ => Self::latency(),
        };
        p.threads = self.threads;
        p.mem_cap_bytes = self.mem_cap_bytes;
        p
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_mem_cap(mut self, bytes: Option<u64>) -> Self {
        self.mem_cap_bytes = bytes;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_iters(mut self, warmup_iters: usize, timed_iters: usize) -> Self {
        self.warmup_iters = warmup_iters;
        self.timed_iters = timed_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.timed_iters == 0 {
            return Err(Error::InvalidParams("protocol needs batch >= 1 and timed_iters >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParams("threads must be >= 1".into()));
        }
        Ok(())
    }
}
