use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::BenchProtocol;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Something whose forward pass can be timed.
pub trait Workload: Sync {
    fn input_shape(&self, batch: usize) -> Shape;
    /// Estimated peak bytes (weights plus live activations) at `batch`.
    fn memory_bytes(&self, batch: usize) -> u64;
    fn run(&self, input: &Tensor) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub batch: usize,
    pub median_s: f64,
    pub images_per_s: f64,
    pub iqr_s: f64,
    pub samples_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Measured(Timing),
    Skipped(String),
}

impl Outcome {
    pub fn timing(&self) -> Option<&Timing> {
        match self {
            Outcome::Measured(t) => Some(t),
            Outcome::Skipped(_) => None,
        }
    }

    pub fn skip_reason(&self) -> Option<&str> {
        match self {
            Outcome::Measured(_) => None,
            Outcome::Skipped(r) => Some(r),
        }
    }
}

/// Median of a non-empty sample.
pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

/// Linear-interpolated quantile.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn random_input(shape: Shape, seed: u64) -> Tensor {
    let data = Rng::new(seed).fill_uniform(shape.numel(), 1.0);
    Tensor::new(shape, data).expect("length matches shape")
}

/// Warm up, then time `timed_iters` forwards and reduce by median.
pub fn time_forward(w: &dyn Workload, p: &BenchProtocol) -> Result<Outcome> {
    p.validate()?;
    let need = w.memory_bytes(p.batch);
    if let Some(cap) = p.mem_cap_bytes {
        if need > cap {
            return Ok(Outcome::Skipped(format!("memory cap: needs ~{need} bytes, cap {cap}")));
        }
    }
    let input = random_input(w.input_shape(p.batch), 0);
    let body = || -> Result<Vec<f64>> {
        for _ in 0..p.warmup_iters {
            w.run(&input)?;
        }
        let mut samples = Vec::with_capacity(p.timed_iters);
        for _ in 0..p.timed_iters {
            let t = Instant::now();
            w.run(&input)?;
            samples.push(t.elapsed().as_secs_f64());
        }
        Ok(samples)
    };
    let samples = match p.threads {
        Some(n) => crate::par::with_threads(n, body)?,
        None => body()?,
    };
    let median_s = median(&samples);
    Ok(Outcome::Measured(Timing {
        batch: p.batch,
        median_s,
        images_per_s: p.batch as f64 / median_s,
        iqr_s: quantile(&samples, 0.75) - quantile(&samples, 0.25),
        samples_s: samples,
    }))
}

/// Test stub with a fixed cost per forward.
#[derive(Clone, Debug)]
pub struct SleepWorkload {
    pub per_iter: Duration,
    pub bytes: u64,
}

impl Workload for SleepWorkload {
    fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, 1, 1, 1)
    }

    fn memory_bytes(&self, _batch: usize) -> u64 {
        self.bytes
    }

    fn run(&self, _input: &Tensor) -> Result<()> {
        std::thread::sleep(self.per_iter);
        Ok(())
    }
}
