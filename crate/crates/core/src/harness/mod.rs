//! Execution-time measurement and the hardware-efficiency studies.

pub mod experiments;
mod protocol;
mod timing;
mod workloads;

pub use protocol::{BenchProtocol, Reducer};
pub use timing::{median, quantile, random_input, time_forward, Outcome, SleepWorkload, Timing, Workload};
pub use workloads::{activation_bytes, ConvChain, MbConvWorkload, ModelWorkload, ToySpec, TOY_DEPTHS};
