//! `lowformer` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lowformer::analyzer;
use lowformer::harness::experiments::{run_experiment, ExperimentKind, RunSettings};
use lowformer::harness::{random_input, time_forward, BenchProtocol, ModelWorkload, Outcome};
use lowformer::io::{architecture_reference, reference_values, sig6, Report, WeightFile};
use lowformer::model::{format_table, Ablation, Model, ModelConfig, Variant, INPUT_ALIGN};
use lowformer::par::with_threads;
use lowformer::rng::fnv1a;
use lowformer::{Shape, Tensor};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lowformer", version, about = "LowFormer backbone inference, MAC analysis and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the block-level layer table.
    Describe(DescribeArgs),
    /// Run one forward pass and print a logits summary.
    Forward(ForwardArgs),
    /// Count MACs and parameters.
    Macs(MacsArgs),
    /// Time full-model forward passes.
    Bench(BenchArgs),
    /// Run one of the execution-time studies.
    Experiment(ExperimentArgs),
    /// Write seeded weights to a file.
    ExportWeights(ExportArgs),
    /// Load a weight file into a model and run it.
    ImportWeights(ImportArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value = "b1", value_parser = parse_variant)]
    variant: Variant,
    /// JSON model configuration; overrides --variant.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "baseline", value_parser = parse_ablation)]
    ablation: Ablation,
    /// Square input resolution (multiple of 32).
    #[arg(long, default_value_t = 224, value_parser = parse_res)]
    res: usize,
}

#[derive(Args, Debug)]
struct ThreadArgs {
    /// Kernel worker threads.
    #[arg(long, env = "LOWFORMER_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
}

impl ThreadArgs {
    fn get(&self) -> Option<usize> {
        self.threads.map(|t| t as usize)
    }
}

#[derive(Args, Debug)]
struct DescribeArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InputKind {
    Zeros,
    Random,
}

#[derive(Args, Debug)]
struct ForwardArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "zeros")]
    input: InputKind,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    batch: u32,
    #[command(flatten)]
    threads: ThreadArgs,
}

#[derive(Args, Debug)]
struct MacsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the full per-layer report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "throughput", value_parser = parse_protocol)]
    protocol: BenchProtocol,
    /// Override the protocol's batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Override timed iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    threads: ThreadArgs,
    #[arg(long)]
    mem_cap: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// depthwise, fused-grid, res-vs-channel or res-scaling
    #[arg(value_parser = parse_experiment)]
    kind: ExperimentKind,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `throughput`, or `reduced` with --reduced.
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<BenchProtocol>,
    #[command(flatten)]
    threads: ThreadArgs,
    #[arg(long)]
    mem_cap: Option<u64>,
    /// Small grid and sizes that finish in minutes.
    #[arg(long)]
    reduced: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value = "zeros")]
    input: InputKind,
    #[command(flatten)]
    threads: ThreadArgs,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: lowformer::Error| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: lowformer::Error| e.to_string())
}

fn parse_experiment(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: lowformer::Error| e.to_string())
}

fn parse_protocol(s: &str) -> Result<BenchProtocol, String> {
    BenchProtocol::by_name(s).map_err(|e| e.to_string())
}

fn parse_res(s: &str) -> Result<usize, String> {
    let r: usize = s.parse().map_err(|_| format!("'{s}' is not a resolution"))?;
    if r == 0 || r % INPUT_ALIGN != 0 {
        return Err(format!("resolution must be a positive multiple of {INPUT_ALIGN}, got {r}"));
    }
    Ok(r)
}

impl ModelArgs {
    fn config(&self) -> lowformer::Result<ModelConfig> {
        match &self.config {
            Some(path) => {
                let cfg: ModelConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                cfg.validate()?;
                Ok(cfg)
            }
            None => Ok(ModelConfig::for_variant(self.variant)),
        }
    }

    fn build(&self, seed: u64) -> lowformer::Result<Model> {
        Model::build(&self.config()?, self.ablation, seed)
    }
}

fn input(kind: InputKind, shape: Shape, seed: u64) -> Tensor {
    match kind {
        InputKind::Zeros => Tensor::zeros(shape),
        InputKind::Random => random_input(shape, seed),
    }
}

fn maybe_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(t) => with_threads(t, f),
        None => f(),
    }
}

fn checksum(t: &Tensor) -> u64 {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fnv1a(&bytes)
}

fn print_logits(y: &Tensor) {
    let s = y.shape();
    let (min, max) = y.data().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!("shape ({}, {}, {}, {})", s.n, s.c, s.h, s.w);
    println!("min {min:.6e} max {max:.6e} finite {}", y.is_finite());
    println!("checksum fnv1a:{:016x}", checksum(y));
}

fn describe(a: &DescribeArgs) -> lowformer::Result<()> {
    let m = a.model.build(0)?;
    let rows = m.describe(a.model.res, a.model.res)?;
    print!("{}", format_table(&rows));
    Ok(())
}

fn forward(a: &ForwardArgs) -> lowformer::Result<()> {
    let m = a.model.build(a.seed)?;
    let x = input(a.input, Shape::new(a.batch as usize, m.config().in_channels, a.model.res, a.model.res), a.seed);
    let y = maybe_threads(a.threads.get(), || m.forward(&x))?;
    print_logits(&y);
    Ok(())
}

fn macs(a: &MacsArgs) -> lowformer::Result<()> {
    let cfg = a.model.config()?;
    let layout = lowformer::model::ModelLayout::new(&cfg, a.model.ablation)?;
    let r = analyzer::count(&layout, a.model.res, a.model.res)?;
    println!(
        "{} {} @{}: {:.1}M MACs, {:.2}M params",
        cfg.name,
        a.model.ablation.name(),
        a.model.res,
        r.macs_millions(),
        r.params_millions()
    );
    match architecture_reference(&cfg.name, a.model.ablation.name()).filter(|_| a.model.res == 224 && a.model.config.is_none()) {
        Some((pm, pp)) => println!(
            "published reference: {pm}M MACs ({:+.1}%), {pp}M params ({:+.1}%)",
            100.0 * (r.macs_millions() / pm - 1.0),
            100.0 * (r.params_millions() / pp - 1.0)
        ),
        None => println!("published reference: none for this configuration"),
    }
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&r)? + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    variant: String,
    ablation: Ablation,
    resolution: usize,
    batch: usize,
    macs_m: f64,
    median_s: Option<f64>,
    images_per_s: Option<f64>,
    iqr_s: Option<f64>,
    skipped: Option<String>,
}

fn bench(a: &BenchArgs) -> lowformer::Result<()> {
    let mut p = a.protocol.clone().with_threads(a.threads.get()).with_mem_cap(a.mem_cap);
    if let Some(b) = a.batch {
        p = p.with_batch(b);
    }
    let (warmup, iters) = (a.warmup.unwrap_or(p.warmup_iters), a.iters.unwrap_or(p.timed_iters));
    p = p.with_iters(warmup, iters);
    p.validate()?;
    let res = a.model.res;
    let model = a.model.build(a.seed)?;
    let name = model.config().name.clone();
    let macs_m = analyzer::count(model.layout(), res, res)?.macs_millions();
    let w = ModelWorkload { model, h: res, w: res };
    let outcome = time_forward(&w, &p)?;
    let row = BenchRow {
        variant: name.clone(),
        ablation: a.model.ablation,
        resolution: res,
        batch: p.batch,
        macs_m: sig6(macs_m),
        median_s: outcome.timing().map(|t| sig6(t.median_s)),
        images_per_s: outcome.timing().map(|t| sig6(t.images_per_s)),
        iqr_s: outcome.timing().map(|t| sig6(t.iqr_s)),
        skipped: outcome.skip_reason().map(str::to_string),
    };
    match &outcome {
        Outcome::Measured(t) => println!(
            "{name} @{res} batch {}: median {:.6} s, {:.1} images/s, iqr {:.6} s over {} iters",
            p.batch, t.median_s, t.images_per_s, t.iqr_s, p.timed_iters
        ),
        Outcome::Skipped(why) => println!("{name} @{res} batch {}: skipped ({why})", p.batch),
    }
    if let Some(path) = &a.json {
        let mut report = Report::new("bench", vec![p], reference_values(&[&format!("{name}.")]));
        report.rows.push(row);
        report.complete = true;
        report.write_json(path)?;
    }
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> lowformer::Result<()> {
    let base = a.protocol.clone().unwrap_or_else(|| {
        if a.reduced {
            BenchProtocol::reduced()
        } else {
            BenchProtocol::throughput()
        }
    });
    let settings = RunSettings {
        protocol: base.with_threads(a.threads.get()).with_mem_cap(a.mem_cap),
        reduced: a.reduced,
    };
    settings.protocol.validate()?;
    let w = run_experiment(a.kind, &settings, &a.out)?;
    println!("wrote {}", w.json.display());
    println!("wrote {}", w.csv.display());
    if let Some(svg) = &w.svg {
        println!("wrote {}", svg.display());
    }
    Ok(())
}

fn export(a: &ExportArgs) -> lowformer::Result<()> {
    let file = a.model.build(a.seed)?.export_weights();
    file.save(&a.out)?;
    println!("wrote {} tensors, {} floats to {}", file.tensors.len(), file.float_count(), a.out.display());
    Ok(())
}

fn import(a: &ImportArgs) -> lowformer::Result<()> {
    let file = WeightFile::load(Path::new(&a.weights))?;
    let mut m = a.model.build(0)?;
    m.load_weights(&file)?;
    println!("loaded {} tensors, {} floats", file.tensors.len(), file.float_count());
    let x = input(a.input, Shape::new(1, m.config().in_channels, a.model.res, a.model.res), 0);
    let y = maybe_threads(a.threads.get(), || m.forward(&x))?;
    print_logits(&y);
    Ok(())
}

fn run(cli: &Cli) -> lowformer::Result<()> {
    match &cli.command {
        Command::Describe(a) => describe(a),
        Command::Forward(a) => forward(a),
        Command::Macs(a) => macs(a),
        Command::Bench(a) => bench(a),
        Command::Experiment(a) => experiment(a),
        Command::ExportWeights(a) => export(a),
        Command::ImportWeights(a) => import(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
