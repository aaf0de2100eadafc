//! The `cdrodeo` command line.
//!
//! Every subcommand writes one CSV (to `--out` or stdout) that starts with a
//! `# cdrodeo <command> v1` line. Exit status is 0 on success, 2 on a
//! numerical failure and 1 for anything else, usage errors included.
//!
//! `--config FILE` reads `key = value` lines (keys are flag names without the
//! dashes, `#` starts a comment). Flags given on the command line win.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    self, fmt_opt, linspace, loglog_slope, prepare, prepare_external, MarginalKind, MarginalSetup, Prepared, Table,
    DEFAULT_AUX_CAP,
};
use crate::io;
use crate::kernels::Kernel;
use crate::marginal::{required_aux_size, AuxSample, DEFAULT_AUX_EXPONENT};
use crate::models::{marginal_density, Model, ModelSpec};
use crate::rodeo::{ProductFloor, ReverseCap, RodeoConfig, Variant, DEFAULT_BETA};
use crate::sample::EvalPoint;

#[derive(Debug, Parser)]
#[command(name = "cdrodeo", version, about = "Pointwise conditional density estimation with RevDir bandwidth selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate at one point.
    #[command(args_override_self = true)]
    Estimate(Common),
    /// Absolute error over a grid of `a`.
    #[command(args_override_self = true)]
    SweepA(SweepAArgs),
    /// Absolute error and run time over a grid of `beta`.
    #[command(args_override_self = true)]
    SweepBeta(SweepBetaArgs),
    /// Estimates along one coordinate with the others fixed.
    #[command(args_override_self = true)]
    Reconstruct(ReconstructArgs),
    /// Replicated estimates and bandwidths at w = 0 over a range of d1.
    #[command(args_override_self = true)]
    Sparsity(SparsityArgs),
    /// Selection time against n and d.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
    /// Marginal values f_X(X_i) for a sample (chained by default).
    #[command(args_override_self = true)]
    Marginal(Common),
    /// Write a model sample.
    #[command(args_override_self = true)]
    Sample(Common),
}

/// `auto` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auto(pub Option<f64>);

impl FromStr for Auto {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Auto(None));
        }
        s.trim().parse::<f64>().map(|v| Auto(Some(v))).map_err(|e| format!("expected 'auto' or a number: {e}"))
    }
}

fn parse_floor(s: &str) -> std::result::Result<ProductFloor, String> {
    match s {
        "by-variant" => Ok(ProductFloor::ByVariant),
        "log-n" => Ok(ProductFloor::LogN),
        "log-n-pow" => Ok(ProductFloor::LogNPowOnePlusA),
        other => Err(format!("expected by-variant, log-n or log-n-pow, got '{other}'")),
    }
}

fn parse_reverse_cap(s: &str) -> std::result::Result<ReverseCap, String> {
    match s {
        "active" => Ok(ReverseCap::ActiveOnly),
        "all" => Ok(ReverseCap::AllComponents),
        other => Err(format!("expected active or all, got '{other}'")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Simulation model.
    #[arg(long, default_value = "b")]
    pub model: Model,
    /// Number of conditioning variables.
    #[arg(long, default_value_t = 3)]
    pub d1: usize,
    /// Sample size.
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Threshold exponent, `auto` for log(d-1) (or -1 when d = 1).
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub a: Auto,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Initial bandwidth, `auto` for the rate-based default.
    #[arg(long, default_value = "auto")]
    pub h0: Auto,
    #[arg(long, default_value = "gaussian")]
    pub kernel: Kernel,
    #[arg(long, default_value = "revdir")]
    pub variant: Variant,
    /// known (floored at n^-1/2), exact (true f_X as is), preestimator or chained.
    #[arg(long)]
    pub marginal: Option<MarginalKind>,
    /// Evaluation point, comma separated (default: the origin).
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// key = value defaults; command-line flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write NA for wall times so output is byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
    /// Directory for chained-marginal stage caches.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Cap on the pre-estimator's auxiliary sample size.
    #[arg(long, default_value_t = DEFAULT_AUX_CAP)]
    pub aux_n: usize,
    /// Pre-estimator exponent c (auxiliary size n^c).
    #[arg(long, default_value_t = DEFAULT_AUX_EXPONENT)]
    pub pre_c: f64,
    /// Product floor: by-variant, log-n or log-n-pow.
    #[arg(long, default_value = "by-variant", value_parser = parse_floor)]
    pub floor: ProductFloor,
    /// Reverse-phase guard: active or all.
    #[arg(long, default_value = "active", value_parser = parse_reverse_cap)]
    pub reverse_cap: ReverseCap,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Sample CSV (x1..,y1..) to use instead of a model.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Auxiliary X sample CSV for the pre-estimator with --input.
    #[arg(long)]
    pub aux_input: Option<PathBuf>,
    /// Write the bandwidth path of `estimate` to this CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepAArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "-1,0,0.5,1,1.5,2,3", allow_hyphen_values = true)]
    pub a_grid: String,
    /// Number of independent samples.
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
    /// Evaluation points per sample, drawn from the model.
    #[arg(long, default_value_t = 4)]
    pub points: usize,
    /// Per-sample mean CSV (default: next to --out with a _per_sample suffix).
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepBetaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "0.5,0.8,0.9")]
    pub beta_grid: String,
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    /// Coordinate to vary: x1.., y1.. (`y` means y1).
    #[arg(long, default_value = "y")]
    pub direction: String,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SparsityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "1,2,3,4")]
    pub d1_grid: String,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sample sizes for the n sweep (at --d1).
    #[arg(long, default_value = "10000,20000,40000,80000")]
    pub n_grid: String,
    /// Values of d1 for the d sweep (at --n).
    #[arg(long, default_value = "1,2,4")]
    pub d1_grid: String,
    /// Timed runs per configuration; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

/// Inserts `--key value` pairs from the `--config` file right after the
/// subcommand, so later command-line flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, arg) in args.iter().enumerate() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    if args.len() < 2 || args[1].to_string_lossy().starts_with('-') {
        return Ok(args);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("config {}:{}: expected key = value", path.display(), lineno + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key == "config" {
            continue;
        }
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn execute(command: Command) -> Result<()> {
    let threads = match &command {
        Command::Estimate(c) | Command::Marginal(c) | Command::Sample(c) => c.threads,
        Command::SweepA(a) => a.common.threads,
        Command::SweepBeta(a) => a.common.threads,
        Command::Reconstruct(a) => a.common.threads,
        Command::Sparsity(a) => a.common.threads,
        Command::Bench(a) => a.common.threads,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Estimate(c) => cmd_estimate(&c),
        Command::SweepA(a) => cmd_sweep_a(&a),
        Command::SweepBeta(a) => cmd_sweep_beta(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Sparsity(a) => cmd_sparsity(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Marginal(c) => cmd_marginal(&c),
        Command::Sample(c) => cmd_sample(&c),
    })
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| Error::InvalidInput(format!("{what}: bad entry '{p}': {e}")))
        })
        .collect()
}

impl Common {
    fn rodeo_config(&self) -> RodeoConfig {
        RodeoConfig {
            a: self.a.0,
            beta: self.beta,
            h0: self.h0.0,
            kernel: self.kernel,
            variant: self.variant,
            max_iterations: self.max_iterations,
            floor: self.floor,
            reverse_cap: self.reverse_cap,
            ..RodeoConfig::default()
        }
    }

    fn setup(&self, default: MarginalKind) -> MarginalSetup {
        MarginalSetup {
            kind: self.marginal.unwrap_or(default),
            c: self.pre_c,
            kernel: self.kernel,
            aux_cap: self.aux_n,
            stage: RodeoConfig {
                a: self.a.0,
                ..self.rodeo_config().with_variant(Variant::RevDir)
            },
            cache_dir: self.cache_dir.clone(),
        }
    }

    fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.model, self.d1, self.seed)
    }

    fn prepared(&self, default: MarginalKind) -> Result<Prepared> {
        let setup = self.setup(default);
        match &self.input {
            Some(path) => {
                let sample = io::read_sample(path)?;
                let aux = match &self.aux_input {
                    Some(p) => {
                        let (data, width) = io::read_points(p)?;
                        Some(AuxSample::new(data, width)?)
                    }
                    None => None,
                };
                prepare_external(sample, &setup, aux.as_ref())
            }
            None => {
                let spec = self.spec()?;
                if setup.kind == MarginalKind::Preestimator && (setup.aux_size(self.n) as f64) < required_aux_size(self.n, setup.c) {
                    eprintln!(
                        "note: auxiliary sample capped at {} (n^c = {:.0}); raise --aux-n for the full size",
                        setup.aux_size(self.n),
                        required_aux_size(self.n, setup.c)
                    );
                }
                prepare(&spec, self.n, &setup)
            }
        }
    }

    fn point(&self, d: usize) -> Result<EvalPoint> {
        match &self.w {
            Some(s) => {
                let w: Vec<f64> = parse_list(s, "--w")?;
                if w.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "--w",
                        expected: d,
                        got: w.len(),
                    });
                }
                EvalPoint::new(w)
            }
            None => Ok(EvalPoint::zeros(d)),
        }
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(std::io::stdout())),
        })
    }

    fn wall(&self, ms: Option<f64>) -> String {
        if self.no_timing {
            "NA".into()
        } else {
            fmt_opt(ms)
        }
    }
}

fn names(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}

fn cmd_estimate(c: &Common) -> Result<()> {
    let prep = c.prepared(MarginalKind::Exact)?;
    let d = prep.sample.d();
    let w = c.point(d)?;
    let est = experiments::estimate_at(&prep, &w, &c.rodeo_config(), !c.no_timing)?;
    let mut table = Table::new(
        names("w", d)
            .chain(["estimate", "true_density", "abs_error"].map(String::from))
            .chain(names("h", d))
            .chain(["stop_reason", "iterations", "z_evaluations", "wall_time_ms"].map(String::from)),
    );
    let mut row: Vec<String> = est.w.iter().map(f64::to_string).collect();
    row.push(est.result.estimate.to_string());
    row.push(fmt_opt(est.truth));
    row.push(fmt_opt(est.abs_error()));
    row.extend(est.result.bandwidth.values().iter().map(f64::to_string));
    row.push(est.result.trace.stop_reason.name().into());
    row.push(est.result.trace.iterations.len().to_string());
    row.push(est.result.trace.z_evaluations.to_string());
    row.push(c.wall(est.wall_time_ms));
    table.push(row);
    table.write("estimate", c.output()?)?;
    if let Some(path) = &c.trace {
        let mut trace = Table::new(["t", "phase", "component", "tested_h", "z", "lambda", "committed_h"]);
        for it in &est.result.trace.iterations {
            for (&(j, z), &(_, lambda)) in it.z_values.iter().zip(&it.lambda_values) {
                trace.push(vec![
                    it.t.to_string(),
                    it.phase.name().into(),
                    (j + 1).to_string(),
                    it.tested_bandwidth.values()[j].to_string(),
                    z.to_string(),
                    lambda.to_string(),
                    it.committed_bandwidth.values()[j].to_string(),
                ]);
            }
        }
        trace.write("trace", BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn cmd_sweep_a(args: &SweepAArgs) -> Result<()> {
    let c = &args.common;
    let grid: Vec<f64> = parse_list(&args.a_grid, "--a-grid")?;
    let rows = experiments::sweep_a(
        &c.spec()?,
        c.n,
        &grid,
        args.samples,
        args.points,
        &c.rodeo_config(),
        &c.setup(MarginalKind::Exact),
    )?;
    let mut table = Table::new(["a", "sample_id", "point_id", "f_true", "abs_error"]);
    for r in &rows {
        table.push(vec![
            r.a.to_string(),
            r.sample_id.to_string(),
            r.point_id.to_string(),
            r.f_true.to_string(),
            r.abs_error.to_string(),
        ]);
    }
    table.write("sweep-a", c.output()?)?;

    let aggregate = args.aggregate.clone().or_else(|| c.out.as_deref().map(per_sample_path));
    if let Some(path) = aggregate {
        let mut agg = Table::new(["a", "sample_id", "mean_abs_error"]);
        for m in experiments::sweep_a_means(&rows) {
            agg.push(vec![m.a.to_string(), m.sample_id.to_string(), m.mean_abs_error.to_string()]);
        }
        agg.write("sweep-a-per-sample", BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn per_sample_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_per_sample.csv"))
}

fn cmd_sweep_beta(args: &SweepBetaArgs) -> Result<()> {
    let c = &args.common;
    let grid: Vec<f64> = parse_list(&args.beta_grid, "--beta-grid")?;
    let spec = c.spec()?;
    let w = c.point(spec.d())?;
    let rows = experiments::sweep_beta(
        &spec,
        c.n,
        &grid,
        args.samples,
        &w,
        &c.rodeo_config(),
        &c.setup(MarginalKind::Exact),
        !c.no_timing,
    )?;
    let mut table = Table::new(["beta", "sample_id", "abs_error", "wall_time_ms"]);
    for r in &rows {
        table.push(vec![
            r.beta.to_string(),
            r.sample_id.to_string(),
            r.abs_error.to_string(),
            c.wall(r.wall_time_ms),
        ]);
    }
    table.write("sweep-beta", c.output()?)
}

/// `x3` → 2, `y` / `y1` → d1, `y2` → d1 + 1.
fn direction_index(s: &str, d1: usize, d: usize) -> Result<usize> {
    let s = s.trim().to_ascii_lowercase();
    let bad = || Error::InvalidInput(format!("unknown direction '{s}'"));
    let index = match s.as_bytes().first() {
        Some(b'x') => s[1..].parse::<usize>().map_err(|_| bad())?.checked_sub(1).ok_or_else(bad)?,
        Some(b'y') if s.len() == 1 => d1,
        Some(b'y') => d1 + s[1..].parse::<usize>().map_err(|_| bad())?.checked_sub(1).ok_or_else(bad)?,
        _ => return Err(bad()),
    };
    if index >= d {
        return Err(bad());
    }
    Ok(index)
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let c = &args.common;
    let prep = c.prepared(MarginalKind::Exact)?;
    let d = prep.sample.d();
    let anchor = c.point(d)?;
    let k = direction_index(&args.direction, prep.sample.d1(), d)?;
    let grid = linspace(args.grid_min, args.grid_max, args.grid_points);
    let rows = experiments::reconstruct(&prep, &anchor, k, &grid, &c.rodeo_config())?;
    let mut table = Table::new(["grid_value", "estimate", "true_density"]);
    for r in &rows {
        let truth = if prep.spec.is_some() {
            r.true_density.to_string()
        } else {
            "NA".into()
        };
        table.push(vec![r.grid_value.to_string(), r.estimate.to_string(), truth]);
    }
    table.write("reconstruct", c.output()?)
}

fn cmd_sparsity(args: &SparsityArgs) -> Result<()> {
    let c = &args.common;
    let grid: Vec<usize> = parse_list(&args.d1_grid, "--d1-grid")?;
    let rows = experiments::sparsity(
        c.model,
        &grid,
        args.replicates,
        c.n,
        c.seed,
        &c.rodeo_config(),
        &c.setup(MarginalKind::Exact),
    )?;
    let width = grid.iter().max().copied().unwrap_or(0) + c.model.d2();
    let mut table = Table::new(
        ["d1", "replicate", "estimate", "true_density", "abs_error", "stop_reason"]
            .map(String::from)
            .into_iter()
            .chain(names("h", width)),
    );
    for r in &rows {
        let mut row = vec![
            r.d1.to_string(),
            r.replicate.to_string(),
            r.estimate.to_string(),
            r.true_density.to_string(),
            r.abs_error.to_string(),
            r.stop_reason.name().to_string(),
        ];
        row.extend(r.bandwidth.iter().map(f64::to_string));
        row.resize(6 + width, String::new());
        table.push(row);
    }
    table.write("sparsity", c.output()?)
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let c = &args.common;
    let n_grid: Vec<usize> = parse_list(&args.n_grid, "--n-grid")?;
    let d1_grid: Vec<usize> = parse_list(&args.d1_grid, "--d1-grid")?;
    let rows = experiments::bench(&n_grid, c.d1, &d1_grid, c.n, c.seed, args.repeats, &c.rodeo_config())?;
    let mut table = Table::new(["n", "d", "wall_time_ms", "z_evaluations"]);
    for r in &rows {
        table.push(vec![
            r.n.to_string(),
            r.d.to_string(),
            c.wall(Some(r.wall_time_ms)),
            r.z_evaluations.to_string(),
        ]);
    }
    if n_grid.len() >= 2 && !c.no_timing {
        let pts: Vec<(f64, f64)> = rows[..n_grid.len()]
            .iter()
            .map(|r| (r.n as f64, r.wall_time_ms))
            .collect();
        eprintln!("log-log slope of wall time vs n: {:.3}", loglog_slope(&pts));
    }
    table.write("bench", c.output()?)
}

fn cmd_marginal(c: &Common) -> Result<()> {
    let prep = c.prepared(MarginalKind::Chained)?;
    let d1 = prep.sample.d1();
    let mut table = Table::new(
        std::iter::once("index".to_string())
            .chain(names("x", d1))
            .chain(["marginal", "true_marginal"].map(String::from)),
    );
    for i in 0..prep.sample.n() {
        let x = prep.sample.x(i);
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.push(prep.marginal.values()[i].to_string());
        row.push(match &prep.spec {
            Some(spec) => marginal_density(spec, x)?.to_string(),
            None => "NA".into(),
        });
        table.push(row);
    }
    table.write("marginal", c.output()?)
}

fn cmd_sample(c: &Common) -> Result<()> {
    let sample = crate::models::sample_model(&c.spec()?, c.n)?;
    let mut out = c.output()?;
    writeln!(out, "# cdrodeo sample v1")?;
    io::write_sample(&sample, out)
}
