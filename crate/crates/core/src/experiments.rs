//! Experiment harnesses behind the CLI: single-point estimates, sweeps over
//! `a` and `β`, reconstruction slices, sparsity batches and timing runs.
//!
//! Every function returns rows in a fixed order (grid value, then sample,
//! then point) whatever the thread count. Timings come from a monotonic clock
//! after one untimed warm-up run.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::MarginalValues;
use crate::kernels::Kernel;
use crate::marginal::{
    chained_marginal, marginal_values, required_aux_size, AuxSample, DensityFn, MarginalSource, DEFAULT_AUX_EXPONENT,
};
use crate::models::{marginal_density, sample_model, true_density, Model, ModelSpec};
use crate::rodeo::{select, RodeoConfig, RodeoResult, StopReason};
use crate::sample::{EvalPoint, Sample};

/// Seed tags separating the auxiliary and evaluation-point streams from the
/// main sample.
pub const AUX_TAG: u64 = 0xA0;
pub const POINTS_TAG: u64 = 0xB0;

/// Default cap on the auxiliary sample drawn for the pre-estimator.
pub const DEFAULT_AUX_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginalKind {
    #[default]
    Known,
    Exact,
    Preestimator,
    Chained,
}

impl MarginalKind {
    pub fn name(self) -> &'static str {
        match self {
            MarginalKind::Known => "known",
            MarginalKind::Exact => "exact",
            MarginalKind::Preestimator => "preestimator",
            MarginalKind::Chained => "chained",
        }
    }
}

impl fmt::Display for MarginalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarginalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "known" => Ok(MarginalKind::Known),
            "exact" => Ok(MarginalKind::Exact),
            "preestimator" | "kernel" => Ok(MarginalKind::Preestimator),
            "chained" => Ok(MarginalKind::Chained),
            other => Err(Error::InvalidInput(format!("unknown marginal source '{other}'"))),
        }
    }
}

/// How marginal values are produced for a model sample.
#[derive(Debug, Clone)]
pub struct MarginalSetup {
    pub kind: MarginalKind,
    /// Exponent `c` of the pre-estimator.
    pub c: f64,
    pub kernel: Kernel,
    /// Upper bound on the auxiliary sample size `ceil(n^c)`.
    pub aux_cap: usize,
    /// Configuration of every chained stage.
    pub stage: RodeoConfig,
    /// Root directory for chained stage caches.
    pub cache_dir: Option<PathBuf>,
}

impl Default for MarginalSetup {
    fn default() -> Self {
        Self {
            kind: MarginalKind::Known,
            c: DEFAULT_AUX_EXPONENT,
            kernel: Kernel::Gaussian,
            aux_cap: DEFAULT_AUX_CAP,
            stage: RodeoConfig::default(),
            cache_dir: None,
        }
    }
}

impl MarginalSetup {
    pub fn known() -> Self {
        Self::default()
    }

    pub fn with_kind(mut self, kind: MarginalKind) -> Self {
        self.kind = kind;
        self
    }

    /// Size of the auxiliary sample drawn for a main sample of size `n`.
    pub fn aux_size(&self, n: usize) -> usize {
        let want = required_aux_size(n, self.c);
        if want >= self.aux_cap as f64 {
            self.aux_cap
        } else {
            want as usize
        }
    }
}

/// A model sample with its marginal values.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: Option<ModelSpec>,
    pub sample: Sample,
    pub marginal: MarginalValues,
}

impl Prepared {
    /// `f(y | x)` at `w` when the sample comes from a model.
    pub fn truth(&self, w: &EvalPoint) -> Result<Option<f64>> {
        self.spec.as_ref().map(|s| true_density(s, w)).transpose()
    }
}

/// Draws `n` rows of `spec` and computes marginal values per `setup`.
pub fn prepare(spec: &ModelSpec, n: usize, setup: &MarginalSetup) -> Result<Prepared> {
    let sample = sample_model(spec, n)?;
    let marginal = match setup.kind {
        MarginalKind::Known | MarginalKind::Exact => {
            let spec = *spec;
            let f: DensityFn = Arc::new(move |x: &[f64]| marginal_density(&spec, x).unwrap_or(f64::NAN));
            let source = if setup.kind == MarginalKind::Known {
                MarginalSource::Known(f)
            } else {
                MarginalSource::Exact(f)
            };
            marginal_values(&sample, &source, None)?
        }
        MarginalKind::Preestimator => {
            let aux = sample_model(&spec.reseeded(AUX_TAG), setup.aux_size(n))?;
            let aux = AuxSample::from_sample(&aux)?;
            let source = MarginalSource::KernelPreestimator {
                c: setup.c,
                kernel: setup.kernel,
            };
            marginal_values(&sample, &source, Some(&aux))?
        }
        MarginalKind::Chained => {
            let dir = setup.cache_dir.as_ref().map(|root| {
                root.join(format!("{}_d{}_n{}_s{}", spec.model, spec.d1, n, spec.seed))
            });
            chained_marginal(&sample, &setup.stage, dir.as_deref())?
        }
    };
    Ok(Prepared {
        spec: Some(*spec),
        sample,
        marginal,
    })
}

/// Marginal values for a sample read from disk (no model known).
pub fn prepare_external(sample: Sample, setup: &MarginalSetup, aux: Option<&AuxSample>) -> Result<Prepared> {
    let marginal = if sample.is_density() {
        MarginalValues::unit(sample.n())
    } else {
        match setup.kind {
            MarginalKind::Known | MarginalKind::Exact => {
                return Err(Error::InvalidInput(
                    "a known marginal needs a model; use --marginal preestimator or chained".into(),
                ))
            }
            MarginalKind::Preestimator => {
                let source = MarginalSource::KernelPreestimator {
                    c: setup.c,
                    kernel: setup.kernel,
                };
                marginal_values(&sample, &source, aux)?
            }
            MarginalKind::Chained => chained_marginal(&sample, &setup.stage, setup.cache_dir.as_deref())?,
        }
    };
    Ok(Prepared {
        spec: None,
        sample,
        marginal,
    })
}

#[derive(Debug, Clone)]
pub struct PointEstimate {
    pub w: Vec<f64>,
    pub result: RodeoResult,
    pub truth: Option<f64>,
    pub wall_time_ms: Option<f64>,
}

impl PointEstimate {
    pub fn abs_error(&self) -> Option<f64> {
        self.truth.map(|t| (self.result.estimate - t).abs())
    }
}

fn timed_select(prep: &Prepared, w: &EvalPoint, config: &RodeoConfig, timed: bool) -> Result<(RodeoResult, Option<f64>)> {
    if !timed {
        return Ok((select(&prep.sample, &prep.marginal, w, config)?, None));
    }
    select(&prep.sample, &prep.marginal, w, config)?;
    let start = Instant::now();
    let result = select(&prep.sample, &prep.marginal, w, config)?;
    Ok((result, Some(start.elapsed().as_secs_f64() * 1e3)))
}

/// Runs the selector at `w` and compares with the truth when known.
pub fn estimate_at(prep: &Prepared, w: &EvalPoint, config: &RodeoConfig, timed: bool) -> Result<PointEstimate> {
    let (result, wall_time_ms) = timed_select(prep, w, config, timed)?;
    Ok(PointEstimate {
        w: w.as_slice().to_vec(),
        truth: prep.truth(w)?,
        result,
        wall_time_ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepARow {
    pub a: f64,
    pub sample_id: usize,
    pub point_id: usize,
    pub f_true: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAMean {
    pub a: f64,
    pub sample_id: usize,
    pub mean_abs_error: f64,
}

/// Absolute errors over a grid of `a`, for `samples` independent samples and
/// `points` evaluation points drawn from the joint law of each sample's model.
pub fn sweep_a(
    spec: &ModelSpec,
    n: usize,
    a_grid: &[f64],
    samples: usize,
    points: usize,
    config: &RodeoConfig,
    setup: &MarginalSetup,
) -> Result<Vec<SweepARow>> {
    let mut rows = vec![Vec::new(); a_grid.len()];
    for sample_id in 0..samples {
        let sample_spec = spec.reseeded(sample_id as u64);
        let prep = prepare(&sample_spec, n, setup)?;
        let draws = sample_model(&sample_spec.reseeded(POINTS_TAG), points.max(1))?;
        let jobs: Vec<(usize, usize)> = (0..a_grid.len())
            .flat_map(|ai| (0..points).map(move |p| (ai, p)))
            .collect();
        let out = jobs
            .par_iter()
            .map(|&(ai, point_id)| {
                let w = EvalPoint::new(draws.row(point_id).to_vec())?;
                let cfg = RodeoConfig {
                    a: Some(a_grid[ai]),
                    ..config.clone()
                };
                let est = estimate_at(&prep, &w, &cfg, false)?;
                Ok((ai, SweepARow {
                    a: a_grid[ai],
                    sample_id,
                    point_id,
                    f_true: est.truth.unwrap_or(f64::NAN),
                    abs_error: est.abs_error().unwrap_or(f64::NAN),
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        for (ai, row) in out {
            rows[ai].push(row);
        }
    }
    Ok(rows.into_iter().flatten().collect())
}

/// Per-sample mean absolute error for each `a`, in the order the rows give.
pub fn sweep_a_means(rows: &[SweepARow]) -> Vec<SweepAMean> {
    let mut out: Vec<(SweepAMean, usize)> = Vec::new();
    for row in rows {
        match out
            .iter_mut()
            .find(|(m, _)| m.a.to_bits() == row.a.to_bits() && m.sample_id == row.sample_id)
        {
            Some((m, count)) => {
                m.mean_abs_error += row.abs_error;
                *count += 1;
            }
            None => out.push((
                SweepAMean {
                    a: row.a,
                    sample_id: row.sample_id,
                    mean_abs_error: row.abs_error,
                },
                1,
            )),
        }
    }
    out.into_iter()
        .map(|(mut m, count)| {
            m.mean_abs_error /= count as f64;
            m
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepBetaRow {
    pub beta: f64,
    pub sample_id: usize,
    pub abs_error: f64,
    pub wall_time_ms: Option<f64>,
    pub z_evaluations: usize,
}

/// Error and selection time over a grid of `β` at the point `w`. Runs are
/// sequential so timings do not compete for cores.
pub fn sweep_beta(
    spec: &ModelSpec,
    n: usize,
    beta_grid: &[f64],
    samples: usize,
    w: &EvalPoint,
    config: &RodeoConfig,
    setup: &MarginalSetup,
    timed: bool,
) -> Result<Vec<SweepBetaRow>> {
    let preps = (0..samples)
        .map(|s| prepare(&spec.reseeded(s as u64), n, setup))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(beta_grid.len() * samples);
    for &beta in beta_grid {
        let cfg = RodeoConfig {
            beta,
            ..config.clone()
        };
        for (sample_id, prep) in preps.iter().enumerate() {
            let est = estimate_at(prep, w, &cfg, timed)?;
            rows.push(SweepBetaRow {
                beta,
                sample_id,
                abs_error: est.abs_error().unwrap_or(f64::NAN),
                wall_time_ms: est.wall_time_ms,
                z_evaluations: est.result.trace.z_evaluations,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructRow {
    pub grid_value: f64,
    pub estimate: f64,
    pub true_density: f64,
}

/// `n_points` equally spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n_points)
            .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
            .collect(),
    }
}

/// Estimates along the slice `anchor + (v - anchor_k) e_k` for `v` in `grid`.
pub fn reconstruct(prep: &Prepared, anchor: &EvalPoint, direction: usize, grid: &[f64], config: &RodeoConfig) -> Result<Vec<ReconstructRow>> {
    if direction >= anchor.len() {
        return Err(Error::DimensionMismatch {
            what: "reconstruction direction",
            expected: anchor.len(),
            got: direction + 1,
        });
    }
    grid.par_iter()
        .map(|&v| {
            let mut w = anchor.as_slice().to_vec();
            w[direction] = v;
            let w = EvalPoint::new(w)?;
            let est = estimate_at(prep, &w, config, false)?;
            Ok(ReconstructRow {
                grid_value: v,
                estimate: est.result.estimate,
                true_density: est.truth.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Root mean squared difference between estimate and truth.
pub fn reconstruct_rmse(rows: &[ReconstructRow]) -> f64 {
    let sum: f64 = rows.iter().map(|r| (r.estimate - r.true_density).powi(2)).sum();
    (sum / rows.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityRow {
    pub d1: usize,
    pub replicate: usize,
    pub estimate: f64,
    pub true_density: f64,
    pub abs_error: f64,
    pub stop_reason: StopReason,
    pub bandwidth: Vec<f64>,
}

/// Replicated estimates at `w = 0` for each `d1` in `d1_grid`.
pub fn sparsity(
    model: Model,
    d1_grid: &[usize],
    replicates: usize,
    n: usize,
    seed: u64,
    config: &RodeoConfig,
    setup: &MarginalSetup,
) -> Result<Vec<SparsityRow>> {
    let mut rows = Vec::with_capacity(d1_grid.len() * replicates);
    for &d1 in d1_grid {
        let base = ModelSpec::new(model, d1, seed)?;
        let batch = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let prep = prepare(&base.reseeded(r as u64), n, setup)?;
                let w = EvalPoint::zeros(base.d());
                let est = estimate_at(&prep, &w, config, false)?;
                let truth = est.truth.unwrap_or(f64::NAN);
                Ok(SparsityRow {
                    d1,
                    replicate: r,
                    estimate: est.result.estimate,
                    true_density: truth,
                    abs_error: (est.result.estimate - truth).abs(),
                    stop_reason: est.result.trace.stop_reason,
                    bandwidth: est.result.bandwidth.values().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(batch);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub wall_time_ms: f64,
    pub z_evaluations: usize,
}

/// Median selection time over `repeats` runs (after a warm-up) at `w = 0`
/// for model B with the exact marginal.
pub fn bench_point(n: usize, d1: usize, seed: u64, repeats: usize, config: &RodeoConfig) -> Result<BenchRow> {
    let spec = ModelSpec::new(Model::B, d1, seed)?;
    let prep = prepare(&spec, n, &MarginalSetup::known().with_kind(MarginalKind::Exact))?;
    let w = EvalPoint::zeros(spec.d());
    let warm = select(&prep.sample, &prep.marginal, &w, config)?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        select(&prep.sample, &prep.marginal, &w, config)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchRow {
        n,
        d: spec.d(),
        wall_time_ms: median(&mut times),
        z_evaluations: warm.trace.z_evaluations,
    })
}

/// Timings over `n_grid` at `d1`, then over `d1_grid` at `n_fixed`.
pub fn bench(
    n_grid: &[usize],
    d1: usize,
    d1_grid: &[usize],
    n_fixed: usize,
    seed: u64,
    repeats: usize,
    config: &RodeoConfig,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in n_grid {
        rows.push(bench_point(n, d1, seed, repeats, config)?);
    }
    for &d in d1_grid {
        rows.push(bench_point(n_fixed, d, seed, repeats, config)?);
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Median; sorts `values` in place. NaN for an empty slice.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// A CSV table written after a `# cdrodeo <command> v1` comment line.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, command: &str, mut out: W) -> Result<()> {
        writeln!(out, "# cdrodeo {command} v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Formats a number for CSV output; `None` becomes `NA`.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}
