//! Sources for the marginal values `f̃_X(X_i)` that the conditional
//! estimator divides by.
//!
//! Values are floored at `n^{-1/2}` by [`MarginalValues::new`], except for
//! [`MarginalSource::Exact`].

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::MarginalValues;
use crate::io;
use crate::kernels::Kernel;
use crate::rodeo::{select, RodeoConfig};
use crate::sample::{EvalPoint, Sample};

/// Default exponent in `n_X = n^c` for the kernel pre-estimator.
pub const DEFAULT_AUX_EXPONENT: f64 = 2.0;

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MarginalSource {
    /// An analytic density of `X`, floored like every estimate.
    Known(DensityFn),
    /// An analytic density of `X` used without the floor.
    Exact(DensityFn),
    /// Fixed-bandwidth kernel density estimate on an auxiliary sample of `X`.
    KernelPreestimator { c: f64, kernel: Kernel },
    /// Chain of RevDir runs, one per conditioning coordinate.
    ChainedRodeo(RodeoConfig),
}

impl fmt::Debug for MarginalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalSource::Known(_) => f.write_str("Known(..)"),
            MarginalSource::Exact(_) => f.write_str("Exact(..)"),
            MarginalSource::KernelPreestimator { c, kernel } => f
                .debug_struct("KernelPreestimator")
                .field("c", c)
                .field("kernel", kernel)
                .finish(),
            MarginalSource::ChainedRodeo(cfg) => f.debug_tuple("ChainedRodeo").field(cfg).finish(),
        }
    }
}

/// Auxiliary draws of `X` (`n_X × d1`), kept sorted on the first coordinate
/// so kernel sums only visit the rows inside the kernel window.
#[derive(Debug, Clone)]
pub struct AuxSample {
    data: Vec<f64>,
    d1: usize,
}

impl AuxSample {
    pub fn new(data: Vec<f64>, d1: usize) -> Result<Self> {
        if d1 == 0 || data.is_empty() || !data.len().is_multiple_of(d1) {
            return Err(Error::InvalidInput(format!(
                "auxiliary sample of {} values does not split into rows of width {d1}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("auxiliary sample has non-finite entries".into()));
        }
        let mut rows: Vec<&[f64]> = data.chunks_exact(d1).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let data = rows.concat();
        Ok(Self { data, d1 })
    }

    /// The `X` columns of `sample`.
    pub fn from_sample(sample: &Sample) -> Result<Self> {
        let d1 = sample.d1();
        Self::new(sample.rows().flat_map(|r| r[..d1].iter().copied()).collect(), d1)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d1
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    fn first(&self, i: usize) -> f64 {
        self.data[i * self.d1]
    }
}

/// `ceil(n^c)`.
pub fn required_aux_size(n: usize, c: f64) -> f64 {
    (n as f64).powf(c).ceil()
}

/// `h_X = n_X^{-(c-1)/(c d1)}`.
pub fn preestimator_bandwidth(n_aux: usize, d1: usize, c: f64) -> f64 {
    (n_aux as f64).powf(-(c - 1.0) / (c * d1 as f64))
}

/// Kernel density estimate of `f_X(u)` with the fixed bandwidth
/// [`preestimator_bandwidth`].
pub fn kernel_preestimate(aux: &AuxSample, u: &[f64], kernel: Kernel, c: f64) -> Result<f64> {
    if !(c > 1.0) {
        return Err(Error::InvalidInput(format!("pre-estimator needs c > 1, got {c}")));
    }
    if u.len() != aux.d1 {
        return Err(Error::DimensionMismatch {
            what: "pre-estimator point",
            expected: aux.d1,
            got: u.len(),
        });
    }
    let n_aux = aux.len();
    let h = preestimator_bandwidth(n_aux, aux.d1, c);
    let reach = kernel.support_radius() * h;
    let lo = partition(aux, |x| x < u[0] - reach);
    let hi = partition(aux, |x| x <= u[0] + reach);
    let mut acc = 0.0;
    for row in aux.data[lo * aux.d1..hi * aux.d1].chunks_exact(aux.d1) {
        let mut p = 1.0;
        for (uj, xj) in u.iter().zip(row) {
            p *= kernel.evaluate((uj - xj) / h);
            if p == 0.0 {
                break;
            }
        }
        acc += p;
    }
    Ok(acc / (n_aux as f64 * h.powi(aux.d1 as i32)))
}

fn partition(aux: &AuxSample, pred: impl Fn(f64) -> bool) -> usize {
    let (mut lo, mut hi) = (0, aux.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(aux.first(mid)) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `max(f̃_X(X_i), n^{-1/2})` for every observation.
pub fn marginal_values(sample: &Sample, source: &MarginalSource, aux: Option<&AuxSample>) -> Result<MarginalValues> {
    if sample.d1() == 0 {
        return Err(Error::InvalidInput(
            "density samples (d1 = 0) use MarginalValues::unit".into(),
        ));
    }
    if aux.is_some() && !matches!(source, MarginalSource::KernelPreestimator { .. }) {
        return Err(Error::InvalidInput(
            "an auxiliary sample is only used by the kernel pre-estimator".into(),
        ));
    }
    match source {
        MarginalSource::Known(f) => {
            let raw = (0..sample.n()).into_par_iter().map(|i| f(sample.x(i))).collect();
            MarginalValues::new(raw)
        }
        MarginalSource::Exact(f) => {
            let raw = (0..sample.n()).into_par_iter().map(|i| f(sample.x(i))).collect();
            MarginalValues::exact(raw)
        }
        MarginalSource::KernelPreestimator { c, kernel } => {
            let aux = aux.ok_or(Error::MissingAuxSample)?;
            if aux.d1() != sample.d1() {
                return Err(Error::DimensionMismatch {
                    what: "auxiliary sample width",
                    expected: sample.d1(),
                    got: aux.d1(),
                });
            }
            let raw = (0..sample.n())
                .into_par_iter()
                .map(|i| kernel_preestimate(aux, sample.x(i), *kernel, *c))
                .collect::<Result<Vec<f64>>>()?;
            MarginalValues::new(raw)
        }
        MarginalSource::ChainedRodeo(cfg) => chained_marginal(sample, cfg, None),
    }
}

/// Estimates `f_X(X_i)` as `f_{X1}(X_{i1}) Π_{j≥2} f_{Xj | X_{1:j-1}}(X_{i,1:j})`.
///
/// Stage 1 is a univariate density run; stage `j` is a conditional run on
/// columns `1..=j` that divides by the running product of the previous
/// stages. With `a` left on auto, stage `j` uses `default_a(j)`, so `-1` for
/// the first stage.
///
/// When `cache_dir` is given, each stage's `n` estimates are stored as
/// `stage_<j>.csv` and reloaded on the next call.
pub fn chained_marginal(sample: &Sample, stage_config: &RodeoConfig, cache_dir: Option<&Path>) -> Result<MarginalValues> {
    let d1 = sample.d1();
    if d1 == 0 {
        return Err(Error::InvalidInput("chained marginal needs d1 >= 1".into()));
    }
    let n = sample.n();
    let mut running = vec![1.0; n];
    for stage in 1..=d1 {
        let values = stage_values(sample, stage_config, stage, &running, cache_dir)
            .map_err(|e| Error::Stage {
                stage,
                source: Box::new(e),
            })?;
        running.iter_mut().zip(&values).for_each(|(r, v)| *r *= v);
    }
    MarginalValues::new(running)
}

fn stage_values(
    sample: &Sample,
    config: &RodeoConfig,
    stage: usize,
    running: &[f64],
    cache_dir: Option<&Path>,
) -> Result<Vec<f64>> {
    let n = sample.n();
    let cache = cache_dir.map(|dir| dir.join(format!("stage_{stage}.csv")));
    if let Some(path) = cache.as_deref() {
        if path.exists() {
            let values = io::read_indexed_values(path)?;
            if values.len() == n {
                return Ok(values);
            }
        }
    }
    let columns: Vec<usize> = (0..stage).collect();
    let sub = sample.select(&columns, stage - 1)?;
    let marginal = if stage == 1 {
        MarginalValues::unit(n)
    } else {
        MarginalValues::new(running.to_vec())?
    };
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let w = EvalPoint::new(sub.row(i).to_vec())?;
            select(&sub, &marginal, &w, config).map(|r| r.estimate)
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(path) = cache.as_deref() {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        io::write_indexed_values(path, &values)?;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn xy_sample(n: usize, d1: usize, seed: u64) -> Sample {
        let d = d1 + 1;
        let data = (0..(n * d) as u64).map(|i| CounterRng::new(seed, i).standard_normal()).collect();
        Sample::new(data, n, d1, 1).unwrap()
    }

    #[test]
    fn known_constant_density() {
        let s = xy_sample(50, 2, 1);
        let m = marginal_values(&s, &MarginalSource::Known(Arc::new(|_| 1.0)), None).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn known_density_is_exact_above_floor() {
        let s = xy_sample(100, 1, 2);
        let f: DensityFn = Arc::new(|x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
        let m = marginal_values(&s, &MarginalSource::Known(f.clone()), None).unwrap();
        for i in 0..s.n() {
            let v = f(s.x(i));
            if v >= 0.1 {
                assert_eq!(m.values()[i], v);
            } else {
                assert_eq!(m.values()[i], 0.1);
            }
        }
    }

    #[test]
    fn exact_density_skips_floor() {
        let s = xy_sample(100, 1, 2);
        let f: DensityFn = Arc::new(|x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
        let m = marginal_values(&s, &MarginalSource::Exact(f.clone()), None).unwrap();
        for i in 0..s.n() {
            assert_eq!(m.values()[i], f(s.x(i)));
        }
        assert!(marginal_values(&s, &MarginalSource::Exact(Arc::new(|_| 0.0)), None).is_err());
    }

    #[test]
    fn preestimator_degenerate_and_bandwidth() {
        let aux = AuxSample::new(vec![0.0], 1).unwrap();
        let v = kernel_preestimate(&aux, &[0.0], Kernel::Gaussian, 2.0).unwrap();
        assert!((v - Kernel::Gaussian.evaluate(0.0)).abs() < 1e-15);
        assert!((preestimator_bandwidth(10_000, 1, 2.0) - 0.01).abs() < 1e-15);
        assert!(kernel_preestimate(&aux, &[0.0], Kernel::Gaussian, 1.0).is_err());
        assert!(kernel_preestimate(&aux, &[0.0, 1.0], Kernel::Gaussian, 2.0).is_err());
    }

    #[test]
    fn preestimator_window_matches_full_sum() {
        let data: Vec<f64> = (0..2000u64).map(|i| CounterRng::new(5, i).standard_normal()).collect();
        let aux = AuxSample::new(data.clone(), 2).unwrap();
        let h = preestimator_bandwidth(1000, 2, 1.5);
        for u in [[0.0, 0.0], [1.0, -0.5], [-2.0, 0.3]] {
            for kernel in Kernel::ALL {
                let got = kernel_preestimate(&aux, &u, kernel, 1.5).unwrap();
                let full: f64 = data
                    .chunks_exact(2)
                    .map(|r| kernel.evaluate((u[0] - r[0]) / h) * kernel.evaluate((u[1] - r[1]) / h))
                    .sum::<f64>()
                    / (1000.0 * h * h);
                assert!((got - full).abs() <= 1e-12 * full.max(1e-12), "{kernel} {u:?}");
            }
        }
    }

    #[test]
    fn preestimator_floor_far_away() {
        let s = Sample::from_rows(&[[100.0, 0.0], [0.0, 0.0], [0.1, 1.0], [0.2, 1.0]], 1).unwrap();
        let aux = AuxSample::new(vec![0.0, 0.1, -0.1], 1).unwrap();
        let src = MarginalSource::KernelPreestimator {
            c: 2.0,
            kernel: Kernel::Biweight,
        };
        let m = marginal_values(&s, &src, Some(&aux)).unwrap();
        assert_eq!(m.values()[0], 0.5);
        assert!(matches!(marginal_values(&s, &src, None), Err(Error::MissingAuxSample)));
        let wide = AuxSample::new(vec![0.0, 0.0], 2).unwrap();
        assert!(matches!(
            marginal_values(&s, &src, Some(&wide)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_sample_rejected() {
        let s = Sample::univariate(vec![0.0, 1.0]).unwrap();
        let src = MarginalSource::Known(Arc::new(|_| 1.0));
        assert!(marginal_values(&s, &src, None).is_err());
    }

    #[test]
    fn chained_is_floored_and_cached() {
        let s = xy_sample(120, 2, 8);
        let dir = tempfile::tempdir().unwrap();
        let cfg = RodeoConfig::default();
        let m = chained_marginal(&s, &cfg, Some(dir.path())).unwrap();
        let floor = MarginalValues::floor(s.n());
        assert!(m.values().iter().all(|&v| v >= floor));
        assert!(dir.path().join("stage_1.csv").exists());
        assert!(dir.path().join("stage_2.csv").exists());
        let again = chained_marginal(&s, &cfg, Some(dir.path())).unwrap();
        assert_eq!(m, again);
        let uncached = chained_marginal(&s, &cfg, None).unwrap();
        assert_eq!(m, uncached);
    }
}
