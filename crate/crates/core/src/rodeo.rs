//! Greedy bandwidth selection along the geometric grid.
//!
//! Three variants share one engine:
//!
//! * **Direct** starts every component at `h0` and multiplies by `β` while
//!   `|Z_hj| > λ_hj`.
//! * **Reverse** starts every component at `h0` and divides by `β` while
//!   `|Z_hj| ≤ λ_hj` and the active components stay at or below `β`.
//! * **RevDir** tests all components once at `h0`, runs the reverse phase on
//!   those that pass and then the direct phase on the others.
//!
//! Every run records a full [`RodeoTrace`].

use std::fmt;
use std::str::FromStr;

use crate::bandwidth::Bandwidth;
use crate::error::{Error, Result};
use crate::estimator::{default_h0, estimate, estimate_and_z, threshold, MarginalValues};
use crate::kernels::Kernel;
use crate::sample::{EvalPoint, Sample};

/// Default grid factor.
pub const DEFAULT_BETA: f64 = 0.8;

/// `−1` for univariate problems, `log(d − 1)` otherwise.
pub fn default_a(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    if d == 1 {
        -1.0
    } else {
        ((d - 1) as f64).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    Direct,
    Reverse,
    #[default]
    RevDir,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Direct => "direct",
            Variant::Reverse => "reverse",
            Variant::RevDir => "revdir",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Variant::Direct),
            "reverse" => Ok(Variant::Reverse),
            "revdir" => Ok(Variant::RevDir),
            other => Err(Error::InvalidInput(format!("unknown variant '{other}'"))),
        }
    }
}

/// Lower bound on `Π_k h_k` below which the shrinking phase stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductFloor {
    /// `log n / n` for Direct, `(log n)^{1+a} / n` otherwise.
    #[default]
    ByVariant,
    LogN,
    LogNPowOnePlusA,
}

/// Which components the reverse-phase guard `max h_k ≤ β` looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReverseCap {
    /// Committed values of the still-active components.
    #[default]
    ActiveOnly,
    /// Committed values of all components.
    AllComponents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodeoConfig {
    /// Threshold exponent; `None` picks [`default_a`] of the sample dimension.
    pub a: Option<f64>,
    pub beta: f64,
    /// Initial bandwidth; `None` picks [`default_h0`].
    pub h0: Option<f64>,
    pub kernel: Kernel,
    pub variant: Variant,
    /// Iteration cap; `None` uses `10 · d · ceil(log_{1/β} n)`.
    pub max_iterations: Option<usize>,
    pub floor: ProductFloor,
    pub reverse_cap: ReverseCap,
    /// Multiplies every threshold. Only useful for testing stopping rules.
    pub threshold_scale: f64,
}

impl Default for RodeoConfig {
    fn default() -> Self {
        Self {
            a: None,
            beta: DEFAULT_BETA,
            h0: None,
            kernel: Kernel::Gaussian,
            variant: Variant::RevDir,
            max_iterations: None,
            floor: ProductFloor::ByVariant,
            reverse_cap: ReverseCap::ActiveOnly,
            threshold_scale: 1.0,
        }
    }
}

impl RodeoConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if let Some(h0) = self.h0 {
            if !(h0 > 0.0 && h0 <= 1.0) {
                return Err(Error::InvalidInput(format!("h0 must lie in (0, 1], got {h0}")));
            }
        }
        if let Some(a) = self.a {
            if !a.is_finite() {
                return Err(Error::InvalidInput(format!("a must be finite, got {a}")));
            }
        }
        if !(self.threshold_scale >= 0.0 && self.threshold_scale.is_finite()) {
            return Err(Error::InvalidInput("threshold scale must be a finite non-negative number".into()));
        }
        Ok(())
    }

    /// The `a` used for a sample of dimension `d`.
    pub fn resolved_a(&self, d: usize) -> f64 {
        self.a.unwrap_or_else(|| default_a(d))
    }

    /// The `h0` used for a sample of size `n` and dimension `d`.
    pub fn resolved_h0(&self, n: usize, d: usize) -> f64 {
        self.h0.unwrap_or_else(|| {
            default_h0(self.kernel.norms(), n as f64, self.resolved_a(d), d, self.kernel.order())
        })
    }

    /// `10 · d · ceil(log_{1/β} n)` unless overridden.
    pub fn iteration_cap(&self, n: usize, d: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let steps = ((n as f64).ln() / (1.0 / self.beta).ln()).ceil().max(1.0) as usize;
            10 * d * steps
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Reverse,
    Direct,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Reverse => "reverse",
            Phase::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    AllDeactivated,
    ReverseCap,
    ProductFloor,
    SafetyCap,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::AllDeactivated => "all_deactivated",
            StopReason::ReverseCap => "reverse_cap",
            StopReason::ProductFloor => "product_floor",
            StopReason::SafetyCap => "safety_cap",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One step of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    /// `0` for the initial test, negative in the reverse phase, positive in
    /// the direct phase.
    pub t: i32,
    pub phase: Phase,
    /// Components tested in this step, ascending.
    pub active_set: Vec<usize>,
    pub tested_bandwidth: Bandwidth,
    /// `(j, Z_hj)` for each tested component.
    pub z_values: Vec<(usize, f64)>,
    /// `(j, λ_hj)` for each tested component.
    pub lambda_values: Vec<(usize, f64)>,
    pub committed_bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodeoTrace {
    pub iterations: Vec<Iteration>,
    pub stop_reason: StopReason,
    /// Number of individual `Z_hj` values computed.
    pub z_evaluations: usize,
    /// Components that passed the initial test (RevDir) or all (Reverse).
    pub reverse_set: Vec<usize>,
    /// The product floor in force during the direct phase.
    pub product_floor: f64,
}

impl RodeoTrace {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &Iteration> {
        self.iterations.iter().filter(move |it| it.phase == phase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodeoResult {
    pub bandwidth: Bandwidth,
    pub estimate: f64,
    pub trace: RodeoTrace,
    /// `t_k` with `ĥ_k = β^{t_k} h0`.
    pub deactivation_times: Vec<i32>,
    pub a: f64,
    pub h0: f64,
}

struct Engine<'a> {
    sample: &'a Sample,
    marginal: &'a MarginalValues,
    w: &'a EvalPoint,
    config: &'a RodeoConfig,
    a: f64,
    h0: f64,
    n: f64,
    cap: usize,
    iterations: Vec<Iteration>,
    z_evaluations: usize,
}

struct Tested {
    z: Vec<f64>,
    lambda: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        sample: &'a Sample,
        marginal: &'a MarginalValues,
        w: &'a EvalPoint,
        config: &'a RodeoConfig,
    ) -> Result<Self> {
        config.validate()?;
        let d = sample.d();
        if w.len() != d {
            return Err(Error::DimensionMismatch {
                what: "evaluation point",
                expected: d,
                got: w.len(),
            });
        }
        if marginal.len() != sample.n() {
            return Err(Error::DimensionMismatch {
                what: "marginal values",
                expected: sample.n(),
                got: marginal.len(),
            });
        }
        if sample.n() < 2 {
            return Err(Error::InvalidInput("bandwidth selection needs n >= 2".into()));
        }
        let a = config.resolved_a(d);
        let h0 = config.resolved_h0(sample.n(), d);
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(Error::NumericalFailure(format!("initial bandwidth {h0}")));
        }
        Ok(Self {
            sample,
            marginal,
            w,
            config,
            a,
            h0,
            n: sample.n() as f64,
            cap: config.iteration_cap(sample.n(), d),
            iterations: Vec::new(),
            z_evaluations: 0,
        })
    }

    fn d(&self) -> usize {
        self.sample.d()
    }

    fn floor(&self, variant: Variant) -> f64 {
        let log_n = self.n.ln();
        let rule = match (self.config.floor, variant) {
            (ProductFloor::ByVariant, Variant::Direct) => ProductFloor::LogN,
            (ProductFloor::ByVariant, _) => ProductFloor::LogNPowOnePlusA,
            (rule, _) => rule,
        };
        match rule {
            ProductFloor::LogNPowOnePlusA => log_n.powf(1.0 + self.a) / self.n,
            _ => log_n / self.n,
        }
    }

    fn test(&mut self, h: &Bandwidth, components: &[usize]) -> Result<Tested> {
        let (_, z) = estimate_and_z(self.sample, self.marginal, h, self.w, self.config.kernel, components)?;
        self.z_evaluations += components.len();
        let norms = self.config.kernel.norms();
        let mut lambda = Vec::with_capacity(components.len());
        for (&j, zj) in components.iter().zip(&z) {
            let l = threshold(norms, h, j, self.n, self.a)? * self.config.threshold_scale;
            if zj.is_nan() || l.is_nan() {
                return Err(Error::NumericalFailure(format!(
                    "Z = {zj}, λ = {l} for component {j} at bandwidth {:?}",
                    h.values()
                )));
            }
            lambda.push(l);
        }
        Ok(Tested { z, lambda })
    }

    fn record(&mut self, t: i32, phase: Phase, active: &[usize], tested: Bandwidth, r: &Tested, committed: &Bandwidth) {
        self.iterations.push(Iteration {
            t,
            phase,
            active_set: active.to_vec(),
            tested_bandwidth: tested,
            z_values: active.iter().copied().zip(r.z.iter().copied()).collect(),
            lambda_values: active.iter().copied().zip(r.lambda.iter().copied()).collect(),
            committed_bandwidth: committed.clone(),
        });
    }

    fn reverse_phase(&mut self, h: &mut Bandwidth, mut active: Vec<usize>) -> Result<StopReason> {
        let beta = self.config.beta;
        let mut t = 0;
        loop {
            if active.is_empty() {
                return Ok(StopReason::AllDeactivated);
            }
            let top = match self.config.reverse_cap {
                ReverseCap::ActiveOnly => active.iter().map(|&k| h.values()[k]).fold(f64::NEG_INFINITY, f64::max),
                ReverseCap::AllComponents => h.max(),
            };
            if top > beta {
                return Ok(StopReason::ReverseCap);
            }
            if self.iterations.len() >= self.cap {
                return Ok(StopReason::SafetyCap);
            }
            t -= 1;
            let mut trial = h.clone();
            for &k in &active {
                trial.step(k, -1);
            }
            let r = self.test(&trial, &active)?;
            let next: Vec<usize> = active
                .iter()
                .zip(r.z.iter().zip(&r.lambda))
                .filter(|(_, (z, l))| z.abs() <= **l)
                .map(|(&k, _)| k)
                .collect();
            for &k in &next {
                h.step(k, -1);
            }
            self.record(t, Phase::Reverse, &active, trial, &r, h);
            active = next;
        }
    }

    /// `cached` holds test results already computed at the current `h` for
    /// exactly `active`.
    fn direct_phase(
        &mut self,
        h: &mut Bandwidth,
        mut active: Vec<usize>,
        floor: f64,
        mut cached: Option<Tested>,
    ) -> Result<StopReason> {
        let mut t = 0;
        loop {
            if active.is_empty() {
                return Ok(StopReason::AllDeactivated);
            }
            if h.product() < floor {
                return Ok(StopReason::ProductFloor);
            }
            if self.iterations.len() >= self.cap {
                return Ok(StopReason::SafetyCap);
            }
            t += 1;
            let r = match cached.take() {
                Some(r) => r,
                None => self.test(h, &active)?,
            };
            let next: Vec<usize> = active
                .iter()
                .zip(r.z.iter().zip(&r.lambda))
                .filter(|(_, (z, l))| z.abs() > **l)
                .map(|(&k, _)| k)
                .collect();
            let tested = h.clone();
            for &k in &next {
                h.step(k, 1);
            }
            self.record(t, Phase::Direct, &active, tested, &r, h);
            active = next;
        }
    }

    fn finish(self, h: Bandwidth, stop_reason: StopReason, reverse_set: Vec<usize>, floor: f64) -> Result<RodeoResult> {
        let est = estimate(self.sample, self.marginal, &h, self.w, self.config.kernel)?;
        if est.is_nan() {
            return Err(Error::NumericalFailure("estimate is NaN".into()));
        }
        Ok(RodeoResult {
            deactivation_times: h.exponents().to_vec(),
            bandwidth: h,
            estimate: est,
            trace: RodeoTrace {
                iterations: self.iterations,
                stop_reason,
                z_evaluations: self.z_evaluations,
                reverse_set,
                product_floor: floor,
            },
            a: self.a,
            h0: self.h0,
        })
    }
}

/// Direct selection: all components start active at `h0` and shrink while
/// their derivative exceeds the threshold.
pub fn run_direct(
    sample: &Sample,
    marginal: &MarginalValues,
    w: &EvalPoint,
    config: &RodeoConfig,
) -> Result<RodeoResult> {
    let mut engine = Engine::new(sample, marginal, w, config)?;
    let mut h = Bandwidth::uniform(engine.d(), engine.h0, config.beta)?;
    let floor = engine.floor(Variant::Direct);
    let all: Vec<usize> = (0..engine.d()).collect();
    let stop = engine.direct_phase(&mut h, all, floor, None)?;
    engine.finish(h, stop, Vec::new(), floor)
}

/// RevDir selection: an initial test at `h0` splits the components between a
/// growing (reverse) phase and a shrinking (direct) phase.
pub fn run_revdir(
    sample: &Sample,
    marginal: &MarginalValues,
    w: &EvalPoint,
    config: &RodeoConfig,
) -> Result<RodeoResult> {
    let mut engine = Engine::new(sample, marginal, w, config)?;
    let d = engine.d();
    let start = Bandwidth::uniform(d, engine.h0, config.beta)?;
    let all: Vec<usize> = (0..d).collect();
    let init = engine.test(&start, &all)?;
    let (reverse_set, direct_set): (Vec<usize>, Vec<usize>) = all
        .iter()
        .partition(|&&k| init.z[k].abs() <= init.lambda[k]);
    engine.record(0, Phase::Init, &all, start.clone(), &init, &start);

    let mut h = start.clone();
    let reverse_stop = engine.reverse_phase(&mut h, reverse_set.clone())?;
    let floor = engine.floor(Variant::RevDir);
    if direct_set.is_empty() {
        return engine.finish(h, reverse_stop, reverse_set, floor);
    }
    // Z at the unchanged start bandwidth is already known.
    let cached = (h == start).then(|| Tested {
        z: direct_set.iter().map(|&k| init.z[k]).collect(),
        lambda: direct_set.iter().map(|&k| init.lambda[k]).collect(),
    });
    let stop = if reverse_stop == StopReason::SafetyCap {
        StopReason::SafetyCap
    } else {
        engine.direct_phase(&mut h, direct_set, floor, cached)?
    };
    engine.finish(h, stop, reverse_set, floor)
}

/// Reverse selection: every component starts in the growing phase.
pub fn run_reverse(
    sample: &Sample,
    marginal: &MarginalValues,
    w: &EvalPoint,
    config: &RodeoConfig,
) -> Result<RodeoResult> {
    let mut engine = Engine::new(sample, marginal, w, config)?;
    let d = engine.d();
    let mut h = Bandwidth::uniform(d, engine.h0, config.beta)?;
    let all: Vec<usize> = (0..d).collect();
    let stop = engine.reverse_phase(&mut h, all.clone())?;
    let floor = engine.floor(Variant::Reverse);
    engine.finish(h, stop, all, floor)
}

/// Dispatches on `config.variant`.
pub fn select(
    sample: &Sample,
    marginal: &MarginalValues,
    w: &EvalPoint,
    config: &RodeoConfig,
) -> Result<RodeoResult> {
    match config.variant {
        Variant::Direct => run_direct(sample, marginal, w, config),
        Variant::Reverse => run_reverse(sample, marginal, w, config),
        Variant::RevDir => run_revdir(sample, marginal, w, config),
    }
}
