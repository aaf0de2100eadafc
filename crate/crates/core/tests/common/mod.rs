//! Oracles and generators shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use cdrodeo::estimator::{self, MarginalValues};
use cdrodeo::rng::CounterRng;
use cdrodeo::rodeo::{Phase, ProductFloor, ReverseCap, RodeoConfig, RodeoResult, StopReason, Variant};
use cdrodeo::{EvalPoint, Kernel, Sample};

/// Straight triple loop: `-(1/(n h_j²)) Σ_i J(u_ij) Π_{k≠j} K(u_ik)/h_k / m_i`.
pub fn naive_z(sample: &Sample, marginal: &[f64], h: &[f64], w: &[f64], kernel: Kernel, j: usize) -> f64 {
    let n = sample.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = sample.row(i);
        let mut term = 1.0 / marginal[i];
        for k in 0..h.len() {
            let u = (w[k] - row[k]) / h[k];
            if k == j {
                term *= kernel.j_function(u);
            } else {
                term *= kernel.evaluate(u) / h[k];
            }
        }
        total += term;
    }
    -total / (n as f64 * h[j] * h[j])
}

/// Straight loop estimate.
pub fn naive_estimate(sample: &Sample, marginal: &[f64], h: &[f64], w: &[f64], kernel: Kernel) -> f64 {
    let n = sample.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = sample.row(i);
        let mut term = 1.0 / marginal[i];
        for k in 0..h.len() {
            term *= kernel.evaluate((w[k] - row[k]) / h[k]) / h[k];
        }
        total += term;
    }
    total / n as f64
}

/// Five-point central difference of `estimate` in `h_j`.
pub fn fd_derivative(sample: &Sample, marginal: &MarginalValues, h: &[f64], w: &EvalPoint, kernel: Kernel, j: usize) -> f64 {
    let step = 1e-3 * h[j];
    let at = |delta: f64| {
        let mut hh = h.to_vec();
        hh[j] += delta;
        estimator::estimate(sample, marginal, &hh, w, kernel).unwrap()
    };
    (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step)
}

/// A random estimation problem.
pub struct Instance {
    pub sample: Sample,
    pub marginal: MarginalValues,
    pub h: Vec<f64>,
    pub w: EvalPoint,
}

/// `n ∈ [nmin, nmax]`, `d ∈ [1, dmax]`, normal data with `Y` depending on
/// `X₁`, positive marginal values, `h ∈ [0.2, 2]`, `w` near the data.
pub fn random_instance(seed: u64, nmin: usize, nmax: usize, dmax: usize) -> Instance {
    let mut rng = CounterRng::new(seed, 0);
    let n = nmin + (rng.uniform() * (nmax - nmin + 1) as f64) as usize;
    let d = 1 + (rng.uniform() * dmax as f64) as usize;
    let d1 = (rng.uniform() * d as f64) as usize;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let start = data.len();
        for k in 0..d {
            let v = rng.standard_normal();
            data.push(if k >= d1 && d1 > 0 { v + data[start] } else { v });
        }
    }
    let sample = Sample::new(data, n, d1, d - d1).unwrap();
    let marginal = if d1 == 0 {
        MarginalValues::unit(n)
    } else {
        MarginalValues::new((0..n).map(|_| 0.2 + 1.8 * rng.uniform()).collect()).unwrap()
    };
    let h = (0..d).map(|_| 0.2 + 1.8 * rng.uniform()).collect();
    let w = EvalPoint::new((0..d).map(|_| 1.5 * rng.standard_normal()).collect()).unwrap();
    Instance { sample, marginal, h, w }
}

/// A random selector configuration and problem.
pub struct RandomRun {
    pub sample: Sample,
    pub marginal: MarginalValues,
    pub w: EvalPoint,
    pub config: RodeoConfig,
}

pub fn random_run(seed: u64) -> RandomRun {
    let mut rng = CounterRng::new(seed, 1);
    let mut pick = |k: usize| ((rng.uniform() * k as f64) as usize).min(k - 1);
    let n = [20, 60, 150, 400][pick(4)];
    let d = 1 + pick(4);
    let d1 = pick(d);
    let kernel = [Kernel::Gaussian, Kernel::Biweight][pick(2)];
    let variant = [Variant::Direct, Variant::Reverse, Variant::RevDir][pick(3)];
    let a = [None, Some(-1.0), Some(0.0), Some(0.5), Some(1.0), Some(2.0)][pick(6)];
    let reverse_cap = [ReverseCap::ActiveOnly, ReverseCap::AllComponents][pick(2)];
    let floor = [ProductFloor::ByVariant, ProductFloor::LogN, ProductFloor::LogNPowOnePlusA][pick(3)];
    let threshold_scale = [1.0, 1.0, 0.0, 0.3, 3.0][pick(5)];
    let mut rng = CounterRng::new(seed, 2);
    let beta = 0.5 + 0.45 * rng.uniform();
    let h0 = if rng.uniform() < 0.5 { None } else { Some(0.05 + 0.95 * rng.uniform()) };
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let x0 = rng.standard_normal();
        for k in 0..d {
            let v = if k == 0 { x0 } else { rng.standard_normal() };
            data.push(if k == d1 && d1 > 0 { x0 * x0 + 0.5 * v } else { v });
        }
    }
    let sample = Sample::new(data, n, d1, d - d1).unwrap();
    let marginal = if d1 == 0 {
        MarginalValues::unit(n)
    } else {
        let raw = (0..n)
            .map(|i| sample.x(i).iter().map(|x| (-0.5 * x * x).exp() * 0.398_942_280_401_432_7).product())
            .collect();
        MarginalValues::new(raw).unwrap()
    };
    let w = EvalPoint::new((0..d).map(|_| rng.standard_normal()).collect()).unwrap();
    let config = RodeoConfig {
        a,
        beta,
        h0,
        kernel,
        variant,
        floor,
        reverse_cap,
        threshold_scale,
        ..RodeoConfig::default()
    };
    RandomRun { sample, marginal, w, config }
}

/// `d · ceil(log_{1/β} n) + d`.
pub fn z_evaluation_bound(d: usize, n: usize, beta: f64) -> usize {
    d * ((n as f64).ln() / (1.0 / beta).ln()).ceil() as usize + d
}

fn on_grid(v: f64, h0: f64, beta: f64) -> bool {
    let t = (v / h0).ln() / beta.ln();
    let r = t.round();
    ((h0 * beta.powf(r) - v) / v).abs() <= 1e-12
}

/// Checks the path invariants of a finished run.
pub fn check_path(result: &RodeoResult, sample: &Sample, marginal: &MarginalValues, w: &EvalPoint, config: &RodeoConfig) -> Result<(), String> {
    let d = sample.d();
    let h0 = result.h0;
    let beta = config.beta;
    let trace = &result.trace;
    let final_h = result.bandwidth.values();

    // grid membership, including the recorded exponents
    for it in &trace.iterations {
        for &v in it.committed_bandwidth.values().iter().chain(it.tested_bandwidth.values()) {
            if !on_grid(v, h0, beta) {
                return Err(format!("value {v} off the grid (h0 {h0}, beta {beta}) at t = {}", it.t));
            }
        }
    }
    for k in 0..d {
        let want = h0 * beta.powi(result.deactivation_times[k]);
        if ((final_h[k] - want) / want).abs() > 1e-12 {
            return Err(format!("component {k}: {} is not beta^t_k h0 = {want}", final_h[k]));
        }
    }

    // phase ordering and t labels
    let mut last_phase = Phase::Init;
    let mut last_t = 0;
    for (idx, it) in trace.iterations.iter().enumerate() {
        match it.phase {
            Phase::Init => {
                if idx != 0 || it.t != 0 {
                    return Err("init record must come first with t = 0".into());
                }
            }
            Phase::Reverse => {
                if it.t >= 0 || last_phase == Phase::Direct || (last_phase == Phase::Reverse && it.t != last_t - 1) {
                    return Err(format!("bad reverse label t = {}", it.t));
                }
                if last_phase != Phase::Reverse && it.t != -1 {
                    return Err("reverse phase must start at t = -1".into());
                }
            }
            Phase::Direct => {
                if it.t <= 0 || (last_phase == Phase::Direct && it.t != last_t + 1) {
                    return Err(format!("bad direct label t = {}", it.t));
                }
                if last_phase != Phase::Direct && it.t != 1 {
                    return Err("direct phase must start at t = 1".into());
                }
            }
        }
        last_phase = it.phase;
        last_t = it.t;
    }

    // monotone committed paths, frozen inactive components, decisions
    let mut prev: Vec<f64> = vec![h0; d];
    let mut prev_phase = Phase::Init;
    let mut prev_continuing: Option<Vec<usize>> = None;
    let mut left_reverse: Vec<bool> = vec![false; d];
    for it in &trace.iterations {
        let now = it.committed_bandwidth.values();
        let continuing: Vec<usize> = it
            .z_values
            .iter()
            .zip(&it.lambda_values)
            .filter(|((_, z), (_, l))| match it.phase {
                Phase::Reverse => z.abs() <= *l,
                _ => z.abs() > *l,
            })
            .map(|((k, _), _)| *k)
            .collect();
        if it.phase == prev_phase && it.phase != Phase::Init {
            if let Some(prev_cont) = &prev_continuing {
                if &it.active_set != prev_cont {
                    return Err(format!("active set at t = {} is not the continuing set of the previous step", it.t));
                }
            }
        }
        for k in 0..d {
            let moved = now[k] != prev[k];
            let active = it.active_set.contains(&k);
            if moved && !active {
                return Err(format!("inactive component {k} moved at t = {}", it.t));
            }
            match it.phase {
                Phase::Reverse if now[k] < prev[k] => return Err(format!("component {k} decreased in reverse phase")),
                Phase::Direct if now[k] > prev[k] => return Err(format!("component {k} increased in direct phase")),
                Phase::Init if moved => return Err("init step moved a component".into()),
                _ => {}
            }
            if moved && it.phase == Phase::Direct && left_reverse[k] {
                return Err(format!("component {k} left the reverse phase and moved later"));
            }
            if moved != (active && continuing.contains(&k) && it.phase != Phase::Init) {
                return Err(format!("component {k} at t = {}: update disagrees with its test", it.t));
            }
            if it.phase == Phase::Reverse && active && !continuing.contains(&k) {
                left_reverse[k] = true;
            }
        }
        prev = now.to_vec();
        prev_phase = it.phase;
        prev_continuing = Some(continuing);
    }
    if trace.iterations.last().map_or(vec![h0; d], |it| it.committed_bandwidth.values().to_vec()) != final_h {
        return Err("final bandwidth differs from the last committed one".into());
    }

    // stopping soundness
    let product: f64 = final_h.iter().product();
    if trace.stop_reason == StopReason::ProductFloor {
        let floor = trace.product_floor;
        if product >= floor {
            return Err(format!("product floor stop with product {product} >= floor {floor}"));
        }
        let directs: Vec<_> = trace.phase(Phase::Direct).collect();
        let before = if directs.len() >= 1 {
            directs[directs.len() - 1].tested_bandwidth.values().iter().product::<f64>()
        } else {
            h0.powi(d as i32)
        };
        if !directs.is_empty() && before < floor {
            return Err(format!("penultimate product {before} already below floor {floor}"));
        }
        if product < beta.powi(d as i32) * floor * (1.0 - 1e-12) && !directs.is_empty() {
            return Err(format!("final product {product} below beta^d floor"));
        }
    }
    if trace.stop_reason == StopReason::ReverseCap {
        let reverse_set = &trace.reverse_set;
        if reverse_set.is_empty() {
            return Err("reverse cap without a reverse set".into());
        }
    }

    // reported estimate
    let est = estimator::estimate(sample, marginal, final_h, w, config.kernel).map_err(|e| e.to_string())?;
    if (est - result.estimate).abs() > 1e-12 * est.abs().max(1e-300) {
        return Err(format!("estimate {} differs from re-evaluation {est}", result.estimate));
    }

    // counted Z evaluations
    let recorded: usize = trace.iterations.iter().map(|it| it.active_set.len()).sum();
    if trace.z_evaluations > recorded {
        return Err("more Z evaluations than tested components".into());
    }
    Ok(())
}
