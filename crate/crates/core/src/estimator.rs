//! The kernel conditional density estimator
//!
//! ```text
//! f̂_h(w) = (1/n) Σ_i K_h(w − W_i) / f̃_X(X_i),   K_h(v) = Π_k h_k⁻¹ K(v_k / h_k)
//! ```
//!
//! its bandwidth derivatives `Z_hj = ∂f̂_h(w)/∂h_j`, and the thresholds the
//! selector compares them against.
//!
//! All sums over observations run in fixed blocks of [`BLOCK`] rows. Blocks
//! may be evaluated on the rayon pool, but the block partial sums are always
//! combined by the same pairwise tree, so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{c_lambda, Kernel, KernelNorms};
use crate::sample::{EvalPoint, Sample};

/// Rows per summation block.
pub const BLOCK: usize = 2048;

/// Above this dimension the per-row kernel products are accumulated in
/// log-space.
pub const LOG_SPACE_ABOVE: usize = 8;

const PARALLEL_MIN_BLOCKS: usize = 4;

/// `f̃_X(X_i)` for every observation, floored at `n^{-1/2}` unless built
/// with [`MarginalValues::exact`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalValues {
    values: Vec<f64>,
}

impl MarginalValues {
    /// Applies the floor `max(v, n^{-1/2})` with `n = raw.len()`.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("no marginal values".into()));
        }
        let floor = Self::floor(raw.len());
        let mut values = raw;
        for (i, v) in values.iter_mut().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "marginal value {i} is {v}; expected a finite non-negative number"
                )));
            }
            *v = v.max(floor);
        }
        Ok(Self { values })
    }

    /// Uses `raw` as is; every value must be finite and positive.
    pub fn exact(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("no marginal values".into()));
        }
        if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "marginal value {i} is {v}; expected a finite positive number"
            )));
        }
        Ok(Self { values: raw })
    }

    /// Unit marginal for density estimation (`d1 = 0`).
    pub fn unit(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
        }
    }

    pub fn floor(n: usize) -> f64 {
        (n as f64).powf(-0.5)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_dims(sample: &Sample, marginal: &MarginalValues, h: &[f64], w: &[f64]) -> Result<()> {
    let d = sample.d();
    if marginal.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            what: "marginal values",
            expected: sample.n(),
            got: marginal.len(),
        });
    }
    if h.len() != d {
        return Err(Error::DimensionMismatch {
            what: "bandwidth",
            expected: d,
            got: h.len(),
        });
    }
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            what: "evaluation point",
            expected: d,
            got: w.len(),
        });
    }
    if let Some(bad) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("bandwidth component {bad} is not positive")));
    }
    Ok(())
}

/// Sums of `K_h(w − W_i)/f̃_X(X_i)` and of `J(u_ij) Π_{k≠j} h_k⁻¹K(u_ik) / f̃_X(X_i)`
/// for each requested `j`, in that order.
struct Kernelsum<'a> {
    sample: &'a Sample,
    marginal: &'a [f64],
    h: &'a [f64],
    w: &'a [f64],
    kernel: Kernel,
    components: &'a [usize],
}

impl Kernelsum<'_> {
    fn width(&self) -> usize {
        1 + self.components.len()
    }

    fn block(&self, start: usize, end: usize) -> Vec<f64> {
        let d = self.h.len();
        let log_space = d > LOG_SPACE_ABOVE;
        let mut acc = vec![0.0; self.width()];
        let mut u = vec![0.0; d];
        let mut factor = vec![0.0; d];
        // prefix[k] = combined factors 0..k, suffix[k] = factors k..d
        let mut prefix = vec![0.0; d + 1];
        let mut suffix = vec![0.0; d + 1];
        let ln_h: Vec<f64> = if log_space {
            self.h.iter().map(|v| v.ln()).collect()
        } else {
            Vec::new()
        };
        for i in start..end {
            let row = self.sample.row(i);
            for k in 0..d {
                u[k] = (self.w[k] - row[k]) / self.h[k];
                factor[k] = if log_space {
                    self.kernel.ln_evaluate(u[k]) - ln_h[k]
                } else {
                    self.kernel.evaluate(u[k]) / self.h[k]
                };
            }
            let inv_m = 1.0 / self.marginal[i];
            if log_space {
                prefix[0] = 0.0;
                suffix[d] = 0.0;
                for k in 0..d {
                    prefix[k + 1] = prefix[k] + factor[k];
                    suffix[d - 1 - k] = suffix[d - k] + factor[d - 1 - k];
                }
                acc[0] += prefix[d].exp() * inv_m;
                for (slot, &j) in acc[1..].iter_mut().zip(self.components) {
                    let rest = prefix[j] + suffix[j + 1];
                    if rest > f64::NEG_INFINITY {
                        *slot += self.kernel.j_function(u[j]) * rest.exp() * inv_m;
                    }
                }
            } else {
                prefix[0] = 1.0;
                suffix[d] = 1.0;
                for k in 0..d {
                    prefix[k + 1] = prefix[k] * factor[k];
                    suffix[d - 1 - k] = suffix[d - k] * factor[d - 1 - k];
                }
                acc[0] += prefix[d] * inv_m;
                for (slot, &j) in acc[1..].iter_mut().zip(self.components) {
                    *slot += self.kernel.j_function(u[j]) * prefix[j] * suffix[j + 1] * inv_m;
                }
            }
        }
        acc
    }

    fn run(&self) -> Vec<f64> {
        let n = self.sample.n();
        let blocks = n.div_ceil(BLOCK);
        let partials: Vec<Vec<f64>> = if blocks >= PARALLEL_MIN_BLOCKS {
            (0..blocks)
                .into_par_iter()
                .map(|b| self.block(b * BLOCK, ((b + 1) * BLOCK).min(n)))
                .collect()
        } else {
            (0..blocks)
                .map(|b| self.block(b * BLOCK, ((b + 1) * BLOCK).min(n)))
                .collect()
        };
        pairwise(&partials, self.width())
    }
}

/// Fixed-shape pairwise reduction of block partials.
fn pairwise(parts: &[Vec<f64>], width: usize) -> Vec<f64> {
    match parts.len() {
        0 => vec![0.0; width],
        1 => parts[0].clone(),
        len => {
            let (left, right) = parts.split_at(len / 2);
            let mut l = pairwise(left, width);
            let r = pairwise(right, width);
            l.iter_mut().zip(r).for_each(|(a, b)| *a += b);
            l
        }
    }
}

/// `f̂_h(w)`. For a density sample (`d1 = 0`) pass [`MarginalValues::unit`].
pub fn estimate(
    sample: &Sample,
    marginal: &MarginalValues,
    h: impl AsRef<[f64]>,
    w: &EvalPoint,
    kernel: Kernel,
) -> Result<f64> {
    let h = h.as_ref();
    check_dims(sample, marginal, h, w.as_slice())?;
    let sums = Kernelsum {
        sample,
        marginal: marginal.values(),
        h,
        w: w.as_slice(),
        kernel,
        components: &[],
    }
    .run();
    Ok(sums[0] / sample.n() as f64)
}

/// Estimate together with `Z_hj` for each index in `components`, from a
/// single pass over the sample.
pub fn estimate_and_z(
    sample: &Sample,
    marginal: &MarginalValues,
    h: impl AsRef<[f64]>,
    w: &EvalPoint,
    kernel: Kernel,
    components: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let h = h.as_ref();
    check_dims(sample, marginal, h, w.as_slice())?;
    if let Some(&bad) = components.iter().find(|&&j| j >= h.len()) {
        return Err(Error::InvalidInput(format!("component {bad} out of range")));
    }
    let sums = Kernelsum {
        sample,
        marginal: marginal.values(),
        h,
        w: w.as_slice(),
        kernel,
        components,
    }
    .run();
    let n = sample.n() as f64;
    let z = components
        .iter()
        .zip(&sums[1..])
        .map(|(&j, s)| -s / (n * h[j] * h[j]))
        .collect();
    Ok((sums[0] / n, z))
}

/// `Z_hj = ∂f̂_h(w)/∂h_j` for each index in `components`.
pub fn z_statistics(
    sample: &Sample,
    marginal: &MarginalValues,
    h: impl AsRef<[f64]>,
    w: &EvalPoint,
    kernel: Kernel,
    components: &[usize],
) -> Result<Vec<f64>> {
    estimate_and_z(sample, marginal, h, w, kernel, components).map(|(_, z)| z)
}

/// `λ_hj = C_λ √((log n)^a / (n h_j² Π_k h_k))`.
pub fn threshold(norms: &KernelNorms, h: impl AsRef<[f64]>, j: usize, n: f64, a: f64) -> Result<f64> {
    let h = h.as_ref();
    let log_n = n.ln();
    if !(log_n > 0.0) {
        return Err(Error::InvalidInput(format!("threshold needs log n > 0, got n = {n}")));
    }
    if j >= h.len() {
        return Err(Error::InvalidInput(format!("component {j} out of range")));
    }
    let prod: f64 = h.iter().product();
    Ok(c_lambda(norms, h.len()) * (log_n.powf(a) / (n * h[j] * h[j] * prod)).sqrt())
}

/// Lower end of the admissible initial bandwidth range,
/// `C_λ^{2/d} ((log n)^a / n)^{1/(d(2p+1))}`, clamped to at most 1.
pub fn default_h0(norms: &KernelNorms, n: f64, a: f64, d: usize, p: u32) -> f64 {
    let d_f = d as f64;
    let base = n.ln().powf(a) / n;
    let h0 = c_lambda(norms, d).powf(2.0 / d_f) * base.powf(1.0 / (d_f * (2.0 * p as f64 + 1.0)));
    h0.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn phi(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn single_and_pair_estimates() {
        let s = Sample::univariate(vec![0.0]).unwrap();
        let v = estimate(&s, &MarginalValues::unit(1), [1.0], &EvalPoint::zeros(1), Kernel::Gaussian).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);

        let s = Sample::univariate(vec![-1.0, 1.0]).unwrap();
        let v = estimate(&s, &MarginalValues::unit(2), [1.0], &EvalPoint::zeros(1), Kernel::Gaussian).unwrap();
        assert!((v - phi(1.0)).abs() < 1e-15);
        assert!((v - 0.241_971).abs() < 1e-6);
    }

    #[test]
    fn single_point_z() {
        let s = Sample::univariate(vec![0.0]).unwrap();
        let z = z_statistics(&s, &MarginalValues::unit(1), [1.0], &EvalPoint::zeros(1), Kernel::Gaussian, &[0]).unwrap();
        assert!((z[0] + phi(0.0)).abs() < 1e-15);
    }

    #[test]
    fn marginal_division_and_floor() {
        let s = Sample::from_rows(&[[0.0, 0.0], [1.0, 0.5]], 1).unwrap();
        let m = MarginalValues::new(vec![0.9, 0.0]).unwrap();
        assert_eq!(m.values()[1], 2f64.powf(-0.5));
        let got = estimate(&s, &m, [1.0, 1.0], &EvalPoint::zeros(2), Kernel::Gaussian).unwrap();
        let want = 0.5 * (phi(0.0) * phi(0.0) / 0.9 + phi(1.0) * phi(0.5) / 2f64.powf(-0.5));
        assert!((got - want).abs() < 1e-15, "{got} {want}");
        assert!(MarginalValues::new(vec![f64::NAN]).is_err());
        assert!(MarginalValues::new(vec![-1.0]).is_err());
    }

    #[test]
    fn dimension_errors() {
        let s = Sample::univariate(vec![0.0, 1.0]).unwrap();
        let m = MarginalValues::unit(2);
        let w = EvalPoint::zeros(1);
        assert!(matches!(
            estimate(&s, &m, [1.0, 1.0], &w, Kernel::Gaussian),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(estimate(&s, &MarginalValues::unit(3), [1.0], &w, Kernel::Gaussian).is_err());
        assert!(estimate(&s, &m, [0.0], &w, Kernel::Gaussian).is_err());
        assert!(z_statistics(&s, &m, [1.0], &w, Kernel::Gaussian, &[1]).is_err());
    }

    #[test]
    fn threshold_values() {
        let norms = Kernel::Gaussian.norms();
        let l = threshold(norms, [1.0], 0, E, 3.7).unwrap();
        assert!((l - 1.839_875 / E.sqrt()).abs() < 1e-5);
        assert!((l - 1.115_941).abs() < 1e-6);

        let h = [0.3, 0.5, 0.2];
        let mut h2 = h;
        h2[1] *= 2.0;
        let ratio = threshold(norms, h2, 1, 1000.0, 1.0).unwrap() / threshold(norms, h, 1, 1000.0, 1.0).unwrap();
        assert!((ratio - 2f64.powf(-1.5)).abs() < 1e-12);

        let l0 = threshold(norms, h, 2, 500.0, 0.0).unwrap();
        let direct = c_lambda(norms, 3) / (500.0 * 0.04 * 0.03f64).sqrt();
        assert!((l0 - direct).abs() < 1e-12 * direct);

        assert!(threshold(norms, [1.0], 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn threshold_permutation_invariance() {
        let norms = Kernel::Gaussian.norms();
        let a = threshold(norms, [0.3, 0.5, 0.2, 0.9], 0, 1e4, 1.1).unwrap();
        let b = threshold(norms, [0.3, 0.9, 0.5, 0.2], 0, 1e4, 1.1).unwrap();
        assert!((a - b).abs() < 1e-15 * a);
    }

    #[test]
    fn default_h0_values() {
        let norms = Kernel::Gaussian.norms();
        // C_λ² e^{-1/5} ≈ 2.771 > 1: clamped
        assert_eq!(default_h0(norms, E, 0.0, 1, 2), 1.0);
        let raw = c_lambda(norms, 1).powi(2) * (-0.2f64).exp();
        assert!((raw - 2.771).abs() < 1e-3);

        let mut last = f64::INFINITY;
        for n in [10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
            let h = default_h0(norms, n, 1.0, 3, 2);
            assert!(h <= last);
            last = h;
        }

        // d = 5, n = 1e5, a = log 4, by substitution
        let a = 4f64.ln();
        let c = 4.0 * (3.0 / (8.0 * PI.sqrt())).sqrt() * ((2.0 * PI.sqrt()).powf(-0.5)).powi(4);
        let want = c.powf(0.4) * ((1e5f64).ln().powf(a) / 1e5).powf(1.0 / 25.0);
        let got = default_h0(norms, 1e5, a, 5, 2);
        assert!((got - want).abs() < 1e-9);
        assert!((got - 0.335_024_0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn block_structure_is_thread_independent() {
        let n = 5 * BLOCK + 17;
        let data: Vec<f64> = (0..n * 2).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect();
        let s = Sample::new(data, n, 1, 1).unwrap();
        let m = MarginalValues::unit(n);
        let w = EvalPoint::new(vec![0.1, -0.2]).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let run = || estimate_and_z(&s, &m, [0.4, 0.7], &w, Kernel::Gaussian, &[0, 1]).unwrap();
        let a = one.install(run);
        let b = four.install(run);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1[0].to_bits(), b.1[0].to_bits());
        assert_eq!(a.1[1].to_bits(), b.1[1].to_bits());
    }

    #[test]
    fn log_space_matches_direct_products() {
        let d = LOG_SPACE_ABOVE + 2;
        let n = 300;
        let data: Vec<f64> = (0..n * d).map(|i| ((i * 104_729) % 997) as f64 / 400.0 - 1.2).collect();
        let s = Sample::new(data, n, d - 1, 1).unwrap();
        let m = MarginalValues::unit(n);
        let w = EvalPoint::zeros(d);
        let h = vec![0.9; d];
        let comps: Vec<usize> = (0..d).collect();
        let (est, z) = estimate_and_z(&s, &m, &h, &w, Kernel::Gaussian, &comps).unwrap();
        let mut want = 0.0;
        let mut want_z = vec![0.0; d];
        for row in s.rows() {
            let f: Vec<f64> = (0..d).map(|k| Kernel::Gaussian.evaluate(-row[k] / h[k]) / h[k]).collect();
            want += f.iter().product::<f64>();
            for j in 0..d {
                let rest: f64 = (0..d).filter(|&k| k != j).map(|k| f[k]).product();
                want_z[j] -= Kernel::Gaussian.j_function(-row[j] / h[j]) * rest / (h[j] * h[j]);
            }
        }
        want /= n as f64;
        assert!((est - want).abs() < 1e-12 * want.abs());
        for j in 0..d {
            let zj = want_z[j] / n as f64;
            assert!((z[j] - zj).abs() < 1e-11 * zj.abs().max(1e-300));
        }
    }

    #[test]
    fn biweight_zero_factors_do_not_poison_z() {
        // row 1 lies outside the support in column 0 only
        let s = Sample::from_rows(&[[0.1, 0.2], [3.0, 0.1]], 1).unwrap();
        let m = MarginalValues::unit(2);
        let z = z_statistics(&s, &m, [1.0, 1.0], &EvalPoint::zeros(2), Kernel::Biweight, &[0, 1]).unwrap();
        assert!(z.iter().all(|v| v.is_finite()));
    }
}
