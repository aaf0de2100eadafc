//! Univariate smoothing kernels, the J-function `t ↦ K(t) + t K'(t)`, and the
//! norm constants that enter the thresholds and the default initial bandwidth.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, Quadrature};

/// Effective support radius used for unbounded kernels.
pub const GAUSSIAN_EFFECTIVE_RADIUS: f64 = 12.0;

/// Tolerance on the quadrature error estimate of every norm.
pub const NORM_TOLERANCE: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_617_6;

/// A second-order product-kernel factor.
///
/// Both kernels are symmetric, integrate to one and have a vanishing first
/// moment. The Gaussian is unbounded; the biweight `15/16 (1 - t²)²` is
/// supported on `[-1, 1]` and is C¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Kernel {
    #[default]
    Gaussian,
    Biweight,
}

/// L1, L2 and sup norms of `K` and of `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNorms {
    pub k_l1: f64,
    pub k_l2: f64,
    pub k_sup: f64,
    pub j_l1: f64,
    pub j_l2: f64,
    pub j_sup: f64,
}

impl Kernel {
    pub const ALL: [Kernel; 2] = [Kernel::Gaussian, Kernel::Biweight];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Biweight => "biweight",
        }
    }

    /// Number of the first non-vanishing moment.
    pub fn order(self) -> u32 {
        2
    }

    /// Radius outside of which the kernel is (numerically) zero.
    pub fn support_radius(self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSSIAN_EFFECTIVE_RADIUS,
            Kernel::Biweight => 1.0,
        }
    }

    pub fn is_compact(self) -> bool {
        matches!(self, Kernel::Biweight)
    }

    #[inline]
    pub fn evaluate(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * t * t).exp(),
            Kernel::Biweight => {
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    let u = 1.0 - t * t;
                    0.9375 * u * u
                }
            }
        }
    }

    /// `ln K(t)`, `-inf` outside the support.
    #[inline]
    pub fn ln_evaluate(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * t * t - LN_SQRT_2PI,
            Kernel::Biweight => self.evaluate(t).ln(),
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => -t * FRAC_1_SQRT_2PI * (-0.5 * t * t).exp(),
            Kernel::Biweight => {
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    -3.75 * t * (1.0 - t * t)
                }
            }
        }
    }

    /// `J(t) = K(t) + t K'(t)`.
    #[inline]
    pub fn j_function(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * t * t).exp() * (1.0 - t * t),
            Kernel::Biweight => {
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    let u = t * t;
                    0.9375 * (1.0 - u) * (1.0 - 5.0 * u)
                }
            }
        }
    }

    /// Cached norms; computed on first use.
    pub fn norms(self) -> &'static KernelNorms {
        static GAUSSIAN: OnceLock<KernelNorms> = OnceLock::new();
        static BIWEIGHT: OnceLock<KernelNorms> = OnceLock::new();
        let cell = match self {
            Kernel::Gaussian => &GAUSSIAN,
            Kernel::Biweight => &BIWEIGHT,
        };
        cell.get_or_init(|| compute_norms(self).expect("shipped kernels have convergent norms"))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

const SCAN_POINTS: usize = 4801;

fn scan_grid(radius: f64) -> impl Iterator<Item = f64> {
    let step = 2.0 * radius / (SCAN_POINTS - 1) as f64;
    (0..SCAN_POINTS).map(move |i| -radius + step * i as f64)
}

fn bisect_root<F: Fn(f64) -> f64>(g: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Integration breakpoints: the ends of the support plus every sign change
/// of `g` found on a fine scan.
fn breakpoints<F: Fn(f64) -> f64>(g: &F, radius: f64) -> Vec<f64> {
    let mut points = vec![-radius];
    let grid: Vec<f64> = scan_grid(radius).collect();
    for w in grid.windows(2) {
        let (a, b) = (g(w[0]), g(w[1]));
        if a != 0.0 && b != 0.0 && (a < 0.0) != (b < 0.0) {
            points.push(bisect_root(g, w[0], w[1]));
        }
    }
    points.push(radius);
    points
}

fn sup_abs<F: Fn(f64) -> f64>(g: &F, radius: f64) -> f64 {
    let step = 2.0 * radius / (SCAN_POINTS - 1) as f64;
    let best = scan_grid(radius)
        .max_by(|a, b| g(*a).abs().total_cmp(&g(*b).abs()))
        .expect("non-empty grid");
    // golden-section refinement around the best grid point
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = ((best - step).max(-radius), (best + step).min(radius));
    for _ in 0..100 {
        let c = hi - phi * (hi - lo);
        let d = lo + phi * (hi - lo);
        if g(c).abs() > g(d).abs() {
            hi = d;
        } else {
            lo = c;
        }
    }
    g(best).abs().max(g(0.5 * (lo + hi)).abs())
}

fn lp_norm<F: Fn(f64) -> f64>(g: &F, radius: f64, power: i32) -> Result<f64> {
    let cuts = breakpoints(g, radius);
    let Quadrature { value, .. } =
        integrate_pieces(|t| g(t).abs().powi(power), &cuts, NORM_TOLERANCE)?;
    Ok(value.powf(1.0 / power as f64))
}

/// Evaluates the six norms of `K` and `J` by adaptive quadrature over the
/// (effective) support, splitting at sign changes for the L1 norms.
pub fn compute_norms(kernel: Kernel) -> Result<KernelNorms> {
    let radius = kernel.support_radius();
    let k = |t: f64| kernel.evaluate(t);
    let j = |t: f64| kernel.j_function(t);
    let norms = KernelNorms {
        k_l1: lp_norm(&k, radius, 1)?,
        k_l2: lp_norm(&k, radius, 2)?,
        k_sup: sup_abs(&k, radius),
        j_l1: lp_norm(&j, radius, 1)?,
        j_l2: lp_norm(&j, radius, 2)?,
        j_sup: sup_abs(&j, radius),
    };
    Ok(norms)
}

/// `C_λ = 4 ‖J‖₂ ‖K‖₂^{d-1}`.
pub fn c_lambda(norms: &KernelNorms, d: usize) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    4.0 * norms.j_l2 * norms.k_l2.powi(d as i32 - 1)
}

/// `J(t)` for `kernel`; see [`Kernel::j_function`].
pub fn j_function(kernel: Kernel, t: f64) -> f64 {
    kernel.j_function(t)
}
