//! The three simulation models with closed-form conditional densities.
//!
//! * **A** (`d2 = 2`): `Y₂ ~ IG(4, 3)`, `Y₁ | Y₂ ~ N(0, Y₂)`,
//!   `X_j | Y ~ N(Y₁, Y₂)` i.i.d. No irrelevant direction.
//! * **B** (`d2 = 1`): `X_j ~ N(0, 1)` i.i.d., `Y | X ~ N(3X₁³, 0.5²)`.
//! * **C** (`d2 = 1`): as B with `X_j ~ U[-1, 1]`.
//!
//! The inverse gamma uses the shape–scale convention, density
//! `3⁴/Γ(4) · y^{-5} e^{-3/y}`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};
use crate::sample::{EvalPoint, Sample};

const IG_SHAPE: f64 = 4.0;
const IG_SCALE: f64 = 3.0;
const NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    A,
    B,
    C,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::A => "a",
            Model::B => "b",
            Model::C => "c",
        }
    }

    pub fn d2(self) -> usize {
        match self {
            Model::A => 2,
            Model::B | Model::C => 1,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Model::A),
            "b" => Ok(Model::B),
            "c" => Ok(Model::C),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub model: Model,
    pub d1: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(model: Model, d1: usize, seed: u64) -> Result<Self> {
        if d1 == 0 {
            return Err(Error::InvalidInput("models need d1 >= 1".into()));
        }
        Ok(Self { model, d1, seed })
    }

    pub fn d2(&self) -> usize {
        self.model.d2()
    }

    pub fn d(&self) -> usize {
        self.d1 + self.d2()
    }

    /// Same model and dimension, independent stream.
    pub fn reseeded(&self, tag: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, tag),
            ..*self
        }
    }

    /// `x1,..,xd1,y1[,y2]`.
    pub fn column_names(&self) -> Vec<String> {
        (1..=self.d1)
            .map(|j| format!("x{j}"))
            .chain((1..=self.d2()).map(|j| format!("y{j}")))
            .collect()
    }

    fn draw_row(&self, i: u64, row: &mut [f64]) {
        let mut rng = CounterRng::new(self.seed, i);
        let d1 = self.d1;
        match self.model {
            Model::A => {
                let g: f64 = Gamma::new(IG_SHAPE, 1.0).expect("valid gamma").sample(&mut rng);
                let y2 = IG_SCALE / g;
                let sd = y2.sqrt();
                let y1 = sd * rng.standard_normal();
                for x in &mut row[..d1] {
                    *x = y1 + sd * rng.standard_normal();
                }
                row[d1] = y1;
                row[d1 + 1] = y2;
            }
            Model::B | Model::C => {
                for x in &mut row[..d1] {
                    *x = if self.model == Model::B {
                        rng.standard_normal()
                    } else {
                        2.0 * rng.uniform() - 1.0
                    };
                }
                let x1 = row[0];
                row[d1] = 3.0 * x1 * x1 * x1 + NOISE_SD * rng.standard_normal();
            }
        }
    }
}

/// Draws `n` rows; row `i` depends only on `(seed, i)`.
pub fn sample_model(spec: &ModelSpec, n: usize) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let d = spec.d();
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| spec.draw_row(i as u64, row));
    Sample::new(data, n, spec.d1, spec.d2())
}

fn ln_phi(t: f64) -> f64 {
    -0.5 * t * t - 0.5 * (2.0 * PI).ln()
}

/// `β₁(x) = ½ (6 + Σ x_j² − (Σ x_j)² / (d1 + 1))`.
fn model_a_scale(x: &[f64]) -> f64 {
    let d1 = x.len() as f64;
    let s: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    0.5 * (2.0 * IG_SCALE + s2 - s * s / (d1 + 1.0))
}

/// Conditional density `f(y | x)` at `w = (x, y)`.
pub fn true_density(spec: &ModelSpec, w: &EvalPoint) -> Result<f64> {
    if w.len() != spec.d() {
        return Err(Error::DimensionMismatch {
            what: "evaluation point",
            expected: spec.d(),
            got: w.len(),
        });
    }
    let w = w.as_slice();
    let (x, y) = w.split_at(spec.d1);
    Ok(match spec.model {
        Model::A => {
            let (y1, y2) = (y[0], y[1]);
            if y2 <= 0.0 {
                return Ok(0.0);
            }
            let d1 = spec.d1 as f64;
            let alpha = IG_SHAPE + 0.5 * d1;
            let beta1 = model_a_scale(x);
            let centre = x.iter().sum::<f64>() / (d1 + 1.0);
            let ln_f = 0.5 * (d1 + 1.0).ln() - 0.5 * (2.0 * PI).ln() - ln_gamma(alpha)
                + alpha * beta1.ln()
                - (5.0 + 0.5 * (d1 + 1.0)) * y2.ln()
                - beta1 / y2
                - (y1 - centre).powi(2) * (d1 + 1.0) / (2.0 * y2);
            ln_f.exp()
        }
        Model::B | Model::C => {
            if spec.model == Model::C && x.iter().any(|v| v.abs() > 1.0) {
                return Ok(0.0);
            }
            let r = y[0] - 3.0 * x[0].powi(3);
            (2.0 / PI).sqrt() * (-2.0 * r * r).exp()
        }
    })
}

/// Marginal density `f_X(x)` of the conditioning variables.
///
/// For model A, integrating the normal–inverse-gamma hierarchy gives a
/// multivariate t with 8 degrees of freedom:
/// `(2π)^{-d1/2} (d1+1)^{-1/2} 3⁴ Γ(4 + d1/2) / (Γ(4) β₁(x)^{4 + d1/2})`.
pub fn marginal_density(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.d1 {
        return Err(Error::DimensionMismatch {
            what: "conditioning point",
            expected: spec.d1,
            got: x.len(),
        });
    }
    Ok(match spec.model {
        Model::A => {
            let d1 = spec.d1 as f64;
            let alpha = IG_SHAPE + 0.5 * d1;
            let ln_f = -0.5 * d1 * (2.0 * PI).ln() - 0.5 * (d1 + 1.0).ln() + IG_SHAPE * IG_SCALE.ln()
                - ln_gamma(IG_SHAPE)
                + ln_gamma(alpha)
                - alpha * model_a_scale(x).ln();
            ln_f.exp()
        }
        Model::B => x.iter().map(|&v| ln_phi(v)).sum::<f64>().exp(),
        Model::C => {
            if x.iter().all(|v| v.abs() <= 1.0) {
                0.5f64.powi(spec.d1 as i32)
            } else {
                0.0
            }
        }
    })
}
