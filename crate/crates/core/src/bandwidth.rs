use crate::error::{Error, Result};

/// A bandwidth vector on the geometric grid `{β^t h0 : t ∈ ℤ}`.
///
/// Component `k` is `h0 · β^{exponents[k]}`; negative exponents are above
/// `h0`, positive ones below.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    values: Vec<f64>,
    exponents: Vec<i32>,
    h0: f64,
    beta: f64,
}

impl Bandwidth {
    pub fn uniform(d: usize, h0: f64, beta: f64) -> Result<Self> {
        Self::from_exponents(vec![0; d], h0, beta)
    }

    pub fn from_exponents(exponents: Vec<i32>, h0: f64, beta: f64) -> Result<Self> {
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(Error::InvalidInput(format!("h0 must be positive, got {h0}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
        }
        if exponents.is_empty() {
            return Err(Error::InvalidInput("bandwidth needs at least one component".into()));
        }
        let values = exponents.iter().map(|&t| h0 * beta.powi(t)).collect();
        Ok(Self {
            values,
            exponents,
            h0,
            beta,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exponents(&self) -> &[i32] {
        &self.exponents
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn product(&self) -> f64 {
        self.values.iter().product()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Moves component `k` by `steps` grid points (positive shrinks).
    pub fn step(&mut self, k: usize, steps: i32) {
        self.exponents[k] += steps;
        self.values[k] = self.h0 * self.beta.powi(self.exponents[k]);
    }
}

impl AsRef<[f64]> for Bandwidth {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let mut h = Bandwidth::uniform(3, 0.5, 0.8).unwrap();
        h.step(0, -2);
        h.step(2, 3);
        assert!((h.values()[0] - 0.5 / 0.64).abs() < 1e-15);
        assert!((h.values()[2] - 0.5 * 0.512).abs() < 1e-15);
        assert_eq!(h.exponents(), &[-2, 0, 3]);
        assert!((h.product() - 0.5 / 0.64 * 0.5 * 0.256).abs() < 1e-15);
        assert!(Bandwidth::uniform(2, 0.0, 0.8).is_err());
        assert!(Bandwidth::uniform(2, 0.5, 1.0).is_err());
    }
}
