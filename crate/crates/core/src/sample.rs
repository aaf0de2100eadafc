use crate::error::{Error, Result};

/// Observations `W_i = (X_i, Y_i)`, stored row-major.
///
/// The first `d1` columns are the conditioning variables `X`, the remaining
/// `d2` columns the response `Y`. With `d1 = 0` the sample is a plain
/// density-estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d1: usize,
    d2: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, n: usize, d1: usize, d2: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("sample must be non-empty".into()));
        }
        if d2 == 0 {
            return Err(Error::InvalidInput("sample needs at least one response column".into()));
        }
        let d = d1 + d2;
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                what: "sample data length",
                expected: n * d,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { data, n, d1, d2 })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], d1: usize) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if d <= d1 {
            return Err(Error::InvalidInput(format!(
                "rows of width {d} leave no response column with d1 = {d1}"
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "row width",
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), d1, d - d1)
    }

    /// Univariate density-estimation sample.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, n, 0, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn is_density(&self) -> bool {
        self.d1 == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.data[i * d..(i + 1) * d]
    }

    /// The conditioning part `X_i` of row `i`.
    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.d1]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d())
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New sample made of `columns` (in that order), the first `d1` of which
    /// are treated as conditioning variables.
    pub fn select(&self, columns: &[usize], d1: usize) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.d()) {
            return Err(Error::InvalidInput(format!("column {bad} out of range")));
        }
        if columns.len() <= d1 {
            return Err(Error::InvalidInput("selection leaves no response column".into()));
        }
        let data = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        Self::new(data, self.n, d1, columns.len() - d1)
    }
}

/// Estimation point `w = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint(Vec<f64>);

impl EvalPoint {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("evaluation point is empty".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("evaluation point has non-finite entries".into()));
        }
        Ok(Self(w))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for EvalPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Sample::new(vec![1.0, 2.0, 3.0], 2, 0, 2).is_err());
        assert!(Sample::new(vec![], 0, 0, 1).is_err());
        assert!(Sample::new(vec![1.0, f64::NAN], 2, 0, 1).is_err());
        assert!(Sample::new(vec![1.0, 2.0], 1, 2, 0).is_err());
        assert!(EvalPoint::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn select_reorders_columns() {
        let s = Sample::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], 2).unwrap();
        assert_eq!(s.x(1), &[4.0, 5.0]);
        let t = s.select(&[2, 0], 1).unwrap();
        assert_eq!(t.row(0), &[3.0, 1.0]);
        assert_eq!(t.d1(), 1);
        assert_eq!(t.d2(), 1);
    }
}
