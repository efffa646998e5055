use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability measure on finitely many atoms, each atom an index into an
/// external dataset.
///
/// Fields are public so callers can inspect or assemble measures directly;
/// [`DiscreteMeasure::new`] and [`DiscreteMeasure::validate`] enforce the
/// invariants (nonnegative weights, unit mass, distinct atoms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let m = Self { support, weights };
        m.validate()?;
        Ok(m)
    }

    /// The empirical measure `1/N Σ δ_i` on atoms `0..n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform measure needs at least one atom");
        Self {
            support: (0..n).collect(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// A Dirac mass on a single atom.
    pub fn dirac(atom: usize) -> Self {
        Self {
            support: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.len() != self.weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                self.support.len(),
                self.weights.len()
            )));
        }
        if self.support.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if let Some((i, w)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidMeasure(format!("weight {i} is {w}")));
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {mass}")));
        }
        let mut seen = HashSet::with_capacity(self.support.len());
        if let Some(dup) = self.support.iter().find(|a| !seen.insert(**a)) {
            return Err(Error::InvalidMeasure(format!("atom {dup} repeated")));
        }
        Ok(())
    }

    /// Weighted column means `Σ_i w_i F_{a_i, ·}`.
    pub fn moments(&self, f: &MomentMatrix) -> DVector<f64> {
        let values = f.values();
        let mut out = DVector::zeros(values.ncols());
        for (atom, w) in self.iter() {
            for j in 0..values.ncols() {
                out[j] += w * values[(atom, j)];
            }
        }
        out
    }
}

/// Row `i` holds the test-function values `(f_1(z_i), …, f_n(z_i))` of atom `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix(DMatrix<f64>);

impl MomentMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "moment matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure(
                "moment matrix has non-finite entries".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Number of atoms `N`.
    pub fn atoms(&self) -> usize {
        self.0.nrows()
    }

    /// Number of test functions `n`.
    pub fn functions(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Outcome of a recombination: the reduced measure, how many atoms were
/// zeroed, and the largest relative moment error
/// `max_j |m̂_j − m_j| / (1 + |m_j|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecombinationResult {
    pub measure: DiscreteMeasure,
    pub eliminations: usize,
    pub moment_residual: f64,
}

/// Largest relative moment error between `reduced` and `target` moments.
pub fn relative_residual(reduced: &DVector<f64>, target: &DVector<f64>) -> f64 {
    reduced
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}
