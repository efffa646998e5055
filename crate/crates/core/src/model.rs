//! Loss families, per-sample gradients and (weighted) empirical risk.
//!
//! Every loss here is a function of the linear score `z = xᵀθ`, so a
//! per-sample gradient is always `ℓ'(z_i, y_i)·x_i`. The evaluation routines
//! work with that scalar derivative (the "residual") and only form gradient
//! rows when asked.
//!
//! The L1 penalty is data-independent. It is excluded from per-sample
//! gradients, so a recombined measure matches only the data part, and is
//! added back deterministically as `λ·sign(θ)` (with `sign(0) = 0`).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recombination::DiscreteMeasure;

pub type Theta = DVector<f64>;

/// Rows per chunk in parallel full-data passes. Fixed so that the summation
/// order, and therefore every bit of the result, does not depend on the
/// number of worker threads.
const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Binary cross-entropy with labels in `{0, 1}`.
    Logistic,
    /// Squared error `(xᵀθ − y)²`.
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub l1_lambda: f64,
}

impl ModelSpec {
    pub fn logistic() -> Self {
        Self {
            family: Family::Logistic,
            l1_lambda: 0.0,
        }
    }

    pub fn least_squares() -> Self {
        Self {
            family: Family::LeastSquares,
            l1_lambda: 0.0,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        Self {
            family: Family::LeastSquares,
            l1_lambda: lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l1_lambda must be finite and >= 0, got {}",
                self.l1_lambda
            )));
        }
        Ok(())
    }

    /// Per-sample loss at score `z`.
    #[inline]
    pub fn sample_loss(&self, z: f64, y: f64) -> f64 {
        match self.family {
            Family::LeastSquares => (z - y) * (z - y),
            Family::Logistic => softplus(z) - y * z,
        }
    }

    /// Derivative of the per-sample loss with respect to the score.
    #[inline]
    pub fn sample_residual(&self, z: f64, y: f64) -> f64 {
        match self.family {
            Family::LeastSquares => 2.0 * (z - y),
            Family::Logistic => sigmoid(z) - y,
        }
    }

    /// `λ|θ|₁`.
    pub fn penalty(&self, theta: &Theta) -> f64 {
        if self.l1_lambda == 0.0 {
            0.0
        } else {
            self.l1_lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
        }
    }

    /// Subgradient `λ·sign(θ_j)` with `sign(0) = 0`.
    #[inline]
    pub fn penalty_subgradient(&self, theta_j: f64) -> f64 {
        self.l1_lambda * sign(theta_j)
    }
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Features `X` (`N × d`) and targets `y` (`N`). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidDataset(format!(
                "need N >= 1 and d >= 1, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Appends a constant-one column.
    pub fn with_intercept(&self) -> Self {
        let (n, d) = self.x.shape();
        let x = self.x.clone().insert_column(d, 1.0);
        debug_assert_eq!(x.shape(), (n, d + 1));
        Self {
            x,
            y: self.y.clone(),
        }
    }

    /// Checks the label domain required by `model`.
    pub fn check_for(&self, model: &ModelSpec) -> Result<()> {
        if model.family == Family::Logistic {
            if let Some(i) = self.y.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::InvalidDataset(format!(
                    "logistic labels must be 0 or 1; row {i} has {}",
                    self.y[i]
                )));
            }
        }
        Ok(())
    }

    /// `xᵢᵀθ`.
    #[inline]
    pub fn score(&self, i: usize, theta: &Theta) -> f64 {
        let mut z = 0.0;
        for j in 0..self.x.ncols() {
            z += self.x[(i, j)] * theta[j];
        }
        z
    }
}

/// Loss, gradient and per-sample residuals from one pass over the data.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Empirical risk including the penalty.
    pub loss: f64,
    /// Mean gradient including the penalty subgradient.
    pub gradient: DVector<f64>,
    /// `ℓ'(z_i, y_i)` per sample; row `i` of the per-sample gradient is `residuals[i]·x_i`.
    pub residuals: DVector<f64>,
}

impl Evaluation {
    /// Per-sample gradient rows restricted to `coords` (penalty excluded).
    pub fn gradient_rows(&self, data: &Dataset, coords: &[usize]) -> DMatrix<f64> {
        let x = data.x();
        DMatrix::from_fn(x.nrows(), coords.len(), |i, c| {
            self.residuals[i] * x[(i, coords[c])]
        })
    }
}

fn check_theta(theta: &Theta, data: &Dataset) -> Result<()> {
    if theta.len() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, data has {} features",
            theta.len(),
            data.n_features()
        )));
    }
    Ok(())
}

fn check_coords(coords: &[usize], d: usize) -> Result<()> {
    if let Some(c) = coords.iter().find(|c| **c >= d) {
        return Err(Error::DimensionMismatch(format!(
            "coordinate {c} out of range for d = {d}"
        )));
    }
    Ok(())
}

fn check_weights(weights: &DiscreteMeasure, data: &Dataset) -> Result<()> {
    if let Some(a) = weights.support.iter().find(|a| **a >= data.n_samples()) {
        return Err(Error::DimensionMismatch(format!(
            "atom {a} out of range for N = {}",
            data.n_samples()
        )));
    }
    Ok(())
}

/// One deterministic pass computing loss, mean gradient and residuals under
/// the empirical (uniform) measure.
pub fn evaluate(model: &ModelSpec, theta: &Theta, data: &Dataset) -> Result<Evaluation> {
    check_theta(theta, data)?;
    let (n, d) = data.x().shape();
    let chunks: Vec<(f64, DVector<f64>, DVector<f64>)> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_ROWS;
            let len = CHUNK_ROWS.min(n - start);
            let xs = data.x().rows(start, len);
            let ys = data.y().rows(start, len);
            let z = xs * theta;
            let mut loss = 0.0;
            let mut r = DVector::zeros(len);
            for i in 0..len {
                loss += model.sample_loss(z[i], ys[i]);
                r[i] = model.sample_residual(z[i], ys[i]);
            }
            let g = xs.tr_mul(&r);
            (loss, g, r)
        })
        .collect();

    let mut loss = 0.0;
    let mut gradient = DVector::zeros(d);
    let mut residuals = DVector::zeros(n);
    for (c, (l, g, r)) in chunks.into_iter().enumerate() {
        loss += l;
        gradient += g;
        residuals.rows_mut(c * CHUNK_ROWS, r.len()).copy_from(&r);
    }
    let inv_n = 1.0 / n as f64;
    loss = loss * inv_n + model.penalty(theta);
    gradient *= inv_n;
    for j in 0..d {
        gradient[j] += model.penalty_subgradient(theta[j]);
    }
    Ok(Evaluation {
        loss,
        gradient,
        residuals,
    })
}

/// `Σ_i w_i L_θ(z_i) + λ|θ|₁`, uniform weights when `weights` is `None`.
pub fn loss(
    model: &ModelSpec,
    theta: &Theta,
    data: &Dataset,
    weights: Option<&DiscreteMeasure>,
) -> Result<f64> {
    check_theta(theta, data)?;
    match weights {
        None => Ok(evaluate(model, theta, data)?.loss),
        Some(mu) => {
            check_weights(mu, data)?;
            let data_part: f64 = mu
                .iter()
                .map(|(i, w)| w * model.sample_loss(data.score(i, theta), data.y()[i]))
                .sum();
            Ok(data_part + model.penalty(theta))
        }
    }
}

/// `N × |coords|` matrix whose row `i` is `∇_θ L_θ(z_i)` restricted to
/// `coords` (all coordinates by default), penalty excluded.
pub fn per_sample_gradient(
    model: &ModelSpec,
    theta: &Theta,
    data: &Dataset,
    coords: Option<&[usize]>,
) -> Result<DMatrix<f64>> {
    check_theta(theta, data)?;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => {
            check_coords(c, data.n_features())?;
            c
        }
        None => {
            all = (0..data.n_features()).collect();
            &all
        }
    };
    let x = data.x();
    let z = x * theta;
    Ok(DMatrix::from_fn(x.nrows(), coords.len(), |i, c| {
        model.sample_residual(z[i], data.y()[i]) * x[(i, coords[c])]
    }))
}

/// Weighted mean of the per-sample gradient rows plus `λ·sign(θ)`, restricted
/// to `coords`.
pub fn mean_gradient(
    model: &ModelSpec,
    theta: &Theta,
    data: &Dataset,
    weights: Option<&DiscreteMeasure>,
    coords: Option<&[usize]>,
) -> Result<DVector<f64>> {
    check_theta(theta, data)?;
    if let Some(c) = coords {
        check_coords(c, data.n_features())?;
    }
    let full = match weights {
        None => evaluate(model, theta, data)?.gradient,
        Some(mu) => {
            check_weights(mu, data)?;
            WeightedSample::new(data, mu).gradient(model, theta)
        }
    };
    Ok(match coords {
        None => full,
        Some(c) => DVector::from_iterator(c.len(), c.iter().map(|&j| full[j])),
    })
}

/// A small weighted subset of the data with its rows copied out, for cheap
/// repeated gradient evaluation under a reduced measure.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub atoms: Vec<usize>,
    pub weights: Vec<f64>,
    /// `k × d` copy of the feature rows.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl WeightedSample {
    pub fn new(data: &Dataset, mu: &DiscreteMeasure) -> Self {
        let d = data.n_features();
        let x = DMatrix::from_fn(mu.len(), d, |r, c| data.x()[(mu.support[r], c)]);
        Self {
            atoms: mu.support.clone(),
            weights: mu.weights.clone(),
            x,
            y: mu.support.iter().map(|&i| data.y()[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Weighted gradient including the penalty subgradient.
    pub fn gradient(&self, model: &ModelSpec, theta: &Theta) -> DVector<f64> {
        let z = &self.x * theta;
        let mut scaled = DVector::zeros(self.len());
        for k in 0..self.len() {
            scaled[k] = self.weights[k] * model.sample_residual(z[k], self.y[k]);
        }
        let mut g = self.x.tr_mul(&scaled);
        for j in 0..g.len() {
            g[j] += model.penalty_subgradient(theta[j]);
        }
        g
    }
}
