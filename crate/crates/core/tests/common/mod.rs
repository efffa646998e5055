//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use caratheodory::model::{sigmoid, Dataset, Family, ModelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

/// Rows from a mix of shapes: normal, uniform, heavy-tailed and a column on a coarse grid.
pub fn mixed_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, j| match j % 4 {
        0 => StandardNormal.sample(r),
        1 => r.random_range(-1.0..1.0),
        2 => {
            let u: f64 = r.random_range(0.05..1.0);
            u.powf(-0.5) - 1.0
        }
        _ => r.random_range(0..4) as f64,
    })
}

/// Kernel vector of a wide matrix via a full singular value decomposition of
/// its zero-padded square form: the right singular vector belonging to the
/// smallest singular value.
pub fn svd_kernel(a: &DMatrix<f64>) -> DVector<f64> {
    let (m, k) = a.shape();
    assert!(k > m);
    let mut sq = DMatrix::zeros(k, k);
    sq.view_mut((0, 0), (m, k)).copy_from(a);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    v_t.row(idx).transpose()
}

/// `[Fᵀ; 1ᵀ]` for moment rows `f`.
pub fn stacked(f: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, n) = f.shape();
    DMatrix::from_fn(n + 1, k, |j, i| if j < n { f[(i, j)] } else { 1.0 })
}

/// Phase-one simplex with Bland's rule: a basic feasible `w ≥ 0` with
/// `A w = b`, or `None` when the system is infeasible.
pub fn lp_feasible_vertex(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, k) = a.shape();
    // tableau columns: k originals, m artificials, rhs
    let cols = k + m + 1;
    let mut t = DMatrix::<f64>::zeros(m + 1, cols);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            t[(i, j)] = s * a[(i, j)];
        }
        t[(i, k + i)] = 1.0;
        t[(i, cols - 1)] = s * b[i];
    }
    // objective row: minimise the sum of artificials, kept in reduced form
    for j in 0..cols {
        let mut s = 0.0;
        for i in 0..m {
            s += t[(i, j)];
        }
        t[(m, j)] = if (k..k + m).contains(&j) { 0.0 } else { -s };
    }
    let mut basis: Vec<usize> = (k..k + m).collect();
    let eps = 1e-12;
    for _ in 0..10_000 {
        let Some(enter) = (0..k + m).find(|&j| t[(m, j)] < -eps) else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[(i, enter)] > eps {
                let ratio = t[(i, cols - 1)] / t[(i, enter)];
                let better = match leave {
                    None => true,
                    Some((li, best)) => ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (row, _) = leave?;
        let p = t[(row, enter)];
        for j in 0..cols {
            t[(row, j)] /= p;
        }
        for i in 0..=m {
            if i != row {
                let factor = t[(i, enter)];
                if factor != 0.0 {
                    for j in 0..cols {
                        t[(i, j)] -= factor * t[(row, j)];
                    }
                }
            }
        }
        basis[row] = enter;
    }
    let infeasibility = -t[(m, cols - 1)];
    if infeasibility.abs() > 1e-9 {
        return None;
    }
    let mut w = DVector::zeros(k);
    for (i, &bv) in basis.iter().enumerate() {
        if bv < k {
            w[bv] = t[(i, cols - 1)].max(0.0);
        }
    }
    Some(w)
}

pub fn naive_loss(model: &ModelSpec, theta: &DVector<f64>, data: &Dataset) -> f64 {
    let n = data.n_samples();
    let mut total = 0.0;
    for i in 0..n {
        let z: f64 = (0..theta.len()).map(|k| data.x()[(i, k)] * theta[k]).sum();
        let y = data.y()[i];
        total += match model.family {
            Family::LeastSquares => (z - y) * (z - y),
            Family::Logistic => {
                let p = sigmoid(z);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
        };
    }
    total / n as f64 + model.l1_lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
}

pub fn naive_gradient(model: &ModelSpec, theta: &DVector<f64>, data: &Dataset) -> DVector<f64> {
    let (n, d) = (data.n_samples(), theta.len());
    let mut g = DVector::zeros(d);
    for i in 0..n {
        let z: f64 = (0..d).map(|k| data.x()[(i, k)] * theta[k]).sum();
        let y = data.y()[i];
        let r = match model.family {
            Family::LeastSquares => 2.0 * (z - y),
            Family::Logistic => sigmoid(z) - y,
        };
        for k in 0..d {
            g[k] += r * data.x()[(i, k)] / n as f64;
        }
    }
    for k in 0..d {
        let s = if theta[k] > 0.0 {
            1.0
        } else if theta[k] < 0.0 {
            -1.0
        } else {
            0.0
        };
        g[k] += model.l1_lambda * s;
    }
    g
}

/// Plain Gauss-Southwell block descent written from scratch: full gradient,
/// sort |g| descending, take the shortest prefix holding more than `pct` of
/// the mass, step those coordinates by `−γ g`.
pub fn reference_gs_bcd(
    model: &ModelSpec,
    data: &Dataset,
    gamma: f64,
    pct: f64,
    iters: usize,
) -> Vec<DVector<f64>> {
    let d = data.n_features();
    let mut theta = DVector::zeros(d);
    let mut out = vec![theta.clone()];
    for _ in 0..iters {
        let g = naive_gradient(model, &theta, data);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
        let total: f64 = g.iter().map(|v| v.abs()).sum();
        let mut acc = 0.0;
        for &c in &order {
            theta[c] -= gamma * g[c];
            acc += g[c].abs();
            if acc > pct * total {
                break;
            }
        }
        out.push(theta.clone());
    }
    out
}

pub fn logistic_labels(data: &Dataset) -> Dataset {
    let y = data.y().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    Dataset::new(data.x().clone(), y).unwrap()
}
