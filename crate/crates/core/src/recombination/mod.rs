//! Measure recombination: shrink a discrete probability measure on `N` atoms
//! to one supported on at most `n + 1` of those atoms while keeping the
//! expectations of `n` prescribed test functions.
//!
//! The building block is [`eliminate_one`]: pick a vector `v` in the kernel
//! of the stacked system `[Fᵀ; 1ᵀ]`, move the weights along `-v` until the
//! first one hits zero. Mass and moments are untouched because `v` is in the
//! kernel. [`recombine`] applies that step on a sliding window of `n + 2`
//! atoms; [`recombine_hierarchical`] first works on weighted centroids of
//! `2(n + 1)` groups, halving the support per round.

mod kernel;
mod measure;

pub use measure::{
    relative_residual, DiscreteMeasure, MomentMatrix, RecombinationResult, MASS_TOLERANCE,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative moment tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Weights at or below this fraction of the largest weight are snapped to zero.
const SNAP_RATIO: f64 = 1e-14;

/// One elimination step on `k` active atoms with moment rows `f_active` (`k × n`).
///
/// Returns new weights of which at least one is exactly zero. Ties in the
/// ratio test go to the smallest index.
pub fn eliminate_one(f_active: &DMatrix<f64>, weights: &[f64]) -> Result<Vec<f64>> {
    let (k, n) = f_active.shape();
    if weights.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{k} atoms but {} weights",
            weights.len()
        )));
    }
    let mut stacked = DMatrix::zeros(n + 1, k);
    for i in 0..k {
        for j in 0..n {
            stacked[(j, i)] = f_active[(i, j)];
        }
        stacked[(n, i)] = 1.0;
    }
    let mut v = kernel::kernel_vector(&stacked).ok_or_else(|| {
        Error::NumericalBreakdown(format!(
            "stacked {}x{k} system has full column rank",
            n + 1
        ))
    })?;
    if !v.iter().any(|x| *x > 0.0) {
        v.neg_mut();
    }

    let mut pivot: Option<(usize, f64)> = None;
    for (i, (&vi, &wi)) in v.iter().zip(weights).enumerate() {
        if vi > 0.0 {
            let ratio = wi / vi;
            if pivot.is_none_or(|(_, best)| ratio < best) {
                pivot = Some((i, ratio));
            }
        }
    }
    let (zeroed, alpha) = pivot.ok_or_else(|| {
        Error::NumericalBreakdown("kernel vector has no positive component".into())
    })?;

    let mut out: Vec<f64> = weights
        .iter()
        .zip(v.iter())
        .map(|(w, vi)| w - alpha * vi)
        .collect();
    out[zeroed] = 0.0;
    let largest = out.iter().copied().fold(0.0, f64::max);
    for w in &mut out {
        if *w <= SNAP_RATIO * largest {
            *w = 0.0;
        }
    }
    Ok(out)
}

/// Flat recombination: slide an `n + 2` window over the support and
/// eliminate one atom per step.
pub fn recombine(f: &MomentMatrix, mu: &DiscreteMeasure, tol: f64) -> Result<RecombinationResult> {
    check_inputs(f, mu, tol)?;
    let n = f.functions();
    if mu.len() <= n + 1 {
        return Ok(identity(mu));
    }
    let target = mu.moments(f);
    let (atoms, weights) = positive_part(mu);
    let reduced = reduce_rows(f.values(), &atoms, &weights)?;
    finish(f, &target, atoms.len(), &atoms, &reduced, tol)
}

/// Divide-and-conquer recombination.
///
/// Each round splits the active atoms into `2(n + 1)` contiguous groups
/// (sizes differ by at most one), reduces the weighted group centroids to at
/// most `n + 1` survivors, and rescales the members of surviving groups by
/// their centroid's new mass. Work per round is linear in the number of
/// active atoms, and the support roughly halves each round.
pub fn recombine_hierarchical(
    f: &MomentMatrix,
    mu: &DiscreteMeasure,
    tol: f64,
) -> Result<RecombinationResult> {
    check_inputs(f, mu, tol)?;
    let n = f.functions();
    if mu.len() <= n + 1 {
        return Ok(identity(mu));
    }
    let target = mu.moments(f);
    let values = f.values();
    let groups = 2 * (n + 1);
    let (mut atoms, mut weights) = positive_part(mu);
    let initial = atoms.len();

    while atoms.len() > n + 1 {
        if atoms.len() <= groups {
            weights = reduce_rows(values, &atoms, &weights)?;
            break;
        }
        let m = atoms.len();
        let (base, extra) = (m / groups, m % groups);
        let mut bounds = Vec::with_capacity(groups + 1);
        bounds.push(0);
        for g in 0..groups {
            bounds.push(bounds[g] + base + usize::from(g < extra));
        }

        let mut centroids = DMatrix::zeros(groups, n);
        let mut masses = vec![0.0; groups];
        for g in 0..groups {
            let mass: f64 = weights[bounds[g]..bounds[g + 1]].iter().sum();
            for p in bounds[g]..bounds[g + 1] {
                let share = weights[p] / mass;
                for j in 0..n {
                    centroids[(g, j)] += share * values[(atoms[p], j)];
                }
            }
            masses[g] = mass;
        }
        let group_ids: Vec<usize> = (0..groups).collect();
        let new_masses = reduce_rows(&centroids, &group_ids, &masses)?;

        let mut next_atoms = Vec::with_capacity(m / 2 + groups);
        let mut next_weights = Vec::with_capacity(m / 2 + groups);
        for g in 0..groups {
            if new_masses[g] <= 0.0 {
                continue;
            }
            let ratio = new_masses[g] / masses[g];
            for p in bounds[g]..bounds[g + 1] {
                next_atoms.push(atoms[p]);
                next_weights.push(weights[p] * ratio);
            }
        }
        atoms = next_atoms;
        weights = next_weights;
    }
    finish(f, &target, initial, &atoms, &weights, tol)
}

/// True iff `result` is a valid recombination of `mu` at tolerance `tol`.
pub fn verify_recombination(
    f: &MomentMatrix,
    mu: &DiscreteMeasure,
    result: &RecombinationResult,
    tol: f64,
) -> bool {
    let measure = &result.measure;
    if measure.validate().is_err() || mu.validate().is_err() {
        return false;
    }
    if measure.len() > f.functions() + 1 {
        return false;
    }
    let atoms = f.atoms();
    if measure.support.iter().chain(&mu.support).any(|a| *a >= atoms) {
        return false;
    }
    let residual = relative_residual(&measure.moments(f), &mu.moments(f));
    residual <= tol && result.moment_residual <= tol
}

fn check_inputs(f: &MomentMatrix, mu: &DiscreteMeasure, tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be > 0, got {tol}")));
    }
    mu.validate()?;
    if let Some(a) = mu.support.iter().find(|a| **a >= f.atoms()) {
        return Err(Error::DimensionMismatch(format!(
            "atom {a} out of range for {} rows",
            f.atoms()
        )));
    }
    Ok(())
}

fn identity(mu: &DiscreteMeasure) -> RecombinationResult {
    RecombinationResult {
        measure: mu.clone(),
        eliminations: 0,
        moment_residual: 0.0,
    }
}

fn positive_part(mu: &DiscreteMeasure) -> (Vec<usize>, Vec<f64>) {
    mu.iter().filter(|(_, w)| *w > 0.0).unzip()
}

/// Sequentially eliminates atoms `rows` of `values` (weights aligned with
/// `rows`) until at most `ncols + 1` carry positive weight.
fn reduce_rows(values: &DMatrix<f64>, rows: &[usize], weights: &[f64]) -> Result<Vec<f64>> {
    let n = values.ncols();
    let mut out = weights.to_vec();
    let mut window: Vec<usize> = Vec::with_capacity(n + 2);
    for pos in 0..rows.len() {
        if out[pos] <= 0.0 {
            continue;
        }
        window.push(pos);
        while window.len() > n + 1 {
            let sub = DMatrix::from_fn(window.len(), n, |r, c| values[(rows[window[r]], c)]);
            let w: Vec<f64> = window.iter().map(|&p| out[p]).collect();
            let reduced = eliminate_one(&sub, &w)?;
            for (&p, w) in window.iter().zip(reduced) {
                out[p] = w;
            }
            window.retain(|&p| out[p] > 0.0);
        }
    }
    Ok(out)
}

fn finish(
    f: &MomentMatrix,
    target: &nalgebra::DVector<f64>,
    initial_atoms: usize,
    atoms: &[usize],
    weights: &[f64],
    tol: f64,
) -> Result<RecombinationResult> {
    let mut kept: Vec<(usize, f64)> = atoms
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|(_, w)| *w > 0.0)
        .collect();
    kept.sort_by_key(|(a, _)| *a);
    let mass: f64 = kept.iter().map(|(_, w)| w).sum();
    if !(mass > 0.0) {
        return Err(Error::NumericalBreakdown("all mass eliminated".into()));
    }
    let (support, weights): (Vec<usize>, Vec<f64>) =
        kept.into_iter().map(|(a, w)| (a, w / mass)).unzip();
    let eliminations = initial_atoms - support.len();
    let measure = DiscreteMeasure { support, weights };
    if measure.len() > f.functions() + 1 {
        return Err(Error::NumericalBreakdown(format!(
            "support of {} atoms exceeds {}",
            measure.len(),
            f.functions() + 1
        )));
    }
    let moment_residual = relative_residual(&measure.moments(f), target);
    if !(moment_residual <= tol) {
        return Err(Error::NumericalBreakdown(format!(
            "moment residual {moment_residual:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(RecombinationResult {
        measure,
        eliminations,
        moment_residual,
    })
}
