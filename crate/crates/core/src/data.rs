//! Synthetic generators and the tabular ingestion pipeline.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset};

/// Default cap on the number of tensor-power columns.
pub const DEFAULT_FEATURE_CAP: usize = 10_000;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_square(n: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        x[(i, 0)] = r.random_range(-1.0..=1.0);
        x[(i, 1)] = r.random_range(-1.0..=1.0);
    }
    x
}

/// Uniform points on `[−1, 1]²`, labelled 1 above the curve `x₂ = sin(π x₁)`.
pub fn gen_uniform_sine(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let x = uniform_square(n, &mut r);
    let y = DVector::from_fn(n, |i, _| {
        if x[(i, 1)] > (std::f64::consts::PI * x[(i, 0)]).sin() { 1.0 } else { 0.0 }
    });
    Dataset::new(x, y)
}

/// Shifted exponentials `E − 1` in both coordinates, labelled 1 when both are negative.
pub fn gen_exp_octant(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        for j in 0..2 {
            let e: f64 = Exp1.sample(&mut r);
            x[(i, j)] = e - 1.0;
        }
    }
    let y = DVector::from_fn(n, |i, _| {
        if x[(i, 0)] < 0.0 && x[(i, 1)] < 0.0 { 1.0 } else { 0.0 }
    });
    Dataset::new(x, y)
}

/// Uniform points on `[−1, 1]²` with Bernoulli labels `σ(xᵀθ)`.
pub fn gen_logistic_2d(n: usize, seed: u64, theta_true: [f64; 2]) -> Result<Dataset> {
    let mut r = rng(seed);
    let x = uniform_square(n, &mut r);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let p = sigmoid(x[(i, 0)] * theta_true[0] + x[(i, 1)] * theta_true[1]);
        let b = Bernoulli::new(p).map_err(|e| Error::InvalidDataset(e.to_string()))?;
        y[i] = if b.sample(&mut r) { 1.0 } else { 0.0 };
    }
    Dataset::new(x, y)
}

pub const LOGISTIC_THETA: [f64; 2] = [-5.0, 2.0];

/// Probability that an entry of the sparse design is kept: `min(1, 10 ln N / N)`.
pub fn dataset_a_density(n: usize) -> f64 {
    let n = n as f64;
    (10.0 * n.ln() / n).clamp(0.0, 1.0)
}

/// Sparse least-squares design: entries `N(0,1) + 1`, columns scaled by
/// `10·N(0,1)`, each entry kept with probability [`dataset_a_density`].
/// Returns the data and the generating parameter, which has `⌊0.9 d⌋` zeros.
pub fn gen_dataset_a(n: usize, d: usize, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidDataset(format!("need N, d ≥ 1, got {n}, {d}")));
    }
    let mut r = rng(seed);
    let p = dataset_a_density(n);
    let scales: Vec<f64> = (0..d)
        .map(|_| { let z: f64 = StandardNormal.sample(&mut r); 10.0 * z })
        .collect();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let v: f64 = StandardNormal.sample(&mut r);
            if r.random_bool(p) {
                x[(i, j)] = (v + 1.0) * scales[j];
            }
        }
    }
    let zeros = (9 * d) / 10;
    let mut theta = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
    for j in index::sample(&mut r, d, zeros) {
        theta[j] = 0.0;
    }
    let mut y = &x * &theta;
    for i in 0..n {
        let e: f64 = StandardNormal.sample(&mut r);
        y[i] += e;
    }
    Ok((Dataset::new(x, y)?, theta))
}

/// Exponents of all monomials with total degree `1..=alpha` in `d` variables,
/// ordered by degree, then lexicographically (x₁ before x₂).
pub fn monomial_exponents(d: usize, alpha: usize) -> Vec<Vec<usize>> {
    fn fill(d: usize, start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..d {
            cur[v] += 1;
            fill(d, v, left - 1, cur, out);
            cur[v] -= 1;
        }
    }
    let mut out = Vec::new();
    for deg in 1..=alpha {
        fill(d, 0, deg, &mut vec![0; d], &mut out);
    }
    out
}

/// `C(d + α, α) − 1`, the number of monomials of degree `1..=α`.
pub fn monomial_count(d: usize, alpha: usize) -> Option<usize> {
    let mut c: usize = 1;
    for k in 1..=alpha {
        c = c.checked_mul(d + k)? / k;
    }
    Some(c - 1)
}

/// All mixed products of the columns of `x` up to total degree `alpha`.
pub fn tensor_power_features(x: &DMatrix<f64>, alpha: usize, cap: usize) -> Result<DMatrix<f64>> {
    if alpha == 0 {
        return Err(Error::InvalidConfig("tensor power alpha must be at least 1".into()));
    }
    let d = x.ncols();
    let count = monomial_count(d, alpha).unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::Overflow { count, cap });
    }
    let exps = monomial_exponents(d, alpha);
    Ok(DMatrix::from_fn(x.nrows(), exps.len(), |i, c| {
        exps[c]
            .iter()
            .enumerate()
            .map(|(j, &e)| x[(i, j)].powi(e as i32))
            .product()
    }))
}

/// Centres each column and divides by its population standard deviation.
/// Constant columns become zero.
pub fn standard_scale(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 && sd.is_finite() {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Projects the centred data on its top `k` principal directions. Returns the
/// scores and the cumulative explained variance ratio.
pub fn pca_reduce(x: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, f64)> {
    let (n, d) = x.shape();
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!("cannot keep {k} of {d} components")));
    }
    let mut centred = x.clone();
    for mut col in centred.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let cov = centred.tr_mul(&centred) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let kept: f64 = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
    let mut basis = DMatrix::zeros(d, k);
    for (c, &i) in order[..k].iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        if v[v.iamax()] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(c, &v);
    }
    let ratio = if total > 0.0 { kept / total } else { 1.0 };
    Ok((centred * basis, ratio))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub tensor_power_alpha: usize,
    #[serde(default)]
    pub scale: bool,
    #[serde(default)]
    pub pca_components: Option<usize>,
    #[serde(default)]
    pub outlier_threshold: Option<f64>,
    #[serde(default = "default_cap")]
    pub feature_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_FEATURE_CAP
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            tensor_power_alpha: 1,
            scale: false,
            pca_components: None,
            outlier_threshold: None,
            feature_cap: DEFAULT_FEATURE_CAP,
        }
    }
}

/// Output of [`apply_pipeline`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: DMatrix<f64>,
    pub explained_variance: Option<f64>,
}

/// Tensor power, then optional scaling, then optional PCA.
pub fn apply_pipeline(x: &DMatrix<f64>, spec: &PipelineSpec) -> Result<Prepared> {
    let mut out = tensor_power_features(x, spec.tensor_power_alpha, spec.feature_cap)?;
    if spec.scale {
        out = standard_scale(&out);
    }
    let mut explained_variance = None;
    if let Some(k) = spec.pca_components {
        let (p, ratio) = pca_reduce(&out, k)?;
        out = p;
        explained_variance = Some(ratio);
    }
    Ok(Prepared { x: out, explained_variance })
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub dropped: usize,
    pub total_rows: usize,
}

impl Loaded {
    pub fn drop_fraction(&self) -> f64 {
        if self.total_rows == 0 { 0.0 } else { self.dropped as f64 / self.total_rows as f64 }
    }
}

/// Reads numeric columns from a headed CSV. Rows with target above
/// `outlier_threshold` are dropped.
pub fn load_csv(
    path: &Path,
    feature_columns: &[&str],
    target_column: &str,
    outlier_threshold: Option<f64>,
) -> Result<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn {
            path: path.into(),
            column: name.into(),
        })
    };
    let feature_idx: Vec<usize> = feature_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let target_idx = find(target_column)?;

    let mut rows: Vec<f64> = Vec::new();
    let mut ys = Vec::new();
    let (mut total, mut dropped) = (0, 0);
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(Error::Parse {
                    path: path.into(),
                    row: r + 1,
                    column: name.into(),
                    message: format!("non-finite value {v}"),
                }),
                Err(e) => Err(Error::Parse {
                    path: path.into(),
                    row: r + 1,
                    column: name.into(),
                    message: format!("{raw:?}: {e}"),
                }),
            }
        };
        total += 1;
        let y = parse(target_idx, target_column)?;
        let feats: Vec<f64> = feature_idx
            .iter()
            .zip(feature_columns)
            .map(|(&i, name)| parse(i, name))
            .collect::<Result<_>>()?;
        if outlier_threshold.is_some_and(|t| y > t) {
            dropped += 1;
            continue;
        }
        rows.extend(feats);
        ys.push(y);
    }
    let x = DMatrix::from_row_slice(ys.len(), feature_columns.len(), &rows);
    Ok(Loaded {
        dataset: Dataset::new(x, DVector::from_vec(ys))?,
        dropped,
        total_rows: total,
    })
}

/// Three correlated positive readings, shaped like household power data
/// (active power, voltage, intensity), with a noisy linear target.
pub fn gen_household_like(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let load: f64 = r.random_range(0.2..3.0);
        let n1: f64 = StandardNormal.sample(&mut r);
        let n2: f64 = StandardNormal.sample(&mut r);
        let n3: f64 = StandardNormal.sample(&mut r);
        x[(i, 0)] = load;
        x[(i, 1)] = 240.0 - 1.5 * load + 0.5 * n1;
        x[(i, 2)] = 4.2 * load + 0.1 * n2;
        y[i] = 1.3 * load + 0.2 * n3;
    }
    Dataset::new(x, y)
}

/// Named generator lookup used by the CLI and configs.
pub fn generate(name: &str, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    match name {
        "uniform_sine" => gen_uniform_sine(n, seed),
        "exp_octant" => gen_exp_octant(n, seed),
        "logistic_2d" => gen_logistic_2d(n, seed, LOGISTIC_THETA),
        "dataset_a" => Ok(gen_dataset_a(n, d, seed)?.0),
        "household_like" => gen_household_like(n, seed),
        other => Err(Error::InvalidConfig(format!("unknown generator {other:?}"))),
    }
}

pub const GENERATORS: [&str; 5] = ["uniform_sine", "exp_octant", "logistic_2d", "dataset_a", "household_like"];
