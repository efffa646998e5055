mod common;

use std::io::Write;

use caratheodory::data::*;
use caratheodory::model::Dataset;
use caratheodory::Error;
use common::*;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;

fn fraction_positive(d: &Dataset) -> f64 {
    d.y().iter().filter(|v| **v == 1.0).count() as f64 / d.n_samples() as f64
}

/// Newton's method for the plain logistic log-likelihood in two variables.
fn newton_logistic(d: &Dataset) -> Vector2<f64> {
    let mut theta = Vector2::zeros();
    for _ in 0..30 {
        let mut g = Vector2::zeros();
        let mut h = Matrix2::zeros();
        for i in 0..d.n_samples() {
            let x = Vector2::new(d.x()[(i, 0)], d.x()[(i, 1)]);
            let p = 1.0 / (1.0 + (-x.dot(&theta)).exp());
            g += x * (p - d.y()[i]);
            h += x * x.transpose() * (p * (1.0 - p));
        }
        theta -= h.lu().solve(&g).unwrap();
    }
    theta
}

#[test]
fn logistic_labels_and_balance() {
    let d = gen_logistic_2d(5000, 3, LOGISTIC_THETA).unwrap();
    assert!(d.y().iter().all(|v| *v == 0.0 || *v == 1.0));
    let f = fraction_positive(&d);
    assert!(f > 0.3 && f < 0.7, "{f}");
}

#[test]
fn zero_parameter_gives_fair_coins() {
    let n = 20_000;
    let d = gen_logistic_2d(n, 5, [0.0, 0.0]).unwrap();
    let sd = (0.25 / n as f64).sqrt();
    assert!((fraction_positive(&d) - 0.5).abs() <= 3.0 * sd);
}

#[test]
fn logistic_fit_recovers_the_generating_parameter() {
    let d = gen_logistic_2d(100_000, 11, LOGISTIC_THETA).unwrap();
    let theta = newton_logistic(&d);
    assert!((theta[0] + 5.0).abs() <= 0.2 && (theta[1] - 2.0).abs() <= 0.2, "{theta}");
}

#[test]
fn exp_octant_probability() {
    let d = gen_exp_octant(10_000, 2).unwrap();
    let p = (1.0 - (-1.0f64).exp()).powi(2);
    assert!((p - 0.3996).abs() < 1e-4);
    assert!((fraction_positive(&d) - p).abs() <= 0.02);
    for i in 0..d.n_samples() {
        let both = d.x()[(i, 0)] < 0.0 && d.x()[(i, 1)] < 0.0;
        assert_eq!(d.y()[i] == 1.0, both);
        assert!(d.x()[(i, 0)] >= -1.0);
    }
}

#[test]
fn sine_labels_follow_the_curve() {
    let d = gen_uniform_sine(2000, 4).unwrap();
    for i in 0..d.n_samples() {
        let (a, b) = (d.x()[(i, 0)], d.x()[(i, 1)]);
        assert!(a.abs() <= 1.0 && b.abs() <= 1.0);
        assert_eq!(d.y()[i] == 1.0, b - (std::f64::consts::PI * a).sin() > 0.0);
    }
}

#[test]
fn dataset_a_density_and_sparsity() {
    let n = 100_000;
    let d = 10;
    let (data, _) = gen_dataset_a(n, d, 8).unwrap();
    let p = 10.0 * (n as f64).ln() / n as f64;
    assert_eq!(dataset_a_density(n), p);
    let cells = (n * d) as f64;
    let nonzero = data.x().iter().filter(|v| **v != 0.0).count() as f64;
    let sd = (cells * p * (1.0 - p)).sqrt();
    assert!((nonzero - cells * p).abs() <= 3.0 * sd, "{nonzero} vs {}", cells * p);
    for d in [1, 5, 10, 17, 50, 123] {
        let (_, theta) = gen_dataset_a(200, d, d as u64).unwrap();
        assert_eq!(theta.iter().filter(|t| **t == 0.0).count(), (9 * d) / 10);
    }
}

#[test]
fn monomials_against_brute_force() {
    for d in 1..=6usize {
        for alpha in 1..=5usize {
            // every exponent vector in [0, α]^d with total degree 1..=α
            let mut want = Vec::new();
            let mut e = vec![0usize; d];
            loop {
                let t: usize = e.iter().sum();
                if (1..=alpha).contains(&t) {
                    want.push(e.clone());
                }
                let mut k = 0;
                while k < d && e[k] == alpha {
                    e[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
                e[k] += 1;
            }
            let mut got = monomial_exponents(d, alpha);
            let binom = (1..=alpha).fold(1usize, |acc, i| acc * (d + i) / i) - 1;
            assert_eq!(got.len(), binom);
            assert_eq!(monomial_count(d, alpha), Some(binom));
            got.sort();
            want.sort();
            assert_eq!(got, want, "d={d} α={alpha}");
        }
    }
    assert_eq!(monomial_exponents(3, 5).len(), 55);
}

#[test]
fn tensor_columns_are_products() {
    let mut r = rng(2);
    let x = normal_matrix(&mut r, 6, 3);
    let f = tensor_power_features(&x, 3, 1000).unwrap();
    let exps = monomial_exponents(3, 3);
    assert_eq!(f.ncols(), exps.len());
    for (c, e) in exps.iter().enumerate() {
        for i in 0..6 {
            let v: f64 = (0..3).map(|k| x[(i, k)].powi(e[k] as i32)).product();
            assert!((f[(i, c)] - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}

#[test]
fn scaling_is_idempotent() {
    let mut r = rng(3);
    let x = mixed_matrix(&mut r, 300, 4) * 7.0;
    let once = standard_scale(&x);
    let twice = standard_scale(&once);
    assert!((once.clone() - twice).amax() < 1e-12);
    for c in once.column_iter() {
        assert!(c.mean().abs() < 1e-12);
        assert!((c.variance() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pca_on_low_rank_data() {
    let mut r = rng(4);
    let k = 3;
    let x = normal_matrix(&mut r, 500, k) * normal_matrix(&mut r, k, 8);
    let (p, ratio) = pca_reduce(&x, k).unwrap();
    assert_eq!(p.shape(), (500, k));
    assert!((ratio - 1.0).abs() < 1e-10);
    let centred = DMatrix::from_fn(500, k, |i, j| p[(i, j)] - p.column(j).mean());
    let cov = centred.tr_mul(&centred);
    for a in 0..k {
        for b in 0..k {
            if a != b {
                assert!(cov[(a, b)].abs() < 1e-8 * cov[(0, 0)]);
            }
        }
        if a > 0 {
            assert!(cov[(a, a)] <= cov[(a - 1, a - 1)]);
        }
    }
    let (_, partial) = pca_reduce(&x, 1).unwrap();
    assert!(partial < 1.0);
}

#[test]
fn household_pipeline_keeps_almost_all_variance() {
    let d = gen_household_like(5000, 1).unwrap();
    let spec = PipelineSpec { tensor_power_alpha: 5, scale: true, pca_components: Some(7), ..Default::default() };
    let out = apply_pipeline(d.x(), &spec).unwrap();
    assert_eq!(out.x.shape(), (5000, 7));
    assert!(out.explained_variance.unwrap() > 0.999, "{:?}", out.explained_variance);
}

fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

#[test]
fn csv_loading_and_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(&dir, "a.csv", "x0,x1,y\n1,2,3\n4,5,20000\n7,8,9\n");
    let all = load_csv(&p, &["x0", "x1"], "y", None).unwrap();
    assert_eq!((all.total_rows, all.dropped, all.dataset.n_samples()), (3, 0, 3));
    let kept = load_csv(&p, &["x1"], "y", Some(10_000.0)).unwrap();
    assert_eq!((kept.total_rows, kept.dropped), (3, 1));
    assert_eq!(kept.dataset.x().column(0).as_slice(), &[2.0, 8.0]);
    assert_eq!(kept.dataset.y().as_slice(), &[3.0, 9.0]);
}

#[test]
fn drop_fraction_on_a_power_shaped_file() {
    // 140 of 100 000 targets pushed above the threshold: 0.14%
    let n = 100_000;
    let d = gen_household_like(n, 6).unwrap();
    let mut r = rng(6);
    let spikes: Vec<usize> = rand::seq::index::sample(&mut r, n, 140).into_vec();
    let mut body = String::from("active,voltage,intensity,target\n");
    for i in 0..n {
        let y = if spikes.contains(&i) { 20_000.0 } else { d.y()[i] };
        body.push_str(&format!("{},{},{},{}\n", d.x()[(i, 0)], d.x()[(i, 1)], d.x()[(i, 2)], y));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(&dir, "power.csv", &body);
    let l = load_csv(&p, &["active", "voltage", "intensity"], "target", Some(10_000.0)).unwrap();
    assert!((l.drop_fraction() - 0.0014).abs() < 1e-12);
    assert_eq!(l.dataset.n_samples(), n - 140);
}

#[test]
fn csv_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(&dir, "b.csv", "x0,y\n1,2\nfoo,3\n");
    match load_csv(&p, &["x0"], "y", None) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "x0")),
        other => panic!("{other:?}"),
    }
    match load_csv(&p, &["x9"], "y", None) {
        Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "x9"),
        other => panic!("{other:?}"),
    }
    assert!(load_csv(&dir.path().join("none.csv"), &["x0"], "y", None).is_err());
}

#[test]
fn unknown_generator_is_rejected() {
    assert!(matches!(generate("nope", 10, 2, 0), Err(Error::InvalidConfig(_))));
    assert!(gen_dataset_a(0, 3, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generators_are_reproducible(seed in any::<u64>(), which in 0usize..5) {
        let name = GENERATORS[which];
        let a = generate(name, 300, 6, seed).unwrap();
        let b = generate(name, 300, 6, seed).unwrap();
        prop_assert_eq!(a.x(), b.x());
        prop_assert_eq!(a.y(), b.y());
        let y: &DVector<f64> = a.y();
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}
