//! Invariant checks on seeded instances, run by `cabench verify`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bcd::{self, BcdConfig, PlanSource};
use crate::data;
use crate::model::{evaluate, Dataset, ModelSpec};
use crate::optim::{self, CaGdConfig, DirectionOracle};
use crate::recombination::{self, DiscreteMeasure, MomentMatrix};
use crate::trace::Trace;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: std::result::Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn recombination_instances(seed: u64) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &atoms in &[10usize, 100, 1000] {
        for &n in &[1usize, 2, 3, 5, 8] {
            let f = DMatrix::from_fn(atoms, n, |_, _| rng.random_range(-1.0..1.0));
            let f = MomentMatrix::new(f).map_err(|e| e.to_string())?;
            let mu = DiscreteMeasure::uniform(atoms);
            let r = recombination::recombine_hierarchical(&f, &mu, recombination::DEFAULT_TOLERANCE)
                .map_err(|e| format!("N={atoms} n={n}: {e}"))?;
            if !recombination::verify_recombination(&f, &mu, &r, recombination::DEFAULT_TOLERANCE) {
                return Err(format!("N={atoms} n={n}: result does not verify"));
            }
            worst = worst.max(r.moment_residual);
            count += 1;
        }
    }
    Ok(format!("{count} instances, worst residual {worst:.2e}"))
}

fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

fn first_step(seed: u64) -> std::result::Result<String, String> {
    let mut worst: f64 = 0.0;
    for k in 0..4 {
        let s = seed.wrapping_add(k);
        let (model, data) = if k % 2 == 0 {
            (ModelSpec::logistic(), data::gen_logistic_2d(2000, s, data::LOGISTIC_THETA).map_err(|e| e.to_string())?.with_intercept())
        } else {
            (ModelSpec::lasso(0.01), data::gen_dataset_a(2000, 6, s).map_err(|e| e.to_string())?.0)
        };
        let cfg = CaGdConfig { it_max: 3, gamma: 0.05, ..Default::default() };
        let g = optim::gd(&model, &data, &cfg).map_err(|e| e.to_string())?;
        let c = optim::cagd(&model, &data, &cfg, &mut DirectionOracle::neg_gradient()).map_err(|e| e.to_string())?;
        let t1 = &g.records[1].theta;
        let c1 = c.records.iter().find(|r| r.step == 1).ok_or("cagd trace has no step 1")?;
        worst = worst.max(max_abs_diff(t1, &c1.theta));
    }
    if worst <= 1e-12 {
        Ok(format!("max |θ̂₁ − θ₁| = {worst:.1e}"))
    } else {
        Err(format!("max |θ̂₁ − θ₁| = {worst:.1e}"))
    }
}

/// Central differences against the analytic gradient.
pub fn finite_difference_error(model: &ModelSpec, theta: &DVector<f64>, data: &Dataset) -> crate::Result<f64> {
    let g = evaluate(model, theta, data)?.gradient;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[k].abs());
        let mut p = theta.clone();
        p[k] += h;
        let mut m = theta.clone();
        m[k] -= h;
        let fd = (evaluate(model, &p, data)?.loss - evaluate(model, &m, data)?.loss) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
    }
    Ok(worst)
}

fn gradients(seed: u64) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..4u64 {
        let data = data::gen_dataset_a(500, 5, seed + k).map_err(|e| e.to_string())?.0;
        let theta = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        for model in [ModelSpec::logistic(), ModelSpec::lasso(0.1)] {
            let data = if model == ModelSpec::logistic() {
                let y = data.y().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                Dataset::new(data.x().clone(), y).map_err(|e| e.to_string())?
            } else {
                data.clone()
            };
            worst = worst.max(finite_difference_error(&model, &theta, &data).map_err(|e| e.to_string())?);
        }
    }
    if worst <= 1e-6 {
        Ok(format!("worst relative error {worst:.1e}"))
    } else {
        Err(format!("worst relative error {worst:.1e}"))
    }
}

fn discipline(seed: u64) -> std::result::Result<String, String> {
    let data = data::gen_logistic_2d(3000, seed, data::LOGISTIC_THETA).map_err(|e| e.to_string())?.with_intercept();
    let cfg = CaGdConfig { gamma: 0.1, ..Default::default() };
    let t = optim::cagd(&ModelSpec::logistic(), &data, &cfg, &mut DirectionOracle::neg_gradient())
        .map_err(|e| e.to_string())?;
    let (a, _) = data::gen_dataset_a(2000, 20, seed).map_err(|e| e.to_string())?;
    let bcfg = BcdConfig { fpe_budget: Some(20.0), seed, ..Default::default() };
    let b = bcd::cabcd(&ModelSpec::lasso(0.01), &a, &bcfg, &PlanSource::gs(2), true).map_err(|e| e.to_string())?;
    let mut phases = 0;
    for (tr, cap) in [(&t, cfg.it_max_ca), (&b, bcfg.it_max_ca)] {
        for p in &tr.phases {
            p.disciplined(cap)?;
            phases += 1;
        }
    }
    Ok(format!("{phases} reduced phases"))
}

fn csv_round_trip(seed: u64) -> std::result::Result<String, String> {
    let data = data::gen_logistic_2d(1000, seed, data::LOGISTIC_THETA).map_err(|e| e.to_string())?.with_intercept();
    let cfg = CaGdConfig { it_max: 50, ..Default::default() };
    let t = optim::cagd(&ModelSpec::logistic(), &data, &cfg, &mut DirectionOracle::neg_gradient())
        .map_err(|e| e.to_string())?;
    let s = t.to_csv_string();
    let back = Trace::read_csv(s.as_bytes()).map_err(|e| e.to_string())?;
    if back.to_csv_string() == s && back.records.len() == t.records.len() {
        Ok(format!("{} rows", t.records.len()))
    } else {
        Err("parsed trace differs from the emitted one".into())
    }
}

fn determinism(seed: u64) -> std::result::Result<String, String> {
    let (a, _) = data::gen_dataset_a(2000, 20, seed).map_err(|e| e.to_string())?;
    let (b, _) = data::gen_dataset_a(2000, 20, seed).map_err(|e| e.to_string())?;
    if a.x() != b.x() || a.y() != b.y() {
        return Err("generator output differs between calls".into());
    }
    let cfg = BcdConfig { fpe_budget: Some(10.0), seed, ..Default::default() };
    let run = || bcd::cabcd(&ModelSpec::lasso(0.01), &a, &cfg, &PlanSource::random(2), true);
    let (x, y) = (run().map_err(|e| e.to_string())?, run().map_err(|e| e.to_string())?);
    if super::timing_free_csv(&x) == super::timing_free_csv(&y) {
        Ok("generator and CaBCD traces repeat".into())
    } else {
        Err("traces differ between identical runs".into())
    }
}

/// Runs every check with instances derived from `seed`.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        check("recombination", recombination_instances(seed)),
        check("first step identity", first_step(seed)),
        check("gradient finite differences", gradients(seed)),
        check("control statistic discipline", discipline(seed)),
        check("trace csv round trip", csv_round_trip(seed)),
        check("determinism", determinism(seed)),
    ]
}
