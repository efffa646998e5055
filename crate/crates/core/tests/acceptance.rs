//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stderr
//! (past the test harness's output capture) and then asserts.

mod common;

use std::io::Write;
use std::time::Instant;

use caratheodory::baselines::{adam, sag, SgdConfig};
use caratheodory::bcd::{cabcd, BcdConfig, DirectionRule, Partition, PlanSource, RuleId, Selection};
use caratheodory::bench::timing_free_csv;
use caratheodory::data::{self, gen_dataset_a, gen_logistic_2d, LOGISTIC_THETA};
use caratheodory::model::{mean_gradient, Dataset, ModelSpec};
use caratheodory::optim::{cagd, gd, gd_with, CaGdConfig, DirectionOracle, HessianMode, OracleKind};
use caratheodory::recombination::{recombine_hierarchical, relative_residual, DiscreteMeasure, MomentMatrix};
use caratheodory::trace::Trace;
use common::*;
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

fn report(name: &str, passed: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "{name}: {detail}");
}

type Run<'a> = Box<dyn Fn() -> Trace + Sync + 'a>;

fn logistic(n: usize, seed: u64) -> Dataset {
    gen_logistic_2d(n, seed, LOGISTIC_THETA).unwrap().with_intercept()
}

#[test]
fn recombination_exactness() {
    let start = Instant::now();
    let (mut instances, mut worst_residual, mut worst_mass, mut failures) = (0, 0.0f64, 0.0f64, Vec::new());
    for (a, &n_atoms) in [10usize, 100, 1000, 10_000].iter().enumerate() {
        for (b, &n) in [1usize, 2, 3, 5, 8].iter().enumerate() {
            for rep in 0..5u64 {
                let seed = 1000 * a as u64 + 100 * b as u64 + rep;
                let mut r = rng(seed);
                let f = MomentMatrix::new(mixed_matrix(&mut r, n_atoms, n)).unwrap();
                let mu = DiscreteMeasure::uniform(n_atoms);
                let res = recombine_hierarchical(&f, &mu, 1e-9).unwrap();
                let w = &res.measure.weights;
                let mass_err = (w.iter().sum::<f64>() - 1.0).abs();
                let residual = relative_residual(&res.measure.moments(&f), &mu.moments(&f));
                worst_residual = worst_residual.max(residual);
                worst_mass = worst_mass.max(mass_err);
                if res.measure.len() > n + 1 || w.iter().any(|x| *x < 0.0) || mass_err > 1e-12 || residual > 1e-9 {
                    failures.push((n_atoms, n, seed));
                }
                instances += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "recombination exactness",
        instances == 100 && failures.is_empty() && secs < 10.0,
        format!(
            "{instances} instances, failures {failures:?}, worst residual {worst_residual:.2e}, worst mass error {worst_mass:.2e}, {secs:.2}s"
        ),
    );
}

#[test]
fn oracle_equivalence() {
    let (mut instances, mut worst) = (0, 0.0f64);
    let mut failures = Vec::new();
    for n_atoms in [5usize, 10, 20, 35, 50] {
        for n in [1usize, 2, 3, 5, 8] {
            for rep in 0..4u64 {
                let seed = 31 * n_atoms as u64 + 7 * n as u64 + rep;
                let mut r = rng(seed);
                let f = MomentMatrix::new(normal_matrix(&mut r, n_atoms, n)).unwrap();
                let mu = if rep % 2 == 0 {
                    DiscreteMeasure::uniform(n_atoms)
                } else {
                    let w: Vec<f64> = (0..n_atoms).map(|_| r.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    let mut w: Vec<f64> = w.iter().map(|x| x / s).collect();
                    let fix = 1.0 - w.iter().sum::<f64>();
                    w[0] += fix;
                    DiscreteMeasure::new((0..n_atoms).collect(), w).unwrap()
                };
                let target = mu.moments(&f);
                let a = stacked(f.values());
                let b = target.clone().insert_row(n, 1.0);
                // the oracle certifies the target as a feasible moment vector
                let Some(vertex) = lp_feasible_vertex(&a, &b) else {
                    failures.push((n_atoms, n, seed, f64::INFINITY));
                    continue;
                };
                let certified = (&a * &vertex).rows(0, n).into_owned();
                let got = recombine_hierarchical(&f, &mu, 1e-9).unwrap().measure.moments(&f);
                let err = (&got - &certified).amax().max((&got - &target).amax());
                worst = worst.max(err);
                if err > 1e-10 {
                    failures.push((n_atoms, n, seed, err));
                }
                instances += 1;
            }
        }
    }
    report(
        "oracle equivalence",
        failures.is_empty(),
        format!("{instances} instances with N <= 50, worst moment error {worst:.2e}, failures {failures:?}"),
    );
}

#[test]
fn first_step_identity() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let lasso = gen_dataset_a(3000, 10, seed).unwrap().0;
        for (model, data, gamma) in [
            (ModelSpec::logistic(), logistic(3000, seed), 0.1),
            (ModelSpec::lasso(0.01), lasso, 1e-3),
        ] {
            let cfg = CaGdConfig { gamma, it_max: 3, trace_reduced: true, ..Default::default() };
            let g = gd(&model, &data, &cfg).unwrap();
            let c = cagd(&model, &data, &cfg, &mut DirectionOracle::neg_gradient()).unwrap();
            let c1 = c.records.iter().find(|r| r.step == 1).unwrap();
            worst = worst.max((&g.records[1].theta - &c1.theta).amax());
        }
    }
    report("first-step identity", worst <= 1e-12, format!("20 instances, worst inf-norm gap {worst:.2e}"));
}

#[test]
#[should_panic(expected = "convergence agreement")]
fn convergence_agreement() {
    let start = Instant::now();
    let data = logistic(5000, 0);
    let model = ModelSpec::logistic();
    let cfg = CaGdConfig { gamma: 0.1, eps_grad: 1e-3, ..Default::default() };
    let g = gd(&model, &data, &cfg).unwrap();
    let c = cagd(&model, &data, &cfg, &mut DirectionOracle::neg_gradient()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gap = (g.final_theta().unwrap() - c.final_theta().unwrap()).amax();
    let both_converged = g.last().unwrap().grad_norm <= 1e-3 && c.last().unwrap().grad_norm <= 1e-3;
    report(
        "convergence agreement",
        both_converged && gap <= 1e-3 && secs < 60.0,
        format!(
            "final parameters differ by {gap:.3e} (inf-norm), gradient norms {:.2e} / {:.2e}, {secs:.1}s",
            g.last().unwrap().grad_norm,
            c.last().unwrap().grad_norm
        ),
    );
}

#[test]
fn efficiency_property() {
    let grid: Vec<(f64, usize)> = [0.01, 0.1].iter().flat_map(|&g| [5_000, 50_000].map(move |n| (g, n))).collect();
    let rows: Vec<(f64, usize, f64, f64, bool)> = grid
        .par_iter()
        .map(|&(gamma, n)| {
            let data = logistic(n, 7);
            let model = ModelSpec::logistic();
            let cfg = CaGdConfig { gamma, eps_grad: 1e-3, ..Default::default() };
            let g = gd(&model, &data, &cfg).unwrap();
            let c = cagd(&model, &data, &cfg, &mut DirectionOracle::neg_gradient()).unwrap();
            let reached = g.last().unwrap().grad_norm <= 1e-3 && c.last().unwrap().grad_norm <= 1e-3;
            (gamma, n, g.full_passes(), c.full_passes(), reached)
        })
        .collect();
    let mut ok = rows.iter().all(|r| r.4 && r.3 <= 0.5 * r.2);
    let mut detail = Vec::new();
    for gamma in [0.01, 0.1] {
        let at: Vec<_> = rows.iter().filter(|r| r.0 == gamma).collect();
        let (small, large) = (at[0].2 / at[0].3, at[1].2 / at[1].3);
        ok &= large >= small;
        detail.push(format!("gamma {gamma}: fpe ratio {small:.1} (N=5000) -> {large:.1} (N=50000)"));
    }
    report("efficiency property", ok, detail.join("; "));
}

fn phases_ok(t: &Trace, it_max_ca: usize, bad: &mut Vec<String>, label: &str) -> usize {
    for p in &t.phases {
        if let Err(e) = p.disciplined(it_max_ca) {
            bad.push(format!("{label}: {e}"));
        }
    }
    t.phases.len()
}

#[test]
fn control_statistic_discipline() {
    let mut bad = Vec::new();
    let (mut traces, mut phases) = (0, 0);
    let logistic_model = ModelSpec::logistic();
    for seed in 0..3 {
        let data = logistic(5000, seed);
        for (mode, oracle) in [
            (HessianMode::Rank1Secant, OracleKind::NegGradient),
            (HessianMode::ScalarSecant, OracleKind::NegGradient),
            (HessianMode::ConstantC { c: 0.5 }, OracleKind::NegGradient),
            (HessianMode::Rank1Secant, OracleKind::Momentum { beta: 0.9 }),
        ] {
            let cfg = CaGdConfig { gamma: 0.1, hessian_mode: mode, ..Default::default() };
            let t = cagd(&logistic_model, &data, &cfg, &mut DirectionOracle::new(oracle).unwrap()).unwrap();
            phases += phases_ok(&t, cfg.it_max_ca, &mut bad, &format!("cagd {mode:?} {oracle:?} seed {seed}"));
            traces += 1;
        }
    }
    let (lasso_data, _) = gen_dataset_a(5000, 20, 4).unwrap();
    let lasso = ModelSpec::lasso(0.01);
    let cfg = CaGdConfig { gamma: 1e-3, eps_grad: 0.0, fpe_budget: Some(50.0), ..Default::default() };
    let t = cagd(&lasso, &lasso_data, &cfg, &mut DirectionOracle::momentum(0.9).unwrap()).unwrap();
    phases += phases_ok(&t, cfg.it_max_ca, &mut bad, "cagd lasso");
    traces += 1;
    for plan in [PlanSource::gs(2), PlanSource::random(2)] {
        for oracle in [OracleKind::NegGradient, OracleKind::Momentum { beta: 0.9 }] {
            let cfg = BcdConfig { oracle, eps_grad: 0.0, fpe_budget: Some(30.0), ..Default::default() };
            let t = cabcd(&lasso, &lasso_data, &cfg, &plan, true).unwrap();
            phases += phases_ok(&t, cfg.it_max_ca, &mut bad, &format!("cabcd {plan:?} {oracle:?}"));
            traces += 1;
        }
    }
    let ls = ModelSpec::least_squares();
    let cfg = BcdConfig { eps_grad: 0.0, fpe_budget: Some(10.0), seed: 3, ..Default::default() };
    for rule in RuleId::all() {
        if let Ok(t) = cabcd(&ls, &lasso_data, &cfg, &PlanSource::rule(rule, 5), true) {
            phases += phases_ok(&t, cfg.it_max_ca, &mut bad, &rule.label(true));
            traces += 1;
        }
    }
    report(
        "control-statistic discipline",
        bad.is_empty() && phases > 0,
        format!("{traces} traces, {phases} reduced phases, violations {bad:?}"),
    );
}

#[test]
fn cabcd_versus_bcd() {
    let start = Instant::now();
    let (data, _) = gen_dataset_a(20_000, 50, 1).unwrap();
    let model = ModelSpec::lasso(0.01);
    let cfg = BcdConfig {
        oracle: OracleKind::Momentum { beta: 0.9 },
        eps_grad: 0.0,
        fpe_budget: Some(100.0),
        ..Default::default()
    };
    let plan = PlanSource::gs(2);
    let plain = cabcd(&model, &data, &cfg, &plan, false).unwrap();
    let fast = cabcd(&model, &data, &cfg, &plan, true).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let target = plain.final_loss();
    let reached = fast.first_reaching(target * 1.01).map(|r| r.full_pass_equivalent);
    report(
        "CaBCD vs BCD",
        reached.is_some_and(|f| f < plain.full_passes()) && secs < 300.0,
        format!(
            "BCD final loss {target:.6} after {:.1} passes; CaBCD within 1% after {:?} passes; {secs:.1}s",
            plain.full_passes(),
            reached
        ),
    );
}

#[test]
fn rule_grid_sanity() {
    let (data, _) = gen_dataset_a(20_000, 50, 3).unwrap();
    let model = ModelSpec::least_squares();
    let budget = 20.0;
    let cfg = BcdConfig { eps_grad: 0.0, fpe_budget: Some(budget), seed: 3, ..Default::default() };
    let loss_of = |p: Partition, s: Selection, d: DirectionRule| {
        let rule = RuleId { partition: p, selection: s, direction: d };
        cabcd(&model, &data, &cfg, &PlanSource::rule(rule, 5), true).unwrap().best_loss_within(budget)
    };
    let parts = [Partition::VB, Partition::Sort, Partition::Order, Partition::Avg];
    let mut violations = Vec::new();
    let mut checked = 0;
    for p in parts {
        let l = |s, d| loss_of(p, s, d);
        let (gs_lb, gs_hb) = (l(Selection::GS, DirectionRule::Lb), l(Selection::GS, DirectionRule::Hb));
        let (r_lb, r_hb) = (l(Selection::Random, DirectionRule::Lb), l(Selection::Random, DirectionRule::Hb));
        for (what, small, large) in [
            ("GS<=Random Lb", gs_lb, r_lb),
            ("GS<=Random Hb", gs_hb, r_hb),
            ("Hb<=Lb GS", gs_hb, gs_lb),
            ("Hb<=Lb Random", r_hb, r_lb),
        ] {
            checked += 1;
            if small > large {
                violations.push(format!("{p:?} {what}: {small:.6} > {large:.6}"));
            }
        }
    }
    report(
        "rule-grid sanity",
        violations.is_empty(),
        format!("{checked} comparisons at {budget} passes, violations {violations:?}"),
    );
}

#[test]
fn gradient_correctness() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        for logistic_family in [true, false] {
            let mut r = rng(seed);
            let x = normal_matrix(&mut r, 400, 4);
            let y = if logistic_family {
                DVector::from_fn(400, |_, _| if r.random_bool(0.4) { 1.0 } else { 0.0 })
            } else {
                normal_matrix(&mut r, 400, 1).column(0).into_owned()
            };
            let theta = DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
            let data = Dataset::new(x, y).unwrap();
            let model = if logistic_family { ModelSpec::logistic() } else { ModelSpec::least_squares() };
            let g = mean_gradient(&model, &theta, &data, None, None).unwrap();
            for k in 0..4 {
                let h = 1e-6;
                let (mut p, mut m) = (theta.clone(), theta.clone());
                p[k] += h;
                m[k] -= h;
                let fd = (naive_loss(&model, &p, &data) - naive_loss(&model, &m, &data)) / (2.0 * h);
                worst = worst.max((g[k] - fd).abs() / g[k].abs().max(1e-3));
            }
        }
    }
    report("gradient correctness", worst <= 1e-6, format!("20 pairs, worst relative error {worst:.2e}"));
}

#[test]
fn dataset_a_statistics() {
    let (n, d) = (100_000, 10);
    let (x, _) = gen_dataset_a(n, d, 12).unwrap();
    let p = 10.0 * (n as f64).ln() / n as f64;
    let cells = (n * d) as f64;
    let nonzero = x.x().iter().filter(|v| **v != 0.0).count() as f64;
    let z = (nonzero - cells * p) / (cells * p * (1.0 - p)).sqrt();
    let sparsity_ok = [5usize, 10, 50, 99].iter().all(|&d| {
        let (_, theta) = gen_dataset_a(1000, d, d as u64).unwrap();
        theta.iter().filter(|t| **t == 0.0).count() == (9 * d) / 10
    });
    report(
        "Dataset A statistics",
        z.abs() <= 3.0 && sparsity_ok,
        format!("nonzero fraction {:.6} vs {p:.6} (z = {z:.2}); sparsity exact: {sparsity_ok}", nonzero / cells),
    );
}

#[test]
fn determinism() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let twice = |f: &(dyn Fn() -> Trace + Sync)| pool.install(|| (f(), f()));
    let logistic_data = logistic(3000, 5);
    let (lasso_data, _) = gen_dataset_a(3000, 10, 5).unwrap();
    let lasso = ModelSpec::lasso(0.01);
    let lg = ModelSpec::logistic();
    let cg = CaGdConfig { gamma: 0.1, ..Default::default() };
    let bc = BcdConfig { oracle: OracleKind::Momentum { beta: 0.9 }, eps_grad: 0.0, fpe_budget: Some(10.0), seed: 5, ..Default::default() };
    let sc = SgdConfig { batch_size: 64, it_max: 500, seed: 5, ..Default::default() };
    let runs: Vec<(&str, Run)> = vec![
        ("gd", Box::new(|| gd(&lg, &logistic_data, &cg).unwrap())),
        ("gd momentum", Box::new(|| gd_with(&lg, &logistic_data, &cg, &mut DirectionOracle::momentum(0.9).unwrap()).unwrap())),
        ("cagd", Box::new(|| cagd(&lg, &logistic_data, &cg, &mut DirectionOracle::neg_gradient()).unwrap())),
        ("bcd", Box::new(|| cabcd(&lasso, &lasso_data, &bc, &PlanSource::random(2), false).unwrap())),
        ("cabcd", Box::new(|| cabcd(&lasso, &lasso_data, &bc, &PlanSource::gs(2), true).unwrap())),
        ("sag", Box::new(|| sag(&lasso, &lasso_data, &sc).unwrap())),
        ("adam", Box::new(|| adam(&lasso, &lasso_data, &sc).unwrap())),
    ];
    let mut differing = Vec::new();
    for (name, f) in &runs {
        let (a, b) = twice(f.as_ref());
        let same_theta = a.records.iter().zip(&b.records).all(|(x, y)| x.theta.as_slice() == y.theta.as_slice());
        if timing_free_csv(&a) != timing_free_csv(&b) || !same_theta || a.phases != b.phases {
            differing.push(name.to_string());
        }
    }
    for g in data::GENERATORS {
        let a = data::generate(g, 2000, 8, 5).unwrap();
        let b = data::generate(g, 2000, 8, 5).unwrap();
        let bits = |d: &Dataset| d.x().iter().chain(d.y().iter()).map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&a) != bits(&b) {
            differing.push(g.to_string());
        }
    }
    report(
        "determinism",
        differing.is_empty(),
        format!("{} optimizers and {} generators, differing: {differing:?}", runs.len(), data::GENERATORS.len()),
    );
}
