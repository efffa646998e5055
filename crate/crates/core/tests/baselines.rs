mod common;

use caratheodory::baselines::{adam, sag, sample_batch, SgdConfig};
use caratheodory::bcd::{cabcd, BcdConfig, PlanSource};
use caratheodory::bench::timing_free_csv;
use caratheodory::data::gen_dataset_a;
use caratheodory::model::{Dataset, ModelSpec};
use caratheodory::optim::OracleKind;
use common::*;
use nalgebra::DVector;

fn lasso_instance(n: usize, d: usize, seed: u64) -> Dataset {
    gen_dataset_a(n, d, seed).unwrap().0
}

#[test]
fn full_batch_sag_steps_like_gradient_descent() {
    let data = lasso_instance(500, 8, 1);
    let model = ModelSpec::lasso(0.01);
    let cfg = SgdConfig { learning_rate: 0.01, batch_size: 500, it_max: 6, record_every: Some(1), ..Default::default() };
    let t = sag(&model, &data, &cfg).unwrap();
    let mut theta = DVector::zeros(8);
    for r in &t.records {
        assert!((&r.theta - &theta).amax() <= 1e-12, "step {}", r.step);
        theta -= naive_gradient(&model, &theta, &data) * 0.01;
    }
    assert_eq!(t.records.len(), 7);
}

#[test]
fn same_seed_same_trace() {
    let data = lasso_instance(2000, 10, 4);
    let model = ModelSpec::lasso(0.01);
    let cfg = SgdConfig { batch_size: 64, it_max: 300, seed: 9, ..Default::default() };
    for run in [sag, adam] {
        let a = run(&model, &data, &cfg).unwrap();
        let b = run(&model, &data, &cfg).unwrap();
        assert_eq!(timing_free_csv(&a), timing_free_csv(&b));
        assert_eq!(a.final_theta().unwrap().as_slice(), b.final_theta().unwrap().as_slice());
        let c = run(&model, &data, &SgdConfig { seed: 10, ..cfg.clone() }).unwrap();
        assert_ne!(a.final_theta().unwrap().as_slice(), c.final_theta().unwrap().as_slice());
    }
}

#[test]
fn small_step_sag_decreases_monotonically() {
    let data = lasso_instance(5000, 20, 2);
    let model = ModelSpec::lasso(0.01);
    let cfg = SgdConfig { learning_rate: 1e-6, it_max: 100, record_every: Some(1), ..Default::default() };
    let t = sag(&model, &data, &cfg).unwrap();
    assert_eq!(t.records.len(), 101);
    assert!(t.records.windows(2).all(|w| w[1].loss < w[0].loss));
}

#[test]
fn minibatches_are_uniform() {
    // 20 000 batches of 5 out of 20: each index expected 5000 times
    let mut r = rng(21);
    let (n, b, draws) = (20usize, 5usize, 20_000usize);
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        let batch = sample_batch(&mut r, n, b);
        let mut s = batch.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), b);
        for i in batch {
            counts[i] += 1;
        }
    }
    let p = b as f64 / n as f64;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c} vs {mean} ± {sd}");
    }
}

#[test]
fn adam_with_ten_times_the_budget_matches_block_descent() {
    let data = lasso_instance(5000, 20, 2);
    let model = ModelSpec::lasso(0.01);
    let budget = 30.0;
    let bcd_cfg = BcdConfig {
        oracle: OracleKind::Momentum { beta: 0.9 },
        eps_grad: 0.0,
        fpe_budget: Some(budget),
        ..Default::default()
    };
    let reference = cabcd(&model, &data, &bcd_cfg, &PlanSource::gs(2), false).unwrap().final_loss();
    let cfg = SgdConfig { it_max: usize::MAX, fpe_budget: Some(10.0 * budget), ..Default::default() };
    let t = adam(&model, &data, &cfg).unwrap();
    assert!(t.final_loss() <= 1.05 * reference, "{} vs {reference}", t.final_loss());
    assert!(t.full_passes() >= 10.0 * budget && t.full_passes() < 10.0 * budget + 1.0);
}

#[test]
fn monitoring_is_not_charged() {
    let data = lasso_instance(1000, 5, 3);
    let cfg = SgdConfig { batch_size: 100, it_max: 50, record_every: Some(1), ..Default::default() };
    let t = adam(&ModelSpec::lasso(0.01), &data, &cfg).unwrap();
    assert!((t.full_passes() - 5.0).abs() < 1e-12);
    assert!(t.records.windows(2).all(|w| (w[1].full_pass_equivalent - w[0].full_pass_equivalent - 0.1).abs() < 1e-12));
}

#[test]
fn bad_batch_sizes_are_rejected() {
    let data = lasso_instance(100, 5, 3);
    let cfg = SgdConfig { batch_size: 101, ..Default::default() };
    assert!(sag(&ModelSpec::lasso(0.01), &data, &cfg).is_err());
    assert!(adam(&ModelSpec::lasso(0.01), &data, &SgdConfig { batch_size: 0, ..cfg }).is_err());
}
