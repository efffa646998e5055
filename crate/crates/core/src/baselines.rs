//! Minibatch baselines: SAG and ADAM.

use nalgebra::DVector;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, Dataset, ModelSpec, Theta};
use crate::optim::{initial_theta, Recorder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub it_max: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
    pub fpe_budget: Option<f64>,
    /// Steps between monitoring records; one epoch by default.
    pub record_every: Option<usize>,
    #[serde(skip)]
    pub theta0: Option<Theta>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            it_max: 10_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
            fpe_budget: None,
            record_every: None,
            theta0: None,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(what));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size {} not in [1, {n}]", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps_stability > 0.0) {
            return bad("eps_stability must be positive".into());
        }
        if self.record_every == Some(0) {
            return bad("record_every must be positive".into());
        }
        Ok(())
    }
}

/// Uniform minibatch of distinct indices.
pub fn sample_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    index::sample(rng, n, batch).into_vec()
}

/// First/second-moment state with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
}

impl Adam {
    pub fn new(d: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: DVector::zeros(d), v: DVector::zeros(d), t: 0 }
    }

    pub fn step(&mut self, theta: &mut Theta, g: &DVector<f64>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g[k] * g[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            theta[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn record_interval(cfg: &SgdConfig, n: usize) -> usize {
    cfg.record_every.unwrap_or_else(|| n.div_ceil(cfg.batch_size))
}

/// Full-data loss and gradient for the trace; not counted in time or passes.
fn monitor(rec: &mut Recorder, model: &ModelSpec, data: &Dataset, step: usize, theta: &Theta) -> Result<()> {
    rec.clock.pause();
    let e = evaluate(model, theta, data)?;
    if !e.loss.is_finite() {
        return Err(Error::Diverged { step });
    }
    rec.clock.resume();
    rec.push_eval(step, theta, &e);
    Ok(())
}

fn stopped(cfg: &SgdConfig, j: usize, fpe: f64) -> bool {
    j >= cfg.it_max || cfg.fpe_budget.is_some_and(|b| fpe >= b)
}

/// Stochastic average gradient with a zero-initialised table.
pub fn sag(model: &ModelSpec, data: &Dataset, config: &SgdConfig) -> Result<crate::trace::Trace> {
    model.validate()?;
    data.check_for(model)?;
    let (n, d) = (data.n_samples(), data.n_features());
    config.validate(n)?;
    let mut theta = initial_theta(&config.theta0, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let every = record_interval(config, n);
    let mut table = vec![0.0; n * d];
    let mut sum = DVector::<f64>::zeros(d);

    let mut rec = Recorder::new();
    monitor(&mut rec, model, data, 0, &theta)?;
    let mut j = 0;
    while !stopped(config, j, rec.fpe) {
        for i in sample_batch(&mut rng, n, config.batch_size) {
            let r = model.sample_residual(data.score(i, &theta), data.y()[i]);
            let row = &mut table[i * d..(i + 1) * d];
            for k in 0..d {
                let g = r * data.x()[(i, k)];
                sum[k] += g - row[k];
                row[k] = g;
            }
        }
        for k in 0..d {
            theta[k] -= config.learning_rate * (sum[k] / n as f64 + model.penalty_subgradient(theta[k]));
        }
        j += 1;
        rec.fpe += config.batch_size as f64 / n as f64;
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::Diverged { step: j });
        }
        if j % every == 0 || stopped(config, j, rec.fpe) {
            monitor(&mut rec, model, data, j, &theta)?;
        }
    }
    Ok(rec.trace)
}

/// ADAM on minibatch gradients of the full objective, penalty included.
pub fn adam(model: &ModelSpec, data: &Dataset, config: &SgdConfig) -> Result<crate::trace::Trace> {
    model.validate()?;
    data.check_for(model)?;
    let (n, d) = (data.n_samples(), data.n_features());
    config.validate(n)?;
    let mut theta = initial_theta(&config.theta0, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let every = record_interval(config, n);
    let mut state = Adam::new(d, config.learning_rate, config.beta1, config.beta2, config.eps_stability);

    let mut rec = Recorder::new();
    monitor(&mut rec, model, data, 0, &theta)?;
    let mut j = 0;
    let inv_b = 1.0 / config.batch_size as f64;
    while !stopped(config, j, rec.fpe) {
        let mut g = DVector::zeros(d);
        for i in sample_batch(&mut rng, n, config.batch_size) {
            let r = model.sample_residual(data.score(i, &theta), data.y()[i]) * inv_b;
            for k in 0..d {
                g[k] += r * data.x()[(i, k)];
            }
        }
        for k in 0..d {
            g[k] += model.penalty_subgradient(theta[k]);
        }
        state.step(&mut theta, &g);
        j += 1;
        rec.fpe += config.batch_size as f64 / n as f64;
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::Diverged { step: j });
        }
        if j % every == 0 || stopped(config, j, rec.fpe) {
            monitor(&mut rec, model, data, j, &theta)?;
        }
    }
    Ok(rec.trace)
}
