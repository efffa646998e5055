//! Full gradient descent and Carathéodory gradient descent (CaGD).
//!
//! CaGD recombines the per-sample gradients at an anchor point into a
//! measure with at most `d + 1` atoms and keeps stepping on that measure while
//! the control statistic Δ keeps decreasing. When it stops decreasing, the
//! last step is rolled back, a full gradient is computed and the measure is
//! rebuilt.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, Dataset, Evaluation, ModelSpec, Theta, WeightedSample};
use crate::recombination::{recombine_hierarchical, MomentMatrix, DEFAULT_TOLERANCE};
use crate::recombination::DiscreteMeasure;
use crate::trace::{ReducedPhase, Stopwatch, Trace, TraceRecord};

pub const DEFAULT_ZERO_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    NegGradient,
    Momentum { beta: f64 },
}

/// Produces the step direction `D_j` from the current mean gradient.
///
/// Momentum keeps `v ← β·v + g` and returns `−v`, so the direction is affine
/// in the current gradient and matching gradients also matches directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionOracle {
    kind: OracleKind,
    velocity: Option<DVector<f64>>,
}

impl DirectionOracle {
    pub fn new(kind: OracleKind) -> Result<Self> {
        if let OracleKind::Momentum { beta } = kind {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig(format!("momentum beta {beta} not in [0, 1)")));
            }
        }
        Ok(Self { kind, velocity: None })
    }

    pub fn neg_gradient() -> Self {
        Self { kind: OracleKind::NegGradient, velocity: None }
    }

    pub fn momentum(beta: f64) -> Result<Self> {
        Self::new(OracleKind::Momentum { beta })
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn velocity(&self) -> Option<&DVector<f64>> {
        self.velocity.as_ref()
    }

    pub fn reset(&mut self) {
        self.velocity = None;
    }

    pub fn direction(&mut self, grad: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            OracleKind::NegGradient => -grad,
            OracleKind::Momentum { beta } => {
                let v = match self.velocity.take() {
                    Some(v) if v.len() == grad.len() => v * beta + grad,
                    _ => grad.clone(),
                };
                let d = -&v;
                self.velocity = Some(v);
                d
            }
        }
    }

    /// Oracle acting on a subset of coordinates, carrying over their velocity.
    pub fn restrict(&self, coords: &[usize]) -> Self {
        Self {
            kind: self.kind,
            velocity: self
                .velocity
                .as_ref()
                .map(|v| DVector::from_iterator(coords.len(), coords.iter().map(|&c| v[c]))),
        }
    }

    /// Writes a restricted oracle's velocity back into the matching coordinates.
    pub fn absorb(&mut self, coords: &[usize], sub: &DirectionOracle, d: usize) {
        if let Some(sv) = &sub.velocity {
            let v = self.velocity.get_or_insert_with(|| DVector::zeros(d));
            for (k, &c) in coords.iter().enumerate() {
                v[c] = sv[k];
            }
        }
    }
}

/// Curvature model used inside Δ.
#[derive(Debug, Clone, PartialEq)]
pub enum HessianApprox {
    /// `c·I`
    Scaled(f64),
    /// `dg ⊗ recip`, i.e. `H_{ij} = dg_i · recip_j`.
    Rank1 { dg: DVector<f64>, recip: DVector<f64> },
}

impl HessianApprox {
    /// `vᵀ H v`
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        match self {
            HessianApprox::Scaled(c) => c * v.norm_squared(),
            HessianApprox::Rank1 { dg, recip } => dg.dot(v) * recip.dot(v),
        }
    }

    pub fn to_matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            HessianApprox::Scaled(c) => DMatrix::identity(d, d) * *c,
            HessianApprox::Rank1 { dg, recip } => dg * recip.transpose(),
        }
    }
}

/// `Δ = g·δ + ½ δᵀHδ` with `δ = θ_j − θ_anchor`.
pub fn control_statistic(
    grad_anchor: &DVector<f64>,
    theta_j: &DVector<f64>,
    theta_anchor: &DVector<f64>,
    hess: &HessianApprox,
) -> f64 {
    let delta = theta_j - theta_anchor;
    grad_anchor.dot(&delta) + 0.5 * hess.quad_form(&delta)
}

/// Rank-1 secant `(g_new − g_old) ⊗ r` with `r_i = 1/Δθ_i`, or 0 where
/// `|Δθ_i| ≤ zero_guard`.
pub fn hessian_rank1(
    grad_new: &DVector<f64>,
    grad_old: &DVector<f64>,
    theta_new: &DVector<f64>,
    theta_old: &DVector<f64>,
    zero_guard: f64,
) -> Result<HessianApprox> {
    let dtheta = theta_new - theta_old;
    if dtheta.iter().all(|t| t.abs() <= zero_guard) {
        return Err(Error::DegenerateStep { guard: zero_guard });
    }
    let recip = dtheta.map(|t| if t.abs() > zero_guard { 1.0 / t } else { 0.0 });
    Ok(HessianApprox::Rank1 { dg: grad_new - grad_old, recip })
}

/// Scalar secant curvature `c = Σ_i Δg_i·r_i` with the same guarded
/// reciprocals as [`hessian_rank1`], used as `c·I`.
pub fn hessian_scalar_secant(
    grad_new: &DVector<f64>,
    grad_old: &DVector<f64>,
    theta_new: &DVector<f64>,
    theta_old: &DVector<f64>,
    zero_guard: f64,
) -> Result<HessianApprox> {
    match hessian_rank1(grad_new, grad_old, theta_new, theta_old, zero_guard)? {
        HessianApprox::Rank1 { dg, recip } => Ok(HessianApprox::Scaled(dg.dot(&recip))),
        h => Ok(h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HessianMode {
    ConstantC { c: f64 },
    /// Outer-product secant `Δg ⊗ (1/Δθ)`.
    Rank1Secant,
    /// Inner-product secant `Δg·(1/Δθ)` times the identity.
    ScalarSecant,
}

impl HessianMode {
    /// Secant estimate from two full-gradient points; `None` for the constant mode.
    pub fn secant(
        &self,
        grad_new: &DVector<f64>,
        grad_old: &DVector<f64>,
        theta_new: &DVector<f64>,
        theta_old: &DVector<f64>,
        zero_guard: f64,
    ) -> Option<Result<HessianApprox>> {
        match self {
            HessianMode::ConstantC { .. } => None,
            HessianMode::Rank1Secant => Some(hessian_rank1(grad_new, grad_old, theta_new, theta_old, zero_guard)),
            HessianMode::ScalarSecant => {
                Some(hessian_scalar_secant(grad_new, grad_old, theta_new, theta_old, zero_guard))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaGdConfig {
    pub gamma: f64,
    /// Stop once `‖∇L‖ ≤ eps_grad`.
    pub eps_grad: f64,
    /// Stop once `|L| < eps_loss`. Zero disables the test.
    pub eps_loss: f64,
    /// Limit on the step counter, reduced steps included.
    pub it_max: usize,
    pub it_max_ca: usize,
    pub hessian_mode: HessianMode,
    pub zero_guard: f64,
    pub recombination_tol: f64,
    /// Optional limit on full-pass equivalents.
    pub fpe_budget: Option<f64>,
    /// Record every accepted reduced iterate (loss and gradient norm `NaN`).
    pub trace_reduced: bool,
    #[serde(skip)]
    pub theta0: Option<Theta>,
}

impl Default for CaGdConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            eps_grad: 1e-3,
            eps_loss: 0.0,
            it_max: 1_000_000,
            it_max_ca: 10_000,
            hessian_mode: HessianMode::Rank1Secant,
            zero_guard: DEFAULT_ZERO_GUARD,
            recombination_tol: DEFAULT_TOLERANCE,
            fpe_budget: None,
            trace_reduced: false,
            theta0: None,
        }
    }
}

impl CaGdConfig {
    /// Step cap per recombination used for logistic runs: `max(10/γ, 10⁴)`.
    pub fn logistic_it_max_ca(gamma: f64) -> usize {
        (10.0 / gamma).max(1e4).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be finite and nonnegative");
        }
        if !(self.eps_grad >= 0.0 && self.eps_loss >= 0.0) {
            return bad("stopping tolerances must be nonnegative");
        }
        if self.it_max_ca < 2 {
            return bad("it_max_ca must be at least 2");
        }
        if let HessianMode::ConstantC { c } = self.hessian_mode {
            if !(c.is_finite() && c >= 0.0) {
                return bad("hessian constant must be finite and nonnegative");
            }
        }
        if !(self.zero_guard >= 0.0 && self.recombination_tol > 0.0) {
            return bad("zero_guard and recombination_tol must be positive");
        }
        Ok(())
    }
}

/// Shared bookkeeping for the full-gradient driven loops.
pub(crate) struct Recorder {
    pub trace: Trace,
    pub fpe: f64,
    pub recombinations: usize,
    pub clock: Stopwatch,
}

impl Recorder {
    pub(crate) fn new() -> Self {
        Self {
            trace: Trace::default(),
            fpe: 0.0,
            recombinations: 0,
            clock: Stopwatch::started(),
        }
    }

    pub(crate) fn push(&mut self, step: usize, theta: &Theta, loss: f64, grad_norm: f64) {
        let wall_clock = self.clock.seconds();
        self.trace.records.push(TraceRecord {
            step,
            theta: theta.clone(),
            loss,
            grad_norm,
            full_pass_equivalent: self.fpe,
            wall_clock,
            recombinations: self.recombinations,
        });
    }

    pub(crate) fn push_eval(&mut self, step: usize, theta: &Theta, eval: &Evaluation) {
        self.push(step, theta, eval.loss, eval.gradient.norm());
    }
}

pub(crate) fn full_eval(
    model: &ModelSpec,
    theta: &Theta,
    data: &Dataset,
    step: usize,
) -> Result<Evaluation> {
    let e = evaluate(model, theta, data)?;
    if !e.loss.is_finite() || e.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged { step });
    }
    Ok(e)
}

pub(crate) fn initial_theta(theta0: &Option<Theta>, data: &Dataset) -> Result<Theta> {
    match theta0 {
        None => Ok(DVector::zeros(data.n_features())),
        Some(t) if t.len() == data.n_features() => Ok(t.clone()),
        Some(t) => Err(Error::DimensionMismatch(format!(
            "theta0 has {} entries, data has {} features",
            t.len(),
            data.n_features()
        ))),
    }
}

fn should_stop(cfg: &CaGdConfig, eval: &Evaluation, j: usize, fpe: f64) -> bool {
    eval.gradient.norm() <= cfg.eps_grad
        || eval.loss.abs() < cfg.eps_loss
        || j >= cfg.it_max
        || cfg.fpe_budget.is_some_and(|b| fpe >= b)
}

/// Plain full-gradient descent `θ ← θ − γ ∇L(θ)`.
pub fn gd(model: &ModelSpec, data: &Dataset, config: &CaGdConfig) -> Result<Trace> {
    gd_with(model, data, config, &mut DirectionOracle::neg_gradient())
}

/// Full-gradient descent along an arbitrary oracle direction.
pub fn gd_with(
    model: &ModelSpec,
    data: &Dataset,
    config: &CaGdConfig,
    oracle: &mut DirectionOracle,
) -> Result<Trace> {
    config.validate()?;
    model.validate()?;
    data.check_for(model)?;
    let mut theta = initial_theta(&config.theta0, data)?;
    let mut rec = Recorder::new();
    let mut j = 0;
    let mut eval = full_eval(model, &theta, data, j)?;
    rec.fpe += 1.0;
    rec.push_eval(j, &theta, &eval);
    while !should_stop(config, &eval, j, rec.fpe) {
        let d = oracle.direction(&eval.gradient);
        theta.axpy(config.gamma, &d, 1.0);
        j += 1;
        eval = full_eval(model, &theta, data, j)?;
        rec.fpe += 1.0;
        rec.push_eval(j, &theta, &eval);
    }
    Ok(rec.trace)
}

/// Recombines the per-sample gradient rows on `coords` into at most
/// `|coords| + 1` atoms.
pub(crate) fn reduce_gradients(
    eval: &Evaluation,
    data: &Dataset,
    coords: &[usize],
    tol: f64,
) -> Result<DiscreteMeasure> {
    let rows = eval.gradient_rows(data, coords);
    let f = MomentMatrix::new(rows)?;
    let mu = DiscreteMeasure::uniform(data.n_samples());
    Ok(recombine_hierarchical(&f, &mu, tol)?.measure)
}

/// Carathéodory gradient descent.
pub fn cagd(
    model: &ModelSpec,
    data: &Dataset,
    config: &CaGdConfig,
    oracle: &mut DirectionOracle,
) -> Result<Trace> {
    config.validate()?;
    model.validate()?;
    data.check_for(model)?;
    let n = data.n_samples() as f64;
    let all: Vec<usize> = (0..data.n_features()).collect();
    let uses_secant = !matches!(config.hessian_mode, HessianMode::ConstantC { .. });

    let mut rec = Recorder::new();
    let mut j = 0;
    let mut theta = initial_theta(&config.theta0, data)?;
    let mut eval = full_eval(model, &theta, data, j)?;
    rec.fpe += 1.0;
    rec.push_eval(j, &theta, &eval);

    // previous full-gradient point, needed by the secant
    let mut prev: Option<(Theta, DVector<f64>)> = None;
    while !should_stop(config, &eval, j, rec.fpe) {
        let hess = match (config.hessian_mode, &prev) {
            (HessianMode::ConstantC { c }, _) => Some(HessianApprox::Scaled(c)),
            (_, None) => None,
            (mode, Some((tp, gp))) => match mode.secant(&eval.gradient, gp, &theta, tp, config.zero_guard) {
                Some(Ok(h)) => Some(h),
                Some(Err(Error::DegenerateStep { .. })) => None,
                Some(Err(e)) => return Err(e),
                None => None,
            },
        };

        // The first step of a phase only needs the full gradient at the anchor.
        let mut current = &theta + oracle.direction(&eval.gradient) * config.gamma;
        j += 1;
        let first_delta = hess
            .as_ref()
            .map(|h| control_statistic(&eval.gradient, &current, &theta, h));

        match (hess, first_delta) {
            (Some(hess), Some(delta)) if delta <= 0.0 => {
                let mu = reduce_gradients(&eval, data, &all, config.recombination_tol)?;
                rec.recombinations += 1;
                rec.trace.tau_events.push(j - 1);
                let sample = WeightedSample::new(data, &mu);
                let step_cost = sample.len() as f64 / n;
                let mut phase = ReducedPhase {
                    anchor_step: j - 1,
                    coords: all.clone(),
                    support: sample.len(),
                    deltas: vec![delta],
                    retained: 1,
                    capped: false,
                    truncated: false,
                };
                if config.trace_reduced {
                    rec.push(j, &current, f64::NAN, f64::NAN);
                }
                let mut last_delta = delta;
                loop {
                    if phase.deltas.len() == config.it_max_ca {
                        phase.capped = true;
                        break;
                    }
                    if j >= config.it_max || config.fpe_budget.is_some_and(|b| rec.fpe >= b) {
                        phase.truncated = true;
                        break;
                    }
                    let g_hat = sample.gradient(model, &current);
                    rec.fpe += step_cost;
                    let saved = oracle.clone();
                    let candidate = &current + oracle.direction(&g_hat) * config.gamma;
                    let delta = control_statistic(&eval.gradient, &candidate, &theta, &hess);
                    phase.deltas.push(delta);
                    if !(delta < last_delta) {
                        *oracle = saved;
                        break;
                    }
                    if !candidate.iter().all(|t| t.is_finite()) {
                        return Err(Error::Diverged { step: j + 1 });
                    }
                    current = candidate;
                    last_delta = delta;
                    phase.retained += 1;
                    j += 1;
                    if config.trace_reduced {
                        rec.push(j, &current, f64::NAN, f64::NAN);
                    }
                }
                rec.trace.phases.push(phase);
            }
            _ => {
                // no usable curvature yet, or the quadratic model predicts no
                // decrease: keep the step as a plain full-gradient step
                if uses_secant && prev.is_some() {
                    rec.trace.plain_steps += 1;
                }
            }
        }

        let next_eval = full_eval(model, &current, data, j)?;
        rec.fpe += 1.0;
        rec.push_eval(j, &current, &next_eval);
        prev = Some((std::mem::replace(&mut theta, current), eval.gradient.clone()));
        eval = next_eval;
    }
    Ok(rec.trace)
}
