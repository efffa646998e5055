//! Block coordinate descent with optional Carathéodory acceleration.
//!
//! Each outer iteration picks disjoint coordinate blocks, takes one
//! full-measure step on them and, when acceleration is on, runs an
//! independent reduced-measure phase per block before synchronising.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Evaluation, Family, ModelSpec, Theta};
use crate::optim::{
    control_statistic, full_eval, initial_theta, reduce_gradients, DirectionOracle,
    HessianApprox, HessianMode, OracleKind, Recorder, DEFAULT_ZERO_GUARD,
};
use crate::recombination::DEFAULT_TOLERANCE;
use crate::trace::{ReducedPhase, Trace};

/// Ridge added to singular block Hessians.
pub const HB_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub coords: Vec<usize>,
}

impl Block {
    pub fn new(coords: Vec<usize>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub blocks: Vec<Block>,
    pub rule_id: String,
}

impl BlockPlan {
    /// Blocks are non-empty, in range and pairwise disjoint.
    pub fn validate(&self, d: usize) -> Result<()> {
        check_blocks(&self.blocks, d)
    }
}

fn check_blocks(blocks: &[Block], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for b in blocks {
        if b.is_empty() {
            return Err(Error::InvalidConfig("empty block".into()));
        }
        for &c in &b.coords {
            if c >= d {
                return Err(Error::DimensionMismatch(format!("coordinate {c} out of range for d = {d}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidConfig(format!("coordinate {c} in two blocks")));
            }
        }
    }
    Ok(())
}

fn chunk(order: &[usize], s: usize) -> Vec<Block> {
    order.chunks(s.max(1)).map(|c| Block::new(c.to_vec())).collect()
}

/// Indices sorted by descending `|g|`, ties broken by index.
fn by_magnitude(g: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    order
}

/// Gauss-Southwell blocks: the shortest prefix of coordinates, by
/// descending `|g|`, whose mass exceeds `percentage` of the total, cut into
/// blocks of size `s`.
pub fn gs_blocks(gradient: &DVector<f64>, percentage: f64, s: usize) -> Vec<Block> {
    let total: f64 = gradient.iter().map(|g| g.abs()).sum();
    if gradient.is_empty() {
        return Vec::new();
    }
    if total == 0.0 {
        return vec![Block::new(vec![0])];
    }
    let order = by_magnitude(gradient);
    let threshold = percentage * total;
    let mut prefix = 0.0;
    let mut n_hat = order.len();
    for (q, &i) in order.iter().enumerate() {
        prefix += gradient[i].abs();
        if prefix > threshold {
            n_hat = q + 1;
            break;
        }
    }
    chunk(&order[..n_hat], s)
}

fn random_blocks_with(rng: &mut ChaCha8Rng, d: usize, fraction: f64, s: usize) -> Vec<Block> {
    let k = ((fraction * d as f64).ceil() as usize).clamp(1, d);
    let picked = index::sample(rng, d, k).into_vec();
    chunk(&picked, s)
}

/// `⌈fraction·d⌉` coordinates drawn without replacement, cut into blocks of size `s`.
pub fn random_blocks(d: usize, fraction: f64, s: usize, rng_seed: u64) -> Vec<Block> {
    random_blocks_with(&mut ChaCha8Rng::seed_from_u64(rng_seed), d, fraction, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    VB,
    Sort,
    Order,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selection {
    Random,
    Cyclic,
    GS,
    Lipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionRule {
    Lb,
    Hb,
}

/// A `partition_selection_direction` rule such as `VB_GS_Hb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleId {
    pub partition: Partition,
    pub selection: Selection,
    pub direction: DirectionRule,
}

impl RuleId {
    pub fn all() -> Vec<RuleId> {
        let mut out = Vec::new();
        for partition in [Partition::VB, Partition::Sort, Partition::Order, Partition::Avg] {
            for selection in [Selection::Random, Selection::Cyclic, Selection::GS, Selection::Lipschitz] {
                for direction in [DirectionRule::Lb, DirectionRule::Hb] {
                    out.push(RuleId { partition, selection, direction });
                }
            }
        }
        out
    }

    /// Rule name with the `_CA` suffix when acceleration is on.
    pub fn label(&self, caratheodory: bool) -> String {
        if caratheodory { format!("{self}_CA") } else { self.to_string() }
    }

    /// Parses a name, returning whether it carried the `_CA` suffix.
    pub fn parse_label(s: &str) -> Result<(RuleId, bool)> {
        match s.strip_suffix("_CA") {
            Some(base) => Ok((base.parse()?, true)),
            None => Ok((s.parse()?, false)),
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}_{:?}_{:?}", self.partition, self.selection, self.direction)
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown rule id {s:?}"));
        let mut parts = s.split('_');
        let partition = match parts.next() {
            Some("VB") => Partition::VB,
            Some("Sort") => Partition::Sort,
            Some("Order") => Partition::Order,
            Some("Avg") => Partition::Avg,
            _ => return Err(bad()),
        };
        let selection = match parts.next() {
            Some("Random") => Selection::Random,
            Some("Cyclic") => Selection::Cyclic,
            Some("GS") => Selection::GS,
            Some("Lipschitz") => Selection::Lipschitz,
            _ => return Err(bad()),
        };
        let direction = match parts.next() {
            Some("Lb") => DirectionRule::Lb,
            Some("Hb") => DirectionRule::Hb,
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(RuleId { partition, selection, direction })
    }
}

/// Fixed partition for Sort/Order/Avg. VB yields an empty plan, since its
/// blocks are drawn afresh every iteration.
pub fn partition_plan(
    partition: Partition,
    lipschitz: Option<&[f64]>,
    s: usize,
    d: usize,
) -> Result<BlockPlan> {
    let s = s.max(1);
    let name = format!("{partition:?}");
    let sorted = |l: &[f64]| -> Result<Vec<usize>> {
        if l.len() != d {
            return Err(Error::DimensionMismatch(format!("{} Lipschitz constants for d = {d}", l.len())));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| l[b].total_cmp(&l[a]).then(a.cmp(&b)));
        Ok(order)
    };
    let blocks = match partition {
        Partition::VB => Vec::new(),
        Partition::Order => chunk(&(0..d).collect::<Vec<_>>(), s),
        Partition::Sort => {
            let l = lipschitz.ok_or_else(|| Error::MissingLipschitz(name.clone()))?;
            chunk(&sorted(l)?, s)
        }
        Partition::Avg => {
            let l = lipschitz.ok_or_else(|| Error::MissingLipschitz(name.clone()))?;
            let desc = sorted(l)?;
            let (mut lo, mut hi) = (0, d);
            let mut order = Vec::with_capacity(d);
            while lo < hi {
                order.push(desc[lo]);
                lo += 1;
                if lo < hi {
                    hi -= 1;
                    order.push(desc[hi]);
                }
            }
            chunk(&order, s)
        }
    };
    Ok(BlockPlan { blocks, rule_id: name })
}

fn require_ls(model: &ModelSpec) -> Result<()> {
    if model.family != Family::LeastSquares {
        return Err(Error::WrongModel);
    }
    Ok(())
}

/// `(2/N)·σ_max(X_block)²`, the gradient Lipschitz constant of a
/// least-squares loss along a block.
pub fn block_lipschitz_ls(model: &ModelSpec, data: &Dataset, block: &Block) -> Result<f64> {
    require_ls(model)?;
    check_blocks(std::slice::from_ref(block), data.n_features())?;
    let xb = data.x().select_columns(&block.coords);
    let gram = xb.tr_mul(&xb) / data.n_samples() as f64;
    Ok(lipschitz_from_gram(&gram))
}

fn lipschitz_from_gram(gram_block: &DMatrix<f64>) -> f64 {
    let top = SymmetricEigen::new(gram_block.clone()).eigenvalues.max();
    2.0 * top.max(0.0)
}

/// `XᵀX / N` restricted to a block.
fn sub_gram(gram: &DMatrix<f64>, coords: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(coords.len(), coords.len(), |a, b| gram[(coords[a], coords[b])])
}

/// Solves `(2·G_b) u = g` with a ridge fallback when the block Hessian is singular.
fn newton_solve(gram_block: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let h = gram_block * 2.0;
    let scale = h.diagonal().amax();
    let well_posed = |m: &DMatrix<f64>| {
        m.clone().cholesky().filter(|c| {
            let l = c.l_dirty().diagonal();
            l.iter().all(|v| v * v > 1e-12 * scale)
        })
    };
    if let Some(c) = well_posed(&h) {
        return Ok(c.solve(g));
    }
    let ridged = &h + DMatrix::identity(h.nrows(), h.ncols()) * HB_RIDGE;
    let u = ridged
        .clone()
        .cholesky()
        .map(|c| c.solve(g))
        .or_else(|| ridged.lu().solve(g))
        .ok_or(Error::SingularBlockHessian)?;
    if u.iter().all(|v| v.is_finite()) { Ok(u) } else { Err(Error::SingularBlockHessian) }
}

/// Block direction `Γ·g_block` (the step is its negative): `g/L` for Lb,
/// `H⁻¹g` for Hb with `H = (2/N) X_bᵀX_b`.
pub fn block_direction(
    rule: DirectionRule,
    model: &ModelSpec,
    data: &Dataset,
    theta: &Theta,
    block: &Block,
    lipschitz: f64,
) -> Result<DVector<f64>> {
    require_ls(model)?;
    let g = crate::model::mean_gradient(model, theta, data, None, Some(&block.coords))?;
    match rule {
        DirectionRule::Lb => lb_direction(&g, lipschitz),
        DirectionRule::Hb => {
            let xb = data.x().select_columns(&block.coords);
            newton_solve(&(xb.tr_mul(&xb) / data.n_samples() as f64), &g)
        }
    }
}

fn lb_direction(g: &DVector<f64>, lipschitz: f64) -> Result<DVector<f64>> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::MissingLipschitz(format!("block constant {lipschitz}")));
    }
    Ok(g / lipschitz)
}

/// Where blocks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanSource {
    /// Gauss-Southwell prefix covering `percentage` of the gradient mass.
    Gs { percentage: f64, s: usize },
    /// A random `fraction` of the coordinates.
    Random { fraction: f64, s: usize },
    /// One block per iteration chosen by a partition/selection/direction rule.
    Rule { rule: String, s: usize },
}

impl PlanSource {
    pub fn gs(s: usize) -> Self {
        PlanSource::Gs { percentage: 0.75, s }
    }

    pub fn random(s: usize) -> Self {
        PlanSource::Random { fraction: 0.5, s }
    }

    pub fn rule(rule: RuleId, s: usize) -> Self {
        PlanSource::Rule { rule: rule.to_string(), s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcdConfig {
    /// Step size for oracle-driven (GS / Random) plans.
    pub gamma: f64,
    pub eps_grad: f64,
    pub eps_loss: f64,
    /// Limit on the step counter, reduced block steps included.
    pub it_max: usize,
    pub it_max_ca: usize,
    pub zero_guard: f64,
    pub recombination_tol: f64,
    pub fpe_budget: Option<f64>,
    pub oracle: OracleKind,
    /// Curvature model inside Δ; constant mode is not available per block.
    pub secant: HessianMode,
    /// Step factor applied to rule-grid directions on reduced steps.
    pub rule_reduced_factor: f64,
    pub seed: u64,
    #[serde(skip)]
    pub theta0: Option<Theta>,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            eps_grad: 1e-6,
            eps_loss: 0.0,
            it_max: usize::MAX,
            it_max_ca: 100,
            zero_guard: DEFAULT_ZERO_GUARD,
            recombination_tol: DEFAULT_TOLERANCE,
            fpe_budget: None,
            oracle: OracleKind::NegGradient,
            secant: HessianMode::Rank1Secant,
            rule_reduced_factor: 1e-2,
            seed: 0,
            theta0: None,
        }
    }
}

impl BcdConfig {
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
        if matches!(self.secant, HessianMode::ConstantC { .. }) {
            return bad("block runs need a secant curvature model");
        }
        if !(self.rule_reduced_factor > 0.0 && self.rule_reduced_factor.is_finite()) {
            return bad("rule_reduced_factor must be positive");
        }
        if self.fpe_budget.is_none() && self.it_max == usize::MAX && self.eps_grad == 0.0 && self.eps_loss == 0.0 {
            return bad("no stopping rule: set eps_grad, eps_loss, it_max or fpe_budget");
        }
        Ok(())
    }

    fn stop(&self, eval: &Evaluation, j: usize, fpe: f64) -> bool {
        eval.gradient.norm() <= self.eps_grad
            || eval.loss.abs() < self.eps_loss
            || j >= self.it_max
            || self.fpe_budget.is_some_and(|b| fpe >= b)
    }
}

/// How a block turns a gradient into a step.
#[derive(Debug, Clone)]
enum Stepper {
    /// `γ·D` from the direction oracle.
    Oracle { gamma: f64 },
    /// `−factor·Γ g`, `Γ = 1/L_b`.
    Lipschitz { l: f64 },
    /// `−factor·H_b⁻¹ g`.
    Newton { gram: DMatrix<f64> },
}

impl Stepper {
    fn step(&self, g: &DVector<f64>, oracle: &mut DirectionOracle, factor: f64) -> Result<DVector<f64>> {
        match self {
            Stepper::Oracle { gamma } => Ok(oracle.direction(g) * *gamma),
            Stepper::Lipschitz { l } => Ok(lb_direction(g, *l)? * -factor),
            Stepper::Newton { gram } => Ok(newton_solve(gram, g)? * -factor),
        }
    }
}

/// Resolved block-selection state for one run.
struct Selector {
    source: PlanSource,
    rule: Option<RuleId>,
    fixed: Vec<Block>,
    block_l: Vec<f64>,
    coord_l: Vec<f64>,
    gram: Option<DMatrix<f64>>,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl Selector {
    fn new(source: &PlanSource, model: &ModelSpec, data: &Dataset, seed: u64) -> Result<Self> {
        let d = data.n_features();
        let mut sel = Selector {
            source: source.clone(),
            rule: None,
            fixed: Vec::new(),
            block_l: Vec::new(),
            coord_l: Vec::new(),
            gram: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
        };
        match source {
            PlanSource::Gs { percentage, s } => {
                if !(*percentage > 0.0 && *percentage <= 1.0) || *s == 0 {
                    return Err(Error::InvalidConfig("GS plan needs percentage in (0, 1] and s ≥ 1".into()));
                }
            }
            PlanSource::Random { fraction, s } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) || *s == 0 {
                    return Err(Error::InvalidConfig("random plan needs fraction in (0, 1] and s ≥ 1".into()));
                }
            }
            PlanSource::Rule { rule, s } => {
                let (rule, _) = RuleId::parse_label(rule)?;
                if *s == 0 {
                    return Err(Error::InvalidConfig("block size must be at least 1".into()));
                }
                if rule.partition == Partition::VB && rule.selection == Selection::Cyclic {
                    return Err(Error::UnsupportedRule(rule.to_string()));
                }
                require_ls(model)?;
                let gram = data.x().tr_mul(data.x()) / data.n_samples() as f64;
                sel.coord_l = (0..d).map(|j| 2.0 * gram[(j, j)]).collect();
                let plan = partition_plan(rule.partition, Some(&sel.coord_l), *s, d)?;
                sel.block_l = plan
                    .blocks
                    .iter()
                    .map(|b| lipschitz_from_gram(&sub_gram(&gram, &b.coords)))
                    .collect();
                sel.fixed = plan.blocks;
                sel.gram = Some(gram);
                sel.rule = Some(rule);
            }
        }
        Ok(sel)
    }

    fn select(&mut self, g: &DVector<f64>) -> Result<Vec<Block>> {
        let d = g.len();
        match &self.source {
            PlanSource::Gs { percentage, s } => Ok(gs_blocks(g, *percentage, *s)),
            PlanSource::Random { fraction, s } => Ok(random_blocks_with(&mut self.rng, d, *fraction, *s)),
            PlanSource::Rule { s, .. } => {
                let s = (*s).min(d);
                let rule = self.rule.expect("set for rule-grid plans");
                if rule.partition == Partition::VB {
                    let coords = match rule.selection {
                        Selection::GS => by_magnitude(g)[..s].to_vec(),
                        Selection::Random => index::sample(&mut self.rng, d, s).into_vec(),
                        Selection::Lipschitz => weighted_sample(&mut self.rng, &self.coord_l, s),
                        Selection::Cyclic => return Err(Error::UnsupportedRule(rule.to_string())),
                    };
                    return Ok(vec![Block::new(coords)]);
                }
                let k = match rule.selection {
                    Selection::Cyclic => {
                        let k = self.cursor % self.fixed.len();
                        self.cursor += 1;
                        k
                    }
                    Selection::Random => self.rng.random_range(0..self.fixed.len()),
                    Selection::Lipschitz => weighted_sample(&mut self.rng, &self.block_l, 1)[0],
                    Selection::GS => {
                        let norms: Vec<f64> = self
                            .fixed
                            .iter()
                            .map(|b| b.coords.iter().map(|&c| g[c] * g[c]).sum())
                            .collect();
                        let mut best = 0;
                        for (k, n) in norms.iter().enumerate() {
                            if *n > norms[best] {
                                best = k;
                            }
                        }
                        best
                    }
                };
                Ok(vec![self.fixed[k].clone()])
            }
        }
    }

    fn stepper(&self, block: &Block, gamma: f64) -> Stepper {
        match (self.rule, &self.gram) {
            (Some(rule), Some(gram)) => {
                let gb = sub_gram(gram, &block.coords);
                match rule.direction {
                    DirectionRule::Lb => Stepper::Lipschitz { l: lipschitz_from_gram(&gb) },
                    DirectionRule::Hb => Stepper::Newton { gram: gb },
                }
            }
            _ => Stepper::Oracle { gamma },
        }
    }
}

/// `amount` distinct indices drawn with probability proportional to `w`
/// (uniform when all weights vanish).
fn weighted_sample(rng: &mut ChaCha8Rng, w: &[f64], amount: usize) -> Vec<usize> {
    if w.iter().all(|v| *v <= 0.0) {
        return index::sample(rng, w.len(), amount).into_vec();
    }
    if amount == 1 {
        let dist = WeightedIndex::new(w).expect("nonnegative weights with positive sum");
        return vec![dist.sample(rng)];
    }
    let positive = w.iter().filter(|v| **v > 0.0).count();
    let mut picked = index::sample_weighted(rng, w.len(), |i| w[i].max(0.0), amount.min(positive))
        .expect("valid weights")
        .into_vec();
    if picked.len() < amount {
        let rest: Vec<usize> = (0..w.len()).filter(|i| !picked.contains(i)).collect();
        picked.extend(rest.into_iter().take(amount - picked.len()));
    }
    picked
}

/// Result of one block's reduced phase.
struct BlockOutcome {
    values: DVector<f64>,
    oracle: DirectionOracle,
    /// `None` when the first step did not lower Δ and no measure was built.
    phase: Option<ReducedPhase>,
    cost: f64,
}

/// Everything a block phase reads; shared across blocks.
struct PhaseInput<'a> {
    model: &'a ModelSpec,
    data: &'a Dataset,
    theta_anchor: &'a Theta,
    scores: &'a DVector<f64>,
    eval_anchor: &'a Evaluation,
    anchor_step: usize,
    config: &'a BcdConfig,
}

fn reduced_block_phase(
    input: &PhaseInput<'_>,
    block: &Block,
    hess: &HessianApprox,
    stepper: &Stepper,
    mut oracle: DirectionOracle,
) -> Result<BlockOutcome> {
    let PhaseInput { model, data, theta_anchor, scores, eval_anchor, config, .. } = *input;
    let coords = &block.coords;
    let factor = config.rule_reduced_factor;
    let anchor_b = DVector::from_iterator(coords.len(), coords.iter().map(|&c| theta_anchor[c]));
    let g_anchor = DVector::from_iterator(coords.len(), coords.iter().map(|&c| eval_anchor.gradient[c]));

    // the first step uses the block gradient already known at the anchor
    let mut current = &anchor_b + stepper.step(&g_anchor, &mut oracle, factor)?;
    let first = control_statistic(&g_anchor, &current, &anchor_b, hess);
    if !(first <= 0.0) {
        return Ok(BlockOutcome { values: current, oracle, phase: None, cost: 0.0 });
    }

    let mu = reduce_gradients(eval_anchor, data, coords, config.recombination_tol)?;
    let k = mu.len();
    let xb = DMatrix::from_fn(k, coords.len(), |r, c| data.x()[(mu.support[r], coords[c])]);
    let base: Vec<f64> = mu.support.iter().map(|&i| scores[i]).collect();
    let ys: Vec<f64> = mu.support.iter().map(|&i| data.y()[i]).collect();
    let n = data.n_samples() as f64;

    let mut phase = ReducedPhase {
        anchor_step: input.anchor_step,
        coords: coords.clone(),
        support: k,
        deltas: vec![first],
        retained: 1,
        capped: false,
        truncated: false,
    };
    let mut last = first;
    let mut cost = 0.0;
    loop {
        if phase.deltas.len() == config.it_max_ca {
            phase.capped = true;
            break;
        }
        let shift = &xb * (&current - &anchor_b);
        let mut scaled = DVector::zeros(k);
        for r in 0..k {
            scaled[r] = mu.weights[r] * model.sample_residual(base[r] + shift[r], ys[r]);
        }
        let mut g_hat = xb.tr_mul(&scaled);
        for (c, v) in g_hat.iter_mut().enumerate() {
            *v += model.penalty_subgradient(current[c]);
        }
        cost += k as f64 / n;
        let saved = oracle.clone();
        let candidate = &current + stepper.step(&g_hat, &mut oracle, factor)?;
        let delta = control_statistic(&g_anchor, &candidate, &anchor_b, hess);
        phase.deltas.push(delta);
        if !(delta < last) {
            oracle = saved;
            break;
        }
        if !candidate.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: input.anchor_step });
        }
        current = candidate;
        last = delta;
        phase.retained += 1;
    }
    Ok(BlockOutcome { values: current, oracle, phase: Some(phase), cost })
}

/// Outcome of running all block phases of one iteration.
struct Synced {
    steps: usize,
    cost: f64,
    recombinations: usize,
    plain: usize,
}

/// Runs the per-block phases in parallel and writes the results back.
fn run_block_phases(
    input: &PhaseInput<'_>,
    jobs: Vec<(Block, HessianApprox, Stepper)>,
    theta: &mut Theta,
    oracle: &mut DirectionOracle,
    trace: &mut Trace,
) -> Result<Synced> {
    let d = theta.len();
    let outcomes: Vec<(Block, BlockOutcome)> = jobs
        .into_par_iter()
        .map(|(block, hess, stepper)| {
            let sub = oracle.restrict(&block.coords);
            reduced_block_phase(input, &block, &hess, &stepper, sub).map(|o| (block, o))
        })
        .collect::<Result<_>>()?;
    let mut out = Synced { steps: 0, cost: 0.0, recombinations: 0, plain: 0 };
    for (block, o) in outcomes {
        for (k, &c) in block.coords.iter().enumerate() {
            theta[c] = o.values[k];
        }
        oracle.absorb(&block.coords, &o.oracle, d);
        out.cost += o.cost;
        match o.phase {
            Some(phase) => {
                out.steps += phase.retained;
                out.recombinations += 1;
                trace.phases.push(phase);
            }
            None => {
                out.steps += 1;
                out.plain += 1;
            }
        }
    }
    Ok(out)
}

/// Block coordinate descent. With `use_caratheodory` each block runs a
/// reduced-measure phase after the full-measure step.
pub fn cabcd(
    model: &ModelSpec,
    data: &Dataset,
    config: &BcdConfig,
    plan: &PlanSource,
    use_caratheodory: bool,
) -> Result<Trace> {
    config.validate()?;
    model.validate()?;
    data.check_for(model)?;
    let d = data.n_features();
    let mut selector = Selector::new(plan, model, data, config.seed)?;
    let mut oracle = DirectionOracle::new(config.oracle)?;

    let mut rec = Recorder::new();
    let mut j = 0;
    let mut theta = initial_theta(&config.theta0, data)?;
    let mut eval = full_eval(model, &theta, data, j)?;
    rec.fpe += 1.0;
    rec.push_eval(j, &theta, &eval);

    while !config.stop(&eval, j, rec.fpe) {
        let blocks = selector.select(&eval.gradient)?;
        check_blocks(&blocks, d)?;

        let theta_prev = theta.clone();
        let mut steppers = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let stepper = selector.stepper(b, config.gamma);
            let g = DVector::from_iterator(b.len(), b.coords.iter().map(|&c| eval.gradient[c]));
            let mut sub = oracle.restrict(&b.coords);
            let step = stepper.step(&g, &mut sub, 1.0)?;
            oracle.absorb(&b.coords, &sub, d);
            for (k, &c) in b.coords.iter().enumerate() {
                theta[c] += step[k];
            }
            steppers.push(stepper);
        }
        j += 1;
        let eval_step = full_eval(model, &theta, data, j)?;
        rec.fpe += 1.0;
        rec.push_eval(j, &theta, &eval_step);
        if !use_caratheodory || config.stop(&eval_step, j, rec.fpe) {
            eval = eval_step;
            continue;
        }

        let mut jobs = Vec::with_capacity(blocks.len());
        for (b, stepper) in blocks.into_iter().zip(steppers) {
            let pick = |v: &DVector<f64>| DVector::from_iterator(b.len(), b.coords.iter().map(|&c| v[c]));
            let h = config.secant.secant(
                &pick(&eval_step.gradient),
                &pick(&eval.gradient),
                &pick(&theta),
                &pick(&theta_prev),
                config.zero_guard,
            );
            match h.expect("validated secant mode") {
                Ok(h) => jobs.push((b, h, stepper)),
                Err(Error::DegenerateStep { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if jobs.is_empty() {
            eval = eval_step;
            continue;
        }
        let scores = data.x() * &theta;
        let anchor = theta.clone();
        let input = PhaseInput {
            model,
            data,
            theta_anchor: &anchor,
            scores: &scores,
            eval_anchor: &eval_step,
            anchor_step: j,
            config,
        };
        let synced = run_block_phases(&input, jobs, &mut theta, &mut oracle, &mut rec.trace)?;
        if synced.recombinations > 0 {
            rec.trace.tau_events.push(j);
        }
        rec.recombinations += synced.recombinations;
        rec.trace.plain_steps += synced.plain;
        j += synced.steps;
        rec.fpe += synced.cost;

        eval = full_eval(model, &theta, data, j)?;
        rec.fpe += 1.0;
        rec.push_eval(j, &theta, &eval);
    }
    Ok(rec.trace)
}
