//! Random-scan Metropolis-within-Gibbs sampler.
//!
//! Each model variant partitions its parameters into blocks. Every sweep
//! visits all active blocks once, in a fresh uniformly random order, so no
//! fixed update schedule can bias the stationary distribution. Blocks with a
//! tractable full conditional (the two covariance structures, the time
//! residual variance, the item effect means, and both label vectors) are
//! drawn exactly; the remaining blocks take random-walk Metropolis steps
//! whose scales can adapt during burn-in and are frozen afterwards, keeping
//! the post-burn-in kernel a valid fixed Markov kernel.
//!
//! The conditional of every exactly-sampled block is exposed as a
//! [`DistSpec`]-returning function, so tests can compare the algebra against
//! brute-force normalization of prior times likelihood.

use rand::seq::SliceRandom;
use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::dist::{standard_normal_draw, DistSpec};
use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};
use crate::model::{
    deviance, response_ll_col, response_ll_row, response_log_mass, time_ll_col, time_ll_row,
    time_log_density, DataSet, GlobalParams, ItemParams, ModelSpec, ParameterState, PersonParams,
};
use crate::priors::{log_prior, sample_full_state, HyperConfig};
use crate::rng::RngStream;

/// One update block of the sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Person abilities (Metropolis, one step per person).
    Theta,
    /// Person speeds (Metropolis; time models only).
    Tau,
    /// Person preknowledge labels (exact Bernoulli draws).
    Xi,
    /// Item difficulties (Metropolis, one step per item).
    Beta,
    /// Item time intensities (Metropolis; time models only).
    Alpha,
    /// Item compromise labels (exact Bernoulli draws).
    Eta,
    /// Success advantage (Metropolis on the positive half line).
    Delta,
    /// Speed advantage (Metropolis on the positive half line).
    Gamma,
    /// Time residual variance (exact inverse gamma draw).
    Kappa,
    /// Preknowledge prevalence (Metropolis inside the unit interval).
    Pi1,
    /// Compromise prevalence (Metropolis inside the unit interval).
    Pi2,
    /// Item effect means (exact normal draw).
    Mu,
    /// Person effect covariance (exact draw).
    Sigma,
    /// Item effect covariance (exact draw).
    Omega,
}

pub const BLOCK_COUNT: usize = 14;

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Theta => "theta",
            Block::Tau => "tau",
            Block::Xi => "xi",
            Block::Beta => "beta",
            Block::Alpha => "alpha",
            Block::Eta => "eta",
            Block::Delta => "delta",
            Block::Gamma => "gamma",
            Block::Kappa => "kappa",
            Block::Pi1 => "pi1",
            Block::Pi2 => "pi2",
            Block::Mu => "mu",
            Block::Sigma => "sigma",
            Block::Omega => "omega",
        }
    }

    pub fn parse(s: &str) -> Result<Block> {
        ALL_BLOCKS
            .iter()
            .copied()
            .find(|b| b.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown sampler block '{s}'")))
    }

    fn index(self) -> usize {
        ALL_BLOCKS.iter().position(|b| *b == self).unwrap()
    }

    /// Blocks updated by Metropolis steps (the rest are exact draws).
    pub fn is_metropolis(self) -> bool {
        matches!(
            self,
            Block::Theta
                | Block::Tau
                | Block::Beta
                | Block::Alpha
                | Block::Delta
                | Block::Gamma
                | Block::Pi1
                | Block::Pi2
        )
    }

    /// The blocks a model variant updates. Time-side blocks exist only when
    /// times enter the likelihood, and a disabled advantage has no block.
    pub fn for_spec(spec: ModelSpec) -> Vec<Block> {
        ALL_BLOCKS
            .iter()
            .copied()
            .filter(|b| match b {
                Block::Tau | Block::Alpha | Block::Kappa => spec.uses_times(),
                Block::Delta => spec.response_advantage(),
                Block::Gamma => spec.time_advantage(),
                _ => true,
            })
            .collect()
    }
}

const ALL_BLOCKS: [Block; BLOCK_COUNT] = [
    Block::Theta,
    Block::Tau,
    Block::Xi,
    Block::Beta,
    Block::Alpha,
    Block::Eta,
    Block::Delta,
    Block::Gamma,
    Block::Kappa,
    Block::Pi1,
    Block::Pi2,
    Block::Mu,
    Block::Sigma,
    Block::Omega,
];

/// Random-walk standard deviations for the Metropolis blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub theta: f64,
    pub tau: f64,
    pub beta: f64,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub pi1: f64,
    pub pi2: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            theta: 1.0,
            tau: 1.0,
            beta: 1.0,
            alpha: 1.0,
            delta: 0.3,
            gamma: 0.3,
            pi1: 0.1,
            pi2: 0.1,
        }
    }
}

impl StepSizes {
    fn get(&self, block: Block) -> Option<f64> {
        match block {
            Block::Theta => Some(self.theta),
            Block::Tau => Some(self.tau),
            Block::Beta => Some(self.beta),
            Block::Alpha => Some(self.alpha),
            Block::Delta => Some(self.delta),
            Block::Gamma => Some(self.gamma),
            Block::Pi1 => Some(self.pi1),
            Block::Pi2 => Some(self.pi2),
            _ => None,
        }
    }

    fn get_mut(&mut self, block: Block) -> Option<&mut f64> {
        match block {
            Block::Theta => Some(&mut self.theta),
            Block::Tau => Some(&mut self.tau),
            Block::Beta => Some(&mut self.beta),
            Block::Alpha => Some(&mut self.alpha),
            Block::Delta => Some(&mut self.delta),
            Block::Gamma => Some(&mut self.gamma),
            Block::Pi1 => Some(&mut self.pi1),
            Block::Pi2 => Some(&mut self.pi2),
            _ => None,
        }
    }

    fn all_positive(&self) -> bool {
        [
            self.theta, self.tau, self.beta, self.alpha, self.delta, self.gamma, self.pi1,
            self.pi2,
        ]
        .iter()
        .all(|s| *s > 0.0 && s.is_finite())
    }
}

/// Run length and tuning knobs for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total sweeps, burn-in included.
    pub total_iters: usize,
    /// Sweeps discarded from the front of the chain.
    pub burn_in: usize,
    pub steps: StepSizes,
    /// Rescale Metropolis steps during burn-in to chase a healthy
    /// acceptance rate. Never touches the post-burn-in kernel.
    pub adapt_steps: bool,
    /// Blocks held at their initial values for the whole run.
    pub frozen: Vec<Block>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            total_iters: 3000,
            burn_in: 1000,
            steps: StepSizes::default(),
            adapt_steps: true,
            frozen: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 || self.burn_in >= self.total_iters {
            return Err(Error::Config(format!(
                "need burn_in < total_iters, got {} and {}",
                self.burn_in, self.total_iters
            )));
        }
        if !self.steps.all_positive() {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Proposal bookkeeping for one block update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockOutcome {
    pub accepted: u64,
    pub proposed: u64,
}

/// Retained draws of one chain, stored column by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub n_persons: usize,
    pub n_items: usize,
    pub n_draws: usize,
    /// Draw-major matrices: entry `t * n + i` is unit i at retained draw t.
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub xi: Vec<u8>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eta: Vec<u8>,
    pub globals: Vec<GlobalParams>,
}

impl ChainDraws {
    fn with_capacity(n_persons: usize, n_items: usize, n_draws: usize) -> ChainDraws {
        ChainDraws {
            n_persons,
            n_items,
            n_draws: 0,
            theta: Vec::with_capacity(n_draws * n_persons),
            tau: Vec::with_capacity(n_draws * n_persons),
            xi: Vec::with_capacity(n_draws * n_persons),
            beta: Vec::with_capacity(n_draws * n_items),
            alpha: Vec::with_capacity(n_draws * n_items),
            eta: Vec::with_capacity(n_draws * n_items),
            globals: Vec::with_capacity(n_draws),
        }
    }

    fn push_state(&mut self, state: &ParameterState) {
        for p in &state.persons {
            self.theta.push(p.theta);
            self.tau.push(p.tau);
            self.xi.push(p.xi as u8);
        }
        for item in &state.items {
            self.beta.push(item.beta);
            self.alpha.push(item.alpha);
            self.eta.push(item.eta as u8);
        }
        self.globals.push(state.globals);
        self.n_draws += 1;
    }

    /// Posterior probability that each person has preknowledge.
    pub fn person_flag_probs(&self) -> Vec<f64> {
        column_means_u8(&self.xi, self.n_draws, self.n_persons)
    }

    /// Posterior probability that each item is compromised.
    pub fn item_flag_probs(&self) -> Vec<f64> {
        column_means_u8(&self.eta, self.n_draws, self.n_items)
    }

    pub fn theta_means(&self) -> Vec<f64> {
        column_means(&self.theta, self.n_draws, self.n_persons)
    }

    pub fn beta_means(&self) -> Vec<f64> {
        column_means(&self.beta, self.n_draws, self.n_items)
    }

    /// Trace of one shared parameter across retained draws.
    pub fn global_trace(&self, component: usize) -> Vec<f64> {
        self.globals.iter().map(|g| g.component(component)).collect()
    }

    /// Componentwise posterior means of the shared parameters.
    pub fn global_means(&self) -> GlobalParams {
        let mut mean = GlobalParams::zeroed();
        let weight = 1.0 / self.n_draws as f64;
        for g in &self.globals {
            for k in 0..GlobalParams::N_COMPONENTS {
                mean.set_component(k, mean.component(k) + weight * g.component(k));
            }
        }
        mean
    }

    /// Plug-in state: posterior means for continuous parameters, majority
    /// vote for the labels.
    pub fn mean_state(&self) -> ParameterState {
        let theta = self.theta_means();
        let tau = column_means(&self.tau, self.n_draws, self.n_persons);
        let xi = self.person_flag_probs();
        let beta = self.beta_means();
        let alpha = column_means(&self.alpha, self.n_draws, self.n_items);
        let eta = self.item_flag_probs();
        let persons = (0..self.n_persons)
            .map(|i| PersonParams {
                theta: theta[i],
                tau: tau[i],
                xi: xi[i] > 0.5,
            })
            .collect();
        let items = (0..self.n_items)
            .map(|j| ItemParams {
                beta: beta[j],
                alpha: alpha[j],
                eta: eta[j] > 0.5,
            })
            .collect();
        ParameterState {
            persons,
            items,
            globals: self.global_means(),
        }
    }
}

fn column_means(values: &[f64], n_rows: usize, n_cols: usize) -> Vec<f64> {
    let mut means = vec![0.0; n_cols];
    for row in values.chunks_exact(n_cols) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let w = 1.0 / n_rows as f64;
    means.iter_mut().for_each(|m| *m *= w);
    means
}

fn column_means_u8(values: &[u8], n_rows: usize, n_cols: usize) -> Vec<f64> {
    let mut means = vec![0.0; n_cols];
    for row in values.chunks_exact(n_cols) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += *v as f64;
        }
    }
    let w = 1.0 / n_rows as f64;
    means.iter_mut().for_each(|m| *m *= w);
    means
}

/// Everything one chain produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub spec: ModelSpec,
    pub seed: u64,
    pub stream_id: u64,
    pub total_iters: usize,
    pub burn_in: usize,
    /// Deviance after every sweep, burn-in included.
    pub deviance: Vec<f64>,
    pub draws: ChainDraws,
    /// Post-burn-in acceptance rate per Metropolis block.
    pub acceptance: Vec<(Block, f64)>,
    /// Step sizes in force after burn-in adaptation.
    pub final_steps: StepSizes,
}

impl ChainOutput {
    /// Deviance over the retained part of the chain.
    pub fn retained_deviance(&self) -> &[f64] {
        &self.deviance[self.burn_in..]
    }
}

fn effective_delta(spec: ModelSpec, globals: &GlobalParams) -> f64 {
    if spec.response_advantage() {
        globals.delta
    } else {
        0.0
    }
}

fn effective_gamma(spec: ModelSpec, globals: &GlobalParams) -> f64 {
    if spec.time_advantage() {
        globals.gamma
    } else {
        0.0
    }
}

fn metropolis_accept(log_ratio: f64, rng: &mut RngStream) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn mh_update_thetas(
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let ParameterState {
        persons,
        items,
        globals,
    } = state;
    let delta = effective_delta(spec, globals);
    // Gaussian prior terms: full covariance when speed is in the model,
    // scalar variance otherwise.
    let (prec_aa, prec_ab) = if spec.uses_times() {
        let inv = globals.sigma.inverse();
        (inv.a, inv.b)
    } else {
        (1.0 / globals.sigma.a, 0.0)
    };
    let mut accepted = 0;
    for (i, person) in persons.iter_mut().enumerate() {
        let current = person.theta;
        let proposal = current + step * standard_normal_draw(rng);
        let mut log_ratio =
            response_ll_row(data, i, proposal, person.xi, items, delta)
                - response_ll_row(data, i, current, person.xi, items, delta);
        log_ratio += -0.5 * prec_aa * (proposal * proposal - current * current)
            - prec_ab * person.tau * (proposal - current);
        if metropolis_accept(log_ratio, rng) {
            person.theta = proposal;
            accepted += 1;
        }
    }
    BlockOutcome {
        accepted,
        proposed: persons.len() as u64,
    }
}

fn mh_update_taus(
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let ParameterState {
        persons,
        items,
        globals,
    } = state;
    let gamma = effective_gamma(spec, globals);
    let inv = globals.sigma.inverse();
    let mut accepted = 0;
    for (i, person) in persons.iter_mut().enumerate() {
        let current = person.tau;
        let proposal = current + step * standard_normal_draw(rng);
        let mut log_ratio = time_ll_row(data, i, proposal, person.xi, items, gamma, globals.kappa)
            - time_ll_row(data, i, current, person.xi, items, gamma, globals.kappa);
        log_ratio += -0.5 * inv.d * (proposal * proposal - current * current)
            - inv.b * person.theta * (proposal - current);
        if metropolis_accept(log_ratio, rng) {
            person.tau = proposal;
            accepted += 1;
        }
    }
    BlockOutcome {
        accepted,
        proposed: persons.len() as u64,
    }
}

fn mh_update_betas(
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let ParameterState {
        persons,
        items,
        globals,
    } = state;
    let delta = effective_delta(spec, globals);
    let (prec_aa, prec_ab) = if spec.uses_times() {
        let inv = globals.omega.inverse();
        (inv.a, inv.b)
    } else {
        (1.0 / globals.omega.a, 0.0)
    };
    let mut accepted = 0;
    for (j, item) in items.iter_mut().enumerate() {
        let current = item.beta;
        let proposal = current + step * standard_normal_draw(rng);
        let mut log_ratio = response_ll_col(data, j, proposal, item.eta, persons, delta)
            - response_ll_col(data, j, current, item.eta, persons, delta);
        let (c0, p0) = (current - globals.mu.x, proposal - globals.mu.x);
        log_ratio += -0.5 * prec_aa * (p0 * p0 - c0 * c0)
            - prec_ab * (item.alpha - globals.mu.y) * (p0 - c0);
        if metropolis_accept(log_ratio, rng) {
            item.beta = proposal;
            accepted += 1;
        }
    }
    BlockOutcome {
        accepted,
        proposed: items.len() as u64,
    }
}

fn mh_update_alphas(
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let ParameterState {
        persons,
        items,
        globals,
    } = state;
    let gamma = effective_gamma(spec, globals);
    let inv = globals.omega.inverse();
    let mut accepted = 0;
    for (j, item) in items.iter_mut().enumerate() {
        let current = item.alpha;
        let proposal = current + step * standard_normal_draw(rng);
        let mut log_ratio =
            time_ll_col(data, j, proposal, item.eta, persons, gamma, globals.kappa)
                - time_ll_col(data, j, current, item.eta, persons, gamma, globals.kappa);
        let (c0, p0) = (current - globals.mu.y, proposal - globals.mu.y);
        log_ratio += -0.5 * inv.d * (p0 * p0 - c0 * c0)
            - inv.b * (item.beta - globals.mu.x) * (p0 - c0);
        if metropolis_accept(log_ratio, rng) {
            item.alpha = proposal;
            accepted += 1;
        }
    }
    BlockOutcome {
        accepted,
        proposed: items.len() as u64,
    }
}

/// Which label vector an indicator operation works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    Person,
    Item,
}

/// Exact conditional flag probabilities for every person (or item), given
/// the rest of the state. Only cells where the other side is flagged can
/// distinguish the two labels, so the sum runs over those cells alone.
pub fn indicator_conditional_probs(
    kind: UnitKind,
    data: &DataSet,
    state: &ParameterState,
    spec: ModelSpec,
) -> Vec<f64> {
    let g = &state.globals;
    let delta = effective_delta(spec, g);
    let gamma = effective_gamma(spec, g);
    let use_times = spec.uses_times();
    match kind {
        UnitKind::Person => {
            let prior_logit = g.pi1.ln() - (-g.pi1).ln_1p();
            state
                .persons
                .iter()
                .enumerate()
                .map(|(i, person)| {
                    let mut d = prior_logit;
                    for (j, item) in state.items.iter().enumerate() {
                        if !item.eta {
                            continue;
                        }
                        let logit = person.theta - item.beta;
                        let y = data.response(i, j);
                        d += response_log_mass(y, logit + delta) - response_log_mass(y, logit);
                        if use_times && gamma != 0.0 {
                            if let Some(x) = data.log_time(i, j) {
                                let mean = item.alpha - person.tau;
                                d += time_log_density(x, mean - gamma, g.kappa)
                                    - time_log_density(x, mean, g.kappa);
                            }
                        }
                    }
                    crate::model::sigmoid(d)
                })
                .collect()
        }
        UnitKind::Item => {
            let prior_logit = g.pi2.ln() - (-g.pi2).ln_1p();
            state
                .items
                .iter()
                .enumerate()
                .map(|(j, item)| {
                    let mut d = prior_logit;
                    for (i, person) in state.persons.iter().enumerate() {
                        if !person.xi {
                            continue;
                        }
                        let logit = person.theta - item.beta;
                        let y = data.response(i, j);
                        d += response_log_mass(y, logit + delta) - response_log_mass(y, logit);
                        if use_times && gamma != 0.0 {
                            if let Some(x) = data.log_time(i, j) {
                                let mean = item.alpha - person.tau;
                                d += time_log_density(x, mean - gamma, g.kappa)
                                    - time_log_density(x, mean, g.kappa);
                            }
                        }
                    }
                    crate::model::sigmoid(d)
                })
                .collect()
        }
    }
}

/// Gibbs draw of one label vector from its exact conditional.
pub fn gibbs_update_indicators(
    kind: UnitKind,
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    rng: &mut RngStream,
) {
    let probs = indicator_conditional_probs(kind, data, state, spec);
    match kind {
        UnitKind::Person => {
            for (person, p) in state.persons.iter_mut().zip(probs) {
                person.xi = rng.random::<f64>() < p;
            }
        }
        UnitKind::Item => {
            for (item, p) in state.items.iter_mut().zip(probs) {
                item.eta = rng.random::<f64>() < p;
            }
        }
    }
}

fn mh_update_advantage(
    block: Block,
    state: &mut ParameterState,
    data: &DataSet,
    hyper: &HyperConfig,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let ParameterState {
        persons,
        items,
        globals,
    } = state;
    let (current, shape, rate) = match block {
        Block::Delta => (globals.delta, hyper.delta_shape, hyper.delta_rate),
        Block::Gamma => (globals.gamma, hyper.gamma_shape, hyper.gamma_rate),
        _ => unreachable!("not an advantage block"),
    };
    let proposal = current + step * standard_normal_draw(rng);
    let rejected = BlockOutcome {
        accepted: 0,
        proposed: 1,
    };
    if proposal <= 0.0 {
        return rejected;
    }
    // Only cells where both labels are set feel the advantage.
    let mut log_ratio = 0.0;
    for (i, person) in persons.iter().enumerate() {
        if !person.xi {
            continue;
        }
        for (j, item) in items.iter().enumerate() {
            if !item.eta {
                continue;
            }
            match block {
                Block::Delta => {
                    let logit = person.theta - item.beta;
                    let y = data.response(i, j);
                    log_ratio += response_log_mass(y, logit + proposal)
                        - response_log_mass(y, logit + current);
                }
                Block::Gamma => {
                    if let Some(x) = data.log_time(i, j) {
                        let mean = item.alpha - person.tau;
                        log_ratio += time_log_density(x, mean - proposal, globals.kappa)
                            - time_log_density(x, mean - current, globals.kappa);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    log_ratio += (shape - 1.0) * (proposal.ln() - current.ln()) - rate * (proposal - current);
    if metropolis_accept(log_ratio, rng) {
        match block {
            Block::Delta => globals.delta = proposal,
            Block::Gamma => globals.gamma = proposal,
            _ => unreachable!(),
        }
        BlockOutcome {
            accepted: 1,
            proposed: 1,
        }
    } else {
        rejected
    }
}

fn mh_update_prevalence(
    block: Block,
    state: &mut ParameterState,
    hyper: &HyperConfig,
    step: f64,
    rng: &mut RngStream,
) -> BlockOutcome {
    let (current, flagged, total) = match block {
        Block::Pi1 => (
            state.globals.pi1,
            state.persons.iter().filter(|p| p.xi).count(),
            state.persons.len(),
        ),
        Block::Pi2 => (
            state.globals.pi2,
            state.items.iter().filter(|i| i.eta).count(),
            state.items.len(),
        ),
        _ => unreachable!("not a prevalence block"),
    };
    let proposal = current + step * standard_normal_draw(rng);
    let rejected = BlockOutcome {
        accepted: 0,
        proposed: 1,
    };
    if proposal <= 0.0 || proposal >= 1.0 {
        return rejected;
    }
    // Binomial likelihood of the flags plus the beta prior.
    let k = flagged as f64;
    let rest = (total - flagged) as f64;
    let log_ratio = (k + hyper.prevalence_a - 1.0) * (proposal.ln() - current.ln())
        + (rest + hyper.prevalence_b - 1.0) * ((-proposal).ln_1p() - (-current).ln_1p());
    if metropolis_accept(log_ratio, rng) {
        match block {
            Block::Pi1 => state.globals.pi1 = proposal,
            Block::Pi2 => state.globals.pi2 = proposal,
            _ => unreachable!(),
        }
        BlockOutcome {
            accepted: 1,
            proposed: 1,
        }
    } else {
        rejected
    }
}

/// Conditional of the lone person variance in the response-only models.
pub fn scalar_sigma_conditional(persons: &[PersonParams], hyper: &HyperConfig) -> DistSpec {
    let (shape, scale) = match hyper.scalar_variance_prior() {
        DistSpec::InvGamma { shape, scale } => (shape, scale),
        _ => unreachable!(),
    };
    let sum_sq: f64 = persons.iter().map(|p| p.theta * p.theta).sum();
    DistSpec::InvGamma {
        shape: shape + 0.5 * persons.len() as f64,
        scale: scale + 0.5 * sum_sq,
    }
}

/// Conditional of the lone item variance in the response-only models.
pub fn scalar_omega_conditional(items: &[ItemParams], mu1: f64, hyper: &HyperConfig) -> DistSpec {
    let (shape, scale) = match hyper.scalar_variance_prior() {
        DistSpec::InvGamma { shape, scale } => (shape, scale),
        _ => unreachable!(),
    };
    let sum_sq: f64 = items.iter().map(|i| (i.beta - mu1) * (i.beta - mu1)).sum();
    DistSpec::InvGamma {
        shape: shape + 0.5 * items.len() as f64,
        scale: scale + 0.5 * sum_sq,
    }
}

/// Conditional of the person effect covariance in the time models.
pub fn sigma_conditional(persons: &[PersonParams], hyper: &HyperConfig) -> DistSpec {
    let mut scatter = Sym2::new(0.0, 0.0, 0.0);
    for p in persons {
        scatter = scatter.add(Vec2::new(p.theta, p.tau).outer());
    }
    DistSpec::InvWishart2 {
        df: hyper.wishart_df + persons.len() as f64,
        scale: hyper.wishart_scale.add(scatter),
    }
}

/// Conditional of the item effect covariance in the time models.
pub fn omega_conditional(items: &[ItemParams], mu: Vec2, hyper: &HyperConfig) -> DistSpec {
    let mut scatter = Sym2::new(0.0, 0.0, 0.0);
    for item in items {
        scatter = scatter.add(Vec2::new(item.beta, item.alpha).sub(mu).outer());
    }
    DistSpec::InvWishart2 {
        df: hyper.wishart_df + items.len() as f64,
        scale: hyper.wishart_scale.add(scatter),
    }
}

/// Conditional of the time residual variance. The sum of squares runs over
/// observed cells only, so masked times shrink the posterior back toward
/// the prior.
pub fn kappa_conditional(
    data: &DataSet,
    state: &ParameterState,
    spec: ModelSpec,
    hyper: &HyperConfig,
) -> DistSpec {
    let gamma = effective_gamma(spec, &state.globals);
    let mut n_obs = 0usize;
    let mut rss = 0.0;
    for (i, person) in state.persons.iter().enumerate() {
        for (j, item) in state.items.iter().enumerate() {
            if let Some(x) = data.log_time(i, j) {
                let speedup = if person.xi && item.eta { gamma } else { 0.0 };
                let r = x - (item.alpha - person.tau - speedup);
                rss += r * r;
                n_obs += 1;
            }
        }
    }
    DistSpec::InvGamma {
        shape: hyper.kappa_shape + 0.5 * n_obs as f64,
        scale: hyper.kappa_scale + 0.5 * rss,
    }
}

/// Conditional of the scalar item effect mean in the response-only models.
pub fn mu_scalar_conditional(items: &[ItemParams], omega11: f64, hyper: &HyperConfig) -> DistSpec {
    let n = items.len() as f64;
    let sum_beta: f64 = items.iter().map(|i| i.beta).sum();
    let precision = 1.0 / hyper.mu_var + n / omega11;
    let mean = (sum_beta / omega11 + hyper.mu_mean / hyper.mu_var) / precision;
    DistSpec::Normal {
        mean,
        sd: (1.0 / precision).sqrt(),
    }
}

/// Conditional of the bivariate item effect mean in the time models.
pub fn mu_vector_conditional(items: &[ItemParams], omega: Sym2, hyper: &HyperConfig) -> DistSpec {
    let n = items.len() as f64;
    let mut sum = Vec2::ZERO;
    for item in items {
        sum = sum.add(Vec2::new(item.beta, item.alpha));
    }
    let omega_inv = omega.inverse();
    let precision = omega_inv.scale(n).add(Sym2::scaled_identity(1.0 / hyper.mu_var));
    let cov = precision.inverse();
    let prior_pull = Vec2::new(hyper.mu_mean, hyper.mu_mean).scale(1.0 / hyper.mu_var);
    let mean = cov.mul_vec(omega_inv.mul_vec(sum).add(prior_pull));
    DistSpec::MvNormal2 { mean, cov }
}

/// Which variance-like block a Gibbs draw targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceTarget {
    Sigma,
    Omega,
    Kappa,
}

/// Exact draw of one variance block from its conditional.
pub fn gibbs_update_variance(
    target: VarianceTarget,
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    hyper: &HyperConfig,
    rng: &mut RngStream,
) -> Result<()> {
    match (target, spec.uses_times()) {
        (VarianceTarget::Sigma, false) => {
            let cond = scalar_sigma_conditional(&state.persons, hyper);
            state.globals.sigma.a = cond.sample(rng)?.scalar().unwrap();
        }
        (VarianceTarget::Sigma, true) => {
            let cond = sigma_conditional(&state.persons, hyper);
            state.globals.sigma = cond.sample(rng)?.matrix().unwrap();
        }
        (VarianceTarget::Omega, false) => {
            let cond = scalar_omega_conditional(&state.items, state.globals.mu.x, hyper);
            state.globals.omega.a = cond.sample(rng)?.scalar().unwrap();
        }
        (VarianceTarget::Omega, true) => {
            let cond = omega_conditional(&state.items, state.globals.mu, hyper);
            state.globals.omega = cond.sample(rng)?.matrix().unwrap();
        }
        (VarianceTarget::Kappa, true) => {
            let cond = kappa_conditional(data, state, spec, hyper);
            state.globals.kappa = cond.sample(rng)?.scalar().unwrap();
        }
        (VarianceTarget::Kappa, false) => {
            return Err(Error::Config(
                "kappa is not a parameter of the response-only models".into(),
            ));
        }
    }
    Ok(())
}

/// Exact draw of the item effect mean from its conditional.
pub fn gibbs_update_mean(
    state: &mut ParameterState,
    spec: ModelSpec,
    hyper: &HyperConfig,
    rng: &mut RngStream,
) -> Result<()> {
    if spec.uses_times() {
        let cond = mu_vector_conditional(&state.items, state.globals.omega, hyper);
        state.globals.mu = cond.sample(rng)?.vector().unwrap();
    } else {
        let cond = mu_scalar_conditional(&state.items, state.globals.omega.a, hyper);
        state.globals.mu.x = cond.sample(rng)?.scalar().unwrap();
    }
    Ok(())
}

/// Apply one block update to the state, returning proposal bookkeeping for
/// Metropolis blocks (exact draws report zero proposals).
pub fn update_block(
    block: Block,
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    hyper: &HyperConfig,
    steps: &StepSizes,
    rng: &mut RngStream,
) -> Result<BlockOutcome> {
    let outcome = match block {
        Block::Theta => mh_update_thetas(state, data, spec, steps.theta, rng),
        Block::Tau => mh_update_taus(state, data, spec, steps.tau, rng),
        Block::Beta => mh_update_betas(state, data, spec, steps.beta, rng),
        Block::Alpha => mh_update_alphas(state, data, spec, steps.alpha, rng),
        Block::Xi => {
            gibbs_update_indicators(UnitKind::Person, state, data, spec, rng);
            BlockOutcome::default()
        }
        Block::Eta => {
            gibbs_update_indicators(UnitKind::Item, state, data, spec, rng);
            BlockOutcome::default()
        }
        Block::Delta | Block::Gamma => {
            mh_update_advantage(block, state, data, hyper, steps.get(block).unwrap(), rng)
        }
        Block::Pi1 | Block::Pi2 => {
            mh_update_prevalence(block, state, hyper, steps.get(block).unwrap(), rng)
        }
        Block::Kappa => {
            gibbs_update_variance(VarianceTarget::Kappa, state, data, spec, hyper, rng)?;
            BlockOutcome::default()
        }
        Block::Sigma => {
            gibbs_update_variance(VarianceTarget::Sigma, state, data, spec, hyper, rng)?;
            BlockOutcome::default()
        }
        Block::Omega => {
            gibbs_update_variance(VarianceTarget::Omega, state, data, spec, hyper, rng)?;
            BlockOutcome::default()
        }
        Block::Mu => {
            gibbs_update_mean(state, spec, hyper, rng)?;
            BlockOutcome::default()
        }
    };
    Ok(outcome)
}

/// One random-scan sweep: every active block once, in fresh random order.
pub fn random_scan_sweep(
    active: &[Block],
    state: &mut ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    hyper: &HyperConfig,
    steps: &StepSizes,
    rng: &mut RngStream,
) -> Result<Vec<(Block, BlockOutcome)>> {
    let mut order = active.to_vec();
    order.shuffle(rng);
    let mut outcomes = Vec::with_capacity(order.len());
    for block in order {
        let outcome = update_block(block, state, data, spec, hyper, steps, rng)?;
        outcomes.push((block, outcome));
    }
    Ok(outcomes)
}

fn validate_init(
    state: &ParameterState,
    data: &DataSet,
    spec: ModelSpec,
    hyper: &HyperConfig,
) -> Result<()> {
    if state.persons.len() != data.n_persons() || state.items.len() != data.n_items() {
        return Err(Error::Config(format!(
            "initial state sized {}x{} does not match data sized {}x{}",
            state.persons.len(),
            state.items.len(),
            data.n_persons(),
            data.n_items()
        )));
    }
    let lp = log_prior(&state.persons, &state.items, &state.globals, spec, hyper);
    if !lp.is_finite() {
        return Err(Error::Config(
            "initial state lies outside the prior support".into(),
        ));
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct Tally {
    accepted: [u64; BLOCK_COUNT],
    proposed: [u64; BLOCK_COUNT],
}

impl Tally {
    fn add(&mut self, block: Block, outcome: BlockOutcome) {
        self.accepted[block.index()] += outcome.accepted;
        self.proposed[block.index()] += outcome.proposed;
    }

    fn rate(&self, block: Block) -> Option<f64> {
        let p = self.proposed[block.index()];
        (p > 0).then(|| self.accepted[block.index()] as f64 / p as f64)
    }
}

const ADAPT_WINDOW: usize = 50;
const ADAPT_FACTOR: f64 = 1.25;
const TARGET_LOW: f64 = 0.25;
const TARGET_HIGH: f64 = 0.5;

/// Run one chain and collect its retained draws.
///
/// With `init` absent the chain starts from a fresh prior draw; passing a
/// state warm-starts it (for example from another model's fit, or from the
/// generating truth in simulation work). Frozen blocks keep their initial
/// values throughout, which turns the chain into a conditional sampler.
pub fn run_chain(
    data: &DataSet,
    spec: ModelSpec,
    config: &SamplerConfig,
    hyper: &HyperConfig,
    init: Option<ParameterState>,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    hyper.validate()?;
    config.validate()?;
    if spec.uses_times() && !data.has_times() {
        return Err(Error::Config(format!(
            "model {} needs response times but the data set has none",
            spec.name()
        )));
    }
    let available = Block::for_spec(spec);
    for frozen in &config.frozen {
        if !available.contains(frozen) {
            return Err(Error::Config(format!(
                "cannot freeze block '{}': model {} does not update it",
                frozen.name(),
                spec.name()
            )));
        }
    }
    let active: Vec<Block> = available
        .into_iter()
        .filter(|b| !config.frozen.contains(b))
        .collect();

    let mut state = match init {
        Some(s) => {
            validate_init(&s, data, spec, hyper)?;
            s
        }
        None => sample_full_state(hyper, data.n_persons(), data.n_items(), spec, rng)?,
    };

    let mut steps = config.steps;
    let mut window = Tally::default();
    let mut post_burn = Tally::default();
    let retained = config.total_iters - config.burn_in;
    let mut draws = ChainDraws::with_capacity(data.n_persons(), data.n_items(), retained);
    let mut deviance_trace = Vec::with_capacity(config.total_iters);

    for t in 0..config.total_iters {
        let outcomes = random_scan_sweep(&active, &mut state, data, spec, hyper, &steps, rng)?;
        let in_burn = t < config.burn_in;
        for (block, outcome) in outcomes {
            if in_burn {
                window.add(block, outcome);
            } else {
                post_burn.add(block, outcome);
            }
        }
        deviance_trace.push(deviance(
            data,
            &state.persons,
            &state.items,
            &state.globals,
            spec,
        )?);
        if in_burn {
            if config.adapt_steps && (t + 1) % ADAPT_WINDOW == 0 {
                for block in &active {
                    if let (Some(rate), Some(step)) = (window.rate(*block), steps.get_mut(*block)) {
                        if rate > TARGET_HIGH {
                            *step = (*step * ADAPT_FACTOR).min(20.0);
                        } else if rate < TARGET_LOW {
                            *step = (*step / ADAPT_FACTOR).max(1e-3);
                        }
                    }
                }
                window = Tally::default();
            }
        } else {
            draws.push_state(&state);
        }
    }

    let acceptance = active
        .iter()
        .filter(|b| b.is_metropolis())
        .filter_map(|b| post_burn.rate(*b).map(|r| (*b, r)))
        .collect();

    Ok(ChainOutput {
        spec,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        total_iters: config.total_iters,
        burn_in: config.burn_in,
        deviance: deviance_trace,
        draws,
        acceptance,
        final_steps: steps,
    })
}

/// Run several chains of the same configuration in parallel, one spawned
/// substream per chain. Results come back in chain order regardless of
/// scheduling, so a fixed root stream yields identical output every run.
pub fn run_chains(
    data: &DataSet,
    spec: ModelSpec,
    config: &SamplerConfig,
    hyper: &HyperConfig,
    init: Option<&ParameterState>,
    root: &RngStream,
    n_chains: usize,
) -> Result<Vec<ChainOutput>> {
    use rayon::prelude::*;
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    (0..n_chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = root.spawn(k as u64);
            run_chain(data, spec, config, hyper, init.cloned(), &mut rng)
        })
        .collect()
}
