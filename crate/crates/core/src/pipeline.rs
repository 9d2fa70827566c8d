//! End-to-end fitting: run parallel chains, gate them on convergence, pool
//! the survivors, and assemble the analysis report.
//!
//! Convergence policy: every chain is diagnosed with the split-chain scale
//! reduction of its deviance trace and reported either way. Chains that
//! fail the check are excluded from pooled inference. If no chain passes,
//! the report still carries probabilities (pooled over everything, for
//! inspection) but is marked non-converged and omits decision lists unless
//! the caller forces them.

use crate::decision::{bayes_flags, control_fdr, control_fnr, local_error_rates};
use crate::diagnostics::{dic, split_rhat, DicSummary};
use crate::error::{Error, Result};
use crate::io::report::{
    AnalysisReport, ChainDiagnostic, DecisionSummary, GlobalSummary, RuleKind,
};
use crate::io::report::quantile;
use crate::model::{
    deviance, DataSet, GlobalParams, ItemParams, ModelSpec, ParameterState, PersonParams,
    UnitSide,
};
use crate::priors::HyperConfig;
use crate::rng::RngStream;
use crate::sampler::{run_chains, ChainOutput, SamplerConfig};

/// Everything a fit needs besides the data.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub spec: ModelSpec,
    pub n_chains: usize,
    pub sampler: SamplerConfig,
    pub hyper: HyperConfig,
    /// Error budgets: persons get the discovery-rate rule, items the
    /// nondiscovery-rate rule, at each level.
    pub levels: Vec<f64>,
    /// Optional fixed cutoff from misclassification costs; applied to both
    /// sides when present.
    pub cost_threshold: Option<f64>,
    pub seed: u64,
    /// Split-chain scale reduction at or below this counts as converged.
    pub rhat_threshold: f64,
    /// Emit decisions even when no chain converged.
    pub force: bool,
    /// Also fit the matching no-advantage variant for a DIC comparison.
    pub with_null: bool,
}

impl FitOptions {
    pub fn new(spec: ModelSpec) -> FitOptions {
        FitOptions {
            spec,
            n_chains: 2,
            sampler: SamplerConfig::default(),
            hyper: HyperConfig::default(),
            levels: vec![0.05],
            cost_threshold: None,
            seed: 1,
            rhat_threshold: 1.1,
            force: false,
            with_null: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("a fit needs at least one chain".into()));
        }
        self.sampler.validate()?;
        self.hyper.validate()?;
        if self.sampler.total_iters - self.sampler.burn_in < 4 {
            return Err(Error::Config(
                "need at least four retained draws to diagnose convergence".into(),
            ));
        }
        for &level in &self.levels {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::Config(format!(
                    "error budgets must lie strictly inside (0, 1), got {level}"
                )));
            }
        }
        if let Some(c) = self.cost_threshold {
            if !(0.0..=1.0).contains(&c) || c.is_nan() {
                return Err(Error::Config(format!(
                    "cost cutoff must lie in [0, 1], got {c}"
                )));
            }
        }
        if !(self.rhat_threshold.is_finite() && self.rhat_threshold > 0.0) {
            return Err(Error::Config(format!(
                "convergence threshold must be positive and finite, got {}",
                self.rhat_threshold
            )));
        }
        Ok(())
    }
}

/// A fit's full output: the report plus the raw chains behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub report: AnalysisReport,
    pub chains: Vec<ChainOutput>,
    /// Chains of the no-advantage reference fit, empty when none was run.
    pub null_chains: Vec<ChainOutput>,
}

/// Summaries over a set of pooled chains, with exact concatenation
/// semantics: every statistic equals what a single chain holding all the
/// retained draws back to back would produce.
pub struct Pool {
    pub person_probs: Vec<f64>,
    pub item_probs: Vec<f64>,
    pub mean_state: ParameterState,
    /// Retained deviances of the pooled chains, concatenated.
    pub deviance: Vec<f64>,
    pub pooled_draws: usize,
}

pub fn pool_chains(chains: &[&ChainOutput]) -> Pool {
    let n = chains[0].draws.n_persons;
    let j = chains[0].draws.n_items;
    let total: usize = chains.iter().map(|c| c.draws.n_draws).sum();
    let weight = 1.0 / total as f64;

    let mut theta_sum = vec![0.0; n];
    let mut tau_sum = vec![0.0; n];
    let mut xi_sum = vec![0.0; n];
    let mut beta_sum = vec![0.0; j];
    let mut alpha_sum = vec![0.0; j];
    let mut eta_sum = vec![0.0; j];
    // Accumulated as weight * value, matching the single-chain summary
    // arithmetic exactly so pooling one chain is bitwise equivalent.
    let mut globals = GlobalParams::zeroed();
    let mut pooled_deviance = Vec::new();

    for chain in chains {
        let d = &chain.draws;
        for draw in d.theta.chunks_exact(n) {
            for (s, v) in theta_sum.iter_mut().zip(draw) {
                *s += v;
            }
        }
        for draw in d.tau.chunks_exact(n) {
            for (s, v) in tau_sum.iter_mut().zip(draw) {
                *s += v;
            }
        }
        for draw in d.xi.chunks_exact(n) {
            for (s, v) in xi_sum.iter_mut().zip(draw) {
                *s += *v as f64;
            }
        }
        for draw in d.beta.chunks_exact(j) {
            for (s, v) in beta_sum.iter_mut().zip(draw) {
                *s += v;
            }
        }
        for draw in d.alpha.chunks_exact(j) {
            for (s, v) in alpha_sum.iter_mut().zip(draw) {
                *s += v;
            }
        }
        for draw in d.eta.chunks_exact(j) {
            for (s, v) in eta_sum.iter_mut().zip(draw) {
                *s += *v as f64;
            }
        }
        for g in &d.globals {
            for k in 0..GlobalParams::N_COMPONENTS {
                globals.set_component(k, globals.component(k) + weight * g.component(k));
            }
        }
        pooled_deviance.extend_from_slice(chain.retained_deviance());
    }

    let person_probs: Vec<f64> = xi_sum.iter().map(|s| s * weight).collect();
    let item_probs: Vec<f64> = eta_sum.iter().map(|s| s * weight).collect();
    let persons: Vec<PersonParams> = (0..n)
        .map(|i| PersonParams {
            theta: theta_sum[i] * weight,
            tau: tau_sum[i] * weight,
            xi: person_probs[i] > 0.5,
        })
        .collect();
    let items: Vec<ItemParams> = (0..j)
        .map(|m| ItemParams {
            beta: beta_sum[m] * weight,
            alpha: alpha_sum[m] * weight,
            eta: item_probs[m] > 0.5,
        })
        .collect();

    Pool {
        person_probs,
        item_probs,
        mean_state: ParameterState {
            persons,
            items,
            globals,
        },
        deviance: pooled_deviance,
        pooled_draws: total,
    }
}

/// Per-chain convergence rows, and the indices of the chains to pool: the
/// converged ones, or all of them when none passed.
fn gate_chains(
    chains: &[ChainOutput],
    rhat_threshold: f64,
) -> Result<(Vec<ChainDiagnostic>, Vec<usize>)> {
    let mut diagnostics = Vec::with_capacity(chains.len());
    let mut pooled = Vec::new();
    for (k, chain) in chains.iter().enumerate() {
        let retained = chain.retained_deviance();
        let rhat = split_rhat(retained)?;
        let converged = rhat <= rhat_threshold;
        if converged {
            pooled.push(k);
        }
        diagnostics.push(ChainDiagnostic {
            chain: k,
            split_rhat: rhat,
            converged,
            mean_deviance: retained.iter().sum::<f64>() / retained.len() as f64,
            acceptance: chain
                .acceptance
                .iter()
                .map(|(b, r)| (b.name().to_string(), *r))
                .collect(),
        });
    }
    if pooled.is_empty() {
        pooled = (0..chains.len()).collect();
    }
    Ok((diagnostics, pooled))
}

pub fn pooled_dic(
    data: &DataSet,
    spec: ModelSpec,
    pool: &Pool,
) -> Result<DicSummary> {
    let state = &pool.mean_state;
    let plug_in = deviance(data, &state.persons, &state.items, &state.globals, spec)?;
    dic(&pool.deviance, plug_in)
}

/// The budgeted rule for one side at one level. Persons get the discovery
/// budget, which flags as many units as the false-discovery allowance
/// permits; items get the nondiscovery budget, which flags as few as the
/// miss allowance permits.
pub fn budget_decision(side: UnitSide, probs: &[f64], level: f64) -> Result<DecisionSummary> {
    let (rule, decision) = match side {
        UnitSide::Person => (RuleKind::Discovery, control_fdr(probs, level)?),
        UnitSide::Item => (RuleKind::Nondiscovery, control_fnr(probs, level)?),
    };
    Ok(DecisionSummary {
        side,
        rule,
        level,
        zeta: decision.zeta,
        n_flagged: decision.n_flagged,
        fdr: decision.fdr,
        fnr: decision.fnr,
        flagged: flagged_ids(&decision.flags),
    })
}

/// The fixed cost-ratio rule: flag every unit at or above the cutoff.
pub fn cost_decision(side: UnitSide, probs: &[f64], cutoff: f64) -> Result<DecisionSummary> {
    let flags = bayes_flags(probs, cutoff)?;
    let (fdr, fnr) = local_error_rates(probs, &flags)?;
    Ok(DecisionSummary {
        side,
        rule: RuleKind::CostRatio,
        level: cutoff,
        zeta: cutoff,
        n_flagged: flags.iter().filter(|f| **f).count(),
        fdr,
        fnr,
        flagged: flagged_ids(&flags),
    })
}

fn decision_rows(
    pool: &Pool,
    levels: &[f64],
    cost_threshold: Option<f64>,
) -> Result<Vec<DecisionSummary>> {
    let sides = [
        (UnitSide::Person, &pool.person_probs),
        (UnitSide::Item, &pool.item_probs),
    ];
    let mut rows = Vec::new();
    for &level in levels {
        for (side, probs) in sides {
            rows.push(budget_decision(side, probs, level)?);
        }
    }
    if let Some(cutoff) = cost_threshold {
        for (side, probs) in sides {
            rows.push(cost_decision(side, probs, cutoff)?);
        }
    }
    Ok(rows)
}

fn flagged_ids(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i + 1))
        .collect()
}

fn global_summaries(chains: &[&ChainOutput], spec: ModelSpec) -> Result<Vec<GlobalSummary>> {
    let mut out = Vec::new();
    for k in spec.active_global_components() {
        let mut trace = Vec::new();
        for chain in chains {
            trace.extend(chain.draws.global_trace(k));
        }
        let mean = trace.iter().sum::<f64>() / trace.len() as f64;
        out.push(GlobalSummary {
            name: GlobalParams::COMPONENT_NAMES[k].to_string(),
            mean,
            lower: quantile(&trace, 0.025)?,
            upper: quantile(&trace, 0.975)?,
        });
    }
    Ok(out)
}

/// Fit a model and build its report.
///
/// The main fit draws it randomness from stream 0 of the seed, the optional
/// no-advantage reference fit from stream 1, so the pair is reproducible as
/// a unit.
pub fn fit_data(data: &DataSet, options: &FitOptions) -> Result<FitOutcome> {
    options.validate()?;
    let root = RngStream::new(options.seed, 0);
    let chains = run_chains(
        data,
        options.spec,
        &options.sampler,
        &options.hyper,
        None,
        &root,
        options.n_chains,
    )?;

    let (diagnostics, pooled_indices) = gate_chains(&chains, options.rhat_threshold)?;
    let n_converged = diagnostics.iter().filter(|d| d.converged).count();
    let converged = n_converged > 0;
    let pooled_refs: Vec<&ChainOutput> = pooled_indices.iter().map(|&k| &chains[k]).collect();
    let pool = pool_chains(&pooled_refs);

    let decisions = if converged || options.force {
        decision_rows(&pool, &options.levels, options.cost_threshold)?
    } else {
        Vec::new()
    };

    let null_spec = options.spec.null_variant();
    let mut null_chains = Vec::new();
    let mut null_dic = None;
    let mut null_model = None;
    if options.with_null && null_spec != options.spec {
        let null_root = RngStream::new(options.seed, 1);
        null_chains = run_chains(
            data,
            null_spec,
            &options.sampler,
            &options.hyper,
            None,
            &null_root,
            options.n_chains,
        )?;
        let (_, null_pooled) = gate_chains(&null_chains, options.rhat_threshold)?;
        let null_refs: Vec<&ChainOutput> = null_pooled.iter().map(|&k| &null_chains[k]).collect();
        let null_pool = pool_chains(&null_refs);
        null_dic = Some(pooled_dic(data, null_spec, &null_pool)?);
        null_model = Some(null_spec.name().to_string());
    }

    let report = AnalysisReport {
        model: options.spec.name().to_string(),
        n_persons: data.n_persons(),
        n_items: data.n_items(),
        seed: options.seed,
        n_chains: chains.len(),
        n_converged,
        converged,
        pooled_draws: pool.pooled_draws,
        globals: global_summaries(&pooled_refs, options.spec)?,
        chains: diagnostics,
        person_probs: pool.person_probs.clone(),
        item_probs: pool.item_probs.clone(),
        decisions,
        dic: Some(pooled_dic(data, options.spec, &pool)?),
        null_model,
        null_dic,
    };

    Ok(FitOutcome {
        report,
        chains,
        null_chains,
    })
}
