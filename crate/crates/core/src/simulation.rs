//! Synthetic data with known ground truth, and the replication study that
//! scores the whole pipeline against it.
//!
//! A [`SimSetting`] fixes the test dimensions, the fraction of persons with
//! preknowledge, and the fraction of compromised items; label counts are
//! exact (a 10% setting on 2000 persons flags exactly 200), with the
//! flagged subsets drawn uniformly at random. Responses and log times are
//! then generated from the full time model. [`run_study`] repeats
//! generate-fit-score over independent replications and keeps every
//! per-replication metric: parameter bias, label ranking (AUC), realized
//! error proportions of the decision rules, and fit comparisons against the
//! matching no-advantage variants.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{control_fdr, control_fnr};
use crate::diagnostics::{auc, dic, split_rhat, DicSummary};
use crate::dist::{mvn2_draw, normal_draw};
use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};
use crate::model::{
    deviance, sigmoid, DataSet, GlobalParams, ItemParams, ModelSpec, ParameterState, PersonParams,
    UnitSide,
};
use crate::priors::HyperConfig;
use crate::rng::RngStream;
use crate::sampler::{run_chain, SamplerConfig};

/// Shared parameter values used to generate data when the caller does not
/// supply their own: a solid advantage on both the response and the time
/// side, moderately correlated person and item effects, and items that are
/// somewhat easy and quick.
pub fn default_globals() -> GlobalParams {
    GlobalParams {
        delta: 1.2,
        gamma: 1.2,
        kappa: 0.801,
        pi1: 0.1,
        pi2: 0.25,
        mu: Vec2::new(-0.914, -0.568),
        sigma: Sym2::new(0.287, 0.123, 0.270),
        omega: Sym2::new(0.756, 0.104, 0.397),
    }
}

/// One simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub name: String,
    pub n_persons: usize,
    pub n_items: usize,
    /// Generating values; `pi1` and `pi2` double as the exact label
    /// proportions.
    pub globals: GlobalParams,
}

impl SimSetting {
    /// A scenario with the default generating values but custom shape and
    /// contamination.
    pub fn custom(name: &str, n_persons: usize, n_items: usize, pi1: f64, pi2: f64) -> SimSetting {
        let mut globals = default_globals();
        globals.pi1 = pi1;
        globals.pi2 = pi2;
        SimSetting {
            name: name.to_string(),
            n_persons,
            n_items,
            globals,
        }
    }

    /// The four benchmark scenarios: low/high contamination at two test
    /// sizes, plus a small `desk` scenario for quick runs.
    pub fn preset(name: &str) -> Result<SimSetting> {
        match name.to_ascii_lowercase().as_str() {
            "s1" => Ok(SimSetting::custom("s1", 2000, 200, 0.10, 0.25)),
            "s2" => Ok(SimSetting::custom("s2", 2000, 200, 0.20, 0.50)),
            "s3" => Ok(SimSetting::custom("s3", 4000, 400, 0.10, 0.25)),
            "s4" => Ok(SimSetting::custom("s4", 4000, 400, 0.20, 0.50)),
            "desk" => Ok(SimSetting::custom("desk", 500, 100, 0.20, 0.50)),
            other => Err(Error::Config(format!(
                "unknown simulation preset '{other}', expected s1, s2, s3, s4, or desk"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_persons < 2 || self.n_items < 2 {
            return Err(Error::Config(
                "simulation needs at least two persons and two items".into(),
            ));
        }
        let g = &self.globals;
        if !(g.pi1 > 0.0 && g.pi1 < 1.0 && g.pi2 > 0.0 && g.pi2 < 1.0) {
            return Err(Error::Config(format!(
                "label proportions must lie strictly inside (0, 1), got {} and {}",
                g.pi1, g.pi2
            )));
        }
        if !(g.delta > 0.0 && g.gamma > 0.0 && g.kappa > 0.0) {
            return Err(Error::Config(
                "generating advantages and variance must be positive".into(),
            ));
        }
        if !g.sigma.is_spd() || !g.omega.is_spd() {
            return Err(Error::Config(
                "generating covariance matrices must be SPD".into(),
            ));
        }
        Ok(())
    }
}

/// Exactly round(n * proportion) flags, placed uniformly at random.
fn exact_count_flags(n: usize, proportion: f64, rng: &mut RngStream) -> Vec<bool> {
    let count = ((n as f64 * proportion).round() as usize).min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let mut flags = vec![false; n];
    for &i in &indices[..count] {
        flags[i] = true;
    }
    flags
}

/// Generate one data set from the full time model, returning the data and
/// the complete generating state (the ground truth).
pub fn generate_dataset(
    setting: &SimSetting,
    rng: &mut RngStream,
) -> Result<(DataSet, ParameterState)> {
    setting.validate()?;
    let g = setting.globals;
    let xi = exact_count_flags(setting.n_persons, g.pi1, rng);
    let eta = exact_count_flags(setting.n_items, g.pi2, rng);
    let persons: Vec<PersonParams> = xi
        .iter()
        .map(|&flag| {
            let effects = mvn2_draw(Vec2::ZERO, g.sigma, rng);
            PersonParams {
                theta: effects.x,
                tau: effects.y,
                xi: flag,
            }
        })
        .collect();
    let items: Vec<ItemParams> = eta
        .iter()
        .map(|&flag| {
            let effects = mvn2_draw(g.mu, g.omega, rng);
            ItemParams {
                beta: effects.x,
                alpha: effects.y,
                eta: flag,
            }
        })
        .collect();

    let mut responses = Vec::with_capacity(setting.n_persons * setting.n_items);
    let mut log_times = Vec::with_capacity(setting.n_persons * setting.n_items);
    let time_sd = g.kappa.sqrt();
    for person in &persons {
        for item in &items {
            let cheats = person.xi && item.eta;
            let logit = person.theta - item.beta + if cheats { g.delta } else { 0.0 };
            responses.push((rng.random::<f64>() < sigmoid(logit)) as u8);
            let mean = item.alpha - person.tau - if cheats { g.gamma } else { 0.0 };
            log_times.push(normal_draw(mean, time_sd, rng));
        }
    }
    let data = DataSet::new(setting.n_persons, setting.n_items, responses, Some(log_times))?;
    let truth = ParameterState {
        persons,
        items,
        globals: g,
    };
    Ok((data, truth))
}

/// Realized false discovery and false nondiscovery proportions of a flag
/// set against known labels. Empty groups contribute zero.
pub fn realized_proportions(flags: &[bool], truth: &[bool]) -> (f64, f64) {
    let mut false_flags = 0usize;
    let mut missed = 0usize;
    let mut n_flagged = 0usize;
    for (&flag, &guilty) in flags.iter().zip(truth) {
        if flag {
            n_flagged += 1;
            if !guilty {
                false_flags += 1;
            }
        } else if guilty {
            missed += 1;
        }
    }
    let n_unflagged = flags.len() - n_flagged;
    (
        false_flags as f64 / n_flagged.max(1) as f64,
        missed as f64 / n_unflagged.max(1) as f64,
    )
}

/// Where a chain starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarmStart {
    /// Fresh draw from the prior.
    Prior,
    /// The generating state itself, skipping the search for the posterior
    /// region and isolating mixing behavior around it.
    Truth,
}

/// Configuration of a replication study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_reps: usize,
    pub sampler: SamplerConfig,
    pub hyper: HyperConfig,
    /// Error budgets at which both decision rules are evaluated.
    pub levels: Vec<f64>,
    pub warm_start: WarmStart,
    /// Also fit the matching no-advantage variants for DIC comparisons.
    pub fit_nulls: bool,
    /// Split-chain scale reduction below this counts as converged.
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_reps: 5,
            sampler: SamplerConfig::default(),
            hyper: HyperConfig::default(),
            levels: vec![0.05],
            warm_start: WarmStart::Prior,
            fit_nulls: true,
            rhat_threshold: 1.1,
            seed: 1,
        }
    }
}

/// Which rule produced a decision row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlRule {
    /// Budget on the false discovery rate; flags as much as allowed.
    Discovery,
    /// Budget on the false nondiscovery rate; flags as little as allowed.
    Nondiscovery,
}

/// One decision rule evaluated against the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionEval {
    pub side: UnitSide,
    pub rule: ControlRule,
    pub level: f64,
    pub zeta: f64,
    pub n_flagged: usize,
    /// Realized false discovery proportion.
    pub fdp: f64,
    /// Realized false nondiscovery proportion.
    pub fnp: f64,
}

/// Everything recorded about one model fit within a replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub spec: ModelSpec,
    pub split_rhat: f64,
    pub converged: bool,
    pub dic: DicSummary,
    /// Ranking quality of the person flag probabilities against the truth.
    pub auc_person: f64,
    pub auc_item: f64,
    /// Posterior mean minus generating value, for each shared parameter the
    /// variant actually has.
    pub bias: Vec<(String, f64)>,
    pub decisions: Vec<DecisionEval>,
}

/// One replication: the generating truth's summary plus every model fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub setting: String,
    pub rep: usize,
    pub n_true_flagged_persons: usize,
    pub n_true_flagged_items: usize,
    /// AUC of the raw total score, the no-model baseline ranking.
    pub baseline_auc_person: f64,
    pub models: Vec<ModelOutcome>,
}

/// All replications of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub reps: Vec<RepOutcome>,
}

fn fit_one_model(
    spec: ModelSpec,
    data: &DataSet,
    truth: &ParameterState,
    config: &StudyConfig,
    rng: &mut RngStream,
) -> Result<ModelOutcome> {
    let init = match config.warm_start {
        WarmStart::Prior => None,
        WarmStart::Truth => Some(truth.clone()),
    };
    let chain = run_chain(data, spec, &config.sampler, &config.hyper, init, rng)?;
    let rhat = split_rhat(chain.retained_deviance())?;

    let person_probs = chain.draws.person_flag_probs();
    let item_probs = chain.draws.item_flag_probs();
    let true_xi: Vec<bool> = truth.persons.iter().map(|p| p.xi).collect();
    let true_eta: Vec<bool> = truth.items.iter().map(|i| i.eta).collect();

    let mean_state = chain.draws.mean_state();
    let plug_in = deviance(data, &mean_state.persons, &mean_state.items, &mean_state.globals, spec)?;
    let dic_summary = dic(chain.retained_deviance(), plug_in)?;

    let posterior_globals = chain.draws.global_means();
    let bias = spec
        .active_global_components()
        .into_iter()
        .map(|k| {
            (
                GlobalParams::COMPONENT_NAMES[k].to_string(),
                posterior_globals.component(k) - truth.globals.component(k),
            )
        })
        .collect();

    let mut decisions = Vec::new();
    for &level in &config.levels {
        for (side, probs, labels) in [
            (UnitSide::Person, &person_probs, &true_xi),
            (UnitSide::Item, &item_probs, &true_eta),
        ] {
            for (rule, decision) in [
                (ControlRule::Discovery, control_fdr(probs, level)?),
                (ControlRule::Nondiscovery, control_fnr(probs, level)?),
            ] {
                let (fdp, fnp) = realized_proportions(&decision.flags, labels);
                decisions.push(DecisionEval {
                    side,
                    rule,
                    level,
                    zeta: decision.zeta,
                    n_flagged: decision.n_flagged,
                    fdp,
                    fnp,
                });
            }
        }
    }

    Ok(ModelOutcome {
        spec,
        split_rhat: rhat,
        converged: rhat <= config.rhat_threshold,
        dic: dic_summary,
        auc_person: auc(&person_probs, &true_xi)?,
        auc_item: auc(&item_probs, &true_eta)?,
        bias,
        decisions,
    })
}

fn run_one_rep(
    setting: &SimSetting,
    rep: usize,
    setting_index: usize,
    config: &StudyConfig,
) -> Result<RepOutcome> {
    let root = RngStream::new(config.seed, 0);
    let rep_stream = root.spawn(setting_index as u64).spawn(rep as u64);
    let mut data_rng = rep_stream.spawn(0);
    let (data, truth) = generate_dataset(setting, &mut data_rng)?;

    let specs: Vec<ModelSpec> = if config.fit_nulls {
        vec![ModelSpec::M1, ModelSpec::M1Null, ModelSpec::M2, ModelSpec::M2Null]
    } else {
        vec![ModelSpec::M1, ModelSpec::M2]
    };
    let mut models = Vec::with_capacity(specs.len());
    for (m, spec) in specs.into_iter().enumerate() {
        let mut rng = rep_stream.spawn(1 + m as u64);
        models.push(fit_one_model(spec, &data, &truth, config, &mut rng)?);
    }

    let scores: Vec<f64> = (0..data.n_persons())
        .map(|i| data.person_score(i) as f64)
        .collect();
    let true_xi: Vec<bool> = truth.persons.iter().map(|p| p.xi).collect();

    Ok(RepOutcome {
        setting: setting.name.clone(),
        rep,
        n_true_flagged_persons: true_xi.iter().filter(|x| **x).count(),
        n_true_flagged_items: truth.items.iter().filter(|i| i.eta).count(),
        baseline_auc_person: auc(&scores, &true_xi)?,
        models,
    })
}

/// Run every replication of every setting. Replications are independent
/// (each derives its own random substream from the study seed) and run in
/// parallel; results come back in deterministic order either way.
pub fn run_study(settings: &[SimSetting], config: &StudyConfig) -> Result<StudyReport> {
    if settings.is_empty() || config.n_reps == 0 {
        return Err(Error::Config(
            "study needs at least one setting and one replication".into(),
        ));
    }
    for setting in settings {
        setting.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..config.n_reps).map(move |r| (s, r)))
        .collect();
    let reps = jobs
        .into_par_iter()
        .map(|(s, r)| {
            run_one_rep(&settings[s], r, s, config).map_err(|e| {
                Error::InvalidInput(format!(
                    "replication {r} of setting '{}' failed: {e}",
                    settings[s].name
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyReport { reps })
}

impl StudyReport {
    fn model_outcomes<'a>(
        &'a self,
        setting: &'a str,
        spec: ModelSpec,
    ) -> impl Iterator<Item = &'a ModelOutcome> {
        self.reps
            .iter()
            .filter(move |r| r.setting == setting)
            .flat_map(move |r| r.models.iter().filter(move |m| m.spec == spec))
    }

    /// Mean over replications of (posterior mean - truth) for one shared
    /// parameter.
    pub fn mean_bias(&self, setting: &str, spec: ModelSpec, component: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .model_outcomes(setting, spec)
            .filter_map(|m| {
                m.bias
                    .iter()
                    .find(|(name, _)| name == component)
                    .map(|(_, b)| *b)
            })
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean realized (fdp, fnp) of one rule across replications.
    pub fn mean_proportions(
        &self,
        setting: &str,
        spec: ModelSpec,
        side: UnitSide,
        rule: ControlRule,
        level: f64,
    ) -> Option<(f64, f64)> {
        let rows: Vec<&DecisionEval> = self
            .model_outcomes(setting, spec)
            .flat_map(|m| {
                m.decisions
                    .iter()
                    .filter(|d| d.side == side && d.rule == rule && d.level == level)
            })
            .collect();
        (!rows.is_empty()).then(|| {
            let n = rows.len() as f64;
            (
                rows.iter().map(|d| d.fdp).sum::<f64>() / n,
                rows.iter().map(|d| d.fnp).sum::<f64>() / n,
            )
        })
    }

    pub fn mean_auc(&self, setting: &str, spec: ModelSpec, side: UnitSide) -> Option<f64> {
        let values: Vec<f64> = self
            .model_outcomes(setting, spec)
            .map(|m| match side {
                UnitSide::Person => m.auc_person,
                UnitSide::Item => m.auc_item,
            })
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn mean_baseline_auc(&self, setting: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .reps
            .iter()
            .filter(|r| r.setting == setting)
            .map(|r| r.baseline_auc_person)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// How many replications prefer (by DIC) the advantage variant over its
    /// no-advantage reference, out of how many had both fits.
    pub fn dic_wins(&self, setting: &str, spec: ModelSpec) -> (usize, usize) {
        let null_spec = spec.null_variant();
        let mut wins = 0;
        let mut total = 0;
        for rep in self.reps.iter().filter(|r| r.setting == setting) {
            let full = rep.models.iter().find(|m| m.spec == spec);
            let null = rep.models.iter().find(|m| m.spec == null_spec);
            if let (Some(full), Some(null)) = (full, null) {
                total += 1;
                if full.dic.dic < null.dic.dic {
                    wins += 1;
                }
            }
        }
        (wins, total)
    }

    /// Fraction of fits of one variant that passed the convergence check.
    pub fn convergence_fraction(&self, setting: &str, spec: ModelSpec) -> Option<f64> {
        let outcomes: Vec<bool> = self
            .model_outcomes(setting, spec)
            .map(|m| m.converged)
            .collect();
        (!outcomes.is_empty())
            .then(|| outcomes.iter().filter(|c| **c).count() as f64 / outcomes.len() as f64)
    }
}
