//! Model state, data layout, and the likelihood.
//!
//! A data set is an N x J matrix of binary responses, optionally paired with
//! log response times (cells may be missing). The model gives person i a
//! latent ability theta and speed tau, item j a difficulty beta and time
//! intensity alpha, and two binary labels: xi marks a person as having
//! preknowledge, eta marks an item as compromised. On cells where both
//! labels are set, the success logit gains `delta` and the expected log time
//! drops by `gamma`; everywhere else the model is an ordinary Rasch response
//! model with log-normal times.
//!
//! Four variants are fit in practice: responses alone or responses plus
//! times, each with or without its advantage term. The variants without the
//! advantage serve as the no-cheating reference when comparing fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};

/// Which observations the model uses and which advantage terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Responses only, with the response advantage.
    M1,
    /// Responses only, advantage disabled (plain Rasch).
    M1Null,
    /// Responses and times, with both advantages.
    M2,
    /// Responses and times, time advantage disabled.
    M2Null,
}

impl ModelSpec {
    /// Does the likelihood include the response-time factor?
    pub fn uses_times(self) -> bool {
        matches!(self, ModelSpec::M2 | ModelSpec::M2Null)
    }

    /// Is the success-probability advantage `delta` switched on?
    pub fn response_advantage(self) -> bool {
        !matches!(self, ModelSpec::M1Null)
    }

    /// Is the speed advantage `gamma` switched on?
    pub fn time_advantage(self) -> bool {
        matches!(self, ModelSpec::M2)
    }

    /// The reference variant with the same observations but the last active
    /// advantage term removed.
    pub fn null_variant(self) -> ModelSpec {
        match self {
            ModelSpec::M1 | ModelSpec::M1Null => ModelSpec::M1Null,
            ModelSpec::M2 | ModelSpec::M2Null => ModelSpec::M2Null,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSpec::M1 => "M1",
            ModelSpec::M1Null => "M1-null",
            ModelSpec::M2 => "M2",
            ModelSpec::M2Null => "M2-null",
        }
    }

    pub fn parse(s: &str) -> Result<ModelSpec> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelSpec::M1),
            "m1-null" | "m1_null" | "m1null" => Ok(ModelSpec::M1Null),
            "m2" => Ok(ModelSpec::M2),
            "m2-null" | "m2_null" | "m2null" => Ok(ModelSpec::M2Null),
            other => Err(Error::Config(format!(
                "unknown model '{other}', expected m1, m1-null, m2, or m2-null"
            ))),
        }
    }

    /// Indices into the flattened shared-parameter vector that this variant
    /// actually estimates. Response-only variants keep neutral placeholder
    /// values in the remaining slots.
    pub fn active_global_components(self) -> Vec<usize> {
        (0..GlobalParams::N_COMPONENTS)
            .filter(|&k| match GlobalParams::COMPONENT_NAMES[k] {
                "delta" => self.response_advantage(),
                "gamma" => self.time_advantage(),
                "kappa" | "mu2" | "sigma12" | "sigma22" | "omega12" | "omega22" => {
                    self.uses_times()
                }
                _ => true,
            })
            .collect()
    }
}

/// Which side of the data a unit belongs to: a test taker or an item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitSide {
    Person,
    Item,
}

impl UnitSide {
    pub fn name(self) -> &'static str {
        match self {
            UnitSide::Person => "person",
            UnitSide::Item => "item",
        }
    }
}

/// Observed test data: responses and, when collected, log response times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSet {
    n_persons: usize,
    n_items: usize,
    /// Row-major N x J matrix of 0/1 responses.
    responses: Vec<u8>,
    /// Row-major N x J matrix of natural-log response times; missing cells
    /// are NaN. `None` when the instrument recorded no times at all.
    log_times: Option<Vec<f64>>,
}

impl DataSet {
    pub fn new(
        n_persons: usize,
        n_items: usize,
        responses: Vec<u8>,
        log_times: Option<Vec<f64>>,
    ) -> Result<DataSet> {
        if n_persons == 0 || n_items == 0 {
            return Err(Error::InvalidInput(
                "data set needs at least one person and one item".into(),
            ));
        }
        if responses.len() != n_persons * n_items {
            return Err(Error::InvalidInput(format!(
                "expected {} responses for {} persons x {} items, got {}",
                n_persons * n_items,
                n_persons,
                n_items,
                responses.len()
            )));
        }
        if let Some(bad) = responses.iter().position(|r| *r > 1) {
            return Err(Error::InvalidInput(format!(
                "response for person {}, item {} is {}, expected 0 or 1",
                bad / n_items,
                bad % n_items,
                responses[bad]
            )));
        }
        if let Some(times) = &log_times {
            if times.len() != n_persons * n_items {
                return Err(Error::InvalidInput(format!(
                    "expected {} log times, got {}",
                    n_persons * n_items,
                    times.len()
                )));
            }
            if times.iter().any(|t| t.is_infinite()) {
                return Err(Error::InvalidInput(
                    "log times must be finite or NaN for missing".into(),
                ));
            }
        }
        Ok(DataSet {
            n_persons,
            n_items,
            responses,
            log_times,
        })
    }

    pub fn n_persons(&self) -> usize {
        self.n_persons
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn response(&self, person: usize, item: usize) -> bool {
        self.responses[person * self.n_items + item] == 1
    }

    /// The observed log time for a cell, `None` when missing or untimed.
    pub fn log_time(&self, person: usize, item: usize) -> Option<f64> {
        self.log_times.as_ref().and_then(|t| {
            let v = t[person * self.n_items + item];
            v.is_finite().then_some(v)
        })
    }

    /// Whether the data set carries a time matrix at all (even one that is
    /// entirely missing).
    pub fn has_times(&self) -> bool {
        self.log_times.is_some()
    }

    pub fn n_observed_times(&self) -> usize {
        self.log_times
            .as_ref()
            .map(|t| t.iter().filter(|v| v.is_finite()).count())
            .unwrap_or(0)
    }

    /// Number of correct responses for one person.
    pub fn person_score(&self, person: usize) -> usize {
        let row = &self.responses[person * self.n_items..(person + 1) * self.n_items];
        row.iter().map(|r| *r as usize).sum()
    }

    /// A copy without the time matrix.
    pub fn responses_only(&self) -> DataSet {
        DataSet {
            n_persons: self.n_persons,
            n_items: self.n_items,
            responses: self.responses.clone(),
            log_times: None,
        }
    }

    /// A copy with every time cell masked out, keeping the time matrix
    /// present but empty of observations.
    pub fn with_all_times_masked(&self) -> DataSet {
        DataSet {
            n_persons: self.n_persons,
            n_items: self.n_items,
            responses: self.responses.clone(),
            log_times: Some(vec![f64::NAN; self.n_persons * self.n_items]),
        }
    }
}

/// Latent quantities for one person.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonParams {
    /// Ability.
    pub theta: f64,
    /// Working speed; higher means faster.
    pub tau: f64,
    /// Preknowledge label.
    pub xi: bool,
}

/// Latent quantities for one item.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    /// Difficulty.
    pub beta: f64,
    /// Time intensity; higher means slower.
    pub alpha: f64,
    /// Compromise label.
    pub eta: bool,
}

/// Parameters shared across persons and items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    /// Success-logit advantage on compromised items for persons with
    /// preknowledge.
    pub delta: f64,
    /// Drop in expected log time on those same cells.
    pub gamma: f64,
    /// Residual variance of log times.
    pub kappa: f64,
    /// Prevalence of preknowledge among persons.
    pub pi1: f64,
    /// Prevalence of compromise among items.
    pub pi2: f64,
    /// Mean of the item effects (difficulty, time intensity).
    pub mu: Vec2,
    /// Covariance of the person effects (ability, speed).
    pub sigma: Sym2,
    /// Covariance of the item effects around `mu`.
    pub omega: Sym2,
}

impl GlobalParams {
    /// Number of scalar components when the struct is flattened.
    pub const N_COMPONENTS: usize = 13;

    /// Names of the flattened components, in [`GlobalParams::component`]
    /// order.
    pub const COMPONENT_NAMES: [&'static str; Self::N_COMPONENTS] = [
        "delta", "gamma", "kappa", "pi1", "pi2", "mu1", "mu2", "sigma11", "sigma12", "sigma22",
        "omega11", "omega12", "omega22",
    ];

    /// All components zero; a blank slate for accumulating means.
    pub fn zeroed() -> GlobalParams {
        GlobalParams {
            delta: 0.0,
            gamma: 0.0,
            kappa: 0.0,
            pi1: 0.0,
            pi2: 0.0,
            mu: Vec2::ZERO,
            sigma: Sym2::new(0.0, 0.0, 0.0),
            omega: Sym2::new(0.0, 0.0, 0.0),
        }
    }

    /// Read one flattened component.
    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.delta,
            1 => self.gamma,
            2 => self.kappa,
            3 => self.pi1,
            4 => self.pi2,
            5 => self.mu.x,
            6 => self.mu.y,
            7 => self.sigma.a,
            8 => self.sigma.b,
            9 => self.sigma.d,
            10 => self.omega.a,
            11 => self.omega.b,
            12 => self.omega.d,
            _ => panic!("global component index {k} out of range"),
        }
    }

    /// Write one flattened component.
    pub fn set_component(&mut self, k: usize, value: f64) {
        match k {
            0 => self.delta = value,
            1 => self.gamma = value,
            2 => self.kappa = value,
            3 => self.pi1 = value,
            4 => self.pi2 = value,
            5 => self.mu.x = value,
            6 => self.mu.y = value,
            7 => self.sigma.a = value,
            8 => self.sigma.b = value,
            9 => self.sigma.d = value,
            10 => self.omega.a = value,
            11 => self.omega.b = value,
            12 => self.omega.d = value,
            _ => panic!("global component index {k} out of range"),
        }
    }
}

/// Complete sampler state: one value for every model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub persons: Vec<PersonParams>,
    pub items: Vec<ItemParams>,
    pub globals: GlobalParams,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(sigmoid(x)) without overflow at either extreme.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Log mass of a binary response with the given success logit.
pub fn response_log_mass(correct: bool, logit: f64) -> f64 {
    log_sigmoid(if correct { logit } else { -logit })
}

/// Log density of one observed log time around its model mean.
pub fn time_log_density(log_time: f64, mean: f64, kappa: f64) -> f64 {
    let r = log_time - mean;
    -0.5 * (crate::dist::LN_2PI + kappa.ln() + r * r / kappa)
}

/// Response log likelihood of one person's row given the current items.
/// `delta` must already be zeroed when the advantage is inactive.
pub fn response_ll_row(
    data: &DataSet,
    person: usize,
    theta: f64,
    xi: bool,
    items: &[ItemParams],
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    for (j, item) in items.iter().enumerate() {
        let boost = if xi && item.eta { delta } else { 0.0 };
        total += response_log_mass(data.response(person, j), theta - item.beta + boost);
    }
    total
}

/// Time log likelihood of one person's row; missing cells contribute zero.
pub fn time_ll_row(
    data: &DataSet,
    person: usize,
    tau: f64,
    xi: bool,
    items: &[ItemParams],
    gamma: f64,
    kappa: f64,
) -> f64 {
    let mut total = 0.0;
    for (j, item) in items.iter().enumerate() {
        if let Some(x) = data.log_time(person, j) {
            let speedup = if xi && item.eta { gamma } else { 0.0 };
            total += time_log_density(x, item.alpha - tau - speedup, kappa);
        }
    }
    total
}

/// Response log likelihood of one item's column given the current persons.
pub fn response_ll_col(
    data: &DataSet,
    item: usize,
    beta: f64,
    eta: bool,
    persons: &[PersonParams],
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    for (i, person) in persons.iter().enumerate() {
        let boost = if person.xi && eta { delta } else { 0.0 };
        total += response_log_mass(data.response(i, item), person.theta - beta + boost);
    }
    total
}

/// Time log likelihood of one item's column; missing cells contribute zero.
pub fn time_ll_col(
    data: &DataSet,
    item: usize,
    alpha: f64,
    eta: bool,
    persons: &[PersonParams],
    gamma: f64,
    kappa: f64,
) -> f64 {
    let mut total = 0.0;
    for (i, person) in persons.iter().enumerate() {
        if let Some(x) = data.log_time(i, item) {
            let speedup = if person.xi && eta { gamma } else { 0.0 };
            total += time_log_density(x, alpha - person.tau - speedup, kappa);
        }
    }
    total
}

fn check_dimensions(data: &DataSet, persons: &[PersonParams], items: &[ItemParams]) -> Result<()> {
    if persons.len() != data.n_persons() || items.len() != data.n_items() {
        return Err(Error::InvalidInput(format!(
            "state has {} persons and {} items but data has {} and {}",
            persons.len(),
            items.len(),
            data.n_persons(),
            data.n_items()
        )));
    }
    Ok(())
}

/// Joint log likelihood of the data under one model variant.
pub fn log_likelihood(
    data: &DataSet,
    persons: &[PersonParams],
    items: &[ItemParams],
    globals: &GlobalParams,
    spec: ModelSpec,
) -> Result<f64> {
    check_dimensions(data, persons, items)?;
    if spec.uses_times() {
        if !data.has_times() {
            return Err(Error::Config(format!(
                "model {} needs response times but the data set has none",
                spec.name()
            )));
        }
        if !(globals.kappa > 0.0) {
            return Err(Error::InvalidParam(format!(
                "time residual variance must be positive, got {}",
                globals.kappa
            )));
        }
    }
    let delta = if spec.response_advantage() { globals.delta } else { 0.0 };
    let mut total = 0.0;
    for (i, person) in persons.iter().enumerate() {
        total += response_ll_row(data, i, person.theta, person.xi, items, delta);
    }
    if spec.uses_times() {
        let gamma = if spec.time_advantage() { globals.gamma } else { 0.0 };
        for (i, person) in persons.iter().enumerate() {
            total += time_ll_row(data, i, person.tau, person.xi, items, gamma, globals.kappa);
        }
    }
    Ok(total)
}

/// Model deviance, -2 times the log likelihood.
pub fn deviance(
    data: &DataSet,
    persons: &[PersonParams],
    items: &[ItemParams],
    globals: &GlobalParams,
    spec: ModelSpec,
) -> Result<f64> {
    log_likelihood(data, persons, items, globals, spec).map(|ll| -2.0 * ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn globals() -> GlobalParams {
        GlobalParams {
            delta: 1.2,
            gamma: 0.8,
            kappa: 0.64,
            pi1: 0.1,
            pi2: 0.25,
            mu: Vec2::ZERO,
            sigma: Sym2::IDENTITY,
            omega: Sym2::IDENTITY,
        }
    }

    fn tiny_data(times: bool) -> DataSet {
        let responses = vec![1, 0, 0, 1, 1, 1];
        let log_times = times.then(|| vec![0.6, 1.1, -0.2, 0.9, 0.3, 1.4]);
        DataSet::new(2, 3, responses, log_times).unwrap()
    }

    fn tiny_state() -> (Vec<PersonParams>, Vec<ItemParams>) {
        let persons = vec![
            PersonParams { theta: 0.3, tau: -0.2, xi: true },
            PersonParams { theta: -0.5, tau: 0.4, xi: false },
        ];
        let items = vec![
            ItemParams { beta: 0.1, alpha: 0.5, eta: true },
            ItemParams { beta: -0.3, alpha: 0.8, eta: false },
            ItemParams { beta: 0.7, alpha: 0.2, eta: true },
        ];
        (persons, items)
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_relative_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(1.4), 0.8021838885585818, epsilon = 1e-12);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_relative_eq!(log_sigmoid(0.0), -(2.0f64.ln()), epsilon = 1e-12);
        // At extreme arguments the log mass degrades gracefully instead of
        // overflowing.
        assert_relative_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert_eq!(log_sigmoid(800.0), 0.0);
        for x in [-3.0, -0.7, 0.0, 0.9, 4.0] {
            assert_relative_eq!(log_sigmoid(x), sigmoid(x).ln(), epsilon = 1e-12);
            assert_relative_eq!(sigmoid(x) + sigmoid(-x), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn success_probability_with_advantage() {
        // A person with preknowledge on a compromised item has logit
        // theta - beta + delta; everyone else gets the plain Rasch logit.
        let p_cheat = sigmoid(0.3 - 0.1 + 1.2);
        assert_relative_eq!(p_cheat, 0.8021838885585818, epsilon = 1e-12);
        let p_plain = sigmoid(0.3 - 0.1);
        assert_relative_eq!(p_plain, 0.549833997312478, epsilon = 1e-12);
        // Equal ability and difficulty without the advantage is a coin flip.
        assert_relative_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn likelihood_matches_cell_by_cell_arithmetic() {
        let data = tiny_data(true);
        let (persons, items) = tiny_state();
        let g = globals();
        let mut expected = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                let cheat = persons[i].xi && items[j].eta;
                let logit = persons[i].theta - items[j].beta + if cheat { g.delta } else { 0.0 };
                let p = sigmoid(logit);
                expected += if data.response(i, j) { p.ln() } else { (1.0 - p).ln() };
                let mean = items[j].alpha - persons[i].tau - if cheat { g.gamma } else { 0.0 };
                let x = data.log_time(i, j).unwrap();
                expected += -0.5 * ((2.0 * std::f64::consts::PI * g.kappa).ln() + (x - mean) * (x - mean) / g.kappa);
            }
        }
        let got = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-10);
        assert_relative_eq!(
            deviance(&data, &persons, &items, &g, ModelSpec::M2).unwrap(),
            -2.0 * expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn time_factor_separates_from_response_factor() {
        let data = tiny_data(true);
        let (persons, items) = tiny_state();
        let g = globals();
        let m2 = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2).unwrap();
        let m1 = log_likelihood(&data, &persons, &items, &g, ModelSpec::M1).unwrap();
        let mut time_part = 0.0;
        for (i, person) in persons.iter().enumerate() {
            time_part += time_ll_row(&data, i, person.tau, person.xi, &items, g.gamma, g.kappa);
        }
        assert_relative_eq!(m2, m1 + time_part, epsilon = 1e-10);
    }

    #[test]
    fn null_variants_ignore_their_advantage_terms() {
        let data = tiny_data(true);
        let (persons, items) = tiny_state();
        let mut g = globals();
        let base_m1null = log_likelihood(&data, &persons, &items, &g, ModelSpec::M1Null).unwrap();
        g.delta = 99.0;
        assert_eq!(
            log_likelihood(&data, &persons, &items, &g, ModelSpec::M1Null).unwrap(),
            base_m1null
        );
        // The response advantage stays live in the time-null variant, so
        // rebase before toggling the speed advantage alone.
        let base_m2null = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2Null).unwrap();
        g.gamma = -7.0;
        assert_eq!(
            log_likelihood(&data, &persons, &items, &g, ModelSpec::M2Null).unwrap(),
            base_m2null
        );
        // The response advantage is still present in the time-null variant.
        let with_delta = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2Null).unwrap();
        g.delta = 0.001;
        let without = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2Null).unwrap();
        assert_ne!(with_delta, without);
    }

    #[test]
    fn missing_time_cells_drop_out_of_the_likelihood() {
        let full = tiny_data(true);
        let (persons, items) = tiny_state();
        let g = globals();
        // Mask two cells and subtract their contributions by hand.
        let mut times: Vec<f64> = (0..2)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| full.log_time(i, j).unwrap())
            .collect();
        times[1] = f64::NAN;
        times[5] = f64::NAN;
        let masked = DataSet::new(2, 3, (0..6).map(|k| full.response(k / 3, k % 3) as u8).collect(), Some(times)).unwrap();
        assert_eq!(masked.n_observed_times(), 4);

        let manual = |i: usize, j: usize| {
            let cheat = persons[i].xi && items[j].eta;
            let mean = items[j].alpha - persons[i].tau - if cheat { g.gamma } else { 0.0 };
            time_log_density(full.log_time(i, j).unwrap(), mean, g.kappa)
        };
        let expected = log_likelihood(&full, &persons, &items, &g, ModelSpec::M2).unwrap()
            - manual(0, 1)
            - manual(1, 2);
        let got = log_likelihood(&masked, &persons, &items, &g, ModelSpec::M2).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-10);
    }

    #[test]
    fn fully_masked_times_reduce_to_the_response_model() {
        let data = tiny_data(true);
        let masked = data.with_all_times_masked();
        assert!(masked.has_times());
        assert_eq!(masked.n_observed_times(), 0);
        let (persons, items) = tiny_state();
        let g = globals();
        let m2 = log_likelihood(&masked, &persons, &items, &g, ModelSpec::M2).unwrap();
        let m1 = log_likelihood(&data, &persons, &items, &g, ModelSpec::M1).unwrap();
        assert_eq!(m2, m1);
    }

    #[test]
    fn incompatible_inputs_are_rejected() {
        let data = tiny_data(false);
        let (persons, items) = tiny_state();
        let g = globals();
        assert!(matches!(
            log_likelihood(&data, &persons, &items, &g, ModelSpec::M2),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            log_likelihood(&data, &persons[..1], &items, &g, ModelSpec::M1),
            Err(Error::InvalidInput(_))
        ));
        assert!(DataSet::new(2, 3, vec![1, 0, 2, 1, 1, 1], None).is_err());
        assert!(DataSet::new(2, 3, vec![1, 0], None).is_err());
        let mut bad = globals();
        bad.kappa = 0.0;
        assert!(log_likelihood(&tiny_data(true), &persons, &items, &bad, ModelSpec::M2).is_err());
    }

    #[test]
    fn global_components_round_trip() {
        let mut g = GlobalParams::zeroed();
        for k in 0..GlobalParams::N_COMPONENTS {
            g.set_component(k, k as f64 + 0.5);
        }
        for k in 0..GlobalParams::N_COMPONENTS {
            assert_eq!(g.component(k), k as f64 + 0.5);
        }
        assert_eq!(g.delta, 0.5);
        assert_eq!(g.omega.d, 12.5);
        assert_eq!(GlobalParams::COMPONENT_NAMES.len(), GlobalParams::N_COMPONENTS);
    }

    #[test]
    fn model_names_round_trip() {
        for spec in [ModelSpec::M1, ModelSpec::M1Null, ModelSpec::M2, ModelSpec::M2Null] {
            assert_eq!(ModelSpec::parse(spec.name()).unwrap(), spec);
        }
        assert!(ModelSpec::parse("m3").is_err());
        assert_eq!(ModelSpec::M1.null_variant(), ModelSpec::M1Null);
        assert_eq!(ModelSpec::M2.null_variant(), ModelSpec::M2Null);
    }

    proptest! {
        // The response factor is a probability mass, so its log never goes
        // positive no matter the state.
        #[test]
        fn response_log_likelihood_is_nonpositive(
            theta in -4.0f64..4.0,
            beta in -4.0f64..4.0,
            delta in 0.01f64..4.0,
            xi: bool,
            eta: bool,
            y: bool,
        ) {
            let data = DataSet::new(1, 1, vec![y as u8], None).unwrap();
            let persons = vec![PersonParams { theta, tau: 0.0, xi }];
            let items = vec![ItemParams { beta, alpha: 0.0, eta }];
            let mut g = globals();
            g.delta = delta;
            let ll = log_likelihood(&data, &persons, &items, &g, ModelSpec::M1).unwrap();
            prop_assert!(ll <= 0.0);
            prop_assert!(ll.is_finite());
        }

        // Row plus column decompositions agree with the full sum.
        #[test]
        fn row_and_column_views_agree(seed in 0u64..200) {
            use crate::rng::RngStream;
            use rand::Rng;
            let mut rng = RngStream::new(seed, 0);
            let n = 4usize;
            let j = 3usize;
            let responses: Vec<u8> = (0..n * j).map(|_| rng.random::<bool>() as u8).collect();
            let times: Vec<f64> = (0..n * j).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
            let data = DataSet::new(n, j, responses, Some(times)).unwrap();
            let persons: Vec<PersonParams> = (0..n)
                .map(|_| PersonParams {
                    theta: rng.random::<f64>() - 0.5,
                    tau: rng.random::<f64>() - 0.5,
                    xi: rng.random::<bool>(),
                })
                .collect();
            let items: Vec<ItemParams> = (0..j)
                .map(|_| ItemParams {
                    beta: rng.random::<f64>() - 0.5,
                    alpha: rng.random::<f64>(),
                    eta: rng.random::<bool>(),
                })
                .collect();
            let g = globals();
            let by_rows: f64 = (0..n)
                .map(|i| {
                    response_ll_row(&data, i, persons[i].theta, persons[i].xi, &items, g.delta)
                        + time_ll_row(&data, i, persons[i].tau, persons[i].xi, &items, g.gamma, g.kappa)
                })
                .sum();
            let by_cols: f64 = (0..j)
                .map(|jj| {
                    response_ll_col(&data, jj, items[jj].beta, items[jj].eta, &persons, g.delta)
                        + time_ll_col(&data, jj, items[jj].alpha, items[jj].eta, &persons, g.gamma, g.kappa)
                })
                .sum();
            let full = log_likelihood(&data, &persons, &items, &g, ModelSpec::M2).unwrap();
            prop_assert!((by_rows - full).abs() < 1e-9);
            prop_assert!((by_cols - full).abs() < 1e-9);
        }
    }
}
