//! Turning posterior flag probabilities into flagging decisions.
//!
//! Given posterior probabilities p_1..p_n that units are guilty (persons
//! with preknowledge, items compromised), a threshold rule flags every unit
//! with p strictly above some cut ζ. Two realized error rates summarize a
//! flag set:
//!
//! * the local false discovery rate, the average of (1 - p) over flagged
//!   units: the expected share of innocents among the accused;
//! * the local false nondiscovery rate, the average of p over unflagged
//!   units: the expected share of guilty units that walk away.
//!
//! Both are step functions of ζ that only change value where ζ crosses one
//! of the observed probabilities, so the search for an optimal cut needs to
//! look at the probabilities themselves (plus the endpoints) and nowhere
//! else. [`control_fdr`] picks the most permissive cut whose false discovery
//! rate stays within budget, flagging as many units as the evidence allows;
//! [`control_fnr`] picks the most conservative cut whose false nondiscovery
//! rate stays within budget, flagging as few as possible while still
//! catching the guilty mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one probability to decide on".into(),
        ));
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "flag probabilities must lie in [0, 1], got {bad}"
        )));
    }
    Ok(())
}

fn validate_level(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!(
            "error budget must lie in [0, 1], got {rho}"
        )));
    }
    Ok(())
}

/// Flag every unit whose probability strictly exceeds the cut.
pub fn threshold_flags(probs: &[f64], zeta: f64) -> Vec<bool> {
    probs.iter().map(|p| *p > zeta).collect()
}

/// Single-unit Bayes rule: flag when the posterior probability reaches the
/// cost-determined threshold (ties flag).
pub fn bayes_flags(probs: &[f64], threshold: f64) -> Result<Vec<bool>> {
    validate_probs(probs)?;
    validate_level(threshold)?;
    Ok(probs.iter().map(|p| *p >= threshold).collect())
}

/// Realized (local) false discovery and false nondiscovery rates of an
/// arbitrary flag set. Empty groups contribute a rate of zero.
pub fn local_error_rates(probs: &[f64], flags: &[bool]) -> Result<(f64, f64)> {
    validate_probs(probs)?;
    if flags.len() != probs.len() {
        return Err(Error::InvalidInput(format!(
            "{} flags for {} probabilities",
            flags.len(),
            probs.len()
        )));
    }
    let mut innocent_mass = 0.0;
    let mut guilty_mass = 0.0;
    let mut n_flagged = 0usize;
    for (p, flagged) in probs.iter().zip(flags) {
        if *flagged {
            innocent_mass += 1.0 - p;
            n_flagged += 1;
        } else {
            guilty_mass += p;
        }
    }
    let n_unflagged = probs.len() - n_flagged;
    let fdr = innocent_mass / (n_flagged.max(1)) as f64;
    let fnr = guilty_mass / (n_unflagged.max(1)) as f64;
    Ok((fdr, fnr))
}

/// A threshold rule together with its realized error rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    /// The chosen cut; units with probability strictly above it are flagged.
    pub zeta: f64,
    pub flags: Vec<bool>,
    pub n_flagged: usize,
    /// Realized local false discovery rate of the flag set.
    pub fdr: f64,
    /// Realized local false nondiscovery rate of the flag set.
    pub fnr: f64,
}

fn decision_at(probs: &[f64], zeta: f64) -> ThresholdDecision {
    let flags = threshold_flags(probs, zeta);
    let n_flagged = flags.iter().filter(|f| **f).count();
    let (fdr, fnr) = local_error_rates(probs, &flags).expect("validated upstream");
    ThresholdDecision {
        zeta,
        flags,
        n_flagged,
        fdr,
        fnr,
    }
}

/// Candidate cuts: zero, every distinct probability, optionally one. The
/// error rates are constant between consecutive candidates, so these are
/// the only places an optimum can sit.
fn candidate_cuts(probs: &[f64], include_one: bool) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(probs.len() + 2);
    cuts.push(0.0);
    cuts.extend_from_slice(probs);
    if include_one {
        cuts.push(1.0);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// The most permissive cut whose realized false discovery rate stays within
/// `rho`: among all feasible cuts, the smallest, so the rule flags as many
/// units as the budget allows. Always feasible, because the cut at the top
/// probability flags nobody.
pub fn control_fdr(probs: &[f64], rho: f64) -> Result<ThresholdDecision> {
    validate_probs(probs)?;
    validate_level(rho)?;
    for zeta in candidate_cuts(probs, false) {
        let decision = decision_at(probs, zeta);
        if decision.fdr <= rho {
            return Ok(decision);
        }
    }
    unreachable!("the cut at the maximum probability flags nothing and has zero fdr");
}

/// The most conservative cut whose realized false nondiscovery rate stays
/// within `rho`: among all feasible cuts, the largest, so the rule flags as
/// few units as the budget allows. Always feasible, because the cut at zero
/// leaves only zero-probability units unflagged.
pub fn control_fnr(probs: &[f64], rho: f64) -> Result<ThresholdDecision> {
    validate_probs(probs)?;
    validate_level(rho)?;
    for zeta in candidate_cuts(probs, true).into_iter().rev() {
        let decision = decision_at(probs, zeta);
        if decision.fnr <= rho {
            return Ok(decision);
        }
    }
    unreachable!("the cut at zero flags every unit with positive probability");
}

/// One evaluated cut of the decision curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub zeta: f64,
    pub n_flagged: usize,
    pub fdr: f64,
    pub fnr: f64,
}

/// The whole trade-off curve, evaluated at every candidate cut in
/// ascending order. Useful for reporting how the realized error rates move
/// as the rule tightens.
pub fn decision_curve(probs: &[f64]) -> Result<Vec<CurvePoint>> {
    validate_probs(probs)?;
    Ok(candidate_cuts(probs, true)
        .into_iter()
        .map(|zeta| {
            let d = decision_at(probs, zeta);
            CurvePoint {
                zeta,
                n_flagged: d.n_flagged,
                fdr: d.fdr,
                fnr: d.fnr,
            }
        })
        .collect())
}
