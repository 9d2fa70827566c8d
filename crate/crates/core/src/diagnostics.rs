//! Convergence checks and fit summaries.
//!
//! Chains are judged on their deviance traces: the potential scale
//! reduction factor compares between-chain and within-chain variability,
//! either across independent chains or between the two halves of a single
//! chain. Model fit is summarized by the deviance information criterion,
//! and label recovery (when the truth is known) by the area under the ROC
//! curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Potential scale reduction factor across parallel chains of equal length.
///
/// Values near one indicate the chains explore the same distribution. Two
/// conventions pin down the degenerate cases: chains with zero within-chain
/// variance score one when they also agree with each other, and infinity
/// when they sit at different constants.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "scale reduction needs at least two chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "scale reduction needs at least two draws per chain".into(),
        ));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput(
            "scale reduction needs chains of equal length".into(),
        ));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "scale reduction needs finite draws".into(),
        ));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand_mean = chain_means.iter().sum::<f64>() / m;
    let within: f64 = chains
        .iter()
        .zip(&chain_means)
        .map(|(c, mean)| c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    let between = nf / (m - 1.0)
        * chain_means
            .iter()
            .map(|mean| (mean - grand_mean) * (mean - grand_mean))
            .sum::<f64>();
    if within == 0.0 {
        return Ok(if between == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((nf - 1.0) / nf * within + between / nf) / within).sqrt())
}

/// Scale reduction between the two halves of a single trace, the
/// single-chain stand-in for [`gelman_rubin`]. Odd-length traces drop the
/// middle draw.
pub fn split_rhat(trace: &[f64]) -> Result<f64> {
    let half = trace.len() / 2;
    if half < 2 {
        return Err(Error::InvalidInput(format!(
            "split scale reduction needs at least four draws, got {}",
            trace.len()
        )));
    }
    let first = trace[..half].to_vec();
    let second = trace[trace.len() - half..].to_vec();
    gelman_rubin(&[first, second])
}

/// Deviance information criterion pieces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicSummary {
    /// Posterior mean deviance.
    pub dbar: f64,
    /// Deviance at the plug-in (posterior mean) state.
    pub dhat: f64,
    /// Effective number of parameters, dbar - dhat.
    pub p_eff: f64,
    /// The criterion itself, 2 dbar - dhat. Smaller is better.
    pub dic: f64,
}

/// Assemble the criterion from a retained deviance trace and the deviance
/// of the plug-in state.
pub fn dic(retained_deviance: &[f64], plug_in_deviance: f64) -> Result<DicSummary> {
    if retained_deviance.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize an empty deviance trace".into(),
        ));
    }
    if !plug_in_deviance.is_finite() || retained_deviance.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("deviances must be finite".into()));
    }
    let dbar = retained_deviance.iter().sum::<f64>() / retained_deviance.len() as f64;
    Ok(DicSummary {
        dbar,
        dhat: plug_in_deviance,
        p_eff: dbar - plug_in_deviance,
        dic: 2.0 * dbar - plug_in_deviance,
    })
}

/// Area under the ROC curve by the rank statistic, with tied scores sharing
/// their average rank. One when the scores separate the classes perfectly,
/// one half when they carry no signal.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "need matching nonempty scores and labels, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "ranking needs both a positive and a negative example".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    // Average ranks over tie groups, then sum the positive ranks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks are one-based; a tie group spanning positions start..end
        // shares the average of those ranks.
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
