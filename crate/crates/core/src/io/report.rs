//! The analysis report and its on-disk representation.
//!
//! A fit produces one JSON report plus a set of plain tabular files meant
//! for external plotting: per-unit posterior probabilities, decision lists,
//! threshold curves, deviance traces, and per-chain convergence rows.
//! Floats are printed with the shortest representation that parses back to
//! the same bit pattern, so a file written, read, and rewritten is stable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decision::decision_curve;
use crate::diagnostics::DicSummary;
use crate::error::{Error, Result};
use crate::model::UnitSide;
use crate::sampler::ChainOutput;

/// Posterior mean and 95% equal-tailed credible interval of one shared
/// parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Convergence and mixing facts for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostic {
    pub chain: usize,
    pub split_rhat: f64,
    pub converged: bool,
    pub mean_deviance: f64,
    /// Post-burn-in acceptance rate per Metropolis block.
    pub acceptance: Vec<(String, f64)>,
}

/// How a detection list was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// Smallest threshold whose local false discovery rate fits the budget.
    Discovery,
    /// Largest threshold whose local false nondiscovery rate fits the
    /// budget.
    Nondiscovery,
    /// Fixed probability cutoff derived from misclassification costs.
    CostRatio,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Discovery => "discovery",
            RuleKind::Nondiscovery => "nondiscovery",
            RuleKind::CostRatio => "cost-ratio",
        }
    }
}

/// One detection list: the rule, the threshold it chose, the local error
/// rates at that threshold, and the flagged 1-based unit ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub side: UnitSide,
    pub rule: RuleKind,
    /// Error budget for the control rules; the cutoff itself for the fixed
    /// cost-ratio rule.
    pub level: f64,
    pub zeta: f64,
    pub n_flagged: usize,
    pub fdr: f64,
    pub fnr: f64,
    pub flagged: Vec<usize>,
}

/// Everything a fit reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model: String,
    pub n_persons: usize,
    pub n_items: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub n_converged: usize,
    /// True when at least one chain converged; decisions are only emitted
    /// when this holds or the fit was forced.
    pub converged: bool,
    /// Retained draws pooled into the summaries below.
    pub pooled_draws: usize,
    pub globals: Vec<GlobalSummary>,
    pub chains: Vec<ChainDiagnostic>,
    pub person_probs: Vec<f64>,
    pub item_probs: Vec<f64>,
    pub decisions: Vec<DecisionSummary>,
    pub dic: Option<DicSummary>,
    pub null_model: Option<String>,
    pub null_dic: Option<DicSummary>,
}

/// Linearly interpolated sample quantile of unsorted values, matching the
/// common statistical-software default (type 7).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!(
            "quantile level must lie in [0, 1], got {p}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

/// Every file name [`write_report`] can place inside its directory.
pub const REPORT_FILES: [&str; 10] = [
    "report.json",
    "person_probs.csv",
    "item_probs.csv",
    "global_summary.csv",
    "convergence.csv",
    "decisions.csv",
    "detections.csv",
    "person_curve.csv",
    "item_curve.csv",
    "deviance.csv",
];

/// Decision table as CSV, one row per evaluated rule.
pub fn decisions_csv(rows: &[DecisionSummary]) -> String {
    let mut out = String::from("side,rule,level,zeta,n_flagged,fdr,fnr\n");
    for d in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.side.name(),
            d.rule.name(),
            d.level,
            d.zeta,
            d.n_flagged,
            d.fdr,
            d.fnr
        );
    }
    out
}

/// Flagged unit ids as CSV, one row per detection.
pub fn detections_csv(rows: &[DecisionSummary]) -> String {
    let mut out = String::from("side,rule,level,id\n");
    for d in rows {
        for id in &d.flagged {
            let _ = writeln!(out, "{},{},{},{id}", d.side.name(), d.rule.name(), d.level);
        }
    }
    out
}

/// Write the report JSON and its tabular companions into `dir`, returning
/// the paths written. Pass the fitted chains so the deviance traces can be
/// dumped alongside.
pub fn write_report(
    dir: &Path,
    report: &AnalysisReport,
    chains: &[ChainOutput],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let emit = |name: &str, content: String, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &content)?;
        written.push(path);
        Ok(())
    };

    let json = serde_json::to_string_pretty(report)?;
    emit("report.json", json + "\n", &mut written)?;

    for (name, probs) in [
        ("person_probs.csv", &report.person_probs),
        ("item_probs.csv", &report.item_probs),
    ] {
        let unit = if name.starts_with("person") { "person" } else { "item" };
        let mut out = format!("{unit},probability\n");
        for (i, p) in probs.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, p);
        }
        emit(name, out, &mut written)?;
    }

    let mut out = String::from("name,mean,lower,upper\n");
    for g in &report.globals {
        let _ = writeln!(out, "{},{},{},{}", g.name, g.mean, g.lower, g.upper);
    }
    emit("global_summary.csv", out, &mut written)?;

    let mut out = String::from("chain,split_rhat,converged,mean_deviance\n");
    for c in &report.chains {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.chain, c.split_rhat, c.converged, c.mean_deviance
        );
    }
    emit("convergence.csv", out, &mut written)?;

    emit("decisions.csv", decisions_csv(&report.decisions), &mut written)?;
    emit("detections.csv", detections_csv(&report.decisions), &mut written)?;

    for (name, probs) in [
        ("person_curve.csv", &report.person_probs),
        ("item_curve.csv", &report.item_probs),
    ] {
        if probs.is_empty() {
            continue;
        }
        let mut out = String::from("zeta,n_flagged,fdr,fnr\n");
        for point in decision_curve(probs)? {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                point.zeta, point.n_flagged, point.fdr, point.fnr
            );
        }
        emit(name, out, &mut written)?;
    }

    let mut out = String::from("chain,iteration,deviance\n");
    for (k, chain) in chains.iter().enumerate() {
        for (t, d) in chain.deviance.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{d}", t + 1);
        }
    }
    emit("deviance.csv", out, &mut written)?;

    Ok(written)
}

/// Read a report back from its JSON file.
pub fn read_report(path: &Path) -> Result<AnalysisReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Persist(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Read a probability column written by [`write_report`] (`person_probs.csv`
/// or `item_probs.csv`), in row order.
pub fn read_probs(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut probs = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if index == 0 {
            continue;
        }
        let row = index + 1;
        let (_, prob) = line.split_once(',').ok_or_else(|| Error::Ingest {
            row,
            column: 1,
            message: "expected two comma-separated fields".into(),
        })?;
        let p: f64 = prob.trim().parse().map_err(|_| Error::Ingest {
            row,
            column: 2,
            message: format!("expected a probability, found '{prob}'"),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Ingest {
                row,
                column: 2,
                message: format!("probability {p} is outside [0, 1]"),
            });
        }
        probs.push(p);
    }
    if probs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} holds no probability rows",
            path.display()
        )));
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::TempDir;

    #[test]
    fn quantiles_interpolate_linearly() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_relative_eq!(quantile(&values, 0.025).unwrap(), 3.475, epsilon = 1e-12);
        assert_relative_eq!(quantile(&values, 0.975).unwrap(), 97.525, epsilon = 1e-12);
        assert_eq!(quantile(&values, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&values, 1.0).unwrap(), 100.0);
        assert_eq!(quantile(&[7.0], 0.4).unwrap(), 7.0);
        // Order of the input must not matter.
        let shuffled = [3.0, 1.0, 2.0, 5.0, 4.0];
        assert_relative_eq!(quantile(&shuffled, 0.5).unwrap(), 3.0, epsilon = 1e-12);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&values, 1.5).is_err());
    }

    fn toy_report() -> AnalysisReport {
        AnalysisReport {
            model: "M1".into(),
            n_persons: 3,
            n_items: 2,
            seed: 7,
            n_chains: 1,
            n_converged: 1,
            converged: true,
            pooled_draws: 10,
            globals: vec![GlobalSummary {
                name: "delta".into(),
                mean: 1.1,
                lower: 0.4,
                upper: 1.9,
            }],
            chains: vec![ChainDiagnostic {
                chain: 0,
                split_rhat: 1.01,
                converged: true,
                mean_deviance: 55.5,
                acceptance: vec![("theta".into(), 0.3)],
            }],
            person_probs: vec![0.9, 0.1 + 0.2, 1.0 / 3.0],
            item_probs: vec![0.25, 0.75],
            decisions: vec![DecisionSummary {
                side: UnitSide::Person,
                rule: RuleKind::Discovery,
                level: 0.05,
                zeta: 1.0 / 3.0,
                n_flagged: 1,
                fdr: 0.1,
                fnr: 0.2,
                flagged: vec![1],
            }],
            dic: None,
            null_model: None,
            null_dic: None,
        }
    }

    #[test]
    fn report_json_round_trips() {
        let dir = TempDir::new().unwrap();
        let report = toy_report();
        write_report(dir.path(), &report, &[]).unwrap();
        let back = read_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn probability_files_round_trip_exactly() {
        let dir = TempDir::new().unwrap();
        let report = toy_report();
        write_report(dir.path(), &report, &[]).unwrap();
        let person = read_probs(&dir.path().join("person_probs.csv")).unwrap();
        assert_eq!(person, report.person_probs);
        let item = read_probs(&dir.path().join("item_probs.csv")).unwrap();
        assert_eq!(item, report.item_probs);
    }

    #[test]
    fn writers_are_deterministic() {
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        let report = toy_report();
        let files_a = write_report(dir_a.path(), &report, &[]).unwrap();
        let files_b = write_report(dir_b.path(), &report, &[]).unwrap();
        assert_eq!(files_a.len(), files_b.len());
        for (a, b) in files_a.iter().zip(&files_b) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn bad_probability_files_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "person,probability\n1,0.5\n2,1.5\n").unwrap();
        match read_probs(&path).unwrap_err() {
            Error::Ingest { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::write(&path, "person,probability\n1,abc\n").unwrap();
        assert!(read_probs(&path).is_err());
        std::fs::write(&path, "person,probability\n").unwrap();
        assert!(read_probs(&path).is_err());
    }
}
