//! Tabular output of a replication study.
//!
//! The full study report goes out as JSON, and the pieces people actually
//! plot are flattened into long-format CSV tables: one row per replication,
//! per model fit, per bias component, and per evaluated decision rule, plus
//! a summary table of means across replications.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use preknowledge::model::{ModelSpec, UnitSide};
use preknowledge::simulation::{ControlRule, StudyReport};

/// Every file [`write_study`] places inside its directory.
pub const STUDY_FILES: [&str; 6] = [
    "study_report.json",
    "study_reps.csv",
    "study_models.csv",
    "study_bias.csv",
    "study_decisions.csv",
    "study_summary.csv",
];

pub fn write_study(dir: &Path, report: &StudyReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("study_report.json", serde_json::to_string_pretty(report)? + "\n"),
        ("study_reps.csv", reps_table(report)),
        ("study_models.csv", models_table(report)),
        ("study_bias.csv", bias_table(report)),
        ("study_decisions.csv", decisions_table(report)),
        ("study_summary.csv", summary_table(report)),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

fn rule_name(rule: ControlRule) -> &'static str {
    match rule {
        ControlRule::Discovery => "discovery",
        ControlRule::Nondiscovery => "nondiscovery",
    }
}

fn reps_table(report: &StudyReport) -> String {
    let mut out =
        String::from("setting,rep,true_flagged_persons,true_flagged_items,baseline_auc_person\n");
    for rep in &report.reps {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            rep.setting,
            rep.rep,
            rep.n_true_flagged_persons,
            rep.n_true_flagged_items,
            rep.baseline_auc_person
        );
    }
    out
}

fn models_table(report: &StudyReport) -> String {
    let mut out = String::from(
        "setting,rep,model,split_rhat,converged,dbar,dhat,p_eff,dic,auc_person,auc_item\n",
    );
    for rep in &report.reps {
        for m in &rep.models {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                rep.setting,
                rep.rep,
                m.spec.name(),
                m.split_rhat,
                m.converged,
                m.dic.dbar,
                m.dic.dhat,
                m.dic.p_eff,
                m.dic.dic,
                m.auc_person,
                m.auc_item
            );
        }
    }
    out
}

fn bias_table(report: &StudyReport) -> String {
    let mut out = String::from("setting,rep,model,parameter,bias\n");
    for rep in &report.reps {
        for m in &rep.models {
            for (name, bias) in &m.bias {
                let _ = writeln!(out, "{},{},{},{name},{bias}", rep.setting, rep.rep, m.spec.name());
            }
        }
    }
    out
}

fn decisions_table(report: &StudyReport) -> String {
    let mut out = String::from("setting,rep,model,side,rule,level,zeta,n_flagged,fdp,fnp\n");
    for rep in &report.reps {
        for m in &rep.models {
            for d in &m.decisions {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    rep.setting,
                    rep.rep,
                    m.spec.name(),
                    d.side.name(),
                    rule_name(d.rule),
                    d.level,
                    d.zeta,
                    d.n_flagged,
                    d.fdp,
                    d.fnp
                );
            }
        }
    }
    out
}

fn distinct_settings(report: &StudyReport) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for rep in &report.reps {
        if !out.contains(&rep.setting) {
            out.push(rep.setting.clone());
        }
    }
    out
}

fn distinct_specs(report: &StudyReport) -> Vec<ModelSpec> {
    let mut out: Vec<ModelSpec> = Vec::new();
    for rep in &report.reps {
        for m in &rep.models {
            if !out.contains(&m.spec) {
                out.push(m.spec);
            }
        }
    }
    out
}

fn distinct_rules(report: &StudyReport) -> Vec<(UnitSide, ControlRule, f64)> {
    let mut out: Vec<(UnitSide, ControlRule, f64)> = Vec::new();
    for rep in &report.reps {
        for m in &rep.models {
            for d in &m.decisions {
                let key = (d.side, d.rule, d.level);
                if !out.contains(&key) {
                    out.push(key);
                }
            }
        }
    }
    out
}

fn bias_components(report: &StudyReport, setting: &str, spec: ModelSpec) -> Vec<String> {
    report
        .reps
        .iter()
        .filter(|r| r.setting == setting)
        .flat_map(|r| &r.models)
        .find(|m| m.spec == spec)
        .map(|m| m.bias.iter().map(|(name, _)| name.clone()).collect())
        .unwrap_or_default()
}

/// Means across replications in long format, one `(setting, model,
/// measure, value)` row each: ranking quality, convergence, parameter
/// bias, realized error proportions per rule, and DIC win counts against
/// the matching no-advantage variant.
fn summary_table(report: &StudyReport) -> String {
    let mut out = String::from("setting,model,measure,value\n");
    let rules = distinct_rules(report);
    for setting in distinct_settings(report) {
        let mut push = |model: &str, measure: &str, value: f64| {
            let _ = writeln!(out, "{setting},{model},{measure},{value}");
        };
        if let Some(auc) = report.mean_baseline_auc(&setting) {
            push("baseline", "mean_auc_person", auc);
        }
        for spec in distinct_specs(report) {
            let model = spec.name();
            if let Some(auc) = report.mean_auc(&setting, spec, UnitSide::Person) {
                push(model, "mean_auc_person", auc);
            }
            if let Some(auc) = report.mean_auc(&setting, spec, UnitSide::Item) {
                push(model, "mean_auc_item", auc);
            }
            if let Some(fraction) = report.convergence_fraction(&setting, spec) {
                push(model, "converged_fraction", fraction);
            }
            for component in bias_components(report, &setting, spec) {
                if let Some(bias) = report.mean_bias(&setting, spec, &component) {
                    push(model, &format!("mean_bias_{component}"), bias);
                }
            }
            for &(side, rule, level) in &rules {
                if let Some((fdp, fnp)) = report.mean_proportions(&setting, spec, side, rule, level)
                {
                    let tag = format!("{}_{}@{level}", side.name(), rule_name(rule));
                    push(model, &format!("mean_fdp_{tag}"), fdp);
                    push(model, &format!("mean_fnp_{tag}"), fnp);
                }
            }
            if spec.null_variant() != spec {
                let (wins, total) = report.dic_wins(&setting, spec);
                if total > 0 {
                    push(model, "dic_wins_vs_null", wins as f64);
                    push(model, "dic_comparisons", total as f64);
                }
            }
        }
    }
    out
}
