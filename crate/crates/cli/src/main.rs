//! Command line front end for the preknowledge detection engine.
//!
//! Four subcommands cover the workflow: `fit` estimates a model on response
//! (and optionally response-time) files and writes a report directory plus
//! the raw chains; `decide` re-thresholds saved posterior probabilities
//! under new error budgets without refitting; `diagnose` summarizes the
//! convergence of a saved chain store; `simulate` runs the synthetic
//! benchmark study. Options resolve in the order command line flag, then
//! TOML config file, then built-in default, and the output directory
//! additionally falls back to the PREKNOWLEDGE_OUT_DIR environment
//! variable.

mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use preknowledge::diagnostics::{gelman_rubin, split_rhat};
use preknowledge::io::{
    decisions_csv, detections_csv, load_chains, load_dataset, read_probs, save_chains,
    store_paths, write_report, DecisionSummary, REPORT_FILES,
};
use preknowledge::model::{ModelSpec, UnitSide};
use preknowledge::pipeline::{
    budget_decision, cost_decision, fit_data, pool_chains, pooled_dic, FitOptions,
};
use preknowledge::sampler::ChainOutput;
use preknowledge::simulation::{run_study, SimSetting, StudyConfig, WarmStart};

use config::FileConfig;

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "PREKNOWLEDGE_OUT_DIR";

/// Detect test takers with item preknowledge, and the compromised items
/// they benefited from, by Bayesian mixture modeling of item responses and
/// response times.
#[derive(Parser)]
#[command(name = "preknowledge", version)]
struct Cli {
    /// TOML configuration file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to response data and write the report plus the chains
    Fit(FitArgs),
    /// Re-threshold saved posterior probabilities under new budgets
    Decide(DecideArgs),
    /// Summarize the convergence of a saved chain store
    Diagnose(DiagnoseArgs),
    /// Benchmark the pipeline on synthetic data with known labels
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Response matrix: comma-separated 0/1 cells, one row per person
    #[arg(long, value_name = "FILE")]
    responses: PathBuf,

    /// Response times in seconds, same shape; empty cells mean missing
    #[arg(long, value_name = "FILE")]
    times: Option<PathBuf>,

    /// Model variant: m1, m1-null, m2, or m2-null (default m2 with times,
    /// m1 without)
    #[arg(long)]
    model: Option<String>,

    /// Number of independent chains
    #[arg(long)]
    chains: Option<usize>,

    /// Sweeps per chain, burn-in included
    #[arg(long)]
    total_iters: Option<usize>,

    /// Sweeps discarded from the front of each chain
    #[arg(long)]
    burn_in: Option<usize>,

    /// Error budget for the decision rules; repeat the flag for several
    #[arg(long = "level", value_name = "RHO")]
    levels: Vec<f64>,

    /// Fixed probability cutoff derived from misclassification costs
    #[arg(long, value_name = "CUTOFF")]
    cost_threshold: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Split-chain scale reduction at or below this counts as converged
    #[arg(long)]
    rhat_threshold: Option<f64>,

    /// Emit decision lists even when no chain converged
    #[arg(long)]
    force: bool,

    /// Skip the no-advantage reference fit and its DIC comparison
    #[arg(long)]
    no_null: bool,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace output files left by an earlier run
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct DecideArgs {
    /// person_probs.csv from an earlier fit
    #[arg(long, value_name = "FILE")]
    person_probs: Option<PathBuf>,

    /// item_probs.csv from an earlier fit
    #[arg(long, value_name = "FILE")]
    item_probs: Option<PathBuf>,

    /// Error budget for the decision rules; repeat the flag for several
    #[arg(long = "level", value_name = "RHO")]
    levels: Vec<f64>,

    /// Fixed probability cutoff derived from misclassification costs
    #[arg(long, value_name = "CUTOFF")]
    cost_threshold: Option<f64>,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace output files left by an earlier run
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Chain store directory written by fit
    #[arg(long, value_name = "DIR")]
    chains: PathBuf,

    /// Response file the chains were fit on; enables the DIC summary
    #[arg(long, value_name = "FILE")]
    responses: Option<PathBuf>,

    /// Matching response-time file, needed when the chains use a time model
    #[arg(long, value_name = "FILE")]
    times: Option<PathBuf>,

    /// Split-chain scale reduction at or below this counts as converged
    #[arg(long)]
    rhat_threshold: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario preset (s1, s2, s3, s4, or desk); repeat for several
    #[arg(long = "setting", value_name = "NAME")]
    settings: Vec<String>,

    /// Replications per scenario
    #[arg(long)]
    reps: Option<usize>,

    /// Sweeps per chain, burn-in included
    #[arg(long)]
    total_iters: Option<usize>,

    /// Sweeps discarded from the front of each chain
    #[arg(long)]
    burn_in: Option<usize>,

    /// Error budget for the decision rules; repeat the flag for several
    #[arg(long = "level", value_name = "RHO")]
    levels: Vec<f64>,

    /// Where chains start: prior or truth
    #[arg(long, value_name = "MODE")]
    warm_start: Option<String>,

    /// Fit only the advantage variants, skipping the DIC references
    #[arg(long)]
    no_nulls: bool,

    /// Split-chain scale reduction at or below this counts as converged
    #[arg(long)]
    rhat_threshold: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace output files left by an earlier run
    #[arg(long)]
    overwrite: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(args) => run_fit(args, &file),
        Command::Decide(args) => run_decide(args, &file),
        Command::Diagnose(args) => run_diagnose(args),
        Command::Simulate(args) => run_simulate(args, &file),
    }
}

/// Flag beats config; an empty repeatable flag means "not given".
fn pick_levels(flag: &[f64], file: Option<&[f64]>) -> Option<Vec<f64>> {
    if !flag.is_empty() {
        Some(flag.to_vec())
    } else {
        file.map(<[f64]>::to_vec)
    }
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            bail!("error budgets must lie strictly inside (0, 1), got {level}");
        }
    }
    Ok(())
}

fn resolve_out_dir(flag: Option<PathBuf>, file: &FileConfig) -> PathBuf {
    flag.or_else(|| file.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn refuse_existing(planned: &[PathBuf], overwrite: bool) -> Result<()> {
    if overwrite {
        return Ok(());
    }
    for path in planned {
        if path.exists() {
            bail!(
                "{} already exists; pass --overwrite to replace earlier output",
                path.display()
            );
        }
    }
    Ok(())
}

fn describe_decision(row: &DecisionSummary) -> String {
    format!(
        "{} {} at {}: {} flagged (threshold {:.4}, local fdr {:.4}, local fnr {:.4})",
        row.side.name(),
        row.rule.name(),
        row.level,
        row.n_flagged,
        row.zeta,
        row.fdr,
        row.fnr
    )
}

fn run_fit(args: FitArgs, file: &FileConfig) -> Result<()> {
    let section = &file.fit;
    let model = match args.model.as_deref().or(section.model.as_deref()) {
        Some(name) => ModelSpec::parse(name)?,
        None if args.times.is_some() => ModelSpec::M2,
        None => ModelSpec::M1,
    };
    if model.uses_times() && args.times.is_none() {
        bail!(
            "model {} uses response times; pass --times or pick a response-only model",
            model.name()
        );
    }

    let mut options = FitOptions::new(model);
    options.n_chains = args.chains.or(section.chains).unwrap_or(options.n_chains);
    options.sampler.total_iters = args
        .total_iters
        .or(section.total_iters)
        .unwrap_or(options.sampler.total_iters);
    options.sampler.burn_in = args
        .burn_in
        .or(section.burn_in)
        .unwrap_or(options.sampler.burn_in);
    if let Some(levels) = pick_levels(&args.levels, section.levels.as_deref()) {
        options.levels = levels;
    }
    options.cost_threshold = args.cost_threshold.or(section.cost_threshold);
    options.seed = args.seed.or(file.seed).unwrap_or(options.seed);
    options.rhat_threshold = args
        .rhat_threshold
        .or(section.rhat_threshold)
        .unwrap_or(options.rhat_threshold);
    options.force = args.force;
    options.with_null = !args.no_null && section.with_null.unwrap_or(true);

    let out = resolve_out_dir(args.out, file);
    let runs_null = options.with_null && model.null_variant() != model;
    let mut planned: Vec<PathBuf> = REPORT_FILES.iter().map(|name| out.join(name)).collect();
    planned.extend(store_paths(&out.join("chains"), options.n_chains));
    if runs_null {
        planned.extend(store_paths(&out.join("null_chains"), options.n_chains));
    }
    refuse_existing(&planned, args.overwrite)?;

    let data = load_dataset(&args.responses, args.times.as_deref())?;
    let outcome = fit_data(&data, &options)?;
    let report = &outcome.report;

    write_report(&out, report, &outcome.chains)?;
    save_chains(&out.join("chains"), &outcome.chains)?;
    if !outcome.null_chains.is_empty() {
        save_chains(&out.join("null_chains"), &outcome.null_chains)?;
    }

    println!(
        "fitted {} to {} persons x {} items: {} of {} chains converged, {} draws pooled",
        report.model,
        report.n_persons,
        report.n_items,
        report.n_converged,
        report.n_chains,
        report.pooled_draws
    );
    if let Some(dic) = &report.dic {
        match (&report.null_model, &report.null_dic) {
            (Some(null_model), Some(null_dic)) => println!(
                "DIC {:.1} for {} against {:.1} for {null_model}",
                dic.dic, report.model, null_dic.dic
            ),
            _ => println!("DIC {:.1}", dic.dic),
        }
    }
    if !report.converged && report.decisions.is_empty() {
        eprintln!(
            "warning: no chain converged, so decision lists were suppressed (--force emits them anyway)"
        );
    }
    for row in &report.decisions {
        println!("{}", describe_decision(row));
    }
    println!("wrote report files to {}", out.display());
    Ok(())
}

fn run_decide(args: DecideArgs, file: &FileConfig) -> Result<()> {
    let section = &file.decide;
    if args.person_probs.is_none() && args.item_probs.is_none() {
        bail!("nothing to decide: pass --person-probs and/or --item-probs");
    }
    let levels =
        pick_levels(&args.levels, section.levels.as_deref()).unwrap_or_else(|| vec![0.05]);
    validate_levels(&levels)?;
    let cost_threshold = args.cost_threshold.or(section.cost_threshold);
    if let Some(cutoff) = cost_threshold {
        if !(0.0..=1.0).contains(&cutoff) {
            bail!("cost cutoff must lie in [0, 1], got {cutoff}");
        }
    }

    let mut sides: Vec<(UnitSide, Vec<f64>)> = Vec::new();
    if let Some(path) = &args.person_probs {
        sides.push((UnitSide::Person, read_probs(path)?));
    }
    if let Some(path) = &args.item_probs {
        sides.push((UnitSide::Item, read_probs(path)?));
    }

    let mut rows: Vec<DecisionSummary> = Vec::new();
    for &level in &levels {
        for (side, probs) in &sides {
            rows.push(budget_decision(*side, probs, level)?);
        }
    }
    if let Some(cutoff) = cost_threshold {
        for (side, probs) in &sides {
            rows.push(cost_decision(*side, probs, cutoff)?);
        }
    }

    let out = resolve_out_dir(args.out, file);
    let planned = [out.join("decisions.csv"), out.join("detections.csv")];
    refuse_existing(&planned, args.overwrite)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(&planned[0], decisions_csv(&rows))?;
    std::fs::write(&planned[1], detections_csv(&rows))?;

    for row in &rows {
        println!("{}", describe_decision(row));
    }
    println!("wrote decisions.csv and detections.csv to {}", out.display());
    Ok(())
}

fn run_diagnose(args: DiagnoseArgs) -> Result<()> {
    let chains = load_chains(&args.chains)?;
    let first = &chains[0];
    println!(
        "chain store: {} on {} persons x {} items, {} chains of {} sweeps ({} burn-in)",
        first.spec.name(),
        first.draws.n_persons,
        first.draws.n_items,
        chains.len(),
        first.total_iters,
        first.burn_in
    );

    let threshold = args.rhat_threshold.unwrap_or(1.1);
    let mut traces = Vec::with_capacity(chains.len());
    for (k, chain) in chains.iter().enumerate() {
        let retained = chain.retained_deviance();
        let rhat = split_rhat(retained)?;
        let verdict = if rhat <= threshold { "converged" } else { "NOT converged" };
        let mean = retained.iter().sum::<f64>() / retained.len() as f64;
        println!("chain {k}: split rhat {rhat} ({verdict}), mean deviance {mean}");
        traces.push(retained.to_vec());
    }
    if traces.len() > 1 {
        println!("cross-chain rhat on the deviance: {}", gelman_rubin(&traces)?);
    }

    let Some(responses) = &args.responses else {
        println!("no data files given, so no DIC; pass --responses (and --times for a time model)");
        return Ok(());
    };
    let data = load_dataset(responses, args.times.as_deref())?;
    if data.n_persons() != first.draws.n_persons || data.n_items() != first.draws.n_items {
        bail!(
            "data is {} persons x {} items but the chains were fit on {} x {}",
            data.n_persons(),
            data.n_items(),
            first.draws.n_persons,
            first.draws.n_items
        );
    }
    if first.spec.uses_times() && !data.has_times() {
        bail!(
            "these chains were fit with {}, which needs the time file; pass --times",
            first.spec.name()
        );
    }
    let refs: Vec<&ChainOutput> = chains.iter().collect();
    let pool = pool_chains(&refs);
    let dic = pooled_dic(&data, first.spec, &pool)?;
    println!(
        "DIC {} pooled over all {} stored chains (mean deviance {}, effective parameters {})",
        dic.dic,
        chains.len(),
        dic.dbar,
        dic.p_eff
    );
    Ok(())
}

fn run_simulate(args: SimulateArgs, file: &FileConfig) -> Result<()> {
    let section = &file.simulate;
    let names: Vec<String> = if !args.settings.is_empty() {
        args.settings.clone()
    } else {
        section
            .settings
            .clone()
            .unwrap_or_else(|| vec!["desk".to_string()])
    };
    let settings = names
        .iter()
        .map(|name| SimSetting::preset(name))
        .collect::<preknowledge::Result<Vec<_>>>()?;

    let mut config = StudyConfig::default();
    config.n_reps = args.reps.or(section.reps).unwrap_or(config.n_reps);
    config.sampler.total_iters = args
        .total_iters
        .or(section.total_iters)
        .unwrap_or(config.sampler.total_iters);
    config.sampler.burn_in = args
        .burn_in
        .or(section.burn_in)
        .unwrap_or(config.sampler.burn_in);
    if let Some(levels) = pick_levels(&args.levels, section.levels.as_deref()) {
        config.levels = levels;
    }
    validate_levels(&config.levels)?;
    if let Some(mode) = args.warm_start.as_deref().or(section.warm_start.as_deref()) {
        config.warm_start = parse_warm_start(mode)?;
    }
    config.fit_nulls = !args.no_nulls && section.fit_nulls.unwrap_or(true);
    config.rhat_threshold = args
        .rhat_threshold
        .or(section.rhat_threshold)
        .unwrap_or(config.rhat_threshold);
    config.seed = args.seed.or(file.seed).unwrap_or(config.seed);

    let out = resolve_out_dir(args.out, file);
    let planned: Vec<PathBuf> = tables::STUDY_FILES.iter().map(|name| out.join(name)).collect();
    refuse_existing(&planned, args.overwrite)?;

    let report = run_study(&settings, &config)?;
    tables::write_study(&out, &report)?;

    for setting in &settings {
        let reps = if config.n_reps == 1 { "replication" } else { "replications" };
        println!(
            "setting {}: {} persons x {} items, {} {reps}",
            setting.name, setting.n_persons, setting.n_items, config.n_reps
        );
        if let Some(auc) = report.mean_baseline_auc(&setting.name) {
            println!("  total-score baseline: mean person auc {auc:.3}");
        }
        for spec in [ModelSpec::M1, ModelSpec::M1Null, ModelSpec::M2, ModelSpec::M2Null] {
            let Some(person) = report.mean_auc(&setting.name, spec, UnitSide::Person) else {
                continue;
            };
            let item = report.mean_auc(&setting.name, spec, UnitSide::Item).unwrap_or(f64::NAN);
            let mut line = format!(
                "  {}: mean person auc {person:.3}, mean item auc {item:.3}",
                spec.name()
            );
            let (wins, total) = report.dic_wins(&setting.name, spec);
            if spec.null_variant() != spec && total > 0 {
                line.push_str(&format!(
                    ", dic beats {} in {wins}/{total} reps",
                    spec.null_variant().name()
                ));
            }
            println!("{line}");
        }
    }
    println!("wrote study tables to {}", out.display());
    Ok(())
}

fn parse_warm_start(mode: &str) -> Result<WarmStart> {
    match mode.to_ascii_lowercase().as_str() {
        "prior" => Ok(WarmStart::Prior),
        "truth" => Ok(WarmStart::Truth),
        other => bail!("unknown warm start '{other}', expected prior or truth"),
    }
}
