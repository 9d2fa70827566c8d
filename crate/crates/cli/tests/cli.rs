//! End-to-end tests of the installed binary: every subcommand is invoked as
//! a child process on real files, and the outputs are checked against the
//! library the binary is built on.

use std::path::{Path, PathBuf};
use std::process::Command;

use preknowledge::io::{
    decisions_csv, detections_csv, load_chains, read_report, save_dataset, REPORT_FILES,
};
use preknowledge::model::UnitSide;
use preknowledge::pipeline::budget_decision;
use preknowledge::rng::RngStream;
use preknowledge::simulation::{generate_dataset, SimSetting};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_preknowledge"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

fn run_err(cmd: &mut Command) -> String {
    let output = cmd.output().unwrap();
    assert!(
        !output.status.success(),
        "command unexpectedly succeeded\nstdout: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    String::from_utf8(output.stderr).unwrap()
}

/// Synthetic response and time files with a real planted signal.
fn smoke_data(dir: &Path, n_persons: usize, n_items: usize, seed: u64) -> (PathBuf, PathBuf) {
    let setting = SimSetting::custom("smoke", n_persons, n_items, 0.2, 0.3);
    let mut rng = RngStream::new(seed, 0);
    let (data, _) = generate_dataset(&setting, &mut rng).unwrap();
    let responses = dir.join("responses.csv");
    let times = dir.join("times.csv");
    save_dataset(&data, &responses, Some(&times)).unwrap();
    (responses, times)
}

/// First float after `prefix` in `text`.
fn float_after(text: &str, prefix: &str) -> f64 {
    let start = text
        .find(prefix)
        .unwrap_or_else(|| panic!("missing '{prefix}' in:\n{text}"))
        + prefix.len();
    let rest = &text[start..];
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || "+-.eE".contains(c)))
        .unwrap_or(rest.len());
    rest[..end].parse().unwrap()
}

#[test]
fn fit_writes_the_full_report_and_decide_reproduces_its_lists() {
    let dir = TempDir::new().unwrap();
    let (responses, times) = smoke_data(dir.path(), 50, 20, 414);
    let out = dir.path().join("run");

    let stdout = run_ok(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses"])
            .arg(&responses)
            .arg("--times")
            .arg(&times)
            .args(["--chains", "2", "--total-iters", "300", "--burn-in", "100"])
            .args(["--seed", "9", "--rhat-threshold", "10", "--out"])
            .arg(&out),
    );
    assert!(stdout.contains("fitted M2 to 50 persons x 20 items"), "{stdout}");

    // Every advertised report file exists, and nothing else sits beside
    // them except the two chain stores.
    for name in REPORT_FILES {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let mut extras: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|entry| entry.unwrap().file_name().into_string().unwrap())
        .filter(|name| !REPORT_FILES.contains(&name.as_str()))
        .collect();
    extras.sort();
    assert_eq!(extras, ["chains", "null_chains"]);

    let report = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.model, "M2");
    assert_eq!((report.n_persons, report.n_items), (50, 20));
    assert_eq!(report.seed, 9);
    assert_eq!(report.null_model.as_deref(), Some("M2-null"));
    assert!(report.null_dic.is_some());
    assert_eq!(report.person_probs.len(), 50);
    assert_eq!(report.decisions.len(), 2);

    // The stores reload into as many chains as were requested.
    assert_eq!(load_chains(&out.join("chains")).unwrap().len(), 2);
    assert_eq!(load_chains(&out.join("null_chains")).unwrap().len(), 2);

    // Re-thresholding the saved probability files at the same budget gives
    // byte-identical decision tables.
    let redone = dir.path().join("redone");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["decide", "--person-probs"])
            .arg(out.join("person_probs.csv"))
            .arg("--item-probs")
            .arg(out.join("item_probs.csv"))
            .args(["--level", "0.05", "--out"])
            .arg(&redone),
    );
    for name in ["decisions.csv", "detections.csv"] {
        assert_eq!(
            std::fs::read(out.join(name)).unwrap(),
            std::fs::read(redone.join(name)).unwrap(),
            "{name} differs between fit and decide"
        );
    }
}

#[test]
fn fixed_seeds_reproduce_report_bytes() {
    let dir = TempDir::new().unwrap();
    let (responses, _) = smoke_data(dir.path(), 30, 10, 77);
    let fit = |out: &Path| {
        run_ok(
            bin()
                .current_dir(dir.path())
                .args(["fit", "--responses"])
                .arg(&responses)
                .args(["--chains", "1", "--total-iters", "150", "--burn-in", "50"])
                .args(["--seed", "3", "--no-null", "--out"])
                .arg(out),
        );
    };
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    fit(&first);
    fit(&second);
    for name in ["report.json", "person_probs.csv", "item_probs.csv", "decisions.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs between identically seeded runs"
        );
    }
    // Without --times the model defaults to the response-only variant.
    let report = read_report(&first.join("report.json")).unwrap();
    assert_eq!(report.model, "M1");
    assert!(report.null_model.is_none());
}

#[test]
fn existing_outputs_are_refused_without_overwrite() {
    let dir = TempDir::new().unwrap();
    let (responses, _) = smoke_data(dir.path(), 20, 8, 12);
    let out = dir.path().join("run");
    let fit_args = |cmd: &mut Command| {
        cmd.current_dir(dir.path())
            .args(["fit", "--responses"])
            .arg(&responses)
            .args(["--chains", "1", "--total-iters", "120", "--burn-in", "40", "--no-null"])
            .arg("--out")
            .arg(&out);
    };
    let mut cmd = bin();
    fit_args(&mut cmd);
    run_ok(&mut cmd);

    let mut again = bin();
    fit_args(&mut again);
    let stderr = run_err(&mut again);
    assert!(stderr.contains("already exists"), "{stderr}");
    assert!(stderr.contains("--overwrite"), "{stderr}");

    let mut forced = bin();
    fit_args(&mut forced);
    run_ok(forced.arg("--overwrite"));
}

#[test]
fn bad_cells_are_rejected_with_their_coordinates() {
    let dir = TempDir::new().unwrap();
    let bad_y = dir.path().join("y.csv");
    std::fs::write(&bad_y, "1,0,1\n0,1,2\n").unwrap();
    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses"])
            .arg(&bad_y)
            .args(["--out", "never"]),
    );
    assert!(stderr.contains("row 2, column 3"), "{stderr}");
    assert!(stderr.contains("expected 0 or 1"), "{stderr}");

    let good_y = dir.path().join("ok.csv");
    std::fs::write(&good_y, "1,0\n0,1\n").unwrap();
    let bad_t = dir.path().join("t.csv");
    std::fs::write(&bad_t, "12,30\n0,45\n").unwrap();
    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses"])
            .arg(&good_y)
            .arg("--times")
            .arg(&bad_t)
            .args(["--out", "never"]),
    );
    assert!(stderr.contains("row 2, column 1"), "{stderr}");
    assert!(stderr.contains("positive"), "{stderr}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override_them() {
    let dir = TempDir::new().unwrap();
    let (responses, _) = smoke_data(dir.path(), 20, 8, 51);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\n\n[fit]\nchains = 1\ntotal_iters = 140\nburn_in = 40\nwith_null = false\n",
    )
    .unwrap();

    let configured = dir.path().join("configured");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--config"])
            .arg(&config)
            .arg("--responses")
            .arg(&responses)
            .arg("--out")
            .arg(&configured),
    );
    let report = read_report(&configured.join("report.json")).unwrap();
    assert_eq!(report.n_chains, 1);
    assert_eq!(report.seed, 5);
    assert!(report.null_model.is_none());

    let overridden = dir.path().join("overridden");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--config"])
            .arg(&config)
            .arg("--responses")
            .arg(&responses)
            .args(["--chains", "2", "--seed", "8", "--out"])
            .arg(&overridden),
    );
    let report = read_report(&overridden.join("report.json")).unwrap();
    assert_eq!(report.n_chains, 2);
    assert_eq!(report.seed, 8);
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[fit]\nchainz = 3\n").unwrap();
    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--config"])
            .arg(&config)
            .args(["--responses", "y.csv", "--out", "never"]),
    );
    assert!(stderr.contains("invalid config file"), "{stderr}");

    let probs = dir.path().join("p.csv");
    std::fs::write(&probs, "person,probability\n1,0.9\n2,0.1\n").unwrap();
    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["decide", "--person-probs"])
            .arg(&probs)
            .args(["--level", "1.5", "--out", "never"]),
    );
    assert!(stderr.contains("strictly inside (0, 1)"), "{stderr}");

    let stderr = run_err(bin().current_dir(dir.path()).args(["decide", "--out", "never"]));
    assert!(stderr.contains("nothing to decide"), "{stderr}");

    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses", "y.csv", "--model", "m2", "--out", "never"]),
    );
    assert!(stderr.contains("uses response times"), "{stderr}");

    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses", "y.csv", "--model", "m9", "--out", "never"]),
    );
    assert!(stderr.contains("unknown model"), "{stderr}");
}

#[test]
fn output_directory_falls_back_to_the_environment_variable() {
    let dir = TempDir::new().unwrap();
    let probs = dir.path().join("p.csv");
    std::fs::write(&probs, "person,probability\n1,0.9\n2,0.2\n").unwrap();

    let env_out = dir.path().join("from_env");
    run_ok(
        bin()
            .current_dir(dir.path())
            .env("PREKNOWLEDGE_OUT_DIR", &env_out)
            .args(["decide", "--person-probs"])
            .arg(&probs),
    );
    assert!(env_out.join("decisions.csv").is_file());

    // A config file out_dir outranks the environment.
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "out_dir = \"from_config\"\n").unwrap();
    run_ok(
        bin()
            .current_dir(dir.path())
            .env("PREKNOWLEDGE_OUT_DIR", &env_out)
            .args(["decide", "--config"])
            .arg(&config)
            .arg("--person-probs")
            .arg(&probs),
    );
    assert!(dir.path().join("from_config").join("decisions.csv").is_file());
}

#[test]
fn decide_matches_the_decision_rules_on_pinned_probabilities() {
    let dir = TempDir::new().unwrap();
    let probs = dir.path().join("p.csv");
    std::fs::write(&probs, "person,probability\n1,0.99\n2,0.95\n3,0.5\n").unwrap();
    let out = dir.path().join("out");
    let stdout = run_ok(
        bin()
            .current_dir(dir.path())
            .args(["decide", "--person-probs"])
            .arg(&probs)
            .args(["--level", "0.05", "--out"])
            .arg(&out),
    );
    assert!(stdout.contains("2 flagged"), "{stdout}");

    let expected = budget_decision(UnitSide::Person, &[0.99, 0.95, 0.5], 0.05).unwrap();
    assert_eq!(expected.zeta, 0.5);
    assert_eq!(expected.n_flagged, 2);
    assert_eq!(expected.flagged, [1, 2]);
    let rows = [expected];
    assert_eq!(
        std::fs::read_to_string(out.join("decisions.csv")).unwrap(),
        decisions_csv(&rows)
    );
    assert_eq!(
        std::fs::read_to_string(out.join("detections.csv")).unwrap(),
        detections_csv(&rows)
    );
}

#[test]
fn simulate_writes_study_tables_with_exact_label_counts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("study");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["simulate", "--setting", "desk", "--reps", "1"])
            .args(["--total-iters", "40", "--burn-in", "15"])
            .args(["--warm-start", "truth", "--seed", "3", "--out"])
            .arg(&out),
    );
    for name in [
        "study_report.json",
        "study_reps.csv",
        "study_models.csv",
        "study_bias.csv",
        "study_decisions.csv",
        "study_summary.csv",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    // The desk scenario is 500 x 100 with 20% flagged persons and 50%
    // compromised items, as exact counts.
    let reps = std::fs::read_to_string(out.join("study_reps.csv")).unwrap();
    assert!(reps.lines().nth(1).unwrap().starts_with("desk,0,100,50,"), "{reps}");
    let models = std::fs::read_to_string(out.join("study_models.csv")).unwrap();
    assert_eq!(models.lines().count(), 5, "{models}");

    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["simulate", "--setting", "desk", "--reps", "1", "--out"])
            .arg(&out),
    );
    assert!(stderr.contains("--overwrite"), "{stderr}");
}

#[test]
fn the_first_benchmark_scenario_generates_its_full_sized_dataset() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("study");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["simulate", "--setting", "s1", "--reps", "1", "--no-nulls"])
            .args(["--total-iters", "24", "--burn-in", "8"])
            .args(["--warm-start", "truth", "--seed", "2", "--out"])
            .arg(&out),
    );
    // S1 is 2000 persons x 200 items with 10% / 25% contamination, so the
    // exact-count generator must flag 200 persons and 50 items.
    let reps = std::fs::read_to_string(out.join("study_reps.csv")).unwrap();
    assert!(reps.lines().nth(1).unwrap().starts_with("s1,0,200,50,"), "{reps}");
}

#[test]
fn diagnose_recomputes_what_the_report_recorded() {
    let dir = TempDir::new().unwrap();
    let (responses, times) = smoke_data(dir.path(), 40, 12, 90);
    let out = dir.path().join("run");
    run_ok(
        bin()
            .current_dir(dir.path())
            .args(["fit", "--responses"])
            .arg(&responses)
            .arg("--times")
            .arg(&times)
            .args(["--chains", "2", "--total-iters", "200", "--burn-in", "80"])
            .args(["--seed", "6", "--rhat-threshold", "10", "--no-null", "--out"])
            .arg(&out),
    );
    let report = read_report(&out.join("report.json")).unwrap();

    let stdout = run_ok(
        bin()
            .current_dir(dir.path())
            .args(["diagnose", "--chains"])
            .arg(out.join("chains"))
            .args(["--rhat-threshold", "10", "--responses"])
            .arg(&responses)
            .arg("--times")
            .arg(&times),
    );
    // The reloaded chains carry their draws bit for bit, so diagnose lands
    // on exactly the numbers the fit reported.
    for diag in &report.chains {
        let printed = float_after(&stdout, &format!("chain {}: split rhat ", diag.chain));
        assert_eq!(printed, diag.split_rhat);
    }
    assert!(stdout.contains("cross-chain rhat"), "{stdout}");
    // Both chains pass the loose convergence gate, so the report pooled
    // them all, just like diagnose does.
    assert_eq!(float_after(&stdout, "DIC "), report.dic.as_ref().unwrap().dic);

    // Without data files there is no DIC, but convergence still prints.
    let stdout = run_ok(
        bin()
            .current_dir(dir.path())
            .args(["diagnose", "--chains"])
            .arg(out.join("chains")),
    );
    assert!(stdout.contains("split rhat"), "{stdout}");
    assert!(stdout.contains("no DIC"), "{stdout}");
    assert!(!stdout.contains("DIC "), "{stdout}");

    // A time model store cannot be scored against response-only data.
    let stderr = run_err(
        bin()
            .current_dir(dir.path())
            .args(["diagnose", "--chains"])
            .arg(out.join("chains"))
            .arg("--responses")
            .arg(&responses),
    );
    assert!(stderr.contains("--times"), "{stderr}");
}
