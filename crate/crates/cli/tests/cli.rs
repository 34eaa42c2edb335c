//! End-to-end interface tests. Each test drives `run` with an argument
//! vector and inspects the exit code plus the file named by --out, so the
//! whole surface is covered without spawning processes.

use std::fs;
use std::path::Path;

use serde_json::Value;
use sscover::{ExperimentConfig, Instance};
use sscover_cli::run;
use tempfile::TempDir;

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["sscover"];
    full.extend_from_slice(args);
    run(full)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates a small coverage instance into `dir` and returns its path.
fn gen_fixture(dir: &TempDir, seed: &str) -> std::path::PathBuf {
    let path = dir.path().join(format!("inst-{seed}.json"));
    let code = cli(&[
        "--seed",
        seed,
        "--out",
        path.to_str().unwrap(),
        "gen",
        "--family",
        "coverage",
        "--items",
        "4",
        "--states",
        "2",
        "--elements",
        "6",
    ]);
    assert_eq!(code, 0);
    path
}

#[test]
fn gen_emits_a_valid_deterministic_instance() {
    let dir = TempDir::new().unwrap();
    let a = gen_fixture(&dir, "3");
    let inst: Instance = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert!(inst.validate().is_empty());
    assert_eq!(inst.n, 4);

    let b = dir.path().join("again.json");
    let code = cli(&[
        "--seed",
        "3",
        "--out",
        b.to_str().unwrap(),
        "gen",
        "--family",
        "coverage",
        "--items",
        "4",
        "--states",
        "2",
        "--elements",
        "6",
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        fs::read_to_string(&a).unwrap(),
        fs::read_to_string(&b).unwrap(),
        "same seed and flags must produce byte-identical output"
    );
}

#[test]
fn gen_covers_every_family() {
    let dir = TempDir::new().unwrap();
    for family in ["coverage", "truncated-additive", "classical-set-cover"] {
        let path = dir.path().join(format!("{family}.json"));
        let code = cli(&[
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
            "gen",
            "--family",
            family,
        ]);
        assert_eq!(code, 0, "family {family}");
        let inst: Instance = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(inst.validate().is_empty(), "family {family}");
    }
}

#[test]
fn solve_reports_costs_and_optimal_never_loses() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let greedy_out = dir.path().join("greedy.json");
    let opt_out = dir.path().join("opt.json");

    assert_eq!(
        cli(&[
            "--out",
            greedy_out.to_str().unwrap(),
            "solve",
            inst.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "--out",
            opt_out.to_str().unwrap(),
            "solve",
            inst.to_str().unwrap(),
            "--policy",
            "optimal",
        ]),
        0
    );

    let greedy = read_json(&greedy_out);
    let opt = read_json(&opt_out);
    assert_eq!(greedy["policy"], "greedy");
    assert_eq!(greedy["selector"], "exact");
    assert_eq!(opt["policy"], "optimal");
    let gc = greedy["expected_cost"].as_f64().unwrap();
    let oc = opt["expected_cost"].as_f64().unwrap();
    assert!(oc <= gc + 1e-9 * gc.abs().max(1.0));
    assert!(greedy.get("tree").is_none());
}

#[test]
fn solve_emit_tree_includes_every_node() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("tree.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "solve",
            inst.to_str().unwrap(),
            "--emit-tree",
        ]),
        0
    );
    let v = read_json(&out);
    let count = v["tree_nodes"].as_u64().unwrap() as usize;
    assert_eq!(v["tree"]["nodes"].as_array().unwrap().len(), count);
    assert!(count >= 1);
}

#[test]
fn solve_accepts_the_adversarial_selector() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let exact_out = dir.path().join("exact.json");
    let adv_out = dir.path().join("adv.json");
    assert_eq!(
        cli(&[
            "--out",
            exact_out.to_str().unwrap(),
            "solve",
            inst.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "--out",
            adv_out.to_str().unwrap(),
            "solve",
            inst.to_str().unwrap(),
            "--selector",
            "adversarial",
            "--alpha",
            "2.0",
        ]),
        0
    );
    let exact = read_json(&exact_out)["expected_cost"].as_f64().unwrap();
    let adv = read_json(&adv_out)["expected_cost"].as_f64().unwrap();
    assert_eq!(
        read_json(&adv_out)["selector"],
        "adversarial(alpha=2)",
        "selector description round-trips"
    );
    assert!(
        adv >= exact - 1e-9 * exact.abs().max(1.0),
        "the worst permitted choice cannot beat the exact one"
    );
}

#[test]
fn eval_monte_carlo_tracks_the_exact_cost() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("eval.json");
    assert_eq!(
        cli(&[
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
            "eval",
            inst.to_str().unwrap(),
            "--trials",
            "20000",
        ]),
        0
    );
    let v = read_json(&out);
    let exact = v["exact"].as_f64().unwrap();
    let mean = v["mc_mean"].as_f64().unwrap();
    let stderr = v["mc_stderr"].as_f64().unwrap();
    assert!(stderr > 0.0);
    assert!(
        (mean - exact).abs() <= 6.0 * stderr,
        "mean {mean} vs exact {exact} at stderr {stderr}"
    );
}

#[test]
fn eval_trials_zero_skips_sampling() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("eval.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "eval",
            inst.to_str().unwrap(),
            "--trials",
            "0",
        ]),
        0
    );
    let v = read_json(&out);
    assert!(v["exact"].as_f64().unwrap() > 0.0);
    assert!(v.get("mc_mean").is_none());
    assert!(v.get("mc_stderr").is_none());
}

#[test]
fn verify_passes_and_lists_every_claim() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("verify.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            inst.to_str().unwrap(),
        ]),
        0
    );
    let v = read_json(&out);
    assert_eq!(v["pass"], true);
    let lemmas = v["lemmas"].as_array().unwrap();
    assert_eq!(lemmas.len(), 7);
    for l in lemmas {
        assert_eq!(l["pass"], true, "claim {} failed", l["lemma"]);
    }
    for audit in [
        "audit_node_revenue",
        "audit_hybrid_agreement",
        "audit_gap_telescoping",
    ] {
        assert_eq!(v[audit]["pass"], true, "{audit} failed");
    }
}

#[test]
fn verify_adversarial_alpha_passes() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("verify.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            inst.to_str().unwrap(),
            "--alpha",
            "2.0",
        ]),
        0
    );
    assert_eq!(read_json(&out)["alpha"], 2.0);
}

#[test]
fn verify_single_lemma_reports_checks() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let out = dir.path().join("t1.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            inst.to_str().unwrap(),
            "--lemma",
            "t1",
        ]),
        0
    );
    let v = read_json(&out);
    assert_eq!(v["lemma"], "T1");
    assert_eq!(v["pass"], true);
    assert!(!v["checks"].as_array().unwrap().is_empty());
}

#[test]
fn repro_worked_example_matches_pins() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("we.json");
    assert_eq!(
        cli(&["--out", out.to_str().unwrap(), "repro", "worked-example"]),
        0
    );
    let v = read_json(&out);
    assert_eq!(v["q"], 10.0);
    assert_eq!(v["eta"], 1.0);
    assert_eq!(
        v["epsilons"].as_array().unwrap(),
        &[Value::from(1.0), 0.0.into(), 2.0.into(), 7.0.into()]
    );
}

#[test]
fn repro_charging_counterexample_matches_pins() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cc.json");
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "repro",
            "charging-counterexample",
        ]),
        0
    );
    let v = read_json(&out);
    assert_eq!(v["lhs"], 6);
    assert_eq!(v["rhs"], 2);
    assert_eq!(v["identity_holds"], false);
}

#[test]
fn report_emits_json_rows_and_csv_table() {
    let dir = TempDir::new().unwrap();
    let json_out = dir.path().join("report.json");
    let csv_out = dir.path().join("report.csv");
    assert_eq!(
        cli(&[
            "--seed",
            "1",
            "--out",
            json_out.to_str().unwrap(),
            "report",
            "--count",
            "4",
            "--max-n",
            "4",
            "--max-k",
            "2",
        ]),
        0
    );
    let v = read_json(&json_out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["summary"]["errors"], 0);

    assert_eq!(
        cli(&[
            "--seed",
            "1",
            "--format",
            "csv",
            "--out",
            csv_out.to_str().unwrap(),
            "report",
            "--count",
            "4",
            "--max-n",
            "4",
            "--max-k",
            "2",
        ]),
        0
    );
    let text = fs::read_to_string(&csv_out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("index,family,n,k,q"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn report_accepts_a_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("report.json");
    let cfg = ExperimentConfig {
        count: 3,
        seed: 11,
        max_n: 3,
        max_k: 2,
        alpha: 1.0,
        tolerance: 1e-9,
        ..ExperimentConfig::default()
    };
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(
        cli(&[
            "--out",
            out.to_str().unwrap(),
            "report",
            "--config",
            cfg_path.to_str().unwrap(),
        ]),
        0
    );
    let v = read_json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["seed"], 11);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    let missing = dir.path().join("missing.json");

    // Nonexistent instance file.
    assert_eq!(cli(&["solve", missing.to_str().unwrap()]), 2);
    // Unparseable instance file.
    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(cli(&["solve", garbled.to_str().unwrap()]), 2);
    // csv outside report.
    assert_eq!(cli(&["--format", "csv", "gen"]), 2);
    // Adversarial selector without alpha, and alpha without the selector.
    assert_eq!(
        cli(&["solve", inst.to_str().unwrap(), "--selector", "adversarial"]),
        2
    );
    assert_eq!(cli(&["solve", inst.to_str().unwrap(), "--alpha", "2.0"]), 2);
    // Selector flags on the optimal policy.
    assert_eq!(
        cli(&[
            "eval",
            inst.to_str().unwrap(),
            "--policy",
            "optimal",
            "--alpha",
            "2.0",
        ]),
        2
    );
    // Verification factor below 1.
    assert_eq!(
        cli(&["verify", inst.to_str().unwrap(), "--alpha", "0.5"]),
        2
    );
    // Unknown lemma name.
    assert_eq!(
        cli(&["verify", inst.to_str().unwrap(), "--lemma", "l9"]),
        2
    );
    // Unknown subcommand and bad flag value.
    assert_eq!(cli(&["bogus"]), 2);
    assert_eq!(cli(&["gen", "--family", "bogus"]), 2);
    // Degenerate generator shape.
    assert_eq!(cli(&["gen", "--items", "0"]), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["solve", "--help"]), 0);
}

#[test]
fn budget_cap_is_honored() {
    let dir = TempDir::new().unwrap();
    let inst = gen_fixture(&dir, "3");
    // A two-node budget cannot hold the greedy tree for this instance.
    assert_eq!(
        cli(&["--budget", "2", "solve", inst.to_str().unwrap()]),
        2
    );
    // The default budget solves it fine.
    assert_eq!(cli(&["solve", inst.to_str().unwrap()]), 0);
}

#[test]
fn instance_files_round_trip_through_solve() {
    // A generated file is exactly what solve expects; a second round trip
    // through serde changes nothing.
    let dir = TempDir::new().unwrap();
    let path = gen_fixture(&dir, "17");
    let text = fs::read_to_string(&path).unwrap();
    let inst: Instance = serde_json::from_str(&text).unwrap();
    let rewritten = serde_json::to_string_pretty(&inst).unwrap();
    let again: Instance = serde_json::from_str(&rewritten).unwrap();
    assert_eq!(
        serde_json::to_string(&inst).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}
