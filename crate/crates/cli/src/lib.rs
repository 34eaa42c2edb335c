//! Command-line front end for the sscover library: generate instances,
//! build policies, evaluate expected costs, check the accounting identities
//! and the approximation bound, rebuild frozen reference scenarios, and
//! sweep generated corpora into tabular reports.
//!
//! The entry point is [`run`], which parses arguments and returns the
//! process exit code, so integration tests can drive the full interface
//! in-process instead of spawning binaries. Exit codes: 0 on success, 1
//! when a verification or reproduction check fails, 2 on configuration or
//! IO errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sscover::{
    expected_cost_exact, expected_cost_mc, gen_instance, materialize_tree,
    reproduce_charging_counterexample, reproduce_worked_example, run_experiment, verify_instance,
    Budget, Error, ExperimentConfig, GeneratorConfig, GeneratorKind, GreedyPolicy, Instance,
    Lemma, OptimalPolicy, Policy, Result, Selector, TreeExport, Verifier,
};

#[derive(Parser)]
#[command(
    name = "sscover",
    version,
    about = "Stochastic submodular cover: generate, solve, evaluate, verify"
)]
struct Cli {
    /// RNG seed for generation and Monte Carlo draws.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Uniform cap on realization, lattice, and tree-node counts.
    #[arg(long, global = true)]
    budget: Option<usize>,

    /// Relative tolerance for equality and inequality checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,

    /// Output encoding; csv is only defined for the report subcommand.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random coverable instance and emit it as JSON.
    Gen(GenArgs),
    /// Build a policy for an instance file and report its expected cost.
    Solve(SolveArgs),
    /// Evaluate a policy's expected cost exactly and by Monte Carlo.
    Eval(EvalArgs),
    /// Check the revenue identities and the approximation bound.
    Verify(VerifyArgs),
    /// Rebuild a frozen reference scenario and compare it to pinned values.
    Repro(ReproArgs),
    /// Generate a corpus, verify every instance, and tabulate the results.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Instance family.
    #[arg(long, value_enum, default_value_t = Family::Coverage)]
    family: Family,

    /// Number of items.
    #[arg(long, default_value_t = 4)]
    items: usize,

    /// States per item; classical-set-cover always uses 1.
    #[arg(long, default_value_t = 2)]
    states: usize,

    /// Ground elements (coverage families).
    #[arg(long, default_value_t = 6)]
    elements: usize,

    /// Item cost range, low then high.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"], default_values_t = [0.5, 2.0])]
    cost_range: Vec<f64>,

    /// Probability that a ground element lands in a given cover set.
    #[arg(long, default_value_t = 0.4)]
    density: f64,

    /// Draw integer utilities; pass false for real-valued gains.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    integer: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Coverage,
    TruncatedAdditive,
    ClassicalSetCover,
}

impl From<Family> for GeneratorKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Coverage => GeneratorKind::Coverage,
            Family::TruncatedAdditive => GeneratorKind::TruncatedAdditive,
            Family::ClassicalSetCover => GeneratorKind::ClassicalSetCover,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Greedy,
    Optimal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectorKind {
    Exact,
    Adversarial,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,

    /// Which policy to build.
    #[arg(long, value_enum, default_value_t = PolicyKind::Greedy)]
    policy: PolicyKind,

    /// Greedy item selector.
    #[arg(long, value_enum, default_value_t = SelectorKind::Exact)]
    selector: SelectorKind,

    /// Price factor for the adversarial selector; finite, at least 1.
    #[arg(long)]
    alpha: Option<f64>,

    /// Include the full decision tree in the output.
    #[arg(long)]
    emit_tree: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance JSON file.
    instance: PathBuf,

    /// Which policy to evaluate.
    #[arg(long, value_enum, default_value_t = PolicyKind::Greedy)]
    policy: PolicyKind,

    /// Greedy item selector.
    #[arg(long, value_enum, default_value_t = SelectorKind::Exact)]
    selector: SelectorKind,

    /// Price factor for the adversarial selector; finite, at least 1.
    #[arg(long)]
    alpha: Option<f64>,

    /// Monte Carlo trials; 0 skips sampling.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance JSON file.
    instance: PathBuf,

    /// Greedy price factor; 1.0 runs the exact selector, larger values run
    /// the adversarial selector at that factor.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Check a single claim (l1 through l6, or t1) instead of all of them.
    #[arg(long)]
    lemma: Option<String>,
}

#[derive(Args)]
struct ReproArgs {
    /// Which frozen scenario to rebuild.
    #[arg(value_enum)]
    target: ReproTarget,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReproTarget {
    WorkedExample,
    ChargingCounterexample,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment configuration JSON file; the flags below are ignored
    /// when this is given.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of instances to generate.
    #[arg(long, default_value_t = 20)]
    count: usize,

    /// Largest item count to draw.
    #[arg(long, default_value_t = 5)]
    max_n: usize,

    /// Largest per-item state count to draw.
    #[arg(long, default_value_t = 3)]
    max_k: usize,

    /// Greedy price factor; 1.0 runs the exact selector.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

/// Parses `args` (including the program name) and runs the selected
/// subcommand. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land here too; those exit 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ReproductionMismatch { .. } => 1,
        _ => 2,
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let budget = cli.budget.map(Budget::uniform).unwrap_or_default();
    if !(cli.tolerance.is_finite() && cli.tolerance >= 0.0) {
        return Err(Error::Config {
            detail: "--tolerance must be a finite value >= 0".into(),
        });
    }
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(cli, a),
        Cmd::Solve(a) => cmd_solve(cli, &budget, a),
        Cmd::Eval(a) => cmd_eval(cli, &budget, a),
        Cmd::Verify(a) => cmd_verify(cli, &budget, a),
        Cmd::Repro(a) => cmd_repro(cli, a),
        Cmd::Report(a) => cmd_report(cli, &budget, a),
    }
}

fn require_json(cli: &Cli) -> Result<()> {
    if cli.format == Format::Csv {
        return Err(Error::Config {
            detail: "csv output is only defined for the report subcommand".into(),
        });
    }
    Ok(())
}

fn emit(cli: &Cli, mut payload: String) -> Result<()> {
    if !payload.ends_with('\n') {
        payload.push('\n');
    }
    match &cli.out {
        Some(path) => fs::write(path, payload)?,
        None => print!("{payload}"),
    }
    Ok(())
}

fn emit_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    emit(cli, serde_json::to_string_pretty(value)?)
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    let inst: Instance = serde_json::from_str(&text)?;
    let violations = inst.validate();
    if !violations.is_empty() {
        let mut detail = format!("{} fails validation:", path.display());
        for v in violations.iter().take(4) {
            detail.push_str(&format!(" [{:?}] {};", v.kind, v.detail));
        }
        if violations.len() > 4 {
            detail.push_str(&format!(" and {} more", violations.len() - 4));
        }
        return Err(Error::Config { detail });
    }
    Ok(inst)
}

/// Pairs the policy choice with its selector flags. `Optimal` takes no
/// selector; `Greedy` takes `Exact` (no alpha) or `Adversarial` (alpha
/// required, finite, at least 1).
fn resolve_selector(
    policy: PolicyKind,
    selector: SelectorKind,
    alpha: Option<f64>,
) -> Result<Option<Selector>> {
    match policy {
        PolicyKind::Optimal => {
            if selector != SelectorKind::Exact || alpha.is_some() {
                return Err(Error::Config {
                    detail: "--selector and --alpha apply to the greedy policy only".into(),
                });
            }
            Ok(None)
        }
        PolicyKind::Greedy => match (selector, alpha) {
            (SelectorKind::Exact, None) => Ok(Some(Selector::Exact)),
            (SelectorKind::Exact, Some(_)) => Err(Error::Config {
                detail: "--alpha requires --selector adversarial".into(),
            }),
            (SelectorKind::Adversarial, Some(a)) if a.is_finite() && a >= 1.0 => {
                Ok(Some(Selector::Adversarial { alpha: a }))
            }
            (SelectorKind::Adversarial, Some(_)) => Err(Error::Config {
                detail: "--alpha must be a finite value >= 1".into(),
            }),
            (SelectorKind::Adversarial, None) => Err(Error::Config {
                detail: "--selector adversarial requires --alpha".into(),
            }),
        },
    }
}

fn describe_selector(s: Selector) -> String {
    match s {
        Selector::Exact => "exact".into(),
        Selector::Adversarial { alpha } => format!("adversarial(alpha={alpha})"),
    }
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<bool> {
    require_json(cli)?;
    let cfg = GeneratorConfig {
        kind: a.family.into(),
        n: a.items,
        k: a.states,
        m: a.elements,
        cost_range: (a.cost_range[0], a.cost_range[1]),
        density: a.density,
        integer_valued: a.integer,
        seed: cli.seed,
    };
    let inst = gen_instance(&cfg)?;
    emit_json(cli, &inst)?;
    Ok(true)
}

#[derive(Serialize)]
struct SolveOutput {
    policy: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selector: Option<String>,
    expected_cost: f64,
    goal: f64,
    tree_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tree: Option<TreeExport>,
}

fn cmd_solve(cli: &Cli, budget: &Budget, a: &SolveArgs) -> Result<bool> {
    require_json(cli)?;
    let inst = load_instance(&a.instance)?;
    let sel = resolve_selector(a.policy, a.selector, a.alpha)?;
    let (name, selector, tree) = match (a.policy, sel) {
        (PolicyKind::Greedy, Some(selector)) => {
            let p = GreedyPolicy { selector };
            let tree = materialize_tree(&inst, &p, budget)?;
            ("greedy", Some(describe_selector(selector)), tree)
        }
        (PolicyKind::Optimal, None) => {
            let (_, p) = OptimalPolicy::solve(&inst, budget)?;
            let tree = materialize_tree(&inst, &p, budget)?;
            ("optimal", None, tree)
        }
        _ => unreachable!("resolve_selector enforces the pairing"),
    };
    let out = SolveOutput {
        policy: name,
        selector,
        expected_cost: expected_cost_exact(&inst, &tree),
        goal: inst.utility.goal(),
        tree_nodes: tree.nodes.len(),
        tree: a.emit_tree.then(|| tree.export()),
    };
    emit_json(cli, &out)?;
    Ok(true)
}

#[derive(Serialize)]
struct EvalOutput {
    policy: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selector: Option<String>,
    exact: f64,
    trials: u64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stderr: Option<f64>,
}

fn cmd_eval(cli: &Cli, budget: &Budget, a: &EvalArgs) -> Result<bool> {
    require_json(cli)?;
    let inst = load_instance(&a.instance)?;
    let sel = resolve_selector(a.policy, a.selector, a.alpha)?;
    let (name, selector, policy): (&'static str, Option<String>, Box<dyn Policy>) =
        match (a.policy, sel) {
            (PolicyKind::Greedy, Some(selector)) => (
                "greedy",
                Some(describe_selector(selector)),
                Box::new(GreedyPolicy { selector }),
            ),
            (PolicyKind::Optimal, None) => {
                let (_, p) = OptimalPolicy::solve(&inst, budget)?;
                ("optimal", None, Box::new(p))
            }
            _ => unreachable!("resolve_selector enforces the pairing"),
        };
    let tree = materialize_tree(&inst, policy.as_ref(), budget)?;
    let exact = expected_cost_exact(&inst, &tree);
    let (mc_mean, mc_stderr) = if a.trials > 0 {
        let (mean, stderr) = expected_cost_mc(&inst, policy.as_ref(), a.trials, cli.seed)?;
        (Some(mean), Some(stderr))
    } else {
        (None, None)
    };
    let out = EvalOutput {
        policy: name,
        selector,
        exact,
        trials: a.trials,
        seed: cli.seed,
        mc_mean,
        mc_stderr,
    };
    emit_json(cli, &out)?;
    Ok(true)
}

fn cmd_verify(cli: &Cli, budget: &Budget, a: &VerifyArgs) -> Result<bool> {
    require_json(cli)?;
    if !(a.alpha.is_finite() && a.alpha >= 1.0) {
        return Err(Error::Config {
            detail: "--alpha must be a finite value >= 1".into(),
        });
    }
    let inst = load_instance(&a.instance)?;
    let selector = if a.alpha == 1.0 {
        Selector::Exact
    } else {
        Selector::Adversarial { alpha: a.alpha }
    };
    match &a.lemma {
        Some(name) => {
            let lemma: Lemma = name.parse()?;
            let v = Verifier::new(inst, selector, budget)?;
            let report = v.verify(lemma, cli.tolerance);
            let pass = report.pass;
            emit_json(cli, &report)?;
            Ok(pass)
        }
        None => {
            let summary = verify_instance(inst, selector, budget, cli.tolerance)?;
            let pass = summary.pass;
            emit_json(cli, &summary)?;
            Ok(pass)
        }
    }
}

fn cmd_repro(cli: &Cli, a: &ReproArgs) -> Result<bool> {
    require_json(cli)?;
    match a.target {
        ReproTarget::WorkedExample => emit_json(cli, &reproduce_worked_example()?)?,
        ReproTarget::ChargingCounterexample => {
            emit_json(cli, &reproduce_charging_counterexample()?)?
        }
    }
    Ok(true)
}

fn cmd_report(cli: &Cli, budget: &Budget, a: &ReportArgs) -> Result<bool> {
    let cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)?
        }
        None => ExperimentConfig {
            count: a.count,
            seed: cli.seed,
            max_n: a.max_n,
            max_k: a.max_k,
            alpha: a.alpha,
            tolerance: cli.tolerance,
            budget: *budget,
        },
    };
    let report = run_experiment(&cfg)?;
    let pass = report.pass();
    match cli.format {
        Format::Json => emit_json(cli, &report)?,
        Format::Csv => emit(cli, report.to_csv())?,
    }
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduction_mismatch_maps_to_exit_one() {
        let e = Error::ReproductionMismatch {
            detail: "x".into(),
        };
        assert_eq!(exit_code(&e), 1);
    }

    #[test]
    fn config_and_io_errors_map_to_exit_two() {
        assert_eq!(
            exit_code(&Error::Config {
                detail: "x".into()
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "x"
            ))),
            2
        );
    }

    #[test]
    fn selector_pairing_is_enforced() {
        assert!(matches!(
            resolve_selector(PolicyKind::Greedy, SelectorKind::Exact, None),
            Ok(Some(Selector::Exact))
        ));
        assert!(resolve_selector(PolicyKind::Greedy, SelectorKind::Exact, Some(2.0)).is_err());
        assert!(resolve_selector(PolicyKind::Greedy, SelectorKind::Adversarial, None).is_err());
        assert!(
            resolve_selector(PolicyKind::Greedy, SelectorKind::Adversarial, Some(0.5)).is_err()
        );
        assert!(matches!(
            resolve_selector(PolicyKind::Greedy, SelectorKind::Adversarial, Some(1.5)),
            Ok(Some(Selector::Adversarial { .. }))
        ));
        assert!(matches!(
            resolve_selector(PolicyKind::Optimal, SelectorKind::Exact, None),
            Ok(None)
        ));
        assert!(resolve_selector(PolicyKind::Optimal, SelectorKind::Adversarial, Some(1.5)).is_err());
    }
}
