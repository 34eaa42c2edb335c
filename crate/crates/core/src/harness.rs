//! Instance generators, frozen worked examples, and experiment orchestration.
//!
//! Generators build coverable instances by construction and re-validate them
//! before release, so downstream code can assume well-formedness. The two
//! `reproduce_*` operations rebuild fixed reference scenarios and fail if any
//! pinned quantity drifts. `run_experiment` sweeps a generated corpus through
//! the full solve-and-verify pipeline and emits a versioned report.

use crate::accounting::{FactAudit, Lemma, Verifier};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::greedy::{greedy_select, Selector};
use crate::instance::{trial_rng, Budget, Instance, ItemId, StateId, Subrealization};
use crate::optimal::optimal_value;
use crate::policy::{execute, materialize_tree, ExplicitPolicy};
use crate::utility::{
    compute_eta, validate_coverability, validate_polymatroid, validate_sufficiency, AdditiveModel,
    CoverageModel, TableEntry, TableModel, UtilityModel,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The generated instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Weighted coverage over a ground set; item states choose cover sets.
    Coverage,
    /// Additive gains truncated at the goal.
    TruncatedAdditive,
    /// Deterministic single-state coverage with unit weights: classical
    /// set cover, where adaptivity buys nothing.
    ClassicalSetCover,
}

/// Parameters for one generated instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub n: usize,
    /// States per item; forced to 1 for ClassicalSetCover.
    pub k: usize,
    /// Ground elements (coverage families only).
    pub m: usize,
    /// Item costs are drawn uniformly from this range; the low end must be
    /// positive.
    pub cost_range: (f64, f64),
    /// Probability that a ground element lands in a given cover set.
    pub density: f64,
    /// Draw integer utilities (unit weights, integral gains and goal).
    pub integer_valued: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Coverage,
            n: 4,
            k: 2,
            m: 6,
            cost_range: (0.5, 2.0),
            density: 0.4,
            integer_valued: true,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn check(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config {
                detail: format!("need n >= 1 and k >= 1, got n = {}, k = {}", self.n, self.k),
            });
        }
        if matches!(
            self.kind,
            GeneratorKind::Coverage | GeneratorKind::ClassicalSetCover
        ) && self.m == 0
        {
            return Err(Error::Config {
                detail: "coverage families need m >= 1 ground elements".into(),
            });
        }
        let (lo, hi) = self.cost_range;
        if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi < lo {
            return Err(Error::Config {
                detail: format!("cost range ({lo}, {hi}) must satisfy 0 < lo <= hi"),
            });
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config {
                detail: format!("density {} outside [0, 1]", self.density),
            });
        }
        Ok(())
    }
}

/// Generates one instance. Deterministic in the config; retries a bounded
/// number of fresh draws if a candidate fails validation, then gives up.
pub fn gen_instance(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.check()?;
    const ATTEMPTS: usize = 32;
    let budget = Budget::default();
    let mut last = String::new();
    for attempt in 0..ATTEMPTS {
        let inst = build_candidate(cfg, attempt as u64);
        match candidate_violations(&inst, &budget) {
            Ok(None) => return Ok(inst),
            Ok(Some(detail)) => last = detail,
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::GenerationFailed {
        attempts: ATTEMPTS,
        detail: last,
    })
}

/// Every validator the generator output must clear; None means clean.
fn candidate_violations(inst: &Instance, budget: &Budget) -> Result<Option<String>> {
    let mut v = inst.validate();
    if v.is_empty() {
        match validate_polymatroid(inst, budget) {
            Ok(found) => v.extend(found),
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if v.is_empty() {
        v.extend(validate_sufficiency(inst, 0, 8)?);
    }
    if v.is_empty() {
        let cov = validate_coverability(inst, budget);
        v.extend(cov.violations);
    }
    Ok(v.first().map(|w| format!("{}: {}", serde_json::to_string(&w.kind).unwrap(), w.detail)))
}

fn build_candidate(cfg: &GeneratorConfig, attempt: u64) -> Instance {
    let mut rng = trial_rng(cfg.seed, attempt);
    let k = match cfg.kind {
        GeneratorKind::ClassicalSetCover => 1,
        _ => cfg.k,
    };
    let costs: Vec<f64> = (0..cfg.n)
        .map(|_| {
            let c = rng.random_range(cfg.cost_range.0..=cfg.cost_range.1);
            if cfg.integer_valued {
                // Costs stay real-valued in general; rounding here just makes
                // the integer family's reports easier to eyeball.
                (c * 4.0).round() / 4.0
            } else {
                c
            }
        })
        .collect();
    let probs: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| {
            if k == 1 {
                vec![1.0]
            } else {
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|p| p / total).collect()
            }
        })
        .collect();
    let (utility, integer_valued) = match cfg.kind {
        GeneratorKind::Coverage | GeneratorKind::ClassicalSetCover => {
            let unit = cfg.integer_valued || cfg.kind == GeneratorKind::ClassicalSetCover;
            let weights: Vec<f64> = (0..cfg.m)
                .map(|_| if unit { 1.0 } else { rng.random_range(0.5..2.0) })
                .collect();
            let mut coversets: Vec<Vec<Vec<usize>>> = (0..cfg.n)
                .map(|_| {
                    (0..k)
                        .map(|_| {
                            (0..cfg.m)
                                .filter(|_| rng.random::<f64>() < cfg.density)
                                .collect()
                        })
                        .collect()
                })
                .collect();
            // Coverability by construction: ground element g is covered by
            // item g mod n in every one of its states.
            for g in 0..cfg.m {
                let e = g % cfg.n;
                for states in coversets[e].iter_mut() {
                    if !states.contains(&g) {
                        states.push(g);
                        states.sort_unstable();
                    }
                }
            }
            (
                UtilityModel::Coverage(CoverageModel::new(cfg.m, weights, coversets)),
                unit,
            )
        }
        GeneratorKind::TruncatedAdditive => {
            let gains: Vec<Vec<f64>> = (0..cfg.n)
                .map(|_| {
                    (0..k)
                        .map(|_| {
                            if cfg.integer_valued {
                                rng.random_range(1..=5) as f64
                            } else {
                                rng.random_range(0.2..3.0)
                            }
                        })
                        .collect()
                })
                .collect();
            // Coverability by construction: the goal never exceeds the sum
            // of worst-state gains.
            let floor_sum: f64 = gains
                .iter()
                .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
                .sum();
            let q = if cfg.integer_valued {
                (0.8 * floor_sum).floor().max(1.0)
            } else {
                0.8 * floor_sum
            };
            (
                UtilityModel::TruncatedAdditive(AdditiveModel { q, gains }),
                cfg.integer_valued,
            )
        }
    };
    Instance {
        n: cfg.n,
        k,
        costs,
        probs,
        integer_valued,
        utility,
        eta: None,
    }
}

/// A mixed-family corpus, deterministic in the seed. Instance i draws its
/// family, size, and parameters from an independent stream.
pub fn corpus(count: usize, seed: u64, max_n: usize, max_k: usize) -> Result<Vec<Instance>> {
    (0..count)
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let kind = match i % 3 {
                0 => GeneratorKind::Coverage,
                1 => GeneratorKind::TruncatedAdditive,
                _ => GeneratorKind::ClassicalSetCover,
            };
            let cfg = GeneratorConfig {
                kind,
                n: rng.random_range(1..=max_n.max(1)),
                k: rng.random_range(1..=max_k.max(1)),
                m: rng.random_range(2..=8),
                cost_range: (0.5, 2.0),
                density: rng.random_range(0.3..0.8),
                integer_valued: i % 2 == 0,
                seed: rng.random(),
            };
            gen_instance(&cfg)
        })
        .collect()
}

/// The frozen three-item worked example: item 0 has two equiprobable states,
/// items 1 and 2 are deterministic, utilities come from a 12-entry table
/// with goal 10 and minimum gap 1.
pub fn worked_example_instance() -> Instance {
    let row = |rel: Vec<(ItemId, StateId)>, value: f64| TableEntry { rel, value };
    let entries = vec![
        row(vec![], 0.0),
        row(vec![(0, 0)], 3.0),
        row(vec![(0, 1)], 1.0),
        row(vec![(1, 0)], 9.0),
        row(vec![(2, 0)], 1.0),
        row(vec![(0, 0), (1, 0)], 10.0),
        row(vec![(0, 0), (2, 0)], 4.0),
        row(vec![(0, 1), (1, 0)], 10.0),
        row(vec![(0, 1), (2, 0)], 1.0),
        row(vec![(1, 0), (2, 0)], 10.0),
        row(vec![(0, 0), (1, 0), (2, 0)], 10.0),
        row(vec![(0, 1), (1, 0), (2, 0)], 10.0),
    ];
    Instance {
        n: 3,
        k: 2,
        costs: vec![1.0; 3],
        probs: vec![vec![0.5, 0.5], vec![1.0, 0.0], vec![1.0, 0.0]],
        integer_valued: true,
        utility: UtilityModel::Table(TableModel::new(10.0, entries)),
        eta: None,
    }
}

/// The policy the worked example analyzes: probe item 0; on state 0 finish
/// with item 1; on state 1 take item 2 (which gains nothing), then item 1.
pub fn worked_example_policy() -> ExplicitPolicy {
    ExplicitPolicy::from_rules(vec![
        (vec![], 0),
        (vec![(0, 0)], 1),
        (vec![(0, 1)], 2),
        (vec![(0, 1), (2, 0)], 1),
    ])
    .expect("frozen rules are well-formed")
}

/// Markers a single visited node accounts for, keyed by that node's rel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadGroup {
    pub rel: Vec<(ItemId, StateId)>,
    /// 1-based marker indices.
    pub markers: Vec<usize>,
}

/// One realization's lead pattern.
#[derive(Debug, Clone, Serialize)]
pub struct LeadPattern {
    pub realization: Vec<StateId>,
    pub groups: Vec<LeadGroup>,
}

/// Everything the worked-example reproduction pins.
#[derive(Debug, Clone, Serialize)]
pub struct WorkedExampleReport {
    pub q: f64,
    pub eta: f64,
    /// Marker utilities, sentinel at Q excluded.
    pub marker_positions: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub epsilon_sum: f64,
    pub leads: Vec<LeadPattern>,
}

fn pin<T: PartialEq + std::fmt::Debug>(what: &str, got: &T, want: &T) -> Result<()> {
    if got != want {
        return Err(Error::ReproductionMismatch {
            detail: format!("{what}: got {got:?}, expected {want:?}"),
        });
    }
    Ok(())
}

/// Rebuilds the worked example and checks every pinned quantity: marker
/// positions (0, 1, 1, 3), gaps (1, 0, 2, 7) summing to the goal 10, and the
/// lead pattern of both realizations.
pub fn reproduce_worked_example() -> Result<WorkedExampleReport> {
    let inst = worked_example_instance();
    let policy = worked_example_policy();
    let budget = Budget::default();
    let tree = materialize_tree(&inst, &policy, &budget)?;
    let ms = crate::accounting::build_markers(&tree);
    let gap = compute_eta(&inst, &budget)?;

    let positions = ms.positions[..ms.len()].to_vec();
    pin("marker positions", &positions, &vec![0.0, 1.0, 1.0, 3.0])?;
    pin("epsilons", &ms.epsilons, &vec![1.0, 0.0, 2.0, 7.0])?;
    let epsilon_sum: f64 = ms.epsilons.iter().sum();
    pin("epsilon sum", &epsilon_sum, &10.0)?;
    pin("goal", &ms.q, &10.0)?;
    pin("eta", &gap.eta, &1.0)?;
    pin("eta provenance", &gap.eta_is_exact, &true)?;

    let mut leads = Vec::new();
    for phi in [vec![0, 0, 0], vec![1, 0, 0]] {
        let trace = execute(&inst, &policy, &phi)?;
        let mut groups: Vec<LeadGroup> = Vec::new();
        for i in 1..=ms.len() {
            let rel = crate::accounting::leadsto(&trace, &ms, i)?.pairs().to_vec();
            match groups.last_mut() {
                Some(g) if g.rel == rel => g.markers.push(i),
                _ => groups.push(LeadGroup {
                    rel,
                    markers: vec![i],
                }),
            }
        }
        leads.push(LeadPattern {
            realization: phi,
            groups,
        });
    }
    let expect_a = vec![
        LeadGroup {
            rel: vec![],
            markers: vec![1, 2, 3],
        },
        LeadGroup {
            rel: vec![(0, 0)],
            markers: vec![4],
        },
    ];
    let expect_b = vec![
        LeadGroup {
            rel: vec![],
            markers: vec![1],
        },
        LeadGroup {
            rel: vec![(0, 1), (2, 0)],
            markers: vec![2, 3, 4],
        },
    ];
    pin("lead pattern of realization (0,0,0)", &leads[0].groups, &expect_a)?;
    pin("lead pattern of realization (1,0,0)", &leads[1].groups, &expect_b)?;

    Ok(WorkedExampleReport {
        q: ms.q,
        eta: gap.eta,
        marker_positions: positions,
        epsilons: ms.epsilons.clone(),
        epsilon_sum,
        leads,
    })
}

/// The frozen counterexample to a published charging identity for greedy
/// set cover. Six ground elements, three subsets, a fixed selection order,
/// and an optimum using only the last two subsets.
#[derive(Debug, Clone, Serialize)]
pub struct ChargingCounterexampleReport {
    pub m: usize,
    /// Elements already covered before step j are excluded; j = 1 keeps all.
    pub j: usize,
    /// The analyzed selection order (subset indices).
    pub order: Vec<ItemId>,
    /// Per subset: elements it is the first to cover under that order.
    pub cov: Vec<usize>,
    /// Subsets selected by both the analyzed order and the optimum.
    pub shared_with_optimum: Vec<ItemId>,
    /// Subsets the analyzed order never selects (none here).
    pub outside_selection: Vec<ItemId>,
    /// m - j + 1.
    pub lhs: usize,
    /// Charged cover counts: shared cov plus unselected optcov.
    pub rhs: usize,
    /// The identity lhs = rhs; false is the point of the counterexample.
    pub identity_holds: bool,
    /// Cross-check: what this crate's greedy picks first on the instance.
    pub greedy_first_pick: ItemId,
    /// Cross-check: exact optimal expected cost (the two-subset cover).
    pub optimal_cost: f64,
}

/// Rebuilds the charging counterexample and checks its pinned arithmetic:
/// the charged total is 2 while m - j + 1 = 6, so the identity fails.
pub fn reproduce_charging_counterexample() -> Result<ChargingCounterexampleReport> {
    let m = 6;
    let sets: [&[usize]; 3] = [&[0, 1, 2, 5], &[2, 3, 5], &[0, 1, 4]];
    // The analyzed run selects subsets 0, 2, 1 in that order; the optimum
    // covers everything with subsets 1 and 2.
    let order: Vec<ItemId> = vec![0, 2, 1];
    let optimum: Vec<ItemId> = vec![1, 2];
    let j = 1;

    let mut covered = vec![false; m];
    let mut cov = vec![0usize; sets.len()];
    for &s in &order {
        for &g in sets[s] {
            if !covered[g] {
                covered[g] = true;
                cov[s] += 1;
            }
        }
    }
    pin("cov per subset", &cov, &vec![4, 1, 1])?;
    let shared: Vec<ItemId> = optimum
        .iter()
        .copied()
        .filter(|s| order.contains(s))
        .collect();
    pin("shared subsets", &shared, &vec![1, 2])?;
    let outside: Vec<ItemId> = (0..sets.len()).filter(|s| !order.contains(s)).collect();
    pin("unselected subsets", &outside, &vec![])?;
    let lhs = m - j + 1;
    // Every unselected subset would contribute its expected optimum-first
    // cover count; the outside set is empty, so only shared cov remains.
    let rhs: usize = shared.iter().map(|&s| cov[s]).sum();
    pin("lhs", &lhs, &6)?;
    pin("rhs", &rhs, &2)?;

    // Cross-checks on the same data as a deterministic instance.
    let inst = Instance {
        n: sets.len(),
        k: 1,
        costs: vec![1.0; sets.len()],
        probs: vec![vec![1.0]; sets.len()],
        integer_valued: true,
        utility: UtilityModel::Coverage(CoverageModel::new(
            m,
            vec![1.0; m],
            sets.iter().map(|s| vec![s.to_vec()]).collect(),
        )),
        eta: None,
    };
    let budget = Budget::default();
    let first = greedy_select(&inst, &Subrealization::empty(), Selector::Exact)?;
    pin("greedy first pick", &first, &0)?;
    let (opt_cost, _) = optimal_value(&inst, &budget)?;
    pin("optimal cost", &opt_cost, &2.0)?;

    Ok(ChargingCounterexampleReport {
        m,
        j,
        order,
        cov,
        shared_with_optimum: shared,
        outside_selection: outside,
        lhs,
        rhs,
        identity_holds: lhs == rhs,
        greedy_first_pick: first,
        optimal_cost: opt_cost,
    })
}

/// One claim's outcome inside a verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaOutcome {
    pub lemma: Lemma,
    pub checks: usize,
    pub failures: usize,
    /// Smallest rhs - lhs over counted checks; negative means violated.
    pub worst_slack: f64,
    pub skipped_degenerate: usize,
    pub pass: bool,
}

/// Full verification of one instance: every claim plus the three exhaustive
/// structural audits.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub schema: u32,
    pub alpha: f64,
    pub tolerance: f64,
    pub greedy_cost: f64,
    pub optimal_cost: f64,
    pub eta: f64,
    pub eta_is_exact: bool,
    pub lemmas: Vec<LemmaOutcome>,
    /// Per node: marker revenue equals price times realized gain.
    pub audit_node_revenue: FactAudit,
    /// Per node and item: hybrid stage-2 selections match the optimum's.
    pub audit_hybrid_agreement: FactAudit,
    /// Per node: stage-2 marginals telescope to the remaining gap.
    pub audit_gap_telescoping: FactAudit,
    pub pass: bool,
}

/// Solves and verifies one instance end to end.
pub fn verify_instance(
    inst: Instance,
    selector: Selector,
    budget: &Budget,
    tolerance: f64,
) -> Result<VerifySummary> {
    let v = Verifier::new(inst, selector, budget)?;
    let lemmas: Vec<LemmaOutcome> = v
        .verify_all(tolerance)
        .into_iter()
        .map(|r| LemmaOutcome {
            lemma: r.lemma,
            checks: r.checks.iter().filter(|c| c.counted).count(),
            failures: r.checks.iter().filter(|c| c.counted && !c.pass).count(),
            worst_slack: r.worst_slack(),
            skipped_degenerate: r.skipped_degenerate,
            pass: r.pass,
        })
        .collect();
    let audit_node_revenue = v.audit_fact1(1e-12);
    let audit_hybrid_agreement = v.audit_fact2();
    let audit_gap_telescoping = v.audit_delta_sums(1e-12);
    let pass = lemmas.iter().all(|l| l.pass)
        && audit_node_revenue.pass
        && audit_hybrid_agreement.pass
        && audit_gap_telescoping.pass;
    Ok(VerifySummary {
        schema: 1,
        alpha: v.alpha(),
        tolerance,
        greedy_cost: v.greedy_cost(),
        optimal_cost: v.optimal_cost(),
        eta: v.gap().eta,
        eta_is_exact: v.gap().eta_is_exact,
        lemmas,
        audit_node_revenue,
        audit_hybrid_agreement,
        audit_gap_telescoping,
        pass,
    })
}

/// Corpus sweep parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub count: usize,
    pub seed: u64,
    pub max_n: usize,
    pub max_k: usize,
    /// 1.0 runs the exact selector; anything larger runs the adversarial
    /// selector at that factor.
    pub alpha: f64,
    pub tolerance: f64,
    #[serde(default)]
    pub budget: Budget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            count: 20,
            seed: 0,
            max_n: 5,
            max_k: 3,
            alpha: 1.0,
            tolerance: 1e-9,
            budget: Budget::default(),
        }
    }
}

/// One instance's row in an experiment report.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub index: usize,
    pub family: GeneratorKind,
    pub n: usize,
    pub k: usize,
    pub q: f64,
    pub eta: f64,
    pub eta_is_exact: bool,
    pub greedy_cost: f64,
    pub optimal_cost: f64,
    pub ratio: f64,
    pub kappa: f64,
    pub alpha_kappa: f64,
    pub lemmas_pass: bool,
    /// ratio <= alpha * kappa at the configured tolerance.
    pub bound_pass: bool,
    pub error: Option<String>,
}

/// Corpus-level aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub instances: usize,
    pub errors: usize,
    pub lemma_failures: usize,
    pub bound_failures: usize,
    pub max_ratio: f64,
    /// Largest ratio / (alpha * kappa); at most 1 when everything passes.
    pub max_bound_fraction: f64,
}

/// A full corpus sweep. `schema` guards downstream parsers.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub alpha: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn pass(&self) -> bool {
        self.summary.errors == 0
            && self.summary.lemma_failures == 0
            && self.summary.bound_failures == 0
    }

    /// Flat per-row CSV; lemma-level detail stays in the JSON form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,family,n,k,q,eta,eta_is_exact,greedy_cost,optimal_cost,ratio,kappa,alpha_kappa,lemmas_pass,bound_pass,error\n",
        );
        for r in &self.rows {
            let family = serde_json::to_string(&r.family).unwrap();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.index,
                family.trim_matches('"'),
                r.n,
                r.k,
                r.q,
                r.eta,
                r.eta_is_exact,
                r.greedy_cost,
                r.optimal_cost,
                r.ratio,
                r.kappa,
                r.alpha_kappa,
                r.lemmas_pass,
                r.bound_pass,
                r.error.as_deref().unwrap_or(""),
            ));
        }
        out
    }
}

/// Generates a corpus, solves and verifies every instance, and aggregates.
/// Per-instance failures become rows with an error field; only config
/// errors abort the run. Rows keep corpus order whatever the schedule.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with_mode(cfg, ExecMode::default())
}

pub fn run_experiment_with_mode(
    cfg: &ExperimentConfig,
    mode: ExecMode,
) -> Result<ExperimentReport> {
    if !cfg.alpha.is_finite() || cfg.alpha < 1.0 {
        return Err(Error::Config {
            detail: format!("alpha must be finite and at least 1, got {}", cfg.alpha),
        });
    }
    let selector = if cfg.alpha == 1.0 {
        Selector::Exact
    } else {
        Selector::Adversarial { alpha: cfg.alpha }
    };
    let instances = corpus(cfg.count, cfg.seed, cfg.max_n, cfg.max_k)?;
    let indexed: Vec<(usize, Instance)> = instances.into_iter().enumerate().collect();
    let rows = exec::ordered_map(mode, &indexed, |(i, inst)| {
        build_row(*i, inst.clone(), selector, cfg)
    });

    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    let lemma_failures = rows
        .iter()
        .filter(|r| r.error.is_none() && !r.lemmas_pass)
        .count();
    let bound_failures = rows
        .iter()
        .filter(|r| r.error.is_none() && !r.bound_pass)
        .count();
    let max_ratio = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let max_bound_fraction = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.ratio / r.alpha_kappa)
        .fold(0.0, f64::max);
    let summary = ExperimentSummary {
        instances: rows.len(),
        errors,
        lemma_failures,
        bound_failures,
        max_ratio,
        max_bound_fraction,
    };
    Ok(ExperimentReport {
        schema: 1,
        alpha: cfg.alpha,
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        rows,
        summary,
    })
}

fn build_row(
    index: usize,
    inst: Instance,
    selector: Selector,
    cfg: &ExperimentConfig,
) -> ExperimentRow {
    let family = match index % 3 {
        0 => GeneratorKind::Coverage,
        1 => GeneratorKind::TruncatedAdditive,
        _ => GeneratorKind::ClassicalSetCover,
    };
    let n = inst.n;
    let k = inst.k;
    let q = inst.utility.goal();
    let integer_valued = inst.integer_valued;
    let mut row = ExperimentRow {
        index,
        family,
        n,
        k,
        q,
        eta: f64::NAN,
        eta_is_exact: false,
        greedy_cost: f64::NAN,
        optimal_cost: f64::NAN,
        ratio: f64::NAN,
        kappa: f64::NAN,
        alpha_kappa: f64::NAN,
        lemmas_pass: false,
        bound_pass: false,
        error: None,
    };
    match verify_instance(inst, selector, &cfg.budget, cfg.tolerance) {
        Ok(summary) => {
            let kappa_value = match crate::accounting::kappa(q, summary.eta, integer_valued) {
                Ok(v) => v,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            row.eta = summary.eta;
            row.eta_is_exact = summary.eta_is_exact;
            row.greedy_cost = summary.greedy_cost;
            row.optimal_cost = summary.optimal_cost;
            row.ratio = summary.greedy_cost / summary.optimal_cost;
            row.kappa = kappa_value;
            row.alpha_kappa = summary.alpha * kappa_value;
            row.lemmas_pass = summary.pass;
            row.bound_pass =
                row.ratio <= row.alpha_kappa + cfg.tolerance * row.ratio.abs().max(1.0);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            kind: GeneratorKind::Coverage,
            n: 5,
            k: 3,
            m: 8,
            seed: 7,
            ..GeneratorConfig::default()
        };
        let a = serde_json::to_string(&gen_instance(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&gen_instance(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_instances_round_trip_json() {
        for seed in 0..4 {
            let cfg = GeneratorConfig {
                kind: GeneratorKind::TruncatedAdditive,
                seed,
                integer_valued: seed % 2 == 0,
                ..GeneratorConfig::default()
            };
            let inst = gen_instance(&cfg).unwrap();
            let json = serde_json::to_string(&inst).unwrap();
            let back: Instance = serde_json::from_str(&json).unwrap();
            assert_eq!(json, serde_json::to_string(&back).unwrap());
        }
    }

    #[test]
    fn classical_family_is_deterministic_single_state() {
        let cfg = GeneratorConfig {
            kind: GeneratorKind::ClassicalSetCover,
            k: 3,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let inst = gen_instance(&cfg).unwrap();
        assert_eq!(inst.k, 1);
        assert!(inst.integer_valued);
        assert!(inst.probs.iter().all(|row| row == &vec![1.0]));
    }

    #[test]
    fn corpus_passes_every_validator() {
        let budget = Budget::default();
        for inst in corpus(12, 3, 5, 3).unwrap() {
            assert!(inst.validate().is_empty());
            assert!(validate_polymatroid(&inst, &budget).unwrap().is_empty());
            assert!(validate_sufficiency(&inst, 0, 8).unwrap().is_empty());
            let cov = validate_coverability(&inst, &budget);
            assert!(cov.passed(), "{:?}", cov.violations);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = GeneratorConfig {
            n: 0,
            ..GeneratorConfig::default()
        };
        assert!(matches!(gen_instance(&cfg), Err(Error::Config { .. })));
        let cfg = GeneratorConfig {
            cost_range: (0.0, 1.0),
            ..GeneratorConfig::default()
        };
        assert!(matches!(gen_instance(&cfg), Err(Error::Config { .. })));
        let cfg = GeneratorConfig {
            density: 1.5,
            ..GeneratorConfig::default()
        };
        assert!(matches!(gen_instance(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn worked_example_pins_hold() {
        let report = reproduce_worked_example().unwrap();
        assert_eq!(report.marker_positions, vec![0.0, 1.0, 1.0, 3.0]);
        assert_eq!(report.epsilons, vec![1.0, 0.0, 2.0, 7.0]);
        assert_eq!(report.epsilon_sum, 10.0);
        assert_eq!(report.eta, 1.0);
        assert_eq!(report.leads.len(), 2);
    }

    #[test]
    fn charging_counterexample_pins_hold() {
        let report = reproduce_charging_counterexample().unwrap();
        assert_eq!(report.lhs, 6);
        assert_eq!(report.rhs, 2);
        assert_eq!(report.cov, vec![4, 1, 1]);
        assert!(!report.identity_holds);
        assert_eq!(report.greedy_first_pick, 0);
        assert_eq!(report.optimal_cost, 2.0);
    }

    #[test]
    fn verify_summary_passes_on_generated_instance() {
        let cfg = GeneratorConfig {
            kind: GeneratorKind::TruncatedAdditive,
            n: 3,
            k: 2,
            seed: 5,
            ..GeneratorConfig::default()
        };
        let inst = gen_instance(&cfg).unwrap();
        let summary =
            verify_instance(inst, Selector::Exact, &Budget::default(), 1e-9).unwrap();
        assert!(summary.pass, "{summary:?}");
        assert_eq!(summary.lemmas.len(), 7);
        assert!(summary.greedy_cost >= summary.optimal_cost - 1e-12);
    }

    #[test]
    fn experiment_rows_are_ordered_and_pass() {
        let cfg = ExperimentConfig {
            count: 6,
            seed: 2,
            max_n: 4,
            max_k: 2,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass(), "{:?}", report.summary);
        assert_eq!(report.rows.len(), 6);
        for (i, row) in report.rows.iter().enumerate() {
            assert_eq!(row.index, i);
            assert!(row.ratio <= row.alpha_kappa + 1e-9);
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("index,family"));
    }

    #[test]
    fn empty_experiment_is_a_valid_report() {
        let cfg = ExperimentConfig {
            count: 0,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass());
        assert!(report.rows.is_empty());
        assert_eq!(report.summary.instances, 0);
    }

    #[test]
    fn adversarial_experiment_respects_scaled_bound() {
        let cfg = ExperimentConfig {
            count: 6,
            seed: 9,
            max_n: 4,
            max_k: 2,
            alpha: 2.0,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass(), "{:?}", report.summary);
        assert!(report.summary.max_bound_fraction <= 1.0 + 1e-9);
    }
}
