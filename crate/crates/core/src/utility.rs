//! Utility families behind the oracle f(psi), plus the validators for the
//! structural assumptions every other module leans on: f(empty) = 0,
//! per-realization monotonicity and submodularity, order-invariance of
//! evaluation, and coverability (every positive-probability realization
//! attains the goal value Q).
//!
//! Three concrete families are shipped:
//! - `StochasticCoverage`: weighted ground-element coverage; f(psi) is the
//!   total weight of the union of the observed coversets.
//! - `TruncatedAdditive`: f(psi) = min(Q, sum of observed gains).
//! - `ExplicitTable`: a finite map from canonical rel(psi) to a value, for
//!   hand-built instances; unlisted entries are hard errors, not defaults.

use crate::error::{Error, Result, Violation, ViolationKind};
use crate::exec::{self, ExecMode};
use crate::instance::{trial_rng, Budget, Instance, ItemId, StateId, Subrealization};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

/// Absolute tolerance for exact-by-construction value identities.
pub const VALUE_TOL: f64 = 1e-12;

/// Tolerance under which f(psi) counts as having reached the goal q.
pub fn cover_tolerance(q: f64) -> f64 {
    1e-9 * q.abs().max(1.0)
}

/// True iff a utility value counts as a cover for goal q.
pub fn is_cover(value: f64, q: f64) -> bool {
    value >= q - cover_tolerance(q)
}

/// Weighted ground-set coverage: item e observed in state o covers
/// `coversets[e][o]`; f(psi) is the total weight covered.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageModel {
    pub m: usize,
    pub weights: Vec<f64>,
    /// `coversets[e][o]` lists the ground elements covered by (e, o).
    pub coversets: Vec<Vec<Vec<usize>>>,
    #[serde(skip)]
    masks: OnceLock<Vec<Vec<MaskWords>>>,
}

type MaskWords = Vec<u64>;

impl CoverageModel {
    pub fn new(m: usize, weights: Vec<f64>, coversets: Vec<Vec<Vec<usize>>>) -> Self {
        CoverageModel {
            m,
            weights,
            coversets,
            masks: OnceLock::new(),
        }
    }

    fn words(&self) -> usize {
        self.m.div_ceil(64)
    }

    fn mask_of(&self, e: ItemId, o: StateId) -> &MaskWords {
        let masks = self.masks.get_or_init(|| {
            self.coversets
                .iter()
                .map(|per_state| {
                    per_state
                        .iter()
                        .map(|set| {
                            let mut words = vec![0u64; self.words()];
                            for &d in set {
                                words[d / 64] |= 1 << (d % 64);
                            }
                            words
                        })
                        .collect()
                })
                .collect()
        });
        &masks[e][o]
    }

    fn covered_weight(&self, union: &[u64]) -> f64 {
        let mut total = 0.0;
        for (w, &bits) in union.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                let d = w * 64 + bits.trailing_zeros() as usize;
                total += self.weights[d];
                bits &= bits - 1;
            }
        }
        total
    }

    fn evaluate(&self, psi: &Subrealization) -> f64 {
        let mut union = vec![0u64; self.words()];
        for &(e, o) in psi.pairs() {
            for (w, &bits) in self.mask_of(e, o).iter().enumerate() {
                union[w] |= bits;
            }
        }
        self.covered_weight(&union)
    }
}

/// f(psi) = min(Q, sum of per-pair gains).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditiveModel {
    #[serde(rename = "Q")]
    pub q: f64,
    /// `gains[e][o]` >= 0.
    pub gains: Vec<Vec<f64>>,
}

impl AdditiveModel {
    fn evaluate(&self, psi: &Subrealization) -> f64 {
        let sum: f64 = psi.pairs().iter().map(|&(e, o)| self.gains[e][o]).sum();
        sum.min(self.q)
    }
}

/// One explicit table row: a canonical rel(psi) and its value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub rel: Vec<(ItemId, StateId)>,
    pub value: f64,
}

/// Finite explicit oracle for hand-built instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableModel {
    #[serde(rename = "Q")]
    pub q: f64,
    pub entries: Vec<TableEntry>,
    #[serde(skip)]
    index: OnceLock<HashMap<Subrealization, f64>>,
}

impl TableModel {
    pub fn new(q: f64, entries: Vec<TableEntry>) -> Self {
        TableModel {
            q,
            entries,
            index: OnceLock::new(),
        }
    }

    fn lookup(&self, psi: &Subrealization) -> Result<f64> {
        let index = self.index.get_or_init(|| {
            self.entries
                .iter()
                .filter_map(|entry| {
                    Subrealization::from_pairs(entry.rel.clone())
                        .ok()
                        .map(|psi| (psi, entry.value))
                })
                .collect()
        });
        index
            .get(psi)
            .copied()
            .ok_or_else(|| Error::TableMiss {
                rel: psi.pairs().to_vec(),
            })
    }
}

/// The utility oracle: one of the three families.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum UtilityModel {
    #[serde(rename = "coverage")]
    Coverage(CoverageModel),
    #[serde(rename = "truncated_additive")]
    TruncatedAdditive(AdditiveModel),
    #[serde(rename = "table")]
    Table(TableModel),
}

impl UtilityModel {
    /// f(psi). Errors only for ExplicitTable misses.
    pub fn evaluate(&self, psi: &Subrealization) -> Result<f64> {
        match self {
            UtilityModel::Coverage(m) => Ok(m.evaluate(psi)),
            UtilityModel::TruncatedAdditive(m) => Ok(m.evaluate(psi)),
            UtilityModel::Table(m) => m.lookup(psi),
        }
    }

    /// f(psi + (e,o)) - f(psi).
    pub fn marginal(&self, psi: &Subrealization, e: ItemId, o: StateId) -> Result<f64> {
        let base = self.evaluate(psi)?;
        self.marginal_from(psi, base, e, o)
    }

    /// Marginal when f(psi) is already known; avoids re-evaluating the base.
    pub fn marginal_from(
        &self,
        psi: &Subrealization,
        value_at_psi: f64,
        e: ItemId,
        o: StateId,
    ) -> Result<f64> {
        let extended = psi.extend(e, o)?;
        Ok(self.evaluate(&extended)? - value_at_psi)
    }

    /// The goal value Q: total ground weight for coverage, declared otherwise.
    pub fn goal(&self) -> f64 {
        match self {
            UtilityModel::Coverage(m) => m.weights.iter().sum(),
            UtilityModel::TruncatedAdditive(m) => m.q,
            UtilityModel::Table(m) => m.q,
        }
    }

    /// Structural checks appended to an instance validation pass.
    pub(crate) fn validate_shape(&self, n: usize, k: usize, v: &mut Vec<Violation>) {
        match self {
            UtilityModel::Coverage(m) => {
                if m.weights.len() != m.m {
                    v.push(Violation::new(
                        ViolationKind::ShapeMismatch,
                        format!("{} weights for m = {}", m.weights.len(), m.m),
                    ));
                }
                for (d, &w) in m.weights.iter().enumerate() {
                    if !w.is_finite() || w < 0.0 {
                        v.push(Violation::new(
                            ViolationKind::ShapeMismatch,
                            format!("weight of ground element {d} is {w}"),
                        ));
                    }
                }
                if m.coversets.len() != n {
                    v.push(Violation::new(
                        ViolationKind::ShapeMismatch,
                        format!("{} coverset rows for n = {n}", m.coversets.len()),
                    ));
                }
                for (e, per_state) in m.coversets.iter().enumerate() {
                    if per_state.len() != k {
                        v.push(Violation::new(
                            ViolationKind::ShapeMismatch,
                            format!("coversets[{e}] has {} states, k = {k}", per_state.len()),
                        ));
                        continue;
                    }
                    for set in per_state {
                        for &d in set {
                            if d >= m.m {
                                v.push(Violation::new(
                                    ViolationKind::ShapeMismatch,
                                    format!("coverset of item {e} names element {d} >= m"),
                                ));
                            }
                        }
                    }
                }
            }
            UtilityModel::TruncatedAdditive(m) => {
                if !m.q.is_finite() || m.q <= 0.0 {
                    v.push(Violation::new(
                        ViolationKind::ShapeMismatch,
                        format!("goal Q = {} must be positive and finite", m.q),
                    ));
                }
                if m.gains.len() != n {
                    v.push(Violation::new(
                        ViolationKind::ShapeMismatch,
                        format!("{} gain rows for n = {n}", m.gains.len()),
                    ));
                }
                for (e, row) in m.gains.iter().enumerate() {
                    if row.len() != k {
                        v.push(Violation::new(
                            ViolationKind::ShapeMismatch,
                            format!("gains[{e}] has {} states, k = {k}", row.len()),
                        ));
                    }
                    for &g in row {
                        if !g.is_finite() || g < 0.0 {
                            v.push(Violation::new(
                                ViolationKind::ShapeMismatch,
                                format!("gain of item {e} is {g}"),
                            ));
                        }
                    }
                }
            }
            UtilityModel::Table(m) => {
                if !m.q.is_finite() || m.q <= 0.0 {
                    v.push(Violation::new(
                        ViolationKind::ShapeMismatch,
                        format!("goal Q = {} must be positive and finite", m.q),
                    ));
                }
                for entry in &m.entries {
                    for &(e, o) in &entry.rel {
                        if e >= n || o >= k {
                            v.push(Violation::new(
                                ViolationKind::ShapeMismatch,
                                format!("table rel pair ({e},{o}) outside n = {n}, k = {k}"),
                            ));
                        }
                    }
                    if !entry.value.is_finite() || entry.value < 0.0 {
                        v.push(Violation::new(
                            ViolationKind::ShapeMismatch,
                            format!("table value {} at {:?}", entry.value, entry.rel),
                        ));
                    }
                }
            }
        }
    }
}

/// The goal value and the minimum positive gap below it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GoalGap {
    pub q: f64,
    pub eta: f64,
    /// True when eta came from full lattice enumeration rather than a
    /// declared value or the integer-valued floor.
    pub eta_is_exact: bool,
}

impl Instance {
    /// E[F_psi(e)] = sum over states of P[Phi(e)=o] * marginal(psi, e, o).
    pub fn expected_marginal(&self, psi: &Subrealization, e: ItemId) -> Result<f64> {
        let base = self.utility.evaluate(psi)?;
        self.expected_marginal_from(psi, base, e)
    }

    /// As `expected_marginal`, with f(psi) already known.
    pub fn expected_marginal_from(
        &self,
        psi: &Subrealization,
        value_at_psi: f64,
        e: ItemId,
    ) -> Result<f64> {
        if psi.contains_item(e) {
            return Err(Error::ItemAlreadyAssigned { item: e });
        }
        let mut acc = 0.0;
        for o in self.support(e) {
            let p = self.prob(e, o);
            acc += p * self.utility.marginal_from(psi, value_at_psi, e, o)?;
        }
        Ok(acc)
    }
}

/// Returns Q after checking, when enumerable, that every positive-probability
/// realization attains it.
pub fn goal_value(inst: &Instance, budget: &Budget) -> Result<f64> {
    let q = inst.utility.goal();
    if inst.enumeration_size() <= budget.enumeration as u128 {
        let tol = cover_tolerance(q);
        for (phi, _) in inst.enumerate_realizations(budget)? {
            let psi = Subrealization::restrict(&phi, inst.items());
            let value = inst.utility.evaluate(&psi)?;
            if (value - q).abs() > tol {
                return Err(Error::NotCoverable {
                    detail: format!("realization {phi:?} has f = {value}, goal = {q}"),
                });
            }
        }
    }
    Ok(q)
}

/// Full-lattice size including the unassigned digit: product of (#states + 1)
/// per item, counting zero-probability states because the gap definition
/// quantifies over all subrealizations.
fn full_lattice_size(inst: &Instance) -> u128 {
    inst.items().map(|_| (inst.k + 1) as u128).product()
}

/// The minimum gap Q - f(psi) over all subrealizations with f(psi) < Q.
/// Exact when the full lattice fits the budget; otherwise falls back to the
/// declared eta, then to 1 for integer-valued utilities.
pub fn compute_eta(inst: &Instance, budget: &Budget) -> Result<GoalGap> {
    let q = inst.utility.goal();
    let size = full_lattice_size(inst);
    if size <= budget.lattice as u128 {
        let tol = cover_tolerance(q);
        let mut min_gap = f64::INFINITY;
        // Odometer over per-item digits: 0 = unassigned, j+1 = state j.
        let mut digits = vec![0usize; inst.n];
        loop {
            let pairs: Vec<(ItemId, StateId)> = digits
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d > 0)
                .map(|(e, &d)| (e, d - 1))
                .collect();
            let psi = Subrealization::from_pairs(pairs).expect("digits are per-item");
            // Table models define f only on listed entries; skip the rest.
            match inst.utility.evaluate(&psi) {
                Ok(value) => {
                    if value < q - tol {
                        min_gap = min_gap.min(q - value);
                    }
                }
                Err(Error::TableMiss { .. }) => {}
                Err(err) => return Err(err),
            }
            let mut pos = inst.n;
            loop {
                if pos == 0 {
                    let eta = if min_gap.is_finite() { min_gap } else { q };
                    return Ok(GoalGap {
                        q,
                        eta,
                        eta_is_exact: true,
                    });
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] <= inst.k {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }
    if let Some(eta) = inst.eta {
        return Ok(GoalGap {
            q,
            eta,
            eta_is_exact: false,
        });
    }
    if inst.integer_valued {
        return Ok(GoalGap {
            q,
            eta: 1.0,
            eta_is_exact: false,
        });
    }
    Err(Error::EtaUnavailable)
}

/// Per-realization polymatroid check over the support of the distribution.
///
/// Monotonicity and submodularity are checked in their local forms, which are
/// equivalent to the full pairwise quantification for set functions:
/// f(A) <= f(A + e), and f(A + x) + f(A + e) >= f(A + x + e) + f(A).
/// Violations are deduplicated by witness subrealization so the same failure
/// seen under many realizations is reported once.
pub fn validate_polymatroid(inst: &Instance, budget: &Budget) -> Result<Vec<Violation>> {
    let enum_size = inst.enumeration_size();
    let work = enum_size.saturating_mul(1u128 << inst.n.min(127));
    if work > budget.lattice as u128 {
        return Err(Error::BudgetExceeded {
            what: "polymatroid validation",
            needed: work,
            budget: budget.lattice,
        });
    }
    let realizations = inst.enumerate_realizations(budget)?;
    let n = inst.n;

    let per_phi = exec::try_ordered_map(
        ExecMode::default(),
        &realizations,
        |(phi, _)| -> Result<Vec<Violation>> {
            let mut found = Vec::new();
            // f over every subset of items under this realization.
            let mut table = vec![f64::NAN; 1 << n];
            let mut missing = false;
            for (mask, slot) in table.iter_mut().enumerate() {
                let members = (0..n).filter(|&e| mask & (1 << e) != 0);
                let psi = Subrealization::restrict(phi, members);
                match inst.utility.evaluate(&psi) {
                    Ok(value) => *slot = value,
                    Err(Error::TableMiss { rel }) => {
                        found.push(Violation::new(
                            ViolationKind::TableMissing,
                            format!("no entry for rel {rel:?}"),
                        ));
                        missing = true;
                    }
                    Err(err) => return Err(err),
                }
            }
            if missing {
                return Ok(found);
            }
            if table[0].abs() > VALUE_TOL {
                found.push(Violation::new(
                    ViolationKind::EmptyNotZero,
                    format!("f(empty) = {}", table[0]),
                ));
            }
            for mask in 0..(1usize << n) {
                for e in 0..n {
                    if mask & (1 << e) != 0 {
                        continue;
                    }
                    let with_e = mask | (1 << e);
                    if table[with_e] < table[mask] - VALUE_TOL {
                        let psi = Subrealization::restrict(
                            phi,
                            (0..n).filter(|&i| with_e & (1 << i) != 0),
                        );
                        found.push(Violation::new(
                            ViolationKind::NotMonotone,
                            format!(
                                "f drops from {} to {} when extending to {psi}",
                                table[mask], table[with_e]
                            ),
                        ));
                    }
                    for x in (e + 1)..n {
                        if mask & (1 << x) != 0 {
                            continue;
                        }
                        let with_x = mask | (1 << x);
                        let with_both = with_e | (1 << x);
                        if table[with_e] + table[with_x] + VALUE_TOL
                            < table[with_both] + table[mask]
                        {
                            let base = Subrealization::restrict(
                                phi,
                                (0..n).filter(|&i| mask & (1 << i) != 0),
                            );
                            found.push(Violation::new(
                                ViolationKind::NotSubmodular,
                                format!(
                                    "at base {base}: f+{{item {e}}} = {} and f+{{item {x}}} = {} \
                                     but together {} (base {})",
                                    table[with_e], table[with_x], table[with_both], table[mask]
                                ),
                            ));
                        }
                    }
                }
            }
            Ok(found)
        },
    )?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for violation in per_phi.into_iter().flatten() {
        if seen.insert((violation.kind, violation.detail.clone())) {
            out.push(violation);
        }
    }
    Ok(out)
}

/// How coverability was checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverabilityMethod {
    /// Every positive-probability realization was evaluated.
    Exact,
    /// Sufficient certain-coverage test for coverage models.
    CertainCoverage,
    /// Too large to check; absence of violations is not a certificate.
    Unverified,
}

/// Result of the coverability validator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverabilityReport {
    pub method: CoverabilityMethod,
    pub violations: Vec<Violation>,
}

impl CoverabilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.method != CoverabilityMethod::Unverified
    }
}

/// Checks Assumption "f(phi) = Q for every realization" on the support.
/// Exact when enumerable; aggregate findings are reported as single
/// violations with a count and first witness.
pub fn validate_coverability(inst: &Instance, budget: &Budget) -> CoverabilityReport {
    let q = inst.utility.goal();
    if inst.enumeration_size() <= budget.enumeration as u128 {
        let realizations = match inst.enumerate_realizations(budget) {
            Ok(r) => r,
            Err(_) => unreachable!("size checked against budget"),
        };
        let tol = cover_tolerance(q);
        let mut failing = 0usize;
        let mut first_fail: Option<String> = None;
        let mut missing = 0usize;
        let mut first_miss: Option<String> = None;
        for (phi, _) in &realizations {
            let psi = Subrealization::restrict(phi, inst.items());
            match inst.utility.evaluate(&psi) {
                Ok(value) => {
                    if (value - q).abs() > tol {
                        failing += 1;
                        first_fail
                            .get_or_insert_with(|| format!("phi = {phi:?} has f = {value}"));
                    }
                }
                Err(_) => {
                    missing += 1;
                    first_miss.get_or_insert_with(|| format!("phi = {phi:?}"));
                }
            }
        }
        let mut violations = Vec::new();
        if failing > 0 {
            violations.push(Violation::new(
                ViolationKind::NotCoverable,
                format!(
                    "{failing} of {} realizations miss goal {q}; first: {}",
                    realizations.len(),
                    first_fail.unwrap()
                ),
            ));
        }
        if missing > 0 {
            violations.push(Violation::new(
                ViolationKind::TableMissing,
                format!("{missing} realizations lack table entries; first: {}",
                    first_miss.unwrap()),
            ));
        }
        return CoverabilityReport {
            method: CoverabilityMethod::Exact,
            violations,
        };
    }
    if let UtilityModel::Coverage(m) = &inst.utility {
        // Certain coverage: an element is guaranteed iff some item covers it
        // in every positive-probability state.
        let mut certain = vec![false; m.m];
        for e in inst.items() {
            let mut always: Option<HashSet<usize>> = None;
            for o in inst.support(e) {
                let set: HashSet<usize> = m.coversets[e][o].iter().copied().collect();
                always = Some(match always {
                    None => set,
                    Some(prev) => prev.intersection(&set).copied().collect(),
                });
            }
            if let Some(always) = always {
                for d in always {
                    certain[d] = true;
                }
            }
        }
        let mut violations = Vec::new();
        for (d, &ok) in certain.iter().enumerate() {
            if !ok && m.weights[d] > 0.0 {
                violations.push(Violation::new(
                    ViolationKind::NotCoverable,
                    format!("ground element {d} is not certainly covered by any item"),
                ));
            }
        }
        return CoverabilityReport {
            method: CoverabilityMethod::CertainCoverage,
            violations,
        };
    }
    CoverabilityReport {
        method: CoverabilityMethod::Unverified,
        violations: Vec::new(),
    }
}

/// Order-invariance spot check: building psi through two extension orders
/// must produce the same canonical form and the same value.
pub fn validate_sufficiency(inst: &Instance, seed: u64, rounds: usize) -> Result<Vec<Violation>> {
    let mut violations = Vec::new();
    for round in 0..rounds {
        let mut rng = trial_rng(seed, round as u64);
        let phi = inst.sample_realization(&mut rng);
        let size = rng.random_range(0..=inst.n);
        let mut items: Vec<ItemId> = inst.items().collect();
        items.shuffle(&mut rng);
        items.truncate(size);

        let mut forward = Subrealization::empty();
        for &e in &items {
            forward = forward.extend(e, phi[e])?;
        }
        let mut backward = Subrealization::empty();
        for &e in items.iter().rev() {
            backward = backward.extend(e, phi[e])?;
        }
        if forward != backward {
            violations.push(Violation::new(
                ViolationKind::OrderDependent,
                format!("canonical forms differ: {forward} vs {backward}"),
            ));
            continue;
        }
        let a = inst.utility.evaluate(&forward);
        let b = inst.utility.evaluate(&backward);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                if (a - b).abs() > VALUE_TOL {
                    violations.push(Violation::new(
                        ViolationKind::OrderDependent,
                        format!("f({forward}) = {a} vs {b} depending on build order"),
                    ));
                }
            }
            (Err(Error::TableMiss { .. }), Err(Error::TableMiss { .. })) => {}
            (a, b) => {
                if a.is_err() != b.is_err() {
                    violations.push(Violation::new(
                        ViolationKind::OrderDependent,
                        format!("evaluation errs in one order only at {forward}"),
                    ));
                }
            }
        }
    }
    Ok(violations)
}
