//! Exact optimal adaptive policy by dynamic programming over the lattice of
//! subrealizations with positive-probability states.
//!
//! Independence of item states means the optimal expected remaining cost is
//! a function of rel(psi) alone, so the exponential space of decision trees
//! collapses onto this lattice:
//!   V(psi) = 0 when f(psi) = Q, else
//!   V(psi) = min over e not in dom(psi) of
//!            c(e) + sum over positive states o of P[state o] * V(psi + (e,o)).
//! Levels are filled bottom-up by |dom(psi)| descending; each selection adds
//! an item, so level L depends only on level L + 1.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::instance::{Budget, Instance, ItemId, StateId, Subrealization};
use crate::policy::Policy;
use crate::utility::is_cover;
use std::sync::Arc;

/// Mixed-radix index over subrealizations; digit 0 per item means
/// unassigned, digit j + 1 means the item's j-th positive-probability state.
#[derive(Debug, Clone)]
pub struct Lattice {
    radices: Vec<usize>,
    strides: Vec<usize>,
    /// Positive states per item, ascending.
    support: Vec<Vec<StateId>>,
    /// state -> digit - 1, per item; None for zero-probability states.
    position: Vec<Vec<Option<usize>>>,
    size: usize,
}

impl Lattice {
    pub fn new(inst: &Instance, budget: &Budget) -> Result<Self> {
        let support: Vec<Vec<StateId>> = inst.items().map(|e| inst.support(e).collect()).collect();
        let radices: Vec<usize> = support.iter().map(|s| s.len() + 1).collect();
        let mut size_u128: u128 = 1;
        for &r in &radices {
            size_u128 = size_u128.saturating_mul(r as u128);
        }
        if size_u128 > budget.lattice as u128 {
            return Err(Error::BudgetExceeded {
                what: "subrealization lattice",
                needed: size_u128,
                budget: budget.lattice,
            });
        }
        let mut strides = vec![0usize; inst.n];
        let mut acc = 1usize;
        for e in 0..inst.n {
            strides[e] = acc;
            acc *= radices[e];
        }
        let mut position = vec![vec![None; inst.k]; inst.n];
        for (e, states) in support.iter().enumerate() {
            for (j, &o) in states.iter().enumerate() {
                position[e][o] = Some(j);
            }
        }
        Ok(Lattice {
            radices,
            strides,
            support,
            position,
            size: acc,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Index of a subrealization; None if it uses a zero-probability state.
    pub fn encode(&self, psi: &Subrealization) -> Option<usize> {
        let mut idx = 0usize;
        for &(e, o) in psi.pairs() {
            idx += (self.position[e][o]? + 1) * self.strides[e];
        }
        Some(idx)
    }

    /// The subrealization at an index.
    pub fn decode(&self, mut idx: usize) -> Subrealization {
        let mut pairs = Vec::new();
        for e in 0..self.radices.len() {
            let digit = idx % self.radices[e];
            idx /= self.radices[e];
            if digit > 0 {
                pairs.push((e, self.support[e][digit - 1]));
            }
        }
        Subrealization::from_pairs(pairs).expect("digits are per-item")
    }

    fn assigned_count(&self, mut idx: usize) -> usize {
        let mut count = 0;
        for &r in &self.radices {
            if !idx.is_multiple_of(r) {
                count += 1;
            }
            idx /= r;
        }
        count
    }
}

/// Memoized optimal expected remaining cost and argmin item per node.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub lattice: Lattice,
    values: Vec<f64>,
    /// usize::MAX marks covered nodes (no selection).
    best: Vec<usize>,
    pub q: f64,
}

impl ValueTable {
    /// Number of memoized subrealizations.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// V(psi): optimal expected cost to finish from psi.
    pub fn value(&self, psi: &Subrealization) -> Result<f64> {
        let idx = self.lattice.encode(psi).ok_or_else(|| Error::DomainError {
            detail: format!("{psi} uses a zero-probability state"),
        })?;
        Ok(self.values[idx])
    }

    /// The optimal next item at psi; None when psi is already a cover.
    pub fn best_item(&self, psi: &Subrealization) -> Result<Option<ItemId>> {
        let idx = self.lattice.encode(psi).ok_or_else(|| Error::DomainError {
            detail: format!("{psi} uses a zero-probability state"),
        })?;
        Ok((self.best[idx] != usize::MAX).then_some(self.best[idx]))
    }

    /// Largest absolute defect when every entry is recomputed from its
    /// children. Zero for a sound memo, up to float roundoff.
    pub fn recheck(&self, inst: &Instance) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.values.len() {
            if self.best[idx] == usize::MAX {
                worst = worst.max(self.values[idx].abs());
                continue;
            }
            let psi = self.lattice.decode(idx);
            let mut min = f64::INFINITY;
            for e in inst.items().filter(|&e| !psi.contains_item(e)) {
                let mut cand = inst.cost(e);
                for (j, &o) in self.lattice.support[e].iter().enumerate() {
                    let child = idx + (j + 1) * self.lattice.strides[e];
                    cand += inst.prob(e, o) * self.values[child];
                }
                min = min.min(cand);
            }
            worst = worst.max((self.values[idx] - min).abs());
        }
        worst
    }
}

/// Computes E[C(pi*)] and the full value table.
pub fn optimal_value(inst: &Instance, budget: &Budget) -> Result<(f64, ValueTable)> {
    optimal_value_with_mode(inst, budget, ExecMode::default())
}

/// As `optimal_value`, with an explicit execution mode. Deterministic in
/// either mode: per-level results are collected in index order.
pub fn optimal_value_with_mode(
    inst: &Instance,
    budget: &Budget,
    mode: ExecMode,
) -> Result<(f64, ValueTable)> {
    let lattice = Lattice::new(inst, budget)?;
    let size = lattice.size();
    let mut levels: Vec<Vec<usize>> = vec![Vec::new(); inst.n + 1];
    for idx in 0..size {
        levels[lattice.assigned_count(idx)].push(idx);
    }
    let mut values = vec![f64::NAN; size];
    let mut best = vec![usize::MAX; size];
    let q = inst.utility.goal();
    for level in (0..=inst.n).rev() {
        let group = &levels[level];
        if group.is_empty() {
            continue;
        }
        let solved =
            exec::try_ordered_map(mode, group, |&idx| -> Result<(f64, usize)> {
                let psi = lattice.decode(idx);
                let value = inst.utility.evaluate(&psi)?;
                if is_cover(value, q) {
                    return Ok((0.0, usize::MAX));
                }
                if level == inst.n {
                    return Err(Error::NoProgressPossible);
                }
                let mut best_cost = f64::INFINITY;
                let mut best_item = usize::MAX;
                for e in inst.items().filter(|&e| !psi.contains_item(e)) {
                    let mut cand = inst.cost(e);
                    for (j, &o) in lattice.support[e].iter().enumerate() {
                        let child = idx + (j + 1) * lattice.strides[e];
                        cand += inst.prob(e, o) * values[child];
                    }
                    if cand < best_cost {
                        best_cost = cand;
                        best_item = e;
                    }
                }
                Ok((best_cost, best_item))
            })?;
        for (&idx, (v, b)) in group.iter().zip(solved) {
            values[idx] = v;
            best[idx] = b;
        }
    }
    let root = values[0];
    Ok((
        root,
        ValueTable {
            lattice,
            values,
            best,
            q,
        },
    ))
}

/// The optimal adaptive policy, reading selections from a value table.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    pub table: Arc<ValueTable>,
}

impl OptimalPolicy {
    pub fn new(table: Arc<ValueTable>) -> Self {
        OptimalPolicy { table }
    }

    /// Solves the instance and wraps the table.
    pub fn solve(inst: &Instance, budget: &Budget) -> Result<(f64, Self)> {
        let (value, table) = optimal_value(inst, budget)?;
        Ok((value, OptimalPolicy::new(Arc::new(table))))
    }
}

impl Policy for OptimalPolicy {
    fn next_item(&self, _inst: &Instance, psi: &Subrealization) -> Result<ItemId> {
        self.table
            .best_item(psi)?
            .ok_or_else(|| Error::DomainError {
                detail: format!("{psi} is already a cover; no next item"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::GreedyPolicy;
    use crate::policy::{expected_cost_exact, materialize_tree, RandomPolicy};
    use crate::utility::{AdditiveModel, CoverageModel, UtilityModel};

    fn additive(costs: Vec<f64>, probs: Vec<Vec<f64>>, q: f64, gains: Vec<Vec<f64>>) -> Instance {
        Instance {
            n: costs.len(),
            k: probs[0].len(),
            costs,
            probs,
            integer_valued: false,
            utility: UtilityModel::TruncatedAdditive(AdditiveModel { q, gains }),
            eta: None,
        }
    }

    fn three_subsets() -> Instance {
        Instance {
            n: 3,
            k: 1,
            costs: vec![1.0; 3],
            probs: vec![vec![1.0]; 3],
            integer_valued: true,
            utility: UtilityModel::Coverage(CoverageModel::new(
                6,
                vec![1.0; 6],
                vec![
                    vec![vec![0, 1, 2, 5]],
                    vec![vec![2, 3, 5]],
                    vec![vec![0, 1, 4]],
                ],
            )),
            eta: None,
        }
    }

    #[test]
    fn single_item_value_is_its_cost() {
        let inst = additive(vec![5.0], vec![vec![1.0]], 4.0, vec![vec![4.0]]);
        let (value, table) = optimal_value(&inst, &Budget::default()).unwrap();
        assert_eq!(value, 5.0);
        assert_eq!(table.best_item(&Subrealization::empty()).unwrap(), Some(0));
    }

    #[test]
    fn picks_cheaper_of_two_sufficient_items() {
        let inst = additive(
            vec![3.0, 4.0],
            vec![vec![0.5, 0.5]; 2],
            4.0,
            vec![vec![4.0, 5.0]; 2],
        );
        let (value, table) = optimal_value(&inst, &Budget::default()).unwrap();
        assert_eq!(value, 3.0);
        assert_eq!(table.best_item(&Subrealization::empty()).unwrap(), Some(0));
    }

    #[test]
    fn matches_two_item_brute_force() {
        // All one- and two-step decision trees, by hand: choose a first item;
        // in each state either done or forced to take the other item.
        let inst = additive(
            vec![1.0, 1.6],
            vec![vec![0.4, 0.6], vec![0.7, 0.3]],
            3.0,
            vec![vec![3.0, 1.0], vec![2.0, 3.0]],
        );
        let q = 3.0;
        let mut brute = f64::INFINITY;
        for first in 0..2usize {
            let other = 1 - first;
            let mut cost = inst.cost(first);
            for o in 0..2usize {
                let psi = Subrealization::from_pairs(vec![(first, o)]).unwrap();
                let f = inst.utility.evaluate(&psi).unwrap();
                if f < q {
                    cost += inst.prob(first, o) * inst.cost(other);
                }
            }
            brute = brute.min(cost);
        }
        let (value, _) = optimal_value(&inst, &Budget::default()).unwrap();
        assert!((value - brute).abs() <= 1e-12);
    }

    #[test]
    fn deterministic_cover_uses_min_cost_pair() {
        let inst = three_subsets();
        let (value, policy) = OptimalPolicy::solve(&inst, &Budget::default()).unwrap();
        assert_eq!(value, 2.0);
        let trace = crate::policy::execute(&inst, &policy, &vec![0, 0, 0]).unwrap();
        let mut picked = trace.selected();
        picked.sort_unstable();
        assert_eq!(picked, vec![1, 2]);
    }

    #[test]
    fn materialized_optimal_tree_reproduces_value() {
        let inst = additive(
            vec![1.0, 1.6, 0.8],
            vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]],
            3.0,
            vec![vec![3.0, 1.0], vec![2.0, 3.0], vec![1.0, 2.0]],
        );
        let (value, policy) = OptimalPolicy::solve(&inst, &Budget::default()).unwrap();
        let tree = materialize_tree(&inst, &policy, &Budget::default()).unwrap();
        let cost = expected_cost_exact(&inst, &tree);
        assert!((value - cost).abs() <= 1e-12 * value.abs().max(1.0));
    }

    #[test]
    fn dominates_greedy_and_random_policies() {
        let inst = additive(
            vec![1.0, 1.6, 0.8],
            vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]],
            3.0,
            vec![vec![3.0, 1.0], vec![2.0, 3.0], vec![1.0, 2.0]],
        );
        let (value, _) = optimal_value(&inst, &Budget::default()).unwrap();
        let greedy_tree =
            materialize_tree(&inst, &GreedyPolicy::exact(), &Budget::default()).unwrap();
        assert!(value <= expected_cost_exact(&inst, &greedy_tree) + 1e-12);
        for seed in 0..20 {
            let tree =
                materialize_tree(&inst, &RandomPolicy { seed }, &Budget::default()).unwrap();
            assert!(value <= expected_cost_exact(&inst, &tree) + 1e-12);
        }
    }

    #[test]
    fn memo_recheck_is_clean() {
        let inst = additive(
            vec![1.0, 1.6, 0.8],
            vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]],
            3.0,
            vec![vec![3.0, 1.0], vec![2.0, 3.0], vec![1.0, 2.0]],
        );
        let (_, table) = optimal_value(&inst, &Budget::default()).unwrap();
        assert!(table.recheck(&inst) <= 1e-12);
    }

    #[test]
    fn modes_agree_bitwise() {
        let inst = additive(
            vec![1.0, 1.6, 0.8],
            vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]],
            3.0,
            vec![vec![3.0, 1.0], vec![2.0, 3.0], vec![1.0, 2.0]],
        );
        let (seq, _) =
            optimal_value_with_mode(&inst, &Budget::default(), ExecMode::Sequential).unwrap();
        let (def, _) = optimal_value(&inst, &Budget::default()).unwrap();
        assert_eq!(seq.to_bits(), def.to_bits());
    }

    #[test]
    fn budget_exceeded_on_large_lattice() {
        let inst = additive(
            vec![1.0; 25],
            vec![vec![0.5, 0.5]; 25],
            25.0,
            vec![vec![1.0, 1.0]; 25],
        );
        assert!(matches!(
            optimal_value(&inst, &Budget::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn uncoverable_instance_errors() {
        let inst = additive(vec![1.0], vec![vec![1.0]], 10.0, vec![vec![3.0]]);
        assert!(matches!(
            optimal_value(&inst, &Budget::default()),
            Err(Error::NoProgressPossible)
        ));
    }

    #[test]
    fn zero_probability_state_is_unencodable() {
        let inst = additive(
            vec![1.0],
            vec![vec![1.0, 0.0]],
            2.0,
            vec![vec![2.0, 0.0]],
        );
        let (_, table) = optimal_value(&inst, &Budget::default()).unwrap();
        let psi = Subrealization::from_pairs(vec![(0, 1)]).unwrap();
        assert!(table.value(&psi).is_err());
        let ok = Subrealization::from_pairs(vec![(0, 0)]).unwrap();
        assert_eq!(table.value(&ok).unwrap(), 0.0);
    }
}
