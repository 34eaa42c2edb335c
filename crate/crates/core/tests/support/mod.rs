//! Independent oracles for the integration suites.
//!
//! Everything here recomputes results from first principles: its own utility
//! evaluation, its own recursion over realizations, its own set-cover
//! search. None of it calls the library's solvers, so agreement is evidence
//! rather than tautology.

// Each test target compiles this module separately and uses its own subset.
#![allow(dead_code)]

use sscover::{Instance, ItemId, Policy, StateId, Subrealization, UtilityModel};

/// Utility of a set of observations, evaluated directly per family.
pub fn eval_oracle(inst: &Instance, pairs: &[(ItemId, StateId)]) -> f64 {
    match &inst.utility {
        UtilityModel::Coverage(m) => {
            let mut covered = vec![false; m.m];
            for &(e, o) in pairs {
                for &g in &m.coversets[e][o] {
                    covered[g] = true;
                }
            }
            covered
                .iter()
                .zip(&m.weights)
                .filter(|&(&c, _)| c)
                .map(|(_, &w)| w)
                .sum()
        }
        UtilityModel::TruncatedAdditive(m) => {
            let total: f64 = pairs.iter().map(|&(e, o)| m.gains[e][o]).sum();
            total.min(m.q)
        }
        UtilityModel::Table(m) => {
            let mut sorted = pairs.to_vec();
            sorted.sort_unstable();
            m.entries
                .iter()
                .find(|entry| {
                    let mut rel = entry.rel.clone();
                    rel.sort_unstable();
                    rel == sorted
                })
                .map(|entry| entry.value)
                .expect("oracle evaluated a rel outside the table")
        }
    }
}

/// Joint probability of a full realization.
pub fn joint_probability(inst: &Instance, phi: &[StateId]) -> f64 {
    phi.iter()
        .enumerate()
        .map(|(e, &o)| inst.probs[e][o])
        .product()
}

/// All positive-probability realizations, by plain odometer.
pub fn realizations_oracle(inst: &Instance) -> Vec<(Vec<StateId>, f64)> {
    let mut out = Vec::new();
    let mut phi = vec![0usize; inst.n];
    loop {
        let p = joint_probability(inst, &phi);
        if p > 0.0 {
            out.push((phi.clone(), p));
        }
        let mut carry = 0;
        loop {
            if carry == inst.n {
                return out;
            }
            phi[carry] += 1;
            if phi[carry] < inst.k {
                break;
            }
            phi[carry] = 0;
            carry += 1;
        }
    }
}

fn goal(inst: &Instance) -> f64 {
    inst.utility.goal()
}

fn is_cover_oracle(inst: &Instance, value: f64) -> bool {
    let q = goal(inst);
    value >= q - 1e-9 * q.abs().max(1.0)
}

/// Expected cost of a policy by direct recursion over observation prefixes.
/// No tree is materialized; this is the costing the library's leaf and node
/// sums must both reproduce.
pub fn policy_cost_oracle(inst: &Instance, policy: &dyn Policy) -> f64 {
    fn rec(inst: &Instance, policy: &dyn Policy, pairs: &mut Vec<(ItemId, StateId)>) -> f64 {
        let value = eval_oracle(inst, pairs);
        if is_cover_oracle(inst, value) {
            return 0.0;
        }
        let psi = Subrealization::from_pairs(pairs.clone()).expect("items are distinct");
        let e = policy
            .next_item(inst, &psi)
            .expect("policy defined below the goal");
        let mut expected = inst.costs[e];
        for o in 0..inst.k {
            let p = inst.probs[e][o];
            if p == 0.0 {
                continue;
            }
            pairs.push((e, o));
            expected += p * rec(inst, policy, pairs);
            pairs.pop();
        }
        expected
    }
    rec(inst, policy, &mut Vec::new())
}

/// Minimum expected cost over all adaptive policies, by bare exhaustive
/// recursion with no memoization. Exponential; keep n tiny.
pub fn optimal_cost_oracle(inst: &Instance) -> f64 {
    fn rec(inst: &Instance, pairs: &mut Vec<(ItemId, StateId)>) -> f64 {
        let value = eval_oracle(inst, pairs);
        if is_cover_oracle(inst, value) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for e in 0..inst.n {
            if pairs.iter().any(|&(d, _)| d == e) {
                continue;
            }
            let mut cost = inst.costs[e];
            for o in 0..inst.k {
                let p = inst.probs[e][o];
                if p == 0.0 {
                    continue;
                }
                pairs.push((e, o));
                cost += p * rec(inst, pairs);
                pairs.pop();
            }
            best = best.min(cost);
        }
        assert!(
            best.is_finite(),
            "no item makes progress below the goal: uncoverable fixture"
        );
        best
    }
    rec(inst, &mut Vec::new())
}

/// Cheapest set cover by exhaustive subset search.
pub fn min_cover_oracle(sets: &[Vec<usize>], costs: &[f64], m: usize) -> f64 {
    let n = sets.len();
    let mut best = f64::INFINITY;
    for mask in 0..(1usize << n) {
        let mut covered = vec![false; m];
        let mut cost = 0.0;
        for (i, set) in sets.iter().enumerate() {
            if mask & (1 << i) != 0 {
                cost += costs[i];
                for &g in set {
                    covered[g] = true;
                }
            }
        }
        if covered.iter().all(|&c| c) {
            best = best.min(cost);
        }
    }
    assert!(best.is_finite(), "ground set not coverable by the family");
    best
}

/// Classical density-rule greedy on raw sets: repeatedly take the subset
/// minimizing cost per newly covered element, lowest index on ties.
pub fn density_greedy_oracle(sets: &[Vec<usize>], costs: &[f64], m: usize) -> Vec<usize> {
    let mut covered = vec![false; m];
    let mut taken = vec![false; sets.len()];
    let mut order = Vec::new();
    while covered.iter().any(|&c| !c) {
        let mut best: Option<(usize, f64)> = None;
        for (i, set) in sets.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let fresh = set.iter().filter(|&&g| !covered[g]).count();
            if fresh == 0 {
                continue;
            }
            let price = costs[i] / fresh as f64;
            let better = match best {
                None => true,
                Some((_, b)) => price < b,
            };
            if better {
                best = Some((i, price));
            }
        }
        let (pick, _) = best.expect("uncovered element with no remaining set");
        taken[pick] = true;
        order.push(pick);
        for &g in &sets[pick] {
            covered[g] = true;
        }
    }
    order
}
