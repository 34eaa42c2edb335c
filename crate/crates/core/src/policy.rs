//! Adaptive policies and their decision trees.
//!
//! A policy is a next-item rule on subrealizations with f(psi) < Q. Executing
//! one against a realization yields a trace; materializing one yields the full
//! decision tree with cached utilities, reach probabilities, and path costs.
//! Node indices are BFS discovery order with children pushed in ascending
//! state order, which later modules rely on as a deterministic tie-break.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::instance::{trial_rng, Budget, Instance, ItemId, Realization, StateId, Subrealization};
use crate::utility::{cover_tolerance, is_cover};
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;

/// Next-item rule. Must return an unassigned item for every reachable
/// subrealization below the goal. `Sync` so trees and Monte Carlo sweeps can
/// share a policy across threads.
pub trait Policy: Sync {
    fn next_item(&self, inst: &Instance, psi: &Subrealization) -> Result<ItemId>;
}

/// A finite policy given as an explicit map from canonical rel(psi) to item.
#[derive(Debug, Clone, Default)]
pub struct ExplicitPolicy {
    map: HashMap<Subrealization, ItemId>,
}

impl ExplicitPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the rule rel -> item; pairs may be given in any order.
    pub fn insert(&mut self, rel: Vec<(ItemId, StateId)>, item: ItemId) -> Result<()> {
        let psi = Subrealization::from_pairs(rel)?;
        self.map.insert(psi, item);
        Ok(())
    }

    /// Builds a policy from (rel, item) rules in one call.
    pub fn from_rules(
        rules: impl IntoIterator<Item = (Vec<(ItemId, StateId)>, ItemId)>,
    ) -> Result<Self> {
        let mut p = Self::new();
        for (rel, item) in rules {
            p.insert(rel, item)?;
        }
        Ok(p)
    }
}

impl Policy for ExplicitPolicy {
    fn next_item(&self, _inst: &Instance, psi: &Subrealization) -> Result<ItemId> {
        self.map
            .get(psi)
            .copied()
            .ok_or_else(|| Error::PolicyIncomplete {
                rel: psi.pairs().to_vec(),
            })
    }
}

/// Picks a uniformly pseudorandom unassigned item, deterministically in
/// (seed, psi). Useful as a baseline the optimum must dominate.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn next_item(&self, inst: &Instance, psi: &Subrealization) -> Result<ItemId> {
        let free: Vec<ItemId> = inst.items().filter(|&e| !psi.contains_item(e)).collect();
        if free.is_empty() {
            return Err(Error::NoProgressPossible);
        }
        // FNV-1a over the canonical pairs, folded with the seed.
        let mut h: u64 = 0xcbf29ce484222325 ^ self.seed;
        for &(e, o) in psi.pairs() {
            for byte in (e as u64).to_le_bytes().into_iter().chain((o as u64).to_le_bytes()) {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        let mut rng = trial_rng(self.seed, h);
        Ok(free[rng.random_range(0..free.len())])
    }
}

/// One non-leaf visit during execution: the node, its utility, the selected
/// item, the observed state, the utility gained, and the item's unit price
/// c(item) / E[F_psi(item)] at the moment of selection.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub psi: Subrealization,
    pub value: f64,
    pub item: ItemId,
    pub state: StateId,
    pub marginal: f64,
    pub unit_price: f64,
}

/// The result of running a policy against one realization.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    /// The final subrealization, with f(cover) = Q.
    pub cover: Subrealization,
    pub cover_value: f64,
    /// Total cost of the selected items.
    pub cost: f64,
}

impl ExecutionTrace {
    /// Items in selection order.
    pub fn selected(&self) -> Vec<ItemId> {
        self.steps.iter().map(|s| s.item).collect()
    }
}

/// Runs the policy on a fixed realization until the goal value is reached.
pub fn execute(inst: &Instance, p: &dyn Policy, phi: &Realization) -> Result<ExecutionTrace> {
    let q = inst.utility.goal();
    let tol = cover_tolerance(q);
    let mut psi = Subrealization::empty();
    let mut value = inst.utility.evaluate(&psi)?;
    let mut steps = Vec::new();
    let mut cost = 0.0;
    while value < q - tol {
        if psi.len() == inst.n {
            return Err(Error::NonCoveringPolicy {
                reached: value,
                goal: q,
            });
        }
        let item = p.next_item(inst, &psi)?;
        if psi.contains_item(item) {
            return Err(Error::DomainError {
                detail: format!("policy selected already-assigned item {item} at {psi}"),
            });
        }
        let state = phi[item];
        // Utilities are re-evaluated at each node, never accumulated, so a
        // trace's values are bit-identical to materialized tree values.
        let extended = psi.extend(item, state)?;
        let ext_value = inst.utility.evaluate(&extended)?;
        let em = inst.expected_marginal_from(&psi, value, item)?;
        let unit_price = if em > 0.0 {
            inst.cost(item) / em
        } else {
            f64::INFINITY
        };
        cost += inst.cost(item);
        steps.push(TraceStep {
            psi: psi.clone(),
            value,
            item,
            state,
            marginal: ext_value - value,
            unit_price,
        });
        psi = extended;
        value = ext_value;
    }
    Ok(ExecutionTrace {
        steps,
        cover: psi,
        cover_value: value,
        cost,
    })
}

/// Payload of a decision-tree node.
#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf,
    Internal {
        item: ItemId,
        /// E[F_psi(item)] over the item's positive states.
        expected_marginal: f64,
        /// c(item) / expected_marginal; infinite when no gain is expected.
        unit_price: f64,
        /// (state, child node index), ascending by state.
        children: Vec<(StateId, u32)>,
    },
}

/// One materialized node.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub psi: Subrealization,
    /// f(psi).
    pub value: f64,
    /// Probability of reaching this node from the root.
    pub reach_prob: f64,
    pub depth: u32,
    pub parent: Option<u32>,
    /// Cost spent strictly before reaching this node.
    pub path_cost: f64,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }
}

/// A fully materialized decision tree. Node 0 is the root; indices follow
/// BFS discovery order with children enqueued in ascending state order.
#[derive(Debug, Clone)]
pub struct PolicyTree {
    pub nodes: Vec<TreeNode>,
    /// Canonical rel(psi) -> node index.
    pub index: HashMap<Subrealization, u32>,
    pub q: f64,
}

impl PolicyTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Node indices visited by the realization, root through leaf.
    pub fn path(&self, phi: &Realization) -> Result<Vec<u32>> {
        let mut at = 0u32;
        let mut out = vec![at];
        loop {
            match &self.nodes[at as usize].kind {
                NodeKind::Leaf => return Ok(out),
                NodeKind::Internal { item, children, .. } => {
                    let state = phi[*item];
                    let next = children
                        .iter()
                        .find(|&&(o, _)| o == state)
                        .map(|&(_, idx)| idx)
                        .ok_or_else(|| Error::DomainError {
                            detail: format!(
                                "realization {phi:?} assigns zero-probability state {state} \
                                 to item {item}"
                            ),
                        })?;
                    out.push(next);
                    at = next;
                }
            }
        }
    }

    /// Indices of non-leaf nodes in BFS order.
    pub fn internal_nodes(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32)
            .filter(|&i| !self.nodes[i as usize].is_leaf())
            .collect()
    }

    /// Expected cost as the leaf sum of reach probability times path cost.
    pub fn leaf_sum_cost(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.reach_prob * n.path_cost)
            .sum()
    }

    /// Expected cost as the node sum of reach probability times item cost.
    pub fn node_sum_cost(&self, inst: &Instance) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Leaf => None,
                NodeKind::Internal { item, .. } => Some(n.reach_prob * inst.cost(*item)),
            })
            .sum()
    }

    /// Serializable snapshot for `solve --emit-tree`.
    pub fn export(&self) -> TreeExport {
        TreeExport {
            q: self.q,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| {
                    let (item, expected_marginal, unit_price, children) = match &n.kind {
                        NodeKind::Leaf => (None, None, None, None),
                        NodeKind::Internal {
                            item,
                            expected_marginal,
                            unit_price,
                            children,
                        } => (
                            Some(*item),
                            Some(*expected_marginal),
                            unit_price.is_finite().then_some(*unit_price),
                            Some(children.clone()),
                        ),
                    };
                    NodeExport {
                        id: id as u32,
                        rel: n.psi.pairs().to_vec(),
                        value: n.value,
                        reach_prob: n.reach_prob,
                        path_cost: n.path_cost,
                        item,
                        expected_marginal,
                        unit_price,
                        children,
                    }
                })
                .collect(),
        }
    }
}

/// JSON form of a materialized tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeExport {
    pub q: f64,
    pub nodes: Vec<NodeExport>,
}

/// JSON form of one node. `unit_price` is omitted when infinite.
#[derive(Debug, Clone, Serialize)]
pub struct NodeExport {
    pub id: u32,
    pub rel: Vec<(ItemId, StateId)>,
    pub value: f64,
    pub reach_prob: f64,
    pub path_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<ItemId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_marginal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<(StateId, u32)>>,
}

struct PendingNode {
    psi: Subrealization,
    reach_prob: f64,
    depth: u32,
    parent: Option<u32>,
    path_cost: f64,
}

/// Materializes the decision tree of a policy, breadth-first.
pub fn materialize_tree(inst: &Instance, p: &dyn Policy, budget: &Budget) -> Result<PolicyTree> {
    let q = inst.utility.goal();
    let mut pending = vec![PendingNode {
        psi: Subrealization::empty(),
        reach_prob: 1.0,
        depth: 0,
        parent: None,
        path_cost: 0.0,
    }];
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut index = HashMap::new();
    let mut head = 0usize;
    while head < pending.len() {
        if pending.len() > budget.tree_nodes {
            return Err(Error::BudgetExceeded {
                what: "policy tree nodes",
                needed: pending.len() as u128,
                budget: budget.tree_nodes,
            });
        }
        let cur = &pending[head];
        let value = inst.utility.evaluate(&cur.psi)?;
        let kind = if is_cover(value, q) {
            NodeKind::Leaf
        } else {
            if cur.psi.len() == inst.n {
                return Err(Error::NonCoveringPolicy {
                    reached: value,
                    goal: q,
                });
            }
            let item = p.next_item(inst, &cur.psi)?;
            if cur.psi.contains_item(item) {
                return Err(Error::DomainError {
                    detail: format!(
                        "policy selected already-assigned item {item} at {}",
                        cur.psi
                    ),
                });
            }
            let expected_marginal = inst.expected_marginal_from(&cur.psi, value, item)?;
            let unit_price = if expected_marginal > 0.0 {
                inst.cost(item) / expected_marginal
            } else {
                f64::INFINITY
            };
            let parent_reach = cur.reach_prob;
            let parent_depth = cur.depth;
            let child_path_cost = cur.path_cost + inst.cost(item);
            let child_psis: Vec<(StateId, Subrealization, f64)> = inst
                .support(item)
                .map(|o| {
                    let child = cur.psi.extend(item, o).expect("item unassigned");
                    (o, child, parent_reach * inst.prob(item, o))
                })
                .collect();
            let mut children = Vec::with_capacity(child_psis.len());
            for (o, child, reach) in child_psis {
                let idx = pending.len() as u32;
                children.push((o, idx));
                pending.push(PendingNode {
                    psi: child,
                    reach_prob: reach,
                    depth: parent_depth + 1,
                    parent: Some(head as u32),
                    path_cost: child_path_cost,
                });
            }
            NodeKind::Internal {
                item,
                expected_marginal,
                unit_price,
                children,
            }
        };
        let cur = &pending[head];
        index.insert(cur.psi.clone(), head as u32);
        nodes.push(TreeNode {
            psi: cur.psi.clone(),
            value,
            reach_prob: cur.reach_prob,
            depth: cur.depth,
            parent: cur.parent,
            path_cost: cur.path_cost,
            kind,
        });
        head += 1;
    }
    Ok(PolicyTree { nodes, index, q })
}

/// Exact expected cost of a materialized tree. Computes both the leaf-sum
/// and node-sum forms and insists they agree; a mismatch is a library bug.
pub fn expected_cost_exact(inst: &Instance, tree: &PolicyTree) -> f64 {
    let by_leaves = tree.leaf_sum_cost();
    let by_nodes = tree.node_sum_cost(inst);
    let tol = 1e-12 * by_leaves.abs().max(1.0);
    assert!(
        (by_leaves - by_nodes).abs() <= tol,
        "leaf-sum {by_leaves} and node-sum {by_nodes} expected costs disagree"
    );
    by_leaves
}

/// Monte Carlo estimate of expected cost: (mean, standard error).
/// Deterministic in the seed regardless of execution mode.
pub fn expected_cost_mc(
    inst: &Instance,
    p: &dyn Policy,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    expected_cost_mc_with_mode(inst, p, trials, seed, ExecMode::default())
}

/// As `expected_cost_mc`, with an explicit execution mode.
pub fn expected_cost_mc_with_mode(
    inst: &Instance,
    p: &dyn Policy,
    trials: u64,
    seed: u64,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    assert!(trials >= 1, "at least one trial required");
    let costs = exec::try_ordered_map_range(mode, trials as usize, |t| -> Result<f64> {
        let mut rng = trial_rng(seed, t as u64);
        let phi = inst.sample_realization(&mut rng);
        Ok(execute(inst, p, &phi)?.cost)
    })?;
    // Compensated sums: naive accumulation over 1e5+ trials drifts by more
    // than the standard error when the cost distribution is degenerate.
    let mean = neumaier_sum(costs.iter().copied()) / trials as f64;
    let stderr = if trials == 1 {
        0.0
    } else {
        let ss = neumaier_sum(costs.iter().map(|c| (c - mean) * (c - mean)));
        (ss / (trials as f64 * (trials as f64 - 1.0))).sqrt()
    };
    Ok((mean, stderr))
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}
