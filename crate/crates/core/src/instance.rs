//! Items, states, costs, the independent state distribution, and the
//! subrealization/realization vocabulary used by every other module.
//!
//! An instance is immutable after construction and safe to share across
//! threads. Realization enumeration is item-major lexicographic with
//! zero-probability branches pruned, so parallel consumers can reduce over
//! the returned slice in index order and stay deterministic.

use crate::error::{Error, Result, Violation, ViolationKind};
use crate::utility::UtilityModel;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of an item, unique within an instance; total order by index.
pub type ItemId = usize;
/// Index of a state, unique within an instance.
pub type StateId = usize;

/// A total assignment of states to items; `states[e]` is the state of item `e`.
pub type Realization = Vec<StateId>;

/// Per-item state probabilities must sum to 1 within this tolerance.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;

/// Size limits for the exponential sweeps. Exceeding a budget is an error,
/// never a silent truncation: verification on a partial sweep is meaningless.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Budget {
    /// Maximum number of positive-probability realizations to enumerate.
    pub enumeration: usize,
    /// Maximum number of subrealization-lattice states (DP and eta scans).
    pub lattice: usize,
    /// Maximum number of decision-tree nodes to materialize.
    pub tree_nodes: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            enumeration: 1_000_000,
            lattice: 1_000_000,
            tree_nodes: 100_000,
        }
    }
}

impl Budget {
    /// One knob for all three limits (CLI `--budget`).
    pub fn uniform(limit: usize) -> Self {
        Budget {
            enumeration: limit,
            lattice: limit,
            tree_nodes: limit,
        }
    }
}

/// A partial assignment of states to items, kept in canonical form:
/// pairs sorted by item, one pair per item. Canonical form makes equality
/// coincide with rel(psi) equality, so the struct can key memo tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Subrealization {
    pairs: Vec<(ItemId, StateId)>,
}

impl Subrealization {
    /// The empty assignment (the root of every decision tree).
    pub fn empty() -> Self {
        Subrealization { pairs: Vec::new() }
    }

    /// Canonicalizes an arbitrary pair list; rejects duplicate items.
    pub fn from_pairs(mut pairs: Vec<(ItemId, StateId)>) -> Result<Self> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::ItemAlreadyAssigned { item: w[0].0 });
            }
        }
        Ok(Subrealization { pairs })
    }

    /// The sorted (item, state) pairs: rel(psi).
    pub fn pairs(&self) -> &[(ItemId, StateId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Items with an assigned state, ascending.
    pub fn dom(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.pairs.iter().map(|&(e, _)| e)
    }

    pub fn contains_item(&self, e: ItemId) -> bool {
        self.state_of(e).is_some()
    }

    pub fn state_of(&self, e: ItemId) -> Option<StateId> {
        self.pairs
            .binary_search_by_key(&e, |&(item, _)| item)
            .ok()
            .map(|idx| self.pairs[idx].1)
    }

    /// Returns psi extended by (e, o), preserving canonical order.
    pub fn extend(&self, e: ItemId, o: StateId) -> Result<Self> {
        match self.pairs.binary_search_by_key(&e, |&(item, _)| item) {
            Ok(_) => Err(Error::ItemAlreadyAssigned { item: e }),
            Err(pos) => {
                let mut pairs = Vec::with_capacity(self.pairs.len() + 1);
                pairs.extend_from_slice(&self.pairs[..pos]);
                pairs.push((e, o));
                pairs.extend_from_slice(&self.pairs[pos..]);
                Ok(Subrealization { pairs })
            }
        }
    }

    /// True iff every observed pair agrees with the total realization.
    pub fn consistent_with(&self, phi: &[StateId]) -> bool {
        self.pairs.iter().all(|&(e, o)| phi[e] == o)
    }

    /// True iff rel(self) is a subset of rel(other).
    pub fn is_subset_of(&self, other: &Subrealization) -> bool {
        self.pairs.iter().all(|&(e, o)| other.state_of(e) == Some(o))
    }

    /// The restriction of a total realization to the given items.
    pub fn restrict(phi: &[StateId], items: impl IntoIterator<Item = ItemId>) -> Self {
        let mut pairs: Vec<(ItemId, StateId)> =
            items.into_iter().map(|e| (e, phi[e])).collect();
        pairs.sort_unstable();
        Subrealization { pairs }
    }
}

impl std::fmt::Display for Subrealization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (idx, (e, o)) in self.pairs.iter().enumerate() {
            if idx > 0 {
                write!(f, ",")?;
            }
            write!(f, "({e},{o})")?;
        }
        write!(f, "}}")
    }
}

/// A Stochastic Submodular Cover instance: n items with positive costs,
/// k states per item with independent marginals, and a utility model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub k: usize,
    pub costs: Vec<f64>,
    /// `probs[e][o]` = P[Phi(e) = o]; each row sums to 1.
    pub probs: Vec<Vec<f64>>,
    pub integer_valued: bool,
    pub utility: UtilityModel,
    /// Optional declared minimum goal gap, used only as the compute_eta
    /// fallback when the subrealization lattice is too large to enumerate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl Instance {
    pub fn cost(&self, e: ItemId) -> f64 {
        self.costs[e]
    }

    pub fn prob(&self, e: ItemId, o: StateId) -> f64 {
        self.probs[e][o]
    }

    pub fn items(&self) -> std::ops::Range<ItemId> {
        0..self.n
    }

    /// States of `e` with positive probability, ascending.
    pub fn support(&self, e: ItemId) -> impl Iterator<Item = StateId> + '_ {
        self.probs[e]
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > 0.0)
            .map(|(o, _)| o)
    }

    /// Number of positive-probability states of `e`.
    pub fn support_len(&self, e: ItemId) -> usize {
        self.probs[e].iter().filter(|&&p| p > 0.0).count()
    }

    /// Product of positive-support sizes: the exact enumeration count.
    pub fn enumeration_size(&self) -> u128 {
        self.items()
            .map(|e| self.support_len(e) as u128)
            .product()
    }

    /// P[Phi = phi] under independence: the product of marginals.
    pub fn realization_probability(&self, phi: &[StateId]) -> f64 {
        debug_assert_eq!(phi.len(), self.n);
        self.items().map(|e| self.probs[e][phi[e]]).product()
    }

    /// Every positive-probability realization exactly once, item-major
    /// lexicographic, with its probability. Probabilities sum to 1 within
    /// 1e-9 for any valid instance.
    pub fn enumerate_realizations(&self, budget: &Budget) -> Result<Vec<(Realization, f64)>> {
        let total = self.enumeration_size();
        if total > budget.enumeration as u128 {
            return Err(Error::BudgetExceeded {
                what: "realization enumeration",
                needed: total,
                budget: budget.enumeration,
            });
        }
        let supports: Vec<Vec<StateId>> =
            self.items().map(|e| self.support(e).collect()).collect();
        if supports.iter().any(|s| s.is_empty()) {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut odometer = vec![0usize; self.n];
        loop {
            let phi: Realization = (0..self.n).map(|e| supports[e][odometer[e]]).collect();
            let p = self.realization_probability(&phi);
            out.push((phi, p));
            // Item-major order: the last item's state advances fastest.
            let mut pos = self.n;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                odometer[pos] += 1;
                if odometer[pos] < supports[pos].len() {
                    break;
                }
                odometer[pos] = 0;
            }
        }
    }

    /// Draws each item's state independently from its marginal.
    pub fn sample_realization<R: Rng + ?Sized>(&self, rng: &mut R) -> Realization {
        self.items()
            .map(|e| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut drawn = None;
                for (o, &p) in self.probs[e].iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        drawn = Some(o);
                        if u < acc {
                            break;
                        }
                    }
                }
                drawn.expect("validated instance has a positive-probability state")
            })
            .collect()
    }

    /// Structural validation: costs, marginals, and utility shapes.
    /// Violations are data, not exceptions; an empty list means well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.costs.len() != self.n {
            v.push(Violation::new(
                ViolationKind::ShapeMismatch,
                format!("costs has {} entries, n = {}", self.costs.len(), self.n),
            ));
        }
        if self.probs.len() != self.n {
            v.push(Violation::new(
                ViolationKind::ShapeMismatch,
                format!("probs has {} rows, n = {}", self.probs.len(), self.n),
            ));
        }
        for (e, &c) in self.costs.iter().enumerate() {
            if !c.is_finite() || c <= 0.0 {
                v.push(Violation::new(
                    ViolationKind::NonPositiveCost,
                    format!("cost of item {e} is {c}"),
                ));
            }
        }
        for (e, row) in self.probs.iter().enumerate() {
            if row.len() != self.k {
                v.push(Violation::new(
                    ViolationKind::ShapeMismatch,
                    format!("probs[{e}] has {} entries, k = {}", row.len(), self.k),
                ));
                continue;
            }
            for (o, &p) in row.iter().enumerate() {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    v.push(Violation::new(
                        ViolationKind::MarginalOutOfRange,
                        format!("P[item {e} = state {o}] = {p}"),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
                v.push(Violation::new(
                    ViolationKind::MarginalSumMismatch,
                    format!("item {e} marginals sum to {sum}"),
                ));
            }
        }
        self.utility.validate_shape(self.n, self.k, &mut v);
        if let Some(eta) = self.eta {
            if !eta.is_finite() || eta <= 0.0 {
                v.push(Violation::new(
                    ViolationKind::ShapeMismatch,
                    format!("declared eta {eta} is not positive and finite"),
                ));
            }
        }
        v
    }

    pub fn from_json(json: &str) -> Result<Instance> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Deterministic per-trial stream: trial `index` under `seed` always yields
/// the same generator, independent of how other trials are scheduled.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    ))
}

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
