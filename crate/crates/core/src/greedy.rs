//! The adaptive greedy policy: pick the item with the cheapest expected
//! unit price c(e) / E[F_psi(e)], with an adversarial within-factor-alpha
//! variant for stress-testing the approximation guarantee.

use crate::error::{Error, Result};
use crate::instance::{Instance, ItemId, Subrealization};
use crate::policy::Policy;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Cost per unit of expected utility gain. Infinite exactly when the
/// expected marginal is zero; kept as a sentinel so comparisons stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitPrice {
    Finite(f64),
    Infinite,
}

impl UnitPrice {
    pub fn is_finite(&self) -> bool {
        matches!(self, UnitPrice::Finite(_))
    }

    /// The finite value, or None.
    pub fn finite(&self) -> Option<f64> {
        match self {
            UnitPrice::Finite(v) => Some(*v),
            UnitPrice::Infinite => None,
        }
    }

    /// As a float, mapping the sentinel to +infinity.
    pub fn as_f64(&self) -> f64 {
        match self {
            UnitPrice::Finite(v) => *v,
            UnitPrice::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for UnitPrice {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (UnitPrice::Finite(a), UnitPrice::Finite(b)) => a.partial_cmp(b),
            (UnitPrice::Finite(_), UnitPrice::Infinite) => Some(Ordering::Less),
            (UnitPrice::Infinite, UnitPrice::Finite(_)) => Some(Ordering::Greater),
            (UnitPrice::Infinite, UnitPrice::Infinite) => Some(Ordering::Equal),
        }
    }
}

/// c(e) / E[F_psi(e)], infinite when the expected marginal is zero.
pub fn unit_price(inst: &Instance, psi: &Subrealization, e: ItemId) -> Result<UnitPrice> {
    let em = inst.expected_marginal(psi, e)?;
    if em > 0.0 {
        Ok(UnitPrice::Finite(inst.cost(e) / em))
    } else {
        Ok(UnitPrice::Infinite)
    }
}

/// How the greedy policy resolves each selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    /// The minimum-price item, lowest ItemId on ties.
    Exact,
    /// The highest-priced item still within factor alpha of the minimum,
    /// lowest ItemId on ties: the worst choice the guarantee permits.
    Adversarial { alpha: f64 },
}

impl Selector {
    /// The alpha this selector is accountable to.
    pub fn alpha(&self) -> f64 {
        match self {
            Selector::Exact => 1.0,
            Selector::Adversarial { alpha } => *alpha,
        }
    }
}

/// One greedy selection at psi. Errors with NoProgressPossible when every
/// unassigned item has infinite price, which signals a coverability breach.
pub fn greedy_select(inst: &Instance, psi: &Subrealization, sel: Selector) -> Result<ItemId> {
    let value = inst.utility.evaluate(psi)?;
    let mut prices: Vec<(ItemId, f64)> = Vec::new();
    for e in inst.items() {
        if psi.contains_item(e) {
            continue;
        }
        let em = inst.expected_marginal_from(psi, value, e)?;
        if em > 0.0 {
            prices.push((e, inst.cost(e) / em));
        }
    }
    let &(best, min_price) = prices
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .ok_or(Error::NoProgressPossible)?;
    match sel {
        Selector::Exact => Ok(best),
        Selector::Adversarial { alpha } => {
            let cutoff = alpha * min_price;
            let &(worst, _) = prices
                .iter()
                .filter(|&&(_, p)| p <= cutoff)
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .expect("the argmin itself passes the cutoff");
            Ok(worst)
        }
    }
}

/// The adaptive greedy policy under a fixed selector.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy {
    pub selector: Selector,
}

impl GreedyPolicy {
    pub fn exact() -> Self {
        GreedyPolicy {
            selector: Selector::Exact,
        }
    }

    pub fn adversarial(alpha: f64) -> Self {
        GreedyPolicy {
            selector: Selector::Adversarial { alpha },
        }
    }
}

impl Policy for GreedyPolicy {
    fn next_item(&self, inst: &Instance, psi: &Subrealization) -> Result<ItemId> {
        greedy_select(inst, psi, self.selector)
    }
}
