//! Brute-force min-max utility over the adversary's disable sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lp::{max_utility_lp, LpOutcome};
use crate::model::{enabled_graph, good_component, CtvId, LinkRateVector, ModelError, NodeId, RateModel, UtilitySpec};
use crate::num::Q;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("disable-set family has {0} members, above the enumeration budget {1}")]
    TooLarge(u128, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: Q,
    pub argmin: BTreeSet<CtvId>,
    pub per_set: Vec<(BTreeSet<CtvId>, Q)>,
}

/// Disable sets up to interchangeable entries: CTVs with the same true rate
/// vector are removed together, and a vector can only disappear if every CTV
/// realizing it is disableable.
pub fn delta_family(model: &RateModel, good: &BTreeSet<NodeId>, budget: usize) -> Result<Vec<BTreeSet<CtvId>>, OracleError> {
    let dis: BTreeSet<CtvId> = model.disableable(good).into_iter().collect();
    let mut classes: BTreeMap<&LinkRateVector, Vec<CtvId>> = BTreeMap::new();
    for id in model.ids() {
        classes.entry(&model.entry(id).rates).or_default().push(id);
    }
    let free: Vec<Vec<CtvId>> = classes.into_values().filter(|ids| ids.iter().all(|id| dis.contains(id))).collect();
    let size: u128 = 1u128.checked_shl(free.len() as u32).unwrap_or(u128::MAX);
    if size > budget as u128 {
        return Err(OracleError::TooLarge(size, budget));
    }
    Ok((0..size as usize)
        .map(|mask| free.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).flat_map(|(_, ids)| ids.iter().copied()).collect())
        .collect())
}

/// Utility optimum over the true rates of `C \ D` within its good component.
pub fn max_given_disabled(
    model: &RateModel,
    good: &BTreeSet<NodeId>,
    disabled: &BTreeSet<CtvId>,
    utility: &UtilitySpec,
) -> Result<(BTreeSet<NodeId>, LpOutcome), ModelError> {
    let enabled: BTreeSet<CtvId> = model.ids().filter(|id| !disabled.contains(id)).collect();
    let comp = if enabled.is_empty() {
        good.clone()
    } else {
        good_component(&enabled_graph(model, &enabled)?, good)?
    };
    let entries: BTreeMap<CtvId, LinkRateVector> = enabled.iter().map(|&id| (id, model.entry(id).rates.clone())).collect();
    let out = max_utility_lp(model.n, &entries, utility, &comp);
    Ok((comp, out))
}

pub fn minmax_over(
    model: &RateModel,
    good: &BTreeSet<NodeId>,
    family: &[BTreeSet<CtvId>],
    utility: &UtilitySpec,
) -> Result<OracleResult, OracleError> {
    let mut per_set = Vec::with_capacity(family.len());
    for d in family {
        let (_, out) = max_given_disabled(model, good, d, utility)?;
        per_set.push((d.clone(), out.utility));
    }
    let (argmin, value) = per_set
        .iter()
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.len().cmp(&b.0.len())).then(a.0.cmp(&b.0)))
        .cloned()
        .ok_or(OracleError::TooLarge(0, 0))?;
    Ok(OracleResult { value, argmin, per_set })
}

pub fn minmax_oracle(model: &RateModel, good: &BTreeSet<NodeId>, utility: &UtilitySpec, budget: usize) -> Result<OracleResult, OracleError> {
    let family = delta_family(model, good, budget)?;
    minmax_over(model, good, &family, utility)
}
