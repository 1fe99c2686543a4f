//! Off-policy dataset perturbation: reweighted bootstrap resampling that
//! over-represents a chosen slice of the state space, the stand-in for
//! "the data came from somewhere else".

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FlatStep;
use crate::mdp::State;
use crate::rng::SeedRng;

/// Which transitions get up-weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbPredicate {
    /// Continuous states with `|state[index]| < threshold`. Discrete
    /// states never match.
    Coordinate { index: usize, threshold: f64 },
    /// Discrete states in the set. Continuous states never match.
    StateIndices { indices: Vec<usize> },
}

impl PerturbPredicate {
    pub fn matches(&self, state: &State) -> bool {
        match (self, state) {
            (PerturbPredicate::Coordinate { index, threshold }, State::Continuous(v)) => {
                v.get(*index).is_some_and(|x| x.abs() < *threshold)
            }
            (PerturbPredicate::StateIndices { indices }, State::Discrete(s)) => {
                indices.contains(s)
            }
            _ => false,
        }
    }
}

/// Resampling weights: matched transitions are drawn `weight` times as
/// often as unmatched ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub predicate: PerturbPredicate,
    pub weight: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            predicate: PerturbPredicate::Coordinate { index: 0, threshold: 0.01 },
            weight: 5.0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 1.0 && self.weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "perturbation weight {} must be finite and >= 1",
                self.weight
            )));
        }
        if let PerturbPredicate::Coordinate { threshold, .. } = self.predicate {
            if !(threshold > 0.0 && threshold.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "perturbation threshold {threshold} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Resample `flat` with replacement, same size, where matching entries
/// carry probability mass `weight` each and the rest mass 1.
///
/// Weight 1 reduces to a plain uniform bootstrap. Each draw costs one
/// uniform: a point below the matched block's total mass indexes into the
/// matched list, the remainder indexes the rest.
pub fn perturb_dataset(
    flat: &[FlatStep],
    spec: &PerturbationSpec,
    rng: &mut SeedRng,
) -> Result<Vec<FlatStep>> {
    spec.validate()?;
    if flat.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (matched, rest): (Vec<usize>, Vec<usize>) =
        (0..flat.len()).partition(|&i| spec.predicate.matches(&flat[i].state));
    let matched_mass = spec.weight * matched.len() as f64;
    let total = matched_mass + rest.len() as f64;

    let mut out = Vec::with_capacity(flat.len());
    for _ in 0..flat.len() {
        let u = rng.gen_range(0.0..total);
        let idx = if u < matched_mass {
            matched[((u / spec.weight) as usize).min(matched.len() - 1)]
        } else {
            rest[((u - matched_mass) as usize).min(rest.len() - 1)]
        };
        out.push(flat[idx].clone());
    }
    Ok(out)
}
