//! Seeded unit and treatment splits.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TreatmentId;

const UNIT_STREAM: u64 = 0x75;
const TREATMENT_STREAM: u64 = 0x54;

/// Unit fractions (default 80/10/10) plus the optional zero-shot
/// treatment holdout fraction (0.30 when enabled).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// When set, this fraction of treatments is held out of training
    /// entirely and used only for zero-shot evaluation.
    pub zero_shot_fraction: Option<f64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            zero_shot_fraction: None,
            seed,
        }
    }

    pub fn with_zero_shot(mut self, fraction: f64) -> Self {
        self.zero_shot_fraction = Some(fraction);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.train_fraction + self.val_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        if self.train_fraction < 0.0 || self.val_fraction < 0.0 || self.test_fraction < 0.0 {
            return Err(Error::Config("split fractions must be non-negative".into()));
        }
        if let Some(f) = self.zero_shot_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!(
                    "zero_shot_fraction must lie in [0, 1), got {f}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint, exhaustive, seed-deterministic unit partition. Val and test
/// sizes are floors of their fractions; training takes the remainder.
pub fn split_units(n_units: usize, spec: &SplitSpec) -> Result<UnitSplit> {
    spec.validate()?;
    if n_units == 0 {
        return Err(Error::Contract("cannot split zero units".into()));
    }
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(UNIT_STREAM);
    order.shuffle(&mut rng);

    let n_val = (n_units as f64 * spec.val_fraction).floor() as usize;
    let n_test = (n_units as f64 * spec.test_fraction).floor() as usize;
    let n_train = n_units - n_val - n_test;

    Ok(UnitSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

/// Seeded treatment partition into (observed, held-out) for the zero-shot
/// protocol. Held-out count is fraction × |T| rounded to nearest; it is an
/// error when that leaves no observed treatment.
pub fn split_treatments_zero_shot(
    n_treatments: usize,
    spec: &SplitSpec,
) -> Result<(BTreeSet<TreatmentId>, BTreeSet<TreatmentId>)> {
    spec.validate()?;
    let fraction = spec.zero_shot_fraction.ok_or_else(|| {
        Error::Config("zero_shot_fraction is not set on this split spec".into())
    })?;
    if n_treatments == 0 {
        return Err(Error::Contract("catalog has no treatments".into()));
    }
    let n_held = (n_treatments as f64 * fraction).round() as usize;
    if n_held >= n_treatments {
        return Err(Error::Config(format!(
            "holding out {n_held} of {n_treatments} treatments leaves no observed treatment"
        )));
    }
    let mut order: Vec<usize> = (1..=n_treatments).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(TREATMENT_STREAM);
    order.shuffle(&mut rng);
    let held: BTreeSet<TreatmentId> = order[..n_held].iter().map(|&t| TreatmentId(t)).collect();
    let observed: BTreeSet<TreatmentId> =
        order[n_held..].iter().map(|&t| TreatmentId(t)).collect();
    Ok((observed, held))
}
