//! Softmax selection-bias sampler: unit i receives treatment
//! t ~ Categorical(softmax(ρ · y_i·)) over its ground-truth outcome row.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BiasConfig, Observation, OutcomeTable};
use crate::error::{Error, Result};
use crate::graph::TreatmentId;

/// Selection probabilities for one outcome row. When `observed` is given,
/// probability mass is restricted to those treatments (softmax over the
/// remaining logits, which equals renormalizing the full softmax).
pub fn selection_probabilities(
    outcome_row: &[f64],
    rho: f64,
    observed: Option<&BTreeSet<TreatmentId>>,
) -> Vec<f64> {
    let allowed = |idx: usize| observed.is_none_or(|s| s.contains(&TreatmentId(idx + 1)));
    let max = outcome_row
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, y)| rho * y)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; outcome_row.len()];
    let mut total = 0.0;
    for (i, y) in outcome_row.iter().enumerate() {
        if allowed(i) {
            let e = (rho * y - max).exp();
            probs[i] = e;
            total += e;
        }
    }
    for p in &mut probs {
        *p /= total;
    }
    probs
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // admissible treatment.
    last_positive
}

/// Biased factual observations for the listed units. Draws are seeded per
/// unit (seed + unit stream), so a unit's observation does not depend on
/// which other units are sampled.
pub fn bias_sample_units(
    table: &OutcomeTable,
    units: &[usize],
    config: &BiasConfig,
    observed: Option<&BTreeSet<TreatmentId>>,
) -> Result<Vec<Observation>> {
    if table.n_units() == 0 || table.n_treatments() == 0 {
        return Err(Error::Contract("bias_sample on an empty table".into()));
    }
    if config.observations_per_unit == 0 {
        return Err(Error::Config("observations_per_unit must be >= 1".into()));
    }
    if let Some(set) = observed {
        if set.is_empty() {
            return Err(Error::Config("observed treatment set is empty".into()));
        }
        for t in set {
            if t.0 == 0 || t.0 > table.n_treatments() {
                return Err(Error::TreatmentOutOfRange {
                    id: t.0,
                    count: table.n_treatments(),
                });
            }
        }
    }
    let rho = config.rho(table)?;
    let mut out = Vec::with_capacity(units.len() * config.observations_per_unit);
    for &unit in units {
        if unit >= table.n_units() {
            return Err(Error::Contract(format!("unit index {unit} out of range")));
        }
        let probs = selection_probabilities(table.outcome_row(unit), rho, observed);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(unit as u64 + 1);
        for _ in 0..config.observations_per_unit {
            let t = TreatmentId(draw(&probs, &mut rng) + 1);
            out.push(table.observation(unit, t));
        }
    }
    Ok(out)
}

/// Factual observations for every unit in the table.
pub fn bias_sample(
    table: &OutcomeTable,
    config: &BiasConfig,
    observed: Option<&BTreeSet<TreatmentId>>,
) -> Result<Vec<Observation>> {
    let units: Vec<usize> = (0..table.n_units()).collect();
    bias_sample_units(table, &units, config, observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn table(rows: usize, cols: usize, outcomes: Vec<f64>) -> OutcomeTable {
        OutcomeTable::new(
            Tensor::matrix(rows, 1, (0..rows).map(|i| i as f64).collect()).unwrap(),
            Tensor::matrix(rows, cols, outcomes).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_rho_is_uniform() {
        let probs = selection_probabilities(&[5.0, -3.0, 0.4], 0.0, None);
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_fixture_two_to_eight() {
        // y = [0, ln(4)/rho] gives probabilities [0.2, 0.8]
        let rho = 0.37;
        let probs = selection_probabilities(&[0.0, 4.0f64.ln() / rho], rho, None);
        assert!((probs[0] - 0.2).abs() < 1e-12);
        assert!((probs[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn restriction_preserves_relative_ratios() {
        let rho = 0.9;
        let row = [0.3, -1.2, 2.0, 0.7];
        let full = selection_probabilities(&row, rho, None);
        let observed: BTreeSet<TreatmentId> =
            [TreatmentId(1), TreatmentId(3)].into_iter().collect();
        let restricted = selection_probabilities(&row, rho, Some(&observed));
        assert_eq!(restricted[1], 0.0);
        assert_eq!(restricted[3], 0.0);
        let renorm = full[0] + full[2];
        assert!((restricted[0] - full[0] / renorm).abs() < 1e-12);
        assert!((restricted[2] - full[2] / renorm).abs() < 1e-12);
    }

    #[test]
    fn restricted_sampling_never_emits_held_out_ids() {
        let t = table(40, 5, (0..200).map(|i| (i % 7) as f64).collect());
        let observed: BTreeSet<TreatmentId> =
            [TreatmentId(1), TreatmentId(2), TreatmentId(4)].into_iter().collect();
        let cfg = BiasConfig {
            eta: 25.0,
            seed: 3,
            observations_per_unit: 250,
        };
        let obs = bias_sample(&t, &cfg, Some(&observed)).unwrap();
        assert_eq!(obs.len(), 10_000);
        assert!(obs.iter().all(|o| observed.contains(&o.treatment)));
    }

    #[test]
    fn observations_carry_factual_outcomes() {
        let t = table(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let obs = bias_sample(&t, &BiasConfig::new(0.0, 7), None).unwrap();
        assert_eq!(obs.len(), 3);
        for o in &obs {
            assert_eq!(o.outcome, t.outcome(o.unit_index, o.treatment));
            assert_eq!(o.covariates, t.unit_covariates(o.unit_index));
        }
    }

    #[test]
    fn per_unit_draws_are_subset_independent() {
        let t = table(10, 4, (0..40).map(|i| (i as f64).sin()).collect());
        let cfg = BiasConfig::new(15.0, 42);
        let all = bias_sample(&t, &cfg, None).unwrap();
        let subset = bias_sample_units(&t, &[3, 7], &cfg, None).unwrap();
        assert_eq!(subset[0], all[3]);
        assert_eq!(subset[1], all[7]);
    }
}
