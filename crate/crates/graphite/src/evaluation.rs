//! Uniform-test evaluation: all-pair RMSE, the concordance index, and the
//! popularity/zero-shot breakdowns.
//!
//! RMSE is the double average over test units and the treatment subset,
//! sqrt((1/N)(1/|T|) ΣΣ (y − f)²). CI scores each unit's strictly ordered
//! outcome pairs with the Heaviside step of the prediction difference,
//! normalizes per unit, then averages over units; units without any
//! strictly ordered pair are excluded.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::baselines::{MeanModel, OlsModel};
use crate::data::{Observation, OutcomeTable};
use crate::error::{Error, Result};
use crate::graph::{TreatmentCatalog, TreatmentId};
use crate::model::ModelBundle;
use crate::numerics::{KahanSum, Tensor};

/// θ(x): 1 for x > 0, 0.5 at exactly 0, 0 for x < 0.
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Anything that can predict an outcome for every (unit, treatment) pair.
pub trait OutcomePredictor {
    /// Prediction matrix: row per covariate row, column per treatment.
    fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        catalog: &TreatmentCatalog,
    ) -> Result<Tensor>;

    /// Whether treatments absent from training data are predictable.
    fn supports_unobserved_treatments(&self) -> bool;
}

impl OutcomePredictor for ModelBundle {
    fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        catalog: &TreatmentCatalog,
    ) -> Result<Tensor> {
        ModelBundle::predict_block(self, covariates, treatments, catalog)
    }

    fn supports_unobserved_treatments(&self) -> bool {
        self.zero_shot_capable()
    }
}

impl OutcomePredictor for OlsModel {
    fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        _catalog: &TreatmentCatalog,
    ) -> Result<Tensor> {
        let mut data = Vec::with_capacity(covariates.rows() * treatments.len());
        for u in 0..covariates.rows() {
            for &t in treatments {
                data.push(self.predict(covariates.row(u), t)?);
            }
        }
        Tensor::matrix(covariates.rows(), treatments.len(), data)
    }

    fn supports_unobserved_treatments(&self) -> bool {
        false
    }
}

impl OutcomePredictor for MeanModel {
    fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        _catalog: &TreatmentCatalog,
    ) -> Result<Tensor> {
        Tensor::matrix(
            covariates.rows(),
            treatments.len(),
            vec![self.mean; covariates.rows() * treatments.len()],
        )
    }

    fn supports_unobserved_treatments(&self) -> bool {
        true
    }
}

/// Closure-backed predictor, mostly for tests and examples.
pub struct PredictFn<F: Fn(&[f64], TreatmentId) -> f64> {
    pub f: F,
    pub zero_shot: bool,
}

impl<F: Fn(&[f64], TreatmentId) -> f64> OutcomePredictor for PredictFn<F> {
    fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        _catalog: &TreatmentCatalog,
    ) -> Result<Tensor> {
        let mut data = Vec::with_capacity(covariates.rows() * treatments.len());
        for u in 0..covariates.rows() {
            for &t in treatments {
                data.push((self.f)(covariates.row(u), t));
            }
        }
        Tensor::matrix(covariates.rows(), treatments.len(), data)
    }

    fn supports_unobserved_treatments(&self) -> bool {
        self.zero_shot
    }
}

fn subset_or_all(
    catalog: &TreatmentCatalog,
    subset: Option<&[TreatmentId]>,
) -> Result<Vec<TreatmentId>> {
    let treatments: Vec<TreatmentId> = match subset {
        Some(ids) => ids.to_vec(),
        None => catalog.ids().collect(),
    };
    if treatments.is_empty() {
        return Err(Error::Contract("empty treatment subset".into()));
    }
    for &t in &treatments {
        catalog.get(t)?;
    }
    Ok(treatments)
}

/// All-pair RMSE of the predictor over (test units × treatment subset),
/// with compensated summation.
pub fn rmse_all_pairs(
    predictor: &dyn OutcomePredictor,
    test_units: &[usize],
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
    subset: Option<&[TreatmentId]>,
) -> Result<f64> {
    if test_units.is_empty() {
        return Err(Error::Contract("empty test unit set".into()));
    }
    let treatments = subset_or_all(catalog, subset)?;
    let covariates = table.covariate_block(test_units)?;
    let predictions = predictor.predict_block(&covariates, &treatments, catalog)?;
    let mut acc = KahanSum::new();
    for (row, &unit) in test_units.iter().enumerate() {
        for (col, &t) in treatments.iter().enumerate() {
            let r = table.outcome(unit, t) - predictions.get(row, col);
            acc.add(r * r);
        }
    }
    let pairs = (test_units.len() * treatments.len()) as f64;
    Ok((acc.value() / pairs).sqrt())
}

/// Concordance index over the treatment subset. Units whose outcomes are
/// fully tied contribute no ordered pair and are excluded from the
/// average; it is an error if no unit has one.
pub fn concordance_index(
    predictor: &dyn OutcomePredictor,
    test_units: &[usize],
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
    subset: Option<&[TreatmentId]>,
) -> Result<f64> {
    if test_units.is_empty() {
        return Err(Error::Contract("empty test unit set".into()));
    }
    let treatments = subset_or_all(catalog, subset)?;
    let covariates = table.covariate_block(test_units)?;
    let predictions = predictor.predict_block(&covariates, &treatments, catalog)?;

    let mut unit_scores = KahanSum::new();
    let mut included = 0usize;
    for (row, &unit) in test_units.iter().enumerate() {
        let mut score = 0.0;
        let mut pairs = 0usize;
        for (a, &ta) in treatments.iter().enumerate() {
            for (b, &tb) in treatments.iter().enumerate() {
                if table.outcome(unit, ta) > table.outcome(unit, tb) {
                    score += heaviside(predictions.get(row, a) - predictions.get(row, b));
                    pairs += 1;
                }
            }
        }
        if pairs > 0 {
            unit_scores.add(score / pairs as f64);
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::Contract(
            "no unit has a strictly ordered outcome pair".into(),
        ));
    }
    Ok(unit_scores.value() / included as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupMetrics {
    pub label: String,
    pub treatment_ids: Vec<TreatmentId>,
    pub rmse: f64,
    /// None when no unit has a strictly ordered pair within the group.
    pub ci: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub ci: f64,
    pub n_units: usize,
    pub n_treatments: usize,
    pub groups: Vec<GroupMetrics>,
}

/// Treatments ranked by training-set factual frequency (count descending,
/// id ascending on ties).
pub fn popularity_ranking(
    train_observations: &[Observation],
    catalog: &TreatmentCatalog,
) -> Vec<TreatmentId> {
    let mut counts = vec![0usize; catalog.len()];
    for o in train_observations {
        counts[o.treatment.index()] += 1;
    }
    let mut ranked: Vec<TreatmentId> = catalog.ids().collect();
    ranked.sort_by_key(|t| (std::cmp::Reverse(counts[t.index()]), t.0));
    ranked
}

/// Metrics per popularity quintile (top 20% first). Bucket boundaries are
/// floor(k·|T|/5), so sizes are equal within ±1 and cover every treatment.
pub fn popularity_breakdown(
    predictor: &dyn OutcomePredictor,
    train_observations: &[Observation],
    test_units: &[usize],
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
) -> Result<Vec<GroupMetrics>> {
    let ranked = popularity_ranking(train_observations, catalog);
    let n = ranked.len();
    let labels = ["top20pct", "20to40pct", "40to60pct", "60to80pct", "80to100pct"];
    let mut groups = Vec::with_capacity(5);
    for (k, label) in labels.iter().enumerate() {
        let lo = k * n / 5;
        let hi = (k + 1) * n / 5;
        let bucket = &ranked[lo..hi];
        if bucket.is_empty() {
            continue;
        }
        let rmse = rmse_all_pairs(predictor, test_units, table, catalog, Some(bucket))?;
        let ci = match concordance_index(predictor, test_units, table, catalog, Some(bucket)) {
            Ok(v) => Some(v),
            Err(Error::Contract(_)) => None,
            Err(e) => return Err(e),
        };
        groups.push(GroupMetrics {
            label: label.to_string(),
            treatment_ids: bucket.to_vec(),
            rmse,
            ci,
        });
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZeroShotMetrics {
    pub rmse: f64,
    pub ci: Option<f64>,
}

/// Metrics restricted to held-out treatment ids. Predictors that cannot
/// represent unobserved treatments get a capability error, never numbers.
pub fn zero_shot_eval(
    predictor: &dyn OutcomePredictor,
    held_out: &BTreeSet<TreatmentId>,
    test_units: &[usize],
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
) -> Result<ZeroShotMetrics> {
    if held_out.is_empty() {
        return Err(Error::Contract("held-out treatment set is empty".into()));
    }
    if !predictor.supports_unobserved_treatments() {
        return Err(Error::Capability(
            "this model cannot predict outcomes for treatments outside its training data"
                .into(),
        ));
    }
    let subset: Vec<TreatmentId> = held_out.iter().copied().collect();
    let rmse = rmse_all_pairs(predictor, test_units, table, catalog, Some(&subset))?;
    let ci = match concordance_index(predictor, test_units, table, catalog, Some(&subset)) {
        Ok(v) => Some(v),
        Err(Error::Contract(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ZeroShotMetrics { rmse, ci })
}

/// Full uniform-test evaluation: overall metrics plus the popularity
/// breakdown.
pub fn evaluate_all(
    predictor: &dyn OutcomePredictor,
    train_observations: &[Observation],
    test_units: &[usize],
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
) -> Result<EvalResult> {
    let rmse = rmse_all_pairs(predictor, test_units, table, catalog, None)?;
    let ci = concordance_index(predictor, test_units, table, catalog, None)?;
    let groups =
        popularity_breakdown(predictor, train_observations, test_units, table, catalog)?;
    Ok(EvalResult {
        rmse,
        ci,
        n_units: test_units.len(),
        n_treatments: catalog.len(),
        groups,
    })
}
