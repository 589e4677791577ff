//! Mini-batch training of the outcome model: supervised loss plus an
//! optional independence penalty, optimized with Adam. Each epoch
//! partitions the training data into non-overlapping mini-batches.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::graph::{TreatmentCatalog, TreatmentId};
use crate::independence::{most_frequent_treatment, penalty};
use crate::model::{ModelBundle, ModelConfig};
use crate::numerics::{Adam, AdamConfig, KahanSum, Tape, Tensor, Var};

const SHUFFLE_STREAM: u64 = 0x5E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    Nhsic,
    Hsic,
    MmdPivot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Grid for validation-based selection, deduplicated and sorted
    /// ascending; ties in validation RMSE resolve toward the smaller λ.
    pub lambda_grid: Vec<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub regularizer: Regularizer,
    /// Early-stopping patience in epochs without validation improvement;
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            lambda_grid: default_lambda_grid(),
            batch_size: 64,
            epochs: 60,
            learning_rate: 1e-3,
            seed: 0,
            regularizer: Regularizer::Nhsic,
            patience: 20,
        }
    }
}

/// The decade grid 10⁻³..10³.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.regularizer != Regularizer::None && self.batch_size < 2 {
            return Err(Error::Config(
                "regularized training needs batch_size >= 2 (kernel matrices)".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    fn regularized(&self) -> bool {
        self.regularizer != Regularizer::None && self.lambda > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub supervised: f64,
    pub regularizer: f64,
    pub val_rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub selected_lambda: f64,
    pub best_epoch: Option<usize>,
    pub best_val_rmse: Option<f64>,
    /// Not serialized: reports from identical seeds must be byte-identical.
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Loss pieces of one step; total = supervised + λ·regularizer exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub total: f64,
    pub supervised: f64,
    pub regularizer: f64,
}

pub struct ObjectiveParts {
    pub total: Var,
    pub supervised: Var,
    pub regularizer: Option<Var>,
}

fn batch_inputs(batch: &[&Observation]) -> Result<(Tensor, Vec<TreatmentId>, Tensor)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let dim = batch[0].covariates.len();
    let mut covariates = Vec::with_capacity(batch.len() * dim);
    let mut ids = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for o in batch {
        covariates.extend_from_slice(&o.covariates);
        ids.push(o.treatment);
        targets.push(o.outcome);
    }
    Ok((
        Tensor::matrix(batch.len(), dim, covariates)?,
        ids,
        Tensor::matrix(batch.len(), 1, targets)?,
    ))
}

/// Mean squared error of the model on a batch, recorded on the tape.
pub fn supervised_loss(
    tape: &mut Tape,
    model: &ModelBundle,
    batch: &[&Observation],
    catalog: &TreatmentCatalog,
) -> Result<Var> {
    let (covariates, ids, targets) = batch_inputs(batch)?;
    let (_, _, pred) = model.forward_batch(tape, &covariates, &ids, catalog)?;
    let y = tape.constant(targets)?;
    let residuals = tape.sq_diff(pred, y)?;
    tape.mean(residuals)
}

/// Build L_B + λ·reg_B on the tape. `bandwidths`, when given, pins the
/// kernel bandwidths (the training step computes medians from the current
/// batch representations; gradient checks must hold them fixed).
pub fn build_objective(
    tape: &mut Tape,
    model: &ModelBundle,
    batch: &[&Observation],
    catalog: &TreatmentCatalog,
    config: &TrainConfig,
    pivot: Option<TreatmentId>,
    bandwidths: Option<(f64, f64)>,
) -> Result<ObjectiveParts> {
    let (covariates, ids, targets) = batch_inputs(batch)?;
    let (phi_reps, psi_reps, pred) = model.forward_batch(tape, &covariates, &ids, catalog)?;
    let y = tape.constant(targets)?;
    let residuals = tape.sq_diff(pred, y)?;
    let supervised = tape.mean(residuals)?;

    if !config.regularized() {
        return Ok(ObjectiveParts {
            total: supervised,
            supervised,
            regularizer: None,
        });
    }
    if batch.len() < 2 {
        return Err(Error::Contract(
            "regularized objective needs a batch of at least 2".into(),
        ));
    }
    let reg = match config.regularizer {
        Regularizer::Nhsic => penalty::nhsic_of_reps(tape, phi_reps, psi_reps, bandwidths)?,
        Regularizer::Hsic => penalty::hsic_of_reps(tape, phi_reps, psi_reps, bandwidths)?,
        Regularizer::MmdPivot => {
            let pivot = pivot.ok_or_else(|| {
                Error::Contract("mmd_pivot regularizer needs a pivot treatment".into())
            })?;
            let bw = bandwidths.map(|(phi_bw, _)| phi_bw);
            penalty::mmd_pivot(tape, phi_reps, &ids, pivot, bw)?
        }
        Regularizer::None => unreachable!("checked above"),
    };
    let weighted = tape.scale(reg, config.lambda)?;
    let total = tape.add(supervised, weighted)?;
    Ok(ObjectiveParts {
        total,
        supervised,
        regularizer: Some(reg),
    })
}

/// Objective values without touching gradients.
pub fn evaluate_objective(
    model: &ModelBundle,
    batch: &[&Observation],
    catalog: &TreatmentCatalog,
    config: &TrainConfig,
    pivot: Option<TreatmentId>,
) -> Result<StepStats> {
    let mut tape = Tape::new();
    let parts = build_objective(&mut tape, model, batch, catalog, config, pivot, None)?;
    Ok(StepStats {
        total: tape.value(parts.total).item(),
        supervised: tape.value(parts.supervised).item(),
        regularizer: parts.regularizer.map_or(0.0, |r| tape.value(r).item()),
    })
}

/// One optimization step: forward, backward, Adam update, zero grads.
pub fn train_step(
    model: &mut ModelBundle,
    batch: &[&Observation],
    catalog: &TreatmentCatalog,
    config: &TrainConfig,
    optimizer: &mut Adam,
    pivot: Option<TreatmentId>,
) -> Result<StepStats> {
    let mut tape = Tape::new();
    let parts = build_objective(&mut tape, model, batch, catalog, config, pivot, None)?;
    let stats = StepStats {
        total: tape.value(parts.total).item(),
        supervised: tape.value(parts.supervised).item(),
        regularizer: parts.regularizer.map_or(0.0, |r| tape.value(r).item()),
    };
    tape.backward(parts.total, &mut model.store)?;
    optimizer.step(&mut model.store);
    model.store.zero_grads();
    Ok(stats)
}

/// Shuffled non-overlapping batches covering every index at most once; a
/// trailing remainder below 2 samples is dropped (kernel degeneracy).
pub fn epoch_partition(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices
        .chunks(batch_size)
        .filter(|chunk| chunk.len() == batch_size || chunk.len() >= 2)
        .map(|chunk| chunk.to_vec())
        .collect()
}

/// RMSE of the model on factual (x, t, y) observations.
pub fn factual_rmse(
    model: &ModelBundle,
    observations: &[Observation],
    catalog: &TreatmentCatalog,
) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Contract("factual_rmse on empty observations".into()));
    }
    let refs: Vec<&Observation> = observations.iter().collect();
    let (covariates, ids, _) = batch_inputs(&refs)?;
    let mut tape = Tape::new();
    let (_, _, pred) = model.forward_batch(&mut tape, &covariates, &ids, catalog)?;
    let mut acc = KahanSum::new();
    for (p, o) in tape.value(pred).data().iter().zip(observations) {
        let r = p - o.outcome;
        acc.add(r * r);
    }
    Ok((acc.value() / observations.len() as f64).sqrt())
}

/// Train `model` on the observations for `config.epochs` epochs, keeping
/// the parameters of the epoch with the best validation RMSE. An empty
/// validation set disables early stopping and returns the final epoch.
pub fn fit(
    model: ModelBundle,
    train: &[Observation],
    val: &[Observation],
    catalog: &TreatmentCatalog,
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Fit("training set is empty".into()));
    }
    let start = Instant::now();
    let mut model = model;
    let pivot = if config.regularizer == Regularizer::MmdPivot {
        Some(most_frequent_treatment(train)?)
    } else {
        None
    };
    let mut optimizer = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);

    let mut report = TrainReport {
        selected_lambda: config.lambda,
        ..TrainReport::default()
    };
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;

    for epoch in 0..config.epochs {
        let batches = epoch_partition(train.len(), config.batch_size, &mut shuffle_rng);
        let mut loss_acc = (0.0, 0.0, 0.0);
        let mut samples = 0usize;
        for (step, batch_idx) in batches.iter().enumerate() {
            let batch: Vec<&Observation> = batch_idx.iter().map(|&i| &train[i]).collect();
            let stats = train_step(&mut model, &batch, catalog, config, &mut optimizer, pivot)
                .map_err(|e| Error::TrainingAborted {
                    epoch,
                    step,
                    source: Box::new(e),
                })?;
            let w = batch.len() as f64;
            loss_acc.0 += stats.total * w;
            loss_acc.1 += stats.supervised * w;
            loss_acc.2 += stats.regularizer * w;
            samples += batch.len();
        }
        let denom = samples.max(1) as f64;
        let val_rmse = if val.is_empty() {
            None
        } else {
            Some(factual_rmse(&model, val, catalog)?)
        };
        report.epochs.push(EpochStats {
            train_loss: loss_acc.0 / denom,
            supervised: loss_acc.1 / denom,
            regularizer: loss_acc.2 / denom,
            val_rmse,
        });

        if let Some(current) = val_rmse {
            let improved = best.as_ref().is_none_or(|(b, _, _)| current < *b);
            if improved {
                best = Some((current, epoch, model.store.snapshot()));
            } else if config.patience > 0 {
                let since = epoch - best.as_ref().expect("set on first epoch").1;
                if since >= config.patience {
                    break;
                }
            }
        }
    }

    if let Some((rmse, epoch, snapshot)) = best {
        model.store.restore(&snapshot);
        report.best_epoch = Some(epoch);
        report.best_val_rmse = Some(rmse);
    }
    report.wall_clock = start.elapsed();
    Ok((model, report))
}

/// Train one model per grid point (shared seed) and return the λ with the
/// best validation RMSE, its model, and every per-λ report in grid order.
pub fn select_lambda(
    model_config: &ModelConfig,
    train: &[Observation],
    val: &[Observation],
    catalog: &TreatmentCatalog,
    config: &TrainConfig,
) -> Result<(f64, ModelBundle, Vec<(f64, TrainReport)>)> {
    let mut grid = config.lambda_grid.clone();
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite lambda"));
    grid.dedup();
    if val.is_empty() {
        return Err(Error::Fit("lambda selection needs a validation set".into()));
    }

    use rayon::prelude::*;
    let runs: Vec<Result<(f64, ModelBundle, TrainReport)>> = grid
        .par_iter()
        .map(|&lambda| {
            let cfg = TrainConfig {
                lambda,
                ..config.clone()
            };
            let model = ModelBundle::new(model_config.clone(), config.seed)?;
            let (fitted, report) = fit(model, train, val, catalog, &cfg)?;
            Ok((lambda, fitted, report))
        })
        .collect();

    let mut best: Option<(f64, ModelBundle)> = None;
    let mut best_rmse = f64::INFINITY;
    let mut reports = Vec::with_capacity(grid.len());
    for run in runs {
        let (lambda, fitted, report) = run?;
        let rmse = report
            .best_val_rmse
            .or_else(|| report.epochs.last().and_then(|e| e.val_rmse))
            .ok_or_else(|| Error::Fit("no validation RMSE recorded".into()))?;
        // strict < keeps the smaller lambda on ties (grid is ascending)
        if rmse < best_rmse {
            best_rmse = rmse;
            best = Some((lambda, fitted));
        }
        reports.push((lambda, report));
    }
    let (lambda, model) = best.expect("grid is non-empty");
    Ok((lambda, model, reports))
}

/// Treatments that actually occur in an observation set.
pub fn observed_treatment_set(observations: &[Observation]) -> BTreeSet<TreatmentId> {
    observations.iter().map(|o| o.treatment).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bias_sample, generate_synthetic, BiasConfig, SyntheticConfig};

    fn small_setup(
        units: usize,
        treatments: usize,
        seed: u64,
    ) -> (TreatmentCatalog, Vec<Observation>, ModelConfig) {
        let cfg = SyntheticConfig {
            covariate_dim: 4,
            graph_size_range: (3, 6),
            label_vocab: 4,
            ..SyntheticConfig::new(units, treatments, seed)
        };
        let (catalog, table) = generate_synthetic(&cfg).unwrap();
        let obs = bias_sample(&table, &BiasConfig::new(0.0, seed), None).unwrap();
        let mut mc = ModelConfig::new(4, treatments, 4);
        mc.rep_dim = 8;
        mc.hidden_dim = 8;
        mc.gnn.hidden_dim = 8;
        mc.gnn.layers = 2;
        (catalog, obs, mc)
    }

    #[test]
    fn supervised_loss_fixtures() {
        let (catalog, obs, mc) = small_setup(6, 3, 2);
        let model = ModelBundle::new(mc, 5).unwrap();
        let refs: Vec<&Observation> = obs.iter().collect();

        // perfect predictions: targets equal to the model's own outputs
        let mut tape = Tape::new();
        let (cov, ids, _) = batch_inputs(&refs).unwrap();
        let (_, _, pred) = model.forward_batch(&mut tape, &cov, &ids, &catalog).unwrap();
        let mut perfect = obs.clone();
        for (o, p) in perfect.iter_mut().zip(tape.value(pred).data()) {
            o.outcome = *p;
        }
        let perfect_refs: Vec<&Observation> = perfect.iter().collect();
        let mut tape2 = Tape::new();
        let loss = supervised_loss(&mut tape2, &model, &perfect_refs, &catalog).unwrap();
        assert!(tape2.value(loss).item() < 1e-24);

        // constant prediction c vs outcomes {c+1, c-1} has MSE exactly 1
        let mut plus = perfect.clone();
        for (i, o) in plus.iter_mut().enumerate() {
            o.outcome += if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let plus_refs: Vec<&Observation> = plus.iter().collect();
        let mut tape3 = Tape::new();
        let loss = supervised_loss(&mut tape3, &model, &plus_refs, &catalog).unwrap();
        assert!((tape3.value(loss).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn supervised_loss_matches_loop_oracle() {
        let (catalog, obs, mc) = small_setup(5, 3, 7);
        let model = ModelBundle::new(mc, 3).unwrap();
        let refs: Vec<&Observation> = obs.iter().collect();
        let mut tape = Tape::new();
        let loss = supervised_loss(&mut tape, &model, &refs, &catalog).unwrap();

        let block = {
            let (cov, ids, _) = batch_inputs(&refs).unwrap();
            let mut t = Tape::new();
            let (_, _, pred) = model.forward_batch(&mut t, &cov, &ids, &catalog).unwrap();
            t.value(pred).data().to_vec()
        };
        let mut acc = 0.0;
        for (p, o) in block.iter().zip(&obs) {
            acc += (p - o.outcome) * (p - o.outcome);
        }
        let expected = acc / obs.len() as f64;
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_decomposition_is_exact() {
        let (catalog, obs, mc) = small_setup(8, 4, 3);
        let mut model = ModelBundle::new(mc, 1).unwrap();
        let cfg = TrainConfig {
            lambda: 2.5,
            regularizer: Regularizer::Nhsic,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let refs: Vec<&Observation> = obs.iter().collect();
        let mut adam = Adam::new(AdamConfig::default());
        let stats = train_step(&mut model, &refs, &catalog, &cfg, &mut adam, None).unwrap();
        assert!(
            (stats.total - (stats.supervised + 2.5 * stats.regularizer)).abs() < 1e-12,
            "{stats:?}"
        );
    }

    #[test]
    fn lambda_zero_matches_unregularized_trajectory() {
        let (catalog, obs, mc) = small_setup(16, 4, 11);
        let make_cfg = |reg, lambda| TrainConfig {
            lambda,
            regularizer: reg,
            batch_size: 8,
            epochs: 3,
            patience: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let run = |cfg: TrainConfig| {
            let model = ModelBundle::new(mc.clone(), 4).unwrap();
            let (fitted, _) = fit(model, &obs, &[], &catalog, &cfg).unwrap();
            fitted
                .store
                .iter()
                .flat_map(|(_, p)| p.value().data().to_vec())
                .collect::<Vec<f64>>()
        };
        let a = run(make_cfg(Regularizer::Nhsic, 0.0));
        let b = run(make_cfg(Regularizer::None, 0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn epoch_partition_covers_all_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_partition(22, 5, &mut rng);
        // 22 = 4 batches of 5 + remainder 2 (kept)
        assert_eq!(batches.len(), 5);
        let mut all: Vec<usize> = batches.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..22).collect::<Vec<_>>());

        // remainder of 1 is dropped
        let batches = epoch_partition(21, 5, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), 20);
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let (catalog, obs, mc) = small_setup(6, 3, 5);
        let model = ModelBundle::new(mc, 9).unwrap();
        let initial = model.store.snapshot();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (fitted, report) = fit(model, &obs, &[], &catalog, &cfg).unwrap();
        assert!(report.epochs.is_empty());
        for (a, b) in fitted.store.snapshot().iter().zip(&initial) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn fit_is_reproducible() {
        let (catalog, obs, mc) = small_setup(12, 3, 8);
        let (train, val) = obs.split_at(9);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 4,
            lambda: 1.0,
            seed: 13,
            ..TrainConfig::default()
        };
        let run = || {
            let model = ModelBundle::new(mc.clone(), 13).unwrap();
            let (fitted, report) = fit(model, train, val, &catalog, &cfg).unwrap();
            let params: Vec<f64> = fitted
                .store
                .iter()
                .flat_map(|(_, p)| p.value().data().to_vec())
                .collect();
            (params, serde_json::to_string(&report).unwrap())
        };
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn capacity_check_memorizes_16_samples() {
        let (catalog, obs, mut mc) = small_setup(16, 4, 21);
        mc.rep_dim = 16;
        mc.hidden_dim = 16;
        mc.gnn.hidden_dim = 16;
        let model = ModelBundle::new(mc, 2).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 500,
            lambda: 0.0,
            regularizer: Regularizer::None,
            learning_rate: 3e-3,
            patience: 0,
            seed: 2,
            ..TrainConfig::default()
        };
        let (fitted, _) = fit(model, &obs, &[], &catalog, &cfg).unwrap();
        let rmse = factual_rmse(&fitted, &obs, &catalog).unwrap();
        assert!(rmse < 0.05, "train RMSE {rmse}");
    }

    #[test]
    fn huge_lambda_descends_the_regularizer() {
        let mut wins = 0;
        for seed in 0..10 {
            let (catalog, obs, mc) = small_setup(12, 4, 100 + seed);
            let mut model = ModelBundle::new(mc, seed).unwrap();
            let cfg = TrainConfig {
                lambda: 1e6,
                regularizer: Regularizer::Nhsic,
                batch_size: 12,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            };
            let refs: Vec<&Observation> = obs.iter().collect();
            let before = evaluate_objective(&model, &refs, &catalog, &cfg, None)
                .unwrap()
                .regularizer;
            let mut adam = Adam::new(AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            });
            train_step(&mut model, &refs, &catalog, &cfg, &mut adam, None).unwrap();
            let after = evaluate_objective(&model, &refs, &catalog, &cfg, None)
                .unwrap()
                .regularizer;
            if after < before {
                wins += 1;
            }
        }
        assert!(wins >= 8, "regularizer decreased in only {wins}/10 trials");
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        use crate::numerics::gradcheck::check_gradients;

        let (catalog, obs, mut mc) = small_setup(4, 3, 31);
        mc.rep_dim = 8;
        mc.hidden_dim = 8;
        mc.gnn.hidden_dim = 8;
        mc.gnn.layers = 2;
        let model = ModelBundle::new(mc.clone(), 17).unwrap();
        let cfg = TrainConfig {
            lambda: 0.7,
            regularizer: Regularizer::Nhsic,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let refs: Vec<&Observation> = obs.iter().collect();

        // pin bandwidths so finite differences see the same function
        let bw = {
            let mut tape = Tape::new();
            let (cov, ids, _) = batch_inputs(&refs).unwrap();
            let (phi, psi, _) = model.forward_batch(&mut tape, &cov, &ids, &catalog).unwrap();
            (
                crate::independence::median_bandwidth(tape.value(phi)),
                crate::independence::median_bandwidth(tape.value(psi)),
            )
        };

        let mut store = model.store.clone();
        let err = check_gradients(
            &mut store,
            |s, tape| {
                let shadow = ModelBundle::from_checkpoint(mc.clone(), s.clone(), None)?;
                let parts =
                    build_objective(tape, &shadow, &refs, &catalog, &cfg, None, Some(bw))?;
                Ok(parts.total)
            },
            1e-5,
            1e-7,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn select_lambda_dedupes_and_handles_single_point() {
        let (catalog, obs, mc) = small_setup(12, 3, 40);
        let (train, val) = obs.split_at(9);
        let cfg = TrainConfig {
            lambda_grid: vec![0.0],
            batch_size: 4,
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let (best, _, reports) = select_lambda(&mc, train, val, &catalog, &cfg).unwrap();
        assert_eq!(best, 0.0);
        assert_eq!(reports.len(), 1);

        let cfg = TrainConfig {
            lambda_grid: vec![0.1, 0.1, 0.1],
            batch_size: 4,
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, _, reports) = select_lambda(&mc, train, val, &catalog, &cfg).unwrap();
        assert_eq!(reports.len(), 1, "duplicates are deduplicated");
    }
}
