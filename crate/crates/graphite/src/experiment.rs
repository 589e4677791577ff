//! End-to-end experiment pipelines behind the CLI: dataset generation,
//! bias sampling + splits + training, evaluation files, and the
//! (η × method × seed) sweep with resume.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{mean_fit, ols_fit, MeanModel, OlsModel};
use crate::data::io::{self, DatasetPaths};
use crate::data::{
    bias_sample_units, generate_synthetic, split_treatments_zero_shot, split_units, BiasConfig,
    Observation, OutcomeTable, SplitSpec, SyntheticConfig, UnitSplit,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_all, zero_shot_eval, EvalResult, OutcomePredictor, ZeroShotMetrics,
};
use crate::graph::{TreatmentCatalog, TreatmentId};
use crate::model::{ModelBundle, ModelConfig, PsiMode};
use crate::numerics::{checkpoint_from_str, checkpoint_to_string, Tensor};
use crate::training::{
    default_lambda_grid, fit, select_lambda, Regularizer, TrainConfig, TrainReport,
};

/// Worker-count environment variable consulted when `--workers` is absent.
pub const WORKERS_ENV: &str = "GRAPHITE_WORKERS";

// ── Methods ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Graphite,
    Gnn,
    GnnMmd,
    Embedding,
    Ols,
    Mean,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Graphite,
        Method::Gnn,
        Method::GnnMmd,
        Method::Embedding,
        Method::Ols,
        Method::Mean,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Graphite => "graphite",
            Method::Gnn => "gnn",
            Method::GnnMmd => "gnn_mmd",
            Method::Embedding => "embedding",
            Method::Ols => "ols",
            Method::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected one of graphite, gnn, gnn_mmd, embedding, ols, mean"
                ))
            })
    }

    fn regularizer(&self) -> Regularizer {
        match self {
            Method::Graphite => Regularizer::Nhsic,
            Method::GnnMmd => Regularizer::MmdPivot,
            _ => Regularizer::None,
        }
    }

    fn selects_lambda(&self) -> bool {
        matches!(self, Method::Graphite | Method::GnnMmd)
    }

    fn psi_mode(&self) -> Option<PsiMode> {
        match self {
            Method::Graphite | Method::Gnn | Method::GnnMmd => Some(PsiMode::GraphEncoder),
            Method::Embedding => Some(PsiMode::EmbeddingTable),
            Method::Ols | Method::Mean => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// ── Manifest ─────────────────────────────────────────────────────────

fn default_batch_size() -> usize {
    64
}
fn default_epochs() -> usize {
    60
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    20
}
fn default_dim() -> usize {
    64
}
fn default_layers() -> usize {
    3
}

/// Optimization and architecture settings carried by the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    /// Fixed λ; when absent, regularized methods select λ on validation.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Selection grid; defaults to the decade grid 10⁻³..10³.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_dim")]
    pub rep_dim: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lambda: None,
            lambda_grid: None,
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            seed: 0,
            patience: default_patience(),
            rep_dim: default_dim(),
            hidden_dim: default_dim(),
            layers: default_layers(),
        }
    }
}

/// Everything one training/evaluation run needs: dataset file paths, the
/// bias and split settings, the method, and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub catalog: PathBuf,
    pub covariates: PathBuf,
    pub outcomes: PathBuf,
    /// Pre-logged observations; when absent, factual observations are
    /// sampled from the outcome table under the bias config.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    pub method: Method,
    pub bias: BiasConfig,
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainSettings,
    pub out_dir: PathBuf,
}

impl ExperimentManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::schema(
                path.display().to_string(),
                format!("line {}", e.line()),
                e.to_string(),
            )
        })
    }

    fn train_config(&self, lambda: f64, regularizer: Regularizer) -> TrainConfig {
        TrainConfig {
            lambda,
            lambda_grid: self
                .train
                .lambda_grid
                .clone()
                .unwrap_or_else(default_lambda_grid),
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            seed: self.train.seed,
            regularizer,
            patience: self.train.patience,
        }
    }

    fn model_config(&self, catalog: &TreatmentCatalog, table: &OutcomeTable) -> ModelConfig {
        let mut mc = ModelConfig::new(table.covariate_dim(), catalog.len(), catalog.label_vocab());
        mc.rep_dim = self.train.rep_dim;
        mc.hidden_dim = self.train.hidden_dim;
        mc.phi_layers = self.train.layers;
        mc.g_layers = self.train.layers;
        mc.gnn.layers = self.train.layers;
        mc.gnn.hidden_dim = self.train.rep_dim;
        mc
    }
}

// ── Data preparation ─────────────────────────────────────────────────

pub struct PreparedData {
    pub catalog: TreatmentCatalog,
    pub table: OutcomeTable,
    pub split: UnitSplit,
    /// Present only under the zero-shot protocol.
    pub observed: Option<BTreeSet<TreatmentId>>,
    pub held_out: Option<BTreeSet<TreatmentId>>,
    pub train_obs: Vec<Observation>,
    pub val_obs: Vec<Observation>,
}

/// Load the dataset and apply splits plus factual-observation sampling,
/// all deterministically from the manifest's seeds.
pub fn prepare(manifest: &ExperimentManifest) -> Result<PreparedData> {
    let (catalog, table) = io::load_dataset(&DatasetPaths {
        catalog: &manifest.catalog,
        covariates: &manifest.covariates,
        outcomes: &manifest.outcomes,
    })?;
    let split = split_units(table.n_units(), &manifest.split)?;
    let (observed, held_out) = match manifest.split.zero_shot_fraction {
        Some(_) => {
            let (o, h) = split_treatments_zero_shot(catalog.len(), &manifest.split)?;
            (Some(o), Some(h))
        }
        None => (None, None),
    };

    let (train_obs, val_obs) = match &manifest.observations {
        Some(path) => {
            if observed.is_some() {
                return Err(Error::Config(
                    "the zero-shot protocol samples its own observations; \
                     remove the observations file"
                        .into(),
                ));
            }
            let all = io::read_observations_csv(path, &table, &catalog)?;
            let train_set: BTreeSet<usize> = split.train.iter().copied().collect();
            let val_set: BTreeSet<usize> = split.val.iter().copied().collect();
            let train: Vec<Observation> = all
                .iter()
                .filter(|o| train_set.contains(&o.unit_index))
                .cloned()
                .collect();
            let val: Vec<Observation> = all
                .iter()
                .filter(|o| val_set.contains(&o.unit_index))
                .cloned()
                .collect();
            (train, val)
        }
        None => {
            let train =
                bias_sample_units(&table, &split.train, &manifest.bias, observed.as_ref())?;
            let val = bias_sample_units(&table, &split.val, &manifest.bias, observed.as_ref())?;
            (train, val)
        }
    };
    if train_obs.is_empty() {
        return Err(Error::Fit("no training observations".into()));
    }
    Ok(PreparedData {
        catalog,
        table,
        split,
        observed,
        held_out,
        train_obs,
        val_obs,
    })
}

// ── Fitted models ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub enum FittedModel {
    Neural(ModelBundle),
    Ols(OlsModel),
    Mean(MeanModel),
}

impl FittedModel {
    pub fn predictor(&self) -> &dyn OutcomePredictor {
        match self {
            FittedModel::Neural(m) => m,
            FittedModel::Ols(m) => m,
            FittedModel::Mean(m) => m,
        }
    }
}

pub struct TrainRun {
    pub model: FittedModel,
    pub method: Method,
    pub selected_lambda: f64,
    /// Per-λ reports in grid order (single entry for fixed-λ runs and an
    /// empty report for the closed-form baselines).
    pub reports: Vec<(f64, TrainReport)>,
}

/// Train the manifest's method on prepared data.
pub fn train_method(manifest: &ExperimentManifest, data: &PreparedData) -> Result<TrainRun> {
    let method = manifest.method;
    match method {
        Method::Mean => {
            let model = mean_fit(&data.train_obs)?;
            Ok(TrainRun {
                model: FittedModel::Mean(model),
                method,
                selected_lambda: 0.0,
                reports: vec![(0.0, TrainReport::default())],
            })
        }
        Method::Ols => {
            let model = ols_fit(
                &data.train_obs,
                data.table.covariate_dim(),
                data.catalog.len(),
            )?;
            Ok(TrainRun {
                model: FittedModel::Ols(model),
                method,
                selected_lambda: 0.0,
                reports: vec![(0.0, TrainReport::default())],
            })
        }
        _ => {
            let mut mc = manifest.model_config(&data.catalog, &data.table);
            mc.psi_mode = method.psi_mode().expect("neural method");
            let regularizer = method.regularizer();

            let (lambda, mut model, reports) = if method.selects_lambda()
                && manifest.train.lambda.is_none()
            {
                let cfg = manifest.train_config(0.0, regularizer);
                select_lambda(&mc, &data.train_obs, &data.val_obs, &data.catalog, &cfg)?
            } else {
                let lambda = if method.selects_lambda() {
                    manifest.train.lambda.unwrap_or(0.0)
                } else {
                    0.0
                };
                let reg = if lambda > 0.0 { regularizer } else { Regularizer::None };
                let cfg = manifest.train_config(lambda, reg);
                let model = ModelBundle::new(mc.clone(), cfg.seed)?;
                let (fitted, report) =
                    fit(model, &data.train_obs, &data.val_obs, &data.catalog, &cfg)?;
                (lambda, fitted, vec![(lambda, report)])
            };
            if let Some(observed) = &data.observed {
                model.set_observed_treatments(observed.clone());
            }
            Ok(TrainRun {
                model: FittedModel::Neural(model),
                method,
                selected_lambda: lambda,
                reports,
            })
        }
    }
}

// ── Persistence ──────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    method: Method,
    selected_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observed_treatments: Option<Vec<TreatmentId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<MeanModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ols: Option<OlsModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDoc {
    selected_lambda: f64,
    per_lambda: Vec<LambdaReport>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LambdaReport {
    lambda: f64,
    report: TrainReport,
}

pub fn save_train_run(run: &TrainRun, out_dir: &Path) -> Result<()> {
    let doc = match &run.model {
        FittedModel::Neural(m) => {
            let checkpoint = checkpoint_to_string(&m.store)?;
            io::atomic_write(&out_dir.join("checkpoint.json"), checkpoint.as_bytes())?;
            ModelDoc {
                method: run.method,
                selected_lambda: run.selected_lambda,
                model: Some(m.config().clone()),
                observed_treatments: m
                    .observed_treatments()
                    .map(|s| s.iter().copied().collect()),
                mean: None,
                ols: None,
            }
        }
        FittedModel::Ols(m) => ModelDoc {
            method: run.method,
            selected_lambda: run.selected_lambda,
            model: None,
            observed_treatments: None,
            mean: None,
            ols: Some(m.clone()),
        },
        FittedModel::Mean(m) => ModelDoc {
            method: run.method,
            selected_lambda: run.selected_lambda,
            model: None,
            observed_treatments: None,
            mean: Some(*m),
            ols: None,
        },
    };
    let model_json =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Contract(e.to_string()))?;
    io::atomic_write(&out_dir.join("model.json"), model_json.as_bytes())?;

    let report = ReportDoc {
        selected_lambda: run.selected_lambda,
        per_lambda: run
            .reports
            .iter()
            .map(|(lambda, report)| LambdaReport {
                lambda: *lambda,
                report: report.clone(),
            })
            .collect(),
    };
    let report_json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Contract(e.to_string()))?;
    io::atomic_write(&out_dir.join("report.json"), report_json.as_bytes())
}

/// Load a persisted model directory (model.json plus checkpoint.json for
/// the neural methods).
pub fn load_model(dir: &Path) -> Result<(FittedModel, Method, f64)> {
    let model_path = dir.join("model.json");
    let text = std::fs::read_to_string(&model_path)
        .map_err(|e| Error::io(model_path.display().to_string(), e))?;
    let doc: ModelDoc = serde_json::from_str(&text).map_err(|e| {
        Error::schema(
            model_path.display().to_string(),
            format!("line {}", e.line()),
            e.to_string(),
        )
    })?;
    let model = match doc.method {
        Method::Mean => FittedModel::Mean(doc.mean.ok_or_else(|| {
            Error::schema(model_path.display().to_string(), "mean", "missing constant")
        })?),
        Method::Ols => FittedModel::Ols(doc.ols.ok_or_else(|| {
            Error::schema(model_path.display().to_string(), "ols", "missing weights")
        })?),
        _ => {
            let config = doc.model.ok_or_else(|| {
                Error::schema(
                    model_path.display().to_string(),
                    "model",
                    "missing model config",
                )
            })?;
            let ckpt_path = dir.join("checkpoint.json");
            let ckpt_text = std::fs::read_to_string(&ckpt_path)
                .map_err(|e| Error::io(ckpt_path.display().to_string(), e))?;
            let store = checkpoint_from_str(&ckpt_text, &ckpt_path.display().to_string())?;
            let observed = doc
                .observed_treatments
                .map(|v| v.into_iter().collect::<BTreeSet<_>>());
            FittedModel::Neural(ModelBundle::from_checkpoint(config, store, observed)?)
        }
    };
    Ok((model, doc.method, doc.selected_lambda))
}

// ── Commands ─────────────────────────────────────────────────────────

pub struct GenerateSpec {
    pub synthetic: SyntheticConfig,
    pub out_dir: PathBuf,
}

/// Write catalog.json, covariates.csv, and outcomes.csv; byte-identical
/// across re-runs with the same flags.
pub fn run_generate(spec: &GenerateSpec) -> Result<()> {
    let (catalog, table) = generate_synthetic(&spec.synthetic)?;
    io::save_dataset(
        &DatasetPaths {
            catalog: &spec.out_dir.join("catalog.json"),
            covariates: &spec.out_dir.join("covariates.csv"),
            outcomes: &spec.out_dir.join("outcomes.csv"),
        },
        &catalog,
        &table,
    )
}

/// Bias-sample, split, train per the manifest, and persist the model,
/// checkpoint, and report into `manifest.out_dir`.
pub fn run_train(manifest: &ExperimentManifest) -> Result<TrainRun> {
    let data = prepare(manifest)?;
    let run = train_method(manifest, &data)?;
    save_train_run(&run, &manifest.out_dir)?;
    Ok(run)
}

#[derive(Debug, Serialize)]
pub struct EvalDoc {
    pub method: Method,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform: Option<EvalResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<ZeroShotMetrics>,
}

/// One flat results row, consumable by external plotting tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub split: String,
    pub group: String,
    pub metric: String,
    pub value: f64,
}

fn rows_from_eval(doc: &EvalDoc) -> Vec<ResultRow> {
    let base = |group: &str, metric: &str, value: f64| ResultRow {
        method: doc.method.as_str().to_string(),
        eta: doc.eta,
        lambda: doc.lambda,
        seed: doc.seed,
        split: "test".to_string(),
        group: group.to_string(),
        metric: metric.to_string(),
        value,
    };
    let mut rows = Vec::new();
    if let Some(uniform) = &doc.uniform {
        rows.push(base("all", "rmse", uniform.rmse));
        rows.push(base("all", "ci", uniform.ci));
        for g in &uniform.groups {
            rows.push(base(&g.label, "rmse", g.rmse));
            if let Some(ci) = g.ci {
                rows.push(base(&g.label, "ci", ci));
            }
        }
    }
    if let Some(zs) = &doc.zero_shot {
        rows.push(base("heldout", "rmse", zs.rmse));
        if let Some(ci) = zs.ci {
            rows.push(base("heldout", "ci", ci));
        }
    }
    rows
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.method, &a.split, &a.group, &a.metric)
            .cmp(&(&b.method, &b.split, &b.group, &b.metric))
            .then(a.eta.partial_cmp(&b.eta).expect("finite eta"))
            .then(a.seed.cmp(&b.seed))
    });
}

fn write_rows_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::schema(path.display().to_string(), "write", e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::schema(path.display().to_string(), "flush", e.to_string()))?;
    io::atomic_write(path, &bytes)
}

fn read_rows_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::schema(&file, "open", e.to_string()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<ResultRow>().enumerate() {
        rows.push(record.map_err(|e| {
            Error::schema(&file, format!("row {}", i + 1), e.to_string())
        })?);
    }
    Ok(rows)
}

/// Evaluate a persisted model on the manifest's test protocol and write
/// eval.json plus eval.csv into `out_dir`.
pub fn run_evaluate(
    manifest: &ExperimentManifest,
    model_dir: &Path,
    zero_shot: bool,
    out_dir: &Path,
) -> Result<EvalDoc> {
    let data = prepare(manifest)?;
    let (model, method, lambda) = load_model(model_dir)?;
    let predictor = model.predictor();

    let doc = if zero_shot {
        let held = data.held_out.as_ref().ok_or_else(|| {
            Error::Config("zero-shot evaluation needs split.zero_shot_fraction".into())
        })?;
        let metrics = zero_shot_eval(
            predictor,
            held,
            &data.split.test,
            &data.table,
            &data.catalog,
        )?;
        EvalDoc {
            method,
            eta: manifest.bias.eta,
            lambda,
            seed: manifest.train.seed,
            uniform: None,
            zero_shot: Some(metrics),
        }
    } else {
        let uniform = evaluate_all(
            predictor,
            &data.train_obs,
            &data.split.test,
            &data.table,
            &data.catalog,
        )?;
        EvalDoc {
            method,
            eta: manifest.bias.eta,
            lambda,
            seed: manifest.train.seed,
            uniform: Some(uniform),
            zero_shot: None,
        }
    };

    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Contract(e.to_string()))?;
    io::atomic_write(&out_dir.join("eval.json"), json.as_bytes())?;
    let mut rows = rows_from_eval(&doc);
    sort_rows(&mut rows);
    write_rows_csv(&out_dir.join("eval.csv"), &rows)?;
    Ok(doc)
}

// ── Sweep ────────────────────────────────────────────────────────────

pub struct SweepSpec {
    pub etas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub zero_shot: bool,
    pub out_csv: PathBuf,
    /// None lets the worker pool pick its default width (or the
    /// GRAPHITE_WORKERS environment variable).
    pub workers: Option<usize>,
}

fn cell_manifest(base: &ExperimentManifest, method: Method, eta: f64, seed: u64) -> ExperimentManifest {
    let mut m = base.clone();
    m.method = method;
    m.bias.eta = eta;
    m.bias.seed = seed;
    m.split.seed = seed;
    m.train.seed = seed;
    m
}

/// One sweep cell: train per the manifest and return the headline test
/// RMSE row (uniform over all treatments, or the held-out subset in
/// zero-shot mode).
fn run_cell(base: &ExperimentManifest, method: Method, eta: f64, seed: u64, zero_shot: bool) -> Result<ResultRow> {
    let manifest = cell_manifest(base, method, eta, seed);
    let data = prepare(&manifest)?;
    let run = train_method(&manifest, &data)?;
    let predictor = run.model.predictor();
    let (group, value) = if zero_shot {
        let held = data.held_out.as_ref().ok_or_else(|| {
            Error::Config("zero-shot sweep needs split.zero_shot_fraction".into())
        })?;
        let metrics = zero_shot_eval(
            predictor,
            held,
            &data.split.test,
            &data.table,
            &data.catalog,
        )?;
        ("heldout", metrics.rmse)
    } else {
        let rmse = crate::evaluation::rmse_all_pairs(
            predictor,
            &data.split.test,
            &data.table,
            &data.catalog,
            None,
        )?;
        ("all", rmse)
    };
    Ok(ResultRow {
        method: method.as_str().to_string(),
        eta,
        lambda: run.selected_lambda,
        seed,
        split: "test".to_string(),
        group: group.to_string(),
        metric: "rmse".to_string(),
        value,
    })
}

/// Cartesian (η × method × seed) sweep writing one row per cell. Existing
/// rows in the output CSV are kept and their cells skipped, so deleting a
/// row recomputes exactly that cell. Returns the number of cells computed.
pub fn run_sweep(base: &ExperimentManifest, spec: &SweepSpec) -> Result<usize> {
    use rayon::prelude::*;

    if spec.etas.is_empty() || spec.methods.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs etas, methods, and seeds".into()));
    }
    let existing = if spec.out_csv.exists() {
        read_rows_csv(&spec.out_csv)?
    } else {
        Vec::new()
    };
    let have: BTreeSet<(String, u64, u64)> = existing
        .iter()
        .map(|r| (r.method.clone(), r.eta.to_bits(), r.seed))
        .collect();

    let mut todo = Vec::new();
    for &eta in &spec.etas {
        for &method in &spec.methods {
            for &seed in &spec.seeds {
                if !have.contains(&(method.as_str().to_string(), eta.to_bits(), seed)) {
                    todo.push((method, eta, seed));
                }
            }
        }
    }

    let workers = spec
        .workers
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let computed: Vec<Result<ResultRow>> = pool.install(|| {
        todo.par_iter()
            .map(|&(method, eta, seed)| run_cell(base, method, eta, seed, spec.zero_shot))
            .collect()
    });

    let mut rows = existing;
    let added = computed.len();
    for row in computed {
        rows.push(row?);
    }
    sort_rows(&mut rows);
    write_rows_csv(&spec.out_csv, &rows)?;
    Ok(added)
}

/// Residual RMSE of predicting a constant for every pair; the closed-form
/// performance of the mean baseline.
pub fn constant_prediction_rmse(table: &OutcomeTable, units: &[usize], constant: f64) -> f64 {
    let mut acc = crate::numerics::KahanSum::new();
    let t = table.n_treatments();
    for &u in units {
        for col in 0..t {
            let r = table.outcome_row(u)[col] - constant;
            acc.add(r * r);
        }
    }
    (acc.value() / (units.len() * t) as f64).sqrt()
}

/// Covariate block helper shared by CLI evaluation paths.
pub fn covariates_of(table: &OutcomeTable, units: &[usize]) -> Result<Tensor> {
    table.covariate_block(units)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.as_str()).unwrap(), m);
        }
        assert!(Method::parse("bart").is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let manifest = ExperimentManifest {
            catalog: "cat.json".into(),
            covariates: "cov.csv".into(),
            outcomes: "out.csv".into(),
            observations: None,
            method: Method::Graphite,
            bias: BiasConfig::new(40.0, 7),
            split: SplitSpec::new(7),
            train: TrainSettings::default(),
            out_dir: "out".into(),
        };
        let text = serde_json::to_string(&manifest).unwrap();
        let back: ExperimentManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn result_rows_sort_deterministically() {
        let row = |method: &str, eta: f64, seed: u64| ResultRow {
            method: method.into(),
            eta,
            lambda: 0.0,
            seed,
            split: "test".into(),
            group: "all".into(),
            metric: "rmse".into(),
            value: 1.0,
        };
        let mut a = vec![row("gnn", 10.0, 1), row("gnn", 0.0, 2), row("embedding", 40.0, 0)];
        let mut b = a.clone();
        b.reverse();
        sort_rows(&mut a);
        sort_rows(&mut b);
        assert_eq!(a, b);
        assert_eq!(a[0].method, "embedding");
    }
}
