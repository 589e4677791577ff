//! Thin CLI over the library pipelines: generate, train, evaluate, sweep.
//!
//! Every command is deterministic given its flags; all randomness flows
//! from explicit seeds. Exit code is nonzero on any error.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use graphite::data::{BiasConfig, SplitSpec, SyntheticConfig};
use graphite::experiment::{
    run_evaluate, run_generate, run_sweep, run_train, ExperimentManifest, GenerateSpec, Method,
    SweepSpec, TrainSettings,
};

#[derive(Parser)]
#[command(name = "graphite", version, about = "Outcome prediction for graph-structured treatments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (catalog.json, covariates.csv, outcomes.csv)
    Generate(GenerateArgs),
    /// Train one method on a dataset and persist model + report
    Train(TrainArgs),
    /// Evaluate a persisted model on the uniform test protocol
    Evaluate(EvaluateArgs),
    /// Cartesian (eta x method x seed) sweep into one results CSV
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of units [default: 500]
    #[arg(long)]
    units: Option<usize>,
    /// Number of treatments [default: 50]
    #[arg(long)]
    treatments: Option<usize>,
    /// Covariate dimension [default: 20]
    #[arg(long)]
    covariate_dim: Option<usize>,
    /// Minimum graph size [default: 6]
    #[arg(long)]
    graph_min: Option<usize>,
    /// Maximum graph size [default: 14]
    #[arg(long)]
    graph_max: Option<usize>,
    /// Node label vocabulary [default: 8]
    #[arg(long)]
    label_vocab: Option<usize>,
    /// Generation seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Manifest file providing defaults for every flag below
    #[arg(long)]
    config: Option<PathBuf>,
    /// Treatment catalog JSON
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Covariates CSV
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Ground-truth outcome table CSV
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Pre-logged observations CSV (skips bias sampling)
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Selection-bias magnitude eta [default: 40]
    #[arg(long)]
    eta: Option<f64>,
    /// Observations sampled per unit [default: 1]
    #[arg(long)]
    obs_per_unit: Option<usize>,
    /// Fraction of treatments held out for zero-shot evaluation [default: off]
    #[arg(long)]
    zero_shot_fraction: Option<f64>,
    /// Master seed for bias sampling, splits, and training [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Method: graphite, gnn, gnn_mmd, embedding, ols, mean [default: graphite]
    #[arg(long)]
    method: Option<String>,
    /// Fixed regularization weight; omit to select on validation RMSE
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated lambda grid [default: 0.001,0.01,0.1,1,10,100,1000]
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Mini-batch size [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training epochs [default: 60]
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Early-stopping patience in epochs, 0 disables [default: 20]
    #[arg(long)]
    patience: Option<usize>,
    /// Representation dimension for phi and psi [default: 64]
    #[arg(long)]
    rep_dim: Option<usize>,
    /// Hidden width of phi and g [default: 64]
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Layer count for phi, psi, and g [default: 3]
    #[arg(long)]
    layers: Option<usize>,
    /// Output directory for model.json, checkpoint.json, report.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory containing model.json (+ checkpoint.json)
    #[arg(long)]
    model: PathBuf,
    /// Restrict evaluation to the held-out zero-shot treatments
    #[arg(long)]
    zero_shot: bool,
    /// Output directory for eval.json and eval.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated eta list [default: 0,10,20,40]
    #[arg(long)]
    eta_list: Option<String>,
    /// Comma-separated methods [default: all six]
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated seeds, or a..b range [default: 0..10]
    #[arg(long)]
    seeds: Option<String>,
    /// Evaluate the held-out zero-shot treatments instead of all pairs
    #[arg(long)]
    zero_shot: bool,
    /// Worker pool width [default: GRAPHITE_WORKERS or all cores]
    #[arg(long)]
    workers: Option<usize>,
    /// Results CSV path (existing cells are kept and skipped)
    #[arg(long)]
    out: PathBuf,
    /// Training epochs per cell [default: 60]
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Early-stopping patience in epochs, 0 disables [default: 20]
    #[arg(long)]
    patience: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> anyhow::Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| anyhow::anyhow!("cannot parse {s:?} in --{what}"))
        })
        .collect()
}

fn parse_seeds(raw: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = raw.split_once("..") {
        let start: u64 = a.trim().parse().context("seed range start")?;
        let end: u64 = b.trim().parse().context("seed range end")?;
        anyhow::ensure!(start < end, "empty seed range {raw}");
        return Ok((start..end).collect());
    }
    parse_list(raw, "seeds")
}

/// Flags override the manifest; the manifest supplies the rest.
fn resolve_manifest(data: &DataArgs) -> anyhow::Result<ExperimentManifest> {
    let mut manifest = match &data.config {
        Some(path) => ExperimentManifest::from_file(path)
            .with_context(|| format!("loading manifest {}", path.display()))?,
        None => {
            let require = |p: &Option<PathBuf>, name: &str| {
                p.clone()
                    .ok_or_else(|| anyhow::anyhow!("--{name} is required without --config"))
            };
            ExperimentManifest {
                catalog: require(&data.catalog, "catalog")?,
                covariates: require(&data.covariates, "covariates")?,
                outcomes: require(&data.outcomes, "outcomes")?,
                observations: None,
                method: Method::Graphite,
                bias: BiasConfig::new(40.0, 0),
                split: SplitSpec::new(0),
                train: TrainSettings::default(),
                out_dir: PathBuf::from("."),
            }
        }
    };
    if let Some(p) = &data.catalog {
        manifest.catalog = p.clone();
    }
    if let Some(p) = &data.covariates {
        manifest.covariates = p.clone();
    }
    if let Some(p) = &data.outcomes {
        manifest.outcomes = p.clone();
    }
    if let Some(p) = &data.observations {
        manifest.observations = Some(p.clone());
    }
    if let Some(eta) = data.eta {
        manifest.bias.eta = eta;
    }
    if let Some(k) = data.obs_per_unit {
        manifest.bias.observations_per_unit = k;
    }
    if let Some(f) = data.zero_shot_fraction {
        manifest.split.zero_shot_fraction = Some(f);
    }
    if let Some(seed) = data.seed {
        manifest.bias.seed = seed;
        manifest.split.seed = seed;
        manifest.train.seed = seed;
    }
    Ok(manifest)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let mut synthetic =
                SyntheticConfig::new(args.units.unwrap_or(500), args.treatments.unwrap_or(50),
                    args.seed.unwrap_or(0));
            if let Some(d) = args.covariate_dim {
                synthetic.covariate_dim = d;
            }
            synthetic.graph_size_range = (
                args.graph_min.unwrap_or(synthetic.graph_size_range.0),
                args.graph_max.unwrap_or(synthetic.graph_size_range.1),
            );
            if let Some(v) = args.label_vocab {
                synthetic.label_vocab = v;
            }
            run_generate(&GenerateSpec {
                synthetic,
                out_dir: args.out.clone(),
            })?;
            println!("wrote catalog.json, covariates.csv, outcomes.csv to {}", args.out.display());
        }
        Command::Train(args) => {
            let mut manifest = resolve_manifest(&args.data)?;
            if let Some(m) = &args.method {
                manifest.method = Method::parse(m)?;
            }
            if let Some(l) = args.lambda {
                manifest.train.lambda = Some(l);
            }
            if let Some(grid) = &args.lambda_grid {
                manifest.train.lambda_grid = Some(parse_list(grid, "lambda-grid")?);
            }
            if let Some(b) = args.batch_size {
                manifest.train.batch_size = b;
            }
            if let Some(e) = args.epochs {
                manifest.train.epochs = e;
            }
            if let Some(lr) = args.learning_rate {
                manifest.train.learning_rate = lr;
            }
            if let Some(p) = args.patience {
                manifest.train.patience = p;
            }
            if let Some(d) = args.rep_dim {
                manifest.train.rep_dim = d;
            }
            if let Some(d) = args.hidden_dim {
                manifest.train.hidden_dim = d;
            }
            if let Some(l) = args.layers {
                manifest.train.layers = l;
            }
            if let Some(out) = &args.out {
                manifest.out_dir = out.clone();
            }
            let run = run_train(&manifest)?;
            println!(
                "trained {} (lambda = {}); artifacts in {}",
                run.method,
                run.selected_lambda,
                manifest.out_dir.display()
            );
        }
        Command::Evaluate(args) => {
            let manifest = resolve_manifest(&args.data)?;
            let out_dir = args.out.clone().unwrap_or_else(|| manifest.out_dir.clone());
            let doc = run_evaluate(&manifest, &args.model, args.zero_shot, &out_dir)?;
            match (&doc.uniform, &doc.zero_shot) {
                (Some(u), _) => println!(
                    "{}: uniform test RMSE {:.6}, CI {:.6}",
                    doc.method, u.rmse, u.ci
                ),
                (_, Some(z)) => println!(
                    "{}: zero-shot RMSE {:.6}{}",
                    doc.method,
                    z.rmse,
                    z.ci.map(|c| format!(", CI {c:.6}")).unwrap_or_default()
                ),
                _ => {}
            }
        }
        Command::Sweep(args) => {
            let mut manifest = resolve_manifest(&args.data)?;
            if let Some(e) = args.epochs {
                manifest.train.epochs = e;
            }
            if let Some(b) = args.batch_size {
                manifest.train.batch_size = b;
            }
            if let Some(lr) = args.learning_rate {
                manifest.train.learning_rate = lr;
            }
            if let Some(p) = args.patience {
                manifest.train.patience = p;
            }
            let etas = match &args.eta_list {
                Some(raw) => parse_list(raw, "eta-list")?,
                None => vec![0.0, 10.0, 20.0, 40.0],
            };
            let methods = match &args.methods {
                Some(raw) => raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Method::parse)
                    .collect::<graphite::Result<Vec<_>>>()?,
                None => Method::ALL.to_vec(),
            };
            let seeds = match &args.seeds {
                Some(raw) => parse_seeds(raw)?,
                None => (0..10).collect(),
            };
            let added = run_sweep(
                &manifest,
                &SweepSpec {
                    etas,
                    methods,
                    seeds,
                    zero_shot: args.zero_shot,
                    out_csv: args.out.clone(),
                    workers: args.workers,
                },
            )?;
            println!("computed {added} cells into {}", args.out.display());
        }
    }
    Ok(())
}
