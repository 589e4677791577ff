//! Select the regularization weight on validation RMSE over the decade
//! grid, the way the training pipeline does it.

use graphite::data::{bias_sample_units, generate_synthetic, split_units, BiasConfig, SplitSpec, SyntheticConfig};
use graphite::evaluation::rmse_all_pairs;
use graphite::model::ModelConfig;
use graphite::training::{select_lambda, TrainConfig};

fn main() -> graphite::Result<()> {
    let seed = 4;
    let (catalog, table) = generate_synthetic(&SyntheticConfig::new(300, 30, 7))?;
    let split = split_units(table.n_units(), &SplitSpec::new(seed))?;
    let bias = BiasConfig::new(40.0, seed);
    let train_obs = bias_sample_units(&table, &split.train, &bias, None)?;
    let val_obs = bias_sample_units(&table, &split.val, &bias, None)?;

    let mut mc = ModelConfig::new(table.covariate_dim(), catalog.len(), catalog.label_vocab());
    mc.rep_dim = 32;
    mc.hidden_dim = 32;
    mc.gnn.hidden_dim = 32;
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 64,
        learning_rate: 5e-4,
        seed,
        ..TrainConfig::default()
    };

    let (best, model, reports) = select_lambda(&mc, &train_obs, &val_obs, &catalog, &cfg)?;
    println!("lambda    val RMSE");
    for (lambda, report) in &reports {
        let marker = if *lambda == best { "  <- selected" } else { "" };
        println!(
            "{lambda:>8}  {:.4}{marker}",
            report.best_val_rmse.unwrap_or(f64::NAN)
        );
    }
    let test = rmse_all_pairs(&model, &split.test, &table, &catalog, None)?;
    println!("\nselected lambda = {best}; uniform-test RMSE = {test:.4}");
    Ok(())
}
