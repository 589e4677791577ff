//! The softmax selection-bias sampler: as eta grows, units are assigned
//! their high-outcome treatments more often and popular treatments start
//! to dominate the logged data.

use graphite::data::{bias_sample, generate_synthetic, BiasConfig, SyntheticConfig};

fn main() -> graphite::Result<()> {
    let (_, table) = generate_synthetic(&SyntheticConfig::new(2000, 10, 3))?;
    println!("outcome table: {} units x {} treatments, std = {:.4}", table.n_units(), table.n_treatments(), table.outcome_std());

    for eta in [0.0, 10.0, 20.0, 40.0] {
        let obs = bias_sample(&table, &BiasConfig::new(eta, 11), None)?;
        let argmax_hits = obs
            .iter()
            .filter(|o| {
                let row = table.outcome_row(o.unit_index);
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                o.treatment.index() == best
            })
            .count();
        let mut counts = vec![0usize; table.n_treatments()];
        for o in &obs {
            counts[o.treatment.index()] += 1;
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let mean_logged = obs.iter().map(|o| o.outcome).sum::<f64>() / obs.len() as f64;
        println!(
            "eta = {eta:>4}: argmax-treatment frequency {:.3}, top treatment share {:.3}, logged-outcome mean {:+.4}",
            argmax_hits as f64 / obs.len() as f64,
            counts[0] as f64 / obs.len() as f64,
            mean_logged,
        );
    }
    println!("(uniform assignment would give argmax frequency 0.100)");
    Ok(())
}
