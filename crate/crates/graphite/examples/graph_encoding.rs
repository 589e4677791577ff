//! Encode treatment graphs with the message-passing encoder ψ and check
//! its permutation invariance: relabeling nodes never changes ψ(G).

use graphite::gnn::GnnEncoder;
use graphite::graph::{GnnConfig, LabeledGraph};
use graphite::numerics::ParamStore;
use rand::SeedableRng;

fn main() -> graphite::Result<()> {
    // a 6-node ring with a tail, labels playing the role of atom types
    let graph = LabeledGraph::new(
        vec![0, 1, 1, 2, 0, 1, 3],
        vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (3, 6)],
    )?;

    let mut store = ParamStore::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let encoder = GnnEncoder::register(
        &mut store,
        "psi",
        4,
        GnnConfig {
            layers: 3,
            hidden_dim: 8,
            ..GnnConfig::default()
        },
        &mut rng,
    )?;

    let code = encoder.encode_treatment(&store, &graph)?;
    println!("psi(G)       = {:?}", rounded(code.data()));

    // the same molecule with nodes renumbered
    let permuted = graph.permuted(&[3, 5, 0, 6, 2, 4, 1])?;
    let code_permuted = encoder.encode_treatment(&store, &permuted)?;
    println!("psi(perm(G)) = {:?}", rounded(code_permuted.data()));

    let max_diff = code
        .data()
        .iter()
        .zip(code_permuted.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("max |difference| = {max_diff:.2e}");

    // a structurally different graph lands elsewhere
    let other = LabeledGraph::new(vec![0, 1, 1, 2, 0, 1, 3], vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)])?;
    let code_other = encoder.encode_treatment(&store, &other)?;
    let dist: f64 = code
        .data()
        .iter()
        .zip(code_other.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("distance to a different structure = {dist:.4}");
    Ok(())
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
