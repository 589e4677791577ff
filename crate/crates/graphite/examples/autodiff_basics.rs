//! The tensor engine in isolation: record ops on a tape, backpropagate,
//! check against finite differences, and run Adam on a tiny problem.

use graphite::numerics::gradcheck::{finite_difference_gradients, max_relative_error};
use graphite::numerics::{Adam, AdamConfig, ParamStore, Tape, Tensor};

fn main() -> graphite::Result<()> {
    // A two-parameter "network": loss = mean((relu(x W) - y)^2)
    let mut store = ParamStore::new();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let w = store.register_uniform("w", &[3, 2], 0.7, &mut rng)?;
    let x = Tensor::matrix(4, 3, vec![0.4, -1.0, 0.2, 1.3, 0.5, -0.6, -0.2, 0.8, 1.1, 0.0, -0.4, 0.9])?;
    let y = Tensor::matrix(4, 2, vec![0.3, 0.1, 0.6, -0.2, 0.0, 0.5, 0.2, 0.2])?;

    let build = |store: &ParamStore, tape: &mut Tape| -> graphite::Result<graphite::Var> {
        let xv = tape.constant(x.clone())?;
        let wv = tape.param(store, w)?;
        let h = tape.matmul(xv, wv)?;
        let h = tape.relu(h)?;
        let yv = tape.constant(y.clone())?;
        let sq = tape.sq_diff(h, yv)?;
        tape.mean(sq)
    };

    // analytic gradient via the tape
    let mut tape = Tape::new();
    let loss = build(&store, &mut tape)?;
    println!("initial loss = {:.6}", tape.value(loss).item());
    tape.backward(loss, &mut store)?;
    let analytic = vec![store.grad(w).clone()];
    store.zero_grads();

    // central finite differences as an independent check
    let numeric = finite_difference_gradients(&mut store, 1e-5, |s| {
        let mut t = Tape::new();
        let l = build(s, &mut t)?;
        Ok(t.value(l).item())
    })?;
    println!(
        "max relative gradient error vs finite differences: {:.2e}",
        max_relative_error(&analytic, &numeric, 1e-8)
    );

    // a few hundred Adam steps drive the loss down
    let mut adam = Adam::new(AdamConfig::default());
    for step in 0..300 {
        let mut tape = Tape::new();
        let loss = build(&store, &mut tape)?;
        if step % 100 == 0 {
            println!("step {step:3}: loss = {:.6}", tape.value(loss).item());
        }
        tape.backward(loss, &mut store)?;
        adam.step(&mut store);
        store.zero_grads();
    }
    let mut tape = Tape::new();
    let loss = build(&store, &mut tape)?;
    println!("final loss = {:.6}", tape.value(loss).item());
    Ok(())
}
