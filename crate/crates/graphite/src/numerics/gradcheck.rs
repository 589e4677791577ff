//! Central finite-difference gradients, for validating the tape.

use crate::error::Result;
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

/// Central finite differences of `f` w.r.t. every parameter coordinate,
/// one tensor per parameter in registration order. `f` must be a pure
/// function of the store's values.
pub fn finite_difference_gradients<F>(
    store: &mut ParamStore,
    step: f64,
    mut f: F,
) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let ids: Vec<_> = store.ids().collect();
    let mut grads = Vec::with_capacity(ids.len());
    for id in ids {
        let mut grad = Tensor::zeros_like(store.value(id));
        for i in 0..grad.numel() {
            let original = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = original + step;
            let plus = f(store)?;
            store.value_mut(id).data_mut()[i] = original - step;
            let minus = f(store)?;
            store.value_mut(id).data_mut()[i] = original;
            grad.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Worst relative disagreement between analytic and finite-difference
/// gradients; coordinates where both are below `floor` are skipped.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            let scale = x.abs().max(y.abs());
            if scale <= floor {
                continue;
            }
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

/// Run backward on the loss built by `build` and compare every parameter
/// gradient against central finite differences.
pub fn check_gradients<F>(store: &mut ParamStore, build: F, step: f64, floor: f64) -> Result<f64>
where
    F: Fn(&ParamStore, &mut crate::numerics::Tape) -> Result<crate::numerics::Var>,
{
    store.zero_grads();
    let mut tape = crate::numerics::Tape::new();
    let loss = build(store, &mut tape)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Tensor> = store.ids().map(|id| store.grad(id).clone()).collect();
    store.zero_grads();

    let numeric = finite_difference_gradients(store, step, |s| {
        let mut t = crate::numerics::Tape::new();
        let loss = build(s, &mut t)?;
        Ok(t.value(loss).item())
    })?;
    Ok(max_relative_error(&analytic, &numeric, floor))
}
