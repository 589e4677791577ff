//! Non-neural baselines: global-mean prediction and ordinary least
//! squares on [covariates; one-hot treatment; 1].

use serde::{Deserialize, Serialize};

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::graph::TreatmentId;
use crate::model::treatment_one_hot;

const RIDGE_JITTER: f64 = 1e-8;

/// Predicts the global training-outcome mean for every (x, t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub mean: f64,
}

pub fn mean_fit(observations: &[Observation]) -> Result<MeanModel> {
    if observations.is_empty() {
        return Err(Error::Fit("mean baseline needs at least one observation".into()));
    }
    let mean = observations.iter().map(|o| o.outcome).sum::<f64>() / observations.len() as f64;
    Ok(MeanModel { mean })
}

impl MeanModel {
    pub fn predict(&self, _covariates: &[f64], _t: TreatmentId) -> f64 {
        self.mean
    }
}

/// Least-squares weights over the design [x; one_hot(t); 1], solved via
/// ridge-jittered normal equations (the one-hot block is rank-deficient
/// without the jitter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub weights: Vec<f64>,
    pub covariate_dim: usize,
    pub n_treatments: usize,
}

fn design_row(covariates: &[f64], t: TreatmentId, n_treatments: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(covariates.len() + n_treatments + 1);
    row.extend_from_slice(covariates);
    row.extend_from_slice(treatment_one_hot(t, n_treatments)?.data());
    row.push(1.0);
    Ok(row)
}

/// Solve A x = b for symmetric positive-definite A via Cholesky.
fn solve_spd(a: &mut [f64], b: &mut [f64], d: usize) -> Result<()> {
    // in-place LL^T factorization
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= a[i * d + k] * a[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Fit("normal equations are not positive definite".into()));
                }
                a[i * d + i] = sum.sqrt();
            } else {
                a[i * d + j] = sum / a[j * d + j];
            }
        }
    }
    // forward substitution L y = b
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * d + k] * b[k];
        }
        b[i] = sum / a[i * d + i];
    }
    // back substitution L^T x = y
    for i in (0..d).rev() {
        let mut sum = b[i];
        for k in (i + 1)..d {
            sum -= a[k * d + i] * b[k];
        }
        b[i] = sum / a[i * d + i];
    }
    Ok(())
}

pub fn ols_fit(
    observations: &[Observation],
    covariate_dim: usize,
    n_treatments: usize,
) -> Result<OlsModel> {
    if observations.is_empty() {
        return Err(Error::Fit("ols needs at least one observation".into()));
    }
    let d = covariate_dim + n_treatments + 1;
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for o in observations {
        if o.covariates.len() != covariate_dim {
            return Err(Error::shape(
                "ols_fit",
                format!("{} covariates vs dim {covariate_dim}", o.covariates.len()),
            ));
        }
        let row = design_row(&o.covariates, o.treatment, n_treatments)?;
        for i in 0..d {
            xty[i] += row[i] * o.outcome;
            for j in 0..=i {
                xtx[i * d + j] += row[i] * row[j];
            }
        }
    }
    // symmetrize and add ridge jitter
    for i in 0..d {
        for j in (i + 1)..d {
            xtx[i * d + j] = xtx[j * d + i];
        }
        xtx[i * d + i] += RIDGE_JITTER;
    }
    solve_spd(&mut xtx, &mut xty, d)?;
    Ok(OlsModel {
        weights: xty,
        covariate_dim,
        n_treatments,
    })
}

impl OlsModel {
    pub fn predict(&self, covariates: &[f64], t: TreatmentId) -> Result<f64> {
        let row = design_row(covariates, t, self.n_treatments)?;
        Ok(row.iter().zip(&self.weights).map(|(x, w)| x * w).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(unit: usize, x: Vec<f64>, t: usize, y: f64) -> Observation {
        Observation {
            unit_index: unit,
            covariates: x,
            treatment: TreatmentId(t),
            outcome: y,
        }
    }

    #[test]
    fn mean_baseline_is_treatment_independent() {
        let set = vec![
            obs(0, vec![1.0], 1, 1.0),
            obs(1, vec![2.0], 2, 2.0),
            obs(2, vec![3.0], 1, 3.0),
        ];
        let m = mean_fit(&set).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.predict(&[9.0], TreatmentId(1)), 2.0);
        assert_eq!(m.predict(&[9.0], TreatmentId(2)), 2.0);
        assert!(mean_fit(&[]).is_err());
    }

    #[test]
    fn ols_recovers_exact_linear_data() {
        // y = 2 x0 - x1 + (t==2 ? 0.5 : 0) + 3
        let truth = |x: &[f64], t: usize| 2.0 * x[0] - x[1] + if t == 2 { 0.5 } else { 0.0 } + 3.0;
        let mut set = Vec::new();
        let mut v: f64 = 0.13;
        for i in 0..40 {
            let x = vec![v.sin(), (v * 1.7).cos()];
            let t = 1 + (i % 2);
            set.push(obs(i, x.clone(), t, truth(&x, t)));
            v += 0.37;
        }
        let model = ols_fit(&set, 2, 2).unwrap();
        let mut sq = 0.0;
        for o in &set {
            let pred = model.predict(&o.covariates, o.treatment).unwrap();
            sq += (pred - o.outcome) * (pred - o.outcome);
        }
        let rmse = (sq / set.len() as f64).sqrt();
        assert!(rmse < 1e-6, "rmse {rmse}");
    }

    #[test]
    fn single_observation_reproduces_its_outcome() {
        let set = vec![obs(0, vec![0.4, -1.0], 1, 2.5)];
        let model = ols_fit(&set, 2, 3).unwrap();
        let pred = model.predict(&[0.4, -1.0], TreatmentId(1)).unwrap();
        assert!((pred - 2.5).abs() < 1e-4, "pred {pred}");
    }

    #[test]
    fn matches_pseudo_inverse_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut set = Vec::new();
        for i in 0..30 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = 1 + (i % 2);
            let y: f64 = rng.random_range(-2.0..2.0);
            set.push(obs(i, x, t, y));
        }
        let model = ols_fit(&set, 3, 2).unwrap();

        // oracle: Gauss-Jordan solve of the same jittered normal equations
        let d = 3 + 2 + 1;
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for o in &set {
            let row = design_row(&o.covariates, o.treatment, 2).unwrap();
            for i in 0..d {
                b[i] += row[i] * o.outcome;
                for j in 0..d {
                    a[i * d + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            a[i * d + i] += RIDGE_JITTER;
        }
        // augmented elimination with partial pivoting
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&p, &q| a[p * d + col].abs().partial_cmp(&a[q * d + col].abs()).unwrap())
                .unwrap();
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            b.swap(col, pivot);
            let diag = a[col * d + col];
            for j in 0..d {
                a[col * d + j] /= diag;
            }
            b[col] /= diag;
            for r in 0..d {
                if r != col {
                    let f = a[r * d + col];
                    for j in 0..d {
                        a[r * d + j] -= f * a[col * d + j];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        for (w, oracle) in model.weights.iter().zip(&b) {
            assert!((w - oracle).abs() < 1e-6, "{w} vs {oracle}");
        }
    }

    #[test]
    fn out_of_range_treatment_rejected() {
        let set = vec![obs(0, vec![0.0], 1, 1.0)];
        let model = ols_fit(&set, 1, 2).unwrap();
        assert!(model.predict(&[0.0], TreatmentId(3)).is_err());
    }
}
