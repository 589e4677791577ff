//! Kernel independence machinery: Gaussian kernel matrices, the biased
//! HSIC estimator (N−1)⁻² tr(KᶲHKᵠH), its normalized form, and the
//! pivot-group MMD penalty.
//!
//! The differentiable implementations live in [`penalty`] and build on the
//! tape; the plain functions here evaluate the same graph and return
//! values.

use std::collections::BTreeMap;

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::graph::TreatmentId;
use crate::numerics::{Tape, Tensor, Var};

/// Centered Gram matrices with Frobenius norm below this are treated as
/// degenerate: a constant representation is trivially independent of
/// anything, so the normalized penalty returns 0.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Gaussian Gram matrix together with its bandwidth.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub matrix: Tensor,
    pub bandwidth: f64,
}

/// H = I − (1/n)·11ᵀ.
pub fn centering_matrix(n: usize) -> Tensor {
    let mut data = vec![-1.0 / n as f64; n * n];
    for i in 0..n {
        data[i * n + i] += 1.0;
    }
    Tensor::matrix(n, n, data).expect("square shape")
}

/// Median of pairwise Euclidean distances over distinct row pairs; falls
/// back to 1.0 when the median is (numerically) zero.
pub fn median_bandwidth(reps: &Tensor) -> f64 {
    let n = reps.rows();
    if n < 2 {
        return 1.0;
    }
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push(reps.row_sqdist(i, j).sqrt());
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = distances.len() / 2;
    let median = if distances.len() % 2 == 1 {
        distances[mid]
    } else {
        0.5 * (distances[mid - 1] + distances[mid])
    };
    if median < 1e-12 {
        1.0
    } else {
        median
    }
}

pub fn gaussian_kernel_matrix(reps: &Tensor, bandwidth: f64) -> Result<KernelMatrix> {
    if reps.rows() < 2 {
        return Err(Error::Contract("kernel matrix needs n >= 2 rows".into()));
    }
    let mut tape = Tape::new();
    let r = tape.constant(reps.clone())?;
    let k = penalty::gaussian_kernel(&mut tape, r, bandwidth)?;
    Ok(KernelMatrix {
        matrix: tape.value(k).clone(),
        bandwidth,
    })
}

/// Biased empirical HSIC of two same-size kernel matrices.
pub fn hsic(k_phi: &KernelMatrix, k_psi: &KernelMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(k_phi.matrix.clone())?;
    let b = tape.constant(k_psi.matrix.clone())?;
    let h = penalty::hsic(&mut tape, a, b)?;
    Ok(tape.value(h).item())
}

/// Normalized HSIC in [0, 1]; 0 by convention when either centered Gram
/// matrix is degenerate, 1 when the kernels coincide (and are not
/// degenerate).
pub fn nhsic(k_phi: &KernelMatrix, k_psi: &KernelMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(k_phi.matrix.clone())?;
    let b = tape.constant(k_psi.matrix.clone())?;
    let h = penalty::nhsic(&mut tape, a, b)?;
    Ok(tape.value(h).item())
}

/// Squared-MMD estimate between the pivot treatment group and the rest,
/// 0 by convention when either group is missing from the batch.
pub fn mmd_pivot(
    phi_reps: &Tensor,
    treatments: &[TreatmentId],
    pivot: TreatmentId,
    bandwidth: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let r = tape.constant(phi_reps.clone())?;
    let m = penalty::mmd_pivot(&mut tape, r, treatments, pivot, Some(bandwidth))?;
    Ok(tape.value(m).item())
}

/// Most frequent treatment in the observations; ties break toward the
/// smallest id.
pub fn most_frequent_treatment(observations: &[Observation]) -> Result<TreatmentId> {
    if observations.is_empty() {
        return Err(Error::Contract(
            "most_frequent_treatment on an empty observation set".into(),
        ));
    }
    let mut counts: BTreeMap<TreatmentId, usize> = BTreeMap::new();
    for o in observations {
        *counts.entry(o.treatment).or_insert(0) += 1;
    }
    let mut best = (TreatmentId(0), 0usize);
    for (&t, &c) in &counts {
        if c > best.1 {
            best = (t, c);
        }
    }
    Ok(best.0)
}

/// Differentiable penalty builders used inside training steps.
pub mod penalty {
    use super::*;

    /// K_ij = exp(−‖r_i − r_j‖² / (2 bandwidth²)).
    pub fn gaussian_kernel(tape: &mut Tape, reps: Var, bandwidth: f64) -> Result<Var> {
        if bandwidth <= 0.0 {
            return Err(Error::Config(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        let sq = tape.pairwise_sqdist(reps)?;
        let scaled = tape.scale(sq, -1.0 / (2.0 * bandwidth * bandwidth))?;
        tape.exp(scaled)
    }

    fn check_kernel_pair(tape: &Tape, k_phi: Var, k_psi: Var) -> Result<usize> {
        let (a, b) = (tape.value(k_phi), tape.value(k_psi));
        if a.rank() != 2 || a.rows() != a.cols() {
            return Err(Error::shape("hsic", format!("{:?}", a.shape())));
        }
        if a.shape() != b.shape() {
            return Err(Error::shape(
                "hsic",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        if a.rows() < 2 {
            return Err(Error::Contract("hsic needs n >= 2".into()));
        }
        Ok(a.rows())
    }

    /// (N−1)⁻² tr(KᶲHKᵠH).
    pub fn hsic(tape: &mut Tape, k_phi: Var, k_psi: Var) -> Result<Var> {
        let n = check_kernel_pair(tape, k_phi, k_psi)?;
        let h = tape.constant(centering_matrix(n))?;
        let kh = tape.matmul(k_phi, h)?;
        let khk = tape.matmul(kh, k_psi)?;
        let khkh = tape.matmul(khk, h)?;
        let tr = tape.trace(khkh)?;
        let scale = 1.0 / ((n - 1) as f64 * (n - 1) as f64);
        tape.scale(tr, scale)
    }

    /// tr(KᶲHKᵠH) / (‖HKᶲH‖·‖HKᵠH‖); 0 when either centered Gram matrix
    /// is degenerate.
    pub fn nhsic(tape: &mut Tape, k_phi: Var, k_psi: Var) -> Result<Var> {
        let n = check_kernel_pair(tape, k_phi, k_psi)?;
        let h = tape.constant(centering_matrix(n))?;
        let centered = |tape: &mut Tape, k: Var| -> Result<Var> {
            let kh = tape.matmul(k, h)?;
            tape.matmul(h, kh)
        };
        let a = centered(tape, k_phi)?;
        let b = centered(tape, k_psi)?;
        let norm_a = tape.frobenius_norm(a)?;
        let norm_b = tape.frobenius_norm(b)?;
        if tape.value(norm_a).item() < DEGENERATE_NORM
            || tape.value(norm_b).item() < DEGENERATE_NORM
        {
            return tape.scalar(0.0);
        }
        let ab = tape.matmul(a, b)?;
        let numerator = tape.trace(ab)?;
        let denominator = tape.mul(norm_a, norm_b)?;
        tape.div(numerator, denominator)
    }

    /// Normalized HSIC between φ and ψ batch representations, with
    /// median-heuristic bandwidths (recomputed per call, separately per
    /// space) unless fixed ones are supplied.
    pub fn nhsic_of_reps(
        tape: &mut Tape,
        phi_reps: Var,
        psi_reps: Var,
        bandwidths: Option<(f64, f64)>,
    ) -> Result<Var> {
        let (bw_phi, bw_psi) = match bandwidths {
            Some(pair) => pair,
            None => (
                median_bandwidth(tape.value(phi_reps)),
                median_bandwidth(tape.value(psi_reps)),
            ),
        };
        let k_phi = gaussian_kernel(tape, phi_reps, bw_phi)?;
        let k_psi = gaussian_kernel(tape, psi_reps, bw_psi)?;
        nhsic(tape, k_phi, k_psi)
    }

    /// Raw HSIC between batch representations (same bandwidth policy).
    pub fn hsic_of_reps(
        tape: &mut Tape,
        phi_reps: Var,
        psi_reps: Var,
        bandwidths: Option<(f64, f64)>,
    ) -> Result<Var> {
        let (bw_phi, bw_psi) = match bandwidths {
            Some(pair) => pair,
            None => (
                median_bandwidth(tape.value(phi_reps)),
                median_bandwidth(tape.value(psi_reps)),
            ),
        };
        let k_phi = gaussian_kernel(tape, phi_reps, bw_phi)?;
        let k_psi = gaussian_kernel(tape, psi_reps, bw_psi)?;
        hsic(tape, k_phi, k_psi)
    }

    /// mean(K_cc) + mean(K_tt) − 2 mean(K_ct) between the pivot group and
    /// the rest of the batch; 0 when the batch lacks either group.
    pub fn mmd_pivot(
        tape: &mut Tape,
        phi_reps: Var,
        treatments: &[TreatmentId],
        pivot: TreatmentId,
        bandwidth: Option<f64>,
    ) -> Result<Var> {
        let n = tape.value(phi_reps).rows();
        if treatments.len() != n {
            return Err(Error::shape(
                "mmd_pivot",
                format!("{} rep rows vs {} treatment ids", n, treatments.len()),
            ));
        }
        let control: Vec<usize> = (0..n).filter(|&i| treatments[i] == pivot).collect();
        let treated: Vec<usize> = (0..n).filter(|&i| treatments[i] != pivot).collect();
        if control.is_empty() || treated.is_empty() {
            return tape.scalar(0.0);
        }
        let bw = bandwidth.unwrap_or_else(|| median_bandwidth(tape.value(phi_reps)));
        let kernel = gaussian_kernel(tape, phi_reps, bw)?;

        let selection = |rows: &[usize]| -> Tensor {
            let mut data = vec![0.0; rows.len() * n];
            for (r, &i) in rows.iter().enumerate() {
                data[r * n + i] = 1.0;
            }
            Tensor::matrix(rows.len(), n, data).expect("selection shape")
        };
        let s_c = tape.constant(selection(&control))?;
        let s_t = tape.constant(selection(&treated))?;
        let s_c_t = tape.transpose(s_c)?;
        let s_t_t = tape.transpose(s_t)?;

        let ck = tape.matmul(s_c, kernel)?;
        let tk = tape.matmul(s_t, kernel)?;
        let k_cc = tape.matmul(ck, s_c_t)?;
        let k_tt = tape.matmul(tk, s_t_t)?;
        let k_ct = tape.matmul(ck, s_t_t)?;

        let m_cc = tape.mean(k_cc)?;
        let m_tt = tape.mean(k_tt)?;
        let m_ct = tape.mean(k_ct)?;
        let within = tape.add(m_cc, m_tt)?;
        let cross = tape.scale(m_ct, -2.0)?;
        tape.add(within, cross)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel_of(matrix: Tensor) -> KernelMatrix {
        KernelMatrix {
            matrix,
            bandwidth: 1.0,
        }
    }

    fn two_by_two(a: f64) -> KernelMatrix {
        kernel_of(Tensor::matrix(2, 2, vec![1.0, a, a, 1.0]).unwrap())
    }

    #[test]
    fn identical_rows_give_all_ones_kernel() {
        let reps = Tensor::matrix(3, 2, vec![0.5, -1.0, 0.5, -1.0, 0.5, -1.0]).unwrap();
        let k = gaussian_kernel_matrix(&reps, 2.0).unwrap();
        assert!(k.matrix.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn distance_equal_to_bandwidth() {
        let reps = Tensor::matrix(2, 1, vec![0.0, 3.0]).unwrap();
        let k = gaussian_kernel_matrix(&reps, 3.0).unwrap();
        assert!((k.matrix.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(k.matrix.get(0, 0), 1.0);
    }

    #[test]
    fn kernel_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
        let reps = Tensor::matrix(5, 3, data).unwrap();
        let bw = 1.3;
        let k = gaussian_kernel_matrix(&reps, bw).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut d2 = 0.0;
                for c in 0..3 {
                    let diff = reps.get(i, c) - reps.get(j, c);
                    d2 += diff * diff;
                }
                let expected = (-d2 / (2.0 * bw * bw)).exp();
                assert!((k.matrix.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centering_matrix_annihilates_ones_and_is_idempotent() {
        let h = centering_matrix(5);
        // H * 1 = 0
        for i in 0..5 {
            let row_sum: f64 = h.row(i).iter().sum();
            assert!(row_sum.abs() < 1e-12);
        }
        // H^2 = H
        let h2 = crate::numerics::tape::matmul_values(&h, &h);
        for (a, b) in h2.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn median_bandwidth_cases() {
        let two = Tensor::matrix(2, 1, vec![0.0, 3.0]).unwrap();
        assert_eq!(median_bandwidth(&two), 3.0);

        let same = Tensor::matrix(4, 2, vec![1.0; 8]).unwrap();
        assert_eq!(median_bandwidth(&same), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cloud = Tensor::matrix(8, 2, data).unwrap();
        // sort-based oracle; 8 points give 28 pairs, so the median is the
        // average of the 14th and 15th distances
        let mut dists = Vec::new();
        for i in 0..8 {
            for j in (i + 1)..8 {
                dists.push(cloud.row_sqdist(i, j).sqrt());
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(dists.len(), 28);
        let expected = 0.5 * (dists[13] + dists[14]);
        assert!((median_bandwidth(&cloud) - expected).abs() < 1e-15);
    }

    #[test]
    fn hsic_two_by_two_closed_form() {
        // H = [[.5,-.5],[-.5,.5]] gives tr(KHKH) = (1-a)^2 and (N-1)^-2 = 1
        for a in [0.0, 0.5, 0.9] {
            let k = two_by_two(a);
            let got = hsic(&k, &k).unwrap();
            assert!(
                (got - (1.0 - a) * (1.0 - a)).abs() < 1e-12,
                "a={a}, got {got}"
            );
        }
    }

    #[test]
    fn constant_representation_has_zero_hsic() {
        let ones = kernel_of(Tensor::matrix(3, 3, vec![1.0; 9]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let other = gaussian_kernel_matrix(&Tensor::matrix(3, 2, data).unwrap(), 1.0).unwrap();
        let got = hsic(&ones, &other).unwrap();
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn nhsic_of_matching_kernels_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = gaussian_kernel_matrix(&Tensor::matrix(6, 2, data).unwrap(), 0.8).unwrap();
        let got = nhsic(&k, &k).unwrap();
        assert!((got - 1.0).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn nhsic_degenerate_returns_zero() {
        let ones = kernel_of(Tensor::matrix(3, 3, vec![1.0; 9]).unwrap());
        assert_eq!(nhsic(&ones, &ones).unwrap(), 0.0);
    }

    #[test]
    fn nhsic_matches_ratio_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d1: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d2: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k1 = gaussian_kernel_matrix(&Tensor::matrix(5, 2, d1).unwrap(), 0.9).unwrap();
        let k2 = gaussian_kernel_matrix(&Tensor::matrix(5, 2, d2).unwrap(), 1.1).unwrap();

        // independent oracle: explicit loops over H K1 H and H K2 H
        let n = 5;
        let center = |k: &Tensor| -> Vec<f64> {
            let mut out = vec![0.0; n * n];
            let h = centering_matrix(n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            acc += h.get(i, p) * k.get(p, q) * h.get(q, j);
                        }
                    }
                    out[i * n + j] = acc;
                }
            }
            out
        };
        let a = center(&k1.matrix);
        let b = center(&k2.matrix);
        let num: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * b[j * n + i])
            .sum();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = num / (na * nb);

        let got = nhsic(&k1, &k2).unwrap();
        assert!((got - expected).abs() < 1e-10, "got {got} vs {expected}");
    }

    #[test]
    fn hsic_invariant_under_joint_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let d1: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d2: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r1 = Tensor::matrix(6, 2, d1).unwrap();
        let r2 = Tensor::matrix(6, 2, d2).unwrap();
        let k1 = gaussian_kernel_matrix(&r1, 1.0).unwrap();
        let k2 = gaussian_kernel_matrix(&r2, 1.0).unwrap();
        let base = hsic(&k1, &k2).unwrap();

        let perm = [3usize, 0, 4, 1, 5, 2];
        let permute_rows = |t: &Tensor| {
            let mut data = Vec::with_capacity(t.numel());
            for &p in &perm {
                data.extend_from_slice(t.row(p));
            }
            Tensor::matrix(6, 2, data).unwrap()
        };
        let k1p = gaussian_kernel_matrix(&permute_rows(&r1), 1.0).unwrap();
        let k2p = gaussian_kernel_matrix(&permute_rows(&r2), 1.0).unwrap();
        let permuted = hsic(&k1p, &k2p).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn mmd_zero_for_identical_point_masses() {
        let reps = Tensor::matrix(4, 2, vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7]).unwrap();
        let ids = [1, 1, 2, 3].map(TreatmentId);
        let got = mmd_pivot(&reps, &ids, TreatmentId(1), 1.0).unwrap();
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn mmd_saturates_at_two_for_far_groups() {
        let reps = Tensor::matrix(4, 1, vec![0.0, 0.0, 1e6, 1e6]).unwrap();
        let ids = [1, 1, 2, 2].map(TreatmentId);
        let got = mmd_pivot(&reps, &ids, TreatmentId(1), 1.0).unwrap();
        assert!((got - 2.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn mmd_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reps = Tensor::matrix(6, 2, data).unwrap();
        let ids = [1, 2, 1, 3, 2, 1].map(TreatmentId);
        let pivot = TreatmentId(1);
        let bw = 0.7;
        let got = mmd_pivot(&reps, &ids, pivot, bw).unwrap();

        let kernel = |i: usize, j: usize| (-reps.row_sqdist(i, j) / (2.0 * bw * bw)).exp();
        let control = [0usize, 2, 5];
        let treated = [1usize, 3, 4];
        let mean_over = |rows: &[usize], cols: &[usize]| -> f64 {
            let mut acc = 0.0;
            for &i in rows {
                for &j in cols {
                    acc += kernel(i, j);
                }
            }
            acc / (rows.len() * cols.len()) as f64
        };
        let expected =
            mean_over(&control, &control) + mean_over(&treated, &treated)
                - 2.0 * mean_over(&control, &treated);
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn mmd_missing_group_is_zero() {
        let reps = Tensor::matrix(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let ids = [2, 2, 2].map(TreatmentId);
        assert_eq!(mmd_pivot(&reps, &ids, TreatmentId(1), 1.0).unwrap(), 0.0);
        let ids = [1, 1, 1].map(TreatmentId);
        assert_eq!(mmd_pivot(&reps, &ids, TreatmentId(1), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn most_frequent_breaks_ties_toward_smaller_id() {
        let obs = |t: usize| Observation {
            unit_index: 0,
            covariates: vec![0.0],
            treatment: TreatmentId(t),
            outcome: 0.0,
        };
        let mut set: Vec<Observation> = Vec::new();
        set.extend((0..5).map(|_| obs(1)));
        set.extend((0..3).map(|_| obs(2)));
        assert_eq!(most_frequent_treatment(&set).unwrap(), TreatmentId(1));

        let tied: Vec<Observation> = (0..3).map(|_| obs(2)).chain((0..3).map(|_| obs(1))).collect();
        assert_eq!(most_frequent_treatment(&tied).unwrap(), TreatmentId(1));

        assert!(most_frequent_treatment(&[]).is_err());
    }

    #[test]
    fn hsic_gradient_matches_finite_differences() {
        use crate::numerics::gradcheck::check_gradients;
        use crate::numerics::ParamStore;

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        store.register_uniform("phi", &[5, 3], 1.0, &mut rng).unwrap();
        store.register_uniform("psi", &[5, 2], 1.0, &mut rng).unwrap();
        let err = check_gradients(
            &mut store,
            |s, tape| {
                let phi = tape.param(s, s.lookup("phi").unwrap())?;
                let psi = tape.param(s, s.lookup("psi").unwrap())?;
                // fixed bandwidths so the finite-difference path sees the
                // same function
                penalty::hsic_of_reps(tape, phi, psi, Some((0.9, 1.2)))
            },
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
