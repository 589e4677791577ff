//! HSIC, normalized HSIC, and pivot-group MMD on dependent versus
//! independent samples.

use graphite::graph::TreatmentId;
use graphite::independence::{
    gaussian_kernel_matrix, hsic, median_bandwidth, mmd_pivot, most_frequent_treatment, nhsic,
};
use graphite::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

fn main() -> graphite::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let n = 256;

    // x ~ N(0, I_3); dependent y = rotate(x) + noise; independent z ~ N(0, I_3)
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let c: f64 = StandardNormal.sample(&mut rng);
        x.extend([a, b, c]);
        let e: f64 = StandardNormal.sample(&mut rng);
        y.extend([0.8 * b + 0.2 * e, -0.7 * a, 0.5 * c + 0.5 * e]);
        z.extend([
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]);
    }
    let x = Tensor::matrix(n, 3, x)?;
    let y = Tensor::matrix(n, 3, y)?;
    let z = Tensor::matrix(n, 3, z)?;

    let kx = gaussian_kernel_matrix(&x, median_bandwidth(&x))?;
    let ky = gaussian_kernel_matrix(&y, median_bandwidth(&y))?;
    let kz = gaussian_kernel_matrix(&z, median_bandwidth(&z))?;

    println!("dependent pair:   HSIC = {:.5}  nHSIC = {:.4}", hsic(&kx, &ky)?, nhsic(&kx, &ky)?);
    println!("independent pair: HSIC = {:.5}  nHSIC = {:.4}", hsic(&kx, &kz)?, nhsic(&kx, &kz)?);
    println!("self pair:        nHSIC = {:.6} (Cauchy-Schwarz equality)", nhsic(&kx, &kx)?);

    // MMD between a pivot treatment group and the rest: shift group 1
    let ids: Vec<TreatmentId> = (0..n).map(|i| TreatmentId(1 + i % 3)).collect();
    let mut shifted = x.clone();
    for (i, &t) in ids.iter().enumerate() {
        if t == TreatmentId(1) {
            for v in &mut shifted.data_mut()[i * 3..(i + 1) * 3] {
                *v += 1.5;
            }
        }
    }
    let bw = median_bandwidth(&shifted);
    println!(
        "MMD² pivot-vs-rest, shifted pivot:   {:.4}",
        mmd_pivot(&shifted, &ids, TreatmentId(1), bw)?
    );
    println!(
        "MMD² pivot-vs-rest, unshifted:       {:.4}",
        mmd_pivot(&x, &ids, TreatmentId(1), median_bandwidth(&x))?
    );

    // the pivot is the most frequent treatment in the logged data
    let observations: Vec<graphite::data::Observation> = ids
        .iter()
        .enumerate()
        .map(|(i, &t)| graphite::data::Observation {
            unit_index: i,
            covariates: vec![0.0],
            treatment: t,
            outcome: 0.0,
        })
        .collect();
    println!("pivot = treatment {}", most_frequent_treatment(&observations)?);
    Ok(())
}
