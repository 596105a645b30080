// The five test statistics applied directly to simulated data.

use acssb::harness::{LogisticExperiment, MixtureExperiment, Rank1Experiment, SplineExperiment};
use acssb::models::group_sparse::contiguous_groups;
use acssb::numerics::dist::std_normal;
use acssb::rng::seeded;
use acssb::statistics::{
    cv_group_lasso, group_ratio, stat_kmeans_ratio, stat_second_eigenvalue, stat_sir, stat_spline_rss,
};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> acssb::Result<()> {
    let mut rng = seeded(15);
    let lg = LogisticExperiment::generate(100, 1.0, &mut rng);
    println!("SIR score: {:.4}", stat_sir(&lg.x, &lg.y, &lg.z)?);

    for p in [0.0, 0.5] {
        let mx = MixtureExperiment::generate(200, p, &mut rng)?;
        println!("k-means WCSS2/WCSS3 at p={p}: {:.2}", stat_kmeans_ratio(&mx.x)?);
    }

    let r1 = Rank1Experiment::generate(10, 1.0, &mut rng);
    println!("second singular value: {:.3}", stat_second_eigenvalue(&r1.x));

    let z = DMatrix::from_fn(100, 20, |_, _| std_normal(&mut rng));
    let groups = contiguous_groups(20, 5);
    let mut beta = DVector::zeros(20);
    for j in 0..5 {
        beta[j] = 1.0;
        beta[10 + j] = 0.5;
    }
    let x = &z * &beta + DVector::from_fn(100, |_, _| std_normal(&mut rng));
    let (fit, lambda) = cv_group_lasso(&x, &z, &groups)?;
    let norms: Vec<String> = groups.iter().map(|g| format!("{:.2}", g.iter().map(|&j| fit[j] * fit[j]).sum::<f64>().sqrt())).collect();
    println!("group lasso λ̂ = {lambda:.3}, group norms [{}], ratio {:.3}", norms.join(", "), group_ratio(&fit, &groups));

    let sp = SplineExperiment::generate(50, 1.8, &mut rng);
    println!("one-knot RSS: {:.3}", stat_spline_rss(sp.x.as_slice(), &sp.z)?);
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
