// Laplace approximation of a log integral, compared with the trapezoid rule.

use acssb::numerics::quad::linspace;
use acssb::numerics::{laplace_log_integral, maximize_1d, trapezoid_log_integral, Grid1D};
use nalgebra::DMatrix;

pub fn run_example() -> acssb::Result<()> {
    // ∫ exp(k·log t − t) dt over t > 0 is Γ(k+1); Laplace improves with k
    for k in [2.0, 10.0, 50.0] {
        let psi = |t: f64| if t > 0.0 { k * t.ln() - t } else { f64::NEG_INFINITY };
        let mode = maximize_1d(psi, k, 1.0, 10.0 * k)?;
        let h = DMatrix::from_element(1, 1, -mode.curvature);
        let lap = laplace_log_integral(mode.value, &h, 1)?;
        let nodes = linspace(1e-9, 10.0 * k + 50.0, 200_001);
        let values = nodes.iter().map(|&t| psi(t)).collect();
        let quad = trapezoid_log_integral(&Grid1D::new(nodes, values)?)?;
        println!("k={k}: Laplace {lap:.5}, trapezoid {quad:.5}, ln Γ(k+1) {:.5}", statrs::function::gamma::ln_gamma(k + 1.0));
    }
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
