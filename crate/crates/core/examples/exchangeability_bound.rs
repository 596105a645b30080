// Distance to exchangeability of (X, X̃) on an enumerable toy model,
// against the bound ε(π₀) + Δ(π₀)/(2√B) minimized over a ladder of π₀.

use acssb::diagnostics::{delta_pi0, epsilon_pi0, theorem1_check, DiscreteModel};

pub fn run_example() -> acssb::Result<()> {
    let model = DiscreteModel::toy();
    println!("ε(π) = {:.4}, Δ(π) with π₀ = π: {:.4}", epsilon_pi0(&model, 0, &model.prior)?, delta_pi0(&model, 0, &model.prior, &model.prior)?);
    for row in theorem1_check(&model, 0, &[1, 4, 16, 64], 100)? {
        println!("B={:<3} d_exch {:.5} <= {:.5} (π₀ weight on π: {:.2})", row.b, row.d_exch, row.bound, row.w);
    }
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
