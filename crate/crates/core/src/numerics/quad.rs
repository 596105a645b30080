use super::special::log_sum_exp;
use crate::error::{Error, Result};

/// Log-integrand values on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct Grid1D {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid1D {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidParameter("grid nodes and values differ in length".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("grid nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, values })
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(nodes: Vec<f64>, mut f: F) -> Result<Self> {
        let values = nodes.iter().map(|&t| f(t)).collect();
        Self::new(nodes, values)
    }
}

/// log of the trapezoid rule applied to exp(values), by log-sum-exp over
/// segments.
pub fn trapezoid_log_integral(grid: &Grid1D) -> Result<f64> {
    if grid.nodes.len() < 2 {
        return Err(Error::InvalidParameter("trapezoid rule needs at least 2 nodes".into()));
    }
    let terms: Vec<f64> = grid
        .nodes
        .windows(2)
        .zip(grid.values.windows(2))
        .map(|(x, v)| {
            let m = v[0].max(v[1]);
            let pair = if m == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                m + ((v[0] - m).exp() + (v[1] - m).exp()).ln()
            };
            pair + (0.5 * (x[1] - x[0])).ln()
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Log weights ω_j such that Σ_j ω_j e^{v_j} reproduces the trapezoid rule.
pub fn trapezoid_log_weights(nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() < 2 {
        return Err(Error::InvalidParameter("trapezoid rule needs at least 2 nodes".into()));
    }
    let n = nodes.len();
    Ok((0..n)
        .map(|j| {
            let left = if j > 0 { nodes[j] - nodes[j - 1] } else { 0.0 };
            let right = if j + 1 < n { nodes[j + 1] - nodes[j] } else { 0.0 };
            (0.5 * (left + right)).ln()
        })
        .collect())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::normal_logpdf_std;

    #[test]
    fn constant_integrand() {
        let nodes = vec![0.0, 0.1, 0.5, 0.9, 1.0];
        let g = Grid1D::new(nodes, vec![0.0; 5]).unwrap();
        assert!(trapezoid_log_integral(&g).unwrap().abs() < 1e-14);
    }

    #[test]
    fn normal_mass() {
        let g = Grid1D::from_fn(linspace(-10.0, 10.0, 2000), normal_logpdf_std).unwrap();
        assert!(trapezoid_log_integral(&g).unwrap().abs() < 1e-6);
    }

    #[test]
    fn single_trapezoid() {
        let g = Grid1D::new(vec![0.0, 2.0], vec![0.0, 3.0_f64.ln()]).unwrap();
        assert!((trapezoid_log_integral(&g).unwrap() - 4.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn weights_match_rule_and_reject_bad_grids() {
        let nodes = vec![-1.0, 0.0, 0.3, 2.0];
        let vals = vec![0.2, -1.0, 0.7, -3.0];
        let w = trapezoid_log_weights(&nodes).unwrap();
        let by_weights: Vec<f64> = w.iter().zip(&vals).map(|(a, b)| a + b).collect();
        let direct = trapezoid_log_integral(&Grid1D::new(nodes, vals).unwrap()).unwrap();
        assert!((log_sum_exp(&by_weights) - direct).abs() < 1e-13);
        assert!(trapezoid_log_integral(&Grid1D::new(vec![0.0], vec![0.0]).unwrap()).is_err());
        assert!(Grid1D::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
    }
}
