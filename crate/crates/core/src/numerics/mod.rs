//! Numerical substrate shared by the model plug-ins.

pub mod cluster;
pub mod dist;
pub mod laplace;
pub mod linalg;
pub mod optim;
pub mod quad;
pub mod special;

pub use laplace::laplace_log_integral;
pub use optim::{maximize, maximize_1d, maximize_with_gradient, newton_maximize, Mode1D, OptimOptions, OptimResult};
pub use quad::{trapezoid_log_integral, Grid1D};
