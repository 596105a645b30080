//! Model plug-ins for the five null families.

pub mod logistic;
pub mod group_sparse;
pub mod mixture;
pub mod rank1;
pub mod spline;
