//! Numerical toolkit for polyconvex functions on 2×2 matrices: two-sided
//! certified bounds on the largest convex representative in minors space,
//! the touching-hyperplane function, and experiments around the tube
//! construction for `W(ξ) = |([ξ], det ξ − y)|`.

pub mod cli;
pub mod envelope;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lp;
pub mod objective;
pub mod search;
pub mod subgradient;
pub mod touching;

pub use error::{Error, Result};
pub use linalg::{bracket, cof2, det2, inner5, inner_mat, lift, outer, Mat2, MinorsPoint};
pub use objective::{eval_w, grad_w, prop21_residual, rho_of, Objective, ObjectiveSpec};
pub use search::SearchBudget;
pub use touching::AffineFunctional5;
