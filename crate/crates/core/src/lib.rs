//! Local search for optimal decentralized (structured static output feedback)
//! LQR control on feasible sets with many connected components.
//!
//! The crate provides the cost `J(K) = trace(P(K) D0)` with its gradient and
//! Hessian actions, projection-based and augmented Lagrangian solvers with
//! Armijo backtracking, and a grid atlas of the connected components of the
//! structured stabilizing set used to detect jumps between components.

pub mod atlas;
pub mod derivatives;
pub mod error;
pub mod io;
pub mod lyapunov;
pub mod model;
pub mod problem;
pub mod search;

pub use error::{OdcError, Result};
pub use model::Matrix;
pub use problem::OdcProblem;
