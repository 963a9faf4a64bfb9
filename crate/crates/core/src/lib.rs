//! Mechanical Hamiltonian systems on duals of vector bundles with linear
//! Poisson structures.
//!
//! A linear Poisson structure on `A*` is given locally by anchor
//! coefficients `ρ^i_α(q)` and structure functions `C^γ_{αβ}(q)`. On top of it
//! this crate builds kinetic and mechanical Hamiltonians, their flows, the
//! Jacobi structure `(Λ, E)` attached to a bundle metric, its restriction to
//! energy levels, and the time change relating mechanical trajectories to
//! geodesics of the Jacobi metric `2(e − V) g`.
//!
//! ```
//! use lpmech::models::so3_rigid_body;
//! use lpmech::jacobi_reeb::jacobi_pair;
//! use lpmech::algebroid::PhasePoint;
//!
//! let body = so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
//! let (_, e) = jacobi_pair(&body.model, &body.metric, &PhasePoint::new(vec![], vec![0.0, 1.0, 1.0])).unwrap();
//! assert!((e[0] - 1.0 / 6.0).abs() < 1e-15);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebroid;
pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod jacobi_reeb;
pub mod models;
pub mod verify;

pub use error::{Error, Result};
