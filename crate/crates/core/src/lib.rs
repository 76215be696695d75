//! Cross-impact estimation grounded in the multivariate Kyle model.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: symmetric matrices, SPD square roots and paired factorizations.
//! - [`equilibrium`]: the unique linear equilibrium `Λ`, closed forms and utilities.
//! - [`monte_carlo`]: a seeded simulator of the economy and its empirical moments.
//! - [`estimators`]: the MLE, EigenLiquidity and Kyle cross-impact estimators.
//! - [`diagnostics`]: loss, asymmetry, positive-definiteness and commutator observables.
//! - [`synthetic`]: liquidity and correlation fabrications of 2-asset blocks and sweeps.
//! - [`io`]: CSV formats for binned series, moments and matrices.
//!
//! A narrative guide with runnable examples lives in the `book/` directory.

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod equilibrium;
pub mod monte_carlo;
pub mod estimators;
pub mod diagnostics;
pub mod synthetic;
pub mod io;

mod parallel;

pub use error::{Error, Result};
pub use linalg::{FactorKind, Factorization, SymMatrix};
pub use parallel::THREADS_ENV;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/equilibrium.md")]
    mod equilibrium {}
    #[doc = include_str!("../../../book/src/whitening.md")]
    mod whitening {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
