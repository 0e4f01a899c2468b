//! Solvers and analysis tools for the generalized multidimensional knapsack
//! problem: pick integer counts `x_i ≤ x_i^max` maximizing `Σ v_i x_i` under
//! `K` linear weight constraints.
//!
//! - [`instance`]: data model, random ensemble, evaluation and file format.
//! - [`oracle`]: exhaustive optimum and exact marginals for small instances.
//! - [`cavity`]: BP and GAMP estimates of the marginals of the uniform
//!   measure over feasible assignments.
//! - [`mpgs`]: greedy construction driven by those marginals, plus a
//!   profit-density baseline.
//! - [`replica`]: replica-symmetric entropy `S(M)` and the typical profit
//!   limit `M_opt`.
//! - [`bench`]: seeded ensemble experiments with CSV and SVG output.
//! - [`cli`]: the `gmdkp` command line.

pub mod bench;
pub mod cavity;
pub mod cli;
pub mod error;
pub mod instance;
pub mod mpgs;
pub mod oracle;
pub mod replica;

pub use error::{Error, Result};
