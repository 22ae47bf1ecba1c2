//! Robust blind deconvolution of graph signals under imperfect topology
//! knowledge.
//!
//! Given output signals observed on a graph and a perturbed reading of the
//! graph itself, the solvers in this crate jointly estimate the sparse
//! diffusion sources, the inverse of the diffusion filter, and a denoised
//! shift operator by alternating convex minimization in the vertex domain.
//! The dependence of the inverse filter on the graph enters as a
//! commutativity penalty, which sidesteps the spectral instability that
//! graph perturbations cause.
//!
//! Modules:
//! - [`graph`]: small-world graph sampling, shift operators, polynomial
//!   filters and their inverses, edge-rewiring perturbations;
//! - [`diffusion`]: sparse source generation and diffusion through a filter;
//! - [`prox`]: the proximal and constrained-quadratic kernels the solvers
//!   compose;
//! - [`solver`]: the alternating solvers and the baseline;
//! - [`experiments`]: Monte-Carlo sweeps, metrics, grid search, CSV output;
//! - [`config`]: the flat key-value config format used by the CLI and the
//!   grid-search harness.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod prox;
pub mod seed;
pub mod solver;

pub use error::{RbdgError, Result};
