//! Adaptive sensing of Cox (doubly stochastic Poisson) processes.
//!
//! The intensity function is modeled as a truncated Gaussian process,
//! approximated in a positive basis `lambda(x) = theta' Phi(x)` with
//! `Phi = Gamma phi` chosen so the prior covariance matches the kernel at
//! the basis nodes. Inference reduces to convex optimization (constrained
//! MAP), and posterior sampling to proximal Langevin dynamics over the
//! log-concave density `exp(-U(theta))` on the polytope `Gamma' theta >= l`.
//!
//! Crate layout:
//! - [`kernels`]: covariance functions, Gram matrices, PSD square roots
//! - [`basis`]: hat / Bernstein / NMF-optimal positive bases, the
//!   covariance-matching transform, region integrals
//! - [`posterior`]: observation log, energy and derivatives, MAP, Laplace
//!   precision, upper/lower credible bounds
//! - [`samplers`]: polytope projection, MYULA and mirrored Langevin chains,
//!   inhomogeneous Poisson process simulation
//! - [`sensing`]: hierarchical action sets, cost models, acquisition rules,
//!   the sense-update-act protocol
//! - [`harness`]: ground truths, regret / level-set metrics, multi-seed suites
//! - [`config`] and [`cli`]: experiment configuration and command entry points

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod posterior;
pub mod quad;
pub mod rng;
pub mod samplers;
pub mod sensing;

pub use error::{Error, Result};
