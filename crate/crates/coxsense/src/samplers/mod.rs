//! Posterior sampling over the constrained log-concave density
//! `exp(-U(theta))` on `{Gamma' theta >= l}`, plus simulation of
//! inhomogeneous Poisson point processes.
//!
//! The default chain is MYULA, proximal Langevin with the polytope
//! projection as its proximal step. A mirrored Langevin chain over a box in
//! the transformed coordinates `Gamma' theta` is available as an alternate
//! backend behind the same [`PosteriorDraw`] interface.

mod mirror;
mod myula;
mod point_process;
mod prox;

pub use mirror::{mirrored_sample, MirrorConfig, MirroredSampler};
pub use myula::{myula_sample, MyulaConfig, MyulaSampler, StepSize};
pub use point_process::{simulate_point_process, PointProcessDraw};
pub use prox::{prox_project, PolytopeProjector};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::posterior::PosteriorModel;

/// A source of (approximate) posterior draws.
pub trait PosteriorDraw {
    /// Next posterior sample, feasible for downstream use.
    fn draw(&mut self) -> Result<DVector<f64>>;
}

/// Backend selection for protocol configs; MYULA is the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum SamplerConfig {
    Myula(MyulaConfig),
    Mirrored(MirrorConfig),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::Myula(MyulaConfig::default())
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            SamplerConfig::Myula(cfg) => cfg.seed = seed,
            SamplerConfig::Mirrored(cfg) => cfg.seed = seed,
        }
        self
    }
}

/// Either chain behind the common draw interface.
pub enum SamplerBackend<'a> {
    Myula(MyulaSampler<'a>),
    Mirrored(MirroredSampler<'a>),
}

impl<'a> SamplerBackend<'a> {
    pub fn new(model: &'a PosteriorModel, config: &SamplerConfig) -> Result<Self> {
        Ok(match config {
            SamplerConfig::Myula(cfg) => SamplerBackend::Myula(MyulaSampler::new(model, cfg)?),
            SamplerConfig::Mirrored(cfg) => {
                SamplerBackend::Mirrored(MirroredSampler::new(model, cfg)?)
            }
        })
    }
}

impl PosteriorDraw for SamplerBackend<'_> {
    fn draw(&mut self) -> Result<DVector<f64>> {
        match self {
            SamplerBackend::Myula(s) => s.draw(),
            SamplerBackend::Mirrored(s) => s.draw(),
        }
    }
}
