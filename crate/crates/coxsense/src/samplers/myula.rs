//! Moreau-Yosida unadjusted Langevin (MYULA) over the polytope.
//!
//! Update rule:
//!
//! ```text
//! theta_{k+1} = (1 - eta) theta_k - eta grad U(theta_k)
//!             + eta pr(theta_k) + sqrt(2 eta) w_k
//! ```
//!
//! with `pr` the Euclidean projection onto `{Gamma' theta >= l}` and
//! `eta = 1/(L+1)`, `L` the largest Hessian eigenvalue at the MAP (power
//! iteration). The chain starts at the MAP. Iterates may leave the polytope;
//! returned samples are projected back before downstream use, and the
//! Moreau-envelope smoothing parameter is tied to the step size.

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;
use crate::rng::stream;

use super::prox::PolytopeProjector;
use super::PosteriorDraw;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    /// `eta = 1/(L+1)` with `L` estimated by power iteration at the MAP.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MyulaConfig {
    pub steps: usize,
    /// Fraction of each chain discarded as burn-in.
    pub burn_in: f64,
    pub step_size: StepSize,
    /// Power-iteration count for the Lipschitz estimate.
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for MyulaConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            burn_in: 0.5,
            step_size: StepSize::Auto,
            power_iterations: 50,
            seed: 0,
        }
    }
}

impl MyulaConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Parameter("steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Parameter(format!(
                "burn-in fraction must lie in [0, 1), got {}",
                self.burn_in
            )));
        }
        if let StepSize::Fixed(eta) = self.step_size {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Parameter(format!(
                    "step size must lie in (0, 1], got {eta}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest Hessian eigenvalue at `theta` by power iteration.
pub fn lipschitz_estimate(model: &PosteriorModel, theta: &DVector<f64>, iterations: usize) -> f64 {
    let hess = model.energy_hess(theta);
    let m = model.m();
    let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let mut lambda = 1.0;
    for _ in 0..iterations.max(1) {
        let hv = &hess * &v;
        let norm = hv.norm();
        if norm <= 0.0 {
            return 1.0;
        }
        v = hv / norm;
        lambda = (&hess * &v).dot(&v);
    }
    lambda
}

/// A MYULA chain with persistent state; draws resume where the chain left
/// off, so the first draw pays the burn-in and later draws run the
/// post-burn-in segment length.
pub struct MyulaSampler<'a> {
    model: &'a PosteriorModel,
    state: DVector<f64>,
    eta: f64,
    steps: usize,
    burn: usize,
    projector: PolytopeProjector,
    rng: ChaCha12Rng,
    step_index: usize,
    drawn_once: bool,
}

impl<'a> MyulaSampler<'a> {
    /// Requires a refreshed posterior (the chain starts at the MAP).
    pub fn new(model: &'a PosteriorModel, config: &MyulaConfig) -> Result<Self> {
        config.validate()?;
        let map = model
            .cached_map()
            .ok_or_else(|| Error::Parameter("MYULA needs a refreshed posterior (MAP)".into()))?
            .clone();
        let eta = match config.step_size {
            StepSize::Fixed(eta) => eta,
            StepSize::Auto => {
                let lipschitz = lipschitz_estimate(model, &map, config.power_iterations);
                1.0 / (lipschitz + 1.0)
            }
        };
        let burn = ((config.steps as f64) * config.burn_in).floor() as usize;
        Ok(Self {
            model,
            state: map,
            eta,
            steps: config.steps,
            burn,
            projector: PolytopeProjector::new(model.basis().gamma().clone(), model.lower_bound()),
            rng: stream(config.seed, "myula", 0),
            step_index: 0,
            drawn_once: false,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn advance(&mut self) -> Result<()> {
        let eta = self.eta;
        let grad = self.model.energy_grad(&self.state);
        let projected = self.projector.project(&self.state)?;
        let mut next = &self.state * (1.0 - eta);
        next.axpy(-eta, &grad, 1.0);
        next.axpy(eta, &projected, 1.0);
        let noise_scale = (2.0 * eta).sqrt();
        for v in next.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *v += noise_scale * w;
        }
        self.step_index += 1;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step_index,
                message: "MYULA iterate is not finite".into(),
            });
        }
        self.state = next;
        Ok(())
    }

    /// Runs `steps` iterations and returns the post-burn-in iterates,
    /// each projected onto the polytope.
    pub fn run_chain(&mut self) -> Result<Vec<DVector<f64>>> {
        let mut kept = Vec::with_capacity(self.steps - self.burn);
        for k in 0..self.steps {
            self.advance()?;
            if k >= self.burn {
                kept.push(self.projector.project(&self.state)?);
            }
        }
        self.drawn_once = true;
        Ok(kept)
    }
}

impl PosteriorDraw for MyulaSampler<'_> {
    fn draw(&mut self) -> Result<DVector<f64>> {
        let n = if self.drawn_once {
            (self.steps - self.burn).max(1)
        } else {
            self.steps
        };
        for _ in 0..n {
            self.advance()?;
        }
        self.drawn_once = true;
        self.projector.project(&self.state)
    }
}

/// Full-chain convenience wrapper: iterates the update rule from the MAP and
/// returns all post-burn-in samples, projected.
pub fn myula_sample(model: &PosteriorModel, config: &MyulaConfig) -> Result<Vec<DVector<f64>>> {
    MyulaSampler::new(model, config)?.run_chain()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_hat_basis, gamma_transform};
    use crate::kernels::{Domain, KernelSpec};
    use crate::posterior::{Observation, PosteriorModel};
    use std::sync::Arc;

    fn prior_only_model(m: usize, lower: f64) -> PosteriorModel {
        let domain = Domain::interval(-1.0, 1.0).unwrap();
        let basis = build_hat_basis(&domain, m).unwrap();
        let model = gamma_transform(basis, KernelSpec::squared_exponential(1e-3))
            .unwrap()
            .with_lower_bound(lower);
        let mut post = PosteriorModel::new(Arc::new(model));
        post.refresh(1e-9).unwrap();
        post
    }

    #[test]
    fn empty_log_step_size_is_half() {
        let post = prior_only_model(4, -1e9);
        let sampler = MyulaSampler::new(&post, &MyulaConfig::default()).unwrap();
        assert!((sampler.eta() - 0.5).abs() <= 1e-12, "eta = {}", sampler.eta());
    }

    #[test]
    fn prior_chain_matches_discretization_moments() {
        // U = ||theta||^2/2 and no binding constraint: AR(1) with
        // coefficient (1-eta) and stationary variance 2eta/(1-(1-eta)^2).
        let post = prior_only_model(3, -1e9);
        let cfg = MyulaConfig {
            steps: 200_000,
            seed: 4,
            ..MyulaConfig::default()
        };
        let samples = myula_sample(&post, &cfg).unwrap();
        assert_eq!(samples.len(), 100_000);
        let eta: f64 = 0.5;
        let target_var = 2.0 * eta / (1.0 - (1.0 - eta) * (1.0 - eta));
        for coord in 0..3 {
            let xs: Vec<f64> = samples.iter().map(|s| s[coord]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() <= 0.05, "coord {coord} mean {mean}");
            assert!((var - target_var).abs() <= 0.1, "coord {coord} var {var} vs {target_var}");
            // Lag-1 autocorrelation close to the AR(1) contraction.
            let lag: f64 = xs
                .windows(2)
                .map(|w| (w[0] - mean) * (w[1] - mean))
                .sum::<f64>()
                / ((xs.len() - 1) as f64 * var);
            assert!((lag - (1.0 - eta)).abs() <= 0.05, "lag-1 {lag}");
        }
    }

    #[test]
    fn identical_seeds_identical_chains() {
        let post = prior_only_model(4, 0.1);
        let cfg = MyulaConfig {
            steps: 500,
            seed: 99,
            ..MyulaConfig::default()
        };
        let a = myula_sample(&post, &cfg).unwrap();
        let b = myula_sample(&post, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn returned_samples_are_feasible() {
        let domain = Domain::interval(-1.0, 1.0).unwrap();
        let basis = build_hat_basis(&domain, 6).unwrap();
        let model = gamma_transform(basis, KernelSpec::squared_exponential(0.4))
            .unwrap()
            .with_lower_bound(0.1);
        let mut post = PosteriorModel::new(Arc::new(model));
        post.observe(Observation {
            region: domain.as_region(),
            region_id: None,
            duration: 2.0,
            events: vec![vec![-0.4], vec![0.2], vec![0.6]],
        })
        .unwrap();
        post.refresh(1e-8).unwrap();
        let cfg = MyulaConfig {
            steps: 2000,
            seed: 7,
            ..MyulaConfig::default()
        };
        let gamma = post.basis().gamma().clone();
        for s in myula_sample(&post, &cfg).unwrap() {
            let slack = gamma.transpose() * &s;
            assert!(slack.iter().all(|v| *v >= 0.1 - 1e-8));
        }
    }

    #[test]
    fn resumed_draws_continue_the_chain() {
        let post = prior_only_model(3, 0.0);
        let cfg = MyulaConfig {
            steps: 400,
            seed: 11,
            ..MyulaConfig::default()
        };
        let mut sampler = MyulaSampler::new(&post, &cfg).unwrap();
        let first = sampler.draw().unwrap();
        let second = sampler.draw().unwrap();
        assert_ne!(first, second);
    }
}
