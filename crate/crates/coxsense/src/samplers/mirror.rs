//! Mirrored Langevin dynamics over a box in the transformed coordinates.
//!
//! The node-value coordinates `c = Gamma' theta` are confined to a box
//! `[l, u]^m` (the lower bound is the truncation level; the upper cap is
//! explicit configuration, which MYULA does not need). The affine map
//! `c = a z + b`, `a = (u-l)/2`, `b = (u+l)/2` sends the box to `[-1,1]^m`,
//! where the entropic mirror map `h(z) = sum (1+z_i)log(1+z_i) +
//! (1-z_i)log(1-z_i)` has dual gradient `tanh`. Pushing the posterior
//! through `nabla h` gives the unconstrained dual potential
//!
//! ```text
//! W(y) = U(theta(tanh y)) + sum_i log( (1 + cosh 2y_i) / 2 )
//! ```
//!
//! sampled by plain unadjusted Langevin; primal samples `tanh` back to the
//! open box, so every returned sample is strictly feasible.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;
use crate::rng::stream;

use super::PosteriorDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MirrorConfig {
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Box lower bound in the transformed variable; `None` uses the model's
    /// truncation level.
    pub lower: Option<f64>,
    /// Box upper cap in the transformed variable (broadcast per coordinate).
    pub upper: f64,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            step_size: 0.01,
            seed: 0,
            lower: None,
            upper: 10.0,
        }
    }
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mirrored Langevin chain; burn-in is the first half of each chain run,
/// matching the MYULA convention.
pub struct MirroredSampler<'a> {
    model: &'a PosteriorModel,
    /// Dual state.
    y: DVector<f64>,
    a: f64,
    b: f64,
    step_size: f64,
    steps: usize,
    gamma_inv: DMatrix<f64>,
    rng: ChaCha12Rng,
    step_index: usize,
    drawn_once: bool,
}

impl<'a> MirroredSampler<'a> {
    pub fn new(model: &'a PosteriorModel, config: &MirrorConfig) -> Result<Self> {
        if config.steps == 0 {
            return Err(Error::Parameter("steps must be at least 1".into()));
        }
        if !(config.step_size > 0.0) {
            return Err(Error::Parameter("step size must be positive".into()));
        }
        let lower = config.lower.unwrap_or_else(|| model.lower_bound());
        if !(lower < config.upper) {
            return Err(Error::Parameter(format!(
                "box requires lower < upper, got [{lower}, {}]",
                config.upper
            )));
        }
        let map = model
            .cached_map()
            .ok_or_else(|| Error::Parameter("mirrored chain needs a refreshed posterior".into()))?;
        let gamma_inv = model
            .basis()
            .gamma()
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::BasisDegeneracy("Gamma is not invertible".into()))?;
        let a = 0.5 * (config.upper - lower);
        let b = 0.5 * (config.upper + lower);
        // Start from the MAP's node values, clamped strictly inside the box.
        let margin = 1e-6 * (config.upper - lower);
        let c0 = model.basis().gamma().transpose() * map;
        let y = DVector::from_fn(model.m(), |i, _| {
            let c = c0[i].clamp(lower + margin, config.upper - margin);
            let z = ((c - b) / a).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            z.atanh()
        });
        Ok(Self {
            model,
            y,
            a,
            b,
            step_size: config.step_size,
            steps: config.steps,
            gamma_inv,
            rng: stream(config.seed, "mirror", 0),
            step_index: 0,
            drawn_once: false,
        })
    }

    /// Primal point for a dual state: `theta = Gamma^{-T} (a tanh y + b)`.
    pub fn primal(&self, y: &DVector<f64>) -> DVector<f64> {
        let c = y.map(|v| self.a * v.tanh() + self.b);
        self.gamma_inv.transpose() * c
    }

    /// Dual potential `W(y)`.
    pub fn dual_potential(&self, y: &DVector<f64>) -> f64 {
        let theta = self.primal(y);
        let u = self.model.energy(&theta);
        u + y.iter().map(|v| 2.0 * ln_cosh(*v)).sum::<f64>()
    }

    /// Gradient of the dual potential:
    /// `diag(a sech^2 y) Gamma^{-1} grad U(theta) + 2 tanh y`.
    pub fn dual_grad(&self, y: &DVector<f64>) -> DVector<f64> {
        let theta = self.primal(y);
        let grad_theta = self.model.energy_grad(&theta);
        let pulled = &self.gamma_inv * grad_theta;
        DVector::from_fn(y.len(), |i, _| {
            let t = y[i].tanh();
            let sech2 = 1.0 - t * t;
            self.a * sech2 * pulled[i] + 2.0 * t
        })
    }

    fn advance(&mut self) -> Result<()> {
        let grad = self.dual_grad(&self.y);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step_index + 1,
                message: "mirrored dual gradient is not finite".into(),
            });
        }
        let h = self.step_size;
        let noise = (2.0 * h).sqrt();
        for i in 0..self.y.len() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            self.y[i] += -h * grad[i] + noise * w;
        }
        self.step_index += 1;
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step_index,
                message: "mirrored dual iterate is not finite".into(),
            });
        }
        Ok(())
    }

    /// Runs `steps` iterations, returning the second half as primal samples.
    pub fn run_chain(&mut self) -> Result<Vec<DVector<f64>>> {
        let burn = self.steps / 2;
        let mut kept = Vec::with_capacity(self.steps - burn);
        for k in 0..self.steps {
            self.advance()?;
            if k >= burn {
                kept.push(self.primal(&self.y));
            }
        }
        self.drawn_once = true;
        Ok(kept)
    }
}

impl PosteriorDraw for MirroredSampler<'_> {
    fn draw(&mut self) -> Result<DVector<f64>> {
        let n = if self.drawn_once {
            (self.steps - self.steps / 2).max(1)
        } else {
            self.steps
        };
        for _ in 0..n {
            self.advance()?;
        }
        self.drawn_once = true;
        Ok(self.primal(&self.y))
    }
}

/// Full-chain wrapper mirroring [`super::myula_sample`].
pub fn mirrored_sample(model: &PosteriorModel, config: &MirrorConfig) -> Result<Vec<DVector<f64>>> {
    MirroredSampler::new(model, config)?.run_chain()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_hat_basis, gamma_transform};
    use crate::kernels::{Domain, KernelSpec};
    use crate::posterior::PosteriorModel;
    use std::sync::Arc;

    fn prior_model(m: usize, lower: f64) -> PosteriorModel {
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
    fn samples_stay_strictly_inside_the_box() {
        let post = prior_model(4, 0.1);
        let cfg = MirrorConfig {
            steps: 3000,
            step_size: 0.05,
            seed: 3,
            lower: None,
            upper: 3.0,
        };
        let gamma = post.basis().gamma().clone();
        for s in mirrored_sample(&post, &cfg).unwrap() {
            let c = gamma.transpose() * &s;
            assert!(c.iter().all(|v| *v > 0.1 && *v < 3.0), "left the box: {c:?}");
        }
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let post = prior_model(3, 0.1);
        let cfg = MirrorConfig {
            steps: 10,
            step_size: 0.01,
            seed: 1,
            lower: None,
            upper: 2.0,
        };
        let sampler = MirroredSampler::new(&post, &cfg).unwrap();
        let y = DVector::from_vec(vec![0.3, -0.8, 1.4]);
        let grad = sampler.dual_grad(&y);
        let h = 1e-6;
        for i in 0..3 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (sampler.dual_potential(&yp) - sampler.dual_potential(&ym)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(1.0);
            assert!(rel <= 1e-5, "dual grad mismatch at {i}: {} vs {}", grad[i], fd);
        }
    }

    #[test]
    fn quadratic_target_mean_matches_quadrature_oracle() {
        // Prior-only posterior on a box: U = ||theta||^2 / 2, box [0.1, 2].
        let post = prior_model(2, 0.1);
        let cfg = MirrorConfig {
            steps: 400_000,
            step_size: 0.02,
            seed: 12,
            lower: None,
            upper: 2.0,
        };
        let samples = mirrored_sample(&post, &cfg).unwrap();
        // Gamma = I here, so theta = c; oracle per coordinate: truncated
        // standard normal on [0.1, 2].
        let n = 20_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let c = 0.1 + (2.0 - 0.1) * (i as f64 + 0.5) / n as f64;
            let w = (-0.5 * c * c).exp();
            num += c * w;
            den += w;
        }
        let oracle_mean = num / den;
        for coord in 0..2 {
            let mean =
                samples.iter().map(|s| s[coord]).sum::<f64>() / samples.len() as f64;
            assert!(
                (mean - oracle_mean).abs() <= 0.05,
                "coord {coord}: {mean} vs {oracle_mean}"
            );
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let post = prior_model(3, 0.1);
        let cfg = MirrorConfig {
            steps: 200,
            step_size: 0.02,
            seed: 8,
            lower: None,
            upper: 2.0,
        };
        let a = mirrored_sample(&post, &cfg).unwrap();
        let b = mirrored_sample(&post, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_box_rejected() {
        let post = prior_model(2, 0.5);
        let cfg = MirrorConfig {
            steps: 10,
            step_size: 0.01,
            seed: 0,
            lower: Some(1.0),
            upper: 0.5,
        };
        assert!(MirroredSampler::new(&post, &cfg).is_err());
    }
}
