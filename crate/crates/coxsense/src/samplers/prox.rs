//! Euclidean projection onto the polytope `{y : Gamma' y >= l}`.
//!
//! This is the proximal operator of the constraint indicator, the only
//! non-smooth piece of the posterior energy. Solved exactly by a dual
//! active-set method; the Hessian is the identity and the columns of an
//! invertible `Gamma` are linearly independent, so every working-set system
//! is positive definite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-10;

/// Warm-startable projector; reuses the active set across repeated calls
/// (consecutive Langevin iterates usually share it).
#[derive(Debug, Clone)]
pub struct PolytopeProjector {
    gamma: DMatrix<f64>,
    lower: f64,
    active: Vec<usize>,
}

impl PolytopeProjector {
    pub fn new(gamma: DMatrix<f64>, lower: f64) -> Self {
        Self {
            gamma,
            lower,
            active: Vec::new(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Projects `theta`; feasible points are returned unchanged.
    pub fn project(&mut self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.gamma.ncols();
        let scale = 1.0f64.max(theta.amax()).max(self.lower.abs());
        let tol = KKT_TOL * scale;

        // Fast path: already feasible.
        let slack = self.gamma.transpose() * theta;
        if slack.iter().all(|c| *c >= self.lower - tol) {
            self.active.clear();
            return Ok(theta.clone());
        }

        // Drop warm-start entries that are clearly inactive now.
        self.active.retain(|&i| slack[i] <= self.lower + tol);

        let cap = 50 * m + 100;
        for _ in 0..cap {
            let (y, nu) = self.solve_working_set(theta)?;
            // Remove the most negative multiplier, if any.
            if let Some((pos, _)) = nu
                .iter()
                .enumerate()
                .filter(|(_, v)| **v < -tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
            {
                self.active.remove(pos);
                continue;
            }
            // Add the most violated constraint, if any.
            let slack = self.gamma.transpose() * &y;
            let violated = (0..m)
                .filter(|i| !self.active.contains(i))
                .map(|i| (i, self.lower - slack[i]))
                .filter(|(_, v)| *v > tol)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match violated {
                Some((i, _)) => self.active.push(i),
                None => return Ok(y),
            }
        }
        Err(Error::Numerical(format!(
            "polytope projection did not settle after {cap} active-set updates \
             (|active| = {}, m = {m})",
            self.active.len()
        )))
    }

    /// Equality-constrained projection on the current working set:
    /// `y = theta + A_W nu` with `(A_W' A_W) nu = l - A_W' theta`.
    fn solve_working_set(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.active.is_empty() {
            return Ok((theta.clone(), DVector::zeros(0)));
        }
        let k = self.active.len();
        let m = self.gamma.nrows();
        let mut a_w = DMatrix::zeros(m, k);
        for (col, &i) in self.active.iter().enumerate() {
            a_w.column_mut(col).copy_from(&self.gamma.column(i));
        }
        let gram = a_w.transpose() * &a_w;
        let rhs = DVector::from_element(k, self.lower) - a_w.transpose() * theta;
        let nu = gram
            .cholesky()
            .ok_or_else(|| {
                Error::Numerical("working-set Gram matrix lost positive definiteness".into())
            })?
            .solve(&rhs);
        let y = theta + &a_w * &nu;
        Ok((y, nu))
    }
}

/// One-shot Euclidean projection of `theta` onto `{y : Gamma' y >= l}`.
pub fn prox_project(gamma: &DMatrix<f64>, lower: f64, theta: &DVector<f64>) -> Result<DVector<f64>> {
    PolytopeProjector::new(gamma.clone(), lower).project(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn feasible_point_is_fixed() {
        let gamma = DMatrix::<f64>::identity(3, 3);
        let theta = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let y = prox_project(&gamma, 0.0, &theta).unwrap();
        assert_eq!(y, theta);
    }

    #[test]
    fn orthant_projection() {
        let gamma = DMatrix::<f64>::identity(2, 2);
        let theta = DVector::from_vec(vec![-1.0, 2.0]);
        let y = prox_project(&gamma, 0.0, &theta).unwrap();
        assert_relative_eq!(y, DVector::from_vec(vec![0.0, 2.0]), epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_sampling_oracle() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
        let m = 4;
        // Random well-conditioned Gamma = I + 0.3 R.
        let gamma = DMatrix::<f64>::identity(m, m)
            + DMatrix::from_fn(m, m, |_, _| 0.3 * (rng.random::<f64>() - 0.5));
        let lower = 0.2;
        let theta = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let y = prox_project(&gamma, lower, &theta).unwrap();
        let obj = (&y - &theta).norm_squared();

        // Oracle: best of 10^6 random feasible candidates y = Gamma^{-T} c, c >= l.
        let gamma_t_inv = gamma.transpose().try_inverse().unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..1_000_000 {
            let c = DVector::from_fn(m, |_, _| lower + rng.random::<f64>() * 3.0);
            let cand = &gamma_t_inv * c;
            let v = (&cand - &theta).norm_squared();
            if v < best {
                best = v;
            }
        }
        assert!(obj <= best + 1e-2, "qp {obj} vs oracle {best}");
        // Feasibility of the QP output.
        let slack = gamma.transpose() * &y;
        assert!(slack.iter().all(|c| *c >= lower - 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn idempotent_and_nonexpansive(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let m = 3;
            let gamma = DMatrix::<f64>::identity(m, m)
                + DMatrix::from_fn(m, m, |_, _| 0.25 * (rng.random::<f64>() - 0.5));
            let lower = 0.1;
            let a = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
            let b = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
            let pa = prox_project(&gamma, lower, &a).unwrap();
            let pb = prox_project(&gamma, lower, &b).unwrap();
            let paa = prox_project(&gamma, lower, &pa).unwrap();
            prop_assert!((&paa - &pa).norm() <= 1e-9);
            prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-9);
        }
    }
}
