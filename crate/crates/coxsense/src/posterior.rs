//! Posterior over basis coefficients: energy, constrained MAP, Laplace
//! precision, and credible bounds.
//!
//! With data `D = {(A_j, Delta_j, {x_ji})}` the negative log posterior is
//!
//! ```text
//! U(theta) = sum_j [ -sum_i log(theta' Phi(x_ji)) + Delta_j theta' psi_{A_j} ]
//!          + ||theta||^2 / 2
//! ```
//!
//! convex on the polytope `Gamma' theta >= l`. The MAP is found by a damped
//! Newton log-barrier method (projected gradient as fallback), the Laplace
//! precision is the energy Hessian at the MAP, and upper/lower credible
//! values of any linear functional are optimized over the intersection of
//! the Laplace ellipsoid and the polytope.
//!
//! `PosteriorModel` is single-writer: appending observations and refreshing
//! caches take `&mut self`, reads take `&self`, so readers can never observe
//! a partially refreshed cache.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::basis::BasisModel;
use crate::error::{Error, Result};
use crate::kernels::BoxRegion;
use crate::samplers::prox_project;

/// Minimum clamp for event intensities inside gradients; Langevin iterates
/// may momentarily leave the polytope.
const GRAD_CLAMP: f64 = 1e-12;

/// Default KKT tolerance for the MAP solve.
pub const DEFAULT_MAP_TOL: f64 = 1e-8;

/// Credible-set radius; default 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleParams {
    pub beta: f64,
}

impl Default for CredibleParams {
    fn default() -> Self {
        Self { beta: 3.0 }
    }
}

/// One sensing session: a region, its exposure duration, and the events seen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub region: BoxRegion,
    pub region_id: Option<u32>,
    pub duration: f64,
    pub events: Vec<Vec<f64>>,
}

impl Observation {
    pub fn count(&self) -> usize {
        self.events.len()
    }
}

/// Append-only record of sensing sessions.
#[derive(Debug, Clone, Default)]
pub struct ObservationLog {
    entries: Vec<Observation>,
}

impl ObservationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, obs: Observation) -> Result<()> {
        if !(obs.duration > 0.0) {
            return Err(Error::Parameter(format!(
                "observation duration must be positive, got {}",
                obs.duration
            )));
        }
        for event in &obs.events {
            if !obs.region.contains(event) {
                return Err(Error::Domain(format!(
                    "event {event:?} outside its region [{:?}, {:?}]",
                    obs.region.lower, obs.region.upper
                )));
            }
        }
        self.entries.push(obs);
        Ok(())
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(Observation::count).sum()
    }

    /// Writes `round, region_id, duration, event_x[, event_y]`: one summary
    /// row per round (empty event columns) plus one row per event, and a
    /// JSON sidecar with the region geometry.
    pub fn write_csv(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let dim = self.entries.first().map(|o| o.region.dim()).unwrap_or(1);
        let mut file = std::fs::File::create(csv_path)?;
        if dim == 1 {
            writeln!(file, "round,region_id,duration,event_x")?;
        } else {
            writeln!(file, "round,region_id,duration,event_x,event_y")?;
        }
        for (round, obs) in self.entries.iter().enumerate() {
            let rid = obs.region_id.map(|r| r.to_string()).unwrap_or_default();
            let empty = if dim == 1 { "" } else { "," };
            writeln!(file, "{},{},{},{}", round + 1, rid, obs.duration, empty)?;
            for event in &obs.events {
                let coords: Vec<String> = event.iter().map(|v| format!("{v}")).collect();
                writeln!(
                    file,
                    "{},{},{},{}",
                    round + 1,
                    rid,
                    obs.duration,
                    coords.join(",")
                )?;
            }
        }
        let sidecar: Vec<serde_json::Value> = self
            .entries
            .iter()
            .enumerate()
            .map(|(round, obs)| {
                serde_json::json!({
                    "round": round + 1,
                    "region_id": obs.region_id,
                    "lower": obs.region.lower,
                    "upper": obs.region.upper,
                    "duration": obs.duration,
                    "count": obs.count(),
                })
            })
            .collect();
        std::fs::write(
            sidecar_path,
            serde_json::to_string_pretty(&sidecar).expect("serializable"),
        )?;
        Ok(())
    }

    /// Reads a log written by [`ObservationLog::write_csv`].
    pub fn read_csv(csv_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let sidecar: Vec<serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path)?).map_err(|e| {
                Error::Parse {
                    line: 0,
                    message: format!("sidecar: {e}"),
                }
            })?;
        let mut rounds: Vec<(BoxRegion, Option<u32>, f64, Vec<Vec<f64>>)> = Vec::new();
        for entry in &sidecar {
            let lower: Vec<f64> =
                serde_json::from_value(entry["lower"].clone()).map_err(|e| Error::Parse {
                    line: 0,
                    message: e.to_string(),
                })?;
            let upper: Vec<f64> =
                serde_json::from_value(entry["upper"].clone()).map_err(|e| Error::Parse {
                    line: 0,
                    message: e.to_string(),
                })?;
            let region_id = entry["region_id"].as_u64().map(|v| v as u32);
            let duration = entry["duration"].as_f64().ok_or(Error::Parse {
                line: 0,
                message: "sidecar duration".into(),
            })?;
            rounds.push((BoxRegion::new(lower, upper)?, region_id, duration, Vec::new()));
        }
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(csv_path)?;
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record?;
            let round: usize =
                record
                    .get(0)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::Parse {
                        line,
                        message: "bad round index".into(),
                    })?;
            if round == 0 || round > rounds.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("round {round} missing from sidecar"),
                });
            }
            let coords: Vec<f64> = record
                .iter()
                .skip(3)
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            if !coords.is_empty() {
                rounds[round - 1].3.push(coords);
            }
        }
        let mut log = Self::new();
        for (region, region_id, duration, events) in rounds {
            log.append(Observation {
                region,
                region_id,
                duration,
                events,
            })?;
        }
        Ok(log)
    }
}

/// Basis + observation log with cached MAP and Laplace precision.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    basis: Arc<BasisModel>,
    log: ObservationLog,
    /// `Phi(x)` for every logged event, in log order.
    event_features: Vec<DVector<f64>>,
    /// `sum_j Delta_j psi_{A_j}`.
    exposure: DVector<f64>,
    map: Option<DVector<f64>>,
    precision: Option<DMatrix<f64>>,
    precision_chol: Option<Cholesky<f64, Dyn>>,
}

impl PosteriorModel {
    pub fn new(basis: Arc<BasisModel>) -> Self {
        let m = basis.m();
        Self {
            basis,
            log: ObservationLog::new(),
            event_features: Vec::new(),
            exposure: DVector::zeros(m),
            map: None,
            precision: None,
            precision_chol: None,
        }
    }

    pub fn basis(&self) -> &BasisModel {
        &self.basis
    }

    pub fn basis_arc(&self) -> Arc<BasisModel> {
        Arc::clone(&self.basis)
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn lower_bound(&self) -> f64 {
        self.basis.lower_bound()
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    pub fn event_features(&self) -> &[DVector<f64>] {
        &self.event_features
    }

    /// Appends an observation and invalidates caches.
    pub fn observe(&mut self, obs: Observation) -> Result<()> {
        for event in &obs.events {
            if !obs.region.contains(event) {
                return Err(Error::Domain(format!("event {event:?} outside its region")));
            }
        }
        let (_, psi) = self.basis.region_integral(&obs.region)?;
        let feats: Vec<DVector<f64>> = obs.events.iter().map(|x| self.basis.features(x)).collect();
        let duration = obs.duration;
        self.log.append(obs)?;
        self.event_features.extend(feats);
        self.exposure.axpy(duration, &psi, 1.0);
        self.map = None;
        self.precision = None;
        self.precision_chol = None;
        Ok(())
    }

    /// Energy `U(theta)`; returns `+inf` when an event intensity is
    /// nonpositive (documented extension, never a panic).
    pub fn energy(&self, theta: &DVector<f64>) -> f64 {
        let mut u = 0.5 * theta.norm_squared() + self.exposure.dot(theta);
        for feat in &self.event_features {
            let v = feat.dot(theta);
            if v <= 0.0 {
                return f64::INFINITY;
            }
            u -= v.ln();
        }
        u
    }

    /// Clamp floor for event intensities in derivatives. Every feasible
    /// coefficient vector gives event intensities of at least `l` (times
    /// the basis partition sum), so flooring at `l/2` never alters the
    /// gradient on the polytope; outside it, the floor keeps the gradient
    /// Lipschitz instead of letting the log singularity catapult Langevin
    /// iterates.
    fn clamp_floor(&self) -> f64 {
        let lower = self.lower_bound();
        if lower > 0.0 {
            (0.5 * lower).max(GRAD_CLAMP)
        } else {
            GRAD_CLAMP
        }
    }

    /// Gradient of the energy with event intensities floored (see
    /// [`Self::energy_hess`] for the floor rule).
    pub fn energy_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let floor = self.clamp_floor();
        let mut g = theta + &self.exposure;
        for feat in &self.event_features {
            let v = feat.dot(theta).max(floor);
            g.axpy(-1.0 / v, feat, 1.0);
        }
        g
    }

    /// Hessian `sum Phi Phi' / (theta' Phi)^2 + I`.
    pub fn energy_hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let floor = self.clamp_floor();
        let m = self.m();
        let mut h = DMatrix::identity(m, m);
        for feat in &self.event_features {
            let v = feat.dot(theta).max(floor);
            h.syger(1.0 / (v * v), feat, feat, 1.0);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    /// Projected-gradient KKT residual `||theta - proj(theta - grad U)||`.
    pub fn kkt_residual(&self, theta: &DVector<f64>) -> Result<f64> {
        let step = theta - self.energy_grad(theta);
        let projected = prox_project(self.basis.gamma(), self.lower_bound(), &step)?;
        Ok((theta - projected).norm())
    }

    pub fn cached_map(&self) -> Option<&DVector<f64>> {
        self.map.as_ref()
    }

    pub fn cached_precision(&self) -> Option<&DMatrix<f64>> {
        self.precision.as_ref()
    }

    /// Solves the constrained MAP to the given KKT tolerance and caches the
    /// estimate together with the Laplace precision.
    pub fn refresh(&mut self, tol: f64) -> Result<()> {
        let theta = self.solve_map(tol)?;
        let precision = self.energy_hess(&theta);
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Laplace precision lost positive definiteness".into()))?;
        self.map = Some(theta);
        self.precision = Some(precision);
        self.precision_chol = Some(chol);
        Ok(())
    }

    /// MAP estimate, refreshing caches if needed.
    pub fn map_estimate(&mut self, tol: f64) -> Result<DVector<f64>> {
        if self.map.is_none() {
            self.refresh(tol)?;
        }
        Ok(self.map.clone().expect("refreshed"))
    }

    /// KKT tolerance scaled to the event count: cancellation in the energy
    /// sum floors the attainable residual as the log grows.
    pub fn scaled_map_tol(&self) -> f64 {
        DEFAULT_MAP_TOL * (1.0 + self.log.total_count() as f64)
    }

    /// Refreshes at the event-count-scaled tolerance.
    pub fn refresh_auto(&mut self) -> Result<()> {
        let tol = self.scaled_map_tol();
        self.refresh(tol)
    }

    /// Laplace precision `Hess U(map)`. Zero-count observations leave it
    /// unchanged: regions sensed without events contribute nothing, which is
    /// the approximation's known failure mode near `l = 0`.
    pub fn laplace_precision(&mut self) -> Result<DMatrix<f64>> {
        if self.precision.is_none() {
            self.refresh(DEFAULT_MAP_TOL)?;
        }
        Ok(self.precision.clone().expect("refreshed"))
    }

    fn require_refreshed(&self) -> Result<(&DVector<f64>, &DMatrix<f64>, &Cholesky<f64, Dyn>)> {
        match (&self.map, &self.precision, &self.precision_chol) {
            (Some(m), Some(p), Some(c)) => Ok((m, p, c)),
            _ => Err(Error::Parameter(
                "posterior caches not refreshed; call refresh() first".into(),
            )),
        }
    }

    /// Upper and lower credible values of `psi' theta` over the intersection
    /// of the Laplace ellipsoid (radius `beta`) and the polytope.
    pub fn ucb_lcb(&self, psi: &DVector<f64>, params: &CredibleParams) -> Result<(f64, f64)> {
        let (ucb, _) = self.extremal(psi, params, true)?;
        let (lcb, _) = self.extremal(psi, params, false)?;
        Ok((ucb, lcb))
    }

    /// Maximum of `psi' theta` together with its argmax (the optimistic
    /// coefficient vector used by design acquisitions).
    pub fn ucb_argmax(
        &self,
        psi: &DVector<f64>,
        params: &CredibleParams,
    ) -> Result<(f64, DVector<f64>)> {
        self.extremal(psi, params, true)
    }

    /// Per-point `(ucb, lcb)` of the intensity on a grid.
    pub fn pointwise_bounds(
        &self,
        grid: &[Vec<f64>],
        params: &CredibleParams,
    ) -> Result<Vec<(f64, f64)>> {
        grid.iter()
            .map(|x| self.ucb_lcb(&self.basis.features(x), params))
            .collect()
    }

    fn extremal(
        &self,
        psi: &DVector<f64>,
        params: &CredibleParams,
        maximize: bool,
    ) -> Result<(f64, DVector<f64>)> {
        if !(params.beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "credible radius beta must be nonnegative, got {}",
                params.beta
            )));
        }
        let (map, precision, chol) = self.require_refreshed()?;
        let center_value = psi.dot(map);
        let sign = if maximize { 1.0 } else { -1.0 };
        let c = psi * sign;

        // Closed form on the ellipsoid alone; valid whenever the optimizer
        // respects the polytope.
        let pinv_c = chol.solve(&c);
        let q = c.dot(&pinv_c);
        if params.beta == 0.0 || q <= 1e-300 {
            return Ok((center_value, map.clone()));
        }
        let step = (params.beta / q).sqrt();
        let candidate = map + &pinv_c * step;
        let lower = self.lower_bound();
        let slack = self.basis.gamma().transpose() * &candidate;
        let scale = 1.0f64.max(candidate.amax());
        if slack.iter().all(|v| *v >= lower - 1e-12 * scale) {
            return Ok((psi.dot(&candidate), candidate));
        }

        // Interior point over ellipsoid + polytope.
        let theta = self.constrained_extremal(&c, map, precision, params.beta)?;
        let value = psi.dot(&theta);
        let clamped = if maximize {
            value.max(center_value)
        } else {
            value.min(center_value)
        };
        Ok((clamped, theta))
    }

    /// Maximizes `c' theta` over `(theta-map)' P (theta-map) <= beta` and
    /// `Gamma' theta >= l` by a log-barrier method, to duality gap `1e-6`.
    fn constrained_extremal(
        &self,
        c: &DVector<f64>,
        map: &DVector<f64>,
        precision: &DMatrix<f64>,
        beta: f64,
    ) -> Result<DVector<f64>> {
        let gamma = self.basis.gamma();
        let lower = self.lower_bound();
        let m = self.m();

        // Strictly feasible start: nudge the ellipsoid center inside the
        // polytope (the center may sit on its boundary).
        let ones = DVector::from_element(m, 1.0);
        let dir = gamma
            .transpose()
            .clone_owned()
            .lu()
            .solve(&ones)
            .ok_or_else(|| Error::Invariant("Gamma transpose became singular".into()))?;
        let dir_energy = (precision * &dir).dot(&dir);
        let t = (1e-6_f64).min(0.5 * (beta / dir_energy).sqrt());
        let mut theta = map + &dir * t;

        let barrier_val = |theta: &DVector<f64>| -> f64 {
            let diff = theta - map;
            let q = (precision * &diff).dot(&diff);
            let ell = beta - q;
            if ell <= 0.0 {
                return f64::INFINITY;
            }
            let slack = gamma.transpose() * theta;
            let mut v = -ell.ln();
            for s in slack.iter() {
                let g = s - lower;
                if g <= 0.0 {
                    return f64::INFINITY;
                }
                v -= g.ln();
            }
            v
        };

        let mut mu = 1.0f64;
        let gap_target = 1e-6 * 1.0f64.max(c.amax()).max(map.amax());
        loop {
            for _ in 0..80 {
                let diff = &theta - map;
                let p_diff = precision * &diff;
                let q = p_diff.dot(&diff);
                let ell = beta - q;
                let slack = gamma.transpose() * &theta;
                let inv_g = DVector::from_fn(m, |i, _| 1.0 / (slack[i] - lower));

                let mut grad = c * (-1.0);
                grad.axpy(2.0 * mu / ell, &p_diff, 1.0);
                grad -= (gamma * &inv_g) * mu;

                let mut hess = precision * (2.0 * mu / ell);
                hess.syger(4.0 * mu / (ell * ell), &p_diff, &p_diff, 1.0);
                let weighted = DMatrix::from_fn(m, m, |i, j| gamma[(i, j)] * inv_g[j]);
                hess += (&weighted * weighted.transpose()) * mu;
                for i in 0..m {
                    for j in (i + 1)..m {
                        let v = 0.5 * (hess[(i, j)] + hess[(j, i)]);
                        hess[(i, j)] = v;
                        hess[(j, i)] = v;
                    }
                }

                let delta = match hess.cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => break,
                };
                let decrement = -grad.dot(&delta);
                if decrement <= 1e-12 * mu.max(1e-12) {
                    break;
                }
                let f0 = -c.dot(&theta) + mu * barrier_val(&theta);
                let slope = grad.dot(&delta);
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    let cand = &theta + &delta * t;
                    let f = -c.dot(&cand) + mu * barrier_val(&cand);
                    if f.is_finite() && f <= f0 + 0.25 * t * slope {
                        theta = cand;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if mu * (m as f64 + 1.0) <= gap_target.max(1e-12) {
                return Ok(theta);
            }
            mu /= 10.0;
        }
    }

    /// Damped-Newton log-barrier MAP solve with projected-gradient fallback.
    fn solve_map(&self, tol: f64) -> Result<DVector<f64>> {
        let gamma = self.basis.gamma();
        let lower = self.lower_bound();
        let m = self.m();

        // Strictly feasible start from node values max(l, 0) + 1.
        let c0 = DVector::from_element(m, lower.max(0.0) + 1.0);
        let mut theta = gamma
            .transpose()
            .clone_owned()
            .lu()
            .solve(&c0)
            .ok_or_else(|| Error::Invariant("Gamma transpose became singular".into()))?;

        let barrier = |theta: &DVector<f64>, mu: f64| -> f64 {
            let u = self.energy(theta);
            if !u.is_finite() {
                return f64::INFINITY;
            }
            let slack = gamma.transpose() * theta;
            let mut v = u;
            for s in slack.iter() {
                let g = s - lower;
                if g <= 0.0 {
                    return f64::INFINITY;
                }
                v -= mu * g.ln();
            }
            v
        };

        // Polish each barrier subproblem until the Newton decrement reaches
        // the tolerance scale; a mu-proportional stop would floor the
        // attainable KKT residual near sqrt(mu).
        let inner_tol = (1e-4 * tol * tol).max(1e-24);
        let mut mu = 1.0f64;
        for _ in 0..16 {
            for _ in 0..100 {
                let slack = gamma.transpose() * &theta;
                let inv_g = DVector::from_fn(m, |i, _| 1.0 / (slack[i] - lower));
                let mut grad = self.energy_grad(&theta);
                grad -= (gamma * &inv_g) * mu;
                let mut hess = self.energy_hess(&theta);
                let weighted = DMatrix::from_fn(m, m, |i, j| gamma[(i, j)] * inv_g[j]);
                hess += (&weighted * weighted.transpose()) * mu;

                let delta = match hess.cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => break,
                };
                let decrement = -grad.dot(&delta);
                if decrement <= inner_tol {
                    break;
                }
                let f0 = barrier(&theta, mu);
                let slope = grad.dot(&delta);
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    let cand = &theta + &delta * t;
                    let f = barrier(&cand, mu);
                    if f.is_finite() && f <= f0 + 0.25 * t * slope {
                        theta = cand;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            let residual = self.kkt_residual(&theta)?;
            if residual <= tol {
                return Ok(theta);
            }
            mu /= 10.0;
        }

        // Projected-gradient fallback with Armijo line search.
        let mut projector = crate::samplers::PolytopeProjector::new(gamma.clone(), lower);
        let mut step = 1.0 / (self.event_features.len() as f64 + 1.0);
        theta = projector.project(&theta)?;
        for _ in 0..200_000 {
            let grad = self.energy_grad(&theta);
            let u0 = self.energy(&theta);
            let mut accepted = false;
            for _ in 0..60 {
                let cand = projector.project(&(&theta - &grad * step))?;
                let u = self.energy(&cand);
                let descent = grad.dot(&(&theta - &cand));
                if u.is_finite() && u <= u0 - 1e-4 * descent {
                    theta = cand;
                    accepted = true;
                    step *= 1.3;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            let residual = self.kkt_residual(&theta)?;
            if residual <= tol {
                return Ok(theta);
            }
        }
        let residual = self.kkt_residual(&theta)?;
        if residual <= tol {
            Ok(theta)
        } else {
            Err(Error::Convergence(format!(
                "MAP solve stalled at KKT residual {residual:.3e} (tol {tol:.1e})"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_hat_basis, gamma_transform, BasisModel, RawBasis};
    use crate::kernels::{Domain, KernelSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn unit_interval() -> Domain {
        Domain::interval(-1.0, 1.0).unwrap()
    }

    /// Hat basis with an effectively identity kernel matrix (Gamma = I).
    fn identity_model(m: usize, lower: f64) -> Arc<BasisModel> {
        let basis = build_hat_basis(&unit_interval(), m).unwrap();
        let model = gamma_transform(basis, KernelSpec::squared_exponential(1e-3))
            .unwrap()
            .with_lower_bound(lower);
        Arc::new(model)
    }

    fn se_model(m: usize, gamma: f64, lower: f64) -> Arc<BasisModel> {
        let basis = build_hat_basis(&unit_interval(), m).unwrap();
        let model = gamma_transform(basis, KernelSpec::squared_exponential(gamma))
            .unwrap()
            .with_lower_bound(lower);
        Arc::new(model)
    }

    /// Single constant basis function on the whole interval; Gamma = [1].
    fn scalar_model(lower: f64) -> Arc<BasisModel> {
        let domain = unit_interval();
        let axes = vec![vec![-1.0, 1.0]];
        let columns = DMatrix::from_element(2, 1, 1.0);
        let raw = RawBasis::from_table(domain, axes, columns, vec![vec![0.0]]).unwrap();
        let model = gamma_transform(raw, KernelSpec::squared_exponential(1e6))
            .unwrap()
            .with_lower_bound(lower);
        Arc::new(model)
    }

    fn whole_region() -> BoxRegion {
        unit_interval().as_region()
    }

    #[test]
    fn energy_empty_log_at_zero() {
        let post = PosteriorModel::new(identity_model(4, 0.0));
        assert_eq!(post.energy(&DVector::zeros(4)), 0.0);
    }

    #[test]
    fn energy_zero_count_observation() {
        let mut post = PosteriorModel::new(identity_model(4, 0.0));
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 1.0,
            events: vec![],
        })
        .unwrap();
        let theta = DVector::from_vec(vec![0.5, -0.25, 1.0, 0.0]);
        let (_, psi) = post.basis().region_integral(&whole_region()).unwrap();
        let expected = psi.dot(&theta) + 0.5 * theta.norm_squared();
        assert_relative_eq!(post.energy(&theta), expected, epsilon = 1e-12);
    }

    #[test]
    fn energy_single_event_closed_form() {
        // One event whose feature vector is e1: m = 2 hats, event at the left
        // node, Gamma = I.
        let mut post = PosteriorModel::new(identity_model(2, 0.0));
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 1.0,
            events: vec![vec![-1.0]],
        })
        .unwrap();
        let theta = DVector::from_vec(vec![2.0, 0.0]);
        let (_, psi) = post.basis().region_integral(&whole_region()).unwrap();
        let expected = -(2.0f64).ln() + psi.dot(&theta) + 0.5 * 4.0;
        assert_relative_eq!(post.energy(&theta), expected, epsilon = 1e-12);
        // Nonpositive event intensity -> +inf sentinel.
        assert_eq!(
            post.energy(&DVector::from_vec(vec![-1.0, 0.0])),
            f64::INFINITY
        );
        assert_eq!(post.energy(&DVector::zeros(2)), f64::INFINITY);
    }

    #[test]
    fn gradient_and_hessian_empty_log() {
        let mut post = PosteriorModel::new(identity_model(3, 0.0));
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 2.5,
            events: vec![],
        })
        .unwrap();
        let theta = DVector::from_vec(vec![0.3, 0.1, -0.2]);
        let (_, psi) = post.basis().region_integral(&whole_region()).unwrap();
        let expected = &theta + &(psi * 2.5);
        assert_relative_eq!(post.energy_grad(&theta), expected, epsilon = 1e-12);
        assert_relative_eq!(
            post.energy_hess(&theta),
            DMatrix::identity(3, 3),
            epsilon = 1e-12
        );
    }

    fn random_posterior(seed: u64, m: usize, lower: f64) -> PosteriorModel {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut post = PosteriorModel::new(se_model(m, 0.25, lower));
        for _ in 0..3 {
            let a = rng.random_range(-1.0..-0.1);
            let b = rng.random_range(0.1..1.0f64);
            let region = BoxRegion::new(vec![a], vec![b]).unwrap();
            let n = rng.random_range(1..6);
            let events: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(a..b)]).collect();
            post.observe(Observation {
                region,
                region_id: None,
                duration: rng.random_range(0.5..3.0),
                events,
            })
            .unwrap();
        }
        post
    }

    fn random_feasible(post: &PosteriorModel, rng: &mut impl Rng) -> DVector<f64> {
        let m = post.m();
        let c = DVector::from_fn(m, |_, _| post.lower_bound() + rng.random_range(0.05..2.0));
        post.basis()
            .gamma()
            .transpose()
            .clone_owned()
            .lu()
            .solve(&c)
            .unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let post = random_posterior(3, 8, 0.1);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let theta = random_feasible(&post, &mut rng);
            let grad = post.energy_grad(&theta);
            let h = 1e-6;
            let mut fd = DVector::zeros(post.m());
            for i in 0..post.m() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                fd[i] = (post.energy(&tp) - post.energy(&tm)) / (2.0 * h);
            }
            let rel = (&grad - &fd).norm() / grad.norm().max(1.0);
            assert!(rel <= 1e-5, "gradient FD mismatch {rel}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let post = random_posterior(5, 6, 0.1);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let theta = random_feasible(&post, &mut rng);
        let hess = post.energy_hess(&theta);
        let h = 1e-5;
        for i in 0..post.m() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let col = (post.energy_grad(&tp) - post.energy_grad(&tm)) / (2.0 * h);
            let rel =
                (&hess.column(i).clone_owned() - &col).norm() / hess.column(i).norm().max(1.0);
            assert!(rel <= 1e-3, "hessian FD mismatch at column {i}: {rel}");
        }
        let eig = hess.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= 1.0 - 1e-9);
    }

    #[test]
    fn energy_is_convex_between_feasible_points() {
        let post = random_posterior(9, 6, 0.1);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for _ in 0..200 {
            let a = random_feasible(&post, &mut rng);
            let b = random_feasible(&post, &mut rng);
            let alpha: f64 = rng.random_range(0.0..1.0);
            let mix = &a * alpha + &b * (1.0 - alpha);
            let lhs = post.energy(&mix);
            let rhs = alpha * post.energy(&a) + (1.0 - alpha) * post.energy(&b);
            assert!(lhs <= rhs + 1e-9, "convexity violated: {lhs} > {rhs}");
        }
    }

    #[test]
    fn map_empty_log_is_prior_mode() {
        let mut post = PosteriorModel::new(identity_model(4, 0.0));
        let map = post.map_estimate(1e-9).unwrap();
        assert!(map.norm() <= 1e-8, "map = {map:?}");
    }

    #[test]
    fn map_empty_log_projects_onto_bound() {
        let mut post = PosteriorModel::new(identity_model(5, 0.1));
        let map = post.map_estimate(1e-9).unwrap();
        for v in map.iter() {
            assert_relative_eq!(*v, 0.1, epsilon = 1e-6);
        }
    }

    #[test]
    fn scalar_map_matches_closed_form() {
        // U(theta) = -n log(theta) + a theta + theta^2 / 2 over theta >= l,
        // minimized at (-a + sqrt(a^2 + 4n)) / 2.
        let mut post = PosteriorModel::new(scalar_model(0.1));
        let n = 10usize;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let events: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 1.0,
            events,
        })
        .unwrap();
        let a = 2.0; // psi_A = |A| = 2 for the constant basis
        let expected = (-a + (a * a + 4.0 * n as f64).sqrt()) / 2.0;
        let map = post.map_estimate(1e-10).unwrap();
        assert_relative_eq!(map[0], expected, epsilon = 1e-8);
    }

    #[test]
    fn map_beats_feasible_perturbations() {
        let mut post = random_posterior(11, 8, 0.1);
        let map = post.map_estimate(1e-8).unwrap();
        let u0 = post.energy(&map);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let mut projector =
            crate::samplers::PolytopeProjector::new(post.basis().gamma().clone(), 0.1);
        for _ in 0..1000 {
            let delta = DVector::from_fn(post.m(), |_, _| rng.random_range(-0.1..0.1));
            let cand = projector.project(&(&map + &delta)).unwrap();
            assert!(post.energy(&cand) >= u0 - 1e-9);
        }
    }

    #[test]
    fn laplace_precision_empty_log_is_identity() {
        let mut post = PosteriorModel::new(identity_model(4, 0.1));
        post.refresh(1e-8).unwrap();
        assert_eq!(post.cached_precision().unwrap(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn laplace_precision_single_event() {
        let mut post = PosteriorModel::new(identity_model(2, 0.0));
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 1.0,
            events: vec![vec![-1.0]], // features e1
        })
        .unwrap();
        let theta = DVector::from_vec(vec![2.0, 0.5]);
        let hess = post.energy_hess(&theta);
        let mut expected = DMatrix::identity(2, 2);
        expected[(0, 0)] += 0.25;
        assert_relative_eq!(hess, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_count_round_leaves_precision_unchanged() {
        // The documented Laplace pathology: sensing without events cannot
        // shrink the credible set.
        let mut post = PosteriorModel::new(se_model(8, 0.2, 0.1));
        post.observe(Observation {
            region: BoxRegion::new(vec![-1.0], vec![0.0]).unwrap(),
            region_id: None,
            duration: 2.0,
            events: vec![],
        })
        .unwrap();
        post.refresh(1e-8).unwrap();
        let before = post.cached_precision().unwrap().clone();
        post.observe(Observation {
            region: BoxRegion::new(vec![0.0], vec![1.0]).unwrap(),
            region_id: None,
            duration: 2.0,
            events: vec![],
        })
        .unwrap();
        post.refresh(1e-8).unwrap();
        let after = post.cached_precision().unwrap().clone();
        assert_eq!(before, after, "empty rounds must not move the precision");
    }

    #[test]
    fn ucb_lcb_closed_form_ellipsoid() {
        // Sigma = I, map = 0, beta = 1, polytope far away: ucb/lcb = ±1.
        let mut post = PosteriorModel::new(identity_model(3, -1e9));
        post.refresh(1e-12).unwrap();
        let psi = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let (ucb, lcb) = post.ucb_lcb(&psi, &CredibleParams { beta: 1.0 }).unwrap();
        assert_relative_eq!(ucb, 1.0, epsilon = 1e-9);
        assert_relative_eq!(lcb, -1.0, epsilon = 1e-9);

        let zero = DVector::zeros(3);
        let (u0, l0) = post.ucb_lcb(&zero, &CredibleParams { beta: 1.0 }).unwrap();
        assert_eq!((u0, l0), (0.0, 0.0));
    }

    #[test]
    fn ucb_lcb_matches_grid_oracle() {
        let mut post = random_posterior(13, 3, 0.1);
        post.refresh(1e-9).unwrap();
        let params = CredibleParams { beta: 2.0 };
        let psi = DVector::from_vec(vec![0.7, -0.3, 0.5]);
        let (ucb, lcb) = post.ucb_lcb(&psi, &params).unwrap();

        // The maximizers themselves must be feasible, so both values are
        // attained within the set.
        let neg = -&psi;
        for (value, dir) in [(ucb, &psi), (-lcb, &neg)] {
            let (v, arg) = post.ucb_argmax(dir, &params).unwrap();
            assert!((v - value).abs() <= 1e-9, "extremal value drifted: {v} vs {value}");
            let diff = &arg - post.cached_map().unwrap();
            let q = (post.cached_precision().unwrap() * &diff).dot(&diff);
            assert!(q <= params.beta + 1e-6, "argmax left the ellipsoid: {q}");
            let slack = post.basis().gamma().transpose() * &arg;
            assert!(slack.iter().all(|s| *s >= 0.1 - 1e-6), "argmax left the polytope");
        }

        let map = post.cached_map().unwrap().clone();
        let precision = post.cached_precision().unwrap().clone();
        let gamma = post.basis().gamma().clone();
        let eig = precision.clone().symmetric_eigen();
        let radius = (params.beta / eig.eigenvalues.min()).sqrt();
        let n = 500usize;
        let mut best_hi = f64::NEG_INFINITY;
        let mut best_lo = f64::INFINITY;
        let (m0, m1, m2) = (map[0], map[1], map[2]);
        let (p00, p01, p02) = (precision[(0, 0)], precision[(0, 1)], precision[(0, 2)]);
        let (p11, p12, p22) = (precision[(1, 1)], precision[(1, 2)], precision[(2, 2)]);
        let g = gamma.transpose();
        let step = 2.0 * radius / (n - 1) as f64;
        for i in 0..n {
            let x0 = m0 - radius + step * i as f64;
            let d0 = x0 - m0;
            for j in 0..n {
                let x1 = m1 - radius + step * j as f64;
                let d1 = x1 - m1;
                for k in 0..n {
                    let x2 = m2 - radius + step * k as f64;
                    let d2 = x2 - m2;
                    let q = p00 * d0 * d0
                        + p11 * d1 * d1
                        + p22 * d2 * d2
                        + 2.0 * (p01 * d0 * d1 + p02 * d0 * d2 + p12 * d1 * d2);
                    if q > params.beta {
                        continue;
                    }
                    let s0 = g[(0, 0)] * x0 + g[(0, 1)] * x1 + g[(0, 2)] * x2;
                    let s1 = g[(1, 0)] * x0 + g[(1, 1)] * x1 + g[(1, 2)] * x2;
                    let s2 = g[(2, 0)] * x0 + g[(2, 1)] * x1 + g[(2, 2)] * x2;
                    if s0 < 0.1 || s1 < 0.1 || s2 < 0.1 {
                        continue;
                    }
                    let v = psi[0] * x0 + psi[1] * x1 + psi[2] * x2;
                    if v > best_hi {
                        best_hi = v;
                    }
                    if v < best_lo {
                        best_lo = v;
                    }
                }
            }
        }
        assert!((ucb - best_hi).abs() <= 1e-2, "ucb {ucb} vs oracle {best_hi}");
        assert!((lcb - best_lo).abs() <= 1e-2, "lcb {lcb} vs oracle {best_lo}");
        assert!(ucb >= psi.dot(&map) - 1e-12);
        assert!(lcb <= psi.dot(&map) + 1e-12);
    }

    #[test]
    fn ucb_monotone_in_beta() {
        let mut post = random_posterior(19, 5, 0.1);
        post.refresh(1e-8).unwrap();
        let psi = post.basis().features(&[0.21]);
        let mut prev_ucb = f64::NEG_INFINITY;
        let mut prev_lcb = f64::INFINITY;
        for beta in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let (u, l) = post.ucb_lcb(&psi, &CredibleParams { beta }).unwrap();
            assert!(u >= prev_ucb - 1e-9, "ucb not monotone at beta {beta}");
            assert!(l <= prev_lcb + 1e-9, "lcb not monotone at beta {beta}");
            prev_ucb = u;
            prev_lcb = l;
        }
    }

    #[test]
    fn pointwise_bounds_bracket_map_intensity() {
        let mut post = random_posterior(29, 6, 0.1);
        post.refresh(1e-8).unwrap();
        let grid: Vec<Vec<f64>> = (0..25).map(|i| vec![-0.96 + 0.08 * i as f64]).collect();
        let bounds = post
            .pointwise_bounds(&grid, &CredibleParams::default())
            .unwrap();
        let map = post.cached_map().unwrap().clone();
        for (x, (ucb, lcb)) in grid.iter().zip(&bounds) {
            let v = post.basis().eval_intensity(&map, x);
            assert!(*ucb >= v - 1e-9 && *lcb <= v + 1e-9, "bounds fail at {x:?}");
        }
    }

    #[test]
    fn ellipsoid_only_ucb_shrinks_with_data() {
        // With the polytope disabled, new events grow the Laplace precision,
        // so for a fixed map the closed-form ucb width cannot increase.
        let mut post = PosteriorModel::new(se_model(6, 0.3, -1e9));
        post.observe(Observation {
            region: whole_region(),
            region_id: None,
            duration: 1.0,
            events: vec![vec![-0.5], vec![0.4]],
        })
        .unwrap();
        post.refresh(1e-8).unwrap();
        let map = post.cached_map().unwrap().clone();
        let psi = post.basis().features(&[-0.5]);
        let p1 = post.cached_precision().unwrap().clone();
        let w1 = psi.dot(&p1.clone().cholesky().unwrap().solve(&psi));

        let feats = post.basis().features(&[-0.45]);
        let mut p2 = p1.clone();
        let v = feats.dot(&map).max(1e-12);
        p2.syger(1.0 / (v * v), &feats, &feats, 1.0);
        for i in 0..6 {
            for j in (i + 1)..6 {
                p2[(i, j)] = p2[(j, i)];
            }
        }
        let w2 = psi.dot(&p2.cholesky().unwrap().solve(&psi));
        assert!(w2 <= w1 + 1e-12, "ellipsoid width grew: {w1} -> {w2}");
    }

    #[test]
    fn observation_log_roundtrips_csv() {
        let mut log = ObservationLog::new();
        log.append(Observation {
            region: BoxRegion::new(vec![-1.0], vec![0.0]).unwrap(),
            region_id: Some(3),
            duration: 2.0,
            events: vec![vec![-0.5], vec![-0.25]],
        })
        .unwrap();
        log.append(Observation {
            region: BoxRegion::new(vec![0.0], vec![1.0]).unwrap(),
            region_id: Some(4),
            duration: 1.0,
            events: vec![],
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("log.csv");
        let json = dir.path().join("log.json");
        log.write_csv(&csv, &json).unwrap();
        let back = ObservationLog::read_csv(&csv, &json).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.entries()[0].count(), 2);
        assert_eq!(back.entries()[1].count(), 0);
        assert_eq!(back.entries()[0].events[1][0], -0.25);
    }

    #[test]
    fn events_outside_region_rejected() {
        let mut post = PosteriorModel::new(identity_model(3, 0.0));
        let err = post.observe(Observation {
            region: BoxRegion::new(vec![-1.0], vec![0.0]).unwrap(),
            region_id: None,
            duration: 1.0,
            events: vec![vec![0.5]],
        });
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
