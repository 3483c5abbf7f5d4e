//! Positive bases and the covariance-matching transform.
//!
//! A raw basis is a family of pointwise-nonnegative functions `phi_1..phi_m`
//! with nodes `t_1..t_m`. The working representation of the intensity is
//! `lambda(x) = theta' Phi(x)` with `Phi(x) = Gamma phi(x)` and
//! `Gamma = V^{-1} K^{1/2}`, `V_ij = phi_j(t_i)`, `K_ij = k(t_i, t_j)`, so a
//! standard normal prior on `theta` reproduces the kernel covariance at the
//! nodes. Region integrals `phi_A = int_A phi` are precomputed (closed form
//! for hats, Gauss-Legendre otherwise), which removes the likelihood's
//! intractable integral.

mod nmf;

pub use nmf::{build_nmf_basis, NmfOptions, NmfReport};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    default_jitter, kernel_matrix, psd_sqrt, tensor_grid_nodes, BoxRegion, Domain, KernelSpec,
};
use crate::quad::{gl_rule, DEFAULT_GL_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Hat,
    Bernstein,
    NmfOptimal,
}

#[derive(Debug, Clone)]
enum Payload {
    /// Tensor-product triangle functions with half-width equal to the node
    /// spacing; interpolatory (`V = I`) and a partition of unity.
    Hat { per_axis: usize, spacing: Vec<f64> },
    /// Tensor-product Bernstein polynomials of a fixed degree per axis.
    Bernstein { degree: usize, binomials: Vec<f64> },
    /// Columns tabulated on an endpoint-inclusive tensor grid, evaluated by
    /// multilinear interpolation. Used by the NMF-optimal basis and by bases
    /// loaded from exported files.
    Table {
        axes: Vec<Vec<f64>>,
        /// `n_grid_total x m`, column j = basis function j on the grid.
        columns: DMatrix<f64>,
        report: Option<NmfReport>,
    },
}

/// A positive basis before the covariance-matching transform.
#[derive(Debug, Clone)]
pub struct RawBasis {
    kind: BasisKind,
    domain: Domain,
    nodes: Vec<Vec<f64>>,
    payload: Payload,
}

fn hat_1d(x: f64, t: f64, s: f64) -> f64 {
    (1.0 - (x - t).abs() / s).max(0.0)
}

/// Integral of the triangle `max(0, 1 - |x-t|/s)` over `[a, b]`.
fn hat_integral_1d(t: f64, s: f64, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    // Left slope on [t-s, t].
    let p = a.max(t - s);
    let q = b.min(t);
    if q > p {
        total += (q - p) - ((t - p).powi(2) - (t - q).powi(2)) / (2.0 * s);
    }
    // Right slope on [t, t+s].
    let p = a.max(t);
    let q = b.min(t + s);
    if q > p {
        total += (q - p) - ((q - t).powi(2) - (p - t).powi(2)) / (2.0 * s);
    }
    total
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64; n + 1];
    for j in 1..=n {
        row[j] = row[j - 1] * (n - j + 1) as f64 / j as f64;
    }
    row
}

fn bernstein_1d(u: f64, j: usize, n: usize, binomials: &[f64]) -> f64 {
    binomials[j] * u.powi(j as i32) * (1.0 - u).powi((n - j) as i32)
}

/// Decodes a flat tensor index into per-axis indices, x fastest.
fn unflatten(mut j: usize, per_axis: usize, d: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(d);
    for _ in 0..d {
        idx.push(j % per_axis);
        j /= per_axis;
    }
    idx
}

impl RawBasis {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Basis size `m`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Solver diagnostics when this basis came out of the NMF construction.
    pub fn nmf_report(&self) -> Option<&NmfReport> {
        match &self.payload {
            Payload::Table { report, .. } => report.as_ref(),
            _ => None,
        }
    }

    /// Tabulated grid and columns, when this basis is table-backed.
    pub fn table(&self) -> Option<(&[Vec<f64>], &DMatrix<f64>)> {
        match &self.payload {
            Payload::Table { axes, columns, .. } => Some((axes, columns)),
            _ => None,
        }
    }

    /// Builds a table-backed basis from grid axes and nonnegative columns.
    ///
    /// `columns` is `n_grid_total x m`, grid enumerated row-major with x
    /// fastest; `nodes` must have one entry per column. This is the import
    /// path for persisted bases.
    pub fn from_table(
        domain: Domain,
        axes: Vec<Vec<f64>>,
        columns: DMatrix<f64>,
        nodes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if axes.len() != domain.dim() {
            return Err(Error::Parameter("axis count must match domain dimension".into()));
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if columns.nrows() != total {
            return Err(Error::Parameter(format!(
                "columns have {} rows, grid has {} points",
                columns.nrows(),
                total
            )));
        }
        if nodes.len() != columns.ncols() {
            return Err(Error::Parameter("one node per basis column required".into()));
        }
        for axis in &axes {
            if axis.len() < 2 || !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Parameter(
                    "table axes must be strictly increasing with >= 2 points".into(),
                ));
            }
        }
        if columns.iter().any(|v| *v < 0.0) {
            return Err(Error::Parameter("table columns must be nonnegative".into()));
        }
        for node in &nodes {
            if !domain.contains(node) {
                return Err(Error::Domain(format!("node {node:?} outside domain")));
            }
        }
        Ok(Self {
            kind: BasisKind::NmfOptimal,
            domain,
            nodes,
            payload: Payload::Table {
                axes,
                columns,
                report: None,
            },
        })
    }

    pub(crate) fn from_table_with_report(
        domain: Domain,
        axes: Vec<Vec<f64>>,
        columns: DMatrix<f64>,
        nodes: Vec<Vec<f64>>,
        report: NmfReport,
    ) -> Result<Self> {
        let mut basis = Self::from_table(domain, axes, columns, nodes)?;
        if let Payload::Table { report: slot, .. } = &mut basis.payload {
            *slot = Some(report);
        }
        Ok(basis)
    }

    /// Evaluates `phi(x)`, the raw basis vector.
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let m = self.len();
        let mut out = DVector::zeros(m);
        self.eval_into(x, &mut out);
        out
    }

    pub(crate) fn eval_into(&self, x: &[f64], out: &mut DVector<f64>) {
        let d = self.domain.dim();
        match &self.payload {
            Payload::Hat { per_axis, spacing } => {
                // Per-axis hat values, then tensor products.
                let axis_vals: Vec<Vec<f64>> = (0..d)
                    .map(|k| {
                        let lo = self.domain.lower()[k];
                        let hi = self.domain.upper()[k];
                        (0..*per_axis)
                            .map(|i| {
                                let t = if *per_axis == 1 {
                                    0.5 * (lo + hi)
                                } else {
                                    lo + (hi - lo) * i as f64 / (*per_axis - 1) as f64
                                };
                                hat_1d(x[k], t, spacing[k])
                            })
                            .collect()
                    })
                    .collect();
                for j in 0..self.len() {
                    let idx = unflatten(j, *per_axis, d);
                    out[j] = (0..d).map(|k| axis_vals[k][idx[k]]).product();
                }
            }
            Payload::Bernstein { degree, binomials } => {
                let n = *degree;
                let axis_vals: Vec<Vec<f64>> = (0..d)
                    .map(|k| {
                        let lo = self.domain.lower()[k];
                        let hi = self.domain.upper()[k];
                        let u = ((x[k] - lo) / (hi - lo)).clamp(0.0, 1.0);
                        (0..=n).map(|j| bernstein_1d(u, j, n, binomials)).collect()
                    })
                    .collect();
                for j in 0..self.len() {
                    let idx = unflatten(j, n + 1, d);
                    out[j] = (0..d).map(|k| axis_vals[k][idx[k]]).product();
                }
            }
            Payload::Table { axes, columns, .. } => {
                // Multilinear interpolation between grid points.
                let mut cell = Vec::with_capacity(d);
                for k in 0..d {
                    let axis = &axes[k];
                    let i = axis
                        .partition_point(|a| *a <= x[k])
                        .clamp(1, axis.len() - 1);
                    let (a, b) = (axis[i - 1], axis[i]);
                    let w = ((x[k] - a) / (b - a)).clamp(0.0, 1.0);
                    cell.push((i - 1, w));
                }
                let strides: Vec<usize> = {
                    let mut s = vec![1usize; d];
                    for k in 1..d {
                        s[k] = s[k - 1] * axes[k - 1].len();
                    }
                    s
                };
                out.fill(0.0);
                for corner in 0..(1usize << d) {
                    let mut weight = 1.0;
                    let mut row = 0usize;
                    for k in 0..d {
                        let (i0, w) = cell[k];
                        if corner >> k & 1 == 1 {
                            weight *= w;
                            row += (i0 + 1) * strides[k];
                        } else {
                            weight *= 1.0 - w;
                            row += i0 * strides[k];
                        }
                    }
                    if weight != 0.0 {
                        for j in 0..self.len() {
                            out[j] += weight * columns[(row, j)];
                        }
                    }
                }
            }
        }
    }

    /// Exact or quadrature integral of every `phi_j` over a box region.
    fn integrate_region(&self, region: &BoxRegion, order: usize) -> DVector<f64> {
        let d = self.domain.dim();
        match &self.payload {
            Payload::Hat { per_axis, spacing } => {
                let axis_ints: Vec<Vec<f64>> = (0..d)
                    .map(|k| {
                        let lo = self.domain.lower()[k];
                        let hi = self.domain.upper()[k];
                        (0..*per_axis)
                            .map(|i| {
                                let t = if *per_axis == 1 {
                                    0.5 * (lo + hi)
                                } else {
                                    lo + (hi - lo) * i as f64 / (*per_axis - 1) as f64
                                };
                                hat_integral_1d(t, spacing[k], region.lower[k], region.upper[k])
                            })
                            .collect()
                    })
                    .collect();
                DVector::from_fn(self.len(), |j, _| {
                    let idx = unflatten(j, *per_axis, d);
                    (0..d).map(|k| axis_ints[k][idx[k]]).product()
                })
            }
            _ => {
                // Tensor Gauss-Legendre over the region.
                let rules: Vec<Vec<(f64, f64)>> = (0..d)
                    .map(|k| gl_rule(order, region.lower[k], region.upper[k]))
                    .collect();
                let mut total = DVector::zeros(self.len());
                let mut phi = DVector::zeros(self.len());
                let mut idx = vec![0usize; d];
                let mut point = vec![0.0f64; d];
                'outer: loop {
                    let mut w = 1.0;
                    for k in 0..d {
                        let (xk, wk) = rules[k][idx[k]];
                        point[k] = xk;
                        w *= wk;
                    }
                    self.eval_into(&point, &mut phi);
                    total.axpy(w, &phi, 1.0);
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < rules[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == d {
                            break 'outer;
                        }
                    }
                }
                total
            }
        }
    }
}

/// Triangle (hat) basis on an equispaced node grid, endpoints included.
///
/// Half-width equals the node spacing `s = (upper-lower)/(m-1)`, so the hats
/// interpolate (`V = I`) and sum to one everywhere on the domain.
pub fn build_hat_basis(domain: &Domain, m_per_axis: usize) -> Result<RawBasis> {
    if m_per_axis < 2 {
        return Err(Error::Parameter(format!(
            "hat basis needs m_per_axis >= 2, got {m_per_axis}"
        )));
    }
    let d = domain.dim();
    let spacing: Vec<f64> = (0..d)
        .map(|k| (domain.upper()[k] - domain.lower()[k]) / (m_per_axis - 1) as f64)
        .collect();
    let nodes = tensor_grid_nodes(domain, m_per_axis);
    Ok(RawBasis {
        kind: BasisKind::Hat,
        domain: domain.clone(),
        nodes,
        payload: Payload::Hat {
            per_axis: m_per_axis,
            spacing,
        },
    })
}

/// Bernstein polynomial basis of the given degree (per axis for d = 2).
///
/// Nodes sit at the per-axis maxima `u = j/degree`.
pub fn build_bernstein_basis(domain: &Domain, degree: usize) -> Result<RawBasis> {
    if degree < 1 {
        return Err(Error::Parameter(format!(
            "bernstein basis needs degree >= 1, got {degree}"
        )));
    }
    let nodes = tensor_grid_nodes(domain, degree + 1);
    Ok(RawBasis {
        kind: BasisKind::Bernstein,
        domain: domain.clone(),
        nodes,
        payload: Payload::Bernstein {
            degree,
            binomials: binomial_row(degree),
        },
    })
}

/// A raw basis paired with the covariance-matching transform.
#[derive(Debug, Clone)]
pub struct BasisModel {
    raw: RawBasis,
    kernel: KernelSpec,
    gamma: DMatrix<f64>,
    v: DMatrix<f64>,
    clipped_kernel: DMatrix<f64>,
    lower_bound: f64,
}

/// Computes `Gamma = V^{-1} K^{1/2}` for the basis nodes.
///
/// `V_ij = phi_j(t_i)`; for the hat basis `V` is the identity exactly and
/// `Gamma` is the symmetric kernel square root.
pub fn gamma_transform(raw: RawBasis, kernel: KernelSpec) -> Result<BasisModel> {
    kernel.validate()?;
    let m = raw.len();
    let km = kernel_matrix(&kernel, raw.domain(), raw.nodes())?;
    let psd = psd_sqrt(km.entries(), default_jitter(km.entries()));

    let (v, gamma) = if raw.kind() == BasisKind::Hat {
        (DMatrix::identity(m, m), psd.sqrt.clone())
    } else {
        let mut v = DMatrix::zeros(m, m);
        let mut phi = DVector::zeros(m);
        for (i, node) in raw.nodes().iter().enumerate() {
            raw.eval_into(node, &mut phi);
            v.row_mut(i).copy_from(&phi.transpose());
        }
        let svd = v.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > 1e12 {
            // Report the node dominating the near-null direction.
            let v_t = svd.v_t.as_ref().expect("right singular vectors");
            let last = v_t.nrows() - 1;
            let null_dir = v_t.row(last);
            let offender = null_dir
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(j, _)| j)
                .unwrap_or(0);
            return Err(Error::BasisDegeneracy(format!(
                "change-of-basis matrix is near-singular (cond {:.3e}); node {} at {:?} dominates the null direction",
                smax / smin,
                offender,
                raw.nodes()[offender]
            )));
        }
        let lu = v.clone().lu();
        let gamma = lu.solve(&psd.sqrt).ok_or_else(|| {
            Error::BasisDegeneracy("LU solve for the change of basis failed".into())
        })?;
        (v, gamma)
    };

    Ok(BasisModel {
        raw,
        kernel,
        gamma,
        v,
        clipped_kernel: psd.clipped,
        lower_bound: 0.0,
    })
}

impl BasisModel {
    /// Sets the truncation level `l` of the intensity prior; the feasible
    /// set of coefficients is `{theta : Gamma' theta >= l}`.
    pub fn with_lower_bound(mut self, lower_bound: f64) -> Self {
        self.lower_bound = lower_bound;
        self
    }

    pub fn m(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self) -> &RawBasis {
        &self.raw
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn domain(&self) -> &Domain {
        self.raw.domain()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        self.raw.nodes()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn v_matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Kernel matrix after eigenvalue clipping (`K'`), the covariance the
    /// transform actually reproduces at the nodes.
    pub fn clipped_kernel(&self) -> &DMatrix<f64> {
        &self.clipped_kernel
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// `Phi(x) = Gamma phi(x)`.
    pub fn features(&self, x: &[f64]) -> DVector<f64> {
        &self.gamma * self.raw.eval(x)
    }

    /// Rows `Phi(x)'` for a list of points.
    pub fn feature_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut phi = DVector::zeros(m);
        let mut out = DMatrix::zeros(points.len(), m);
        for (i, p) in points.iter().enumerate() {
            self.raw.eval_into(p, &mut phi);
            let col = &self.gamma * &phi;
            out.row_mut(i).copy_from(&col.transpose());
        }
        out
    }

    /// Intensity value `theta' Phi(x)`.
    pub fn eval_intensity(&self, theta: &DVector<f64>, x: &[f64]) -> f64 {
        self.features(x).dot(theta)
    }

    /// Integral pair for a single region: `(phi_A, psi_A = Gamma phi_A)`.
    pub fn region_integral(&self, region: &BoxRegion) -> Result<(DVector<f64>, DVector<f64>)> {
        self.region_integral_with_order(region, DEFAULT_GL_ORDER)
    }

    pub fn region_integral_with_order(
        &self,
        region: &BoxRegion,
        order: usize,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if !region.inside(self.domain()) {
            return Err(Error::Domain(format!(
                "region [{:?}, {:?}] not inside the domain",
                region.lower, region.upper
            )));
        }
        if !(region.volume() > 0.0) {
            return Err(Error::Parameter("region has zero volume".into()));
        }
        let raw = self.raw.integrate_region(region, order);
        let transformed = &self.gamma * &raw;
        Ok((raw, transformed))
    }
}

/// Precomputed `phi_A` and `psi_A = Gamma phi_A` for a list of regions.
#[derive(Debug, Clone)]
pub struct RegionIntegrals {
    raw: Vec<DVector<f64>>,
    transformed: Vec<DVector<f64>>,
}

impl RegionIntegrals {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// `phi_A` for region index `i` (ordering of the input list).
    pub fn raw(&self, i: usize) -> &DVector<f64> {
        &self.raw[i]
    }

    /// `psi_A` for region index `i`.
    pub fn transformed(&self, i: usize) -> &DVector<f64> {
        &self.transformed[i]
    }
}

/// Integrates the basis over every region, caching both `phi_A` and `psi_A`.
pub fn region_integrals(model: &BasisModel, regions: &[BoxRegion]) -> Result<RegionIntegrals> {
    let mut raw = Vec::with_capacity(regions.len());
    let mut transformed = Vec::with_capacity(regions.len());
    for region in regions {
        let (phi_a, psi_a) = model.region_integral(region)?;
        raw.push(phi_a);
        transformed.push(psi_a);
    }
    Ok(RegionIntegrals { raw, transformed })
}

/// Doubles the per-axis node count until the Gram matrix develops an
/// eigenvalue below `cutoff * lambda_max`, i.e. until the grid resolves the
/// kernel's spectrum; returns the total basis size at that point.
pub fn suggest_basis_size(kernel: &KernelSpec, domain: &Domain, cutoff: f64) -> Result<usize> {
    if !(cutoff > 0.0) {
        return Err(Error::Parameter("cutoff must be positive".into()));
    }
    const CAP: usize = 4096;
    let d = domain.dim() as u32;
    let mut per_axis = 2usize;
    loop {
        let total = per_axis.pow(d);
        if total > CAP {
            return Err(Error::Capacity(format!(
                "basis size search exceeded {CAP} before reaching cutoff {cutoff}"
            )));
        }
        let nodes = tensor_grid_nodes(domain, per_axis);
        let km = kernel_matrix(kernel, domain, &nodes)?;
        let eig = km.entries().clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < cutoff * max {
            return Ok(total);
        }
        per_axis *= 2;
    }
}
