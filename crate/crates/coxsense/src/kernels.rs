//! Covariance kernels on compact box domains.
//!
//! Supported families: squared exponential `exp(-||x-y||^2 / g^2)` (note: no
//! factor 2 in the denominator — conventions differ across texts, this one is
//! fixed throughout the crate), Laplace `exp(-||x-y|| / g)`, the non-stationary
//! Gibbs kernel `exp(-||x-y||^2 / (g(x)^2 + g(y)^2))` with a varying
//! lengthscale field, and products of per-axis squared exponentials. Any
//! family can carry a multiplicative indicator weight `w(x) w(y)` with
//! `w: D -> [0, 1]`, typically a tabulated geographic feature.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Compact axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Parameter(format!(
                "domain bounds must be non-empty and of equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::Parameter(format!(
                    "domain requires lower[{i}] < upper[{i}], got {lo} >= {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }

    /// The whole domain as a region.
    pub fn as_region(&self) -> BoxRegion {
        BoxRegion {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point {x:?} outside domain [{:?}, {:?}]",
                self.lower, self.upper
            )))
        }
    }
}

/// Axis-aligned sub-box of a domain; the geometry of a sensing region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Domain::new(lower.clone(), upper.clone())?;
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }

    pub fn inside(&self, domain: &Domain) -> bool {
        self.dim() == domain.dim()
            && self
                .lower
                .iter()
                .zip(domain.lower())
                .all(|(a, b)| *a >= *b)
            && self.upper.iter().zip(domain.upper()).all(|(a, b)| *a <= *b)
    }
}

/// Rectilinear lookup table with nearest-neighbor evaluation.
///
/// Values are stored row-major with x varying fastest, matching the CSV
/// layout `x[,y],value` with one row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    xs: Vec<f64>,
    ys: Vec<f64>, // empty in one dimension
    values: Vec<f64>,
}

impl GridTable {
    pub fn new_1d(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::Parameter(
                "grid table needs at least two points and matching value count".into(),
            ));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("grid axis must be strictly increasing".into()));
        }
        Ok(Self {
            xs,
            ys: Vec::new(),
            values,
        })
    }

    pub fn new_2d(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 || values.len() != xs.len() * ys.len() {
            return Err(Error::Parameter(format!(
                "2-d grid table needs nx*ny values, got {} for {}x{}",
                values.len(),
                xs.len(),
                ys.len()
            )));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) || !ys.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("grid axes must be strictly increasing".into()));
        }
        Ok(Self { xs, ys, values })
    }

    /// Loads a grid from CSV with header `x,value` or `x,y,value`.
    ///
    /// Rows must enumerate the full tensor grid, row-major with x fastest.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let has_y = {
            let headers = reader.headers()?;
            match headers.len() {
                2 => false,
                3 => true,
                n => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected header x[,y],value, got {n} columns"),
                    })
                }
            }
        };
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2; // header is line 1
            let record = record?;
            let parse = |field: usize| -> Result<f64> {
                record
                    .get(field)
                    .ok_or(Error::Parse {
                        line,
                        message: "missing field".into(),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })
            };
            let x = parse(0)?;
            let (y, v) = if has_y {
                (parse(1)?, parse(2)?)
            } else {
                (0.0, parse(1)?)
            };
            rows.push((x, y, v));
        }
        if rows.is_empty() {
            return Err(Error::Parameter("empty grid file".into()));
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        if !has_y {
            let mut values = vec![0.0; xs.len()];
            if rows.len() != xs.len() {
                return Err(Error::Parameter("duplicate x values in 1-d grid".into()));
            }
            for (x, _, v) in &rows {
                let i = xs.partition_point(|a| a < x) % xs.len();
                values[i] = *v;
            }
            return Self::new_1d(xs, values);
        }
        let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        ys.sort_by(|a, b| a.total_cmp(b));
        ys.dedup();
        if rows.len() != xs.len() * ys.len() {
            return Err(Error::Parameter(format!(
                "grid rows ({}) do not cover the {}x{} tensor grid",
                rows.len(),
                xs.len(),
                ys.len()
            )));
        }
        let mut values = vec![f64::NAN; xs.len() * ys.len()];
        for (x, y, v) in &rows {
            let ix = xs.partition_point(|a| a < x) % xs.len();
            let iy = ys.partition_point(|a| a < y) % ys.len();
            values[iy * xs.len() + ix] = *v;
        }
        Self::new_2d(xs, ys, values)
    }

    fn nearest_index(axis: &[f64], v: f64) -> usize {
        let i = axis.partition_point(|a| *a < v);
        if i == 0 {
            0
        } else if i == axis.len() {
            axis.len() - 1
        } else if (v - axis[i - 1]) <= (axis[i] - v) {
            i - 1
        } else {
            i
        }
    }

    /// Nearest-neighbor lookup.
    pub fn nearest(&self, x: &[f64]) -> f64 {
        let ix = Self::nearest_index(&self.xs, x[0]);
        if self.ys.is_empty() {
            self.values[ix]
        } else {
            let iy = Self::nearest_index(&self.ys, x[1]);
            self.values[iy * self.xs.len() + ix]
        }
    }
}

/// Scalar function of position used for lengthscale fields and indicator weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarField {
    Constant(f64),
    /// `intercept + slopes . x`
    Affine { intercept: f64, slopes: Vec<f64> },
    /// Tabulated grid with nearest-neighbor lookup.
    Grid(GridTable),
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Affine { intercept, slopes } => {
                intercept + slopes.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            }
            ScalarField::Grid(table) => table.nearest(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `exp(-||x-y||^2 / lengthscale^2)`
    SquaredExponential { lengthscale: f64 },
    /// `exp(-||x-y|| / lengthscale)`
    Laplace { lengthscale: f64 },
    /// `exp(-||x-y||^2 / (g(x)^2 + g(y)^2))` with a lengthscale field `g`.
    Gibbs { lengthscale: ScalarField },
    /// Product over axes of `exp(-(x_i-y_i)^2 / lengthscale_i^2)`.
    ProductOf1d { lengthscales: Vec<f64> },
}

/// A covariance function `variance * w(x) w(y) * base(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub weight: Option<ScalarField>,
    pub variance: f64,
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64) -> Self {
        Self {
            family: KernelFamily::SquaredExponential { lengthscale },
            weight: None,
            variance: 1.0,
        }
    }

    pub fn laplace(lengthscale: f64) -> Self {
        Self {
            family: KernelFamily::Laplace { lengthscale },
            weight: None,
            variance: 1.0,
        }
    }

    pub fn gibbs(lengthscale: ScalarField) -> Self {
        Self {
            family: KernelFamily::Gibbs { lengthscale },
            weight: None,
            variance: 1.0,
        }
    }

    pub fn product_of_1d(lengthscales: Vec<f64>) -> Self {
        Self {
            family: KernelFamily::ProductOf1d { lengthscales },
            weight: None,
            variance: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: ScalarField) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        self.variance = variance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) {
            return Err(Error::Parameter(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        match &self.family {
            KernelFamily::SquaredExponential { lengthscale }
            | KernelFamily::Laplace { lengthscale } => {
                if !(*lengthscale > 0.0) {
                    return Err(Error::Parameter(format!(
                        "lengthscale must be positive, got {lengthscale}"
                    )));
                }
            }
            KernelFamily::Gibbs { .. } => {}
            KernelFamily::ProductOf1d { lengthscales } => {
                if lengthscales.is_empty() || lengthscales.iter().any(|g| !(*g > 0.0)) {
                    return Err(Error::Parameter(
                        "product-of-1d lengthscales must be positive and non-empty".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the kernel, checking both points against the domain.
    pub fn eval(&self, domain: &Domain, x: &[f64], y: &[f64]) -> Result<f64> {
        domain.check_point(x)?;
        domain.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq_dist = || -> f64 { x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum() };
        let base = match &self.family {
            KernelFamily::SquaredExponential { lengthscale } => {
                (-sq_dist() / (lengthscale * lengthscale)).exp()
            }
            KernelFamily::Laplace { lengthscale } => (-sq_dist().sqrt() / lengthscale).exp(),
            KernelFamily::Gibbs { lengthscale } => {
                let gx = lengthscale.eval(x);
                let gy = lengthscale.eval(y);
                (-sq_dist() / (gx * gx + gy * gy)).exp()
            }
            KernelFamily::ProductOf1d { lengthscales } => x
                .iter()
                .zip(y)
                .zip(lengthscales.iter().cycle())
                .map(|((a, b), g)| (-((a - b) * (a - b)) / (g * g)).exp())
                .product(),
        };
        match &self.weight {
            Some(w) => self.variance * w.eval(x) * w.eval(y) * base,
            None => self.variance * base,
        }
    }
}

/// Kernel Gram matrix `K_ij = k(t_i, t_j)` together with its nodes.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    nodes: Vec<Vec<f64>>,
}

impl KernelMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Builds the Gram matrix on distinct nodes inside the domain.
///
/// Each pair is evaluated once and mirrored, so the result is symmetric
/// exactly (bitwise).
pub fn kernel_matrix(spec: &KernelSpec, domain: &Domain, nodes: &[Vec<f64>]) -> Result<KernelMatrix> {
    spec.validate()?;
    if nodes.is_empty() {
        return Err(Error::Parameter("kernel matrix needs at least one node".into()));
    }
    for node in nodes {
        domain.check_point(node)?;
    }
    // Sort indices lexicographically; equal neighbors are duplicates.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        nodes[a]
            .iter()
            .zip(&nodes[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if nodes[w[0]] == nodes[w[1]] {
            return Err(Error::DegenerateNodes(format!(
                "nodes {} and {} coincide at {:?}",
                w[0], w[1], nodes[w[0]]
            )));
        }
    }
    let m = nodes.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = spec.eval_unchecked(&nodes[i], &nodes[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        entries: k,
        nodes: nodes.to_vec(),
    })
}

/// Symmetric PSD square root with eigenvalue clipping.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    /// Symmetric `S` with `S * S = clipped`.
    pub sqrt: DMatrix<f64>,
    /// The input matrix with eigenvalues clipped to `[jitter, inf)`.
    pub clipped: DMatrix<f64>,
    /// Clipped eigenvalues, ascending.
    pub eigenvalues: DVector<f64>,
}

/// Default clipping level `1e-10 * trace(K)`; keeps the square root well
/// defined when smooth kernels make `K` numerically rank-deficient.
pub fn default_jitter(k: &DMatrix<f64>) -> f64 {
    1e-10 * k.trace()
}

/// Computes the symmetric square root of `K` after clipping eigenvalues at
/// `jitter`. Indefiniteness is handled by the clip; no error path.
pub fn psd_sqrt(k: &DMatrix<f64>, jitter: f64) -> PsdSqrt {
    let eig = k.clone().symmetric_eigen();
    let mut clipped_vals = eig.eigenvalues.clone();
    for v in clipped_vals.iter_mut() {
        if *v < jitter {
            *v = jitter;
        }
    }
    let q = &eig.eigenvectors;
    let sqrt_vals = clipped_vals.map(f64::sqrt);
    let mut sqrt = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
    let mut clipped = q * DMatrix::from_diagonal(&clipped_vals) * q.transpose();
    // Symmetrize to remove last-ulp asymmetry from the triple product.
    symmetrize(&mut sqrt);
    symmetrize(&mut clipped);
    let mut vals: Vec<f64> = clipped_vals.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    PsdSqrt {
        sqrt,
        clipped,
        eigenvalues: DVector::from_vec(vals),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Equispaced nodes over the domain, endpoints included, `per_axis^d` total.
pub fn tensor_grid_nodes(domain: &Domain, per_axis: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
            if per_axis == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut nodes = Vec::with_capacity(per_axis.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        nodes.push((0..d).map(|k| axes[k][idx[k]]).collect());
        // Odometer increment, x fastest.
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return nodes;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_interval() -> Domain {
        Domain::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn se_identity_and_direct_value() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.1);
        assert_eq!(k.eval(&d, &[0.0], &[0.0]).unwrap(), 1.0);
        let v = k.eval(&d, &[0.0], &[0.1]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn indicator_zero_kills_kernel() {
        let d = unit_interval();
        // w(x) = 1 for x >= 0, else 0.
        let table = GridTable::new_1d(vec![-1.0, -0.001, 0.001, 1.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let k = KernelSpec::squared_exponential(0.5).with_weight(ScalarField::Grid(table));
        for y in [-0.9, -0.2, 0.3, 0.9] {
            assert_eq!(k.eval(&d, &[-0.5], &[y]).unwrap(), 0.0);
        }
        assert!(k.eval(&d, &[0.5], &[0.6]).unwrap() > 0.0);
    }

    #[test]
    fn point_outside_domain_errors() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.1);
        assert!(matches!(k.eval(&d, &[1.5], &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_node_matrix() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.3).with_variance(2.0);
        let km = kernel_matrix(&k, &d, &[vec![0.25]]).unwrap();
        assert_eq!(km.len(), 1);
        assert_relative_eq!(km.entries()[(0, 0)], 2.0);
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.3);
        let err = kernel_matrix(&k, &d, &[vec![0.1], vec![-0.4], vec![0.1]]);
        assert!(matches!(err, Err(Error::DegenerateNodes(_))));
    }

    #[test]
    fn huge_lengthscale_is_constant_kernel() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(1e6);
        let nodes = tensor_grid_nodes(&d, 8);
        let km = kernel_matrix(&k, &d, &nodes).unwrap();
        for v in km.entries().iter() {
            assert!((v - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn se_gram_is_psd_up_to_roundoff() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.1);
        let nodes = tensor_grid_nodes(&d, 64);
        let km = kernel_matrix(&k, &d, &nodes).unwrap();
        let eig = km.entries().clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        assert!(min >= -1e-8 * km.entries().trace(), "min eigenvalue {min}");
    }

    #[test]
    fn random_node_gram_psd_up_to_m256() {
        use rand::{Rng, SeedableRng};
        let d = unit_interval();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for &m in &[16usize, 97, 256] {
            let mut nodes: Vec<Vec<f64>> = Vec::new();
            while nodes.len() < m {
                let x = rng.random_range(-1.0..1.0);
                nodes.push(vec![x]);
            }
            let k = KernelSpec::squared_exponential(0.2);
            let km = kernel_matrix(&k, &d, &nodes).unwrap();
            let eig = km.entries().clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() >= -1e-8 * km.entries().trace());
        }
    }

    #[test]
    fn psd_sqrt_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(3, 3);
        let s = psd_sqrt(&id, 0.0);
        assert_relative_eq!(s.sqrt, id, max_relative = 1e-12);

        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = psd_sqrt(&diag, 0.0);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_relative_eq!(s.sqrt, expected, max_relative = 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_clipped_matrix() {
        let d = unit_interval();
        let k = KernelSpec::squared_exponential(0.5);
        let nodes = tensor_grid_nodes(&d, 16);
        let km = kernel_matrix(&k, &d, &nodes).unwrap();
        let s = psd_sqrt(km.entries(), default_jitter(km.entries()));
        let recon = &s.sqrt * &s.sqrt;
        let err = (&recon - &s.clipped).abs().max();
        assert!(err <= 1e-8, "reconstruction error {err}");
        // Symmetry is exact after symmetrization.
        let asym = (&s.sqrt - s.sqrt.transpose()).abs().max();
        assert!(asym <= 1e-12);
        assert!(s.eigenvalues.min() >= default_jitter(km.entries()));
    }

    #[test]
    fn gibbs_with_constant_field_matches_se() {
        let d = unit_interval();
        let gamma: f64 = 0.3;
        let se = KernelSpec::squared_exponential(gamma);
        let gibbs = KernelSpec::gibbs(ScalarField::Constant(gamma / 2.0f64.sqrt()));
        for (x, y) in [(-0.8, -0.1), (0.0, 0.05), (0.3, 0.9)] {
            let a = se.eval(&d, &[x], &[y]).unwrap();
            let b = gibbs.eval(&d, &[x], &[y]).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn grid_table_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "x,y,value\n0,0,1\n1,0,2\n0,1,3\n1,1,4\n").unwrap();
        let t = GridTable::from_csv(&path).unwrap();
        assert_eq!(t.nearest(&[0.1, 0.1]), 1.0);
        assert_eq!(t.nearest(&[0.9, 0.2]), 2.0);
        assert_eq!(t.nearest(&[0.2, 0.8]), 3.0);
        assert_eq!(t.nearest(&[2.0, 2.0]), 4.0);
    }

    #[test]
    fn grid_table_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "x,value\n0,1\nbad,2\n").unwrap();
        match GridTable::from_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn kernel_symmetry_is_exact(
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
            gamma in 0.05f64..2.0,
            choice in 0usize..4,
        ) {
            let d = unit_interval();
            let spec = match choice {
                0 => KernelSpec::squared_exponential(gamma),
                1 => KernelSpec::laplace(gamma),
                2 => KernelSpec::gibbs(ScalarField::Affine { intercept: gamma, slopes: vec![0.04] }),
                _ => KernelSpec::product_of_1d(vec![gamma]),
            };
            let a = spec.eval(&d, &[x], &[y]).unwrap();
            let b = spec.eval(&d, &[y], &[x]).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn kernel_diagonal_bounded_by_variance(x in -1.0f64..1.0, w in 0.0f64..1.0) {
            let d = unit_interval();
            let spec = KernelSpec::squared_exponential(0.5)
                .with_weight(ScalarField::Constant(w));
            let v = spec.eval(&d, &[x], &[x]).unwrap();
            prop_assert!(v <= 1.0 + 1e-15);
            prop_assert!((v - w * w).abs() <= 1e-15);
        }
    }
}
