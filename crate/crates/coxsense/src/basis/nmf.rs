//! Minimal-description positive basis via non-negative matrix factorization.
//!
//! Sample paths of the truncated Gaussian process are tabulated on a grid
//! (columns of `F`), and `min ||F - L Y||_F` over `L, Y >= 0` with
//! grid-normalized columns of `L` yields basis functions adapted to the
//! kernel: rough kernels produce more, narrower bumps; non-stationary
//! kernels concentrate bumps where the lengthscale is short.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{default_jitter, kernel_matrix, psd_sqrt, Domain, KernelSpec};
use crate::rng::stream;

use super::RawBasis;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfOptions {
    /// Grid points per axis (0 = 256 in 1-d, 64 in 2-d).
    pub n_grid: usize,
    /// Number of truncated-GP sample paths (0 = `20 * m`).
    pub n_samples: usize,
    pub seed: u64,
    /// Total rejection-sampling draws allowed before giving up.
    pub max_rejection_draws: usize,
    /// Outer HALS iterations.
    pub max_iterations: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self {
            n_grid: 0,
            n_samples: 0,
            seed: 0,
            max_rejection_draws: 100_000,
            max_iterations: 500,
        }
    }
}

/// Solver diagnostics kept alongside a table-backed basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfReport {
    /// `||F - LY||_F / ||F||_F` at the last iteration.
    pub relative_error: f64,
    /// Objective `||F - LY||_F^2` after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Columns whose second-highest distinct peak is within 1% of the max;
    /// their node assignment is ambiguous.
    pub flagged_columns: Vec<usize>,
    /// Accepted / total draws of the rejection sampler.
    pub accepted_draws: usize,
    pub total_draws: usize,
    /// Quadrature weight per grid point used for column normalization.
    pub grid_weight: f64,
}

/// Draws `count` truncated-GP paths (everywhere nonnegative) on the grid.
///
/// Returns an `n x count` matrix with one path per column.
fn sample_truncated_paths(
    kernel: &KernelSpec,
    domain: &Domain,
    grid: &[Vec<f64>],
    count: usize,
    budget: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(DMatrix<f64>, usize, usize)> {
    let km = kernel_matrix(kernel, domain, grid)?;
    let sqrt = psd_sqrt(km.entries(), default_jitter(km.entries())).sqrt;
    let n = grid.len();
    let mut paths = DMatrix::zeros(n, count);
    let mut accepted = 0;
    let mut total = 0;
    let mut z = DVector::zeros(n);
    while accepted < count {
        if total >= budget {
            return Err(Error::SamplingFailure(format!(
                "accepted only {accepted}/{count} nonnegative GP paths in {budget} draws; \
                 raise the retry budget, increase the lower bound, or use a smoother kernel"
            )));
        }
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        total += 1;
        let f = &sqrt * &z;
        if f.iter().all(|v| *v >= 0.0) {
            paths.column_mut(accepted).copy_from(&f);
            accepted += 1;
        }
    }
    Ok((paths, accepted, total))
}

/// Hierarchical alternating least squares with column normalization and a
/// multiplicative-update fallback; the objective never increases.
///
/// Returns `(L, Y, objective_trace)`.
pub(crate) fn factorize(
    f: &DMatrix<f64>,
    m: usize,
    iterations: usize,
    grid_weight: f64,
    rng: &mut ChaCha12Rng,
) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let n = f.nrows();
    let s = f.ncols();
    let scale = (f.iter().map(|v| v * v).sum::<f64>() / (n * s) as f64).sqrt();
    let mut l = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() * scale.max(1e-12));
    let mut y = DMatrix::from_fn(m, s, |_, _| rng.random::<f64>());
    normalize_columns(&mut l, &mut y, grid_weight, rng);

    let objective = |l: &DMatrix<f64>, y: &DMatrix<f64>| -> f64 {
        let r = f - l * y;
        r.iter().map(|v| v * v).sum::<f64>()
    };

    let mut trace = Vec::with_capacity(iterations);
    let mut current = objective(&l, &y);
    for _ in 0..iterations {
        let prev_l = l.clone();
        let prev_y = y.clone();

        hals_sweep(f, &mut l, &mut y);
        normalize_columns(&mut l, &mut y, grid_weight, rng);
        let mut obj = objective(&l, &y);

        if obj > current * (1.0 + 1e-12) {
            // HALS sweep went uphill numerically; redo the step with the
            // monotone multiplicative rule from the previous iterate.
            l = prev_l;
            y = prev_y;
            multiplicative_sweep(f, &mut l, &mut y);
            normalize_columns(&mut l, &mut y, grid_weight, rng);
            obj = objective(&l, &y);
            if obj > current {
                obj = current; // fall back to reporting the retained value
            }
        }
        current = obj;
        trace.push(current);
    }
    (l, y, trace)
}

fn hals_sweep(f: &DMatrix<f64>, l: &mut DMatrix<f64>, y: &mut DMatrix<f64>) {
    let m = l.ncols();
    // Update L columns: A = F Y', B = Y Y'.
    let a = f * y.transpose();
    let b = y.clone() * y.transpose();
    for j in 0..m {
        let bjj = b[(j, j)];
        if bjj <= 1e-14 {
            continue;
        }
        let lb = &*l * b.column(j);
        for i in 0..l.nrows() {
            let v = l[(i, j)] + (a[(i, j)] - lb[i]) / bjj;
            l[(i, j)] = v.max(0.0);
        }
    }
    // Update Y rows: C = L' F, D = L' L.
    let c = l.transpose() * f;
    let d = l.transpose() * &*l;
    for j in 0..m {
        let djj = d[(j, j)];
        if djj <= 1e-14 {
            continue;
        }
        let dy = d.row(j) * &*y;
        for k in 0..y.ncols() {
            let v = y[(j, k)] + (c[(j, k)] - dy[(0, k)]) / djj;
            y[(j, k)] = v.max(0.0);
        }
    }
}

fn multiplicative_sweep(f: &DMatrix<f64>, l: &mut DMatrix<f64>, y: &mut DMatrix<f64>) {
    const EPS: f64 = 1e-12;
    let num_l = f * y.transpose();
    let den_l = &*l * (y.clone() * y.transpose());
    for (v, (nu, de)) in l.iter_mut().zip(num_l.iter().zip(den_l.iter())) {
        *v *= nu / (de + EPS);
    }
    let num_y = l.transpose() * f;
    let den_y = (l.transpose() * &*l) * &*y;
    for (v, (nu, de)) in y.iter_mut().zip(num_y.iter().zip(den_y.iter())) {
        *v *= nu / (de + EPS);
    }
}

/// Rescales columns of `L` to unit grid-weighted 2-norm, compensating in the
/// rows of `Y` so the product is unchanged. Dead columns are re-seeded with
/// a flat profile and a zeroed `Y` row (objective unaffected).
fn normalize_columns(l: &mut DMatrix<f64>, y: &mut DMatrix<f64>, grid_weight: f64, rng: &mut ChaCha12Rng) {
    let n = l.nrows();
    for j in 0..l.ncols() {
        let norm = (l.column(j).iter().map(|v| v * v).sum::<f64>() * grid_weight).sqrt();
        if norm <= 1e-14 {
            let fill = 1.0 / ((n as f64) * grid_weight).sqrt();
            for i in 0..n {
                l[(i, j)] = fill * (0.5 + rng.random::<f64>());
            }
            let renorm = (l.column(j).iter().map(|v| v * v).sum::<f64>() * grid_weight).sqrt();
            l.column_mut(j).scale_mut(1.0 / renorm);
            for k in 0..y.ncols() {
                y[(j, k)] = 0.0;
            }
        } else {
            l.column_mut(j).scale_mut(1.0 / norm);
            y.row_mut(j).scale_mut(norm);
        }
    }
}

/// Grid argmax (first maximum) and the flag for a near-tied second peak.
///
/// A "distinct" peak is a grid point at Chebyshev distance >= 2 cells from
/// the argmax; a second peak within 1% of the max flags the column.
fn column_node(
    column: nalgebra::DVectorView<'_, f64>,
    axes: &[Vec<f64>],
) -> (usize, bool) {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in column.iter().enumerate() {
        if *v > best_val {
            best_val = *v;
            best = i;
        }
    }
    let coords = |mut flat: usize| -> Vec<usize> {
        axes.iter()
            .map(|axis| {
                let c = flat % axis.len();
                flat /= axis.len();
                c
            })
            .collect()
    };
    let best_coords = coords(best);
    let mut flagged = false;
    for (i, v) in column.iter().enumerate() {
        if *v >= 0.99 * best_val && i != best {
            let c = coords(i);
            let cheb = c
                .iter()
                .zip(&best_coords)
                .map(|(a, b)| a.abs_diff(*b))
                .max()
                .unwrap_or(0);
            if cheb >= 2 {
                flagged = true;
                break;
            }
        }
    }
    (best, flagged)
}

/// Builds the minimal-description positive basis for a kernel.
///
/// Solves the sampled NMF relaxation and tabulates the `m` columns of `L`
/// as basis functions (linear interpolation between grid points); nodes are
/// the column peaks, and columns are ordered by node position.
pub fn build_nmf_basis(
    kernel: &KernelSpec,
    domain: &Domain,
    m: usize,
    options: &NmfOptions,
) -> Result<RawBasis> {
    kernel.validate()?;
    if m == 0 {
        return Err(Error::Parameter("basis size must be positive".into()));
    }
    let d = domain.dim();
    let per_axis = if options.n_grid > 0 {
        options.n_grid
    } else if d == 1 {
        256
    } else {
        64
    };
    let n_total = per_axis.pow(d as u32);
    if m > n_total {
        return Err(Error::Parameter(format!(
            "basis size {m} exceeds grid size {n_total}"
        )));
    }
    let n_samples = if options.n_samples > 0 {
        options.n_samples
    } else {
        20 * m
    };
    if n_samples < m {
        return Err(Error::Parameter(format!(
            "need at least m = {m} sample paths, got {n_samples}"
        )));
    }

    let grid = crate::kernels::tensor_grid_nodes(domain, per_axis);
    let grid_weight = domain.volume() / n_total as f64;

    let mut rng = stream(options.seed, "nmf", 0);
    let (f, accepted, total) = sample_truncated_paths(
        kernel,
        domain,
        &grid,
        n_samples,
        options.max_rejection_draws,
        &mut rng,
    )?;
    let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();

    let (l, _y, objective_trace) = factorize(&f, m, options.max_iterations, grid_weight, &mut rng);

    // Nodes at column peaks, columns reordered by node position.
    let mut entries: Vec<(usize, Vec<f64>, bool)> = (0..m)
        .map(|j| {
            let (flat, flagged) = column_node(l.column(j), &grid_axes(domain, per_axis));
            (j, grid[flat].clone(), flagged)
        })
        .collect();
    entries.sort_by(|a, b| {
        a.1.iter()
            .zip(&b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut columns = DMatrix::zeros(n_total, m);
    let mut nodes = Vec::with_capacity(m);
    let mut flagged_columns = Vec::new();
    for (slot, (orig, node, flagged)) in entries.into_iter().enumerate() {
        columns.column_mut(slot).copy_from(&l.column(orig));
        nodes.push(node);
        if flagged {
            flagged_columns.push(slot);
        }
    }

    let relative_error = objective_trace
        .last()
        .map(|o| o.sqrt() / f_norm)
        .unwrap_or(1.0);
    let report = NmfReport {
        relative_error,
        objective_trace,
        flagged_columns,
        accepted_draws: accepted,
        total_draws: total,
        grid_weight,
    };
    RawBasis::from_table_with_report(
        domain.clone(),
        grid_axes(domain, per_axis),
        columns,
        nodes,
        report,
    )
}

fn grid_axes(domain: &Domain, per_axis: usize) -> Vec<Vec<f64>> {
    (0..domain.dim())
        .map(|k| {
            let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
            (0..per_axis)
                .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                .collect()
        })
        .collect()
}
