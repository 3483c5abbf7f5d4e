//! Quadrature helpers: Gauss-Legendre rules over boxes and trapezoid grids.

use gauss_quad::GaussLegendre;
use std::num::NonZeroUsize;

use crate::kernels::BoxRegion;

/// Default Gauss-Legendre order per axis for region integrals.
pub const DEFAULT_GL_ORDER: usize = 32;

/// Nodes and weights of an order-`n` Gauss-Legendre rule on `[a, b]`.
pub fn gl_rule(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).expect("nonzero order"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter()
        .map(|(node, weight)| (mid + half * node, half * weight))
        .collect()
}

/// Integrates `f` over an axis-aligned box by a tensor Gauss-Legendre rule.
pub fn gl_integrate_box<F: FnMut(&[f64]) -> f64>(region: &BoxRegion, order: usize, mut f: F) -> f64 {
    let d = region.dim();
    let rules: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| gl_rule(order, region.lower[k], region.upper[k]))
        .collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0f64; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            let (x, wk) = rules[k][idx[k]];
            point[k] = x;
            w *= wk;
        }
        total += w * f(&point);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return total;
            }
        }
    }
}

/// Cell-center grid over a box: `n` points per axis, each at the center of a
/// uniform cell. Points are strictly interior, so every point belongs to
/// exactly one region of a tiling.
pub fn cell_center_grid(region: &BoxRegion, per_axis: usize) -> Vec<Vec<f64>> {
    let d = region.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (region.lower[k], region.upper[k]);
            let h = (hi - lo) / per_axis as f64;
            (0..per_axis).map(|i| lo + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let mut points = Vec::with_capacity(per_axis.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        points.push((0..d).map(|k| axes[k][idx[k]]).collect());
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return points;
            }
        }
    }
}

/// Volume of one cell of the cell-center grid.
pub fn cell_volume(region: &BoxRegion, per_axis: usize) -> f64 {
    region.volume() / (per_axis as f64).powi(region.dim() as i32)
}
