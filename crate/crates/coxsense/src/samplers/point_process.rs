//! Inhomogeneous Poisson point process simulation on a discretized region.
//!
//! `N(A) ~ Poisson(Delta * int_A lambda)` with the integral taken by the
//! trapezoid rule on a regular grid; locations are placed by inverse-CDF
//! sampling along the grid (1-d) or by cell-multinomial draws with uniform
//! jitter inside the chosen cell (2-d).

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::kernels::BoxRegion;

#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessDraw {
    pub count: usize,
    pub locations: Vec<Vec<f64>>,
}

/// Simulates one sensing session of `region` for `duration` under `lambda`.
///
/// `grid_per_axis` controls the discretization (trapezoid integration and
/// location placement). Negative intensities are a model error.
pub fn simulate_point_process<F: Fn(&[f64]) -> f64>(
    lambda: F,
    region: &BoxRegion,
    duration: f64,
    grid_per_axis: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PointProcessDraw> {
    if !(duration >= 0.0) {
        return Err(Error::Parameter("duration must be nonnegative".into()));
    }
    if grid_per_axis < 2 {
        return Err(Error::Parameter("grid must have at least 2 points per axis".into()));
    }
    match region.dim() {
        1 => simulate_1d(lambda, region, duration, grid_per_axis, rng),
        2 => simulate_2d(lambda, region, duration, grid_per_axis, rng),
        d => Err(Error::Parameter(format!(
            "point process simulation supports d in {{1, 2}}, got {d}"
        ))),
    }
}

fn draw_count(mean: f64, rng: &mut ChaCha12Rng) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(mean)
        .map_err(|e| Error::Parameter(format!("invalid Poisson mean {mean}: {e}")))?;
    Ok(poisson.sample(rng) as usize)
}

fn simulate_1d<F: Fn(&[f64]) -> f64>(
    lambda: F,
    region: &BoxRegion,
    duration: f64,
    grid: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PointProcessDraw> {
    let (a, b) = (region.lower[0], region.upper[0]);
    let n = grid;
    let h = (b - a) / (n - 1) as f64;
    let mut values = DVector::zeros(n);
    for i in 0..n {
        let x = a + h * i as f64;
        let v = lambda(&[x]);
        if v < 0.0 {
            return Err(Error::Model(format!("negative intensity {v} at x = {x}")));
        }
        values[i] = v;
    }
    // Piecewise cumulative trapezoid masses.
    let mut cum = Vec::with_capacity(n);
    cum.push(0.0);
    for i in 1..n {
        let mass = 0.5 * (values[i - 1] + values[i]) * h;
        cum.push(cum[i - 1] + mass);
    }
    let total = *cum.last().expect("nonempty");
    let count = draw_count(total * duration, rng)?;
    let mut locations = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        // Segment containing u, then linear interpolation of the CDF.
        let mut idx = cum.partition_point(|c| *c <= u);
        idx = idx.clamp(1, n - 1);
        let seg_mass = cum[idx] - cum[idx - 1];
        let frac = if seg_mass > 0.0 {
            (u - cum[idx - 1]) / seg_mass
        } else {
            rng.random::<f64>()
        };
        let x = (a + h * ((idx - 1) as f64 + frac)).clamp(a, b);
        locations.push(vec![x]);
    }
    Ok(PointProcessDraw { count, locations })
}

fn simulate_2d<F: Fn(&[f64]) -> f64>(
    lambda: F,
    region: &BoxRegion,
    duration: f64,
    grid: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PointProcessDraw> {
    let (ax, bx) = (region.lower[0], region.upper[0]);
    let (ay, by) = (region.lower[1], region.upper[1]);
    let n = grid;
    let hx = (bx - ax) / (n - 1) as f64;
    let hy = (by - ay) / (n - 1) as f64;
    let mut values = vec![0.0f64; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let x = ax + hx * ix as f64;
            let y = ay + hy * iy as f64;
            let v = lambda(&[x, y]);
            if v < 0.0 {
                return Err(Error::Model(format!(
                    "negative intensity {v} at ({x}, {y})"
                )));
            }
            values[iy * n + ix] = v;
        }
    }
    // Cell masses from corner averages (2-d trapezoid).
    let cells = n - 1;
    let mut cum = Vec::with_capacity(cells * cells + 1);
    cum.push(0.0);
    for cy in 0..cells {
        for cx in 0..cells {
            let v00 = values[cy * n + cx];
            let v10 = values[cy * n + cx + 1];
            let v01 = values[(cy + 1) * n + cx];
            let v11 = values[(cy + 1) * n + cx + 1];
            let mass = 0.25 * (v00 + v10 + v01 + v11) * hx * hy;
            cum.push(cum.last().unwrap() + mass);
        }
    }
    let total = *cum.last().expect("nonempty");
    let count = draw_count(total * duration, rng)?;
    let mut locations = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        let mut idx = cum.partition_point(|c| *c <= u);
        idx = idx.clamp(1, cells * cells);
        let cell = idx - 1;
        let cx = cell % cells;
        let cy = cell / cells;
        let x = ax + hx * (cx as f64 + rng.random::<f64>());
        let y = ay + hy * (cy as f64 + rng.random::<f64>());
        locations.push(vec![x.clamp(ax, bx), y.clamp(ay, by)]);
    }
    Ok(PointProcessDraw { count, locations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn interval() -> BoxRegion {
        BoxRegion::new(vec![-1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn zero_intensity_never_fires() {
        let mut rng = stream(1, "pp", 0);
        for _ in 0..100 {
            let draw = simulate_point_process(|_| 0.0, &interval(), 5.0, 64, &mut rng).unwrap();
            assert_eq!(draw.count, 0);
        }
    }

    #[test]
    fn constant_intensity_count_calibration() {
        let c = 1.5;
        let delta = 2.0;
        let expected = 2.0 * c * delta; // |A| = 2
        let mut rng = stream(2, "pp", 0);
        let reps = 10_000;
        let mut counts = Vec::with_capacity(reps);
        for _ in 0..reps {
            let draw =
                simulate_point_process(|_| c, &interval(), delta, 128, &mut rng).unwrap();
            counts.push(draw.count as f64);
        }
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let se = (expected / reps as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs {expected} (3se = {})",
            3.0 * se
        );
        let var = counts.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / reps as f64;
        // Poisson variance equals the mean; allow a loose band.
        assert!((var - expected).abs() <= 6.0 * se * (2.0 * expected).sqrt());
    }

    #[test]
    fn locations_stay_inside_region_and_match_density() {
        // Linearly increasing density on [0, 1]: CDF = x^2.
        let region = BoxRegion::new(vec![0.0], vec![1.0]).unwrap();
        let mut rng = stream(3, "pp", 0);
        let draw =
            simulate_point_process(|x| 2.0 * x[0], &region, 5000.0, 512, &mut rng).unwrap();
        assert!(draw.count > 3000);
        let mut xs: Vec<f64> = draw.locations.iter().map(|p| p[0]).collect();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        xs.sort_by(f64::total_cmp);
        // One-sample KS against the x^2 CDF.
        let n = xs.len() as f64;
        let mut d = 0.0f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = x * x;
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        let crit = ((2.0f64 / 0.001).ln() / (2.0 * n)).sqrt();
        assert!(d <= crit, "KS statistic {d} above critical {crit}");
    }

    #[test]
    fn negative_intensity_is_model_error() {
        let mut rng = stream(4, "pp", 0);
        let err = simulate_point_process(|x| x[0], &interval(), 1.0, 32, &mut rng);
        assert!(matches!(err, Err(Error::Model(_))));
    }

    #[test]
    fn two_dimensional_counts_and_containment() {
        let region = BoxRegion::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let mut rng = stream(5, "pp", 0);
        let c = 3.0;
        let delta = 1.0;
        let expected = c * 2.0 * delta;
        let reps = 4000;
        let mut mean = 0.0;
        for _ in 0..reps {
            let draw = simulate_point_process(|_| c, &region, delta, 64, &mut rng).unwrap();
            for p in &draw.locations {
                assert!(region.contains(p));
            }
            mean += draw.count as f64;
        }
        mean /= reps as f64;
        let se = (expected / reps as f64).sqrt();
        assert!((mean - expected).abs() <= 4.0 * se, "mean {mean} vs {expected}");
    }
}
