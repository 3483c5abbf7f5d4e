//! Ground truths, evaluation metrics, and multi-seed suite orchestration.
//!
//! Experiments follow the fit-and-test scheme: a ground-truth intensity
//! (analytic or fitted to a full event record) drives the simulator, and
//! sensing algorithms are scored against it by count regret, inference
//! regret, and level-set F1. Suites run (algorithm, seed) cells in parallel
//! and aggregate per-round 25/50/75% quantiles.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::basis::BasisModel;
use crate::config::{ExperimentConfig, SuiteConfig};
use crate::error::{Error, Result};
use crate::kernels::{BoxRegion, Domain};
use crate::posterior::{Observation, PosteriorModel};
use crate::quad::{cell_center_grid, gl_integrate_box};
use crate::sensing::{run_protocol, ActionSet, CostModel, EpisodeRecord};

/// The toy rate `4 exp(-(x+1)) sin^2(2 pi x)` on `[-1, 1]`.
pub fn toy_intensity(x: f64) -> f64 {
    4.0 * (-(x + 1.0)).exp() * (2.0 * std::f64::consts::PI * x).sin().powi(2)
}

/// Smooth two-bump rate used by the level-set benchmarks: baseline 0.1 with
/// Gaussian bumps of height 1.9 at ±0.5 (width 0.18), maximum about 2.0.
pub fn two_bump_intensity(x: f64) -> f64 {
    let bump = |c: f64| (-((x - c) / 0.18).powi(2)).exp();
    0.1 + 1.9 * (bump(-0.5) + bump(0.5))
}

#[derive(Debug, Clone)]
enum IntensitySource {
    Toy,
    TwoBump,
    Constant(f64),
    /// Tabulated on endpoint-inclusive axes, multilinear interpolation.
    Table {
        axes: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
}

impl IntensitySource {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            IntensitySource::Toy => toy_intensity(x[0]),
            IntensitySource::TwoBump => two_bump_intensity(x[0]),
            IntensitySource::Constant(c) => *c,
            IntensitySource::Table { axes, values } => {
                let d = axes.len();
                let mut cell = Vec::with_capacity(d);
                for k in 0..d {
                    let axis = &axes[k];
                    let i = axis.partition_point(|a| *a <= x[k]).clamp(1, axis.len() - 1);
                    let (a, b) = (axis[i - 1], axis[i]);
                    cell.push((i - 1, ((x[k] - a) / (b - a)).clamp(0.0, 1.0)));
                }
                let strides: Vec<usize> = {
                    let mut s = vec![1usize; d];
                    for k in 1..d {
                        s[k] = s[k - 1] * axes[k - 1].len();
                    }
                    s
                };
                let mut acc = 0.0;
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
                    acc += weight * values[row];
                }
                acc
            }
        }
    }
}

/// Ground-truth intensity with its evaluation-grid tabulation and optimum.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    source: IntensitySource,
    grid: Vec<Vec<f64>>,
    values: Vec<f64>,
    max_value: f64,
    argmax: Vec<f64>,
    /// Basis coefficients when the truth came from a fit.
    coefficients: Option<DVector<f64>>,
}

impl GroundTruth {
    fn from_source(source: IntensitySource, domain: &Domain, grid_res: usize) -> Result<Self> {
        let grid = cell_center_grid(&domain.as_region(), grid_res);
        let values: Vec<f64> = grid.iter().map(|x| source.eval(x)).collect();
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Model(
                "ground-truth intensity must be finite and nonnegative".into(),
            ));
        }
        let (idx, max_value) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, 0.0));
        Ok(Self {
            source,
            argmax: grid[idx].clone(),
            grid,
            values,
            max_value,
            coefficients: None,
        })
    }

    /// Analytic ground truths registered by name: `toy`, `two-bump`,
    /// `constant:<c>`; `file:<path>` loads a fitted truth.
    pub fn from_named(name: &str, domain: &Domain, grid_res: usize) -> Result<Self> {
        if let Some(rest) = name.strip_prefix("constant:") {
            let c: f64 = rest.parse().map_err(|_| {
                Error::Validation(format!("bad constant ground truth value {rest:?}"))
            })?;
            if !(c >= 0.0) {
                return Err(Error::Validation("constant intensity must be >= 0".into()));
            }
            return Self::from_source(IntensitySource::Constant(c), domain, grid_res);
        }
        if let Some(path) = name.strip_prefix("file:") {
            return Self::from_file(Path::new(path), domain, grid_res);
        }
        match name {
            "toy" => {
                if domain.dim() != 1 {
                    return Err(Error::Validation("toy ground truth is one-dimensional".into()));
                }
                Self::from_source(IntensitySource::Toy, domain, grid_res)
            }
            "two-bump" => {
                if domain.dim() != 1 {
                    return Err(Error::Validation(
                        "two-bump ground truth is one-dimensional".into(),
                    ));
                }
                Self::from_source(IntensitySource::TwoBump, domain, grid_res)
            }
            other => Err(Error::Validation(format!(
                "unknown ground truth {other:?}; expected toy, two-bump, constant:<c>, or file:<path>"
            ))),
        }
    }

    pub fn from_config(config: &ExperimentConfig, domain: &Domain) -> Result<Self> {
        Self::from_named(&config.ground_truth, domain, config.eval_grid_resolution())
    }

    /// Loads a truth persisted by [`GroundTruth::write_file`].
    pub fn from_file(path: &Path, domain: &Domain, grid_res: usize) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse {
                line: 0,
                message: format!("{}: {e}", path.display()),
            })?;
        let axes: Vec<Vec<f64>> = serde_json::from_value(raw["axes"].clone()).map_err(|e| {
            Error::Parse {
                line: 0,
                message: format!("truth axes: {e}"),
            }
        })?;
        let values: Vec<f64> = serde_json::from_value(raw["values"].clone()).map_err(|e| {
            Error::Parse {
                line: 0,
                message: format!("truth values: {e}"),
            }
        })?;
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::Parse {
                line: 0,
                message: format!("truth table has {} values for {} grid points", values.len(), expected),
            });
        }
        let mut truth =
            Self::from_source(IntensitySource::Table { axes, values }, domain, grid_res)?;
        if let Ok(theta) = serde_json::from_value::<Vec<f64>>(raw["coefficients"].clone()) {
            truth.coefficients = Some(DVector::from_vec(theta));
        }
        Ok(truth)
    }

    /// Persists the tabulated intensity (plus fit coefficients and a config
    /// echo) as JSON.
    pub fn write_file(
        &self,
        path: &Path,
        axes: &[Vec<f64>],
        values: &[f64],
        config_echo: &str,
        config_hash: &str,
        seed: u64,
    ) -> Result<()> {
        let doc = serde_json::json!({
            "axes": axes,
            "values": values,
            "coefficients": self.coefficients.as_ref().map(|c| c.iter().copied().collect::<Vec<f64>>()),
            "config_echo": config_echo,
            "config_hash": config_hash,
            "seed": seed,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable"))?;
        Ok(())
    }

    pub fn intensity(&self, x: &[f64]) -> f64 {
        self.source.eval(x)
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn argmax(&self) -> &[f64] {
        &self.argmax
    }

    pub fn coefficients(&self) -> Option<&DVector<f64>> {
        self.coefficients.as_ref()
    }

    /// Grid labels of the level set `{lambda* >= tau}`.
    pub fn level_set(&self, tau: f64) -> Vec<bool> {
        self.values.iter().map(|v| *v >= tau).collect()
    }

    /// Expected counts `mu_A = Delta int_A lambda*` per region, computed with
    /// the same trapezoid discretization the simulator uses.
    pub fn expected_counts(&self, regions: &[BoxRegion], duration: f64, sim_grid: usize) -> Vec<f64> {
        regions
            .iter()
            .map(|region| duration * trapezoid_mass(|x| self.intensity(x), region, sim_grid))
            .collect()
    }
}

/// Trapezoid-rule mass of `f` over a box on an endpoint grid, matching the
/// point-process simulator's discretization.
pub fn trapezoid_mass<F: Fn(&[f64]) -> f64>(f: F, region: &BoxRegion, grid: usize) -> f64 {
    let n = grid.max(2);
    match region.dim() {
        1 => {
            let (a, b) = (region.lower[0], region.upper[0]);
            let h = (b - a) / (n - 1) as f64;
            let mut total = 0.0;
            let mut prev = f(&[a]);
            for i in 1..n {
                let x = a + h * i as f64;
                let v = f(&[x]);
                total += 0.5 * (prev + v) * h;
                prev = v;
            }
            total
        }
        2 => {
            let (ax, bx) = (region.lower[0], region.upper[0]);
            let (ay, by) = (region.lower[1], region.upper[1]);
            let hx = (bx - ax) / (n - 1) as f64;
            let hy = (by - ay) / (n - 1) as f64;
            let mut values = vec![0.0f64; n * n];
            for iy in 0..n {
                for ix in 0..n {
                    values[iy * n + ix] = f(&[ax + hx * ix as f64, ay + hy * iy as f64]);
                }
            }
            let mut total = 0.0;
            for cy in 0..n - 1 {
                for cx in 0..n - 1 {
                    total += 0.25
                        * (values[cy * n + cx]
                            + values[cy * n + cx + 1]
                            + values[(cy + 1) * n + cx]
                            + values[(cy + 1) * n + cx + 1])
                        * hx
                        * hy;
                }
            }
            total
        }
        d => panic!("trapezoid mass supports d in {{1, 2}}, got {d}"),
    }
}

/// Fits a ground truth to a full event record: the whole record is one
/// exposure of the entire domain for `duration`, and the MAP intensity
/// becomes the truth.
pub fn fit_ground_truth(
    events: &[Vec<f64>],
    duration: f64,
    basis: Arc<BasisModel>,
    grid_res: usize,
) -> Result<GroundTruth> {
    if events.is_empty() {
        return Err(Error::Parameter("cannot fit a ground truth to zero events".into()));
    }
    if !(duration > 0.0) {
        return Err(Error::Parameter(format!(
            "dataset duration must be positive, got {duration}"
        )));
    }
    let domain = basis.domain().clone();
    let mut posterior = PosteriorModel::new(basis);
    posterior.observe(Observation {
        region: domain.as_region(),
        region_id: None,
        duration,
        events: events.to_vec(),
    })?;
    let tol = posterior.scaled_map_tol();
    let theta = posterior.map_estimate(tol)?;
    let grid = cell_center_grid(&domain.as_region(), grid_res);
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|k| {
            let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
            let h = (hi - lo) / grid_res as f64;
            (0..grid_res).map(|i| lo + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let _ = &grid;
    let values: Vec<f64> = {
        let basis = posterior.basis();
        let mut vals = Vec::with_capacity(grid.len());
        for x in &grid {
            vals.push(basis.eval_intensity(&theta, x).max(0.0));
        }
        vals
    };
    let mut truth = GroundTruth::from_source(
        IntensitySource::Table {
            axes,
            values,
        },
        &domain,
        grid_res,
    )?;
    truth.coefficients = Some(theta);
    Ok(truth)
}

/// Per-round and cumulative count regret of a pick sequence.
#[derive(Debug, Clone, Default)]
pub struct MetricSeries {
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub spent: Vec<f64>,
}

/// Eq.-style expected count regret:
/// `r_t = w(A_t) max_B mu_B / w(B) - mu_{A_t}` (expectations, not realized
/// counts).
pub fn count_regret(
    truth: &GroundTruth,
    actions: &ActionSet,
    cost_model: &CostModel,
    duration: f64,
    sim_grid: usize,
    picks: &[u32],
) -> MetricSeries {
    let bounds: Vec<BoxRegion> = actions.regions().iter().map(|r| r.bounds.clone()).collect();
    let mu = truth.expected_counts(&bounds, duration, sim_grid);
    let costs: Vec<f64> = actions.regions().iter().map(|r| cost_model.cost(r)).collect();
    let best_ratio = mu
        .iter()
        .zip(&costs)
        .map(|(m, w)| m / w)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut series = MetricSeries::default();
    let mut cum = 0.0;
    let mut spent = 0.0;
    for &pick in picks {
        let i = pick as usize;
        let r = costs[i] * best_ratio - mu[i];
        cum += r;
        spent += costs[i];
        series.instant.push(r);
        series.cumulative.push(cum);
        series.spent.push(spent);
    }
    series
}

/// Inference regret `max lambda* - lambda*(argmax of the MAP intensity)`;
/// the argmax is taken over the truth's evaluation grid.
pub fn inference_regret(truth: &GroundTruth, feats: &DMatrix<f64>, map: &DVector<f64>) -> f64 {
    let believed = feats * map;
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in believed.iter().enumerate() {
        if *v > best_v {
            best_v = *v;
            best = i;
        }
    }
    truth.max_value() - truth.values()[best]
}

/// F1 of the predicted level set (MAP >= tau) against the truth's, on the
/// evaluation grid; returns 1 when both sets are empty.
pub fn level_set_f1(truth: &GroundTruth, feats: &DMatrix<f64>, map: &DVector<f64>, tau: f64) -> f64 {
    let predicted = feats * map;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, t) in predicted.iter().zip(truth.values()) {
        let p_pos = *p >= tau;
        let t_pos = *t >= tau;
        match (p_pos, t_pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        if fp == 0 && fn_ == 0 {
            return 1.0;
        }
        return 0.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Type-7 (linear interpolation) quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// One aggregated row: quantiles of a metric at a round, per algorithm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub round: usize,
    /// Median cumulative cost across repetitions at this round.
    pub cum_cost: f64,
    pub metric: String,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Result of a full suite run.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    /// Traces per (algorithm, seed), in the suite's cell order.
    pub cells: Vec<std::result::Result<EpisodeRecord, String>>,
    pub rows: Vec<AggregateRow>,
    /// Final-round medians per (algorithm, metric); failed cells are marked.
    pub summary: serde_json::Value,
}

/// Runs each (algorithm, seed) cell and aggregates per-round quantiles.
///
/// Cell failures are recorded and skipped by the aggregation; the suite
/// always completes.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteResult> {
    config.validate()?;
    let cells: Vec<(usize, u64)> = config
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(ai, _)| config.seeds.iter().map(move |s| (ai, *s)))
        .collect();

    let run_cell = |(ai, seed): &(usize, u64)| -> std::result::Result<EpisodeRecord, String> {
        let mut experiment = config.experiment.clone();
        experiment.algorithm = config.algorithms[*ai].clone();
        experiment.seed = *seed;
        run_protocol(&experiment).map_err(|e| e.to_string())
    };
    let results: Vec<std::result::Result<EpisodeRecord, String>> = if config.jobs == Some(1) {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    // Aggregate quantiles per (algorithm, metric, round).
    let mut rows = Vec::new();
    let mut summary_entries = Vec::new();
    for (ai, algorithm) in config.algorithms.iter().enumerate() {
        let traces: Vec<&EpisodeRecord> = cells
            .iter()
            .zip(&results)
            .filter(|((ci, _), _)| ci == &ai)
            .filter_map(|(_, r)| r.as_ref().ok())
            .collect();
        let failed = config.seeds.len() - traces.len();
        if traces.is_empty() {
            summary_entries.push(serde_json::json!({
                "algorithm": algorithm.name(),
                "failed_cells": failed,
            }));
            continue;
        }
        let metric_names: Vec<String> = {
            let mut names: Vec<String> = traces
                .iter()
                .flat_map(|t| t.rounds.iter())
                .flat_map(|r| r.metrics.iter().map(|(n, _)| n.clone()))
                .collect();
            names.sort();
            names.dedup();
            names
        };
        let max_rounds = traces.iter().map(|t| t.rounds.len()).max().unwrap_or(0);
        let mut final_medians = serde_json::Map::new();
        for metric in &metric_names {
            let mut last_q50 = f64::NAN;
            for round_idx in 0..max_rounds {
                let mut values = Vec::new();
                let mut costs = Vec::new();
                for t in &traces {
                    if let Some(r) = t.rounds.get(round_idx) {
                        if let Some((_, v)) = r.metrics.iter().find(|(n, _)| n == metric) {
                            values.push(*v);
                            costs.push(r.cum_cost);
                        }
                    }
                }
                if values.is_empty() {
                    continue;
                }
                let row = AggregateRow {
                    algorithm: algorithm.name().to_string(),
                    round: round_idx + 1,
                    cum_cost: quantile(&costs, 0.5),
                    metric: metric.clone(),
                    q25: quantile(&values, 0.25),
                    q50: quantile(&values, 0.50),
                    q75: quantile(&values, 0.75),
                };
                last_q50 = row.q50;
                rows.push(row);
            }
            final_medians.insert(metric.clone(), serde_json::json!(last_q50));
        }
        summary_entries.push(serde_json::json!({
            "algorithm": algorithm.name(),
            "failed_cells": failed,
            "repetitions": traces.len(),
            "final_round_medians": final_medians,
        }));
    }
    let summary = serde_json::json!({
        "config_hash": config.hash(),
        "cells": summary_entries,
    });
    Ok(SuiteResult {
        cells: results,
        rows,
        summary,
    })
}

/// Writes the tidy aggregate CSV:
/// `algorithm, round, cum_cost, metric, q25, q50, q75`.
pub fn write_aggregate_csv(rows: &[AggregateRow], hash: &str, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# config_hash={hash}")?;
    writeln!(file, "algorithm,round,cum_cost,metric,q25,q50,q75")?;
    for r in rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.round, r.cum_cost, r.metric, r.q25, r.q50, r.q75
        )?;
    }
    Ok(())
}

/// Minimal SVG line chart of the q50 with a q25..q75 band, one series per
/// algorithm, for a single metric.
pub fn write_quantile_svg(rows: &[AggregateRow], metric: &str, path: &Path) -> Result<()> {
    let series: Vec<&AggregateRow> = rows.iter().filter(|r| r.metric == metric).collect();
    if series.is_empty() {
        return Err(Error::Parameter(format!("no rows for metric {metric:?}")));
    }
    let mut algorithms: Vec<String> = series.iter().map(|r| r.algorithm.clone()).collect();
    algorithms.sort();
    algorithms.dedup();
    let (width, height, pad) = (720.0, 420.0, 50.0);
    let x_max = series.iter().map(|r| r.round).max().unwrap_or(1) as f64;
    let y_min = series.iter().map(|r| r.q25).fold(f64::INFINITY, f64::min);
    let y_max = series.iter().map(|r| r.q75).fold(f64::NEG_INFINITY, f64::max);
    let y_span = (y_max - y_min).max(1e-12);
    let sx = |round: usize| pad + (round as f64 / x_max) * (width - 2.0 * pad);
    let sy = |v: f64| height - pad - ((v - y_min) / y_span) * (height - 2.0 * pad);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{metric}</text>\n",
        pad
    ));
    for (ai, algorithm) in algorithms.iter().enumerate() {
        let color = palette[ai % palette.len()];
        let mut pts: Vec<&&AggregateRow> = series
            .iter()
            .filter(|r| &r.algorithm == algorithm)
            .collect();
        pts.sort_by_key(|r| r.round);
        if pts.is_empty() {
            continue;
        }
        // Band polygon: q75 forward, q25 backward.
        let mut band = String::from("<path d=\"");
        for (i, r) in pts.iter().enumerate() {
            band.push_str(&format!(
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                sx(r.round),
                sy(r.q75)
            ));
        }
        for r in pts.iter().rev() {
            band.push_str(&format!("L{:.2},{:.2} ", sx(r.round), sy(r.q25)));
        }
        band.push_str(&format!("Z\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"));
        svg.push_str(&band);
        let mut line = String::from("<path d=\"");
        for (i, r) in pts.iter().enumerate() {
            line.push_str(&format!(
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                sx(r.round),
                sy(r.q50)
            ));
        }
        line.push_str(&format!(
            "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        svg.push_str(&line);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{algorithm}</text>\n",
            width - pad - 140.0,
            pad + 16.0 * ai as f64
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Gauss-Legendre mass of an intensity over a region (oracle-quality
/// integral for tests and reports).
pub fn gl_mass<F: FnMut(&[f64]) -> f64>(f: F, region: &BoxRegion, order: usize) -> f64 {
    gl_integrate_box(region, order, f)
}
