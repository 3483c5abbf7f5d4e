//! Command implementations behind the `coxsense` binary: basis inspection,
//! ground-truth fitting, single runs, suites, and posterior-sample dumps.
//!
//! Every command validates its configuration before touching the output
//! directory, embeds the config hash and seed in each file, and keeps wall
//! clock timestamps out of data files (they live only in `metadata.json`),
//! so identical invocations are byte-identical.

use nalgebra::DVector;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::basis::BasisKind;
use crate::config::{ExperimentConfig, SuiteConfig};
use crate::error::{Error, Result};
use crate::harness::{fit_ground_truth, run_suite, write_aggregate_csv, write_quantile_svg};
use crate::posterior::{ObservationLog, PosteriorModel};
use crate::quad::cell_center_grid;
use crate::samplers::{mirrored_sample, myula_sample, SamplerConfig};
use crate::sensing::run_protocol_with_log;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_metadata(dir: &Path, config_echo: &str, hash: &str, seed: u64, elapsed_s: f64) -> Result<()> {
    let metadata = serde_json::json!({
        "config_hash": hash,
        "seed": seed,
        "elapsed_seconds": elapsed_s,
        "timestamp_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config_echo": config_echo,
    });
    std::fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).expect("serializable"),
    )?;
    Ok(())
}

/// Builds the configured basis and writes grid-sampled basis functions plus
/// the covariance-matching residual `max |Phi(t_i)' Phi(t_j) - K'_ij|`.
pub fn cmd_basis(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    let model = config.build_basis_model()?;
    ensure_dir(out)?;
    let hash = config.hash();

    // Dense grid sample of every basis function: node_index, x[, y], value.
    let domain = model.domain().clone();
    let grid_res = config.eval_grid_resolution();
    let grid = cell_center_grid(&domain.as_region(), grid_res);
    let mut file = std::fs::File::create(out.join("basis_functions.csv"))?;
    writeln!(file, "# config_hash={hash},seed={}", config.basis.basis_seed)?;
    if domain.dim() == 1 {
        writeln!(file, "node_index,x,value")?;
    } else {
        writeln!(file, "node_index,x,y,value")?;
    }
    for (j, node) in model.nodes().iter().enumerate() {
        let _ = node;
        for x in &grid {
            let phi = model.raw().eval(x);
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{},{},{}", j, coords.join(","), phi[j])?;
        }
    }

    // Covariance-matching residual at the nodes.
    let feats = model.feature_matrix(&model.nodes().to_vec());
    let recon = &feats * feats.transpose();
    let residual = (&recon - model.clipped_kernel()).abs().max();

    let report = serde_json::json!({
        "kind": config.basis.kind,
        "m": model.m(),
        "nodes": model.nodes(),
        "covariance_matching_residual": residual,
        "config_hash": hash,
        "seed": config.basis.basis_seed,
        "nmf": model.raw().nmf_report(),
    });
    std::fs::write(
        out.join("basis_report.json"),
        serde_json::to_string_pretty(&report).expect("serializable"),
    )?;

    // Tabulated bases persist their table for later import.
    if model.raw().kind() == BasisKind::NmfOptimal {
        if let Some((axes, columns)) = model.raw().table() {
            let mut file = std::fs::File::create(out.join("basis_table.csv"))?;
            writeln!(file, "# config_hash={hash},seed={}", config.basis.basis_seed)?;
            let header: Vec<String> = (0..columns.ncols()).map(|j| format!("col_{j}")).collect();
            if domain.dim() == 1 {
                writeln!(file, "x,{}", header.join(","))?;
            } else {
                writeln!(file, "x,y,{}", header.join(","))?;
            }
            let points = tensor_points(axes);
            for (row, point) in points.iter().enumerate() {
                let coords: Vec<String> = point.iter().map(|v| format!("{v}")).collect();
                let vals: Vec<String> = (0..columns.ncols())
                    .map(|j| format!("{}", columns[(row, j)]))
                    .collect();
                writeln!(file, "{},{}", coords.join(","), vals.join(","))?;
            }
            let metadata = serde_json::json!({
                "kind": "nmf",
                "m": model.m(),
                "nodes": model.nodes(),
                "kernel": config.kernel,
                "seed": config.basis.basis_seed,
                "axes": axes,
            });
            std::fs::write(
                out.join("basis_table.json"),
                serde_json::to_string_pretty(&metadata).expect("serializable"),
            )?;
        }
    }
    write_metadata(out, &config.to_toml(), &hash, config.basis.basis_seed, started.elapsed().as_secs_f64())
}

fn tensor_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    loop {
        points.push((0..d).map(|k| axes[k][idx[k]]).collect());
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
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

/// Reads an event CSV with header `x[,y],t` (`t` optional); returns the
/// events and the dataset duration (time span, if `t` is present).
pub fn read_events_csv(path: &Path, dim: usize) -> Result<(Vec<Vec<f64>>, Option<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let has_time = {
        let headers = reader.headers()?;
        match headers.len() {
            n if n == dim => false,
            n if n == dim + 1 => true,
            n => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected {dim} coordinate columns and optional t, got {n}"),
                })
            }
        }
    };
    let mut events = Vec::new();
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let mut point = Vec::with_capacity(dim);
        for k in 0..dim {
            let v: f64 = record
                .get(k)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("coordinate {k}: {e}"),
                })?;
            point.push(v);
        }
        if has_time {
            let t: f64 = record
                .get(dim)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("t: {e}"),
                })?;
            t_min = t_min.min(t);
            t_max = t_max.max(t);
        }
        events.push(point);
    }
    if events.is_empty() {
        return Err(Error::Parameter(format!(
            "event file {} is empty",
            path.display()
        )));
    }
    let span = if has_time { Some(t_max - t_min) } else { None };
    Ok((events, span))
}

/// Fits a ground-truth intensity to a full event record and persists it as
/// a grid table plus coefficient vector.
pub fn cmd_fit(events_path: &Path, config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    let domain = config.build_domain()?;
    let (events, span) = read_events_csv(events_path, domain.dim())?;
    let duration = match span {
        Some(s) if s > 0.0 => s,
        Some(_) => {
            return Err(Error::Parameter(
                "dataset duration is zero (all events share one timestamp)".into(),
            ))
        }
        None => config.duration,
    };
    let basis = config.build_basis_arc()?;
    let grid_res = config.eval_grid_resolution();
    let truth = fit_ground_truth(&events, duration, Arc::clone(&basis), grid_res)?;

    ensure_dir(out)?;
    let hash = config.hash();
    // Persist: grid table (JSON), grid CSV for plotting, coefficients.
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|k| {
            let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
            let h = (hi - lo) / grid_res as f64;
            (0..grid_res).map(|i| lo + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let values: Vec<f64> = tensor_points(&axes)
        .iter()
        .map(|x| truth.intensity(x))
        .collect();
    truth.write_file(
        &out.join("truth.json"),
        &axes,
        &values,
        &config.to_toml(),
        &hash,
        config.seed,
    )?;
    let mut file = std::fs::File::create(out.join("truth_grid.csv"))?;
    writeln!(file, "# config_hash={hash},seed={}", config.seed)?;
    if domain.dim() == 1 {
        writeln!(file, "x,value")?;
    } else {
        writeln!(file, "x,y,value")?;
    }
    for (point, value) in tensor_points(&axes).iter().zip(&values) {
        let coords: Vec<String> = point.iter().map(|v| format!("{v}")).collect();
        writeln!(file, "{},{}", coords.join(","), value)?;
    }
    write_metadata(out, &config.to_toml(), &hash, config.seed, started.elapsed().as_secs_f64())
}

/// Runs one protocol episode and writes the trace, the observation log, and
/// run metadata.
pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    let (record, log) = run_protocol_with_log(config)?;
    ensure_dir(out)?;
    record.write_csv(&out.join("trace.csv"))?;
    log.write_csv(&out.join("log.csv"), &out.join("log.json"))?;
    write_metadata(
        out,
        &config.to_toml(),
        &record.config_hash,
        config.seed,
        started.elapsed().as_secs_f64(),
    )?;
    if !record.failures.is_empty() {
        return Err(Error::Convergence(format!(
            "run recorded failures: {}",
            record.failures.join("; ")
        )));
    }
    Ok(())
}

/// Runs a full suite and writes the aggregate CSV, per-metric SVG bands,
/// a machine-readable summary, and each cell's trace.
pub fn cmd_suite(config: &SuiteConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    let result = run_suite(config)?;
    ensure_dir(out)?;
    let hash = config.hash();
    write_aggregate_csv(&result.rows, &hash, &out.join("aggregate.csv"))?;
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&result.summary).expect("serializable"),
    )?;
    let cell_dir = out.join("cells");
    ensure_dir(&cell_dir)?;
    let mut cell_idx = 0usize;
    for algorithm in &config.algorithms {
        for seed in &config.seeds {
            match &result.cells[cell_idx] {
                Ok(record) => {
                    record.write_csv(
                        &cell_dir.join(format!("{}_seed{}.csv", algorithm.name(), seed)),
                    )?;
                }
                Err(message) => {
                    std::fs::write(
                        cell_dir.join(format!("{}_seed{}.failed.txt", algorithm.name(), seed)),
                        message,
                    )?;
                }
            }
            cell_idx += 1;
        }
    }
    let mut metrics: Vec<String> = result.rows.iter().map(|r| r.metric.clone()).collect();
    metrics.sort();
    metrics.dedup();
    for metric in metrics {
        let _ = write_quantile_svg(&result.rows, &metric, &out.join(format!("{metric}.svg")));
    }
    write_metadata(
        out,
        &config.to_toml(),
        &hash,
        config.experiment.seed,
        started.elapsed().as_secs_f64(),
    )
}

/// Draws posterior chains (optionally conditioned on an observation log)
/// and dumps both the coefficient traces and grid-evaluated intensities.
pub fn cmd_sample(
    config: &ExperimentConfig,
    log_paths: Option<(PathBuf, PathBuf)>,
    n_chains: usize,
    out: &Path,
) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    if n_chains == 0 {
        return Err(Error::Parameter("need at least one chain".into()));
    }
    let basis = config.build_basis_arc()?;
    let mut posterior = PosteriorModel::new(basis);
    if let Some((csv_path, json_path)) = &log_paths {
        let log = ObservationLog::read_csv(csv_path, json_path)?;
        for obs in log.entries() {
            posterior.observe(obs.clone())?;
        }
    }
    posterior.refresh_auto()?;

    ensure_dir(out)?;
    let hash = config.hash();
    let domain = config.build_domain()?;
    let grid = cell_center_grid(&domain.as_region(), config.eval_grid_resolution());
    let feats = posterior.basis().feature_matrix(&grid);
    let map = posterior.cached_map().expect("refreshed").clone();

    for chain in 0..n_chains {
        let sampler_cfg = config
            .sampler
            .clone()
            .with_seed(crate::rng::child_seed(config.seed, "sample-cmd", chain as u64));
        let samples = match &sampler_cfg {
            SamplerConfig::Myula(cfg) => myula_sample(&posterior, cfg)?,
            SamplerConfig::Mirrored(cfg) => mirrored_sample(&posterior, cfg)?,
        };
        // Chain trace: step, theta_1..theta_m (post burn-in).
        let mut file = std::fs::File::create(out.join(format!("chain_{chain}.csv")))?;
        writeln!(file, "# config_hash={hash},seed={}", config.seed)?;
        let header: Vec<String> = (0..posterior.m()).map(|i| format!("theta_{i}")).collect();
        writeln!(file, "step,{}", header.join(","))?;
        for (step, theta) in samples.iter().enumerate() {
            let vals: Vec<String> = theta.iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{},{}", step, vals.join(","))?;
        }

        // Grid intensities: MAP, posterior mean, and up to 20 spaced samples.
        let mut file = std::fs::File::create(out.join(format!("intensity_{chain}.csv")))?;
        writeln!(file, "# config_hash={hash},seed={}", config.seed)?;
        let n_dump = samples.len().min(20);
        let stride = (samples.len() / n_dump.max(1)).max(1);
        let picks: Vec<&DVector<f64>> = samples.iter().step_by(stride).take(n_dump).collect();
        let mean = {
            let mut acc = DVector::zeros(posterior.m());
            for s in &samples {
                acc += s;
            }
            acc / samples.len().max(1) as f64
        };
        let coord_header = if domain.dim() == 1 { "x" } else { "x,y" };
        let sample_header: Vec<String> = (0..picks.len()).map(|i| format!("sample_{i}")).collect();
        writeln!(file, "{coord_header},map,mean,{}", sample_header.join(","))?;
        let map_values = &feats * &map;
        let mean_values = &feats * &mean;
        for (i, x) in grid.iter().enumerate() {
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            let mut row = vec![format!("{}", map_values[i]), format!("{}", mean_values[i])];
            for pick in &picks {
                row.push(format!("{}", feats.row(i).transpose().dot(pick)));
            }
            writeln!(file, "{},{}", coords.join(","), row.join(","))?;
        }
    }
    write_metadata(out, &config.to_toml(), &hash, config.seed, started.elapsed().as_secs_f64())
}
