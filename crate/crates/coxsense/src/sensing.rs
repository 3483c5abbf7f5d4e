//! Sensing actions, acquisition rules, and the sense-update-act protocol.
//!
//! The action space is a hierarchical splitting of the domain (binary per
//! axis, quadtree in 2-d). Each acquisition picks the next region from the
//! current posterior: Cox-Thompson maximizes the sampled count-to-cost
//! ratio, Top2 resolves disagreement between two posterior draws, UCB and
//! V-optimal use the Laplace approximation, and epsilon-greedy / random are
//! the baselines. Ties always break toward the smallest region id so traces
//! are reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::config::{AlgorithmConfig, ExperimentConfig, MetricKind};
use crate::error::{Error, Result};
use crate::harness::GroundTruth;
use crate::kernels::{BoxRegion, Domain};
use crate::posterior::{CredibleParams, Observation, ObservationLog, PosteriorModel};
use crate::quad::{cell_center_grid, cell_volume};
use crate::rng::stream;
use crate::samplers::{simulate_point_process, PosteriorDraw, SamplerBackend};

/// An axis-aligned sensing region within the hierarchy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub bounds: BoxRegion,
    pub depth: u32,
    pub parent: Option<u32>,
}

/// Hierarchical action space; region ids are dense and equal to their index.
#[derive(Debug, Clone)]
pub struct ActionSet {
    domain: Domain,
    regions: Vec<Region>,
    max_depth: u32,
    include_ancestors: bool,
}

/// Recursive bisection of the domain along every axis (2^d children per
/// node). With ancestors the set holds all depths `0..=max_depth`
/// (`sum_k 2^{kd}` regions); otherwise only the `2^{Dd}` leaves.
pub fn build_action_set(domain: &Domain, max_depth: u32, include_ancestors: bool) -> ActionSet {
    let d = domain.dim();
    let mut regions = Vec::new();
    let mut id = 0u32;
    let depth_range = if include_ancestors {
        0..=max_depth
    } else {
        max_depth..=max_depth
    };
    // With ancestors, level k starts at sum_{j<k} 2^{jd}; cells are ordered
    // with axis 0 fastest.
    let level_offset =
        |depth: u32| -> u32 { (0..depth).map(|k| 1u32 << (k as usize * d)).sum() };
    for depth in depth_range {
        let cells = 1usize << (depth as usize * d);
        let per_axis = 1usize << depth;
        for cell in 0..cells {
            let mut idx = cell;
            let mut lower = Vec::with_capacity(d);
            let mut upper = Vec::with_capacity(d);
            let mut parent_cell = 0usize;
            let mut parent_stride = 1usize;
            for k in 0..d {
                let i = idx % per_axis;
                idx /= per_axis;
                let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
                let w = (hi - lo) / per_axis as f64;
                lower.push(lo + w * i as f64);
                upper.push(lo + w * (i + 1) as f64);
                parent_cell += (i / 2) * parent_stride;
                parent_stride *= (per_axis / 2).max(1);
            }
            let parent = if include_ancestors && depth > 0 {
                Some(level_offset(depth - 1) + parent_cell as u32)
            } else {
                None
            };
            regions.push(Region {
                id,
                bounds: BoxRegion { lower, upper },
                depth,
                parent,
            });
            id += 1;
        }
    }
    ActionSet {
        domain: domain.clone(),
        regions,
        max_depth,
        include_ancestors,
    }
}

impl ActionSet {
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn region(&self, id: u32) -> &Region {
        &self.regions[id as usize]
    }

    /// Id of the deepest-level cell containing `x`.
    pub fn leaf_of(&self, x: &[f64]) -> u32 {
        let d = self.domain.dim();
        let per_axis = 1usize << self.max_depth;
        let mut cell = 0usize;
        let mut stride = 1usize;
        for k in 0..d {
            let (lo, hi) = (self.domain.lower()[k], self.domain.upper()[k]);
            let w = (hi - lo) / per_axis as f64;
            let i = (((x[k] - lo) / w).floor() as isize).clamp(0, per_axis as isize - 1) as usize;
            cell += i * stride;
            stride *= per_axis;
        }
        let offset: u32 = if self.include_ancestors {
            (0..self.max_depth)
                .map(|k| 1u32 << (k as usize * d))
                .sum()
        } else {
            0
        };
        offset + cell as u32
    }

    /// All regions containing `x`.
    pub fn containing(&self, x: &[f64]) -> Vec<u32> {
        self.regions
            .iter()
            .filter(|r| r.bounds.contains(x))
            .map(|r| r.id)
            .collect()
    }

    /// Cheapest region containing `x`; ties break to the smallest id.
    pub fn cheapest_containing(&self, x: &[f64], costs: &[f64]) -> u32 {
        let mut best: Option<(u32, f64)> = None;
        for r in &self.regions {
            if r.bounds.contains(x) {
                let c = costs[r.id as usize];
                match best {
                    None => best = Some((r.id, c)),
                    Some((_, bc)) if c < bc => best = Some((r.id, c)),
                    _ => {}
                }
            }
        }
        best.map(|(id, _)| id)
            .expect("domain point inside some region")
    }

    /// For each region, indices of the grid points it contains.
    pub fn grid_membership(&self, grid: &[Vec<f64>]) -> Vec<Vec<usize>> {
        self.regions
            .iter()
            .map(|r| {
                grid.iter()
                    .enumerate()
                    .filter(|(_, x)| r.bounds.contains(x))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }
}

/// Sensing cost of a region: `C1 |A|` (uniform) or `C1 |A| + C2` (fixed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostModel {
    Uniform { c1: f64 },
    Fixed { c1: f64, c2: f64 },
}

impl CostModel {
    pub fn cost(&self, region: &Region) -> f64 {
        let volume = region.bounds.volume();
        match self {
            CostModel::Uniform { c1 } => c1 * volume,
            CostModel::Fixed { c1, c2 } => c1 * volume + c2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            CostModel::Uniform { c1 } => *c1 > 0.0,
            CostModel::Fixed { c1, c2 } => *c1 >= 0.0 && *c2 >= 0.0 && *c1 + *c2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "cost model must give positive costs: {self:?}"
            )))
        }
    }
}

/// Read-only view of one protocol round handed to the acquisition rules.
pub struct ProtocolState<'a> {
    pub actions: &'a ActionSet,
    /// `w(A)` aligned with region ids.
    pub costs: &'a [f64],
    /// `psi_A` aligned with region ids (without the duration factor).
    pub psi: &'a [DVector<f64>],
    pub duration: f64,
    pub posterior: &'a PosteriorModel,
    /// Evaluation grid (cell centers over the domain).
    pub grid: &'a [Vec<f64>],
    /// Rows `Phi(x)'` for the evaluation grid.
    pub feats: &'a DMatrix<f64>,
    /// Grid-point indices inside each region.
    pub region_points: &'a [Vec<usize>],
    /// Volume weight of one evaluation cell.
    pub cell_weight: f64,
    /// 1-based round index.
    pub round: usize,
}

fn argmax_smallest_id(scores: impl Iterator<Item = f64>) -> u32 {
    let mut best = 0u32;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.enumerate() {
        if s > best_score {
            best_score = s;
            best = i as u32;
        }
    }
    best
}

/// Cox-Thompson: best sampled count-to-cost ratio
/// `argmax_A Delta psi_A' theta / w(A)`. With `ignore_cost` the literal
/// uncosted variant `argmax_A psi_A' theta` is used instead.
pub fn act_cox_thompson(state: &ProtocolState<'_>, theta: &DVector<f64>, ignore_cost: bool) -> u32 {
    argmax_smallest_id((0..state.actions.len()).map(|i| {
        let gain = state.duration * state.psi[i].dot(theta);
        if ignore_cost {
            gain
        } else {
            gain / state.costs[i]
        }
    }))
}

/// Uniformly random region.
pub fn act_random(state: &ProtocolState<'_>, rng: &mut ChaCha12Rng) -> u32 {
    rng.random_range(0..state.actions.len()) as u32
}

/// Greedy on the MAP ratio with exploration probability `min(1, e0/sqrt(t))`.
pub fn act_epsilon_greedy(
    state: &ProtocolState<'_>,
    epsilon0: f64,
    map: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> u32 {
    let epsilon = (epsilon0 / (state.round as f64).sqrt()).min(1.0);
    if rng.random::<f64>() < epsilon {
        act_random(state, rng)
    } else {
        act_cox_thompson(state, map, false)
    }
}

/// Optimism via the Laplace credible set: `argmax_A ucb(Delta psi_A) / w(A)`.
pub fn act_ucb_laplace(state: &ProtocolState<'_>, params: &CredibleParams) -> Result<u32> {
    let mut scores = Vec::with_capacity(state.actions.len());
    for i in 0..state.actions.len() {
        let scaled = &state.psi[i] * state.duration;
        let (ucb, _) = state.posterior.ucb_argmax(&scaled, params)?;
        scores.push(ucb / state.costs[i]);
    }
    Ok(argmax_smallest_id(scores.into_iter()))
}

/// Outcome of a Top2 acquisition, with resampling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Top2Outcome {
    pub region: u32,
    /// Number of posterior draws consumed.
    pub draws: usize,
    /// The resample cap was reached with agreeing recommendations.
    pub capped: bool,
    /// The level-set variant fell back to a round-robin pick.
    pub fallback: bool,
}

/// Top-two for maximum identification: resample until two draws place the
/// intensity argmax in different leaves, then sense the cheapest region
/// containing one of the two (fair coin).
pub fn act_top2_max(
    state: &ProtocolState<'_>,
    sampler: &mut dyn PosteriorDraw,
    resample_cap: usize,
    coin: &mut ChaCha12Rng,
) -> Result<Top2Outcome> {
    let grid_argmax = |theta: &DVector<f64>| -> usize {
        let values = state.feats * theta;
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (i, v) in values.iter().enumerate() {
            if *v > best_v {
                best_v = *v;
                best = i;
            }
        }
        best
    };
    let theta1 = sampler.draw()?;
    let x1 = grid_argmax(&theta1);
    let leaf1 = state.actions.leaf_of(&state.grid[x1]);
    let mut draws = 1usize;
    let mut second: Option<usize> = None;
    while draws < resample_cap + 1 {
        let theta2 = sampler.draw()?;
        draws += 1;
        let x2 = grid_argmax(&theta2);
        if state.actions.leaf_of(&state.grid[x2]) != leaf1 {
            second = Some(x2);
            break;
        }
    }
    match second {
        Some(x2) => {
            let pick = if coin.random::<f64>() < 0.5 { x1 } else { x2 };
            Ok(Top2Outcome {
                region: state
                    .actions
                    .cheapest_containing(&state.grid[pick], state.costs),
                draws,
                capped: false,
                fallback: false,
            })
        }
        None => Ok(Top2Outcome {
            region: state
                .actions
                .cheapest_containing(&state.grid[x1], state.costs),
            draws,
            capped: true,
            fallback: false,
        }),
    }
}

/// Top-two for level sets: resample until the thresholded sets differ, then
/// maximize the XOR-weighted disagreement mass per unit cost,
/// `argmax_A (1/w(A)) int_A |Phi'(t1 - t2)| 1[S1 xor S2]`.
///
/// If the draws keep agreeing, falls back to the cheapest least-visited
/// region (round-robin) and flags it.
pub fn act_top2_levelset(
    state: &ProtocolState<'_>,
    sampler: &mut dyn PosteriorDraw,
    tau: f64,
    resample_cap: usize,
    visit_counts: &[usize],
) -> Result<Top2Outcome> {
    let level_set = |theta: &DVector<f64>| -> Vec<bool> {
        (state.feats * theta).iter().map(|v| *v >= tau).collect()
    };
    let theta1 = sampler.draw()?;
    let s1 = level_set(&theta1);
    let mut draws = 1usize;
    let mut pair: Option<(DVector<f64>, Vec<bool>)> = None;
    while draws < resample_cap + 1 {
        let theta2 = sampler.draw()?;
        draws += 1;
        let s2 = level_set(&theta2);
        if s2 != s1 {
            pair = Some((theta2, s2));
            break;
        }
    }
    let (theta2, s2) = match pair {
        Some(p) => p,
        None => {
            // Round-robin fallback: cheapest among the least-sensed regions.
            let min_visits = visit_counts.iter().copied().min().unwrap_or(0);
            let mut best: Option<(u32, f64)> = None;
            for r in state.actions.regions() {
                if visit_counts[r.id as usize] == min_visits {
                    let c = state.costs[r.id as usize];
                    if best.map_or(true, |(_, bc)| c < bc) {
                        best = Some((r.id, c));
                    }
                }
            }
            return Ok(Top2Outcome {
                region: best.expect("nonempty action set").0,
                draws,
                capped: true,
                fallback: true,
            });
        }
    };
    let diff = &theta1 - &theta2;
    let magnitude = state.feats * &diff;
    let mut scores = Vec::with_capacity(state.actions.len());
    for i in 0..state.actions.len() {
        let mut acc = 0.0;
        for &p in &state.region_points[i] {
            if s1[p] != s2[p] {
                acc += magnitude[p].abs() * state.cell_weight;
            }
        }
        scores.push(acc / state.costs[i]);
    }
    Ok(Top2Outcome {
        region: argmax_smallest_id(scores.into_iter()),
        draws,
        capped: false,
        fallback: false,
    })
}

/// Objective defining the region of interest for V-optimal design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignObjective {
    /// `R_t = {x : lcb(x) >= tau}`.
    Levelset,
    /// `R_t = {x : ucb(x) >= max_z lcb(z)}`.
    Maximum,
}

/// Expected-posterior-error score of one candidate action:
/// `(1/w) mean_k Tr(M_R (Sigma_L + sum_i Phi_i Phi_i' / (Phi_i' map)^2)^-1)`
/// over simulated event sets.
pub fn v_optimal_score(
    m_r: &DMatrix<f64>,
    base_precision: &DMatrix<f64>,
    simulated_feats: &[Vec<DVector<f64>>],
    map: &DVector<f64>,
    cost: f64,
) -> Result<f64> {
    let m = base_precision.nrows();
    let mut total = 0.0;
    for draw in simulated_feats {
        let mut h = base_precision.clone();
        for feat in draw {
            let v = feat.dot(map).max(1e-12);
            h.syger(1.0 / (v * v), feat, feat, 1.0);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                h[(i, j)] = h[(j, i)];
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("design precision not positive definite".into()))?;
        let solved = chol.solve(m_r);
        total += solved.trace();
    }
    Ok(total / (simulated_feats.len().max(1) as f64 * cost))
}

/// Bayesian V-optimal design step. Returns `None` when the region of
/// interest is empty (task-complete signal; the protocol may stop early).
#[allow(clippy::too_many_arguments)]
pub fn act_v_optimal(
    state: &ProtocolState<'_>,
    objective: DesignObjective,
    tau: f64,
    params: &CredibleParams,
    n_resamples: usize,
    sim_grid: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Option<u32>> {
    let bounds = state.posterior.pointwise_bounds(state.grid, params)?;
    let in_rt: Vec<bool> = match objective {
        DesignObjective::Levelset => bounds.iter().map(|(_, lcb)| *lcb >= tau).collect(),
        DesignObjective::Maximum => {
            let max_lcb = bounds
                .iter()
                .map(|(_, lcb)| *lcb)
                .fold(f64::NEG_INFINITY, f64::max);
            bounds.iter().map(|(ucb, _)| *ucb >= max_lcb).collect()
        }
    };
    if !in_rt.iter().any(|b| *b) {
        return Ok(None);
    }
    let m = state.posterior.m();
    let mut m_r = DMatrix::zeros(m, m);
    for (i, inside) in in_rt.iter().enumerate() {
        if *inside {
            let row = state.feats.row(i).transpose();
            m_r.syger(state.cell_weight, &row, &row, 1.0);
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            m_r[(i, j)] = m_r[(j, i)];
        }
    }
    let precision = state
        .posterior
        .cached_precision()
        .ok_or_else(|| Error::Parameter("v-optimal needs a refreshed posterior".into()))?;
    let map = state
        .posterior
        .cached_map()
        .ok_or_else(|| Error::Parameter("v-optimal needs a refreshed posterior".into()))?;

    let mut best: Option<(u32, f64)> = None;
    for region in state.actions.regions() {
        // Optimistic rate for simulating the sensing of this region.
        let (_, optimistic) = state
            .posterior
            .ucb_argmax(&state.psi[region.id as usize], params)?;
        let basis = state.posterior.basis();
        let mut draws = Vec::with_capacity(n_resamples);
        for _ in 0..n_resamples {
            let sim = simulate_point_process(
                |x| basis.eval_intensity(&optimistic, x).max(0.0),
                &region.bounds,
                state.duration,
                sim_grid,
                rng,
            )?;
            draws.push(sim.locations.iter().map(|x| basis.features(x)).collect());
        }
        let score = v_optimal_score(
            &m_r,
            precision,
            &draws,
            map,
            state.costs[region.id as usize],
        )?;
        let better = match best {
            None => true,
            Some((_, b)) => score < b,
        };
        if better {
            best = Some((region.id, score));
        }
    }
    Ok(best.map(|(id, _)| id))
}

/// One protocol round in the trace; metric values are long-format pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub region_id: u32,
    pub cost: f64,
    pub cum_cost: f64,
    pub n_events: usize,
    pub metrics: Vec<(String, f64)>,
}

/// Full trace of one protocol run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub rounds: Vec<RoundRecord>,
    pub failures: Vec<String>,
    /// The acquisition signalled completion (empty region of interest).
    pub completed_early: bool,
}

impl EpisodeRecord {
    /// Values of one metric across rounds (rounds without it are skipped).
    pub fn metric_series(&self, name: &str) -> Vec<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
            .collect()
    }

    pub fn cumulative_cost(&self) -> f64 {
        self.rounds.last().map(|r| r.cum_cost).unwrap_or(0.0)
    }

    /// Long-format CSV:
    /// `round,algorithm,region_id,cost,cum_cost,n_events,metric_name,metric_value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# config_hash={},seed={}", self.config_hash, self.seed)?;
        writeln!(
            file,
            "round,algorithm,region_id,cost,cum_cost,n_events,metric_name,metric_value"
        )?;
        for r in &self.rounds {
            for (name, value) in &r.metrics {
                writeln!(
                    file,
                    "{},{},{},{},{},{},{},{}",
                    r.round,
                    self.algorithm,
                    r.region_id,
                    r.cost,
                    r.cum_cost,
                    r.n_events,
                    name,
                    value
                )?;
            }
        }
        Ok(())
    }
}

/// Runs the sense-update-act loop of one experiment configuration.
pub fn run_protocol(config: &ExperimentConfig) -> Result<EpisodeRecord> {
    run_protocol_with_log(config).map(|(record, _)| record)
}

/// As [`run_protocol`], also returning the accumulated observation log.
///
/// Each round: refresh the posterior as needed, pick a region with the
/// configured acquisition, simulate sensing from the ground truth, append
/// the observation, and record metrics. Stops when the spent budget
/// reaches `C`, the round cap is hit, or the acquisition signals done.
pub fn run_protocol_with_log(
    config: &ExperimentConfig,
) -> Result<(EpisodeRecord, ObservationLog)> {
    config.validate()?;
    let domain = config.build_domain()?;
    let basis = config.build_basis_model()?;
    let actions = build_action_set(
        &domain,
        config.actions.max_depth,
        config.actions.include_ancestors,
    );
    let cost_model = config.build_cost_model()?;
    let costs: Vec<f64> = actions.regions().iter().map(|r| cost_model.cost(r)).collect();
    let region_bounds: Vec<BoxRegion> =
        actions.regions().iter().map(|r| r.bounds.clone()).collect();
    let integrals = crate::basis::region_integrals(&basis, &region_bounds)?;
    let psi: Vec<DVector<f64>> = (0..actions.len())
        .map(|i| integrals.transformed(i).clone())
        .collect();

    let truth = GroundTruth::from_config(config, &domain)?;
    let eval_grid_res = config.eval_grid_resolution();
    let sim_grid_res = config.sim_grid_resolution();
    let grid = cell_center_grid(&domain.as_region(), eval_grid_res);
    let cell_weight = cell_volume(&domain.as_region(), eval_grid_res);
    let feats = basis.feature_matrix(&grid);
    let region_points = actions.grid_membership(&grid);

    let expected_counts = truth.expected_counts(&region_bounds, config.duration, sim_grid_res);
    let best_ratio = expected_counts
        .iter()
        .zip(&costs)
        .map(|(mu, w)| mu / w)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut posterior = PosteriorModel::new(std::sync::Arc::new(basis));
    let mut record = EpisodeRecord {
        algorithm: config.algorithm.name().to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        rounds: Vec::new(),
        failures: Vec::new(),
        completed_early: false,
    };

    let wants_f1 = config.metrics.contains(&MetricKind::LevelSetF1);
    let wants_inference = config.metrics.contains(&MetricKind::InferenceRegret);
    let needs_map_for_metrics = wants_f1 || wants_inference;
    let tau = config.threshold.unwrap_or(f64::NAN);

    let mut spent = 0.0f64;
    let mut cum_regret = 0.0f64;
    let mut visit_counts = vec![0usize; actions.len()];

    for round in 1..=config.rounds {
        if spent >= config.budget {
            break;
        }
        let needs_posterior = needs_map_for_metrics || config.algorithm.needs_posterior();
        if needs_posterior {
            if let Err(e) = posterior.refresh_auto() {
                record.failures.push(format!("round {round}: {e}"));
                break;
            }
        }

        let state = ProtocolState {
            actions: &actions,
            costs: &costs,
            psi: &psi,
            duration: config.duration,
            posterior: &posterior,
            grid: &grid,
            feats: &feats,
            region_points: &region_points,
            cell_weight,
            round,
        };

        let mut flags: Vec<(String, f64)> = Vec::new();
        let sampler_cfg = config
            .sampler
            .clone()
            .with_seed(crate::rng::child_seed(config.seed, "sampler", round as u64));
        let picked: Option<u32> = match &config.algorithm {
            AlgorithmConfig::CoxThompson { ignore_cost } => {
                let mut sampler = SamplerBackend::new(&posterior, &sampler_cfg)?;
                let theta = sampler.draw()?;
                Some(act_cox_thompson(&state, &theta, *ignore_cost))
            }
            AlgorithmConfig::Top2Max { resample_cap } => {
                let mut sampler = SamplerBackend::new(&posterior, &sampler_cfg)?;
                let mut coin = stream(config.seed, "coin", round as u64);
                let outcome = act_top2_max(&state, &mut sampler, *resample_cap, &mut coin)?;
                flags.push(("top2_draws".into(), outcome.draws as f64));
                flags.push(("top2_capped".into(), outcome.capped as u8 as f64));
                Some(outcome.region)
            }
            AlgorithmConfig::Top2Levelset { resample_cap } => {
                let mut sampler = SamplerBackend::new(&posterior, &sampler_cfg)?;
                let outcome =
                    act_top2_levelset(&state, &mut sampler, tau, *resample_cap, &visit_counts)?;
                flags.push(("top2_draws".into(), outcome.draws as f64));
                flags.push(("top2_capped".into(), outcome.capped as u8 as f64));
                flags.push(("top2_fallback".into(), outcome.fallback as u8 as f64));
                Some(outcome.region)
            }
            AlgorithmConfig::UcbLaplace { beta } => {
                Some(act_ucb_laplace(&state, &CredibleParams { beta: *beta })?)
            }
            AlgorithmConfig::VOptimal {
                beta,
                n_resamples,
                objective,
            } => {
                let mut rng = stream(config.seed, "design", round as u64);
                act_v_optimal(
                    &state,
                    *objective,
                    tau,
                    &CredibleParams { beta: *beta },
                    *n_resamples,
                    sim_grid_res.min(128),
                    &mut rng,
                )?
            }
            AlgorithmConfig::EpsilonGreedy { epsilon0 } => {
                let map = posterior
                    .cached_map()
                    .ok_or_else(|| Error::Invariant("greedy needs a refreshed posterior".into()))?
                    .clone();
                let mut rng = stream(config.seed, "algorithm", round as u64);
                Some(act_epsilon_greedy(&state, *epsilon0, &map, &mut rng))
            }
            AlgorithmConfig::Random => {
                let mut rng = stream(config.seed, "algorithm", round as u64);
                Some(act_random(&state, &mut rng))
            }
        };
        let region_id = match picked {
            Some(id) => id,
            None => {
                record.completed_early = true;
                break;
            }
        };

        let region = actions.region(region_id);
        let mut sim_rng = stream(config.seed, "simulator", round as u64);
        let draw = simulate_point_process(
            |x| truth.intensity(x),
            &region.bounds,
            config.duration,
            sim_grid_res,
            &mut sim_rng,
        )?;
        let cost = costs[region_id as usize];
        spent += cost;
        visit_counts[region_id as usize] += 1;

        posterior.observe(Observation {
            region: region.bounds.clone(),
            region_id: Some(region_id),
            duration: config.duration,
            events: draw.locations.clone(),
        })?;

        let mut metrics = flags;
        if config.metrics.contains(&MetricKind::CountRegret) {
            let instant = cost * best_ratio - expected_counts[region_id as usize];
            cum_regret += instant;
            metrics.push(("count_regret".into(), instant));
            metrics.push(("count_regret_cum".into(), cum_regret));
            let realized = cost * best_ratio - draw.count as f64;
            metrics.push(("count_regret_realized".into(), realized));
        }
        if needs_map_for_metrics {
            // Metrics reflect the belief after this round's data.
            if let Err(e) = posterior.refresh_auto() {
                record
                    .failures
                    .push(format!("round {round} (metrics): {e}"));
                break;
            }
            let map = posterior.cached_map().expect("refreshed").clone();
            if wants_inference {
                metrics.push((
                    "inference_regret".into(),
                    crate::harness::inference_regret(&truth, &feats, &map),
                ));
            }
            if wants_f1 {
                metrics.push((
                    "f1".into(),
                    crate::harness::level_set_f1(&truth, &feats, &map, tau),
                ));
            }
        }

        record.rounds.push(RoundRecord {
            round,
            region_id,
            cost,
            cum_cost: spent,
            n_events: draw.count,
            metrics,
        });
    }
    Ok((record, posterior.log().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_hat_basis, gamma_transform, region_integrals};
    use crate::kernels::KernelSpec;
    use crate::posterior::PosteriorModel;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn unit_interval() -> Domain {
        Domain::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn action_counts_match_hierarchy() {
        let d1 = unit_interval();
        assert_eq!(build_action_set(&d1, 2, true).len(), 7);
        assert_eq!(build_action_set(&d1, 7, false).len(), 128);
        let d2 = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(build_action_set(&d2, 1, true).len(), 5);
    }

    #[test]
    fn levels_tile_the_domain() {
        let d2 = Domain::new(vec![0.0, 0.0], vec![2.0, 4.0]).unwrap();
        let set = build_action_set(&d2, 2, true);
        for depth in 0..=2 {
            let total: f64 = set
                .regions()
                .iter()
                .filter(|r| r.depth == depth)
                .map(|r| r.bounds.volume())
                .sum();
            assert_relative_eq!(total, 8.0, epsilon = 1e-12);
        }
        for r in set.regions() {
            if let Some(p) = r.parent {
                let parent = set.region(p);
                assert_eq!(parent.depth + 1, r.depth);
                let center: Vec<f64> = r
                    .bounds
                    .lower
                    .iter()
                    .zip(&r.bounds.upper)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                assert!(parent.bounds.contains(&center));
            }
        }
    }

    #[test]
    fn leaf_lookup_matches_containment() {
        let d2 = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let set = build_action_set(&d2, 3, true);
        for x in [[-0.9, 0.3], [0.01, -0.77], [0.99, 0.99]] {
            let leaf = set.region(set.leaf_of(&x));
            assert_eq!(leaf.depth, 3);
            assert!(leaf.bounds.contains(&x));
        }
    }

    #[test]
    fn cost_model_examples() {
        let set = build_action_set(&unit_interval(), 0, true);
        let whole = set.region(0);
        assert_relative_eq!(CostModel::Uniform { c1: 1.0 }.cost(whole), 2.0);
        let half = Region {
            id: 1,
            bounds: BoxRegion::new(vec![0.0], vec![0.5]).unwrap(),
            depth: 1,
            parent: None,
        };
        assert_relative_eq!(
            CostModel::Fixed { c1: 1.0, c2: 0.02 }.cost(&half),
            0.52,
            epsilon = 1e-12
        );
        let quarter = Region {
            id: 2,
            bounds: BoxRegion::new(vec![0.0], vec![0.25]).unwrap(),
            depth: 2,
            parent: None,
        };
        let c = CostModel::Uniform { c1: 3.0 };
        assert_relative_eq!(c.cost(&quarter) * 2.0, c.cost(&half));
    }

    struct Fixture {
        actions: ActionSet,
        costs: Vec<f64>,
        psi: Vec<DVector<f64>>,
        posterior: PosteriorModel,
        grid: Vec<Vec<f64>>,
        feats: DMatrix<f64>,
        membership: Vec<Vec<usize>>,
        weight: f64,
    }

    fn fixture(m: usize, depth: u32, lower: f64, lengthscale: f64) -> Fixture {
        let domain = unit_interval();
        let basis = build_hat_basis(&domain, m).unwrap();
        let model = gamma_transform(basis, KernelSpec::squared_exponential(lengthscale))
            .unwrap()
            .with_lower_bound(lower);
        let actions = build_action_set(&domain, depth, false);
        let costs: Vec<f64> = actions
            .regions()
            .iter()
            .map(|r| CostModel::Uniform { c1: 1.0 }.cost(r))
            .collect();
        let bounds: Vec<BoxRegion> = actions.regions().iter().map(|r| r.bounds.clone()).collect();
        let ints = region_integrals(&model, &bounds).unwrap();
        let psi: Vec<DVector<f64>> = (0..actions.len())
            .map(|i| ints.transformed(i).clone())
            .collect();
        let grid = cell_center_grid(&domain.as_region(), 256);
        let feats = model.feature_matrix(&grid);
        let membership = actions.grid_membership(&grid);
        let weight = cell_volume(&domain.as_region(), 256);
        let posterior = PosteriorModel::new(Arc::new(model));
        Fixture {
            actions,
            costs,
            psi,
            posterior,
            grid,
            feats,
            membership,
            weight,
        }
    }

    impl Fixture {
        fn state(&self, round: usize) -> ProtocolState<'_> {
            ProtocolState {
                actions: &self.actions,
                costs: &self.costs,
                psi: &self.psi,
                duration: 1.0,
                posterior: &self.posterior,
                grid: &self.grid,
                feats: &self.feats,
                region_points: &self.membership,
                cell_weight: self.weight,
                round,
            }
        }

        fn node_values_to_theta(&self, c: &DVector<f64>) -> DVector<f64> {
            self.posterior
                .basis()
                .gamma()
                .transpose()
                .clone_owned()
                .lu()
                .solve(c)
                .unwrap()
        }
    }

    #[test]
    fn thompson_picks_the_peaked_leaf() {
        let fx = fixture(9, 3, 0.0, 0.3);
        let state = fx.state(1);
        let mut c = DVector::zeros(9);
        c[6] = 1.0; // node at x = 0.5
        let theta = fx.node_values_to_theta(&c);
        let picked = act_cox_thompson(&state, &theta, false);
        let region = fx.actions.region(picked);
        // Peak mass sits in the two leaves flanking x = 0.5.
        assert!(region.bounds.lower[0] >= 0.25 - 1e-12 && region.bounds.upper[0] <= 0.75 + 1e-12);
    }

    #[test]
    fn thompson_constant_intensity_ties_to_smallest_id() {
        // Identity Gamma (tiny lengthscale) keeps the tie exact in floats.
        let fx = fixture(5, 3, 0.0, 1e-3);
        let state = fx.state(1);
        let theta = DVector::from_element(5, 2.0);
        assert_eq!(act_cox_thompson(&state, &theta, false), 0);
        // Scale invariance of the ratio argmax.
        assert_eq!(act_cox_thompson(&state, &(theta * 7.0), false), 0);
    }

    #[test]
    fn thompson_matches_exhaustive_ratio_oracle() {
        let fx = fixture(64, 7, 0.0, 0.1);
        let state = fx.state(1);
        // Ground-truth-like coefficients: hat interpolation of the toy rate.
        let toy =
            |x: f64| 4.0 * (-(x + 1.0)).exp() * (2.0 * std::f64::consts::PI * x).sin().powi(2);
        let nodes = fx.posterior.basis().nodes().to_vec();
        let c = DVector::from_fn(64, |i, _| toy(nodes[i][0]));
        let theta = fx.node_values_to_theta(&c);
        let picked = act_cox_thompson(&state, &theta, false);

        // Oracle: fine trapezoid integration of the hat interpolant per leaf.
        let interp = |x: f64| -> f64 {
            fx.posterior
                .basis()
                .raw()
                .eval(&[x])
                .iter()
                .zip(c.iter())
                .map(|(p, ci)| p * ci)
                .sum()
        };
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, r) in fx.actions.regions().iter().enumerate() {
            let (a, b) = (r.bounds.lower[0], r.bounds.upper[0]);
            let n = 200;
            let h = (b - a) / n as f64;
            let mut integral = 0.5 * (interp(a) + interp(b));
            for k in 1..n {
                integral += interp(a + h * k as f64);
            }
            integral *= h;
            let ratio = integral / fx.costs[i];
            if ratio > best.1 {
                best = (i, ratio);
            }
        }
        assert_eq!(picked as usize, best.0);
    }

    struct ScriptedSampler {
        draws: Vec<DVector<f64>>,
        next: usize,
    }

    impl PosteriorDraw for ScriptedSampler {
        fn draw(&mut self) -> crate::error::Result<DVector<f64>> {
            let v = self.draws[self.next.min(self.draws.len() - 1)].clone();
            self.next += 1;
            Ok(v)
        }
    }

    fn peaked_theta(fx: &Fixture, node: usize) -> DVector<f64> {
        let m = fx.posterior.m();
        let mut c = DVector::from_element(m, 0.05);
        c[node] = 2.0;
        fx.node_values_to_theta(&c)
    }

    #[test]
    fn top2_max_flips_a_fair_coin_between_disagreeing_leaves() {
        let fx = fixture(9, 3, 0.0, 0.3);
        let state = fx.state(1);
        let left = peaked_theta(&fx, 1); // node at x = -0.75
        let right = peaked_theta(&fx, 7); // node at x = 0.75
        let mut counts = [0usize; 2];
        for trial in 0..1000 {
            let mut sampler = ScriptedSampler {
                draws: vec![left.clone(), right.clone()],
                next: 0,
            };
            let mut coin = stream(42, "coin", trial);
            let out = act_top2_max(&state, &mut sampler, 50, &mut coin).unwrap();
            assert!(!out.capped);
            assert_eq!(out.draws, 2);
            let mid = 0.5
                * (fx.actions.region(out.region).bounds.lower[0]
                    + fx.actions.region(out.region).bounds.upper[0]);
            if mid < 0.0 {
                counts[0] += 1;
            } else {
                counts[1] += 1;
            }
        }
        let freq = counts[0] as f64 / 1000.0;
        assert!((freq - 0.5).abs() <= 0.05, "coin frequency {freq}");
    }

    #[test]
    fn top2_max_cap_returns_first_recommendation() {
        let fx = fixture(9, 3, 0.0, 0.3);
        let state = fx.state(1);
        let peak = peaked_theta(&fx, 4); // x = 0, stays in one leaf
        let mut sampler = ScriptedSampler {
            draws: vec![peak],
            next: 0,
        };
        let mut coin = stream(1, "coin", 0);
        let out = act_top2_max(&state, &mut sampler, 50, &mut coin).unwrap();
        assert!(out.capped);
        assert_eq!(out.draws, 51);
        assert!(fx.actions.region(out.region).bounds.contains(&[0.0]));
    }

    #[test]
    fn top2_single_region_action_set() {
        let mut fx = fixture(5, 3, 0.0, 0.3);
        fx.actions = build_action_set(&unit_interval(), 0, true);
        fx.costs = vec![2.0];
        let bounds = vec![fx.actions.region(0).bounds.clone()];
        let ints = region_integrals(fx.posterior.basis(), &bounds).unwrap();
        fx.psi = vec![ints.transformed(0).clone()];
        fx.membership = fx.actions.grid_membership(&fx.grid);
        let a = peaked_theta(&fx, 0);
        let b = peaked_theta(&fx, 4);
        let state = fx.state(1);
        let mut sampler = ScriptedSampler {
            draws: vec![a, b],
            next: 0,
        };
        let mut coin = stream(2, "coin", 0);
        let out = act_top2_max(&state, &mut sampler, 50, &mut coin).unwrap();
        assert_eq!(out.region, 0);
    }

    #[test]
    fn top2_levelset_matches_grid_sum_oracle() {
        let fx = fixture(7, 0, 0.0, 0.25);
        // Manual 3-leaf tiling with distinct costs.
        let actions = ActionSet {
            domain: unit_interval(),
            regions: vec![
                Region {
                    id: 0,
                    bounds: BoxRegion::new(vec![-1.0], vec![-0.4]).unwrap(),
                    depth: 0,
                    parent: None,
                },
                Region {
                    id: 1,
                    bounds: BoxRegion::new(vec![-0.4], vec![0.3]).unwrap(),
                    depth: 0,
                    parent: None,
                },
                Region {
                    id: 2,
                    bounds: BoxRegion::new(vec![0.3], vec![1.0]).unwrap(),
                    depth: 0,
                    parent: None,
                },
            ],
            max_depth: 0,
            include_ancestors: false,
        };
        let costs = vec![0.6, 0.7, 0.7];
        let bounds: Vec<BoxRegion> = actions.regions().iter().map(|r| r.bounds.clone()).collect();
        let ints = region_integrals(fx.posterior.basis(), &bounds).unwrap();
        let psi: Vec<DVector<f64>> = (0..3).map(|i| ints.transformed(i).clone()).collect();
        let membership = actions.grid_membership(&fx.grid);
        let state = ProtocolState {
            actions: &actions,
            costs: &costs,
            psi: &psi,
            duration: 1.0,
            posterior: &fx.posterior,
            grid: &fx.grid,
            feats: &fx.feats,
            region_points: &membership,
            cell_weight: fx.weight,
            round: 1,
        };

        let t1 = peaked_theta(&fx, 1);
        let t2 = peaked_theta(&fx, 5);
        let tau = 0.9;
        let mut sampler = ScriptedSampler {
            draws: vec![t1.clone(), t2.clone()],
            next: 0,
        };
        let out = act_top2_levelset(&state, &mut sampler, tau, 50, &[0, 0, 0]).unwrap();
        assert!(!out.fallback);

        // Hand evaluation of the acquisition on the same grid.
        let v1 = &fx.feats * &t1;
        let v2 = &fx.feats * &t2;
        let mut scores = vec![0.0f64; 3];
        for (i, x) in fx.grid.iter().enumerate() {
            let s1 = v1[i] >= tau;
            let s2 = v2[i] >= tau;
            if s1 != s2 {
                let mag = (v1[i] - v2[i]).abs() * fx.weight;
                for (ri, r) in actions.regions().iter().enumerate() {
                    if r.bounds.contains(x) {
                        scores[ri] += mag;
                    }
                }
            }
        }
        let oracle = scores
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s / costs[i]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(out.region as usize, oracle);
    }

    #[test]
    fn top2_levelset_agreement_falls_back_round_robin() {
        let fx = fixture(9, 2, 0.0, 0.3);
        let state = fx.state(1);
        let t = peaked_theta(&fx, 4);
        let mut sampler = ScriptedSampler {
            draws: vec![t],
            next: 0,
        };
        let visits = [3usize, 1, 2, 1];
        let out = act_top2_levelset(&state, &mut sampler, 0.5, 10, &visits).unwrap();
        assert!(out.fallback && out.capped);
        // Least-visited regions are 1 and 3 at equal cost: smallest id wins.
        assert_eq!(out.region, 1);
    }

    #[test]
    fn epsilon_greedy_schedule() {
        let mut fx = fixture(5, 3, 0.1, 0.3);
        fx.posterior.refresh(1e-8).unwrap();
        let map = fx.posterior.cached_map().unwrap().clone();
        let state = fx.state(1);
        let mut rng = stream(3, "algorithm", 0);
        let greedy = act_epsilon_greedy(&state, 0.0, &map, &mut rng);
        assert_eq!(greedy, act_cox_thompson(&state, &map, false));

        // Huge epsilon0: uniform over actions.
        let n = fx.actions.len();
        let mut counts = vec![0usize; n];
        for trial in 0..10_000u64 {
            let mut rng = stream(5, "algorithm", trial);
            counts[act_epsilon_greedy(&state, 1e9, &map, &mut rng) as usize] += 1;
        }
        let expected = 10_000.0 / n as f64;
        let sigma = (expected * (1.0 - 1.0 / n as f64)).sqrt();
        for (i, c) in counts.iter().enumerate() {
            assert!(
                (*c as f64 - expected).abs() <= 4.0 * sigma,
                "region {i} count {c} vs {expected}"
            );
        }

        // Exploration probability at t = 4 with epsilon0 = 1 is exactly 1/2.
        let state4 = fx.state(4);
        let mut explored = 0usize;
        let trials = 20_000u64;
        for trial in 0..trials {
            let mut rng = stream(7, "algorithm", trial);
            if act_epsilon_greedy(&state4, 1.0, &map, &mut rng) != greedy {
                explored += 1;
            }
        }
        let p_observed = explored as f64 / trials as f64;
        // Exploration picks the greedy region itself with probability 1/n.
        let p_expected = 0.5 * (1.0 - 1.0 / n as f64);
        assert!(
            (p_observed - p_expected).abs() <= 0.02,
            "exploration rate {p_observed} vs {p_expected}"
        );
    }

    #[test]
    fn ucb_empty_log_scores_are_flat() {
        let mut fx = fixture(8, 3, 0.1, 1e-3);
        fx.posterior.refresh(1e-11).unwrap();
        let state = fx.state(1);
        // beta = 0 collapses the ellipsoid: every cost ratio equals the
        // prior rate, up to MAP solver noise. (The exact-tie rule is
        // exercised by the bitwise Thompson tie test.)
        let params = CredibleParams { beta: 0.0 };
        let scores: Vec<f64> = (0..fx.actions.len())
            .map(|i| {
                let scaled = &fx.psi[i] * 1.0;
                fx.posterior.ucb_argmax(&scaled, &params).unwrap().0 / fx.costs[i]
            })
            .collect();
        let spread = scores.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
            - scores.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        assert!(spread <= 1e-7, "beta = 0 scores spread {spread}");
        let picked = act_ucb_laplace(&state, &params).unwrap();
        assert!((picked as usize) < fx.actions.len());
    }

    #[test]
    fn ucb_zero_count_pathology_keeps_score_frozen() {
        // Empty-count sensing keeps both the corner MAP and the identity
        // precision, so the region's ucb never moves.
        let mut fx = fixture(8, 2, 0.1, 0.2);
        fx.posterior.refresh(1e-9).unwrap();
        let params = CredibleParams { beta: 3.0 };
        let scaled = fx.psi[2].clone();
        let (ucb_before, _) = fx.posterior.ucb_argmax(&scaled, &params).unwrap();
        fx.posterior
            .observe(Observation {
                region: fx.actions.region(2).bounds.clone(),
                region_id: Some(2),
                duration: 1.0,
                events: vec![],
            })
            .unwrap();
        fx.posterior.refresh(1e-9).unwrap();
        let (ucb_after, _) = fx.posterior.ucb_argmax(&scaled, &params).unwrap();
        assert!(
            (ucb_after - ucb_before).abs() <= 1e-6,
            "ucb moved after a zero-count round: {ucb_before} -> {ucb_after}"
        );
        assert_eq!(
            fx.posterior.cached_precision().unwrap(),
            &DMatrix::identity(8, 8)
        );
    }

    #[test]
    fn v_optimal_trivial_score_and_tie() {
        // Sigma_L = I and M_R = I with no simulated events: the score is
        // m / w(A) for every region.
        let m = 4;
        let m_r = DMatrix::identity(m, m);
        let precision = DMatrix::identity(m, m);
        let map = DVector::from_element(m, 1.0);
        let score = v_optimal_score(&m_r, &precision, &[vec![], vec![]], &map, 2.0).unwrap();
        assert_relative_eq!(score, m as f64 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn v_optimal_single_draw_hand_check() {
        let m_r = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let precision = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let map = DVector::from_vec(vec![1.0, 2.0]);
        let f = DVector::from_vec(vec![0.6, 0.8]);
        let score = v_optimal_score(&m_r, &precision, &[vec![f.clone()]], &map, 1.5).unwrap();
        let v = f.dot(&map);
        let mut h = precision.clone();
        h.syger(1.0 / (v * v), &f, &f, 1.0);
        h[(0, 1)] = h[(1, 0)];
        let expected = (h.try_inverse().unwrap() * &m_r).trace() / 1.5;
        assert_relative_eq!(score, expected, epsilon = 1e-10);
    }

    #[test]
    fn v_optimal_region_of_interest_shrinks_with_tighter_bounds() {
        // With ellipsoid-only bounds (polytope pushed far away), shrinking
        // beta shrinks the maximum-objective region of interest.
        let mut fx = fixture(8, 3, -1e9, 0.3);
        fx.posterior
            .observe(Observation {
                region: unit_interval().as_region(),
                region_id: None,
                duration: 4.0,
                events: vec![vec![-0.2], vec![0.0], vec![0.1], vec![0.3]],
            })
            .unwrap();
        fx.posterior.refresh(1e-8).unwrap();
        let count_rt = |beta: f64| -> usize {
            let bounds = fx
                .posterior
                .pointwise_bounds(&fx.grid, &CredibleParams { beta })
                .unwrap();
            let max_lcb = bounds
                .iter()
                .map(|(_, l)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            bounds.iter().filter(|(u, _)| *u >= max_lcb).count()
        };
        let wide = count_rt(4.0);
        let tight = count_rt(0.5);
        assert!(tight <= wide, "region of interest grew: {wide} -> {tight}");
    }
}
