//! Experiment configuration: a strict, diffable TOML schema.
//!
//! Unknown keys are rejected, all referenced files are checked before any
//! computation starts, and a SHA-256 hash of the canonical serialization is
//! embedded in every output file so runs can be traced back to their exact
//! configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::Arc;

use crate::basis::{
    build_bernstein_basis, build_hat_basis, build_nmf_basis, gamma_transform, BasisModel,
    NmfOptions,
};
use crate::error::{Error, Result};
use crate::kernels::{Domain, GridTable, KernelSpec, ScalarField};
use crate::samplers::SamplerConfig;
use crate::sensing::{CostModel, DesignObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Positional scalar field (lengthscale fields, indicator weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant { value: f64 },
    Affine { intercept: f64, slopes: Vec<f64> },
    /// Grid CSV with header `x[,y],value`, nearest-neighbor lookup.
    Csv { path: PathBuf },
}

impl FieldConfig {
    fn build(&self) -> Result<ScalarField> {
        Ok(match self {
            FieldConfig::Constant { value } => ScalarField::Constant(*value),
            FieldConfig::Affine { intercept, slopes } => ScalarField::Affine {
                intercept: *intercept,
                slopes: slopes.clone(),
            },
            FieldConfig::Csv { path } => ScalarField::Grid(GridTable::from_csv(path)?),
        })
    }

    fn validate(&self, field: &str) -> Result<()> {
        if let FieldConfig::Csv { path } = self {
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "{field}: file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// One of `squared-exponential`, `laplace`, `gibbs`, `product-of-1d`.
    pub family: String,
    #[serde(default)]
    pub lengthscale: Option<f64>,
    /// Per-axis lengthscales for `product-of-1d`.
    #[serde(default)]
    pub lengthscales: Option<Vec<f64>>,
    /// Lengthscale field for `gibbs`.
    #[serde(default)]
    pub lengthscale_field: Option<FieldConfig>,
    /// Indicator weight `w(x)` in `[0, 1]`.
    #[serde(default)]
    pub weight: Option<FieldConfig>,
    #[serde(default = "default_variance")]
    pub variance: f64,
}

fn default_variance() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        let mut spec = match self.family.as_str() {
            "squared-exponential" => KernelSpec::squared_exponential(
                self.lengthscale
                    .ok_or_else(|| Error::Validation("kernel.lengthscale required".into()))?,
            ),
            "laplace" => KernelSpec::laplace(
                self.lengthscale
                    .ok_or_else(|| Error::Validation("kernel.lengthscale required".into()))?,
            ),
            "gibbs" => KernelSpec::gibbs(
                self.lengthscale_field
                    .as_ref()
                    .ok_or_else(|| {
                        Error::Validation("kernel.lengthscale_field required for gibbs".into())
                    })?
                    .build()?,
            ),
            "product-of-1d" => KernelSpec::product_of_1d(
                self.lengthscales
                    .clone()
                    .ok_or_else(|| Error::Validation("kernel.lengthscales required".into()))?,
            ),
            other => {
                return Err(Error::Validation(format!(
                    "kernel.family: unknown family {other:?}; expected squared-exponential, \
                     laplace, gibbs, or product-of-1d"
                )))
            }
        };
        if let Some(weight) = &self.weight {
            spec = spec.with_weight(weight.build()?);
        }
        spec = spec.with_variance(self.variance);
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if let Some(f) = &self.weight {
            f.validate("kernel.weight")?;
        }
        if let Some(f) = &self.lengthscale_field {
            f.validate("kernel.lengthscale_field")?;
        }
        self.build().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// One of `hat`, `bernstein`, `nmf`.
    pub kind: String,
    /// Total basis size; must be a d-th power for tensor bases in d > 1.
    pub m: usize,
    /// Seed for the NMF construction (independent of the run seed so the
    /// basis is shared across repetitions).
    #[serde(default)]
    pub basis_seed: u64,
    /// NMF grid points per axis (0 = automatic).
    #[serde(default)]
    pub nmf_grid: usize,
    /// NMF sample-path count (0 = `20 m`).
    #[serde(default)]
    pub nmf_samples: usize,
    #[serde(default = "default_rejection_budget")]
    pub nmf_rejection_budget: usize,
    #[serde(default = "default_nmf_iterations")]
    pub nmf_iterations: usize,
}

fn default_rejection_budget() -> usize {
    100_000
}

fn default_nmf_iterations() -> usize {
    500
}

impl BasisConfig {
    fn per_axis(&self, dim: usize) -> Result<usize> {
        let per = (self.m as f64).powf(1.0 / dim as f64).round() as usize;
        if per.pow(dim as u32) != self.m {
            return Err(Error::Validation(format!(
                "basis.m = {} is not a {dim}-th power of a per-axis count",
                self.m
            )));
        }
        Ok(per)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub max_depth: u32,
    #[serde(default)]
    pub include_ancestors: bool,
}

/// Metrics recorded per protocol round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    CountRegret,
    InferenceRegret,
    LevelSetF1,
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::CountRegret]
}

/// Acquisition strategy and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    CoxThompson {
        /// Use the uncosted `argmax psi' theta` instead of the ratio.
        #[serde(default)]
        ignore_cost: bool,
    },
    Top2Max {
        #[serde(default = "default_resample_cap")]
        resample_cap: usize,
    },
    Top2Levelset {
        #[serde(default = "default_resample_cap")]
        resample_cap: usize,
    },
    UcbLaplace {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    VOptimal {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_n_resamples")]
        n_resamples: usize,
        objective: DesignObjective,
    },
    EpsilonGreedy {
        #[serde(default = "default_epsilon0")]
        epsilon0: f64,
    },
    Random,
}

fn default_resample_cap() -> usize {
    50
}

fn default_beta() -> f64 {
    3.0
}

fn default_n_resamples() -> usize {
    10
}

fn default_epsilon0() -> f64 {
    1.0
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::CoxThompson { .. } => "cox-thompson",
            AlgorithmConfig::Top2Max { .. } => "top2-max",
            AlgorithmConfig::Top2Levelset { .. } => "top2-levelset",
            AlgorithmConfig::UcbLaplace { .. } => "ucb-laplace",
            AlgorithmConfig::VOptimal { .. } => "v-optimal",
            AlgorithmConfig::EpsilonGreedy { .. } => "epsilon-greedy",
            AlgorithmConfig::Random => "random",
        }
    }

    /// Whether the acquisition requires a refreshed posterior each round.
    pub fn needs_posterior(&self) -> bool {
        !matches!(self, AlgorithmConfig::Random)
    }

    fn validate(&self, threshold: Option<f64>) -> Result<()> {
        match self {
            AlgorithmConfig::UcbLaplace { beta } | AlgorithmConfig::VOptimal { beta, .. }
                if !(*beta >= 0.0) =>
            {
                return Err(Error::Validation(format!(
                    "algorithm.beta must be nonnegative, got {beta}"
                )))
            }
            AlgorithmConfig::EpsilonGreedy { epsilon0 } if !(*epsilon0 >= 0.0) => {
                return Err(Error::Validation(format!(
                    "algorithm.epsilon0 must be nonnegative, got {epsilon0}"
                )))
            }
            AlgorithmConfig::Top2Max { resample_cap }
            | AlgorithmConfig::Top2Levelset { resample_cap }
                if *resample_cap == 0 =>
            {
                return Err(Error::Validation("algorithm.resample_cap must be >= 1".into()))
            }
            AlgorithmConfig::VOptimal { n_resamples, .. } if *n_resamples == 0 => {
                return Err(Error::Validation("algorithm.n_resamples must be >= 1".into()))
            }
            _ => {}
        }
        let needs_tau = matches!(
            self,
            AlgorithmConfig::Top2Levelset { .. }
                | AlgorithmConfig::VOptimal {
                    objective: DesignObjective::Levelset,
                    ..
                }
        );
        if needs_tau {
            match threshold {
                Some(t) if t > 0.0 => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "algorithm {} requires a positive threshold tau",
                        self.name()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Full description of a single protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub basis: BasisConfig,
    /// Truncation level `l` of the intensity prior.
    pub lower_bound: f64,
    /// Level-set threshold `tau` (required by level-set algorithms and F1).
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Sensing duration `Delta` per action.
    pub duration: f64,
    pub actions: ActionConfig,
    pub cost: CostModel,
    pub algorithm: AlgorithmConfig,
    /// Total sensing budget `C` (`inf` for round-capped runs).
    pub budget: f64,
    /// Round cap `T`.
    pub rounds: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// `toy`, `two-bump`, `constant:<c>`, or `file:<path>`.
    pub ground_truth: String,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Evaluation grid per axis (0 = 512 in 1-d, 128 in 2-d).
    #[serde(default)]
    pub grid: usize,
    /// Simulator grid per axis (0 = 512 in 1-d, 128 in 2-d).
    #[serde(default)]
    pub sim_grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex(&hasher.finalize())
    }

    pub fn eval_grid_resolution(&self) -> usize {
        resolve_grid(self.grid, self.domain.lower.len())
    }

    pub fn sim_grid_resolution(&self) -> usize {
        resolve_grid(self.sim_grid, self.domain.lower.len())
    }

    pub fn build_domain(&self) -> Result<Domain> {
        Domain::new(self.domain.lower.clone(), self.domain.upper.clone())
    }

    pub fn build_kernel(&self) -> Result<KernelSpec> {
        self.kernel.build()
    }

    pub fn build_cost_model(&self) -> Result<CostModel> {
        self.cost.validate()?;
        Ok(self.cost)
    }

    pub fn build_raw_basis(&self) -> Result<crate::basis::RawBasis> {
        let domain = self.build_domain()?;
        let kernel = self.build_kernel()?;
        let dim = domain.dim();
        match self.basis.kind.as_str() {
            "hat" => build_hat_basis(&domain, self.basis.per_axis(dim)?),
            "bernstein" => build_bernstein_basis(&domain, self.basis.per_axis(dim)? - 1),
            "nmf" => build_nmf_basis(
                &kernel,
                &domain,
                self.basis.m,
                &NmfOptions {
                    n_grid: self.basis.nmf_grid,
                    n_samples: self.basis.nmf_samples,
                    seed: self.basis.basis_seed,
                    max_rejection_draws: self.basis.nmf_rejection_budget,
                    max_iterations: self.basis.nmf_iterations,
                },
            ),
            other => Err(Error::Validation(format!(
                "basis.kind: unknown kind {other:?}; expected hat, bernstein, or nmf"
            ))),
        }
    }

    pub fn build_basis_model(&self) -> Result<BasisModel> {
        let raw = self.build_raw_basis()?;
        let kernel = self.build_kernel()?;
        Ok(gamma_transform(raw, kernel)?.with_lower_bound(self.lower_bound))
    }

    /// Shared basis wrapped for concurrent posterior use.
    pub fn build_basis_arc(&self) -> Result<Arc<BasisModel>> {
        Ok(Arc::new(self.build_basis_model()?))
    }

    /// Checks every invariant that does not require heavy computation; all
    /// commands validate before producing any output.
    pub fn validate(&self) -> Result<()> {
        let domain = self.build_domain()?;
        self.kernel.validate()?;
        if self.basis.kind != "nmf" {
            self.basis.per_axis(domain.dim())?;
        } else if self.basis.m == 0 {
            return Err(Error::Validation("basis.m must be positive".into()));
        }
        if !(self.lower_bound >= 0.0) {
            return Err(Error::Validation(format!(
                "lower_bound must be nonnegative, got {}",
                self.lower_bound
            )));
        }
        if let Some(tau) = self.threshold {
            if !(tau > 0.0) {
                return Err(Error::Validation(format!(
                    "threshold must be positive, got {tau}"
                )));
            }
        }
        if !(self.duration > 0.0) {
            return Err(Error::Validation(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        self.cost.validate().map_err(|e| Error::Validation(e.to_string()))?;
        self.algorithm.validate(self.threshold)?;
        if self.budget < 0.0 || self.budget.is_nan() {
            return Err(Error::Validation(format!(
                "budget must be nonnegative, got {}",
                self.budget
            )));
        }
        if self.metrics.contains(&MetricKind::LevelSetF1) && self.threshold.is_none() {
            return Err(Error::Validation(
                "level-set-f1 metric requires a threshold".into(),
            ));
        }
        if self.eval_grid_resolution() < 2 || self.sim_grid_resolution() < 2 {
            return Err(Error::Validation("grids need at least 2 points per axis".into()));
        }
        if domain.dim() > 2 {
            return Err(Error::Validation(
                "runs support 1- or 2-dimensional domains".into(),
            ));
        }
        // Referenced files must exist before any computation.
        if let Some(path) = self.ground_truth.strip_prefix("file:") {
            if !std::path::Path::new(path).exists() {
                return Err(Error::Validation(format!(
                    "ground_truth: file {path} does not exist"
                )));
            }
        } else {
            // Parse analytic names early for a clean error.
            crate::harness::GroundTruth::from_named(&self.ground_truth, &domain, 8).map(|_| ())?;
        }
        Ok(())
    }
}

fn resolve_grid(configured: usize, dim: usize) -> usize {
    if configured > 0 {
        configured
    } else if dim == 1 {
        512
    } else {
        128
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A suite: one experiment template swept over algorithms and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub experiment: ExperimentConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    pub seeds: Vec<u64>,
    /// Worker threads for the suite (None = rayon default).
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("suite config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("suite config serializes")
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex(&hasher.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.seeds.is_empty() {
            return Err(Error::Validation(
                "suite needs at least one algorithm and one seed".into(),
            ));
        }
        for algorithm in &self.algorithms {
            let mut experiment = self.experiment.clone();
            experiment.algorithm = algorithm.clone();
            experiment.validate()?;
        }
        Ok(())
    }
}
