//! Run configuration: a JSON file with `dataset`, `model`, `solver`,
//! `estimator`, `tuner` and `bench` sections. Every field has a default, and
//! command-line flags override file values before validation.

use std::path::{Path, PathBuf};

use aloocv::aloocv::DowndateMode;
use aloocv::models::ModelFamily;
use aloocv::solver::SolverConfig;
use aloocv::tuner::{EvaluationPoint, StepRule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub estimator: EstimatorSection,
    pub tuner: TunerSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SynthRidge,
    SynthElastic,
    SynthLogistic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub source: Source,
    pub n: usize,
    pub p: usize,
    /// `synth_ridge`: number of nonzero coordinates of `θ*` (the last ones);
    /// defaults to `p / 5`, at least one.
    pub n_relevant: Option<usize>,
    pub noise_var: f64,
    /// `synth_logistic`: standard deviation of the true margin.
    pub signal: f64,
    pub seed: u64,
    /// Extra synthetic samples drawn from the same `θ*` for out-of-sample loss.
    pub holdout_n: usize,
    pub path: Option<PathBuf>,
    pub holdout_path: Option<PathBuf>,
    pub label_column: String,
    /// Keep only rows with these two labels, mapped to 0 and 1.
    pub binarize: Option<(String, String)>,
}

impl DatasetSection {
    pub fn relevant(&self) -> usize {
        self.n_relevant.unwrap_or((self.p / 5).max(1))
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: Source::SynthRidge,
            n: 150,
            p: 50,
            n_relevant: None,
            noise_var: 0.1,
            signal: 1.0,
            seed: 0,
            holdout_n: 0,
            path: None,
            holdout_path: None,
            label_column: "y".into(),
            binarize: None,
        }
    }
}

/// One weight broadcast to every regularizer, or one per regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Uniform(f64),
    PerTerm(Vec<f64>),
}

impl LambdaSpec {
    pub fn expand(&self, m: usize) -> Result<Vec<f64>, CliError> {
        match self {
            LambdaSpec::Uniform(v) => Ok(vec![*v; m]),
            LambdaSpec::PerTerm(v) if v.len() == m => Ok(v.clone()),
            LambdaSpec::PerTerm(v) => Err(CliError::Validation(format!(
                "lambda has {} entries but the model has {m} regularizers",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: ModelFamily,
    pub lambda: LambdaSpec,
    /// Logistic only.
    pub intercept: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            family: ModelFamily::RidgeDiagonal,
            lambda: LambdaSpec::Uniform(1.0 / 3.0),
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            gradient_tolerance: d.gradient_tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

impl SolverSection {
    pub fn build(&self) -> SolverConfig {
        SolverConfig {
            gradient_tolerance: self.gradient_tolerance,
            max_iterations: self.max_iterations,
            ..SolverConfig::default()
        }
    }
}

pub const TABLE_GRID: [f64; 7] = [3.3333, 1.6667, 0.8333, 0.4167, 0.2083, 0.1042, 0.0521];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    /// Run exact leave-one-out refits alongside the approximation.
    pub exact: bool,
    pub influence: bool,
    pub mode: DowndateMode,
    /// `compare` sweeps these weights.
    pub lambda_grid: Vec<LambdaSpec>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            exact: true,
            influence: true,
            mode: DowndateMode::RankOne,
            lambda_grid: TABLE_GRID.iter().map(|&l| LambdaSpec::Uniform(l)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Batch,
    Stochastic,
}

/// Named index set whose mean λ is reported per trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub algorithm: Algorithm,
    /// Defaults to backtracking for batch runs and `1/√t` decay for stochastic ones.
    pub step_rule: Option<StepRule>,
    pub alpha0: f64,
    pub max_epochs: usize,
    pub lower_bound: f64,
    /// Sampling seed; defaults to the dataset seed.
    pub seed: Option<u64>,
    pub evaluation: EvaluationPoint,
    pub gradient_tolerance: f64,
    pub refit_every: Option<usize>,
    pub warm_start: bool,
    pub groups: Option<Vec<LambdaGroup>>,
}

impl Default for TunerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Batch,
            step_rule: None,
            alpha0: 1.0,
            max_epochs: 100,
            lower_bound: 0.0,
            seed: None,
            evaluation: EvaluationPoint::Approximate,
            gradient_tolerance: 0.0,
            refit_every: None,
            warm_start: true,
            groups: None,
        }
    }
}

impl TunerSection {
    pub fn step_rule(&self) -> StepRule {
        self.step_rule.clone().unwrap_or(match self.algorithm {
            Algorithm::Batch => StepRule::backtracking(self.alpha0),
            Algorithm::Stochastic => StepRule::Decay { alpha0: self.alpha0 },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n_grid: Vec<usize>,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 400, 800, 1600],
            repeats: 3,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", p.display())))
            }
        }
    }

    /// SHA-256 of the effective configuration's canonical JSON.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        let bad = |msg: &str| Err(CliError::Validation(msg.to_string()));
        if d.source == Source::Csv && d.path.is_none() {
            return bad("dataset.path is required for the csv source");
        }
        if d.source != Source::Csv && (d.n < 2 || d.p == 0) {
            return bad("synthetic datasets need n ≥ 2 and p ≥ 1");
        }
        if self.solver.gradient_tolerance.is_nan() || self.solver.gradient_tolerance <= 0.0 || self.solver.max_iterations == 0 {
            return bad("solver tolerance must be > 0 and max_iterations ≥ 1");
        }
        let check_lambda = |l: &LambdaSpec| match l {
            LambdaSpec::Uniform(v) => v.is_finite() && *v >= 0.0,
            LambdaSpec::PerTerm(v) => v.iter().all(|x| x.is_finite() && *x >= 0.0),
        };
        if !check_lambda(&self.model.lambda) || !self.estimator.lambda_grid.iter().all(check_lambda) {
            return bad("lambda entries must be finite and ≥ 0");
        }
        if self.bench.repeats == 0 {
            return bad("bench.repeats must be ≥ 1");
        }
        Ok(())
    }
}
