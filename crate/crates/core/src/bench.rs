//! Wall-clock comparison of exact leave-one-out refits against the
//! approximation, across sample sizes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aloocv::{acv_vector, AcvOptions};
use crate::data;
use crate::error::{Error, Result};
use crate::model::{LambdaVector, RegularizedObjective};
use crate::models::ModelFamily;
use crate::solver::{fit, loocv_refits, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub family: ModelFamily,
    pub p: usize,
    pub lambda: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub seed: u64,
    /// Each timing is the minimum over this many runs.
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub exact_seconds: f64,
    pub acv_seconds: f64,
    pub ratio: f64,
}

/// Times, for each `n`, the full fit followed by either all `n` exact refits or
/// the approximate vector. Runs on the calling thread's rayon pool; install a
/// one-thread pool for timings free of parallel speedup.
pub fn runtime_scaling(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.n_grid.is_empty() || config.repeats == 0 {
        return Err(Error::InvalidInput("bench needs a non-empty grid and repeats ≥ 1".into()));
    }
    let (loss, regs) = config.family.build(config.p, true)?;
    let objective = RegularizedObjective::new(loss, regs, LambdaVector::new(config.lambda.clone())?)?;
    let solver = SolverConfig::default();
    config
        .n_grid
        .iter()
        .map(|&n| {
            let dataset = match config.family {
                ModelFamily::Logistic => data::synth_logistic(n, config.p, 2.0, config.seed)?.dataset,
                ModelFamily::ElasticNet => data::synth_elastic(n, config.p, 1.0, config.seed)?.dataset,
                _ => data::synth_ridge(n, config.p, config.p.div_ceil(2), 0.1, config.seed)?.dataset,
            };
            let mut exact = f64::INFINITY;
            let mut approx = f64::INFINITY;
            for _ in 0..config.repeats {
                let start = Instant::now();
                let full = fit(&dataset, &objective, &solver, &[], None)?;
                loocv_refits(&dataset, &objective, &solver, full.theta())?;
                exact = exact.min(start.elapsed().as_secs_f64());

                let start = Instant::now();
                let full = fit(&dataset, &objective, &solver, &[], None)?;
                acv_vector(&dataset, &full, &objective, &AcvOptions::default())?;
                approx = approx.min(start.elapsed().as_secs_f64());
            }
            Ok(BenchRow {
                n,
                exact_seconds: exact,
                acv_seconds: approx,
                ratio: exact / approx,
            })
        })
        .collect()
}
