use std::path::Path;
use std::time::Instant;

use aloocv::aloocv::{acv_vector, AcvOptions, UndefinedEstimate};
use aloocv::baselines::align;
use aloocv::bench::{runtime_scaling, BenchConfig};
use aloocv::data::{self, SyntheticData};
use aloocv::models::ModelFamily;
use aloocv::solver::{fit, mean, FittedModel};
use aloocv::tuner::{tune_batch, tune_stochastic, TuneConfig, TuneFailure, TuneOutcome, TuneTrace};
use aloocv::{Dataset, LambdaVector, RegularizedObjective};
use serde::Serialize;

use crate::config::{Algorithm, Config, LambdaGroup, LambdaSpec, Source};
use crate::error::CliError;
use crate::report::{cell, write_json, write_table, Envelope};

/// Training data, optional held-out data and, for synthetic sources, `θ*`.
pub struct Loaded {
    pub train: Dataset,
    pub holdout: Option<Dataset>,
    pub theta_star: Option<Vec<f64>>,
}

fn synthesize(config: &Config, n: usize) -> Result<SyntheticData, CliError> {
    let d = &config.dataset;
    Ok(match d.source {
        Source::SynthRidge => data::synth_ridge(n, d.p, d.relevant(), d.noise_var, d.seed)?,
        Source::SynthElastic => data::synth_elastic(n, d.p, d.noise_var, d.seed)?,
        Source::SynthLogistic => data::synth_logistic(n, d.p, d.signal, d.seed)?,
        Source::Csv => unreachable!("csv sources are loaded, not synthesized"),
    })
}

pub fn load(config: &Config) -> Result<Loaded, CliError> {
    let d = &config.dataset;
    if d.source == Source::Csv {
        let binarize = d.binarize.as_ref().map(|(a, b)| (a.as_str(), b.as_str()));
        let path = d.path.as_ref().expect("validated");
        let train = data::load_csv(path, &d.label_column, binarize)?;
        let holdout = match &d.holdout_path {
            Some(h) => Some(data::load_csv(h, &d.label_column, binarize)?),
            None => None,
        };
        return Ok(Loaded {
            train,
            holdout,
            theta_star: None,
        });
    }
    let synth = synthesize(config, d.n + d.holdout_n)?;
    let samples = synth.dataset.samples();
    let train = Dataset::new(samples[..d.n].to_vec())?;
    let holdout = match d.holdout_n {
        0 => None,
        _ => Some(Dataset::new(samples[d.n..].to_vec())?),
    };
    Ok(Loaded {
        train,
        holdout,
        theta_star: Some(synth.theta_star.iter().copied().collect()),
    })
}

pub fn build_objective(config: &Config, p: usize, lambda: &LambdaSpec) -> Result<RegularizedObjective, CliError> {
    let (loss, regs) = config.model.family.build(p, config.model.intercept)?;
    let values = lambda.expand(regs.len())?;
    Ok(RegularizedObjective::new(loss, regs, LambdaVector::new(values)?)?)
}

fn mean_loss(objective: &RegularizedObjective, dataset: &Dataset, theta: &FittedModel) -> f64 {
    let losses: Vec<f64> = dataset
        .samples()
        .iter()
        .map(|s| objective.loss().loss(s, theta.theta()))
        .collect();
    mean(&losses)
}

#[derive(Serialize)]
struct FitResult {
    converged: bool,
    iterations: usize,
    final_gradient_norm: f64,
    lambda: Vec<f64>,
    theta_hat: Vec<f64>,
    active_set: Option<Vec<usize>>,
    in_sample_loss: f64,
    out_of_sample_loss: Option<f64>,
    objective: f64,
    n: usize,
    p: usize,
    wall_time_seconds: f64,
}

pub fn cmd_fit(config: &Config, out: &Path) -> Result<(), CliError> {
    let data = load(config)?;
    let objective = build_objective(config, data.train.p(), &config.model.lambda)?;
    let start = Instant::now();
    let fitted = fit(&data.train, &objective, &config.solver.build(), &[], None)?;
    let result = FitResult {
        converged: fitted.converged,
        iterations: fitted.iterations,
        final_gradient_norm: fitted.final_gradient_norm,
        lambda: fitted.lambda.as_slice().to_vec(),
        theta_hat: fitted.theta().iter().copied().collect(),
        active_set: fitted.active_set.clone(),
        in_sample_loss: mean_loss(&objective, &data.train, &fitted),
        out_of_sample_loss: data.holdout.as_ref().map(|h| mean_loss(&objective, h, &fitted)),
        objective: objective.total(&data.train, fitted.theta(), &[]),
        n: data.train.n(),
        p: data.train.p(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("fit.json"), &Envelope::new("fit", config, result))
}

#[derive(Serialize)]
struct Estimate {
    mean: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct CompareRow {
    lambda: Vec<f64>,
    in_sample_loss: f64,
    out_of_sample_loss: Option<f64>,
    cv: Option<Estimate>,
    acv: Estimate,
    influence: Option<Estimate>,
    /// Indices whose approximate estimate is undefined, with the reason.
    undefined: Vec<UndefinedEstimate>,
    /// Influence mean below the ACV mean, and ACV closer to CV than influence.
    overfit_ordering: Option<bool>,
    fit_iterations: usize,
    acv_seconds: f64,
}

pub fn cmd_compare(config: &Config, out: &Path) -> Result<(), CliError> {
    let data = load(config)?;
    let est = &config.estimator;
    if est.lambda_grid.is_empty() {
        return Err(CliError::Validation("estimator.lambda_grid is empty".into()));
    }
    let objectives = est
        .lambda_grid
        .iter()
        .map(|l| build_objective(config, data.train.p(), l))
        .collect::<Result<Vec<_>, _>>()?;
    let options = AcvOptions {
        with_exact: est.exact,
        with_if: est.influence,
        mode: est.mode,
        solver: config.solver.build(),
    };
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (k, objective) in objectives.iter().enumerate() {
        let fitted = fit(&data.train, objective, &options.solver, &[], None)?;
        let report = acv_vector(&data.train, &fitted, objective, &options)?;
        let pair = |m: Option<f64>, s: Option<f64>| m.zip(s).map(|(mean, std_error)| Estimate { mean, std_error });
        let ordering = match (report.cv_mean, report.if_mean) {
            (Some(cv), Some(inf)) => Some(inf < report.acv_mean && (report.acv_mean - cv).abs() < (inf - cv).abs()),
            _ => None,
        };
        let lambda = objective.lambda().as_slice().to_vec();
        for a in align(&data.train, &fitted, objective, &report) {
            let mut row = vec![k.to_string(), format_lambda(&lambda), a.index.to_string()];
            row.extend(
                [Some(a.in_sample), a.cv, Some(a.acv), a.influence, a.normalized_difference]
                    .into_iter()
                    .map(cell),
            );
            samples.push(row);
        }
        rows.push(CompareRow {
            in_sample_loss: mean_loss(objective, &data.train, &fitted),
            out_of_sample_loss: data.holdout.as_ref().map(|h| mean_loss(objective, h, &fitted)),
            cv: pair(report.cv_mean, report.cv_std_error),
            acv: Estimate {
                mean: report.acv_mean,
                std_error: report.acv_std_error,
            },
            influence: pair(report.if_mean, report.if_std_error),
            undefined: report.undefined,
            overfit_ordering: ordering,
            fit_iterations: fitted.iterations,
            acv_seconds: report.wall_time.as_secs_f64(),
            lambda,
        });
    }
    let header: Vec<String> = [
        "lambda_index",
        "lambda",
        "index",
        "in_sample",
        "cv",
        "acv",
        "influence",
        "normalized_difference",
    ]
    .map(String::from)
    .to_vec();
    write_table(&out.join("per_sample.csv"), &header, &samples)?;
    write_json(&out.join("compare.json"), &Envelope::new("compare", config, rows))
}

/// `λ` as a `;`-separated list so it fits one CSV cell.
fn format_lambda(l: &[f64]) -> String {
    l.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";")
}

fn lambda_groups(config: &Config, m: usize) -> Result<Vec<LambdaGroup>, CliError> {
    if let Some(groups) = &config.tuner.groups {
        if groups.iter().any(|g| g.indices.is_empty() || g.indices.iter().any(|&i| i >= m)) {
            return Err(CliError::Validation(format!(
                "tuner.groups must hold non-empty index sets below {m}"
            )));
        }
        return Ok(groups.clone());
    }
    let d = &config.dataset;
    let split = m.saturating_sub(d.relevant());
    if d.source == Source::SynthRidge && config.model.family == ModelFamily::RidgeDiagonal && split > 0 && split < m {
        return Ok(vec![
            LambdaGroup {
                name: "irrelevant".into(),
                indices: (0..split).collect(),
            },
            LambdaGroup {
                name: "relevant".into(),
                indices: (split..m).collect(),
            },
        ]);
    }
    Ok(Vec::new())
}

fn group_means(groups: &[LambdaGroup], lambda: &[f64]) -> Vec<f64> {
    groups
        .iter()
        .map(|g| g.indices.iter().map(|&i| lambda[i]).sum::<f64>() / g.indices.len() as f64)
        .collect()
}

fn write_trace(path: &Path, trace: &TuneTrace, groups: &[LambdaGroup], m: usize) -> Result<(), CliError> {
    let mut header: Vec<String> = ["t", "acv_mean", "gradient_norm", "refit_iterations", "wall_time"]
        .map(String::from)
        .to_vec();
    header.extend(groups.iter().map(|g| format!("mean_lambda_{}", g.name)));
    header.extend((1..=m).map(|j| format!("lambda_{j}")));
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.t.to_string(),
                cell(Some(r.acv_mean)),
                cell(Some(r.gradient_norm).filter(|g| g.is_finite())),
                r.refit_iterations.to_string(),
                cell(Some(r.wall_time)),
            ];
            row.extend(group_means(groups, &r.lambda).into_iter().map(|v| cell(Some(v))));
            row.extend(r.lambda.iter().map(|&v| cell(Some(v))));
            row
        })
        .collect();
    write_table(path, &header, &rows)
}

#[derive(Serialize)]
struct GroupMean {
    name: String,
    mean_lambda: f64,
}

#[derive(Serialize)]
struct TuneResult {
    status: &'static str,
    error: Option<String>,
    algorithm: Algorithm,
    initial_lambda: Vec<f64>,
    final_lambda: Vec<f64>,
    initial_acv_mean: Option<f64>,
    final_acv_mean: Option<f64>,
    iterations: usize,
    final_group_means: Vec<GroupMean>,
    trace_file: &'static str,
}

pub fn cmd_tune(config: &Config, out: &Path) -> Result<(), CliError> {
    let data = load(config)?;
    let objective = build_objective(config, data.train.p(), &config.model.lambda)?;
    let m = objective.lambda().len();
    let groups = lambda_groups(config, m)?;
    let t = &config.tuner;
    let tune_config = TuneConfig {
        step_rule: t.step_rule(),
        max_epochs: t.max_epochs,
        lower_bound: t.lower_bound,
        solver: config.solver.build(),
        seed: t.seed.unwrap_or(config.dataset.seed),
        evaluation: t.evaluation,
        gradient_tolerance: t.gradient_tolerance,
        refit_every: t.refit_every,
        indices: None,
        warm_start: t.warm_start,
    };
    tune_config.validate()?;
    let lambda0 = objective.lambda().clone();
    let outcome: Result<TuneOutcome, TuneFailure> = match t.algorithm {
        Algorithm::Batch => tune_batch(&data.train, &objective, &lambda0, &tune_config),
        Algorithm::Stochastic => tune_stochastic(&data.train, &objective, &lambda0, &tune_config),
    };
    let (trace, error) = match &outcome {
        Ok(o) => (&o.trace, None),
        Err(f) => (&f.trace, Some(&f.error)),
    };
    write_trace(&out.join("trace.csv"), trace, &groups, m)?;
    let final_lambda = trace
        .last()
        .map(|r| r.lambda.clone())
        .unwrap_or_else(|| lambda0.as_slice().to_vec());
    let result = TuneResult {
        status: if error.is_some() { "aborted" } else { "completed" },
        error: error.map(|e| e.to_string()),
        algorithm: t.algorithm,
        initial_lambda: lambda0.as_slice().to_vec(),
        final_group_means: groups
            .iter()
            .zip(group_means(&groups, &final_lambda))
            .map(|(g, mean_lambda)| GroupMean {
                name: g.name.clone(),
                mean_lambda,
            })
            .collect(),
        final_lambda,
        initial_acv_mean: trace.first().map(|r| r.acv_mean),
        final_acv_mean: trace.last().map(|r| r.acv_mean),
        iterations: trace.len().saturating_sub(1),
        trace_file: "trace.csv",
    };
    write_json(&out.join("tune.json"), &Envelope::new("tune", config, result))?;
    match outcome {
        Ok(_) => Ok(()),
        Err(f) => Err(f.error.into()),
    }
}

pub fn cmd_bench(config: &Config, out: &Path) -> Result<(), CliError> {
    let family = config.model.family;
    let (_, regs) = family.build(config.dataset.p, config.model.intercept)?;
    let bench = BenchConfig {
        family,
        p: config.dataset.p,
        lambda: config.model.lambda.expand(regs.len())?,
        n_grid: config.bench.n_grid.clone(),
        seed: config.dataset.seed,
        repeats: config.bench.repeats,
    };
    // Timings compare algorithms, not parallel speedups.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let rows = pool.install(|| runtime_scaling(&bench))?;
    let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&out.join("bench.json"), &Envelope::new("bench", config, rows))
}

#[derive(Serialize)]
struct SynthResult {
    n: usize,
    p: usize,
    holdout_n: usize,
    dataset_file: &'static str,
    holdout_file: Option<&'static str>,
    theta_star: Vec<f64>,
}

pub fn cmd_synth(config: &Config, out: &Path) -> Result<(), CliError> {
    if config.dataset.source == Source::Csv {
        return Err(CliError::Validation("synth needs a synthetic dataset source".into()));
    }
    let data = load(config)?;
    let label = &config.dataset.label_column;
    data::save_csv(&data.train, out.join("dataset.csv"), label)?;
    if let Some(h) = &data.holdout {
        data::save_csv(h, out.join("holdout.csv"), label)?;
    }
    let result = SynthResult {
        n: data.train.n(),
        p: data.train.p(),
        holdout_n: data.holdout.as_ref().map_or(0, Dataset::n),
        dataset_file: "dataset.csv",
        holdout_file: data.holdout.as_ref().map(|_| "holdout.csv"),
        theta_star: data.theta_star.unwrap_or_default(),
    };
    write_json(&out.join("synth.json"), &Envelope::new("synth", config, result))
}
