//! Seeded synthetic datasets and CSV ingestion.
//!
//! All generators draw from ChaCha8 seeded with the caller's `u64`, so a
//! `(parameters, seed)` pair fully determines the output on every platform.
//! Normal variates use the Box–Muller transform on the raw uniforms.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, Sample};

/// A generated dataset together with the parameter vector that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub theta_star: DVector<f64>,
}

/// Deterministic stream of uniforms and normals.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        // 1 − u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.normal())
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

fn linear_samples(
    stream: &mut Stream,
    n: usize,
    theta_star: &DVector<f64>,
    noise_var: f64,
) -> Result<Dataset> {
    let noise_sd = noise_var.sqrt();
    let samples = (0..n)
        .map(|_| {
            let x = stream.normal_vector(theta_star.len());
            let y = theta_star.dot(&x) + noise_sd * stream.normal();
            Sample::new(x, y)
        })
        .collect();
    Dataset::new(samples)
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise variance must be finite and ≥ 0, got {noise_var}"
        )));
    }
    Ok(())
}

/// Linear model with standard normal features; the last `n_relevant`
/// coordinates of `θ*` are `N(0, 1)` and the rest are zero.
pub fn synth_ridge(
    n: usize,
    p: usize,
    n_relevant: usize,
    noise_var: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if n_relevant > p {
        return Err(Error::InvalidInput(format!(
            "n_relevant = {n_relevant} exceeds p = {p}"
        )));
    }
    check_noise(noise_var)?;
    let mut stream = Stream::new(seed);
    let mut theta_star = DVector::zeros(p);
    for j in (p - n_relevant)..p {
        theta_star[j] = stream.normal();
    }
    let dataset = linear_samples(&mut stream, n, &theta_star, noise_var)?;
    Ok(SyntheticData {
        dataset,
        theta_star,
    })
}

/// Linear model with `θ*_κ = κ·ρ_κ·ψ_κ` (1-based `κ`), `ρ_κ ~ Bernoulli(½)`,
/// `ψ_κ ~ N(0, 1)`.
pub fn synth_elastic(n: usize, p: usize, noise_var: f64, seed: u64) -> Result<SyntheticData> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be ≥ 1".into()));
    }
    check_noise(noise_var)?;
    let mut stream = Stream::new(seed);
    let theta_star = DVector::from_fn(p, |j, _| {
        let keep = stream.uniform() < 0.5;
        let psi = stream.normal();
        if keep {
            (j + 1) as f64 * psi
        } else {
            0.0
        }
    });
    let dataset = linear_samples(&mut stream, n, &theta_star, noise_var)?;
    Ok(SyntheticData {
        dataset,
        theta_star,
    })
}

/// Logistic model: standard normal features, `θ* ~ N(0, signal²/p · I)` so the
/// margin has standard deviation `signal`, labels `y ~ Bernoulli(σ(θ*ᵀx))`.
pub fn synth_logistic(n: usize, p: usize, signal: f64, seed: u64) -> Result<SyntheticData> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be ≥ 1".into()));
    }
    let mut stream = Stream::new(seed);
    let scale = signal / (p as f64).sqrt();
    let theta_star = stream.normal_vector(p) * scale;
    let samples = (0..n)
        .map(|_| {
            let x = stream.normal_vector(p);
            let prob = crate::models::sigmoid(theta_star.dot(&x));
            let y = if stream.uniform() < prob { 1.0 } else { 0.0 };
            Sample::new(x, y)
        })
        .collect();
    Ok(SyntheticData {
        dataset: Dataset::new(samples)?,
        theta_star,
    })
}

/// Reads a numeric CSV with a header row. The label column becomes the
/// response; every other column is a feature, in file order.
///
/// With `binarize = Some((a, b))` only rows labelled `a` or `b` are kept, mapped
/// to 0 and 1 respectively.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    binarize: Option<(&str, &str)>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // data rows are numbered from 1, after the header
        let row = row + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let label_text = &record[label_idx];
        let response = match binarize {
            Some((neg, pos)) => {
                if label_matches(label_text, neg) {
                    0.0
                } else if label_matches(label_text, pos) {
                    1.0
                } else {
                    continue;
                }
            }
            None => parse_cell(label_text, row, &headers[label_idx])?,
        };
        let mut features = Vec::with_capacity(headers.len() - 1);
        for (c, cell) in record.iter().enumerate() {
            if c != label_idx {
                features.push(parse_cell(cell, row, &headers[c])?);
            }
        }
        samples.push(Sample::from_slice(&features, response));
    }
    Dataset::new(samples)
}

fn label_matches(cell: &str, label: &str) -> bool {
    if cell == label {
        return true;
    }
    matches!((cell.parse::<f64>(), label.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::MalformedRow {
        row,
        message: format!("column `{column}`: `{cell}` is not numeric"),
    })
}

/// Writes a dataset as CSV with header `x1,…,xp,<label_column>`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dataset.p()).map(|j| format!("x{j}")).collect();
    header.push(label_column.to_string());
    writer.write_record(&header)?;
    for s in dataset.samples() {
        let mut rec: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        rec.push(s.response.to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
