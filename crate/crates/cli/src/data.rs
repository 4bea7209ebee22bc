//! Data ingestion and synthetic data generating processes.

use std::path::Path;

use gbstab::models::{BinaryFamily, ContinuousModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// A response column with optional covariates, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response_name: String,
    pub covariate_names: Vec<String>,
    pub response: Vec<f64>,
    /// Row-major covariates; empty rows for univariate data.
    pub covariates: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn univariate(name: &str, response: Vec<f64>) -> Self {
        let n = response.len();
        Self {
            response_name: name.into(),
            covariate_names: Vec::new(),
            response,
            covariates: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Covariate rows with a leading intercept column.
    pub fn design_with_intercept(&self) -> Vec<Vec<f64>> {
        self.covariates
            .iter()
            .map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect())
            .collect()
    }

    /// Binary labels from the response; every value must be 0 or 1.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.response
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                _ => Err(CliError::Row {
                    row: i + 1,
                    message: format!("binary response must be 0 or 1, got {v}"),
                }),
            })
            .collect()
    }
}

/// Columns to read from a csv file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

/// Reads the schema's columns from a headed csv file. Row numbers in errors
/// count data rows from 1.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(source) => CliError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                _ => unreachable!(),
            },
            _ => CliError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(CliError::EmptyFile(path.to_path_buf()));
    }
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let response_idx = index(&schema.response)?;
    let covariate_idx = schema
        .covariates
        .iter()
        .map(|c| index(c))
        .collect::<Result<Vec<_>>>()?;
    let parse = |record: &csv::StringRecord, row: usize, col: usize, name: &str| -> Result<f64> {
        let cell = record.get(col).ok_or_else(|| CliError::Row {
            row,
            message: format!("missing cell for column `{name}`"),
        })?;
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CliError::NonNumeric {
                row,
                column: name.to_string(),
                value: cell.to_string(),
            }),
        }
    };
    let mut response = Vec::new();
    let mut covariates = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Row {
            row,
            message: e.to_string(),
        })?;
        response.push(parse(&record, row, response_idx, &schema.response)?);
        covariates.push(
            covariate_idx
                .iter()
                .zip(&schema.covariates)
                .map(|(&c, name)| parse(&record, row, c, name))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if response.is_empty() {
        return Err(CliError::EmptyFile(path.to_path_buf()));
    }
    Ok(Dataset {
        response_name: schema.response.clone(),
        covariate_names: schema.covariates.clone(),
        response,
        covariates,
    })
}

/// Writes a dataset as csv with the response first.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Config(format!("{other:?}")),
    })?;
    let mut header = vec![data.response_name.clone()];
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for (y, row) in data.response.iter().zip(&data.covariates) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn default_weight() -> f64 {
    0.1
}
fn default_outlier_mean() -> f64 {
    5.0
}
fn default_outlier_var() -> f64 {
    9.0
}

/// Synthetic data generating processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dgp {
    /// `(1 − weight) N(0, 1) + weight N(outlier_mean, outlier_var)`.
    Contamination {
        #[serde(default = "default_weight")]
        weight: f64,
        #[serde(default = "default_outlier_mean")]
        outlier_mean: f64,
        #[serde(default = "default_outlier_var")]
        outlier_var: f64,
    },
    /// Gaussian mixture given as `(weight, mean, sd)` triples.
    Mixture { components: Vec<(f64, f64, f64)> },
    /// Three velocity clusters near 5, 15 and 23 with a right-skewed top cluster.
    ClusteredVelocities,
    /// `y = β₀ + Σ β_j x_j + e` with standard normal covariates and
    /// contaminated noise.
    Regression {
        coefficients: Vec<f64>,
        #[serde(default = "default_weight")]
        outlier_weight: f64,
        #[serde(default = "default_outlier_mean")]
        outlier_mean: f64,
        #[serde(default = "default_outlier_var")]
        outlier_var: f64,
    },
    /// Logistic labels on standard normal covariates, each flipped with
    /// probability `flip`.
    Binary {
        coefficients: Vec<f64>,
        #[serde(default)]
        flip: f64,
    },
}

impl Dgp {
    pub fn contamination() -> Self {
        Dgp::Contamination {
            weight: default_weight(),
            outlier_mean: default_outlier_mean(),
            outlier_var: default_outlier_var(),
        }
    }

    /// The data density, when it has a closed form.
    pub fn density(&self) -> Option<ContinuousModel> {
        match self {
            Dgp::Contamination {
                weight,
                outlier_mean,
                outlier_var,
            } => ContinuousModel::mixture(&[
                (1.0 - weight, 0.0, 1.0),
                (*weight, *outlier_mean, outlier_var.sqrt()),
            ])
            .ok(),
            Dgp::Mixture { components } => ContinuousModel::mixture(components).ok(),
            _ => None,
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Dgp::Contamination { .. } | Dgp::Mixture { .. } => {
                let model = self.density().ok_or_else(|| {
                    CliError::Config(format!("invalid mixture specification {self:?}"))
                })?;
                Ok(Dataset::univariate("y", model.sample_with(n, &mut rng)))
            }
            Dgp::ClusteredVelocities => {
                let tail = Gamma::new(3.0, 1.5).expect("valid gamma");
                let y = (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if u < 0.3 {
                            5.0 + 1.5 * z
                        } else if u < 0.8 {
                            15.0 + 2.0 * z
                        } else {
                            20.0 + tail.sample(&mut rng)
                        }
                    })
                    .collect();
                Ok(Dataset::univariate("velocity", y))
            }
            Dgp::Regression {
                coefficients,
                outlier_weight,
                outlier_mean,
                outlier_var,
            } => {
                if coefficients.is_empty() {
                    return Err(CliError::Config(
                        "regression needs an intercept coefficient".into(),
                    ));
                }
                let p = coefficients.len() - 1;
                let noise = ContinuousModel::mixture(&[
                    (1.0 - outlier_weight, 0.0, 1.0),
                    (*outlier_weight, *outlier_mean, outlier_var.sqrt()),
                ])?;
                let mut response = Vec::with_capacity(n);
                let mut covariates = Vec::with_capacity(n);
                for _ in 0..n {
                    let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let mean = coefficients[0]
                        + x.iter()
                            .zip(&coefficients[1..])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    response.push(mean + noise.draw(&mut rng));
                    covariates.push(x);
                }
                Ok(Dataset {
                    response_name: "y".into(),
                    covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
                    response,
                    covariates,
                })
            }
            Dgp::Binary { coefficients, flip } => {
                if coefficients.is_empty() {
                    return Err(CliError::Config(
                        "binary model needs an intercept coefficient".into(),
                    ));
                }
                if !(0.0..0.5).contains(flip) {
                    return Err(CliError::Config(format!(
                        "flip probability must lie in [0, 0.5), got {flip}"
                    )));
                }
                let p = coefficients.len() - 1;
                let mut response = Vec::with_capacity(n);
                let mut covariates = Vec::with_capacity(n);
                for _ in 0..n {
                    let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let a = coefficients[0]
                        + x.iter()
                            .zip(&coefficients[1..])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    let p1 = BinaryFamily::Logistic.prob_one(a)?;
                    let mut label = rng.random::<f64>() < p1;
                    if rng.random::<f64>() < *flip {
                        label = !label;
                    }
                    response.push(if label { 1.0 } else { 0.0 });
                    covariates.push(x);
                }
                Ok(Dataset {
                    response_name: "label".into(),
                    covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
                    response,
                    covariates,
                })
            }
        }
    }
}

/// `(y − mean) / sd` with the sample mean and sd.
pub fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (y.iter().map(|v| (v - mean) / sd).collect(), mean, sd)
}
