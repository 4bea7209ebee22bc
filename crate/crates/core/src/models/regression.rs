use serde::{Deserialize, Serialize};

use super::binary::dot;
use super::continuous::{ContinuousFamily, ContinuousModel};
use crate::error::{Error, Result};

/// Residual distributions for linear regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ResidualFamily {
    Gaussian {
        #[serde(default = "one")]
        variance_adj: f64,
    },
    StudentT {
        dof: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ResidualFamily {
    pub fn as_continuous(self) -> ContinuousFamily {
        match self {
            ResidualFamily::Gaussian { variance_adj } => {
                ContinuousFamily::Gaussian { variance_adj }
            }
            ResidualFamily::StudentT { dof } => ContinuousFamily::StudentT { dof },
        }
    }
}

/// Linear regression `y = xθ + e` with `e` from a location-scale residual family.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    coefficients: Vec<f64>,
    sigma2: f64,
    residual: ContinuousModel,
}

impl RegressionModel {
    pub fn new(family: ResidualFamily, coefficients: Vec<f64>, sigma2: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one coefficient required".into(),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("regression coefficient".into()));
        }
        let residual = ContinuousModel::new(family.as_continuous(), &[0.0, sigma2])?;
        Ok(Self {
            coefficients,
            sigma2,
            residual,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The zero-location residual density.
    pub fn residual_model(&self) -> &ContinuousModel {
        &self.residual
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(dot(x, &self.coefficients))
    }

    pub fn log_density(&self, x: &[f64], y: f64) -> Result<f64> {
        let m = self.mean(x)?;
        self.residual.log_density(y - m)
    }

    pub fn density(&self, x: &[f64], y: f64) -> Result<f64> {
        let m = self.mean(x)?;
        self.residual.density(y - m)
    }
}

/// Design matrix plus response.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl RegressionData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let p = x.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::InvalidParameter(
                "design needs at least one column".into(),
            ));
        }
        if x.len() < p {
            return Err(Error::InvalidParameter(format!(
                "need n >= p, got n = {} and p = {p}",
                x.len()
            )));
        }
        if let Some(row) = x.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: row.len(),
            });
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression data".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }
}
