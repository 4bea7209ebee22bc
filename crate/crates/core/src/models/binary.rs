use serde::{Deserialize, Serialize};

use super::texp::t_logistic_prob;
use crate::error::{Error, Result};

/// Default temperature of the t-logistic link.
pub const DEFAULT_T: f64 = 1.25;

/// Link families for binary responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BinaryFamily {
    Logistic,
    Probit,
    TLogistic {
        #[serde(default = "default_t")]
        t: f64,
    },
    /// Logistic with label-flip probabilities `nu0` (0 → 1) and `nu1` (1 → 0).
    Mislabelled {
        nu0: f64,
        nu1: f64,
    },
}

fn default_t() -> f64 {
    DEFAULT_T
}

impl BinaryFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BinaryFamily::TLogistic { t } if !(t > 0.0 && t < 2.0) => Err(Error::InvalidParameter(
                format!("t must lie in (0, 2), got {t}"),
            )),
            BinaryFamily::Mislabelled { nu0, nu1 }
                if !((0.0..1.0).contains(&nu0) && (0.0..1.0).contains(&nu1)) =>
            {
                Err(Error::InvalidParameter(format!(
                    "label-flip probabilities must lie in [0, 1), got ({nu0}, {nu1})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BinaryFamily::Logistic => "logistic",
            BinaryFamily::Probit => "probit",
            BinaryFamily::TLogistic { .. } => "t_logistic",
            BinaryFamily::Mislabelled { .. } => "mislabelled",
        }
    }

    /// `P(y = 1)` as a function of the linear predictor, before any link multiplier.
    pub fn prob_one(&self, a: f64) -> Result<f64> {
        if a.is_nan() {
            return Err(Error::NonFinite(format!("linear predictor {a}")));
        }
        Ok(match *self {
            BinaryFamily::Logistic => logistic(a),
            BinaryFamily::Probit => 0.5 * libm::erfc(-a / std::f64::consts::SQRT_2),
            BinaryFamily::TLogistic { t } => {
                if a.is_infinite() {
                    if a > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    t_logistic_prob(a, t)?
                }
            }
            BinaryFamily::Mislabelled { nu0, nu1 } => {
                let p = logistic(a);
                (1.0 - nu1) * p + nu0 * (1.0 - p)
            }
        })
    }
}

#[inline]
pub(crate) fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// A binary classifier `P(y | x, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub family: BinaryFamily,
    pub coefficients: Vec<f64>,
    /// Multiplier applied to `xθ` before the link.
    pub link_scale: f64,
}

impl BinaryModel {
    pub fn new(family: BinaryFamily, coefficients: Vec<f64>, link_scale: f64) -> Result<Self> {
        family.validate()?;
        if coefficients.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one coefficient required".into(),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("binary model coefficient".into()));
        }
        if !(link_scale >= 0.0 && link_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "link scale must be >= 0, got {link_scale}"
            )));
        }
        Ok(Self {
            family,
            coefficients,
            link_scale,
        })
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(dot(x, &self.coefficients))
    }

    pub fn prob_one(&self, x: &[f64]) -> Result<f64> {
        let a = self.linear_predictor(x)?;
        self.family.prob_one(self.link_scale * a)
    }

    pub fn class_probability(&self, x: &[f64], label: u8) -> Result<f64> {
        let p = self.prob_one(x)?;
        match label {
            1 => Ok(p),
            0 => Ok(1.0 - p),
            other => Err(Error::InvalidParameter(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }

    /// `P(1)^e + P(0)^e` at covariates `x`.
    pub fn power_integral(&self, x: &[f64], exponent: f64) -> Result<f64> {
        let p = self.prob_one(x)?;
        Ok(p.powf(exponent) + (1.0 - p).powf(exponent))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
