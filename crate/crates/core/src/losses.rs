//! Losses that define the general Bayesian posterior `π(θ) exp(−w Σ ℓ(θ, y_i))`.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::models::{
    student_t_log_norm, BinaryModel, ContinuousFamily, ContinuousModel, RegressionData,
    RegressionModel,
};
use crate::quadrature::{integrate_line, Tolerance};

/// Tolerance used for power integrals computed by quadrature.
pub const POWER_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-8,
    max_intervals: 4000,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Loss {
    /// Negative log-likelihood; the resulting posterior is the classical one.
    LogScore,
    BetaD {
        beta: f64,
    },
    GammaD {
        gamma: f64,
    },
}

impl Loss {
    pub fn label(&self) -> String {
        match self {
            Loss::LogScore => "KLD".to_string(),
            Loss::BetaD { beta } => format!("betaD({beta})"),
            Loss::GammaD { gamma } => format!("gammaD({gamma})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::LogScore => Ok(()),
            Loss::BetaD { beta } => {
                if !(beta > 1.0 && beta.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "beta must be > 1, got {beta}"
                    )));
                }
                if beta > 2.0 {
                    log::warn!(
                        "beta = {beta} > 2: the TVD stability guarantees only cover 1 < beta <= 2"
                    );
                }
                Ok(())
            }
            Loss::GammaD { gamma } => {
                if gamma > 1.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "gamma must be > 1, got {gamma}"
                    )))
                }
            }
        }
    }
}

/// A loss together with its calibration weight `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(flatten)]
    pub loss: Loss,
    #[serde(default = "one")]
    pub w: f64,
}

fn one() -> f64 {
    1.0
}

impl LossSpec {
    pub fn new(loss: Loss, w: f64) -> Result<Self> {
        let spec = Self { loss, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn log_score() -> Self {
        Self {
            loss: Loss::LogScore,
            w: 1.0,
        }
    }

    pub fn beta(beta: f64) -> Self {
        Self {
            loss: Loss::BetaD { beta },
            w: 1.0,
        }
    }

    pub fn gamma(gamma: f64) -> Self {
        Self {
            loss: Loss::GammaD { gamma },
            w: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loss weight must be > 0, got {}",
                self.w
            )));
        }
        self.loss.validate()
    }
}

/// A likelihood that can be scored observation by observation.
pub trait LossModel {
    type Obs<'a>: Copy;
    type Data: ?Sized;

    fn observations(data: &Self::Data) -> impl Iterator<Item = Self::Obs<'_>>;

    fn log_density_obs(&self, obs: Self::Obs<'_>) -> Result<f64>;

    /// `∫ f(z | covariates of obs)^exponent dz`.
    fn power_integral_obs(&self, obs: Self::Obs<'_>, exponent: f64) -> Result<f64>;

    /// Whether the power integral is the same for every observation.
    fn power_integral_constant(&self) -> bool {
        true
    }
}

impl LossModel for ContinuousModel {
    type Obs<'a> = f64;
    type Data = [f64];

    fn observations(data: &[f64]) -> impl Iterator<Item = f64> {
        data.iter().copied()
    }

    fn log_density_obs(&self, y: f64) -> Result<f64> {
        self.log_density(y)
    }

    fn power_integral_obs(&self, _y: f64, exponent: f64) -> Result<f64> {
        power_integral(self, exponent)
    }
}

impl LossModel for RegressionModel {
    type Obs<'a> = (&'a [f64], f64);
    type Data = RegressionData;

    fn observations(data: &RegressionData) -> impl Iterator<Item = (&[f64], f64)> {
        data.x.iter().map(Vec::as_slice).zip(data.y.iter().copied())
    }

    fn log_density_obs(&self, (x, y): (&[f64], f64)) -> Result<f64> {
        self.log_density(x, y)
    }

    fn power_integral_obs(&self, _obs: (&[f64], f64), exponent: f64) -> Result<f64> {
        power_integral(self.residual_model(), exponent)
    }
}

/// Binary responses with their covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryData {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl BinaryData {
    pub fn new(x: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if x.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidParameter(format!(
                "label must be 0 or 1, got {bad}"
            )));
        }
        let p = x.first().map_or(0, Vec::len);
        if let Some(row) = x.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: row.len(),
            });
        }
        Ok(Self { x, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

impl LossModel for BinaryModel {
    type Obs<'a> = (&'a [f64], u8);
    type Data = BinaryData;

    fn observations(data: &BinaryData) -> impl Iterator<Item = (&[f64], u8)> {
        data.x
            .iter()
            .map(Vec::as_slice)
            .zip(data.labels.iter().copied())
    }

    fn log_density_obs(&self, (x, label): (&[f64], u8)) -> Result<f64> {
        Ok(self.class_probability(x, label)?.ln())
    }

    fn power_integral_obs(&self, (x, _): (&[f64], u8), exponent: f64) -> Result<f64> {
        self.power_integral(x, exponent)
    }

    fn power_integral_constant(&self) -> bool {
        false
    }
}

/// How a power integral was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMethod {
    ClosedForm,
    Quadrature,
}

/// `∫ f^e` for a continuous model, using the closed form when one exists.
pub fn power_integral(model: &ContinuousModel, exponent: f64) -> Result<f64> {
    let method = if model.is_location_scale() {
        PowerMethod::ClosedForm
    } else {
        PowerMethod::Quadrature
    };
    power_integral_with(model, exponent, method)
}

pub fn power_integral_with(
    model: &ContinuousModel,
    exponent: f64,
    method: PowerMethod,
) -> Result<f64> {
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "power exponent must be > 0, got {exponent}"
        )));
    }
    match method {
        PowerMethod::ClosedForm => {
            if let Some(var) = model.gaussian_variance() {
                Ok(gaussian_power_integral(var, exponent))
            } else if let Some((dof, scale2)) = model.student_t_parts() {
                Ok(student_t_power_integral(dof, scale2, exponent))
            } else {
                Err(Error::InvalidParameter(
                    "no closed-form power integral for this family".into(),
                ))
            }
        }
        PowerMethod::Quadrature => {
            let q = integrate_line(
                |y| {
                    let l = model.ln_pdf(y);
                    if l.is_finite() {
                        (exponent * l).exp()
                    } else {
                        0.0
                    }
                },
                &model.feature_points(),
                POWER_TOLERANCE,
            )?;
            Ok(q.value)
        }
    }
}

/// `∫ N(z; μ, v)^β dz = β^{−1/2} (2πv)^{(1−β)/2}`
pub fn gaussian_power_integral(variance: f64, beta: f64) -> f64 {
    beta.powf(-0.5) * (2.0 * std::f64::consts::PI * variance).powf(0.5 * (1.0 - beta))
}

/// `∫ t_ν(z; μ, σ²)^β dz = c^β σ √ν B(1/2, β(ν+1)/2 − 1/2)` with `c` the density at the mode.
pub fn student_t_power_integral(dof: f64, scale2: f64, beta: f64) -> f64 {
    let ln_c = student_t_log_norm(dof) - 0.5 * scale2.ln();
    let a = 0.5 * beta * (dof + 1.0);
    (beta * ln_c + 0.5 * scale2.ln() + 0.5 * dof.ln() + ln_beta(0.5, a - 0.5)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    family: u8,
    shape: u64,
    scale: u64,
    exponent: u64,
    method: PowerMethod,
}

/// Memoised power integrals for location-scale families, keyed on the family,
/// scale and exponent (location does not change the integral).
#[derive(Debug, Default)]
pub struct PowerIntegralCache {
    map: RwLock<HashMap<CacheKey, f64>>,
}

impl PowerIntegralCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model: &ContinuousModel, exponent: f64, method: PowerMethod) -> Result<f64> {
        let Some(key) = cache_key(model, exponent, method) else {
            return power_integral_with(model, exponent, method);
        };
        if let Some(v) = self.map.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(v);
        }
        let v = power_integral_with(model, exponent, method)?;
        if let Ok(mut m) = self.map.write() {
            m.entry(key).or_insert(v);
        }
        Ok(v)
    }
}

fn cache_key(model: &ContinuousModel, exponent: f64, method: PowerMethod) -> Option<CacheKey> {
    let scale = model.scale_key()?;
    let (family, shape) = match model.family() {
        ContinuousFamily::Gaussian { .. } => (0, 0),
        ContinuousFamily::StudentT { dof } => (1, dof.to_bits()),
        ContinuousFamily::GaussianMixture { .. } => return None,
    };
    Some(CacheKey {
        family,
        shape,
        scale: scale.to_bits(),
        exponent: exponent.to_bits(),
        method,
    })
}

pub fn log_score_loss<M: LossModel>(model: &M, obs: M::Obs<'_>) -> Result<f64> {
    Ok(-model.log_density_obs(obs)?)
}

/// `−f(y)^{β−1}/(β−1) + (1/β)∫f^β`
pub fn beta_loss<M: LossModel>(model: &M, obs: M::Obs<'_>, beta: f64) -> Result<f64> {
    Loss::BetaD { beta }.validate()?;
    let l = model.log_density_obs(obs)?;
    let pi = model.power_integral_obs(obs, beta)?;
    Ok(beta_from_parts(l, pi, beta))
}

/// `−f(y)^{γ−1}/(γ−1) · (1/γ) · (∫f^γ)^{−(γ−1)/γ}`
pub fn gamma_loss<M: LossModel>(model: &M, obs: M::Obs<'_>, gamma: f64) -> Result<f64> {
    Loss::GammaD { gamma }.validate()?;
    let l = model.log_density_obs(obs)?;
    let pi = model.power_integral_obs(obs, gamma)?;
    Ok(gamma_from_parts(l, pi, gamma))
}

#[inline]
fn beta_from_parts(log_f: f64, power: f64, beta: f64) -> f64 {
    -((beta - 1.0) * log_f).exp() / (beta - 1.0) + power / beta
}

#[inline]
fn gamma_from_parts(log_f: f64, power: f64, gamma: f64) -> f64 {
    -((gamma - 1.0) * log_f).exp() / (gamma - 1.0) / gamma * power.powf(-(gamma - 1.0) / gamma)
}

/// Unweighted loss of one observation.
pub fn loss<M: LossModel>(model: &M, obs: M::Obs<'_>, loss: &Loss) -> Result<f64> {
    match *loss {
        Loss::LogScore => log_score_loss(model, obs),
        Loss::BetaD { beta } => beta_loss(model, obs, beta),
        Loss::GammaD { gamma } => gamma_loss(model, obs, gamma),
    }
}

/// `w Σ_i ℓ(θ, y_i)`
pub fn total_loss<M: LossModel>(model: &M, data: &M::Data, spec: &LossSpec) -> Result<f64> {
    spec.validate()?;
    let exponent = match spec.loss {
        Loss::LogScore => None,
        Loss::BetaD { beta } => Some(beta),
        Loss::GammaD { gamma } => Some(gamma),
    };
    let mut shared_power = None;
    let mut total = 0.0;
    for obs in M::observations(data) {
        let l = model.log_density_obs(obs)?;
        let term = match (spec.loss, exponent) {
            (Loss::LogScore, _) => -l,
            (loss, Some(e)) => {
                let pi = if model.power_integral_constant() {
                    match shared_power {
                        Some(v) => v,
                        None => {
                            let v = model.power_integral_obs(obs, e)?;
                            shared_power = Some(v);
                            v
                        }
                    }
                } else {
                    model.power_integral_obs(obs, e)?
                };
                match loss {
                    Loss::BetaD { .. } => beta_from_parts(l, pi, e),
                    _ => gamma_from_parts(l, pi, e),
                }
            }
            _ => unreachable!(),
        };
        total += term;
    }
    Ok(spec.w * total)
}

/// `∂ ln f(y)/∂(μ, σ²)` for Gaussian and Student-t models.
pub fn score(model: &ContinuousModel, y: f64) -> Result<[f64; 2]> {
    let p = model.params();
    let (mu, sigma2) = (p[0], p[1]);
    let r = y - mu;
    match model.family() {
        ContinuousFamily::Gaussian { variance_adj } => {
            let v = sigma2 * variance_adj;
            Ok([r / v, variance_adj * (-0.5 / v + 0.5 * r * r / (v * v))])
        }
        ContinuousFamily::StudentT { dof } => {
            let denom = dof * sigma2 + r * r;
            Ok([
                (dof + 1.0) * r / denom,
                -0.5 / sigma2 + 0.5 * (dof + 1.0) * r * r / (sigma2 * denom),
            ])
        }
        ContinuousFamily::GaussianMixture { .. } => Err(Error::InvalidParameter(
            "analytic score only for location-scale families".into(),
        )),
    }
}

/// Analytic `∂ℓ(θ, y)/∂(μ, σ²)` for Gaussian and Student-t models.
pub fn loss_gradient(model: &ContinuousModel, y: f64, loss: &Loss) -> Result<[f64; 2]> {
    loss.validate()?;
    let s = score(model, y)?;
    let sigma2 = model.params()[1];
    match *loss {
        Loss::LogScore => Ok([-s[0], -s[1]]),
        Loss::BetaD { beta } => {
            let fb = ((beta - 1.0) * model.log_density(y)?).exp();
            let pi = power_integral(model, beta)?;
            // the power integral scales as σ^{1−β}
            let dpi = pi * (1.0 - beta) / (2.0 * sigma2);
            Ok([-fb * s[0], -fb * s[1] + dpi / beta])
        }
        Loss::GammaD { gamma } => {
            let fg = ((gamma - 1.0) * model.log_density(y)?).exp();
            let pi = power_integral(model, gamma)?;
            let dlog_pi = (1.0 - gamma) / (2.0 * sigma2);
            let lead = -fg * pi.powf(-(gamma - 1.0) / gamma) / gamma;
            Ok([lead * s[0], lead * (s[1] - dlog_pi / gamma)])
        }
    }
}
