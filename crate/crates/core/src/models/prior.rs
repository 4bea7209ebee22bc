use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Prior distributions over model parameters.
///
/// * `NormalInverseGamma` on `[θ_1..θ_p, σ²]`: `θ_j | σ² ~ N(mu0, v0 σ²)`, `σ² ~ IG(a0, b0)`.
/// * `MixtureNigDirichlet` on `[ω_1..ω_K, μ_1..μ_K, σ_1..σ_K]`: `ω ~ Dir(alpha)`,
///   `σ_k² ~ IG(nu0/2, s0/2)`, `μ_k | σ_k ~ N(0, kappa σ_k²)`. The density is
///   expressed in `σ_k`, not `σ_k²`.
/// * `FlatGaussianCoef`: independent `N(mean, sd²)` on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    NormalInverseGamma {
        a0: f64,
        b0: f64,
        mu0: f64,
        v0: f64,
    },
    MixtureNigDirichlet {
        alpha: f64,
        nu0: f64,
        s0: f64,
        kappa: f64,
    },
    FlatGaussianCoef {
        mean: f64,
        sd: f64,
    },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "prior {name} must be > 0, got {v}"
                )))
            }
        };
        match *self {
            PriorSpec::NormalInverseGamma { a0, b0, mu0, v0 } => {
                positive("a0", a0)?;
                positive("b0", b0)?;
                positive("v0", v0)?;
                if !mu0.is_finite() {
                    return Err(Error::NonFinite("prior mu0".into()));
                }
            }
            PriorSpec::MixtureNigDirichlet {
                alpha,
                nu0,
                s0,
                kappa,
            } => {
                positive("alpha", alpha)?;
                positive("nu0", nu0)?;
                positive("s0", s0)?;
                positive("kappa", kappa)?;
            }
            PriorSpec::FlatGaussianCoef { mean, sd } => {
                positive("sd", sd)?;
                if !mean.is_finite() {
                    return Err(Error::NonFinite("prior mean".into()));
                }
            }
        }
        Ok(())
    }

    /// Log prior density; `−∞` outside the support.
    pub fn log_density(&self, params: &[f64]) -> f64 {
        if params.iter().any(|p| !p.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PriorSpec::NormalInverseGamma { a0, b0, mu0, v0 } => {
                let Some((&sigma2, theta)) = params.split_last() else {
                    return f64::NEG_INFINITY;
                };
                if sigma2 <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let var = v0 * sigma2;
                let normal: f64 = theta
                    .iter()
                    .map(|t| -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * (t - mu0).powi(2) / var)
                    .sum();
                normal + inverse_gamma_log_density(sigma2, a0, b0)
            }
            PriorSpec::MixtureNigDirichlet {
                alpha,
                nu0,
                s0,
                kappa,
            } => {
                if params.is_empty() || params.len() % 3 != 0 {
                    return f64::NEG_INFINITY;
                }
                let k = params.len() / 3;
                let (w, rest) = params.split_at(k);
                let (mu, sd) = rest.split_at(k);
                let mut total = dirichlet_log_density(w, &vec![alpha; k]);
                for (&m, &s) in mu.iter().zip(sd) {
                    if s <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let s2 = s * s;
                    total += inverse_gamma_log_density(s2, 0.5 * nu0, 0.5 * s0) + (2.0 * s).ln();
                    let var = kappa * s2;
                    total += -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * m * m / var;
                }
                total
            }
            PriorSpec::FlatGaussianCoef { mean, sd } => params
                .iter()
                .map(|t| -HALF_LN_2PI - sd.ln() - 0.5 * ((t - mean) / sd).powi(2))
                .sum(),
        }
    }

    /// A representative central parameter point of dimension `dim`.
    pub fn central_point(&self, dim: usize) -> Vec<f64> {
        match *self {
            PriorSpec::NormalInverseGamma { a0, b0, mu0, .. } => {
                let mut p = vec![mu0; dim];
                if let Some(last) = p.last_mut() {
                    *last = b0 / (a0 + 1.0);
                }
                p
            }
            PriorSpec::MixtureNigDirichlet { nu0, s0, .. } => {
                let k = dim / 3;
                let mode_sd = (0.5 * s0 / (0.5 * nu0 + 1.0)).sqrt();
                let mut p = vec![1.0 / k as f64; k];
                p.extend(std::iter::repeat_n(0.0, k));
                p.extend(std::iter::repeat_n(mode_sd, k));
                p
            }
            PriorSpec::FlatGaussianCoef { mean, .. } => vec![mean; dim],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            PriorSpec::NormalInverseGamma { a0, b0, mu0, v0 } => {
                if dim == 0 {
                    return Err(Error::Empty("prior dimension"));
                }
                let sigma2 = draw_inverse_gamma(a0, b0, rng)?;
                let mut p: Vec<f64> = (0..dim - 1)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        mu0 + (v0 * sigma2).sqrt() * z
                    })
                    .collect();
                p.push(sigma2);
                Ok(p)
            }
            PriorSpec::MixtureNigDirichlet {
                alpha,
                nu0,
                s0,
                kappa,
            } => {
                if dim == 0 || dim % 3 != 0 {
                    return Err(Error::InvalidParameter(format!("mixture dimension {dim}")));
                }
                let k = dim / 3;
                let gamma =
                    Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    w.iter_mut().for_each(|x| *x /= total);
                } else {
                    w = vec![1.0 / k as f64; k];
                }
                let mut mu = Vec::with_capacity(k);
                let mut sd = Vec::with_capacity(k);
                for _ in 0..k {
                    let s2 = draw_inverse_gamma(0.5 * nu0, 0.5 * s0, rng)?;
                    let z: f64 = StandardNormal.sample(rng);
                    mu.push((kappa * s2).sqrt() * z);
                    sd.push(s2.sqrt());
                }
                w.extend(mu);
                w.extend(sd);
                Ok(w)
            }
            PriorSpec::FlatGaussianCoef { mean, sd } => Ok((0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    mean + sd * z
                })
                .collect()),
        }
    }
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    loop {
        let x: f64 = g.sample(rng);
        if x > 0.0 {
            return Ok(1.0 / x);
        }
    }
}

/// Log density of `IG(shape, scale)` at `x`.
pub fn inverse_gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Log density of `Dir(alpha)` at `w` with respect to Lebesgue measure on the first
/// `K−1` coordinates; `−∞` off the simplex.
pub fn dirichlet_log_density(w: &[f64], alpha: &[f64]) -> f64 {
    if w.len() != alpha.len() || w.is_empty() || alpha.iter().any(|&a| a <= 0.0) {
        return f64::NEG_INFINITY;
    }
    if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let a_sum: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a_sum) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    for (&x, &a) in w.iter().zip(alpha) {
        if a != 1.0 {
            out += (a - 1.0) * x.ln();
        }
    }
    out
}

/// `P(ω₁ > threshold)` for `ω ~ Dir(a, …, a)` of dimension `k`.
pub fn dirichlet_margin_tail(a: f64, k: usize, threshold: f64) -> f64 {
    1.0 - beta_reg(a, (k as f64 - 1.0) * a, threshold)
}

/// Symmetric Dirichlet concentration `a` with `P(ω₁ > threshold) = target`,
/// where `ω₁ ~ Beta(a, (K−1)a)`.
pub fn elicit_dirichlet_concentration(k: usize, threshold: f64, target: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) || !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold and target must lie in (0, 1), got {threshold} and {target}"
        )));
    }
    let crit = |log_a: f64| dirichlet_margin_tail(log_a.exp(), k, threshold) - target;
    if crit(0.0).abs() <= 1e-10 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1e-4f64.ln(), 1e4f64.ln());
    let (f_lo, f_hi) = (crit(lo), crit(hi));
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NotBracketed {
            lo: lo.exp(),
            hi: hi.exp(),
            f_lo,
            f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = crit(mid);
        if f_mid.abs() <= 1e-9 || hi - lo < 1e-13 {
            return Ok(mid.exp());
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    Err(Error::RootNotConverged {
        iterations: 200,
        residual: crit(mid),
    })
}
