use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as StudentTDist};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log-densities below this are reported as a density of exactly zero.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

/// Default lower bound on mixture component standard deviations.
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-3;

/// Univariate likelihood families.
///
/// Location-scale families take `[μ, σ²]`; the Gaussian's variance is
/// `σ² · variance_adj`. Mixtures take `[ω_1..ω_K, μ_1..μ_K, σ_1..σ_K]` with
/// `σ_k` a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ContinuousFamily {
    Gaussian {
        #[serde(default = "one")]
        variance_adj: f64,
    },
    StudentT {
        dof: f64,
    },
    GaussianMixture {
        components: usize,
        #[serde(default = "default_scale_floor")]
        scale_floor: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_scale_floor() -> f64 {
    DEFAULT_SCALE_FLOOR
}

impl ContinuousFamily {
    pub fn gaussian() -> Self {
        ContinuousFamily::Gaussian { variance_adj: 1.0 }
    }

    pub fn student_t(dof: f64) -> Self {
        ContinuousFamily::StudentT { dof }
    }

    pub fn mixture(components: usize) -> Self {
        ContinuousFamily::GaussianMixture {
            components,
            scale_floor: DEFAULT_SCALE_FLOOR,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            ContinuousFamily::Gaussian { .. } | ContinuousFamily::StudentT { .. } => 2,
            ContinuousFamily::GaussianMixture { components, .. } => 3 * components,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match *self {
            ContinuousFamily::Gaussian { .. } | ContinuousFamily::StudentT { .. } => {
                vec!["mu".into(), "sigma2".into()]
            }
            ContinuousFamily::GaussianMixture { components, .. } => {
                let mut names = Vec::with_capacity(3 * components);
                names.extend((1..=components).map(|k| format!("omega_{k}")));
                names.extend((1..=components).map(|k| format!("mu_{k}")));
                names.extend((1..=components).map(|k| format!("sigma_{k}")));
                names
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            ContinuousFamily::Gaussian { variance_adj }
                if !(variance_adj > 0.0 && variance_adj.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "variance_adj must be > 0, got {variance_adj}"
                )))
            }
            ContinuousFamily::StudentT { dof } if !(dof > 0.0 && dof.is_finite()) => Err(
                Error::InvalidParameter(format!("dof must be > 0, got {dof}")),
            ),
            ContinuousFamily::GaussianMixture {
                components,
                scale_floor,
            } => {
                if components == 0 {
                    return Err(Error::InvalidParameter(
                        "mixture needs at least one component".into(),
                    ));
                }
                if !(scale_floor > 0.0 && scale_floor.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "scale_floor must be > 0, got {scale_floor}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    /// `ln ω_k − ½ ln 2π − ln σ_k`
    log_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Kernel {
    Gaussian {
        mean: f64,
        var: f64,
        log_norm: f64,
    },
    StudentT {
        loc: f64,
        scale2: f64,
        dof: f64,
        log_norm: f64,
    },
    Mixture(Box<Mixture>),
}

/// A fully parameterised univariate density `f(·; θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    family: ContinuousFamily,
    params: Vec<f64>,
    kernel: Kernel,
}

impl ContinuousModel {
    pub fn new(family: ContinuousFamily, params: &[f64]) -> Result<Self> {
        family.validate()?;
        if params.len() != family.param_count() {
            return Err(Error::DimensionMismatch {
                expected: family.param_count(),
                got: params.len(),
            });
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("model parameter {bad}")));
        }
        let kernel = match family {
            ContinuousFamily::Gaussian { variance_adj } => {
                let (mu, sigma2) = (params[0], params[1]);
                if sigma2 <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "sigma2 must be > 0, got {sigma2}"
                    )));
                }
                let var = sigma2 * variance_adj;
                Kernel::Gaussian {
                    mean: mu,
                    var,
                    log_norm: -HALF_LN_2PI - 0.5 * var.ln(),
                }
            }
            ContinuousFamily::StudentT { dof } => {
                let (mu, sigma2) = (params[0], params[1]);
                if sigma2 <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "sigma2 must be > 0, got {sigma2}"
                    )));
                }
                Kernel::StudentT {
                    loc: mu,
                    scale2: sigma2,
                    dof,
                    log_norm: student_t_log_norm(dof) - 0.5 * sigma2.ln(),
                }
            }
            ContinuousFamily::GaussianMixture {
                components,
                scale_floor,
            } => {
                let weights = params[..components].to_vec();
                let means = params[components..2 * components].to_vec();
                let sds = params[2 * components..].to_vec();
                if weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::InvalidParameter(
                        "mixture weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights must sum to 1 (sum = {total})"
                    )));
                }
                if let Some(&s) = sds.iter().find(|&&s| s < scale_floor) {
                    return Err(Error::InvalidParameter(format!(
                        "mixture scale {s} below floor {scale_floor}"
                    )));
                }
                let log_norms = weights
                    .iter()
                    .zip(&sds)
                    .map(|(&w, &s)| w.ln() - HALF_LN_2PI - s.ln())
                    .collect();
                Kernel::Mixture(Box::new(Mixture {
                    weights,
                    means,
                    sds,
                    log_norms,
                }))
            }
        };
        Ok(Self {
            family,
            params: params.to_vec(),
            kernel,
        })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(ContinuousFamily::gaussian(), &[mean, variance])
    }

    pub fn student_t(dof: f64, loc: f64, scale2: f64) -> Result<Self> {
        Self::new(ContinuousFamily::student_t(dof), &[loc, scale2])
    }

    /// Mixture from `(weight, mean, sd)` triples.
    pub fn mixture(components: &[(f64, f64, f64)]) -> Result<Self> {
        let k = components.len();
        let mut params = vec![0.0; 3 * k];
        for (i, &(w, m, s)) in components.iter().enumerate() {
            params[i] = w;
            params[k + i] = m;
            params[2 * k + i] = s;
        }
        let floor = components
            .iter()
            .map(|c| c.2)
            .fold(DEFAULT_SCALE_FLOOR, f64::min);
        Self::new(
            ContinuousFamily::GaussianMixture {
                components: k,
                scale_floor: floor,
            },
            &params,
        )
    }

    pub fn family(&self) -> ContinuousFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Same family and scale, different location (location-scale families only).
    pub fn with_location(&self, loc: f64) -> Self {
        let mut out = self.clone();
        match &mut out.kernel {
            Kernel::Gaussian { mean, .. } => *mean = loc,
            Kernel::StudentT { loc: l, .. } => *l = loc,
            Kernel::Mixture(_) => return out,
        }
        out.params[0] = loc;
        out
    }

    /// `ln f(y)` without input validation.
    #[inline]
    pub fn ln_pdf(&self, y: f64) -> f64 {
        match &self.kernel {
            Kernel::Gaussian {
                mean,
                var,
                log_norm,
            } => {
                let d = y - mean;
                log_norm - 0.5 * d * d / var
            }
            Kernel::StudentT {
                loc,
                scale2,
                dof,
                log_norm,
            } => {
                let d = y - loc;
                log_norm - 0.5 * (dof + 1.0) * (d * d / (scale2 * dof)).ln_1p()
            }
            Kernel::Mixture(m) => {
                let mut terms = [0.0f64; 16];
                let k = m.means.len();
                if k <= terms.len() {
                    for i in 0..k {
                        let z = (y - m.means[i]) / m.sds[i];
                        terms[i] = m.log_norms[i] - 0.5 * z * z;
                    }
                    log_sum_exp(&terms[..k])
                } else {
                    let terms: Vec<f64> = (0..k)
                        .map(|i| {
                            let z = (y - m.means[i]) / m.sds[i];
                            m.log_norms[i] - 0.5 * z * z
                        })
                        .collect();
                    log_sum_exp(&terms)
                }
            }
        }
    }

    /// `f(y)` without input validation; exactly zero once `ln f < −700`.
    #[inline]
    pub fn pdf(&self, y: f64) -> f64 {
        let l = self.ln_pdf(y);
        if l < LOG_DENSITY_FLOOR {
            0.0
        } else {
            l.exp()
        }
    }

    pub fn log_density(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self.ln_pdf(y))
    }

    pub fn density(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self.pdf(y))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match &self.kernel {
            Kernel::Gaussian { mean, var, .. } => normal_cdf((y - mean) / var.sqrt()),
            Kernel::StudentT {
                loc, scale2, dof, ..
            } => StudentsT::new(*loc, scale2.sqrt(), *dof)
                .map(|d| d.cdf(y))
                .unwrap_or(f64::NAN),
            Kernel::Mixture(m) => m
                .weights
                .iter()
                .zip(m.means.iter().zip(&m.sds))
                .map(|(w, (mu, s))| w * normal_cdf((y - mu) / s))
                .sum(),
        }
    }

    /// Essential supremum of the density. Exact for location-scale families;
    /// for mixtures the grid maximum times 1.001, capped by `Σ ω_k / (√(2π) σ_k)`.
    pub fn density_sup(&self) -> f64 {
        match &self.kernel {
            Kernel::Gaussian { log_norm, .. } | Kernel::StudentT { log_norm, .. } => log_norm.exp(),
            Kernel::Mixture(m) => {
                let cap: f64 = m.log_norms.iter().map(|l| l.exp()).sum();
                let mut best = 0.0f64;
                for (mu, s) in m.means.iter().zip(&m.sds) {
                    for i in -200..=200 {
                        best = best.max(self.pdf(mu + s * (i as f64) * 0.02));
                    }
                }
                (best * 1.001).min(cap)
            }
        }
    }

    /// Points where the density has structure (modes and shoulders), used to
    /// seed quadrature breakpoints.
    pub fn feature_points(&self) -> Vec<f64> {
        match &self.kernel {
            Kernel::Gaussian { mean, var, .. } => {
                let s = var.sqrt();
                [-8.0, -3.0, 0.0, 3.0, 8.0]
                    .iter()
                    .map(|k| mean + k * s)
                    .collect()
            }
            Kernel::StudentT { loc, scale2, .. } => {
                let s = scale2.sqrt();
                [-20.0, -4.0, -1.0, 0.0, 1.0, 4.0, 20.0]
                    .iter()
                    .map(|k| loc + k * s)
                    .collect()
            }
            Kernel::Mixture(m) => {
                let mut pts = Vec::with_capacity(5 * m.means.len());
                for (mu, s) in m.means.iter().zip(&m.sds) {
                    pts.extend([-8.0, -3.0, 0.0, 3.0, 8.0].iter().map(|k| mu + k * s));
                }
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                pts
            }
        }
    }

    /// Location and standard deviation of the bulk, for plotting grids.
    pub fn centre_and_spread(&self) -> (f64, f64) {
        match &self.kernel {
            Kernel::Gaussian { mean, var, .. } => (*mean, var.sqrt()),
            Kernel::StudentT { loc, scale2, .. } => (*loc, scale2.sqrt()),
            Kernel::Mixture(m) => {
                let mean: f64 = m.weights.iter().zip(&m.means).map(|(w, mu)| w * mu).sum();
                let second: f64 = m
                    .weights
                    .iter()
                    .zip(m.means.iter().zip(&m.sds))
                    .map(|(w, (mu, s))| w * (s * s + mu * mu))
                    .sum();
                (mean, (second - mean * mean).max(0.0).sqrt())
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kernel {
            Kernel::Gaussian { mean, var, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            Kernel::StudentT {
                loc, scale2, dof, ..
            } => {
                let t = StudentTDist::new(*dof).expect("validated dof").sample(rng);
                loc + scale2.sqrt() * t
            }
            Kernel::Mixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = m.weights.len() - 1;
                for (i, w) in m.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                let z: f64 = StandardNormal.sample(rng);
                m.means[idx] + m.sds[idx] * z
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub(crate) fn is_location_scale(&self) -> bool {
        !matches!(self.kernel, Kernel::Mixture(_))
    }

    /// Scale parameter(s) that determine the power integral of a location-scale family.
    pub(crate) fn scale_key(&self) -> Option<f64> {
        match &self.kernel {
            Kernel::Gaussian { var, .. } => Some(*var),
            Kernel::StudentT { scale2, .. } => Some(*scale2),
            Kernel::Mixture(_) => None,
        }
    }

    pub(crate) fn student_t_parts(&self) -> Option<(f64, f64)> {
        match &self.kernel {
            Kernel::StudentT { scale2, dof, .. } => Some((*dof, *scale2)),
            _ => None,
        }
    }

    pub(crate) fn gaussian_variance(&self) -> Option<f64> {
        match &self.kernel {
            Kernel::Gaussian { var, .. } => Some(*var),
            _ => None,
        }
    }
}

fn check_finite(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("observation {y}")))
    }
}

/// `ln Γ((ν+1)/2) − ln Γ(ν/2) − ½ ln(νπ)`
pub(crate) fn student_t_log_norm(dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln()
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_line, Tolerance};

    // Independent closed forms, written out longhand.
    fn normal_pdf_oracle(y: f64, mu: f64, var: f64) -> f64 {
        (-(y - mu) * (y - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn standard_normal_at_zero() {
        let m = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        assert!((m.density(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((m.density(0.0).unwrap() - normal_pdf_oracle(0.0, 0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_component_mixture_is_gaussian() {
        let mix = ContinuousModel::mixture(&[(1.0, 0.0, 1.0)]).unwrap();
        let g = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        for y in [-3.0, -0.5, 0.0, 1.7, 6.0] {
            assert!((mix.pdf(y) - g.pdf(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn student_t_five_at_zero() {
        let m = ContinuousModel::student_t(5.0, 0.0, 1.0).unwrap();
        // Γ(3)/(Γ(2.5)√(5π)) = 8/(3π√5)
        let oracle = 8.0 / (3.0 * PI * 5f64.sqrt());
        assert!((m.density(0.0).unwrap() - oracle).abs() < 1e-14);
        assert!((m.density(0.0).unwrap() - 0.379_606_7).abs() < 1e-7);
    }

    #[test]
    fn variance_adjustment_scales_variance() {
        let m = ContinuousModel::new(
            ContinuousFamily::Gaussian { variance_adj: 1.16 },
            &[0.3, 2.0],
        )
        .unwrap();
        assert!((m.pdf(1.0) - normal_pdf_oracle(1.0, 0.3, 2.32)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_observation_is_an_error() {
        let m = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        assert!(m.density(f64::NAN).is_err());
        assert!(m.log_density(f64::INFINITY).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ContinuousModel::gaussian(0.0, -1.0).is_err());
        assert!(ContinuousModel::gaussian(0.0, 0.0).is_err());
        assert!(ContinuousModel::student_t(0.0, 0.0, 1.0).is_err());
        assert!(ContinuousModel::mixture(&[(0.5, 0.0, 1.0), (0.6, 1.0, 1.0)]).is_err());
        assert!(ContinuousModel::mixture(&[(1.2, 0.0, 1.0), (-0.2, 1.0, 1.0)]).is_err());
        let fam = ContinuousFamily::GaussianMixture {
            components: 1,
            scale_floor: 0.1,
        };
        assert!(ContinuousModel::new(fam, &[1.0, 0.0, 0.05]).is_err());
        assert!(ContinuousModel::new(ContinuousFamily::gaussian(), &[0.0]).is_err());
    }

    #[test]
    fn far_tail_log_density_stays_finite() {
        let m = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        let l = m.log_density(60.0).unwrap();
        assert!((l - (-HALF_LN_2PI - 1800.0)).abs() < 1e-9);
        assert_eq!(m.density(60.0).unwrap(), 0.0);
    }

    #[test]
    fn densities_integrate_to_one() {
        let models = [
            ContinuousModel::gaussian(1.0, 0.3).unwrap(),
            ContinuousModel::new(
                ContinuousFamily::Gaussian { variance_adj: 1.16 },
                &[-2.0, 4.0],
            )
            .unwrap(),
            ContinuousModel::student_t(5.0, 0.5, 2.0).unwrap(),
            ContinuousModel::student_t(2.5, 0.0, 1.0).unwrap(),
            ContinuousModel::mixture(&[(0.9, 0.0, 1.0), (0.1, 5.0, 3.0)]).unwrap(),
            ContinuousModel::mixture(&[(0.3, -4.0, 0.01), (0.3, 0.0, 1.0), (0.4, 3.0, 0.5)])
                .unwrap(),
        ];
        for m in &models {
            let q =
                integrate_line(|y| m.pdf(y), &m.feature_points(), Tolerance::default()).unwrap();
            assert!(
                (q.value - 1.0).abs() < 1e-6,
                "{:?}: {}",
                m.family(),
                q.value
            );
        }
    }

    #[test]
    fn log_density_matches_density() {
        let models = [
            ContinuousModel::gaussian(0.0, 2.0).unwrap(),
            ContinuousModel::student_t(5.0, 0.0, 1.0).unwrap(),
            ContinuousModel::mixture(&[(0.9, 0.0, 1.0), (0.1, 5.0, 3.0)]).unwrap(),
        ];
        for m in &models {
            for i in -100..=100 {
                let y = 0.2 * i as f64;
                let d = m.density(y).unwrap();
                if d > 1e-300 {
                    assert!((m.log_density(y).unwrap().exp() - d).abs() <= 1e-12 * d);
                }
            }
        }
    }

    #[test]
    fn duplicated_components_merge() {
        let single = ContinuousModel::mixture(&[(1.0, 0.7, 1.3)]).unwrap();
        let split =
            ContinuousModel::mixture(&[(0.25, 0.7, 1.3), (0.5, 0.7, 1.3), (0.25, 0.7, 1.3)])
                .unwrap();
        for i in -60..=60 {
            let y = 0.25 * i as f64;
            let (a, b) = (single.pdf(y), split.pdf(y));
            assert!((a - b).abs() <= 1e-14 * a.max(1e-300), "y={y}");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = ContinuousModel::student_t(5.0, 0.0, 1.0).unwrap();
        assert_eq!(m.sample(1, 42), m.sample(1, 42));
        assert_ne!(m.sample(3, 42), m.sample(3, 43));
    }

    #[test]
    fn gaussian_sample_moments() {
        let m = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        let xs = m.sample(100_000, 7);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * 3.0 / n.sqrt());
        // sd of the sample variance is √(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn contamination_sample_has_expected_outliers() {
        let g = ContinuousModel::mixture(&[(0.9, 0.0, 1.0), (0.1, 5.0, 3.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Count component draws directly through the same weights.
        let xs = g.sample_with(1000, &mut rng);
        assert_eq!(xs.len(), 1000);
        let far = xs.iter().filter(|&&x| x > 3.5).count();
        // P(x > 3.5) = 0.9·(1−Φ(3.5)) + 0.1·(1−Φ(−0.5)) ≈ 0.0693
        assert!(
            (far as f64 - 69.3).abs() < 4.0 * (1000.0f64 * 0.0693 * 0.93).sqrt(),
            "{far}"
        );
    }

    fn ks_distance(model: &ContinuousModel, mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = model.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samples_match_cdf() {
        let models = [
            ContinuousModel::gaussian(1.0, 2.0).unwrap(),
            ContinuousModel::student_t(5.0, 0.0, 1.0).unwrap(),
            ContinuousModel::mixture(&[(0.9, 0.0, 1.0), (0.1, 5.0, 3.0)]).unwrap(),
        ];
        for (i, m) in models.iter().enumerate() {
            let d = ks_distance(m, m.sample(10_000, 100 + i as u64));
            assert!(d <= 0.02, "{:?}: KS {d}", m.family());
        }
    }

    #[test]
    fn mixture_sup_bounds_density() {
        let m = ContinuousModel::mixture(&[(0.5, 0.0, 1.0), (0.5, 0.5, 0.2)]).unwrap();
        let sup = m.density_sup();
        for i in -400..=400 {
            assert!(m.pdf(0.01 * i as f64) <= sup);
        }
    }
}
