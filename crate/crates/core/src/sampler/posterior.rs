//! General Bayes targets and their unconstraining transforms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::{total_loss, BinaryData, LossSpec};
use crate::models::{
    BinaryFamily, BinaryModel, ContinuousFamily, ContinuousModel, PriorSpec, RegressionData,
    RegressionModel, ResidualFamily,
};

/// A posterior `π(θ) exp(−w Σ ℓ(θ, y_i))` over constrained parameters `θ`,
/// sampled in an unconstrained space `z`.
pub trait GeneralPosterior: Sync {
    /// Dimension of the unconstrained space.
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    /// `z ↦ (θ, ln |∂θ/∂z|)`
    fn constrain(&self, z: &[f64]) -> Result<(Vec<f64>, f64)>;

    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn log_prior(&self, theta: &[f64]) -> f64;

    /// `w Σ ℓ(θ, y_i)`
    fn total_loss(&self, theta: &[f64]) -> Result<f64>;

    fn prior_draw(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>>;

    /// A data-driven starting point in constrained space.
    fn start_point(&self) -> Vec<f64>;

    /// Prior central point in constrained space.
    fn prior_point(&self) -> Vec<f64>;

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        let lp = self.log_prior(theta);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.total_loss(theta) {
            Ok(l) if l.is_finite() => lp - l,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Log density in the unconstrained space, including the Jacobian.
    fn log_target(&self, z: &[f64]) -> f64 {
        match self.constrain(z) {
            Ok((theta, log_jac)) if log_jac.is_finite() => self.log_posterior(&theta) + log_jac,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Scalar transforms.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_logistic_jac(x: f64) -> f64 {
    // ln σ(x) + ln(1 − σ(x))
    -x.abs() - 2.0 * (-x.abs()).exp().ln_1p()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Stick-breaking map from `K−1` reals onto the `K`-simplex.
pub fn stick_breaking(y: &[f64]) -> (Vec<f64>, f64) {
    let k = y.len() + 1;
    let mut w = Vec::with_capacity(k);
    let mut remaining = 1.0;
    let mut log_jac = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let shifted = yi - ((k - i - 1) as f64).ln();
        let z = logistic(shifted);
        let wi = remaining * z;
        log_jac += log_logistic_jac(shifted) + remaining.ln();
        w.push(wi);
        remaining -= wi;
    }
    w.push(remaining.max(0.0));
    (w, log_jac)
}

pub fn stick_breaking_inverse(w: &[f64]) -> Result<Vec<f64>> {
    let k = w.len();
    let mut remaining = 1.0;
    let mut y = Vec::with_capacity(k.saturating_sub(1));
    for (i, &wi) in w[..k - 1].iter().enumerate() {
        if !(wi > 0.0) || remaining <= wi {
            return Err(Error::InvalidParameter(
                "weights must lie in the open simplex".into(),
            ));
        }
        let z = wi / remaining;
        y.push(logit(z) + ((k - i - 1) as f64).ln());
        remaining -= wi;
    }
    Ok(y)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and normal-consistent MAD scale.
pub(crate) fn robust_location_scale(data: &[f64]) -> (f64, f64) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = median(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|y| (y - m).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = 1.4826 * median(&dev);
    (m, if mad > 0.0 { mad } else { 1.0 })
}

/// Univariate data under a Gaussian, Student-t or mixture likelihood.
#[derive(Debug, Clone)]
pub struct ContinuousPosterior {
    pub family: ContinuousFamily,
    /// When set, the scale is fixed and only the location is sampled.
    pub known_scale: Option<f64>,
    pub prior: PriorSpec,
    pub loss: LossSpec,
    pub data: Vec<f64>,
}

impl ContinuousPosterior {
    pub fn new(
        family: ContinuousFamily,
        known_scale: Option<f64>,
        prior: PriorSpec,
        loss: LossSpec,
        data: Vec<f64>,
    ) -> Result<Self> {
        prior.validate()?;
        loss.validate()?;
        if let Some(s) = known_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "known scale must be > 0, got {s}"
                )));
            }
            if matches!(family, ContinuousFamily::GaussianMixture { .. }) {
                return Err(Error::InvalidParameter(
                    "known scale is for location-scale families".into(),
                ));
            }
        }
        if let Some(bad) = data.iter().find(|y| !y.is_finite()) {
            return Err(Error::NonFinite(format!("observation {bad}")));
        }
        // the mixture model validates its own hyperparameters
        ContinuousModel::new(family, &vec_template(family))?;
        Ok(Self {
            family,
            known_scale,
            prior,
            loss,
            data,
        })
    }

    #[cfg(test)]
    fn components(&self) -> usize {
        match self.family {
            ContinuousFamily::GaussianMixture { components, .. } => components,
            _ => 0,
        }
    }

    fn scale_floor(&self) -> f64 {
        match self.family {
            ContinuousFamily::GaussianMixture { scale_floor, .. } => scale_floor,
            _ => 0.0,
        }
    }

    /// Constrained parameter dimension.
    pub fn param_dim(&self) -> usize {
        match (self.family, self.known_scale) {
            (ContinuousFamily::GaussianMixture { components, .. }, _) => 3 * components,
            (_, Some(_)) => 1,
            _ => 2,
        }
    }

    /// Likelihood model at constrained parameters `θ`.
    pub fn model(&self, theta: &[f64]) -> Result<ContinuousModel> {
        match self.known_scale {
            Some(s) => {
                if theta.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: theta.len(),
                    });
                }
                ContinuousModel::new(self.family, &[theta[0], s])
            }
            None => ContinuousModel::new(self.family, theta),
        }
    }
}

fn vec_template(family: ContinuousFamily) -> Vec<f64> {
    match family {
        ContinuousFamily::GaussianMixture {
            components,
            scale_floor,
        } => {
            let k = components.max(1);
            let mut v = vec![1.0 / k as f64; k];
            v.extend(std::iter::repeat_n(0.0, k));
            v.extend(std::iter::repeat_n(scale_floor.max(1e-300) * 2.0, k));
            v
        }
        _ => vec![0.0, 1.0],
    }
}

impl GeneralPosterior for ContinuousPosterior {
    fn dim(&self) -> usize {
        match self.family {
            ContinuousFamily::GaussianMixture { components, .. } => 3 * components - 1,
            _ => self.param_dim(),
        }
    }

    fn param_names(&self) -> Vec<String> {
        let names = self.family.param_names();
        if self.known_scale.is_some() {
            names[..1].to_vec()
        } else {
            names
        }
    }

    fn constrain(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        match self.family {
            ContinuousFamily::GaussianMixture { components: k, .. } => {
                let (mut theta, mut log_jac) = stick_breaking(&z[..k - 1]);
                theta.extend_from_slice(&z[k - 1..2 * k - 1]);
                let floor = self.scale_floor();
                for &zi in &z[2 * k - 1..] {
                    theta.push(floor + zi.exp());
                    log_jac += zi;
                }
                Ok((theta, log_jac))
            }
            _ => match self.known_scale {
                Some(_) => Ok((vec![z[0]], 0.0)),
                None => Ok((vec![z[0], z[1].exp()], z[1])),
            },
        }
    }

    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        match self.family {
            ContinuousFamily::GaussianMixture { components: k, .. } => {
                let mut z = stick_breaking_inverse(&theta[..k])?;
                z.extend_from_slice(&theta[k..2 * k]);
                let floor = self.scale_floor();
                for &s in &theta[2 * k..] {
                    if s <= floor {
                        return Err(Error::InvalidParameter(format!(
                            "scale {s} not above floor {floor}"
                        )));
                    }
                    z.push((s - floor).ln());
                }
                Ok(z)
            }
            _ => match self.known_scale {
                Some(_) => Ok(vec![theta[0]]),
                None => {
                    if theta[1] <= 0.0 {
                        return Err(Error::InvalidParameter("sigma2 must be > 0".into()));
                    }
                    Ok(vec![theta[0], theta[1].ln()])
                }
            },
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        match self.known_scale {
            Some(s) => match self.prior {
                PriorSpec::NormalInverseGamma { .. } => self.prior.log_density(&[theta[0], s]),
                _ => self.prior.log_density(theta),
            },
            None => self.prior.log_density(theta),
        }
    }

    fn total_loss(&self, theta: &[f64]) -> Result<f64> {
        let model = self.model(theta)?;
        total_loss(&model, &self.data[..], &self.loss)
    }

    fn prior_draw(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        let floor = self.scale_floor();
        for _ in 0..1000 {
            let mut draw = match (self.known_scale, self.prior) {
                (Some(s), PriorSpec::NormalInverseGamma { mu0, v0, .. }) => {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                    vec![mu0 + (v0 * s).sqrt() * z]
                }
                (Some(_), _) => self.prior.sample(1, rng)?,
                (None, _) => self.prior.sample(self.param_dim(), rng)?,
            };
            if let ContinuousFamily::GaussianMixture { components: k, .. } = self.family {
                if draw[2 * k..].iter().any(|&s| s <= floor) || draw[..k].iter().any(|&w| w <= 0.0)
                {
                    continue;
                }
                let total: f64 = draw[..k].iter().sum();
                draw[..k].iter_mut().for_each(|w| *w /= total);
            }
            if self.unconstrain(&draw).is_ok() {
                return Ok(draw);
            }
        }
        Err(Error::InvalidParameter(
            "could not draw a valid point from the prior".into(),
        ))
    }

    fn start_point(&self) -> Vec<f64> {
        if self.data.is_empty() {
            return self.prior_point();
        }
        let (m, s) = robust_location_scale(&self.data);
        match self.family {
            ContinuousFamily::GaussianMixture { components: k, .. } => {
                let mut sorted = self.data.clone();
                sorted.sort_by(f64::total_cmp);
                let floor = self.scale_floor();
                let mut theta = vec![1.0 / k as f64; k];
                theta.extend((0..k).map(|i| quantile(&sorted, (i as f64 + 0.5) / k as f64)));
                theta.extend((0..k).map(|i| {
                    let lo = quantile(&sorted, i as f64 / k as f64);
                    let hi = quantile(&sorted, (i + 1) as f64 / k as f64);
                    ((hi - lo) / 2.0).max(s / (2.0 * k as f64)).max(2.0 * floor)
                }));
                theta
            }
            _ => match self.known_scale {
                Some(_) => vec![m],
                None => vec![m, s * s],
            },
        }
    }

    fn prior_point(&self) -> Vec<f64> {
        match self.known_scale {
            Some(_) => {
                let p = self.prior.central_point(2);
                vec![p[0]]
            }
            None => {
                let mut p = self.prior.central_point(self.param_dim());
                if let ContinuousFamily::GaussianMixture { components: k, .. } = self.family {
                    let floor = self.scale_floor();
                    for s in &mut p[2 * k..] {
                        *s = s.max(2.0 * floor);
                    }
                }
                p
            }
        }
    }
}

/// Linear regression with Gaussian or Student-t residuals; parameters `[θ_1..θ_p, σ²]`.
#[derive(Debug, Clone)]
pub struct RegressionPosterior {
    pub residual: ResidualFamily,
    pub prior: PriorSpec,
    pub loss: LossSpec,
    pub data: RegressionData,
}

impl RegressionPosterior {
    pub fn new(
        residual: ResidualFamily,
        prior: PriorSpec,
        loss: LossSpec,
        data: RegressionData,
    ) -> Result<Self> {
        prior.validate()?;
        loss.validate()?;
        Ok(Self {
            residual,
            prior,
            loss,
            data,
        })
    }

    pub fn model(&self, theta: &[f64]) -> Result<RegressionModel> {
        let (&s2, coef) = theta
            .split_last()
            .ok_or(Error::Empty("regression parameters"))?;
        RegressionModel::new(self.residual, coef.to_vec(), s2)
    }
}

impl GeneralPosterior for RegressionPosterior {
    fn dim(&self) -> usize {
        self.data.p() + 1
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.data.p()).map(|j| format!("theta_{j}")).collect();
        names.push("sigma2".into());
        names
    }

    fn constrain(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (&last, head) = z
            .split_last()
            .ok_or(Error::Empty("regression parameters"))?;
        let mut theta = head.to_vec();
        theta.push(last.exp());
        Ok((theta, last))
    }

    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let (&s2, head) = theta
            .split_last()
            .ok_or(Error::Empty("regression parameters"))?;
        if s2 <= 0.0 {
            return Err(Error::InvalidParameter("sigma2 must be > 0".into()));
        }
        let mut z = head.to_vec();
        z.push(s2.ln());
        Ok(z)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        match self.prior {
            PriorSpec::FlatGaussianCoef { .. } => {
                let (&s2, coef) = theta.split_last().expect("nonempty");
                // coefficients only; σ² gets a reference 1/σ² prior
                self.prior.log_density(coef) - s2.ln()
            }
            _ => self.prior.log_density(theta),
        }
    }

    fn total_loss(&self, theta: &[f64]) -> Result<f64> {
        total_loss(&self.model(theta)?, &self.data, &self.loss)
    }

    fn prior_draw(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        match self.prior {
            PriorSpec::FlatGaussianCoef { .. } => {
                let mut d = self.prior.sample(self.data.p(), rng)?;
                d.push(rng.random_range(0.5..2.0));
                Ok(d)
            }
            _ => self.prior.sample(self.dim(), rng),
        }
    }

    fn start_point(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.data.p()];
        let n = self.data.n() as f64;
        let mean = self.data.y.iter().sum::<f64>() / n;
        let var = self.data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        theta.push(if var > 0.0 { var } else { 1.0 });
        theta
    }

    fn prior_point(&self) -> Vec<f64> {
        match self.prior {
            PriorSpec::FlatGaussianCoef { mean, .. } => {
                let mut p = vec![mean; self.data.p()];
                p.push(1.0);
                p
            }
            _ => self.prior.central_point(self.dim()),
        }
    }
}

/// Binary regression; parameters `[θ_1..θ_p]`, plus `[ν₀, ν₁]` for the mislabelled family.
#[derive(Debug, Clone)]
pub struct BinaryPosterior {
    /// Link family; the flip probabilities of a mislabelled family are ignored and sampled.
    pub family: BinaryFamily,
    pub link_scale: f64,
    /// Prior on the coefficients.
    pub prior: PriorSpec,
    pub loss: LossSpec,
    pub data: BinaryData,
    /// Upper end of the uniform prior on each flip probability.
    pub flip_max: f64,
}

impl BinaryPosterior {
    pub fn new(
        family: BinaryFamily,
        link_scale: f64,
        prior: PriorSpec,
        loss: LossSpec,
        data: BinaryData,
        flip_max: f64,
    ) -> Result<Self> {
        prior.validate()?;
        loss.validate()?;
        family.validate()?;
        if !(flip_max > 0.0 && flip_max < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "flip_max must lie in (0, 1), got {flip_max}"
            )));
        }
        if data.n() == 0 {
            return Err(Error::Empty("binary data"));
        }
        Ok(Self {
            family,
            link_scale,
            prior,
            loss,
            data,
            flip_max,
        })
    }

    fn p(&self) -> usize {
        self.data.x[0].len()
    }

    fn mislabelled(&self) -> bool {
        matches!(self.family, BinaryFamily::Mislabelled { .. })
    }

    pub fn model(&self, theta: &[f64]) -> Result<BinaryModel> {
        let p = self.p();
        let family = match self.family {
            BinaryFamily::Mislabelled { .. } => {
                if theta.len() != p + 2 {
                    return Err(Error::DimensionMismatch {
                        expected: p + 2,
                        got: theta.len(),
                    });
                }
                BinaryFamily::Mislabelled {
                    nu0: theta[p],
                    nu1: theta[p + 1],
                }
            }
            f => f,
        };
        BinaryModel::new(family, theta[..p].to_vec(), self.link_scale)
    }
}

impl GeneralPosterior for BinaryPosterior {
    fn dim(&self) -> usize {
        self.p() + if self.mislabelled() { 2 } else { 0 }
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.p()).map(|j| format!("theta_{j}")).collect();
        if self.mislabelled() {
            names.push("nu0".into());
            names.push("nu1".into());
        }
        names
    }

    fn constrain(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let p = self.p();
        let mut theta = z[..p].to_vec();
        let mut log_jac = 0.0;
        for &zi in &z[p..] {
            theta.push(self.flip_max * logistic(zi));
            log_jac += self.flip_max.ln() + log_logistic_jac(zi);
        }
        Ok((theta, log_jac))
    }

    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.p();
        let mut z = theta[..p].to_vec();
        for &nu in &theta[p..] {
            if !(nu > 0.0 && nu < self.flip_max) {
                return Err(Error::InvalidParameter(format!(
                    "flip probability {nu} outside (0, {})",
                    self.flip_max
                )));
            }
            z.push(logit(nu / self.flip_max));
        }
        Ok(z)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let p = self.p();
        let mut lp = self.prior.log_density(&theta[..p]);
        for &nu in &theta[p..] {
            if !(nu > 0.0 && nu < self.flip_max) {
                return f64::NEG_INFINITY;
            }
            lp -= self.flip_max.ln();
        }
        lp
    }

    fn total_loss(&self, theta: &[f64]) -> Result<f64> {
        total_loss(&self.model(theta)?, &self.data, &self.loss)
    }

    fn prior_draw(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        let mut d = self.prior.sample(self.p(), rng)?;
        if self.mislabelled() {
            d.push(rng.random_range(0.0..self.flip_max).max(1e-12));
            d.push(rng.random_range(0.0..self.flip_max).max(1e-12));
        }
        Ok(d)
    }

    fn start_point(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.p()];
        if self.mislabelled() {
            p.push(0.5 * self.flip_max);
            p.push(0.5 * self.flip_max);
        }
        p
    }

    fn prior_point(&self) -> Vec<f64> {
        let mut p = self.prior.central_point(self.p());
        if self.mislabelled() {
            p.push(0.5 * self.flip_max);
            p.push(0.5 * self.flip_max);
        }
        p
    }
}
