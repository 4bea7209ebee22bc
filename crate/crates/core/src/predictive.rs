//! Posterior predictive densities: Monte Carlo averages of the model over
//! posterior draws.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::divergences::DensityHandle;
use crate::error::{Error, Result};
use crate::models::{BinaryModel, ContinuousFamily, ContinuousModel, RegressionModel};
use crate::sampler::{BinaryPosterior, ContinuousPosterior, PosteriorDraws, RegressionPosterior};

/// Default cap on the number of draws averaged by a predictive.
pub const DEFAULT_MAX_MODELS: usize = 2000;

/// Default number of points in a predictive curve.
pub const DEFAULT_GRID_POINTS: usize = 2048;

/// Indices of at most `max` rows spread evenly over `0..len`.
pub fn thin_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max || max == 0 {
        return (0..len).collect();
    }
    (0..max).map(|i| (i * len) / max).collect()
}

fn mean_and_mcse(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    let mcse = if n > 1.0 {
        (m2 / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (mean, mcse)
}

/// Predictive density of a univariate model, `(1/S) Σ_s f(y; θ_s)`.
#[derive(Debug, Clone)]
pub struct PredictiveEstimate {
    models: Vec<ContinuousModel>,
    source_draws: usize,
}

impl PredictiveEstimate {
    pub fn new(models: Vec<ContinuousModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("predictive needs at least one draw"));
        }
        let source_draws = models.len();
        Ok(Self {
            models,
            source_draws,
        })
    }

    /// Averages over at most `max_models` evenly thinned draws.
    pub fn from_draws(
        post: &ContinuousPosterior,
        draws: &PosteriorDraws,
        max_models: usize,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws"));
        }
        let models = thin_indices(draws.len(), max_models)
            .into_iter()
            .map(|i| post.model(&draws.draws[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            source_draws: draws.len(),
        })
    }

    pub fn models(&self) -> &[ContinuousModel] {
        &self.models
    }

    /// Number of draws averaged.
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Number of posterior draws the estimate was built from, before thinning.
    pub fn source_draws(&self) -> usize {
        self.source_draws
    }

    pub fn family(&self) -> ContinuousFamily {
        self.models[0].family()
    }

    pub fn density(&self, y: f64) -> f64 {
        self.models.iter().map(|m| m.pdf(y)).sum::<f64>() / self.models.len() as f64
    }

    /// Density together with the Monte Carlo standard error of the average.
    pub fn density_with_mcse(&self, y: f64) -> (f64, f64) {
        mean_and_mcse(self.models.iter().map(|m| m.pdf(y)))
    }

    pub fn log_density(&self, y: f64) -> f64 {
        let logs: Vec<f64> = self.models.iter().map(|m| m.ln_pdf(y)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        let s: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        top + (s / logs.len() as f64).ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.models.iter().map(|m| m.cdf(y)).sum::<f64>() / self.models.len() as f64
    }

    /// Largest essential supremum among the averaged models; bounds the predictive.
    pub fn density_sup(&self) -> f64 {
        self.models
            .iter()
            .map(ContinuousModel::density_sup)
            .fold(0.0, f64::max)
    }

    /// Average of the models' centres and spreads.
    pub fn centre_and_spread(&self) -> (f64, f64) {
        let n = self.models.len() as f64;
        let (c, s) = self
            .models
            .iter()
            .map(ContinuousModel::centre_and_spread)
            .fold((0.0, 0.0), |(a, b), (c, s)| (a + c, b + s));
        (c / n, s / n)
    }

    /// Feature points pooled from a handful of evenly spaced draws.
    pub fn feature_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = thin_indices(self.models.len(), 8)
            .into_iter()
            .flat_map(|i| self.models[i].feature_points())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `n` predictive draws: a stored draw chosen uniformly, then the model sampled.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = rng.random_range(0..self.models.len());
                self.models[s].draw(&mut rng)
            })
            .collect()
    }

    /// Equally spaced grid over the data range widened by four average scales.
    pub fn default_grid(&self, data: &[f64], points: usize) -> Vec<f64> {
        let (centre, spread) = self.centre_and_spread();
        let lo = data.iter().copied().fold(centre, f64::min) - 4.0 * spread;
        let hi = data.iter().copied().fold(centre, f64::max) + 4.0 * spread;
        linspace(lo, hi, points)
    }

    pub fn curve(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.par_iter().map(|&y| (y, self.density(y))).collect()
    }

    pub fn handle(&self) -> DensityHandle<'_> {
        DensityHandle::new(move |y| self.density(y))
            .with_log_density(move |y| self.log_density(y))
            .with_breakpoints(self.feature_points())
            .with_sup(self.density_sup())
    }
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Two-column `(y, density)` text with a header.
pub fn curve_to_delimited(curve: &[(f64, f64)], sep: char) -> String {
    let mut out = format!("y{sep}density\n");
    for (y, d) in curve {
        let _ = writeln!(out, "{y}{sep}{d}");
    }
    out
}

/// Model at the posterior-mean parameters. Mixture components are ordered by
/// location within each draw before averaging.
pub fn posterior_mean_model(
    post: &ContinuousPosterior,
    draws: &PosteriorDraws,
) -> Result<ContinuousModel> {
    if draws.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    match post.family {
        ContinuousFamily::GaussianMixture { components: k, .. } => {
            let mut acc = vec![0.0; 3 * k];
            for row in &draws.draws {
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| row[k + a].total_cmp(&row[k + b]));
                for (slot, &c) in order.iter().enumerate() {
                    acc[slot] += row[c];
                    acc[k + slot] += row[k + c];
                    acc[2 * k + slot] += row[2 * k + c];
                }
            }
            let n = draws.len() as f64;
            acc.iter_mut().for_each(|v| *v /= n);
            let total: f64 = acc[..k].iter().sum();
            acc[..k].iter_mut().for_each(|w| *w /= total);
            post.model(&acc)
        }
        _ => post.model(&draws.mean()),
    }
}

/// Predictive for regression: at a design row `x`, the average of the
/// residual density located at `xθ_s`.
#[derive(Debug, Clone)]
pub struct RegressionPredictive {
    models: Vec<RegressionModel>,
}

impl RegressionPredictive {
    pub fn new(models: Vec<RegressionModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("predictive needs at least one draw"));
        }
        Ok(Self { models })
    }

    pub fn from_draws(
        post: &RegressionPosterior,
        draws: &PosteriorDraws,
        max_models: usize,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws"));
        }
        let models = thin_indices(draws.len(), max_models)
            .into_iter()
            .map(|i| post.model(&draws.draws[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn models(&self) -> &[RegressionModel] {
        &self.models
    }

    /// The univariate predictive at covariates `x`.
    pub fn at(&self, x: &[f64]) -> Result<PredictiveEstimate> {
        let models = self
            .models
            .iter()
            .map(|m| Ok(m.residual_model().with_location(m.mean(x)?)))
            .collect::<Result<Vec<_>>>()?;
        PredictiveEstimate::new(models)
    }

    pub fn density(&self, x: &[f64], y: f64) -> Result<f64> {
        let mut s = 0.0;
        for m in &self.models {
            s += m.density(x, y)?;
        }
        Ok(s / self.models.len() as f64)
    }
}

/// Predictive class probabilities for binary regression.
#[derive(Debug, Clone)]
pub struct BinaryPredictive {
    models: Vec<BinaryModel>,
}

impl BinaryPredictive {
    pub fn new(models: Vec<BinaryModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("predictive needs at least one draw"));
        }
        Ok(Self { models })
    }

    pub fn from_draws(
        post: &BinaryPosterior,
        draws: &PosteriorDraws,
        max_models: usize,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws"));
        }
        let models = thin_indices(draws.len(), max_models)
            .into_iter()
            .map(|i| post.model(&draws.draws[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn models(&self) -> &[BinaryModel] {
        &self.models
    }

    /// Posterior mean of `P(y = 1 | x, θ)`.
    pub fn prob_one(&self, x: &[f64]) -> Result<f64> {
        Ok(self.prob_one_with_mcse(x)?.0)
    }

    pub fn prob_one_with_mcse(&self, x: &[f64]) -> Result<(f64, f64)> {
        let probs = self
            .models
            .iter()
            .map(|m| m.prob_one(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_and_mcse(probs.into_iter()))
    }

    pub fn class_probability(&self, x: &[f64], label: u8) -> Result<f64> {
        let p = self.prob_one(x)?;
        match label {
            1 => Ok(p),
            0 => Ok(1.0 - p),
            _ => Err(Error::InvalidParameter(format!(
                "label must be 0 or 1, got {label}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{BinaryData, LossSpec};
    use crate::models::{BinaryFamily, PriorSpec};
    use crate::quadrature::{integrate_line, Tolerance};
    use crate::sampler::GeneralPosterior;
    use proptest::prelude::*;

    fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    fn mixed() -> PredictiveEstimate {
        let models = (0..50)
            .map(|i| {
                let t = i as f64 / 49.0;
                ContinuousModel::student_t(5.0, -1.0 + 2.0 * t, 0.5 + t).unwrap()
            })
            .collect();
        PredictiveEstimate::new(models).unwrap()
    }

    #[test]
    fn single_draw_equals_model() {
        let m = ContinuousModel::gaussian(0.3, 1.7).unwrap();
        let pe = PredictiveEstimate::new(vec![m.clone()]).unwrap();
        for y in [-3.0, 0.0, 0.3, 2.5] {
            assert_eq!(pe.density(y), m.pdf(y));
            assert!((pe.log_density(y) - m.ln_pdf(y)).abs() < 1e-14);
        }
        assert_eq!(pe.density_with_mcse(1.0).1, 0.0);
    }

    #[test]
    fn degenerate_draws_equal_model() {
        let m = ContinuousModel::student_t(5.0, 1.0, 2.0).unwrap();
        let pe = PredictiveEstimate::new(vec![m.clone(); 17]).unwrap();
        for y in [-3.0, 0.0, 1.0, 6.0] {
            assert!((pe.density(y) - m.pdf(y)).abs() < 1e-15);
        }
        let (_, mcse) = pe.density_with_mcse(0.5);
        assert!(mcse < 1e-15);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(PredictiveEstimate::new(Vec::new()).is_err());
        assert!(BinaryPredictive::new(Vec::new()).is_err());
    }

    #[test]
    fn integrates_to_one() {
        let pe = mixed();
        let q = integrate_line(
            |y| pe.density(y),
            &pe.feature_points(),
            Tolerance::default(),
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-6, "{}", q.value);
    }

    #[test]
    fn log_density_matches_density() {
        let pe = mixed();
        for y in [-30.0, -2.0, 0.0, 1.5, 40.0] {
            assert!((pe.log_density(y) - pe.density(y).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_sample_matches_model() {
        let m = ContinuousModel::mixture(&[(0.9, 0.0, 1.0), (0.1, 5.0, 3.0)]).unwrap();
        let pe = PredictiveEstimate::new(vec![m.clone(); 5]).unwrap();
        let mut s = pe.sample(10_000, 11);
        assert!(ks_statistic(&mut s, |y| m.cdf(y)) <= 0.02);
    }

    #[test]
    fn sample_follows_predictive_cdf() {
        let pe = mixed();
        let mut s = pe.sample(10_000, 5);
        assert!(ks_statistic(&mut s, |y| pe.cdf(y)) <= 0.02);
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let pe = mixed();
        assert_eq!(pe.sample(100, 9), pe.sample(100, 9));
        assert_ne!(pe.sample(100, 9), pe.sample(100, 10));
    }

    #[test]
    fn thinning_is_even_and_bounded() {
        assert_eq!(thin_indices(5, 10), vec![0, 1, 2, 3, 4]);
        let idx = thin_indices(10_000, 2000);
        assert_eq!(idx.len(), 2000);
        assert!(idx.windows(2).all(|w| w[1] - w[0] == 5));
    }

    #[test]
    fn curve_layout() {
        let pe = mixed();
        let grid = pe.default_grid(&[-3.0, 4.0], 2048);
        assert_eq!(grid.len(), 2048);
        assert!(grid[0] < -3.0 && grid[2047] > 4.0);
        let text = curve_to_delimited(&pe.curve(&grid[..3]), ',');
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("y,density\n"));
    }

    #[test]
    fn mixture_mean_model_is_label_invariant() {
        let post = ContinuousPosterior::new(
            ContinuousFamily::mixture(2),
            None,
            PriorSpec::MixtureNigDirichlet {
                alpha: 1.0,
                nu0: 5.0,
                s0: 0.2,
                kappa: 5.68,
            },
            LossSpec::log_score(),
            vec![0.0, 1.0],
        )
        .unwrap();
        let a = vec![0.3, 0.7, -1.0, 2.0, 0.5, 1.5];
        let b = vec![0.7, 0.3, 2.0, -1.0, 1.5, 0.5];
        let draws = PosteriorDraws::from_points(post.family.param_names(), vec![a.clone(), b]);
        let m = posterior_mean_model(&post, &draws).unwrap();
        let direct = post.model(&a).unwrap();
        for y in [-2.0, 0.0, 1.0, 3.0] {
            assert!((m.pdf(y) - direct.pdf(y)).abs() < 1e-14);
        }
    }

    #[test]
    fn binary_predictive_is_mean_probability() {
        let post = BinaryPosterior::new(
            BinaryFamily::Logistic,
            1.0,
            PriorSpec::FlatGaussianCoef { mean: 0.0, sd: 3.0 },
            LossSpec::log_score(),
            BinaryData::new(vec![vec![1.0, 0.5], vec![1.0, -0.5]], vec![1, 0]).unwrap(),
            0.5,
        )
        .unwrap();
        let points = vec![vec![0.5, 1.0], vec![-1.0, 2.0], vec![0.0, -3.0]];
        let draws = PosteriorDraws::from_points(post.param_names(), points.clone());
        let pred = BinaryPredictive::from_draws(&post, &draws, 100).unwrap();
        let x = [1.0, 0.8];
        let expected: f64 = points
            .iter()
            .map(|t| post.model(t).unwrap().class_probability(&x, 1).unwrap())
            .sum::<f64>()
            / 3.0;
        let p = pred.prob_one(&x).unwrap();
        assert!((p - expected).abs() < 1e-15);
        assert!((pred.class_probability(&x, 0).unwrap() + p - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn binary_probability_in_unit_interval(
            coefs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            x1 in -4.0f64..4.0,
        ) {
            let models = coefs
                .iter()
                .map(|&(a, b)| BinaryModel::new(BinaryFamily::Probit, vec![a, b], 1.0).unwrap())
                .collect();
            let pred = BinaryPredictive::new(models).unwrap();
            let p = pred.prob_one(&[1.0, x1]).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn predictive_density_nonnegative(y in -1e3f64..1e3) {
            prop_assert!(mixed().density(y) >= 0.0);
        }
    }
}
