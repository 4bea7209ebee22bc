//! Adaptive random-walk Metropolis for general Bayes posteriors.

mod diagnostics;
mod optimize;
mod posterior;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{
    diagnostics, effective_sample_size, split_rhat, DiagnosticsReport, ParamSummary, RHAT_THRESHOLD,
};
pub use optimize::{Minimum, NelderMead};
pub use posterior::{
    stick_breaking, stick_breaking_inverse, BinaryPosterior, ContinuousPosterior, GeneralPosterior,
    RegressionPosterior,
};

/// How chains are initialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    PriorDraw,
    UserPoint { point: Vec<f64> },
    LossMinimizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub target_accept: f64,
    pub init: InitStrategy,
    /// Standard deviation of the per-chain jitter added to the initial point
    /// in the unconstrained space.
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 20_000,
            burn_in: 10_000,
            thin: 1,
            seed: 1,
            adapt_window: 500,
            target_accept: 0.30,
            init: InitStrategy::LossMinimizer,
            init_jitter: 0.05,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.chains == 0 {
            return bad("need at least one chain".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be less than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return bad("thin must be >= 1".into());
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be >= 1".into());
        }
        if !(self.target_accept > 0.1 && self.target_accept < 0.6) {
            return bad(format!(
                "target_accept must lie in (0.1, 0.6), got {}",
                self.target_accept
            ));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return bad(format!(
                "init_jitter must be >= 0, got {}",
                self.init_jitter
            ));
        }
        Ok(())
    }
}

/// Kept states of one chain in the sampling space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub states: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub log_target: Vec<f64>,
    /// Acceptance rate after adaptation stopped.
    pub acceptance: f64,
    pub final_scales: Vec<f64>,
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for j in 0..x.len() {
            let delta = x[j] - self.mean[j];
            self.mean[j] += delta / self.n as f64;
            self.m2[j] += delta * (x[j] - self.mean[j]);
        }
    }

    fn sd(&self, j: usize) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2[j] / (self.n - 1) as f64).sqrt()
        }
    }
}

/// Proposal scales from the diagonal curvature of the log target at `z`.
fn curvature_scales<F: Fn(&[f64]) -> f64>(log_target: &F, z: &[f64], f0: f64) -> Vec<f64> {
    let mut scales = Vec::with_capacity(z.len());
    let mut probe = z.to_vec();
    for j in 0..z.len() {
        let h = 1e-3 * (1.0 + z[j].abs());
        probe[j] = z[j] + h;
        let fp = log_target(&probe);
        probe[j] = z[j] - h;
        let fm = log_target(&probe);
        probe[j] = z[j];
        let second = (fp - 2.0 * f0 + fm) / (h * h);
        let s = if second.is_finite() && second < 0.0 {
            (-1.0 / second).sqrt()
        } else {
            0.1
        };
        scales.push(s.clamp(1e-6, 10.0));
    }
    scales
}

/// Run independent adaptive RWM chains on `log_target`, one per start point.
///
/// Chain `c` draws from a ChaCha8 stream seeded with `cfg.seed + c`.
pub fn run_chains<F>(
    log_target: F,
    starts: &[Vec<f64>],
    cfg: &SamplerConfig,
) -> Result<Vec<ChainOutput>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if starts.len() != cfg.chains {
        return Err(Error::DimensionMismatch {
            expected: cfg.chains,
            got: starts.len(),
        });
    }
    starts
        .par_iter()
        .enumerate()
        .map(|(c, start)| run_one_chain(&log_target, start, cfg, cfg.seed.wrapping_add(c as u64)))
        .collect()
}

fn run_one_chain<F: Fn(&[f64]) -> f64>(
    log_target: &F,
    start: &[f64],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<ChainOutput> {
    let d = start.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = start.to_vec();
    let mut lp = log_target(&z);
    if !lp.is_finite() {
        return Err(Error::NonFiniteInit(z));
    }
    let mut scales = curvature_scales(log_target, &z, lp);
    let mut log_lambda = (2.38 / (d.max(1) as f64).sqrt()).ln();
    let mut window = Welford::new(d);
    let mut accepted_after = 0usize;
    let kept = (cfg.iterations - cfg.burn_in).div_ceil(cfg.thin);
    let mut states = Vec::with_capacity(kept);
    let mut iterations = Vec::with_capacity(kept);
    let mut log_targets = Vec::with_capacity(kept);
    let mut proposal = vec![0.0; d];

    for it in 0..cfg.iterations {
        let lambda = log_lambda.exp();
        for j in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            proposal[j] = z[j] + lambda * scales[j] * e;
        }
        let lp_new = log_target(&proposal);
        let log_ratio = lp_new - lp;
        let u: f64 = rng.random();
        let accept = lp_new.is_finite() && u.ln() < log_ratio;
        if accept {
            z.copy_from_slice(&proposal);
            lp = lp_new;
        }
        if it < cfg.burn_in {
            let alpha = if lp_new.is_finite() {
                log_ratio.min(0.0).exp()
            } else {
                0.0
            };
            let step = ((it + 1) as f64).powf(-0.6).max(0.01);
            log_lambda += step * (alpha - cfg.target_accept);
            window.push(&z);
            if (it + 1) % cfg.adapt_window == 0 && window.n >= 2 {
                if (it + 1) > cfg.adapt_window {
                    for (j, s) in scales.iter_mut().enumerate() {
                        let sd = window.sd(j);
                        if sd > 0.0 && sd.is_finite() {
                            *s = sd;
                        }
                    }
                }
                if (it + 1) == cfg.adapt_window {
                    // discard the transient from the first window
                    window = Welford::new(d);
                }
            }
        } else {
            if accept {
                accepted_after += 1;
            }
            if (it - cfg.burn_in) % cfg.thin == 0 {
                states.push(z.clone());
                iterations.push(it);
                log_targets.push(lp);
            }
        }
    }
    let lambda = log_lambda.exp();
    Ok(ChainOutput {
        states,
        iterations,
        log_target: log_targets,
        acceptance: accepted_after as f64 / (cfg.iterations - cfg.burn_in) as f64,
        final_scales: scales.iter().map(|s| s * lambda).collect(),
    })
}

/// Draws from a general Bayes posterior, in constrained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub param_names: Vec<String>,
    /// One row per kept draw, ordered by chain then iteration.
    pub draws: Vec<Vec<f64>>,
    pub chain: Vec<usize>,
    pub iteration: Vec<usize>,
    /// Log posterior density (prior minus weighted loss) at each draw.
    pub log_target: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    /// Draws with no chain structure, e.g. for a single fixed parameter.
    pub fn from_points(param_names: Vec<String>, points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self {
            param_names,
            draws: points,
            chain: vec![0; n],
            iteration: (0..n).collect(),
            log_target: vec![f64::NAN; n],
            acceptance: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.chain.iter().max().map_or(0, |m| m + 1)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn chain_columns(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (d, &c) in self.draws.iter().zip(&self.chain) {
            out[c].push(d[j]);
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.param_names.len();
        let mut m = vec![0.0; d];
        for row in &self.draws {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.draws.len() as f64);
        m
    }

    /// Delimited table: parameter columns then `chain` and `iteration`.
    pub fn to_delimited(&self, sep: char) -> String {
        let mut out = String::new();
        for name in &self.param_names {
            out.push_str(name);
            out.push(sep);
        }
        out.push_str("chain");
        out.push(sep);
        out.push_str("iteration\n");
        for ((row, c), it) in self.draws.iter().zip(&self.chain).zip(&self.iteration) {
            for v in row {
                let _ = write!(out, "{v}{sep}");
            }
            let _ = writeln!(out, "{c}{sep}{it}");
        }
        out
    }
}

/// Starting point in constrained space according to `cfg.init`.
pub fn initial_point<P: GeneralPosterior + ?Sized>(
    post: &P,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    match &cfg.init {
        InitStrategy::UserPoint { point } => {
            post.unconstrain(point)?;
            Ok(point.clone())
        }
        InitStrategy::PriorDraw => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_1417);
            post.prior_draw(&mut rng)
        }
        InitStrategy::LossMinimizer => match loss_minimizer_init(post) {
            Ok(p) => Ok(p),
            Err(e) => {
                log::warn!("loss minimisation failed ({e}); falling back to a prior draw");
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_1417);
                post.prior_draw(&mut rng)
            }
        },
    }
}

/// Minimise the total loss by Nelder–Mead in the unconstrained space, starting
/// from the better of the data-driven start and the prior central point.
pub fn loss_minimizer_init<P: GeneralPosterior + ?Sized>(post: &P) -> Result<Vec<f64>> {
    let objective = |z: &[f64]| -> f64 {
        match post.constrain(z) {
            Ok((theta, _)) if post.log_prior(&theta).is_finite() => {
                post.total_loss(&theta).unwrap_or(f64::INFINITY)
            }
            _ => f64::INFINITY,
        }
    };
    let prior_point = post.prior_point();
    let prior_loss = post.total_loss(&prior_point).unwrap_or(f64::INFINITY);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for candidate in [post.start_point(), prior_point.clone()] {
        let Ok(z0) = post.unconstrain(&candidate) else {
            continue;
        };
        let m = NelderMead::default().minimize(objective, &z0);
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.x, m.value));
        }
    }
    let (z, value) =
        best.ok_or_else(|| Error::InvalidParameter("no feasible starting point".into()))?;
    let (theta, _) = post.constrain(&z)?;
    if !post.log_posterior(&theta).is_finite() {
        return Err(Error::NonFiniteInit(theta));
    }
    if value > prior_loss {
        return Ok(prior_point);
    }
    Ok(theta)
}

/// Sample a general Bayes posterior with `cfg.chains` adaptive RWM chains.
pub fn run_mcmc<P: GeneralPosterior + ?Sized>(
    post: &P,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let theta0 = initial_point(post, cfg)?;
    let z0 = post.unconstrain(&theta0)?;
    if !post.log_target(&z0).is_finite() {
        return Err(Error::NonFiniteInit(theta0));
    }
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut starts = Vec::with_capacity(cfg.chains);
    for c in 0..cfg.chains {
        let mut s = z0.clone();
        if c > 0 {
            for _ in 0..100 {
                let cand: Vec<f64> = z0
                    .iter()
                    .map(|z| {
                        let e: f64 = StandardNormal.sample(&mut jitter_rng);
                        z + cfg.init_jitter * e
                    })
                    .collect();
                if post.log_target(&cand).is_finite() {
                    s = cand;
                    break;
                }
            }
        }
        starts.push(s);
    }
    let outputs = run_chains(|z| post.log_target(z), &starts, cfg)?;
    let mut draws = PosteriorDraws {
        param_names: post.param_names(),
        draws: Vec::new(),
        chain: Vec::new(),
        iteration: Vec::new(),
        log_target: Vec::new(),
        acceptance: Vec::new(),
        warnings: Vec::new(),
    };
    for (c, out) in outputs.into_iter().enumerate() {
        draws.acceptance.push(out.acceptance);
        if !(0.1..=0.6).contains(&out.acceptance) {
            draws.warnings.push(format!(
                "chain {c}: acceptance rate {:.3} outside [0.1, 0.6]",
                out.acceptance
            ));
        }
        for ((z, it), _) in out.states.iter().zip(out.iterations).zip(&out.log_target) {
            let (theta, _) = post.constrain(z)?;
            draws.log_target.push(post.log_posterior(&theta));
            draws.draws.push(theta);
            draws.chain.push(c);
            draws.iteration.push(it);
        }
    }
    let report = diagnostics(&draws);
    for p in &report.params {
        if p.rhat.is_nan() || p.rhat > RHAT_THRESHOLD {
            draws.warnings.push(format!(
                "{}: split R-hat {:.4} above {}",
                p.name, p.rhat, RHAT_THRESHOLD
            ));
        }
    }
    for w in &draws.warnings {
        log::warn!("{w}");
    }
    Ok(draws)
}
