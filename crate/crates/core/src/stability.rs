//! Stability diagnostics: neighbourhoods of likelihood models, parameter
//! matching maps, bound multipliers and the Monte Carlo terms of the
//! predictive stability bounds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{beta_div, kld, tvd, DensityHandle};
use crate::error::{Error, Result};
use crate::models::{BinaryFamily, ContinuousFamily, ContinuousModel};
use crate::predictive::{linspace, PredictiveEstimate};
use crate::quadrature::{integrate_line, Tolerance};

/// Bisection-safeguarded Newton solve of `cdf(x) = p`.
fn quantile(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, p: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while cdf(lo) > p {
        lo *= 2.0;
    }
    while cdf(hi) < p {
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = cdf(x) - p;
        if r.abs() < 1e-15 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = x - r / pdf(x);
        x = if step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * x.abs().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::RootNotConverged {
        iterations: 200,
        residual: cdf(x) - p,
    })
}

/// Variance inflation making `N(0, σ²_adj)` share its quartiles with a standard `t_ν`.
pub fn quartile_match_gaussian_to_t(dof: f64) -> Result<f64> {
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom must be > 0, got {dof}"
        )));
    }
    let n = ContinuousModel::gaussian(0.0, 1.0)?;
    let t = ContinuousModel::student_t(dof, 0.0, 1.0)?;
    let qn = quantile(|x| n.cdf(x), |x| n.pdf(x), 0.75)?;
    let qt = quantile(|x| t.cdf(x), |x| t.pdf(x), 0.75)?;
    Ok((qt / qn).powi(2))
}

/// Default grid of linear predictors for link matching.
pub fn default_link_grid() -> Vec<f64> {
    linspace(-20.0, 20.0, 4001)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkFit {
    pub multiplier: f64,
    /// `sup_a |P_alt(1 | w a) − P_logistic(1 | a)|` at the fitted `w`.
    pub sup_gap: f64,
}

/// Largest class-probability gap between `alt` at `w·a` and logistic at `a`.
pub fn link_gap(alt: &BinaryFamily, w: f64, grid: &[f64]) -> Result<f64> {
    let base = BinaryFamily::Logistic;
    let mut gap = 0.0f64;
    for &a in grid {
        gap = gap.max((alt.prob_one(w * a)? - base.prob_one(a)?).abs());
    }
    Ok(gap)
}

/// Scalar `w` such that `P_alt(1 | w·xθ)` best matches logistic regression
/// in sup norm over `grid`.
pub fn fit_scalar_multiplier(alt: &BinaryFamily, grid: &[f64]) -> Result<LinkFit> {
    alt.validate()?;
    if matches!(alt, BinaryFamily::Mislabelled { .. }) {
        return Err(Error::InvalidParameter(
            "link matching needs a symmetric link family".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::Empty("link grid"));
    }
    let objective = |w: f64| link_gap(alt, w, grid);
    // coarse log-spaced scan to bracket a single minimum
    let scan: Vec<f64> = (0..=80)
        .map(|i| 0.05 * 100f64.powf(i as f64 / 80.0))
        .collect();
    let values = scan
        .iter()
        .map(|&w| objective(w))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("scan is nonempty");
    if best == 0 || best == scan.len() - 1 {
        return Err(Error::NotBracketed {
            lo: scan[0],
            hi: scan[scan.len() - 1],
            f_lo: values[0],
            f_hi: values[scan.len() - 1],
        });
    }
    let (mut a, mut b) = (scan[best - 1], scan[best + 1]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d)?;
        }
    }
    let multiplier = 0.5 * (a + b);
    Ok(LinkFit {
        multiplier,
        sup_gap: objective(multiplier)?,
    })
}

/// Map from the parameters of one model to those of its neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterMap {
    /// Shared `(μ, σ²)` between location-scale families.
    Identity,
    /// Embeds a mixture into one with an extra component of weight `weight`;
    /// the reverse map drops the last component and renormalises.
    AddComponent { weight: f64, mean: f64, sd: f64 },
}

impl ParameterMap {
    pub fn forward(&self, f: ContinuousFamily, theta: &[f64]) -> Result<Vec<f64>> {
        match *self {
            ParameterMap::Identity => Ok(theta.to_vec()),
            ParameterMap::AddComponent { weight, mean, sd } => {
                let k = match f {
                    ContinuousFamily::GaussianMixture { components, .. } => components,
                    _ => {
                        return Err(Error::InvalidParameter(
                            "component embedding needs a mixture".into(),
                        ))
                    }
                };
                if !(0.0..1.0).contains(&weight) {
                    return Err(Error::InvalidParameter(format!(
                        "embedding weight {weight} outside [0, 1)"
                    )));
                }
                let mut out = Vec::with_capacity(3 * (k + 1));
                out.extend(theta[..k].iter().map(|w| w * (1.0 - weight)));
                out.push(weight);
                out.extend_from_slice(&theta[k..2 * k]);
                out.push(mean);
                out.extend_from_slice(&theta[2 * k..3 * k]);
                out.push(sd);
                Ok(out)
            }
        }
    }

    pub fn backward(&self, h: ContinuousFamily, eta: &[f64]) -> Result<Vec<f64>> {
        match *self {
            ParameterMap::Identity => Ok(eta.to_vec()),
            ParameterMap::AddComponent { .. } => {
                let k1 = match h {
                    ContinuousFamily::GaussianMixture { components, .. } if components >= 2 => {
                        components
                    }
                    _ => {
                        return Err(Error::InvalidParameter(
                            "component removal needs a mixture".into(),
                        ))
                    }
                };
                let k = k1 - 1;
                let total: f64 = eta[..k].iter().sum();
                let mut out = Vec::with_capacity(3 * k);
                out.extend(eta[..k].iter().map(|w| w / total));
                out.extend_from_slice(&eta[k1..k1 + k]);
                out.extend_from_slice(&eta[2 * k1..2 * k1 + k]);
                Ok(out)
            }
        }
    }
}

/// A pair of likelihood families and the map matching their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighbourhoodSpec {
    pub f: ContinuousFamily,
    pub h: ContinuousFamily,
    pub map: ParameterMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonEstimate {
    /// Larger of the two directions.
    pub epsilon: f64,
    /// `sup_θ TVD(f(θ), h(I_f θ))`
    pub forward: f64,
    /// `sup_η TVD(h(η), f(I_h η))` over the images of the grid.
    pub backward: f64,
    pub per_point: Vec<f64>,
}

/// Default `(μ, σ²)` grid: 5 × 5 over `[−2, 2] × [0.5, 2]`.
pub fn default_location_scale_grid() -> Vec<Vec<f64>> {
    let mus = linspace(-2.0, 2.0, 5);
    let vars = linspace(0.5, 2.0, 5);
    mus.iter()
        .flat_map(|&m| vars.iter().map(move |&v| vec![m, v]))
        .collect()
}

/// Supremum over `grid` of the TVD between matched models, in both directions.
pub fn neighbourhood_epsilon(
    spec: &NeighbourhoodSpec,
    grid: &[Vec<f64>],
) -> Result<EpsilonEstimate> {
    if grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    let pairs = grid
        .par_iter()
        .map(|theta| {
            let f = ContinuousModel::new(spec.f, theta)?;
            let eta = spec.map.forward(spec.f, theta)?;
            let h = ContinuousModel::new(spec.h, &eta)?;
            let fwd = tvd(
                &DensityHandle::from_model(&f),
                &DensityHandle::from_model(&h),
            )?
            .value;
            let back_theta = spec.map.backward(spec.h, &eta)?;
            let f_back = ContinuousModel::new(spec.f, &back_theta)?;
            let bwd = tvd(
                &DensityHandle::from_model(&h),
                &DensityHandle::from_model(&f_back),
            )?
            .value;
            Ok((fwd, bwd))
        })
        .collect::<Result<Vec<_>>>()?;
    let forward = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let backward = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(EpsilonEstimate {
        epsilon: forward.max(backward),
        forward,
        backward,
        per_point: pairs.iter().map(|p| p.0).collect(),
    })
}

/// Multipliers of the TVD radius in the βD stability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundMultipliers {
    pub m: f64,
    pub beta: f64,
    /// Two models, one data set: `M^{β−1}(3β−2)/(β(β−1))`.
    pub two_models: f64,
    /// Two models, divergence to the data density: `2M^{β−1}/(β−1)`.
    pub two_models_to_truth: f64,
    /// One model, two data densities: `M^{β−1}(β+2)/(β(β−1))`.
    pub two_truths: f64,
    /// βD bounded by TVD: `M^{β−1}/(β−1)`.
    pub beta_by_tvd: f64,
}

pub fn bound_multipliers(m: f64, beta: f64) -> Result<BoundMultipliers> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "density bound must be > 0, got {m}"
        )));
    }
    if !(beta > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bounds diverge for beta <= 1 (got {beta})"
        )));
    }
    if beta > 2.0 {
        return Err(Error::InvalidParameter(format!(
            "bounds hold for beta <= 2, got {beta}"
        )));
    }
    let mb = m.powf(beta - 1.0);
    Ok(BoundMultipliers {
        m,
        beta,
        two_models: mb * (3.0 * beta - 2.0) / (beta * (beta - 1.0)),
        two_models_to_truth: 2.0 * mb / (beta - 1.0),
        two_truths: mb * (beta + 2.0) / (beta * (beta - 1.0)),
        beta_by_tvd: mb / (beta - 1.0),
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub mcse: f64,
}

fn mc_mean(values: &[f64]) -> McEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        value: mean,
        mcse: (var / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenGap {
    /// Posterior mean divergence minus divergence of the predictive.
    pub gap: McEstimate,
    pub mean_model_divergence: f64,
    pub predictive_divergence: f64,
}

/// `E_π βD(g‖f(θ)) − βD(g‖m)` over the draws averaged by `pe`.
pub fn estimate_jensen_gap(
    g: &DensityHandle<'_>,
    pe: &PredictiveEstimate,
    beta: f64,
) -> Result<JensenGap> {
    let per_draw = pe
        .models()
        .par_iter()
        .map(|m| Ok(beta_div(g, &DensityHandle::from_model(m), beta)?.value))
        .collect::<Result<Vec<_>>>()?;
    let predictive = beta_div(g, &pe.handle(), beta)?.value;
    let mean = mc_mean(&per_draw);
    Ok(JensenGap {
        gap: McEstimate {
            value: mean.value - predictive,
            mcse: mean.mcse,
        },
        mean_model_divergence: mean.value,
        predictive_divergence: predictive,
    })
}

/// `∫ p (ln a − ln b)` for log-density evaluators `a`, `b`.
fn expected_log_ratio(
    p: &DensityHandle<'_>,
    a: &ContinuousModel,
    b: &ContinuousModel,
) -> Result<f64> {
    let mut breaks = p.breakpoints().to_vec();
    breaks.extend(a.feature_points());
    breaks.extend(b.feature_points());
    let q = integrate_line(
        |y| {
            let pv = p.eval(y);
            if pv == 0.0 {
                return 0.0;
            }
            let (la, lb) = (a.ln_pdf(y), b.ln_pdf(y));
            if !(la.is_finite() && lb.is_finite()) {
                return f64::NAN;
            }
            pv * (la - lb)
        },
        &breaks,
        Tolerance::new(1e-10, 1e-9).with_max_intervals(20_000),
    );
    match q {
        Ok(q) => Ok(q.value),
        Err(Error::NonFinite(_)) => Err(Error::SupportViolation {
            at: f64::NAN,
            p: f64::NAN,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSided {
    /// Larger of the two directions.
    pub value: f64,
    pub first: McEstimate,
    pub second: McEstimate,
}

impl TwoSided {
    fn new(first: McEstimate, second: McEstimate) -> Self {
        Self {
            value: first.value.max(second.value),
            first,
            second,
        }
    }
}

/// Log-likelihood-ratio term for two models under KLD-Bayes:
/// `max{E_{π_f} ∫ g ln(f(θ)/h(I_f θ)), E_{π_h} ∫ g ln(h(η)/f(I_h η))}`.
pub fn kld_model_term(
    g: &DensityHandle<'_>,
    spec: &NeighbourhoodSpec,
    f_draws: &[Vec<f64>],
    h_draws: &[Vec<f64>],
) -> Result<TwoSided> {
    if f_draws.is_empty() || h_draws.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    let first = f_draws
        .par_iter()
        .map(|theta| {
            let f = ContinuousModel::new(spec.f, theta)?;
            let h = ContinuousModel::new(spec.h, &spec.map.forward(spec.f, theta)?)?;
            expected_log_ratio(g, &f, &h)
        })
        .collect::<Result<Vec<_>>>()?;
    let second = h_draws
        .par_iter()
        .map(|eta| {
            let h = ContinuousModel::new(spec.h, eta)?;
            let f = ContinuousModel::new(spec.f, &spec.map.backward(spec.h, eta)?)?;
            expected_log_ratio(g, &h, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TwoSided::new(mc_mean(&first), mc_mean(&second)))
}

fn neg_entropy(g: &DensityHandle<'_>) -> Result<f64> {
    let q = integrate_line(
        |y| {
            let v = g.eval(y);
            if v > 0.0 {
                v * g.ln_eval(y)
            } else {
                0.0
            }
        },
        g.breakpoints(),
        Tolerance::new(1e-10, 1e-9).with_max_intervals(20_000),
    )?;
    Ok(q.value)
}

/// Entropy difference term `|∫ g₂ ln g₂ − ∫ g₁ ln g₁|`.
pub fn entropy_term(g1: &DensityHandle<'_>, g2: &DensityHandle<'_>) -> Result<f64> {
    g1.certify()?;
    g2.certify()?;
    Ok((neg_entropy(g2)? - neg_entropy(g1)?).abs())
}

/// Cross term `max{E_{π₁} ∫ (g₁ − g₂) ln f(θ₁), E_{π₂} ∫ (g₂ − g₁) ln f(θ₂)}`.
pub fn data_shift_term(
    g1: &DensityHandle<'_>,
    g2: &DensityHandle<'_>,
    family: ContinuousFamily,
    draws1: &[Vec<f64>],
    draws2: &[Vec<f64>],
) -> Result<TwoSided> {
    if draws1.is_empty() || draws2.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    let term = |a: &DensityHandle<'_>, b: &DensityHandle<'_>, theta: &Vec<f64>| -> Result<f64> {
        let f = ContinuousModel::new(family, theta)?;
        let mut breaks = a.breakpoints().to_vec();
        breaks.extend_from_slice(b.breakpoints());
        breaks.extend(f.feature_points());
        let q = integrate_line(
            |y| {
                let d = a.eval(y) - b.eval(y);
                if d == 0.0 {
                    0.0
                } else {
                    d * f.ln_pdf(y)
                }
            },
            &breaks,
            Tolerance::new(1e-10, 1e-9).with_max_intervals(20_000),
        )?;
        Ok(q.value)
    };
    let first = draws1
        .par_iter()
        .map(|t| term(g1, g2, t))
        .collect::<Result<Vec<_>>>()?;
    let second = draws2
        .par_iter()
        .map(|t| term(g2, g1, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(TwoSided::new(mc_mean(&first), mc_mean(&second)))
}

/// KLD-Bayes analogue of the Jensen gap: `E_π KLD(g‖f(θ)) − KLD(g‖m)`.
pub fn estimate_kld_jensen_gap(
    g: &DensityHandle<'_>,
    pe: &PredictiveEstimate,
) -> Result<McEstimate> {
    let per_draw = pe
        .models()
        .par_iter()
        .map(|m| Ok(kld(g, &DensityHandle::from_model(m))?.value))
        .collect::<Result<Vec<_>>>()?;
    let predictive = kld(g, &pe.handle())?.value;
    let mean = mc_mean(&per_draw);
    Ok(McEstimate {
        value: mean.value - predictive,
        mcse: mean.mcse,
    })
}

/// Constructive terms of the stability bounds for one experiment. The
/// posterior concentration constants are not estimated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub multipliers: BoundMultipliers,
    pub epsilon: Option<f64>,
    /// Labelled Jensen gaps, one per fit.
    pub jensen_gaps: Vec<(String, McEstimate)>,
    /// Labelled TVDs between the data density and each predictive.
    pub predictive_tvd_to_g: Vec<(String, f64)>,
    /// Labelled KLD-Bayes terms.
    pub kld_terms: Vec<(String, McEstimate)>,
    pub concentration_terms: String,
}

impl BoundReport {
    pub fn new(multipliers: BoundMultipliers) -> Self {
        Self {
            multipliers,
            epsilon: None,
            jensen_gaps: Vec::new(),
            predictive_tvd_to_g: Vec::new(),
            kld_terms: Vec::new(),
            concentration_terms: "not estimated".into(),
        }
    }

    /// `multiplier · ε` for each bound, when `ε` is set.
    pub fn scaled_terms(&self) -> Option<[f64; 3]> {
        self.epsilon.map(|e| {
            [
                self.multipliers.two_models * e,
                self.multipliers.two_models_to_truth * e,
                self.multipliers.two_truths * e,
            ]
        })
    }

    /// Flat `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let m = &self.multipliers;
        let _ = writeln!(out, "m = {}", m.m);
        let _ = writeln!(out, "beta = {}", m.beta);
        let _ = writeln!(out, "multiplier_two_models = {}", m.two_models);
        let _ = writeln!(
            out,
            "multiplier_two_models_to_truth = {}",
            m.two_models_to_truth
        );
        let _ = writeln!(out, "multiplier_two_truths = {}", m.two_truths);
        let _ = writeln!(out, "multiplier_beta_by_tvd = {}", m.beta_by_tvd);
        match self.epsilon {
            Some(e) => {
                let _ = writeln!(out, "epsilon = {e}");
            }
            None => out.push_str("epsilon = not computed\n"),
        }
        if let Some([a, b, c]) = self.scaled_terms() {
            let _ = writeln!(out, "term_two_models = {a}");
            let _ = writeln!(out, "term_two_models_to_truth = {b}");
            let _ = writeln!(out, "term_two_truths = {c}");
        }
        for (label, est) in &self.jensen_gaps {
            let _ = writeln!(out, "jensen_gap.{label} = {}", est.value);
            let _ = writeln!(out, "jensen_gap_mcse.{label} = {}", est.mcse);
        }
        for (label, v) in &self.predictive_tvd_to_g {
            let _ = writeln!(out, "predictive_tvd_to_g.{label} = {v}");
        }
        for (label, est) in &self.kld_terms {
            let _ = writeln!(out, "kld_term.{label} = {}", est.value);
            let _ = writeln!(out, "kld_term_mcse.{label} = {}", est.mcse);
        }
        let _ = writeln!(out, "concentration_terms = {}", self.concentration_terms);
        out
    }
}

/// `(β, multiplier)` rows of the two-model bound over a β sweep.
pub fn multiplier_sweep(m: f64, betas: &[f64]) -> Result<Vec<(f64, f64)>> {
    betas
        .iter()
        .map(|&b| Ok((b, bound_multipliers(m, b)?.two_models)))
        .collect()
}
