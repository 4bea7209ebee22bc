//! Experiment orchestration. Each experiment writes its tables through a
//! [`Run`] and returns a structured outcome.

use std::fmt::Write as _;

use gbstab::divergences::{
    beta_div, energy_distance, influence_function, tvd, tvd_binary, DensityHandle, Differentiation,
};
use gbstab::losses::{BinaryData, Loss, LossSpec};
use gbstab::models::{
    elicit_dirichlet_concentration, BinaryFamily, ContinuousFamily, ContinuousModel, PriorSpec,
    RegressionData, ResidualFamily,
};
use gbstab::predictive::{
    curve_to_delimited, linspace, posterior_mean_model, thin_indices, BinaryPredictive,
    PredictiveEstimate, RegressionPredictive,
};
use gbstab::sampler::{
    diagnostics, loss_minimizer_init, run_mcmc, BinaryPosterior, ContinuousPosterior,
    DiagnosticsReport, PosteriorDraws, RegressionPosterior,
};
use gbstab::stability::{
    bound_multipliers, data_shift_term, default_link_grid, default_location_scale_grid,
    entropy_term, estimate_jensen_gap, estimate_kld_jensen_gap, fit_scalar_multiplier,
    kld_model_term, neighbourhood_epsilon, quartile_match_gaussian_to_t, BoundMultipliers,
    BoundReport, EpsilonEstimate, LinkFit, McEstimate, NeighbourhoodSpec, ParameterMap,
};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind};
use crate::data::{ingest_csv, standardize, write_csv, Dataset, Dgp};
use crate::error::{CliError, Result};
use crate::report::{num, tsv, Run, RunManifest};

/// Posterior draws kept for per-draw integrals in the bound terms.
const BOUND_TERM_DRAWS: usize = 500;

/// File-name fragment for a loss.
pub fn loss_slug(spec: &LossSpec) -> String {
    let base = match spec.loss {
        Loss::LogScore => "kld".to_string(),
        Loss::BetaD { beta } => format!("betad{beta}"),
        Loss::GammaD { gamma } => format!("gammad{gamma}"),
    };
    if spec.w == 1.0 {
        base
    } else {
        format!("{base}_w{}", spec.w)
    }
}

pub fn family_slug(family: ContinuousFamily) -> String {
    match family {
        ContinuousFamily::Gaussian { .. } => "gaussian".into(),
        ContinuousFamily::StudentT { .. } => "student_t".into(),
        ContinuousFamily::GaussianMixture { components, .. } => format!("mixture{components}"),
    }
}

fn diagnostics_table(report: &DiagnosticsReport) -> String {
    let rows: Vec<Vec<String>> = report
        .params
        .iter()
        .map(|p| {
            vec![
                p.name.clone(),
                num(p.mean),
                num(p.sd),
                num(p.rhat),
                num(p.ess),
                num(p.mcse_mean),
                num(p.mcse_sd),
                p.flags.join(","),
            ]
        })
        .collect();
    let mut out = tsv(
        &[
            "param",
            "mean",
            "sd",
            "rhat",
            "ess",
            "mcse_mean",
            "mcse_sd",
            "flags",
        ],
        &rows,
    );
    let acc: Vec<String> = report.acceptance.iter().map(|a| num(*a)).collect();
    let _ = writeln!(out, "# acceptance\t{}", acc.join(","));
    let _ = writeln!(out, "# converged\t{}", report.converged);
    out
}

fn write_fit_tables(
    run: &mut Run,
    label: &str,
    draws: &PosteriorDraws,
    report: &DiagnosticsReport,
) -> Result<()> {
    if run.config.options.write_draws {
        run.write(&format!("draws_{label}.tsv"), &draws.to_delimited('\t'))?;
    }
    run.write(
        &format!("diagnostics_{label}.tsv"),
        &diagnostics_table(report),
    )?;
    for w in &draws.warnings {
        log::warn!("{label}: {w}");
    }
    if !report.converged {
        log::warn!(
            "{label}: R-hat above {} for some parameter",
            report.rhat_threshold
        );
    }
    Ok(())
}

/// A univariate fit with its predictive.
#[derive(Debug, Clone)]
pub struct ContinuousFit {
    pub label: String,
    pub posterior: ContinuousPosterior,
    pub draws: PosteriorDraws,
    pub diagnostics: DiagnosticsReport,
    pub predictive: PredictiveEstimate,
}

impl ContinuousFit {
    pub fn posterior_mean(&self, param: usize) -> f64 {
        self.diagnostics.params[param].mean
    }

    /// Largest density value over the retained models.
    pub fn density_bound(&self) -> f64 {
        self.predictive
            .models()
            .iter()
            .map(ContinuousModel::density_sup)
            .fold(0.0, f64::max)
    }

    fn thinned_draws(&self, max: usize) -> Vec<Vec<f64>> {
        thin_indices(self.draws.len(), max)
            .into_iter()
            .map(|i| self.draws.draws[i].clone())
            .collect()
    }
}

/// Fits one univariate model and writes its draws, diagnostics and
/// predictive curve on `grid`.
pub fn fit_continuous(
    run: &mut Run,
    family: ContinuousFamily,
    prior: PriorSpec,
    loss: LossSpec,
    data: &[f64],
    grid: &[f64],
    tag: &str,
) -> Result<ContinuousFit> {
    let label = format!("{tag}{}_{}", family_slug(family), loss_slug(&loss));
    let sampler = run.next_sampler();
    let max_models = run.config.options.max_models;
    run.stage(&format!("fit:{label}"), |run| {
        let posterior = ContinuousPosterior::new(family, None, prior, loss, data.to_vec())?;
        let draws = run_mcmc(&posterior, &sampler)?;
        let report = diagnostics(&draws);
        write_fit_tables(run, &label, &draws, &report)?;
        let predictive = PredictiveEstimate::from_draws(&posterior, &draws, max_models)?;
        run.write(
            &format!("predictive_{label}.tsv"),
            &curve_to_delimited(&predictive.curve(grid), '\t'),
        )?;
        Ok(ContinuousFit {
            label: label.clone(),
            posterior,
            draws,
            diagnostics: report,
            predictive,
        })
    })
}

/// Grid spanning the data with three standard deviations either side.
pub fn data_grid(data: &[f64], points: usize) -> Vec<f64> {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-3);
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * sd;
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * sd;
    linspace(lo, hi, points)
}

/// Loads or generates the configured data and records it as `data.csv`.
pub fn load_data(run: &mut Run) -> Result<Dataset> {
    run.stage("data", |run| {
        let data = match &run.config.data {
            DataSource::Synthetic { n, dgp, .. } => dgp.generate(*n, run.config.data_seed())?,
            DataSource::Csv { path, schema } => ingest_csv(path, schema)?,
        };
        let path = run.dir.join("data.csv");
        write_csv(&path, &data)?;
        run.record_file("data.csv")?;
        Ok(data)
    })
}

/// Data density for synthetic sources that have one.
pub fn known_density(cfg: &ExperimentConfig) -> Option<ContinuousModel> {
    match &cfg.data {
        DataSource::Synthetic { dgp, .. } => dgp.density(),
        DataSource::Csv { .. } => None,
    }
}

fn univariate(data: &Dataset) -> Result<&[f64]> {
    if data.covariate_names.is_empty() {
        Ok(&data.response)
    } else {
        Err(CliError::Config(
            "this experiment expects a response with no covariates".into(),
        ))
    }
}

/// Gaussian variance multiplier in use.
pub fn variance_adj(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.options.variance_adj {
        Some(v) => Ok(v),
        None => Ok(quartile_match_gaussian_to_t(cfg.options.dof)?),
    }
}

fn gauss_t_families(cfg: &ExperimentConfig) -> Result<(ContinuousFamily, ContinuousFamily)> {
    Ok((
        ContinuousFamily::Gaussian {
            variance_adj: variance_adj(cfg)?,
        },
        ContinuousFamily::student_t(cfg.options.dof),
    ))
}

/// Gaussian-versus-t comparison under one loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub loss: LossSpec,
    pub energy_distance: f64,
    pub tvd: f64,
    /// βD between the predictives for βD losses.
    pub beta_divergence: Option<f64>,
}

/// Gaussian and Student-t fits under one loss.
#[derive(Debug, Clone)]
pub struct GaussTPair {
    pub gaussian: ContinuousFit,
    pub student_t: ContinuousFit,
    pub comparison: PairComparison,
}

fn compare_predictives(
    cfg: &ExperimentConfig,
    loss: LossSpec,
    a: &PredictiveEstimate,
    b: &PredictiveEstimate,
    pair_index: usize,
) -> Result<PairComparison> {
    let o = &cfg.options;
    let seed = cfg.seed.wrapping_add(900_000 + 2 * pair_index as u64);
    let xs = a.sample(o.energy_samples, seed);
    let ys = b.sample(o.energy_samples, seed + 1);
    let energy = energy_distance(&xs, &ys, o.energy_statistic)?.value;
    let (ha, hb) = (a.handle(), b.handle());
    let tv = tvd(&ha, &hb)?.value;
    let beta_divergence = match loss.loss {
        Loss::BetaD { beta } => Some(beta_div(&ha, &hb, beta)?.value),
        _ => None,
    };
    Ok(PairComparison {
        loss,
        energy_distance: energy,
        tvd: tv,
        beta_divergence,
    })
}

fn gauss_t_pair(
    run: &mut Run,
    data: &[f64],
    loss: LossSpec,
    grid: &[f64],
    pair_index: usize,
) -> Result<GaussTPair> {
    let (fg, ft) = gauss_t_families(&run.config)?;
    let prior = run.config.options.prior;
    let gaussian = fit_continuous(run, fg, prior, loss, data, grid, "")?;
    let student_t = fit_continuous(run, ft, prior, loss, data, grid, "")?;
    let stage = format!("compare:{}", loss_slug(&loss));
    let comparison = run.stage(&stage, |run| {
        compare_predictives(
            &run.config,
            loss,
            &gaussian.predictive,
            &student_t.predictive,
            pair_index,
        )
    })?;
    Ok(GaussTPair {
        gaussian,
        student_t,
        comparison,
    })
}

/// Paired-model diagnostics with the constructive bound terms.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub variance_adj: f64,
    pub neighbourhood: EpsilonEstimate,
    pub pairs: Vec<PairComparison>,
    /// `None` when the bound β is above 2.
    pub bound: Option<BoundReport>,
}

impl StabilityReport {
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variance_adj = {}", self.variance_adj);
        let _ = writeln!(
            out,
            "neighbourhood_forward = {}",
            self.neighbourhood.forward
        );
        let _ = writeln!(
            out,
            "neighbourhood_backward = {}",
            self.neighbourhood.backward
        );
        for p in &self.pairs {
            let l = loss_slug(&p.loss);
            let _ = writeln!(out, "energy_distance.{l} = {}", p.energy_distance);
            let _ = writeln!(out, "predictive_tvd.{l} = {}", p.tvd);
            if let Some(b) = p.beta_divergence {
                let _ = writeln!(out, "predictive_beta_divergence.{l} = {b}");
            }
        }
        match &self.bound {
            Some(b) => out.push_str(&b.to_key_value()),
            None => out.push_str("bound_terms = not available for beta > 2\n"),
        }
        out
    }
}

/// Four fits, two energy distances and one stability report.
#[derive(Debug, Clone)]
pub struct ContaminationOutcome {
    pub pairs: Vec<GaussTPair>,
    pub report: StabilityReport,
}

impl ContaminationOutcome {
    pub fn pair(&self, loss: &Loss) -> Option<&GaussTPair> {
        self.pairs.iter().find(|p| p.comparison.loss.loss == *loss)
    }
}

fn bound_beta(cfg: &ExperimentConfig) -> f64 {
    cfg.losses
        .iter()
        .find_map(|l| match l.loss {
            Loss::BetaD { beta } => Some(beta),
            _ => None,
        })
        .unwrap_or(cfg.betas[0])
}

fn gauss_t_neighbourhood(cfg: &ExperimentConfig) -> Result<(NeighbourhoodSpec, EpsilonEstimate)> {
    let (f, h) = gauss_t_families(cfg)?;
    let spec = NeighbourhoodSpec {
        f,
        h,
        map: ParameterMap::Identity,
    };
    let eps = neighbourhood_epsilon(&spec, &default_location_scale_grid())?;
    Ok((spec, eps))
}

fn two_sided_estimate(t: &gbstab::stability::TwoSided) -> McEstimate {
    if t.first.value >= t.second.value {
        t.first
    } else {
        t.second
    }
}

pub fn contamination(run: &mut Run, data: &Dataset) -> Result<ContaminationOutcome> {
    let y = univariate(data)?.to_vec();
    let grid = data_grid(&y, run.config.options.grid_points);
    let losses = run.config.losses.clone();
    let mut pairs = Vec::with_capacity(losses.len());
    for (i, loss) in losses.into_iter().enumerate() {
        pairs.push(gauss_t_pair(run, &y, loss, &grid, i)?);
    }
    let report = run.stage("stability_report", |run| {
        let cfg = &run.config;
        let (spec, eps) = gauss_t_neighbourhood(cfg)?;
        let m = pairs
            .iter()
            .flat_map(|p| [p.gaussian.density_bound(), p.student_t.density_bound()])
            .fold(0.0, f64::max);
        let beta = bound_beta(cfg);
        let mut bound = if beta <= 2.0 {
            Some(BoundReport::new(bound_multipliers(m, beta)?))
        } else {
            log::warn!("beta = {beta} is above 2; bound terms are not reported");
            None
        };
        if let Some(bound) = &mut bound {
            bound.epsilon = Some(eps.epsilon);
        }
        if let (Some(g), Some(bound)) = (known_density(cfg), &mut bound) {
            let gh = DensityHandle::from_model(&g);
            for p in &pairs {
                for fit in [&p.gaussian, &p.student_t] {
                    bound
                        .predictive_tvd_to_g
                        .push((fit.label.clone(), tvd(&gh, &fit.predictive.handle())?.value));
                    match p.comparison.loss.loss {
                        Loss::BetaD { beta } => {
                            let gap = estimate_jensen_gap(&gh, &fit.predictive, beta)?;
                            bound.jensen_gaps.push((fit.label.clone(), gap.gap));
                        }
                        Loss::LogScore => {
                            let gap = estimate_kld_jensen_gap(&gh, &fit.predictive)?;
                            bound.jensen_gaps.push((fit.label.clone(), gap));
                        }
                        Loss::GammaD { .. } => {}
                    }
                }
                if p.comparison.loss.loss == Loss::LogScore {
                    let t = kld_model_term(
                        &gh,
                        &spec,
                        &p.gaussian.thinned_draws(BOUND_TERM_DRAWS),
                        &p.student_t.thinned_draws(BOUND_TERM_DRAWS),
                    )?;
                    bound.kld_terms.push(("T".into(), two_sided_estimate(&t)));
                    bound.kld_terms.push(("T_gaussian_side".into(), t.first));
                    bound.kld_terms.push(("T_student_t_side".into(), t.second));
                }
            }
        }
        let report = StabilityReport {
            variance_adj: variance_adj(cfg)?,
            neighbourhood: eps,
            pairs: pairs.iter().map(|p| p.comparison.clone()).collect(),
            bound,
        };
        run.write("stability_report.txt", &report.to_key_value())?;
        Ok(report)
    })?;
    run.stage("summary_tables", |run| {
        let rows: Vec<Vec<String>> = pairs
            .iter()
            .map(|p| {
                vec![
                    loss_slug(&p.comparison.loss),
                    num(p.gaussian.posterior_mean(0)),
                    num(p.student_t.posterior_mean(0)),
                    num(p.comparison.energy_distance),
                    num(p.comparison.tvd),
                ]
            })
            .collect();
        run.write(
            "contamination.tsv",
            &tsv(
                &[
                    "loss",
                    "mu_mean_gaussian",
                    "mu_mean_student_t",
                    "energy_distance",
                    "predictive_tvd",
                ],
                &rows,
            ),
        )?;
        for p in &pairs {
            let l = loss_slug(&p.comparison.loss);
            run.result(
                format!("energy_distance.{l}"),
                num(p.comparison.energy_distance),
            );
            run.result(
                format!("mu_mean.gaussian.{l}"),
                num(p.gaussian.posterior_mean(0)),
            );
            run.result(
                format!("mu_mean.student_t.{l}"),
                num(p.student_t.posterior_mean(0)),
            );
        }
        run.result("epsilon", num(report.neighbourhood.epsilon));
        Ok(())
    })?;
    Ok(ContaminationOutcome { pairs, report })
}

/// One row of the β sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPoint {
    pub beta: f64,
    pub energy_distance: f64,
    pub tvd: f64,
    pub mu_mean_gaussian: f64,
    pub mu_mean_student_t: f64,
    /// Two-model bound multiplier at `M = 1`, for `β ≤ 2`.
    pub multiplier: Option<f64>,
}

pub fn beta_sensitivity(run: &mut Run, data: &Dataset) -> Result<Vec<BetaPoint>> {
    let y = univariate(data)?.to_vec();
    let grid = data_grid(&y, run.config.options.grid_points);
    let betas = run.config.betas.clone();
    let mut points = Vec::with_capacity(betas.len());
    for (i, &beta) in betas.iter().enumerate() {
        let loss = LossSpec::beta(beta);
        let pair = gauss_t_pair(run, &y, loss, &grid, i)?;
        let multiplier = if beta <= 2.0 {
            Some(bound_multipliers(1.0, beta)?.two_models)
        } else {
            None
        };
        points.push(BetaPoint {
            beta,
            energy_distance: pair.comparison.energy_distance,
            tvd: pair.comparison.tvd,
            mu_mean_gaussian: pair.gaussian.posterior_mean(0),
            mu_mean_student_t: pair.student_t.posterior_mean(0),
            multiplier,
        });
    }
    run.stage("summary_tables", |run| {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    num(p.beta),
                    num(p.energy_distance),
                    num(p.tvd),
                    num(p.mu_mean_gaussian),
                    num(p.mu_mean_student_t),
                    p.multiplier.map_or_else(|| "NA".into(), num),
                ]
            })
            .collect();
        run.write(
            "beta_sensitivity.tsv",
            &tsv(
                &[
                    "beta",
                    "energy_distance",
                    "predictive_tvd",
                    "mu_mean_gaussian",
                    "mu_mean_student_t",
                    "multiplier_m1",
                ],
                &rows,
            ),
        )?;
        for p in &points {
            run.result(
                format!("energy_distance.beta{}", p.beta),
                num(p.energy_distance),
            );
        }
        Ok(())
    })?;
    Ok(points)
}

/// Successive-K TVDs for one loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRow {
    pub loss: LossSpec,
    /// Between posterior predictives.
    pub predictive_tvd: Vec<f64>,
    /// Between models at the posterior mean parameters.
    pub plug_in_tvd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSweepOutcome {
    pub components: Vec<usize>,
    pub concentrations: Vec<f64>,
    pub rows: Vec<MixtureRow>,
}

impl MixtureSweepOutcome {
    pub fn transitions(&self) -> Vec<(usize, usize)> {
        self.components.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Predictive TVD for `loss` between `from` and `to` components.
    pub fn predictive_tvd(&self, loss: &Loss, from: usize, to: usize) -> Option<f64> {
        let t = self.transitions().iter().position(|&tr| tr == (from, to))?;
        self.rows
            .iter()
            .find(|r| r.loss.loss == *loss)
            .map(|r| r.predictive_tvd[t])
    }

    /// One row per loss, one column per transition.
    pub fn table(&self, plug_in: bool) -> String {
        let mut header = vec!["loss".to_string()];
        header.extend(
            self.transitions()
                .iter()
                .map(|(a, b)| format!("K = {a} vs K = {b}")),
        );
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let values = if plug_in {
                    &r.plug_in_tvd
                } else {
                    &r.predictive_tvd
                };
                std::iter::once(r.loss.loss.label())
                    .chain(values.iter().map(|v| num(*v)))
                    .collect()
            })
            .collect();
        tsv(&header, &rows)
    }
}

pub fn mixture_sweep(run: &mut Run, data: &Dataset) -> Result<MixtureSweepOutcome> {
    let raw = univariate(data)?.to_vec();
    let y = if run.config.options.standardize {
        standardize(&raw).0
    } else {
        raw
    };
    let grid = data_grid(&y, run.config.options.grid_points);
    let o = run.config.options.clone();
    let mut components = o.components.clone();
    components.sort_unstable();
    components.dedup();
    let concentrations = components
        .iter()
        .map(|&k| elicit_dirichlet_concentration(k, o.weight_threshold, o.weight_target))
        .collect::<gbstab::Result<Vec<_>>>()?;
    let losses = run.config.losses.clone();
    let mut rows = Vec::with_capacity(losses.len());
    for loss in losses {
        let mut fits = Vec::with_capacity(components.len());
        for (&k, &alpha) in components.iter().zip(&concentrations) {
            let prior = PriorSpec::MixtureNigDirichlet {
                alpha,
                nu0: o.mixture_nu0,
                s0: o.mixture_s0,
                kappa: o.mixture_kappa,
            };
            fits.push(fit_continuous(
                run,
                ContinuousFamily::mixture(k),
                prior,
                loss,
                &y,
                &grid,
                "",
            )?);
        }
        let row = run.stage(&format!("successive_tvd:{}", loss_slug(&loss)), |_| {
            let mut predictive_tvd = Vec::new();
            let mut plug_in_tvd = Vec::new();
            let means = fits
                .iter()
                .map(|f| posterior_mean_model(&f.posterior, &f.draws))
                .collect::<gbstab::Result<Vec<_>>>()?;
            for w in 0..fits.len().saturating_sub(1) {
                predictive_tvd.push(
                    tvd(
                        &fits[w].predictive.handle(),
                        &fits[w + 1].predictive.handle(),
                    )?
                    .value,
                );
                plug_in_tvd.push(
                    tvd(
                        &DensityHandle::from_model(&means[w]),
                        &DensityHandle::from_model(&means[w + 1]),
                    )?
                    .value,
                );
            }
            Ok(MixtureRow {
                loss,
                predictive_tvd,
                plug_in_tvd,
            })
        })?;
        rows.push(row);
    }
    let outcome = MixtureSweepOutcome {
        components,
        concentrations,
        rows,
    };
    run.stage("summary_tables", |run| {
        run.write("mixture_tvd_table.tsv", &outcome.table(false))?;
        run.write("mixture_plug_in_tvd_table.tsv", &outcome.table(true))?;
        let rows: Vec<Vec<String>> = outcome
            .components
            .iter()
            .zip(&outcome.concentrations)
            .map(|(k, a)| vec![k.to_string(), num(*a)])
            .collect();
        run.write(
            "dirichlet_concentration.tsv",
            &tsv(&["components", "alpha"], &rows),
        )?;
        for r in &outcome.rows {
            for ((a, b), v) in outcome.transitions().iter().zip(&r.predictive_tvd) {
                run.result(format!("tvd.{}.k{a}_k{b}", loss_slug(&r.loss)), num(*v));
            }
        }
        Ok(())
    })?;
    Ok(outcome)
}

/// Regression predictive comparison for one loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionComparison {
    pub loss: LossSpec,
    pub mean_tvd: f64,
    pub max_tvd: f64,
    pub coefficients_gaussian: Vec<f64>,
    pub coefficients_student_t: Vec<f64>,
}

fn fit_regression(
    run: &mut Run,
    residual: ResidualFamily,
    loss: LossSpec,
    data: &RegressionData,
) -> Result<(RegressionPredictive, Vec<f64>)> {
    let family = match residual {
        ResidualFamily::Gaussian { .. } => "gaussian",
        ResidualFamily::StudentT { .. } => "student_t",
    };
    let label = format!("regression_{family}_{}", loss_slug(&loss));
    let sampler = run.next_sampler();
    let prior = run.config.options.prior;
    let max_models = run.config.options.max_models;
    run.stage(&format!("fit:{label}"), |run| {
        let post = RegressionPosterior::new(residual, prior, loss, data.clone())?;
        let draws = run_mcmc(&post, &sampler)?;
        let report = diagnostics(&draws);
        write_fit_tables(run, &label, &draws, &report)?;
        let means = report.params.iter().map(|p| p.mean).collect();
        Ok((
            RegressionPredictive::from_draws(&post, &draws, max_models)?,
            means,
        ))
    })
}

pub fn regression(run: &mut Run, data: &Dataset) -> Result<Vec<RegressionComparison>> {
    if data.covariate_names.is_empty() {
        return Err(CliError::Config(
            "regression needs at least one covariate".into(),
        ));
    }
    let design = data.design_with_intercept();
    let rdata = RegressionData::new(design.clone(), data.response.clone())?;
    let adj = variance_adj(&run.config)?;
    let points: Vec<usize> = thin_indices(design.len(), run.config.options.comparison_points);
    let losses = run.config.losses.clone();
    let mut out = Vec::with_capacity(losses.len());
    for loss in losses {
        let (pg, cg) = fit_regression(
            run,
            ResidualFamily::Gaussian { variance_adj: adj },
            loss,
            &rdata,
        )?;
        let (pt, ct) = fit_regression(
            run,
            ResidualFamily::StudentT {
                dof: run.config.options.dof,
            },
            loss,
            &rdata,
        )?;
        let cmp = run.stage(&format!("compare:{}", loss_slug(&loss)), |_| {
            let tvds = points
                .iter()
                .map(|&i| {
                    let (a, b) = (pg.at(&design[i])?, pt.at(&design[i])?);
                    let d = tvd(&a.handle(), &b.handle())?.value;
                    Ok(d)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RegressionComparison {
                loss,
                mean_tvd: tvds.iter().sum::<f64>() / tvds.len() as f64,
                max_tvd: tvds.iter().copied().fold(0.0, f64::max),
                coefficients_gaussian: cg,
                coefficients_student_t: ct,
            })
        })?;
        out.push(cmp);
    }
    run.stage("summary_tables", |run| {
        let rows: Vec<Vec<String>> = out
            .iter()
            .map(|c| vec![loss_slug(&c.loss), num(c.mean_tvd), num(c.max_tvd)])
            .collect();
        run.write(
            "regression_tvd.tsv",
            &tsv(
                &["loss", "mean_predictive_tvd", "max_predictive_tvd"],
                &rows,
            ),
        )?;
        let mut names: Vec<String> = std::iter::once("intercept".to_string())
            .chain(data.covariate_names.iter().cloned())
            .collect();
        names.push("sigma2".into());
        let mut header = vec!["loss".to_string(), "residual".to_string()];
        header.extend(names);
        let mut crows = Vec::new();
        for c in &out {
            for (res, coef) in [
                ("gaussian", &c.coefficients_gaussian),
                ("student_t", &c.coefficients_student_t),
            ] {
                let mut r = vec![loss_slug(&c.loss), res.to_string()];
                r.extend(coef.iter().map(|v| num(*v)));
                crows.push(r);
            }
        }
        run.write("regression_posterior_means.tsv", &tsv(&header, &crows))?;
        for c in &out {
            run.result(
                format!("mean_predictive_tvd.{}", loss_slug(&c.loss)),
                num(c.mean_tvd),
            );
        }
        Ok(())
    })?;
    Ok(out)
}

/// Fitted link multipliers for probit and t-logistic against logistic.
pub fn link_fits() -> Result<Vec<(BinaryFamily, LinkFit)>> {
    let grid = default_link_grid();
    [
        BinaryFamily::Probit,
        BinaryFamily::TLogistic {
            t: gbstab::models::DEFAULT_T,
        },
    ]
    .into_iter()
    .map(|f| Ok((f, fit_scalar_multiplier(&f, &grid)?)))
    .collect()
}

/// Binary predictive agreement between logistic and one alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryComparison {
    pub loss: LossSpec,
    pub family: String,
    pub mean_tvd: f64,
    pub max_tvd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOutcome {
    pub links: Vec<(BinaryFamily, LinkFit)>,
    pub comparisons: Vec<BinaryComparison>,
}

pub fn binary(run: &mut Run, data: &Dataset) -> Result<BinaryOutcome> {
    let labels = data.labels()?;
    let design = data.design_with_intercept();
    let bdata = BinaryData::new(design.clone(), labels)?;
    let links = run.stage("link_multipliers", |run| {
        let links = link_fits()?;
        let rows: Vec<Vec<String>> = links
            .iter()
            .map(|(f, l)| vec![f.name().to_string(), num(l.multiplier), num(l.sup_gap)])
            .collect();
        run.write(
            "link_multipliers.tsv",
            &tsv(&["family", "multiplier", "sup_gap"], &rows),
        )?;
        Ok(links)
    })?;
    let mut families: Vec<(BinaryFamily, f64)> = vec![(BinaryFamily::Logistic, 1.0)];
    families.extend(links.iter().map(|(f, l)| (*f, l.multiplier)));
    families.push((BinaryFamily::Mislabelled { nu0: 0.0, nu1: 0.0 }, 1.0));
    let points = thin_indices(design.len(), run.config.options.comparison_points);
    let losses = run.config.losses.clone();
    let mut comparisons = Vec::new();
    for loss in losses {
        let mut predictives = Vec::with_capacity(families.len());
        for &(family, scale) in &families {
            let label = format!("binary_{}_{}", family.name(), loss_slug(&loss));
            let sampler = run.next_sampler();
            let o = run.config.options.clone();
            let bdata = bdata.clone();
            let pred = run.stage(&format!("fit:{label}"), |run| {
                let post = BinaryPosterior::new(
                    family,
                    scale,
                    o.coefficient_prior,
                    loss,
                    bdata,
                    o.flip_max,
                )?;
                let draws = run_mcmc(&post, &sampler)?;
                let report = diagnostics(&draws);
                write_fit_tables(run, &label, &draws, &report)?;
                Ok(BinaryPredictive::from_draws(&post, &draws, o.max_models)?)
            })?;
            predictives.push((family, pred));
        }
        let cmp = run.stage(&format!("compare:{}", loss_slug(&loss)), |_| {
            let base = &predictives[0].1;
            predictives[1..]
                .iter()
                .map(|(family, pred)| {
                    let tvds = points
                        .iter()
                        .map(|&i| {
                            let x = &design[i];
                            Ok(tvd_binary(base.prob_one(x)?, pred.prob_one(x)?)?.value)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(BinaryComparison {
                        loss,
                        family: family.name().to_string(),
                        mean_tvd: tvds.iter().sum::<f64>() / tvds.len() as f64,
                        max_tvd: tvds.iter().copied().fold(0.0, f64::max),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        comparisons.extend(cmp);
    }
    run.stage("summary_tables", |run| {
        let rows: Vec<Vec<String>> = comparisons
            .iter()
            .map(|c| {
                vec![
                    loss_slug(&c.loss),
                    c.family.clone(),
                    num(c.mean_tvd),
                    num(c.max_tvd),
                ]
            })
            .collect();
        run.write(
            "binary_tvd.tsv",
            &tsv(
                &[
                    "loss",
                    "family_vs_logistic",
                    "mean_predictive_tvd",
                    "max_predictive_tvd",
                ],
                &rows,
            ),
        )?;
        for c in &comparisons {
            run.result(
                format!("mean_predictive_tvd.{}.{}", loss_slug(&c.loss), c.family),
                num(c.mean_tvd),
            );
        }
        Ok(())
    })?;
    Ok(BinaryOutcome { links, comparisons })
}

/// Neighbourhood sizes for the model pairs used in the experiments.
pub fn neighbourhood_table(cfg: &ExperimentConfig) -> Result<Vec<(String, EpsilonEstimate)>> {
    let adj = variance_adj(cfg)?;
    let t = ContinuousFamily::student_t(cfg.options.dof);
    let grid = default_location_scale_grid();
    let mut out = Vec::new();
    for (name, v) in [
        ("gaussian_adjusted_vs_student_t", adj),
        ("gaussian_vs_student_t", 1.0),
    ] {
        let spec = NeighbourhoodSpec {
            f: ContinuousFamily::Gaussian { variance_adj: v },
            h: t,
            map: ParameterMap::Identity,
        };
        out.push((name.to_string(), neighbourhood_epsilon(&spec, &grid)?));
    }
    let spec = NeighbourhoodSpec {
        f: ContinuousFamily::mixture(2),
        h: ContinuousFamily::mixture(3),
        map: ParameterMap::AddComponent {
            weight: 0.05,
            mean: 0.0,
            sd: 1.0,
        },
    };
    let mixture_grid: Vec<Vec<f64>> = [0.3, 0.5, 0.7]
        .iter()
        .flat_map(|&w| {
            [(-1.0, 1.0), (-3.0, 2.0), (0.0, 0.5)]
                .iter()
                .map(move |&(m, s)| vec![w, 1.0 - w, m, m + 2.0, s, 1.0])
                .collect::<Vec<_>>()
        })
        .collect();
    out.push((
        "mixture2_vs_mixture3_embedding".into(),
        neighbourhood_epsilon(&spec, &mixture_grid)?,
    ));
    Ok(out)
}

/// Stability across two data densities: clean `N(0, 1)` against the
/// configured contamination.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShiftTerms {
    pub dgp_tvd: f64,
    pub entropy_term: f64,
    pub cross_term: McEstimate,
    pub kld_predictive_tvd: f64,
    pub beta_predictive_tvd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOutcome {
    pub sweep: Vec<BoundMultipliers>,
    pub neighbourhoods: Vec<(String, EpsilonEstimate)>,
    pub links: Vec<(BinaryFamily, LinkFit)>,
    pub data_shift: Option<DataShiftTerms>,
}

pub fn bounds(run: &mut Run, data: &Dataset) -> Result<BoundsOutcome> {
    let sweep = run.stage("multipliers", |run| {
        let sweep = run
            .config
            .betas
            .iter()
            .filter(|b| **b <= 2.0)
            .map(|&b| Ok(bound_multipliers(1.0, b)?))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<String>> = sweep
            .iter()
            .map(|m| {
                vec![
                    num(m.beta),
                    num(m.two_models),
                    num(m.two_models_to_truth),
                    num(m.two_truths),
                    num(m.beta_by_tvd),
                ]
            })
            .collect();
        run.write(
            "multipliers.tsv",
            &tsv(
                &[
                    "beta",
                    "two_models",
                    "two_models_to_truth",
                    "two_truths",
                    "beta_by_tvd",
                ],
                &rows,
            ),
        )?;
        Ok(sweep)
    })?;
    let neighbourhoods = run.stage("neighbourhoods", |run| {
        let table = neighbourhood_table(&run.config)?;
        let rows: Vec<Vec<String>> = table
            .iter()
            .map(|(n, e)| vec![n.clone(), num(e.epsilon), num(e.forward), num(e.backward)])
            .collect();
        run.write(
            "epsilon.tsv",
            &tsv(&["model_pair", "epsilon", "forward", "backward"], &rows),
        )?;
        Ok(table)
    })?;
    let links = run.stage("link_multipliers", |run| {
        let links = link_fits()?;
        let rows: Vec<Vec<String>> = links
            .iter()
            .map(|(f, l)| vec![f.name().to_string(), num(l.multiplier), num(l.sup_gap)])
            .collect();
        run.write(
            "link_multipliers.tsv",
            &tsv(&["family", "multiplier", "sup_gap"], &rows),
        )?;
        Ok(links)
    })?;
    let data_shift = match (&run.config.data, known_density(&run.config)) {
        (
            DataSource::Synthetic {
                dgp: Dgp::Contamination { .. },
                ..
            },
            Some(g2),
        ) => Some(data_shift(run, univariate(data)?, &g2)?),
        _ => {
            log::info!("data-shift terms need synthetic contamination data; skipped");
            None
        }
    };
    for (n, e) in &neighbourhoods {
        run.result(format!("epsilon.{n}"), num(e.epsilon));
    }
    for (f, l) in &links {
        run.result(format!("link_multiplier.{}", f.name()), num(l.multiplier));
    }
    Ok(BoundsOutcome {
        sweep,
        neighbourhoods,
        links,
        data_shift,
    })
}

fn data_shift(run: &mut Run, contaminated: &[f64], g2: &ContinuousModel) -> Result<DataShiftTerms> {
    let g1 = ContinuousModel::gaussian(0.0, 1.0)?;
    let clean = g1.sample(contaminated.len(), run.config.data_seed().wrapping_add(17));
    let grid = data_grid(contaminated, run.config.options.grid_points);
    let beta = bound_beta(&run.config);
    let prior = run.config.options.prior;
    let family = ContinuousFamily::gaussian();
    let mut fits = Vec::new();
    for (tag, y) in [
        ("clean_", clean.as_slice()),
        ("contaminated_", contaminated),
    ] {
        for loss in [LossSpec::log_score(), LossSpec::beta(beta)] {
            fits.push(fit_continuous(run, family, prior, loss, y, &grid, tag)?);
        }
    }
    run.stage("data_shift", |run| {
        let (h1, h2) = (
            DensityHandle::from_model(&g1),
            DensityHandle::from_model(g2),
        );
        let dgp_tvd = tvd(&h1, &h2)?.value;
        let entropy = entropy_term(&h1, &h2)?;
        let cross = data_shift_term(
            &h1,
            &h2,
            family,
            &fits[0].thinned_draws(BOUND_TERM_DRAWS),
            &fits[2].thinned_draws(BOUND_TERM_DRAWS),
        )?;
        let kld_predictive_tvd =
            tvd(&fits[0].predictive.handle(), &fits[2].predictive.handle())?.value;
        let beta_predictive_tvd =
            tvd(&fits[1].predictive.handle(), &fits[3].predictive.handle())?.value;
        let m = fits
            .iter()
            .map(ContinuousFit::density_bound)
            .fold(0.0, f64::max);
        let mut report = BoundReport::new(bound_multipliers(m, beta)?);
        report.epsilon = Some(dgp_tvd);
        report.kld_terms.push((
            "T1".into(),
            McEstimate {
                value: entropy,
                mcse: 0.0,
            },
        ));
        report
            .kld_terms
            .push(("T2".into(), two_sided_estimate(&cross)));
        for (fit, g) in [(&fits[1], &h1), (&fits[3], &h2)] {
            report.jensen_gaps.push((
                fit.label.clone(),
                estimate_jensen_gap(g, &fit.predictive, beta)?.gap,
            ));
        }
        for (fit, g) in [
            (&fits[0], &h1),
            (&fits[1], &h1),
            (&fits[2], &h2),
            (&fits[3], &h2),
        ] {
            report
                .predictive_tvd_to_g
                .push((fit.label.clone(), tvd(g, &fit.predictive.handle())?.value));
        }
        let mut text = report.to_key_value();
        let _ = writeln!(
            text,
            "predictive_tvd_between_data.kld = {kld_predictive_tvd}"
        );
        let _ = writeln!(
            text,
            "predictive_tvd_between_data.{} = {beta_predictive_tvd}",
            loss_slug(&LossSpec::beta(beta))
        );
        run.write("bound_report.txt", &text)?;
        run.result("data_shift.dgp_tvd", num(dgp_tvd));
        run.result("data_shift.predictive_tvd.kld", num(kld_predictive_tvd));
        run.result("data_shift.predictive_tvd.betad", num(beta_predictive_tvd));
        Ok(DataShiftTerms {
            dgp_tvd,
            entropy_term: entropy,
            cross_term: two_sided_estimate(&cross),
            kld_predictive_tvd,
            beta_predictive_tvd,
        })
    })
}

/// Influence of each observation value on the first parameter, at the loss
/// minimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCurve {
    pub family: ContinuousFamily,
    pub loss: LossSpec,
    pub theta_hat: Vec<f64>,
    pub curve: Vec<(f64, f64)>,
    pub method: Differentiation,
}

impl InfluenceCurve {
    pub fn label(&self) -> String {
        format!("{}_{}", family_slug(self.family), loss_slug(&self.loss))
    }
}

/// Curves over `μ̂ ± half_width·σ̂` with `points` evaluation points.
pub fn influence_curves(
    data: &[f64],
    families: &[ContinuousFamily],
    losses: &[LossSpec],
    prior: PriorSpec,
    half_width: f64,
    points: usize,
) -> Result<Vec<InfluenceCurve>> {
    let mut out = Vec::new();
    for &family in families {
        for &loss in losses {
            let post = ContinuousPosterior::new(family, None, prior, loss, data.to_vec())?;
            let theta_hat = loss_minimizer_init(&post)?;
            let (centre, spread) = post.model(&theta_hat)?.centre_and_spread();
            let grid = linspace(
                centre - half_width * spread,
                centre + half_width * spread,
                points,
            );
            let (curve, method) = influence_function(family, &loss, &theta_hat, 0, &grid)?;
            out.push(InfluenceCurve {
                family,
                loss,
                theta_hat,
                curve,
                method,
            });
        }
    }
    Ok(out)
}

pub fn influence(run: &mut Run, data: &Dataset) -> Result<Vec<InfluenceCurve>> {
    let y = univariate(data)?.to_vec();
    run.stage("influence", |run| {
        let (fg, ft) = gauss_t_families(&run.config)?;
        let curves = influence_curves(
            &y,
            &[fg, ft],
            &run.config.losses,
            run.config.options.prior,
            10.0,
            401,
        )?;
        for c in &curves {
            let mut body =
                gbstab::divergences::table_to_delimited(("y", "influence"), &c.curve, '\t');
            let theta: Vec<String> = c.theta_hat.iter().map(|v| num(*v)).collect();
            let _ = writeln!(body, "# theta_hat\t{}", theta.join(","));
            run.write(&format!("influence_{}.tsv", c.label()), &body)?;
        }
        Ok(curves)
    })
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub enum Outcome {
    Contamination(Box<ContaminationOutcome>),
    Regression(Vec<RegressionComparison>),
    MixtureSweep(MixtureSweepOutcome),
    Binary(BinaryOutcome),
    BetaSensitivity(Vec<BetaPoint>),
    Bounds(BoundsOutcome),
}

/// Runs the configured experiment, writing every table plus the manifest
/// and summary into the output directory.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<(RunManifest, Outcome)> {
    cfg.validate()?;
    let mut run = Run::new("experiment", cfg)?;
    run.result("experiment", run.config.experiment.name());
    let data = load_data(&mut run)?;
    let outcome = match run.config.experiment {
        ExperimentKind::ContaminationGaussT => {
            Outcome::Contamination(Box::new(contamination(&mut run, &data)?))
        }
        ExperimentKind::RegressionGaussT => Outcome::Regression(regression(&mut run, &data)?),
        ExperimentKind::MixtureKSweep => Outcome::MixtureSweep(mixture_sweep(&mut run, &data)?),
        ExperimentKind::BinaryStability => Outcome::Binary(binary(&mut run, &data)?),
        ExperimentKind::BetaSensitivity => {
            Outcome::BetaSensitivity(beta_sensitivity(&mut run, &data)?)
        }
        ExperimentKind::BoundsReport => Outcome::Bounds(bounds(&mut run, &data)?),
    };
    Ok((run.finish()?, outcome))
}
