//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use gbstab::losses::{Loss, LossSpec};
use gbstab::models::PriorSpec;
use gbstab::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CsvSchema, Dgp};
use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ContaminationGaussT,
    RegressionGaussT,
    MixtureKSweep,
    BinaryStability,
    BetaSensitivity,
    BoundsReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ContaminationGaussT => "contamination_gauss_t",
            ExperimentKind::RegressionGaussT => "regression_gauss_t",
            ExperimentKind::MixtureKSweep => "mixture_k_sweep",
            ExperimentKind::BinaryStability => "binary_stability",
            ExperimentKind::BetaSensitivity => "beta_sensitivity",
            ExperimentKind::BoundsReport => "bounds_report",
        }
    }

    fn default_dgp(self) -> Dgp {
        match self {
            ExperimentKind::ContaminationGaussT
            | ExperimentKind::BetaSensitivity
            | ExperimentKind::BoundsReport => Dgp::contamination(),
            ExperimentKind::RegressionGaussT => Dgp::Regression {
                coefficients: vec![0.0, 1.0, -0.5],
                outlier_weight: 0.1,
                outlier_mean: 5.0,
                outlier_var: 9.0,
            },
            ExperimentKind::MixtureKSweep => Dgp::ClusteredVelocities,
            ExperimentKind::BinaryStability => Dgp::Binary {
                coefficients: vec![0.25, 1.5, -1.0],
                flip: 0.05,
            },
        }
    }

    fn default_n(self) -> usize {
        match self {
            ExperimentKind::MixtureKSweep => 2000,
            ExperimentKind::RegressionGaussT | ExperimentKind::BinaryStability => 500,
            _ => 1000,
        }
    }

    fn default_losses(self) -> Vec<LossSpec> {
        match self {
            ExperimentKind::MixtureKSweep => vec![
                LossSpec::log_score(),
                LossSpec::beta(1.25),
                LossSpec::beta(1.5),
            ],
            _ => vec![LossSpec::log_score(), LossSpec::beta(1.5)],
        }
    }

    fn default_betas(self) -> Vec<f64> {
        match self {
            ExperimentKind::BetaSensitivity | ExperimentKind::BoundsReport => {
                (1..=9).map(|i| 1.0 + i as f64 / 10.0).collect()
            }
            _ => vec![1.5],
        }
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated from `dgp`; `seed` defaults to the run seed.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        n: usize,
        dgp: Dgp,
    },
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        schema: CsvSchema,
    },
}

/// Model-level settings shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    /// Student-t degrees of freedom.
    pub dof: f64,
    /// Gaussian variance multiplier; quartile-matched to the t when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_adj: Option<f64>,
    /// Prior for location-scale and regression fits.
    pub prior: PriorSpec,
    /// Prior for binary regression coefficients.
    pub coefficient_prior: PriorSpec,
    /// Mixture sizes for the K sweep.
    pub components: Vec<usize>,
    /// Dirichlet elicitation: `P(ω₁ > threshold) = target`.
    pub weight_threshold: f64,
    pub weight_target: f64,
    pub mixture_nu0: f64,
    pub mixture_s0: f64,
    pub mixture_kappa: f64,
    /// Standardise univariate mixture data before fitting.
    pub standardize: bool,
    /// Predictive draws per model for energy distances.
    pub energy_samples: usize,
    pub energy_statistic: gbstab::divergences::EnergyStatistic,
    /// Posterior draws kept per predictive.
    pub max_models: usize,
    pub grid_points: usize,
    /// Covariate rows used for regression and binary predictive comparisons.
    pub comparison_points: usize,
    pub flip_max: f64,
    /// Write full posterior draws tables.
    pub write_draws: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            dof: 5.0,
            variance_adj: None,
            prior: PriorSpec::NormalInverseGamma {
                a0: 0.01,
                b0: 0.01,
                mu0: 0.0,
                v0: 10.0,
            },
            coefficient_prior: PriorSpec::FlatGaussianCoef {
                mean: 0.0,
                sd: 10.0,
            },
            components: vec![2, 3, 4, 5, 6],
            weight_threshold: 0.05,
            weight_target: 0.95,
            mixture_nu0: 5.0,
            mixture_s0: 0.2,
            mixture_kappa: 5.68,
            standardize: true,
            energy_samples: 20_000,
            energy_statistic: Default::default(),
            max_models: gbstab::predictive::DEFAULT_MAX_MODELS,
            grid_points: gbstab::predictive::DEFAULT_GRID_POINTS,
            comparison_points: 20,
            flip_max: 0.5,
            write_draws: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub losses: Vec<LossSpec>,
    pub betas: Vec<f64>,
    pub data: DataSource,
    pub sampler: SamplerConfig,
    pub options: ExperimentOptions,
}

/// On-disk form; missing fields take experiment-specific defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    losses: Option<Vec<LossSpec>>,
    #[serde(default)]
    betas: Option<Vec<f64>>,
    #[serde(default)]
    data: Option<DataSource>,
    #[serde(default)]
    sampler: Option<SamplerConfig>,
    #[serde(default)]
    options: Option<ExperimentOptions>,
}

impl ExperimentConfig {
    /// Defaults for one experiment.
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 1,
            output_dir: PathBuf::from("out"),
            losses: experiment.default_losses(),
            betas: experiment.default_betas(),
            data: DataSource::Synthetic {
                seed: None,
                n: experiment.default_n(),
                dgp: experiment.default_dgp(),
            },
            sampler: SamplerConfig::default(),
            options: ExperimentOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut cfg = Self::new(raw.experiment);
        if let Some(s) = raw.seed {
            cfg.seed = s;
        }
        if let Some(d) = raw.output_dir {
            cfg.output_dir = d;
        }
        if let Some(l) = raw.losses {
            cfg.losses = l;
        }
        if let Some(b) = raw.betas {
            cfg.betas = b;
        }
        if let Some(d) = raw.data {
            cfg.data = d;
        }
        if let Some(s) = raw.sampler {
            cfg.sampler = s;
        }
        if let Some(o) = raw.options {
            cfg.options = o;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg = Self::from_toml_str(&text).map_err(|source| CliError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(b) = self.betas.iter().find(|b| !(**b > 1.0 && b.is_finite())) {
            return bad(format!("every beta must be > 1, got {b}"));
        }
        if self.losses.is_empty() {
            return bad("loss list is empty".into());
        }
        for l in &self.losses {
            l.validate()?;
        }
        self.sampler.validate()?;
        self.options.prior.validate()?;
        self.options.coefficient_prior.validate()?;
        let o = &self.options;
        if !(o.dof > 0.0 && o.dof.is_finite()) {
            return bad(format!("dof must be > 0, got {}", o.dof));
        }
        if let Some(v) = o.variance_adj {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("variance_adj must be > 0, got {v}"));
            }
        }
        if o.components.is_empty() || o.components.iter().any(|&k| k < 2) {
            return bad("mixture components must be a nonempty list of sizes >= 2".into());
        }
        if o.energy_samples < 2
            || o.max_models == 0
            || o.grid_points < 2
            || o.comparison_points == 0
        {
            return bad(
                "energy_samples, max_models, grid_points and comparison_points must be positive"
                    .into(),
            );
        }
        if self.experiment == ExperimentKind::BinaryStability
            && self
                .losses
                .iter()
                .any(|l| matches!(l.loss, Loss::GammaD { .. }))
        {
            return bad("binary experiments support log_score and beta_d losses".into());
        }
        let over_two = self
            .losses
            .iter()
            .filter_map(|l| match l.loss {
                Loss::BetaD { beta } => Some(beta),
                _ => None,
            })
            .chain(self.betas.iter().copied())
            .find(|b| *b > 2.0);
        if let Some(b) = over_two {
            if self.experiment == ExperimentKind::BoundsReport {
                return bad(format!("bound multipliers need beta <= 2, got {b}"));
            }
            log::warn!("beta = {b} is above 2; the stability bounds do not apply there");
        }
        match &self.data {
            DataSource::Synthetic { n, .. } if *n == 0 => {
                bad("synthetic n must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Seed of the synthetic data.
    pub fn data_seed(&self) -> u64 {
        match self.data {
            DataSource::Synthetic { seed: Some(s), .. } => s,
            _ => self.seed,
        }
    }

    /// Sampler settings for the `index`-th fit of a run.
    pub fn fit_sampler(&self, index: usize) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed.wrapping_add(1000 * (index as u64 + 1)),
            ..self.sampler.clone()
        }
    }

    /// SHA-256 of the canonical serialization, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str("experiment = \"mixture_k_sweep\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::new(ExperimentKind::MixtureKSweep));
        assert_eq!(cfg.losses.len(), 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
experiment = "contamination_gauss_t"
seed = 7
output_dir = "runs/a"
betas = [1.25, 1.5]

[[losses]]
family = "log_score"

[[losses]]
family = "beta_d"
beta = 1.5
w = 2.0

[data]
source = "synthetic"
n = 300
[data.dgp]
kind = "contamination"
weight = 0.2

[sampler]
chains = 2
iterations = 4000
burn_in = 2000

[options]
dof = 4.0
energy_statistic = "u"
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(
            cfg.losses[1],
            LossSpec::new(Loss::BetaD { beta: 1.5 }, 2.0).unwrap()
        );
        assert_eq!(cfg.sampler.chains, 2);
        assert_eq!(
            cfg.sampler.adapt_window,
            SamplerConfig::default().adapt_window
        );
        assert_eq!(cfg.options.dof, 4.0);
        match &cfg.data {
            DataSource::Synthetic {
                n,
                dgp:
                    Dgp::Contamination {
                        weight,
                        outlier_mean,
                        ..
                    },
                ..
            } => {
                assert_eq!((*n, *weight, *outlier_mean), (300, 0.2, 5.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_source_parses() {
        let text = "experiment = \"regression_gauss_t\"\n[data]\nsource = \"csv\"\npath = \"d.csv\"\nresponse = \"y\"\ncovariates = [\"a\", \"b\"]\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Csv {
                path: "d.csv".into(),
                schema: CsvSchema {
                    response: "y".into(),
                    covariates: vec!["a".into(), "b".into()]
                }
            }
        );
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::BetaSensitivity);
        cfg.betas.push(1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(ExperimentKind::ContaminationGaussT);
        cfg.sampler.burn_in = cfg.sampler.iterations;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"nope\"").is_err());
        assert!(
            ExperimentConfig::from_toml_str("experiment = \"bounds_report\"\ntypo = 1").is_err()
        );
    }

    #[test]
    fn serialization_round_trips() {
        for kind in [
            ExperimentKind::ContaminationGaussT,
            ExperimentKind::RegressionGaussT,
            ExperimentKind::MixtureKSweep,
            ExperimentKind::BinaryStability,
            ExperimentKind::BetaSensitivity,
            ExperimentKind::BoundsReport,
        ] {
            let cfg = ExperimentConfig::new(kind);
            assert_eq!(
                ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(),
                cfg
            );
        }
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let base = ExperimentConfig::new(ExperimentKind::ContaminationGaussT);
        let h = base.hash();
        assert_eq!(h.len(), 64);

        let mut moved = base.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.hash(), h);

        // spelling out a default leaves the hash alone
        let explicit =
            ExperimentConfig::from_toml_str("experiment = \"contamination_gauss_t\"\nseed = 1\n")
                .unwrap();
        assert_eq!(explicit.hash(), h);

        let mut changes: Vec<ExperimentConfig> = Vec::new();
        let mut c = base.clone();
        c.seed = 2;
        changes.push(c);
        let mut c = base.clone();
        c.betas = vec![1.4];
        changes.push(c);
        let mut c = base.clone();
        c.losses[1].w = 0.5;
        changes.push(c);
        let mut c = base.clone();
        c.sampler.iterations += 1;
        changes.push(c);
        let mut c = base.clone();
        c.options.variance_adj = Some(1.2);
        changes.push(c);
        let mut c = base.clone();
        c.experiment = ExperimentKind::BetaSensitivity;
        changes.push(c);
        for c in changes {
            assert_ne!(c.hash(), h, "{c:?}");
        }
    }

    #[test]
    fn fit_seeds_are_distinct() {
        let cfg = ExperimentConfig::new(ExperimentKind::ContaminationGaussT);
        let seeds: std::collections::BTreeSet<u64> =
            (0..20).map(|i| cfg.fit_sampler(i).seed).collect();
        assert_eq!(seeds.len(), 20);
        assert!(!seeds.contains(&cfg.data_seed()));
    }

    #[test]
    fn beta_above_two_is_only_rejected_for_bounds() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::ContaminationGaussT);
        cfg.losses.push(LossSpec::beta(2.5));
        cfg.validate().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::BoundsReport);
        cfg.betas.push(2.5);
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("beta <= 2"));
    }
}
