use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gbstab::models::ContinuousFamily;
use gbstab_cli::config::{DataSource, ExperimentConfig, ExperimentKind};
use gbstab_cli::data::write_csv;
use gbstab_cli::error::{CliError, Result};
use gbstab_cli::experiments::{self, data_grid, fit_continuous, variance_adj};
use gbstab_cli::report::{num, tsv, Run};

#[derive(Parser)]
#[command(
    name = "gbstab",
    version,
    about = "Stability diagnostics for generalised Bayesian posteriors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment defaults to start from when no config is given.
    #[arg(long, value_enum, default_value = "contamination-gauss-t")]
    kind: Kind,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for chains and grid evaluations.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    ContaminationGaussT,
    RegressionGaussT,
    MixtureKSweep,
    BinaryStability,
    BetaSensitivity,
    BoundsReport,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::ContaminationGaussT => ExperimentKind::ContaminationGaussT,
            Kind::RegressionGaussT => ExperimentKind::RegressionGaussT,
            Kind::MixtureKSweep => ExperimentKind::MixtureKSweep,
            Kind::BinaryStability => ExperimentKind::BinaryStability,
            Kind::BetaSensitivity => ExperimentKind::BetaSensitivity,
            Kind::BoundsReport => ExperimentKind::BoundsReport,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    StudentT,
    Mixture,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment.
    Experiment(Common),
    /// Fit one univariate model under each configured loss.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        /// Mixture components.
        #[arg(long, default_value_t = 2)]
        components: usize,
    },
    /// Neighbourhood sizes for the model pairs.
    Neighbourhood(Common),
    /// Influence curves at the loss minimiser.
    Influence(Common),
    /// Bound multipliers over the configured betas.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Density bound M.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
    /// Generate the configured synthetic data set.
    Simulate(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(common.kind.into()),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn tagged(stage: &str, r: Result<ExperimentConfig>) -> Result<ExperimentConfig> {
    r.map_err(|e| CliError::Stage {
        stage: stage.into(),
        source: Box::new(e),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Experiment(common) => {
            let cfg = tagged("config", load(&common))?;
            let dir = cfg.output_dir.clone();
            experiments::run_experiment(cfg)?;
            println!("{}", dir.join(gbstab_cli::report::SUMMARY_FILE).display());
        }
        Command::Fit {
            common,
            family,
            components,
        } => {
            let cfg = tagged("config", load(&common))?;
            let family = match family {
                FamilyArg::Gaussian => ContinuousFamily::Gaussian {
                    variance_adj: cfg.options.variance_adj.unwrap_or(1.0),
                },
                FamilyArg::StudentT => ContinuousFamily::student_t(cfg.options.dof),
                FamilyArg::Mixture => ContinuousFamily::mixture(components),
            };
            let prior = match family {
                ContinuousFamily::GaussianMixture { components: k, .. } => {
                    let o = &cfg.options;
                    gbstab::models::PriorSpec::MixtureNigDirichlet {
                        alpha: gbstab::models::elicit_dirichlet_concentration(
                            k,
                            o.weight_threshold,
                            o.weight_target,
                        )?,
                        nu0: o.mixture_nu0,
                        s0: o.mixture_s0,
                        kappa: o.mixture_kappa,
                    }
                }
                _ => cfg.options.prior,
            };
            let mut run = Run::new("fit", cfg)?;
            let data = experiments::load_data(&mut run)?;
            let grid = data_grid(&data.response, run.config.options.grid_points);
            for loss in run.config.losses.clone() {
                let fit = fit_continuous(&mut run, family, prior, loss, &data.response, &grid, "")?;
                for p in &fit.diagnostics.params {
                    run.result(format!("{}.{}", fit.label, p.name), num(p.mean));
                }
            }
            run.finish()?;
        }
        Command::Neighbourhood(common) => {
            let cfg = tagged("config", load(&common))?;
            let mut run = Run::new("neighbourhood", cfg)?;
            run.stage("neighbourhoods", |run| {
                run.result("variance_adj", num(variance_adj(&run.config)?));
                let table = experiments::neighbourhood_table(&run.config)?;
                let rows: Vec<Vec<String>> = table
                    .iter()
                    .map(|(n, e)| vec![n.clone(), num(e.epsilon), num(e.forward), num(e.backward)])
                    .collect();
                run.write(
                    "epsilon.tsv",
                    &tsv(&["model_pair", "epsilon", "forward", "backward"], &rows),
                )?;
                for (n, e) in &table {
                    run.result(format!("epsilon.{n}"), num(e.epsilon));
                }
                Ok(())
            })?;
            run.finish()?;
        }
        Command::Influence(common) => {
            let cfg = tagged("config", load(&common))?;
            let mut run = Run::new("influence", cfg)?;
            let data = experiments::load_data(&mut run)?;
            experiments::influence(&mut run, &data)?;
            run.finish()?;
        }
        Command::Bounds { common, m } => {
            let cfg = tagged("config", load(&common))?;
            let mut run = Run::new("bounds", cfg)?;
            run.stage("multipliers", |run| {
                let rows = run
                    .config
                    .betas
                    .iter()
                    .map(|&b| {
                        let x = gbstab::stability::bound_multipliers(m, b)?;
                        Ok(vec![
                            num(b),
                            num(x.two_models),
                            num(x.two_models_to_truth),
                            num(x.two_truths),
                            num(x.beta_by_tvd),
                        ])
                    })
                    .collect::<Result<Vec<_>>>()?;
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
                run.result("m", num(m));
                Ok(())
            })?;
            run.finish()?;
        }
        Command::Simulate(common) => {
            let cfg = tagged("config", load(&common))?;
            if !matches!(cfg.data, DataSource::Synthetic { .. }) {
                return Err(CliError::Stage {
                    stage: "config".into(),
                    source: Box::new(CliError::Config(
                        "simulate needs a synthetic data source".into(),
                    )),
                });
            }
            let mut run = Run::new("simulate", cfg)?;
            run.stage("simulate", |run| {
                let DataSource::Synthetic { n, dgp, .. } = &run.config.data else {
                    unreachable!()
                };
                let data = dgp.generate(*n, run.config.data_seed())?;
                write_csv(&run.dir.join("data.csv"), &data)?;
                run.record_file("data.csv")?;
                run.result("n", data.n().to_string());
                Ok(())
            })?;
            run.finish()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
