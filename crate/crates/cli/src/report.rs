//! Run manifests, output files and the plain-text summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Complete,
    Failed,
}

/// One stage of a run and the files it wrote, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: String,
    pub status: StepStatus,
    pub files: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Vec<(String, String)>,
    pub wall_clock_seconds: f64,
    /// Set when a stage failed and the outputs are incomplete.
    pub partial: bool,
    pub steps: Vec<StepRecord>,
    /// Headline results as `(key, value)` pairs, in emission order.
    pub results: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            versions: vec![
                ("gbstab".into(), gbstab::VERSION.into()),
                ("gbstab-cli".into(), env!("CARGO_PKG_VERSION").into()),
            ],
            wall_clock_seconds: 0.0,
            partial: false,
            steps: Vec::new(),
            results: Vec::new(),
        }
    }

    pub fn files(&self) -> impl Iterator<Item = &PathBuf> {
        self.steps.iter().flat_map(|s| s.files.iter())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Human-readable summary. Wall-clock time is left out so the text depends
/// only on the run's inputs.
pub fn render_summary(manifest: &RunManifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gbstab run summary");
    let _ = writeln!(out, "command: {}", manifest.command);
    let _ = writeln!(out, "config_hash: {}", manifest.config_hash);
    let _ = writeln!(out, "seed: {}", manifest.seed);
    for (name, version) in &manifest.versions {
        let _ = writeln!(out, "version.{name}: {version}");
    }
    if manifest.partial {
        let _ = writeln!(
            out,
            "status: PARTIAL (a stage failed; outputs are incomplete)"
        );
    }
    if !manifest.results.is_empty() {
        let _ = writeln!(out, "\n## results");
        let width = manifest
            .results
            .iter()
            .map(|(k, _)| k.len())
            .max()
            .unwrap_or(0);
        for (k, v) in &manifest.results {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
    }
    if !manifest.steps.is_empty() {
        let _ = writeln!(out, "\n## stages");
        for step in &manifest.steps {
            let status = match step.status {
                StepStatus::Complete => "ok",
                StepStatus::Failed => "FAILED",
            };
            let _ = writeln!(out, "{} [{status}]", step.stage);
            if let Some(m) = &step.message {
                let _ = writeln!(out, "  error: {m}");
            }
            for f in &step.files {
                let _ = writeln!(out, "  {}", f.display());
            }
        }
    }
    out
}

/// Writes the manifest and summary into `dir` and returns their paths.
pub fn emit_report(manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, body) in [
        (MANIFEST_FILE, manifest.to_toml()),
        (SUMMARY_FILE, render_summary(manifest)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Tab-separated table with a header row.
pub fn tsv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut out = header
        .iter()
        .map(|h| h.as_ref())
        .collect::<Vec<_>>()
        .join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Full round-trip formatting.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Output directory plus the manifest being assembled.
pub struct Run {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    started: Instant,
    current: Option<usize>,
    fits: usize,
}

impl Run {
    pub fn new(command: &str, config: ExperimentConfig) -> Result<Self> {
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let manifest = RunManifest::new(command, &config.hash(), config.seed);
        Ok(Self {
            config,
            dir,
            manifest,
            started: Instant::now(),
            current: None,
            fits: 0,
        })
    }

    /// Runs `body` as a named stage. On failure the stage is recorded as
    /// failed, the manifest is flagged partial and written out, and the
    /// error is tagged with the stage name.
    pub fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        self.manifest.steps.push(StepRecord {
            stage: name.into(),
            status: StepStatus::Complete,
            files: Vec::new(),
            message: None,
        });
        let outer = self.current.replace(self.manifest.steps.len() - 1);
        let result = body(self);
        let idx = self.current.take().expect("stage index");
        self.current = outer;
        match result {
            Ok(v) => Ok(v),
            Err(CliError::Stage { stage, source }) => Err(CliError::Stage { stage, source }),
            Err(e) => {
                let step = &mut self.manifest.steps[idx];
                step.status = StepStatus::Failed;
                step.message = Some(e.to_string());
                self.manifest.partial = true;
                if let Err(write_err) = self.finish_files() {
                    log::error!("could not write partial manifest: {write_err}");
                }
                Err(CliError::Stage {
                    stage: name.into(),
                    source: Box::new(e),
                })
            }
        }
    }

    /// Writes `contents` to `name` under the output directory and records it
    /// against the current stage.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        self.record_file(name)
    }

    /// Records a file already written under the output directory.
    pub fn record_file(&mut self, name: &str) -> Result<()> {
        let idx = self
            .current
            .ok_or_else(|| CliError::Config(format!("file {name} written outside a stage")))?;
        self.manifest.steps[idx].files.push(PathBuf::from(name));
        Ok(())
    }

    /// Sampler settings for the next fit; each fit gets its own seed.
    pub fn next_sampler(&mut self) -> gbstab::sampler::SamplerConfig {
        let cfg = self.config.fit_sampler(self.fits);
        self.fits += 1;
        cfg
    }

    pub fn result(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.manifest.results.push((key.into(), value.into()));
    }

    fn finish_files(&mut self) -> Result<Vec<PathBuf>> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        emit_report(&self.manifest, &self.dir)
    }

    /// Stamps the wall clock and writes the manifest and summary.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.finish_files()?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    #[test]
    fn empty_manifest_gives_header_only() {
        let m = RunManifest::new("experiment", "abc", 3);
        let text = render_summary(&m);
        assert!(text.starts_with("# gbstab run summary\n"));
        assert!(!text.contains("##"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn re_emit_is_byte_identical() {
        let mut m = RunManifest::new("experiment", "abc", 3);
        m.results.push(("x".into(), num(0.1 + 0.2)));
        m.steps.push(StepRecord {
            stage: "fit".into(),
            status: StepStatus::Complete,
            files: vec!["a.tsv".into()],
            message: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        emit_report(&m, &a).unwrap();
        emit_report(&m, &b).unwrap();
        for f in [MANIFEST_FILE, SUMMARY_FILE] {
            assert_eq!(
                std::fs::read(a.join(f)).unwrap(),
                std::fs::read(b.join(f)).unwrap()
            );
        }
        let back =
            RunManifest::from_toml_str(&std::fs::read_to_string(a.join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(back, m);
        assert!(render_summary(&m).contains("0.30000000000000004"));
    }

    #[test]
    fn failed_stage_marks_partial() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::BoundsReport);
        cfg.output_dir = dir.path().to_path_buf();
        let mut run = Run::new("experiment", cfg).unwrap();
        run.stage("first", |r| r.write("one.txt", "1")).unwrap();
        let err = run
            .stage("second", |r| {
                r.write("two.txt", "2")?;
                Err::<(), _>(CliError::Config("boom".into()))
            })
            .unwrap_err();
        assert_eq!(
            err.to_string(),
            "stage `second` failed: invalid config: boom"
        );
        assert!(run.manifest.partial);
        let on_disk = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let m = RunManifest::from_toml_str(&on_disk).unwrap();
        assert!(m.partial);
        assert_eq!(m.steps[1].status, StepStatus::Failed);
        assert_eq!(m.steps[1].files, vec![PathBuf::from("two.txt")]);
        assert!(render_summary(&m).contains("PARTIAL"));
    }

    #[test]
    fn nested_stage_errors_keep_the_inner_tag() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::BoundsReport);
        cfg.output_dir = dir.path().to_path_buf();
        let mut run = Run::new("experiment", cfg).unwrap();
        let err = run
            .stage("outer", |r| {
                r.stage("inner", |_| Err::<(), _>(CliError::Config("x".into())))
            })
            .unwrap_err();
        assert!(matches!(err, CliError::Stage { ref stage, .. } if stage == "inner"));
    }

    #[test]
    fn tsv_layout() {
        let t = tsv(&["a", "b"], &[vec![num(1.0), num(0.5)]]);
        assert_eq!(t, "a\tb\n1\t0.5\n");
    }
}
