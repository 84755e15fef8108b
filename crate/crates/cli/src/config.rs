//! Job configuration files.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! output_dir = "out"
//! pi_thr = 0.6
//! ci_level = 0.95
//! priors = "non-informative"     # or a path to a prior CSV
//!
//! [input]
//! kind = "synthetic"
//! scenario = "correlated-blocks"
//! seed = 1
//!
//! [selector]
//! kind = "auto-1se"
//! alpha_mix = 0.2
//! seed = 7
//!
//! [stability]
//! b = 100
//! seed = 11
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use stabsel_core::data::{self, Dataset, SyntheticConfig};
use stabsel_core::solver::{CvOptions, Selector};
use stabsel_core::sweep::{self, SweepMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Input {
    Synthetic(SyntheticConfig),
    Csv {
        path: PathBuf,
        #[serde(default = "default_response")]
        response: String,
    },
}

fn default_response() -> String {
    "y".into()
}

impl Input {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            Input::Synthetic(cfg) => Ok(data::gen_synthetic(cfg)?),
            Input::Csv { path, response } => {
                data::load_csv(path, response).with_context(|| format!("loading {}", path.display()))
            }
        }
    }
}

/// `"non-informative"` or the path of a prior file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum PriorsRef {
    #[default]
    NonInformative,
    File(PathBuf),
}

impl From<String> for PriorsRef {
    fn from(s: String) -> Self {
        if s == "non-informative" {
            PriorsRef::NonInformative
        } else {
            PriorsRef::File(s.into())
        }
    }
}

impl From<PriorsRef> for String {
    fn from(p: PriorsRef) -> Self {
        p.to_string()
    }
}

impl fmt::Display for PriorsRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorsRef::NonInformative => f.write_str("non-informative"),
            PriorsRef::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub b: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_selector() -> Selector {
    Selector::Cv1se(CvOptions::new(0.2, 0))
}

fn default_pi_thr() -> f64 {
    0.6
}

fn default_ci_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_pi_thr")]
    pub pi_thr: f64,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub priors: PriorsRef,
    pub input: Input,
    #[serde(default = "default_selector")]
    pub selector: Selector,
    pub stability: StabilitySection,
}

impl JobConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("pi_thr", self.pi_thr)?;
        check_unit("ci_level", self.ci_level)?;
        if self.stability.b == 0 {
            bail!("stability.b must be at least 1");
        }
        if let Input::Synthetic(cfg) = &self.input {
            cfg.validate()?;
        }
        if let Selector::Fixed(net) = &self.selector {
            net.validate()?;
        }
        Ok(())
    }

    fn rebase(&mut self, base: &Path) {
        self.output_dir = rebase(base, &self.output_dir);
        if let Input::Csv { path, .. } = &mut self.input {
            *path = rebase(base, path);
        }
        if let PriorsRef::File(p) = &mut self.priors {
            *p = rebase(base, p);
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        bail!("{name} must lie in (0, 1), got {v}");
    }
    Ok(())
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_job(path: &Path) -> Result<JobConfig> {
    let mut cfg: JobConfig = read_toml(path)?;
    cfg.rebase(&base_dir(path));
    Ok(cfg)
}

/// Sweep job. `counts` and `truth` (one-based) are only read in fixed mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepJob {
    pub output_dir: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
    #[serde(default = "sweep::default_zeta_grid")]
    pub zeta_grid: Vec<f64>,
    #[serde(default = "sweep::default_xi_grid")]
    pub xi_grid: Vec<f64>,
    #[serde(default = "default_pi_thr")]
    pub pi_thr: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub stability_seed: u64,
    pub scenario: Option<SyntheticConfig>,
    #[serde(default = "default_selector")]
    pub selector: Selector,
    pub counts: Option<Vec<u64>>,
    pub truth: Option<Vec<usize>>,
}

fn default_mode() -> SweepMode {
    SweepMode::Replicated
}

fn default_replications() -> usize {
    20
}

fn default_b() -> usize {
    100
}

pub fn load_sweep(path: &Path) -> Result<SweepJob> {
    let mut cfg: SweepJob = read_toml(path)?;
    cfg.output_dir = rebase(&base_dir(path), &cfg.output_dir);
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub ui_dir: Option<PathBuf>,
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8350
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: default_host(),
            port: default_port(),
            ui_dir: None,
        }
    }
}

pub fn load_serve(path: &Path) -> Result<ServeConfig> {
    let mut cfg: ServeConfig = read_toml(path)?;
    if let Some(dir) = &mut cfg.ui_dir {
        *dir = rebase(&base_dir(path), dir);
    }
    Ok(cfg)
}
