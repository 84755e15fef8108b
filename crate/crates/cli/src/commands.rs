use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde::Serialize;

use stabsel_core::bayes::{decision_report, report_csv, resolve_priors, PriorSpec, ReportRow};
use stabsel_core::data::{self, SyntheticConfig, SyntheticMeta};
use stabsel_core::solver::{Selector, PENALTY_CONVENTION};
use stabsel_core::stability::{frequencies_csv, run_stability, SelectionMatrix, StabilityConfig};
use stabsel_core::sweep::{self, SweepConfig, SweepGrid, SweepMode};

use crate::config::{JobConfig, PriorsRef, SweepJob};
use crate::priors::read_prior_file;

pub const MATRIX_FILE: &str = "selection_matrix.csv";
pub const FREQUENCIES_FILE: &str = "frequencies.csv";
pub const POSTERIORS_FILE: &str = "posteriors.csv";
pub const META_FILE: &str = "job_meta.toml";
pub const RESOLVED_CONFIG_FILE: &str = "job_config.toml";
pub const RELEVANT_PANEL_FILE: &str = "relevant_panel.csv";
pub const IRRELEVANT_PANEL_FILE: &str = "irrelevant_panel.csv";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Per-variable priors in column order for `priors` against `m`.
pub fn priors_for(m: &SelectionMatrix, priors: &PriorsRef) -> Result<Vec<PriorSpec>> {
    match priors {
        PriorsRef::NonInformative => Ok(vec![PriorSpec::FLAT; m.p()]),
        PriorsRef::File(path) => {
            let entries = read_prior_file(path)?;
            resolve_priors(&m.names, &entries, m.b() as u64).with_context(|| format!("in {}", path.display()))
        }
    }
}

#[derive(Debug, Serialize)]
struct JobMeta<'a> {
    stabsel_version: &'a str,
    timestamp: String,
    n: usize,
    p: usize,
    b: usize,
    stability_seed: u64,
    selector: &'a str,
    lambda: f64,
    alpha_mix: f64,
    pi_thr: f64,
    ci_level: f64,
    priors: String,
    convention: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub lambda: f64,
    pub rows: Vec<ReportRow>,
}

/// Fits, subsamples and reports one job; writes every artifact into
/// `cfg.output_dir`.
pub fn cmd_run(cfg: &JobConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dataset = cfg.input.load()?;
    info!("loaded {} rows x {} variables", dataset.n(), dataset.p());
    let net = cfg.selector.resolve(&dataset)?;
    info!("lambda = {} (alpha_mix = {})", net.lambda, net.alpha_mix);
    let stab = StabilityConfig {
        b: cfg.stability.b,
        net,
        seed: cfg.stability.seed,
        pi_thr: cfg.pi_thr,
    };
    let m = run_stability(&dataset, &stab)?;
    let priors = priors_for(&m, &cfg.priors)?;
    let rows = decision_report(&m, &priors, cfg.pi_thr, cfg.ci_level)?;

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    m.write(dir.join(MATRIX_FILE))?;
    write(&dir.join(FREQUENCIES_FILE), &frequencies_csv(&m))?;
    write(&dir.join(POSTERIORS_FILE), &report_csv(&rows))?;
    let (selector, cv_seed) = match cfg.selector {
        Selector::Fixed(_) => ("fixed", None),
        Selector::Cv1se(o) => ("auto-1se", Some(o.seed)),
    };
    let meta = JobMeta {
        stabsel_version: env!("CARGO_PKG_VERSION"),
        timestamp: timestamp(),
        n: dataset.n(),
        p: dataset.p(),
        b: stab.b,
        stability_seed: stab.seed,
        selector,
        lambda: net.lambda,
        alpha_mix: net.alpha_mix,
        pi_thr: cfg.pi_thr,
        ci_level: cfg.ci_level,
        priors: cfg.priors.to_string(),
        convention: PENALTY_CONVENTION,
        cv_seed,
    };
    write(&dir.join(META_FILE), &toml::to_string(&meta)?)?;
    write(&dir.join(RESOLVED_CONFIG_FILE), &toml::to_string(cfg)?)?;
    Ok(RunSummary {
        output_dir: dir.clone(),
        lambda: net.lambda,
        rows,
    })
}

/// Posterior report for a stored selection matrix. Returns the CSV text.
pub fn cmd_posterior(matrix: &Path, priors: &PriorsRef, pi_thr: f64, ci_level: f64) -> Result<String> {
    let m = SelectionMatrix::read(matrix).with_context(|| format!("reading {}", matrix.display()))?;
    let specs = priors_for(&m, priors)?;
    let rows = decision_report(&m, &specs, pi_thr, ci_level)?;
    Ok(report_csv(&rows))
}

/// Writes a synthetic dataset to `out` and its description to the `.toml`
/// next to it.
pub fn cmd_simulate(cfg: &SyntheticConfig, out: &Path) -> Result<()> {
    let d = data::gen_synthetic(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    data::write_csv(&d, "y", out)?;
    write(&out.with_extension("toml"), &SyntheticMeta::new(cfg, &d).to_toml())
}

#[derive(Debug, Serialize)]
struct SweepMeta<'a> {
    stabsel_version: &'a str,
    mode: SweepMode,
    replications: usize,
    b: usize,
    pi_thr: f64,
    n_relevant: usize,
    n_irrelevant: usize,
}

pub fn cmd_sweep(job: &SweepJob) -> Result<SweepGrid> {
    let grid = match job.mode {
        SweepMode::Fixed => {
            let (Some(counts), Some(truth)) = (&job.counts, &job.truth) else {
                bail!("fixed mode needs `counts` and `truth`");
            };
            if let Some(&j) = truth.iter().find(|&&j| j == 0) {
                bail!("truth indices are one-based, found {j}");
            }
            let truth: BTreeSet<usize> = truth.iter().map(|j| j - 1).collect();
            sweep::sweep_fixed(counts, job.b as u64, &truth, &job.zeta_grid, &job.xi_grid, job.pi_thr)?
        }
        mode => {
            let Some(scenario) = job.scenario else {
                bail!("simulated sweeps need a [scenario] section");
            };
            let cfg = SweepConfig {
                zeta_grid: job.zeta_grid.clone(),
                xi_grid: job.xi_grid.clone(),
                scenario,
                replications: job.replications,
                pi_thr: job.pi_thr,
                b: job.b,
                stability_seed: job.stability_seed,
                selector: job.selector,
                mode,
            };
            let reps = sweep::replicate(&scenario, cfg.replications, cfg.b, cfg.stability_seed, &cfg.selector)?;
            create_dir(&job.output_dir)?;
            let mut freq = String::from("name,mean_frequency\n");
            for (j, f) in sweep::mean_frequencies(&reps, cfg.b).iter().enumerate() {
                let _ = writeln!(freq, "x{},{f}", j + 1);
            }
            write(&job.output_dir.join("mean_frequencies.csv"), &freq)?;
            sweep::sweep_replicates(&reps, &cfg)?
        }
    };
    let dir = &job.output_dir;
    create_dir(dir)?;
    write(&dir.join(RELEVANT_PANEL_FILE), &grid.relevant_csv())?;
    write(&dir.join(IRRELEVANT_PANEL_FILE), &grid.irrelevant_csv())?;
    let meta = SweepMeta {
        stabsel_version: env!("CARGO_PKG_VERSION"),
        mode: grid.mode,
        replications: grid.replications,
        b: job.b,
        pi_thr: job.pi_thr,
        n_relevant: grid.n_relevant,
        n_irrelevant: grid.n_irrelevant,
    };
    write(&dir.join("sweep_meta.toml"), &toml::to_string(&meta)?)?;
    write(&dir.join("sweep_config.toml"), &toml::to_string(job)?)?;
    Ok(grid)
}
