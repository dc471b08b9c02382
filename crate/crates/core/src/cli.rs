//! Config parsing, command implementations and output writers behind the
//! `simtrans` binary.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray_linalg::c64;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::bath::{ModelConfig, SimilarityGenerator};
use crate::error::Error;
use crate::linalg::{self, pauli, CMat};
use crate::mps::MpsState;
use crate::oracle;
use crate::tebd::{self, EvolutionConfig, TrajectoryRecord};

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "t",
    "norm_factor",
    "sz_fict",
    "sz_recovered",
    "re_rho01_recovered",
    "seff",
    "max_bond",
    "discarded_weight",
];

pub const GHZ_COLUMNS: [&str; 3] = ["k", "seff_mps", "seff_closed_form"];

pub const ORACLE_COLUMNS: [&str; 4] = ["t", "sz_recovered_mps", "sz_recovered_exact", "abs_deviation"];

/// β values swept when a config has no
/// `[sweep]` section.
pub const DEFAULT_SWEEP: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];

pub const DEFAULT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Sim(#[from] Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("max deviation {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    Tolerance { deviation: f64, tolerance: f64 },

    #[error("{failed} of {total} trajectories failed")]
    SweepFailed {
        failed: usize,
        total: usize,
        diverged: bool,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(Error::Config(_) | Error::InstanceTooLarge(_) | Error::NotHermitian { .. }) => 2,
            CliError::Sim(Error::Divergence { .. }) => 3,
            CliError::SweepFailed { diverged: true, .. } => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// `sigma_z`, `sigma_x`, `mixed:x,z` or `plus_minus:a,b`.
    pub preset: Option<String>,
    /// Explicit Hermitian direction as `[[[re, im], [re, im]], [[re, im], [re, im]]]`.
    pub matrix: Option<[[[f64; 2]; 2]; 2]>,
    pub beta: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            preset: None,
            matrix: None,
            beta: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn build(&self, beta: f64) -> crate::Result<SimilarityGenerator> {
        match (&self.preset, &self.matrix) {
            (Some(_), Some(_)) => Err(Error::Config(
                "generator: give either preset or matrix, not both".into(),
            )),
            (None, Some(m)) => {
                let direction = CMat::from_shape_fn((2, 2), |(i, j)| c64::new(m[i][j][0], m[i][j][1]));
                SimilarityGenerator::new(beta, direction)
            }
            (Some(p), None) => parse_preset(p, beta),
            (None, None) => SimilarityGenerator::sigma_z(beta),
        }
    }
}

pub fn parse_preset(preset: &str, beta: f64) -> crate::Result<SimilarityGenerator> {
    let (name, args) = match preset.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a)),
        None => (preset.trim(), None),
    };
    let pair = |args: Option<&str>| -> crate::Result<(f64, f64)> {
        let args = args.ok_or_else(|| Error::Config(format!("preset {name} needs two numbers, e.g. {name}:1,1")))?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [a, b] => {
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("preset {name}: cannot parse {s:?} as a number")))
                };
                Ok((parse(a)?, parse(b)?))
            }
            _ => Err(Error::Config(format!(
                "preset {name} needs exactly two numbers, got {args:?}"
            ))),
        }
    };
    match (name, args) {
        ("sigma_z", None) => SimilarityGenerator::sigma_z(beta),
        ("sigma_x", None) => SimilarityGenerator::sigma_x(beta),
        ("mixed", _) => {
            let (x, z) = pair(args)?;
            SimilarityGenerator::mixed(beta, x, z)
        }
        ("plus_minus", _) => {
            let (a, b) = pair(args)?;
            SimilarityGenerator::plus_minus(beta, a, b)
        }
        _ => Err(Error::Config(format!("unknown generator preset {preset:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            prefix: "simtrans".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub generator: GeneratorConfig,
    pub evolution: EvolutionConfig,
    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: Error| CliError::Config(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.evolution.validate().map_err(wrap)?;
        self.generator.build(self.generator.beta).map_err(wrap)?;
        if let Some(sweep) = &self.sweep {
            validate_betas(&sweep.betas)?;
        }
        if !(self.oracle.tolerance > 0.0) || !self.oracle.tolerance.is_finite() {
            return Err(CliError::Config(format!(
                "oracle.tolerance must be positive, got {}",
                self.oracle.tolerance
            )));
        }
        if self.output.prefix.is_empty() {
            return Err(CliError::Config("output.prefix must not be empty".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> crate::Result<SimilarityGenerator> {
        self.generator.build(self.generator.beta)
    }

    pub fn sweep_betas(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.betas.clone(),
            None => DEFAULT_SWEEP.to_vec(),
        }
    }
}

fn validate_betas(betas: &[f64]) -> Result<(), CliError> {
    if betas.is_empty() {
        return Err(CliError::Config("sweep.betas must not be empty".into()));
    }
    let mut seen = HashSet::new();
    for &b in betas {
        if !b.is_finite() {
            return Err(CliError::Config(format!("sweep.betas contains non-finite value {b}")));
        }
        // -0.0 and 0.0 are the same β
        if !seen.insert((b + 0.0).to_bits()) {
            return Err(CliError::Config(format!("sweep.betas contains {b} twice")));
        }
    }
    Ok(())
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(out: W, record: &TrajectoryRecord) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for r in &record.rows {
        w.write_record([
            format_float(r.t),
            format_float(r.norm_factor),
            format_float(r.sz_fict),
            format_float(r.sz_recovered),
            format_float(r.re_rho01_recovered),
            format_float(r.seff),
            r.max_bond.to_string(),
            format_float(r.discarded_weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv_file(path: &Path, write: impl FnOnce(fs::File) -> csv::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write(file).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

pub fn trajectory_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.csv"))
}

pub fn sweep_path(prefix: &str, beta: f64) -> PathBuf {
    PathBuf::from(format!("{prefix}_beta_{}.csv", beta + 0.0))
}

pub fn summary_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_summary.json"))
}

fn prefix_of<'a>(cfg: &'a RunConfig, out: Option<&'a str>) -> &'a str {
    out.unwrap_or(&cfg.output.prefix)
}

/// Single trajectory to `<prefix>.csv`. Rows recorded before a divergence
/// are still written.
pub fn cmd_run(config: &Path, out: Option<&str>) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(config)?;
    let generator = cfg.generator()?;
    let (record, failure) = tebd::run_collect(&cfg.model, &generator, &cfg.evolution)?;
    let path = trajectory_path(prefix_of(&cfg, out));
    write_csv_file(&path, |f| write_trajectory_csv(f, &record))?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(path),
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary_path: PathBuf,
    pub csv_paths: Vec<PathBuf>,
    pub summary: Value,
}

/// One trajectory per β, run on the rayon pool; files are written here,
/// after all workers finish.
pub fn cmd_sweep_beta(config: &Path, out: Option<&str>) -> Result<SweepOutcome, CliError> {
    let cfg = RunConfig::load(config)?;
    let betas = cfg.sweep_betas();
    validate_betas(&betas)?;
    let generators = betas
        .iter()
        .map(|&b| cfg.generator.build(b))
        .collect::<crate::Result<Vec<_>>>()?;
    let results: Vec<crate::Result<(TrajectoryRecord, Option<Error>)>> = generators
        .par_iter()
        .map(|g| tebd::run_collect(&cfg.model, g, &cfg.evolution))
        .collect();

    let prefix = prefix_of(&cfg, out);
    let mut summary = Map::new();
    let mut csv_paths = Vec::new();
    let (mut failed, mut diverged) = (0, false);
    for (&beta, result) in betas.iter().zip(results) {
        let key = format!("{}", beta + 0.0);
        let (record, failure) = match result {
            Ok(r) => r,
            Err(e) => {
                failed += 1;
                diverged |= matches!(e, Error::Divergence { .. });
                summary.insert(key, json!({ "status": "failed", "error": e.to_string() }));
                continue;
            }
        };
        let path = sweep_path(prefix, beta);
        write_csv_file(&path, |f| write_trajectory_csv(f, &record))?;
        let last = record.last().expect("a record always holds the initial row");
        let max_bond = record.rows.iter().map(|r| r.max_bond).max().unwrap_or(1);
        let mut entry = json!({
            "status": if failure.is_some() { "failed" } else { "ok" },
            "csv": path.display().to_string(),
            "final_t": last.t,
            "final_seff": last.seff,
            "final_sz_fict": last.sz_fict,
            "max_bond": max_bond,
        });
        if let Some(e) = failure {
            failed += 1;
            diverged |= matches!(e, Error::Divergence { .. });
            entry["error"] = Value::String(e.to_string());
        }
        summary.insert(key, entry);
        csv_paths.push(path);
    }

    let summary = Value::Object(summary);
    let summary_path = summary_path(prefix);
    let text = serde_json::to_string_pretty(&summary).expect("summary is plain JSON");
    fs::write(&summary_path, text + "\n").map_err(io_err(&summary_path))?;
    if failed > 0 {
        return Err(CliError::SweepFailed {
            failed,
            total: betas.len(),
            diverged,
        });
    }
    Ok(SweepOutcome {
        summary_path,
        csv_paths,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhzRow {
    pub k: usize,
    pub seff_mps: f64,
    pub seff_closed_form: f64,
}

/// GHZ state with `e^{βσz}` applied to the first `k` spins, for every
/// `k = 0..=n`.
pub fn ghz_bench(n_spins: usize, beta: f64) -> crate::Result<Vec<GhzRow>> {
    if n_spins < 3 {
        return Err(Error::MetricUndefined(format!(
            "GHZ bench needs n >= 3 spins, got {n_spins}"
        )));
    }
    if !beta.is_finite() {
        return Err(Error::Config(format!("beta must be finite, got {beta}")));
    }
    let gate = linalg::matrix_exponential(&pauli::sigma_z().mapv(|x| x * beta))?;
    let base = MpsState::ghz(n_spins)?;
    (0..=n_spins)
        .map(|k| {
            let mut state = base.clone();
            for site in 0..k {
                state.apply_single_site_gate(site, &gate)?;
            }
            state.canonicalize()?;
            Ok(GhzRow {
                k,
                seff_mps: state.bond_entropies()?.effective_entanglement()?,
                seff_closed_form: oracle::ghz_seff_closed_form(n_spins, k, beta)?,
            })
        })
        .collect()
}

pub fn write_ghz_csv<W: Write>(out: W, rows: &[GhzRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GHZ_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format_float(r.seff_mps),
            format_float(r.seff_closed_form),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_ghz_bench(n_spins: usize, beta: f64, out: &str) -> Result<(PathBuf, Vec<GhzRow>), CliError> {
    let rows = ghz_bench(n_spins, beta)?;
    let path = trajectory_path(out);
    write_csv_file(&path, |f| write_ghz_csv(f, &rows))?;
    Ok((path, rows))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub t: f64,
    pub sz_mps: f64,
    pub sz_exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub rows: Vec<OracleRow>,
    pub max_deviation: f64,
}

/// Runs the configured MPS trajectory and compares its recovered `⟨σz⟩`
/// with exact dense evolution in the physical frame.
pub fn oracle_compare(cfg: &RunConfig) -> crate::Result<OracleComparison> {
    let bath = cfg.model.discretized_bath()?;
    let physical = SimilarityGenerator::sigma_z(0.0)?;
    // size guard before any MPS work
    oracle::dense_hamiltonian(&cfg.model, &bath, &physical)?;
    let record = tebd::run(&cfg.model, &cfg.generator()?, &cfg.evolution)?;
    let times: Vec<f64> = record.rows.iter().map(|r| r.t).collect();
    let exact = oracle::exact_trajectory(&cfg.model, &bath, &physical, &times)?;
    let rows: Vec<OracleRow> = record
        .rows
        .iter()
        .zip(&exact)
        .map(|(r, (_, obs))| OracleRow {
            t: r.t,
            sz_mps: r.sz_recovered,
            sz_exact: obs.sz_recovered,
        })
        .collect();
    let max_deviation = rows.iter().map(|r| (r.sz_mps - r.sz_exact).abs()).fold(0.0, f64::max);
    Ok(OracleComparison { rows, max_deviation })
}

pub fn write_oracle_csv<W: Write>(out: W, cmp: &OracleComparison) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ORACLE_COLUMNS)?;
    for r in &cmp.rows {
        w.write_record([
            format_float(r.t),
            format_float(r.sz_mps),
            format_float(r.sz_exact),
            format_float((r.sz_mps - r.sz_exact).abs()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_oracle.csv`; fails with [`CliError::Tolerance`] when the
/// deviation is above the tolerance.
pub fn cmd_oracle_check(
    config: &Path,
    out: Option<&str>,
    tolerance: Option<f64>,
) -> Result<(PathBuf, OracleComparison), CliError> {
    let cfg = RunConfig::load(config)?;
    let tolerance = tolerance.unwrap_or(cfg.oracle.tolerance);
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(CliError::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let cmp = oracle_compare(&cfg)?;
    let path = PathBuf::from(format!("{}_oracle.csv", prefix_of(&cfg, out)));
    write_csv_file(&path, |f| write_oracle_csv(f, &cmp))?;
    if cmp.max_deviation > tolerance {
        return Err(CliError::Tolerance {
            deviation: cmp.max_deviation,
            tolerance,
        });
    }
    Ok((path, cmp))
}
