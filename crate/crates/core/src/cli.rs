//! Configuration, presets and the orchestration behind the `dicke` binary.
//!
//! A run is described by a TOML document (see the files under `presets/`).
//! Sources are layered: an optional preset, then an optional config file,
//! then `--set key.path=value` overrides, and finally the dedicated flags
//! (`--seed`, `--out`, grid ranges). The fully resolved configuration is
//! embedded in every JSON output and in the `.meta.json` sidecar written
//! next to each CSV file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{self, BathChannel, BathSpec, DiagError, DiagonalizationResult, HpNormalization, SpectralDensity};
use crate::dynamics::{self, IntegrationError, NewtonError, SolverConfig};
use crate::model::{self, Branch, ModelError, ModelParams, Phase, SemiclassicalState};
use crate::oracle::{self, ChannelSet, FockTruncation, OracleError, OracleReport, OracleScenario};
use crate::semiclassical::{self, DissipatorKind, RhsSpec, SemiclassicalError};

/// Built-in configurations, selectable with `--preset`.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("dressed", include_str!("../presets/dressed.toml")),
    ("oracle", include_str!("../presets/oracle.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("phase error: {0}")]
    Phase(String),
    #[error("truncation error: {0}")]
    Truncation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Phase(_) => 4,
            CliError::Truncation(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DiagError> for CliError {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::NormalPhase => CliError::Phase(e.to_string()),
            DiagError::Model(_) | DiagError::NegativeCoupling(_) | DiagError::NegativeSpectral { .. } => {
                CliError::Config(e.to_string())
            }
            DiagError::Unstable { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SemiclassicalError> for CliError {
    fn from(e: SemiclassicalError) -> Self {
        match e {
            SemiclassicalError::NormalPhase(_) => CliError::Phase(e.to_string()),
            SemiclassicalError::Diag(d) => d.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<IntegrationError> for CliError {
    fn from(e: IntegrationError) -> Self {
        match e {
            IntegrationError::InvalidConfig(_) | IntegrationError::NonFiniteInitial => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<NewtonError> for CliError {
    fn from(e: NewtonError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Truncation { .. } => CliError::Truncation(e.to_string()),
            OracleError::Diag(d) => d.into(),
            OracleError::Numerical(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn default_dissipator() -> DissipatorKind {
    DissipatorKind::Bare
}

fn default_branch() -> Branch {
    Branch::Plus
}

fn default_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_dissipator")]
    pub dissipator: DissipatorKind,
    #[serde(default = "default_branch")]
    pub branch: Branch,
    /// Seed of the Gaussian noise added to the initial state.
    #[serde(default)]
    pub seed: u64,
    /// ∞-norm distance below which the final state counts as converged.
    #[serde(default = "default_tolerance")]
    pub convergence_tol: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dissipator: default_dissipator(),
            branch: default_branch(),
            seed: 0,
            convergence_tol: default_tolerance(),
        }
    }
}

/// Initial condition of a semiclassical run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// An explicit (q, p, S_x, S_y, S_z).
    Explicit { state: [f64; 5] },
    /// The energy minimum of the selected branch (the normal minimum in the
    /// normal phase) plus independent Gaussian noise of width `sigma` on
    /// every component.
    MinimumNoise { sigma: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::MinimumNoise { sigma: 0.0 }
    }
}

impl InitialState {
    pub fn resolve(&self, params: &ModelParams, branch: Branch, seed: u64) -> Result<SemiclassicalState, CliError> {
        match self {
            InitialState::Explicit { state } => Ok((*state).into()),
            InitialState::MinimumNoise { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(CliError::Config(format!("noise sigma must be >= 0, got {sigma}")));
                }
                let base = match model::superradiant_minimum(params, branch) {
                    Some(m) => m.state(),
                    None => model::normal_minimum(params).0,
                };
                if *sigma == 0.0 {
                    return Ok(base);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, *sigma).expect("sigma validated above");
                let mut x = base.to_array();
                for xi in &mut x {
                    *xi += normal.sample(&mut rng);
                }
                Ok(x.into())
            }
        }
    }
}

fn default_solver() -> SolverConfig {
    SolverConfig::rk45(1000.0)
}

/// One bath as written in a config file; the channel is implied by its key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathEntry {
    #[serde(default)]
    pub spectral: SpectralDensity,
    #[serde(default)]
    pub temperature: f64,
}

impl BathEntry {
    pub fn spec(&self, channel: BathChannel) -> BathSpec {
        BathSpec::new(self.spectral.clone(), self.temperature, channel)
    }
}

/// Baths from which the dressed-dissipator weights κ_eff are derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathsConfig {
    pub photon: BathEntry,
    pub spin: BathEntry,
    #[serde(default)]
    pub hp_normalization: HpNormalization,
}

/// Inclusive linear range with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridRange {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => vec![],
            1 => vec![self.min],
            n => (0..n)
                .map(|k| self.min + (self.max - self.min) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        if self.steps == 0 || !self.min.is_finite() || !self.max.is_finite() {
            return Err(CliError::Config(format!("invalid {name} range")));
        }
        Ok(())
    }
}

impl std::str::FromStr for GridRange {
    type Err = String;

    /// Parses `min,max,steps`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected min,max,steps, got `{s}`"));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(GridRange {
            min: num(parts[0])?,
            max: num(parts[1])?,
            steps: parts[2].parse().map_err(|e| format!("`{}`: {e}", parts[2]))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub g: GridRange,
    pub eps: GridRange,
}

fn default_oracle_bath() -> SpectralDensity {
    SpectralDensity::Ohmic { eta: 1.0, cutoff: 10.0 }
}

fn default_record_interval() -> f64 {
    0.5
}

/// Oracle settings; model parameters and branch come from the shared
/// sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub truncation: FockTruncation,
    pub channels: ChannelSet,
    pub t_end: f64,
    #[serde(default)]
    pub temperature: f64,
    /// Alternative to `temperature`: the bath temperature is chosen so that
    /// the thermal occupation at the lower polariton energy equals this.
    #[serde(default)]
    pub mode1_occupation: Option<f64>,
    #[serde(default = "default_oracle_bath")]
    pub photon_bath: SpectralDensity,
    #[serde(default = "default_oracle_bath")]
    pub spin_bath: SpectralDensity,
    #[serde(default)]
    pub hp_normalization: HpNormalization,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub check_invariants: bool,
}

impl OracleSection {
    pub fn scenario(&self, params: &ModelParams, branch: Branch) -> Result<OracleScenario, CliError> {
        let temperature = match self.mode1_occupation {
            Some(n) => {
                if !(n > 0.0 && n.is_finite()) {
                    return Err(CliError::Config(format!("mode1_occupation must be > 0, got {n}")));
                }
                let d = diag::diagonalize(params, branch)?;
                oracle::temperature_for_occupation(d.eps1, n)
            }
            None => self.temperature,
        };
        Ok(OracleScenario {
            params: *params,
            branch,
            truncation: self.truncation,
            temperature,
            photon_bath: self.photon_bath.clone(),
            spin_bath: self.spin_bath.clone(),
            hp_normalization: self.hp_normalization,
            channels: self.channels.clone(),
            t_end: self.t_end,
            dt: self.dt,
            record_interval: self.record_interval,
            check_invariants: self.check_invariants,
        })
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_prefix() -> String {
    "run".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// File-name prefix of every output.
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            prefix: default_prefix(),
        }
    }
}

/// Complete, resolved description of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default = "default_solver")]
    pub solver: SolverConfig,
    #[serde(default)]
    pub baths: Option<BathsConfig>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.solver.validate()?;
        if !(self.run.convergence_tol > 0.0) {
            return Err(CliError::Config("convergence_tol must be positive".into()));
        }
        if let InitialState::MinimumNoise { sigma } = self.initial {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(CliError::Config(format!("noise sigma must be >= 0, got {sigma}")));
            }
        }
        if let Some(grid) = &self.sweep {
            grid.g.validate("g")?;
            grid.eps.validate("eps")?;
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(CliError::Config("output prefix must be a plain file-name stem".into()));
        }
        Ok(())
    }

    /// Dressed-channel weights: bath-derived when baths are configured,
    /// otherwise the bare rates (κ₁, κ₂).
    pub fn kappa_eff(&self) -> Result<(f64, f64), CliError> {
        match &self.baths {
            None => Ok((self.params.kappa1, self.params.kappa2)),
            Some(b) => {
                let d = diag::diagonalize(&self.params, self.run.branch)?;
                Ok(diag::effective_viscosities(
                    &d,
                    &b.photon.spec(BathChannel::Photon),
                    &b.spin.spec(BathChannel::Spin),
                    b.hp_normalization,
                )?)
            }
        }
    }
}

/// Recursively merges `top` into `base`; tables merge, everything else is
/// replaced.
pub fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`. The value is parsed as a TOML literal and falls
/// back to a bare string, so `run.dissipator=dressed` works unquoted.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("invalid override key `{path}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{path}`: `{k}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_owned(), value);
    Ok(())
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "dicke", version, about = "Dissipative dynamics of the extended Dicke model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file (layered on top of --preset).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: fig2, fig3, dressed, oracle.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the initial-state noise.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Override a configuration value, e.g. `--set params.g=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the semiclassical equations of motion.
    Simulate(CommonArgs),
    /// Diagonalize the quadratic fluctuations around the superradiant minimum.
    Diagonalize {
        #[command(flatten)]
        common: CommonArgs,
        /// Cross-check the closed forms against independent routes.
        #[arg(long)]
        check: bool,
    },
    /// Analytic and Newton-refined stationary points of the bare dissipator.
    FixedPoints(CommonArgs),
    /// Phase diagram over a (g, eps) grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Coupling range `min,max,steps`.
        #[arg(long, value_name = "MIN,MAX,STEPS", allow_hyphen_values = true)]
        g_range: Option<GridRange>,
        /// Dipole-parameter range `min,max,steps`.
        #[arg(long, value_name = "MIN,MAX,STEPS", allow_hyphen_values = true)]
        eps_range: Option<GridRange>,
    },
    /// Truncated-Fock Lindblad evolution.
    Oracle(CommonArgs),
}

/// Builds the resolved configuration from layered sources.
pub fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut table = toml::Table::new();
    if let Some(name) = &common.preset {
        let text = preset(name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
        })?;
        merge_tables(&mut table, parse_table(text, name)?);
    }
    if let Some(path) = &common.config {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        merge_tables(&mut table, parse_table(&text, &path.display().to_string())?);
    }
    if common.preset.is_none() && common.config.is_none() {
        return Err(CliError::Config("either --config or --preset is required".into()));
    }
    for o in &common.overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg = RunConfig::from_table(table)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let summary = match cli.command {
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            to_json(&cmd_simulate(&cfg)?)?
        }
        Command::Diagonalize { common, check } => {
            let cfg = load_config(&common)?;
            to_json(&cmd_diagonalize(&cfg, check)?)?
        }
        Command::FixedPoints(common) => {
            let cfg = load_config(&common)?;
            to_json(&cmd_fixed_points(&cfg)?)?
        }
        Command::Sweep {
            common,
            g_range,
            eps_range,
        } => {
            let mut cfg = load_config(&common)?;
            let default = SweepGrid {
                g: GridRange {
                    min: 0.0,
                    max: 1.0,
                    steps: 21,
                },
                eps: GridRange {
                    min: -1.5,
                    max: 0.5,
                    steps: 21,
                },
            };
            let mut grid = cfg.sweep.unwrap_or(default);
            if let Some(g) = g_range {
                grid.g = g;
            }
            if let Some(e) = eps_range {
                grid.eps = e;
            }
            cfg.sweep = Some(grid);
            cfg.validate()?;
            to_json(&cmd_sweep(&cfg)?)?
        }
        Command::Oracle(common) => {
            let cfg = load_config(&common)?;
            to_json(&cmd_oracle(&cfg)?)?
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    writeln!(lock, "{summary}")?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(format!("serialization: {e}")))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut text = to_json(v)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output.dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.output.dir.display())))
}

fn out_path(cfg: &RunConfig, suffix: &str) -> PathBuf {
    cfg.output.dir.join(format!("{}_{suffix}", cfg.output.prefix))
}

/// Provenance sidecar written next to each CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct CsvMeta<'a> {
    pub command: &'static str,
    pub file: String,
    pub columns: Vec<&'static str>,
    pub config: &'a RunConfig,
}

fn write_meta(cfg: &RunConfig, command: &'static str, csv: &Path, columns: Vec<&'static str>) -> Result<(), CliError> {
    let meta = CsvMeta {
        command,
        file: csv
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        columns,
        config: cfg,
    };
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    write_json(Path::new(&name), &meta)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// A candidate end point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub label: String,
    pub state: SemiclassicalState,
    pub energy: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub command: &'static str,
    pub config: RunConfig,
    pub kappa_eff: Option<(f64, f64)>,
    pub initial_state: SemiclassicalState,
    pub initial_energy: f64,
    pub final_time: f64,
    pub final_state: SemiclassicalState,
    pub final_energy: f64,
    /// Lowest semiclassical energy (E^SR in the superradiant phase).
    pub ground_energy: f64,
    /// Nearest known stationary point of the chosen dissipator.
    pub target: Option<Target>,
    /// Whether the final state lies within `convergence_tol` of the target.
    pub converged: bool,
    /// Earliest recorded time after which the trajectory stays within
    /// `convergence_tol` of the target.
    pub convergence_time: Option<f64>,
    /// Newton refinement of the final state (absent if it failed).
    pub refined_fixed_point: Option<SemiclassicalState>,
    pub final_rhs_norm: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub files: Vec<String>,
}

/// Known stationary points of the chosen dissipator, labelled.
pub fn candidate_targets(
    params: &ModelParams,
    kind: DissipatorKind,
    branch: Branch,
) -> Vec<(String, SemiclassicalState)> {
    match kind {
        DissipatorKind::None => vec![],
        DissipatorKind::Bare => {
            let pts = semiclassical::bare_fixed_points(params);
            let labels = [
                "bare fixed point (trivial)",
                "bare fixed point (+)",
                "bare fixed point (-)",
            ];
            labels.iter().map(|l| l.to_string()).zip(pts).collect()
        }
        DissipatorKind::AdHocRotated | DissipatorKind::Dressed => model::superradiant_minimum(params, branch)
            .map(|m| vec![(format!("superradiant minimum ({branch})"), m.state())])
            .unwrap_or_default(),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary, CliError> {
    let params = cfg.params;
    let kind = cfg.run.dissipator;
    if kind.requires_superradiant() && model::classify_phase(&params) != Phase::Superradiant {
        return Err(CliError::Phase(format!(
            "{kind} dissipator requires the superradiant phase (g = {}, eps = {})",
            params.g, params.eps
        )));
    }
    let kappa_eff = match kind {
        DissipatorKind::Dressed => Some(cfg.kappa_eff()?),
        _ => None,
    };
    let rhs = semiclassical::build_rhs(
        &params,
        &RhsSpec {
            kind,
            branch: cfg.run.branch,
            kappa_eff,
        },
    )?;
    let x0 = cfg.initial.resolve(&params, cfg.run.branch, cfg.run.seed)?;
    let traj = dynamics::integrate_semiclassical(|x| rhs(x), x0, &cfg.solver)?.with_model(&params, kind);
    let xf = traj.final_semiclassical();

    let tol = cfg.run.convergence_tol;
    let target = candidate_targets(&params, kind, cfg.run.branch)
        .into_iter()
        .map(|(label, state)| Target {
            label,
            energy: model::energy(&state, &params),
            distance: state.max_abs_diff(&xf),
            state,
        })
        .min_by(|a, b| a.distance.total_cmp(&b.distance));
    let converged = target.as_ref().is_some_and(|t| t.distance < tol);
    let convergence_time = target
        .as_ref()
        .and_then(|t| dynamics::detect_convergence(&traj, &t.state.to_array(), tol));
    let refined_fixed_point = match kind {
        DissipatorKind::None => None,
        _ => dynamics::refine_fixed_point(|x| rhs(x), xf, 1e-12, 50).ok(),
    };

    prepare_out_dir(cfg)?;
    let traj_path = out_path(cfg, "trajectory.csv");
    let mut w = create_file(&traj_path)?;
    traj.write_csv(&params, &mut w)?;
    w.flush()?;
    write_meta(
        cfg,
        "simulate",
        &traj_path,
        vec!["t", "q", "p", "sx", "sy", "sz", "energy"],
    )?;

    let energy_path = out_path(cfg, "energy.csv");
    let mut w = create_file(&energy_path)?;
    writeln!(w, "t,energy")?;
    for (t, e) in dynamics::energy_series(&traj, &params) {
        writeln!(w, "{t:.16e},{e:.16e}")?;
    }
    w.flush()?;
    write_meta(cfg, "simulate", &energy_path, vec!["t", "energy"])?;

    let summary_path = out_path(cfg, "summary.json");
    let summary = SimulateSummary {
        command: "simulate",
        config: cfg.clone(),
        kappa_eff,
        initial_state: x0,
        initial_energy: model::energy(&x0, &params),
        final_time: traj.final_time(),
        final_state: xf,
        final_energy: model::energy(&xf, &params),
        ground_energy: model::ground_energy(&params),
        target,
        converged,
        convergence_time,
        refined_fixed_point,
        final_rhs_norm: rhs(&xf).max_abs(),
        accepted_steps: traj.metadata.accepted_steps,
        rejected_steps: traj.metadata.rejected_steps,
        files: [&traj_path, &energy_path, &summary_path]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// diagonalize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DiagInvariants {
    /// max_m |α_m² + γ_m² − β_m² − δ_m² − 1|.
    pub normalization_error: f64,
    /// ‖M⁻¹M − 1‖ for the polariton transformation and its inverse.
    pub round_trip_residual: f64,
    pub eps_ordered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagChecks {
    /// Energies from the full quadratic-form route.
    pub eps_full: (f64, f64),
    /// max relative difference between the two energy routes.
    pub eps_relative_difference: f64,
    /// Dressed coefficients rebuilt from the Bogoliubov coefficients.
    pub dressed_pipeline_difference: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseSummary {
    pub command: &'static str,
    pub config: RunConfig,
    pub diagonalization: DiagonalizationResult,
    pub bogoliubov: diag::BogoliubovCoefficients,
    pub dressed: diag::DressedCoefficients,
    pub kappa_eff: (f64, f64),
    pub invariants: DiagInvariants,
    pub checks: Option<DiagChecks>,
}

pub fn diag_checks(d: &DiagonalizationResult) -> Result<DiagChecks, CliError> {
    let (e1, e2) = diag::energies_full(d)?;
    let rel = ((e1 - d.eps1) / d.eps1).abs().max(((e2 - d.eps2) / d.eps2).abs());
    let pipe = diag::dressed_coefficients(d).max_abs_diff(&diag::dressed_coefficients_from_pipeline(d));
    Ok(DiagChecks {
        eps_full: (e1, e2),
        eps_relative_difference: rel,
        dressed_pipeline_difference: pipe,
        passed: rel < 1e-8 && pipe < 1e-12,
    })
}

pub fn cmd_diagonalize(cfg: &RunConfig, check: bool) -> Result<DiagnoseSummary, CliError> {
    let d = diag::diagonalize(&cfg.params, cfg.run.branch)?;
    let bog = diag::bogoliubov_coefficients(&d);
    let normalization_error = bog
        .modes()
        .iter()
        .map(|m| (m.normalization() - 1.0).abs())
        .fold(0.0, f64::max);
    let checks = if check { Some(diag_checks(&d)?) } else { None };
    let summary = DiagnoseSummary {
        command: "diagonalize",
        config: cfg.clone(),
        diagonalization: d,
        bogoliubov: bog,
        dressed: diag::dressed_coefficients(&d),
        kappa_eff: cfg.kappa_eff()?,
        invariants: DiagInvariants {
            normalization_error,
            round_trip_residual: diag::round_trip_residual(&d),
            eps_ordered: d.eps1 <= d.eps2,
        },
        checks,
    };
    prepare_out_dir(cfg)?;
    write_json(&out_path(cfg, "diagonalization.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// fixed-points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointEntry {
    pub label: String,
    pub analytic: SemiclassicalState,
    pub analytic_energy: f64,
    pub analytic_residual: f64,
    pub refined: Option<SemiclassicalState>,
    pub refined_energy: Option<f64>,
    /// ‖refined − analytic‖∞.
    pub refinement_shift: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointsSummary {
    pub command: &'static str,
    pub config: RunConfig,
    pub phase: Phase,
    /// Damped thresholds (g_c, ε_c), if defined.
    pub damped_critical: Option<(f64, f64)>,
    pub points: Vec<FixedPointEntry>,
    pub superradiant_minima: Vec<model::SrMinimum>,
}

pub fn cmd_fixed_points(cfg: &RunConfig) -> Result<FixedPointsSummary, CliError> {
    let params = cfg.params;
    let rhs = |x: &SemiclassicalState| semiclassical::bare_rhs(x, &params);
    let labels = ["trivial", "+", "-"];
    let points = semiclassical::bare_fixed_points(&params)
        .into_iter()
        .zip(labels)
        .map(|(x, label)| {
            let refined = dynamics::refine_fixed_point(rhs, x, 1e-13, 50).ok();
            FixedPointEntry {
                label: label.to_owned(),
                analytic: x,
                analytic_energy: model::energy(&x, &params),
                analytic_residual: rhs(&x).max_abs(),
                refined,
                refined_energy: refined.map(|r| model::energy(&r, &params)),
                refinement_shift: refined.map(|r| r.max_abs_diff(&x)),
            }
        })
        .collect();
    let summary = FixedPointsSummary {
        command: "fixed-points",
        config: cfg.clone(),
        phase: model::classify_phase(&params),
        damped_critical: semiclassical::damped_critical_values(&params).ok(),
        points,
        superradiant_minima: model::superradiant_minima(&params)
            .map(|(a, b)| vec![a, b])
            .unwrap_or_default(),
    };
    prepare_out_dir(cfg)?;
    write_json(&out_path(cfg, "fixed_points.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One cell of the phase diagram. Undefined quantities are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub g: f64,
    pub eps: f64,
    pub phase: Phase,
    pub e_normal: f64,
    pub e_sr: f64,
    pub g_c: f64,
    pub g_c_damped: f64,
    pub eps_c: f64,
}

pub fn sweep_cell(base: &ModelParams, g: f64, eps: f64) -> SweepCell {
    let p = ModelParams { g, eps, ..*base };
    let (g_c_damped, eps_c) = semiclassical::damped_critical_values(&p).unwrap_or((f64::NAN, f64::NAN));
    SweepCell {
        g,
        eps,
        phase: model::classify_phase(&p),
        e_normal: model::normal_minimum(&p).1,
        e_sr: model::superradiant_minima(&p).map_or(f64::NAN, |(m, _)| m.energy),
        g_c: model::critical_coupling_undamped(&p).unwrap_or(f64::NAN),
        g_c_damped,
        eps_c,
    }
}

/// Evaluates every cell of the grid, row-major in eps then g. Cells are
/// independent and computed in parallel; the order of the result is fixed.
pub fn sweep_grid(base: &ModelParams, grid: &SweepGrid) -> Vec<SweepCell> {
    let gs = grid.g.values();
    let cells: Vec<(f64, f64)> = grid
        .eps
        .values()
        .into_iter()
        .flat_map(|e| gs.iter().map(move |&g| (g, e)))
        .collect();
    cells.par_iter().map(|&(g, e)| sweep_cell(base, g, e)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub command: &'static str,
    pub config: RunConfig,
    pub cells: usize,
    pub superradiant_cells: usize,
    pub files: Vec<String>,
}

fn phase_label(p: Phase) -> &'static str {
    match p {
        Phase::Normal => "normal",
        Phase::Superradiant => "superradiant",
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepSummary, CliError> {
    let grid = cfg
        .sweep
        .ok_or_else(|| CliError::Config("sweep requires a [sweep] section or --g-range/--eps-range".into()))?;
    let cells = sweep_grid(&cfg.params, &grid);
    prepare_out_dir(cfg)?;
    let path = out_path(cfg, "sweep.csv");
    let columns = vec!["g", "eps", "phase", "e_normal", "e_sr", "g_c", "g_c_damped", "eps_c"];
    let mut w = create_file(&path)?;
    writeln!(w, "{}", columns.join(","))?;
    for c in &cells {
        writeln!(
            w,
            "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            c.g,
            c.eps,
            phase_label(c.phase),
            c.e_normal,
            c.e_sr,
            c.g_c,
            c.g_c_damped,
            c.eps_c
        )?;
    }
    w.flush()?;
    write_meta(cfg, "sweep", &path, columns)?;
    Ok(SweepSummary {
        command: "sweep",
        config: cfg.clone(),
        cells: cells.len(),
        superradiant_cells: cells.iter().filter(|c| c.phase == Phase::Superradiant).count(),
        files: vec![path.display().to_string()],
    })
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub command: &'static str,
    pub config: RunConfig,
    pub report: OracleReport,
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<OracleSummary, CliError> {
    let section = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::Config("oracle requires an [oracle] section".into()))?;
    let scenario = section.scenario(&cfg.params, cfg.run.branch)?;
    let report = oracle::run_scenario(&scenario)?;
    let summary = OracleSummary {
        command: "oracle",
        config: cfg.clone(),
        report,
    };
    prepare_out_dir(cfg)?;
    write_json(&out_path(cfg, "oracle.json"), &summary)?;
    Ok(summary)
}
