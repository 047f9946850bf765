//! Run configuration: a TOML file with one table per model section, every
//! key optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use atomnum_core::budget::Preset;
use atomnum_core::dynamics::HeatingTable;
use atomnum_core::homodyne::HomodyneConfig;
use atomnum_core::{DetectionChain, ProbeConfig, StepModel, TrapParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: u64,
    pub replicates: usize,
    /// Not part of the config hash: moving the output does not change a run.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub probe: ProbeSection,
    pub detection: DetectionSection,
    pub coupling: CouplingSection,
    pub trap: TrapSection,
    pub filter: FilterSection,
    pub homodyne: HomodyneSection,
    pub calib: CalibSection,
    pub budget: BudgetSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            seed: 1,
            replicates: 1,
            output_dir: None,
            probe: ProbeSection::default(),
            detection: DetectionSection::default(),
            coupling: CouplingSection::default(),
            trap: TrapSection::default(),
            filter: FilterSection::default(),
            homodyne: HomodyneSection::default(),
            calib: CalibSection::default(),
            budget: BudgetSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub power_w: f64,
    pub detuning_halfwidths: f64,
    pub wavelength_m: f64,
    pub linewidth_hz: f64,
    pub saturation_power_w: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Self {
            power_w: p.power_watts,
            detuning_halfwidths: p.detuning_halfwidths,
            wavelength_m: p.wavelength_m,
            linewidth_hz: p.natural_linewidth_hz,
            saturation_power_w: atomnum_core::physics::DEFAULT_SATURATION_POWER_W,
        }
    }
}

/// Either the overall efficiency `q` or its factors; missing factors are ideal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_qe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub alpha_at: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { alpha_at: 0.024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    pub tau_bg_s: f64,
    /// Looked up from `heating_table` at the probe power when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_heat: Option<f64>,
    pub n_hf: f64,
    pub repump: bool,
    /// `[power_w, n_heat]` pairs.
    pub heating_table: Vec<[f64; 2]>,
}

impl Default for TrapSection {
    fn default() -> Self {
        let t = TrapParams::default();
        Self {
            tau_bg_s: t.tau_bg_s,
            n_heat: None,
            n_hf: t.n_hf,
            repump: t.repump_on,
            heating_table: HeatingTable::published()
                .entries
                .iter()
                .map(|&(p, n)| [p, n])
                .collect(),
        }
    }
}

/// Initial atom number: fixed, or drawn uniformly per replicate from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialAtoms {
    Fixed(u64),
    Range([u64; 2]),
}

impl InitialAtoms {
    pub fn bounds(&self) -> (u64, u64) {
        match *self {
            InitialAtoms::Fixed(n) => (n, n),
            InitialAtoms::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub n_max: usize,
    pub dt_s: f64,
    pub band_sigmas: f64,
    pub steps: usize,
    pub n0: InitialAtoms,
    /// Minimum Fano factors are searched only while the expected loss is below this.
    pub max_loss: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            n_max: 4399,
            dt_s: atomnum_core::dynamics::DEFAULT_DT_S,
            band_sigmas: atomnum_core::bayes::DEFAULT_BAND_SIGMAS,
            steps: 200,
            n0: InitialAtoms::Fixed(1600),
            max_loss: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomodyneSection {
    pub powers_w: Vec<f64>,
    pub beat_freq_hz: f64,
    pub sample_rate_hz: f64,
    /// LO photoelectron flux, 1/s.
    pub lo_flux: f64,
    pub shot_noise: bool,
    pub phase_rad: f64,
    /// Beat periods per demodulation window.
    pub window_periods: usize,
    pub windows: usize,
    /// Averaging factors 1, 2, 4, … up to `2^(octaves−1)`.
    pub octaves: u32,
}

impl Default for HomodyneSection {
    fn default() -> Self {
        let h = HomodyneConfig::default();
        Self {
            powers_w: vec![5e-12, 50e-12, 500e-12],
            beat_freq_hz: h.beat_freq_hz,
            sample_rate_hz: h.sample_rate_hz,
            lo_flux: h.lo_flux,
            shot_noise: h.shot_noise,
            phase_rad: 0.0,
            window_periods: 312,
            windows: 100_000,
            octaves: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibMode {
    /// Generate noisy transients from the model, then fit.
    Synthetic,
    /// Fit a measured transient read from `input`.
    Data,
    /// Atom number from the total scattered photons alone.
    Asymptote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSection {
    pub mode: CalibMode,
    pub n_atoms: f64,
    pub alpha_at: f64,
    pub power_w: f64,
    pub k_branch: f64,
    pub points: usize,
    pub dt_s: f64,
    /// Records averaged into one transient (sets the noise level).
    pub shots: usize,
    /// Independent runs averaged together; with `n_spread > 0` their atom
    /// numbers differ.
    pub runs: usize,
    /// Relative run-to-run standard deviation of the atom number.
    pub n_spread: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_scattered: Option<f64>,
}

impl Default for CalibSection {
    fn default() -> Self {
        Self {
            mode: CalibMode::Synthetic,
            n_atoms: 1606.0,
            alpha_at: 0.0164,
            power_w: 5e-12,
            k_branch: atomnum_core::calib::DEFAULT_K_BRANCH,
            points: 400,
            dt_s: 1e-6,
            shots: 200,
            runs: 1,
            n_spread: 0.0,
            input: None,
            total_scattered: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NSc,
    NAtoms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub preset: Preset,
    /// Total atoms; the tomography preset probes half of them.
    pub n_atoms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_loss: Option<f64>,
    /// Absent means an uninformative prior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepVariable>,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_points: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            preset: Preset::Preparation,
            n_atoms: 2500.0,
            alpha_at: None,
            n_loss: None,
            prior_var: None,
            sweep: None,
            sweep_min: 0.0,
            sweep_max: 3.0,
            sweep_points: 61,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n0: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n0: vec![1000, 1500, 2000, 2500],
        }
    }
}

/// A parsed configuration plus what is needed to report on it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Original text, for locating keys in error messages.
    pub source: String,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        Self {
            config: RunConfig::default(),
            source: String::new(),
            base_dir: PathBuf::from("."),
        }
    }

    /// Reads `path` (defaults when `None`) and applies `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let (source, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (text, dir)
            }
            None => (String::new(), PathBuf::from(".")),
        };
        Self::from_str(&source, base_dir, overrides)
    }

    pub fn from_str(source: &str, base_dir: PathBuf, overrides: &[String]) -> CliResult<Self> {
        let mut config: RunConfig = toml::from_str(source).map_err(|e| CliError::Config(e.to_string()))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = toml::from_str(source).map_err(|e| CliError::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            config = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("after --set overrides: {}", e.message())))?;
        }
        Ok(Self {
            config,
            source: source.to_owned(),
            base_dir,
        })
    }

    /// Runs every section's checks, reporting the first failure with the
    /// line of the offending key when it appears in the file.
    pub fn validate(&self) -> CliResult<()> {
        self.config.check().map_err(|issue| {
            let line = locate(&self.source, &issue.key);
            let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
            CliError::Config(format!("{at}`{}`: {}", issue.key, issue.reason))
        })
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form section.key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for s in sections {
        cursor = cursor
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{s}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// 1-based line of `section.key` (or a top-level `key`) in TOML text.
pub fn locate(source: &str, dotted: &str) -> Option<usize> {
    let (section, key) = match dotted.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, dotted),
    };
    let mut current: Option<String> = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_owned());
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        if lhs.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    section.and_then(|s| {
        source
            .lines()
            .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']').trim() == s)
            .map(|i| i + 1)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub reason: String,
}

fn issue(key: &str, reason: impl Into<String>) -> Issue {
    Issue {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

fn require(ok: bool, key: &str, reason: &str) -> Result<(), Issue> {
    if ok {
        Ok(())
    } else {
        Err(issue(key, reason))
    }
}

/// Maps a model-level parameter error onto the config key of `section`.
fn model_check(section: &str, rename: &[(&str, &str)], r: atomnum_core::Result<()>) -> Result<(), Issue> {
    r.map_err(|e| match e {
        atomnum_core::Error::InvalidParameter { name, reason } => {
            let key = rename.iter().find(|(from, _)| *from == name).map_or(name, |(_, to)| to);
            issue(&format!("{section}.{key}"), reason)
        }
        other => issue(section, other.to_string()),
    })
}

impl RunConfig {
    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig {
            detuning_halfwidths: self.probe.detuning_halfwidths,
            power_watts: self.probe.power_w,
            wavelength_m: self.probe.wavelength_m,
            natural_linewidth_hz: self.probe.linewidth_hz,
        }
    }

    pub fn chain(&self) -> DetectionChain {
        let d = &self.detection;
        match d.q {
            Some(q) => DetectionChain {
                detector_qe: q,
                path_loss: 0.0,
                mode_overlap: 1.0,
                noise_ratio: 1.0,
            },
            None if d.detector_qe.is_none()
                && d.path_loss.is_none()
                && d.mode_overlap.is_none()
                && d.noise_ratio.is_none() =>
            {
                DetectionChain::default()
            }
            None => DetectionChain {
                detector_qe: d.detector_qe.unwrap_or(1.0),
                path_loss: d.path_loss.unwrap_or(0.0),
                mode_overlap: d.mode_overlap.unwrap_or(1.0),
                noise_ratio: d.noise_ratio.unwrap_or(1.0),
            },
        }
    }

    pub fn q(&self) -> f64 {
        self.chain().q()
    }

    pub fn heating_table(&self) -> HeatingTable {
        HeatingTable {
            entries: self.trap.heating_table.iter().map(|e| (e[0], e[1])).collect(),
        }
    }

    /// `n_heat` as given, or from the heating table at the probe power.
    pub fn n_heat(&self) -> f64 {
        self.trap
            .n_heat
            .or_else(|| self.heating_table().lookup(self.probe.power_w))
            .unwrap_or(f64::NAN)
    }

    pub fn trap(&self) -> TrapParams {
        TrapParams {
            tau_bg_s: self.trap.tau_bg_s,
            n_heat: self.n_heat(),
            n_hf: self.trap.n_hf,
            repump_on: self.trap.repump,
        }
    }

    pub fn homodyne(&self) -> HomodyneConfig {
        HomodyneConfig {
            beat_freq_hz: self.homodyne.beat_freq_hz,
            sample_rate_hz: self.homodyne.sample_rate_hz,
            lo_flux: self.homodyne.lo_flux,
            shot_noise: self.homodyne.shot_noise,
            lo_phase_diffusion: 0.0,
        }
    }

    pub fn step_model(&self) -> atomnum_core::Result<StepModel> {
        StepModel::derive(
            &self.probe(),
            &self.chain(),
            self.coupling.alpha_at,
            &self.trap(),
            self.filter.dt_s,
        )
    }

    pub fn budget_alpha(&self) -> f64 {
        self.budget.alpha_at.unwrap_or(self.coupling.alpha_at)
    }

    /// Hash of the effective configuration (hex SHA-256 of its JSON form).
    pub fn hash(&self, extra: &[u8]) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.update(extra);
        hex::encode(h.finalize())
    }

    pub fn check(&self) -> Result<(), Issue> {
        require(self.replicates >= 1, "replicates", "must be >= 1")?;

        model_check(
            "probe",
            &[("power_watts", "power_w"), ("natural_linewidth_hz", "linewidth_hz")],
            self.probe().validate(),
        )?;
        require(self.probe.saturation_power_w > 0.0, "probe.saturation_power_w", "must be > 0")?;

        let d = &self.detection;
        let has_factors = d.detector_qe.is_some() || d.path_loss.is_some() || d.mode_overlap.is_some() || d.noise_ratio.is_some();
        if let Some(q) = d.q {
            require(!has_factors, "detection.q", "give either q or the individual factors, not both")?;
            require(q > 0.0 && q <= 1.0, "detection.q", "must be in (0, 1]")?;
        }
        model_check("detection", &[], self.chain().validate())?;
        require(self.q() > 0.0, "detection", "overall efficiency q must be > 0")?;

        require(self.coupling.alpha_at > 0.0, "coupling.alpha_at", "must be > 0")?;

        for e in &self.trap.heating_table {
            require(e[0] > 0.0 && e[1] > 0.0, "trap.heating_table", "entries must be positive [power_w, n_heat] pairs")?;
        }
        require(
            self.trap.n_heat.is_some() || !self.trap.heating_table.is_empty(),
            "trap.n_heat",
            "required when trap.heating_table is empty",
        )?;
        model_check("trap", &[("repump_on", "repump")], self.trap().validate())?;

        let f = &self.filter;
        require(f.n_max >= 1, "filter.n_max", "must be >= 1")?;
        require(f.dt_s > 0.0, "filter.dt_s", "must be > 0")?;
        require(f.band_sigmas > 0.0, "filter.band_sigmas", "must be > 0")?;
        require(f.steps >= 1, "filter.steps", "must be >= 1")?;
        require(f.max_loss > 0.0 && f.max_loss <= 1.0, "filter.max_loss", "must be in (0, 1]")?;
        let (lo, hi) = f.n0.bounds();
        require(lo <= hi, "filter.n0", "range must be [low, high] with low <= high")?;
        require(hi as usize <= f.n_max, "filter.n0", "must not exceed filter.n_max")?;
        self.step_model().map_err(|e| match e {
            atomnum_core::Error::StepTooLarge { .. } => issue("filter.dt_s", e.to_string()),
            other => issue("filter", other.to_string()),
        })?;

        let h = &self.homodyne;
        require(!h.powers_w.is_empty(), "homodyne.powers_w", "at least one probe power is required")?;
        require(h.powers_w.iter().all(|p| *p > 0.0), "homodyne.powers_w", "powers must be > 0")?;
        require(h.window_periods >= 1, "homodyne.window_periods", "must be >= 1")?;
        require(h.windows >= 16, "homodyne.windows", "need at least 16 windows (a zero-length record has no Allan deviation)")?;
        require(h.octaves >= 1, "homodyne.octaves", "must be >= 1")?;
        require(h.phase_rad.is_finite(), "homodyne.phase_rad", "must be finite")?;
        model_check("homodyne", &[], self.homodyne().validate())?;

        let c = &self.calib;
        require(c.n_atoms > 0.0, "calib.n_atoms", "must be > 0")?;
        require(c.alpha_at > 0.0, "calib.alpha_at", "must be > 0")?;
        require(c.power_w > 0.0, "calib.power_w", "must be > 0")?;
        require(c.k_branch > 0.0, "calib.k_branch", "must be > 0")?;
        require(c.points >= 20, "calib.points", "need at least 20 points")?;
        require(c.dt_s > 0.0, "calib.dt_s", "must be > 0")?;
        require(c.shots >= 1, "calib.shots", "must be >= 1")?;
        require(c.runs >= 1, "calib.runs", "must be >= 1")?;
        require(c.n_spread >= 0.0 && c.n_spread < 0.5, "calib.n_spread", "must be in [0, 0.5)")?;
        match c.mode {
            CalibMode::Data => require(c.input.is_some(), "calib.input", "data mode needs an input CSV")?,
            CalibMode::Asymptote => {
                require(
                    c.input.is_some() || c.total_scattered.is_some(),
                    "calib.total_scattered",
                    "asymptote mode needs total_scattered or an input CSV",
                )?;
                if let Some(t) = c.total_scattered {
                    require(t >= 0.0, "calib.total_scattered", "must be >= 0")?;
                }
            }
            CalibMode::Synthetic => {}
        }

        let b = &self.budget;
        require(b.n_atoms > 0.0, "budget.n_atoms", "must be > 0")?;
        if let Some(a) = b.alpha_at {
            require(a > 0.0, "budget.alpha_at", "must be > 0")?;
        }
        if let Some(n) = b.n_loss {
            require(n > 0.0, "budget.n_loss", "must be > 0")?;
        }
        if let Some(v) = b.prior_var {
            require(v > 0.0, "budget.prior_var", "must be > 0")?;
        }
        if let Some(var) = b.sweep {
            require(b.sweep_points >= 2, "budget.sweep_points", "must be >= 2")?;
            require(b.sweep_max > b.sweep_min, "budget.sweep_max", "must exceed sweep_min")?;
            require(b.sweep_min >= 0.0, "budget.sweep_min", "must be >= 0")?;
            if var == SweepVariable::NAtoms {
                require(b.sweep_min > 0.0, "budget.sweep_min", "atom numbers must be > 0")?;
            }
        }

        require(!self.sweep.n0.is_empty(), "sweep.n0", "at least one atom number is required")?;
        require(
            self.sweep.n0.iter().all(|&n| n >= 1 && n as usize <= f.n_max),
            "sweep.n0",
            "atom numbers must be in 1..=filter.n_max",
        )?;
        Ok(())
    }
}
