//! Run configuration: a sectioned `key = value` file (TOML) in laboratory
//! units, command-line overrides, defaults, validation, and conversion to
//! the SI types used by the simulation.
//!
//! Sections and keys:
//!
//! ```text
//! [junction] I0_uA, C_pF, R_kOhm, T_K, eta
//! [tls]      enabled, f_TLS_GHz, coupling_MHz, relaxation_per_us
//! [drive]    f_drive_GHz, rabi_MHz | I_uw_nA, ramp_rate_uA_per_s,
//!            dc_start_uA, repetition_period_ms
//! [engine]   dimension, frame, master_seed, ramps, trajectories, dt_max_ns,
//!            dt_rate_cap, integrator, phase_per_step, initial_state,
//!            initial_flag, tunneling, max_steps
//! [output]   directory, bin_width_uA, master_grid_points, master_tolerance
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::engine::{EngineConfig, InitialState, Integrator};
use crate::error::{Error, Result};
use crate::hamiltonian::{Frame, TlsParams};
use crate::model::JunctionModel;
use crate::oracle::MasterConfig;
use crate::physics::{self, BiasDrive, Branch, JunctionParams, TunnelingMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct JunctionSection {
    pub I0_uA: f64,
    pub C_pF: f64,
    pub R_kOhm: f64,
    pub T_K: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct TlsSection {
    pub enabled: bool,
    pub f_TLS_GHz: f64,
    pub coupling_MHz: f64,
    pub relaxation_per_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DriveSection {
    pub f_drive_GHz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_MHz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub I_uw_nA: Option<f64>,
    pub ramp_rate_uA_per_s: f64,
    pub dc_start_uA: f64,
    pub repetition_period_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSection {
    pub dimension: usize,
    pub frame: Frame,
    pub master_seed: u64,
    pub ramps: usize,
    pub trajectories: usize,
    pub dt_max_ns: f64,
    pub dt_rate_cap: f64,
    pub integrator: Integrator,
    pub phase_per_step: f64,
    pub initial_state: InitialState,
    pub initial_flag: u8,
    pub tunneling: String,
    pub max_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct OutputSection {
    pub directory: String,
    pub bin_width_uA: f64,
    pub master_grid_points: usize,
    pub master_tolerance: f64,
}

/// Fully resolved configuration in laboratory units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub junction: JunctionSection,
    pub tls: TlsSection,
    pub drive: DriveSection,
    pub engine: EngineSection,
    pub output: OutputSection,
}

/// Shunt resistance giving γ10 = 0.6 μs⁻¹ at C = 4 pF in the T → 0 limit.
pub const DEFAULT_R_KOHM: f64 = 1.0 / (0.6e6 * 4e-12) / 1e3;

const KEYS: &[(&str, &[&str])] = &[
    ("junction", &["I0_uA", "C_pF", "R_kOhm", "T_K", "eta"]),
    ("tls", &["enabled", "f_TLS_GHz", "coupling_MHz", "relaxation_per_us"]),
    ("drive", &["f_drive_GHz", "rabi_MHz", "I_uw_nA", "ramp_rate_uA_per_s", "dc_start_uA", "repetition_period_ms"]),
    (
        "engine",
        &[
            "dimension",
            "frame",
            "master_seed",
            "ramps",
            "trajectories",
            "dt_max_ns",
            "dt_rate_cap",
            "integrator",
            "phase_per_step",
            "initial_state",
            "initial_flag",
            "tunneling",
            "max_steps",
        ],
    ),
    ("output", &["directory", "bin_width_uA", "master_grid_points", "master_tolerance"]),
];

/// Reads keys from one section, logging every default that is applied.
struct Section<'t> {
    name: &'static str,
    table: Option<&'t Table>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn note_default(&self, key: &str, shown: impl std::fmt::Display) {
        log::info!("default applied: {}.{key} = {shown}", self.name);
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(Error::config(self.key(key), "expected a number")),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or_else(|| {
            self.note_default(key, default);
            default
        }))
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => {
                self.note_default(key, default);
                Ok(default)
            }
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(Error::config(self.key(key), "expected a non-negative integer")),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => {
                self.note_default(key, default);
                Ok(default)
            }
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(Error::config(self.key(key), "expected true or false")),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.raw(key) {
            None => {
                self.note_default(key, default);
                Ok(default.to_string())
            }
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::config(self.key(key), "expected a string")),
        }
    }

    fn choice<T: Copy>(&self, key: &str, default: &str, options: &[(&str, T)]) -> Result<T> {
        let s = self.string(key, default)?;
        options.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::config(self.key(key), format!("expected one of {}", names.join(", ")))
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// First line of every output file that embeds its configuration.
pub const EMBED_MARKER: &str = "# # jjswitch";

/// Output files carry their configuration as `# `-prefixed header lines
/// after `EMBED_MARKER`; such files load as the embedded configuration.
fn embedded_config(text: &str) -> Option<String> {
    if !text.starts_with(EMBED_MARKER) {
        return None;
    }
    Some(text.lines().take_while(|l| l.starts_with('#')).map(|l| l.strip_prefix("# ").unwrap_or("")).collect::<Vec<_>>().join("\n"))
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })
}

/// Apply `section.key=value`; the value is read as a TOML value, falling
/// back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::config(path.trim(), "override key must look like section.key"))?;
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), parsed);
            Ok(())
        }
        _ => Err(Error::config(section, "not a section")),
    }
}

fn check_keys(table: &Table) -> Result<()> {
    for (section, value) in table {
        let known = KEYS
            .iter()
            .find(|(s, _)| s == section)
            .ok_or_else(|| Error::config(section.as_str(), "unknown section"))?
            .1;
        let Value::Table(t) = value else {
            return Err(Error::config(section.as_str(), "expected a [section]"));
        };
        for key in t.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::config(format!("{section}.{key}"), "unknown key"));
            }
        }
    }
    Ok(())
}

/// Parse configuration text plus overrides into a validated `RunConfig`.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let owned;
    let text = match embedded_config(text) {
        Some(t) => {
            owned = t;
            owned.as_str()
        }
        None => text,
    };
    let mut table = parse_table(text)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    check_keys(&table)?;
    let sec = |name: &'static str| Section { name, table: table.get(name).and_then(Value::as_table) };

    let j = sec("junction");
    let junction = JunctionSection {
        I0_uA: j.f64("I0_uA", 35.9)?,
        C_pF: j.f64("C_pF", 4.0)?,
        R_kOhm: j.f64("R_kOhm", DEFAULT_R_KOHM)?,
        T_K: j.f64("T_K", 0.018)?,
        eta: j.f64("eta", 5e-3)?,
    };
    let t = sec("tls");
    let tls = TlsSection {
        enabled: t.bool("enabled", true)?,
        f_TLS_GHz: t.f64("f_TLS_GHz", 8.7)?,
        coupling_MHz: t.f64("coupling_MHz", 200.0)?,
        relaxation_per_us: t.f64("relaxation_per_us", 0.0)?,
    };
    let d = sec("drive");
    let (rabi, iuw) = (d.opt_f64("rabi_MHz")?, d.opt_f64("I_uw_nA")?);
    if rabi.is_some() && iuw.is_some() {
        return Err(Error::config("drive.rabi_MHz", "give exactly one of rabi_MHz and I_uw_nA"));
    }
    let rabi = if rabi.is_none() && iuw.is_none() {
        d.note_default("rabi_MHz", 10.0);
        Some(10.0)
    } else {
        rabi
    };
    let drive = DriveSection {
        f_drive_GHz: d.f64("f_drive_GHz", 9.02)?,
        rabi_MHz: rabi,
        I_uw_nA: iuw,
        ramp_rate_uA_per_s: d.f64("ramp_rate_uA_per_s", 4.5e3)?,
        dc_start_uA: d.f64("dc_start_uA", 35.3)?,
        repetition_period_ms: d.f64("repetition_period_ms", 10.0)?,
    };
    let e = sec("engine");
    let default_dim = if tls.enabled { 4 } else { 2 };
    let engine = EngineSection {
        dimension: e.u64("dimension", default_dim)? as usize,
        frame: e.choice("frame", "rwa", &[("rwa", Frame::Rwa), ("lab", Frame::Lab)])?,
        master_seed: e.u64("master_seed", 20_080_915)?,
        ramps: e.u64("ramps", 2000)? as usize,
        trajectories: e.u64("trajectories", 10_000)? as usize,
        dt_max_ns: e.f64("dt_max_ns", 1.0)?,
        dt_rate_cap: e.f64("dt_rate_cap", 0.05)?,
        integrator: e.choice("integrator", "exponential", &[("exponential", Integrator::Exponential), ("rk4", Integrator::Rk4)])?,
        phase_per_step: e.f64("phase_per_step", 0.25)?,
        initial_state: e.choice("initial_state", "dressed", &[("dressed", InitialState::Dressed), ("bare", InitialState::Bare)])?,
        initial_flag: e.u64("initial_flag", 0)?.min(u8::MAX as u64) as u8,
        tunneling: e.string("tunneling", "analytic")?,
        max_steps: e.u64("max_steps", 1_000_000_000)?,
    };
    let o = sec("output");
    let output = OutputSection {
        directory: o.string("directory", "out")?,
        bin_width_uA: o.f64("bin_width_uA", 0.01)?,
        master_grid_points: o.u64("master_grid_points", 2000)? as usize,
        master_tolerance: o.f64("master_tolerance", 1e-8)?,
    };
    let cfg = RunConfig { junction, tls, drive, engine, output };
    cfg.validate()?;
    Ok(cfg)
}

/// Read and parse a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}

fn require(cond: bool, key: &str, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl RunConfig {
    /// Resolved defaults with no file and no overrides.
    pub fn defaults() -> RunConfig {
        parse_config("", &[]).expect("built-in defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let j = &self.junction;
        require(positive(j.I0_uA), "junction.I0_uA", "must be > 0")?;
        require(positive(j.C_pF), "junction.C_pF", "must be > 0")?;
        require(positive(j.R_kOhm), "junction.R_kOhm", "must be > 0")?;
        require(j.T_K >= 0.0 && j.T_K.is_finite(), "junction.T_K", "must be >= 0")?;
        require((0.0..=0.1).contains(&j.eta), "eta", "must lie in [0, 0.1]")?;
        let t = &self.tls;
        require(positive(t.f_TLS_GHz), "tls.f_TLS_GHz", "must be > 0")?;
        require(t.coupling_MHz >= 0.0 && t.coupling_MHz.is_finite(), "tls.coupling_MHz", "must be >= 0")?;
        require(t.relaxation_per_us >= 0.0, "tls.relaxation_per_us", "must be >= 0")?;
        let d = &self.drive;
        require(positive(d.f_drive_GHz), "drive.f_drive_GHz", "must be > 0")?;
        require(d.rabi_MHz.is_some() != d.I_uw_nA.is_some(), "drive.rabi_MHz", "give exactly one of rabi_MHz and I_uw_nA")?;
        if let Some(r) = d.rabi_MHz {
            require(r >= 0.0 && r.is_finite(), "drive.rabi_MHz", "must be >= 0")?;
        }
        if let Some(i) = d.I_uw_nA {
            require(i >= 0.0 && i.is_finite(), "drive.I_uw_nA", "must be >= 0")?;
        }
        require(positive(d.ramp_rate_uA_per_s), "drive.ramp_rate_uA_per_s", "must be > 0")?;
        require(d.dc_start_uA >= 0.0 && d.dc_start_uA < j.I0_uA, "drive.dc_start_uA", "must lie in [0, I0_uA)")?;
        require(positive(d.repetition_period_ms), "drive.repetition_period_ms", "must be > 0")?;
        let e = &self.engine;
        require(e.dimension == 2 || e.dimension == 4, "engine.dimension", "must be 2 or 4")?;
        require(!(e.dimension == 2 && t.enabled), "engine.dimension", "the TLS needs dimension 4; set tls.enabled = false for 2")?;
        require(e.ramps >= 1, "engine.ramps", "must be >= 1")?;
        require(e.trajectories >= 1, "engine.trajectories", "must be >= 1")?;
        require(e.initial_flag <= 1, "engine.initial_flag", "must be 0 or 1")?;
        require(!(e.dimension == 2 && e.initial_flag == 1), "engine.initial_flag", "dimension 2 has no excited TLS branch")?;
        require(matches!(e.tunneling.as_str(), "analytic" | "quadrature"), "engine.tunneling", "expected analytic or quadrature")?;
        let o = &self.output;
        require(positive(o.bin_width_uA), "output.bin_width_uA", "must be > 0")?;
        require(o.master_grid_points >= 2, "output.master_grid_points", "must be >= 2")?;
        self.engine_config().validate()?;
        self.master_config().validate()?;
        self.model()?;
        Ok(())
    }

    pub fn junction_params(&self) -> JunctionParams {
        let j = &self.junction;
        JunctionParams {
            critical_current: j.I0_uA * 1e-6,
            capacitance: j.C_pF * 1e-12,
            shunt_resistance: j.R_kOhm * 1e3,
            temperature: j.T_K,
            tls_suppression: j.eta,
        }
    }

    pub fn tls_params(&self) -> TlsParams {
        TlsParams {
            frequency: 2.0 * PI * self.tls.f_TLS_GHz * 1e9,
            coupling: if self.tls.enabled { 2.0 * PI * self.tls.coupling_MHz * 1e6 } else { 0.0 },
        }
    }

    /// Microwave amplitude (A); a Rabi frequency is converted at the
    /// current where ω10 equals the drive frequency.
    pub fn microwave_amplitude(&self) -> f64 {
        let w = 2.0 * PI * self.drive.f_drive_GHz * 1e9;
        match (self.drive.rabi_MHz, self.drive.I_uw_nA) {
            (_, Some(i)) => i * 1e-9,
            (Some(r), None) => physics::microwave_amplitude_for_rabi(&self.junction_params(), 2.0 * PI * r * 1e6, w),
            (None, None) => 0.0,
        }
    }

    pub fn bias_drive(&self) -> BiasDrive {
        BiasDrive {
            dc_start: self.drive.dc_start_uA * 1e-6,
            ramp_rate: self.drive.ramp_rate_uA_per_s * 1e-6,
            microwave_amplitude: self.microwave_amplitude(),
            microwave_frequency: 2.0 * PI * self.drive.f_drive_GHz * 1e9,
        }
    }

    pub fn tunneling_mode(&self) -> TunnelingMode {
        if self.engine.tunneling == "quadrature" {
            TunnelingMode::Quadrature
        } else {
            TunnelingMode::Analytic
        }
    }

    pub fn model(&self) -> Result<JunctionModel> {
        let tls = (self.engine.dimension == 4).then(|| self.tls_params());
        let mut m = JunctionModel::new(self.junction_params(), tls, self.bias_drive(), self.engine.frame);
        m.tunneling_mode = self.tunneling_mode();
        m.tls_relaxation = self.tls.relaxation_per_us * 1e6;
        m.validate()?;
        Ok(m)
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            dt_max: e.dt_max_ns * 1e-9,
            dt_rate_cap: e.dt_rate_cap,
            integrator: e.integrator,
            phase_per_step: e.phase_per_step,
            master_seed: e.master_seed,
            ramps: e.ramps,
            max_steps: e.max_steps,
            initial_flag: Branch::from_flag(e.initial_flag).unwrap_or(Branch::Ground),
            initial_state: e.initial_state,
        }
    }

    pub fn master_config(&self) -> MasterConfig {
        MasterConfig {
            grid_points: self.output.master_grid_points,
            tolerance: self.output.master_tolerance,
            initial_state: self.engine.initial_state,
            ..MasterConfig::default()
        }
    }

    /// Time between ramp starts (s), used to convert ramp counts to time.
    pub fn ramp_period(&self) -> f64 {
        self.drive.repetition_period_ms * 1e-3
    }

    /// The resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes")
    }
}
