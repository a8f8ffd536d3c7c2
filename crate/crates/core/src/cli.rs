//! Command implementations behind the `jjswitch` binary: each runs a
//! simulation from a resolved `RunConfig` and writes deterministic CSV and
//! JSON files into an output directory.
//!
//! Every CSV starts with `EMBED_MARKER` followed by the resolved
//! configuration as `# `-prefixed TOML, so an output file can be passed back
//! as `--config` to reproduce it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, BranchStats};
use crate::config::{RunConfig, EMBED_MARKER};
use crate::engine::{self, SwitchRecord};
use crate::error::{Error, Result};
use crate::hamiltonian;
use crate::model::JunctionModel;
use crate::oracle::{self, SwitchingDistribution};
use crate::physics::Branch;

/// Fixed-width rendering with 12 significant digits; scientific notation
/// outside [1e-4, 1e12).
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return "nan".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        format!("{x:.11e}")
    }
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn opt12(x: f64) -> Option<f64> {
    x.is_finite().then(|| round12(x))
}

/// Seed for sweep point `k`; point 0 keeps the master seed.
pub fn derived_seed(master_seed: u64, k: usize) -> u64 {
    master_seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Run `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

fn header(cfg: &RunConfig, file: &str) -> String {
    let mut s = format!("{EMBED_MARKER} {file}\n");
    for line in cfg.to_toml().lines() {
        let _ = writeln!(s, "# {line}");
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    s.push('\n');
    write_file(dir, name, &s)
}

fn run_sequence(cfg: &RunConfig, model: &JunctionModel) -> Result<Vec<SwitchRecord>> {
    let ec = cfg.engine_config();
    match cfg.engine.dimension {
        2 => engine::run_sequence::<2, _>(model, &ec),
        _ => engine::run_sequence::<4, _>(model, &ec),
    }
}

fn run_ensemble(cfg: &RunConfig, model: &JunctionModel) -> Result<Vec<SwitchRecord>> {
    let ec = cfg.engine_config();
    match cfg.engine.dimension {
        2 => engine::run_ensemble::<2, _>(model, &ec, cfg.engine.trajectories),
        _ => engine::run_ensemble::<4, _>(model, &ec, cfg.engine.trajectories),
    }
}

fn integrate_master(cfg: &RunConfig, model: &JunctionModel) -> Result<SwitchingDistribution> {
    let mc = cfg.master_config();
    match cfg.engine.dimension {
        2 => oracle::integrate_master::<2, _>(model, &mc),
        _ => oracle::integrate_master::<4, _>(model, &mc),
    }
}

fn records_csv(cfg: &RunConfig, records: &[SwitchRecord]) -> String {
    let mut s = header(cfg, "records.csv");
    s.push_str("ramp_index,I_s_uA,flag,n_relax_events\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.ramp_index, fmt12(r.switching_current * 1e6), r.flag_at_switch.flag(), r.relax_events());
    }
    s
}

fn labels_csv(cfg: &RunConfig, stats: &BranchStats) -> String {
    let mut s = header(cfg, "labels.csv");
    s.push_str("ramp_index,branch\n");
    for (k, l) in stats.labels.iter().enumerate() {
        let _ = writeln!(s, "{k},{}", l.as_str());
    }
    s
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct BranchSummary {
    pub threshold_uA: f64,
    pub mean_dwell_upper: Option<f64>,
    pub mean_dwell_lower: Option<f64>,
    pub mean_dwell: f64,
    pub jumps: usize,
    pub jump_rate_per_s: f64,
    pub mean_Is_upper_uA: f64,
    pub mean_Is_lower_uA: f64,
    pub label_fidelity: f64,
    pub dwell_upper: Vec<usize>,
    pub dwell_lower: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub command: &'static str,
    pub master_seed: u64,
    pub ramps: usize,
    pub flag1_fraction: f64,
    /// "bimodal", or the reason classification failed.
    pub classification: String,
    pub branches: Option<BranchSummary>,
    pub config: RunConfig,
}

fn branch_summary(cfg: &RunConfig, records: &[SwitchRecord], s: &BranchStats) -> Result<BranchSummary> {
    let hits = s.labels.iter().zip(records).filter(|(l, r)| l.expected_flag() == r.flag_at_switch).count();
    Ok(BranchSummary {
        threshold_uA: round12(s.threshold * 1e6),
        mean_dwell_upper: opt12(s.mean_dwell_upper),
        mean_dwell_lower: opt12(s.mean_dwell_lower),
        mean_dwell: round12(s.mean_dwell()),
        jumps: s.jumps,
        jump_rate_per_s: round12(analysis::jump_rate(s, cfg.ramp_period())?),
        mean_Is_upper_uA: round12(s.mean_is_upper * 1e6),
        mean_Is_lower_uA: round12(s.mean_is_lower * 1e6),
        label_fidelity: round12(hits as f64 / records.len() as f64),
        dwell_upper: s.dwell_upper.clone(),
        dwell_lower: s.dwell_lower.clone(),
    })
}

/// Telegraph sequence: records.csv, labels.csv (when bimodal), summary.json.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let model = cfg.model()?;
    hamiltonian::rwa_validity(&model.junction, model.tls.as_ref(), &model.drive, model.drive.dc_start)?;
    let records = run_sequence(cfg, &model)?;
    write_file(out, "records.csv", &records_csv(cfg, &records))?;
    let flag1 = records.iter().filter(|r| r.flag_at_switch == Branch::Excited).count();
    let (classification, branches) = match analysis::classify_branches(&records) {
        Ok(stats) => {
            write_file(out, "labels.csv", &labels_csv(cfg, &stats))?;
            ("bimodal".to_string(), Some(branch_summary(cfg, &records, &stats)?))
        }
        Err(Error::Unimodal(why)) => {
            log::warn!("switching currents are unimodal ({why}); labels.csv omitted");
            let stale = out.join("labels.csv");
            if stale.exists() {
                fs::remove_file(stale)?;
            }
            (format!("unimodal: {why}"), None)
        }
        Err(e) => return Err(e),
    };
    let summary = SimulateSummary {
        command: "simulate",
        master_seed: cfg.engine.master_seed,
        ramps: records.len(),
        flag1_fraction: round12(flag1 as f64 / records.len() as f64),
        classification,
        branches,
        config: cfg.clone(),
    };
    write_json(out, "summary.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct EnsembleSummary {
    pub command: &'static str,
    pub master_seed: u64,
    pub trajectories: usize,
    pub bin_width_uA: f64,
    pub tv_distance: f64,
    pub mean_Is_uA: f64,
    pub histogram_mode_uA: f64,
    pub master_mode_uA: f64,
    pub master_peaks_uA: Vec<f64>,
    pub master_escaped: f64,
    pub config: RunConfig,
}

/// Independent ramps vs the master equation: histogram.csv, master.csv,
/// summary.json.
pub fn cmd_ensemble(cfg: &RunConfig, out: &Path) -> Result<EnsembleSummary> {
    let model = cfg.model()?;
    let records = run_ensemble(cfg, &model)?;
    let dist = integrate_master(cfg, &model)?;
    let hist = analysis::histogram(&records, cfg.output.bin_width_uA * 1e-6)?;
    let tv = oracle::distribution_distance(&hist, &dist)?;

    let mut h = header(cfg, "histogram.csv");
    h.push_str("bin_lo_uA,bin_hi_uA,count\n");
    for (k, c) in hist.counts.iter().enumerate() {
        let _ = writeln!(h, "{},{},{c}", fmt12(hist.bin_edges[k] * 1e6), fmt12(hist.bin_edges[k + 1] * 1e6));
    }
    write_file(out, "histogram.csv", &h)?;

    let mut m = header(cfg, "master.csv");
    m.push_str("I_uA,density_per_uA,survival\n");
    for k in 0..dist.currents.len() {
        let _ = writeln!(m, "{},{},{}", fmt12(dist.currents[k] * 1e6), fmt12(dist.density[k] * 1e-6), fmt12(dist.survival[k]));
    }
    write_file(out, "master.csv", &m)?;

    let mode_bin = (0..hist.counts.len()).max_by_key(|&k| (hist.counts[k], std::cmp::Reverse(k))).unwrap_or(0);
    let mean = records.iter().map(|r| r.switching_current).sum::<f64>() / records.len() as f64;
    let summary = EnsembleSummary {
        command: "ensemble",
        master_seed: cfg.engine.master_seed,
        trajectories: records.len(),
        bin_width_uA: cfg.output.bin_width_uA,
        tv_distance: round12(tv),
        mean_Is_uA: round12(mean * 1e6),
        histogram_mode_uA: round12(hist.centers()[mode_bin] * 1e6),
        master_mode_uA: round12(dist.mode() * 1e6),
        master_peaks_uA: dist.peaks(0.01).into_iter().map(|x| round12(x * 1e6)).collect(),
        master_escaped: round12(dist.escaped()),
        config: cfg.clone(),
    };
    write_json(out, "summary.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    RabiMhz,
    RampRate,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "rabi_MHz" | "rabi" => Ok(SweepAxis::RabiMhz),
            "ramp_rate" | "ramp_rate_uA_per_s" => Ok(SweepAxis::RampRate),
            _ => Err(Error::config("axis", "expected rabi_MHz or ramp_rate")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::RabiMhz => "rabi_MHz",
            SweepAxis::RampRate => "ramp_rate_uA_per_s",
        }
    }

    /// Copy of `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &RunConfig, value: f64) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::RabiMhz => {
                c.drive.rabi_MHz = Some(value);
                c.drive.I_uw_nA = None;
            }
            SweepAxis::RampRate => c.drive.ramp_rate_uA_per_s = value,
        }
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub master_seed: u64,
    pub directory: String,
    pub summary: SimulateSummary,
}

/// One telegraph simulation per axis value with per-value seeds; point k
/// writes into `point_k/` and a row of sweep.csv.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::config("values", "need at least one sweep value"));
    }
    let configs: Vec<RunConfig> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut c = axis.apply(cfg, v);
            c.engine.master_seed = derived_seed(cfg.engine.master_seed, k);
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    // Simulations fan out; files are written afterwards in index order.
    let results: Vec<Result<(Vec<SwitchRecord>, JunctionModel)>> = configs
        .par_iter()
        .map(|c| {
            let m = c.model()?;
            Ok((run_sequence(c, &m)?, m))
        })
        .collect();
    let mut points = Vec::with_capacity(values.len());
    let mut csv = header(cfg, "sweep.csv");
    let _ = writeln!(csv, "# axis = {}", axis.name());
    csv.push_str("value,mean_dwell_upper,mean_dwell_lower,jumps,mean_Is_upper,mean_Is_lower\n");
    for (k, (c, res)) in configs.iter().zip(results).enumerate() {
        let (records, _) = res?;
        let dir = out.join(format!("point_{k}"));
        write_file(&dir, "records.csv", &records_csv(c, &records))?;
        let flag1 = records.iter().filter(|r| r.flag_at_switch == Branch::Excited).count();
        let (classification, branches) = match analysis::classify_branches(&records) {
            Ok(stats) => {
                write_file(&dir, "labels.csv", &labels_csv(c, &stats))?;
                ("bimodal".to_string(), Some(branch_summary(c, &records, &stats)?))
            }
            Err(Error::Unimodal(why)) => (format!("unimodal: {why}"), None),
            Err(e) => return Err(e),
        };
        let summary = SimulateSummary {
            command: "simulate",
            master_seed: c.engine.master_seed,
            ramps: records.len(),
            flag1_fraction: round12(flag1 as f64 / records.len() as f64),
            classification,
            branches,
            config: c.clone(),
        };
        write_json(&dir, "summary.json", &summary)?;
        let cell = |x: Option<f64>| x.map(fmt12).unwrap_or_default();
        let b = summary.branches.as_ref();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt12(values[k]),
            cell(b.and_then(|b| b.mean_dwell_upper)),
            cell(b.and_then(|b| b.mean_dwell_lower)),
            b.map(|b| b.jumps.to_string()).unwrap_or_default(),
            cell(b.map(|b| b.mean_Is_upper_uA)),
            cell(b.map(|b| b.mean_Is_lower_uA)),
        );
        points.push(SweepPoint { value: values[k], master_seed: c.engine.master_seed, directory: format!("point_{k}"), summary });
    }
    write_file(out, "sweep.csv", &csv)?;
    Ok(points)
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct LzReport {
    pub command: &'static str,
    pub crossing_current_uA: f64,
    pub sweep_rate_J_per_s: f64,
    pub coupling_MHz: f64,
    pub p_lz: f64,
    /// Numerically integrated crossing probability; absent when the
    /// crossing is too adiabatic to integrate in reasonable time.
    pub p_numeric: Option<f64>,
    pub regime: &'static str,
    pub config: RunConfig,
}

/// Landau–Zener analysis of the |1g⟩–|0e⟩ crossing: lz.json.
pub fn cmd_lz(cfg: &RunConfig, out: &Path) -> Result<LzReport> {
    let p = cfg.junction_params();
    let tls = hamiltonian::TlsParams { coupling: 2.0 * std::f64::consts::PI * cfg.tls.coupling_MHz * 1e6, ..cfg.tls_params() };
    let d = cfg.bias_drive();
    let ic = hamiltonian::crossing_current(&p, &tls)?;
    let v = hamiltonian::sweep_rate(&p, &tls, &d)?;
    let plz = hamiltonian::landau_zener_probability(tls.coupling, v)?;
    let numeric = hamiltonian::simulate_crossing(tls.coupling, v)?;
    let regime = if plz < 0.01 {
        "adiabatic regime"
    } else if plz > 0.99 {
        "diabatic regime"
    } else {
        "intermediate regime"
    };
    let report = LzReport {
        command: "lz",
        crossing_current_uA: round12(ic * 1e6),
        sweep_rate_J_per_s: round12(v),
        coupling_MHz: cfg.tls.coupling_MHz,
        p_lz: round12(plz),
        p_numeric: numeric.map(round12),
        regime,
        config: cfg.clone(),
    };
    write_json(out, "lz.json", &report)?;
    Ok(report)
}

/// Machine-readable error record printed on failure.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }).to_string()
}
