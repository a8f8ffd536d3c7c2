//! Closed-form physics of a current-biased junction: plasma frequency,
//! barrier height, level splitting, and the incoherent rates that enter the
//! effective Hamiltonians.
//!
//! All inputs and outputs are SI, with angular frequencies in rad/s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// CODATA 2018 exact constants and the derived quantities used here.
pub mod constants {
    use std::f64::consts::PI;

    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const HBAR: f64 = PLANCK / (2.0 * PI);
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    /// Φ0 = h / 2e.
    pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
    /// R_Q = h / 4e².
    pub const RESISTANCE_QUANTUM: f64 =
        PLANCK / (4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
}

use constants::{BOLTZMANN, ELEMENTARY_CHARGE, FLUX_QUANTUM, HBAR, RESISTANCE_QUANTUM};

/// TLS branch: `Ground` is |g⟩ (flag 0), `Excited` is |e⟩ (flag 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Ground,
    Excited,
}

impl Branch {
    pub fn flag(self) -> u8 {
        match self {
            Branch::Ground => 0,
            Branch::Excited => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Branch> {
        match flag {
            0 => Some(Branch::Ground),
            1 => Some(Branch::Excited),
            _ => None,
        }
    }
}

/// Junction level within the well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Zero,
    One,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::Zero => 0,
            Level::One => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TunnelingMode {
    /// Cubic-well closed form.
    #[default]
    Analytic,
    /// WKB period and action by numerical quadrature over the cubic well.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionParams {
    /// I0 (A).
    pub critical_current: f64,
    /// C (F).
    pub capacitance: f64,
    /// R (Ω).
    pub shunt_resistance: f64,
    /// T (K).
    pub temperature: f64,
    /// η: fractional critical-current suppression when the TLS is in |e⟩.
    pub tls_suppression: f64,
}

impl JunctionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, key: &str, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::domain("JunctionParams", format!("{key}: {msg}")))
            }
        };
        ok(self.critical_current > 0.0 && self.critical_current.is_finite(), "critical_current", "must be > 0")?;
        ok(self.capacitance > 0.0 && self.capacitance.is_finite(), "capacitance", "must be > 0")?;
        ok(self.shunt_resistance > 0.0 && self.shunt_resistance.is_finite(), "shunt_resistance", "must be > 0")?;
        ok(self.temperature >= 0.0 && self.temperature.is_finite(), "temperature", "must be >= 0")?;
        ok(
            (0.0..1.0).contains(&self.tls_suppression),
            "tls_suppression",
            "must satisfy 0 <= eta < 1",
        )
    }

    /// Critical current seen by the junction on the given TLS branch.
    pub fn effective_critical_current(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Ground => self.critical_current,
            Branch::Excited => self.critical_current * (1.0 - self.tls_suppression),
        }
    }

    /// Effective phase-particle mass C·(Φ0/2π)².
    pub fn phase_mass(&self) -> f64 {
        let phi = FLUX_QUANTUM / (2.0 * PI);
        self.capacitance * phi * phi
    }
}

/// Bias current I(t) = dc_start + ramp_rate·t plus the microwave I_μw cos ωt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDrive {
    /// Ramp start (A).
    pub dc_start: f64,
    /// dI/dt (A/s).
    pub ramp_rate: f64,
    /// I_μw (A).
    pub microwave_amplitude: f64,
    /// ω (rad/s).
    pub microwave_frequency: f64,
}

impl BiasDrive {
    pub fn validate(&self, p: &JunctionParams) -> Result<()> {
        if !(self.ramp_rate > 0.0 && self.ramp_rate.is_finite()) {
            return Err(Error::domain("BiasDrive", "ramp_rate must be > 0"));
        }
        if !(self.microwave_amplitude >= 0.0) {
            return Err(Error::domain("BiasDrive", "microwave_amplitude must be >= 0"));
        }
        if !(self.microwave_frequency > 0.0) {
            return Err(Error::domain("BiasDrive", "microwave_frequency must be > 0"));
        }
        if !(self.dc_start >= 0.0 && self.dc_start < p.critical_current) {
            return Err(Error::domain("BiasDrive", "dc_start must lie in [0, I0)"));
        }
        Ok(())
    }

    pub fn bias_at(&self, t: f64) -> f64 {
        self.dc_start + self.ramp_rate * t
    }
}

/// Normalized distance from the critical current, 1 − I/I0_eff.
fn bias_margin(p: &JunctionParams, i_dc: f64, branch: Branch, op: &'static str) -> Result<f64> {
    let i0 = p.effective_critical_current(branch);
    if !(i_dc >= 0.0) {
        return Err(Error::domain(op, format!("bias current {i_dc:e} A is negative")));
    }
    if i_dc > i0 {
        return Err(Error::domain(
            op,
            format!("bias current {i_dc:e} A exceeds critical current {i0:e} A"),
        ));
    }
    Ok(1.0 - i_dc / i0)
}

fn zero_bias_plasma(p: &JunctionParams, branch: Branch) -> f64 {
    let i0 = p.effective_critical_current(branch);
    2f64.powf(0.25) * (2.0 * PI * i0 / (FLUX_QUANTUM * p.capacitance)).sqrt()
}

fn zero_bias_barrier(p: &JunctionParams, branch: Branch) -> f64 {
    let i0 = p.effective_critical_current(branch);
    2.0 * 2f64.sqrt() * i0 * FLUX_QUANTUM / (3.0 * PI)
}

/// Small-oscillation frequency ω_p at the bottom of the well (rad/s).
pub fn plasma_frequency(p: &JunctionParams, i_dc: f64, branch: Branch) -> Result<f64> {
    let s = bias_margin(p, i_dc, branch, "plasma_frequency")?;
    Ok(zero_bias_plasma(p, branch) * s.sqrt().sqrt())
}

/// Barrier height ΔU of the washboard well (J).
pub fn barrier_height(p: &JunctionParams, i_dc: f64, branch: Branch) -> Result<f64> {
    let s = bias_margin(p, i_dc, branch, "barrier_height")?;
    Ok(zero_bias_barrier(p, branch) * s * s.sqrt())
}

/// ω10 = ω_p (1 − (5/36) ħω_p/ΔU), the |0⟩→|1⟩ transition frequency (rad/s).
pub fn level_splitting(p: &JunctionParams, i_dc: f64, branch: Branch) -> Result<f64> {
    let s = bias_margin(p, i_dc, branch, "level_splitting")?;
    let wp = zero_bias_plasma(p, branch) * s.sqrt().sqrt();
    let du = zero_bias_barrier(p, branch) * s * s.sqrt();
    if du <= 0.0 {
        return Err(Error::domain("level_splitting", "barrier has vanished"));
    }
    let w10 = wp * (1.0 - 5.0 / 36.0 * HBAR * wp / du);
    if w10 <= 0.0 {
        return Err(Error::domain(
            "level_splitting",
            format!("well too shallow for two levels at {i_dc:e} A"),
        ));
    }
    Ok(w10)
}

/// Largest bias margin 1 − I/I0 at which ω10 reaches zero.
fn vanishing_splitting_margin(p: &JunctionParams, branch: Branch) -> f64 {
    // ħω_p/ΔU = k·s^{-5/4}; ω10 = 0 where that ratio equals 36/5.
    let k = HBAR * zero_bias_plasma(p, branch) / zero_bias_barrier(p, branch);
    (k * 5.0 / 36.0).powf(0.8)
}

/// Bias current at which ω10 equals `omega_target`, by bisection.
pub fn resonance_current(p: &JunctionParams, omega_target: f64, branch: Branch) -> Result<f64> {
    let i0 = p.effective_critical_current(branch);
    let w_max = level_splitting(p, 0.0, branch)?;
    if !(omega_target > 0.0 && omega_target <= w_max) {
        return Err(Error::NoBracket(format!(
            "target {:.6e} rad/s outside attainable (0, {:.6e}]",
            omega_target, w_max
        )));
    }
    if omega_target == w_max {
        return Ok(0.0);
    }
    let s_min = vanishing_splitting_margin(p, branch);
    let mut lo = 0.0;
    let mut hi = i0 * (1.0 - s_min);
    // ω10 is strictly decreasing, so f(lo) > 0 > f(hi).
    let f = |i: f64| level_splitting(p, i, branch).map(|w| w - omega_target).unwrap_or(-omega_target);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo).abs(), f(hi).abs());
    let best = if flo <= fhi { lo } else { hi };
    let err = f(best).abs();
    if err > 1e-10 * omega_target {
        return Err(Error::NoBracket(format!(
            "bisection stalled with relative residual {:.2e}",
            err / omega_target
        )));
    }
    Ok(best)
}

/// Relaxation rate γ10 from the RCSJ shunt (1/s), using the harmonic-well
/// matrix element |⟨0|δ|1⟩|² = 2e²/(ħ ω10 C).
pub fn relaxation_rate(p: &JunctionParams, i_dc: f64) -> Result<f64> {
    let w10 = level_splitting(p, i_dc, Branch::Ground)?;
    Ok(relaxation_rate_at(p, w10))
}

pub(crate) fn relaxation_rate_at(p: &JunctionParams, w10: f64) -> f64 {
    let thermal = if p.temperature > 0.0 {
        let x = HBAR * w10 / (2.0 * BOLTZMANN * p.temperature);
        1.0 + 1.0 / x.tanh()
    } else {
        2.0
    };
    let matrix_element = 2.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (HBAR * w10 * p.capacitance);
    w10 / (2.0 * PI) * (RESISTANCE_QUANTUM / p.shunt_resistance) * thermal * matrix_element
}

/// Finite escape rate used once the barrier for a level has disappeared:
/// ω_p(I = 0)/2π on that branch.
pub fn saturated_rate(p: &JunctionParams, branch: Branch) -> f64 {
    zero_bias_plasma(p, branch) / (2.0 * PI)
}

/// ΔU_level/ħω_p at which the analytic prefactor-exponential peaks.
const ANALYTIC_PEAK: f64 = 1.0 / 14.4;

fn analytic_rate(wp: f64, x: f64) -> f64 {
    wp / (2.0 * PI) * (120.0 * PI * 7.2 * x).sqrt() * (-7.2 * x).exp()
}

/// WKB rate for the ground state (energy ħω_p/2) of a cubic well whose
/// barrier is `x` quanta ħω_p high.
fn quadrature_rate(wp: f64, x: f64) -> Result<f64> {
    // Well U(s) = ΔU (3s² − 2s³) with s = x/x0 and U''(0) = m ω_p².
    let eps = 0.5 / x;
    if eps >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let f = |s: f64| 3.0 * s * s - 2.0 * s * s * s;
    let root = |mut lo: f64, mut hi: f64, rising: bool| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < eps) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let sa = root(-0.5, 0.0, false);
    let sb = root(0.0, 1.0, true);
    let sc = root(1.0, 1.5, false);
    // Chebyshev-type substitution s = a + (b−a)(1 − cos φ)/2 removes the
    // inverse-square-root endpoint behaviour.
    let period_integral = quadrature::integrate(
        |phi| {
            let s = sa + (sb - sa) * (1.0 - phi.cos()) / 2.0;
            let ds = (sb - sa) / 2.0 * phi.sin();
            let gap = eps - f(s);
            if gap > 0.0 { ds / gap.sqrt() } else { 0.0 }
        },
        0.0,
        PI,
        1e-8,
    )?;
    let action_integral = quadrature::integrate(
        |phi| {
            let s = sb + (sc - sb) * (1.0 - phi.cos()) / 2.0;
            let ds = (sc - sb) / 2.0 * phi.sin();
            (f(s) - eps).max(0.0).sqrt() * ds
        },
        0.0,
        PI,
        1e-8,
    )?;
    // T = (2√3/ω_p)·∫ds/√(ε−f),  2S/ħ = 4√3·(ΔU/ħω_p)·∫√(f−ε) ds.
    let period = 2.0 * 3f64.sqrt() / wp * period_integral;
    let two_action = 4.0 * 3f64.sqrt() * x * action_integral;
    Ok((-two_action).exp() / period)
}

/// Escape rate Γ out of the well from junction level `level` on TLS branch
/// `branch` (1/s). Level 1 sees the barrier lowered by one quantum ħω_p.
/// Once that barrier is gone the rate saturates at [`saturated_rate`].
pub fn tunneling_rate(
    p: &JunctionParams,
    i_dc: f64,
    level: Level,
    branch: Branch,
    mode: TunnelingMode,
) -> Result<f64> {
    let [r0, r1] = branch_tunneling_rates_impl(p, i_dc, branch, mode, level == Level::One)?;
    Ok(match level {
        Level::Zero => r0,
        Level::One => r1,
    })
}

/// Level-0 and level-1 escape rates on one branch, sharing the ω_p and ΔU
/// evaluation. Values equal [`tunneling_rate`] bitwise.
pub fn branch_tunneling_rates(
    p: &JunctionParams,
    i_dc: f64,
    branch: Branch,
    mode: TunnelingMode,
) -> Result<[f64; 2]> {
    branch_tunneling_rates_impl(p, i_dc, branch, mode, true)
}

fn branch_tunneling_rates_impl(
    p: &JunctionParams,
    i_dc: f64,
    branch: Branch,
    mode: TunnelingMode,
    want_one: bool,
) -> Result<[f64; 2]> {
    if !(i_dc >= 0.0) {
        return Err(Error::domain("tunneling_rate", "bias current is negative"));
    }
    let cap = saturated_rate(p, branch);
    if i_dc >= p.effective_critical_current(branch) {
        return Ok([cap, cap]);
    }
    let wp = plasma_frequency(p, i_dc, branch)?;
    let du = barrier_height(p, i_dc, branch)?;
    let quanta = du / (HBAR * wp);
    let level_rate = |x: f64| -> Result<f64> {
        if x <= ANALYTIC_PEAK {
            return Ok(cap);
        }
        let rate = match mode {
            TunnelingMode::Analytic => analytic_rate(wp, x),
            TunnelingMode::Quadrature => quadrature_rate(wp, x)?,
        };
        Ok(rate.min(cap))
    };
    let r0 = level_rate(quanta)?;
    let r1 = if want_one { level_rate(quanta - 1.0)? } else { 0.0 };
    Ok([r0, r1])
}

/// All incoherent rates at one bias current.
///
/// `tunneling` is indexed by basis position |0g⟩, |1g⟩, |0e⟩, |1e⟩.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSet {
    /// γ10 (1/s), junction relaxation |1⟩ → |0⟩ on either branch.
    pub relaxation: f64,
    pub tunneling: [f64; 4],
    /// Optional TLS relaxation |e⟩ → |g⟩ (1/s); zero unless configured.
    pub tls_relaxation: f64,
}

impl RateSet {
    pub fn tunnel(&self, level: Level, branch: Branch) -> f64 {
        self.tunneling[basis_index(level, branch)]
    }

    pub fn all_zero() -> Self {
        RateSet::default()
    }

    pub fn without_tunneling(mut self) -> Self {
        self.tunneling = [0.0; 4];
        self
    }
}

/// Position of |level, branch⟩ in the ordered basis {0g, 1g, 0e, 1e}.
pub fn basis_index(level: Level, branch: Branch) -> usize {
    level.index() + 2 * branch.flag() as usize
}

/// Relaxation and the four tunneling rates at `i_dc`.
pub fn rate_set(p: &JunctionParams, i_dc: f64, mode: TunnelingMode) -> Result<RateSet> {
    let relaxation = relaxation_rate(p, i_dc)?;
    let [g0, g1] = branch_tunneling_rates(p, i_dc, Branch::Ground, mode)?;
    let [e0, e1] = branch_tunneling_rates(p, i_dc, Branch::Excited, mode)?;
    Ok(RateSet { relaxation, tunneling: [g0, g1, e0, e1], tls_relaxation: 0.0 })
}

/// Rabi frequency Ω_m = I_μw / √(2ħ ω10 C) (rad/s).
pub fn rabi_frequency(p: &JunctionParams, microwave_amplitude: f64, i_dc: f64) -> Result<f64> {
    let w10 = level_splitting(p, i_dc, Branch::Ground)?;
    Ok(microwave_amplitude / (2.0 * HBAR * w10 * p.capacitance).sqrt())
}

/// Microwave current amplitude that yields Rabi frequency `rabi` where
/// ω10 = `omega10`.
pub fn microwave_amplitude_for_rabi(p: &JunctionParams, rabi: f64, omega10: f64) -> f64 {
    rabi * (2.0 * HBAR * omega10 * p.capacitance).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_junction() -> JunctionParams {
        JunctionParams {
            critical_current: 35.9e-6,
            capacitance: 4e-12,
            shunt_resistance: 1.0 / (0.6e6 * 4e-12),
            temperature: 0.018,
            tls_suppression: 5e-4,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn resistance_quantum_value() {
        assert!(rel(RESISTANCE_QUANTUM, 6453.2) < 1e-3);
        // R_Q · 2e²/ħ = π exactly.
        let x = RESISTANCE_QUANTUM * 2.0 * ELEMENTARY_CHARGE.powi(2) / HBAR;
        assert!(rel(x, PI) < 1e-14);
    }

    #[test]
    fn plasma_frequency_examples() {
        let p = reference_junction();
        let wp = plasma_frequency(&p, 0.99 * p.critical_current, Branch::Ground).unwrap();
        // Independent evaluation: 2^{1/4}·sqrt(2π·35.9e-6/(Φ0·4e-12))·0.01^{1/4}/2π.
        assert!(rel(wp / (2.0 * PI), 9.883_868_8e9) < 1e-6, "{}", wp / (2.0 * PI));
        assert_eq!(plasma_frequency(&p, p.critical_current, Branch::Ground).unwrap(), 0.0);
        let mut p4 = p;
        p4.capacitance *= 4.0;
        let i = 35.5e-6;
        let ratio = plasma_frequency(&p4, i, Branch::Ground).unwrap()
            / plasma_frequency(&p, i, Branch::Ground).unwrap();
        assert!((ratio - 0.5).abs() < 1e-14);
        assert!(plasma_frequency(&p, 36.0e-6, Branch::Ground).is_err());
    }

    #[test]
    fn barrier_examples() {
        let p = reference_junction();
        let du = barrier_height(&p, 0.99 * p.critical_current, Branch::Ground).unwrap();
        assert!(rel(du, 2.227_839_78e-23) < 1e-6, "{du:e}");
        assert_eq!(barrier_height(&p, p.critical_current, Branch::Ground).unwrap(), 0.0);
        let du0 = barrier_height(&p, 0.0, Branch::Ground).unwrap();
        let expect = 2.0 * 2f64.sqrt() * p.critical_current * FLUX_QUANTUM / (3.0 * PI);
        assert_eq!(du0, expect);
    }

    #[test]
    fn excited_branch_uses_suppressed_critical_current() {
        let p = reference_junction();
        let i = 35.5e-6;
        let g = barrier_height(&p, i, Branch::Ground).unwrap();
        let e = barrier_height(&p, i, Branch::Excited).unwrap();
        assert!(e < g);
        let i0e = p.critical_current * (1.0 - p.tls_suppression);
        assert!(plasma_frequency(&p, i0e + 1e-12, Branch::Excited).is_err());
    }

    #[test]
    fn splitting_below_plasma_and_decreasing() {
        let p = reference_junction();
        let mut prev = f64::INFINITY;
        for k in 0..1000 {
            let i = 35.0e-6 + k as f64 * 0.85e-9;
            let w10 = level_splitting(&p, i, Branch::Ground).unwrap();
            assert!(w10 < plasma_frequency(&p, i, Branch::Ground).unwrap());
            assert!(w10 < prev);
            prev = w10;
        }
    }

    #[test]
    fn splitting_domain_error_near_critical_current() {
        let p = reference_junction();
        let s = vanishing_splitting_margin(&p, Branch::Ground);
        let i = p.critical_current * (1.0 - 0.5 * s);
        assert!(matches!(level_splitting(&p, i, Branch::Ground), Err(Error::Domain { .. })));
    }

    #[test]
    fn resonance_current_examples() {
        let p = reference_junction();
        let w = 2.0 * PI * 9.02e9;
        let i = resonance_current(&p, w, Branch::Ground).unwrap();
        assert!((i - 35.594_375_7e-6).abs() < 1e-12, "{i:e}");
        assert!(rel(level_splitting(&p, i, Branch::Ground).unwrap(), w) < 1e-10);
        let i_tls = resonance_current(&p, 2.0 * PI * 8.7e9, Branch::Ground).unwrap();
        assert!(i_tls > i);
        let start = 35.3e-6;
        let w_start = level_splitting(&p, start, Branch::Ground).unwrap();
        let back = resonance_current(&p, w_start, Branch::Ground).unwrap();
        assert!(rel(back, start) < 1e-9);
        assert!(matches!(resonance_current(&p, 2.0 * PI * 1e12, Branch::Ground), Err(Error::NoBracket(_))));
        assert!(matches!(resonance_current(&p, -1.0, Branch::Ground), Err(Error::NoBracket(_))));
    }

    #[test]
    fn relaxation_rate_examples() {
        let mut p = reference_junction();
        let i = 35.594e-6;
        p.temperature = 0.0;
        let rc = 1.0 / (p.shunt_resistance * p.capacitance);
        assert!(rel(relaxation_rate(&p, i).unwrap(), rc) < 1e-12);
        p.temperature = 0.018;
        let g = relaxation_rate(&p, i).unwrap();
        assert!(rel(g, 0.6e6) < 1e-6);
        let mut p2 = p;
        p2.shunt_resistance *= 2.0;
        assert!(rel(relaxation_rate(&p2, i).unwrap(), 0.5 * g) < 1e-14);
        // Inverse of the zero-temperature form: R = 1/(γ C) ≈ 417 kΩ.
        assert!((p.shunt_resistance - 416_666.666_666).abs() < 1e-3);
    }

    #[test]
    fn tunneling_examples() {
        let p = reference_junction();
        let i = resonance_current(&p, 2.0 * PI * 9.02e9, Branch::Ground).unwrap();
        let x = barrier_height(&p, i, Branch::Ground).unwrap()
            / (HBAR * plasma_frequency(&p, i, Branch::Ground).unwrap());
        assert!((x - 2.78).abs() < 0.01, "{x}");
        let g0 = tunneling_rate(&p, i, Level::Zero, Branch::Ground, TunnelingMode::Analytic).unwrap();
        assert!((1e3..1e4).contains(&g0), "{g0}");
        let g0q = tunneling_rate(&p, i, Level::Zero, Branch::Ground, TunnelingMode::Quadrature).unwrap();
        assert!((0.5..2.0).contains(&(g0 / g0q)));
        let g1 = tunneling_rate(&p, i, Level::One, Branch::Ground, TunnelingMode::Analytic).unwrap();
        assert!((3e2..4e3).contains(&(g1 / g0)), "{}", g1 / g0);
        let deep = tunneling_rate(&p, 30e-6, Level::Zero, Branch::Ground, TunnelingMode::Analytic).unwrap();
        assert!(deep < 1e-100);
    }

    #[test]
    fn tunneling_saturates_past_barrier() {
        let p = reference_junction();
        let cap = saturated_rate(&p, Branch::Ground);
        let g = tunneling_rate(&p, p.critical_current, Level::Zero, Branch::Ground, TunnelingMode::Analytic).unwrap();
        assert_eq!(g, cap);
        let g = tunneling_rate(&p, 40e-6, Level::One, Branch::Ground, TunnelingMode::Analytic).unwrap();
        assert_eq!(g, cap);
        assert!(cap.is_finite() && cap > 1e10);
    }

    #[test]
    fn rate_set_composition() {
        let mut p = reference_junction();
        let i = 35.6e-6;
        let r = rate_set(&p, i, TunnelingMode::Analytic).unwrap();
        assert_eq!(r.relaxation, relaxation_rate(&p, i).unwrap());
        for (lvl, br) in [(Level::Zero, Branch::Ground), (Level::One, Branch::Excited)] {
            assert_eq!(
                r.tunnel(lvl, br),
                tunneling_rate(&p, i, lvl, br, TunnelingMode::Analytic).unwrap()
            );
        }
        assert!(r.tunnel(Level::Zero, Branch::Excited) > r.tunnel(Level::Zero, Branch::Ground));
        assert!(r.tunnel(Level::One, Branch::Ground) > r.tunnel(Level::Zero, Branch::Ground));
        assert!(r.tunnel(Level::One, Branch::Excited) > r.tunnel(Level::Zero, Branch::Excited));
        p.tls_suppression = 0.0;
        let r = rate_set(&p, i, TunnelingMode::Analytic).unwrap();
        assert_eq!(r.tunneling[0], r.tunneling[2]);
        assert_eq!(r.tunneling[1], r.tunneling[3]);
    }

    #[test]
    fn rabi_examples() {
        let p = reference_junction();
        let i = resonance_current(&p, 2.0 * PI * 9.02e9, Branch::Ground).unwrap();
        assert_eq!(rabi_frequency(&p, 0.0, i).unwrap(), 0.0);
        let amp = microwave_amplitude_for_rabi(&p, 2.0 * PI * 10e6, 2.0 * PI * 9.02e9);
        assert!((amp - 0.434_466e-9).abs() < 1e-14, "{amp:e}");
        let back = rabi_frequency(&p, amp, i).unwrap();
        assert!(rel(back, 2.0 * PI * 10e6) < 1e-9);
        let twice = rabi_frequency(&p, 2.0 * amp, i).unwrap();
        assert!(rel(twice, 2.0 * back) < 1e-15);
    }
}
