//! Lab-frame and rotating-frame Hamiltonians for the bare junction (basis
//! {|0⟩, |1⟩}) and the junction–TLS system (basis {|0g⟩, |1g⟩, |0e⟩, |1e⟩}),
//! plus their non-Hermitian effective forms.
//!
//! Matrices hold H/ħ in rad/s.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{basis, norm_sqr, ComplexMatrix, Matrix2, Matrix4, State};
use crate::physics::{self, constants::HBAR, BiasDrive, Branch, JunctionParams, RateSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    /// ω_TLS (rad/s).
    pub frequency: f64,
    /// Ω_c (rad/s), junction–TLS coupling.
    pub coupling: f64,
}

impl TlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) {
            return Err(Error::domain("TlsParams", "frequency must be > 0"));
        }
        if !(self.coupling >= 0.0) {
            return Err(Error::domain("TlsParams", "coupling must be >= 0"));
        }
        let mhz = self.coupling / (2.0 * PI * 1e6);
        if !((20.0 - 1e-9)..=(200.0 + 1e-9)).contains(&mhz) && mhz > 0.0 {
            log::warn!("coupling {mhz:.1} MHz is outside the typical 20-200 MHz range");
        }
        Ok(())
    }

    /// A TLS that never couples to the junction.
    pub fn decoupled(frequency: f64) -> Self {
        TlsParams { frequency, coupling: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Explicit cos ωt drive.
    Lab,
    /// Frame rotating at the drive frequency, counter-rotating terms dropped.
    #[default]
    Rwa,
}

/// Ratios that must stay small for the rotating-wave approximation:
/// Ω_m/ω, |ω10 − ω|/ω, Ω_c/ω, |ω_TLS − ω|/ω. Logs a warning above 0.1.
pub fn rwa_validity(
    p: &JunctionParams,
    tls: Option<&TlsParams>,
    d: &BiasDrive,
    i_dc: f64,
) -> Result<f64> {
    let w = d.microwave_frequency;
    let w10 = physics::level_splitting(p, i_dc, Branch::Ground)?;
    let rabi = physics::rabi_frequency(p, d.microwave_amplitude, i_dc)?;
    let mut worst = (rabi / w).max((w10 - w).abs() / w);
    if let Some(t) = tls {
        worst = worst.max(t.coupling / w).max((t.frequency - w).abs() / w);
    }
    if worst > 0.1 {
        log::warn!("rotating-wave approximation questionable: ratio {worst:.3} > 0.1");
    }
    Ok(worst)
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Drive-independent and drive-proportional parts of the Hamiltonian at a
/// bias current, so per-stage evaluation in time only needs cos ωt.
#[derive(Debug, Clone, Copy)]
pub struct SplitHamiltonian<const N: usize> {
    pub static_part: ComplexMatrix<N>,
    /// Off-diagonal drive pattern scaled by Ω_m.
    pub drive_part: ComplexMatrix<N>,
    pub frame: Frame,
    pub drive_frequency: f64,
}

impl<const N: usize> SplitHamiltonian<N> {
    pub fn at(&self, t: f64) -> ComplexMatrix<N> {
        let factor = match self.frame {
            Frame::Lab => (self.drive_frequency * t).cos(),
            Frame::Rwa => 0.5,
        };
        let mut h = self.static_part;
        for i in 0..N {
            for j in 0..N {
                let d = self.drive_part.0[i][j];
                if d.re != 0.0 {
                    h.0[i][j] += d * factor;
                }
            }
        }
        h
    }
}

pub(crate) fn split_2(p: &JunctionParams, d: &BiasDrive, i_dc: f64, frame: Frame) -> Result<SplitHamiltonian<2>> {
    let w10 = physics::level_splitting(p, i_dc, Branch::Ground)?;
    let rabi = d.microwave_amplitude / (2.0 * HBAR * w10 * p.capacitance).sqrt();
    let upper = match frame {
        Frame::Lab => w10,
        Frame::Rwa => w10 - d.microwave_frequency,
    };
    let static_part = Matrix2::from_real_diagonal([0.0, upper]);
    let mut drive_part = Matrix2::zeros();
    drive_part.0[0][1] = re(rabi);
    drive_part.0[1][0] = re(rabi);
    Ok(SplitHamiltonian { static_part, drive_part, frame, drive_frequency: d.microwave_frequency })
}

pub(crate) fn split_4(
    p: &JunctionParams,
    tls: &TlsParams,
    d: &BiasDrive,
    i_dc: f64,
    frame: Frame,
) -> Result<SplitHamiltonian<4>> {
    let w10 = physics::level_splitting(p, i_dc, Branch::Ground)?;
    let rabi = d.microwave_amplitude / (2.0 * HBAR * w10 * p.capacitance).sqrt();
    // Excitation numbers 0, 1, 1, 2 across {0g, 1g, 0e, 1e}.
    let shift = match frame {
        Frame::Lab => 0.0,
        Frame::Rwa => d.microwave_frequency,
    };
    let mut static_part = Matrix4::from_real_diagonal([
        0.0,
        w10 - shift,
        tls.frequency - shift,
        w10 + tls.frequency - 2.0 * shift,
    ]);
    static_part.0[1][2] = re(tls.coupling);
    static_part.0[2][1] = re(tls.coupling);
    let mut drive_part = Matrix4::zeros();
    for (a, b) in [(0, 1), (2, 3)] {
        drive_part.0[a][b] = re(rabi);
        drive_part.0[b][a] = re(rabi);
    }
    Ok(SplitHamiltonian { static_part, drive_part, frame, drive_frequency: d.microwave_frequency })
}

/// Bare-junction Hamiltonian H/ħ at bias `i_dc` and time `t`.
///
/// Lab: [[0, Ω_m cos ωt], [Ω_m cos ωt, ω10]]. RWA: [[0, Ω_m/2], [Ω_m/2, ω10 − ω]].
pub fn hamiltonian_2(p: &JunctionParams, d: &BiasDrive, i_dc: f64, t: f64, frame: Frame) -> Result<Matrix2> {
    Ok(split_2(p, d, i_dc, frame)?.at(t))
}

/// Junction–TLS Hamiltonian H/ħ in the basis {|0g⟩, |1g⟩, |0e⟩, |1e⟩}.
pub fn hamiltonian_4(
    p: &JunctionParams,
    tls: &TlsParams,
    d: &BiasDrive,
    i_dc: f64,
    t: f64,
    frame: Frame,
) -> Result<Matrix4> {
    Ok(split_4(p, tls, d, i_dc, frame)?.at(t))
}

/// Decay coefficients on the diagonal of the effective Hamiltonian, i.e.
/// H_eff = H − (i/2)·diag(decay).
pub fn decay_diagonal<const N: usize>(r: &RateSet) -> [f64; N] {
    let mut out = [0.0; N];
    for (k, slot) in out.iter_mut().enumerate() {
        let excited_junction = k % 2 == 1;
        let excited_tls = k >= 2;
        *slot = r.tunneling[k]
            + if excited_junction { r.relaxation } else { 0.0 }
            + if excited_tls { r.tls_relaxation } else { 0.0 };
    }
    out
}

pub fn effective_hamiltonian<const N: usize>(h: &ComplexMatrix<N>, r: &RateSet) -> ComplexMatrix<N> {
    let decay = decay_diagonal::<N>(r);
    let mut out = *h;
    for k in 0..N {
        out.0[k][k] -= Complex64::new(0.0, 0.5 * decay[k]);
    }
    out
}

/// H − (i/2)(γ10 + Γ1)|1⟩⟨1| − (i/2)Γ0|0⟩⟨0|.
pub fn effective_hamiltonian_2(h: &Matrix2, r: &RateSet) -> Matrix2 {
    effective_hamiltonian(h, r)
}

/// Four-level effective Hamiltonian with decays Γ0g, γ10+Γ1g, Γ0e, γ10+Γ1e.
pub fn effective_hamiltonian_4(h: &Matrix4, r: &RateSet) -> Matrix4 {
    effective_hamiltonian(h, r)
}

/// Driven |0g⟩→|1g⟩ transition rate Ω_m²γ / (2(Δ² + γ²)) with
/// γ = (γ10 + Γ0g + Γ1g)/2.
pub fn resonant_transition_rate(rabi: f64, gamma10: f64, gamma_0g: f64, gamma_1g: f64, detuning: f64) -> f64 {
    if rabi == 0.0 {
        return 0.0;
    }
    let g = 0.5 * (gamma10 + gamma_0g + gamma_1g);
    rabi * rabi * g / (2.0 * (detuning * detuning + g * g))
}

/// Asymptotic probability of staying diabatic through an avoided crossing
/// with gap 2ħΩ_c swept at energy rate υ (J/s).
pub fn landau_zener_probability(coupling: f64, sweep_rate: f64) -> Result<f64> {
    if !(sweep_rate > 0.0) {
        return Err(Error::domain("landau_zener_probability", "sweep rate must be > 0"));
    }
    if !(coupling >= 0.0) {
        return Err(Error::domain("landau_zener_probability", "coupling must be >= 0"));
    }
    Ok((-2.0 * PI * HBAR * coupling * coupling / sweep_rate).exp().clamp(0.0, 1.0))
}

/// Bias current of the |1g⟩–|0e⟩ avoided crossing, ω10 = ω_TLS.
pub fn crossing_current(p: &JunctionParams, tls: &TlsParams) -> Result<f64> {
    physics::resonance_current(p, tls.frequency, Branch::Ground)
}

/// υ = ħ |dω10/dI| · dI/dt at the |1g⟩–|0e⟩ crossing (J/s).
pub fn sweep_rate(p: &JunctionParams, tls: &TlsParams, d: &BiasDrive) -> Result<f64> {
    let ic = crossing_current(p, tls)?;
    if ic < d.dc_start {
        return Err(Error::NoBracket(format!(
            "crossing at {ic:e} A lies below the ramp start {:e} A",
            d.dc_start
        )));
    }
    let h = ic * 1e-6;
    let up = physics::level_splitting(p, ic + h, Branch::Ground)?;
    let down = physics::level_splitting(p, ic - h, Branch::Ground)?;
    let slope = (up - down) / (2.0 * h);
    Ok(HBAR * slope.abs() * d.ramp_rate)
}

/// Probability of remaining in the initial diabatic state after sweeping
/// H/ħ = [[a t/2, Ω_c], [Ω_c, −a t/2]] (a = υ/ħ) through the crossing,
/// by direct RK4 integration. Returns `None` when the crossing is so
/// adiabatic (2πħΩ_c²/υ > 40) that the required step count is impractical.
pub fn simulate_crossing(coupling: f64, sweep_rate: f64) -> Result<Option<f64>> {
    if !(sweep_rate > 0.0) {
        return Err(Error::domain("simulate_crossing", "sweep rate must be > 0"));
    }
    if coupling == 0.0 {
        return Ok(Some(1.0));
    }
    // Dimensionless time τ = Ω_c t; diabatic splitting ε(τ) = τ/λ.
    let lambda = HBAR * coupling * coupling / sweep_rate;
    if 2.0 * PI * lambda > 40.0 {
        return Ok(None);
    }
    // Off-diagonal admixture at the window edges is 1/ε ≤ 1/500.
    let tau_max = (500.0 * lambda).max(50.0);
    let dt = 0.1 / (0.5 * tau_max / lambda + 1.0);
    let steps = (2.0 * tau_max / dt).ceil() as usize;
    let dt = 2.0 * tau_max / steps as f64;
    let h_at = |tau: f64| -> Matrix2 {
        let e = 0.5 * tau / lambda;
        let mut m = Matrix2::from_real_diagonal([e, -e]);
        m.0[0][1] = re(1.0);
        m.0[1][0] = re(1.0);
        m
    };
    let mut psi: State<2> = basis(0);
    let mut tau = -tau_max;
    let minus_i = Complex64::new(0.0, -1.0);
    for _ in 0..steps {
        let f = |t: f64, v: &State<2>| {
            let hv = h_at(t).mul_vec(v);
            [minus_i * hv[0], minus_i * hv[1]]
        };
        let k1 = f(tau, &psi);
        let s1 = [psi[0] + k1[0] * (0.5 * dt), psi[1] + k1[1] * (0.5 * dt)];
        let k2 = f(tau + 0.5 * dt, &s1);
        let s2 = [psi[0] + k2[0] * (0.5 * dt), psi[1] + k2[1] * (0.5 * dt)];
        let k3 = f(tau + 0.5 * dt, &s2);
        let s3 = [psi[0] + k3[0] * dt, psi[1] + k3[1] * dt];
        let k4 = f(tau + dt, &s3);
        for i in 0..2 {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        tau += dt;
    }
    Ok(Some(psi[0].norm_sqr() / norm_sqr(&psi)))
}
