//! Lindblad master-equation reference: deterministic density-matrix
//! evolution along the ramp, the switching-current distribution it implies,
//! and the distance between that distribution and a trajectory histogram.
//!
//! Relaxation enters as Lindblad dissipators; escape enters only through
//! anticommutator loss terms, so the trace is the survival probability.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::Histogram;
use crate::engine::{self, channels, EngineConfig, InitialState};
use crate::error::{Error, Result};
use crate::hamiltonian::effective_hamiltonian;
use crate::matrix::ComplexMatrix;
use crate::model::Dynamics;
use crate::physics::{Branch, RateSet};

pub type DensityMatrix<const N: usize> = ComplexMatrix<N>;

const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// dρ/dt = −i[H, ρ] + Σ_c r_c (L_c ρ L_c† − ½{L_c†L_c, ρ}) − ½ Σ_k Γ_k {P_k, ρ}
/// with H in rad/s. Relaxation maps are |0b⟩⟨1b| (and |l g⟩⟨l e| when TLS
/// relaxation is configured); escaped population is not refed.
pub fn lindblad_rhs<const N: usize>(rho: &DensityMatrix<N>, h: &ComplexMatrix<N>, r: &RateSet) -> DensityMatrix<N> {
    let heff = effective_hamiltonian(h, r);
    let mut out = (heff * *rho - *rho * heff.adjoint()).scale(MINUS_I);
    for ch in channels::<N>() {
        if let Some(t) = ch.target() {
            let s = ch.source();
            out.0[t][t] += rho.0[s][s] * ch.rate(r);
        }
    }
    out
}

/// Escape flux Σ_k Γ_k ρ_kk (1/s).
pub fn escape_flux<const N: usize>(rho: &DensityMatrix<N>, r: &RateSet) -> f64 {
    (0..N).map(|k| r.tunneling[k] * rho.0[k][k].re).sum()
}

pub fn trace_real<const N: usize>(rho: &DensityMatrix<N>) -> f64 {
    rho.trace().re
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterConfig {
    /// Number of uniform output points in I_dc.
    pub grid_points: usize,
    /// Upper end of the output grid (A); `None` means the bias limit.
    pub i_end: Option<f64>,
    /// Relative local error per step; the absolute floor is 10⁻³ of it.
    pub tolerance: f64,
    pub initial_state: InitialState,
    /// Integration stops once tr ρ falls below this.
    pub survival_floor: f64,
    /// Debug switch: when false, coherences are zeroed after every step.
    pub keep_coherences: bool,
    pub max_steps: u64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            grid_points: 2000,
            i_end: None,
            tolerance: 1e-8,
            initial_state: InitialState::Dressed,
            survival_floor: 1e-14,
            keep_coherences: true,
            max_steps: 200_000_000,
        }
    }
}

impl MasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::config("grid_points", "need at least 2 points"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-2) {
            return Err(Error::config("tolerance", "must lie in (0, 1e-2)"));
        }
        if !(self.survival_floor >= 0.0) {
            return Err(Error::config("survival_floor", "must be >= 0"));
        }
        Ok(())
    }
}

/// Dormand–Prince 5(4) coefficients.
mod dp {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Fifth-order weights minus embedded fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// Adaptive Dormand–Prince integrator for matrix-valued ODEs.
struct Dopri<'f, const N: usize> {
    f: &'f dyn Fn(f64, &ComplexMatrix<N>) -> Result<ComplexMatrix<N>>,
    rtol: f64,
    atol: f64,
    h: f64,
    steps: u64,
    max_steps: u64,
    keep_coherences: bool,
}

impl<const N: usize> Dopri<'_, N> {
    fn combine(y: &ComplexMatrix<N>, k: &[ComplexMatrix<N>], w: &[f64], h: f64) -> ComplexMatrix<N> {
        let mut out = *y;
        for (kj, &wj) in k.iter().zip(w) {
            if wj != 0.0 {
                out = out + kj.scale(Complex64::new(h * wj, 0.0));
            }
        }
        out
    }

    /// One attempted step; returns the fifth-order solution and the scaled
    /// error norm (accept when ≤ 1).
    fn attempt(&self, t: f64, y: &ComplexMatrix<N>, h: f64) -> Result<(ComplexMatrix<N>, f64)> {
        let mut k: Vec<ComplexMatrix<N>> = Vec::with_capacity(7);
        k.push((self.f)(t, y)?);
        for s in 1..7 {
            let ys = Self::combine(y, &k, &dp::A[s][..s], h);
            k.push((self.f)(t + dp::C[s] * h, &ys)?);
        }
        let y5 = Self::combine(y, &k[..6], &dp::A[6][..6], h);
        let err = Self::combine(&ComplexMatrix::zeros(), &k, &dp::E, h);
        let mut worst: f64 = 0.0;
        for i in 0..N {
            for j in 0..N {
                let scale = self.atol + self.rtol * y.0[i][j].norm().max(y5.0[i][j].norm());
                worst = worst.max(err.0[i][j].norm() / scale);
            }
        }
        Ok((y5, worst))
    }

    /// Integrate from `t` to `t_end`, landing exactly on `t_end`.
    fn advance(&mut self, mut t: f64, mut y: ComplexMatrix<N>, t_end: f64) -> Result<ComplexMatrix<N>> {
        while t < t_end {
            let remaining = t_end - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            let (y_new, err) = self.attempt(t, &y, h)?;
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(Error::Tolerance(format!("step budget of {} exhausted", self.max_steps)));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && err.is_finite() {
                t = if last { t_end } else { t + h };
                y = y_new;
                if !self.keep_coherences {
                    for i in 0..N {
                        for j in 0..N {
                            if i != j {
                                y.0[i][j] = Complex64::new(0.0, 0.0);
                            }
                        }
                    }
                }
                if !(last && factor < 1.0) {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor.min(0.5);
                if !(self.h > remaining.max(t.abs()) * 1e-15) {
                    return Err(Error::Tolerance(format!("step size underflow at t = {t:e} s")));
                }
            }
        }
        Ok(y)
    }
}

fn generator<'m, const N: usize, D: Dynamics<N>>(
    model: &'m D,
) -> impl Fn(f64, &ComplexMatrix<N>) -> Result<ComplexMatrix<N>> + 'm {
    move |t, rho| {
        let i = model.bias(t);
        let h = model.hamiltonian(i)?.at(t);
        let r = model.rates(i)?;
        Ok(lindblad_rhs(rho, &h, &r))
    }
}

/// Starting density matrix for `flag`, matching the trajectory engine's
/// initial state under the same `InitialState` choice.
pub fn initial_density<const N: usize, D: Dynamics<N>>(
    model: &D,
    initial: InitialState,
    flag: Branch,
) -> Result<DensityMatrix<N>> {
    let cfg = EngineConfig { initial_state: initial, ..EngineConfig::default() };
    let s = engine::initial_state(model, &cfg, flag)?;
    Ok(ComplexMatrix::outer(&s.amplitudes, &s.amplitudes))
}

/// ρ(t) at each of the ascending `times`, starting from `rho0` at t = 0.
pub fn evolve_density<const N: usize, D: Dynamics<N>>(
    model: &D,
    rho0: DensityMatrix<N>,
    times: &[f64],
    cfg: &MasterConfig,
) -> Result<Vec<DensityMatrix<N>>> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::domain("evolve_density", "times must be ascending and >= 0"));
    }
    let f = generator(model);
    let mut solver = Dopri { f: &f, rtol: cfg.tolerance, atol: cfg.tolerance * 1e-3, h: 1e-12, steps: 0, max_steps: cfg.max_steps, keep_coherences: cfg.keep_coherences };
    let mut t = 0.0;
    let mut rho = rho0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        rho = solver.advance(t, rho, target)?;
        t = target;
        out.push(rho);
    }
    Ok(out)
}

/// Switching-current distribution on a uniform current grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingDistribution {
    /// I_dc grid (A).
    pub currents: Vec<f64>,
    /// p(I) (1/A).
    pub density: Vec<f64>,
    /// S(I) = tr ρ.
    pub survival: Vec<f64>,
}

impl SwitchingDistribution {
    /// Probability that escape has happened by the end of the grid.
    pub fn escaped(&self) -> f64 {
        1.0 - self.survival.last().copied().unwrap_or(1.0)
    }

    /// Current of the density maximum.
    pub fn mode(&self) -> f64 {
        let k = (0..self.density.len()).max_by(|&a, &b| self.density[a].total_cmp(&self.density[b])).unwrap_or(0);
        self.currents[k]
    }

    /// Local maxima of the density above `fraction` of the global maximum.
    pub fn peaks(&self, fraction: f64) -> Vec<f64> {
        let p = &self.density;
        let top = p.iter().copied().fold(0.0, f64::max);
        (1..p.len().saturating_sub(1))
            .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1] && p[k] > fraction * top)
            .map(|k| self.currents[k])
            .collect()
    }

    /// S(I) by cubic Hermite interpolation with S' = −p; constant outside
    /// the grid.
    pub fn survival_at(&self, i: f64) -> f64 {
        let x = &self.currents;
        let n = x.len();
        if i <= x[0] {
            return self.survival[0];
        }
        if i >= x[n - 1] {
            return self.survival[n - 1];
        }
        let k = x.partition_point(|&v| v <= i).clamp(1, n - 1) - 1;
        let h = x[k + 1] - x[k];
        let s = (i - x[k]) / h;
        let (y0, y1) = (self.survival[k], self.survival[k + 1]);
        let (d0, d1) = (-self.density[k] * h, -self.density[k + 1] * h);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1).clamp(y1.min(y0), y0.max(y1))
    }

    /// Probability of escape with I_s in [lo, hi).
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        (self.survival_at(lo) - self.survival_at(hi)).max(0.0)
    }

    /// Composite Simpson integral of p over the grid (odd point counts use
    /// a trapezoid for the last interval).
    pub fn integrated_density(&self) -> f64 {
        let n = self.currents.len();
        if n < 2 {
            return 0.0;
        }
        let h = self.currents[1] - self.currents[0];
        let p = &self.density;
        let m = if (n - 1).is_multiple_of(2) { n } else { n - 1 };
        let mut acc = 0.0;
        for k in (0..m - 1).step_by(2) {
            acc += h / 3.0 * (p[k] + 4.0 * p[k + 1] + p[k + 2]);
        }
        if m < n {
            acc += 0.5 * h * (p[n - 2] + p[n - 1]);
        }
        acc
    }
}

/// Integrate the master equation along the ramp from the flag-0 initial
/// state and tabulate S(I) and p(I) = Σ_k Γ_k ρ_kk / (dI/dt).
pub fn integrate_master<const N: usize, D: Dynamics<N>>(model: &D, cfg: &MasterConfig) -> Result<SwitchingDistribution> {
    cfg.validate()?;
    let ramp = model.ramp_rate();
    if !(ramp > 0.0) {
        return Err(Error::domain("integrate_master", "needs a ramped bias"));
    }
    let i_start = model.bias(0.0);
    let i_end = cfg.i_end.unwrap_or_else(|| model.bias_limit());
    if !(i_end > i_start) {
        return Err(Error::domain("integrate_master", "grid end must exceed the ramp start"));
    }
    let n = cfg.grid_points;
    let di = (i_end - i_start) / (n - 1) as f64;
    let f = generator(model);
    let mut solver = Dopri { f: &f, rtol: cfg.tolerance, atol: cfg.tolerance * 1e-3, h: 1e-12, steps: 0, max_steps: cfg.max_steps, keep_coherences: cfg.keep_coherences };
    let mut rho = initial_density(model, cfg.initial_state, Branch::Ground)?;
    let mut out = SwitchingDistribution { currents: Vec::with_capacity(n), density: Vec::with_capacity(n), survival: Vec::with_capacity(n) };
    let mut t = 0.0;
    let mut done = false;
    for k in 0..n {
        let i = i_start + k as f64 * di;
        out.currents.push(i);
        if done {
            out.density.push(0.0);
            out.survival.push(*out.survival.last().expect("at least one point precedes"));
            continue;
        }
        let target = (i - i_start) / ramp;
        rho = solver.advance(t, rho, target)?;
        t = target;
        let s = trace_real(&rho);
        out.survival.push(s);
        out.density.push(escape_flux(&rho, &model.rates(model.bias(t))?) / ramp);
        done = s < cfg.survival_floor;
    }
    log::debug!("master equation: {} steps", solver.steps);
    Ok(out)
}

/// Total-variation distance between a histogram of switching currents and
/// the distribution integrated over the same bins. The distribution is
/// normalized by its escaped mass; its mass outside the histogram range
/// counts fully toward the distance.
pub fn distribution_distance(h: &Histogram, dist: &SwitchingDistribution) -> Result<f64> {
    if h.n_total == 0 || dist.currents.is_empty() {
        return Err(Error::EmptyInput("distribution_distance needs data"));
    }
    let (h_lo, h_hi) = (h.bin_edges[0], *h.bin_edges.last().expect("edges are non-empty"));
    let (d_lo, d_hi) = (dist.currents[0], *dist.currents.last().expect("grid is non-empty"));
    if h_hi <= d_lo || h_lo >= d_hi {
        return Err(Error::DisjointSupport);
    }
    let total = dist.escaped();
    if !(total > 0.0) {
        return Ok(1.0);
    }
    let mut inside = 0.0;
    let mut acc = 0.0;
    for (k, &c) in h.counts.iter().enumerate() {
        let q = dist.mass_between(h.bin_edges[k], h.bin_edges[k + 1]) / total;
        inside += q;
        acc += (c as f64 / h.n_total as f64 - q).abs();
    }
    Ok((0.5 * (acc + (1.0 - inside).max(0.0))).min(1.0))
}
