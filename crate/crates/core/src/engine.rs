//! Quantum-jump (Monte Carlo wave function) trajectories of the switching
//! process.
//!
//! Each ramp starts from |0g⟩ (or |0e⟩ when the TLS flag is set), raises the
//! bias current step by step, and at every step either propagates the
//! wavefunction with the non-Hermitian effective Hamiltonian or performs a
//! jump: relaxation collapses onto the branch's ground state, tunneling ends
//! the ramp and registers the switching current.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{decay_diagonal, Frame, SplitHamiltonian};
use crate::matrix::{basis, norm_sqr, ComplexMatrix, State, ZERO};
use crate::model::Dynamics;
use crate::physics::{Branch, Level, RateSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState<const N: usize> {
    pub amplitudes: State<N>,
    /// Time since the start of the ramp (s).
    pub t: f64,
    /// Bias current (A).
    pub i_dc: f64,
    pub flag: Branch,
}

impl<const N: usize> QuantumState<N> {
    /// Bare ground state of the junction on the given TLS branch.
    pub fn ground(flag: Branch, i_dc: f64) -> Result<Self> {
        let k = 2 * flag.flag() as usize;
        if k >= N {
            return Err(Error::domain("QuantumState", "the two-level model has no |e⟩ branch"));
        }
        Ok(QuantumState { amplitudes: basis(k), t: 0.0, i_dc, flag })
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    /// Normalized populations |ψ_k|²/‖ψ‖².
    pub fn populations(&self) -> [f64; N] {
        let n = self.norm_sqr();
        let mut p = [0.0; N];
        for (k, a) in self.amplitudes.iter().enumerate() {
            p[k] = a.norm_sqr() / n;
        }
        p
    }

    /// Normalized density matrix ψψ†/‖ψ‖².
    pub fn density(&self) -> ComplexMatrix<N> {
        let n = self.norm_sqr();
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes).scale(Complex64::new(1.0 / n, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Escape from |level, branch⟩; ends the ramp.
    Tunnel { level: Level, branch: Branch },
    /// Junction relaxation |1,b⟩ → |0,b⟩.
    Relax { branch: Branch },
    /// TLS relaxation |l,e⟩ → |l,g⟩ (only when configured).
    TlsRelax { level: Level },
}

impl Channel {
    pub fn is_tunnel(&self) -> bool {
        matches!(self, Channel::Tunnel { .. })
    }

    /// Basis index of the state the channel empties.
    pub fn source(&self) -> usize {
        match *self {
            Channel::Tunnel { level, branch } => level.index() + 2 * branch.flag() as usize,
            Channel::Relax { branch } => 1 + 2 * branch.flag() as usize,
            Channel::TlsRelax { level } => level.index() + 2,
        }
    }

    /// Basis index a relaxation collapses onto.
    pub fn target(&self) -> Option<usize> {
        match *self {
            Channel::Tunnel { .. } => None,
            Channel::Relax { branch } => Some(2 * branch.flag() as usize),
            Channel::TlsRelax { level } => Some(level.index()),
        }
    }

    /// Branch the channel leaves the TLS in.
    pub fn branch_after(&self) -> Branch {
        match *self {
            Channel::Tunnel { branch, .. } | Channel::Relax { branch } => branch,
            Channel::TlsRelax { .. } => Branch::Ground,
        }
    }

    pub fn rate(&self, r: &RateSet) -> f64 {
        match self {
            Channel::Tunnel { .. } => r.tunneling[self.source()],
            Channel::Relax { .. } => r.relaxation,
            Channel::TlsRelax { .. } => r.tls_relaxation,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Channel::Tunnel { level: Level::Zero, branch: Branch::Ground } => "tunnel_0g",
            Channel::Tunnel { level: Level::One, branch: Branch::Ground } => "tunnel_1g",
            Channel::Tunnel { level: Level::Zero, branch: Branch::Excited } => "tunnel_0e",
            Channel::Tunnel { level: Level::One, branch: Branch::Excited } => "tunnel_1e",
            Channel::Relax { branch: Branch::Ground } => "relax_1g_0g",
            Channel::Relax { branch: Branch::Excited } => "relax_1e_0e",
            Channel::TlsRelax { level: Level::Zero } => "tls_relax_0e_0g",
            Channel::TlsRelax { level: Level::One } => "tls_relax_1e_1g",
        }
    }
}

const CHANNELS_4: [Channel; 8] = [
    Channel::Tunnel { level: Level::Zero, branch: Branch::Ground },
    Channel::Tunnel { level: Level::One, branch: Branch::Ground },
    Channel::Tunnel { level: Level::Zero, branch: Branch::Excited },
    Channel::Tunnel { level: Level::One, branch: Branch::Excited },
    Channel::Relax { branch: Branch::Ground },
    Channel::Relax { branch: Branch::Excited },
    Channel::TlsRelax { level: Level::Zero },
    Channel::TlsRelax { level: Level::One },
];

const CHANNELS_2: [Channel; 3] = [
    Channel::Tunnel { level: Level::Zero, branch: Branch::Ground },
    Channel::Tunnel { level: Level::One, branch: Branch::Ground },
    Channel::Relax { branch: Branch::Ground },
];

/// Jump channels available in an N-level model.
pub fn channels<const N: usize>() -> &'static [Channel] {
    if N == 2 {
        &CHANNELS_2
    } else {
        &CHANNELS_4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub channel: Channel,
    pub t: f64,
    pub i_dc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub ramp_index: usize,
    /// I_s (A).
    pub switching_current: f64,
    pub flag_at_switch: Branch,
    pub initial_flag: Branch,
    pub events: Vec<JumpEvent>,
}

impl SwitchRecord {
    pub fn relax_events(&self) -> usize {
        self.events.iter().filter(|e| !e.channel.is_tunnel()).count()
    }

    pub fn tunnel_event(&self) -> Option<&JumpEvent> {
        self.events.iter().find(|e| e.channel.is_tunnel())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Exactly |0g⟩ or |0e⟩.
    Bare,
    /// The eigenstate of H at the ramp start closest to |0g⟩ or |0e⟩.
    #[default]
    Dressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Classic fourth-order Runge–Kutta; step also bounded by
    /// `phase_per_step` over the spectral radius of H_eff.
    Rk4,
    /// exp(−i H_eff dt) with H_eff frozen over the step. Rotating frame
    /// only; the lab frame always uses RK4.
    #[default]
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Upper bound on the time step (s).
    pub dt_max: f64,
    /// Bound on (total jump rate)·dt.
    pub dt_rate_cap: f64,
    pub integrator: Integrator,
    /// RK4 only: bound on (spectral radius of the gauge-shifted H_eff)·dt.
    pub phase_per_step: f64,
    pub master_seed: u64,
    pub ramps: usize,
    pub max_steps: u64,
    pub initial_flag: Branch,
    pub initial_state: InitialState,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dt_max: 1e-9,
            dt_rate_cap: 0.05,
            integrator: Integrator::Exponential,
            phase_per_step: 0.25,
            master_seed: 20_080_915,
            ramps: 2000,
            max_steps: 1_000_000_000,
            initial_flag: Branch::Ground,
            initial_state: InitialState::Dressed,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| Err(Error::config(format!("engine.{k}"), m));
        if !(self.dt_max > 0.0) {
            return bad("dt_max", "must be > 0");
        }
        if !(self.dt_rate_cap > 0.0 && self.dt_rate_cap <= 1.0) {
            return bad("dt_rate_cap", "must lie in (0, 1]");
        }
        if !(self.phase_per_step > 0.0 && self.phase_per_step < 2.5) {
            return bad("phase_per_step", "must lie in (0, 2.5)");
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be >= 1");
        }
        Ok(())
    }
}

/// Per-index random stream: ChaCha8 keyed by the master seed, with the
/// index selecting the stream. Independent of scheduling.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[inline]
fn rk4_stage<const N: usize>(h: &ComplexMatrix<N>, v: &State<N>) -> State<N> {
    // −i H v
    let hv = h.mul_vec(v);
    let mut out = [ZERO; N];
    for k in 0..N {
        out[k] = Complex64::new(hv[k].im, -hv[k].re);
    }
    out
}

#[inline]
fn axpy<const N: usize>(x: &State<N>, a: f64, y: &State<N>) -> State<N> {
    let mut out = *x;
    for k in 0..N {
        out[k] += y[k] * a;
    }
    out
}

/// Classic RK4 for i dψ/dt = H(t) ψ with H evaluated at t, t + dt/2, t + dt.
fn rk4<const N: usize>(
    psi: &State<N>,
    h_start: &ComplexMatrix<N>,
    h_mid: &ComplexMatrix<N>,
    h_end: &ComplexMatrix<N>,
    dt: f64,
) -> State<N> {
    let k1 = rk4_stage(h_start, psi);
    let k2 = rk4_stage(h_mid, &axpy(psi, 0.5 * dt, &k1));
    let k3 = rk4_stage(h_mid, &axpy(psi, 0.5 * dt, &k2));
    let k4 = rk4_stage(h_end, &axpy(psi, dt, &k3));
    let mut out = *psi;
    for k in 0..N {
        out[k] += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (dt / 6.0);
    }
    out
}

fn check_norm(before: f64, after: f64, dt: f64) -> Result<()> {
    if after > before * (1.0 + 1e-12) || !after.is_finite() {
        return Err(Error::StepSize { before, after, dt });
    }
    Ok(())
}

/// One RK4 step under a constant effective Hamiltonian (H/ħ, rad/s). The
/// norm is not restored; it carries the no-jump probability.
pub fn evolve_step<const N: usize>(
    s: &QuantumState<N>,
    h_eff: &ComplexMatrix<N>,
    dt: f64,
) -> Result<QuantumState<N>> {
    let amplitudes = rk4(&s.amplitudes, h_eff, h_eff, h_eff, dt);
    check_norm(s.norm_sqr(), norm_sqr(&amplitudes), dt)?;
    Ok(QuantumState { amplitudes, t: s.t + dt, ..*s })
}

fn effective_at<const N: usize>(
    split: &SplitHamiltonian<N>,
    decay: &[f64; N],
    gauge: f64,
    t: f64,
) -> ComplexMatrix<N> {
    let mut h = split.at(t);
    for k in 0..N {
        h.0[k][k] -= Complex64::new(gauge, 0.5 * decay[k]);
    }
    h
}

/// Decide whether a jump happens during the next `dt`, using the single
/// uniform draw `u` both for the decision and, by inverse CDF on [0, dp),
/// for the channel.
pub fn jump_decision<const N: usize>(
    s: &QuantumState<N>,
    r: &RateSet,
    dt: f64,
    u: f64,
) -> Option<Channel> {
    let norm = s.norm_sqr();
    let mut weights = [0.0; 8];
    let chans = channels::<N>();
    let mut total = 0.0;
    for (w, ch) in weights.iter_mut().zip(chans) {
        let rate = ch.rate(r);
        if rate > 0.0 {
            *w = rate * s.amplitudes[ch.source()].norm_sqr() / norm;
            total += *w;
        }
    }
    let dp = total * dt;
    if !(u < dp) {
        return None;
    }
    let target = u / dt;
    let mut acc = 0.0;
    let mut last = None;
    for (w, ch) in weights.iter().zip(chans) {
        if *w > 0.0 {
            acc += *w;
            last = Some(*ch);
            if target < acc {
                return last;
            }
        }
    }
    last
}

/// Collapse onto the relaxation target with unit norm and update the flag.
pub fn apply_relax<const N: usize>(s: &QuantumState<N>, channel: Channel) -> QuantumState<N> {
    let target = channel.target().expect("apply_relax called with a tunneling channel");
    QuantumState { amplitudes: basis(target), flag: channel.branch_after(), ..*s }
}

/// Population-weighted total jump rate Σ_k rate_k |ψ_k|²/‖ψ‖².
pub fn total_jump_rate<const N: usize>(s: &QuantumState<N>, r: &RateSet) -> f64 {
    let norm = s.norm_sqr();
    channels::<N>()
        .iter()
        .map(|ch| ch.rate(r) * s.amplitudes[ch.source()].norm_sqr())
        .sum::<f64>()
        / norm
}

/// Center of the real diagonal; shifting H by it is a global phase.
fn gauge_center<const N: usize>(h: &ComplexMatrix<N>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..N {
        lo = lo.min(h.0[k][k].re);
        hi = hi.max(h.0[k][k].re);
    }
    0.5 * (lo + hi)
}

/// Gershgorin bound on the spectral radius of H_eff − c·1.
fn spectral_bound<const N: usize>(split: &SplitHamiltonian<N>, decay: &[f64; N], gauge: f64) -> f64 {
    let mut rho: f64 = 0.0;
    for i in 0..N {
        let d = Complex64::new(split.static_part.0[i][i].re - gauge, 0.5 * decay[i]).norm();
        let mut row = d;
        for j in 0..N {
            if j != i {
                row += split.static_part.0[i][j].norm() + split.drive_part.0[i][j].norm();
            }
        }
        rho = rho.max(row);
    }
    rho
}

/// Starting state of a ramp for `flag`, bare or dressed per the config.
pub fn initial_state<const N: usize, D: Dynamics<N>>(
    model: &D,
    cfg: &EngineConfig,
    flag: Branch,
) -> Result<QuantumState<N>> {
    let i0 = model.bias(0.0);
    let mut s = QuantumState::<N>::ground(flag, i0)?;
    if cfg.initial_state == InitialState::Dressed {
        let split = model.hamiltonian(i0)?;
        let h = match split.frame {
            Frame::Rwa => split.at(0.0),
            Frame::Lab => split.static_part,
        };
        let k = 2 * flag.flag() as usize;
        let (_, vecs) = h.hermitian_eigen();
        let best = vecs
            .iter()
            .max_by(|a, b| a[k].norm_sqr().total_cmp(&b[k].norm_sqr()))
            .copied()
            .unwrap_or(s.amplitudes);
        let phase = best[k].conj() / best[k].norm();
        let mut v = best;
        for x in v.iter_mut() {
            *x *= phase;
        }
        let n = norm_sqr(&v).sqrt();
        for x in v.iter_mut() {
            *x /= n;
        }
        s.amplitudes = v;
    }
    Ok(s)
}

enum StepOutcome {
    Evolved,
    Relaxed,
    Switched,
}

/// Cached quantities at one node of the time grid t_k = k·dt_max.
#[derive(Debug, Clone, Copy)]
struct GridNode<const N: usize> {
    i_dc: f64,
    rates: RateSet,
    /// exp(−i H_eff dt_max), gauge-shifted.
    propagator: ComplexMatrix<N>,
}

const CHUNK: usize = 1024;

/// A model and configuration bound together with a lazily filled table of
/// per-node propagators and rates, shared by every trajectory run through
/// it. Nodes depend only on the model, so sharing cannot change results.
pub struct Engine<'a, const N: usize, D> {
    model: &'a D,
    cfg: EngineConfig,
    cached: bool,
    static_bias: bool,
    chunks: Vec<OnceLock<Option<Box<[GridNode<N>]>>>>,
}

impl<'a, const N: usize, D: Dynamics<N>> Engine<'a, N, D> {
    pub fn new(model: &'a D, cfg: &EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let split = model.hamiltonian(model.bias(0.0))?;
        let cached = cfg.integrator == Integrator::Exponential && split.frame == Frame::Rwa;
        let static_bias = model.ramp_rate() == 0.0;
        let nodes = if !cached {
            0
        } else if static_bias {
            1
        } else {
            let span = (model.bias_limit() - model.bias(0.0)) / (model.ramp_rate() * cfg.dt_max);
            (span.max(0.0).ceil() as usize).saturating_add(2).min(1 << 28)
        };
        let chunks = (0..nodes.div_ceil(CHUNK)).map(|_| OnceLock::new()).collect();
        Ok(Engine { model, cfg: *cfg, cached, static_bias, chunks })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    fn build_node(&self, k: usize) -> Result<GridNode<N>> {
        let t = k as f64 * self.cfg.dt_max;
        let i_dc = self.model.bias(t);
        if i_dc >= self.model.bias_limit() {
            return Err(Error::domain("run_ramp", "grid node beyond the bias limit"));
        }
        let rates = self.model.rates(i_dc)?;
        let split = self.model.hamiltonian(i_dc)?;
        let decay = decay_diagonal::<N>(&rates);
        let gauge = gauge_center(&split.static_part);
        let h = effective_at(&split, &decay, gauge, t);
        let propagator = h.scale(Complex64::new(0.0, -self.cfg.dt_max)).expm();
        Ok(GridNode { i_dc, rates, propagator })
    }

    fn node(&self, k: u64) -> Option<&GridNode<N>> {
        let k = if self.static_bias { 0 } else { usize::try_from(k).ok()? };
        let chunk = self.chunks.get(k / CHUNK)?;
        let nodes = chunk.get_or_init(|| {
            let start = (k / CHUNK) * CHUNK;
            (start..start + CHUNK).map(|j| self.build_node(j)).collect::<Result<Vec<_>>>().ok().map(Vec::into_boxed_slice)
        });
        nodes.as_ref().map(|n| &n[k % CHUNK])
    }

    /// One ramp from flag `init_flag` until a tunneling event.
    pub fn run_ramp<R: Rng>(&self, init_flag: Branch, ramp_index: usize, rng: &mut R) -> Result<SwitchRecord> {
        let mut traj = Trajectory::new(self, init_flag)?;
        for _ in 0..self.cfg.max_steps {
            if let StepOutcome::Switched = traj.step(rng, f64::INFINITY)? {
                let ev = traj.events.last().copied().expect("switch records its event");
                return Ok(SwitchRecord {
                    ramp_index,
                    switching_current: ev.i_dc,
                    flag_at_switch: ev.channel.branch_after(),
                    initial_flag: init_flag,
                    events: traj.events,
                });
            }
        }
        Err(Error::StepCeiling(self.cfg.max_steps))
    }

    /// `cfg.ramps` consecutive ramps; each ramp starts on the TLS branch the
    /// previous one switched from.
    pub fn run_sequence(&self) -> Result<Vec<SwitchRecord>> {
        if self.cfg.ramps == 0 {
            return Err(Error::config("engine.ramps", "must be >= 1"));
        }
        let mut flag = self.cfg.initial_flag;
        let mut out = Vec::with_capacity(self.cfg.ramps);
        for index in 0..self.cfg.ramps {
            let mut rng = stream_rng(self.cfg.master_seed, index as u64);
            let rec = self.run_ramp(flag, index, &mut rng)?;
            flag = rec.flag_at_switch;
            out.push(rec);
        }
        Ok(out)
    }

    /// `n` independent single ramps from |0g⟩, parallel over the current
    /// rayon pool, returned in index order.
    pub fn run_ensemble(&self, n: usize) -> Result<Vec<SwitchRecord>> {
        if n == 0 {
            return Err(Error::config("engine.trajectories", "must be >= 1"));
        }
        (0..n)
            .into_par_iter()
            .map(|k| self.run_ramp(Branch::Ground, k, &mut stream_rng(self.cfg.master_seed, k as u64)))
            .collect()
    }

    /// Trajectory-averaged density matrix Σ ψψ†/‖ψ‖² / n at each checkpoint
    /// time. Trajectories that tunnel stop contributing, so the trace of the
    /// average is the survival probability.
    pub fn average_density(&self, init_flag: Branch, checkpoints: &[f64], n: usize) -> Result<Vec<ComplexMatrix<N>>> {
        if n == 0 {
            return Err(Error::config("engine.trajectories", "must be >= 1"));
        }
        let per_traj: Vec<Vec<ComplexMatrix<N>>> = (0..n)
            .into_par_iter()
            .map(|k| -> Result<Vec<ComplexMatrix<N>>> {
                let mut rng = stream_rng(self.cfg.master_seed, k as u64);
                let mut traj = Trajectory::new(self, init_flag)?;
                let mut snaps = Vec::with_capacity(checkpoints.len());
                let mut steps = 0u64;
                for &tc in checkpoints {
                    while traj.time() < tc * (1.0 - 1e-12) {
                        steps += 1;
                        if steps > self.cfg.max_steps {
                            return Err(Error::StepCeiling(self.cfg.max_steps));
                        }
                        let limit = tc - traj.time();
                        if let StepOutcome::Switched = traj.step(&mut rng, limit)? {
                            snaps.resize(checkpoints.len(), ComplexMatrix::zeros());
                            return Ok(snaps);
                        }
                    }
                    snaps.push(traj.state.density());
                }
                Ok(snaps)
            })
            .collect::<Result<_>>()?;
        let mut avg = vec![ComplexMatrix::<N>::zeros(); checkpoints.len()];
        for snaps in &per_traj {
            for (a, s) in avg.iter_mut().zip(snaps) {
                *a = *a + *s;
            }
        }
        let inv = Complex64::new(1.0 / n as f64, 0.0);
        Ok(avg.into_iter().map(|m| m.scale(inv)).collect())
    }
}

struct Trajectory<'e, 'a, const N: usize, D> {
    engine: &'e Engine<'a, N, D>,
    state: QuantumState<N>,
    /// Current grid node and the time elapsed past it.
    node: u64,
    offset: f64,
    events: Vec<JumpEvent>,
}

impl<'e, 'a, const N: usize, D: Dynamics<N>> Trajectory<'e, 'a, N, D> {
    fn new(engine: &'e Engine<'a, N, D>, flag: Branch) -> Result<Self> {
        let state = initial_state(engine.model, &engine.cfg, flag)?;
        Ok(Trajectory { engine, state, node: 0, offset: 0.0, events: Vec::new() })
    }

    fn time(&self) -> f64 {
        self.node as f64 * self.engine.cfg.dt_max + self.offset
    }

    fn advance(&mut self, dt: f64) {
        let dt_max = self.engine.cfg.dt_max;
        self.offset += dt;
        if self.offset >= dt_max * (1.0 - 1e-9) {
            self.node += 1;
            self.offset = 0.0;
        }
        self.state.t = self.time();
    }

    fn jump_or<F>(&mut self, rates: &RateSet, i_dc: f64, dt: f64, u: f64, evolve: F) -> Result<StepOutcome>
    where
        F: FnOnce(&State<N>) -> State<N>,
    {
        let t = self.state.t;
        match jump_decision(&self.state, rates, dt, u) {
            Some(channel) => {
                self.events.push(JumpEvent { channel, t, i_dc });
                if channel.is_tunnel() {
                    self.state.flag = channel.branch_after();
                    return Ok(StepOutcome::Switched);
                }
                self.state = apply_relax(&self.state, channel);
                self.advance(dt);
                Ok(StepOutcome::Relaxed)
            }
            None => {
                let before = self.state.norm_sqr();
                let next = evolve(&self.state.amplitudes);
                check_norm(before, norm_sqr(&next), dt)?;
                self.state.amplitudes = next;
                self.advance(dt);
                Ok(StepOutcome::Evolved)
            }
        }
    }

    /// Advance by one step no longer than `dt_limit`.
    fn step<R: Rng>(&mut self, rng: &mut R, dt_limit: f64) -> Result<StepOutcome> {
        let norm = self.state.norm_sqr();
        if norm < 1e-200 {
            // Global rescale; only ratios of amplitudes carry information.
            let s = 1.0 / norm.sqrt();
            for a in self.state.amplitudes.iter_mut() {
                *a *= s;
            }
        }
        let cfg = self.engine.cfg;
        let u: f64 = rng.random();

        if self.engine.cached && self.offset == 0.0 && dt_limit >= cfg.dt_max {
            if let Some(node) = self.engine.node(self.node) {
                let total = total_jump_rate(&self.state, &node.rates);
                if total * cfg.dt_max <= cfg.dt_rate_cap {
                    self.state.i_dc = node.i_dc;
                    let (rates, i_dc, prop) = (node.rates, node.i_dc, node.propagator);
                    return self.jump_or(&rates, i_dc, cfg.dt_max, u, |psi| prop.mul_vec(psi));
                }
            }
        }

        let t = self.time();
        let model = self.engine.model;
        let i_dc = model.bias(t);
        if i_dc >= model.bias_limit() {
            return Err(Error::domain("run_ramp", format!("ramp passed {i_dc:e} A without switching")));
        }
        self.state.i_dc = i_dc;
        let rates = model.rates(i_dc)?;
        let split = model.hamiltonian(i_dc)?;
        let decay = decay_diagonal::<N>(&rates);
        let gauge = gauge_center(&split.static_part);
        let exponential = cfg.integrator == Integrator::Exponential && split.frame == Frame::Rwa;

        let mut dt = (cfg.dt_max - self.offset).min(dt_limit);
        if !exponential {
            let rho = spectral_bound(&split, &decay, gauge);
            if rho > 0.0 {
                dt = dt.min(cfg.phase_per_step / rho);
            }
        }
        let total = total_jump_rate(&self.state, &rates);
        if total > 0.0 {
            dt = dt.min(cfg.dt_rate_cap / total);
        }
        if split.frame == Frame::Lab {
            dt = dt.min(2.0 * PI / (20.0 * split.drive_frequency));
        }

        self.jump_or(&rates, i_dc, dt, u, |psi| {
            if exponential {
                let h = effective_at(&split, &decay, gauge, t);
                h.scale(Complex64::new(0.0, -dt)).expm().mul_vec(psi)
            } else {
                let (h0, h1, h2) = match split.frame {
                    Frame::Rwa => {
                        let h = effective_at(&split, &decay, gauge, t);
                        (h, h, h)
                    }
                    Frame::Lab => (
                        effective_at(&split, &decay, gauge, t),
                        effective_at(&split, &decay, gauge, t + 0.5 * dt),
                        effective_at(&split, &decay, gauge, t + dt),
                    ),
                };
                rk4(psi, &h0, &h1, &h2, dt)
            }
        })
    }
}

/// One ramp from flag `init_flag` until a tunneling event.
pub fn run_ramp<const N: usize, D: Dynamics<N>, R: Rng>(
    model: &D,
    cfg: &EngineConfig,
    init_flag: Branch,
    ramp_index: usize,
    rng: &mut R,
) -> Result<SwitchRecord> {
    Engine::new(model, cfg)?.run_ramp(init_flag, ramp_index, rng)
}

/// `cfg.ramps` consecutive ramps; the TLS flag carries over between ramps.
pub fn run_sequence<const N: usize, D: Dynamics<N>>(model: &D, cfg: &EngineConfig) -> Result<Vec<SwitchRecord>> {
    Engine::new(model, cfg)?.run_sequence()
}

/// `n` independent single ramps from |0g⟩, in index order.
pub fn run_ensemble<const N: usize, D: Dynamics<N>>(
    model: &D,
    cfg: &EngineConfig,
    n: usize,
) -> Result<Vec<SwitchRecord>> {
    Engine::new(model, cfg)?.run_ensemble(n)
}

/// See [`Engine::average_density`].
pub fn average_density<const N: usize, D: Dynamics<N>>(
    model: &D,
    cfg: &EngineConfig,
    init_flag: Branch,
    checkpoints: &[f64],
    n: usize,
) -> Result<Vec<ComplexMatrix<N>>> {
    Engine::new(model, cfg)?.average_density(init_flag, checkpoints, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unitary_step_preserves_norm() {
        let mut h = Matrix2::from_real_diagonal([0.0, 3e8]);
        h.0[0][1] = c(2e7, 0.0);
        h.0[1][0] = c(2e7, 0.0);
        let mut s = QuantumState::<2>::ground(Branch::Ground, 0.0).unwrap();
        for _ in 0..1000 {
            let n = s.norm_sqr();
            s = evolve_step(&s, &h, 1e-11).unwrap();
            assert!((s.norm_sqr() - n).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_decay_is_exponential() {
        let gamma = 2e6;
        let mut h = Matrix2::zeros();
        h.0[1][1].im = -0.5 * gamma;
        let mut s = QuantumState { amplitudes: basis::<2>(1), t: 0.0, i_dc: 0.0, flag: Branch::Ground };
        let dt = 2e-11;
        for _ in 0..25_000 {
            s = evolve_step(&s, &h, dt).unwrap();
        }
        let expect = (-gamma * s.t).exp();
        assert!((s.norm_sqr() - expect).abs() < 1e-6 * expect, "{} vs {}", s.norm_sqr(), expect);
    }

    #[test]
    fn resonant_rabi_matches_analytic() {
        // RWA at resonance: P1(t) = sin²(Ω t / 2).
        let rabi = 2.0 * PI * 10e6;
        let mut h = Matrix2::zeros();
        h.0[0][1] = c(0.5 * rabi, 0.0);
        h.0[1][0] = c(0.5 * rabi, 0.0);
        let period = 2.0 * PI / rabi;
        let steps = 2000;
        let dt = period / steps as f64;
        let mut s = QuantumState::<2>::ground(Branch::Ground, 0.0).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            s = evolve_step(&s, &h, dt).unwrap();
            let exact = (0.5 * rabi * s.t).sin().powi(2);
            worst = worst.max((s.amplitudes[1].norm_sqr() - exact).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn growing_norm_is_rejected() {
        let mut h = Matrix2::zeros();
        h.0[0][0] = c(0.0, 1e6);
        let s = QuantumState::<2>::ground(Branch::Ground, 0.0).unwrap();
        assert!(matches!(evolve_step(&s, &h, 1e-9), Err(Error::StepSize { .. })));
    }

    #[test]
    fn ground_state_only_tunnels_from_0g() {
        let s = QuantumState::<4>::ground(Branch::Ground, 35.6e-6).unwrap();
        let r = RateSet { relaxation: 1e6, tunneling: [1e4, 1e7, 1e5, 1e8], tls_relaxation: 0.0 };
        let dt = 1e-6;
        for k in 0..100 {
            let u = k as f64 / 100.0 * 1e4 * dt;
            match jump_decision(&s, &r, dt, u) {
                Some(ch) => assert_eq!(ch, Channel::Tunnel { level: Level::Zero, branch: Branch::Ground }),
                None => panic!("u below dp must jump"),
            }
        }
        assert_eq!(jump_decision(&s, &r, dt, 1e4 * dt), None);
        assert_eq!(jump_decision(&s, &RateSet::all_zero(), dt, 0.0), None);
    }

    #[test]
    fn superposition_channel_statistics() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = QuantumState::<4> {
            amplitudes: [ZERO, c(h, 0.0), c(h, 0.0), ZERO],
            t: 0.0,
            i_dc: 0.0,
            flag: Branch::Ground,
        };
        let gamma = 1e6;
        let r = RateSet { relaxation: 0.0, tunneling: [0.0, gamma, gamma, 0.0], tls_relaxation: 0.0 };
        let dt = 0.04 / gamma;
        let mut rng = stream_rng(7, 0);
        let (mut jumps, mut from_1g) = (0u64, 0u64);
        for _ in 0..100_000 {
            if let Some(ch) = jump_decision(&s, &r, dt, rng.random()) {
                jumps += 1;
                if ch == (Channel::Tunnel { level: Level::One, branch: Branch::Ground }) {
                    from_1g += 1;
                } else {
                    assert_eq!(ch, Channel::Tunnel { level: Level::Zero, branch: Branch::Excited });
                }
            }
        }
        let n = jumps as f64;
        let sigma = (n * 0.25).sqrt();
        assert!((from_1g as f64 - 0.5 * n).abs() < 3.0 * sigma, "{from_1g} of {jumps}");
        let p: f64 = 0.04;
        let sigma = (1e5 * p * (1.0 - p)).sqrt();
        assert!((n - 1e5 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn relax_collapses_to_branch_ground() {
        let s = QuantumState::<4> {
            amplitudes: [c(0.1, 0.0), c(0.5, 0.2), c(0.3, -0.1), c(0.2, 0.2)],
            t: 1e-6,
            i_dc: 35.6e-6,
            flag: Branch::Ground,
        };
        let g = apply_relax(&s, Channel::Relax { branch: Branch::Ground });
        assert_eq!(g.amplitudes, basis::<4>(0));
        assert_eq!(g.flag, Branch::Ground);
        assert_eq!(g.norm_sqr(), 1.0);
        let e = apply_relax(&s, Channel::Relax { branch: Branch::Excited });
        assert_eq!(e.amplitudes, basis::<4>(2));
        assert_eq!(e.flag, Branch::Excited);
        assert_eq!((e.t, e.i_dc), (s.t, s.i_dc));
    }

    #[test]
    fn stream_rng_is_index_addressed() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(1, 5).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = stream_rng(1, 5).random();
        let y: u64 = stream_rng(1, 6).random();
        let z: u64 = stream_rng(2, 5).random();
        assert!(x != y && x != z);
    }
}
