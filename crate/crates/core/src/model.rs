//! The time-dependent problem handed to the trajectory engine and the
//! master-equation integrator: bias current as a function of time, the
//! Hamiltonian at a given bias, and the incoherent rates.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonian::{self, Frame, SplitHamiltonian, TlsParams};
use crate::physics::{self, BiasDrive, Branch, JunctionParams, RateSet, TunnelingMode};

pub trait Dynamics<const N: usize>: Sync {
    /// Bias current at time `t` after the start of the ramp (A).
    fn bias(&self, t: f64) -> f64;

    /// dI/dt (A/s); zero for a static bias.
    fn ramp_rate(&self) -> f64;

    fn hamiltonian(&self, i_dc: f64) -> Result<SplitHamiltonian<N>>;

    fn rates(&self, i_dc: f64) -> Result<RateSet>;

    /// Current above which the ramp cannot continue (A).
    fn bias_limit(&self) -> f64;
}

/// Junction, optional TLS, and bias drive as one simulation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionModel {
    pub junction: JunctionParams,
    pub tls: Option<TlsParams>,
    pub drive: BiasDrive,
    pub frame: Frame,
    pub tunneling_mode: TunnelingMode,
    /// TLS |e⟩ → |g⟩ relaxation rate (1/s).
    pub tls_relaxation: f64,
}

impl JunctionModel {
    pub fn new(junction: JunctionParams, tls: Option<TlsParams>, drive: BiasDrive, frame: Frame) -> Self {
        JunctionModel {
            junction,
            tls,
            drive,
            frame,
            tunneling_mode: TunnelingMode::Analytic,
            tls_relaxation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.junction.validate()?;
        self.drive.validate(&self.junction)?;
        if let Some(t) = &self.tls {
            t.validate()?;
        }
        Ok(())
    }

    fn tls_or_decoupled(&self) -> TlsParams {
        self.tls.unwrap_or_else(|| TlsParams::decoupled(self.drive.microwave_frequency))
    }

    fn rates_for(&self, i_dc: f64, with_excited: bool) -> Result<RateSet> {
        let p = &self.junction;
        let w10 = physics::level_splitting(p, i_dc, Branch::Ground)?;
        let relaxation = physics::relaxation_rate_at(p, w10);
        let [g0, g1] = physics::branch_tunneling_rates(p, i_dc, Branch::Ground, self.tunneling_mode)?;
        let [e0, e1] = if with_excited {
            physics::branch_tunneling_rates(p, i_dc, Branch::Excited, self.tunneling_mode)?
        } else {
            [0.0, 0.0]
        };
        Ok(RateSet {
            relaxation,
            tunneling: [g0, g1, e0, e1],
            tls_relaxation: if with_excited { self.tls_relaxation } else { 0.0 },
        })
    }
}

impl Dynamics<2> for JunctionModel {
    fn bias(&self, t: f64) -> f64 {
        self.drive.bias_at(t)
    }

    fn ramp_rate(&self) -> f64 {
        self.drive.ramp_rate
    }

    fn hamiltonian(&self, i_dc: f64) -> Result<SplitHamiltonian<2>> {
        hamiltonian::split_2(&self.junction, &self.drive, i_dc, self.frame)
    }

    fn rates(&self, i_dc: f64) -> Result<RateSet> {
        self.rates_for(i_dc, false)
    }

    fn bias_limit(&self) -> f64 {
        self.junction.critical_current
    }
}

impl Dynamics<4> for JunctionModel {
    fn bias(&self, t: f64) -> f64 {
        self.drive.bias_at(t)
    }

    fn ramp_rate(&self) -> f64 {
        self.drive.ramp_rate
    }

    fn hamiltonian(&self, i_dc: f64) -> Result<SplitHamiltonian<4>> {
        hamiltonian::split_4(&self.junction, &self.tls_or_decoupled(), &self.drive, i_dc, self.frame)
    }

    fn rates(&self, i_dc: f64) -> Result<RateSet> {
        self.rates_for(i_dc, true)
    }

    fn bias_limit(&self) -> f64 {
        self.junction.critical_current
    }
}

/// Holds the bias fixed at `i_dc`; optionally suppresses all tunneling so
/// only relaxation remains.
#[derive(Debug, Clone, Copy)]
pub struct StaticBias<M> {
    pub inner: M,
    pub i_dc: f64,
    pub tunneling: bool,
}

impl<const N: usize, M: Dynamics<N>> Dynamics<N> for StaticBias<M> {
    fn bias(&self, _t: f64) -> f64 {
        self.i_dc
    }

    fn ramp_rate(&self) -> f64 {
        0.0
    }

    fn hamiltonian(&self, i_dc: f64) -> Result<SplitHamiltonian<N>> {
        self.inner.hamiltonian(i_dc)
    }

    fn rates(&self, i_dc: f64) -> Result<RateSet> {
        let r = self.inner.rates(i_dc)?;
        Ok(if self.tunneling { r } else { r.without_tunneling() })
    }

    fn bias_limit(&self) -> f64 {
        self.inner.bias_limit()
    }
}

/// Replaces every rate with zero; nothing can ever switch.
#[derive(Debug, Clone, Copy)]
pub struct NoDecay<M>(pub M);

impl<const N: usize, M: Dynamics<N>> Dynamics<N> for NoDecay<M> {
    fn bias(&self, t: f64) -> f64 {
        self.0.bias(t)
    }

    fn ramp_rate(&self) -> f64 {
        self.0.ramp_rate()
    }

    fn hamiltonian(&self, i_dc: f64) -> Result<SplitHamiltonian<N>> {
        self.0.hamiltonian(i_dc)
    }

    fn rates(&self, _i_dc: f64) -> Result<RateSet> {
        Ok(RateSet::all_zero())
    }

    fn bias_limit(&self) -> f64 {
        self.0.bias_limit()
    }
}
