//! Physical and protocol parameters of a simulated link.

use alloc::format;

use crate::error::{Error, Result};
use crate::model::AliceSymbol;

/// Probabilities of Alice's four transmitted symbols, in the order H, L, R, vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateMix(pub [f64; 4]);

impl StateMix {
    /// The model system's mix: every symbol a quarter of the time.
    pub const EQUAL: StateMix = StateMix([0.25; 4]);

    pub fn probability(&self, symbol: AliceSymbol) -> f64 {
        match symbol.signal_index() {
            Some(i) => self.0[i],
            None => 0.0,
        }
    }

    pub fn vacuum(&self) -> f64 {
        self.0[3]
    }

    /// Cumulative thresholds for inverse-CDF sampling.
    pub(crate) fn cumulative(&self) -> [f64; 4] {
        let mut acc = 0.0;
        let mut out = [0.0; 4];
        for (o, p) in out.iter_mut().zip(self.0) {
            acc += p;
            *o = acc;
        }
        out
    }
}

impl Default for StateMix {
    fn default() -> Self {
        StateMix::EQUAL
    }
}

/// Initial clock offset: whole sampling bins plus the sub-bin straddle fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Offset {
    pub bins: u64,
    /// Portion of the wavepacket that spills into the trailing sampling bin, in `[0, 1)`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolConfig {
    /// Communication bin width in seconds. Only used for reporting.
    pub tau_a: f64,
    /// Duty-cycle divisor: the wavepacket lasts `tau_a / m`.
    pub m: u32,
    /// Bob samples `n_sampling` times per communication bin.
    pub n_sampling: u32,
    /// Transmitted mean photon number of a signal state.
    pub mu_a: f64,
    /// Channel transmission; the received mean photon number is `eta * mu_a`.
    pub eta: f64,
    /// Dark-count probability per detector per communication bin.
    pub dark_prob_comm_bin: f64,
    pub state_probabilities: StateMix,
    /// Detection efficiency per detector, order H, V, L, R.
    pub detector_efficiency: [f64; 4],
    /// Fractional clock rate mismatch `(tau_a - tau_b) / tau_a`, in parts per million.
    pub drift_ppm: f64,
    pub initial_offset: Offset,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            tau_a: 1.0,
            m: 8,
            n_sampling: 8,
            mu_a: 1.0,
            eta: 1.0,
            dark_prob_comm_bin: 8e-4,
            state_probabilities: StateMix::EQUAL,
            detector_efficiency: [1.0; 4],
            drift_ppm: 0.0,
            initial_offset: Offset {
                bins: 0,
                alpha: 0.5,
            },
        }
    }
}

impl ProtocolConfig {
    /// Configuration with the given received mean photon number (`mu_a = 1`, `eta = mu`)
    /// and dark-count probability, all other fields at their defaults.
    pub fn with_received(mu: f64, dark: f64) -> Self {
        ProtocolConfig {
            mu_a: 1.0,
            eta: mu,
            dark_prob_comm_bin: dark,
            ..ProtocolConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_a.is_finite() && self.tau_a > 0.0) {
            return Err(Error::config("tau_a", format!("must be positive, got {}", self.tau_a)));
        }
        if self.n_sampling < 2 {
            return Err(Error::config(
                "n_sampling",
                format!("must be at least 2, got {}", self.n_sampling),
            ));
        }
        if self.m != self.n_sampling {
            return Err(Error::Unsupported(format!(
                "duty-cycle divisor m = {} differs from sampling multiplier n = {}; only m = n is modeled",
                self.m, self.n_sampling
            )));
        }
        if !(self.mu_a.is_finite() && self.mu_a >= 0.0) {
            return Err(Error::config("mu_a", format!("must be >= 0, got {}", self.mu_a)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.dark_prob_comm_bin) {
            return Err(Error::config(
                "dark_prob_comm_bin",
                format!("must lie in [0, 1), got {}", self.dark_prob_comm_bin),
            ));
        }
        let probs = self.state_probabilities.0;
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config(
                "state_probabilities",
                "entries must be finite and non-negative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if libm::fabs(total - 1.0) > 1e-12 {
            return Err(Error::config(
                "state_probabilities",
                format!("must sum to 1, got {total}"),
            ));
        }
        if self
            .detector_efficiency
            .iter()
            .any(|e| !(0.0..=1.0).contains(e))
        {
            return Err(Error::config(
                "detector_efficiency",
                "entries must lie in [0, 1]",
            ));
        }
        if !self.drift_ppm.is_finite() {
            return Err(Error::config("drift_ppm", "must be finite"));
        }
        if !(0.0..1.0).contains(&self.initial_offset.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must lie in [0, 1), got {}", self.initial_offset.alpha),
            ));
        }
        Ok(())
    }

    /// Received mean photon number of a signal state.
    pub fn received_mu(&self) -> f64 {
        self.eta * self.mu_a
    }

    /// Sampling bins per communication bin.
    pub fn period(&self) -> usize {
        self.n_sampling as usize
    }

    /// Dark-count probability per detector per sampling bin, `1 - (1 - d)^(1/n)`.
    pub fn dark_per_sampling_bin(&self) -> f64 {
        crate::model::dark_per_sub_bin(self.dark_prob_comm_bin, self.n_sampling)
    }

    /// Accumulated offset change, in sampling bins, per communication bin elapsed.
    pub fn slip_per_comm_bin(&self) -> f64 {
        self.drift_ppm * 1e-6 * self.n_sampling as f64
    }
}
