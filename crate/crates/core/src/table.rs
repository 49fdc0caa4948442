//! Lookup table of per-detector click probabilities under the two hypotheses
//! the likelihood compares: Bob's bin was generated by Alice's published
//! symbol at a known straddle role, or by an unknown same-phase string.

use alloc::vec::Vec;

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::model::{click_probability_unchecked, sort_photons, AliceSymbol};

/// Lower clamp applied before taking logarithms.
pub const P_MIN: f64 = 1e-300;
/// Upper clamp applied before taking logarithms.
pub const P_MAX: f64 = 1.0 - 1e-15;

/// Which of the two occupied sampling bins a wavepacket portion falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The bin aligned with Alice's slot; receives `1 - alpha` of the wavepacket.
    Leading = 0,
    /// The following bin; receives `alpha` of the wavepacket.
    Trailing = 1,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Leading, Role::Trailing];
}

/// A probability together with the logs the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub p: f64,
    pub ln_p: f64,
    /// `ln(1 - p)`
    pub ln_q: f64,
}

impl Entry {
    fn new(p: f64) -> Self {
        let p = p.clamp(P_MIN, P_MAX);
        Entry {
            p,
            ln_p: libm::log(p),
            ln_q: libm::log1p(-p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTable {
    period: usize,
    alpha: f64,
    mu: f64,
    dark: f64,
    /// `[symbol][role][detector]` for the four duty-cycle symbols.
    signal: [[[Entry; 4]; 2]; 4],
    idle: [Entry; 4],
    /// `[phase][detector]` under the uninformed hypothesis.
    uninformed: Vec<[Entry; 4]>,
}

impl DetectionTable {
    /// Table at the configuration's received mean photon number.
    pub fn new(config: &ProtocolConfig, alpha: f64) -> Result<Self> {
        Self::with_mu(config, config.received_mu(), alpha)
    }

    /// Table for a received mean photon number `mu` that may differ from the
    /// configured one (e.g. an estimate from Bob's data).
    pub fn with_mu(config: &ProtocolConfig, mu: f64, alpha: f64) -> Result<Self> {
        config.validate()?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(alloc::format!(
                "straddle fraction must lie in [0, 1), got {alpha}"
            )));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::domain(alloc::format!(
                "mean photon number must be >= 0, got {mu}"
            )));
        }
        let dark = config.dark_per_sampling_bin();
        let eff = config.detector_efficiency;
        let fractions = [1.0 - alpha, alpha];

        let mut raw = [[[0.0; 4]; 2]; 4];
        for (s, sym) in AliceSymbol::SIGNAL.into_iter().enumerate() {
            let means = sort_photons(sym, mu)?;
            for (r, frac) in fractions.iter().enumerate() {
                for det in 0..4 {
                    raw[s][r][det] = click_probability_unchecked(eff[det] * means[det] * frac, dark);
                }
            }
        }

        let mix = config.state_probabilities.0;
        let period = config.period();
        let mut uninformed = Vec::with_capacity(period);
        for phase in 0..period {
            let mut row = [Entry::new(dark); 4];
            if phase < 2 {
                for (det, e) in row.iter_mut().enumerate() {
                    let p: f64 = (0..4).map(|s| mix[s] * raw[s][phase][det]).sum();
                    *e = Entry::new(p);
                }
            }
            uninformed.push(row);
        }

        let signal = raw.map(|roles| roles.map(|dets| dets.map(Entry::new)));
        Ok(DetectionTable {
            period,
            alpha,
            mu,
            dark,
            signal,
            idle: [Entry::new(dark); 4],
            uninformed,
        })
    }

    /// Number of phase classes (sampling bins per communication bin).
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Received mean photon number the table was built for.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Dark-count probability per detector per sampling bin.
    pub fn dark(&self) -> f64 {
        self.dark
    }

    /// Entry for a duty-cycle symbol; `Idle` returns the dark-only entry.
    pub fn signal(&self, symbol: AliceSymbol, role: Role, detector: usize) -> &Entry {
        match symbol.signal_index() {
            Some(s) => &self.signal[s][role as usize][detector],
            None => &self.idle[detector],
        }
    }

    pub fn idle(&self, detector: usize) -> &Entry {
        &self.idle[detector]
    }

    /// Uninformed entry for a bin at `phase` sampling bins after the start of
    /// its communication period (phase 0 is the leading bin).
    pub fn uninformed(&self, phase: usize, detector: usize) -> &Entry {
        &self.uninformed[phase % self.period][detector]
    }
}
