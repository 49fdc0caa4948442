//! Photon statistics of the model system: ideal BB84 polarization sorting,
//! Poisson click probabilities with dark counts, and mean-photon-number
//! estimation from observed click rates.

use alloc::format;

use crate::config::StateMix;
use crate::error::{Error, Result};

/// One entry of Alice's published string, at sampling-bin resolution.
///
/// `Vacuum` occupies a duty-cycle slot with no photons; `Idle` is any slot
/// outside the wavepacket's duty cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[repr(u8)]
pub enum AliceSymbol {
    H = 0,
    L = 1,
    R = 2,
    Vacuum = 3,
    Idle = 4,
}

impl AliceSymbol {
    pub const ALL: [AliceSymbol; 5] = [
        AliceSymbol::H,
        AliceSymbol::L,
        AliceSymbol::R,
        AliceSymbol::Vacuum,
        AliceSymbol::Idle,
    ];

    /// The four symbols that occupy a duty-cycle slot.
    pub const SIGNAL: [AliceSymbol; 4] = [
        AliceSymbol::H,
        AliceSymbol::L,
        AliceSymbol::R,
        AliceSymbol::Vacuum,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        AliceSymbol::ALL.get(code as usize).copied()
    }

    /// Index into the four duty-cycle symbols, `None` for `Idle`.
    pub fn signal_index(self) -> Option<usize> {
        match self {
            AliceSymbol::Idle => None,
            s => Some(s as usize),
        }
    }

    pub fn is_idle(self) -> bool {
        self == AliceSymbol::Idle
    }

    pub fn label(self) -> &'static str {
        match self {
            AliceSymbol::H => "H",
            AliceSymbol::L => "L",
            AliceSymbol::R => "R",
            AliceSymbol::Vacuum => "vac",
            AliceSymbol::Idle => "-",
        }
    }
}

/// Bob's four single-photon detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Detector {
    H = 0,
    V = 1,
    L = 2,
    R = 3,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::H, Detector::V, Detector::L, Detector::R];

    /// Bit of this detector in a packed outcome byte (bit 0 = H ... bit 3 = R).
    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Mean photon number reaching each detector, order H, V, L, R.
pub type DetectorMeans = [f64; 4];

/// Probability that a detector clicks at least once in a bin where it
/// receives `mu_detector` photons on average and has dark-count probability `dark`.
///
/// `1 - (1 - dark) * exp(-mu)`: no click requires both no dark count and zero
/// Poisson photons.
pub fn click_probability(mu_detector: f64, dark: f64) -> Result<f64> {
    if !(mu_detector.is_finite() && mu_detector >= 0.0) {
        return Err(Error::domain(format!(
            "mean photon number must be >= 0, got {mu_detector}"
        )));
    }
    check_dark(dark)?;
    Ok(click_probability_unchecked(mu_detector, dark))
}

#[inline]
pub(crate) fn click_probability_unchecked(mu: f64, dark: f64) -> f64 {
    -libm::expm1(libm::log1p(-dark) - mu)
}

/// Inverse of [`click_probability`] in the photon number: `ln((1 - dark) / (1 - p))`.
pub fn invert_click_probability(p_click: f64, dark: f64) -> Result<f64> {
    check_dark(dark)?;
    if !(p_click < 1.0) {
        return Err(Error::domain(format!(
            "click probability must be < 1, got {p_click}"
        )));
    }
    if !(p_click >= dark) {
        return Err(Error::domain(format!(
            "click probability {p_click} is below the dark-count probability {dark}"
        )));
    }
    Ok(libm::log1p(-dark) - libm::log1p(-p_click))
}

fn check_dark(dark: f64) -> Result<()> {
    if !(0.0..1.0).contains(&dark) {
        return Err(Error::domain(format!(
            "dark-count probability must lie in [0, 1), got {dark}"
        )));
    }
    Ok(())
}

/// Dark-count probability over `1/parts` of a bin, given probability `dark`
/// over the whole bin and independent sub-bins.
pub fn dark_per_sub_bin(dark: f64, parts: u32) -> f64 {
    -libm::expm1(libm::log1p(-dark) / parts as f64)
}

/// Ideal BB84 sorting of a received wavepacket onto Bob's four detectors.
///
/// Half of the photons are measured in the preparation basis and land on the
/// matching detector; the other half split evenly across the conjugate basis.
pub fn sort_photons(symbol: AliceSymbol, mu_total: f64) -> Result<DetectorMeans> {
    if !(mu_total >= 0.0) {
        return Err(Error::domain(format!(
            "mean photon number must be >= 0, got {mu_total}"
        )));
    }
    let half = mu_total / 2.0;
    let quarter = mu_total / 4.0;
    Ok(match symbol {
        AliceSymbol::H => [half, 0.0, quarter, quarter],
        AliceSymbol::L => [quarter, quarter, half, 0.0],
        AliceSymbol::R => [quarter, quarter, 0.0, half],
        AliceSymbol::Vacuum | AliceSymbol::Idle => [0.0; 4],
    })
}

/// Closed-form received mean photon number from per-detector click
/// probabilities per communication bin, for the equal four-symbol mix.
///
/// Sums the per-detector photon numbers recovered by
/// [`invert_click_probability`] and scales by 4/3 because a quarter of the
/// slots carry vacuum. Exact only to first order in the photon number; see
/// [`solve_mu`] for the exact inversion.
pub fn estimate_mu(click_rates: &[f64; 4], dark: f64) -> Result<f64> {
    estimate_mu_with_mix(click_rates, dark, &StateMix::EQUAL)
}

/// [`estimate_mu`] for an arbitrary symbol mix: the sum is divided by the
/// non-vacuum fraction.
pub fn estimate_mu_with_mix(click_rates: &[f64; 4], dark: f64, mix: &StateMix) -> Result<f64> {
    check_dark(dark)?;
    let signal_fraction = 1.0 - mix.vacuum();
    if !(signal_fraction > 0.0) {
        return Err(Error::domain("state mix sends only vacuum"));
    }
    let sum = photon_sum(click_rates, dark)?;
    Ok((sum / signal_fraction).max(0.0))
}

fn photon_sum(click_rates: &[f64; 4], dark: f64) -> Result<f64> {
    let mut sum = 0.0;
    for &p in click_rates {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::domain(format!(
                "click rate must lie in [0, 1), got {p}"
            )));
        }
        sum += libm::log1p(-dark) - libm::log1p(-p);
    }
    Ok(sum)
}

/// Exact received mean photon number from click probabilities measured over
/// a window that contains exactly one whole wavepacket per communication bin.
///
/// The per-detector no-click probability over the window is
/// `(1 - dark) * sum_s P(s) exp(-eff * mu_l(s))`; this solves for the `mu`
/// whose summed log no-click ratio matches the observed one. `dark` is the
/// dark-count probability over the same window.
pub fn solve_mu(
    click_rates: &[f64; 4],
    dark: f64,
    mix: &StateMix,
    efficiency: &[f64; 4],
) -> Result<f64> {
    check_dark(dark)?;
    let target = photon_sum(click_rates, dark)?;
    if target <= 0.0 {
        return Ok(0.0);
    }
    let statistic = |mu: f64| -> f64 {
        let mut per_symbol = [[0.0; 4]; 4];
        for (row, sym) in per_symbol.iter_mut().zip(AliceSymbol::SIGNAL) {
            // mu >= 0 always holds here
            *row = sort_photons(sym, mu).unwrap_or([0.0; 4]);
        }
        let mut total = 0.0;
        for det in 0..4 {
            let mut mean_no_click = 0.0;
            for (s, row) in per_symbol.iter().enumerate() {
                mean_no_click += mix.0[s] * libm::exp(-efficiency[det] * row[det]);
            }
            total -= libm::log(mean_no_click);
        }
        total
    };
    // The statistic is increasing in mu; bracket then bisect.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while statistic(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical(format!(
                "click rates imply no finite photon number (statistic {target})"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statistic(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
