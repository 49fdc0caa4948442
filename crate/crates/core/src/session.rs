//! Simulated QKD sessions: Alice's published string, the ground-truth clock
//! offset and Bob's per-sampling-bin detector record.

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::model::{click_probability_unchecked, sort_photons, AliceSymbol};
use crate::rng::{stream, unit, StreamRole};

/// Alice's published string at sampling-bin resolution.
///
/// Each communication period of `period` slots carries one duty-cycle symbol
/// in slot 0 followed by `period - 1` idle slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliceString {
    symbols: Vec<AliceSymbol>,
    period: usize,
}

impl AliceString {
    /// Wraps a slot sequence, checking the duty-cycle structure.
    pub fn from_symbols(symbols: Vec<AliceSymbol>, period: usize) -> Result<Self> {
        if period < 2 {
            return Err(Error::domain(format!("period must be >= 2, got {period}")));
        }
        if symbols.is_empty() || symbols.len() % period != 0 {
            return Err(Error::domain(format!(
                "string length {} is not a positive multiple of the period {period}",
                symbols.len()
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if (i % period == 0) == s.is_idle() {
                return Err(Error::domain(format!(
                    "slot {i} holds {:?}, breaking the one-symbol-per-period structure",
                    s
                )));
            }
        }
        Ok(AliceString { symbols, period })
    }

    pub fn symbols(&self) -> &[AliceSymbol] {
        &self.symbols
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Length in sampling slots.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn comm_bins(&self) -> usize {
        self.symbols.len() / self.period
    }

    /// Symbol sent in communication bin `c`.
    pub fn symbol_at(&self, comm_bin: usize) -> AliceSymbol {
        self.symbols[comm_bin * self.period]
    }

    /// `len` slots starting at `start`, which must sit on a period boundary.
    pub fn segment(&self, start: usize, len: usize) -> Result<&[AliceSymbol]> {
        if start % self.period != 0 {
            return Err(Error::domain(format!(
                "segment start {start} is not aligned to the period {}",
                self.period
            )));
        }
        if len == 0 || start + len > self.symbols.len() {
            return Err(Error::domain(format!(
                "segment [{start}, {}) exceeds the string of length {}",
                start + len,
                self.symbols.len()
            )));
        }
        Ok(&self.symbols[start..start + len])
    }
}

/// Bob's detector outcomes, one byte per sampling bin; bits 0..4 are the
/// H, V, L and R detectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobRecord {
    outcomes: Vec<u8>,
}

impl BobRecord {
    pub fn from_outcomes(outcomes: Vec<u8>) -> Result<Self> {
        if let Some(i) = outcomes.iter().position(|&b| b > 0x0f) {
            return Err(Error::domain(format!(
                "outcome byte {:#04x} at bin {i} sets bits beyond the four detectors",
                outcomes[i]
            )));
        }
        Ok(BobRecord { outcomes })
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Bins with at least one click, as `(bin, outcome)`.
    pub fn events(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, &b)| (i, b))
    }

    /// Fraction of bins with any click.
    pub fn occupancy(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.events().count() as f64 / self.outcomes.len() as f64
    }
}

/// Where Alice's transmission really sits inside Bob's record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    /// Bob bin holding the leading portion of Alice's first wavepacket.
    pub true_offset_bins: usize,
    pub alpha: f64,
    pub drift_ppm: f64,
    /// First bin that can contain signal (equals `true_offset_bins`).
    pub transmission_start: usize,
    /// One past the last bin that can contain signal.
    pub transmission_end: usize,
    pub record_len: usize,
}

impl GroundTruth {
    /// Ground truth for a transmission of `comm_bins` periods starting at the
    /// configured initial offset and followed by `tail_bins` dark bins.
    pub fn for_session(config: &ProtocolConfig, comm_bins: usize, tail_bins: usize) -> Result<Self> {
        config.validate()?;
        if comm_bins == 0 {
            return Err(Error::domain("transmission must span at least one communication bin"));
        }
        let truth = GroundTruth {
            true_offset_bins: config.initial_offset.bins as usize,
            alpha: config.initial_offset.alpha,
            drift_ppm: config.drift_ppm,
            transmission_start: config.initial_offset.bins as usize,
            transmission_end: 0,
            record_len: 0,
        };
        let last = truth.leading_bin(config, comm_bins - 1)?;
        let first = truth.leading_bin(config, 0)?;
        let end = last.max(first) + 2;
        Ok(GroundTruth {
            transmission_end: end,
            record_len: end + tail_bins,
            ..truth
        })
    }

    /// Integer slip, in sampling bins, accumulated by communication bin `c`.
    pub fn slip(&self, config: &ProtocolConfig, comm_bin: usize) -> i64 {
        let rate = self.drift_ppm * 1e-6 * config.n_sampling as f64;
        libm::floor(comm_bin as f64 * rate + 1e-9) as i64
    }

    /// Bob bin receiving the leading portion of communication bin `c`'s wavepacket.
    pub fn leading_bin(&self, config: &ProtocolConfig, comm_bin: usize) -> Result<usize> {
        let pos = self.true_offset_bins as i64
            + (comm_bin * config.period()) as i64
            + self.slip(config, comm_bin);
        usize::try_from(pos).map_err(|_| {
            Error::domain(format!(
                "drift moves communication bin {comm_bin} before the start of the record"
            ))
        })
    }

    /// Offset of the wavepacket sent at Alice slot `slot` relative to that slot,
    /// i.e. the clock offset in effect there.
    pub fn offset_at_slot(&self, config: &ProtocolConfig, slot: usize) -> i64 {
        self.true_offset_bins as i64 + self.slip(config, slot / config.period())
    }
}

/// Draws Alice's symbols for `comm_bins` communication bins.
pub fn generate_alice(config: &ProtocolConfig, comm_bins: usize, seed: u64) -> Result<AliceString> {
    generate_alice_with(config, comm_bins, &mut stream(seed, 0, StreamRole::Alice))
}

/// [`generate_alice`] drawing from a caller-supplied stream.
pub fn generate_alice_with(
    config: &ProtocolConfig,
    comm_bins: usize,
    rng: &mut impl RngCore,
) -> Result<AliceString> {
    config.validate()?;
    if comm_bins == 0 {
        return Err(Error::domain("Alice's string needs at least one communication bin"));
    }
    let period = config.period();
    let cumulative = config.state_probabilities.cumulative();
    let mut symbols = Vec::with_capacity(comm_bins * period);
    for _ in 0..comm_bins {
        let u = unit(rng);
        let idx = cumulative.iter().position(|&c| u < c).unwrap_or_else(|| {
            // rounding left the last threshold below 1; take the last symbol with mass
            (0..4).rev().find(|&i| config.state_probabilities.0[i] > 0.0).unwrap_or(3)
        });
        symbols.push(AliceSymbol::SIGNAL[idx]);
        symbols.extend(core::iter::repeat(AliceSymbol::Idle).take(period - 1));
    }
    AliceString::from_symbols(symbols, period)
}

/// Generates Bob's record for Alice's string under the given ground truth.
pub fn simulate_bob(
    alice: &AliceString,
    config: &ProtocolConfig,
    truth: &GroundTruth,
    seed: u64,
) -> Result<BobRecord> {
    simulate_bob_with(alice, config, truth, &mut stream(seed, 0, StreamRole::Bob))
}

/// [`simulate_bob`] drawing from a caller-supplied stream.
///
/// Every bin consumes exactly four uniforms (one per detector) in bin order,
/// so records of different lengths drawn from the same stream share their
/// common prefix.
pub fn simulate_bob_with(
    alice: &AliceString,
    config: &ProtocolConfig,
    truth: &GroundTruth,
    rng: &mut impl RngCore,
) -> Result<BobRecord> {
    config.validate()?;
    if alice.period() != config.period() {
        return Err(Error::domain(format!(
            "Alice's period {} differs from the configured n = {}",
            alice.period(),
            config.period()
        )));
    }
    if !(0.0..1.0).contains(&truth.alpha) {
        return Err(Error::domain(format!(
            "straddle fraction must lie in [0, 1), got {}",
            truth.alpha
        )));
    }
    if truth.transmission_start != truth.true_offset_bins {
        return Err(Error::domain(
            "transmission start disagrees with the true offset",
        ));
    }
    if truth.transmission_end > truth.record_len {
        return Err(Error::domain(format!(
            "transmission ends at {} beyond the record length {}",
            truth.transmission_end, truth.record_len
        )));
    }

    let mu = config.received_mu();
    let eff = config.detector_efficiency;
    let dark = config.dark_per_sampling_bin();
    let shares = [1.0 - truth.alpha, truth.alpha];

    // Signal-bearing bins in increasing order: (bin, per-detector photon number).
    let mut lit: Vec<(usize, [f64; 4])> = Vec::new();
    for c in 0..alice.comm_bins() {
        let sym = alice.symbol_at(c);
        if sym == AliceSymbol::Vacuum || mu == 0.0 {
            continue;
        }
        let means = sort_photons(sym, mu)?;
        let lead = truth.leading_bin(config, c)?;
        for (k, share) in shares.iter().enumerate() {
            if *share == 0.0 {
                continue;
            }
            let bin = lead + k;
            if bin >= truth.transmission_end {
                return Err(Error::domain(format!(
                    "wavepacket {c} lands at bin {bin}, past the declared transmission end {}",
                    truth.transmission_end
                )));
            }
            let mut m = [0.0; 4];
            for det in 0..4 {
                m[det] = eff[det] * means[det] * share;
            }
            match lit.last_mut() {
                Some((b, acc)) if *b == bin => {
                    for det in 0..4 {
                        acc[det] += m[det];
                    }
                }
                _ => lit.push((bin, m)),
            }
        }
    }

    let mut outcomes = Vec::with_capacity(truth.record_len);
    let mut next = lit.iter().peekable();
    for bin in 0..truth.record_len {
        let mut probs = [dark; 4];
        if let Some((b, m)) = next.peek() {
            if *b == bin {
                for det in 0..4 {
                    probs[det] = click_probability_unchecked(m[det], dark);
                }
                next.next();
            }
        }
        let mut byte = 0u8;
        for (det, p) in probs.iter().enumerate() {
            if unit(rng) < *p {
                byte |= 1 << det;
            }
        }
        outcomes.push(byte);
    }
    Ok(BobRecord { outcomes })
}

/// A complete simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub config: ProtocolConfig,
    pub truth: GroundTruth,
    pub alice: AliceString,
    pub bob: BobRecord,
}

impl Session {
    /// Simulates `comm_bins` communication bins starting at the configured
    /// initial offset, followed by `tail_bins` of dark-only record.
    pub fn simulate(
        config: &ProtocolConfig,
        comm_bins: usize,
        tail_bins: usize,
        seed: u64,
    ) -> Result<Self> {
        let truth = GroundTruth::for_session(config, comm_bins, tail_bins)?;
        let alice = generate_alice(config, comm_bins, seed)?;
        let bob = simulate_bob(&alice, config, &truth, seed)?;
        Ok(Session {
            config: config.clone(),
            truth,
            alice,
            bob,
        })
    }
}
