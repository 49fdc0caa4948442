//! Pair counting between Alice's published segment and Bob's record.
//!
//! For every candidate lag the likelihood only needs, per (Alice symbol,
//! detector), how many of Bob's bins clicked. Those counts are
//! cross-correlations of 0/1 indicator sequences, computed with FFTs: two
//! Alice symbols are packed into the real and imaginary parts of one
//! transform, and two detectors share one transform of Bob's record and are
//! split apart by conjugate symmetry. The idle-symbol counts follow from a
//! sliding-window click sum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Radix2;
use crate::model::AliceSymbol;

/// Per-lag pair counts plus the record summaries the likelihood needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    comparison_len: usize,
    period: usize,
    /// `counts[lag][symbol][detector]` for lags `0..=window`.
    counts: Vec<[[u32; 4]; 5]>,
    /// Occurrences of each symbol in Alice's segment. Every lag sees the
    /// whole segment, so these do not depend on the lag.
    totals: [u32; 5],
    /// Bob's clicks per detector, by record index modulo `period`.
    phase_clicks: Vec<[u64; 4]>,
    /// Bob's bins per record index modulo `period`.
    phase_bins: Vec<u64>,
    last_symbol: AliceSymbol,
    /// Bob's outcomes at `comparison_len + lag`, for lags `0..window`.
    boundary: Vec<u8>,
    periodic: bool,
}

impl PairCounts {
    /// `N`, the length of Alice's segment in sampling bins.
    pub fn comparison_len(&self) -> usize {
        self.comparison_len
    }

    /// `M`, the number of candidate offsets.
    pub fn window(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Number of Bob bins at `lag` paired with `symbol` where `detector` clicked.
    /// Valid for `lag` in `0..=window()`.
    pub fn count(&self, lag: usize, symbol: AliceSymbol, detector: usize) -> u32 {
        self.counts[lag][symbol as usize][detector]
    }

    /// Number of Bob bins at `lag` paired with `symbol`.
    pub fn total(&self, _lag: usize, symbol: AliceSymbol) -> u32 {
        self.totals[symbol as usize]
    }

    pub fn phase_clicks(&self, phase: usize) -> &[u64; 4] {
        &self.phase_clicks[phase]
    }

    pub fn phase_bins(&self, phase: usize) -> u64 {
        self.phase_bins[phase]
    }

    /// Last symbol of Alice's segment; its trailing bin falls just outside the
    /// compared window.
    pub fn last_symbol(&self) -> AliceSymbol {
        self.last_symbol
    }

    /// Bob's outcome in the bin right after the compared window at `lag`.
    pub fn boundary_outcome(&self, lag: usize) -> u8 {
        self.boundary[lag]
    }

    /// Whether Alice's segment has the duty-cycle layout (symbol in slot 0 of
    /// every period, idle elsewhere) starting on a period boundary.
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }
}

/// Counts symbol/click pairings of `alice` (length `N`) against every
/// placement inside `bob` (length `N + M`), for lags `0..=M`.
pub fn count_pairings(alice: &[AliceSymbol], bob: &[u8], period: usize) -> Result<PairCounts> {
    let n = alice.len();
    if n == 0 {
        return Err(Error::domain("Alice's segment is empty"));
    }
    if period == 0 {
        return Err(Error::domain("period must be positive"));
    }
    if bob.len() <= n {
        return Err(Error::domain(format!(
            "Bob's segment ({} bins) must be longer than Alice's ({n} bins)",
            bob.len()
        )));
    }
    if let Some(i) = bob.iter().position(|&b| b > 0x0f) {
        return Err(Error::domain(format!("invalid outcome byte at bin {i}")));
    }
    let window = bob.len() - n;
    let lags = window + 1;

    let mut totals = [0u32; 5];
    for &s in alice {
        totals[s as usize] += 1;
    }

    let fft_len = bob.len().next_power_of_two();
    let plan = Radix2::new(fft_len)?;

    // Alice: (H + iL) and (R + i vacuum).
    let mut alice_spec = [
        vec![Complex64::new(0.0, 0.0); fft_len],
        vec![Complex64::new(0.0, 0.0); fft_len],
    ];
    for (k, &s) in alice.iter().enumerate() {
        match s {
            AliceSymbol::H => alice_spec[0][k].re = 1.0,
            AliceSymbol::L => alice_spec[0][k].im = 1.0,
            AliceSymbol::R => alice_spec[1][k].re = 1.0,
            AliceSymbol::Vacuum => alice_spec[1][k].im = 1.0,
            AliceSymbol::Idle => {}
        }
    }
    // Bob: (H + iV) and (L + iR).
    let mut bob_spec = [
        vec![Complex64::new(0.0, 0.0); fft_len],
        vec![Complex64::new(0.0, 0.0); fft_len],
    ];
    for (k, &b) in bob.iter().enumerate() {
        bob_spec[0][k] = Complex64::new((b & 1) as f64, (b >> 1 & 1) as f64);
        bob_spec[1][k] = Complex64::new((b >> 2 & 1) as f64, (b >> 3 & 1) as f64);
    }
    for spec in alice_spec.iter_mut().chain(bob_spec.iter_mut()) {
        plan.forward(spec);
    }

    let mut counts = vec![[[0u32; 4]; 5]; lags];
    let mut work = vec![Complex64::new(0.0, 0.0); fft_len];
    let half = Complex64::new(0.5, 0.0);
    let neg_half_i = Complex64::new(0.0, -0.5);
    for det in 0..4 {
        let z = &bob_spec[det / 2];
        let imag_part = det % 2 == 1;
        for (pack, a) in alice_spec.iter().enumerate() {
            for f in 0..fft_len {
                let mirror = (fft_len - f) & (fft_len - 1);
                let zc = z[mirror].conj();
                // spectrum of one real detector sequence out of the packed pair
                let b = if imag_part {
                    (z[f] - zc) * neg_half_i
                } else {
                    (z[f] + zc) * half
                };
                // correlation: Alice enters time-reversed, i.e. frequency-mirrored
                work[f] = a[mirror] * b;
            }
            plan.inverse(&mut work);
            let (sym_re, sym_im) = (2 * pack, 2 * pack + 1);
            for lag in 0..lags {
                let v = work[lag];
                counts[lag][sym_re][det] = round_count(v.re, totals[sym_re], lag)?;
                counts[lag][sym_im][det] = round_count(v.im, totals[sym_im], lag)?;
            }
        }
    }

    // Idle pairs: all clicks in the window minus those paired with a symbol.
    let mut prefix = vec![[0u32; 4]; bob.len() + 1];
    for (k, &b) in bob.iter().enumerate() {
        let mut next = prefix[k];
        for (det, p) in next.iter_mut().enumerate() {
            *p += (b >> det & 1) as u32;
        }
        prefix[k + 1] = next;
    }
    let idle = AliceSymbol::Idle as usize;
    for (lag, row) in counts.iter_mut().enumerate() {
        for det in 0..4 {
            let in_window = prefix[lag + n][det] - prefix[lag][det];
            let paired: u32 = (0..4).map(|s| row[s][det]).sum();
            let c = in_window.checked_sub(paired).ok_or_else(|| {
                Error::Numerical(format!("pair counts exceed window clicks at lag {lag}"))
            })?;
            if c > totals[idle] {
                return Err(Error::Numerical(format!(
                    "idle pair count exceeds idle total at lag {lag}"
                )));
            }
            row[idle][det] = c;
        }
    }

    let mut phase_clicks = vec![[0u64; 4]; period];
    let mut phase_bins = vec![0u64; period];
    for (k, &b) in bob.iter().enumerate() {
        let r = k % period;
        phase_bins[r] += 1;
        for det in 0..4 {
            phase_clicks[r][det] += (b >> det & 1) as u64;
        }
    }

    let periodic = alice
        .iter()
        .enumerate()
        .all(|(k, s)| (k % period == 0) != s.is_idle());

    Ok(PairCounts {
        comparison_len: n,
        period,
        counts,
        totals,
        phase_clicks,
        phase_bins,
        last_symbol: alice[n - 1],
        boundary: bob[n..].to_vec(),
        periodic,
    })
}

fn round_count(value: f64, total: u32, lag: usize) -> Result<u32> {
    let rounded = libm::round(value);
    if !(libm::fabs(value - rounded) < 0.25) || rounded < 0.0 || rounded > total as f64 {
        return Err(Error::Numerical(format!(
            "correlation value {value} at lag {lag} is not a valid count (total {total})"
        )));
    }
    Ok(rounded as u32)
}
