//! Coarse location of the transmission inside Bob's record.
//!
//! Bob records before Alice starts and after she stops, so the aggregate click
//! rate is a raised plateau between two dark bookends. A two-level step
//! function is fitted to block-summed click counts by exhaustive search over
//! block boundaries, and the candidate window is centered on the fitted rise.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::session::BobRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseParams {
    /// Sampling bins summed per block before fitting.
    pub block: usize,
    /// Number of candidate offsets in the returned window.
    pub window: usize,
    /// Minimum z-score of the plateau above the bookend rate.
    pub min_z: f64,
}

impl Default for CoarseParams {
    fn default() -> Self {
        CoarseParams {
            block: 512,
            window: crate::DEFAULT_WINDOW,
            min_z: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoarseWindow {
    /// Record index of candidate offset 0.
    pub start: usize,
    /// Number of candidates `M`.
    pub width: usize,
    /// Fitted first bin of the transmission.
    pub edge: usize,
    /// Fitted end (exclusive) of the transmission.
    pub end: usize,
    /// Clicks per bin (all detectors) inside and outside the plateau.
    pub inside_rate: f64,
    pub outside_rate: f64,
    pub z_score: f64,
}

/// Fits the step function and returns a window of candidate offsets centered
/// on the fitted start of transmission.
pub fn coarse_estimate(bob: &BobRecord, params: &CoarseParams) -> Result<CoarseWindow> {
    if params.block == 0 || params.window == 0 {
        return Err(Error::domain("block and window sizes must be positive"));
    }
    let bins = bob.outcomes();
    let blocks: Vec<(f64, f64)> = bins
        .chunks(params.block)
        .map(|c| {
            let clicks: u32 = c.iter().map(|b| b.count_ones()).sum();
            (clicks as f64, c.len() as f64)
        })
        .collect();
    if blocks.len() < 2 {
        return Err(Error::CoarseEstimationFailed(format!(
            "record of {} bins is shorter than two {}-bin blocks",
            bins.len(),
            params.block
        )));
    }

    // prefix sums of clicks and lengths
    let mut sum = Vec::with_capacity(blocks.len() + 1);
    let mut len = Vec::with_capacity(blocks.len() + 1);
    sum.push(0.0);
    len.push(0.0);
    for (s, l) in &blocks {
        sum.push(sum.last().unwrap() + s);
        len.push(len.last().unwrap() + l);
    }
    let total = *sum.last().unwrap();
    let total_len = *len.last().unwrap();
    if total == 0.0 {
        return Err(Error::CoarseEstimationFailed("record contains no clicks".into()));
    }

    // Minimizing squared error over the two levels is maximizing
    // S_in^2 / L_in + S_out^2 / L_out; only rises (inside above outside) count.
    let nb = blocks.len();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for a in 0..nb {
        for b in (a + 1)..=nb {
            let s_in = sum[b] - sum[a];
            let l_in = len[b] - len[a];
            let l_out = total_len - l_in;
            if l_out == 0.0 {
                continue;
            }
            let s_out = total - s_in;
            if s_in * l_out <= s_out * l_in {
                continue;
            }
            let score = s_in * s_in / l_in + s_out * s_out / l_out;
            if score > best.0 {
                best = (score, a, b);
            }
        }
    }
    let (_, a, b) = best;
    if !best.0.is_finite() {
        return Err(Error::CoarseEstimationFailed(
            "no raised plateau in the click rate".into(),
        ));
    }

    let l_in = len[b] - len[a];
    let l_out = total_len - l_in;
    let inside_rate = (sum[b] - sum[a]) / l_in;
    let outside_rate = (total - (sum[b] - sum[a])) / l_out;
    let pooled = total / total_len;
    let z_score = (inside_rate - outside_rate) / libm::sqrt(pooled * (1.0 / l_in + 1.0 / l_out));
    if !(z_score >= params.min_z) {
        return Err(Error::CoarseEstimationFailed(format!(
            "step of {inside_rate:.3e} over {outside_rate:.3e} clicks/bin has z = {z_score:.2}, below {}",
            params.min_z
        )));
    }

    let edge = a * params.block;
    let end = (b * params.block).min(bins.len());
    Ok(CoarseWindow {
        start: edge.saturating_sub(params.window / 2),
        width: params.window,
        edge,
        end,
        inside_rate,
        outside_rate,
        z_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Offset, ProtocolConfig};
    use crate::session::Session;
    use alloc::vec;

    #[test]
    fn all_dark_record_fails() {
        let mut cfg = ProtocolConfig::with_received(0.0, 8e-4);
        cfg.initial_offset = Offset { bins: 50_000, alpha: 0.5 };
        let s = Session::simulate(&cfg, 20_000, 50_000, 4).unwrap();
        let err = coarse_estimate(&s.bob, &CoarseParams::default()).unwrap_err();
        assert!(matches!(err, Error::CoarseEstimationFailed(_)), "{err:?}");

        let silent = BobRecord::from_outcomes(vec![0; 10_000]).unwrap();
        assert!(matches!(
            coarse_estimate(&silent, &CoarseParams::default()),
            Err(Error::CoarseEstimationFailed(_))
        ));
    }

    #[test]
    fn noise_free_step_is_located_within_one_block() {
        let true_edge = 37_123;
        let mut out = vec![0u8; 200_000];
        for (i, b) in out.iter_mut().enumerate() {
            if (true_edge..150_000).contains(&i) && i % 8 == true_edge % 8 {
                *b = 0b0101;
            }
        }
        let rec = BobRecord::from_outcomes(out).unwrap();
        let w = coarse_estimate(&rec, &CoarseParams::default()).unwrap();
        let center = w.start + w.width / 2;
        assert!(center.abs_diff(true_edge) <= 512, "center {center}");
        assert!(w.end.abs_diff(150_000) <= 512);
    }

    #[test]
    fn window_contains_truth_at_high_mu() {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut cfg = ProtocolConfig::with_received(1.0, 8e-4);
            cfg.initial_offset = Offset {
                bins: 20_000 + seed * 37,
                alpha: 0.5,
            };
            let s = Session::simulate(&cfg, 4_000, 20_000, seed).unwrap();
            let w = coarse_estimate(&s.bob, &CoarseParams::default()).unwrap();
            let j = s.truth.true_offset_bins;
            if (w.start..w.start + w.width).contains(&j) {
                hits += 1;
            }
        }
        assert!(hits >= 99, "{hits}/100");
    }
}
