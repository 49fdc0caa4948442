//! End-to-end synchronization: coarse window, photon-number estimate, lookup
//! table, pair counts, likelihood and posterior, plus batched tracking of a
//! drifting offset.

use alloc::format;
use alloc::vec::Vec;

use crate::coarse::{coarse_estimate, CoarseParams, CoarseWindow};
use crate::config::ProtocolConfig;
use crate::counts::count_pairings;
use crate::error::{Error, Result};
use crate::likelihood::{argmax, log_likelihood_window, posterior};
use crate::model::{estimate_mu_with_mix, AliceSymbol};
use crate::session::{AliceString, BobRecord};
use crate::stats::{weighted_line_fit, LineFit};
use crate::table::DetectionTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOptions {
    /// Number of candidate offsets `M`.
    pub window: usize,
    /// Block length of the coarse step fit.
    pub block: usize,
    /// Minimum z-score the coarse step must reach.
    pub min_z: f64,
    /// Straddle fraction assumed when building the lookup table.
    pub model_alpha: f64,
    /// Received mean photon number to use instead of the estimate.
    pub mu_override: Option<f64>,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            window: crate::DEFAULT_WINDOW,
            block: 512,
            min_z: 8.0,
            model_alpha: 0.5,
            mu_override: None,
        }
    }
}

impl SyncOptions {
    fn coarse_params(&self) -> CoarseParams {
        CoarseParams {
            block: self.block,
            window: self.window,
            min_z: self.min_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyncResult {
    /// Record index of Bob's bin aligned with the first slot of Alice's segment.
    pub best_index: usize,
    /// Posterior probability of `best_index`.
    pub confidence: f64,
    /// Posterior over the candidates `window_start..window_start + M`.
    pub posterior: Vec<f64>,
    pub window_start: usize,
    /// Received mean photon number estimated from Bob's record.
    pub mu_estimate: f64,
    /// Mean photon number the lookup table was built with.
    pub mu_model: f64,
}

/// Posterior over `window` candidate placements of `alice_segment` in `bob`
/// starting at record index `window_start`.
pub fn sync_window(
    alice_segment: &[AliceSymbol],
    bob: &[u8],
    window_start: usize,
    window: usize,
    table: &DetectionTable,
) -> Result<SyncResult> {
    if window == 0 {
        return Err(Error::domain("candidate window must be non-empty"));
    }
    let end = window_start + alice_segment.len() + window;
    if end > bob.len() {
        return Err(Error::domain(format!(
            "candidate window needs record bins up to {end} but the record has {}",
            bob.len()
        )));
    }
    let counts = count_pairings(alice_segment, &bob[window_start..end], table.period())?;
    let log_num = log_likelihood_window(&counts, table)?;
    let post = posterior(&log_num)?;
    let best = argmax(&post).ok_or_else(|| Error::Numerical("empty posterior".into()))?;
    Ok(SyncResult {
        best_index: window_start + best,
        confidence: post[best],
        posterior: post,
        window_start,
        mu_estimate: table.mu(),
        mu_model: table.mu(),
    })
}

/// Per-detector click probability per communication bin over
/// `bob[start..end)`, chunked into whole periods.
pub fn comm_bin_click_rates(bob: &[u8], start: usize, end: usize, period: usize) -> Result<[f64; 4]> {
    let end = end.min(bob.len());
    let chunks = end.saturating_sub(start) / period;
    if chunks == 0 {
        return Err(Error::domain("region holds no complete communication bin"));
    }
    let mut hits = [0u64; 4];
    for chunk in bob[start..start + chunks * period].chunks_exact(period) {
        let any = chunk.iter().fold(0u8, |acc, b| acc | b);
        for (det, h) in hits.iter_mut().enumerate() {
            *h += (any >> det & 1) as u64;
        }
    }
    // a detector that fired in every chunk would give an infinite estimate
    let n = chunks as f64;
    Ok(hits.map(|h| (h as f64).min(n - 0.5) / n))
}

/// Synchronizes the first `n` slots of Alice's string against Bob's record.
pub fn synchronize(
    alice: &AliceString,
    bob: &BobRecord,
    config: &ProtocolConfig,
    n: usize,
    options: &SyncOptions,
) -> Result<SyncResult> {
    config.validate()?;
    if n == 0 || n > alice.len() {
        return Err(Error::domain(format!(
            "comparison length {n} must lie in 1..={}",
            alice.len()
        )));
    }
    let coarse = coarse_estimate(bob, &options.coarse_params())?;
    let (table, mu_estimate) = model_table(bob, config, &coarse, options)?;
    let mut result = sync_window(
        alice.segment(0, n)?,
        bob.outcomes(),
        coarse.start,
        options.window,
        &table,
    )?;
    result.mu_estimate = mu_estimate;
    Ok(result)
}

fn model_table(
    bob: &BobRecord,
    config: &ProtocolConfig,
    coarse: &CoarseWindow,
    options: &SyncOptions,
) -> Result<(DetectionTable, f64)> {
    let rates = comm_bin_click_rates(bob.outcomes(), coarse.edge, coarse.end, config.period())?;
    let mu_estimate = estimate_mu_with_mix(
        &rates,
        config.dark_prob_comm_bin,
        &config.state_probabilities,
    )?;
    let mu = options.mu_override.unwrap_or(mu_estimate);
    Ok((DetectionTable::with_mu(config, mu, options.model_alpha)?, mu_estimate))
}

/// Result of one batch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BatchOutcome {
    Synced(SyncResult),
    /// The batch could not be synchronized and is left out of the drift fit.
    Failed(alloc::string::String),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriftFit {
    /// Clock offset at batch 0, in sampling bins.
    pub intercept: f64,
    /// Offset change per batch, in sampling bins.
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
    /// Implied `(tau_a - tau_b) / tau_a` in parts per million.
    pub drift_ppm: f64,
    /// Residuals of the batches used in the fit, in batch order.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub batch_len: usize,
    pub comparison_len: usize,
    pub coarse: CoarseWindow,
    pub mu_estimate: f64,
    pub batches: Vec<BatchOutcome>,
    /// Line through the per-batch offsets, or why none could be fitted.
    pub drift: Result<DriftFit>,
}

impl BatchReport {
    /// Offset `best_index - batch start` of every synchronized batch.
    pub fn offsets(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.batches.iter().enumerate().filter_map(move |(b, o)| match o {
            BatchOutcome::Synced(r) => Some((b, r.best_index as i64 - (b * self.batch_len) as i64)),
            BatchOutcome::Failed(_) => None,
        })
    }
}

/// Synchronizes consecutive batches of `batch_len` slots, comparing the first
/// `n` slots of each, and fits a line to the recovered offsets.
///
/// Batch 0 uses the coarse window; each later batch centers its window on the
/// offset found by the last successful batch.
pub fn batch_synchronize(
    alice: &AliceString,
    bob: &BobRecord,
    config: &ProtocolConfig,
    batch_len: usize,
    n: usize,
    options: &SyncOptions,
) -> Result<BatchReport> {
    config.validate()?;
    let period = config.period();
    if batch_len == 0 || batch_len % period != 0 {
        return Err(Error::domain(format!(
            "batch length {batch_len} must be a positive multiple of the period {period}"
        )));
    }
    if n == 0 || n > batch_len {
        return Err(Error::domain(format!(
            "comparison length {n} must lie in 1..={batch_len}"
        )));
    }
    let coarse = coarse_estimate(bob, &options.coarse_params())?;
    let (table, mu_estimate) = model_table(bob, config, &coarse, options)?;

    let count = if alice.len() >= n {
        (alice.len() - n) / batch_len + 1
    } else {
        0
    };
    let mut batches = Vec::with_capacity(count);
    let mut offset = coarse.edge as i64;
    for b in 0..count {
        let slot = b * batch_len;
        let center = offset + slot as i64;
        let start = center - (options.window / 2) as i64;
        let outcome = if start < 0 && b > 0 {
            BatchOutcome::Failed(format!("window would start before the record ({start})"))
        } else {
            let start = if b == 0 { coarse.start } else { start as usize };
            match alice
                .segment(slot, n)
                .and_then(|seg| sync_window(seg, bob.outcomes(), start, options.window, &table))
            {
                Ok(mut r) => {
                    r.mu_estimate = mu_estimate;
                    offset = r.best_index as i64 - slot as i64;
                    BatchOutcome::Synced(r)
                }
                Err(e) => BatchOutcome::Failed(format!("{e}")),
            }
        };
        batches.push(outcome);
    }

    let mut report = BatchReport {
        batch_len,
        comparison_len: n,
        coarse,
        mu_estimate,
        batches,
        drift: Err(Error::DriftFitUnavailable { usable: 0 }),
    };
    report.drift = fit_drift(&report, config);
    Ok(report)
}

fn fit_drift(report: &BatchReport, config: &ProtocolConfig) -> Result<DriftFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (b, outcome) in report.batches.iter().enumerate() {
        if let BatchOutcome::Synced(r) = outcome {
            xs.push(b as f64);
            ys.push(r.best_index as f64 - (b * report.batch_len) as f64);
            ws.push(r.confidence.max(1e-12));
        }
    }
    if xs.len() < 2 {
        return Err(Error::DriftFitUnavailable { usable: xs.len() });
    }
    let LineFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        residuals,
    } = weighted_line_fit(&xs, &ys, &ws)?;
    let comm_bins_per_batch = (report.batch_len / config.period()) as f64;
    let drift_ppm = slope / comm_bins_per_batch / config.n_sampling as f64 * 1e6;
    Ok(DriftFit {
        intercept,
        slope,
        intercept_se,
        slope_se,
        drift_ppm,
        residuals,
    })
}
