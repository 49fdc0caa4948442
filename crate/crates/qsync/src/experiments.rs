//! Monte-Carlo studies: calibration of the posterior against the observed
//! success rate, mean confidence against string length, and the string length
//! needed for a target mean confidence.
//!
//! Trials run on a rayon pool and are reduced in trial order, so results do
//! not depend on the number of workers. Trial `t` draws from the same seed at
//! every grid point, which keeps curves smooth in `N`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use qsync_core::stats::{line_fit, mean_and_sem, wilson_interval, LineFit, Z_95};
use qsync_core::trial::{run_trial, TrialSpec};
use qsync_core::ProtocolConfig;

use crate::error::{AppError, AppResult};

/// Summary of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialBatchResult {
    pub mu: f64,
    pub d: f64,
    pub n_sampling_bins: usize,
    pub n_comm_bins: f64,
    pub window: usize,
    pub trials: u64,
    /// Trials that raised an error; they count as misses with a uniform posterior.
    pub failed: u64,
    pub mean_confidence: f64,
    pub confidence_sem: f64,
    pub success_frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl TrialBatchResult {
    /// Whether mean confidence and success frequency agree within their joint
    /// 95% interval. The frequency's standard error is read off the Wilson
    /// interval's half-width.
    pub fn agrees(&self) -> bool {
        let se_f = (self.wilson_hi - self.wilson_lo) / (2.0 * Z_95);
        let joint = Z_95 * (self.confidence_sem.powi(2) + se_f.powi(2)).sqrt();
        (self.mean_confidence - self.success_frequency).abs() <= joint
    }
}

/// Runs trials for one `(config, N)` point.
pub struct Runner {
    pool: rayon::ThreadPool,
    pub seed: u64,
    pub trials: u64,
    pub window: usize,
    pub model_alpha: f64,
}

impl Runner {
    /// `jobs = 0` uses one worker per CPU.
    pub fn new(seed: u64, trials: u64, jobs: usize, window: usize, model_alpha: f64) -> AppResult<Self> {
        if trials == 0 {
            return Err(AppError::Config("at least one trial per point is required".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| AppError::Config(format!("worker pool: {e}")))?;
        Ok(Runner {
            pool,
            seed,
            trials,
            window,
            model_alpha,
        })
    }

    pub fn run_point(&self, config: &ProtocolConfig, n: usize) -> AppResult<TrialBatchResult> {
        config.validate()?;
        let spec = TrialSpec {
            config: config.clone(),
            comparison_len: n,
            window: self.window,
            model_alpha: self.model_alpha,
        };
        let outcomes: Vec<_> = self.pool.install(|| {
            (0..self.trials)
                .into_par_iter()
                .map(|t| run_trial(&spec, self.seed, t))
                .collect()
        });
        let uniform = 1.0 / self.window as f64;
        let mut confidences = Vec::with_capacity(outcomes.len());
        let mut successes = 0;
        let mut failed = 0;
        for o in &outcomes {
            match o {
                Ok(o) => {
                    confidences.push(o.confidence);
                    successes += o.success() as u64;
                }
                Err(_) => {
                    confidences.push(uniform);
                    failed += 1;
                }
            }
        }
        let (mean, sem) = mean_and_sem(&confidences)?;
        let (lo, hi) = wilson_interval(successes, self.trials, Z_95)?;
        Ok(TrialBatchResult {
            mu: config.received_mu(),
            d: config.dark_prob_comm_bin,
            n_sampling_bins: n,
            n_comm_bins: n as f64 / config.period() as f64,
            window: self.window,
            trials: self.trials,
            failed,
            mean_confidence: mean,
            confidence_sem: sem,
            success_frequency: successes as f64 / self.trials as f64,
            wilson_lo: lo,
            wilson_hi: hi,
        })
    }
}

/// `base` with received mean photon number `mu` and dark probability `d`.
pub fn point_config(base: &ProtocolConfig, mu: f64, d: f64) -> ProtocolConfig {
    ProtocolConfig {
        mu_a: mu,
        eta: 1.0,
        dark_prob_comm_bin: d,
        drift_ppm: 0.0,
        ..base.clone()
    }
}

/// Integers `round(10^(k / per_decade))` within `[lo, hi]`, deduplicated.
pub fn log_grid(lo: f64, hi: f64, per_decade: u32) -> AppResult<Vec<usize>> {
    if !(lo >= 1.0 && hi >= lo && hi.is_finite()) || per_decade == 0 {
        return Err(AppError::Config(format!(
            "grid bounds must satisfy 1 <= n_min <= n_max, got [{lo}, {hi}]"
        )));
    }
    let step = per_decade as f64;
    let k_lo = (lo.log10() * step - 1e-9).ceil() as i64;
    let k_hi = (hi.log10() * step + 1e-9).floor() as i64;
    let mut grid: Vec<usize> = (k_lo..=k_hi)
        .map(|k| 10f64.powf(k as f64 / step).round() as usize)
        .collect();
    grid.dedup();
    Ok(grid)
}

/// Mean confidence and success frequency for each string length.
pub fn run_calibration(
    runner: &Runner,
    config: &ProtocolConfig,
    n_list: &[usize],
) -> AppResult<Vec<TrialBatchResult>> {
    n_list.iter().map(|&n| runner.run_point(config, n)).collect()
}

/// Mean confidence over the `mu_list` x `n_list` matrix, row by row.
pub fn sweep_string_length(
    runner: &Runner,
    base: &ProtocolConfig,
    mu_list: &[f64],
    d: f64,
    n_list: &[usize],
) -> AppResult<Vec<TrialBatchResult>> {
    let mut out = Vec::with_capacity(mu_list.len() * n_list.len());
    for &mu in mu_list {
        out.extend(run_calibration(runner, &point_config(base, mu, d), n_list)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub mu: f64,
    pub d: f64,
    /// Smallest grid length reaching the target, if any.
    pub threshold: Option<usize>,
    pub mean_confidence_at_threshold: Option<f64>,
    /// Every grid point evaluated by the search.
    pub evaluated: Vec<TrialBatchResult>,
}

/// Smallest grid length whose mean confidence reaches `target`.
///
/// Mean confidence grows with `N`, so the search strides up the grid roughly
/// doubling `N` until the target is met, then bisects the last stride.
pub fn threshold_search(
    runner: &Runner,
    config: &ProtocolConfig,
    grid: &[usize],
    target: f64,
    per_decade: u32,
) -> AppResult<ThresholdResult> {
    if grid.is_empty() {
        return Err(AppError::Config("threshold grid is empty".into()));
    }
    let mut memo: BTreeMap<usize, TrialBatchResult> = BTreeMap::new();
    let mut eval = |i: usize| -> AppResult<bool> {
        if !memo.contains_key(&i) {
            memo.insert(i, runner.run_point(config, grid[i])?);
        }
        Ok(memo[&i].mean_confidence >= target)
    };
    let stride = ((per_decade as f64 * 0.3).round() as usize).max(1);
    let last = grid.len() - 1;
    let found = if eval(0)? {
        Some(0)
    } else {
        let mut lo = 0;
        let mut hi = None;
        while lo < last {
            let next = (lo + stride).min(last);
            if eval(next)? {
                hi = Some(next);
                break;
            }
            lo = next;
        }
        match hi {
            None => None,
            Some(mut hi) => {
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if eval(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi)
            }
        }
    };
    Ok(ThresholdResult {
        mu: config.received_mu(),
        d: config.dark_prob_comm_bin,
        threshold: found.map(|i| grid[i]),
        mean_confidence_at_threshold: found.map(|i| memo[&i].mean_confidence),
        evaluated: memo.into_values().collect(),
    })
}

/// Thresholds for every `(mu, d)` pair, `d` varying fastest.
pub fn threshold_95(
    runner: &Runner,
    base: &ProtocolConfig,
    mu_list: &[f64],
    d_list: &[f64],
    grid: &[usize],
    target: f64,
    per_decade: u32,
) -> AppResult<Vec<ThresholdResult>> {
    let mut out = Vec::new();
    for &mu in mu_list {
        for &d in d_list {
            out.push(threshold_search(runner, &point_config(base, mu, d), grid, target, per_decade)?);
        }
    }
    Ok(out)
}

/// Least-squares line of `log10 N*` against `log10 mu` over thresholds with
/// `mu` in `range` and dark probability `d`.
pub fn threshold_slope(results: &[ThresholdResult], d: f64, range: (f64, f64)) -> AppResult<LineFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = results
        .iter()
        .filter(|r| r.d == d && r.mu >= range.0 && r.mu <= range.1 && r.mu > 0.0)
        .filter_map(|r| r.threshold.map(|n| (r.mu.log10(), (n as f64).log10())))
        .unzip();
    Ok(line_fit(&xs, &ys)?)
}

/// `fig2_calibration.csv` and `fig3_sweep.csv` share this layout.
pub fn write_points_csv(w: impl Write, points: &[TrialBatchResult]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POINT_HEADER)?;
    for p in points {
        out.write_record([
            format!("{:?}", p.mu),
            format!("{:?}", p.d),
            p.n_sampling_bins.to_string(),
            format!("{:?}", p.n_comm_bins),
            p.window.to_string(),
            p.trials.to_string(),
            p.failed.to_string(),
            format!("{:?}", p.mean_confidence),
            format!("{:?}", p.confidence_sem),
            format!("{:?}", p.success_frequency),
            format!("{:?}", p.wilson_lo),
            format!("{:?}", p.wilson_hi),
            p.agrees().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

const POINT_HEADER: [&str; 13] = [
    "mu",
    "d",
    "n_sampling_bins",
    "n_comm_bins",
    "window",
    "trials",
    "failed",
    "mean_confidence",
    "confidence_sem",
    "success_frequency",
    "wilson_lo",
    "wilson_hi",
    "agree",
];

#[derive(Serialize)]
struct ThresholdRow {
    mu: f64,
    d: f64,
    threshold_sampling_bins: Option<usize>,
    threshold_comm_bins: Option<f64>,
    mean_confidence_at_threshold: Option<f64>,
    attained: bool,
    points_evaluated: usize,
}

pub fn write_threshold_csv(w: impl Write, results: &[ThresholdResult], period: usize) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(ThresholdRow {
            mu: r.mu,
            d: r.d,
            threshold_sampling_bins: r.threshold,
            threshold_comm_bins: r.threshold.map(|n| n as f64 / period as f64),
            mean_confidence_at_threshold: r.mean_confidence_at_threshold,
            attained: r.threshold.is_some(),
            points_evaluated: r.evaluated.len(),
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_decade_aligned() {
        let g = log_grid(100.0, 1000.0, 10).unwrap();
        assert_eq!(g.first(), Some(&100));
        assert_eq!(g.last(), Some(&1000));
        assert_eq!(g.len(), 11);
        assert!(log_grid(10_000.0, 100_000.0, 10).unwrap().contains(&25_119));
        assert_eq!(log_grid(1.0, 3.0, 10).unwrap(), vec![1, 2, 3]);
        assert!(log_grid(0.0, 10.0, 10).is_err());
        assert!(log_grid(10.0, 1.0, 10).is_err());
    }

    #[test]
    fn agreement_uses_joint_interval() {
        let mut p = TrialBatchResult {
            mu: 0.05,
            d: 8e-4,
            n_sampling_bins: 100,
            n_comm_bins: 12.5,
            window: 4000,
            trials: 300,
            failed: 0,
            mean_confidence: 0.5,
            confidence_sem: 0.02,
            success_frequency: 0.5,
            wilson_lo: 0.44,
            wilson_hi: 0.56,
        };
        assert!(p.agrees());
        // joint half-width is about 1.96 * sqrt(0.02^2 + 0.0306^2) = 0.0717
        p.mean_confidence = 0.57;
        assert!(p.agrees());
        p.mean_confidence = 0.575;
        assert!(!p.agrees());
    }

    #[test]
    fn zero_information_gives_uniform_confidence() {
        let runner = Runner::new(3, 30, 1, 200, 0.5).unwrap();
        let cfg = point_config(&ProtocolConfig::default(), 0.0, 0.0);
        let r = runner.run_point(&cfg, 400).unwrap();
        assert!((r.mean_confidence - 1.0 / 200.0).abs() < 1e-12);
        assert_eq!(r.failed, 0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = point_config(&ProtocolConfig::default(), 0.5, 8e-4);
        let a = Runner::new(11, 40, 1, 400, 0.5).unwrap().run_point(&cfg, 200).unwrap();
        let b = Runner::new(11, 40, 3, 400, 0.5).unwrap().run_point(&cfg, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_is_first_passing_point_after_a_miss() {
        let runner = Runner::new(5, 40, 0, 400, 0.5).unwrap();
        let cfg = point_config(&ProtocolConfig::default(), 1.0, 8e-4);
        let grid = log_grid(10.0, 1000.0, 10).unwrap();
        let r = threshold_search(&runner, &cfg, &grid, 0.95, 10).unwrap();
        let n = r.threshold.unwrap();
        let i = grid.iter().position(|&g| g == n).unwrap();
        assert!(i > 0);
        assert!(runner.run_point(&cfg, n).unwrap().mean_confidence >= 0.95);
        assert!(runner.run_point(&cfg, grid[i - 1]).unwrap().mean_confidence < 0.95);
        assert!(r.evaluated.len() < grid.len());
        let unreachable = threshold_search(&runner, &cfg, &grid[..3], 0.95, 10).unwrap();
        assert_eq!(unreachable.threshold, None);
    }
}
