//! TOML run configuration.
//!
//! Every setting can come from three places. A command-line flag wins over the
//! config file, which wins over the built-in default. Each section below is
//! both the file schema and the set of override flags, so the two can never
//! drift apart.
//!
//! ```toml
//! seed = 7
//!
//! [protocol]
//! mu_a = 1.0
//! eta = 0.05
//! dark_prob_comm_bin = 8e-4
//! offset_bins = 20000
//!
//! [session]
//! comm_bins = 20000
//!
//! [sync]
//! comparison_len = 8000
//!
//! [experiment]
//! trials = 300
//! mu_list = [0.01, 0.1, 1.0]
//! ```

use std::path::Path;

use clap::Args;
use serde::Deserialize;

use qsync_core::{Offset, ProtocolConfig, StateMix, SyncOptions};

use crate::error::{AppError, AppResult};

/// Bins of dark-only record Bob collects before the transmission by default.
pub const DEFAULT_LEAD_BINS: u64 = 20_000;

macro_rules! overlay {
    ($name:ident { $($field:ident),* $(,)? }) => {
        impl $name {
            /// Fields set in `over` replace those in `self`.
            pub fn overlay(self, over: &Self) -> Self {
                $name { $($field: over.$field.clone().or(self.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Communication bin width in seconds
    #[arg(long)]
    pub tau_a: Option<f64>,
    /// Wavepacket duty-cycle divisor
    #[arg(long)]
    pub m: Option<u32>,
    /// Sampling bins per communication bin
    #[arg(long)]
    pub n_sampling: Option<u32>,
    /// Transmitted mean photon number
    #[arg(long)]
    pub mu_a: Option<f64>,
    /// Channel transmission
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dark-count probability per detector per communication bin
    #[arg(long, visible_alias = "dark")]
    pub dark_prob_comm_bin: Option<f64>,
    /// Probabilities of H, L, R and vacuum
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub state_probabilities: Option<Vec<f64>>,
    /// Efficiencies of the H, V, L and R detectors
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub detector_efficiency: Option<Vec<f64>>,
    /// Clock frequency mismatch (tau_a - tau_b) / tau_a in parts per million
    #[arg(long, allow_negative_numbers = true)]
    pub drift_ppm: Option<f64>,
    /// Whole sampling bins of the initial offset
    #[arg(long)]
    pub offset_bins: Option<u64>,
    /// Fraction of the wavepacket falling into the trailing bin
    #[arg(long)]
    pub offset_alpha: Option<f64>,
}

overlay!(ProtocolSection {
    tau_a, m, n_sampling, mu_a, eta, dark_prob_comm_bin, state_probabilities,
    detector_efficiency, drift_ppm, offset_bins, offset_alpha,
});

impl ProtocolSection {
    pub fn resolve(&self) -> AppResult<ProtocolConfig> {
        let d = ProtocolConfig::default();
        let cfg = ProtocolConfig {
            tau_a: self.tau_a.unwrap_or(d.tau_a),
            m: self.m.unwrap_or(d.m),
            n_sampling: self.n_sampling.unwrap_or(d.n_sampling),
            mu_a: self.mu_a.unwrap_or(d.mu_a),
            eta: self.eta.unwrap_or(d.eta),
            dark_prob_comm_bin: self.dark_prob_comm_bin.unwrap_or(d.dark_prob_comm_bin),
            state_probabilities: match &self.state_probabilities {
                Some(v) => StateMix(four("state_probabilities", v)?),
                None => d.state_probabilities,
            },
            detector_efficiency: match &self.detector_efficiency {
                Some(v) => four("detector_efficiency", v)?,
                None => d.detector_efficiency,
            },
            drift_ppm: self.drift_ppm.unwrap_or(d.drift_ppm),
            initial_offset: Offset {
                bins: self.offset_bins.unwrap_or(DEFAULT_LEAD_BINS),
                alpha: self.offset_alpha.unwrap_or(d.initial_offset.alpha),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn four(field: &str, v: &[f64]) -> AppResult<[f64; 4]> {
    v.try_into().map_err(|_| {
        AppError::Config(format!("`{field}` needs exactly 4 values, got {}", v.len()))
    })
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    /// Communication bins Alice transmits
    #[arg(long)]
    pub comm_bins: Option<usize>,
    /// Dark-only sampling bins recorded after the transmission
    #[arg(long)]
    pub tail_bins: Option<usize>,
}

overlay!(SessionSection { comm_bins, tail_bins });

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSettings {
    pub comm_bins: usize,
    pub tail_bins: usize,
}

impl SessionSection {
    pub fn resolve(&self) -> AppResult<SessionSettings> {
        let s = SessionSettings {
            comm_bins: self.comm_bins.unwrap_or(20_000),
            tail_bins: self.tail_bins.unwrap_or(20_000),
        };
        if s.comm_bins == 0 {
            return Err(AppError::Config("`comm_bins` must be positive".into()));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    /// Compared string length N in sampling bins
    #[arg(long, short = 'n')]
    pub comparison_len: Option<usize>,
    /// Number of candidate offsets M
    #[arg(long)]
    pub window: Option<usize>,
    /// Block length of the coarse step fit
    #[arg(long)]
    pub block: Option<usize>,
    /// Minimum z-score of the coarse step
    #[arg(long)]
    pub min_z: Option<f64>,
    /// Straddle fraction assumed by the lookup table
    #[arg(long)]
    pub model_alpha: Option<f64>,
    /// Received mean photon number to use instead of the estimate
    #[arg(long)]
    pub mu_override: Option<f64>,
    /// Batch length in sampling bins for batch-sync
    #[arg(long)]
    pub batch_len: Option<usize>,
    /// Exit with status 4 when the confidence is lower than this
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

overlay!(SyncSection {
    comparison_len, window, block, min_z, model_alpha, mu_override, batch_len, min_confidence,
});

#[derive(Debug, Clone, PartialEq)]
pub struct SyncSettings {
    pub comparison_len: usize,
    pub batch_len: usize,
    pub min_confidence: f64,
    pub options: SyncOptions,
}

impl SyncSection {
    pub fn resolve(&self) -> AppResult<SyncSettings> {
        let d = SyncOptions::default();
        let s = SyncSettings {
            comparison_len: self.comparison_len.unwrap_or(8_000),
            batch_len: self.batch_len.unwrap_or(80_000),
            min_confidence: self.min_confidence.unwrap_or(0.95),
            options: SyncOptions {
                window: self.window.unwrap_or(d.window),
                block: self.block.unwrap_or(d.block),
                min_z: self.min_z.unwrap_or(d.min_z),
                model_alpha: self.model_alpha.unwrap_or(d.model_alpha),
                mu_override: self.mu_override.or(d.mu_override),
            },
        };
        if s.comparison_len == 0 || s.options.window == 0 || s.options.block == 0 {
            return Err(AppError::Config(
                "`comparison_len`, `window` and `block` must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&s.min_confidence) {
            return Err(AppError::Config(format!(
                "`min_confidence` must lie in [0, 1], got {}",
                s.min_confidence
            )));
        }
        if !(0.0..1.0).contains(&s.options.model_alpha) {
            return Err(AppError::Config(format!(
                "`model_alpha` must lie in [0, 1), got {}",
                s.options.model_alpha
            )));
        }
        if let Some(mu) = s.options.mu_override {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(AppError::Config(format!("`mu_override` must be >= 0, got {mu}")));
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Trials per grid point (default 300)
    #[arg(long)]
    pub trials: Option<u64>,
    /// Run 1000 trials per point
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub paper_scale: Option<bool>,
    /// Received mean photon numbers
    #[arg(long, value_delimiter = ',')]
    pub mu_list: Option<Vec<f64>>,
    /// Dark-count probabilities per communication bin
    #[arg(long, value_delimiter = ',')]
    pub d_list: Option<Vec<f64>>,
    /// Explicit string lengths in sampling bins; overrides the log grid
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Smallest string length of the log grid
    #[arg(long)]
    pub n_min: Option<f64>,
    /// Largest string length of the log grid
    #[arg(long)]
    pub n_max: Option<f64>,
    /// Grid points per decade
    #[arg(long)]
    pub points_per_decade: Option<u32>,
    /// Mean confidence that defines the threshold
    #[arg(long)]
    pub target_confidence: Option<f64>,
    /// Smallest mu included in the threshold slope fit
    #[arg(long)]
    pub slope_mu_min: Option<f64>,
    /// Largest mu included in the threshold slope fit
    #[arg(long)]
    pub slope_mu_max: Option<f64>,
}

overlay!(ExperimentSection {
    trials, paper_scale, mu_list, d_list, n_list, n_min, n_max, points_per_decade,
    target_confidence, slope_mu_min, slope_mu_max,
});

/// Desk-scale trial count.
pub const DEFAULT_TRIALS: u64 = 300;
/// Trial count with `--paper-scale`.
pub const FULL_SCALE_TRIALS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub trials: u64,
    pub mu_list: Option<Vec<f64>>,
    pub d_list: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub n_min: Option<f64>,
    pub n_max: Option<f64>,
    pub points_per_decade: u32,
    pub target_confidence: f64,
    pub slope_mu_range: (f64, f64),
}

impl ExperimentSection {
    pub fn resolve(&self) -> AppResult<ExperimentSettings> {
        let paper = self.paper_scale.unwrap_or(false);
        let trials = self
            .trials
            .unwrap_or(if paper { FULL_SCALE_TRIALS } else { DEFAULT_TRIALS });
        if trials == 0 {
            return Err(AppError::Config("`trials` must be positive".into()));
        }
        let s = ExperimentSettings {
            trials,
            mu_list: self.mu_list.clone(),
            d_list: self.d_list.clone(),
            n_list: self.n_list.clone(),
            n_min: self.n_min,
            n_max: self.n_max,
            points_per_decade: self.points_per_decade.unwrap_or(10),
            target_confidence: self.target_confidence.unwrap_or(0.95),
            slope_mu_range: (
                self.slope_mu_min.unwrap_or(0.1),
                self.slope_mu_max.unwrap_or(1.0),
            ),
        };
        if s.points_per_decade == 0 {
            return Err(AppError::Config("`points_per_decade` must be positive".into()));
        }
        if !(s.target_confidence > 0.0 && s.target_confidence <= 1.0) {
            return Err(AppError::Config(format!(
                "`target_confidence` must lie in (0, 1], got {}",
                s.target_confidence
            )));
        }
        for list in [&s.mu_list, &s.d_list].into_iter().flatten() {
            if list.is_empty() || list.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(AppError::Config(
                    "`mu_list` and `d_list` need non-negative values".into(),
                ));
            }
        }
        if let Some(ns) = &s.n_list {
            if ns.is_empty() || ns.contains(&0) {
                return Err(AppError::Config("`n_list` needs positive lengths".into()));
            }
        }
        Ok(s)
    }
}

/// Contents of a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub sync: SyncSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl FileConfig {
    /// Parses TOML; errors carry the line and column of the offending entry.
    pub fn parse(text: &str, origin: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
