//! Qubit-based clock synchronization for decoy-state three-state BB84 sessions.
//!
//! The crate simulates per-sampling-bin detector records for a prepare-and-measure
//! link and recovers the transmitter/receiver clock offset by computing a Bayesian
//! posterior over a window of candidate offsets. Everything here is pure
//! computation on in-memory buffers and builds without `std`; file formats, the
//! command line and the parallel experiment harness live in the `qsync` crate.
//!
//! Module map:
//!
//! - [`model`] and [`table`]: photon sorting, click probabilities and the
//!   per-detector lookup table used by the likelihood.
//! - [`session`] and [`coarse`]: session simulation and the step-function
//!   coarse estimate of where transmission starts.
//! - [`counts`], [`likelihood`] and [`sync`]: FFT pair counting, the windowed
//!   log-likelihood, the posterior and (batched) synchronization.
//! - [`trial`] and [`stats`]: single Monte-Carlo trials and the summary
//!   statistics the experiment harness reduces them with.

#![no_std]

extern crate alloc;

pub mod coarse;
pub mod config;
pub mod counts;
pub mod error;
pub mod fft;
pub mod gate;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod session;
pub mod stats;
pub mod sync;
pub mod table;
pub mod trial;

pub use coarse::{coarse_estimate, CoarseParams, CoarseWindow};
pub use config::{Offset, ProtocolConfig, StateMix};
pub use counts::{count_pairings, PairCounts};
pub use error::{Error, Result};
pub use likelihood::{log_likelihood_window, posterior};
pub use model::{
    click_probability, estimate_mu, invert_click_probability, solve_mu, sort_photons, AliceSymbol,
    Detector, DetectorMeans,
};
pub use session::{generate_alice, simulate_bob, AliceString, BobRecord, GroundTruth, Session};
pub use sync::{batch_synchronize, synchronize, BatchReport, DriftFit, SyncOptions, SyncResult};
pub use table::DetectionTable;

/// Candidate window width used throughout the model system.
pub const DEFAULT_WINDOW: usize = 4_000;
