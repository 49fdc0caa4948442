//! Command-line interface.
//!
//! Exit status: 0 success, 2 configuration error, 3 I/O error, 4 confidence
//! below `--min-confidence`, 5 coarse estimation failed, 6 fewer than 90% of
//! experiment grid points completed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use qsync_core::gate::gate;
use qsync_core::sync::BatchOutcome;
use qsync_core::{batch_synchronize, synchronize, ProtocolConfig, Session};

use crate::config_file::{
    ExperimentSection, ExperimentSettings, FileConfig, ProtocolSection, SessionSection,
    SyncSection, SyncSettings,
};
use crate::error::{AppError, AppResult};
use crate::experiments::{
    log_grid, point_config, sweep_string_length, threshold_95, threshold_slope,
    write_points_csv, write_threshold_csv, Runner, ThresholdResult, TrialBatchResult,
};
use crate::manifest::RunManifest;
use crate::session_io;

/// Share of grid points that must complete for an experiment to succeed.
const MIN_COMPLETED: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "qsync", version, about = "Simulate QKD sessions and recover the clock offset from qubit data")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true, env = "QSYNC_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for experiments (0 = one per CPU)
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output file or directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a session and write it to a session file
    Simulate {
        #[command(flatten)]
        protocol: ProtocolSection,
        #[command(flatten)]
        session: SessionSection,
        /// Also export the session as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Synchronize a session and print the result as JSON
    Sync {
        session: PathBuf,
        #[command(flatten)]
        sync: SyncSection,
        /// Include the full posterior in the output
        #[arg(long)]
        emit_posterior: bool,
    },
    /// Synchronize consecutive batches and fit the clock drift
    BatchSync {
        session: PathBuf,
        #[command(flatten)]
        sync: SyncSection,
    },
    /// Write the two occupied bins of every communication bin as CSV
    Gate {
        session: PathBuf,
        #[command(flatten)]
        sync: SyncSection,
        /// Record index of Alice's slot 0; synchronizes first when omitted
        #[arg(long)]
        offset: Option<usize>,
        /// First communication bin
        #[arg(long, default_value_t = 0)]
        from: usize,
        /// One past the last communication bin
        #[arg(long)]
        to: Option<usize>,
    },
    /// Mean confidence against success frequency (fig2_calibration.csv)
    Calibrate(ExperimentArgs),
    /// Mean confidence against string length (fig3_sweep.csv)
    Sweep(ExperimentArgs),
    /// String length reaching the target mean confidence (fig4_threshold.csv)
    Threshold(ExperimentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub protocol: ProtocolSection,
    #[command(flatten)]
    pub sync: SyncSection,
    #[command(flatten)]
    pub experiment: ExperimentSection,
}

struct Context {
    file: FileConfig,
    seed: u64,
    jobs: usize,
    out: Option<PathBuf>,
}

impl Context {
    fn new(g: &Global) -> AppResult<Self> {
        let file = match &g.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let seed = g.seed.or(file.seed).unwrap_or(0);
        Ok(Context {
            file,
            seed,
            jobs: g.jobs,
            out: g.out.clone(),
        })
    }

    fn protocol(&self, cli: &ProtocolSection) -> AppResult<ProtocolConfig> {
        self.file.protocol.clone().overlay(cli).resolve()
    }

    fn sync(&self, cli: &SyncSection) -> AppResult<SyncSettings> {
        self.file.sync.clone().overlay(cli).resolve()
    }

    fn experiment(&self, cli: &ExperimentSection) -> AppResult<ExperimentSettings> {
        self.file.experiment.clone().overlay(cli).resolve()
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Simulate {
            protocol,
            session,
            csv,
        } => simulate(&ctx, protocol, session, csv.as_deref()),
        Command::Sync {
            session,
            sync,
            emit_posterior,
        } => sync_cmd(&ctx, session, sync, *emit_posterior),
        Command::BatchSync { session, sync } => batch_cmd(&ctx, session, sync),
        Command::Gate {
            session,
            sync,
            offset,
            from,
            to,
        } => gate_cmd(&ctx, session, sync, *offset, *from, *to),
        Command::Calibrate(a) => experiment_cmd(&ctx, Study::Calibrate, a),
        Command::Sweep(a) => experiment_cmd(&ctx, Study::Sweep, a),
        Command::Threshold(a) => experiment_cmd(&ctx, Study::Threshold, a),
    }
}

fn simulate(
    ctx: &Context,
    protocol: &ProtocolSection,
    session: &SessionSection,
    csv: Option<&Path>,
) -> AppResult<()> {
    let started = Utc::now();
    let cfg = ctx.protocol(protocol)?;
    let shape = ctx.file.session.clone().overlay(session).resolve()?;
    let s = Session::simulate(&cfg, shape.comm_bins, shape.tail_bins, ctx.seed)?;
    let out = ctx.out.clone().unwrap_or_else(|| PathBuf::from("session.qsync"));
    session_io::save(&out, &s)?;

    let mut manifest = RunManifest::new("simulate", ctx.seed, json!({ "protocol": cfg }), started);
    manifest.grid = json!({
        "comm_bins": shape.comm_bins,
        "tail_bins": shape.tail_bins,
        "record_len": s.bob.len(),
    });
    manifest.summary = json!({ "truth": s.truth });
    manifest.add_output(&out)?;
    if let Some(path) = csv {
        let f = File::create(path).map_err(|e| AppError::io(path, e))?;
        session_io::write_csv(BufWriter::new(f), &s).map_err(|e| AppError::io(path, e))?;
        manifest.add_output(path)?;
    }
    manifest.finish(&sibling(&out, "manifest.json"))
}

/// `session.qsync` -> `session.qsync.manifest.json`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Serialize)]
struct SyncOutput<'a> {
    window_start: usize,
    best_index: usize,
    confidence: f64,
    mu_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<&'a [f64]>,
}

fn emit(ctx: &Context, value: &impl Serialize) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Io(e.to_string()))?;
    match &ctx.out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| AppError::Io(format!("stdout: {e}")))
        }
    }
}

fn sync_cmd(ctx: &Context, path: &Path, sync: &SyncSection, emit_posterior: bool) -> AppResult<()> {
    let s = session_io::load(path)?;
    let settings = ctx.sync(sync)?;
    let r = synchronize(&s.alice, &s.bob, &s.config, settings.comparison_len, &settings.options)?;
    emit(
        ctx,
        &SyncOutput {
            window_start: r.window_start,
            best_index: r.best_index,
            confidence: r.confidence,
            mu_estimate: r.mu_estimate,
            posterior: emit_posterior.then_some(r.posterior.as_slice()),
        },
    )?;
    if r.confidence < settings.min_confidence {
        return Err(AppError::LowConfidence {
            confidence: r.confidence,
            required: settings.min_confidence,
        });
    }
    Ok(())
}

fn batch_cmd(ctx: &Context, path: &Path, sync: &SyncSection) -> AppResult<()> {
    let s = session_io::load(path)?;
    let settings = ctx.sync(sync)?;
    let report = batch_synchronize(
        &s.alice,
        &s.bob,
        &s.config,
        settings.batch_len,
        settings.comparison_len,
        &settings.options,
    )?;
    let batches: Vec<Value> = report
        .batches
        .iter()
        .enumerate()
        .map(|(b, o)| match o {
            BatchOutcome::Synced(r) => json!({
                "batch": b,
                "status": "synced",
                "best_index": r.best_index,
                "offset": r.best_index as i64 - (b * report.batch_len) as i64,
                "confidence": r.confidence,
            }),
            BatchOutcome::Failed(reason) => json!({
                "batch": b,
                "status": "failed",
                "reason": reason,
            }),
        })
        .collect();
    let (drift, drift_error) = match &report.drift {
        Ok(fit) => (serde_json::to_value(fit).unwrap_or(Value::Null), Value::Null),
        Err(e) => (Value::Null, Value::String(e.to_string())),
    };
    emit(
        ctx,
        &json!({
            "batch_len": report.batch_len,
            "comparison_len": report.comparison_len,
            "mu_estimate": report.mu_estimate,
            "coarse": {
                "start": report.coarse.start,
                "edge": report.coarse.edge,
                "end": report.coarse.end,
                "z_score": report.coarse.z_score,
            },
            "batches": batches,
            "drift": drift,
            "drift_error": drift_error,
        }),
    )
}

fn gate_cmd(
    ctx: &Context,
    path: &Path,
    sync: &SyncSection,
    offset: Option<usize>,
    from: usize,
    to: Option<usize>,
) -> AppResult<()> {
    let s = session_io::load(path)?;
    let offset = match offset {
        Some(o) => o,
        None => {
            let settings = ctx.sync(sync)?;
            synchronize(&s.alice, &s.bob, &s.config, settings.comparison_len, &settings.options)?
                .best_index
        }
    };
    let period = s.alice.period();
    let fit = s.bob.len().saturating_sub(offset + 1).div_ceil(period);
    let to = to.unwrap_or(fit.min(s.alice.comm_bins()));
    if from > to {
        return Err(AppError::Config(format!("--from {from} is past --to {to}")));
    }
    let gated = gate(&s.alice, &s.bob, offset, from..to)?;

    let sink: Box<dyn Write> = match &ctx.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| AppError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    let io_err = |e: csv::Error| AppError::Io(format!("gate output: {e}"));
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["comm_bin", "symbol", "leading", "trailing", "clicks"])
        .map_err(io_err)?;
    for g in gated {
        let clicks: String = ["H", "V", "L", "R"]
            .iter()
            .enumerate()
            .filter(|(k, _)| g.outcome() >> k & 1 == 1)
            .map(|(_, l)| *l)
            .collect();
        w.write_record([
            g.comm_bin.to_string(),
            g.symbol.label().to_string(),
            g.leading.to_string(),
            g.trailing.to_string(),
            clicks,
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| AppError::Io(format!("gate output: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Study {
    Calibrate,
    Sweep,
    Threshold,
}

impl Study {
    fn name(self) -> &'static str {
        match self {
            Study::Calibrate => "calibrate",
            Study::Sweep => "sweep",
            Study::Threshold => "threshold",
        }
    }

    fn default_mu(self) -> Vec<f64> {
        match self {
            Study::Calibrate => vec![0.05, 1.0],
            Study::Sweep => vec![0.01, 0.1, 1.0],
            // five per decade from 0.01 to 1
            Study::Threshold => (-10..=0).map(|k| 10f64.powf(k as f64 / 5.0)).collect(),
        }
    }
}

fn grid_for(e: &ExperimentSettings, lo: f64, hi: f64) -> AppResult<Vec<usize>> {
    match &e.n_list {
        Some(ns) => Ok(ns.clone()),
        None => log_grid(e.n_min.unwrap_or(lo), e.n_max.unwrap_or(hi), e.points_per_decade),
    }
}

fn experiment_cmd(ctx: &Context, study: Study, args: &ExperimentArgs) -> AppResult<()> {
    let started = Utc::now();
    let base = ctx.protocol(&args.protocol)?;
    let sync = ctx.sync(&args.sync)?;
    let e = ctx.experiment(&args.experiment)?;
    let mu_list = e.mu_list.clone().unwrap_or_else(|| study.default_mu());
    let d_list = e.d_list.clone().unwrap_or_else(|| vec![base.dark_prob_comm_bin]);
    for &d in &d_list {
        point_config(&base, 0.0, d).validate()?;
    }
    let runner = Runner::new(ctx.seed, e.trials, ctx.jobs, sync.options.window, sync.options.model_alpha)?;

    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir).map_err(|err| AppError::io(&dir, err))?;
    let config_echo = json!({
        "protocol": base,
        "window": sync.options.window,
        "model_alpha": sync.options.model_alpha,
        "trials": e.trials,
        "mu_list": mu_list,
        "d_list": d_list,
        "target_confidence": e.target_confidence,
    });
    let mut manifest = RunManifest::new(study.name(), ctx.seed, config_echo, started);

    let points: Vec<TrialBatchResult>;
    let mut grids = Vec::new();
    match study {
        Study::Calibrate | Study::Sweep => {
            let mut all = Vec::new();
            for &mu in &mu_list {
                let n_list = if study == Study::Calibrate {
                    // about one decade around the transition, which scales as 1/mu
                    if mu <= 0.0 && e.n_list.is_none() && (e.n_min.is_none() || e.n_max.is_none()) {
                        return Err(AppError::Config(
                            "mu = 0 needs an explicit --n-list or --n-min/--n-max".into(),
                        ));
                    }
                    grid_for(&e, 40.0 / mu, 320.0 / mu)?
                } else {
                    grid_for(&e, 100.0, 100_000.0)?
                };
                for &d in &d_list {
                    all.extend(sweep_string_length(&runner, &base, &[mu], d, &n_list)?);
                }
                grids.push(json!({ "mu": mu, "n_sampling_bins": n_list }));
            }
            let name = if study == Study::Calibrate {
                "fig2_calibration.csv"
            } else {
                "fig3_sweep.csv"
            };
            let path = dir.join(name);
            let f = File::create(&path).map_err(|err| AppError::io(&path, err))?;
            write_points_csv(BufWriter::new(f), &all).map_err(|err| AppError::io(&path, err))?;
            manifest.add_output(&path)?;
            manifest.summary = points_summary(&all, &mu_list);
            points = all;
        }
        Study::Threshold => {
            let grid = grid_for(&e, 100.0, 1e6)?;
            let results = threshold_95(
                &runner,
                &base,
                &mu_list,
                &d_list,
                &grid,
                e.target_confidence,
                e.points_per_decade,
            )?;
            let path = dir.join("fig4_threshold.csv");
            let f = File::create(&path).map_err(|err| AppError::io(&path, err))?;
            write_threshold_csv(BufWriter::new(f), &results, base.period())
                .map_err(|err| AppError::io(&path, err))?;
            manifest.add_output(&path)?;
            manifest.summary = threshold_summary(&results, &d_list, e.slope_mu_range);
            grids.push(json!({ "n_sampling_bins": grid }));
            points = results.into_iter().flat_map(|r| r.evaluated).collect();
        }
    }
    manifest.grid = json!({ "points_per_decade": e.points_per_decade, "grids": grids });
    manifest.incomplete = points
        .iter()
        .filter(|p| p.failed > 0)
        .map(|p| format!("mu={} d={} N={}: {} failed trials", p.mu, p.d, p.n_sampling_bins, p.failed))
        .collect();
    let total = points.len();
    let completed = total - manifest.incomplete.len();
    manifest.finish(&dir.join("manifest.json"))?;
    if total > 0 && (completed as f64) < MIN_COMPLETED * total as f64 {
        return Err(AppError::GridIncomplete { completed, total });
    }
    Ok(())
}

fn points_summary(points: &[TrialBatchResult], mu_list: &[f64]) -> Value {
    let per_mu: Vec<Value> = mu_list
        .iter()
        .map(|&mu| {
            let rows: Vec<_> = points.iter().filter(|p| p.mu == mu).collect();
            let agree = rows.iter().filter(|p| p.agrees()).count();
            let unsaturated: Vec<_> = rows.iter().filter(|p| p.success_frequency < 0.99).collect();
            let over = unsaturated
                .iter()
                .filter(|p| p.mean_confidence >= p.success_frequency)
                .count();
            json!({
                "mu": mu,
                "points": rows.len(),
                "agreeing_points": agree,
                "unsaturated_points": unsaturated.len(),
                "unsaturated_with_mean_confidence_at_least_frequency": over,
            })
        })
        .collect();
    json!({ "per_mu": per_mu })
}

fn threshold_summary(results: &[ThresholdResult], d_list: &[f64], range: (f64, f64)) -> Value {
    let slopes: Vec<Value> = d_list
        .iter()
        .map(|&d| match threshold_slope(results, d, range) {
            Ok(fit) => json!({
                "d": d,
                "mu_range": [range.0, range.1],
                "slope": fit.slope,
                "slope_se": fit.slope_se,
                "intercept": fit.intercept,
            }),
            Err(err) => json!({ "d": d, "mu_range": [range.0, range.1], "error": err.to_string() }),
        })
        .collect();
    json!({ "log_log_slopes": slopes })
}

