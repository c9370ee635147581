//! Command line modes.
//!
//! Every mode writes `config.resolved.toml` into the output directory
//! before running, so any result can be reproduced from that file alone.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use kitesim_core::calibration::{self, cycle_metrics, fit_turn_rate, parking_equilibrium, turn_rate_samples};
use kitesim_core::config::{Mode, SimConfig};
use kitesim_core::controller::FlightPhase;
use kitesim_core::integrator::model::{KiteModel, TetherModel};
use kitesim_core::integrator::{run_realtime, RealtimeOptions, SimEvent, Simulation};
use kitesim_core::log::{read_csv, sig6, write_csv, LogRecord};

use crate::server::TelemetryServer;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const LOG_CSV: &str = "log.csv";
pub const PARKING_CSV: &str = "parking.csv";
pub const PARKING_HEADER: &str = "kite,tether,force,force_std,elevation,elevation_std";

/// Smoothing window of the turn-rate fit, s.
const TURN_RATE_SMOOTHING: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Fixed-length run; writes the log and the cycle metrics.
    Batch,
    /// Parking equilibria of the four model variants.
    Parking,
    /// Turn-rate law and cycle metrics from a simulated or recorded log.
    Calibrate,
    /// Wall-clock paced run serving telemetry over WebSocket.
    Realtime,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Batch => Mode::Batch,
            ModeArg::Parking => Mode::Parking,
            ModeArg::Calibrate => Mode::Calibrate,
            ModeArg::Realtime => Mode::Realtime,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kitesim", version, about = "Kite power system simulator")]
pub struct Cli {
    #[arg(value_enum)]
    pub mode: ModeArg,
    /// TOML configuration; an empty file selects all defaults.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated duration after settling, s. Runs without limit in
    /// realtime mode when absent.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Telemetry port of the realtime mode; 0 picks a free port.
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Calibrate from this log instead of simulating.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Loads the configuration and applies the command line overrides.
pub fn resolve_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = SimConfig::load(&cli.config).with_context(|| format!("configuration {}", cli.config.display()))?;
    cfg.scenario.mode = cli.mode.into();
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(d) = cli.duration {
        cfg.scenario.duration = d;
    }
    cfg.validate().context("command line overrides")?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    fs::write(cli.out.join(RESOLVED_CONFIG), cfg.to_toml())?;
    match cli.mode {
        ModeArg::Batch => batch(&cfg, &cli.out),
        ModeArg::Parking => parking(&cfg, &cli.out),
        ModeArg::Calibrate => calibrate(&cfg, cli.log.as_deref(), &cli.out),
        ModeArg::Realtime => realtime(&cfg, cli.port, cli.duration, &cli.out),
    }
}

fn write_log(out: &Path, log: &[LogRecord]) -> Result<()> {
    let path = out.join(LOG_CSV);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_csv(&mut w, log)?;
    w.flush()?;
    Ok(())
}

fn report_events(events: &[SimEvent]) {
    for e in events {
        eprintln!("event t={:.3} {}", e.t, e.message);
    }
}

fn simulate(cfg: &SimConfig) -> Result<Vec<LogRecord>> {
    let mut sim = Simulation::new(cfg.clone())?;
    let log = sim.run_batch(cfg.scenario.duration)?;
    report_events(&sim.events);
    Ok(log)
}

fn batch(cfg: &SimConfig, out: &Path) -> Result<()> {
    let log = simulate(cfg)?;
    write_log(out, &log)?;
    match cycle_metrics(&log) {
        Ok(m) => {
            let report = m.report();
            fs::write(out.join("metrics.txt"), &report)?;
            print!("{report}");
        }
        // a run shorter than one pumping cycle is still a valid batch run
        Err(e) => println!("metrics=unavailable\nreason={e}"),
    }
    Ok(())
}

fn model_label(kite: KiteModel, tether: TetherModel) -> (&'static str, &'static str) {
    let k = match kite {
        KiteModel::OnePoint => "1p",
        KiteModel::FourPoint => "4p",
    };
    let t = match tether {
        TetherModel::Straight => "straight",
        TetherModel::Segmented => "segmented",
    };
    (k, t)
}

/// Parks all four model variants in the configured wind. The first half of
/// the duration settles, the second half is averaged.
fn parking(cfg: &SimConfig, out: &Path) -> Result<()> {
    let variants = [
        (KiteModel::OnePoint, TetherModel::Straight),
        (KiteModel::OnePoint, TetherModel::Segmented),
        (KiteModel::FourPoint, TetherModel::Straight),
        (KiteModel::FourPoint, TetherModel::Segmented),
    ];
    let half = cfg.scenario.duration / 2.0;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&(kite, tether)| {
                let mut c = cfg.clone();
                c.model.kite = kite;
                c.model.tether = tether;
                c.scenario.phase = FlightPhase::Parking;
                s.spawn(move || {
                    parking_equilibrium(
                        &c,
                        c.atmosphere.wind.v_wind_ref,
                        c.scenario.l_t,
                        c.controller.depower_park,
                        half,
                        half,
                    )
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("parking worker panicked")).collect()
    });
    let mut csv = String::from(PARKING_HEADER);
    csv.push('\n');
    let mut failures = Vec::new();
    for (&(kite, tether), r) in variants.iter().zip(&results) {
        let (k, t) = model_label(kite, tether);
        match r {
            Ok(p) => {
                let _ = writeln!(
                    csv,
                    "{k},{t},{},{},{},{}",
                    sig6(p.force),
                    sig6(p.force_std),
                    sig6(p.elevation),
                    sig6(p.elevation_std)
                );
            }
            Err(e) => {
                let _ = writeln!(csv, "{k},{t},nan,nan,nan,nan");
                failures.push(format!("{k} {t}: {e}"));
            }
        }
    }
    fs::write(out.join(PARKING_CSV), &csv)?;
    print!("{csv}");
    if !failures.is_empty() {
        bail!("parking failed for {}", failures.join("; "));
    }
    Ok(())
}

/// Key=value report of the turn-rate fit and the cycle metrics.
pub fn calibration_report(log: &[LogRecord]) -> (String, Vec<String>) {
    let mut report = String::new();
    let mut failures = Vec::new();
    let samples = turn_rate_samples(log, TURN_RATE_SMOOTHING);
    let _ = writeln!(report, "turn_rate.samples={}", samples.len());
    match fit_turn_rate(&samples) {
        Ok(f) => {
            for (k, v) in [("c0", f.c0), ("c1", f.c1), ("c2", f.c2), ("rho_pcc", f.rho_pcc), ("sigma", f.sigma)] {
                let _ = writeln!(report, "turn_rate.{k}={v}");
            }
        }
        Err(e) => {
            let _ = writeln!(report, "turn_rate.error={e}");
            failures.push(format!("turn-rate fit: {e}"));
        }
    }
    match cycle_metrics(log) {
        Ok(m) => {
            for line in m.report().lines() {
                let _ = writeln!(report, "cycle.{line}");
            }
        }
        Err(e) => {
            let _ = writeln!(report, "cycle.error={e}");
            failures.push(format!("cycle metrics: {e}"));
        }
    }
    let r = calibration::REFERENCE_PARAMS;
    for (k, v) in [
        ("u_d0", r.u_d0),
        ("z0", r.z0),
        ("k_blend", r.k_blend),
        ("alpha_d_max_deg", r.alpha_d_max_deg),
        ("c_d_t", r.c_d_t),
    ] {
        let _ = writeln!(report, "reference.{k}={v}");
    }
    (report, failures)
}

fn calibrate(cfg: &SimConfig, log_path: Option<&Path>, out: &Path) -> Result<()> {
    let log = match log_path {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_csv(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?
        }
        None => {
            let log = simulate(cfg)?;
            write_log(out, &log)?;
            log
        }
    };
    let (report, failures) = calibration_report(&log);
    fs::write(out.join("calibration.txt"), &report)?;
    print!("{report}");
    if !failures.is_empty() {
        bail!("{}", failures.join("; "));
    }
    Ok(())
}

fn realtime(cfg: &SimConfig, port: u16, duration: Option<f64>, out: &Path) -> Result<()> {
    let (server, commands) = TelemetryServer::start(port).with_context(|| format!("binding port {port}"))?;
    println!("listening=ws://{}", server.addr);
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        // a second handler cannot be installed; the first one already stops us
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed));
    }
    let mut sim = Simulation::new(cfg.clone())?;
    let mut sink = server.sink();
    let result = run_realtime(&mut sim, RealtimeOptions { duration, paced: true }, &commands, &mut sink, &stop);
    drop(sink);
    let dropped = server.queue.dropped();
    drop(server);
    let report = result?;
    write_log(out, &report.log)?;
    let intervals = report.published.max(1) as f64;
    println!("published={}", report.published);
    println!("missed={}", report.missed);
    println!("miss_fraction={}", report.missed as f64 / intervals);
    println!("dropped={dropped}");
    println!("rejected_commands={}", report.rejected_commands);
    println!("degraded_warnings={}", report.degraded_warnings);
    Ok(())
}
