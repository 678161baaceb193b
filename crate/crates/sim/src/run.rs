//! Scenario orchestration: build, step, log, summarize.

use std::path::PathBuf;
use std::time::Instant;

use crate::scenario::{build_world, ScenarioConfig};
use crate::summary::{summarize, RunSummary};
use crate::trace::{Trace, TraceError, TraceWriter};
use crate::world::SimError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("setup failed: {0}")]
    Setup(SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    /// Fatal simulation error that ended the run early.
    pub error: Option<SimError>,
    /// Time at which a robot fell, ending the run.
    pub fallen_at: Option<f64>,
    /// Range of the hook-to-hook distance over all physics steps, m.
    pub hook_distance: (f64, f64),
    pub wall_seconds: f64,
    /// Raw CSV trace.
    pub trace: Vec<u8>,
}

impl RunReport {
    /// 0 on completion, 1 when a robot fell, 2 on a fatal error.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            2
        } else if self.summary.completed {
            0
        } else {
            1
        }
    }
}

/// Runs a scenario in memory. The summary is computed from the written
/// trace; falls and fatal errors additionally clear its completion flag.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let mut world = build_world(cfg).map_err(RunError::Setup)?;
    let mut writer = TraceWriter::new(Vec::new(), cfg.wall_clock_timing)?;
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let decimation = ((1.0 / (cfg.log_rate * cfg.dt)).round() as usize).max(1);
    let mut error = None;
    let mut fallen_at = None;
    let mut hook_distance = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 1..=steps {
        if let Err(e) = world.step() {
            error = Some(e);
            break;
        }
        let d = (world.leader.hook() - world.follower.hook()).norm();
        hook_distance = (hook_distance.0.min(d), hook_distance.1.max(d));
        let fallen = world.any_fallen();
        if k % decimation == 0 || fallen {
            writer.log(&world)?;
        }
        if fallen {
            fallen_at = Some(world.t);
            break;
        }
    }
    let trace = writer.finish()?;
    let mut summary = summarize(&Trace::read(trace.as_slice())?)?;
    summary.completed &= error.is_none() && fallen_at.is_none();
    Ok(RunReport { summary, error, fallen_at, hook_distance, wall_seconds: start.elapsed().as_secs_f64(), trace })
}

/// Paths of the files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub summary: PathBuf,
}

/// Runs a scenario and writes `<kind>_trace.csv` and `<kind>_summary.txt`
/// into the configured output directory.
pub fn run(cfg: &ScenarioConfig) -> Result<(RunReport, RunFiles), RunError> {
    let report = simulate(cfg)?;
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    let kind = cfg.kind.as_str();
    let files = RunFiles { trace: dir.join(format!("{kind}_trace.csv")), summary: dir.join(format!("{kind}_summary.txt")) };
    std::fs::write(&files.trace, &report.trace)?;
    std::fs::write(&files.summary, report.summary.to_text())?;
    Ok((report, files))
}
