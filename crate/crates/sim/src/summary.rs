//! Run metrics computed from a trace alone.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::trace::{format_value, Trace, TraceError, ROBOT_PREFIXES};

/// Tilt beyond which a robot counts as fallen, rad.
pub const FALL_TILT: f64 = 0.6;
/// Window of the moving average removed before oscillation analysis, s.
pub const DETREND_WINDOW: f64 = 2.0;
/// Fraction of the trace kept at each end of the steady segment.
pub const STEADY_SEGMENT: (f64, f64) = (0.2, 0.8);
/// Band searched for the dominant force oscillation, Hz.
pub const FORCE_BAND: (f64, f64) = (0.3, 3.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSummary {
    pub zmp_margin_min: f64,
    pub zmp_margin_mean: f64,
    pub velocity_rmse: f64,
    pub slack_max: f64,
    pub solve_ms_mean: f64,
    pub tilt_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSummary {
    pub mean: f64,
    pub peak: f64,
    /// Mean interval between upward zero crossings of the detrended force.
    pub period: f64,
    pub peak_frequency: f64,
    /// Single-sided spectral amplitude at `peak_frequency`, N.
    pub peak_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: usize,
    pub duration: f64,
    pub follower: RobotSummary,
    pub leader: RobotSummary,
    pub payload_clearance_min: f64,
    /// Longitudinal hook force estimated by the follower.
    pub force: ForceSummary,
    pub completed: bool,
}

fn finite(xs: &[f64]) -> impl Iterator<Item = f64> + '_ {
    xs.iter().copied().filter(|v| v.is_finite())
}

fn min(xs: &[f64]) -> f64 {
    finite(xs).fold(f64::NAN, f64::min)
}

fn max(xs: &[f64]) -> f64 {
    finite(xs).fold(f64::NAN, f64::max)
}

fn mean(xs: &[f64]) -> f64 {
    let (s, n) = finite(xs).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Centered moving average; the window shrinks at the ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Mean spacing of upward zero crossings, linearly interpolated.
pub fn zero_crossing_period(x: &[f64], dt: f64) -> Option<f64> {
    let mut crossings = Vec::new();
    for i in 1..x.len() {
        let (a, b) = (x[i - 1], x[i]);
        if a < 0.0 && b >= 0.0 {
            crossings.push((i as f64 - 1.0 + a / (a - b)) * dt);
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Largest single-sided DFT amplitude in `band`, scanned at a quarter of
/// the natural frequency resolution. Returns `(frequency, amplitude)`.
pub fn spectral_peak(x: &[f64], dt: f64, band: (f64, f64)) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let df = 0.25 / (n as f64 * dt);
    let mut best: Option<(f64, f64)> = None;
    let mut f = band.0;
    while f <= band.1 {
        let w = 2.0 * PI * f * dt;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in x.iter().enumerate() {
            let (s, c) = (w * k as f64).sin_cos();
            re += v * c;
            im -= v * s;
        }
        let amp = 2.0 * (re * re + im * im).sqrt() / n as f64;
        if best.is_none_or(|(_, a)| amp > a) {
            best = Some((f, amp));
        }
        f += df;
    }
    best
}

fn robot_summary(trace: &Trace, prefix: &str) -> Result<RobotSummary, TraceError> {
    let col = |f: &str| trace.column(&format!("{prefix}_{f}"));
    let (vx, vy, yaw, cmd) = (col("vx")?, col("vy")?, col("yaw")?, col("v_cmd")?);
    let err: Vec<f64> = (0..trace.len()).map(|i| vx[i] * yaw[i].cos() + vy[i] * yaw[i].sin() - cmd[i]).collect();
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    let (roll, pitch) = (col("roll")?, col("pitch")?);
    let tilt: Vec<f64> = roll.iter().zip(&pitch).map(|(r, p)| r.abs().max(p.abs())).collect();
    let margin = col("zmp_margin")?;
    Ok(RobotSummary {
        zmp_margin_min: min(&margin),
        zmp_margin_mean: mean(&margin),
        velocity_rmse: mean(&sq).sqrt(),
        slack_max: max(&col("slack_norm")?),
        solve_ms_mean: mean(&col("solve_ms")?),
        tilt_max: max(&tilt),
    })
}

fn force_summary(trace: &Trace) -> Result<ForceSummary, TraceError> {
    let t = trace.column("t")?;
    let f = trace.column("follower_fee_x")?;
    let none = ForceSummary { mean: mean(&f), peak: max(&f.iter().map(|v| v.abs()).collect::<Vec<_>>()), period: f64::NAN, peak_frequency: f64::NAN, peak_amplitude: f64::NAN };
    if t.len() < 4 || f.iter().any(|v| !v.is_finite()) {
        return Ok(none);
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let window = ((DETREND_WINDOW / dt).round() as usize).max(1);
    let trend = moving_average(&f, window);
    let detrended: Vec<f64> = f.iter().zip(&trend).map(|(a, b)| a - b).collect();
    let lo = (STEADY_SEGMENT.0 * t.len() as f64) as usize;
    let hi = (STEADY_SEGMENT.1 * t.len() as f64) as usize;
    let steady = &detrended[lo..hi];
    let (peak_frequency, peak_amplitude) = spectral_peak(steady, dt, FORCE_BAND).unwrap_or((f64::NAN, f64::NAN));
    Ok(ForceSummary { period: zero_crossing_period(steady, dt).unwrap_or(f64::NAN), peak_frequency, peak_amplitude, ..none })
}

/// Summarizes a trace. A run counts as completed here when no robot
/// exceeds the fall tilt and every pose value is finite.
pub fn summarize(trace: &Trace) -> Result<RunSummary, TraceError> {
    let t = trace.column("t")?;
    let follower = robot_summary(trace, ROBOT_PREFIXES[0])?;
    let leader = robot_summary(trace, ROBOT_PREFIXES[1])?;
    // a human leader has no attitude, so only the follower pose is checked
    let mut pose_finite = true;
    for f in ["x", "y", "z", "roll", "pitch", "yaw"] {
        pose_finite &= trace.column(&format!("follower_{f}"))?.iter().all(|v| v.is_finite());
    }
    let upright = |r: &RobotSummary| !(r.tilt_max > FALL_TILT);
    Ok(RunSummary {
        rows: trace.len(),
        duration: t.last().copied().unwrap_or(0.0),
        follower,
        leader,
        payload_clearance_min: min(&trace.column("payload_clearance")?),
        force: force_summary(trace)?,
        completed: pose_finite && upright(&follower) && upright(&leader),
    })
}

impl RunSummary {
    /// `key = value` text, one metric per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("completed", self.completed.to_string());
        put("rows", self.rows.to_string());
        put("duration", format_value(self.duration));
        for (p, r) in ROBOT_PREFIXES.iter().zip([&self.follower, &self.leader]) {
            put(&format!("{p}.zmp_margin_min"), format_value(r.zmp_margin_min));
            put(&format!("{p}.zmp_margin_mean"), format_value(r.zmp_margin_mean));
            put(&format!("{p}.velocity_rmse"), format_value(r.velocity_rmse));
            put(&format!("{p}.slack_max"), format_value(r.slack_max));
            put(&format!("{p}.solve_ms_mean"), format_value(r.solve_ms_mean));
            put(&format!("{p}.tilt_max"), format_value(r.tilt_max));
        }
        put("payload.clearance_min", format_value(self.payload_clearance_min));
        put("force.mean", format_value(self.force.mean));
        put("force.peak", format_value(self.force.peak));
        put("force.period", format_value(self.force.period));
        put("force.peak_frequency", format_value(self.force.peak_frequency));
        put("force.peak_amplitude", format_value(self.force.peak_amplitude));
        s
    }
}
