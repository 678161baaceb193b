//! Fixed-schema CSV trace of a run.
//!
//! One row per logged instant: time, then 29 columns for the follower and
//! 29 for the leader, then the payload position and its ground clearance.
//! Quantities that do not apply (a human leader has no joints) are `nan`.

use std::io::Write;

use nalgebra::Vector3;

use crate::world::{Leader, SimRobot, World};

pub const ROBOT_COLUMNS: usize = 29;
pub const NUM_COLUMNS: usize = 1 + 2 * ROBOT_COLUMNS + 4;

const ROBOT_FIELDS: [&str; ROBOT_COLUMNS] = [
    "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "v_cmd", "yaw_rate_cmd", "q1", "q2", "q3", "fee_x", "fee_y",
    "fee_z", "tau_x", "tau_y", "tau_z", "zmp_x", "zmp_y", "zmp_margin", "slack_norm", "solve_ms", "contact_lf",
    "contact_rf", "contact_lh", "contact_rh",
];

pub const ROBOT_PREFIXES: [&str; 2] = ["follower", "leader"];

/// Column names in order.
pub fn header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for p in ROBOT_PREFIXES {
        cols.extend(ROBOT_FIELDS.iter().map(|f| format!("{p}_{f}")));
    }
    cols.extend(["payload_x", "payload_y", "payload_z", "payload_clearance"].map(String::from));
    cols
}

/// Decimal places never exceed this, so values below it print as zero.
pub const MAX_DECIMALS: i32 = 12;

/// Formats with 9 significant digits in positional notation.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (8 - mag).clamp(0, MAX_DECIMALS) as usize;
    let s = format!("{v:.decimals$}");
    // -0.000000 and friends
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn robot_row(r: &SimRobot, timing: bool, out: &mut Vec<f64>) {
    let e = r.euler();
    let (v_cmd, w_cmd) = r.controller.command();
    let d = r.controller.diagnostics();
    let (fee, tau) = match &d.wrench {
        Some(w) => (r.controller.config.mount.rotation() * w.f_ee_hat, w.tau_ext),
        None => (Vector3::repeat(f64::NAN), Vector3::repeat(f64::NAN)),
    };
    let (zmp, margin) = match r.zmp(0.0) {
        Some((p, depth)) => ([p.x, p.y], depth),
        None => ([f64::NAN; 2], f64::NAN),
    };
    out.extend(r.position.iter());
    out.extend(e.iter());
    out.extend(r.velocity.iter());
    out.extend([v_cmd, w_cmd]);
    out.extend(r.arm.q.iter());
    out.extend(fee.iter());
    out.extend(tau.iter());
    out.extend(zmp);
    out.extend([margin, d.slack_norm, if timing { d.solve_ms } else { 0.0 }]);
    out.extend(r.contacts.iter().map(|&c| if c { 1.0 } else { 0.0 }));
}

/// Numeric row for the current world state.
///
/// `f̂_ee` is given in the robot base frame so that `fee_x` is longitudinal
/// for both robots. Solve times are zeroed unless `timing` is set, which
/// keeps traces reproducible.
pub fn row(world: &World, timing: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(NUM_COLUMNS);
    out.push(world.t);
    robot_row(&world.follower, timing, &mut out);
    match &world.leader {
        Leader::Robot { robot, .. } => robot_row(robot, timing, &mut out),
        Leader::Human(h) => {
            let mut cols = [f64::NAN; ROBOT_COLUMNS];
            cols[..3].copy_from_slice(h.position.as_slice());
            cols[6..9].copy_from_slice(h.velocity.as_slice());
            out.extend(cols);
        }
    }
    out.extend(world.payload.position.iter());
    out.push(world.payload_clearance());
    debug_assert_eq!(out.len(), NUM_COLUMNS);
    out
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    timing: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W, timing: bool) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(header())?;
        Ok(Self { inner, timing })
    }

    pub fn log(&mut self, world: &World) -> csv::Result<()> {
        self.inner.write_record(row(world, self.timing).into_iter().map(format_value))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

/// Parsed trace: column names and rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {col}: cannot parse {text:?}")]
    Value { row: usize, col: usize, text: String },
    #[error("missing column {0}")]
    MissingColumn(String),
}

impl Trace {
    pub fn read<R: std::io::Read>(source: R) -> Result<Self, TraceError> {
        let mut rdr = csv::Reader::from_reader(source);
        let columns = rdr.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, s)| s.parse::<f64>().map_err(|_| TraceError::Value { row: i + 1, col: j, text: s.into() }))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn index(&self, name: &str) -> Result<usize, TraceError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| TraceError::MissingColumn(name.into()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, TraceError> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
