//! Scenario configuration: a line-oriented `key = value` format with dotted
//! section paths, defaults for the three carrying tasks, and the world
//! builder.
//!
//! ```text
//! # comments start with '#'
//! kind = rr_rope
//! coupling.mass = 2
//! guidance.theta_bias = 10 deg
//! leader.waypoints = [0, 0, 6, 0]
//! ```
//!
//! Numbers accept a trailing `deg`, converted to radians. Every key must be
//! known; [`ScenarioConfig::emit`] writes the full key set.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use pacc_core::gait::support_correction;
use pacc_core::arm::{forward_kinematics, level_gravity, pendulum_angle, ArmMount, SpringMode};
use pacc_core::locomotion::{ControllerConfig, Role};
use pacc_core::scalar::GRAVITY;

use crate::coupling::{BarParams, RopeParams};
use crate::leader::{LeaderScript, LeaderTracking, LowPass};
use crate::terrain::{Heightfield, HeightfieldSpec, StairSpec, Terrain};
use crate::world::{Coupling, GroundContact, HumanHand, Leader, Payload, SimError, SimRobot, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { line: None, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    RrRigid,
    RrRope,
    HrRigid,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [ScenarioKind::RrRigid, ScenarioKind::RrRope, ScenarioKind::HrRigid, ScenarioKind::Custom];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::RrRigid => "rr_rigid",
            ScenarioKind::RrRope => "rr_rope",
            ScenarioKind::HrRigid => "hr_rigid",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    None,
    RigidBar,
    Rope,
}

impl CouplingKind {
    fn as_str(self) -> &'static str {
        match self {
            CouplingKind::None => "none",
            CouplingKind::RigidBar => "rigid_bar",
            CouplingKind::Rope => "rope",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [CouplingKind::None, CouplingKind::RigidBar, CouplingKind::Rope].into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderKind {
    Robot,
    Human,
}

impl LeaderKind {
    fn as_str(self) -> &'static str {
        match self {
            LeaderKind::Robot => "robot",
            LeaderKind::Human => "human",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [LeaderKind::Robot, LeaderKind::Human].into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainConfig {
    pub stairs: bool,
    pub stair: StairSpec,
    pub heightfield: bool,
    /// Heightfield parameters; the seed comes from the scenario seed.
    pub rocks: HeightfieldSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub kind: CouplingKind,
    /// Payload mass, kg.
    pub mass: f64,
    pub bar: BarParams,
    pub rope: RopeParams,
    /// Distance between the hooks at the start of a rope run, m.
    pub hook_separation: f64,
    pub ground: GroundContact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderConfig {
    pub kind: LeaderKind,
    /// Path of the leader (robot CoM or human hand), world xy.
    pub waypoints: Vec<Vector2<f64>>,
    pub cruise: f64,
    pub accel: f64,
    pub start_delay: f64,
    pub tracking: LeaderTracking,
    /// Hand filter cutoff for a human leader, Hz.
    pub hand_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Simulated time, s.
    pub duration: f64,
    pub seed: u64,
    /// Physics step, s.
    pub dt: f64,
    /// Trace rows per second.
    pub log_rate: f64,
    /// Log measured solve times instead of zeros (breaks byte-identical traces).
    pub wall_clock_timing: bool,
    pub out_dir: String,
    pub terrain: TerrainConfig,
    pub coupling: CouplingConfig,
    pub leader: LeaderConfig,
    /// Controller parameters shared by both robots (the leader mounts its
    /// arm at the rear).
    pub controller: ControllerConfig<f64>,
    /// Derive the spring equilibrium from the design pose and payload.
    pub arm_preload: bool,
    /// Arm pose that the preload makes static, rad.
    pub design_pose: Vector3<f64>,
}

/// Joint-3 angle that hangs the last link vertically in a level arm.
pub fn vertical_link_pose(controller: &ControllerConfig<f64>) -> Vector3<f64> {
    let frames = forward_kinematics(&controller.arm, &Vector3::zeros());
    let theta = pendulum_angle(&frames, &nalgebra::Matrix3::identity());
    Vector3::new(0.0, 0.0, theta)
}

impl ScenarioConfig {
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut controller = ControllerConfig::default();
        controller.gait.start_delay = 1.0;
        let design_pose = vertical_link_pose(&controller);
        let mut cfg = Self {
            kind,
            duration: 60.0,
            seed: 1,
            dt: 1e-3,
            log_rate: 100.0,
            wall_clock_timing: false,
            out_dir: "out".into(),
            terrain: TerrainConfig {
                stairs: true,
                stair: StairSpec::default(),
                heightfield: true,
                rocks: HeightfieldSpec::default(),
            },
            coupling: CouplingConfig {
                kind: CouplingKind::RigidBar,
                mass: 7.0,
                bar: BarParams::default(),
                rope: RopeParams::default(),
                hook_separation: 0.4,
                ground: GroundContact::default(),
            },
            leader: LeaderConfig {
                kind: LeaderKind::Robot,
                waypoints: vec![Vector2::zeros(), Vector2::new(6.0, 0.0)],
                cruise: 0.15,
                accel: 0.05,
                start_delay: 2.0,
                tracking: LeaderTracking::default(),
                hand_cutoff: 1.5,
            },
            controller,
            arm_preload: true,
            design_pose,
        };
        match kind {
            ScenarioKind::RrRigid | ScenarioKind::Custom => {}
            ScenarioKind::RrRope => {
                cfg.coupling.kind = CouplingKind::Rope;
                cfg.coupling.mass = 2.0;
                cfg.controller.guidance.theta_bias = 10f64.to_radians();
            }
            ScenarioKind::HrRigid => {
                cfg.leader.kind = LeaderKind::Human;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.controller;
        c.gait.validate().map_err(|e| invalid(e.to_string()))?;
        c.guidance.validate().map_err(|e| invalid(format!("guidance: {e}")))?;
        c.arm.validate().map_err(|e| invalid(e.to_string()))?;
        c.mpc.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.duration >= 0.0) {
            return Err(invalid("duration must be non-negative"));
        }
        if !(self.dt > 0.0 && self.dt <= 2e-3) {
            return Err(invalid("dt must lie in (0, 0.002] s"));
        }
        if !(self.log_rate > 0.0 && self.log_rate <= 1.0 / self.dt + 1e-9) {
            return Err(invalid("log_rate must be positive and at most the physics rate"));
        }
        if self.leader.waypoints.is_empty() {
            return Err(invalid("leader.waypoints needs at least one point"));
        }
        if self.leader.kind == LeaderKind::Human && self.coupling.kind == CouplingKind::Rope {
            return Err(invalid("a human leader needs a rigid bar or no coupling"));
        }
        if self.coupling.kind == CouplingKind::Rope && self.coupling.hook_separation >= 2.0 * self.coupling.rope.length {
            return Err(invalid("coupling.hook_separation must be shorter than both ropes together"));
        }
        Ok(())
    }

    /// Full key set with current values.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for f in fields() {
            let _ = writeln!(out, "{} = {}", f.key, (f.get)(self));
        }
        out
    }
}

/// A parsed right-hand side.
#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Bool(bool),
    Word(String),
    List(Vec<f64>),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Word(w) => write!(f, "{w}"),
            Value::List(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", items.join(", "))
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Num,
    Bool,
    Word,
    List,
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (body, scale) = match s.strip_suffix("deg") {
        Some(b) => (b.trim(), std::f64::consts::PI / 180.0),
        None => (s, 1.0),
    };
    let v: f64 = body.parse().map_err(|_| format!("expected a number, got '{s}'"))?;
    if !v.is_finite() {
        return Err(format!("expected a finite number, got '{s}'"));
    }
    Ok(if scale == 1.0 { v } else { v * scale })
}

fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    match kind {
        Kind::Num => parse_number(raw).map(Value::Num),
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got '{raw}'")),
        },
        Kind::Word => {
            let w = raw.trim_matches('"');
            if w.is_empty() {
                Err("expected a value".into())
            } else {
                Ok(Value::Word(w.to_string()))
            }
        }
        Kind::List => {
            let inner = raw
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| format!("expected a list like [1, 2], got '{raw}'"))?;
            if inner.trim().is_empty() {
                return Ok(Value::List(Vec::new()));
            }
            inner.split(',').map(parse_number).collect::<Result<Vec<_>, _>>().map(Value::List)
        }
    }
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    Positive,
    NonNegative,
}

struct Field {
    key: &'static str,
    kind: Kind,
    range: Range,
    get: fn(&ScenarioConfig) -> Value,
    set: fn(&mut ScenarioConfig, Value) -> Result<(), String>,
}

fn num(v: Value) -> f64 {
    match v {
        Value::Num(x) => x,
        _ => unreachable!("kind checked by the parser"),
    }
}

fn list(v: Value, len: usize) -> Result<Vec<f64>, String> {
    match v {
        Value::List(x) if len == 0 || x.len() == len => Ok(x),
        Value::List(x) => Err(format!("expected {len} numbers, got {}", x.len())),
        _ => unreachable!("kind checked by the parser"),
    }
}

fn word(v: Value) -> String {
    match v {
        Value::Word(w) => w,
        _ => unreachable!("kind checked by the parser"),
    }
}

fn flag(v: Value) -> bool {
    match v {
        Value::Bool(b) => b,
        _ => unreachable!("kind checked by the parser"),
    }
}

fn count(v: Value) -> Result<usize, String> {
    let x = num(v);
    if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
        Ok(x as usize)
    } else {
        Err(format!("expected a non-negative integer, got {x}"))
    }
}

macro_rules! num_field {
    ($key:literal, $range:ident, $($path:tt)+) => {
        Field {
            key: $key,
            kind: Kind::Num,
            range: Range::$range,
            get: |c| Value::Num(c.$($path)+),
            set: |c, v| {
                c.$($path)+ = num(v);
                Ok(())
            },
        }
    };
}

macro_rules! bool_field {
    ($key:literal, $($path:tt)+) => {
        Field {
            key: $key,
            kind: Kind::Bool,
            range: Range::Any,
            get: |c| Value::Bool(c.$($path)+),
            set: |c, v| {
                c.$($path)+ = flag(v);
                Ok(())
            },
        }
    };
}

macro_rules! vec3_field {
    ($key:literal, $($path:tt)+) => {
        Field {
            key: $key,
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.$($path)+.iter().copied().collect()),
            set: |c, v| {
                let x = list(v, 3)?;
                c.$($path)+ = Vector3::new(x[0], x[1], x[2]);
                Ok(())
            },
        }
    };
}

macro_rules! array_field {
    ($key:literal, $n:literal, $($path:tt)+) => {
        Field {
            key: $key,
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.$($path)+.to_vec()),
            set: |c, v| {
                let x = list(v, $n)?;
                c.$($path)+.copy_from_slice(&x);
                Ok(())
            },
        }
    };
}

fn spring_mode_field(key: &'static str, get: fn(&ScenarioConfig) -> Value, set: fn(&mut ScenarioConfig, Value) -> Result<(), String>) -> Field {
    Field { key, kind: Kind::Word, range: Range::Any, get, set }
}

fn parse_spring_mode(v: Value) -> Result<SpringMode, String> {
    let w = word(v);
    SpringMode::parse(&w).ok_or_else(|| format!("unknown spring mode '{w}' (antagonistic | asymmetric)"))
}

fn fields() -> Vec<Field> {
    vec![
        Field {
            key: "kind",
            kind: Kind::Word,
            range: Range::Any,
            get: |c| Value::Word(c.kind.as_str().into()),
            set: |c, v| {
                let w = word(v);
                c.kind = ScenarioKind::parse(&w).ok_or_else(|| format!("unknown scenario kind '{w}'"))?;
                Ok(())
            },
        },
        num_field!("duration", NonNegative, duration),
        Field {
            key: "seed",
            kind: Kind::Num,
            range: Range::NonNegative,
            get: |c| Value::Num(c.seed as f64),
            set: |c, v| {
                c.seed = count(v)? as u64;
                Ok(())
            },
        },
        num_field!("dt", Positive, dt),
        num_field!("log_rate", Positive, log_rate),
        bool_field!("wall_clock_timing", wall_clock_timing),
        Field {
            key: "out_dir",
            kind: Kind::Word,
            range: Range::Any,
            get: |c| Value::Word(c.out_dir.clone()),
            set: |c, v| {
                c.out_dir = word(v);
                Ok(())
            },
        },
        // terrain
        bool_field!("terrain.stairs", terrain.stairs),
        num_field!("terrain.stairs.origin", Any, terrain.stair.origin),
        num_field!("terrain.stairs.depth", Positive, terrain.stair.depth),
        Field {
            key: "terrain.stairs.risers",
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.terrain.stair.risers.clone()),
            set: |c, v| {
                c.terrain.stair.risers = list(v, 0)?;
                Ok(())
            },
        },
        num_field!("terrain.stairs.edge_smoothing", NonNegative, terrain.stair.edge_smoothing),
        bool_field!("terrain.heightfield", terrain.heightfield),
        num_field!("terrain.heightfield.x_min", Any, terrain.rocks.x_min),
        num_field!("terrain.heightfield.x_max", Any, terrain.rocks.x_max),
        num_field!("terrain.heightfield.half_width", Positive, terrain.rocks.half_width),
        num_field!("terrain.heightfield.spacing", Positive, terrain.rocks.spacing),
        num_field!("terrain.heightfield.amplitude", NonNegative, terrain.rocks.amplitude),
        // coupling
        Field {
            key: "coupling.kind",
            kind: Kind::Word,
            range: Range::Any,
            get: |c| Value::Word(c.coupling.kind.as_str().into()),
            set: |c, v| {
                let w = word(v);
                c.coupling.kind = CouplingKind::parse(&w).ok_or_else(|| format!("unknown coupling '{w}' (none | rigid_bar | rope)"))?;
                Ok(())
            },
        },
        num_field!("coupling.mass", NonNegative, coupling.mass),
        num_field!("coupling.bar_length", Positive, coupling.bar.length),
        num_field!("coupling.bar_stiffness", Positive, coupling.bar.stiffness),
        num_field!("coupling.bar_damping", NonNegative, coupling.bar.damping),
        num_field!("coupling.rope_length", Positive, coupling.rope.length),
        num_field!("coupling.rope_stiffness", Positive, coupling.rope.stiffness),
        num_field!("coupling.rope_damping", NonNegative, coupling.rope.damping),
        num_field!("coupling.hook_separation", Positive, coupling.hook_separation),
        num_field!("coupling.ground_stiffness", Positive, coupling.ground.stiffness),
        num_field!("coupling.ground_damping", NonNegative, coupling.ground.damping),
        // leader
        Field {
            key: "leader.kind",
            kind: Kind::Word,
            range: Range::Any,
            get: |c| Value::Word(c.leader.kind.as_str().into()),
            set: |c, v| {
                let w = word(v);
                c.leader.kind = LeaderKind::parse(&w).ok_or_else(|| format!("unknown leader '{w}' (robot | human)"))?;
                Ok(())
            },
        },
        Field {
            key: "leader.waypoints",
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.leader.waypoints.iter().flat_map(|p| [p.x, p.y]).collect()),
            set: |c, v| {
                let x = list(v, 0)?;
                if x.len() % 2 != 0 {
                    return Err("waypoints are x, y pairs".into());
                }
                c.leader.waypoints = x.chunks(2).map(|p| Vector2::new(p[0], p[1])).collect();
                Ok(())
            },
        },
        num_field!("leader.cruise", NonNegative, leader.cruise),
        num_field!("leader.accel", Positive, leader.accel),
        num_field!("leader.start_delay", NonNegative, leader.start_delay),
        num_field!("leader.k_along", NonNegative, leader.tracking.k_along),
        num_field!("leader.k_heading", NonNegative, leader.tracking.k_heading),
        num_field!("leader.k_lateral", NonNegative, leader.tracking.k_lateral),
        num_field!("leader.v_max", NonNegative, leader.tracking.v_max),
        num_field!("leader.yaw_rate_max", NonNegative, leader.tracking.yaw_rate_max),
        num_field!("leader.hand_cutoff", Positive, leader.hand_cutoff),
        // gait
        num_field!("gait.step_frequency", Positive, controller.gait.step_frequency),
        num_field!("gait.duty_factor", Any, controller.gait.duty_factor),
        array_field!("gait.phase_offsets", 4, controller.gait.phase_offsets),
        Field {
            key: "gait.home_positions",
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.controller.gait.home_positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect()),
            set: |c, v| {
                let x = list(v, 12)?;
                for (i, p) in c.controller.gait.home_positions.iter_mut().enumerate() {
                    *p = Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
                }
                Ok(())
            },
        },
        num_field!("gait.step_height", NonNegative, controller.gait.step_height),
        num_field!("gait.start_delay", NonNegative, controller.gait.start_delay),
        // guidance
        num_field!("guidance.theta1", Positive, controller.guidance.theta1),
        num_field!("guidance.theta2", Positive, controller.guidance.theta2),
        num_field!("guidance.psi1", Positive, controller.guidance.psi1),
        num_field!("guidance.psi2", Positive, controller.guidance.psi2),
        num_field!("guidance.v1", Positive, controller.guidance.v1),
        num_field!("guidance.v2", Positive, controller.guidance.v2),
        num_field!("guidance.psidot1", Positive, controller.guidance.psidot1),
        num_field!("guidance.psidot2", Positive, controller.guidance.psidot2),
        num_field!("guidance.theta_bias", Any, controller.guidance.theta_bias),
        num_field!("guidance.filter_omega", Positive, controller.guidance.filter_omega),
        num_field!("guidance.filter_zeta", Positive, controller.guidance.filter_zeta),
        num_field!("guidance.hysteresis", NonNegative, controller.guidance.hysteresis),
        // arm
        array_field!("arm.segment_lengths", 4, controller.arm.segment_lengths),
        array_field!("arm.bend_angles", 3, controller.arm.bend_angles),
        array_field!("arm.link_masses", 4, controller.arm.link_masses),
        vec3_field!("arm.stiffness", controller.arm.stiffness),
        vec3_field!("arm.damping", controller.arm.damping),
        vec3_field!("arm.equilibrium", controller.arm.equilibrium),
        spring_mode_field(
            "arm.spring_mode1",
            |c| Value::Word(c.controller.arm.spring_modes[0].as_str().into()),
            |c, v| {
                c.controller.arm.spring_modes[0] = parse_spring_mode(v)?;
                Ok(())
            },
        ),
        spring_mode_field(
            "arm.spring_mode2",
            |c| Value::Word(c.controller.arm.spring_modes[1].as_str().into()),
            |c, v| {
                c.controller.arm.spring_modes[1] = parse_spring_mode(v)?;
                Ok(())
            },
        ),
        spring_mode_field(
            "arm.spring_mode3",
            |c| Value::Word(c.controller.arm.spring_modes[2].as_str().into()),
            |c, v| {
                c.controller.arm.spring_modes[2] = parse_spring_mode(v)?;
                Ok(())
            },
        ),
        num_field!("arm.asymmetric_preload", Any, controller.arm.asymmetric_preload),
        Field {
            key: "arm.joint_limits",
            kind: Kind::List,
            range: Range::Any,
            get: |c| Value::List(c.controller.arm.joint_limits.iter().flat_map(|(a, b)| [*a, *b]).collect()),
            set: |c, v| {
                let x = list(v, 6)?;
                for i in 0..3 {
                    c.controller.arm.joint_limits[i] = (x[2 * i], x[2 * i + 1]);
                }
                Ok(())
            },
        },
        bool_field!("arm.preload", arm_preload),
        vec3_field!("arm.design_pose", design_pose),
        num_field!("arm.mount_x", Any, controller.mount.position.x),
        num_field!("arm.mount_z", Any, controller.mount.position.z),
        // mpc
        Field {
            key: "mpc.horizon",
            kind: Kind::Num,
            range: Range::Positive,
            get: |c| Value::Num(c.controller.mpc.horizon as f64),
            set: |c, v| {
                c.controller.mpc.horizon = count(v)?;
                Ok(())
            },
        },
        num_field!("mpc.dt", Positive, controller.mpc.dt),
        num_field!("mpc.mass", Positive, controller.mpc.mass),
        vec3_field!("mpc.body_dims", controller.mpc.body_dims),
        num_field!("mpc.mu", Positive, controller.mpc.mu),
        num_field!("mpc.f_max", Positive, controller.mpc.f_max),
        num_field!("mpc.zmp_margin", NonNegative, controller.mpc.zmp_margin),
        num_field!("mpc.w_orientation", NonNegative, controller.mpc.w_orientation),
        num_field!("mpc.w_position_xy", NonNegative, controller.mpc.w_position_xy),
        num_field!("mpc.w_position_z", NonNegative, controller.mpc.w_position_z),
        num_field!("mpc.w_angular_velocity", NonNegative, controller.mpc.w_angular_velocity),
        num_field!("mpc.w_linear_velocity", NonNegative, controller.mpc.w_linear_velocity),
        num_field!("mpc.w_feet", NonNegative, controller.mpc.w_feet),
        num_field!("mpc.w_disturbance", NonNegative, controller.mpc.w_disturbance),
        num_field!("mpc.r_force", Positive, controller.mpc.r_force),
        num_field!("mpc.r_foot_velocity", Positive, controller.mpc.r_foot_velocity),
        num_field!("mpc.rho", Positive, controller.mpc.rho),
        Field {
            key: "mpc.sqp_iterations",
            kind: Kind::Num,
            range: Range::Positive,
            get: |c| Value::Num(c.controller.mpc.sqp_iterations as f64),
            set: |c, v| {
                c.controller.mpc.sqp_iterations = count(v)?;
                Ok(())
            },
        },
        Field {
            key: "mpc.qp_max_iterations",
            kind: Kind::Num,
            range: Range::Positive,
            get: |c| Value::Num(c.controller.mpc.qp_max_iterations as f64),
            set: |c, v| {
                c.controller.mpc.qp_max_iterations = count(v)?;
                Ok(())
            },
        },
        num_field!("mpc.qp_tolerance", Positive, controller.mpc.qp_tolerance),
        // controller
        bool_field!("controller.foothold_adjustment", controller.foothold_adjustment),
        bool_field!("controller.disturbance_prediction", controller.disturbance_prediction),
        num_field!("controller.estimation_period", Positive, controller.estimation_period),
        num_field!("controller.body_height", Positive, controller.body_height),
    ]
}

/// Strips a trailing comment that is not inside a quoted word.
fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses a configuration. `kind` may appear anywhere in the file and
/// selects the defaults every other key overrides; it defaults to `rr_rigid`.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table = fields();
    let mut entries: Vec<(usize, &Field, Value)> = Vec::new();
    let mut kind = ScenarioKind::RrRigid;
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected 'key = value', got '{body}'") })?;
        let (key, value) = (key.trim(), value.trim());
        let field = table
            .iter()
            .find(|f| f.key == key)
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("unknown key '{key}'") })?;
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == key) {
            return Err(ConfigError::Parse { line, msg: format!("duplicate key '{key}' (first set on line {first})") });
        }
        seen.push((field.key, line));
        let v = parse_value(field.kind, value).map_err(|msg| ConfigError::Parse { line, msg: format!("{key}: {msg}") })?;
        if let Value::Num(x) = v {
            let ok = match field.range {
                Range::Any => true,
                Range::Positive => x > 0.0,
                Range::NonNegative => x >= 0.0,
            };
            if !ok {
                let what = if matches!(field.range, Range::Positive) { "positive" } else { "non-negative" };
                return Err(ConfigError::Validation { line: Some(line), msg: format!("{key} must be {what}, got {x}") });
            }
        }
        if key == "kind" {
            let w = word(v.clone());
            kind = ScenarioKind::parse(&w).ok_or_else(|| ConfigError::Parse { line, msg: format!("unknown scenario kind '{w}'") })?;
        }
        entries.push((line, field, v));
    }
    let mut cfg = ScenarioConfig::defaults(kind);
    for (line, field, v) in entries {
        (field.set)(&mut cfg, v).map_err(|msg| ConfigError::Validation { line: Some(line), msg: format!("{}: {msg}", field.key) })?;
    }
    cfg.validate().map_err(|e| match e {
        ConfigError::Validation { line: None, msg } => {
            // point at the line of the offending key when the message names one
            let line = seen.iter().find(|(k, _)| msg.contains(k.rsplit('.').next().unwrap_or(k))).map(|(_, l)| *l);
            ConfigError::Validation { line, msg }
        }
        other => other,
    })?;
    Ok(cfg)
}

/// Builds the terrain described by the config.
pub fn build_terrain(cfg: &ScenarioConfig) -> Terrain {
    Terrain {
        stairs: cfg.terrain.stairs.then(|| cfg.terrain.stair.clone()),
        heightfield: cfg.terrain.heightfield.then(|| Heightfield::new(HeightfieldSpec { seed: cfg.seed, ..cfg.terrain.rocks.clone() })),
    }
}

/// Load the arm is designed to hold statically, arm frame.
fn design_load(cfg: &ScenarioConfig) -> Vector3<f64> {
    match cfg.coupling.kind {
        CouplingKind::None => Vector3::zeros(),
        CouplingKind::RigidBar | CouplingKind::Rope => Vector3::new(0.0, 0.0, -0.5 * cfg.coupling.mass * GRAVITY),
    }
}

/// Support correction for the design load, so robots spawn with their feet
/// already placed for the payload they hold.
fn spawn_foot_offset(cfg: &ScenarioConfig, c: &ControllerConfig<f64>) -> Vector2<f64> {
    let frames = forward_kinematics(&c.arm, &cfg.design_pose);
    let mut hook = c.mount.to_base(&frames.ee_position());
    hook.z += c.body_height;
    let load = c.mount.rotation() * design_load(cfg);
    if !c.foothold_adjustment {
        return Vector2::zeros();
    }
    support_correction(&load, &hook, c.mpc.mass).unwrap_or_else(|_| Vector2::zeros())
}

fn robot_config(cfg: &ScenarioConfig, role: Role) -> ControllerConfig<f64> {
    let mut c = cfg.controller.clone();
    c.role = role;
    if role == Role::Leader {
        c.mount = ArmMount::rear(cfg.controller.mount.position.x, cfg.controller.mount.position.z);
    }
    if cfg.arm_preload {
        c.arm.equilibrium = c.arm.equilibrium_for_load(&cfg.design_pose, &design_load(cfg), &level_gravity());
    }
    c
}

/// Assembles the world: the leader starts at the first waypoint and the
/// follower stands behind it so the hooks sit one coupling length apart.
pub fn build_world(cfg: &ScenarioConfig) -> Result<World, SimError> {
    cfg.validate().map_err(|e| SimError::Setup(e.to_string()))?;
    let terrain = build_terrain(cfg);
    let start = cfg.leader.waypoints[0];
    let heading = match cfg.leader.waypoints.get(1) {
        Some(p) if (p - start).norm() > 0.0 => (p - start).normalize(),
        _ => Vector2::x(),
    };
    let yaw = heading.y.atan2(heading.x);
    let follower_cfg = robot_config(cfg, Role::Follower);
    let hook_reach = {
        let frames = forward_kinematics(&follower_cfg.arm, &cfg.design_pose);
        follower_cfg.mount.to_base(&frames.ee_position()).x
    };
    let gap = match cfg.coupling.kind {
        CouplingKind::RigidBar => cfg.coupling.bar.length,
        CouplingKind::Rope => cfg.coupling.hook_separation,
        CouplingKind::None => 1.0,
    };
    let script = LeaderScript {
        waypoints: cfg.leader.waypoints.clone(),
        cruise: cfg.leader.cruise,
        accel: cfg.leader.accel,
        start_delay: cfg.leader.start_delay,
    };
    let (follower_xy, leader) = match cfg.leader.kind {
        LeaderKind::Robot => {
            let leader_xy = start;
            let follower_xy = start - heading * (gap + 2.0 * hook_reach);
            let leader_cfg = robot_config(cfg, Role::Leader);
            let offset = spawn_foot_offset(cfg, &leader_cfg);
            let robot = SimRobot::new(leader_cfg, leader_xy, yaw, cfg.design_pose, offset, &terrain)?;
            (follower_xy, Leader::Robot { robot: Box::new(robot), script, tracking: cfg.leader.tracking })
        }
        LeaderKind::Human => {
            let follower_xy = start - heading * (gap + hook_reach);
            let frames = forward_kinematics(&follower_cfg.arm, &cfg.design_pose);
            let hook_z = cfg.controller.body_height + follower_cfg.mount.to_base(&frames.ee_position()).z;
            let hand = Vector3::new(start.x, start.y, terrain.height(start.x, start.y) + hook_z);
            (
                follower_xy,
                Leader::Human(HumanHand {
                    script,
                    height: hook_z,
                    filter: LowPass::new(cfg.leader.hand_cutoff, hand),
                    position: hand,
                    velocity: Vector3::zeros(),
                    force: Vector3::zeros(),
                }),
            )
        }
    };
    let offset = spawn_foot_offset(cfg, &follower_cfg);
    let follower = SimRobot::new(follower_cfg, follower_xy, yaw, cfg.design_pose, offset, &terrain)?;
    let coupling = match cfg.coupling.kind {
        CouplingKind::None => Coupling::None,
        CouplingKind::RigidBar => Coupling::Bar { bar: cfg.coupling.bar, mass: cfg.coupling.mass },
        CouplingKind::Rope => Coupling::Rope { rope: cfg.coupling.rope, mass: cfg.coupling.mass },
    };
    let mut world = World {
        t: 0.0,
        dt: cfg.dt,
        terrain,
        follower,
        leader,
        coupling,
        payload: Payload { position: Vector3::zeros(), velocity: Vector3::zeros(), tensions: [0.0; 2] },
        ground: cfg.coupling.ground,
    };
    world.initialize_payload();
    Ok(world)
}
