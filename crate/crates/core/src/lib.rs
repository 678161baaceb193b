//! Control stack for a quadruped carrying a payload through a passive
//! 3-DoF spring-damper arm.
//!
//! - [`arm`]: kinematics, passive dynamics and hook-force estimation.
//! - [`guidance`]: arm deflection → velocity and heading-rate commands.
//! - [`gait`]: crawl schedule, footholds, swing trajectories.
//! - [`mpc`]: single-rigid-body MPC with a hook-disturbance model.
//! - [`locomotion`]: the per-robot loop tying them together.
//!
//! Everything is generic over [`Real`]; the aliases below fix `f64`.

pub mod arm;
pub mod dual;
pub mod gait;
pub mod geometry;
pub mod guidance;
pub mod locomotion;
pub mod mpc;
pub mod scalar;

pub use scalar::Real;

pub type ArmParams = arm::ArmParams<f64>;
pub type ArmState = arm::ArmState<f64>;
pub type ArmMount = arm::ArmMount<f64>;
pub type GuidanceParams = guidance::GuidanceParams<f64>;
pub type Guidance = guidance::Guidance<f64>;
pub type GaitParams = gait::GaitParams<f64>;
pub type GaitSchedule = gait::GaitSchedule<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
pub type MpcSolver = mpc::MpcSolver<f64>;
pub type ControllerConfig = locomotion::ControllerConfig<f64>;
pub type LocomotionController = locomotion::LocomotionController<f64>;
pub type Measurement = locomotion::Measurement<f64>;
