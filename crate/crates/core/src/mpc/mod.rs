//! Receding-horizon locomotion controller over a single-rigid-body model
//! augmented with the hook disturbance.
//!
//! State layout (30): Euler angles, CoM position, base angular velocity,
//! CoM velocity, four world-frame foot positions, 6-D disturbance wrench.
//! Input layout (24): four ground reaction forces, four foot velocities.

mod config;
mod friction;
mod model;
mod polygon;
pub mod qp;
mod reference;
mod solver;
mod zmp;

pub use config::{box_inertia, MpcConfig};
pub use friction::{friction_feasible, friction_residuals};
pub use model::{
    discrete_step, horizon_disturbance, linearize, model_derivative, srbd_derivative, DisturbanceModel, Linearization,
    SrbdParams,
};
pub use polygon::{HalfPlane, SupportPolygon};
pub use reference::{build_reference, ReferenceCommand};
pub use solver::{MpcProblem, MpcSolution, MpcSolver, SolveStatus};
pub use zmp::{zmp, zmp_from_state};

use nalgebra::{SVector, Vector3, Vector6};
use thiserror::Error;

use crate::gait::NUM_LEGS;
use crate::scalar::Real;

pub const NX: usize = 30;
pub const NU: usize = 24;

pub const IDX_EULER: usize = 0;
pub const IDX_POS: usize = 3;
pub const IDX_OMEGA: usize = 6;
pub const IDX_VEL: usize = 9;
pub const IDX_FEET: usize = 12;
pub const IDX_DIST: usize = 24;
pub const IDX_FORCE: usize = 0;
pub const IDX_FOOT_VEL: usize = 12;

pub type StateVec<T> = SVector<T, NX>;
pub type InputVec<T> = SVector<T, NU>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("Euler-rate map is singular at pitch {pitch:.4} rad")]
    GimbalLock { pitch: f64 },
    #[error("vertical support m·g − d_z = {support:.4} N is not positive")]
    DegenerateLoad { support: f64 },
    #[error("stance feet are collinear; no support polygon")]
    DegeneratePolygon,
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Structured view of the 30-D state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState<T: Real> {
    pub euler: Vector3<T>,
    pub position: Vector3<T>,
    pub omega: Vector3<T>,
    pub velocity: Vector3<T>,
    pub feet: [Vector3<T>; NUM_LEGS],
    pub disturbance: Vector6<T>,
}

impl<T: Real> Default for RobotState<T> {
    fn default() -> Self {
        Self {
            euler: Vector3::zeros(),
            position: Vector3::zeros(),
            omega: Vector3::zeros(),
            velocity: Vector3::zeros(),
            feet: [Vector3::zeros(); NUM_LEGS],
            disturbance: Vector6::zeros(),
        }
    }
}

impl<T: Real> RobotState<T> {
    pub fn to_vector(&self) -> StateVec<T> {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<3>(IDX_EULER).copy_from(&self.euler);
        x.fixed_rows_mut::<3>(IDX_POS).copy_from(&self.position);
        x.fixed_rows_mut::<3>(IDX_OMEGA).copy_from(&self.omega);
        x.fixed_rows_mut::<3>(IDX_VEL).copy_from(&self.velocity);
        for (i, p) in self.feet.iter().enumerate() {
            x.fixed_rows_mut::<3>(IDX_FEET + 3 * i).copy_from(p);
        }
        x.fixed_rows_mut::<6>(IDX_DIST).copy_from(&self.disturbance);
        x
    }

    pub fn from_vector(x: &StateVec<T>) -> Self {
        Self {
            euler: x.fixed_rows::<3>(IDX_EULER).into(),
            position: x.fixed_rows::<3>(IDX_POS).into(),
            omega: x.fixed_rows::<3>(IDX_OMEGA).into(),
            velocity: x.fixed_rows::<3>(IDX_VEL).into(),
            feet: std::array::from_fn(|i| x.fixed_rows::<3>(IDX_FEET + 3 * i).into()),
            disturbance: x.fixed_rows::<6>(IDX_DIST).into(),
        }
    }
}

/// Structured view of the 24-D input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput<T: Real> {
    pub forces: [Vector3<T>; NUM_LEGS],
    pub foot_velocities: [Vector3<T>; NUM_LEGS],
}

impl<T: Real> Default for ControlInput<T> {
    fn default() -> Self {
        Self { forces: [Vector3::zeros(); NUM_LEGS], foot_velocities: [Vector3::zeros(); NUM_LEGS] }
    }
}

impl<T: Real> ControlInput<T> {
    pub fn to_vector(&self) -> InputVec<T> {
        let mut u = InputVec::zeros();
        for i in 0..NUM_LEGS {
            u.fixed_rows_mut::<3>(IDX_FORCE + 3 * i).copy_from(&self.forces[i]);
            u.fixed_rows_mut::<3>(IDX_FOOT_VEL + 3 * i).copy_from(&self.foot_velocities[i]);
        }
        u
    }

    pub fn from_vector(u: &InputVec<T>) -> Self {
        Self {
            forces: std::array::from_fn(|i| u.fixed_rows::<3>(IDX_FORCE + 3 * i).into()),
            foot_velocities: std::array::from_fn(|i| u.fixed_rows::<3>(IDX_FOOT_VEL + 3 * i).into()),
        }
    }
}

/// Input indices that are free for a given contact configuration: forces of
/// stance legs and foot velocities of swinging legs.
pub fn active_inputs(contacts: &[bool; NUM_LEGS]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(12);
    for (leg, &c) in contacts.iter().enumerate() {
        let base = if c { IDX_FORCE } else { IDX_FOOT_VEL };
        idx.extend((0..3).map(|j| base + 3 * leg + j));
    }
    idx.sort_unstable();
    idx
}

/// Zeroes the inputs that are structurally gated off by `contacts`.
pub fn gate_input<T: Real>(u: &mut InputVec<T>, contacts: &[bool; NUM_LEGS]) {
    for (leg, &c) in contacts.iter().enumerate() {
        let off = if c { IDX_FOOT_VEL } else { IDX_FORCE };
        for j in 0..3 {
            u[off + 3 * leg + j] = T::zero();
        }
    }
}
