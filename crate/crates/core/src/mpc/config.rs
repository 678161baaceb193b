use nalgebra::{Matrix3, Vector3};

use super::{InputVec, MpcError, StateVec, IDX_DIST, IDX_EULER, IDX_FEET, IDX_FORCE, IDX_FOOT_VEL, IDX_OMEGA, IDX_POS, IDX_VEL};
use crate::scalar::Real;

/// Inertia of a solid box about its centre.
pub fn box_inertia<T: Real>(mass: T, dims: &Vector3<T>) -> Matrix3<T> {
    let k = mass / T::lit(12.0);
    let (x2, y2, z2) = (dims.x * dims.x, dims.y * dims.y, dims.z * dims.z);
    Matrix3::from_diagonal(&Vector3::new(k * (y2 + z2), k * (x2 + z2), k * (x2 + y2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig<T: Real> {
    /// Prediction steps `n_y`.
    pub horizon: usize,
    /// Discretization step, s.
    pub dt: T,
    pub mass: T,
    /// Box dimensions used for the inertia estimate, m.
    pub body_dims: Vector3<T>,
    pub mu: T,
    pub f_max: T,
    /// Inset of every support-polygon edge, m.
    pub zmp_margin: T,
    pub w_orientation: T,
    pub w_position_xy: T,
    pub w_position_z: T,
    pub w_angular_velocity: T,
    pub w_linear_velocity: T,
    pub w_feet: T,
    pub w_disturbance: T,
    pub r_force: T,
    pub r_foot_velocity: T,
    /// Quadratic slack penalty.
    pub rho: T,
    /// Linearize-and-solve passes per call; 1 is a real-time iteration.
    pub sqp_iterations: usize,
    pub qp_max_iterations: usize,
    pub qp_tolerance: T,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        let l = |v: f64| T::lit(v);
        Self {
            horizon: 15,
            dt: l(0.04),
            mass: l(21.0),
            body_dims: Vector3::new(l(0.65), l(0.3), l(0.2)),
            mu: l(0.6),
            f_max: l(250.0),
            zmp_margin: l(0.04),
            w_orientation: l(1500.0),
            w_position_xy: l(2000.0),
            w_position_z: l(3000.0),
            w_angular_velocity: l(50.0),
            w_linear_velocity: l(200.0),
            w_feet: l(100.0),
            w_disturbance: l(0.0),
            r_force: l(1e-3),
            r_foot_velocity: l(1e-2),
            rho: l(1e4),
            sqp_iterations: 1,
            qp_max_iterations: 60,
            qp_tolerance: l(1e-9),
        }
    }
}

impl<T: Real> MpcConfig<T> {
    pub fn inertia(&self) -> Matrix3<T> {
        box_inertia(self.mass, &self.body_dims)
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if !(self.dt > T::zero()) || !(self.mass > T::zero()) {
            return bad("dt and mass must be positive");
        }
        if self.body_dims.iter().any(|d| !(*d > T::zero())) {
            return bad("body dimensions must be positive");
        }
        if !(self.mu > T::zero()) || !(self.f_max > T::zero()) {
            return bad("mu and f_max must be positive");
        }
        if !(self.zmp_margin >= T::zero()) {
            return bad("zmp_margin must be non-negative");
        }
        let weights = [
            self.w_orientation,
            self.w_position_xy,
            self.w_position_z,
            self.w_angular_velocity,
            self.w_linear_velocity,
            self.w_feet,
            self.w_disturbance,
        ];
        if weights.iter().any(|w| !(*w >= T::zero())) {
            return bad("state weights must be non-negative");
        }
        if !(self.r_force > T::zero()) || !(self.r_foot_velocity > T::zero()) || !(self.rho > T::zero()) {
            return bad("input weights and rho must be positive");
        }
        if self.sqp_iterations == 0 || self.qp_max_iterations == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }

    /// Diagonal of `Q_x`.
    pub fn state_weights(&self) -> StateVec<T> {
        let mut q = StateVec::zeros();
        for i in 0..3 {
            q[IDX_EULER + i] = self.w_orientation;
            q[IDX_OMEGA + i] = self.w_angular_velocity;
            q[IDX_VEL + i] = self.w_linear_velocity;
        }
        q[IDX_POS] = self.w_position_xy;
        q[IDX_POS + 1] = self.w_position_xy;
        q[IDX_POS + 2] = self.w_position_z;
        for i in 0..12 {
            q[IDX_FEET + i] = self.w_feet;
        }
        for i in 0..6 {
            q[IDX_DIST + i] = self.w_disturbance;
        }
        q
    }

    /// Diagonal of `R_u`.
    pub fn input_weights(&self) -> InputVec<T> {
        let mut r = InputVec::zeros();
        for i in 0..12 {
            r[IDX_FORCE + i] = self.r_force;
            r[IDX_FOOT_VEL + i] = self.r_foot_velocity;
        }
        r
    }
}
