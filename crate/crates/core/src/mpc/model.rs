use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};

use super::{InputVec, MpcConfig, MpcError, StateVec, IDX_DIST, IDX_EULER, IDX_FEET, IDX_FORCE, IDX_FOOT_VEL, IDX_OMEGA, IDX_POS, IDX_VEL, NU, NX};
use crate::dual::Dual;
use crate::gait::NUM_LEGS;
use crate::geometry::{euler_rate_matrix, euler_zyx_to_matrix, inverse3};
use crate::scalar::{gravity, Real};

/// Mass properties of the lumped body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrbdParams<T: Real> {
    pub mass: T,
    pub inertia: Matrix3<T>,
    pub inertia_inv: Matrix3<T>,
}

impl<T: Real> SrbdParams<T> {
    pub fn new(mass: T, inertia: Matrix3<T>) -> Result<Self, MpcError> {
        let inertia_inv = inverse3(&inertia).ok_or_else(|| MpcError::InvalidConfig("singular inertia".into()))?;
        Ok(Self { mass, inertia, inertia_inv })
    }

    pub fn from_config(cfg: &MpcConfig<T>) -> Result<Self, MpcError> {
        Self::new(cfg.mass, cfg.inertia())
    }

    fn lift(&self) -> SrbdParams<Dual<T>> {
        let c = |m: &Matrix3<T>| m.map(Dual::constant);
        SrbdParams { mass: Dual::constant(self.mass), inertia: c(&self.inertia), inertia_inv: c(&self.inertia_inv) }
    }
}

/// Spring-driven evolution of the hook wrench along the horizon.
///
/// The hook is assumed fixed at its measured world position while the base
/// moves, and the squared hook distance `‖Δ_er‖²` multiplying the yaw term is
/// held at its value at the start of the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceModel<T: Real> {
    /// Diagonal world-frame hook stiffness `k̄_s`.
    pub k_bar: Vector3<T>,
    pub reach_sq: T,
}

impl<T: Real> Default for DisturbanceModel<T> {
    fn default() -> Self {
        Self { k_bar: Vector3::zeros(), reach_sq: T::zero() }
    }
}

impl<T: Real> DisturbanceModel<T> {
    pub fn new(k_bar: Vector3<T>, p_ee_hat: &Vector3<T>, r0: &Vector3<T>) -> Self {
        let delta = p_ee_hat - r0;
        Self { k_bar, reach_sq: delta.dot(&delta) }
    }

    /// `ḋ` for CoM velocity `r_dot` and base yaw rate.
    pub fn derivative(&self, r_dot: &Vector3<T>, yaw_rate: T) -> Vector6<T> {
        let z = T::zero();
        Vector6::new(
            -self.k_bar.x * r_dot.x,
            -self.k_bar.y * r_dot.y,
            z,
            z,
            z,
            -self.reach_sq * self.k_bar.y * yaw_rate,
        )
    }

    fn lift(&self) -> DisturbanceModel<Dual<T>> {
        DisturbanceModel { k_bar: self.k_bar.map(Dual::constant), reach_sq: Dual::constant(self.reach_sq) }
    }
}

/// Closed-form disturbance at a horizon point: initial wrench plus the spring
/// response to the change of the hook offset and of the base yaw.
pub fn horizon_disturbance<T: Real>(
    d0: &Vector6<T>,
    k_bar: &Vector3<T>,
    delta_er: &Vector3<T>,
    delta_er0: &Vector3<T>,
    reach_sq: T,
    psi: T,
    psi0: T,
) -> Vector6<T> {
    let mut d = *d0;
    d[0] += k_bar.x * (delta_er.x - delta_er0.x);
    d[1] += k_bar.y * (delta_er.y - delta_er0.y);
    d[5] -= reach_sq * k_bar.y * (psi - psi0);
    d
}

/// Rigid-body part of the model; the disturbance rows are left at zero.
///
/// Feet are stored in the world frame, so moments are formed with the lever
/// `p_i − r` and rotated into the base frame together with the hook torque.
pub fn srbd_derivative<T: Real>(
    x: &StateVec<T>,
    u: &InputVec<T>,
    contacts: &[bool; NUM_LEGS],
    params: &SrbdParams<T>,
) -> Result<StateVec<T>, MpcError> {
    let euler: Vector3<T> = x.fixed_rows::<3>(IDX_EULER).into();
    let r: Vector3<T> = x.fixed_rows::<3>(IDX_POS).into();
    let omega: Vector3<T> = x.fixed_rows::<3>(IDX_OMEGA).into();
    let v: Vector3<T> = x.fixed_rows::<3>(IDX_VEL).into();
    let d_lin: Vector3<T> = x.fixed_rows::<3>(IDX_DIST).into();
    let d_ang: Vector3<T> = x.fixed_rows::<3>(IDX_DIST + 3).into();

    let w = euler_rate_matrix(&euler).ok_or(MpcError::GimbalLock { pitch: euler.y.re() })?;
    let rot = euler_zyx_to_matrix(&euler);

    let mut force = d_lin;
    let mut moment = d_ang;
    let mut dx = StateVec::zeros();
    for leg in 0..NUM_LEGS {
        let p: Vector3<T> = x.fixed_rows::<3>(IDX_FEET + 3 * leg).into();
        if contacts[leg] {
            let f: Vector3<T> = u.fixed_rows::<3>(IDX_FORCE + 3 * leg).into();
            force += f;
            moment += (p - r).cross(&f);
        } else {
            let pv: Vector3<T> = u.fixed_rows::<3>(IDX_FOOT_VEL + 3 * leg).into();
            dx.fixed_rows_mut::<3>(IDX_FEET + 3 * leg).copy_from(&pv);
        }
    }
    let mut acc = force / params.mass;
    acc.z -= gravity::<T>();
    let gyro = omega.cross(&(params.inertia * omega));
    let omega_dot = params.inertia_inv * (rot.transpose() * moment - gyro);

    dx.fixed_rows_mut::<3>(IDX_EULER).copy_from(&(w * omega));
    dx.fixed_rows_mut::<3>(IDX_POS).copy_from(&v);
    dx.fixed_rows_mut::<3>(IDX_OMEGA).copy_from(&omega_dot);
    dx.fixed_rows_mut::<3>(IDX_VEL).copy_from(&acc);
    Ok(dx)
}

/// Full prediction model including the disturbance dynamics.
pub fn model_derivative<T: Real>(
    x: &StateVec<T>,
    u: &InputVec<T>,
    contacts: &[bool; NUM_LEGS],
    params: &SrbdParams<T>,
    dist: &DisturbanceModel<T>,
) -> Result<StateVec<T>, MpcError> {
    let mut dx = srbd_derivative(x, u, contacts, params)?;
    let yaw_rate = dx[IDX_EULER + 2];
    let v: Vector3<T> = x.fixed_rows::<3>(IDX_VEL).into();
    dx.fixed_rows_mut::<6>(IDX_DIST).copy_from(&dist.derivative(&v, yaw_rate));
    Ok(dx)
}

/// Explicit Euler step of the prediction model.
pub fn discrete_step<T: Real>(
    x: &StateVec<T>,
    u: &InputVec<T>,
    contacts: &[bool; NUM_LEGS],
    params: &SrbdParams<T>,
    dist: &DisturbanceModel<T>,
    dt: T,
) -> Result<StateVec<T>, MpcError> {
    Ok(x + model_derivative(x, u, contacts, params, dist)? * dt)
}

/// Discrete model value and its exact Jacobians at one point.
#[derive(Debug, Clone)]
pub struct Linearization<T: Real> {
    pub next: StateVec<T>,
    pub a: SMatrix<T, NX, NX>,
    pub b: SMatrix<T, NX, NU>,
}

pub fn linearize<T: Real>(
    x: &StateVec<T>,
    u: &InputVec<T>,
    contacts: &[bool; NUM_LEGS],
    params: &SrbdParams<T>,
    dist: &DisturbanceModel<T>,
    dt: T,
) -> Result<Linearization<T>, MpcError> {
    let pd = params.lift();
    let dd = dist.lift();
    let dtd = Dual::constant(dt);
    let xd0: StateVec<Dual<T>> = x.map(Dual::constant);
    let ud0: InputVec<Dual<T>> = u.map(Dual::constant);
    let next = discrete_step(x, u, contacts, params, dist, dt)?;

    let mut a = SMatrix::<T, NX, NX>::zeros();
    for j in 0..NX {
        let mut xd = xd0;
        xd[j].d = T::one();
        let col = discrete_step(&xd, &ud0, contacts, &pd, &dd, dtd)?;
        for i in 0..NX {
            a[(i, j)] = col[i].d;
        }
    }
    let mut b = SMatrix::<T, NX, NU>::zeros();
    for j in 0..NU {
        let mut ud = ud0;
        ud[j].d = T::one();
        let col = discrete_step(&xd0, &ud, contacts, &pd, &dd, dtd)?;
        for i in 0..NX {
            b[(i, j)] = col[i].d;
        }
    }
    Ok(Linearization { next, a, b })
}
