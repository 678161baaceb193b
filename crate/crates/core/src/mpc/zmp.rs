use nalgebra::{Vector2, Vector3};

use super::{InputVec, MpcError, SrbdParams, StateVec, IDX_DIST, IDX_FORCE, IDX_POS};
use crate::gait::NUM_LEGS;
use crate::scalar::{gravity, Real};

/// Zero-moment point including the hook wrench.
///
/// Heights (`r.z`, `p_ee.z`) are measured from the ground plane the ZMP is
/// taken on; `d_lin` is the force applied to the robot at `p_ee`.
pub fn zmp<T: Real>(
    r: &Vector3<T>,
    r_ddot: &Vector3<T>,
    p_ee: &Vector3<T>,
    d_lin: &Vector3<T>,
    mass: T,
) -> Result<Vector2<T>, MpcError> {
    let mg = mass * gravity::<T>();
    let support = mg - d_lin.z;
    if !(support > T::lit(1e-6)) {
        return Err(MpcError::DegenerateLoad { support: support.re() });
    }
    let x = (mg * r.x - r.z * mass * r_ddot.x - p_ee.x * d_lin.z + p_ee.z * d_lin.x) / support;
    let y = (mg * r.y - r.z * mass * r_ddot.y - p_ee.y * d_lin.z + p_ee.z * d_lin.y) / support;
    Ok(Vector2::new(x, y))
}

/// ZMP predicted by the model at a state/input pair. `ground_z` is the world
/// height of the plane the ZMP lives on.
pub fn zmp_from_state<T: Real>(
    x: &StateVec<T>,
    u: &InputVec<T>,
    contacts: &[bool; NUM_LEGS],
    params: &SrbdParams<T>,
    p_ee: &Vector3<T>,
    ground_z: T,
) -> Result<Vector2<T>, MpcError> {
    let mut r: Vector3<T> = x.fixed_rows::<3>(IDX_POS).into();
    let d_lin: Vector3<T> = x.fixed_rows::<3>(IDX_DIST).into();
    let mut force = d_lin;
    for leg in 0..NUM_LEGS {
        if contacts[leg] {
            force += Vector3::from(u.fixed_rows::<3>(IDX_FORCE + 3 * leg));
        }
    }
    let mut acc = force / params.mass;
    acc.z -= gravity::<T>();
    r.z -= ground_z;
    let mut hook = *p_ee;
    hook.z -= ground_z;
    zmp(&r, &acc, &hook, &d_lin, params.mass)
}
