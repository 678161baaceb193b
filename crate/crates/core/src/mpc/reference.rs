use nalgebra::Vector3;

use super::{StateVec, IDX_EULER, IDX_OMEGA, IDX_POS, IDX_VEL};
use crate::scalar::Real;

/// Commanded motion for one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCommand<T> {
    /// Forward speed along the current heading, m/s.
    pub v_forward: T,
    pub yaw_rate: T,
    /// CoM height above the terrain plane, m.
    pub height: T,
    /// Terrain plane `z = a x + b y + c` as `(a, b, c)`.
    pub plane: (T, T, T),
}

/// Reference states for steps `0..=n`: the commanded velocity and yaw rate
/// integrated from the current pose, CoM kept `height` above the terrain
/// plane and the base aligned with the plane's inclination. Feet and
/// disturbance entries are copied from `x0`.
pub fn build_reference<T: Real>(cmd: &ReferenceCommand<T>, x0: &StateVec<T>, n: usize, dt: T) -> Vec<StateVec<T>> {
    let (a, b, c) = cmd.plane;
    let mut out = Vec::with_capacity(n + 1);
    let mut pos = Vector3::new(x0[IDX_POS], x0[IDX_POS + 1], T::zero());
    let mut yaw = x0[IDX_EULER + 2];
    for k in 0..=n {
        if k > 0 {
            let (s, co) = yaw.sin_cos();
            pos.x += dt * cmd.v_forward * co;
            pos.y += dt * cmd.v_forward * s;
            yaw += dt * cmd.yaw_rate;
        }
        let (s, co) = yaw.sin_cos();
        let slope_forward = a * co + b * s;
        let slope_left = -a * s + b * co;
        let mut x = *x0;
        x[IDX_EULER] = slope_left.atan();
        x[IDX_EULER + 1] = -slope_forward.atan();
        x[IDX_EULER + 2] = yaw;
        x[IDX_POS] = pos.x;
        x[IDX_POS + 1] = pos.y;
        x[IDX_POS + 2] = a * pos.x + b * pos.y + c + cmd.height;
        x[IDX_OMEGA] = T::zero();
        x[IDX_OMEGA + 1] = T::zero();
        x[IDX_OMEGA + 2] = cmd.yaw_rate;
        x[IDX_VEL] = cmd.v_forward * co;
        x[IDX_VEL + 1] = cmd.v_forward * s;
        x[IDX_VEL + 2] = cmd.v_forward * slope_forward;
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn start() -> StateVec<f64> {
        let mut x = StateVec::zeros();
        x[IDX_POS] = 1.0;
        x[IDX_POS + 1] = -0.5;
        x[IDX_POS + 2] = 0.35;
        x
    }

    fn cmd(v: f64, w: f64) -> ReferenceCommand<f64> {
        ReferenceCommand { v_forward: v, yaw_rate: w, height: 0.35, plane: (0.0, 0.0, 0.0) }
    }

    #[test]
    fn zero_command_holds_pose() {
        let r = build_reference(&cmd(0.0, 0.0), &start(), 15, 0.04);
        assert_eq!(r.len(), 16);
        for x in &r {
            assert_eq!(*x, start());
        }
    }

    #[test]
    fn forward_command_advances() {
        let r = build_reference(&cmd(0.1, 0.0), &start(), 15, 0.04);
        assert_relative_eq!(r[15][IDX_POS] - 1.0, 0.06, epsilon = 1e-12);
        assert_relative_eq!(r[15][IDX_POS + 1], -0.5);
    }

    #[test]
    fn yaw_command_turns_in_place() {
        let r = build_reference(&cmd(0.0, 0.3), &start(), 15, 0.04);
        assert_relative_eq!(r[15][IDX_EULER + 2], 0.18, epsilon = 1e-12);
        assert_relative_eq!(r[15][IDX_POS], 1.0);
    }

    #[test]
    fn slope_sets_pitch_and_height() {
        let mut c = cmd(0.0, 0.0);
        c.plane = (0.1, 0.0, 0.05);
        let r = build_reference(&c, &start(), 2, 0.04);
        assert_relative_eq!(r[0][IDX_POS + 2], 0.1 + 0.05 + 0.35, epsilon = 1e-12);
        assert_relative_eq!(r[0][IDX_EULER + 1], -(0.1f64).atan(), epsilon = 1e-12);
    }
}
