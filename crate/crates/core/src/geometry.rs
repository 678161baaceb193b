//! Rotations and small dense helpers that stay generic over [`Real`].
//!
//! Euler angles are ZYX (yaw-pitch-roll) and stored as `(roll, pitch, yaw)`.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::scalar::Real;

pub fn rot_x<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(o, z, z, z, c, -s, z, s, c)
}

pub fn rot_y<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, z, s, z, o, z, -s, z, c)
}

pub fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

/// Base-to-world rotation `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_zyx_to_matrix<T: Real>(euler: &Vector3<T>) -> Matrix3<T> {
    rot_z(euler.z) * rot_y(euler.y) * rot_x(euler.x)
}

/// Recovers `(roll, pitch, yaw)` from a rotation matrix.
pub fn matrix_to_euler_zyx<T: Real>(r: &Matrix3<T>) -> Vector3<T> {
    let pitch = (-r[(2, 0)]).max(-T::one()).min(T::one()).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Vector3::new(roll, pitch, yaw)
}

/// Maps the base-frame angular velocity to ZYX Euler-angle rates.
///
/// Returns `None` when `cos(pitch)` vanishes (gimbal lock).
pub fn euler_rate_matrix<T: Real>(euler: &Vector3<T>) -> Option<Matrix3<T>> {
    let (sr, cr) = euler.x.sin_cos();
    let (sp, cp) = euler.y.sin_cos();
    if cp.abs() < T::lit(1e-6) {
        return None;
    }
    let tp = sp / cp;
    let (o, z) = (T::one(), T::zero());
    Some(Matrix3::new(
        o,
        sr * tp,
        cr * tp,
        z,
        cr,
        -sr,
        z,
        sr / cp,
        cr / cp,
    ))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = a % two_pi;
    if w <= -T::PI() {
        w += two_pi;
    } else if w > T::PI() {
        w -= two_pi;
    }
    w
}

pub fn norm3<T: Real>(v: &Vector3<T>) -> T {
    v.dot(v).sqrt()
}

pub fn norm2<T: Real>(v: &Vector2<T>) -> T {
    v.dot(v).sqrt()
}

pub fn det3<T: Real>(m: &Matrix3<T>) -> T {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Cofactor inverse; `None` when the determinant is exactly zero.
pub fn inverse3<T: Real>(m: &Matrix3<T>) -> Option<Matrix3<T>> {
    let det = det3(m);
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    let adj = Matrix3::new(
        c(1, 1, 2, 2),
        -c(0, 1, 2, 2),
        c(0, 1, 1, 2),
        -c(1, 0, 2, 2),
        c(0, 0, 2, 2),
        -c(0, 0, 1, 2),
        c(1, 0, 2, 1),
        -c(0, 0, 2, 1),
        c(0, 0, 1, 1),
    );
    Some(adj / det)
}

/// Solves `m x = b` for a symmetric positive definite 3×3 `m`.
pub fn solve3<T: Real>(m: &Matrix3<T>, b: &Vector3<T>) -> Option<Vector3<T>> {
    inverse3(m).map(|inv| inv * b)
}

pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Converts a 3-vector between scalar types through `f64`.
pub fn cast3<S: Real, T: Real>(v: &Vector3<S>) -> Vector3<T> {
    Vector3::new(T::lit(v.x.re()), T::lit(v.y.re()), T::lit(v.z.re()))
}

pub fn cast33<S: Real, T: Real>(m: &Matrix3<S>) -> Matrix3<T> {
    Matrix3::from_fn(|r, c| T::lit(m[(r, c)].re()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euler_roundtrip() {
        let e = Vector3::new(0.2, -0.4, 2.9);
        let back = matrix_to_euler_zyx(&euler_zyx_to_matrix(&e));
        assert_relative_eq!(back, e, epsilon = 1e-12);
    }

    #[test]
    fn euler_rates_integrate_the_rotation() {
        // R(Θ + W ω dt) ≈ R(Θ) exp([ω]× dt)
        let e = Vector3::new(0.3, 0.5, -1.0);
        let w = Vector3::new(0.7, -0.2, 0.4);
        let dt = 1e-6;
        let r0 = euler_zyx_to_matrix(&e);
        let r1 = euler_zyx_to_matrix(&(e + euler_rate_matrix(&e).unwrap() * w * dt));
        let body_rate = (r0.transpose() * (r1 - r0)) / dt;
        assert_relative_eq!(body_rate, skew(&w), epsilon = 1e-5);
    }

    #[test]
    fn gimbal_lock_detected() {
        assert!(euler_rate_matrix(&Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0)).is_none());
    }

    #[test]
    fn inverse_matches_identity() {
        let m = Matrix3::new(2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 3.0);
        assert_relative_eq!(inverse3(&m).unwrap() * m, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn wrap_keeps_half_open_interval() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.5), -0.5);
    }
}
