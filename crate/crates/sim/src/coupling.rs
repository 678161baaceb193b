//! Payload couplings between the arm hooks.
//!
//! Forces returned here are the forces acting ON the named body.

use nalgebra::Vector3;

/// Unilateral spring-damper along a rope segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeParams {
    pub length: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for RopeParams {
    fn default() -> Self {
        Self { length: 0.3, stiffness: 2e3, damping: 10.0 }
    }
}

/// Force on the hook end of a rope running from `hook` to `payload`; the
/// payload receives the opposite force. Zero whenever the rope would push.
pub fn rope_force(
    hook: &Vector3<f64>,
    hook_vel: &Vector3<f64>,
    payload: &Vector3<f64>,
    payload_vel: &Vector3<f64>,
    rope: &RopeParams,
) -> Vector3<f64> {
    let d = payload - hook;
    let len = d.norm();
    if len <= rope.length || len < 1e-12 {
        return Vector3::zeros();
    }
    let u = d / len;
    let len_rate = u.dot(&(payload_vel - hook_vel));
    let tension = (rope.stiffness * (len - rope.length) + rope.damping * len_rate).max(0.0);
    u * tension
}

/// Bilateral axial spring-damper holding two hooks a bar length apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarParams {
    pub length: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for BarParams {
    fn default() -> Self {
        Self { length: 1.0, stiffness: 1e4, damping: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarForces {
    pub on_a: Vector3<f64>,
    pub on_b: Vector3<f64>,
    /// Payload position (bar midpoint) and velocity.
    pub payload: Vector3<f64>,
    pub payload_vel: Vector3<f64>,
}

/// Axial bar forces for hooks `a` and `b`. The payload is lumped at the bar
/// midpoint; its weight and inertia are carried by the hooks as half the
/// payload mass each (see [`payload_share`]).
pub fn rigid_bar_force(
    a: &Vector3<f64>,
    a_vel: &Vector3<f64>,
    b: &Vector3<f64>,
    b_vel: &Vector3<f64>,
    bar: &BarParams,
) -> BarForces {
    let d = b - a;
    let len = d.norm();
    let (on_a, on_b) = if len < 1e-12 {
        (Vector3::zeros(), Vector3::zeros())
    } else {
        let u = d / len;
        let rate = u.dot(&(b_vel - a_vel));
        let tension = bar.stiffness * (len - bar.length) + bar.damping * rate;
        (u * tension, -u * tension)
    };
    BarForces { on_a, on_b, payload: (a + b) * 0.5, payload_vel: (a_vel + b_vel) * 0.5 }
}

/// Force a hook feels from carrying `mass` while accelerating at `acc`.
pub fn payload_share(mass: f64, acc: &Vector3<f64>, gravity: &Vector3<f64>) -> Vector3<f64> {
    (gravity - acc) * mass
}
