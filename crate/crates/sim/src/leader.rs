//! Scripted leader behaviour: a trapezoidal speed profile along a polyline of
//! waypoints, tracked either by a robot (velocity commands) or by a human
//! hand holding the hook (position, low-pass filtered).

use nalgebra::{Vector2, Vector3};

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderScript {
    pub waypoints: Vec<Vector2<f64>>,
    /// Cruise speed, m/s.
    pub cruise: f64,
    /// Acceleration and deceleration, m/s².
    pub accel: f64,
    /// Time before the profile starts, s.
    pub start_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptSample {
    pub position: Vector2<f64>,
    /// Unit direction of travel.
    pub heading: Vector2<f64>,
    pub speed: f64,
    /// Arc length travelled.
    pub s: f64,
}

impl LeaderScript {
    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Peak speed and durations of the ramp and cruise phases.
    fn profile(&self) -> (f64, f64, f64) {
        let len = self.path_length();
        if len <= 0.0 || self.cruise <= 0.0 || self.accel <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let ramp_len = self.cruise * self.cruise / self.accel;
        if ramp_len >= len {
            let peak = (len * self.accel).sqrt();
            (peak, peak / self.accel, 0.0)
        } else {
            (self.cruise, self.cruise / self.accel, (len - ramp_len) / self.cruise)
        }
    }

    /// Time at which the end of the path is reached.
    pub fn arrival_time(&self) -> f64 {
        let (_, ramp, cruise) = self.profile();
        self.start_delay + 2.0 * ramp + cruise
    }

    fn arc_length(&self, t: f64) -> (f64, f64) {
        let (peak, ramp, cruise) = self.profile();
        let t = t - self.start_delay;
        let a = self.accel;
        if t <= 0.0 || peak == 0.0 {
            (0.0, 0.0)
        } else if t < ramp {
            (0.5 * a * t * t, a * t)
        } else if t < ramp + cruise {
            (0.5 * peak * ramp + peak * (t - ramp), peak)
        } else if t < 2.0 * ramp + cruise {
            let td = 2.0 * ramp + cruise - t;
            (self.path_length() - 0.5 * a * td * td, a * td)
        } else {
            (self.path_length(), 0.0)
        }
    }

    /// Point and tangent at arc length `s`, clamped to the path.
    pub fn point_at(&self, s: f64) -> (Vector2<f64>, Vector2<f64>) {
        let first = self.waypoints.first().copied().unwrap_or_else(Vector2::zeros);
        let mut heading = Vector2::x();
        let mut rest = s.max(0.0);
        for w in self.waypoints.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            heading = seg / len;
            if rest <= len {
                return (w[0] + heading * rest, heading);
            }
            rest -= len;
        }
        (self.waypoints.last().copied().unwrap_or(first), heading)
    }

    pub fn sample(&self, t: f64) -> ScriptSample {
        let (s, speed) = self.arc_length(t);
        let (position, heading) = self.point_at(s);
        ScriptSample { position, heading, speed, s }
    }

    /// Arc length of the closest path point to `p`, with the signed lateral
    /// offset (positive to the left of the path).
    pub fn project(&self, p: &Vector2<f64>) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            let u = seg / len;
            let along = (p - w[0]).dot(&u).clamp(0.0, len);
            let closest = w[0] + u * along;
            let d = (p - closest).norm();
            if d < best.0 {
                let lateral = u.perp(&(p - w[0]));
                best = (d, acc + along, lateral);
            }
            acc += len;
        }
        if best.0.is_infinite() {
            return (0.0, 0.0);
        }
        (best.1, best.2)
    }
}

/// Gains turning the script into robot commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderTracking {
    pub k_along: f64,
    pub k_heading: f64,
    pub k_lateral: f64,
    pub v_max: f64,
    pub yaw_rate_max: f64,
}

impl Default for LeaderTracking {
    fn default() -> Self {
        Self { k_along: 0.5, k_heading: 1.0, k_lateral: 1.0, v_max: 0.2, yaw_rate_max: 0.4 }
    }
}

/// Forward speed and yaw rate for a robot leader at `position` with `yaw`.
pub fn leader_command(script: &LeaderScript, gains: &LeaderTracking, t: f64, position: &Vector2<f64>, yaw: f64) -> (f64, f64) {
    let target = script.sample(t);
    let (s, lateral) = script.project(position);
    let v = (target.speed + gains.k_along * (target.s - s)).clamp(0.0, gains.v_max);
    let (_, tangent) = script.point_at(s);
    let desired = tangent.y.atan2(tangent.x) - (gains.k_lateral * lateral).atan();
    let err = pacc_core::geometry::wrap_angle(desired - yaw);
    let w = (gains.k_heading * err).clamp(-gains.yaw_rate_max, gains.yaw_rate_max);
    (v, w)
}

/// First-order low-pass discretized exactly for a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    pub cutoff_hz: f64,
    pub state: Vector3<f64>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, initial: Vector3<f64>) -> Self {
        Self { cutoff_hz, state: initial }
    }

    pub fn step(&mut self, input: &Vector3<f64>, dt: f64) -> Vector3<f64> {
        let alpha = 1.0 - (-2.0 * std::f64::consts::PI * self.cutoff_hz * dt).exp();
        self.state += (input - self.state) * alpha;
        self.state
    }

    /// Magnitude response at `freq_hz` for sampling step `dt`.
    pub fn gain(&self, freq_hz: f64, dt: f64) -> f64 {
        let a = (-2.0 * std::f64::consts::PI * self.cutoff_hz * dt).exp();
        let w = 2.0 * std::f64::consts::PI * freq_hz * dt;
        // H(z) = (1 - a) / (1 - a z⁻¹)
        let den = ((1.0 - a * w.cos()).powi(2) + (a * w.sin()).powi(2)).sqrt();
        (1.0 - a) / den
    }
}
