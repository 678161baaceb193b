//! Follower guidance: arm joint displacements → forward velocity and heading
//! rate commands.
//!
//! The link-3 pendulum angle selects one of five forward-velocity levels and
//! the joint-1 yaw angle one of five heading-rate levels. The discrete levels
//! are smoothed by a second-order low-pass filter discretized exactly
//! (zero-order hold), which keeps the DC gain at one and, for ζ ≥ 1, never
//! overshoots.

use nalgebra::{Matrix3, Vector2};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceParams<T> {
    /// Pitch zone edges, rad.
    pub theta1: T,
    pub theta2: T,
    /// Yaw zone edges, rad.
    pub psi1: T,
    pub psi2: T,
    /// Forward velocity levels, m/s.
    pub v1: T,
    pub v2: T,
    /// Heading rate levels, rad/s.
    pub psidot1: T,
    pub psidot2: T,
    /// Neutral pitch angle (non-zero for rope couplings), rad.
    pub theta_bias: T,
    /// Filter natural frequency, rad/s.
    pub filter_omega: T,
    pub filter_zeta: T,
    /// Hysteresis band applied at every zone edge, rad.
    pub hysteresis: T,
}

impl<T: Real> Default for GuidanceParams<T> {
    fn default() -> Self {
        let deg = |d: f64| T::lit(d.to_radians());
        Self {
            theta1: deg(10.0),
            theta2: deg(25.0),
            psi1: deg(10.0),
            psi2: deg(20.0),
            v1: T::lit(0.1),
            v2: T::lit(0.2),
            psidot1: T::lit(0.3),
            psidot2: T::lit(0.4),
            theta_bias: T::zero(),
            filter_omega: T::lit(6.0),
            filter_zeta: T::one(),
            hysteresis: deg(1.0),
        }
    }
}

impl<T: Real> GuidanceParams<T> {
    /// Rope-coupling variant with both pitch edges shifted by `bias`.
    pub fn with_bias(mut self, bias: T) -> Self {
        self.theta_bias = bias;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let z = T::zero();
        let ordered = |a: T, b: T, name: &str| {
            if z < a && a < b {
                Ok(())
            } else {
                Err(format!("{name}: expected 0 < first level < second level"))
            }
        };
        ordered(self.theta1, self.theta2, "theta")?;
        ordered(self.psi1, self.psi2, "psi")?;
        ordered(self.v1, self.v2, "velocity")?;
        ordered(self.psidot1, self.psidot2, "heading rate")?;
        if !(self.filter_omega > z && self.filter_zeta > z) {
            return Err("filter parameters must be positive".into());
        }
        if !(self.hysteresis >= z) {
            return Err("hysteresis must be non-negative".into());
        }
        Ok(())
    }
}

/// Signed zone index in `-2..=2`: `0` inside `|x| < edge1`, `±1` up to
/// `edge2`, `±2` beyond.
pub fn zone_level<T: Real>(x: T, edge1: T, edge2: T) -> i8 {
    let a = x.abs();
    let mag = if a < edge1 {
        0
    } else if a < edge2 {
        1
    } else {
        2
    };
    if x < T::zero() {
        -mag
    } else {
        mag
    }
}

fn level_value<T: Real>(level: i8, l1: T, l2: T) -> T {
    match level {
        0 => T::zero(),
        1 => l1,
        -1 => -l1,
        2 => l2,
        _ => -l2,
    }
}

/// Raw forward velocity for the pitch angle `theta` (link 3 vs. gravity).
pub fn pitch_to_forward<T: Real>(theta: T, params: &GuidanceParams<T>) -> T {
    let level = zone_level(theta - params.theta_bias, params.theta1, params.theta2);
    level_value(level, params.v1, params.v2)
}

/// Raw heading rate for the joint-1 angle `psi`; positive (arm deflected to
/// the left) turns counter-clockwise.
pub fn yaw_to_heading<T: Real>(psi: T, params: &GuidanceParams<T>) -> T {
    let level = zone_level(psi, params.psi1, params.psi2);
    level_value(level, params.psidot1, params.psidot2)
}

/// Zone selector with a hysteresis band around every edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZoneQuantizer {
    level: i8,
}

impl ZoneQuantizer {
    pub fn level(&self) -> i8 {
        self.level
    }

    pub fn update<T: Real>(&mut self, x: T, edge1: T, edge2: T, band: T) -> i8 {
        let candidate = zone_level(x, edge1, edge2);
        if candidate > self.level {
            let shifted = zone_level(x - band, edge1, edge2);
            if shifted > self.level {
                self.level = shifted;
            }
        } else if candidate < self.level {
            let shifted = zone_level(x + band, edge1, edge2);
            if shifted < self.level {
                self.level = shifted;
            }
        }
        self.level
    }
}

/// Exactly discretized second-order low-pass `ÿ = ω²(u - y) - 2ζω ẏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderFilter<T> {
    pub omega: T,
    pub zeta: T,
    /// `(y, ẏ)`.
    pub state: Vector2<T>,
    cached: Option<(T, Matrix3<T>)>,
}

impl<T: Real> SecondOrderFilter<T> {
    pub fn new(omega: T, zeta: T) -> Self {
        Self { omega, zeta, state: Vector2::zeros(), cached: None }
    }

    pub fn output(&self) -> T {
        self.state.x
    }

    pub fn reset(&mut self, value: T) {
        self.state = Vector2::new(value, T::zero());
    }

    /// Advances by `dt` holding `input` constant; returns the new output.
    pub fn step(&mut self, input: T, dt: T) -> T {
        let phi = match &self.cached {
            Some((cached_dt, phi)) if *cached_dt == dt => *phi,
            _ => {
                let phi = self.transition(dt);
                self.cached = Some((dt, phi));
                phi
            }
        };
        // The held input is the fixed point, so propagate the offset from it.
        let e = self.state.x - input;
        let e_next = phi[(0, 0)] * e + phi[(0, 1)] * self.state.y;
        let yd = phi[(1, 0)] * e + phi[(1, 1)] * self.state.y;
        let y = input + e_next;
        self.state = Vector2::new(y, yd);
        y
    }

    /// `exp(A dt)` of the homogeneous dynamics, embedded in a 3×3 block.
    fn transition(&self, dt: T) -> Matrix3<T> {
        let w2 = self.omega * self.omega;
        let z = T::zero();
        let a = Matrix3::new(z, T::one(), z, -w2, -(T::lit(2.0)) * self.zeta * self.omega, z, z, z, z) * dt;
        expm3(&a)
    }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
fn expm3<T: Real>(a: &Matrix3<T>) -> Matrix3<T> {
    let norm = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut squarings = 0u32;
    let mut scale = T::one();
    while norm * scale > T::lit(0.1) {
        scale *= T::lit(0.5);
        squarings += 1;
    }
    let scaled = a * scale;
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=14 {
        term = term * scaled / T::lit(k as f64);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// One filter update, as a free function over an explicit filter state.
pub fn filter_step<T: Real>(filter: &mut SecondOrderFilter<T>, raw: T, dt: T) -> T {
    filter.step(raw, dt)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VelocityCommand<T> {
    pub v_forward_raw: T,
    pub v_forward_filtered: T,
    pub yaw_rate_raw: T,
    pub yaw_rate_filtered: T,
}

/// Per-robot guidance state: zone selection with hysteresis plus filters.
#[derive(Debug, Clone)]
pub struct Guidance<T> {
    pub params: GuidanceParams<T>,
    pitch_zone: ZoneQuantizer,
    yaw_zone: ZoneQuantizer,
    forward_filter: SecondOrderFilter<T>,
    yaw_filter: SecondOrderFilter<T>,
    last: VelocityCommand<T>,
}

impl<T: Real> Guidance<T> {
    pub fn new(params: GuidanceParams<T>) -> Self {
        let forward_filter = SecondOrderFilter::new(params.filter_omega, params.filter_zeta);
        let yaw_filter = SecondOrderFilter::new(params.filter_omega, params.filter_zeta);
        Self {
            params,
            pitch_zone: ZoneQuantizer::default(),
            yaw_zone: ZoneQuantizer::default(),
            forward_filter,
            yaw_filter,
            last: VelocityCommand::default(),
        }
    }

    pub fn last(&self) -> VelocityCommand<T> {
        self.last
    }

    /// Updates from the pendulum angle `theta` and joint-1 angle `psi`.
    pub fn update(&mut self, theta: T, psi: T, dt: T) -> VelocityCommand<T> {
        let p = &self.params;
        let pitch = self.pitch_zone.update(theta - p.theta_bias, p.theta1, p.theta2, p.hysteresis);
        let yaw = self.yaw_zone.update(psi, p.psi1, p.psi2, p.hysteresis);
        let v_raw = level_value(pitch, p.v1, p.v2);
        let w_raw = level_value(yaw, p.psidot1, p.psidot2);
        let v = self.forward_filter.step(v_raw, dt);
        let w = self.yaw_filter.step(w_raw, dt);
        self.last = VelocityCommand { v_forward_raw: v_raw, v_forward_filtered: v, yaw_rate_raw: w_raw, yaw_rate_filtered: w };
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn pitch_levels() {
        let p = GuidanceParams::default();
        assert_eq!(pitch_to_forward(deg(5.0), &p), 0.0);
        assert_eq!(pitch_to_forward(deg(15.0), &p), 0.1);
        assert_eq!(pitch_to_forward(deg(30.0), &p), 0.2);
        assert_eq!(pitch_to_forward(deg(-30.0), &p), -0.2);
    }

    #[test]
    fn yaw_levels() {
        let p = GuidanceParams::default();
        assert_eq!(yaw_to_heading(0.0, &p), 0.0);
        assert_eq!(yaw_to_heading(deg(-15.0), &p), -0.3);
        assert_eq!(yaw_to_heading(deg(25.0), &p), 0.4);
    }

    #[test]
    fn rope_bias_shifts_the_neutral_band() {
        let p = GuidanceParams::default().with_bias(deg(10.0));
        assert_eq!(pitch_to_forward(deg(10.0), &p), 0.0);
        assert_eq!(pitch_to_forward(0.0, &p), -0.1);
        assert_eq!(pitch_to_forward(deg(25.0), &p), 0.1);
        assert_eq!(pitch_to_forward(deg(36.0), &p), 0.2);
    }

    #[test]
    fn hysteresis_prevents_chatter() {
        let p = GuidanceParams::<f64>::default();
        let mut z = ZoneQuantizer::default();
        assert_eq!(z.update(deg(10.5), p.theta1, p.theta2, p.hysteresis), 0);
        assert_eq!(z.update(deg(11.5), p.theta1, p.theta2, p.hysteresis), 1);
        assert_eq!(z.update(deg(9.5), p.theta1, p.theta2, p.hysteresis), 1);
        assert_eq!(z.update(deg(8.5), p.theta1, p.theta2, p.hysteresis), 0);
    }

    #[test]
    fn filter_zero_input_stays_zero() {
        let mut f = SecondOrderFilter::new(6.0, 1.0);
        for _ in 0..1000 {
            assert_eq!(f.step(0.0, 0.004), 0.0);
        }
    }

    #[test]
    fn filter_step_matches_analytic_critically_damped_response() {
        // y(t) = c (1 - (1 + ωt) e^{-ωt}) for ζ = 1
        let (w, c, dt) = (6.0, 0.1, 0.004);
        let mut f = SecondOrderFilter::new(w, 1.0);
        let mut max = 0.0f64;
        for k in 1..=2000 {
            let y = f.step(c, dt);
            let t = k as f64 * dt;
            assert_relative_eq!(y, c * (1.0 - (1.0 + w * t) * (-w * t).exp()), epsilon = 1e-12);
            max = max.max(y);
        }
        assert!(max <= c);
        assert_relative_eq!(f.output(), c, epsilon = 1e-12);
        // 95% settling for ζ = 1 happens at ωt ≈ 4.744
        let mut f = SecondOrderFilter::new(w, 1.0);
        let mut t95 = None;
        for k in 1..=2000 {
            if f.step(c, dt) >= 0.95 * c {
                t95 = Some(k as f64 * dt);
                break;
            }
        }
        assert!((t95.unwrap() - 4.7439 / w).abs() <= dt);
    }

    #[test]
    fn underdamped_filter_keeps_unit_dc_gain() {
        let mut f = SecondOrderFilter::new(4.0, 0.4);
        for _ in 0..20000 {
            f.step(0.3, 0.001);
        }
        assert_relative_eq!(f.output(), 0.3, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn zone_map_is_odd_about_bias(x in -1.5f64..1.5, bias in -0.3f64..0.3) {
            let p = GuidanceParams::default().with_bias(bias);
            prop_assert_eq!(pitch_to_forward(bias + x, &p), -pitch_to_forward(bias - x, &p));
        }

        #[test]
        fn zone_map_is_monotone_in_magnitude(a in 0.0f64..1.5, b in 0.0f64..1.5) {
            let p = GuidanceParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(pitch_to_forward(lo, &p).abs() <= pitch_to_forward(hi, &p).abs());
            prop_assert!(yaw_to_heading(-lo, &p).abs() <= yaw_to_heading(-hi, &p).abs());
        }

        #[test]
        fn critically_damped_filter_is_bounded(inputs in proptest::collection::vec(-0.2f64..0.2, 1..400)) {
            let mut f = SecondOrderFilter::new(6.0, 1.0);
            let bound = inputs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for u in inputs {
                let y = f.step(u, 0.004);
                prop_assert!(y.abs() <= bound + 1e-12);
            }
        }
    }
}
