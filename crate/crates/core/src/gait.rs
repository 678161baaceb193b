//! Crawl-gait scheduling, nominal footholds and swing-foot trajectories.
//!
//! Legs are indexed `LF, RF, LH, RH`. Each leg runs a periodic phase
//! `φ = frac(t·f_step − offset)`; it is in stance for `φ < D_f` and swings for
//! the remaining `1 − D_f` of the cycle. With the default offsets the legs
//! swing in the order LH → LF → RH → RF.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::scalar::{gravity, Real};

pub const NUM_LEGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    LeftFront = 0,
    RightFront = 1,
    LeftHind = 2,
    RightHind = 3,
}

impl Leg {
    pub const ALL: [Leg; NUM_LEGS] = [Leg::LeftFront, Leg::RightFront, Leg::LeftHind, Leg::RightHind];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::LeftFront => "lf",
            Leg::RightFront => "rf",
            Leg::LeftHind => "lh",
            Leg::RightHind => "rh",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("vertical support m·g − f_z = {support:.4} N is not positive")]
    DegenerateLoad { support: f64 },
    #[error("invalid gait parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitParams<T> {
    /// Step frequency, Hz.
    pub step_frequency: T,
    /// Stance fraction of the step period.
    pub duty_factor: T,
    /// Phase offsets (fraction of a cycle) per leg.
    pub phase_offsets: [T; NUM_LEGS],
    /// Home foot positions relative to the CoM in the horizontal frame.
    pub home_positions: [Vector3<T>; NUM_LEGS],
    /// Swing apex above the straight-line path, m.
    pub step_height: T,
    /// All legs stay in stance before this time, s.
    pub start_delay: T,
}

impl<T: Real> Default for GaitParams<T> {
    fn default() -> Self {
        let l = |v: f64| T::lit(v);
        Self {
            step_frequency: l(0.5),
            duty_factor: l(0.8),
            phase_offsets: [l(0.25), l(0.75), l(0.0), l(0.5)],
            home_positions: [
                Vector3::new(l(0.24), l(0.15), l(-0.35)),
                Vector3::new(l(0.24), l(-0.15), l(-0.35)),
                Vector3::new(l(-0.24), l(0.15), l(-0.35)),
                Vector3::new(l(-0.24), l(-0.15), l(-0.35)),
            ],
            step_height: l(0.10),
            start_delay: l(0.0),
        }
    }
}

impl<T: Real> GaitParams<T> {
    pub fn validate(&self) -> Result<(), GaitError> {
        if !(self.duty_factor > T::zero() && self.duty_factor < T::one()) {
            return Err(GaitError::InvalidParams(format!("duty_factor must lie in (0, 1), got {}", self.duty_factor)));
        }
        if !(self.step_frequency > T::zero()) {
            return Err(GaitError::InvalidParams("step_frequency must be positive".into()));
        }
        if !(self.start_delay >= T::zero()) {
            return Err(GaitError::InvalidParams("start_delay must be non-negative".into()));
        }
        if !(self.step_height >= T::zero()) {
            return Err(GaitError::InvalidParams("step_height must be non-negative".into()));
        }
        Ok(())
    }

    /// `D_f / f_step`, the stance duration.
    pub fn stance_duration(&self) -> T {
        self.duty_factor / self.step_frequency
    }

    pub fn swing_duration(&self) -> T {
        (T::one() - self.duty_factor) / self.step_frequency
    }

    pub fn period(&self) -> T {
        T::one() / self.step_frequency
    }

    /// Nominal standing height implied by the home positions.
    pub fn nominal_height(&self) -> T {
        -self.home_positions.iter().map(|p| p.z).sum::<T>() / T::lit(NUM_LEGS as f64)
    }
}

/// Contact information for all legs at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState<T> {
    pub stance: [bool; NUM_LEGS],
    /// Cycle phase `φ ∈ [0, 1)` per leg.
    pub phase: [T; NUM_LEGS],
    /// Swing progress in `[0, 1)` for swinging legs, zero otherwise.
    pub swing_progress: [T; NUM_LEGS],
    /// Remaining swing time `Δt_sw` (zero for stance legs).
    pub swing_remaining: [T; NUM_LEGS],
    /// Time until the next lift-off (zero for swinging legs).
    pub until_lift_off: [T; NUM_LEGS],
}

impl<T: Real> ContactState<T> {
    pub fn stance_count(&self) -> usize {
        self.stance.iter().filter(|s| **s).count()
    }
}

/// Periodic contact schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSchedule<T> {
    pub params: GaitParams<T>,
}

impl<T: Real> GaitSchedule<T> {
    pub fn new(params: GaitParams<T>) -> Self {
        Self { params }
    }

    pub fn phase(&self, leg: usize, t: T) -> T {
        let x = (t - self.params.start_delay) * self.params.step_frequency - self.params.phase_offsets[leg];
        let f = x - x.floor();
        // guard against `f == 1` from rounding of negative inputs
        if f >= T::one() {
            T::zero()
        } else {
            f
        }
    }

    fn started(&self, t: T) -> bool {
        t >= self.params.start_delay
    }

    pub fn in_stance(&self, leg: usize, t: T) -> bool {
        !self.started(t) || self.phase(leg, t) < self.params.duty_factor
    }

    pub fn contact_state(&self, t: T) -> ContactState<T> {
        let df = self.params.duty_factor;
        let period = self.params.period();
        let mut out = ContactState {
            stance: [true; NUM_LEGS],
            phase: [T::zero(); NUM_LEGS],
            swing_progress: [T::zero(); NUM_LEGS],
            swing_remaining: [T::zero(); NUM_LEGS],
            until_lift_off: [T::zero(); NUM_LEGS],
        };
        for leg in 0..NUM_LEGS {
            let phi = self.phase(leg, t);
            out.phase[leg] = phi;
            if !self.started(t) {
                out.until_lift_off[leg] = self.next_lift_off(leg, t) - t;
            } else if phi < df {
                out.stance[leg] = true;
                out.until_lift_off[leg] = if df >= T::one() { T::infinity() } else { (df - phi) * period };
            } else {
                out.stance[leg] = false;
                out.swing_progress[leg] = (phi - df) / (T::one() - df);
                out.swing_remaining[leg] = (T::one() - phi) * period;
            }
        }
        out
    }

    /// Contact flags sampled at `t + k·dt` for `k = 0..n`.
    pub fn contact_sequence(&self, t: T, n: usize, dt: T) -> Vec<[bool; NUM_LEGS]> {
        (0..n)
            .map(|k| {
                let tk = t + dt * T::lit(k as f64);
                std::array::from_fn(|leg| self.in_stance(leg, tk))
            })
            .collect()
    }

    /// Absolute time of the next touch-down of a leg that is swinging at `t`,
    /// or of the touch-down ending the swing that follows `t` otherwise.
    pub fn next_touch_down(&self, leg: usize, t: T) -> T {
        if !self.started(t) {
            let start = self.params.start_delay;
            let phi = self.phase(leg, start);
            if phi >= self.params.duty_factor {
                return start + (T::one() - phi) * self.params.period();
            }
            return self.next_lift_off(leg, t) + self.params.swing_duration();
        }
        let phi = self.phase(leg, t);
        let period = self.params.period();
        t + (T::one() - phi) * period
    }

    /// Absolute time of the next lift-off strictly after `t`.
    pub fn next_lift_off(&self, leg: usize, t: T) -> T {
        if !self.started(t) {
            let start = self.params.start_delay;
            let phi = self.phase(leg, start);
            let df = self.params.duty_factor;
            return if phi < df { start + (df - phi) * self.params.period() } else { start };
        }
        let phi = self.phase(leg, t);
        let df = self.params.duty_factor;
        let period = self.params.period();
        if phi < df {
            t + (df - phi) * period
        } else {
            t + (T::one() - phi + df) * period
        }
    }
}

/// Support-polygon correction `Δ_pa` for a hook wrench.
///
/// `f_ee` is the force applied to the robot and `p_ee` the hook position in
/// the horizontal frame whose origin is the ground point below the CoM, so
/// that `p_ee.z` is the hook height above the local ground.
pub fn support_correction<T: Real>(f_ee: &Vector3<T>, p_ee: &Vector3<T>, mass: T) -> Result<Vector2<T>, GaitError> {
    let support = mass * gravity::<T>() - f_ee.z;
    if !(support > T::lit(1e-6)) {
        return Err(GaitError::DegenerateLoad { support: support.re() });
    }
    Ok(Vector2::new(
        (f_ee.x * p_ee.z - f_ee.z * p_ee.x) / support,
        (f_ee.y * p_ee.z - f_ee.z * p_ee.y) / support,
    ))
}

/// Nominal foothold `p_c + ½ (D_f / f_step) V_f + Δ_pa` in the horizontal frame.
pub fn nominal_foothold_xy<T: Real>(
    leg: usize,
    v_f_xy: &Vector2<T>,
    f_ee: &Vector3<T>,
    p_ee: &Vector3<T>,
    mass: T,
    params: &GaitParams<T>,
) -> Result<Vector2<T>, GaitError> {
    let home = params.home_positions[leg].xy();
    let advance = v_f_xy * (T::lit(0.5) * params.stance_duration());
    Ok(home + advance + support_correction(f_ee, p_ee, mass)?)
}

/// Foothold height from the previous lift-off height and the desired
/// velocity component along the terrain inclination.
pub fn foothold_z<T: Real>(lift_off_z: T, v_z: T, params: &GaitParams<T>) -> T {
    lift_off_z - params.stance_duration() * v_z
}

/// World-frame foothold `R p_n + r + Δt_sw R V_f`.
pub fn world_foothold<T: Real>(
    p_n_h: &Vector3<T>,
    r: &Vector3<T>,
    r_h_w: &Matrix3<T>,
    v_f: &Vector3<T>,
    dt_swing: T,
) -> Vector3<T> {
    r_h_w * p_n_h + r + r_h_w * v_f * dt_swing
}

fn smoothstep<T: Real>(s: T) -> T {
    s * s * (T::lit(3.0) - T::lit(2.0) * s)
}

/// Swing foot position at `phase ∈ [0, 1]`: per-axis cubic between the
/// endpoints with zero end velocities, plus a piecewise-cubic clearance bump
/// peaking at `step_height` mid-swing.
pub fn swing_trajectory<T: Real>(p_lift_off: &Vector3<T>, p_target: &Vector3<T>, phase: T, step_height: T) -> Vector3<T> {
    let phase = phase.max(T::zero()).min(T::one());
    let mut p = p_lift_off + (p_target - p_lift_off) * smoothstep(phase);
    let half = T::lit(0.5);
    let bump = if phase <= half {
        smoothstep(phase / half)
    } else {
        smoothstep((T::one() - phase) / half)
    };
    p.z += step_height * bump;
    p
}

/// Least-squares plane through recent touch-down points, used to estimate the
/// local terrain inclination without looking at the terrain itself.
#[derive(Debug, Clone)]
pub struct InclinationEstimator<T> {
    points: Vec<Vector3<T>>,
    capacity: usize,
}

impl<T: Real> Default for InclinationEstimator<T> {
    fn default() -> Self {
        Self { points: Vec::with_capacity(4), capacity: 4 }
    }
}

impl<T: Real> InclinationEstimator<T> {
    pub fn push(&mut self, p: Vector3<T>) {
        if self.points.len() == self.capacity {
            self.points.remove(0);
        }
        self.points.push(p);
    }

    /// `(∂z/∂x, ∂z/∂y, z0)` of the fitted plane; flat through the mean height
    /// when the points are degenerate.
    pub fn plane(&self) -> (T, T, T) {
        let n = T::lit(self.points.len() as f64);
        if self.points.is_empty() {
            return (T::zero(), T::zero(), T::zero());
        }
        let mean_z = self.points.iter().map(|p| p.z).sum::<T>() / n;
        if self.points.len() < 3 {
            return (T::zero(), T::zero(), mean_z);
        }
        let mut ata = Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for p in &self.points {
            let row = Vector3::new(p.x, p.y, T::one());
            ata += row * row.transpose();
            atb += row * p.z;
        }
        // reject near-collinear sets by the normal-matrix conditioning
        let det = crate::geometry::det3(&ata);
        let scale = ata.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if det.abs() < T::lit(1e-9) * scale * scale * scale {
            return (T::zero(), T::zero(), mean_z);
        }
        match crate::geometry::solve3(&ata, &atb) {
            Some(s) => (s.x, s.y, s.z),
            None => (T::zero(), T::zero(), mean_z),
        }
    }

    /// Height of the fitted plane at `(x, y)`.
    pub fn height_at(&self, x: T, y: T) -> T {
        let (a, b, c) = self.plane();
        a * x + b * y + c
    }

    /// Vertical velocity implied by moving with world velocity `v` on the plane.
    pub fn vertical_velocity(&self, v: &Vector3<T>) -> T {
        let (a, b, _) = self.plane();
        a * v.x + b * v.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_z;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sched() -> GaitSchedule<f64> {
        GaitSchedule::new(GaitParams::default())
    }

    #[test]
    fn crawl_never_drops_below_three_stance_legs() {
        let s = sched();
        let mut four = 0;
        for k in 0..4000 {
            let t = k as f64 * 0.0005;
            let c = s.contact_state(t);
            assert!(c.stance_count() >= 3, "t = {t}");
            if c.stance_count() == 4 {
                four += 1;
            }
        }
        // 4-stance windows cover 20% of the cycle
        assert!((four as f64 / 4000.0 - 0.2).abs() < 0.01);
    }

    #[test]
    fn swing_order_is_lh_lf_rh_rf() {
        let s = sched();
        let mut order = Vec::new();
        let mut prev = s.contact_state(0.0).stance;
        for k in 1..4000 {
            let c = s.contact_state(k as f64 * 0.0005).stance;
            for leg in 0..NUM_LEGS {
                if prev[leg] && !c[leg] {
                    order.push(leg);
                }
            }
            prev = c;
        }
        let expected = [Leg::LeftFront, Leg::RightHind, Leg::RightFront, Leg::LeftHind].map(Leg::index);
        assert_eq!(&order[..4], &expected);
    }

    #[test]
    fn schedule_is_periodic() {
        let s = sched();
        for k in 0..200 {
            let t = 0.013 * k as f64;
            assert_eq!(s.contact_state(t).stance, s.contact_state(t + 2.0).stance);
        }
    }

    #[test]
    fn start_delay_holds_stance_then_shifts_schedule() {
        let mut p = GaitParams::default();
        p.start_delay = 1.0;
        let s = GaitSchedule::new(p);
        let plain = sched();
        for k in 0..100 {
            let t = 0.0099 * k as f64;
            assert_eq!(s.contact_state(t).stance_count(), 4);
            for leg in 0..NUM_LEGS {
                assert_relative_eq!(s.next_lift_off(leg, t), 1.0 + plain.next_lift_off(leg, 0.0), epsilon = 1e-12);
                assert!(s.next_touch_down(leg, t) > s.next_lift_off(leg, t));
            }
        }
        for k in 0..200 {
            let t = 0.013 * k as f64;
            assert_eq!(s.contact_state(t + 1.0).stance, plain.contact_state(t).stance);
        }
        let seq = s.contact_sequence(0.9, 10, 0.04);
        assert_eq!(seq[0], [true; NUM_LEGS]);
        assert!(!seq[9][Leg::LeftFront.index()]);
    }

    #[test]
    fn unit_duty_factor_keeps_all_legs_down() {
        let mut p = GaitParams::default();
        p.duty_factor = 1.0;
        let s = GaitSchedule::new(p);
        for k in 0..100 {
            assert_eq!(s.contact_state(0.037 * k as f64).stance_count(), 4);
        }
    }

    #[test]
    fn validation_rejects_out_of_range_duty_factor() {
        let mut p = GaitParams::<f64>::default();
        p.duty_factor = 1.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn swing_timing() {
        let s = sched();
        // LH swings on [1.6, 2.0)
        let c = s.contact_state(1.7);
        assert!(!c.stance[Leg::LeftHind.index()]);
        assert_relative_eq!(c.swing_remaining[Leg::LeftHind.index()], 0.3, epsilon = 1e-12);
        assert_relative_eq!(c.swing_progress[Leg::LeftHind.index()], 0.25, epsilon = 1e-12);
        assert_relative_eq!(s.next_lift_off(Leg::LeftHind.index(), 0.0), 1.6, epsilon = 1e-12);
        assert_relative_eq!(s.next_touch_down(Leg::LeftHind.index(), 1.7), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn foothold_examples() {
        let p = GaitParams::default();
        let z = Vector3::zeros();
        let home = p.home_positions[0].xy();
        assert_eq!(nominal_foothold_xy(0, &Vector2::zeros(), &z, &z, 21.0, &p).unwrap(), home);
        let moved = nominal_foothold_xy(0, &Vector2::new(0.1, 0.0), &z, &z, 21.0, &p).unwrap();
        assert_relative_eq!(moved - home, Vector2::new(0.08, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_load_is_rejected() {
        let p = GaitParams::default();
        let f = Vector3::new(0.0, 0.0, 21.0 * 9.81);
        assert!(matches!(
            nominal_foothold_xy(0, &Vector2::zeros(), &f, &Vector3::new(0.5, 0.0, 0.3), 21.0, &p),
            Err(GaitError::DegenerateLoad { .. })
        ));
    }

    #[test]
    fn foothold_height_examples() {
        let p = GaitParams::default();
        assert_eq!(foothold_z(0.16, 0.0, &p), 0.16);
        assert_relative_eq!(foothold_z(0.16, 0.05, &p), 0.08, epsilon = 1e-12);
        let mut est = InclinationEstimator::default();
        for (x, y) in [(0.0, 0.0), (0.5, 0.1), (0.2, -0.3), (-0.1, 0.4)] {
            est.push(Vector3::new(x, y, 0.0));
        }
        assert_eq!(est.vertical_velocity(&Vector3::new(0.2, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn inclination_fit_recovers_plane() {
        let mut est = InclinationEstimator::default();
        for (x, y) in [(0.2, 0.1), (0.3, -0.2), (-0.25, 0.15), (-0.2, -0.15), (0.4, 0.3)] {
            est.push(Vector3::new(x, y, 0.2 * x - 0.1 * y + 0.05));
        }
        let (a, b, c) = est.plane();
        assert_relative_eq!(a, 0.2, epsilon = 1e-10);
        assert_relative_eq!(b, -0.1, epsilon = 1e-10);
        assert_relative_eq!(c, 0.05, epsilon = 1e-10);
    }

    #[test]
    fn world_foothold_examples() {
        let p = Vector3::new(0.24, 0.15, 0.0);
        let eye = Matrix3::identity();
        assert_eq!(world_foothold(&p, &Vector3::zeros(), &eye, &Vector3::new(0.1, 0.0, 0.0), 0.0), p);
        let ahead = world_foothold(&p, &Vector3::zeros(), &eye, &Vector3::new(0.1, 0.0, 0.0), 0.4);
        assert_relative_eq!(ahead - p, Vector3::new(0.04, 0.0, 0.0), epsilon = 1e-12);
        let turned = world_foothold(&Vector3::new(0.3, 0.0, 0.0), &Vector3::zeros(), &rot_z(std::f64::consts::FRAC_PI_2), &Vector3::zeros(), 0.0);
        assert_relative_eq!(turned, Vector3::new(0.0, 0.3, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn swing_boundaries_and_apex() {
        let a = Vector3::new(0.0, 0.1, 0.0);
        let b = Vector3::new(0.2, 0.12, 0.05);
        assert_eq!(swing_trajectory(&a, &b, 0.0, 0.08), a);
        assert_relative_eq!(swing_trajectory(&a, &b, 1.0, 0.08), b, epsilon = 1e-15);
        let flat = swing_trajectory(&Vector3::zeros(), &Vector3::new(0.1, 0.0, 0.0), 0.5, 0.08);
        assert_relative_eq!(flat.z, 0.08, epsilon = 1e-15);
        let h = 1e-7;
        let v0 = (swing_trajectory(&a, &b, h, 0.08) - a) / h;
        let v1 = (b - swing_trajectory(&a, &b, 1.0 - h, 0.08)) / h;
        assert!(v0.norm() < 1e-5 && v1.norm() < 1e-5);
    }

    proptest! {
        #[test]
        fn support_correction_is_linear_in_force(
            fx in -50.0f64..50.0, fz in -60.0f64..20.0, scale in 0.1f64..1.0,
            px in -0.8f64..0.8, pz in 0.1f64..0.6,
        ) {
            // fixed denominator: compare two forces with the same vertical part
            let p = Vector3::new(px, 0.0, pz);
            let f1 = Vector3::new(fx, 0.0, fz);
            let f2 = Vector3::new(fx * scale, 0.0, fz);
            let d1 = support_correction(&f1, &p, 21.0).unwrap();
            let d2 = support_correction(&f2, &p, 21.0).unwrap();
            let d0 = support_correction(&Vector3::new(0.0, 0.0, fz), &p, 21.0).unwrap();
            prop_assert!(((d2 - d0) - (d1 - d0) * scale).norm() < 1e-12);
            prop_assert_eq!(support_correction(&Vector3::zeros(), &p, 21.0).unwrap(), Vector2::zeros());
        }

        #[test]
        fn swing_is_continuous(a in 0.0f64..1.0, da in 1e-6f64..1e-4) {
            let p0 = Vector3::new(0.0, 0.1, 0.0);
            let p1 = Vector3::new(0.2, 0.15, 0.1);
            let b = (a + da).min(1.0);
            let dp = swing_trajectory(&p0, &p1, b, 0.1) - swing_trajectory(&p0, &p1, a, 0.1);
            prop_assert!(dp.norm() <= 2.0 * (b - a) + 1e-12);
        }
    }
}
