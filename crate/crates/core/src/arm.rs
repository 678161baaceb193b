//! Kinematics, passive dynamics and hook-force estimation for the 3-DoF
//! yaw-pitch-pitch passive arm.
//!
//! The arm base frame sits at the mounting point `A` with x forward and z up.
//! At zero joint angles the chain `A → B → C → D → E` lies in the x–z plane:
//! `AB` points straight up, the chain then bends forward at `B`, slightly
//! back up at `C`, and folds down at `D` so that the last link `DE` hangs
//! almost vertically. Joint 1 (yaw) turns about the vertical through `A`,
//! joint 2 (pitch) sits at `C`, joint 3 (pitch) at `D`; both pitch axes are
//! the arm frame y axis rotated by the yaw angle. Positive pitch swings the
//! distal chain from +x towards -z.
//!
//! Links are thin uniform rods: link 1 spans `A–C`, link 2 `C–D`, link 3
//! `D–E`. The base link never moves relative to the robot.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{det3, inverse3, norm3, rot_y, rot_z};
use crate::scalar::{gravity, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmError {
    #[error("end-effector Jacobian is singular (|det| = {det:e})")]
    Singular { det: f64 },
    #[error("invalid arm parameter: {0}")]
    InvalidParams(String),
    #[error("force estimate unavailable for {elapsed:.3} s (hold limit {limit:.3} s)")]
    EstimateExpired { elapsed: f64, limit: f64 },
}

/// How the springs of a joint are arranged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpringMode {
    /// Antagonistic pair, linear about the equilibrium angle.
    Antagonistic,
    /// Single spring engaged on one side; adds a constant pre-torque.
    Asymmetric,
}

impl SpringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SpringMode::Antagonistic => "antagonistic",
            SpringMode::Asymmetric => "asymmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "antagonistic" => Some(SpringMode::Antagonistic),
            "asymmetric" => Some(SpringMode::Asymmetric),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmParams<T> {
    /// `AB`, `BC`, `CD`, `DE` in metres.
    pub segment_lengths: [T; 4],
    /// Interior angles `ABC`, `BCD`, `CDE` in radians.
    pub bend_angles: [T; 3],
    /// Base, link 1, link 2, link 3 masses in kg.
    pub link_masses: [T; 4],
    /// Joint stiffness, N·m/rad.
    pub stiffness: Vector3<T>,
    /// Joint damping, N·m·s/rad.
    pub damping: Vector3<T>,
    /// Spring equilibrium angles, rad.
    pub equilibrium: Vector3<T>,
    pub spring_modes: [SpringMode; 3],
    /// Pre-torque (N·m) added to the spring torque of asymmetric joints.
    pub asymmetric_preload: T,
    /// `(lower, upper)` joint limits, rad.
    pub joint_limits: [(T, T); 3],
}

impl<T: Real> Default for ArmParams<T> {
    fn default() -> Self {
        let deg = |d: f64| T::lit(d.to_radians());
        Self {
            segment_lengths: [T::lit(0.082), T::lit(0.056), T::lit(0.271), T::lit(0.277)],
            bend_angles: [deg(117.6), deg(164.7), deg(51.6)],
            link_masses: [T::lit(0.366), T::lit(0.162), T::lit(0.497), T::lit(0.258)],
            stiffness: Vector3::new(T::lit(3.5), T::lit(8.47), T::lit(2.75)),
            damping: Vector3::new(T::lit(0.26), T::lit(1.43), T::zero()),
            equilibrium: Vector3::zeros(),
            spring_modes: [SpringMode::Antagonistic; 3],
            asymmetric_preload: T::zero(),
            joint_limits: [(deg(-90.0), deg(90.0)), (deg(-120.0), deg(90.0)), (deg(-90.0), deg(90.0))],
        }
    }
}

impl<T: Real> ArmParams<T> {
    pub fn validate(&self) -> Result<(), ArmError> {
        if self.segment_lengths.iter().any(|l| !(*l > T::zero())) {
            return Err(ArmError::InvalidParams("segment lengths must be positive".into()));
        }
        if self.bend_angles.iter().any(|a| !(*a > T::zero() && *a < T::PI() + T::lit(1e-12))) {
            return Err(ArmError::InvalidParams("bend angles must lie in (0, π]".into()));
        }
        if self.link_masses.iter().any(|m| !(*m >= T::zero())) {
            return Err(ArmError::InvalidParams("link masses must be non-negative".into()));
        }
        if self.stiffness.iter().any(|k| !(*k >= T::zero())) {
            return Err(ArmError::InvalidParams("stiffness must be non-negative".into()));
        }
        if self.damping.iter().any(|c| !(*c >= T::zero())) {
            return Err(ArmError::InvalidParams("damping must be non-negative".into()));
        }
        if self.damping.z != T::zero() {
            return Err(ArmError::InvalidParams("joint 3 has no damping element".into()));
        }
        if self.joint_limits.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(ArmError::InvalidParams("joint limits must satisfy lower < upper".into()));
        }
        Ok(())
    }

    /// Zero-configuration positions of `A, B, C, D, E` in the arm base frame.
    pub fn zero_pose_points(&self) -> [Vector3<T>; 5] {
        let [ab, bc, cd, de] = self.segment_lengths;
        let pi = T::PI();
        let h0 = pi / T::lit(2.0);
        let h1 = h0 - (pi - self.bend_angles[0]);
        let h2 = h1 + (pi - self.bend_angles[1]);
        let h3 = h2 - (pi - self.bend_angles[2]);
        let step = |len: T, h: T| Vector3::new(len * h.cos(), T::zero(), len * h.sin());
        let a = Vector3::zeros();
        let b = a + step(ab, h0);
        let c = b + step(bc, h1);
        let d = c + step(cd, h2);
        let e = d + step(de, h3);
        [a, b, c, d, e]
    }

    /// Spring torque `τ_s = -k_s (q - q_a0)` plus asymmetric pre-torque.
    pub fn spring_torque(&self, q: &Vector3<T>) -> Vector3<T> {
        let mut tau = -self.stiffness.component_mul(&(q - self.equilibrium));
        for (i, mode) in self.spring_modes.iter().enumerate() {
            if *mode == SpringMode::Asymmetric {
                tau[i] += self.asymmetric_preload;
            }
        }
        tau
    }

    /// Damping torque `τ_d = -k_d q̇`.
    pub fn damping_torque(&self, q_dot: &Vector3<T>) -> Vector3<T> {
        -self.damping.component_mul(q_dot)
    }

    /// Both impedance torques at once.
    pub fn spring_damper_torque(&self, q: &Vector3<T>, q_dot: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
        (self.spring_torque(q), self.damping_torque(q_dot))
    }

    /// Stored spring energy (excluding the pre-torque work term).
    pub fn spring_energy(&self, q: &Vector3<T>) -> T {
        let dq = q - self.equilibrium;
        let mut e = T::lit(0.5) * (self.stiffness.component_mul(&dq)).dot(&dq);
        for (i, mode) in self.spring_modes.iter().enumerate() {
            if *mode == SpringMode::Asymmetric {
                e -= self.asymmetric_preload * q[i];
            }
        }
        e
    }

    /// Returns the spring equilibrium that makes `q` a static equilibrium
    /// under the hook force `f_ee` (arm frame) and gravity `g_arm`.
    pub fn equilibrium_for_load(&self, q: &Vector3<T>, f_ee: &Vector3<T>, g_arm: &Vector3<T>) -> Vector3<T> {
        let frames = forward_kinematics(self, q);
        let j = frames.jacobian();
        let mut load = gravity_torque_in(self, &frames, g_arm) + j.transpose() * f_ee;
        for (i, mode) in self.spring_modes.iter().enumerate() {
            if *mode == SpringMode::Asymmetric {
                load[i] += self.asymmetric_preload;
            }
        }
        let mut q0 = *q;
        for i in 0..3 {
            if self.stiffness[i] > T::zero() {
                q0[i] = q[i] - load[i] / self.stiffness[i];
            }
        }
        q0
    }

    /// Restoring torque of the mechanical end stops, zero inside the limits.
    pub fn joint_stop_torque(&self, q: &Vector3<T>, q_dot: &Vector3<T>) -> Vector3<T> {
        let k = T::lit(200.0);
        let c = T::lit(2.0);
        Vector3::from_fn(|i, _| {
            let (lo, hi) = self.joint_limits[i];
            if q[i] < lo {
                k * (lo - q[i]) - c * q_dot[i].min(T::zero())
            } else if q[i] > hi {
                -k * (q[i] - hi) - c * q_dot[i].max(T::zero())
            } else {
                T::zero()
            }
        })
    }
}

/// Joint angles and rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState<T> {
    pub q: Vector3<T>,
    pub q_dot: Vector3<T>,
}

impl<T: Real> Default for ArmState<T> {
    fn default() -> Self {
        Self { q: Vector3::zeros(), q_dot: Vector3::zeros() }
    }
}

impl<T: Real> ArmState<T> {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.q_dot.iter()).all(|v| v.is_finite())
    }
}

/// Where the arm base sits on the robot trunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmMount<T> {
    /// Position of `A` in the robot base frame.
    pub position: Vector3<T>,
    /// Yaw of the arm frame relative to the base frame (π for a rear mount).
    pub yaw: T,
}

impl<T: Real> ArmMount<T> {
    pub fn front(x: T, z: T) -> Self {
        Self { position: Vector3::new(x, T::zero(), z), yaw: T::zero() }
    }

    pub fn rear(x: T, z: T) -> Self {
        Self { position: Vector3::new(-x, T::zero(), z), yaw: T::PI() }
    }

    pub fn rotation(&self) -> Matrix3<T> {
        rot_z(self.yaw)
    }

    /// Maps an arm-frame point into the robot base frame.
    pub fn to_base(&self, p_arm: &Vector3<T>) -> Vector3<T> {
        self.position + self.rotation() * p_arm
    }
}

/// Output of [`forward_kinematics`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFrames<T> {
    /// `A, B, C, D, E` in the arm base frame.
    pub points: [Vector3<T>; 5],
    /// Joint axes (unit) in the arm base frame.
    pub axes: [Vector3<T>; 3],
    /// Orientation of each moving link.
    pub rotations: [Matrix3<T>; 3],
}

impl<T: Real> ArmFrames<T> {
    pub fn joint_origin(&self, joint: usize) -> Vector3<T> {
        match joint {
            0 => self.points[0],
            1 => self.points[2],
            _ => self.points[3],
        }
    }

    pub fn ee_position(&self) -> Vector3<T> {
        self.points[4]
    }

    pub fn ee_rotation(&self) -> Matrix3<T> {
        self.rotations[2]
    }

    /// Linear-velocity Jacobian of the point `p` rigidly attached to link
    /// `link` (0-based): column `j` is `z_j × (p - o_j)` for `j ≤ link`.
    pub fn point_jacobian(&self, link: usize, p: &Vector3<T>) -> Matrix3<T> {
        let mut j = Matrix3::zeros();
        for k in 0..=link.min(2) {
            let col = self.axes[k].cross(&(p - self.joint_origin(k)));
            j.set_column(k, &col);
        }
        j
    }

    /// End-effector linear Jacobian `J_ee`.
    pub fn jacobian(&self) -> Matrix3<T> {
        self.point_jacobian(2, &self.points[4])
    }

    /// Rod endpoints of each link.
    fn rods(&self) -> [(Vector3<T>, Vector3<T>); 3] {
        [(self.points[0], self.points[2]), (self.points[2], self.points[3]), (self.points[3], self.points[4])]
    }
}

pub fn forward_kinematics<T: Real>(params: &ArmParams<T>, q: &Vector3<T>) -> ArmFrames<T> {
    let [a0, b0, c0, d0, e0] = params.zero_pose_points();
    let r1 = rot_z(q.x);
    let r2 = r1 * rot_y(q.y);
    let r3 = r2 * rot_y(q.z);
    let a = a0;
    let b = r1 * b0;
    let c = r1 * c0;
    let d = c + r2 * (d0 - c0);
    let e = d + r3 * (e0 - d0);
    let pitch_axis = r1 * Vector3::y();
    ArmFrames { points: [a, b, c, d, e], axes: [Vector3::z(), pitch_axis, pitch_axis], rotations: [r1, r2, r3] }
}

/// Hook position in the arm base frame.
pub fn ee_position<T: Real>(params: &ArmParams<T>, q: &Vector3<T>) -> Vector3<T> {
    forward_kinematics(params, q).ee_position()
}

/// Singularity threshold on `|det J_ee|` (SI units).
pub const SINGULAR_DET: f64 = 1e-6;

/// End-effector Jacobian together with a singularity check.
pub fn ee_jacobian<T: Real>(params: &ArmParams<T>, q: &Vector3<T>) -> Result<Matrix3<T>, ArmError> {
    let j = forward_kinematics(params, q).jacobian();
    let det = det3(&j);
    if det.abs() < T::lit(SINGULAR_DET) {
        return Err(ArmError::Singular { det: det.re() });
    }
    Ok(j)
}

/// Level-base gravity vector in the arm frame.
pub fn level_gravity<T: Real>() -> Vector3<T> {
    Vector3::new(T::zero(), T::zero(), -gravity::<T>())
}

/// Gravity torque for a level arm base.
pub fn gravity_torque<T: Real>(params: &ArmParams<T>, q: &Vector3<T>) -> Vector3<T> {
    gravity_torque_tilted(params, q, &level_gravity())
}

/// Gravity torque with the gravity vector `g_arm` expressed in the arm frame.
pub fn gravity_torque_tilted<T: Real>(params: &ArmParams<T>, q: &Vector3<T>, g_arm: &Vector3<T>) -> Vector3<T> {
    gravity_torque_in(params, &forward_kinematics(params, q), g_arm)
}

fn gravity_torque_in<T: Real>(params: &ArmParams<T>, frames: &ArmFrames<T>, g_arm: &Vector3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    frames.rods().iter().enumerate().fold(Vector3::zeros(), |acc, (k, (p0, p1))| {
        let com = (p0 + p1) * half;
        acc + frames.point_jacobian(k, &com).transpose() * (g_arm * params.link_masses[k + 1])
    })
}

/// Gravitational potential energy of the moving links (and an optional
/// point mass at the hook) relative to the arm base.
pub fn potential_energy<T: Real>(params: &ArmParams<T>, q: &Vector3<T>, g_arm: &Vector3<T>, tip_mass: T) -> T {
    let frames = forward_kinematics(params, q);
    let half = T::lit(0.5);
    let links: T = frames
        .rods()
        .iter()
        .enumerate()
        .map(|(k, (p0, p1))| -params.link_masses[k + 1] * g_arm.dot(&((p0 + p1) * half)))
        .sum();
    links - tip_mass * g_arm.dot(&frames.ee_position())
}

/// Recursive Newton–Euler inverse dynamics in the arm base frame.
///
/// Returns the joint torques needed to produce `q_ddot` under gravity `g_arm`
/// with a point mass `tip_mass` rigidly attached at the hook.
pub fn inverse_dynamics<T: Real>(
    params: &ArmParams<T>,
    frames: &ArmFrames<T>,
    q_dot: &Vector3<T>,
    q_ddot: &Vector3<T>,
    g_arm: &Vector3<T>,
    tip_mass: T,
) -> Vector3<T> {
    let half = T::lit(0.5);
    let twelfth = T::one() / T::lit(12.0);
    let rods = frames.rods();

    let mut omega = [Vector3::zeros(); 3];
    let mut alpha = [Vector3::zeros(); 3];
    let mut acc_origin = [Vector3::zeros(); 3];
    let mut acc_com = [Vector3::zeros(); 3];
    let mut inertia = [Matrix3::zeros(); 3];

    let mut w_prev = Vector3::zeros();
    let mut a_prev = Vector3::zeros();
    let mut acc_prev = -g_arm;
    let mut o_prev = frames.joint_origin(0);
    for k in 0..3 {
        let z = frames.axes[k];
        let o = frames.joint_origin(k);
        let r = o - o_prev;
        let acc_o = acc_prev + a_prev.cross(&r) + w_prev.cross(&w_prev.cross(&r));
        let w = w_prev + z * q_dot[k];
        let a = a_prev + z * q_ddot[k] + w_prev.cross(&(z * q_dot[k]));
        let (p0, p1) = rods[k];
        let rc = (p0 + p1) * half - o;
        acc_com[k] = acc_o + a.cross(&rc) + w.cross(&w.cross(&rc));

        let seg = p1 - p0;
        let len2 = seg.dot(&seg);
        let m = params.link_masses[k + 1];
        inertia[k] = (Matrix3::identity() * len2 - seg * seg.transpose()) * (m * twelfth);

        omega[k] = w;
        alpha[k] = a;
        acc_origin[k] = acc_o;
        w_prev = w;
        a_prev = a;
        acc_prev = acc_o;
        o_prev = o;
    }

    let e = frames.ee_position();
    let mut force_next = Vector3::zeros();
    let mut moment_next = Vector3::zeros();
    let mut origin_next = e;
    let mut tau = Vector3::zeros();
    for k in (0..3).rev() {
        let o = frames.joint_origin(k);
        let (p0, p1) = rods[k];
        let rc = (p0 + p1) * half - o;
        let m = params.link_masses[k + 1];
        let f_link = acc_com[k] * m;
        let mut force = f_link + force_next;
        let mut moment = inertia[k] * alpha[k]
            + omega[k].cross(&(inertia[k] * omega[k]))
            + rc.cross(&f_link)
            + moment_next
            + (origin_next - o).cross(&force_next);
        if k == 2 && tip_mass != T::zero() {
            let re = e - o;
            let acc_e = acc_origin[k] + alpha[k].cross(&re) + omega[k].cross(&omega[k].cross(&re));
            let f_tip = acc_e * tip_mass;
            force += f_tip;
            moment += re.cross(&f_tip);
        }
        tau[k] = frames.axes[k].dot(&moment);
        force_next = force;
        moment_next = moment;
        origin_next = o;
    }
    tau
}

/// Joint-space inertia matrix `M_a(q)` including an optional hook mass.
pub fn mass_matrix<T: Real>(params: &ArmParams<T>, frames: &ArmFrames<T>, tip_mass: T) -> Matrix3<T> {
    let zero = Vector3::zeros();
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = T::one();
        m.set_column(i, &inverse_dynamics(params, frames, &zero, &e, &zero, tip_mass));
    }
    m
}

/// Velocity-product (Coriolis and centrifugal) torques `V_a`.
pub fn coriolis<T: Real>(params: &ArmParams<T>, frames: &ArmFrames<T>, q_dot: &Vector3<T>, tip_mass: T) -> Vector3<T> {
    let zero = Vector3::zeros();
    inverse_dynamics(params, frames, q_dot, &zero, &zero, tip_mass)
}

/// Kinetic energy `½ q̇ᵀ M q̇`.
pub fn kinetic_energy<T: Real>(params: &ArmParams<T>, q: &Vector3<T>, q_dot: &Vector3<T>, tip_mass: T) -> T {
    let frames = forward_kinematics(params, q);
    T::lit(0.5) * q_dot.dot(&(mass_matrix(params, &frames, tip_mass) * q_dot))
}

/// Joint accelerations of the full passive-arm model
/// `M q̈ + V = τ_g + τ_s + τ_d + J_eeᵀ f_ee` for a level base.
pub fn arm_forward_dynamics<T: Real>(
    params: &ArmParams<T>,
    q: &Vector3<T>,
    q_dot: &Vector3<T>,
    f_ee: &Vector3<T>,
) -> Vector3<T> {
    forward_dynamics_ext(params, q, q_dot, f_ee, &level_gravity(), T::zero(), &Vector3::zeros())
}

/// Forward dynamics with arbitrary gravity, hook point mass and an extra
/// joint torque (e.g. from end stops).
pub fn forward_dynamics_ext<T: Real>(
    params: &ArmParams<T>,
    q: &Vector3<T>,
    q_dot: &Vector3<T>,
    f_ee: &Vector3<T>,
    g_arm: &Vector3<T>,
    tip_mass: T,
    extra_torque: &Vector3<T>,
) -> Vector3<T> {
    let frames = forward_kinematics(params, q);
    let bias = inverse_dynamics(params, &frames, q_dot, &Vector3::zeros(), g_arm, tip_mass);
    let (tau_s, tau_d) = params.spring_damper_torque(q, q_dot);
    let rhs = tau_s + tau_d + frames.jacobian().transpose() * f_ee + extra_torque - bias;
    let m = mass_matrix(params, &frames, tip_mass);
    inverse3(&m).map(|mi| mi * rhs).unwrap_or_else(Vector3::zeros)
}

/// Quasi-static hook force `f̂_ee = -(J_eeᵀ)⁻¹ (τ_g + τ_s + τ_d)` in the arm
/// frame, level base.
pub fn estimate_ee_force<T: Real>(params: &ArmParams<T>, q: &Vector3<T>, q_dot: &Vector3<T>) -> Result<Vector3<T>, ArmError> {
    estimate_ee_force_tilted(params, q, q_dot, &level_gravity())
}

pub fn estimate_ee_force_tilted<T: Real>(
    params: &ArmParams<T>,
    q: &Vector3<T>,
    q_dot: &Vector3<T>,
    g_arm: &Vector3<T>,
) -> Result<Vector3<T>, ArmError> {
    let frames = forward_kinematics(params, q);
    let j = frames.jacobian();
    let det = det3(&j);
    if det.abs() < T::lit(SINGULAR_DET) {
        return Err(ArmError::Singular { det: det.re() });
    }
    let (tau_s, tau_d) = params.spring_damper_torque(q, q_dot);
    let tau = gravity_torque_in(params, &frames, g_arm) + tau_s + tau_d;
    let jt_inv = inverse3(&j.transpose()).ok_or(ArmError::Singular { det: det.re() })?;
    Ok(-(jt_inv * tau))
}

/// Hook force and its equivalent wrench about the robot CoM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EeWrenchEstimate<T> {
    /// Estimated hook force in the arm base frame.
    pub f_ee_hat: Vector3<T>,
    /// Force on the robot, world frame.
    pub f_ext: Vector3<T>,
    /// Torque about the CoM, world frame.
    pub tau_ext: Vector3<T>,
    /// Hook position in the robot base frame.
    pub p_ee_b: Vector3<T>,
}

/// Transfers a base-frame hook force to a world-frame wrench about the CoM:
/// `f_ext = R f̂`, `τ_ext = (R p_ee) × (R f̂)`.
pub fn wrench_at_com<T: Real>(f_hat_b: &Vector3<T>, r_b_w: &Matrix3<T>, p_ee_b: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let f = r_b_w * f_hat_b;
    let p = r_b_w * p_ee_b;
    (f, p.cross(&f))
}

/// Builds the full estimate from arm measurements and the base orientation.
pub fn estimate_wrench<T: Real>(
    params: &ArmParams<T>,
    mount: &ArmMount<T>,
    state: &ArmState<T>,
    r_b_w: &Matrix3<T>,
) -> Result<EeWrenchEstimate<T>, ArmError> {
    let r_a_w = r_b_w * mount.rotation();
    let g_arm = r_a_w.transpose() * level_gravity::<T>();
    let f_ee_hat = estimate_ee_force_tilted(params, &state.q, &state.q_dot, &g_arm)?;
    let p_ee_b = mount.to_base(&ee_position(params, &state.q));
    let f_b = mount.rotation() * f_ee_hat;
    let (f_ext, tau_ext) = wrench_at_com(&f_b, r_b_w, &p_ee_b);
    Ok(EeWrenchEstimate { f_ee_hat, f_ext, tau_ext, p_ee_b })
}

/// Diagonal of `(J_eeᵀ R_Wᴬ)⁻¹ k_s (R_Aᵂ J_ee)⁻¹`, the hook stiffness seen
/// in the world frame. `r_a_w` rotates arm-frame vectors into the world.
pub fn effective_cartesian_stiffness<T: Real>(
    params: &ArmParams<T>,
    q: &Vector3<T>,
    r_a_w: &Matrix3<T>,
) -> Result<Vector3<T>, ArmError> {
    Ok(cartesian_stiffness_matrix(params, q, r_a_w)?.diagonal())
}

/// Full (symmetric) world-frame hook stiffness matrix.
pub fn cartesian_stiffness_matrix<T: Real>(
    params: &ArmParams<T>,
    q: &Vector3<T>,
    r_a_w: &Matrix3<T>,
) -> Result<Matrix3<T>, ArmError> {
    let j = ee_jacobian(params, q)?;
    let rj = r_a_w * j;
    let det = det3(&rj);
    let rj_inv = inverse3(&rj).ok_or(ArmError::Singular { det: det.re() })?;
    let k = Matrix3::from_diagonal(&params.stiffness);
    Ok(rj_inv.transpose() * k * rj_inv)
}

/// Signed angle of link `DE` from the downward vertical, measured in the
/// pendulum plane (orthogonal to the joint-3 axis). Positive when the hook
/// swings towards the arm's +x direction.
pub fn pendulum_angle<T: Real>(frames: &ArmFrames<T>, r_a_w: &Matrix3<T>) -> T {
    let axis = r_a_w * frames.axes[2];
    let link = r_a_w * (frames.points[4] - frames.points[3]);
    let down = Vector3::new(T::zero(), T::zero(), -T::one());
    let g_p = down - axis * down.dot(&axis);
    let u_p = link - axis * link.dot(&axis);
    if norm3(&g_p) < T::lit(1e-9) || norm3(&u_p) < T::lit(1e-9) {
        return T::zero();
    }
    axis.dot(&u_p.cross(&g_p)).atan2(g_p.dot(&u_p))
}

/// Quasi-static estimator that holds its last valid output through short
/// singular stretches.
#[derive(Debug, Clone)]
pub struct ForceEstimator<T> {
    pub hold_limit: T,
    last: Option<EeWrenchEstimate<T>>,
    invalid_since: Option<T>,
}

impl<T: Real> Default for ForceEstimator<T> {
    fn default() -> Self {
        Self { hold_limit: T::lit(0.2), last: None, invalid_since: None }
    }
}

impl<T: Real> ForceEstimator<T> {
    pub fn update(
        &mut self,
        t: T,
        params: &ArmParams<T>,
        mount: &ArmMount<T>,
        state: &ArmState<T>,
        r_b_w: &Matrix3<T>,
    ) -> Result<EeWrenchEstimate<T>, ArmError> {
        match estimate_wrench(params, mount, state, r_b_w) {
            Ok(est) => {
                self.last = Some(est);
                self.invalid_since = None;
                Ok(est)
            }
            Err(err) => {
                let since = *self.invalid_since.get_or_insert(t);
                let elapsed = t - since;
                match self.last {
                    Some(last) if elapsed <= self.hold_limit => Ok(last),
                    Some(_) => Err(ArmError::EstimateExpired { elapsed: elapsed.re(), limit: self.hold_limit.re() }),
                    None => Err(err),
                }
            }
        }
    }

    pub fn last(&self) -> Option<&EeWrenchEstimate<T>> {
        self.last.as_ref()
    }
}
