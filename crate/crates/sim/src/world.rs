//! Fixed-step world: quadruped bases as single rigid bodies on massless legs,
//! passive arms integrated in their moving mount frames, and the payload
//! coupling between the hooks.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

use pacc_core::arm::{forward_dynamics_ext, forward_kinematics, ArmParams, ArmState};
use pacc_core::gait::NUM_LEGS;
use pacc_core::geometry::{inverse3, matrix_to_euler_zyx};
use pacc_core::locomotion::{ControlOutput, ControllerConfig, ControllerError, LocomotionController, Measurement};
use pacc_core::mpc::{box_inertia, zmp, SupportPolygon};
use pacc_core::scalar::GRAVITY;

use crate::coupling::{payload_share, rigid_bar_force, rope_force, BarParams, RopeParams};
use crate::leader::{leader_command, LeaderScript, LeaderTracking, LowPass};
use crate::terrain::Terrain;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numerical divergence at t = {t:.3} s: {what}")]
    NumericalDivergence { t: f64, what: String },
    #[error("controller failure at t = {t:.3} s: {source}")]
    Controller {
        t: f64,
        #[source]
        source: ControllerError,
    },
    #[error("invalid world setup: {0}")]
    Setup(String),
}

/// Cutoff of the hook acceleration filter used for the payload share.
const HOOK_ACC_CUTOFF_HZ: f64 = 10.0;

/// Arm sub-steps per physics step. The configuration-dependent inertia makes
/// plain semi-implicit Euler gain energy at first order in the step.
pub const ARM_SUBSTEPS: usize = 10;

/// Advances the arm by `dt` in its own frame with [`ARM_SUBSTEPS`]
/// semi-implicit Euler sub-steps, end stops included. `f_ee` and `g_arm` are
/// arm-frame vectors held over the step.
pub fn arm_step(params: &ArmParams<f64>, arm: &mut ArmState<f64>, f_ee: &Vector3<f64>, g_arm: &Vector3<f64>, tip_mass: f64, dt: f64) {
    let h = dt / ARM_SUBSTEPS as f64;
    for _ in 0..ARM_SUBSTEPS {
        let stop = params.joint_stop_torque(&arm.q, &arm.q_dot);
        let q_ddot = forward_dynamics_ext(params, &arm.q, &arm.q_dot, f_ee, g_arm, tip_mass, &stop);
        arm.q_dot += q_ddot * h;
        arm.q += arm.q_dot * h;
    }
}

pub fn gravity_vec() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// One quadruped: trunk state, feet, passive arm and its controller.
pub struct SimRobot {
    pub controller: LocomotionController<f64>,
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    /// Base-frame angular velocity.
    pub omega: Vector3<f64>,
    pub feet: [Vector3<f64>; NUM_LEGS],
    pub contacts: [bool; NUM_LEGS],
    pub arm: ArmState<f64>,
    /// Payload mass lumped at the hook, kg.
    pub tip_mass: f64,
    pub output: ControlOutput<f64>,
    /// Last base acceleration, world frame.
    pub acceleration: Vector3<f64>,
    /// Force the coupling puts on the hook (and through the arm on the
    /// base), world frame, including any lumped payload share.
    pub hook_force: Vector3<f64>,
    hook_velocity: Vector3<f64>,
    hook_acceleration: Vector3<f64>,
    omega_dot: Vector3<f64>,
}

impl SimRobot {
    /// Standing robot with its feet at the home positions (shifted by
    /// `foot_offset`, horizontal frame) on `terrain`.
    pub fn new(
        config: ControllerConfig<f64>,
        xy: Vector2<f64>,
        yaw: f64,
        arm_q: Vector3<f64>,
        foot_offset: Vector2<f64>,
        terrain: &Terrain,
    ) -> Result<Self, SimError> {
        let mass = config.mpc.mass;
        let inertia = box_inertia(mass, &config.mpc.body_dims);
        let inertia_inv = inverse3(&inertia).ok_or_else(|| SimError::Setup("singular inertia".into()))?;
        let attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        let rot = attitude.to_rotation_matrix().into_inner();
        let feet: [Vector3<f64>; NUM_LEGS] = std::array::from_fn(|leg| {
            let h = config.gait.home_positions[leg];
            let p = rot * Vector3::new(h.x + foot_offset.x, h.y + foot_offset.y, 0.0);
            let (x, y) = (xy.x + p.x, xy.y + p.y);
            Vector3::new(x, y, terrain.height(x, y))
        });
        let ground = feet.iter().map(|p| p.z).sum::<f64>() / NUM_LEGS as f64;
        let position = Vector3::new(xy.x, xy.y, ground + config.body_height);
        let controller = LocomotionController::new(config).map_err(|source| SimError::Controller { t: 0.0, source })?;
        let mut robot = Self {
            controller,
            mass,
            inertia,
            inertia_inv,
            position,
            velocity: Vector3::zeros(),
            attitude,
            omega: Vector3::zeros(),
            feet,
            contacts: [true; NUM_LEGS],
            arm: ArmState { q: arm_q, q_dot: Vector3::zeros() },
            tip_mass: 0.0,
            output: ControlOutput { contacts: [true; NUM_LEGS], forces: [Vector3::zeros(); NUM_LEGS], swing_feet: [None; NUM_LEGS] },
            acceleration: Vector3::zeros(),
            hook_force: Vector3::zeros(),
            hook_velocity: Vector3::zeros(),
            hook_acceleration: Vector3::zeros(),
            omega_dot: Vector3::zeros(),
        };
        robot.hook_velocity = robot.hook_velocity_now();
        Ok(robot)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.attitude.to_rotation_matrix().into_inner()
    }

    pub fn euler(&self) -> Vector3<f64> {
        matrix_to_euler_zyx(&self.rotation())
    }

    /// World rotation of the arm base frame.
    pub fn arm_rotation(&self) -> Matrix3<f64> {
        self.rotation() * self.controller.config.mount.rotation()
    }

    /// Hook position relative to the CoM, base frame.
    fn hook_in_base(&self) -> Vector3<f64> {
        let frames = forward_kinematics(&self.controller.config.arm, &self.arm.q);
        self.controller.config.mount.to_base(&frames.ee_position())
    }

    pub fn hook(&self) -> Vector3<f64> {
        self.position + self.rotation() * self.hook_in_base()
    }

    fn hook_velocity_now(&self) -> Vector3<f64> {
        let frames = forward_kinematics(&self.controller.config.arm, &self.arm.q);
        let p_b = self.controller.config.mount.to_base(&frames.ee_position());
        let rot = self.rotation();
        self.velocity + rot * self.omega.cross(&p_b) + self.arm_rotation() * (frames.jacobian() * self.arm.q_dot)
    }

    pub fn hook_velocity(&self) -> Vector3<f64> {
        self.hook_velocity
    }

    pub fn hook_acceleration(&self) -> Vector3<f64> {
        self.hook_acceleration
    }

    pub fn measurement(&self, t: f64) -> Measurement<f64> {
        Measurement {
            t,
            euler: self.euler(),
            position: self.position,
            omega: self.omega,
            velocity: self.velocity,
            feet: self.feet,
            arm: self.arm,
        }
    }

    pub fn stance_ground(&self) -> f64 {
        let (s, n) = (0..NUM_LEGS).filter(|l| self.contacts[*l]).fold((0.0, 0.0), |(s, n), l| (s + self.feet[l].z, n + 1.0));
        if n > 0.0 {
            s / n
        } else {
            self.feet.iter().map(|p| p.z).sum::<f64>() / NUM_LEGS as f64
        }
    }

    /// True when the trunk has tipped over or collapsed.
    pub fn fallen(&self) -> bool {
        let e = self.euler();
        e.x.abs() > 0.6 || e.y.abs() > 0.6 || self.position.z - self.stance_ground() < 0.15
    }

    /// Runs the controller; binds touching-down feet to the terrain first.
    fn control(&mut self, t: f64, terrain: &Terrain) -> Result<(), SimError> {
        let stance = self.controller.schedule().contact_state(t).stance;
        for leg in 0..NUM_LEGS {
            if stance[leg] && !self.contacts[leg] {
                let p = &mut self.feet[leg];
                p.z = terrain.height(p.x, p.y);
            }
        }
        self.contacts = stance;
        let m = self.measurement(t);
        self.output = self.controller.update(&m).map_err(|source| SimError::Controller { t, source })?;
        for leg in 0..NUM_LEGS {
            if !self.contacts[leg] {
                if let Some(p) = self.output.swing_feet[leg] {
                    self.feet[leg] = p;
                }
            }
        }
        Ok(())
    }

    /// Advances trunk and arm by `dt` under the coupling force `f_hook`
    /// (world frame) acting on the hook through the arm.
    fn integrate(&mut self, dt: f64, f_arm: &Vector3<f64>) {
        let rot = self.rotation();
        let hook_b = self.hook_in_base();
        let hook_rel = rot * hook_b;

        let mut force = gravity_vec() * self.mass + self.hook_force;
        let mut torque = hook_rel.cross(&self.hook_force);
        for leg in 0..NUM_LEGS {
            if self.contacts[leg] {
                let f = self.output.forces[leg];
                force += f;
                torque += (self.feet[leg] - self.position).cross(&f);
            }
        }
        let acc = force / self.mass;
        let tau_b = rot.transpose() * torque;
        let omega_dot = self.inertia_inv * (tau_b - self.omega.cross(&(self.inertia * self.omega)));

        // arm in its accelerating mount frame
        let mount = self.controller.config.mount;
        let rho = mount.position;
        let acc_mount = acc + rot * (omega_dot.cross(&rho) + self.omega.cross(&self.omega.cross(&rho)));
        let r_a = rot * mount.rotation();
        let g_arm = r_a.transpose() * (gravity_vec() - acc_mount);
        let f_arm_local = r_a.transpose() * f_arm;
        arm_step(&self.controller.config.arm, &mut self.arm, &f_arm_local, &g_arm, self.tip_mass, dt);

        self.velocity += acc * dt;
        self.position += self.velocity * dt;
        self.omega += omega_dot * dt;
        self.attitude *= UnitQuaternion::from_scaled_axis(self.omega * dt);
        self.acceleration = acc;
        self.omega_dot = omega_dot;

        let hv = self.hook_velocity_now();
        // raw differences feed back through the base within one step and
        // diverge under heavy tip loads, so the share sees a filtered value
        let raw = (hv - self.hook_velocity) / dt;
        let alpha = 1.0 - (-2.0 * std::f64::consts::PI * HOOK_ACC_CUTOFF_HZ * dt).exp();
        self.hook_acceleration += (raw - self.hook_acceleration) * alpha;
        self.hook_velocity = hv;
    }

    fn check(&self, t: f64) -> Result<(), SimError> {
        let finite = self.position.iter().chain(self.velocity.iter()).chain(self.omega.iter()).all(|v| v.is_finite())
            && self.arm.is_finite();
        if !finite {
            return Err(SimError::NumericalDivergence { t, what: "non-finite robot state".into() });
        }
        if self.position.norm() > 100.0 {
            return Err(SimError::NumericalDivergence { t, what: format!("|r| = {:.1} m", self.position.norm()) });
        }
        if self.arm.q_dot.amax() > 100.0 {
            return Err(SimError::NumericalDivergence { t, what: format!("|q̇_a| = {:.1} rad/s", self.arm.q_dot.amax()) });
        }
        Ok(())
    }

    /// Physical ZMP on the stance-ground plane and its depth inside the
    /// support polygon inset by `margin`.
    pub fn zmp(&self, margin: f64) -> Option<(Vector2<f64>, f64)> {
        let ground = self.stance_ground();
        let mut r = self.position;
        r.z -= ground;
        let mut hook = self.hook();
        hook.z -= ground;
        let p = zmp(&r, &self.acceleration, &hook, &self.hook_force, self.mass).ok()?;
        let poly = SupportPolygon::from_feet(&self.feet, &self.contacts, margin).ok()?;
        Some((p, poly.depth(&p)))
    }
}

/// Scripted human hand holding the leader end of the bar.
#[derive(Debug, Clone)]
pub struct HumanHand {
    pub script: LeaderScript,
    /// Hand height above the terrain under it, m.
    pub height: f64,
    pub filter: LowPass,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Force the bar puts on the hand, world frame.
    pub force: Vector3<f64>,
}

impl HumanHand {
    fn target(&self, t: f64, terrain: &Terrain) -> Vector3<f64> {
        let p = self.script.sample(t).position;
        Vector3::new(p.x, p.y, terrain.height(p.x, p.y) + self.height)
    }

    fn step(&mut self, t: f64, dt: f64, terrain: &Terrain) {
        let target = self.target(t, terrain);
        let next = self.filter.step(&target, dt);
        self.velocity = (next - self.position) / dt;
        self.position = next;
    }
}

pub enum Leader {
    Robot { robot: Box<SimRobot>, script: LeaderScript, tracking: LeaderTracking },
    Human(HumanHand),
}

impl Leader {
    pub fn robot(&self) -> Option<&SimRobot> {
        match self {
            Leader::Robot { robot, .. } => Some(robot),
            Leader::Human(_) => None,
        }
    }

    pub fn hook(&self) -> Vector3<f64> {
        match self {
            Leader::Robot { robot, .. } => robot.hook(),
            Leader::Human(h) => h.position,
        }
    }

    pub fn hook_velocity(&self) -> Vector3<f64> {
        match self {
            Leader::Robot { robot, .. } => robot.hook_velocity(),
            Leader::Human(h) => h.velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    None,
    /// Payload lumped at the bar midpoint, half its mass at each hook.
    Bar { bar: BarParams, mass: f64 },
    /// Point-mass payload hanging from one rope per hook.
    Rope { rope: RopeParams, mass: f64 },
}

/// Penalty contact keeping a dropped payload above the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundContact {
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for GroundContact {
    fn default() -> Self {
        Self { stiffness: 2e4, damping: 200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payload {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Tension of the follower-side and leader-side ropes, N.
    pub tensions: [f64; 2],
}

pub struct World {
    pub t: f64,
    pub dt: f64,
    pub terrain: Terrain,
    pub follower: SimRobot,
    pub leader: Leader,
    pub coupling: Coupling,
    pub payload: Payload,
    pub ground: GroundContact,
}

impl World {
    /// Fills in payload state and lumped masses from the current hooks.
    pub fn initialize_payload(&mut self) {
        let (a, b) = (self.follower.hook(), self.leader.hook());
        match self.coupling {
            Coupling::None => {
                self.payload.position = (a + b) * 0.5;
                self.payload.velocity = Vector3::zeros();
            }
            Coupling::Bar { mass, .. } => {
                self.follower.tip_mass = 0.5 * mass;
                if let Leader::Robot { robot, .. } = &mut self.leader {
                    robot.tip_mass = 0.5 * mass;
                }
                self.payload.position = (a + b) * 0.5;
                self.payload.velocity = Vector3::zeros();
            }
            Coupling::Rope { rope, mass } => {
                // static hang below the midpoint, ropes stretched by their share
                let half = 0.5 * (b - a).norm();
                let len0 = rope.length;
                let sin_a = (half / len0).min(0.999);
                let cos_a = (1.0 - sin_a * sin_a).sqrt();
                let tension = 0.5 * mass * GRAVITY / cos_a;
                let len = len0 + tension / rope.stiffness;
                let depth = (len * len - half * half).max(0.0).sqrt();
                self.payload.position = (a + b) * 0.5 - Vector3::z() * depth;
                self.payload.velocity = Vector3::zeros();
            }
        }
    }

    /// Payload height above the terrain beneath it.
    pub fn payload_clearance(&self) -> f64 {
        let p = self.payload.position;
        p.z - self.terrain.height(p.x, p.y)
    }

    /// Computes coupling forces, returning the forces acting on the
    /// follower arm and leader arm (excluding lumped masses).
    fn coupling_forces(&mut self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (a, av) = (self.follower.hook(), self.follower.hook_velocity());
        let (b, bv) = (self.leader.hook(), self.leader.hook_velocity());
        match self.coupling {
            Coupling::None => (Vector3::zeros(), Vector3::zeros(), Vector3::zeros()),
            Coupling::Bar { bar, .. } => {
                let f = rigid_bar_force(&a, &av, &b, &bv, &bar);
                self.payload.position = f.payload;
                self.payload.velocity = f.payload_vel;
                (f.on_a, f.on_b, Vector3::zeros())
            }
            Coupling::Rope { rope, mass } => {
                let (p, pv) = (self.payload.position, self.payload.velocity);
                let fa = rope_force(&a, &av, &p, &pv, &rope);
                let fb = rope_force(&b, &bv, &p, &pv, &rope);
                self.payload.tensions = [fa.norm(), fb.norm()];
                let mut on_payload = -(fa + fb) + gravity_vec() * mass;
                let pen = self.terrain.height(p.x, p.y) - p.z;
                if pen > 0.0 {
                    let n = self.terrain.normal(p.x, p.y);
                    let fz = (self.ground.stiffness * pen - self.ground.damping * pv.dot(&n)).max(0.0);
                    on_payload += n * fz;
                }
                (fa, fb, on_payload)
            }
        }
    }

    /// Advances the world by one physics step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.t;
        let dt = self.dt;
        if let Leader::Robot { robot, script, tracking } = &mut self.leader {
            let yaw = robot.euler().z;
            let (v, w) = leader_command(script, tracking, t, &robot.position.xy(), yaw);
            robot.controller.set_leader_command(v, w);
        }

        let (f_a, f_b, f_payload) = self.coupling_forces();
        let lumped = match self.coupling {
            Coupling::Bar { mass, .. } => 0.5 * mass,
            _ => 0.0,
        };
        let g = gravity_vec();
        self.follower.hook_force = f_a + payload_share(lumped, &self.follower.hook_acceleration, &g);

        self.follower.control(t, &self.terrain)?;
        match &mut self.leader {
            Leader::Robot { robot, .. } => {
                robot.hook_force = f_b + payload_share(lumped, &robot.hook_acceleration, &g);
                robot.control(t, &self.terrain)?;
            }
            Leader::Human(h) => h.force = f_b,
        }

        self.follower.integrate(dt, &f_a);
        match &mut self.leader {
            Leader::Robot { robot, .. } => robot.integrate(dt, &f_b),
            Leader::Human(h) => h.step(t + dt, dt, &self.terrain),
        }
        if let Coupling::Rope { mass, .. } = self.coupling {
            self.payload.velocity += f_payload / mass * dt;
            self.payload.position += self.payload.velocity * dt;
        }
        self.t = t + dt;

        self.follower.check(self.t)?;
        if let Some(r) = self.leader.robot() {
            r.check(self.t)?;
        }
        let p = &self.payload;
        if !(p.position.iter().chain(p.velocity.iter()).all(|v| v.is_finite())) || p.position.norm() > 100.0 {
            return Err(SimError::NumericalDivergence { t: self.t, what: "payload state".into() });
        }
        Ok(())
    }

    pub fn robots(&self) -> impl Iterator<Item = &SimRobot> {
        std::iter::once(&self.follower).chain(self.leader.robot())
    }

    pub fn any_fallen(&self) -> bool {
        self.robots().any(|r| r.fallen())
    }
}
