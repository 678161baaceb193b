//! Per-robot control loop tying together the hook-force estimator, the
//! follower guidance, the crawl schedule with foothold planning, and the MPC.

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};
use thiserror::Error;

use crate::arm::{effective_cartesian_stiffness, forward_kinematics, pendulum_angle, ArmError, ArmMount, ArmParams, ArmState, EeWrenchEstimate, ForceEstimator};
use crate::gait::{foothold_z, support_correction, swing_trajectory, GaitError, GaitParams, GaitSchedule, InclinationEstimator, NUM_LEGS};
use crate::geometry::{euler_zyx_to_matrix, rot_z};
use crate::guidance::{Guidance, GuidanceParams, VelocityCommand};
use crate::mpc::{
    build_reference, DisturbanceModel, InputVec, MpcConfig, MpcError, MpcProblem, MpcSolver, ReferenceCommand, RobotState,
    SolveStatus, IDX_EULER, IDX_FEET, IDX_FORCE, IDX_POS,
};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Gait(#[from] GaitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Velocity commands come from the arm through the guidance law.
    Follower,
    /// Velocity commands are set externally.
    Leader,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig<T: Real> {
    pub mpc: MpcConfig<T>,
    pub gait: GaitParams<T>,
    pub guidance: GuidanceParams<T>,
    pub arm: ArmParams<T>,
    pub mount: ArmMount<T>,
    pub role: Role,
    /// Shift footholds by the hook-load support correction.
    pub foothold_adjustment: bool,
    /// Predict the hook wrench along the horizon from the arm stiffness.
    pub disturbance_prediction: bool,
    /// Estimator and guidance period, s.
    pub estimation_period: T,
    /// Desired CoM height above the terrain plane, m.
    pub body_height: T,
}

impl<T: Real> Default for ControllerConfig<T> {
    fn default() -> Self {
        let gait = GaitParams::default();
        let body_height = gait.nominal_height();
        Self {
            mpc: MpcConfig::default(),
            gait,
            guidance: GuidanceParams::default(),
            arm: ArmParams::default(),
            mount: ArmMount::front(T::lit(0.30), T::lit(0.05)),
            role: Role::Follower,
            foothold_adjustment: true,
            disturbance_prediction: true,
            estimation_period: T::lit(0.004),
            body_height,
        }
    }
}

/// What the controller reads from the robot each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T: Real> {
    pub t: T,
    pub euler: Vector3<T>,
    pub position: Vector3<T>,
    /// Base-frame angular velocity.
    pub omega: Vector3<T>,
    pub velocity: Vector3<T>,
    /// World-frame foot positions.
    pub feet: [Vector3<T>; NUM_LEGS],
    pub arm: ArmState<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput<T: Real> {
    pub contacts: [bool; NUM_LEGS],
    /// World-frame ground reaction forces (zero for swinging legs).
    pub forces: [Vector3<T>; NUM_LEGS],
    /// Desired world position of each swinging foot.
    pub swing_feet: [Option<Vector3<T>>; NUM_LEGS],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SwingPlan<T: Real> {
    start: Vector3<T>,
    target: Vector3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T: Real> {
    pub command: VelocityCommand<T>,
    pub wrench: Option<EeWrenchEstimate<T>>,
    /// Hook world position.
    pub hook: Vector3<T>,
    pub slack_norm: T,
    pub solve_ms: f64,
    pub qp_iterations: usize,
    pub kkt_residual: T,
    pub status: Option<SolveStatus>,
    pub solves: usize,
    pub fallbacks: usize,
}

pub struct LocomotionController<T: Real> {
    pub config: ControllerConfig<T>,
    schedule: GaitSchedule<T>,
    guidance: Guidance<T>,
    estimator: ForceEstimator<T>,
    solver: MpcSolver<T>,
    inclination: InclinationEstimator<T>,
    leader_command: (T, T),
    last_estimate_t: Option<T>,
    last_solve_t: Option<T>,
    contacts: Option<[bool; NUM_LEGS]>,
    input: InputVec<T>,
    swings: [Option<SwingPlan<T>>; NUM_LEGS],
    diag: Diagnostics<T>,
}

impl<T: Real> LocomotionController<T> {
    pub fn new(config: ControllerConfig<T>) -> Result<Self, ControllerError> {
        config.gait.validate()?;
        config.arm.validate()?;
        let solver = MpcSolver::new(config.mpc.clone())?;
        Ok(Self {
            schedule: GaitSchedule::new(config.gait.clone()),
            guidance: Guidance::new(config.guidance.clone()),
            estimator: ForceEstimator::default(),
            solver,
            inclination: InclinationEstimator::default(),
            leader_command: (T::zero(), T::zero()),
            last_estimate_t: None,
            last_solve_t: None,
            contacts: None,
            input: InputVec::zeros(),
            swings: [None; NUM_LEGS],
            diag: Diagnostics {
                command: VelocityCommand::default(),
                wrench: None,
                hook: Vector3::zeros(),
                slack_norm: T::zero(),
                solve_ms: 0.0,
                qp_iterations: 0,
                kkt_residual: T::zero(),
                status: None,
                solves: 0,
                fallbacks: 0,
            },
            config,
        })
    }

    pub fn schedule(&self) -> &GaitSchedule<T> {
        &self.schedule
    }

    pub fn diagnostics(&self) -> &Diagnostics<T> {
        &self.diag
    }

    /// Sets the commanded forward speed and yaw rate for a leader.
    pub fn set_leader_command(&mut self, v_forward: T, yaw_rate: T) {
        self.leader_command = (v_forward, yaw_rate);
    }

    /// Velocity command currently tracked: scripted for a leader, guided for a follower.
    pub fn command(&self) -> (T, T) {
        match self.config.role {
            Role::Leader => self.leader_command,
            Role::Follower => (self.diag.command.v_forward_filtered, self.diag.command.yaw_rate_filtered),
        }
    }

    /// Hook world position for a measured pose.
    pub fn hook_position(&self, m: &Measurement<T>) -> Vector3<T> {
        let rot = euler_zyx_to_matrix(&m.euler);
        let frames = forward_kinematics(&self.config.arm, &m.arm.q);
        m.position + rot * self.config.mount.to_base(&frames.ee_position())
    }

    fn estimate(&mut self, m: &Measurement<T>) -> Result<(), ControllerError> {
        let due = match self.last_estimate_t {
            None => true,
            Some(t0) => m.t - t0 >= self.config.estimation_period - T::lit(1e-9),
        };
        if !due {
            return Ok(());
        }
        let dt = match self.last_estimate_t {
            Some(t0) => m.t - t0,
            None => self.config.estimation_period,
        };
        self.last_estimate_t = Some(m.t);
        let rot = euler_zyx_to_matrix(&m.euler);
        let est = self.estimator.update(m.t, &self.config.arm, &self.config.mount, &m.arm, &rot)?;
        self.diag.wrench = Some(est);
        if self.config.role == Role::Follower {
            let frames = forward_kinematics(&self.config.arm, &m.arm.q);
            let r_a_w = rot * self.config.mount.rotation();
            let theta = pendulum_angle(&frames, &r_a_w);
            self.diag.command = self.guidance.update(theta, m.arm.q.x, dt);
        } else {
            let (v, w) = self.leader_command;
            self.diag.command = VelocityCommand { v_forward_raw: v, v_forward_filtered: v, yaw_rate_raw: w, yaw_rate_filtered: w };
        }
        Ok(())
    }

    fn ground_height(&self, feet: &[Vector3<T>; NUM_LEGS], contacts: &[bool; NUM_LEGS]) -> T {
        let (mut s, mut n) = (T::zero(), T::zero());
        for leg in 0..NUM_LEGS {
            if contacts[leg] {
                s += feet[leg].z;
                n += T::one();
            }
        }
        if n > T::zero() {
            s / n
        } else {
            feet.iter().map(|p| p.z).sum::<T>() / T::lit(NUM_LEGS as f64)
        }
    }

    /// Horizontal-frame offset of a foothold from the CoM: home position,
    /// half a stance of travel, and (optionally) the hook-load correction.
    fn foothold_offset(&self, leg: usize, v_forward: T, yaw: T, m: &Measurement<T>, ground: T) -> Result<Vector2<T>, ControllerError> {
        let g = &self.config.gait;
        let mut off = g.home_positions[leg].xy() + Vector2::new(v_forward, T::zero()) * (T::lit(0.5) * g.stance_duration());
        if self.config.foothold_adjustment {
            if let Some(w) = &self.diag.wrench {
                let r_h = rot_z(yaw);
                let f_h = r_h.transpose() * w.f_ext;
                let mut p_h = r_h.transpose() * (self.diag.hook - m.position);
                p_h.z = self.diag.hook.z - ground;
                off += support_correction(&f_h, &p_h, self.config.mpc.mass)?;
            }
        }
        Ok(off)
    }

    fn plan_swing(&mut self, leg: usize, m: &Measurement<T>, ground: T) -> Result<(), ControllerError> {
        let (v, _) = self.command();
        let yaw = m.euler.z;
        let r_h = rot_z(yaw);
        let off = self.foothold_offset(leg, v, yaw, m, ground)?;
        let v_f = Vector3::new(v, T::zero(), T::zero());
        let dt_sw = self.config.gait.swing_duration();
        let xy = r_h * Vector3::new(off.x, off.y, T::zero()) + m.position + r_h * v_f * dt_sw;
        let v_world = r_h * v_f;
        let z = foothold_z(m.feet[leg].z, self.inclination.vertical_velocity(&v_world), &self.config.gait);
        self.swings[leg] = Some(SwingPlan { start: m.feet[leg], target: Vector3::new(xy.x, xy.y, z) });
        Ok(())
    }

    pub fn update(&mut self, m: &Measurement<T>) -> Result<ControlOutput<T>, ControllerError> {
        self.diag.hook = self.hook_position(m);
        self.estimate(m)?;
        let state = self.schedule.contact_state(m.t);
        let contacts = state.stance;
        let ground = self.ground_height(&m.feet, &contacts);

        let changed = self.contacts.map_or(true, |c| c != contacts);
        if let Some(prev) = self.contacts {
            for leg in 0..NUM_LEGS {
                if prev[leg] && !contacts[leg] {
                    self.plan_swing(leg, m, ground)?;
                } else if !prev[leg] && contacts[leg] {
                    self.inclination.push(m.feet[leg]);
                    self.swings[leg] = None;
                }
            }
        } else {
            for leg in 0..NUM_LEGS {
                if contacts[leg] {
                    self.inclination.push(m.feet[leg]);
                } else {
                    self.plan_swing(leg, m, ground)?;
                }
            }
        }
        self.contacts = Some(contacts);

        let due = match self.last_solve_t {
            None => true,
            Some(t0) => m.t - t0 >= self.config.mpc.dt - T::lit(1e-9),
        };
        if due || changed {
            self.solve(m, ground)?;
        }

        let mut out = ControlOutput { contacts, forces: [Vector3::zeros(); NUM_LEGS], swing_feet: [None; NUM_LEGS] };
        for leg in 0..NUM_LEGS {
            if contacts[leg] {
                out.forces[leg] = self.input.fixed_rows::<3>(IDX_FORCE + 3 * leg).into();
            } else if let Some(plan) = &self.swings[leg] {
                out.swing_feet[leg] =
                    Some(swing_trajectory(&plan.start, &plan.target, state.swing_progress[leg], self.config.gait.step_height));
            }
        }
        Ok(out)
    }

    fn solve(&mut self, m: &Measurement<T>, ground: T) -> Result<(), ControllerError> {
        let cfg = &self.config.mpc;
        let n = cfg.horizon;
        let dt = cfg.dt;
        let mut x0 = RobotState { euler: m.euler, position: m.position, omega: m.omega, velocity: m.velocity, feet: m.feet, disturbance: Vector6::zeros() };
        if let Some(w) = &self.diag.wrench {
            x0.disturbance = Vector6::new(w.f_ext.x, w.f_ext.y, w.f_ext.z, w.tau_ext.x, w.tau_ext.y, w.tau_ext.z);
        }
        let x0 = x0.to_vector();
        let (v, w) = self.command();
        let (a, b, _) = self.inclination.plane();
        let c = ground - a * m.position.x - b * m.position.y;
        let cmd = ReferenceCommand { v_forward: v, yaw_rate: w, height: self.config.body_height, plane: (a, b, c) };
        let mut reference = build_reference(&cmd, &x0, n, dt);
        let contacts: Vec<[bool; NUM_LEGS]> = self.schedule.contact_sequence(m.t, n, dt);

        // planned foot positions along the horizon
        for leg in 0..NUM_LEGS {
            let next_td = self.schedule.next_touch_down(leg, m.t);
            let next_lo = self.schedule.next_lift_off(leg, m.t);
            let swinging = !contacts[0][leg];
            let current_target = self.swings[leg].map(|s| s.target);
            let future_target = {
                let k = ((next_td - m.t) / dt).round().to_usize().unwrap_or(n).min(n);
                let r = &reference[k];
                let yaw = r[IDX_EULER + 2];
                let off = self.foothold_offset(leg, v, yaw, m, ground)?;
                let xy = rot_z(yaw) * Vector3::new(off.x, off.y, T::zero());
                Vector3::new(r[IDX_POS] + xy.x, r[IDX_POS + 1] + xy.y, m.feet[leg].z)
            };
            for (k, refk) in reference.iter_mut().enumerate() {
                let tk = m.t + dt * T::lit(k as f64);
                let p = if swinging {
                    current_target.unwrap_or(future_target)
                } else if tk < next_lo {
                    m.feet[leg]
                } else {
                    future_target
                };
                refk.fixed_rows_mut::<3>(IDX_FEET + 3 * leg).copy_from(&p);
            }
        }

        let disturbance = if self.config.disturbance_prediction {
            let rot = euler_zyx_to_matrix(&m.euler);
            let r_a_w: Matrix3<T> = rot * self.config.mount.rotation();
            match effective_cartesian_stiffness(&self.config.arm, &m.arm.q, &r_a_w) {
                Ok(k) => DisturbanceModel::new(k, &self.diag.hook, &m.position),
                Err(_) => DisturbanceModel::default(),
            }
        } else {
            DisturbanceModel::default()
        };
        let problem = MpcProblem { x0, reference, contacts, disturbance, p_ee: self.diag.hook };
        let shift = match self.last_solve_t {
            Some(t0) => ((m.t - t0) / dt).round().to_usize().unwrap_or(0),
            None => 0,
        };
        self.last_solve_t = Some(m.t);
        let sol = self.solver.solve(&problem, shift)?;
        self.diag.solves += 1;
        if sol.status == SolveStatus::InfeasibleQp {
            self.diag.fallbacks += 1;
        }
        self.input = sol.inputs[0];
        self.diag.slack_norm = sol.slack_norm();
        self.diag.solve_ms = sol.solve_time.as_secs_f64() * 1e3;
        self.diag.qp_iterations = sol.qp_iterations;
        self.diag.kkt_residual = sol.kkt_residual;
        self.diag.status = Some(sol.status);
        Ok(())
    }
}
