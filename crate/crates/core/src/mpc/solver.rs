use std::time::{Duration, Instant};

use nalgebra::{SMatrix, Vector2, Vector3};

use super::qp::{solve_qp, QpProblem, QpSettings, QpStatus};
use super::{
    active_inputs, discrete_step, gate_input, linearize, zmp_from_state, DisturbanceModel, InputVec, MpcConfig, MpcError,
    SrbdParams, StateVec, SupportPolygon, IDX_DIST, IDX_EULER, IDX_FEET, IDX_FORCE, IDX_POS, NX,
};
use crate::dual::Dual;
use crate::gait::NUM_LEGS;
use crate::geometry::wrap_angle;
use crate::scalar::{gravity, Real};

const NA: usize = 12;

/// One horizon's worth of data handed to [`MpcSolver::solve`].
#[derive(Debug, Clone)]
pub struct MpcProblem<T: Real> {
    /// Measured state; its disturbance rows carry the current hook wrench.
    pub x0: StateVec<T>,
    /// Desired states for steps `0..=n`. The foot entries double as the
    /// planned stance positions used to build each step's support polygon.
    pub reference: Vec<StateVec<T>>,
    /// Contact flags for steps `0..n`.
    pub contacts: Vec<[bool; NUM_LEGS]>,
    pub disturbance: DisturbanceModel<T>,
    /// Hook world position, held along the horizon.
    pub p_ee: Vector3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    InfeasibleQp,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max-iter",
            SolveStatus::InfeasibleQp => "infeasible-qp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcSolution<T: Real> {
    /// Predicted states for steps `0..=n`.
    pub states: Vec<StateVec<T>>,
    /// Inputs for steps `0..n`.
    pub inputs: Vec<InputVec<T>>,
    /// ZMP slack per step, `≥ 0`.
    pub slacks: Vec<T>,
    pub status: SolveStatus,
    pub qp_iterations: usize,
    pub kkt_residual: T,
    pub solve_time: Duration,
}

impl<T: Real> MpcSolution<T> {
    pub fn slack_norm(&self) -> T {
        self.slacks.iter().map(|s| *s * *s).sum::<T>().sqrt()
    }

    pub fn first_input(&self) -> &InputVec<T> {
        &self.inputs[0]
    }
}

/// Real-time-iteration solver: each call linearizes the model and the ZMP
/// constraint about the shifted previous solution, condenses the states out,
/// and solves one dense QP over the free inputs and the ZMP slacks.
#[derive(Debug, Clone)]
pub struct MpcSolver<T: Real> {
    pub config: MpcConfig<T>,
    params: SrbdParams<T>,
    previous: Option<(Vec<StateVec<T>>, Vec<InputVec<T>>)>,
}

struct StepData<T: Real> {
    active: Vec<usize>,
    a: SMatrix<T, NX, NX>,
    b: SMatrix<T, NX, NA>,
    defect: StateVec<T>,
}

impl<T: Real> MpcSolver<T> {
    pub fn new(config: MpcConfig<T>) -> Result<Self, MpcError> {
        config.validate()?;
        let params = SrbdParams::from_config(&config)?;
        Ok(Self { config, params, previous: None })
    }

    pub fn params(&self) -> &SrbdParams<T> {
        &self.params
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Force that splits the supported weight evenly over the stance legs.
    fn force_reference(&self, contacts: &[bool; NUM_LEGS], d_z: T) -> InputVec<T> {
        let n = contacts.iter().filter(|c| **c).count();
        let mut u = InputVec::zeros();
        if n == 0 {
            return u;
        }
        let fz = (self.params.mass * gravity::<T>() - d_z) / T::lit(n as f64);
        for leg in 0..NUM_LEGS {
            if contacts[leg] {
                u[IDX_FORCE + 3 * leg + 2] = fz;
            }
        }
        u
    }

    fn initial_guess(&self, p: &MpcProblem<T>, shift: usize, u_ref: &[InputVec<T>]) -> Result<(Vec<StateVec<T>>, Vec<InputVec<T>>), MpcError> {
        let n = self.config.horizon;
        let mut xs: Vec<StateVec<T>>;
        let mut us: Vec<InputVec<T>>;
        match &self.previous {
            Some((px, pu)) if px.len() == n + 1 && pu.len() == n => {
                xs = (0..=n).map(|k| px[(k + shift).min(n)]).collect();
                us = (0..n).map(|k| pu[(k + shift).min(n - 1)]).collect();
                for (k, u) in us.iter_mut().enumerate() {
                    for leg in 0..NUM_LEGS {
                        // newly loaded legs start from the even split
                        if p.contacts[k][leg] && u.fixed_rows::<3>(IDX_FORCE + 3 * leg).iter().all(|v| *v == T::zero()) {
                            u.fixed_rows_mut::<3>(IDX_FORCE + 3 * leg).copy_from(&u_ref[k].fixed_rows::<3>(IDX_FORCE + 3 * leg));
                        }
                    }
                    gate_input(u, &p.contacts[k]);
                }
                xs[0] = p.x0;
                let yaw0 = p.x0[IDX_EULER + 2];
                for x in xs.iter_mut().skip(1) {
                    x[IDX_EULER + 2] = yaw0 + wrap_angle(x[IDX_EULER + 2] - yaw0);
                    // the measured wrench replaces the stale prediction
                    for i in 0..6 {
                        x[IDX_DIST + i] = p.x0[IDX_DIST + i];
                    }
                }
            }
            _ => {
                us = u_ref.to_vec();
                xs = Vec::with_capacity(n + 1);
                xs.push(p.x0);
                for k in 0..n {
                    let next = discrete_step(&xs[k], &us[k], &p.contacts[k], &self.params, &p.disturbance, self.config.dt)?;
                    xs.push(next);
                }
            }
        }
        Ok((xs, us))
    }

    /// Solves one horizon. `shift` is the number of MPC steps elapsed since
    /// the previous call and aligns the warm start.
    pub fn solve(&mut self, p: &MpcProblem<T>, shift: usize) -> Result<MpcSolution<T>, MpcError> {
        let start = Instant::now();
        let n = self.config.horizon;
        if p.reference.len() != n + 1 || p.contacts.len() != n {
            return Err(MpcError::InvalidConfig(format!(
                "problem sized for {} steps, horizon is {n}",
                p.contacts.len()
            )));
        }
        if p.x0.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::NonFinite("initial state"));
        }
        let d_z = p.x0[IDX_DIST + 2];
        let u_ref: Vec<InputVec<T>> = p.contacts.iter().map(|c| self.force_reference(c, d_z)).collect();
        let (mut xs, mut us) = self.initial_guess(p, shift, &u_ref)?;

        let mut result = None;
        for _ in 0..self.config.sqp_iterations {
            let sol = self.qp_pass(p, &xs, &us, &u_ref)?;
            let ok = sol.status != SolveStatus::InfeasibleQp;
            xs = sol.states.clone();
            us = sol.inputs.clone();
            result = Some(sol);
            if !ok {
                break;
            }
        }
        let mut sol = result.expect("at least one pass");
        sol.solve_time = start.elapsed();
        self.previous = Some((sol.states.clone(), sol.inputs.clone()));
        Ok(sol)
    }

    fn qp_pass(
        &self,
        p: &MpcProblem<T>,
        xs: &[StateVec<T>],
        us: &[InputVec<T>],
        u_ref: &[InputVec<T>],
    ) -> Result<MpcSolution<T>, MpcError> {
        let cfg = &self.config;
        let n = cfg.horizon;
        let dt = cfg.dt;

        // linearize each step
        let mut steps: Vec<StepData<T>> = Vec::with_capacity(n);
        for k in 0..n {
            let lin = linearize(&xs[k], &us[k], &p.contacts[k], &self.params, &p.disturbance, dt)?;
            let active = active_inputs(&p.contacts[k]);
            let b = SMatrix::<T, NX, NA>::from_fn(|r, c| lin.b[(r, active[c])]);
            steps.push(StepData { active, a: lin.a, b, defect: lin.next - xs[k + 1] });
        }

        // condensing: Δx_k = h_k + Σ_{j<k} G[k][j] w_j
        let mut h = vec![StateVec::<T>::zeros(); n + 1];
        let mut g: Vec<Vec<SMatrix<T, NX, NA>>> = vec![Vec::new(); n + 1];
        for k in 0..n {
            h[k + 1] = steps[k].a * h[k] + steps[k].defect;
            let mut row = Vec::with_capacity(k + 1);
            for j in 0..k {
                row.push(steps[k].a * g[k][j]);
            }
            row.push(steps[k].b);
            g[k + 1] = row;
        }

        let nw = NA * n;
        let nv = nw + n;
        let mut qp = QpProblem::new(nv);
        let qw = cfg.state_weights();
        let rw = cfg.input_weights();

        // tracking error at the linearization point
        let err: Vec<StateVec<T>> = (0..=n)
            .map(|k| {
                let mut e = xs[k] + h[k] - p.reference[k];
                e[IDX_EULER + 2] = wrap_angle(e[IDX_EULER + 2]);
                e
            })
            .collect();

        let qg: Vec<Vec<SMatrix<T, NX, NA>>> = (0..=n)
            .map(|k| g[k].iter().map(|m| SMatrix::<T, NX, NA>::from_fn(|r, c| qw[r] * m[(r, c)])).collect())
            .collect();

        for j in 0..n {
            // gradient
            let mut gj = nalgebra::SVector::<T, NA>::zeros();
            for k in (j + 1)..=n {
                gj += qg[k][j].transpose() * err[k];
            }
            for a in 0..NA {
                let idx = steps[j].active[a];
                gj[a] += rw[idx] * (us[j][idx] - u_ref[j][idx]);
            }
            for a in 0..NA {
                qp.g[NA * j + a] = gj[a];
            }
            // Hessian blocks (i ≤ j), mirrored
            for i in 0..=j {
                let mut blk = SMatrix::<T, NA, NA>::zeros();
                for k in (j + 1)..=n {
                    blk += g[k][i].transpose() * qg[k][j];
                }
                if i == j {
                    for a in 0..NA {
                        blk[(a, a)] += rw[steps[j].active[a]];
                    }
                }
                for a in 0..NA {
                    for b in 0..NA {
                        let v = blk[(a, b)];
                        qp.h[(NA * i + a) * nv + NA * j + b] = v;
                        qp.h[(NA * j + b) * nv + NA * i + a] = v;
                    }
                }
            }
        }
        for k in 0..n {
            let e = nw + k;
            qp.h[e * nv + e] = cfg.rho;
        }

        // friction pyramid and force bounds on the free forces
        for k in 0..n {
            for leg in 0..NUM_LEGS {
                if !p.contacts[k][leg] {
                    continue;
                }
                let pos = steps[k].active.iter().position(|i| *i == IDX_FORCE + 3 * leg).expect("stance force is free");
                let (ix, iy, iz) = (NA * k + pos, NA * k + pos + 1, NA * k + pos + 2);
                let f: Vector3<T> = us[k].fixed_rows::<3>(IDX_FORCE + 3 * leg).into();
                let mu = cfg.mu;
                for (i, fc) in [(ix, f.x), (iy, f.y)] {
                    qp.add_row(vec![i, iz], vec![T::one(), -mu], -(fc - mu * f.z));
                    qp.add_row(vec![i, iz], vec![-T::one(), -mu], -(-fc - mu * f.z));
                }
                qp.add_row(vec![iz], vec![-T::one()], f.z);
                qp.add_row(vec![iz], vec![T::one()], cfg.f_max - f.z);
            }
        }

        // ZMP inside the inset support polygon, relaxed by the step slack
        for k in 0..n {
            let feet: [Vector3<T>; NUM_LEGS] =
                std::array::from_fn(|leg| p.reference[k].fixed_rows::<3>(IDX_FEET + 3 * leg).into());
            let poly = match SupportPolygon::from_feet(&feet, &p.contacts[k], cfg.zmp_margin) {
                Ok(poly) => poly,
                Err(_) => continue,
            };
            let stance: Vec<usize> = (0..NUM_LEGS).filter(|l| p.contacts[k][*l]).collect();
            let ground = stance.iter().map(|l| feet[*l].z).sum::<T>() / T::lit(stance.len() as f64);
            let (z0, zx, zu) = self.zmp_jacobian(&xs[k], &us[k], &p.contacts[k], &p.p_ee, ground, &steps[k].active)?;
            let zh = zx * h[k];
            for edge in &poly.edges {
                let nrm = edge.normal;
                let mut idx = Vec::with_capacity(NA * (k + 1) + 1);
                let mut val = Vec::with_capacity(NA * (k + 1) + 1);
                let nzx = nrm.transpose() * zx;
                for j in 0..k {
                    let coef = nzx * g[k][j];
                    for a in 0..NA {
                        idx.push(NA * j + a);
                        val.push(coef[a]);
                    }
                }
                let cu = nrm.transpose() * zu;
                for a in 0..NA {
                    idx.push(NA * k + a);
                    val.push(cu[a]);
                }
                idx.push(nw + k);
                val.push(-T::one());
                qp.add_row(idx, val, edge.offset - nrm.dot(&z0) - nrm.dot(&zh));
            }
            qp.add_row(vec![nw + k], vec![-T::one()], T::zero());
        }

        let settings = QpSettings { max_iterations: cfg.qp_max_iterations, tolerance: cfg.qp_tolerance };
        let sol = solve_qp(&qp, &settings, None);
        let status = match sol.status {
            QpStatus::Optimal => SolveStatus::Optimal,
            QpStatus::MaxIterations => SolveStatus::MaxIterations,
            QpStatus::Infeasible => SolveStatus::InfeasibleQp,
        };

        if status == SolveStatus::InfeasibleQp {
            // keep the linearization inputs and roll the model forward
            let mut states = Vec::with_capacity(n + 1);
            states.push(p.x0);
            for k in 0..n {
                let next = discrete_step(&states[k], &us[k], &p.contacts[k], &self.params, &p.disturbance, dt)?;
                states.push(next);
            }
            return Ok(MpcSolution {
                states,
                inputs: us.to_vec(),
                slacks: vec![T::zero(); n],
                status,
                qp_iterations: sol.iterations,
                kkt_residual: sol.kkt_residual,
                solve_time: Duration::ZERO,
            });
        }

        let mut inputs = us.to_vec();
        for k in 0..n {
            for a in 0..NA {
                inputs[k][steps[k].active[a]] += sol.x[NA * k + a];
            }
            gate_input(&mut inputs[k], &p.contacts[k]);
        }
        let mut states = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut dx = h[k];
            for j in 0..k {
                let w = nalgebra::SVector::<T, NA>::from_fn(|a, _| sol.x[NA * j + a]);
                dx += g[k][j] * w;
            }
            states.push(xs[k] + dx);
        }
        let slacks = (0..n).map(|k| sol.x[nw + k].max(T::zero())).collect();
        Ok(MpcSolution {
            states,
            inputs,
            slacks,
            status,
            qp_iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            solve_time: Duration::ZERO,
        })
    }

    /// ZMP value and its Jacobians with respect to the state and the free
    /// inputs at one horizon step.
    #[allow(clippy::type_complexity)]
    fn zmp_jacobian(
        &self,
        x: &StateVec<T>,
        u: &InputVec<T>,
        contacts: &[bool; NUM_LEGS],
        p_ee: &Vector3<T>,
        ground: T,
        active: &[usize],
    ) -> Result<(Vector2<T>, SMatrix<T, 2, NX>, SMatrix<T, 2, NA>), MpcError> {
        let z0 = zmp_from_state(x, u, contacts, &self.params, p_ee, ground)?;
        let pd = SrbdParams {
            mass: Dual::constant(self.params.mass),
            inertia: self.params.inertia.map(Dual::constant),
            inertia_inv: self.params.inertia_inv.map(Dual::constant),
        };
        let xd0: StateVec<Dual<T>> = x.map(Dual::constant);
        let ud0: InputVec<Dual<T>> = u.map(Dual::constant);
        let hook = p_ee.map(Dual::constant);
        let gd = Dual::constant(ground);
        let mut zx = SMatrix::<T, 2, NX>::zeros();
        // only the CoM position and the linear disturbance enter the ZMP
        for j in (IDX_POS..IDX_POS + 3).chain(IDX_DIST..IDX_DIST + 3) {
            let mut xd = xd0;
            xd[j].d = T::one();
            let z = zmp_from_state(&xd, &ud0, contacts, &pd, &hook, gd)?;
            zx[(0, j)] = z.x.d;
            zx[(1, j)] = z.y.d;
        }
        let mut zu = SMatrix::<T, 2, NA>::zeros();
        for (a, &j) in active.iter().enumerate() {
            if j >= IDX_FORCE + 12 {
                continue;
            }
            let mut ud = ud0;
            ud[j].d = T::one();
            let z = zmp_from_state(&xd0, &ud, contacts, &pd, &hook, gd)?;
            zu[(0, a)] = z.x.d;
            zu[(1, a)] = z.y.d;
        }
        Ok((z0, zx, zu))
    }
}
