use approx::assert_relative_eq;
use nalgebra::{Vector3, Vector6};
use pacc_core::gait::{GaitParams, GaitSchedule, NUM_LEGS};
use pacc_core::mpc::{
    build_reference, discrete_step, friction_feasible, linearize, model_derivative, zmp_from_state, ControlInput,
    DisturbanceModel, MpcConfig, MpcProblem, MpcSolver, ReferenceCommand, RobotState, SolveStatus, SrbdParams,
    StateVec, SupportPolygon, IDX_DIST, IDX_POS,
};

fn standing_state() -> RobotState<f64> {
    let mut s = RobotState::default();
    s.position = Vector3::new(0.0, 0.0, 0.35);
    s.feet = [
        Vector3::new(0.24, 0.15, 0.0),
        Vector3::new(0.24, -0.15, 0.0),
        Vector3::new(-0.24, 0.15, 0.0),
        Vector3::new(-0.24, -0.15, 0.0),
    ];
    s
}

fn standstill_problem(cfg: &MpcConfig<f64>, d: Vector6<f64>) -> MpcProblem<f64> {
    let mut s = standing_state();
    s.disturbance = d;
    let x0 = s.to_vector();
    let cmd = ReferenceCommand { v_forward: 0.0, yaw_rate: 0.0, height: 0.35, plane: (0.0, 0.0, 0.0) };
    MpcProblem {
        x0,
        reference: build_reference(&cmd, &x0, cfg.horizon, cfg.dt),
        contacts: vec![[true; NUM_LEGS]; cfg.horizon],
        disturbance: DisturbanceModel::default(),
        p_ee: Vector3::new(0.55, 0.0, 0.35),
    }
}

fn total_fz(u: &pacc_core::mpc::InputVec<f64>) -> f64 {
    (0..NUM_LEGS).map(|l| u[3 * l + 2]).sum()
}

#[test]
fn standstill_balances_weight() {
    let cfg = MpcConfig::default();
    let mut solver = MpcSolver::new(cfg.clone()).unwrap();
    let p = standstill_problem(&cfg, Vector6::zeros());
    let sol = solver.solve(&p, 0).unwrap();
    println!("status {:?} it {} kkt {:e} time {:?}", sol.status, sol.qp_iterations, sol.kkt_residual, sol.solve_time);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.kkt_residual <= 1e-6);
    let fz = total_fz(sol.first_input());
    assert!((fz - 206.01).abs() / 206.01 < 1e-3, "Σf_z = {fz}");
    assert!(sol.slacks.iter().all(|s| *s < 1e-6));
}

#[test]
fn hanging_load_adds_to_vertical_support() {
    let cfg = MpcConfig::default();
    let mut solver = MpcSolver::new(cfg.clone()).unwrap();
    let p = standstill_problem(&cfg, Vector6::new(0.0, 0.0, -34.3, 0.0, 0.0, 0.0));
    let sol = solver.solve(&p, 0).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let fz = total_fz(sol.first_input());
    let want = 206.01 + 34.3;
    assert!((fz - want).abs() / want < 1e-3, "Σf_z = {fz}");
}

#[test]
fn standstill_zmp_keeps_margin() {
    let cfg = MpcConfig::default();
    let mut solver = MpcSolver::new(cfg.clone()).unwrap();
    let p = standstill_problem(&cfg, Vector6::zeros());
    let sol = solver.solve(&p, 0).unwrap();
    let params = SrbdParams::from_config(&cfg).unwrap();
    let feet: [Vector3<f64>; 4] = standing_state().feet;
    let bare = SupportPolygon::from_feet(&feet, &[true; 4], 0.0).unwrap();
    for k in 0..cfg.horizon {
        let z = zmp_from_state(&sol.states[k], &sol.inputs[k], &[true; 4], &params, &p.p_ee, 0.0).unwrap();
        assert!(bare.depth(&z) >= 0.04 - 1e-9, "step {k}: depth {}", bare.depth(&z));
    }
}

#[test]
fn inputs_respect_gating_and_friction() {
    let cfg = MpcConfig::default();
    let mut solver = MpcSolver::new(cfg.clone()).unwrap();
    let mut p = standstill_problem(&cfg, Vector6::new(8.0, -3.0, -20.0, 0.0, 0.0, 0.0));
    let sched = GaitSchedule::new(GaitParams::default());
    p.contacts = sched.contact_sequence(0.05, cfg.horizon, cfg.dt);
    let sol = solver.solve(&p, 0).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    for k in 0..cfg.horizon {
        let u = ControlInput::from_vector(&sol.inputs[k]);
        for leg in 0..NUM_LEGS {
            if p.contacts[k][leg] {
                assert_eq!(u.foot_velocities[leg], Vector3::zeros());
                assert!(friction_feasible(&u.forces[leg], true, cfg.mu, cfg.f_max, 1e-6));
            } else {
                assert_eq!(u.forces[leg], Vector3::zeros());
            }
        }
    }
}

#[test]
fn slack_shrinks_as_penalty_grows() {
    // a large lateral pull makes the ZMP constraint unattainable
    let base = MpcConfig::default();
    let mut last = f64::INFINITY;
    for rho in [1e2, 1e3, 1e4, 1e5] {
        let cfg = MpcConfig { rho, ..base.clone() };
        let mut solver = MpcSolver::new(cfg.clone()).unwrap();
        let p = standstill_problem(&cfg, Vector6::new(0.0, 60.0, -20.0, 0.0, 0.0, 0.0));
        let sol = solver.solve(&p, 0).unwrap();
        let norm = sol.slack_norm();
        assert!(norm > 0.0);
        assert!(norm <= last * (1.0 + 1e-6), "rho {rho}: {norm} > {last}");
        last = norm;
    }
}

#[test]
fn euler_step_matches_model() {
    let cfg = MpcConfig::default();
    let params = SrbdParams::from_config(&cfg).unwrap();
    let x = standing_state().to_vector();
    let mut u = pacc_core::mpc::InputVec::zeros();
    u[2] = 60.0;
    u[5] = 40.0;
    u[8] = 55.0;
    u[11] = 52.0;
    let dist = DisturbanceModel::new(Vector3::new(40.0, 60.0, 5.0), &Vector3::new(0.6, 0.0, 0.4), &x.fixed_rows::<3>(IDX_POS).into());
    let dx = model_derivative(&x, &u, &[true; 4], &params, &dist).unwrap();
    assert_eq!(discrete_step(&x, &u, &[true; 4], &params, &dist, 0.04).unwrap(), x + dx * 0.04);
}

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
}

fn random_state(seed: &mut u64) -> StateVec<f64> {
    let mut x = standing_state().to_vector();
    for i in 0..30 {
        x[i] += 0.3 * lcg(seed);
    }
    for i in 0..6 {
        x[IDX_DIST + i] = 20.0 * lcg(seed);
    }
    x
}

#[test]
fn model_matches_fine_integration() {
    // oracle: RK4 over a tiny interval, differenced
    let cfg = MpcConfig::default();
    let params = SrbdParams::from_config(&cfg).unwrap();
    let mut seed = 7;
    for _ in 0..20 {
        let x = random_state(&mut seed);
        let mut u = pacc_core::mpc::InputVec::zeros();
        for i in 0..24 {
            u[i] = 30.0 * lcg(&mut seed);
        }
        let contacts = [true, false, true, true];
        let dist = DisturbanceModel::new(Vector3::new(40.0, 60.0, 5.0), &Vector3::new(0.6, 0.0, 0.4), &Vector3::zeros());
        let f = |x: &StateVec<f64>| model_derivative(x, &u, &contacts, &params, &dist).unwrap();
        let h = 1e-6;
        let k1 = f(&x);
        let k2 = f(&(x + k1 * (h / 2.0)));
        let k3 = f(&(x + k2 * (h / 2.0)));
        let k4 = f(&(x + k3 * h));
        let x1 = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let fd = (x1 - x) / h;
        assert!((fd - k1).norm() <= 1e-4 * (1.0 + k1.norm()));
    }
}

#[test]
fn jacobians_match_central_differences() {
    let cfg = MpcConfig::default();
    let params = SrbdParams::from_config(&cfg).unwrap();
    let mut seed = 11;
    for _ in 0..10 {
        let x = random_state(&mut seed);
        let mut u = pacc_core::mpc::InputVec::zeros();
        for i in 0..24 {
            u[i] = 40.0 * lcg(&mut seed);
        }
        let contacts = [true, true, false, true];
        let dist = DisturbanceModel::new(Vector3::new(40.0, 60.0, 5.0), &Vector3::new(0.6, 0.1, 0.4), &Vector3::zeros());
        let lin = linearize(&x, &u, &contacts, &params, &dist, 0.04).unwrap();
        let step = |x: &StateVec<f64>, u: &pacc_core::mpc::InputVec<f64>| {
            discrete_step(x, u, &contacts, &params, &dist, 0.04).unwrap()
        };
        let h = 1e-6;
        for j in 0..30 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let col = (step(&xp, &u) - step(&xm, &u)) / (2.0 * h);
            for i in 0..30 {
                assert_relative_eq!(lin.a[(i, j)], col[i], epsilon = 1e-5, max_relative = 1e-5);
            }
        }
        for j in 0..24 {
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let col = (step(&x, &up) - step(&x, &um)) / (2.0 * h);
            for i in 0..30 {
                assert_relative_eq!(lin.b[(i, j)], col[i], epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }
}

#[test]
fn zmp_with_hook_load_matches_foothold_shift() {
    let p_ee = Vector3::new(0.55, 0.05, 0.4);
    let d = Vector3::new(6.0, -2.0, -34.3);
    let r = Vector3::new(0.02, -0.01, 0.35);
    let z = pacc_core::mpc::zmp(&r, &Vector3::zeros(), &p_ee, &d, 21.0).unwrap();
    let rel = Vector3::new(p_ee.x - r.x, p_ee.y - r.y, p_ee.z);
    let shift = pacc_core::gait::support_correction(&d, &rel, 21.0).unwrap();
    assert_relative_eq!(z - r.xy(), shift, epsilon = 1e-12);
}
