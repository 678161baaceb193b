use nalgebra::{Vector2, Vector3};
use pacc_core::arm::{kinetic_energy, level_gravity, potential_energy, ArmParams, ArmState};
use pacc_core::locomotion::{ControllerConfig, Role};
use pacc_core::scalar::GRAVITY;
use pacc_sim::coupling::rope_force;
use pacc_sim::leader::{LeaderScript, LowPass};
use pacc_sim::run::simulate;
use pacc_sim::scenario::{build_world, ScenarioConfig, ScenarioKind};
use pacc_sim::terrain::Terrain;
use pacc_sim::trace::header;
use pacc_sim::world::{arm_step, Coupling, GroundContact, HumanHand, Leader, Payload, SimRobot, World};

fn lone_robot() -> World {
    let terrain = Terrain::flat();
    let cfg = ControllerConfig { role: Role::Leader, ..ControllerConfig::default() };
    let follower = SimRobot::new(cfg, Vector2::zeros(), 0.0, Vector3::zeros(), Vector2::zeros(), &terrain).unwrap();
    let hand = Vector3::new(5.0, 0.0, 1.0);
    let leader = Leader::Human(HumanHand {
        script: LeaderScript { waypoints: vec![hand.xy()], cruise: 0.0, accel: 0.1, start_delay: 0.0 },
        height: 1.0,
        filter: LowPass::new(1.5, hand),
        position: hand,
        velocity: Vector3::zeros(),
        force: Vector3::zeros(),
    });
    let mut w = World {
        t: 0.0,
        dt: 1e-3,
        terrain,
        follower,
        leader,
        coupling: Coupling::None,
        payload: Payload { position: Vector3::zeros(), velocity: Vector3::zeros(), tensions: [0.0; 2] },
        ground: GroundContact::default(),
    };
    w.initialize_payload();
    w
}

#[test]
fn standstill_keeps_height() {
    let mut w = lone_robot();
    let z0 = w.follower.position.z;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        w.step().unwrap();
        worst = worst.max((w.follower.position.z - z0).abs());
    }
    assert!(worst < 5e-3, "height drift {worst}");
}

#[test]
fn free_arm_energy_drift_is_small() {
    let mut p = ArmParams::default();
    p.damping = Vector3::zeros();
    let energy = |s: &ArmState<f64>| {
        kinetic_energy(&p, &s.q, &s.q_dot, 0.0) + potential_energy(&p, &s.q, &level_gravity(), 0.0) + p.spring_energy(&s.q)
    };
    // resting energy, reached with damping on every joint
    let mut damped = ArmParams::default();
    damped.damping = Vector3::new(0.26, 1.43, 0.3);
    let mut rest = ArmState::default();
    for _ in 0..30_000 {
        arm_step(&damped, &mut rest, &Vector3::zeros(), &level_gravity(), 0.0, 1e-3);
    }
    assert!(rest.q_dot.amax() < 1e-6);
    let e_min = energy(&ArmState { q: rest.q, q_dot: Vector3::zeros() });

    for q0 in [Vector3::new(0.3, -0.2, 0.4), Vector3::new(0.0, -0.2, 0.0), Vector3::new(0.0, 0.0, 0.4)] {
        let mut s = ArmState { q: q0, q_dot: Vector3::zeros() };
        let e0 = energy(&s);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            arm_step(&p, &mut s, &Vector3::zeros(), &level_gravity(), 0.0, 1e-3);
            worst = worst.max((energy(&s) - e0).abs());
        }
        let drift = worst / (e0 - e_min);
        assert!(drift < 0.01, "q0 {q0:?}: drift {drift}");
    }
}

#[test]
fn stance_feet_never_slip() {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::RrRigid);
    cfg.leader.start_delay = 0.0;
    let mut w = build_world(&cfg).unwrap();
    let mut prev: Vec<([Vector3<f64>; 4], [bool; 4])> = w.robots().map(|r| (r.feet, r.contacts)).collect();
    let mut stance_steps = 0;
    for _ in 0..4000 {
        w.step().unwrap();
        let now: Vec<_> = w.robots().map(|r| (r.feet, r.contacts)).collect();
        for (a, b) in prev.iter().zip(&now) {
            for leg in 0..4 {
                if a.1[leg] && b.1[leg] {
                    assert_eq!(a.0[leg], b.0[leg], "leg {leg} slipped at t = {}", w.t);
                    stance_steps += 1;
                }
            }
        }
        prev = now;
    }
    assert!(stance_steps > 20_000);
    assert!(w.robots().all(|r| r.contacts.iter().filter(|&&c| c).count() >= 3));
}

#[test]
fn hanging_rope_payload_balances() {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::RrRope);
    // nobody walks
    cfg.controller.gait.start_delay = 100.0;
    cfg.leader.start_delay = 100.0;
    let mut w = build_world(&cfg).unwrap();
    let mass = cfg.coupling.mass;
    for _ in 0..6000 {
        w.step().unwrap();
        let t = w.payload.tensions;
        assert!(t[0] >= 0.0 && t[1] >= 0.0);
    }
    let rope = cfg.coupling.rope;
    let (p, pv) = (w.payload.position, w.payload.velocity);
    let leader = w.leader.robot().unwrap();
    let fa = rope_force(&w.follower.hook(), &w.follower.hook_velocity(), &p, &pv, &rope);
    let fb = rope_force(&leader.hook(), &leader.hook_velocity(), &p, &pv, &rope);
    // each rope pulls its hook towards the payload
    assert!(fa.dot(&(p - w.follower.hook())) > 0.0 && fb.dot(&(p - leader.hook())) > 0.0);
    let weight = Vector3::new(0.0, 0.0, -mass * GRAVITY);
    let err = (fa + fb - weight).norm() / (mass * GRAVITY);
    assert!(err < 0.02, "hook forces {fa:?} + {fb:?}, relative error {err}");
    assert!(w.payload_clearance() > 0.0);
}

#[test]
fn short_runs_are_byte_identical() {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::RrRope);
    cfg.duration = 2.5;
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a.summary.rows, 250);
    assert_eq!(a.trace, b.trace);
    cfg.seed = 2;
    let c = simulate(&cfg).unwrap();
    assert_eq!(c.summary.rows, 250);
}

#[test]
fn zero_duration_writes_header_only() {
    let mut cfg = ScenarioConfig::defaults(ScenarioKind::HrRigid);
    cfg.duration = 0.0;
    let r = simulate(&cfg).unwrap();
    assert_eq!(String::from_utf8(r.trace.clone()).unwrap(), header().join(",") + "\n");
    assert_eq!(r.summary.rows, 0);
    assert!(r.summary.completed);
    assert_eq!(r.exit_code(), 0);
}
