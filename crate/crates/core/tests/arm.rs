use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector3};
use pacc_core::arm::*;
use pacc_core::geometry::{det3, rot_z};
use proptest::prelude::*;

const G: f64 = 9.81;

fn params() -> ArmParams<f64> {
    ArmParams::default()
}

/// Joint-3 angle that makes link `DE` hang straight down with q1 = q2 = 0.
fn vertical_q3(p: &ArmParams<f64>) -> f64 {
    pendulum_angle(&forward_kinematics(p, &Vector3::zeros()), &Matrix3::identity())
}

fn total_energy(p: &ArmParams<f64>, q: &Vector3<f64>, qd: &Vector3<f64>, tip: f64) -> f64 {
    kinetic_energy(p, q, qd, tip) + potential_energy(p, q, &level_gravity(), tip) + p.spring_energy(q)
}

fn rk4(p: &ArmParams<f64>, q: &mut Vector3<f64>, qd: &mut Vector3<f64>, tip: f64, dt: f64) {
    let f = |q: &Vector3<f64>, qd: &Vector3<f64>| {
        forward_dynamics_ext(p, q, qd, &Vector3::zeros(), &level_gravity(), tip, &Vector3::zeros())
    };
    let (k1q, k1v) = (*qd, f(q, qd));
    let (k2q, k2v) = (*qd + k1v * (dt / 2.0), f(&(*q + k1q * (dt / 2.0)), &(*qd + k1v * (dt / 2.0))));
    let (k3q, k3v) = (*qd + k2v * (dt / 2.0), f(&(*q + k2q * (dt / 2.0)), &(*qd + k2v * (dt / 2.0))));
    let (k4q, k4v) = (*qd + k3v * dt, f(&(*q + k3q * dt), &(*qd + k3v * dt)));
    *q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
    *qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
}

/// Swings link 3 alone (joints 1 and 2 locked) with a point mass at the hook
/// and returns the mean period from upward zero crossings of the swing angle.
fn link3_period(p: &ArmParams<f64>, tip: f64, amplitude: f64) -> f64 {
    let q0 = vertical_q3(p);
    let (mut q3, mut w) = (q0 + amplitude, 0.0);
    let dt = 1e-4;
    let accel = |q3: f64, w: f64| {
        let q = Vector3::new(0.0, 0.0, q3);
        let frames = forward_kinematics(p, &q);
        let qd = Vector3::new(0.0, 0.0, w);
        let bias = inverse_dynamics(p, &frames, &qd, &Vector3::zeros(), &level_gravity(), tip);
        let m = mass_matrix(p, &frames, tip);
        (p.spring_torque(&q).z - p.damping.z * w - bias.z) / m[(2, 2)]
    };
    let mut crossings = Vec::new();
    let mut prev = q3 - q0;
    let mut t = 0.0;
    while t < 12.0 {
        // RK4 on the single joint
        let (a1, v1) = (accel(q3, w), w);
        let (a2, v2) = (accel(q3 + v1 * dt / 2.0, w + a1 * dt / 2.0), w + a1 * dt / 2.0);
        let (a3, v3) = (accel(q3 + v2 * dt / 2.0, w + a2 * dt / 2.0), w + a2 * dt / 2.0);
        let (a4, v4) = (accel(q3 + v3 * dt, w + a3 * dt), w + a3 * dt);
        q3 += (v1 + 2.0 * v2 + 2.0 * v3 + v4) * dt / 6.0;
        w += (a1 + 2.0 * a2 + 2.0 * a3 + a4) * dt / 6.0;
        t += dt;
        let x = q3 - q0;
        if prev < 0.0 && x >= 0.0 {
            crossings.push(t - dt * x / (x - prev));
        }
        prev = x;
    }
    (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64
}

#[test]
fn zero_pose_matches_planar_chain() {
    let p = params();
    let f = forward_kinematics(&p, &Vector3::zeros());
    let [a, b, c, d, e] = f.points;
    let [ab, bc, cd, de] = p.segment_lengths;
    assert_relative_eq!((b - a).norm(), ab, epsilon = 1e-12);
    assert_relative_eq!((c - b).norm(), bc, epsilon = 1e-12);
    assert_relative_eq!((d - c).norm(), cd, epsilon = 1e-12);
    assert_relative_eq!((e - d).norm(), de, epsilon = 1e-12);
    // law of cosines across each interior angle
    let tri = |x: f64, y: f64, ang: f64| (x * x + y * y - 2.0 * x * y * ang.cos()).sqrt();
    assert_relative_eq!((c - a).norm(), tri(ab, bc, p.bend_angles[0]), epsilon = 1e-12);
    assert_relative_eq!((d - b).norm(), tri(bc, cd, p.bend_angles[1]), epsilon = 1e-12);
    assert_relative_eq!((e - c).norm(), tri(cd, de, p.bend_angles[2]), epsilon = 1e-12);
    for pt in f.points {
        assert_eq!(pt.y, 0.0);
    }
}

#[test]
fn yaw_rotates_hook_about_vertical() {
    let p = params();
    let e0 = ee_position(&p, &Vector3::new(0.0, 0.2, -0.1));
    for psi in [-1.2, -0.3, 0.5, 1.0] {
        let e = ee_position(&p, &Vector3::new(psi, 0.2, -0.1));
        assert_relative_eq!(e, rot_z(psi) * e0, epsilon = 1e-12);
        assert_relative_eq!(e.xy().norm(), e0.xy().norm(), epsilon = 1e-12);
    }
}

#[test]
fn jacobian_matches_finite_differences_on_grid() {
    let p = params();
    let h = 1e-6;
    for i in -3..=3 {
        for j in -3..=3 {
            for k in -3..=3 {
                let q = Vector3::new(i as f64 * 0.4, j as f64 * 0.3, k as f64 * 0.35);
                let jac = forward_kinematics(&p, &q).jacobian();
                let e0 = ee_position(&p, &q);
                for c in 0..3 {
                    let mut qh = q;
                    qh[c] += h;
                    let fd = (ee_position(&p, &qh) - e0) / h;
                    assert!((fd - jac.column(c)).amax() < 1e-4, "q = {q:?}, column {c}");
                }
            }
        }
    }
}

#[test]
fn zero_pose_determinant_matches_finite_differences() {
    let p = params();
    let h = 1e-7;
    let mut fd = Matrix3::zeros();
    for c in 0..3 {
        let mut qp = Vector3::zeros();
        let mut qm = Vector3::zeros();
        qp[c] = h;
        qm[c] = -h;
        fd.set_column(c, &((ee_position(&p, &qp) - ee_position(&p, &qm)) / (2.0 * h)));
    }
    let j = ee_jacobian(&p, &Vector3::zeros()).unwrap();
    assert_relative_eq!(det3(&j), fd.determinant(), max_relative = 1e-6);
}

#[test]
fn determinant_minimum_on_sweep_is_flagged() {
    let p = params();
    let mut worst = (f64::INFINITY, 0.0);
    for n in 0..=3600 {
        let q3 = -PI + n as f64 * (2.0 * PI / 3600.0);
        let d = det3(&forward_kinematics(&p, &Vector3::new(0.0, 0.0, q3)).jacobian()).abs();
        if d < worst.0 {
            worst = (d, q3);
        }
    }
    // |det| is smallest where DE continues CD
    assert_relative_eq!(worst.1, -(PI - p.bend_angles[2]), epsilon = 2e-3);
    let aligned = Vector3::new(0.0, 0.0, -(PI - p.bend_angles[2]));
    assert!(matches!(ee_jacobian(&p, &aligned), Err(ArmError::Singular { .. })));
}

#[test]
fn gravity_torque_is_zero_without_mass() {
    let mut p = params();
    p.link_masses = [0.0; 4];
    assert_eq!(gravity_torque(&p, &Vector3::new(0.3, 0.2, 0.1)), Vector3::zeros());
}

#[test]
fn gravity_torque_matches_static_moments_at_zero_pose() {
    let p = params();
    let f = forward_kinematics(&p, &Vector3::zeros());
    let [a, _, c, d, e] = f.points;
    let g = Vector3::new(0.0, 0.0, -G);
    let coms = [((a + c) / 2.0, p.link_masses[1]), ((c + d) / 2.0, p.link_masses[2]), ((d + e) / 2.0, p.link_masses[3])];
    let origins = [a, c, d];
    let mut expected = Vector3::zeros();
    for j in 0..3 {
        let axis = f.axes[j];
        expected[j] = coms[j..].iter().map(|(com, m)| axis.dot(&(com - origins[j]).cross(&(g * *m)))).sum();
    }
    assert_relative_eq!(gravity_torque(&p, &Vector3::zeros()), expected, epsilon = 1e-12);
}

#[test]
fn spring_damper_examples() {
    let p = params();
    let (s, d) = p.spring_damper_torque(&p.equilibrium, &Vector3::zeros());
    assert_eq!((s, d), (Vector3::zeros(), Vector3::zeros()));
    let (s, _) = p.spring_damper_torque(&Vector3::new(0.0, 0.1, 0.0), &Vector3::zeros());
    assert_relative_eq!(s.y, -0.847, epsilon = 1e-12);
    let (_, d) = p.spring_damper_torque(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0));
    assert_relative_eq!(d.x, -0.26, epsilon = 1e-12);
}

#[test]
fn unloaded_equilibrium_estimates_zero_force() {
    let mut p = params();
    let q = Vector3::new(0.1, 0.2, 0.05);
    p.equilibrium = p.equilibrium_for_load(&q, &Vector3::zeros(), &level_gravity());
    let f = estimate_ee_force(&p, &q, &Vector3::zeros()).unwrap();
    assert!(f.amax() < 1e-9);
}

/// Lets a hanging mass settle and reads the estimator.
fn settled_estimate(mass: f64) -> Vector3<f64> {
    let mut p = params();
    let design = Vector3::new(0.0, 0.0, vertical_q3(&p));
    p.equilibrium = p.equilibrium_for_load(&design, &Vector3::new(0.0, 0.0, -mass * G), &level_gravity());
    let mut q = design + Vector3::new(0.05, -0.04, 0.06);
    let mut qd = Vector3::zeros();
    // joint 3 has no damper; a settling aid that vanishes at rest
    let aid = 0.5;
    let dt = 5e-4;
    for _ in 0..(30.0 / dt) as usize {
        let extra = Vector3::new(0.0, 0.0, -aid * qd.z);
        let qdd = forward_dynamics_ext(&p, &q, &qd, &Vector3::zeros(), &level_gravity(), mass, &extra);
        qd += qdd * dt;
        q += qd * dt;
    }
    assert!(qd.amax() < 1e-4, "not settled: {qd:?}");
    estimate_ee_force(&p, &q, &qd).unwrap()
}

#[test]
fn settled_hangs_are_estimated_within_two_percent() {
    for mass in [2.0, 7.0] {
        let f = settled_estimate(mass);
        let w = mass * G;
        assert_relative_eq!(f.z, -w, max_relative = 0.02);
        assert!(f.x.abs() < 0.5 && f.y.abs() < 0.5, "{f:?}");
    }
}

#[test]
fn undamped_arm_conserves_energy() {
    let mut p = params();
    p.damping = Vector3::zeros();
    let mut q = Vector3::new(0.4, -0.3, 0.5);
    let mut qd = Vector3::new(0.5, 0.0, -1.0);
    let e0 = total_energy(&p, &q, &qd, 0.5);
    for _ in 0..5000 {
        rk4(&p, &mut q, &mut qd, 0.5, 1e-3);
    }
    let e1 = total_energy(&p, &q, &qd, 0.5);
    assert_relative_eq!(e1, e0, max_relative = 1e-6);
}

#[test]
fn damped_arm_is_passive() {
    let p = params();
    let mut q = Vector3::new(0.5, -0.4, 0.3);
    let mut qd = Vector3::new(-0.5, 0.8, 1.0);
    let mut e = total_energy(&p, &q, &qd, 1.0);
    for _ in 0..3000 {
        rk4(&p, &mut q, &mut qd, 1.0, 1e-3);
        let next = total_energy(&p, &q, &qd, 1.0);
        assert!(next <= e + 1e-9, "energy rose from {e} to {next}");
        e = next;
    }
}

#[test]
fn cartesian_stiffness_matches_quasi_static_displacement() {
    let mut p = params();
    p.link_masses = [0.0; 4];
    p.damping = Vector3::zeros();
    let q = Vector3::new(0.2, 0.1, 0.15);
    p.equilibrium = q;
    let k = cartesian_stiffness_matrix(&p, &q, &Matrix3::identity()).unwrap();
    let e0 = ee_position(&p, &q);
    let h = 1e-6;
    for c in 0..3 {
        // step the hook along axis c, solve the joints by Newton iteration
        let mut target = e0;
        target[c] += h;
        let mut qh = q;
        for _ in 0..10 {
            let jh = forward_kinematics(&p, &qh).jacobian();
            qh += jh.try_inverse().unwrap() * (target - ee_position(&p, &qh));
        }
        // force needed to hold the hook there
        let jh = forward_kinematics(&p, &qh).jacobian();
        let f = -(jh.transpose().try_inverse().unwrap() * p.spring_torque(&qh));
        assert_relative_eq!(f / h, k.column(c).into_owned(), max_relative = 1e-4, epsilon = 1e-2);
    }
}

#[test]
fn cartesian_stiffness_follows_frame_rotation() {
    let p = params();
    let q = Vector3::new(0.1, 0.2, 0.1);
    let r = rot_z(0.7) * pacc_core::geometry::rot_y(0.2);
    let k0 = cartesian_stiffness_matrix(&p, &q, &Matrix3::identity()).unwrap();
    let k1 = cartesian_stiffness_matrix(&p, &q, &r).unwrap();
    assert_relative_eq!(k1, r * k0 * r.transpose(), epsilon = 1e-9);
    let mut soft = p.clone();
    soft.stiffness = Vector3::zeros();
    assert_eq!(effective_cartesian_stiffness(&soft, &q, &r).unwrap(), Vector3::zeros());
}

#[test]
fn link_three_pendulum_period() {
    let mut p = params();
    p.stiffness.z = 0.0;
    let ideal = 2.0 * PI * (0.277f64 / G).sqrt();
    assert_relative_eq!(ideal, 1.056, epsilon = 1e-3);
    let t = link3_period(&p, 2.0, 0.02);
    assert_relative_eq!(t, ideal, max_relative = 0.05);
}

#[test]
fn massless_link_pendulum_is_mass_independent() {
    let mut p = params();
    p.stiffness.z = 0.0;
    p.link_masses[3] = 0.0;
    let periods: Vec<f64> = [1.0, 2.0, 7.0].iter().map(|&m| link3_period(&p, m, 0.02)).collect();
    for t in &periods {
        assert_relative_eq!(*t, periods[1], max_relative = 0.01);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gravity_torque_is_potential_gradient(q1 in -1.5..1.5f64, q2 in -1.2..1.2f64, q3 in -1.2..1.2f64) {
        let p = params();
        let q = Vector3::new(q1, q2, q3);
        let g = level_gravity();
        let tau = gravity_torque(&p, &q);
        let h = 1e-6;
        for c in 0..3 {
            let (mut qp, mut qm) = (q, q);
            qp[c] += h;
            qm[c] -= h;
            let grad = (potential_energy(&p, &qp, &g, 0.0) - potential_energy(&p, &qm, &g, 0.0)) / (2.0 * h);
            prop_assert!((tau[c] + grad).abs() < 1e-7);
        }
    }

    #[test]
    fn estimator_is_exact_at_rest(q1 in -1.0..1.0f64, q2 in -0.8..0.8f64, q3 in -0.8..0.8f64,
                                  fx in -20.0..20.0f64, fy in -20.0..20.0f64, fz in -70.0..0.0f64) {
        let mut p = params();
        let q = Vector3::new(q1, q2, q3);
        prop_assume!(ee_jacobian(&p, &q).is_ok());
        let f = Vector3::new(fx, fy, fz);
        p.equilibrium = p.equilibrium_for_load(&q, &f, &level_gravity());
        let est = estimate_ee_force(&p, &q, &Vector3::zeros()).unwrap();
        prop_assert!((est - f).amax() < 1e-6);
    }

    #[test]
    fn wrench_torque_norm_is_rotation_invariant(a in -3.0..3.0f64, b in -1.0..1.0f64,
                                                fx in -10.0..10.0f64, fz in -10.0..10.0f64) {
        let r = rot_z(a) * pacc_core::geometry::rot_y(b);
        let p = Vector3::new(0.3, -0.1, 0.1);
        let f = Vector3::new(fx, 1.0, fz);
        let (_, t0) = wrench_at_com(&f, &Matrix3::identity(), &p);
        let (f1, t1) = wrench_at_com(&f, &r, &p);
        prop_assert!((t0.norm() - t1.norm()).abs() < 1e-9);
        prop_assert!((f1 - r * f).amax() < 1e-12);
    }
}
