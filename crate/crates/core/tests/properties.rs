use proptest::prelude::*;
use rpskin::dkp::{solve_dkp, DkpConfig};
use rpskin::kinematics::{ikp, residuals, rotation_from_quat};
use rpskin::singularity::jacobians;
use rpskin::{canonicalize, classify_mode, DesignParams, OperationMode, Pose, MODE_TOL};

const D: DesignParams = DesignParams::unit();

fn mode() -> impl Strategy<Value = OperationMode> {
    prop_oneof![Just(OperationMode::Om1), Just(OperationMode::Om2)]
}

/// Poses strictly inside the chart, away from `z = 0`.
fn pose() -> impl Strategy<Value = Pose> {
    (mode(), 0.0..0.98f64, 0.0..std::f64::consts::TAU, 0.2..5.0f64, any::<bool>()).prop_map(|(m, r, phi, z, up)| {
        Pose::new(m, r * phi.cos(), r * phi.sin(), if up { z } else { -z }).unwrap()
    })
}

fn quat() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64).prop_filter("non-zero", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

proptest! {
    #[test]
    fn canonicalize_is_idempotent(q in quat()) {
        let once = canonicalize(q).unwrap();
        prop_assert_eq!(canonicalize(once.as_array()).unwrap(), once);
    }

    #[test]
    fn mode_is_blind_to_global_sign(q in quat()) {
        let neg = q.map(|x| -x);
        let (a, b) = (canonicalize(q).unwrap(), canonicalize(neg).unwrap());
        prop_assert_eq!(classify_mode(&a, MODE_TOL), classify_mode(&b, MODE_TOL));
    }

    #[test]
    fn chart_roundtrip_recovers_the_quaternion(p in pose()) {
        let q = p.quat_array();
        for sign in [1.0, -1.0] {
            let back = Pose::from_quat(q.map(|x| sign * x), p.z, p.mode).unwrap();
            let r = back.quat_array();
            let same = q.iter().zip(r).all(|(x, y)| (x - y).abs() <= 1e-12);
            let flipped = q.iter().zip(r).all(|(x, y)| (x + y).abs() <= 1e-12);
            prop_assert!(same || flipped, "{:?} vs {:?}", q, r);
        }
    }

    #[test]
    fn rotations_are_orthonormal(p in pose()) {
        let r = rotation_from_quat(&p.quat());
        let err = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
        prop_assert!(err <= 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn inverse_kinematics_satisfies_every_constraint(p in pose()) {
        let res = residuals(&p, &ikp(&p, &D), &D);
        prop_assert!(res.plane.iter().all(|v| v.abs() <= 1e-10), "{:?}", res.plane);
        prop_assert!(res.dist.iter().all(|v| v.abs() <= 1e-10), "{:?}", res.dist);
    }

    #[test]
    fn inverse_kinematics_ignores_global_sign(p in pose()) {
        let neg = Pose::from_quat(p.quat_array().map(|x| -x), p.z, p.mode).unwrap();
        prop_assert_eq!(ikp(&neg, &D), ikp(&p, &D));
    }

    #[test]
    fn inverse_kinematics_scales_with_the_robot(p in pose(), lambda in 0.2..5.0f64) {
        let big = DesignParams::new(lambda, lambda).unwrap();
        let scaled = Pose::new(p.mode, p.a, p.b, lambda * p.z).unwrap();
        let (small, large) = (ikp(&p, &D), ikp(&scaled, &big));
        for k in 0..3 {
            prop_assert!((large.rho[k] - lambda * small.rho[k]).abs() <= 1e-10 * lambda.max(1.0) * small.rho[k].max(1.0));
        }
    }

    #[test]
    fn serial_determinant_is_negative(p in pose()) {
        let pair = jacobians(&p, &D).unwrap();
        prop_assert!(pair.det_b < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn direct_solutions_satisfy_the_constraints(p in pose()) {
        let joints = ikp(&p, &D);
        let cfg = DkpConfig { n_starts: 500, ..DkpConfig::default() };
        let set = solve_dkp(&joints, p.mode, &D, &cfg).unwrap();
        prop_assert!(set.len() <= 8);
        for s in &set.solutions {
            prop_assert!(residuals(&s.pose, &joints, &D).max_abs() <= 1e-9);
            prop_assert!(s.pose.quat().norm_defect() <= 1e-12);
        }
    }
}
