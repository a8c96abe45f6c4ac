//! Velocity model, parallel-singularity determinant and the closed-form
//! singularity loci of the unit robot.
//!
//! `A` is the Jacobian of the three squared-length residuals with respect to
//! the chart `(a, b, z)`; `B` is their Jacobian with respect to the leg
//! lengths, `diag(-2 rho_i)`. For the unit robot one has the identity
//!
//! ```text
//! det A = 48 √3 · S(z, q) / dep²
//! ```
//!
//! where `S` is the mode's singularity polynomial ([`sing_poly_om1`],
//! [`sing_poly_om2`]) and `dep` the dependent quaternion component. The
//! reported determinant is multiplied by a fixed per-mode sign
//! ([`CALIBRATION`]) so that the tabulated reference poses are positive.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{chart_jet, ikp, ChartJet};
use crate::model::{DesignParams, OperationMode, Pose};

/// Default threshold below which `|det A|` counts as singular.
pub const DEFAULT_EPS_SING: f64 = 1e-9;

/// Sign applied to the raw chart determinant, indexed by mode (OM1, OM2).
pub const CALIBRATION: [f64; 2] = [-1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianPair {
    /// Parallel Jacobian, `∂dist/∂(a, b, z)`.
    pub a: Matrix3<f64>,
    /// Serial Jacobian, `∂dist/∂rho`.
    pub b: Matrix3<f64>,
    /// Calibrated determinant of `a`.
    pub det_a: f64,
    pub det_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityState {
    /// Chart rates `(da/dt, db/dt, dz/dt)`.
    pub t_dot: [f64; 3],
    pub q_dot: [f64; 3],
}

fn calibration(mode: OperationMode) -> f64 {
    CALIBRATION[mode.slot()]
}

pub fn jacobians(pose: &Pose, d: &DesignParams) -> Result<JacobianPair> {
    let jet = chart_jet(pose, d, false)?;
    let rho = ikp(pose, d).rho;
    let b = Matrix3::from_diagonal(&Vector3::new(-2.0 * rho[0], -2.0 * rho[1], -2.0 * rho[2]));
    Ok(JacobianPair {
        a: jet.jacobian,
        b,
        det_a: calibration(pose.mode) * jet.jacobian.determinant(),
        det_b: -8.0 * rho[0] * rho[1] * rho[2],
    })
}

/// Calibrated `det A` at a chart-interior pose.
pub fn det_a(pose: &Pose, d: &DesignParams) -> Result<f64> {
    let jet = chart_jet(pose, d, false)?;
    Ok(calibration(pose.mode) * jet.jacobian.determinant())
}

fn cofactor(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            c[(i, j)] = m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
        }
    }
    c
}

/// Calibrated `det A` together with its gradient in `(a, b, z)`.
pub fn det_a_with_gradient(pose: &Pose, d: &DesignParams) -> Result<(f64, Vector3<f64>)> {
    det_jet(pose, d).map(|(_, det, grad)| (det, grad))
}

pub(crate) fn det_jet(pose: &Pose, d: &DesignParams) -> Result<(ChartJet, f64, Vector3<f64>)> {
    let jet = chart_jet(pose, d, true)?;
    let hess = jet.hess.as_ref().expect("second-order jet requested");
    let a = jet.jacobian;
    let cof = cofactor(&a);
    let s = calibration(pose.mode);
    let mut grad = Vector3::zeros();
    for k in 0..3 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += cof[(i, j)] * hess[i][(j, k)];
            }
        }
        grad[k] = s * acc;
    }
    Ok((jet, s * a.determinant(), grad))
}

/// Parallel-singularity polynomial of OM1 (`q1 = 0`), unit robot.
#[rustfmt::skip]
pub fn sing_poly_om1(z: f64, q2: f64, q3: f64, q4: f64) -> f64 {
    let z2 = z * z;
    let z3 = z2 * z;
    let q3_2 = q3 * q3;
    let q3_4 = q3_2 * q3_2;
    let q3_6 = q3_4 * q3_2;
    let q4_2 = q4 * q4;
    let q4_3 = q4_2 * q4;
    let q4_4 = q4_2 * q4_2;
    let q4_5 = q4_4 * q4;
    let q4_6 = q4_4 * q4_2;
    let q4_7 = q4_6 * q4;
    let q4_8 = q4_4 * q4_4;
    q4 * (8.0 * q2 * q3_2 * q4_6 + 2.0 * q2 * q4_8 - 64.0 * z * q3_6 * q4 - 96.0 * z * q3_4 * q4_3
        - 36.0 * z * q3_2 * q4_5 - 6.0 * z * q4_7
        - 24.0 * z2 * q2 * q3_2 * q4_2 - 6.0 * z2 * q2 * q4_4 - 32.0 * q2 * q3_2 * q4_4
        - 10.0 * q2 * q4_6 + 2.0 * z3 * q4_3 + 96.0 * z * q3_4 * q4
        + 72.0 * z * q3_2 * q4_3 + 23.0 * z * q4_5 + 16.0 * z2 * q2 * q3_2 + 10.0 * z2 * q2 * q4_2
        + 8.0 * q2 * q4_4 - z3 * q4 - 36.0 * z * q3_2 * q4
        - 21.0 * z * q4_3 - 4.0 * z2 * q2 + 4.0 * z * q4)
}

/// Parallel-singularity polynomial of OM2 (`q4 = 0`), unit robot. It does
/// not depend on `q2`; the argument is kept for a uniform signature.
#[rustfmt::skip]
pub fn sing_poly_om2(z: f64, q1: f64, _q2: f64, q3: f64) -> f64 {
    let z2 = z * z;
    let z3 = z2 * z;
    let q1_2 = q1 * q1;
    let q1_3 = q1_2 * q1;
    let q1_4 = q1_2 * q1_2;
    let q1_5 = q1_4 * q1;
    let q1_6 = q1_4 * q1_2;
    let q1_7 = q1_6 * q1;
    let q3_2 = q3 * q3;
    let q3_3 = q3_2 * q3;
    let q3_4 = q3_2 * q3_2;
    let q3_6 = q3_4 * q3_2;
    q1_2 * (6.0 * q1_7 * q3 + 8.0 * q1_5 * q3_3 - 2.0 * z * q1_6 + 36.0 * z * q1_4 * q3_2
        + 96.0 * z * q1_2 * q3_4 + 64.0 * z * q3_6
        - 18.0 * z2 * q1_3 * q3 - 24.0 * z2 * q1 * q3_3 - 18.0 * q1_5 * q3 - 16.0 * q1_3 * q3_3
        + 2.0 * z3 * q1_2 + 3.0 * z * q1_4 - 72.0 * z * q1_2 * q3_2
        - 96.0 * z * q3_4 + 18.0 * z2 * q1 * q3 + 12.0 * q1_3 * q3
        - z3 + 3.0 * z * q1_2 + 36.0 * z * q3_2 - 4.0 * z)
}

/// The mode's singularity polynomial evaluated at a chart pose.
pub fn sing_poly(pose: &Pose) -> f64 {
    let q = pose.quat_array();
    match pose.mode {
        OperationMode::Om1 => sing_poly_om1(pose.z, q[1], q[2], q[3]),
        OperationMode::Om2 => sing_poly_om2(pose.z, q[0], q[1], q[2]),
    }
}

/// [`sing_poly`] multiplied by the same sign as [`det_a`], so the two agree
/// in sign wherever neither vanishes.
pub fn calibrated_sing_poly(pose: &Pose) -> f64 {
    calibration(pose.mode) * sing_poly(pose)
}

/// Solves `A t_dot + B q_dot = 0` for the chart rates.
pub fn velocity_solve(pose: &Pose, q_dot: [f64; 3], d: &DesignParams, eps_sing: f64) -> Result<VelocityState> {
    let jp = jacobians(pose, d)?;
    if !(jp.det_a.abs() > eps_sing) {
        return Err(Error::Singular { det_a: jp.det_a });
    }
    let rhs = -(jp.b * Vector3::from(q_dot));
    let t = jp
        .a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular { det_a: jp.det_a })?;
    Ok(VelocityState {
        t_dot: [t[0], t[1], t[2]],
        q_dot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::residuals;
    use crate::model::JointConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const D: DesignParams = DesignParams::unit();

    #[test]
    fn serial_jacobian_of_vertical_legs() {
        let pose = Pose::new(OperationMode::Om2, 0.0, 0.0, 3.0).unwrap();
        let jp = jacobians(&pose, &D).unwrap();
        assert!((jp.det_b + 216.0).abs() < 1e-12);
        assert!((jp.b.determinant() - jp.det_b).abs() < 1e-9);
        assert!(jp.det_a.abs() > 1.0);
    }

    #[test]
    fn determinant_identity_at_vertical_orientation() {
        for z in [0.7, 2.0, -3.0] {
            let pose = Pose::new(OperationMode::Om2, 0.0, 0.0, z).unwrap();
            let raw = det_a(&pose, &D).unwrap() * CALIBRATION[1];
            let expected = 48.0 * 3f64.sqrt() * z * z * z;
            assert!((raw - expected).abs() < 1e-9 * expected.abs(), "{raw} vs {expected}");
        }
    }

    #[test]
    fn determinant_is_proportional_to_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in OperationMode::ALL {
            for _ in 0..200 {
                let a: f64 = rng.gen_range(-0.9..0.9);
                let b: f64 = rng.gen_range(-0.4..0.4);
                let z: f64 = rng.gen_range(-4.0..4.0);
                let pose = Pose::new(mode, a, b, z).unwrap();
                let dep = pose.dependent();
                let lhs = det_a(&pose, &D).unwrap() * dep * dep;
                let rhs = 48.0 * 3f64.sqrt() * calibrated_sing_poly(&pose);
                assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{mode} {a} {b} {z}: {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mode = if rng.gen_bool(0.5) { OperationMode::Om1 } else { OperationMode::Om2 };
            let r: f64 = rng.gen_range(0.0..0.9);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let z: f64 = rng.gen_range(-5.0..5.0);
            let pose = Pose::new(mode, r * th.cos(), r * th.sin(), z).unwrap();
            let jp = jacobians(&pose, &D).unwrap();
            let joints = JointConfig::new(1.0, 1.0, 1.0).unwrap();
            let h = 1e-6;
            for k in 0..3 {
                let mut cp = pose.chart();
                let mut cm = pose.chart();
                cp[k] += h;
                cm[k] -= h;
                let rp = residuals(&Pose::new(mode, cp[0], cp[1], cp[2]).unwrap(), &joints, &D).dist;
                let rm = residuals(&Pose::new(mode, cm[0], cm[1], cm[2]).unwrap(), &joints, &D).dist;
                for i in 0..3 {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    let scale = jp.a.abs().max().max(1.0);
                    assert!((fd - jp.a[(i, k)]).abs() <= 1e-6 * scale, "entry ({i},{k}): {fd} vs {}", jp.a[(i, k)]);
                }
            }
        }
    }

    #[test]
    fn determinant_gradient_matches_finite_differences() {
        for mode in OperationMode::ALL {
            let pose = Pose::new(mode, 0.42, -0.33, 2.2).unwrap();
            let (det, grad) = det_a_with_gradient(&pose, &D).unwrap();
            assert_eq!(det, det_a(&pose, &D).unwrap());
            let h = 1e-6;
            for k in 0..3 {
                let mut cp = pose.chart();
                let mut cm = pose.chart();
                cp[k] += h;
                cm[k] -= h;
                let fp = det_a(&Pose::new(mode, cp[0], cp[1], cp[2]).unwrap(), &D).unwrap();
                let fm = det_a(&Pose::new(mode, cm[0], cm[1], cm[2]).unwrap(), &D).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn polynomials_at_vertical_orientation() {
        for z in [1.0, 2.0, -3.0] {
            assert_eq!(sing_poly_om1(z, 0.0, 0.0, 1.0), z * z * z);
            assert_eq!(sing_poly_om2(z, 1.0, 0.37, 0.0), z * z * z);
        }
        assert_eq!(sing_poly_om1(2.0, 0.0, 0.0, 1.0), 8.0);
    }

    #[test]
    fn polynomials_vanish_on_their_factors() {
        assert_eq!(sing_poly_om1(1.7, 0.3, -0.2, 0.0), 0.0);
        assert_eq!(sing_poly_om2(1.7, 0.0, 0.3, -0.2), 0.0);
    }

    #[test]
    fn rim_behaviour() {
        // Approaching a² + b² = 1 the polynomial vanishes. The chart
        // determinant equals 48√3·S/dep², so in OM1 it grows like 1/q4.
        for mode in OperationMode::ALL {
            let mut prev = f64::INFINITY;
            for eps in [1e-2f64, 1e-3, 1e-4] {
                let r = (1.0 - eps * eps).sqrt();
                let pose = Pose::new(mode, 0.6 * r, 0.8 * r, 2.0).unwrap();
                let p = sing_poly(&pose).abs();
                assert!(p < prev && p < 20.0 * eps);
                prev = p;
                let dep = pose.dependent();
                let scaled = det_a(&pose, &D).unwrap() * dep * dep / (48.0 * 3f64.sqrt());
                assert!((scaled - calibrated_sing_poly(&pose)).abs() < 1e-9);
            }
        }
        let rim = Pose::new(OperationMode::Om1, 0.6, 0.8, 2.0).unwrap();
        assert!(matches!(jacobians(&rim, &D), Err(Error::ChartBoundary { .. })));
    }

    #[test]
    fn velocity_of_vertical_configuration() {
        let pose = Pose::new(OperationMode::Om2, 0.0, 0.0, 3.0).unwrap();
        let v = velocity_solve(&pose, [0.0; 3], &D, DEFAULT_EPS_SING).unwrap();
        assert_eq!(v.t_dot, [0.0, 0.0, 0.0]);

        let v = velocity_solve(&pose, [1.0, 1.0, 1.0], &D, DEFAULT_EPS_SING).unwrap();
        assert!(v.t_dot[0].abs() < 1e-12 && v.t_dot[1].abs() < 1e-12);
        // rho = z on vertical legs, so z grows at the leg rate.
        assert!((v.t_dot[2] - 1.0).abs() < 1e-12);

        let jp = jacobians(&pose, &D).unwrap();
        let r = jp.a * Vector3::from(v.t_dot) + jp.b * Vector3::from(v.q_dot);
        assert!(r.norm() <= 1e-8 * (jp.b * Vector3::from(v.q_dot)).norm());
    }

    #[test]
    fn velocity_rejects_singular_pose() {
        let pose = Pose::new(OperationMode::Om2, 0.0, 0.0, 1e-5).unwrap();
        let err = velocity_solve(&pose, [1.0, 0.0, 0.0], &D, DEFAULT_EPS_SING).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }
}
