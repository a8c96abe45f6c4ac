//! Constraint equations, platform placement and the inverse kinematic map.
//!
//! Leg `i` joins the base vertex `A_i` (revolute joint) to the platform vertex
//! `B_i = P + R b_i` (spherical joint). The revolute axes confine each `B_i`
//! to a vertical plane through the origin, which fixes the horizontal position
//! `(x, y)` of the platform centre as a quadratic function of the orientation;
//! only `z` and the orientation remain free.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::model::{DesignParams, JointConfig, OperationMode, OrientationQuat, PlatformPlacement, Pose};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Residuals of the six constraint equations at a (pose, joints) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResidual {
    /// `|A_i - B_i|² - rho_i²`
    pub dist: [f64; 3],
    /// Left-hand sides of the three planar constraints.
    pub plane: [f64; 3],
}

impl ConstraintResidual {
    pub fn max_abs(&self) -> f64 {
        self.dist.iter().chain(self.plane.iter()).fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Rotation matrix of a (not necessarily unit) quaternion `[q1, q2, q3, q4]`,
/// with `q1` the scalar part.
pub(crate) fn rotation_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [q1, q2, q3, q4] = *q;
    Matrix3::new(
        2.0 * q1 * q1 + 2.0 * q2 * q2 - 1.0,
        -2.0 * q1 * q4 + 2.0 * q2 * q3,
        2.0 * q1 * q3 + 2.0 * q2 * q4,
        2.0 * q1 * q4 + 2.0 * q2 * q3,
        2.0 * q1 * q1 + 2.0 * q3 * q3 - 1.0,
        -2.0 * q1 * q2 + 2.0 * q3 * q4,
        -2.0 * q1 * q3 + 2.0 * q2 * q4,
        2.0 * q1 * q2 + 2.0 * q3 * q4,
        2.0 * q1 * q1 + 2.0 * q4 * q4 - 1.0,
    )
}

/// `∂R/∂q_k`. Linear in `q`, so evaluating it at a basis vector gives the
/// (constant) second derivatives.
pub(crate) fn rotation_partial(q: &[f64; 4], k: usize) -> Matrix3<f64> {
    let [q1, q2, q3, q4] = *q;
    match k {
        0 => Matrix3::new(
            4.0 * q1, -2.0 * q4, 2.0 * q3,
            2.0 * q4, 4.0 * q1, -2.0 * q2,
            -2.0 * q3, 2.0 * q2, 4.0 * q1,
        ),
        1 => Matrix3::new(
            4.0 * q2, 2.0 * q3, 2.0 * q4,
            2.0 * q3, 0.0, -2.0 * q1,
            2.0 * q4, 2.0 * q1, 0.0,
        ),
        2 => Matrix3::new(
            0.0, 2.0 * q2, 2.0 * q1,
            2.0 * q2, 4.0 * q3, 2.0 * q4,
            -2.0 * q1, 2.0 * q4, 0.0,
        ),
        3 => Matrix3::new(
            0.0, -2.0 * q1, 2.0 * q2,
            2.0 * q1, 0.0, 2.0 * q3,
            2.0 * q2, 2.0 * q3, 4.0 * q4,
        ),
        _ => unreachable!("quaternion index out of range"),
    }
}

pub fn rotation_from_quat(q: &OrientationQuat) -> Matrix3<f64> {
    rotation_matrix(&q.as_array())
}

fn triangle(radius: f64) -> [Vector3<f64>; 3] {
    [
        Vector3::new(radius, 0.0, 0.0),
        Vector3::new(-radius / 2.0, radius * SQRT3 / 2.0, 0.0),
        Vector3::new(-radius / 2.0, -radius * SQRT3 / 2.0, 0.0),
    ]
}

/// Base vertices `A_1, A_2, A_3` in the fixed frame.
pub fn base_vertices(d: &DesignParams) -> [Vector3<f64>; 3] {
    triangle(d.g)
}

/// Platform vertices `b_1, b_2, b_3` in the moving frame.
pub fn platform_vertices_local(d: &DesignParams) -> [Vector3<f64>; 3] {
    triangle(d.h)
}

/// Horizontal position of `P` as a linear function of the rotation entries.
fn xy_from_rotation(r: &Matrix3<f64>, h: f64) -> (f64, f64) {
    let (ux, uy) = (r[(0, 0)], r[(1, 0)]);
    let (vx, vy) = (r[(0, 1)], r[(1, 1)]);
    let y = -h * uy;
    let x = h * (SQRT3 * ux - SQRT3 * vy - 3.0 * uy + 3.0 * vx) * SQRT3 / 6.0;
    (x, y)
}

/// Dependent coordinates `(x, y)` of the platform centre.
pub fn recover_xy(q: &OrientationQuat, d: &DesignParams) -> (f64, f64) {
    xy_from_rotation(&rotation_from_quat(q), d.h)
}

pub fn placement(pose: &Pose, d: &DesignParams) -> PlatformPlacement {
    let r = rotation_matrix(&pose.quat_array());
    let (x, y) = xy_from_rotation(&r, d.h);
    PlatformPlacement {
        p: Vector3::new(x, y, pose.z),
        r,
    }
}

/// Platform vertices `B_i` in the fixed frame.
pub fn platform_vertices(pose: &Pose, d: &DesignParams) -> [Vector3<f64>; 3] {
    let pl = placement(pose, d);
    platform_vertices_local(d).map(|b| pl.p + pl.r * b)
}

fn squared_leg_lengths(pose: &Pose, d: &DesignParams) -> [f64; 3] {
    let a = base_vertices(d);
    let b = platform_vertices(pose, d);
    [0, 1, 2].map(|i| (a[i] - b[i]).norm_squared())
}

pub fn residuals(pose: &Pose, joints: &JointConfig, d: &DesignParams) -> ConstraintResidual {
    let pl = placement(pose, d);
    let sq = squared_leg_lengths(pose, d);
    let dist = [0, 1, 2].map(|i| sq[i] - joints.rho[i] * joints.rho[i]);

    let h = d.h;
    let (ux, uy) = (pl.r[(0, 0)], pl.r[(1, 0)]);
    let (vx, vy) = (pl.r[(0, 1)], pl.r[(1, 1)]);
    let (x, y) = (pl.p.x, pl.p.y);
    let plane = [
        uy * h + y,
        y - uy * h / 2.0 + SQRT3 * vy * h / 2.0 + SQRT3 * x - SQRT3 * ux * h / 2.0 + 3.0 * vx * h / 2.0,
        y - uy * h / 2.0 - SQRT3 * vy * h / 2.0 - SQRT3 * x + SQRT3 * ux * h / 2.0 + 3.0 * vx * h / 2.0,
    ];
    ConstraintResidual { dist, plane }
}

/// The inverse kinematic map of an operation mode: leg lengths of a pose.
pub fn ikp(pose: &Pose, d: &DesignParams) -> JointConfig {
    JointConfig {
        rho: squared_leg_lengths(pose, d).map(f64::sqrt),
    }
}

/// Squared leg lengths with derivatives in the full coordinates
/// `(q1, q2, q3, q4, z)`, valid for any (not necessarily unit) quaternion.
#[derive(Debug, Clone)]
pub(crate) struct LegJet {
    pub value: [f64; 3],
    pub grad: [SVector<f64, 5>; 3],
    pub hess: Option<[SMatrix<f64, 5, 5>; 3]>,
}

pub(crate) fn leg_jet(q: &[f64; 4], z: f64, d: &DesignParams, second_order: bool) -> LegJet {
    let base = base_vertices(d);
    let local = platform_vertices_local(d);
    let r = rotation_matrix(q);
    let (x, y) = xy_from_rotation(&r, d.h);
    let p = Vector3::new(x, y, z);

    let r_k: [Matrix3<f64>; 4] = [0, 1, 2, 3].map(|k| rotation_partial(q, k));
    let p_k: [Vector3<f64>; 4] = r_k.map(|m| {
        let (px, py) = xy_from_rotation(&m, d.h);
        Vector3::new(px, py, 0.0)
    });

    let mut value = [0.0; 3];
    let mut grad = [SVector::<f64, 5>::zeros(); 3];
    let mut hess = [SMatrix::<f64, 5, 5>::zeros(); 3];

    for i in 0..3 {
        let v = base[i] - p - r * local[i];
        value[i] = v.norm_squared();

        // ∂v/∂q_k and ∂v/∂z
        let mut dv = [Vector3::zeros(); 5];
        for k in 0..4 {
            dv[k] = -(p_k[k] + r_k[k] * local[i]);
        }
        dv[4] = Vector3::new(0.0, 0.0, -1.0);
        for k in 0..5 {
            grad[i][k] = 2.0 * v.dot(&dv[k]);
        }

        if second_order {
            for k in 0..5 {
                for l in k..5 {
                    let mut h_kl = dv[k].dot(&dv[l]);
                    if k < 4 && l < 4 {
                        let mut e = [0.0; 4];
                        e[l] = 1.0;
                        let c = rotation_partial(&e, k);
                        let (cx, cy) = xy_from_rotation(&c, d.h);
                        let d2v = -(Vector3::new(cx, cy, 0.0) + c * local[i]);
                        h_kl += v.dot(&d2v);
                    }
                    hess[i][(k, l)] = 2.0 * h_kl;
                    hess[i][(l, k)] = 2.0 * h_kl;
                }
            }
        }
    }

    LegJet {
        value,
        grad,
        hess: second_order.then_some(hess),
    }
}

/// Squared leg lengths as functions of the chart `(a, b, z)`, with the
/// dependent quaternion component eliminated through the unit norm.
#[derive(Debug, Clone)]
pub(crate) struct ChartJet {
    pub value: [f64; 3],
    /// Row `i` is the gradient of leg `i` with respect to `(a, b, z)`.
    pub jacobian: Matrix3<f64>,
    pub hess: Option<[Matrix3<f64>; 3]>,
}

pub(crate) fn chart_jet(pose: &Pose, d: &DesignParams, second_order: bool) -> Result<ChartJet> {
    let r2 = pose.radius_sq();
    let dep = pose.dependent();
    if dep <= 0.0 || r2 >= 1.0 {
        return Err(Error::ChartBoundary { radius_sq: r2 });
    }
    let q = pose.quat_array();
    let jet = leg_jet(&q, pose.z, d, second_order);
    let di = pose.mode.dependent_index();

    let (a, b) = (pose.a, pose.b);
    let d_a = -a / dep;
    let d_b = -b / dep;
    let dep3 = dep * dep * dep;
    let d_aa = -(1.0 - b * b) / dep3;
    let d_ab = -a * b / dep3;
    let d_bb = -(1.0 - a * a) / dep3;

    // ∂(q1, q2, q3, q4, z)/∂(a, b, z)
    let mut embed = SMatrix::<f64, 5, 3>::zeros();
    embed[(1, 0)] = 1.0;
    embed[(2, 1)] = 1.0;
    embed[(di, 0)] = d_a;
    embed[(di, 1)] = d_b;
    embed[(4, 2)] = 1.0;

    let mut jacobian = Matrix3::zeros();
    for i in 0..3 {
        let g = jet.grad[i].transpose() * embed;
        jacobian.set_row(i, &g);
    }

    let hess = jet.hess.map(|h| {
        [0, 1, 2].map(|i| {
            let g_dep = jet.grad[i][di];
            let mut hc: Matrix3<f64> = embed.transpose() * h[i] * embed;
            hc[(0, 0)] += g_dep * d_aa;
            hc[(0, 1)] += g_dep * d_ab;
            hc[(1, 0)] += g_dep * d_ab;
            hc[(1, 1)] += g_dep * d_bb;
            hc
        })
    });

    Ok(ChartJet {
        value: jet.value,
        jacobian,
        hess,
    })
}

/// Squared leg lengths and their gradients in the free coordinates
/// `(a, b, dep, z)` used by the direct kinematic solver, where `dep` is not
/// tied to the unit norm.
pub(crate) fn free_jet(
    mode: OperationMode,
    a: f64,
    b: f64,
    dep: f64,
    z: f64,
    d: &DesignParams,
) -> ([f64; 3], [[f64; 4]; 3]) {
    let q = match mode {
        OperationMode::Om1 => [0.0, a, b, dep],
        OperationMode::Om2 => [dep, a, b, 0.0],
    };
    let jet = leg_jet(&q, z, d, false);
    let di = mode.dependent_index();
    let grads = [0, 1, 2].map(|i| {
        let g = &jet.grad[i];
        [g[1], g[2], g[di], g[4]]
    });
    (jet.value, grads)
}
