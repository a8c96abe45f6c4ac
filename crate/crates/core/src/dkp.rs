//! Direct kinematics within one operation mode.
//!
//! The unknowns are `(a, b, dep, z)`, with the dependent quaternion component
//! left free during iteration and the unit norm imposed as a fourth equation.
//! Damped Newton runs from many random starts; converged points are
//! canonicalized, polished on the chart and deduplicated.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{free_jet, residuals};
use crate::model::{DesignParams, JointConfig, OperationMode, Pose};
use crate::singularity::det_a;

/// Per-mode upper bound on the number of real solutions.
pub const MAX_SOLUTIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DkpConfig {
    pub seed: u64,
    pub n_starts: usize,
    /// Half-width of the `z` sampling interval; derived from the leg lengths
    /// when absent.
    pub z_max: Option<f64>,
    pub converge_tol: f64,
    pub accept_tol: f64,
    pub max_iter: usize,
    pub dedup_tol: f64,
    pub boundary_tol: f64,
}

impl Default for DkpConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_starts: 4000,
            z_max: None,
            converge_tol: 1e-12,
            accept_tol: 1e-9,
            max_iter: 100,
            dedup_tol: 1e-6,
            boundary_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkpSolution {
    pub pose: Pose,
    /// Calibrated `det A`; `None` for boundary solutions.
    pub det_a: Option<f64>,
    /// Largest absolute distance residual.
    pub residual: f64,
    /// `a² + b²` within `boundary_tol` of 1.
    pub boundary: bool,
}

impl DkpSolution {
    /// `Some(1)` or `Some(-1)` for interior solutions with nonzero `det A`.
    pub fn sign(&self) -> Option<i8> {
        match self.det_a {
            Some(v) if v > 0.0 => Some(1),
            Some(v) if v < 0.0 => Some(-1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpSolutionSet {
    pub joints: JointConfig,
    pub mode: OperationMode,
    pub solutions: Vec<DkpSolution>,
}

impl DkpSolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Solution closest to `pose` in chart distance.
    pub fn nearest(&self, pose: &Pose) -> Option<(&DkpSolution, f64)> {
        self.solutions
            .iter()
            .map(|s| (s, s.pose.chart_distance(pose)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
    }
}

pub fn default_z_max(joints: &JointConfig, d: &DesignParams) -> f64 {
    2.0 * joints.rho.iter().sum::<f64>() / 3.0 + d.g + d.h
}

struct System<'a> {
    mode: OperationMode,
    rho_sq: [f64; 3],
    d: &'a DesignParams,
}

impl System<'_> {
    fn eval(&self, u: &Vector4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
        let (val, grads) = free_jet(self.mode, u[0], u[1], u[2], u[3], self.d);
        let mut f = Vector4::zeros();
        let mut j = Matrix4::zeros();
        for i in 0..3 {
            f[i] = val[i] - self.rho_sq[i];
            for k in 0..4 {
                j[(i, k)] = grads[i][k];
            }
        }
        f[3] = u[0] * u[0] + u[1] * u[1] + u[2] * u[2] - 1.0;
        j[(3, 0)] = 2.0 * u[0];
        j[(3, 1)] = 2.0 * u[1];
        j[(3, 2)] = 2.0 * u[2];
        (f, j)
    }

    fn residual(&self, u: &Vector4<f64>) -> Vector4<f64> {
        let (val, _) = free_jet(self.mode, u[0], u[1], u[2], u[3], self.d);
        Vector4::new(
            val[0] - self.rho_sq[0],
            val[1] - self.rho_sq[1],
            val[2] - self.rho_sq[2],
            u[0] * u[0] + u[1] * u[1] + u[2] * u[2] - 1.0,
        )
    }

    /// Damped Newton; returns the final iterate and residual norm.
    fn newton(&self, mut u: Vector4<f64>, cfg: &DkpConfig) -> Option<(Vector4<f64>, f64)> {
        let (mut f, mut j) = self.eval(&u);
        let mut fnorm = f.norm();
        for _ in 0..cfg.max_iter {
            if fnorm <= cfg.converge_tol {
                break;
            }
            let step = j.lu().solve(&(-f))?;
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-10 {
                let trial = u + step * t;
                let ft = self.residual(&trial);
                let ftn = ft.norm();
                if ftn.is_finite() && ftn < fnorm {
                    u = trial;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
            (f, j) = self.eval(&u);
            fnorm = f.norm();
        }
        (fnorm <= cfg.accept_tol).then_some((u, fnorm))
    }
}

fn to_pose(mode: OperationMode, u: &Vector4<f64>, boundary_tol: f64) -> Option<(Pose, bool)> {
    let mut q = [u[0], u[1], u[2]];
    if q[2] < 0.0 {
        q = q.map(|c| -c);
    }
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    let (mut a, mut b) = (q[0] / n, q[1] / n);
    let mut r2 = a * a + b * b;
    if r2 > 1.0 {
        let r = r2.sqrt();
        a /= r;
        b /= r;
        r2 = a * a + b * b;
    }
    let pose = Pose::new(mode, a, b, u[3]).ok()?;
    Some((pose, (1.0 - r2).abs() <= boundary_tol || r2 > 1.0))
}

pub(crate) fn run_starts(
    joints: &JointConfig,
    mode: OperationMode,
    d: &DesignParams,
    cfg: &DkpConfig,
    starts: impl Iterator<Item = Vector4<f64>>,
    capped: bool,
) -> Result<DkpSolutionSet> {
    let sys = System {
        mode,
        rho_sq: joints.rho.map(|r| r * r),
        d,
    };
    let mut found: Vec<(Pose, bool)> = Vec::new();
    for u0 in starts {
        if let Some((u, _)) = sys.newton(u0, cfg) {
            if let Some(p) = to_pose(mode, &u, cfg.boundary_tol) {
                found.push(p);
            }
        }
    }
    found.sort_by(|x, y| {
        let (cx, cy) = (x.0.chart(), y.0.chart());
        cx[0]
            .total_cmp(&cy[0])
            .then(cx[1].total_cmp(&cy[1]))
            .then(cx[2].total_cmp(&cy[2]))
    });

    let mut kept: Vec<(Pose, bool)> = Vec::new();
    for cand in found {
        if kept.iter().all(|k| k.0.chart_distance(&cand.0) >= cfg.dedup_tol) {
            kept.push(cand);
        }
    }

    let solutions: Vec<DkpSolution> = kept
        .into_iter()
        .filter_map(|(pose, boundary)| {
            let residual = residuals(&pose, joints, d)
                .dist
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()));
            if residual > cfg.accept_tol {
                return None;
            }
            let det = if boundary { None } else { det_a(&pose, d).ok() };
            Some(DkpSolution {
                pose,
                det_a: det,
                residual,
                boundary: boundary || det.is_none(),
            })
        })
        .collect();

    if capped && solutions.len() > MAX_SOLUTIONS {
        return Err(Error::TooManySolutions {
            count: solutions.len(),
        });
    }
    Ok(DkpSolutionSet {
        joints: *joints,
        mode,
        solutions,
    })
}

pub(crate) fn random_starts(joints: &JointConfig, d: &DesignParams, cfg: &DkpConfig) -> impl Iterator<Item = Vector4<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let z_max = cfg.z_max.unwrap_or_else(|| default_z_max(joints, d));
    (0..cfg.n_starts).map(move |_| {
        let w: f64 = rng.gen_range(-1.0..=1.0);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - w * w).sqrt();
        let z: f64 = rng.gen_range(-z_max..=z_max);
        Vector4::new(s * phi.cos(), s * phi.sin(), w, z)
    })
}

fn validate(joints: &JointConfig) -> Result<()> {
    if joints.rho.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid(format!(
            "leg lengths must be positive, got {:?}",
            joints.rho
        )));
    }
    Ok(())
}

/// All real poses of `mode` with the given leg lengths.
pub fn solve_dkp(joints: &JointConfig, mode: OperationMode, d: &DesignParams, cfg: &DkpConfig) -> Result<DkpSolutionSet> {
    validate(joints)?;
    run_starts(joints, mode, d, cfg, random_starts(joints, d, cfg), true)
}

/// Newton from starts scattered around `center` (radius `spread` in every
/// coordinate), deduplicated with `cfg.dedup_tol`. Used to resolve clusters
/// of nearly coincident solutions, so the result is not capped at
/// [`MAX_SOLUTIONS`]: near a multiple root the slowly converging iterates
/// stay apart by more than a tight deduplication tolerance.
pub fn solve_dkp_local(
    joints: &JointConfig,
    center: &Pose,
    spread: f64,
    d: &DesignParams,
    cfg: &DkpConfig,
) -> Result<DkpSolutionSet> {
    validate(joints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = center.quat_array();
    let di = center.mode.dependent_index();
    let c = Vector4::new(q[1], q[2], q[di], center.z);
    let starts = (0..cfg.n_starts).map(move |_| {
        c + Vector4::from_fn(|_, _| rng.gen_range(-spread..=spread))
    });
    run_starts(joints, center.mode, d, cfg, starts, false)
}

/// `(n_pos, n_neg)`; boundary solutions are in neither.
pub fn count_by_sign(set: &DkpSolutionSet) -> (usize, usize) {
    set.solutions.iter().fold((0, 0), |(p, n), s| match s.sign() {
        Some(1) => (p + 1, n),
        Some(_) => (p, n + 1),
        None => (p, n),
    })
}

/// Whether the direct kinematics of `ikp(pose)` recovers `pose`.
pub fn roundtrip_check(pose: &Pose, d: &DesignParams, cfg: &DkpConfig) -> bool {
    let joints = crate::kinematics::ikp(pose, d);
    match solve_dkp(&joints, pose.mode, d, cfg) {
        Ok(set) => set.nearest(pose).is_some_and(|(_, dist)| dist <= 1e-6),
        Err(_) => false,
    }
}
