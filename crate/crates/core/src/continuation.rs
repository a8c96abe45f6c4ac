//! Parallel-singularity curves in slices `ρ₁ = const` of the joint space.
//!
//! A point of the curve is `x = (a, b, z, ρ₂, ρ₃)` with the three leg
//! equations and `det A = 0`: four equations in five unknowns. Curves are
//! followed by pseudo-arclength continuation with a minimum-norm
//! Gauss-Newton corrector. A cusp is a point where the joint-space part of
//! the unit tangent vanishes.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dkp::{solve_dkp_local, DkpConfig};
use crate::error::{Error, Result};
use crate::kinematics::residuals;
use crate::model::{DesignParams, JointConfig, OperationMode, Pose};
use crate::singularity::det_jet;

type Vec5 = SVector<f64, 5>;
type Jac = SMatrix<f64, 4, 5>;

/// Distance to the interpolated curve below which a point counts as lying
/// on it.
const ON_CURVE_TOL: f64 = 1e-5;

pub const DEFAULT_POINT_TOL: f64 = 1e-9;

/// Width of the band below the rim where a corrector stall counts as leaving
/// the chart.
const RIM_BAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    /// Nominal arclength step in `(a, b, z, ρ₂, ρ₃)`.
    pub step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Threshold on `‖(dρ₂/ds, dρ₃/ds)‖` for a cusp.
    pub cusp_tol: f64,
    /// Curve equations must hold to this level at every emitted point.
    pub point_tol: f64,
    /// Tracing stops once `a² + b²` exceeds `1 - rim_margin`.
    pub rim_margin: f64,
    pub seed: u64,
    pub n_seeds: usize,
    /// Half-width of the `z` interval for random seeds.
    pub seed_z_max: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            step: 1e-2,
            min_step: 1e-6,
            max_steps: 100_000,
            cusp_tol: 1e-3,
            point_tol: DEFAULT_POINT_TOL,
            rim_margin: 1e-6,
            seed: 0,
            n_seeds: 200,
            seed_z_max: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularCurvePoint {
    pub pose: Pose,
    pub joints: JointConfig,
    /// Unit tangent in `(a, b, z, ρ₂, ρ₃)`.
    pub tangent: [f64; 5],
}

impl SingularCurvePoint {
    fn x(&self) -> Vec5 {
        Vec5::new(self.pose.a, self.pose.b, self.pose.z, self.joints.rho[1], self.joints.rho[2])
    }

    /// `‖(dρ₂/ds, dρ₃/ds)‖`.
    pub fn projected_tangent_norm(&self) -> f64 {
        self.tangent[3].hypot(self.tangent[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEnd {
    Closed,
    ChartExit,
    MaxSteps,
    /// The corrector failed even at the minimum step.
    Stall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCurve {
    pub mode: OperationMode,
    pub rho1: f64,
    pub points: Vec<SingularCurvePoint>,
    /// How each end of the curve terminated. For a closed curve both are
    /// [`TraceEnd::Closed`] and the last point precedes the first.
    pub ends: [TraceEnd; 2],
}

impl SingularCurve {
    pub fn is_closed(&self) -> bool {
        self.ends[0] == TraceEnd::Closed
    }

    pub fn stalled(&self) -> bool {
        self.ends.contains(&TraceEnd::Stall)
    }

    /// Distance from `x` to the cubic Hermite interpolant of the points.
    fn distance_to(&self, x: &Vec5, search_radius: f64) -> f64 {
        let n = self.points.len();
        if n == 0 {
            return f64::INFINITY;
        }
        let mut best = self.points.iter().map(|p| (p.x() - x).norm()).fold(f64::INFINITY, f64::min);
        let n_seg = if self.is_closed() { n } else { n - 1 };
        for i in 0..n_seg {
            let (p, q) = (&self.points[i], &self.points[(i + 1) % n]);
            let (xp, xq) = (p.x(), q.x());
            if (xp - x).norm().min((xq - x).norm()) > search_radius {
                continue;
            }
            best = best.min(hermite_distance(&xp, &Vec5::from(p.tangent), &xq, &Vec5::from(q.tangent), x));
        }
        best
    }

    /// Symmetric Hausdorff distance between the interpolated curves, measured
    /// from each point set to the other curve.
    pub fn hausdorff(&self, other: &SingularCurve) -> f64 {
        let r = 4.0 * self.max_spacing().max(other.max_spacing());
        let one = |a: &SingularCurve, b: &SingularCurve| {
            a.points.iter().map(|p| b.distance_to(&p.x(), r)).fold(0.0, f64::max)
        };
        one(self, other).max(one(other, self))
    }

    fn max_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].x() - w[0].x()).norm()).fold(0.0, f64::max)
    }
}

/// Distance from `x` to the cubic Hermite segment through `p`, `q` with unit
/// tangents `tp`, `tq` scaled by the chord length.
fn hermite_distance(p: &Vec5, tp: &Vec5, q: &Vec5, tq: &Vec5, x: &Vec5) -> f64 {
    let h = (q - p).norm();
    let eval = |s: f64| {
        let (s2, s3) = (s * s, s * s * s);
        p * (2.0 * s3 - 3.0 * s2 + 1.0) + tp * (h * (s3 - 2.0 * s2 + s)) + q * (-2.0 * s3 + 3.0 * s2) + tq * (h * (s3 - s2))
    };
    let f = |s: f64| (eval(s) - x).norm();
    let coarse = (0..=16).map(|k| k as f64 / 16.0).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (lo, hi) = ((coarse - 1.0 / 16.0).max(0.0), (coarse + 1.0 / 16.0).min(1.0));
    let s = golden_min(f, lo, hi, 1e-12);
    f(s)
}

/// Minimizer of a unimodal function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspPoint {
    pub joints: JointConfig,
    pub pose: Pose,
    /// `‖(dρ₂/ds, dρ₃/ds)‖` at the refined point.
    pub tangent_norm: f64,
}

/// Outcome of looking for coalescing direct-kinematic solutions at a cusp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceCheck {
    /// Distinct solutions within `radius` of the cusp pose.
    pub nearby: Vec<Pose>,
    pub radius: f64,
    pub passed: bool,
}

struct Slice<'a> {
    mode: OperationMode,
    rho1: f64,
    d: &'a DesignParams,
    tol: f64,
}

enum Eval {
    Ok { f: Vector4<f64>, j: Jac },
    Rim,
}

impl Slice<'_> {
    fn pose(&self, x: &Vec5) -> Option<Pose> {
        Pose::new(self.mode, x[0], x[1], x[2]).ok()
    }

    fn eval(&self, x: &Vec5) -> Eval {
        let Some(pose) = self.pose(x) else {
            return Eval::Rim;
        };
        let Ok((jet, det, grad)) = det_jet(&pose, self.d) else {
            return Eval::Rim;
        };
        let rho = [self.rho1, x[3], x[4]];
        let mut f = Vector4::zeros();
        let mut j = Jac::zeros();
        for i in 0..3 {
            f[i] = jet.value[i] - rho[i] * rho[i];
            for k in 0..3 {
                j[(i, k)] = jet.jacobian[(i, k)];
            }
        }
        j[(1, 3)] = -2.0 * x[3];
        j[(2, 4)] = -2.0 * x[4];
        f[3] = det;
        for k in 0..3 {
            j[(3, k)] = grad[k];
        }
        Eval::Ok { f, j }
    }

    /// Minimum-norm Gauss-Newton onto the curve.
    fn correct(&self, mut x: Vec5, max_iter: usize) -> Option<Vec5> {
        for _ in 0..max_iter {
            let Eval::Ok { f, j } = self.eval(&x) else {
                return None;
            };
            let jjt = j * j.transpose();
            let y = jjt.lu().solve(&f)?;
            let dx = j.transpose() * y;
            x -= dx;
            if !x.iter().all(|v| v.is_finite()) {
                return None;
            }
            if dx.norm() <= 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
        self.satisfied(&x).then_some(x)
    }

    /// Newton with the extra equation `t·(x - base) = s`.
    fn correct_on_plane(&self, mut x: Vec5, base: &Vec5, t: &Vec5, s: f64) -> Option<Vec5> {
        for _ in 0..30 {
            let Eval::Ok { f, j } = self.eval(&x) else {
                return None;
            };
            let mut m = SMatrix::<f64, 5, 5>::zeros();
            let mut rhs = Vec5::zeros();
            for r in 0..4 {
                m.set_row(r, &j.row(r));
                rhs[r] = f[r];
            }
            m.set_row(4, &t.transpose());
            rhs[4] = t.dot(&(x - base)) - s;
            let dx = m.lu().solve(&rhs)?;
            x -= dx;
            if dx.norm() <= 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
        self.satisfied(&x).then_some(x)
    }

    fn satisfied(&self, x: &Vec5) -> bool {
        match self.eval(x) {
            Eval::Ok { f, .. } => f.iter().all(|v| v.abs() <= self.tol),
            Eval::Rim => false,
        }
    }

    /// Unit null vector of the Jacobian from its signed 4×4 minors.
    fn tangent(&self, x: &Vec5) -> Option<Vec5> {
        let Eval::Ok { j, .. } = self.eval(x) else {
            return None;
        };
        let mut t = Vec5::zeros();
        for k in 0..5 {
            let cols: Vec<usize> = (0..5).filter(|&c| c != k).collect();
            let m = Matrix4::from_fn(|r, c| j[(r, cols[c])]);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            t[k] = sign * m.determinant();
        }
        let n = t.norm();
        (n > 0.0 && n.is_finite()).then(|| t / n)
    }

    fn point(&self, x: &Vec5, t: &Vec5) -> Option<SingularCurvePoint> {
        let pose = self.pose(x)?;
        Some(SingularCurvePoint {
            pose,
            joints: JointConfig { rho: [self.rho1, x[3], x[4]] },
            tangent: [t[0], t[1], t[2], t[3], t[4]],
        })
    }
}

fn validate_rho1(rho1: f64) -> Result<()> {
    if !(rho1 > 0.0) || !rho1.is_finite() {
        return Err(Error::invalid(format!("rho1 must be positive, got {rho1}")));
    }
    Ok(())
}

fn validate_point(p: &SingularCurvePoint, d: &DesignParams, tol: f64) -> Result<()> {
    let r = residuals(&p.pose, &p.joints, d).max_abs();
    let det = det_jet(&p.pose, d)?.1;
    if r > tol || det.abs() > tol {
        return Err(Error::invalid(format!(
            "seed is not on the singular curve (residual {r:e}, det {det:e})"
        )));
    }
    Ok(())
}

/// Points of the singular curves of the slice `ρ₁ = rho1`, found by
/// correcting random poses onto the curve equations. Points closer than one
/// step to each other are merged.
pub fn seed_singular_points(
    rho1: f64,
    mode: OperationMode,
    d: &DesignParams,
    n_seeds: usize,
    cfg: &ContinuationConfig,
) -> Result<Vec<SingularCurvePoint>> {
    validate_rho1(rho1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = (0..n_seeds).filter_map(|_| {
        let r = rng.gen_range(0.0f64..1.0).sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = rng.gen_range(-cfg.seed_z_max..=cfg.seed_z_max);
        let pose = Pose::new(mode, r * phi.cos(), r * phi.sin(), z).ok()?;
        let rho = crate::kinematics::ikp(&pose, d).rho;
        Some(Vec5::new(pose.a, pose.b, z, rho[1], rho[2]))
    });
    let starts: Vec<Vec5> = starts.collect();
    Ok(correct_starts(&Slice { mode, rho1, d, tol: cfg.point_tol }, &starts, cfg))
}

fn correct_starts(slice: &Slice, starts: &[Vec5], cfg: &ContinuationConfig) -> Vec<SingularCurvePoint> {
    let mut out: Vec<SingularCurvePoint> = Vec::new();
    for x0 in starts {
        let Some(mut x) = slice.correct(*x0, 60) else {
            continue;
        };
        // Only squared leg lengths enter the equations.
        x[3] = x[3].abs();
        x[4] = x[4].abs();
        if x[0] * x[0] + x[1] * x[1] > 1.0 - cfg.rim_margin {
            continue;
        }
        let Some(t) = slice.tangent(&x) else {
            continue;
        };
        let Some(p) = slice.point(&x, &t) else {
            continue;
        };
        if validate_point(&p, slice.d, cfg.point_tol).is_err() {
            continue;
        }
        if out.iter().all(|q| (q.x() - x).norm() > cfg.step) {
            out.push(p);
        }
    }
    out
}

enum Leg {
    Closed,
    Open(TraceEnd),
}

fn segment_point_distance(p: &Vec5, q: &Vec5, x: &Vec5) -> f64 {
    let v = q - p;
    let len2 = v.norm_squared();
    let s = if len2 > 0.0 { ((x - p).dot(&v) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p + v * s - x).norm()
}

/// Follows the curve from `start` in the direction `dir`, appending points.
fn trace_leg(
    slice: &Slice,
    start: &Vec5,
    dir: Vec5,
    cfg: &ContinuationConfig,
    out: &mut Vec<SingularCurvePoint>,
) -> Leg {
    let mut x = *start;
    let mut t = dir;
    let mut h = cfg.step;
    let mut travelled = 0.0;
    for _ in 0..cfg.max_steps {
        let accepted = loop {
            if h < cfg.min_step {
                break None;
            }
            let pred = x + t * h;
            match slice.correct(pred, 8) {
                Some(xn) if (xn - pred).norm() <= 0.5 * h => {
                    if xn[0] * xn[0] + xn[1] * xn[1] > 1.0 - cfg.rim_margin {
                        return Leg::Open(TraceEnd::ChartExit);
                    }
                    match slice.tangent(&xn) {
                        Some(mut tn) => {
                            if tn.dot(&t) < 0.0 {
                                tn = -tn;
                            }
                            if tn.dot(&t) >= 0.9 {
                                break Some((xn, tn));
                            }
                            h *= 0.5;
                        }
                        None => h *= 0.5,
                    }
                }
                Some(_) => h *= 0.5,
                None => {
                    if matches!(slice.eval(&pred), Eval::Rim) && h <= 4.0 * cfg.min_step {
                        return Leg::Open(TraceEnd::ChartExit);
                    }
                    h *= 0.5;
                }
            }
        };
        let Some((xn, tn)) = accepted else {
            // Close to the rim the chart is too ill-conditioned to meet the
            // point tolerance.
            if x[0] * x[0] + x[1] * x[1] > 1.0 - RIM_BAND {
                return Leg::Open(TraceEnd::ChartExit);
            }
            return Leg::Open(TraceEnd::Stall);
        };
        travelled += (xn - x).norm();
        if travelled > 3.0 * cfg.step && segment_point_distance(&x, &xn, start) < 0.5 * cfg.step {
            return Leg::Closed;
        }
        x = xn;
        t = tn;
        match slice.point(&x, &t) {
            Some(p) => out.push(p),
            None => return Leg::Open(TraceEnd::ChartExit),
        }
        h = (2.0 * h).min(cfg.step);
    }
    Leg::Open(TraceEnd::MaxSteps)
}

/// The whole curve through `seed`, following the seed tangent first. If it
/// does not close up, the opposite direction is traced as well and the
/// points are returned in curve order.
pub fn trace_curve(seed: &SingularCurvePoint, d: &DesignParams, cfg: &ContinuationConfig) -> Result<SingularCurve> {
    validate_rho1(seed.joints.rho[0])?;
    validate_point(seed, d, cfg.point_tol)?;
    let slice = Slice {
        mode: seed.pose.mode,
        rho1: seed.joints.rho[0],
        d,
        tol: cfg.point_tol,
    };
    let x0 = seed.x();
    let t0 = Vec5::from(seed.tangent);
    let mut forward = vec![*seed];
    match trace_leg(&slice, &x0, t0, cfg, &mut forward) {
        Leg::Closed => Ok(SingularCurve {
            mode: slice.mode,
            rho1: slice.rho1,
            points: forward,
            ends: [TraceEnd::Closed; 2],
        }),
        Leg::Open(end_fwd) => {
            let mut backward = Vec::new();
            let end_bwd = match trace_leg(&slice, &x0, -t0, cfg, &mut backward) {
                Leg::Open(e) => e,
                // Cannot happen for a curve that did not close forward, but
                // a loop is the safe reading.
                Leg::Closed => TraceEnd::Closed,
            };
            backward.reverse();
            backward.extend(forward);
            Ok(SingularCurve {
                mode: slice.mode,
                rho1: slice.rho1,
                points: backward,
                ends: [end_bwd, end_fwd],
            })
        }
    }
}

/// Traces every curve reached from the seeds of the slice, skipping seeds
/// that lie on a curve already traced.
pub fn trace_slice(rho1: f64, mode: OperationMode, d: &DesignParams, cfg: &ContinuationConfig) -> Result<Vec<SingularCurve>> {
    trace_slice_from(rho1, mode, d, cfg, &[])
}

/// As [`trace_slice`], with extra starting points tried before the random
/// seeds; their `ρ₁` is replaced by `rho1`.
fn trace_slice_from(
    rho1: f64,
    mode: OperationMode,
    d: &DesignParams,
    cfg: &ContinuationConfig,
    warm: &[Vec5],
) -> Result<Vec<SingularCurve>> {
    let mut seeds = correct_starts(&Slice { mode, rho1, d, tol: cfg.point_tol }, warm, cfg);
    seeds.extend(seed_singular_points(rho1, mode, d, cfg.n_seeds, cfg)?);
    let mut curves: Vec<SingularCurve> = Vec::new();
    for s in &seeds {
        let x = s.x();
        if curves.iter().any(|c| c.distance_to(&x, 4.0 * cfg.step) <= ON_CURVE_TOL) {
            continue;
        }
        let curve = trace_curve(s, d, cfg)?;
        // Curves may pass close to each other, so a retrace is recognised
        // by most of its points lying on an earlier curve.
        let on_earlier = curve
            .points
            .iter()
            .filter(|p| curves.iter().any(|c| c.distance_to(&p.x(), 4.0 * cfg.step) <= ON_CURVE_TOL))
            .count();
        if 2 * on_earlier <= curve.points.len() {
            curves.push(curve);
        }
    }
    Ok(curves)
}

/// Cusps along a traced curve: local minima of the projected tangent norm,
/// refined by golden-section search over the arclength and kept when the
/// refined norm is below `tol`.
pub fn detect_cusps(curve: &SingularCurve, d: &DesignParams, tol: f64) -> Vec<CuspPoint> {
    let pts = &curve.points;
    let n = pts.len();
    if n < 3 {
        return Vec::new();
    }
    let slice = Slice {
        mode: curve.mode,
        rho1: curve.rho1,
        d,
        tol: DEFAULT_POINT_TOL,
    };
    let closed = curve.is_closed();
    let norm = |i: usize| pts[i].projected_tangent_norm();
    let mut out: Vec<CuspPoint> = Vec::new();
    let range: Vec<usize> = if closed { (0..n).collect() } else { (1..n - 1).collect() };
    for i in range {
        let (ip, inx) = ((i + n - 1) % n, (i + 1) % n);
        if !(norm(i) <= norm(ip) && norm(i) < norm(inx)) {
            continue;
        }
        let base = pts[i].x();
        let t = Vec5::from(pts[i].tangent);
        let (lo, hi) = (-(base - pts[ip].x()).norm(), (pts[inx].x() - base).norm());
        let eval = |s: f64| -> Option<(Vec5, Vec5)> {
            let x = slice.correct_on_plane(base + t * s, &base, &t, s)?;
            let tn = slice.tangent(&x)?;
            Some((x, tn))
        };
        let objective = |s: f64| eval(s).map_or(f64::INFINITY, |(_, tn)| tn[3].hypot(tn[4]));
        let s = golden_min(objective, lo, hi, 1e-10);
        let Some((x, tn)) = eval(s) else {
            continue;
        };
        let tnorm = tn[3].hypot(tn[4]);
        if tnorm > tol {
            continue;
        }
        if let Some(p) = slice.point(&x, &tn) {
            if out.iter().any(|c| c.pose.chart_distance(&p.pose) <= 1e-6) {
                continue;
            }
            out.push(CuspPoint {
                joints: p.joints,
                pose: p.pose,
                tangent_norm: tnorm,
            });
        }
    }
    out
}

/// Looks for at least two direct-kinematic solutions at the cusp's joint
/// vector lying within `radius` of the cusp pose and of each other.
pub fn cusp_coalescence(cusp: &CuspPoint, d: &DesignParams, radius: f64, dkp: &DkpConfig) -> Result<CoalescenceCheck> {
    let cfg = DkpConfig {
        dedup_tol: 1e-7,
        n_starts: dkp.n_starts.min(400),
        ..*dkp
    };
    let set = solve_dkp_local(&cusp.joints, &cusp.pose, 0.05, d, &cfg)?;
    let nearby: Vec<Pose> = set
        .solutions
        .iter()
        .map(|s| s.pose)
        .filter(|p| p.chart_distance(&cusp.pose) <= radius)
        .collect();
    let passed = nearby
        .iter()
        .enumerate()
        .any(|(i, p)| nearby[i + 1..].iter().any(|q| p.chart_distance(q) <= radius));
    Ok(CoalescenceCheck { nearby, radius, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspPolyline {
    pub mode: OperationMode,
    /// Joint vectors ordered by increasing `ρ₁`.
    pub points: Vec<CuspPoint>,
}

/// Cusps of every slice in `lo..=hi` with spacing `step`, chained across
/// neighbouring slices by nearest joint-space distance.
pub fn sweep_cusp_curves(
    lo: f64,
    hi: f64,
    step: f64,
    mode: OperationMode,
    d: &DesignParams,
    cfg: &ContinuationConfig,
) -> Result<Vec<CuspPolyline>> {
    if !(lo > 0.0) || !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("invalid sweep range [{lo}, {hi}] step {step}")));
    }
    if hi < lo {
        return Ok(Vec::new());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let link = 5.0 * step;
    let mut lines: Vec<CuspPolyline> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut warm: Vec<Vec5> = Vec::new();
    for k in 0..=n {
        let rho1 = lo + k as f64 * step;
        let mut cusps: Vec<CuspPoint> = Vec::new();
        for curve in trace_slice_from(rho1, mode, d, cfg, &warm)? {
            for c in detect_cusps(&curve, d, cfg.cusp_tol) {
                if cusps.iter().all(|o| o.joints.distance(&c.joints) > 1e-6) {
                    cusps.push(c);
                }
            }
        }
        warm = cusps
            .iter()
            .map(|c| Vec5::new(c.pose.a, c.pose.b, c.pose.z, c.joints.rho[1], c.joints.rho[2]))
            .collect();
        cusps.sort_by(|a, b| {
            a.joints.rho[1]
                .total_cmp(&b.joints.rho[1])
                .then(a.joints.rho[2].total_cmp(&b.joints.rho[2]))
        });

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (oi, &line) in open.iter().enumerate() {
            let last = lines[line].points.last().expect("open lines are non-empty");
            for (ci, c) in cusps.iter().enumerate() {
                let dist = last.joints.distance(&c.joints);
                if dist <= link {
                    pairs.push((dist, oi, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut line_used = vec![false; open.len()];
        let mut cusp_line: Vec<Option<usize>> = vec![None; cusps.len()];
        for (_, oi, ci) in pairs {
            if !line_used[oi] && cusp_line[ci].is_none() {
                line_used[oi] = true;
                cusp_line[ci] = Some(open[oi]);
            }
        }
        let mut next_open = Vec::new();
        for (ci, c) in cusps.into_iter().enumerate() {
            let line = cusp_line[ci].unwrap_or_else(|| {
                lines.push(CuspPolyline { mode, points: Vec::new() });
                lines.len() - 1
            });
            lines[line].points.push(c);
            next_open.push(line);
        }
        open = next_open;
    }
    Ok(lines)
}

/// CSV with columns `curve,rho1,rho2,rho3`.
pub fn cusp_csv(lines: &[CuspPolyline]) -> String {
    let mut s = String::from("curve,rho1,rho2,rho3\n");
    for (id, line) in lines.iter().enumerate() {
        for p in &line.points {
            let r = p.joints.rho;
            s.push_str(&format!("{id},{:.16e},{:.16e},{:.16e}\n", r[0], r[1], r[2]));
        }
    }
    s
}
