//! Piecewise-linear workspace paths, singularity repair and assembly-mode
//! change certificates.
//!
//! Paths are straight segments in chart coordinates `(a, b, z)`. A segment
//! that crosses `det A = 0` is repaired by inserting a waypoint at its
//! midpoint and pushing that waypoint uphill on `sign · det A` (with `z`
//! held fixed) until both halves are clear, recursing on halves that still
//! fail.

use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::ikp;
use crate::model::{DesignParams, JointConfig, OperationMode, Pose};
use crate::singularity::{det_a, det_a_with_gradient};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub samples_per_segment: usize,
    /// `|det A|` at or below this counts as singular along a path.
    pub eps_sing: f64,
    pub max_depth: usize,
    /// Gradient-ascent iterations allowed per inserted waypoint.
    pub ascent_iters: usize,
    /// Chart length of one ascent step.
    pub ascent_step: f64,
    /// Inserted waypoints keep `a² + b² <= (1 - rim_margin)²`.
    pub rim_margin: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            samples_per_segment: 400,
            eps_sing: 1e-6,
            max_depth: 10,
            ascent_iters: 400,
            ascent_step: 5e-3,
            rim_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentCheck {
    pub ok: bool,
    /// First parameter where `det A` changes sign or falls under the
    /// threshold, refined by bisection.
    pub crossing: Option<f64>,
    /// Smallest sampled `|det A|`.
    pub min_abs_det: f64,
}

fn det_along(p: &Pose, q: &Pose, t: f64, d: &DesignParams) -> Result<f64> {
    let x = p.lerp(q, t);
    if x.radius_sq() >= 1.0 {
        return Err(Error::ChartExit { t });
    }
    det_a(&x, d)
}

/// Samples `det A` at `n + 1` equally spaced points of the chart segment
/// from `p` to `q`.
pub fn segment_check(p: &Pose, q: &Pose, n: usize, d: &DesignParams, eps_sing: f64) -> Result<SegmentCheck> {
    if p.mode != q.mode {
        return Err(Error::invalid("segment endpoints lie in different operation modes"));
    }
    // r² is convex along a chart segment, so only the endpoints can leave.
    if p.radius_sq() >= 1.0 {
        return Err(Error::ChartExit { t: 0.0 });
    }
    if q.radius_sq() >= 1.0 {
        return Err(Error::ChartExit { t: 1.0 });
    }
    let n = n.max(1);
    let d0 = det_along(p, q, 0.0, d)?;
    let s0 = d0.signum();
    let bad = |v: f64| v.abs() <= eps_sing || v.signum() != s0;
    let mut min_abs = d0.abs();
    if bad(d0) {
        return Ok(SegmentCheck {
            ok: false,
            crossing: Some(0.0),
            min_abs_det: min_abs,
        });
    }
    let mut prev = 0.0;
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let v = det_along(p, q, t, d)?;
        min_abs = min_abs.min(v.abs());
        if bad(v) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if bad(det_along(p, q, mid, d)?) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(SegmentCheck {
                ok: false,
                crossing: Some(hi),
                min_abs_det: min_abs,
            });
        }
        prev = t;
    }
    Ok(SegmentCheck {
        ok: true,
        crossing: None,
        min_abs_det: min_abs,
    })
}

/// An ordered list of chart waypoints in one operation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub mode: OperationMode,
    /// `(a, b, z)` per waypoint.
    pub waypoints: Vec<[f64; 3]>,
    pub samples_per_segment: usize,
    /// Positions in `waypoints` of the caller's original waypoints.
    pub anchors: Vec<usize>,
}

impl PathPlan {
    pub fn from_poses(poses: &[Pose], samples_per_segment: usize) -> Result<Self> {
        let Some(first) = poses.first() else {
            return Err(Error::invalid("a path needs at least one waypoint"));
        };
        if poses.iter().any(|p| p.mode != first.mode) {
            return Err(Error::invalid("waypoints lie in different operation modes"));
        }
        Ok(Self {
            mode: first.mode,
            waypoints: poses.iter().map(Pose::chart).collect(),
            samples_per_segment,
            anchors: (0..poses.len()).collect(),
        })
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        self.waypoints
            .iter()
            .map(|c| Pose::new(self.mode, c[0], c[1], c[2]))
            .collect()
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn is_closed(&self) -> bool {
        self.waypoints.len() > 1 && self.waypoints.first() == self.waypoints.last()
    }

    /// The part of the plan between two anchors.
    pub fn subpath(&self, from_anchor: usize, to_anchor: usize) -> Result<PathPlan> {
        let (Some(&i), Some(&j)) = (self.anchors.get(from_anchor), self.anchors.get(to_anchor)) else {
            return Err(Error::invalid("anchor index out of range"));
        };
        if i > j {
            return Err(Error::invalid("anchors out of order"));
        }
        Ok(PathPlan {
            mode: self.mode,
            waypoints: self.waypoints[i..=j].to_vec(),
            samples_per_segment: self.samples_per_segment,
            anchors: self.anchors[from_anchor..=to_anchor].iter().map(|a| a - i).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: PathPlan = serde_json::from_str(s)?;
        plan.poses()?;
        Ok(plan)
    }
}

fn clamp_to_disk(a: f64, b: f64, margin: f64) -> (f64, f64) {
    let r = (a * a + b * b).sqrt();
    let r_max = 1.0 - margin;
    if r > r_max {
        (a * r_max / r, b * r_max / r)
    } else {
        (a, b)
    }
}

struct Planner<'a> {
    d: &'a DesignParams,
    cfg: &'a TrajectoryConfig,
    sign: f64,
}

impl Planner<'_> {
    fn clear(&self, p: &Pose, q: &Pose) -> Result<bool> {
        Ok(segment_check(p, q, self.cfg.samples_per_segment, self.d, self.cfg.eps_sing)?.ok)
    }

    /// Midpoint pushed along the in-slice ascent direction of
    /// `sign · det A` until both halves are clear, or the iteration budget
    /// runs out.
    fn displaced_midpoint(&self, p: &Pose, q: &Pose) -> Result<Pose> {
        let mut m = p.lerp(q, 0.5);
        for _ in 0..self.cfg.ascent_iters {
            if self.clear(p, &m)? && self.clear(&m, q)? {
                break;
            }
            let (_, g) = det_a_with_gradient(&m, self.d)?;
            let g2 = Vector2::new(g[0], g[1]) * self.sign;
            let norm = g2.norm();
            if !(norm > 0.0) {
                break;
            }
            let step = g2 * (self.cfg.ascent_step / norm);
            let (a, b) = clamp_to_disk(m.a + step[0], m.b + step[1], self.cfg.rim_margin);
            m = Pose::new(m.mode, a, b, m.z)?;
        }
        Ok(m)
    }

    fn repair(&self, p: &Pose, q: &Pose, depth: usize, out: &mut Vec<Pose>) -> Result<()> {
        if self.clear(p, q)? {
            return Ok(());
        }
        if depth >= self.cfg.max_depth {
            return Err(Error::NoPath(format!(
                "segment {:?} -> {:?} still crosses a singularity at depth {depth}",
                p.chart(),
                q.chart()
            )));
        }
        let m = self.displaced_midpoint(p, q)?;
        let dm = det_a(&m, self.d)?;
        if dm * self.sign <= self.cfg.eps_sing {
            return Err(Error::NoPath(format!(
                "no nonsingular detour point found between {:?} and {:?}",
                p.chart(),
                q.chart()
            )));
        }
        self.repair(p, &m, depth + 1, out)?;
        out.push(m);
        self.repair(&m, q, depth + 1, out)
    }
}

/// Connects the waypoints in order, inserting detour waypoints wherever a
/// straight segment meets a singularity.
pub fn plan_path(waypoints: &[Pose], d: &DesignParams, cfg: &TrajectoryConfig) -> Result<PathPlan> {
    let mut plan = PathPlan::from_poses(waypoints, cfg.samples_per_segment)?;
    let dets: Vec<f64> = waypoints.iter().map(|p| det_a(p, d)).collect::<Result<_>>()?;
    if let Some(v) = dets.iter().find(|v| v.abs() <= cfg.eps_sing) {
        return Err(Error::Singular { det_a: *v });
    }
    let sign = dets[0].signum();
    if dets.iter().any(|v| v.signum() != sign) {
        return Err(Error::invalid("waypoints have different signs of det A"));
    }

    let planner = Planner { d, cfg, sign };
    let mut poses = vec![waypoints[0]];
    let mut anchors = vec![0];
    for pair in waypoints.windows(2) {
        planner.repair(&pair[0], &pair[1], 0, &mut poses)?;
        poses.push(pair[1]);
        anchors.push(poses.len() - 1);
    }
    plan.waypoints = poses.iter().map(Pose::chart).collect();
    plan.anchors = anchors;
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// Normalised arclength in `[0, 1]`.
    pub s: f64,
    pub det_a: f64,
    pub rho: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetProfile {
    pub rows: Vec<ProfileRow>,
}

impl DetProfile {
    pub fn min_abs_det(&self) -> f64 {
        self.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.det_a.abs()))
    }

    pub fn constant_sign(&self) -> bool {
        let Some(first) = self.rows.first() else { return true };
        self.rows.iter().all(|r| r.det_a.signum() == first.det_a.signum() && r.det_a != 0.0)
    }

    /// Columns `s, det_a, rho1, rho2, rho3`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,det_a,rho1,rho2,rho3\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.s, r.det_a, r.rho[0], r.rho[1], r.rho[2]
            );
        }
        out
    }
}

/// `det A` and leg lengths at `samples_per_segment` uniform steps per
/// segment plus the final waypoint.
pub fn det_profile(plan: &PathPlan, d: &DesignParams) -> Result<DetProfile> {
    let poses = plan.poses()?;
    let n = plan.samples_per_segment.max(1);
    let lengths: Vec<f64> = poses.windows(2).map(|w| w[0].chart_distance(&w[1])).collect();
    let total: f64 = lengths.iter().sum();
    let total_samples = (plan.segments() * n) as f64;

    let mut rows = Vec::with_capacity(plan.segments() * n + 1);
    let mut push = |x: &Pose, s: f64| -> Result<()> {
        rows.push(ProfileRow {
            s,
            det_a: det_a(x, d)?,
            rho: ikp(x, d).rho,
        });
        Ok(())
    };
    let mut travelled = 0.0;
    for (seg, w) in poses.windows(2).enumerate() {
        for k in 0..n {
            let t = k as f64 / n as f64;
            let s = if total > 0.0 {
                (travelled + t * lengths[seg]) / total
            } else {
                (seg * n + k) as f64 / total_samples
            };
            push(&w[0].lerp(&w[1], t), s)?;
        }
        travelled += lengths[seg];
    }
    let last = poses.last().expect("plans are non-empty");
    push(last, if plan.segments() == 0 { 0.0 } else { 1.0 })?;
    Ok(DetProfile { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmcCertificate {
    pub joints: JointConfig,
    pub start: Pose,
    pub end: Pose,
    pub min_abs_det: f64,
    pub joint_mismatch: f64,
    pub chart_distance: f64,
}

/// Tolerance on `|ikp(start) - ikp(end)|` for an assembly-mode change.
pub const AMC_JOINT_TOL: f64 = 1e-6;
/// Minimum chart distance between distinct assembly modes.
pub const AMC_MIN_SEPARATION: f64 = 1e-3;

/// Certifies that `plan` is a nonsingular path between two distinct poses
/// with the same leg lengths. `start` and `end` must be anchors of the plan.
pub fn certify_amc(start: &Pose, end: &Pose, plan: &PathPlan, d: &DesignParams, cfg: &TrajectoryConfig) -> Result<AmcCertificate> {
    let find = |p: &Pose| {
        plan.anchors
            .iter()
            .position(|&i| plan.waypoints[i] == p.chart())
    };
    let (Some(i), Some(j)) = (find(start), find(end)) else {
        return Err(Error::invalid("start and end must be waypoints of the plan"));
    };
    let sub = plan.subpath(i.min(j), i.max(j))?;
    let poses = sub.poses()?;
    let mut min_abs = f64::INFINITY;
    for w in poses.windows(2) {
        let check = segment_check(&w[0], &w[1], plan.samples_per_segment, d, cfg.eps_sing)?;
        if !check.ok {
            return Err(Error::Singular {
                det_a: check.min_abs_det,
            });
        }
        min_abs = min_abs.min(check.min_abs_det);
    }
    if poses.len() == 1 {
        min_abs = det_a(&poses[0], d)?.abs();
    }

    let (j0, j1) = (ikp(start, d), ikp(end, d));
    let mismatch = j0.distance(&j1);
    let dist = start.chart_distance(end);
    if mismatch > AMC_JOINT_TOL {
        return Err(Error::NotAnAmc(format!("leg lengths differ by {mismatch:e}")));
    }
    if dist < AMC_MIN_SEPARATION {
        return Err(Error::NotAnAmc(format!("poses are only {dist:e} apart")));
    }
    Ok(AmcCertificate {
        joints: j0,
        start: *start,
        end: *end,
        min_abs_det: min_abs,
        joint_mismatch: mismatch,
        chart_distance: dist,
    })
}

/// Leg lengths along the plan, at the profile samples.
pub fn jointspace_image(plan: &PathPlan, d: &DesignParams) -> Result<Vec<[f64; 3]>> {
    Ok(det_profile(plan, d)?.rows.iter().map(|r| r.rho).collect())
}

/// Winding number of a closed polygon around a point (2D).
pub fn winding_number(polygon: &[[f64; 2]], point: [f64; 2]) -> i32 {
    let mut wn = 0;
    let n = polygon.len();
    for i in 0..n {
        let p = polygon[i];
        let q = polygon[(i + 1) % n];
        let cross = (q[0] - p[0]) * (point[1] - p[1]) - (point[0] - p[0]) * (q[1] - p[1]);
        if p[1] <= point[1] {
            if q[1] > point[1] && cross > 0.0 {
                wn += 1;
            }
        } else if q[1] <= point[1] && cross < 0.0 {
            wn -= 1;
        }
    }
    wn
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: DesignParams = DesignParams::unit();

    fn pose(mode: OperationMode, a: f64, b: f64, z: f64) -> Pose {
        Pose::new(mode, a, b, z).unwrap()
    }

    #[test]
    fn zero_length_segment_is_clear() {
        let p = pose(OperationMode::Om2, 0.1, 0.2, 3.0);
        let c = segment_check(&p, &p, 50, &D, 1e-6).unwrap();
        assert!(c.ok && c.crossing.is_none());
    }

    #[test]
    fn crossing_is_located() {
        // det A has the sign of -z³ near the vertical orientation, so a
        // segment through z = 0 must cross.
        let p = pose(OperationMode::Om2, 0.0, 0.0, 1.0);
        let q = pose(OperationMode::Om2, 0.0, 0.0, -1.0);
        let c = segment_check(&p, &q, 10, &D, 1e-6).unwrap();
        assert!(!c.ok);
        let t = c.crossing.unwrap();
        assert!((t - 0.5).abs() < 5e-3, "{t}");
    }

    #[test]
    fn segment_touching_the_rim_exits_the_chart() {
        let p = pose(OperationMode::Om1, 0.0, 0.0, 2.0);
        let q = pose(OperationMode::Om1, 0.6, 0.8, 2.0);
        assert!(matches!(segment_check(&p, &q, 10, &D, 1e-6), Err(Error::ChartExit { .. })));
    }

    #[test]
    fn rejects_mixed_signs() {
        let p = pose(OperationMode::Om2, 0.0, 0.0, 1.0);
        let q = pose(OperationMode::Om2, 0.0, 0.0, -1.0);
        let err = plan_path(&[p, q], &D, &TrajectoryConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn zero_length_profile_has_one_row() {
        let plan = PathPlan::from_poses(&[pose(OperationMode::Om2, 0.0, 0.0, 2.0)], 400).unwrap();
        let prof = det_profile(&plan, &D).unwrap();
        assert_eq!(prof.rows.len(), 1);
        assert_eq!(jointspace_image(&plan, &D).unwrap().len(), 1);
    }

    #[test]
    fn profile_rows_and_arclength() {
        let p = pose(OperationMode::Om2, 0.0, 0.0, 2.0);
        let q = pose(OperationMode::Om2, 0.1, 0.0, 2.0);
        let r = pose(OperationMode::Om2, 0.1, 0.3, 2.0);
        let plan = plan_path(&[p, q, r], &D, &TrajectoryConfig::default()).unwrap();
        assert_eq!(plan.segments(), 2);
        let prof = det_profile(&plan, &D).unwrap();
        assert_eq!(prof.rows.len(), 2 * 400 + 1);
        assert_eq!(prof.rows[0].s, 0.0);
        assert_eq!(prof.rows.last().unwrap().s, 1.0);
        assert!(prof.rows.windows(2).all(|w| w[1].s > w[0].s));
        // The first segment is a quarter of the length.
        assert!((prof.rows[400].s - 0.25).abs() < 1e-12);
    }

    #[test]
    fn start_equal_to_end_is_not_a_mode_change() {
        let p = pose(OperationMode::Om2, 0.0, 0.0, 2.0);
        let plan = PathPlan::from_poses(&[p, p], 10).unwrap();
        let err = certify_amc(&p, &p, &plan, &D, &TrajectoryConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotAnAmc(_)));
    }

    #[test]
    fn plan_json_roundtrip() {
        let p = pose(OperationMode::Om1, 0.2, -0.1, 2.0);
        let q = pose(OperationMode::Om1, 0.3, 0.1, 2.5);
        let plan = PathPlan::from_poses(&[p, q], 100).unwrap();
        let back = PathPlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn winding_numbers() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(winding_number(&square, [0.5, 0.5]), 1);
        assert_eq!(winding_number(&square, [1.5, 0.5]), 0);
        let reversed: Vec<_> = square.iter().rev().copied().collect();
        assert_eq!(winding_number(&reversed, [0.5, 0.5]), -1);
    }
}
