//! Tabulated reference poses of the unit robot.
//!
//! Two joint configurations, each with four direct-kinematic solutions of
//! positive `det A`, rounded to two or three significant digits. Because of
//! the rounding, the listed poses are not exact solutions; [`resolve`]
//! replaces a row by the nearest exact solution.

use serde::{Deserialize, Serialize};

use crate::dkp::{solve_dkp, DkpConfig};
use crate::error::{Error, Result};
use crate::model::{DesignParams, JointConfig, OperationMode, Pose};
use crate::trajectory::{plan_path, PathPlan, TrajectoryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePose {
    pub label: &'static str,
    pub mode: OperationMode,
    pub rho: [f64; 3],
    pub z: f64,
    /// `[q1, q2, q3, q4]` as listed (the mode's vanishing component is 0).
    pub q: [f64; 4],
}

const RHO_OM1: [f64; 3] = [3.90, 3.24, 3.24];
const RHO_OM2: [f64; 3] = [3.79, 3.24, 3.24];

pub const TABLE: [ReferencePose; 8] = [
    ReferencePose { label: "P1", mode: OperationMode::Om1, rho: RHO_OM1, z: 3.01, q: [0.0, -0.34, -0.94, 0.06] },
    ReferencePose { label: "P2", mode: OperationMode::Om1, rho: RHO_OM1, z: 3.01, q: [0.0, -0.34, 0.94, 0.06] },
    ReferencePose { label: "P3", mode: OperationMode::Om1, rho: RHO_OM1, z: 3.0, q: [0.0, 0.85, 0.0, 0.53] },
    ReferencePose { label: "P4", mode: OperationMode::Om1, rho: RHO_OM1, z: -2.88, q: [0.0, -0.35, 0.0, 0.93] },
    ReferencePose { label: "P5", mode: OperationMode::Om2, rho: RHO_OM2, z: 3.04, q: [0.35, -0.58, -0.74, 0.0] },
    ReferencePose { label: "P6", mode: OperationMode::Om2, rho: RHO_OM2, z: 3.04, q: [0.35, 0.586, -0.74, 0.0] },
    ReferencePose { label: "P7", mode: OperationMode::Om2, rho: RHO_OM2, z: 3.0, q: [0.24, 0.0, 0.97, 0.0] },
    ReferencePose { label: "P8", mode: OperationMode::Om2, rho: RHO_OM2, z: -3.42, q: [0.98, 0.0, 0.19, 0.0] },
];

/// Absolute tolerance for comparing against the rounded rows.
pub const TABLE_TOL: f64 = 0.01;

impl ReferencePose {
    pub fn by_label(label: &str) -> Option<&'static ReferencePose> {
        TABLE.iter().find(|r| r.label.eq_ignore_ascii_case(label))
    }

    pub fn joints(&self) -> JointConfig {
        JointConfig { rho: self.rho }
    }

    /// The rounded row as a chart pose.
    pub fn rounded_pose(&self) -> Pose {
        Pose::new(self.mode, self.q[1], self.q[2], self.z).expect("tabulated rows lie inside the chart")
    }

    /// Largest deviation of `pose` from the row over `z` and the three
    /// listed quaternion components.
    pub fn deviation(&self, pose: &Pose) -> f64 {
        let q = pose.quat_array();
        let skip = self.mode.vanishing_index();
        (0..4)
            .filter(|&k| k != skip)
            .map(|k| (q[k] - self.q[k]).abs())
            .fold((pose.z - self.z).abs(), f64::max)
    }
}

/// Exact direct-kinematic solution with `det A > 0` closest to the row.
pub fn resolve(row: &ReferencePose, d: &DesignParams, cfg: &DkpConfig) -> Result<Pose> {
    let set = solve_dkp(&row.joints(), row.mode, d, cfg)?;
    set.solutions
        .iter()
        .filter(|s| s.sign() == Some(1))
        .map(|s| (s.pose, row.deviation(&s.pose)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(p, _)| p)
        .ok_or_else(|| Error::invalid(format!("no solution with det A > 0 for {}", row.label)))
}

/// All eight rows resolved, in table order.
pub fn resolve_all(d: &DesignParams, cfg: &DkpConfig) -> Result<Vec<Pose>> {
    TABLE.iter().map(|r| resolve(r, d, cfg)).collect()
}

/// The three rows of a mode whose assembly modes are joined by a closed
/// nonsingular loop.
pub fn loop_labels(mode: OperationMode) -> [&'static str; 3] {
    match mode {
        OperationMode::Om1 => ["P1", "P2", "P3"],
        OperationMode::Om2 => ["P5", "P6", "P7"],
    }
}

/// Resolves the [`loop_labels`] rows and plans the loop through them, back
/// to the first.
pub fn reference_loop(
    mode: OperationMode,
    d: &DesignParams,
    dkp: &DkpConfig,
    traj: &TrajectoryConfig,
) -> Result<(Vec<Pose>, PathPlan)> {
    let poses = loop_labels(mode)
        .iter()
        .map(|l| resolve(ReferencePose::by_label(l).expect("loop rows are tabulated"), d, dkp))
        .collect::<Result<Vec<_>>>()?;
    let plan = plan_path(&[poses[0], poses[1], poses[2], poses[0]], d, traj)?;
    Ok((poses, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonicalize;

    #[test]
    fn rows_are_canonical_mode_poses() {
        for r in &TABLE {
            let pose = r.rounded_pose();
            assert_eq!(pose.chart(), [r.q[1], r.q[2], r.z]);
            // Rounding leaves the dependent component a few hundredths off.
            assert!(r.deviation(&pose) < 0.05, "{}", r.label);
            assert!(canonicalize(r.q).is_ok());
        }
        assert_eq!(ReferencePose::by_label("p7").unwrap().mode, OperationMode::Om2);
    }
}
