//! Geometric parameters, pose and joint types, and the operation-mode
//! conventions shared by the rest of the crate.
//!
//! Every reachable orientation of the 3-RPS platform has `q1 * q4 = 0`, which
//! splits the configuration space into two operation modes. Within a mode one
//! quaternion component vanishes and the unit-norm constraint fixes a second
//! one (up to sign), so a pose is described by the *chart* `(a, b, z)` with
//! `(a, b) = (q2, q3)`. The remaining ("dependent") component is always taken
//! as the non-negative root, which picks one representative of the quaternion
//! double cover.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance used by [`classify_mode`].
pub const MODE_TOL: f64 = 1e-9;

/// Circumradii of the base (`g`) and platform (`h`) triangles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub g: f64,
    pub h: f64,
}

impl DesignParams {
    pub fn new(g: f64, h: f64) -> Result<Self> {
        if !(g > 0.0 && h > 0.0) || !g.is_finite() || !h.is_finite() {
            return Err(Error::invalid(format!(
                "design parameters must be positive, got g = {g}, h = {h}"
            )));
        }
        Ok(Self { g, h })
    }

    /// The unit robot, `g = h = 1`.
    pub const fn unit() -> Self {
        Self { g: 1.0, h: 1.0 }
    }
}

impl Default for DesignParams {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationMode {
    /// `q1 = 0`; the chart's dependent component is `q4`.
    Om1,
    /// `q4 = 0`; the chart's dependent component is `q1`.
    Om2,
}

impl OperationMode {
    pub const ALL: [OperationMode; 2] = [OperationMode::Om1, OperationMode::Om2];

    /// Index (0-based, into `[q1, q2, q3, q4]`) of the component fixed by
    /// the unit norm.
    pub const fn dependent_index(self) -> usize {
        match self {
            OperationMode::Om1 => 3,
            OperationMode::Om2 => 0,
        }
    }

    /// Index of the component that vanishes identically in this mode.
    pub const fn vanishing_index(self) -> usize {
        match self {
            OperationMode::Om1 => 0,
            OperationMode::Om2 => 3,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            OperationMode::Om1 => "om1",
            OperationMode::Om2 => "om2",
        }
    }

    pub(crate) const fn slot(self) -> usize {
        match self {
            OperationMode::Om1 => 0,
            OperationMode::Om2 => 1,
        }
    }
}

impl fmt::Display for OperationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OperationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "om1" | "1" => Ok(OperationMode::Om1),
            "om2" | "2" => Ok(OperationMode::Om2),
            other => Err(Error::invalid(format!("unknown operation mode `{other}`"))),
        }
    }
}

/// Result of [`classify_mode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeClass {
    Om1,
    Om2,
    /// `q1 = q4 = 0`: the intersection of both modes.
    Both,
    /// `q1 * q4 != 0`: not reachable by the mechanism.
    Neither,
}

/// A unit quaternion `(q1, q2, q3, q4)` in canonical sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationQuat([f64; 4]);

impl OrientationQuat {
    pub fn q1(&self) -> f64 {
        self.0[0]
    }
    pub fn q2(&self) -> f64 {
        self.0[1]
    }
    pub fn q3(&self) -> f64 {
        self.0[2]
    }
    pub fn q4(&self) -> f64 {
        self.0[3]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn norm_defect(&self) -> f64 {
        (self.0.iter().map(|c| c * c).sum::<f64>() - 1.0).abs()
    }
}

/// Normalizes `q` and picks the canonical representative of `{q, -q}`.
///
/// The sign is fixed by `q4 >= 0` when `|q1| <= |q4|` (the OM1 side) and by
/// `q1 >= 0` otherwise; when both are exactly zero, the first nonzero of
/// `q2, q3` is made non-negative. Inputs already of unit norm (to a few ulps)
/// are not rescaled, so the operation is idempotent bit for bit.
pub fn canonicalize(q: [f64; 4]) -> Result<OrientationQuat> {
    if q.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("quaternion has non-finite components"));
    }
    let norm_sq: f64 = q.iter().map(|c| c * c).sum();
    if norm_sq == 0.0 {
        return Err(Error::invalid("zero quaternion has no orientation"));
    }
    let mut out = q;
    if (norm_sq - 1.0).abs() > 4.0 * f64::EPSILON {
        let n = norm_sq.sqrt();
        out.iter_mut().for_each(|c| *c /= n);
    }
    let pivot = if out[0] == 0.0 && out[3] == 0.0 {
        if out[1] != 0.0 {
            out[1]
        } else {
            out[2]
        }
    } else if out[0].abs() <= out[3].abs() {
        out[3]
    } else {
        out[0]
    };
    if pivot < 0.0 {
        out.iter_mut().for_each(|c| *c = -*c);
    }
    // -0.0 would make equality checks on re-canonicalized values fragile.
    out.iter_mut().for_each(|c| {
        if *c == 0.0 {
            *c = 0.0
        }
    });
    Ok(OrientationQuat(out))
}

pub fn classify_mode(q: &OrientationQuat, tol: f64) -> ModeClass {
    let z1 = q.q1().abs() <= tol;
    let z4 = q.q4().abs() <= tol;
    match (z1, z4) {
        (true, true) => ModeClass::Both,
        (true, false) => ModeClass::Om1,
        (false, true) => ModeClass::Om2,
        (false, false) => ModeClass::Neither,
    }
}

/// A platform pose inside one operation mode, in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub mode: OperationMode,
    /// `q2`
    pub a: f64,
    /// `q3`
    pub b: f64,
    /// Height of the platform centre.
    pub z: f64,
}

impl Pose {
    pub fn new(mode: OperationMode, a: f64, b: f64, z: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && z.is_finite()) {
            return Err(Error::invalid("pose coordinates must be finite"));
        }
        let r2 = a * a + b * b;
        if r2 > 1.0 {
            return Err(Error::invalid(format!(
                "chart violated: a² + b² = {r2} > 1"
            )));
        }
        Ok(Self { mode, a, b, z })
    }

    pub fn chart(&self) -> [f64; 3] {
        [self.a, self.b, self.z]
    }

    pub fn radius_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }

    /// The dependent quaternion component, `+sqrt(1 - a² - b²)`.
    pub fn dependent(&self) -> f64 {
        (1.0 - self.radius_sq()).max(0.0).sqrt()
    }

    pub fn quat_array(&self) -> [f64; 4] {
        let d = self.dependent();
        match self.mode {
            OperationMode::Om1 => [0.0, self.a, self.b, d],
            OperationMode::Om2 => [d, self.a, self.b, 0.0],
        }
    }

    pub fn quat(&self) -> OrientationQuat {
        // The chart already fixes the sign; only the sign-of-zero cleanup
        // and the both-mode tie-break of `canonicalize` apply here.
        canonicalize(self.quat_array()).expect("chart quaternions are unit and finite")
    }

    /// Reads a pose from a quaternion that satisfies the mode's constraint.
    pub fn from_quat(q: [f64; 4], z: f64, mode: OperationMode) -> Result<Self> {
        let q = canonicalize(q)?;
        let class = classify_mode(&q, MODE_TOL);
        let ok = matches!(
            (class, mode),
            (ModeClass::Both, _) | (ModeClass::Om1, OperationMode::Om1) | (ModeClass::Om2, OperationMode::Om2)
        );
        if !ok {
            return Err(Error::invalid(format!(
                "quaternion {:?} is not in operation mode {mode}",
                q.as_array()
            )));
        }
        let mut a = q.q2();
        let mut b = q.q3();
        // In OM2 the canonical sign is set by q1; in a both-mode pose the
        // dependent component is zero and either sign of (a, b) is the same
        // rotation.
        let dep = q.as_array()[mode.dependent_index()];
        if dep < 0.0 {
            a = -a;
            b = -b;
        }
        Pose::new(mode, a, b, z)
    }

    pub fn chart_distance(&self, other: &Pose) -> f64 {
        let (p, q) = (self.chart(), other.chart());
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    }

    /// Straight-line interpolation in chart coordinates.
    pub fn lerp(&self, other: &Pose, t: f64) -> Pose {
        Pose {
            mode: self.mode,
            a: self.a + t * (other.a - self.a),
            b: self.b + t * (other.b - self.b),
            z: self.z + t * (other.z - self.z),
        }
    }
}

/// Prismatic leg lengths `(rho1, rho2, rho3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub rho: [f64; 3],
}

impl JointConfig {
    pub fn new(rho1: f64, rho2: f64, rho3: f64) -> Result<Self> {
        let rho = [rho1, rho2, rho3];
        if rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid(format!("leg lengths must be finite and >= 0, got {rho:?}")));
        }
        Ok(Self { rho })
    }

    /// True when some leg has zero length (`rho1 * rho2 * rho3 = 0`).
    pub fn is_serial_singular(&self) -> bool {
        self.rho.contains(&0.0)
    }

    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.rho
            .iter()
            .zip(other.rho.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Position of the platform centre and the platform rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformPlacement {
    pub p: Vector3<f64>,
    pub r: Matrix3<f64>,
}
