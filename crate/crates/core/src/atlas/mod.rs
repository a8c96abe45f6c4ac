//! Grid-sampled decompositions of the workspace and the joint space.
//!
//! * [`classify_workspace`] labels a box in `(a, b, z)` by the sign of
//!   `det A` and groups nonsingular cells into connected components, the
//!   numerical aspects.
//! * [`classify_jointspace_slice`] counts direct-kinematic solutions on a
//!   `(rho2, rho3)` slice at fixed `rho1`.
//! * [`basic_regions`] labels a `z = const` slice of the workspace by
//!   `(sign det A, solution count of the cell's joint image)`.
//! * [`characteristic_surface_sample`] maps points of an aspect's singular
//!   boundary back into the aspect through the joint space.
//!
//! Cells are grid nodes; connectivity is through shared faces.

mod export;
mod grid;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use export::{atlas_csv, atlas_header, write_atlas};
pub use grid::{Axis, GridSpec};
pub(crate) use grid::label_components;

use crate::dkp::{solve_dkp, DkpConfig};
use crate::error::{Error, Result};
use crate::kinematics::ikp;
use crate::model::{DesignParams, JointConfig, OperationMode, Pose};
use crate::singularity::{det_a, det_a_with_gradient};

/// Marker for "no label" in the component and region arrays.
pub const NONE: u32 = u32::MAX;

/// Default factor `K` in the boundary threshold `K · diam · median|∇det A|`.
pub const DEFAULT_BOUNDARY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtlasKind {
    /// Axes `(a, b, z)`.
    Workspace,
    /// Axes `(rho2, rho3)`.
    JointSlice { rho1: f64 },
    /// Axes `(a, b)`.
    BasicRegions { z: f64 },
}

impl AtlasKind {
    pub fn axis_names(&self) -> &'static [&'static str] {
        match self {
            AtlasKind::Workspace => &["a", "b", "z"],
            AtlasKind::JointSlice { .. } => &["rho2", "rho3"],
            AtlasKind::BasicRegions { .. } => &["a", "b"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasConfig {
    pub dkp: DkpConfig,
    pub boundary_factor: f64,
    /// Restrict region labelling to one sign of `det A`.
    pub sign_filter: Option<i8>,
    /// Drop cells whose joint image has a solution with `|det A|` under the
    /// boundary threshold (cells on a characteristic surface).
    pub exclude_characteristic: bool,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            dkp: DkpConfig::default(),
            boundary_factor: DEFAULT_BOUNDARY_FACTOR,
            sign_filter: None,
            exclude_characteristic: false,
        }
    }
}

/// Per-cell labels of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasMap {
    pub spec: GridSpec,
    pub mode: OperationMode,
    pub kind: AtlasKind,
    /// Boundary threshold on `|det A|`; zero for joint-space slices.
    pub threshold: f64,
    /// Calibrated `det A` at the cell; NaN where not evaluated.
    pub det_a: Vec<f64>,
    /// `+1`/`-1` for nonsingular cells, `0` for boundary or unevaluated cells.
    pub sign: Vec<i8>,
    /// Direct-kinematic solution count; `-1` where not computed.
    pub count: Vec<i8>,
    pub component: Vec<u32>,
    pub n_components: usize,
    pub region: Vec<u32>,
    pub n_regions: usize,
    /// Cells where the solver reported an error.
    pub failed_cells: usize,
    /// Classified cells left unlabelled because their group is below the
    /// grid resolution (no full block of 2^dims cells).
    pub fragment_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellLabel {
    pub det_a: Option<f64>,
    pub sign: i8,
    pub count: Option<u8>,
    pub component: Option<u32>,
    pub region: Option<u32>,
}

/// Summary of one component or region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub id: u32,
    pub sign: i8,
    pub count: Option<u8>,
    pub cells: usize,
    /// Some cell has a neighbour outside the chart disk.
    pub touches_rim: bool,
}

impl AtlasMap {
    fn empty(spec: GridSpec, mode: OperationMode, kind: AtlasKind) -> Self {
        let n = spec.len();
        Self {
            spec,
            mode,
            kind,
            threshold: 0.0,
            det_a: vec![f64::NAN; n],
            sign: vec![0; n],
            count: vec![-1; n],
            component: vec![NONE; n],
            n_components: 0,
            region: vec![NONE; n],
            n_regions: 0,
            failed_cells: 0,
            fragment_cells: 0,
        }
    }

    pub fn cell(&self, idx: usize) -> CellLabel {
        let opt = |v: u32| (v != NONE).then_some(v);
        CellLabel {
            det_a: (!self.det_a[idx].is_nan()).then_some(self.det_a[idx]),
            sign: self.sign[idx],
            count: u8::try_from(self.count[idx]).ok(),
            component: opt(self.component[idx]),
            region: opt(self.region[idx]),
        }
    }

    /// The pose at a cell of a workspace or basic-region map.
    pub fn pose_at(&self, idx: usize) -> Option<Pose> {
        let c = self.spec.center(idx);
        let pose = match self.kind {
            AtlasKind::Workspace => Pose::new(self.mode, c[0], c[1], c[2]),
            AtlasKind::BasicRegions { z } => Pose::new(self.mode, c[0], c[1], z),
            AtlasKind::JointSlice { .. } => return None,
        };
        pose.ok().filter(|p| p.radius_sq() < 1.0)
    }

    /// Cell of a workspace or basic-region map containing a pose.
    pub fn locate_pose(&self, pose: &Pose) -> Option<usize> {
        match self.kind {
            AtlasKind::Workspace => self.spec.locate(&pose.chart()),
            AtlasKind::BasicRegions { z } => {
                let dz = (pose.z - z).abs();
                let tol = 1e-9 * (1.0 + z.abs());
                (dz <= tol).then(|| self.spec.locate(&[pose.a, pose.b])).flatten()
            }
            AtlasKind::JointSlice { .. } => None,
        }
    }

    fn is_outside(&self, idx: usize) -> bool {
        match self.kind {
            AtlasKind::JointSlice { .. } => false,
            _ => {
                let c = self.spec.center(idx);
                c[0] * c[0] + c[1] * c[1] >= 1.0
            }
        }
    }

    fn groups(&self, labels: &[u32], n: usize) -> Vec<GroupInfo> {
        let mut out: Vec<GroupInfo> = (0..n as u32)
            .map(|id| GroupInfo {
                id,
                sign: 0,
                count: None,
                cells: 0,
                touches_rim: false,
            })
            .collect();
        for (idx, &l) in labels.iter().enumerate() {
            if l == NONE {
                continue;
            }
            let g = &mut out[l as usize];
            g.cells += 1;
            g.sign = self.sign[idx];
            g.count = u8::try_from(self.count[idx]).ok();
            if !g.touches_rim && self.spec.neighbors(idx).any(|nb| self.is_outside(nb)) {
                g.touches_rim = true;
            }
        }
        out
    }

    pub fn components(&self) -> Vec<GroupInfo> {
        self.groups(&self.component, self.n_components)
    }

    pub fn regions(&self) -> Vec<GroupInfo> {
        self.groups(&self.region, self.n_regions)
    }

    /// Whether two regions come within `max_gap` cells of each other, walking
    /// only through unlabelled cells in between.
    pub fn regions_adjacent(&self, r1: u32, r2: u32, max_gap: usize) -> bool {
        let mut depth: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for (idx, &r) in self.region.iter().enumerate() {
            if r == r1 {
                depth.insert(idx, 0);
                queue.push_back(idx);
            }
        }
        while let Some(c) = queue.pop_front() {
            let dc = depth[&c];
            for nb in self.spec.neighbors(c) {
                if self.region[nb] == r2 {
                    return true;
                }
                if dc < max_gap && self.region[nb] == NONE && !depth.contains_key(&nb) {
                    depth.insert(nb, dc + 1);
                    queue.push_back(nb);
                }
            }
        }
        false
    }
    /// Component of every cell whose `det A` has the sign of a component it
    /// reaches through same-sign cells, nearest component first. Extends the
    /// aspects across the unlabelled band up to the zero set of `det A`.
    pub fn aspect_owner(&self) -> Vec<u32> {
        let mut owner = self.component.clone();
        let mut queue: VecDeque<usize> = (0..owner.len()).filter(|&i| owner[i] != NONE).collect();
        let raw_sign = |i: usize| {
            let v = self.det_a[i];
            if v.is_finite() && v != 0.0 { v.signum() } else { 0.0 }
        };
        while let Some(c) = queue.pop_front() {
            for nb in self.spec.neighbors(c) {
                if owner[nb] == NONE && raw_sign(nb) != 0.0 && raw_sign(nb) == raw_sign(c) {
                    owner[nb] = owner[c];
                    queue.push_back(nb);
                }
            }
        }
        owner
    }
}

fn check_chart_box(spec: &GridSpec) -> Result<()> {
    for axis in &spec.axes[..2] {
        if axis.lo <= -1.0 || axis.hi >= 1.0 {
            return Err(Error::invalid(format!(
                "orientation axis [{}, {}] leaves the chart (|a|, |b| < 1 required)",
                axis.lo, axis.hi
            )));
        }
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Evaluates `det A` on the map's poses and fills `det_a`, `sign` and
/// `threshold`. `grad_axes` selects which chart derivatives enter the
/// gradient magnitude.
fn fill_determinants(map: &mut AtlasMap, d: &DesignParams, boundary_factor: f64, grad_axes: usize) {
    let mut grads = Vec::new();
    for idx in 0..map.spec.len() {
        let Some(pose) = map.pose_at(idx) else { continue };
        if let Ok((det, g)) = det_a_with_gradient(&pose, d) {
            map.det_a[idx] = det;
            grads.push(g.rows(0, grad_axes).norm());
        }
    }
    map.threshold = boundary_factor * map.spec.cell_diameter() * median(&mut grads);
    for idx in 0..map.spec.len() {
        let v = map.det_a[idx];
        if v.abs() > map.threshold {
            map.sign[idx] = if v > 0.0 { 1 } else { -1 };
        }
    }
}

/// Numerical aspects of one operation mode inside a box in `(a, b, z)`.
pub fn classify_workspace(spec: &GridSpec, mode: OperationMode, d: &DesignParams) -> Result<AtlasMap> {
    classify_workspace_with(spec, mode, d, DEFAULT_BOUNDARY_FACTOR)
}

pub fn classify_workspace_with(
    spec: &GridSpec,
    mode: OperationMode,
    d: &DesignParams,
    boundary_factor: f64,
) -> Result<AtlasMap> {
    if spec.dims() != 3 {
        return Err(Error::invalid("workspace grids have axes (a, b, z)"));
    }
    check_chart_box(spec)?;
    let mut map = AtlasMap::empty(spec.clone(), mode, AtlasKind::Workspace);
    fill_determinants(&mut map, d, boundary_factor, 3);
    let sign = map.sign.clone();
    let (labels, n) = label_components(spec, |i| (sign[i] != 0).then_some(sign[i]));
    map.fragment_cells = unlabelled(&labels, |i| sign[i] != 0);
    map.component = labels;
    map.n_components = n;
    Ok(map)
}

fn unlabelled(labels: &[u32], classified: impl Fn(usize) -> bool) -> usize {
    (0..labels.len()).filter(|&i| classified(i) && labels[i] == NONE).count()
}

/// Solution count and smallest interior `|det A|` per joint vector, memoised
/// on a quantised key.
struct CountCache<'a> {
    mode: OperationMode,
    d: &'a DesignParams,
    cfg: &'a DkpConfig,
    memo: HashMap<[i64; 3], Option<(usize, f64)>>,
}

impl<'a> CountCache<'a> {
    const QUANTUM: f64 = 1e-12;

    fn new(mode: OperationMode, d: &'a DesignParams, cfg: &'a DkpConfig) -> Self {
        Self {
            mode,
            d,
            cfg,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, joints: &JointConfig) -> Option<(usize, f64)> {
        let key = joints.rho.map(|r| (r / Self::QUANTUM).round() as i64);
        let (mode, d, cfg) = (self.mode, self.d, self.cfg);
        *self.memo.entry(key).or_insert_with(|| {
            let set = solve_dkp(joints, mode, d, cfg).ok()?;
            let min_det = set
                .solutions
                .iter()
                .filter_map(|s| s.det_a)
                .fold(f64::INFINITY, |m, v| m.min(v.abs()));
            Some((set.len(), min_det))
        })
    }
}

/// Direct-kinematic solution counts on the slice `rho1 = const`, with the
/// constant-count components as numerical basic components.
pub fn classify_jointspace_slice(
    rho1: f64,
    spec: &GridSpec,
    mode: OperationMode,
    d: &DesignParams,
    cfg: &DkpConfig,
) -> Result<AtlasMap> {
    if spec.dims() != 2 {
        return Err(Error::invalid("joint-space slices have axes (rho2, rho3)"));
    }
    if !(rho1 > 0.0) || spec.axes.iter().any(|a| !(a.lo > 0.0)) {
        return Err(Error::invalid("leg-length bounds must be positive"));
    }
    let mut map = AtlasMap::empty(spec.clone(), mode, AtlasKind::JointSlice { rho1 });
    let mut cache = CountCache::new(mode, d, cfg);
    for idx in 0..spec.len() {
        let c = spec.center(idx);
        let joints = JointConfig { rho: [rho1, c[0], c[1]] };
        match cache.get(&joints) {
            Some((n, _)) => map.count[idx] = n as i8,
            None => map.failed_cells += 1,
        }
    }
    let count = map.count.clone();
    let (labels, n) = label_components(spec, |i| (count[i] >= 0).then_some(count[i]));
    map.fragment_cells = unlabelled(&labels, |i| count[i] >= 0);
    map.component = labels;
    map.n_components = n;
    Ok(map)
}

/// Basic regions of the slice `z = const`: nonsingular cells labelled by
/// `(sign det A, solution count of ikp(cell))`, grouped by connectivity.
pub fn basic_regions(
    mode: OperationMode,
    z: f64,
    spec: &GridSpec,
    d: &DesignParams,
    cfg: &AtlasConfig,
) -> Result<AtlasMap> {
    if spec.dims() != 2 {
        return Err(Error::invalid("basic-region slices have axes (a, b)"));
    }
    check_chart_box(spec)?;
    let mut map = AtlasMap::empty(spec.clone(), mode, AtlasKind::BasicRegions { z });
    fill_determinants(&mut map, d, cfg.boundary_factor, 2);
    let sign = map.sign.clone();
    let (labels, n) = label_components(spec, |i| (sign[i] != 0).then_some(sign[i]));
    map.component = labels;
    map.n_components = n;

    let mut cache = CountCache::new(mode, d, &cfg.dkp);
    let mut excluded = vec![false; spec.len()];
    for idx in 0..spec.len() {
        let s = map.sign[idx];
        if s == 0 || cfg.sign_filter.is_some_and(|f| f != s) {
            continue;
        }
        let pose = map.pose_at(idx).expect("signed cells are inside the chart");
        match cache.get(&ikp(&pose, d)) {
            Some((n, min_det)) => {
                map.count[idx] = n as i8;
                excluded[idx] = cfg.exclude_characteristic && min_det <= map.threshold;
            }
            None => map.failed_cells += 1,
        }
    }
    let (count, sign) = (&map.count, &map.sign);
    let (labels, n) = label_components(spec, |i| {
        (count[i] >= 0 && !excluded[i]).then_some((sign[i], count[i]))
    });
    map.fragment_cells = unlabelled(&labels, |i| count[i] >= 0 && !excluded[i]);
    map.region = labels;
    map.n_regions = n;
    Ok(map)
}

/// A point of a characteristic surface together with the singular pose it
/// was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicPoint {
    pub source: Pose,
    pub pose: Pose,
    pub det_a: f64,
}

fn bisect_det(p: &Pose, q: &Pose, d: &DesignParams) -> Option<Pose> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let s_lo = det_a(p, d).ok()?.signum();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = det_a(&p.lerp(q, mid), d).ok()?;
        if v.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Some(p.lerp(q, 0.5 * (lo + hi)))
}

/// Samples the characteristic surface of aspect `aspect` of a workspace map:
/// singular poses on the aspect boundary are pushed through the joint space
/// and the nonsingular preimages lying in the aspect, as extended by
/// [`AtlasMap::aspect_owner`], are kept.
pub fn characteristic_surface_sample(
    map: &AtlasMap,
    aspect: u32,
    n_samples: usize,
    d: &DesignParams,
    cfg: &DkpConfig,
) -> Result<Vec<CharacteristicPoint>> {
    if map.kind != AtlasKind::Workspace {
        return Err(Error::invalid("characteristic surfaces are sampled from workspace maps"));
    }
    if aspect as usize >= map.n_components {
        return Err(Error::invalid(format!("unknown aspect id {aspect}")));
    }
    let owner = map.aspect_owner();
    let aspect_sign = f64::from(map.components()[aspect as usize].sign);

    // Sign changes of det A on the edges of the extended aspect.
    let mut edges = Vec::new();
    for i in (0..map.spec.len()).filter(|&i| owner[i] == aspect) {
        for j in map.spec.neighbors(i) {
            let v = map.det_a[j];
            if v.is_finite() && v.signum() != aspect_sign {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    if edges.is_empty() || n_samples == 0 {
        return Ok(Vec::new());
    }
    let stride = edges.len().div_ceil(n_samples).max(1);

    let mut out = Vec::new();
    for &(i, j) in edges.iter().step_by(stride) {
        let (Some(p), Some(q)) = (map.pose_at(i), map.pose_at(j)) else { continue };
        let Some(xb) = bisect_det(&p, &q, d) else { continue };
        let joints = ikp(&xb, d);
        let Ok(set) = solve_dkp(&joints, map.mode, d, cfg) else { continue };
        for s in &set.solutions {
            let Some(det) = s.det_a else { continue };
            if det.signum() != aspect_sign || s.pose.chart_distance(&xb) <= 1e-6 {
                continue;
            }
            let inside = map.locate_pose(&s.pose).is_some_and(|cell| owner[cell] == aspect);
            if inside {
                out.push(CharacteristicPoint {
                    source: xb,
                    pose: s.pose,
                    det_a: det,
                });
            }
        }
    }
    Ok(out)
}
