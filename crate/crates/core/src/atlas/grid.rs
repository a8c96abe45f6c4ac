use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval sampled at `n` equally spaced nodes, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let axis = Self { lo, hi, n };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(format!("degenerate interval [{}, {}]", self.lo, self.hi)));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("resolution must be at least 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Index of the node nearest to `x`, if `x` lies within the interval.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.step()).round() as usize).min(self.n - 1))
    }

    /// Same interval with `n` replaced.
    pub fn with_resolution(&self, n: usize) -> Self {
        Self { n, ..*self }
    }
}

/// A box sampled on a regular node grid. Two axes for slices, three for
/// workspace volumes. Cells are indexed row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if !(2..=3).contains(&axes.len()) {
            return Err(Error::invalid(format!("grids have 2 or 3 axes, got {}", axes.len())));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = idx % a.n;
            idx /= a.n;
        }
        out
    }

    pub fn ravel(&self, ijk: &[usize]) -> usize {
        self.axes.iter().zip(ijk).fold(0, |acc, (a, &i)| acc * a.n + i)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.node(i))
            .collect()
    }

    /// Length of the diagonal of one grid cell.
    pub fn cell_diameter(&self) -> f64 {
        self.axes.iter().map(|a| a.step().powi(2)).sum::<f64>().sqrt()
    }

    /// Face neighbours (4-connectivity in 2D, 6-connectivity in 3D).
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let ijk = self.unravel(idx);
        (0..self.dims()).flat_map(move |k| {
            let ijk = ijk.clone();
            [-1i64, 1].into_iter().filter_map(move |delta| {
                let v = ijk[k] as i64 + delta;
                if v < 0 || v >= self.axes[k].n as i64 {
                    return None;
                }
                let mut moved = ijk.clone();
                moved[k] = v as usize;
                Some(self.ravel(&moved))
            })
        })
    }

    /// Node nearest to a point, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let ijk: Option<Vec<usize>> = self.axes.iter().zip(x).map(|(a, &v)| a.nearest(v)).collect();
        ijk.map(|v| self.ravel(&v))
    }

    pub fn with_resolution(&self, n: usize) -> Self {
        Self {
            axes: self.axes.iter().map(|a| a.with_resolution(n)).collect(),
        }
    }
}

/// Labels face-connected groups of cells sharing the same key. Cells with
/// key `None` get no label. Groups that contain no full block of 2^dims
/// cells are below the grid resolution and stay unlabelled as well. Ids are
/// assigned in scan order starting at 0.
pub(crate) fn label_components<K: PartialEq>(
    spec: &GridSpec,
    key: impl Fn(usize) -> Option<K>,
) -> (Vec<u32>, usize) {
    let n = spec.len();
    let mut labels = vec![super::NONE; n];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != super::NONE {
            continue;
        }
        let Some(k0) = key(start) else { continue };
        labels[start] = next;
        stack.push(start);
        while let Some(c) = stack.pop() {
            for nb in spec.neighbors(c) {
                if labels[nb] == super::NONE && key(nb).as_ref() == Some(&k0) {
                    labels[nb] = next;
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }

    let mut resolved = vec![false; next as usize];
    let shape = spec.shape();
    for idx in 0..n {
        let l = labels[idx];
        if l == super::NONE || resolved[l as usize] {
            continue;
        }
        let ijk = spec.unravel(idx);
        if ijk.iter().zip(&shape).any(|(i, m)| i + 1 >= *m) {
            continue;
        }
        let full = (0..1usize << ijk.len()).all(|corner| {
            let c: Vec<usize> = ijk.iter().enumerate().map(|(k, i)| i + ((corner >> k) & 1)).collect();
            labels[spec.ravel(&c)] == l
        });
        resolved[l as usize] = full;
    }
    let mut remap = vec![super::NONE; next as usize];
    let mut kept = 0u32;
    for (old, ok) in resolved.iter().enumerate() {
        if *ok {
            remap[old] = kept;
            kept += 1;
        }
    }
    for l in labels.iter_mut() {
        if *l != super::NONE {
            *l = remap[*l as usize];
        }
    }
    (labels, kept as usize)
}
