use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{AtlasMap, NONE};
use crate::error::Result;

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// One row per cell: indices, node coordinates, `det_a`, sign, count,
/// component and region. Missing values are empty fields.
pub fn atlas_csv(map: &AtlasMap) -> String {
    let idx_names = ["i", "j", "k"];
    let mut header: Vec<&str> = idx_names[..map.spec.dims()].to_vec();
    header.extend_from_slice(map.kind.axis_names());
    header.extend_from_slice(&["det_a", "sign", "count", "component", "region"]);

    let mut out = header.join(",");
    out.push('\n');
    let label = |v: u32| if v == NONE { String::new() } else { v.to_string() };
    for idx in 0..map.spec.len() {
        for i in map.spec.unravel(idx) {
            let _ = write!(out, "{i},");
        }
        for c in map.spec.center(idx) {
            let _ = write!(out, "{},", num(c));
        }
        let count = if map.count[idx] < 0 {
            String::new()
        } else {
            map.count[idx].to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(map.det_a[idx]),
            map.sign[idx],
            count,
            label(map.component[idx]),
            label(map.region[idx])
        );
    }
    out
}

pub fn atlas_header(map: &AtlasMap, meta: &Value) -> Value {
    json!({
        "atlas": map.kind,
        "mode": map.mode,
        "grid": map.spec,
        "threshold": map.threshold,
        "n_components": map.n_components,
        "n_regions": map.n_regions,
        "components": map.components(),
        "regions": map.regions(),
        "failed_cells": map.failed_cells,
        "fragment_cells": map.fragment_cells,
        "config": meta,
    })
}

/// Writes `<name>.csv` and `<name>.json` into `dir`.
pub fn write_atlas(map: &AtlasMap, dir: &Path, name: &str, meta: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.csv")), atlas_csv(map))?;
    let mut header = serde_json::to_string_pretty(&atlas_header(map, meta))?;
    header.push('\n');
    fs::write(dir.join(format!("{name}.json")), header)?;
    Ok(())
}
