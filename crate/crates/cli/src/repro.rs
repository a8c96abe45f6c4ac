use rpskin::atlas::{basic_regions, classify_jointspace_slice, AtlasConfig, AtlasMap};
use rpskin::continuation::{cusp_coalescence, cusp_csv, detect_cusps, sweep_cusp_curves, trace_slice, CuspPoint};
use rpskin::dkp::solve_dkp;
use rpskin::reference::{loop_labels, reference_loop, TABLE, TABLE_TOL};
use rpskin::trajectory::{certify_amc, det_profile, jointspace_image};
use rpskin::{JointConfig, OperationMode};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{announce, Writer};
use crate::{grid, jointspace_csv, write_atlas, Figure, Outcome, CHART_BOX, JOINT_BOX};

/// Leg length of the joint-space slice and height of the basic-region maps.
const SLICE_RHO1: f64 = 3.0;
const SLICE_Z: f64 = 3.0;
/// `ρ₁` sweep of the cusp curves.
const SWEEP: (f64, f64, f64) = (2.5, 4.5, 0.05);
/// Joint-space distance under which a cusp polyline counts as near the
/// image of a reference loop.
const NEIGHBOURHOOD: f64 = 1.0;
/// Two direct-kinematic solutions this close to a cusp pose count as coalescing.
const COALESCENCE_RADIUS: f64 = 1e-3;

pub fn run(cfg: &RunConfig, figure: Figure) -> anyhow::Result<Outcome> {
    let name = format!("{figure:?}").to_lowercase();
    let mut w = Writer::new(cfg, json!({ "repro": name }))?;
    let outcome = match figure {
        Figure::Table1 => table1(cfg, &mut w)?,
        Figure::Fig3 => fig3(cfg, &mut w)?,
        Figure::Fig4 => fig4(cfg, &mut w)?,
        Figure::Fig5 => fig5(cfg, &mut w)?,
        Figure::Fig6 => fig6(cfg, &mut w)?,
    };
    announce(w.written());
    Ok(outcome)
}

fn verdict(ok: bool, failure: impl FnOnce() -> String) -> Outcome {
    if ok {
        Outcome::Done
    } else {
        Outcome::Negative(failure())
    }
}

fn table1(cfg: &RunConfig, w: &mut Writer) -> anyhow::Result<Outcome> {
    let mut csv = String::from("label,mode,z,q1,q2,q3,q4,det_a,deviation\n");
    let mut unmatched = Vec::new();
    for mode in OperationMode::ALL {
        let rows: Vec<_> = TABLE.iter().filter(|r| r.mode == mode).collect();
        let set = solve_dkp(&rows[0].joints(), mode, &cfg.design, &cfg.dkp)?;
        for row in rows {
            let best = set
                .solutions
                .iter()
                .filter(|s| s.sign() == Some(1))
                .map(|s| (s, row.deviation(&s.pose)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((sol, dev)) = best else {
                unmatched.push(row.label);
                continue;
            };
            if dev > TABLE_TOL {
                unmatched.push(row.label);
            }
            let q = sol.pose.quat_array();
            csv.push_str(&format!(
                "{},{mode},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.label,
                sol.pose.z,
                q[0],
                q[1],
                q[2],
                q[3],
                sol.det_a.unwrap_or(f64::NAN),
                dev
            ));
        }
    }
    w.csv("table1.csv", &csv)?;
    Ok(verdict(unmatched.is_empty(), || format!("rows not matched: {unmatched:?}")))
}

fn fig3(cfg: &RunConfig, w: &mut Writer) -> anyhow::Result<Outcome> {
    let mode = OperationMode::Om1;
    let spec = grid(cfg, &JOINT_BOX)?;
    let map = classify_jointspace_slice(SLICE_RHO1, &spec, mode, &cfg.design, &cfg.dkp)?;
    write_atlas(w, &map, "fig3")?;

    let curves = trace_slice(SLICE_RHO1, mode, &cfg.design, &cfg.continuation)?;
    let mut csv = String::from("curve,a,b,z,rho1,rho2,rho3\n");
    let mut cusps: Vec<CuspPoint> = Vec::new();
    for (id, c) in curves.iter().enumerate() {
        for p in &c.points {
            let r = p.joints.rho;
            csv.push_str(&format!(
                "{id},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.pose.a, p.pose.b, p.pose.z, r[0], r[1], r[2]
            ));
        }
        cusps.extend(detect_cusps(c, &cfg.design, cfg.continuation.cusp_tol));
    }
    w.csv("fig3_curves.csv", &csv)?;
    w.json("fig3_cusps.json", json!({ "cusps": cusps }))?;
    let has = |n: i8| map.count.contains(&n);
    Ok(verdict(has(4) && has(8) && !cusps.is_empty(), || {
        format!("count 4 {}, count 8 {}, {} cusps", has(4), has(8), cusps.len())
    }))
}

/// `(count-8 regions, count-4 regions, the count-4 region borders every count-8 one)`.
fn region_layout(map: &AtlasMap) -> (usize, usize, bool) {
    let regions = map.regions();
    let eights: Vec<u32> = regions.iter().filter(|r| r.count == Some(8)).map(|r| r.id).collect();
    let fours: Vec<u32> = regions.iter().filter(|r| r.count == Some(4)).map(|r| r.id).collect();
    let gap = map.spec.shape()[0] / 10;
    let adjacent = fours.len() == 1 && eights.iter().all(|&e| map.regions_adjacent(fours[0], e, gap));
    (eights.len(), fours.len(), adjacent)
}

fn fig4(cfg: &RunConfig, w: &mut Writer) -> anyhow::Result<Outcome> {
    let spec = grid(cfg, &CHART_BOX)?;
    let atlas = AtlasConfig {
        sign_filter: Some(1),
        ..cfg.atlas
    };
    let mut layouts = Vec::new();
    for mode in OperationMode::ALL {
        let map = basic_regions(mode, SLICE_Z, &spec, &cfg.design, &atlas)?;
        write_atlas(w, &map, &format!("fig4_{mode}"))?;
        layouts.push((mode, region_layout(&map)));
    }
    let ok = layouts.iter().all(|(_, l)| *l == (3, 1, true));
    Ok(verdict(ok, || format!("region layouts {layouts:?}")))
}

fn fig5(cfg: &RunConfig, w: &mut Writer) -> anyhow::Result<Outcome> {
    let mut certificates = Vec::new();
    let mut problems = Vec::new();
    for mode in OperationMode::ALL {
        let (poses, plan) = reference_loop(mode, &cfg.design, &cfg.dkp, &cfg.trajectory)?;
        let profile = det_profile(&plan, &cfg.design)?;
        w.csv(&format!("fig5_{mode}_profile.csv"), &profile.to_csv())?;
        w.csv(&format!("fig5_{mode}_jointspace.csv"), &jointspace_csv(&profile))?;
        if !(plan.is_closed() && profile.constant_sign() && profile.min_abs_det() > 0.0) {
            problems.push(format!("{mode} loop is not a closed nonsingular plan"));
        }
        let labels = loop_labels(mode);
        for (k, pair) in poses.windows(2).enumerate() {
            match certify_amc(&pair[0], &pair[1], &plan, &cfg.design, &cfg.trajectory) {
                Ok(c) => certificates.push(json!({ "from": labels[k], "to": labels[k + 1], "certificate": c })),
                Err(e) => problems.push(format!("{} -> {}: {e}", labels[k], labels[k + 1])),
            }
        }
    }
    w.json("fig5_certificates.json", json!({ "certificates": certificates, "problems": problems }))?;
    Ok(verdict(problems.is_empty(), || problems.join("; ")))
}

fn fig6(cfg: &RunConfig, w: &mut Writer) -> anyhow::Result<Outcome> {
    let (lo, hi, step) = SWEEP;
    let mut problems = Vec::new();
    for mode in OperationMode::ALL {
        let (_, plan) = reference_loop(mode, &cfg.design, &cfg.dkp, &cfg.trajectory)?;
        let profile = det_profile(&plan, &cfg.design)?;
        w.csv(&format!("fig6_{mode}_loop.csv"), &jointspace_csv(&profile))?;
        let image: Vec<JointConfig> = jointspace_image(&plan, &cfg.design)?
            .into_iter()
            .map(|rho| JointConfig { rho })
            .collect();

        let lines = sweep_cusp_curves(lo, hi, step, mode, &cfg.design, &cfg.continuation)?;
        w.csv(&format!("fig6_{mode}_cusps.csv"), &cusp_csv(&lines))?;
        let near: Vec<_> = lines
            .iter()
            .filter(|l| {
                l.points
                    .iter()
                    .any(|p| image.iter().any(|j| p.joints.distance(j) <= NEIGHBOURHOOD))
            })
            .collect();
        let mut lonely = 0;
        for p in near.iter().flat_map(|l| &l.points) {
            if !cusp_coalescence(p, &cfg.design, COALESCENCE_RADIUS, &cfg.dkp)?.passed {
                lonely += 1;
            }
        }
        if near.len() < 3 || lonely > 0 {
            problems.push(format!(
                "{mode}: {} cusp polylines near the loop, {lonely} cusps without coalescing solutions",
                near.len()
            ));
        }
    }
    Ok(verdict(problems.is_empty(), || problems.join("; ")))
}
