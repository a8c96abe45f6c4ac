use rpskin::atlas::{classify_jointspace_slice, Axis, GridSpec};
use rpskin::continuation::*;
use rpskin::dkp::{solve_dkp, DkpConfig};
use rpskin::kinematics::residuals;
use rpskin::singularity::det_a;
use rpskin::{DesignParams, JointConfig, OperationMode};

const D: DesignParams = DesignParams::unit();

fn slice3() -> Vec<SingularCurve> {
    trace_slice(3.0, OperationMode::Om1, &D, &ContinuationConfig::default()).unwrap()
}

#[test]
fn traced_points_lie_on_the_singular_curve() {
    let curves = slice3();
    assert!(!curves.is_empty());
    for c in &curves {
        assert!(!c.stalled());
        for p in &c.points {
            assert!(residuals(&p.pose, &p.joints, &D).max_abs() <= 1e-9);
            assert!(det_a(&p.pose, &D).unwrap().abs() <= 1e-9);
        }
    }
}

#[test]
fn slice_at_three_has_cusps_with_coalescing_solutions() {
    let mut n = 0;
    for c in slice3() {
        for cusp in detect_cusps(&c, &D, 1e-3) {
            assert!(cusp.tangent_norm <= 1e-3);
            let check = cusp_coalescence(&cusp, &D, 1e-3, &DkpConfig::default()).unwrap();
            assert!(check.passed, "{cusp:?}");
            n += 1;
        }
    }
    assert!(n >= 1);
}

#[test]
fn reversed_trace_covers_the_same_curve() {
    let cfg = ContinuationConfig::default();
    let seeds = seed_singular_points(3.0, OperationMode::Om1, &D, 40, &cfg).unwrap();
    let seed = seeds[0];
    let forward = trace_curve(&seed, &D, &cfg).unwrap();
    let mut flipped = seed;
    flipped.tangent = seed.tangent.map(|t| -t);
    let backward = trace_curve(&flipped, &D, &cfg).unwrap();
    assert_eq!(forward.is_closed(), backward.is_closed());
    let h = forward.hausdorff(&backward);
    assert!(h <= 1e-6, "Hausdorff distance {h:e}");
}

#[test]
fn halving_the_step_keeps_the_cusps() {
    let coarse = ContinuationConfig::default();
    let fine = ContinuationConfig {
        step: coarse.step / 2.0,
        ..coarse
    };
    let cusps = |cfg: &ContinuationConfig| -> Vec<JointConfig> {
        trace_slice(3.0, OperationMode::Om1, &D, cfg)
            .unwrap()
            .iter()
            .flat_map(|c| detect_cusps(c, &D, cfg.cusp_tol))
            .map(|c| c.joints)
            .collect()
    };
    let (a, b) = (cusps(&coarse), cusps(&fine));
    assert!(!a.is_empty());
    for j in &a {
        let nearest = b.iter().map(|k| k.distance(j)).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-4, "{j:?} moved by {nearest:e}");
    }
    for j in &b {
        let nearest = a.iter().map(|k| k.distance(j)).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-4, "{j:?} moved by {nearest:e}");
    }
}

#[test]
fn cusps_sit_where_the_solution_count_changes() {
    let cfg = DkpConfig {
        n_starts: 1000,
        ..DkpConfig::default()
    };
    for c in slice3() {
        for cusp in detect_cusps(&c, &D, 1e-3) {
            let [r1, r2, r3] = cusp.joints.rho;
            let counts: Vec<usize> = (0..48)
                .map(|k| {
                    let phi = std::f64::consts::TAU * k as f64 / 48.0;
                    let j = JointConfig {
                        rho: [r1, r2 + 0.02 * phi.cos(), r3 + 0.02 * phi.sin()],
                    };
                    solve_dkp(&j, OperationMode::Om1, &D, &cfg).unwrap().len()
                })
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi > lo, "constant count {lo} around {:?}", cusp.joints);
        }
    }
}

#[test]
fn seeds_lie_where_the_count_map_changes() {
    let spec = GridSpec::new(vec![Axis::new(1.0, 5.0, 41).unwrap(), Axis::new(1.0, 5.0, 41).unwrap()]).unwrap();
    let cfg = DkpConfig {
        n_starts: 1000,
        ..DkpConfig::default()
    };
    let map = classify_jointspace_slice(3.0, &spec, OperationMode::Om1, &D, &cfg).unwrap();
    let seeds = seed_singular_points(3.0, OperationMode::Om1, &D, 100, &ContinuationConfig::default()).unwrap();
    let mut checked = 0;
    for s in seeds {
        let p = [s.joints.rho[1], s.joints.rho[2]];
        if !(1.2..=4.8).contains(&p[0]) || !(1.2..=4.8).contains(&p[1]) {
            continue;
        }
        let idx = spec.locate(&p).unwrap();
        let mut around = vec![map.count[idx]];
        around.extend(spec.neighbors(idx).into_iter().map(|n| map.count[n]));
        assert!(
            around.iter().any(|c| *c != around[0]),
            "seed at {p:?} inside a constant-count block {around:?}"
        );
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn om1_sweep_chains_cusps_across_slices() {
    let lines = sweep_cusp_curves(2.9, 3.1, 0.05, OperationMode::Om1, &D, &ContinuationConfig::default()).unwrap();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert_eq!(l.points.len(), 5);
        for w in l.points.windows(2) {
            assert!(w[0].joints.distance(&w[1].joints) <= 0.25);
        }
    }
    let csv = cusp_csv(&lines);
    assert_eq!(csv.lines().count(), 1 + 15);
}
