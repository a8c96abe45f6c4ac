use rpskin::dkp::DkpConfig;
use rpskin::reference::reference_loop;
use rpskin::trajectory::*;
use rpskin::{DesignParams, JointConfig, OperationMode};

const D: DesignParams = DesignParams::unit();

#[test]
fn closed_loop_image_returns_to_its_start() {
    for mode in OperationMode::ALL {
        let (poses, plan) = reference_loop(mode, &D, &DkpConfig::default(), &TrajectoryConfig::default()).unwrap();
        let image = jointspace_image(&plan, &D).unwrap();
        let (first, last) = (JointConfig { rho: image[0] }, JointConfig { rho: *image.last().unwrap() });
        assert!(first.distance(&last) <= 1e-6);
        // The loop passes through distinct assembly modes of one joint vector.
        assert!(poses[0].chart_distance(&poses[1]) > 1e-3);
        assert!(poses[1].chart_distance(&poses[2]) > 1e-3);
    }
}

#[test]
fn profile_minimum_is_resolved_by_the_sampling() {
    for mode in OperationMode::ALL {
        let (_, plan) = reference_loop(mode, &D, &DkpConfig::default(), &TrajectoryConfig::default()).unwrap();
        let coarse = det_profile(&plan, &D).unwrap().min_abs_det();
        let mut fine_plan = plan.clone();
        fine_plan.samples_per_segment *= 2;
        let fine = det_profile(&fine_plan, &D).unwrap().min_abs_det();
        assert!((coarse - fine).abs() < 0.1 * fine, "{mode}: {coarse} vs {fine}");
    }
}

#[test]
fn certified_paths_keep_one_sign() {
    let cfg = TrajectoryConfig::default();
    let (poses, plan) = reference_loop(OperationMode::Om2, &D, &DkpConfig::default(), &cfg).unwrap();
    for w in poses.windows(2) {
        let cert = certify_amc(&w[0], &w[1], &plan, &D, &cfg).unwrap();
        assert!(cert.min_abs_det > 0.0);
        let i = plan.anchors.iter().position(|&a| plan.waypoints[a] == w[0].chart()).unwrap();
        let j = plan.anchors.iter().position(|&a| plan.waypoints[a] == w[1].chart()).unwrap();
        let sub = plan.subpath(i.min(j), i.max(j)).unwrap();
        assert!(det_profile(&sub, &D).unwrap().constant_sign());
    }
}
