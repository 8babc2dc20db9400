use eeroot::config::Config;
use eeroot::eval::{
    reference_trajectory, rms_jerk, run_system_suite, run_tracking_suite, tracking_error, BackendKind, Category,
    TrackingOptions,
};
use eeroot::pose::Pose3;
use eeroot::task::FailureClass;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sampled(f: impl Fn(f64) -> Vector3<f64>, dt: f64, n: usize) -> Vec<Vector3<f64>> {
    (0..n).map(|k| f(k as f64 * dt)).collect()
}

#[test]
fn sine_jerk_matches_analytic() {
    let (a, w) = (0.1, std::f64::consts::TAU);
    let p = sampled(|t| Vector3::new(a * (w * t).sin(), 0.0, 0.0), 0.02, 501);
    let expected = a * w.powi(3) / 2f64.sqrt();
    let got = rms_jerk(&[&p], 0.02).unwrap();
    assert!((got - expected).abs() / expected < 0.02, "{got} vs {expected}");
}

#[test]
fn jerk_is_translation_invariant_and_cubic_in_time() {
    let f = |t: f64| Vector3::new(t.sin(), (2.0 * t).cos(), 0.3 * t * t);
    let dt = 0.01;
    let base = rms_jerk(&[&sampled(f, dt, 400)], dt).unwrap();
    let moved = rms_jerk(&[&sampled(|t| f(t) + Vector3::new(3.0, -1.0, 2.0), dt, 400)], dt).unwrap();
    assert!((base - moved).abs() < 1e-6 * base);
    // twice as fast: same samples, half the timestep
    let alpha: f64 = 2.0;
    let fast = rms_jerk(&[&sampled(f, dt, 400)], dt / alpha).unwrap();
    assert!((fast - alpha.powi(3) * base).abs() < 1e-9 * fast);
}

#[test]
fn tracking_error_matches_two_pass_rmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pose = |rng: &mut ChaCha8Rng| {
        let p = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let r = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        Pose3::new(p, UnitQuaternion::from_scaled_axis(r))
    };
    let reference: Vec<(Pose3, Pose3)> = (0..200).map(|_| (pose(&mut rng), pose(&mut rng))).collect();
    let actual: Vec<(Pose3, Pose3)> = (0..200).map(|_| (pose(&mut rng), pose(&mut rng))).collect();
    let got = tracking_error(&reference, &actual).unwrap();

    let mut sq = Vec::new();
    let mut ang = Vec::new();
    for (a, b) in reference.iter().zip(&actual) {
        for (x, y) in [(&a.0, &b.0), (&a.1, &b.1)] {
            sq.push((x.position - y.position).norm_squared());
            let rel = x.orientation.inverse() * y.orientation;
            ang.push(rel.angle().powi(2));
        }
    }
    let two_pass = |v: &[f64]| (v.iter().sum::<f64>() / v.len() as f64).sqrt();
    assert!((got.position.rmse - two_pass(&sq)).abs() < 1e-12);
    assert!((got.rotation.rmse - two_pass(&ang)).abs() < 1e-12);
}

#[test]
fn references_stay_under_task_speed() {
    let cfg = Config::default();
    for seed in 0..20 {
        let refs = reference_trajectory(&cfg, seed, 200, 1.0);
        let world: Vec<Vector3<f64>> = refs.iter().map(|c| c.world_targets(&c.root).0.position).collect();
        for w in world.windows(2) {
            let v = (w[1] - w[0]).norm() / cfg.timestep;
            assert!(v <= 0.5, "seed {seed}: {v} m/s");
        }
    }
}

#[test]
fn hundred_trajectories_track() {
    let report = run_tracking_suite(&Config::default(), &TrackingOptions::default());
    println!("{}", report.table());
    assert_eq!(report.trajectories.len(), 100);
    assert!(report.eps_p <= 0.01, "{}", report.eps_p);
    assert!(report.eps_r <= 0.32, "{}", report.eps_r);
    assert_eq!(report.limit_violations, 0);
}

#[test]
fn low_pass_lowers_jerk_under_pulses() {
    let cfg = Config::default();
    let with = run_tracking_suite(&cfg, &TrackingOptions { forces: true, ..Default::default() });
    let without = run_tracking_suite(&cfg, &TrackingOptions { forces: true, low_pass: false, ..Default::default() });
    let ordered = with.trajectories.iter().zip(&without.trajectories).filter(|(a, b)| a.rms_jerk <= b.rms_jerk).count();
    assert!(ordered >= 95, "{ordered}/100");
    assert!(with.rms_jerk <= without.rms_jerk);
}

#[test]
fn simple_nav_is_perfect_and_reports_add_up() {
    let cfg = Config::default();
    let r = run_system_suite(&cfg, Category::SimpleNav, 5, 0, &BackendKind::Scripted);
    assert_eq!((r.successes, r.trials), (5, 5));
    assert_eq!(r.paraphrased.as_ref().map(|p| p.successes), Some(5));
    assert_eq!(r.histogram.values().sum::<usize>(), r.failures);
    assert_eq!(r.successes + r.failures, r.trials);
}

#[test]
fn long_horizon_is_deterministic() {
    let cfg = Config::default();
    let a = run_system_suite(&cfg, Category::LongHorizon2obj, 10, 3, &BackendKind::Scripted);
    let b = run_system_suite(&cfg, Category::LongHorizon2obj, 10, 3, &BackendKind::Scripted);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.trials, 10);
    for label in [FailureClass::LlmError, FailureClass::Manipulation, FailureClass::Locomotion] {
        assert!(a.histogram.contains_key(label.label()));
    }
    assert!(a.table().contains("long-horizon-2obj"));
}
