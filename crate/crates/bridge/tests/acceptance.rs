//! Headless acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! `cargo test -p eeroot-bridge --test acceptance`

use std::collections::VecDeque;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use eeroot::config::Config;
use eeroot::eval::{run_system_suite, run_tracking_suite, wall_contact, BackendKind, Category, SystemReport, TrackingOptions};
use eeroot::impedance::{compliant_target, ExternalForce, ImpedanceGains};
use eeroot::kinematics::{solve_ik, IkParams, JointVector, RobotModel, SolveOptions};
use eeroot::locomotion::{plan, Direction, GridMap, PlannedPath, PlannerConfig};
use eeroot::pose::RootPose;
use eeroot::task::FailureClass;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn det(m: &Matrix3<f64>) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]) - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

fn cramer(a: &Matrix3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let d = det(a);
    Vector3::from_fn(|i, _| {
        let mut m = *a;
        m.set_column(i, b);
        det(&m) / d
    })
}

fn impedance() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut worst_diag, mut worst_spd) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let k = Vector3::from_fn(|_, _| rng.gen_range(10.0..2000.0));
        let f = Vector3::from_fn(|_, _| rng.gen_range(-100.0..100.0));
        let gains = ImpedanceGains::with_stiffness(Matrix3::from_diagonal(&k)).map_err(|e| e.to_string())?;
        let got = compliant_target(&Vector3::zeros(), &ExternalForce::new(f), &gains).offset;
        worst_diag = worst_diag.max((got - f.component_div(&k)).amax());

        let a = Matrix3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
        let m = a * a.transpose() + Matrix3::identity();
        let spd = (m + m.transpose()) * 0.5;
        let gains = ImpedanceGains::with_stiffness(spd).map_err(|e| e.to_string())?;
        let got = compliant_target(&Vector3::zeros(), &ExternalForce::new(f), &gains).offset;
        worst_spd = worst_spd.max((got - cramer(&spd, &f)).amax());
    }
    let el = t.elapsed();
    ensure(
        worst_diag <= 1e-10 && worst_spd <= 1e-8 && el < Duration::from_secs(1),
        format!("1000+1000 cases, diagonal worst {worst_diag:.1e} (<= 1e-10), SPD worst {worst_spd:.1e} (<= 1e-8), {el:.2?} (< 1 s)"),
    )
}

fn wall() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for d in [0.01, 0.02, 0.03, 0.04, 0.05] {
        for kp in [100.0, 200.0, 400.0, 700.0, 1000.0] {
            for ks in [100.0, 200.0, 400.0, 700.0, 1000.0] {
                let cfg = Config { gains: ImpedanceGains::diagonal(kp, 20.0, 1.0).map_err(|e| e.to_string())?, contact_stiffness: ks, ..Config::default() };
                worst = worst.max((wall_contact(&cfg, d, 2.0) - d * kp / (kp + ks)).abs());
            }
        }
    }
    let el = t.elapsed();
    ensure(worst <= 1e-3 && el < Duration::from_secs(30), format!("125 cases, worst |error| {worst:.2e} m (<= 1e-3), {el:.2?} (< 30 s)"))
}

fn tracking() -> Check {
    let r = run_tracking_suite(&Config::default(), &TrackingOptions::default());
    ensure(
        r.trajectories.len() == 100 && r.eps_p <= 0.033 && r.eps_r <= 0.32,
        format!(
            "{} trajectories, eps_p {:.4} m (<= 0.033; <= 0.01 expected: {}), eps_r {:.4} rad (<= 0.32)",
            r.trajectories.len(),
            r.eps_p,
            if r.eps_p <= 0.01 { "yes" } else { "no" },
            r.eps_r
        ),
    )
}

fn jerk() -> Check {
    let cfg = Config::default();
    let with = run_tracking_suite(&cfg, &TrackingOptions { forces: true, ..Default::default() });
    let without = run_tracking_suite(&cfg, &TrackingOptions { forces: true, low_pass: false, ..Default::default() });
    let ordered = with.trajectories.iter().zip(&without.trajectories).filter(|(a, b)| a.rms_jerk <= b.rms_jerk).count();
    ensure(
        ordered >= 95,
        format!("low-pass <= no low-pass in {ordered}/100 trials (>= 95); means {:.3e} vs {:.3e} m/s^3", with.rms_jerk, without.rms_jerk),
    )
}

fn ik() -> Check {
    let m = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut converged, mut violations, mut over) = (0, 0, 0);
    for i in 0..500u64 {
        let root = RootPose::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.4..0.8), rng.gen_range(-3.0..3.0));
        let mut q = JointVector::default();
        for v in q.0.iter_mut() {
            *v = rng.gen_range(-m.joint_limit..m.joint_limit);
        }
        let targets = m.forward_kinematics(&root, &q);
        let options = SolveOptions { seed: i, ..SolveOptions::default() };
        let sol = solve_ik(&m, &root, &JointVector::home(), &targets, &IkParams::default(), &options).map_err(|e| e.to_string())?;
        let (l, r) = m.forward_kinematics(&root, &sol.joints);
        let pos = (l.position - targets.0.position).norm().max((r.position - targets.1.position).norm());
        let rot = l.orientation.angle_to(&targets.0.orientation).max(r.orientation.angle_to(&targets.1.orientation));
        converged += (pos <= 1e-3 && rot <= 1e-2 && sol.iterations <= 200) as usize;
        over += (sol.iterations > 200) as usize;
        violations += !m.within_limits(&sol.joints) as usize;
    }
    ensure(
        converged >= 475 && violations == 0 && over == 0,
        format!("{converged}/500 within 1e-3 m / 1e-2 rad (>= 475), {violations} limit violations, {over} runs over 200 iterations"),
    )
}

fn bfs_reachable(map: &GridMap, start: (f64, f64), goal: (f64, f64)) -> bool {
    let (Some(s), Some(g)) = (map.cell_of(start.0, start.1), map.cell_of(goal.0, goal.1)) else {
        return false;
    };
    if !map.cell_free(s.0, s.1) || !map.cell_free(g.0, g.1) {
        return false;
    }
    let mut seen = vec![false; map.width * map.height];
    let mut queue = VecDeque::from([s]);
    seen[s.1 * map.width + s.0] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == g {
            return true;
        }
        for (a, b) in [(i as i64 + 1, j as i64), (i as i64 - 1, j as i64), (i as i64, j as i64 + 1), (i as i64, j as i64 - 1)] {
            if a < 0 || b < 0 || a >= map.width as i64 || b >= map.height as i64 {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            if map.cell_free(a, b) && !seen[b * map.width + a] {
                seen[b * map.width + a] = true;
                queue.push_back((a, b));
            }
        }
    }
    false
}

/// Re-integrates each motion at 1 cm; returns the first blocked point.
fn first_collision(map: &GridMap, path: &PlannedPath) -> Option<(f64, f64)> {
    let wps = &path.waypoints;
    for w in wps.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.direction == Direction::TurnInPlace {
            continue;
        }
        let sign = if b.direction == Direction::Reverse { -1.0 } else { 1.0 };
        let len = if b.curvature == 0.0 {
            (b.x - a.x).hypot(b.y - a.y)
        } else {
            let dth = (b.theta - a.theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
            (dth / b.curvature).abs()
        };
        let n = (len / 0.01).ceil().max(1.0) as usize;
        for k in 0..=n {
            let s = len * k as f64 / n as f64;
            let (x, y) = if b.curvature == 0.0 {
                (a.x + sign * s * a.theta.cos(), a.y + sign * s * a.theta.sin())
            } else {
                let th = a.theta + sign * b.curvature * s;
                (a.x + (th.sin() - a.theta.sin()) / b.curvature, a.y - (th.cos() - a.theta.cos()) / b.curvature)
            };
            if !map.is_free(x, y) {
                return Some((x, y));
            }
        }
    }
    None
}

fn random_map(seed: u64) -> (GridMap, [f64; 3], [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 120;
    let mut occ = vec![false; n * n];
    for _ in 0..rng.gen_range(4..10) {
        let (w, h) = (rng.gen_range(2..30), rng.gen_range(2..30));
        let (x, y) = (rng.gen_range(0..n - w), rng.gen_range(0..n - h));
        for j in y..y + h {
            for i in x..x + w {
                occ[j * n + i] = true;
            }
        }
    }
    let map = GridMap::new(0.05, [0.0, 0.0], n, n, occ, 0.35);
    let pose = |rng: &mut ChaCha8Rng| {
        for _ in 0..1000 {
            let p = [rng.gen_range(0.4..5.6), rng.gen_range(0.4..5.6), rng.gen_range(-3.1..3.1)];
            if map.is_free(p[0], p[1]) {
                return p;
            }
        }
        [3.0, 3.0, 0.0]
    };
    let start = pose(&mut rng);
    let goal = pose(&mut rng);
    (map, start, goal)
}

fn planner() -> Check {
    let t = Instant::now();
    let cfg = PlannerConfig::default();
    let (mut agree, mut feasible, mut collisions) = (0, 0, 0);
    for seed in 0..50 {
        let (map, start, goal) = random_map(seed);
        let reachable = bfs_reachable(&map, (start[0], start[1]), (goal[0], goal[1]));
        feasible += reachable as usize;
        match plan(&map, start, goal, &cfg) {
            Ok(path) => {
                agree += reachable as usize;
                collisions += first_collision(&map, &path).is_some() as usize;
            }
            Err(_) => agree += !reachable as usize,
        }
    }
    let empty = GridMap::new(0.05, [0.0, 0.0], 120, 120, vec![false; 120 * 120], 0.35);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_detour = 0.0f64;
    // random pairs with the goal straight ahead of the start heading
    for _ in 0..20 {
        let s: [f64; 2] = [rng.gen_range(0.5..5.5), rng.gen_range(0.5..5.5)];
        let g: [f64; 2] = [rng.gen_range(0.5..5.5), rng.gen_range(0.5..5.5)];
        let straight = (g[0] - s[0]).hypot(g[1] - s[1]);
        if straight < 0.5 {
            continue;
        }
        let heading = (g[1] - s[1]).atan2(g[0] - s[0]);
        let path = plan(&empty, [s[0], s[1], heading], [g[0], g[1], heading], &cfg).map_err(|e| format!("empty map: {e}"))?;
        worst_detour = worst_detour.max(path.length() / straight - 1.0);
    }
    let el = t.elapsed();
    ensure(
        agree == 50 && collisions == 0 && worst_detour <= 0.05 && el < Duration::from_secs(60),
        format!(
            "{agree}/50 agree with BFS ({feasible} feasible), {collisions} paths in collision at 1 cm, empty-map detour {:.1}% (<= 5%), {el:.2?} (< 60 s)",
            worst_detour * 100.0
        ),
    )
}

fn simple_tasks() -> Check {
    let cfg = Config::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [Category::SimpleArm, Category::SimpleNav] {
        let r = run_system_suite(&cfg, c, 5, 0, &BackendKind::Scripted);
        let para = r.paraphrased.as_ref().map_or(0, |p| p.successes);
        ok &= r.successes == 5 && r.trials == 5 && para >= 4;
        parts.push(format!("{c} {}/{} (paraphrased {para}/5)", r.successes, r.trials));
    }
    ensure(ok, parts.join(", "))
}

fn single_object() -> Check {
    let cfg = Config::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [Category::ExplicitPlacement, Category::LinguisticVariation, Category::SpatialRelation] {
        let r = run_system_suite(&cfg, c, 30, 0, &BackendKind::Scripted);
        let shaped = r.mean_steps.is_some() && r.mean_time.is_some() && r.table().contains("| Steps | Time (s) |");
        ok &= r.trials == 30 && r.successes * 10 >= 7 * r.trials && shaped;
        parts.push(format!("{c} {}/{}", r.successes, r.trials));
    }
    ensure(ok, format!("{} (each >= 21/30)", parts.join(", ")))
}

fn long_horizon() -> Check {
    let cfg = Config::default();
    let run = || run_system_suite(&cfg, Category::LongHorizon2obj, 10, 0, &BackendKind::Scripted);
    let (a, b): (SystemReport, SystemReport) = (run(), run());
    let same = serde_json::to_string(&a).map_err(|e| e.to_string())? == serde_json::to_string(&b).map_err(|e| e.to_string())?;
    let keys = [FailureClass::LlmError, FailureClass::Manipulation, FailureClass::Locomotion].iter().all(|c| a.histogram.contains_key(c.label()));
    let hist: Vec<String> = a.histogram.iter().map(|(k, v)| format!("{k} {v}")).collect();
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    ensure(
        a.trials == 10 && same && keys,
        format!(
            "{}/10, mean steps {}, mean time {} s, failures [{}], deterministic: {same}",
            a.successes,
            opt(a.mean_steps),
            opt(a.mean_time),
            hist.join(", ")
        ),
    )
}

fn determinism() -> Check {
    let dir = std::env::temp_dir().join(format!("eeroot-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let log = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/commands.jsonl");
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let rec = dir.join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_eeroot"))
            .args(["simulate", "--seed", "11", "--ticks", "1500", "--commands"])
            .arg(&log)
            .arg("--record")
            .arg(&rec)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        std::fs::read(&rec).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.jsonl")?, run("b.jsonl")?);
    std::fs::remove_dir_all(&dir).ok();
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    ensure(a == b && lines == 600, format!("two 1500-tick runs with a command log: {} bytes, {lines} states, identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let checks: [(&str, fn() -> Check); 10] = [
        ("impedance exactness", impedance),
        ("wall-contact equilibrium", wall),
        ("tracking", tracking),
        ("jerk ordering", jerk),
        ("IK convergence", ik),
        ("planner completeness", planner),
        ("simple tasks", simple_tasks),
        ("single-object loco-manipulation", single_object),
        ("long-horizon harness", long_horizon),
        ("simulate determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let result = check();
        let el = t.elapsed();
        match result {
            Ok(d) => println!("PASS  {name}: {d} [{el:.1?}]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{el:.1?}]");
            }
        }
    }
    let total = started.elapsed();
    if total < Duration::from_secs(300) {
        println!("PASS  full primary suite headless: {total:.1?} (< 5 min)");
    } else {
        failed += 1;
        println!("FAIL  full primary suite headless: {total:.1?} (< 5 min)");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
