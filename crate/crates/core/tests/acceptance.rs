//! Acceptance gate: one line per criterion, nonzero exit if any fails.
//!
//! `cargo test --test acceptance -- 4 6` runs only the listed criteria.

use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::Instant;

use noncollision::dynamics::{RunOptions, Scene, StepControl, StopCondition};
use noncollision::estimator::{
    bound_comparison, ctmc_oracle, estimate_survival, estimate_survival_until, fit_exponent,
    BoundReport, BoundSource, OracleOptions, SurvivalEstimate,
};
use noncollision::geometry::{Configuration, Flavor, Point, Rect};
use noncollision::grouping::{
    composition_check, perimeter_inequality_check, shadow_preservation_check, ObstacleSet,
};
use noncollision::potential::{
    certify_field, certify_subharmonic, eval_h, sample_configurations, BarrierSpec, CertifyOptions,
};
use noncollision::spectral::{
    build_qn, gamma_bruteforce, gamma_lower_bound, qn_char_poly, spectrum_closed_form, GammaMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn lattice(pts: &[(f64, f64)], rects: &[(f64, f64, f64, f64)], t: f64) -> Scene {
    let cfg = Configuration::new(
        pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        Flavor::Lattice,
    )
    .unwrap();
    let rects = rects
        .iter()
        .map(|&(a, b, c, d)| Rect::new(a, b, c, d).unwrap())
        .collect();
    Scene::new(cfg, ObstacleSet::new(rects), vec![], t).unwrap()
}

fn spectrum_identity() -> Outcome {
    let mut worst_eig = 0.0f64;
    let mut worst_det = 0.0f64;
    for n in 2..=50 {
        let numeric = build_qn(n).map_err(|e| e.to_string())?.eigenvalues();
        let closed = spectrum_closed_form(n);
        for (c, v) in closed.iter().zip(&numeric) {
            worst_eig = worst_eig.max((c - v).abs());
            let (det, scale) = qn_char_poly(n, *c);
            worst_det = worst_det.max(det.abs() / scale);
        }
    }
    let msg = format!("max |closed - dense| = {worst_eig:.2e}, max scaled |det| = {worst_det:.2e}");
    if worst_eig < 1e-10 && worst_det < 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gamma_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for n in [2usize, 3, 4] {
        let bound = gamma_lower_bound(n);
        for _ in 0..600 {
            let z: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)))
                .collect();
            let est = gamma_bruteforce(&z, GammaMethod::Auto).map_err(|e| e.to_string())?;
            worst = worst.min(est.value - bound);
            count += 1;
        }
    }
    let msg = format!("{count} configurations, min(gamma - (1 - cos(pi/2n))) = {worst:.3e}");
    if worst >= -1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn subharmonicity() -> Outcome {
    let opts = CertifyOptions {
        step: 1e-3,
        ..Default::default()
    };
    let mut msg = Vec::new();
    let mut ok = true;
    for n in [2usize, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + n as u64);
        let samples = sample_configurations(&mut rng, n, 1000, 2.0, 10.0);
        let report = certify_subharmonic(&BarrierSpec::standard(n), &samples, &opts)
            .map_err(|e| e.to_string())?;
        ok &= report.violation_count() == 0;
        msg.push(format!("g n={n}: {} violations", report.violation_count()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let samples = sample_configurations(&mut rng, 3, 1000, 2.0, 10.0);
    let report = certify_field(eval_h, &samples, &opts).map_err(|e| e.to_string())?;
    ok &= report.violation_count() >= 1;
    msg.push(format!("h n=3: {} witnesses", report.violation_count()));
    if ok {
        Ok(msg.join(", "))
    } else {
        Err(msg.join(", "))
    }
}

fn oracle_agreement() -> Outcome {
    let scenes = [
        lattice(&[(0.0, 0.0), (2.0, 0.0)], &[], 1.0),
        lattice(&[(0.0, 0.0), (2.0, 0.0)], &[], 10.0),
        lattice(&[(0.0, 0.0), (1.0, 1.0)], &[], 2.0),
        lattice(&[(0.0, 0.0), (3.0, 1.0)], &[(5.0, 6.0, -4.0, -4.0)], 5.0),
        lattice(&[(0.0, 0.0), (4.0, 0.0)], &[(-5.0, -4.0, 0.0, 0.0)], 10.0),
        lattice(&[(0.0, 0.0), (0.0, 3.0)], &[(4.0, 4.0, 4.0, 8.0)], 10.0),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let o = ctmc_oracle(
            scene,
            &OracleOptions {
                radius: 12,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let e = estimate_survival(scene, &RunOptions::default(), 1_000_000, 400 + i as u64)
            .map_err(|e| e.to_string())?;
        let sigma = (o.value * (1.0 - o.value) / e.replicas as f64).sqrt();
        let z = (e.p_hat - o.value).abs() / sigma;
        let pass = (e.p_hat - o.value).abs() <= 3.0 * sigma + o.leak + o.tail;
        ok &= pass;
        msg.push(format!(
            "[{}] exact {:.5} (leak {:.1e}) mc {:.5} |z| {:.2}",
            i + 1,
            o.value,
            o.leak,
            e.p_hat,
            z
        ));
    }
    if ok {
        Ok(msg.join("; "))
    } else {
        Err(msg.join("; "))
    }
}

/// Two particles at (4,0) and (2, 2√3) and a fixed particle at O: delta = 4.
fn kest_scene() -> Scene {
    let cfg = Configuration::new(
        vec![Point::new(4.0, 0.0), Point::new(2.0, 2.0 * 3f64.sqrt())],
        Flavor::Continuous,
    )
    .unwrap();
    Scene::new(
        cfg,
        ObstacleSet::empty(),
        vec![Point::ORIGIN],
        f64::INFINITY,
    )
    .unwrap()
}

const KEST_RADIUS: f64 = 50.0;

fn kest_estimate(dt: f64, replicas: u64, seed: u64) -> Result<SurvivalEstimate, String> {
    let scene = kest_scene();
    let opts = RunOptions {
        step: StepControl::with_dt(dt),
        ..Default::default()
    };
    estimate_survival_until(
        &scene,
        StopCondition::exit_ball_around(scene.init(), KEST_RADIUS),
        &opts,
        replicas,
        seed,
    )
    .map_err(|e| e.to_string())
}

fn reference_estimate() -> Result<SurvivalEstimate, String> {
    static EST: OnceLock<Result<SurvivalEstimate, String>> = OnceLock::new();
    EST.get_or_init(|| kest_estimate(1e-2, 100_000, 500))
        .clone()
}

fn kest_respected() -> Outcome {
    let est = reference_estimate()?;
    let report = bound_comparison(
        &kest_scene(),
        &est,
        BoundSource::Kest {
            a: 4.0,
            radius: KEST_RADIUS,
        },
    )
    .map_err(|e| e.to_string())?;
    let BoundReport::Kest {
        bound,
        ci_low,
        holds,
    } = report
    else {
        return Err("wrong report kind".into());
    };
    let msg = format!(
        "p_hat {:.4} ci_low {ci_low:.4} >= bound {bound:.3e}: {holds}",
        est.p_hat
    );
    if holds {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn exponent_bracket() -> Outcome {
    let grid = [1e2, 1e3, 1e4, 1e5];
    let mut ok = true;
    let mut msg = Vec::new();
    for (pts, lo, hi) in [
        (vec![(0.0, 0.0), (2.0, 0.0)], 0.6, 1.1),
        (vec![(0.0, 0.0), (2.0, 0.0), (1.0, 2.0)], 1.0, 3.0),
    ] {
        let scene = lattice(&pts, &[], grid[3]);
        let (_, fit) = fit_exponent(&scene, &grid, &RunOptions::default(), 1_000_000, 600)
            .map_err(|e| e.to_string())?;
        let pass = (lo..=hi).contains(&fit.nu_hat);
        ok &= pass;
        msg.push(format!(
            "n={}: nu_hat {:.3} ± {:.3} in [{lo}, {hi}]",
            pts.len(),
            fit.nu_hat,
            fit.stderr
        ));
    }
    if ok {
        Ok(msg.join("; "))
    } else {
        Err(msg.join("; "))
    }
}

fn random_obstacles(rng: &mut ChaCha8Rng) -> ObstacleSet {
    let k = rng.random_range(1..9);
    let rects = (0..k)
        .map(|_| {
            let a = rng.random_range(0..40) as f64 * 0.5;
            let c = rng.random_range(0..40) as f64 * 0.5;
            let w = rng.random_range(0..8) as f64 * 0.5;
            let h = rng.random_range(0..8) as f64 * 0.5;
            Rect::new(a, a + w, c, c + h).unwrap()
        })
        .collect();
    ObstacleSet::new(rects)
}

fn grouping_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut perim, mut shadows, mut comp) = (0, 0, 0);
    let trials = 1000;
    for _ in 0..trials {
        let s = random_obstacles(&mut rng);
        let sigma = rng.random_range(0.1..8.0);
        let sigma_prime = sigma + rng.random_range(0.0..8.0);
        perim += perimeter_inequality_check(&s, sigma).holds as u32;
        shadows +=
            shadow_preservation_check(&s, sigma, sigma_prime).map_err(|e| e.to_string())? as u32;
        comp += composition_check(&s, sigma, sigma_prime).map_err(|e| e.to_string())? as u32;
    }
    let msg = format!(
        "perimeter {perim}/{trials}, shadow {shadows}/{trials}, composition {comp}/{trials}"
    );
    if perim == trials && shadows == trials && comp == trials {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let lattice_scene = dir.path().join("lattice.scene");
    let continuous_scene = dir.path().join("continuous.scene");
    std::fs::write(
        &lattice_scene,
        "flavor lattice\nhorizon 200\nrect 6 8 -3 3\nparticle 0 0\nparticle 2 1\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(
        &continuous_scene,
        "flavor continuous\nhorizon 3\nfixed 0 0\nparticle 4 0\nparticle 0 4\n",
    )
    .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_noncollision");
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "estimate",
            vec![
                "--scene".into(),
                lattice_scene.display().to_string(),
                "--grid".into(),
                "10,50,200".into(),
            ],
        ),
        (
            "simulate",
            vec!["--scene".into(), lattice_scene.display().to_string()],
        ),
        (
            "simulate",
            vec![
                "--scene".into(),
                lattice_scene.display().to_string(),
                "--event-driven".into(),
            ],
        ),
        (
            "estimate",
            vec!["--scene".into(), continuous_scene.display().to_string()],
        ),
        (
            "simulate",
            vec!["--scene".into(), continuous_scene.display().to_string()],
        ),
    ];
    let mut compared = 0;
    for (k, (cmd, args)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "3", "1"] {
            let out = dir
                .path()
                .join(format!("{k}-{threads}-{}.csv", outputs.len()));
            let status = Command::new(bin)
                .arg("--threads")
                .arg(threads)
                .arg(cmd)
                .args(args)
                .args(["--seed", "99", "--replicas", "300", "--out"])
                .arg(&out)
                .stderr(Stdio::null())
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{cmd} exited with {status}"));
            }
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!(
                "{cmd} {args:?}: output depends on the thread count or the run"
            ));
        }
        compared += 1;
    }
    Ok(format!(
        "{compared} commands byte-identical across runs and --threads 1/3"
    ))
}

fn discretization() -> Outcome {
    let coarse = reference_estimate()?;
    let fine = kest_estimate(0.25e-2, 25_000, 900)?;
    let combined = (coarse.std_err().powi(2) + fine.std_err().powi(2)).sqrt();
    let diff = (coarse.p_hat - fine.p_hat).abs();
    let msg = format!(
        "dt 1e-2: {:.4} (N {}), dt 2.5e-3: {:.4} (N {}), |diff| {diff:.4} vs 3 sigma {:.4}",
        coarse.p_hat,
        coarse.replicas,
        fine.p_hat,
        fine.replicas,
        3.0 * combined
    );
    if diff <= 3.0 * combined {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "spectrum identity", spectrum_identity),
        (2, "collision-correlation bound", gamma_bound),
        (3, "subharmonicity certificate", subharmonicity),
        (4, "oracle agreement", oracle_agreement),
        (5, "exit-before-collision lower bound", kest_respected),
        (6, "exponent bracket", exponent_bracket),
        (7, "grouping invariants", grouping_invariants),
        (8, "determinism", determinism),
        (9, "discretization control", discretization),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {k} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
