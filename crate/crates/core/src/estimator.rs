//! Monte Carlo survival estimates, exponent regression and an exact
//! small-system oracle.

use rayon::prelude::*;

use crate::dynamics::{run_replica, RunOptions, RunRecord, Scene, StopCondition, StopSpec};
use crate::error::{Error, Result};
use crate::geometry::{delta, Flavor, LatticeBox, Point, Rect};
use crate::potential::kest_bound;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // clamp the rounding residue at the boundaries so lo <= p <= hi holds exactly
    (
        (centre - half).max(0.0).min(p),
        (centre + half).min(1.0).max(p),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    pub horizon: f64,
    pub replicas: u64,
    pub survivors: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
}

impl SurvivalEstimate {
    pub fn from_counts(
        horizon: f64,
        replicas: u64,
        survivors: u64,
        master_seed: u64,
    ) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::InvalidArgument("need at least one replica".into()));
        }
        if survivors > replicas {
            return Err(Error::InvalidArgument(format!(
                "{survivors} survivors out of {replicas} replicas"
            )));
        }
        let (ci_low, ci_high) = wilson_interval(survivors, replicas, Z95);
        Ok(SurvivalEstimate {
            horizon,
            replicas,
            survivors,
            p_hat: survivors as f64 / replicas as f64,
            ci_low,
            ci_high,
            master_seed,
        })
    }

    /// Binomial standard error `sqrt(p(1-p)/N)`.
    pub fn std_err(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.replicas as f64).sqrt()
    }

    pub fn csv_header() -> &'static str {
        "T,N,survivors,p_hat,ci_low,ci_high,seed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.horizon,
            self.replicas,
            self.survivors,
            self.p_hat,
            self.ci_low,
            self.ci_high,
            self.master_seed
        )
    }
}

/// Runs replicas `0..replicas` in parallel and maps each record through `f`.
/// The output is in replica order whatever the thread count; on failure the
/// error of the lowest failing replica is returned.
pub fn map_replicas<T, F>(
    scene: &Scene,
    stops: &[StopSpec],
    opts: &RunOptions,
    replicas: u64,
    master_seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RunRecord) -> T + Sync + Send,
{
    let out: Vec<Result<T>> = (0..replicas)
        .into_par_iter()
        .map(|r| run_replica(scene, stops, opts, master_seed, r).map(|rec| f(&rec)))
        .collect();
    out.into_iter().collect()
}

/// `P(T_c > T)` at the scene horizon.
pub fn estimate_survival(
    scene: &Scene,
    opts: &RunOptions,
    replicas: u64,
    master_seed: u64,
) -> Result<SurvivalEstimate> {
    let mut curve = survival_curve(scene, &[scene.horizon()], opts, replicas, master_seed)?;
    Ok(curve.remove(0))
}

/// `P(T_c > T)` on a grid of horizons from one set of trajectories run to the
/// largest horizon, so that survival is nested replica by replica.
pub fn survival_curve(
    scene: &Scene,
    grid: &[f64],
    opts: &RunOptions,
    replicas: u64,
    master_seed: u64,
) -> Result<Vec<SurvivalEstimate>> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    if grid.is_empty() {
        return Err(Error::Empty("horizon grid"));
    }
    if let Some(t) = grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "horizons must be finite and >= 0, got {t}"
        )));
    }
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let run_scene = scene.with_horizon(t_max)?;
    let collision_times = map_replicas(&run_scene, &[], opts, replicas, master_seed, |rec| {
        rec.collision_time
    })?;
    grid.iter()
        .map(|&t| {
            let survivors = collision_times
                .iter()
                .filter(|tc| tc.is_none_or(|tc| tc > t))
                .count() as u64;
            SurvivalEstimate::from_counts(t, replicas, survivors, master_seed)
        })
        .collect()
}

/// Probability of meeting a terminal stop condition before any collision.
/// The estimate's `horizon` field carries the condition's threshold.
pub fn estimate_survival_until(
    scene: &Scene,
    condition: StopCondition,
    opts: &RunOptions,
    replicas: u64,
    master_seed: u64,
) -> Result<SurvivalEstimate> {
    let label = match &condition {
        StopCondition::DeltaAtLeast(b)
        | StopCondition::WAtLeast(b)
        | StopCondition::RhoAtLeast(b) => *b,
        StopCondition::ExitBall { radius, .. } => *radius,
    };
    let stops = [StopSpec::terminal(condition)];
    let survived = map_replicas(scene, &stops, opts, replicas, master_seed, |rec| {
        rec.survived_until_stop(0)
    })?;
    let survivors = survived.iter().filter(|s| **s).count() as u64;
    SurvivalEstimate::from_counts(label, replicas, survivors, master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Each coordinate is confined to `init ± radius`; leaving counts as leak.
    pub radius: i64,
    /// Mass of the neglected Poisson tail.
    pub tolerance: f64,
    /// Largest acceptable truncation leak.
    pub max_leak: f64,
    pub max_states: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            radius: 12,
            tolerance: 1e-8,
            max_leak: 1e-3,
            max_states: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    /// Survival mass that never left the truncation box.
    pub value: f64,
    /// Mass that reached the truncation boundary before `T` without colliding;
    /// the exact probability lies in `[value, value + leak + tail]`.
    pub leak: f64,
    /// Bound on the neglected Poisson tail.
    pub tail: f64,
    pub states: usize,
    pub steps: usize,
}

impl OracleResult {
    pub fn upper(&self) -> f64 {
        (self.value + self.leak + self.tail).min(1.0)
    }
}

/// Exact `P(T_c > T)` for two lattice walkers by uniformization of the jump
/// chain of the pair, truncated to a box around the initial positions.
pub fn ctmc_oracle(scene: &Scene, opts: &OracleOptions) -> Result<OracleResult> {
    if scene.flavor() != Flavor::Lattice || scene.n() != 2 {
        return Err(Error::InvalidArgument(
            "the oracle handles two lattice walkers only".into(),
        ));
    }
    let t = scene.horizon();
    if !t.is_finite() {
        return Err(Error::InvalidArgument(
            "the oracle needs a finite horizon".into(),
        ));
    }
    if opts.radius < 1 || !(opts.tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid oracle options {opts:?}"
        )));
    }
    let w = (2 * opts.radius + 1) as usize;
    let states = w
        .checked_pow(4)
        .filter(|&s| s <= opts.max_states)
        .ok_or_else(|| {
            Error::Budget(format!(
                "{w}^4 states exceed the budget of {}",
                opts.max_states
            ))
        })?;
    let pts = scene.init().points();
    let origin: Vec<i64> = pts.iter().flat_map(|p| [p.x as i64, p.y as i64]).collect();
    let boxes: Vec<LatticeBox> = scene
        .obstacles()
        .rects()
        .iter()
        .filter_map(Rect::lattice_sites)
        .collect();
    let lo: Vec<i64> = origin.iter().map(|c| c - opts.radius).collect();

    let decode = |s: usize| -> [i64; 4] {
        let mut s = s;
        let mut c = [0i64; 4];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = lo[k] + (s % w) as i64;
            s /= w;
        }
        c
    };
    let encode = |c: &[i64; 4]| -> Option<usize> {
        let mut s = 0usize;
        for k in (0..4).rev() {
            let off = c[k] - lo[k];
            if off < 0 || off >= w as i64 {
                return None;
            }
            s = s * w + off as usize;
        }
        Some(s)
    };
    let collided = |c: &[i64; 4]| {
        (c[0] - c[2]).abs() + (c[1] - c[3]).abs() <= 1
            || boxes
                .iter()
                .any(|b| b.dist1(c[0], c[1]) <= 1 || b.dist1(c[2], c[3]) <= 1)
    };

    const DEAD: u32 = u32::MAX;
    const LEAK: u32 = u32::MAX - 1;
    let moves: [(usize, i64); 8] = [
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (2, 1),
        (2, -1),
        (3, 1),
        (3, -1),
    ];
    let mut table = vec![DEAD; states * 8];
    let mut alive = vec![false; states];
    for s in 0..states {
        let c = decode(s);
        if collided(&c) {
            continue;
        }
        alive[s] = true;
        for (m, &(k, d)) in moves.iter().enumerate() {
            let mut c2 = c;
            c2[k] += d;
            table[s * 8 + m] = if collided(&c2) {
                DEAD
            } else {
                match encode(&c2) {
                    Some(s2) => s2 as u32,
                    None => LEAK,
                }
            };
        }
    }

    // Poisson(Λt) weights with Λ = 2 (two rate-1 walkers), in log space.
    let lambda_t = 2.0 * t;
    let log_weight = |k: usize, log_fact: f64| -> f64 {
        if lambda_t == 0.0 {
            if k == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -lambda_t + k as f64 * lambda_t.ln() - log_fact
        }
    };

    let start = encode(&[origin[0], origin[1], origin[2], origin[3]])
        .expect("initial state is inside the box");
    let mut mass = vec![0.0f64; states];
    let mut next = vec![0.0f64; states];
    mass[start] = 1.0;
    let mut live = 1.0f64;
    let mut leaked = 0.0f64;
    let (mut value, mut leak, mut used) = (0.0f64, 0.0f64, 0.0f64);
    let mut log_fact = 0.0f64;
    let mut k = 0usize;
    loop {
        let wk = log_weight(k, log_fact).exp();
        value += wk * live;
        leak += wk * leaked;
        used += wk;
        let tail = 1.0 - used;
        // past the Poisson mode the remaining tail is what is left of the unit mass
        if tail <= opts.tolerance && (k as f64) >= lambda_t || live == 0.0 {
            let tail = tail.max(0.0);
            if leak > opts.max_leak {
                return Err(Error::Numerical(format!(
                    "truncation leak {leak:.3e} exceeds {:.3e}; increase the radius",
                    opts.max_leak
                )));
            }
            return Ok(OracleResult {
                value,
                leak,
                tail,
                states,
                steps: k,
            });
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut new_leak = 0.0;
        for s in 0..states {
            let m = mass[s];
            if m == 0.0 || !alive[s] {
                continue;
            }
            let share = m * 0.125;
            for &dst in &table[s * 8..s * 8 + 8] {
                match dst {
                    DEAD => {}
                    LEAK => new_leak += share,
                    d => next[d as usize] += share,
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        leaked += new_leak;
        live = mass.iter().sum();
        k += 1;
        log_fact += (k as f64).ln();
        if k > 100_000_000 {
            return Err(Error::Budget("uniformization did not converge".into()));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub horizon: f64,
    pub ln_ln_t: f64,
    pub ln_p: f64,
    /// Inverse variance of `ln p̂`.
    pub weight: f64,
}

/// `ln p̂ = intercept - nu_hat · ln ln T` by weighted least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub points: Vec<FitPoint>,
    pub nu_hat: f64,
    pub intercept: f64,
    /// Inverse-variance standard error, inflated by the reduced chi-square when it exceeds 1.
    pub stderr: f64,
    pub chi2_reduced: f64,
}

impl ExponentFit {
    pub fn slope(&self) -> f64 {
        -self.nu_hat
    }
}

/// Fits the exponent to survival estimates on an increasing grid of horizons.
pub fn fit_estimates(estimates: &[SurvivalEstimate]) -> Result<ExponentFit> {
    if estimates.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 grid points, got {}",
            estimates.len()
        )));
    }
    for pair in estimates.windows(2) {
        if !(pair[1].horizon > pair[0].horizon) {
            return Err(Error::InvalidArgument(
                "horizon grid must be strictly increasing".into(),
            ));
        }
    }
    let mut points = Vec::with_capacity(estimates.len());
    for e in estimates {
        if !(e.horizon >= 4.0) {
            return Err(Error::InvalidArgument(format!(
                "grid horizons must be >= 4, got {}",
                e.horizon
            )));
        }
        if e.survivors == 0 {
            return Err(Error::InvalidArgument(format!(
                "no survivors at T = {}; increase N",
                e.horizon
            )));
        }
        let sigma_p = (e.ci_high - e.ci_low) / (2.0 * Z95);
        let sigma_ln = sigma_p / e.p_hat;
        let weight = if sigma_ln > 0.0 {
            1.0 / (sigma_ln * sigma_ln)
        } else {
            1.0
        };
        points.push(FitPoint {
            horizon: e.horizon,
            ln_ln_t: e.horizon.ln().ln(),
            ln_p: e.p_hat.ln(),
            weight,
        });
    }
    fit_points(points)
}

fn fit_points(points: Vec<FitPoint>) -> Result<ExponentFit> {
    let sw: f64 = points.iter().map(|p| p.weight).sum();
    let xbar = points.iter().map(|p| p.weight * p.ln_ln_t).sum::<f64>() / sw;
    let ybar = points.iter().map(|p| p.weight * p.ln_p).sum::<f64>() / sw;
    let sxx: f64 = points
        .iter()
        .map(|p| p.weight * (p.ln_ln_t - xbar).powi(2))
        .sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.weight * (p.ln_ln_t - xbar) * (p.ln_p - ybar))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical("degenerate horizon grid".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let chi2: f64 = points
        .iter()
        .map(|p| p.weight * (p.ln_p - intercept - slope * p.ln_ln_t).powi(2))
        .sum();
    let chi2_reduced = chi2 / (points.len() - 2) as f64;
    let stderr = (chi2_reduced.max(1.0) / sxx).sqrt();
    Ok(ExponentFit {
        points,
        nu_hat: -slope,
        intercept,
        stderr,
        chi2_reduced,
    })
}

/// Runs matched-seed survival on `grid` and fits the exponent.
pub fn fit_exponent(
    scene: &Scene,
    grid: &[f64],
    opts: &RunOptions,
    replicas: u64,
    master_seed: u64,
) -> Result<(Vec<SurvivalEstimate>, ExponentFit)> {
    let curve = survival_curve(scene, grid, opts, replicas, master_seed)?;
    let fit = fit_estimates(&curve)?;
    Ok((curve, fit))
}

/// Which bound an estimate is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSource {
    /// Exit-before-collision bound with explicit constants; `radius` is the
    /// exit-ball radius the estimate was taken at.
    Kest { a: f64, radius: f64 },
    /// The theorem's `(ln T)^-nu` bound, whose constant `c0` is unknown.
    Theorem { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundReport {
    Kest {
        bound: f64,
        ci_low: f64,
        holds: bool,
    },
    /// Smallest `c0` for which `(ln T)^-nu` stays below the estimate (resp.
    /// the upper confidence limit); any valid `c0` is at least this large.
    /// `None` when the corresponding probability is zero.
    Theorem {
        nu_threshold: Option<f64>,
        c0_threshold: Option<f64>,
        c0_threshold_upper: Option<f64>,
    },
}

pub fn bound_comparison(
    scene: &Scene,
    estimate: &SurvivalEstimate,
    source: BoundSource,
) -> Result<BoundReport> {
    match source {
        BoundSource::Kest { a, radius } => {
            let mut problems = Vec::new();
            if scene.flavor() != Flavor::Continuous {
                problems.push("continuous flavor".to_string());
            }
            if !scene.obstacles().is_empty() {
                problems.push("no rectangular obstacles".to_string());
            }
            if scene.fixed() != [Point::ORIGIN] {
                problems.push("a single fixed particle at the origin".to_string());
            }
            let d = delta(scene.init().points());
            if !(a >= 2.0 && d >= a) {
                problems.push(format!("delta(z) >= a >= 2 (delta = {d}, a = {a})"));
            }
            if estimate.horizon != radius {
                problems.push(format!(
                    "estimate taken at exit radius {radius}, got {}",
                    estimate.horizon
                ));
            }
            if !problems.is_empty() {
                return Err(Error::Hypothesis(problems));
            }
            let bound = kest_bound(a, radius, scene.n())?;
            Ok(BoundReport::Kest {
                bound,
                ci_low: estimate.ci_low,
                holds: estimate.ci_low >= bound,
            })
        }
        BoundSource::Theorem { p } => {
            if !(p >= 2.0) {
                return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
            }
            let t = estimate.horizon;
            if !(t > std::f64::consts::E) {
                return Err(Error::InvalidArgument(format!(
                    "theorem comparison needs T > e, got {t}"
                )));
            }
            let n = scene.n() as f64;
            let scale = n.powi(4) * p * p * p.ln();
            let lnln = t.ln().ln();
            let nu = |prob: f64| (prob > 0.0).then(|| (-prob.ln() / lnln).max(0.0));
            let nu_threshold = nu(estimate.p_hat);
            Ok(BoundReport::Theorem {
                nu_threshold,
                c0_threshold: nu_threshold.map(|v| v / scale),
                c0_threshold_upper: nu(estimate.ci_high).map(|v| v / scale),
            })
        }
    }
}
