//! Command-line front end.
//!
//! Data goes to `--out` (or stdout when omitted), progress to stderr.
//! Exit codes: 0 ok, 1 invalid input, 2 runtime failure, 3 a requested check failed.

pub mod scene_file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use crate::bounds::{corridor_exponent_form, higher_dim_bound, theorem_nu_t0, BoundParams};
use crate::dynamics::{
    run_continuous_observed, run_lattice_observed, LatticeMode, LatticeOptions, RunOptions,
    RunRecord, Scene, StepControl, StopCondition, StopSpec,
};
use crate::error::{Error, Result};
use crate::estimator::{
    bound_comparison, ctmc_oracle, estimate_survival_until, fit_exponent, map_replicas,
    survival_curve, BoundReport, BoundSource, OracleOptions, SurvivalEstimate,
};
use crate::geometry::{Flavor, Point};
use crate::grouping::{
    composition_check, group_fixpoint, mesoscopic_scale, perimeter_inequality_check,
    shadow_preservation_check,
};
use crate::potential::{
    certify_field, certify_subharmonic, eval_h, sample_configurations, BarrierSpec, CertifyOptions,
};
use crate::rng::replica_stream;
use crate::spectral::{build_qn, spectrum_closed_form};

pub use scene_file::{format_scene, parse_scene};

const AFTER_HELP: &str = "\
CSV schemas:
  simulate  replica,collided,collision_time,end_time,event_count,max_elongation,exit_time
  trace     t,particle_id,x,y
  estimate  T,N,survivors,p_hat,ci_low,ci_high,seed
  fit       T,lnlnT,ln_phat,weight  then `# slope=.. stderr=.. nu_hat=..`
  spectrum  k,closed_form,numeric,abs_err
  certify   sample_id,g_value,fd_laplacian,violation_flag
  group     a,b,c,d  then `# <check>=<bool>` lines
  bound     n,p,c0,flavor,nu,ln_T0,T0,log_bound_at_T0[,dim,a,higher_dim_bound]
  oracle    T,value,leak,tail,upper,states,steps

Exit codes: 0 ok, 1 invalid input, 2 runtime failure, 3 a requested check failed.";

#[derive(Debug, Parser)]
#[command(name = "noncollision", version, about = "Non-collision probabilities of planar particles among rectangular obstacles", after_help = AFTER_HELP)]
pub struct Cli {
    /// Worker threads for replica fan-out (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicas and dump one record per replica.
    Simulate(SimulateArgs),
    /// Survival probability with Wilson 95% interval.
    Estimate(EstimateArgs),
    /// Fit the exponent of ln P against ln ln T on a horizon grid.
    Fit(FitArgs),
    /// Closed-form spectrum of Q_n against a dense eigensolver.
    Spectrum(SpectrumArgs),
    /// Finite-difference subharmonicity check of the barrier (or of h).
    Certify(CertifyArgs),
    /// Group the obstacles of a scene and check the grouping properties.
    Group(GroupArgs),
    /// Evaluate the closed-form bounds.
    Bound(BoundArgs),
    /// Exact survival for two lattice walkers by uniformization.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: u64,
    /// Continuous time step.
    #[arg(long, default_value_t = 1e-2)]
    pub step: f64,
    /// Simulate lattice walks jump by jump instead of in safe batches.
    #[arg(long)]
    pub event_driven: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            lattice: LatticeOptions {
                mode: if self.event_driven {
                    LatticeMode::Event
                } else {
                    LatticeMode::Leap
                },
                ..Default::default()
            },
            step: StepControl::with_dt(self.step),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub run: RunArgs,
    /// Stop each run when the configuration leaves this ball around its start.
    #[arg(long)]
    pub exit_radius: Option<f64>,
    /// Write the trajectory of replica 0 here (implies --event-driven).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated horizons (default: the scene horizon).
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Estimate P(exit the ball of this radius before collision) instead.
    #[arg(long, conflicts_with = "grid")]
    pub exit_radius: Option<f64>,
    /// Compare against the exit-ball bound with this `a` (needs --exit-radius).
    #[arg(long, requires = "exit_radius")]
    pub a: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    /// Also report the smallest theorem constant c0 consistent with each point, for this p.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Field {
    /// The barrier product, expected subharmonic.
    G,
    /// The product of log distances, expected to fail somewhere.
    H,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = Field::G)]
    pub mode: Field,
    /// Minimum delta of the sampled configurations.
    #[arg(long, default_value_t = 2.0)]
    pub min_delta: f64,
    /// Half width of the sampling box.
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub sigma: f64,
    /// Coarser scale for the shadow and composition checks (default: sigma).
    #[arg(long)]
    pub sigma_prime: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub c0: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::Lattice)]
    pub flavor: FlavorArg,
    #[arg(long, requires = "a")]
    pub dim: Option<u32>,
    #[arg(long, requires = "dim")]
    pub a: Option<f64>,
    /// Report the shape of the corridor exponent at this theta instead of a probability.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlavorArg {
    #[value(alias = "discrete")]
    Lattice,
    Continuous,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Truncation radius per coordinate.
    #[arg(long, default_value_t = 12)]
    pub radius: i64,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub max_leak: f64,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

pub fn exit_code(result: &Result<Status>) -> i32 {
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::CheckFailed) => 3,
        Err(
            Error::InvalidArgument(_)
            | Error::NonIntegralRect(_)
            | Error::Empty(_)
            | Error::Domain { .. }
            | Error::Hypothesis(_)
            | Error::Syntax { .. }
            | Error::UnspecifiedConstant(_),
        ) => 1,
        Err(Error::Budget(_) | Error::Numerical(_) | Error::Io(_)) => 2,
    }
}

fn load_scene(path: &Path) -> Result<Scene> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scene(&text)
}

/// Writes the whole output at once, replacing any previous file.
fn emit(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, data).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{data}");
            Ok(())
        }
    }
}

fn check(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::CheckFailed
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Fit(a) => fit(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Certify(a) => certify(a),
        Command::Group(a) => group(a),
        Command::Bound(a) => bound(a),
        Command::Oracle(a) => oracle(a),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn simulate(a: SimulateArgs) -> Result<Status> {
    let scene = load_scene(&a.common.scene)?;
    let mut opts = a.run.options();
    if a.trace.is_some() {
        // same trajectories for the records and the trace
        opts.lattice.mode = LatticeMode::Event;
    }
    let stops: Vec<StopSpec> = a
        .exit_radius
        .map(|r| {
            vec![StopSpec::terminal(StopCondition::exit_ball_around(
                scene.init(),
                r,
            ))]
        })
        .unwrap_or_default();
    eprintln!("simulate: {} replicas, seed {}", a.run.replicas, a.run.seed);
    let records = map_replicas(
        &scene,
        &stops,
        &opts,
        a.run.replicas,
        a.run.seed,
        RunRecord::clone,
    )?;
    let mut out = String::from(
        "replica,collided,collision_time,end_time,event_count,max_elongation,exit_time\n",
    );
    for r in &records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.replica,
            r.collided,
            opt(r.collision_time),
            r.end_time,
            r.event_count,
            r.max_elongation,
            opt(r.exit_times.first().copied().flatten())
        );
    }
    emit(a.common.out.as_deref(), &out)?;
    if let Some(path) = &a.trace {
        let mut trace = String::from("t,particle_id,x,y\n");
        for (i, p) in scene.init().points().iter().enumerate() {
            let _ = writeln!(trace, "0,{i},{},{}", p.x, p.y);
        }
        let mut rng = replica_stream(a.run.seed, 0);
        let mut obs = |t: f64, i: usize, p: Point| {
            let _ = writeln!(trace, "{t},{i},{},{}", p.x, p.y);
        };
        match scene.flavor() {
            Flavor::Lattice => {
                run_lattice_observed(&scene, &stops, &opts.lattice, &mut rng, &mut obs)?
            }
            Flavor::Continuous => {
                run_continuous_observed(&scene, &stops, &opts.step, &mut rng, &mut obs)?
            }
        };
        emit(Some(path), &trace)?;
    }
    Ok(Status::Ok)
}

fn estimate(a: EstimateArgs) -> Result<Status> {
    let scene = load_scene(&a.common.scene)?;
    let opts = a.run.options();
    eprintln!("estimate: {} replicas, seed {}", a.run.replicas, a.run.seed);
    let mut out = format!("{}\n", SurvivalEstimate::csv_header());
    let mut status = Status::Ok;
    if let Some(radius) = a.exit_radius {
        let cond = StopCondition::exit_ball_around(scene.init(), radius);
        let est = estimate_survival_until(&scene, cond, &opts, a.run.replicas, a.run.seed)?;
        out += &est.csv_row();
        out.push('\n');
        if let Some(a_param) = a.a {
            if let BoundReport::Kest {
                bound,
                ci_low,
                holds,
            } = bound_comparison(&scene, &est, BoundSource::Kest { a: a_param, radius })?
            {
                let _ = writeln!(out, "# kest_bound={bound} ci_low={ci_low} holds={holds}");
                status = check(holds);
            }
        }
    } else {
        let grid = if a.grid.is_empty() {
            vec![scene.horizon()]
        } else {
            a.grid.clone()
        };
        for est in survival_curve(&scene, &grid, &opts, a.run.replicas, a.run.seed)? {
            out += &est.csv_row();
            out.push('\n');
        }
    }
    emit(a.common.out.as_deref(), &out)?;
    Ok(status)
}

fn fit(a: FitArgs) -> Result<Status> {
    let scene = load_scene(&a.common.scene)?;
    let opts = a.run.options();
    eprintln!(
        "fit: {} replicas on {} horizons, seed {}",
        a.run.replicas,
        a.grid.len(),
        a.run.seed
    );
    let (curve, fit) = fit_exponent(&scene, &a.grid, &opts, a.run.replicas, a.run.seed)?;
    let mut out = String::from("T,lnlnT,ln_phat,weight\n");
    for p in &fit.points {
        let _ = writeln!(out, "{},{},{},{}", p.horizon, p.ln_ln_t, p.ln_p, p.weight);
    }
    let _ = writeln!(
        out,
        "# slope={} stderr={} nu_hat={}",
        fit.slope(),
        fit.stderr,
        fit.nu_hat
    );
    if let Some(p) = a.p {
        for est in &curve {
            if let BoundReport::Theorem {
                c0_threshold,
                c0_threshold_upper,
                ..
            } = bound_comparison(&scene, est, BoundSource::Theorem { p })?
            {
                let _ = writeln!(
                    out,
                    "# T={} c0_min_at_p_hat={} c0_min_at_ci_high={}",
                    est.horizon,
                    opt(c0_threshold),
                    opt(c0_threshold_upper)
                );
            }
        }
    }
    emit(a.common.out.as_deref(), &out)?;
    Ok(Status::Ok)
}

fn spectrum(a: SpectrumArgs) -> Result<Status> {
    let q = build_qn(a.n)?;
    let numeric = q.eigenvalues();
    let closed = spectrum_closed_form(a.n);
    let mut out = String::from("k,closed_form,numeric,abs_err\n");
    let mut worst = 0.0f64;
    for (k, (c, v)) in closed.iter().zip(&numeric).enumerate() {
        let err = (c - v).abs();
        worst = worst.max(err);
        let _ = writeln!(out, "{k},{c},{v},{err}");
    }
    emit(a.out.as_deref(), &out)?;
    Ok(check(worst < 1e-10))
}

fn certify(a: CertifyArgs) -> Result<Status> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    if a.n < 2 || !(a.radius > 0.0) || !(a.min_delta >= 0.0) {
        return Err(Error::InvalidArgument(
            "certify needs n >= 2, radius > 0, min-delta >= 0".into(),
        ));
    }
    let samples = sample_configurations(&mut rng, a.n, a.samples, a.min_delta, a.radius);
    let opts = CertifyOptions {
        step: a.step,
        ..Default::default()
    };
    let report = match a.mode {
        Field::G => certify_subharmonic(&BarrierSpec::standard(a.n), &samples, &opts)?,
        Field::H => certify_field(eval_h, &samples, &opts)?,
    };
    let mut out = String::from("sample_id,g_value,fd_laplacian,violation_flag\n");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.sample_id, c.value, c.laplacian, c.violation
        );
    }
    emit(a.out.as_deref(), &out)?;
    let violations = report.violation_count();
    eprintln!(
        "certify: {violations} violations in {} samples",
        report.checks.len()
    );
    Ok(match a.mode {
        Field::G => check(violations == 0),
        // for h the point is to exhibit a witness
        Field::H => check(violations > 0),
    })
}

fn group(a: GroupArgs) -> Result<Status> {
    let scene = load_scene(&a.common.scene)?;
    let s = scene.obstacles();
    let sigma_prime = a.sigma_prime.unwrap_or(a.sigma);
    if !(a.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {}",
            a.sigma
        )));
    }
    let grouped = group_fixpoint(s, a.sigma);
    let mut out = String::from("a,b,c,d\n");
    for r in grouped.rects() {
        let _ = writeln!(out, "{},{},{},{}", r.a, r.b, r.c, r.d);
    }
    let perim = perimeter_inequality_check(s, a.sigma);
    let shadows = shadow_preservation_check(s, a.sigma, sigma_prime)?;
    let composition = composition_check(s, a.sigma, sigma_prime)?;
    let _ = writeln!(
        out,
        "# perimeter_inequality={} grouped={} original={} allowance={}",
        perim.holds, perim.grouped_perimeter, perim.original_perimeter, perim.allowance
    );
    let _ = writeln!(out, "# shadow_preservation={shadows}");
    let _ = writeln!(out, "# composition={composition}");
    if s.len() >= 2 {
        let _ = writeln!(out, "# mesoscopic_scale={}", mesoscopic_scale(s)?);
    }
    emit(a.common.out.as_deref(), &out)?;
    Ok(check(perim.holds && shadows && composition))
}

fn bound(a: BoundArgs) -> Result<Status> {
    let flavor = match a.flavor {
        FlavorArg::Lattice => Flavor::Lattice,
        FlavorArg::Continuous => Flavor::Continuous,
    };
    let params = BoundParams::new(a.n, a.p, a.c0, flavor)?;
    let b = theorem_nu_t0(&params);
    let mut header = String::from("n,p,c0,flavor,nu,ln_T0,T0,log_bound_at_T0");
    let mut row = format!(
        "{},{},{},{},{},{},{},{}",
        a.n,
        a.p,
        a.c0,
        flavor,
        b.nu,
        b.ln_t0,
        b.t0(),
        b.log_bound_at_t0()
    );
    if let (Some(d), Some(av)) = (a.dim, a.a) {
        header += ",dim,a,higher_dim_bound";
        let _ = write!(row, ",{d},{av},{}", higher_dim_bound(av, d, a.n)?);
    }
    if let Some(theta) = a.theta {
        header += ",theta,corridor_shape";
        let _ = write!(
            row,
            ",{theta},{}",
            corridor_exponent_form(a.n, a.p, theta)?.shape
        );
    }
    emit(a.out.as_deref(), &format!("{header}\n{row}\n"))?;
    Ok(Status::Ok)
}

fn oracle(a: OracleArgs) -> Result<Status> {
    let scene = load_scene(&a.common.scene)?;
    let opts = OracleOptions {
        radius: a.radius,
        tolerance: a.tolerance,
        max_leak: a.max_leak,
        ..Default::default()
    };
    let r = ctmc_oracle(&scene, &opts)?;
    let out = format!(
        "T,value,leak,tail,upper,states,steps\n{},{},{},{},{},{},{}\n",
        scene.horizon(),
        r.value,
        r.leak,
        r.tail,
        r.upper(),
        r.states,
        r.steps
    );
    emit(a.common.out.as_deref(), &out)?;
    Ok(Status::Ok)
}
