//! Trajectories and stopping times for both model flavors.
//!
//! Lattice flavor: `n` independent rate-1 continuous-time simple random walks
//! on `Z²`, simulated exactly from a global rate-`n` clock. A collision is a
//! particle becoming nearest neighbour of another particle or of the lattice
//! sites of an obstacle.
//!
//! Continuous flavor: `n` independent planar Brownian motions of unit-diameter
//! particles, time-stepped with Gaussian increments. Collision is inter-particle
//! centre distance 1, twice the centre-to-rectangle distance equal to 1, or
//! centre distance 1 to a fixed particle.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp1, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{
    delta, dist_p, set_dist_inf, w_s_points, Axis, Configuration, ConvexSet, Flavor, LatticeBox,
    Norm, Point, Rect,
};
use crate::grouping::ObstacleSet;

/// Simulation input: obstacles, fixed particles, initial configuration and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    obstacles: ObstacleSet,
    /// Fixed unit-diameter particles (continuous flavor only).
    fixed: Vec<Point>,
    init: Configuration,
    horizon: f64,
}

impl Scene {
    /// Builds a scene and checks the hypotheses of its flavor.
    pub fn new(
        init: Configuration,
        obstacles: ObstacleSet,
        fixed: Vec<Point>,
        horizon: f64,
    ) -> Result<Self> {
        let scene = Scene::unchecked(init, obstacles, fixed, horizon)?;
        let violations = scene.hypothesis_violations();
        if violations.is_empty() {
            Ok(scene)
        } else {
            Err(Error::Hypothesis(violations))
        }
    }

    /// Builds a scene without the distance hypotheses (structural checks only).
    pub fn unchecked(
        init: Configuration,
        obstacles: ObstacleSet,
        fixed: Vec<Point>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be >= 0, got {horizon}"
            )));
        }
        if init.flavor() == Flavor::Lattice && !fixed.is_empty() {
            return Err(Error::InvalidArgument(
                "fixed particles are only supported in the continuous flavor".into(),
            ));
        }
        Ok(Scene {
            obstacles,
            fixed,
            init,
            horizon,
        })
    }

    pub fn obstacles(&self) -> &ObstacleSet {
        &self.obstacles
    }

    pub fn fixed(&self) -> &[Point] {
        &self.fixed
    }

    pub fn init(&self) -> &Configuration {
        &self.init
    }

    pub fn flavor(&self) -> Flavor {
        self.init.flavor()
    }

    pub fn n(&self) -> usize {
        self.init.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Scene> {
        Scene::unchecked(
            self.init.clone(),
            self.obstacles.clone(),
            self.fixed.clone(),
            horizon,
        )
    }

    /// Smallest perimeter budget `p >= 2` with `|S| <= p/4` and total perimeter `<= p`.
    pub fn perimeter_budget(&self) -> f64 {
        let perim = match self.flavor() {
            Flavor::Continuous => self.obstacles.total_perimeter(),
            Flavor::Lattice => self
                .obstacles
                .rects()
                .iter()
                .map(|r| {
                    crate::geometry::lattice_border_len(r)
                        .map(|v| v as f64)
                        .unwrap_or(r.perimeter() + 4.0)
                })
                .sum(),
        };
        perim.max(4.0 * self.obstacles.len() as f64).max(2.0)
    }

    /// Every violated hypothesis of the scene's flavor, quoting the failing inequality.
    pub fn hypothesis_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let pts = self.init.points();
        let rects = self.obstacles.rects();
        match self.flavor() {
            Flavor::Lattice => {
                let boxes: Vec<Option<LatticeBox>> =
                    rects.iter().map(Rect::lattice_sites).collect();
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        let d = dist_p(pts[i], pts[j], Norm::L1);
                        if !(d > 1.0) {
                            out.push(format!(
                                "inf d_1(z_i,z_j) > 1 fails: d_1(z_{},z_{}) = {d}",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                    for (j, b) in boxes.iter().enumerate() {
                        if let Some(b) = b {
                            let d = b.dist_inf(pts[i].x as i64, pts[i].y as i64);
                            if d <= 3 {
                                out.push(format!(
                                    "inf d_inf(z_i,R_j) > 3 fails: d_inf(z_{},R_{}) = {d}",
                                    i + 1,
                                    j + 1
                                ));
                            }
                        }
                    }
                }
                for i in 0..boxes.len() {
                    for j in i + 1..boxes.len() {
                        if let (Some(a), Some(b)) = (&boxes[i], &boxes[j]) {
                            let d = a.dist_inf_box(b);
                            if d <= 3 {
                                out.push(format!(
                                    "inf d_inf(R_i,R_j) > 3 fails: d_inf(R_{},R_{}) = {d}",
                                    i + 1,
                                    j + 1
                                ));
                            }
                        }
                    }
                }
            }
            Flavor::Continuous => {
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        let d = dist_p(pts[i], pts[j], Norm::L2) - 1.0;
                        if !(d >= 1.0) {
                            out.push(format!(
                                "inf d_2(ẑ_i,ẑ_j) >= 1 fails: d_2(ẑ_{},ẑ_{}) = {d}",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                    for (j, r) in rects.iter().enumerate() {
                        let d = set_dist_inf(&ConvexSet::particle(pts[i]), &ConvexSet::Rect(*r));
                        if !(d >= 3.0) {
                            out.push(format!(
                                "inf d_inf(ẑ_i,R_j) >= 3 fails: d_inf(ẑ_{},R_{}) = {d}",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                    for (j, c) in self.fixed.iter().enumerate() {
                        let d = dist_p(pts[i], *c, Norm::L2);
                        if !(d >= 2.0) {
                            out.push(format!(
                                "delta(z) >= 2 fails: d_2(z_{}, fixed_{}) = {d}",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                }
                for i in 0..rects.len() {
                    for j in i + 1..rects.len() {
                        let d =
                            set_dist_inf(&ConvexSet::Rect(rects[i]), &ConvexSet::Rect(rects[j]));
                        if !(d >= 3.0) {
                            out.push(format!(
                                "inf d_inf(R_i,R_j) >= 3 fails: d_inf(R_{},R_{}) = {d}",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Mirror image of the whole scene through the y axis (`Horizontal`) or x axis (`Vertical`).
    pub fn reflected(&self, axis: Axis) -> Result<Scene> {
        let flip = |p: Point| match axis {
            Axis::Horizontal => Point::new(-p.x, p.y),
            Axis::Vertical => Point::new(p.x, -p.y),
        };
        let rects = self
            .obstacles
            .rects()
            .iter()
            .map(|r| match axis {
                Axis::Horizontal => Rect::new(-r.b, -r.a, r.c, r.d),
                Axis::Vertical => Rect::new(r.a, r.b, -r.d, -r.c),
            })
            .collect::<Result<Vec<_>>>()?;
        let init = Configuration::new(
            self.init.points().iter().map(|p| flip(*p)).collect(),
            self.flavor(),
        )?;
        Scene::unchecked(
            init,
            ObstacleSet::new(rects),
            self.fixed.iter().map(|p| flip(*p)).collect(),
            self.horizon,
        )
    }
}

/// A stopping condition tracked during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum StopCondition {
    DeltaAtLeast(f64),
    /// `w >= b`, with balls (continuous) or unit boxes (lattice).
    WAtLeast(f64),
    /// Maximal individual elongation `rho >= b`.
    RhoAtLeast(f64),
    /// Euclidean distance in `(R²)^n` from `center` at least `radius`.
    ExitBall {
        center: Vec<Point>,
        radius: f64,
    },
}

impl StopCondition {
    pub fn exit_ball_around(init: &Configuration, radius: f64) -> Self {
        StopCondition::ExitBall {
            center: init.points().to_vec(),
            radius,
        }
    }

    fn threshold(&self) -> f64 {
        match self {
            StopCondition::DeltaAtLeast(b)
            | StopCondition::WAtLeast(b)
            | StopCondition::RhoAtLeast(b) => *b,
            StopCondition::ExitBall { radius, .. } => *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopSpec {
    pub condition: StopCondition,
    /// End the run when this condition is first met.
    pub terminal: bool,
}

impl StopSpec {
    pub fn track(condition: StopCondition) -> Self {
        StopSpec {
            condition,
            terminal: false,
        }
    }

    pub fn terminal(condition: StopCondition) -> Self {
        StopSpec {
            condition,
            terminal: true,
        }
    }
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub collided: bool,
    pub collision_time: Option<f64>,
    /// First hit time of each registered stop condition, in registration order.
    pub exit_times: Vec<Option<f64>>,
    pub max_elongation: f64,
    /// Jumps (lattice) or time steps (continuous).
    pub event_count: u64,
    /// Time at which the run ended.
    pub end_time: f64,
    pub seed: u64,
    pub replica: u64,
}

impl RunRecord {
    /// No collision up to and including time `t`.
    pub fn survived_until(&self, t: f64) -> bool {
        match self.collision_time {
            Some(tc) => tc > t,
            None => true,
        }
    }

    /// No collision before the first hit of stop condition `k` (which must be hit).
    pub fn survived_until_stop(&self, k: usize) -> bool {
        match (self.exit_times[k], self.collision_time) {
            (Some(_), None) => true,
            (Some(te), Some(tc)) => tc > te,
            (None, _) => false,
        }
    }
}

struct StopTracker {
    specs: Vec<StopSpec>,
    hits: Vec<Option<f64>>,
}

impl StopTracker {
    fn new(specs: &[StopSpec], n: usize) -> Result<Self> {
        for s in specs {
            if let StopCondition::ExitBall { center, .. } = &s.condition {
                if center.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "exit ball centre has {} particles, scene has {n}",
                        center.len()
                    )));
                }
            }
        }
        Ok(StopTracker {
            specs: specs.to_vec(),
            hits: vec![None; specs.len()],
        })
    }

    fn level(
        cond: &StopCondition,
        pts: &[Point],
        flavor: Flavor,
        rects: &[Rect],
        disp: &[f64],
    ) -> f64 {
        match cond {
            StopCondition::DeltaAtLeast(_) => delta(pts),
            StopCondition::WAtLeast(_) => w_s_points(pts, flavor, rects),
            StopCondition::RhoAtLeast(_) => disp.iter().copied().fold(0.0, f64::max),
            StopCondition::ExitBall { center, .. } => pts
                .iter()
                .zip(center)
                .map(|(p, c)| {
                    let d = *p - *c;
                    d.x * d.x + d.y * d.y
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Records hits at time `t`; returns true if a terminal condition fired.
    /// `running_rho` is the running maximum of displacements.
    fn update(
        &mut self,
        t: f64,
        pts: &[Point],
        flavor: Flavor,
        rects: &[Rect],
        running_rho: f64,
    ) -> bool {
        let mut stop = false;
        for (k, spec) in self.specs.iter().enumerate() {
            if self.hits[k].is_some() {
                continue;
            }
            let level = match spec.condition {
                StopCondition::RhoAtLeast(_) => running_rho,
                _ => Self::level(&spec.condition, pts, flavor, rects, &[]),
            };
            if level >= spec.condition.threshold() {
                self.hits[k] = Some(t);
                stop |= spec.terminal;
            }
        }
        stop
    }

    /// Number of further lattice jumps that cannot trigger any pending
    /// condition: every tracked level is 1-Lipschitz per jump.
    fn safe_jumps(&self, pts: &[Point], flavor: Flavor, rects: &[Rect], disp: &[f64]) -> u64 {
        let mut k = u64::MAX;
        for (spec, hit) in self.specs.iter().zip(&self.hits) {
            if hit.is_some() {
                continue;
            }
            let gap =
                spec.condition.threshold() - Self::level(&spec.condition, pts, flavor, rects, disp);
            let allowed = if gap <= 0.0 {
                0
            } else {
                (gap.ceil() as u64).saturating_sub(1)
            };
            k = k.min(allowed);
        }
        k
    }

    fn any_terminal(&self) -> bool {
        self.specs.iter().any(|s| s.terminal)
    }
}

/// How lattice trajectories are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeMode {
    /// One jump at a time from the global exponential clock.
    Event,
    /// Batches of jumps that provably cannot produce a collision or a stopping
    /// event are sampled in one go (jump counts, displacements and the time of
    /// the last jump), which is exact in law for collision and stopping times.
    Leap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeOptions {
    pub mode: LatticeMode,
    pub max_events: u64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            mode: LatticeMode::Leap,
            max_events: u64::MAX,
        }
    }
}

/// Called with `(time, particle index, new position)` after every move.
pub type Observer<'a> = &'a mut dyn FnMut(f64, usize, Point);

const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

struct LatticeState {
    pos: Vec<(i64, i64)>,
    start: Vec<(i64, i64)>,
    disp: Vec<f64>,
    rho: f64,
    boxes: Vec<LatticeBox>,
}

impl LatticeState {
    fn points(&self) -> Vec<Point> {
        self.pos
            .iter()
            .map(|&(x, y)| Point::new(x as f64, y as f64))
            .collect()
    }

    fn refresh_disp(&mut self, i: usize) {
        let dx = (self.pos[i].0 - self.start[i].0) as f64;
        let dy = (self.pos[i].1 - self.start[i].1) as f64;
        self.disp[i] = (dx * dx + dy * dy).sqrt();
        self.rho = self.rho.max(self.disp[i]);
    }

    /// Smallest `d_1 - 1` over particle pairs and particle-obstacle pairs.
    fn min_margin(&self) -> i64 {
        let mut m = i64::MAX;
        for (i, &(x, y)) in self.pos.iter().enumerate() {
            for &(u, v) in &self.pos[i + 1..] {
                m = m.min((x - u).abs() + (y - v).abs() - 1);
            }
            for b in &self.boxes {
                m = m.min(b.dist1(x, y) - 1);
            }
        }
        m
    }

    /// Collision predicate restricted to the particle that just moved.
    fn collides(&self, i: usize) -> bool {
        let (x, y) = self.pos[i];
        self.pos
            .iter()
            .enumerate()
            .any(|(j, &(u, v))| j != i && (x - u).abs() + (y - v).abs() <= 1)
            || self.boxes.iter().any(|b| b.dist1(x, y) <= 1)
    }

    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let n = self.pos.len();
        let u = rng.random_range(0..4 * n);
        let (i, (dx, dy)) = (u / 4, DIRS[u % 4]);
        self.pos[i].0 += dx;
        self.pos[i].1 += dy;
        self.refresh_disp(i);
        i
    }

    /// Applies `k` jumps at once: multinomial jump counts per particle, then
    /// per-axis step counts and signed displacements.
    fn bulk_jumps<R: Rng + ?Sized>(&mut self, rng: &mut R, k: u64) {
        let n = self.pos.len();
        let mut remaining = k;
        for i in 0..n {
            let ki = if i + 1 == n {
                remaining
            } else {
                binomial(rng, remaining, 1.0 / (n - i) as f64)
            };
            remaining -= ki;
            if ki == 0 {
                continue;
            }
            let horiz = binomial(rng, ki, 0.5);
            let vert = ki - horiz;
            let dx = 2 * binomial(rng, horiz, 0.5) as i64 - horiz as i64;
            let dy = 2 * binomial(rng, vert, 0.5) as i64 - vert as i64;
            self.pos[i].0 += dx;
            self.pos[i].1 += dy;
            self.refresh_disp(i);
        }
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p)
        .expect("valid binomial parameters")
        .sample(rng)
}

enum Clock {
    /// `remaining` events are uniformly scattered on `(now, end]`.
    Finite {
        remaining: u64,
        end: f64,
    },
    Infinite,
}

pub fn run_lattice<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    opts: &LatticeOptions,
    rng: &mut R,
) -> Result<RunRecord> {
    run_lattice_inner(scene, stops, opts, rng, None)
}

/// Event-by-event run reporting every move to `observer`.
pub fn run_lattice_observed<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    opts: &LatticeOptions,
    rng: &mut R,
    observer: Observer<'_>,
) -> Result<RunRecord> {
    let opts = LatticeOptions {
        mode: LatticeMode::Event,
        ..*opts
    };
    run_lattice_inner(scene, stops, &opts, rng, Some(observer))
}

fn run_lattice_inner<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    opts: &LatticeOptions,
    rng: &mut R,
    mut observer: Option<Observer<'_>>,
) -> Result<RunRecord> {
    if scene.flavor() != Flavor::Lattice {
        return Err(Error::InvalidArgument(
            "run_lattice needs a lattice scene".into(),
        ));
    }
    let horizon = scene.horizon();
    let n = scene.n();
    let mut tracker = StopTracker::new(stops, n)?;
    if horizon.is_infinite() && !tracker.any_terminal() && opts.max_events == u64::MAX {
        return Err(Error::InvalidArgument(
            "infinite horizon needs a terminal stop condition or an event budget".into(),
        ));
    }
    let pos: Vec<(i64, i64)> = scene
        .init()
        .points()
        .iter()
        .map(|p| (p.x as i64, p.y as i64))
        .collect();
    let rects = scene.obstacles().rects();
    let mut st = LatticeState {
        start: pos.clone(),
        pos,
        disp: vec![0.0; n],
        rho: 0.0,
        boxes: rects.iter().filter_map(Rect::lattice_sites).collect(),
    };
    let flavor = Flavor::Lattice;
    let mut t = 0.0;
    let mut events = 0u64;
    let mut collision_time = None;
    let mut stopped = tracker.update(0.0, &st.points(), flavor, rects, 0.0);

    let rate = n as f64;
    let mut clock = if horizon.is_finite() && opts.mode == LatticeMode::Leap {
        let mean = rate * horizon;
        let remaining = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as u64
        } else {
            0
        };
        Clock::Finite {
            remaining,
            end: horizon,
        }
    } else {
        Clock::Infinite
    };

    while !stopped {
        if events >= opts.max_events {
            return Err(Error::Budget(format!(
                "lattice run exceeded {} events",
                opts.max_events
            )));
        }
        let leap = if opts.mode == LatticeMode::Leap {
            let margin = st.min_margin();
            let coll_safe = (margin - 1).max(0) as u64;
            let stop_safe = tracker.safe_jumps(&st.points(), flavor, rects, &st.disp);
            coll_safe.min(stop_safe).min(opts.max_events - events)
        } else {
            0
        };

        if leap >= 2 {
            match &mut clock {
                Clock::Finite { remaining, end } => {
                    if *remaining == 0 {
                        t = *end;
                        break;
                    }
                    let k = leap.min(*remaining);
                    st.bulk_jumps(rng, k);
                    events += k;
                    if k == *remaining {
                        *remaining = 0;
                        t = *end;
                        break;
                    }
                    let frac: f64 = Beta::new(k as f64, (*remaining - k + 1) as f64)
                        .expect("positive beta parameters")
                        .sample(rng);
                    t += (*end - t) * frac;
                    *remaining -= k;
                }
                Clock::Infinite => {
                    let dt: f64 = Gamma::new(leap as f64, 1.0 / rate)
                        .expect("positive gamma parameters")
                        .sample(rng);
                    if t + dt > horizon {
                        // Only reachable with an event budget and no finite-horizon clock.
                        t = horizon;
                        break;
                    }
                    t += dt;
                    st.bulk_jumps(rng, leap);
                    events += leap;
                }
            }
        } else {
            match &mut clock {
                Clock::Finite { remaining, end } => {
                    if *remaining == 0 {
                        t = *end;
                        break;
                    }
                    let u: f64 = rng.random();
                    t += (*end - t) * (1.0 - u.powf(1.0 / *remaining as f64));
                    *remaining -= 1;
                }
                Clock::Infinite => {
                    let e: f64 = Exp1.sample(rng);
                    let dt = e / rate;
                    if t + dt > horizon {
                        t = horizon;
                        break;
                    }
                    t += dt;
                }
            }
            let i = st.jump(rng);
            events += 1;
            if let Some(obs) = observer.as_mut() {
                let (x, y) = st.pos[i];
                obs(t, i, Point::new(x as f64, y as f64));
            }
            if st.collides(i) {
                collision_time = Some(t);
                break;
            }
        }
        stopped = tracker.update(t, &st.points(), flavor, rects, st.rho);
    }

    Ok(RunRecord {
        collided: collision_time.is_some(),
        collision_time,
        exit_times: tracker.hits,
        max_elongation: st.rho,
        event_count: events,
        end_time: t,
        seed: 0,
        replica: 0,
    })
}

/// Time-step control for the continuous flavor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    /// Refinement starts when some collision margin drops below this.
    pub margin_guard: f64,
    pub dt_min: f64,
    /// Scale on the Brownian increments (0 freezes the particles).
    pub diffusion: f64,
    /// Brownian-bridge crossing correction between steps.
    pub bridge: bool,
    pub max_steps: u64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt: 1e-2,
            margin_guard: 0.25,
            dt_min: 1e-6,
            diffusion: 1.0,
            bridge: true,
            max_steps: u64::MAX,
        }
    }
}

impl StepControl {
    pub fn with_dt(dt: f64) -> Self {
        StepControl {
            dt,
            ..Default::default()
        }
    }
}

/// Signed distance to the collision threshold of one constraint and the
/// variance rate of that distance process.
#[derive(Debug, Clone, Copy)]
struct Margin {
    value: f64,
    var: f64,
}

fn continuous_margins(pts: &[Point], rects: &[Rect], fixed: &[Point], out: &mut Vec<Margin>) {
    out.clear();
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let (dx, dy) = (p.x - q.x, p.y - q.y);
            out.push(Margin {
                value: (dx * dx + dy * dy).sqrt() - 1.0,
                var: 2.0,
            });
        }
        for r in rects {
            // collision when 2 d_2(Z_i, R) = 1
            out.push(Margin {
                value: r.dist2_to_point(*p) - 0.5,
                var: 1.0,
            });
        }
        for c in fixed {
            let (dx, dy) = (p.x - c.x, p.y - c.y);
            out.push(Margin {
                value: (dx * dx + dy * dy).sqrt() - 1.0,
                var: 1.0,
            });
        }
    }
}

pub fn run_continuous<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    step: &StepControl,
    rng: &mut R,
) -> Result<RunRecord> {
    run_continuous_inner(scene, stops, step, rng, None)
}

pub fn run_continuous_observed<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    step: &StepControl,
    rng: &mut R,
    observer: Observer<'_>,
) -> Result<RunRecord> {
    run_continuous_inner(scene, stops, step, rng, Some(observer))
}

fn run_continuous_inner<R: Rng + ?Sized>(
    scene: &Scene,
    stops: &[StopSpec],
    step: &StepControl,
    rng: &mut R,
    mut observer: Option<Observer<'_>>,
) -> Result<RunRecord> {
    if scene.flavor() != Flavor::Continuous {
        return Err(Error::InvalidArgument(
            "run_continuous needs a continuous scene".into(),
        ));
    }
    if !(step.dt > 0.0) || !(step.dt_min > 0.0) || step.dt_min > step.dt || !(step.diffusion >= 0.0)
    {
        return Err(Error::InvalidArgument(format!(
            "invalid step control {step:?}"
        )));
    }
    let horizon = scene.horizon();
    let n = scene.n();
    let mut tracker = StopTracker::new(stops, n)?;
    if horizon.is_infinite() && !tracker.any_terminal() && step.max_steps == u64::MAX {
        return Err(Error::InvalidArgument(
            "infinite horizon needs a terminal stop condition or a step budget".into(),
        ));
    }
    let rects = scene.obstacles().rects();
    let fixed = scene.fixed();
    let start: Vec<Point> = scene.init().points().to_vec();
    let mut pts = start.clone();
    let mut rho = 0.0f64;
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut collision_time = None;
    let flavor = Flavor::Continuous;
    let diff2 = step.diffusion * step.diffusion;

    let mut m0 = Vec::new();
    let mut m1 = Vec::new();
    continuous_margins(&pts, rects, fixed, &mut m0);
    let mut stopped = tracker.update(0.0, &pts, flavor, rects, rho);

    while !stopped && t < horizon {
        if steps >= step.max_steps {
            return Err(Error::Budget(format!(
                "continuous run exceeded {} steps",
                step.max_steps
            )));
        }
        let mut h = step.dt;
        let min_raw = m0.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
        if min_raw < step.margin_guard && diff2 > 0.0 {
            let exposure = m0
                .iter()
                .map(|m| m.value / (m.var * diff2).sqrt())
                .fold(f64::INFINITY, f64::min);
            while h > step.dt_min && 3.0 * h.sqrt() > exposure {
                h /= 4.0;
            }
            h = h.max(step.dt_min);
        }
        h = h.min(horizon - t);
        let sd = h.sqrt() * step.diffusion;
        for (i, p) in pts.iter_mut().enumerate() {
            let gx: f64 = StandardNormal.sample(rng);
            let gy: f64 = StandardNormal.sample(rng);
            p.x += sd * gx;
            p.y += sd * gy;
            let d = *p - start[i];
            rho = rho.max((d.x * d.x + d.y * d.y).sqrt());
        }
        steps += 1;
        let t_new = t + h;
        if let Some(obs) = observer.as_mut() {
            for (i, p) in pts.iter().enumerate() {
                obs(t_new, i, *p);
            }
        }
        continuous_margins(&pts, rects, fixed, &mut m1);
        if m1.iter().any(|m| m.value <= 0.0) {
            collision_time = Some(t_new);
            t = t_new;
            break;
        }
        if step.bridge && diff2 > 0.0 {
            // A Brownian bridge from m0 to m1 > 0 dips below 0 with probability
            // exp(-2 m0 m1 / (var h)); constraints are treated as independent.
            let survive: f64 = m0
                .iter()
                .zip(&m1)
                .map(|(a, b)| -2.0 * a.value * b.value / (a.var * diff2 * h))
                .filter(|&e| e > -40.0)
                .map(|e| 1.0 - e.exp())
                .product();
            if survive < 1.0 {
                let u: f64 = rng.random();
                if u >= survive {
                    collision_time = Some(t_new);
                    t = t_new;
                    break;
                }
            }
        }
        t = t_new;
        std::mem::swap(&mut m0, &mut m1);
        stopped = tracker.update(t, &pts, flavor, rects, rho);
    }

    Ok(RunRecord {
        collided: collision_time.is_some(),
        collision_time,
        exit_times: tracker.hits,
        max_elongation: rho,
        event_count: steps,
        end_time: t,
        seed: 0,
        replica: 0,
    })
}

/// Runs either flavor with its default options.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub lattice: LatticeOptions,
    pub step: StepControl,
}

pub fn run_replica(
    scene: &Scene,
    stops: &[StopSpec],
    opts: &RunOptions,
    master_seed: u64,
    replica: u64,
) -> Result<RunRecord> {
    let mut rng = crate::rng::replica_stream(master_seed, replica);
    let mut rec = match scene.flavor() {
        Flavor::Lattice => run_lattice(scene, stops, &opts.lattice, &mut rng)?,
        Flavor::Continuous => run_continuous(scene, stops, &opts.step, &mut rng)?,
    };
    rec.seed = master_seed;
    rec.replica = replica;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;

    fn lattice_scene(pts: &[(f64, f64)], rects: Vec<Rect>, horizon: f64) -> Scene {
        let cfg = Configuration::new(
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            Flavor::Lattice,
        )
        .unwrap();
        Scene::new(cfg, ObstacleSet::new(rects), vec![], horizon).unwrap()
    }

    fn continuous_scene(pts: &[(f64, f64)], horizon: f64) -> Scene {
        let cfg = Configuration::new(
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            Flavor::Continuous,
        )
        .unwrap();
        Scene::new(cfg, ObstacleSet::empty(), vec![], horizon).unwrap()
    }

    #[test]
    fn hypotheses_are_checked() {
        let cfg = Configuration::new(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
            Flavor::Lattice,
        )
        .unwrap();
        let err = Scene::new(cfg, ObstacleSet::empty(), vec![], 1.0).unwrap_err();
        assert!(err.to_string().contains("d_1(z_i,z_j) > 1"));

        let cfg = Configuration::new(
            vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)],
            Flavor::Lattice,
        )
        .unwrap();
        let rects = vec![
            Rect::new(20.0, 21.0, 0.0, 1.0).unwrap(),
            Rect::new(23.0, 24.0, 0.0, 1.0).unwrap(),
        ];
        let err = Scene::new(cfg.clone(), ObstacleSet::new(rects), vec![], 1.0).unwrap_err();
        assert!(err.to_string().contains("inf d_inf(R_i,R_j) > 3"), "{err}");

        let rects = vec![Rect::new(12.0, 13.0, 0.0, 1.0).unwrap()];
        let err = Scene::new(cfg, ObstacleSet::new(rects), vec![], 1.0).unwrap_err();
        assert!(err.to_string().contains("d_inf(z_i,R_j) > 3"));

        let cfg = Configuration::new(
            vec![Point::new(0.0, 0.0), Point::new(1.5, 0.0)],
            Flavor::Continuous,
        )
        .unwrap();
        let err = Scene::new(cfg, ObstacleSet::empty(), vec![], 1.0).unwrap_err();
        assert!(err.to_string().contains("d_2(ẑ_i,ẑ_j) >= 1"));
    }

    #[test]
    fn zero_horizon_has_no_events() {
        let scene = lattice_scene(&[(0.0, 0.0), (2.0, 0.0)], vec![], 0.0);
        for mode in [LatticeMode::Event, LatticeMode::Leap] {
            let rec = run_lattice(
                &scene,
                &[],
                &LatticeOptions {
                    mode,
                    ..Default::default()
                },
                &mut replica_stream(1, 0),
            )
            .unwrap();
            assert!(!rec.collided);
            assert_eq!(rec.event_count, 0);
        }
    }

    #[test]
    fn stop_conditions_hit_at_time_zero() {
        let scene = lattice_scene(&[(0.0, 3.0), (4.0, 0.0)], vec![], 5.0);
        let stops = vec![
            StopSpec::track(StopCondition::RhoAtLeast(0.0)),
            StopSpec::track(StopCondition::DeltaAtLeast(delta(scene.init().points()))),
        ];
        let rec = run_lattice(
            &scene,
            &stops,
            &LatticeOptions::default(),
            &mut replica_stream(2, 0),
        )
        .unwrap();
        assert_eq!(rec.exit_times, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn unreachable_exit_ball_is_never_hit() {
        let scene = lattice_scene(&[(0.0, 0.0), (40.0, 0.0)], vec![], 2.0);
        let stops = vec![StopSpec::track(StopCondition::exit_ball_around(
            scene.init(),
            1e6,
        ))];
        let opts = LatticeOptions {
            mode: LatticeMode::Event,
            max_events: 1000,
        };
        let rec = run_lattice(&scene, &stops, &opts, &mut replica_stream(3, 0)).unwrap();
        assert_eq!(rec.exit_times, vec![None]);
        assert!(rec.max_elongation >= 0.0);
    }

    #[test]
    fn collision_time_is_within_horizon_and_final() {
        let scene = lattice_scene(&[(0.0, 0.0), (2.0, 0.0)], vec![], 50.0);
        for r in 0..200 {
            let rec = run_lattice(
                &scene,
                &[],
                &LatticeOptions::default(),
                &mut replica_stream(4, r),
            )
            .unwrap();
            if let Some(tc) = rec.collision_time {
                assert!(rec.collided && (0.0..=50.0).contains(&tc));
                assert_eq!(rec.end_time, tc);
            } else {
                assert_eq!(rec.end_time, 50.0);
            }
        }
    }

    #[test]
    fn trajectory_observer_sees_unit_moves() {
        let scene = lattice_scene(&[(0.0, 0.0), (6.0, 0.0)], vec![], 20.0);
        let mut last = scene.init().points().to_vec();
        let mut last_t = 0.0;
        let mut moves = 0;
        let rec = run_lattice_observed(
            &scene,
            &[],
            &LatticeOptions::default(),
            &mut replica_stream(5, 0),
            &mut |t, i, p| {
                assert!(t >= last_t);
                assert_eq!(dist_p(last[i], p, Norm::L1), 1.0);
                last[i] = p;
                last_t = t;
                moves += 1;
            },
        )
        .unwrap();
        assert_eq!(rec.event_count, moves);
    }

    #[test]
    fn lattice_runs_are_deterministic() {
        let scene = lattice_scene(&[(0.0, 0.0), (3.0, 1.0), (-2.0, 5.0)], vec![], 300.0);
        for mode in [LatticeMode::Event, LatticeMode::Leap] {
            let opts = LatticeOptions {
                mode,
                ..Default::default()
            };
            let a = run_lattice(&scene, &[], &opts, &mut replica_stream(6, 9)).unwrap();
            let b = run_lattice(&scene, &[], &opts, &mut replica_stream(6, 9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn frozen_particles_never_collide() {
        let scene = continuous_scene(&[(0.0, 0.0), (2.5, 0.0)], 5.0);
        let stops = vec![
            StopSpec::track(StopCondition::RhoAtLeast(0.1)),
            StopSpec::track(StopCondition::exit_ball_around(scene.init(), 0.1)),
        ];
        let step = StepControl {
            diffusion: 0.0,
            ..Default::default()
        };
        let rec = run_continuous(&scene, &stops, &step, &mut replica_stream(7, 0)).unwrap();
        assert!(!rec.collided);
        assert_eq!(rec.exit_times, vec![None, None]);
        assert_eq!(rec.max_elongation, 0.0);
        assert!((rec.end_time - 5.0).abs() < 1e-9);
    }

    #[test]
    fn continuous_exit_ball_terminates() {
        let cfg = Configuration::new(
            vec![Point::new(3.0, 0.0), Point::new(-3.0, 0.0)],
            Flavor::Continuous,
        )
        .unwrap();
        let scene = Scene::new(
            cfg,
            ObstacleSet::empty(),
            vec![Point::ORIGIN],
            f64::INFINITY,
        )
        .unwrap();
        let stops = vec![StopSpec::terminal(StopCondition::exit_ball_around(
            scene.init(),
            3.0,
        ))];
        for r in 0..20 {
            let rec = run_continuous(
                &scene,
                &stops,
                &StepControl::default(),
                &mut replica_stream(8, r),
            )
            .unwrap();
            assert!(rec.collided || rec.exit_times[0].is_some());
        }
    }

    #[test]
    fn unbounded_runs_are_rejected() {
        let scene = continuous_scene(&[(0.0, 0.0), (2.5, 0.0)], f64::INFINITY);
        assert!(run_continuous(
            &scene,
            &[],
            &StepControl::default(),
            &mut replica_stream(0, 0)
        )
        .is_err());
        let budget = StepControl {
            max_steps: 10,
            ..Default::default()
        };
        let stops = vec![StopSpec::terminal(StopCondition::RhoAtLeast(1e9))];
        assert!(matches!(
            run_continuous(&scene, &stops, &budget, &mut replica_stream(0, 0)),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn reflection_maps_scene_onto_mirror_image() {
        let scene = lattice_scene(
            &[(1.0, 2.0), (6.0, -3.0)],
            vec![Rect::new(10.0, 12.0, 5.0, 6.0).unwrap()],
            1.0,
        );
        let m = scene.reflected(Axis::Horizontal).unwrap();
        assert_eq!(m.init().points()[0], Point::new(-1.0, 2.0));
        assert_eq!(
            m.obstacles().rects()[0],
            Rect::new(-12.0, -10.0, 5.0, 6.0).unwrap()
        );
        assert_eq!(m.reflected(Axis::Horizontal).unwrap(), scene);
    }

    #[test]
    fn perimeter_budget_covers_obstacles() {
        let scene = lattice_scene(
            &[(0.0, 0.0), (2.0, 0.0)],
            vec![Rect::new(10.0, 12.0, 10.0, 11.0).unwrap()],
            1.0,
        );
        assert_eq!(scene.perimeter_budget(), 10.0);
        let empty = lattice_scene(&[(0.0, 0.0), (2.0, 0.0)], vec![], 1.0);
        assert_eq!(empty.perimeter_budget(), 2.0);
    }
}
