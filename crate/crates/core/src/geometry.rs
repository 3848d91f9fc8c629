//! Planar and lattice geometry: distances, dilations, circumscribed rectangles
//! and shadows of axis-aligned rectangles, plus the configuration-level
//! distance measures `w_S` and `delta`.
//!
//! Lattice spacing and particle diameter are both 1.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn is_integral(&self) -> bool {
        self.x.fract() == 0.0 && self.y.fract() == 0.0
    }

    pub fn norm2(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;

    fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Which `p`-norm a distance is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

pub fn dist_p(z: Point, z2: Point, p: Norm) -> f64 {
    let dx = (z.x - z2.x).abs();
    let dy = (z.y - z2.y).abs();
    match p {
        Norm::L1 => dx + dy,
        Norm::L2 => dx.hypot(dy),
        Norm::LInf => dx.max(dy),
    }
}

/// Closed axis-aligned rectangle `[a,b] x [c,d]`. Degenerate sides are allowed,
/// so a point is `[x,x] x [y,y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Rect {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite rectangle [{a},{b}]x[{c},{d}]"
            )));
        }
        if a > b || c > d {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{a},{b}]x[{c},{d}] needs a <= b and c <= d"
            )));
        }
        Ok(Rect { a, b, c, d })
    }

    pub fn from_point(p: Point) -> Self {
        Rect {
            a: p.x,
            b: p.x,
            c: p.y,
            d: p.y,
        }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn height(&self) -> f64 {
        self.d - self.c
    }

    /// Euclidean perimeter `2(b-a) + 2(d-c)`.
    pub fn perimeter(&self) -> f64 {
        2.0 * self.width() + 2.0 * self.height()
    }

    /// `[A]_r`: union of closed `d_inf` balls of radius `r` centred in the rectangle.
    pub fn dilate(&self, r: f64) -> Rect {
        debug_assert!(r >= 0.0);
        Rect {
            a: self.a - r,
            b: self.b + r,
            c: self.c - r,
            d: self.d + r,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.a <= p.x && p.x <= self.b && self.c <= p.y && p.y <= self.d
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.a <= other.a && other.b <= self.b && self.c <= other.c && other.d <= self.d
    }

    pub fn has_integral_corners(&self) -> bool {
        [self.a, self.b, self.c, self.d]
            .iter()
            .all(|v| v.fract() == 0.0)
    }

    /// Bounding indices of the lattice sites `R ∩ Z²`, or `None` if there are none.
    pub fn lattice_sites(&self) -> Option<LatticeBox> {
        let x0 = self.a.ceil();
        let x1 = self.b.floor();
        let y0 = self.c.ceil();
        let y1 = self.d.floor();
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some(LatticeBox {
            x0: x0 as i64,
            x1: x1 as i64,
            y0: y0 as i64,
            y1: y1 as i64,
        })
    }

    /// Per-axis gap from a point (zero inside the projection).
    fn gaps_to_point(&self, p: Point) -> (f64, f64) {
        let gx = (self.a - p.x).max(p.x - self.b).max(0.0);
        let gy = (self.c - p.y).max(p.y - self.d).max(0.0);
        (gx, gy)
    }

    fn gaps_to_rect(&self, o: &Rect) -> (f64, f64) {
        let gx = (o.a - self.b).max(self.a - o.b).max(0.0);
        let gy = (o.c - self.d).max(self.c - o.d).max(0.0);
        (gx, gy)
    }

    /// Euclidean distance from a point to the closed rectangle.
    pub fn dist2_to_point(&self, p: Point) -> f64 {
        let (gx, gy) = self.gaps_to_point(p);
        gx.hypot(gy)
    }

    pub fn total_cmp(&self, other: &Rect) -> Ordering {
        self.a
            .total_cmp(&other.a)
            .then(self.b.total_cmp(&other.b))
            .then(self.c.total_cmp(&other.c))
            .then(self.d.total_cmp(&other.d))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.a, self.b, self.c, self.d)
    }
}

/// Integer site block `[x0,x1] x [y0,y1]` of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeBox {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl LatticeBox {
    /// `d_1` distance from a site to the block.
    pub fn dist1(&self, x: i64, y: i64) -> i64 {
        let gx = (self.x0 - x).max(x - self.x1).max(0);
        let gy = (self.y0 - y).max(y - self.y1).max(0);
        gx + gy
    }

    /// `d_inf` distance from a site to the block.
    pub fn dist_inf(&self, x: i64, y: i64) -> i64 {
        let gx = (self.x0 - x).max(x - self.x1).max(0);
        let gy = (self.y0 - y).max(y - self.y1).max(0);
        gx.max(gy)
    }

    pub fn dist_inf_box(&self, o: &LatticeBox) -> i64 {
        let gx = (o.x0 - self.x1).max(self.x0 - o.x1).max(0);
        let gy = (o.y0 - self.y1).max(self.y0 - o.y1).max(0);
        gx.max(gy)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }
}

/// Closed convex sets for which `d_inf` set distances are supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexSet {
    Rect(Rect),
    /// Closed `d_2` ball.
    Ball {
        center: Point,
        radius: f64,
    },
    /// Closed `d_inf` ball, i.e. an axis-aligned square.
    Box {
        center: Point,
        half_side: f64,
    },
}

impl ConvexSet {
    /// The particle `ẑ`: closed Euclidean ball of diameter 1.
    pub fn particle(z: Point) -> Self {
        ConvexSet::Ball {
            center: z,
            radius: 0.5,
        }
    }

    /// The lattice particle `[z]`: unit square centred at `z`.
    pub fn lattice_particle(z: Point) -> Self {
        ConvexSet::Box {
            center: z,
            half_side: 0.5,
        }
    }
}

/// Smallest `t >= 0` with `max(gx - vx, gy - vy) <= t` over `|v|_2 <= r`:
/// the `d_inf` gap between a Euclidean ball of radius `r` and a set whose
/// per-axis gaps from the ball centre are `(gx, gy)`.
fn ball_gap_inf(gx: f64, gy: f64, r: f64) -> f64 {
    let (hi, lo) = if gx >= gy { (gx, gy) } else { (gy, gx) };
    if hi == 0.0 {
        return 0.0;
    }
    // Spend the whole radius on the larger gap.
    let t = hi - r;
    if t >= lo {
        return t.max(0.0);
    }
    // Otherwise equalise both gaps: (hi - t)^2 + (lo - t)^2 = r^2, t <= lo.
    let s = hi + lo;
    let disc = 2.0 * r * r - (hi - lo) * (hi - lo);
    let t = 0.5 * (s - disc.max(0.0).sqrt());
    t.max(0.0)
}

pub fn set_dist_inf(a: &ConvexSet, b: &ConvexSet) -> f64 {
    use ConvexSet::*;
    let as_rect = |s: &ConvexSet| match *s {
        Rect(r) => Some(r),
        Box { center, half_side } => Some(self::Rect::from_point(center).dilate(half_side)),
        Ball { .. } => None,
    };
    match (as_rect(a), as_rect(b)) {
        (Some(r1), Some(r2)) => {
            let (gx, gy) = r1.gaps_to_rect(&r2);
            gx.max(gy)
        }
        (Some(r), None) | (None, Some(r)) => {
            let (center, radius) = match (a, b) {
                (Ball { center, radius }, _) | (_, Ball { center, radius }) => (*center, *radius),
                _ => unreachable!(),
            };
            let (gx, gy) = r.gaps_to_point(center);
            ball_gap_inf(gx, gy, radius)
        }
        (None, None) => {
            let (
                Ball {
                    center: c1,
                    radius: r1,
                },
                Ball {
                    center: c2,
                    radius: r2,
                },
            ) = (a, b)
            else {
                unreachable!()
            };
            // Minkowski: ball(c1, r1 + r2) against the point c2.
            let gx = (c1.x - c2.x).abs();
            let gy = (c1.y - c2.y).abs();
            ball_gap_inf(gx, gy, r1 + r2)
        }
    }
}

/// External lattice border of a rectangle with integral corners: the sites
/// outside it at `d_1` distance 1 from one of its sites.
pub fn lattice_border(r: &Rect) -> Result<Vec<(i64, i64)>> {
    if !r.has_integral_corners() {
        return Err(Error::NonIntegralRect(r.to_string()));
    }
    let lb = r
        .lattice_sites()
        .expect("integral corners with a <= b, c <= d");
    let mut out = Vec::with_capacity(lattice_border_len(r)?);
    for x in lb.x0..=lb.x1 {
        out.push((x, lb.y0 - 1));
        out.push((x, lb.y1 + 1));
    }
    for y in lb.y0..=lb.y1 {
        out.push((lb.x0 - 1, y));
        out.push((lb.x1 + 1, y));
    }
    Ok(out)
}

/// `|∂R|` for a lattice rectangle: `2(b-a) + 2(d-c) + 4`.
pub fn lattice_border_len(r: &Rect) -> Result<usize> {
    if !r.has_integral_corners() {
        return Err(Error::NonIntegralRect(r.to_string()));
    }
    Ok((2.0 * r.width() + 2.0 * r.height() + 4.0) as usize)
}

pub fn box_dilate_point(z: Point, r: f64) -> Rect {
    Rect::from_point(z).dilate(r)
}

/// `RC(A)`: the smallest rectangle containing every input rectangle.
pub fn circumscribed(rects: &[Rect]) -> Result<Rect> {
    let first = rects
        .first()
        .ok_or(Error::Empty("circumscribed rectangle of no rectangles"))?;
    Ok(rects.iter().skip(1).fold(*first, |acc, r| Rect {
        a: acc.a.min(r.a),
        b: acc.b.max(r.b),
        c: acc.c.min(r.c),
        d: acc.d.max(r.d),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Projection onto the x axis (`h-sh`).
    Horizontal,
    /// Projection onto the y axis (`v-sh`).
    Vertical,
}

/// A shadow, stored as its projection: sorted, pairwise disjoint closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Shadow {
    pub axis: Axis,
    pub intervals: Vec<(f64, f64)>,
}

impl Shadow {
    pub fn from_intervals(axis: Axis, mut iv: Vec<(f64, f64)>) -> Self {
        iv.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (lo, hi) in iv {
            match merged.last_mut() {
                // Closed intervals touching at an endpoint share that point.
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Shadow {
            axis,
            intervals: merged,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

pub fn shadow(rects: &[Rect], axis: Axis) -> Shadow {
    let iv = rects
        .iter()
        .map(|r| match axis {
            Axis::Horizontal => (r.a, r.b),
            Axis::Vertical => (r.c, r.d),
        })
        .collect();
    Shadow::from_intervals(axis, iv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Lattice,
    Continuous,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Lattice => "lattice",
            Flavor::Continuous => "continuous",
        })
    }
}

/// Ordered n-tuple of particle centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: Vec<Point>,
    flavor: Flavor,
}

impl Configuration {
    pub fn new(points: Vec<Point>, flavor: Flavor) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a configuration needs at least 2 particles, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "particle {i} has non-finite coordinates"
            )));
        }
        if flavor == Flavor::Lattice {
            if let Some(i) = points.iter().position(|p| !p.is_integral()) {
                return Err(Error::InvalidArgument(format!(
                    "lattice particle {i} at {} is not a lattice site",
                    points[i]
                )));
            }
        }
        Ok(Configuration { points, flavor })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.points)
    }
}

pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unflatten(coords: &[f64]) -> Vec<Point> {
    coords
        .chunks_exact(2)
        .map(|c| Point::new(c[0], c[1]))
        .collect()
}

/// `w_S` (continuous flavor, balls `ẑ`) or its lattice analogue (boxes `[z]`).
pub fn w_s(config: &Configuration, obstacles: &[Rect]) -> f64 {
    w_s_points(&config.points, config.flavor, obstacles)
}

pub fn w_s_points(pts: &[Point], flavor: Flavor, obstacles: &[Rect]) -> f64 {
    let particle = |z: Point| match flavor {
        Flavor::Continuous => ConvexSet::particle(z),
        Flavor::Lattice => ConvexSet::lattice_particle(z),
    };
    let mut w = f64::INFINITY;
    for i in 0..pts.len() {
        let zi = particle(pts[i]);
        for zj in &pts[i + 1..] {
            w = w.min(set_dist_inf(&zi, &particle(*zj)));
        }
        for r in obstacles {
            w = w.min(set_dist_inf(&zi, &ConvexSet::Rect(*r)));
        }
    }
    w
}

/// `delta`: minimum centre distance between particles and from each particle to `O`.
pub fn delta(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, zi) in points.iter().enumerate() {
        best = best.min(zi.norm2());
        for zj in &points[i + 1..] {
            best = best.min(dist_p(*zi, *zj, Norm::L2));
        }
    }
    best
}
