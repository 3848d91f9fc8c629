//! Obstacle grouping: merging rectangles that are chain-connected at `d_inf`
//! distance below a scale `sigma` into their circumscribed rectangles.

use crate::error::{Error, Result};
use crate::geometry::{circumscribed, set_dist_inf, shadow, Axis, ConvexSet, Rect};

/// A finite set of rectangles, kept sorted and free of duplicates so that two
/// sets compare equal exactly when they contain the same rectangles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObstacleSet {
    rects: Vec<Rect>,
}

impl ObstacleSet {
    pub fn new(mut rects: Vec<Rect>) -> Self {
        rects.sort_by(Rect::total_cmp);
        rects.dedup();
        ObstacleSet { rects }
    }

    pub fn empty() -> Self {
        ObstacleSet::default()
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn total_perimeter(&self) -> f64 {
        self.rects.iter().map(Rect::perimeter).sum()
    }

    /// Smallest pairwise `d_inf` distance, or `None` with fewer than two rectangles.
    pub fn min_pairwise_dist(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, r) in self.rects.iter().enumerate() {
            for s in &self.rects[i + 1..] {
                let d = rect_dist(r, s);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }
}

fn rect_dist(r: &Rect, s: &Rect) -> f64 {
    set_dist_inf(&ConvexSet::Rect(*r), &ConvexSet::Rect(*s))
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Equivalence classes (as index lists) of the chain relation `d_inf < sigma`.
/// `edge_order` permutes the order in which candidate edges are offered to the
/// union-find; the classes do not depend on it.
fn classes(rects: &[Rect], sigma: f64, edge_order: Option<&[(usize, usize)]>) -> Vec<Vec<usize>> {
    let n = rects.len();
    let mut ds = DisjointSets::new(n);
    let mut join = |i: usize, j: usize| {
        if rect_dist(&rects[i], &rects[j]) < sigma {
            ds.union(i, j);
        }
    };
    match edge_order {
        Some(edges) => edges.iter().for_each(|&(i, j)| join(i, j)),
        None => {
            for i in 0..n {
                for j in i + 1..n {
                    join(i, j);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = ds.find(i);
        groups[root].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

fn merge_classes(s: &ObstacleSet, groups: Vec<Vec<usize>>) -> ObstacleSet {
    let merged = groups
        .into_iter()
        .map(|g| {
            let members: Vec<Rect> = g.into_iter().map(|i| s.rects[i]).collect();
            circumscribed(&members).expect("classes are nonempty")
        })
        .collect();
    ObstacleSet::new(merged)
}

/// One pass of the grouping map: each class becomes its circumscribed rectangle.
pub fn group_once(s: &ObstacleSet, sigma: f64) -> ObstacleSet {
    merge_classes(s, classes(&s.rects, sigma, None))
}

/// Same as [`group_once`] but offering the pairwise edges in the given order.
pub fn group_once_with_edge_order(
    s: &ObstacleSet,
    sigma: f64,
    edges: &[(usize, usize)],
) -> ObstacleSet {
    merge_classes(s, classes(&s.rects, sigma, Some(edges)))
}

/// `g_sigma(S)`: iterate [`group_once`] until it is stationary.
pub fn group_fixpoint(s: &ObstacleSet, sigma: f64) -> ObstacleSet {
    let mut cur = s.clone();
    // Every non-trivial pass strictly reduces the count.
    for _ in 0..=s.len() {
        let next = group_once(&cur, sigma);
        if next == cur {
            return cur;
        }
        cur = next;
    }
    cur
}

/// Perimeter inequality between `S` and `g_sigma(S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerimeterCheck {
    pub grouped_perimeter: f64,
    pub original_perimeter: f64,
    pub allowance: f64,
    pub holds: bool,
}

pub fn perimeter_inequality_check(s: &ObstacleSet, sigma: f64) -> PerimeterCheck {
    let g = group_fixpoint(s, sigma);
    let grouped_perimeter = g.total_perimeter();
    let original_perimeter = s.total_perimeter();
    let allowance = 4.0 * sigma * (s.len() - g.len()) as f64;
    let rhs = original_perimeter + allowance;
    PerimeterCheck {
        grouped_perimeter,
        original_perimeter,
        allowance,
        holds: grouped_perimeter <= rhs + 1e-9 * rhs.abs().max(1.0),
    }
}

/// Horizontal and vertical shadows of `[g_sigma(S)]_{sigma'}` and `[S]_{sigma'}` agree.
pub fn shadow_preservation_check(s: &ObstacleSet, sigma: f64, sigma_prime: f64) -> Result<bool> {
    if sigma_prime < sigma || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need sigma' >= sigma >= 0, got sigma = {sigma}, sigma' = {sigma_prime}"
        )));
    }
    let g = group_fixpoint(s, sigma);
    let dilated = |set: &ObstacleSet| -> Vec<Rect> {
        set.rects.iter().map(|r| r.dilate(sigma_prime)).collect()
    };
    let (ds, dg) = (dilated(s), dilated(&g));
    Ok([Axis::Horizontal, Axis::Vertical]
        .into_iter()
        .all(|axis| shadows_match(&shadow(&ds, axis).intervals, &shadow(&dg, axis).intervals)))
}

fn shadows_match(p: &[(f64, f64)], q: &[(f64, f64)]) -> bool {
    p.len() == q.len()
        && p.iter()
            .zip(q)
            .all(|(x, y)| (x.0 - y.0).abs() <= 1e-9 && (x.1 - y.1).abs() <= 1e-9)
}

/// `g_{sigma'}(g_sigma(S)) == g_{sigma'}(S)`.
pub fn composition_check(s: &ObstacleSet, sigma: f64, sigma_prime: f64) -> Result<bool> {
    if sigma_prime < sigma || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need sigma' >= sigma >= 0, got sigma = {sigma}, sigma' = {sigma_prime}"
        )));
    }
    Ok(group_fixpoint(&group_fixpoint(s, sigma), sigma_prime) == group_fixpoint(s, sigma_prime))
}

/// `sigma_0 = inf { sigma >= 3 : |g_sigma(S)| < |S| }`.
///
/// A first merge happens in the first pass of the grouping map as soon as
/// `sigma` exceeds the smallest pairwise distance, so the infimum is
/// `max(3, min pairwise d_inf)`.
pub fn mesoscopic_scale(s: &ObstacleSet) -> Result<f64> {
    let dmin = s.min_pairwise_dist().ok_or(Error::InvalidArgument(
        "mesoscopic scale needs at least 2 rectangles".into(),
    ))?;
    if group_fixpoint(s, 3.0).len() < s.len() {
        return Ok(3.0);
    }
    Ok(dmin.max(3.0))
}
