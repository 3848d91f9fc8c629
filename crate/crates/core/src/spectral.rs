//! Collision-correlation analysis.
//!
//! For `n` particles and a fixed particle at the origin there are
//! `m = n(n-1)/2 + n` codimension-two collision subspaces `F_k`. `r_k` is the
//! Euclidean distance in `(R²)^n` to `F_k` and `Q(z)` is the Gram matrix of the
//! unit gradients `∇r_k`. The collision correlation is bounded below by the
//! smallest eigenvalue of the tridiagonal matrix `Q_n`, whose spectrum is
//! `{1 - cos((2k+1)π/2n)}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// A collision subspace: two particles superposed, or one particle on the origin.
/// Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionIndex {
    Pair(usize, usize),
    Origin(usize),
}

impl CollisionIndex {
    /// All indices for `n` particles: pairs in lexicographic order, then origins.
    pub fn enumerate(n: usize, include_origin: bool) -> Vec<CollisionIndex> {
        let mut out = Vec::with_capacity(n * (n - 1) / 2 + n);
        for i in 0..n {
            for j in i + 1..n {
                out.push(CollisionIndex::Pair(i, j));
            }
        }
        if include_origin {
            out.extend((0..n).map(CollisionIndex::Origin));
        }
        out
    }

    /// `alpha_k`: sqrt(2) for pairs, 1 for the origin kind.
    pub fn alpha(&self) -> f64 {
        match self {
            CollisionIndex::Pair(..) => std::f64::consts::SQRT_2,
            CollisionIndex::Origin(_) => 1.0,
        }
    }
}

pub fn collision_count(n: usize) -> usize {
    n * (n - 1) / 2 + n
}

/// `(r_k(z), alpha_k)`.
pub fn r_alpha(points: &[Point], k: CollisionIndex) -> (f64, f64) {
    match k {
        CollisionIndex::Pair(i, j) => (
            (points[i] - points[j]).norm2() / std::f64::consts::SQRT_2,
            k.alpha(),
        ),
        CollisionIndex::Origin(i) => (points[i].norm2(), k.alpha()),
    }
}

/// Unit gradient of `r_k` in `(R²)^n`, flattened as `(x_1, y_1, ..., x_n, y_n)`.
pub fn unit_gradient(points: &[Point], k: CollisionIndex) -> Result<Vec<f64>> {
    let mut g = vec![0.0; 2 * points.len()];
    match k {
        CollisionIndex::Pair(i, j) => {
            let u = points[j] - points[i];
            let len = u.norm2();
            if len == 0.0 {
                return Err(Error::Domain {
                    index: 0,
                    detail: format!("particles {i} and {j} coincide"),
                });
            }
            let s = 1.0 / (len * std::f64::consts::SQRT_2);
            g[2 * j] = u.x * s;
            g[2 * j + 1] = u.y * s;
            g[2 * i] = -u.x * s;
            g[2 * i + 1] = -u.y * s;
        }
        CollisionIndex::Origin(i) => {
            let len = points[i].norm2();
            if len == 0.0 {
                return Err(Error::Domain {
                    index: 0,
                    detail: format!("particle {i} sits at the origin"),
                });
            }
            g[2 * i] = points[i].x / len;
            g[2 * i + 1] = points[i].y / len;
        }
    }
    Ok(g)
}

/// Real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(order, order);
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Eigenvalues in ascending order (dense symmetric solver).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.0 * &v))
    }

    fn principal(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.0[(idx[a], idx[b])])
    }
}

/// `Q(z)`, the Gram matrix of the unit gradients `∇r_k` over all `m` indices.
pub fn collision_matrix(points: &[Point]) -> Result<SymMatrix> {
    let idx = CollisionIndex::enumerate(points.len(), true);
    let grads = idx
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            unit_gradient(points, c).map_err(|e| match e {
                Error::Domain { detail, .. } => Error::Domain { index: k, detail },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SymMatrix::from_fn(idx.len(), |k, l| {
        if k == l {
            1.0
        } else {
            grads[k].iter().zip(&grads[l]).map(|(a, b)| a * b).sum()
        }
    }))
}

/// The tridiagonal matrix `Q_n`: unit diagonal, first off-diagonal coefficient
/// `-1/sqrt(2)`, all others `-1/2`.
pub fn build_qn(n: usize) -> Result<SymMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Q_n needs n >= 2, got {n}")));
    }
    Ok(SymMatrix::from_fn(n, |i, j| match j - i {
        0 => 1.0,
        1 if i == 0 => -std::f64::consts::FRAC_1_SQRT_2,
        1 => -0.5,
        _ => 0.0,
    }))
}

/// `{1 - cos((2k+1)π/2n) : k = 0..n-1}`, ascending.
pub fn spectrum_closed_form(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|k| 1.0 - ((2 * k + 1) as f64 * std::f64::consts::PI / (2.0 * nf)).cos())
        .collect()
}

/// `chi_k(lambda)`: characteristic polynomial of the order-`k` matrix with unit
/// diagonal and `-1/2` off-diagonals, via `chi_k = (1-λ)chi_{k-1} - chi_{k-2}/4`.
pub fn char_poly_eval(k: usize, lambda: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - lambda);
    if k == 0 {
        return prev;
    }
    for _ in 2..=k {
        let next = (1.0 - lambda) * cur - 0.25 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `det(Q_n - λI) = (1-λ)chi_{n-1}(λ) - chi_{n-2}(λ)/2`, together with
/// `|chi_{n-1}| + |chi_{n-2}|/2`, the scale against which cancellation is judged
/// (the `chi_k` decay geometrically in `k` on the spectrum).
pub fn qn_char_poly(n: usize, lambda: f64) -> (f64, f64) {
    assert!(n >= 2);
    let c1 = char_poly_eval(n - 1, lambda);
    let c2 = char_poly_eval(n - 2, lambda);
    ((1.0 - lambda) * c1 - 0.5 * c2, c1.abs() + 0.5 * c2.abs())
}

/// `1 - cos(π/2n)`.
pub fn gamma_lower_bound(n: usize) -> f64 {
    1.0 - (std::f64::consts::PI / (2.0 * n as f64)).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMethod {
    /// Support enumeration when `m <= 15`, projected gradient otherwise.
    Auto,
    SupportEnumeration,
    ProjectedGradient {
        starts: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// True when obtained by exhaustive support enumeration.
    pub certified: bool,
}

pub const ENUMERATION_LIMIT: usize = 15;

/// Minimum of `VᵀQ(z)V` over non-negative unit vectors `V`, for one configuration.
pub fn gamma_bruteforce(points: &[Point], method: GammaMethod) -> Result<GammaEstimate> {
    let q = collision_matrix(points)?;
    min_on_nonnegative_sphere(&q, method)
}

pub fn min_on_nonnegative_sphere(q: &SymMatrix, method: GammaMethod) -> Result<GammaEstimate> {
    let m = q.order();
    let method = match method {
        GammaMethod::Auto if m <= ENUMERATION_LIMIT => GammaMethod::SupportEnumeration,
        GammaMethod::Auto => GammaMethod::ProjectedGradient {
            starts: 64,
            seed: 0,
        },
        other => other,
    };
    match method {
        GammaMethod::SupportEnumeration => {
            if m > 20 {
                return Err(Error::Budget(format!(
                    "support enumeration over 2^{m} subsets"
                )));
            }
            Ok(support_enumeration(q))
        }
        GammaMethod::ProjectedGradient { starts, seed } => Ok(projected_gradient(q, starts, seed)),
        GammaMethod::Auto => unreachable!(),
    }
}

/// At a minimiser with support `I`, `V_I` is a positive eigenvector of the
/// principal submatrix `Q_I`. Enumerating supports and keeping eigenpairs whose
/// eigenvector has one sign recovers the minimum exactly.
fn support_enumeration(q: &SymMatrix) -> GammaEstimate {
    let m = q.order();
    let mut best = GammaEstimate {
        value: f64::INFINITY,
        argmin: vec![0.0; m],
        certified: true,
    };
    let mut idx = Vec::with_capacity(m);
    for mask in 1u32..(1u32 << m) {
        idx.clear();
        idx.extend((0..m).filter(|&i| mask & (1 << i) != 0));
        let eig = SymmetricEigen::new(q.principal(&idx));
        for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda >= best.value {
                continue;
            }
            let v = eig.eigenvectors.column(c);
            let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
            if v.iter().all(|&x| sign * x >= -1e-12) {
                best.value = lambda;
                best.argmin.iter_mut().for_each(|x| *x = 0.0);
                for (a, &i) in idx.iter().enumerate() {
                    best.argmin[i] = (sign * v[a]).max(0.0);
                }
            }
        }
    }
    best
}

fn project(v: &mut [f64]) -> bool {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn projected_gradient(q: &SymMatrix, starts: usize, seed: u64) -> GammaEstimate {
    let m = q.order();
    let mat = q.as_matrix();
    let lipschitz = mat.abs().row_sum().max().max(1.0);
    let step = 0.5 / lipschitz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = GammaEstimate {
        value: f64::INFINITY,
        argmin: vec![0.0; m],
        certified: false,
    };
    for s in 0..starts.max(1) {
        let mut v: Vec<f64> = if s < m {
            (0..m).map(|i| if i == s { 1.0 } else { 0.0 }).collect()
        } else {
            (0..m).map(|_| rng.random::<f64>()).collect()
        };
        project(&mut v);
        let mut val = q.quadratic_form(&v);
        for _ in 0..20_000 {
            let qv: Vec<f64> = (0..m)
                .map(|i| (0..m).map(|j| mat[(i, j)] * v[j]).sum())
                .collect();
            let mut next: Vec<f64> = v.iter().zip(&qv).map(|(x, g)| x - 2.0 * step * g).collect();
            if !project(&mut next) {
                break;
            }
            let nval = q.quadratic_form(&next);
            let moved = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let done = moved < 1e-10;
            v = next;
            val = nval;
            if done {
                break;
            }
        }
        if val < best.value {
            best.value = val;
            best.argmin = v;
        }
    }
    best
}
