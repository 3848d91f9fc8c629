//! Barrier functions vanishing on the collision set, finite-difference
//! Laplacians, and sampling-based subharmonicity certification.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{delta, flatten, unflatten, Point};
use crate::spectral::{gamma_lower_bound, r_alpha, unit_gradient, CollisionIndex, SymMatrix};

/// Parameters of `g = prod_k (ln alpha_k r_k)^(1/gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub n: usize,
    pub gamma: f64,
    /// Whether the particle-on-origin subspaces take part in the product.
    pub include_origin: bool,
}

impl BarrierSpec {
    /// The barrier with `gamma = 1 - cos(π/2n)` and the fixed particle at the origin.
    pub fn standard(n: usize) -> Self {
        BarrierSpec {
            n,
            gamma: gamma_lower_bound(n),
            include_origin: true,
        }
    }

    pub fn new(n: usize, gamma: f64, include_origin: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "barrier needs n >= 2, got {n}"
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "barrier exponent gamma must be > 0, got {gamma}"
            )));
        }
        Ok(BarrierSpec {
            n,
            gamma,
            include_origin,
        })
    }

    pub fn indices(&self) -> Vec<CollisionIndex> {
        CollisionIndex::enumerate(self.n, self.include_origin)
    }
}

/// `alpha_k r_k` for every index, checking the domain `alpha_k r_k > 1`.
fn scaled_distances(points: &[Point], idx: &[CollisionIndex]) -> Result<Vec<f64>> {
    idx.iter()
        .enumerate()
        .map(|(k, &c)| {
            let (r, a) = r_alpha(points, c);
            let rho = a * r;
            if rho > 1.0 {
                Ok(rho)
            } else {
                Err(Error::Domain {
                    index: k,
                    detail: format!("{c:?}: alpha*r = {rho} <= 1"),
                })
            }
        })
        .collect()
}

fn check_len(spec_n: usize, points: &[Point]) -> Result<()> {
    if points.len() != spec_n {
        return Err(Error::InvalidArgument(format!(
            "barrier for n = {spec_n} evaluated on {} particles",
            points.len()
        )));
    }
    Ok(())
}

pub fn eval_barrier(spec: &BarrierSpec, points: &[Point]) -> Result<f64> {
    check_len(spec.n, points)?;
    let rho = scaled_distances(points, &spec.indices())?;
    let log_sum: f64 = rho.iter().map(|r| r.ln().ln()).sum();
    Ok((log_sum / spec.gamma).exp())
}

/// `h = prod_{i<j} ln d_2(z_i, z_j)`.
pub fn eval_h(points: &[Point]) -> Result<f64> {
    let idx = CollisionIndex::enumerate(points.len(), false);
    Ok(scaled_distances(points, &idx)?
        .iter()
        .map(|r| r.ln())
        .product())
}

/// Central second-difference Laplacian over all `2n` coordinates.
pub fn fd_laplacian<F>(f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let f0 = f(x)?;
    let mut p = x.to_vec();
    let mut acc = 0.0;
    for c in 0..x.len() {
        p[c] = x[c] + h;
        let fp = f(&p)?;
        p[c] = x[c] - h;
        let fm = f(&p)?;
        p[c] = x[c];
        acc += (fp - 2.0 * f0 + fm) / (h * h);
    }
    Ok(acc)
}

/// Analytic pieces of `Δg/g`: the sum of the one-factor terms `Σ Δf_k/f_k`,
/// the weight vector `W_k = |∇f_k| / f_k`, and the correlation term
/// `|W|² (Ŵᵀ Q Ŵ - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianDecomposition {
    pub factor_sum: f64,
    pub weights: Vec<f64>,
    pub correlation_term: f64,
}

impl LaplacianDecomposition {
    pub fn total(&self) -> f64 {
        self.factor_sum + self.correlation_term
    }
}

/// For `f = (ln alpha r)^beta` with `r` the distance to a codimension-two
/// subspace: `Δf/f = beta(beta-1)/(r ln)^2` and `|∇f|/f = beta/(r ln)`.
pub fn laplacian_decomposition(
    spec: &BarrierSpec,
    points: &[Point],
) -> Result<LaplacianDecomposition> {
    check_len(spec.n, points)?;
    let idx = spec.indices();
    let beta = 1.0 / spec.gamma;
    let rho = scaled_distances(points, &idx)?;
    let mut factor_sum = 0.0;
    let mut weights = Vec::with_capacity(idx.len());
    for (k, &c) in idx.iter().enumerate() {
        let r = rho[k] / c.alpha();
        let rl = r * rho[k].ln();
        factor_sum += beta * (beta - 1.0) / (rl * rl);
        weights.push(beta / rl);
    }
    let grads = idx
        .iter()
        .map(|&c| unit_gradient(points, c))
        .collect::<Result<Vec<_>>>()?;
    let q = SymMatrix::from_fn(idx.len(), |k, l| {
        grads[k].iter().zip(&grads[l]).map(|(a, b)| a * b).sum()
    });
    let wsq: f64 = weights.iter().map(|w| w * w).sum();
    // |W|^2 (ŴᵀQŴ - 1) = WᵀQW - |W|^2
    let correlation_term = q.quadratic_form(&weights) - wsq;
    Ok(LaplacianDecomposition {
        factor_sum,
        weights,
        correlation_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub step: f64,
    /// Floor of the tolerance, relative to `max(1, |f|)`.
    pub relative_floor: f64,
    /// Multiplier on the Richardson truncation-error estimate.
    pub richardson_factor: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            step: 1e-3,
            relative_floor: 1e-6,
            richardson_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCheck {
    pub sample_id: usize,
    pub value: f64,
    pub laplacian: f64,
    pub tolerance: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubharmonicReport {
    pub checks: Vec<SampleCheck>,
}

impl SubharmonicReport {
    pub fn violations(&self) -> impl Iterator<Item = &SampleCheck> {
        self.checks.iter().filter(|c| c.violation)
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }
}

/// Flags every sample where the finite-difference Laplacian is below `-tol`,
/// with `tol = max(floor * max(1,|f|), factor * |L(2h) - L(h)| / 3)`.
pub fn certify_field<F>(
    f: F,
    samples: &[Vec<Point>],
    opts: &CertifyOptions,
) -> Result<SubharmonicReport>
where
    F: Fn(&[Point]) -> Result<f64>,
{
    let flat_f = |x: &[f64]| f(&unflatten(x));
    let mut checks = Vec::with_capacity(samples.len());
    for (sample_id, z) in samples.iter().enumerate() {
        let x = flatten(z);
        let value = f(z)?;
        let lap = fd_laplacian(flat_f, &x, opts.step)?;
        let lap2 = fd_laplacian(flat_f, &x, 2.0 * opts.step)?;
        let richardson = (lap2 - lap).abs() / 3.0;
        let tolerance =
            (opts.relative_floor * value.abs().max(1.0)).max(opts.richardson_factor * richardson);
        checks.push(SampleCheck {
            sample_id,
            value,
            laplacian: lap,
            tolerance,
            violation: lap < -tolerance,
        });
    }
    Ok(SubharmonicReport { checks })
}

/// Certification of the barrier `g` on configurations kept at `delta >= 2`.
pub fn certify_subharmonic(
    spec: &BarrierSpec,
    samples: &[Vec<Point>],
    opts: &CertifyOptions,
) -> Result<SubharmonicReport> {
    if let Some((i, z)) = samples.iter().enumerate().find(|(_, z)| delta(z) < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "sample {i} has delta = {} < 2",
            delta(z)
        )));
    }
    certify_field(|z| eval_barrier(spec, z), samples, opts)
}

/// Uniform configurations in `[-half_width, half_width]^2` per particle,
/// rejected until `delta >= min_delta`.
pub fn sample_configurations<R: Rng>(
    rng: &mut R,
    n: usize,
    count: usize,
    min_delta: f64,
    half_width: f64,
) -> Vec<Vec<Point>> {
    (0..count)
        .map(|_| loop {
            let z: Vec<Point> = (0..n)
                .map(|_| {
                    Point::new(
                        rng.random_range(-half_width..half_width),
                        rng.random_range(-half_width..half_width),
                    )
                })
                .collect();
            if delta(&z) >= min_delta {
                break z;
            }
        })
        .collect()
}

/// Lower bound on the probability that `n` Brownian particles starting with
/// `delta >= a` leave the ball of radius `t` around their start in `(R²)^n`
/// before any collision among themselves or with a fixed particle at the origin.
pub fn kest_bound(a: f64, t: f64, n: usize) -> Result<f64> {
    if !(a >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "kest bound needs a >= 2, got {a}"
        )));
    }
    if !(t >= 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "kest bound needs T >= 0 and n >= 2, got T = {t}, n = {n}"
        )));
    }
    let la = a.ln();
    let single = (la / (a + t).ln()).ln();
    let pair = (la / (a + std::f64::consts::SQRT_2 * t).ln()).ln();
    let nf = n as f64;
    let log = (nf * single + 0.5 * nf * (nf - 1.0) * pair) / gamma_lower_bound(n);
    Ok(log.exp().clamp(0.0, 1.0))
}

/// `(ln a / ln b)^(c_eps n^4)` with a caller-supplied constant.
pub fn lnsclinv_bound(a: f64, b: f64, n: usize, c_eps: f64) -> Result<f64> {
    if !(a > 1.0) || !(c_eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need a > 1 and c_eps > 0, got a = {a}, c_eps = {c_eps}"
        )));
    }
    if b < a {
        return Err(Error::InvalidArgument(format!(
            "need b >= a, got a = {a}, b = {b}"
        )));
    }
    let expo = c_eps * (n as f64).powi(4);
    Ok((expo * (a.ln() / b.ln()).ln()).exp().clamp(0.0, 1.0))
}
