//! Closed-form lower bounds.
//!
//! Everything is evaluated in log space: the theorem horizons `T0` overflow
//! `f64` already for tiny `n` and `p`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Flavor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: usize,
    pub p: f64,
    pub c0: f64,
    pub flavor: Flavor,
}

impl BoundParams {
    pub fn new(n: usize, p: f64, c0: f64, flavor: Flavor) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
        }
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::InvalidArgument(format!("c0 must be > 0, got {c0}")));
        }
        Ok(BoundParams { n, p, c0, flavor })
    }
}

/// `P(T_c > T) >= (ln T)^-nu` for `T >= T0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBound {
    pub nu: f64,
    pub ln_t0: f64,
}

impl TheoremBound {
    /// `T0`, possibly `+inf` when it does not fit in an `f64`.
    pub fn t0(&self) -> f64 {
        self.ln_t0.exp()
    }

    /// `-nu · ln ln T` given `ln T`; only meaningful for `ln T >= ln T0`.
    pub fn log_bound_at_ln_t(&self, ln_t: f64) -> Result<f64> {
        if !(ln_t >= self.ln_t0) {
            return Err(Error::InvalidArgument(format!(
                "the bound holds for ln T >= {}, got {ln_t}",
                self.ln_t0
            )));
        }
        Ok(-self.nu * ln_t.ln())
    }

    pub fn bound_at_ln_t(&self, ln_t: f64) -> Result<f64> {
        Ok(self.log_bound_at_ln_t(ln_t)?.exp().clamp(0.0, 1.0))
    }

    /// Log of the bound at `T = T0`.
    pub fn log_bound_at_t0(&self) -> f64 {
        -self.nu * self.ln_t0.ln()
    }
}

/// `nu = c0 n^4 p^2 ln p`; `T0 = exp(nu^2)` (lattice) or `nu^2` (continuous).
pub fn theorem_nu_t0(params: &BoundParams) -> TheoremBound {
    let n = params.n as f64;
    let nu = params.c0 * n.powi(4) * params.p * params.p * params.p.ln();
    let ln_t0 = match params.flavor {
        Flavor::Lattice => nu * nu,
        Flavor::Continuous => 2.0 * nu.ln(),
    };
    TheoremBound { nu, ln_t0 }
}

/// `1 - cos(π/(n+1))`, via `2 sin²` to keep precision for large `n`.
fn one_minus_cos_pi_over(m: f64) -> f64 {
    let s = (PI / (2.0 * m)).sin();
    2.0 * s * s
}

/// Non-collision bound for `n` Brownian balls in dimension `d >= 3` started at
/// mutual distance at least `a >= 1`:
/// `(1 - a^(2-d))^(n(n-1) / (2(1 - cos(π/(n+1)))))`.
pub fn higher_dim_bound(a: f64, d: u32, n: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be >= 3, got {d}"
        )));
    }
    if !(a >= 1.0) {
        return Err(Error::InvalidArgument(format!("a must be >= 1, got {a}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    let nf = n as f64;
    let exponent = nf * (nf - 1.0) / (2.0 * one_minus_cos_pi_over(nf + 1.0));
    // a^(2-d) = exp(-(d-2) ln a)
    let x = (-((d - 2) as f64) * a.ln()).exp();
    let log = exponent * (-x).ln_1p();
    Ok(log.exp().clamp(0.0, 1.0))
}

/// The exponent `(n+p) n² ln θ` of a bound of the form `exp(-cst · shape)`
/// whose constant is not specified; it can only be compared with data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorExponent {
    pub n: usize,
    pub p: f64,
    pub theta: f64,
    pub shape: f64,
}

impl CorridorExponent {
    /// The constant that would make `exp(-cst · shape)` equal `probability`.
    pub fn implied_constant(&self, probability: f64) -> Result<f64> {
        if !(probability > 0.0 && probability <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "probability must lie in (0, 1], got {probability}"
            )));
        }
        Ok(-probability.ln() / self.shape)
    }

    /// Always refused: the bound has no numeric value without its constant.
    pub fn probability(&self) -> Result<f64> {
        Err(Error::UnspecifiedConstant("corridor exponent"))
    }
}

pub fn corridor_exponent_form(n: usize, p: f64, theta: f64) -> Result<CorridorExponent> {
    if n < 2 || !(p >= 2.0) || !(theta >= 2.0) || !theta.is_finite() || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2, p >= 2, theta >= 2; got n = {n}, p = {p}, theta = {theta}"
        )));
    }
    let nf = n as f64;
    Ok(CorridorExponent {
        n,
        p,
        theta,
        shape: (nf + p) * nf * nf * theta.ln(),
    })
}
