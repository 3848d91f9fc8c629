//! Line-oriented scene files.
//!
//! ```text
//! # two walkers next to a wall
//! flavor lattice
//! horizon 100
//! rect 10 12 -5 5
//! particle 0 0
//! particle 2 0
//! ```
//!
//! `fixed x y` adds an immobile unit-diameter particle (continuous flavor).
//! A missing `horizon` means an unbounded run, which needs a stopping rule.

use crate::dynamics::Scene;
use crate::error::{Error, Result};
use crate::geometry::{Configuration, Flavor, Point, Rect};
use crate::grouping::ObstacleSet;

fn number(tok: &str, line: usize, allow_inf: bool) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Syntax {
        line,
        message: format!("expected a number, got `{tok}`"),
    })?;
    if v.is_nan() || (!allow_inf && v.is_infinite()) {
        return Err(Error::Syntax {
            line,
            message: format!("`{tok}` is not a finite number"),
        });
    }
    Ok(v)
}

fn numbers<const K: usize>(args: &[&str], line: usize, directive: &str) -> Result<[f64; K]> {
    if args.len() != K {
        return Err(Error::Syntax {
            line,
            message: format!("`{directive}` takes {K} numbers, got {}", args.len()),
        });
    }
    let mut out = [0.0; K];
    for (o, a) in out.iter_mut().zip(args) {
        *o = number(a, line, false)?;
    }
    Ok(out)
}

/// Parses and validates a scene; hypothesis violations are all reported.
pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut flavor = None;
    let mut horizon = None;
    let mut rects = Vec::new();
    let mut particles = Vec::new();
    let mut fixed = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(directive) = toks.next() else {
            continue;
        };
        let args: Vec<&str> = toks.collect();
        match directive {
            "flavor" => {
                if flavor.is_some() {
                    return Err(Error::Syntax {
                        line,
                        message: "duplicate `flavor`".into(),
                    });
                }
                flavor = Some(match args.as_slice() {
                    ["lattice"] => Flavor::Lattice,
                    ["continuous"] => Flavor::Continuous,
                    _ => {
                        return Err(Error::Syntax {
                            line,
                            message: "`flavor` takes `lattice` or `continuous`".into(),
                        })
                    }
                });
            }
            "horizon" => {
                if horizon.is_some() {
                    return Err(Error::Syntax {
                        line,
                        message: "duplicate `horizon`".into(),
                    });
                }
                let [t] = args.as_slice() else {
                    return Err(Error::Syntax {
                        line,
                        message: "`horizon` takes one number".into(),
                    });
                };
                let t = number(t, line, true)?;
                if t < 0.0 {
                    return Err(Error::Syntax {
                        line,
                        message: "horizon must be >= 0".into(),
                    });
                }
                horizon = Some(t);
            }
            "rect" => {
                let [a, b, c, d] = numbers::<4>(&args, line, directive)?;
                rects.push(Rect::new(a, b, c, d).map_err(|e| Error::Syntax {
                    line,
                    message: e.to_string(),
                })?);
            }
            "particle" => {
                let [x, y] = numbers::<2>(&args, line, directive)?;
                particles.push(Point::new(x, y));
            }
            "fixed" => {
                let [x, y] = numbers::<2>(&args, line, directive)?;
                fixed.push(Point::new(x, y));
            }
            other => {
                return Err(Error::Syntax {
                    line,
                    message: format!("unknown directive `{other}`"),
                });
            }
        }
    }
    if particles.is_empty() {
        return Err(Error::Empty("particles"));
    }
    let flavor = flavor.ok_or_else(|| Error::Syntax {
        line: 0,
        message: "missing `flavor` directive".into(),
    })?;
    if flavor == Flavor::Lattice {
        if let Some(r) = rects.iter().find(|r| !r.has_integral_corners()) {
            return Err(Error::NonIntegralRect(r.to_string()));
        }
    }
    let init = Configuration::new(particles, flavor)?;
    Scene::new(
        init,
        ObstacleSet::new(rects),
        fixed,
        horizon.unwrap_or(f64::INFINITY),
    )
}

/// Canonical text of a scene; `parse_scene(format_scene(s)) == s`.
pub fn format_scene(scene: &Scene) -> String {
    // `{}` on f64 prints the shortest decimal that parses back to the same value
    let mut out = format!("flavor {}\nhorizon {}\n", scene.flavor(), scene.horizon());
    for r in scene.obstacles().rects() {
        out += &format!("rect {} {} {} {}\n", r.a, r.b, r.c, r.d);
    }
    for p in scene.fixed() {
        out += &format!("fixed {} {}\n", p.x, p.y);
    }
    for p in scene.init().points() {
        out += &format!("particle {} {}\n", p.x, p.y);
    }
    out
}
