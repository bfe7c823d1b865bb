//! Margin quantities of a measure around an optimal codebook.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::ext_real;
use crate::error::{Error, Result};
use crate::geometry::{
    check_dim, frontier_distance_raw, inflate, lambda_max_raw, nearest, nearest_dist2, sq_dist,
    Codebook, Point, TAU_GEO,
};
use crate::measures::{compensated_sum, DiscreteMeasure};
use crate::quantize::{exact_optimal, risk};

fn cell_of(x: &Point, c: &Codebook) -> usize {
    nearest(x.coords(), c, TAU_GEO)
}

fn frontier_dist(x: &Point, c: &Codebook) -> f64 {
    if c.k() < 2 {
        f64::INFINITY
    } else {
        frontier_distance_raw(x.coords(), c, cell_of(x, c))
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "t must be nonnegative, got {t}"
        )));
    }
    Ok(())
}

/// Mass of the `t`-neighbourhood of the frontier, maximized over `optima`.
pub fn p_of_t(p: &DiscreteMeasure, optima: &[Codebook], t: f64) -> Result<f64> {
    check_t(t)?;
    if optima.is_empty() {
        return Err(Error::Empty("optimal codebook list"));
    }
    let mut best: f64 = 0.0;
    for c in optima {
        check_dim(c.dim(), p.dim())?;
        let mass = compensated_sum(
            p.iter()
                .filter(|(x, _)| frontier_dist(x, c) <= t)
                .map(|(_, w)| w),
        );
        best = best.max(mass);
    }
    Ok(best)
}

/// Mass of atoms with `m d(x, frontier) <= 2 |x - q*(x)| t + 2 t^2`.
pub fn p_star(p: &DiscreteMeasure, cstar: &Codebook, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "t must be positive, got {t}"
        )));
    }
    check_dim(cstar.dim(), p.dim())?;
    let Some(m) = cstar.min_separation() else {
        return Ok(0.0);
    };
    Ok(compensated_sum(
        p.iter()
            .filter(|(x, _)| {
                let d = cstar.center(cell_of(x, cstar)).dist(x);
                m * frontier_dist(x, cstar) <= 2.0 * d * t + 2.0 * t * t
            })
            .map(|(_, w)| w),
    ))
}

/// Largest inflation keeping every atom in its cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaN {
    #[serde(with = "ext_real")]
    pub value: f64,
    /// Atom index attaining the minimum (none when the value is infinite).
    pub atom: Option<usize>,
    /// Some atom lies on the frontier, so the margin condition fails.
    pub on_frontier: bool,
}

pub fn lambda_n(p: &DiscreteMeasure, cstar: &Codebook) -> Result<LambdaN> {
    check_dim(cstar.dim(), p.dim())?;
    let mut out = LambdaN {
        value: f64::INFINITY,
        atom: None,
        on_frontier: false,
    };
    if cstar.k() < 2 {
        return Ok(out);
    }
    for (i, x) in p.atoms().iter().enumerate() {
        let l = lambda_max_raw(x.coords(), cstar, cell_of(x, cstar));
        if l < out.value {
            out.value = l;
            out.atom = Some(i);
        }
    }
    out.on_frontier = out.value <= 0.0;
    Ok(out)
}

/// Mass of `A(lambda)`.
pub fn a_mass(p: &DiscreteMeasure, cstar: &Codebook, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(cstar.dim(), p.dim())?;
    if lambda == 0.0 || cstar.k() < 2 {
        return Ok(1.0);
    }
    Ok(compensated_sum(
        p.iter()
            .filter(|(x, _)| lambda <= lambda_max_raw(x.coords(), cstar, cell_of(x, cstar)))
            .map(|(_, w)| w),
    ))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    Ok(())
}

/// `sum_x w(x) (|x_l - q*(x)|^2 - |x_l - q(x_l)|^2)` with
/// `x_l = x + lambda (x - q*(x))`.
pub fn c_q_lambda(p: &DiscreteMeasure, cstar: &Codebook, q: &Codebook, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(cstar.dim(), p.dim())?;
    check_dim(q.dim(), p.dim())?;
    Ok(p.iter()
        .map(|(x, w)| {
            let center = cstar.center(cell_of(x, cstar)).coords();
            let moved = inflate(x.coords(), center, lambda);
            w * (sq_dist(&moved, center) - nearest_dist2(&moved, q))
        })
        .sum())
}

/// The measure `P_lambda`: every atom pushed to `x + lambda (x - q*(x))`.
pub fn inflate_measure(
    p: &DiscreteMeasure,
    cstar: &Codebook,
    lambda: f64,
) -> Result<DiscreteMeasure> {
    check_lambda(lambda)?;
    check_dim(cstar.dim(), p.dim())?;
    p.push_forward(|x| {
        Point::new(inflate(
            x.coords(),
            cstar.center(cell_of(x, cstar)).coords(),
            lambda,
        ))
    })
}

/// Certified stability margin.
///
/// `lambda_n` alone does not bound `c_q(lambda)`: it only keeps the atoms in
/// their cells, while the bound also needs `q*` to remain optimal once the
/// atoms are pushed outwards. `value` is the largest `lambda <= lambda_n`
/// (found by bisection) at which `q*` is an exact optimum of `P_lambda`, which
/// gives `c_q(value) <= 0` for every `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedMargin {
    #[serde(with = "ext_real")]
    pub value: f64,
    #[serde(with = "ext_real")]
    pub lambda_n: f64,
    /// Exact solves performed.
    pub solves: usize,
}

/// Bisection steps for [`certified_margin`].
const MARGIN_STEPS: usize = 40;
/// Upper limit for the search when `lambda_n` is infinite.
const MARGIN_CAP: f64 = 1e6;

pub fn certified_margin(p: &DiscreteMeasure, cstar: &Codebook) -> Result<CertifiedMargin> {
    let ln = lambda_n(p, cstar)?.value;
    let solves = Cell::new(0);
    let k = cstar.k();
    if risk(p, cstar)? == 0.0 {
        // inflation leaves the atoms in place
        return Ok(CertifiedMargin {
            value: f64::INFINITY,
            lambda_n: ln,
            solves: solves.get(),
        });
    }
    let holds = |lambda: f64| -> Result<bool> {
        solves.set(solves.get() + 1);
        let inflated = inflate_measure(p, cstar, lambda)?;
        let opt = exact_optimal(&inflated, k)?;
        Ok(risk(&inflated, cstar)? <= opt.risk + TAU_GEO)
    };
    if ln <= 0.0 {
        return Ok(CertifiedMargin {
            value: 0.0,
            lambda_n: ln,
            solves: solves.get(),
        });
    }
    let mut hi = ln.min(MARGIN_CAP);
    let mut lo = 0.0;
    if ln.is_infinite() {
        let mut probe = 1.0;
        loop {
            if !holds(probe)? {
                hi = probe;
                break;
            }
            lo = probe;
            if probe >= MARGIN_CAP {
                return Ok(CertifiedMargin {
                    value: lo,
                    lambda_n: ln,
                    solves: solves.get(),
                });
            }
            probe *= 2.0;
        }
    } else if holds(hi)? {
        return Ok(CertifiedMargin {
            value: hi,
            lambda_n: ln,
            solves: solves.get(),
        });
    }
    for _ in 0..MARGIN_STEPS {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CertifiedMargin {
        value: lo,
        lambda_n: ln,
        solves: solves.get(),
    })
}

/// Curves describing how much mass sits near the frontier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginProfile {
    pub lambda_n: LambdaN,
    /// `(t, p(t))`.
    pub p_curve: Vec<(f64, f64)>,
    /// `(t, p*(t))` for `t > 0`.
    pub p_star_curve: Vec<(f64, f64)>,
    /// `(lambda, P(A(lambda)))`.
    pub a_mass_curve: Vec<(f64, f64)>,
    /// `p(t)` was computed from optima not known to be exhaustive.
    pub p_is_lower_bound: bool,
}

/// Evaluates all margin curves. `optima_complete` states whether `optima`
/// lists every optimal codebook; otherwise `p(t)` is flagged as a lower bound.
pub fn margin_profile(
    p: &DiscreteMeasure,
    optima: &[Codebook],
    optima_complete: bool,
    t_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<MarginProfile> {
    let cstar = optima
        .first()
        .ok_or(Error::Empty("optimal codebook list"))?;
    let p_curve = t_grid
        .iter()
        .map(|&t| Ok((t, p_of_t(p, optima, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let p_star_curve = t_grid
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| Ok((t, p_star(p, cstar, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let a_mass_curve = lambda_grid
        .iter()
        .map(|&l| Ok((l, a_mass(p, cstar, l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginProfile {
        lambda_n: lambda_n(p, cstar)?,
        p_curve,
        p_star_curve,
        a_mass_curve,
        p_is_lower_bound: !optima_complete,
    })
}

/// `n + 1` evenly spaced points on `[0, hi]`.
pub fn linspace(hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| hi * i as f64 / n as f64).collect()
}
