//! The two measures showing that neither part of the margin condition can be
//! dropped.

use rayon::prelude::*;
use serde_json::json;

use super::instances::probes;
use super::report::{real, Table, Tally, Verdict};
use super::suites::{bound_constant, SuiteResult};
use crate::error::Result;
use crate::geometry::Codebook;
use crate::measures::{grid_discretize, NamedDistribution};
use crate::quantize::{exact_optimal_enum, lloyd, risk, LloydConfig};
use crate::stability::{a_mass, big_f_squared, c_q_lambda, f2, lambda_n};

/// Tolerance on recovered optimal centers.
pub const CENTER_TOL: f64 = 1e-6;
/// Relative tolerance on `F` and on the excess-risk bound.
pub const REL_TOL: f64 = 0.1;
/// The ratio must exceed this at the smallest `eps`.
pub const RATIO_FLOOR: f64 = 10.0;
/// Threshold for a positive `c_q(lambda)`.
pub const C_Q_FLOOR: f64 = 1e-6;

pub const RECTANGLE_EPS: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

fn close(a: &Codebook, b: &Codebook) -> bool {
    a.k() == b.k()
        && a.dim() == b.dim()
        && a.sorted()
            .centers()
            .iter()
            .zip(b.sorted().centers())
            .all(|(x, y)| x.dist(y) <= CENTER_TOL)
}

/// Uniform rectangle `[-1, 1] x [-1/2, 1/2]`, `k = 2`, tilted codebooks
/// `{(-1/2, eps), (1/2, -eps)}`.
pub fn run_counterexample_rectangle(
    eps_list: &[f64],
    resolution: usize,
    seed: u64,
    restarts: usize,
) -> Result<SuiteResult> {
    let dist = NamedDistribution::standard_rectangle();
    let p = grid_discretize(&dist, resolution)?;
    let expected = Codebook::from_rows(vec![vec![-0.5, 0.0], vec![0.5, 0.0]])?;
    let solved = lloyd(&p, 2, &LloydConfig::seeded(seed, restarts))?;
    let mut verdicts = Vec::new();

    let mut opt = Tally::new("counterexample1.optimum", 0.0);
    opt.holds(
        close(&solved.codebook, &expected),
        || json!({ "found": solved.codebook.to_rows(), "expected": expected.to_rows() }),
    );
    verdicts.push(opt.finish().with_details(json!({
        "found": solved.codebook.to_rows(),
        "risk": solved.risk,
        "solver": "lloyd",
        "restarts": restarts,
    })));

    let cstar = expected;
    let r_star = risk(&p, &cstar)?;
    let ln = lambda_n(&p, &cstar)?;
    let (nx, ny) = (resolution, resolution / 2);
    let cell_diameter = ((2.0 / nx as f64).powi(2) + (1.0 / ny as f64).powi(2)).sqrt();

    let rows: Vec<_> = eps_list
        .par_iter()
        .map(|&eps| -> Result<_> {
            let c = Codebook::from_rows(vec![vec![-0.5, eps], vec![0.5, -eps]])?;
            let big = big_f_squared(&p, &cstar, &c)?;
            let excess = risk(&p, &c)? - r_star;
            let (mis, _) = f2(&p, &cstar, &c)?;
            Ok((eps, big.sqrt(), excess, big / excess, mis))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        "counterexample_rectangle",
        &[
            "eps",
            "F",
            "excess",
            "ratio",
            "f2",
            "F_closed_form",
            "quad_bound",
        ],
    );
    let mut f_tally = Tally::new("counterexample1.F_equals_eps", 0.0);
    let mut excess_tally = Tally::new("counterexample1.excess_le_eps2", 0.0);
    for &(eps, f, excess, ratio, mis) in &rows {
        let w = || json!({ "eps": eps, "F": f, "excess": excess, "resolution": resolution });
        f_tally.le((f - eps).abs(), REL_TOL * eps, w);
        excess_tally.le(excess, (1.0 + REL_TOL) * eps * eps, w);
        // cells straddling the two bisector pieces carry at most one cell
        // diameter of mass, each off by at most 1 + eps^2 in F^2
        let quad = (1.0 + eps * eps) * cell_diameter;
        table.push(vec![
            eps.into(),
            f.into(),
            excess.into(),
            ratio.into(),
            mis.into(),
            (eps * eps + eps / 4.0).sqrt().into(),
            quad.into(),
        ]);
    }
    let quad_details = json!({
        "resolution": [nx, ny],
        "cell_diameter": cell_diameter,
        "lambda_n": real(ln.value),
    });
    verdicts.push(f_tally.finish().with_details(quad_details.clone()));
    verdicts.push(excess_tally.finish().with_details(quad_details));

    let mut ratio = Tally::new("counterexample1.ratio_unbounded", 0.0);
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in sorted.windows(2) {
        ratio.holds(
            w[1].3 > w[0].3,
            || json!({ "eps": [w[0].0, w[1].0], "ratio": [w[0].3, w[1].3] }),
        );
    }
    if let Some(last) = sorted.last() {
        ratio.le(
            RATIO_FLOOR,
            last.3,
            || json!({ "eps": last.0, "ratio": last.3 }),
        );
    }
    verdicts.push(ratio.finish());

    Ok(SuiteResult {
        verdicts,
        tables: vec![table],
    })
}

/// Coarse resolutions at which the two-segment optimum is certified by
/// enumeration (at most 14 atoms).
pub const SEGMENT_CERT_RESOLUTIONS: [usize; 4] = [4, 5, 6, 7];

pub fn default_segment_lambdas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0, 16.0]
}

/// Two horizontal segments at heights `+-1`, `k = 2`.
///
/// The search for probes with `c_q(lambda) > 0` is a lower-bound
/// demonstration: it exhibits violations, it does not bound their size.
pub fn run_counterexample_segments(
    resolution: usize,
    lambdas: &[f64],
    n_probes: usize,
    seed: u64,
    restarts: usize,
) -> Result<SuiteResult> {
    let dist = NamedDistribution::TwoSegments;
    let expected = Codebook::from_rows(vec![vec![0.0, -1.0], vec![0.0, 1.0]])?;
    let mut verdicts = Vec::new();

    let mut opt = Tally::new("counterexample2.optimum", 0.0);
    for r in SEGMENT_CERT_RESOLUTIONS {
        let coarse = grid_discretize(&dist, r)?;
        let res = exact_optimal_enum(&coarse, 2)?;
        let ok = res.uniqueness.is_certified_unique() && close(&res.codebook, &expected);
        opt.holds(ok, || {
            json!({ "resolution": r, "found": res.codebook.to_rows(), "uniqueness": res.uniqueness.label() })
        });
    }
    let p = grid_discretize(&dist, resolution)?;
    let solved = lloyd(&p, 2, &LloydConfig::seeded(seed, restarts))?;
    opt.holds(close(&solved.codebook, &expected), || {
        json!({ "resolution": resolution, "found": solved.codebook.to_rows(), "solver": "lloyd" })
    });
    verdicts.push(opt.finish().with_details(json!({
        "certified_resolutions": SEGMENT_CERT_RESOLUTIONS,
        "resolution": resolution,
        "lloyd_codebook": solved.codebook.to_rows(),
    })));

    let cstar = expected;
    let r_star = risk(&p, &cstar)?;
    let mut pool = probes(&cstar, &p, n_probes, seed);
    // stretch probes horizontally as well: the segments reward wide codebooks
    let stretched: Vec<Codebook> = pool
        .iter()
        .filter_map(|q| {
            Codebook::from_rows(
                q.to_rows()
                    .into_iter()
                    .map(|r| vec![3.0 * r[0], r[1]])
                    .collect(),
            )
            .ok()
        })
        .collect();
    pool.extend(stretched);

    let mut mass = Tally::new("counterexample2.a_mass_full", 0.0);
    let mut table = Table::new(
        "counterexample_segments",
        &[
            "lambda",
            "a_mass",
            "c_q_structured",
            "c_q_best",
            "theorem_lhs",
            "theorem_rhs",
        ],
    );
    let mut best_overall = (f64::NEG_INFINITY, 0.0, Vec::new());
    let mut theorem_fail = (f64::NEG_INFINITY, 0.0, Vec::new());
    for &lambda in lambdas {
        let am = a_mass(&p, &cstar, lambda)?;
        mass.le(
            (1.0 - am).abs(),
            1e-12,
            || json!({ "lambda": lambda, "a_mass": am }),
        );
        let a = (1.0 + lambda) / 2.0;
        let structured = Codebook::from_rows(vec![vec![-a, 0.0], vec![a, 0.0]])?;
        let c_struct = c_q_lambda(&p, &cstar, &structured, lambda)?;
        let scored: Vec<(f64, usize)> = pool
            .par_iter()
            .enumerate()
            .map(|(i, q)| Ok((c_q_lambda(&p, &cstar, q, lambda)?, i)))
            .collect::<Result<_>>()?;
        let (c_rand, idx) =
            scored.into_iter().fold(
                (f64::NEG_INFINITY, 0),
                |acc, x| if x.0 > acc.0 { x } else { acc },
            );
        let (best, best_q) = if c_struct >= c_rand {
            (c_struct, structured.clone())
        } else {
            (c_rand, pool[idx].clone())
        };
        if best > best_overall.0 {
            best_overall = (best, lambda, best_q.to_rows());
        }
        // the stability inequality with constant (1 + lambda) / lambda
        let lhs = big_f_squared(&p, &cstar, &structured)?;
        let rhs = bound_constant(lambda) * (risk(&p, &structured)? - r_star);
        if lhs - rhs > theorem_fail.0 {
            theorem_fail = (lhs - rhs, lambda, structured.to_rows());
        }
        table.push(vec![
            lambda.into(),
            am.into(),
            c_struct.into(),
            best.into(),
            lhs.into(),
            rhs.into(),
        ]);
    }
    verdicts.push(mass.finish().with_details(json!({ "lambdas": lambdas })));

    let mut found = Tally::new("counterexample2.c_q_positive", 0.0);
    found.le(
        C_Q_FLOOR,
        best_overall.0,
        || json!({ "lambda": best_overall.1, "q": best_overall.2, "c_q": best_overall.0 }),
    );
    let mut v = found.finish();
    v.details = json!({
        "kind": "lower-bound demonstration",
        "lambda": best_overall.1,
        "q": best_overall.2,
        "c_q": best_overall.0,
        "probes": pool.len() + 1,
    });
    verdicts.push(v);

    let mut fail = Tally::new("counterexample2.bound_fails_large_lambda", 0.0);
    fail.le(
        C_Q_FLOOR,
        theorem_fail.0,
        || json!({ "lambda": theorem_fail.1, "q": theorem_fail.2 }),
    );
    let mut v: Verdict = fail.finish();
    v.details = json!({
        "kind": "lower-bound demonstration",
        "lambda": theorem_fail.1,
        "q": theorem_fail.2,
        "lhs_minus_rhs": theorem_fail.0,
    });
    verdicts.push(v);

    Ok(SuiteResult {
        verdicts,
        tables: vec![table],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::Status;

    #[test]
    fn rectangle_coarse() {
        let r = run_counterexample_rectangle(&[0.1, 0.01], 400, 0, 4).unwrap();
        assert_eq!(r.verdicts[0].status, Status::Pass, "{:?}", r.verdicts[0]);
        let t = &r.tables[0];
        let f = t.numbers("F").unwrap();
        let closed = t.numbers("F_closed_form").unwrap();
        for (a, b) in f.iter().zip(&closed) {
            assert!((a - b).abs() / b < 0.05, "{a} vs {b}");
        }
        let ratio = t.numbers("ratio").unwrap();
        assert!(ratio[1] > ratio[0]);
    }

    #[test]
    fn segments_default() {
        let r = run_counterexample_segments(100, &default_segment_lambdas(), 30, 0, 4).unwrap();
        for v in &r.verdicts {
            assert_eq!(v.status, Status::Pass, "{v:?}");
        }
        let t = &r.tables[0];
        // closed form (1 + l)^2 / 4 - 1 for the structured probe, up to quadrature
        for (l, c) in t
            .numbers("lambda")
            .unwrap()
            .iter()
            .zip(t.numbers("c_q_structured").unwrap())
        {
            let exact = (1.0 + l).powi(2) / 4.0 - 1.0;
            assert!(
                (c - exact).abs() < 1e-3 * (1.0 + l).powi(2),
                "{l}: {c} vs {exact}"
            );
        }
    }
}
