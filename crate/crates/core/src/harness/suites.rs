//! Numerical verification suites.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::instances::{jitter, probes, random_instance, ExperimentSpec, Instance, MeasureSource};
use super::report::{real, Cell, Table, Tally, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{
    frontier_distance, in_a_lambda, inflate, lambda_max, nn_assign, sq_dist, Codebook, Point,
};
use crate::quantize::{derive_seed, exact_optimal, lloyd, risk, Init, LloydConfig};
use crate::stability::{
    big_f_squared, c_q_lambda, certified_margin, confusion, f1, hausdorff, lambda_n, p_of_t,
    p_star, stability_report,
};

/// Verdicts and tables produced by a suite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteResult {
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
}

/// Relative agreement required between Lloyd and the exact risk.
pub const LLOYD_MATCH_TOL: f64 = 1e-9;

/// Share of instances on which Lloyd must reach the exact optimum.
pub const LLOYD_MATCH_SHARE: f64 = 0.95;

fn extend(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut base, extra) {
        a.extend(b);
    }
    base
}

fn rows(c: &Codebook) -> Value {
    json!(c.to_rows())
}

/// Constant `(1 + l) / l` of the stability bound, `1` for infinite `l`.
pub fn bound_constant(lambda: f64) -> f64 {
    if lambda.is_infinite() {
        1.0
    } else {
        (1.0 + lambda) / lambda
    }
}

fn count_skip(skips: &mut BTreeMap<String, usize>, reason: &str) {
    *skips.entry(reason.to_string()).or_default() += 1;
}

fn aggregate(
    name: &str,
    tallies: Vec<Tally>,
    tol: f64,
    skips: &BTreeMap<String, usize>,
) -> Verdict {
    let mut total = Tally::new(name, tol);
    for t in tallies {
        total.merge(t);
    }
    if total.evaluations() == 0 {
        let reason = if skips.is_empty() {
            "no applicable cases".to_string()
        } else {
            skips
                .iter()
                .map(|(r, n)| format!("{r} ({n})"))
                .collect::<Vec<_>>()
                .join("; ")
        };
        return Verdict::skipped(name, reason);
    }
    total.finish()
}

/// Exact optimum, or `None` with a reason when enumeration is out of reach.
fn exact_or_skip(
    inst: &Instance,
) -> Result<std::result::Result<crate::quantize::SolveResult, String>> {
    match exact_optimal(&inst.measure, inst.k) {
        Ok(r) => Ok(Ok(r)),
        Err(Error::TooLarge { reason, .. }) => {
            Ok(Err(format!("exact optimum out of reach: {reason}")))
        }
        Err(e) => Err(e),
    }
}

/// Exact enumeration vs the 1-D dynamic program, and Lloyd vs both.
pub fn verify_solvers(spec: &ExperimentSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let instances = spec.instances()?;
    struct Out {
        dp: Tally,
        lloyd_ok: bool,
        row: Vec<Cell>,
    }
    let outs: Vec<Out> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> Result<Out> {
            let p = &inst.measure;
            let exact = crate::quantize::exact_optimal_enum(p, inst.k)?;
            let mut dp = Tally::new("solvers.exact_agreement", spec.tol);
            let mut dp_risk = f64::NAN;
            if p.dim() == 1 {
                let r = crate::quantize::exact_optimal_1d(p, inst.k)?;
                dp_risk = r.risk;
                dp.le((r.risk - exact.risk).abs(), 0.0, || inst.witness());
            }
            let cfg = LloydConfig::seeded(
                derive_seed(spec.seed ^ inst.seed.unwrap_or(i as u64), 1),
                spec.restarts,
            );
            let l = lloyd(p, inst.k, &cfg)?;
            let lloyd_ok = (l.risk - exact.risk).abs() <= LLOYD_MATCH_TOL * exact.risk.max(1.0);
            Ok(Out {
                dp,
                lloyd_ok,
                row: vec![
                    inst.label.clone().into(),
                    (p.len() as f64).into(),
                    (p.dim() as f64).into(),
                    (inst.k as f64).into(),
                    exact.risk.into(),
                    dp_risk.into(),
                    l.risk.into(),
                    exact.uniqueness.label().into(),
                ],
            })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        "solvers",
        &[
            "instance",
            "n",
            "d",
            "k",
            "exact_risk",
            "dp_risk",
            "lloyd_risk",
            "uniqueness",
        ],
    );
    let mut tallies = Vec::new();
    let mut matched = 0;
    for o in outs {
        matched += o.lloyd_ok as usize;
        tallies.push(o.dp);
        table.push(o.row);
    }
    let n = instances.len();
    let needed = (LLOYD_MATCH_SHARE * n as f64).ceil() as usize;
    let mut lt = Tally::new("solvers.lloyd_matches_exact", 0.0);
    lt.le(
        needed as f64,
        matched as f64,
        || json!({ "matched": matched, "instances": n }),
    );
    let mut lv = lt.finish();
    lv.details = json!({ "matched": matched, "instances": n, "required": needed, "restarts": spec.restarts });
    let mut dv = aggregate(
        "solvers.exact_agreement",
        tallies,
        spec.tol,
        &BTreeMap::new(),
    );
    dv.details = json!({ "instances": n });
    Ok(SuiteResult {
        verdicts: vec![dv, lv],
        tables: vec![table],
    })
}

/// Checks `F^2 <= (1 + l)/l (R(q) - R*)` on random probes.
///
/// `l` is the certified margin of [`certified_margin`], which never exceeds
/// `lambda_n`. Violations of the same inequality with `lambda_n` itself are
/// counted separately and reported in the details.
pub fn verify_theorem_bound(spec: &ExperimentSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let instances = spec.instances()?;
    enum Out {
        Skip(String, Vec<Cell>),
        Done {
            bound: Tally,
            c_q: Tally,
            literal: usize,
            row: Vec<Cell>,
        },
    }
    let outs: Vec<Out> = instances
        .par_iter()
        .map(|inst| -> Result<Out> {
            let p = &inst.measure;
            let base_row = |status: &str| -> Vec<Cell> {
                vec![
                    inst.label.clone().into(),
                    (p.len() as f64).into(),
                    (p.dim() as f64).into(),
                    (inst.k as f64).into(),
                    status.into(),
                ]
            };
            let skip = |reason: String| {
                let mut row = base_row("skipped");
                row.extend([f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), 0.0.into(), 0.0.into()]);
                Out::Skip(reason, row)
            };
            let opt = match exact_or_skip(inst)? {
                Ok(o) => o,
                Err(reason) => return Ok(skip(reason)),
            };
            if !opt.uniqueness.is_certified_unique() {
                return Ok(skip("optimum not certified unique".into()));
            }
            let cstar = &opt.codebook;
            let ln = lambda_n(p, cstar)?;
            if ln.on_frontier {
                return Ok(skip("lambda_n = 0: an atom lies on the frontier".into()));
            }
            let cm = certified_margin(p, cstar)?;
            if cm.value <= 0.0 {
                return Ok(skip("no positive certified margin".into()));
            }
            let constant = bound_constant(cm.value);
            let literal_constant = bound_constant(ln.value);
            let mut bound = Tally::new("theorem.bound", spec.tol);
            let mut c_q = Tally::new("theorem.c_q_nonpositive", spec.tol);
            let mut literal = 0;
            let mut worst_ratio: f64 = 0.0;
            let mut list = vec![cstar.clone()];
            list.extend(probes(cstar, p, spec.probes, inst.probe_seed(spec.seed)));
            for (j, q) in list.iter().enumerate() {
                let lhs = big_f_squared(p, cstar, q)?;
                let excess = risk(p, q)? - opt.risk;
                if excess > 0.0 {
                    worst_ratio = worst_ratio.max(lhs / excess);
                }
                let witness = || {
                    extend(
                        inst.witness(),
                        json!({ "cstar": rows(cstar), "probe": j, "q": rows(q), "lambda": real(cm.value) }),
                    )
                };
                bound.le(lhs, constant * excess, witness);
                if lhs > literal_constant * excess + spec.tol {
                    literal += 1;
                }
                if cm.value.is_finite() {
                    let v = c_q_lambda(p, cstar, q, cm.value)?;
                    c_q.le(v, 0.0, witness);
                }
            }
            let mut row = base_row("checked");
            row.extend([
                ln.value.into(),
                cm.value.into(),
                constant.into(),
                worst_ratio.into(),
                (bound.violations() as f64).into(),
                (literal as f64).into(),
            ]);
            Ok(Out::Done { bound, c_q, literal, row })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        "theorem",
        &[
            "instance",
            "n",
            "d",
            "k",
            "status",
            "lambda_n",
            "lambda_0",
            "constant",
            "max_ratio",
            "violations",
            "lambda_n_violations",
        ],
    );
    let mut skips = BTreeMap::new();
    let (mut bounds, mut cqs) = (Vec::new(), Vec::new());
    let mut literal_total = 0;
    let mut certified = 0;
    for o in outs {
        match o {
            Out::Skip(reason, row) => {
                count_skip(&mut skips, &reason);
                table.push(row);
            }
            Out::Done {
                bound,
                c_q,
                literal,
                row,
            } => {
                certified += 1;
                bounds.push(bound);
                cqs.push(c_q);
                literal_total += literal;
                table.push(row);
            }
        }
    }
    let details = json!({
        "instances": instances.len(),
        "certified": certified,
        "skipped": skips,
        "margin": "certified (optimum of the inflated measure), <= lambda_n",
        "lambda_n_violations": literal_total,
        "uniqueness": "assuming uniqueness: optimum of P certified by enumeration",
    });
    Ok(SuiteResult {
        verdicts: vec![
            aggregate("theorem.bound", bounds, spec.tol, &skips).with_details(details),
            aggregate("theorem.c_q_nonpositive", cqs, spec.tol, &skips),
        ],
        tables: vec![table],
    })
}

#[derive(Default)]
struct GeometryTallies {
    inc1: Option<Tally>,
    inc2: Option<Tally>,
    nested: Option<Tally>,
    inflation: Option<Tally>,
    dh_le: Option<Tally>,
    dh_eq: Option<Tally>,
}

const GEOMETRY_CHECKS: [&str; 6] = [
    "geometry.inclusion_1",
    "geometry.inclusion_2",
    "geometry.nested",
    "geometry.inflation_agreement",
    "geometry.hausdorff_le_f1",
    "geometry.hausdorff_eq_f1",
];

/// Width of the squared-distance band treated as a tie when comparing
/// membership in `A(lambda)` with direct inflation.
const TIE_BAND: f64 = 1e-7;

fn random_codebook(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Codebook {
    loop {
        let r: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        if let Ok(c) = Codebook::from_rows(r) {
            return c;
        }
    }
}

fn geometry_trial(seed: u64, tol: f64) -> Result<[Tally; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: [Tally; 6] = GEOMETRY_CHECKS.map(|n| Tally::new(n, tol));
    let d = rng.random_range(1..=3usize);
    let k = rng.random_range(2..=4usize);
    let c = random_codebook(&mut rng, k, d);
    let x = Point::new((0..d).map(|_| rng.random_range(-1.5..1.5)).collect())?;
    let (m, big_m) = (c.min_separation().unwrap(), c.max_separation().unwrap());
    let fd = frontier_distance(&x, &c)?;
    let lm = lambda_max(&x, &c)?;
    let base = || json!({ "seed": seed, "x": x.coords(), "c": rows(&c) });
    // squash lambda into [0, 1] so large values compare with an absolute tolerance
    let squash = |l: f64| if l.is_infinite() { 1.0 } else { l / (1.0 + l) };

    // inclusion 1: outside the t-neighbourhood of the frontier => in A(2t / (M - 2t))
    let half = big_m / 2.0;
    let tt = if rng.random_bool(0.5) && fd > 0.0 {
        rng.random::<f64>() * fd.min(half)
    } else {
        rng.random::<f64>() * half
    };
    if tt > 0.0 && tt < half && fd > tt {
        let l = 2.0 * tt / (big_m - 2.0 * tt);
        t[0].le(squash(l), squash(lm), || {
            extend(base(), json!({ "t": tt, "lambda": l }))
        });
    }

    // inclusion 2: in A(l) => frontier distance >= m l / (2 (1 + l))
    for l in [
        if lm.is_finite() {
            lm
        } else {
            10.0 * rng.random::<f64>()
        },
        rng.random::<f64>() * lm.min(10.0),
        5.0 * rng.random::<f64>(),
    ] {
        if l > 0.0 && in_a_lambda(&x, &c, l)? {
            let b = m * l / (2.0 * (1.0 + l));
            t[1].le(b, fd, || extend(base(), json!({ "lambda": real(l) })));
        }
    }

    // nestedness
    let (mut a, mut b) = (5.0 * rng.random::<f64>(), 5.0 * rng.random::<f64>());
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if in_a_lambda(&x, &c, b)? {
        let ok = in_a_lambda(&x, &c, a)?;
        t[2].holds(ok, || {
            extend(base(), json!({ "lambda_small": a, "lambda_large": b }))
        });
    }

    // agreement with direct inflation, away from ties
    let l = 3.0 * rng.random::<f64>();
    let cell = nn_assign(&x, &c)?;
    let moved = inflate(x.coords(), c.center(cell).coords(), l);
    let mut d2: Vec<f64> = c
        .centers()
        .iter()
        .map(|z| sq_dist(&moved, z.coords()))
        .collect();
    let stays = d2
        .iter()
        .enumerate()
        .all(|(j, &v)| j == cell || v > d2[cell]);
    d2.sort_by(f64::total_cmp);
    let scale = 1.0 + d2[0];
    if d2[1] - d2[0] > TIE_BAND * scale {
        let ok = in_a_lambda(&x, &c, l)? == stays;
        t[3].holds(ok, || extend(base(), json!({ "lambda": l })));
    }

    // Hausdorff distance vs F1
    let other = if rng.random_bool(0.7) {
        let s = m * 10f64.powf(rng.random_range(-3.0..0.0));
        let mut r = jitter(&c.to_rows(), s, &mut rng);
        let shift = rng.random_range(0..k);
        r.rotate_left(shift);
        Codebook::from_rows(r).unwrap_or_else(|_| c.clone())
    } else {
        random_codebook(&mut rng, k, d)
    };
    let dh = hausdorff(&c, &other)?;
    let (v1, _) = f1(&c, &other)?;
    let w = || extend(base(), json!({ "other": rows(&other) }));
    t[4].le(dh, v1, w);
    if dh < m / 2.0 {
        t[5].le((dh - v1).abs(), 0.0, w);
    }
    Ok(t)
}

/// Seeded property checks of the cell-geometry facts.
pub fn verify_geometry_suite(seed: u64, trials: usize, tol: f64) -> Result<SuiteResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let results: Vec<[Tally; 6]> = (0..trials)
        .into_par_iter()
        .map(|i| geometry_trial(derive_seed(seed, i), tol))
        .collect::<Result<_>>()?;
    let mut acc = GeometryTallies::default();
    for r in results {
        for (slot, tally) in [
            &mut acc.inc1,
            &mut acc.inc2,
            &mut acc.nested,
            &mut acc.inflation,
            &mut acc.dh_le,
            &mut acc.dh_eq,
        ]
        .into_iter()
        .zip(r)
        {
            match slot {
                Some(s) => s.merge(tally),
                None => *slot = Some(tally),
            }
        }
    }
    let verdicts = [
        acc.inc1,
        acc.inc2,
        acc.nested,
        acc.inflation,
        acc.dh_le,
        acc.dh_eq,
    ]
    .into_iter()
    .zip(GEOMETRY_CHECKS)
    .map(|(t, name)| {
        let t = t.expect("at least one trial");
        if t.evaluations() == 0 {
            Verdict::skipped(name, "no applicable cases")
        } else {
            t.finish().with_details(json!({ "trials": trials }))
        }
    })
    .collect();
    Ok(SuiteResult {
        verdicts,
        tables: Vec::new(),
    })
}

const COMPARISON_CHECKS: [&str; 6] = [
    "comparison.sandwich_upper",
    "comparison.sandwich_lower",
    "comparison.p_min_lower",
    "comparison.proposition",
    "comparison.p_below_p_star",
    "comparison.bridge",
];

/// Grid points in each `t` sweep.
const T_STEPS: usize = 10;

/// Instances with a certified-unique exact optimum. Random sources keep
/// drawing until `spec.instances` are found (at most 20 times as many).
fn certified_instances(
    spec: &ExperimentSpec,
) -> Result<(Vec<(Instance, Codebook)>, BTreeMap<String, usize>)> {
    let mut skips = BTreeMap::new();
    let mut out = Vec::new();
    let candidates: Box<dyn Iterator<Item = Instance>> = match spec.source {
        MeasureSource::Random => Box::new(
            (0..spec.instances * 20).map(|i| random_instance(derive_seed(spec.seed, i), spec.k)),
        ),
        _ => Box::new(spec.instances()?.into_iter()),
    };
    for inst in candidates {
        if out.len() == spec.instances {
            break;
        }
        match exact_or_skip(&inst)? {
            Ok(opt) if opt.uniqueness.is_certified_unique() => out.push((inst, opt.codebook)),
            Ok(_) => count_skip(&mut skips, "optimum not certified unique"),
            Err(reason) => count_skip(&mut skips, &reason),
        }
    }
    Ok((out, skips))
}

/// The comparison inequalities between `F`, `F1`, `F2`, `p` and `p*`.
pub fn verify_comparison_suite(spec: &ExperimentSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let (instances, skips) = certified_instances(spec)?;
    let outs: Vec<([Tally; 6], Vec<Vec<Cell>>)> = instances
        .par_iter()
        .map(|(inst, cstar)| -> Result<_> {
            let p = &inst.measure;
            let mut t: [Tally; 6] = COMPARISON_CHECKS.map(|n| Tally::new(n, spec.tol));
            let (m, big_m) = (
                cstar.min_separation().unwrap(),
                cstar.max_separation().unwrap(),
            );
            let cells = confusion(p, cstar, cstar)?;
            let p_min = (0..cstar.k())
                .map(|j| cells[j][j])
                .fold(f64::INFINITY, f64::min);
            let optima = std::slice::from_ref(cstar);
            let base = || extend(inst.witness(), json!({ "cstar": rows(cstar) }));

            let mut list = vec![cstar.clone()];
            list.extend(probes(cstar, p, spec.probes, inst.probe_seed(spec.seed)));
            for (j, q) in list.iter().enumerate() {
                let r = stability_report(p, cstar, q)?;
                let (g, a, b) = (r.big_f2, r.f1, r.f2);
                let w = || {
                    extend(
                        base(),
                        json!({ "probe": j, "q": rows(q), "f1": a, "f2": b, "big_f2": g }),
                    )
                };
                if a < m {
                    t[0].le(g, a * a + b * (a + big_m).powi(2), w);
                    t[1].le(b * (m - a).powi(2), g, w);
                }
                if a <= m / 2.0 {
                    t[2].le(p_min * a * a, g, w);
                }
                let rhs = if a > 0.0 {
                    a * a + p_star(p, cstar, a)? * (big_m + a).powi(2)
                } else {
                    0.0
                };
                t[3].le(g, rhs, w);
            }

            let mut curve = Vec::new();
            let diameter = p.enclosing_diameter();
            for s in 1..T_STEPS {
                let tt = m / 4.0 * s as f64 / T_STEPS as f64;
                let (pt, ps) = (p_of_t(p, optima, tt)?, p_star(p, cstar, 2.0 * tt)?);
                t[4].le(pt, ps, || extend(base(), json!({ "t": tt })));
            }
            for s in 1..=T_STEPS {
                let tt = m * s as f64 / T_STEPS as f64;
                let ps = p_star(p, cstar, tt)?;
                let arg = (2.0 * diameter * tt + 2.0 * tt * tt) / m;
                let pt = p_of_t(p, optima, arg)?;
                t[5].le(ps, pt, || extend(base(), json!({ "t": tt, "R": diameter })));
                curve.push(vec![
                    inst.label.clone().into(),
                    tt.into(),
                    p_of_t(p, optima, tt)?.into(),
                    ps.into(),
                ]);
            }
            Ok((t, curve))
        })
        .collect::<Result<_>>()?;

    let mut per_check: Vec<Vec<Tally>> = (0..6).map(|_| Vec::new()).collect();
    let mut table = Table::new("margin_curves", &["instance", "t", "p", "p_star"]);
    for (tallies, curve) in outs {
        for (i, t) in tallies.into_iter().enumerate() {
            per_check[i].push(t);
        }
        for row in curve {
            table.push(row);
        }
    }
    let details = json!({ "instances": instances.len(), "probes": spec.probes, "skipped": skips });
    let verdicts = per_check
        .into_iter()
        .zip(COMPARISON_CHECKS)
        .map(|(ts, name)| aggregate(name, ts, spec.tol, &skips).with_details(details.clone()))
        .collect();
    Ok(SuiteResult {
        verdicts,
        tables: vec![table],
    })
}

/// Random directions per `eps` for the perturbed minimizers.
const DIRECTIONS: usize = 4;
/// Iteration budgets of the early-stopped Lloyd minimizers.
const EARLY_STOPS: [usize; 3] = [1, 2, 3];

/// Codebook at distance `s` from `base` along `dir`, if its centers are distinct.
fn shifted(base: &[Vec<f64>], dir: &[Vec<f64>], s: f64) -> Option<Codebook> {
    let r = base
        .iter()
        .zip(dir)
        .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + s * y).collect())
        .collect();
    Codebook::from_rows(r).ok()
}

/// Pushes `chat` along `dir` until its excess risk reaches `eps`; returns the
/// last codebook whose excess does not exceed `eps`.
fn perturb_to_excess(
    p: &crate::DiscreteMeasure,
    chat: &Codebook,
    r_hat: f64,
    dir: &[Vec<f64>],
    eps: f64,
) -> Result<Codebook> {
    let base = chat.to_rows();
    let excess = |s: f64| -> Result<Option<f64>> {
        match shifted(&base, dir, s) {
            Some(c) => Ok(Some(risk(p, &c)? - r_hat)),
            None => Ok(None),
        }
    };
    let (mut lo, mut hi) = (0.0, 1e-3);
    while hi < 1e3 {
        match excess(hi)? {
            Some(e) if e <= eps => {
                lo = hi;
                hi *= 2.0;
            }
            _ => break,
        }
    }
    if hi < 1e3 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match excess(mid)? {
                Some(e) if e <= eps => lo = mid,
                _ => hi = mid,
            }
        }
    }
    Ok(shifted(&base, dir, lo).unwrap_or_else(|| chat.clone()))
}

/// Checks `F(q_hat, q_eps)^2 <= (1 + l)/l eps` for epsilon-minimizers of
/// empirical measures.
pub fn verify_epsilon_minimizer(spec: &ExperimentSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let instances = spec.instances()?;
    enum Out {
        Skip(String),
        Done {
            tally: Tally,
            literal: usize,
            rows: Vec<Vec<Cell>>,
        },
    }
    let outs: Vec<Out> = instances
        .par_iter()
        .map(|inst| -> Result<Out> {
            let p = &inst.measure;
            let opt = match exact_or_skip(inst)? {
                Ok(o) => o,
                Err(reason) => return Ok(Out::Skip(reason)),
            };
            if !opt.uniqueness.is_certified_unique() {
                return Ok(Out::Skip("optimum not certified unique".into()));
            }
            let chat = &opt.codebook;
            let ln = lambda_n(p, chat)?;
            if ln.on_frontier {
                return Ok(Out::Skip(
                    "lambda_n = 0: an atom lies on the frontier".into(),
                ));
            }
            let cm = certified_margin(p, chat)?;
            if cm.value <= 0.0 {
                return Ok(Out::Skip("no positive certified margin".into()));
            }
            let constant = bound_constant(cm.value);
            let literal_constant = bound_constant(ln.value);
            let mut tally = Tally::new("corollary.epsilon_minimizer", spec.tol);
            let mut literal = 0;
            let mut rows_out = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(inst.probe_seed(spec.seed));
            let base = || {
                extend(
                    inst.witness(),
                    json!({ "q_hat": rows(chat), "lambda": real(cm.value) }),
                )
            };

            for &eps in &spec.eps_grid {
                let mut candidates: Vec<(String, Codebook)> = Vec::new();
                if eps == 0.0 {
                    candidates.push(("optimum".into(), chat.clone()));
                } else {
                    for dnum in 0..DIRECTIONS {
                        let dir = jitter(&vec![vec![0.0; p.dim()]; inst.k], 1.0, &mut rng);
                        candidates.push((
                            format!("perturbed#{dnum}"),
                            perturb_to_excess(p, chat, opt.risk, &dir, eps)?,
                        ));
                    }
                    for &iters in &EARLY_STOPS {
                        let cfg = LloydConfig {
                            max_iter: iters,
                            restarts: 1,
                            init: Init::KMeansPlusPlus { seed: rng.random() },
                            ..Default::default()
                        };
                        let q = lloyd(p, inst.k, &cfg)?.codebook;
                        if risk(p, &q)? - opt.risk <= eps {
                            candidates.push((format!("lloyd_iter{iters}"), q));
                        }
                    }
                }
                for (kind, q) in candidates {
                    let lhs = big_f_squared(p, chat, &q)?;
                    let excess = risk(p, &q)? - opt.risk;
                    tally.le(lhs, constant * eps, || {
                        extend(base(), json!({ "eps": eps, "kind": kind, "q": rows(&q) }))
                    });
                    if lhs > literal_constant * eps + spec.tol {
                        literal += 1;
                    }
                    rows_out.push(vec![
                        inst.label.clone().into(),
                        eps.into(),
                        kind.into(),
                        excess.into(),
                        lhs.into(),
                        (constant * eps).into(),
                        constant.into(),
                        ln.value.into(),
                    ]);
                }
            }
            Ok(Out::Done {
                tally,
                literal,
                rows: rows_out,
            })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        "epsilon",
        &[
            "instance", "eps", "kind", "excess", "big_f2", "bound", "constant", "lambda_n",
        ],
    );
    let mut skips = BTreeMap::new();
    let mut tallies = Vec::new();
    let mut literal_total = 0;
    for o in outs {
        match o {
            Out::Skip(r) => count_skip(&mut skips, &r),
            Out::Done {
                tally,
                literal,
                rows,
            } => {
                tallies.push(tally);
                literal_total += literal;
                for r in rows {
                    table.push(r);
                }
            }
        }
    }
    let details = json!({
        "instances": instances.len(),
        "checked": tallies.len(),
        "skipped": skips,
        "eps": spec.eps_grid,
        "margin": "certified (optimum of the inflated measure), <= lambda_n",
        "lambda_n_violations": literal_total,
    });
    Ok(SuiteResult {
        verdicts: vec![
            aggregate("corollary.epsilon_minimizer", tallies, spec.tol, &skips)
                .with_details(details),
        ],
        tables: vec![table],
    })
}
