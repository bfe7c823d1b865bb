//! Command-line interface.
//!
//! Exit codes: 0 when every verdict passes or is skipped, 1 when any fails,
//! 2 on usage or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::counterexamples::{
    default_segment_lambdas, run_counterexample_rectangle, run_counterexample_segments,
    RECTANGLE_EPS,
};
use super::instances::{ExperimentSpec, MeasureSource};
use super::report::{emit_report, real, render_report, Cell, Report, ReportFormat, Table, Tally};
use super::suites::{
    verify_comparison_suite, verify_epsilon_minimizer, verify_geometry_suite, verify_solvers,
    verify_theorem_bound, SuiteResult,
};
use crate::error::{Error, Result};
use crate::geometry::{Codebook, TAU_GEO};
use crate::measures::{
    grid_discretize, load, sample, DiscreteMeasure, MeasureFormat, NamedDistribution,
};
use crate::quantize::{exact_optimal, lloyd, LloydConfig, SolveResult, Uniqueness};
use crate::stability::{linspace, margin_profile, stability_report};

#[derive(Debug, Parser)]
#[command(
    name = "kmstab",
    version,
    about = "k-means stability functionals and margin checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Measure: `random`, `rectangle`, `segments`, or a CSV/JSON file.
    #[arg(long, global = true)]
    pub measure: Option<String>,
    /// Grid resolution (cells along the longest side) for named measures.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Draw this many samples from a named measure instead of a grid.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Probe codebooks per instance.
    #[arg(long, global = true)]
    pub probes: Option<usize>,
    /// Number of random or sampled instances.
    #[arg(long, global = true)]
    pub instances: Option<usize>,
    /// Lloyd restarts.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Slack allowed on checked inequalities.
    #[arg(long, global = true, default_value_t = TAU_GEO)]
    pub tol: f64,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal codebook, risk and uniqueness status.
    Optimal {
        #[arg(long, value_enum, default_value_t = Solver::Auto)]
        solver: Solver,
    },
    /// F1, F2, F, Hausdorff distance and excess risk of a codebook pair.
    Stability {
        /// Reference codebook (file or inline `x,y;x,y`); optimal if omitted.
        #[arg(long, allow_hyphen_values = true)]
        cstar: Option<String>,
        /// Codebook to compare.
        #[arg(long, allow_hyphen_values = true)]
        q: String,
    },
    /// lambda_n and the p, p* and A-mass curves.
    Margin {
        /// Largest t (defaults to half the maximal center separation).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 4.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 20)]
        grid_points: usize,
    },
    /// Verification suites.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Counterexample reproductions.
    Counterexample {
        #[command(subcommand)]
        which: Counterexample,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Solver {
    Auto,
    Exact,
    Lloyd,
}

#[derive(Debug, Subcommand)]
pub enum Suite {
    /// Stability bound on random probes.
    Theorem,
    /// Geometric inclusions, nestedness and Hausdorff relations.
    Geometry {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Inequalities between F, F1, F2, p and p*.
    Comparison,
    /// Bound for epsilon-minimizers of empirical measures.
    Epsilon {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1])]
        eps: Vec<f64>,
    },
    /// Exact solvers against each other and against Lloyd.
    Solvers,
}

#[derive(Debug, Subcommand)]
pub enum Counterexample {
    /// Uniform rectangle with tilted codebooks.
    Rectangle {
        #[arg(long, value_delimiter = ',', default_values_t = RECTANGLE_EPS)]
        eps: Vec<f64>,
    },
    /// Two parallel segments.
    Segments {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
}

const DEFAULT_RESOLUTION: usize = 400;

fn named(name: &str) -> Option<NamedDistribution> {
    match name {
        "rectangle" | "uniform_rectangle" => Some(NamedDistribution::standard_rectangle()),
        "segments" | "two_segments" => Some(NamedDistribution::TwoSegments),
        _ => None,
    }
}

impl Common {
    fn source(&self, default: &str) -> Result<MeasureSource> {
        let name = self.measure.as_deref().unwrap_or(default);
        if name == "random" {
            return Ok(MeasureSource::Random);
        }
        if let Some(dist) = named(name) {
            return Ok(match self.samples {
                Some(n) => MeasureSource::Samples { dist, n },
                None => MeasureSource::Grid {
                    dist,
                    resolution: self.resolution.unwrap_or(DEFAULT_RESOLUTION),
                },
            });
        }
        let path = PathBuf::from(name);
        if !path.exists() {
            return Err(Error::InvalidParameter(format!(
                "unknown measure {name:?}: expected random, rectangle, segments or an existing file"
            )));
        }
        Ok(MeasureSource::File { path })
    }

    /// A single measure (random sources are not allowed here).
    fn measure(&self) -> Result<DiscreteMeasure> {
        match self.source("rectangle")? {
            MeasureSource::Random => Err(Error::InvalidParameter(
                "this command needs a concrete measure".into(),
            )),
            MeasureSource::Grid { dist, resolution } => grid_discretize(&dist, resolution),
            MeasureSource::Samples { dist, n } => {
                DiscreteMeasure::from_samples(sample(&dist, n, self.seed)?)
            }
            MeasureSource::File { path } => load(&path, MeasureFormat::from_path(&path)),
        }
    }

    fn spec(
        &self,
        default_measure: &str,
        instances: usize,
        probes: usize,
        k: Option<usize>,
    ) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            source: self.source(default_measure)?,
            k: self.k.or(k),
            seed: self.seed,
            instances: self.instances.unwrap_or(instances),
            probes: self.probes.unwrap_or(probes),
            restarts: self.restarts.unwrap_or(20),
            tol: self.tol,
            ..Default::default()
        })
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "measure": self.measure,
            "resolution": self.resolution,
            "samples": self.samples,
            "seed": self.seed,
            "k": self.k,
            "probes": self.probes,
            "instances": self.instances,
            "restarts": self.restarts,
            "tol": self.tol,
        })
    }
}

fn solve(
    p: &DiscreteMeasure,
    k: usize,
    solver: Solver,
    seed: u64,
    restarts: usize,
) -> Result<(SolveResult, &'static str)> {
    let heuristic = || lloyd(p, k, &LloydConfig::seeded(seed, restarts)).map(|r| (r, "lloyd"));
    match solver {
        Solver::Lloyd => heuristic(),
        Solver::Exact => exact_optimal(p, k).map(|r| (r, "exact")),
        Solver::Auto => match exact_optimal(p, k) {
            Ok(r) => Ok((r, "exact")),
            Err(Error::TooLarge { .. }) => heuristic(),
            Err(e) => Err(e),
        },
    }
}

fn codebook_table(name: &str, c: &Codebook) -> Table {
    let mut cols = vec!["center".to_string()];
    cols.extend((1..=c.dim()).map(|i| format!("x_{i}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(name, &col_refs);
    for (j, row) in c.to_rows().into_iter().enumerate() {
        let mut r: Vec<Cell> = vec![(j as f64).into()];
        r.extend(row.into_iter().map(Cell::from));
        t.push(r);
    }
    t
}

/// Parses a codebook from a file (one center per line, optional header) or an
/// inline list `x,y;x,y`.
pub fn parse_codebook(arg: &str) -> Result<Codebook> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        arg.replace(';', "\n")
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::Malformed {
                    format: "codebook",
                    location: format!("line {}", i + 1),
                    message: format!("not a list of reals: {line:?}"),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty("codebook"));
    }
    Codebook::from_rows(rows)
}

fn k_required(common: &Common) -> Result<usize> {
    common
        .k
        .ok_or_else(|| Error::InvalidParameter("--k is required for this command".into()))
}

fn add(report: &mut Report, r: SuiteResult) {
    report.verdicts.extend(r.verdicts);
    report.tables.extend(r.tables);
}

/// Runs a parsed command and returns its report.
pub fn execute(cli: &Cli) -> Result<Report> {
    let c = &cli.common;
    let restarts = c.restarts.unwrap_or(10);
    match &cli.command {
        Command::Optimal { solver } => {
            let p = c.measure()?;
            let k = k_required(c)?;
            let (res, name) = solve(&p, k, *solver, c.seed, restarts)?;
            let mut report = Report::new(
                "optimal",
                extend(
                    c.params(),
                    json!({ "solver": format!("{solver:?}").to_lowercase() }),
                ),
            );
            report
                .tables
                .push(codebook_table("codebook", &res.codebook));
            let mut t = Table::new(
                "solve",
                &[
                    "solver",
                    "risk",
                    "uniqueness",
                    "iterations",
                    "converged",
                    "atoms",
                ],
            );
            t.push(vec![
                name.into(),
                res.risk.into(),
                res.uniqueness.label().into(),
                (res.iterations as f64).into(),
                (res.converged as u8 as f64).into(),
                (p.len() as f64).into(),
            ]);
            report.tables.push(t);
            if let Uniqueness::MultipleOptima { witness } = &res.uniqueness {
                report.tables.push(codebook_table("other_optimum", witness));
            }
            Ok(report)
        }
        Command::Stability { cstar, q } => {
            let p = c.measure()?;
            let q = parse_codebook(q)?;
            let cstar = match cstar {
                Some(s) => parse_codebook(s)?,
                None => solve(&p, q.k(), Solver::Auto, c.seed, restarts)?.0.codebook,
            };
            let r = stability_report(&p, &cstar, &q)?;
            let mut report = Report::new("stability", c.params());
            let mut t = Table::new(
                "stability",
                &[
                    "f1",
                    "f2",
                    "big_f",
                    "big_f2",
                    "hausdorff",
                    "excess_risk",
                    "matching",
                    "f2_matching",
                ],
            );
            let perm = |s: &[usize]| {
                s.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            t.push(vec![
                r.f1.into(),
                r.f2.into(),
                r.big_f2.sqrt().into(),
                r.big_f2.into(),
                r.hausdorff.into(),
                r.excess_risk.into(),
                perm(&r.matching).into(),
                perm(&r.f2_matching).into(),
            ]);
            report.tables.push(t);
            report.tables.push(codebook_table("cstar", &cstar));
            let mut dh = Tally::new("stability.hausdorff_le_f1", c.tol);
            dh.le(r.hausdorff, r.f1, || json!({}));
            report.verdicts.push(dh.finish());
            Ok(report)
        }
        Command::Margin {
            t_max,
            lambda_max,
            grid_points,
        } => {
            let p = c.measure()?;
            let k = k_required(c)?;
            if *grid_points < 1 || !(*lambda_max > 0.0) {
                return Err(Error::InvalidParameter(
                    "grid points and lambda_max must be positive".into(),
                ));
            }
            let (res, name) = solve(&p, k, Solver::Auto, c.seed, restarts)?;
            let mut optima = vec![res.codebook.clone()];
            if let Uniqueness::MultipleOptima { witness } = &res.uniqueness {
                optima.push(witness.clone());
            }
            let complete = name == "exact" && res.uniqueness.is_certified_unique();
            let big_m = res.codebook.max_separation().unwrap_or(1.0);
            let t_hi = t_max.unwrap_or(big_m / 2.0);
            if !(t_hi > 0.0) {
                return Err(Error::InvalidParameter("t_max must be positive".into()));
            }
            let prof = margin_profile(
                &p,
                &optima,
                complete,
                &linspace(t_hi, *grid_points),
                &linspace(*lambda_max, *grid_points),
            )?;
            let mut report = Report::new(
                "margin",
                extend(
                    c.params(),
                    json!({ "t_max": t_hi, "lambda_max": lambda_max, "grid_points": grid_points }),
                ),
            );
            let mut s = Table::new(
                "margin_summary",
                &[
                    "solver",
                    "uniqueness",
                    "lambda_n",
                    "lambda_n_atom",
                    "on_frontier",
                    "p_lower_bound",
                    "m",
                    "M",
                ],
            );
            s.push(vec![
                name.into(),
                res.uniqueness.label().into(),
                prof.lambda_n.value.into(),
                prof.lambda_n.atom.map_or(f64::NAN, |a| a as f64).into(),
                (prof.lambda_n.on_frontier as u8 as f64).into(),
                (prof.p_is_lower_bound as u8 as f64).into(),
                res.codebook.min_separation().unwrap_or(f64::NAN).into(),
                res.codebook.max_separation().unwrap_or(f64::NAN).into(),
            ]);
            report.tables.push(s);
            let mut mono = Tally::new("margin.monotone_curves", 0.0);
            for (name, curve, increasing) in [
                ("p_curve", &prof.p_curve, true),
                ("p_star_curve", &prof.p_star_curve, true),
                ("a_mass_curve", &prof.a_mass_curve, false),
            ] {
                let (x, y) = if increasing {
                    ("t", name.trim_end_matches("_curve"))
                } else {
                    ("lambda", "a_mass")
                };
                let mut t = Table::new(name, &[x, y]);
                for &(a, b) in curve.iter() {
                    t.push(vec![a.into(), b.into()]);
                }
                for w in curve.windows(2) {
                    let (lo, hi) = if increasing {
                        (w[0].1, w[1].1)
                    } else {
                        (w[1].1, w[0].1)
                    };
                    mono.le(lo, hi, || json!({ "curve": name, "at": real(w[1].0) }));
                }
                report.tables.push(t);
            }
            report.tables.push(codebook_table("cstar", &res.codebook));
            report.verdicts.push(mono.finish());
            Ok(report)
        }
        Command::Verify { suite } => {
            let (name, result, extra) = match suite {
                Suite::Theorem => (
                    "verify theorem",
                    verify_theorem_bound(&c.spec("random", 100, 200, None)?)?,
                    json!({}),
                ),
                Suite::Comparison => (
                    "verify comparison",
                    verify_comparison_suite(&c.spec("random", 50, 50, None)?)?,
                    json!({}),
                ),
                Suite::Solvers => (
                    "verify solvers",
                    verify_solvers(&c.spec("random", 100, 0, None)?)?,
                    json!({}),
                ),
                Suite::Geometry { trials } => (
                    "verify geometry",
                    verify_geometry_suite(c.seed, *trials, c.tol)?,
                    json!({ "trials": trials }),
                ),
                Suite::Epsilon { eps } => {
                    let mut spec = c.spec("rectangle", 50, 0, Some(2))?;
                    if c.measure.is_none() && c.samples.is_none() {
                        spec.source = MeasureSource::Samples {
                            dist: NamedDistribution::standard_rectangle(),
                            n: 12,
                        };
                    }
                    spec.eps_grid = eps.clone();
                    (
                        "verify epsilon",
                        verify_epsilon_minimizer(&spec)?,
                        json!({ "eps": eps }),
                    )
                }
            };
            let mut report = Report::new(name, extend(c.params(), extra));
            add(&mut report, result);
            Ok(report)
        }
        Command::Counterexample { which } => match which {
            Counterexample::Rectangle { eps } => {
                if eps.iter().any(|&e| !(e > 0.0 && e < 0.5)) {
                    return Err(Error::InvalidParameter("eps must lie in (0, 1/2)".into()));
                }
                let resolution = c.resolution.unwrap_or(DEFAULT_RESOLUTION);
                let mut report = Report::new(
                    "counterexample rectangle",
                    extend(
                        c.params(),
                        json!({ "eps": eps, "resolution_used": resolution }),
                    ),
                );
                add(
                    &mut report,
                    run_counterexample_rectangle(eps, resolution, c.seed, restarts)?,
                );
                Ok(report)
            }
            Counterexample::Segments { lambdas } => {
                let lambdas = lambdas.clone().unwrap_or_else(default_segment_lambdas);
                if lambdas.iter().any(|&l| !(l >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "lambdas must be nonnegative".into(),
                    ));
                }
                let resolution = c.resolution.unwrap_or(DEFAULT_RESOLUTION);
                let probes = c.probes.unwrap_or(200);
                let mut report = Report::new(
                    "counterexample segments",
                    extend(
                        c.params(),
                        json!({ "lambdas": lambdas, "resolution_used": resolution }),
                    ),
                );
                add(
                    &mut report,
                    run_counterexample_segments(resolution, &lambdas, probes, c.seed, restarts)?,
                );
                Ok(report)
            }
        },
    }
}

fn extend(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (serde_json::Value::Object(a), serde_json::Value::Object(b)) = (&mut base, extra) {
        a.extend(b);
    }
    base
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let emitted = match &cli.common.out {
        Some(path) => emit_report(&report, path, cli.common.format).map(|files| {
            for v in &report.verdicts {
                eprintln!("{:<8} {}", v.status.label().to_uppercase(), v.check);
            }
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }),
        None => render_report(&report, cli.common.format).map(|s| print!("{s}")),
    };
    if let Err(e) = emitted {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if report.any_fail() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_and_file_codebooks() {
        let c = parse_codebook("-0.5,0;0.5,0").unwrap();
        assert_eq!(c.to_rows(), vec![vec![-0.5, 0.0], vec![0.5, 0.0]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "x_1,x_2\n0,1\n0,-1\n").unwrap();
        assert_eq!(parse_codebook(path.to_str().unwrap()).unwrap().k(), 2);
        assert!(parse_codebook("1,2;x,3").is_err());
        assert!(parse_codebook("1,2;1,2").is_err());
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from([
            "kmstab",
            "verify",
            "epsilon",
            "--eps",
            "0.001,0.01",
            "--seed",
            "3",
        ])
        .unwrap();
        assert_eq!(cli.common.seed, 3);
        match cli.command {
            Command::Verify {
                suite: Suite::Epsilon { eps },
            } => assert_eq!(eps, vec![0.001, 0.01]),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["kmstab", "verify", "nonsense"]).is_err());
    }

    #[test]
    fn optimal_on_small_grid() {
        let cli = Cli::try_parse_from([
            "kmstab",
            "optimal",
            "--measure",
            "segments",
            "--resolution",
            "5",
            "--k",
            "2",
        ])
        .unwrap();
        let r = execute(&cli).unwrap();
        let t = r.table("solve").unwrap();
        assert_eq!(t.rows[0][2], Cell::Text("certified_unique".into()));
    }
}
