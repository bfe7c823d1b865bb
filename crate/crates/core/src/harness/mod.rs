//! Verification suites, counterexample runs, reports and the `kmstab` CLI.

pub mod cli;
mod counterexamples;
mod instances;
mod report;
mod suites;

pub use counterexamples::{
    default_segment_lambdas, run_counterexample_rectangle, run_counterexample_segments, CENTER_TOL,
    C_Q_FLOOR, RATIO_FLOOR, RECTANGLE_EPS, REL_TOL, SEGMENT_CERT_RESOLUTIONS,
};
pub use instances::{
    check_grid, probes, random_instance, ExperimentSpec, Instance, MeasureSource, PROBE_SCALES,
};
pub use report::{
    emit_report, real, render_report, table_path, write_table_csv, write_verdicts_csv, Cell,
    Report, ReportFormat, Status, Table, Tally, Verdict, SCHEMA_VERSION, VERDICT_COLUMNS,
};
pub use suites::{
    bound_constant, verify_comparison_suite, verify_epsilon_minimizer, verify_geometry_suite,
    verify_solvers, verify_theorem_bound, SuiteResult, LLOYD_MATCH_SHARE, LLOYD_MATCH_TOL,
};
