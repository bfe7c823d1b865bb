//! k-means quantization over `R^d`, the stability functionals comparing a
//! quantizer to an optimal one, margin conditions on the underlying measure,
//! and a harness that checks the associated inequalities numerically.
//!
//! Module map:
//!
//! - [`geometry`]: points, codebooks, Voronoi assignment, bisector margins, `A(lambda)`.
//! - [`measures`]: finitely supported probability measures, samplers, grid quadrature, file I/O.
//! - [`quantize`]: risk, Lloyd's algorithm, exact optimal codebooks for small instances.
//! - [`stability`]: `F1`, `F2`, `F`, Hausdorff distance, `p(t)`, `p*(t)`, `lambda_n`, `c_q(lambda)`.
//! - [`harness`]: verification suites, counterexample reproduction, reports and the CLI.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod measures;
pub mod quantize;
pub mod stability;

pub use error::{Error, Result};
pub use geometry::{Codebook, Point, TAU_GEO};
pub use measures::{DiscreteMeasure, NamedDistribution};
