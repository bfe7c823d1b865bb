//! Points, codebooks and Voronoi geometry in finite-dimensional Euclidean space.
//!
//! Every codebook induces a nearest-neighbour quantizer. Ties between
//! equidistant centers are resolved toward the lowest index, so the cells
//! returned by [`nn_assign`] always form a partition of space.
//!
//! Floating comparisons between squared distances use the absolute tolerance
//! [`TAU_GEO`]; [`nn_assign_with_tol`] accepts a different value.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance on squared-distance differences.
pub const TAU_GEO: f64 = 1e-9;

/// A point of `R^d` with finite coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        sq_dist(&self.0, &other.0)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    /// Lexicographic comparison using the IEEE total order on each coordinate.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        lex_cmp(&self.0, &other.0)
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty() && coords.iter().all(|v| v.is_finite()));
        Point(coords)
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// An ordered set of `k >= 1` pairwise distinct centers of equal dimension.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Codebook {
    centers: Vec<Point>,
}

impl Codebook {
    pub fn new(centers: Vec<Point>) -> Result<Self> {
        let first = centers.first().ok_or(Error::Empty("codebook"))?;
        let dim = first.dim();
        for c in &centers {
            check_dim(dim, c.dim())?;
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if centers[i] == centers[j] {
                    return Err(Error::DuplicateCenter(i, j));
                }
            }
        }
        Ok(Codebook { centers })
    }

    /// Builds a codebook from raw coordinate rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let centers = rows
            .into_iter()
            .map(Point::new)
            .collect::<Result<Vec<_>>>()?;
        Codebook::new(centers)
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> &Point {
        &self.centers[i]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.centers.iter().map(|c| c.coords().to_vec()).collect()
    }

    /// Minimal pairwise center distance `m(c)`; `None` when `k = 1`.
    pub fn min_separation(&self) -> Option<f64> {
        self.pair_distances().reduce(f64::min)
    }

    /// Maximal pairwise center distance `M(c)`; `None` when `k = 1`.
    pub fn max_separation(&self) -> Option<f64> {
        self.pair_distances().reduce(f64::max)
    }

    fn pair_distances(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.k();
        (0..k).flat_map(move |i| ((i + 1)..k).map(move |j| self.centers[i].dist(&self.centers[j])))
    }

    /// Same centers in lexicographic order.
    pub fn sorted(&self) -> Codebook {
        let mut centers = self.centers.clone();
        centers.sort_by(|a, b| a.lex_cmp(b));
        Codebook { centers }
    }

    /// Lexicographic order on the center sequence; used to break ties between
    /// equally good codebooks deterministically.
    pub fn lex_cmp(&self, other: &Codebook) -> Ordering {
        for (a, b) in self.centers.iter().zip(&other.centers) {
            match a.lex_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.k().cmp(&other.k())
    }

    pub(crate) fn from_centers_unchecked(centers: Vec<Point>) -> Self {
        Codebook { centers }
    }
}

impl TryFrom<Vec<Point>> for Codebook {
    type Error = Error;

    fn try_from(centers: Vec<Point>) -> Result<Self> {
        Codebook::new(centers)
    }
}

impl From<Codebook> for Vec<Point> {
    fn from(c: Codebook) -> Self {
        c.centers
    }
}

impl fmt::Debug for Codebook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.centers).finish()
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.len().cmp(&b.len())
}

/// Nearest center with lowest-index tie-break; no dimension checks.
pub(crate) fn nearest(x: &[f64], c: &Codebook, tol: f64) -> usize {
    let mut best = f64::INFINITY;
    let mut d2 = Vec::with_capacity(c.k());
    for center in c.centers() {
        let d = sq_dist(x, center.coords());
        best = best.min(d);
        d2.push(d);
    }
    d2.iter().position(|&d| d <= best + tol).unwrap_or(0)
}

/// Squared distance to the nearest center.
pub(crate) fn nearest_dist2(x: &[f64], c: &Codebook) -> f64 {
    c.centers()
        .iter()
        .map(|center| sq_dist(x, center.coords()))
        .fold(f64::INFINITY, f64::min)
}

/// `x + lambda (x - center)`.
pub(crate) fn inflate(x: &[f64], center: &[f64], lambda: f64) -> Vec<f64> {
    x.iter()
        .zip(center)
        .map(|(xi, ci)| xi + lambda * (xi - ci))
        .collect()
}

/// Index (0-based) of the Voronoi cell of `x`.
pub fn nn_assign(x: &Point, c: &Codebook) -> Result<usize> {
    nn_assign_with_tol(x, c, TAU_GEO)
}

/// [`nn_assign`] with an explicit tie tolerance on squared distances.
pub fn nn_assign_with_tol(x: &Point, c: &Codebook, tol: f64) -> Result<usize> {
    check_dim(c.dim(), x.dim())?;
    Ok(nearest(x.coords(), c, tol))
}

fn check_index(index: usize, k: usize) -> Result<()> {
    if index < k {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index, k })
    }
}

/// Signed slack of `x` with respect to the bisector of `c_i` and `c_j`:
/// `|c_j - c_i| / 2 - <x - c_i, c_j - c_i> / |c_j - c_i|`.
///
/// Positive iff `x` lies strictly on the side of `c_i`; its absolute value is
/// the Euclidean distance from `x` to the bisector hyperplane.
pub fn bisector_margin(x: &Point, c: &Codebook, i: usize, j: usize) -> Result<f64> {
    check_dim(c.dim(), x.dim())?;
    check_index(i, c.k())?;
    check_index(j, c.k())?;
    if i == j {
        return Err(Error::SameIndex(i));
    }
    Ok(margin_raw(
        x.coords(),
        c.center(i).coords(),
        c.center(j).coords(),
    ))
}

fn margin_raw(x: &[f64], ci: &[f64], cj: &[f64]) -> f64 {
    let gap: Vec<f64> = cj.iter().zip(ci).map(|(b, a)| b - a).collect();
    let len = dot(&gap, &gap).sqrt();
    let rel: Vec<f64> = x.iter().zip(ci).map(|(a, b)| a - b).collect();
    len / 2.0 - dot(&rel, &gap) / len
}

/// Distance from `x` to the frontier of the Voronoi diagram, computed as the
/// smallest bisector margin between the cell of `x` and every other cell.
///
/// The frontier is contained in the union of bisector hyperplanes, so this is
/// a lower bound on the true distance. It is exact unless the closest point of
/// some bisector falls outside the face the two cells actually share (e.g.
/// collinear centers with a cell in between).
pub fn frontier_distance(x: &Point, c: &Codebook) -> Result<f64> {
    check_dim(c.dim(), x.dim())?;
    if c.k() < 2 {
        return Err(Error::SingleCenter);
    }
    Ok(frontier_distance_raw(
        x.coords(),
        c,
        nearest(x.coords(), c, TAU_GEO),
    ))
}

pub(crate) fn frontier_distance_raw(x: &[f64], c: &Codebook, cell: usize) -> f64 {
    let ci = c.center(cell).coords();
    let min = (0..c.k())
        .filter(|&j| j != cell)
        .map(|j| margin_raw(x, ci, c.center(j).coords()))
        .fold(f64::INFINITY, f64::min);
    min.max(0.0)
}

/// Largest `lambda >= 0` such that `x + lambda (x - q(x))` stays in the cell
/// of `x`. Returns `+inf` when no neighbour lies ahead of `x`, and `0` for
/// frontier points.
pub fn lambda_max(x: &Point, c: &Codebook) -> Result<f64> {
    check_dim(c.dim(), x.dim())?;
    if c.k() < 2 {
        return Err(Error::SingleCenter);
    }
    Ok(lambda_max_raw(
        x.coords(),
        c,
        nearest(x.coords(), c, TAU_GEO),
    ))
}

pub(crate) fn lambda_max_raw(x: &[f64], c: &Codebook, cell: usize) -> f64 {
    let ci = c.center(cell).coords();
    let rel: Vec<f64> = x.iter().zip(ci).map(|(a, b)| a - b).collect();
    let mut best = f64::INFINITY;
    for (j, cj) in c.centers().iter().enumerate() {
        if j == cell {
            continue;
        }
        let gap: Vec<f64> = cj.coords().iter().zip(ci).map(|(b, a)| b - a).collect();
        let ip = dot(&rel, &gap);
        if ip > 0.0 {
            best = best.min(dot(&gap, &gap) / (2.0 * ip) - 1.0);
        }
    }
    best.max(0.0)
}

/// Membership of `x` in `A(lambda)`: the cell of `x` survives inflation by
/// `lambda`. Closed at `lambda = lambda_max(x)`; `A(0)` is the whole space.
pub fn in_a_lambda(x: &Point, c: &Codebook, lambda: f64) -> Result<bool> {
    check_dim(c.dim(), x.dim())?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if lambda == 0.0 || c.k() < 2 {
        return Ok(true);
    }
    let cell = nearest(x.coords(), c, TAU_GEO);
    Ok(lambda <= lambda_max_raw(x.coords(), c, cell))
}

/// Cell index of the inflated point `x + lambda (x - q(x))`.
pub fn inflated_cell(x: &Point, c: &Codebook, lambda: f64) -> Result<usize> {
    check_dim(c.dim(), x.dim())?;
    let cell = nearest(x.coords(), c, TAU_GEO);
    let moved = inflate(x.coords(), c.center(cell).coords(), lambda);
    Ok(nearest(&moved, c, TAU_GEO))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn cb(rows: &[&[f64]]) -> Codebook {
        Codebook::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn point_rejects_nan_and_empty() {
        assert!(matches!(Point::new(vec![]), Err(Error::ZeroDimension)));
        assert!(matches!(
            Point::new(vec![0.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(
            Point::new(vec![f64::INFINITY]),
            Err(Error::NonFinite(0))
        ));
    }

    #[test]
    fn codebook_invariants() {
        assert!(matches!(Codebook::new(vec![]), Err(Error::Empty(_))));
        assert!(matches!(
            Codebook::from_rows(vec![vec![0.0], vec![0.0]]),
            Err(Error::DuplicateCenter(0, 1))
        ));
        assert!(matches!(
            Codebook::from_rows(vec![vec![0.0], vec![0.0, 1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        let c = cb(&[&[0.0, 0.0], &[3.0, 0.0], &[0.0, 1.0]]);
        assert_relative_eq!(c.min_separation().unwrap(), 1.0);
        assert_relative_eq!(c.max_separation().unwrap(), 10f64.sqrt());
        assert!(cb(&[&[1.0]]).min_separation().is_none());
    }

    #[test]
    fn center_maps_to_itself() {
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]]);
        assert_eq!(nn_assign(&pt(&[1.0, 0.0]), &c).unwrap(), 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = cb(&[&[0.0, 0.0], &[2.0, 0.0], &[9.0, 9.0]]);
        assert_eq!(nn_assign(&pt(&[1.0, 0.5]), &c).unwrap(), 0);
        let c = cb(&[&[2.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(nn_assign(&pt(&[1.0, -3.0]), &c).unwrap(), 0);
    }

    #[test]
    fn nn_assign_two_centers_example() {
        // |x - c1|^2 = 0.64 + 0.01, |x - c2|^2 = 0.04 + 0.01
        let c = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        assert_eq!(nn_assign(&pt(&[0.3, 0.1]), &c).unwrap(), 1);
    }

    #[test]
    fn nn_assign_dimension_mismatch() {
        let c = cb(&[&[0.0, 0.0]]);
        assert!(matches!(
            nn_assign(&pt(&[0.0]), &c),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn bisector_margin_examples() {
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_relative_eq!(bisector_margin(&pt(&[0.0, 0.0]), &c, 0, 1).unwrap(), 0.5);
        assert_relative_eq!(bisector_margin(&pt(&[0.5, 0.0]), &c, 0, 1).unwrap(), 0.0);
        // oracle: <(0.25,0.7),(1,0)> = 0.25, so 1/2 - 0.25
        assert_relative_eq!(bisector_margin(&pt(&[0.25, 0.7]), &c, 0, 1).unwrap(), 0.25);
        assert!(matches!(
            bisector_margin(&pt(&[0.0, 0.0]), &c, 1, 1),
            Err(Error::SameIndex(1))
        ));
        assert!(bisector_margin(&pt(&[0.0, 0.0]), &c, 0, 2).is_err());
    }

    #[test]
    fn frontier_distance_examples() {
        let c = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        assert_relative_eq!(frontier_distance(&pt(&[0.0, 3.0]), &c).unwrap(), 0.0);
        assert_relative_eq!(
            frontier_distance(&pt(&[0.3, 0.2]), &c).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 5.0]]);
        assert_relative_eq!(frontier_distance(&pt(&[0.0, 0.0]), &c).unwrap(), 0.5);
        assert!(matches!(
            frontier_distance(&pt(&[0.0]), &cb(&[&[1.0]])),
            Err(Error::SingleCenter)
        ));
    }

    #[test]
    fn lambda_max_examples() {
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(lambda_max(&pt(&[0.0, 0.0]), &c).unwrap(), f64::INFINITY);
        assert_eq!(lambda_max(&pt(&[0.5, 0.0]), &c).unwrap(), 0.0);
        assert_relative_eq!(lambda_max(&pt(&[0.25, 0.0]), &c).unwrap(), 1.0);
    }

    #[test]
    fn lambda_max_matches_grid_search() {
        // oracle: scan lambda and re-assign the inflated point directly
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let x = [0.25, 0.0];
        let step = 1e-4;
        let mut last_ok = 0.0;
        let mut lam: f64 = 0.0;
        while lam < 3.0 {
            let moved = inflate(&x, &[0.0, 0.0], lam);
            let d0 = sq_dist(&moved, &[0.0, 0.0]);
            let d1 = sq_dist(&moved, &[1.0, 0.0]);
            if d0 < d1 {
                last_ok = lam;
            }
            lam += step;
        }
        let closed = lambda_max(&pt(&x), &c).unwrap();
        assert!(
            (closed - last_ok).abs() <= 2.0 * step,
            "{closed} vs {last_ok}"
        );
    }

    #[test]
    fn a_lambda_examples() {
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert!(in_a_lambda(&pt(&[0.5, 0.0]), &c, 0.0).unwrap());
        assert!(in_a_lambda(&pt(&[0.0, 0.0]), &c, 1e6).unwrap());
        // x_lambda = (0.625, 0) lies in cell 1
        assert!(!in_a_lambda(&pt(&[0.25, 0.0]), &c, 1.5).unwrap());
        assert_eq!(inflated_cell(&pt(&[0.25, 0.0]), &c, 1.5).unwrap(), 1);
        assert!(!in_a_lambda(&pt(&[0.5, 0.0]), &c, 1e-12).unwrap());
        assert!(matches!(
            in_a_lambda(&pt(&[0.0, 0.0]), &c, -1.0),
            Err(Error::NegativeLambda(_))
        ));
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..4, 2usize..6).prop_flat_map(|(d, k)| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), k),
                prop::collection::vec(-1.5f64..1.5, d),
            )
        })
    }

    proptest! {
        #[test]
        fn a_lambda_is_nested((rows, x) in arb_instance(), l1 in 0.0f64..10.0, l2 in 0.0f64..10.0) {
            let Ok(c) = Codebook::from_rows(rows) else { return Ok(()) };
            let x = Point::new(x).unwrap();
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            if in_a_lambda(&x, &c, hi).unwrap() {
                prop_assert!(in_a_lambda(&x, &c, lo).unwrap());
            }
        }

        #[test]
        fn a_lambda_agrees_with_direct_inflation((rows, x) in arb_instance(), lambda in 0.0f64..10.0) {
            let Ok(c) = Codebook::from_rows(rows) else { return Ok(()) };
            let x = Point::new(x).unwrap();
            let cell = nn_assign(&x, &c).unwrap();
            let moved = inflate(x.coords(), c.center(cell).coords(), lambda);
            // skip points whose inflated image sits inside the tie band
            let mut d2: Vec<f64> = c.centers().iter().map(|p| sq_dist(&moved, p.coords())).collect();
            d2.sort_by(f64::total_cmp);
            prop_assume!(d2[1] - d2[0] > 1e-7);
            let direct = nearest(&moved, &c, TAU_GEO) == cell;
            prop_assert_eq!(in_a_lambda(&x, &c, lambda).unwrap(), direct);
        }

        #[test]
        fn nn_assign_rigid_motion_invariant(
            (rows, x) in arb_instance(),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let Ok(c) = Codebook::from_rows(rows.clone()) else { return Ok(()) };
            let d = x.len();
            let motion = |v: &[f64]| -> Vec<f64> {
                let mut out = v.to_vec();
                if d >= 2 {
                    let (s, co) = angle.sin_cos();
                    out[0] = co * v[0] - s * v[1];
                    out[1] = s * v[0] + co * v[1];
                }
                out.iter().zip(&shift).map(|(a, b)| a + b).collect()
            };
            let xp = Point::new(x.clone()).unwrap();
            let mut d2: Vec<f64> = c.centers().iter().map(|p| sq_dist(&x, p.coords())).collect();
            d2.sort_by(f64::total_cmp);
            prop_assume!(d2.len() < 2 || d2[1] - d2[0] > 1e-6);
            let moved_c = Codebook::from_rows(rows.iter().map(|r| motion(r)).collect()).unwrap();
            let moved_x = Point::new(motion(&x)).unwrap();
            prop_assert_eq!(nn_assign(&xp, &c).unwrap(), nn_assign(&moved_x, &moved_c).unwrap());
        }
    }
}
