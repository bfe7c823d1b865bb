//! Finitely supported probability measures.
//!
//! A [`DiscreteMeasure`] stands in both for an empirical measure `P_n` and,
//! through grid quadrature, for the continuous example distributions.

mod distribution;
mod io;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Point};

pub use distribution::{grid_discretize, sample, MixtureComponent, NamedDistribution, Shape};
pub(crate) use io::fmt_real as io_fmt_real;
pub use io::{load, read_csv, read_json, store, write_csv, write_json, MeasureFormat};

/// Tolerance on the total mass of user-supplied weights.
pub const MASS_TOL: f64 = 1e-12;

/// A probability measure with finitely many atoms.
///
/// Atoms are stored in lexicographic order with exact duplicates merged, so two
/// measures built from permutations of the same input compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms and positive weights summing to one.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        validate_inputs(&points, &weights)?;
        let sum = compensated_sum(weights.iter().copied());
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::merged(points, weights))
    }

    /// Empirical measure: weight `1/n` on each sample, duplicates merged.
    pub fn from_samples(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("sample list"));
        }
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Normalizes arbitrary positive masses.
    pub fn from_masses(points: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        validate_inputs(&points, &masses)?;
        let total = compensated_sum(masses.iter().copied());
        let weights = masses.into_iter().map(|m| m / total).collect();
        Ok(Self::merged(points, weights))
    }

    fn merged(points: Vec<Point>, weights: Vec<f64>) -> Self {
        let mut pairs: Vec<(Point, f64)> = points.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.lex_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut atoms: Vec<Point> = Vec::with_capacity(pairs.len());
        let mut merged: Vec<f64> = Vec::with_capacity(pairs.len());
        for (p, w) in pairs {
            match atoms.last() {
                Some(last) if *last == p => *merged.last_mut().unwrap() += w,
                _ => {
                    atoms.push(p);
                    merged.push(w);
                }
            }
        }
        DiscreteMeasure {
            atoms,
            weights: merged,
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// Number of distinct atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Point {
        let mut acc = vec![0.0; self.dim()];
        for (p, w) in self.iter() {
            for (a, x) in acc.iter_mut().zip(p.coords()) {
                *a += w * x;
            }
        }
        Point::from_vec_unchecked(acc)
    }

    /// Coordinate-wise lower and upper corners of the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in &self.atoms {
            for (i, &x) in p.coords().iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        (lo, hi)
    }

    /// Diameter of a ball containing the support: twice the largest distance
    /// from the weighted mean to an atom.
    pub fn enclosing_diameter(&self) -> f64 {
        let mean = self.mean();
        2.0 * self.atoms.iter().map(|p| p.dist(&mean)).fold(0.0, f64::max)
    }

    /// Image measure under `f`, keeping weights and re-merging duplicates.
    pub fn push_forward<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&Point) -> Result<Point>,
    {
        let points = self.atoms.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        validate_inputs(&points, &self.weights)?;
        Ok(Self::merged(points, self.weights.clone()))
    }
}

fn validate_inputs(points: &[Point], weights: &[f64]) -> Result<()> {
    let first = points.first().ok_or(Error::Empty("measure support"))?;
    if points.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} atoms but {} weights",
            points.len(),
            weights.len()
        )));
    }
    for p in points {
        check_dim(first.dim(), p.dim())?;
    }
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight { index, weight });
        }
    }
    Ok(())
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> Vec<Point> {
        rows.iter()
            .map(|r| Point::new(r.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn single_sample_is_a_dirac() {
        let m = DiscreteMeasure::from_samples(pts(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn duplicates_are_merged() {
        let m =
            DiscreteMeasure::from_samples(pts(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.atoms()[0].coords(), &[0.0, 0.0]);
        assert!((m.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distinct_samples_get_uniform_weight() {
        let m = DiscreteMeasure::from_samples(pts(&[&[0.0], &[1.0], &[2.0], &[3.0]])).unwrap();
        assert_eq!(m.weights(), &[0.25; 4]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            DiscreteMeasure::from_samples(vec![]),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            DiscreteMeasure::from_samples(pts(&[&[0.0], &[0.0, 1.0]])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(pts(&[&[0.0], &[1.0]]), vec![0.4, 0.4]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(pts(&[&[0.0], &[1.0]]), vec![1.5, -0.5]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
    }

    #[test]
    fn compensated_sum_of_many_reciprocals() {
        let n = 80_000;
        let s = compensated_sum(std::iter::repeat_n(1.0 / n as f64, n));
        assert!((s - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn merging_is_order_independent(
            raw in prop::collection::vec((0i32..4, 0i32..3), 1..20),
            seed in any::<u64>(),
        ) {
            let points: Vec<Point> = raw
                .iter()
                .map(|&(a, b)| Point::new(vec![a as f64, b as f64]).unwrap())
                .collect();
            let mut shuffled = points.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let a = DiscreteMeasure::from_samples(points).unwrap();
            let b = DiscreteMeasure::from_samples(shuffled).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
