//! Distortion, Lloyd iterations and exact optimal codebooks.

mod exact;
mod lloyd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, nearest_dist2, Codebook, Point};
use crate::measures::DiscreteMeasure;

pub use exact::{
    exact_optimal, exact_optimal_1d, exact_optimal_enum, exact_optimal_enum_with, DEFAULT_N_MAX,
    MAX_PARTITIONS,
};
pub(crate) use lloyd::restart_seed as derive_seed;
pub use lloyd::{lloyd, Init, LloydConfig};

/// Whether the returned codebook is known to be the only optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Uniqueness {
    CertifiedUnique,
    /// Another optimal codebook exists; one is attached.
    MultipleOptima {
        witness: Codebook,
    },
    Unknown,
}

impl Uniqueness {
    pub fn is_certified_unique(&self) -> bool {
        matches!(self, Uniqueness::CertifiedUnique)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Uniqueness::CertifiedUnique => "certified_unique",
            Uniqueness::MultipleOptima { .. } => "multiple_optima",
            Uniqueness::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub codebook: Codebook,
    pub risk: f64,
    pub iterations: usize,
    pub converged: bool,
    pub uniqueness: Uniqueness,
    /// Risk after initialization and after every iteration (Lloyd only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub risk_history: Vec<f64>,
}

/// `sum_x w(x) min_j |x - c_j|^2`.
pub fn risk(p: &DiscreteMeasure, c: &Codebook) -> Result<f64> {
    check_dim(c.dim(), p.dim())?;
    Ok(p.iter()
        .map(|(x, w)| w * nearest_dist2(x.coords(), c))
        .sum())
}

/// Weighted mean of the atoms with the given indices.
pub fn centroid(p: &DiscreteMeasure, cell: &[usize]) -> Result<Point> {
    let mut acc = vec![0.0; p.dim()];
    let mut mass = 0.0;
    for &i in cell {
        let (x, w) = (
            p.atoms().get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                k: p.len(),
            })?,
            p.weights()[i],
        );
        mass += w;
        for (a, v) in acc.iter_mut().zip(x.coords()) {
            *a += w * v;
        }
    }
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Point::new(acc.into_iter().map(|a| a / mass).collect())
}

/// Weighted within-cell sum of squares around the cell centroid.
pub(crate) fn cell_cost(p: &DiscreteMeasure, cell: &[usize]) -> Result<f64> {
    let c = centroid(p, cell)?;
    Ok(cell
        .iter()
        .map(|&i| p.weights()[i] * p.atoms()[i].dist2(&c))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_samples(xs.iter().map(|&x| Point::new(vec![x]).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn risk_zero_when_support_in_codebook() {
        let p = line(&[0.0, 1.0]);
        let c = Codebook::from_rows(vec![vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        assert_eq!(risk(&p, &c).unwrap(), 0.0);
    }

    #[test]
    fn risk_matches_partition_enumeration() {
        // oracle: every 2-partition of {0,1,2,3} into intervals or not, scored
        // by centroid cost; the best equals the risk of {0.5, 2.5}
        let p = line(&[0.0, 1.0, 2.0, 3.0]);
        let mut best = f64::INFINITY;
        for mask in 1u32..15 {
            let a: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..4).filter(|i| mask & (1 << i) == 0).collect();
            best = best.min(cell_cost(&p, &a).unwrap() + cell_cost(&p, &b).unwrap());
        }
        assert_relative_eq!(best, 0.25);
        let c = Codebook::from_rows(vec![vec![0.5], vec![2.5]]).unwrap();
        assert_relative_eq!(risk(&p, &c).unwrap(), 0.25);
    }

    #[test]
    fn risk_dimension_mismatch() {
        let p = line(&[0.0]);
        let c = Codebook::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(risk(&p, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn centroid_examples() {
        let p = line(&[2.0, 4.0]);
        assert_eq!(centroid(&p, &[0]).unwrap().coords(), &[2.0]);
        assert_eq!(centroid(&p, &[0, 1]).unwrap().coords(), &[3.0]);
        let q = DiscreteMeasure::new(
            vec![
                Point::new(vec![0.0]).unwrap(),
                Point::new(vec![1.0]).unwrap(),
            ],
            vec![0.25, 0.75],
        )
        .unwrap();
        assert_relative_eq!(centroid(&q, &[0, 1]).unwrap().coords()[0], 0.75);
        assert!(matches!(centroid(&q, &[]), Err(Error::ZeroMass)));
        assert!(centroid(&q, &[7]).is_err());
    }
}
