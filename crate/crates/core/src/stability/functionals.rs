//! Distances between a quantizer and an optimal one.

use serde::{Deserialize, Serialize};

use super::matching::{check_same_k, f1_with, hausdorff, max_assignment, PermutationSearch};
use crate::error::Result;
use crate::geometry::{check_dim, nearest, sq_dist, Codebook, TAU_GEO};
use crate::measures::DiscreteMeasure;
use crate::quantize::risk;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub f1: f64,
    pub f2: f64,
    /// Squared value of the label-free functional `F`.
    pub big_f2: f64,
    pub hausdorff: f64,
    pub excess_risk: f64,
    /// Permutation achieving `f1`: `matching[j]` is matched to `cstar[j]`.
    pub matching: Vec<usize>,
    /// Permutation achieving `f2`.
    pub f2_matching: Vec<usize>,
}

/// Mass of `P` cross-tabulated by cell under `cstar` (rows) and `c` (columns).
pub fn confusion(p: &DiscreteMeasure, cstar: &Codebook, c: &Codebook) -> Result<Vec<Vec<f64>>> {
    check_dim(cstar.dim(), p.dim())?;
    check_dim(c.dim(), p.dim())?;
    let mut table = vec![vec![0.0; c.k()]; cstar.k()];
    for (x, w) in p.iter() {
        let a = nearest(x.coords(), cstar, TAU_GEO);
        let b = nearest(x.coords(), c, TAU_GEO);
        table[a][b] += w;
    }
    Ok(table)
}

/// Misclassified mass minimized over relabelings, with a minimizing
/// permutation.
pub fn f2(p: &DiscreteMeasure, cstar: &Codebook, c: &Codebook) -> Result<(f64, Vec<usize>)> {
    f2_with(p, cstar, c, PermutationSearch::Auto)
}

pub fn f2_with(
    p: &DiscreteMeasure,
    cstar: &Codebook,
    c: &Codebook,
    search: PermutationSearch,
) -> Result<(f64, Vec<usize>)> {
    check_same_k(cstar, c)?;
    let table = confusion(p, cstar, c)?;
    let (kept, sigma) = max_assignment(&table, search);
    Ok(((1.0 - kept).max(0.0), sigma))
}

/// `F^2 = sum_x w(x) |q(x) - q*(x)|^2`.
pub fn big_f_squared(p: &DiscreteMeasure, cstar: &Codebook, c: &Codebook) -> Result<f64> {
    check_dim(cstar.dim(), p.dim())?;
    check_dim(c.dim(), p.dim())?;
    Ok(p.iter()
        .map(|(x, w)| {
            let a = cstar.center(nearest(x.coords(), cstar, TAU_GEO));
            let b = c.center(nearest(x.coords(), c, TAU_GEO));
            w * sq_dist(a.coords(), b.coords())
        })
        .sum())
}

/// All functionals at once for codebooks of equal size.
pub fn stability_report(
    p: &DiscreteMeasure,
    cstar: &Codebook,
    c: &Codebook,
) -> Result<StabilityReport> {
    let (f1, matching) = f1_with(cstar, c, PermutationSearch::Auto)?;
    let (f2, f2_matching) = f2(p, cstar, c)?;
    Ok(StabilityReport {
        f1,
        f2,
        big_f2: big_f_squared(p, cstar, c)?,
        hausdorff: hausdorff(cstar, c)?,
        excess_risk: risk(p, c)? - risk(p, cstar)?,
        matching,
        f2_matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::measures::grid_discretize;
    use crate::NamedDistribution;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cb(rows: &[&[f64]]) -> Codebook {
        Codebook::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn rectangle() -> DiscreteMeasure {
        grid_discretize(&NamedDistribution::standard_rectangle(), 400).unwrap()
    }

    /// Midpoint rule on an `n x n/2` grid over the rectangle, counting the
    /// region between `x_1 = 0` and `x_1 = 2 eps x_2`.
    fn wedge_mass(eps: f64, n: usize) -> f64 {
        let (nx, ny) = (n, n / 2);
        let mut hits = 0usize;
        for i in 0..nx {
            for j in 0..ny {
                let x = -1.0 + 2.0 * (i as f64 + 0.5) / nx as f64;
                let y = -0.5 + (j as f64 + 0.5) / ny as f64;
                let b = 2.0 * eps * y;
                if (x > 0.0) != (x > b) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (nx * ny) as f64
    }

    #[test]
    fn identical_codebooks() {
        let p = rectangle();
        let c = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        let r = stability_report(&p, &c, &c).unwrap();
        assert_eq!(
            (r.f1, r.f2, r.big_f2, r.hausdorff, r.excess_risk),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.matching, vec![0, 1]);
    }

    #[test]
    fn rectangle_tilted_pair() {
        let eps = 0.1;
        let p = rectangle();
        let cstar = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        let c = cb(&[&[-0.5, eps], &[0.5, -eps]]);
        let oracle = wedge_mass(eps, 2000);
        assert_relative_eq!(oracle, eps / 4.0, epsilon = 2e-3);
        let (m, sigma) = f2(&p, &cstar, &c).unwrap();
        assert_relative_eq!(m, oracle, epsilon = 2e-3);
        assert_eq!(sigma, vec![0, 1]);
        // misclassified atoms move by sqrt(1 + eps^2), the rest by eps
        let f2v = big_f_squared(&p, &cstar, &c).unwrap();
        assert_relative_eq!(f2v, eps * eps + oracle, epsilon = 2e-3);
    }

    #[test]
    fn single_atom_collapses() {
        let p = DiscreteMeasure::from_samples(vec![Point::new(vec![0.2, 0.3]).unwrap()]).unwrap();
        let cstar = cb(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let c = cb(&[&[0.0, 1.0], &[3.0, 0.0]]);
        assert_relative_eq!(big_f_squared(&p, &cstar, &c).unwrap(), 1.0);
    }

    #[test]
    fn big_f_is_label_free() {
        let p = rectangle();
        let cstar = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        let c = cb(&[&[0.4, 0.1], &[-0.6, 0.0]]);
        let swapped = cb(&[&[-0.6, 0.0], &[0.4, 0.1]]);
        assert_eq!(
            big_f_squared(&p, &cstar, &c).unwrap(),
            big_f_squared(&p, &cstar, &swapped).unwrap()
        );
        let (m, sigma) = f2(&p, &cstar, &c).unwrap();
        assert_eq!(sigma, vec![1, 0]);
        assert!(m < 0.1);
    }

    #[test]
    fn f2_and_f1_share_permutation_when_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..300 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let cstar = Codebook::from_rows(rows.clone()).unwrap();
            let m = cstar.min_separation().unwrap();
            let mut shuffled: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|v| v + rng.random_range(-0.2..0.2) * m)
                        .collect()
                })
                .collect();
            shuffled.rotate_left(1);
            let c = Codebook::from_rows(shuffled).unwrap();
            let (v1, s1) = f1_with(&cstar, &c, PermutationSearch::Auto).unwrap();
            if v1 >= m / 2.0 {
                continue;
            }
            let atoms: Vec<Point> = (0..12)
                .map(|_| {
                    Point::new(vec![
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-1.5..1.5),
                    ])
                    .unwrap()
                })
                .collect();
            let p = DiscreteMeasure::from_samples(atoms).unwrap();
            let (_, s2) = f2(&p, &cstar, &c).unwrap();
            // with every cell of cstar charged, the f2 permutation is forced
            let table = confusion(&p, &cstar, &c).unwrap();
            if table.iter().all(|row| row.iter().sum::<f64>() > 0.0) {
                assert_eq!(s1, s2);
                checked += 1;
            }
        }
        assert!(checked > 50, "{checked}");
    }
}
