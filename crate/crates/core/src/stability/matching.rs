//! Label matchings between two codebooks of equal size.

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Codebook};

/// Largest `k` for which permutations are enumerated exhaustively.
pub const EXHAUSTIVE_MAX_K: usize = 10;

/// How the minimization over permutations is carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PermutationSearch {
    /// Exhaustive up to [`EXHAUSTIVE_MAX_K`], assignment algorithms above.
    #[default]
    Auto,
    Exhaustive,
    Assignment,
}

impl PermutationSearch {
    pub(crate) fn exhaustive(self, k: usize) -> bool {
        match self {
            PermutationSearch::Auto => k <= EXHAUSTIVE_MAX_K,
            PermutationSearch::Exhaustive => true,
            PermutationSearch::Assignment => false,
        }
    }
}

pub(crate) fn check_same_k(a: &Codebook, b: &Codebook) -> Result<()> {
    check_dim(a.dim(), b.dim())?;
    if a.k() != b.k() {
        return Err(Error::SizeMismatch(a.k(), b.k()));
    }
    Ok(())
}

/// Visits all permutations of `0..k` in lexicographic order.
pub(crate) fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        f(&perm);
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| perm[i - 1] < perm[i]) else {
            return;
        };
        let j = (i..k).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Minimizes `max_j cost[j][sigma(j)]`. Returns the value and `sigma`.
pub(crate) fn bottleneck(cost: &[Vec<f64>], search: PermutationSearch) -> (f64, Vec<usize>) {
    let k = cost.len();
    if search.exhaustive(k) {
        let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
        for_each_permutation(k, |perm| {
            let v = perm
                .iter()
                .enumerate()
                .map(|(j, &s)| cost[j][s])
                .fold(f64::NEG_INFINITY, f64::max);
            if v < best.0 {
                best = (v, perm.to_vec());
            }
        });
        return best;
    }
    let mut levels: Vec<f64> = cost.iter().flatten().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // smallest threshold admitting a perfect matching
    let (mut lo, mut hi) = (0, levels.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(cost, levels[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let sigma = perfect_matching(cost, levels[lo]).expect("full threshold always matches");
    (levels[lo], sigma)
}

/// Perfect matching using only entries `<= threshold` (augmenting paths).
fn perfect_matching(cost: &[Vec<f64>], threshold: f64) -> Option<Vec<usize>> {
    let k = cost.len();
    let mut owner: Vec<Option<usize>> = vec![None; k];
    fn augment(
        row: usize,
        cost: &[Vec<f64>],
        threshold: f64,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for col in 0..cost.len() {
            if cost[row][col] <= threshold && !seen[col] {
                seen[col] = true;
                if owner[col].is_none_or(|r| augment(r, cost, threshold, seen, owner)) {
                    owner[col] = Some(row);
                    return true;
                }
            }
        }
        false
    }
    for row in 0..k {
        let mut seen = vec![false; k];
        if !augment(row, cost, threshold, &mut seen, &mut owner) {
            return None;
        }
    }
    let mut sigma = vec![0; k];
    for (col, row) in owner.iter().enumerate() {
        sigma[row.expect("perfect")] = col;
    }
    Some(sigma)
}

/// Maximizes `sum_j gain[j][sigma(j)]`. Returns the value and `sigma`.
pub(crate) fn max_assignment(gain: &[Vec<f64>], search: PermutationSearch) -> (f64, Vec<usize>) {
    let k = gain.len();
    if search.exhaustive(k) {
        let mut best = (f64::NEG_INFINITY, (0..k).collect::<Vec<_>>());
        for_each_permutation(k, |perm| {
            let v: f64 = perm.iter().enumerate().map(|(j, &s)| gain[j][s]).sum();
            if v > best.0 {
                best = (v, perm.to_vec());
            }
        });
        return best;
    }
    let cost: Vec<Vec<f64>> = gain
        .iter()
        .map(|r| r.iter().map(|g| -g).collect())
        .collect();
    let sigma = hungarian(&cost);
    let v = sigma.iter().enumerate().map(|(j, &s)| gain[j][s]).sum();
    (v, sigma)
}

/// Minimum-cost assignment on a square matrix (shortest augmenting paths with
/// potentials, `O(k^3)`).
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based internals; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[p[j] - 1] = j - 1;
    }
    sigma
}

/// `F1 = min_sigma max_j |c*_j - c_sigma(j)|` and a minimizing `sigma`
/// (`sigma[j]` is the index in `c` matched to `cstar[j]`).
pub fn f1(cstar: &Codebook, c: &Codebook) -> Result<(f64, Vec<usize>)> {
    f1_with(cstar, c, PermutationSearch::Auto)
}

pub fn f1_with(
    cstar: &Codebook,
    c: &Codebook,
    search: PermutationSearch,
) -> Result<(f64, Vec<usize>)> {
    check_same_k(cstar, c)?;
    let cost: Vec<Vec<f64>> = cstar
        .centers()
        .iter()
        .map(|a| c.centers().iter().map(|b| a.dist(b)).collect())
        .collect();
    Ok(bottleneck(&cost, search))
}

/// Hausdorff distance between the two center sets (sizes may differ).
pub fn hausdorff(cstar: &Codebook, c: &Codebook) -> Result<f64> {
    check_dim(cstar.dim(), c.dim())?;
    let directed = |a: &Codebook, b: &Codebook| {
        a.centers()
            .iter()
            .map(|x| {
                b.centers()
                    .iter()
                    .map(|y| x.dist(y))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(cstar, c).max(directed(c, cstar)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cb(rows: &[&[f64]]) -> Codebook {
        Codebook::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn permutations_are_lexicographic_and_complete() {
        let mut seen = Vec::new();
        for_each_permutation(3, |p| seen.push(p.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
        let mut count = 0;
        for_each_permutation(6, |_| count += 1);
        assert_eq!(count, 720);
    }

    #[test]
    fn f1_identical_is_identity() {
        let c = cb(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 3.0]]);
        assert_eq!(f1(&c, &c).unwrap(), (0.0, vec![0, 1, 2]));
    }

    #[test]
    fn f1_small_shift() {
        let cstar = cb(&[&[-0.5, 0.0], &[0.5, 0.0]]);
        let c = cb(&[&[-0.5, 0.1], &[0.5, -0.1]]);
        let (v, sigma) = f1(&cstar, &c).unwrap();
        // oracle: the two permutations give 0.1 and sqrt(1 + 0.01)
        let swapped = (1.0f64 + 0.01).sqrt();
        assert_relative_eq!(v, 0.1f64.min(swapped), epsilon = 1e-15);
        assert_eq!(sigma, vec![0, 1]);
    }

    #[test]
    fn f1_absorbs_relabeling() {
        let a = cb(&[&[0.0], &[1.0], &[5.0]]);
        let b = cb(&[&[5.0], &[0.0], &[1.0]]);
        assert_eq!(f1(&a, &b).unwrap(), (0.0, vec![1, 2, 0]));
        assert_eq!(hausdorff(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn f1_rejects_mismatch() {
        let a = cb(&[&[0.0], &[1.0]]);
        let b = cb(&[&[0.0], &[1.0], &[2.0]]);
        assert!(matches!(f1(&a, &b), Err(Error::SizeMismatch(2, 3))));
        assert!(hausdorff(&a, &b).is_ok());
        assert!(f1(&a, &cb(&[&[0.0, 0.0], &[1.0, 0.0]])).is_err());
    }

    #[test]
    fn hausdorff_can_be_far_below_f1() {
        // three near-coincident pairs: c swaps which member of each pair it uses
        let cstar = cb(&[&[0.0, 0.0], &[0.0, 0.01], &[3.0, 0.0]]);
        let c = cb(&[&[0.0, 0.01], &[3.0, 0.0], &[3.0, 0.01]]);
        let dh = hausdorff(&cstar, &c).unwrap();
        let (v, _) = f1(&cstar, &c).unwrap();
        assert!(dh <= 0.01 + 1e-15);
        assert!(v > 2.9);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let sigma = hungarian(&cost);
        let total: f64 = sigma.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn exhaustive_and_assignment_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=8 {
            for _ in 0..20 {
                let m: Vec<Vec<f64>> = (0..k)
                    .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
                    .collect();
                let (a, _) = bottleneck(&m, PermutationSearch::Exhaustive);
                let (b, sb) = bottleneck(&m, PermutationSearch::Assignment);
                assert_eq!(a, b);
                assert_eq!(
                    sb.iter()
                        .enumerate()
                        .map(|(j, &s)| m[j][s])
                        .fold(0.0, f64::max),
                    b
                );
                let (a, _) = max_assignment(&m, PermutationSearch::Exhaustive);
                let (b, _) = max_assignment(&m, PermutationSearch::Assignment);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn hausdorff_below_f1(
            a in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3),
            b in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3),
        ) {
            let (Ok(a), Ok(b)) = (Codebook::from_rows(a), Codebook::from_rows(b)) else {
                return Ok(());
            };
            let dh = hausdorff(&a, &b).unwrap();
            let (v, sigma) = f1(&a, &b).unwrap();
            prop_assert!(dh <= v + 1e-12);
            let mut s = sigma.clone();
            s.sort();
            prop_assert_eq!(s, vec![0, 1, 2]);
            let m = a.min_separation().unwrap();
            if dh < m / 2.0 {
                prop_assert!((dh - v).abs() <= 1e-9);
            }
        }
    }
}
