//! Exact optimal codebooks for small or one-dimensional measures.
//!
//! Both solvers report whether the optimum is unique: another partition whose
//! cost lies within [`TAU_GEO`] of the minimum counts as a second optimum.

use super::{cell_cost, centroid, risk, SolveResult, Uniqueness};
use crate::error::{Error, Result};
use crate::geometry::{sq_dist, Codebook, TAU_GEO};
use crate::measures::DiscreteMeasure;

/// Default cap on the support size for partition enumeration.
pub const DEFAULT_N_MAX: usize = 14;

/// Cap on the number of set partitions (Stirling number `S(n, k)`).
pub const MAX_PARTITIONS: f64 = 5e7;

/// Backtrace nodes visited while looking for a second optimal 1-D partition.
const MAX_BACKTRACE_NODES: usize = 100_000;

/// Dispatches to the 1-D dynamic program or to enumeration.
pub fn exact_optimal(p: &DiscreteMeasure, k: usize) -> Result<SolveResult> {
    if p.dim() == 1 {
        exact_optimal_1d(p, k)
    } else {
        exact_optimal_enum(p, k)
    }
}

fn check_k(p: &DiscreteMeasure, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > p.len() {
        return Err(Error::KExceedsSupport {
            k,
            support: p.len(),
        });
    }
    Ok(())
}

fn finish(
    p: &DiscreteMeasure,
    cells: &[Vec<usize>],
    uniqueness: Uniqueness,
) -> Result<SolveResult> {
    let centers = cells
        .iter()
        .map(|cell| centroid(p, cell))
        .collect::<Result<Vec<_>>>()?;
    let codebook = Codebook::new(centers)
        .map_err(|e| Error::Internal(format!("optimal centroids are not distinct: {e}")))?;
    // every atom must sit in the Voronoi cell of its own centroid
    for (j, cell) in cells.iter().enumerate() {
        for &i in cell {
            let x = p.atoms()[i].coords();
            let own = sq_dist(x, codebook.center(j).coords());
            for other in codebook.centers() {
                if sq_dist(x, other.coords()) + TAU_GEO < own {
                    return Err(Error::Internal(format!(
                        "atom {i} is closer to another center than to its optimal centroid"
                    )));
                }
            }
        }
    }
    let codebook = codebook.sorted();
    let risk = risk(p, &codebook)?;
    Ok(SolveResult {
        codebook,
        risk,
        iterations: 0,
        converged: true,
        uniqueness,
        risk_history: Vec::new(),
    })
}

fn codebook_of(p: &DiscreteMeasure, cells: &[Vec<usize>]) -> Result<Codebook> {
    let centers = cells
        .iter()
        .map(|cell| centroid(p, cell))
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook::new(centers)?.sorted())
}

/// Globally optimal codebook of a 1-D measure by dynamic programming over the
/// sorted atoms (optimal cells are intervals).
pub fn exact_optimal_1d(p: &DiscreteMeasure, k: usize) -> Result<SolveResult> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: p.dim(),
        });
    }
    check_k(p, k)?;
    let n = p.len();
    let xs: Vec<f64> = p.atoms().iter().map(|a| a.coords()[0]).collect();
    let ws = p.weights();

    let mut pw = vec![0.0; n + 1];
    let mut px = vec![0.0; n + 1];
    let mut pxx = vec![0.0; n + 1];
    for i in 0..n {
        pw[i + 1] = pw[i] + ws[i];
        px[i + 1] = px[i] + ws[i] * xs[i];
        pxx[i + 1] = pxx[i] + ws[i] * xs[i] * xs[i];
    }
    // cost of atoms [a, b)
    let cost = |a: usize, b: usize| -> f64 {
        let w = pw[b] - pw[a];
        let s = px[b] - px[a];
        (pxx[b] - pxx[a] - s * s / w).max(0.0)
    };

    // table[m][j]: best cost of splitting the first j atoms into m + 1 cells
    let mut table = vec![vec![f64::INFINITY; n + 1]; k];
    let mut choices: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n + 1]; k];
    for j in 1..=n {
        table[0][j] = cost(0, j);
    }
    for m in 1..k {
        for j in (m + 1)..=n {
            let candidates: Vec<(usize, f64)> =
                (m..j).map(|i| (i, table[m - 1][i] + cost(i, j))).collect();
            let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            table[m][j] = best;
            choices[m][j] = candidates
                .iter()
                .filter(|c| c.1 <= best + TAU_GEO)
                .map(|c| c.0)
                .collect();
        }
    }

    // depth-first backtrace over tied split points
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut visited = 0usize;
    let mut truncated = false;
    let mut stack = vec![(k - 1, n, Vec::<usize>::new())];
    while let Some((m, j, mut bounds)) = stack.pop() {
        visited += 1;
        if visited > MAX_BACKTRACE_NODES {
            truncated = true;
            break;
        }
        bounds.push(j);
        if m == 0 {
            bounds.push(0);
            bounds.reverse();
            paths.push(bounds);
            if paths.len() == 2 {
                break;
            }
            continue;
        }
        for &i in choices[m][j].iter().rev() {
            stack.push((m - 1, i, bounds.clone()));
        }
    }

    let cells_of = |bounds: &[usize]| -> Vec<Vec<usize>> {
        bounds.windows(2).map(|w| (w[0]..w[1]).collect()).collect()
    };
    let primary = cells_of(&paths[0]);
    let best_cost: f64 = primary.iter().map(|c| cost(c[0], c[c.len() - 1] + 1)).sum();
    let uniqueness = match paths.get(1) {
        Some(second) => {
            let cells = cells_of(second);
            let second_cost: f64 = cells.iter().map(|c| cell_cost(p, c)).sum::<Result<f64>>()?;
            let first_cost: f64 = primary
                .iter()
                .map(|c| cell_cost(p, c))
                .sum::<Result<f64>>()?;
            if (second_cost - first_cost).abs() <= TAU_GEO {
                Uniqueness::MultipleOptima {
                    witness: codebook_of(p, &cells)?,
                }
            } else {
                Uniqueness::CertifiedUnique
            }
        }
        None if truncated => Uniqueness::Unknown,
        None => Uniqueness::CertifiedUnique,
    };
    debug_assert!((best_cost - table[k - 1][n]).abs() <= 1e-6);
    finish(p, &primary, uniqueness)
}

fn stirling2(n: usize, k: usize) -> f64 {
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for _ in 0..n {
        for j in (1..=k).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[k]
}

/// [`exact_optimal_enum_with`] using [`DEFAULT_N_MAX`].
pub fn exact_optimal_enum(p: &DiscreteMeasure, k: usize) -> Result<SolveResult> {
    exact_optimal_enum_with(p, k, DEFAULT_N_MAX)
}

/// Globally optimal codebook by branch-and-bound over all partitions of the
/// support into `k` non-empty cells.
pub fn exact_optimal_enum_with(p: &DiscreteMeasure, k: usize, n_max: usize) -> Result<SolveResult> {
    let n = p.len();
    if n > n_max {
        return Err(Error::TooLarge {
            n,
            k,
            reason: format!("support size above n_max = {n_max}"),
        });
    }
    check_k(p, k)?;
    let partitions = stirling2(n, k);
    if partitions > MAX_PARTITIONS {
        return Err(Error::TooLarge {
            n,
            k,
            reason: format!("S(n, k) = {partitions:.3e} partitions"),
        });
    }

    let mut search = Search::new(p, k);
    search.descend(0, 0, 0.0);

    // re-score survivors with the two-pass cost before comparing
    let mut scored: Vec<(f64, Vec<Vec<usize>>)> = search
        .candidates
        .iter()
        .map(|labels| {
            let cells = cells_from_labels(labels, k);
            let c = cells
                .iter()
                .map(|cell| cell_cost(p, cell))
                .sum::<Result<f64>>()?;
            Ok((c, cells))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = scored[0].0;
    let uniqueness = match scored.get(1) {
        Some((c, cells)) if *c <= best + TAU_GEO => Uniqueness::MultipleOptima {
            witness: codebook_of(p, cells)?,
        },
        _ => Uniqueness::CertifiedUnique,
    };
    finish(p, &scored[0].1, uniqueness)
}

fn cells_from_labels(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        cells[l].push(i);
    }
    cells
}

struct Block {
    mass: f64,
    mean: Vec<f64>,
}

struct Search<'a> {
    p: &'a DiscreteMeasure,
    k: usize,
    labels: Vec<usize>,
    blocks: Vec<Block>,
    best: f64,
    candidates: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(p: &'a DiscreteMeasure, k: usize) -> Self {
        Search {
            p,
            k,
            labels: Vec::with_capacity(p.len()),
            blocks: Vec::with_capacity(k),
            best: f64::INFINITY,
            candidates: Vec::new(),
        }
    }

    fn descend(&mut self, i: usize, used: usize, cost: f64) {
        if cost > self.best + TAU_GEO {
            return;
        }
        let n = self.p.len();
        if i == n {
            if used == self.k {
                if cost < self.best {
                    self.best = cost;
                    let bound = cost + TAU_GEO;
                    // drop candidates no longer within the tie band
                    let p = self.p;
                    let k = self.k;
                    self.candidates.retain(|labels| {
                        let cells = cells_from_labels(labels, k);
                        cells
                            .iter()
                            .map(|c| cell_cost(p, c).unwrap_or(f64::INFINITY))
                            .sum::<f64>()
                            <= bound
                    });
                }
                self.candidates.push(self.labels.clone());
            }
            return;
        }
        if n - i < self.k - used {
            return;
        }
        let x = self.p.atoms()[i].coords();
        let w = self.p.weights()[i];
        for b in 0..used {
            let block = &self.blocks[b];
            let total = block.mass + w;
            // increase of the within-cell sum of squares when x joins the block
            let delta = block.mass * w / total * sq_dist(x, &block.mean);
            let saved_mean = block.mean.clone();
            let saved_mass = block.mass;
            {
                let block = &mut self.blocks[b];
                for (m, v) in block.mean.iter_mut().zip(x) {
                    *m += (v - *m) * w / total;
                }
                block.mass = total;
            }
            self.labels.push(b);
            self.descend(i + 1, used, cost + delta);
            self.labels.pop();
            let block = &mut self.blocks[b];
            block.mean = saved_mean;
            block.mass = saved_mass;
        }
        if used < self.k {
            self.blocks.push(Block {
                mass: w,
                mean: x.to_vec(),
            });
            self.labels.push(used);
            self.descend(i + 1, used + 1, cost);
            self.labels.pop();
            self.blocks.pop();
        }
    }
}
