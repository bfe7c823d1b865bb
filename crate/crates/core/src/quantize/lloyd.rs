use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{risk, SolveResult, Uniqueness};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, nearest, sq_dist, Codebook, Point, TAU_GEO};
use crate::measures::DiscreteMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// D^2 seeding; restart `r` uses a stream derived from `(seed, r)`.
    KMeansPlusPlus {
        seed: u64,
    },
    Explicit(Codebook),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub max_iter: usize,
    /// Stop once the relative risk improvement drops to this value.
    pub rel_tol: f64,
    pub init: Init,
    pub restarts: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            max_iter: 200,
            rel_tol: 1e-10,
            init: Init::KMeansPlusPlus { seed: 0 },
            restarts: 10,
        }
    }
}

impl LloydConfig {
    pub fn seeded(seed: u64, restarts: usize) -> Self {
        LloydConfig {
            init: Init::KMeansPlusPlus { seed },
            restarts,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "rel_tol must be non-negative".into(),
            ));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidParameter(
                "restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn restart_seed(seed: u64, restart: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lloyd's algorithm, best of `cfg.restarts` runs.
///
/// Runs are independent and may execute in parallel; the winner is the run
/// with the smallest risk, ties broken by the lexicographic order of the
/// sorted codebook.
pub fn lloyd(p: &DiscreteMeasure, k: usize, cfg: &LloydConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > p.len() {
        return Err(Error::KExceedsSupport {
            k,
            support: p.len(),
        });
    }
    let runs: Vec<SolveResult> = match &cfg.init {
        Init::Explicit(c) => {
            if c.k() != k {
                return Err(Error::SizeMismatch(c.k(), k));
            }
            check_dim(p.dim(), c.dim())?;
            let centers = c.centers().iter().map(|x| x.coords().to_vec()).collect();
            vec![run(p, centers, cfg)?]
        }
        Init::KMeansPlusPlus { seed } => (0..cfg.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(*seed, r));
                let centers = kmeans_pp(p, k, &mut rng);
                run(p, centers, cfg)
            })
            .collect::<Result<_>>()?,
    };
    Ok(runs
        .into_iter()
        .min_by(|a, b| {
            a.risk
                .total_cmp(&b.risk)
                .then_with(|| a.codebook.lex_cmp(&b.codebook))
        })
        .expect("at least one restart"))
}

fn kmeans_pp(p: &DiscreteMeasure, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let pick = |scores: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = scores.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, &s) in scores.iter().enumerate() {
            if s > 0.0 {
                if u < s {
                    return i;
                }
                u -= s;
            }
        }
        scores.iter().rposition(|&s| s > 0.0).unwrap_or(0)
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = pick(p.weights(), rng);
    centers.push(p.atoms()[first].coords().to_vec());
    let mut d2: Vec<f64> = p
        .atoms()
        .iter()
        .map(|x| sq_dist(x.coords(), &centers[0]))
        .collect();
    while centers.len() < k {
        let scores: Vec<f64> = d2.iter().zip(p.weights()).map(|(d, w)| d * w).collect();
        let next = pick(&scores, rng);
        let c = p.atoms()[next].coords().to_vec();
        for (d, x) in d2.iter_mut().zip(p.atoms()) {
            *d = d.min(sq_dist(x.coords(), &c));
        }
        centers.push(c);
    }
    centers
}

fn risk_of(p: &DiscreteMeasure, centers: &[Vec<f64>]) -> f64 {
    p.iter()
        .map(|(x, w)| {
            w * centers
                .iter()
                .map(|c| sq_dist(x.coords(), c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn to_codebook(centers: &[Vec<f64>]) -> Result<Codebook> {
    let pts = centers
        .iter()
        .map(|c| Point::new(c.clone()))
        .collect::<Result<Vec<_>>>()?;
    Codebook::new(pts)
}

fn run(p: &DiscreteMeasure, mut centers: Vec<Vec<f64>>, cfg: &LloydConfig) -> Result<SolveResult> {
    let k = centers.len();
    let d = p.dim();
    let mut current = risk_of(p, &centers);
    let mut history = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        let codebook = Codebook::from_centers_unchecked(
            centers
                .iter()
                .map(|c| Point::from_vec_unchecked(c.clone()))
                .collect(),
        );
        let mut mass = vec![0.0; k];
        let mut sums = vec![vec![0.0; d]; k];
        for (x, w) in p.iter() {
            let j = nearest(x.coords(), &codebook, TAU_GEO);
            mass[j] += w;
            for (s, v) in sums[j].iter_mut().zip(x.coords()) {
                *s += w * v;
            }
        }
        let mut next: Vec<Option<Vec<f64>>> = (0..k)
            .map(|j| (mass[j] > 0.0).then(|| sums[j].iter().map(|s| s / mass[j]).collect()))
            .collect();
        // a center that coincides with an earlier one is treated as empty
        for j in 0..k {
            if let Some(c) = &next[j] {
                if next[..j].iter().flatten().any(|o| o == c) {
                    next[j] = None;
                }
            }
        }
        for j in 0..k {
            if next[j].is_none() {
                next[j] = Some(reseed(p, &next));
            }
        }
        centers = next.into_iter().map(|c| c.expect("filled")).collect();
        let updated = risk_of(p, &centers);
        history.push(updated);
        let improvement = current - updated;
        current = updated;
        if improvement <= cfg.rel_tol * history[history.len() - 2] || updated == 0.0 {
            converged = true;
            break;
        }
    }

    let codebook = to_codebook(&centers)?.sorted();
    let risk = risk(p, &codebook)?;
    Ok(SolveResult {
        codebook,
        risk,
        iterations,
        converged,
        uniqueness: Uniqueness::Unknown,
        risk_history: history,
    })
}

/// The atom contributing most to the risk of the filled centers, skipping
/// atoms that already coincide with a center.
fn reseed(p: &DiscreteMeasure, filled: &[Option<Vec<f64>>]) -> Vec<f64> {
    let mut best: Option<(f64, usize)> = None;
    for (i, (x, w)) in p.iter().enumerate() {
        if filled.iter().flatten().any(|c| c.as_slice() == x.coords()) {
            continue;
        }
        let d2 = filled
            .iter()
            .flatten()
            .map(|c| sq_dist(x.coords(), c))
            .fold(f64::INFINITY, f64::min);
        let score = if d2.is_finite() { w * d2 } else { w };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    let (_, i) = best.expect("support larger than the number of filled centers");
    p.atoms()[i].coords().to_vec()
}
