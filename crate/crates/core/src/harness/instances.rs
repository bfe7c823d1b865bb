//! Measures under test and probe codebooks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Codebook, Point};
use crate::measures::{
    grid_discretize, load, sample, DiscreteMeasure, MeasureFormat, NamedDistribution,
};
use crate::quantize::derive_seed;

/// Where the measures of an experiment come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MeasureSource {
    /// Random weighted point clouds: `d` in 1..=3, `k` in {2, 3}, at most 12 atoms.
    Random,
    Grid {
        dist: NamedDistribution,
        resolution: usize,
    },
    /// One empirical measure of `n` samples per instance.
    Samples {
        dist: NamedDistribution,
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

/// Parameters shared by the verification suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: MeasureSource,
    /// Number of codebook centers; random instances draw their own when `None`.
    pub k: Option<usize>,
    pub seed: u64,
    /// Instances drawn for `Random` and `Samples` sources.
    pub instances: usize,
    /// Probe codebooks per instance.
    pub probes: usize,
    /// Lloyd restarts where a heuristic solver is used.
    pub restarts: usize,
    /// Slack allowed on every checked inequality.
    pub tol: f64,
    /// Excess-risk levels for the epsilon-minimizer suite.
    pub eps_grid: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            source: MeasureSource::Random,
            k: None,
            seed: 0,
            instances: 100,
            probes: 200,
            restarts: 20,
            tol: crate::TAU_GEO,
            eps_grid: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

/// Checks that `grid` is strictly increasing and finite.
pub fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid has a non-finite entry"
        )));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        check_grid("eps", &self.eps_grid)?;
        if self.eps_grid.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidParameter(
                "eps grid must be nonnegative".into(),
            ));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter("tol must be nonnegative".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "restarts must be at least 1".into(),
            ));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }

    fn fixed_k(&self) -> Result<usize> {
        self.k
            .ok_or_else(|| Error::InvalidParameter("k is required for this measure source".into()))
    }

    /// Materializes the measures of the experiment, in a fixed order.
    pub fn instances(&self) -> Result<Vec<Instance>> {
        match &self.source {
            MeasureSource::Random => Ok((0..self.instances)
                .map(|i| random_instance(derive_seed(self.seed, i), self.k))
                .collect()),
            MeasureSource::Grid { dist, resolution } => Ok(vec![Instance {
                label: format!("{}@{resolution}", dist.tag()),
                seed: None,
                measure: grid_discretize(dist, *resolution)?,
                k: self.fixed_k()?,
            }]),
            MeasureSource::Samples { dist, n } => {
                let k = self.fixed_k()?;
                (0..self.instances)
                    .map(|i| {
                        let seed = derive_seed(self.seed, i);
                        Ok(Instance {
                            label: format!("{}#{i}", dist.tag()),
                            seed: Some(seed),
                            measure: DiscreteMeasure::from_samples(sample(dist, *n, seed)?)?,
                            k,
                        })
                    })
                    .collect()
            }
            MeasureSource::File { path } => Ok(vec![Instance {
                label: path.display().to_string(),
                seed: None,
                measure: load(path, MeasureFormat::from_path(path))?,
                k: self.fixed_k()?,
            }]),
        }
    }
}

/// One measure under test.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub label: String,
    /// Seed that regenerates the measure, when it was drawn at random.
    pub seed: Option<u64>,
    pub measure: DiscreteMeasure,
    pub k: usize,
}

impl Instance {
    /// JSON description sufficient to rebuild the instance.
    pub fn witness(&self) -> serde_json::Value {
        serde_json::json!({
            "instance": self.label,
            "seed": self.seed,
            "k": self.k,
            "atoms": self.measure.atoms(),
            "weights": self.measure.weights(),
        })
    }

    /// Seed for the probe stream of this instance.
    pub fn probe_seed(&self, base: u64) -> u64 {
        derive_seed(self.seed.unwrap_or(base), 0x5052_4f42)
    }
}

/// Random weighted point cloud: uniform atoms in `[-1, 1]^d`, weights drawn
/// in `[0.2, 1]` and normalized.
pub fn random_instance(seed: u64, k: Option<usize>) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=3usize);
    let k = k.unwrap_or_else(|| rng.random_range(2..=3usize));
    let n = rng.random_range((k + 2).min(12)..=12usize).max(k);
    let points: Vec<Point> = (0..n)
        .map(|_| Point::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite"))
        .collect();
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    Instance {
        label: format!("random#{seed:016x}"),
        seed: Some(seed),
        measure: DiscreteMeasure::from_masses(points, masses).expect("valid random instance"),
        k,
    }
}

/// Perturbation scales of the local probes, relative to the minimal
/// separation of the optimal codebook.
pub const PROBE_SCALES: [f64; 3] = [0.01, 0.1, 0.5];

/// Probe codebooks around `cstar`: Gaussian perturbations at
/// [`PROBE_SCALES`], uniform codebooks in the bounding box of the support,
/// and perturbed codebooks with two centers exchanged.
pub fn probes(cstar: &Codebook, p: &DiscreteMeasure, count: usize, seed: u64) -> Vec<Codebook> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = cstar.min_separation().unwrap_or(1.0);
    let (lo, hi) = p.bounding_box();
    let rows = cstar.to_rows();
    let k = cstar.k();
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    while out.len() < count {
        let candidate: Vec<Vec<f64>> = match i % 3 {
            0 => {
                let sd = PROBE_SCALES[(i / 3) % 3] * scale;
                jitter(&rows, sd, &mut rng)
            }
            1 => (0..k)
                .map(|_| {
                    lo.iter()
                        .zip(&hi)
                        .map(|(&a, &b)| if a < b { rng.random_range(a..=b) } else { a })
                        .collect()
                })
                .collect(),
            _ => {
                let mut swapped = rows.clone();
                if k >= 2 {
                    let a = rng.random_range(0..k);
                    let b = (a + rng.random_range(1..k)) % k;
                    swapped.swap(a, b);
                }
                jitter(&swapped, 0.1 * scale, &mut rng)
            }
        };
        i += 1;
        if let Ok(c) = Codebook::from_rows(candidate) {
            out.push(c);
        }
    }
    out
}

pub(crate) fn jitter(rows: &[Vec<f64>], sd: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("valid std dev");
    rows.iter()
        .map(|r| r.iter().map(|v| v + normal.sample(rng)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_reproducible() {
        let a = random_instance(42, None);
        let b = random_instance(42, None);
        assert_eq!(a, b);
        assert!(a.measure.len() <= 12 && a.measure.dim() <= 3);
        assert!((2..=3).contains(&a.k));
        assert_eq!(random_instance(1, Some(2)).k, 2);
    }

    #[test]
    fn probes_are_reproducible_and_sized() {
        let inst = random_instance(5, Some(3));
        let cstar = Codebook::from_rows(vec![
            vec![0.0; inst.measure.dim()],
            vec![1.0; inst.measure.dim()],
            vec![-1.0; inst.measure.dim()],
        ])
        .unwrap();
        let a = probes(&cstar, &inst.measure, 30, 9);
        assert_eq!(a.len(), 30);
        assert_eq!(a, probes(&cstar, &inst.measure, 30, 9));
        assert!(a
            .iter()
            .all(|c| c.k() == 3 && c.dim() == inst.measure.dim()));
    }

    #[test]
    fn grids_must_increase() {
        assert!(check_grid("t", &[0.0, 0.1, 0.2]).is_ok());
        assert!(check_grid("t", &[0.0, 0.0]).is_err());
        assert!(check_grid("t", &[0.0, f64::NAN]).is_err());
        let spec = ExperimentSpec {
            eps_grid: vec![0.1, 0.01],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sample_source_needs_k() {
        let spec = ExperimentSpec {
            source: MeasureSource::Samples {
                dist: NamedDistribution::standard_rectangle(),
                n: 12,
            },
            instances: 3,
            ..Default::default()
        };
        assert!(spec.instances().is_err());
        let spec = ExperimentSpec { k: Some(2), ..spec };
        let inst = spec.instances().unwrap();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst, spec.instances().unwrap());
    }
}
