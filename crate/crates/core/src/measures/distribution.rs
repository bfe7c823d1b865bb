use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Largest number of grid cells [`grid_discretize`] will materialize.
const MAX_GRID_CELLS: usize = 50_000_000;

/// The continuous distributions used by the counterexamples, plus mixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NamedDistribution {
    /// Uniform on `[x_min, x_max] x [y_min, y_max]`.
    UniformRectangle {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    /// Equal mixture of the uniform laws on `[-1, 1] x {1}` and `[-1, 1] x {-1}`.
    TwoSegments,
    CustomMixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Uniform on an axis-aligned box; axes with `lower == upper` are degenerate.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Atom {
        at: Vec<f64>,
    },
    /// Isotropic Gaussian. Sampling only.
    Gaussian {
        mean: Vec<f64>,
        std_dev: f64,
    },
}

impl Shape {
    fn dim(&self) -> usize {
        match self {
            Shape::Box { lower, .. } => lower.len(),
            Shape::Atom { at } => at.len(),
            Shape::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Shape::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box corners must have equal, non-zero dimension".into());
                }
                for (l, u) in lower.iter().zip(upper) {
                    if !(l.is_finite() && u.is_finite() && l <= u) {
                        return bad(format!("box side [{l}, {u}] is invalid"));
                    }
                }
            }
            Shape::Atom { at } => {
                Point::new(at.clone())?;
            }
            Shape::Gaussian { mean, std_dev } => {
                Point::new(mean.clone())?;
                if !(std_dev.is_finite() && *std_dev > 0.0) {
                    return bad(format!("gaussian std_dev {std_dev} must be positive"));
                }
            }
        }
        Ok(())
    }
}

impl NamedDistribution {
    /// The rectangle `[-1, 1] x [-1/2, 1/2]` of the first counterexample.
    pub fn standard_rectangle() -> Self {
        NamedDistribution::UniformRectangle {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -0.5,
            y_max: 0.5,
        }
    }

    /// Short tag used in reports.
    pub fn tag(&self) -> &'static str {
        match self {
            NamedDistribution::UniformRectangle { .. } => "uniform_rectangle",
            NamedDistribution::TwoSegments => "two_segments",
            NamedDistribution::CustomMixture { .. } => "custom_mixture",
        }
    }

    /// Mixture representation shared by sampling and discretization.
    pub fn components(&self) -> Result<Vec<MixtureComponent>> {
        let comps = match self {
            NamedDistribution::UniformRectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                if !(x_min < x_max && y_min < y_max) {
                    return Err(Error::InvalidParameter(format!(
                        "rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}] is empty"
                    )));
                }
                vec![MixtureComponent {
                    weight: 1.0,
                    shape: Shape::Box {
                        lower: vec![*x_min, *y_min],
                        upper: vec![*x_max, *y_max],
                    },
                }]
            }
            NamedDistribution::TwoSegments => [1.0, -1.0]
                .into_iter()
                .map(|y| MixtureComponent {
                    weight: 0.5,
                    shape: Shape::Box {
                        lower: vec![-1.0, y],
                        upper: vec![1.0, y],
                    },
                })
                .collect(),
            NamedDistribution::CustomMixture { components } => components.clone(),
        };
        let first = comps
            .first()
            .ok_or(Error::InvalidParameter("mixture has no components".into()))?;
        let dim = first.shape.dim();
        for c in &comps {
            c.shape.validate()?;
            if c.shape.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.shape.dim(),
                });
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mixture weight {} must be positive",
                    c.weight
                )));
            }
        }
        Ok(comps)
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.components()?[0].shape.dim())
    }
}

/// Draws `n` points from `dist`; the output depends only on `(dist, n, seed)`.
pub fn sample(dist: &NamedDistribution, n: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample size must be at least 1".into(),
        ));
    }
    let comps = dist.components()?;
    let chooser = WeightedIndex::new(comps.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let comp = &comps[chooser.sample(&mut rng)];
        let coords = match &comp.shape {
            Shape::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + rng.random::<f64>() * (u - l))
                .collect(),
            Shape::Atom { at } => at.clone(),
            Shape::Gaussian { mean, std_dev } => {
                let normal = Normal::new(0.0, *std_dev)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                mean.iter().map(|m| m + normal.sample(&mut rng)).collect()
            }
        };
        out.push(Point::new(coords)?);
    }
    Ok(out)
}

/// Deterministic cell-centered quadrature of `dist`.
///
/// Each box component gets `resolution` cells along its longest side and a
/// proportional number (at least one) along the others; degenerate sides get a
/// single cell. Atoms are kept as is. Gaussian components are rejected.
pub fn grid_discretize(dist: &NamedDistribution, resolution: usize) -> Result<DiscreteMeasure> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let comps = dist.components()?;
    let mut points = Vec::new();
    let mut masses = Vec::new();
    for comp in &comps {
        match &comp.shape {
            Shape::Box { lower, upper } => {
                let sides: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
                let longest = sides.iter().copied().fold(0.0, f64::max);
                let counts: Vec<usize> = sides
                    .iter()
                    .map(|&s| {
                        if s == 0.0 {
                            1
                        } else {
                            ((resolution as f64 * s / longest).round() as usize).max(1)
                        }
                    })
                    .collect();
                let cells = counts
                    .iter()
                    .try_fold(1usize, |acc, &c| acc.checked_mul(c))
                    .filter(|&c| c <= MAX_GRID_CELLS)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "grid with {counts:?} cells exceeds {MAX_GRID_CELLS}"
                        ))
                    })?;
                let mass = comp.weight / cells as f64;
                let mut index = vec![0usize; counts.len()];
                for _ in 0..cells {
                    let coords = index
                        .iter()
                        .enumerate()
                        .map(|(a, &i)| {
                            if sides[a] == 0.0 {
                                lower[a]
                            } else {
                                lower[a] + (i as f64 + 0.5) * (sides[a] / counts[a] as f64)
                            }
                        })
                        .collect();
                    points.push(Point::new(coords)?);
                    masses.push(mass);
                    // odometer increment, last axis fastest
                    for a in (0..index.len()).rev() {
                        index[a] += 1;
                        if index[a] < counts[a] {
                            break;
                        }
                        index[a] = 0;
                    }
                }
            }
            Shape::Atom { at } => {
                points.push(Point::new(at.clone())?);
                masses.push(comp.weight);
            }
            Shape::Gaussian { .. } => {
                return Err(Error::UnsupportedDistribution(format!(
                    "{} with a gaussian component",
                    dist.tag()
                )))
            }
        }
    }
    DiscreteMeasure::from_masses(points, masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_samples_stay_inside() {
        let d = NamedDistribution::UniformRectangle {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -0.5,
            y_max: 0.5,
        };
        let pts = sample(&d, 1000, 7).unwrap();
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| {
            let c = p.coords();
            (-1.0..=1.0).contains(&c[0]) && (-0.5..=0.5).contains(&c[1])
        }));
    }

    #[test]
    fn two_segment_samples_lie_on_segments() {
        let pts = sample(&NamedDistribution::TwoSegments, 500, 1).unwrap();
        assert!(pts
            .iter()
            .all(|p| p.coords()[1].abs() == 1.0 && p.coords()[0].abs() <= 1.0));
        assert!(pts.iter().any(|p| p.coords()[1] > 0.0));
        assert!(pts.iter().any(|p| p.coords()[1] < 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = NamedDistribution::standard_rectangle();
        assert_eq!(sample(&d, 50, 11).unwrap(), sample(&d, 50, 11).unwrap());
        assert_ne!(sample(&d, 50, 11).unwrap(), sample(&d, 50, 12).unwrap());
    }

    #[test]
    fn sample_rejects_bad_parameters() {
        assert!(sample(&NamedDistribution::TwoSegments, 0, 1).is_err());
        let empty = NamedDistribution::UniformRectangle {
            x_min: 1.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        assert!(matches!(
            sample(&empty, 3, 1),
            Err(Error::InvalidParameter(_))
        ));
        let negative = NamedDistribution::CustomMixture {
            components: vec![MixtureComponent {
                weight: -1.0,
                shape: Shape::Atom { at: vec![0.0] },
            }],
        };
        assert!(sample(&negative, 3, 1).is_err());
    }

    #[test]
    fn coarse_rectangle_grid_has_two_atoms() {
        let m = grid_discretize(&NamedDistribution::standard_rectangle(), 2).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.atoms()[0].coords(), &[-0.5, 0.0]);
        assert_eq!(m.atoms()[1].coords(), &[0.5, 0.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn rectangle_grid_shape() {
        let m = grid_discretize(&NamedDistribution::standard_rectangle(), 400).unwrap();
        assert_eq!(m.len(), 400 * 200);
    }

    #[test]
    fn two_segment_grid() {
        for r in [2, 5, 16] {
            let m = grid_discretize(&NamedDistribution::TwoSegments, r).unwrap();
            assert_eq!(m.len(), 2 * r);
            for (p, w) in m.iter() {
                assert_eq!(p.coords()[1].abs(), 1.0);
                assert!((w - 1.0 / (2 * r) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grid_weights_are_normalized() {
        let mixture = NamedDistribution::CustomMixture {
            components: vec![
                MixtureComponent {
                    weight: 0.3,
                    shape: Shape::Box {
                        lower: vec![0.0, 0.0, 0.0],
                        upper: vec![1.0, 2.0, 0.0],
                    },
                },
                MixtureComponent {
                    weight: 0.7,
                    shape: Shape::Atom {
                        at: vec![5.0, 5.0, 5.0],
                    },
                },
            ],
        };
        for dist in [
            NamedDistribution::standard_rectangle(),
            NamedDistribution::TwoSegments,
            mixture,
        ] {
            for r in [2, 3, 17, 100] {
                let m = grid_discretize(&dist, r).unwrap();
                assert!((m.total_mass() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn grid_rejects_gaussian_and_low_resolution() {
        let g = NamedDistribution::CustomMixture {
            components: vec![MixtureComponent {
                weight: 1.0,
                shape: Shape::Gaussian {
                    mean: vec![0.0],
                    std_dev: 1.0,
                },
            }],
        };
        assert!(matches!(
            grid_discretize(&g, 10),
            Err(Error::UnsupportedDistribution(_))
        ));
        assert!(sample(&g, 10, 0).is_ok());
        assert!(grid_discretize(&NamedDistribution::TwoSegments, 1).is_err());
    }
}
