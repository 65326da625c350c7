use super::{MultiPolygon, Point};
use crate::error::{Error, Result};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Distribution of the similarity factor for a scaled boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScaleDistribution {
    Constant {
        value: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// Admits non-positive draws; those are reported as errors when they occur.
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl ScaleDistribution {
    fn check(&self) -> std::result::Result<(), String> {
        let ok = match *self {
            ScaleDistribution::Constant { value } => value > 0.0 && value.is_finite(),
            ScaleDistribution::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0,
            ScaleDistribution::Uniform { low, high } => low.is_finite() && high > low,
            ScaleDistribution::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            ScaleDistribution::Normal { mean, sd } => mean.is_finite() && sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid scale distribution {self:?}"))
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            ScaleDistribution::Constant { value } => value,
            ScaleDistribution::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("checked").sample(rng)
            }
            ScaleDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ScaleDistribution::Gamma { shape, scale } => {
                Gamma::new(shape, scale).expect("checked").sample(rng)
            }
            ScaleDistribution::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("checked").sample(rng)
            }
        }
    }
}

/// How a region's geometry varies between realisations.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryModel {
    #[default]
    Fixed,
    /// Contraction or expansion of the nominal geometry about `anchor`
    /// (the centroid when absent).
    Scale {
        factor: ScaleDistribution,
        #[serde(default)]
        anchor: Option<Point>,
    },
    /// One of several candidate geometries, chosen with probability
    /// proportional to its weight.
    Mixture {
        candidates: Vec<MultiPolygon>,
        weights: Vec<f64>,
    },
}

/// One realisation of a region's boundary variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryDraw {
    Fixed,
    Scale(f64),
    Mixture(usize),
}

/// An aggregation unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    /// Nominal geometry, used as-is for fixed regions.
    pub geometry: MultiPolygon,
    /// Relative propensity to report an event lying in an overlap.
    pub effort: f64,
    pub boundary: BoundaryModel,
    /// Time indices at which the region reports; `None` means every time.
    pub active_times: Option<Vec<usize>>,
}

impl Region {
    pub fn new(id: impl Into<String>, geometry: MultiPolygon) -> Self {
        Region {
            id: id.into(),
            geometry,
            effort: 1.0,
            boundary: BoundaryModel::Fixed,
            active_times: None,
        }
    }

    pub fn with_effort(mut self, effort: f64) -> Self {
        self.effort = effort;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryModel) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_active_times(mut self, times: Vec<usize>) -> Self {
        self.active_times = Some(times);
        self
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.active_times.as_ref().is_none_or(|ts| ts.contains(&t))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry
            .validate()
            .map_err(|e| e.with_region(&self.id))?;
        if self.geometry.area() <= 0.0 {
            return Err(Error::geometry("region has zero area").with_region(&self.id));
        }
        if !(self.effort > 0.0 && self.effort.is_finite()) {
            return Err(Error::Effort(format!(
                "region `{}` has non-positive effort {}",
                self.id, self.effort
            )));
        }
        let bad = |reason: String| Error::BoundaryModel {
            region: self.id.clone(),
            reason,
        };
        match &self.boundary {
            BoundaryModel::Fixed => {}
            BoundaryModel::Scale { factor, anchor } => {
                factor.check().map_err(bad)?;
                if let Some(a) = anchor {
                    if !self.geometry.bbox().contains(*a) {
                        return Err(bad(format!(
                            "anchor ({}, {}) lies outside the bounding box",
                            a.x, a.y
                        )));
                    }
                }
            }
            BoundaryModel::Mixture {
                candidates,
                weights,
            } => {
                if candidates.is_empty() || candidates.len() != weights.len() {
                    return Err(bad(format!(
                        "{} candidates but {} weights",
                        candidates.len(),
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(bad("mixture weights must be positive".into()));
                }
                for c in candidates {
                    c.validate().map_err(|e| e.with_region(&self.id))?;
                }
            }
        }
        Ok(())
    }

    /// Geometry implied by one boundary draw.
    pub fn realise(&self, draw: BoundaryDraw) -> Result<MultiPolygon> {
        match (&self.boundary, draw) {
            (_, BoundaryDraw::Fixed) => Ok(self.geometry.clone()),
            (BoundaryModel::Scale { anchor, .. }, BoundaryDraw::Scale(f)) => {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(Error::BoundaryModel {
                        region: self.id.clone(),
                        reason: format!("scale factor draw {f} is not positive"),
                    });
                }
                let a = anchor.unwrap_or_else(|| self.geometry.centroid());
                Ok(self
                    .geometry
                    .map_points(|p| Point::new(a.x + f * (p.x - a.x), a.y + f * (p.y - a.y))))
            }
            (BoundaryModel::Mixture { candidates, .. }, BoundaryDraw::Mixture(k)) => candidates
                .get(k)
                .cloned()
                .ok_or_else(|| Error::BoundaryModel {
                    region: self.id.clone(),
                    reason: format!("mixture index {k} out of range"),
                }),
            (model, draw) => Err(Error::BoundaryModel {
                region: self.id.clone(),
                reason: format!("draw {draw:?} does not match model {model:?}"),
            }),
        }
    }
}

/// The aggregation units of a study, in a fixed order. Region indices used
/// throughout the crate refer to positions in this set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub regions: Vec<Region>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let set = RegionSet { regions };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, r) in self.regions.iter().enumerate() {
            if let Some(prev) = seen.insert(r.id.as_str(), i) {
                return Err(Error::Validation(format!(
                    "duplicate region id `{}` (features {prev} and {i})",
                    r.id
                )));
            }
            r.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Region> {
        self.regions.iter()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    pub fn efforts(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.effort).collect()
    }

    pub fn all_fixed(&self) -> bool {
        self.regions
            .iter()
            .all(|r| matches!(r.boundary, BoundaryModel::Fixed))
    }

    /// Bit-mask style key of the regions active at time `t`.
    pub fn active_at(&self, t: usize) -> Vec<bool> {
        self.regions.iter().map(|r| r.is_active(t)).collect()
    }
}

/// Joint distribution of the boundary variables of all regions.
///
/// Implement this to correlate boundary draws across regions; the default
/// [`IndependentBoundaries`] draws each region separately from its own model.
pub trait BoundaryPrior: Send + Sync {
    fn draw(&self, regions: &RegionSet, rng: &mut dyn RngCore) -> Result<Vec<BoundaryDraw>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IndependentBoundaries;

impl BoundaryPrior for IndependentBoundaries {
    fn draw(&self, regions: &RegionSet, rng: &mut dyn RngCore) -> Result<Vec<BoundaryDraw>> {
        regions
            .iter()
            .map(|r| match &r.boundary {
                BoundaryModel::Fixed => Ok(BoundaryDraw::Fixed),
                BoundaryModel::Scale { factor, .. } => {
                    let f = factor.sample(rng);
                    if f > 0.0 && f.is_finite() {
                        Ok(BoundaryDraw::Scale(f))
                    } else {
                        Err(Error::BoundaryModel {
                            region: r.id.clone(),
                            reason: format!("scale factor draw {f} is not positive"),
                        })
                    }
                }
                BoundaryModel::Mixture { weights, .. } => {
                    let total: f64 = weights.iter().sum();
                    let u = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = weights.len() - 1;
                    for (k, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    Ok(BoundaryDraw::Mixture(pick))
                }
            })
            .collect()
    }
}

/// Draws one boundary realisation and returns the concrete (fixed) regions.
pub fn realise_regions(
    regions: &RegionSet,
    prior: &dyn BoundaryPrior,
    rng: &mut dyn RngCore,
) -> Result<(RegionSet, Vec<BoundaryDraw>)> {
    let draws = prior.draw(regions, rng)?;
    let realised = regions
        .iter()
        .zip(&draws)
        .map(|(r, d)| {
            Ok(Region {
                id: r.id.clone(),
                geometry: r.realise(*d)?,
                effort: r.effort,
                boundary: BoundaryModel::Fixed,
                active_times: r.active_times.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((RegionSet { regions: realised }, draws))
}
