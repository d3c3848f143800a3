//! Run configuration (JSON) and the affine map between the user's input
//! domain and `[0, 1]^d`.

use serde::{Deserialize, Serialize};

use crate::basis::KnotGrid;
use crate::error::{CgpError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::DEFAULT_JITTER;
use crate::model::{ConstraintKind, Curvature, Direction, ModelOptions, DEFAULT_MAX_COEFFICIENTS};
use crate::tmvn::{SamplerConfig, SamplerMethod};

/// Acceptance rate over the probe below which `auto` switches to Gibbs.
pub const AUTO_MIN_ACCEPTANCE: f64 = 1e-3;
/// Proposals used to measure the acceptance rate for `auto`.
pub const AUTO_PROBE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Length-scales are in the units of the input columns.
    pub kernel: KernelSpec,
    pub constraint: ConstraintConfig,
    /// Knot subdivisions, one number for all dimensions or one per dimension.
    pub subdivisions: PerDim,
    /// `[min, max]` per input dimension; defaults to `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub sampler: SamplerSection,
    /// Evaluation points per dimension; defaults to 501 in 1-D, 101 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PerDim>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_max_coefficients")]
    pub max_coefficients: usize,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

fn default_max_coefficients() -> usize {
    DEFAULT_MAX_COEFFICIENTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim {
    All(usize),
    Each(Vec<usize>),
}

impl PerDim {
    pub fn resolve(&self, d: usize, what: &str) -> Result<Vec<usize>> {
        match self {
            PerDim::All(v) => Ok(vec![*v; d]),
            PerDim::Each(v) if v.len() == d => Ok(v.clone()),
            PerDim::Each(v) => Err(CgpError::Config(format!(
                "{what} lists {} values for {d} input dimensions",
                v.len()
            ))),
        }
    }
}

/// Functional constraint. Bounds are in output units; `null` or a missing
/// side means unbounded. Isotonic `dims` are 1-based column positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Bounds {
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    MonotoneC0 {
        #[serde(default)]
        direction: Direction,
    },
    MonotoneC1 {
        #[serde(default)]
        direction: Direction,
    },
    Convex {
        #[serde(default)]
        curvature: Curvature,
    },
    Isotonic {
        dims: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directions: Option<Vec<Direction>>,
    },
}

impl ConstraintConfig {
    pub fn to_kind(&self) -> Result<ConstraintKind> {
        Ok(match self {
            ConstraintConfig::Bounds { lower, upper } => ConstraintKind::Bounds {
                lower: lower.unwrap_or(f64::NEG_INFINITY),
                upper: upper.unwrap_or(f64::INFINITY),
            },
            ConstraintConfig::MonotoneC0 { direction } => ConstraintKind::MonotoneC0(*direction),
            ConstraintConfig::MonotoneC1 { direction } => ConstraintKind::MonotoneC1(*direction),
            ConstraintConfig::Convex { curvature } => ConstraintKind::Convex(*curvature),
            ConstraintConfig::Isotonic { dims, directions } => {
                if dims.contains(&0) {
                    return Err(CgpError::Config("isotonic dims are 1-based".into()));
                }
                let directions = directions
                    .clone()
                    .unwrap_or_else(|| vec![Direction::Increasing; dims.len()]);
                ConstraintKind::Isotonic {
                    dims: dims.iter().map(|k| k - 1).collect(),
                    directions,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    /// Rejection from the mode, or Gibbs when its acceptance rate is too low.
    #[default]
    Auto,
    Rejection,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub method: MethodChoice,
    pub seed: u64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub max_rejection_tries: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            method: MethodChoice::Auto,
            seed: d.seed,
            n_samples: d.n_samples,
            burn_in: d.burn_in,
            thinning: d.thinning,
            max_rejection_tries: d.max_rejection_tries,
        }
    }
}

impl SamplerSection {
    /// Concrete sampler settings for `method`.
    pub fn with_method(&self, method: SamplerMethod) -> SamplerConfig {
        SamplerConfig {
            method,
            seed: self.seed,
            n_samples: self.n_samples,
            burn_in: self.burn_in,
            thinning: self.thinning,
            max_rejection_tries: self.max_rejection_tries,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CgpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Cross-field checks that need no data.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let d = self.dim();
        let kind = self.constraint.to_kind()?;
        self.kernel.capability(&kind)?;
        for n in self.subdivisions.resolve(d, "subdivisions")? {
            KnotGrid::uniform(n)?;
        }
        if let Some(g) = &self.grid {
            if g.resolve(d, "grid")?.iter().any(|&r| r < 2) {
                return Err(CgpError::Config("grid resolution must be at least 2".into()));
            }
        }
        self.transform()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CgpError::Config(format!("alpha = {} is outside (0, 1]", self.alpha)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(CgpError::Config(format!("jitter = {} must be non-negative", self.jitter)));
        }
        if let ConstraintKind::Bounds { lower, upper } = kind {
            if lower.is_nan() || upper.is_nan() || lower >= upper {
                return Err(CgpError::Config(format!("bounds need lower < upper, got [{lower}, {upper}]")));
            }
        }
        if let ConstraintKind::Isotonic { dims, directions } = &kind {
            if dims.len() != directions.len() {
                return Err(CgpError::Config("isotonic dims and directions differ in length".into()));
            }
        }
        Ok(())
    }

    pub fn transform(&self) -> Result<DomainTransform> {
        let d = self.dim();
        let bounds = match &self.domain {
            None => vec![[0.0, 1.0]; d],
            Some(b) if b.len() == d => b.clone(),
            Some(b) => {
                return Err(CgpError::Config(format!("domain lists {} ranges for {d} input dimensions", b.len())))
            }
        };
        DomainTransform::new(bounds)
    }

    pub fn grid_resolution(&self) -> Result<Vec<usize>> {
        let d = self.dim();
        match &self.grid {
            Some(g) => g.resolve(d, "grid"),
            None => Ok(vec![if d == 1 { 501 } else { 101 }; d]),
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            jitter: self.jitter,
            max_coefficients: self.max_coefficients,
        }
    }
}

/// `u_k = (x_k − min_k) / (max_k − min_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTransform {
    pub bounds: Vec<[f64; 2]>,
}

impl DomainTransform {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        for &[lo, hi] in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CgpError::Config(format!("domain range [{lo}, {hi}] is empty or not finite")));
            }
        }
        Ok(DomainTransform { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.bounds[k][1] - self.bounds[k][0]
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(CgpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.bounds)
            .map(|(&v, &[lo, hi])| {
                if v == hi {
                    1.0
                } else {
                    (v - lo) / (hi - lo)
                }
            })
            .collect())
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&v, &[lo, hi])| if v == 1.0 { hi } else { lo + v * (hi - lo) })
            .collect()
    }

    /// Length-scales expressed on `[0, 1]^d`.
    pub fn scale_kernel(&self, kernel: &KernelSpec) -> KernelSpec {
        KernelSpec {
            lengthscales: kernel
                .lengthscales
                .iter()
                .enumerate()
                .map(|(k, &l)| l / self.width(k))
                .collect(),
            ..kernel.clone()
        }
    }
}
