//! Job configuration schema (JSON).

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobConfig {
    pub construction: ConstructionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSpec>,
    /// Check names to run; absent means every applicable check, an empty
    /// list is a trivial pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-check tolerance overrides (ordered map for canonical output).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_scale: Option<f64>,
    /// Amplitude of a smooth non-product deformation applied to the chart
    /// (negative controls for the verification suite).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basename: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ConstructionSpec {
    /// Cyclide of characteristic (m, n-m) with conformal parameter c.
    Cyclide { n: usize, m: usize, c: f64 },
    /// Extrinsic product composed with an inversion (c = 0) or a
    /// stereographic projection (c > 0).
    Moore {
        c: f64,
        parts: Vec<PartSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_extra: Option<Vec<f64>>,
    },
    /// Hyperbolic factor times an extrinsic product of spheres through the
    /// canonical theta map.
    Theta {
        hyperbolic: PartSpec,
        parts: Vec<PartSpec>,
    },
    /// Plain extrinsic product (the host of the product-type transforms).
    Product {
        parts: Vec<PartSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_extra: Option<Vec<f64>>,
    },
    /// Warped product (x_1, ..., x_{m-1}, x_m * g2).
    Warped { curve: PartSpec, sphere: PartSpec },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartSpec {
    Circle {
        center: [f64; 2],
        radius: f64,
        span: [f64; 2],
    },
    Segment {
        point: Vec<f64>,
        direction: Vec<f64>,
        span: [f64; 2],
    },
    Helix {
        a: f64,
        b: f64,
        span: [f64; 2],
    },
    Sphere {
        dim: usize,
        curvature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<Vec<f64>>,
    },
    Hyperbolic {
        dim: usize,
        curvature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<Vec<f64>>,
    },
    /// Horizontal circle at the given height inside a round 2-sphere.
    SmallCircle {
        curvature: f64,
        height: f64,
        span: [f64; 2],
    },
    /// Exponential ray (e^t) in the open half-line.
    ExponentialRay { span: [f64; 2] },
    Point { coords: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransformSpec {
    Trivial {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v: Option<Vec<f64>>,
    },
    ChristoffelProduct {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v: Option<Vec<f64>>,
    },
    ChristoffelWarped {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v: Option<Vec<f64>>,
    },
    DarbouxSphereFactor {
        center: Vec<f64>,
        radius: f64,
    },
    DarbouxCurveFactor {
        lambda: f64,
        beta: f64,
        v: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drift_tol: Option<f64>,
    },
    DarbouxWarped {},
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: JobConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(res) = self.resolution {
            if res < 3 {
                bail!("resolution must be at least 3 per axis, got {res}");
            }
        }
        for (name, t) in &self.tolerances {
            if !(*t > 0.0) {
                bail!("tolerance for {name} must be positive, got {t}");
            }
        }
        if let Some(s) = self.tolerance_scale {
            if !(s > 0.0) {
                bail!("tolerance scale must be positive, got {s}");
            }
        }
        Ok(())
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(17)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn basename(&self) -> String {
        self.output
            .as_ref()
            .and_then(|o| o.basename.clone())
            .unwrap_or_else(|| "job".to_string())
    }

    /// Canonical serialization used for the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// FNV-1a hash of the canonical config bytes, as a hex string.
pub fn config_hash(cfg: &JobConfig) -> String {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for b in cfg.canonical_json().as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}

/// Default tolerance table for the verification checks.
pub fn default_tolerance(check: &str) -> Option<f64> {
    Some(match check {
        "conformality" => 1e-7,
        "adaptedness" => 1e-7,
        "lift-split" => 1e-6,
        "cp-net" => 1e-7,
        "dupin" => 1e-6,
        "combescure-compatibility" => 1e-7,
        "combescure-differential" => 1e-7,
        "combescure-second-form" => 1e-6,
        "christoffel-conformality" => 1e-7,
        "ribaucour-metric" => 1e-6,
        "ribaucour-connection" => 1e-6,
        "ribaucour-second-form" => 1e-6,
        "ribaucour-reflection" => 1e-8,
        "shape-commute" => 1e-7,
        "darboux-condition" => 1e-7,
        "first-integral" => 1e-7,
        _ => return None,
    })
}

impl JobConfig {
    /// Tolerance for a check: override, else table default, scaled.
    pub fn tolerance(&self, check: &str) -> Result<f64> {
        let base = self
            .tolerances
            .get(check)
            .copied()
            .or_else(|| default_tolerance(check));
        match base {
            Some(t) => Ok(t * self.tolerance_scale.unwrap_or(1.0)),
            None => bail!("unknown check name {check}"),
        }
    }
}
