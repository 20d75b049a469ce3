//! On-disk artifacts: sampled charts, transform outputs and verification
//! reports. Artifacts are self-describing JSON (header plus textual value
//! block) and carry the construction spec so later stages can rebuild the
//! exact chart. All files are written atomically (temp file plus rename).

use crate::config::{ConstructionSpec, TransformSpec};
use anyhow::{Context, Result};
use moebius::chart::ImmersionChart;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainHeader {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmbientHeader {
    pub form: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartArtifact {
    pub format_version: u32,
    pub construction: ConstructionSpec,
    pub resolution: usize,
    pub domain: DomainHeader,
    pub ambient: AmbientHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<Vec<Vec<usize>>>,
    /// Row-major grid of ambient points.
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformArtifact {
    pub format_version: u32,
    pub construction: ConstructionSpec,
    pub transform: TransformSpec,
    pub resolution: usize,
    pub domain: DomainHeader,
    /// The transformed immersion (second envelope or dual chart).
    pub values: Vec<Vec<f64>>,
    /// Scalar field of the data pair on the grid.
    pub phi: Vec<f64>,
    /// Transform vector field on the grid.
    pub congruence: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    /// Combescure classification of the data.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_integral_drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_samples: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn overall(checks: Vec<CheckResult>, config_hash: String, seed: u64) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        VerificationReport {
            format_version: FORMAT_VERSION,
            config_hash,
            seed,
            checks,
            pass,
        }
    }
}

pub fn sample_chart(chart: &ImmersionChart) -> Vec<Vec<f64>> {
    chart
        .domain
        .grid()
        .iter()
        .map(|u| chart.value(u).iter().copied().collect())
        .collect()
}

pub fn chart_artifact(
    construction: &ConstructionSpec,
    resolution: usize,
    chart: &ImmersionChart,
) -> ChartArtifact {
    ChartArtifact {
        format_version: FORMAT_VERSION,
        construction: construction.clone(),
        resolution,
        domain: DomainHeader {
            lo: chart.domain.lo.clone(),
            hi: chart.domain.hi.clone(),
            res: chart.domain.res.clone(),
        },
        ambient: AmbientHeader {
            form: if chart.ambient.is_lorentz() {
                "lorentz".into()
            } else {
                "euclidean".into()
            },
            dim: chart.ambient.dim(),
        },
        net: chart.net.as_ref().map(|n| n.blocks.clone()),
        values: sample_chart(chart),
    }
}

/// Atomic JSON write: temp file in the same directory, then rename.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string_pretty(value).context("serialize artifact")?;
    std::fs::write(&tmp, text.as_bytes())
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move artifact into place at {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("missing artifact {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub struct Paths {
    pub chart: PathBuf,
    pub transform: PathBuf,
    pub report: PathBuf,
}

pub fn paths(out_dir: &Path, basename: &str) -> Paths {
    Paths {
        chart: out_dir.join(format!("{basename}.chart.json")),
        transform: out_dir.join(format!("{basename}.transform.json")),
        report: out_dir.join(format!("{basename}.report.json")),
    }
}
