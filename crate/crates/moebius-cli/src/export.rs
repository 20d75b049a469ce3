//! Mesh and point-cloud export of sampled chart artifacts.

use crate::artifact::ChartArtifact;
use anyhow::{bail, Result};

/// OBJ mesh for 2-parameter charts in R^3: vertices row-major over the grid,
/// each grid quad split into two triangles, deterministic ordering.
pub fn to_obj(artifact: &ChartArtifact) -> Result<String> {
    if artifact.domain.res.len() != 2 || artifact.ambient.dim != 3 {
        bail!(
            "OBJ export needs a 2d chart in R^3 (got {}d into R^{})",
            artifact.domain.res.len(),
            artifact.ambient.dim
        );
    }
    let (r, s) = (artifact.domain.res[0], artifact.domain.res[1]);
    let mut out = String::new();
    for v in &artifact.values {
        out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for i in 0..r - 1 {
        for j in 0..s - 1 {
            let a = i * s + j + 1;
            let b = i * s + j + 2;
            let c = (i + 1) * s + j + 1;
            let d = (i + 1) * s + j + 2;
            out.push_str(&format!("f {a} {b} {d}\n"));
            out.push_str(&format!("f {a} {d} {c}\n"));
        }
    }
    Ok(out)
}

/// CSV point cloud: header `u1..un,x1..xN`, one row per grid node.
pub fn to_csv(artifact: &ChartArtifact) -> String {
    let n = artifact.domain.res.len();
    let dim = artifact.ambient.dim;
    let mut out = String::new();
    let mut header = Vec::new();
    for k in 0..n {
        header.push(format!("u{}", k + 1));
    }
    for k in 0..dim {
        header.push(format!("x{}", k + 1));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let domain = moebius::chart::Domain {
        lo: artifact.domain.lo.clone(),
        hi: artifact.domain.hi.clone(),
        res: artifact.domain.res.clone(),
    };
    for (u, v) in domain.grid().iter().zip(&artifact.values) {
        let mut row: Vec<String> = u.iter().map(|x| format!("{x}")).collect();
        row.extend(v.iter().map(|x| format!("{x}")));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
