//! Verification check runners: each named check computes one residual and
//! compares it to its (possibly overridden) tolerance.

use crate::artifact::CheckResult;
use crate::builder::{BuiltChart, BuiltTransform};
use crate::config::{ConstructionSpec, JobConfig, TransformSpec};
use anyhow::{bail, Result};
use moebius::chart::ImmersionChart;
use moebius::fields::ScalarField;
use moebius::geometry::{
    adaptedness_check, conformality_check, dupin_residual, net_geometry_report,
    principal_curvature_fields, verify_alpha_f_split,
};
use moebius::lightcone::MoebiusFrame;
use moebius::transforms::{
    check_christoffel, check_darboux, combescure_differential_residual,
    combescure_second_form_residual, combescure_transform, ribaucour_transform,
    verify_ribaucour_relations, DarbouxVerdict,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default check list for a job.
pub fn applicable_checks(cfg: &JobConfig, chart: &ImmersionChart) -> Vec<String> {
    let mut out = vec!["conformality".to_string(), "lift-split".to_string()];
    if chart.net.is_some() {
        out.push("adaptedness".into());
        out.push("cp-net".into());
    }
    if matches!(cfg.construction, ConstructionSpec::Cyclide { .. }) {
        out.push("dupin".into());
    }
    match &cfg.transform {
        None => {}
        Some(TransformSpec::Trivial { .. }) => {
            out.extend([
                "combescure-compatibility".into(),
                "combescure-differential".into(),
                "combescure-second-form".into(),
            ]);
        }
        Some(TransformSpec::ChristoffelProduct { .. })
        | Some(TransformSpec::ChristoffelWarped { .. }) => {
            out.extend([
                "combescure-compatibility".into(),
                "combescure-differential".into(),
                "combescure-second-form".into(),
                "christoffel-conformality".into(),
            ]);
        }
        Some(TransformSpec::DarbouxSphereFactor { .. })
        | Some(TransformSpec::DarbouxWarped {}) => {
            out.extend(darboux_checks(false));
        }
        Some(TransformSpec::DarbouxCurveFactor { .. }) => {
            out.extend(darboux_checks(true));
        }
    }
    out
}

fn darboux_checks(curve: bool) -> Vec<String> {
    let mut out = vec![
        "combescure-compatibility".to_string(),
        "ribaucour-metric".to_string(),
        "ribaucour-connection".to_string(),
        "ribaucour-second-form".to_string(),
        "ribaucour-reflection".to_string(),
        "shape-commute".to_string(),
        "darboux-condition".to_string(),
    ];
    if curve {
        out.push("first-integral".into());
    }
    out
}

/// Conformality residual including seeded random tangent pairs.
fn conformality_residual(chart: &ImmersionChart, seed: u64) -> Result<f64> {
    let rep = conformality_check(chart)?;
    let mut worst = rep.residual;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = chart.domain.dim();
    for (u, phi) in chart.domain.grid().iter().zip(&rep.factors) {
        let jet = chart.jet(u);
        let b = chart.base_metric.metric(u);
        for _ in 0..4 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0));
            let mut dfx = DVector::zeros(chart.ambient.dim());
            let mut dfy = DVector::zeros(chart.ambient.dim());
            for k in 0..n {
                dfx += jet.d(k) * x[k];
                dfy += jet.d(k) * y[k];
            }
            let lhs = chart.ambient.inner(&dfx, &dfy);
            let rhs = phi * phi * (&b * &x).dot(&y);
            let scale = (chart.ambient.inner(&dfx, &dfx).abs()
                * chart.ambient.inner(&dfy, &dfy).abs())
            .sqrt()
            .max(1e-300);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// Conformal factor of the chart against its base metric, as a sampled field.
fn recovered_factor(chart: &ImmersionChart) -> ScalarField {
    let c = chart.clone();
    let n = chart.domain.dim();
    let steps = chart.fd_steps();
    ScalarField::sampled(
        n,
        move |u: &[f64]| {
            let jet = c.jet(u);
            let g = DMatrix::from_fn(n, n, |a, b| c.ambient.inner(&jet.d(a), &jet.d(b)));
            let b = c.base_metric.metric(u);
            // The positive root: the factor keeps one sign on a connected
            // chart and the split identity is sign-symmetric in it.
            (g.determinant() / b.determinant()).powf(1.0 / (2.0 * n as f64))
        },
        steps,
    )
}

fn metric_ratio_residual(transform: &BuiltTransform, chart: &ImmersionChart) -> Result<f64> {
    let host = &transform.host;
    let n = host.domain.dim();
    let mut worst: f64 = 0.0;
    for u in host.domain.grid() {
        let jh = host.jet(&u);
        let jt = chart.jet(&u);
        let gh = DMatrix::from_fn(n, n, |i, j| jh.d(i).dot(&jh.d(j)));
        let gt = DMatrix::from_fn(n, n, |i, j| jt.d(i).dot(&jt.d(j)));
        let s = transform.data.s_matrix(&u)?;
        let l2 = (&s * &s).trace() / n as f64;
        worst = worst.max((&gt - &gh * l2).norm() / gt.norm().max(1e-300));
    }
    Ok(worst)
}

pub fn run_checks(
    cfg: &JobConfig,
    built: &BuiltChart,
    transform: Option<&BuiltTransform>,
    names: &[String],
) -> Result<Vec<CheckResult>> {
    let chart = &built.chart;
    let seed = cfg.seed();
    let mut results = Vec::new();
    // Ribaucour byproducts shared between checks.
    let mut ribaucour = None;
    for name in names {
        let tolerance = cfg.tolerance(name)?;
        let residual = match name.as_str() {
            "conformality" => conformality_residual(chart, seed)?,
            "adaptedness" => {
                let net = chart
                    .net
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("chart has no product net"))?;
                adaptedness_check(chart, &net)?.residual
            }
            "cp-net" => {
                let net = chart
                    .net
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("chart has no product net"))?;
                let rep = net_geometry_report(chart, &net)?;
                rep.max_umbilic().max(rep.max_cp())
            }
            "lift-split" => {
                let frame = MoebiusFrame::canonical(chart.ambient.dim());
                let phi = recovered_factor(chart);
                verify_alpha_f_split(&frame, chart, &phi)?.residual
            }
            "dupin" => {
                let field = principal_curvature_fields(chart)?;
                dupin_residual(chart, &field)?
            }
            "combescure-compatibility" => transform_data(transform)?.compatibility_residual()?,
            "combescure-differential" => {
                let t = transform.expect("checked");
                let out = combescure_transform(&t.data)?;
                combescure_differential_residual(&t.data, &out.chart.with_fd_jets())?
            }
            "combescure-second-form" => {
                let t = transform.expect("checked");
                let out = combescure_transform(&t.data)?;
                combescure_second_form_residual(&t.data, &out.chart)?
            }
            "christoffel-conformality" => {
                let t = transform_ref(transform)?;
                let rep = check_christoffel(&t.data, cfg.tolerance("christoffel-conformality")?)?;
                let out = combescure_transform(&t.data)?;
                rep.square_residual.max(metric_ratio_residual(t, &out.chart)?)
            }
            "ribaucour-metric" | "ribaucour-connection" | "ribaucour-second-form"
            | "ribaucour-reflection" | "shape-commute" => {
                let t = transform_ref(transform)?;
                if ribaucour.is_none() {
                    let (tilde, rdata) = ribaucour_transform(&t.data)?;
                    let residuals = verify_ribaucour_relations(&rdata, &tilde)?;
                    ribaucour = Some((rdata, residuals));
                }
                let (_, res) = ribaucour.as_ref().expect("cached");
                match name.as_str() {
                    "ribaucour-metric" => res.metric,
                    "ribaucour-connection" => res.connection,
                    "ribaucour-second-form" => res.second_form,
                    "ribaucour-reflection" => res.reflection,
                    _ => res.shape_commute,
                }
            }
            "darboux-condition" => {
                let t = transform_ref(transform)?;
                let (_, rdata) = ribaucour_transform(&t.data)?;
                let rep = check_darboux(&t.data, &rdata, cfg.tolerance("darboux-condition")?)?;
                match rep.verdict {
                    DarbouxVerdict::Darboux => rep.residual,
                    DarbouxVerdict::NotDarboux(_) => f64::INFINITY,
                }
            }
            "first-integral" => transform_ref(transform)?
                .drift
                .unwrap_or(f64::INFINITY),
            other => bail!("unknown check name {other}"),
        };
        results.push(CheckResult {
            check: name.clone(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        });
    }
    Ok(results)
}

fn transform_data<'a>(
    transform: Option<&'a BuiltTransform>,
) -> Result<&'a moebius::transforms::CombescureData> {
    Ok(&transform_ref(transform)?.data)
}

fn transform_ref(transform: Option<&BuiltTransform>) -> Result<&BuiltTransform> {
    transform.ok_or_else(|| anyhow::anyhow!("this check needs a transform artifact"))
}
