//! Builds charts and transform data from job specs.

use crate::config::{ConstructionSpec, PartSpec, TransformSpec};
use anyhow::{anyhow, bail, Result};
use moebius::chart::{AmbientForm, Domain, ImmersionChart};
use moebius::constructions::{
    christoffel_product, christoffel_warped, circle_chart, cyclide, darboux_curve_factor,
    darboux_sphere_factor, darboux_warped, extrinsic_product, frenet_frame, helix_chart,
    hyperbolic_chart, moore_family, point_chart, segment_chart, sphere_chart, theta_family,
    warped_product_chart, DarbouxOdeState,
};
use moebius::fields::{ScalarField, VectorField};
use moebius::jet::Jet;
use moebius::transforms::CombescureData;
use nalgebra::DVector;
use std::sync::Arc;

fn span_domain(span: [f64; 2], res: usize) -> Result<Domain> {
    Ok(Domain::interval(span[0], span[1], res)?)
}

/// Default angle box for sphere/hyperbolic charts, with polar margins.
fn angle_box(dim: usize, res: usize) -> Result<Domain> {
    let mut lo = vec![0.15];
    let mut hi = vec![6.13];
    for _ in 1..dim {
        lo.insert(0, 0.35);
        hi.insert(0, std::f64::consts::PI - 0.35);
    }
    Ok(Domain::new(lo, hi, vec![res; dim])?)
}

pub fn build_part(part: &PartSpec, res: usize) -> Result<ImmersionChart> {
    Ok(match part {
        PartSpec::Circle {
            center,
            radius,
            span,
        } => circle_chart(*center, *radius, span_domain(*span, res)?)?,
        PartSpec::Segment {
            point,
            direction,
            span,
        } => segment_chart(
            DVector::from_vec(point.clone()),
            DVector::from_vec(direction.clone()),
            span_domain(*span, res)?,
        )?,
        PartSpec::Helix { a, b, span } => helix_chart(*a, *b, span_domain(*span, res)?)?,
        PartSpec::Sphere {
            dim,
            curvature,
            lo,
            hi,
        } => {
            let domain = match (lo, hi) {
                (Some(lo), Some(hi)) => Domain::new(lo.clone(), hi.clone(), vec![res; *dim])?,
                _ => angle_box(*dim, res)?,
            };
            sphere_chart(*dim, *curvature, domain)?
        }
        PartSpec::Hyperbolic {
            dim,
            curvature,
            lo,
            hi,
        } => {
            let domain = match (lo, hi) {
                (Some(lo), Some(hi)) => Domain::new(lo.clone(), hi.clone(), vec![res; *dim])?,
                _ => Domain::new(vec![-0.6; *dim], vec![0.6; *dim], vec![res; *dim])?,
            };
            hyperbolic_chart(*dim, *curvature, domain)?
        }
        PartSpec::SmallCircle {
            curvature,
            height,
            span,
        } => {
            let total = 1.0 / curvature;
            let r2 = total - height * height;
            if !(r2 > 0.0) {
                bail!("small circle height exceeds the sphere radius");
            }
            let r = r2.sqrt();
            let z = *height;
            ImmersionChart::analytic(
                span_domain(*span, res)?,
                AmbientForm::Euclidean(3),
                move |u: &[Jet]| {
                    let n = u[0].n();
                    vec![
                        u[0].cos().scale(r),
                        u[0].sin().scale(r),
                        Jet::constant(z, n),
                    ]
                },
            )
        }
        PartSpec::ExponentialRay { span } => ImmersionChart::analytic(
            span_domain(*span, res)?,
            AmbientForm::Euclidean(1),
            |u: &[Jet]| vec![u[0].exp()],
        ),
        PartSpec::Point { coords } => point_chart(DVector::from_vec(coords.clone())),
    })
}

/// The constructed chart plus the factor charts needed by transforms.
pub struct BuiltChart {
    pub chart: ImmersionChart,
    pub parts: Vec<ImmersionChart>,
}

pub fn build_construction(spec: &ConstructionSpec, res: usize) -> Result<BuiltChart> {
    Ok(match spec {
        ConstructionSpec::Cyclide { n, m, c } => BuiltChart {
            chart: cyclide(*n, *m, *c, res)?,
            parts: Vec::new(),
        },
        ConstructionSpec::Moore { c, parts, v_extra } => {
            let built: Vec<ImmersionChart> = parts
                .iter()
                .map(|p| build_part(p, res))
                .collect::<Result<_>>()?;
            let v = v_extra.clone().map(DVector::from_vec);
            BuiltChart {
                chart: moore_family(&built, *c, v, None)?,
                parts: built,
            }
        }
        ConstructionSpec::Theta { hyperbolic, parts } => {
            let hyp = build_part(hyperbolic, res)?;
            let built: Vec<ImmersionChart> = parts
                .iter()
                .map(|p| build_part(p, res))
                .collect::<Result<_>>()?;
            BuiltChart {
                chart: theta_family(&hyp, &built, None)?,
                parts: built,
            }
        }
        ConstructionSpec::Product { parts, v_extra } => {
            let built: Vec<ImmersionChart> = parts
                .iter()
                .map(|p| build_part(p, res))
                .collect::<Result<_>>()?;
            let v = v_extra.clone().map(DVector::from_vec);
            let (chart, _) = extrinsic_product(&built, v)?;
            BuiltChart {
                chart,
                parts: built,
            }
        }
        ConstructionSpec::Warped { curve, sphere } => {
            let g1 = build_part(curve, res)?;
            let g2 = build_part(sphere, res)?;
            BuiltChart {
                chart: warped_product_chart(&g1, &g2)?,
                parts: vec![g1, g2],
            }
        }
    })
}

/// Transform construction output: the data, its host, and an optional
/// first-integral drift (curve-factor case).
pub struct BuiltTransform {
    pub host: Arc<ImmersionChart>,
    pub data: CombescureData,
    pub drift: Option<f64>,
}

pub fn build_transform(
    spec: &TransformSpec,
    construction: &ConstructionSpec,
    built: &BuiltChart,
) -> Result<BuiltTransform> {
    match spec {
        TransformSpec::Trivial { a, v } => {
            let host = Arc::new(built.chart.clone());
            let dim = host.ambient.dim();
            let n = host.domain.dim();
            let v = v
                .clone()
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(dim));
            if v.len() != dim {
                bail!("translation vector must have the ambient dimension");
            }
            let hj = host
                .jet_closure()
                .ok_or_else(|| anyhow!("trivial transform needs an analytic chart"))?;
            let a0 = *a;
            let vc = v.clone();
            let cal_f = VectorField::analytic(n, dim, move |u: &[Jet]| {
                let f = hj(u);
                f.iter()
                    .enumerate()
                    .map(|(i, c)| &c.scale(a0) + &Jet::constant(vc[i], u[0].n()))
                    .collect()
            });
            let hj2 = host
                .jet_closure()
                .ok_or_else(|| anyhow!("trivial transform needs an analytic chart"))?;
            let vc2 = v;
            let phi = ScalarField::analytic(n, move |u: &[Jet]| {
                let f = hj2(u);
                let mut acc = moebius::jet::norm_sq(&f).scale(0.5 * a0);
                for (i, c) in f.iter().enumerate() {
                    acc = &acc + &c.scale(vc2[i]);
                }
                acc
            });
            let data = CombescureData::new(host.clone(), phi, cal_f)?;
            Ok(BuiltTransform {
                host,
                data,
                drift: None,
            })
        }
        TransformSpec::ChristoffelProduct { a, v } => {
            let [f1, f2] = two_parts(construction, built, "christoffel-product")?;
            let (host, data) =
                christoffel_product(f1, f2, *a, v.clone().map(DVector::from_vec))?;
            Ok(BuiltTransform {
                host,
                data,
                drift: None,
            })
        }
        TransformSpec::ChristoffelWarped { a, v } => {
            let [g1, g2] = warped_parts(construction, built)?;
            let out = christoffel_warped(g1, g2, *a, v.clone().map(DVector::from_vec))?;
            Ok(BuiltTransform {
                host: out.host,
                data: out.data,
                drift: None,
            })
        }
        TransformSpec::DarbouxSphereFactor { center, radius } => {
            let [g1, g2] = two_parts(construction, built, "darboux-sphere-factor")?;
            let (host, data) =
                darboux_sphere_factor(g1, g2, DVector::from_vec(center.clone()), *radius)?;
            Ok(BuiltTransform {
                host,
                data,
                drift: None,
            })
        }
        TransformSpec::DarbouxCurveFactor {
            lambda,
            beta,
            v,
            drift_tol,
        } => {
            let [alpha, g2] = two_parts(construction, built, "darboux-curve-factor")?;
            let fd = frenet_frame(alpha)?;
            let initial = DarbouxOdeState {
                lambda: *lambda,
                beta: *beta,
                v: v.clone(),
            };
            let out = darboux_curve_factor(&fd, g2, &initial, drift_tol.unwrap_or(1e-7))?;
            Ok(BuiltTransform {
                host: out.host,
                data: out.data,
                drift: Some(out.k_drift),
            })
        }
        TransformSpec::DarbouxWarped {} => {
            let [g1, g2] = warped_parts(construction, built)?;
            let (host, data) = darboux_warped(g1, g2)?;
            Ok(BuiltTransform {
                host,
                data,
                drift: None,
            })
        }
    }
}

fn two_parts<'a>(
    construction: &ConstructionSpec,
    built: &'a BuiltChart,
    what: &str,
) -> Result<[&'a ImmersionChart; 2]> {
    match construction {
        ConstructionSpec::Product { .. } if built.parts.len() == 2 => {
            Ok([&built.parts[0], &built.parts[1]])
        }
        _ => bail!("{what} needs a product construction with exactly two parts"),
    }
}

fn warped_parts<'a>(
    construction: &ConstructionSpec,
    built: &'a BuiltChart,
) -> Result<[&'a ImmersionChart; 2]> {
    match construction {
        ConstructionSpec::Warped { .. } if built.parts.len() == 2 => {
            Ok([&built.parts[0], &built.parts[1]])
        }
        _ => bail!("this transform needs a warped-product construction"),
    }
}
