//! Factories for the classified families of conformally-product immersions
//! (extrinsic products, stereographic and theta compositions, cyclides) and
//! the explicit Christoffel / Darboux transform data, including the Frenet
//! frame machinery and the linear ODE system feeding the curve-factor case.

use crate::chart::{AmbientForm, Domain, ImmersionChart, ProductNet};
use crate::error::{Error, Result};
use crate::fields::{QuinticSeries, ScalarField, VectorField};
use crate::jet::{self, Jet};
use crate::lightcone::{MoebiusFrame, StereographicMap, ThetaHalfspace, ThetaMap};
use crate::metric::{BlockMetric, MetricBlock, PullbackMetric};
use crate::ode;
use crate::transforms::CombescureData;
use nalgebra::DVector;
use std::sync::Arc;

/// Unit-speed circle of the given radius.
pub fn circle_chart(center: [f64; 2], radius: f64, domain: Domain) -> Result<ImmersionChart> {
    if !(radius > 0.0) {
        return Err(Error::ParameterRange("circle radius must be positive".into()));
    }
    if domain.dim() != 1 {
        return Err(Error::ParameterRange("circle chart needs a 1d domain".into()));
    }
    Ok(ImmersionChart::analytic(
        domain,
        AmbientForm::Euclidean(2),
        move |u| {
            let n = u[0].n();
            let t = u[0].scale(1.0 / radius);
            vec![
                &Jet::constant(center[0], n) + &t.cos().scale(radius),
                &Jet::constant(center[1], n) + &t.sin().scale(radius),
            ]
        },
    ))
}

/// Unit-speed straight line `p + t d` in `R^dim`.
pub fn segment_chart(point: DVector<f64>, direction: DVector<f64>, domain: Domain) -> Result<ImmersionChart> {
    if domain.dim() != 1 {
        return Err(Error::ParameterRange("segment chart needs a 1d domain".into()));
    }
    let dim = point.len();
    if direction.len() != dim || (direction.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::ParameterRange("segment direction must be unit".into()));
    }
    Ok(ImmersionChart::analytic(
        domain,
        AmbientForm::Euclidean(dim),
        move |u| {
            let n = u[0].n();
            (0..dim)
                .map(|i| &Jet::constant(point[i], n) + &u[0].scale(direction[i]))
                .collect()
        },
    ))
}

/// Unit-speed helix `(a cos ct, a sin ct, b ct)` with `c = 1/sqrt(a^2+b^2)`.
pub fn helix_chart(a: f64, b: f64, domain: Domain) -> Result<ImmersionChart> {
    if !(a > 0.0) {
        return Err(Error::ParameterRange("helix needs a > 0".into()));
    }
    let c = 1.0 / (a * a + b * b).sqrt();
    Ok(ImmersionChart::analytic(
        domain,
        AmbientForm::Euclidean(3),
        move |u| {
            let t = u[0].scale(c);
            vec![t.cos().scale(a), t.sin().scale(a), t.scale(b)]
        },
    ))
}

/// Angle chart of the sphere `S^d(c)` (radius `1/sqrt(c)`) in `R^{d+1}`.
pub fn sphere_chart(d: usize, curvature: f64, domain: Domain) -> Result<ImmersionChart> {
    if !(curvature > 0.0) {
        return Err(Error::ParameterRange("sphere curvature must be positive".into()));
    }
    if domain.dim() != d || d == 0 {
        return Err(Error::ParameterRange("sphere chart domain must match d >= 1".into()));
    }
    let r = 1.0 / curvature.sqrt();
    Ok(ImmersionChart::analytic(
        domain,
        AmbientForm::Euclidean(d + 1),
        move |u| {
            let n = u[0].n();
            let mut out = Vec::with_capacity(d + 1);
            let mut chain = Jet::constant(r, n);
            for i in 0..d {
                out.push(&chain * &u[i].cos());
                chain = &chain * &u[i].sin();
            }
            out.push(chain);
            out
        },
    ))
}

/// Hyperboloid chart of `H^d(-c)` in `L^{d+1}` (last coordinate timelike).
pub fn hyperbolic_chart(d: usize, curvature: f64, domain: Domain) -> Result<ImmersionChart> {
    if !(curvature > 0.0) {
        return Err(Error::ParameterRange("hyperbolic curvature parameter must be positive".into()));
    }
    if domain.dim() != d || d == 0 {
        return Err(Error::ParameterRange("hyperbolic chart domain must match d >= 1".into()));
    }
    let r = 1.0 / curvature.sqrt();
    Ok(ImmersionChart::analytic(
        domain,
        AmbientForm::Lorentz(d + 1),
        move |u| {
            let n = u[0].n();
            let mut out = Vec::with_capacity(d + 1);
            let mut chain = Jet::constant(r, n);
            for i in 0..d {
                out.push(&chain * &u[i].sinh());
                chain = &chain * &u[i].cosh();
            }
            out.push(chain);
            out
        },
    ))
}

/// A constant chart (zero-dimensional factor).
pub fn point_chart(value: DVector<f64>) -> ImmersionChart {
    let dim = value.len();
    ImmersionChart::sampled(Domain::point(), AmbientForm::Euclidean(dim), move |_u| {
        value.clone()
    })
}

/// Smoothly perturbs a chart (negative controls for adaptedness tests).
pub fn perturb_chart(chart: &ImmersionChart, eps: f64) -> ImmersionChart {
    let dim = chart.ambient.dim();
    chart.compose(chart.ambient.clone(), move |x| {
        let n = x[0].n();
        let mut phase = Jet::constant(0.0, n);
        for c in x.iter() {
            phase = &phase + &c.scale(1.7);
        }
        for (i, c) in x.iter().enumerate() {
            phase = &phase + &(c * &x[(i + 1) % x.len()]).scale(0.9);
        }
        let bump = phase.sin().scale(eps);
        (0..dim)
            .map(|i| {
                if i == 0 {
                    &x[0] + &bump
                } else {
                    x[i].clone()
                }
            })
            .collect()
    })
}

/// Block-diagonal juxtaposition of Euclidean charts, with an optional
/// constant block appended. Returns the product chart (base metric and net
/// installed) and, when every factor is spherical about the origin, the
/// curvature `c` of the sphere the image lies on.
pub fn extrinsic_product(
    parts: &[ImmersionChart],
    v_extra: Option<DVector<f64>>,
) -> Result<(ImmersionChart, Option<f64>)> {
    if parts.is_empty() {
        return Err(Error::ParameterRange("product needs at least one factor".into()));
    }
    let mut domain = Domain::point();
    let mut ambient_dim = 0usize;
    for p in parts {
        if p.ambient.is_lorentz() {
            return Err(Error::Compatibility(
                "extrinsic products take Euclidean factors".into(),
            ));
        }
        domain = domain.concat(&p.domain);
        ambient_dim += p.ambient.dim();
    }
    let extra = v_extra.clone().unwrap_or_else(|| DVector::zeros(0));
    ambient_dim += extra.len();
    if domain.dim() == 0 {
        return Err(Error::ParameterRange(
            "product of only constant factors".into(),
        ));
    }

    let offsets: Vec<(usize, usize, usize)> = {
        // (domain offset, domain dim, ambient offset)
        let mut out = Vec::new();
        let mut doff = 0;
        let mut aoff = 0;
        for p in parts {
            out.push((doff, p.domain.dim(), aoff));
            doff += p.domain.dim();
            aoff += p.ambient.dim();
        }
        out
    };

    let all_analytic = parts.iter().all(|p| p.has_analytic_jets() || p.domain.dim() == 0);
    let parts_owned: Vec<ImmersionChart> = parts.to_vec();
    let mut chart = if all_analytic {
        let closures: Vec<_> = parts_owned
            .iter()
            .map(|p| (p.jet_closure(), p.clone()))
            .collect();
        let extra2 = extra.clone();
        let offs = offsets.clone();
        ImmersionChart::analytic(
            domain.clone(),
            AmbientForm::Euclidean(ambient_dim),
            move |u: &[Jet]| {
                let n = u[0].n();
                let mut out = Vec::with_capacity(ambient_dim);
                for ((doff, ddim, _aoff), (cl, p)) in offs.iter().zip(&closures) {
                    if *ddim == 0 {
                        let v = p.value(&[]);
                        out.extend(jet::constants(&v, n));
                    } else {
                        out.extend(cl.as_ref().expect("analytic factor")(&u[*doff..doff + ddim]));
                    }
                }
                out.extend(jet::constants(&extra2, n));
                out
            },
        )
    } else {
        let offs = offsets.clone();
        let parts2 = parts_owned.clone();
        let extra2 = extra.clone();
        ImmersionChart::sampled(
            domain.clone(),
            AmbientForm::Euclidean(ambient_dim),
            move |u: &[f64]| {
                let mut out = DVector::zeros(ambient_dim);
                let mut aoff = 0;
                for ((doff, ddim, _), p) in offs.iter().zip(&parts2) {
                    let v = p.value(&u[*doff..doff + ddim]);
                    for i in 0..v.len() {
                        out[aoff + i] = v[i];
                    }
                    aoff += v.len();
                }
                for i in 0..extra2.len() {
                    out[aoff + i] = extra2[i];
                }
                out
            },
        )
    };

    // Base metric: block product of factor pullbacks.
    let mut blocks = Vec::new();
    let mut net_sizes = Vec::new();
    for ((doff, ddim, _), p) in offsets.iter().zip(&parts_owned) {
        if *ddim == 0 {
            continue;
        }
        blocks.push(MetricBlock {
            coords: (*doff..doff + ddim).collect(),
            inner: Arc::new(PullbackMetric {
                chart: Arc::new(p.clone()),
            }),
            scale: None,
        });
        net_sizes.push(*ddim);
    }
    chart.base_metric = Arc::new(BlockMetric::new(domain.dim(), blocks)?);
    if net_sizes.len() >= 2 {
        chart.net = Some(ProductNet::split(&net_sizes)?);
    }

    // Spherical detection: every factor of constant norm about the origin.
    let mut inv_c_total = extra.norm_squared();
    let mut spherical = true;
    for p in &parts_owned {
        let grid = p.domain.grid();
        let n0 = p.value(&grid[0]).norm_squared();
        let constant = grid
            .iter()
            .all(|u| (p.value(u).norm_squared() - n0).abs() <= 1e-8 * n0.max(1.0));
        if constant && n0 > 1e-12 {
            inv_c_total += n0;
        } else {
            spherical = false;
        }
    }
    let c = if spherical { Some(1.0 / inv_c_total) } else { None };
    Ok((chart, c))
}

fn image_samples(chart: &ImmersionChart) -> Vec<DVector<f64>> {
    chart.domain.grid().iter().map(|u| chart.value(u)).collect()
}

/// Product family composed with a conformal map of the ambient space:
/// an inversion after a homothety for `c = 0`, a stereographic projection
/// after a homothety (in light-cone form) for `c > 0`.
pub fn moore_family(
    parts: &[ImmersionChart],
    c: f64,
    v_extra: Option<DVector<f64>>,
    frame: Option<MoebiusFrame>,
) -> Result<ImmersionChart> {
    if c < 0.0 {
        return Err(Error::ParameterRange("moore family needs c >= 0".into()));
    }
    let (product, prod_c) = extrinsic_product(parts, v_extra)?;
    let n_intrinsic = product.domain.dim();
    if c == 0.0 {
        // Inversion center placed deterministically off the image.
        let samples = image_samples(&product);
        let dim = product.ambient.dim();
        let mut centroid = DVector::zeros(dim);
        for s in &samples {
            centroid += s;
        }
        centroid /= samples.len() as f64;
        let rmax = samples
            .iter()
            .map(|s| (s - &centroid).norm())
            .fold(0.0f64, f64::max);
        let dir = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
        let center = &centroid + dir * (2.0 * rmax + 1.0);
        let ratio = 1.3;
        let center2 = center.clone();
        let out = product.compose(product.ambient.clone(), move |x: &[Jet]| {
            let n = x[0].n();
            // Homothety then unit-radius inversion about `center`.
            let scaled: Vec<Jet> = x.iter().map(|c0| c0.scale(ratio)).collect();
            let diff: Vec<Jet> = scaled
                .iter()
                .enumerate()
                .map(|(i, s)| s - &Jet::constant(center2[i], n))
                .collect();
            let q = jet::norm_sq(&diff).recip();
            diff.iter()
                .enumerate()
                .map(|(i, d)| &Jet::constant(center2[i], n) + &(d * &q))
                .collect()
        });
        return Ok(out);
    }
    let prod_c = prod_c.ok_or_else(|| {
        Error::Compatibility("moore family with c > 0 needs spherical factors".into())
    })?;
    if (prod_c - c).abs() > 1e-8 * c {
        return Err(Error::Compatibility(format!(
            "factors compose to curvature {prod_c:.6}, expected {c:.6}"
        )));
    }
    let target_n = product.ambient.dim() - 1;
    // Codimension bound for the spherical case. The subspace dimension count
    // behind the classification gives N + 2 >= n + k + 1, i.e.
    // k <= N - n + 1 (sharp for products of circles).
    let k = parts.iter().filter(|p| p.domain.dim() > 0).count();
    if k > target_n - n_intrinsic + 1 {
        return Err(Error::ParameterRange(format!(
            "spherical product with {k} factors exceeds the codimension bound {}",
            target_n - n_intrinsic + 1
        )));
    }
    let stereo = match frame {
        Some(fr) => {
            let classical = StereographicMap::classical_scaled(target_n, c);
            StereographicMap::new(fr, classical.b_iso, classical.v, c)?
        }
        None => StereographicMap::classical_scaled(target_n, c),
    };
    stereo.chart(&product)
}

/// Theta family: a hyperbolic factor times an extrinsic product of spheres,
/// pushed through the canonical theta map.
pub fn theta_family(
    hyperbolic: &ImmersionChart,
    sphere_parts: &[ImmersionChart],
    frame: Option<MoebiusFrame>,
) -> Result<ImmersionChart> {
    let m = hyperbolic.ambient.dim() - 1;
    if !hyperbolic.ambient.is_lorentz() {
        return Err(Error::Compatibility(
            "hyperbolic factor must live in Minkowski space".into(),
        ));
    }
    // Curvature from the hyperboloid: <X,X> = -1/c.
    let mink = crate::minkowski::Minkowski::new(hyperbolic.ambient.dim().max(4))?;
    let grid = hyperbolic.domain.grid();
    let q0 = if hyperbolic.ambient.dim() >= 4 {
        let x = hyperbolic.value(&grid[0]);
        mink.inner(&x, &x)
    } else {
        let x = hyperbolic.value(&grid[0]);
        let last = x.len() - 1;
        x.rows(0, last).norm_squared() - x[last] * x[last]
    };
    if !(q0 < 0.0) {
        return Err(Error::Compatibility("hyperbolic factor is not timelike".into()));
    }
    let c = -1.0 / q0;
    let (product, prod_c) = if sphere_parts.iter().all(|p| p.domain.dim() == 0) {
        // Only constant factors: the spherical part is a fixed point.
        let mut vals = Vec::new();
        for p in sphere_parts {
            vals.extend(p.value(&[]).iter().copied());
        }
        let v = DVector::from_vec(vals);
        let c0 = 1.0 / v.norm_squared();
        (point_chart(v), Some(c0))
    } else {
        extrinsic_product(sphere_parts, None)?
    };
    let prod_c = prod_c.ok_or_else(|| {
        Error::Compatibility("theta family needs spherical second factors".into())
    })?;
    if (prod_c - c).abs() > 1e-8 * c {
        return Err(Error::Compatibility(format!(
            "sphere factors have curvature {prod_c:.6}, hyperbolic factor wants {c:.6}"
        )));
    }
    let big_n = m + product.ambient.dim() - 1;
    let fr = frame.unwrap_or_else(|| MoebiusFrame::canonical(big_n));
    let theta = ThetaMap::canonical(fr, m, c)?;
    let mut chart = theta.chart(hyperbolic, &product)?;
    // Refine the net: hyperbolic block plus the individual sphere blocks.
    let mut sizes = vec![hyperbolic.domain.dim()];
    for p in sphere_parts {
        if p.domain.dim() > 0 {
            sizes.push(p.domain.dim());
        }
    }
    if sizes.iter().filter(|&&s| s > 0).count() >= 2 {
        chart.net = Some(ProductNet::split(&sizes)?);
    }
    Ok(chart)
}

/// Cyclide of characteristic `(m, n-m)` built from the half-space theta map
/// applied to a spherical inclusion of curvature `c > -1` times a round
/// sphere. For `n = 2, m = 1` this is a torus of revolution.
pub fn cyclide(n: usize, m: usize, c: f64, res: usize) -> Result<ImmersionChart> {
    if m < 1 || m > n - 1 {
        return Err(Error::ParameterRange(format!(
            "cyclide characteristic needs 1 <= m <= n-1, got ({m}, {})",
            n as isize - m as isize
        )));
    }
    if !(c > -1.0) {
        return Err(Error::ParameterRange("cyclide parameter needs c > -1".into()));
    }
    let p = n - m + 1; // dimension of the hyperbolic factor's half-space
    let q = n - m; // dimension of the inclusion
    let sphere_box = |d: usize| -> Result<Domain> {
        let mut lo = vec![0.15];
        let mut hi = vec![6.13];
        for _ in 1..d {
            lo.insert(0, 0.35);
            hi.insert(0, std::f64::consts::PI - 0.35);
        }
        Domain::new(lo, hi, vec![res; d])
    };
    let sphere = sphere_chart(m, 1.0, sphere_box(m)?)?;
    let half: ImmersionChart = if c > 0.0 {
        // Euclidean sphere of radius 1 centered at height sqrt(1+c).
        let b = (1.0 + c).sqrt();
        let angles = sphere_box(q)?;
        let unit = sphere_chart(q, 1.0, angles)?;
        unit.compose(AmbientForm::Euclidean(p), move |x: &[Jet]| {
            let n0 = x[0].n();
            let mut out = x.to_vec();
            let last = out.len() - 1;
            out[last] = &out[last] + &Jet::constant(b, n0);
            out
        })
    } else if c == 0.0 {
        // Horosphere: the plane x_p = 1.
        let dom = Domain::new(vec![-1.0; q], vec![1.0; q], vec![res; q])?;
        ImmersionChart::analytic(dom, AmbientForm::Euclidean(p), move |u: &[Jet]| {
            let n0 = u[0].n();
            let mut out: Vec<Jet> = u.to_vec();
            out.push(Jet::constant(1.0, n0));
            out
        })
    } else {
        // Equidistant: tilted hyperplane x_1 = k x_p.
        let k = (-(1.0 + c) / c).sqrt();
        let mut lo = vec![0.5];
        let mut hi = vec![2.0];
        for _ in 1..q {
            lo.push(-1.0);
            hi.push(1.0);
        }
        let dom = Domain::new(lo, hi, vec![res; q])?;
        ImmersionChart::analytic(dom, AmbientForm::Euclidean(p), move |u: &[Jet]| {
            let mut out = Vec::with_capacity(p);
            out.push(u[0].scale(k));
            for ui in &u[1..] {
                out.push(ui.clone());
            }
            out.push(u[0].clone());
            out
        })
    };
    let theta = ThetaHalfspace::new(p, n + 1, 1.0)?;
    let (chart, _factor) = theta.chart_with_factor(&half, &sphere)?;
    Ok(chart)
}

/// Warped product chart `(x_1, ..., x_{m-1}, x_m * g2)` of a chart into the
/// open half-space and a unit-sphere chart; the base metric is the warped
/// product it is isometric for.
pub fn warped_product_chart(g1: &ImmersionChart, g2: &ImmersionChart) -> Result<ImmersionChart> {
    let m = g1.ambient.dim();
    if g1.ambient.is_lorentz() || g2.ambient.is_lorentz() {
        return Err(Error::Compatibility("warped products take Euclidean factors".into()));
    }
    for u in g1.domain.grid() {
        let x = g1.value(&u);
        if !(x[m - 1] > 0.0) {
            return Err(Error::ParameterRange(
                "first factor must stay in the open half-space x_m > 0".into(),
            ));
        }
    }
    for u in g2.domain.grid() {
        let y = g2.value(&u);
        if (y.norm_squared() - 1.0).abs() > 1e-8 {
            return Err(Error::Compatibility("second factor must be a unit-sphere chart".into()));
        }
    }
    let n1 = g1.domain.dim();
    let n2 = g2.domain.dim();
    let domain = g1.domain.concat(&g2.domain);
    let total = domain.dim();
    let ambient = AmbientForm::Euclidean(m - 1 + g2.ambient.dim());
    let mut chart = match (g1.jet_closure(), g2.jet_closure()) {
        (Some(c1), Some(c2)) => {
            ImmersionChart::analytic(domain.clone(), ambient, move |u: &[Jet]| {
                let x = c1(&u[..n1]);
                let y = c2(&u[n1..]);
                let mut out = Vec::with_capacity(x.len() - 1 + y.len());
                out.extend_from_slice(&x[..x.len() - 1]);
                let s = &x[x.len() - 1];
                for yc in &y {
                    out.push(s * yc);
                }
                out
            })
        }
        _ => {
            let g1c = g1.clone();
            let g2c = g2.clone();
            ImmersionChart::sampled(domain.clone(), ambient, move |u: &[f64]| {
                let x = g1c.value(&u[..n1]);
                let y = g2c.value(&u[n1..]);
                let mut out = DVector::zeros(x.len() - 1 + y.len());
                for i in 0..x.len() - 1 {
                    out[i] = x[i];
                }
                for j in 0..y.len() {
                    out[x.len() - 1 + j] = x[x.len() - 1] * y[j];
                }
                out
            })
        }
    };
    let rho = warp_factor_field(g1, total)?;
    let blocks = vec![
        MetricBlock {
            coords: (0..n1).collect(),
            inner: Arc::new(PullbackMetric {
                chart: Arc::new(g1.clone()),
            }),
            scale: None,
        },
        MetricBlock {
            coords: (n1..total).collect(),
            inner: Arc::new(PullbackMetric {
                chart: Arc::new(g2.clone()),
            }),
            scale: Some(rho),
        },
    ];
    chart.base_metric = Arc::new(BlockMetric::new(total, blocks)?);
    if n1 > 0 && n2 > 0 {
        chart.net = Some(ProductNet::split(&[n1, n2])?);
    }
    Ok(chart)
}

/// The warping factor `x_m o pi_1` of a warped product chart.
fn warp_factor_field(g1: &ImmersionChart, total: usize) -> Result<ScalarField> {
    let m = g1.ambient.dim();
    let n1 = g1.domain.dim();
    Ok(match g1.jet_closure() {
        Some(c1) => ScalarField::analytic(total, move |u: &[Jet]| c1(&u[..n1])[m - 1].clone()),
        None => {
            let g1c = g1.clone();
            let steps = vec![1e-4; total];
            ScalarField::sampled(total, move |u: &[f64]| g1c.value(&u[..n1])[m - 1], steps)
        }
    })
}

/// Transform data of the sphere-factor construction on an extrinsic product
/// `g1 x g2` with `|g2 - P2| = r2`: `F = g2 o pi_2 - P2`, `phi = r2^2`.
pub fn darboux_sphere_factor(
    g1: &ImmersionChart,
    g2: &ImmersionChart,
    p2: DVector<f64>,
    r2: f64,
) -> Result<(Arc<ImmersionChart>, CombescureData)> {
    if p2.len() != g2.ambient.dim() {
        return Err(Error::DimensionMismatch("sphere center dimension".into()));
    }
    for u in g2.domain.grid() {
        let d = (g2.value(&u) - &p2).norm();
        if (d - r2).abs() > 1e-8 * r2.max(1.0) {
            return Err(Error::Compatibility(format!(
                "second factor is not spherical about the given center (|g2-P2| = {d:.6})"
            )));
        }
    }
    let (host, _) = extrinsic_product(&[g1.clone(), g2.clone()], None)?;
    let host = Arc::new(host);
    let n1 = g1.domain.dim();
    let dim1 = g1.ambient.dim();
    let dim = host.ambient.dim();
    let total = host.domain.dim();
    let cal_f = match g2.jet_closure() {
        Some(c2) => {
            let p2c = p2.clone();
            VectorField::analytic(total, dim, move |u: &[Jet]| {
                let n = u[0].n();
                let y = c2(&u[n1..]);
                let mut out = vec![Jet::constant(0.0, n); dim1];
                for (i, yc) in y.iter().enumerate() {
                    out.push(yc - &Jet::constant(p2c[i], n));
                }
                out
            })
        }
        None => {
            let g2c = g2.clone();
            let p2c = p2.clone();
            let steps = host.fd_steps();
            VectorField::sampled(
                total,
                dim,
                move |u: &[f64]| {
                    let y = g2c.value(&u[n1..]);
                    let mut out = DVector::zeros(dim);
                    for i in 0..y.len() {
                        out[dim1 + i] = y[i] - p2c[i];
                    }
                    out
                },
                steps,
            )
        }
    };
    let phi = ScalarField::constant(total, r2 * r2);
    let data = CombescureData::new(host.clone(), phi, cal_f)?;
    Ok((host, data))
}

/// Transform data of the warped construction on `(g1, g2)`:
/// `F = (0, ..., 0, g2 o pi_2)`, `phi = x_m o pi_1`.
pub fn darboux_warped(
    g1: &ImmersionChart,
    g2: &ImmersionChart,
) -> Result<(Arc<ImmersionChart>, CombescureData)> {
    let host = Arc::new(warped_product_chart(g1, g2)?);
    let m = g1.ambient.dim();
    let n1 = g1.domain.dim();
    let dim = host.ambient.dim();
    let total = host.domain.dim();
    let cal_f = match g2.jet_closure() {
        Some(c2) => VectorField::analytic(total, dim, move |u: &[Jet]| {
            let n = u[0].n();
            let y = c2(&u[n1..]);
            let mut out = vec![Jet::constant(0.0, n); m - 1];
            out.extend(y);
            out
        }),
        None => {
            let g2c = g2.clone();
            let steps = host.fd_steps();
            VectorField::sampled(
                total,
                dim,
                move |u: &[f64]| {
                    let y = g2c.value(&u[n1..]);
                    let mut out = DVector::zeros(dim);
                    for i in 0..y.len() {
                        out[m - 1 + i] = y[i];
                    }
                    out
                },
                steps,
            )
        }
    };
    let phi = warp_factor_field(g1, total)?;
    let data = CombescureData::new(host.clone(), phi, cal_f)?;
    Ok((host, data))
}

/// Dual-product Christoffel data: `F = a((-f1) x f2) + v` on the extrinsic
/// product `f1 x f2`, with `phi = a(|f2|^2 - |f1|^2)/2 + <v, f>`.
pub fn christoffel_product(
    f1: &ImmersionChart,
    f2: &ImmersionChart,
    a: f64,
    v: Option<DVector<f64>>,
) -> Result<(Arc<ImmersionChart>, CombescureData)> {
    if a == 0.0 {
        return Err(Error::ParameterRange("christoffel factor a must be nonzero".into()));
    }
    let (host, _) = extrinsic_product(&[f1.clone(), f2.clone()], None)?;
    let host = Arc::new(host);
    let dim = host.ambient.dim();
    let total = host.domain.dim();
    let n1 = f1.domain.dim();
    let dim1 = f1.ambient.dim();
    let v = v.unwrap_or_else(|| DVector::zeros(dim));
    if v.len() != dim {
        return Err(Error::DimensionMismatch("translation vector dimension".into()));
    }
    let (c1, c2) = match (f1.jet_closure(), f2.jet_closure()) {
        (Some(a1), Some(a2)) => (a1, a2),
        _ => {
            return Err(Error::Compatibility(
                "christoffel_product needs analytic factor charts".into(),
            ))
        }
    };
    let vc = v.clone();
    let c1b = c1.clone();
    let c2b = c2.clone();
    let cal_f = VectorField::analytic(total, dim, move |u: &[Jet]| {
        let n = u[0].n();
        let x = c1b(&u[..n1]);
        let y = c2b(&u[n1..]);
        let mut out = Vec::with_capacity(dim);
        for (i, xc) in x.iter().enumerate() {
            out.push(&Jet::constant(vc[i], n) + &xc.scale(-a));
        }
        for (j, yc) in y.iter().enumerate() {
            out.push(&Jet::constant(vc[dim1 + j], n) + &yc.scale(a));
        }
        out
    });
    let vc2 = v.clone();
    let phi = ScalarField::analytic(total, move |u: &[Jet]| {
        let x = c1(&u[..n1]);
        let y = c2(&u[n1..]);
        let mut acc = (&jet::norm_sq(&y) - &jet::norm_sq(&x)).scale(0.5 * a);
        for (i, xc) in x.iter().enumerate() {
            acc = &acc + &xc.scale(vc2[i]);
        }
        for (j, yc) in y.iter().enumerate() {
            acc = &acc + &yc.scale(vc2[dim1 + j]);
        }
        acc
    });
    let data = CombescureData::new(host.clone(), phi, cal_f)?;
    Ok((host, data))
}

/// Result of the warped Christoffel construction.
pub struct ChristoffelWarped {
    pub host: Arc<ImmersionChart>,
    pub data: CombescureData,
    /// Primitive of `x_m^{-2} gamma'` per ambient coordinate of the curve.
    pub gamma_tilde: Vec<QuinticSeries>,
}

/// Warped Christoffel data on `Phi(gamma x g)`:
/// `F = Phi(a gamma~ x g) + v` with `gamma~ = int x_m^{-2} gamma' dt`. The
/// `m`-th primitive is pinned to `-1/gamma_m` (its unique conformal choice);
/// the others start at zero on the left endpoint.
pub fn christoffel_warped(
    gamma: &ImmersionChart,
    g: &ImmersionChart,
    a: f64,
    v: Option<DVector<f64>>,
) -> Result<ChristoffelWarped> {
    if a == 0.0 {
        return Err(Error::ParameterRange("christoffel factor a must be nonzero".into()));
    }
    if gamma.domain.dim() != 1 {
        return Err(Error::ParameterRange("warped christoffel needs a curve factor".into()));
    }
    let host = Arc::new(warped_product_chart(gamma, g)?);
    let m = gamma.ambient.dim();
    let dim = host.ambient.dim();
    let total = host.domain.dim();
    let n1 = 1usize;
    let v = v.unwrap_or_else(|| DVector::zeros(dim));
    if v.len() != dim {
        return Err(Error::DimensionMismatch("translation vector dimension".into()));
    }
    let gj = gamma
        .jet_closure()
        .ok_or_else(|| Error::Compatibility("warped christoffel needs an analytic curve".into()))?;
    let gj_val = {
        let gj = gj.clone();
        move |t: f64| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
            let jets = gj(&Jet::seed(&[t]));
            let val = jet::values(&jets);
            let d1 = DVector::from_fn(m, |i, _| jets[i].g[0]);
            let d2 = DVector::from_fn(m, |i, _| jets[i].h[(0, 0)]);
            (val, d1, d2)
        }
    };

    // Padded node grid with the left endpoint on a node: the primitive's
    // free constants are fixed there, while the m-th component is pinned to
    // -1/gamma_m (the conformal choice).
    let lo = gamma.domain.lo[0];
    let hi = gamma.domain.hi[0];
    let core = 4 * gamma.domain.res[0].max(33) + 1;
    let step = (hi - lo) / (core - 1) as f64;
    let pad_n = (0.05 * (hi - lo) / step).ceil() as usize;
    let t0 = lo - pad_n as f64 * step;
    let nodes = core + 2 * pad_n;
    let times: Vec<f64> = (0..nodes).map(|k| t0 + k as f64 * step).collect();

    let integrand = |t: f64| -> DVector<f64> {
        let (val, d1, _) = gj_val(t);
        let xm = val[m - 1];
        &d1 / (xm * xm)
    };
    let start = DVector::zeros(m);
    let mut prim = ode::quadrature(integrand, &start, &times, 16);
    // Calibration: components < m vanish at the left endpoint; component m
    // equals -1/gamma_m there.
    let mut shift = -prim[pad_n].clone();
    shift[m - 1] += -1.0 / gj_val(lo).0[m - 1];
    for p in &mut prim {
        *p += &shift;
    }

    let mut gamma_tilde = Vec::with_capacity(m);
    for i in 0..m {
        let series_nodes: Vec<[f64; 3]> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let (val, d1, d2) = gj_val(t);
                let xm = val[m - 1];
                let dxm = d1[m - 1];
                let f1 = d1[i] / (xm * xm);
                let f2 = d2[i] / (xm * xm) - 2.0 * d1[i] * dxm / (xm * xm * xm);
                [prim[k][i], f1, f2]
            })
            .collect();
        gamma_tilde.push(QuinticSeries::new(t0, step, series_nodes));
    }

    // phi = a * int <gamma~, gamma'> + <v, f>.
    let phi_nodes: Vec<[f64; 3]> = {
        let integ = |t: f64, gt: &DVector<f64>| -> (f64, f64) {
            let (val, d1, d2) = gj_val(t);
            let xm = val[m - 1];
            let gt_d: DVector<f64> = &d1 / (xm * xm);
            let first = gt.dot(&d1);
            let second = gt_d.dot(&d1) + gt.dot(&d2);
            (first, second)
        };
        let scalar_prim = ode::quadrature(
            |t: f64| {
                let (val, d1, _) = gj_val(t);
                let xm = val[m - 1];
                let mut gt = DVector::zeros(m);
                for i in 0..m {
                    gt[i] = lookup(&gamma_tilde[i], t);
                }
                let _ = (val, xm);
                DVector::from_vec(vec![gt.dot(&d1)])
            },
            &DVector::zeros(1),
            &times,
            16,
        );
        times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let gt = DVector::from_fn(m, |i, _| lookup(&gamma_tilde[i], t));
                let (d1v, d2v) = integ(t, &gt);
                [scalar_prim[k][0], d1v, d2v]
            })
            .collect()
    };
    let phi_series = QuinticSeries::new(t0, step, phi_nodes);

    let hostj = host
        .jet_closure()
        .ok_or_else(|| Error::Compatibility("warped christoffel host must be analytic".into()))?;
    let vj = v.clone();
    let phi = ScalarField::analytic(total, move |u: &[Jet]| {
        let mut acc = phi_series.chain(&u[0]).scale(a);
        let f = hostj(u);
        for (i, fc) in f.iter().enumerate() {
            if vj[i] != 0.0 {
                acc = &acc + &fc.scale(vj[i]);
            }
        }
        acc
    });

    let gjc = g
        .jet_closure()
        .ok_or_else(|| Error::Compatibility("warped christoffel needs an analytic sphere chart".into()))?;
    let gts = gamma_tilde.clone();
    let vc = v.clone();
    let cal_f = VectorField::analytic(total, dim, move |u: &[Jet]| {
        let n = u[0].n();
        let y = gjc(&u[n1..]);
        let mut out = Vec::with_capacity(dim);
        for (i, gt) in gts.iter().take(m - 1).enumerate() {
            out.push(&Jet::constant(vc[i], n) + &gt.chain(&u[0]).scale(a));
        }
        let last = gts[m - 1].chain(&u[0]).scale(a);
        for (j, yc) in y.iter().enumerate() {
            out.push(&Jet::constant(vc[m - 1 + j], n) + &(&last * yc));
        }
        out
    });
    let data = CombescureData::new(host.clone(), phi, cal_f)?;
    Ok(ChristoffelWarped {
        host,
        data,
        gamma_tilde,
    })
}

fn lookup(series: &QuinticSeries, t: f64) -> f64 {
    series.eval(t).0
}

/// Frenet frame and curvature evaluator of a unit-speed curve.
pub struct FrenetData {
    pub curve: Arc<ImmersionChart>,
    dim: usize,
}

/// Frame and curvatures at one parameter value.
pub struct FrenetSample {
    pub frame: Vec<DVector<f64>>,
    pub curvatures: Vec<f64>,
}

impl FrenetData {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Derivatives of the curve up to the ambient order: the first two from
    /// jets, higher ones by fourth-order differencing of the second.
    fn derivatives(&self, t: f64) -> Vec<DVector<f64>> {
        let dim = self.dim;
        let j = self.curve.jet(&[t]);
        let mut out = vec![j.d(0), j.dd(0, 0)];
        if dim >= 3 {
            let h = self.curve.fd_steps()[0].max(1e-6);
            let dd = |s: f64| self.curve.jet(&[t + s * h]).dd(0, 0);
            let d3 = ((dd(1.0) - dd(-1.0)) * 8.0 - (dd(2.0) - dd(-2.0))) / (12.0 * h);
            out.push(d3);
            for extra in 3..dim {
                // Higher orders by repeated differencing of the previous one.
                let prev = extra - 1;
                let probe = |s: f64| -> DVector<f64> {
                    let data = FrenetData {
                        curve: self.curve.clone(),
                        dim: self.dim,
                    };
                    data.derivatives(t + s * h)[prev].clone()
                };
                let dnext = (probe(1.0) - probe(-1.0)) / (2.0 * h);
                out.push(dnext);
            }
        }
        out
    }

    pub fn sample(&self, t: f64) -> Result<FrenetSample> {
        let derivs = self.derivatives(t);
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(self.dim);
        let mut norms: Vec<f64> = Vec::with_capacity(self.dim);
        for (j, d) in derivs.iter().enumerate() {
            let mut u = d.clone();
            for e in &frame {
                let c = u.dot(e);
                u -= e * c;
            }
            let norm = u.norm();
            if norm < 1e-7 * d.norm().max(1.0) {
                return Err(Error::FrenetDegeneracy(format!(
                    "derivative order {} is linearly dependent at t = {t:.4}",
                    j + 1
                )));
            }
            norms.push(norm);
            frame.push(u / norm);
        }
        let curvatures = (0..self.dim - 1).map(|j| norms[j + 1] / norms[j]).collect();
        Ok(FrenetSample { frame, curvatures })
    }

    pub fn curvatures(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.sample(t)?.curvatures)
    }

    /// Residual of the frame ODE `e_j' = -k_{j-1} e_{j-1} + k_j e_{j+1}`
    /// against finite differences of the sampled frame.
    pub fn frenet_residual(&self) -> Result<f64> {
        let h = self.curve.fd_steps()[0].max(1e-6);
        let mut worst: f64 = 0.0;
        for u in self.curve.domain.grid() {
            let t = u[0];
            let s0 = self.sample(t)?;
            let sp = self.sample(t + h)?;
            let sm = self.sample(t - h)?;
            for j in 0..self.dim {
                let fd = (&sp.frame[j] - &sm.frame[j]) / (2.0 * h);
                let mut want = DVector::zeros(self.dim);
                if j > 0 {
                    want -= &s0.frame[j - 1] * s0.curvatures[j - 1];
                }
                if j + 1 < self.dim {
                    want += &s0.frame[j + 1] * s0.curvatures[j];
                }
                worst = worst.max((fd - want).norm());
            }
        }
        Ok(worst)
    }
}

/// Builds Frenet data for a unit-speed curve chart, checking regularity and
/// that every curvature stays away from zero on the grid.
pub fn frenet_frame(curve: &ImmersionChart) -> Result<FrenetData> {
    if curve.domain.dim() != 1 || curve.ambient.is_lorentz() {
        return Err(Error::ParameterRange(
            "frenet data needs a Euclidean curve chart".into(),
        ));
    }
    let data = FrenetData {
        curve: Arc::new(curve.clone()),
        dim: curve.ambient.dim(),
    };
    for u in curve.domain.grid() {
        let j = curve.jet(&u);
        let speed = j.d(0).norm();
        if (speed - 1.0).abs() > 1e-8 {
            return Err(Error::ParameterRange(format!(
                "curve must be unit speed (|a'| = {speed:.6} at t = {:.4})",
                u[0]
            )));
        }
        let s = data.sample(u[0])?;
        for (i, k) in s.curvatures.iter().enumerate() {
            if *k < 1e-7 {
                return Err(Error::FrenetDegeneracy(format!(
                    "curvature k_{} vanishes at t = {:.4}",
                    i + 1,
                    u[0]
                )));
            }
        }
    }
    Ok(data)
}

/// State of the curve-factor transform ODE.
#[derive(Clone, Debug)]
pub struct DarbouxOdeState {
    pub lambda: f64,
    pub beta: f64,
    pub v: Vec<f64>,
}

impl DarbouxOdeState {
    pub fn first_integral(&self) -> f64 {
        self.lambda * self.lambda
            - self.beta * self.beta
            - self.v.iter().map(|x| x * x).sum::<f64>()
    }

    fn to_vector(&self) -> DVector<f64> {
        let mut out = vec![self.lambda, self.beta];
        out.extend_from_slice(&self.v);
        DVector::from_vec(out)
    }
}

/// Output of the curve-factor construction.
pub struct DarbouxCurve {
    pub host: Arc<ImmersionChart>,
    pub data: CombescureData,
    /// First-integral drift actually achieved by the integrator.
    pub k_drift: f64,
    pub lambda: QuinticSeries,
}

/// Integrates the curve-factor ODE system along the Frenet data of `alpha`
/// and assembles the transform fields `F = gamma o pi_1`, `phi = lambda o
/// pi_1` on the extrinsic product `alpha x g2`. The initial state is
/// projected onto the zero set of the first integral by rescaling `V`.
pub fn darboux_curve_factor(
    fd: &FrenetData,
    g2: &ImmersionChart,
    initial: &DarbouxOdeState,
    drift_tol: f64,
) -> Result<DarbouxCurve> {
    let n1dim = fd.dim();
    if initial.v.len() != n1dim - 1 {
        return Err(Error::ParameterRange(format!(
            "initial state needs {} V-components",
            n1dim - 1
        )));
    }
    let mut init = initial.clone();
    let k0 = init.first_integral();
    if k0.abs() > 1e-10 * (1.0 + init.lambda * init.lambda) {
        let target = init.lambda * init.lambda - init.beta * init.beta;
        let vsq: f64 = init.v.iter().map(|x| x * x).sum();
        if target <= 0.0 || vsq <= 0.0 {
            return Err(Error::ParameterRange(
                "initial state cannot be projected onto the zero first-integral cone".into(),
            ));
        }
        let s = (target / vsq).sqrt();
        for x in &mut init.v {
            *x *= s;
        }
    }

    let alpha = fd.curve.clone();
    let (host, _) = extrinsic_product(&[(*alpha).clone(), g2.clone()], None)?;
    let host = Arc::new(host);

    // Padded node grid with the domain endpoints on nodes, so the initial
    // state sits exactly at the left endpoint of the chart.
    let lo = alpha.domain.lo[0];
    let hi = alpha.domain.hi[0];
    let core = 4 * alpha.domain.res[0].max(33) + 1;
    let step = (hi - lo) / (core - 1) as f64;
    let pad_n = (0.05 * (hi - lo) / step).ceil() as usize;
    let t0 = lo - pad_n as f64 * step;
    let nodes = core + 2 * pad_n;
    let times: Vec<f64> = (0..nodes).map(|k| t0 + k as f64 * step).collect();

    let rhs = |t: f64, y: &DVector<f64>| -> DVector<f64> {
        let ks = fd.curvatures(t).expect("frenet curvatures");
        let mut dy = DVector::zeros(y.len());
        // y = [lambda, beta, V_2, ..., V_{n1dim}]
        dy[0] = y[1];
        dy[1] = y[0] + ks[0] * y[2];
        for j in 2..y.len() {
            let mut v = -ks[j - 2] * y[j - 1];
            if j + 1 < y.len() {
                v += ks[j - 1] * y[j + 1];
            }
            // The recursion uses beta in place of V_1.
            dy[j] = v;
        }
        dy
    };
    let monitor = |_t: f64, y: &DVector<f64>| -> f64 {
        y[0] * y[0] - y[1] * y[1] - y.rows(2, y.len() - 2).norm_squared()
    };
    let fwd = ode::integrate(
        &rhs,
        &init.to_vector(),
        &times[pad_n..],
        Some(&monitor),
        drift_tol,
    )?;
    // Backward over the left pad in reversed time.
    let times_rev: Vec<f64> = times[..=pad_n].iter().rev().map(|t| -t).collect();
    let bwd = ode::integrate(
        |tau: f64, y: &DVector<f64>| -rhs(-tau, y),
        &init.to_vector(),
        &times_rev,
        Some(|tau: f64, y: &DVector<f64>| monitor(-tau, y)),
        drift_tol,
    )?;
    let mut states: Vec<DVector<f64>> = bwd.states.into_iter().rev().collect();
    states.extend(fwd.states.into_iter().skip(1));
    let traj = ode::Trajectory {
        times: times.clone(),
        states,
        monitor_drift: Some(
            fwd.monitor_drift
                .unwrap_or(0.0)
                .max(bwd.monitor_drift.unwrap_or(0.0)),
        ),
    };
    let k_drift = traj.monitor_drift.unwrap_or(0.0);
    if k_drift > drift_tol {
        return Err(Error::IntegratorAccuracy(format!(
            "first-integral drift {k_drift:.3e}"
        )));
    }

    // lambda series: (lambda, beta, lambda + k1 V2).
    let lambda_nodes: Vec<[f64; 3]> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let y = &traj.states[i];
            let ks = fd.curvatures(t).expect("frenet curvatures");
            [y[0], y[1], y[0] + ks[0] * y[2]]
        })
        .collect();
    let lambda = QuinticSeries::new(t0, step, lambda_nodes);

    // gamma = beta e_1 + sum_j V_j e_j, gamma' = lambda e_1,
    // gamma'' = beta e_1 + lambda k_1 e_2.
    let mut gamma_series = Vec::with_capacity(n1dim);
    let samples: Vec<FrenetSample> = times
        .iter()
        .map(|&t| fd.sample(t))
        .collect::<Result<_>>()?;
    for c in 0..n1dim {
        let nodes: Vec<[f64; 3]> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let y = &traj.states[i];
                let s = &samples[i];
                let ks = fd.curvatures(t).expect("frenet curvatures");
                let mut val = y[1] * s.frame[0][c];
                for j in 1..n1dim {
                    val += y[j + 1] * s.frame[j][c];
                }
                let d1 = y[0] * s.frame[0][c];
                let d2 = y[1] * s.frame[0][c] + y[0] * ks[0] * s.frame[1][c];
                [val, d1, d2]
            })
            .collect();
        gamma_series.push(QuinticSeries::new(t0, step, nodes));
    }

    // Construction checks: gamma' = lambda alpha' and <gamma, alpha'> = lambda'.
    for u in alpha.domain.grid() {
        let t = u[0];
        let s = fd.sample(t)?;
        let lam = lambda.eval(t);
        for c in 0..n1dim {
            let (gv, gd, _) = gamma_series[c].eval(t);
            let want = lam.0 * s.frame[0][c];
            if (gd - want).abs() > 1e-6 * (1.0 + lam.0.abs()) {
                return Err(Error::IntegratorAccuracy(format!(
                    "gamma' deviates from lambda alpha' by {:.3e} at t = {t:.4}",
                    (gd - want).abs()
                )));
            }
            let _ = gv;
        }
        let gamma_t = DVector::from_fn(n1dim, |c, _| gamma_series[c].eval(t).0);
        if (gamma_t.dot(&s.frame[0]) - lam.1).abs() > 1e-7 * (1.0 + lam.1.abs()) {
            return Err(Error::IntegratorAccuracy(
                "lambda' deviates from <gamma, alpha'>".into(),
            ));
        }
    }

    let total = host.domain.dim();
    let dim = host.ambient.dim();
    let phi = ScalarField::axis_series(total, 0, lambda.clone());
    let gs = gamma_series.clone();
    let cal_f = VectorField::analytic(total, dim, move |u: &[Jet]| {
        let n = u[0].n();
        let mut out: Vec<Jet> = gs.iter().map(|s| s.chain(&u[0])).collect();
        for _ in out.len()..dim {
            out.push(Jet::constant(0.0, n));
        }
        out
    });
    let data = CombescureData::new(host.clone(), phi, cal_f)?;
    Ok(DarbouxCurve {
        host,
        data,
        k_drift,
        lambda,
    })
}
