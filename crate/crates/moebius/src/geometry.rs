//! Numerical differential geometry of sampled immersions: fundamental forms,
//! normal frames, conformality and adaptedness residuals, product-net
//! geometry, the lift second-form split, and principal curvature fields.

use crate::chart::{AmbientForm, Domain, ImmersionChart, ProductNet};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::lightcone::{lift_conformal, MoebiusFrame};
use crate::metric::{christoffel, invert, MetricField, MetricJet, PullbackMetric};
use crate::tol;
use nalgebra::{DMatrix, DVector};

/// Everything the pointwise machinery needs at one parameter value.
pub struct PointGeometry {
    pub u: Vec<f64>,
    pub jet: crate::chart::ChartJet,
    pub ambient: AmbientForm,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub christoffel: Vec<DMatrix<f64>>,
    pub normals: Vec<DVector<f64>>,
    pub normal_signs: Vec<f64>,
    alpha: Vec<DVector<f64>>,
}

impl PointGeometry {
    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn tangent(&self, k: usize) -> DVector<f64> {
        self.jet.d(k)
    }

    /// Second fundamental form on coordinate fields, as an ambient vector.
    pub fn alpha(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.alpha[i * self.dim() + j]
    }

    /// Pushes intrinsic coordinates to an ambient tangent vector.
    pub fn push(&self, coords: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient.dim());
        for k in 0..self.dim() {
            out += self.tangent(k) * coords[k];
        }
        out
    }

    /// Intrinsic coordinates of the tangential part of an ambient vector.
    pub fn tangential_coords(&self, z: &DVector<f64>) -> DVector<f64> {
        let rhs = DVector::from_fn(self.dim(), |k, _| self.ambient.inner(z, &self.tangent(k)));
        &self.metric_inv * rhs
    }

    /// Ambient-orthogonal projection onto the normal space.
    pub fn normal_project(&self, z: &DVector<f64>) -> DVector<f64> {
        z - self.push(&self.tangential_coords(z))
    }

    /// Shape operator of a normal direction, as a (1,1) tensor in coordinates.
    pub fn shape_operator(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let b = DMatrix::from_fn(n, n, |i, j| self.ambient.inner(self.alpha(i, j), xi));
        &self.metric_inv * b
    }

    /// Gradient (coordinates) of a scalar with differential `dphi`.
    pub fn grad(&self, dphi: &DVector<f64>) -> DVector<f64> {
        &self.metric_inv * dphi
    }

    /// Cholesky factor of the metric (for orthonormal-frame normalization).
    pub fn chol(&self) -> Result<DMatrix<f64>> {
        nalgebra::Cholesky::new(self.metric.clone())
            .map(|c| c.l())
            .ok_or_else(|| Error::RankDeficient(self.u.clone(), 0.0))
    }

    /// Conjugates a scalar bilinear form on coordinates into a g-orthonormal
    /// tangent frame.
    pub fn orthonormalize_form(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = self.chol()?;
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient(self.u.clone(), 0.0))?;
        Ok(&linv * b * linv.transpose())
    }
}

/// Orthonormalizes `span` under the ambient form and completes it to a full
/// basis; returns the complement vectors and their self products. Candidates
/// are tried in a deterministic largest-pivot order.
pub fn complete_frame(
    form: &AmbientForm,
    span: &[DVector<f64>],
    at: &[f64],
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let dim = form.dim();
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::new();
    for v in span {
        let mut r = v.clone();
        for _ in 0..2 {
            for (e, s) in &basis {
                let c = form.inner(&r, e) * s;
                r -= e * c;
            }
        }
        let q = form.inner(&r, &r);
        if q.abs() <= tol::NULL_RESIDUAL * r.norm_squared().max(1.0) {
            return Err(Error::DegenerateNormalSpace(at.to_vec()));
        }
        basis.push((&r / q.abs().sqrt(), q.signum()));
    }
    let k = span.len();
    let mut normals = Vec::with_capacity(dim - k);
    let mut signs = Vec::with_capacity(dim - k);
    for _ in 0..dim - k {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for c in 0..dim {
            let mut e = DVector::zeros(dim);
            e[c] = 1.0;
            let mut r = e;
            for _ in 0..2 {
                for (b, s) in &basis {
                    let coef = form.inner(&r, b) * s;
                    r -= b * coef;
                }
            }
            let n2 = r.norm_squared();
            if n2 < 1e-20 {
                continue;
            }
            let quality = form.inner(&r, &r).abs() / n2.max(1.0);
            if best.as_ref().map_or(true, |(q, _)| quality > *q) {
                best = Some((quality, r));
            }
        }
        let (quality, r) = best.ok_or_else(|| Error::DegenerateNormalSpace(at.to_vec()))?;
        if quality <= tol::NULL_RESIDUAL {
            return Err(Error::DegenerateNormalSpace(at.to_vec()));
        }
        let q = form.inner(&r, &r);
        let e = &r / q.abs().sqrt();
        basis.push((e.clone(), q.signum()));
        normals.push(e);
        signs.push(q.signum());
    }
    Ok((normals, signs))
}

/// Full pointwise analysis of a chart at `u`.
pub fn point_geometry(chart: &ImmersionChart, u: &[f64]) -> Result<PointGeometry> {
    let n = chart.domain.dim();
    let jet = chart.jet(u);
    let g = DMatrix::from_fn(n, n, |a, b| chart.ambient.inner(&jet.d(a), &jet.d(b)));
    if n > 0 {
        let eig = g.clone().symmetric_eigen();
        let max = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        if !(min > tol::RANK_MIN * max.max(1.0)) {
            return Err(Error::RankDeficient(u.to_vec(), min));
        }
    }
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |a, b| {
                chart.ambient.inner(&jet.dd(k, a), &jet.d(b))
                    + chart.ambient.inner(&jet.d(a), &jet.dd(k, b))
            })
        })
        .collect();
    let mj = MetricJet { g: g.clone(), dg };
    let gamma = christoffel(&mj)?;
    let ginv = invert(&g)?;
    let mut alpha = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut a = jet.dd(i, j);
            for k in 0..n {
                a -= jet.d(k) * gamma[k][(i, j)];
            }
            alpha.push(a);
        }
    }
    let tangents: Vec<DVector<f64>> = (0..n).map(|k| jet.d(k)).collect();
    let (mut normals, signs) = complete_frame(&chart.ambient, &tangents, u)?;
    // Hypersurface orientation: make the frame positively oriented so the
    // normal field is continuous across samples.
    if normals.len() == 1 && !chart.ambient.is_lorentz() {
        let dim = chart.ambient.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (k, t) in tangents.iter().enumerate() {
            m.set_column(k, t);
        }
        m.set_column(dim - 1, &normals[0]);
        if m.determinant() < 0.0 {
            normals[0] = -&normals[0];
        }
    }
    Ok(PointGeometry {
        u: u.to_vec(),
        jet,
        ambient: chart.ambient.clone(),
        metric: g,
        metric_inv: ginv,
        christoffel: gamma,
        normals,
        normal_signs: signs,
        alpha,
    })
}

/// First fundamental form at `u`.
pub fn first_fundamental_form(chart: &ImmersionChart, u: &[f64]) -> Result<DMatrix<f64>> {
    Ok(point_geometry(chart, u)?.metric)
}

/// Second fundamental form at `u`, expressed in the computed orthonormal
/// normal frame.
pub struct SecondFundamentalForm {
    pub normals: Vec<DVector<f64>>,
    pub signs: Vec<f64>,
    /// One coefficient matrix per normal direction.
    pub coeffs: Vec<DMatrix<f64>>,
}

pub fn second_fundamental_form(chart: &ImmersionChart, u: &[f64]) -> Result<SecondFundamentalForm> {
    let pt = point_geometry(chart, u)?;
    let n = pt.dim();
    let coeffs = pt
        .normals
        .iter()
        .zip(&pt.normal_signs)
        .map(|(xi, s)| DMatrix::from_fn(n, n, |i, j| s * pt.ambient.inner(pt.alpha(i, j), xi)))
        .collect();
    Ok(SecondFundamentalForm {
        normals: pt.normals,
        signs: pt.normal_signs,
        coeffs,
    })
}

/// Conformality of a chart against its declared base metric.
pub struct ConformalityReport {
    /// Max over samples of `|g - phi^2 b|_F / |g|_F`.
    pub residual: f64,
    /// Recovered conformal factor at each grid node.
    pub factors: Vec<f64>,
}

pub fn conformality_check(chart: &ImmersionChart) -> Result<ConformalityReport> {
    let n = chart.domain.dim();
    let mut residual: f64 = 0.0;
    let mut factors = Vec::new();
    for u in chart.domain.grid() {
        let g = {
            let jet = chart.jet(&u);
            DMatrix::from_fn(n, n, |a, b| chart.ambient.inner(&jet.d(a), &jet.d(b)))
        };
        let b = chart.base_metric.metric(&u);
        let det_g = g.determinant();
        let det_b = b.determinant();
        if !(det_b > 0.0) {
            return Err(Error::RankDeficient(u.clone(), det_b));
        }
        let phi = (det_g / det_b).powf(1.0 / (2.0 * n as f64));
        factors.push(phi);
        let diff = &g - &b * (phi * phi);
        residual = residual.max(diff.norm() / g.norm().max(1e-300));
    }
    Ok(ConformalityReport { residual, factors })
}

/// Adaptedness of the second fundamental form to a product net:
/// `alpha(X_i, X_j) = 0` for tangents in different blocks.
pub struct AdaptednessReport {
    pub residual: f64,
    pub off_block_max: f64,
    pub total_max: f64,
}

/// Floor that keeps totally geodesic charts from dividing noise by noise.
const ALPHA_FLOOR: f64 = 1e-8;

pub fn adaptedness_check(chart: &ImmersionChart, net: &ProductNet) -> Result<AdaptednessReport> {
    let mut off: f64 = 0.0;
    let mut all: f64 = 0.0;
    for u in chart.domain.grid() {
        let pt = point_geometry(chart, &u)?;
        let frames: Vec<Vec<DVector<f64>>> = net
            .blocks
            .iter()
            .map(|b| orthonormal_block(&pt.metric, b))
            .collect::<Result<_>>()?;
        for (bi, fi) in frames.iter().enumerate() {
            for (bj, fj) in frames.iter().enumerate() {
                if bj < bi {
                    continue;
                }
                for x in fi {
                    for y in fj {
                        let mut a = DVector::zeros(pt.ambient.dim());
                        for p in 0..pt.dim() {
                            for q in 0..pt.dim() {
                                let c = x[p] * y[q];
                                if c != 0.0 {
                                    a += pt.alpha(p, q) * c;
                                }
                            }
                        }
                        let norm = a.norm();
                        all = all.max(norm);
                        if bi != bj {
                            off = off.max(norm);
                        }
                    }
                }
            }
        }
    }
    Ok(AdaptednessReport {
        residual: off / all.max(ALPHA_FLOOR),
        off_block_max: off,
        total_max: all,
    })
}

/// g-orthonormal basis of the span of the given coordinate indices,
/// expressed in full-length coordinates.
fn orthonormal_block(g: &DMatrix<f64>, coords: &[usize]) -> Result<Vec<DVector<f64>>> {
    let n = g.nrows();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(coords.len());
    for &c in coords {
        let mut v = DVector::zeros(n);
        v[c] = 1.0;
        for e in &out {
            let inner = (g * &v).dot(e);
            v -= e * inner;
        }
        let q = (g * &v).dot(&v);
        if !(q > 1e-20) {
            return Err(Error::RankDeficient(vec![], q));
        }
        out.push(v / q.sqrt());
    }
    Ok(out)
}

/// g-orthogonal projection onto the span of the coordinates in `set`.
fn project_onto(g: &DMatrix<f64>, set: &[usize], v: &DVector<f64>) -> DVector<f64> {
    let k = set.len();
    let gss = DMatrix::from_fn(k, k, |i, j| g[(set[i], set[j])]);
    let rhs = {
        let gv = g * v;
        DVector::from_fn(k, |i, _| gv[set[i]])
    };
    let c = gss
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| DVector::zeros(k));
    let mut out = DVector::zeros(v.len());
    for (i, &s) in set.iter().enumerate() {
        out[s] = c[i];
    }
    out
}

struct IntrinsicPoint {
    g: DMatrix<f64>,
    gamma: Vec<DMatrix<f64>>,
}

fn intrinsic_point(metric: &dyn MetricField, u: &[f64]) -> Result<IntrinsicPoint> {
    let mj = metric.metric_jet(u);
    let gamma = christoffel(&mj)?;
    Ok(IntrinsicPoint { g: mj.g, gamma })
}

/// Mean curvature normal of the distribution spanned by `set`, fit by least
/// squares over its coordinate pairs, plus the worst umbilicity deviation.
/// The second fundamental form of the distribution is the part of
/// `nabla_X Y` orthogonal to the distribution itself.
fn umbilic_fit(pt: &IntrinsicPoint, set: &[usize]) -> Result<(DVector<f64>, f64)> {
    let n = pt.g.nrows();
    let mut num = DVector::zeros(n);
    let mut den = 0.0;
    let mut table: Vec<(usize, usize, DVector<f64>)> = Vec::new();
    for &a in set {
        for &b in set {
            let mut gam = DVector::zeros(n);
            for k in 0..n {
                gam[k] = pt.gamma[k][(a, b)];
            }
            let v = &gam - project_onto(&pt.g, set, &gam);
            num += &v * pt.g[(a, b)];
            den += pt.g[(a, b)] * pt.g[(a, b)];
            table.push((a, b, v));
        }
    }
    let eta = num / den;
    // Deviation measured in a g-orthonormal frame of the block.
    let frame = orthonormal_block(&pt.g, set)?;
    let mut worst: f64 = 0.0;
    for (p, x) in frame.iter().enumerate() {
        for (q, y) in frame.iter().enumerate() {
            let mut v = DVector::zeros(n);
            let mut gxy = 0.0;
            for (a, b, vab) in &table {
                let c = x[*a] * y[*b];
                if c != 0.0 {
                    v += vab * c;
                    gxy += pt.g[(*a, *b)] * c;
                }
            }
            let want = if p == q { 1.0 } else { 0.0 };
            debug_assert!((gxy - want).abs() < 1e-8 || p != q);
            let diff = &v - &eta * gxy;
            let norm = (&pt.g * &diff).dot(&diff).max(0.0).sqrt();
            worst = worst.max(norm);
        }
    }
    let eta_norm = (&pt.g * &eta).dot(&eta).max(0.0).sqrt();
    Ok((eta, worst / (1.0 + eta_norm)))
}

/// Covariant derivative of a vector field given by a closure, along axis `b`.
fn covariant_axis_derivative(
    metric: &dyn MetricField,
    field: &dyn Fn(&[f64]) -> Result<DVector<f64>>,
    u: &[f64],
    b: usize,
    step: f64,
    gamma: &[DMatrix<f64>],
) -> Result<DVector<f64>> {
    let probe = |s: f64| -> Result<DVector<f64>> {
        let mut p = u.to_vec();
        p[b] += s * step;
        field(&p)
    };
    let fp1 = probe(1.0)?;
    let fm1 = probe(-1.0)?;
    let fp2 = probe(2.0)?;
    let fm2 = probe(-2.0)?;
    let d = ((&fp1 - &fm1) * 8.0 - (&fp2 - &fm2)) / (12.0 * step);
    let v0 = field(u)?;
    let n = metric.dim();
    let mut out = d;
    for k in 0..n {
        let mut corr = 0.0;
        for l in 0..n {
            corr += gamma[k][(b, l)] * v0[l];
        }
        out[k] += corr;
    }
    Ok(out)
}

/// Per-block product-net geometry of a metric.
#[derive(Clone, Debug)]
pub struct BlockNetReport {
    /// Umbilicity deviation of the block distribution.
    pub umbilic: f64,
    /// Umbilicity deviation of its orthogonal complement.
    pub perp_umbilic: f64,
    /// Residual of the mixed mean-curvature-derivative condition.
    pub cp: f64,
    /// `(nabla_X H)_{E^perp}` for `X` in the block (zero for spherical blocks).
    pub sphericality: f64,
    /// Deviation of the block mean curvature normal from the projected
    /// negative gradient of `log rho`, when a twist function was declared.
    pub twist: Option<f64>,
    /// Mean curvature normal of the block at each grid node (coordinates).
    pub mean_curvature: Vec<DVector<f64>>,
    /// Mean curvature normal of the complement at each grid node.
    pub perp_mean_curvature: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct NetGeometryReport {
    pub blocks: Vec<BlockNetReport>,
}

impl NetGeometryReport {
    pub fn max_umbilic(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.umbilic.max(b.perp_umbilic))
            .fold(0.0, f64::max)
    }

    pub fn max_cp(&self) -> f64 {
        self.blocks.iter().map(|b| b.cp).fold(0.0, f64::max)
    }
}

/// Net geometry of a declared metric over a sampled box.
pub fn net_geometry_for_metric(
    metric: &dyn MetricField,
    domain: &Domain,
    net: &ProductNet,
    twist: Option<&[ScalarField]>,
) -> Result<NetGeometryReport> {
    let n = metric.dim();
    if let Some(t) = twist {
        if t.len() != net.blocks.len() {
            return Err(Error::DimensionMismatch(
                "one twist function per net block expected".into(),
            ));
        }
    }
    let steps: Vec<f64> = (0..n)
        .map(|k| tol::FIELD_FD_REL_STEP * domain.extent(k))
        .collect();
    let mut blocks = Vec::with_capacity(net.blocks.len());
    for (bi, set) in net.blocks.iter().enumerate() {
        let perp = net.complement(bi);
        let mut rep = BlockNetReport {
            umbilic: 0.0,
            perp_umbilic: 0.0,
            cp: 0.0,
            sphericality: 0.0,
            twist: twist.map(|_| 0.0),
            mean_curvature: Vec::new(),
            perp_mean_curvature: Vec::new(),
        };
        // Mean curvature normal fields as closures for finite differences.
        let h_field = |p: &[f64]| -> Result<DVector<f64>> {
            let pt = intrinsic_point(metric, p)?;
            Ok(umbilic_fit(&pt, set)?.0)
        };
        let eta_field = |p: &[f64]| -> Result<DVector<f64>> {
            let pt = intrinsic_point(metric, p)?;
            Ok(umbilic_fit(&pt, &perp)?.0)
        };
        for u in domain.grid() {
            let pt = intrinsic_point(metric, &u)?;
            let (h, udev) = umbilic_fit(&pt, set)?;
            let (eta, pdev) = umbilic_fit(&pt, &perp)?;
            rep.umbilic = rep.umbilic.max(udev);
            rep.perp_umbilic = rep.perp_umbilic.max(pdev);
            rep.mean_curvature.push(h.clone());
            rep.perp_mean_curvature.push(eta);

            // Mixed condition: <nabla_{X_perp} eta, X> = <nabla_X H, X_perp>
            // on orthonormalized block frames.
            let fr_e = orthonormal_block(&pt.g, set)?;
            let fr_p = orthonormal_block(&pt.g, &perp)?;
            let de: Vec<DVector<f64>> = set
                .iter()
                .map(|&a| {
                    covariant_axis_derivative(metric, &h_field, &u, a, steps[a], &pt.gamma)
                })
                .collect::<Result<_>>()?;
            let dp: Vec<DVector<f64>> = perp
                .iter()
                .map(|&b| {
                    covariant_axis_derivative(metric, &eta_field, &u, b, steps[b], &pt.gamma)
                })
                .collect::<Result<_>>()?;
            for x in &fr_e {
                for (ybi, y) in fr_p.iter().enumerate() {
                    let _ = ybi;
                    // B1 = <nabla_Y eta, X>, B2 = <nabla_X H, Y>.
                    let mut b1 = 0.0;
                    for (bj, &b) in perp.iter().enumerate() {
                        if y[b] != 0.0 {
                            b1 += y[b] * (&pt.g * &dp[bj]).dot(x);
                        }
                    }
                    let mut b2 = 0.0;
                    for (aj, &a) in set.iter().enumerate() {
                        if x[a] != 0.0 {
                            b2 += x[a] * (&pt.g * &de[aj]).dot(y);
                        }
                    }
                    rep.cp = rep.cp.max((b1 - b2).abs() / (1.0 + b1.abs().max(b2.abs())));
                    let _ = &b2;
                }
            }
            // Sphericality of the block: (nabla_X H)_{E^perp} = 0.
            for (aj, &a) in set.iter().enumerate() {
                let _ = a;
                let proj = &de[aj] - project_onto(&pt.g, set, &de[aj]);
                let norm = (&pt.g * &proj).dot(&proj).max(0.0).sqrt();
                let h_norm = (&pt.g * &h).dot(&h).max(0.0).sqrt();
                rep.sphericality = rep.sphericality.max(norm / (1.0 + h_norm));
            }
            // Twist check: H = (-grad log rho)_{E^perp}.
            if let Some(t) = twist {
                let rho = t[bi].jet(&u);
                let dlog: DVector<f64> = &rho.g / rho.v;
                let grad = invert(&pt.g)? * dlog;
                let target = {
                    let neg = -grad;
                    &neg - &project_onto(&pt.g, set, &neg)
                };
                let diff = &h - &target;
                let norm = (&pt.g * &diff).dot(&diff).max(0.0).sqrt();
                let scale = 1.0 + (&pt.g * &target).dot(&target).max(0.0).sqrt();
                let cur = rep.twist.unwrap_or(0.0);
                rep.twist = Some(cur.max(norm / scale));
            }
        }
        blocks.push(rep);
    }
    Ok(NetGeometryReport { blocks })
}

/// Net geometry of a chart's induced metric.
pub fn net_geometry_report(chart: &ImmersionChart, net: &ProductNet) -> Result<NetGeometryReport> {
    let pull = PullbackMetric {
        chart: std::sync::Arc::new(chart.clone()),
    };
    net_geometry_for_metric(&pull, &chart.domain, net, None)
}

/// Residual of the second-fundamental-form split of an isometric light-cone
/// lift of a conformal chart.
pub struct LiftSplitReport {
    pub residual: f64,
    /// `true` when span{F, eta} carried a Lorentzian Gram matrix everywhere.
    pub lorentzian_plane: bool,
}

pub fn verify_alpha_f_split(
    frame: &MoebiusFrame,
    f: &ImmersionChart,
    phi: &ScalarField,
) -> Result<LiftSplitReport> {
    let lifted = lift_conformal(frame, f, phi)?;
    let n = f.domain.dim();
    let mink = frame.minkowski();
    let psi_diff = |x: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
        frame.a_matrix() * z - &frame.w * x.dot(z)
    };
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 1.0;
    let mut lorentzian = true;
    for u in f.domain.grid() {
        let pt_f = point_geometry(f, &u)?;
        let pt_big = point_geometry(&lifted, &u)?;
        let phj = phi.jet(&u);
        let inv = phj.recip();
        // Gradient and Hessian of 1/phi in the lift-induced metric.
        let grad_inv = pt_big.grad(&inv.g.clone());
        let hess_inv = DMatrix::from_fn(n, n, |i, j| {
            let mut v = inv.h[(i, j)];
            for k in 0..n {
                v -= pt_big.christoffel[k][(i, j)] * inv.g[k];
            }
            v
        });
        let f_val = pt_f.jet.value();
        let big_val = pt_big.jet.value();
        let d_psi_grad = {
            let mut out = DVector::zeros(frame.ambient_dim());
            for k in 0..n {
                out += psi_diff(&f_val, &pt_f.tangent(k)) * grad_inv[k];
            }
            out
        };
        let eta = &frame.w * phj.v - d_psi_grad;

        // Gram of span{F, eta} should be Lorentzian: det < 0.
        let gram = nalgebra::Matrix2::new(
            mink.inner(&big_val, &big_val),
            mink.inner(&big_val, &eta),
            mink.inner(&eta, &big_val),
            mink.inner(&eta, &eta),
        );
        if gram.determinant() >= 0.0 {
            lorentzian = false;
        }

        let l = pt_big.chol()?;
        let linv = l.try_inverse().ok_or(Error::RankDeficient(u.clone(), 0.0))?;
        // Error form per coordinate pair, then orthonormalized.
        let mut err: Vec<DVector<f64>> = Vec::with_capacity(n * n);
        let mut mag: Vec<DVector<f64>> = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let lhs = pt_big.alpha(i, j).clone();
                let rhs = &big_val * (phj.v * hess_inv[(i, j)])
                    + psi_diff(&f_val, pt_f.alpha(i, j)) * inv.v
                    - &eta * pt_big.metric[(i, j)];
                err.push(&lhs - &rhs);
                mag.push(lhs);
            }
        }
        for p in 0..n {
            for q in 0..n {
                let mut e = DVector::zeros(frame.ambient_dim());
                let mut m = DVector::zeros(frame.ambient_dim());
                for i in 0..n {
                    for j in 0..n {
                        let c = linv[(p, i)] * linv[(q, j)];
                        if c != 0.0 {
                            e += &err[i * n + j] * c;
                            m += &mag[i * n + j] * c;
                        }
                    }
                }
                residual = residual.max(e.norm());
                scale = scale.max(m.norm());
            }
        }
    }
    Ok(LiftSplitReport {
        residual: residual / scale,
        lorentzian_plane: lorentzian,
    })
}

/// Principal curvature data of a hypersurface chart at one sample.
#[derive(Clone, Debug)]
pub struct PrincipalSample {
    pub u: Vec<f64>,
    /// Ascending eigenvalues of the shape operator.
    pub eigenvalues: Vec<f64>,
    /// Matching g-orthonormal eigenvectors in coordinates.
    pub eigenvectors: Vec<DVector<f64>>,
    /// Index ranges of the eigenvalue clusters.
    pub clusters: Vec<Vec<usize>>,
}

pub struct PrincipalCurvatureField {
    pub samples: Vec<PrincipalSample>,
    pub multiplicities: Vec<usize>,
}

fn shape_eigen(chart: &ImmersionChart, u: &[f64]) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let pt = point_geometry(chart, u)?;
    if pt.normals.len() != 1 {
        return Err(Error::DimensionMismatch(
            "principal curvatures need a hypersurface (codimension 1)".into(),
        ));
    }
    let n = pt.dim();
    let b = DMatrix::from_fn(n, n, |i, j| pt.ambient.inner(pt.alpha(i, j), &pt.normals[0]));
    let l = pt.chol()?;
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::RankDeficient(u.to_vec(), 0.0))?;
    let w = &linv * b * linv.transpose();
    let eig = w.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b2| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b2]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| linv.transpose() * eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok((vals, vecs))
}

fn cluster_eigenvalues(vals: &[f64], at: &[f64]) -> Result<Vec<Vec<usize>>> {
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    let threshold = tol::EIGEN_CLUSTER_GAP * scale;
    // A gap close to the threshold means the clustering is unreliable.
    for w in vals.windows(2) {
        let gap = w[1] - w[0];
        if gap > 0.3 * threshold && gap < 3.0 * threshold {
            return Err(Error::AmbiguousClustering(at.to_vec(), gap / scale));
        }
    }
    let mut clusters = vec![vec![0usize]];
    for i in 1..vals.len() {
        if vals[i] - vals[i - 1] > threshold {
            clusters.push(Vec::new());
        }
        clusters.last_mut().unwrap().push(i);
    }
    Ok(clusters)
}

/// Principal curvature fields over the chart grid (hypersurfaces only).
pub fn principal_curvature_fields(chart: &ImmersionChart) -> Result<PrincipalCurvatureField> {
    let mut samples = Vec::new();
    let mut mults: Option<Vec<usize>> = None;
    for u in chart.domain.grid() {
        let (vals, vecs) = shape_eigen(chart, &u)?;
        let clusters = cluster_eigenvalues(&vals, &u)?;
        let m: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
        match &mults {
            None => mults = Some(m),
            Some(prev) if *prev == m => {}
            Some(prev) => {
                return Err(Error::AmbiguousClustering(
                    u.clone(),
                    (prev.len() as f64 - m.len() as f64).abs(),
                ))
            }
        }
        samples.push(PrincipalSample {
            u,
            eigenvalues: vals,
            eigenvectors: vecs,
            clusters,
        });
    }
    Ok(PrincipalCurvatureField {
        samples,
        multiplicities: mults.unwrap_or_default(),
    })
}

/// Largest directional derivative of each principal-curvature cluster along
/// its own eigendistribution (zero for a cyclide of Dupin).
pub fn dupin_residual(chart: &ImmersionChart, field: &PrincipalCurvatureField) -> Result<f64> {
    let n = chart.domain.dim();
    let h = tol::FIELD_FD_REL_STEP
        * (0..n).map(|k| chart.domain.extent(k)).fold(f64::INFINITY, f64::min);
    let mut worst: f64 = 0.0;
    for s in &field.samples {
        for cluster in &s.clusters {
            let mean: f64 =
                cluster.iter().map(|&i| s.eigenvalues[i]).sum::<f64>() / cluster.len() as f64;
            for &i in cluster {
                let dir = &s.eigenvectors[i];
                let probe = |sign: f64| -> Result<f64> {
                    let p: Vec<f64> = s
                        .u
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| x + sign * h * dir[k])
                        .collect();
                    let (vals, _) = shape_eigen(chart, &p)?;
                    let clusters = cluster_eigenvalues(&vals, &p)?;
                    // Match by nearest cluster mean.
                    let mut best = f64::INFINITY;
                    let mut got = mean;
                    for c in &clusters {
                        let m: f64 =
                            c.iter().map(|&j| vals[j]).sum::<f64>() / c.len() as f64;
                        if (m - mean).abs() < best {
                            best = (m - mean).abs();
                            got = m;
                        }
                    }
                    Ok(got)
                };
                let d = (probe(1.0)? - probe(-1.0)?) / (2.0 * h);
                worst = worst.max(d.abs() / (1.0 + mean.abs()));
            }
        }
    }
    Ok(worst)
}
