//! Combescure, Christoffel, Ribaucour and Darboux transforms of Euclidean
//! immersions, driven by a scalar field `phi` and the ambient transform field
//! `F = df(grad phi) + beta` with `beta` normal. The associated commuting
//! Codazzi tensor is `S = Hess phi - A_beta`; all the structural identities
//! relating a transform to its host are exposed as residual sweeps.

use crate::chart::ImmersionChart;
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geometry::{point_geometry, PointGeometry};
use crate::tol;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Transform data `(phi, F)` on a host immersion; `beta` is recovered as the
/// normal part of `F`.
#[derive(Clone)]
pub struct CombescureData {
    pub host: Arc<ImmersionChart>,
    pub phi: ScalarField,
    pub cal_f: VectorField,
}

impl CombescureData {
    pub fn new(host: Arc<ImmersionChart>, phi: ScalarField, cal_f: VectorField) -> Result<Self> {
        if host.ambient.is_lorentz() {
            return Err(Error::Compatibility(
                "transform data lives on Euclidean immersions".into(),
            ));
        }
        let n = host.domain.dim();
        if phi.n() != n || cal_f.n() != n || cal_f.dim() != host.ambient.dim() {
            return Err(Error::DimensionMismatch(
                "transform fields must match the host chart".into(),
            ));
        }
        Ok(CombescureData { host, phi, cal_f })
    }

    /// Builds the data from `(phi, beta)` instead; `F` is assembled as
    /// `df(grad phi) + beta` with finite-difference jets.
    pub fn from_phi_beta(
        host: Arc<ImmersionChart>,
        phi: ScalarField,
        beta: VectorField,
    ) -> Result<Self> {
        let n = host.domain.dim();
        if beta.n() != n || beta.dim() != host.ambient.dim() {
            return Err(Error::DimensionMismatch(
                "beta must be an ambient field over the host domain".into(),
            ));
        }
        let h = host.clone();
        let p = phi.clone();
        let steps = host.fd_steps();
        let cal_f = VectorField::sampled(
            n,
            host.ambient.dim(),
            move |u: &[f64]| {
                let pt = point_geometry(&h, u).expect("host geometry");
                let grad = pt.grad(&p.jet(u).g);
                pt.push(&grad) + beta.value(u)
            },
            steps,
        );
        CombescureData::new(host, phi, cal_f)
    }

    pub fn grad_phi(&self, pt: &PointGeometry) -> DVector<f64> {
        pt.grad(&self.phi.jet(&pt.u).g)
    }

    /// Normal component of `F` at a point.
    pub fn beta_at(&self, pt: &PointGeometry) -> DVector<f64> {
        let f = self.cal_f.value(&pt.u);
        &f - pt.push(&self.grad_phi(pt))
    }

    /// `beta` in the chart's computed orthonormal normal frame.
    pub fn beta_coefficients(&self, pt: &PointGeometry) -> DVector<f64> {
        let beta = self.beta_at(pt);
        DVector::from_fn(pt.normals.len(), |a, _| {
            pt.normal_signs[a] * pt.ambient.inner(&beta, &pt.normals[a])
        })
    }

    /// The commuting Codazzi tensor `S = Hess phi - A_beta` as a (1,1) tensor.
    pub fn s_matrix(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let pt = point_geometry(&self.host, u)?;
        self.s_matrix_at(&pt)
    }

    pub fn s_matrix_at(&self, pt: &PointGeometry) -> Result<DMatrix<f64>> {
        let n = pt.dim();
        let phj = self.phi.jet(&pt.u);
        let hess = DMatrix::from_fn(n, n, |i, j| {
            let mut v = phj.h[(i, j)];
            for k in 0..n {
                v -= pt.christoffel[k][(i, j)] * phj.g[k];
            }
            v
        });
        let beta = self.beta_at(pt);
        let b = DMatrix::from_fn(n, n, |i, j| pt.ambient.inner(pt.alpha(i, j), &beta));
        Ok(&pt.metric_inv * (hess - b))
    }

    /// Ambient derivative of `beta` along axis `i`, assembled from the jets
    /// of `F`, the chart, and `phi` (no extra differencing).
    fn beta_derivative(&self, pt: &PointGeometry, i: usize) -> DVector<f64> {
        let n = pt.dim();
        let phj = self.phi.jet(&pt.u);
        let fj = self.cal_f.jets(&pt.u);
        let d_f = DVector::from_fn(fj.len(), |c, _| fj[c].g[i]);
        // d_i grad phi = d_i(g^{-1}) dphi + g^{-1} d_i dphi.
        let dg_i = DMatrix::from_fn(n, n, |a, b| {
            pt.ambient.inner(&pt.jet.dd(i, a), &pt.jet.d(b))
                + pt.ambient.inner(&pt.jet.d(a), &pt.jet.dd(i, b))
        });
        let dginv = -&pt.metric_inv * dg_i * &pt.metric_inv;
        let dgrad = &dginv * &phj.g + &pt.metric_inv * phj.h.column(i).into_owned();
        let grad = pt.grad(&phj.g);
        let mut d_push = DVector::zeros(pt.ambient.dim());
        for k in 0..n {
            d_push += pt.jet.dd(i, k) * grad[k] + pt.jet.d(k) * dgrad[k];
        }
        d_f - d_push
    }

    /// Max residual of the compatibility identity
    /// `alpha(grad phi, X) + nabla^perp_X beta = 0` over the grid.
    pub fn compatibility_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for u in self.host.domain.grid() {
            let pt = point_geometry(&self.host, &u)?;
            let n = pt.dim();
            let grad = self.grad_phi(&pt);
            let linv = pt
                .chol()?
                .try_inverse()
                .ok_or(Error::RankDeficient(u.clone(), 0.0))?;
            let per_axis: Vec<DVector<f64>> = (0..n)
                .map(|i| {
                    let mut a_grad = DVector::zeros(pt.ambient.dim());
                    for k in 0..n {
                        a_grad += pt.alpha(k, i) * grad[k];
                    }
                    let dbeta = self.beta_derivative(&pt, i);
                    a_grad + pt.normal_project(&dbeta)
                })
                .collect();
            let scale = 1.0
                + per_axis
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let mut a_grad = DVector::zeros(pt.ambient.dim());
                        for k in 0..n {
                            a_grad += pt.alpha(k, i) * grad[k];
                        }
                        a_grad.norm()
                    })
                    .fold(0.0f64, f64::max);
            for p in 0..n {
                let mut r = DVector::zeros(pt.ambient.dim());
                for i in 0..n {
                    r += &per_axis[i] * linv[(p, i)];
                }
                worst = worst.max(r.norm() / scale);
            }
        }
        Ok(worst)
    }
}

/// Evaluator for the Codazzi tensor field of a data set, with its
/// invariant sweeps.
pub struct CodazziTensorField {
    pub data: CombescureData,
}

impl CodazziTensorField {
    pub fn matrix(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.data.s_matrix(u)
    }

    /// Symmetry of `S` with respect to the induced metric: `gS = (gS)^t`.
    pub fn symmetry_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for u in self.data.host.domain.grid() {
            let pt = point_geometry(&self.data.host, &u)?;
            let s = self.data.s_matrix_at(&pt)?;
            let gs = &pt.metric * &s;
            let asym = &gs - gs.transpose();
            worst = worst.max(asym.norm() / gs.norm().max(1.0));
        }
        Ok(worst)
    }

    /// `alpha(X, SY) = alpha(SX, Y)` residual.
    pub fn commuting_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for u in self.data.host.domain.grid() {
            let pt = point_geometry(&self.data.host, &u)?;
            let s = self.data.s_matrix_at(&pt)?;
            let n = pt.dim();
            let mut scale: f64 = 1.0;
            let mut off: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut lhs = DVector::zeros(pt.ambient.dim());
                    let mut rhs = DVector::zeros(pt.ambient.dim());
                    for k in 0..n {
                        lhs += pt.alpha(i, k) * s[(k, j)];
                        rhs += pt.alpha(k, j) * s[(k, i)];
                    }
                    off = off.max((&lhs - &rhs).norm());
                    scale = scale.max(lhs.norm());
                }
            }
            worst = worst.max(off / scale);
        }
        Ok(worst)
    }

    /// Codazzi identity `(nabla_X S)Y = (nabla_Y S)X` with the derivative of
    /// the tensor field taken by finite differences.
    pub fn codazzi_residual(&self) -> Result<f64> {
        let host = &self.data.host;
        let n = host.domain.dim();
        let steps: Vec<f64> = (0..n)
            .map(|k| tol::FIELD_FD_REL_STEP * host.domain.extent(k))
            .collect();
        let mut worst: f64 = 0.0;
        for u in host.domain.grid() {
            let pt = point_geometry(host, &u)?;
            let s0 = self.data.s_matrix_at(&pt)?;
            let ds: Vec<DMatrix<f64>> = (0..n)
                .map(|i| {
                    let probe = |sgn: f64, mult: f64| -> Result<DMatrix<f64>> {
                        let mut p = u.clone();
                        p[i] += sgn * mult * steps[i];
                        self.data.s_matrix(&p)
                    };
                    let fp1 = probe(1.0, 1.0)?;
                    let fm1 = probe(-1.0, 1.0)?;
                    let fp2 = probe(1.0, 2.0)?;
                    let fm2 = probe(-1.0, 2.0)?;
                    Ok(((fp1 - fm1) * 8.0 - (fp2 - fm2)) / (12.0 * steps[i]))
                })
                .collect::<Result<_>>()?;
            // (nabla_i S)^k_j = d_i S^k_j + G^k_{il} S^l_j - G^l_{ij} S^k_l.
            let nabla = |i: usize, j: usize| -> DVector<f64> {
                let mut out = DVector::zeros(n);
                for k in 0..n {
                    let mut v = ds[i][(k, j)];
                    for l in 0..n {
                        v += pt.christoffel[k][(i, l)] * s0[(l, j)]
                            - pt.christoffel[l][(i, j)] * s0[(k, l)];
                    }
                    out[k] = v;
                }
                out
            };
            let scale = 1.0 + s0.norm();
            for i in 0..n {
                for j in (i + 1)..n {
                    let diff = nabla(i, j) - nabla(j, i);
                    let norm = (&pt.metric * &diff).dot(&diff).max(0.0).sqrt();
                    worst = worst.max(norm / scale);
                }
            }
        }
        Ok(worst)
    }

    /// Sorted eigenvalues of `S` at a point (self-adjoint in the metric).
    pub fn eigenvalues(&self, u: &[f64]) -> Result<Vec<f64>> {
        let pt = point_geometry(&self.data.host, u)?;
        let s = self.data.s_matrix_at(&pt)?;
        eigenvalues_sym(&pt, &s)
    }
}

/// Eigenvalues of a g-self-adjoint (1,1) tensor.
pub fn eigenvalues_sym(pt: &PointGeometry, s: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = pt.chol()?;
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::RankDeficient(pt.u.clone(), 0.0))?;
    // L^{-1} (g S) L^{-t} is symmetric with the eigenvalues of S.
    let w = &linv * (&pt.metric * s) * linv.transpose();
    let sym = (&w + w.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChristoffelVerdict {
    Trivial,
    Christoffel,
    Neither,
}

#[derive(Clone, Debug)]
pub struct ChristoffelReport {
    pub verdict: ChristoffelVerdict,
    /// `sqrt(tr(S^2)/n)` per grid node.
    pub lambda: Vec<f64>,
    pub square_residual: f64,
    pub scalar_deviation: f64,
}

/// Classifies the transform: trivial (S a constant multiple of I),
/// Christoffel (S^2 = lambda^2 I but not scalar), or neither.
pub fn check_christoffel(data: &CombescureData, tolerance: f64) -> Result<ChristoffelReport> {
    let n = data.host.domain.dim() as f64;
    let mut lambda = Vec::new();
    let mut square_res: f64 = 0.0;
    let mut scalar_dev: f64 = 0.0;
    let mut traces = Vec::new();
    for u in data.host.domain.grid() {
        let s = data.s_matrix(&u)?;
        let s2 = &s * &s;
        let l2 = s2.trace() / n;
        lambda.push(l2.max(0.0).sqrt());
        let eye = DMatrix::identity(s.nrows(), s.ncols());
        square_res = square_res.max((&s2 - &eye * l2).norm() / s.norm_squared().max(1.0));
        let c = s.trace() / n;
        traces.push(c);
        scalar_dev = scalar_dev.max((&s - &eye * c).norm() / c.abs().max(1.0));
    }
    let mean_c = traces.iter().sum::<f64>() / traces.len() as f64;
    let c_spread = traces
        .iter()
        .map(|c| (c - mean_c).abs())
        .fold(0.0f64, f64::max)
        / mean_c.abs().max(1.0);
    let verdict = if scalar_dev <= tolerance && c_spread <= tolerance {
        ChristoffelVerdict::Trivial
    } else if square_res <= tolerance {
        ChristoffelVerdict::Christoffel
    } else {
        ChristoffelVerdict::Neither
    };
    Ok(ChristoffelReport {
        verdict,
        lambda,
        square_residual: square_res,
        scalar_deviation: scalar_dev,
    })
}

/// The Combescure transform `F` as a chart, with an immersion flag.
pub struct CombescureTransform {
    pub chart: ImmersionChart,
    pub non_immersive: bool,
    pub min_singular_value: f64,
}

pub fn combescure_transform(data: &CombescureData) -> Result<CombescureTransform> {
    let host = &data.host;
    let n = host.domain.dim();
    let dim = host.ambient.dim();
    let mut chart = if data.cal_f.has_analytic_jets() {
        let f = data.cal_f.clone();
        ImmersionChart::analytic(host.domain.clone(), host.ambient.clone(), move |u| {
            f.jets_of(u)
        })
    } else {
        let f = data.cal_f.clone();
        ImmersionChart::sampled(host.domain.clone(), host.ambient.clone(), move |u| {
            f.value(u)
        })
    };
    chart.base_metric = host.base_metric.clone();
    chart.net = host.net.clone();
    let mut min_sv = f64::INFINITY;
    let mut max_sv: f64 = 0.0;
    for u in host.domain.grid() {
        let jets = data.cal_f.jets(&u);
        let jac = DMatrix::from_fn(dim, n, |r, c| jets[r].g[c]);
        let sv = jac.svd(false, false).singular_values;
        min_sv = min_sv.min(sv.min());
        max_sv = max_sv.max(sv.max());
    }
    Ok(CombescureTransform {
        chart,
        non_immersive: min_sv < 1e-8 * max_sv.max(1.0),
        min_singular_value: min_sv,
    })
}

/// Max residual of `dF = df o S` with `dF` measured on the transform chart.
pub fn combescure_differential_residual(
    data: &CombescureData,
    transform: &ImmersionChart,
) -> Result<f64> {
    let host = &data.host;
    let n = host.domain.dim();
    let mut worst: f64 = 0.0;
    for u in host.domain.grid() {
        let pt = point_geometry(host, &u)?;
        let s = data.s_matrix_at(&pt)?;
        let tj = transform.jet(&u);
        let mut scale: f64 = 1.0;
        let mut off: f64 = 0.0;
        for i in 0..n {
            let lhs = tj.d(i);
            let rhs = pt.push(&s.column(i).into_owned());
            off = off.max((&lhs - &rhs).norm());
            scale = scale.max(lhs.norm());
        }
        worst = worst.max(off / scale);
    }
    Ok(worst)
}

/// Residual of the second-form relation `alpha_F(X,Y) = alpha_f(SX, Y)`.
pub fn combescure_second_form_residual(
    data: &CombescureData,
    transform: &ImmersionChart,
) -> Result<f64> {
    let host = &data.host;
    let n = host.domain.dim();
    let mut worst: f64 = 0.0;
    for u in host.domain.grid() {
        let pt = point_geometry(host, &u)?;
        let pt_t = point_geometry(transform, &u)?;
        let s = data.s_matrix_at(&pt)?;
        let mut scale: f64 = 1.0;
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let lhs = pt_t.alpha(i, j).clone();
                let mut rhs = DVector::zeros(pt.ambient.dim());
                for k in 0..n {
                    rhs += pt.alpha(k, j) * s[(k, i)];
                }
                off = off.max((&lhs - &rhs).norm());
                scale = scale.max(lhs.norm());
            }
        }
        worst = worst.max(off / scale);
    }
    Ok(worst)
}

/// Ribaucour data derived from `(phi, F)`: the sphere-congruence reflection,
/// the tensor `D = I - 2 nu phi S` and `delta = -F/phi`.
pub struct RibaucourData {
    pub data: CombescureData,
    /// Grid indices where `D` was singular and samples were excluded.
    pub excluded: Vec<usize>,
}

impl RibaucourData {
    pub fn nu(&self, u: &[f64]) -> Result<f64> {
        let f = self.data.cal_f.value(u);
        let q = f.norm_squared();
        if q < 1e-14 {
            return Err(Error::NullCongruence(q));
        }
        Ok(1.0 / q)
    }

    pub fn d_matrix(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.data.s_matrix(u)?;
        let nu = self.nu(u)?;
        let phi = self.data.phi.value(u);
        Ok(DMatrix::identity(s.nrows(), s.ncols()) - s * (2.0 * nu * phi))
    }

    pub fn delta(&self, u: &[f64]) -> DVector<f64> {
        let f = self.data.cal_f.value(u);
        -f / self.data.phi.value(u)
    }

    /// The pointwise reflection `P Z = Z - 2 nu <F,Z> F` as a matrix.
    pub fn p_matrix(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let f = self.data.cal_f.value(u);
        let nu = self.nu(u)?;
        let dim = f.len();
        Ok(DMatrix::identity(dim, dim) - (&f * f.transpose()) * (2.0 * nu))
    }
}

/// Builds the Ribaucour transform `f~ = f - 2 nu phi F` and its data.
pub fn ribaucour_transform(data: &CombescureData) -> Result<(ImmersionChart, RibaucourData)> {
    let host = &data.host;
    let grid = host.domain.grid();
    let mut min_q = f64::INFINITY;
    let mut max_q: f64 = 0.0;
    for u in &grid {
        let q = data.cal_f.value(u).norm_squared();
        min_q = min_q.min(q);
        max_q = max_q.max(q);
    }
    if min_q < 1e-10 * max_q.max(1.0) {
        return Err(Error::NullCongruence(min_q));
    }
    let rdata = RibaucourData {
        data: data.clone(),
        excluded: Vec::new(),
    };
    let mut excluded = Vec::new();
    for (gi, u) in grid.iter().enumerate() {
        let d = rdata.d_matrix(u)?;
        if d.determinant().abs() < 1e-10 {
            excluded.push(gi);
        }
    }
    if excluded.len() * 2 > grid.len() {
        return Err(Error::DegenerateTransform(format!(
            "D is singular at {} of {} samples",
            excluded.len(),
            grid.len()
        )));
    }
    let analytic = host.has_analytic_jets()
        && data.cal_f.has_analytic_jets()
        && data.phi.has_analytic_jets();
    let mut chart = if analytic {
        let hj = host.jet_closure().expect("analytic host");
        let f = data.cal_f.clone();
        let phi = data.phi.clone();
        ImmersionChart::analytic(host.domain.clone(), host.ambient.clone(), move |u| {
            let base = hj(u);
            let fj = f.jets_of(u);
            let ph = phi.jet_of(u);
            let q = crate::jet::dot(&fj, &fj);
            let coef = (&ph / &q).scale(2.0);
            base.iter()
                .zip(&fj)
                .map(|(b, fc)| b - &(&coef * fc))
                .collect()
        })
    } else {
        let h = host.clone();
        let f = data.cal_f.clone();
        let phi = data.phi.clone();
        ImmersionChart::sampled(host.domain.clone(), host.ambient.clone(), move |u| {
            let fv = f.value(u);
            let q = fv.norm_squared();
            h.value(u) - fv * (2.0 * phi.value(u) / q)
        })
    };
    chart.base_metric = host.base_metric.clone();
    chart.net = host.net.clone();
    Ok((
        chart,
        RibaucourData {
            data: data.clone(),
            excluded,
        },
    ))
}

/// Residual bundle for the structural identities of a Ribaucour pair.
#[derive(Clone, Debug)]
pub struct RibaucourResiduals {
    /// Metric relation: induced metric of the transform vs `<DX, DY>`.
    pub metric: f64,
    /// Connection relation between the two Levi-Civita connections.
    pub connection: f64,
    /// Second-fundamental-form relation through the reflection.
    pub second_form: f64,
    /// `P Z - Z = <delta, Z>(f - f~)` on an ambient basis.
    pub reflection: f64,
    /// `df~ = P o df o D` (the common tangency of the sphere congruence).
    pub envelope: f64,
    /// Commutator of the shape operators `A_xi` and `A~_{P xi}`.
    pub shape_commute: f64,
}

pub fn verify_ribaucour_relations(
    rdata: &RibaucourData,
    transform: &ImmersionChart,
) -> Result<RibaucourResiduals> {
    let data = &rdata.data;
    let host = &data.host;
    let n = host.domain.dim();
    let dim = host.ambient.dim();
    let steps: Vec<f64> = (0..n)
        .map(|k| tol::FIELD_FD_REL_STEP * host.domain.extent(k))
        .collect();
    let mut out = RibaucourResiduals {
        metric: 0.0,
        connection: 0.0,
        second_form: 0.0,
        reflection: 0.0,
        envelope: 0.0,
        shape_commute: 0.0,
    };
    for (gi, u) in host.domain.grid().iter().enumerate() {
        if rdata.excluded.contains(&gi) {
            continue;
        }
        let pt = point_geometry(host, u)?;
        let pt_t = point_geometry(transform, u)?;
        let s = data.s_matrix_at(&pt)?;
        let nu = rdata.nu(u)?;
        let phi = data.phi.value(u);
        let d = DMatrix::identity(n, n) - &s * (2.0 * nu * phi);
        let p = rdata.p_matrix(u)?;
        let grad = data.grad_phi(&pt);
        let beta = data.beta_at(&pt);
        let f_val = pt.jet.value();
        let t_val = pt_t.jet.value();

        // Metric relation.
        let dtgd = d.transpose() * &pt.metric * &d;
        out.metric = out
            .metric
            .max((&pt_t.metric - &dtgd).norm() / pt_t.metric.norm().max(1.0));

        // Connection relation on coordinate fields, with d(D)/du by
        // finite differences of the tensor field.
        let dd: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let probe = |mult: f64| -> Result<DMatrix<f64>> {
                    let mut pq = u.clone();
                    pq[i] += mult * steps[i];
                    rdata.d_matrix(&pq)
                };
                let fp1 = probe(1.0)?;
                let fm1 = probe(-1.0)?;
                let fp2 = probe(2.0)?;
                let fm2 = probe(-2.0)?;
                Ok(((fp1 - fm1) * 8.0 - (fp2 - fm2)) / (12.0 * steps[i]))
            })
            .collect::<Result<_>>()?;
        for i in 0..n {
            for j in 0..n {
                // LHS: D applied to the transform connection.
                let gamma_t = DVector::from_fn(n, |k, _| pt_t.christoffel[k][(i, j)]);
                let lhs = &d * gamma_t;
                // RHS: nabla_i (D e_j) + 2 nu <S e_i, D e_j> grad phi
                //      - 2 nu <grad phi, D e_j> S e_i.
                let dej = d.column(j).into_owned();
                let sei = s.column(i).into_owned();
                let mut rhs = DVector::from_fn(n, |k, _| {
                    let mut v = dd[i][(k, j)];
                    for l in 0..n {
                        v += pt.christoffel[k][(i, l)] * d[(l, j)];
                    }
                    v
                });
                let s_dot = (&pt.metric * &sei).dot(&dej);
                let g_dot = (&pt.metric * &grad).dot(&dej);
                rhs += &grad * (2.0 * nu * s_dot);
                rhs -= &sei * (2.0 * nu * g_dot);
                let diff = &lhs - &rhs;
                let norm = (&pt.metric * &diff).dot(&diff).max(0.0).sqrt();
                let scale = 1.0 + (&pt.metric * &lhs).dot(&lhs).max(0.0).sqrt();
                out.connection = out.connection.max(norm / scale);
            }
        }

        // Second-form relation.
        let mut sff_scale: f64 = 1.0;
        let mut sff_off: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let lhs = pt_t.alpha(i, j).clone();
                let mut a_d = DVector::zeros(dim);
                for k in 0..n {
                    a_d += pt.alpha(k, j) * d[(k, i)];
                }
                let sei = s.column(i).into_owned();
                let dej = d.column(j).into_owned();
                let s_dot = (&pt.metric * &sei).dot(&dej);
                let inner = a_d + &beta * (2.0 * nu * s_dot);
                let rhs = &p * inner;
                sff_off = sff_off.max((&lhs - &rhs).norm());
                sff_scale = sff_scale.max(lhs.norm());
            }
        }
        out.second_form = out.second_form.max(sff_off / sff_scale);

        // Reflection property on the ambient basis.
        let delta = rdata.delta(u);
        let fmt = &f_val - &t_val;
        for c in 0..dim {
            let mut z = DVector::zeros(dim);
            z[c] = 1.0;
            let lhs = &p * &z - &z;
            let rhs = &fmt * delta[c];
            out.reflection = out
                .reflection
                .max((&lhs - &rhs).norm() / (1.0 + fmt.norm()));
        }

        // Envelope condition df~ = P df D.
        for i in 0..n {
            let lhs = pt_t.tangent(i);
            let rhs = &p * pt.push(&d.column(i).into_owned());
            out.envelope = out
                .envelope
                .max((&lhs - &rhs).norm() / lhs.norm().max(1.0));
        }

        // Commuting shape operators.
        for xi in &pt.normals {
            let a = pt.shape_operator(xi);
            let a_t = pt_t.shape_operator(&(&p * xi));
            let comm = &a * &a_t - &a_t * &a;
            out.shape_commute = out
                .shape_commute
                .max(comm.norm() / (1.0 + a.norm() * a_t.norm()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DarbouxVerdict {
    Darboux,
    NotDarboux(String),
}

#[derive(Clone, Debug)]
pub struct DarbouxReport {
    pub verdict: DarbouxVerdict,
    /// Max residual of `(lambda + mu) phi = <F, F>`.
    pub residual: f64,
    /// Lower eigenvalue cluster mean per sample.
    pub lambda: Vec<f64>,
    /// Upper eigenvalue cluster mean per sample.
    pub mu: Vec<f64>,
}

/// Checks the Darboux eigenvalue condition on the two clusters of `S`.
pub fn check_darboux(
    data: &CombescureData,
    rdata: &RibaucourData,
    tolerance: f64,
) -> Result<DarbouxReport> {
    let host = &data.host;
    let mut lambda = Vec::new();
    let mut mu = Vec::new();
    let mut residual: f64 = 0.0;
    let mut verdict = DarbouxVerdict::Darboux;
    for u in host.domain.grid() {
        let pt = point_geometry(host, &u)?;
        let s = data.s_matrix_at(&pt)?;
        let vals = eigenvalues_sym(&pt, &s)?;
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
        let thr = tol::EIGEN_CLUSTER_GAP * scale;
        let mut clusters: Vec<Vec<f64>> = vec![vec![vals[0]]];
        for w in vals.windows(2) {
            if w[1] - w[0] > thr {
                clusters.push(Vec::new());
            }
            clusters.last_mut().unwrap().push(w[1]);
        }
        if clusters.len() != 2 {
            verdict = DarbouxVerdict::NotDarboux(format!(
                "{} eigenvalue cluster(s) instead of two",
                clusters.len()
            ));
            lambda.push(f64::NAN);
            mu.push(f64::NAN);
            continue;
        }
        let lo = clusters[0].iter().sum::<f64>() / clusters[0].len() as f64;
        let hi = clusters[1].iter().sum::<f64>() / clusters[1].len() as f64;
        lambda.push(lo);
        mu.push(hi);
        let q = 1.0 / rdata.nu(&u)?;
        let phi = data.phi.value(&u);
        residual = residual.max(((lo + hi) * phi - q).abs() / q.abs().max(1.0));
    }
    if verdict == DarbouxVerdict::Darboux && residual > tolerance {
        verdict = DarbouxVerdict::NotDarboux(format!(
            "eigenvalue condition residual {residual:.3e} above {tolerance:.1e}"
        ));
    }
    Ok(DarbouxReport {
        verdict,
        residual,
        lambda,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{AmbientForm, Domain};
    use crate::constructions::{
        christoffel_product, christoffel_warped, circle_chart, darboux_curve_factor,
        darboux_sphere_factor, darboux_warped, frenet_frame, segment_chart, DarbouxOdeState,
    };
    use crate::jet::Jet;
    use approx::assert_abs_diff_eq;

    fn cylinder_parts() -> (ImmersionChart, ImmersionChart, DVector<f64>, f64) {
        let g1 = segment_chart(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            Domain::interval(0.0, 2.0, 6).unwrap(),
        )
        .unwrap();
        let p2 = DVector::from_vec(vec![0.3, -0.2]);
        let r2 = 0.7;
        let g2 = circle_chart([0.3, -0.2], r2, Domain::interval(0.0, 4.0, 8).unwrap()).unwrap();
        (g1, g2, p2, r2)
    }

    #[test]
    fn constant_phi_zero_beta_gives_zero_tensor() {
        let (g1, g2, _, _) = cylinder_parts();
        let (host, _) = crate::constructions::extrinsic_product(&[g1, g2], None).unwrap();
        let host = Arc::new(host);
        let data = CombescureData::new(
            host.clone(),
            ScalarField::constant(2, 3.0),
            VectorField::analytic(2, 3, |u: &[Jet]| {
                vec![Jet::constant(0.0, u[0].n()); 3]
            }),
        )
        .unwrap();
        for u in host.domain.grid() {
            assert!(data.s_matrix(&u).unwrap().amax() < 1e-12);
        }
        let t = combescure_transform(&data).unwrap();
        assert!(t.non_immersive);
    }

    #[test]
    fn scalar_tensor_data_is_trivial_and_scales_distances() {
        let (g1, g2, _, _) = cylinder_parts();
        let (host, _) = crate::constructions::extrinsic_product(&[g1, g2], None).unwrap();
        let host = Arc::new(host);
        let a = 1.4;
        let hostj = host.jet_closure().unwrap();
        let hostj2 = host.jet_closure().unwrap();
        // F = a f + v, phi = a |f|^2 / 2 + <v, f> + const.
        let v = DVector::from_vec(vec![0.2, -0.1, 0.5]);
        let vc = v.clone();
        let cal_f = VectorField::analytic(2, 3, move |u: &[Jet]| {
            let f = hostj(u);
            f.iter()
                .enumerate()
                .map(|(i, c)| &c.scale(a) + &Jet::constant(vc[i], u[0].n()))
                .collect()
        });
        let vc2 = v.clone();
        let phi = ScalarField::analytic(2, move |u: &[Jet]| {
            let f = hostj2(u);
            let mut acc = crate::jet::norm_sq(&f).scale(0.5 * a);
            for (i, c) in f.iter().enumerate() {
                acc = &acc + &c.scale(vc2[i]);
            }
            &acc + &Jet::constant(0.9, u[0].n())
        });
        let data = CombescureData::new(host.clone(), phi, cal_f).unwrap();
        assert!(data.compatibility_residual().unwrap() < 1e-9);
        let rep = check_christoffel(&data, 1e-7).unwrap();
        assert_eq!(rep.verdict, ChristoffelVerdict::Trivial);
        let t = combescure_transform(&data).unwrap();
        assert!(!t.non_immersive);
        let u1 = [0.2, 0.5];
        let u2 = [1.5, 3.0];
        let d_host = (host.value(&u1) - host.value(&u2)).norm();
        let d_tr = (t.chart.value(&u1) - t.chart.value(&u2)).norm();
        assert_abs_diff_eq!(d_tr, a * d_host, epsilon = 1e-10);

        // A single eigenvalue cluster can never satisfy the two-cluster
        // condition.
        let (tilde, rd) = ribaucour_transform(&data).unwrap();
        let darboux = check_darboux(&data, &rd, 1e-7).unwrap();
        assert!(matches!(darboux.verdict, DarbouxVerdict::NotDarboux(_)));

        // Trivial data stays Moebius-related after a Ribaucour step:
        // cross-ratios of quadruples are preserved.
        let q = [[0.1, 0.4], [0.8, 1.2], [1.4, 2.6], [1.9, 3.4]];
        let cross = |f: &dyn Fn(&[f64]) -> DVector<f64>| -> f64 {
            let p: Vec<DVector<f64>> = q.iter().map(|u| f(u)).collect();
            ((&p[0] - &p[2]).norm() * (&p[1] - &p[3]).norm())
                / ((&p[0] - &p[3]).norm() * (&p[1] - &p[2]).norm())
        };
        let host2 = host.clone();
        let c1 = cross(&move |u: &[f64]| host2.value(u));
        let c2 = cross(&move |u: &[f64]| tilde.value(u));
        assert_abs_diff_eq!(c1, c2, epsilon = 1e-9);
    }

    #[test]
    fn sphere_factor_tensor_is_the_block_projection() {
        let (g1, g2, p2, r2) = cylinder_parts();
        let (host, data) = darboux_sphere_factor(&g1, &g2, p2.clone(), r2).unwrap();
        assert!(data.compatibility_residual().unwrap() < 1e-10);
        for u in host.domain.grid() {
            let s = data.s_matrix(&u).unwrap();
            assert_abs_diff_eq!(s[(0, 0)], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(s[(1, 1)], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(s[(0, 1)].abs() + s[(1, 0)].abs(), 0.0, epsilon = 1e-10);
        }
        let field = CodazziTensorField { data: data.clone() };
        assert!(field.symmetry_residual().unwrap() < 1e-10);
        assert!(field.commuting_residual().unwrap() < 1e-10);
        assert!(field.codazzi_residual().unwrap() < 1e-8);
    }

    #[test]
    fn sphere_factor_ribaucour_reflects_the_circle() {
        let (g1, g2, p2, r2) = cylinder_parts();
        let (host, data) = darboux_sphere_factor(&g1, &g2, p2.clone(), r2).unwrap();
        let (tilde, rdata) = ribaucour_transform(&data).unwrap();
        assert!(rdata.excluded.is_empty());
        for u in host.domain.grid() {
            // f~ = g1 x (2 P2 - g2).
            let f1 = g1.value(&u[..1]);
            let f2 = g2.value(&u[1..]);
            let mut want = DVector::zeros(3);
            want[0] = f1[0];
            want[1] = 2.0 * p2[0] - f2[0];
            want[2] = 2.0 * p2[1] - f2[1];
            assert_abs_diff_eq!((tilde.value(&u) - want).norm(), 0.0, epsilon = 1e-8);
            // D = I - 2 nu phi S = diag(1, -1) here, and P is an isometry.
            let d = rdata.d_matrix(&u).unwrap();
            assert_abs_diff_eq!(d[(0, 0)], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d[(1, 1)], -1.0, epsilon = 1e-10);
            let p = rdata.p_matrix(&u).unwrap();
            assert!((p.transpose() * &p - DMatrix::identity(3, 3)).amax() < 1e-10);
            // delta = -F / phi.
            let delta = rdata.delta(&u);
            let want_delta = -(data.cal_f.value(&u)) / (r2 * r2);
            assert_abs_diff_eq!((delta - want_delta).norm(), 0.0, epsilon = 1e-12);
        }
        // D^2 = I: the transform metric equals the host metric.
        let res = verify_ribaucour_relations(&rdata, &tilde).unwrap();
        assert!(res.metric < 1e-10, "metric {}", res.metric);
        assert!(res.connection < 1e-7, "connection {}", res.connection);
        assert!(res.second_form < 1e-8, "second form {}", res.second_form);
        assert!(res.reflection < 1e-12);
        assert!(res.envelope < 1e-9);
        assert!(res.shape_commute < 1e-9);
        let darboux = check_darboux(&data, &rdata, 1e-10).unwrap();
        assert_eq!(darboux.verdict, DarbouxVerdict::Darboux);
        assert!(darboux.residual < 1e-12);
        for (lo, hi) in darboux.lambda.iter().zip(&darboux.mu) {
            assert_abs_diff_eq!(*lo, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(*hi, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn curve_factor_follows_the_closed_form_solution() {
        let alpha = circle_chart([0.0, 0.0], 1.0, Domain::interval(0.0, 1.2, 7).unwrap()).unwrap();
        let fd = frenet_frame(&alpha).unwrap();
        let g2 = segment_chart(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            Domain::interval(0.0, 1.5, 6).unwrap(),
        )
        .unwrap();
        let s2 = 2.0f64.sqrt();
        let initial = DarbouxOdeState {
            lambda: s2,
            beta: 0.0,
            v: vec![s2],
        };
        assert_abs_diff_eq!(initial.first_integral(), 0.0, epsilon = 1e-14);
        let out = darboux_curve_factor(&fd, &g2, &initial, 1e-9).unwrap();
        assert!(out.k_drift <= 1e-9);
        // Closed form with k_1 = 1: lambda = sqrt(2)(1 + t^2).
        for t in [0.0, 0.3, 0.9, 1.2] {
            let (lam, dlam, _) = out.lambda.eval(t);
            assert_abs_diff_eq!(lam, s2 * (1.0 + t * t), epsilon = 1e-8);
            assert_abs_diff_eq!(dlam, 2.0 * s2 * t, epsilon = 1e-7);
        }
        // S = (lambda o pi_1) Pi_1.
        for u in out.host.domain.grid() {
            let s = out.data.s_matrix(&u).unwrap();
            let lam = out.lambda.eval(u[0]).0;
            assert_abs_diff_eq!(s[(0, 0)], lam, epsilon = 1e-7 * (1.0 + lam));
            assert_abs_diff_eq!(s[(1, 1)], 0.0, epsilon = 1e-8);
        }
        assert!(out.data.compatibility_residual().unwrap() < 1e-7);
        let (tilde, rdata) = ribaucour_transform(&out.data).unwrap();
        let darboux = check_darboux(&out.data, &rdata, 1e-7).unwrap();
        assert_eq!(darboux.verdict, DarbouxVerdict::Darboux);
        let res = verify_ribaucour_relations(&rdata, &tilde).unwrap();
        assert!(res.metric < 1e-6);
        assert!(res.connection < 1e-6);
        assert!(res.second_form < 1e-6);
    }

    #[test]
    fn warped_construction_satisfies_the_eigenvalue_condition_exactly() {
        let g1 = circle_chart([0.0, 2.0], 1.0, Domain::interval(0.0, 4.5, 7).unwrap()).unwrap();
        let g2 = circle_chart([0.0, 0.0], 1.0, Domain::interval(0.2, 5.8, 8).unwrap()).unwrap();
        let (host, data) = darboux_warped(&g1, &g2).unwrap();
        assert!(data.compatibility_residual().unwrap() < 1e-8);
        for u in host.domain.grid() {
            // <F,F> = |g2|^2 = 1 exactly.
            assert_abs_diff_eq!(data.cal_f.value(&u).norm_squared(), 1.0, epsilon = 1e-12);
            // S = (h_m o pi_1)^{-1} Pi_2.
            let s = data.s_matrix(&u).unwrap();
            let hm = g1.value(&u[..1])[1];
            assert_abs_diff_eq!(s[(0, 0)], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(s[(1, 1)], 1.0 / hm, epsilon = 1e-8);
        }
        let (tilde, rdata) = ribaucour_transform(&data).unwrap();
        let darboux = check_darboux(&data, &rdata, 1e-10).unwrap();
        assert_eq!(darboux.verdict, DarbouxVerdict::Darboux);
        assert!(darboux.residual < 1e-10);
        // f~ stays finite wherever the warp factor is positive.
        for u in host.domain.grid() {
            assert!(tilde.value(&u).iter().all(|c| c.is_finite()));
        }
    }

    #[test]
    fn product_christoffel_data() {
        let f1 = circle_chart([0.0, 0.0], 1.0, Domain::interval(0.0, 5.0, 7).unwrap()).unwrap();
        let f2 = segment_chart(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            Domain::interval(-1.0, 1.0, 6).unwrap(),
        )
        .unwrap();
        let a = 1.0;
        let (host, data) = christoffel_product(&f1, &f2, a, None).unwrap();
        assert!(data.compatibility_residual().unwrap() < 1e-9);
        for u in host.domain.grid() {
            let s = data.s_matrix(&u).unwrap();
            assert_abs_diff_eq!(s[(0, 0)], -a, epsilon = 1e-9);
            assert_abs_diff_eq!(s[(1, 1)], a, epsilon = 1e-9);
            assert_abs_diff_eq!(s[(0, 1)].abs() + s[(1, 0)].abs(), 0.0, epsilon = 1e-9);
        }
        let rep = check_christoffel(&data, 1e-7).unwrap();
        assert_eq!(rep.verdict, ChristoffelVerdict::Christoffel);
        let t = combescure_transform(&data).unwrap();
        assert!(!t.non_immersive);
        // dF = df o S through independent finite differences.
        let fd_chart = t.chart.with_fd_jets();
        assert!(combescure_differential_residual(&data, &fd_chart).unwrap() < 1e-7);
        assert!(combescure_second_form_residual(&data, &t.chart).unwrap() < 1e-7);
        // Conformal with factor |a| = 1 and reversed orientation on block 1.
        for u in host.domain.grid() {
            let jh = host.jet(&u);
            let jt = t.chart.jet(&u);
            assert_abs_diff_eq!(jt.d(0).norm(), jh.d(0).norm(), epsilon = 1e-9);
            assert_abs_diff_eq!(jt.d(1).norm(), jh.d(1).norm(), epsilon = 1e-9);
            assert!(jt.d(0).dot(&jh.d(0)) < 0.0);
            assert!(jt.d(1).dot(&jh.d(1)) > 0.0);
        }
        // a = -1 swaps the roles of the blocks.
        let (_, data_neg) = christoffel_product(&f1, &f2, -1.0, None).unwrap();
        let s = data_neg.s_matrix(&[0.3, 0.1]).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s[(1, 1)], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn warped_christoffel_matches_the_analytic_antiderivative() {
        // gamma(t) = (e^t) in the half-line, g the unit circle in S^2.
        let gamma = ImmersionChart::analytic(
            Domain::interval(-0.5, 0.8, 7).unwrap(),
            AmbientForm::Euclidean(1),
            |u| vec![u[0].exp()],
        );
        let g = ImmersionChart::analytic(
            Domain::interval(0.0, 5.5, 8).unwrap(),
            AmbientForm::Euclidean(3),
            |u| {
                let n = u[0].n();
                vec![u[0].cos(), u[0].sin(), Jet::constant(0.0, n)]
            },
        );
        let a = 1.0;
        let out = christoffel_warped(&gamma, &g, a, None).unwrap();
        for t in [-0.5, -0.1, 0.4, 0.8] {
            let (v, d, _) = out.gamma_tilde[0].eval(t);
            assert_abs_diff_eq!(v, -(-t).exp(), epsilon = 1e-7);
            assert_abs_diff_eq!(d, (-t).exp(), epsilon = 1e-7);
        }
        assert!(out.data.compatibility_residual().unwrap() < 1e-7);
        let rep = check_christoffel(&out.data, 1e-7).unwrap();
        assert_eq!(rep.verdict, ChristoffelVerdict::Christoffel);
        let t = combescure_transform(&out.data).unwrap();
        let fd_chart = t.chart.with_fd_jets();
        assert!(combescure_differential_residual(&out.data, &fd_chart).unwrap() < 1e-7);
        assert!(combescure_second_form_residual(&out.data, &t.chart).unwrap() < 1e-6);
        // Metric of the transform is lambda^2 times the host metric.
        for u in out.host.domain.grid() {
            let jh = out.host.jet(&u);
            let jt = t.chart.jet(&u);
            let lam = (-2.0 * u[0]).exp() * a.abs();
            for i in 0..2 {
                assert_abs_diff_eq!(jt.d(i).norm(), lam * jh.d(i).norm(), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn incompatible_data_is_detected() {
        let (g1, g2, p2, r2) = cylinder_parts();
        let (host, good) = darboux_sphere_factor(&g1, &g2, p2, r2).unwrap();
        // Deform beta away from the compatible field.
        let bad_f = {
            let f = good.cal_f.clone();
            VectorField::analytic(2, 3, move |u: &[Jet]| {
                let mut out = f.jets_of(u);
                out[2] = &out[2] + &(&u[0].sin() * &u[1].cos()).scale(0.4);
                out
            })
        };
        let bad = CombescureData::new(host, good.phi.clone(), bad_f).unwrap();
        assert!(bad.compatibility_residual().unwrap() > 1e-2);
        let rep = check_christoffel(&bad, 1e-7).unwrap();
        assert_eq!(rep.verdict, ChristoffelVerdict::Neither);
    }

    #[test]
    fn integrability_of_the_transform_field() {
        // For data passing the compatibility identity, mixed finite
        // differences of F commute (the defining one-form is closed).
        let (g1, g2, p2, r2) = cylinder_parts();
        let (_, data) = darboux_sphere_factor(&g1, &g2, p2, r2).unwrap();
        let h = 1e-3;
        for u in data.host.domain.shrink(0.2).grid() {
            let f = |du: f64, dv: f64| data.cal_f.value(&[u[0] + du, u[1] + dv]);
            let mixed1 = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
            let jets = data.cal_f.jets(&u);
            let mixed2 = DVector::from_fn(3, |c, _| jets[c].h[(0, 1)]);
            assert!((mixed1 - mixed2).norm() < 1e-6);
        }
    }
}

#[cfg(test)]
mod reparametrization_tests {
    use super::*;
    use crate::chart::{AmbientForm, Domain};
    use crate::constructions::{circle_chart, darboux_sphere_factor, segment_chart};
    use crate::jet::Jet;

    /// Rotating the parameter domain conjugates every tensor out of its
    /// block-diagonal form; all structural identities must survive, which
    /// exercises the index handling much harder than the aligned cases.
    #[test]
    fn relations_survive_a_rotated_parametrization() {
        let g1 = segment_chart(
            nalgebra::DVector::from_vec(vec![0.0]),
            nalgebra::DVector::from_vec(vec![1.0]),
            Domain::interval(-2.0, 2.0, 7).unwrap(),
        )
        .unwrap();
        let p2 = nalgebra::DVector::from_vec(vec![0.3, -0.2]);
        let g2 = circle_chart([0.3, -0.2], 0.7, Domain::interval(-3.0, 3.0, 9).unwrap()).unwrap();
        let (host, data) = darboux_sphere_factor(&g1, &g2, p2, 0.7).unwrap();

        // Reparametrize by a rotation; the rotated box stays inside the
        // original domain for this size.
        let angle: f64 = 0.37;
        let (s, c) = (angle.sin(), angle.cos());
        let rotate = move |u: &[Jet]| -> Vec<Jet> {
            vec![&u[0].scale(c) - &u[1].scale(s), &u[0].scale(s) + &u[1].scale(c)]
        };
        let hostj = host.jet_closure().unwrap();
        let domain = Domain::square(-1.2, 1.2, 7).unwrap();
        let rotated = ImmersionChart::analytic(
            domain.clone(),
            AmbientForm::Euclidean(3),
            move |u: &[Jet]| hostj(&rotate(u)),
        );
        let phi0 = data.phi.clone();
        let f0 = data.cal_f.clone();
        let phi = ScalarField::analytic(2, move |u: &[Jet]| {
            phi0.jet_of(&[&u[0].scale(c) - &u[1].scale(s), &u[0].scale(s) + &u[1].scale(c)])
        });
        let cal_f = VectorField::analytic(2, 3, move |u: &[Jet]| {
            f0.jets_of(&[&u[0].scale(c) - &u[1].scale(s), &u[0].scale(s) + &u[1].scale(c)])
        });
        let data_rot = CombescureData::new(Arc::new(rotated), phi, cal_f).unwrap();

        // The tensor is genuinely non-diagonal in the new coordinates.
        let s_mat = data_rot.s_matrix(&[0.2, -0.3]).unwrap();
        assert!(s_mat[(0, 1)].abs() > 0.1, "rotation should mix the blocks");

        assert!(data_rot.compatibility_residual().unwrap() < 1e-9);
        let field = CodazziTensorField {
            data: data_rot.clone(),
        };
        assert!(field.symmetry_residual().unwrap() < 1e-9);
        assert!(field.commuting_residual().unwrap() < 1e-9);
        assert!(field.codazzi_residual().unwrap() < 1e-7);

        let (tilde, rdata) = ribaucour_transform(&data_rot).unwrap();
        let res = verify_ribaucour_relations(&rdata, &tilde).unwrap();
        assert!(res.metric < 1e-9, "metric {}", res.metric);
        assert!(res.connection < 1e-7, "connection {}", res.connection);
        assert!(res.second_form < 1e-8, "second form {}", res.second_form);
        assert!(res.reflection < 1e-12);
        assert!(res.envelope < 1e-9);
        assert!(res.shape_commute < 1e-9);
        let darboux = check_darboux(&data_rot, &rdata, 1e-10).unwrap();
        assert_eq!(darboux.verdict, DarbouxVerdict::Darboux);
    }
}
