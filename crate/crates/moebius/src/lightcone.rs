//! The light-cone model of Moebius geometry.
//!
//! A Moebius frame `(p0, w, A)` identifies `R^N` with the slice
//! `E^N_w = { p in V^{N+1} : <p,w> = 1 }` of the light cone via
//! `x -> p0 + A(x) - |x|^2/2 w`. Hyperspheres become unit spacelike vectors,
//! conformal maps become linear isometries, and conformal immersions
//! lift to isometric immersions into the cone.

use crate::chart::{AmbientForm, ImmersionChart, ProductNet};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::jet::{self, Jet};
use crate::metric::{BlockMetric, MetricBlock, PullbackMetric, WeightedPullbackMetric};
use crate::minkowski::Minkowski;
use crate::tol;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::sync::Arc;

/// The triple `(p0, w, A)` identifying `R^N` with the Euclidean slice.
#[derive(Clone, Debug)]
pub struct MoebiusFrame {
    mink: Minkowski,
    pub p0: DVector<f64>,
    pub w: DVector<f64>,
    /// Columns are the images of the Euclidean axes, orthonormal spacelike
    /// and orthogonal to both `p0` and `w`.
    a: DMatrix<f64>,
}

impl MoebiusFrame {
    pub fn new(p0: DVector<f64>, w: DVector<f64>, a: DMatrix<f64>) -> Result<Self> {
        let dim = p0.len();
        let mink = Minkowski::new(dim)?;
        if w.len() != dim || a.nrows() != dim || a.ncols() + 2 != dim {
            return Err(Error::InvalidFrame(
                "frame pieces have inconsistent dimensions".into(),
            ));
        }
        let frame = MoebiusFrame { mink, p0, w, a };
        frame.validate()?;
        Ok(frame)
    }

    fn validate(&self) -> Result<()> {
        let m = &self.mink;
        let rel = |x: &DVector<f64>| x.norm_squared().max(1.0);
        if m.inner(&self.p0, &self.p0).abs() > tol::FRAME * rel(&self.p0) {
            return Err(Error::InvalidFrame("p0 is not lightlike".into()));
        }
        if m.inner(&self.w, &self.w).abs() > tol::FRAME * rel(&self.w) {
            return Err(Error::InvalidFrame("w is not lightlike".into()));
        }
        if (m.inner(&self.p0, &self.w) - 1.0).abs() > tol::FRAME * rel(&self.p0).sqrt() {
            return Err(Error::InvalidFrame("<p0, w> must equal 1".into()));
        }
        let n = self.euclidean_dim();
        for i in 0..n {
            let ai = self.a_column(i);
            if m.inner(&ai, &self.p0).abs() > tol::FRAME || m.inner(&ai, &self.w).abs() > tol::FRAME
            {
                return Err(Error::InvalidFrame(
                    "A-columns must be orthogonal to p0 and w".into(),
                ));
            }
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                if (m.inner(&ai, &self.a_column(j)) - want).abs() > tol::FRAME {
                    return Err(Error::InvalidFrame("A-columns must be orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// The default frame: `p0 = e_{N+1} + e_{N+2}`, `w = (e_{N+1} - e_{N+2})/2`,
    /// `A` the inclusion of the first `N` axes.
    pub fn canonical(n: usize) -> Self {
        let dim = n + 2;
        let mut p0 = DVector::zeros(dim);
        p0[dim - 2] = 1.0;
        p0[dim - 1] = 1.0;
        let mut w = DVector::zeros(dim);
        w[dim - 2] = 0.5;
        w[dim - 1] = -0.5;
        let mut a = DMatrix::zeros(dim, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        MoebiusFrame::new(p0, w, a).expect("canonical frame is valid")
    }

    pub fn euclidean_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.p0.len()
    }

    pub fn minkowski(&self) -> &Minkowski {
        &self.mink
    }

    pub fn ambient(&self) -> AmbientForm {
        AmbientForm::Lorentz(self.ambient_dim())
    }

    pub fn a_column(&self, i: usize) -> DVector<f64> {
        self.a.column(i).into_owned()
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn same_frame(&self, other: &MoebiusFrame) -> bool {
        self.ambient_dim() == other.ambient_dim()
            && (&self.p0 - &other.p0).norm() < 1e-12
            && (&self.w - &other.w).norm() < 1e-12
            && (&self.a - &other.a).norm() < 1e-12
    }

    /// The isometry `Psi(x) = p0 + A(x) - |x|^2/2 w`.
    pub fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.euclidean_dim(), "embed: point dimension");
        &self.p0 + &self.a * x - &self.w * (0.5 * x.norm_squared())
    }

    pub fn embed_jet(&self, x: &[Jet]) -> Vec<Jet> {
        let n = x[0].n();
        let ax = jet::linear_map(&self.a, x);
        let q = jet::norm_sq(x).scale(0.5);
        (0..self.ambient_dim())
            .map(|r| {
                let mut j = Jet::constant(self.p0[r], n);
                j = &j + &ax[r];
                &j - &q.scale(self.w[r])
            })
            .collect()
    }

    /// Inner product of a jet vector against a constant ambient vector.
    fn inner_const(&self, x: &[Jet], v: &DVector<f64>) -> Jet {
        let n = x[0].n();
        let mut acc = Jet::constant(0.0, n);
        for (i, xi) in x.iter().enumerate() {
            let c = self.mink.sign(i) * v[i];
            if c != 0.0 {
                acc = &acc + &xi.scale(c);
            }
        }
        acc
    }

    /// Inverse of `embed` on the Euclidean slice.
    pub fn invert(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = p.norm_squared().max(1.0);
        let pw = self.mink.inner_checked(p, &self.w)?;
        if (pw - 1.0).abs() > 1e-8 * scale.sqrt() {
            return Err(Error::NotOnSlice(format!("<p,w> = {pw:.6}, expected 1")));
        }
        if self.mink.inner(p, p).abs() > 1e-8 * scale {
            return Err(Error::NotOnSlice("p is not lightlike".into()));
        }
        Ok(DVector::from_fn(self.euclidean_dim(), |i, _| {
            self.mink.inner(p, &self.a_column(i))
        }))
    }

    fn invert_jet(&self, p: &[Jet]) -> Vec<Jet> {
        (0..self.euclidean_dim())
            .map(|i| self.inner_const(p, &self.a_column(i)))
            .collect()
    }

    /// Projection `Pi(x) = x / <x,w>` onto the Euclidean slice.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.mink.inner_checked(x, &self.w)?;
        if s.abs() < tol::PROJECTION_SINGULAR * x.norm() {
            return Err(Error::ProjectionSingular(s.abs()));
        }
        Ok(x / s)
    }

    /// `Psi^{-1}(Pi(x))`: from the punctured light cone back to `R^N`.
    pub fn drop_point(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = x.norm_squared().max(1.0);
        if self.mink.inner(x, x).abs() > 1e-8 * scale {
            return Err(Error::NotOnSlice("x is not on the light cone".into()));
        }
        let p = self.project(x)?;
        Ok(DVector::from_fn(self.euclidean_dim(), |i, _| {
            self.mink.inner(&p, &self.a_column(i))
        }))
    }

    pub fn drop_jet(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        let s = self.inner_const(x, &self.w);
        let xv = jet::values(x);
        if s.v.abs() < tol::PROJECTION_SINGULAR * xv.norm() {
            return Err(Error::ProjectionSingular(s.v.abs()));
        }
        let inv = s.recip();
        let p: Vec<Jet> = x.iter().map(|c| c * &inv).collect();
        Ok(self.invert_jet(&p))
    }
}

/// Deterministic pseudo-random frame (for property tests and sweeps).
pub fn random_frame<R: Rng>(n: usize, rng: &mut R) -> MoebiusFrame {
    let dim = n + 2;
    let mink = Minkowski::new(dim).expect("dim >= 4");
    loop {
        let spatial = |rng: &mut R| {
            DVector::from_fn(dim - 1, |_, _| rng.random_range(-1.0f64..1.0))
        };
        let a = spatial(rng);
        if a.norm() < 0.3 {
            continue;
        }
        let mut w = DVector::zeros(dim);
        for i in 0..dim - 1 {
            w[i] = a[i];
        }
        w[dim - 1] = a.norm();
        w *= (rng.random_range(-0.7f64..0.7)).exp();

        let b = spatial(rng);
        if b.norm() < 0.3 {
            continue;
        }
        let mut p = DVector::zeros(dim);
        for i in 0..dim - 1 {
            p[i] = b[i];
        }
        p[dim - 1] = -b.norm();
        let s = mink.inner(&p, &w);
        if s.abs() < 0.1 {
            continue;
        }
        let p0 = &p / s;

        // Orthonormal basis of span{p0, w}: Gram [[0,1],[1,0]].
        let s1 = (&p0 + &w) / 2.0f64.sqrt();
        let t1 = (&p0 - &w) / 2.0f64.sqrt();
        let Ok(comp) = mink.orthogonal_complement(&[s1, t1]) else {
            continue;
        };
        let mut a_mat = DMatrix::zeros(dim, n);
        for (i, v) in comp.vectors.iter().enumerate() {
            a_mat.set_column(i, v);
        }
        // Mix the complement columns by a random rotation.
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0f64..1.0));
        let q = raw.qr().q();
        let a_mat = a_mat * q;
        if let Ok(frame) = MoebiusFrame::new(p0, w, a_mat) {
            return frame;
        }
    }
}

/// A hypersphere (or hyperplane) of `R^N` as a unit spacelike vector.
#[derive(Clone, Debug)]
pub struct SphereVector {
    pub v: DVector<f64>,
    pub frame: MoebiusFrame,
}

impl SphereVector {
    /// Mean curvature with respect to the chosen unit normal: `h = <v,w>`.
    pub fn mean_curvature(&self) -> f64 {
        self.frame.mink.inner(&self.v, &self.frame.w)
    }

    pub fn is_hyperplane(&self) -> bool {
        self.mean_curvature().abs() <= tol::SPHERE_UNIT
    }

    /// Signed incidence of an embedded point with the sphere.
    pub fn incidence(&self, x: &DVector<f64>) -> f64 {
        self.frame.mink.inner(&self.frame.embed(x), &self.v)
    }

    /// Center and radius for a genuine sphere (`h != 0`).
    pub fn center_radius(&self) -> Result<(DVector<f64>, f64)> {
        let h = self.mean_curvature();
        if h.abs() <= tol::SPHERE_UNIT {
            return Err(Error::DomainViolation(
                "hyperplane has no center/radius".into(),
            ));
        }
        let q = (&self.v - &self.frame.w * (0.5 / h)) / h;
        Ok((self.frame.invert(&q)?, 1.0 / h.abs()))
    }
}

/// Orientation convention: `Positive` means mean curvature `+1/r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// Sphere vector `v = h Psi(q0) + w/(2h)` for the sphere of center `q0`,
/// radius `r` and mean curvature `h = orient/r`.
pub fn sphere_from_center_radius(
    frame: &MoebiusFrame,
    q0: &DVector<f64>,
    r: f64,
    orient: Orientation,
) -> Result<SphereVector> {
    if !(r > 0.0) {
        return Err(Error::ParameterRange(format!("sphere radius {r} <= 0")));
    }
    let h = orient.sign() / r;
    let v = frame.embed(q0) * h + &frame.w * (0.5 / h);
    debug_assert!((frame.mink.inner(&v, &v) - 1.0).abs() < 1e-10);
    Ok(SphereVector {
        v,
        frame: frame.clone(),
    })
}

/// Sphere vector `v = A(n) - d w` of the hyperplane `<x,n> = d`.
pub fn hyperplane_from_normal_offset(
    frame: &MoebiusFrame,
    n: &DVector<f64>,
    d: f64,
) -> Result<SphereVector> {
    if (n.norm() - 1.0).abs() > tol::UNIT_SPACELIKE {
        return Err(Error::ParameterRange("hyperplane normal must be unit".into()));
    }
    let v = frame.a_matrix() * n - &frame.w * d;
    Ok(SphereVector {
        v,
        frame: frame.clone(),
    })
}

/// Cosine of the intersection angle of two oriented spheres: `<v1, v2>`.
pub fn intersection_angle(s1: &SphereVector, s2: &SphereVector) -> Result<f64> {
    if !s1.frame.same_frame(&s2.frame) {
        return Err(Error::InvalidFrame(
            "intersection angle needs spheres in the same frame".into(),
        ));
    }
    let c = s1.frame.mink.inner_checked(&s1.v, &s2.v)?;
    if c.abs() > 1.0 + tol::INTERSECT_SLACK {
        return Err(Error::NoIntersection(c));
    }
    Ok(c)
}

/// Descriptor of a conformal transformation in one of the model's guises.
#[derive(Clone, Debug)]
pub enum ConformalMapSpec {
    /// Inversion in the sphere of the given center and radius.
    Inversion { center: DVector<f64>, radius: f64 },
    /// `x -> ratio * Q x + shift` with `Q` orthogonal (identity if absent).
    Similarity {
        ratio: f64,
        rotation: Option<DMatrix<f64>>,
        shift: DVector<f64>,
    },
    /// The Moebius transformation induced by `T` in `O_1(N+2)`.
    Lorentz { t: DMatrix<f64> },
    Stereographic {
        b: DMatrix<f64>,
        v: DVector<f64>,
        curvature: f64,
    },
    Theta {
        c_iso: DMatrix<f64>,
        d_iso: DMatrix<f64>,
        curvature: f64,
    },
    ThetaHalfspace {
        m: usize,
        ambient: usize,
        curvature: f64,
    },
}

/// Applies a conformal map of `R^N` to a point. The stereographic and theta
/// kinds act on sphere/hyperboloid products, not on `R^N`; use their
/// dedicated evaluable maps instead.
pub fn apply_moebius(
    frame: &MoebiusFrame,
    spec: &ConformalMapSpec,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    match spec {
        ConformalMapSpec::Inversion { center, radius } => {
            let d = x - center;
            let q = d.norm_squared();
            if q < 1e-24 * (1.0 + center.norm_squared()) {
                return Err(Error::DomainViolation(
                    "inversion is singular at its center".into(),
                ));
            }
            Ok(center + d * (radius * radius / q))
        }
        ConformalMapSpec::Similarity {
            ratio,
            rotation,
            shift,
        } => {
            let rx = match rotation {
                Some(q) => q * x,
                None => x.clone(),
            };
            Ok(rx * *ratio + shift)
        }
        ConformalMapSpec::Lorentz { t } => {
            if !frame.mink.is_isometry(t, 1e-10) {
                return Err(Error::DomainViolation(
                    "matrix does not preserve the Lorentz form".into(),
                ));
            }
            frame.drop_point(&(t * frame.embed(x)))
        }
        _ => Err(Error::DomainViolation(
            "this map kind acts on model factors; use its evaluable map".into(),
        )),
    }
}

/// Similarity ratio of the frame-change decomposition: `-<w2, w1>/2`.
pub fn frame_change_ratio(frame1: &MoebiusFrame, frame2: &MoebiusFrame) -> f64 {
    -0.5 * frame1.mink.inner(&frame2.w, &frame1.w)
}

/// Decomposes `C_{frame1}(Psi_{frame2})` as inversion-after-similarity:
/// returns the unit-radius inversion and the Lorentz matrix of the
/// similarity, so that the composite equals `I` after `C(T Psi)`.
pub fn frame_change_decomposition(
    frame1: &MoebiusFrame,
    frame2: &MoebiusFrame,
) -> Result<(ConformalMapSpec, DMatrix<f64>)> {
    let m = &frame1.mink;
    let wbar_w = m.inner_checked(&frame2.w, &frame1.w)?;
    if wbar_w.abs() < 1e-12 {
        return Err(Error::DegenerateTransform(
            "frames with orthogonal null directions".into(),
        ));
    }
    let v = &frame2.w / wbar_w + &frame1.w * 0.5;
    let center = frame1.invert(&(&frame2.w / wbar_w))?;
    let n = frame1.euclidean_dim();
    let dim = frame1.ambient_dim();

    // T on the basis {w, p0, A e_i} of frame1: T(w) = R(w2), T(p0) = R(p02),
    // T(A e_i) = R(A2 e_i), where R reflects through {v}^perp. The dual
    // basis is exact: x = <x,p0> w + <x,w> p0 + sum <x,A_i> A_i.
    let eta_row = |x: &DVector<f64>| {
        let mut row = x.clone();
        row[dim - 1] = -row[dim - 1];
        row
    };
    let mut t = DMatrix::zeros(dim, dim);
    t += m.reflect(&v, &frame2.w)? * eta_row(&frame1.p0).transpose();
    t += m.reflect(&v, &frame2.p0)? * eta_row(&frame1.w).transpose();
    for i in 0..n {
        t += m.reflect(&v, &frame2.a_column(i))? * eta_row(&frame1.a_column(i)).transpose();
    }
    Ok((
        ConformalMapSpec::Inversion {
            center,
            radius: 1.0,
        },
        t,
    ))
}

fn require_analytic(chart: &ImmersionChart) -> bool {
    chart.has_analytic_jets()
}

/// Rescales a conformal chart into an isometric light-cone immersion:
/// `F = phi^{-1} (Psi o f)`.
pub fn lift_conformal(
    frame: &MoebiusFrame,
    f: &ImmersionChart,
    phi: &ScalarField,
) -> Result<ImmersionChart> {
    if f.ambient != AmbientForm::Euclidean(frame.euclidean_dim()) {
        return Err(Error::DimensionMismatch(
            "lift expects a Euclidean chart matching the frame".into(),
        ));
    }
    for u in f.domain.grid() {
        let p = phi.value(&u);
        if p.abs() < 1e-12 {
            return Err(Error::VanishingFactor(u, p));
        }
    }
    // Both the chart and the factor depend on u, so build the map directly.
    let domain = f.domain.clone();
    let ambient = frame.ambient();
    let base = f.base_metric.clone();
    let net = f.net.clone();
    let mut chart = if require_analytic(f) && phi.has_analytic_jets() {
        let f2 = f.clone();
        let phi2 = phi.clone();
        let fr2 = frame.clone();
        ImmersionChart::analytic(domain, ambient, move |u: &[Jet]| {
            let x = f2.jet_closure().expect("analytic chart")(u);
            let lifted = fr2.embed_jet(&x);
            let inv = phi2.jet_of(u).recip();
            lifted.iter().map(|c| c * &inv).collect()
        })
    } else {
        let f2 = f.clone();
        let phi2 = phi.clone();
        let fr2 = frame.clone();
        ImmersionChart::sampled(domain, ambient, move |u: &[f64]| {
            fr2.embed(&f2.value(u)) / phi2.value(u)
        })
    };
    chart.base_metric = base;
    chart.net = net;
    Ok(chart)
}

/// Projects an isometric light-cone chart back to `R^N`, returning the chart
/// and its conformal factor `<F,w>^{-1}`.
pub fn drop_to_euclidean(
    frame: &MoebiusFrame,
    big_f: &ImmersionChart,
) -> Result<(ImmersionChart, ScalarField)> {
    if big_f.ambient != frame.ambient() {
        return Err(Error::DimensionMismatch(
            "drop expects a Lorentz chart matching the frame".into(),
        ));
    }
    let mut min_s = f64::INFINITY;
    for u in big_f.domain.grid() {
        let x = big_f.value(&u);
        let s = frame.minkowski().inner(&x, &frame.w);
        if s < tol::PROJECTION_SINGULAR * x.norm() {
            return Err(Error::ProjectionSingular(s));
        }
        min_s = min_s.min(s);
    }
    let domain = big_f.domain.clone();
    let ambient = AmbientForm::Euclidean(frame.euclidean_dim());
    let base = big_f.base_metric.clone();
    let net = big_f.net.clone();
    let n = domain.dim();

    let (mut chart, factor) = if require_analytic(big_f) {
        let f2 = big_f.clone();
        let fr2 = frame.clone();
        let chart = ImmersionChart::analytic(domain, ambient, move |u: &[Jet]| {
            let x = f2.jet_closure().expect("analytic chart")(u);
            fr2.drop_jet(&x).expect("grid-checked drop")
        });
        let f3 = big_f.clone();
        let fr3 = frame.clone();
        let factor = ScalarField::analytic(n, move |u: &[Jet]| {
            let x = f3.jet_closure().expect("analytic chart")(u);
            fr3.inner_const(&x, &fr3.w).recip()
        });
        (chart, factor)
    } else {
        let f2 = big_f.clone();
        let fr2 = frame.clone();
        let chart = ImmersionChart::sampled(domain, ambient, move |u: &[f64]| {
            fr2.drop_point(&f2.value(u)).expect("grid-checked drop")
        });
        let f3 = big_f.clone();
        let fr3 = frame.clone();
        let steps = big_f.fd_steps();
        let factor = ScalarField::sampled(
            n,
            move |u: &[f64]| 1.0 / fr3.minkowski().inner(&f3.value(u), &fr3.w),
            steps,
        );
        (chart, factor)
    };
    chart.base_metric = base;
    chart.net = net;
    Ok((chart, factor))
}

/// The conformal diffeomorphism `Theta = C(L_{C,D})` from
/// `H^m(-c) x S^{N-m}(c)` onto the complement of an `(m-1)`-sphere.
#[derive(Clone)]
pub struct ThetaMap {
    pub frame: MoebiusFrame,
    pub c_iso: DMatrix<f64>,
    pub d_iso: DMatrix<f64>,
    pub curvature: f64,
}

impl ThetaMap {
    pub fn new(
        frame: MoebiusFrame,
        c_iso: DMatrix<f64>,
        d_iso: DMatrix<f64>,
        curvature: f64,
    ) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(Error::ParameterRange("theta needs curvature > 0".into()));
        }
        let dim = frame.ambient_dim();
        let n = frame.euclidean_dim();
        let m = c_iso.ncols().wrapping_sub(1);
        if c_iso.nrows() != dim || d_iso.nrows() != dim || m < 1 || m > n - 1 {
            return Err(Error::DimensionMismatch(
                "theta isometry shapes are inconsistent".into(),
            ));
        }
        if c_iso.ncols() + d_iso.ncols() != dim {
            return Err(Error::DimensionMismatch(
                "theta decomposition must fill the ambient space".into(),
            ));
        }
        let mk = frame.minkowski();
        // C is an isometry of L^{m+1} (last column timelike) onto V.
        for i in 0..c_iso.ncols() {
            for j in 0..c_iso.ncols() {
                let want = if i != j {
                    0.0
                } else if i + 1 == c_iso.ncols() {
                    -1.0
                } else {
                    1.0
                };
                let got = mk.inner(&c_iso.column(i).into_owned(), &c_iso.column(j).into_owned());
                if (got - want).abs() > 1e-10 {
                    return Err(Error::DomainViolation(
                        "C must be a Lorentz isometry onto a timelike subspace".into(),
                    ));
                }
            }
        }
        for i in 0..d_iso.ncols() {
            for j in 0..d_iso.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = mk.inner(&d_iso.column(i).into_owned(), &d_iso.column(j).into_owned());
                if (got - want).abs() > 1e-10 {
                    return Err(Error::DomainViolation(
                        "D must be a Euclidean isometry onto a spacelike subspace".into(),
                    ));
                }
            }
        }
        for i in 0..c_iso.ncols() {
            for j in 0..d_iso.ncols() {
                if mk
                    .inner(&c_iso.column(i).into_owned(), &d_iso.column(j).into_owned())
                    .abs()
                    > 1e-10
                {
                    return Err(Error::DomainViolation(
                        "theta decomposition must be orthogonal".into(),
                    ));
                }
            }
        }
        Ok(ThetaMap {
            frame,
            c_iso,
            d_iso,
            curvature,
        })
    }

    /// `V = span{e_1..e_m, e_{N+2}}`, `W = span{e_{m+1}..e_{N+1}}`.
    pub fn canonical(frame: MoebiusFrame, m: usize, curvature: f64) -> Result<Self> {
        let dim = frame.ambient_dim();
        let mut c_iso = DMatrix::zeros(dim, m + 1);
        for i in 0..m {
            c_iso[(i, i)] = 1.0;
        }
        c_iso[(dim - 1, m)] = 1.0;
        let mut d_iso = DMatrix::zeros(dim, dim - m - 1);
        for i in 0..dim - m - 1 {
            d_iso[(m + i, i)] = 1.0;
        }
        ThetaMap::new(frame, c_iso, d_iso, curvature)
    }

    pub fn hyperbolic_dim(&self) -> usize {
        self.c_iso.ncols() - 1
    }

    /// `L_{C,D}(X,Y) = C(X) + D(Y)`, a point of the light cone.
    pub fn lift(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.c_iso * x + &self.d_iso * y
    }

    fn validate_inputs(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        let mh = Minkowski::new((self.hyperbolic_dim() + 1).max(4));
        let qx = match mh {
            Ok(m) if x.len() == m.dim() => m.inner(x, x),
            _ => {
                // Low-dimensional hyperbolic factor: form up by hand.
                let mut acc = 0.0;
                for i in 0..x.len() - 1 {
                    acc += x[i] * x[i];
                }
                acc - x[x.len() - 1] * x[x.len() - 1]
            }
        };
        let c = self.curvature;
        if (qx + 1.0 / c).abs() > 1e-8 * (1.0 + x.norm_squared()) {
            return Err(Error::DomainViolation(format!(
                "X is not on the hyperboloid of curvature -{c}"
            )));
        }
        if (y.norm_squared() - 1.0 / c).abs() > 1e-8 * (1.0 + y.norm_squared()) {
            return Err(Error::DomainViolation(format!(
                "Y is not on the sphere of curvature {c}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.validate_inputs(x, y)?;
        self.frame.drop_point(&self.lift(x, y))
    }

    /// Composes with factor charts into a chart of `R^N`. The base metric is
    /// the product of the factor pullbacks (hyperbolic metric on the first).
    pub fn chart(
        &self,
        hyperbolic: &ImmersionChart,
        spherical: &ImmersionChart,
    ) -> Result<ImmersionChart> {
        let m = self.hyperbolic_dim();
        if hyperbolic.ambient != AmbientForm::Lorentz(m + 1) {
            return Err(Error::DimensionMismatch(
                "hyperbolic factor must live in L^{m+1}".into(),
            ));
        }
        if spherical.ambient.dim() != self.d_iso.ncols() || spherical.ambient.is_lorentz() {
            return Err(Error::DimensionMismatch(
                "spherical factor must live in R^{N-m+1}".into(),
            ));
        }
        let n1 = hyperbolic.domain.dim();
        let domain = hyperbolic.domain.concat(&spherical.domain);
        // Reject charts that approach the omitted sphere.
        for u in domain.grid() {
            let x = hyperbolic.value(&u[..n1]);
            let y = spherical.value(&u[n1..]);
            self.validate_inputs(&x, &y)?;
            let l = self.lift(&x, &y);
            let s = self.frame.minkowski().inner(&l, &self.frame.w);
            if s.abs() < 1e-6 * l.norm().max(1.0) {
                return Err(Error::DomainViolation(
                    "chart approaches the omitted sphere; shrink the domain".into(),
                ));
            }
        }
        let ambient = AmbientForm::Euclidean(self.frame.euclidean_dim());
        // A zero-dimensional factor enters the analytic path as constants.
        let sph_const = (spherical.domain.dim() == 0).then(|| spherical.value(&[]));
        let mut chart = match (hyperbolic.jet_closure(), spherical.jet_closure()) {
            (Some(hj), sj) if sj.is_some() || sph_const.is_some() => {
                let this = self.clone();
                ImmersionChart::analytic(domain, ambient, move |u: &[Jet]| {
                    let x = hj(&u[..n1]);
                    let y = match (&sj, &sph_const) {
                        (Some(sj), _) => sj(&u[n1..]),
                        (None, Some(v)) => jet::constants(v, u[0].n()),
                        _ => unreachable!(),
                    };
                    let cx = jet::linear_map(&this.c_iso, &x);
                    let dy = jet::linear_map(&this.d_iso, &y);
                    this.frame
                        .drop_jet(&jet::add_vec(&cx, &dy))
                        .expect("grid-checked drop")
                })
            }
            _ => {
                let this = self.clone();
                let hv = hyperbolic.clone();
                let sv = spherical.clone();
                ImmersionChart::sampled(domain, ambient, move |u: &[f64]| {
                    let l = this.lift(&hv.value(&u[..n1]), &sv.value(&u[n1..]));
                    this.frame.drop_point(&l).expect("grid-checked drop")
                })
            }
        };
        let mut blocks = vec![MetricBlock {
            coords: (0..n1).collect(),
            inner: Arc::new(PullbackMetric {
                chart: Arc::new(hyperbolic.clone()),
            }),
            scale: None,
        }];
        if spherical.domain.dim() > 0 {
            blocks.push(MetricBlock {
                coords: (n1..chart.domain.dim()).collect(),
                inner: Arc::new(PullbackMetric {
                    chart: Arc::new(spherical.clone()),
                }),
                scale: None,
            });
        }
        chart.base_metric = Arc::new(BlockMetric::new(chart.domain.dim(), blocks)?);
        if n1 > 0 && spherical.domain.dim() > 0 {
            chart.net = Some(ProductNet::split(&[n1, spherical.domain.dim()])?);
        }
        Ok(chart)
    }
}

/// The half-space variant: `(X, Y) -> (x_1, ..., x_{m-1}, sigma(X) Y)` with
/// `sigma(X) = sqrt(c) x_m`, conformal with factor `sigma o pi_0` from the
/// product `H^m(-c) x S^{N-m}(c)` (half-space model on the first factor).
#[derive(Clone, Copy, Debug)]
pub struct ThetaHalfspace {
    pub m: usize,
    pub ambient: usize,
    pub curvature: f64,
}

impl ThetaHalfspace {
    pub fn new(m: usize, ambient: usize, curvature: f64) -> Result<Self> {
        if m < 1 || m > ambient - 1 {
            return Err(Error::ParameterRange(format!(
                "theta halfspace needs 1 <= m <= N-1, got m={m}, N={ambient}"
            )));
        }
        if !(curvature > 0.0) {
            return Err(Error::ParameterRange("curvature must be positive".into()));
        }
        Ok(ThetaHalfspace {
            m,
            ambient,
            curvature,
        })
    }

    pub fn sigma(&self, x: &DVector<f64>) -> f64 {
        self.curvature.sqrt() * x[self.m - 1]
    }

    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.m || y.len() != self.ambient - self.m + 1 {
            return Err(Error::DimensionMismatch(
                "theta halfspace factor dimensions".into(),
            ));
        }
        if x[self.m - 1] <= 0.0 {
            return Err(Error::DomainViolation("x_m must be positive".into()));
        }
        let c = self.curvature;
        if (y.norm_squared() - 1.0 / c).abs() > 1e-8 * (1.0 + y.norm_squared()) {
            return Err(Error::DomainViolation(
                "Y must lie on the sphere of curvature c".into(),
            ));
        }
        let s = self.sigma(x);
        let mut out = DVector::zeros(self.ambient);
        for i in 0..self.m - 1 {
            out[i] = x[i];
        }
        for j in 0..y.len() {
            out[self.m - 1 + j] = s * y[j];
        }
        Ok(out)
    }

    /// Chart composition plus the conformal factor field `sigma o pi_0`.
    pub fn chart_with_factor(
        &self,
        half: &ImmersionChart,
        spherical: &ImmersionChart,
    ) -> Result<(ImmersionChart, ScalarField)> {
        if half.ambient != AmbientForm::Euclidean(self.m) {
            return Err(Error::DimensionMismatch(
                "half-space factor must map into R^m".into(),
            ));
        }
        if spherical.ambient != AmbientForm::Euclidean(self.ambient - self.m + 1) {
            return Err(Error::DimensionMismatch(
                "spherical factor must map into R^{N-m+1}".into(),
            ));
        }
        let n1 = half.domain.dim();
        let domain = half.domain.concat(&spherical.domain);
        for u in domain.grid() {
            self.apply(&half.value(&u[..n1]), &spherical.value(&u[n1..]))?;
        }
        let m = self.m;
        let c_sqrt = self.curvature.sqrt();
        let ambient = AmbientForm::Euclidean(self.ambient);
        let total = domain.dim();
        let (mut chart, factor) = match (half.jet_closure(), spherical.jet_closure()) {
            (Some(hj), Some(sj)) => {
                let hj2 = hj.clone();
                let amb = self.ambient;
                let chart = ImmersionChart::analytic(domain, ambient, move |u: &[Jet]| {
                    let x = hj(&u[..n1]);
                    let y = sj(&u[n1..]);
                    let s = x[m - 1].scale(c_sqrt);
                    let mut out = Vec::with_capacity(amb);
                    out.extend_from_slice(&x[..m - 1]);
                    for yc in &y {
                        out.push(&s * yc);
                    }
                    out
                });
                let factor = ScalarField::analytic(total, move |u: &[Jet]| {
                    hj2(&u[..n1])[m - 1].scale(c_sqrt)
                });
                (chart, factor)
            }
            _ => {
                let this = *self;
                let hv = half.clone();
                let sv = spherical.clone();
                let chart = ImmersionChart::sampled(domain, ambient, move |u: &[f64]| {
                    this.apply(&hv.value(&u[..n1]), &sv.value(&u[n1..]))
                        .expect("grid-checked")
                });
                let hv2 = half.clone();
                let steps = vec![1e-4; total];
                let factor = ScalarField::sampled(
                    total,
                    move |u: &[f64]| c_sqrt * hv2.value(&u[..n1])[m - 1],
                    steps,
                );
                (chart, factor)
            }
        };
        // Base metric: hyperbolic half-space metric on the first factor,
        // round pullback on the second.
        let weight_axis = self.m - 1;
        let csq = self.curvature.sqrt();
        let blocks = vec![
            MetricBlock {
                coords: (0..n1).collect(),
                inner: Arc::new(WeightedPullbackMetric {
                    chart: Arc::new(half.clone()),
                    weight: Arc::new(move |x: &[Jet]| x[weight_axis].scale(csq).recip()),
                }),
                scale: None,
            },
            MetricBlock {
                coords: (n1..total).collect(),
                inner: Arc::new(PullbackMetric {
                    chart: Arc::new(spherical.clone()),
                }),
                scale: None,
            },
        ];
        chart.base_metric = Arc::new(BlockMetric::new(total, blocks)?);
        if n1 > 0 && total > n1 {
            chart.net = Some(ProductNet::split(&[n1, total - n1])?);
        }
        Ok((chart, factor))
    }
}

/// Stereographic projection as the drop of `T_{B,v}(X) = B(X) + v`.
#[derive(Clone)]
pub struct StereographicMap {
    pub frame: MoebiusFrame,
    pub b_iso: DMatrix<f64>,
    pub v: DVector<f64>,
    pub curvature: f64,
}

impl StereographicMap {
    pub fn new(
        frame: MoebiusFrame,
        b_iso: DMatrix<f64>,
        v: DVector<f64>,
        curvature: f64,
    ) -> Result<Self> {
        let dim = frame.ambient_dim();
        let n = frame.euclidean_dim();
        if b_iso.nrows() != dim || b_iso.ncols() != n + 1 || v.len() != dim {
            return Err(Error::DimensionMismatch(
                "stereographic map shapes are inconsistent".into(),
            ));
        }
        let mk = frame.minkowski();
        if (mk.inner(&v, &v) + 1.0 / curvature).abs() > 1e-10 {
            return Err(Error::DomainViolation(
                "v must be timelike with <v,v> = -1/c".into(),
            ));
        }
        for i in 0..=n {
            let bi = b_iso.column(i).into_owned();
            if mk.inner(&bi, &v).abs() > 1e-10 {
                return Err(Error::DomainViolation("B must map into {v}^perp".into()));
            }
            for j in 0..=n {
                let want = if i == j { 1.0 } else { 0.0 };
                if (mk.inner(&bi, &b_iso.column(j).into_owned()) - want).abs() > 1e-10 {
                    return Err(Error::DomainViolation("B must be an isometry".into()));
                }
            }
        }
        Ok(StereographicMap {
            frame,
            b_iso,
            v,
            curvature,
        })
    }

    /// The aligned triple of the canonical frame for `c = 1`, for which the
    /// drop is a classical stereographic projection.
    pub fn classical(n: usize) -> Self {
        Self::classical_scaled(n, 1.0)
    }

    /// Aligned triple rescaled to curvature `c`: `v/sqrt(c)` with the same `B`.
    pub fn classical_scaled(n: usize, curvature: f64) -> Self {
        let frame = MoebiusFrame::canonical(n);
        let dim = n + 2;
        let mut v = DVector::zeros(dim);
        v[dim - 2] = -0.75;
        v[dim - 1] = -1.25;
        let mut u = DVector::zeros(dim);
        u[dim - 2] = 1.25;
        u[dim - 1] = 0.75;
        let mut b = DMatrix::zeros(dim, n + 1);
        for i in 0..n {
            b[(i, i)] = 1.0;
        }
        b.set_column(n, &u);
        let v = v / curvature.sqrt();
        StereographicMap::new(frame, b, v, curvature).expect("aligned triple is valid")
    }

    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b_iso * x + &self.v
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.curvature;
        if (x.norm_squared() - 1.0 / c).abs() > 1e-8 * (1.0 + x.norm_squared()) {
            return Err(Error::DomainViolation(
                "stereographic input must lie on the sphere of curvature c".into(),
            ));
        }
        self.frame.drop_point(&self.lift(x))
    }

    /// Composes with a sphere-valued chart.
    pub fn chart(&self, spherical: &ImmersionChart) -> Result<ImmersionChart> {
        if spherical.ambient != AmbientForm::Euclidean(self.frame.euclidean_dim() + 1) {
            return Err(Error::DimensionMismatch(
                "stereographic factor must live in R^{N+1}".into(),
            ));
        }
        for u in spherical.domain.grid() {
            let l = self.lift(&spherical.value(&u));
            let s = self.frame.minkowski().inner(&l, &self.frame.w);
            if s.abs() < 1e-6 * l.norm().max(1.0) {
                return Err(Error::DomainViolation(
                    "chart passes through the projection pole".into(),
                ));
            }
        }
        let ambient = AmbientForm::Euclidean(self.frame.euclidean_dim());
        let mut chart = match spherical.jet_closure() {
            Some(sj) => {
                let this = self.clone();
                ImmersionChart::analytic(spherical.domain.clone(), ambient, move |u: &[Jet]| {
                    let x = sj(u);
                    let bx = jet::linear_map(&this.b_iso, &x);
                    let n = u[0].n();
                    let lifted: Vec<Jet> = bx
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c + &Jet::constant(this.v[i], n))
                        .collect();
                    this.frame.drop_jet(&lifted).expect("grid-checked drop")
                })
            }
            None => {
                let this = self.clone();
                let sv = spherical.clone();
                ImmersionChart::sampled(spherical.domain.clone(), ambient, move |u: &[f64]| {
                    this.frame
                        .drop_point(&this.lift(&sv.value(u)))
                        .expect("grid-checked drop")
                })
            }
        };
        chart.base_metric = spherical.base_metric.clone();
        chart.net = spherical.net.clone();
        Ok(chart)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Domain;
    use crate::geometry;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame3() -> MoebiusFrame {
        MoebiusFrame::canonical(3)
    }

    #[test]
    fn embed_origin_is_p0() {
        let fr = frame3();
        let x = DVector::zeros(3);
        assert_abs_diff_eq!((fr.embed(&x) - &fr.p0).norm(), 0.0);
    }

    #[test]
    fn embed_is_null_and_normalized() {
        let fr = frame3();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = fr.embed(&x);
        assert_abs_diff_eq!(fr.minkowski().inner(&p, &p), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fr.minkowski().inner(&p, &fr.w), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn embed_encodes_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 5] {
            let fr = random_frame(n, &mut rng);
            for _ in 0..50 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0f64..2.0));
                let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0f64..2.0));
                let got = fr.minkowski().inner(&fr.embed(&x), &fr.embed(&y));
                let want = -0.5 * (&x - &y).norm_squared();
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn invert_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fr = random_frame(3, &mut rng);
        assert_abs_diff_eq!(fr.invert(&fr.p0).unwrap().norm(), 0.0, epsilon = 1e-12);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0f64..2.0));
            let back = fr.invert(&fr.embed(&x)).unwrap();
            assert_abs_diff_eq!((back - &x).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn invert_rejects_the_w_ray() {
        let fr = frame3();
        assert!(matches!(fr.invert(&fr.w), Err(Error::NotOnSlice(_))));
    }

    #[test]
    fn projection_fixes_slice_and_rays() {
        let fr = frame3();
        let x = DVector::from_vec(vec![0.3, -0.4, 1.1]);
        let p = fr.embed(&x);
        assert_abs_diff_eq!((fr.project(&p).unwrap() - &p).norm(), 0.0, epsilon = 1e-14);
        let two_p0 = &fr.p0 * 2.0;
        assert_abs_diff_eq!((fr.project(&two_p0).unwrap() - &fr.p0).norm(), 0.0);
        assert!(matches!(
            fr.project(&fr.w),
            Err(Error::ProjectionSingular(_))
        ));
    }

    #[test]
    fn unit_sphere_vector_at_origin() {
        let fr = frame3();
        let s = sphere_from_center_radius(&fr, &DVector::zeros(3), 1.0, Orientation::Positive)
            .unwrap();
        let want = &fr.p0 + &fr.w * 0.5;
        assert_abs_diff_eq!((s.v.clone() - want).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fr.minkowski().inner(&s.v, &s.v), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sphere_vector_annihilates_its_points() {
        let fr = frame3();
        let q0 = DVector::from_vec(vec![0.4, -1.2, 0.7]);
        let r = 1.7;
        let s = sphere_from_center_radius(&fr, &q0, r, Orientation::Positive).unwrap();
        for k in 0..32 {
            let t = k as f64 * 0.3;
            let dir = DVector::from_vec(vec![t.sin() * t.cos(), t.sin() * t.sin(), t.cos()]);
            let x = &q0 + dir.normalize() * r;
            assert_abs_diff_eq!(s.incidence(&x), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.mean_curvature(), 1.0 / r, epsilon = 1e-12);
        let s_neg =
            sphere_from_center_radius(&fr, &q0, r, Orientation::Negative).unwrap();
        assert_abs_diff_eq!(s_neg.mean_curvature(), -1.0 / r, epsilon = 1e-12);
        let (center, radius) = s.center_radius().unwrap();
        assert_abs_diff_eq!((center - &q0).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(radius, r, epsilon = 1e-12);
    }

    #[test]
    fn hyperplane_vector() {
        let fr = frame3();
        let n = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let h = hyperplane_from_normal_offset(&fr, &n, 0.0).unwrap();
        assert_abs_diff_eq!((h.v.clone() - fr.a_column(0)).norm(), 0.0);
        assert!(h.is_hyperplane());
        let h2 = hyperplane_from_normal_offset(&fr, &n, 0.8).unwrap();
        assert_abs_diff_eq!(fr.minkowski().inner(&h2.v, &h2.v), 1.0, epsilon = 1e-14);
        for y in [-1.0, 0.3, 2.0] {
            let x = DVector::from_vec(vec![0.8, y, -y]);
            assert_abs_diff_eq!(h2.incidence(&x), 0.0, epsilon = 1e-12);
        }
        let off = DVector::from_vec(vec![1.1, 0.0, 0.0]);
        assert!(h2.incidence(&off).abs() > 0.1);
    }

    #[test]
    fn intersection_angles() {
        let fr = frame3();
        let origin = DVector::zeros(3);
        let shifted = DVector::from_vec(vec![2.0f64.sqrt(), 0.0, 0.0]);
        let s1 = sphere_from_center_radius(&fr, &origin, 1.0, Orientation::Positive).unwrap();
        let s2 = sphere_from_center_radius(&fr, &shifted, 1.0, Orientation::Positive).unwrap();
        assert_abs_diff_eq!(intersection_angle(&s1, &s2).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(intersection_angle(&s1, &s1).unwrap(), 1.0, epsilon = 1e-12);
        let s3 = sphere_from_center_radius(&fr, &origin, 3.0, Orientation::Positive).unwrap();
        match intersection_angle(&s1, &s3) {
            Err(Error::NoIntersection(c)) => assert_abs_diff_eq!(c, 5.0 / 3.0, epsilon = 1e-12),
            other => panic!("expected NoIntersection, got {other:?}"),
        }
    }

    fn plane_chart(scale: f64) -> ImmersionChart {
        ImmersionChart::analytic(
            Domain::square(-1.0, 1.0, 5).unwrap(),
            AmbientForm::Euclidean(3),
            move |u| {
                vec![
                    u[0].scale(scale),
                    u[1].scale(scale),
                    Jet::constant(0.0, u[0].n()),
                ]
            },
        )
    }

    #[test]
    fn lift_of_isometric_chart_keeps_the_metric() {
        let fr = frame3();
        let f = plane_chart(1.0);
        let lifted = lift_conformal(&fr, &f, &ScalarField::constant(2, 1.0)).unwrap();
        let rep = geometry::conformality_check(&lifted).unwrap();
        assert!(rep.residual < 1e-12);
        for u in lifted.domain.grid() {
            let v = lifted.value(&u);
            assert_abs_diff_eq!(fr.minkowski().inner(&v, &v), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lift_of_scaled_chart_is_isometric() {
        let fr = frame3();
        let f = plane_chart(2.0);
        let lifted = lift_conformal(&fr, &f, &ScalarField::constant(2, 2.0)).unwrap();
        // Base metric of the chart is flat; the lift must realize it.
        let g = geometry::first_fundamental_form(&lifted, &[0.3, -0.4]).unwrap();
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g[(1, 1)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g[(0, 1)], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn lift_rejects_vanishing_factor() {
        let fr = frame3();
        let f = plane_chart(1.0);
        let phi = ScalarField::analytic(2, |u: &[Jet]| u[0].clone());
        assert!(matches!(
            lift_conformal(&fr, &f, &phi),
            Err(Error::VanishingFactor(_, _))
        ));
    }

    #[test]
    fn drop_inverts_lift() {
        let fr = frame3();
        let f = plane_chart(2.0);
        let phi = ScalarField::constant(2, 2.0);
        let lifted = lift_conformal(&fr, &f, &phi).unwrap();
        let (dropped, factor) = drop_to_euclidean(&fr, &lifted).unwrap();
        for u in f.domain.grid() {
            assert_abs_diff_eq!((dropped.value(&u) - f.value(&u)).norm(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(factor.value(&u), 2.0, epsilon = 1e-9);
        }
        // And the other way round: lift the dropped chart again.
        let relift = lift_conformal(&fr, &dropped, &factor).unwrap();
        for u in f.domain.grid() {
            assert_abs_diff_eq!(
                (relift.value(&u) - lifted.value(&u)).norm(),
                0.0,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn theta_canonical_is_conformal_onto_finite_values() {
        let fr = frame3();
        let theta = ThetaMap::canonical(fr, 1, 1.0).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]); // hyperbolic base point
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let v = theta.apply(&x, &y).unwrap();
        assert!(v.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn theta_blows_up_near_the_omitted_sphere() {
        let fr = frame3();
        let theta = ThetaMap::canonical(fr, 1, 1.0).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let mut last = 0.0;
        for eps in [1e-1, 1e-2, 1e-3] {
            let y = DVector::from_vec(vec![(eps as f64).sin(), 0.0, -(eps as f64).cos()]);
            let v = theta.apply(&x, &y).unwrap();
            assert!(v.norm() > last);
            last = v.norm();
        }
        assert!(last > 1e2);
        let y_exact = DVector::from_vec(vec![0.0, 0.0, -1.0]);
        assert!(theta.apply(&x, &y_exact).is_err());
    }

    #[test]
    fn theta_halfspace_slice_and_factor() {
        let th = ThetaHalfspace::new(1, 2, 1.0).unwrap();
        for t in [0.0f64, 1.0, 2.5] {
            let x = DVector::from_vec(vec![1.0]);
            let y = DVector::from_vec(vec![t.cos(), t.sin()]);
            let v = th.apply(&x, &y).unwrap();
            assert_abs_diff_eq!(v[0], t.cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], t.sin(), epsilon = 1e-14);
        }
        let x2 = DVector::from_vec(vec![0.0, 2.0]);
        let th2 = ThetaHalfspace::new(2, 3, 1.0).unwrap();
        assert_abs_diff_eq!(th2.sigma(&x2), 2.0, epsilon = 1e-14);
        let bad = DVector::from_vec(vec![0.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        assert!(th2.apply(&bad, &y).is_err());
    }

    #[test]
    fn theta_halfspace_chart_is_conformal_with_sigma_factor() {
        let th = ThetaHalfspace::new(2, 3, 1.0).unwrap();
        let half = ImmersionChart::analytic(
            Domain::new(vec![-0.5, 0.5], vec![0.5, 2.0], vec![5, 5]).unwrap(),
            AmbientForm::Euclidean(2),
            |u| vec![u[0].clone(), u[1].clone()],
        );
        let circle = ImmersionChart::analytic(
            Domain::interval(0.0, 6.0, 7).unwrap(),
            AmbientForm::Euclidean(2),
            |u| vec![u[0].cos(), u[0].sin()],
        );
        let (chart, factor) = th.chart_with_factor(&half, &circle).unwrap();
        let rep = geometry::conformality_check(&chart).unwrap();
        assert!(rep.residual < 1e-10, "residual {}", rep.residual);
        for (u, phi) in chart.domain.grid().iter().zip(&rep.factors) {
            assert_abs_diff_eq!(factor.value(u), *phi, epsilon = 1e-10);
            assert_abs_diff_eq!(factor.value(u), u[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn classical_stereographic_projection() {
        let st = StereographicMap::classical(3);
        for (a, b) in [(0.3, 1.2), (1.0, 2.0), (-0.7, 0.4)] {
            let x = DVector::from_vec(vec![
                (a as f64).sin() * (b as f64).cos(),
                (a as f64).sin() * (b as f64).sin(),
                (a as f64).cos() * (b as f64).sin(),
                (a as f64).cos() * (b as f64).cos(),
            ]);
            let got = st.apply(&x).unwrap();
            let want = DVector::from_vec(vec![x[0], x[1], x[2]]) / (x[3] - 1.0);
            assert_abs_diff_eq!((got - want).norm(), 0.0, epsilon = 1e-12);
        }
        // Antipode of the pole stays bounded, the pole itself is singular.
        let antipode = DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0]);
        let v = st.apply(&antipode).unwrap();
        assert!(v.norm() < 1.0);
        let pole = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        assert!(st.apply(&pole).is_err());
    }

    #[test]
    fn moebius_identity_and_inversion() {
        let fr = frame3();
        let t = DMatrix::identity(5, 5);
        let x = DVector::from_vec(vec![0.7, -0.3, 1.4]);
        let got = apply_moebius(&fr, &ConformalMapSpec::Lorentz { t }, &x).unwrap();
        assert_abs_diff_eq!((got - &x).norm(), 0.0, epsilon = 1e-12);

        // Reflection in the unit-sphere vector is the inversion x -> x/|x|^2.
        let v = &fr.p0 + &fr.w * 0.5;
        let mink = fr.minkowski().clone();
        let reflect = DMatrix::identity(5, 5)
            - {
                let mut outer = DMatrix::zeros(5, 5);
                for i in 0..5 {
                    for j in 0..5 {
                        outer[(i, j)] = 2.0 * v[i] * v[j] * mink.sign(j);
                    }
                }
                outer
            };
        assert!(mink.is_isometry(&reflect, 1e-12));
        for seed in [[0.5, 0.2, -0.4], [1.5, 0.0, 0.3], [-0.2, 2.0, 0.9]] {
            let x = DVector::from_vec(seed.to_vec());
            let got = apply_moebius(&fr, &ConformalMapSpec::Lorentz { t: reflect.clone() }, &x)
                .unwrap();
            let want = &x / x.norm_squared();
            assert_abs_diff_eq!((got - want).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn moebius_similarity_scales_distances() {
        let fr = frame3();
        // T(w) = l w, T(p0) = p0/l, T A = A gives the homothety of ratio l.
        let lambda = 1.8;
        let mut t = DMatrix::zeros(5, 5);
        let mink = fr.minkowski().clone();
        // Build T on the frame basis.
        let mut basis = DMatrix::zeros(5, 5);
        let mut images = DMatrix::zeros(5, 5);
        basis.set_column(0, &fr.w);
        images.set_column(0, &(&fr.w * lambda));
        basis.set_column(1, &fr.p0);
        images.set_column(1, &(&fr.p0 / lambda));
        for i in 0..3 {
            basis.set_column(2 + i, &fr.a_column(i));
            images.set_column(2 + i, &fr.a_column(i));
        }
        t.copy_from(&(images * basis.try_inverse().unwrap()));
        assert!(mink.is_isometry(&t, 1e-12));
        let spec = ConformalMapSpec::Lorentz { t: t.clone() };
        let x = DVector::from_vec(vec![0.4, 1.0, -0.6]);
        let y = DVector::from_vec(vec![-1.0, 0.2, 0.5]);
        let gx = apply_moebius(&fr, &spec, &x).unwrap();
        let gy = apply_moebius(&fr, &spec, &y).unwrap();
        assert_abs_diff_eq!(
            (gx.clone() - gy).norm(),
            lambda * (&x - &y).norm(),
            epsilon = 1e-12
        );
        // Psi o H = l T Psi.
        let lhs = fr.embed(&(&x * lambda));
        let rhs = &t * fr.embed(&x) * lambda;
        assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inversion_rejects_its_center() {
        let fr = frame3();
        let spec = ConformalMapSpec::Inversion {
            center: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            radius: 1.0,
        };
        let center = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(apply_moebius(&fr, &spec, &center).is_err());
    }

    #[test]
    fn frame_change_is_inversion_after_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..4 {
            let fr1 = random_frame(3, &mut rng);
            let fr2 = random_frame(3, &mut rng);
            let ratio = frame_change_ratio(&fr1, &fr2);
            assert!(ratio > 0.0);
            let (inversion, t) = frame_change_decomposition(&fr1, &fr2).unwrap();
            assert!(fr1.minkowski().is_isometry(&t, 1e-9));
            let mut checked = 0;
            while checked < 40 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0f64..2.0));
                // Stay away from the locus mapped to infinity.
                let denom = fr1.minkowski().inner(&fr2.embed(&x), &fr1.w);
                if denom.abs() < 0.05 {
                    continue;
                }
                checked += 1;
                let lhs = fr1.drop_point(&fr2.embed(&x)).unwrap();
                let mid = apply_moebius(&fr1, &ConformalMapSpec::Lorentz { t: t.clone() }, &x)
                    .unwrap();
                let rhs = apply_moebius(&fr1, &inversion, &mid).unwrap();
                assert_abs_diff_eq!(
                    (lhs - rhs).norm(),
                    0.0,
                    epsilon = 1e-8 * (1.0 + mid.norm_squared())
                );
            }
            // The similarity part scales distances by the ratio.
            let x = DVector::from_vec(vec![0.3, 0.1, -0.2]);
            let y = DVector::from_vec(vec![-0.4, 0.8, 0.6]);
            let spec = ConformalMapSpec::Lorentz { t };
            let gx = apply_moebius(&fr1, &spec, &x).unwrap();
            let gy = apply_moebius(&fr1, &spec, &y).unwrap();
            assert_abs_diff_eq!(
                (gx - gy).norm() / (&x - &y).norm(),
                ratio,
                epsilon = 1e-9 * (1.0 + ratio)
            );
        }
    }

    #[test]
    fn drop_of_theta_lift_matches_theta_apply() {
        // Two code paths for the same map: dropping L_{C,D} through a chart
        // versus the pointwise theta evaluation.
        let fr = MoebiusFrame::canonical(3);
        let theta = ThetaMap::canonical(fr.clone(), 1, 1.0).unwrap();
        let hyp = ImmersionChart::analytic(
            Domain::interval(-0.8, 0.8, 5).unwrap(),
            AmbientForm::Lorentz(2),
            |u| vec![u[0].sinh(), u[0].cosh()],
        );
        let sph = ImmersionChart::analytic(
            Domain::interval(0.3, 2.8, 5).unwrap(),
            AmbientForm::Euclidean(3),
            |u| {
                let n = u[0].n();
                vec![u[0].cos(), u[0].sin(), Jet::constant(0.0, n)]
            },
        );
        let chart = theta.chart(&hyp, &sph).unwrap();
        for u in chart.domain.grid() {
            let x = hyp.value(&u[..1]);
            let y = sph.value(&u[1..]);
            let direct = theta.apply(&x, &y).unwrap();
            assert_abs_diff_eq!((chart.value(&u) - direct).norm(), 0.0, epsilon = 1e-12);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn embedding_encodes_squared_distances(
                x in prop::collection::vec(-3.0f64..3.0, 3),
                y in prop::collection::vec(-3.0f64..3.0, 3),
            ) {
                let fr = MoebiusFrame::canonical(3);
                let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
                let got = fr.minkowski().inner(&fr.embed(&x), &fr.embed(&y));
                prop_assert!((got + 0.5 * (&x - &y).norm_squared()).abs() < 1e-12);
            }

            #[test]
            fn embedding_round_trips(x in prop::collection::vec(-3.0f64..3.0, 3)) {
                let fr = MoebiusFrame::canonical(3);
                let x = DVector::from_vec(x);
                let back = fr.invert(&fr.embed(&x)).unwrap();
                prop_assert!((back - &x).norm() < 1e-12);
            }
        }
    }
}
