//! Sampled parametric immersions over box domains.
//!
//! A chart is a map from an axis-aligned box into Euclidean or Lorentzian
//! ambient space. Charts built from closed-form pieces carry analytic
//! second-order jets; charts given only by a value closure fall back to
//! fourth-order finite differences with a per-axis step proportional to the
//! box extent.

use crate::error::{Error, Result};
use crate::jet::{self, Jet};
use crate::metric::{FlatMetric, MetricField};
use crate::minkowski::Minkowski;
use crate::tol;
use nalgebra::DVector;
use std::sync::Arc;

/// Axis-aligned box with per-axis sample counts. A zero-dimensional domain
/// (a single point) is allowed so constant factors can join products.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != res.len() {
            return Err(Error::DimensionMismatch(
                "domain lo/hi/res must have equal lengths".into(),
            ));
        }
        for k in 0..lo.len() {
            if !(hi[k] > lo[k]) {
                return Err(Error::ParameterRange(format!(
                    "domain axis {k} is empty ({} .. {})",
                    lo[k], hi[k]
                )));
            }
            if res[k] < 2 {
                return Err(Error::ParameterRange(format!(
                    "domain axis {k} needs at least 2 samples"
                )));
            }
        }
        Ok(Domain { lo, hi, res })
    }

    pub fn point() -> Self {
        Domain {
            lo: vec![],
            hi: vec![],
            res: vec![],
        }
    }

    pub fn interval(lo: f64, hi: f64, res: usize) -> Result<Self> {
        Domain::new(vec![lo], vec![hi], vec![res])
    }

    pub fn square(lo: f64, hi: f64, res: usize) -> Result<Self> {
        Domain::new(vec![lo, lo], vec![hi, hi], vec![res, res])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn sample_count(&self) -> usize {
        self.res.iter().product::<usize>().max(1)
    }

    /// Grid node from per-axis indices.
    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| {
                self.lo[k] + self.extent(k) * (i as f64) / ((self.res[k] - 1) as f64)
            })
            .collect()
    }

    /// Row-major grid (first axis slowest).
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let total = self.sample_count();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..total {
            out.push(self.node(&idx));
            for k in (0..self.dim()).rev() {
                idx[k] += 1;
                if idx[k] < self.res[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    /// Shrinks the box toward its center by `margin` of each extent.
    pub fn shrink(&self, margin: f64) -> Domain {
        let mut out = self.clone();
        for k in 0..self.dim() {
            let pad = margin * self.extent(k);
            out.lo[k] += pad;
            out.hi[k] -= pad;
        }
        out
    }

    /// Concatenation of two boxes (product domain).
    pub fn concat(&self, other: &Domain) -> Domain {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        let mut res = self.res.clone();
        lo.extend_from_slice(&other.lo);
        hi.extend_from_slice(&other.hi);
        res.extend_from_slice(&other.res);
        Domain { lo, hi, res }
    }

    pub fn contains(&self, u: &[f64], slack: f64) -> bool {
        u.len() == self.dim()
            && u.iter().enumerate().all(|(k, &x)| {
                let pad = slack * self.extent(k);
                x >= self.lo[k] - pad && x <= self.hi[k] + pad
            })
    }

    pub fn with_res(&self, res: usize) -> Domain {
        Domain {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            res: vec![res; self.dim()],
        }
    }
}

/// Ambient inner-product structure.
#[derive(Clone, Debug, PartialEq)]
pub enum AmbientForm {
    Euclidean(usize),
    /// Lorentz form with the last coordinate timelike.
    Lorentz(usize),
}

impl AmbientForm {
    pub fn dim(&self) -> usize {
        match self {
            AmbientForm::Euclidean(n) | AmbientForm::Lorentz(n) => *n,
        }
    }

    pub fn is_lorentz(&self) -> bool {
        matches!(self, AmbientForm::Lorentz(_))
    }

    pub fn sign(&self, i: usize) -> f64 {
        match self {
            AmbientForm::Euclidean(_) => 1.0,
            AmbientForm::Lorentz(n) => {
                if i + 1 == *n {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.sign(i)).collect()
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match self {
            AmbientForm::Euclidean(_) => u.dot(v),
            AmbientForm::Lorentz(n) => {
                let last = *n - 1;
                let mut acc = 0.0;
                for i in 0..last {
                    acc += u[i] * v[i];
                }
                acc - u[last] * v[last]
            }
        }
    }

    pub fn inner_jet(&self, a: &[Jet], b: &[Jet]) -> Jet {
        match self {
            AmbientForm::Euclidean(_) => jet::dot(a, b),
            AmbientForm::Lorentz(_) => jet::dot_signed(a, b, &self.signs()),
        }
    }

    pub fn minkowski(&self) -> Option<Minkowski> {
        match self {
            AmbientForm::Lorentz(n) => Minkowski::new(*n).ok(),
            AmbientForm::Euclidean(_) => None,
        }
    }
}

/// Partition of the domain coordinates into net blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductNet {
    pub blocks: Vec<Vec<usize>>,
}

impl ProductNet {
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::ParameterRange(
                "a product net needs at least 2 blocks".into(),
            ));
        }
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::ParameterRange("empty net block".into()));
            }
            for &i in b {
                if i >= dim || seen[i] {
                    return Err(Error::ParameterRange(format!(
                        "net blocks must partition 0..{dim}"
                    )));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::ParameterRange(format!(
                "net blocks must cover all of 0..{dim}"
            )));
        }
        Ok(ProductNet { blocks })
    }

    /// Two consecutive blocks of the given sizes.
    pub fn split(sizes: &[usize]) -> Result<Self> {
        let dim: usize = sizes.iter().sum();
        let mut blocks = Vec::new();
        let mut next = 0;
        for &s in sizes {
            if s == 0 {
                continue;
            }
            blocks.push((next..next + s).collect());
            next += s;
        }
        ProductNet::new(blocks, dim)
    }

    pub fn complement(&self, block: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if i != block {
                out.extend_from_slice(b);
            }
        }
        out
    }
}

pub type JetMapFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;
type EvalFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

#[derive(Clone)]
enum ChartMap {
    Analytic(Arc<JetMapFn>),
    Sampled { eval: Arc<EvalFn>, rel_step: f64 },
}

/// A sampled parametric immersion.
#[derive(Clone)]
pub struct ImmersionChart {
    pub domain: Domain,
    pub ambient: AmbientForm,
    map: ChartMap,
    pub base_metric: Arc<dyn MetricField>,
    pub net: Option<ProductNet>,
}

/// Value, gradient and Hessian of every ambient coordinate at one parameter.
#[derive(Clone, Debug)]
pub struct ChartJet {
    pub jets: Vec<Jet>,
}

impl ChartJet {
    pub fn ambient_dim(&self) -> usize {
        self.jets.len()
    }

    pub fn value(&self) -> DVector<f64> {
        jet::values(&self.jets)
    }

    /// Partial derivative along domain axis `k`.
    pub fn d(&self, k: usize) -> DVector<f64> {
        DVector::from_iterator(self.jets.len(), self.jets.iter().map(|j| j.g[k]))
    }

    /// Second partial derivative along axes `k`, `l`.
    pub fn dd(&self, k: usize, l: usize) -> DVector<f64> {
        DVector::from_iterator(self.jets.len(), self.jets.iter().map(|j| j.h[(k, l)]))
    }
}

impl ImmersionChart {
    pub fn analytic<F>(domain: Domain, ambient: AmbientForm, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    {
        let dim = domain.dim();
        let _ = dim;
        ImmersionChart {
            domain,
            base_metric: Arc::new(FlatMetric(0)),
            ambient,
            map: ChartMap::Analytic(Arc::new(f)),
            net: None,
        }
        .fix_flat_base()
    }

    pub fn sampled<F>(domain: Domain, ambient: AmbientForm, eval: F) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        ImmersionChart {
            domain,
            base_metric: Arc::new(FlatMetric(0)),
            ambient,
            map: ChartMap::Sampled {
                eval: Arc::new(eval),
                rel_step: tol::FD_REL_STEP,
            },
            net: None,
        }
        .fix_flat_base()
    }

    fn fix_flat_base(mut self) -> Self {
        self.base_metric = Arc::new(FlatMetric(self.domain.dim()));
        self
    }

    pub fn with_base_metric(mut self, m: Arc<dyn MetricField>) -> Self {
        self.base_metric = m;
        self
    }

    pub fn with_net(mut self, net: ProductNet) -> Self {
        self.net = Some(net);
        self
    }

    pub fn has_analytic_jets(&self) -> bool {
        matches!(self.map, ChartMap::Analytic(_))
    }

    /// The analytic jet closure, when the chart has one. Closures follow the
    /// convention of reading the jet dimension from their inputs, so they can
    /// be re-used inside larger parameter spaces (products, compositions).
    pub fn jet_closure(&self) -> Option<Arc<JetMapFn>> {
        match &self.map {
            ChartMap::Analytic(f) => Some(f.clone()),
            ChartMap::Sampled { .. } => None,
        }
    }

    pub fn value(&self, u: &[f64]) -> DVector<f64> {
        match &self.map {
            ChartMap::Analytic(f) => jet::values(&f(&Jet::seed(u))),
            ChartMap::Sampled { eval, .. } => eval(u),
        }
    }

    /// Per-axis finite-difference steps.
    pub fn fd_steps(&self) -> Vec<f64> {
        let rel = match &self.map {
            ChartMap::Sampled { rel_step, .. } => *rel_step,
            ChartMap::Analytic(_) => tol::FD_REL_STEP,
        };
        (0..self.domain.dim())
            .map(|k| rel * self.domain.extent(k))
            .collect()
    }

    pub fn jet(&self, u: &[f64]) -> ChartJet {
        match &self.map {
            ChartMap::Analytic(f) => ChartJet {
                jets: f(&Jet::seed(u)),
            },
            ChartMap::Sampled { eval, rel_step } => {
                let steps: Vec<f64> = (0..self.domain.dim())
                    .map(|k| rel_step * self.domain.extent(k))
                    .collect();
                fd_jets(&**eval, u, &steps)
            }
        }
    }

    /// The same chart with jets forced through finite differences; used to
    /// get derivative estimates independent of the analytic path.
    pub fn with_fd_jets(&self) -> ImmersionChart {
        let mut out = self.clone();
        if let ChartMap::Analytic(f) = &self.map {
            let f = f.clone();
            out.map = ChartMap::Sampled {
                eval: Arc::new(move |u: &[f64]| jet::values(&f(&Jet::seed(u)))),
                rel_step: tol::FD_REL_STEP,
            };
        }
        out
    }

    /// Post-composition with an ambient map given on jets. Keeps the domain,
    /// base metric and net; analytic jets survive when present.
    pub fn compose<G>(&self, new_ambient: AmbientForm, g: G) -> ImmersionChart
    where
        G: Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    {
        let mut out = self.clone();
        match &self.map {
            ChartMap::Analytic(f) => {
                let f = f.clone();
                out.map = ChartMap::Analytic(Arc::new(move |u: &[Jet]| g(&f(u))));
            }
            ChartMap::Sampled { eval, rel_step } => {
                let eval = eval.clone();
                out.map = ChartMap::Sampled {
                    eval: Arc::new(move |u: &[f64]| {
                        let x = eval(u);
                        let n = u.len();
                        jet::values(&g(&jet::constants(&x, n)))
                    }),
                    rel_step: *rel_step,
                };
            }
        }
        out.ambient = new_ambient;
        out
    }

    /// Relative disagreement between 3-point and 5-point finite-difference
    /// estimates of first and second derivatives at `u`. Meaningful mostly
    /// for sampled charts; analytic charts are probed through their values.
    pub fn fd_consistency(&self, u: &[f64]) -> f64 {
        let steps = self.fd_steps();
        let n = self.domain.dim();
        let eval = |p: &[f64]| self.value(p);
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let h = steps[k];
            let shift = |s: f64| {
                let mut p = u.to_vec();
                p[k] += s * h;
                eval(&p)
            };
            let (fm2, fm1, f0, fp1, fp2) =
                (shift(-2.0), shift(-1.0), shift(0.0), shift(1.0), shift(2.0));
            let d3 = (&fp1 - &fm1) / (2.0 * h);
            let d5 = ((&fp1 - &fm1) * 8.0 - (&fp2 - &fm2)) / (12.0 * h);
            let scale = d5.norm().max(1.0);
            worst = worst.max((&d3 - &d5).norm() / scale);
            let s3 = (&fp1 - &(f0.clone() * 2.0) + &fm1) / (h * h);
            let s5 = (-&fm2 + &fm1 * 16.0 - &f0 * 30.0 + &fp1 * 16.0 - &fp2) / (12.0 * h * h);
            let scale2 = s5.norm().max(1.0);
            worst = worst.max((&s3 - &s5).norm() / scale2);
        }
        worst
    }
}

/// Fourth-order finite-difference jets of a vector-valued map.
pub fn fd_jets(eval: &EvalFn, u: &[f64], steps: &[f64]) -> ChartJet {
    let n = u.len();
    let f0 = eval(u);
    let dim = f0.len();
    let shift = |offsets: &[(usize, f64)]| {
        let mut p = u.to_vec();
        for &(axis, s) in offsets {
            p[axis] += s * steps[axis];
        }
        eval(&p)
    };

    let mut grads: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut hess: Vec<Vec<DVector<f64>>> = vec![vec![DVector::zeros(dim); n]; n];
    let mut plus1 = Vec::with_capacity(n);
    let mut minus1 = Vec::with_capacity(n);
    for k in 0..n {
        let h = steps[k];
        let fp1 = shift(&[(k, 1.0)]);
        let fm1 = shift(&[(k, -1.0)]);
        let fp2 = shift(&[(k, 2.0)]);
        let fm2 = shift(&[(k, -2.0)]);
        grads.push(((&fp1 - &fm1) * 8.0 - (&fp2 - &fm2)) / (12.0 * h));
        hess[k][k] =
            (-&fm2 + &fm1 * 16.0 - &f0 * 30.0 + &fp1 * 16.0 - &fp2) / (12.0 * h * h);
        plus1.push(fp1);
        minus1.push(fm1);
    }
    // Mixed partials: the 4th-order first-derivative stencil applied twice.
    const W: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    for k in 0..n {
        for l in (k + 1)..n {
            let mut acc = DVector::zeros(dim);
            for &(ok, wk) in &W {
                for &(ol, wl) in &W {
                    let f = shift(&[(k, ok), (l, ol)]);
                    acc += f * (wk * wl);
                }
            }
            acc /= steps[k] * steps[l];
            hess[k][l] = acc.clone();
            hess[l][k] = acc;
        }
    }

    let jets = (0..dim)
        .map(|c| {
            let g = DVector::from_iterator(n, grads.iter().map(|d| d[c]));
            let h = nalgebra::DMatrix::from_fn(n, n, |i, j| hess[i][j][c]);
            Jet { v: f0[c], g, h }
        })
        .collect();
    ChartJet { jets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn torus_like(domain: Domain) -> ImmersionChart {
        ImmersionChart::analytic(domain, AmbientForm::Euclidean(3), |u| {
            let rho = &Jet::constant(2.0, u[0].n()) + &u[0].sin();
            vec![u[0].cos(), &rho * &u[1].cos(), &rho * &u[1].sin()]
        })
    }

    #[test]
    fn grid_is_row_major_and_counts_match() {
        let d = Domain::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![2, 3]).unwrap();
        let g = d.grid();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[1], vec![0.0, 1.0]);
        assert_eq!(g[3], vec![1.0, 0.0]);
        assert_eq!(g[5], vec![1.0, 2.0]);
    }

    #[test]
    fn fd_jets_match_analytic_jets() {
        let d = Domain::square(0.2, 5.8, 5).unwrap();
        let chart = torus_like(d);
        let fd = chart.with_fd_jets();
        for u in [[1.0, 2.0], [0.4, 5.0], [3.1, 0.9]] {
            let a = chart.jet(&u);
            let b = fd.jet(&u);
            for c in 0..3 {
                assert_abs_diff_eq!(a.jets[c].v, b.jets[c].v, epsilon = 1e-12);
                for k in 0..2 {
                    assert_abs_diff_eq!(a.jets[c].g[k], b.jets[c].g[k], epsilon = 1e-6);
                    for l in 0..2 {
                        assert_abs_diff_eq!(a.jets[c].h[(k, l)], b.jets[c].h[(k, l)], epsilon = 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn fd_consistency_is_tight_on_smooth_charts() {
        let chart = torus_like(Domain::square(0.0, 6.0, 5).unwrap());
        assert!(chart.fd_consistency(&[1.3, 2.1]) < 1e-6);
    }

    #[test]
    fn product_net_validation() {
        assert!(ProductNet::new(vec![vec![0], vec![1]], 2).is_ok());
        assert!(ProductNet::new(vec![vec![0]], 1).is_err());
        assert!(ProductNet::new(vec![vec![0], vec![0]], 2).is_err());
        assert!(ProductNet::new(vec![vec![0], vec![2]], 3).is_err());
        let net = ProductNet::split(&[2, 1]).unwrap();
        assert_eq!(net.blocks, vec![vec![0, 1], vec![2]]);
        assert_eq!(net.complement(0), vec![2]);
    }

    #[test]
    fn compose_keeps_analytic_jets() {
        let chart = torus_like(Domain::square(0.0, 6.0, 5).unwrap());
        let shifted = chart.compose(AmbientForm::Euclidean(3), |x| {
            vec![
                &x[0] + &Jet::constant(1.0, 2),
                x[1].clone(),
                x[2].scale(2.0),
            ]
        });
        assert!(shifted.has_analytic_jets());
        let u = [1.0, 2.0];
        let a = chart.jet(&u);
        let b = shifted.jet(&u);
        assert_abs_diff_eq!(b.jets[0].v, a.jets[0].v + 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.jets[2].g[1], 2.0 * a.jets[2].g[1], epsilon = 1e-15);
    }
}
