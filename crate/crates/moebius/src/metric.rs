//! Base metrics on chart domains.
//!
//! The verification machinery needs metrics with first derivatives (for
//! Christoffel symbols): flat boxes, pullbacks of factor charts, twisted and
//! warped block products, and conformal rescalings.

use crate::chart::ImmersionChart;
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::jet::Jet;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A metric value together with its coordinate derivatives `dg[k] = d_k g`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
}

pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn metric(&self, u: &[f64]) -> DMatrix<f64>;
    fn metric_jet(&self, u: &[f64]) -> MetricJet;
}

/// Christoffel symbols `G^k_{ij}` packed as one matrix per upper index.
pub fn christoffel(mj: &MetricJet) -> Result<Vec<DMatrix<f64>>> {
    let n = mj.g.nrows();
    let ginv = invert(&mj.g)?;
    let mut out = vec![DMatrix::zeros(n, n); n];
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)]
                        * (mj.dg[i][(j, l)] + mj.dg[j][(i, l)] - mj.dg[l][(i, j)]);
                }
                let v = 0.5 * acc;
                out[k][(i, j)] = v;
                out[k][(j, i)] = v;
            }
        }
    }
    Ok(out)
}

pub fn invert(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    g.clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(vec![], 0.0))
}

/// The flat metric on an `n`-dimensional box.
pub struct FlatMetric(pub usize);

impl MetricField for FlatMetric {
    fn dim(&self) -> usize {
        self.0
    }
    fn metric(&self, _u: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.0, self.0)
    }
    fn metric_jet(&self, _u: &[f64]) -> MetricJet {
        MetricJet {
            g: DMatrix::identity(self.0, self.0),
            dg: vec![DMatrix::zeros(self.0, self.0); self.0],
        }
    }
}

/// First fundamental form of a chart, used as the metric of its domain.
pub struct PullbackMetric {
    pub chart: Arc<ImmersionChart>,
}

impl MetricField for PullbackMetric {
    fn dim(&self) -> usize {
        self.chart.domain.dim()
    }

    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let j = self.chart.jet(u);
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| self.chart.ambient.inner(&j.d(a), &j.d(b)))
    }

    fn metric_jet(&self, u: &[f64]) -> MetricJet {
        let j = self.chart.jet(u);
        let n = self.dim();
        let g = DMatrix::from_fn(n, n, |a, b| self.chart.ambient.inner(&j.d(a), &j.d(b)));
        let dg = (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |a, b| {
                    self.chart.ambient.inner(&j.dd(k, a), &j.d(b))
                        + self.chart.ambient.inner(&j.d(a), &j.dd(k, b))
                })
            })
            .collect();
        MetricJet { g, dg }
    }
}

/// Pullback of a conformally rescaled ambient metric `w(x)^2 <.,.>`,
/// e.g. the half-space model of hyperbolic space with `w(x) = 1/x_last`.
pub struct WeightedPullbackMetric {
    pub chart: Arc<ImmersionChart>,
    pub weight: Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>,
}

impl MetricField for WeightedPullbackMetric {
    fn dim(&self) -> usize {
        self.chart.domain.dim()
    }

    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        self.metric_jet(u).g
    }

    fn metric_jet(&self, u: &[f64]) -> MetricJet {
        let j = self.chart.jet(u);
        let n = self.dim();
        let w = (self.weight)(&j.jets);
        let base = DMatrix::from_fn(n, n, |a, b| self.chart.ambient.inner(&j.d(a), &j.d(b)));
        let dbase: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |a, b| {
                    self.chart.ambient.inner(&j.dd(k, a), &j.d(b))
                        + self.chart.ambient.inner(&j.d(a), &j.dd(k, b))
                })
            })
            .collect();
        let w2 = w.v * w.v;
        let g = &base * w2;
        let dg = (0..n)
            .map(|k| &base * (2.0 * w.v * w.g[k]) + &dbase[k] * w2)
            .collect();
        MetricJet { g, dg }
    }
}

/// One factor of a block metric.
pub struct MetricBlock {
    /// Global coordinate indices of this block, in block-local order.
    pub coords: Vec<usize>,
    pub inner: Arc<dyn MetricField>,
    /// Optional twist factor over the full domain; the block contributes
    /// `scale(u)^2 * g_block(u_block)`.
    pub scale: Option<ScalarField>,
}

/// Block-diagonal metric: plain, twisted or warped products.
pub struct BlockMetric {
    dim: usize,
    pub blocks: Vec<MetricBlock>,
}

impl BlockMetric {
    pub fn new(dim: usize, blocks: Vec<MetricBlock>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.coords.len() != b.inner.dim() {
                return Err(Error::DimensionMismatch(
                    "block metric dimension does not match its coordinates".into(),
                ));
            }
            for &c in &b.coords {
                if c >= dim || seen[c] {
                    return Err(Error::DimensionMismatch(
                        "block coordinates must partition the domain".into(),
                    ));
                }
                seen[c] = true;
            }
            if let Some(s) = &b.scale {
                if s.n() != dim {
                    return Err(Error::DimensionMismatch(
                        "block scale field must live on the full domain".into(),
                    ));
                }
            }
        }
        if !seen.into_iter().all(|s| s) {
            return Err(Error::DimensionMismatch(
                "block coordinates must cover the domain".into(),
            ));
        }
        Ok(BlockMetric { dim, blocks })
    }
}

impl MetricField for BlockMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        self.metric_jet(u).g
    }

    fn metric_jet(&self, u: &[f64]) -> MetricJet {
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        let mut dg = vec![DMatrix::zeros(n, n); n];
        for b in &self.blocks {
            let ub: Vec<f64> = b.coords.iter().map(|&c| u[c]).collect();
            let mj = b.inner.metric_jet(&ub);
            let (s, ds) = match &b.scale {
                Some(f) => {
                    let j = f.jet(u);
                    (j.v, j.g.iter().copied().collect::<Vec<f64>>())
                }
                None => (1.0, vec![0.0; n]),
            };
            let s2 = s * s;
            for (p, &a) in b.coords.iter().enumerate() {
                for (q, &c) in b.coords.iter().enumerate() {
                    g[(a, c)] = s2 * mj.g[(p, q)];
                    for k in 0..n {
                        let mut d = 2.0 * s * ds[k] * mj.g[(p, q)];
                        if let Some(r) = b.coords.iter().position(|&cc| cc == k) {
                            d += s2 * mj.dg[r][(p, q)];
                        }
                        dg[k][(a, c)] = d;
                    }
                }
            }
        }
        MetricJet { g, dg }
    }
}

/// Conformal rescaling `factor(u)^2 * base`.
pub struct ScaledMetric {
    pub base: Arc<dyn MetricField>,
    pub factor: ScalarField,
}

impl MetricField for ScaledMetric {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        let f = self.factor.value(u);
        self.base.metric(u) * (f * f)
    }

    fn metric_jet(&self, u: &[f64]) -> MetricJet {
        let mj = self.base.metric_jet(u);
        let f = self.factor.jet(u);
        let f2 = f.v * f.v;
        let g = &mj.g * f2;
        let dg = (0..self.dim())
            .map(|k| &mj.g * (2.0 * f.v * f.g[k]) + &mj.dg[k] * f2)
            .collect();
        MetricJet { g, dg }
    }
}

/// Euclidean length implied by a metric for a coordinate vector.
pub fn metric_norm(g: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (g * x).dot(x).max(0.0).sqrt()
}
