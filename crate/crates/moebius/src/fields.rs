//! Scalar and vector fields over a chart domain.
//!
//! Fields are given either by closed-form jet closures, by constants, or by
//! sampled closures differentiated with the same fourth-order stencils as
//! charts. One-dimensional quantities produced by quadrature or ODE
//! integration are stored as quintic Hermite series (value, first and second
//! derivative per node), which keeps the interpolation error far below the
//! 1e-8 budget at the resolutions used here.

use crate::chart::fd_jets;
use crate::jet::Jet;
use nalgebra::DVector;
use std::sync::Arc;

/// Uniform-grid quintic Hermite series: per node `(f, f', f'')`.
#[derive(Clone, Debug)]
pub struct QuinticSeries {
    pub t0: f64,
    pub step: f64,
    pub nodes: Vec<[f64; 3]>,
}

impl QuinticSeries {
    pub fn new(t0: f64, step: f64, nodes: Vec<[f64; 3]>) -> Self {
        assert!(nodes.len() >= 2, "quintic series needs at least two nodes");
        assert!(step > 0.0, "quintic series needs a positive step");
        QuinticSeries { t0, step, nodes }
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.step * (self.nodes.len() - 1) as f64
    }

    /// Value and first two derivatives at `t`. Slight extrapolation past the
    /// node range continues the boundary polynomial.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let cells = self.nodes.len() - 1;
        let raw = (t - self.t0) / self.step;
        let cell = (raw.floor() as isize).clamp(0, cells as isize - 1) as usize;
        let x = raw - cell as f64;
        let h = self.step;
        let a = self.nodes[cell];
        let b = self.nodes[cell + 1];
        // Scale derivatives into cell units.
        let (f0, d0, s0) = (a[0], a[1] * h, a[2] * h * h);
        let (f1, d1, s1) = (b[0], b[1] * h, b[2] * h * h);

        let x2 = x * x;
        let x3 = x2 * x;
        let x4 = x3 * x;
        let x5 = x4 * x;
        let h00 = 1.0 - 10.0 * x3 + 15.0 * x4 - 6.0 * x5;
        let h10 = x - 6.0 * x3 + 8.0 * x4 - 3.0 * x5;
        let h20 = 0.5 * (x2 - 3.0 * x3 + 3.0 * x4 - x5);
        let h01 = 10.0 * x3 - 15.0 * x4 + 6.0 * x5;
        let h11 = -4.0 * x3 + 7.0 * x4 - 3.0 * x5;
        let h21 = 0.5 * (x3 - 2.0 * x4 + x5);
        let p = f0 * h00 + d0 * h10 + s0 * h20 + f1 * h01 + d1 * h11 + s1 * h21;

        let dh00 = -30.0 * x2 + 60.0 * x3 - 30.0 * x4;
        let dh10 = 1.0 - 18.0 * x2 + 32.0 * x3 - 15.0 * x4;
        let dh20 = 0.5 * (2.0 * x - 9.0 * x2 + 12.0 * x3 - 5.0 * x4);
        let dh01 = 30.0 * x2 - 60.0 * x3 + 30.0 * x4;
        let dh11 = -12.0 * x2 + 28.0 * x3 - 15.0 * x4;
        let dh21 = 0.5 * (3.0 * x2 - 8.0 * x3 + 5.0 * x4);
        let dp = f0 * dh00 + d0 * dh10 + s0 * dh20 + f1 * dh01 + d1 * dh11 + s1 * dh21;

        let sh00 = -60.0 * x + 180.0 * x2 - 120.0 * x3;
        let sh10 = -36.0 * x + 96.0 * x2 - 60.0 * x3;
        let sh20 = 0.5 * (2.0 - 18.0 * x + 36.0 * x2 - 20.0 * x3);
        let sh01 = 60.0 * x - 180.0 * x2 + 120.0 * x3;
        let sh11 = -24.0 * x + 84.0 * x2 - 60.0 * x3;
        let sh21 = 0.5 * (6.0 * x - 24.0 * x2 + 20.0 * x3);
        let sp = f0 * sh00 + d0 * sh10 + s0 * sh20 + f1 * sh01 + d1 * sh11 + s1 * sh21;

        (p, dp / h, sp / (h * h))
    }

    /// Chain rule onto a jet argument.
    pub fn chain(&self, t: &Jet) -> Jet {
        let (f, df, ddf) = self.eval(t.v);
        let outer = &t.g * t.g.transpose();
        Jet {
            v: f,
            g: &t.g * df,
            h: &t.h * df + outer * ddf,
        }
    }
}

type ScalarJetFn = dyn Fn(&[Jet]) -> Jet + Send + Sync;
type ScalarEvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorJetFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;
type VectorEvalFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

#[derive(Clone)]
enum ScalarImpl {
    Constant(f64),
    Analytic(Arc<ScalarJetFn>),
    Sampled { eval: Arc<ScalarEvalFn>, steps: Vec<f64> },
}

/// Scalar field on an `n`-dimensional domain with jet access.
#[derive(Clone)]
pub struct ScalarField {
    n: usize,
    imp: ScalarImpl,
}

impl ScalarField {
    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField {
            n,
            imp: ScalarImpl::Constant(c),
        }
    }

    pub fn analytic<F>(n: usize, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        ScalarField {
            n,
            imp: ScalarImpl::Analytic(Arc::new(f)),
        }
    }

    pub fn sampled<F>(n: usize, f: F, steps: Vec<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            n,
            imp: ScalarImpl::Sampled {
                eval: Arc::new(f),
                steps,
            },
        }
    }

    /// Field depending on a single domain axis through a Hermite series.
    pub fn axis_series(n: usize, axis: usize, series: QuinticSeries) -> Self {
        let series = Arc::new(series);
        ScalarField::analytic(n, move |u: &[Jet]| series.chain(&u[axis]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.imp, ScalarImpl::Constant(_))
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match &self.imp {
            ScalarImpl::Constant(c) => *c,
            ScalarImpl::Analytic(f) => f(&Jet::seed(u)).v,
            ScalarImpl::Sampled { eval, .. } => eval(u),
        }
    }

    pub fn jet(&self, u: &[f64]) -> Jet {
        match &self.imp {
            ScalarImpl::Constant(c) => Jet::constant(*c, self.n),
            ScalarImpl::Analytic(f) => f(&Jet::seed(u)),
            ScalarImpl::Sampled { eval, steps } => {
                let eval = eval.clone();
                let wrapped = move |p: &[f64]| DVector::from_vec(vec![eval(p)]);
                fd_jets(&wrapped, u, steps).jets.remove(0)
            }
        }
    }

    /// Applies the field to already-built jets (for composition).
    pub fn jet_of(&self, u: &[Jet]) -> Jet {
        match &self.imp {
            ScalarImpl::Constant(c) => Jet::constant(*c, u[0].n()),
            ScalarImpl::Analytic(f) => f(u),
            ScalarImpl::Sampled { .. } => {
                panic!("sampled scalar fields cannot be composed analytically")
            }
        }
    }

    pub fn has_analytic_jets(&self) -> bool {
        !matches!(self.imp, ScalarImpl::Sampled { .. })
    }
}

#[derive(Clone)]
enum VectorImpl {
    Analytic(Arc<VectorJetFn>),
    Sampled { eval: Arc<VectorEvalFn>, steps: Vec<f64> },
}

/// Ambient-vector-valued field on an `n`-dimensional domain.
#[derive(Clone)]
pub struct VectorField {
    n: usize,
    dim: usize,
    imp: VectorImpl,
}

impl VectorField {
    pub fn analytic<F>(n: usize, dim: usize, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    {
        VectorField {
            n,
            dim,
            imp: VectorImpl::Analytic(Arc::new(f)),
        }
    }

    pub fn sampled<F>(n: usize, dim: usize, f: F, steps: Vec<f64>) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        VectorField {
            n,
            dim,
            imp: VectorImpl::Sampled {
                eval: Arc::new(f),
                steps,
            },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, u: &[f64]) -> DVector<f64> {
        match &self.imp {
            VectorImpl::Analytic(f) => crate::jet::values(&f(&Jet::seed(u))),
            VectorImpl::Sampled { eval, .. } => eval(u),
        }
    }

    pub fn jets(&self, u: &[f64]) -> Vec<Jet> {
        match &self.imp {
            VectorImpl::Analytic(f) => f(&Jet::seed(u)),
            VectorImpl::Sampled { eval, steps } => {
                let eval = eval.clone();
                let wrapped = move |p: &[f64]| eval(p);
                fd_jets(&wrapped, u, steps).jets
            }
        }
    }

    pub fn jets_of(&self, u: &[Jet]) -> Vec<Jet> {
        match &self.imp {
            VectorImpl::Analytic(f) => f(u),
            VectorImpl::Sampled { .. } => {
                panic!("sampled vector fields cannot be composed analytically")
            }
        }
    }

    pub fn has_analytic_jets(&self) -> bool {
        matches!(self.imp, VectorImpl::Analytic(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quintic_series_reproduces_smooth_functions() {
        // f(t) = sin(2t) on [0, 3]; the h^6 interpolation error at this node
        // count sits well below the asserted bounds.
        let n = 121;
        let step = 3.0 / (n - 1) as f64;
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let t = i as f64 * step;
                [
                    (2.0 * t).sin(),
                    2.0 * (2.0 * t).cos(),
                    -4.0 * (2.0 * t).sin(),
                ]
            })
            .collect();
        let s = QuinticSeries::new(0.0, step, nodes);
        for &t in &[0.05, 0.733, 1.5, 2.249, 2.95] {
            let (f, d, dd) = s.eval(t);
            assert_abs_diff_eq!(f, (2.0 * t).sin(), epsilon = 1e-10);
            assert_abs_diff_eq!(d, 2.0 * (2.0 * t).cos(), epsilon = 1e-8);
            assert_abs_diff_eq!(dd, -4.0 * (2.0 * t).sin(), epsilon = 1e-6);
        }
    }

    #[test]
    fn axis_series_field_exposes_jets() {
        let n = 41;
        let step = 2.0 / (n - 1) as f64;
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let t = i as f64 * step;
                [t.exp(), t.exp(), t.exp()]
            })
            .collect();
        let field = ScalarField::axis_series(2, 1, QuinticSeries::new(0.0, step, nodes));
        let j = field.jet(&[0.3, 0.7]);
        assert_abs_diff_eq!(j.v, 0.7f64.exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(j.g[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j.g[1], 0.7f64.exp(), epsilon = 1e-9);
        assert_abs_diff_eq!(j.h[(1, 1)], 0.7f64.exp(), epsilon = 1e-7);
    }

    #[test]
    fn sampled_scalar_field_differentiates() {
        let f = ScalarField::sampled(2, |u: &[f64]| u[0] * u[0] * u[1], vec![1e-3, 1e-3]);
        let j = f.jet(&[1.5, -0.5]);
        assert_abs_diff_eq!(j.g[0], 2.0 * 1.5 * -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(j.h[(0, 1)], 2.0 * 1.5, epsilon = 1e-7);
    }
}
