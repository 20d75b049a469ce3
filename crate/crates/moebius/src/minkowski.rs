//! Lorentzian linear algebra on `L^{N+2}`.
//!
//! The scalar product has signature `(+, ..., +, -)` with the last coordinate
//! timelike. Everything downstream (frames, light-cone embeddings, normal
//! spaces of lifted immersions) leans on the Gram-Schmidt and complement
//! routines here.

use crate::error::{Error, Result};
use crate::jet::{self, Jet};
use crate::tol;
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalType {
    Spacelike,
    Lightlike,
    Timelike,
}

/// The Lorentz form on `R^dim` with the last coordinate timelike.
#[derive(Clone, Debug, PartialEq)]
pub struct Minkowski {
    dim: usize,
}

/// Result of Lorentzian Gram-Schmidt: pairwise orthogonal vectors with
/// self products `+1` or `-1`.
#[derive(Clone, Debug)]
pub struct OrthonormalSet {
    pub vectors: Vec<DVector<f64>>,
    pub causal_types: Vec<CausalType>,
}

impl Minkowski {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 4 {
            return Err(Error::DimensionMismatch(format!(
                "Lorentz form needs ambient dimension >= 4, got {dim}"
            )));
        }
        Ok(Minkowski { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sign(&self, i: usize) -> f64 {
        if i + 1 == self.dim {
            -1.0
        } else {
            1.0
        }
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.sign(i)).collect()
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        assert_eq!(u.len(), self.dim, "lorentz inner: dimension mismatch");
        assert_eq!(v.len(), self.dim, "lorentz inner: dimension mismatch");
        let last = self.dim - 1;
        let mut acc = 0.0;
        for i in 0..last {
            acc += u[i] * v[i];
        }
        acc - u[last] * v[last]
    }

    /// Fallible variant for API boundaries.
    pub fn inner_checked(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        if u.len() != self.dim || v.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "expected vectors of length {}, got {} and {}",
                self.dim,
                u.len(),
                v.len()
            )));
        }
        Ok(self.inner(u, v))
    }

    pub fn inner_jet(&self, a: &[Jet], b: &[Jet]) -> Jet {
        jet::dot_signed(a, b, &self.signs())
    }

    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v)
    }

    /// Causal classification with a relative lightlike band.
    pub fn classify(&self, v: &DVector<f64>) -> CausalType {
        let q = self.norm_sq(v);
        let eps = tol::LIGHT_CLASSIFY * v.norm_squared().max(1.0);
        if q.abs() <= eps {
            CausalType::Lightlike
        } else if q > 0.0 {
            CausalType::Spacelike
        } else {
            CausalType::Timelike
        }
    }

    /// Reflection `p - 2 <p,v> v` through the hyperplane orthogonal to a unit
    /// spacelike vector `v`.
    pub fn reflect(&self, v: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let vv = self.inner_checked(v, v)?;
        if (vv - 1.0).abs() > tol::UNIT_SPACELIKE {
            return Err(Error::NotUnitSpacelike((vv - 1.0).abs()));
        }
        let pv = self.inner_checked(p, v)?;
        Ok(p - v * (2.0 * pv))
    }

    /// Subtracts from `x` its projections onto the orthonormal `basis`.
    fn orthogonalize_against(&self, x: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
        let mut out = x.clone();
        for e in basis {
            let c = self.inner(&out, e) * self.inner(e, e).signum();
            out -= e * c;
        }
        out
    }

    fn normalize(&self, x: &DVector<f64>, context: &str) -> Result<(DVector<f64>, CausalType)> {
        let q = self.norm_sq(x);
        let scale = x.norm_squared().max(1.0);
        if q.abs() <= tol::NULL_RESIDUAL * scale {
            return Err(Error::NonDegeneracyFailure(format!(
                "null direction in {context} (|<u,u>| = {:.3e})",
                q.abs()
            )));
        }
        let ty = if q > 0.0 {
            CausalType::Spacelike
        } else {
            CausalType::Timelike
        };
        Ok((x / q.abs().sqrt(), ty))
    }

    /// Lorentzian Gram-Schmidt.
    ///
    /// Spacelike candidates are processed first and each vector is
    /// re-orthogonalized twice for stability. A null residual or a linearly
    /// dependent input reports a degeneracy; at most one timelike direction
    /// may appear.
    pub fn gram_schmidt(&self, vectors: &[DVector<f64>]) -> Result<OrthonormalSet> {
        for v in vectors {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "gram_schmidt expects length {}, got {}",
                    self.dim,
                    v.len()
                )));
            }
        }
        // Tentative pass in input order to find where the timelike direction sits.
        let mut order: Vec<usize> = Vec::with_capacity(vectors.len());
        let mut timelike: Vec<usize> = Vec::new();
        {
            let mut accepted: Vec<DVector<f64>> = Vec::new();
            for (i, v) in vectors.iter().enumerate() {
                let r = self.orthogonalize_against(v, &accepted);
                if r.norm_squared() <= 1e-24 * v.norm_squared().max(1.0) {
                    return Err(Error::NonDegeneracyFailure(
                        "input vectors are linearly dependent".into(),
                    ));
                }
                let (e, ty) = self.normalize(&r, "gram_schmidt")?;
                if ty == CausalType::Timelike {
                    timelike.push(i);
                } else {
                    order.push(i);
                }
                accepted.push(e);
            }
        }
        if timelike.len() > 1 {
            return Err(Error::NonDegeneracyFailure(format!(
                "{} timelike directions in the span, at most one allowed",
                timelike.len()
            )));
        }
        order.extend(timelike);

        let mut out: Vec<DVector<f64>> = Vec::with_capacity(order.len());
        let mut types = Vec::with_capacity(order.len());
        for &i in &order {
            let mut r = self.orthogonalize_against(&vectors[i], &out);
            r = self.orthogonalize_against(&r, &out);
            let (e, ty) = self.normalize(&r, "gram_schmidt")?;
            out.push(e);
            types.push(ty);
        }
        Ok(OrthonormalSet {
            vectors: out,
            causal_types: types,
        })
    }

    /// Orthonormal frame of the orthogonal complement of an orthonormal set.
    ///
    /// Candidates are drawn from the standard basis with a deterministic
    /// largest-self-product pivot, so results are reproducible.
    pub fn orthogonal_complement(&self, frame: &[DVector<f64>]) -> Result<OrthonormalSet> {
        for (i, a) in frame.iter().enumerate() {
            for (j, b) in frame.iter().enumerate() {
                let want = if i == j {
                    self.inner(a, a).signum()
                } else {
                    0.0
                };
                if (self.inner_checked(a, b)? - want).abs() > tol::UNIT_SPACELIKE {
                    return Err(Error::NonDegeneracyFailure(
                        "orthogonal_complement expects an orthonormal input".into(),
                    ));
                }
            }
        }
        let need = self.dim - frame.len();
        let mut basis: Vec<DVector<f64>> = frame.to_vec();
        let mut out = Vec::with_capacity(need);
        let mut types = Vec::with_capacity(need);
        for _ in 0..need {
            let mut best: Option<(f64, DVector<f64>)> = None;
            for k in 0..self.dim {
                let mut e = DVector::zeros(self.dim);
                e[k] = 1.0;
                let mut r = self.orthogonalize_against(&e, &basis);
                r = self.orthogonalize_against(&r, &basis);
                let n2 = r.norm_squared();
                if n2 < 1e-20 {
                    continue;
                }
                let quality = self.norm_sq(&r).abs() / n2.max(1.0);
                if best.as_ref().map_or(true, |(q, _)| quality > *q) {
                    best = Some((quality, r));
                }
            }
            let (quality, r) = best.ok_or_else(|| {
                Error::DegenerateComplement("no candidate left for the complement".into())
            })?;
            if quality <= tol::NULL_RESIDUAL {
                return Err(Error::DegenerateComplement(format!(
                    "complement contains a null radical (pivot quality {quality:.3e})"
                )));
            }
            let (e, ty) = self
                .normalize(&r, "orthogonal_complement")
                .map_err(|_| Error::DegenerateComplement("null residual".into()))?;
            basis.push(e.clone());
            out.push(e);
            types.push(ty);
        }
        Ok(OrthonormalSet {
            vectors: out,
            causal_types: types,
        })
    }

    /// Gram matrix of a set of vectors.
    pub fn gram(&self, vectors: &[DVector<f64>]) -> DMatrix<f64> {
        let k = vectors.len();
        DMatrix::from_fn(k, k, |i, j| self.inner(&vectors[i], &vectors[j]))
    }

    /// Checks that a matrix preserves the form: `T^t eta T = eta`, with the
    /// residual measured relative to the matrix scale.
    pub fn is_isometry(&self, t: &DMatrix<f64>, tolerance: f64) -> bool {
        if t.nrows() != self.dim || t.ncols() != self.dim {
            return false;
        }
        let eta = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                self.sign(i)
            } else {
                0.0
            }
        });
        let residual = t.transpose() * &eta * t - eta;
        residual.amax() <= tolerance * t.norm_squared().max(1.0)
    }

    pub fn basis_vector(&self, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        e[i] = 1.0;
        e
    }
}
