//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to a fixed list of domain parameters. Charts and fields built from
//! closed-form pieces propagate jets through ordinary arithmetic, which gives
//! first and second derivatives to machine precision without any symbolic
//! machinery.

use nalgebra::{DMatrix, DVector};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug)]
pub struct Jet {
    pub v: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Jet {
    pub fn constant(v: f64, n: usize) -> Self {
        Jet {
            v,
            g: DVector::zeros(n),
            h: DMatrix::zeros(n, n),
        }
    }

    /// The `index`-th domain parameter with value `v`.
    pub fn var(v: f64, index: usize, n: usize) -> Self {
        let mut g = DVector::zeros(n);
        g[index] = 1.0;
        Jet {
            v,
            g,
            h: DMatrix::zeros(n, n),
        }
    }

    /// Seeds a full parameter vector as independent variables.
    pub fn seed(u: &[f64]) -> Vec<Jet> {
        let n = u.len();
        u.iter()
            .enumerate()
            .map(|(i, &x)| Jet::var(x, i, n))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// Chain rule for a scalar function with derivatives `df`, `ddf` at `self.v`.
    fn chain(&self, f: f64, df: f64, ddf: f64) -> Jet {
        let outer = &self.g * self.g.transpose();
        Jet {
            v: f,
            g: &self.g * df,
            h: &self.h * df + outer * ddf,
        }
    }

    pub fn recip(&self) -> Jet {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Jet {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sinh(&self) -> Jet {
        self.chain(self.v.sinh(), self.v.cosh(), self.v.sinh())
    }

    pub fn cosh(&self) -> Jet {
        self.chain(self.v.cosh(), self.v.sinh(), self.v.cosh())
    }

    pub fn powi(&self, p: i32) -> Jet {
        let x = self.v;
        self.chain(
            x.powi(p),
            p as f64 * x.powi(p - 1),
            (p * (p - 1)) as f64 * x.powi(p - 2),
        )
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            v: self.v * c,
            g: &self.g * c,
            h: &self.h * c,
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet {
            v: self.v + rhs.v,
            g: &self.g + &rhs.g,
            h: &self.h + &rhs.h,
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet {
            v: self.v - rhs.v,
            g: &self.g - &rhs.g,
            h: &self.h - &rhs.h,
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let cross = &self.g * rhs.g.transpose();
        Jet {
            v: self.v * rhs.v,
            g: &self.g * rhs.v + &rhs.g * self.v,
            h: &self.h * rhs.v + &rhs.h * self.v + &cross + cross.transpose(),
        }
    }
}

impl Div for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self * &rhs.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        (&self).neg()
    }
}

/// Euclidean dot product of two jet vectors.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    assert_eq!(a.len(), b.len(), "jet dot: length mismatch");
    let n = a[0].n();
    a.iter()
        .zip(b)
        .fold(Jet::constant(0.0, n), |acc, (x, y)| &acc + &(x * y))
}

/// Dot product with per-coordinate signs (used for the Lorentz form).
pub fn dot_signed(a: &[Jet], b: &[Jet], signs: &[f64]) -> Jet {
    assert_eq!(a.len(), b.len(), "jet dot: length mismatch");
    assert_eq!(a.len(), signs.len(), "jet dot: sign length mismatch");
    let n = a[0].n();
    a.iter()
        .zip(b)
        .zip(signs)
        .fold(Jet::constant(0.0, n), |acc, ((x, y), &s)| {
            &acc + &(x * y).scale(s)
        })
}

pub fn norm_sq(a: &[Jet]) -> Jet {
    dot(a, a)
}

pub fn add_vec(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub_vec(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale_vec(s: &Jet, a: &[Jet]) -> Vec<Jet> {
    a.iter().map(|x| s * x).collect()
}

/// Applies a constant linear map (columns act on jet coordinates).
pub fn linear_map(m: &DMatrix<f64>, x: &[Jet]) -> Vec<Jet> {
    assert_eq!(m.ncols(), x.len(), "jet linear map: shape mismatch");
    let n = x[0].n();
    (0..m.nrows())
        .map(|r| {
            let mut acc = Jet::constant(0.0, n);
            for (c, xc) in x.iter().enumerate() {
                if m[(r, c)] != 0.0 {
                    acc = &acc + &xc.scale(m[(r, c)]);
                }
            }
            acc
        })
        .collect()
}

/// Embeds constant coordinates as jets.
pub fn constants(v: &DVector<f64>, n: usize) -> Vec<Jet> {
    v.iter().map(|&c| Jet::constant(c, n)).collect()
}

/// Extracts the plain values of a jet vector.
pub fn values(a: &[Jet]) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().map(|j| j.v))
}
