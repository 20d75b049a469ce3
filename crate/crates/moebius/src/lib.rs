//! Numerical Moebius geometry in the light-cone model.
//!
//! Euclidean space `R^N` is realized as the slice `<p, w> = 1` of the light
//! cone of Minkowski space `L^{N+2}`. On top of that model the crate builds
//! sampled parametric immersions with exact second-order jets, measures their
//! fundamental forms and product-net geometry, constructs the classical
//! families of conformally-product immersions (extrinsic products, theta
//! charts, cyclides), and runs Combescure / Christoffel / Ribaucour / Darboux
//! transforms together with residual checks for every identity these
//! transforms are supposed to satisfy.
//!
//! Everything is plain `f64` numerics: no symbolic algebra, no PDE solving.
//! Charts carry analytic jets whenever they are built from closed-form
//! pieces, and fall back to high-order finite differences otherwise.

pub mod chart;
pub mod constructions;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod jet;
pub mod lightcone;
pub mod metric;
pub mod minkowski;
pub mod ode;
pub mod tol;
pub mod transforms;

pub use chart::{AmbientForm, ChartJet, Domain, ImmersionChart, ProductNet};
pub use error::{Error, Result};
pub use jet::Jet;
