//! Central tolerance table.
//!
//! Every threshold used by the library lives here so that checks stay
//! consistent across modules and the CLI can rescale them in one place.

/// Relative threshold for causal classification: a vector counts as lightlike
/// when `|<v,v>| <= LIGHT_CLASSIFY * max(1, |v|^2_euclid)`.
pub const LIGHT_CLASSIFY: f64 = 1e-10;

/// Relative tolerance on the defining identities of a Moebius frame
/// (`<p0,p0> = 0`, `<w,w> = 0`, `<p0,w> = 1`, A-columns orthonormal).
pub const FRAME: f64 = 1e-10;

/// Precondition tolerance for reflections: `|<v,v> - 1|` must stay below this.
pub const UNIT_SPACELIKE: f64 = 1e-8;

/// Gram-matrix tolerance for orthonormal sets produced by Gram-Schmidt.
pub const GRAM: f64 = 1e-10;

/// Relative threshold under which a Gram-Schmidt residual counts as null.
pub const NULL_RESIDUAL: f64 = 1e-10;

/// Projection onto the Euclidean slice is refused when
/// `|<x,w>| < PROJECTION_SINGULAR * |x|_euclid`.
pub const PROJECTION_SINGULAR: f64 = 1e-9;

/// Tolerance on `<v,v> = 1` for sphere vectors.
pub const SPHERE_UNIT: f64 = 1e-10;

/// Slack on `|<v1,v2>| <= 1` before a sphere pair counts as non-intersecting.
pub const INTERSECT_SLACK: f64 = 1e-9;

/// Relative finite-difference step for chart jets: `h = FD_REL_STEP * extent`.
pub const FD_REL_STEP: f64 = 1e-4;

/// Relative finite-difference step used when differentiating derived fields
/// (fitted mean-curvature normals, transform tensors) over the domain.
pub const FIELD_FD_REL_STEP: f64 = 1e-3;

/// Smallest admissible metric eigenvalue relative to the largest one.
pub const RANK_MIN: f64 = 1e-10;

/// Relative eigenvalue gap separating principal-curvature clusters.
pub const EIGEN_CLUSTER_GAP: f64 = 1e-3;

/// Default fraction by which domains are shrunk away from singular loci.
pub const DOMAIN_MARGIN: f64 = 0.1;

/// Default tolerance for the Combescure compatibility identity.
pub const COMPAT: f64 = 1e-7;

/// Default tolerance for the Christoffel verdict (`S^2 = l^2 I` residual and
/// scalar-multiple detection).
pub const CHRISTOFFEL: f64 = 1e-7;

/// Default tolerance on the Darboux eigenvalue condition.
pub const DARBOUX: f64 = 1e-7;

/// Default first-integral drift target for the transform ODE.
pub const ODE_DRIFT: f64 = 1e-7;

/// Interpolation error budget for grid-backed fields.
pub const INTERP_BUDGET: f64 = 1e-8;
