//! Layer potentials on smooth closed implicit surfaces.
//!
//! The crate evaluates single- and double-layer harmonic potentials on and
//! near a closed surface given as the zero set of a smooth level function.
//! The kernels are regularized at a length `delta` tied to the grid spacing,
//! the leading regularization and discretization errors are removed by
//! analytic corrections, and the surface integrals are discretized by a
//! projection quadrature that needs no parametrization of the surface.

pub mod corrections;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod summation;
pub mod kernels;
pub mod linalg;
pub mod pou;
pub mod quad;
pub mod special;
pub mod surface;
pub mod vec3;

pub use pou::PouParams;
pub use quad::{NodeSet, QuadNode};
pub use surface::{
    closest_point, mean_curvature, normal, Cassini, Ellipsoid, LevelSurface, Molecule,
    NearPointFrame, Plane, Torus,
};
pub use vec3::{vec3, Vec3};
