//! Local interpolation of node data around a projection point.
//!
//! The corrections need the density, its surface gradient and Laplacian,
//! and its chart-coordinate derivatives at the projection point `z`, but
//! the density is only known at the quadrature nodes. A quadratic
//! least-squares fit over nearby nodes supplies all of them. The fit is
//! taken in an orthonormal tangent frame at `z` rather than in one of
//! the projection charts: at the foot point the tangent parametrization
//! has zero slope, so the induced metric is the identity, its first
//! derivatives vanish, the surface Laplacian is the plain trace of the
//! fitted Hessian, and the fitted gradient is the surface gradient with
//! no metric corrections. Fitting in a fixed-axis chart instead would
//! multiply the quadratic's truncation error by powers of the chart
//! slope, which grows without bound toward the chart rim.
//!
//! Nodes of other sheets passing near `z` (the far side of a thin body
//! or of a torus hole) are excluded by a three-dimensional distance ball
//! together with a normal-alignment test.

use std::fmt;

use crate::linalg::solve;
use crate::quad::NodeSet;
use crate::surface::{chart_axes, ChartGeometry};
use crate::vec3::Vec3;

/// Stencil radius in grid spacings.
const RADIUS_FACTOR: f64 = 3.0;
/// Fits with fewer nodes than this are rejected; six would determine the
/// quadratic exactly, a couple more keep it overdetermined.
const MIN_STENCIL: usize = 8;
/// Nodes whose normal has a smaller dot product with the normal at `z`
/// belong to another sheet of the surface.
const SHEET_DOT_MIN: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterpError {
    /// Too few same-sheet nodes near the projection point.
    InsufficientStencil { found: usize },
    /// The normal equations were numerically singular.
    SingularFit,
}

impl fmt::Display for InterpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterpError::InsufficientStencil { found } => {
                write!(f, "only {found} stencil nodes, need {MIN_STENCIL}")
            }
            InterpError::SingularFit => write!(f, "singular least-squares system"),
        }
    }
}

impl std::error::Error for InterpError {}

/// Orthonormal tangent basis at a point with unit normal `n`: the
/// coordinate axis least aligned with `n`, projected onto the tangent
/// plane, and its cross product with `n`.
pub fn tangent_frame(n: Vec3) -> (Vec3, Vec3) {
    let mut a = 0;
    for k in 1..3 {
        if n.get(k).abs() < n.get(a).abs() {
            a = k;
        }
    }
    let e = Vec3::axis(a);
    let t1 = (e - n * e.dot(n)).normalized();
    let t2 = n.cross(t1);
    (t1, t2)
}

/// Quadratic model of a node quantity in tangent-plane coordinates at
/// the projection point.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceFit {
    pub value: f64,
    /// First derivatives along the tangent basis vectors.
    pub grad: [f64; 2],
    /// Second derivatives `(d11, d12, d22)` in the tangent basis.
    pub hess: [f64; 3],
    /// The tangent basis used for the fit.
    pub t1: Vec3,
    pub t2: Vec3,
}

impl SurfaceFit {
    /// Surface gradient of the fitted quantity at the projection point.
    pub fn surface_gradient(&self) -> Vec3 {
        self.t1 * self.grad[0] + self.t2 * self.grad[1]
    }

    /// Surface Laplacian of the fitted quantity at the projection
    /// point. In the tangent parametrization the metric is the identity
    /// and its first derivatives vanish there, so this is the trace of
    /// the fitted Hessian.
    pub fn surface_laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }

    /// Derivatives of the fitted quantity with respect to a fixed-axis
    /// chart's in-plane coordinates. The chart's coordinate vector
    /// fields `e_a + f_r e_k` are tangent to the surface, so the
    /// directional derivatives come straight from the surface gradient.
    pub fn chart_derivatives(&self, chart: &ChartGeometry) -> [f64; 2] {
        let g = self.surface_gradient();
        let (a1, a2) = chart_axes(chart.axis);
        let mut d = [0.0; 2];
        for (r, (a, slope)) in [(a1, chart.f1), (a2, chart.f2)].into_iter().enumerate() {
            let mut t = Vec3::axis(a);
            t.set(chart.axis, slope);
            d[r] = g.dot(t);
        }
        d
    }
}

/// Least-squares quadratic fit of `values` (one per node) over the
/// same-sheet nodes within three spacings of `z`. `normal_z` is the
/// surface normal at `z`.
pub fn fit_surface_quadratic(
    nodes: &NodeSet,
    values: &[f64],
    z: Vec3,
    normal_z: Vec3,
) -> Result<SurfaceFit, InterpError> {
    let fits = fit_many(nodes, &[values], z, normal_z)?;
    Ok(fits[0])
}

/// Two fits over the same stencil, assembled in one pass.
pub fn fit_surface_quadratic_pair(
    nodes: &NodeSet,
    first: &[f64],
    second: &[f64],
    z: Vec3,
    normal_z: Vec3,
) -> Result<(SurfaceFit, SurfaceFit), InterpError> {
    let fits = fit_many(nodes, &[first, second], z, normal_z)?;
    Ok((fits[0], fits[1]))
}

fn fit_many(
    nodes: &NodeSet,
    values: &[&[f64]],
    z: Vec3,
    normal_z: Vec3,
) -> Result<Vec<SurfaceFit>, InterpError> {
    for v in values {
        assert_eq!(v.len(), nodes.nodes.len());
    }
    let h = nodes.h;
    let radius = RADIUS_FACTOR * h;
    let (t1, t2) = tangent_frame(normal_z);

    // Candidate nodes from every chart family's cells around z. A node
    // within the stencil ball is within `radius` of z in each in-plane
    // coordinate pair, so the union over the three families covers it.
    let reach = RADIUS_FACTOR.ceil() as i64 + 1;
    let mut cand: Vec<u32> = Vec::new();
    for axis in 0..3 {
        let (a1, a2) = chart_axes(axis);
        let c1 = (z.get(a1) / h).floor() as i64;
        let c2 = (z.get(a2) / h).floor() as i64;
        cand.extend(nodes.chart_nodes_near(axis, c1, c2, reach));
    }
    cand.sort_unstable();
    cand.dedup();

    let mut ata = [[0.0_f64; 6]; 6];
    let mut atb = vec![[0.0_f64; 6]; values.len()];
    let mut found = 0_usize;
    for idx in cand {
        let node = &nodes.nodes[idx as usize];
        if node.normal.dot(normal_z) <= SHEET_DOT_MIN {
            continue;
        }
        let d = node.pos - z;
        if d.norm2() > radius * radius {
            continue;
        }
        let u1 = d.dot(t1) / radius;
        let u2 = d.dot(t2) / radius;
        let row = [1.0, u1, u2, u1 * u2, u1 * u1, u2 * u2];
        for i in 0..6 {
            for j in 0..6 {
                ata[i][j] += row[i] * row[j];
            }
            for (b, v) in atb.iter_mut().zip(values) {
                b[i] += row[i] * v[idx as usize];
            }
        }
        found += 1;
    }
    if found < MIN_STENCIL {
        return Err(InterpError::InsufficientStencil { found });
    }
    let r2 = radius * radius;
    values
        .iter()
        .zip(&atb)
        .map(|(_, b)| {
            let c = solve::<6>(ata, *b).ok_or(InterpError::SingularFit)?;
            Ok(SurfaceFit {
                value: c[0],
                grad: [c[1] / radius, c[2] / radius],
                hess: [2.0 * c[4] / r2, c[3] / r2, 2.0 * c[5] / r2],
                t1,
                t2,
            })
        })
        .collect()
}
