//! Surface quadrature by projection onto the coordinate planes.
//!
//! For each coordinate axis `k`, the quadrature collects the surface points
//! whose projection along `e_k` lands on the grid lattice `h Z^2` and whose
//! normal satisfies `|n . e_k| >= cos(theta)`. Each such point carries the
//! weight `h^2 zeta_k / |n . e_k|`, where `zeta` is the partition of unity
//! over the three axis charts. Summing node weights times integrand values
//! over the three charts gives a quadrature rule for surface integrals that
//! converges with high order for smooth integrands, without requiring any
//! parametrization of the surface.

use crate::pou::{pou_weights, PouParams};
use crate::surface::{chart_axes, LevelSurface};
use crate::vec3::Vec3;
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("surface bound is not finite; node generation needs a bounded surface")]
    UnboundedSurface,
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("no quadrature nodes found; surface may not intersect the grid")]
    NoNodes,
}

/// One quadrature node: a surface point found on a grid line of one chart.
#[derive(Clone, Copy, Debug)]
pub struct QuadNode {
    /// Position on the surface.
    pub pos: Vec3,
    /// Outward unit normal.
    pub normal: Vec3,
    /// Partition-of-unity weights over the three axis charts; sums to one.
    pub zeta: [f64; 3],
    /// Raw area-element factors `1 / |n . e_k|`, nonzero only for the axis
    /// whose grid line produced the node.
    pub w_axis: [f64; 3],
    /// Which axis lattice the node was found on; exactly one flag is set.
    pub chart_flags: [bool; 3],
    /// Total quadrature weight `h^2 sum_k zeta_k w_axis_k`.
    pub w: f64,
}

impl QuadNode {
    /// Index of the axis whose grid line produced the node.
    pub fn axis(&self) -> usize {
        self.chart_flags.iter().position(|&f| f).unwrap()
    }
}

/// The full node set for one surface at one grid spacing.
pub struct NodeSet {
    pub nodes: Vec<QuadNode>,
    pub h: f64,
    pub pou: PouParams,
    /// Resolution limit `2 min|grad phi| cos(theta) / max ||H phi||`; the
    /// rule needs `h` below this to see every chart sheet separately.
    pub h0: f64,
    /// Lattice index per axis: in-plane integer coordinates of the node's
    /// grid line mapped to node indices, for stencil lookups.
    axis_index: [HashMap<(i64, i64), Vec<u32>>; 3],
}

const ROOT_TOL_FACTOR: f64 = 1e-13;

impl NodeSet {
    /// Generate the node set by marching every grid line of every chart
    /// through the surface and refining each crossing.
    pub fn generate(
        surface: &dyn LevelSurface,
        h: f64,
        pou: PouParams,
    ) -> Result<NodeSet, QuadError> {
        if !(h > 0.0) {
            return Err(QuadError::BadSpacing(h));
        }
        let r = surface.bound();
        if !r.is_finite() {
            return Err(QuadError::UnboundedSurface);
        }
        let mut nodes = Vec::new();
        let mut axis_index: [HashMap<(i64, i64), Vec<u32>>; 3] =
            [HashMap::new(), HashMap::new(), HashMap::new()];
        let jmax = (r / h).ceil() as i64;
        let span = 2.0 * (r + h);
        let tol = ROOT_TOL_FACTOR * span;
        let mut grad_min = f64::INFINITY;
        let mut hess_max = 0.0f64;
        for axis in 0..3 {
            let (a1, a2) = chart_axes(axis);
            for j1 in -jmax..=jmax {
                for j2 in -jmax..=jmax {
                    let c1 = j1 as f64 * h;
                    let c2 = j2 as f64 * h;
                    if c1 * c1 + c2 * c2 > r * r {
                        continue;
                    }
                    let line_point = |t: f64| {
                        let mut p = Vec3::ZERO;
                        p.set(a1, c1);
                        p.set(a2, c2);
                        p.set(axis, t);
                        p
                    };
                    let roots = line_roots(surface, &line_point, axis, r, h, tol);
                    for t in roots {
                        let pos = line_point(t);
                        let g = surface.grad(pos);
                        let n = g / g.norm();
                        let gamma = n.get(axis).abs();
                        if gamma < pou.cos_theta() {
                            continue;
                        }
                        let zeta = pou_weights(n, &pou);
                        let mut w_axis = [0.0; 3];
                        w_axis[axis] = 1.0 / gamma;
                        let mut chart_flags = [false; 3];
                        chart_flags[axis] = true;
                        let idx = nodes.len() as u32;
                        nodes.push(QuadNode {
                            pos,
                            normal: n,
                            zeta,
                            w_axis,
                            chart_flags,
                            w: h * h * zeta[axis] / gamma,
                        });
                        axis_index[axis].entry((j1, j2)).or_default().push(idx);
                        grad_min = grad_min.min(g.norm());
                        let hm = surface.hess(pos);
                        let mut frob = 0.0;
                        for row in &hm {
                            for v in row {
                                frob += v * v;
                            }
                        }
                        hess_max = hess_max.max(frob.sqrt());
                    }
                }
            }
        }
        if nodes.is_empty() {
            return Err(QuadError::NoNodes);
        }
        let h0 = 2.0 * grad_min * pou.cos_theta() / hess_max;
        Ok(NodeSet {
            nodes,
            h,
            pou,
            h0,
            axis_index,
        })
    }

    /// Whether the spacing is below the resolution limit.
    pub fn is_resolved(&self) -> bool {
        self.h < self.h0
    }

    /// Apply the quadrature rule to `f`.
    pub fn integrate<F: Fn(&QuadNode) -> f64>(&self, f: F) -> f64 {
        let mut s = 0.0;
        for node in &self.nodes {
            s += node.w * f(node);
        }
        s
    }

    /// Indices of nodes of chart `axis` whose grid line has in-plane
    /// integer coordinates within `reach` cells of `(i1, i2)`.
    pub fn chart_nodes_near(&self, axis: usize, i1: i64, i2: i64, reach: i64) -> Vec<u32> {
        let mut out = Vec::new();
        for d1 in -reach..=reach {
            for d2 in -reach..=reach {
                if let Some(v) = self.axis_index[axis].get(&(i1 + d1, i2 + d2)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out
    }

    /// Write one line per node: position, normal, partition weights, and
    /// per-axis quadrature weights, in full double precision.
    pub fn write_nodes<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# x y z nx ny nz zeta1 zeta2 zeta3 w1 w2 w3")?;
        for n in &self.nodes {
            writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                n.pos.x,
                n.pos.y,
                n.pos.z,
                n.normal.x,
                n.normal.y,
                n.normal.z,
                n.zeta[0],
                n.zeta[1],
                n.zeta[2],
                n.w_axis[0],
                n.w_axis[1],
                n.w_axis[2],
            )?;
        }
        Ok(())
    }
}

/// All roots of `phi` along one grid line, found by marching at half-cell
/// steps and polishing each bracket with safeguarded Newton steps.
fn line_roots(
    surface: &dyn LevelSurface,
    line_point: &dyn Fn(f64) -> Vec3,
    axis: usize,
    r: f64,
    h: f64,
    tol: f64,
) -> Vec<f64> {
    let step = 0.5 * h;
    let t_end = r + h;
    let n_steps = (2.0 * t_end / step).ceil() as usize;
    let mut roots = Vec::new();
    let mut t_prev = -t_end;
    let mut f_prev = surface.phi(line_point(t_prev));
    for i in 1..=n_steps {
        let t = -t_end + 2.0 * t_end * i as f64 / n_steps as f64;
        let f = surface.phi(line_point(t));
        if f_prev == 0.0 {
            roots.push(t_prev);
        } else if f_prev.signum() != f.signum() && f != 0.0 {
            roots.push(refine_root(surface, line_point, axis, t_prev, t, tol));
        }
        t_prev = t;
        f_prev = f;
    }
    if f_prev == 0.0 {
        roots.push(t_prev);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 10.0 * tol);
    roots
}

/// Newton iteration on the bracket `[lo, hi]`, falling back to bisection
/// whenever a step leaves the bracket or the slope vanishes.
fn refine_root(
    surface: &dyn LevelSurface,
    line_point: &dyn Fn(f64) -> Vec3,
    axis: usize,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    let mut f_lo = surface.phi(line_point(lo));
    debug_assert!(f_lo.signum() != surface.phi(line_point(hi)).signum());
    let mut t = 0.5 * (lo + hi);
    for _ in 0..60 {
        let p = line_point(t);
        let f = surface.phi(p);
        if f == 0.0 {
            return t;
        }
        if f.signum() == f_lo.signum() {
            lo = t;
            f_lo = f;
        } else {
            hi = t;
        }
        if hi - lo <= tol {
            break;
        }
        let slope = surface.grad(p).get(axis);
        let newton = t - f / slope;
        t = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pou::PouParams;
    use crate::surface::{Cassini, Ellipsoid, Molecule, Torus};

    fn sphere_nodes(n: usize) -> NodeSet {
        let s = Ellipsoid::unit_sphere();
        let h = 2.2 / n as f64;
        NodeSet::generate(&s, h, PouParams::default_theta()).unwrap()
    }

    #[test]
    fn sphere_area_converges() {
        let exact = 4.0 * std::f64::consts::PI;
        let err32 = (sphere_nodes(32).integrate(|_| 1.0) - exact).abs() / exact;
        let err64 = (sphere_nodes(64).integrate(|_| 1.0) - exact).abs() / exact;
        assert!(err32 < 1e-3, "N=32 relative error {err32}");
        assert!(err64 < 1e-4, "N=64 relative error {err64}");
        assert!(err32 / err64 > 8.0, "errors {err32} -> {err64}");
    }

    #[test]
    fn torus_area_matches_closed_form() {
        // The partition-of-unity transition zones are compressed by the tube
        // curvature, so the torus reaches its asymptotic rate later than the
        // sphere; the tolerances reflect the measured pre-asymptotic errors.
        let s = Torus { c: 0.7, a: 0.3 };
        let exact = 4.0 * std::f64::consts::PI * std::f64::consts::PI * 0.7 * 0.3;
        let ns = NodeSet::generate(&s, 2.2 / 64.0, PouParams::default_theta()).unwrap();
        let err = (ns.integrate(|_| 1.0) - exact).abs() / exact;
        assert!(err < 1e-3, "torus area relative error {err}");
        let ns2 = NodeSet::generate(&s, 2.2 / 128.0, PouParams::default_theta()).unwrap();
        let err2 = (ns2.integrate(|_| 1.0) - exact).abs() / exact;
        assert!(err2 < 1e-4, "torus area relative error {err2}");
        assert!(err2 < err, "no improvement under refinement");
    }

    #[test]
    fn sphere_moment_integrals() {
        let ns = sphere_nodes(64);
        let pi = std::f64::consts::PI;
        // Odd moment vanishes; z^2 integrates to 4 pi / 3 on the unit sphere.
        let m1 = ns.integrate(|n| n.pos.z);
        let m2 = ns.integrate(|n| n.pos.z * n.pos.z);
        assert!(m1.abs() < 1e-7, "first moment {m1}");
        assert!((m2 - 4.0 * pi / 3.0).abs() < 5e-5, "second moment {m2}");
    }

    #[test]
    fn normal_integral_vanishes_on_all_surfaces() {
        let surfaces: Vec<(&str, Box<dyn LevelSurface>)> = vec![
            (
                "rot-ellipsoid",
                Box::new(Ellipsoid::new(
                    [1.0, 0.8, 0.6],
                    Some(crate::surface::euler_rotation(10.0, 20.0, 30.0)),
                )),
            ),
            (
                "thin-ellipsoid",
                Box::new(Ellipsoid::new([1.0, 0.4, 0.4], None)),
            ),
            ("torus", Box::new(Torus { c: 0.7, a: 0.3 })),
            ("molecule", Box::new(Molecule::tetrahedral())),
            ("cassini", Box::new(Cassini { a: 0.65, b: 0.7 })),
        ];
        for (name, s) in surfaces {
            let ns = NodeSet::generate(s.as_ref(), 2.2 / 48.0, PouParams::default_theta())
                .unwrap();
            for k in 0..3 {
                let m = ns.integrate(|n| n.normal.get(k));
                assert!(m.abs() < 3e-3, "{name}: normal component {k} integral {m}");
            }
        }
    }

    #[test]
    fn nodes_sit_on_surface_and_lattice() {
        let s = Cassini { a: 0.65, b: 0.7 };
        let h = 2.2 / 40.0;
        let ns = NodeSet::generate(&s, h, PouParams::default_theta()).unwrap();
        for node in &ns.nodes {
            assert!(s.phi(node.pos).abs() < 1e-10);
            let zsum: f64 = node.zeta.iter().sum();
            assert!((zsum - 1.0).abs() < 1e-12);
            let axis = node.axis();
            assert!(node.normal.get(axis).abs() >= ns.pou.cos_theta() - 1e-14);
            let (a1, a2) = chart_axes(axis);
            for a in [a1, a2] {
                let q = node.pos.get(a) / h;
                assert!((q - q.round()).abs() < 1e-9, "off-lattice coord {q}");
            }
            // Raw per-axis weights are bounded by 1/cos(theta) and vanish
            // off the discovery axis.
            assert!(node.w_axis[axis] >= 1.0);
            assert!(node.w_axis[axis] <= 1.0 / ns.pou.cos_theta() + 1e-12);
            for k in 0..3 {
                if k != axis {
                    assert_eq!(node.w_axis[k], 0.0);
                }
            }
            let w_want = h * h * node.zeta[axis] * node.w_axis[axis];
            assert!((node.w - w_want).abs() <= 1e-18 + 1e-15 * w_want);
        }
    }

    #[test]
    fn no_duplicate_roots_per_line() {
        let s = Ellipsoid::new([1.0, 0.4, 0.4], None);
        let h = 2.2 / 48.0;
        let ns = NodeSet::generate(&s, h, PouParams::default_theta()).unwrap();
        let mut per_line: HashMap<(usize, i64, i64), Vec<f64>> = HashMap::new();
        for node in &ns.nodes {
            let axis = node.axis();
            let (a1, a2) = chart_axes(axis);
            let key = (
                axis,
                (node.pos.get(a1) / h).round() as i64,
                (node.pos.get(a2) / h).round() as i64,
            );
            per_line.entry(key).or_default().push(node.pos.get(axis));
        }
        for (key, mut roots) in per_line {
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in roots.windows(2) {
                assert!(
                    pair[1] - pair[0] > 1e-9,
                    "distinct roots collide on line {key:?}"
                );
            }
        }
    }

    #[test]
    fn sphere_resolution_limit() {
        // |grad phi| = 2 on the sphere and ||H||_F = 2 sqrt(3), so the
        // limit is 2 cos(theta) / sqrt(3).
        let ns = sphere_nodes(32);
        let want = 2.0 * 70f64.to_radians().cos() / 3f64.sqrt();
        assert!((ns.h0 - want).abs() < 1e-12, "h0 {} vs {want}", ns.h0);
        assert!(ns.is_resolved());
    }

    #[test]
    fn chart_index_finds_neighbors() {
        let ns = sphere_nodes(32);
        let node = ns
            .nodes
            .iter()
            .position(|n| n.chart_flags[2] && n.normal.z > 0.99)
            .unwrap();
        let h = ns.h;
        let p = ns.nodes[node].pos;
        let near = ns.chart_nodes_near(
            2,
            (p.x / h).round() as i64,
            (p.y / h).round() as i64,
            2,
        );
        assert!(near.contains(&(node as u32)));
        assert!(near.len() >= 9, "only {} neighbors", near.len());
        for idx in near {
            let q = ns.nodes[idx as usize];
            assert!(q.chart_flags[2]);
            let d2 = (q.pos.x - p.x).powi(2) + (q.pos.y - p.y).powi(2);
            assert!(d2 <= (2.0 * h * 1.5).powi(2) * 2.0);
        }
    }

    #[test]
    fn node_dump_round_trips() {
        let ns = sphere_nodes(16);
        let mut buf = Vec::new();
        ns.write_nodes(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        let mut count = 0;
        for (line, node) in lines.zip(&ns.nodes) {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse().unwrap())
                .collect();
            assert_eq!(vals.len(), 12);
            assert_eq!(vals[0], node.pos.x);
            assert_eq!(vals[5], node.normal.z);
            assert_eq!(vals[9], node.w_axis[0]);
            count += 1;
        }
        assert_eq!(count, ns.nodes.len());
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = Ellipsoid::unit_sphere();
        assert!(matches!(
            NodeSet::generate(&s, 0.0, PouParams::default_theta()),
            Err(QuadError::BadSpacing(_))
        ));
        let p = crate::surface::Plane;
        assert!(matches!(
            NodeSet::generate(&p, 0.1, PouParams::default_theta()),
            Err(QuadError::UnboundedSurface)
        ));
    }
}
