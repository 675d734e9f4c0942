//! Smooth closed surfaces given implicitly as zero sets of a level function
//! `phi` with analytic gradient and Hessian, `phi < 0` inside and `phi > 0`
//! outside, together with the differential geometry the quadrature and the
//! corrections need: unit normals, mean curvature, closest points, and
//! Monge-patch metrics over the coordinate charts.

use crate::linalg::solve;
use crate::vec3::{mat_mul, mat_transpose, mat_vec, vec3, Mat3, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("closest point iteration did not converge from {from:?} (residual {residual:e})")]
    ClosestPointDiverged { from: [f64; 3], residual: f64 },
    #[error("chart axis {axis} is degenerate at {at:?}: |n.e_k| = {gamma:e}")]
    DegenerateChart { axis: usize, at: [f64; 3], gamma: f64 },
}

/// Implicit surface `{ phi = 0 }` with `phi` smooth near the zero set,
/// negative inside and positive outside.
pub trait LevelSurface {
    fn phi(&self, p: Vec3) -> f64;
    fn grad(&self, p: Vec3) -> Vec3;
    fn hess(&self, p: Vec3) -> Mat3;

    /// Radius of a ball centered at the origin containing the surface.
    fn bound(&self) -> f64;
}

/// Outward unit normal `grad phi / |grad phi|`.
pub fn normal(s: &dyn LevelSurface, p: Vec3) -> Vec3 {
    s.grad(p).normalized()
}

/// Mean curvature with the convention `2H = -div n`, so the unit sphere has
/// `H = -1`.
pub fn mean_curvature(s: &dyn LevelSurface, p: Vec3) -> f64 {
    let g = s.grad(p);
    let h = s.hess(p);
    let g2 = g.norm2();
    let trace = h[0][0] + h[1][1] + h[2][2];
    let ghg = g.dot(mat_vec(&h, g));
    -(trace * g2 - ghg) / (2.0 * g2 * g2.sqrt())
}

/// Foot of the nearest surface point together with signed distance data.
#[derive(Clone, Copy, Debug)]
pub struct NearPointFrame {
    /// Closest point on the surface.
    pub z: Vec3,
    /// Signed distance, negative inside.
    pub b: f64,
    /// Outward unit normal at `z`.
    pub n: Vec3,
    /// `b / delta`.
    pub lambda: f64,
    /// Mean curvature at `z`.
    pub mean_curv: f64,
}

const CLOSEST_TOL: f64 = 1e-12;
const CLOSEST_MAX_ITER: usize = 50;

/// Closest surface point to `x`, by damped Newton iteration on the
/// Lagrange system `z + t grad phi(z) = x`, `phi(z) = 0` in the four
/// unknowns `(z, t)`, started from one linearization step of `phi`.
pub fn closest_point(
    s: &dyn LevelSurface,
    x: Vec3,
    delta: f64,
) -> Result<NearPointFrame, GeomError> {
    let phi_x = s.phi(x);
    let g_x = s.grad(x);
    let g2_x = g_x.norm2();
    let mut z = x - g_x * (phi_x / g2_x);
    let mut t = phi_x / g2_x;
    let scale = 1.0 + x.norm();

    let residual = |z: Vec3, t: f64| -> (Vec3, f64, Vec3, f64) {
        let g = s.grad(z);
        let r1 = z + g * t - x;
        let r2 = s.phi(z);
        let gn = g.norm();
        (r1, r2, g, gn)
    };

    let (mut r1, mut r2, mut g, mut gn) = residual(z, t);
    let mut res2 = r1.norm2() + r2 * r2;
    for _ in 0..CLOSEST_MAX_ITER {
        if r2.abs() <= CLOSEST_TOL * gn * scale && r1.norm() <= CLOSEST_TOL * scale {
            let n = g / gn;
            let b = (x - z).norm() * if phi_x < 0.0 { -1.0 } else { 1.0 };
            return Ok(NearPointFrame {
                z,
                b,
                n,
                lambda: b / delta,
                mean_curv: mean_curvature(s, z),
            });
        }
        let h = s.hess(z);
        let mut a = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = t * h[i][j] + if i == j { 1.0 } else { 0.0 };
            }
            a[i][3] = g.get(i);
            a[3][i] = g.get(i);
        }
        let rhs = [-r1.x, -r1.y, -r1.z, -r2];
        let Some(step) = solve(a, rhs) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let z_try = z + vec3(step[0], step[1], step[2]) * alpha;
            let t_try = t + step[3] * alpha;
            let (r1t, r2t, gt, gnt) = residual(z_try, t_try);
            let res2_try = r1t.norm2() + r2t * r2t;
            if res2_try < res2 {
                z = z_try;
                t = t_try;
                r1 = r1t;
                r2 = r2t;
                g = gt;
                gn = gnt;
                res2 = res2_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(GeomError::ClosestPointDiverged {
        from: x.to_array(),
        residual: res2.sqrt(),
    })
}

/// In-plane coordinate axes of chart `k`: the two coordinates kept by the
/// projection that drops `x_k`, in increasing order.
pub fn chart_axes(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("axis index {k} out of range"),
    }
}

/// Monge patch data of chart `k` at a surface point: writing the surface as
/// `x_k = f(alpha)` over the in-plane coordinates `alpha`, the first and
/// second derivatives of `f`, the induced metric, and its inverse.
#[derive(Clone, Copy, Debug)]
pub struct ChartGeometry {
    pub axis: usize,
    pub f1: f64,
    pub f2: f64,
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
    /// `det g = 1 + f1^2 + f2^2`.
    pub gdet: f64,
    pub g: [[f64; 2]; 2],
    pub ginv: [[f64; 2]; 2],
    /// `|n . e_k| = 1/sqrt(det g)`.
    pub gamma: f64,
    /// Whether `phi` increases with `x_k` at the point (`x_k > f` outside).
    pub upward: bool,
}

impl ChartGeometry {
    /// Mean curvature from the Monge form, same convention as
    /// [`mean_curvature`].
    pub fn monge_mean_curvature(&self) -> f64 {
        let num = (1.0 + self.f2 * self.f2) * self.f11 + (1.0 + self.f1 * self.f1) * self.f22
            - 2.0 * self.f1 * self.f2 * self.f12;
        let h = 0.5 * num / self.gdet.powf(1.5);
        if self.upward {
            h
        } else {
            -h
        }
    }

    /// First-order coefficients of the surface Laplacian in chart
    /// coordinates: `lap_S u = sum_ij ginv_ij d_i d_j u + sum_i c_i d_i u`.
    pub fn laplacian_coeffs(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let num = (1.0 + self.f2 * self.f2) * self.f11 + (1.0 + self.f1 * self.f1) * self.f22
            - 2.0 * self.f1 * self.f2 * self.f12;
        let fac = -num / (self.gdet * self.gdet);
        (self.ginv, [fac * self.f1, fac * self.f2])
    }

    /// Fractional parts `(alpha_1/h mod 1, alpha_2/h mod 1)` of the in-plane
    /// coordinates of `z` relative to the grid.
    pub fn nu(&self, z: Vec3, h: f64) -> [f64; 2] {
        let (a1, a2) = chart_axes(self.axis);
        let wrap = |v: f64| {
            let f = (v / h).rem_euclid(1.0);
            if f >= 1.0 {
                0.0
            } else {
                f
            }
        };
        [wrap(z.get(a1)), wrap(z.get(a2))]
    }
}

/// Chart geometry of axis `k` at a surface point `z`, from the implicit
/// function theorem applied to `phi`.
pub fn chart_geometry(
    s: &dyn LevelSurface,
    z: Vec3,
    axis: usize,
) -> Result<ChartGeometry, GeomError> {
    let g = s.grad(z);
    let h = s.hess(z);
    let (a1, a2) = chart_axes(axis);
    let pk = g.get(axis);
    let gamma = pk.abs() / g.norm();
    if gamma < 1e-8 {
        return Err(GeomError::DegenerateChart {
            axis,
            at: z.to_array(),
            gamma,
        });
    }
    let f1 = -g.get(a1) / pk;
    let f2 = -g.get(a2) / pk;
    let second = |ai: usize, aj: usize, fi: f64, fj: f64| -> f64 {
        -(h[ai][aj] + h[ai][axis] * fj + h[axis][aj] * fi + h[axis][axis] * fi * fj) / pk
    };
    let f11 = second(a1, a1, f1, f1);
    let f12 = second(a1, a2, f1, f2);
    let f22 = second(a2, a2, f2, f2);
    let gdet = 1.0 + f1 * f1 + f2 * f2;
    let gm = [[1.0 + f1 * f1, f1 * f2], [f1 * f2, 1.0 + f2 * f2]];
    let ginv = [
        [(1.0 + f2 * f2) / gdet, -f1 * f2 / gdet],
        [-f1 * f2 / gdet, (1.0 + f1 * f1) / gdet],
    ];
    Ok(ChartGeometry {
        axis,
        f1,
        f2,
        f11,
        f12,
        f22,
        gdet,
        g: gm,
        ginv,
        gamma: 1.0 / gdet.sqrt(),
        upward: pk > 0.0,
    })
}

/// Rotation by the z-y-x Euler angles (degrees), applied as
/// `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_rotation(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Mat3 {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let (sr, cr) = roll_deg.to_radians().sin_cos();
    let rz = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// Ellipsoid `sum (u_i/s_i)^2 = 1` in body coordinates `u = R^T x`,
/// optionally rotated by `R`.
pub struct Ellipsoid {
    rot: Mat3,
    rot_t: Mat3,
    inv_s2: [f64; 3],
    bound: f64,
    hess: Mat3,
}

impl Ellipsoid {
    pub fn new(semi: [f64; 3], rot: Option<Mat3>) -> Self {
        let rot = rot.unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let rot_t = mat_transpose(&rot);
        let inv_s2 = [
            1.0 / (semi[0] * semi[0]),
            1.0 / (semi[1] * semi[1]),
            1.0 / (semi[2] * semi[2]),
        ];
        let d = [
            [2.0 * inv_s2[0], 0.0, 0.0],
            [0.0, 2.0 * inv_s2[1], 0.0],
            [0.0, 0.0, 2.0 * inv_s2[2]],
        ];
        let hess = mat_mul(&rot, &mat_mul(&d, &rot_t));
        let bound = semi[0].max(semi[1]).max(semi[2]);
        Self {
            rot,
            rot_t,
            inv_s2,
            bound,
            hess,
        }
    }

    pub fn unit_sphere() -> Self {
        Self::new([1.0, 1.0, 1.0], None)
    }
}

impl LevelSurface for Ellipsoid {
    fn phi(&self, p: Vec3) -> f64 {
        let u = mat_vec(&self.rot_t, p);
        self.inv_s2[0] * u.x * u.x + self.inv_s2[1] * u.y * u.y + self.inv_s2[2] * u.z * u.z
            - 1.0
    }

    fn grad(&self, p: Vec3) -> Vec3 {
        let u = mat_vec(&self.rot_t, p);
        let gu = vec3(
            2.0 * self.inv_s2[0] * u.x,
            2.0 * self.inv_s2[1] * u.y,
            2.0 * self.inv_s2[2] * u.z,
        );
        mat_vec(&self.rot, gu)
    }

    fn hess(&self, _p: Vec3) -> Mat3 {
        self.hess
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Torus `(sqrt(x^2 + y^2) - c)^2 + z^2 = a^2` around the z axis.
pub struct Torus {
    pub c: f64,
    pub a: f64,
}

impl LevelSurface for Torus {
    fn phi(&self, p: Vec3) -> f64 {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let d = rho - self.c;
        d * d + p.z * p.z - self.a * self.a
    }

    fn grad(&self, p: Vec3) -> Vec3 {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let f = 2.0 * (rho - self.c) / rho;
        vec3(f * p.x, f * p.y, 2.0 * p.z)
    }

    fn hess(&self, p: Vec3) -> Mat3 {
        let rho2 = p.x * p.x + p.y * p.y;
        let rho = rho2.sqrt();
        let rho3 = rho2 * rho;
        let hxx = 2.0 * (p.x * p.x / rho2 + (rho - self.c) * p.y * p.y / rho3);
        let hyy = 2.0 * (p.y * p.y / rho2 + (rho - self.c) * p.x * p.x / rho3);
        let hxy = 2.0 * p.x * p.y * self.c / rho3;
        [[hxx, hxy, 0.0], [hxy, hyy, 0.0], [0.0, 0.0, 2.0]]
    }

    fn bound(&self) -> f64 {
        self.c + self.a
    }
}

/// Sum-of-Gaussians molecular surface `c - sum_k exp(-|x - x_k|^2 / r^2) = 0`.
pub struct Molecule {
    pub centers: Vec<Vec3>,
    pub r: f64,
    pub c: f64,
    bound: f64,
}

impl Molecule {
    pub fn new(centers: Vec<Vec3>, r: f64, c: f64) -> Self {
        let reach = r * (centers.len() as f64 / c).ln().sqrt();
        let bound = centers
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
            + reach;
        Self {
            centers,
            r,
            c,
            bound,
        }
    }

    /// The four-atom tetrahedral molecule with `r = 0.5`, `c = 0.6`.
    pub fn tetrahedral() -> Self {
        let s3 = 3.0f64.sqrt();
        let s6 = 6.0f64.sqrt();
        Self::new(
            vec![
                vec3(s3 / 3.0, 0.0, -s6 / 12.0),
                vec3(-s3 / 6.0, 0.5, -s6 / 12.0),
                vec3(-s3 / 6.0, -0.5, -s6 / 12.0),
                vec3(0.0, 0.0, s6 / 4.0),
            ],
            0.5,
            0.6,
        )
    }
}

impl LevelSurface for Molecule {
    fn phi(&self, p: Vec3) -> f64 {
        let inv_r2 = 1.0 / (self.r * self.r);
        let mut s = 0.0;
        for ctr in &self.centers {
            s += (-(p - *ctr).norm2() * inv_r2).exp();
        }
        self.c - s
    }

    fn grad(&self, p: Vec3) -> Vec3 {
        let inv_r2 = 1.0 / (self.r * self.r);
        let mut g = Vec3::ZERO;
        for ctr in &self.centers {
            let d = p - *ctr;
            let e = (-d.norm2() * inv_r2).exp();
            g += d * (2.0 * inv_r2 * e);
        }
        g
    }

    fn hess(&self, p: Vec3) -> Mat3 {
        let inv_r2 = 1.0 / (self.r * self.r);
        let mut h = [[0.0; 3]; 3];
        for ctr in &self.centers {
            let d = p - *ctr;
            let e = (-d.norm2() * inv_r2).exp();
            let da = d.to_array();
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = -4.0 * inv_r2 * inv_r2 * da[i] * da[j] * e;
                    if i == j {
                        v += 2.0 * inv_r2 * e;
                    }
                    h[i][j] += v;
                }
            }
        }
        h
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Cassini-oval surface `(x^2+y^2+z^2+a^2)^2 - 4a^2(x^2+y^2) = b^4`.
pub struct Cassini {
    pub a: f64,
    pub b: f64,
}

impl LevelSurface for Cassini {
    fn phi(&self, p: Vec3) -> f64 {
        let a2 = self.a * self.a;
        let q = p.norm2() + a2;
        q * q - 4.0 * a2 * (p.x * p.x + p.y * p.y) - self.b.powi(4)
    }

    fn grad(&self, p: Vec3) -> Vec3 {
        let a2 = self.a * self.a;
        let q = p.norm2();
        vec3(
            4.0 * p.x * (q - a2),
            4.0 * p.y * (q - a2),
            4.0 * p.z * (q + a2),
        )
    }

    fn hess(&self, p: Vec3) -> Mat3 {
        let a2 = self.a * self.a;
        let q = p.norm2();
        let pa = p.to_array();
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = 8.0 * pa[i] * pa[j];
            }
            h[i][i] += 4.0 * (q + if i == 2 { a2 } else { -a2 });
        }
        h
    }

    fn bound(&self) -> f64 {
        (self.a * self.a + self.b * self.b).sqrt() * 1.001
    }
}

/// The coordinate plane `x_3 = 0`, used as a reference geometry in tests
/// of the correction formulas.
pub struct Plane;

impl LevelSurface for Plane {
    fn phi(&self, p: Vec3) -> f64 {
        p.z
    }

    fn grad(&self, _p: Vec3) -> Vec3 {
        vec3(0.0, 0.0, 1.0)
    }

    fn hess(&self, _p: Vec3) -> Mat3 {
        [[0.0; 3]; 3]
    }

    fn bound(&self) -> f64 {
        f64::INFINITY
    }
}
