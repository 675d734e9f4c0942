//! Analytic corrections added to the regularized layer sums.
//!
//! Two effects are corrected separately. The smoothing corrections (`t1`
//! for the single layer, `n1` for the double layer) remove the leading
//! error made by replacing the singular kernel with its regularized
//! version. The discretization corrections (`t2`, `n2`, and `t2_on` for
//! evaluation on the surface) remove the leading error of the lattice
//! quadrature itself; they come from Poisson summation and decay like
//! `exp(-(pi delta/h)^2)`, so they matter mostly when `delta` is close
//! to `h`.
//!
//! All corrections are evaluated at the projection point `z` of the
//! target onto the surface, with `lambda = b/delta` the signed distance
//! in smoothing lengths (`b < 0` inside the body).

use std::f64::consts::PI;

use crate::special::{erfc, erfcx};

/// Hard cap on the lattice sum radius; the ring bound normally stops the
/// sums far earlier.
const LATTICE_MAX: i64 = 20;

/// A ring of lattice terms is dropped once its bound falls below this
/// fraction of the accumulated sum.
const RING_TOL: f64 = 1e-17;

/// Data for one coordinate chart active at the projection point: its
/// partition weight, the inverse metric tensor, the fractional lattice
/// offset, and optionally the chart-coordinate derivatives of the
/// density (used only by `n2`; a chart whose derivatives could not be
/// obtained contributes zero there).
#[derive(Clone, Copy, Debug)]
pub struct ChartCorrection {
    pub zeta: f64,
    pub ginv: [[f64; 2]; 2],
    pub nu: [f64; 2],
    pub density_derivs: Option<[f64; 2]>,
}

/// `E(p, q) = e^{2pq} erfc(p+q) + e^{-2pq} erfc(-p+q)`, computed without
/// overflow. The function is even in `p`, and for canonical `p >= 0`
/// both exponential factors are rewritten through `erfcx` where the
/// direct product would under- or overflow.
pub fn e_factor(p: f64, q: f64) -> f64 {
    let p = p.abs();
    let damp = (-(p * p + q * q)).exp();
    let first = damp * erfcx(p + q);
    let second = if q >= p {
        damp * erfcx(q - p)
    } else {
        (-2.0 * p * q).exp() * erfc(q - p)
    };
    first + second
}

/// The radial factor `|lambda| erfc|lambda| - e^{-lambda^2}/sqrt(pi)`
/// shared by `t1` and `n1`.
fn lambda_bracket(lambda: f64) -> f64 {
    let a = lambda.abs();
    a * erfc(a) - (-(lambda * lambda)).exp() / PI.sqrt()
}

/// Smoothing correction for the single layer potential near the surface:
/// `psi` is the density at `z`, `mean_curv` the mean curvature there.
pub fn t1(psi: f64, delta: f64, lambda: f64, mean_curv: f64) -> f64 {
    0.5 * delta * (1.0 + mean_curv * lambda * delta) * psi * lambda_bracket(lambda)
}

/// Smoothing correction for the double layer potential near the surface:
/// `lap_density` is the surface Laplacian of the density at `z`.
pub fn n1(lap_density: f64, delta: f64, lambda: f64) -> f64 {
    delta * delta * lap_density * 0.25 * lambda * lambda_bracket(lambda)
}

/// `||n||` in the inverse metric.
fn lattice_norm(ginv: &[[f64; 2]; 2], n1: f64, n2: f64) -> f64 {
    (ginv[0][0] * n1 * n1 + 2.0 * ginv[0][1] * n1 * n2 + ginv[1][1] * n2 * n2).sqrt()
}

/// Square root of the smallest eigenvalue of `ginv`, the worst-case
/// shrink factor of `||n||` relative to `|n|`.
fn min_stretch(ginv: &[[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (ginv[0][0] + ginv[1][1]);
    let disc = (0.5 * (ginv[0][0] - ginv[1][1])).hypot(ginv[0][1]);
    (half_tr - disc).max(0.0).sqrt()
}

/// Visits the half-lattice ring `max(|n1|, |n2|) = m` restricted to
/// `n2 > 0 or (n2 = 0 and n1 > 0)`.
fn for_ring(m: i64, mut f: impl FnMut(f64, f64)) {
    for n1 in -m..=m {
        f(n1 as f64, m as f64);
    }
    for n2 in 1..m {
        f(-m as f64, n2 as f64);
        f(m as f64, n2 as f64);
    }
    f(m as f64, 0.0);
}

/// One chart's lattice sum for `t2`:
/// `sum over half lattice of cos(2 pi n.nu) E(lambda, ratio ||n||) / ||n||`
/// with `ratio = pi delta / h`.
fn t2_chart_sum(ratio: f64, lambda: f64, chart: &ChartCorrection) -> f64 {
    let stretch = min_stretch(&chart.ginv);
    let mut acc = 0.0;
    for m in 1..=LATTICE_MAX {
        let mut ring = 0.0;
        for_ring(m, |n1, n2| {
            let nn = lattice_norm(&chart.ginv, n1, n2);
            let phase = 2.0 * PI * (n1 * chart.nu[0] + n2 * chart.nu[1]);
            ring += phase.cos() * e_factor(lambda, ratio * nn) / nn;
        });
        acc += ring;
        // E(p, q) <= 2 e^{-(p^2+q^2)} for q >= p and <= 3 e^{-q^2} in
        // general, so the next ring is bounded by its term count times
        // 3 e^{-q_min^2} / ||n||_min.
        let nn_min = (m + 1) as f64 * stretch;
        let q_min = ratio * nn_min;
        let bound = (4 * (m + 1) + 2) as f64 * 3.0 * (-q_min * q_min).exp() / nn_min;
        if bound < RING_TOL * (1.0 + acc.abs()) {
            break;
        }
    }
    acc
}

/// Discretization correction for the single layer potential near the
/// surface. `charts` lists the charts active at `z`.
pub fn t2(psi: f64, delta: f64, h: f64, lambda: f64, charts: &[ChartCorrection]) -> f64 {
    let ratio = PI * delta / h;
    let mut total = 0.0;
    for chart in charts {
        if chart.zeta == 0.0 {
            continue;
        }
        total += chart.zeta * t2_chart_sum(ratio, lambda, chart);
    }
    h / (4.0 * PI) * psi * total
}

/// Discretization correction for the double layer potential near the
/// surface. Uses each chart's density derivatives; charts that carry
/// `None` contribute nothing.
pub fn n2(delta: f64, h: f64, lambda: f64, charts: &[ChartCorrection]) -> f64 {
    let ratio = PI * delta / h;
    let mut total = 0.0;
    for chart in charts {
        let Some(derivs) = chart.density_derivs else {
            continue;
        };
        if chart.zeta == 0.0 {
            continue;
        }
        let stretch = min_stretch(&chart.ginv);
        let mut c = [0.0_f64; 2];
        let mut size = 0.0_f64;
        for m in 1..=LATTICE_MAX {
            let mut ring = [0.0_f64; 2];
            for_ring(m, |n1, n2| {
                let nn = lattice_norm(&chart.ginv, n1, n2);
                let phase = 2.0 * PI * (n1 * chart.nu[0] + n2 * chart.nu[1]);
                let common = phase.sin() * e_factor(lambda, ratio * nn) / nn;
                ring[0] += common * (chart.ginv[0][0] * n1 + chart.ginv[0][1] * n2);
                ring[1] += common * (chart.ginv[1][0] * n1 + chart.ginv[1][1] * n2);
            });
            c[0] += ring[0];
            c[1] += ring[1];
            size = size.max(c[0].abs()).max(c[1].abs());
            // Same ring bound as in t2 with an extra |ginv n| <= ||n||
            // times sqrt of the largest eigenvalue; bounding crudely by
            // the trace keeps the test simple and safe.
            let nn_min = (m + 1) as f64 * stretch;
            let q_min = ratio * nn_min;
            let grow = chart.ginv[0][0] + chart.ginv[1][1];
            let bound =
                (4 * (m + 1) + 2) as f64 * 3.0 * grow * (m + 1) as f64 * (-q_min * q_min).exp()
                    / nn_min;
            if bound < RING_TOL * (1.0 + size) {
                break;
            }
        }
        total += chart.zeta * (c[0] * derivs[0] + c[1] * derivs[1]);
    }
    -0.5 * delta * lambda * total
}

/// Radial factor of the on-surface discretization correction. This is
/// the Hankel transform of the plane slice of the fifth-order kernel:
/// `pi` times the integral of `s(u) J0(xi u)` over `u > 0`, which
/// evaluates in closed form using
/// `int erf(u) J0(xi u) du = erfc(xi/2) / xi`.
fn f_on(xi: f64) -> f64 {
    PI / xi * erfc(0.5 * xi) + PI.sqrt() * (-0.25 * xi * xi).exp() * (1.0 + xi * xi / 6.0)
}

/// Discretization correction for the single layer potential evaluated on
/// the surface with the fifth-order kernel. No smoothing correction is
/// needed there.
pub fn t2_on(psi: f64, delta: f64, h: f64, charts: &[ChartCorrection]) -> f64 {
    let dh = delta / h;
    let mut total = 0.0;
    for chart in charts {
        if chart.zeta == 0.0 {
            continue;
        }
        let stretch = min_stretch(&chart.ginv);
        let mut acc = 0.0;
        for m in 1..=LATTICE_MAX {
            let mut ring = 0.0;
            for_ring(m, |n1, n2| {
                let nn = lattice_norm(&chart.ginv, n1, n2);
                let phase = 2.0 * PI * (n1 * chart.nu[0] + n2 * chart.nu[1]);
                ring += phase.cos() * f_on(2.0 * PI * nn * dh);
            });
            acc += ring;
            // erfc(xi/2) <= e^{-xi^2/4}, so F(xi) is bounded by
            // e^{-xi^2/4} (pi/xi + sqrt(pi) (delta/h) (1 + xi^2/6)),
            // decreasing in xi once xi^2 >= 2; the smallest xi on ring 2
            // already exceeds that for theta up to 85 degrees.
            let xi_min = 2.0 * PI * (m + 1) as f64 * stretch * dh;
            let envelope = (-0.25 * xi_min * xi_min).exp()
                * (PI / xi_min + PI.sqrt() * (1.0 + xi_min * xi_min / 6.0));
            let bound = (4 * (m + 1) + 2) as f64 * envelope;
            if m >= 2 && bound < RING_TOL * (1.0 + acc.abs()) {
                break;
            }
        }
        total += chart.zeta * acc;
    }
    delta / PI * psi * total
}
