//! Regularized harmonic kernels.
//!
//! The free-space kernel `G(y) = -1/(4 pi |y|)` and its gradient are
//! smoothed at a length `delta` by error-function factors. Two smoothing
//! variants are used: the `Near` pair for evaluation at points off the
//! surface, accurate to `O(delta^3)` together with the analytic
//! corrections, and the `On` pair for evaluation at surface points, built
//! so that the leading and subleading moments of the smoothing error
//! vanish, giving `O(delta^5)` before corrections.

use crate::special::erf;
use crate::vec3::Vec3;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
const TWO_OVER_SQRT_PI: f64 = 1.1283791670955125738962;

/// Which smoothing factors the kernels carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `erf(r)` in the single layer and `erf(r) - (2/sqrt(pi)) r e^{-r^2}`
    /// in the gradient.
    Near,
    /// The fifth-order factors for on-surface evaluation.
    On,
}

/// Regularization length and variant.
#[derive(Clone, Copy, Debug)]
pub struct Smoothing {
    pub delta: f64,
    pub variant: Variant,
}

impl Smoothing {
    pub fn near(delta: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        Smoothing {
            delta,
            variant: Variant::Near,
        }
    }

    pub fn on_surface(delta: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        Smoothing {
            delta,
            variant: Variant::On,
        }
    }
}

/// Below this radius ratio the plain factors switch to Taylor series; the
/// omitted terms are O(rho^10), far below double precision here.
const SERIES_CUTOFF: f64 = 1e-2;

/// The subtracted factors cancel catastrophically for small arguments, so
/// they use convergent series out to a much larger radius; at this cutoff
/// the direct formulas lose at most one digit.
const SUBTRACTED_CUTOFF: f64 = 0.35;

/// `erf(rho)/rho`, smooth through zero.
#[inline]
pub fn erf_over_rho(rho: f64) -> f64 {
    if rho < SERIES_CUTOFF {
        let r2 = rho * rho;
        TWO_OVER_SQRT_PI
            * (1.0 - r2 * (1.0 / 3.0 - r2 * (1.0 / 10.0 - r2 * (1.0 / 42.0 - r2 / 216.0))))
    } else {
        erf(rho) / rho
    }
}

/// `s(rho)/rho^3` with `s(r) = erf(r) - (2/sqrt(pi)) r e^{-r^2}`. Since
/// `s'(r) = (4/sqrt(pi)) r^2 e^{-r^2}`, the small-argument series is
/// `(4/sqrt(pi)) sum (-r^2)^n / (n! (2n+3))`.
#[inline]
pub fn s_near_over_rho3(rho: f64) -> f64 {
    if rho < SUBTRACTED_CUTOFF {
        let m = -rho * rho;
        let mut term = 1.0;
        let mut acc = 1.0 / 3.0;
        for n in 1..=16 {
            term *= m / n as f64;
            let add = term / (2 * n + 3) as f64;
            acc += add;
            if add.abs() < 1e-19 {
                break;
            }
        }
        2.0 * TWO_OVER_SQRT_PI * acc
    } else {
        (erf(rho) - TWO_OVER_SQRT_PI * rho * (-rho * rho).exp()) / (rho * rho * rho)
    }
}

/// `s(rho)/rho` for the on-surface single-layer factor
/// `s(r) = erf(r) + (2/(3 sqrt(pi)))(5r - 2r^3) e^{-r^2}`.
#[inline]
pub fn s_on_single_over_rho(rho: f64) -> f64 {
    if rho < SERIES_CUTOFF {
        let r2 = rho * rho;
        TWO_OVER_SQRT_PI
            * (8.0 / 3.0
                - r2 * (8.0 / 3.0 - r2 * (8.0 / 5.0 - r2 * (40.0 / 63.0 - r2 * (5.0 / 27.0)))))
    } else {
        (erf(rho)
            + TWO_OVER_SQRT_PI / 3.0 * (5.0 * rho - 2.0 * rho.powi(3)) * (-rho * rho).exp())
            / rho
    }
}

/// `s(rho)/rho^3` for the on-surface gradient factor
/// `s(r) = erf(r) - (2/sqrt(pi))(r - 2r^3/3) e^{-r^2}`. Since
/// `s'(r) = (2/sqrt(pi)) e^{-r^2} (4r^2 - 4r^4/3)`, the series is
/// `(8/sqrt(pi)) sum (-r^2)^n [1/(2n+3) - r^2/(3(2n+5))] / n!`.
#[inline]
pub fn s_on_grad_over_rho3(rho: f64) -> f64 {
    if rho < SUBTRACTED_CUTOFF {
        let r2 = rho * rho;
        let m = -r2;
        let mut term = 1.0;
        let mut acc = 0.0;
        for n in 0..=16 {
            let add = term * (1.0 / (2 * n + 3) as f64 - r2 / (3 * (2 * n + 5)) as f64);
            acc += add;
            if add.abs() < 1e-19 {
                break;
            }
            term *= m / (n + 1) as f64;
        }
        4.0 * TWO_OVER_SQRT_PI * acc
    } else {
        (erf(rho) - TWO_OVER_SQRT_PI * (rho - 2.0 * rho.powi(3) / 3.0) * (-rho * rho).exp())
            / (rho * rho * rho)
    }
}

/// Both near-variant factors from one `erf` and one `exp` evaluation:
/// returns `(erf(rho)/rho, s(rho)/rho^3)` for the summation hot loops.
#[inline]
pub fn near_factors(rho: f64) -> (f64, f64) {
    if rho < SUBTRACTED_CUTOFF {
        (erf_over_rho(rho), s_near_over_rho3(rho))
    } else {
        let e = erf(rho);
        let g = TWO_OVER_SQRT_PI * rho * (-rho * rho).exp();
        (e / rho, (e - g) / (rho * rho * rho))
    }
}

/// Both on-surface factors from one `erf` and one `exp` evaluation:
/// returns `(s17(rho)/rho, s18(rho)/rho^3)`.
#[inline]
pub fn on_factors(rho: f64) -> (f64, f64) {
    if rho < SUBTRACTED_CUTOFF {
        (s_on_single_over_rho(rho), s_on_grad_over_rho3(rho))
    } else {
        let e = erf(rho);
        let w = (-rho * rho).exp();
        let r3 = rho * rho * rho;
        (
            (e + TWO_OVER_SQRT_PI / 3.0 * (5.0 * rho - 2.0 * r3) * w) / rho,
            (e - TWO_OVER_SQRT_PI * (rho - 2.0 * r3 / 3.0) * w) / r3,
        )
    }
}

/// Regularized single-layer kernel `G_delta(y)`; smooth at `y = 0`.
pub fn single_kernel(y: Vec3, sm: &Smoothing) -> f64 {
    let rho = y.norm() / sm.delta;
    let factor = match sm.variant {
        Variant::Near => erf_over_rho(rho),
        Variant::On => s_on_single_over_rho(rho),
    };
    -factor / (FOUR_PI * sm.delta)
}

/// Regularized gradient `grad G_delta(y)`; zero at `y = 0`.
pub fn grad_kernel(y: Vec3, sm: &Smoothing) -> Vec3 {
    let rho = y.norm() / sm.delta;
    let factor = match sm.variant {
        Variant::Near => s_near_over_rho3(rho),
        Variant::On => s_on_grad_over_rho3(rho),
    };
    y * (factor / (FOUR_PI * sm.delta.powi(3)))
}
