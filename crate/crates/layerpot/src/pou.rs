//! Partition of unity on the unit sphere of normal directions.
//!
//! Each coordinate axis `e_k` owns a cap of directions with
//! `arccos(|u . e_k|) < theta`. The smooth bump
//! `b(r) = exp(r^2 / (r^2 - 1))` on `|r| < 1` is composed with the angular
//! distance to each axis and normalized, giving weights `sigma_k(u)` that sum
//! to one wherever at least one cap covers `u`. That is guaranteed for
//! `theta > arccos(1/sqrt(3))`, since every unit vector has a component of
//! magnitude at least `1/sqrt(3)`.

use crate::vec3::Vec3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PouError {
    #[error("theta = {0} degrees outside the supported range [56, 85]")]
    ThetaOutOfRange(f64),
}

/// Angular cutoff for the three axis caps.
#[derive(Clone, Copy, Debug)]
pub struct PouParams {
    theta: f64,
    cos_theta: f64,
}

impl PouParams {
    /// Default cap half-angle of 70 degrees.
    pub fn default_theta() -> Self {
        Self::new_degrees(70.0).unwrap()
    }

    pub fn new_degrees(deg: f64) -> Result<Self, PouError> {
        if !(56.0..=85.0).contains(&deg) {
            return Err(PouError::ThetaOutOfRange(deg));
        }
        let theta = deg.to_radians();
        Ok(Self {
            theta,
            cos_theta: theta.cos(),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cos_theta(&self) -> f64 {
        self.cos_theta
    }
}

/// `exp(r^2/(r^2-1))` for `|r| < 1`, zero outside; infinitely smooth.
pub fn bump(r: f64) -> f64 {
    let r2 = r * r;
    if r2 >= 1.0 {
        0.0
    } else {
        (r2 / (r2 - 1.0)).exp()
    }
}

/// Normalized cap weights `(sigma_1, sigma_2, sigma_3)` for a unit vector.
pub fn pou_weights(u: Vec3, params: &PouParams) -> [f64; 3] {
    let mut b = [0.0; 3];
    let mut total = 0.0;
    for k in 0..3 {
        let c = u.get(k).abs().min(1.0);
        let w = c.acos();
        b[k] = bump(w / params.theta);
        total += b[k];
    }
    debug_assert!(total > 0.0, "direction {u:?} not covered by any cap");
    [b[0] / total, b[1] / total, b[2] / total]
}
