//! Poincaré-ball geometry at the origin.
//!
//! All scalar context features fed to the selection agent are projected into
//! a Poincaré ball of curvature −c (c > 0) before they reach the network.
//! Only the origin-anchored maps are needed:
//!
//! - `exp_map_origin`: v ↦ tanh(√c·‖v‖) · v / (√c·‖v‖)
//! - `log_map_origin`: y ↦ artanh(√c·‖y‖) · y / (√c·‖y‖)
//! - `metric_factor`:  v ↦ (2 / (1 − c·‖v‖²))²
//!
//! The open ball has Euclidean radius 1/√c. Points are only considered
//! valid strictly inside a safety margin ([`BALL_MARGIN`]) so that the log
//! map and the metric factor stay well conditioned. Norms below
//! [`ZERO_NORM_EPS`] take the removable-singularity branch and are returned
//! unchanged. All computations are f64.

use crate::error::{Error, Result};

/// Relative interior margin: valid points satisfy √c·‖v‖ < 1 − BALL_MARGIN.
pub const BALL_MARGIN: f64 = 1e-9;

/// Below this Euclidean norm the maps return their argument unchanged.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Positive curvature magnitude c of a ball with curvature −c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    /// A curvature magnitude; must be finite and strictly positive.
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "curvature must be finite and > 0, got {c}"
            )));
        }
        Ok(Curvature(c))
    }

    /// Curvature magnitude 1 (unit ball).
    pub fn unit() -> Self {
        Curvature(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Euclidean radius 1/√c of the ball.
    pub fn radius(self) -> f64 {
        1.0 / self.0.sqrt()
    }
}

/// A point validated to lie strictly inside the ball (margin included).
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

impl BallPoint {
    /// Validate `coords` and wrap them; fails with a domain error when the
    /// point is outside the margin-shrunk ball.
    pub fn new(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        if !validate_in_ball(&coords, c)? {
            return Err(Error::Domain(format!(
                "point with norm {} is not inside the ball of radius {} (margin {BALL_MARGIN})",
                norm(&coords),
                c.radius(),
            )));
        }
        Ok(BallPoint { coords, curvature: c })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// Tangent vector at the origin that maps to this point.
    pub fn log_map_origin(&self) -> Vec<f64> {
        // Points are validated at construction, so the map cannot fail.
        log_map_origin(&self.coords, self.curvature).expect("validated point")
    }
}

/// Whether `v` lies strictly inside the ball, with the safety margin.
///
/// Errors on non-finite coordinates; never errors on points outside the
/// ball (that is a `false`, not a failure).
pub fn validate_in_ball(v: &[f64], c: Curvature) -> Result<bool> {
    ensure_finite(v)?;
    Ok(c.value().sqrt() * norm(v) < 1.0 - BALL_MARGIN)
}

/// Conformal factor of the ball metric at `v`: (2 / (1 − c·‖v‖²))².
pub fn metric_factor(v: &[f64], c: Curvature) -> Result<f64> {
    if !validate_in_ball(v, c)? {
        return Err(Error::Domain(format!(
            "metric factor undefined at norm {} for curvature {}",
            norm(v),
            c.value()
        )));
    }
    let denom = 1.0 - c.value() * dot(v, v);
    Ok((2.0 / denom).powi(2))
}

/// Map a tangent vector at the origin into the ball.
///
/// Direction is preserved; the norm becomes tanh(√c·‖v‖)/√c, so the image is
/// always strictly inside the ball. Extremely large inputs saturate at the
/// validity margin instead of landing on the boundary.
pub fn exp_map_origin(v: &[f64], c: Curvature) -> Result<BallPoint> {
    ensure_finite(v)?;
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        return Ok(BallPoint { coords: v.to_vec(), curvature: c });
    }
    let sqrt_c = c.value().sqrt();
    let scaled = (sqrt_c * n).tanh().min(1.0 - 2.0 * BALL_MARGIN);
    let factor = scaled / (sqrt_c * n);
    let coords = v.iter().map(|x| x * factor).collect();
    Ok(BallPoint { coords, curvature: c })
}

/// Inverse of [`exp_map_origin`] for points strictly inside the ball.
pub fn log_map_origin(y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    if !validate_in_ball(y, c)? {
        return Err(Error::Domain(format!(
            "log map undefined at norm {} for curvature {}",
            norm(y),
            c.value()
        )));
    }
    let n = norm(y);
    if n < ZERO_NORM_EPS {
        return Ok(y.to_vec());
    }
    let sqrt_c = c.value().sqrt();
    let factor = atanh(sqrt_c * n) / (sqrt_c * n);
    Ok(y.iter().map(|x| x * factor).collect())
}

fn ensure_finite(v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite coordinate {x}")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn atanh(x: f64) -> f64 {
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}
