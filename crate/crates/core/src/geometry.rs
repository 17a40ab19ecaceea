//! Lorentz-model primitives.
//!
//! A point of the hyperboloid `{p : <p,p>_L = -1/C}` is stored by its spatial
//! part only; the time coordinate `sqrt(1/C + |space|^2)` is always derived,
//! so every [`LorentzPoint`] is on the manifold by construction.
//!
//! The generic functions in [`kernel`] are the single implementation used by
//! both the checked `f64` API below and the taped training path.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default constant `K` of the cone half-aperture.
pub const DEFAULT_APERTURE_K: f64 = 0.1;
/// Lower clamp on `(C<c,v>)^2 - 1` under the square root of the exterior angle.
pub const ANGLE_DENOM_EPS: f64 = 1e-12;
/// Slack allowed below 1 for `-C<u,v>` before a pair is called off-manifold.
pub const OFF_MANIFOLD_TOL: f64 = 1e-6;

/// Learnable positive curvature, stored as `raw` with `C = exp(raw)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureParam {
    raw: f64,
}

impl CurvatureParam {
    pub fn from_raw(raw: f64) -> Result<Self> {
        if !raw.is_finite() {
            return Err(Error::NonFinite("curvature raw parameter".into()));
        }
        Ok(CurvatureParam { raw })
    }

    pub fn from_value(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("curvature", format!("{c} is not positive")));
        }
        Ok(CurvatureParam { raw: c.ln() })
    }

    pub fn raw(&self) -> f64 {
        self.raw
    }

    pub fn value(&self) -> f64 {
        self.raw.exp()
    }

    /// dC/d(raw); equal to C for the exponential map.
    pub fn derivative(&self) -> f64 {
        self.value()
    }
}

/// An angle in `[0, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&radians) {
            return Err(Error::invalid("angle", format!("{radians} outside [0, pi]")));
        }
        Ok(Angle(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// A point on the hyperboloid of curvature `-C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzPoint {
    space: Vec<f64>,
    curvature: f64,
}

impl LorentzPoint {
    /// Wrap an existing spatial part.
    pub fn from_space(space: Vec<f64>, curvature: f64) -> Result<Self> {
        if !(curvature.is_finite() && curvature > 0.0) {
            return Err(Error::invalid("curvature", format!("{curvature} is not positive")));
        }
        if space.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spatial coordinates".into()));
        }
        Ok(LorentzPoint { space, curvature })
    }

    pub fn space(&self) -> &[f64] {
        &self.space
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn time(&self) -> f64 {
        kernel::time(&self.space, self.curvature)
    }

    pub fn space_norm(&self) -> f64 {
        self.space.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn check_pair(&self, other: &LorentzPoint) -> Result<()> {
        if self.curvature != other.curvature {
            return Err(Error::CurvatureMismatch(self.curvature, other.curvature));
        }
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "dimension {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Lift a tangent vector at the apex onto the hyperboloid.
pub fn exp_map_origin(x: &[f64], c: CurvatureParam) -> Result<LorentzPoint> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("exp_map_origin input".into()));
    }
    let curvature = c.value();
    let space = kernel::exp_map_origin(x, curvature);
    if space.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "exp_map_origin overflowed; input norm too large".into(),
        ));
    }
    Ok(LorentzPoint { space, curvature })
}

/// `<u_space, v_space> - u_time * v_time`.
pub fn lorentz_inner(u: &LorentzPoint, v: &LorentzPoint) -> Result<f64> {
    u.check_pair(v)?;
    Ok(kernel::inner(&u.space, u.time(), &v.space, v.time()))
}

/// Geodesic distance `sqrt(1/C) * acosh(-C <u,v>)`.
pub fn lorentz_distance(u: &LorentzPoint, v: &LorentzPoint) -> Result<f64> {
    u.check_pair(v)?;
    let lift = |p: &LorentzPoint| kernel::Lifted {
        space: p.space.clone(),
        time: p.time(),
    };
    Ok(kernel::distance(&lift(u), &lift(v), u.curvature))
}

/// Distance from a precomputed Lorentz inner product, for coordinates that
/// did not come from a [`LorentzPoint`]. Rejects `-C<u,v>` meaningfully
/// below 1, which no pair of on-manifold points can produce.
pub fn distance_from_inner(inner: f64, curvature: f64) -> Result<f64> {
    let arg = -curvature * inner;
    if !arg.is_finite() {
        return Err(Error::NonFinite("Lorentz inner product".into()));
    }
    if arg < 1.0 - OFF_MANIFOLD_TOL {
        return Err(Error::OffManifold(arg));
    }
    Ok(kernel::distance_from_inner(inner, curvature))
}

/// Half-aperture `asin(min(1, 2K / (sqrt(C) |c_space|)))` of the entailment
/// cone rooted at `c`.
pub fn half_aperture(c: &LorentzPoint, k: f64) -> Result<Angle> {
    if c.space_norm() == 0.0 {
        return Err(Error::ConeAtOrigin);
    }
    Angle::new(kernel::half_aperture(&c.space, c.curvature, k))
}

/// Angle at `c` between the geodesic to `v` and the outward geodesic from
/// the apex through `c`. Zero means `v` lies straight "below" `c`.
pub fn exterior_angle(c: &LorentzPoint, v: &LorentzPoint) -> Result<Angle> {
    c.check_pair(v)?;
    if c.space_norm() == 0.0 {
        return Err(Error::ConeAtOrigin);
    }
    let cv = c.curvature * lorentz_inner(c, v)?;
    if cv * cv - 1.0 <= ANGLE_DENOM_EPS {
        return Err(Error::CoincidentPoints);
    }
    Angle::new(kernel::exterior_angle(
        &c.space,
        c.time(),
        &v.space,
        v.time(),
        c.curvature,
    ))
}

/// Whether `v` lies inside the entailment cone of `c`.
pub fn in_cone(c: &LorentzPoint, v: &LorentzPoint, k: f64) -> Result<bool> {
    Ok(exterior_angle(c, v)? <= half_aperture(c, k)?)
}

/// Formulas shared by the checked API and the taped training path. Inputs
/// are assumed valid; callers guard the singular cases.
pub mod kernel {
    use crate::grad::Real;

    /// A lifted point with its derived time coordinate.
    #[derive(Clone, Debug)]
    pub struct Lifted<S> {
        pub space: Vec<S>,
        pub time: S,
    }

    impl<S: Real> Lifted<S> {
        pub fn space_norm(&self) -> S {
            S::dot(&self.space, &self.space).sqrt()
        }
    }

    pub fn time<S: Real>(space: &[S], c: S) -> S {
        (S::dot(space, space) + c.recip()).sqrt()
    }

    /// Spatial part of `exp_0(x) = sinh(sqrt(C)|x|) / (sqrt(C)|x|) * x`.
    pub fn exp_map_origin<S: Real>(x: &[S], c: S) -> Vec<S> {
        let u = S::dot(x, x) * c;
        let factor = u.sinhc_sqrt();
        x.iter().map(|&xi| xi * factor).collect()
    }

    pub fn lift<S: Real>(x: &[S], c: S) -> Lifted<S> {
        let space = exp_map_origin(x, c);
        let time = time(&space, c);
        Lifted { space, time }
    }

    pub fn inner<S: Real>(u: &[S], ut: S, v: &[S], vt: S) -> S {
        S::dot(u, v) - ut * vt
    }

    pub fn distance_from_inner<S: Real>(inner: S, c: S) -> S {
        (-(c * inner)).clamp_min(1.0).acosh() / c.sqrt()
    }

    /// Uses `-C<u,v> = 1 + C/2 <u-v, u-v>` with the difference formed
    /// coordinate-wise, so coincident points give exactly zero and nearby
    /// points keep their relative accuracy.
    pub fn distance<S: Real>(u: &Lifted<S>, v: &Lifted<S>, c: S) -> S {
        let ds: Vec<S> = u.space.iter().zip(&v.space).map(|(&a, &b)| a - b).collect();
        let dt = u.time - v.time;
        let gap = S::dot(&ds, &ds) - dt * dt;
        (c * gap * 0.5 + 1.0).clamp_min(1.0).acosh() / c.sqrt()
    }

    pub fn half_aperture<S: Real>(space: &[S], c: S, k: f64) -> S {
        let norm = S::dot(space, space).sqrt();
        ((c.sqrt() * norm).recip() * (2.0 * k)).clamp_max(1.0).asin()
    }

    pub fn exterior_angle<S: Real>(c_space: &[S], c_time: S, v_space: &[S], v_time: S, curv: S) -> S {
        let cv = curv * inner(c_space, c_time, v_space, v_time);
        let numer = v_time + c_time * cv;
        let c_norm = S::dot(c_space, c_space).sqrt();
        let denom = c_norm * (cv * cv - 1.0).clamp_min(super::ANGLE_DENOM_EPS).sqrt();
        (numer / denom).clamp(-1.0, 1.0).acos()
    }

    pub fn exterior_angle_lifted<S: Real>(c: &Lifted<S>, v: &Lifted<S>, curv: S) -> S {
        exterior_angle(&c.space, c.time, &v.space, v.time, curv)
    }

    pub fn half_aperture_lifted<S: Real>(c: &Lifted<S>, curv: S, k: f64) -> S {
        half_aperture(&c.space, curv, k)
    }
}
