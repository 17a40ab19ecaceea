use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by plain `f64` evaluation and taped evaluation.
///
/// Every differentiable kernel in the crate is written once against this
/// trait. Instantiated with `f64` it is an ordinary forward pass; with
/// [`Var`](super::Var) it records onto a [`Tape`](super::Tape).
///
/// Kink conventions: `relu`, `clamp_*`, and `abs` propagate zero gradient at
/// the exact kink point, and the inverse-trig/hyperbolic derivatives return
/// zero outside their open domains.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn acosh(self) -> Self;
    fn asin(self) -> Self;
    fn acos(self) -> Self;
    fn abs(self) -> Self;
    fn recip(self) -> Self;
    /// `x * sigmoid(x)`.
    fn silu(self) -> Self;
    /// `max(0, x)`.
    fn relu(self) -> Self;
    fn clamp_min(self, lo: f64) -> Self;
    fn clamp_max(self, hi: f64) -> Self;
    /// `sinh(sqrt(u)) / sqrt(u)` for `u >= 0`; entire in `u`, equal to 1 at 0.
    fn sinhc_sqrt(self) -> Self;

    /// Sum of a non-empty slice.
    fn sum(xs: &[Self]) -> Self;
    /// Inner product of two equal-length, non-empty slices.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// `ln(sum(exp(x)))` of a non-empty slice, computed stably.
    fn log_sum_exp(xs: &[Self]) -> Self;

    fn clamp(self, lo: f64, hi: f64) -> Self {
        self.clamp_min(lo).clamp_max(hi)
    }

    fn square(self) -> Self {
        self * self
    }

    fn mean(xs: &[Self]) -> Self {
        Self::sum(xs) / xs.len() as f64
    }
}

/// Below this magnitude of `sqrt(u)` the series form of `sinhc_sqrt` is used.
pub(crate) const SINHC_SERIES_CUTOFF: f64 = 1e-4;
/// Below this magnitude of `sqrt(u)` the series form of its derivative is used.
pub(crate) const SINHC_DERIV_SERIES_CUTOFF: f64 = 1e-3;
/// Within this distance above 1, acosh' switches to its leading series terms.
pub(crate) const ACOSH_GUARD: f64 = 1e-12;

pub(crate) fn sinhc_sqrt_f64(u: f64) -> f64 {
    let u = u.max(0.0);
    let t = u.sqrt();
    if t < SINHC_SERIES_CUTOFF {
        // 1 + t²/3! + t⁴/5! + t⁶/7!
        1.0 + u / 6.0 + u * u / 120.0 + u * u * u / 5040.0
    } else {
        t.sinh() / t
    }
}

/// d/du of `sinh(sqrt(u)) / sqrt(u)`.
pub(crate) fn sinhc_sqrt_deriv_f64(u: f64) -> f64 {
    let u = u.max(0.0);
    let t = u.sqrt();
    if t < SINHC_DERIV_SERIES_CUTOFF {
        1.0 / 6.0 + u / 60.0 + u * u / 2520.0 + u * u * u / 181_440.0
    } else {
        (t.cosh() - t.sinh() / t) / (2.0 * u)
    }
}

pub(crate) fn acosh_deriv_f64(x: f64) -> f64 {
    let delta = x - 1.0;
    if delta <= 0.0 {
        0.0
    } else if delta < ACOSH_GUARD {
        // 1/sqrt((x-1)(x+1)) = (2δ)^(-1/2) (1 - δ/4 + ...)
        (1.0 - delta / 4.0) / (2.0 * delta).sqrt()
    } else {
        1.0 / (x * x - 1.0).sqrt()
    }
}

pub(crate) fn asin_deriv_f64(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 - x * x).sqrt()
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp_f64(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn acosh(self) -> Self {
        f64::acosh(self)
    }
    fn asin(self) -> Self {
        f64::asin(self)
    }
    fn acos(self) -> Self {
        f64::acos(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn recip(self) -> Self {
        f64::recip(self)
    }
    fn silu(self) -> Self {
        self * sigmoid_f64(self)
    }
    fn relu(self) -> Self {
        self.max(0.0)
    }
    fn clamp_min(self, lo: f64) -> Self {
        self.max(lo)
    }
    fn clamp_max(self, hi: f64) -> Self {
        self.min(hi)
    }
    fn sinhc_sqrt(self) -> Self {
        sinhc_sqrt_f64(self)
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
    fn log_sum_exp(xs: &[Self]) -> Self {
        log_sum_exp_f64(xs)
    }
}
