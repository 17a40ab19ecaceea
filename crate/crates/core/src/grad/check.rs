//! Central finite differences, independent of the tape.

use super::tensor::ParamSet;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;

/// Central-difference gradient of `f` over a flat parameter vector.
pub fn finite_diff_vec<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe)?;
        probe[i] = orig - step;
        let down = f(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("probe at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Central-difference gradient of `f` for every entry of every tensor in
/// `params`; the result has the same layout as `params`.
pub fn finite_diff<F>(mut f: F, params: &ParamSet, step: f64) -> Result<ParamSet>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let n = params.expect(name)?.len();
        for i in 0..n {
            let orig = params.expect(name)?.data[i];
            probe.get_mut(name).unwrap().data[i] = orig + step;
            let up = f(&probe)?;
            probe.get_mut(name).unwrap().data[i] = orig - step;
            let down = f(&probe)?;
            probe.get_mut(name).unwrap().data[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("probe at {name}[{i}]")));
            }
            grads.get_mut(name).unwrap().data[i] = (up - down) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// [`relative_error`] over every entry of two same-layout parameter sets.
pub fn relative_error_params(a: &ParamSet, b: &ParamSet) -> f64 {
    assert!(a.same_layout(b), "gradient layouts differ");
    relative_error(&a.flatten(), &b.flatten())
}
