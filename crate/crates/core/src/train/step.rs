use super::config::{Objective, CURVATURE_RANGE, TAU_RANGE};
use super::model::{Example, ModelState, Weights, LOG_TAU, RAW_CURVATURE};
use crate::error::{Error, Result};
use crate::grad::{GradientMap, Real, Tape};
use crate::objectives::{kernel as loss, LossReport};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Fraction of the run spent on the linear learning-rate ramp.
pub const WARMUP_FRACTION: f64 = 0.1;

/// Active loss terms; `None` marks a term the objective or batch leaves out.
pub(crate) struct Terms<S> {
    pub bbox: Option<S>,
    pub cls: Option<S>,
    pub cap: Option<S>,
    pub entail: Option<S>,
}

impl<S: Real> Terms<S> {
    fn total(&self) -> S {
        let parts: Vec<S> = [self.bbox, self.cls, self.cap, self.entail]
            .into_iter()
            .flatten()
            .collect();
        S::sum(&parts)
    }

    fn report(&self) -> LossReport {
        let v = |t: Option<S>| t.map_or(0.0, |x| x.value());
        LossReport {
            bbox: v(self.bbox),
            cls: v(self.cls),
            cap: v(self.cap),
            entail: v(self.entail),
            total: self.total().value(),
        }
    }
}

/// Forward pass and losses of `objective` on one batch.
///
/// Box regression and classification use the examples whose class is seen;
/// the caption terms use every example, with the whole batch as negatives.
/// The contrastive term averages both directions (region to caption and
/// caption to region), since retrieval is evaluated from captions.
pub(crate) fn batch_terms<S: Real>(
    w: &Weights<S>,
    labels: &[usize],
    batch: &[Example],
    objective: Objective,
    gamma: f64,
    cone_k: f64,
) -> Result<Terms<S>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let label_rows = w.label_rows(labels);
    let kv = w.attn.project_text(&label_rows)?;
    let visuals: Vec<Vec<S>> = batch.iter().map(|ex| w.visual(&kv, ex)).collect::<Result<_>>()?;

    let seen: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].label.is_some()).collect();
    let (bbox, cls) = if seen.is_empty() {
        (None, None)
    } else {
        let preds: Vec<[S; 4]> = seen
            .iter()
            .map(|&i| w.predict_box(&visuals[i], &batch[i].region))
            .collect();
        let gts: Vec<[f64; 4]> = seen.iter().map(|&i| batch[i].target_box.corners()).collect();
        let seen_visuals: Vec<Vec<S>> = seen.iter().map(|&i| visuals[i].clone()).collect();
        let targets: Vec<usize> = seen.iter().map(|&i| batch[i].label.unwrap()).collect();
        (
            Some(loss::bbox_regression(&preds, &gts)),
            Some(loss::classification(&seen_visuals, &label_rows, &targets, w.tau)),
        )
    };

    let (cap, entail) = match objective {
        Objective::DetOnly => (None, None),
        Objective::Baseline => {
            let captions: Vec<Vec<S>> = batch.iter().map(|ex| w.caption(&ex.tokens)).collect();
            let cap = (loss::euclidean_contrastive(&visuals, &captions, w.tau)
                + loss::euclidean_contrastive(&captions, &visuals, w.tau))
                * 0.5;
            (Some(cap), None)
        }
        Objective::Hyper => {
            let lv: Vec<_> = visuals.iter().map(|v| w.lift(v)).collect();
            let lc: Vec<_> = batch.iter().map(|ex| w.lift(&w.caption(&ex.tokens))).collect();
            let cap = (loss::hyperbolic_contrastive(&lv, &lc, w.curvature, w.tau)
                + loss::hyperbolic_contrastive(&lc, &lv, w.curvature, w.tau))
                * 0.5;
            (
                Some(cap),
                Some(loss::entailment(&lc, &lv, w.curvature, gamma, cone_k)),
            )
        }
    };
    Ok(Terms { bbox, cls, cap, entail })
}

/// Losses of the state's objective on `batch`, in plain `f64`.
pub fn evaluate_loss(state: &ModelState, batch: &[Example]) -> Result<LossReport> {
    let w = state.weights()?;
    let c = &state.config;
    let terms = batch_terms(&w, &state.labels, batch, c.objective, c.gamma, c.cone_k)?;
    let report = terms.report();
    if !report.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(report)
}

/// Losses and their gradient with respect to every parameter.
pub fn loss_and_gradient(state: &ModelState, batch: &[Example]) -> Result<(LossReport, GradientMap)> {
    let tape = Tape::with_capacity(1 << 16);
    let bound = tape.bind(&state.params);
    let c = &state.config;
    let w = Weights::build(|name| Ok(bound.expect(name)?.to_vec()), c.dim, c.heads)?;
    let terms = batch_terms(&w, &state.labels, batch, c.objective, c.gamma, c.cone_k)?;
    let grads = tape.backward(terms.total())?;
    Ok((terms.report(), grads))
}

/// Learning rate after `t` completed updates: linear warm-up over the first
/// tenth of the run, then cosine decay to zero at `total_steps`.
pub fn learning_rate(base: f64, t: u64, total_steps: usize) -> f64 {
    let total = total_steps.max(1) as f64;
    let warmup = (total * WARMUP_FRACTION).round().max(1.0);
    let step = (t + 1) as f64;
    if step <= warmup {
        return base * step / warmup;
    }
    let progress = ((step - warmup) / (total - warmup).max(1.0)).min(1.0);
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One optimization step: forward, backward, Adam update. Returns the loss
/// of the batch before the update.
pub fn train_step(state: &mut ModelState, batch: &[Example]) -> Result<LossReport> {
    let lr = learning_rate(state.config.lr, state.t, state.config.steps);
    train_step_with_lr(state, batch, lr)
}

pub fn train_step_with_lr(state: &mut ModelState, batch: &[Example], lr: f64) -> Result<LossReport> {
    let (report, grads) = loss_and_gradient(state, batch)?;
    let grads = grads.into_params();
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let names: Vec<String> = state.params.names().cloned().collect();
    for name in &names {
        let g = &grads.expect(name)?.data;
        let p = &mut state.params.get_mut(name).unwrap().data;
        let m = &mut state.m.get_mut(name).unwrap().data;
        let v = &mut state.v.get_mut(name).unwrap().data;
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            if lr != 0.0 {
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
    clamp_scalar(state, LOG_TAU, TAU_RANGE);
    clamp_scalar(state, RAW_CURVATURE, CURVATURE_RANGE);
    if !state.is_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    debug_assert!(state.curvature() > 0.0);
    Ok(report)
}

fn clamp_scalar(state: &mut ModelState, name: &str, (lo, hi): (f64, f64)) {
    if let Some(t) = state.params.get_mut(name) {
        t.data[0] = t.data[0].clamp(lo.ln(), hi.ln());
    }
}
