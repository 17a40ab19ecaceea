//! Training losses: cosine classification, Euclidean and hyperbolic
//! contrastive alignment, entailment cones, and box regression.
//!
//! As in [`geometry`](crate::geometry), each loss has one generic
//! implementation in [`kernel`]; the functions at module level validate
//! their inputs and evaluate it in `f64`.

use serde::{Deserialize, Serialize};

use crate::data::BBox;
use crate::error::{Error, Result};
use crate::geometry::{kernel::Lifted, LorentzPoint};

/// Default entailment margin.
pub const DEFAULT_MARGIN: f64 = 0.1;
/// Default (initial) temperature.
pub const DEFAULT_TAU: f64 = 0.07;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Visual,
    Label,
    Caption,
}

/// `n x d` matrix of finite embeddings, `n >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    rows: Vec<Vec<f64>>,
    kind: EmbeddingKind,
}

impl EmbeddingBatch {
    pub fn new(rows: Vec<Vec<f64>>, kind: EmbeddingKind) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("embedding batch"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::Shape("embedding dimension is zero".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Shape(format!("row {i} has dimension {} not {d}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding row {i}")));
            }
        }
        Ok(EmbeddingBatch { rows, kind })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn check_nonzero(&self) -> Result<()> {
        match self.rows.iter().position(|r| r.iter().all(|&x| x == 0.0)) {
            Some(i) => Err(Error::ZeroNorm(i)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid("tau", format!("{value} is not positive")));
        }
        Ok(Temperature(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(DEFAULT_TAU)
    }
}

fn check_same_shape(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimension {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

fn check_matched(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<()> {
    check_same_shape(a, b)?;
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} rows; contrastive batches must be matched",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of cosine-similarity logits against class labels.
pub fn classification_loss(
    visual: &EmbeddingBatch,
    labels: &EmbeddingBatch,
    targets: &[usize],
    tau: Temperature,
) -> Result<f64> {
    check_same_shape(visual, labels)?;
    if targets.len() != visual.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            visual.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= labels.len()) {
        return Err(Error::Index {
            what: "labels",
            index: t,
            len: labels.len(),
        });
    }
    visual.check_nonzero()?;
    labels.check_nonzero()?;
    Ok(kernel::classification(visual.rows(), labels.rows(), targets, tau.value()))
}

/// InfoNCE over cosine similarity of matched rows.
pub fn euclidean_contrastive_loss(
    visual: &EmbeddingBatch,
    captions: &EmbeddingBatch,
    tau: Temperature,
) -> Result<f64> {
    check_matched(visual, captions)?;
    visual.check_nonzero()?;
    captions.check_nonzero()?;
    Ok(kernel::euclidean_contrastive(visual.rows(), captions.rows(), tau.value()))
}

/// InfoNCE over negative Lorentzian distance after lifting both batches.
pub fn hyperbolic_contrastive_loss(
    visual: &EmbeddingBatch,
    captions: &EmbeddingBatch,
    curvature: crate::geometry::CurvatureParam,
    tau: Temperature,
) -> Result<f64> {
    check_matched(visual, captions)?;
    let c = curvature.value();
    let v: Vec<_> = visual.rows().iter().map(|r| crate::geometry::kernel::lift(r, c)).collect();
    let t: Vec<_> = captions.rows().iter().map(|r| crate::geometry::kernel::lift(r, c)).collect();
    if v.iter().chain(&t).any(|p| !p.time.is_finite()) {
        return Err(Error::NonFinite("lifted embedding overflowed".into()));
    }
    Ok(kernel::hyperbolic_contrastive(&v, &t, c, tau.value()))
}

/// Max-margin entailment loss: each visual point inside its caption's cone,
/// every other visual point outside it by `margin` radians.
pub fn entailment_loss(
    captions: &[LorentzPoint],
    visuals: &[LorentzPoint],
    margin: f64,
    k: f64,
) -> Result<f64> {
    if captions.is_empty() {
        return Err(Error::Empty("entailment batch"));
    }
    if captions.len() != visuals.len() {
        return Err(Error::Shape(format!(
            "{} captions vs {} visuals",
            captions.len(),
            visuals.len()
        )));
    }
    let curv = captions[0].curvature();
    for p in captions.iter().chain(visuals) {
        if p.curvature() != curv {
            return Err(Error::CurvatureMismatch(curv, p.curvature()));
        }
        if p.dim() != captions[0].dim() {
            return Err(Error::Shape("mixed point dimensions".into()));
        }
    }
    if captions.iter().any(|c| c.space_norm() == 0.0) {
        return Err(Error::ConeAtOrigin);
    }
    let to_lifted = |p: &LorentzPoint| Lifted {
        space: p.space().to_vec(),
        time: p.time(),
    };
    let c: Vec<_> = captions.iter().map(to_lifted).collect();
    let v: Vec<_> = visuals.iter().map(to_lifted).collect();
    Ok(kernel::entailment(&c, &v, curv, margin, k))
}

/// Mean smooth-L1 (threshold 1) over the four corner coordinates.
pub fn bbox_regression_loss(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("box batch"));
    }
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), gt.len())));
    }
    for b in pred.iter().chain(gt) {
        b.validate()?;
    }
    let p: Vec<[f64; 4]> = pred.iter().map(BBox::corners).collect();
    let g: Vec<[f64; 4]> = gt.iter().map(BBox::corners).collect();
    Ok(kernel::bbox_regression(&p, &g))
}

/// Per-term weights for the composite objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bbox: f64,
    pub cls: f64,
    pub cap: f64,
    pub entail: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            bbox: 1.0,
            cls: 1.0,
            cap: 1.0,
            entail: 1.0,
        }
    }
}

/// Weighted contribution of each term and their sum. Inactive terms are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub bbox: f64,
    pub cls: f64,
    pub cap: f64,
    pub entail: f64,
    pub total: f64,
}

impl LossReport {
    fn from_terms(bbox: f64, cls: f64, cap: f64, entail: f64) -> Self {
        LossReport {
            bbox,
            cls,
            cap,
            entail,
            total: bbox + cls + cap + entail,
        }
    }

    /// Sum of the individual terms, recomputed.
    pub fn parts_sum(&self) -> f64 {
        self.bbox + self.cls + self.cap + self.entail
    }
}

/// bbox + cls + hyperbolic cap + entail.
pub fn objective_hyper(bbox: f64, cls: f64, hyp_cap: f64, entail: f64, w: &LossWeights) -> LossReport {
    LossReport::from_terms(w.bbox * bbox, w.cls * cls, w.cap * hyp_cap, w.entail * entail)
}

/// bbox + cls + Euclidean cap.
pub fn objective_baseline(bbox: f64, cls: f64, cap: f64, w: &LossWeights) -> LossReport {
    LossReport::from_terms(w.bbox * bbox, w.cls * cls, w.cap * cap, 0.0)
}

/// bbox + cls only.
pub fn objective_detection(bbox: f64, cls: f64, w: &LossWeights) -> LossReport {
    LossReport::from_terms(w.bbox * bbox, w.cls * cls, 0.0, 0.0)
}

pub mod kernel {
    use crate::geometry::kernel::{self as geo, Lifted};
    use crate::grad::Real;

    pub fn normalize<S: Real>(x: &[S]) -> Vec<S> {
        let n = S::dot(x, x).sqrt();
        x.iter().map(|&v| v / n).collect()
    }

    pub fn cosine<S: Real>(a: &[S], b: &[S]) -> S {
        S::dot(a, b) / (S::dot(a, a).sqrt() * S::dot(b, b).sqrt())
    }

    /// Mean over rows of `logsumexp(logits_i) - logits_i[target_i]`.
    fn cross_entropy<S: Real>(logits: &[Vec<S>], targets: impl Iterator<Item = usize>) -> S {
        let per_row: Vec<S> = logits
            .iter()
            .zip(targets)
            .map(|(row, t)| S::log_sum_exp(row) - row[t])
            .collect();
        S::mean(&per_row)
    }

    fn cosine_logits<S: Real>(a: &[Vec<S>], b: &[Vec<S>], tau: S) -> Vec<Vec<S>> {
        let an: Vec<Vec<S>> = a.iter().map(|r| normalize(r)).collect();
        let bn: Vec<Vec<S>> = b.iter().map(|r| normalize(r)).collect();
        let inv_tau = tau.recip();
        an.iter()
            .map(|x| bn.iter().map(|y| S::dot(x, y) * inv_tau).collect())
            .collect()
    }

    pub fn classification<S: Real>(visual: &[Vec<S>], labels: &[Vec<S>], targets: &[usize], tau: S) -> S {
        let logits = cosine_logits(visual, labels, tau);
        cross_entropy(&logits, targets.iter().copied())
    }

    pub fn euclidean_contrastive<S: Real>(visual: &[Vec<S>], captions: &[Vec<S>], tau: S) -> S {
        let logits = cosine_logits(visual, captions, tau);
        cross_entropy(&logits, 0..visual.len())
    }

    pub fn hyperbolic_contrastive<S: Real>(visual: &[Lifted<S>], captions: &[Lifted<S>], curv: S, tau: S) -> S {
        let inv_tau = tau.recip();
        let logits: Vec<Vec<S>> = visual
            .iter()
            .map(|v| {
                captions
                    .iter()
                    .map(|c| -(geo::distance(v, c, curv) * inv_tau))
                    .collect()
            })
            .collect();
        cross_entropy(&logits, 0..visual.len())
    }

    /// Entailment loss over lifted caption/visual pairs. The positive term is
    /// `relu(angle - aperture)`; each negative adds `relu(margin - relu(angle - aperture))`.
    pub fn entailment<S: Real>(captions: &[Lifted<S>], visuals: &[Lifted<S>], curv: S, margin: f64, k: f64) -> S {
        let per_row: Vec<S> = captions
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let aperture = geo::half_aperture_lifted(c, curv, k);
                let violation =
                    |v: &Lifted<S>| (geo::exterior_angle_lifted(c, v, curv) - aperture).relu();
                let mut terms = Vec::with_capacity(visuals.len());
                terms.push(violation(&visuals[i]));
                for (j, v) in visuals.iter().enumerate() {
                    if j != i {
                        terms.push((-violation(v) + margin).relu());
                    }
                }
                S::sum(&terms)
            })
            .collect();
        S::mean(&per_row)
    }

    pub fn smooth_l1<S: Real>(e: S) -> S {
        if e.value().abs() < 1.0 {
            e * e * 0.5
        } else {
            e.abs() - 0.5
        }
    }

    pub fn bbox_regression<S: Real>(pred: &[[S; 4]], gt: &[[f64; 4]]) -> S {
        let terms: Vec<S> = pred
            .iter()
            .zip(gt)
            .flat_map(|(p, g)| (0..4).map(move |k| smooth_l1(p[k] - g[k])))
            .collect();
        S::mean(&terms)
    }
}
