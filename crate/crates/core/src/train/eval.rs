use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::Objective;
use super::model::{Example, ModelState};
use crate::error::{Error, Result};
use crate::geometry::kernel as geo;
use crate::objectives::{kernel::cosine, LossReport};

/// Similarity used to rank candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Geodesic distance between lifted points; smaller is closer.
    Lorentz,
    /// Cosine similarity; larger is closer.
    Cosine,
}

impl Objective {
    pub fn metric(self) -> Metric {
        match self {
            Objective::Hyper => Metric::Lorentz,
            Objective::Baseline | Objective::DetOnly => Metric::Cosine,
        }
    }
}

/// Caption and object embeddings of matched pairs, before lifting.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedPairs {
    pub captions: Vec<Vec<f64>>,
    pub objects: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub truth: Vec<BTreeSet<usize>>,
}

/// Embed every example's caption and fused region embedding.
pub fn embed_pairs(state: &ModelState, pairs: &[Example]) -> Result<EmbeddedPairs> {
    if pairs.is_empty() {
        return Err(Error::Empty("held-out pairs"));
    }
    let w = state.weights()?;
    let kv = w.attn.project_text(&w.label_rows(&state.labels))?;
    let mut out = EmbeddedPairs {
        captions: Vec::with_capacity(pairs.len()),
        objects: Vec::with_capacity(pairs.len()),
        classes: Vec::with_capacity(pairs.len()),
        truth: Vec::with_capacity(pairs.len()),
    };
    for ex in pairs {
        out.captions.push(w.caption(&ex.tokens));
        out.objects.push(w.visual(&kv, ex)?);
        out.classes.push(ex.class);
        out.truth.push(ex.true_objects.clone());
    }
    Ok(out)
}

/// Fraction of captions whose nearest object is of a class the caption's
/// region actually contains. Ties go to the lower candidate index.
pub fn recall_at_1(
    captions: &[Vec<f64>],
    objects: &[Vec<f64>],
    object_classes: &[usize],
    truth: &[BTreeSet<usize>],
    metric: Metric,
    curvature: f64,
) -> Result<f64> {
    if captions.is_empty() || objects.is_empty() {
        return Err(Error::Empty("retrieval set"));
    }
    if objects.len() != object_classes.len() || captions.len() != truth.len() {
        return Err(Error::Shape("retrieval inputs have mismatched lengths".into()));
    }
    let score = |a: &[f64], b: &[f64], la: &geo::Lifted<f64>, lb: &geo::Lifted<f64>| match metric {
        Metric::Lorentz => -geo::distance(la, lb, curvature),
        Metric::Cosine => cosine(a, b),
    };
    let lift = |x: &Vec<f64>| geo::lift(x, curvature);
    let lc: Vec<_> = captions.iter().map(lift).collect();
    let lo: Vec<_> = objects.iter().map(lift).collect();
    let mut hits = 0usize;
    for (i, c) in captions.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (j, o) in objects.iter().enumerate() {
            let s = score(c, o, &lc[i], &lo[j]);
            if s > best.0 {
                best = (s, j);
            }
        }
        if truth[i].contains(&object_classes[best.1]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / captions.len() as f64)
}

/// Recall@1 on held-out pairs under the state's own metric. Candidates are
/// the fused embeddings of every pair's region.
pub fn evaluate_retrieval(state: &ModelState, pairs: &[Example]) -> Result<f64> {
    let e = embed_pairs(state, pairs)?;
    recall_at_1(
        &e.captions,
        &e.objects,
        &e.classes,
        &e.truth,
        state.config.objective.metric(),
        state.curvature(),
    )
}

/// Mean lifted spatial norms and cone containment of matched pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub caption_norm: f64,
    pub object_norm: f64,
    pub containment: f64,
}

/// Per-pair lifted norms and whether each object lies in its caption's cone.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyStats {
    pub caption_norms: Vec<f64>,
    pub object_norms: Vec<f64>,
    pub contained: Vec<bool>,
}

impl HierarchyStats {
    pub fn report(&self) -> HierarchyReport {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        HierarchyReport {
            caption_norm: mean(&self.caption_norms),
            object_norm: mean(&self.object_norms),
            containment: self.contained.iter().filter(|&&c| c).count() as f64 / self.contained.len() as f64,
        }
    }
}

/// Lift matched caption/object pairs and measure them. A caption at the
/// apex has no cone and counts as not containing its object.
pub fn hierarchy_stats(captions: &[Vec<f64>], objects: &[Vec<f64>], curvature: f64, cone_k: f64) -> Result<HierarchyStats> {
    if captions.is_empty() {
        return Err(Error::Empty("hierarchy pairs"));
    }
    if captions.len() != objects.len() {
        return Err(Error::Shape("captions and objects must be matched".into()));
    }
    let mut s = HierarchyStats {
        caption_norms: Vec::with_capacity(captions.len()),
        object_norms: Vec::with_capacity(captions.len()),
        contained: Vec::with_capacity(captions.len()),
    };
    for (c, o) in captions.iter().zip(objects) {
        let lc = geo::lift(c, curvature);
        let lo = geo::lift(o, curvature);
        let cn = lc.space_norm();
        s.caption_norms.push(cn);
        s.object_norms.push(lo.space_norm());
        let inside = cn > 0.0 && {
            let angle = geo::exterior_angle_lifted(&lc, &lo, curvature);
            angle <= geo::half_aperture_lifted(&lc, curvature, cone_k)
        };
        s.contained.push(inside);
    }
    Ok(s)
}

pub fn hierarchy_report(state: &ModelState, pairs: &[Example]) -> Result<HierarchyReport> {
    let e = embed_pairs(state, pairs)?;
    Ok(hierarchy_stats(&e.captions, &e.objects, state.curvature(), state.config.cone_k)?.report())
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub objective: Objective,
    pub loss: LossReport,
    pub recall_at_1: f64,
    pub caption_norm: f64,
    pub object_norm: f64,
    pub containment: f64,
    pub noise_percent: f64,
    pub tau: f64,
    pub curvature: f64,
}

/// One line of the embedding export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub id: usize,
    pub kind: crate::objectives::EmbeddingKind,
    pub class: usize,
    pub vector: Vec<f64>,
    pub lifted_norm: f64,
}

/// Caption and object embeddings of every pair, in pair order.
pub fn export_embeddings(state: &ModelState, pairs: &[Example]) -> Result<Vec<ExportRow>> {
    use crate::objectives::EmbeddingKind;
    let e = embed_pairs(state, pairs)?;
    let c = state.curvature();
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for i in 0..pairs.len() {
        for (kind, v) in [(EmbeddingKind::Caption, &e.captions[i]), (EmbeddingKind::Visual, &e.objects[i])] {
            rows.push(ExportRow {
                id: i,
                kind,
                class: e.classes[i],
                vector: v.clone(),
                lifted_norm: geo::lift(v, c).space_norm(),
            });
        }
    }
    Ok(rows)
}
