use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default IoU threshold for duplicate suppression.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.5;
/// Default grid size for grid sampling.
pub const DEFAULT_GRID_K: usize = 3;

/// Axis-aligned box in normalized image coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox {
            x1,
            y1,
            x2,
            y2,
            score: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.corners();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("box {c:?}")));
        }
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(Error::DegenerateBox(format!("{c:?}")));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid("score", format!("{s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_within_unit(&self) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= 1.0 && self.y2 <= 1.0
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// `(cx, cy, w, h)`.
    pub fn center_size(&self) -> [f64; 4] {
        [
            (self.x1 + self.x2) / 2.0,
            (self.y1 + self.y2) / 2.0,
            self.x2 - self.x1,
            self.y2 - self.y1,
        ]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Clip to the unit square; `None` if nothing is left.
    pub fn clip_unit(&self) -> Option<BBox> {
        let b = BBox {
            x1: self.x1.max(0.0),
            y1: self.y1.max(0.0),
            x2: self.x2.min(1.0),
            y2: self.y2.min(1.0),
            score: self.score,
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }
}

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Split the unit square into `k x k` equal cells, row-major.
pub fn grid_sample(k: usize) -> Result<Vec<BBox>> {
    if k == 0 {
        return Err(Error::invalid("grid_k", "must be at least 1"));
    }
    let edge = |i: usize| i as f64 / k as f64;
    let mut out = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            out.push(BBox {
                x1: edge(col),
                y1: edge(row),
                x2: edge(col + 1),
                y2: edge(row + 1),
                score: None,
            });
        }
    }
    Ok(out)
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid("iou_threshold", format!("{t} outside (0, 1)")));
    }
    Ok(())
}

fn scores(boxes: &[BBox]) -> Result<Vec<f64>> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| b.score.ok_or(Error::Unscored(i)))
        .collect()
}

/// Indices of input boxes in descending score order, ties by lower index.
fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy suppression; returns the indices of kept boxes in keep order.
pub fn nms_indices(boxes: &[BBox], iou_threshold: f64) -> Result<Vec<usize>> {
    check_threshold(iou_threshold)?;
    let s = scores(boxes)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(&s) {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) < iou_threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Greedy non-maximum suppression over scored boxes.
pub fn nms(boxes: &[BBox], iou_threshold: f64) -> Result<Vec<BBox>> {
    Ok(nms_indices(boxes, iou_threshold)?
        .into_iter()
        .map(|i| boxes[i])
        .collect())
}

/// The `top_n` highest-scored proposals, de-duplicated by NMS.
pub fn proposal_sample(proposals: &[BBox], top_n: usize, iou_threshold: f64) -> Result<Vec<BBox>> {
    if proposals.is_empty() {
        return Err(Error::Empty("proposals"));
    }
    if top_n == 0 {
        return Err(Error::invalid("top_n", "must be positive"));
    }
    let s = scores(proposals)?;
    let top: Vec<BBox> = score_order(&s)
        .into_iter()
        .take(top_n)
        .map(|i| proposals[i])
        .collect();
    nms(&top, iou_threshold)
}
