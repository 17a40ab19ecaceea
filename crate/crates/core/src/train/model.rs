use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::{BBox, CaptionRecord, ConceptTree, SynonymMap};
use crate::error::{Error, Result};
use crate::fusion::{
    positional_encode, proposal_features, AttentionWeights, Mat, Mlp, RegionFeature, TextKv,
    PROPOSAL_FEATURE_DIM,
};
use crate::geometry::kernel::{self as geo, Lifted};
use crate::grad::{ParamSet, Real, Tensor};

/// Standard deviation of the embedding-table initialization.
pub const INIT_STD: f64 = 0.02;

pub const OBJECTS: &str = "objects";
pub const TOKENS: &str = "tokens";
pub const ATTN_Q: &str = "attn.q";
pub const ATTN_K: &str = "attn.k";
pub const ATTN_V: &str = "attn.v";
pub const ATTN_OUT: &str = "attn.out";
pub const POS_PROJ: &str = "pos.proj";
pub const MLP_W1: &str = "mlp.w1";
pub const MLP_B1: &str = "mlp.b1";
pub const MLP_W2: &str = "mlp.w2";
pub const MLP_B2: &str = "mlp.b2";
pub const BOX_W: &str = "box.w";
pub const BOX_B: &str = "box.b";
pub const LOG_TAU: &str = "log_tau";
pub const RAW_CURVATURE: &str = "raw_curvature";

/// Trainable parameters, Adam moments, and the class layout they index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ExperimentConfig,
    /// Object-table row to leaf class id.
    pub leaves: Vec<usize>,
    /// Classes with detection labels (seen leaves), in label order.
    pub labels: Vec<usize>,
    pub vocab: usize,
    pub params: ParamSet,
    pub m: ParamSet,
    pub v: ParamSet,
    /// Number of updates applied.
    pub t: u64,
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape matches")
}

impl ModelState {
    /// Fresh parameters: embedding tables `N(0, 0.02^2)`, attention
    /// `N(0, 1/d)`, identity-pass MLP plus small noise, zero box head,
    /// `tau = tau_init`, `C = curvature_init`.
    pub fn init(config: &ExperimentConfig, tree: &ConceptTree) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let leaves = tree.leaves();
        let labels = tree.seen_leaves();
        if labels.is_empty() {
            return Err(Error::invalid("novel_every", "every leaf is novel; no detection labels remain"));
        }
        let vocab = tree.vocab_size();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x696e_6974);
        let attn_std = 1.0 / (d as f64).sqrt();

        let mut params = ParamSet::new();
        params.insert(OBJECTS, normal_tensor(&mut rng, vec![leaves.len(), d], INIT_STD));
        params.insert(TOKENS, normal_tensor(&mut rng, vec![vocab, d], INIT_STD));
        for name in [ATTN_Q, ATTN_K, ATTN_V, ATTN_OUT] {
            params.insert(name, normal_tensor(&mut rng, vec![d, d], attn_std));
        }
        params.insert(POS_PROJ, normal_tensor(&mut rng, vec![PROPOSAL_FEATURE_DIM, d], INIT_STD));

        let ident = Mlp::identity(d);
        let mut w1 = normal_tensor(&mut rng, vec![d, 2 * d], INIT_STD);
        let mut w2 = normal_tensor(&mut rng, vec![2 * d, d], INIT_STD);
        for i in 0..d {
            for j in 0..2 * d {
                w1.data[i * 2 * d + j] += ident.w1.at(i, j);
                w2.data[j * d + i] += ident.w2.at(j, i);
            }
        }
        params.insert(MLP_W1, w1);
        params.insert(MLP_B1, Tensor::zeros(vec![2 * d]));
        params.insert(MLP_W2, w2);
        params.insert(MLP_B2, Tensor::zeros(vec![d]));
        params.insert(BOX_W, Tensor::zeros(vec![d, 4]));
        params.insert(BOX_B, Tensor::zeros(vec![4]));
        params.insert(LOG_TAU, Tensor::scalar(config.tau_init.ln()));
        params.insert(RAW_CURVATURE, Tensor::scalar(config.curvature_init.ln()));

        Ok(ModelState {
            config: config.clone(),
            leaves,
            labels,
            vocab,
            m: params.zeros_like(),
            v: params.zeros_like(),
            params,
            t: 0,
        })
    }

    fn scalar(&self, name: &str) -> f64 {
        self.params.get(name).map_or(f64::NAN, |t| t.data[0])
    }

    pub fn tau(&self) -> f64 {
        self.scalar(LOG_TAU).exp()
    }

    pub fn curvature(&self) -> f64 {
        self.scalar(RAW_CURVATURE).exp()
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite() && self.m.is_finite() && self.v.is_finite()
    }

    pub fn object_row(&self, class: usize) -> Result<usize> {
        self.leaves.binary_search(&class).map_err(|_| Error::Index {
            what: "object classes",
            index: class,
            len: self.leaves.len(),
        })
    }

    pub fn label_index(&self, class: usize) -> Option<usize> {
        self.labels.binary_search(&class).ok()
    }

    /// Training or evaluation example for a record. `grounded` drops the
    /// surface forms of hallucinated classes from the caption.
    pub fn example(&self, record: &CaptionRecord, syn: &SynonymMap, grounded: bool) -> Result<Example> {
        let tokens = if grounded {
            record.grounded_tokens(syn)
        } else {
            record.tokens.clone()
        };
        if tokens.is_empty() {
            return Err(Error::Empty("caption tokens"));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::Index {
                what: "vocabulary tokens",
                index: t,
                len: self.vocab,
            });
        }
        record.region.validate()?;
        if !record.region.is_within_unit() {
            return Err(Error::BoxOutOfRange(format!("{:?}", record.region.corners())));
        }
        Ok(Example {
            tokens,
            object_row: self.object_row(record.object)?,
            class: record.object,
            label: self.label_index(record.object),
            true_objects: record.true_objects.clone(),
            region: record.region,
            features: proposal_features(&record.region),
            target_box: record.object_box,
        })
    }

    pub(crate) fn weights(&self) -> Result<Weights<f64>> {
        Weights::build(
            |name| Ok(self.params.expect(name)?.data.clone()),
            self.config.dim,
            self.config.heads,
        )
    }
}

/// One region with its caption, ready for the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub object_row: usize,
    pub class: usize,
    /// Detection label index when the class is seen.
    pub label: Option<usize>,
    pub true_objects: BTreeSet<usize>,
    pub region: BBox,
    pub features: Vec<f64>,
    pub target_box: BBox,
}

/// Parameters arranged for the forward pass, over `f64` or taped values.
pub(crate) struct Weights<S> {
    pub objects: Vec<Vec<S>>,
    pub tokens: Vec<Vec<S>>,
    pub attn: AttentionWeights<S>,
    pub pos: Mat<S>,
    pub mlp: Mlp<S>,
    pub box_w: Mat<S>,
    pub box_b: Vec<S>,
    pub tau: S,
    pub curvature: S,
}

fn rows<S: Real>(flat: Vec<S>, d: usize) -> Vec<Vec<S>> {
    flat.chunks(d).map(|c| c.to_vec()).collect()
}

impl<S: Real> Weights<S> {
    pub fn build(get: impl Fn(&str) -> Result<Vec<S>>, d: usize, heads: usize) -> Result<Self> {
        let mat = |name: &str, r: usize, c: usize| Mat::from_row_major(r, c, &get(name)?);
        let attn = AttentionWeights::new(
            mat(ATTN_Q, d, d)?,
            mat(ATTN_K, d, d)?,
            mat(ATTN_V, d, d)?,
            mat(ATTN_OUT, d, d)?,
            heads,
        )?;
        let mlp = Mlp::new(mat(MLP_W1, d, 2 * d)?, get(MLP_B1)?, mat(MLP_W2, 2 * d, d)?, get(MLP_B2)?)?;
        Ok(Weights {
            objects: rows(get(OBJECTS)?, d),
            tokens: rows(get(TOKENS)?, d),
            attn,
            pos: mat(POS_PROJ, PROPOSAL_FEATURE_DIM, d)?,
            mlp,
            box_w: mat(BOX_W, d, 4)?,
            box_b: get(BOX_B)?,
            tau: get(LOG_TAU)?[0].exp(),
            curvature: get(RAW_CURVATURE)?[0].exp(),
        })
    }

    /// Label embeddings `T`: token rows of the seen classes.
    pub fn label_rows(&self, labels: &[usize]) -> Vec<Vec<S>> {
        labels.iter().map(|&c| self.tokens[c].clone()).collect()
    }

    /// Mean of the caption's token embeddings.
    pub fn caption(&self, tokens: &[usize]) -> Vec<S> {
        let d = self.tokens[0].len();
        let inv = 1.0 / tokens.len() as f64;
        (0..d)
            .map(|j| {
                let col: Vec<S> = tokens.iter().map(|&t| self.tokens[t][j]).collect();
                S::sum(&col) * inv
            })
            .collect()
    }

    /// Fused region embedding `MLP(v_l + v_s)`.
    pub fn visual(&self, kv: &TextKv<S>, ex: &Example) -> Result<Vec<S>> {
        let v = &self.objects[ex.object_row];
        let (v_l, _) = self.attn.attend(v, kv)?;
        let v_s = positional_encode(
            &RegionFeature {
                v: v.clone(),
                bbox: ex.region,
                p: ex.features.clone(),
            },
            &self.pos,
        )?;
        crate::fusion::fuse(&v_l, &v_s, &self.mlp)
    }

    /// Predicted box corners: deltas from the box head decoded against the region.
    pub fn predict_box(&self, fused: &[S], region: &BBox) -> [S; 4] {
        let delta: Vec<S> = self
            .box_w
            .left_mul(fused)
            .into_iter()
            .zip(&self.box_b)
            .map(|(z, &b)| z + b)
            .collect();
        let [cx, cy, w, h] = region.center_size();
        let pcx = delta[0] * w + cx;
        let pcy = delta[1] * h + cy;
        let half_w = delta[2].exp() * (w / 2.0);
        let half_h = delta[3].exp() * (h / 2.0);
        [pcx - half_w, pcy - half_h, pcx + half_w, pcy + half_h]
    }

    pub fn lift(&self, x: &[S]) -> Lifted<S> {
        geo::lift(x, self.curvature)
    }
}
