use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::eval::{embed_pairs, hierarchy_stats, recall_at_1, MetricsRecord};
use super::model::{Example, ModelState};
use super::step::train_step;
use crate::data::{caption_noise_metric, CaptionRecord, ConceptTree, SynonymMap};
use crate::error::{Error, Result};

/// One scene in this many is held out.
pub const HOLDOUT_MODULUS: u64 = 10;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Whether a scene belongs to the held-out split. Depends on the scene id
/// only, so it is stable across runs and seeds.
pub fn is_held_out(scene: usize) -> bool {
    splitmix64(scene as u64).is_multiple_of(HOLDOUT_MODULUS)
}

/// Training examples (captions as generated) and held-out pairs.
///
/// A held-out pair is a held-out record whose region contains exactly one
/// object, so the caption has a single true match; its caption has the
/// hallucinated mentions removed. Multi-object held-out records are not used.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub held_out: Vec<Example>,
    by_class: BTreeMap<usize, Vec<usize>>,
    pub noise_percent: f64,
}

impl Dataset {
    pub fn build(state: &ModelState, records: &[CaptionRecord], syn: &SynonymMap) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("caption records"));
        }
        let noise_percent = caption_noise_metric(records, syn)?;
        let mut train = Vec::new();
        let mut held_out = Vec::new();
        for r in records {
            r.validate(syn)?;
            if is_held_out(r.scene) {
                if r.true_objects.len() == 1 {
                    held_out.push(state.example(r, syn, true)?);
                }
            } else {
                train.push(state.example(r, syn, false)?);
            }
        }
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if held_out.is_empty() {
            return Err(Error::Empty("held-out split"));
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, ex) in train.iter().enumerate() {
            by_class.entry(ex.class).or_default().push(i);
        }
        Ok(Dataset {
            train,
            held_out,
            by_class,
            noise_percent,
        })
    }

    pub fn num_train_classes(&self) -> usize {
        self.by_class.len()
    }

    /// `size` training examples with pairwise distinct primary classes
    /// (fewer if the split has fewer classes).
    pub fn sample_batch(&self, rng: &mut impl Rng, size: usize) -> Vec<Example> {
        let classes: Vec<&Vec<usize>> = self.by_class.values().collect();
        let n = size.min(classes.len());
        sample(rng, classes.len(), n)
            .into_iter()
            .map(|c| {
                let pool = classes[c];
                self.train[pool[rng.random_range(0..pool.len())]].clone()
            })
            .collect()
    }
}

/// The outcome of a training run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: ModelState,
    pub metrics: Vec<MetricsRecord>,
    pub dataset: Dataset,
}

fn measure(state: &ModelState, data: &Dataset, step: usize, loss: crate::objectives::LossReport) -> Result<MetricsRecord> {
    let e = embed_pairs(state, &data.held_out)?;
    let c = state.curvature();
    let recall = recall_at_1(&e.captions, &e.objects, &e.classes, &e.truth, state.config.objective.metric(), c)?;
    let h = hierarchy_stats(&e.captions, &e.objects, c, state.config.cone_k)?.report();
    Ok(MetricsRecord {
        step,
        objective: state.config.objective,
        loss,
        recall_at_1: recall,
        caption_norm: h.caption_norm,
        object_norm: h.object_norm,
        containment: h.containment,
        noise_percent: data.noise_percent,
        tau: state.tau(),
        curvature: c,
    })
}

/// Initialize from `config`, train for `config.steps` updates, and record
/// held-out metrics every `eval_every` steps and after the last one.
pub fn run_experiment(
    config: &ExperimentConfig,
    tree: &ConceptTree,
    records: &[CaptionRecord],
    syn: &SynonymMap,
) -> Result<RunOutput> {
    let mut state = ModelState::init(config, tree)?;
    let data = Dataset::build(&state, records, syn)?;
    if data.num_train_classes() < 2 {
        return Err(Error::invalid("batch", "training split has fewer than two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0062_6174_6368_6573);
    let mut metrics = Vec::new();
    for step in 1..=config.steps {
        let batch = data.sample_batch(&mut rng, config.batch);
        let loss = train_step(&mut state, &batch)?;
        if state.curvature() <= 0.0 {
            return Err(Error::invalid("curvature", "became non-positive"));
        }
        if step % config.eval_every == 0 || step == config.steps {
            metrics.push(measure(&state, &data, step, loss)?);
        }
    }
    Ok(RunOutput {
        state,
        metrics,
        dataset: data,
    })
}
