//! Seeded inputs shared by the benchmarks.

use hyperalign_core::data::{synth_corpus, BBox};
use hyperalign_core::geometry::{exp_map_origin, CurvatureParam, LorentzPoint};
use hyperalign_core::train::{Dataset, Example, ExperimentConfig, ModelState, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` rows of `d` tangent coordinates drawn from [-0.5, 0.5).
pub fn tangent_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.random_range(-0.5..0.5)).collect()).collect()
}

pub fn lifted(rows: &[Vec<f64>], c: f64) -> Vec<LorentzPoint> {
    let c = CurvatureParam::from_value(c).unwrap();
    rows.iter().map(|x| exp_map_origin(x, c).unwrap()).collect()
}

/// Scored boxes clustered enough for suppression to matter.
pub fn scored_boxes(r: &mut ChaCha8Rng, n: usize) -> Vec<BBox> {
    (0..n)
        .map(|_| {
            let (x, y) = (r.random_range(0.0..0.6), r.random_range(0.0..0.6));
            BBox::new(x, y, x + r.random_range(0.1..0.4), y + r.random_range(0.1..0.4))
                .unwrap()
                .with_score(r.random_range(0.0..1.0))
        })
        .collect()
}

/// A freshly initialized model with its dataset and one training batch.
pub struct TrainFixture {
    pub state: ModelState,
    pub data: Dataset,
    pub batch: Vec<Example>,
}

impl TrainFixture {
    /// Default experiment configuration at the given objective.
    pub fn new(objective: Objective) -> Self {
        let cfg = ExperimentConfig {
            objective,
            ..Default::default()
        };
        let tree = cfg.tree().unwrap();
        let corpus = synth_corpus(&tree, &cfg.corpus_config()).unwrap();
        let state = ModelState::init(&cfg, &tree).unwrap();
        let data = Dataset::build(&state, &corpus.records, &corpus.synonyms).unwrap();
        let batch = data.sample_batch(&mut rng(0), cfg.batch);
        TrainFixture { state, data, batch }
    }
}
