//! Regions, boxes, the synthetic caption corpus, and the caption-noise metric.

mod boxes;
mod corpus;
mod noise;

pub use boxes::{
    grid_sample, iou, nms, nms_indices, proposal_sample, BBox, DEFAULT_GRID_K,
    DEFAULT_NMS_THRESHOLD,
};
pub use corpus::{
    generate_corpus, objects_in_region, read_records, scene_regions, synth_corpus, write_records,
    Caption, CaptionProvider, CaptionRecord, ConceptTree, Corpus, CorpusConfig, RegionSource,
    Scene, SceneObject, SynonymMap, SyntheticCaptioner, SCHEMA_VERSION,
};
pub use noise::{caption_noise_metric, noise_rate_for_target};
