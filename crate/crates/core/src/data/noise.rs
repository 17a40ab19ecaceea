use std::collections::BTreeMap;

use super::corpus::{synth_corpus, CaptionRecord, ConceptTree, CorpusConfig, SynonymMap};
use crate::error::{Error, Result};

/// Mean over captions of the percentage of mentioned objects that are not
/// among the record's true objects.
///
/// Per-caption ratios are accumulated as exact integer numerators grouped by
/// denominator, so the result does not depend on record order and is
/// unchanged when every record is duplicated.
pub fn caption_noise_metric(records: &[CaptionRecord], syn: &SynonymMap) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("caption records"));
    }
    let mut by_denominator: BTreeMap<u64, u64> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let mentioned = syn.mentions(&r.tokens);
        if mentioned.is_empty() {
            return Err(Error::NoMentions(i));
        }
        let incorrect = mentioned.difference(&r.true_objects).count() as u64;
        *by_denominator.entry(mentioned.len() as u64).or_default() += incorrect;
    }
    let sum: f64 = by_denominator
        .iter()
        .map(|(&den, &num)| num as f64 / den as f64)
        .sum();
    Ok(sum / records.len() as f64 * 100.0)
}

/// Bisect the injection rate so the generated corpus's noise metric lands
/// on `target_percent`. Returns `(rate, achieved_percent)`.
pub fn noise_rate_for_target(tree: &ConceptTree, base: &CorpusConfig, target_percent: f64) -> Result<(f64, f64)> {
    if !(0.0..50.0).contains(&target_percent) {
        return Err(Error::invalid("target_noise", format!("{target_percent} outside [0, 50)")));
    }
    let measure = |rho: f64| -> Result<f64> {
        let cfg = CorpusConfig {
            noise_rate: rho,
            ..base.clone()
        };
        let c = synth_corpus(tree, &cfg)?;
        caption_noise_metric(&c.records, &c.synonyms)
    };
    let (mut lo, mut hi) = (0.0, 0.999);
    let mut best = (0.0, measure(0.0)?);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let got = measure(mid)?;
        if (got - target_percent).abs() < (best.1 - target_percent).abs() {
            best = (mid, got);
        }
        if got < target_percent {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
