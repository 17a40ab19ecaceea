//! Synthetic region-caption corpus.
//!
//! Scenes hold a few objects drawn from the leaves of a [`ConceptTree`].
//! Regions come from ground-truth boxes, scored proposals after NMS, and a
//! `k x k` grid. A [`CaptionProvider`] turns each region into a token
//! sequence; the built-in [`SyntheticCaptioner`] mentions every object in the
//! region with some of its ancestor attributes and, with probability `rho`,
//! injects one absent but co-occurring object.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boxes::{grid_sample, proposal_sample, BBox, DEFAULT_GRID_K, DEFAULT_NMS_THRESHOLD};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "v1";

/// Rooted concept hierarchy; object classes are the leaves. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptTree {
    parent: Vec<Option<usize>>,
    /// Leaves withheld from detection labels; they only appear in captions.
    novel: BTreeSet<usize>,
}

impl ConceptTree {
    /// Tree from a parent list. Validates rootedness, reachability, and depth.
    pub fn from_parents(parent: Vec<Option<usize>>, novel: BTreeSet<usize>) -> Result<Self> {
        let t = ConceptTree { parent, novel };
        t.validate()?;
        Ok(t)
    }

    /// Complete tree with the given branching factor per level. Every
    /// `novel_every`-th leaf (counting from 1) is novel; 0 disables.
    pub fn balanced(branching: &[usize], novel_every: usize) -> Result<Self> {
        if branching.len() < 2 || branching.contains(&0) {
            return Err(Error::invalid("branching", "need at least two non-zero levels"));
        }
        let mut parent = vec![None];
        let mut frontier = vec![0usize];
        for &b in branching {
            let mut next = Vec::new();
            for &p in &frontier {
                for _ in 0..b {
                    parent.push(Some(p));
                    next.push(parent.len() - 1);
                }
            }
            frontier = next;
        }
        let novel = if novel_every == 0 {
            BTreeSet::new()
        } else {
            frontier
                .iter()
                .enumerate()
                .filter(|(i, _)| (i + 1) % novel_every == 0)
                .map(|(_, &l)| l)
                .collect()
        };
        Self::from_parents(parent, novel)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parent.len();
        if n == 0 || self.parent[0].is_some() {
            return Err(Error::invalid("tree", "node 0 must be the root"));
        }
        for (i, p) in self.parent.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::invalid("tree", format!("node {i} has no parent"))),
                // Parents precede children, so every node reaches the root.
                Some(p) if *p >= i => {
                    return Err(Error::invalid("tree", format!("node {i} has parent {p} >= {i}")))
                }
                _ => {}
            }
        }
        if self.leaves().iter().any(|&l| self.depth(l) < 2) {
            return Err(Error::invalid("tree", "every leaf must have depth >= 2"));
        }
        let leaves: BTreeSet<usize> = self.leaves().into_iter().collect();
        if let Some(x) = self.novel.iter().find(|x| !leaves.contains(x)) {
            return Err(Error::invalid("tree", format!("novel class {x} is not a leaf")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        !self.parent.contains(&Some(node))
    }

    /// Leaves in id order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut has_child = vec![false; self.parent.len()];
        for p in self.parent.iter().flatten() {
            has_child[*p] = true;
        }
        (0..self.parent.len()).filter(|&i| !has_child[i]).collect()
    }

    pub fn is_novel(&self, leaf: usize) -> bool {
        self.novel.contains(&leaf)
    }

    pub fn novel(&self) -> &BTreeSet<usize> {
        &self.novel
    }

    /// Leaves that carry detection labels, in id order.
    pub fn seen_leaves(&self) -> Vec<usize> {
        self.leaves().into_iter().filter(|l| !self.is_novel(*l)).collect()
    }

    pub fn depth(&self, node: usize) -> usize {
        let mut d = 0;
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    /// Ancestors of `node`, root excluded, from the top down.
    pub fn attributes(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parent[node];
        while let Some(p) = cur {
            if p != 0 {
                out.push(p);
            }
            cur = self.parent[p];
        }
        out.reverse();
        out
    }

    /// Co-occurrence weight between two distinct leaves: 4 for siblings,
    /// 2 for cousins, 1 otherwise.
    pub fn cooccurrence(&self, a: usize, b: usize) -> f64 {
        let pa = self.parent[a];
        let pb = self.parent[b];
        if pa == pb {
            4.0
        } else if pa.and_then(|p| self.parent[p]) == pb.and_then(|p| self.parent[p]) {
            2.0
        } else {
            1.0
        }
    }

    /// Token vocabulary size: every concept plus one synonym per leaf.
    pub fn vocab_size(&self) -> usize {
        self.parent.len() + self.leaves().len()
    }

    /// Default synonym map: each leaf maps to itself and to the token
    /// `len() + rank`, where `rank` is its position among the leaves.
    pub fn synonyms(&self) -> SynonymMap {
        let n = self.parent.len();
        SynonymMap(
            self.leaves()
                .into_iter()
                .enumerate()
                .map(|(rank, leaf)| (leaf, BTreeSet::from([leaf, n + rank])))
                .collect(),
        )
    }
}

/// Object class id to the token ids that mention it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymMap(BTreeMap<usize, BTreeSet<usize>>);

impl SynonymMap {
    pub fn new(map: BTreeMap<usize, BTreeSet<usize>>) -> Result<Self> {
        let s = SynonymMap(map);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().find(|(k, v)| !v.contains(k)) {
            Some((k, _)) => Err(Error::invalid("synonyms", format!("class {k} does not map to itself"))),
            None => Ok(()),
        }
    }

    pub fn forms(&self, class: usize) -> Option<&BTreeSet<usize>> {
        self.0.get(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    /// Token id to the class it names.
    pub fn reverse(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for (&class, forms) in &self.0 {
            for &f in forms {
                out.insert(f, class);
            }
        }
        out
    }

    /// Classes mentioned (directly or by synonym) in a token sequence.
    pub fn mentions(&self, tokens: &[usize]) -> BTreeSet<usize> {
        let tokens: BTreeSet<usize> = tokens.iter().copied().collect();
        self.0
            .iter()
            .filter(|(_, forms)| !forms.is_disjoint(&tokens))
            .map(|(&c, _)| c)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: usize,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: usize,
    pub objects: Vec<SceneObject>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSource {
    /// Ground-truth box of an annotated object.
    Gt,
    Proposal,
    Grid,
}

/// One captioned region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub v: String,
    pub scene: usize,
    pub source: RegionSource,
    #[serde(rename = "box")]
    pub region: BBox,
    pub tokens: Vec<usize>,
    pub true_objects: BTreeSet<usize>,
    pub hallucinated: BTreeSet<usize>,
    /// Class of the object with the largest overlap with the region.
    pub object: usize,
    pub object_box: BBox,
}

impl CaptionRecord {
    /// Tokens with every surface form of a hallucinated class removed.
    pub fn grounded_tokens(&self, syn: &SynonymMap) -> Vec<usize> {
        let drop: BTreeSet<usize> = self
            .hallucinated
            .iter()
            .filter_map(|c| syn.forms(*c))
            .flatten()
            .copied()
            .collect();
        self.tokens.iter().copied().filter(|t| !drop.contains(t)).collect()
    }

    /// Invariant check against a synonym map.
    pub fn validate(&self, syn: &SynonymMap) -> Result<()> {
        if self.v != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema version `{}`", self.v)));
        }
        self.region.validate()?;
        self.object_box.validate()?;
        if !self.true_objects.is_disjoint(&self.hallucinated) {
            return Err(Error::Format("hallucinated overlaps true_objects".into()));
        }
        if !self.true_objects.contains(&self.object) {
            return Err(Error::Format("primary object missing from true_objects".into()));
        }
        let mentioned = syn.mentions(&self.tokens);
        if let Some(c) = self
            .true_objects
            .iter()
            .chain(&self.hallucinated)
            .find(|c| !mentioned.contains(c))
        {
            return Err(Error::Format(format!("class {c} not mentioned in tokens")));
        }
        Ok(())
    }
}

/// What a captioner says about one region.
#[derive(Clone, Debug, PartialEq)]
pub struct Caption {
    pub tokens: Vec<usize>,
    pub hallucinated: BTreeSet<usize>,
}

/// Anything that can caption a region of a scene. `present` lists the
/// classes actually inside the region, primary object first.
pub trait CaptionProvider {
    fn caption(&mut self, scene: &Scene, region: &BBox, present: &[usize]) -> Caption;
}

/// Template captioner with controlled, co-occurrence-correlated hallucination.
pub struct SyntheticCaptioner<'a> {
    tree: &'a ConceptTree,
    synonyms: &'a SynonymMap,
    noise_rate: f64,
    attribute_prob: f64,
    synonym_prob: f64,
    rng: ChaCha8Rng,
}

impl<'a> SyntheticCaptioner<'a> {
    pub fn new(tree: &'a ConceptTree, synonyms: &'a SynonymMap, noise_rate: f64, seed: u64) -> Result<Self> {
        check_noise_rate(noise_rate)?;
        Ok(SyntheticCaptioner {
            tree,
            synonyms,
            noise_rate,
            attribute_prob: 0.5,
            synonym_prob: 0.3,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6361_7074_696f_6e73),
        })
    }

    fn surface_form(&mut self, class: usize) -> usize {
        let forms = self.synonyms.forms(class);
        match forms {
            Some(f) if f.len() > 1 && self.rng.random_bool(self.synonym_prob) => {
                let alts: Vec<usize> = f.iter().copied().filter(|&t| t != class).collect();
                alts[self.rng.random_range(0..alts.len())]
            }
            _ => class,
        }
    }
}

impl CaptionProvider for SyntheticCaptioner<'_> {
    fn caption(&mut self, scene: &Scene, _region: &BBox, present: &[usize]) -> Caption {
        let mut tokens = Vec::new();
        for &class in present {
            for a in self.tree.attributes(class) {
                if self.rng.random_bool(self.attribute_prob) {
                    tokens.push(a);
                }
            }
            let form = self.surface_form(class);
            tokens.push(form);
        }
        let mut hallucinated = BTreeSet::new();
        if self.rng.random_bool(self.noise_rate) {
            let in_scene: BTreeSet<usize> = scene.objects.iter().map(|o| o.class).collect();
            let candidates: Vec<usize> = self
                .tree
                .leaves()
                .into_iter()
                .filter(|l| !in_scene.contains(l))
                .collect();
            if !candidates.is_empty() {
                let anchor = present[0];
                let weights: Vec<f64> = candidates
                    .iter()
                    .map(|&c| self.tree.cooccurrence(anchor, c))
                    .collect();
                let pick = candidates[sample_weighted(&mut self.rng, &weights)];
                let form = self.surface_form(pick);
                let at = self.rng.random_range(0..=tokens.len());
                tokens.insert(at, form);
                hallucinated.insert(pick);
            }
        }
        Caption { tokens, hallucinated }
    }
}

fn sample_weighted(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn check_noise_rate(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid("noise_rate", format!("{rho} outside [0, 1)")));
    }
    Ok(())
}

/// Corpus generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub scenes: usize,
    pub noise_rate: f64,
    pub seed: u64,
    pub grid_k: usize,
    pub nms_threshold: f64,
    pub max_objects: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scenes: 300,
            noise_rate: 0.0,
            seed: 0,
            grid_k: DEFAULT_GRID_K,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            max_objects: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub scenes: Vec<Scene>,
    pub records: Vec<CaptionRecord>,
    pub synonyms: SynonymMap,
}

/// Classes inside `region` (at least half of the object's area covered),
/// largest overlap first, ties by object order.
pub fn objects_in_region(scene: &Scene, region: &BBox) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = scene
        .objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let inter = o.bbox.intersection(region);
            (inter >= 0.5 * o.bbox.area()).then_some((inter, i))
        })
        .collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, i)| i).collect()
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = rng.random_range(0.15..0.4);
    let h = rng.random_range(0.15..0.4);
    let x1 = rng.random_range(0.0..1.0 - w);
    let y1 = rng.random_range(0.0..1.0 - h);
    BBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
        score: None,
    }
}

fn make_scene(id: usize, tree: &ConceptTree, leaves: &[usize], max_objects: usize, rng: &mut ChaCha8Rng) -> Scene {
    let n = rng.random_range(1..=max_objects.max(1));
    let mut classes = vec![leaves[rng.random_range(0..leaves.len())]];
    while classes.len() < n {
        let rest: Vec<usize> = leaves.iter().copied().filter(|l| !classes.contains(l)).collect();
        if rest.is_empty() {
            break;
        }
        let weights: Vec<f64> = rest.iter().map(|&c| tree.cooccurrence(classes[0], c)).collect();
        classes.push(rest[sample_weighted(rng, &weights)]);
    }
    let mut objects: Vec<SceneObject> = Vec::new();
    for class in classes {
        let mut bbox = random_box(rng);
        for _ in 0..20 {
            if objects.iter().all(|o| super::iou(&o.bbox, &bbox) < 0.3) {
                break;
            }
            bbox = random_box(rng);
        }
        objects.push(SceneObject { class, bbox });
    }
    Scene { id, objects }
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox) -> Option<BBox> {
    let [cx, cy, w, h] = b.center_size();
    let nw = w * rng.random_range(0.8..1.2);
    let nh = h * rng.random_range(0.8..1.2);
    let ncx = cx + w * rng.random_range(-0.1..0.1);
    let ncy = cy + h * rng.random_range(-0.1..0.1);
    BBox::from_center(ncx, ncy, nw, nh).ok()?.clip_unit()
}

/// Candidate regions of a scene: annotated ground truth, NMS-filtered
/// proposals with synthetic objectness, and the grid.
pub fn scene_regions(
    scene: &Scene,
    tree: &ConceptTree,
    cfg: &CorpusConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(RegionSource, BBox)>> {
    let mut out = Vec::new();
    for o in &scene.objects {
        if !tree.is_novel(o.class) {
            out.push((RegionSource::Gt, o.bbox));
        }
    }
    // Objectness has no trained source here: jittered copies of objects
    // score high, random background boxes score low.
    let mut proposals = Vec::new();
    for o in &scene.objects {
        for _ in 0..3 {
            if let Some(j) = jitter(rng, &o.bbox) {
                proposals.push(j.with_score(rng.random_range(0.6..1.0)));
            }
        }
    }
    for _ in 0..3 {
        proposals.push(random_box(rng).with_score(rng.random_range(0.0..0.5)));
    }
    let top_n = 2 * scene.objects.len();
    for p in proposal_sample(&proposals, top_n, cfg.nms_threshold)? {
        out.push((RegionSource::Proposal, p));
    }
    for g in grid_sample(cfg.grid_k)? {
        out.push((RegionSource::Grid, g));
    }
    Ok(out)
}

/// Generate scenes and caption every region with `provider`.
pub fn generate_corpus<P: CaptionProvider>(
    tree: &ConceptTree,
    synonyms: &SynonymMap,
    cfg: &CorpusConfig,
    provider: &mut P,
) -> Result<Corpus> {
    if cfg.scenes == 0 {
        return Err(Error::invalid("scenes", "must be at least 1"));
    }
    tree.validate()?;
    let leaves = tree.leaves();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scenes = Vec::with_capacity(cfg.scenes);
    let mut records = Vec::new();
    for id in 0..cfg.scenes {
        let scene = make_scene(id, tree, &leaves, cfg.max_objects, &mut rng);
        for (source, region) in scene_regions(&scene, tree, cfg, &mut rng)? {
            let present = objects_in_region(&scene, &region);
            if present.is_empty() {
                continue;
            }
            let classes: Vec<usize> = present.iter().map(|&i| scene.objects[i].class).collect();
            let caption = provider.caption(&scene, &region, &classes);
            let primary = &scene.objects[present[0]];
            records.push(CaptionRecord {
                v: SCHEMA_VERSION.to_string(),
                scene: id,
                source,
                region: BBox { score: None, ..region },
                tokens: caption.tokens,
                true_objects: classes.iter().copied().collect(),
                hallucinated: caption.hallucinated,
                object: primary.class,
                object_box: primary.bbox,
            });
        }
        scenes.push(scene);
    }
    Ok(Corpus {
        scenes,
        records,
        synonyms: synonyms.clone(),
    })
}

/// Generate a corpus with the [`SyntheticCaptioner`]. Same inputs, same corpus.
pub fn synth_corpus(tree: &ConceptTree, cfg: &CorpusConfig) -> Result<Corpus> {
    check_noise_rate(cfg.noise_rate)?;
    let synonyms = tree.synonyms();
    let mut captioner = SyntheticCaptioner::new(tree, &synonyms, cfg.noise_rate, cfg.seed)?;
    generate_corpus(tree, &synonyms, cfg, &mut captioner)
}

pub fn write_records<W: Write>(records: &[CaptionRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if rec.v != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "line {}: unsupported schema version `{}`",
                i + 1,
                rec.v
            )));
        }
        out.push(rec);
    }
    Ok(out)
}
