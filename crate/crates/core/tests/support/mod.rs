//! Suites shared by the core integration tests and the acceptance target.
//! Each suite returns [`Outcome`]s instead of asserting, so callers can
//! print a summary before failing.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use hyperalign_core::data::{
    caption_noise_metric, grid_sample, iou, nms_indices, synth_corpus, BBox, CaptionRecord,
    ConceptTree, CorpusConfig, RegionSource, SynonymMap, SCHEMA_VERSION,
};
use hyperalign_core::geometry::kernel::{self as geo, Lifted};
use hyperalign_core::geometry::{exp_map_origin, lorentz_distance, lorentz_inner, CurvatureParam};
use hyperalign_core::grad::{finite_diff, relative_error_params, DEFAULT_STEP};
use hyperalign_core::objectives::kernel as loss;
use hyperalign_core::train::{evaluate_loss, loss_and_gradient, Dataset, Example, ExperimentConfig, ModelState, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Gradient check of one expression: the body is evaluated once over `f64`
/// (for central differences) and once over taped variables (for the
/// backward pass). Evaluates to the norm-wise relative error.
macro_rules! grad_check {
    ($point:expr, |$x:ident| $body:expr) => {{
        let point: &[f64] = $point;
        let plain = |$x: &[f64]| -> f64 { $body };
        let tape = hyperalign_core::grad::Tape::new();
        let vars = tape.vars(point);
        let out = {
            let $x: &[hyperalign_core::grad::Var<'_>] = &vars;
            $body
        };
        let analytic = tape.backward(out).expect("backward pass").wrt_all(&vars);
        let numeric = hyperalign_core::grad::finite_diff_vec(
            |p| Ok(plain(p)),
            point,
            hyperalign_core::grad::DEFAULT_STEP,
        )
        .expect("finite differences");
        hyperalign_core::grad::relative_error(&analytic, &numeric)
    }};
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub limit: f64,
}

impl Outcome {
    pub fn new(name: impl Into<String>, cases: usize, worst: f64, limit: f64) -> Self {
        Outcome {
            name: name.into(),
            cases,
            worst,
            limit,
        }
    }

    pub fn pass(&self) -> bool {
        self.worst <= self.limit
    }

    pub fn line(&self) -> String {
        format!(
            "{:<32} cases={:<6} worst={:.3e} limit={:.1e} {}",
            self.name,
            self.cases,
            self.worst,
            self.limit,
            if self.pass() { "ok" } else { "FAILED" }
        )
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn chunk<S: Copy>(x: &[S], d: usize) -> Vec<Vec<S>> {
    x.chunks(d).map(|c| c.to_vec()).collect()
}

// ---------------------------------------------------------------- geometry

/// `n` random lifts over random dimensions and curvatures; worst absolute
/// deviation of `<p,p>` from `-1/C`.
pub fn manifold_suite(n: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = r.random_range(1..=32);
        let c = CurvatureParam::from_raw(r.random_range(-2.3..2.3)).unwrap();
        let dir: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut r).take(d).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        // tangent norms up to 5 / sqrt(C), plus the occasional tiny vector
        let target = if r.random_bool(0.05) {
            r.random_range(0.0..1e-5)
        } else {
            r.random_range(0.0..5.0) / c.value().sqrt()
        };
        let x: Vec<f64> = dir.iter().map(|v| v / norm * target).collect();
        let p = exp_map_origin(&x, c).unwrap();
        assert!(p.time().is_finite() && p.time() >= 1.0 / c.value().sqrt());
        let dev = (lorentz_inner(&p, &p).unwrap() + 1.0 / c.value()).abs();
        worst = worst.max(dev);
    }
    Outcome::new("manifold constraint", n, worst, 1e-9)
}

/// Metric axioms over random triples; worst violation of any axiom.
pub fn metric_suite(n: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = r.random_range(1..=8);
        let c = CurvatureParam::from_raw(r.random_range(-1.5..1.5)).unwrap();
        let pts: Vec<_> = (0..3)
            .map(|_| exp_map_origin(&uniform(&mut r, d, -1.5, 1.5), c).unwrap())
            .collect();
        let dist = |a: usize, b: usize| lorentz_distance(&pts[a], &pts[b]).unwrap();
        let (ab, bc, ac) = (dist(0, 1), dist(1, 2), dist(0, 2));
        worst = worst
            .max(-ab.min(bc).min(ac))
            .max((ab - dist(1, 0)).abs())
            .max(ac - ab - bc)
            .max(dist(0, 0))
            .max(dist(2, 2));
    }
    Outcome::new("distance metric axioms", n, worst, 1e-8)
}

/// Hyperbolic law of cosines: exterior angle at `c` in the triangle
/// (apex, c, v). Shares no code with the closed form used by the crate.
pub fn exterior_angle_from_sides(c: &Lifted<f64>, v: &Lifted<f64>, curv: f64) -> f64 {
    let sq = curv.sqrt();
    let origin = Lifted {
        space: vec![0.0; c.space.len()],
        time: 1.0 / sq,
    };
    let a = sq * geo::distance(&origin, c, curv);
    let b = sq * geo::distance(c, v, curv);
    let e = sq * geo::distance(&origin, v, curv);
    let cos_interior = ((a.cosh() * b.cosh() - e.cosh()) / (a.sinh() * b.sinh())).clamp(-1.0, 1.0);
    PI - cos_interior.acos()
}

// --------------------------------------------------------------- gradients

/// Every scalar primitive on the tape against central differences at
/// random interior points, including both sides of clamp and hinge.
pub fn primitive_suite(points: usize, seed: u64) -> Vec<Outcome> {
    use hyperalign_core::grad::Real;
    let mut r = rng(seed);
    let mut out = Vec::new();
    macro_rules! prim {
        ($name:expr, $n:expr, $lo:expr, $hi:expr, |$x:ident| $body:expr) => {{
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let p = uniform(&mut r, $n, $lo, $hi);
                worst = worst.max(grad_check!(&p, |$x| $body));
            }
            out.push(Outcome::new($name, points, worst, 1e-7));
        }};
    }
    prim!("add", 2, -2.0, 2.0, |x| (x[0] + x[1]) * x[0]);
    prim!("sub", 2, -2.0, 2.0, |x| (x[0] - x[1]) * x[1]);
    prim!("mul", 2, -2.0, 2.0, |x| x[0] * x[1]);
    prim!("div", 2, 0.5, 2.0, |x| x[0] / x[1]);
    prim!("neg", 1, -2.0, 2.0, |x| -(x[0] * x[0]));
    prim!("scalar ops", 1, 0.5, 2.0, |x| (x[0] + 1.5) * 2.0 / 3.0 - 0.25);
    prim!("sqrt", 1, 0.1, 4.0, |x| x[0].sqrt());
    prim!("exp", 1, -3.0, 3.0, |x| x[0].exp());
    prim!("ln", 1, 0.1, 5.0, |x| x[0].ln());
    prim!("sinh", 1, -3.0, 3.0, |x| x[0].sinh());
    prim!("cosh", 1, -3.0, 3.0, |x| x[0].cosh());
    prim!("acosh", 1, 1.01, 5.0, |x| x[0].acosh());
    prim!("asin", 1, -0.99, 0.99, |x| x[0].asin());
    prim!("acos", 1, -0.99, 0.99, |x| x[0].acos());
    prim!("abs", 1, 0.01, 2.0, |x| (x[0] - 1.0).abs() * (-x[0]).abs());
    prim!("recip", 1, 0.2, 3.0, |x| x[0].recip());
    prim!("silu", 1, -4.0, 4.0, |x| x[0].silu());
    prim!("relu active", 1, 0.01, 2.0, |x| x[0].relu());
    prim!("relu inactive", 1, -2.0, -0.01, |x| x[0].relu());
    prim!("hinge", 2, -1.0, 1.0, |x| (-x[0] + 0.3).relu() + (x[1] - 0.3).relu());
    prim!("clamp_min active", 1, 1.01, 3.0, |x| x[0].clamp_min(1.0));
    prim!("clamp_min clamped", 1, -1.0, 0.99, |x| x[0].clamp_min(1.0));
    prim!("clamp_max active", 1, -1.0, 0.99, |x| x[0].clamp_max(1.0));
    prim!("clamp_max clamped", 1, 1.01, 3.0, |x| x[0].clamp_max(1.0));
    prim!("sinhc_sqrt", 1, 1e-4, 9.0, |x| x[0].sinhc_sqrt());
    prim!("sum", 5, -2.0, 2.0, |x| Real::sum(&[x[0] * x[1], x[2], x[3] * x[4]]));
    prim!("dot", 6, -2.0, 2.0, |x| Real::dot(&x[..3], &x[3..]));
    prim!("norm", 4, -2.0, 2.0, |x| Real::dot(x, x).sqrt());
    prim!("log_sum_exp", 5, -3.0, 3.0, |x| Real::log_sum_exp(x));
    prim!("softmax weight", 4, -3.0, 3.0, |x| (x[1] - Real::log_sum_exp(x)).exp());
    prim!("matmul", 10, -1.0, 1.0, |x| {
        let m = hyperalign_core::fusion::Mat::from_row_major(2, 3, &x[..6]).unwrap();
        let y = m.left_mul(&x[6..8]);
        y[0] * x[8] + y[1] * x[9] + y[2]
    });
    out
}

fn worst_over<F>(points: usize, name: &str, mut accept: F) -> Outcome
where
    F: FnMut() -> Option<f64>,
{
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut tries = 0;
    while done < points {
        tries += 1;
        assert!(tries < 100 * points, "{name}: too few interior points");
        if let Some(e) = accept() {
            worst = worst.max(e);
            done += 1;
        }
    }
    Outcome::new(name, points, worst, 1e-5)
}

fn lift_rows<S: hyperalign_core::grad::Real>(x: &[S], d: usize, c: S) -> Vec<Lifted<S>> {
    x.chunks(d).map(|r| geo::lift(r, c)).collect()
}

/// Gradients of every loss with respect to all inputs, the temperature, and
/// the raw curvature, against central differences.
pub fn loss_gradient_suite(points: usize, seed: u64) -> Vec<Outcome> {
    use hyperalign_core::grad::Real;
    let mut r = rng(seed);
    let mut out = Vec::new();

    // classification: 3 regions, 4 labels, d = 3; last entry is tau
    let targets = [2usize, 0, 3];
    out.push(worst_over(points, "classification", || {
        let mut p = uniform(&mut r, 21, -1.0, 1.0);
        p.push(r.random_range(0.05..1.0));
        Some(grad_check!(&p, |x| loss::classification(
            &chunk(&x[..9], 3),
            &chunk(&x[9..21], 3),
            &targets,
            x[21]
        )))
    }));

    // euclidean contrastive: m = 4, d = 3
    out.push(worst_over(points, "euclidean contrastive", || {
        let mut p = uniform(&mut r, 24, -1.0, 1.0);
        p.push(r.random_range(0.05..1.0));
        Some(grad_check!(&p, |x| loss::euclidean_contrastive(
            &chunk(&x[..12], 3),
            &chunk(&x[12..24], 3),
            x[24]
        )))
    }));

    // hyperbolic contrastive: m = 4, d = 3, then tau and raw curvature
    out.push(worst_over(points, "hyperbolic contrastive", || {
        let mut p = uniform(&mut r, 24, -1.0, 1.0);
        p.push(r.random_range(0.05..1.0));
        p.push(r.random_range(-1.2..1.2));
        let c = p[25].exp();
        let (v, t) = (lift_rows(&p[..12], 3, c), lift_rows(&p[12..24], 3, c));
        let tight = v
            .iter()
            .flat_map(|a| t.iter().map(move |b| -c * geo::inner(&a.space, a.time, &b.space, b.time) - 1.0))
            .fold(f64::INFINITY, f64::min);
        (tight >= 1e-3).then(|| {
            grad_check!(&p, |x| {
                let c = x[25].exp();
                loss::hyperbolic_contrastive(&lift_rows(&x[..12], 3, c), &lift_rows(&x[12..24], 3, c), c, x[24])
            })
        })
    }));

    // entailment: m = 3, d = 3, then raw curvature; away from every kink
    let (margin, k) = (0.1, 0.1);
    out.push(worst_over(points, "entailment", || {
        let mut p = uniform(&mut r, 18, -1.2, 1.2);
        p.push(r.random_range(-1.0..1.0));
        let c = p[18].exp();
        let (cs, vs) = (lift_rows(&p[..9], 3, c), lift_rows(&p[9..18], 3, c));
        let mut ok = true;
        for (i, ci) in cs.iter().enumerate() {
            let ratio = 2.0 * k / (c.sqrt() * ci.space_norm());
            ok &= (ratio - 1.0).abs() >= 1e-3;
            let aperture = geo::half_aperture_lifted(ci, c, k);
            for (j, vj) in vs.iter().enumerate() {
                let cv = c * geo::inner(&ci.space, ci.time, &vj.space, vj.time);
                ok &= cv * cv - 1.0 >= 1e-3;
                let ang = geo::exterior_angle_lifted(ci, vj, c);
                ok &= (1e-3..=PI - 1e-3).contains(&ang);
                let e = ang - aperture;
                ok &= e.abs() >= 1e-3;
                if i != j && e > 0.0 {
                    ok &= (e - margin).abs() >= 1e-3;
                }
            }
        }
        ok.then(|| {
            grad_check!(&p, |x| {
                let c = x[18].exp();
                loss::entailment(&lift_rows(&x[..9], 3, c), &lift_rows(&x[9..18], 3, c), c, margin, k)
            })
        })
    }));

    // box regression: 3 boxes, errors on both smooth-L1 branches
    out.push(worst_over(points, "box regression", || {
        let p = uniform(&mut r, 12, -2.0, 2.0);
        let gt: Vec<[f64; 4]> = (0..3).map(|_| [0.1, 0.2, 0.6, 0.7]).collect();
        let ok = p.iter().zip(gt.iter().flatten()).all(|(a, b)| ((a - b).abs() - 1.0).abs() >= 1e-3);
        ok.then(|| {
            grad_check!(&p, |x| {
                let pred: Vec<[_; 4]> = x.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
                loss::bbox_regression(&pred, &gt)
            })
        })
    }));

    // composite: the hyperbolic objective's own terms summed
    out.push(worst_over(points, "composite sum", || {
        let mut p = uniform(&mut r, 12, -1.0, 1.0);
        p.push(r.random_range(0.1..1.0));
        p.push(r.random_range(-0.5..0.5));
        Some(grad_check!(&p, |x| {
            let c = x[13].exp();
            let (v, t) = (chunk(&x[..6], 3), chunk(&x[6..12], 3));
            let hyp = loss::hyperbolic_contrastive(&lift_rows(&x[..6], 3, c), &lift_rows(&x[6..12], 3, c), c, x[12]);
            Real::sum(&[hyp, loss::euclidean_contrastive(&v, &t, x[12])])
        }))
    }));
    out
}

/// A small tree, corpus, and model for end-to-end checks.
pub struct Fixture {
    pub config: ExperimentConfig,
    pub tree: ConceptTree,
    pub records: Vec<CaptionRecord>,
    pub synonyms: SynonymMap,
}

impl Fixture {
    pub fn small(objective: Objective, seed: u64) -> Self {
        let config = ExperimentConfig {
            objective,
            dim: 8,
            heads: 2,
            batch: 4,
            branching: vec![2, 3],
            scenes: 80,
            steps: 50,
            eval_every: 10,
            seed,
            ..Default::default()
        };
        let tree = config.tree().unwrap();
        let corpus = synth_corpus(&tree, &config.corpus_config()).unwrap();
        Fixture {
            config,
            tree,
            records: corpus.records,
            synonyms: corpus.synonyms,
        }
    }

    pub fn state(&self) -> ModelState {
        ModelState::init(&self.config, &self.tree).unwrap()
    }

    pub fn dataset(&self, state: &ModelState) -> Dataset {
        Dataset::build(state, &self.records, &self.synonyms).unwrap()
    }
}

/// Full forward path (attention, positional encoding, fusion MLP, box head,
/// and the objective's losses) against central differences over every
/// parameter, at randomly perturbed parameters and random batches.
pub fn fused_gradient_suite(objective: Objective, points: usize, seed: u64) -> Outcome {
    let fx = Fixture::small(objective, seed);
    let base = fx.state();
    let data = fx.dataset(&base);
    let mut r = rng(seed ^ 0xf05e);
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mut state = base.clone();
        for (name, t) in state.params.iter_mut() {
            match name.as_str() {
                "log_tau" => t.data[0] = r.random_range(0.05f64..1.0).ln(),
                "raw_curvature" => t.data[0] = r.random_range(-1.0..1.0),
                _ => t.data.iter_mut().for_each(|v| *v += noise.sample(&mut r)),
            }
        }
        let batch: Vec<Example> = data.sample_batch(&mut r, 4);
        let (_, grads) = loss_and_gradient(&state, &batch).unwrap();
        let mut scratch = state.clone();
        let numeric = finite_diff(
            |p| {
                scratch.params = p.clone();
                Ok(evaluate_loss(&scratch, &batch)?.total)
            },
            &state.params,
            DEFAULT_STEP,
        )
        .unwrap();
        worst = worst.max(relative_error_params(grads.params(), &numeric));
    }
    Outcome::new(format!("fused path ({objective})"), points, worst, 1e-5)
}

// ------------------------------------------------------------ data oracles

fn random_boxes(r: &mut impl Rng, n: usize) -> Vec<BBox> {
    (0..n)
        .map(|_| {
            let (x, y) = (r.random_range(0.0..0.8), r.random_range(0.0..0.8));
            let (w, h) = (r.random_range(0.02..0.4), r.random_range(0.02..0.4));
            // coarse scores so ties occur
            let score = (r.random_range(0..12) as f64) / 12.0;
            BBox::new(x, y, x + w, y + h).unwrap().with_score(score)
        })
        .collect()
}

fn plain_iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter)
}

/// Boxes by descending score, ties by lower index.
fn priority_order(boxes: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.unwrap().total_cmp(&boxes[a].score.unwrap()).then(a.cmp(&b)));
    order
}

/// Exhaustive NMS reference: box `i` survives iff no surviving box of
/// higher priority overlaps it at or above the threshold. Resolved by
/// memoized recursion; returns survivors in priority order.
pub fn brute_force_nms(boxes: &[BBox], threshold: f64) -> Vec<usize> {
    let order = priority_order(boxes);
    let mut rank = vec![0; boxes.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    fn survives(i: usize, boxes: &[BBox], rank: &[usize], t: f64, memo: &mut [Option<bool>]) -> bool {
        if let Some(s) = memo[i] {
            return s;
        }
        let s = (0..boxes.len()).all(|j| {
            !(rank[j] < rank[i] && plain_iou(&boxes[i], &boxes[j]) >= t && survives(j, boxes, rank, t, memo))
        });
        memo[i] = Some(s);
        s
    }
    let mut memo = vec![None; boxes.len()];
    order
        .into_iter()
        .filter(|&i| survives(i, boxes, &rank, threshold, &mut memo))
        .collect()
}

/// Subset characterization for small instances: enumerate every subset and
/// keep those that are pairwise below threshold and in which every excluded
/// box overlaps a higher-priority member. Exactly one subset qualifies.
pub fn subset_nms(boxes: &[BBox], threshold: f64) -> Vec<usize> {
    let n = boxes.len();
    assert!(n <= 12);
    let order = priority_order(boxes);
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let overlap = |a: usize, b: usize| plain_iou(&boxes[a], &boxes[b]) >= threshold;
    let found: Vec<u32> = (0u32..(1 << n))
        .filter(|&mask| {
            let inside = |i: usize| mask & (1 << i) != 0;
            let independent = (0..n).all(|i| (0..n).all(|j| i == j || !inside(i) || !inside(j) || !overlap(i, j)));
            let covering =
                (0..n).all(|i| inside(i) || (0..n).any(|j| inside(j) && rank[j] < rank[i] && overlap(i, j)));
            independent && covering
        })
        .collect();
    assert_eq!(found.len(), 1, "suppression fixed point is not unique");
    order.into_iter().filter(|&i| found[0] & (1 << i) != 0).collect()
}

/// NMS against the exhaustive reference on random instances of at most 20
/// boxes; the count of disagreements.
pub fn nms_suite(instances: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let n = r.random_range(1..=20);
        let boxes = random_boxes(&mut r, n);
        let t = [0.3, 0.5, 0.7][r.random_range(0..3)];
        let got = nms_indices(&boxes, t).unwrap();
        let scores: Vec<f64> = got.iter().map(|&i| boxes[i].score.unwrap()).collect();
        let ordered = scores.windows(2).all(|w| w[0] >= w[1]);
        let mut agree = ordered && got == brute_force_nms(&boxes, t);
        if n <= 12 {
            agree &= got == subset_nms(&boxes, t);
        }
        if !agree {
            mismatches += 1;
        }
    }
    Outcome::new("nms vs exhaustive", instances, mismatches as f64, 0.0)
}

/// Grid tiling for k = 1..=8: worst deviation of total area from 1 and of
/// any pairwise IoU from 0, plus a coverage check on a fine lattice.
pub fn grid_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=8 {
        let g = grid_sample(k).unwrap();
        assert_eq!(g.len(), k * k);
        let area: f64 = g.iter().map(BBox::area).sum();
        worst = worst.max((area - 1.0).abs());
        for (i, a) in g.iter().enumerate() {
            for b in &g[i + 1..] {
                worst = worst.max(iou(a, b)).max(plain_iou(a, b));
            }
        }
        for sx in 0..50 {
            for sy in 0..50 {
                let (x, y) = ((sx as f64 + 0.5) / 50.0, (sy as f64 + 0.5) / 50.0);
                let hits = g
                    .iter()
                    .filter(|b| {
                        let [x1, y1, x2, y2] = b.corners();
                        x1 <= x && x < x2 && y1 <= y && y < y2
                    })
                    .count();
                worst = worst.max((hits as f64 - 1.0).abs());
            }
        }
    }
    Outcome::new("grid tiling", 8, worst, 1e-12)
}

/// A synonym map where class `c` is spelled `c` or `c + 100`.
pub fn fixture_synonyms(classes: &[usize]) -> SynonymMap {
    let map: BTreeMap<usize, BTreeSet<usize>> = classes.iter().map(|&c| (c, BTreeSet::from([c, c + 100]))).collect();
    SynonymMap::new(map).unwrap()
}

pub fn fixture_record(tokens: &[usize], truth: &[usize], hallucinated: &[usize]) -> CaptionRecord {
    let region = BBox::new(0.1, 0.1, 0.5, 0.5).unwrap();
    CaptionRecord {
        v: SCHEMA_VERSION.into(),
        scene: 0,
        source: RegionSource::Gt,
        region,
        tokens: tokens.to_vec(),
        true_objects: truth.iter().copied().collect(),
        hallucinated: hallucinated.iter().copied().collect(),
        object: truth.first().copied().unwrap_or(0),
        object_box: region,
    }
}

/// The three hand-computed fixtures: 0%, 100%, and 25%.
pub fn noise_fixture_suite() -> Vec<Outcome> {
    let syn = fixture_synonyms(&[1, 2, 3, 4, 5, 6]);
    let clean = vec![
        fixture_record(&[1, 102], &[1, 2], &[]),
        fixture_record(&[3], &[3], &[]),
        fixture_record(&[104, 9, 5], &[4, 5], &[]),
    ];
    // absent-only mentions; `true_objects` lists unmentioned classes
    let absent = vec![
        fixture_record(&[5], &[1], &[5]),
        fixture_record(&[106, 2], &[3], &[6, 2]),
    ];
    // one caption, four classes mentioned, one absent (102 spells class 2)
    let quarter = vec![fixture_record(&[1, 102, 3, 3, 104, 7], &[1, 3, 4], &[2])];
    let case = |name: &str, recs: &[CaptionRecord], expect: f64| {
        let got = caption_noise_metric(recs, &syn).unwrap();
        Outcome::new(name, recs.len(), (got - expect).abs(), 1e-12)
    };
    vec![
        case("noise fixture 0%", &clean, 0.0),
        case("noise fixture 100%", &absent, 100.0),
        case("noise fixture 25%", &quarter, 25.0),
    ]
}

/// Fraction of the first 10,000 generated captions carrying an injected
/// mention at `rho`.
pub fn injection_fraction(rho: f64, seed: u64) -> (usize, f64) {
    let tree = ConceptTree::balanced(&[4, 4, 4], 5).unwrap();
    let cfg = CorpusConfig {
        scenes: 2600,
        noise_rate: rho,
        seed,
        ..Default::default()
    };
    let corpus = synth_corpus(&tree, &cfg).unwrap();
    assert!(corpus.records.len() >= 10_000, "{}", corpus.records.len());
    let recs = &corpus.records[..10_000];
    let injected = recs.iter().filter(|r| !r.hallucinated.is_empty()).count();
    (recs.len(), injected as f64 / recs.len() as f64)
}

// ------------------------------------------------------------- statistics

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's two-sample t-test; two-sided p-value.
pub fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let ((ma, va), (mb, vb)) = (mean_var(a), mean_var(b));
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs())
}

/// One-sided paired t-test of `mean(x - y) < 0`; returns the t statistic
/// and p-value.
pub fn paired_less_p(x: &[f64], y: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let (m, v) = mean_var(&d);
    let t = m / (v / d.len() as f64).sqrt();
    (t, StudentsT::new(0.0, 1.0, d.len() as f64 - 1.0).unwrap().cdf(t))
}
