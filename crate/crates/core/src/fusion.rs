//! Language- and spatially-aware region embeddings.
//!
//! `v_l` mixes text embeddings into a region embedding by multi-head cross
//! attention, `v_s` adds a sinusoidal box encoding and a projection of the
//! proposal features, and a two-layer SiLU MLP fuses `v_l + v_s`.
//!
//! Vectors are rows; every projection is a right-multiplication `x W`.

use crate::data::BBox;
use crate::error::{Error, Result};
use crate::grad::{Real, Tensor};

/// Default number of attention heads.
pub const DEFAULT_HEADS: usize = 4;
/// Length of the proposal feature vector `[cx, cy, w, h, objectness]`.
pub const PROPOSAL_FEATURE_DIM: usize = 5;
/// Wavelength base of the sinusoidal box encoding.
pub const PE_BASE: f64 = 100.0;

/// Dense matrix kept as columns, so `x W` is one dot product per column.
#[derive(Clone, Debug)]
pub struct Mat<S> {
    rows: usize,
    cols: Vec<Vec<S>>,
}

impl<S: Real> Mat<S> {
    /// From row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: &[S]) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix from {} values",
                data.len()
            )));
        }
        let columns = (0..cols)
            .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
            .collect();
        Ok(Mat { rows, cols: columns })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols.len()
    }

    pub fn at(&self, i: usize, j: usize) -> S {
        self.cols[j][i]
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.rows);
        self.cols.iter().map(|c| S::dot(x, c)).collect()
    }
}

impl Mat<f64> {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape.as_slice() {
            [r, c] => Self::from_row_major(*r, *c, &t.data),
            s => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_row_major(n, n, &data).expect("non-empty identity")
    }
}

/// Query, key, value, and output projections of multi-head attention.
#[derive(Clone, Debug)]
pub struct AttentionWeights<S = f64> {
    pub w_q: Mat<S>,
    pub w_k: Mat<S>,
    pub w_v: Mat<S>,
    pub w_out: Mat<S>,
    pub heads: usize,
}

impl<S: Real> AttentionWeights<S> {
    pub fn new(w_q: Mat<S>, w_k: Mat<S>, w_v: Mat<S>, w_out: Mat<S>, heads: usize) -> Result<Self> {
        let d = w_q.rows();
        let dh = w_q.cols();
        if heads == 0 || !dh.is_multiple_of(heads) {
            return Err(Error::Shape(format!("hidden width {dh} not divisible by {heads} heads")));
        }
        for (name, m, r, c) in [("w_k", &w_k, d, dh), ("w_v", &w_v, d, dh), ("w_out", &w_out, dh, d)] {
            if m.rows() != r || m.cols() != c {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let w = AttentionWeights { w_q, w_k, w_v, w_out, heads };
        if [&w.w_q, &w.w_k, &w.w_v, &w.w_out]
            .iter()
            .any(|m| m.cols.iter().flatten().any(|x| !x.value().is_finite()))
        {
            return Err(Error::NonFinite("attention weights".into()));
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_q.cols()
    }

    /// Project text rows to keys and values once for many queries.
    pub fn project_text(&self, text: &[Vec<S>]) -> Result<TextKv<S>> {
        if text.is_empty() {
            return Err(Error::Empty("text embeddings"));
        }
        if let Some(r) = text.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::Shape(format!("text row of length {} for d = {}", r.len(), self.dim())));
        }
        let keys: Vec<Vec<S>> = text.iter().map(|t| self.w_k.left_mul(t)).collect();
        let values: Vec<Vec<S>> = text.iter().map(|t| self.w_v.left_mul(t)).collect();
        let value_cols = (0..self.hidden())
            .map(|k| values.iter().map(|row| row[k]).collect())
            .collect();
        Ok(TextKv { keys, value_cols })
    }

    /// Attend from `v` over projected text; also returns each head's weights.
    pub fn attend(&self, v: &[S], kv: &TextKv<S>) -> Result<(Vec<S>, Vec<Vec<f64>>)> {
        self.attend_shifted(v, kv, 0.0)
    }

    fn attend_shifted(&self, v: &[S], kv: &TextKv<S>, logit_shift: f64) -> Result<(Vec<S>, Vec<Vec<f64>>)> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!("query of length {} for d = {}", v.len(), self.dim())));
        }
        let q = self.w_q.left_mul(v);
        let per_head = self.hidden() / self.heads;
        let scale = (self.hidden() as f64).sqrt();
        let mut mixed = Vec::with_capacity(self.hidden());
        let mut all_weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let span = h * per_head..(h + 1) * per_head;
            let logits: Vec<S> = kv
                .keys
                .iter()
                .map(|k| S::dot(&q[span.clone()], &k[span.clone()]) / scale + logit_shift)
                .collect();
            let lse = S::log_sum_exp(&logits);
            let weights: Vec<S> = logits.iter().map(|&s| (s - lse).exp()).collect();
            all_weights.push(weights.iter().map(|w| w.value()).collect());
            for k in span {
                mixed.push(S::dot(&weights, &kv.value_cols[k]));
            }
        }
        Ok((self.w_out.left_mul(&mixed), all_weights))
    }
}

/// Keys (one row per text embedding) and value columns.
#[derive(Clone, Debug)]
pub struct TextKv<S> {
    keys: Vec<Vec<S>>,
    value_cols: Vec<Vec<S>>,
}

/// Cross-modal attention of one region embedding over `n >= 1` text rows.
pub fn cross_modal_attention<S: Real>(v: &[S], text: &[Vec<S>], w: &AttentionWeights<S>) -> Result<Vec<S>> {
    let kv = w.project_text(text)?;
    Ok(w.attend(v, &kv)?.0)
}

/// A region: its visual embedding, box, and proposal features.
#[derive(Clone, Debug)]
pub struct RegionFeature<S = f64> {
    pub v: Vec<S>,
    pub bbox: BBox,
    pub p: Vec<f64>,
}

/// `[cx, cy, w, h, objectness]`, objectness 1 when the box is unscored.
pub fn proposal_features(b: &BBox) -> Vec<f64> {
    let [cx, cy, w, h] = b.center_size();
    vec![cx, cy, w, h, b.score.unwrap_or(1.0)]
}

/// Frequency of band `k` out of `bands`: `PE_BASE^(-k / bands)`.
pub fn pe_frequency(k: usize, bands: usize) -> f64 {
    PE_BASE.powf(-(k as f64) / bands as f64)
}

/// Sinusoidal encoding of `(cx, cy, w, h)` with `B = d / 8` bands per
/// coordinate. For coordinate `a` and band `k`, index `a * 2B + 2k` holds
/// `sin(f_k x_a)` and the next index holds `cos(f_k x_a)`.
pub fn box_encoding(b: &BBox, d: usize) -> Result<Vec<f64>> {
    if d == 0 || !d.is_multiple_of(8) {
        return Err(Error::Shape(format!("box encoding needs d divisible by 8, got {d}")));
    }
    b.validate()?;
    if !b.is_within_unit() {
        return Err(Error::BoxOutOfRange(format!("{:?}", b.corners())));
    }
    let bands = d / 8;
    let mut out = Vec::with_capacity(d);
    for x in b.center_size() {
        for k in 0..bands {
            let f = pe_frequency(k, bands);
            out.push((f * x).sin());
            out.push((f * x).cos());
        }
    }
    Ok(out)
}

/// `v + p W_p + PE(box)`.
pub fn positional_encode<S: Real>(rf: &RegionFeature<S>, proj: &Mat<S>) -> Result<Vec<S>> {
    let d = rf.v.len();
    let pe = box_encoding(&rf.bbox, d)?;
    if proj.rows() != rf.p.len() || proj.cols() != d {
        return Err(Error::Shape(format!(
            "proposal projection is {}x{}, expected {}x{d}",
            proj.rows(),
            proj.cols(),
            rf.p.len()
        )));
    }
    Ok(rf
        .v
        .iter()
        .zip(&pe)
        .enumerate()
        .map(|(j, (&v, &e))| {
            let proj_j = rf
                .p
                .iter()
                .enumerate()
                .map(|(i, &pi)| proj.at(i, j) * pi)
                .collect::<Vec<S>>();
            v + S::sum(&proj_j) + e
        })
        .collect())
}

/// Two-layer MLP `silu(x W1 + b1) W2 + b2`, hidden width `2d`.
#[derive(Clone, Debug)]
pub struct Mlp<S = f64> {
    pub w1: Mat<S>,
    pub b1: Vec<S>,
    pub w2: Mat<S>,
    pub b2: Vec<S>,
}

impl<S: Real> Mlp<S> {
    pub fn new(w1: Mat<S>, b1: Vec<S>, w2: Mat<S>, b2: Vec<S>) -> Result<Self> {
        let (d, h) = (w1.rows(), w1.cols());
        if b1.len() != h || w2.rows() != h || w2.cols() != d || b2.len() != d {
            return Err(Error::Shape("MLP layer shapes do not chain".into()));
        }
        Ok(Mlp { w1, b1, w2, b2 })
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn forward(&self, x: &[S]) -> Vec<S> {
        let hidden: Vec<S> = self
            .w1
            .left_mul(x)
            .into_iter()
            .zip(&self.b1)
            .map(|(z, &b)| (z + b).silu())
            .collect();
        self.w2
            .left_mul(&hidden)
            .into_iter()
            .zip(&self.b2)
            .map(|(z, &b)| z + b)
            .collect()
    }
}

impl Mlp<f64> {
    /// `W1 = [I, -I]`, `W2 = [I; -I]`, zero biases. Since
    /// `silu(x) - silu(-x) = x`, this is the identity map.
    pub fn identity(d: usize) -> Self {
        let mut w1 = vec![0.0; d * 2 * d];
        let mut w2 = vec![0.0; 2 * d * d];
        for i in 0..d {
            w1[i * 2 * d + i] = 1.0;
            w1[i * 2 * d + d + i] = -1.0;
            w2[i * d + i] = 1.0;
            w2[(d + i) * d + i] = -1.0;
        }
        Mlp {
            w1: Mat::from_row_major(d, 2 * d, &w1).unwrap(),
            b1: vec![0.0; 2 * d],
            w2: Mat::from_row_major(2 * d, d, &w2).unwrap(),
            b2: vec![0.0; d],
        }
    }
}

/// `MLP(v_l + v_s)`.
pub fn fuse<S: Real>(v_l: &[S], v_s: &[S], mlp: &Mlp<S>) -> Result<Vec<S>> {
    if v_l.len() != v_s.len() || v_l.len() != mlp.dim() {
        return Err(Error::Shape(format!(
            "fuse inputs {} and {} for MLP width {}",
            v_l.len(),
            v_s.len(),
            mlp.dim()
        )));
    }
    let x: Vec<S> = v_l.iter().zip(v_s).map(|(&a, &b)| a + b).collect();
    Ok(mlp.forward(&x))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        let data: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Mat::from_row_major(r, c, &data).unwrap()
    }

    fn random_weights(rng: &mut ChaCha8Rng, d: usize, heads: usize) -> AttentionWeights {
        AttentionWeights::new(
            random_mat(rng, d, d),
            random_mat(rng, d, d),
            random_mat(rng, d, d),
            random_mat(rng, d, d),
            heads,
        )
        .unwrap()
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn single_text_row_ignores_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_weights(&mut rng, 8, 4);
        let t = random_rows(&mut rng, 1, 8);
        let expect = w.w_out.left_mul(&w.w_v.left_mul(&t[0]));
        for _ in 0..3 {
            let v: Vec<f64> = random_rows(&mut rng, 1, 8).remove(0);
            let out = cross_modal_attention(&v, &t, &w).unwrap();
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn head_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_weights(&mut rng, 8, 4);
        let t = random_rows(&mut rng, 6, 8);
        let kv = w.project_text(&t).unwrap();
        let v = random_rows(&mut rng, 1, 8).remove(0);
        let (_, weights) = w.attend(&v, &kv).unwrap();
        assert_eq!(weights.len(), 4);
        for h in weights {
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_weights(&mut rng, 8, 2);
        let v = vec![0.1; 8];
        assert!(matches!(cross_modal_attention(&v, &[], &w), Err(Error::Empty(_))));
    }

    #[test]
    fn heads_must_divide_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b, c, d) = (
            random_mat(&mut rng, 6, 6),
            random_mat(&mut rng, 6, 6),
            random_mat(&mut rng, 6, 6),
            random_mat(&mut rng, 6, 6),
        );
        assert!(AttentionWeights::new(a, b, c, d, 4).is_err());
    }

    #[test]
    fn text_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_weights(&mut rng, 8, 4);
        let t = random_rows(&mut rng, 5, 8);
        let v = random_rows(&mut rng, 1, 8).remove(0);
        let base = cross_modal_attention(&v, &t, &w).unwrap();
        let perm: Vec<Vec<f64>> = [3, 0, 4, 1, 2].iter().map(|&i| t[i].clone()).collect();
        let out = cross_modal_attention(&v, &perm, &w).unwrap();
        for (a, b) in out.iter().zip(&base) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_weights(&mut rng, 8, 2);
        let t = random_rows(&mut rng, 4, 8);
        let kv = w.project_text(&t).unwrap();
        let v = random_rows(&mut rng, 1, 8).remove(0);
        let (base, _) = w.attend(&v, &kv).unwrap();
        let (shifted, _) = w.attend_shifted(&v, &kv, 1e4).unwrap();
        for (a, b) in shifted.iter().zip(&base) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn box_encoding_properties() {
        let a = BBox::new(0.1, 0.2, 0.5, 0.7).unwrap();
        assert_eq!(box_encoding(&a, 16).unwrap(), box_encoding(&a, 16).unwrap());
        assert!(box_encoding(&a, 32).unwrap().iter().all(|x| (-1.0..=1.0).contains(x)));

        let full = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let pe = box_encoding(&full, 16).unwrap();
        // (cx, cy, w, h) = (0.5, 0.5, 1, 1); two bands at frequencies 1 and 0.1.
        let f1 = PE_BASE.powf(-0.5);
        assert_eq!(pe[0], 0.5f64.sin());
        assert_eq!(pe[1], 0.5f64.cos());
        assert_eq!(pe[2], (f1 * 0.5).sin());
        assert_eq!(pe[3], (f1 * 0.5).cos());
        assert_eq!(pe[12], 1f64.sin());
        assert_eq!(pe[15], f1.cos());

        let outside = BBox::new(0.5, 0.5, 1.2, 0.9).unwrap();
        assert!(matches!(box_encoding(&outside, 16), Err(Error::BoxOutOfRange(_))));
        assert!(box_encoding(&a, 12).is_err());
    }

    #[test]
    fn identity_mlp_passes_sum() {
        let mlp = Mlp::identity(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_rows(&mut rng, 1, 8).remove(0);
        let b = random_rows(&mut rng, 1, 8).remove(0);
        let out = fuse(&a, &b, &mlp).unwrap();
        for i in 0..8 {
            assert!((out[i] - (a[i] + b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mlp = Mlp::new(
            random_mat(&mut rng, 4, 8),
            vec![0.0; 8],
            random_mat(&mut rng, 8, 4),
            vec![0.0; 4],
        )
        .unwrap();
        assert_eq!(fuse(&[0.0; 4], &[0.0; 4], &mlp).unwrap(), vec![0.0; 4]);
        assert!(fuse(&[0.0; 4], &[0.0; 3], &mlp).is_err());
    }
}
