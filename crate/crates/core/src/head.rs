//! Per-frame recognition head: optional lateral inhibition, dense projection
//! to the alphabet, log-softmax.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::li::{li_backward, li_forward, surrogate_sigmoid, LiCache, LiParams, SurrogateMode};
use crate::linalg::{Matrix, Vector};
use crate::rng::DetRng;

/// Output symbol inventory. Index 0 is the CTC blank; symbol `i` has id `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub const BLANK: usize = 0;

    pub fn new(symbols: Vec<char>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("alphabet needs at least one symbol".into()));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// Parses symbols from a string; every char is one symbol.
    pub fn from_chars(s: &str) -> Result<Self> {
        Self::new(s.chars().collect())
    }

    /// Symbols in id order, blank excluded.
    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Number of output classes including blank.
    pub fn size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn id_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c).map(|p| p + 1)
    }

    pub fn char_of(&self, id: usize) -> Option<char> {
        id.checked_sub(1).and_then(|i| self.symbols.get(i).copied())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| self.id_of(c).ok_or(Error::OutOfVocabulary(c)))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.char_of(i)).collect()
    }
}

impl Default for Alphabet {
    /// `a`–`z` followed by space (28 classes with blank).
    fn default() -> Self {
        let mut symbols: Vec<char> = ('a'..='z').collect();
        symbols.push(' ');
        Self { symbols }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeadKind {
    /// Dense projection only.
    #[serde(rename = "ff")]
    FeedForward,
    /// Lateral inhibition followed by the dense projection.
    #[serde(rename = "li")]
    LateralInhibition,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::FeedForward => "ff",
            HeadKind::LateralInhibition => "li",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ff" => Ok(HeadKind::FeedForward),
            "li" => Ok(HeadKind::LateralInhibition),
            other => Err(Error::Config(format!("unknown head kind {other:?} (expected ff or li)"))),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense projection `logits = h · P + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub p: Matrix,
    pub c: Vector,
}

impl DenseParams {
    pub fn new(p: Matrix, c: Vector) -> Result<Self> {
        if p.cols() != c.len() {
            return Err(dim_err("DenseParams::new", p.cols(), c.len()));
        }
        Ok(Self { p, c })
    }

    /// `P ~ U(-1/√d, 1/√d)`, `c = 0`.
    pub fn init(d: usize, v: usize, rng: &mut DetRng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let data = (0..d * v).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            p: Matrix::from_vec(d, v, data).expect("shape"),
            c: Vector::zeros(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticHead {
    pub kind: HeadKind,
    pub li: Option<LiParams>,
    pub dense: DenseParams,
}

impl AcousticHead {
    pub fn new(kind: HeadKind, li: Option<LiParams>, dense: DenseParams) -> Result<Self> {
        match (kind, &li) {
            (HeadKind::FeedForward, None) => {}
            (HeadKind::LateralInhibition, Some(l)) => {
                if l.dim() != dense.p.rows() {
                    return Err(dim_err("AcousticHead::new", dense.p.rows(), l.dim()));
                }
            }
            (HeadKind::FeedForward, Some(_)) => {
                return Err(Error::InvalidArgument("feed-forward head cannot carry LI params".into()))
            }
            (HeadKind::LateralInhibition, None) => {
                return Err(Error::InvalidArgument("LI head requires LI params".into()))
            }
        }
        Ok(Self { kind, li, dense })
    }

    /// Deterministic initialization. The dense layer is drawn from
    /// `dense_rng` and the LI layer from `li_rng`, so FF and LI heads built
    /// from the same dense stream share their projection weights.
    pub fn init(
        kind: HeadKind,
        d: usize,
        v: usize,
        k: f64,
        dense_rng: &mut DetRng,
        li_rng: &mut DetRng,
    ) -> Result<Self> {
        let dense = DenseParams::init(d, v, dense_rng);
        let li = match kind {
            HeadKind::FeedForward => None,
            HeadKind::LateralInhibition => Some(LiParams::init(d, k, li_rng)?),
        };
        Self::new(kind, li, dense)
    }

    pub fn input_dim(&self) -> usize {
        self.dense.p.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.dense.p.cols()
    }

    /// Parameter tensors in canonical order: `[W, b]` (LI only), then `[P, c]`.
    /// The flag marks tensors subject to weight decay.
    pub fn param_tensors_mut(&mut self) -> Vec<crate::optim::ParamTensor<'_>> {
        use crate::optim::ParamTensor;
        let mut out = Vec::with_capacity(4);
        if let Some(li) = self.li.as_mut() {
            out.push(ParamTensor::weight(li.w.as_mut_slice()));
            out.push(ParamTensor::bias(&mut li.b));
        }
        out.push(ParamTensor::weight(self.dense.p.as_mut_slice()));
        out.push(ParamTensor::bias(&mut self.dense.c));
        out
    }

    /// Tensor lengths in the order of [`param_tensors_mut`](Self::param_tensors_mut).
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(4);
        if let Some(li) = &self.li {
            out.push(li.w.as_slice().len());
            out.push(li.b.len());
        }
        out.push(self.dense.p.as_slice().len());
        out.push(self.dense.c.len());
        out
    }
}

/// Stable log-softmax (shift by max).
pub fn log_softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    Vector(logits.iter().map(|&l| l - lse).collect())
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    /// Input to the dense layer, one row per frame.
    pub hidden: Matrix,
    pub log_probs: Matrix,
    pub li: Vec<LiCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub dp: Matrix,
    pub dc: Vector,
    pub dw: Option<Matrix>,
    pub db: Option<Vector>,
}

impl HeadGrads {
    /// Flattened gradients in the same order as
    /// [`AcousticHead::param_tensors_mut`].
    pub fn into_grad_set(self) -> crate::optim::GradSet {
        let mut parts = Vec::with_capacity(4);
        if let (Some(dw), Some(db)) = (self.dw, self.db) {
            parts.push(dw.into_vec());
            parts.push(db.into_inner());
        }
        parts.push(self.dp.into_vec());
        parts.push(self.dc.into_inner());
        crate::optim::GradSet::new(parts)
    }
}

pub fn head_forward(frames: &Matrix, head: &AcousticHead) -> Result<(Matrix, HeadCache)> {
    forward_with(frames, head, SurrogateMode::Hard)
}

/// Forward pass with the LI gate replaced by `σ_k(z)`. Its cache, fed to
/// [`head_backward`] in [`SurrogateMode::Relaxed`], yields the exact gradient
/// of this relaxed function. Identical to [`head_forward`] for FF heads.
pub fn head_forward_relaxed(frames: &Matrix, head: &AcousticHead) -> Result<(Matrix, HeadCache)> {
    forward_with(frames, head, SurrogateMode::Relaxed)
}

fn forward_with(frames: &Matrix, head: &AcousticHead, mode: SurrogateMode) -> Result<(Matrix, HeadCache)> {
    let d = head.input_dim();
    let v = head.output_dim();
    if frames.rows() == 0 {
        return Err(Error::InvalidArgument("head_forward needs at least one frame".into()));
    }
    if frames.cols() != d {
        return Err(dim_err("head_forward", format!("{d} columns"), format!("{} columns", frames.cols())));
    }
    let t_len = frames.rows();
    let mut hidden = Matrix::zeros(t_len, d);
    let mut li_caches = Vec::new();
    let mut log_probs = Matrix::zeros(t_len, v);
    let mut logits = vec![0.0; v];
    for t in 0..t_len {
        let frame = frames.row(t);
        match &head.li {
            Some(li) => {
                let (y, cache) = li_forward(frame, li)?;
                match mode {
                    SurrogateMode::Hard => hidden.row_mut(t).copy_from_slice(&y),
                    SurrogateMode::Relaxed => {
                        for ((h, &x), &z) in hidden.row_mut(t).iter_mut().zip(frame).zip(cache.z.iter()) {
                            *h = x * surrogate_sigmoid(z, li.k);
                        }
                    }
                }
                li_caches.push(cache);
            }
            None => hidden.row_mut(t).copy_from_slice(frame),
        }
        logits.copy_from_slice(&head.dense.c);
        for (i, &hi) in hidden.row(t).iter().enumerate() {
            if hi == 0.0 {
                continue;
            }
            for (l, &pij) in logits.iter_mut().zip(head.dense.p.row(i)) {
                *l += hi * pij;
            }
        }
        log_probs.row_mut(t).copy_from_slice(&log_softmax(&logits));
    }
    Ok((
        log_probs.clone(),
        HeadCache {
            hidden,
            log_probs,
            li: li_caches,
        },
    ))
}

/// Chain rule through log-softmax, the dense layer and (for LI heads)
/// [`li_backward`]. `mode` must match the forward that produced `cache`.
pub fn head_backward(
    head: &AcousticHead,
    cache: &HeadCache,
    dlog_probs: &Matrix,
    mode: SurrogateMode,
) -> Result<HeadGrads> {
    let d = head.input_dim();
    let v = head.output_dim();
    let t_len = cache.log_probs.rows();
    if dlog_probs.rows() != t_len || dlog_probs.cols() != v {
        return Err(dim_err(
            "head_backward",
            format!("{t_len}x{v}"),
            format!("{}x{}", dlog_probs.rows(), dlog_probs.cols()),
        ));
    }
    let mut dp = Matrix::zeros(d, v);
    let mut dc = Vector::zeros(v);
    let mut dw = head.li.as_ref().map(|_| Matrix::zeros(d, d));
    let mut db = head.li.as_ref().map(|_| Vector::zeros(d));
    let mut dlogits = vec![0.0; v];
    let mut dh = vec![0.0; d];

    for t in 0..t_len {
        let g = dlog_probs.row(t);
        let lp = cache.log_probs.row(t);
        // d/dlogit_j of sum_i g_i * (logit_i - lse) = g_j - softmax_j * sum_i g_i
        let gsum: f64 = g.iter().sum();
        for j in 0..v {
            dlogits[j] = g[j] - lp[j].exp() * gsum;
        }
        for (dcj, &dl) in dc.iter_mut().zip(&dlogits) {
            *dcj += dl;
        }
        let h = cache.hidden.row(t);
        for i in 0..d {
            let prow = head.dense.p.row(i);
            let mut acc = 0.0;
            for j in 0..v {
                acc += dlogits[j] * prow[j];
            }
            dh[i] = acc;
            if h[i] != 0.0 {
                for (dpij, &dl) in dp.row_mut(i).iter_mut().zip(&dlogits) {
                    *dpij += h[i] * dl;
                }
            }
        }
        if let (Some(li), Some(dw), Some(db)) = (&head.li, dw.as_mut(), db.as_mut()) {
            let grads = li_backward(&cache.li[t], li, &dh, mode)?;
            for (a, b) in dw.as_mut_slice().iter_mut().zip(grads.dw.as_slice()) {
                *a += b;
            }
            for (a, b) in db.iter_mut().zip(grads.db.iter()) {
                *a += b;
            }
        }
    }
    Ok(HeadGrads { dp, dc, dw, db })
}
