//! Connectionist temporal classification: loss with analytic gradient,
//! a brute-force oracle, greedy decoding and prefix beam search with
//! character LM shallow fusion. Blank is class 0.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::head::Alphabet;
use crate::linalg::Matrix;
use crate::lm::CharNGramLm;

const BLANK: usize = Alphabet::BLANK;

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn lse(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtcResult {
    /// `−log p(target | log_probs)`.
    pub loss: f64,
    /// `∂loss/∂log_probs`, treating every entry as a free variable.
    pub grad: Matrix,
}

/// Minimum number of frames needed to emit `target`.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate(log_probs: &Matrix, target: &[usize]) -> Result<()> {
    if log_probs.rows() == 0 {
        return Err(Error::InvalidArgument("CTC needs at least one frame".into()));
    }
    let v = log_probs.cols();
    if let Some(&bad) = target.iter().find(|&&id| id == BLANK || id >= v) {
        return Err(Error::InvalidArgument(format!("label id {bad} outside [1, {}]", v - 1)));
    }
    let needed = min_frames(target);
    if log_probs.rows() < needed {
        return Err(Error::Infeasible {
            frames: log_probs.rows(),
            label_len: target.len(),
            repeats: needed - target.len(),
            needed,
        });
    }
    Ok(())
}

pub fn ctc_loss(log_probs: &Matrix, target: &[usize]) -> Result<CtcResult> {
    validate(log_probs, target)?;
    let t_len = log_probs.rows();
    let v = log_probs.cols();
    let s_len = 2 * target.len() + 1;
    let ext: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { BLANK } else { target[s / 2] })
        .collect();
    // skip transition s-2 -> s allowed for labels that differ from the previous label
    let can_skip: Vec<bool> = (0..s_len)
        .map(|s| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2])
        .collect();

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; t_len * s_len];
    let mut beta = vec![neg; t_len * s_len];
    let at = |t: usize, s: usize| t * s_len + s;

    alpha[at(0, 0)] = log_probs.get(0, BLANK);
    if s_len > 1 {
        alpha[at(0, 1)] = log_probs.get(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[at(t - 1, s)];
            if s >= 1 {
                acc = lse2(acc, alpha[at(t - 1, s - 1)]);
            }
            if can_skip[s] {
                acc = lse2(acc, alpha[at(t - 1, s - 2)]);
            }
            alpha[at(t, s)] = if acc == neg { neg } else { acc + log_probs.get(t, ext[s]) };
        }
    }

    // beta excludes the emission at its own frame
    beta[at(t_len - 1, s_len - 1)] = 0.0;
    if s_len > 1 {
        beta[at(t_len - 1, s_len - 2)] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[at(t + 1, s)] + log_probs.get(t + 1, ext[s]);
            if s + 1 < s_len {
                acc = lse2(acc, beta[at(t + 1, s + 1)] + log_probs.get(t + 1, ext[s + 1]));
            }
            if s + 2 < s_len && can_skip[s + 2] {
                acc = lse2(acc, beta[at(t + 1, s + 2)] + log_probs.get(t + 1, ext[s + 2]));
            }
            beta[at(t, s)] = acc;
        }
    }

    let mut log_p = alpha[at(t_len - 1, s_len - 1)];
    if s_len > 1 {
        log_p = lse2(log_p, alpha[at(t_len - 1, s_len - 2)]);
    }
    if !log_p.is_finite() {
        return Err(Error::InvalidArgument("target has zero probability under log_probs".into()));
    }

    let mut grad = Matrix::zeros(t_len, v);
    let mut occupancy = vec![neg; v];
    for t in 0..t_len {
        occupancy.iter_mut().for_each(|o| *o = neg);
        for s in 0..s_len {
            let g = alpha[at(t, s)] + beta[at(t, s)];
            occupancy[ext[s]] = lse2(occupancy[ext[s]], g);
        }
        for (k, &occ) in occupancy.iter().enumerate() {
            if occ != neg {
                grad.set(t, k, -(occ - log_p).exp());
            }
        }
    }
    Ok(CtcResult { loss: -log_p, grad })
}

/// Collapses a frame-level path: merge repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &id in path {
        if Some(id) != prev && id != BLANK {
            out.push(id);
        }
        prev = Some(id);
    }
    out
}

/// Loss by enumerating all `V^T` frame paths. Limited to `T ≤ 8`, `V ≤ 5`.
pub fn ctc_brute_force(log_probs: &Matrix, target: &[usize]) -> Result<f64> {
    let t_len = log_probs.rows();
    let v = log_probs.cols();
    if t_len > 8 || v > 5 {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to T <= 8 and V <= 5, got T={t_len}, V={v}"
        )));
    }
    if t_len == 0 {
        return Err(Error::InvalidArgument("CTC needs at least one frame".into()));
    }
    let mut path = vec![0usize; t_len];
    let mut terms = Vec::new();
    loop {
        if collapse(&path) == target {
            terms.push(path.iter().enumerate().map(|(t, &k)| log_probs.get(t, k)).sum::<f64>());
        }
        let mut i = 0;
        loop {
            if i == t_len {
                let total = lse(&terms);
                if terms.is_empty() {
                    let needed = min_frames(target);
                    return Err(Error::Infeasible {
                        frames: t_len,
                        label_len: target.len(),
                        repeats: needed.saturating_sub(target.len()),
                        needed,
                    });
                }
                return Ok(-total);
            }
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Per-frame argmax, lowest index on ties.
pub fn best_path(log_probs: &Matrix) -> Vec<usize> {
    (0..log_probs.rows())
        .map(|t| {
            let row = log_probs.row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn greedy_decode(log_probs: &Matrix, alphabet: &Alphabet) -> String {
    alphabet.decode(&collapse(&best_path(log_probs)))
}

/// Exact `log p(prefix)` under CTC, i.e. the total probability of every
/// frame path that collapses to `prefix`. Returns `-inf` when infeasible.
pub fn prefix_log_prob(log_probs: &Matrix, prefix: &[usize]) -> f64 {
    match ctc_loss(log_probs, prefix) {
        Ok(r) => -r.loss,
        Err(_) => f64::NEG_INFINITY,
    }
}

#[derive(Clone, Copy, Debug)]
struct Beam {
    blank: f64,
    non_blank: f64,
}

impl Beam {
    const EMPTY: Beam = Beam {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        lse2(self.blank, self.non_blank)
    }
}

/// Shallow-fusion settings for [`beam_decode`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// LM weight.
    pub alpha: f64,
    /// Per-character insertion bonus.
    pub beta: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 16,
            alpha: 0.5,
            beta: 0.0,
        }
    }
}

/// CTC prefix beam search. Each prefix is ranked by
/// `log p_ctc + alpha·log p_lm + beta·|prefix|`; the final ranking adds the
/// LM end-of-string probability so the LM term is the full string score.
pub fn beam_decode(
    log_probs: &Matrix,
    alphabet: &Alphabet,
    lm: &CharNGramLm,
    cfg: &BeamConfig,
) -> Result<String> {
    if cfg.beam_width == 0 {
        return Err(Error::InvalidArgument("beam_width must be >= 1".into()));
    }
    if !(cfg.alpha >= 0.0 && cfg.beta >= 0.0) {
        return Err(Error::InvalidArgument("alpha and beta must be >= 0".into()));
    }
    if log_probs.cols() != alphabet.size() {
        return Err(crate::error::dim_err("beam_decode", alphabet.size(), log_probs.cols()));
    }
    let use_lm = cfg.alpha > 0.0;
    let mut lm_cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    lm_cache.insert(Vec::new(), 0.0);
    let mut text_cache: BTreeMap<Vec<usize>, String> = BTreeMap::new();

    let mut beams: BTreeMap<Vec<usize>, Beam> = BTreeMap::new();
    beams.insert(
        Vec::new(),
        Beam {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    );
    let v = log_probs.cols();
    for t in 0..log_probs.rows() {
        let row = log_probs.row(t);
        let mut next: BTreeMap<Vec<usize>, Beam> = BTreeMap::new();
        for (prefix, beam) in &beams {
            let stay = next.entry(prefix.clone()).or_insert(Beam::EMPTY);
            stay.blank = lse2(stay.blank, beam.total() + row[BLANK]);
            let last = prefix.last().copied();
            for (c, &p) in row.iter().enumerate().take(v).skip(1) {
                if p == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(c);
                if Some(c) == last {
                    let e = next.entry(extended).or_insert(Beam::EMPTY);
                    e.non_blank = lse2(e.non_blank, beam.blank + p);
                    let s = next.get_mut(prefix).expect("inserted above");
                    s.non_blank = lse2(s.non_blank, beam.non_blank + p);
                } else {
                    let e = next.entry(extended).or_insert(Beam::EMPTY);
                    e.non_blank = lse2(e.non_blank, beam.total() + p);
                }
            }
        }
        if use_lm {
            for prefix in next.keys() {
                if !lm_cache.contains_key(prefix) {
                    let parent = &prefix[..prefix.len() - 1];
                    let parent_score = lm_cache[parent];
                    let parent_text = text_cache
                        .get(parent)
                        .cloned()
                        .unwrap_or_else(|| alphabet.decode(parent));
                    let c = alphabet.char_of(*prefix.last().expect("non-empty")).expect("valid id");
                    let inc = lm.continuation(&parent_text, c)?;
                    let mut text = parent_text;
                    text.push(c);
                    text_cache.insert(prefix.clone(), text);
                    lm_cache.insert(prefix.clone(), parent_score + inc);
                }
            }
        }
        let score = |prefix: &Vec<usize>, beam: &Beam| {
            let lm_part = if use_lm { cfg.alpha * lm_cache[prefix] } else { 0.0 };
            beam.total() + lm_part + cfg.beta * prefix.len() as f64
        };
        let mut ranked: Vec<(f64, Vec<usize>, Beam)> =
            next.into_iter().map(|(p, b)| (score(&p, &b), p, b)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        ranked.truncate(cfg.beam_width);
        beams = ranked.into_iter().map(|(_, p, b)| (p, b)).collect();
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for (prefix, beam) in &beams {
        let mut s = beam.total() + cfg.beta * prefix.len() as f64;
        if use_lm {
            let text = alphabet.decode(prefix);
            s += cfg.alpha * (lm_cache[prefix] + lm.end_score(&text)?);
        }
        let better = match &best {
            None => true,
            Some((bs, bp)) => s > *bs || (s == *bs && prefix < bp),
        };
        if better {
            best = Some((s, prefix.clone()));
        }
    }
    Ok(alphabet.decode(&best.map(|(_, p)| p).unwrap_or_default()))
}
