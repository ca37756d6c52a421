//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lateral_core::head::log_softmax;
use lateral_core::linalg::Matrix;
use lateral_core::rng::DetRng;

/// Levenshtein distance by plain exponential recursion.
pub fn edit_distance_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_distance_recursive(ra, rb) + usize::from(x != y);
            let del = edit_distance_recursive(ra, b) + 1;
            let ins = edit_distance_recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// Random string of length `0..=max_len` over `alphabet`.
pub fn random_string(rng: &mut DetRng, alphabet: &[char], max_len: usize) -> String {
    let n = rng.below(max_len as u64 + 1) as usize;
    (0..n).map(|_| alphabet[rng.below(alphabet.len() as u64) as usize]).collect()
}

/// T×V matrix of row-normalized log-probabilities from Gaussian logits.
pub fn random_log_probs(rng: &mut DetRng, t: usize, v: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(t, v);
    for r in 0..t {
        let logits: Vec<f64> = (0..v).map(|_| scale * rng.normal()).collect();
        m.row_mut(r).copy_from_slice(&log_softmax(&logits));
    }
    m
}

/// Frames needed for a CTC alignment of `target`, counted directly.
pub fn needed_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// A random CTC instance with `T ≤ max_t`, `V ≤ max_v`, `L ≤ max_l` that
/// admits at least one alignment.
pub fn feasible_instance(rng: &mut DetRng, max_t: usize, max_v: usize, max_l: usize) -> (Matrix, Vec<usize>) {
    loop {
        let t = 1 + rng.below(max_t as u64) as usize;
        let v = 2 + rng.below(max_v as u64 - 1) as usize;
        let l = rng.below(max_l as u64 + 1) as usize;
        let target: Vec<usize> = (0..l).map(|_| 1 + rng.below(v as u64 - 1) as usize).collect();
        if needed_frames(&target) <= t {
            return (random_log_probs(rng, t, v, 1.0), target);
        }
    }
}

/// Scripted Adam on the scalar loss `½θ²` (gradient θ), with decoupled
/// decay and global-norm clipping, written directly from the update rule.
pub fn scripted_adam_quadratic(
    theta0: f64,
    steps: usize,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    wd: f64,
    clip: f64,
) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let mut g = theta;
        if g.abs() > clip {
            g *= clip / g.abs();
        }
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        theta = theta - lr * mh / (vh.sqrt() + eps) - lr * wd * theta;
        out.push(theta);
    }
    out
}

/// Central differences at `h` and `h/2` combined by Richardson
/// extrapolation; `f(e)` evaluates the function at offset `e`.
pub fn richardson_fd(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
