//! Adam with decoupled weight decay, global-norm clipping and gradient
//! accumulation.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub accumulation_steps: usize,
    pub batch_size: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-3,
            clip_norm: 2.0,
            accumulation_steps: 8,
            batch_size: 4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be > 0");
        }
        if self.accumulation_steps == 0 || self.batch_size == 0 {
            return bad("accumulation_steps and batch_size must be >= 1");
        }
        Ok(())
    }

    /// Utterances per optimizer step.
    pub fn virtual_batch(&self) -> usize {
        self.batch_size * self.accumulation_steps
    }
}

/// A mutable view of one parameter tensor.
pub struct ParamTensor<'a> {
    pub values: &'a mut [f64],
    /// Whether weight decay applies. Biases are excluded.
    pub decay: bool,
}

impl<'a> ParamTensor<'a> {
    pub fn weight(values: &'a mut [f64]) -> Self {
        Self { values, decay: true }
    }

    pub fn bias(values: &'a mut [f64]) -> Self {
        Self { values, decay: false }
    }
}

/// Gradients shaped like a parameter set: one flat buffer per tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSet {
    pub parts: Vec<Vec<f64>>,
}

impl GradSet {
    pub fn new(parts: Vec<Vec<f64>>) -> Self {
        Self { parts }
    }

    pub fn zeros_like(shapes: &[usize]) -> Self {
        Self {
            parts: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.parts.iter_mut().flat_map(|p| p.iter_mut()) {
            *g *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &GradSet) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(dim_err("GradSet::add_assign", format!("{:?}", self.shapes()), format!("{:?}", other.shapes())));
        }
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Scales every gradient by `max_norm / ‖g‖` when the global L2 norm exceeds
/// `max_norm`. Returns the norm measured before clipping.
pub fn clip_global_norm(grads: &mut GradSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Running gradient sum over the micro-batches of one virtual batch.
#[derive(Clone, Debug)]
pub struct Accumulator {
    sum: GradSet,
    count: usize,
}

impl Accumulator {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            sum: GradSet::zeros_like(shapes),
            count: 0,
        }
    }

    pub fn accumulate(&mut self, grads: &GradSet) -> Result<()> {
        self.sum.add_assign(grads)?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean over `accumulation_steps` micro-batches; resets the accumulator.
    pub fn finalize(&mut self, accumulation_steps: usize) -> GradSet {
        let shapes = self.sum.shapes();
        let mut out = std::mem::replace(&mut self.sum, GradSet::zeros_like(&shapes));
        out.scale(1.0 / accumulation_steps as f64);
        self.count = 0;
        out
    }
}

/// Running-sum helper matching the functional form `acc + new`.
pub fn accumulate(acc: &GradSet, new: &GradSet) -> Result<GradSet> {
    let mut out = acc.clone();
    out.add_assign(new)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: GradSet,
    pub v: GradSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: GradSet::zeros_like(shapes),
            v: GradSet::zeros_like(shapes),
            t: 0,
        }
    }
}

/// One Adam update with decoupled weight decay:
/// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ` (decay only on tensors with `decay`).
pub fn adam_step(
    params: &mut [ParamTensor<'_>],
    grads: &GradSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let shapes: Vec<usize> = params.iter().map(|p| p.values.len()).collect();
    if shapes != grads.shapes() || shapes != state.m.shapes() || shapes != state.v.shapes() {
        return Err(dim_err("adam_step", format!("{shapes:?}"), format!("{:?}", grads.shapes())));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = &grads.parts[i];
        let m = &mut state.m.parts[i];
        let v = &mut state.v.parts[i];
        for j in 0..g.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let theta = p.values[j];
            let mut next = theta - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            if p.decay {
                next -= cfg.lr * cfg.weight_decay * theta;
            }
            p.values[j] = next;
        }
    }
    Ok(())
}
