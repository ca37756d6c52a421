//! Training loop and held-out evaluation for one head.

use std::time::Instant;

use rayon::prelude::*;

use crate::ctc::{beam_decode, ctc_loss, greedy_decode, BeamConfig};
use crate::error::Result;
use crate::head::{head_backward, head_forward, AcousticHead, Alphabet, HeadKind};
use crate::li::SurrogateMode;
use crate::lm::CharNGramLm;
use crate::metrics::{char_errors, word_errors};
use crate::optim::{adam_step, clip_global_norm, Accumulator, AdamConfig, AdamState, GradSet};
use crate::rng::DetRng;
use crate::synth::{SubsetName, Utterance};

use super::config::DecodeMode;

/// Optimizer steps for `n` training utterances:
/// `max(min_steps, ceil(epochs · n / (batch_size · accumulation_steps)))`.
pub fn step_budget(n: usize, epochs: f64, min_steps: usize, cfg: &AdamConfig) -> usize {
    let proportional = (epochs * n as f64 / cfg.virtual_batch() as f64).ceil() as usize;
    proportional.max(min_steps)
}

/// CTC loss and parameter gradients for one utterance.
pub fn utterance_gradients(head: &AcousticHead, frames: &crate::linalg::Matrix, labels: &[usize]) -> Result<(f64, GradSet)> {
    let (log_probs, cache) = head_forward(frames, head)?;
    let ctc = ctc_loss(&log_probs, labels)?;
    let grads = head_backward(head, &cache, &ctc.grad, SurrogateMode::Hard)?;
    Ok((ctc.loss, grads.into_grad_set()))
}

/// Mean CTC loss over `utterances`.
pub fn mean_loss(head: &AcousticHead, utterances: &[Utterance], alphabet: &Alphabet) -> Result<f64> {
    let losses = utterances
        .par_iter()
        .map(|u| {
            let (lp, _) = head_forward(&u.frames, head)?;
            Ok(ctc_loss(&lp, &u.labels(alphabet)?)?.loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Cycles through a training set in reshuffled passes.
struct OrderStream {
    order: Vec<usize>,
    pos: usize,
    rng: DetRng,
}

impl OrderStream {
    fn new(n: usize, rng: DetRng) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        };
        s.refill();
        s
    }

    fn refill(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.pos = 0;
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.refill();
        }
        let i = self.order[self.pos];
        self.pos += 1;
        i
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: AcousticHead,
    pub optim: AdamState,
    pub steps: usize,
    pub final_loss: f64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainSettings<'a> {
    pub seed: u64,
    pub subset: SubsetName,
    pub kind: HeadKind,
    pub d: usize,
    pub k: f64,
    pub alphabet: &'a Alphabet,
    pub optim: &'a AdamConfig,
    pub epochs: f64,
    pub min_steps: usize,
}

/// Fresh head for `(seed, subset, kind)`. FF and LI heads for the same
/// subset share their dense initialization.
pub fn init_head(s: &TrainSettings<'_>) -> Result<AcousticHead> {
    let sub = s.subset.index() as u64;
    let mut dense_rng = DetRng::derive(s.seed, "dense-init", &[sub]);
    let mut li_rng = DetRng::derive(s.seed, "li-init", &[sub]);
    AcousticHead::init(s.kind, s.d, s.alphabet.size(), s.k, &mut dense_rng, &mut li_rng)
}

/// Adam over virtual batches of `batch_size × accumulation_steps`
/// utterances: per micro-batch mean gradient, accumulation, global-norm
/// clipping, then one optimizer step.
pub fn train_head(train: &[Utterance], s: &TrainSettings<'_>) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut head = init_head(s)?;
    let labels: Vec<Vec<usize>> = train.iter().map(|u| u.labels(s.alphabet)).collect::<Result<_>>()?;
    let shapes = head.param_shapes();
    let mut state = AdamState::new(&shapes);
    let mut acc = Accumulator::new(&shapes);
    let steps = step_budget(train.len(), s.epochs, s.min_steps, s.optim);
    let mut order = OrderStream::new(train.len(), DetRng::derive(s.seed, "order", &[s.subset.index() as u64]));
    let bs = s.optim.batch_size;

    for _ in 0..steps {
        let picks: Vec<usize> = (0..s.optim.virtual_batch()).map(|_| order.next()).collect();
        let per_utt = picks
            .par_iter()
            .map(|&i| utterance_gradients(&head, &train[i].frames, &labels[i]))
            .collect::<Result<Vec<_>>>()?;
        for micro in per_utt.chunks(bs) {
            let mut sum = GradSet::zeros_like(&shapes);
            for (_, g) in micro {
                sum.add_assign(g)?;
            }
            sum.scale(1.0 / micro.len() as f64);
            acc.accumulate(&sum)?;
        }
        let mut grads = acc.finalize(s.optim.accumulation_steps);
        clip_global_norm(&mut grads, s.optim.clip_norm);
        adam_step(&mut head.param_tensors_mut(), &grads, &mut state, s.optim)?;
    }

    let final_loss = mean_loss(&head, train, s.alphabet)?;
    Ok(TrainOutcome {
        head,
        optim: state,
        steps,
        final_loss,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Corpus-level error rates in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalScores {
    pub wer: f64,
    pub cer: f64,
}

pub enum Decoder<'a> {
    Greedy,
    Beam { lm: &'a CharNGramLm, cfg: BeamConfig },
}

impl<'a> Decoder<'a> {
    pub fn from_mode(mode: DecodeMode, lm: Option<&'a CharNGramLm>, cfg: BeamConfig) -> Self {
        match (mode, lm) {
            (DecodeMode::Beam, Some(lm)) => Decoder::Beam { lm, cfg },
            _ => Decoder::Greedy,
        }
    }
}

/// Decodes every utterance and returns total word and character error
/// rates (edits summed over the set divided by summed reference lengths).
pub fn evaluate(head: &AcousticHead, test: &[Utterance], alphabet: &Alphabet, decoder: &Decoder<'_>) -> Result<EvalScores> {
    let counts = test
        .par_iter()
        .map(|u| {
            let (lp, _) = head_forward(&u.frames, head)?;
            let hyp = match decoder {
                Decoder::Greedy => greedy_decode(&lp, alphabet),
                Decoder::Beam { lm, cfg } => beam_decode(&lp, alphabet, lm, cfg)?,
            };
            let (we, wn) = word_errors(&u.transcript, &hyp);
            let (ce, cn) = char_errors(&u.transcript, &hyp);
            Ok([we, wn, ce, cn])
        })
        .collect::<Result<Vec<[usize; 4]>>>()?;
    let mut tot = [0usize; 4];
    for c in counts {
        for i in 0..4 {
            tot[i] += c[i];
        }
    }
    Ok(EvalScores {
        wer: 100.0 * tot[0] as f64 / tot[1].max(1) as f64,
        cer: 100.0 * tot[2] as f64 / tot[3].max(1) as f64,
    })
}
