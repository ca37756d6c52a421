//! Experiment runner: corpus construction, FF/LI training per subset,
//! held-out evaluation and the comparison reports.

pub mod config;
pub mod train;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{AcousticHead, HeadKind};
use crate::lm::CharNGramLm;
use crate::metrics::{
    aggregate_improvements, parse_results_table, relative_improvement, ImprovementReport, QUOTED_AGGREGATES,
    QUOTED_TOLERANCE,
};
use crate::optim::AdamState;
use crate::synth::{make_lexicon, make_prototypes, CorpusGenerator, CorpusPlan, SubsetName, Utterance};

pub use config::{DecodeMode, ExperimentConfig};
pub use train::{evaluate, train_head, Decoder, EvalScores, TrainOutcome, TrainSettings};

/// Corpus label used in run-report aggregates.
pub const SYNTHETIC_CORPUS: &str = "synthetic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub subset: SubsetName,
    pub head: HeadKind,
    pub train_utterances: usize,
    pub optimizer_steps: usize,
    pub final_train_loss: f64,
    pub test_wer: f64,
    pub test_cer: f64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub subset: SubsetName,
    pub metric: String,
    pub ff: f64,
    pub li: f64,
    /// `None` when the FF error rate is 0 and the ratio is undefined.
    pub rel_improvement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub corpus: String,
    pub metric: String,
    pub average_improvement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
    pub results: Vec<ResultRow>,
    pub improvements: Vec<ComparisonRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl RunReport {
    pub fn result(&self, subset: SubsetName, head: HeadKind) -> Option<&ResultRow> {
        self.results.iter().find(|r| r.subset == subset && r.head == head)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with every timing field removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut copy = self.clone();
        for r in &mut copy.results {
            r.wall_clock_secs = 0.0;
        }
        let mut value = serde_json::to_value(&copy)?;
        if let Some(rows) = value.get_mut("results").and_then(|v| v.as_array_mut()) {
            for row in rows {
                if let Some(obj) = row.as_object_mut() {
                    obj.remove("wall_clock_secs");
                }
            }
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<6} {:<4} {:>8} {:>7} {:>11} {:>9} {:>9} {:>9}\n",
            "subset", "head", "utts", "steps", "train_loss", "WER(%)", "CER(%)", "secs"
        );
        for r in &self.results {
            out.push_str(&format!(
                "{:<6} {:<4} {:>8} {:>7} {:>11.4} {:>9.2} {:>9.2} {:>9.2}\n",
                r.subset.as_str(),
                r.head.as_str(),
                r.train_utterances,
                r.optimizer_steps,
                r.final_train_loss,
                r.test_wer,
                r.test_cer,
                r.wall_clock_secs
            ));
        }
        if !self.improvements.is_empty() {
            out.push('\n');
            out.push_str(&comparison_tsv(&self.improvements));
        }
        for a in &self.aggregates {
            out.push_str(&format!(
                "average {} improvement ({}): {}\n",
                a.metric,
                a.corpus,
                fmt_opt(a.average_improvement)
            ));
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Builds the corpus generator and subset plan for `cfg`.
pub fn corpus_for(cfg: &ExperimentConfig) -> Result<(CorpusGenerator, CorpusPlan)> {
    let generator = CorpusGenerator {
        lexicon: make_lexicon(cfg.lexicon_size, cfg.word_len_min, cfg.word_len_max, cfg.seed)?,
        protos: make_prototypes(&cfg.alphabet, cfg.d, cfg.seed)?,
        alphabet: cfg.alphabet.clone(),
        noise_sigma: cfg.noise_sigma,
        shape: cfg.utterance_shape(),
        master_seed: cfg.seed,
    };
    let plan = CorpusPlan::new(&cfg.subset_specs(), cfg.test_size, cfg.seed)?;
    Ok((generator, plan))
}

/// LM over the transcripts of a training subset.
pub fn train_lm(cfg: &ExperimentConfig, train: &[Utterance]) -> Result<CharNGramLm> {
    let texts: Vec<&str> = train.iter().map(|u| u.transcript.as_str()).collect();
    CharNGramLm::train_with_vocab(&texts, cfg.lm_order, cfg.alphabet.symbols().iter().copied())
}

pub struct TrainedModel {
    pub subset: SubsetName,
    pub outcome: TrainOutcome,
}

impl TrainedModel {
    pub fn head(&self) -> &AcousticHead {
        &self.outcome.head
    }

    pub fn optim(&self) -> &AdamState {
        &self.outcome.optim
    }
}

/// Trains every `(subset, head)` pair of `cfg` and evaluates on the shared
/// test set. Trainings run in parallel; rows come back in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, Vec<TrainedModel>)> {
    cfg.validate()?;
    let (generator, plan) = corpus_for(cfg)?;
    let test = generator.materialize(&plan.test)?;

    let mut subsets = cfg.subsets.clone();
    subsets.dedup();
    let mut heads = cfg.heads.clone();
    heads.dedup();

    let mut jobs = Vec::new();
    let mut data = Vec::new();
    for &subset in &subsets {
        let ids = plan
            .subset_ids(subset)
            .ok_or_else(|| Error::Config(format!("subset {subset} not configured")))?;
        let train = generator.materialize(ids)?;
        let lm = match cfg.decode {
            DecodeMode::Beam => Some(train_lm(cfg, &train)?),
            DecodeMode::Greedy => None,
        };
        data.push((subset, train, lm));
        for &kind in &heads {
            jobs.push((data.len() - 1, kind));
        }
    }

    let outcomes = jobs
        .par_iter()
        .map(|&(di, kind)| {
            let (subset, train, lm) = &data[di];
            let settings = TrainSettings {
                seed: cfg.seed,
                subset: *subset,
                kind,
                d: cfg.d,
                k: cfg.k,
                alphabet: &cfg.alphabet,
                optim: &cfg.optim,
                epochs: cfg.epochs,
                min_steps: cfg.min_steps,
            };
            let outcome = train_head(train, &settings)?;
            let decoder = Decoder::from_mode(cfg.decode, lm.as_ref(), cfg.beam);
            let scores = evaluate(&outcome.head, &test, &cfg.alphabet, &decoder)?;
            let row = ResultRow {
                subset: *subset,
                head: kind,
                train_utterances: train.len(),
                optimizer_steps: outcome.steps,
                final_train_loss: outcome.final_loss,
                test_wer: scores.wer,
                test_cer: scores.cer,
                wall_clock_secs: outcome.wall_clock_secs,
            };
            Ok((row, TrainedModel { subset: *subset, outcome }))
        })
        .collect::<Result<Vec<_>>>()?;

    let (results, models): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let mut report = RunReport {
        seed: cfg.seed,
        config: cfg.to_map(),
        results,
        improvements: Vec::new(),
        aggregates: Vec::new(),
    };
    if heads.contains(&HeadKind::FeedForward) && heads.contains(&HeadKind::LateralInhibition) {
        report.improvements = compare_heads(&report)?;
        report.aggregates = average_improvements(&report.improvements);
    }
    Ok((report, models))
}

/// `(FF, LI, relative improvement)` per subset for WER and CER.
pub fn compare_heads(report: &RunReport) -> Result<Vec<ComparisonRow>> {
    let mut subsets: Vec<SubsetName> = Vec::new();
    for r in &report.results {
        if !subsets.contains(&r.subset) {
            subsets.push(r.subset);
        }
    }
    let mut rows = Vec::new();
    for subset in subsets {
        let get = |kind: HeadKind| {
            report.result(subset, kind).ok_or_else(|| Error::Unmatched {
                corpus: format!("head {kind}"),
                subset: subset.to_string(),
            })
        };
        let ff = get(HeadKind::FeedForward)?;
        let li = get(HeadKind::LateralInhibition)?;
        for (metric, f, l) in [("wer", ff.test_wer, li.test_wer), ("cer", ff.test_cer, li.test_cer)] {
            rows.push(ComparisonRow {
                subset,
                metric: metric.to_string(),
                ff: f,
                li: l,
                rel_improvement: relative_improvement(f, l).ok(),
            });
        }
    }
    Ok(rows)
}

/// Mean relative improvement over subsets, per metric, skipping undefined ones.
pub fn average_improvements(rows: &[ComparisonRow]) -> Vec<AggregateRow> {
    ["wer", "cer"]
        .iter()
        .map(|&metric| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.metric == metric)
                .filter_map(|r| r.rel_improvement)
                .collect();
            AggregateRow {
                corpus: SYNTHETIC_CORPUS.to_string(),
                metric: metric.to_string(),
                average_improvement: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
            }
        })
        .collect()
}

/// Delimiter-separated comparison table: `subset, metric, ff, li, rel_improvement`.
pub fn comparison_tsv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("subset\tmetric\tff\tli\trel_improvement\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\n",
            r.subset.as_str(),
            r.metric,
            r.ff,
            r.li,
            fmt_opt(r.rel_improvement)
        ));
    }
    out
}

/// Aggregates the results table at `table` (or the embedded copy).
pub fn published_aggregates(table: Option<&Path>) -> Result<ImprovementReport> {
    let records = match table {
        Some(p) => parse_results_table(&std::fs::read_to_string(p)?)?,
        None => parse_results_table(crate::metrics::PUBLISHED_RESULTS_TSV)?,
    };
    aggregate_improvements(&records, "ff", "li")
}

/// Quoted averages that the report misses by more than the tolerance, as
/// `(corpus, metric, quoted, computed)`.
pub fn aggregate_regressions(report: &ImprovementReport) -> Vec<(String, String, f64, Option<f64>)> {
    QUOTED_AGGREGATES
        .iter()
        .filter_map(|&(corpus, metric, quoted)| {
            let got = report.lookup(corpus, metric);
            match got {
                Some(g) if (g - quoted).abs() <= QUOTED_TOLERANCE => None,
                _ => Some((corpus.to_string(), metric.to_string(), quoted, got)),
            }
        })
        .collect()
}

/// Writes the subset and test corpora of `cfg` as binary dumps under `dir`.
pub fn write_corpus(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (generator, plan) = corpus_for(cfg)?;
    let mut written = Vec::new();
    for &subset in &cfg.subsets {
        let ids = plan.subset_ids(subset).expect("all subsets planned");
        let path = dir.join(format!("subset_{}.bin", subset.as_str().to_lowercase()));
        crate::synth::write_utterances(&path, &generator.materialize(ids)?)?;
        written.push(path);
    }
    let path = dir.join("test.bin");
    crate::synth::write_utterances(&path, &generator.materialize(&plan.test)?)?;
    written.push(path);
    Ok(written)
}

pub fn checkpoint_name(subset: SubsetName, head: HeadKind) -> String {
    format!("{}_{}.ckpt", subset.as_str().to_lowercase(), head.as_str())
}
