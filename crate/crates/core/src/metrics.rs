//! Edit-distance error rates and the relative-improvement aggregation used to
//! summarize FF-vs-LI comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Word edits and reference word count.
pub fn word_errors(reference: &str, hypothesis: &str) -> (usize, usize) {
    let r = words(reference);
    (edit_distance(&r, &words(hypothesis)), r.len())
}

/// Character edits (spaces included) and reference length.
pub fn char_errors(reference: &str, hypothesis: &str) -> (usize, usize) {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    (edit_distance(&r, &h), r.len())
}

/// Word error rate as a ratio (may exceed 1).
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let (e, n) = word_errors(reference, hypothesis);
    if n == 0 {
        return Err(Error::InvalidArgument("WER reference has no words".into()));
    }
    Ok(e as f64 / n as f64)
}

/// Character error rate as a ratio.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let (e, n) = char_errors(reference, hypothesis);
    if n == 0 {
        return Err(Error::InvalidArgument("CER reference is empty".into()));
    }
    Ok(e as f64 / n as f64)
}

/// `100 · (base − li) / base`.
pub fn relative_improvement(base: f64, li: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline must be > 0, got {base}")));
    }
    Ok(100.0 * (base - li) / base)
}

pub const SUBSETS: [&str; 5] = ["S", "M", "L", "XL", "XXL"];

/// One evaluation result; `wer` and `cer` are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub system: String,
    pub subset: String,
    pub corpus: String,
    pub wer: f64,
    pub cer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusImprovement {
    pub corpus: String,
    pub wer: f64,
    pub cer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub per_corpus: Vec<CorpusImprovement>,
    pub overall_wer: f64,
    pub overall_cer: f64,
}

impl ImprovementReport {
    pub fn corpus(&self, name: &str) -> Option<&CorpusImprovement> {
        self.per_corpus.iter().find(|c| c.corpus == name)
    }

    /// Tab-separated `corpus, metric, average_improvement` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("corpus\tmetric\taverage_improvement\n");
        let mut row = |corpus: &str, metric: &str, v: f64| {
            out.push_str(&format!("{corpus}\t{metric}\t{v:.4}\n"));
        };
        for c in &self.per_corpus {
            row(&c.corpus, "wer", c.wer);
            row(&c.corpus, "cer", c.cer);
        }
        row("overall", "wer", self.overall_wer);
        row("overall", "cer", self.overall_cer);
        out
    }
}

/// Per-corpus mean of the five per-subset relative improvements of
/// `li_system` over `base_system`, then the mean over corpora.
pub fn aggregate_improvements(
    records: &[EvalRecord],
    base_system: &str,
    li_system: &str,
) -> Result<ImprovementReport> {
    let mut corpora: Vec<&str> = Vec::new();
    for r in records {
        if !corpora.contains(&r.corpus.as_str()) {
            corpora.push(&r.corpus);
        }
    }
    if corpora.is_empty() {
        return Err(Error::InvalidArgument("no records to aggregate".into()));
    }
    let find = |system: &str, corpus: &str, subset: &str| {
        let mut it = records
            .iter()
            .filter(|r| r.system == system && r.corpus == corpus && r.subset == subset);
        match (it.next(), it.next()) {
            (Some(r), None) => Some(r),
            _ => None,
        }
    };
    let mut per_corpus = Vec::new();
    for corpus in &corpora {
        for r in records.iter().filter(|r| r.corpus == *corpus) {
            if !SUBSETS.contains(&r.subset.as_str()) || (r.system != base_system && r.system != li_system) {
                return Err(Error::Unmatched {
                    corpus: corpus.to_string(),
                    subset: r.subset.clone(),
                });
            }
        }
        let mut wer_sum = 0.0;
        let mut cer_sum = 0.0;
        for subset in SUBSETS {
            let unmatched = || Error::Unmatched {
                corpus: corpus.to_string(),
                subset: subset.to_string(),
            };
            let base = find(base_system, corpus, subset).ok_or_else(unmatched)?;
            let li = find(li_system, corpus, subset).ok_or_else(unmatched)?;
            wer_sum += relative_improvement(base.wer, li.wer)?;
            cer_sum += relative_improvement(base.cer, li.cer)?;
        }
        per_corpus.push(CorpusImprovement {
            corpus: corpus.to_string(),
            wer: wer_sum / SUBSETS.len() as f64,
            cer: cer_sum / SUBSETS.len() as f64,
        });
    }
    let n = per_corpus.len() as f64;
    Ok(ImprovementReport {
        overall_wer: per_corpus.iter().map(|c| c.wer).sum::<f64>() / n,
        overall_cer: per_corpus.iter().map(|c| c.cer).sum::<f64>() / n,
        per_corpus,
    })
}

/// FF and LI results on the five training-subset sizes across three
/// evaluation corpora (RSC, SSC, RTASC). Columns: system, subset, corpus,
/// wer, cer.
pub const PUBLISHED_RESULTS_TSV: &str = include_str!("../data/published_results.tsv");

/// Parses the tab-separated results table. Lines starting with `#` are
/// comments; the first non-comment line is the header.
pub fn parse_results_table(text: &str) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !saw_header {
            if fields != ["system", "subset", "corpus", "wer", "cer"] {
                return Err(Error::Format {
                    line: lineno,
                    message: format!("expected header system/subset/corpus/wer/cer, got {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::Format {
                line: lineno,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|e| Error::Format {
                line: lineno,
                message: format!("bad {what} value {s:?}: {e}"),
            })
        };
        records.push(EvalRecord {
            system: fields[0].to_string(),
            subset: fields[1].to_string(),
            corpus: fields[2].to_string(),
            wer: num(fields[3], "wer")?,
            cer: num(fields[4], "cer")?,
        });
    }
    if !saw_header {
        return Err(Error::Format {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(records)
}

/// Averages quoted for the embedded table: (corpus, metric, value).
pub const QUOTED_AGGREGATES: [(&str, &str, f64); 6] = [
    ("RSC", "wer", 17.8),
    ("RSC", "cer", 16.1),
    ("SSC", "cer", 11.4),
    ("RTASC", "wer", 9.0),
    ("overall", "wer", 12.5),
    ("overall", "cer", 13.1),
];

pub const QUOTED_TOLERANCE: f64 = 0.05;

impl ImprovementReport {
    pub fn lookup(&self, corpus: &str, metric: &str) -> Option<f64> {
        let pick = |w: f64, c: f64| match metric {
            "wer" => Some(w),
            "cer" => Some(c),
            _ => None,
        };
        if corpus == "overall" {
            pick(self.overall_wer, self.overall_cer)
        } else {
            self.corpus(corpus).and_then(|c| pick(c.wer, c.cer))
        }
    }
}
