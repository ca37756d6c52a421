//! Experiment configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; `#` starts a comment line. String values may be
//! wrapped in double quotes (needed for an alphabet containing a space).
//! Every key is optional and falls back to the default; unknown or repeated
//! keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::ctc::BeamConfig;
use crate::error::{Error, Result};
use crate::head::{Alphabet, HeadKind};
use crate::optim::AdamConfig;
use crate::synth::{validate_subsets, SubsetName, SubsetSpec, UtteranceShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam,
}

impl DecodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "greedy" => Ok(DecodeMode::Greedy),
            "beam" => Ok(DecodeMode::Beam),
            other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub d: usize,
    pub lexicon_size: usize,
    pub word_len_min: usize,
    pub word_len_max: usize,
    pub words_min: usize,
    pub words_max: usize,
    pub noise_sigma: f64,
    /// Utterance counts for S, M, L, XL, XXL.
    pub subset_counts: [usize; 5],
    pub test_size: usize,
    pub heads: Vec<HeadKind>,
    pub subsets: Vec<SubsetName>,
    pub k: f64,
    pub alphabet: Alphabet,
    pub optim: AdamConfig,
    pub epochs: f64,
    pub min_steps: usize,
    pub decode: DecodeMode,
    pub beam: BeamConfig,
    pub lm_order: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            d: 16,
            lexicon_size: 50,
            word_len_min: 2,
            word_len_max: 6,
            words_min: 1,
            words_max: 3,
            noise_sigma: 0.3,
            subset_counts: [25, 100, 1000, 5000, 15000],
            test_size: 200,
            heads: vec![HeadKind::FeedForward, HeadKind::LateralInhibition],
            subsets: SubsetName::ALL.to_vec(),
            k: crate::li::DEFAULT_K,
            alphabet: Alphabet::default(),
            optim: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            epochs: 1.0,
            min_steps: 200,
            decode: DecodeMode::Greedy,
            beam: BeamConfig::default(),
            lm_order: crate::lm::DEFAULT_ORDER,
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "d",
    "lexicon_size",
    "word_len_min",
    "word_len_max",
    "words_min",
    "words_max",
    "noise_sigma",
    "subset_s",
    "subset_m",
    "subset_l",
    "subset_xl",
    "subset_xxl",
    "test_size",
    "heads",
    "subsets",
    "k",
    "alphabet",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "clip_norm",
    "accumulation_steps",
    "batch_size",
    "epochs",
    "min_steps",
    "decode",
    "beam_width",
    "alpha",
    "beta",
    "lm_order",
    "out",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

pub fn parse_heads(v: &str) -> Result<Vec<HeadKind>> {
    let heads = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(HeadKind::parse)
        .collect::<Result<Vec<_>>>()?;
    if heads.is_empty() {
        return Err(Error::Config("at least one head kind is required".into()));
    }
    Ok(heads)
}

pub fn parse_subsets(v: &str) -> Result<Vec<SubsetName>> {
    let subsets = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(SubsetName::parse)
        .collect::<Result<Vec<_>>>()?;
    if subsets.is_empty() {
        return Err(Error::Config("at least one subset is required".into()));
    }
    Ok(subsets)
}

fn unquote(v: &str) -> &str {
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let v = unquote(raw.trim());
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "d" => self.d = parse_num(key, v)?,
            "lexicon_size" => self.lexicon_size = parse_num(key, v)?,
            "word_len_min" => self.word_len_min = parse_num(key, v)?,
            "word_len_max" => self.word_len_max = parse_num(key, v)?,
            "words_min" => self.words_min = parse_num(key, v)?,
            "words_max" => self.words_max = parse_num(key, v)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, v)?,
            "subset_s" => self.subset_counts[0] = parse_num(key, v)?,
            "subset_m" => self.subset_counts[1] = parse_num(key, v)?,
            "subset_l" => self.subset_counts[2] = parse_num(key, v)?,
            "subset_xl" => self.subset_counts[3] = parse_num(key, v)?,
            "subset_xxl" => self.subset_counts[4] = parse_num(key, v)?,
            "test_size" => self.test_size = parse_num(key, v)?,
            "heads" => self.heads = parse_heads(v)?,
            "subsets" => self.subsets = parse_subsets(v)?,
            "k" => self.k = parse_num(key, v)?,
            "alphabet" => self.alphabet = Alphabet::from_chars(v).map_err(|e| Error::Config(e.to_string()))?,
            "lr" => self.optim.lr = parse_num(key, v)?,
            "beta1" => self.optim.beta1 = parse_num(key, v)?,
            "beta2" => self.optim.beta2 = parse_num(key, v)?,
            "eps" => self.optim.eps = parse_num(key, v)?,
            "weight_decay" => self.optim.weight_decay = parse_num(key, v)?,
            "clip_norm" => self.optim.clip_norm = parse_num(key, v)?,
            "accumulation_steps" => self.optim.accumulation_steps = parse_num(key, v)?,
            "batch_size" => self.optim.batch_size = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "min_steps" => self.min_steps = parse_num(key, v)?,
            "decode" => self.decode = DecodeMode::parse(v)?,
            "beam_width" => self.beam.beam_width = parse_num(key, v)?,
            "alpha" => self.beam.alpha = parse_num(key, v)?,
            "beta" => self.beam.beta = parse_num(key, v)?,
            "lm_order" => self.lm_order = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        if self.lexicon_size == 0 || self.word_len_min == 0 || self.word_len_min > self.word_len_max {
            return bad("lexicon needs size >= 1 and 1 <= word_len_min <= word_len_max".into());
        }
        if self.words_min == 0 || self.words_min > self.words_max {
            return bad("need 1 <= words_min <= words_max".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        validate_subsets(&self.subset_specs())?;
        if self.test_size == 0 {
            return bad("test_size must be >= 1".into());
        }
        if !(self.k > 0.0) {
            return bad("k must be > 0".into());
        }
        if !('a'..='z').all(|c| self.alphabet.id_of(c).is_some()) || self.alphabet.id_of(' ').is_none() {
            return bad("alphabet must contain a-z and space".into());
        }
        self.optim.validate()?;
        if !(self.epochs > 0.0) {
            return bad("epochs must be > 0".into());
        }
        if self.beam.beam_width == 0 {
            return bad("beam_width must be >= 1".into());
        }
        if !(self.beam.alpha >= 0.0 && self.beam.beta >= 0.0) {
            return bad("alpha and beta must be >= 0".into());
        }
        if self.lm_order == 0 {
            return bad("lm_order must be >= 1".into());
        }
        if self.heads.is_empty() || self.subsets.is_empty() {
            return bad("heads and subsets must be non-empty".into());
        }
        Ok(())
    }

    pub fn subset_specs(&self) -> Vec<SubsetSpec> {
        SubsetName::ALL
            .iter()
            .zip(self.subset_counts)
            .map(|(&name, count)| SubsetSpec { name, count })
            .collect()
    }

    pub fn subset_count(&self, name: SubsetName) -> usize {
        self.subset_counts[name.index()]
    }

    pub fn utterance_shape(&self) -> UtteranceShape {
        UtteranceShape {
            words_min: self.words_min,
            words_max: self.words_max,
        }
    }

    /// Every key with its current value, in file order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let join = |v: Vec<&str>| v.join(",");
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "seed" => self.seed.to_string(),
                    "d" => self.d.to_string(),
                    "lexicon_size" => self.lexicon_size.to_string(),
                    "word_len_min" => self.word_len_min.to_string(),
                    "word_len_max" => self.word_len_max.to_string(),
                    "words_min" => self.words_min.to_string(),
                    "words_max" => self.words_max.to_string(),
                    "noise_sigma" => self.noise_sigma.to_string(),
                    "subset_s" => self.subset_counts[0].to_string(),
                    "subset_m" => self.subset_counts[1].to_string(),
                    "subset_l" => self.subset_counts[2].to_string(),
                    "subset_xl" => self.subset_counts[3].to_string(),
                    "subset_xxl" => self.subset_counts[4].to_string(),
                    "test_size" => self.test_size.to_string(),
                    "heads" => join(self.heads.iter().map(|h| h.as_str()).collect()),
                    "subsets" => join(self.subsets.iter().map(|s| s.as_str()).collect()),
                    "k" => self.k.to_string(),
                    "alphabet" => format!("\"{}\"", self.alphabet.symbols().iter().collect::<String>()),
                    "lr" => self.optim.lr.to_string(),
                    "beta1" => self.optim.beta1.to_string(),
                    "beta2" => self.optim.beta2.to_string(),
                    "eps" => self.optim.eps.to_string(),
                    "weight_decay" => self.optim.weight_decay.to_string(),
                    "clip_norm" => self.optim.clip_norm.to_string(),
                    "accumulation_steps" => self.optim.accumulation_steps.to_string(),
                    "batch_size" => self.optim.batch_size.to_string(),
                    "epochs" => self.epochs.to_string(),
                    "min_steps" => self.min_steps.to_string(),
                    "decode" => self.decode.as_str().to_string(),
                    "beam_width" => self.beam.beam_width.to_string(),
                    "alpha" => self.beam.alpha.to_string(),
                    "beta" => self.beam.beta.to_string(),
                    "lm_order" => self.lm_order.to_string(),
                    "out" => self.out.display().to_string(),
                    _ => unreachable!("KEYS and to_pairs out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

fn strip_prefix(e: &Error) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").map(str::to_string).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 99;
        cfg.heads = vec![HeadKind::LateralInhibition];
        cfg.decode = DecodeMode::Beam;
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(ExperimentConfig::parse("seed 1").is_err());
        assert!(ExperimentConfig::parse("seed = x").is_err());
    }

    #[test]
    fn comments_and_partial_files() {
        let cfg = ExperimentConfig::parse("# comment\n\nsubsets = s,m\nheads = li,ff\n").unwrap();
        assert_eq!(cfg.subsets, vec![SubsetName::S, SubsetName::M]);
        assert_eq!(cfg.heads, vec![HeadKind::LateralInhibition, HeadKind::FeedForward]);
        assert_eq!(cfg.d, 16);
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(ExperimentConfig::parse("subset_m = 10").is_err());
        assert!(ExperimentConfig::parse("lr = 0").is_err());
        assert!(ExperimentConfig::parse("alphabet = \"abc\"").is_err());
        assert!(ExperimentConfig::parse("heads = ff,xx").is_err());
        assert!(ExperimentConfig::parse("beam_width = 0").is_err());
    }
}
