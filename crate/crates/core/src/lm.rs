//! Character n-gram language model with add-one smoothing and no backoff.
//!
//! Each string is scored as the token sequence `<s> c1 … cm </s>`. The
//! context of token `i` is the up-to-`n−1` tokens before it, so contexts
//! near the start are shorter and always begin with `<s>`. Every vocabulary
//! token (sentinels included) is a possible outcome, which makes
//! `P(c | ctx) = (count + 1) / (total(ctx) + |vocab|)` sum to one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Bos,
    Eos,
    Char(char),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharNGramLm {
    order: usize,
    chars: BTreeSet<char>,
    counts: BTreeMap<Vec<Token>, BTreeMap<Token, u64>>,
    totals: BTreeMap<Vec<Token>, u64>,
}

impl CharNGramLm {
    /// Trains on `corpus`; the vocabulary is the set of characters seen.
    pub fn train<S: AsRef<str>>(corpus: &[S], order: usize) -> Result<Self> {
        Self::train_with_vocab(corpus, order, std::iter::empty())
    }

    /// Trains on `corpus` with `extra` characters added to the vocabulary.
    pub fn train_with_vocab<S: AsRef<str>>(
        corpus: &[S],
        order: usize,
        extra: impl IntoIterator<Item = char>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("cannot train a language model on an empty corpus".into()));
        }
        let mut lm = Self {
            order,
            chars: extra.into_iter().collect(),
            counts: BTreeMap::new(),
            totals: BTreeMap::new(),
        };
        lm.add_corpus(corpus);
        Ok(lm)
    }

    /// Adds the counts of `corpus` to the model.
    pub fn add_corpus<S: AsRef<str>>(&mut self, corpus: &[S]) {
        for s in corpus {
            let tokens = Self::tokenize(s.as_ref());
            for c in s.as_ref().chars() {
                self.chars.insert(c);
            }
            for i in 1..tokens.len() {
                let ctx = self.context_of(&tokens[..i]).to_vec();
                *self.totals.entry(ctx.clone()).or_default() += 1;
                *self.counts.entry(ctx).or_default().entry(tokens[i]).or_default() += 1;
            }
        }
    }

    fn tokenize(s: &str) -> Vec<Token> {
        let mut tokens = Vec::with_capacity(s.chars().count() + 2);
        tokens.push(Token::Bos);
        tokens.extend(s.chars().map(Token::Char));
        tokens.push(Token::Eos);
        tokens
    }

    fn context_of<'a>(&self, history: &'a [Token]) -> &'a [Token] {
        let keep = self.order - 1;
        &history[history.len().saturating_sub(keep)..]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary size including `<s>` and `</s>`.
    pub fn vocab_size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = Token> + '_ {
        [Token::Bos, Token::Eos]
            .into_iter()
            .chain(self.chars.iter().map(|&c| Token::Char(c)))
    }

    pub fn count(&self, context: &[Token], next: Token) -> u64 {
        self.counts
            .get(context)
            .and_then(|m| m.get(&next))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[Token]) -> u64 {
        self.totals.get(context).copied().unwrap_or(0)
    }

    /// Smoothed `P(next | context)`; `context` is truncated to `n−1` tokens.
    pub fn prob(&self, context: &[Token], next: Token) -> f64 {
        let ctx = self.context_of(context);
        (self.count(ctx, next) + 1) as f64 / (self.context_total(ctx) + self.vocab_size() as u64) as f64
    }

    fn check(&self, s: &str) -> Result<()> {
        match s.chars().find(|c| !self.chars.contains(c)) {
            Some(c) => Err(Error::OutOfVocabulary(c)),
            None => Ok(()),
        }
    }

    fn history(&self, prefix: &str) -> Vec<Token> {
        let keep = self.order - 1;
        let mut toks = Self::tokenize(prefix);
        toks.pop();
        let start = toks.len().saturating_sub(keep);
        toks.split_off(start)
    }

    /// `log P(s)` including the end-of-string event.
    pub fn score(&self, s: &str) -> Result<f64> {
        self.check(s)?;
        let tokens = Self::tokenize(s);
        Ok((1..tokens.len()).map(|i| self.prob(&tokens[..i], tokens[i]).ln()).sum())
    }

    /// `log P(c | prefix)`.
    pub fn continuation(&self, prefix: &str, c: char) -> Result<f64> {
        self.check(prefix)?;
        if !self.chars.contains(&c) {
            return Err(Error::OutOfVocabulary(c));
        }
        Ok(self.prob(&self.history(prefix), Token::Char(c)).ln())
    }

    /// `log P(</s> | prefix)`.
    pub fn end_score(&self, prefix: &str) -> Result<f64> {
        self.check(prefix)?;
        Ok(self.prob(&self.history(prefix), Token::Eos).ln())
    }

    /// Text dump: `#order` and `#vocab` header lines, then sorted
    /// `context<TAB>char<TAB>count` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#order\t{}", self.order);
        let vocab: String = self.chars.iter().map(|&c| encode_char(c)).collect();
        let _ = writeln!(out, "#vocab\t{vocab}");
        let mut lines: Vec<String> = Vec::new();
        for (ctx, nexts) in &self.counts {
            let ctx_s: String = ctx.iter().map(|&t| encode_token(t)).collect();
            for (&next, &n) in nexts {
                lines.push(format!("{ctx_s}\t{}\t{n}", encode_token(next)));
            }
        }
        lines.sort();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    pub fn load(text: &str) -> Result<Self> {
        let mut order = None;
        let mut chars = None;
        let mut counts: BTreeMap<Vec<Token>, BTreeMap<Token, u64>> = BTreeMap::new();
        let mut totals: BTreeMap<Vec<Token>, u64> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let ferr = |m: String| Error::Format { line: lineno, message: m };
            if let Some(rest) = line.strip_prefix("#order\t") {
                order = Some(rest.parse::<usize>().map_err(|e| ferr(format!("bad order: {e}")))?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("#vocab\t") {
                let toks = decode_tokens(rest).map_err(ferr)?;
                let mut set = BTreeSet::new();
                for t in toks {
                    match t {
                        Token::Char(c) => {
                            set.insert(c);
                        }
                        _ => return Err(Error::Format { line: lineno, message: "sentinel in vocab".into() }),
                    }
                }
                chars = Some(set);
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(ferr(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let ctx = decode_tokens(fields[0]).map_err(ferr)?;
            let next = decode_tokens(fields[1]).map_err(ferr)?;
            if next.len() != 1 {
                return Err(ferr("next field must hold exactly one token".into()));
            }
            let n: u64 = fields[2].parse().map_err(|e| ferr(format!("bad count: {e}")))?;
            *totals.entry(ctx.clone()).or_default() += n;
            counts.entry(ctx).or_default().insert(next[0], n);
        }
        let order = order.ok_or(Error::Format { line: 1, message: "missing #order header".into() })?;
        if order == 0 {
            return Err(Error::Format { line: 1, message: "order must be >= 1".into() });
        }
        Ok(Self {
            order,
            chars: chars.unwrap_or_default(),
            counts,
            totals,
        })
    }
}

fn encode_char(c: char) -> String {
    match c {
        '\\' => "\\\\".into(),
        '\t' => "\\t".into(),
        '\n' => "\\n".into(),
        '\r' => "\\r".into(),
        '<' => "\\<".into(),
        c => c.to_string(),
    }
}

fn encode_token(t: Token) -> String {
    match t {
        Token::Bos => "<s>".into(),
        Token::Eos => "</s>".into(),
        Token::Char(c) => encode_char(c),
    }
}

fn decode_tokens(s: &str) -> std::result::Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("<s>") {
            out.push(Token::Bos);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("</s>") {
            out.push(Token::Eos);
            rest = r;
        } else if let Some(r) = rest.strip_prefix('\\') {
            let mut it = r.chars();
            let c = match it.next() {
                Some('\\') => '\\',
                Some('t') => '\t',
                Some('n') => '\n',
                Some('r') => '\r',
                Some('<') => '<',
                other => return Err(format!("bad escape {other:?}")),
            };
            out.push(Token::Char(c));
            rest = it.as_str();
        } else {
            let mut it = rest.chars();
            let c = it.next().expect("non-empty");
            if c == '<' {
                return Err("unescaped '<'".into());
            }
            out.push(Token::Char(c));
            rest = it.as_str();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Token::*;

    #[test]
    fn bigram_counts() {
        let lm = CharNGramLm::train(&["ab"], 2).unwrap();
        assert_eq!(lm.count(&[Bos], Char('a')), 1);
        assert_eq!(lm.count(&[Char('a')], Char('b')), 1);
        assert_eq!(lm.count(&[Char('b')], Eos), 1);
        assert_eq!(lm.counts.values().map(|m| m.len()).sum::<usize>(), 3);

        let lm = CharNGramLm::train(&["abab"], 2).unwrap();
        assert_eq!(lm.count(&[Char('a')], Char('b')), 2);
        assert_eq!(lm.count(&[Char('b')], Char('a')), 1);
    }

    #[test]
    fn retraining_doubles_counts() {
        let corpus = ["abc", "ca b"];
        let once = CharNGramLm::train(&corpus, 3).unwrap();
        let mut twice = once.clone();
        twice.add_corpus(&corpus);
        for (ctx, nexts) in &once.counts {
            for (&next, &n) in nexts {
                assert_eq!(twice.count(ctx, next), 2 * n);
            }
        }
    }

    #[test]
    fn add_one_probabilities() {
        let lm = CharNGramLm::train(&["abab"], 2).unwrap();
        assert_eq!(lm.vocab_size(), 4);
        assert_eq!(lm.prob(&[Char('a')], Char('b')), 0.5);
        assert_eq!(lm.prob(&[Char('a')], Char('a')), 1.0 / 6.0);
        let empty = lm.score("").unwrap();
        assert!((empty - lm.prob(&[Bos], Eos).ln()).abs() < 1e-15);
        assert_eq!(lm.prob(&[Bos], Eos), 1.0 / 5.0);
    }

    #[test]
    fn out_of_vocabulary() {
        let lm = CharNGramLm::train(&["ab"], 2).unwrap();
        assert!(matches!(lm.score("abz"), Err(Error::OutOfVocabulary('z'))));
        assert!(lm.continuation("a", 'q').is_err());
        assert!(CharNGramLm::train::<&str>(&[], 2).is_err());
        assert!(CharNGramLm::train(&["a"], 0).is_err());
    }

    #[test]
    fn telescoping_and_normalization() {
        let lm = CharNGramLm::train(&["abab", "ba", "aab b"], 4).unwrap();
        for s in ["abab", "", "b a", "bbbbba"] {
            let mut sum = 0.0;
            for (i, c) in s.char_indices() {
                sum += lm.continuation(&s[..i], c).unwrap();
            }
            sum += lm.end_score(s).unwrap();
            assert!((sum - lm.score(s).unwrap()).abs() <= 1e-12, "{s:?}");
        }
        for prefix in ["", "a", "ab", "abab", " b"] {
            let h = lm.history(prefix);
            let total: f64 = lm.vocabulary().map(|t| lm.prob(&h, t)).sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn short_prefix_uses_sentinel_context() {
        let lm = CharNGramLm::train(&["abc"], 4).unwrap();
        assert_eq!(lm.history(""), vec![Bos]);
        assert_eq!(lm.history("a"), vec![Bos, Char('a')]);
        assert_eq!(lm.history("abcd"), vec![Char('b'), Char('c'), Char('d')]);
    }

    #[test]
    fn dump_round_trip() {
        let lm = CharNGramLm::train_with_vocab(&["a<b\\c", "tab\there", "x y"], 3, ['z', '\n']).unwrap();
        let text = lm.dump();
        let back = CharNGramLm::load(&text).unwrap();
        assert_eq!(back, lm);
        assert_eq!(back.dump(), text);
        assert!(text.lines().skip(2).all(|l| l.split('\t').count() == 3));
    }

    #[test]
    fn load_reports_line_numbers() {
        let err = CharNGramLm::load("#order\t2\n#vocab\tab\na\tb\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }));
    }
}
