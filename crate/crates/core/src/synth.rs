//! Deterministic synthetic corpus: per-character prototype embeddings,
//! noisy frame sequences, and S/M/L/XL/XXL subsets drawn without
//! replacement from a shared pool with a disjoint held-out test set.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc::min_frames;
use crate::error::{Error, Result};
use crate::head::Alphabet;
use crate::linalg::{Matrix, Vector};
use crate::rng::DetRng;

pub const MIN_FRAMES_PER_CHAR: usize = 2;
pub const MAX_FRAMES_PER_CHAR: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubsetName {
    S,
    M,
    L,
    XL,
    XXL,
}

impl SubsetName {
    pub const ALL: [SubsetName; 5] = [SubsetName::S, SubsetName::M, SubsetName::L, SubsetName::XL, SubsetName::XXL];

    pub fn as_str(self) -> &'static str {
        match self {
            SubsetName::S => "S",
            SubsetName::M => "M",
            SubsetName::L => "L",
            SubsetName::XL => "XL",
            SubsetName::XXL => "XXL",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(SubsetName::S),
            "M" => Ok(SubsetName::M),
            "L" => Ok(SubsetName::L),
            "XL" => Ok(SubsetName::XL),
            "XXL" => Ok(SubsetName::XXL),
            other => Err(Error::Config(format!("unknown subset {other:?}"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for SubsetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub name: SubsetName,
    pub count: usize,
}

impl SubsetSpec {
    /// 25 / 100 / 1000 / 5000 / 15000 utterances.
    pub fn defaults() -> Vec<SubsetSpec> {
        [25, 100, 1000, 5000, 15000]
            .into_iter()
            .zip(SubsetName::ALL)
            .map(|(count, name)| SubsetSpec { name, count })
            .collect()
    }
}

/// Checks that counts are strictly increasing in S < M < L < XL < XXL order.
pub fn validate_subsets(specs: &[SubsetSpec]) -> Result<()> {
    let mut sorted = specs.to_vec();
    sorted.sort_by_key(|s| s.name);
    for w in sorted.windows(2) {
        if w[0].name == w[1].name {
            return Err(Error::Config(format!("subset {} listed twice", w[0].name)));
        }
        if w[0].count >= w[1].count {
            return Err(Error::Config(format!(
                "subset counts must increase: {}={} vs {}={}",
                w[0].name, w[0].count, w[1].name, w[1].count
            )));
        }
    }
    if sorted.iter().any(|s| s.count == 0) {
        return Err(Error::Config("subset counts must be positive".into()));
    }
    Ok(())
}

/// One embedding vector per alphabet symbol (blank excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub vectors: Vec<Vector>,
    pub seed: u64,
}

impl Prototypes {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }
}

pub fn make_prototypes(alphabet: &Alphabet, d: usize, seed: u64) -> Result<Prototypes> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("prototype dimension must be >= 2, got {d}")));
    }
    let mut rng = DetRng::derive(seed, "prototypes", &[d as u64]);
    let vectors = alphabet
        .symbols()
        .iter()
        .map(|_| Vector((0..d).map(|_| rng.normal()).collect()))
        .collect();
    Ok(Prototypes { vectors, seed })
}

/// `size` distinct lowercase words with lengths in `[min_len, max_len]` and
/// no doubled letters.
pub fn make_lexicon(size: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Vec<String>> {
    if size == 0 || min_len == 0 || min_len > max_len {
        return Err(Error::Config(format!(
            "bad lexicon shape: size={size}, word lengths {min_len}..={max_len}"
        )));
    }
    let mut rng = DetRng::derive(seed, "lexicon", &[]);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(size);
    let mut attempts = 0usize;
    while words.len() < size {
        attempts += 1;
        if attempts > size * 1000 {
            return Err(Error::Config(format!("cannot draw {size} distinct words")));
        }
        let len = rng.range_inclusive(min_len, max_len);
        // no letter directly repeats: identical adjacent characters would
        // need a blank inside a run of same-prototype frames
        let mut w = String::with_capacity(len);
        let mut prev = None;
        while w.len() < len {
            let c = (b'a' + rng.below(26) as u8) as char;
            if Some(c) != prev {
                w.push(c);
                prev = Some(c);
            }
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    Ok(words)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: u64,
    pub frames: Matrix,
    pub transcript: String,
    pub seed: u64,
}

impl Utterance {
    pub fn labels(&self, alphabet: &Alphabet) -> Result<Vec<usize>> {
        alphabet.encode(&self.transcript)
    }
}

/// Builds one utterance: words joined by single spaces, each character
/// emitted for 2 to 5 frames of `prototype + N(0, σ²)` noise.
pub fn synth_utterance<S: AsRef<str>>(
    words: &[S],
    protos: &Prototypes,
    alphabet: &Alphabet,
    noise_sigma: f64,
    seed: u64,
) -> Result<Utterance> {
    if words.is_empty() {
        return Err(Error::InvalidArgument("utterance needs at least one word".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let transcript = words.iter().map(|w| w.as_ref()).collect::<Vec<_>>().join(" ");
    let ids = alphabet.encode(&transcript)?;
    if ids.len() > protos.vectors.len() + 1 || ids.iter().any(|&i| i > protos.vectors.len()) {
        return Err(Error::InvalidArgument("prototypes do not cover the alphabet".into()));
    }
    let d = protos.dim();
    let mut rng = DetRng::derive(seed, "utterance", &[]);
    let counts: Vec<usize> = ids
        .iter()
        .map(|_| rng.range_inclusive(MIN_FRAMES_PER_CHAR, MAX_FRAMES_PER_CHAR))
        .collect();
    let t_len: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(t_len * d);
    for (&id, &n) in ids.iter().zip(&counts) {
        let proto = &protos.vectors[id - 1];
        for _ in 0..n {
            for &p in proto.iter() {
                let noise = if noise_sigma > 0.0 { noise_sigma * rng.normal() } else { 0.0 };
                data.push(p + noise);
            }
        }
    }
    Ok(Utterance {
        id: 0,
        frames: Matrix::from_vec(t_len, d, data)?,
        transcript,
        seed,
    })
}

/// How pool utterances are composed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtteranceShape {
    pub words_min: usize,
    pub words_max: usize,
}

impl Default for UtteranceShape {
    fn default() -> Self {
        Self { words_min: 1, words_max: 3 }
    }
}

/// Which pool ids belong to each subset and to the test set.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusPlan {
    pub pool_size: usize,
    pub subsets: Vec<(SubsetSpec, Vec<u64>)>,
    pub test: Vec<u64>,
    pub master_seed: u64,
}

impl CorpusPlan {
    /// Pool is `max(count) + test_size` utterances; the last `test_size` ids
    /// form the test set and every subset samples the rest without replacement.
    pub fn new(sizes: &[SubsetSpec], test_size: usize, master_seed: u64) -> Result<Self> {
        validate_subsets(sizes)?;
        if test_size == 0 {
            return Err(Error::Config("test_size must be >= 1".into()));
        }
        let train_pool = sizes.iter().map(|s| s.count).max().unwrap_or(0);
        let pool_size = train_pool + test_size;
        let test = (train_pool as u64..pool_size as u64).collect();
        let subsets = sizes
            .iter()
            .map(|spec| {
                let mut rng = DetRng::derive(master_seed, "subset", &[spec.name.index() as u64]);
                let mut ids: Vec<u64> = (0..train_pool as u64).collect();
                // partial Fisher-Yates: first `count` slots are the sample
                for i in 0..spec.count {
                    let j = i + rng.below((train_pool - i) as u64) as usize;
                    ids.swap(i, j);
                }
                ids.truncate(spec.count);
                ids.sort_unstable();
                (*spec, ids)
            })
            .collect();
        Ok(Self {
            pool_size,
            subsets,
            test,
            master_seed,
        })
    }

    pub fn subset_ids(&self, name: SubsetName) -> Option<&[u64]> {
        self.subsets.iter().find(|(s, _)| s.name == name).map(|(_, ids)| ids.as_slice())
    }
}

/// Everything needed to regenerate pool utterances on demand.
#[derive(Clone, Debug)]
pub struct CorpusGenerator {
    pub lexicon: Vec<String>,
    pub protos: Prototypes,
    pub alphabet: Alphabet,
    pub noise_sigma: f64,
    pub shape: UtteranceShape,
    pub master_seed: u64,
}

impl CorpusGenerator {
    /// Pool utterance `id`; its words and seed come from a stream derived
    /// from `(master_seed, id)`, so ids can be generated in any order.
    pub fn utterance(&self, id: u64) -> Result<Utterance> {
        let mut rng = DetRng::derive(self.master_seed, "pool", &[id]);
        let n_words = rng.range_inclusive(self.shape.words_min, self.shape.words_max);
        let words: Vec<&str> = (0..n_words)
            .map(|_| self.lexicon[rng.below(self.lexicon.len() as u64) as usize].as_str())
            .collect();
        let seed = rng.next_u64();
        let mut u = synth_utterance(&words, &self.protos, &self.alphabet, self.noise_sigma, seed)?;
        u.id = id;
        let needed = min_frames(&u.labels(&self.alphabet)?);
        if u.frames.rows() < needed {
            return Err(Error::Infeasible {
                frames: u.frames.rows(),
                label_len: u.transcript.chars().count(),
                repeats: needed - u.transcript.chars().count(),
                needed,
            });
        }
        Ok(u)
    }

    /// Generates `ids` in parallel; output order follows `ids`.
    pub fn materialize(&self, ids: &[u64]) -> Result<Vec<Utterance>> {
        ids.par_iter().map(|&id| self.utterance(id)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub subsets: Vec<(SubsetSpec, Vec<Utterance>)>,
    pub test: Vec<Utterance>,
}

pub fn make_corpus(
    generator: &CorpusGenerator,
    sizes: &[SubsetSpec],
    test_size: usize,
) -> Result<Corpus> {
    if generator.lexicon.is_empty() {
        return Err(Error::InvalidArgument("lexicon is empty".into()));
    }
    let plan = CorpusPlan::new(sizes, test_size, generator.master_seed)?;
    let subsets = plan
        .subsets
        .iter()
        .map(|(spec, ids)| Ok((*spec, generator.materialize(ids)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        subsets,
        test: generator.materialize(&plan.test)?,
    })
}

const CORPUS_MAGIC: &[u8; 8] = b"LICORPUS";
const CORPUS_VERSION: u32 = 1;

/// Binary dump of utterances: magic, version, count, then per utterance
/// id, seed, transcript (length-prefixed UTF-8), rows, cols and row-major
/// frames. All integers `u64`/`u32` and floats `f64`, little-endian.
pub fn write_utterances(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CORPUS_MAGIC);
    buf.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(utterances.len() as u64).to_le_bytes());
    for u in utterances {
        buf.extend_from_slice(&u.id.to_le_bytes());
        buf.extend_from_slice(&u.seed.to_le_bytes());
        buf.extend_from_slice(&(u.transcript.len() as u64).to_le_bytes());
        buf.extend_from_slice(u.transcript.as_bytes());
        buf.extend_from_slice(&(u.frames.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(u.frames.cols() as u64).to_le_bytes());
        for v in u.frames.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_utterances(path: &Path) -> Result<Vec<Utterance>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = crate::checkpoint::ByteReader::new(&bytes);
    if r.take(8)? != CORPUS_MAGIC {
        return Err(Error::Checkpoint("not a corpus dump".into()));
    }
    let version = r.u32()?;
    if version != CORPUS_VERSION {
        return Err(Error::Checkpoint(format!("unsupported corpus version {version}")));
    }
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u64()?;
        let seed = r.u64()?;
        let len = r.u64()? as usize;
        let transcript = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("bad transcript: {e}")))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let data = r.f64s(rows * cols)?;
        out.push(Utterance {
            id,
            frames: Matrix::from_vec(rows, cols, data)?,
            transcript,
            seed,
        });
    }
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(sigma: f64, seed: u64) -> CorpusGenerator {
        let alphabet = Alphabet::default();
        CorpusGenerator {
            lexicon: make_lexicon(50, 2, 6, seed).unwrap(),
            protos: make_prototypes(&alphabet, 16, seed).unwrap(),
            alphabet,
            noise_sigma: sigma,
            shape: UtteranceShape::default(),
            master_seed: seed,
        }
    }

    #[test]
    fn prototypes_deterministic_and_distinct() {
        let a = Alphabet::default();
        let p1 = make_prototypes(&a, 16, 3).unwrap();
        let p2 = make_prototypes(&a, 16, 3).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1.vectors, make_prototypes(&a, 16, 4).unwrap().vectors);
        assert_eq!(p1.vectors.len(), a.symbols().len());
        for i in 0..p1.vectors.len() {
            for j in 0..i {
                assert_ne!(p1.vectors[i], p1.vectors[j]);
            }
        }
        assert!(make_prototypes(&a, 1, 0).is_err());
    }

    #[test]
    fn lexicon_properties() {
        let lex = make_lexicon(50, 2, 6, 1).unwrap();
        assert_eq!(lex.len(), 50);
        assert_eq!(lex.iter().collect::<BTreeSet<_>>().len(), 50);
        assert!(lex.iter().all(|w| (2..=6).contains(&w.len()) && w.bytes().all(|b| b.is_ascii_lowercase())));
        assert!(lex.iter().all(|w| w.as_bytes().windows(2).all(|p| p[0] != p[1])));
        assert_eq!(lex, make_lexicon(50, 2, 6, 1).unwrap());
    }

    #[test]
    fn zero_noise_frames_equal_prototypes() {
        let g = generator(0.0, 5);
        let u = synth_utterance(&["ab", "c"], &g.protos, &g.alphabet, 0.0, 9).unwrap();
        assert_eq!(u.transcript, "ab c");
        let ids = g.alphabet.encode(&u.transcript).unwrap();
        let mut t = 0;
        let mut frame_ids = Vec::new();
        while t < u.frames.rows() {
            let row = u.frames.row(t);
            let id = (1..=27).find(|&i| &*g.protos.vectors[i - 1] == row).unwrap();
            frame_ids.push(id);
            t += 1;
        }
        assert_eq!(crate::ctc::collapse(&frame_ids), ids);
    }

    #[test]
    fn frame_count_bounds() {
        let g = generator(0.3, 2);
        for id in 0..1000 {
            let u = g.utterance(id).unwrap();
            let n = u.transcript.chars().count();
            assert!(u.frames.rows() >= 2 * n && u.frames.rows() <= 5 * n);
        }
    }

    #[test]
    fn utterance_determinism_and_errors() {
        let g = generator(0.3, 2);
        assert_eq!(g.utterance(17).unwrap(), g.utterance(17).unwrap());
        assert!(synth_utterance(&["aB"], &g.protos, &g.alphabet, 0.1, 1).is_err());
        assert!(synth_utterance::<&str>(&[], &g.protos, &g.alphabet, 0.1, 1).is_err());
        assert!(synth_utterance(&["a"], &g.protos, &g.alphabet, -1.0, 1).is_err());
    }

    #[test]
    fn plan_sizes_disjoint_and_without_replacement() {
        let specs = SubsetSpec::defaults();
        let plan = CorpusPlan::new(&specs, 200, 7).unwrap();
        let test: BTreeSet<u64> = plan.test.iter().copied().collect();
        assert_eq!(test.len(), 200);
        for (spec, ids) in &plan.subsets {
            assert_eq!(ids.len(), spec.count);
            let set: BTreeSet<u64> = ids.iter().copied().collect();
            assert_eq!(set.len(), ids.len());
            assert!(set.is_disjoint(&test));
        }
        assert_eq!(plan, CorpusPlan::new(&specs, 200, 7).unwrap());
    }

    #[test]
    fn plan_validation() {
        let mut bad = SubsetSpec::defaults();
        bad[1].count = 10;
        assert!(CorpusPlan::new(&bad, 10, 0).is_err());
        assert!(CorpusPlan::new(&SubsetSpec::defaults(), 0, 0).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let g = generator(0.3, 4);
        let ids: Vec<u64> = (0..64).collect();
        let par = g.materialize(&ids).unwrap();
        let seq: Vec<Utterance> = ids.iter().map(|&i| g.utterance(i).unwrap()).collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn small_corpus() {
        let g = generator(0.3, 4);
        let specs = vec![SubsetSpec { name: SubsetName::S, count: 5 }, SubsetSpec { name: SubsetName::M, count: 12 }];
        let c = make_corpus(&g, &specs, 4).unwrap();
        assert_eq!(c.subsets[0].1.len(), 5);
        assert_eq!(c.subsets[1].1.len(), 12);
        assert_eq!(c.test.len(), 4);
    }

    #[test]
    fn dump_round_trip() {
        let g = generator(0.3, 4);
        let us = g.materialize(&[0, 3, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_utterances(&p, &us).unwrap();
        assert_eq!(read_utterances(&p).unwrap(), us);
    }
}
