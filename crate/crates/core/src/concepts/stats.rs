//! Dialogue-level co-occurrence statistics backing PMI and keyword salience.
//!
//! The co-occurrence unit is the whole dialogue: persona sentences plus all
//! utterances (gold responses are utterances, distractor candidates are
//! excluded). Counts are presence counts, one per dialogue, for tokens and
//! unordered token pairs. Probabilities are add-one smoothed so unseen
//! tokens and pairs stay finite.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::concepts::stopwords::{is_content_token, Stopwords};
use crate::corpus::tokenizer::tokenize;
use crate::corpus::Dialogue;
use crate::error::{PipelineError, Result};

const CACHE_MAGIC: &[u8; 4] = b"CSTA";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct CooccurrenceStats {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    unigram: Vec<u32>,
    pairs: HashMap<(u32, u32), u32>,
    total_dialogues: u64,
}

impl CooccurrenceStats {
    /// Single pass over the corpus; per dialogue, every distinct content
    /// token counts once and every unordered pair of distinct content tokens
    /// counts once.
    pub fn build(dialogues: &[Dialogue], stopwords: &Stopwords) -> Self {
        let mut stats = CooccurrenceStats::default();
        for dialogue in dialogues {
            let mut present: HashSet<u32> = HashSet::new();
            let record = |text: &str, stats: &mut CooccurrenceStats, present: &mut HashSet<u32>| {
                for tok in tokenize(text) {
                    if is_content_token(&tok, stopwords) {
                        let id = stats.intern(tok);
                        present.insert(id);
                    }
                }
            };
            for p in &dialogue.persona {
                record(p, &mut stats, &mut present);
            }
            for u in &dialogue.utterances {
                record(&u.text, &mut stats, &mut present);
            }
            let mut ids: Vec<u32> = present.into_iter().collect();
            ids.sort_unstable();
            for (i, &a) in ids.iter().enumerate() {
                stats.unigram[a as usize] += 1;
                for &b in &ids[i + 1..] {
                    *stats.pairs.entry((a, b)).or_insert(0) += 1;
                }
            }
            stats.total_dialogues += 1;
        }
        stats
    }

    fn intern(&mut self, token: String) -> u32 {
        if let Some(&id) = self.index.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        self.unigram.push(0);
        id
    }

    pub fn total_dialogues(&self) -> u64 {
        self.total_dialogues
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Number of dialogues containing the token (0 for unseen tokens).
    pub fn dialogue_frequency(&self, token: &str) -> u32 {
        self.index
            .get(token)
            .map(|&id| self.unigram[id as usize])
            .unwrap_or(0)
    }

    pub fn pair_count(&self, a: &str, b: &str) -> u32 {
        let (Some(&ia), Some(&ib)) = (self.index.get(a), self.index.get(b)) else {
            return 0;
        };
        let key = if ia <= ib { (ia, ib) } else { (ib, ia) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    /// Pointwise mutual information with add-one smoothing, natural log:
    /// `ln(P(a,b) / (P(a) P(b)))` where every probability is
    /// `(count + 1) / (total + 1)`.
    pub fn pmi(&self, a: &str, b: &str) -> f64 {
        let d = self.total_dialogues as f64;
        let ca = self.dialogue_frequency(a) as f64;
        let cb = self.dialogue_frequency(b) as f64;
        let pair = self.pair_count(a, b) as f64;
        ((pair + 1.0) * (d + 1.0) / ((ca + 1.0) * (cb + 1.0))).ln()
    }

    /// Smoothed inverse dialogue frequency for keyword salience.
    pub fn idf(&self, token: &str) -> f64 {
        let d = self.total_dialogues as f64;
        let df = self.dialogue_frequency(token) as f64;
        ((d + 1.0) / (df + 1.0)).ln()
    }

    /// Versioned binary cache: token table plus count arrays.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.total_dialogues.to_le_bytes());
        buf.extend_from_slice(&(self.tokens.len() as u32).to_le_bytes());
        for tok in &self.tokens {
            let bytes = tok.as_bytes();
            buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
            buf.extend_from_slice(bytes);
        }
        for &c in &self.unigram {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let sorted: BTreeMap<(u32, u32), u32> =
            self.pairs.iter().map(|(&k, &v)| (k, v)).collect();
        buf.extend_from_slice(&(sorted.len() as u64).to_le_bytes());
        for ((a, b), c) in sorted {
            buf.extend_from_slice(&a.to_le_bytes());
            buf.extend_from_slice(&b.to_le_bytes());
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        file.write_all(&buf).map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| PipelineError::io(path, e))?;
        let mut r = Cursor::new(&bytes);
        let magic = r.take_n::<4>()?;
        if &magic != CACHE_MAGIC {
            return Err(PipelineError::Integrity("stats cache: bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take_n::<4>()?);
        if version != CACHE_VERSION {
            return Err(PipelineError::Integrity(format!(
                "stats cache: version {version} unsupported"
            )));
        }
        let total_dialogues = u64::from_le_bytes(r.take_n::<8>()?);
        let n_tokens = u32::from_le_bytes(r.take_n::<4>()?) as usize;
        let mut tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let len = u16::from_le_bytes(r.take_n::<2>()?) as usize;
            let raw = r.take(len)?;
            let tok = String::from_utf8(raw.to_vec())
                .map_err(|_| PipelineError::Integrity("stats cache: invalid utf-8".into()))?;
            tokens.push(tok);
        }
        let mut unigram = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            unigram.push(u32::from_le_bytes(r.take_n::<4>()?));
        }
        let n_pairs = u64::from_le_bytes(r.take_n::<8>()?) as usize;
        let mut pairs = HashMap::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let a = u32::from_le_bytes(r.take_n::<4>()?);
            let b = u32::from_le_bytes(r.take_n::<4>()?);
            let c = u32::from_le_bytes(r.take_n::<4>()?);
            pairs.insert((a, b), c);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(CooccurrenceStats {
            tokens,
            index,
            unigram,
            pairs,
            total_dialogues,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(PipelineError::Integrity("stats cache: truncated".into()));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn take_n<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn pair_count_bounded_by_unigrams() {
        let stats =
            CooccurrenceStats::build(&fixtures::concept_rich_corpus(), &Stopwords::default_set());
        for (&(a, b), &c) in &stats.pairs {
            assert!(c <= stats.unigram[a as usize]);
            assert!(c <= stats.unigram[b as usize]);
        }
    }

    #[test]
    fn cache_round_trip() {
        let stats =
            CooccurrenceStats::build(&fixtures::concept_rich_corpus(), &Stopwords::default_set());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.bin");
        stats.save(&path).unwrap();
        let loaded = CooccurrenceStats::load(&path).unwrap();
        assert_eq!(stats.tokens, loaded.tokens);
        assert_eq!(stats.unigram, loaded.unigram);
        assert_eq!(stats.pairs, loaded.pairs);
        assert_eq!(stats.total_dialogues, loaded.total_dialogues);
        assert_eq!(
            stats.pmi("weather", "beach"),
            loaded.pmi("weather", "beach")
        );
    }

    #[test]
    fn corrupt_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"NOPE").unwrap();
        assert!(CooccurrenceStats::load(&path).is_err());
    }
}
