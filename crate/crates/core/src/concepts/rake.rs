//! RAKE key phrases.
//!
//! Candidate phrases are the maximal token runs between stopwords and
//! punctuation. Over the candidate list, each word's score is
//! degree / frequency, where the degree counts the word itself plus its
//! co-occurrences (so a word's degree contribution from one phrase is that
//! phrase's length). A phrase scores the sum of its member word scores.

use std::collections::HashMap;

use crate::concepts::stopwords::{is_content_token, Stopwords};
use crate::concepts::{Concept, ConceptSource};
use crate::corpus::tokenizer::tokenize;

/// Extract phrases sorted by descending score, ties in lexicographic surface
/// order. Duplicate surfaces are collapsed into one entry.
pub fn rake_phrases(text: &str, stopwords: &Stopwords, source: ConceptSource) -> Vec<Concept> {
    let tokens = tokenize(text);
    let mut phrases: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for tok in &tokens {
        if is_content_token(tok, stopwords) {
            current.push(tok);
        } else if !current.is_empty() {
            phrases.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        phrases.push(current);
    }

    let mut freq: HashMap<&str, f64> = HashMap::new();
    let mut degree: HashMap<&str, f64> = HashMap::new();
    for phrase in &phrases {
        for &word in phrase {
            *freq.entry(word).or_insert(0.0) += 1.0;
            *degree.entry(word).or_insert(0.0) += phrase.len() as f64;
        }
    }

    let mut seen: HashMap<String, f64> = HashMap::new();
    let mut ordered: Vec<String> = Vec::new();
    for phrase in &phrases {
        let surface = phrase.join(" ");
        if seen.contains_key(&surface) {
            continue;
        }
        let score: f64 = phrase.iter().map(|&w| degree[w] / freq[w]).sum();
        seen.insert(surface.clone(), score);
        ordered.push(surface);
    }

    let mut out: Vec<Concept> = ordered
        .into_iter()
        .map(|surface| {
            let score = seen[&surface];
            Concept {
                surface,
                score,
                source,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.surface.cmp(&b.surface))
    });
    out
}
