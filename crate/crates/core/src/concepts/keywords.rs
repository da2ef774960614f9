//! First-level keywords: single tokens ranked by TF-IDF salience.

use std::collections::HashMap;

use crate::concepts::stats::CooccurrenceStats;
use crate::concepts::stopwords::{is_content_token, Stopwords};
use crate::concepts::{Concept, ConceptSource};
use crate::corpus::tokenizer::tokenize;

/// Rank the content tokens of `text` by `tf * idf` (term frequency within
/// the text times smoothed inverse dialogue frequency from `stats`) and keep
/// the `top_m` best. Ties resolve to the earlier first occurrence, so the
/// output is deterministic.
pub fn extract_keywords(
    text: &str,
    stats: &CooccurrenceStats,
    top_m: usize,
    stopwords: &Stopwords,
    source: ConceptSource,
) -> Vec<Concept> {
    if top_m == 0 {
        return Vec::new();
    }
    let tokens = tokenize(text);
    let mut tf: HashMap<&str, usize> = HashMap::new();
    let mut first_pos: Vec<(String, usize)> = Vec::new();
    for (pos, tok) in tokens.iter().enumerate() {
        if !is_content_token(tok, stopwords) {
            continue;
        }
        match tf.get_mut(tok.as_str()) {
            Some(c) => *c += 1,
            None => {
                tf.insert(tok, 1);
                first_pos.push((tok.clone(), pos));
            }
        }
    }
    let mut scored: Vec<(Concept, usize)> = first_pos
        .into_iter()
        .map(|(surface, pos)| {
            let salience = tf[surface.as_str()] as f64 * stats.idf(&surface);
            (
                Concept {
                    surface,
                    score: salience,
                    source,
                },
                pos,
            )
        })
        .collect();
    scored.sort_by(|(a, pa), (b, pb)| b.score.total_cmp(&a.score).then(pa.cmp(pb)));
    scored.truncate(top_m);
    scored.into_iter().map(|(c, _)| c).collect()
}
