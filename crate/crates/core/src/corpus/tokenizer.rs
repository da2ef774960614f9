//! Word-level tokenizer shared by every text-consuming module.
//!
//! Lowercase, split on whitespace, and split punctuation off as separate
//! tokens. No subword machinery: the encoders train their own embeddings, so
//! the token unit is the word. The same function is used for vocabulary
//! construction, sequence building, concept mining, and the annotation stubs,
//! which keeps token boundaries consistent across the pipeline.

/// Tokenize a string deterministically.
///
/// Every alphanumeric run becomes one token; every other non-whitespace
/// character becomes its own single-character token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if ch.is_alphanumeric() || ch == '\'' {
            // Apostrophes stay inside contractions ("don't" -> "don't").
            for lc in ch.to_lowercase() {
                word.push(lc);
            }
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(ch.to_lowercase().collect());
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}
