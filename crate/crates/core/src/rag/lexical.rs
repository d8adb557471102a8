//! Tokenizer and BM25 scoring.

use std::collections::{BTreeMap, HashMap};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn term_frequencies(text: &str) -> BTreeMap<String, u32> {
    let mut tf = BTreeMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0) += 1;
    }
    tf
}

/// Collection statistics for BM25.
#[derive(Debug, Clone, Default)]
pub struct Bm25Stats {
    pub docs: usize,
    pub avg_len: f64,
    pub doc_freq: HashMap<String, usize>,
}

impl Bm25Stats {
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a BTreeMap<String, u32>>,
    {
        let mut stats = Bm25Stats::default();
        let mut total_len = 0u64;
        for tf in docs {
            stats.docs += 1;
            total_len += tf.values().map(|&n| u64::from(n)).sum::<u64>();
            for term in tf.keys() {
                *stats.doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
        }
        if stats.docs > 0 {
            stats.avg_len = total_len as f64 / stats.docs as f64;
        }
        stats
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 over the distinct query terms.
    pub fn score(&self, query_terms: &[String], doc: &BTreeMap<String, u32>) -> f64 {
        let doc_len: f64 = doc.values().map(|&n| f64::from(n)).sum();
        let norm = if self.avg_len > 0.0 {
            1.0 - BM25_B + BM25_B * doc_len / self.avg_len
        } else {
            1.0
        };
        let mut seen: Vec<&str> = Vec::new();
        let mut score = 0.0;
        for term in query_terms {
            if seen.contains(&term.as_str()) {
                continue;
            }
            seen.push(term);
            let Some(&tf) = doc.get(term) else { continue };
            let tf = f64::from(tf);
            score += self.idf(term) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
        }
        score
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("Head-and-Neck Angioedema: lips, TONGUE."),
            vec!["head", "and", "neck", "angioedema", "lips", "tongue"]
        );
    }

    #[test]
    fn rarer_terms_weigh_more() {
        let docs = [
            term_frequencies("angioedema reported rarely"),
            term_frequencies("nausea reported"),
            term_frequencies("dizziness reported"),
        ];
        let stats = Bm25Stats::build(docs.iter());
        assert!(stats.idf("angioedema") > stats.idf("reported"));
        let q = tokenize("angioedema");
        assert!(stats.score(&q, &docs[0]) > 0.0);
        assert_eq!(stats.score(&q, &docs[1]), 0.0);
    }
}
