//! Text featurization: tokenize, n-grams, top-k vocabulary, term frequencies.

use std::collections::HashMap;

use super::matrix::SparseRows;
use crate::error::{Error, Result};

/// Lowercases and splits on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Contiguous n-grams, joined with a single space.
pub fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

/// Fixed vocabulary mapping grams to feature indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn byte_size(&self) -> u64 {
        self.terms.iter().map(|t| t.len() as u64 + 8).sum()
    }
}

/// The `k` most frequent grams over the corpus; ties by lexicographic order.
pub fn top_k_features<'a, I>(corpus: I, k: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        for g in doc {
            *counts.entry(g.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::new(
        ranked
            .into_iter()
            .take(k)
            .map(|(t, _)| t.to_string())
            .collect(),
    )
}

/// Counts of in-vocabulary grams per record.
pub fn term_frequency<'a, I>(docs: I, vocab: &Vocabulary) -> SparseRows
where
    I: IntoIterator<Item = &'a [String]>,
{
    let rows = docs
        .into_iter()
        .map(|doc| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for g in doc {
                if let Some(i) = vocab.get(g) {
                    row.push((i, 1.0));
                }
            }
            row
        })
        .collect();
    SparseRows::from_unsorted(vocab.len(), rows).expect("vocabulary indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_and_bigrams() {
        let t = tokenize("A a b");
        assert_eq!(t, strings(&["a", "a", "b"]));
        assert_eq!(ngrams(&t, 2), strings(&["a a", "a b"]));
        assert_eq!(
            tokenize("Hello, World!  x-y"),
            strings(&["hello", "world", "x", "y"])
        );
        assert!(ngrams(&t, 4).is_empty());
    }

    #[test]
    fn top_k_counts_and_ties() {
        let docs = [tokenize("a b"), tokenize("a c")];
        let v = top_k_features(docs.iter().map(Vec::as_slice), 1).unwrap();
        assert_eq!(v.terms(), &strings(&["a"])[..]);
        let v = top_k_features(docs.iter().map(Vec::as_slice), 3).unwrap();
        assert_eq!(v.terms(), &strings(&["a", "b", "c"])[..]);
    }

    #[test]
    fn empty_vocabulary_errors() {
        let docs: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(
            top_k_features(docs.iter().map(Vec::as_slice), 5),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn sparsity_is_mean_distinct_grams() {
        let corpus = [
            "the cat sat on the mat",
            "the dog",
            "a cat a dog a cat",
            "mat",
        ];
        let docs: Vec<Vec<String>> = corpus.iter().map(|c| tokenize(c)).collect();
        let vocab = top_k_features(docs.iter().map(Vec::as_slice), 100).unwrap();
        let tf = term_frequency(docs.iter().map(Vec::as_slice), &vocab);
        let brute: f64 = docs
            .iter()
            .map(|d| d.iter().collect::<HashSet<_>>().len() as f64)
            .sum::<f64>()
            / docs.len() as f64;
        assert_eq!(tf.nnz() as f64 / tf.len() as f64, brute);
        let the = vocab.get("the").unwrap();
        assert_eq!(tf.row(0).iter().find(|e| e.0 == the).unwrap().1, 2.0);
    }
}
