//! Corpus statistics and evaluation metrics.
//!
//! Everything here is pure text math: the canonical tokenizer, n-gram
//! profiles, distinct-n, BLEU, ROUGE-1/L, recall@n and MRR@n, plus the
//! corpus-level statistics and runner glue in the submodules. All metric
//! values except counts and average words per turn lie in `[0, 1]`.

mod rank;

pub use rank::{recall_mrr, RankMetrics, RecEvalRecord};

use std::collections::HashMap;

use thiserror::Error;

/// Epsilon substituted for zero clipped counts in BLEU, so short texts with
/// partial overlap do not collapse to zero at high orders.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("corpus contains no n-grams of the requested order")]
    EmptyCorpus,
    #[error("candidate sequence is empty")]
    EmptyCandidate,
    #[error("reference list is empty or a reference is empty")]
    EmptyReference,
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("no evaluation records supplied")]
    EmptyRecords,
}

/// Ordered lowercase tokens produced by [`tokenize`].
pub type TokenSequence = Vec<String>;

/// Canonical tokenizer: lowercase, split on whitespace, strip leading and
/// trailing non-alphanumeric characters per token, drop empty results.
pub fn tokenize(text: &str) -> TokenSequence {
    text.split_whitespace()
        .map(|raw| {
            raw.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Pooled n-gram counts over a corpus of token sequences.
#[derive(Debug, Clone)]
pub struct NGramProfile {
    pub n: usize,
    pub total_count: u64,
    pub unique_count: u64,
    pub counts: HashMap<String, u64>,
}

impl NGramProfile {
    /// The `k` most frequent n-grams, ties broken lexicographically.
    pub fn top_k(&self, k: usize) -> Vec<(String, u64)> {
        let mut items: Vec<(String, u64)> = self
            .counts
            .iter()
            .map(|(g, c)| (g.clone(), *c))
            .collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.truncate(k);
        items
    }
}

const NGRAM_SEP: char = '\u{1f}';

fn ngram_key(window: &[String]) -> String {
    let mut key = String::new();
    for (i, tok) in window.iter().enumerate() {
        if i > 0 {
            key.push(NGRAM_SEP);
        }
        key.push_str(tok);
    }
    key
}

/// Sliding-window n-gram profile pooled across the corpus. Sequences shorter
/// than `n` contribute nothing.
pub fn ngram_profile<S: AsRef<[String]>>(corpus: &[S], n: usize) -> NGramProfile {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for seq in corpus {
        let toks = seq.as_ref();
        if toks.len() < n {
            continue;
        }
        for window in toks.windows(n) {
            *counts.entry(ngram_key(window)).or_insert(0) += 1;
            total += 1;
        }
    }
    NGramProfile {
        n,
        total_count: total,
        unique_count: counts.len() as u64,
        counts,
    }
}

/// Distinct-n: unique n-grams divided by total n-grams over the pooled corpus.
pub fn distinct_n<S: AsRef<[String]>>(corpus: &[S], n: usize) -> Result<f64, MetricError> {
    let profile = ngram_profile(corpus, n);
    if profile.total_count == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(profile.unique_count as f64 / profile.total_count as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(ngram_key(window)).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU with modified n-gram precision, brevity penalty, and add-epsilon
/// smoothing on zero clipped counts. Orders the candidate is too short to
/// form are skipped; a candidate with zero unigram overlap scores exactly 0.
pub fn bleu(
    candidate: &[String],
    references: &[Vec<String>],
    max_n: usize,
) -> Result<f64, MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyCandidate);
    }
    if references.is_empty() || references.iter().any(|r| r.is_empty()) {
        return Err(MetricError::EmptyReference);
    }
    let max_n = max_n.max(1);

    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(candidate, n);
        let total: u64 = cand_counts.values().sum();
        if total == 0 {
            // candidate shorter than n
            continue;
        }
        let mut max_ref_counts: HashMap<String, u64> = HashMap::new();
        for reference in references {
            for (gram, count) in ngram_counts(reference, n) {
                let entry = max_ref_counts.entry(gram).or_insert(0);
                if count > *entry {
                    *entry = count;
                }
            }
        }
        let clipped: u64 = cand_counts
            .iter()
            .map(|(gram, count)| (*count).min(*max_ref_counts.get(gram).unwrap_or(&0)))
            .sum();
        if n == 1 && clipped == 0 {
            return Ok(0.0);
        }
        let precision = if clipped == 0 {
            BLEU_EPSILON / total as f64
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
        orders += 1;
    }

    let cand_len = candidate.len() as f64;
    let closest_ref_len = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| {
            let diff = (len as i64 - candidate.len() as i64).unsigned_abs();
            (diff, len)
        })
        .unwrap_or(0) as f64;
    let brevity = if cand_len >= closest_ref_len {
        1.0
    } else {
        (1.0 - closest_ref_len / cand_len).exp()
    };

    Ok(brevity * (log_sum / orders as f64).exp())
}

/// BLEU-4 between two raw texts with the canonical tokenizer; empty inputs
/// score 0. This is the deduplication similarity used across the pipeline.
pub fn bleu_text(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    bleu(&cand, &[refr], 4).unwrap_or(0.0)
}

/// ROUGE-1 and ROUGE-L F1 scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScores {
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
}

/// Unigram-overlap F1 and longest-common-subsequence F1 (beta = 1).
pub fn rouge(candidate: &[String], reference: &[String]) -> Result<RougeScores, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let cand_counts = ngram_counts(candidate, 1);
    let ref_counts = ngram_counts(reference, 1);
    let overlap: u64 = cand_counts
        .iter()
        .map(|(tok, count)| (*count).min(*ref_counts.get(tok).unwrap_or(&0)))
        .sum();
    let rouge1_f = f1(
        overlap as f64 / candidate.len() as f64,
        overlap as f64 / reference.len() as f64,
    );

    let lcs = lcs_len(candidate, reference) as f64;
    let rouge_l_f = f1(lcs / candidate.len() as f64, lcs / reference.len() as f64);

    Ok(RougeScores { rouge1_f, rouge_l_f })
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
