//! Recall@n and MRR@n over ranked retrieval records.

use serde::{Deserialize, Serialize};

use super::MetricError;

/// One evaluation point: a generated query was run against the store and the
/// ranked candidates are compared with the gold product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecEvalRecord {
    /// Truncated conversation context the query was generated from.
    pub context: String,
    pub gold_product_id: String,
    pub generated_query: String,
    /// Ranked candidate ids, best first. Deduplicated preserving order.
    pub ranked: Vec<String>,
}

impl RecEvalRecord {
    pub fn new(
        context: String,
        gold_product_id: String,
        generated_query: String,
        ranked: Vec<String>,
    ) -> Self {
        let mut seen = std::collections::HashSet::new();
        let ranked = ranked
            .into_iter()
            .filter(|id| seen.insert(id.clone()))
            .collect();
        Self {
            context,
            gold_product_id,
            generated_query,
            ranked,
        }
    }

    /// 1-based rank of the gold item, if present.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked
            .iter()
            .position(|id| *id == self.gold_product_id)
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub recall_at_n: f64,
    pub mrr_at_n: f64,
}

/// Recall@n = fraction of records whose gold item appears in the top `n`;
/// MRR@n = mean of `1/rank` for gold in the top `n`, else 0.
pub fn recall_mrr(records: &[RecEvalRecord], n: usize) -> Result<RankMetrics, MetricError> {
    assert!(n >= 1, "cutoff must be at least 1");
    if records.is_empty() {
        return Err(MetricError::EmptyRecords);
    }
    let mut hits = 0u64;
    let mut reciprocal_sum = 0.0f64;
    for record in records {
        if let Some(rank) = record.gold_rank() {
            if rank <= n {
                hits += 1;
                reciprocal_sum += 1.0 / rank as f64;
            }
        }
    }
    let count = records.len() as f64;
    Ok(RankMetrics {
        recall_at_n: hits as f64 / count,
        mrr_at_n: reciprocal_sum / count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(gold: &str, ranked: &[&str]) -> RecEvalRecord {
        RecEvalRecord::new(
            String::new(),
            gold.to_string(),
            String::new(),
            ranked.iter().map(|s| s.to_string()).collect(),
        )
    }

    #[test]
    fn gold_first_everywhere_gives_ones() {
        let records = vec![record("a", &["a", "b"]), record("x", &["x", "y", "z"])];
        let m = recall_mrr(&records, 10).unwrap();
        assert_eq!(m.recall_at_n, 1.0);
        assert_eq!(m.mrr_at_n, 1.0);
    }

    #[test]
    fn gold_at_rank_three() {
        let records = vec![record("c", &["a", "b", "c", "d"])];
        let m = recall_mrr(&records, 10).unwrap();
        assert_eq!(m.recall_at_n, 1.0);
        assert!((m.mrr_at_n - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gold_outside_cutoff_counts_zero() {
        let records = vec![record("c", &["a", "b", "c"])];
        let m = recall_mrr(&records, 2).unwrap();
        assert_eq!(m.recall_at_n, 0.0);
        assert_eq!(m.mrr_at_n, 0.0);
    }

    #[test]
    fn duplicates_in_candidates_are_removed() {
        let r = record("b", &["a", "a", "b", "b"]);
        assert_eq!(r.ranked, vec!["a", "b"]);
        assert_eq!(r.gold_rank(), Some(2));
    }

    #[test]
    fn matches_hand_computed_fixture_table() {
        // 20 records as a worksheet: gold ranks
        // 1,2,3,4,5,6,7,8,9,10, miss x5, 11,12, miss x3  (ranks beyond list = miss)
        let mut records = Vec::new();
        let ids: Vec<String> = (0..25).map(|i| format!("p{i:02}")).collect();
        for rank in 1..=10usize {
            let mut ranked: Vec<&str> = ids[..15].iter().map(|s| s.as_str()).collect();
            // put gold at the requested rank
            let gold = ranked.remove(rank - 1);
            let mut with_gold = ranked.clone();
            with_gold.insert(rank - 1, gold);
            records.push(record(gold, &with_gold));
        }
        for _ in 0..5 {
            records.push(record("absent", &["p00", "p01", "p02"]));
        }
        for rank in [11usize, 12] {
            let ranked: Vec<&str> = ids[..14].iter().map(|s| s.as_str()).collect();
            records.push(record(&ids[rank - 1], &ranked));
        }
        for _ in 0..3 {
            records.push(record("absent", &["p00"]));
        }
        assert_eq!(records.len(), 20);

        // hand computation at n=10: hits = ranks 1..=10 -> 10/20 = 0.5
        // mrr = (sum_{r=1..10} 1/r) / 20 = H10/20
        let h10: f64 = (1..=10).map(|r| 1.0 / r as f64).sum();
        let m = recall_mrr(&records, 10).unwrap();
        assert!((m.recall_at_n - 0.5).abs() < 1e-12);
        assert!((m.mrr_at_n - h10 / 20.0).abs() < 1e-12);

        // at n=20 the two ranks 11,12 join: recall 12/20, mrr (H10 + 1/11 + 1/12)/20
        let m = recall_mrr(&records, 20).unwrap();
        assert!((m.recall_at_n - 0.6).abs() < 1e-12);
        assert!((m.mrr_at_n - (h10 + 1.0 / 11.0 + 1.0 / 12.0) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn recall_and_mrr_are_monotone_in_n() {
        let records = vec![
            record("c", &["a", "b", "c", "d", "e"]),
            record("e", &["a", "b", "c", "d", "e"]),
            record("a", &["a", "b"]),
        ];
        let mut prev = recall_mrr(&records, 1).unwrap();
        for n in 2..=6 {
            let cur = recall_mrr(&records, n).unwrap();
            assert!(cur.recall_at_n >= prev.recall_at_n);
            assert!(cur.mrr_at_n >= prev.mrr_at_n);
            prev = cur;
        }
    }

    #[test]
    fn empty_records_error() {
        assert!(matches!(
            recall_mrr(&[], 10),
            Err(MetricError::EmptyRecords)
        ));
    }
}
