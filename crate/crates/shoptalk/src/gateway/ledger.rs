//! Per-stage token and call accounting.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Usage;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub image_count: u64,
}

impl TagTotals {
    fn record(&mut self, usage: &Usage) {
        self.calls += 1;
        self.prompt_tokens += usage.prompt_tokens;
        self.completion_tokens += usage.completion_tokens;
        self.image_count += usage.image_count;
    }

    fn add(&mut self, other: &TagTotals) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.image_count += other.image_count;
    }
}

#[derive(Debug, Default)]
struct LedgerState {
    per_tag: BTreeMap<String, TagTotals>,
    per_provider: BTreeMap<String, TagTotals>,
    // global totals accumulated independently so conservation is checkable
    global: TagTotals,
}

/// Thread-safe accumulation of usage per stage tag. The grand total is
/// tracked independently of the per-tag rows; [`LedgerReport::conserved`]
/// cross-checks the two.
#[derive(Default)]
pub struct CostLedger {
    state: Mutex<LedgerState>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, tag: &str, usage: &Usage, provider_id: &str) {
        let mut state = self.state.lock().expect("ledger poisoned");
        state.per_tag.entry(tag.to_string()).or_default().record(usage);
        state
            .per_provider
            .entry(provider_id.to_string())
            .or_default()
            .record(usage);
        state.global.record(usage);
    }

    pub fn report(&self) -> LedgerReport {
        let state = self.state.lock().expect("ledger poisoned");
        LedgerReport {
            per_tag: state.per_tag.clone(),
            per_provider: state.per_provider.clone(),
            total: state.global.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LedgerReport {
    pub per_tag: BTreeMap<String, TagTotals>,
    pub per_provider: BTreeMap<String, TagTotals>,
    pub total: TagTotals,
}

impl LedgerReport {
    /// Sum of per-tag rows equals the independently accumulated total.
    pub fn conserved(&self) -> bool {
        let mut sum = TagTotals::default();
        for totals in self.per_tag.values() {
            sum.add(totals);
        }
        sum == self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usage(prompt: u64, completion: u64) -> Usage {
        Usage {
            prompt_tokens: prompt,
            completion_tokens: completion,
            image_count: 0,
        }
    }

    #[test]
    fn empty_ledger_reports_empty_table() {
        let report = CostLedger::new().report();
        assert!(report.per_tag.is_empty());
        assert_eq!(report.total, TagTotals::default());
        assert!(report.conserved());
    }

    #[test]
    fn totals_accumulate_per_tag() {
        let ledger = CostLedger::new();
        ledger.record("profile", &usage(100, 10), "mock");
        ledger.record("profile", &usage(50, 5), "mock");
        ledger.record("simulate", &usage(7, 3), "mock");
        let report = ledger.report();
        assert_eq!(report.per_tag["profile"].prompt_tokens, 150);
        assert_eq!(report.per_tag["profile"].calls, 2);
        assert_eq!(report.per_tag["simulate"].completion_tokens, 3);
        assert_eq!(report.total.prompt_tokens, 157);
        assert!(report.conserved());
    }

    #[test]
    fn interleaved_threads_match_serial_replay() {
        let calls: Vec<(String, Usage)> = (0..200)
            .map(|i| {
                (
                    format!("tag{}", i % 5),
                    usage(i as u64, (i * 3) as u64 % 17),
                )
            })
            .collect();

        let serial = CostLedger::new();
        for (tag, u) in &calls {
            serial.record(tag, u, "mock");
        }

        let parallel = CostLedger::new();
        std::thread::scope(|scope| {
            for chunk in calls.chunks(25) {
                scope.spawn(|| {
                    for (tag, u) in chunk {
                        parallel.record(tag, u, "mock");
                    }
                });
            }
        });

        let a = serial.report();
        let b = parallel.report();
        assert_eq!(a.per_tag, b.per_tag);
        assert_eq!(a.total, b.total);
        assert!(b.conserved());
    }
}
