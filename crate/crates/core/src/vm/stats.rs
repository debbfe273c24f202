use std::collections::BTreeMap;

use serde::Serialize;

use super::trap::Site;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FuncStats {
    pub calls: u64,
    pub instr_count: u64,
    pub key_checks_exec: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsReport {
    pub backend: String,
    pub key_bits: u32,
    pub opt_checks: bool,
    pub instr_count: u64,
    pub key_checks_exec: u64,
    pub key_checks_elided_static: u64,
    pub meta_loads: u64,
    pub meta_loads_check: u64,
    pub meta_stores: u64,
    pub alloc_count: u64,
    pub free_count: u64,
    pub heap_bytes_payload: u64,
    pub heap_bytes_metadata: u64,
    pub peak_live_bytes: u64,
    pub dj_entry_bytes: u64,
    pub per_function: BTreeMap<String, FuncStats>,
}

impl StatsReport {
    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("stats serialize");
        serde_json::to_string_pretty(&v).expect("stats serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DivergenceKind {
    /// A check trapped while the referent was still allocated.
    FalsePositive,
    /// Memory of a freed referent was accessed without a trap.
    FalseNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Divergence {
    pub kind: DivergenceKind,
    pub site: Site,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DivergenceReport {
    pub events: Vec<Divergence>,
    /// Key checks where `raw - offset` missed the referent's payload start.
    pub offset_violations: u64,
    pub checks_observed: u64,
}

impl DivergenceReport {
    pub fn false_positives(&self) -> usize {
        self.events.iter().filter(|e| e.kind == DivergenceKind::FalsePositive).count()
    }

    pub fn false_negatives(&self) -> usize {
        self.events.iter().filter(|e| e.kind == DivergenceKind::FalseNegative).count()
    }

    pub fn is_clean(&self) -> bool {
        self.events.is_empty() && self.offset_violations == 0
    }
}
