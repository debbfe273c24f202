//! CSV and JSON renderings of suite results.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub benchmark: String,
    pub backend: String,
    pub opt: bool,
    #[serde(rename = "instrCount")]
    pub instr_count: u64,
    #[serde(rename = "keyChecksExec")]
    pub key_checks_exec: u64,
    #[serde(rename = "metaLoads")]
    pub meta_loads: u64,
    #[serde(rename = "metaStores")]
    pub meta_stores: u64,
    #[serde(rename = "payloadBytes")]
    pub payload_bytes: u64,
    #[serde(rename = "metadataBytes")]
    pub metadata_bytes: u64,
    pub overhead_instr: f64,
    pub overhead_mem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub geomean_overhead_instr: f64,
    pub geomean_overhead_mem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Keyed by `backend/opt` or `backend/noopt`.
    pub modes: BTreeMap<String, ModeSummary>,
    /// metaLoads(disjoint) / metaLoads(inplace) per benchmark, optimizer on.
    pub meta_loads_ratio: BTreeMap<String, f64>,
}

/// Geometric mean of overheads, taken over the ratios `1 + x`.
pub fn geomean_overhead(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + (1.0 + x).ln(), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).exp() - 1.0
    }
}

fn mode_key(backend: &str, opt: bool) -> String {
    format!("{backend}/{}", if opt { "opt" } else { "noopt" })
}

impl BenchReport {
    pub fn new(mut rows: Vec<BenchRow>) -> Self {
        rows.sort_by(|a, b| (&a.benchmark, &a.backend, a.opt).cmp(&(&b.benchmark, &b.backend, b.opt)));
        let mut groups: BTreeMap<String, Vec<&BenchRow>> = BTreeMap::new();
        for r in &rows {
            groups.entry(mode_key(&r.backend, r.opt)).or_default().push(r);
        }
        let modes = groups
            .into_iter()
            .map(|(k, rs)| {
                let s = ModeSummary {
                    geomean_overhead_instr: geomean_overhead(rs.iter().map(|r| r.overhead_instr)),
                    geomean_overhead_mem: geomean_overhead(rs.iter().map(|r| r.overhead_mem)),
                };
                (k, s)
            })
            .collect();
        let mut meta_loads_ratio = BTreeMap::new();
        for r in rows.iter().filter(|r| r.backend == "disjoint" && r.opt) {
            if let Some(ip) = rows.iter().find(|x| x.benchmark == r.benchmark && x.backend == "inplace" && x.opt) {
                meta_loads_ratio.insert(r.benchmark.clone(), r.meta_loads as f64 / ip.meta_loads.max(1) as f64);
            }
        }
        BenchReport { rows, modes, meta_loads_ratio }
    }

    pub fn row(&self, benchmark: &str, backend: &str, opt: bool) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.benchmark == benchmark && r.backend == backend && r.opt == opt)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(bench: &str, backend: &str, instr: u64, oi: f64) -> BenchRow {
        BenchRow {
            benchmark: bench.into(),
            backend: backend.into(),
            opt: true,
            instr_count: instr,
            key_checks_exec: 0,
            meta_loads: instr / 10,
            meta_stores: 0,
            payload_bytes: 100,
            metadata_bytes: 0,
            overhead_instr: oi,
            overhead_mem: 0.0,
        }
    }

    #[test]
    fn geomean_of_ratios() {
        // ratios 1 and 4 have geomean 2
        assert!((geomean_overhead([0.0, 3.0]) - 1.0).abs() < 1e-12);
        assert!((geomean_overhead([1.0, 3.0]) - (8f64.sqrt() - 1.0)).abs() < 1e-12);
        assert_eq!(geomean_overhead([]), 0.0);
        assert!((geomean_overhead([0.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_fixed_columns_and_sorted_rows() {
        let r = BenchReport::new(vec![row("b", "inplace", 20, 0.1), row("a", "disjoint", 40, 0.3), row("a", "inplace", 20, 0.1)]);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "benchmark,backend,opt,instrCount,keyChecksExec,metaLoads,metaStores,payloadBytes,metadataBytes,overhead_instr,overhead_mem"
        );
        assert!(lines.next().unwrap().starts_with("a,disjoint,true,40,"));
        assert_eq!(r.meta_loads_ratio["a"], 2.0);
        assert!(r.modes.contains_key("inplace/opt"));
    }
}
