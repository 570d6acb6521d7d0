//! Result rows and their CSV/JSON serialisation.

use serde::Serialize;

/// One statistic from one experiment run. `stderr` is zero for exact or
/// counting statistics, `n` is zero for rows that summarise a whole sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub stat: String,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
    pub runtime_ms: u64,
}

/// Append-only collection of rows, sorted by (experiment, n, stat) on
/// output so the table does not depend on completion order.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(transparent)]
pub struct ResultTable {
    rows: Vec<Row>,
}

pub const CSV_HEADER: &str = "experiment,n,stat,value,stderr,seed,runtime_ms";

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn append(&mut self, mut other: ResultTable) {
        self.rows.append(&mut other.rows);
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| (&a.experiment, a.n, &a.stat).cmp(&(&b.experiment, b.n, &b.stat)));
    }

    /// First row with the given statistic name, at any `n`.
    pub fn find(&self, stat: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.stat == stat)
    }

    /// First row with the given statistic name at a specific `n`.
    pub fn find_at(&self, n: usize, stat: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.n == n && r.stat == stat)
    }

    /// CSV with a fixed header. Floats use Rust's shortest round-trip
    /// formatting, so equal values always print identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.experiment, r.n, r.stat, r.value, r.stderr, r.seed, r.runtime_ms
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialise without error")
    }
}
