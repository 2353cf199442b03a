use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::Result;

pub const HEADER: [&str; 13] = [
    "experiment",
    "U",
    "V",
    "epsilon",
    "B",
    "M",
    "policy",
    "op_class",
    "accesses",
    "misses",
    "arena_words",
    "extra",
    "wallclock_ms",
];

/// One measured cell. `extra` carries `key=value` pairs joined by `;`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    #[serde(rename = "U")]
    pub u: u64,
    #[serde(rename = "V")]
    pub v: u64,
    pub epsilon: String,
    #[serde(rename = "B")]
    pub b: u64,
    #[serde(rename = "M")]
    pub m: u64,
    pub policy: String,
    pub op_class: String,
    pub accesses: u64,
    pub misses: u64,
    pub arena_words: u64,
    pub extra: String,
    pub wallclock_ms: u64,
}

impl ExperimentRow {
    /// Looks up a `key=value` pair in `extra`.
    pub fn extra_value(&self, key: &str) -> Option<&str> {
        self.extra
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn extra_f64(&self, key: &str) -> Option<f64> {
        self.extra_value(key)?.parse().ok()
    }
}

/// Builds an `extra` string; floats use four decimals so output is stable.
#[derive(Default)]
pub struct Extra(Vec<String>);

impl Extra {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn int(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.0.push(format!("{key}={value}"));
        self
    }

    pub fn float(mut self, key: &str, value: f64) -> Self {
        self.0.push(format!("{key}={value:.4}"));
        self
    }

    pub fn finish(self) -> String {
        self.0.join(";")
    }
}

fn sort_key(r: &ExperimentRow) -> impl Ord + '_ {
    (
        &r.experiment,
        r.u,
        r.b,
        r.m,
        &r.policy,
        &r.op_class,
        &r.extra,
        r.v,
    )
}

pub fn sort_rows(rows: &mut [ExperimentRow]) {
    rows.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
}

/// Writes the header and the rows in canonical order.
pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<P: AsRef<Path>>(rows: &[ExperimentRow], path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_string(rows: &[ExperimentRow]) -> String {
        let mut buf = Vec::new();
        write_csv(rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(csv_string(&[]), HEADER.join(",") + "\n");
    }

    #[test]
    fn one_row_two_lines() {
        let row = ExperimentRow {
            experiment: "exp_space".into(),
            extra: Extra::new().int("h", 3).float("c", 1.0 / 3.0).finish(),
            ..Default::default()
        };
        let s = csv_string(std::slice::from_ref(&row));
        assert_eq!(s.lines().count(), 2);
        assert!(s.contains("h=3;c=0.3333"));
        assert_eq!(row.extra_f64("c"), Some(0.3333));
        assert_eq!(row.extra_value("h"), Some("3"));
    }

    #[test]
    fn order_does_not_depend_on_input_order() {
        let mk = |e: &str, b| ExperimentRow {
            experiment: e.into(),
            b,
            ..Default::default()
        };
        let a = vec![mk("exp_b", 16), mk("exp_a", 256), mk("exp_a", 64)];
        let mut rev = a.clone();
        rev.reverse();
        assert_eq!(csv_string(&a), csv_string(&rev));
        let s = csv_string(&a);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[1].starts_with("exp_a,0,0,,64"));
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let row = ExperimentRow {
            experiment: "x".into(),
            extra: "a=1,2".into(),
            ..Default::default()
        };
        assert!(csv_string(&[row]).contains("\"a=1,2\""));
    }
}
