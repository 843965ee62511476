//! Plain-text memory snapshots.
//!
//! ```text
//! # kancfd-memory-snapshot version=1
//! budget=500
//! space=2
//! dim=3
//! rows=2
//! f0,f1,f2,domain_label,label,source_task
//! 0.1,0.2,0.3,2,0,1
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::io::{BufRead, Write};

use super::FeatureMemory;
use crate::numcore::DenseMatrix;
use crate::{Error, Result};

pub const SNAPSHOT_MAGIC: &str = "# kancfd-memory-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Upper bound on the declared feature dimension and row count; keeps a
/// corrupt header from requesting a huge allocation.
const MAX_DECLARED: usize = 1 << 20;

pub fn write_snapshot<W: Write>(mut w: W, mem: &FeatureMemory) -> Result<()> {
    let d = mem.features.cols();
    writeln!(w, "{SNAPSHOT_MAGIC} version={SNAPSHOT_VERSION}")?;
    writeln!(w, "budget={}", mem.budget)?;
    writeln!(w, "space={}", mem.space)?;
    writeln!(w, "dim={d}")?;
    writeln!(w, "rows={}", mem.len())?;
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.extend(["domain_label", "label", "source_task"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in 0..mem.len() {
        let mut fields: Vec<String> = mem.features.row(r).iter().map(|v| v.to_string()).collect();
        fields.push(mem.domain_labels[r].to_string());
        fields.push(mem.labels[r].to_string());
        fields.push(mem.source_tasks[r].to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self, what: &str) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?.trim_end_matches('\r').to_string()),
            None => Err(Error::parse(self.line, None, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn key_value(&mut self, key: &str) -> Result<usize> {
        let line = self.next(key)?;
        let value = line
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| Error::parse(self.line, Some(key), format!("expected `{key}=<value>`")))?;
        let v: usize = value
            .trim()
            .parse()
            .map_err(|e| Error::parse(self.line, Some(key), format!("{e}")))?;
        if v > MAX_DECLARED {
            return Err(Error::parse(self.line, Some(key), format!("value {v} exceeds {MAX_DECLARED}")));
        }
        Ok(v)
    }
}

pub fn read_snapshot<R: BufRead>(reader: R) -> Result<FeatureMemory> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    let first = lines.next("header")?;
    let version = first
        .strip_prefix(SNAPSHOT_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("version="))
        .ok_or_else(|| Error::parse(1, None, "not a memory snapshot"))?;
    if version != SNAPSHOT_VERSION.to_string() {
        return Err(Error::UnsupportedVersion {
            found: version.to_string(),
            expected: SNAPSHOT_VERSION.to_string(),
        });
    }
    let budget = lines.key_value("budget")?;
    let space = lines.key_value("space")?;
    let dim = lines.key_value("dim")?;
    let rows = lines.key_value("rows")?;
    if rows > budget {
        return Err(Error::parse(lines.line, Some("rows"), format!("{rows} rows exceed budget {budget}")));
    }

    let header = lines.next("column header")?;
    let mut expected: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    expected.extend(["domain_label", "label", "source_task"].map(String::from));
    if header.split(',').ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(lines.line, None, "column header does not match `dim`"));
    }

    let mut values = Vec::with_capacity(rows.saturating_mul(dim).min(MAX_DECLARED));
    let mut domain_labels = Vec::with_capacity(rows.min(MAX_DECLARED));
    for _ in 0..rows {
        let line = lines.next("data row")?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::parse(
                lines.line,
                None,
                format!("expected {} fields, found {}", dim + 3, fields.len()),
            ));
        }
        for (i, f) in fields[..dim].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|e| Error::parse(lines.line, Some(&expected[i]), format!("{e}")))?;
            if !v.is_finite() {
                return Err(Error::parse(lines.line, Some(&expected[i]), "non-finite feature value"));
            }
            values.push(v);
        }
        let int = |i: usize| -> Result<usize> {
            fields[dim + i]
                .parse()
                .map_err(|e| Error::parse(lines.line, Some(&expected[dim + i]), format!("{e}")))
        };
        let (domain, label, source) = (int(0)?, int(1)?, int(2)?);
        if label != domain % 2 || source != domain / 2 {
            return Err(Error::parse(
                lines.line,
                Some("domain_label"),
                format!("domain_label {domain} is inconsistent with label {label} and source_task {source}"),
            ));
        }
        domain_labels.push(domain);
    }
    loop {
        lines.line += 1;
        match lines.inner.next().transpose()? {
            None => break,
            Some(l) if l.trim().is_empty() => continue,
            Some(_) => return Err(Error::parse(lines.line, None, "trailing data after the declared rows")),
        }
    }
    let features = DenseMatrix::from_vec(rows, dim, values)?;
    FeatureMemory::from_parts(features, domain_labels, budget, space)
}
