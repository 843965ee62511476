//! Stream files: versioned key/value text.
//!
//! ```text
//! # kancfd-stream version=1
//! protocol=four-task
//! seed=42
//! domains=2
//!
//! [domain]
//! id=0
//! n_train=2000
//! n_eval=1000
//! shift=0,0,0,0,0,0,0,0
//! real_std=1,1,1,1,1,1,1,1
//! real_mean=0.5,...
//! real_mean=-0.5,...
//! fake_std=1,1,1,1,1,1,1,1
//! fake_mean=...
//! fake_mean=...
//! ```
//!
//! `real_mean` / `fake_mean` repeat once per mixture component. Blank lines
//! and lines starting with `#` after the header are ignored.

use std::io::Write;
use std::path::Path;

use super::{DomainSpec, Mixture, TaskStream};
use crate::{Error, Result};

pub const STREAM_MAGIC: &str = "# kancfd-stream";
pub const STREAM_VERSION: u32 = 1;

const MAX_DOMAINS: usize = 10_000;
const MAX_SAMPLES: usize = 100_000_000;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_stream<W: Write>(mut w: W, stream: &TaskStream) -> Result<()> {
    writeln!(w, "{STREAM_MAGIC} version={STREAM_VERSION}")?;
    writeln!(w, "protocol={}", stream.protocol)?;
    writeln!(w, "seed={}", stream.seed)?;
    writeln!(w, "domains={}", stream.domains.len())?;
    for spec in &stream.domains {
        writeln!(w)?;
        writeln!(w, "[domain]")?;
        writeln!(w, "id={}", spec.id)?;
        writeln!(w, "n_train={}", spec.n_train)?;
        writeln!(w, "n_eval={}", spec.n_eval)?;
        writeln!(w, "shift={}", join(&spec.shift))?;
        for (name, m) in [("real", &spec.real), ("fake", &spec.fake)] {
            writeln!(w, "{name}_std={}", join(&m.std))?;
            for mean in &m.means {
                writeln!(w, "{name}_mean={}", join(mean))?;
            }
        }
    }
    Ok(())
}

pub fn save_stream(path: impl AsRef<Path>, stream: &TaskStream) -> Result<()> {
    let mut buf = Vec::new();
    write_stream(&mut buf, stream)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<TaskStream> {
    let text = std::fs::read_to_string(path)?;
    parse_stream(&text)
}

#[derive(Default)]
struct DomainDraft {
    start: usize,
    id: Option<usize>,
    n_train: Option<usize>,
    n_eval: Option<usize>,
    shift: Option<Vec<f64>>,
    real_std: Option<Vec<f64>>,
    fake_std: Option<Vec<f64>>,
    real_means: Vec<Vec<f64>>,
    fake_means: Vec<Vec<f64>>,
}

fn parse_usize(line: usize, key: &str, v: &str, max: usize) -> Result<usize> {
    let n: usize = v.parse().map_err(|e| Error::parse(line, Some(key), format!("{e}")))?;
    if n > max {
        return Err(Error::parse(line, Some(key), format!("{n} exceeds the limit {max}")));
    }
    Ok(n)
}

fn parse_vec(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| {
            let x: f64 = t
                .trim()
                .parse()
                .map_err(|e| Error::parse(line, Some(key), format!("`{t}`: {e}")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::parse(line, Some(key), "non-finite value"))
            }
        })
        .collect()
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: usize, key: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::parse(line, Some(key), "duplicate key"));
    }
    *slot = Some(value);
    Ok(())
}

fn require<T>(slot: Option<T>, line: usize, key: &str) -> Result<T> {
    slot.ok_or_else(|| Error::parse(line, Some(key), "missing key"))
}

impl DomainDraft {
    fn finish(self) -> Result<DomainSpec> {
        let l = self.start;
        let spec = DomainSpec {
            id: require(self.id, l, "id")?,
            real: Mixture {
                means: self.real_means,
                std: require(self.real_std, l, "real_std")?,
            },
            fake: Mixture {
                means: self.fake_means,
                std: require(self.fake_std, l, "fake_std")?,
            },
            shift: require(self.shift, l, "shift")?,
            n_train: require(self.n_train, l, "n_train")?,
            n_eval: require(self.n_eval, l, "n_eval")?,
        };
        spec.validate()
            .map_err(|e| Error::parse(l, None, format!("domain block: {e}")))?;
        Ok(spec)
    }
}

pub fn parse_stream(text: &str) -> Result<TaskStream> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, None, "empty stream file"))?;
    let version = header
        .strip_prefix(STREAM_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("version="))
        .ok_or_else(|| Error::parse(1, None, "not a stream file"))?;
    if version != STREAM_VERSION.to_string() {
        return Err(Error::UnsupportedVersion {
            found: version.to_string(),
            expected: STREAM_VERSION.to_string(),
        });
    }

    let mut protocol = None;
    let mut seed = None;
    let mut declared = None;
    let mut drafts: Vec<DomainDraft> = Vec::new();
    let mut last_line = 1;
    for (n, raw) in lines {
        last_line = n;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[domain]" {
            if drafts.len() >= MAX_DOMAINS {
                return Err(Error::parse(n, None, "too many domain blocks"));
            }
            drafts.push(DomainDraft {
                start: n,
                ..DomainDraft::default()
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(n, None, format!("expected `key=value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match drafts.last_mut() {
            None => match key {
                "protocol" => set_once(&mut protocol, value.to_string(), n, key)?,
                "seed" => set_once(
                    &mut seed,
                    value.parse::<u64>().map_err(|e| Error::parse(n, Some(key), format!("{e}")))?,
                    n,
                    key,
                )?,
                "domains" => set_once(&mut declared, parse_usize(n, key, value, MAX_DOMAINS)?, n, key)?,
                _ => return Err(Error::parse(n, Some(key), "unknown key")),
            },
            Some(d) => match key {
                "id" => set_once(&mut d.id, parse_usize(n, key, value, MAX_DOMAINS)?, n, key)?,
                "n_train" => set_once(&mut d.n_train, parse_usize(n, key, value, MAX_SAMPLES)?, n, key)?,
                "n_eval" => set_once(&mut d.n_eval, parse_usize(n, key, value, MAX_SAMPLES)?, n, key)?,
                "shift" => set_once(&mut d.shift, parse_vec(n, key, value)?, n, key)?,
                "real_std" => set_once(&mut d.real_std, parse_vec(n, key, value)?, n, key)?,
                "fake_std" => set_once(&mut d.fake_std, parse_vec(n, key, value)?, n, key)?,
                "real_mean" => d.real_means.push(parse_vec(n, key, value)?),
                "fake_mean" => d.fake_means.push(parse_vec(n, key, value)?),
                _ => return Err(Error::parse(n, Some(key), "unknown key")),
            },
        }
    }
    let protocol = require(protocol, last_line, "protocol")?;
    let seed = require(seed, last_line, "seed")?;
    let declared = require(declared, last_line, "domains")?;
    if declared != drafts.len() {
        return Err(Error::parse(
            last_line,
            Some("domains"),
            format!("declared {declared} domains but found {} blocks", drafts.len()),
        ));
    }
    let domains = drafts.into_iter().map(DomainDraft::finish).collect::<Result<Vec<_>>>()?;
    let stream = TaskStream {
        protocol,
        seed,
        domains,
    };
    stream
        .validate()
        .map_err(|e| Error::parse(last_line, None, format!("stream: {e}")))?;
    Ok(stream)
}
