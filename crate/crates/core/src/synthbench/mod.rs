//! Synthetic domain-incremental streams.
//!
//! Each domain has a real and a fake class, both two-component Gaussian
//! mixtures with a shared diagonal standard deviation. The fake components are
//! the real ones moved along a domain-specific perturbation direction, and the
//! whole domain is offset by its shift vector.

mod stream;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::numcore::{DenseMatrix, RngStream};
use crate::{Error, Result};

pub use stream::{load_stream, parse_stream, save_stream, write_stream, STREAM_MAGIC, STREAM_VERSION};

pub const DEFAULT_RAW_DIM: usize = 8;

/// Gaussian mixture with equally weighted components and a shared diagonal std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub means: Vec<Vec<f64>>,
    pub std: Vec<f64>,
}

impl Mixture {
    pub fn dim(&self) -> usize {
        self.std.len()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::InvalidArgument(format!("{what}: mixture has no components")));
        }
        if self.std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{what}: standard deviations must be finite and positive"
            )));
        }
        for m in &self.means {
            if m.len() != self.std.len() {
                return Err(Error::shape("mixture mean", self.std.len(), m.len()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what}: non-finite component mean")));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.means.len() as f64;
        (0..self.dim())
            .map(|i| self.means.iter().map(|m| m[i]).sum::<f64>() / k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: usize,
    pub real: Mixture,
    pub fake: Mixture,
    /// Added to every sample of the domain.
    pub shift: Vec<f64>,
    pub n_train: usize,
    pub n_eval: usize,
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.real.validate("real class")?;
        self.fake.validate("fake class")?;
        if self.real.dim() != self.dim() || self.fake.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "domain {}: class dimensions disagree with the shift vector",
                self.id
            )));
        }
        if self.real == self.fake {
            return Err(Error::InvalidArgument(format!(
                "domain {}: real and fake generators are identical",
                self.id
            )));
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("domain {}: non-finite shift", self.id)));
        }
        if self.n_train < 2 || self.n_eval < 2 {
            return Err(Error::InvalidArgument(format!(
                "domain {}: each split needs at least two samples",
                self.id
            )));
        }
        Ok(())
    }

    /// Mean of the whole domain (both classes, shift included).
    pub fn domain_mean(&self) -> Vec<f64> {
        let r = self.real.mean();
        let f = self.fake.mean();
        (0..self.dim()).map(|i| 0.5 * (r[i] + f[i]) + self.shift[i]).collect()
    }

    /// Largest per-dimension standard deviation of the domain distribution,
    /// counting both the component noise and the spread of component means.
    pub fn intra_std(&self) -> f64 {
        let mu = self.domain_mean();
        let comps: Vec<(&Vec<f64>, &Vec<f64>)> = self
            .real
            .means
            .iter()
            .map(|m| (m, &self.real.std))
            .chain(self.fake.means.iter().map(|m| (m, &self.fake.std)))
            .collect();
        let real_w = 0.5 / self.real.means.len() as f64;
        let fake_w = 0.5 / self.fake.means.len() as f64;
        (0..self.dim())
            .map(|i| {
                let mut var = 0.0;
                for (k, (m, s)) in comps.iter().enumerate() {
                    let w = if k < self.real.means.len() { real_w } else { fake_w };
                    let d = m[i] + self.shift[i] - mu[i];
                    var += w * (s[i] * s[i] + d * d);
                }
                var.sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    FourTask,
    TenTask,
    TwoTaskOverlap,
    TwoTaskSeparated,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::FourTask,
        Protocol::TenTask,
        Protocol::TwoTaskOverlap,
        Protocol::TwoTaskSeparated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::FourTask => "four-task",
            Protocol::TenTask => "ten-task",
            Protocol::TwoTaskOverlap => "two-task-overlap",
            Protocol::TwoTaskSeparated => "two-task-separated",
        }
    }

    pub fn num_tasks(self) -> usize {
        match self {
            Protocol::FourTask => 4,
            Protocol::TenTask => 10,
            Protocol::TwoTaskOverlap | Protocol::TwoTaskSeparated => 2,
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown protocol `{s}` (expected one of four-task, ten-task, two-task-overlap, two-task-separated)"
                ))
            })
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Generator knobs shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub raw_dim: usize,
    pub n_train: usize,
    pub n_eval: usize,
    /// Per-dimension noise std of every mixture component. The lengths below
    /// are in units of this value.
    pub noise: f64,
    /// Distance of each mixture component from its class center.
    pub component_offset: f64,
    /// Length of the real-to-fake perturbation.
    pub fake_offset: f64,
    /// Length of the step between consecutive domains in the four-task and
    /// ten-task protocols.
    pub domain_shift: f64,
    /// Weight of a stream-wide direction in every domain's perturbation
    /// (0 gives independent directions per domain, 1 a single shared one).
    pub fake_shared: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            raw_dim: DEFAULT_RAW_DIM,
            n_train: 2000,
            n_eval: 1000,
            noise: 1.0,
            component_offset: 2.0,
            fake_offset: 2.5,
            domain_shift: 6.0,
            fake_shared: 0.0,
        }
    }
}

impl BenchParams {
    /// Length of the shift between consecutive domains for `protocol`.
    pub fn shift_length(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::FourTask | Protocol::TenTask => self.domain_shift * self.noise,
            Protocol::TwoTaskOverlap => 0.5 * self.noise,
            Protocol::TwoTaskSeparated => 40.0 * self.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub protocol: String,
    pub seed: u64,
    pub domains: Vec<DomainSpec>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn raw_dim(&self) -> usize {
        self.domains.first().map_or(0, DomainSpec::dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::InvalidArgument("task stream has no domains".into()));
        }
        let d = self.raw_dim();
        for (k, spec) in self.domains.iter().enumerate() {
            spec.validate()?;
            if spec.dim() != d {
                return Err(Error::shape("domain raw dimension", d, spec.dim()));
            }
            if spec.id != k {
                return Err(Error::InvalidArgument(format!("domain at position {k} has id {}", spec.id)));
            }
        }
        Ok(())
    }

    /// Train and eval splits of domain `k`, drawn from disjoint substreams.
    pub fn generate(&self, k: usize) -> Result<(Dataset, Dataset)> {
        let spec = &self.domains[k];
        let root = RngStream::new(self.seed).substream(1 + k as u64);
        let train = gen_domain(spec, spec.n_train, &mut root.substream(0))?;
        let eval = gen_domain(spec, spec.n_eval, &mut root.substream(1))?;
        Ok((train, eval))
    }

    pub fn generate_all(&self) -> Result<Vec<(Dataset, Dataset)>> {
        (0..self.len()).map(|k| self.generate(k)).collect()
    }
}

/// Labelled raw samples of one domain; label 1 is fake.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub labels: Vec<u8>,
    pub domain: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            domain: self.domain,
        }
    }

    /// CSV with header `x_0,...,x_{d-1},label,domain`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.x.cols();
        let mut header: Vec<String> = (0..d).map(|i| format!("x_{i}")).collect();
        header.push("label".into());
        header.push("domain".into());
        writeln!(w, "{}", header.join(","))?;
        for (r, y) in self.labels.iter().enumerate() {
            let row: Vec<String> = self.x.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{y},{}", row.join(","), self.domain)?;
        }
        Ok(())
    }
}

/// `n` samples: the first `n / 2` (rounded up) real, the rest fake, then
/// shuffled. Components are picked uniformly per sample.
pub fn gen_domain(spec: &DomainSpec, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dim();
    let n_real = n.div_ceil(2);
    let mut x = DenseMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let (class, y) = if r < n_real { (&spec.real, 0u8) } else { (&spec.fake, 1u8) };
        let mean = &class.means[rng.below(class.means.len())];
        let row = x.row_mut(r);
        for i in 0..d {
            row[i] = mean[i] + class.std[i] * rng.normal() + spec.shift[i];
        }
        labels.push(y);
    }
    let perm = rng.permutation(n);
    let x = x.select_rows(&perm);
    let labels = perm.iter().map(|&p| labels[p]).collect();
    Ok(Dataset {
        x,
        labels,
        domain: spec.id,
    })
}

fn unit_vector(rng: &mut RngStream, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|a| a * s).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn gen_sequence(protocol: Protocol, seed: u64) -> Result<TaskStream> {
    gen_sequence_with(protocol, seed, &BenchParams::default())
}

/// Builds the domain specs of `protocol`. Domain `k` of `T` is centred on
/// `(k - (T - 1) / 2)` times the protocol's shift vector, so the stream as a
/// whole sits around the origin; each domain's component layout and fake
/// perturbation direction are drawn from the seed.
pub fn gen_sequence_with(protocol: Protocol, seed: u64, params: &BenchParams) -> Result<TaskStream> {
    let d = params.raw_dim;
    if d == 0 || params.noise <= 0.0 || !params.noise.is_finite() {
        return Err(Error::InvalidArgument("raw_dim and noise must be positive".into()));
    }
    let mut rng = RngStream::new(seed).substream(0);
    let shift_dir = match protocol {
        Protocol::TwoTaskSeparated => vec![1.0 / (d as f64).sqrt(); d],
        _ => unit_vector(&mut rng, d),
    };
    let step = scaled(&shift_dir, params.shift_length(protocol));
    let std = vec![params.noise; d];
    let centre = (protocol.num_tasks() - 1) as f64 / 2.0;
    let common = unit_vector(&mut rng, d);
    let domains = (0..protocol.num_tasks())
        .map(|k| {
            let axis = unit_vector(&mut rng, d);
            let own = unit_vector(&mut rng, d);
            let mixed: Vec<f64> = common
                .iter()
                .zip(&own)
                .map(|(c, o)| params.fake_shared * c + (1.0 - params.fake_shared) * o)
                .collect();
            let fake_dir = scaled(&mixed, 1.0 / mixed.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12));
            let half = scaled(&fake_dir, -0.5 * params.fake_offset * params.noise);
            let real_means = vec![
                add(&scaled(&axis, params.component_offset * params.noise), &half),
                add(&scaled(&axis, -params.component_offset * params.noise), &half),
            ];
            let delta = scaled(&fake_dir, params.fake_offset * params.noise);
            let fake_means = real_means.iter().map(|m| add(m, &delta)).collect();
            DomainSpec {
                id: k,
                real: Mixture {
                    means: real_means,
                    std: std.clone(),
                },
                fake: Mixture {
                    means: fake_means,
                    std: std.clone(),
                },
                shift: scaled(&step, k as f64 - centre),
                n_train: params.n_train,
                n_eval: params.n_eval,
            }
        })
        .collect();
    let stream = TaskStream {
        protocol: protocol.as_str().to_string(),
        seed,
        domains,
    };
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn protocol_lengths_and_names() {
        assert_eq!(gen_sequence(Protocol::TenTask, 1).unwrap().len(), 10);
        assert_eq!(gen_sequence(Protocol::FourTask, 1).unwrap().len(), 4);
        for p in Protocol::ALL {
            assert_eq!(p.as_str().parse::<Protocol>().unwrap(), p);
        }
        assert!("five-task".parse::<Protocol>().is_err());
    }

    #[test]
    fn separated_and_overlap_geometry() {
        for seed in 0..5 {
            let s = gen_sequence(Protocol::TwoTaskSeparated, seed).unwrap();
            let gap = dist(&s.domains[0].domain_mean(), &s.domains[1].domain_mean());
            let spread = s.domains[0].intra_std().max(s.domains[1].intra_std());
            assert!(gap >= 10.0 * spread, "gap {gap} spread {spread}");

            let o = gen_sequence(Protocol::TwoTaskOverlap, seed).unwrap();
            let gap = dist(&o.domains[0].domain_mean(), &o.domains[1].domain_mean());
            let spread = o.domains[0].intra_std().min(o.domains[1].intra_std());
            assert!(gap <= spread, "gap {gap} spread {spread}");
        }
    }

    #[test]
    fn consecutive_shift_is_the_configured_step() {
        let params = BenchParams::default();
        let s = gen_sequence_with(Protocol::FourTask, 3, &params).unwrap();
        for k in 1..4 {
            let step: Vec<f64> = (0..8).map(|i| s.domains[k].shift[i] - s.domains[k - 1].shift[i]).collect();
            let len = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((len - params.shift_length(Protocol::FourTask)).abs() < 1e-9);
            for i in 0..8 {
                assert!((step[i] - (s.domains[1].shift[i] - s.domains[0].shift[i])).abs() < 1e-9);
            }
            let m0 = s.domains[k - 1].domain_mean();
            let m1 = s.domains[k].domain_mean();
            for i in 0..8 {
                assert!((m1[i] - m0[i] - step[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let s = gen_sequence(Protocol::FourTask, 11).unwrap();
        let a = s.generate(2).unwrap();
        let b = s.generate(2).unwrap();
        assert_eq!(a, b);
        let spec = &s.domains[0];
        let mut rng = RngStream::new(5);
        let ds = gen_domain(spec, 1000, &mut rng).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.labels.iter().filter(|&&y| y == 0).count(), 500);
    }

    #[test]
    fn real_class_mean_within_three_standard_errors() {
        let s = gen_sequence(Protocol::FourTask, 4).unwrap();
        let spec = &s.domains[1];
        let ds = gen_domain(spec, 20_000, &mut RngStream::new(8)).unwrap();
        let rows: Vec<usize> = (0..ds.len()).filter(|&r| ds.labels[r] == 0).collect();
        let mean = ds.x.select_rows(&rows).column_means();
        let expected = spec.real.mean();
        let n = rows.len() as f64;
        for i in 0..8 {
            let comp_var = spec.real.means.iter().map(|m| (m[i] - expected[i]).powi(2)).sum::<f64>()
                / spec.real.means.len() as f64;
            let se = ((spec.real.std[i].powi(2) + comp_var) / n).sqrt();
            assert!((mean[i] - expected[i] - spec.shift[i]).abs() < 3.0 * se, "dim {i}");
        }
    }

    #[test]
    fn train_and_eval_are_disjoint() {
        let params = BenchParams {
            n_train: 64,
            n_eval: 64,
            ..BenchParams::default()
        };
        let s = gen_sequence_with(Protocol::TwoTaskOverlap, 2, &params).unwrap();
        let (tr, ev) = s.generate(0).unwrap();
        let key = |r: &[f64]| r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
        let train: std::collections::HashSet<Vec<u64>> = tr.x.row_iter().map(key).collect();
        assert!(ev.x.row_iter().all(|r| !train.contains(&key(r))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = gen_sequence(Protocol::TwoTaskOverlap, 1).unwrap();
        s.domains[0].real.std[3] = 0.0;
        assert!(gen_domain(&s.domains[0], 10, &mut RngStream::new(1)).is_err());
        let mut s = gen_sequence(Protocol::TwoTaskOverlap, 1).unwrap();
        s.domains[0].fake = s.domains[0].real.clone();
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let s = gen_sequence_with(
            Protocol::TwoTaskOverlap,
            1,
            &BenchParams {
                n_train: 4,
                n_eval: 4,
                ..BenchParams::default()
            },
        )
        .unwrap();
        let (tr, _) = s.generate(1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_0,x_1,x_2,x_3,x_4,x_5,x_6,x_7,label,domain");
        assert_eq!(lines.len(), 5);
        assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
    }
}
