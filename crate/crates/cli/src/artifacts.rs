//! Run directory layout, JSON artifacts and the experiment runner.
//!
//! A run directory holds:
//!
//! - `config.txt`: the canonical experiment config
//! - `stream.txt`: the generated benchmark stream
//! - `scores.csv`: one row per (train step, eval task)
//! - `summary.json`: average accuracy / forgetting per step
//! - `memory_task<t>.txt`: feature memory snapshot after each task
//! - `model.json`: extractor, head and projection after the last task
//! - `manifest.json`: config hash, seed and SHA-256 of every file above

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kancfd::continual::{Metric, ScoreMatrix, TaskReport, TrainerState};
use kancfd::fskdcp::{write_snapshot, KdcpProjection};
use kancfd::kanheads::{DetectorHead, FeatureExtractor};
use kancfd::synthbench::{gen_sequence_with, save_stream, Dataset, TaskStream};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.txt";
pub const STREAM_FILE: &str = "stream.txt";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn memory_file(task: usize) -> String {
    format!("memory_task{task}.txt")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical config text; any field change changes it.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.to_text().as_bytes())
}

/// Averages after one training step. Forgetting is `None` at step 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSummary {
    pub step: usize,
    pub acc_aa: f64,
    pub acc_af: Option<f64>,
    pub auc_aa: f64,
    pub auc_af: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub schema_version: u32,
    pub protocol: String,
    pub seed: u64,
    pub head: String,
    pub steps: Vec<StepSummary>,
    pub losses: Vec<TaskReport>,
}

impl Summary {
    pub fn from_scores(cfg: &ExperimentConfig, scores: &ScoreMatrix, losses: Vec<TaskReport>) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            protocol: cfg.protocol.as_str().to_owned(),
            seed: cfg.seed(),
            head: cfg.trainer.head.as_str().to_owned(),
            steps: step_summaries(scores)?,
            losses,
        })
    }
}

/// Average accuracy / AUC and forgetting for every step of `scores`.
pub fn step_summaries(scores: &ScoreMatrix) -> Result<Vec<StepSummary>> {
    (1..=scores.steps())
        .map(|t| {
            let af = |m| if t >= 2 { scores.forgetting(m, t).map(Some) } else { Ok(None) };
            Ok(StepSummary {
                step: t,
                acc_aa: scores.average(Metric::Acc, t)?,
                acc_af: af(Metric::Acc)?,
                auc_aa: scores.average(Metric::Auc, t)?,
                auc_af: af(Metric::Auc)?,
            })
        })
        .collect()
}

/// Parses and checks a `summary.json` document.
pub fn parse_summary_json(text: &str) -> Result<Summary> {
    let s: Summary = serde_json::from_str(text).map_err(|e| CliError::artifact(SUMMARY_FILE, e.to_string()))?;
    let bad = |msg: String| Err(CliError::artifact(SUMMARY_FILE, msg));
    if s.schema_version != SCHEMA_VERSION {
        return bad(format!("schema_version {} (expected {SCHEMA_VERSION})", s.schema_version));
    }
    for (i, st) in s.steps.iter().enumerate() {
        if st.step != i + 1 {
            return bad(format!("step {} at position {}", st.step, i + 1));
        }
        if st.acc_af.is_some() != (st.step >= 2) || st.auc_af.is_some() != (st.step >= 2) {
            return bad(format!("forgetting must be present exactly from step 2 (step {})", st.step));
        }
        let values = [Some(st.acc_aa), st.acc_af, Some(st.auc_aa), st.auc_af];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return bad(format!("non-finite value at step {}", st.step));
        }
    }
    Ok(s)
}

/// Everything needed to evaluate or inspect the trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub schema_version: u32,
    /// Canonical config text of the run that produced the model.
    pub config: String,
    pub tasks: usize,
    pub extractor: FeatureExtractor,
    pub head: DetectorHead,
    pub projection: Option<KdcpProjection>,
}

impl ModelArtifact {
    pub fn from_state(cfg: &ExperimentConfig, state: &TrainerState) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config: cfg.to_text(),
            tasks: state.task,
            extractor: state.extractor.clone(),
            head: state.head.clone(),
            projection: state.projection.clone(),
        }
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&self.config)
    }
}

/// Parses `model.json` and checks it against its embedded config.
pub fn load_model_json(text: &str) -> Result<ModelArtifact> {
    let m: ModelArtifact = serde_json::from_str(text).map_err(|e| CliError::artifact(MODEL_FILE, e.to_string()))?;
    let bad = |msg: String| Err(CliError::artifact(MODEL_FILE, msg));
    if m.schema_version != SCHEMA_VERSION {
        return bad(format!("schema_version {} (expected {SCHEMA_VERSION})", m.schema_version));
    }
    let cfg = m
        .experiment_config()
        .map_err(|e| CliError::artifact(MODEL_FILE, format!("embedded config: {e}")))?;
    let t = &cfg.trainer;
    let dims = (m.extractor.input_dim(), m.extractor.hidden_dim(), m.extractor.feature_dim());
    if dims != (t.raw_dim, t.hidden_dim, t.feature_dim) {
        return bad(format!(
            "extractor dims {dims:?} do not match config ({}, {}, {})",
            t.raw_dim, t.hidden_dim, t.feature_dim
        ));
    }
    if m.head.kind() != t.head {
        return bad(format!("head is {} but config says {}", m.head.kind().as_str(), t.head.as_str()));
    }
    if (m.head.d_in(), m.head.d_out()) != (t.feature_dim, 1) {
        return bad(format!(
            "head maps {} -> {}, expected {} -> 1",
            m.head.d_in(),
            m.head.d_out(),
            t.feature_dim
        ));
    }
    if m.tasks > cfg.protocol.num_tasks() {
        return bad(format!("{} tasks exceed the protocol's {}", m.tasks, cfg.protocol.num_tasks()));
    }
    if let DetectorHead::Dgkd(h) = &m.head {
        if h.layers().len() != m.tasks || h.groups() != t.groups {
            return bad(format!(
                "DG-KD head has {} layers and {} groups, expected {} and {}",
                h.layers().len(),
                h.groups(),
                m.tasks,
                t.groups
            ));
        }
    }
    if let Some(p) = &m.projection {
        if p.dim() != t.feature_dim {
            return bad(format!("projection dim {} != feature_dim {}", p.dim(), t.feature_dim));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub status: RunStatus,
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of every artifact written, keyed by file name.
    pub files: BTreeMap<String, String>,
    pub error: Option<String>,
}

pub fn parse_manifest_json(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| CliError::artifact(MANIFEST_FILE, e.to_string()))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(CliError::artifact(
            MANIFEST_FILE,
            format!("schema_version {} (expected {SCHEMA_VERSION})", m.schema_version),
        ));
    }
    Ok(m)
}

/// Result of a completed run, kept in memory for callers that want more than
/// the files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub state: TrainerState,
    pub summary: Summary,
    pub manifest: Manifest,
}

struct RunWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunWriter {
    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        f(&mut bytes)?;
        std::fs::write(self.dir.join(name), &bytes)?;
        self.files.insert(name.to_owned(), sha256_hex(&bytes));
        Ok(())
    }

    fn write_manifest(&self, cfg: &ExperimentConfig, error: Option<String>) -> Result<Manifest> {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            status: if error.is_some() { RunStatus::Failed } else { RunStatus::Ok },
            config_hash: config_hash(cfg),
            seed: cfg.seed(),
            files: self.files.clone(),
            error,
        };
        let mut w = BufWriter::new(File::create(self.dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(manifest)
    }
}

/// The benchmark stream a config describes.
pub fn build_stream(cfg: &ExperimentConfig) -> Result<TaskStream> {
    Ok(gen_sequence_with(cfg.protocol, cfg.seed(), &cfg.bench_params())?)
}

/// Evaluation splits of every domain in `stream`.
pub fn eval_splits(stream: &TaskStream) -> Result<Vec<Dataset>> {
    (0..stream.len()).map(|k| Ok(stream.generate(k)?.1)).collect()
}

fn run_inner(
    cfg: &ExperimentConfig,
    out: &mut RunWriter,
    losses: &mut Vec<TaskReport>,
) -> Result<(TrainerState, Summary)> {
    out.write_with(CONFIG_FILE, |w| Ok(w.write_all(cfg.to_text().as_bytes())?))?;
    let stream = build_stream(cfg)?;
    save_stream(out.dir.join(STREAM_FILE), &stream)?;
    let text = std::fs::read(out.dir.join(STREAM_FILE))?;
    out.files.insert(STREAM_FILE.to_owned(), sha256_hex(&text));

    let splits = stream.generate_all()?;
    let evals: Vec<Dataset> = splits.iter().map(|(_, e)| e.clone()).collect();
    let mut state = TrainerState::new(cfg.trainer.clone())?;
    for (train, _) in &splits {
        losses.push(state.train_task(train)?);
        state.record_scores(&evals)?;
        let t = state.task;
        out.write_with(&memory_file(t), |w| Ok(write_snapshot(w, &state.memory)?))?;
        out.write_with(SCORES_FILE, |w| Ok(state.scores.write_csv(w)?))?;
    }
    let summary = Summary::from_scores(cfg, &state.scores, losses.clone())?;
    out.write_with(SUMMARY_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        Ok(writeln!(w)?)
    })?;
    let model = ModelArtifact::from_state(cfg, &state);
    out.write_with(MODEL_FILE, |w| {
        serde_json::to_writer(&mut *w, &model)?;
        Ok(writeln!(w)?)
    })?;
    Ok((state, summary))
}

/// Runs `cfg` and writes every artifact into `dir`.
///
/// On failure after the directory exists, the artifacts written so far stay
/// in place and `manifest.json` records the error with `status: failed`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let mut out = RunWriter {
        dir: dir.clone(),
        files: BTreeMap::new(),
    };
    let mut losses = Vec::new();
    match run_inner(cfg, &mut out, &mut losses) {
        Ok((state, summary)) => {
            let manifest = out.write_manifest(cfg, None)?;
            Ok(RunOutput {
                dir,
                state,
                summary,
                manifest,
            })
        }
        Err(e) => {
            // The original error matters more than a failure to record it.
            let _ = out.write_manifest(cfg, Some(e.to_string()));
            Err(e)
        }
    }
}

/// Loads `model.json` from a run directory.
pub fn load_model(dir: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = dir.as_ref().join(MODEL_FILE);
    if !path.exists() {
        return Err(CliError::MissingArtifacts {
            dir: dir.as_ref().display().to_string(),
            missing: vec![MODEL_FILE.to_owned()],
        });
    }
    load_model_json(&std::fs::read_to_string(path)?)
}
