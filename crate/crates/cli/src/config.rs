//! Flat `key = value` experiment configuration with a version header.
//!
//! ```text
//! # kancfd-config version=1
//! protocol = four-task
//! seed = 1
//! head = dgkd
//! ```
//!
//! Missing keys keep their defaults; unknown or repeated keys are errors.
//! Lines starting with `#` after the header are comments.

use std::fmt::Write as _;
use std::path::Path;

use kancfd::continual::TrainerConfig;
use kancfd::kanheads::HeadKind;
use kancfd::synthbench::{BenchParams, Protocol};

use crate::error::{CliError, Result};

pub const CONFIG_MAGIC: &str = "# kancfd-config";
pub const CONFIG_VERSION: u32 = 1;

/// Everything needed to reproduce one run: the benchmark stream, the trainer
/// and where artifacts go by default.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub bench: BenchParams,
    pub trainer: TrainerConfig,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::FourTask,
            bench: BenchParams::default(),
            trainer: TrainerConfig::default(),
            out_dir: "runs/default".into(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(raw: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        let v: f64 = raw.parse().map_err(|e| format!("`{raw}` is not a number ({e})"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("`{raw}` is not finite"))
        }
    }

    fn render(&self) -> String {
        self.to_string()
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(raw: &str) -> std::result::Result<Self, String> {
                raw.parse().map_err(|e| format!("`{raw}` is not a non-negative integer ({e})"))
            }

            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

int_value!(usize, u64);

impl ConfigValue for bool {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        match raw {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("`{raw}` is not `true` or `false`")),
        }
    }

    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        if raw.is_empty() {
            Err("value must not be empty".into())
        } else {
            Ok(raw.to_owned())
        }
    }

    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Protocol {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse().map_err(|e: kancfd::Error| e.to_string())
    }

    fn render(&self) -> String {
        self.as_str().to_owned()
    }
}

impl ConfigValue for HeadKind {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse().map_err(|e: kancfd::Error| e.to_string())
    }

    fn render(&self) -> String {
        self.as_str().to_owned()
    }
}

macro_rules! config_fields {
    ($($key:literal => $($path:ident).+),* $(,)?) => {
        /// Every key in the order [`ExperimentConfig::to_text`] writes them.
        pub const CONFIG_KEYS: &[&str] = &[$($key),*];

        fn set_field(cfg: &mut ExperimentConfig, key: &str, raw: &str) -> Option<std::result::Result<(), String>> {
            match key {
                $($key => Some(ConfigValue::parse_value(raw).map(|v| cfg.$($path).+ = v)),)*
                _ => None,
            }
        }

        fn render_field(cfg: &ExperimentConfig, key: &str) -> String {
            match key {
                $($key => cfg.$($path).+.render(),)*
                _ => unreachable!("unknown config key {key}"),
            }
        }
    };
}

config_fields! {
    "protocol" => protocol,
    "seed" => trainer.seed,
    "head" => trainer.head,
    "use_sc" => trainer.ablation.use_sc,
    "use_kd" => trainer.ablation.use_kd,
    "use_kdcp" => trainer.ablation.use_kdcp,
    "replay_raw" => trainer.ablation.use_raw_replay,
    "lambda_sc" => trainer.loss.lambda_sc,
    "lambda_kd" => trainer.loss.lambda_kd,
    "temperature" => trainer.loss.temperature,
    "normalize_sc" => trainer.loss.normalize,
    "raw_dim" => trainer.raw_dim,
    "hidden_dim" => trainer.hidden_dim,
    "feature_dim" => trainer.feature_dim,
    "groups" => trainer.groups,
    "feature_gain" => trainer.feature_gain,
    "memory_budget" => trainer.memory_budget,
    "augment_jitter" => trainer.augment.jitter,
    "epochs" => trainer.epochs,
    "batch_size" => trainer.batch_size,
    "replay_batch_size" => trainer.replay_batch_size,
    "lr" => trainer.lr,
    "projection_lr" => trainer.projection_lr,
    "adam_eps" => trainer.adam_eps,
    "head_adam_eps" => trainer.head_adam_eps,
    "n_train" => bench.n_train,
    "n_eval" => bench.n_eval,
    "noise" => bench.noise,
    "component_offset" => bench.component_offset,
    "fake_offset" => bench.fake_offset,
    "fake_shared" => bench.fake_shared,
    "domain_shift" => bench.domain_shift,
    "out_dir" => out_dir,
}

fn parse_header(line: &str) -> Result<()> {
    let rest = line
        .strip_prefix(CONFIG_MAGIC)
        .ok_or_else(|| CliError::config(Some(1), None, format!("expected header `{CONFIG_MAGIC} version={CONFIG_VERSION}`")))?;
    let version = rest
        .trim()
        .strip_prefix("version=")
        .ok_or_else(|| CliError::config(Some(1), Some("version"), "missing `version=` in header"))?;
    if version != CONFIG_VERSION.to_string() {
        return Err(CliError::config(
            Some(1),
            Some("version"),
            format!("unsupported config version {version} (expected {CONFIG_VERSION})"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        parse_header(lines.next().unwrap_or_default())?;
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(Some(n), None, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(CliError::config(Some(n), Some(key), "key given twice"));
            }
            match set_field(&mut cfg, key, value) {
                None => return Err(CliError::config(Some(n), Some(key), "unknown key")),
                Some(Err(msg)) => return Err(CliError::config(Some(n), Some(key), msg)),
                Some(Ok(())) => seen.push(key),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(None, None, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text form: header plus every key in [`CONFIG_KEYS`] order.
    /// [`ExperimentConfig::parse`] of the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{CONFIG_MAGIC} version={CONFIG_VERSION}\n");
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", render_field(self, key));
        }
        s
    }

    pub fn seed(&self) -> u64 {
        self.trainer.seed
    }

    /// Field-level checks that the core constructors would otherwise report
    /// without naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CliError::config(None, Some(name), msg))
            }
        };
        let t = &self.trainer;
        let b = &self.bench;
        field("raw_dim", t.raw_dim > 0, "must be positive")?;
        field("hidden_dim", t.hidden_dim > 0, "must be positive")?;
        field("feature_dim", t.feature_dim >= 2, "must be at least 2")?;
        field("groups", t.groups > 0 && t.groups <= t.feature_dim, "must be in 1..=feature_dim")?;
        field("feature_gain", t.feature_gain > 0.0, "must be positive")?;
        field("memory_budget", t.memory_budget > 0, "must be positive")?;
        field("augment_jitter", t.augment.jitter >= 0.0, "must be non-negative")?;
        field("epochs", t.epochs > 0, "must be positive")?;
        field("batch_size", t.batch_size >= 2, "must be at least 2")?;
        field("replay_batch_size", t.replay_batch_size >= 2, "must be at least 2")?;
        field("lr", t.lr > 0.0, "must be positive")?;
        field("projection_lr", t.projection_lr > 0.0, "must be positive")?;
        field("adam_eps", t.adam_eps > 0.0, "must be positive")?;
        field("head_adam_eps", t.head_adam_eps > 0.0, "must be positive")?;
        field("lambda_sc", t.loss.lambda_sc >= 0.0, "must be non-negative")?;
        field("lambda_kd", t.loss.lambda_kd >= 0.0, "must be non-negative")?;
        field("temperature", t.loss.temperature > 0.0, "must be positive")?;
        field("n_train", b.n_train >= 2, "must be at least 2")?;
        field("n_eval", b.n_eval >= 2, "must be at least 2")?;
        field("noise", b.noise > 0.0, "must be positive")?;
        field("component_offset", b.component_offset >= 0.0, "must be non-negative")?;
        field("fake_offset", b.fake_offset > 0.0, "must be positive")?;
        field("fake_shared", (0.0..=1.0).contains(&b.fake_shared), "must be in [0, 1]")?;
        field("domain_shift", b.domain_shift >= 0.0, "must be non-negative")?;
        t.validate().map_err(|e| CliError::config(None, None, e.to_string()))
    }

    /// Benchmark parameters with the raw dimension taken from the trainer.
    pub fn bench_params(&self) -> BenchParams {
        BenchParams {
            raw_dim: self.trainer.raw_dim,
            ..self.bench
        }
    }
}
