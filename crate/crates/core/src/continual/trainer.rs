use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc, ScoreMatrix};
use crate::fskdcp::{project_memory, replay_batch, AugmentConfig, FeatureMemory, KdcpProjection};
use crate::kanheads::{DetectorHead, FeatureExtractor, HeadKind, Parameterized};
use crate::losses::{bce_loss, domain_class_label, kd_loss, supcon_loss, DomainLabeledBatch, LossConfig};
use crate::numcore::{adam_step, AdamState, DenseMatrix, RngStream};
use crate::synthbench::Dataset;
use crate::{Error, Result};

/// Which parts of the objective and replay are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub use_sc: bool,
    pub use_kd: bool,
    pub use_kdcp: bool,
    /// Replay stored raw inputs through the current extractor instead of
    /// stored features (the upper-bound setting).
    pub use_raw_replay: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_sc: true,
            use_kd: true,
            use_kdcp: true,
            use_raw_replay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub head: HeadKind,
    pub raw_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub groups: usize,
    pub loss: LossConfig,
    pub ablation: Ablation,
    pub epochs: usize,
    pub batch_size: usize,
    pub replay_batch_size: usize,
    pub lr: f64,
    pub projection_lr: f64,
    /// Adam epsilon for the extractor parameters.
    pub adam_eps: f64,
    /// Adam epsilon for the head parameters.
    pub head_adam_eps: f64,
    /// Init gain of the extractor's output layer.
    pub feature_gain: f64,
    pub memory_budget: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::Dgkd,
            raw_dim: crate::synthbench::DEFAULT_RAW_DIM,
            hidden_dim: FeatureExtractor::DEFAULT_HIDDEN,
            feature_dim: FeatureExtractor::DEFAULT_FEATURE_DIM,
            groups: 8,
            loss: LossConfig::default(),
            ablation: Ablation::default(),
            epochs: 20,
            batch_size: 64,
            replay_batch_size: 64,
            lr: 2e-4,
            projection_lr: KdcpProjection::DEFAULT_LR,
            adam_eps: Self::DEFAULT_ADAM_EPS,
            head_adam_eps: Self::DEFAULT_HEAD_ADAM_EPS,
            feature_gain: Self::DEFAULT_FEATURE_GAIN,
            memory_budget: FeatureMemory::DEFAULT_BUDGET,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub const DEFAULT_ADAM_EPS: f64 = 1e-2;
    pub const DEFAULT_HEAD_ADAM_EPS: f64 = 1e-8;
    pub const DEFAULT_FEATURE_GAIN: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let positive = [
            ("raw_dim", self.raw_dim),
            ("hidden_dim", self.hidden_dim),
            ("feature_dim", self.feature_dim),
            ("groups", self.groups),
            ("epochs", self.epochs),
            ("memory_budget", self.memory_budget),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.groups > self.feature_dim {
            return Err(Error::InvalidArgument(format!(
                "groups ({}) exceeds feature_dim ({})",
                self.groups, self.feature_dim
            )));
        }
        if self.batch_size < 2 || self.replay_batch_size < 2 {
            return Err(Error::InvalidArgument("batch sizes must be at least 2".into()));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("projection_lr", self.projection_lr),
            ("adam_eps", self.adam_eps),
            ("head_adam_eps", self.head_adam_eps),
            ("feature_gain", self.feature_gain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite")));
            }
        }
        if !(self.augment.jitter.is_finite() && self.augment.jitter >= 0.0) {
            return Err(Error::InvalidArgument("augment jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mean per-batch loss components of one task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: usize,
    pub steps: usize,
    pub cls: f64,
    pub sc: f64,
    pub kd: f64,
    pub align: f64,
    pub total: f64,
}

/// Everything the trainer carries between tasks.
#[derive(Debug, Clone, Serialize)]
pub struct TrainerState {
    pub config: TrainerConfig,
    pub extractor: FeatureExtractor,
    /// Frozen copy of the extractor as it was at the end of the previous task.
    pub teacher: Option<FeatureExtractor>,
    pub head: DetectorHead,
    pub memory: FeatureMemory,
    /// Projection trained during the latest task (absent at task 1).
    pub projection: Option<KdcpProjection>,
    /// Number of completed tasks.
    pub task: usize,
    pub scores: ScoreMatrix,
}

fn both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

fn add_scaled(dst: &mut DenseMatrix, src: &DenseMatrix, scale: f64) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += scale * s;
    }
}

impl TrainerState {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let extractor = FeatureExtractor::with_output_gain(
            config.raw_dim,
            config.hidden_dim,
            config.feature_dim,
            config.feature_gain,
            &mut root.substream(1),
        )?;
        let head = DetectorHead::new(config.head, config.feature_dim, 1, config.groups, &mut root.substream(2))?;
        let memory = FeatureMemory::new(config.memory_budget, config.feature_dim);
        Ok(Self {
            config,
            extractor,
            teacher: None,
            head,
            memory,
            projection: None,
            task: 0,
            scores: ScoreMatrix::new(),
        })
    }

    fn task_rng(&self, t: usize, purpose: u64) -> RngStream {
        RngStream::new(self.config.seed).substream(1000 * t as u64 + purpose)
    }

    /// Trains on the next task (1-based index `self.task + 1`) and updates the
    /// memory and teacher for the one after it.
    pub fn train_task(&mut self, data: &Dataset) -> Result<TaskReport> {
        if !both_classes(&data.labels) {
            return Err(Error::InvalidArgument("task data must contain both classes".into()));
        }
        if data.x.cols() != self.config.raw_dim {
            return Err(Error::shape("task raw dimension", self.config.raw_dim, data.x.cols()));
        }
        let t = self.task + 1;
        let cfg = self.config.clone();
        let ab = cfg.ablation;
        let mut init_rng = self.task_rng(t, 1);
        let mut order_rng = self.task_rng(t, 2);
        let mut replay_rng = self.task_rng(t, 3);

        let features = self.extractor.forward_batch(&data.x)?;
        self.head.begin_task(&features, &mut init_rng)?;

        let teacher = self.teacher.clone();
        let replaying = t >= 2 && !self.memory.is_empty();
        let mut projection = match (&teacher, ab.use_kdcp) {
            (Some(teacher), true) => {
                let reference = teacher.forward_batch(&data.x)?.vstack(self.memory.features())?;
                Some(KdcpProjection::new(t, cfg.groups, &reference, &mut init_rng)?)
            }
            _ => None,
        };
        let mut proj_opt = projection.as_ref().map(|p| p.optimizer(cfg.projection_lr));

        let n_ext = self.extractor.num_params();
        let mut ext_opt = AdamState::new(n_ext, cfg.lr);
        ext_opt.eps = cfg.adam_eps;
        let mut head_opt = AdamState::new(self.head.num_params(), cfg.lr);
        head_opt.eps = cfg.head_adam_eps;
        let task_labels: Vec<usize> = data.labels.iter().map(|&y| domain_class_label(t - 1, y)).collect();
        let mut report = TaskReport {
            task: t,
            ..TaskReport::default()
        };
        let no_jitter = AugmentConfig {
            jitter: 0.0,
            ..cfg.augment
        };

        for _ in 0..cfg.epochs {
            let perm = order_rng.permutation(data.len());
            for rows in perm.chunks(cfg.batch_size) {
                if rows.len() < 2 {
                    continue;
                }
                let xb = data.x.select_rows(rows);
                let yb: Vec<u8> = rows.iter().map(|&r| data.labels[r]).collect();
                let (student, cache) = self.extractor.forward_batch_cached(&xb)?;
                let teacher_f = teacher.as_ref().map(|tch| tch.forward_batch(&xb)).transpose()?;

                if let (Some(p), Some(o), Some(tf)) = (projection.as_mut(), proj_opt.as_mut(), teacher_f.as_ref()) {
                    report.align += p.train_step(tf, &student, o)?;
                }

                let mut grad_f = DenseMatrix::zeros(student.rows(), student.cols());
                let mut ext_grad = vec![0.0; n_ext];
                let mut head_grad = vec![0.0; self.head.num_params()];

                let logits = self.head.logits(&student)?;
                let (cls, g_logits) = bce_loss(&logits, &yb)?;
                for (r, g) in g_logits.iter().enumerate() {
                    let (gx, gp) = self.head.backward(student.row(r), &[*g])?;
                    grad_f.row_mut(r).iter_mut().zip(gx).for_each(|(a, b)| *a += b);
                    head_grad.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
                }

                let mut sc = 0.0;
                if ab.use_sc {
                    let mut feats = student.clone();
                    let mut dlabels: Vec<usize> = rows.iter().map(|&r| task_labels[r]).collect();
                    let mut raw_replay: Option<(DenseMatrix, crate::kanheads::ExtractorCache)> = None;
                    if replaying {
                        if ab.use_raw_replay {
                            let (batch, src) =
                                replay_batch(&self.memory, &no_jitter, cfg.replay_batch_size, &mut replay_rng)?;
                            let raw = self
                                .memory
                                .raw_inputs()
                                .ok_or_else(|| Error::InvalidArgument("raw replay without stored inputs".into()))?
                                .select_rows(&src);
                            let (rf, rc) = self.extractor.forward_batch_cached(&raw)?;
                            feats = feats.vstack(&rf)?;
                            dlabels.extend(batch.domain_labels);
                            raw_replay = Some((raw, rc));
                        } else {
                            let (batch, _) =
                                replay_batch(&self.memory, &cfg.augment, cfg.replay_batch_size, &mut replay_rng)?;
                            let replayed = match projection.as_ref() {
                                Some(p) => p.apply_batch(&batch.features)?,
                                None => batch.features,
                            };
                            feats = feats.vstack(&replayed)?;
                            dlabels.extend(batch.domain_labels);
                        }
                    }
                    let labels = dlabels.iter().map(|&d| (d % 2) as u8).collect();
                    let batch = DomainLabeledBatch::new(feats, dlabels, labels)?;
                    match supcon_loss(&batch, &cfg.loss) {
                        Ok((value, g)) => {
                            sc = value;
                            let n = student.rows();
                            let lam = cfg.loss.lambda_sc;
                            for r in 0..n {
                                grad_f.row_mut(r).iter_mut().zip(g.row(r)).for_each(|(a, b)| *a += lam * b);
                            }
                            if let Some((raw, rc)) = raw_replay.as_ref() {
                                let idx: Vec<usize> = (n..g.rows()).collect();
                                let mut gr = g.select_rows(&idx);
                                gr.as_mut_slice().iter_mut().for_each(|v| *v *= lam);
                                let (_, gp) = self.extractor.backward_batch(raw, rc, &gr)?;
                                ext_grad.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
                            }
                        }
                        Err(Error::NoNegatives | Error::NoValidAnchors) => {}
                        Err(e) => return Err(e),
                    }
                }

                let mut kd = 0.0;
                if let (true, Some(tf)) = (ab.use_kd, teacher_f.as_ref()) {
                    let (value, g) = kd_loss(tf, &student)?;
                    kd = value;
                    add_scaled(&mut grad_f, &g, cfg.loss.lambda_kd);
                }

                let total = cls + cfg.loss.lambda_sc * sc + cfg.loss.lambda_kd * kd;
                if !total.is_finite() {
                    return Err(Error::NonFinite {
                        context: "training loss",
                        index: Some(report.steps),
                    });
                }
                let (_, gp) = self.extractor.backward_batch(&xb, &cache, &grad_f)?;
                ext_grad.iter_mut().zip(gp).for_each(|(a, b)| *a += b);

                let mut params = self.extractor.params();
                adam_step(&mut params, &ext_grad, &mut ext_opt)?;
                self.extractor.set_params(&params)?;
                let mut params = self.head.params();
                adam_step(&mut params, &head_grad, &mut head_opt)?;
                self.head.set_params(&params)?;

                report.cls += cls;
                report.sc += sc;
                report.kd += kd;
                report.total += total;
                report.steps += 1;
            }
        }
        if report.steps > 0 {
            let n = report.steps as f64;
            report.cls /= n;
            report.sc /= n;
            report.kd /= n;
            report.align /= n;
            report.total /= n;
        }

        if t >= 2 {
            match projection.as_ref() {
                Some(p) if !ab.use_raw_replay => self.memory = project_memory(&self.memory, p)?,
                _ => self.memory.retag(t),
            }
        }
        let final_features = self.extractor.forward_batch(&data.x)?;
        let raw = ab.use_raw_replay.then_some(&data.x);
        self.memory.insert_task(t - 1, &final_features, &data.labels, raw, t)?;
        self.teacher = Some(self.extractor.clone());
        self.projection = projection;
        self.task = t;
        Ok(report)
    }

    /// Logits of the current model on `data`.
    pub fn logits(&self, data: &Dataset) -> Result<Vec<f64>> {
        let f = self.extractor.forward_batch(&data.x)?;
        self.head.logits(&f)
    }

    /// Accuracy and AUC of the current model on each of `evals`.
    pub fn evaluate_all(&self, evals: &[Dataset]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut accs = Vec::with_capacity(evals.len());
        let mut aucs = Vec::with_capacity(evals.len());
        for ds in evals {
            let z = self.logits(ds)?;
            accs.push(accuracy(&z, &ds.labels)?);
            aucs.push(auc(&z, &ds.labels)?);
        }
        Ok((accs, aucs))
    }

    /// Evaluates on the first `self.task` eval sets and appends the row.
    pub fn record_scores(&mut self, evals: &[Dataset]) -> Result<()> {
        if evals.len() < self.task {
            return Err(Error::InvalidArgument(format!(
                "need {} eval sets, got {}",
                self.task,
                evals.len()
            )));
        }
        let (acc, auc) = self.evaluate_all(&evals[..self.task])?;
        self.scores.push_row(acc, auc)
    }
}

/// Trains on every domain of `splits` in order, scoring after each task.
pub fn run_sequence(config: TrainerConfig, splits: &[(Dataset, Dataset)]) -> Result<(TrainerState, Vec<TaskReport>)> {
    let mut state = TrainerState::new(config)?;
    let evals: Vec<Dataset> = splits.iter().map(|(_, e)| e.clone()).collect();
    let mut reports = Vec::with_capacity(splits.len());
    for (train, _) in splits {
        reports.push(state.train_task(train)?);
        state.record_scores(&evals)?;
    }
    Ok((state, reports))
}
