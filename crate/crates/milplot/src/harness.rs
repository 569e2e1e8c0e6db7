//! Training and evaluation orchestration: batch-of-1 bag processing with
//! gradient accumulation, per-epoch metric traces, attacked evaluation with
//! latency reporting, and binary checkpoints.

use crate::adversary::{enlarge, EnlargeMode, EnlargeSpec};
use crate::baseline::{baseline_forward, baseline_loss_backward, baseline_preprocess, BaselineParams};
use crate::byteplot::{bag_from_bytes, Bag, ByteplotError, PATCH_SIZE};
use crate::corpus::{Corpus, CorpusError};
use crate::metrics::{classification_report, EvalReport, LatencySample, MetricsError};
use crate::mil::{mil_forward, mil_loss_backward, MilOptions, MilParams};
use crate::tensor::{AdamConfig, AdamState, Param, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::{Read, Write as _};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("corpus is empty or has fewer than 2 classes")]
    EmptyCorpus,
    #[error("training produced a non-finite loss at epoch {epoch}, bag {bag}")]
    NumericFailure { epoch: usize, bag: usize },
    #[error("train and eval corpora share sample id {0}")]
    TrainTestOverlap(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("incompatible checkpoint: expected {expected}, found {found}")]
    IncompatibleCheckpoint { expected: String, found: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Byteplot(#[from] ByteplotError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Baseline,
    MilAttention,
    MilGated,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::MilAttention => "mil_attention",
            ModelKind::MilGated => "mil_gated",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "baseline" => Some(ModelKind::Baseline),
            "mil_attention" | "mil-attention" => Some(ModelKind::MilAttention),
            "mil_gated" | "mil-gated" => Some(ModelKind::MilGated),
            _ => None,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            ModelKind::Baseline => 0,
            ModelKind::MilAttention => 1,
            ModelKind::MilGated => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<ModelKind> {
        match tag {
            0 => Some(ModelKind::Baseline),
            1 => Some(ModelKind::MilAttention),
            2 => Some(ModelKind::MilGated),
            _ => None,
        }
    }
}

/// Learnable state of either model family.
#[derive(Debug, Clone)]
pub enum ModelParams {
    Baseline(BaselineParams),
    Mil(MilParams),
}

impl ModelParams {
    pub fn init(kind: ModelKind, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            ModelKind::Baseline => ModelParams::Baseline(BaselineParams::init(num_classes, &mut rng)),
            ModelKind::MilAttention => ModelParams::Mil(MilParams::init(num_classes, false, &mut rng)),
            ModelKind::MilGated => ModelParams::Mil(MilParams::init(num_classes, true, &mut rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Baseline(_) => ModelKind::Baseline,
            ModelParams::Mil(m) if m.attention.is_gated() => ModelKind::MilGated,
            ModelParams::Mil(_) => ModelKind::MilAttention,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelParams::Baseline(b) => b.num_classes,
            ModelParams::Mil(m) => m.num_classes,
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        match self {
            ModelParams::Baseline(b) => b.named_params_mut(),
            ModelParams::Mil(m) => m.named_params_mut(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub epochs: usize,
    pub accumulation_bags: usize,
    pub sub_batch: usize,
    /// None disables top-k selection.
    pub k_top: Option<usize>,
    pub patch: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_kind: ModelKind::MilAttention,
            epochs: 20,
            accumulation_bags: 48,
            sub_batch: 60,
            k_top: Some(12),
            patch: PATCH_SIZE,
            learning_rate: 1e-3,
            seed: 0,
            parallel: true,
        }
    }
}

/// One row of the per-epoch metric trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub epoch: usize,
    pub split: &'static str,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub loss: f64,
    pub auroc: f64,
}

pub const TRACE_CSV_HEADER: &str = "epoch,split,accuracy,macro_f1,loss,auroc";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.split, r.accuracy, r.macro_f1, r.loss, r.auroc
        );
    }
    out
}

enum Prepared {
    Baseline(Vec<(Tensor, usize)>),
    Mil(Vec<Bag>),
}

fn prepare(
    corpus: &Corpus,
    kind: ModelKind,
    patch: usize,
) -> Result<Prepared, HarnessError> {
    match kind {
        ModelKind::Baseline => {
            let items = corpus
                .samples
                .par_iter()
                .map(|s| {
                    let t = baseline_preprocess(&s.bytes)?;
                    Ok((t, s.family.expect("labelled corpus")))
                })
                .collect::<Result<Vec<_>, ByteplotError>>()?;
            Ok(Prepared::Baseline(items))
        }
        _ => {
            let bags = corpus
                .samples
                .par_iter()
                .map(|s| bag_from_bytes(&s.bytes, patch, s.family, &s.id))
                .collect::<Result<Vec<_>, ByteplotError>>()?;
            Ok(Prepared::Mil(bags))
        }
    }
}

/// Train a model on bags processed one at a time (logical batch size 1),
/// accumulating gradients and averaging them over `accumulation_bags` before
/// each Adam step; a leftover partial group at epoch end still steps. Models
/// train on unmodified samples only; attacks are evaluation-time.
///
/// When `eval_corpus` is given (the held-out test split), a test trace row is
/// emitted per epoch alongside the training-pass row.
pub fn train(
    train_corpus: &Corpus,
    eval_corpus: Option<&Corpus>,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<TraceRow>), HarnessError> {
    train_from(train_corpus, eval_corpus, config, None)
}

/// `train`, optionally continuing from checkpointed parameters. The resumed
/// model must match the configured kind and the corpus class count.
pub fn train_from(
    train_corpus: &Corpus,
    eval_corpus: Option<&Corpus>,
    config: &TrainConfig,
    resume: Option<ModelParams>,
) -> Result<(ModelParams, Vec<TraceRow>), HarnessError> {
    if train_corpus.samples.is_empty() || train_corpus.num_classes() < 2 {
        return Err(HarnessError::EmptyCorpus);
    }
    if let Some(eval) = eval_corpus {
        let train_ids: std::collections::HashSet<&str> =
            train_corpus.samples.iter().map(|s| s.id.as_str()).collect();
        for s in &eval.samples {
            if train_ids.contains(s.id.as_str()) {
                return Err(HarnessError::TrainTestOverlap(s.id.clone()));
            }
        }
    }
    for s in &train_corpus.samples {
        if s.family.is_none() {
            return Err(CorpusError::UnlabeledSample(s.id.clone()).into());
        }
    }

    let num_classes = train_corpus.num_classes();
    let mut model = match resume {
        Some(m) => {
            if m.kind() != config.model_kind {
                return Err(HarnessError::IncompatibleCheckpoint {
                    expected: config.model_kind.as_str().to_string(),
                    found: m.kind().as_str().to_string(),
                });
            }
            if m.num_classes() != num_classes {
                return Err(HarnessError::IncompatibleCheckpoint {
                    expected: format!("{num_classes} classes"),
                    found: format!("{} classes", m.num_classes()),
                });
            }
            m
        }
        None => ModelParams::init(config.model_kind, num_classes, config.seed),
    };
    let prepared = prepare(train_corpus, config.model_kind, config.patch)?;
    let labels: Vec<usize> = train_corpus
        .samples
        .iter()
        .map(|s| s.family.unwrap())
        .collect();

    let lens: Vec<usize> = model
        .named_params_mut()
        .iter()
        .map(|(_, p)| p.value.len())
        .collect();
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        &lens,
    );
    let mil_opts = MilOptions {
        k_top: config.k_top,
        sub_batch: config.sub_batch,
        parallel: config.parallel,
    };
    let eval_cfg = EvalConfig {
        patch: config.patch,
        sub_batch: config.sub_batch,
        k_top: config.k_top,
        parallel: config.parallel,
    };

    let n = train_corpus.samples.len();
    let mut trace = Vec::new();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }

        let mut epoch_truths = Vec::with_capacity(n);
        let mut epoch_probs = Vec::with_capacity(n);
        let mut loss_sum = 0.0f64;
        let mut group = 0usize;
        for (step, &idx) in order.iter().enumerate() {
            let label = labels[idx];
            let (loss, probs) = match (&prepared, &mut model) {
                (Prepared::Baseline(items), ModelParams::Baseline(params)) => {
                    baseline_loss_backward(&items[idx].0, label, params)
                }
                (Prepared::Mil(bags), ModelParams::Mil(params)) => {
                    mil_loss_backward(&bags[idx], label, params, &mil_opts)
                }
                _ => unreachable!("prepared data matches model kind"),
            };
            if !loss.is_finite() {
                return Err(HarnessError::NumericFailure { epoch, bag: step });
            }
            loss_sum += loss as f64;
            epoch_truths.push(label);
            epoch_probs.push(probs);
            group += 1;
            if group == config.accumulation_bags || step + 1 == n {
                let scale = 1.0 / group as f32;
                let mut refs: Vec<&mut Param> = model
                    .named_params_mut()
                    .into_iter()
                    .map(|(_, p)| p)
                    .collect();
                adam.apply(&mut refs, scale);
                for p in refs {
                    p.zero_grad();
                }
                group = 0;
            }
        }

        let train_report = classification_report(&epoch_truths, &epoch_probs, num_classes)?;
        trace.push(TraceRow {
            epoch,
            split: "train",
            accuracy: train_report.accuracy,
            macro_f1: train_report.macro_f1,
            loss: loss_sum / n as f64,
            auroc: train_report.auroc_macro,
        });

        if let Some(eval) = eval_corpus {
            let report = evaluate(&model, eval, None, &eval_cfg)?;
            trace.push(TraceRow {
                epoch,
                split: "test",
                accuracy: report.accuracy,
                macro_f1: report.macro_f1,
                loss: report.mean_loss,
                auroc: report.auroc_macro,
            });
        }
    }
    Ok((model, trace))
}

/// How evaluation-time attacks size their targets.
#[derive(Debug, Clone, Copy)]
pub enum EnlargeTarget {
    /// Multiply the sample's byte count.
    Factor(usize),
    /// Enlarge to side x side pixels.
    Side(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    pub mode: EnlargeMode,
    pub target: EnlargeTarget,
    pub seed: u64,
}

impl AttackConfig {
    pub fn spec_for(&self, len: usize, sample_index: usize) -> EnlargeSpec {
        let target_pixels = match self.target {
            EnlargeTarget::Factor(f) => len * f,
            EnlargeTarget::Side(s) => s * s,
        };
        EnlargeSpec {
            mode: self.mode,
            target_pixels: target_pixels.max(len),
            seed: self.seed.wrapping_add(sample_index as u64),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub patch: usize,
    pub sub_batch: usize,
    pub k_top: Option<usize>,
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            patch: PATCH_SIZE,
            sub_batch: 60,
            k_top: Some(12),
            parallel: true,
        }
    }
}

/// Evaluate a model over a corpus, optionally enlarging every sample first.
/// The report carries two timings per bag: network-only latency and
/// end-to-end latency including enlargement, byteplot, and bag overheads.
pub fn evaluate(
    model: &ModelParams,
    corpus: &Corpus,
    attack: Option<&AttackConfig>,
    cfg: &EvalConfig,
) -> Result<EvalReport, HarnessError> {
    if corpus.samples.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    if model.num_classes() != corpus.num_classes() {
        return Err(HarnessError::IncompatibleCheckpoint {
            expected: format!("{} classes", corpus.num_classes()),
            found: format!("{} classes", model.num_classes()),
        });
    }
    let mil_opts = MilOptions {
        k_top: cfg.k_top,
        sub_batch: cfg.sub_batch,
        parallel: cfg.parallel,
    };

    let mut truths = Vec::with_capacity(corpus.samples.len());
    let mut probs = Vec::with_capacity(corpus.samples.len());
    let mut latencies = Vec::with_capacity(corpus.samples.len());
    for (i, sample) in corpus.samples.iter().enumerate() {
        let label = sample
            .family
            .ok_or_else(|| CorpusError::UnlabeledSample(sample.id.clone()))?;
        let start = Instant::now();
        let attacked;
        let bytes: &[u8] = match attack {
            Some(a) => {
                attacked = enlarge(&sample.bytes, &a.spec_for(sample.bytes.len(), i))
                    .expect("targets never shrink");
                &attacked
            }
            None => &sample.bytes,
        };
        let p = match model {
            ModelParams::Baseline(params) => {
                let patch = baseline_preprocess(bytes)?;
                let net_start = Instant::now();
                let p = baseline_forward(&patch, params);
                latencies.push(LatencySample {
                    network_ms: net_start.elapsed().as_secs_f64() * 1e3,
                    end_to_end_ms: start.elapsed().as_secs_f64() * 1e3,
                });
                p
            }
            ModelParams::Mil(params) => {
                let bag = bag_from_bytes(bytes, cfg.patch, Some(label), &sample.id)?;
                let net_start = Instant::now();
                let out = mil_forward(&bag, params, &mil_opts);
                latencies.push(LatencySample {
                    network_ms: net_start.elapsed().as_secs_f64() * 1e3,
                    end_to_end_ms: start.elapsed().as_secs_f64() * 1e3,
                });
                out.probs
            }
        };
        truths.push(label);
        probs.push(p);
    }

    let mut report = classification_report(&truths, &probs, corpus.num_classes())?;
    report.latencies = latencies;
    Ok(report)
}

/// Per-bag attention dump for a MIL model over a corpus:
/// `bag_id,instance_index,weight,selected` rows.
pub fn attention_dump(
    params: &MilParams,
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<String, HarnessError> {
    let mil_opts = MilOptions {
        k_top: cfg.k_top,
        sub_batch: cfg.sub_batch,
        parallel: cfg.parallel,
    };
    let mut out = format!("{}\n", crate::mil::attention_csv_header());
    for sample in &corpus.samples {
        let bag = bag_from_bytes(&sample.bytes, cfg.patch, sample.family, &sample.id)?;
        let fwd = mil_forward(&bag, params, &mil_opts);
        out.push_str(&crate::mil::attention_csv_rows(
            &sample.id,
            &fwd.attention_weights,
            &fwd.selected,
        ));
    }
    Ok(out)
}

// ---- checkpoints -------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"MILPCKPT";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub epochs_trained: u32,
    pub seed: u64,
    pub config_hash: u64,
}

/// Binary layout: magic, version, model kind tag, class count, metadata,
/// then length-prefixed named tensors as little-endian f32.
pub fn save_checkpoint(
    model: &mut ModelParams,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), HarnessError> {
    let kind = model.kind();
    let num_classes = model.num_classes() as u32;
    let named = model.named_params_mut();

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.push(kind.tag());
    buf.extend_from_slice(&num_classes.to_le_bytes());
    buf.extend_from_slice(&meta.epochs_trained.to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&meta.config_hash.to_le_bytes());
    buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, p) in named {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], HarnessError> {
        if self.pos + n > self.buf.len() {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "unexpected end of file at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, HarnessError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, HarnessError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, HarnessError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta), HarnessError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    if cur.take(8)? != CKPT_MAGIC {
        return Err(HarnessError::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != CKPT_VERSION {
        return Err(HarnessError::VersionMismatch {
            found: version,
            expected: CKPT_VERSION,
        });
    }
    let kind = ModelKind::from_tag(cur.u8()?)
        .ok_or_else(|| HarnessError::CorruptCheckpoint("unknown model kind tag".into()))?;
    let num_classes = cur.u32()? as usize;
    if num_classes < 2 {
        return Err(HarnessError::CorruptCheckpoint(format!(
            "class count {num_classes} out of range"
        )));
    }
    let meta = CheckpointMeta {
        epochs_trained: cur.u32()?,
        seed: cur.u64()?,
        config_hash: cur.u64()?,
    };
    let tensor_count = cur.u32()? as usize;

    let mut model = ModelParams::init(kind, num_classes, 0);
    {
        let mut named = model.named_params_mut();
        if tensor_count != named.len() {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "expected {} tensors, found {tensor_count}",
                named.len()
            )));
        }
        for (name, param) in named.iter_mut() {
            let name_len = cur.u16()? as usize;
            let found_name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| HarnessError::CorruptCheckpoint("non-utf8 tensor name".into()))?;
            if found_name != *name {
                return Err(HarnessError::CorruptCheckpoint(format!(
                    "tensor {found_name:?} where {name:?} expected"
                )));
            }
            let ndim = cur.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u32()? as usize);
            }
            if shape != param.value.shape() {
                return Err(HarnessError::CorruptCheckpoint(format!(
                    "tensor {name} has shape {shape:?}, expected {:?}",
                    param.value.shape()
                )));
            }
            let data = cur.take(param.value.len() * 4)?;
            for (dst, src) in param.value.data_mut().iter_mut().zip(data.chunks_exact(4)) {
                *dst = f32::from_le_bytes(src.try_into().unwrap());
            }
        }
    }
    if cur.pos != buf.len() {
        return Err(HarnessError::CorruptCheckpoint(format!(
            "{} trailing bytes",
            buf.len() - cur.pos
        )));
    }
    Ok((model, meta))
}
