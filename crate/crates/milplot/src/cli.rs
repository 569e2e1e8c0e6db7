//! Command implementations behind the `milplot` binary.
//!
//! Exit codes: 0 success, 2 usage errors, 3 data errors, 4 numeric failures.

use crate::adversary::{enlarge, mi_padding_sweep, sweep_csv, EnlargeMode, EnlargeSpec};
use crate::byteplot::{resize_bilinear, to_square_image, ByteImage, PATCH_SIZE};
use crate::config::{Config, ConfigError};
use crate::corpus::{
    self, load_corpus_dir, parse_hex_dump, stratified_split, synth_corpus, Corpus, CorpusError,
    Split, SplitSpec, SynthConfig,
};
use crate::harness::{
    self, evaluate, load_checkpoint, save_checkpoint, AttackConfig, CheckpointMeta, EnlargeTarget,
    EvalConfig, HarnessError, ModelKind, ModelParams, TrainConfig,
};
use crate::manifest::{manifest_path, sha256_hex, RunManifest};
use crate::metrics::LossPanel;
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::NumericFailure { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_data(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(
    name = "milplot",
    about = "Byteplot malware-family classification: attention MIL vs a resize baseline under enlargement attacks"
)]
pub struct Cli {
    /// Worker threads (default: MILPLOT_THREADS or all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Single-threaded deterministic mode; artifact hashes are reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labelled synthetic corpus with a stratified split.
    Synth {
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
        /// Flat key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on the train split of a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// baseline, mil-attention, or mil-gated.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from an existing checkpoint of the same kind.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, optionally under an enlargement attack.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// test (default), train, or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// zeros or noise.
        #[arg(long)]
        attack: Option<String>,
        /// Enlargement factor over the original byte count.
        #[arg(long)]
        factor: Option<usize>,
        /// Enlarge to side x side pixels instead of a factor.
        #[arg(long)]
        side: Option<usize>,
        #[arg(long, default_value_t = 0)]
        attack_seed: u64,
        /// Also dump per-instance attention weights (MIL models only).
        #[arg(long)]
        attention_csv: bool,
    },
    /// Write adversarially enlarged copies of every corpus sample.
    Attack {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// zeros or noise.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        factor: Option<usize>,
        #[arg(long)]
        side: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Information-loss audit of one sample: metric panel, MI padding sweep,
    /// and difference image.
    Audit {
        /// Hex dump (.bytes) or raw binary sample.
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated square sides; default 1x, 2x, 4x, 8x of the
        /// original side.
        #[arg(long)]
        sides: Option<String>,
        #[arg(long, default_value_t = PATCH_SIZE)]
        resize_to: usize,
    },
    /// Merge evaluation runs into one comparison table.
    Report {
        /// Eval output directories.
        run_dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const SYNTH_KEYS: &[&str] = &[
    "families",
    "samples_per_family_min",
    "samples_per_family_max",
    "size_min_bytes",
    "size_max_bytes",
    "test_fraction",
    "seed",
];

const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "accumulation_bags",
    "sub_batch",
    "k_top",
    "patch",
    "learning_rate",
    "seed",
];

pub fn run(cli: Cli) -> Result<(), CliError> {
    let parallel = !cli.deterministic && cli.threads != Some(1);
    match cli.command {
        Command::Synth { out, config, seed } => cmd_synth(&out, config.as_deref(), seed),
        Command::Train {
            corpus,
            model,
            out,
            config,
            resume,
        } => cmd_train(&corpus, &model, &out, config.as_deref(), resume.as_deref(), parallel),
        Command::Eval {
            checkpoint,
            corpus,
            out,
            split,
            attack,
            factor,
            side,
            attack_seed,
            attention_csv,
        } => cmd_eval(
            &checkpoint,
            &corpus,
            &out,
            &split,
            attack.as_deref(),
            factor,
            side,
            attack_seed,
            attention_csv,
            parallel,
        ),
        Command::Attack {
            corpus,
            out,
            mode,
            factor,
            side,
            seed,
        } => cmd_attack(&corpus, &out, &mode, factor, side, seed),
        Command::Audit {
            sample,
            out,
            sides,
            resize_to,
        } => cmd_audit(&sample, &out, sides.as_deref(), resize_to),
        Command::Report { run_dirs, out } => cmd_report(&run_dirs, out.as_deref()),
    }
}

fn load_config(path: Option<&Path>, allowed: &[&str]) -> Result<Config, CliError> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.check_keys(allowed)?;
    Ok(cfg)
}

fn snapshot_config(manifest: &mut RunManifest, cfg: &Config) {
    for (k, v) in cfg.entries() {
        manifest.set_config(k, v);
    }
}

pub fn cmd_synth(out: &Path, config: Option<&Path>, seed_override: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config, SYNTH_KEYS)?;
    let seed = seed_override.unwrap_or(cfg.get_u64("seed", 1)?);
    let synth_cfg = SynthConfig {
        families: cfg.get_usize("families", 5)?,
        samples_per_family: (
            cfg.get_usize("samples_per_family_min", 100)?,
            cfg.get_usize("samples_per_family_max", 100)?,
        ),
        size_range: (
            cfg.get_usize("size_min_bytes", 100 * 1024)?,
            cfg.get_usize("size_max_bytes", 400 * 1024)?,
        ),
    };
    let test_fraction = cfg.get_f64("test_fraction", 0.1)?;

    let corpus = synth_corpus(&synth_cfg, seed)?;
    let (train_c, _test_c) = stratified_split(
        &corpus,
        &SplitSpec {
            test_fraction,
            seed,
        },
    )?;
    let splits = corpus::split_assignments(&corpus, &train_c);

    std::fs::create_dir_all(out).map_err(|e| io_data(out, e))?;
    corpus::write_corpus_dir(&corpus, out)?;
    corpus::write_manifest(&corpus, &splits, &out.join("manifest.csv"))?;

    let mut manifest = RunManifest::new("synth", seed);
    snapshot_config(&mut manifest, &cfg);
    manifest.set_config("families", synth_cfg.families);
    manifest.set_config("test_fraction", test_fraction);
    for s in &corpus.samples {
        manifest
            .add_output(&out.join(format!("{}.bytes", s.id)))
            .map_err(|e| io_data(out, e))?;
    }
    manifest
        .add_output(&out.join("labels.csv"))
        .and_then(|_| manifest.add_output(&out.join("manifest.csv")))
        .map_err(|e| io_data(out, e))?;
    manifest
        .write(&manifest_path(out))
        .map_err(|e| io_data(out, e))?;
    println!(
        "synth: {} samples, {} families -> {}",
        corpus.samples.len(),
        corpus.num_classes(),
        out.display()
    );
    Ok(())
}

fn load_split(
    dir: &Path,
    want: &str,
) -> Result<Corpus, CliError> {
    let (corpus, splits) = load_corpus_dir(dir)?;
    let picked = match (want, splits) {
        ("all", _) | (_, None) => corpus,
        ("train", Some(s)) => corpus::filter_split(&corpus, &s, Split::Train),
        ("test", Some(s)) => corpus::filter_split(&corpus, &s, Split::Test),
        _ => return Err(CliError::Usage(format!("unknown split {want:?}"))),
    };
    if picked.samples.is_empty() {
        return Err(CliError::Data(format!(
            "corpus {} has no samples in split {want:?}",
            dir.display()
        )));
    }
    Ok(picked)
}

fn config_hash(cfg: &Config) -> u64 {
    let mut text = String::new();
    for (k, v) in cfg.entries() {
        let _ = writeln!(text, "{k}={v}");
    }
    let hex = sha256_hex(text.as_bytes());
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    corpus_dir: &Path,
    model: &str,
    out: &Path,
    config: Option<&Path>,
    resume: Option<&Path>,
    parallel: bool,
) -> Result<(), CliError> {
    let kind = ModelKind::parse(model)
        .ok_or_else(|| CliError::Usage(format!("unknown model kind {model:?}")))?;
    let cfg = load_config(config, TRAIN_KEYS)?;
    let k_top = match cfg.get_usize("k_top", 12)? {
        0 => None,
        k => Some(k),
    };
    let train_cfg = TrainConfig {
        model_kind: kind,
        epochs: cfg.get_usize("epochs", 20)?,
        accumulation_bags: cfg.get_usize("accumulation_bags", 48)?,
        sub_batch: cfg.get_usize("sub_batch", 60)?,
        k_top,
        patch: cfg.get_usize("patch", PATCH_SIZE)?,
        learning_rate: cfg.get_f32("learning_rate", 0.01)?,
        seed: cfg.get_u64("seed", 1)?,
        parallel,
    };

    let (corpus, splits) = load_corpus_dir(corpus_dir)?;
    let (train_c, test_c) = match splits {
        Some(s) => (
            corpus::filter_split(&corpus, &s, Split::Train),
            Some(corpus::filter_split(&corpus, &s, Split::Test)),
        ),
        None => (corpus, None),
    };
    let initial = match resume {
        Some(path) => Some(load_checkpoint(path)?.0),
        None => None,
    };

    let (mut params, trace) = harness::train_from(
        &train_c,
        test_c.as_ref().filter(|c| !c.samples.is_empty()),
        &train_cfg,
        initial,
    )?;

    std::fs::create_dir_all(out).map_err(|e| io_data(out, e))?;
    let ckpt_path = out.join("checkpoint.ckpt");
    save_checkpoint(
        &mut params,
        &CheckpointMeta {
            epochs_trained: train_cfg.epochs as u32,
            seed: train_cfg.seed,
            config_hash: config_hash(&cfg),
        },
        &ckpt_path,
    )?;
    let trace_path = out.join("trace.csv");
    std::fs::write(&trace_path, harness::trace_csv(&trace)).map_err(|e| io_data(&trace_path, e))?;

    let mut manifest = RunManifest::new("train", train_cfg.seed);
    snapshot_config(&mut manifest, &cfg);
    manifest.set_config("model", kind.as_str());
    manifest.add_input(corpus_dir);
    manifest
        .add_output(&ckpt_path)
        .and_then(|_| manifest.add_output(&trace_path))
        .map_err(|e| io_data(out, e))?;
    manifest
        .write(&manifest_path(out))
        .map_err(|e| io_data(out, e))?;

    if let Some(last) = trace.iter().rev().find(|r| r.split == "test") {
        println!(
            "train {}: final test accuracy {:.3}, macro-F1 {:.3}",
            kind.as_str(),
            last.accuracy,
            last.macro_f1
        );
    } else if let Some(last) = trace.last() {
        println!(
            "train {}: final train accuracy {:.3}",
            kind.as_str(),
            last.accuracy
        );
    }
    Ok(())
}

fn parse_attack(
    attack: Option<&str>,
    factor: Option<usize>,
    side: Option<usize>,
    seed: u64,
) -> Result<Option<AttackConfig>, CliError> {
    let Some(mode) = attack else {
        if factor.is_some() || side.is_some() {
            return Err(CliError::Usage(
                "--factor/--side require --attack zeros|noise".into(),
            ));
        }
        return Ok(None);
    };
    let mode = match mode {
        "zeros" => EnlargeMode::Zeros,
        "noise" => EnlargeMode::UniformNoise,
        other => {
            return Err(CliError::Usage(format!(
                "unknown attack {other:?} (expected zeros or noise)"
            )))
        }
    };
    let target = match (factor, side) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("--factor and --side are exclusive".into()))
        }
        (Some(f), None) => {
            if f < 1 {
                return Err(CliError::Usage("--factor must be at least 1".into()));
            }
            EnlargeTarget::Factor(f)
        }
        (None, Some(s)) => {
            if s < 1 {
                return Err(CliError::Usage("--side must be at least 1".into()));
            }
            EnlargeTarget::Side(s)
        }
        // Desk-scale default: 20x the original pixel count.
        (None, None) => EnlargeTarget::Factor(20),
    };
    Ok(Some(AttackConfig { mode, target, seed }))
}

pub const EVAL_CSV_HEADER: &str =
    "model_kind,attack,samples,accuracy,macro_f1,mean_loss,auroc_macro";

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    checkpoint: &Path,
    corpus_dir: &Path,
    out: &Path,
    split: &str,
    attack: Option<&str>,
    factor: Option<usize>,
    side: Option<usize>,
    attack_seed: u64,
    attention_csv: bool,
    parallel: bool,
) -> Result<(), CliError> {
    let (model, _meta) = load_checkpoint(checkpoint)?;
    if attention_csv && model.kind() == ModelKind::Baseline {
        return Err(CliError::Usage(
            "--attention-csv requires a MIL checkpoint".into(),
        ));
    }
    let corpus = load_split(corpus_dir, split)?;
    let attack_cfg = parse_attack(attack, factor, side, attack_seed)?;
    let eval_cfg = EvalConfig {
        parallel,
        ..EvalConfig::default()
    };

    let report = evaluate(&model, &corpus, attack_cfg.as_ref(), &eval_cfg)?;

    std::fs::create_dir_all(out).map_err(|e| io_data(out, e))?;
    let attack_name = attack_cfg
        .as_ref()
        .map(|a| a.mode.as_str())
        .unwrap_or("none");
    let report_path = out.join("report.csv");
    std::fs::write(
        &report_path,
        format!(
            "{EVAL_CSV_HEADER}\n{},{},{},{},{},{},{}\n",
            model.kind().as_str(),
            attack_name,
            report.samples(),
            report.accuracy,
            report.macro_f1,
            report.mean_loss,
            report.auroc_macro
        ),
    )
    .map_err(|e| io_data(&report_path, e))?;
    let confusion_path = out.join("confusion.csv");
    std::fs::write(&confusion_path, report.confusion_csv())
        .map_err(|e| io_data(&confusion_path, e))?;

    // Per-bag wall-clock timings are inherently nondeterministic, so they
    // live in their own file, listed in the manifest without a hash.
    let timings_path = out.join("timings.csv");
    let mut timings = String::from("bag,network_ms,end_to_end_ms\n");
    for (i, l) in report.latencies.iter().enumerate() {
        let _ = writeln!(timings, "{i},{},{}", l.network_ms, l.end_to_end_ms);
    }
    std::fs::write(&timings_path, timings).map_err(|e| io_data(&timings_path, e))?;

    let mut manifest = RunManifest::new("eval", attack_seed);
    manifest.set_config("split", split);
    manifest.set_config("attack", attack_name);
    if let Some(a) = &attack_cfg {
        match a.target {
            EnlargeTarget::Factor(f) => manifest.set_config("factor", f),
            EnlargeTarget::Side(s) => manifest.set_config("side", s),
        }
    }
    manifest.set_config("model", model.kind().as_str());
    manifest.add_input(checkpoint);
    manifest.add_input(corpus_dir);
    manifest
        .add_output(&report_path)
        .and_then(|_| manifest.add_output(&confusion_path))
        .map_err(|e| io_data(out, e))?;
    manifest.add_unhashed_output(&timings_path);

    if attention_csv {
        if let ModelParams::Mil(mil) = &model {
            let attn_path = out.join("attention.csv");
            std::fs::write(&attn_path, harness::attention_dump(mil, &corpus, &eval_cfg)?)
                .map_err(|e| io_data(&attn_path, e))?;
            manifest.add_output(&attn_path).map_err(|e| io_data(out, e))?;
        }
    }
    manifest
        .write(&manifest_path(out))
        .map_err(|e| io_data(out, e))?;

    println!(
        "eval {} ({}): accuracy {:.3}, macro-F1 {:.3}, AUROC {:.3}, loss {:.3}",
        model.kind().as_str(),
        attack_name,
        report.accuracy,
        report.macro_f1,
        report.auroc_macro,
        report.mean_loss
    );
    print_confusion_percent(&report);
    Ok(())
}

fn print_confusion_percent(report: &crate::metrics::EvalReport) {
    let c = report.num_classes;
    let pct = report.confusion_column_percent();
    println!("confusion (column %, true rows x predicted columns):");
    for i in 0..c {
        let row: Vec<String> = (0..c).map(|j| format!("{:5.1}", pct[i * c + j])).collect();
        println!("  {}", row.join(" "));
    }
}

pub fn cmd_attack(
    corpus_dir: &Path,
    out: &Path,
    mode: &str,
    factor: Option<usize>,
    side: Option<usize>,
    seed: u64,
) -> Result<(), CliError> {
    let attack = parse_attack(Some(mode), factor, side, seed)?.expect("mode given");
    let (corpus, _) = load_corpus_dir(corpus_dir)?;
    std::fs::create_dir_all(out).map_err(|e| io_data(out, e))?;

    let mut manifest = RunManifest::new("attack", seed);
    manifest.set_config("mode", attack.mode.as_str());
    match attack.target {
        EnlargeTarget::Factor(f) => manifest.set_config("factor", f),
        EnlargeTarget::Side(s) => manifest.set_config("side", s),
    }
    manifest.add_input(corpus_dir);
    for (i, sample) in corpus.samples.iter().enumerate() {
        let spec: EnlargeSpec = attack.spec_for(sample.bytes.len(), i);
        let enlarged = enlarge(&sample.bytes, &spec)
            .map_err(|e| CliError::Data(format!("{}: {e}", sample.id)))?;
        let path = out.join(format!("{}.bin", sample.id));
        std::fs::write(&path, &enlarged).map_err(|e| io_data(&path, e))?;
        manifest.add_output(&path).map_err(|e| io_data(&path, e))?;
    }
    manifest
        .write(&manifest_path(out))
        .map_err(|e| io_data(out, e))?;
    println!(
        "attack {}: {} enlarged samples -> {}",
        attack.mode.as_str(),
        corpus.samples.len(),
        out.display()
    );
    Ok(())
}

fn read_sample_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    if path.extension().is_some_and(|e| e == "bytes") {
        let text = std::fs::read_to_string(path).map_err(|e| io_data(path, e))?;
        Ok(parse_hex_dump(&text)?)
    } else {
        std::fs::read(path).map_err(|e| io_data(path, e))
    }
}

pub fn cmd_audit(
    sample: &Path,
    out: &Path,
    sides: Option<&str>,
    resize_to: usize,
) -> Result<(), CliError> {
    if resize_to < 1 {
        return Err(CliError::Usage("--resize-to must be at least 1".into()));
    }
    let bytes = read_sample_bytes(sample)?;
    let square = to_square_image(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
    let original_side = square.width;

    let sides: Vec<usize> = match sides {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad side {s:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => vec![
            original_side,
            original_side * 2,
            original_side * 4,
            original_side * 8,
        ],
    };

    // Panel: original square plot vs the downsampled plot restored to the
    // original size.
    let down = resize_bilinear(&square, resize_to, resize_to);
    let restored = resize_bilinear(&down, original_side, original_side);
    let panel = LossPanel::compute(&square, &restored).map_err(|e| CliError::Data(e.to_string()))?;
    let difference = ByteImage::new(
        original_side,
        original_side,
        square
            .pixels
            .iter()
            .zip(&restored.pixels)
            .map(|(&a, &b)| a.abs_diff(b))
            .collect(),
    );

    let rows = mi_padding_sweep(&bytes, &sides, resize_to)
        .map_err(|e| CliError::Data(e.to_string()))?;

    std::fs::create_dir_all(out).map_err(|e| io_data(out, e))?;
    let panel_path = out.join("panel.csv");
    std::fs::write(&panel_path, panel.to_csv()).map_err(|e| io_data(&panel_path, e))?;
    let sweep_path = out.join("sweep.csv");
    std::fs::write(&sweep_path, sweep_csv(&rows)).map_err(|e| io_data(&sweep_path, e))?;
    let diff_path = out.join("difference.pgm");
    difference
        .write_pgm(&diff_path)
        .map_err(|e| io_data(&diff_path, e))?;

    let mut manifest = RunManifest::new("audit", 0);
    manifest.set_config("resize_to", resize_to);
    manifest.set_config(
        "sides",
        sides
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.add_input(sample);
    manifest
        .add_output(&panel_path)
        .and_then(|_| manifest.add_output(&sweep_path))
        .and_then(|_| manifest.add_output(&diff_path))
        .map_err(|e| io_data(out, e))?;
    manifest
        .write(&manifest_path(out))
        .map_err(|e| io_data(out, e))?;

    println!(
        "audit {}: side {}, mse {:.1}, ssim {:.3}, snr {:.2} dB, MI {:.3} bits ({:.1}% of original)",
        sample.display(),
        original_side,
        panel.mse,
        panel.ssim,
        panel.snr_db,
        panel.mutual_information_bits,
        panel.mi_percent
    );
    Ok(())
}

struct RunRow {
    model: String,
    attack: String,
    samples: String,
    accuracy: String,
    macro_f1: String,
    mean_loss: String,
    auroc: String,
    mean_network_ms: Option<f64>,
    mean_e2e_ms: Option<f64>,
}

fn read_run_dir(dir: &Path) -> Result<RunRow, CliError> {
    let report_path = dir.join("report.csv");
    let text = std::fs::read_to_string(&report_path).map_err(|e| io_data(&report_path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != EVAL_CSV_HEADER {
        return Err(CliError::Data(format!(
            "{}: unexpected report header {header:?}",
            report_path.display()
        )));
    }
    let fields: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: missing data row", report_path.display())))?
        .split(',')
        .collect();
    if fields.len() != 7 {
        return Err(CliError::Data(format!(
            "{}: expected 7 columns",
            report_path.display()
        )));
    }

    let timings = std::fs::read_to_string(dir.join("timings.csv")).ok();
    let (mut net_sum, mut e2e_sum, mut n) = (0.0f64, 0.0f64, 0usize);
    if let Some(t) = timings {
        for line in t.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 3 {
                if let (Ok(a), Ok(b)) = (cols[1].parse::<f64>(), cols[2].parse::<f64>()) {
                    net_sum += a;
                    e2e_sum += b;
                    n += 1;
                }
            }
        }
    }
    Ok(RunRow {
        model: fields[0].to_string(),
        attack: fields[1].to_string(),
        samples: fields[2].to_string(),
        accuracy: fields[3].to_string(),
        macro_f1: fields[4].to_string(),
        mean_loss: fields[5].to_string(),
        auroc: fields[6].to_string(),
        mean_network_ms: (n > 0).then(|| net_sum / n as f64),
        mean_e2e_ms: (n > 0).then(|| e2e_sum / n as f64),
    })
}

pub const REPORT_CSV_HEADER: &str =
    "attack,model,samples,accuracy,macro_f1,mean_loss,auroc_macro,mean_network_ms,mean_e2e_ms,status";

/// Merge eval runs into the fixed {none, zeros, noise} x {baseline,
/// mil_attention, mil_gated} grid. Missing combinations are marked absent.
pub fn cmd_report(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut runs: Vec<RunRow> = Vec::new();
    for dir in run_dirs {
        runs.push(read_run_dir(dir)?);
    }

    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<7} {:<14} {:>8} {:>9} {:>9} {:>10} {:>7} {:>12} {:>10}",
        "attack", "model", "samples", "accuracy", "macro_f1", "mean_loss", "auroc", "network_ms", "e2e_ms"
    );
    for attack in ["none", "zeros", "noise"] {
        for model in ["baseline", "mil_attention", "mil_gated"] {
            let found = runs
                .iter()
                .find(|r| r.attack == attack && r.model == model);
            match found {
                Some(r) => {
                    let fmt_ms =
                        |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        csv,
                        "{attack},{model},{},{},{},{},{},{},{},ok",
                        r.samples,
                        r.accuracy,
                        r.macro_f1,
                        r.mean_loss,
                        r.auroc,
                        fmt_ms(r.mean_network_ms),
                        fmt_ms(r.mean_e2e_ms)
                    );
                    let acc: f64 = r.accuracy.parse().unwrap_or(f64::NAN);
                    let f1: f64 = r.macro_f1.parse().unwrap_or(f64::NAN);
                    let loss: f64 = r.mean_loss.parse().unwrap_or(f64::NAN);
                    let auroc: f64 = r.auroc.parse().unwrap_or(f64::NAN);
                    let _ = writeln!(
                        table,
                        "{:<7} {:<14} {:>8} {:>9.3} {:>9.3} {:>10.3} {:>7.3} {:>12} {:>10}",
                        attack,
                        model,
                        r.samples,
                        acc,
                        f1,
                        loss,
                        auroc,
                        fmt_ms(r.mean_network_ms),
                        fmt_ms(r.mean_e2e_ms)
                    );
                }
                None => {
                    let _ = writeln!(csv, "{attack},{model},,,,,,,,absent");
                    let _ = writeln!(
                        table,
                        "{:<7} {:<14} {:>8}",
                        attack, model, "absent"
                    );
                }
            }
        }
    }
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, csv).map_err(|e| io_data(path, e))?;
    }
    Ok(())
}
