//! Sample ingest and desk-scale corpus synthesis.
//!
//! Real samples arrive as hex dumps (`<id>.bytes` plus a label CSV); the
//! synthetic generator produces labelled families with distinct byte-level
//! motifs so the classification experiments are learnable without shipping
//! malware.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed byte token {token:?}")]
    MalformedToken { line: usize, token: String },
    #[error("sample contains no bytes after \"??\" removal")]
    EmptySample,
    #[error("class {class} has {count} samples, need at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("sample {0} has no family label")]
    UnlabeledSample(String),
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadFile { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One sample: raw bytes plus an optional family label.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub id: String,
    pub bytes: Vec<u8>,
    pub family: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub samples: Vec<RawSample>,
    pub class_names: Vec<String>,
}

impl Corpus {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for s in &self.samples {
            if let Some(f) = s.family {
                counts[f] += 1;
            }
        }
        counts
    }
}

/// Which side of the split a sample landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Parse a hex dump: each non-empty line is an address token (discarded)
/// followed by byte tokens, each two hex digits or "??" (dropped).
pub fn parse_hex_dump(text: &str) -> Result<Vec<u8>, CorpusError> {
    let mut bytes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        let Some(_address) = tokens.next() else {
            continue;
        };
        for token in tokens {
            if token == "??" {
                continue;
            }
            if token.len() == 2 && token.bytes().all(|b| b.is_ascii_hexdigit()) {
                bytes.push(u8::from_str_radix(token, 16).expect("validated hex"));
            } else {
                return Err(CorpusError::MalformedToken {
                    line: lineno + 1,
                    token: token.to_string(),
                });
            }
        }
    }
    if bytes.is_empty() {
        return Err(CorpusError::EmptySample);
    }
    Ok(bytes)
}

/// Render bytes in the dump format `parse_hex_dump` reads: an 8-digit hex
/// offset column, then 16 byte tokens per line.
pub fn render_hex_dump(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 3 + bytes.len() / 16 * 10 + 16);
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let _ = write!(out, "{:08X}", i * 16);
        for b in chunk {
            let _ = write!(out, " {b:02X}");
        }
        out.push('\n');
    }
    out
}

/// Deterministic stratified split: each class contributes
/// round(test_fraction * class_count) test samples.
pub fn stratified_split(
    corpus: &Corpus,
    spec: &SplitSpec,
) -> Result<(Corpus, Corpus), CorpusError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(CorpusError::InvalidConfig(format!(
            "test_fraction must be in (0,1), got {}",
            spec.test_fraction
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.num_classes()];
    for (i, s) in corpus.samples.iter().enumerate() {
        match s.family {
            Some(f) => by_class[f].push(i),
            None => return Err(CorpusError::UnlabeledSample(s.id.clone())),
        }
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(CorpusError::ClassTooSmall {
                class,
                count: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_test = vec![false; corpus.samples.len()];
    for members in &mut by_class {
        // Fisher-Yates inside the class, then the prefix goes to test.
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        let take = (spec.test_fraction * members.len() as f64).round() as usize;
        for &idx in members.iter().take(take) {
            is_test[idx] = true;
        }
    }

    let pick = |test: bool| Corpus {
        samples: corpus
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| is_test[*i] == test)
            .map(|(_, s)| s.clone())
            .collect(),
        class_names: corpus.class_names.clone(),
    };
    Ok((pick(false), pick(true)))
}

/// Split assignment per sample, aligned with `corpus.samples`.
pub fn split_assignments(corpus: &Corpus, train: &Corpus) -> Vec<Split> {
    let train_ids: std::collections::HashSet<&str> =
        train.samples.iter().map(|s| s.id.as_str()).collect();
    corpus
        .samples
        .iter()
        .map(|s| {
            if train_ids.contains(s.id.as_str()) {
                Split::Train
            } else {
                Split::Test
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub families: usize,
    /// Inclusive range of sample counts per family.
    pub samples_per_family: (usize, usize),
    /// Inclusive range of sample sizes in bytes.
    pub size_range: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            families: 5,
            samples_per_family: (100, 100),
            size_range: (100 * 1024, 400 * 1024),
        }
    }
}

const FAMILY_NAMES: &[&str] = &[
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
    "kilo", "lima",
];

struct FamilyMotif {
    tile: [u8; 16],
    section_mean: u8,
}

/// Procedurally generate a labelled corpus. Every family gets a distinct
/// 16-byte tile (repeated with 5% uniform byte noise) interleaved with 1-4
/// sections drawn around a family-specific mean byte value, so families are
/// visually and statistically separable.
pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus, CorpusError> {
    if config.families < 2 {
        return Err(CorpusError::InvalidConfig(format!(
            "need at least 2 families, got {}",
            config.families
        )));
    }
    let (c_min, c_max) = config.samples_per_family;
    let (s_min, s_max) = config.size_range;
    if c_min == 0 || c_min > c_max {
        return Err(CorpusError::InvalidConfig(format!(
            "bad samples_per_family range ({c_min}, {c_max})"
        )));
    }
    if s_min == 0 || s_min > s_max {
        return Err(CorpusError::InvalidConfig(format!(
            "bad size_range ({s_min}, {s_max})"
        )));
    }

    let class_names: Vec<String> = (0..config.families)
        .map(|f| {
            FAMILY_NAMES
                .get(f)
                .map(|n| n.to_string())
                .unwrap_or_else(|| format!("family{f}"))
        })
        .collect();

    let mut family_rng = ChaCha8Rng::seed_from_u64(seed);
    // Tile brightness and section brightness are both spread across the byte
    // range, on independently ordered axes, so families stay separable even
    // after heavy downsampling mixes the fine texture away.
    let spread = 175 / (config.families - 1).max(1);
    let mut section_order: Vec<usize> = (0..config.families).collect();
    for i in (1..section_order.len()).rev() {
        section_order.swap(i, family_rng.gen_range(0..=i));
    }
    let motifs: Vec<FamilyMotif> = (0..config.families)
        .map(|f| {
            let tile_base = (40 + f * spread) as i32;
            let mut tile = [0u8; 16];
            for b in tile.iter_mut() {
                *b = (tile_base + family_rng.gen_range(-50..=50)).clamp(0, 255) as u8;
            }
            let section_base = (30 + section_order[f] * spread) as i32;
            let section_mean = (section_base + family_rng.gen_range(-8..=8)).clamp(0, 255) as u8;
            FamilyMotif { tile, section_mean }
        })
        .collect();
    let counts: Vec<usize> = (0..config.families)
        .map(|_| family_rng.gen_range(c_min..=c_max))
        .collect();

    let plan: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(f, &n)| (0..n).map(move |i| (f, i)))
        .collect();
    let samples: Vec<RawSample> = plan
        .par_iter()
        .map(|&(family, index)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((family as u64) << 32) | (index as u64 + 1));
            let size = rng.gen_range(s_min..=s_max);
            let bytes = synth_sample(&motifs[family], size, &mut rng);
            RawSample {
                id: format!("{}_{index:04}", &class_names[family]),
                bytes,
                family: Some(family),
            }
        })
        .collect();

    Ok(Corpus {
        samples,
        class_names,
    })
}

fn synth_sample(motif: &FamilyMotif, size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bytes: Vec<u8> = (0..size).map(|i| motif.tile[i % 16]).collect();
    for b in bytes.iter_mut() {
        if rng.gen_range(0..100) < 5 {
            *b = rng.gen();
        }
    }
    let sections = rng.gen_range(1..=4usize);
    for _ in 0..sections {
        let len = rng.gen_range(size / 20..=size / 6).max(1);
        let start = rng.gen_range(0..=size.saturating_sub(len));
        for b in &mut bytes[start..start + len] {
            *b = (motif.section_mean as i32 + rng.gen_range(-15..=15)).clamp(0, 255) as u8;
        }
    }
    // Every sample also carries one high-entropy region, like the packed or
    // encrypted sections of real binaries. These carry no family signal.
    let len = rng.gen_range(size / 30..=size / 12).max(1);
    let start = rng.gen_range(0..=size.saturating_sub(len));
    for b in &mut bytes[start..start + len] {
        *b = rng.gen();
    }
    bytes
}

/// Write a corpus directory: one `<id>.bytes` hex dump per sample plus a
/// `labels.csv` of `id,family_name` rows.
pub fn write_corpus_dir(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut labels = String::from("id,family_name\n");
    for s in &corpus.samples {
        let family = s
            .family
            .ok_or_else(|| CorpusError::UnlabeledSample(s.id.clone()))?;
        let path = dir.join(format!("{}.bytes", s.id));
        std::fs::write(&path, render_hex_dump(&s.bytes)).map_err(|e| io_err(&path, e))?;
        let _ = writeln!(labels, "{},{}", s.id, corpus.class_names[family]);
    }
    let path = dir.join("labels.csv");
    std::fs::write(&path, labels).map_err(|e| io_err(&path, e))
}

/// Write the corpus manifest CSV: `id,family_index,size_bytes,split`.
pub fn write_manifest(
    corpus: &Corpus,
    splits: &[Split],
    path: &Path,
) -> Result<(), CorpusError> {
    assert_eq!(corpus.samples.len(), splits.len());
    let mut out = String::from("id,family_index,size_bytes,split\n");
    for (s, split) in corpus.samples.iter().zip(splits) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.id,
            s.family.map(|f| f as i64).unwrap_or(-1),
            s.bytes.len(),
            split.as_str()
        );
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Load a corpus directory written by `write_corpus_dir` (or assembled by
/// hand in the same layout). Files that are empty after "??" removal are
/// dropped, mirroring how such dataset files are fully removed; any other
/// parse failure is an error. Returns the corpus and, when `manifest.csv`
/// is present, the per-sample split assignments.
pub fn load_corpus_dir(dir: &Path) -> Result<(Corpus, Option<Vec<Split>>), CorpusError> {
    let labels_path = dir.join("labels.csv");
    let labels_text =
        std::fs::read_to_string(&labels_path).map_err(|e| io_err(&labels_path, e))?;
    let mut class_names: Vec<String> = Vec::new();
    let mut entries: Vec<(String, usize)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in labels_text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, family_name) = line.split_once(',').ok_or_else(|| CorpusError::BadFile {
            path: labels_path.display().to_string(),
            message: format!("line {}: expected id,family_name", lineno + 1),
        })?;
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let family_name = family_name.trim();
        let family = match class_names.iter().position(|n| n == family_name) {
            Some(f) => f,
            None => {
                class_names.push(family_name.to_string());
                class_names.len() - 1
            }
        };
        entries.push((id, family));
    }

    let parsed: Vec<Result<Option<RawSample>, CorpusError>> = entries
        .par_iter()
        .map(|(id, family)| {
            let path = dir.join(format!("{id}.bytes"));
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            match parse_hex_dump(&text) {
                Ok(bytes) => Ok(Some(RawSample {
                    id: id.clone(),
                    bytes,
                    family: Some(*family),
                })),
                Err(CorpusError::EmptySample) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(entries.len());
    for r in parsed {
        if let Some(s) = r? {
            samples.push(s);
        }
    }

    let corpus = Corpus {
        samples,
        class_names,
    };

    let manifest_path = dir.join("manifest.csv");
    let splits = if manifest_path.exists() {
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let mut by_id: HashMap<String, Split> = HashMap::new();
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(CorpusError::BadFile {
                    path: manifest_path.display().to_string(),
                    message: "expected id,family_index,size_bytes,split".into(),
                });
            }
            let split = match fields[3].trim() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(CorpusError::BadFile {
                        path: manifest_path.display().to_string(),
                        message: format!("unknown split {other:?}"),
                    })
                }
            };
            by_id.insert(fields[0].trim().to_string(), split);
        }
        let mut splits = Vec::with_capacity(corpus.samples.len());
        for s in &corpus.samples {
            let split = by_id.get(&s.id).ok_or_else(|| CorpusError::BadFile {
                path: manifest_path.display().to_string(),
                message: format!("sample {} missing from manifest", s.id),
            })?;
            splits.push(*split);
        }
        Some(splits)
    } else {
        None
    };

    Ok((corpus, splits))
}

/// Restrict a corpus to one side of a split.
pub fn filter_split(corpus: &Corpus, splits: &[Split], keep: Split) -> Corpus {
    Corpus {
        samples: corpus
            .samples
            .iter()
            .zip(splits)
            .filter(|(_, s)| **s == keep)
            .map(|(s, _)| s.clone())
            .collect(),
        class_names: corpus.class_names.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_basic_hex_line() {
        assert_eq!(
            parse_hex_dump("00401000 4D 5A 90").unwrap(),
            vec![0x4D, 0x5A, 0x90]
        );
    }

    #[test]
    fn parse_drops_unknown_byte_markers() {
        assert_eq!(parse_hex_dump("00401000 4D ?? 90").unwrap(), vec![0x4D, 0x90]);
    }

    #[test]
    fn parse_rejects_fully_unknown_sample() {
        assert!(matches!(
            parse_hex_dump("00401000 ?? ??"),
            Err(CorpusError::EmptySample)
        ));
    }

    #[test]
    fn parse_rejects_malformed_tokens() {
        for bad in ["00401000 4D 5", "00401000 XY", "00401000 4D5A", "0040 ?"] {
            assert!(
                matches!(parse_hex_dump(bad), Err(CorpusError::MalformedToken { .. })),
                "{bad:?} should be malformed"
            );
        }
    }

    #[test]
    fn parse_handles_multiple_lines_and_blanks() {
        let text = "00000000 01 02\n\n00000010 03\n00000020\n";
        assert_eq!(parse_hex_dump(text).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn render_round_trips_through_parse() {
        let bytes: Vec<u8> = (0..1000u32).map(|i| (i * 97 % 256) as u8).collect();
        assert_eq!(parse_hex_dump(&render_hex_dump(&bytes)).unwrap(), bytes);
    }

    fn toy_corpus(counts: &[usize]) -> Corpus {
        let mut samples = Vec::new();
        for (f, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(RawSample {
                    id: format!("f{f}_{i}"),
                    bytes: vec![f as u8; 4],
                    family: Some(f),
                });
            }
        }
        Corpus {
            samples,
            class_names: (0..counts.len()).map(|f| format!("c{f}")).collect(),
        }
    }

    #[test]
    fn split_balanced_two_class() {
        let corpus = toy_corpus(&[50, 50]);
        let spec = SplitSpec {
            test_fraction: 0.1,
            seed: 7,
        };
        let (train, test) = stratified_split(&corpus, &spec).unwrap();
        assert_eq!(train.samples.len(), 90);
        assert_eq!(test.samples.len(), 10);
        assert_eq!(test.class_counts(), vec![5, 5]);
    }

    #[test]
    fn split_is_deterministic() {
        let corpus = toy_corpus(&[30, 20, 25]);
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 42,
        };
        let (tr1, te1) = stratified_split(&corpus, &spec).unwrap();
        let (tr2, te2) = stratified_split(&corpus, &spec).unwrap();
        let ids = |c: &Corpus| c.samples.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&tr1), ids(&tr2));
        assert_eq!(ids(&te1), ids(&te2));
    }

    #[test]
    fn split_rounding_on_imbalanced_classes() {
        // 43 and 2942 at 10% round to 4 and 294 test samples.
        let corpus = toy_corpus(&[43, 2942]);
        let spec = SplitSpec {
            test_fraction: 0.1,
            seed: 1,
        };
        let (train, test) = stratified_split(&corpus, &spec).unwrap();
        assert_eq!(test.class_counts(), vec![4, 294]);
        assert_eq!(train.samples.len() + test.samples.len(), 2985);
    }

    #[test]
    fn split_partitions_the_corpus() {
        let corpus = toy_corpus(&[9, 14]);
        let spec = SplitSpec {
            test_fraction: 0.3,
            seed: 5,
        };
        let (train, test) = stratified_split(&corpus, &spec).unwrap();
        let mut all: Vec<String> = train
            .samples
            .iter()
            .chain(&test.samples)
            .map(|s| s.id.clone())
            .collect();
        all.sort();
        let mut want: Vec<String> = corpus.samples.iter().map(|s| s.id.clone()).collect();
        want.sort();
        assert_eq!(all, want);
    }

    #[test]
    fn split_rejects_tiny_classes() {
        let corpus = toy_corpus(&[5, 1]);
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 0,
        };
        assert!(matches!(
            stratified_split(&corpus, &spec),
            Err(CorpusError::ClassTooSmall { class: 1, count: 1 })
        ));
    }

    fn small_synth() -> SynthConfig {
        SynthConfig {
            families: 5,
            samples_per_family: (20, 20),
            size_range: (8 * 1024, 32 * 1024),
        }
    }

    #[test]
    fn synth_counts_match_config() {
        let corpus = synth_corpus(
            &SynthConfig {
                families: 5,
                samples_per_family: (100, 100),
                size_range: (4096, 8192),
            },
            1,
        )
        .unwrap();
        assert_eq!(corpus.samples.len(), 500);
        assert_eq!(corpus.num_classes(), 5);
        assert_eq!(corpus.class_counts(), vec![100; 5]);
    }

    #[test]
    fn synth_is_deterministic() {
        let c1 = synth_corpus(&small_synth(), 9).unwrap();
        let c2 = synth_corpus(&small_synth(), 9).unwrap();
        assert_eq!(c1.samples.len(), c2.samples.len());
        for (a, b) in c1.samples.iter().zip(&c2.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.bytes, b.bytes);
        }
    }

    #[test]
    fn synth_rejects_bad_configs() {
        for cfg in [
            SynthConfig {
                families: 1,
                ..small_synth()
            },
            SynthConfig {
                samples_per_family: (5, 2),
                ..small_synth()
            },
            SynthConfig {
                size_range: (0, 10),
                ..small_synth()
            },
        ] {
            assert!(matches!(
                synth_corpus(&cfg, 0),
                Err(CorpusError::InvalidConfig(_))
            ));
        }
    }

    fn normalized_histogram(bytes: &[u8]) -> Vec<f64> {
        let mut h = vec![0f64; 256];
        for &b in bytes {
            h[b as usize] += 1.0;
        }
        let n = bytes.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    #[test]
    fn synth_families_have_distinct_byte_histograms() {
        let corpus = synth_corpus(&small_synth(), 3).unwrap();
        let mut pooled: Vec<Vec<u8>> = vec![Vec::new(); 5];
        for s in &corpus.samples {
            pooled[s.family.unwrap()].extend_from_slice(&s.bytes);
        }
        for a in 0..5 {
            for b in (a + 1)..5 {
                let (ha, hb) = (
                    normalized_histogram(&pooled[a]),
                    normalized_histogram(&pooled[b]),
                );
                let n = pooled[a].len().min(pooled[b].len()) as f64;
                // Chi-squared on frequencies, scaled by sample count.
                let chi2: f64 = ha
                    .iter()
                    .zip(&hb)
                    .filter(|(x, y)| **x + **y > 0.0)
                    .map(|(x, y)| n * (x - y).powi(2) / (x + y))
                    .sum();
                assert!(chi2 > 1000.0, "families {a},{b} too similar: chi2 = {chi2}");
            }
        }
    }

    #[test]
    fn synth_families_are_nearest_centroid_separable() {
        let corpus = synth_corpus(&small_synth(), 11).unwrap();
        let spec = SplitSpec {
            test_fraction: 0.25,
            seed: 2,
        };
        let (train, test) = stratified_split(&corpus, &spec).unwrap();
        let c = train.num_classes();
        let mut centroids = vec![vec![0f64; 256]; c];
        let mut counts = vec![0usize; c];
        for s in &train.samples {
            let h = normalized_histogram(&s.bytes);
            let f = s.family.unwrap();
            for (cv, hv) in centroids[f].iter_mut().zip(&h) {
                *cv += hv;
            }
            counts[f] += 1;
        }
        for (cen, n) in centroids.iter_mut().zip(&counts) {
            cen.iter_mut().for_each(|v| *v /= *n as f64);
        }
        let mut correct = 0;
        for s in &test.samples {
            let h = normalized_histogram(&s.bytes);
            let pred = (0..c)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(&h).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = centroids[b].iter().zip(&h).map(|(x, y)| (x - y).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if pred == s.family.unwrap() {
                correct += 1;
            }
        }
        let acc = correct as f64 / test.samples.len() as f64;
        assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn corpus_dir_round_trip_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(
            &SynthConfig {
                families: 2,
                samples_per_family: (3, 3),
                size_range: (100, 300),
            },
            4,
        )
        .unwrap();
        let spec = SplitSpec {
            test_fraction: 0.34,
            seed: 0,
        };
        let (train, _test) = stratified_split(&corpus, &spec).unwrap();
        let splits = split_assignments(&corpus, &train);
        write_corpus_dir(&corpus, dir.path()).unwrap();
        write_manifest(&corpus, &splits, &dir.path().join("manifest.csv")).unwrap();

        let (loaded, loaded_splits) = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(loaded.samples.len(), corpus.samples.len());
        for (a, b) in loaded.samples.iter().zip(&corpus.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.bytes, b.bytes);
            assert_eq!(a.family, b.family);
        }
        assert_eq!(loaded_splits.unwrap(), splits);
    }

    #[test]
    fn loader_drops_fully_unknown_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.bytes"), "00000000 01 02\n").unwrap();
        std::fs::write(dir.path().join("b.bytes"), "00000000 ?? ??\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "id,family_name\na,x\nb,x\n").unwrap();
        let (corpus, _) = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(corpus.samples.len(), 1);
        assert_eq!(corpus.samples[0].id, "a");
    }
}
