//! Synthetic corpora with latent segment structure, plus deterministic
//! binary feature files and JSON manifests.
//!
//! Each utterance is a run of segments; every frame carries its segment's
//! vocabulary embedding plus Gaussian noise, and the last frame of each
//! segment sets a boundary bit. Utterance-level class labels shift the whole
//! utterance by a class embedding so they are recoverable from the mean;
//! frame-level labels are the per-frame vocabulary ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::training::GuidanceTargets;

pub const FEATURE_MAGIC: [u8; 4] = *b"OFAF";
pub const FEATURE_VERSION: u32 = 1;
pub const BOUNDARY_MARKER: u32 = 0x0B00_DA11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_utterances: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    pub min_segment: usize,
    pub max_segment: usize,
    pub vocab_size: usize,
    pub noise_sigma: f64,
    pub num_classes: usize,
    pub base_period_ms: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_utterances: 100,
            min_frames: 24,
            max_frames: 64,
            feature_dim: 8,
            min_segment: 2,
            max_segment: 8,
            vocab_size: 6,
            noise_sigma: 0.1,
            num_classes: 4,
            base_period_ms: 20.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_segment < 1 || self.max_segment < self.min_segment {
            return Err(Error::Config("segment length range is empty".into()));
        }
        if self.min_frames < 1 || self.max_frames < self.min_frames {
            return Err(Error::Config("frame count range is empty".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if self.vocab_size == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::Config("vocab, classes, and dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: Matrix,
    pub targets: GuidanceTargets,
    pub utt_label: Option<usize>,
    pub frame_labels: Option<Vec<usize>>,
    pub frame_period_ms: f64,
}

/// Fully determined by the spec's seed.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<Utterance>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let vocab: Vec<Vec<f64>> = (0..spec.vocab_size)
        .map(|_| (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let class_emb: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    let mut corpus = Vec::with_capacity(spec.num_utterances);
    for _ in 0..spec.num_utterances {
        let t_len = rng.gen_range(spec.min_frames..=spec.max_frames);
        let label = rng.gen_range(0..spec.num_classes);
        let mut boundaries = vec![0u8; t_len];
        let mut frame_labels = Vec::with_capacity(t_len);
        let mut data = Vec::with_capacity(t_len * spec.feature_dim);
        let mut pos = 0usize;
        while pos < t_len {
            let max_len = spec.max_segment.min(t_len - pos);
            let len = if max_len <= spec.min_segment {
                max_len
            } else {
                rng.gen_range(spec.min_segment..=max_len)
            };
            let v = rng.gen_range(0..spec.vocab_size);
            for _ in 0..len {
                for c in 0..spec.feature_dim {
                    let noise = spec.noise_sigma * normal.sample(&mut rng);
                    data.push(vocab[v][c] + class_emb[label][c] + noise);
                }
                frame_labels.push(v);
            }
            pos += len;
            boundaries[pos - 1] = 1;
        }
        corpus.push(Utterance {
            features: Matrix::from_vec(t_len, spec.feature_dim, data)?,
            targets: GuidanceTargets::new(boundaries)?,
            utt_label: Some(label),
            frame_labels: Some(frame_labels),
            frame_period_ms: spec.base_period_ms,
        });
    }
    Ok(corpus)
}

// ── Feature files ───────────────────────────────────────────────────────

/// Write one utterance: f32 payload on disk, little-endian throughout.
pub fn write_features(
    path: &Path,
    features: &Matrix,
    frame_period_ms: f64,
    targets: Option<&GuidanceTargets>,
) -> Result<()> {
    if let Some(t) = targets {
        if t.len() != features.rows() {
            return Err(Error::Length(format!(
                "boundary block length {} vs {} frames",
                t.len(),
                features.rows()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(features.rows() as u32).to_le_bytes())?;
    w.write_all(&(features.cols() as u32).to_le_bytes())?;
    w.write_all(&(frame_period_ms as f32).to_le_bytes())?;
    for v in features.data() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    if let Some(t) = targets {
        w.write_all(&BOUNDARY_MARKER.to_le_bytes())?;
        w.write_all(t.boundaries())?;
    }
    w.flush()?;
    Ok(())
}

/// Read one utterance back; the optional boundary block becomes guidance
/// targets.
pub fn read_features(path: &Path) -> Result<(Matrix, f64, Option<GuidanceTargets>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("feature magic".into()))?;
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic { expected: FEATURE_MAGIC, found: magic });
    }
    let version = read_u32(&mut r, "feature version")?;
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let rows = read_u32(&mut r, "frame count")? as usize;
    let cols = read_u32(&mut r, "feature dim")? as usize;
    let mut f32buf = [0u8; 4];
    r.read_exact(&mut f32buf)
        .map_err(|_| Error::Truncated("frame period".into()))?;
    let period = f32::from_le_bytes(f32buf) as f64;
    let mut data = vec![0.0f64; rows * cols];
    for v in &mut data {
        r.read_exact(&mut f32buf)
            .map_err(|_| Error::Truncated("feature payload".into()))?;
        *v = f32::from_le_bytes(f32buf) as f64;
    }
    let features = Matrix::from_vec(rows, cols, data)?;

    let mut marker = [0u8; 4];
    let targets = match r.read(&mut marker)? {
        0 => None,
        4 => {
            let m = u32::from_le_bytes(marker);
            if m != BOUNDARY_MARKER {
                return Err(Error::Truncated(format!("unknown trailing block {m:#x}")));
            }
            let mut bits = vec![0u8; rows];
            r.read_exact(&mut bits)
                .map_err(|_| Error::Truncated("boundary block".into()))?;
            Some(GuidanceTargets::new(bits)?)
        }
        _ => return Err(Error::Truncated("trailing block marker".into())),
    };
    Ok((features, period, targets))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Truncated(what.to_string()))?;
    Ok(u32::from_le_bytes(buf))
}

// ── Corpus directories ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Utterance,
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub kind: TaskKind,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub frames: usize,
    pub dim: usize,
    pub num_segments: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub utt_label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticSpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub task: Option<TaskInfo>,
    pub utterances: Vec<ManifestEntry>,
}

/// Write one feature file per utterance plus `manifest.json`.
pub fn write_corpus_dir(
    dir: &Path,
    corpus: &[Utterance],
    spec: &SyntheticSpec,
    task: Option<TaskInfo>,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for (i, utt) in corpus.iter().enumerate() {
        let file = format!("utt_{i:05}.ofaf");
        write_features(
            &dir.join(&file),
            &utt.features,
            utt.frame_period_ms,
            Some(&utt.targets),
        )?;
        entries.push(ManifestEntry {
            file,
            frames: utt.features.rows(),
            dim: utt.features.cols(),
            num_segments: utt.targets.num_segments(),
            utt_label: utt.utt_label,
            frame_labels: utt.frame_labels.clone(),
        });
    }
    let manifest = Manifest { spec: *spec, task, utterances: entries };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Load a directory written by [`write_corpus_dir`].
pub fn read_corpus_dir(dir: &Path) -> Result<(Vec<Utterance>, Manifest)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let mut corpus = Vec::with_capacity(manifest.utterances.len());
    for entry in &manifest.utterances {
        let (features, period, targets) = read_features(&dir.join(&entry.file))?;
        let targets = targets.ok_or_else(|| {
            Error::Config(format!("{} is missing its boundary block", entry.file))
        })?;
        if features.rows() != entry.frames || features.cols() != entry.dim {
            return Err(Error::Config(format!(
                "{} header disagrees with manifest",
                entry.file
            )));
        }
        corpus.push(Utterance {
            features,
            targets,
            utt_label: entry.utt_label,
            frame_labels: entry.frame_labels.clone(),
            frame_period_ms: period,
        });
    }
    Ok((corpus, manifest))
}

/// A labeled downstream task: 3/4 train, 1/4 held-out evaluation.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Vec<Utterance>,
    pub eval: Vec<Utterance>,
    pub kind: TaskKind,
    pub num_classes: usize,
}

impl TaskData {
    pub fn split(corpus: Vec<Utterance>, kind: TaskKind, num_classes: usize) -> Result<TaskData> {
        if corpus.len() < 4 {
            return Err(Error::Config("task corpus needs at least 4 utterances".into()));
        }
        let eval_from = corpus.len() - corpus.len() / 4;
        let mut train = corpus;
        let eval = train.split_off(eval_from);
        Ok(TaskData { train, eval, kind, num_classes })
    }
}

/// Load a task directory: the manifest must declare a task block.
pub fn load_task(dir: &Path) -> Result<TaskData> {
    let (corpus, manifest) = read_corpus_dir(dir)?;
    let info = manifest
        .task
        .ok_or_else(|| Error::Config("manifest declares no downstream task".into()))?;
    TaskData::split(corpus, info.kind, info.num_classes)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec { num_utterances: 5, ..Default::default() };
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_spec_still_emits_boundaries() {
        let spec = SyntheticSpec {
            num_utterances: 2,
            vocab_size: 1,
            noise_sigma: 0.0,
            num_classes: 1,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        for utt in &corpus {
            assert!(utt.targets.num_segments() >= 1);
            // Single vocab entry, no noise: all frames identical.
            let first = utt.features.row(0).to_vec();
            for r in 1..utt.features.rows() {
                assert_eq!(utt.features.row(r), &first[..]);
            }
        }
    }

    #[test]
    fn boundary_bits_match_segment_count() {
        let spec = SyntheticSpec { num_utterances: 20, ..Default::default() };
        for utt in generate_corpus(&spec).unwrap() {
            let ones = utt.targets.boundaries().iter().filter(|&&b| b == 1).count();
            assert_eq!(ones, utt.targets.num_segments());
            // Last frame always closes a segment.
            assert_eq!(*utt.targets.boundaries().last().unwrap(), 1);
            // Frame labels constant within each segment.
            let labels = utt.frame_labels.as_ref().unwrap();
            let mut start = 0;
            for (t, &b) in utt.targets.boundaries().iter().enumerate() {
                if b == 1 {
                    for i in start..=t {
                        assert_eq!(labels[i], labels[start]);
                    }
                    start = t + 1;
                }
            }
        }
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { num_utterances: 3, ..Default::default() };
        let corpus = generate_corpus(&spec).unwrap();
        for (i, utt) in corpus.iter().enumerate() {
            let path = dir.path().join(format!("u{i}.ofaf"));
            write_features(&path, &utt.features, utt.frame_period_ms, Some(&utt.targets))
                .unwrap();
            let (feats, period, targets) = read_features(&path).unwrap();
            assert_eq!(period as f32, utt.frame_period_ms as f32);
            assert_eq!(targets.unwrap(), utt.targets);
            // Disk is f32: compare after one round of casting.
            for (a, b) in feats.data().iter().zip(utt.features.data()) {
                assert_eq!(*a, *b as f32 as f64);
            }
            // A second write of the read-back data is byte-identical.
            let path2 = dir.path().join(format!("u{i}_again.ofaf"));
            let t2 = read_features(&path).unwrap().2;
            write_features(&path2, &feats, period, t2.as_ref()).unwrap();
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&path2).unwrap()
            );
        }
    }

    #[test]
    fn feature_file_without_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.ofaf");
        let m = Matrix::from_fn(4, 2, |r, c| (r + c) as f64);
        write_features(&path, &m, 20.0, None).unwrap();
        let (_, _, targets) = read_features(&path).unwrap();
        assert!(targets.is_none());
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ofaf");
        std::fs::write(&path, b"WRNG\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_features(&path), Err(Error::BadMagic { .. })));

        let mut bytes = FEATURE_MAGIC.to_vec();
        bytes.extend(7u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_features(&path), Err(Error::UnsupportedVersion(7))));

        let good = dir.path().join("good.ofaf");
        let m = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        write_features(&good, &m, 20.0, None).unwrap();
        let full = std::fs::read(&good).unwrap();
        std::fs::write(&path, &full[..full.len() - 2]).unwrap();
        assert!(matches!(read_features(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn corpus_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { num_utterances: 8, ..Default::default() };
        let corpus = generate_corpus(&spec).unwrap();
        let task = Some(TaskInfo { kind: TaskKind::Utterance, num_classes: spec.num_classes });
        let manifest = write_corpus_dir(dir.path(), &corpus, &spec, task).unwrap();
        assert_eq!(manifest.utterances.len(), 8);

        let (loaded, manifest2) = read_corpus_dir(dir.path()).unwrap();
        assert_eq!(manifest, manifest2);
        assert_eq!(loaded.len(), corpus.len());
        for (l, o) in loaded.iter().zip(&corpus) {
            assert_eq!(l.targets, o.targets);
            assert_eq!(l.utt_label, o.utt_label);
            assert_eq!(l.frame_labels, o.frame_labels);
        }

        let td = load_task(dir.path()).unwrap();
        assert_eq!(td.train.len() + td.eval.len(), 8);
        assert_eq!(td.eval.len(), 2);
        assert_eq!(td.kind, TaskKind::Utterance);
    }
}
