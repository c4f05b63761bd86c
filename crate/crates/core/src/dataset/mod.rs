//! Class-folder corpora, labeled samples, and seeded mini-batching.

mod manifest;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use manifest::{scan_corpus, ClassSpec, DatasetManifest, ManifestEntry, Split, BRISC_CLASSES};

use crate::numerics::Tensor;
use crate::pseudocolor::{GrayscaleImage, PreprocessError, Preprocessor, PseudoColorTensor};
use crate::tensorfile::{TensorFile, TensorFileError};

/// Default mini-batch size.
pub const DEFAULT_BATCH_SIZE: usize = 32;

pub const ARCHIVE_FILE: &str = "archive.pcvt";
pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("split directory {path} does not exist")]
    MissingSplit { path: String },
    #[error("class folder {class:?} missing from {path}")]
    MissingClass { class: String, path: String },
    #[error("unknown folders in {path}: {}", folders.join(", "))]
    UnknownFolders { folders: Vec<String>, path: String },
    #[error("empty dataset: {what}")]
    Empty { what: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    Preprocess { path: String, source: PreprocessError },
    #[error("archive: {0}")]
    Archive(#[from] TensorFileError),
}

/// A preprocessed tensor paired with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub tensor: PseudoColorTensor,
    pub label: usize,
    pub source_path: String,
}

/// Random-access collection of labeled samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> usize;

    fn source_path(&self, index: usize) -> String;

    fn load(&self, index: usize) -> Result<PseudoColorTensor, DatasetError>;

    fn image_size(&self) -> usize;

    fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// Decodes and preprocesses images on demand from a manifest.
pub struct ImageFolder {
    manifest: DatasetManifest,
    preprocessor: Preprocessor,
}

impl ImageFolder {
    pub fn new(manifest: DatasetManifest, preprocessor: Preprocessor) -> Self {
        Self { manifest, preprocessor }
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    /// Preprocesses every entry, failing on the first unreadable file.
    pub fn materialize(&self) -> Result<InMemory, DatasetError> {
        let samples = (0..self.len())
            .map(|i| {
                Ok(LabeledSample { tensor: self.load(i)?, label: self.label(i), source_path: self.source_path(i) })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        InMemory::new(samples)
    }
}

impl SampleSource for ImageFolder {
    fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    fn label(&self, index: usize) -> usize {
        self.manifest.entries[index].label
    }

    fn source_path(&self, index: usize) -> String {
        self.manifest.entries[index].path.display().to_string()
    }

    fn load(&self, index: usize) -> Result<PseudoColorTensor, DatasetError> {
        let path = &self.manifest.entries[index].path;
        let wrap = |source| DatasetError::Preprocess { path: path.display().to_string(), source };
        let img = GrayscaleImage::open(path).map_err(wrap)?;
        self.preprocessor.apply(&img).map_err(wrap)
    }

    fn image_size(&self) -> usize {
        self.preprocessor.size()
    }
}

/// Samples held fully in memory.
#[derive(Clone, Debug)]
pub struct InMemory {
    samples: Vec<LabeledSample>,
    size: usize,
}

impl InMemory {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self, DatasetError> {
        let size = samples
            .first()
            .map(|s| s.tensor.size())
            .ok_or_else(|| DatasetError::Empty { what: "no samples".into() })?;
        if let Some(bad) = samples.iter().find(|s| s.tensor.size() != size) {
            return Err(DatasetError::InvalidArgument(format!(
                "sample {} has size {} but {size} was expected",
                bad.source_path,
                bad.tensor.size()
            )));
        }
        Ok(Self { samples, size })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    /// Subset by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        Self::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

impl SampleSource for InMemory {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> usize {
        self.samples[index].label
    }

    fn source_path(&self, index: usize) -> String {
        self.samples[index].source_path.clone()
    }

    fn load(&self, index: usize) -> Result<PseudoColorTensor, DatasetError> {
        Ok(self.samples[index].tensor.clone())
    }

    fn image_size(&self) -> usize {
        self.size
    }
}

/// A mini-batch: images `B×3×S×S`, labels, and source indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Yields consecutive batches over a fixed permutation of a source.
pub struct BatchIterator<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a, S: SampleSource + ?Sized> BatchIterator<'a, S> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<S: SampleSource + ?Sized> Iterator for BatchIterator<'_, S> {
    type Item = Result<Batch, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(assemble(self.source, indices))
    }
}

fn assemble<S: SampleSource + ?Sized>(source: &S, indices: Vec<usize>) -> Result<Batch, DatasetError> {
    let size = source.image_size();
    let mut data = Vec::with_capacity(indices.len() * 3 * size * size);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in &indices {
        let sample = source.load(i)?;
        if sample.size() != size {
            return Err(DatasetError::InvalidArgument(format!(
                "{} has size {} but the dataset size is {size}",
                source.source_path(i),
                sample.size()
            )));
        }
        data.extend_from_slice(sample.tensor().data());
        labels.push(source.label(i));
    }
    let images = Tensor::new(vec![indices.len(), 3, size, size], data).expect("batch shape matches data");
    Ok(Batch { images, labels, indices })
}

/// Batches over `source`. With `shuffle`, the order is a permutation drawn
/// from `seed`; otherwise it is the source order. The last batch may be short.
pub fn batches<S: SampleSource + ?Sized>(
    source: &S,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<BatchIterator<'_, S>, DatasetError> {
    if batch_size == 0 {
        return Err(DatasetError::InvalidArgument("batch size must be at least 1".into()));
    }
    if source.is_empty() {
        return Err(DatasetError::Empty { what: "cannot batch an empty dataset".into() });
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIterator { source, order, batch_size, cursor: 0 })
}

/// Per-epoch shuffle seed derived from a run seed (SplitMix64 finalizer).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Serialize, Deserialize)]
struct ArchiveMeta {
    kind: String,
    split: String,
    class_names: Vec<String>,
    image_size: usize,
    labels: Vec<usize>,
    paths: Vec<String>,
}

fn sample_name(i: usize) -> String {
    format!("sample.{i:06}")
}

/// Writes `dir/archive.pcvt` (one tensor per sample) and `dir/manifest.tsv`.
pub fn write_archive(dir: &Path, manifest: &DatasetManifest, samples: &InMemory) -> Result<PathBuf, DatasetError> {
    let meta = ArchiveMeta {
        kind: "preprocessed-archive".into(),
        split: manifest.split.to_string(),
        class_names: manifest.class_names.clone(),
        image_size: samples.image_size(),
        labels: samples.labels(),
        paths: (0..samples.len()).map(|i| samples.source_path(i)).collect(),
    };
    let mut file = TensorFile::new(serde_json::to_value(meta).expect("archive metadata serializes"));
    for (i, s) in samples.samples().iter().enumerate() {
        file.push(sample_name(i), s.tensor.tensor())?;
    }
    std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io { path: dir.display().to_string(), source })?;
    let path = dir.join(ARCHIVE_FILE);
    file.save(&path)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(path)
}

/// Reads an archive written by [`write_archive`], returning its samples and class names.
pub fn read_archive(path: &Path) -> Result<(InMemory, Vec<String>), DatasetError> {
    let file = TensorFile::load(path)?;
    let meta: ArchiveMeta = serde_json::from_value(file.metadata.clone()).map_err(TensorFileError::Header)?;
    if meta.labels.len() != meta.paths.len() {
        return Err(DatasetError::InvalidArgument("archive labels and paths disagree in length".into()));
    }
    let mut samples = Vec::with_capacity(meta.labels.len());
    for (i, (&label, path)) in meta.labels.iter().zip(&meta.paths).enumerate() {
        if label >= meta.class_names.len() {
            return Err(DatasetError::InvalidArgument(format!("archive label {label} out of range")));
        }
        let tensor = file
            .tensor::<f32>(&sample_name(i))
            .ok_or_else(|| DatasetError::InvalidArgument(format!("archive lacks {}", sample_name(i))))??;
        let tensor = PseudoColorTensor::from_tensor(tensor)
            .ok_or_else(|| DatasetError::InvalidArgument(format!("archive sample {i} is not a 3×S×S tensor in [0, 1]")))?;
        samples.push(LabeledSample { tensor, label, source_path: path.clone() });
    }
    Ok((InMemory::new(samples)?, meta.class_names))
}
