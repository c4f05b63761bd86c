use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;

/// Four tumor classes in canonical (alphabetical) label order.
pub const BRISC_CLASSES: [&str; 4] = ["glioma", "meningioma", "no_tumor", "pituitary"];

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Validation),
            other => Err(DatasetError::Manifest { line: 0, reason: format!("unknown split {other:?}") }),
        }
    }
}

/// How class folders are matched against the corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassSpec {
    /// Exactly these folders must exist; labels follow their sorted order.
    Expected(Vec<String>),
    /// Every subdirectory is a class.
    Discover,
}

impl ClassSpec {
    pub fn brisc() -> Self {
        ClassSpec::Expected(BRISC_CLASSES.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

/// Ordered, labeled listing of one split of a class-folder corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let io = |source| DatasetError::Io { path: dir.display().to_string(), source };
    let mut paths = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?;
    paths.retain(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')));
    paths.sort();
    Ok(paths)
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Lists `root/<split>/<class>/*` with labels assigned by alphabetical
/// class-folder order. Entries are ordered lexicographically by path.
pub fn scan_corpus(root: &Path, split: Split, classes: &ClassSpec) -> Result<DatasetManifest, DatasetError> {
    let split_dir = root.join(split.dir_name());
    if !split_dir.is_dir() {
        return Err(DatasetError::MissingSplit { path: split_dir.display().to_string() });
    }
    let folders: Vec<String> = read_dir_sorted(&split_dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_owned))
        .collect();

    let class_names = match classes {
        ClassSpec::Discover => folders.clone(),
        ClassSpec::Expected(expected) => {
            let mut expected = expected.clone();
            expected.sort();
            if let Some(missing) = expected.iter().find(|c| !folders.contains(c)) {
                return Err(DatasetError::MissingClass {
                    class: missing.clone(),
                    path: split_dir.display().to_string(),
                });
            }
            let extra: Vec<String> = folders.iter().filter(|f| !expected.contains(f)).cloned().collect();
            if !extra.is_empty() {
                return Err(DatasetError::UnknownFolders { folders: extra, path: split_dir.display().to_string() });
            }
            expected
        }
    };
    if class_names.is_empty() {
        return Err(DatasetError::Empty { what: format!("no class folders in {}", split_dir.display()) });
    }

    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (label, class) in class_names.iter().enumerate() {
        let images: Vec<PathBuf> = read_dir_sorted(&split_dir.join(class))?.into_iter().filter(|p| is_image(p)).collect();
        if images.is_empty() {
            warnings.push(format!("class folder {class:?} in {} contains no images", split_dir.display()));
        }
        entries.extend(images.into_iter().map(|path| ManifestEntry { path, label }));
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetManifest { class_names, split, entries, seed: 0, warnings })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }

    /// Moves a seeded random `fraction` of the entries into a validation
    /// manifest. Both halves keep the original relative order.
    pub fn carve_validation(&self, fraction: f64, seed: u64) -> Result<(Self, Self), DatasetError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(DatasetError::InvalidArgument(format!("validation fraction {fraction} outside [0, 1)")));
        }
        let n = self.entries.len();
        let take = ((n as f64) * fraction).round() as usize;
        if take == 0 || take >= n {
            return Err(DatasetError::InvalidArgument(format!(
                "validation fraction {fraction} of {n} samples leaves an empty split"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut held = vec![false; n];
        for &i in &order[..take] {
            held[i] = true;
        }
        let pick = |want: bool| self.entries.iter().zip(&held).filter(|(_, &h)| h == want).map(|(e, _)| e.clone()).collect();
        let train = Self { entries: pick(false), seed, ..self.clone() };
        let val = Self { entries: pick(true), split: Split::Validation, seed, ..self.clone() };
        Ok((train, val))
    }

    /// Line-oriented text: `#`-prefixed header lines, then one
    /// tab-separated `path label class_name` row per entry.
    pub fn to_text(&self) -> Result<String, DatasetError> {
        let mut out = String::from("# pcvit-manifest 1\n");
        out += &format!("# split\t{}\n# seed\t{}\n# classes\t{}\n", self.split, self.seed, self.class_names.join(","));
        for w in &self.warnings {
            out += &format!("# warning\t{}\n", w.replace(['\n', '\t'], " "));
        }
        out += "path\tlabel\tclass_name\n";
        for e in &self.entries {
            let path = e.path.to_str().filter(|p| !p.contains(['\t', '\n'])).ok_or_else(|| {
                DatasetError::InvalidArgument(format!("path {} cannot be stored in a manifest", e.path.display()))
            })?;
            out += &format!("{path}\t{}\t{}\n", e.label, self.class_names[e.label]);
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let bad = |line: usize, reason: String| DatasetError::Manifest { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "# pcvit-manifest 1")) => {}
            _ => return Err(bad(1, "missing manifest signature".into())),
        }
        let (mut split, mut seed, mut classes, mut warnings) = (None, 0u64, None, Vec::new());
        let mut entries = Vec::new();
        for (no, line) in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest.split_once('\t').ok_or_else(|| bad(no, "header line without value".into()))?;
                match key {
                    "split" => split = Some(value.parse::<Split>().map_err(|e| bad(no, e.to_string()))?),
                    "seed" => seed = value.parse().map_err(|_| bad(no, format!("invalid seed {value:?}")))?,
                    "classes" => classes = Some(value.split(',').map(str::to_owned).collect::<Vec<_>>()),
                    "warning" => warnings.push(value.to_owned()),
                    other => return Err(bad(no, format!("unknown header key {other:?}"))),
                }
                continue;
            }
            if line == "path\tlabel\tclass_name" || line.is_empty() {
                continue;
            }
            let class_names = classes.as_ref().ok_or_else(|| bad(no, "entries before class list".into()))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, label, name] = fields[..] else {
                return Err(bad(no, format!("expected 3 fields, found {}", fields.len())));
            };
            let label: usize = label.parse().map_err(|_| bad(no, format!("invalid label {label:?}")))?;
            if class_names.get(label).map(String::as_str) != Some(name) {
                return Err(bad(no, format!("label {label} does not map to class {name:?}")));
            }
            entries.push(ManifestEntry { path: PathBuf::from(path), label });
        }
        Ok(Self {
            class_names: classes.ok_or_else(|| bad(0, "missing class list".into()))?,
            split: split.ok_or_else(|| bad(0, "missing split".into()))?,
            entries,
            seed,
            warnings,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_text()?).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}
