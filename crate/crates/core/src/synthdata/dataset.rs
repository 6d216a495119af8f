use std::collections::HashSet;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{image_to_raster, raster_to_image, render_sample, SyntheticSample};
use super::{SynthError, SynthSpec};
use crate::knowledge::{CriteriaAxis, KnowledgeBase};
use crate::pnm::{decode_ppm, encode_ppm};
use crate::rng::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const KB_FILE: &str = "kb.json";
pub const IMAGE_DIR: &str = "images";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub class: usize,
    pub axis_labels: Vec<usize>,
    /// Image path relative to the dataset directory.
    pub path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<SyntheticSample>,
    pub test: Vec<SyntheticSample>,
    pub manifest: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn manifest_text(&self) -> String {
        manifest_text(&self.manifest)
    }

    /// SHA-256 of the manifest text, hex.
    pub fn manifest_digest(&self) -> String {
        hex::encode(Sha256::digest(self.manifest_text().as_bytes()))
    }

    /// Writes `images/*.ppm`, `manifest.jsonl` and `kb.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        let images = dir.join(IMAGE_DIR);
        std::fs::create_dir_all(&images).map_err(io(&images))?;
        let by_id = self.train.iter().chain(&self.test).map(|s| (s.id.as_str(), s)).collect::<std::collections::HashMap<_, _>>();
        for entry in &self.manifest {
            let sample = by_id[entry.id.as_str()];
            let path = dir.join(&entry.path);
            std::fs::write(&path, encode_ppm(&image_to_raster(&sample.image))).map_err(io(&path))?;
        }
        let manifest = dir.join(MANIFEST_FILE);
        std::fs::write(&manifest, self.manifest_text()).map_err(io(&manifest))?;
        kb.save(dir.join(KB_FILE))?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SynthError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest_path).map_err(|source| SynthError::Io { path: manifest_path, source })?;
        let manifest = parse_manifest(&text)?;
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for entry in &manifest {
            let path = dir.join(&entry.path);
            let bytes = std::fs::read(&path).map_err(|source| SynthError::Io { path: path.clone(), source })?;
            let raster = decode_ppm(&bytes).map_err(|e| SynthError::Image { path: path.clone(), reason: e.to_string() })?;
            if raster.width == 0 || raster.height == 0 {
                return Err(SynthError::Image { path, reason: "empty image".into() });
            }
            let sample = SyntheticSample {
                id: entry.id.clone(),
                image: raster_to_image(&raster),
                class: entry.class,
                axis_labels: entry.axis_labels.clone(),
            };
            match entry.split {
                Split::Train => train.push(sample),
                Split::Test => test.push(sample),
            }
        }
        Ok(Self { train, test, manifest })
    }
}

pub fn manifest_text(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n").collect()
}

/// Parses manifest JSON Lines. Blank lines are skipped; ids must be unique
/// and paths must stay inside the dataset directory.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, SynthError> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| SynthError::Manifest { line: i + 1, reason };
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if entry.id.is_empty() || !seen.insert(entry.id.clone()) {
            return Err(bad(format!("empty or duplicate id `{}`", entry.id)));
        }
        let path = PathBuf::from(&entry.path);
        if entry.path.is_empty() || !path.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(bad(format!("path `{}` must be relative and inside the dataset", entry.path)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Renders `n_per_class` samples per class and splits each class 80/20.
///
/// Sample `i` of class `c` is rendered from `derive_seed(spec.seed, [c, i])`.
/// The split orders each class's samples by a key drawn from `split_seed`
/// and sends the first `⌊4n/5⌋` to train.
pub fn gen_dataset(spec: &SynthSpec, n_per_class: usize, split_seed: u64) -> Result<Dataset, SynthError> {
    spec.validate()?;
    if n_per_class < 2 {
        return Err(SynthError::InvalidSpec(format!("n_per_class must be at least 2, got {n_per_class}")));
    }
    let n_train = n_per_class * 4 / 5;
    let (mut train, mut test, mut manifest) = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..spec.classes.len() {
        let mut order: Vec<usize> = (0..n_per_class).collect();
        order.sort_by_key(|&i| (derive_seed(split_seed, &[class as u64, i as u64]), i));
        let mut is_train = vec![false; n_per_class];
        order[..n_train].iter().for_each(|&i| is_train[i] = true);
        for (i, &train_side) in is_train.iter().enumerate() {
            let mut sample = render_sample(spec, class, derive_seed(spec.seed, &[class as u64, i as u64]))?;
            sample.id = format!("c{class}-{i:05}");
            let split = if train_side { Split::Train } else { Split::Test };
            manifest.push(ManifestEntry {
                id: sample.id.clone(),
                split,
                class,
                axis_labels: sample.axis_labels.clone(),
                path: format!("{IMAGE_DIR}/{}.ppm", sample.id),
            });
            match split {
                Split::Train => train.push(sample),
                Split::Test => test.push(sample),
            }
        }
    }
    Ok(Dataset { train, test, manifest })
}

/// The criteria knowledge base describing `spec`'s class table.
pub fn kb_from_spec(spec: &SynthSpec) -> Result<KnowledgeBase, SynthError> {
    spec.validate()?;
    let (colors, shapes, textures, sizes) = spec.used_options();
    let texts = [
        colors.iter().map(|c| c.phrase()).collect::<Vec<_>>(),
        shapes.iter().map(|s| s.phrase()).collect(),
        textures.iter().map(|t| t.phrase()).collect(),
        sizes.iter().map(|s| s.phrase()).collect(),
    ];
    let labels: Vec<Vec<usize>> = (0..spec.classes.len()).map(|c| spec.axis_labels(c)).collect();
    let axes = ["color", "shape", "texture", "size"]
        .iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (name, options))| CriteriaAxis {
            name: name.to_string(),
            options: options.into_iter().map(String::from).collect(),
            class_to_option: labels.iter().map(|l| l[i]).collect(),
        })
        .collect();
    Ok(KnowledgeBase::new(spec.classes.iter().map(|c| c.name.clone()).collect(), axes)?)
}
