use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::annotation::{parse_annotation_text, GroundTruthBox};
use super::raster::Raster;
use super::split::DatasetManifest;
use super::Sample;
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// A dataset directory: `images/`, `labels/` and optionally `manifest.txt`.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    images: BTreeMap<String, PathBuf>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let dir = root.join("images");
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut images = BTreeMap::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(str::to_ascii_lowercase);
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                if let Some(prev) = images.insert(stem.to_string(), path.clone()) {
                    return Err(Error::InvalidArgument(format!(
                        "two images share id {stem:?}: {} and {}",
                        prev.display(),
                        path.display()
                    )));
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            images,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Image ids in sorted order.
    pub fn ids(&self) -> Vec<String> {
        self.images.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    /// Loads the manifest and checks every listed id has an image.
    pub fn manifest(&self) -> Result<DatasetManifest> {
        let m = DatasetManifest::load(&self.manifest_path())?;
        for id in m.train.iter().chain(&m.val).chain(&m.test) {
            if !self.images.contains_key(id) {
                return Err(Error::InvalidArgument(format!(
                    "manifest lists {id:?} but images/ has no such file"
                )));
            }
        }
        Ok(m)
    }

    /// Ground truth for `id`; a missing label file means a negative image.
    pub fn labels(&self, id: &str) -> Result<Vec<GroundTruthBox>> {
        let path = self.root.join("labels").join(format!("{id}.txt"));
        match std::fs::read_to_string(&path) {
            Ok(text) => parse_annotation_text(&text).map_err(|e| match e {
                Error::Parse { line, message } => {
                    Error::InvalidArgument(format!("{}: line {line}: {message}", path.display()))
                }
                other => other,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn image_path(&self, id: &str) -> Result<&Path> {
        self.images
            .get(id)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown image id {id:?}")))
    }

    pub fn load(&self, id: &str) -> Result<Sample> {
        let pixels = Raster::load(self.image_path(id)?)?;
        Ok(Sample {
            image_id: id.to_string(),
            pixels,
            boxes: self.labels(id)?,
        })
    }
}
