//! JSON dataset manifests.
//!
//! ```json
//! {
//!   "task": "cls",
//!   "points": 1024,
//!   "class_names": ["airplane", "bathtub"],
//!   "train": [{ "path": "train/0001.npc", "label": 0 }],
//!   "test":  [{ "path": "test/0001.xyz",  "label": 1 }]
//! }
//! ```
//!
//! For `"task": "seg"` the label is the category id (an index into
//! `categories`, each listing its valid global part ids) and every sample
//! file must carry per-point part labels. Paths are relative to the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::inference::PartTable;
use crate::io::formats::load_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cls,
    Seg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub parts: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub task: Task,
    pub points: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub categories: Vec<CategorySpec>,
    pub train: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        match self.task {
            Task::Cls => self.class_names.len(),
            Task::Seg => self.categories.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Manifest("points must be positive".into()));
        }
        if self.task == Task::Seg && self.categories.len() > usize::from(u16::MAX) {
            return Err(Error::Manifest("too many categories".into()));
        }
        let n = self.num_labels();
        for s in self.train.iter().chain(&self.test) {
            if s.label >= n {
                return Err(Error::Manifest(format!(
                    "{}: label {} outside the {} declared labels",
                    s.path.display(),
                    s.label,
                    n
                )));
            }
            let full = self.root.join(&s.path);
            if !full.is_file() {
                return Err(Error::Manifest(format!("missing sample file {}", full.display())));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> &[SampleRef] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn part_table(&self) -> PartTable {
        self.categories
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u16, c.parts.clone()))
            .collect()
    }

    pub fn label_names(&self) -> Vec<String> {
        match self.task {
            Task::Cls => self.class_names.clone(),
            Task::Seg => self.categories.iter().map(|c| c.name.clone()).collect(),
        }
    }

    /// Loads a split, reducing every file to `points` points. Segmentation
    /// samples get their category attached and their part labels checked.
    pub fn load_split(&self, split: Split, points: usize) -> Result<Vec<(PointCloud, usize)>> {
        self.split(split)
            .par_iter()
            .map(|s| {
                let path = self.root.join(&s.path);
                let mut cloud = load_sample(&path, points)?;
                if self.task == Task::Seg {
                    let parts = &self.categories[s.label].parts;
                    let labels = cloud.labels().ok_or_else(|| {
                        Error::Manifest(format!("{} has no part labels", path.display()))
                    })?;
                    if let Some(bad) = labels.iter().find(|l| !parts.contains(l)) {
                        return Err(Error::Manifest(format!(
                            "{}: part {bad} is not valid for category {}",
                            path.display(),
                            self.categories[s.label].name
                        )));
                    }
                    cloud = cloud.with_category(s.label as u16);
                }
                Ok((cloud, s.label))
            })
            .collect()
    }

    /// SHA-256 over the manifest and every referenced file, in order.
    pub fn dataset_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        for s in self.train.iter().chain(&self.test) {
            h.update(fs::read(self.root.join(&s.path))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}
