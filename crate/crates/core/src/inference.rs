//! Memory banks and similarity-based prediction.
//!
//! Building a bank is a single forward pass over the training data. A query
//! is scored against every stored entry by dot product, the similarities are
//! turned into weights with `softmax(gamma * s)`, and the weights vote with
//! the entries' one-hot labels.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::encoder::Encoder;
use crate::error::{Error, Result};

/// Storage precision of bank entries on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Numerically stable `softmax(gamma * s)`.
pub fn softmax(similarities: &[f64], gamma: f64) -> Vec<f64> {
    if similarities.is_empty() {
        return Vec::new();
    }
    let max = similarities
        .iter()
        .map(|&s| gamma * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = similarities.iter().map(|&s| (gamma * s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Index of the largest value; the smallest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn dot_f32(row: ArrayView1<'_, f32>, q: &[f64]) -> f64 {
    row.iter().zip(q).map(|(&a, &b)| f64::from(a) * b).sum()
}

fn normalized_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
    v.iter().map(|&x| (x * scale) as f32).collect()
}

fn rows_to_array(rows: &[Vec<f32>], dim: usize) -> Array2<f32> {
    let flat: Vec<f32> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), dim), flat).expect("rows share one width")
}

/// Classification bank: one unit-norm descriptor row per training shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsBank {
    pub descriptors: Array2<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub gamma: f64,
    pub config_hash: [u8; 32],
    pub precision: Precision,
}

impl ClsBank {
    /// Normalizes and stores descriptors in the given order.
    pub fn from_descriptors(
        descriptors: &[Vec<f64>],
        labels: Vec<usize>,
        class_names: Vec<String>,
        gamma: f64,
        config_hash: [u8; 32],
    ) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if descriptors.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                left: (descriptors.len(), 1),
                right: (labels.len(), 1),
            });
        }
        let classes = class_names.len();
        if let Some(&class) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::ClassOutOfRange { class, classes });
        }
        let dim = descriptors[0].len();
        if let Some(d) = descriptors.iter().find(|d| d.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: d.len(),
            });
        }
        let rows: Vec<Vec<f32>> = descriptors.iter().map(|d| normalized_f32(d)).collect();
        Ok(Self {
            descriptors: rows_to_array(&rows, dim),
            labels,
            class_names,
            gamma,
            config_hash,
            precision: Precision::F32,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One-hot label matrix (entries × classes).
    pub fn one_hot(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.len(), self.num_classes()));
        for (i, &l) in self.labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        y
    }

    pub fn similarities(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: query.len(),
            });
        }
        Ok(self
            .descriptors
            .outer_iter()
            .map(|row| dot_f32(row, query))
            .collect())
    }

    pub fn classify(&self, query: &[f64]) -> Result<Prediction> {
        let s = self.similarities(query)?;
        let w = softmax(&s, self.gamma);
        let mut scores = vec![0.0; self.num_classes()];
        for (wi, &l) in w.iter().zip(&self.labels) {
            scores[l] += wi;
        }
        Ok(Prediction {
            label: argmax(&scores),
            scores,
        })
    }
}

/// Encodes every training shape (in parallel, kept in input order) and
/// stores the normalized descriptors.
pub fn build_cls_bank(
    shapes: &[(PointCloud, usize)],
    class_names: Vec<String>,
    encoder: &Encoder,
) -> Result<ClsBank> {
    if shapes.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let classes = class_names.len();
    if let Some((_, class)) = shapes.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::ClassOutOfRange {
            class: *class,
            classes,
        });
    }
    let descriptors: Vec<Vec<f64>> = shapes
        .par_iter()
        .map(|(cloud, _)| encoder.encode_classification(cloud).map(|g| g.vector))
        .collect::<Result<_>>()?;
    let labels = shapes.iter().map(|(_, l)| *l).collect();
    ClsBank::from_descriptors(
        &descriptors,
        labels,
        class_names,
        encoder.config().gamma,
        encoder.config().config_hash(),
    )
}

/// Valid global part ids for each category.
pub type PartTable = BTreeMap<u16, Vec<u16>>;

/// Prototypes of one shape category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryPrototypes {
    pub valid_parts: Vec<u16>,
    /// One unit-norm row per (training shape, part) pair.
    pub prototypes: Array2<f32>,
    pub part_labels: Vec<u16>,
}

impl CategoryPrototypes {
    pub fn len(&self) -> usize {
        self.part_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.part_labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegBank {
    pub categories: BTreeMap<u16, CategoryPrototypes>,
    pub gamma: f64,
    pub config_hash: [u8; 32],
    pub precision: Precision,
    /// Labeled parts dropped because they are not valid for the category.
    pub skipped_parts: usize,
}

/// Normalized mean descriptor per labeled part present in a shape, in
/// ascending part order.
pub fn part_prototypes(descriptors: ArrayView2<'_, f64>, labels: &[u16]) -> Vec<(u16, Vec<f64>)> {
    let mut sums: BTreeMap<u16, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, &l) in descriptors.outer_iter().zip(labels) {
        let entry = sums
            .entry(l)
            .or_insert_with(|| (vec![0.0; descriptors.ncols()], 0));
        entry.0.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += b);
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(part, (sum, count))| {
            let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
            let n = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            let unit = if n > 0.0 { mean.iter().map(|v| v / n).collect() } else { mean };
            (part, unit)
        })
        .collect()
}

impl SegBank {
    /// Assembles a bank from per-shape (category, part, prototype) entries.
    pub fn from_prototypes(
        entries: Vec<(u16, u16, Vec<f64>)>,
        parts: &PartTable,
        gamma: f64,
        config_hash: [u8; 32],
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut grouped: BTreeMap<u16, (Vec<Vec<f32>>, Vec<u16>)> = BTreeMap::new();
        let mut skipped = 0;
        let mut dim = None;
        for (category, part, proto) in entries {
            let valid = parts.get(&category).ok_or(Error::UnknownCategory(category))?;
            if !valid.contains(&part) {
                skipped += 1;
                continue;
            }
            let d = *dim.get_or_insert(proto.len());
            if proto.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: proto.len(),
                });
            }
            let entry = grouped.entry(category).or_default();
            entry.0.push(normalized_f32(&proto));
            entry.1.push(part);
        }
        let dim = dim.ok_or(Error::EmptyTrainingSet)?;
        let categories = grouped
            .into_iter()
            .map(|(category, (rows, part_labels))| {
                (
                    category,
                    CategoryPrototypes {
                        valid_parts: parts[&category].clone(),
                        prototypes: rows_to_array(&rows, dim),
                        part_labels,
                    },
                )
            })
            .collect();
        Ok(Self {
            categories,
            gamma,
            config_hash,
            precision: Precision::F32,
            skipped_parts: skipped,
        })
    }

    pub fn dim(&self) -> usize {
        self.categories
            .values()
            .next()
            .map_or(0, |c| c.prototypes.ncols())
    }

    pub fn num_prototypes(&self) -> usize {
        self.categories.values().map(|c| c.len()).sum()
    }

    /// Keeps a seeded random fraction of each category's prototypes (at least
    /// one), preserving their order.
    pub fn subsample(&mut self, keep: f64, seed: u64) -> Result<()> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::InvalidConfig(format!("prototype keep fraction must be in (0, 1], got {keep}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for cat in self.categories.values_mut() {
            let total = cat.len();
            let n = ((total as f64 * keep).ceil() as usize).clamp(1, total);
            let mut chosen = rand::seq::index::sample(&mut rng, total, n).into_vec();
            chosen.sort_unstable();
            let rows: Vec<Vec<f32>> = chosen
                .iter()
                .map(|&i| cat.prototypes.row(i).to_vec())
                .collect();
            cat.prototypes = rows_to_array(&rows, cat.prototypes.ncols());
            cat.part_labels = chosen.iter().map(|&i| cat.part_labels[i]).collect();
        }
        Ok(())
    }

    /// Per-point softmax vote over the category's prototypes. Scores are
    /// indexed like `valid_parts`; labels are global part ids.
    pub fn segment(&self, category: u16, descriptors: ArrayView2<'_, f64>) -> Result<Vec<Prediction>> {
        let cat = self
            .categories
            .get(&category)
            .ok_or(Error::UnknownCategory(category))?;
        if descriptors.ncols() != cat.prototypes.ncols() {
            return Err(Error::DimMismatch {
                expected: cat.prototypes.ncols(),
                found: descriptors.ncols(),
            });
        }
        let slot: Vec<usize> = cat
            .part_labels
            .iter()
            .map(|p| cat.valid_parts.iter().position(|v| v == p).expect("prototype part is valid"))
            .collect();
        let rows: Vec<Vec<f64>> = descriptors.outer_iter().map(|r| r.to_vec()).collect();
        Ok(rows
            .par_iter()
            .map(|f| {
                let s: Vec<f64> = cat.prototypes.outer_iter().map(|p| dot_f32(p, f)).collect();
                let w = softmax(&s, self.gamma);
                let mut scores = vec![0.0; cat.valid_parts.len()];
                for (wi, &j) in w.iter().zip(&slot) {
                    scores[j] += wi;
                }
                let best = argmax(&scores);
                Prediction {
                    label: usize::from(cat.valid_parts[best]),
                    scores,
                }
            })
            .collect())
    }
}

/// Encodes every labeled training shape and stores one prototype per
/// (shape, present part), grouped by category.
pub fn build_seg_bank(shapes: &[PointCloud], parts: &PartTable, encoder: &Encoder) -> Result<SegBank> {
    if shapes.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for shape in shapes {
        let category = shape
            .category()
            .ok_or_else(|| Error::Manifest("segmentation shape has no category".into()))?;
        if !parts.contains_key(&category) {
            return Err(Error::UnknownCategory(category));
        }
        if shape.labels().is_none() {
            return Err(Error::Manifest("segmentation shape has no part labels".into()));
        }
    }
    let per_shape: Vec<Vec<(u16, u16, Vec<f64>)>> = shapes
        .par_iter()
        .map(|shape| {
            let desc = encoder.encode_segmentation(shape)?;
            let category = shape.category().expect("checked above");
            let labels = shape.labels().expect("checked above");
            Ok(part_prototypes(desc.matrix.view(), labels)
                .into_iter()
                .map(|(part, proto)| (category, part, proto))
                .collect())
        })
        .collect::<Result<_>>()?;
    SegBank::from_prototypes(
        per_shape.into_iter().flatten().collect(),
        parts,
        encoder.config().gamma,
        encoder.config().config_hash(),
    )
}

/// Part table listing, per category, every part label seen in `shapes`.
pub fn infer_part_table(shapes: &[PointCloud]) -> PartTable {
    let mut table: BTreeMap<u16, BTreeSet<u16>> = BTreeMap::new();
    for s in shapes {
        if let (Some(c), Some(labels)) = (s.category(), s.labels()) {
            table.entry(c).or_default().extend(labels.iter().copied());
        }
    }
    table
        .into_iter()
        .map(|(c, parts)| (c, parts.into_iter().collect()))
        .collect()
}
