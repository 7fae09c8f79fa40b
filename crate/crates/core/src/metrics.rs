//! Overall accuracy and instance mIoU, plus bank-driven evaluation loops.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::inference::{ClsBank, SegBank};

/// Fraction of positions where prediction equals truth; 0 for empty input.
pub fn overall_accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction/truth length mismatch");
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Mean IoU over `parts` for one shape. A part absent from both prediction
/// and ground truth scores 1.
pub fn shape_miou(predicted: &[u16], truth: &[u16], parts: &[u16]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction/truth length mismatch");
    if parts.is_empty() {
        return 1.0;
    }
    let total: f64 = parts
        .iter()
        .map(|&part| {
            let (mut inter, mut union) = (0usize, 0usize);
            for (&p, &t) in predicted.iter().zip(truth) {
                let (a, b) = (p == part, t == part);
                inter += usize::from(a && b);
                union += usize::from(a || b);
            }
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    total / parts.len() as f64
}

/// Mean of per-shape mIoU over (prediction, truth, valid parts) triples.
pub fn instance_miou<'a>(shapes: impl IntoIterator<Item = (&'a [u16], &'a [u16], &'a [u16])>) -> f64 {
    let (sum, count) = shapes
        .into_iter()
        .fold((0.0, 0usize), |(s, n), (p, t, parts)| (s + shape_miou(p, t, parts), n + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationEval {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate_classification(
    bank: &ClsBank,
    encoder: &Encoder,
    test: &[(PointCloud, usize)],
) -> Result<ClassificationEval> {
    let predictions: Vec<usize> = test
        .par_iter()
        .map(|(cloud, _)| {
            let d = encoder.encode_classification(cloud)?;
            Ok(bank.classify(&d.vector)?.label)
        })
        .collect::<Result<_>>()?;
    let truth: Vec<usize> = test.iter().map(|(_, l)| *l).collect();
    Ok(ClassificationEval {
        accuracy: overall_accuracy(&predictions, &truth),
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationEval {
    pub instance_miou: f64,
    pub per_shape: Vec<f64>,
    pub predictions: Vec<Vec<u16>>,
}

pub fn evaluate_segmentation(bank: &SegBank, encoder: &Encoder, test: &[PointCloud]) -> Result<SegmentationEval> {
    let results: Vec<(Vec<u16>, f64)> = test
        .par_iter()
        .map(|shape| {
            let category = shape
                .category()
                .ok_or_else(|| Error::Manifest("test shape has no category".into()))?;
            let truth = shape
                .labels()
                .ok_or_else(|| Error::Manifest("test shape has no part labels".into()))?;
            let cat = bank
                .categories
                .get(&category)
                .ok_or(Error::UnknownCategory(category))?;
            // Canonicalization keeps point order, so predictions align with `truth`.
            let desc = encoder.encode_segmentation(shape)?;
            let pred: Vec<u16> = bank
                .segment(category, desc.matrix.view())?
                .into_iter()
                .map(|p| p.label as u16)
                .collect();
            let score = shape_miou(&pred, truth, &cat.valid_parts);
            Ok((pred, score))
        })
        .collect::<Result<_>>()?;
    let per_shape: Vec<f64> = results.iter().map(|(_, s)| *s).collect();
    let miou = if per_shape.is_empty() {
        0.0
    } else {
        per_shape.iter().sum::<f64>() / per_shape.len() as f64
    };
    Ok(SegmentationEval {
        instance_miou: miou,
        per_shape,
        predictions: results.into_iter().map(|(p, _)| p).collect(),
    })
}
