//! Hierarchical, weight-free feature extraction.
//!
//! A stage block samples centroids with FPS, groups each centroid's k nearest
//! points, modulates the gathered features with a positional code of the
//! relative coordinates, and pools the k rows into `[max | mean]`, doubling
//! the feature width. Classification summarizes every stage into one global
//! descriptor; segmentation walks the pyramid back down with IDW.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud::{global_dispersion, Point3, PointCloud};
use crate::encoding::{adaptive_params, AdaptiveParams, EncodingConfig, EncodingMode, PositionCode};
use crate::error::{Error, Result};
use crate::geom::{self, IdwParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stages: usize,
    /// Neighbors gathered per centroid.
    pub k: usize,
    /// Explicit centroid counts per stage; `None` halves the point count at
    /// every stage.
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
}

impl StageConfig {
    /// Centroid counts N_1 > N_2 > ... > N_T for an input of `n` points.
    pub fn schedule_for(&self, n: usize) -> Result<Vec<usize>> {
        if self.stages < 1 {
            return Err(Error::InvalidConfig("at least one stage is required".into()));
        }
        if self.k < 1 {
            return Err(Error::BadK(self.k));
        }
        let schedule = match &self.schedule {
            Some(s) => {
                if s.len() != self.stages {
                    return Err(Error::InvalidConfig(format!(
                        "schedule has {} entries for {} stages",
                        s.len(),
                        self.stages
                    )));
                }
                s.clone()
            }
            None => (1..=self.stages).map(|t| n >> t).collect(),
        };
        if schedule.contains(&0) || schedule[0] > n {
            let required = match &self.schedule {
                Some(s) => s[0].max(1),
                None => 1 << self.stages,
            };
            return Err(Error::TooFewPoints {
                required,
                available: n,
            });
        }
        if schedule.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "centroid schedule must strictly decrease: {schedule:?}"
            )));
        }
        Ok(schedule)
    }
}

/// Everything that determines a descriptor, plus the query temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoding: EncodingConfig,
    pub stages: StageConfig,
    pub idw: IdwParams,
    /// Points per shape after loading.
    pub points: usize,
    /// Rescale clouds to the unit ball after centering. Disabling keeps the
    /// raw scale so the adaptive bandwidth sees it.
    pub normalize_scale: bool,
    /// Softmax temperature for bank queries.
    pub gamma: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::classification()
    }
}

impl PipelineConfig {
    pub fn classification() -> Self {
        Self {
            encoding: EncodingConfig::classification(),
            stages: StageConfig {
                stages: 4,
                k: 110,
                schedule: None,
            },
            idw: IdwParams::default(),
            points: 1024,
            normalize_scale: true,
            gamma: 100.0,
        }
    }

    pub fn segmentation() -> Self {
        Self {
            encoding: EncodingConfig::segmentation(),
            stages: StageConfig {
                stages: 2,
                k: 70,
                schedule: None,
            },
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.stages.schedule_for(self.points)?;
        if self.idw.k < 1 {
            return Err(Error::BadK(self.idw.k));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// SHA-256 over every field that influences descriptors (gamma excluded).
    pub fn config_hash(&self) -> [u8; 32] {
        let value = serde_json::json!({
            "encoding": self.encoding,
            "stages": self.stages,
            "idw": self.idw,
            "points": self.points,
            "normalize_scale": self.normalize_scale,
        });
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn config_hash_hex(&self) -> String {
        hex::encode(self.config_hash())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLevel {
    pub points: Vec<Point3>,
    pub features: Array2<f64>,
}

/// Encoder levels from the input resolution (index 0) to the coarsest stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePyramid {
    pub levels: Vec<StageLevel>,
}

impl StagePyramid {
    pub fn stages(&self) -> &[StageLevel] {
        &self.levels[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    pub vector: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointDescriptors {
    pub matrix: Array2<f64>,
}

fn pool_rows(rows: ArrayView2<'_, f64>) -> Vec<f64> {
    let w = rows.ncols();
    let mut out = vec![f64::NEG_INFINITY; w];
    out.extend(std::iter::repeat_n(0.0, w));
    for row in rows.outer_iter() {
        for (c, &v) in row.iter().enumerate() {
            if v > out[c] {
                out[c] = v;
            }
            out[w + c] += v;
        }
    }
    let k = rows.nrows() as f64;
    for v in &mut out[w..] {
        *v /= k;
    }
    out
}

/// One stage block: FPS to `centroids`, k-NN grouping, positional
/// modulation at the incoming width, then `[max | mean]` pooling.
pub fn stage_forward(
    points: &[Point3],
    features: ArrayView2<'_, f64>,
    centroids: usize,
    k: usize,
    cfg: &EncodingConfig,
    params: AdaptiveParams,
) -> Result<StageLevel> {
    if features.nrows() != points.len() {
        return Err(Error::ShapeMismatch {
            left: (points.len(), 3),
            right: features.dim(),
        });
    }
    let width = features.ncols();
    let code = PositionCode::new(cfg, params, width)?;
    let centers = geom::fps(points, centroids)?;
    let center_points: Vec<Point3> = centers.iter().map(|&c| points[c]).collect();
    let neighbors = geom::knn(&center_points, points, k)?;

    let pooled: Vec<Vec<f64>> = centers
        .par_iter()
        .zip(neighbors.into_par_iter())
        .map(|(&c, nb)| {
            let hood = geom::Neighborhood::new(points, c, nb);
            let mut block = geom::gather_rows(features, &hood.neighbor_indices);
            let pos = code.encode(&hood.rel_coords);
            block.zip_mut_with(&pos, |h, &p| *h = (*h + p) * p);
            pool_rows(block.view())
        })
        .collect();

    let mut out = Array2::zeros((centroids, 2 * width));
    for (mut row, p) in out.outer_iter_mut().zip(pooled) {
        row.assign(&ndarray::ArrayView1::from(&p[..]));
    }
    Ok(StageLevel {
        points: center_points,
        features: out,
    })
}

fn l2_normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: PipelineConfig,
}

impl Encoder {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.encoding.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Centers (and by default rescales) the cloud and derives the
    /// per-cloud bandwidth and blend from its dispersion.
    pub fn prepare(&self, cloud: &PointCloud) -> (PointCloud, AdaptiveParams) {
        let cloud = if self.cfg.normalize_scale {
            cloud.canonicalize()
        } else {
            cloud.centered()
        };
        let params = adaptive_params(&global_dispersion(&cloud), &self.cfg.encoding);
        (cloud, params)
    }

    /// Runs every stage and keeps each level's points and features.
    pub fn pyramid(&self, cloud: &PointCloud) -> Result<StagePyramid> {
        let (cloud, params) = self.prepare(cloud);
        let schedule = self.cfg.stages.schedule_for(cloud.len())?;
        let enc = &self.cfg.encoding;
        let input = PositionCode::new(enc, params, enc.dim)?.encode(cloud.points());
        let mut levels = vec![StageLevel {
            points: cloud.points().to_vec(),
            features: input,
        }];
        for &n_t in &schedule {
            let prev = levels.last().expect("input level present");
            let next = stage_forward(
                &prev.points,
                prev.features.view(),
                n_t,
                self.cfg.stages.k,
                enc,
                params,
            )?;
            levels.push(next);
        }
        Ok(StagePyramid { levels })
    }

    /// `[max_j | mean_j]` of every stage, each summary L2-normalized, then
    /// concatenated and normalized again.
    pub fn encode_classification(&self, cloud: &PointCloud) -> Result<GlobalDescriptor> {
        let pyramid = self.pyramid(cloud)?;
        let mut vector = Vec::new();
        for level in pyramid.stages() {
            let mut summary = pool_rows(level.features.view());
            l2_normalize(&mut summary);
            vector.extend(summary);
        }
        let normalized = l2_normalize(&mut vector);
        Ok(GlobalDescriptor { vector, normalized })
    }

    /// Per-point descriptors at input resolution: coarse features are
    /// interpolated level by level and concatenated with each level's own
    /// encoder features; rows are L2-normalized.
    pub fn encode_segmentation(&self, cloud: &PointCloud) -> Result<PointDescriptors> {
        if self.cfg.encoding.mode != EncodingMode::Hybrid {
            return Err(Error::InvalidConfig(
                "segmentation requires the hybrid encoding mode".into(),
            ));
        }
        let pyramid = self.pyramid(cloud)?;
        let levels = &pyramid.levels;
        let mut current = levels.last().expect("at least one stage").features.clone();
        for t in (0..levels.len() - 1).rev() {
            let fine = &levels[t];
            let coarse = &levels[t + 1];
            let interp = geom::idw_interpolate(&fine.points, &coarse.points, current.view(), &self.cfg.idw)?;
            current = concatenate(Axis(1), &[interp.view(), fine.features.view()])
                .expect("row counts agree");
        }
        for mut row in current.outer_iter_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        Ok(PointDescriptors { matrix: current })
    }
}

/// Width of the global descriptor for `d` and `stages`: sum of 2 * d * 2^t.
pub fn descriptor_dim(d: usize, stages: usize) -> usize {
    (1..=stages).map(|t| 2 * d * (1 << t)).sum()
}

/// Width of per-point segmentation descriptors: d * (2^(T+1) - 1).
pub fn point_descriptor_dim(d: usize, stages: usize) -> usize {
    d * ((1 << (stages + 1)) - 1)
}
