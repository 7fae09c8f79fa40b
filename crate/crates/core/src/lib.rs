//! Training-free point-cloud classification and part segmentation.
//!
//! Features come from deterministic operators only: farthest point sampling,
//! exact k-NN grouping, pooling, and a positional code whose Gaussian/cosine
//! bandwidth and blend are derived from each input cloud's dispersion.
//! "Training" is a single pass that stores normalized descriptors (or part
//! prototypes) in a bank; prediction is softmax-weighted similarity voting.
//!
//! ```no_run
//! use pointbank::{build_cls_bank, synthetic, Encoder, PipelineConfig};
//!
//! let mut cfg = PipelineConfig::classification();
//! cfg.points = 256;
//! cfg.stages.k = 32;
//! let encoder = Encoder::new(cfg).unwrap();
//! let train: Vec<_> = (0..3).map(|c| (synthetic::shape(c, 256, c as u64), c)).collect();
//! let names = synthetic::SHAPE_NAMES.iter().map(|s| s.to_string()).collect();
//! let bank = build_cls_bank(&train, names, &encoder).unwrap();
//! let query = encoder.encode_classification(&synthetic::cube(256, 99)).unwrap();
//! assert_eq!(bank.classify(&query.vector).unwrap().label, 1);
//! ```

pub mod bench;
pub mod cloud;
pub mod encoder;
pub mod encoding;
pub mod error;
pub mod fewshot;
pub mod geom;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod synthetic;

pub use cloud::{global_dispersion, ClassLabel, DispersionStats, Point3, PointCloud};
pub use encoder::{Encoder, GlobalDescriptor, PipelineConfig, PointDescriptors, StageConfig, StagePyramid};
pub use encoding::{AdaptiveParams, AnchorGrid, EncodingConfig, EncodingMode};
pub use error::{Error, Result};
pub use inference::{build_cls_bank, build_seg_bank, ClsBank, PartTable, Precision, Prediction, SegBank};
pub use io::bank_file::{load_bank, save_bank, Bank};
pub use io::manifest::{DatasetManifest, Split, Task};
pub use io::report::EvalReport;
