//! Cost accounting: an analytic FLOP estimator, a latency harness and a
//! counting allocator for peak host memory.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::encoder::{Encoder, PipelineConfig};
use crate::error::{Error, Result};
use crate::io::bank_file::Bank;
use crate::io::manifest::Task;

/// Counting conventions used by [`estimate_flops`].
pub const FLOP_FORMULA: &str = "\
Per stage t (input N_{t-1} points, N_t centroids, incoming width w_t = d*2^(t-1), k neighbors):
  fps        = 9 * N_t * N_{t-1}            (3 sub + 3 mul + 2 add + 1 compare per distance)
  knn        = 9 * N_t * N_{t-1} + N_t * k * ceil(log2 k)
  encoding   = N_t * k * (3 + code(w_t))    (3 sub for relative coordinates)
  modulation = 2 * N_t * k * w_t            (one add, one multiply)
  pooling    = 2 * N_t * k * w_t + N_t * w_t
code(w)      = 9 per adaptive channel (sub, scale, square, halve, exp, cos, 3 for blend)
             + 1.5 per Fourier channel (scale, sin, cos per sin/cos pair)
input code   = N * code(d)
classification summary = sum_t 2 * N_t * 2 w_t
segmentation decoder, per level (fine N_f, coarse N_c, width w, 3 neighbors):
  9 * N_f * N_c + 12 * N_f + 6 * N_f * w
A fused multiply-add counts as 2, every exp/cos/sin/sqrt as 1.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub fps: f64,
    pub knn: f64,
    pub encoding: f64,
    pub modulation: f64,
    pub pooling: f64,
    pub interpolation: f64,
}

impl FlopBreakdown {
    pub fn total(&self) -> f64 {
        self.fps + self.knn + self.encoding + self.modulation + self.pooling + self.interpolation
    }

    pub fn gflops(&self) -> f64 {
        self.total() * 1e-9
    }
}

fn code_cost(cfg: &PipelineConfig, width: usize) -> Result<f64> {
    let (fourier, adaptive) = cfg.encoding.split(width)?;
    Ok(9.0 * adaptive as f64 + 1.5 * fourier as f64)
}

/// Analytic per-sample FLOP count for the configured pipeline.
pub fn estimate_flops(cfg: &PipelineConfig, task: Task) -> Result<FlopBreakdown> {
    cfg.encoding.validate()?;
    let schedule = cfg.stages.schedule_for(cfg.points)?;
    let k = cfg.stages.k as f64;
    let d = cfg.encoding.dim;
    let mut f = FlopBreakdown {
        encoding: cfg.points as f64 * code_cost(cfg, d)?,
        ..Default::default()
    };
    let mut n_prev = cfg.points as f64;
    let mut width = d;
    let mut sizes = vec![(cfg.points as f64, d)];
    for &n_t in &schedule {
        let n_t = n_t as f64;
        let w = width as f64;
        f.fps += 9.0 * n_t * n_prev;
        f.knn += 9.0 * n_t * n_prev + n_t * k * k.log2().ceil().max(0.0);
        f.encoding += n_t * k * (3.0 + code_cost(cfg, width)?);
        f.modulation += 2.0 * n_t * k * w;
        f.pooling += 2.0 * n_t * k * w + n_t * w;
        width *= 2;
        n_prev = n_t;
        sizes.push((n_t, width));
    }
    match task {
        Task::Cls => {
            for &(n_t, w) in &sizes[1..] {
                f.pooling += 2.0 * n_t * 2.0 * w as f64;
            }
        }
        Task::Seg => {
            let mut carried = sizes.last().expect("one stage").1 as f64;
            for t in (0..sizes.len() - 1).rev() {
                let (n_fine, w_fine) = sizes[t];
                let n_coarse = sizes[t + 1].0;
                f.interpolation += 9.0 * n_fine * n_coarse + 12.0 * n_fine + 6.0 * n_fine * carried;
                carried += w_fine as f64;
            }
        }
    }
    Ok(f)
}

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator wrapper that tracks live and peak heap bytes. Install
/// it with `#[global_allocator]` in a binary to enable peak reporting.
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

fn record_alloc(size: usize) {
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
    if !ACTIVE.load(Ordering::Relaxed) {
        ACTIVE.store(true, Ordering::Relaxed);
    }
}

pub fn tracking_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Restarts peak tracking from the current live size.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// Median over repetitions of the mean per-sample latency.
    pub ms_per_sample: f64,
    pub repetition_ms: Vec<f64>,
    /// Peak live heap above the pre-run baseline, when tracking is installed.
    pub peak_bytes: Option<usize>,
}

/// Times one sample's full inference (encode, plus the bank query when a
/// bank is given) on a single thread. `warmup` untimed passes over the first
/// sample precede `repetitions` timed passes over all samples.
pub fn benchmark(
    encoder: &Encoder,
    clouds: &[PointCloud],
    task: Task,
    bank: Option<&Bank>,
    repetitions: usize,
    warmup: usize,
) -> Result<BenchResult> {
    if clouds.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let run = |cloud: &PointCloud| -> Result<()> {
        match task {
            Task::Cls => {
                let d = encoder.encode_classification(cloud)?;
                if let Some(Bank::Cls(b)) = bank {
                    black_box(b.classify(&d.vector)?);
                }
                black_box(d);
            }
            Task::Seg => {
                let d = encoder.encode_segmentation(cloud)?;
                if let (Some(Bank::Seg(b)), Some(cat)) = (bank, cloud.category()) {
                    black_box(b.segment(cat, d.matrix.view())?);
                }
                black_box(d);
            }
        }
        Ok(())
    };
    pool.install(|| {
        for _ in 0..warmup {
            run(&clouds[0])?;
        }
        let baseline = current_bytes();
        reset_peak();
        let mut repetition_ms = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            for c in clouds {
                run(c)?;
            }
            repetition_ms.push(start.elapsed().as_secs_f64() * 1e3 / clouds.len() as f64);
        }
        let peak = tracking_active().then(|| peak_bytes().saturating_sub(baseline));
        Ok(BenchResult {
            ms_per_sample: median(&repetition_ms),
            repetition_ms,
            peak_bytes: peak,
        })
    })
}
