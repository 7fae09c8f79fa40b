//! Adaptive Gaussian/cosine positional encoding, the fixed-frequency Fourier
//! channel, their hybrid concatenation, and neighborhood modulation.
//!
//! The adaptive channel evaluates, per coordinate axis and per anchor `v`,
//!
//! ```text
//! u   = (x - v) / (sigma_a + eps)
//! phi = lambda * exp(-u^2 / 2) + (1 - lambda) * cos(u)
//! ```
//!
//! where `sigma_a = sigma0 * (1 + sigma_g)` and
//! `lambda = sigmoid((sigma_g - tau) * kappa)` are derived from the global
//! dispersion `sigma_g` of the input cloud. Channels are laid out axis-major
//! (all x anchors, then y, then z) and truncated to the requested width.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::cloud::{DispersionStats, Point3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    /// Gaussian/cosine channel only (classification).
    AdaptiveOnly,
    /// Fourier block followed by the adaptive block (segmentation).
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Stage-1 encoding width `d`.
    pub dim: usize,
    pub sigma0: f64,
    pub tau: f64,
    pub kappa: f64,
    pub eps: f64,
    /// Fourier frequencies per axis; only used in hybrid mode.
    pub fourier_l: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mode: EncodingMode,
    /// Ablation: use this bandwidth instead of the adaptive one.
    #[serde(default)]
    pub fixed_sigma: Option<f64>,
    /// Ablation: use this raw blend weight on the Gaussian term instead of
    /// the adaptive one. Values outside [0, 1] extrapolate.
    #[serde(default)]
    pub fixed_blend: Option<f64>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self::classification()
    }
}

impl EncodingConfig {
    pub fn classification() -> Self {
        Self {
            dim: 35,
            sigma0: 0.3,
            tau: 0.3,
            kappa: 10.0,
            eps: 1e-6,
            fourier_l: 12,
            alpha: 100.0,
            beta: 1000.0,
            mode: EncodingMode::AdaptiveOnly,
            fixed_sigma: None,
            fixed_blend: None,
        }
    }

    pub fn segmentation() -> Self {
        Self {
            dim: 144,
            mode: EncodingMode::Hybrid,
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidConfig(format!("dim must be >= 3, got {}", self.dim)));
        }
        let positive = [
            ("sigma0", self.sigma0),
            ("kappa", self.kappa),
            ("eps", self.eps),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidConfig("tau must be finite".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if let Some(s) = self.fixed_sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("fixed sigma must be positive, got {s}")));
            }
        }
        if let Some(b) = self.fixed_blend {
            if !b.is_finite() {
                return Err(Error::InvalidConfig("fixed blend must be finite".into()));
            }
        }
        if self.mode == EncodingMode::Hybrid {
            if self.fourier_l < 1 {
                return Err(Error::InvalidConfig("hybrid mode needs fourier_l >= 1".into()));
            }
            self.split(self.dim)?;
        }
        Ok(())
    }

    pub fn fourier_dims(&self) -> usize {
        match self.mode {
            EncodingMode::AdaptiveOnly => 0,
            EncodingMode::Hybrid => 6 * self.fourier_l,
        }
    }

    /// (Fourier, adaptive) channel counts for a code of the given width.
    /// The Fourier block keeps its size; the adaptive block absorbs the rest.
    pub fn split(&self, width: usize) -> Result<(usize, usize)> {
        let fourier = self.fourier_dims();
        if fourier >= width {
            return Err(Error::SplitMismatch {
                fourier,
                adaptive: 0,
                dim: width,
            });
        }
        Ok((fourier, width - fourier))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    pub sigma_a: f64,
    pub lambda: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bandwidth and blend for one cloud, honoring any ablation overrides.
pub fn adaptive_params(stats: &DispersionStats, cfg: &EncodingConfig) -> AdaptiveParams {
    let sigma_g = stats.sigma_g;
    AdaptiveParams {
        sigma_a: cfg.fixed_sigma.unwrap_or(cfg.sigma0 * (1.0 + sigma_g)),
        lambda: cfg
            .fixed_blend
            .unwrap_or_else(|| sigmoid((sigma_g - cfg.tau) * cfg.kappa)),
    }
}

/// Anchor locations shared by all three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    values: Vec<f64>,
}

impl AnchorGrid {
    /// `m` equally spaced anchors on [-1, 1]; a single anchor sits at 0.
    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1, "anchor grid needs at least one anchor");
        if m == 1 {
            return Self { values: vec![0.0] };
        }
        let step = 2.0 / (m - 1) as f64;
        let values = (0..m)
            .map(|i| {
                // mirror the upper half so the grid is exactly symmetric
                let j = m - 1 - i;
                if i == j {
                    0.0
                } else if i < j {
                    -1.0 + i as f64 * step
                } else {
                    1.0 - j as f64 * step
                }
            })
            .collect();
        Self { values }
    }

    /// Smallest grid whose 3M channels cover `width`.
    pub fn for_width(width: usize) -> Self {
        Self::uniform(width.div_ceil(3).max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-anchor constants in scaled units. Uniform spacing lets the cosine
/// use the angle-addition identity and the Gaussian a multiplicative
/// recurrence outward from the nearest anchor, so a coordinate costs a
/// constant number of transcendentals instead of one per anchor.
struct AxisKernel {
    anchors: Vec<f64>,
    cos_b: Vec<f64>,
    sin_b: Vec<f64>,
    delta: f64,
    /// exp(-delta^2), the ratio between successive recurrence factors.
    q: f64,
}

impl AxisKernel {
    fn new(grid: &AnchorGrid, inv: f64) -> Self {
        let anchors: Vec<f64> = grid.values.iter().map(|v| v * inv).collect();
        let (sin_b, cos_b) = anchors.iter().map(|b| b.sin_cos()).unzip();
        let m = anchors.len();
        let delta = if m > 1 { 2.0 / (m - 1) as f64 * inv } else { 0.0 };
        Self {
            anchors,
            cos_b,
            sin_b,
            delta,
            q: (-delta * delta).exp(),
        }
    }

    /// exp(-(a - b_m)^2 / 2) for every anchor. All recurrence exponents are
    /// non-positive, so values only underflow where the true value does.
    fn gaussians(&self, a: f64, g: &mut [f64]) {
        let m = g.len();
        if m == 1 {
            let d = a - self.anchors[0];
            g[0] = (-0.5 * d * d).exp();
            return;
        }
        let peak = (((a - self.anchors[0]) / self.delta).round().max(0.0) as usize).min(m - 1);
        let d = a - self.anchors[peak];
        g[peak] = (-0.5 * d * d).exp();
        let half = 0.5 * self.delta * self.delta;
        let mut ratio = (self.delta * d - half).exp();
        for i in peak + 1..m {
            g[i] = g[i - 1] * ratio;
            ratio *= self.q;
        }
        let mut ratio = (-self.delta * d - half).exp();
        for i in (0..peak).rev() {
            g[i] = g[i + 1] * ratio;
            ratio *= self.q;
        }
    }

    /// Blended responses of scaled coordinate `a` against every anchor.
    fn responses(&self, a: f64, lambda: f64, out: &mut [f64]) {
        if lambda != 0.0 {
            self.gaussians(a, out);
        }
        if lambda == 1.0 {
            return;
        }
        let (sin_a, cos_a) = a.sin_cos();
        for (i, o) in out.iter_mut().enumerate() {
            let cos = (cos_a * self.cos_b[i] + sin_a * self.sin_b[i]).clamp(-1.0, 1.0);
            *o = if lambda == 0.0 { cos } else { cos + lambda * (*o - cos) };
        }
    }
}

fn adaptive_into(
    rel: &[Point3],
    params: &AdaptiveParams,
    grid: &AnchorGrid,
    out: &mut Array2<f64>,
    offset: usize,
    width: usize,
    eps: f64,
) {
    let inv = 1.0 / (params.sigma_a + eps);
    let kernel = AxisKernel::new(grid, inv);
    let m = grid.len();
    let mut buf = vec![0.0; m];
    for (r, p) in rel.iter().enumerate() {
        let mut row = out.row_mut(r);
        for (axis, &x) in p.iter().enumerate() {
            let start = axis * m;
            if start >= width {
                break;
            }
            let take = m.min(width - start);
            kernel.responses(x * inv, params.lambda, &mut buf);
            for (c, v) in buf[..take].iter().enumerate() {
                row[offset + start + c] = *v;
            }
        }
    }
}

/// Adaptive Gaussian/cosine response of each relative coordinate against
/// every anchor, keeping the first `out_dim` of the 3M channels.
pub fn adaptive_encode(
    rel: &[Point3],
    params: &AdaptiveParams,
    grid: &AnchorGrid,
    out_dim: usize,
    eps: f64,
) -> Result<Array2<f64>> {
    let capacity = 3 * grid.len();
    if out_dim > capacity {
        return Err(Error::DimOverflow {
            requested: out_dim,
            capacity,
        });
    }
    let mut out = Array2::zeros((rel.len(), out_dim));
    adaptive_into(rel, params, grid, &mut out, 0, out_dim, eps);
    Ok(out)
}

/// Per-frequency multipliers `beta / alpha^(j/L)` for j = 1..=L.
pub fn fourier_scales(cfg: &EncodingConfig) -> Vec<f64> {
    let l = cfg.fourier_l as f64;
    (1..=cfg.fourier_l)
        .map(|j| cfg.beta / cfg.alpha.powf(j as f64 / l))
        .collect()
}

fn fourier_into(rel: &[Point3], scales: &[f64], out: &mut Array2<f64>) {
    let per_axis = 2 * scales.len();
    for (r, p) in rel.iter().enumerate() {
        for axis in 0..3 {
            for (j, s) in scales.iter().enumerate() {
                let (sin, cos) = (s * p[axis]).sin_cos();
                out[[r, axis * per_axis + 2 * j]] = sin;
                out[[r, axis * per_axis + 2 * j + 1]] = cos;
            }
        }
    }
}

/// Fixed-frequency sin/cos features: per axis `[sin_1, cos_1, .., sin_L, cos_L]`.
pub fn fourier_encode(rel: &[Point3], cfg: &EncodingConfig) -> Result<Array2<f64>> {
    if cfg.fourier_l < 1 {
        return Err(Error::InvalidConfig("fourier_l must be >= 1".into()));
    }
    let scales = fourier_scales(cfg);
    let mut out = Array2::zeros((rel.len(), 6 * cfg.fourier_l));
    fourier_into(rel, &scales, &mut out);
    Ok(out)
}

/// A positional code of fixed width, ready to be applied to many
/// neighborhoods of the same cloud.
#[derive(Debug, Clone)]
pub struct PositionCode {
    params: AdaptiveParams,
    eps: f64,
    grid: AnchorGrid,
    scales: Vec<f64>,
    fourier_width: usize,
    adaptive_width: usize,
}

impl PositionCode {
    pub fn new(cfg: &EncodingConfig, params: AdaptiveParams, width: usize) -> Result<Self> {
        let (fourier_width, adaptive_width) = cfg.split(width)?;
        let scales = if fourier_width > 0 {
            fourier_scales(cfg)
        } else {
            Vec::new()
        };
        Ok(Self {
            params,
            eps: cfg.eps,
            grid: AnchorGrid::for_width(adaptive_width),
            scales,
            fourier_width,
            adaptive_width,
        })
    }

    pub fn width(&self) -> usize {
        self.fourier_width + self.adaptive_width
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn encode(&self, rel: &[Point3]) -> Array2<f64> {
        let mut out = Array2::zeros((rel.len(), self.width()));
        if self.fourier_width > 0 {
            fourier_into(rel, &self.scales, &mut out);
        }
        adaptive_into(
            rel,
            &self.params,
            &self.grid,
            &mut out,
            self.fourier_width,
            self.adaptive_width,
            self.eps,
        );
        out
    }
}

/// Mode-dependent code at the configured width `d`: `[Fourier | adaptive]`
/// in hybrid mode, the adaptive channel alone otherwise.
pub fn hybrid_encode(
    rel: &[Point3],
    params: &AdaptiveParams,
    cfg: &EncodingConfig,
) -> Result<Array2<f64>> {
    Ok(PositionCode::new(cfg, *params, cfg.dim)?.encode(rel))
}

/// `(features + code) * code`, element-wise.
pub fn modulate(features: ArrayView2<'_, f64>, code: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if features.dim() != code.dim() {
        return Err(Error::ShapeMismatch {
            left: features.dim(),
            right: code.dim(),
        });
    }
    Ok(Zip::from(features)
        .and(code)
        .map_collect(|&h, &p| (h + p) * p))
}
