//! Occlusion saliency: blank a square window at each grid position, re-extract
//! features, and record how the predicted interest moves.
//!
//! A negative delta means the blanked region carried interest; the overlay
//! paints those cells red and the positive ones blue.

use std::path::Path;

use image::{imageops, DynamicImage, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub window_px: u32,
    pub stride_px: u32,
    pub image_size_px: u32,
    pub blank_value: u8,
    /// Upper bound on concurrent extractor calls.
    pub parallelism: usize,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            window_px: 16,
            stride_px: 16,
            image_size_px: 224,
            blank_value: 128,
            parallelism: 8,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_px == 0 || self.window_px > self.image_size_px {
            return Err(Error::invalid(format!(
                "window of {} px does not fit a {} px image",
                self.window_px, self.image_size_px
            )));
        }
        if self.stride_px == 0 {
            return Err(Error::invalid("stride must be at least one pixel"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be at least one"));
        }
        Ok(())
    }

    /// Number of window positions along each axis.
    pub fn grid_len(&self) -> usize {
        ((self.image_size_px - self.window_px) / self.stride_px + 1) as usize
    }
}

/// Interest deltas on the occlusion grid, row-major from the top-left window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap<T> {
    pub rows: usize,
    pub cols: usize,
    pub base_interest: T,
    pub deltas: Vec<Vec<T>>,
    pub config: OcclusionConfig,
}

impl<T: Scalar> SaliencyMap<T> {
    pub fn get(&self, row: usize, col: usize) -> T {
        self.deltas[row][col]
    }

    pub fn max_abs(&self) -> T {
        self.deltas
            .iter()
            .flatten()
            .fold(T::zero(), |acc, d| acc.max(d.abs()))
    }

    /// Cell holding the largest `|delta|`; the first one in row-major order on ties.
    pub fn extreme_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_abs = T::neg_infinity();
        for (r, row) in self.deltas.iter().enumerate() {
            for (c, d) in row.iter().enumerate() {
                if d.abs() > best_abs {
                    best_abs = d.abs();
                    best = (r, c);
                }
            }
        }
        best
    }
}

/// Feature extraction for one in-memory image.
///
/// Errors are plain strings; [`occlusion_map`] attaches the grid cell.
pub trait Extractor: Sync {
    fn extract(&self, image: &RgbImage) -> std::result::Result<Vec<f64>, String>;
}

impl<F> Extractor for F
where
    F: Fn(&RgbImage) -> std::result::Result<Vec<f64>, String> + Sync,
{
    fn extract(&self, image: &RgbImage) -> std::result::Result<Vec<f64>, String> {
        self(image)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<DynamicImage> {
    Ok(image::open(path)?)
}

/// Decodes and resizes to the square working resolution of `cfg`.
pub fn prepare_image(image: &DynamicImage, cfg: &OcclusionConfig) -> RgbImage {
    let rgb = image.to_rgb8();
    let side = cfg.image_size_px;
    if rgb.dimensions() == (side, side) {
        rgb
    } else {
        imageops::resize(&rgb, side, side, imageops::FilterType::Triangle)
    }
}

/// Copy of `image` with the window at grid cell `(row, col)` filled with the blank value.
pub fn occlude(image: &RgbImage, row: usize, col: usize, cfg: &OcclusionConfig) -> RgbImage {
    let mut out = image.clone();
    let y0 = row as u32 * cfg.stride_px;
    let x0 = col as u32 * cfg.stride_px;
    let blank = Rgb([cfg.blank_value; 3]);
    for y in y0..(y0 + cfg.window_px).min(out.height()) {
        for x in x0..(x0 + cfg.window_px).min(out.width()) {
            out.put_pixel(x, y, blank);
        }
    }
    out
}

fn predict_from<T: Scalar>(
    model: &GpModel<T>,
    extractor: &dyn Extractor,
    image: &RgbImage,
    cell: Option<(usize, usize)>,
) -> Result<T> {
    let features = extractor
        .extract(image)
        .map_err(|reason| Error::Extractor { cell, reason })?;
    let features: Vec<T> = features.into_iter().map(T::lit).collect();
    Ok(model.predict(&features)?.mean)
}

/// Runs the full sweep: one baseline extraction plus one per grid cell.
pub fn occlusion_map<T: Scalar>(
    image: &DynamicImage,
    extractor: &dyn Extractor,
    model: &GpModel<T>,
    cfg: &OcclusionConfig,
) -> Result<SaliencyMap<T>> {
    cfg.validate()?;
    let base = prepare_image(image, cfg);
    let base_interest = predict_from(model, extractor, &base, None)?;
    let n = cfg.grid_len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start the sweep pool: {e}")))?;
    let flat: Vec<T> = pool.install(|| {
        (0..n * n)
            .into_par_iter()
            .map(|k| {
                let cell = (k / n, k % n);
                let occluded = occlude(&base, cell.0, cell.1, cfg);
                Ok(predict_from(model, extractor, &occluded, Some(cell))? - base_interest)
            })
            .collect::<Result<_>>()
    })?;

    Ok(SaliencyMap {
        rows: n,
        cols: n,
        base_interest,
        deltas: flat.chunks(n).map(<[T]>::to_vec).collect(),
        config: *cfg,
    })
}

/// Peak overlay opacity, reached where `|delta| = max |delta|`.
const MAX_ALPHA: f64 = 0.6;
/// Normalized deltas are snapped to this many steps per unit before blending.
const LEVELS: f64 = 65536.0;

/// Blends a red/blue heat overlay into `image`.
///
/// The grid is normalized by its largest `|delta|` and bilinearly
/// interpolated between window centers, clamping beyond the outermost ones.
pub fn render_overlay<T: Scalar>(map: &SaliencyMap<T>, image: &RgbImage) -> Result<RgbImage> {
    let cfg = &map.config;
    let side = cfg.image_size_px;
    if image.dimensions() != (side, side) {
        return Err(Error::invalid(format!(
            "map expects a {side}x{side} image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    if map.rows != cfg.grid_len()
        || map.cols != cfg.grid_len()
        || map.deltas.len() != map.rows
        || map.deltas.iter().any(|r| r.len() != map.cols)
    {
        return Err(Error::invalid(
            "delta grid does not match its configuration",
        ));
    }
    let max_abs = map.max_abs().as_f64();
    if max_abs == 0.0 {
        return Ok(image.clone());
    }
    if !max_abs.is_finite() {
        return Err(Error::NumericalDomain("non-finite saliency delta".into()));
    }

    let normalized: Vec<Vec<f64>> = map
        .deltas
        .iter()
        .map(|row| {
            row.iter()
                .map(|d| (d.as_f64() / max_abs * LEVELS).round() / LEVELS)
                .collect()
        })
        .collect();

    let stride = cfg.stride_px as f64;
    let first_center = cfg.window_px as f64 / 2.0 - 0.5;
    let axis = |p: u32, len: usize| -> (usize, usize, f64) {
        let g = ((p as f64 - first_center) / stride).clamp(0.0, (len - 1) as f64);
        let lo = g.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, g - lo as f64)
    };

    let mut out = image.clone();
    for (x, y, pixel) in out.enumerate_pixels_mut() {
        let (r0, r1, fy) = axis(y, map.rows);
        let (c0, c1, fx) = axis(x, map.cols);
        let top = normalized[r0][c0] * (1.0 - fx) + normalized[r0][c1] * fx;
        let bottom = normalized[r1][c0] * (1.0 - fx) + normalized[r1][c1] * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        if v == 0.0 {
            continue;
        }
        let alpha = MAX_ALPHA * v.abs().min(1.0);
        let tint = if v < 0.0 {
            [255.0, 0.0, 0.0]
        } else {
            [0.0, 0.0, 255.0]
        };
        for (channel, t) in pixel.0.iter_mut().zip(tint) {
            *channel = (*channel as f64 * (1.0 - alpha) + t * alpha).round() as u8;
        }
    }
    Ok(out)
}
