//! Pluggable core tracker and the reference normalized cross-correlation
//! matcher.
//!
//! The matcher's feature map is the per-channel mean-subtracted intensity of
//! the template; correlating it against the search raster at a few template
//! scales yields scored candidate boxes.

use crate::error::{Error, Result};
use crate::frames::{BBox, ColorRaster, ResizeMode};

pub const DEFAULT_SCALES: [f64; 3] = [0.95, 1.0, 1.05];
pub const DEFAULT_K: usize = 8;
pub const DEFAULT_SEARCH_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    /// Confidence in `[0, 1]`.
    pub score: f64,
}

/// Target appearance taken from the first frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    patch: ColorRaster,
    origin_box: BBox,
}

impl Template {
    pub fn from_frame(color: &ColorRaster, gt: &BBox) -> Result<Self> {
        let patch = color.crop(gt, true)?;
        Ok(Template { patch, origin_box: *gt })
    }

    pub fn patch(&self) -> &ColorRaster {
        &self.patch
    }

    pub fn origin_box(&self) -> &BBox {
        &self.origin_box
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchRegion {
    pub window: BBox,
    pub scale: f64,
}

/// The previous box inflated by `scale` about its center and clipped to the
/// frame.
pub fn make_search_region(prev_box: &BBox, frame_w: usize, frame_h: usize, scale: f64) -> Result<SearchRegion> {
    if !(scale > 1.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("search scale must exceed 1, got {scale}")));
    }
    let window = prev_box
        .scale_about_center(scale)?
        .clip_to(frame_w as f64, frame_h as f64)
        .ok_or(Error::OutOfBounds)?;
    Ok(SearchRegion { window, scale })
}

/// Any matcher that proposes scored boxes for a template in a search image.
///
/// Implementations must be pure per call and return boxes in frame
/// coordinates, sorted by non-increasing score. `search_origin` gives the
/// frame position of the search raster's top-left pixel.
pub trait CoreTracker: Send + Sync {
    fn track(&self, template: &Template, search: &ColorRaster, search_origin: &BBox) -> Result<Vec<ScoredBox>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct NccTracker {
    pub scales: Vec<f64>,
    pub k: usize,
}

impl Default for NccTracker {
    fn default() -> Self {
        NccTracker {
            scales: DEFAULT_SCALES.to_vec(),
            k: DEFAULT_K,
        }
    }
}

/// Planar f64 copy of one channel.
fn plane(img: &ColorRaster, c: usize) -> Vec<f64> {
    img.data().iter().map(|p| p[c] as f64).collect()
}

/// Summed-area table with a zero first row/column.
fn integral(values: &[f64], w: usize, h: usize, square: bool) -> Vec<f64> {
    let stride = w + 1;
    let mut out = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let v = values[y * w + x];
            row += if square { v * v } else { v };
            out[(y + 1) * stride + x + 1] = out[y * stride + x + 1] + row;
        }
    }
    out
}

#[inline]
fn window_sum(table: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
    table[(y + h) * stride + x + w] - table[y * stride + x + w] - table[(y + h) * stride + x] + table[y * stride + x]
}

/// Zero-mean normalized cross-correlation of `tmpl` at every placement inside
/// `search`, returned row-major over `(search_w - tw + 1) x (search_h - th + 1)`
/// shifts. Zero-variance windows correlate as 0.
pub fn ncc_map(tmpl: &ColorRaster, search: &ColorRaster) -> Result<(usize, usize, Vec<f64>)> {
    let (tw, th) = tmpl.dims();
    let (sw, sh) = search.dims();
    if tw > sw || th > sh {
        return Err(Error::TemplateTooLarge);
    }
    let nx = sw - tw + 1;
    let ny = sh - th + 1;
    let n = (tw * th) as f64;
    let mut numer = vec![0.0; nx * ny];
    let mut t_energy = 0.0;
    let mut var = vec![0.0; nx * ny];
    for c in 0..3 {
        let t = plane(tmpl, c);
        let mean = t.iter().sum::<f64>() / n;
        let t: Vec<f64> = t.iter().map(|v| v - mean).collect();
        t_energy += t.iter().map(|v| v * v).sum::<f64>();

        let s = plane(search, c);
        // Template is zero-mean, so correlating against raw search values
        // equals correlating against the window-mean-subtracted ones.
        for i in 0..th {
            for j in 0..tw {
                let tv = t[i * tw + j];
                if tv == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    let src = &s[(y + i) * sw + j..(y + i) * sw + j + nx];
                    let dst = &mut numer[y * nx..(y + 1) * nx];
                    for (d, &sv) in dst.iter_mut().zip(src) {
                        *d += tv * sv;
                    }
                }
            }
        }

        let sum = integral(&s, sw, sh, false);
        let sq = integral(&s, sw, sh, true);
        for y in 0..ny {
            for x in 0..nx {
                let a = window_sum(&sum, sw + 1, x, y, tw, th);
                let b = window_sum(&sq, sw + 1, x, y, tw, th);
                var[y * nx + x] += (b - a * a / n).max(0.0);
            }
        }
    }
    let out = numer
        .iter()
        .zip(&var)
        .map(|(&num, &v)| {
            let den = (t_energy * v).sqrt();
            if t_energy <= 1e-9 || v <= 1e-9 || den == 0.0 {
                0.0
            } else {
                (num / den).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Ok((nx, ny, out))
}

impl NccTracker {
    pub fn new(scales: Vec<f64>, k: usize) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("core_scales must be positive and non-empty".into()));
        }
        if k == 0 {
            return Err(Error::Config("core_k must be at least 1".into()));
        }
        Ok(NccTracker { scales, k })
    }

    fn scaled_template(&self, template: &Template, scale: f64) -> Result<ColorRaster> {
        let patch = template.patch();
        if scale == 1.0 {
            return Ok(patch.clone());
        }
        let w = ((patch.width() as f64 * scale).round() as usize).max(1);
        let h = ((patch.height() as f64 * scale).round() as usize).max(1);
        patch.resize(w, h, ResizeMode::Bilinear)
    }
}

impl CoreTracker for NccTracker {
    fn track(&self, template: &Template, search: &ColorRaster, search_origin: &BBox) -> Result<Vec<ScoredBox>> {
        // (score, scale index, y, x, w, h)
        let mut all: Vec<(f64, usize, usize, usize, usize, usize)> = Vec::new();
        for (si, &scale) in self.scales.iter().enumerate() {
            let tmpl = self.scaled_template(template, scale)?;
            let (nx, ny, map) = match ncc_map(&tmpl, search) {
                Ok(r) => r,
                Err(Error::TemplateTooLarge) => continue,
                Err(e) => return Err(e),
            };
            for y in 0..ny {
                for x in 0..nx {
                    all.push(((map[y * nx + x] + 1.0) / 2.0, si, y, x, tmpl.width(), tmpl.height()));
                }
            }
        }
        if all.is_empty() {
            return Err(Error::TemplateTooLarge);
        }
        let k = self.k.min(all.len());
        let order = |a: &(f64, usize, usize, usize, usize, usize), b: &(f64, usize, usize, usize, usize, usize)| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        };
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, order);
            all.truncate(k);
        }
        all.sort_by(order);
        all.into_iter()
            .map(|(score, _, y, x, w, h)| {
                Ok(ScoredBox {
                    bbox: BBox::new(
                        search_origin.left() + x as f64,
                        search_origin.top() + y as f64,
                        w as f64,
                        h as f64,
                    )?,
                    score,
                })
            })
            .collect()
    }
}
