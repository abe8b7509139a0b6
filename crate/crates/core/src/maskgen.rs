//! Depth-driven background masking of the search region.
//!
//! The keep-mask `M` retains pixels whose depth lies within a factor of two
//! of the previous mean target depth, plus a window around the previous box.
//! Everything else is painted with two colors chosen opposite the target hue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frames::{
    hsv_to_rgb, rgb_to_hsv, wrap_degrees, BBox, ColorRaster, DepthRaster, HsvColor, MaskRaster, Raster, Rgb,
};

/// Number of histogram bins used when estimating the target depth.
pub const DEPTH_BINS: usize = 256;

/// Default side of the square tiles the two mask colors are assigned to;
/// 1 colors every masked pixel independently.
pub const DEFAULT_CELL: usize = 1;

/// Half-extent of the keep-window around the previous box, as a fraction of
/// the box width/height.
pub const KEEP_WINDOW: f64 = 0.75;

pub const MASK_SATURATION: f64 = 1.0;
pub const MASK_VALUE: f64 = 0.7;

/// Otsu's threshold over a histogram.
///
/// Returns `t` such that bins `[0, t)` form the lower class and `[t, n)` the
/// upper one, maximizing the between-class variance. Ties resolve to the
/// smallest `t`.
pub fn otsu_threshold(histogram: &[u64]) -> Result<usize> {
    if histogram.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let total: f64 = histogram.iter().map(|&c| c as f64).sum();
    let total_sum: f64 = histogram.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut best_t = 0;
    let mut best_var = f64::NEG_INFINITY;
    let (mut w0, mut s0) = (0.0f64, 0.0f64);
    for t in 1..histogram.len() {
        let c = histogram[t - 1] as f64;
        w0 += c;
        s0 += (t - 1) as f64 * c;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let s1 = total_sum - s0;
        let diff = s0 / w0 - s1 / w1;
        let var = w0 * w1 * diff * diff;
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    Ok(best_t)
}

/// Mean depth (meters) of the nearer Otsu class among the valid depths inside
/// `bbox`. Falls back to the plain mean when the depths do not split into two
/// classes.
pub fn mean_target_depth(depth: &DepthRaster, bbox: &BBox) -> Result<f64> {
    let rect = bbox.pixel_rect();
    let rect = rect
        .intersect(&crate::frames::PixelRect::of_raster(depth.width(), depth.height()))
        .ok_or(Error::OutOfBounds)?;
    let mut values = Vec::with_capacity((rect.width() * rect.height()) as usize);
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            if let Some(m) = depth.meters(x as usize, y as usize) {
                values.push(m);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::MissingDepth);
    }
    let plain_mean = values.iter().sum::<f64>() / values.len() as f64;
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if max <= min {
        return Ok(plain_mean);
    }
    let bin_of = |v: f64| (((v - min) / (max - min) * DEPTH_BINS as f64) as usize).min(DEPTH_BINS - 1);
    let mut hist = vec![0u64; DEPTH_BINS];
    for &v in &values {
        hist[bin_of(v)] += 1;
    }
    let t = match otsu_threshold(&hist) {
        Ok(t) => t,
        Err(Error::DegenerateHistogram) => return Ok(plain_mean),
        Err(e) => return Err(e),
    };
    let (sum, n) = values
        .iter()
        .filter(|&&v| bin_of(v) < t)
        .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    Ok(sum / n as f64)
}

/// Depth-range test of the keep-mask; missing depth never passes.
#[inline]
pub fn depth_in_range(depth_mm: u16, dt_prev: f64) -> bool {
    if depth_mm == 0 {
        return false;
    }
    let d = depth_mm as f64 / 1000.0;
    dt_prev / 2.0 < d && d < 2.0 * dt_prev
}

/// Builds the keep-mask over `depth`.
///
/// `prev_box` is expressed in the raster's own pixel coordinates; pixel
/// `(x, y)` is evaluated at its center `(x + 0.5, y + 0.5)`.
pub fn binary_mask(depth: &DepthRaster, dt_prev: f64, prev_box: &BBox) -> Result<MaskRaster> {
    if !(dt_prev > 0.0) {
        return Err(Error::invalid(format!(
            "previous target depth must be positive, got {dt_prev}"
        )));
    }
    let (cx, cy) = prev_box.center();
    let half_w = KEEP_WINDOW * prev_box.width();
    let half_h = KEEP_WINDOW * prev_box.height();
    Raster::from_fn(depth.width(), depth.height(), |x, y| {
        let near_box = ((x as f64 + 0.5) - cx).abs() < half_w && ((y as f64 + 0.5) - cy).abs() < half_h;
        (near_box || depth_in_range(depth.get(x, y), dt_prev)) as u8
    })
}

/// The two background colors and the target hue they were derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskColors {
    pub c1: Rgb,
    pub c2: Rgb,
    pub source_hue: f64,
}

/// Two fully saturated colors at 70% value whose hues sit 120 and 240
/// degrees away from the target's average hue.
pub fn select_mask_colors(avg: HsvColor) -> MaskColors {
    let hue = wrap_degrees(avg.h);
    let [c1, c2] = mask_hsv(hue);
    MaskColors {
        c1: hsv_to_rgb(c1),
        c2: hsv_to_rgb(c2),
        source_hue: hue,
    }
}

/// The mask colors before 8-bit quantization.
pub fn mask_hsv(target_hue: f64) -> [HsvColor; 2] {
    let hue = wrap_degrees(target_hue);
    [120.0, 240.0].map(|offset| HsvColor::new(hue + offset, MASK_SATURATION, MASK_VALUE))
}

/// Average color inside `bbox`: saturation-weighted circular mean of hue and
/// arithmetic means of saturation and value. A box without chroma reports
/// hue 0.
pub fn average_target_color(color: &ColorRaster, bbox: &BBox) -> Result<HsvColor> {
    let patch = color.crop(bbox, true)?;
    let (mut sx, mut sy, mut ss, mut sv) = (0.0, 0.0, 0.0, 0.0);
    for &px in patch.data() {
        let hsv = rgb_to_hsv(px);
        let rad = hsv.h.to_radians();
        sx += hsv.s * rad.cos();
        sy += hsv.s * rad.sin();
        ss += hsv.s;
        sv += hsv.v;
    }
    let n = patch.data().len() as f64;
    let hue = if sx.hypot(sy) <= 1e-12 * n {
        0.0
    } else {
        sy.atan2(sx).to_degrees()
    };
    Ok(HsvColor::new(hue, ss / n, sv / n))
}

/// The color image painted over masked pixels: `cell` x `cell` tiles, each
/// assigned `c1` or `c2` by a seeded coin flipped in row-major tile order,
/// zero wherever `m` keeps the pixel.
pub fn color_mask(m: &MaskRaster, colors: &MaskColors, cell: usize, seed: u64) -> Result<ColorRaster> {
    if cell == 0 {
        return Err(Error::invalid("mask cell size must be at least 1"));
    }
    let tiles_x = m.width().div_ceil(cell);
    let tiles_y = m.height().div_ceil(cell);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tile_colors: Vec<Rgb> = (0..tiles_x * tiles_y)
        .map(|_| if rng.random::<bool>() { colors.c1 } else { colors.c2 })
        .collect();
    Raster::from_fn(m.width(), m.height(), |x, y| {
        if m.get(x, y) != 0 {
            [0, 0, 0]
        } else {
            tile_colors[(y / cell) * tiles_x + x / cell]
        }
    })
}

/// Single-color variant of [`color_mask`].
pub fn solid_mask(m: &MaskRaster, color: Rgb) -> ColorRaster {
    m.map(|&keep| if keep != 0 { [0, 0, 0] } else { color })
}

/// Keep-mask and its color fill for one search region.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub m: MaskRaster,
    pub mc: ColorRaster,
}

impl MaskPair {
    pub fn new(m: MaskRaster, mc: ColorRaster) -> Result<Self> {
        if !m.same_dims(&mc) {
            return Err(Error::DimensionMismatch("mask and color mask differ in size".into()));
        }
        Ok(MaskPair { m, mc })
    }
}

/// Replaces every masked pixel of `xc` with the color mask.
pub fn apply_mask(xc: &ColorRaster, pair: &MaskPair) -> Result<ColorRaster> {
    if !xc.same_dims(&pair.m) || !xc.same_dims(&pair.mc) {
        return Err(Error::DimensionMismatch(format!(
            "search image {}x{} vs mask {}x{}",
            xc.width(),
            xc.height(),
            pair.m.width(),
            pair.m.height()
        )));
    }
    let data = xc
        .data()
        .iter()
        .zip(pair.m.data())
        .zip(pair.mc.data())
        .map(|((&keep_px, &keep), &fill)| if keep != 0 { keep_px } else { fill })
        .collect();
    Raster::new(xc.width(), xc.height(), data)
}
