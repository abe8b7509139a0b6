//! Raster value types, boxes, HSV color math and the on-disk sequence format.
//!
//! A sequence directory holds `color/%08d.png` (8-bit RGB), `depth/%08d.png`
//! (16-bit grayscale, millimeters, 0 = missing), `groundtruth.txt` with one
//! `left,top,w,h` line per frame and an optional `tags.txt` with one category
//! token per frame.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb as ImgRgb};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// A raster sample that can be interpolated channel by channel.
pub trait Pixel: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    const CHANNELS: usize;
    fn channel(&self, c: usize) -> f64;
    /// Builds a sample from real-valued channels, rounding and saturating
    /// integer samples.
    fn from_channels<F: FnMut(usize) -> f64>(f: F) -> Self;
}

/// Round half up, with a small guard so that values such as `0.7 * 255`
/// land on the intended side of the .5 boundary.
pub(crate) fn round_half_up(v: f64) -> f64 {
    (v + 0.5 + 1e-9).floor()
}

impl Pixel for Rgb {
    const CHANNELS: usize = 3;
    fn channel(&self, c: usize) -> f64 {
        self[c] as f64
    }
    fn from_channels<F: FnMut(usize) -> f64>(mut f: F) -> Self {
        let mut out = [0u8; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = round_half_up(f(c)).clamp(0.0, 255.0) as u8;
        }
        out
    }
}

impl Pixel for u8 {
    const CHANNELS: usize = 1;
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }
    fn from_channels<F: FnMut(usize) -> f64>(mut f: F) -> Self {
        round_half_up(f(0)).clamp(0.0, 255.0) as u8
    }
}

impl Pixel for u16 {
    const CHANNELS: usize = 1;
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }
    fn from_channels<F: FnMut(usize) -> f64>(mut f: F) -> Self {
        round_half_up(f(0)).clamp(0.0, u16::MAX as f64) as u16
    }
}

impl Pixel for f64 {
    const CHANNELS: usize = 1;
    fn channel(&self, _c: usize) -> f64 {
        *self
    }
    fn from_channels<F: FnMut(usize) -> f64>(mut f: F) -> Self {
        f(0)
    }
}

/// Row-major 2-D raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// 8-bit RGB raster.
pub type ColorRaster = Raster<Rgb>;
/// Depth raster in millimeters; 0 marks a missing measurement.
pub type DepthRaster = Raster<u16>;
/// Binary raster, 1 = keep, 0 = background.
pub type MaskRaster = Raster<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

impl<P: Pixel> Raster<P> {
    pub fn new(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} raster needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: P) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[P] {
        &self.data
    }

    pub fn into_data(self) -> Vec<P> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: P) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_dims<Q>(&self, other: &Raster<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Integer-aligned crop of `bbox` (left/top rounded down, right/bottom
    /// rounded up). With `clamp` the result is clipped to the raster;
    /// otherwise it keeps the full box extent and zero-fills the part that
    /// falls outside.
    pub fn crop(&self, bbox: &BBox, clamp: bool) -> Result<Self> {
        self.crop_rect(bbox.pixel_rect(), clamp)
    }

    pub fn crop_rect(&self, rect: PixelRect, clamp: bool) -> Result<Self> {
        let bounds = PixelRect::of_raster(self.width, self.height);
        let inside = rect.intersect(&bounds).ok_or(Error::OutOfBounds)?;
        let target = if clamp { inside } else { rect };
        let (w, h) = (target.width() as usize, target.height() as usize);
        let mut out = vec![P::default(); w * h];
        for y in inside.y0..inside.y1 {
            let src = (y as usize) * self.width;
            let dst = ((y - target.y0) as usize) * w;
            for x in inside.x0..inside.x1 {
                out[dst + (x - target.x0) as usize] = self.data[src + x as usize];
            }
        }
        Self::new(w, h, out)
    }

    /// Resamples to `out_w` x `out_h`. Sample centers are aligned
    /// (`src = (dst + 0.5) * in / out - 0.5`), so a same-size resize is the
    /// identity in both modes.
    pub fn resize(&self, out_w: usize, out_h: usize, mode: ResizeMode) -> Result<Self> {
        if out_w == 0 || out_h == 0 {
            return Err(Error::invalid("resize target must be positive"));
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let mut data = Vec::with_capacity(out_w * out_h);
        match mode {
            ResizeMode::Nearest => {
                for oy in 0..out_h {
                    let y = (((oy as f64 + 0.5) * sy) as usize).min(self.height - 1);
                    for ox in 0..out_w {
                        let x = (((ox as f64 + 0.5) * sx) as usize).min(self.width - 1);
                        data.push(self.get(x, y));
                    }
                }
            }
            ResizeMode::Bilinear => {
                let max_x = (self.width - 1) as f64;
                let max_y = (self.height - 1) as f64;
                for oy in 0..out_h {
                    let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
                    let y0 = fy.floor() as usize;
                    let y1 = (y0 + 1).min(self.height - 1);
                    let ty = fy - y0 as f64;
                    for ox in 0..out_w {
                        let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                        let x0 = fx.floor() as usize;
                        let x1 = (x0 + 1).min(self.width - 1);
                        let tx = fx - x0 as f64;
                        let (p00, p10) = (self.get(x0, y0), self.get(x1, y0));
                        let (p01, p11) = (self.get(x0, y1), self.get(x1, y1));
                        data.push(P::from_channels(|c| {
                            let top = p00.channel(c) * (1.0 - tx) + p10.channel(c) * tx;
                            let bottom = p01.channel(c) * (1.0 - tx) + p11.channel(c) * tx;
                            top * (1.0 - ty) + bottom * ty
                        }));
                    }
                }
            }
        }
        Self::new(out_w, out_h, data)
    }

    pub fn map<Q: Pixel>(&self, f: impl FnMut(&P) -> Q) -> Raster<Q> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Raster<u16> {
    /// Depth at `(x, y)` in meters, `None` when missing.
    pub fn meters(&self, x: usize, y: usize) -> Option<f64> {
        match self.get(x, y) {
            0 => None,
            mm => Some(mm as f64 / 1000.0),
        }
    }

    /// Largest valid depth in meters.
    pub fn max_meters(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&d| d > 0)
            .max()
            .map(|d| d as f64 / 1000.0)
    }
}

/// Half-open integer rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn of_raster(width: usize, height: usize) -> Self {
        PixelRect {
            x0: 0,
            y0: 0,
            x1: width as i64,
            y1: height as i64,
        }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let r = PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }

    pub fn contains_pixel(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn to_bbox(&self) -> BBox {
        BBox {
            left: self.x0 as f64,
            top: self.y0 as f64,
            w: self.width() as f64,
            h: self.height() as f64,
        }
    }
}

/// Axis-aligned box in continuous frame coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, w: f64, h: f64) -> Result<Self> {
        if !(left.is_finite() && top.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!("box extents must be positive, got {w}x{h}")));
        }
        Ok(BBox { left, top, w, h })
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.left + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.w / 2.0, self.top + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            left: self.left + dx,
            top: self.top + dy,
            ..*self
        }
    }

    /// Scales both extents by `factor` about the center.
    pub fn scale_about_center(&self, factor: f64) -> Result<BBox> {
        let (cx, cy) = self.center();
        BBox::from_center(cx, cy, self.w * factor, self.h * factor)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.left.max(other.left);
        let ih = self.bottom().min(other.bottom()) - self.top.max(other.top);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Smallest box containing both.
    pub fn union_bounds(&self, other: &BBox) -> BBox {
        let x0 = self.left.min(other.left);
        let y0 = self.top.min(other.top);
        BBox {
            left: x0,
            top: y0,
            w: self.right().max(other.right()) - x0,
            h: self.bottom().max(other.bottom()) - y0,
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.left >= self.left
            && other.top >= self.top
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Intersection with `[0, width] x [0, height]`, `None` when empty.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<BBox> {
        self.clip_to_box(&BBox {
            left: 0.0,
            top: 0.0,
            w: width,
            h: height,
        })
    }

    pub fn clip_to_box(&self, bounds: &BBox) -> Option<BBox> {
        let x0 = self.left.max(bounds.left);
        let y0 = self.top.max(bounds.top);
        let x1 = self.right().min(bounds.right());
        let y1 = self.bottom().min(bounds.bottom());
        (x1 > x0 && y1 > y0).then_some(BBox {
            left: x0,
            top: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Outward-rounded pixel rectangle covering the box.
    pub fn pixel_rect(&self) -> PixelRect {
        PixelRect {
            x0: self.left.floor() as i64,
            y0: self.top.floor() as i64,
            x1: self.right().ceil() as i64,
            y1: self.bottom().ceil() as i64,
        }
    }
}

impl std::str::FromStr for BBox {
    type Err = Error;

    /// Parses `left,top,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("expected `left,top,w,h`, got `{s}`")));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{p}` in `{s}`")))?;
        }
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.left, self.top, self.w, self.h)
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsvColor {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl HsvColor {
    /// Builds a color, wrapping the hue into `[0, 360)` and clamping S and V.
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        HsvColor {
            h: wrap_degrees(h),
            s: s.clamp(0.0, 1.0),
            v: v.clamp(0.0, 1.0),
        }
    }
}

pub fn wrap_degrees(h: f64) -> f64 {
    let w = h.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Shortest angular distance between two hues, in degrees.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Hexcone RGB to HSV. Achromatic colors get hue 0.
pub fn rgb_to_hsv(rgb: Rgb) -> HsvColor {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    HsvColor::new(h, s, max)
}

/// Hexcone HSV to RGB, channels rounded half up.
pub fn hsv_to_rgb(hsv: HsvColor) -> Rgb {
    let h = wrap_degrees(hsv.h) / 60.0;
    let c = hsv.v * hsv.s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = hsv.v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    <Rgb as Pixel>::from_channels(|i| [r + m, g + m, b + m][i] * 255.0)
}

/// One paired color/depth capture.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame {
    pub color: ColorRaster,
    pub depth: DepthRaster,
    pub index: usize,
}

impl RgbdFrame {
    pub fn new(color: ColorRaster, depth: DepthRaster, index: usize) -> Result<Self> {
        if !color.same_dims(&depth) {
            return Err(Error::Frame {
                frame: index,
                message: format!(
                    "color is {}x{} but depth is {}x{}",
                    color.width(),
                    color.height(),
                    depth.width(),
                    depth.height()
                ),
            });
        }
        if index == 0 {
            return Err(Error::invalid("frame indices start at 1"));
        }
        Ok(RgbdFrame { color, depth, index })
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }
}

/// Frames with their per-frame ground truth and optional category tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<RgbdFrame>,
    pub ground_truth: Vec<BBox>,
    pub tags: Option<Vec<String>>,
}

fn frame_file(dir: &Path, sub: &str, index: usize) -> PathBuf {
    dir.join(sub).join(format!("{index:08}.png"))
}

/// Reads `groundtruth.txt`: one `left,top,w,h` line per frame. Blank lines
/// are skipped.
pub fn read_ground_truth(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.parse::<BBox>().map_err(|e| Error::Frame {
                frame: i + 1,
                message: format!("malformed ground-truth line: {e}"),
            })
        })
        .collect()
}

pub fn read_tags(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn list_frame_indices(dir: &Path) -> Result<Vec<usize>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.len() == 8 && stem.bytes().all(|b| b.is_ascii_digit()) {
                indices.push(stem.parse::<usize>().expect("eight ascii digits"));
            }
        }
    }
    indices.sort_unstable();
    Ok(indices)
}

fn read_color(path: &Path, frame: usize) -> Result<ColorRaster> {
    if !path.is_file() {
        return Err(Error::Frame {
            frame,
            message: format!("missing {}", path.display()),
        });
    }
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.pixels().map(|p| p.0).collect();
    Raster::new(w as usize, h as usize, data)
}

fn read_depth(path: &Path, frame: usize) -> Result<DepthRaster> {
    if !path.is_file() {
        return Err(Error::Frame {
            frame,
            message: format!("missing {}", path.display()),
        });
    }
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Raster::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(Error::Frame {
            frame,
            message: format!("{} is {:?}, expected 16-bit grayscale", path.display(), other.color()),
        }),
    }
}

/// Loads a sequence directory. Frames are ordered by the index in their file
/// name; every color frame needs a matching depth frame and a ground-truth
/// line.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let indices = list_frame_indices(&dir.join("color"))?;
    if indices.is_empty() {
        return Err(Error::invalid(format!("{} contains no color frames", dir.display())));
    }
    let mut frames = Vec::with_capacity(indices.len());
    for &index in &indices {
        let color = read_color(&frame_file(dir, "color", index), index)?;
        let depth = read_depth(&frame_file(dir, "depth", index), index)?;
        frames.push(RgbdFrame::new(color, depth, index)?);
    }
    let ground_truth = read_ground_truth(&dir.join("groundtruth.txt"))?;
    if ground_truth.len() != frames.len() {
        return Err(Error::Frame {
            frame: ground_truth.len().min(frames.len()) + 1,
            message: format!("{} frames but {} ground-truth lines", frames.len(), ground_truth.len()),
        });
    }
    let tags_path = dir.join("tags.txt");
    let tags = if tags_path.is_file() {
        Some(read_tags(&tags_path)?)
    } else {
        None
    };
    Ok(Sequence {
        frames,
        ground_truth,
        tags,
    })
}

pub fn write_color_png(path: &Path, raster: &ColorRaster) -> Result<()> {
    let raw: Vec<u8> = raster.data().iter().flatten().copied().collect();
    let buf: ImageBuffer<ImgRgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(raster.width() as u32, raster.height() as u32, raw)
            .expect("buffer length matches raster dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

pub fn write_gray_png(path: &Path, raster: &MaskRaster) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(raster.width() as u32, raster.height() as u32, raster.data().to_vec())
            .expect("buffer length matches raster dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

pub fn write_depth_png(path: &Path, raster: &DepthRaster) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(raster.width() as u32, raster.height() as u32, raster.data().to_vec())
            .expect("buffer length matches raster dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

/// Reads a standalone color image.
pub fn read_color_png(path: &Path) -> Result<ColorRaster> {
    if !path.is_file() {
        let e = std::io::Error::new(std::io::ErrorKind::NotFound, "no such file");
        return Err(Error::io(path, e));
    }
    read_color(path, 0)
}

/// Writes `seq` in the directory layout read by [`load_sequence`].
pub fn write_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    if seq.frames.len() != seq.ground_truth.len() {
        return Err(Error::invalid("ground truth must have one box per frame"));
    }
    for sub in ["color", "depth"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for frame in &seq.frames {
        write_color_png(&frame_file(dir, "color", frame.index), &frame.color)?;
        write_depth_png(&frame_file(dir, "depth", frame.index), &frame.depth)?;
    }
    let gt: String = seq.ground_truth.iter().map(|b| format!("{b}\n")).collect();
    let gt_path = dir.join("groundtruth.txt");
    fs::write(&gt_path, gt).map_err(|e| Error::io(&gt_path, e))?;
    if let Some(tags) = &seq.tags {
        let tags_path = dir.join("tags.txt");
        let body: String = tags.iter().map(|t| format!("{t}\n")).collect();
        fs::write(&tags_path, body).map_err(|e| Error::io(&tags_path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(w: usize, h: usize) -> ColorRaster {
        Raster::from_fn(w, h, |x, y| {
            [(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) % 256) as u8]
        })
        .unwrap()
    }

    #[test]
    fn pure_red_to_hsv() {
        let hsv = rgb_to_hsv([255, 0, 0]);
        assert_eq!((hsv.h, hsv.s, hsv.v), (0.0, 1.0, 1.0));
    }

    #[test]
    fn green_hue_to_rgb_rounds_half_up() {
        // 0.7 * 255 = 178.5 evaluated by hand from the hexcone formula
        assert_eq!(hsv_to_rgb(HsvColor::new(120.0, 1.0, 0.7)), [0, 179, 0]);
    }

    #[test]
    fn gray_is_achromatic() {
        let hsv = rgb_to_hsv([128, 128, 128]);
        assert_eq!(hsv.s, 0.0);
        assert_eq!(hsv.h, 0.0);
    }

    #[test]
    fn hsv_round_trip_on_grid() {
        for r in (0..256).step_by(8) {
            for g in (0..256).step_by(8) {
                for b in (0..256).step_by(8) {
                    let rgb = [r as u8, g as u8, b as u8];
                    let back = hsv_to_rgb(rgb_to_hsv(rgb));
                    for c in 0..3 {
                        assert!((back[c] as i32 - rgb[c] as i32).abs() <= 1, "{rgb:?} -> {back:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn full_frame_crop_is_identity() {
        let img = gradient(13, 9);
        let full = BBox::new(0.0, 0.0, 13.0, 9.0).unwrap();
        assert_eq!(img.crop(&full, false).unwrap(), img);
        assert_eq!(img.crop(&full, true).unwrap(), img);
    }

    #[test]
    fn crop_off_left_edge_zero_fills() {
        let img = Raster::filled(10, 10, [200u8, 100, 50]).unwrap();
        let b = BBox::new(-5.0, 0.0, 10.0, 10.0).unwrap();
        let out = img.crop(&b, false).unwrap();
        assert_eq!(out.dims(), (10, 10));
        for y in 0..10 {
            for x in 0..10 {
                let expect = if x < 5 { [0, 0, 0] } else { [200, 100, 50] };
                assert_eq!(out.get(x, y), expect);
            }
        }
        let clipped = img.crop(&b, true).unwrap();
        assert_eq!(clipped.dims(), (5, 10));
    }

    #[test]
    fn crop_matches_direct_indexing() {
        let img = gradient(40, 30);
        let b = BBox::new(12.0, 7.0, 10.0, 10.0).unwrap();
        let out = img.crop(&b, false).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(out.get(x, y), img.get(12 + x, 7 + y));
            }
        }
    }

    #[test]
    fn subpixel_box_rounds_outward() {
        let b = BBox::new(1.2, 2.7, 3.5, 1.1).unwrap();
        assert_eq!(
            b.pixel_rect(),
            PixelRect {
                x0: 1,
                y0: 2,
                x1: 5,
                y1: 4
            }
        );
    }

    #[test]
    fn crop_outside_is_an_error() {
        let img = gradient(10, 10);
        let b = BBox::new(20.0, 20.0, 5.0, 5.0).unwrap();
        assert!(matches!(img.crop(&b, false), Err(Error::OutOfBounds)));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = gradient(17, 11);
        assert_eq!(img.resize(17, 11, ResizeMode::Bilinear).unwrap(), img);
        assert_eq!(img.resize(17, 11, ResizeMode::Nearest).unwrap(), img);
    }

    #[test]
    fn constant_raster_resizes_to_constant() {
        let img = Raster::filled(2, 2, [9u8, 99, 199]).unwrap();
        for (w, h) in [(1, 1), (5, 3), (100, 100)] {
            let out = img.resize(w, h, ResizeMode::Bilinear).unwrap();
            assert!(out.data().iter().all(|p| *p == [9, 99, 199]));
        }
    }

    #[test]
    fn bilinear_ramp_matches_formula() {
        // 4x4 ramp f(x, y) = 10x + 3y sampled into 7x5; independent evaluation
        // of the bilinear formula at the aligned sample centers.
        let img = Raster::from_fn(4, 4, |x, y| (10 * x + 3 * y) as f64).unwrap();
        let out = img.resize(7, 5, ResizeMode::Bilinear).unwrap();
        for oy in 0..5 {
            for ox in 0..7 {
                let sx = ((ox as f64 + 0.5) * 4.0 / 7.0 - 0.5).clamp(0.0, 3.0);
                let sy = ((oy as f64 + 0.5) * 4.0 / 5.0 - 0.5).clamp(0.0, 3.0);
                // a linear ramp is reproduced exactly by bilinear interpolation
                let expect = 10.0 * sx + 3.0 * sy;
                assert!((out.get(ox, oy) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nearest_keeps_depth_values() {
        let img = Raster::from_fn(4, 4, |x, y| (1000 + 500 * x + 7 * y) as u16).unwrap();
        let out = img.resize(9, 9, ResizeMode::Nearest).unwrap();
        assert!(out.data().iter().all(|v| img.data().contains(v)));
    }

    #[test]
    fn box_parses_from_ground_truth_line() {
        let b: BBox = "10,20,30,40".parse().unwrap();
        assert_eq!((b.left(), b.top(), b.width(), b.height()), (10.0, 20.0, 30.0, 40.0));
        assert_eq!(b.right(), 40.0);
        assert_eq!(b.bottom(), 60.0);
        assert_eq!(b.center(), (25.0, 40.0));
        assert!("10,20,30".parse::<BBox>().is_err());
        assert!("10,20,0,4".parse::<BBox>().is_err());
    }

    #[test]
    fn mismatched_frame_dimensions_rejected() {
        let c = Raster::filled(4, 4, [0u8; 3]).unwrap();
        let d = Raster::filled(4, 5, 0u16).unwrap();
        assert!(RgbdFrame::new(c, d, 1).is_err());
    }

    proptest! {
        #[test]
        fn complementary_crops_tile_the_raster(w in 2usize..24, h in 2usize..24, split_x in 1usize..23, split_y in 1usize..23) {
            let split_x = split_x.min(w - 1);
            let split_y = split_y.min(h - 1);
            let img = gradient(w, h);
            let quads = [
                (0, 0, split_x, split_y),
                (split_x, 0, w, split_y),
                (0, split_y, split_x, h),
                (split_x, split_y, w, h),
            ];
            let mut rebuilt = Raster::filled(w, h, [0u8; 3]).unwrap();
            for (x0, y0, x1, y1) in quads {
                let b = BBox::from_corners(x0 as f64, y0 as f64, x1 as f64, y1 as f64).unwrap();
                let part = img.crop(&b, true).unwrap();
                for y in 0..part.height() {
                    for x in 0..part.width() {
                        rebuilt.set(x0 + x, y0 + y, part.get(x, y));
                    }
                }
            }
            prop_assert_eq!(rebuilt, img);
        }

        #[test]
        fn hue_round_trip_within_one(h in 0.0f64..360.0, s in 0.0f64..=1.0, v in 0.0f64..=1.0) {
            let rgb = hsv_to_rgb(HsvColor::new(h, s, v));
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for c in 0..3 {
                prop_assert!((back[c] as i32 - rgb[c] as i32).abs() <= 1);
            }
        }
    }
}
