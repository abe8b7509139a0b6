//! Synthetic RGB-D data: scripted scenes, refiner training crops and the
//! mask-color augmentation for color-only training images.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frames::{BBox, ColorRaster, DepthRaster, PixelRect, Raster, Rgb, RgbdFrame, Sequence};
use crate::kvfile::{derive_seed, KvFile};
use crate::maskgen::{average_target_color, select_mask_colors};
use crate::refiner::{prepare_input, RefinerInput, RefinerOutput};

/// Lattice spacing, in pixels, of background and object textures.
const BACKGROUND_CELL: f64 = 6.0;
const OBJECT_CELL: f64 = 4.0;

/// Smooth seeded value noise in `[-1, 1]`, defined on the whole plane.
#[derive(Clone, Copy, Debug)]
struct ValueNoise {
    seed: u64,
    cell: f64,
}

impl ValueNoise {
    fn lattice(&self, i: i64, j: i64) -> f64 {
        let key = ((i as u64) << 32) ^ (j as u64 & 0xFFFF_FFFF);
        let h = derive_seed(self.seed, key);
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let (fu, fv) = (u / self.cell, v / self.cell);
        let (i, j) = (fu.floor(), fv.floor());
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fu - i), smooth(fv - j));
        let (i, j) = (i as i64, j as i64);
        let top = self.lattice(i, j) * (1.0 - tx) + self.lattice(i + 1, j) * tx;
        let bottom = self.lattice(i, j + 1) * (1.0 - tx) + self.lattice(i + 1, j + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rect,
    Ellipse,
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(Shape::Rect),
            "ellipse" => Ok(Shape::Ellipse),
            other => Err(Error::Parse(format!(
                "unknown shape `{other}`, expected rect or ellipse"
            ))),
        }
    }
}

/// One moving object. Position and size are in pixels, depth in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: Rgb,
    pub depth: f64,
    /// Depth change per frame, meters.
    pub depth_velocity: f64,
    pub size: (f64, f64),
    /// Top-left corner in the first frame.
    pub start: (f64, f64),
    pub velocity: (f64, f64),
    /// Peak texture deviation from `color`, in 8-bit levels.
    pub texture: f64,
    pub texture_seed: u64,
    /// Fraction of a second texture blended in by the last frame.
    pub drift: f64,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec {
            shape: Shape::Rect,
            color: [200, 60, 60],
            depth: 2.0,
            depth_velocity: 0.0,
            size: (24.0, 24.0),
            start: (40.0, 40.0),
            velocity: (0.0, 0.0),
            texture: 40.0,
            texture_seed: 1,
            drift: 0.0,
        }
    }
}

impl ObjectSpec {
    fn bbox_at(&self, frame: usize) -> Result<BBox> {
        let f = frame as f64;
        BBox::new(
            self.start.0 + f * self.velocity.0,
            self.start.1 + f * self.velocity.1,
            self.size.0,
            self.size.1,
        )
    }

    fn depth_at(&self, frame: usize) -> f64 {
        self.depth + frame as f64 * self.depth_velocity
    }

    fn validate(&self, what: &str, frames: usize) -> Result<()> {
        let (w, h) = self.size;
        if !(w >= 1.0 && h >= 1.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid(format!("{what}: size must be at least 1x1")));
        }
        let last = frames.saturating_sub(1);
        if !(self.depth > 0.0 && self.depth_at(last) > 0.0) {
            return Err(Error::invalid(format!("{what}: depth must stay positive")));
        }
        if !(0.0..=1.0).contains(&self.drift) || !(0.0..=127.0).contains(&self.texture) {
            return Err(Error::invalid(format!(
                "{what}: drift must be in [0,1] and texture in [0,127]"
            )));
        }
        Ok(())
    }

    fn covers(&self, bbox: &BBox, x: usize, y: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        match self.shape {
            Shape::Rect => px >= bbox.left() && px < bbox.right() && py >= bbox.top() && py < bbox.bottom(),
            Shape::Ellipse => {
                let (cx, cy) = bbox.center();
                let dx = (px - cx) / (bbox.width() / 2.0);
                let dy = (py - cy) / (bbox.height() / 2.0);
                dx * dx + dy * dy <= 1.0
            }
        }
    }

    /// Textured color at object-local coordinates `(u, v)` with blend `a`.
    fn shade(&self, u: f64, v: f64, a: f64) -> Rgb {
        let mut out = [0u8; 3];
        for (c, slot) in out.iter_mut().enumerate() {
            let first = ValueNoise {
                seed: derive_seed(self.texture_seed, c as u64),
                cell: OBJECT_CELL,
            };
            let second = ValueNoise {
                seed: derive_seed(self.texture_seed, 3 + c as u64),
                cell: OBJECT_CELL,
            };
            let n = (1.0 - a) * first.at(u, v) + a * second.at(u, v);
            *slot = (self.color[c] as f64 + self.texture * n).round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub background_color: Rgb,
    pub background_texture: f64,
    pub background_seed: u64,
    pub background_depth: f64,
    /// Standard deviation of per-pixel depth noise, meters.
    pub depth_noise: f64,
    /// Standard deviation of per-pixel color noise, 8-bit levels.
    pub color_noise: f64,
    pub target: ObjectSpec,
    pub distractors: Vec<ObjectSpec>,
    /// Category tag written for every frame.
    pub tag: Option<String>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 160,
            height: 120,
            frames: 30,
            seed: 0,
            background_color: [110, 120, 110],
            background_texture: 50.0,
            background_seed: 99,
            background_depth: 8.0,
            depth_noise: 0.01,
            color_noise: 0.0,
            target: ObjectSpec::default(),
            distractors: Vec::new(),
            tag: None,
        }
    }
}

const OBJECT_FIELDS: [&str; 10] = [
    "shape",
    "color",
    "depth",
    "depth_velocity",
    "size",
    "start",
    "velocity",
    "texture",
    "texture_seed",
    "drift",
];

fn parse_object(kv: &KvFile, prefix: &str) -> Result<ObjectSpec> {
    let key = |f: &str| format!("{prefix}.{f}");
    let d = ObjectSpec::default();
    let pair = |f: &str, dflt: (f64, f64)| -> Result<(f64, f64)> {
        Ok(kv.get_list::<f64>(&key(f), 2)?.map(|v| (v[0], v[1])).unwrap_or(dflt))
    };
    Ok(ObjectSpec {
        shape: kv.get_or(&key("shape"), d.shape)?,
        color: kv
            .get_list::<u8>(&key("color"), 3)?
            .map(|v| [v[0], v[1], v[2]])
            .unwrap_or(d.color),
        depth: kv.get_or(&key("depth"), d.depth)?,
        depth_velocity: kv.get_or(&key("depth_velocity"), d.depth_velocity)?,
        size: pair("size", d.size)?,
        start: pair("start", d.start)?,
        velocity: pair("velocity", d.velocity)?,
        texture: kv.get_or(&key("texture"), d.texture)?,
        texture_seed: kv.get_or(&key("texture_seed"), d.texture_seed)?,
        drift: kv.get_or(&key("drift"), d.drift)?,
    })
}

impl SceneSpec {
    /// Parses a scene file. Objects are written as `target.<field>` and
    /// `distractor.<n>.<field>` with n = 1, 2, ...
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(|k| {
            const TOP: [&str; 11] = [
                "width",
                "height",
                "frames",
                "seed",
                "background.color",
                "background.texture",
                "background.seed",
                "background.depth",
                "depth_noise",
                "color_noise",
                "tag",
            ];
            if TOP.contains(&k) {
                return true;
            }
            let mut parts = k.split('.');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("target"), Some(f), None, None) => OBJECT_FIELDS.contains(&f),
                (Some("distractor"), Some(n), Some(f), None) => {
                    n.parse::<usize>().is_ok_and(|n| n >= 1) && OBJECT_FIELDS.contains(&f)
                }
                _ => false,
            }
        })?;
        let d = SceneSpec::default();
        let mut distractors = Vec::new();
        for n in 1.. {
            let prefix = format!("distractor.{n}");
            if !kv.keys().any(|k| k.starts_with(&format!("{prefix}."))) {
                break;
            }
            distractors.push(parse_object(&kv, &prefix)?);
        }
        let numbered = kv.keys().filter(|k| k.starts_with("distractor.")).count();
        let used: usize = (1..=distractors.len())
            .map(|n| kv.keys().filter(|k| k.starts_with(&format!("distractor.{n}."))).count())
            .sum();
        if numbered != used {
            return Err(Error::Config(
                "distractors must be numbered 1, 2, ... without gaps".into(),
            ));
        }
        let spec = SceneSpec {
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            frames: kv.get_or("frames", d.frames)?,
            seed: kv.get_or("seed", d.seed)?,
            background_color: kv
                .get_list::<u8>("background.color", 3)?
                .map(|v| [v[0], v[1], v[2]])
                .unwrap_or(d.background_color),
            background_texture: kv.get_or("background.texture", d.background_texture)?,
            background_seed: kv.get_or("background.seed", d.background_seed)?,
            background_depth: kv.get_or("background.depth", d.background_depth)?,
            depth_noise: kv.get_or("depth_noise", d.depth_noise)?,
            color_noise: kv.get_or("color_noise", d.color_noise)?,
            target: parse_object(&kv, "target")?,
            distractors,
            tag: kv.raw("tag").map(str::to_string),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 || self.frames == 0 {
            return Err(Error::invalid("scene needs at least 8x8 pixels and one frame"));
        }
        if !(self.background_depth > 0.0) || !(self.depth_noise >= 0.0) || !(self.color_noise >= 0.0) {
            return Err(Error::invalid(
                "background depth must be positive and noise non-negative",
            ));
        }
        if !(0.0..=127.0).contains(&self.background_texture) {
            return Err(Error::invalid("background texture must be in [0,127]"));
        }
        if self
            .tag
            .as_deref()
            .is_some_and(|t| t.is_empty() || t.contains(char::is_whitespace))
        {
            return Err(Error::invalid("tag must be a single token"));
        }
        self.target.validate("target", self.frames)?;
        for (i, o) in self.distractors.iter().enumerate() {
            o.validate(&format!("distractor {}", i + 1), self.frames)?;
        }
        let frame = BBox::new(0.0, 0.0, self.width as f64, self.height as f64)?;
        for i in 0..self.frames {
            let b = self.target.bbox_at(i)?;
            if b.intersection_area(&frame) < 0.5 * b.area() {
                return Err(Error::invalid(format!(
                    "target is less than half inside the frame at frame {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Exact target box in every frame.
    pub fn ground_truth(&self) -> Result<Vec<BBox>> {
        (0..self.frames).map(|i| self.target.bbox_at(i)).collect()
    }
}

fn to_mm(meters: f64) -> u16 {
    (meters * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16
}

/// Renders every frame of `spec`. Objects are painted far to near, the
/// target last among equal depths.
pub fn render_sequence(spec: &SceneSpec) -> Result<Sequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let bg_noise: Vec<ValueNoise> = (0..3)
        .map(|c| ValueNoise {
            seed: derive_seed(spec.background_seed, c),
            cell: BACKGROUND_CELL,
        })
        .collect();
    let background = Raster::from_fn(w, h, |x, y| {
        let mut px = [0u8; 3];
        for c in 0..3 {
            let n = bg_noise[c].at(x as f64, y as f64);
            px[c] = (spec.background_color[c] as f64 + spec.background_texture * n)
                .round()
                .clamp(0.0, 255.0) as u8;
        }
        px
    })?;
    let depth_noise = Normal::new(0.0, spec.depth_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let color_noise = Normal::new(0.0, spec.color_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let ground_truth = spec.ground_truth()?;

    let mut frames = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let blend = if spec.frames > 1 {
            i as f64 / (spec.frames - 1) as f64
        } else {
            0.0
        };
        let mut color = background.clone();
        let mut depth_m = vec![spec.background_depth; w * h];

        let mut layers: Vec<(&ObjectSpec, bool)> = spec.distractors.iter().map(|o| (o, false)).collect();
        layers.push((&spec.target, true));
        layers.sort_by(|a, b| b.0.depth_at(i).total_cmp(&a.0.depth_at(i)).then(a.1.cmp(&b.1)));
        for (obj, _) in layers {
            let bbox = obj.bbox_at(i)?;
            let d = obj.depth_at(i);
            let Some(rect) = bbox.pixel_rect().intersect(&PixelRect::of_raster(w, h)) else {
                continue;
            };
            for y in rect.y0 as usize..rect.y1 as usize {
                for x in rect.x0 as usize..rect.x1 as usize {
                    if obj.covers(&bbox, x, y) {
                        let u = x as f64 + 0.5 - bbox.left();
                        let v = y as f64 + 0.5 - bbox.top();
                        color.set(x, y, obj.shade(u, v, obj.drift * blend));
                        depth_m[y * w + x] = d;
                    }
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
        let depth = Raster::new(
            w,
            h,
            depth_m
                .iter()
                .map(|&m| {
                    to_mm(
                        m + if spec.depth_noise > 0.0 {
                            depth_noise.sample(&mut rng)
                        } else {
                            0.0
                        },
                    )
                })
                .collect(),
        )?;
        if spec.color_noise > 0.0 {
            color = color.map(|p| {
                let mut q = *p;
                for v in q.iter_mut() {
                    *v = (*v as f64 + color_noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                }
                q
            });
        }
        frames.push(RgbdFrame::new(color, depth, i + 1)?);
    }
    Ok(Sequence {
        frames,
        ground_truth,
        tags: spec.tag.as_ref().map(|t| vec![t.clone(); spec.frames]),
    })
}

/// `n` sequences of a textured target sliding right past a static
/// look-alike at 2.5x its depth. The look-alike shares the target's texture
/// while the target's shading drifts, so color matching alone tends to lock
/// onto it.
pub fn distractor_suite(seed: u64, n: usize) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let size = (
                rng.random_range(20.0..28.0f64).round(),
                rng.random_range(20.0..28.0f64).round(),
            );
            let depth = rng.random_range(1.5..2.5);
            let color = [
                rng.random_range(60..200),
                rng.random_range(60..200),
                rng.random_range(60..200),
            ];
            let texture_seed: u64 = rng.random();
            let y = rng.random_range(30.0..60.0f64).round();
            let target = ObjectSpec {
                shape: Shape::Rect,
                color,
                depth,
                size,
                start: (20.0, y),
                velocity: (1.5, 0.0),
                texture: 45.0,
                texture_seed,
                drift: SUITE_DRIFT,
                ..ObjectSpec::default()
            };
            let start = (
                rng.random_range(55.0..75.0f64).round(),
                y + rng.random_range(-6.0..6.0f64).round(),
            );
            let distractor = ObjectSpec {
                depth: depth * 2.5,
                start,
                velocity: (0.0, 0.0),
                drift: 0.0,
                ..target.clone()
            };
            SceneSpec {
                width: 160,
                height: 120,
                frames: 50,
                seed: rng.random(),
                background_seed: rng.random(),
                background_depth: 8.0,
                target,
                distractors: vec![distractor],
                tag: Some(format!("suite{i}")),
                ..SceneSpec::default()
            }
        })
        .collect()
}

/// Shading drift of the suite target over a sequence.
pub const SUITE_DRIFT: f64 = 0.8;

/// Side of the square canvas each refiner training sample is drawn on.
pub const SAMPLE_CANVAS: usize = 128;
/// Per-side crop margin range, as a fraction of the target extent.
pub const MARGIN_RANGE: (f64, f64) = (0.05, 0.40);

/// One training scene: canvas, target box and the crop that contains it.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerScene {
    pub color: ColorRaster,
    pub depth: DepthRaster,
    pub target: BBox,
    pub crop: BBox,
}

fn random_color(rng: &mut ChaCha8Rng) -> Rgb {
    [
        rng.random_range(30..=225),
        rng.random_range(30..=225),
        rng.random_range(30..=225),
    ]
}

/// Target on a textured background with farther clutter, plus an
/// integer-aligned crop extending 5-40% of the target extent beyond each side.
/// Margins are skewed toward the tight end, where tracker crops live.
pub fn make_refiner_scene(seed: u64) -> Result<RefinerScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = SAMPLE_CANVAS as f64;
    let tw = rng.random_range(20..=64) as f64;
    let th = rng.random_range(20..=64) as f64;
    let mut margin = |extent: f64| -> f64 {
        let u: f64 = rng.random();
        let frac = MARGIN_RANGE.0 + (MARGIN_RANGE.1 - MARGIN_RANGE.0) * u * u;
        (frac * extent).ceil().min((MARGIN_RANGE.1 * extent).floor())
    };
    let (ml, mr, mt, mb) = (margin(tw), margin(tw), margin(th), margin(th));
    let cw = tw + ml + mr;
    let ch = th + mt + mb;
    let cl = rng.random_range(0..=(side - cw) as usize) as f64;
    let ct = rng.random_range(0..=(side - ch) as usize) as f64;
    let crop = BBox::new(cl, ct, cw, ch)?;

    let target_depth = rng.random_range(1.0..3.0);
    let bg_depth = rng.random_range(target_depth + 1.5..9.0);
    let shape = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Shape::Rect
        } else {
            Shape::Ellipse
        }
    };
    let target = ObjectSpec {
        shape: shape(&mut rng),
        color: random_color(&mut rng),
        depth: target_depth,
        size: (tw, th),
        start: (cl + ml, ct + mt),
        texture: rng.random_range(10.0..50.0),
        texture_seed: rng.random(),
        ..ObjectSpec::default()
    };
    let clutter = (0..rng.random_range(0..=3))
        .map(|_| ObjectSpec {
            shape: shape(&mut rng),
            color: random_color(&mut rng),
            depth: rng.random_range(target_depth + 0.5..bg_depth),
            size: (rng.random_range(10.0..50.0), rng.random_range(10.0..50.0)),
            start: (
                rng.random_range(-10.0..side - 10.0),
                rng.random_range(-10.0..side - 10.0),
            ),
            texture: rng.random_range(10.0..50.0),
            texture_seed: rng.random(),
            ..ObjectSpec::default()
        })
        .collect();
    let spec = SceneSpec {
        width: SAMPLE_CANVAS,
        height: SAMPLE_CANVAS,
        frames: 1,
        seed: rng.random(),
        background_color: random_color(&mut rng),
        background_texture: rng.random_range(10.0..60.0),
        background_seed: rng.random(),
        background_depth: bg_depth,
        depth_noise: 0.01,
        color_noise: 0.0,
        target,
        distractors: clutter,
        tag: None,
    };
    let mut seq = render_sequence(&spec)?;
    let frame = seq.frames.remove(0);
    Ok(RefinerScene {
        color: frame.color,
        depth: frame.depth,
        target: seq.ground_truth[0],
        crop,
    })
}

/// `n` independent samples; sample `i` depends only on `(seed, i)`.
pub fn make_refiner_dataset(n: usize, seed: u64) -> Result<Vec<(RefinerInput, RefinerOutput)>> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    (0..n)
        .map(|i| {
            let scene = make_refiner_scene(derive_seed(seed, i as u64))?;
            let input = prepare_input(&scene.color, &scene.depth, &scene.crop)?;
            Ok((input, RefinerOutput::from_boxes(&scene.target, &scene.crop)))
        })
        .collect()
}

/// Rectangle painting parameters for [`mg_augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub min_rects: usize,
    pub max_rects: usize,
    /// Rectangle side range as a fraction of the image side.
    pub min_frac: f64,
    pub max_frac: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            min_rects: 3,
            max_rects: 8,
            min_frac: 0.05,
            max_frac: 0.25,
            seed: 0,
        }
    }
}

/// Placement attempts per rectangle before it is given up.
pub const MAX_PLACEMENT_TRIES: usize = 100;

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_rects == 0 || self.min_rects > self.max_rects {
            return Err(Error::invalid("rectangle counts must satisfy 1 <= min <= max"));
        }
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.min_frac) || !ok(self.max_frac) || self.min_frac > self.max_frac {
            return Err(Error::invalid("size fractions must satisfy 0 < min <= max < 1"));
        }
        Ok(())
    }
}

/// Paints seeded rectangles in the two mask colors of the target's average
/// color, never touching a pixel of `gt`.
pub fn mg_augment(image: &ColorRaster, gt: &BBox, spec: &AugmentSpec) -> Result<ColorRaster> {
    spec.validate()?;
    let frame = PixelRect::of_raster(image.width(), image.height());
    let guard = gt.pixel_rect();
    if guard.intersect(&frame) != Some(guard) {
        return Err(Error::OutOfBounds);
    }
    let colors = select_mask_colors(average_target_color(image, gt)?);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (image.width() as f64, image.height() as f64);
    let count = rng.random_range(spec.min_rects..=spec.max_rects);
    let mut out = image.clone();
    let mut placed = 0;
    for _ in 0..count {
        let fill = if rng.random::<bool>() { colors.c1 } else { colors.c2 };
        for _ in 0..MAX_PLACEMENT_TRIES {
            let rw = ((rng.random_range(spec.min_frac..=spec.max_frac) * w).round() as i64).max(1);
            let rh = ((rng.random_range(spec.min_frac..=spec.max_frac) * h).round() as i64).max(1);
            let x0 = rng.random_range(0..=(frame.x1 - rw).max(0));
            let y0 = rng.random_range(0..=(frame.y1 - rh).max(0));
            let rect = PixelRect {
                x0,
                y0,
                x1: (x0 + rw).min(frame.x1),
                y1: (y0 + rh).min(frame.y1),
            };
            if rect.intersect(&guard).is_some() {
                continue;
            }
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    out.set(x as usize, y as usize, fill);
                }
            }
            placed += 1;
            break;
        }
    }
    if placed == 0 {
        return Err(Error::invalid("no rectangle fits outside the ground-truth box"));
    }
    Ok(out)
}
