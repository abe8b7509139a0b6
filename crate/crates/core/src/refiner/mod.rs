//! Depth refiner: shrinks an enlarged candidate region to the target's
//! extent using fused color and depth crops.
//!
//! Pretreatment widens the core's top candidate (overlap merge, then
//! amplification) so that the region contains the whole target; the
//! regressor then predicts the target box inside that region.

mod loss;
mod network;
mod train;
mod weights;

pub use loss::{loss, loss_grad, smooth_l1, smooth_l1_grad};
pub use network::{
    backward, forward_cached, forward_raw, Branch, ForwardCache, Layer, RefinerModel, TensorSpec, BRANCH_CHANNELS,
    CONV_WIDTHS, FUSION_CHANNELS, HIDDEN, INPUT_SIDE, OUTPUTS, POOL_GRID, SIDES,
};
pub use train::{
    compare_gradients, grad_check, gradients, seeded_grad_check, train, train_synthetic, train_with_progress,
    EpochStats, GradCheckReport, TrainConfig, TrainOutcome, GRAD_CHECK_EPS, GRAD_CHECK_SAMPLES, GRAD_CHECK_SEED,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use ndarray::Array2;

use crate::core_tracker::ScoredBox;
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::frames::{BBox, ColorRaster, DepthRaster, ResizeMode};

pub const DEFAULT_ALPHA1: f64 = 0.7;
pub const DEFAULT_ALPHA2: f64 = 0.1;

/// Smallest extent, as a fraction of the crop side, the refiner may output.
pub const MIN_EXTENT: f64 = 1e-3;

/// Network input: color and depth crops resampled to 100x100, three channels
/// each, stored as `(channel, y * 100 + x)` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerInput {
    color: Array2<f64>,
    depth: Array2<f64>,
    pub crop_box: BBox,
}

impl RefinerInput {
    pub fn new(color: Array2<f64>, depth: Array2<f64>, crop_box: BBox) -> Result<Self> {
        let shape = [3, INPUT_SIDE * INPUT_SIDE];
        if color.shape() != shape || depth.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "refiner input must be 3x{INPUT_SIDE}x{INPUT_SIDE}"
            )));
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !color.iter().all(in_unit) || !depth.iter().all(in_unit) {
            return Err(Error::invalid("refiner input values must lie in [0, 1]"));
        }
        Ok(RefinerInput {
            color: color.as_standard_layout().into_owned(),
            depth: depth.as_standard_layout().into_owned(),
            crop_box,
        })
    }

    pub fn color(&self) -> &Array2<f64> {
        &self.color
    }

    pub fn depth(&self) -> &Array2<f64> {
        &self.depth
    }
}

/// Target box inside the crop, every component a fraction of the crop side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinerOutput {
    pub w: f64,
    pub h: f64,
    pub xr: f64,
    pub yb: f64,
}

impl RefinerOutput {
    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.h, self.xr, self.yb]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        RefinerOutput {
            w: a[0],
            h: a[1],
            xr: a[2],
            yb: a[3],
        }
    }

    /// Normalized description of `target` relative to `crop`.
    pub fn from_boxes(target: &BBox, crop: &BBox) -> Self {
        RefinerOutput {
            w: target.width() / crop.width(),
            h: target.height() / crop.height(),
            xr: (target.right() - crop.left()) / crop.width(),
            yb: (target.bottom() - crop.top()) / crop.height(),
        }
    }

    /// Clamps so the implied box `[xr - w, xr] x [yb - h, yb]` lies inside
    /// the unit crop.
    pub fn clamped(&self) -> Self {
        let xr = self.xr.clamp(MIN_EXTENT, 1.0);
        let yb = self.yb.clamp(MIN_EXTENT, 1.0);
        RefinerOutput {
            w: self.w.clamp(MIN_EXTENT, xr),
            h: self.h.clamp(MIN_EXTENT, yb),
            xr,
            yb,
        }
    }

    /// Maps the (clamped) output back to frame coordinates inside `crop`.
    pub fn denormalize(&self, crop: &BBox) -> Result<BBox> {
        let c = self.clamped();
        let x1 = (crop.left() + c.xr * crop.width()).min(crop.right());
        let y1 = (crop.top() + c.yb * crop.height()).min(crop.bottom());
        let x0 = (x1 - c.w * crop.width()).max(crop.left());
        let y0 = (y1 - c.h * crop.height()).max(crop.top());
        BBox::from_corners(x0, y0, x1, y1)
    }
}

/// Bounding union of the top-scoring candidate and every candidate that
/// overlaps it with IOU at least `alpha1`.
pub fn nms_merge(candidates: &[ScoredBox], alpha1: f64) -> Result<BBox> {
    let top = candidates
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
        .map(|(_, c)| c.bbox)
        .ok_or(Error::EmptyCandidates)?;
    Ok(candidates
        .iter()
        .filter(|c| iou(&c.bbox, &top) >= alpha1)
        .fold(top, |acc, c| acc.union_bounds(&c.bbox)))
}

/// Enlarges `bbox` by `1 + alpha2` about its center, clipped to the frame.
pub fn amplify(bbox: &BBox, alpha2: f64, frame_w: usize, frame_h: usize) -> Result<BBox> {
    if !(alpha2 > 0.0) {
        return Err(Error::invalid(format!("alpha2 must be positive, got {alpha2}")));
    }
    bbox.scale_about_center(1.0 + alpha2)?
        .clip_to(frame_w as f64, frame_h as f64)
        .ok_or(Error::OutOfBounds)
}

/// Crops color and depth by `crop_box`, resamples both to 100x100 (bilinear
/// color, nearest depth), scales color to `[0, 1]` and divides depth by the
/// frame's largest valid depth. Missing depth stays 0.
pub fn prepare_input(xc: &ColorRaster, xd: &DepthRaster, crop_box: &BBox) -> Result<RefinerInput> {
    if !xc.same_dims(xd) {
        return Err(Error::DimensionMismatch("color and depth frames differ in size".into()));
    }
    let max_depth_mm = xd.data().iter().copied().max().unwrap_or(0) as f64;
    let rc = xc
        .crop(crop_box, false)?
        .resize(INPUT_SIDE, INPUT_SIDE, ResizeMode::Bilinear)?;
    let rd = xd
        .crop(crop_box, false)?
        .resize(INPUT_SIDE, INPUT_SIDE, ResizeMode::Nearest)?;
    let n = INPUT_SIDE * INPUT_SIDE;
    let color = Array2::from_shape_fn((3, n), |(c, i)| rc.data()[i][c] as f64 / 255.0);
    let depth = Array2::from_shape_fn((3, n), |(_, i)| {
        if max_depth_mm > 0.0 {
            rd.data()[i] as f64 / max_depth_mm
        } else {
            0.0
        }
    });
    RefinerInput::new(color, depth, *crop_box)
}

/// Network prediction for one prepared input.
pub fn forward(model: &RefinerModel, input: &RefinerInput) -> Result<RefinerOutput> {
    Ok(RefinerOutput::from_array(forward_raw(model, input)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    /// Refined box, always inside `amplified`.
    pub refined: BBox,
    pub merged: BBox,
    pub amplified: BBox,
}

/// Full refinement: merge, amplify, crop, regress and map back to the frame.
pub fn refine(
    model: &RefinerModel,
    color: &ColorRaster,
    depth: &DepthRaster,
    candidates: &[ScoredBox],
    alpha1: f64,
    alpha2: f64,
) -> Result<Refinement> {
    let merged = nms_merge(candidates, alpha1)?;
    let amplified = amplify(&merged, alpha2, color.width(), color.height())?;
    let input = prepare_input(color, depth, &amplified)?;
    let out = forward(model, &input)?;
    Ok(Refinement {
        refined: out.denormalize(&amplified)?,
        merged,
        amplified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Raster;

    fn sb(l: f64, t: f64, w: f64, h: f64, score: f64) -> ScoredBox {
        ScoredBox {
            bbox: BBox::new(l, t, w, h).unwrap(),
            score,
        }
    }

    #[test]
    fn merge_cases() {
        let one = [sb(3.0, 4.0, 5.0, 6.0, 0.9)];
        assert_eq!(nms_merge(&one, 0.7).unwrap(), one[0].bbox);
        let twins = [sb(3.0, 4.0, 5.0, 6.0, 0.9), sb(3.0, 4.0, 5.0, 6.0, 0.8)];
        assert_eq!(nms_merge(&twins, 0.7).unwrap(), twins[0].bbox);
        // IOU = 64 / 136 < 0.7, so the shifted box is not merged
        let apart = [sb(0.0, 0.0, 10.0, 10.0, 0.9), sb(2.0, 2.0, 10.0, 10.0, 0.8)];
        assert_eq!(nms_merge(&apart, 0.7).unwrap(), apart[0].bbox);
        assert_eq!(
            nms_merge(&apart, 0.4).unwrap(),
            BBox::new(0.0, 0.0, 12.0, 12.0).unwrap()
        );
        assert!(nms_merge(&[], 0.7).is_err());
    }

    #[test]
    fn merge_prefers_first_on_ties() {
        let c = [sb(0.0, 0.0, 10.0, 10.0, 0.9), sb(50.0, 0.0, 10.0, 10.0, 0.9)];
        assert_eq!(nms_merge(&c, 0.7).unwrap(), c[0].bbox);
    }

    #[test]
    fn amplify_cases() {
        let b = BBox::new(10.0, 10.0, 20.0, 40.0).unwrap();
        let a = amplify(&b, 0.1, 1000, 1000).unwrap();
        for (got, want) in [(a.left(), 9.0), (a.top(), 8.0), (a.width(), 22.0), (a.height(), 44.0)] {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(amplify(&b, 0.0, 1000, 1000).is_err());
        let corner = BBox::new(0.0, 0.0, 20.0, 20.0).unwrap();
        let a = amplify(&corner, 0.1, 100, 100).unwrap();
        assert!(BBox::new(0.0, 0.0, 100.0, 100.0).unwrap().contains(&a));
    }

    #[test]
    fn denormalize_arithmetic() {
        let crop = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        let out = RefinerOutput {
            w: 0.5,
            h: 0.5,
            xr: 1.0,
            yb: 1.0,
        };
        assert_eq!(
            out.denormalize(&crop).unwrap(),
            BBox::new(50.0, 50.0, 50.0, 50.0).unwrap()
        );
        // an implied box poking out of the crop is clamped inside it
        let wild = RefinerOutput {
            w: 0.9,
            h: 0.2,
            xr: 0.3,
            yb: 0.99,
        };
        let b = wild.denormalize(&crop).unwrap();
        assert!(crop.contains(&b));
    }

    #[test]
    fn prepare_input_normalizes_depth() {
        let color = Raster::filled(100, 100, [255u8, 0, 51]).unwrap();
        let mut depth = Raster::filled(100, 100, 2000u16).unwrap();
        depth.set(99, 99, 4000);
        let crop = BBox::new(0.0, 0.0, 50.0, 50.0).unwrap();
        let input = prepare_input(&color, &depth, &crop).unwrap();
        assert!(input.depth().iter().all(|&v| v == 0.5));
        assert!(input.color().row(0).iter().all(|&v| v == 1.0));
        assert!(input.color().row(2).iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn prepare_input_identity_resize() {
        let color = Raster::from_fn(120, 110, |x, y| [(x * 2) as u8, y as u8, 9]).unwrap();
        let depth = Raster::from_fn(120, 110, |x, y| (1000 + x * 10 + y) as u16).unwrap();
        let crop = BBox::new(10.0, 5.0, 100.0, 100.0).unwrap();
        let input = prepare_input(&color, &depth, &crop).unwrap();
        let max = *depth.data().iter().max().unwrap() as f64;
        for y in 0..100 {
            for x in 0..100 {
                let i = y * 100 + x;
                assert_eq!(input.color()[[0, i]], color.get(10 + x, 5 + y)[0] as f64 / 255.0);
                assert_eq!(input.depth()[[1, i]], depth.get(10 + x, 5 + y) as f64 / max);
            }
        }
    }

    #[test]
    fn prepare_input_ramp_matches_bilinear_oracle() {
        // horizontal ramp 2x in red over a 50x50 crop upsampled to 100x100
        let color = Raster::from_fn(60, 60, |x, _| [(x * 4) as u8, 0, 0]).unwrap();
        let depth = Raster::filled(60, 60, 1000u16).unwrap();
        let crop = BBox::new(5.0, 5.0, 50.0, 50.0).unwrap();
        let input = prepare_input(&color, &depth, &crop).unwrap();
        for x in 0..100 {
            let sx = ((x as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 49.0);
            let expect = (4.0 * (5.0 + sx) + 0.5 + 1e-9).floor() / 255.0;
            assert!((input.color()[[0, 37 * 100 + x]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_outputs_half() {
        let color = Raster::filled(100, 100, [10u8, 20, 30]).unwrap();
        let depth = Raster::filled(100, 100, 1500u16).unwrap();
        let input = prepare_input(&color, &depth, &BBox::new(0.0, 0.0, 100.0, 100.0).unwrap()).unwrap();
        let out = forward(&RefinerModel::zeros(), &input).unwrap();
        assert_eq!(out.as_array(), [0.5; 4]);
    }
}
