//! Per-frame orchestration: depth masking of the search region, core
//! matching, box refinement and the stop-restart update.

use std::time::Instant;

use crate::config::RunConfig;
use crate::core_tracker::{make_search_region, CoreTracker, NccTracker, ScoredBox, Template};
use crate::error::{Error, Result};
use crate::eval::{ResultLine, SequenceResult};
use crate::frames::{BBox, ColorRaster, MaskRaster, PixelRect, RgbdFrame, Sequence};
use crate::kvfile::derive_seed;
use crate::maskgen::{
    apply_mask, average_target_color, binary_mask, color_mask, mean_target_depth, select_mask_colors, solid_mask,
    MaskColors, MaskPair,
};
use crate::refiner::{load_weights, refine, RefinerModel};
use crate::strategy::{self, MgState, MgStatus};

/// Everything carried from one frame to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    template: Template,
    pub prev_box: BBox,
    /// Mean target depth in meters, always positive.
    pub prev_dt: f64,
    pub mg_status: MgStatus,
    pub mask_colors: MaskColors,
    pub frames_seen: usize,
}

impl TrackState {
    pub fn template(&self) -> &Template {
        &self.template
    }
}

/// Box the search window is grown from: the previous box, widened where
/// needed to the template's size so a shrunken estimate cannot leave the
/// template without room to match.
pub fn search_basis(state: &TrackState) -> BBox {
    let (cx, cy) = state.prev_box.center();
    let t = state.template.origin_box();
    BBox::from_center(
        cx,
        cy,
        state.prev_box.width().max(t.width()),
        state.prev_box.height().max(t.height()),
    )
    .expect("extents of valid boxes")
}

/// Intermediate images of one masked frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskImages {
    pub m: MaskRaster,
    pub mc: ColorRaster,
    pub xm: ColorRaster,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub search_window: Option<BBox>,
    /// Core output before refinement.
    pub core_box: Option<BBox>,
    /// Region handed to the refiner.
    pub amplified: Option<BBox>,
    pub masked: bool,
    pub masks: Option<MaskImages>,
    /// Set when the frame failed and the previous box was repeated.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub bbox: BBox,
    pub score: f64,
    pub mg_state: MgState,
    pub target_depth: f64,
    pub diagnostics: Diagnostics,
}

impl StepOutput {
    pub fn result_line(&self) -> ResultLine {
        ResultLine {
            bbox: self.bbox,
            score: self.score,
            mg_state: self.mg_state,
        }
    }
}

pub struct Tracker {
    cfg: RunConfig,
    core: Box<dyn CoreTracker>,
    model: Option<RefinerModel>,
}

impl Tracker {
    /// Tracker with the reference matcher. `model` is required when the
    /// refiner is enabled.
    pub fn new(cfg: RunConfig, model: Option<RefinerModel>) -> Result<Self> {
        let core = NccTracker::new(cfg.core_scales.clone(), cfg.core_k)?;
        Self::with_core(cfg, Box::new(core), model)
    }

    pub fn with_core(cfg: RunConfig, core: Box<dyn CoreTracker>, model: Option<RefinerModel>) -> Result<Self> {
        cfg.validate()?;
        if cfg.enable_dr && model.is_none() {
            return Err(Error::Config(
                "refinement is enabled but no refiner weights were given".into(),
            ));
        }
        Ok(Tracker { cfg, core, model })
    }

    /// Loads weights from `cfg.weights` when the refiner is enabled.
    pub fn from_config(cfg: RunConfig) -> Result<Self> {
        let model = match (&cfg.weights, cfg.enable_dr) {
            (_, false) => None,
            (Some(path), true) => Some(load_weights(path)?),
            (None, true) => None,
        };
        Self::new(cfg, model)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn init(&self, frame: &RgbdFrame, gt: &BBox) -> Result<TrackState> {
        let bounds = BBox::new(0.0, 0.0, frame.width() as f64, frame.height() as f64)?;
        if !bounds.contains(gt) {
            return Err(Error::Frame {
                frame: frame.index,
                message: format!(
                    "initial box {gt} is not inside the {}x{} frame",
                    frame.width(),
                    frame.height()
                ),
            });
        }
        let prev_dt = mean_target_depth(&frame.depth, gt).map_err(|e| Error::Frame {
            frame: frame.index,
            message: format!("cannot estimate initial target depth: {e}"),
        })?;
        Ok(TrackState {
            template: Template::from_frame(&frame.color, gt)?,
            prev_box: *gt,
            prev_dt,
            mg_status: MgStatus::active(),
            mask_colors: select_mask_colors(average_target_color(&frame.color, gt)?),
            frames_seen: 1,
        })
    }

    /// Processes one frame. Errors are absorbed: the state is left untouched
    /// and the previous box is repeated with score 0.
    pub fn step(&self, state: &mut TrackState, frame: &RgbdFrame, keep_masks: bool) -> StepOutput {
        match self.try_step(state, frame, keep_masks) {
            Ok((out, next)) => {
                *state = next;
                out
            }
            Err(e) => StepOutput {
                bbox: state.prev_box,
                score: 0.0,
                mg_state: state.mg_status.state,
                target_depth: state.prev_dt,
                diagnostics: Diagnostics {
                    search_window: None,
                    core_box: None,
                    amplified: None,
                    masked: false,
                    masks: None,
                    error: Some(e.to_string()),
                },
            },
        }
    }

    /// One frame without the coast rule; returns the output and the next state.
    pub fn try_step(
        &self,
        state: &TrackState,
        frame: &RgbdFrame,
        keep_masks: bool,
    ) -> Result<(StepOutput, TrackState)> {
        let cfg = &self.cfg;
        let (fw, fh) = (frame.width(), frame.height());
        let region = make_search_region(&search_basis(state), fw, fh, cfg.search_scale)?;
        let rect = region
            .window
            .pixel_rect()
            .intersect(&PixelRect::of_raster(fw, fh))
            .ok_or(Error::OutOfBounds)?;
        let origin = rect.to_bbox();
        let xc = frame.color.crop_rect(rect, true)?;

        let masked = cfg.enable_mg && state.mg_status.is_active();
        let mut masks = None;
        let search = if masked {
            let xd = frame.depth.crop_rect(rect, true)?;
            let local_prev = state.prev_box.translate(-origin.left(), -origin.top());
            let m = binary_mask(&xd, state.prev_dt, &local_prev)?;
            let mc = if cfg.mask_colors == 2 {
                color_mask(
                    &m,
                    &state.mask_colors,
                    cfg.cell,
                    derive_seed(cfg.seed, frame.index as u64),
                )?
            } else {
                solid_mask(&m, state.mask_colors.c1)
            };
            let pair = MaskPair::new(m, mc)?;
            let xm = apply_mask(&xc, &pair)?;
            if keep_masks {
                masks = Some(MaskImages {
                    m: pair.m,
                    mc: pair.mc,
                    xm: xm.clone(),
                });
            }
            xm
        } else {
            xc
        };

        let candidates: Vec<ScoredBox> = self.core.track(&state.template, &search, &origin)?;
        let top = *candidates.first().ok_or(Error::EmptyCandidates)?;

        let (bbox, amplified) = match (&self.model, cfg.enable_dr) {
            (Some(model), true) => {
                let r = refine(model, &frame.color, &frame.depth, &candidates, cfg.alpha1, cfg.alpha2)?;
                (r.refined, Some(r.amplified))
            }
            _ => (top.bbox, None),
        };

        let frame_max = frame.depth.max_meters().ok_or_else(|| Error::Frame {
            frame: frame.index,
            message: "depth map has no valid pixels".into(),
        })?;
        let dt_now = match mean_target_depth(&frame.depth, &bbox) {
            Ok(d) => d,
            Err(Error::MissingDepth | Error::OutOfBounds) => state.prev_dt,
            Err(e) => return Err(e),
        };
        let mg_status = strategy::step(
            state.mg_status,
            top.score,
            dt_now,
            state.prev_dt,
            frame_max,
            &cfg.strategy,
        )?;

        let next = TrackState {
            template: state.template.clone(),
            prev_box: bbox,
            prev_dt: dt_now,
            mg_status,
            mask_colors: state.mask_colors,
            frames_seen: state.frames_seen + 1,
        };
        let out = StepOutput {
            bbox,
            score: top.score,
            mg_state: mg_status.state,
            target_depth: dt_now,
            diagnostics: Diagnostics {
                search_window: Some(origin),
                core_box: Some(top.bbox),
                amplified,
                masked,
                masks,
                error: None,
            },
        };
        Ok((out, next))
    }

    /// Tracks a whole sequence from its first ground-truth box. The first
    /// output is the ground truth itself with score 1. `on_frame` sees every
    /// later frame's output.
    pub fn run_with(
        &self,
        seq: &Sequence,
        keep_masks: bool,
        mut on_frame: impl FnMut(&RgbdFrame, &StepOutput),
    ) -> Result<RunOutput> {
        let first = seq
            .frames
            .first()
            .ok_or_else(|| Error::invalid("sequence has no frames"))?;
        let gt0 = *seq
            .ground_truth
            .first()
            .ok_or_else(|| Error::invalid("sequence has no ground truth"))?;
        let start = Instant::now();
        let mut state = self.init(first, &gt0)?;
        let mut lines = vec![ResultLine {
            bbox: gt0,
            score: 1.0,
            mg_state: MgState::Active,
        }];
        let mut errors = Vec::new();
        for frame in &seq.frames[1..] {
            let out = self.step(&mut state, frame, keep_masks);
            if let Some(e) = &out.diagnostics.error {
                errors.push((frame.index, e.clone()));
            }
            on_frame(frame, &out);
            lines.push(out.result_line());
        }
        let seconds = start.elapsed().as_secs_f64();
        Ok(RunOutput { lines, errors, seconds })
    }

    pub fn run(&self, seq: &Sequence) -> Result<RunOutput> {
        self.run_with(seq, false, |_, _| {})
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub lines: Vec<ResultLine>,
    /// Frames that coasted, with their error messages.
    pub errors: Vec<(usize, String)>,
    /// Wall-clock time of the tracking loop.
    pub seconds: f64,
}

impl RunOutput {
    pub fn boxes(&self) -> Vec<BBox> {
        self.lines.iter().map(|l| l.bbox).collect()
    }

    pub fn evaluate(&self, ground_truth: &[BBox]) -> Result<SequenceResult> {
        SequenceResult::new(self.boxes(), ground_truth, self.seconds)
    }

    /// Contents of a results file, one line per frame.
    pub fn to_text(&self) -> String {
        self.lines.iter().map(|l| format!("{}\n", l.format())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_sequence, ObjectSpec, SceneSpec};

    fn scene() -> Sequence {
        render_sequence(&SceneSpec {
            frames: 12,
            target: ObjectSpec {
                velocity: (1.5, 0.5),
                ..ObjectSpec::default()
            },
            ..SceneSpec::default()
        })
        .unwrap()
    }

    fn bare() -> RunConfig {
        RunConfig {
            enable_mg: false,
            enable_dr: false,
            ..RunConfig::default()
        }
    }

    #[test]
    fn init_estimates_depth_and_colors() {
        let seq = scene();
        let t = Tracker::new(bare(), None).unwrap();
        let s = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
        assert!((s.prev_dt - 2.0).abs() < 0.01);
        assert!(s.mg_status.is_active());
        let outside = BBox::new(150.0, 0.0, 20.0, 20.0).unwrap();
        assert!(t.init(&seq.frames[0], &outside).is_err());
    }

    #[test]
    fn refiner_requires_weights() {
        let cfg = RunConfig::default();
        assert_eq!(Tracker::new(cfg, None).err().unwrap().category(), "config");
    }

    #[test]
    fn bare_pipeline_is_the_core_tracker() {
        let seq = scene();
        let cfg = bare();
        let t = Tracker::new(cfg.clone(), None).unwrap();
        let core = NccTracker::new(cfg.core_scales.clone(), cfg.core_k).unwrap();
        let mut state = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
        for frame in &seq.frames[1..] {
            let region =
                make_search_region(&search_basis(&state), frame.width(), frame.height(), cfg.search_scale).unwrap();
            let rect = region.window.pixel_rect();
            let direct = core
                .track(
                    state.template(),
                    &frame.color.crop_rect(rect, true).unwrap(),
                    &rect.to_bbox(),
                )
                .unwrap()[0];
            let out = t.step(&mut state, frame, false);
            assert_eq!(out.bbox, direct.bbox);
            assert_eq!(out.score, direct.score);
        }
    }

    #[test]
    fn stopped_mask_leaves_search_untouched() {
        let seq = scene();
        let t = Tracker::new(
            RunConfig {
                enable_dr: false,
                ..RunConfig::default()
            },
            None,
        )
        .unwrap();
        let mut state = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
        state.mg_status = MgStatus {
            state: MgState::Stopped,
            reason: strategy::Transition::VeryLowScore,
        };
        let (out, _) = t.try_step(&state, &seq.frames[1], true).unwrap();
        assert!(!out.diagnostics.masked);
        assert!(out.diagnostics.masks.is_none());
        let bare_t = Tracker::new(bare(), None).unwrap();
        let (bare_out, _) = bare_t.try_step(&state, &seq.frames[1], false).unwrap();
        assert_eq!(out.bbox, bare_out.bbox);
    }

    #[test]
    fn failed_frame_coasts() {
        let seq = scene();
        let t = Tracker::new(bare(), None).unwrap();
        let mut state = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
        let before = state.clone();
        let tiny = RgbdFrame::new(
            crate::frames::Raster::filled(4, 4, [0u8; 3]).unwrap(),
            crate::frames::Raster::filled(4, 4, 1000u16).unwrap(),
            2,
        )
        .unwrap();
        let out = t.step(&mut state, &tiny, false);
        assert!(out.diagnostics.error.is_some());
        assert_eq!(out.bbox, before.prev_box);
        assert_eq!(state, before);
    }

    #[test]
    fn full_run_is_deterministic_and_tracks_clean_scene() {
        let seq = scene();
        let cfg = RunConfig {
            enable_dr: false,
            seed: 5,
            ..RunConfig::default()
        };
        let t = Tracker::new(cfg, None).unwrap();
        let a = t.run(&seq).unwrap();
        let b = t.run(&seq).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let r = a.evaluate(&seq.ground_truth).unwrap();
        assert!(r.ious.iter().all(|&v| v >= 0.8), "{:?}", r.ious);
    }
}
