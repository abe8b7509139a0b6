//! Overlap metrics, success curves and per-category reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::BBox;
use crate::strategy::MgState;

/// Number of points on the success-curve grid (0.00 to 1.00 in steps of 0.01).
pub const GRID_POINTS: usize = 101;

/// Label used for frames without a category tag.
pub const UNTAGGED: &str = "untagged";

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    // edge arithmetic can round a self-overlap just below 1
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn success_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / 100.0).collect()
}

/// Fraction of frames whose IOU strictly exceeds each grid threshold.
pub fn success_curve(ious: &[f64]) -> Result<Vec<(f64, f64)>> {
    if ious.is_empty() {
        return Err(Error::invalid("success curve needs at least one IOU"));
    }
    let n = ious.len() as f64;
    Ok(success_grid()
        .into_iter()
        .map(|t| (t, ious.iter().filter(|&&v| v > t).count() as f64 / n))
        .collect())
}

/// Mean of the curve's ratios over the grid.
pub fn auc(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::invalid("empty success curve"));
    }
    Ok(curve.iter().map(|(_, r)| r).sum::<f64>() / curve.len() as f64)
}

/// `threshold,ratio` lines for external plotting.
pub fn format_curve(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("# success curve: ratio of frames with IOU > threshold\n");
    for (t, r) in curve {
        let _ = writeln!(out, "{t:.2},{r:.6}");
    }
    out
}

pub const MIN_ELAPSED_SECS: f64 = 1e-6;

/// Frames per second of the tracking loop, with a floor on the elapsed time.
pub fn measure_fps(frames: usize, seconds: f64) -> f64 {
    frames as f64 / seconds.max(MIN_ELAPSED_SECS)
}

/// Per-frame outcome of tracking one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub boxes: Vec<BBox>,
    pub ious: Vec<f64>,
    pub seconds: f64,
    pub fps: f64,
}

impl SequenceResult {
    pub fn new(boxes: Vec<BBox>, ground_truth: &[BBox], seconds: f64) -> Result<Self> {
        if boxes.len() != ground_truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predicted boxes for {} ground-truth boxes",
                boxes.len(),
                ground_truth.len()
            )));
        }
        let ious = boxes.iter().zip(ground_truth).map(|(p, g)| iou(p, g)).collect();
        let fps = measure_fps(boxes.len(), seconds);
        Ok(SequenceResult {
            boxes,
            ious,
            seconds,
            fps,
        })
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.ious)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryRow {
    pub category: String,
    pub frames: usize,
    pub mean_iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryReport {
    pub overall: CategoryRow,
    /// Sorted by category name.
    pub categories: Vec<CategoryRow>,
}

/// Average IOU per category and over all frames. `tags[i]` holds the
/// per-frame tokens of `results[i]`; missing or short tag lists mark the
/// remaining frames as untagged.
pub fn category_report(results: &[SequenceResult], tags: &[Option<Vec<String>>]) -> CategoryReport {
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for (i, res) in results.iter().enumerate() {
        let seq_tags = tags.get(i).and_then(|t| t.as_ref());
        for (f, &v) in res.ious.iter().enumerate() {
            let cat = seq_tags
                .and_then(|t| t.get(f))
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .unwrap_or(UNTAGGED);
            by_cat.entry(cat.to_owned()).or_default().push(v);
            all.push(v);
        }
    }
    CategoryReport {
        overall: CategoryRow {
            category: "overall".into(),
            frames: all.len(),
            mean_iou: mean(&all),
        },
        categories: by_cat
            .into_iter()
            .map(|(category, v)| CategoryRow {
                category,
                frames: v.len(),
                mean_iou: mean(&v),
            })
            .collect(),
    }
}

impl CategoryReport {
    /// Aligned text table followed by comma-separated machine rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# average IOU overlap per category");
        let _ = writeln!(
            out,
            "# success grid: thresholds 0.00..=1.00 step 0.01, success = IOU > threshold"
        );
        let _ = writeln!(out, "{:<16}{:>8}{:>12}", "category", "frames", "mean_iou");
        for row in std::iter::once(&self.overall).chain(&self.categories) {
            let _ = writeln!(out, "{:<16}{:>8}{:>12.4}", row.category, row.frames, row.mean_iou);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "category,frames,mean_iou");
        for row in std::iter::once(&self.overall).chain(&self.categories) {
            let _ = writeln!(out, "{},{},{:.6}", row.category, row.frames, row.mean_iou);
        }
        out
    }
}

/// One line of a tracking results file: `left,top,w,h,score,mg_state`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResultLine {
    pub bbox: BBox,
    pub score: f64,
    pub mg_state: MgState,
}

impl ResultLine {
    pub fn format(&self) -> String {
        format!(
            "{:.3},{:.3},{:.3},{:.3},{:.6},{}",
            self.bbox.left(),
            self.bbox.top(),
            self.bbox.width(),
            self.bbox.height(),
            self.score,
            self.mg_state.as_str()
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Parse(format!(
                "expected `left,top,w,h,score,mg_state`, got `{line}`"
            )));
        }
        let bbox: BBox = parts[..4].join(",").parse()?;
        let score = parts[4]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad score in `{line}`")))?;
        Ok(ResultLine {
            bbox,
            score,
            mg_state: parts[5].parse()?,
        })
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            ResultLine::parse(l).map_err(|e| Error::Frame {
                frame: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(l: f64, t: f64, w: f64, h: f64) -> BBox {
        BBox::new(l, t, w, h).unwrap()
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&b(1.0, 2.0, 3.0, 4.0), &b(1.0, 2.0, 3.0, 4.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert!((iou(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 2.0, 2.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn auc_of_perfect_and_failed_tracks() {
        let perfect = success_curve(&[1.0; 10]).unwrap();
        // fails only at threshold 1.00
        assert_eq!(auc(&perfect).unwrap(), 100.0 / 101.0);
        let failed = success_curve(&[0.0; 10]).unwrap();
        assert_eq!(auc(&failed).unwrap(), 0.0);
        assert!(success_curve(&[]).is_err());
    }

    #[test]
    fn curve_matches_counting() {
        let ious = [0.0, 0.1, 0.25, 0.5, 0.5, 0.77, 0.9, 1.0];
        let curve = success_curve(&ious).unwrap();
        for (i, (t, r)) in curve.iter().enumerate() {
            let t_exact = i as f64 / 100.0;
            assert_eq!(*t, t_exact);
            let mut count = 0;
            for v in ious {
                if v > t_exact {
                    count += 1;
                }
            }
            assert_eq!(*r, count as f64 / 8.0);
        }
    }

    #[test]
    fn report_means() {
        let gt = vec![b(0.0, 0.0, 10.0, 10.0); 2];
        let half = b(0.0, 0.0, 10.0, 5.0);
        let r = SequenceResult::new(vec![half, gt[0]], &gt, 1.0).unwrap();
        let rep = category_report(std::slice::from_ref(&r), &[Some(vec!["human".into(), "human".into()])]);
        assert_eq!(rep.categories.len(), 1);
        assert_eq!(rep.categories[0].mean_iou, 0.75);

        // overall is frame-weighted: 3 frames at 0.5/1.0 and 1 frame at 1.0
        let gt3 = vec![b(0.0, 0.0, 10.0, 10.0); 3];
        let r3 = SequenceResult::new(vec![half, half, half], &gt3, 1.0).unwrap();
        let rep = category_report(
            &[r3, r],
            &[Some(vec!["animal".into(); 3]), Some(vec!["rigid".into(); 2])],
        );
        assert!((rep.overall.mean_iou - (0.5 * 4.0 + 1.0) / 5.0).abs() < 1e-12);
        let cat_mean = (0.5 + 0.75) / 2.0;
        assert!((rep.overall.mean_iou - cat_mean).abs() > 1e-3);

        let untagged = category_report(&[SequenceResult::new(vec![half], &gt[..1], 1.0).unwrap()], &[None]);
        assert_eq!(untagged.categories[0].category, UNTAGGED);
        let text = untagged.render();
        assert!(text.contains("overall,1,0.500000"));
        assert!(text.contains("untagged,1,0.500000"));
    }

    #[test]
    fn fps_division_and_floor() {
        assert_eq!(measure_fps(100, 4.0), 25.0);
        assert!(measure_fps(10, 0.0).is_finite());
    }

    #[test]
    fn result_line_round_trip() {
        let line = ResultLine {
            bbox: b(10.5, 20.25, 30.0, 40.125),
            score: 0.912345,
            mg_state: MgState::Stopped,
        };
        let text = line.format();
        assert_eq!(text, "10.500,20.250,30.000,40.125,0.912345,stopped");
        assert_eq!(ResultLine::parse(&text).unwrap(), line);
        assert!(ResultLine::parse("1,2,3,4,0.5").is_err());
        assert!(ResultLine::parse("1,2,3,4,0.5,maybe").is_err());
    }

    proptest! {
        #[test]
        fn iou_properties(
            l1 in -50.0f64..50.0, t1 in -50.0f64..50.0, w1 in 0.5f64..40.0, h1 in 0.5f64..40.0,
            l2 in -50.0f64..50.0, t2 in -50.0f64..50.0, w2 in 0.5f64..40.0, h2 in 0.5f64..40.0,
            dx in -20.0f64..20.0, dy in -20.0f64..20.0,
        ) {
            let a = b(l1, t1, w1, h1);
            let c = b(l2, t2, w2, h2);
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            let moved = iou(&a.translate(dx, dy), &c.translate(dx, dy));
            prop_assert!((v - moved).abs() < 1e-9);
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn curve_non_increasing(ious in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
            let curve = success_curve(&ious).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].1 >= w[1].1));
        }

        #[test]
        fn constant_auc_counts_grid_points(v in 0.0f64..=1.0) {
            let a = auc(&success_curve(&[v; 5]).unwrap()).unwrap();
            let below = (0..GRID_POINTS).filter(|&i| (i as f64 / 100.0) < v).count();
            prop_assert!((a - below as f64 / 101.0).abs() < 1e-12);
        }
    }
}
