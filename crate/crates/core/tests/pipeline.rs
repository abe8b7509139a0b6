use rgbd_tracker::config::RunConfig;
use rgbd_tracker::frames::{hue_distance, load_sequence, rgb_to_hsv, write_sequence, Sequence};
use rgbd_tracker::maskgen::average_target_color;
use rgbd_tracker::pipeline::Tracker;
use rgbd_tracker::refiner::RefinerModel;
use rgbd_tracker::synth::{distractor_suite, render_sequence, ObjectSpec, SceneSpec};

fn scene_with_distractor() -> Sequence {
    let target = ObjectSpec {
        color: [60, 90, 200],
        depth: 2.0,
        size: (24.0, 24.0),
        start: (40.0, 40.0),
        velocity: (0.0, 0.0),
        ..ObjectSpec::default()
    };
    let distractor = ObjectSpec {
        depth: 5.0,
        size: (20.0, 20.0),
        start: (75.0, 42.0),
        ..target.clone()
    };
    render_sequence(&SceneSpec {
        frames: 4,
        target,
        distractors: vec![distractor],
        ..SceneSpec::default()
    })
    .unwrap()
}

#[test]
fn far_look_alike_is_masked_out() {
    let seq = scene_with_distractor();
    let cfg = RunConfig {
        enable_dr: false,
        search_scale: 4.0,
        ..RunConfig::default()
    };
    let t = Tracker::new(cfg, None).unwrap();
    let mut state = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
    let out = t.step(&mut state, &seq.frames[1], true);
    assert!(out.diagnostics.masked);
    let masks = out.diagnostics.masks.expect("masks kept");
    let window = out.diagnostics.search_window.unwrap().pixel_rect();
    let (x0, y0) = (window.x0, window.y0);
    let mut checked = 0;
    for y in 44..60 {
        for x in 77..93 {
            let (cx, cy) = ((x - x0) as usize, (y - y0) as usize);
            assert_eq!(masks.m.get(cx, cy), 0, "distractor pixel ({x},{y}) kept");
            assert_ne!(masks.xm.get(cx, cy), seq.frames[1].color.get(x as usize, y as usize));
            checked += 1;
        }
    }
    assert!(checked > 200);
    // the target itself survives
    let (tx, ty) = ((52 - x0) as usize, (52 - y0) as usize);
    assert_eq!(masks.m.get(tx, ty), 1);
    assert!(out.bbox.left() < 50.0);
}

#[test]
fn mask_colors_sit_a_third_of_the_wheel_from_the_target() {
    let seq = scene_with_distractor();
    let t = Tracker::new(
        RunConfig {
            enable_dr: false,
            ..RunConfig::default()
        },
        None,
    )
    .unwrap();
    let state = t.init(&seq.frames[0], &seq.ground_truth[0]).unwrap();
    let hue = average_target_color(&seq.frames[0].color, &seq.ground_truth[0])
        .unwrap()
        .h;
    for c in [state.mask_colors.c1, state.mask_colors.c2] {
        // 8-bit quantization moves the hue by well under a degree here
        assert!((hue_distance(rgb_to_hsv(c).h, hue) - 120.0).abs() < 1.0);
    }
}

#[test]
fn refined_boxes_stay_inside_the_amplified_region() {
    let seq = render_sequence(&SceneSpec {
        frames: 12,
        target: ObjectSpec {
            velocity: (1.0, 0.5),
            ..ObjectSpec::default()
        },
        ..SceneSpec::default()
    })
    .unwrap();
    let t = Tracker::new(RunConfig::default(), Some(RefinerModel::init(3))).unwrap();
    let mut seen = 0;
    t.run_with(&seq, false, |_, out| {
        let amplified = out
            .diagnostics
            .amplified
            .unwrap_or_else(|| panic!("{:?}", out.diagnostics.error));
        assert!(amplified.contains(&out.bbox), "{} outside {}", out.bbox, amplified);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 11);
}

#[test]
fn sequence_survives_disk_round_trip() {
    let seq = render_sequence(&SceneSpec {
        frames: 3,
        tag: Some("occlusion".into()),
        ..SceneSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &seq).unwrap();
    assert_eq!(load_sequence(dir.path()).unwrap(), seq);
}

#[test]
fn suite_scenes_are_valid_and_reproducible() {
    let a = distractor_suite(7, 10);
    assert_eq!(a, distractor_suite(7, 10));
    assert_ne!(a, distractor_suite(8, 10));
    for spec in &a {
        spec.validate().unwrap();
        let d = &spec.distractors[0];
        assert_eq!(d.texture_seed, spec.target.texture_seed);
        assert!(d.depth > 2.0 * spec.target.depth);
    }
}

#[test]
fn replaying_a_run_is_deterministic_per_seed() {
    let seq = render_sequence(&distractor_suite(3, 1)[0]).unwrap();
    let run = |seed| {
        let cfg = RunConfig {
            enable_dr: false,
            search_scale: 4.0,
            seed,
            ..RunConfig::default()
        };
        Tracker::new(cfg, None).unwrap().run(&seq).unwrap().to_text()
    };
    assert_eq!(run(1), run(1));
}
