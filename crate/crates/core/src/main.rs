use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rgbd_tracker::config::RunConfig;
use rgbd_tracker::eval::{auc, category_report, format_curve, read_results, success_curve, SequenceResult};
use rgbd_tracker::frames::{
    load_sequence, read_color_png, read_ground_truth, read_tags, write_color_png, write_gray_png, BBox,
};
use rgbd_tracker::pipeline::Tracker;
use rgbd_tracker::refiner::{save_weights, seeded_grad_check, train_synthetic, GRAD_CHECK_SEED};
use rgbd_tracker::synth::{mg_augment, render_sequence, AugmentSpec, SceneSpec};
use rgbd_tracker::{frames, Error, Result};

#[derive(Parser)]
#[command(name = "rgbd-track", version, about = "Depth-assisted RGB-D single-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence from a scene file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a sequence from its first ground-truth box.
    Track {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Refiner weights; overrides the config's `weights`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_mg: bool,
        #[arg(long)]
        no_dr: bool,
        /// Write each frame's masks and masked search image next to the results.
        #[arg(long)]
        dump_masks: bool,
    },
    /// Train the box refiner on synthetic crops.
    TrainRefiner {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a results file against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// Sequence directory holding groundtruth.txt.
        #[arg(long)]
        gt: PathBuf,
        /// Per-frame tags; defaults to tags.txt in the sequence directory.
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Paste random mask-colored rectangles around a target box.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "box")]
        bbox: BBox,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference refiner gradients.
    Gradcheck {
        #[arg(long, default_value_t = GRAD_CHECK_SEED)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out } => {
            let spec = SceneSpec::load(&spec)?;
            let seq = render_sequence(&spec)?;
            frames::write_sequence(&out, &seq)?;
            println!("wrote {} frames to {}", seq.frames.len(), out.display());
        }
        Command::Track {
            seq,
            config,
            weights,
            out,
            no_mg,
            no_dr,
            dump_masks,
        } => track(&seq, config.as_deref(), weights, &out, no_mg, no_dr, dump_masks)?,
        Command::TrainRefiner { n, seed, out } => {
            let outcome = train_synthetic(n, seed, |s| {
                eprintln!(
                    "epoch {:>2}  loss {:.6}  lr {:.5}..{:.5}{}",
                    s.epoch,
                    s.mean_loss,
                    s.lr_first,
                    s.lr_last,
                    if s.backbone_frozen { "  backbone frozen" } else { "" }
                )
            })?;
            save_weights(&outcome.model, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval {
            results,
            gt,
            tags,
            report,
            curve,
        } => {
            let lines = read_results(&results)?;
            let truth = read_ground_truth(&gt.join("groundtruth.txt"))?;
            let result = SequenceResult::new(lines.iter().map(|l| l.bbox).collect(), &truth, 0.0)?;
            let tag_path = tags.unwrap_or_else(|| gt.join("tags.txt"));
            let tags = if tag_path.is_file() {
                Some(read_tags(&tag_path)?)
            } else {
                None
            };
            let points = success_curve(&result.ious)?;
            let area = auc(&points)?;
            let mut text = category_report(std::slice::from_ref(&result), &[tags]).render();
            text.push_str(&format!("\nauc,{area:.6}\n"));
            write(&report, &text)?;
            write(&curve, &format_curve(&points))?;
            println!("mean IOU {:.4}  AUC {:.4}", result.mean_iou(), area);
        }
        Command::Augment { input, bbox, seed, out } => {
            let image = read_color_png(&input)?;
            let spec = AugmentSpec {
                seed,
                ..AugmentSpec::default()
            };
            write_color_png(&out, &mg_augment(&image, &bbox, &spec)?)?;
        }
        Command::Gradcheck { seed } => {
            let report = seeded_grad_check(seed)?;
            println!("max relative error {:.3e}", report.max_rel_error);
            println!(
                "checked {} parameters; worst {}[{}]",
                report.checked, report.worst.0, report.worst.1
            );
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn mask_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push("_masks");
    out.with_file_name(name)
}

fn track(
    seq_dir: &Path,
    config: Option<&Path>,
    weights: Option<PathBuf>,
    out: &Path,
    no_mg: bool,
    no_dr: bool,
    dump_masks: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .with_env_seed()?;
    if weights.is_some() {
        cfg.weights = weights;
    }
    cfg.enable_mg &= !no_mg;
    cfg.enable_dr &= !no_dr;

    let seq = load_sequence(seq_dir)?;
    let tracker = Tracker::from_config(cfg)?;
    let masks = mask_dir(out);
    if dump_masks {
        fs::create_dir_all(&masks).map_err(|e| Error::Io {
            path: masks.clone(),
            source: e,
        })?;
    }
    let mut dump_error = None;
    let run = tracker.run_with(&seq, dump_masks, |frame, step| {
        let Some(m) = &step.diagnostics.masks else { return };
        if dump_error.is_some() {
            return;
        }
        let base = |kind: &str| masks.join(format!("{:08}_{kind}.png", frame.index));
        let written = write_gray_png(&base("m"), &m.m)
            .and_then(|_| write_color_png(&base("mc"), &m.mc))
            .and_then(|_| write_color_png(&base("xm"), &m.xm));
        if let Err(e) = written {
            dump_error = Some(e);
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    write(out, &run.to_text())?;
    for (index, message) in &run.errors {
        eprintln!("frame {index}: kept previous box ({message})");
    }
    eprintln!(
        "{} frames, {} coasted, {:.1} fps",
        run.lines.len(),
        run.errors.len(),
        rgbd_tracker::eval::measure_fps(run.lines.len().saturating_sub(1), run.seconds)
    );
    Ok(())
}
