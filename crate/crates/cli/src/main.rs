use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use planefield::config::{parse_config, ConfigLayer, PipelineConfig};
use planefield::grouping::GroupingMethod;
use planefield::io::{load_ply, read_scene, SceneReader};
use planefield::metrics::{evaluate, EvaluationReport};
use planefield::pipeline::{reconstruct_archive, run_online, REPORT_FILE, TIMINGS_FILE};
use planefield::synth::{write_scene_archive, Preset};

/// Per-keyframe plane lists written by `online`.
const PLANES_LOG: &str = "planes.jsonl";

#[derive(Parser)]
#[command(name = "planefield", version, about = "Plane instance segmentation from posed depth keyframes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a scene archive, group its mesh into planes and planarize it.
    Reconstruct {
        scene: PathBuf,
        #[command(flatten)]
        opts: PipelineArgs,
    },
    /// Replay a scene archive keyframe by keyframe with mean-shift grouping
    /// and plane tracking.
    Online {
        scene: PathBuf,
        #[command(flatten)]
        opts: PipelineArgs,
    },
    /// Score a labeled mesh against a labeled ground-truth mesh.
    Evaluate {
        pred: PathBuf,
        gt: PathBuf,
        /// Scene archive whose keyframes define what counts as observed.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Also append the scores as a CSV row to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        opts: PipelineArgs,
    },
    /// Render a synthetic scene archive with its ground-truth mesh.
    Synth {
        /// box6, picture-wall or two-rooms.
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of keyframes (preset default when omitted).
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Settings file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    planar_threshold: Option<f64>,
    /// ransac or meanshift.
    #[arg(long)]
    grouping: Option<GroupingMethod>,
    /// Group by geometry alone.
    #[arg(long)]
    no_embeddings: bool,
    #[arg(long)]
    t_e: Option<f64>,
    #[arg(long)]
    t_n: Option<f64>,
    #[arg(long)]
    t_p: Option<f64>,
    #[arg(long)]
    pixels_per_kf: Option<usize>,
    /// Number of recent keyframes replayed at every update.
    #[arg(long)]
    replay: Option<usize>,
    #[arg(long)]
    steps_per_kf: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl PipelineArgs {
    fn flags(&self) -> ConfigLayer {
        ConfigLayer {
            seed: self.seed,
            voxel_size: self.voxel_size,
            planar_threshold: self.planar_threshold,
            grouping: self.grouping,
            no_embeddings: self.no_embeddings.then_some(true),
            t_e: self.t_e,
            t_n: self.t_n,
            t_p: self.t_p,
            pixels_per_kf: self.pixels_per_kf,
            replay: self.replay,
            steps_per_kf: self.steps_per_kf,
            lr: self.lr,
            ..Default::default()
        }
    }

    /// Resolves `base`, then the config file, then the flags.
    fn resolve_over(&self, base: ConfigLayer) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
                parse_config(&text).with_context(|| path.display().to_string())?
            }
            None => ConfigLayer::default(),
        };
        Ok(base.overlay(file).overlay(self.flags()).resolve()?)
    }

    fn resolve(&self) -> Result<PipelineConfig> {
        self.resolve_over(ConfigLayer::default())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn reconstruct_cmd(scene: &Path, opts: &PipelineArgs) -> Result<()> {
    let cfg = opts.resolve()?;
    let rec = reconstruct_archive(scene, &cfg)?;
    rec.write_outputs(&opts.out)?;
    println!("{} planes, {} vertices", rec.num_planes(), rec.mesh.num_vertices());
    Ok(())
}

fn online_cmd(scene: &Path, opts: &PipelineArgs) -> Result<()> {
    let cfg = opts.resolve_over(ConfigLayer {
        grouping: Some(GroupingMethod::MeanShift),
        ..Default::default()
    })?;
    if cfg.grouping_method != GroupingMethod::MeanShift {
        anyhow::bail!("online mode always groups with mean-shift");
    }
    let reader = SceneReader::open(scene)?;
    create_dir(&opts.out)?;
    let open = |name: &str| -> Result<BufWriter<fs::File>> {
        let path = opts.out.join(name);
        let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(file))
    };
    let mut timings = open(TIMINGS_FILE)?;
    let mut planes = open(PLANES_LOG)?;
    let rec = run_online(&reader, &cfg, |step| {
        serde_json::to_writer(&mut timings, &step.timing)?;
        writeln!(timings)?;
        serde_json::to_writer(&mut planes, step)?;
        writeln!(planes)?;
        println!("frame {}: {} planes", step.frame_id, step.planes.len());
        Ok(())
    })?;
    timings.flush()?;
    planes.flush()?;
    rec.write_outputs(&opts.out)?;
    Ok(())
}

fn evaluate_cmd(
    pred: &Path,
    gt: &Path,
    scene: Option<&Path>,
    csv: Option<&Path>,
    opts: &PipelineArgs,
) -> Result<()> {
    let cfg = opts.resolve()?;
    let pred_mesh = load_ply(pred)?;
    let gt_mesh = load_ply(gt)?;
    if gt_mesh.labels.is_none() {
        anyhow::bail!("{}: ground-truth mesh has no plane_id property", gt.display());
    }
    let frames = scene.map(read_scene).transpose()?;
    let report = evaluate(&pred_mesh, &gt_mesh, frames.as_deref(), &cfg.metrics)?;
    create_dir(&opts.out)?;
    let path = opts.out.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    if let Some(csv) = csv {
        let fresh = !csv.exists();
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv)
            .with_context(|| format!("cannot open {}", csv.display()))?;
        if fresh {
            writeln!(file, "{}", EvaluationReport::CSV_HEADER)?;
        }
        writeln!(file, "{}", report.to_csv_row())?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn synth_cmd(preset: Preset, seed: u64, frames: Option<usize>, out: &Path) -> Result<()> {
    let frames = frames.unwrap_or(preset.default_frames());
    let scene = preset.build_with_frames(seed, frames)?;
    create_dir(out)?;
    write_scene_archive(&scene, out)?;
    println!("{} with {} instances and {frames} keyframes", preset.name(), scene.num_instances());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reconstruct { scene, opts } => reconstruct_cmd(&scene, &opts),
        Command::Online { scene, opts } => online_cmd(&scene, &opts),
        Command::Evaluate {
            pred,
            gt,
            scene,
            csv,
            opts,
        } => evaluate_cmd(&pred, &gt, scene.as_deref(), csv.as_deref(), &opts),
        Command::Synth {
            preset,
            seed,
            frames,
            out,
        } => synth_cmd(preset, seed, frames, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
