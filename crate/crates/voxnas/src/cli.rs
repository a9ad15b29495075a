//! Subcommand pipeline: voxelize -> search -> train -> reconstruct -> eval,
//! plus export. Stages hand off through files (VOXB grids, JSONL candidate
//! logs, NASV models) so every stage is re-runnable from its inputs.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;
use voxnas::error::{Error, Result};
use voxnas::geometry::{self, VoxelGrid};
use voxnas::nas::{self, SearchConfig, SearchSpace};
use voxnas::neuralnet::{self, ActivationKind, ArchSpec, MlpNetwork, TrainConfig};
use voxnas::sampling;
use voxnas::selection::{self, SelectionConfig};
use voxnas::{mesh_io, metrics};

#[derive(Parser)]
#[command(
    name = "voxnas",
    about = "Compress a single 3D model into a tiny architecture-searched MLP occupancy classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a mesh (OBJ/STL) and rasterize it to a VOXB occupancy grid.
    Voxelize(VoxelizeArgs),
    /// Run the architecture search and write a JSONL candidate log.
    Search(SearchArgs),
    /// Select a candidate (or take a fixed architecture) and train it to
    /// convergence, writing a NASV model.
    Train(TrainArgs),
    /// Rebuild an occupancy grid from a NASV model by inference alone.
    Reconstruct(ReconstructArgs),
    /// Score a reconstructed grid against ground truth (IoU, Chamfer x1000).
    Eval(EvalArgs),
    /// Export a VOXB grid as an OBJ of voxel cubes or a point list.
    Export(ExportArgs),
}

#[derive(Args)]
struct VoxelizeArgs {
    /// Input mesh (.obj ASCII or .stl binary).
    mesh: PathBuf,
    /// Grid resolution N (grid is N^3).
    #[arg(short = 'n', long, default_value_t = 128)]
    resolution: u32,
    /// Normalization sphere radius.
    #[arg(long, default_value_t = 0.9)]
    radius: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// Ground-truth VOXB grid.
    #[arg(long)]
    grid: PathBuf,
    /// Candidate log output (JSON lines).
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 6)]
    per_round: usize,
    /// Proxy-task epochs (e1).
    #[arg(long, default_value_t = 3)]
    proxy_epochs: usize,
    /// Comma-separated activation search space, e.g. `relu` or `relu,elu,swish`.
    #[arg(long, default_value = "relu,elu,swish")]
    activations: String,
    /// Drop the network-size term from the reward (ablation).
    #[arg(long)]
    no_size_reward: bool,
    /// Mark the log so `train` skips the filter-then-smallest step (ablation).
    #[arg(long)]
    no_postprocess: bool,
    /// Evaluate search accuracy on this many sampled voxels instead of all.
    #[arg(long)]
    acc_subsample: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2048)]
    batch_size: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Ground-truth VOXB grid.
    #[arg(long)]
    grid: PathBuf,
    /// Candidate log from `search`. Mutually exclusive with --fixed-arch.
    #[arg(long, conflicts_with = "fixed_arch")]
    candidates: Option<PathBuf>,
    /// Skip architecture search entirely: train this architecture,
    /// e.g. `32:relu,32:relu,32:relu,32:relu,32:relu,32:relu`.
    #[arg(long)]
    fixed_arch: Option<String>,
    /// Post-processing accuracy threshold t.
    #[arg(long, default_value_t = 0.001)]
    threshold: f64,
    /// Final training epochs (e2).
    #[arg(long, default_value_t = 30)]
    final_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2048)]
    batch_size: usize,
    /// Output model (NASV).
    #[arg(short, long)]
    out: PathBuf,
    /// Metrics report JSON for the retrained model.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Selection report JSON (chosen arch, filter set, rejections).
    #[arg(long)]
    selection_report: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short = 'n', long, default_value_t = 128)]
    resolution: u32,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report Chamfer in voxel-index coordinates instead of normalized space.
    #[arg(long)]
    index_space: bool,
    /// Optional NASV model whose parameter count fills the `size` field.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write the report JSON here as well as stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// `cubes` (surface voxel cubes) or `points` (occupied voxel centers).
    #[arg(long, default_value = "cubes")]
    format: String,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Voxelize(a) => cmd_voxelize(a),
        Command::Search(a) => cmd_search(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Export(a) => cmd_export(a),
    }
}

fn cmd_voxelize(a: VoxelizeArgs) -> Result<()> {
    if a.resolution < 8 {
        return Err(Error::ResolutionTooSmall(a.resolution));
    }
    let mesh = mesh_io::load_mesh(&a.mesh)?;
    let mesh = geometry::normalize_mesh(&mesh, a.radius)?;
    let grid = geometry::voxelize(&mesh, a.resolution)?;
    let support = geometry::support_set(&grid);
    grid.save(&a.out)?;
    println!(
        "{}",
        serde_json::json!({
            "resolution": a.resolution,
            "occupied": grid.count_occupied(),
            "surface": support.surface.len(),
            "outer": support.outer.len(),
            "out": a.out,
        })
    );
    Ok(())
}

fn parse_activations(s: &str) -> Result<Vec<ActivationKind>> {
    s.split(',')
        .map(|p| ActivationKind::parse(p.trim()))
        .collect()
}

fn cmd_search(a: SearchArgs) -> Result<()> {
    let grid = VoxelGrid::load(&a.grid)?;
    let support = geometry::support_set(&grid);
    let data = sampling::build_training_set(&grid, &support, a.seed)?;
    let space = SearchSpace {
        activations: parse_activations(&a.activations)?,
        ..Default::default()
    };
    let cfg = SearchConfig {
        rounds: a.rounds,
        per_round: a.per_round,
        proxy_epochs: a.proxy_epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        size_reward: !a.no_size_reward,
        postprocess: !a.no_postprocess,
        acc_subsample: a.acc_subsample,
        seed: a.seed,
        ..Default::default()
    };
    let records = nas::run_search(&grid, &data, &space, &cfg);
    nas::write_candidate_log(&a.out, &cfg, &records)?;
    let best = records
        .iter()
        .max_by(|x, y| x.acc.partial_cmp(&y.acc).unwrap())
        .ok_or(Error::NoCandidates)?;
    println!(
        "{}",
        serde_json::json!({
            "candidates": records.len(),
            "best_acc": best.acc,
            "best_arch": best.arch.describe(),
            "log": a.out,
        })
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let grid = VoxelGrid::load(&a.grid)?;
    let support = geometry::support_set(&grid);
    let data = sampling::build_training_set(&grid, &support, a.seed)?;
    let sel_cfg = SelectionConfig {
        threshold: a.threshold,
        final_epochs: a.final_epochs,
    };

    let arch: ArchSpec = if let Some(spec) = &a.fixed_arch {
        ArchSpec::parse(spec)?
    } else {
        let log_path = a
            .candidates
            .as_ref()
            .ok_or_else(|| Error::Format("need --candidates or --fixed-arch".into()))?;
        let (search_cfg, records) = nas::read_candidate_log(log_path)?;
        let chosen = if search_cfg.postprocess {
            selection::select_candidate(&records, &sel_cfg)?
        } else {
            selection::select_max_reward(&records)?
        };
        if let Some(path) = &a.selection_report {
            let report = selection::selection_report(&records, &sel_cfg)?;
            std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        }
        chosen.arch.clone()
    };

    let train_cfg = TrainConfig {
        epochs: a.final_epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..Default::default()
    };
    let start = Instant::now();
    let (net, report, _history) = selection::finalize(&arch, &data, &grid, &sel_cfg, &train_cfg)?;
    net.save(&a.out)?;
    let out = serde_json::json!({
        "arch": arch.describe(),
        "iou": report.iou,
        "cd_x1000": report.cd_x1000,
        "size": report.size,
        "resolution": report.resolution,
        "runtime_seconds": start.elapsed().as_secs_f64(),
        "model": a.out,
    });
    if let Some(path) = &a.report {
        std::fs::write(path, serde_json::to_string_pretty(&out)?)?;
    }
    println!("{out}");
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let net = MlpNetwork::load(&a.model)?;
    let grid = neuralnet::reconstruct(&net, a.resolution)?;
    grid.save(&a.out)?;
    println!(
        "{}",
        serde_json::json!({
            "resolution": a.resolution,
            "occupied": grid.count_occupied(),
            "out": a.out,
        })
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let pred = VoxelGrid::load(&a.pred)?;
    let gt = VoxelGrid::load(&a.gt)?;
    let space = if a.index_space {
        metrics::CoordSpace::VoxelIndex
    } else {
        metrics::CoordSpace::Normalized
    };
    let size = match &a.model {
        Some(path) => MlpNetwork::load(path)?.num_parameters(),
        None => 0,
    };
    let report = serde_json::json!({
        "iou": metrics::iou(&pred, &gt)?,
        "cd_x1000": metrics::chamfer_in(&pred, &gt, space)?,
        "size": size,
        "resolution": gt.resolution(),
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    if let Some(path) = &a.out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let grid = VoxelGrid::load(&a.grid)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    match a.format.as_str() {
        "points" => {
            for idx in 0..grid.len() {
                if grid.get(idx) {
                    let c = grid.center(idx);
                    writeln!(f, "v {} {} {}", c[0], c[1], c[2])?;
                }
            }
        }
        "cubes" => {
            // One cube per surface voxel; interior cubes would be invisible.
            let support = geometry::support_set(&grid);
            let h = grid.pitch() / 2.0;
            let mut vbase = 1usize;
            for &idx in &support.surface {
                let c = grid.center(idx);
                for dz in [-h, h] {
                    for dy in [-h, h] {
                        for dx in [-h, h] {
                            writeln!(f, "v {} {} {}", c[0] + dx, c[1] + dy, c[2] + dz)?;
                        }
                    }
                }
                // Corner order: bit 0 -> x, bit 1 -> y, bit 2 -> z.
                const FACES: [[usize; 4]; 6] = [
                    [0, 2, 3, 1], // z-
                    [4, 5, 7, 6], // z+
                    [0, 1, 5, 4], // y-
                    [2, 6, 7, 3], // y+
                    [0, 4, 6, 2], // x-
                    [1, 3, 7, 5], // x+
                ];
                for face in FACES {
                    writeln!(
                        f,
                        "f {} {} {} {}",
                        vbase + face[0],
                        vbase + face[1],
                        vbase + face[2],
                        vbase + face[3]
                    )?;
                }
                vbase += 8;
            }
        }
        other => return Err(Error::Format(format!("unknown export format '{other}'"))),
    }
    Ok(())
}
