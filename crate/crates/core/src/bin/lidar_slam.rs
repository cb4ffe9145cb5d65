use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lidar_slam::config::PipelineConfig;
use lidar_slam::dataset_io::{write_trajectory_tum, DatasetLayout};
use lidar_slam::error::Error;
use lidar_slam::pipeline::{
    diagnostics_csv, evaluate, export_map_ply, loops_csv, run_odometry, run_slam,
};
use lidar_slam::synth::{SceneKind, SyntheticWorld};

#[derive(Parser)]
#[command(name = "lidar-slam", about = "LiDAR odometry and mapping toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file with flat `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline override, e.g. `--set icp.max_dist=1.0` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => {
                let mut c = PipelineConfig::default();
                c.apply_text(&std::fs::read_to_string(path)?)?;
                c
            }
            None => PipelineConfig::default(),
        };
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {item:?}")))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scan-to-map odometry over a dataset directory.
    Odometry {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output trajectory (TUM format).
        #[arg(long)]
        out: PathBuf,
        /// Per-scan diagnostics CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Final map as labeled PLY.
        #[arg(long)]
        map_out: Option<PathBuf>,
    },
    /// Odometry plus loop closure and pose-graph optimization.
    Slam {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Optimized pose graph in a NODE/EDGE text format.
        #[arg(long)]
        graph_out: Option<PathBuf>,
        /// Accepted loop-closure events CSV.
        #[arg(long)]
        loops_csv: Option<PathBuf>,
        #[arg(long)]
        map_out: Option<PathBuf>,
    },
    /// Compare an estimated trajectory against a reference (both TUM).
    Eval {
        estimate: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic dataset with ground truth.
    Synth {
        /// One of: box_room, straight_corridor, zigzag_corridor, outdoor_blocks.
        scene: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        scans: usize,
    },
    /// Rebuild the map from a dataset via odometry and export it as PLY.
    ExportMap {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Odometry {
            dataset,
            config,
            out,
            diagnostics,
            map_out,
        } => {
            let config = config.build()?;
            let layout = DatasetLayout::discover(&dataset)?;
            let result = run_odometry(&layout, &config)?;
            write_trajectory_tum(&result.trajectory, &out)?;
            if let Some(path) = diagnostics {
                std::fs::write(path, diagnostics_csv(&result.diagnostics))?;
            }
            if let Some(path) = map_out {
                export_map_ply(&result.map, &path)?;
            }
            println!(
                "odometry: {} scans, {} skipped, map size {}",
                result.trajectory.len(),
                result.skipped,
                result.map.len()
            );
        }
        Command::Slam {
            dataset,
            config,
            out,
            diagnostics,
            graph_out,
            loops_csv: loops_path,
            map_out,
        } => {
            let config = config.build()?;
            let layout = DatasetLayout::discover(&dataset)?;
            let result = run_slam(&layout, &config)?;
            write_trajectory_tum(&result.trajectory, &out)?;
            if let Some(path) = diagnostics {
                std::fs::write(path, diagnostics_csv(&result.diagnostics))?;
            }
            if let Some(path) = graph_out {
                std::fs::write(path, result.graph.export())?;
            }
            if let Some(path) = loops_path {
                std::fs::write(path, loops_csv(&result.loops))?;
            }
            if let Some(path) = map_out {
                export_map_ply(&result.map, &path)?;
            }
            println!(
                "slam: {} scans, {} keyframes, {} loop closures",
                result.trajectory.len(),
                result.graph.node_count(),
                result.loops.len()
            );
        }
        Command::Eval {
            estimate,
            reference,
            config,
        } => {
            let config = config.build()?;
            let (a, r) = evaluate(&estimate, &reference, &config.eval)?;
            println!("metric mean max rmse std");
            println!("APE[m] {:.6} {:.6} {:.6} {:.6}", a.mean, a.max, a.rmse, a.stdev);
            println!("RPE[m] {:.6} {:.6} {:.6} {:.6}", r.mean, r.max, r.rmse, r.stdev);
        }
        Command::Synth {
            scene,
            config,
            out,
            scans,
        } => {
            let config = config.build()?;
            let kind: SceneKind = scene.parse()?;
            let world = SyntheticWorld::new(kind, scans);
            let layout = world.generate(&config.proj, &out)?;
            println!("synth: wrote {} scans to {}", layout.scan_paths.len(), out.display());
        }
        Command::ExportMap {
            dataset,
            config,
            out,
        } => {
            let config = config.build()?;
            let layout = DatasetLayout::discover(&dataset)?;
            let result = run_odometry(&layout, &config)?;
            export_map_ply(&result.map, &out)?;
            println!("export-map: {} points to {}", result.map.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
