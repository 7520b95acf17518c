use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use tlfusion::config::PipelineConfig;
use tlfusion::harness::io::{load_ground_truth, load_reports, write_json, write_jsonl, write_sim_output};
use tlfusion::harness::{emit_sequence_csv, evaluate, run_pipeline_timed, AblationMode, PipelineInputs, RunStats};
use tlfusion::simulator::{generate, Scenario};
use tlfusion::{Error, Result};

#[derive(Parser)]
#[command(name = "tlfusion", version, about = "Traffic-light fusion pipeline runner and evaluator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate detection, pose and ground-truth streams from a scenario.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the pipeline and write one report line per frame.
    Run {
        #[arg(short, long)]
        map: PathBuf,
        /// Directory of per-camera calibration files.
        #[arg(short, long)]
        calib: PathBuf,
        #[arg(short, long)]
        detections: PathBuf,
        #[arg(short, long)]
        poses: PathBuf,
        /// od, fusion or tracking.
        #[arg(long, default_value = "tracking")]
        mode: AblationMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score reports against ground truth.
    Eval {
        #[arg(short, long)]
        reports: PathBuf,
        #[arg(short, long)]
        ground_truth: PathBuf,
        /// Stats file written by `run`; adds throughput to the report.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Per-frame states of one light as CSV.
    PlotData {
        #[arg(short, long)]
        reports: PathBuf,
        #[arg(short, long)]
        ground_truth: PathBuf,
        #[arg(long)]
        light: String,
        /// Reports of an od_only run for the od_state column.
        #[arg(long)]
        od_reports: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn stats_path(reports: &Path) -> PathBuf {
    let mut name = reports.as_os_str().to_owned();
    name.push(".stats.json");
    PathBuf::from(name)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { scenario, out } => {
            let output = generate(&Scenario::load(&scenario)?)?;
            write_sim_output(&output, &out)?;
            info!("{} detections, {} frames", output.detections.len(), output.ground_truth.len());
        }
        Command::Run { map, calib, detections, poses, mode, config, out } => {
            let config = match config {
                Some(path) => PipelineConfig::load(&path)?,
                None => PipelineConfig::default(),
            };
            let inputs = PipelineInputs::load(&map, &calib, &detections, &poses)?;
            let (reports, stats) = run_pipeline_timed(&inputs, mode, &config)?;
            write_jsonl(&out, &reports)?;
            write_json(&stats_path(&out), &stats)?;
            info!("{} frames at {:.0} frames/s", stats.frames, stats.fps);
        }
        Command::Eval { reports, ground_truth, stats, out } => {
            let mut eval = evaluate(&load_reports(&reports)?, &load_ground_truth(&ground_truth)?)?;
            if let Some(path) = stats {
                let text = fs::read_to_string(&path)?;
                let stats: RunStats =
                    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), &e))?;
                eval.fps = Some(stats.fps);
            }
            write_json(&out, &eval)?;
        }
        Command::PlotData { reports, ground_truth, light, od_reports, out } => {
            let reports = load_reports(&reports)?;
            let od = od_reports.as_deref().map(load_reports).transpose()?;
            let gt = load_ground_truth(&ground_truth)?;
            let file = BufWriter::new(fs::File::create(&out)?);
            emit_sequence_csv(file, &reports, od.as_deref(), &gt, &light)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
