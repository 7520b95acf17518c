//! Runs the three ablation modes on the benchmark scenario and prints a
//! comparison table.
//!
//!     cargo run --release --example ablation [scenario.json]

use tlfusion::harness::{evaluate, run_pipeline_timed, AblationMode, PipelineInputs};
use tlfusion::simulator::{benchmark::benchmark_scenario, generate, Scenario};

fn main() -> tlfusion::Result<()> {
    let scenario = match std::env::args().nth(1) {
        Some(path) => Scenario::load(path.as_ref())?,
        None => benchmark_scenario(),
    };
    let out = generate(&scenario)?;
    let inputs = PipelineInputs::from_sim(&out)?;
    println!("{:<20} {:>9} {:>8} {:>6} {:>10}", "mode", "accuracy", "ape_m", "fp", "fps");
    for mode in AblationMode::ALL {
        let (reports, stats) = run_pipeline_timed(&inputs, mode, &out.config)?;
        let eval = evaluate(&reports, &out.ground_truth)?;
        println!(
            "{:<20} {:>8.2}% {:>8.3} {:>6} {:>10.0}",
            mode.name(),
            100.0 * eval.class_accuracy,
            eval.ape_m.unwrap_or(f64::NAN),
            eval.false_positives,
            stats.fps
        );
    }
    Ok(())
}
