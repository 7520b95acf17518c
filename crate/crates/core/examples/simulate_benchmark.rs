//! Generates the benchmark scenario, writes the runner's input files to a
//! directory and prints a summary of what was produced.
//!
//!     cargo run --example simulate_benchmark -- /tmp/bench

use std::path::PathBuf;

use tlfusion::harness::io::write_sim_output;
use tlfusion::simulator::benchmark::benchmark_scenario;
use tlfusion::simulator::generate;

fn main() -> tlfusion::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "benchmark-out".into()));
    let out = generate(&benchmark_scenario())?;
    write_sim_output(&out, &dir)?;

    let light_frames: usize = out.ground_truth.iter().map(|f| f.lights.len()).sum();
    let occluded = out.ground_truth.iter().flat_map(|f| &f.lights).filter(|l| l.visible_in.is_empty()).count();
    let flashing = out.ground_truth.iter().flat_map(|f| &f.lights).filter(|l| l.flashing).count();
    println!("frames           {}", out.ground_truth.len());
    println!("detections       {}", out.detections.len());
    println!("gt light-frames  {light_frames} ({occluded} occluded, {flashing} flashing)");
    println!("written to       {}", dir.display());
    Ok(())
}
