//! Writes the built-in benchmark scenario as JSON.
//!
//! cargo run --example dump_benchmark -- scenarios/benchmark.json

use std::path::PathBuf;

use tlfusion::simulator::benchmark::benchmark_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("benchmark.json"));
    let text = serde_json::to_string_pretty(&benchmark_scenario())?;
    std::fs::write(&path, text + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}
