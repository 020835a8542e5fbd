//! Runs every experiment of configs/reference.json through the library
//! (the same path as `wbl verify`) and prints one line per report.

use std::path::Path;

use wishart_bridge::cli::load_config;
use wishart_bridge::harness::{RunOptions, run_experiment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json");
    let cfg = load_config(&path, None)?;
    let opts = RunOptions::default();
    for exp in &cfg.experiments {
        let r = run_experiment(exp, &opts)?;
        println!(
            "{:20} {:10} rows {:2}  max |z| {:6.2}  excluded {:4}  passed {}  {:?}",
            exp.name,
            exp.kind.as_str(),
            r.records.len(),
            r.max_abs_z,
            r.excluded_path_count,
            r.passed,
            r.variant_selection
        );
    }
    Ok(())
}
