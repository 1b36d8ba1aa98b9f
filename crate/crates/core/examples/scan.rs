//! Quantum and classical diffusion over a coupling grid with the resumable scan. Outputs go
//! to `ARNOLD_OUTPUT_DIR` (default `out`); rerunning reuses finished points.
//!
//!     cargo run --release --example scan -- [mu,mu,...]

use arnold::cli_io::commands::{scan, ScanSummary};
use arnold::cli_io::{Pipeline, RunConfig};

fn main() -> arnold::Result<()> {
    let mut config = RunConfig::default().with_env_overrides();
    if let Some(grid) = std::env::args().nth(1) {
        config.scan.mu_grid = grid.split(',').map(|s| s.trim().parse().expect("mu values")).collect();
    }
    let p = Pipeline::new(config)?;
    let report = scan(&p)?;
    print!("{}", report.summary);

    let path = p.config.output_dir.join("scan_summary.json");
    let summary: ScanSummary = serde_json::from_slice(&std::fs::read(path)?)?;
    println!(
        "D_quantum below D_classical at every point: {}; M_s at the smallest mu: {:?}",
        summary.quantum_below_classical, summary.m_s_at_smallest_mu
    );
    for f in &report.files {
        println!("wrote {}", f.path.display());
    }
    Ok(())
}
