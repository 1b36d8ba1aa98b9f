//! Build the one-period operator at a single coupling strength and report its
//! diagnostics together with the share of delocalized quasienergy states.
//!
//!     cargo run --release --example floquet -- [mu]

use std::time::Instant;

use arnold::floquet_engine::{assemble_operator, delocalization_measures, delocalized_fraction, DriveParams, FloquetOptions};
use arnold::quartic_oscillator::{solve_spectrum, OscillatorParams};
use arnold::resonance_basis::{ResonanceBasis, ResonanceParams};

fn main() -> arnold::Result<()> {
    let mu: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let spec = solve_spectrum(&OscillatorParams::auto(1.77e-5, 540))?;
    let basis = ResonanceBasis::build(&spec, &ResonanceParams::new(mu, 446, 60, 6))?;
    let drive = DriveParams::from_detuning(basis.omega, 0.25, 0.01 * mu, 64)?;
    println!("mu = {mu:e}, drive {}/{} , T = {:.4}", drive.i, drive.j, drive.period());

    let t = Instant::now();
    let op = assemble_operator(&basis, &drive, &FloquetOptions::default())?;
    println!("dimension {} assembled in {:.1?}", op.layout.dimension(), t.elapsed());
    println!("unitarity defect {:.2e}, Schur residual {:.2e}, edge leakage {:.2e}", op.unitarity_defect, op.schur_residual, op.edge_leakage);

    let m = delocalization_measures(&op);
    println!("fraction with sqrt(sigma_q) > 0.5: {:.4}", delocalized_fraction(&m, 0.5));
    Ok(())
}
