//! Spread of wave packets started at the resonance center, on the separatrix and above it,
//! using the cached pipeline (`ARNOLD_CACHE_DIR`, default `cache`).
//!
//!     cargo run --release --example evolve -- [mu] [periods]

use arnold::cli_io::{Pipeline, RunConfig};
use arnold::quantum_dynamics::{
    detect_saturation, evolve_many, fit_diffusion, initial_level, InitialKind, PacketState, Saturation,
};

fn main() -> arnold::Result<()> {
    let mut args = std::env::args().skip(1);
    let mu: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.25e-4);
    let periods: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let p = Pipeline::new(RunConfig::default().with_env_overrides())?;
    let st = p.stage(mu)?;
    println!("mu = {mu:e}, drive {}/{}, dimension {}", st.drive.i, st.drive.j, st.op.layout.dimension());

    let kinds = [InitialKind::ResonanceCenter, InitialKind::Separatrix, InitialKind::AboveSeparatrix];
    let mut states = Vec::new();
    let mut labels = Vec::new();
    for k in kinds {
        let s = initial_level(&st.basis, k, 0, p.config.dynamics.above_offset)?;
        states.push(PacketState::basis_state(&st.op.layout, 0, s)?);
        labels.push(format!("{} (s = {s})", k.label()));
    }
    let trajs = evolve_many(&st.op, &states, periods, &labels)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "N", "center", "separatrix", "above");
    for n in [0, 50, 100, 250, 500, 1000, 1500, 2000, 2500, periods] {
        if n <= periods {
            println!("{n:6} {:12.5} {:12.5} {:12.5}", trajs[0].delta_q[n], trajs[1].delta_q[n], trajs[2].delta_q[n]);
        }
    }
    let opts = p.config.dynamics.saturation();
    for t in &trajs {
        let sat = detect_saturation(&t.delta_q, &opts).unwrap_or(Saturation::NotDetected);
        match fit_diffusion(&t.delta_q, opts.window, sat) {
            Ok(f) => println!("{}: D = {:.3e} +- {:.1e}, saturation {sat:?}", t.label, f.d, f.stderr),
            Err(e) => println!("{}: {e}", t.label),
        }
    }
    Ok(())
}
