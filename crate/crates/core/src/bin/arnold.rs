use std::path::PathBuf;
use std::process::ExitCode;

use arnold::cli_io::{run, Command, FigureId, Pipeline, RunConfig};
use arnold::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arnold", version, about = "Quantum and classical Arnol'd diffusion of two driven quartic oscillators")]
struct Cli {
    /// TOML file with any subset of the run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    hbar0: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    n0: Option<usize>,
    #[arg(long, global = true)]
    k_halfwidth: Option<usize>,
    #[arg(long, global = true)]
    q_halfwidth: Option<usize>,
    #[arg(long, global = true)]
    f0_over_mu: Option<f64>,
    /// Target δΩ/ω of the two drive frequencies.
    #[arg(long, global = true)]
    detuning: Option<f64>,
    /// Periods per wave-packet run.
    #[arg(long, global = true)]
    periods: Option<usize>,
    /// Any configuration field as `section.field=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Fail instead of computing stages missing from the cache.
    #[arg(long, global = true)]
    cache_only: bool,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the single-oscillator spectrum (cached).
    Spectrum,
    /// Resonance groups and their separatrix classification.
    Resonance {
        #[arg(long)]
        mu: Option<f64>,
    },
    /// One-period operator and quasienergy states.
    Floquet {
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Wave-packet spreading and quantum diffusion.
    Evolve {
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Classical stochastic layer and ensemble diffusion.
    Classical {
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Data for one figure: fig1 .. fig5.
    Figure { id: String },
    /// Diffusion scan over the coupling grid (resumable).
    Scan {
        /// Comma-separated couplings replacing `scan.mu_grid`.
        #[arg(long, value_delimiter = ',')]
        mu_grid: Option<Vec<f64>>,
    },
}

fn resolve(cli: &Cli) -> Result<(RunConfig, Option<Command>)> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_env_overrides();
    if let Some(v) = &cli.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = &cli.cache_dir {
        c.cache_dir = v.clone();
    }
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = cli.hbar0 {
        c.oscillator.hbar0 = v;
    }
    if let Some(v) = cli.n_max {
        c.oscillator.n_max = v;
    }
    if let Some(v) = cli.n0 {
        c.resonance.n0 = v;
    }
    if let Some(v) = cli.k_halfwidth {
        c.resonance.k_halfwidth = v;
    }
    if let Some(v) = cli.q_halfwidth {
        c.resonance.q_halfwidth = v;
    }
    if let Some(v) = cli.f0_over_mu {
        c.drive.f0_over_mu = v;
    }
    if let Some(v) = cli.detuning {
        c.drive.detuning_ratio = v;
    }
    if let Some(v) = cli.periods {
        c.dynamics.periods = v;
    }
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| arnold::Error::Validation(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        c.set_path(k.trim(), v.trim())?;
    }
    let Some(command) = &cli.command else { return Ok((c, None)) };
    let cmd = match command {
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Resonance { mu } => Command::Resonance { mu: *mu },
        Cmd::Floquet { mu } => Command::Floquet { mu: *mu },
        Cmd::Evolve { mu } => Command::Evolve { mu: *mu },
        Cmd::Classical { mu } => Command::Classical { mu: *mu },
        Cmd::Figure { id } => Command::Figure(id.parse::<FigureId>()?),
        Cmd::Scan { mu_grid } => {
            if let Some(g) = mu_grid {
                c.scan.mu_grid = g.clone();
            }
            Command::Scan
        }
    };
    Ok((c, Some(cmd)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    let result = resolve(&cli).and_then(|(config, cmd)| {
        if cli.print_config {
            print!("{}", config.to_toml());
            return Ok(());
        }
        let cmd = cmd.ok_or_else(|| arnold::Error::Validation("a subcommand is required; see --help".into()))?;
        let mut p = Pipeline::new(config)?;
        p.cache_only = cli.cache_only;
        let report = run(&cmd, &p)?;
        print!("{}", report.summary);
        for f in &report.files {
            println!("wrote {}", f.path.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
