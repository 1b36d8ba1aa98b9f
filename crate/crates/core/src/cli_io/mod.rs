//! Run configuration, caching of expensive stages, CSV emission and the command layer
//! behind the `arnold` binary.

pub mod cache;
pub mod commands;
pub mod config;
pub mod output;

use std::cell::OnceCell;

use serde::Serialize;

pub use cache::CacheStatus;
pub use commands::{run, Command, FigureId, Report};
pub use config::{RunConfig, CACHE_DIR_ENV, OUTPUT_DIR_ENV};
pub use output::{CsvTable, ProducedFile, RunManifest};

use crate::error::{Error, Result};
use crate::floquet_engine::{assemble_operator, DriveParams, FloquetOperator};
use crate::quartic_oscillator::{solve_spectrum, OscillatorSpectrum};
use crate::resonance_basis::ResonanceBasis;

/// Basis, drive and one-period operator for one coupling value.
pub struct Stage {
    pub basis: ResonanceBasis,
    pub drive: DriveParams,
    pub op: FloquetOperator,
    pub status: CacheStatus,
}

/// Lazily evaluated, cache-backed chain spectrum → basis → operator.
pub struct Pipeline {
    pub config: RunConfig,
    pub config_hash: String,
    /// Fail with a dependency message instead of computing uncached stages.
    pub cache_only: bool,
    spectrum: OnceCell<(OscillatorSpectrum, CacheStatus)>,
}

#[derive(Serialize)]
struct OperatorKey<'a> {
    spectrum: String,
    resonance: crate::resonance_basis::ResonanceParams,
    drive: &'a config::DriveConfig,
    floquet: &'a crate::floquet_engine::FloquetOptions,
}

impl Pipeline {
    /// Validates the configuration; nothing is computed yet.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let config_hash = config.hash();
        Ok(Pipeline { config, config_hash, cache_only: false, spectrum: OnceCell::new() })
    }

    pub fn spectrum(&self) -> Result<&OscillatorSpectrum> {
        Ok(&self.spectrum_with_status()?.0)
    }

    pub fn spectrum_with_status(&self) -> Result<&(OscillatorSpectrum, CacheStatus)> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let params = self.config.oscillator.params();
        let path = cache::spectrum_path(&self.config.cache_dir, &params);
        if self.cache_only && !path.exists() {
            return Err(Error::MissingStage(format!("spectrum not cached at {}; run `arnold spectrum` first", path.display())));
        }
        let v = cache::cached(&path, |p| cache::load_spectrum(p, &params), || solve_spectrum(&params), cache::save_spectrum)?;
        eprintln!("cache: spectrum {}", v.1);
        Ok(self.spectrum.get_or_init(|| v))
    }

    pub fn basis(&self, mu: f64) -> Result<ResonanceBasis> {
        ResonanceBasis::build(self.spectrum()?, &self.config.resonance.params(mu))
    }

    pub fn drive(&self, basis: &ResonanceBasis) -> Result<DriveParams> {
        let d = &self.config.drive;
        let mu = basis.params.mu;
        let drive = DriveParams::from_detuning(basis.omega, d.detuning_ratio, d.f0_over_mu * mu, d.max_denominator)?;
        drive.validate(basis.omega, d.center_tolerance, mu, d.f0_over_mu)?;
        Ok(drive)
    }

    pub fn operator_key(&self, mu: f64) -> Result<String> {
        let key = OperatorKey {
            spectrum: cache::spectrum_key(&self.spectrum()?.params),
            resonance: self.config.resonance.params(mu),
            drive: &self.config.drive,
            floquet: &self.config.floquet,
        };
        Ok(config::sha256_hex(serde_json::to_string(&key)?.as_bytes())[..16].to_string())
    }

    pub fn stage(&self, mu: f64) -> Result<Stage> {
        let basis = self.basis(mu)?;
        let drive = self.drive(&basis)?;
        let key = self.operator_key(mu)?;
        let path = cache::operator_path(&self.config.cache_dir, &key);
        if self.cache_only && !path.exists() {
            return Err(Error::MissingStage(format!(
                "operator for mu = {mu:e} not cached; run `arnold floquet --mu {mu:e}` first"
            )));
        }
        let (op, status) = cache::cached(
            &path,
            |p| cache::load_operator(p, &key),
            || assemble_operator(&basis, &drive, &self.config.floquet),
            |p, op| cache::save_operator(p, &key, op),
        )?;
        eprintln!("cache: operator mu = {mu:e} {status}");
        Ok(Stage { basis, drive, op, status })
    }
}
