//! Versioned binary container for expensive intermediates.
//!
//! Layout: magic `ARNOLDC\0`, `u32` version, `u32`-prefixed kind tag, `u64`-prefixed JSON
//! header, `u32` array count, then `u64`-prefixed little-endian `f64` arrays, closed by the
//! SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::floquet_engine::{FloquetOperator, StateLayout};
use crate::quartic_oscillator::{OscillatorParams, OscillatorSpectrum, PositionMatrix};

const MAGIC: &[u8; 8] = b"ARNOLDC\0";
pub const CONTAINER_VERSION: u32 = 1;

pub struct Container<H> {
    pub header: H,
    pub arrays: Vec<Vec<f64>>,
}

pub fn write_container<H: Serialize>(path: &Path, kind: &str, header: &H, arrays: &[&[f64]]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    buf.extend_from_slice(kind.as_bytes());
    let h = serde_json::to_vec(header)?;
    buf.extend_from_slice(&(h.len() as u64).to_le_bytes());
    buf.extend_from_slice(&h);
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        buf.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt(self.path, "truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CacheCorrupt { path: path.to_path_buf(), reason: reason.into() }
}

pub fn read_container<H: DeserializeOwned>(path: &Path, kind: &str) -> Result<Container<H>> {
    let buf = fs::read(path)?;
    if buf.len() < MAGIC.len() + 32 {
        return Err(corrupt(path, "file too short"));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(corrupt(path, format!("version {version}, expected {CONTAINER_VERSION}")));
    }
    let klen = r.u32()? as usize;
    let k = r.take(klen)?;
    if k != kind.as_bytes() {
        return Err(corrupt(path, format!("holds {:?}, expected {kind:?}", String::from_utf8_lossy(k))));
    }
    let hlen = r.u64()? as usize;
    let header: H = serde_json::from_slice(r.take(hlen)?).map_err(|e| corrupt(path, format!("header: {e}")))?;
    let n = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u64()? as usize;
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| corrupt(path, "array length overflow"))?)?;
        arrays.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
    }
    if r.pos != body.len() {
        return Err(corrupt(path, "trailing bytes"));
    }
    Ok(Container { header, arrays })
}

#[derive(Serialize, Deserialize)]
struct SpectrumHeader {
    key: String,
    params: OscillatorParams,
    convergence_change: f64,
    n_levels: usize,
    cutoff: usize,
}

/// Cache key of a spectrum: digest of the full discretization.
pub fn spectrum_key(params: &OscillatorParams) -> String {
    let s = serde_json::to_string(params).expect("params serialize");
    super::config::sha256_hex(s.as_bytes())[..16].to_string()
}

/// Stores energies and coordinate elements; wavefunctions are not cached.
pub fn save_spectrum(path: &Path, spec: &OscillatorSpectrum) -> Result<()> {
    let header = SpectrumHeader {
        key: spectrum_key(&spec.params),
        params: spec.params.clone(),
        convergence_change: spec.convergence_change,
        n_levels: spec.x_elements.n_levels,
        cutoff: spec.x_elements.cutoff,
    };
    let mut arrays: Vec<&[f64]> = vec![&spec.energies];
    arrays.extend(spec.x_elements.bands.iter().map(|b| b.as_slice()));
    write_container(path, "spectrum", &header, &arrays)
}

pub fn load_spectrum(path: &Path, params: &OscillatorParams) -> Result<OscillatorSpectrum> {
    let c: Container<SpectrumHeader> = read_container(path, "spectrum")?;
    if c.header.key != spectrum_key(params) || &c.header.params != params {
        return Err(corrupt(path, "cached spectrum belongs to a different discretization"));
    }
    let mut arrays = c.arrays.into_iter();
    let energies = arrays.next().ok_or_else(|| corrupt(path, "missing energies"))?;
    let bands: Vec<Vec<f64>> = arrays.collect();
    if bands.len() != c.header.cutoff.div_ceil(2) {
        return Err(corrupt(path, "band count does not match cutoff"));
    }
    Ok(OscillatorSpectrum {
        params: c.header.params,
        energies,
        wavefunctions: None,
        x_elements: PositionMatrix { n_levels: c.header.n_levels, cutoff: c.header.cutoff, bands },
        convergence_change: c.header.convergence_change,
    })
}

#[derive(Serialize, Deserialize)]
struct OperatorHeader {
    key: String,
    layout: StateLayout,
    period: f64,
    unitarity_defect: f64,
    schur_residual: f64,
    edge_leakage: f64,
}

fn flatten(m: &DMatrix<Complex64>) -> Vec<f64> {
    m.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[f64], n: usize) -> Option<DMatrix<Complex64>> {
    (v.len() == 2 * n * n).then(|| DMatrix::from_iterator(n, n, v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1]))))
}

pub fn save_operator(path: &Path, key: &str, op: &FloquetOperator) -> Result<()> {
    let header = OperatorHeader {
        key: key.to_string(),
        layout: op.layout.clone(),
        period: op.period,
        unitarity_defect: op.unitarity_defect,
        schur_residual: op.schur_residual,
        edge_leakage: op.edge_leakage,
    };
    let lam: Vec<f64> = op.eigenvalues.iter().flat_map(|z| [z.re, z.im]).collect();
    write_container(path, "floquet-operator", &header, &[&flatten(&op.u), &lam, &op.quasienergies, &flatten(&op.eigenvectors)])
}

pub fn load_operator(path: &Path, key: &str) -> Result<FloquetOperator> {
    let c: Container<OperatorHeader> = read_container(path, "floquet-operator")?;
    if c.header.key != key {
        return Err(corrupt(path, "cached operator belongs to a different configuration"));
    }
    let n = c.header.layout.dimension();
    let bad = || corrupt(path, "array shapes do not match the layout");
    if c.arrays.len() != 4 || c.arrays[1].len() != 2 * n || c.arrays[2].len() != n {
        return Err(bad());
    }
    Ok(FloquetOperator {
        u: unflatten(&c.arrays[0], n).ok_or_else(bad)?,
        eigenvalues: c.arrays[1].chunks_exact(2).map(|z| Complex64::new(z[0], z[1])).collect(),
        quasienergies: c.arrays[2].clone(),
        eigenvectors: unflatten(&c.arrays[3], n).ok_or_else(bad)?,
        layout: c.header.layout,
        period: c.header.period,
        unitarity_defect: c.header.unitarity_defect,
        schur_residual: c.header.schur_residual,
        edge_leakage: c.header.edge_leakage,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// Present but unreadable; recomputed.
    Recomputed,
}

impl std::fmt::Display for CacheStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
            CacheStatus::Recomputed => "recomputed",
        })
    }
}

/// Loads `path` or computes and stores the value, recomputing (with a warning) on corruption.
pub fn cached<T>(
    path: &Path,
    load: impl FnOnce(&Path) -> Result<T>,
    compute: impl FnOnce() -> Result<T>,
    save: impl FnOnce(&Path, &T) -> Result<()>,
) -> Result<(T, CacheStatus)> {
    let status = if path.exists() {
        match load(path) {
            Ok(v) => return Ok((v, CacheStatus::Hit)),
            Err(e) => {
                eprintln!("warning: {e}; recomputing");
                CacheStatus::Recomputed
            }
        }
    } else {
        CacheStatus::Miss
    };
    let v = compute()?;
    save(path, &v)?;
    Ok((v, status))
}

pub fn spectrum_path(cache_dir: &Path, params: &OscillatorParams) -> PathBuf {
    cache_dir.join(format!("spectrum-{}.bin", spectrum_key(params)))
}

pub fn operator_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(format!("operator-{key}.bin"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let a = [1.0, -2.5, f64::MIN_POSITIVE];
        write_container(&p, "demo", &("hdr", 3), &[&a, &[]]).unwrap();
        let c: Container<(String, i32)> = read_container(&p, "demo").unwrap();
        assert_eq!(c.header, ("hdr".to_string(), 3));
        assert_eq!(c.arrays, vec![a.to_vec(), vec![]]);
        assert!(matches!(read_container::<(String, i32)>(&p, "other"), Err(Error::CacheCorrupt { .. })));

        let mut bytes = fs::read(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_container::<(String, i32)>(&p, "demo"), Err(Error::CacheCorrupt { .. })));
    }

    #[test]
    fn corrupt_cache_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        fs::write(&p, b"garbage").unwrap();
        let save = |p: &Path, v: &f64| write_container(p, "v", &(), &[&[*v]]);
        let load = |p: &Path| read_container::<()>(p, "v").map(|c| c.arrays[0][0]);
        let (v, s) = cached(&p, load, || Ok(4.0), save).unwrap();
        assert_eq!((v, s), (4.0, CacheStatus::Recomputed));
        let (v, s) = cached(&p, load, || Ok(5.0), save).unwrap();
        assert_eq!((v, s), (4.0, CacheStatus::Hit));
    }
}
