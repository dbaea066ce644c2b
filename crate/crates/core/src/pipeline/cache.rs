//! On-disk cache of electronic scans, keyed by model and grid.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::bo::ElectronicScan;
use crate::grid::Grid1D;
use crate::potentials::hex;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"VSCAN01\n";

/// Cache key for a scan of `model_fingerprint` on the given grids.
pub fn scan_key(model_fingerprint: &str, x: &Grid1D, r: &Grid1D, n_states: usize) -> String {
    let mut h = Sha256::new();
    h.update(model_fingerprint.as_bytes());
    for g in [x, r] {
        h.update(format!("|{:e},{:e},{}", g.r_min(), g.delta_r(), g.n_points()));
    }
    h.update(format!("|{n_states}|{}", env!("CARGO_PKG_VERSION")));
    hex(&h.finalize())
}

pub fn scan_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("scan_{}.bin", &key[..16]))
}

/// Writes the scan as raw little-endian floats behind a small header.
pub fn write_scan(path: &Path, key: &str, scan: &ElectronicScan) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let nx = scan.x_grid.n_points();
    let nr = scan.r_grid.n_points();
    let ns = scan.n_states();
    let mut buf = Vec::with_capacity(64 + 8 * nr * ns * (nx + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(key.as_bytes());
    for v in [nx as u64, nr as u64, ns as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for j in 0..nr {
        for n in 0..ns {
            buf.extend_from_slice(&scan.energy(n, j).to_le_bytes());
            for v in scan.state(n, j) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a cached scan; `None` when absent or written for another key.
pub fn read_scan(path: &Path, key: &str, x: &Grid1D, r: &Grid1D) -> Result<Option<ElectronicScan>> {
    let mut f = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let head = MAGIC.len() + key.len();
    if buf.len() < head + 24 || &buf[..MAGIC.len()] != MAGIC || &buf[MAGIC.len()..head] != key.as_bytes() {
        return Ok(None);
    }
    let word = |k: usize| u64::from_le_bytes(buf[head + 8 * k..head + 8 * k + 8].try_into().unwrap()) as usize;
    let (nx, nr, ns) = (word(0), word(1), word(2));
    if nx != x.n_points() || nr != r.n_points() || buf.len() != head + 24 + 8 * nr * ns * (nx + 1) {
        return Ok(None);
    }
    let mut pos = head + 24;
    let mut next = || {
        let v = f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap());
        pos += 8;
        v
    };
    let mut energies = Vec::with_capacity(nr);
    let mut states = Vec::with_capacity(nr);
    for _ in 0..nr {
        let mut e = Vec::with_capacity(ns);
        let mut s = Vec::with_capacity(ns);
        for _ in 0..ns {
            e.push(next());
            s.push((0..nx).map(|_| next()).collect::<Vec<f64>>());
        }
        energies.push(e);
        states.push(s);
    }
    ElectronicScan::from_parts(*x, *r, energies, states).map(Some)
}
