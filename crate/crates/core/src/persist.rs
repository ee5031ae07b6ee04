//! On-disk formats for Hamiltonians and MPOs.
//!
//! Every artifact is a pair: `<stem>.bin` holds little-endian f64 values,
//! `<stem>.json` holds the shapes, metadata, provenance and a SHA-256 of the
//! payload. Writes go to a temporary file in the same directory and are then
//! renamed into place.

use crate::error::{Error, Result};
use crate::hamiltonian::{DenseHamiltonian, Family, HamiltonianMeta, HamiltonianRep, LocalSum, LocalTerm};
use crate::mpo::{Core, Mpo};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            version: VERSION.to_string(),
        }
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Input(format!("payload of {} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_pair<H: Serialize>(stem: &Path, header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(payload);
    let sidecar = Sidecar {
        header,
        values: payload.len(),
        sha256: digest(&bytes),
    };
    atomic_write(&with_ext(stem, "bin"), &bytes)?;
    atomic_write(&with_ext(stem, "json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

fn read_pair<H: for<'de> Deserialize<'de>>(stem: &Path) -> Result<(H, Vec<f64>)> {
    let json = fs::read_to_string(with_ext(stem, "json"))?;
    let sidecar: Sidecar<H> = serde_json::from_str(&json)?;
    let bytes = fs::read(with_ext(stem, "bin"))?;
    if digest(&bytes) != sidecar.sha256 {
        return Err(Error::Input(format!("{} does not match its sidecar checksum", with_ext(stem, "bin").display())));
    }
    let values = decode(&bytes)?;
    if values.len() != sidecar.values {
        return Err(Error::Input(format!("sidecar declares {} values, payload has {}", sidecar.values, values.len())));
    }
    Ok((sidecar.header, values))
}

#[derive(Serialize, Deserialize)]
struct Sidecar<H> {
    header: H,
    values: usize,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermHeader {
    start: usize,
    width: usize,
    support: [usize; 2],
    rows: usize,
    coefficient: f64,
    family: Family,
    samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HamiltonianHeader {
    format: String,
    meta: HamiltonianMeta,
    provenance: Option<Provenance>,
    /// Present for dense matrices.
    size: Option<usize>,
    /// Present for local sums, in payload order.
    terms: Vec<TermHeader>,
}

/// Writes `<stem>.bin` and `<stem>.json`. Matrices are stored column-major.
pub fn save_hamiltonian(h: &HamiltonianRep, stem: &Path, provenance: Option<Provenance>) -> Result<()> {
    let meta = h.meta().clone();
    match h {
        HamiltonianRep::Dense(d) => {
            let header = HamiltonianHeader {
                format: "dense".into(),
                meta,
                provenance,
                size: Some(d.matrix.nrows()),
                terms: Vec::new(),
            };
            write_pair(stem, &header, d.matrix.as_slice())
        }
        HamiltonianRep::Local(l) => {
            let mut payload = Vec::new();
            let terms = l
                .terms
                .iter()
                .map(|t| {
                    payload.extend_from_slice(t.block.as_slice());
                    TermHeader {
                        start: t.start,
                        width: t.width,
                        support: [t.support.start, t.support.end],
                        rows: t.block.nrows(),
                        coefficient: t.coefficient,
                        family: t.family,
                        samples: t.samples,
                    }
                })
                .collect();
            let header = HamiltonianHeader {
                format: "local".into(),
                meta,
                provenance,
                size: None,
                terms,
            };
            write_pair(stem, &header, &payload)
        }
    }
}

pub fn load_hamiltonian(stem: &Path) -> Result<(HamiltonianRep, Option<Provenance>)> {
    let (header, values): (HamiltonianHeader, _) = read_pair(stem)?;
    match header.format.as_str() {
        "dense" => {
            let n = header.size.ok_or_else(|| Error::Input("dense sidecar without a size".into()))?;
            if n * n != values.len() {
                return Err(Error::Input(format!("dense size {n} does not match {} values", values.len())));
            }
            let rep = HamiltonianRep::Dense(DenseHamiltonian {
                matrix: DMatrix::from_column_slice(n, n, &values),
                meta: header.meta,
            });
            Ok((rep, header.provenance))
        }
        "local" => {
            let mut offset = 0;
            let mut terms = Vec::with_capacity(header.terms.len());
            for t in header.terms {
                let len = t.rows * t.rows;
                let slice = values
                    .get(offset..offset + len)
                    .ok_or_else(|| Error::Input("local term runs past the payload".into()))?;
                offset += len;
                terms.push(LocalTerm {
                    start: t.start,
                    width: t.width,
                    support: t.support[0]..t.support[1],
                    block: DMatrix::from_column_slice(t.rows, t.rows, slice),
                    coefficient: t.coefficient,
                    family: t.family,
                    samples: t.samples,
                });
            }
            if offset != values.len() {
                return Err(Error::Input("payload has trailing values after the last term".into()));
            }
            let rep = HamiltonianRep::Local(LocalSum { terms, meta: header.meta });
            Ok((rep, header.provenance))
        }
        other => Err(Error::Input(format!("unknown Hamiltonian format {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpoHeader {
    pub dim: usize,
    pub k: usize,
    pub bonds: Vec<usize>,
    pub err: f64,
    pub max_bond: usize,
    pub provenance: Option<Provenance>,
}

/// Cores are stored back to back, each in its native `((a·K + i)·K + j)·R + b` order.
pub fn save_mpo(mpo: &Mpo, err: f64, max_bond: usize, stem: &Path, provenance: Option<Provenance>) -> Result<()> {
    let header = MpoHeader {
        dim: mpo.dim(),
        k: mpo.k,
        bonds: mpo.bonds(),
        err,
        max_bond,
        provenance,
    };
    let payload: Vec<f64> = mpo.cores.iter().flat_map(|c| c.data.iter().copied()).collect();
    write_pair(stem, &header, &payload)
}

pub fn load_mpo(stem: &Path) -> Result<(Mpo, MpoHeader)> {
    let (header, values): (MpoHeader, _) = read_pair(stem)?;
    if header.bonds.len() + 1 != header.dim {
        return Err(Error::Input(format!("{} bonds for {} sites", header.bonds.len(), header.dim)));
    }
    let mut dims = vec![1];
    dims.extend_from_slice(&header.bonds);
    dims.push(1);
    let k = header.k;
    let mut offset = 0;
    let mut cores = Vec::with_capacity(header.dim);
    for w in dims.windows(2) {
        let len = w[0] * k * k * w[1];
        let data = values
            .get(offset..offset + len)
            .ok_or_else(|| Error::Input("MPO core runs past the payload".into()))?
            .to_vec();
        offset += len;
        cores.push(Core {
            left: w[0],
            k,
            right: w[1],
            data,
        });
    }
    if offset != values.len() {
        return Err(Error::Input("payload has trailing values after the last core".into()));
    }
    Ok((Mpo::new(cores, k)?, header))
}
