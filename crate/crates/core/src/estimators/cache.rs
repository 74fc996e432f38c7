//! On-disk cache of moment estimates.
//!
//! Records are keyed by the SHA-256 of the window bytes, the model and the
//! serialised configuration. Each file holds one JSON header line followed
//! by the mean vector and the column-major covariance as little-endian f64.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Diagnostics, ModelConfig, ModelId, MomentEstimate};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelId,
    n: usize,
    diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct EstimateCache {
    dir: PathBuf,
}

pub fn cache_key(window: &DMatrix<f64>, model: ModelId, config: &ModelConfig) -> String {
    let mut h = Sha256::new();
    h.update((window.nrows() as u64).to_le_bytes());
    h.update((window.ncols() as u64).to_le_bytes());
    for v in window.iter() {
        h.update(v.to_le_bytes());
    }
    h.update(model.as_str().as_bytes());
    h.update(serde_json::to_vec(config).expect("config serialises"));
    hex::encode(h.finalize())
}

impl EstimateCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.est"))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<MomentEstimate>> {
        let file = match fs::File::open(self.path(key)) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut reader = io::BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end()).map_err(io::Error::other)?;
        let n = header.n;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * (n + n * n) {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated cache record"));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Some(MomentEstimate {
            mu: DVector::from_column_slice(&vals[..n]),
            sigma: DMatrix::from_column_slice(n, n, &vals[n..]),
            model: header.model,
            diagnostics: header.diagnostics,
        }))
    }

    pub fn put(&self, key: &str, est: &MomentEstimate) -> io::Result<()> {
        let header = Header {
            model: est.model,
            n: est.mu.len(),
            diagnostics: est.diagnostics.clone(),
        };
        let tmp = self.dir.join(format!("{key}.tmp"));
        {
            let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
            serde_json::to_writer(&mut f, &header).map_err(io::Error::other)?;
            f.write_all(b"\n")?;
            for v in est.mu.iter().chain(est.sigma.iter()) {
                f.write_all(&v.to_le_bytes())?;
            }
            f.flush()?;
        }
        fs::rename(tmp, self.path(key))
    }
}
