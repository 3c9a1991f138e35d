//! Spectrum files: one JSON header line, then little-endian `f64` blocks
//! (eigenvectors column-major `n × k`, then the `n` mass entries).

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Method, Spectrum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumHeader {
    pub format: String,
    pub n: usize,
    pub k: usize,
    pub tol: f64,
    pub method: Method,
    pub eigenvalues: Vec<f64>,
    pub blocks: Vec<String>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub const SPECTRUM_FORMAT: &str = "hamspec-spectrum/1";

pub fn write_spectrum<W: Write>(mut w: W, s: &Spectrum, metadata: serde_json::Value) -> Result<()> {
    let header = SpectrumHeader {
        format: SPECTRUM_FORMAT.into(),
        n: s.n(),
        k: s.k(),
        tol: s.tol,
        method: s.method,
        eigenvalues: s.values().to_vec(),
        blocks: vec!["eigenvectors:f64le:colmajor".into(), "mass:f64le".into()],
        metadata,
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Corrupt(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * (s.n() * s.k() + s.n()));
    for v in s.vectors().as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for m in s.mass() {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_spectrum<R: BufRead>(mut r: R) -> Result<(Spectrum, SpectrumHeader)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SpectrumHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Corrupt(e.to_string()))?;
    if header.format != SPECTRUM_FORMAT {
        return Err(Error::Corrupt(format!("unknown spectrum format {:?}", header.format)));
    }
    if header.eigenvalues.len() != header.k {
        return Err(Error::Corrupt("eigenvalue count does not match k".into()));
    }
    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; 8 * len];
        r.read_exact(&mut bytes).map_err(|e| Error::Corrupt(format!("truncated block: {e}")))?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let vecs = read_block(header.n * header.k)?;
    let mass = read_block(header.n)?;
    let spectrum = Spectrum {
        values: header.eigenvalues.clone(),
        vectors: DMatrix::from_vec(header.n, header.k, vecs),
        mass,
        method: header.method,
        tol: header.tol,
    };
    Ok((spectrum, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_generalized, SolveOptions};
    use crate::fem::{mesh_pencil, PotentialField};
    use crate::mesh::shapes;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = shapes::icosphere(1).unwrap();
        let p = mesh_pencil(&m, &PotentialField::zeros(m.n_vertices())).unwrap();
        let s = solve_generalized(&p, 5, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &s, serde_json::json!({"mesh": "ico1"})).unwrap();
        let (t, h) = read_spectrum(&buf[..]).unwrap();
        assert_eq!(t.values(), s.values());
        assert_eq!(t.vectors(), s.vectors());
        assert_eq!(t.mass(), s.mass());
        assert_eq!(h.metadata["mesh"], "ico1");
        assert!(read_spectrum(&buf[..buf.len() - 3]).is_err());
    }
}
