//! Binary container:
//!
//! ```text
//! "HSPC" | version u8 | mode u8 | k u32 | qstep f64 | n u32 | operators u8 | width u8
//! coefficients: 3k raw f64 (width 64) or bit-packed offset-binary integers
//! h_opt:        n × f64 potential
//! h_reordered:  α f64 | β f64 | has_order u8 | [n × u32 order]
//! ```
//!
//! Integers and floats are little-endian; bit-packed fields are MSB-first.

use super::{BasisKind, Coefficients, CompressedMesh, Operators};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HSPC";
pub const VERSION: u8 = 1;
/// Bits in the fixed header.
pub const HEADER_BITS: u64 = 8 * (4 + 1 + 1 + 4 + 8 + 4 + 1 + 1);

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    used: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self { bytes: Vec::new(), acc: 0, used: 0 }
    }

    fn push(&mut self, value: u64, width: u32) {
        for b in (0..width).rev() {
            self.acc = (self.acc << 1) | ((value >> b) & 1);
            self.used += 1;
            if self.used == 8 {
                self.bytes.push(self.acc as u8);
                self.acc = 0;
                self.used = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.bytes.push((self.acc << (8 - self.used)) as u8);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        v
    }
}

pub(super) fn pack(values: &[i64], width: u8) -> Vec<u8> {
    let w = width as u32;
    let offset = 1i64 << (w - 1);
    let mut bw = BitWriter::new();
    for &q in values {
        bw.push((q + offset) as u64, w);
    }
    bw.finish()
}

pub(super) fn unpack(bytes: &[u8], count: usize, width: u8) -> Vec<i64> {
    let w = width as u32;
    let offset = 1i64 << (w - 1);
    let mut br = BitReader { bytes, pos: 0 };
    (0..count).map(|_| br.take(w) as i64 - offset).collect()
}

fn mode_byte(kind: BasisKind) -> u8 {
    match kind {
        BasisKind::Mhb => 0,
        BasisKind::HOpt => 1,
        BasisKind::HReordered => 2,
    }
}

pub fn to_bytes(c: &CompressedMesh) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(mode_byte(c.kind));
    out.extend_from_slice(&(c.k as u32).to_le_bytes());
    out.extend_from_slice(&c.qstep.to_le_bytes());
    out.extend_from_slice(&(c.n as u32).to_le_bytes());
    out.push(match c.operators {
        Operators::Graph => 0,
        Operators::Cotangent => 1,
    });
    match &c.coefficients {
        Coefficients::Raw(v) => {
            out.push(64);
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Coefficients::Quantized { values, width } => {
            out.push(*width);
            out.extend_from_slice(&pack(values, *width));
        }
    }
    if let Some(p) = &c.potential {
        for x in p {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some((a, b)) = c.affine {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
        match &c.order {
            Some(o) => {
                out.push(1);
                for &i in o {
                    out.extend_from_slice(&(i as u32).to_le_bytes());
                }
            }
            None => out.push(0),
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Corrupt(format!("stream truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn from_bytes(data: &[u8]) -> Result<CompressedMesh> {
    let mut c = Cursor { data, pos: 0 };
    if c.bytes(4)? != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported container version {version}")));
    }
    let kind = match c.u8()? {
        0 => BasisKind::Mhb,
        1 => BasisKind::HOpt,
        2 => BasisKind::HReordered,
        m => return Err(Error::Corrupt(format!("unknown mode {m}"))),
    };
    let k = c.u32()? as usize;
    let qstep = c.f64()?;
    let n = c.u32()? as usize;
    let operators = match c.u8()? {
        0 => Operators::Graph,
        1 => Operators::Cotangent,
        o => return Err(Error::Corrupt(format!("unknown operator family {o}"))),
    };
    if k == 0 || k > n || !(qstep >= 0.0) || !qstep.is_finite() {
        return Err(Error::Corrupt(format!("inconsistent header: k = {k}, n = {n}, qstep = {qstep}")));
    }
    let width = c.u8()?;
    let coefficients = match width {
        64 => Coefficients::Raw(c.f64s(3 * k)?),
        1..=63 => {
            if qstep == 0.0 {
                return Err(Error::Corrupt("quantized payload with zero step".into()));
            }
            let nbytes = (3 * k * width as usize).div_ceil(8);
            Coefficients::Quantized { values: unpack(c.bytes(nbytes)?, 3 * k, width), width }
        }
        w => return Err(Error::Corrupt(format!("invalid coefficient width {w}"))),
    };
    let mut potential = None;
    let mut affine = None;
    let mut order = None;
    match kind {
        BasisKind::Mhb => {}
        BasisKind::HOpt => potential = Some(c.f64s(n)?),
        BasisKind::HReordered => {
            affine = Some((c.f64()?, c.f64()?));
            if c.u8()? == 1 {
                let o: Vec<usize> = (0..n).map(|_| c.u32().map(|v| v as usize)).collect::<Result<_>>()?;
                let mut seen = vec![false; n];
                for &i in &o {
                    if i >= n || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::Corrupt("order block is not a permutation".into()));
                    }
                }
                order = Some(o);
            }
        }
    }
    if c.pos != data.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", data.len() - c.pos)));
    }
    Ok(CompressedMesh { kind, operators, n, k, qstep, coefficients, potential, affine, order })
}
