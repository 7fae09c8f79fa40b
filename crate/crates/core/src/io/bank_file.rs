//! NPB1 bank files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NPB1" | u8 version (1) | u8 kind (0 cls, 1 seg) | u8 precision (0 f32, 1 f16) | u8 0
//! [u8; 32] encoder config hash | f64 gamma
//! cls: u32 C, C × (u32 len, utf-8 name), u32 M, u32 D, M × u32 label, M×D values
//! seg: u32 skipped, u32 categories, per category:
//!      u16 id, u32 V, V × u16 valid part, u32 P, u32 D, P × u16 part, P×D values
//! ```
//!
//! Values are `f32` or IEEE binary16 depending on the precision byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use half::f16;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::inference::{CategoryPrototypes, ClsBank, Precision, SegBank};

pub const BANK_MAGIC: &[u8; 4] = b"NPB1";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Bank {
    Cls(ClsBank),
    Seg(SegBank),
}

impl Bank {
    pub fn config_hash(&self) -> &[u8; 32] {
        match self {
            Bank::Cls(b) => &b.config_hash,
            Bank::Seg(b) => &b.config_hash,
        }
    }

    pub fn precision(&self) -> Precision {
        match self {
            Bank::Cls(b) => b.precision,
            Bank::Seg(b) => b.precision,
        }
    }

    /// Switches the storage precision; half precision also rounds the
    /// in-memory values so they match what a save/load cycle yields.
    pub fn set_precision(&mut self, precision: Precision) {
        let round = |m: &mut Array2<f32>| {
            if precision == Precision::F16 {
                m.mapv_inplace(|v| f16::from_f32(v).to_f32());
            }
        };
        match self {
            Bank::Cls(b) => {
                b.precision = precision;
                round(&mut b.descriptors);
            }
            Bank::Seg(b) => {
                b.precision = precision;
                b.categories.values_mut().for_each(|c| round(&mut c.prototypes));
            }
        }
    }
}

fn put_values(out: &mut Vec<u8>, m: &Array2<f32>, precision: Precision) {
    for &v in m.iter() {
        match precision {
            Precision::F32 => out.extend_from_slice(&v.to_le_bytes()),
            Precision::F16 => out.extend_from_slice(&f16::from_f32(v).to_bits().to_le_bytes()),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_bank(bank: &Bank) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BANK_MAGIC);
    let precision = bank.precision();
    out.push(VERSION);
    out.push(match bank {
        Bank::Cls(_) => 0,
        Bank::Seg(_) => 1,
    });
    out.push(match precision {
        Precision::F32 => 0,
        Precision::F16 => 1,
    });
    out.push(0);
    out.extend_from_slice(bank.config_hash());
    match bank {
        Bank::Cls(b) => {
            out.extend_from_slice(&b.gamma.to_le_bytes());
            put_u32(&mut out, b.class_names.len());
            for name in &b.class_names {
                put_u32(&mut out, name.len());
                out.extend_from_slice(name.as_bytes());
            }
            put_u32(&mut out, b.descriptors.nrows());
            put_u32(&mut out, b.descriptors.ncols());
            for &l in &b.labels {
                put_u32(&mut out, l);
            }
            put_values(&mut out, &b.descriptors, precision);
        }
        Bank::Seg(b) => {
            out.extend_from_slice(&b.gamma.to_le_bytes());
            put_u32(&mut out, b.skipped_parts);
            put_u32(&mut out, b.categories.len());
            for (&id, cat) in &b.categories {
                out.extend_from_slice(&id.to_le_bytes());
                put_u32(&mut out, cat.valid_parts.len());
                for &p in &cat.valid_parts {
                    out.extend_from_slice(&p.to_le_bytes());
                }
                put_u32(&mut out, cat.prototypes.nrows());
                put_u32(&mut out, cat.prototypes.ncols());
                for &p in &cat.part_labels {
                    out.extend_from_slice(&p.to_le_bytes());
                }
                put_values(&mut out, &cat.prototypes, precision);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len().saturating_sub(self.pos) < n {
            return Err(Error::CorruptBank(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values(&mut self, rows: usize, cols: usize, precision: Precision) -> Result<Array2<f32>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CorruptBank("matrix size overflows".into()))?;
        let width = match precision {
            Precision::F32 => 4,
            Precision::F16 => 2,
        };
        let raw = self.take(count.checked_mul(width).ok_or_else(|| Error::CorruptBank("matrix size overflows".into()))?)?;
        let data: Vec<f32> = match precision {
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Precision::F16 => raw
                .chunks_exact(2)
                .map(|c| f16::from_bits(u16::from_le_bytes(c.try_into().unwrap())).to_f32())
                .collect(),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptBank("non-finite stored value".into()));
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
}

/// Decodes a bank; with `expected_hash` set, a bank built under another
/// encoder configuration is rejected.
pub fn decode_bank(bytes: &[u8], expected_hash: Option<&[u8; 32]>) -> Result<Bank> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != BANK_MAGIC {
        return Err(Error::CorruptBank("missing NPB1 magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::CorruptBank(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let precision = match r.u8()? {
        0 => Precision::F32,
        1 => Precision::F16,
        p => return Err(Error::CorruptBank(format!("unknown precision flag {p}"))),
    };
    r.u8()?;
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    if let Some(expected) = expected_hash {
        if *expected != hash {
            return Err(Error::ConfigHashMismatch {
                expected: hex::encode(expected),
                found: hex::encode(hash),
            });
        }
    }
    let gamma = r.f64()?;
    let bank = match kind {
        0 => {
            let c = r.u32()?;
            let mut class_names = Vec::with_capacity(c.min(1 << 16));
            for _ in 0..c {
                let len = r.u32()?;
                let name = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| Error::CorruptBank("class name is not utf-8".into()))?;
                class_names.push(name.to_string());
            }
            let m = r.u32()?;
            let d = r.u32()?;
            let labels = (0..m).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::CorruptBank(format!("label {bad} out of range for {c} classes")));
            }
            let descriptors = r.values(m, d, precision)?;
            Bank::Cls(ClsBank {
                descriptors,
                labels,
                class_names,
                gamma,
                config_hash: hash,
                precision,
            })
        }
        1 => {
            let skipped_parts = r.u32()?;
            let n = r.u32()?;
            let mut categories = BTreeMap::new();
            for _ in 0..n {
                let id = r.u16()?;
                let v = r.u32()?;
                let valid_parts = (0..v).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
                let p = r.u32()?;
                let d = r.u32()?;
                let part_labels = (0..p).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
                if part_labels.iter().any(|l| !valid_parts.contains(l)) {
                    return Err(Error::CorruptBank(format!("category {id} has a prototype for an invalid part")));
                }
                let prototypes = r.values(p, d, precision)?;
                categories.insert(
                    id,
                    CategoryPrototypes {
                        valid_parts,
                        prototypes,
                        part_labels,
                    },
                );
            }
            Bank::Seg(SegBank {
                categories,
                gamma,
                config_hash: hash,
                precision,
                skipped_parts,
            })
        }
        k => return Err(Error::CorruptBank(format!("unknown bank kind {k}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::CorruptBank(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(bank)
}

pub fn save_bank(bank: &Bank, path: &Path) -> Result<()> {
    fs::write(path, encode_bank(bank))?;
    Ok(())
}

pub fn load_bank(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<Bank> {
    decode_bank(&fs::read(path)?, expected_hash)
}
