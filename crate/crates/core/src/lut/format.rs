//! Binary LUT bank files.
//!
//! Little-endian layout: magic `LERF`, version `u16 = 1`, family `u8`
//! (1 = amplified linear, 2 = anisotropic Gaussian), index bits `u8 = 4`,
//! hyper-parameter table count `u8`, enhancer table count `u8`; then for
//! each table (hyper-parameter tables first) pattern `u8` (0 = S, 1 = C,
//! 2 = X), role `u8` (0 = 0/180, 1 = 90/270), output count `u8`, a reserved
//! `u8`, and `i16[17^4 * outputs]` fixed-point entries.

use std::path::Path;

use super::{LutBank, LutTable, Pattern, RotationRole, LUT_BITS, LUT_CELLS};
use crate::error::{LerfError, Result};
use crate::hypermap::{family_code, family_from_code};

const MAGIC: &[u8; 4] = b"LERF";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 10;

pub(crate) fn to_bytes(bank: &LutBank) -> Vec<u8> {
    let total: usize = bank.f_tables.iter().chain(&bank.g_tables).map(|t| 4 + t.entries.len() * 2).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(family_code(bank.family).expect("bank family is adaptive"));
    out.push(LUT_BITS);
    out.push(bank.f_tables.len() as u8);
    out.push(bank.g_tables.len() as u8);
    for t in bank.f_tables.iter().chain(&bank.g_tables) {
        out.push(t.pattern.code());
        out.push(match t.role {
            RotationRole::Deg0_180 => 0,
            RotationRole::Deg90_270 => 1,
        });
        out.push(t.c_out as u8);
        out.push(0);
        for e in &t.entries {
            out.extend_from_slice(&e.to_le_bytes());
        }
    }
    out
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<LutBank> {
    if bytes.len() < HEADER_LEN {
        return Err(LerfError::format(bytes.len(), "truncated bank header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(LerfError::format(0, "bad magic, expected LERF"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(LerfError::format(4, format!("unsupported version {version}")));
    }
    let family = family_from_code(bytes[6], 6)?;
    if bytes[7] != LUT_BITS {
        return Err(LerfError::format(7, format!("unsupported index bits {}", bytes[7])));
    }
    let (n_f, n_g) = (bytes[8] as usize, bytes[9] as usize);

    let mut pos = HEADER_LEN;
    let mut tables = Vec::with_capacity(n_f + n_g);
    for _ in 0..n_f + n_g {
        if bytes.len() < pos + 4 {
            return Err(LerfError::format(pos, "truncated table header"));
        }
        let pattern = Pattern::from_code(bytes[pos])
            .ok_or_else(|| LerfError::format(pos, format!("unknown pattern code {}", bytes[pos])))?;
        let role = match bytes[pos + 1] {
            0 => RotationRole::Deg0_180,
            1 => RotationRole::Deg90_270,
            r => return Err(LerfError::format(pos + 1, format!("unknown rotation role {r}"))),
        };
        let c_out = bytes[pos + 2] as usize;
        if !(1..=3).contains(&c_out) {
            return Err(LerfError::format(pos + 2, format!("output count {c_out} not in 1..=3")));
        }
        pos += 4;
        let n = LUT_CELLS * c_out;
        if bytes.len() < pos + n * 2 {
            return Err(LerfError::format(bytes.len(), format!("truncated table payload at {pos}")));
        }
        let entries = bytes[pos..pos + n * 2]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        pos += n * 2;
        tables.push(LutTable::new(pattern, role, c_out, entries)?);
    }
    if pos != bytes.len() {
        return Err(LerfError::format(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    let g_tables = tables.split_off(n_f);
    LutBank::new(family, tables, g_tables)
}

pub fn save_lut_bank(bank: &LutBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(bank)).map_err(|e| LerfError::io(path, e))
}

pub fn load_lut_bank(path: impl AsRef<Path>) -> Result<LutBank> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LerfError::io(path, e))?;
    from_bytes(&bytes)
}
