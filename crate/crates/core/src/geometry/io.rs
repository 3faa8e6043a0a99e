//! Homography text files and Middlebury `.flo` flow files.

use std::io::{Read, Write};
use std::path::Path;

use super::{FlowField, Matrix3};
use crate::error::{LerfError, Result};

const FLO_MAGIC: f32 = 202021.25;

/// Parses nine whitespace-separated reals, row-major.
pub fn parse_homography(text: &str) -> Result<Matrix3> {
    let mut vals = [0.0; 9];
    let mut n = 0;
    for (i, tok) in text.split_whitespace().enumerate() {
        if i >= 9 {
            return Err(LerfError::format(i, "more than 9 values in homography"));
        }
        vals[i] = tok
            .parse::<f64>()
            .map_err(|e| LerfError::format(i, format!("bad real {tok:?}: {e}")))?;
        if !vals[i].is_finite() {
            return Err(LerfError::format(i, "non-finite homography entry"));
        }
        n += 1;
    }
    if n != 9 {
        return Err(LerfError::format(n, format!("expected 9 values, found {n}")));
    }
    Ok(Matrix3::from_row_major(vals))
}

pub fn load_homography(path: impl AsRef<Path>) -> Result<Matrix3> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LerfError::io(path, e))?;
    parse_homography(&text)
}

pub fn read_flow(mut r: impl Read) -> Result<FlowField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| LerfError::io("<flow stream>", e))?;
    if bytes.len() < 12 {
        return Err(LerfError::format(bytes.len(), "truncated .flo header"));
    }
    let word = |o: usize| [bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(LerfError::format(0, format!("bad .flo magic {magic}")));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(LerfError::format(4, format!("invalid .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() < need {
        return Err(LerfError::format(bytes.len(), format!("truncated .flo payload, need {need} bytes")));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let o = 12 + i * 8;
        u.push(f32::from_le_bytes(word(o)) as f64);
        v.push(f32::from_le_bytes(word(o + 4)) as f64);
    }
    FlowField::new(h, w, u, v)
}

pub fn write_flow(flow: &FlowField, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&FLO_MAGIC.to_le_bytes())?;
    w.write_all(&(flow.width as i32).to_le_bytes())?;
    w.write_all(&(flow.height as i32).to_le_bytes())?;
    for (u, v) in flow.u.iter().zip(&flow.v) {
        w.write_all(&(*u as f32).to_le_bytes())?;
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| LerfError::io(path, e))?;
    read_flow(std::io::BufReader::new(f))
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| LerfError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_flow(flow, &mut w).and_then(|_| w.flush()).map_err(|e| LerfError::io(path, e))
}
