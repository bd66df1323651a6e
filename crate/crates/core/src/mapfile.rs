//! Binary layout for per-level target and prediction maps.
//!
//! ```text
//! magic      4 bytes   "SATM" (targets) or "SAPM" (predictions)
//! stride     u32
//! grid_w     u32
//! grid_h     u32
//! k          f32
//! grids      row-major, one after another
//! ```
//!
//! Everything is little-endian. Target files hold the location classes as
//! one byte per cell (0 negative, 1 positive, 255 ignore) followed by the
//! orientation, `dw`, and `dh` grids as f32; orientation is NaN on
//! negative cells. Prediction files hold the probability, orientation,
//! `dw`, and `dh` grids, all f32. The long-ratio flag of the level is not
//! stored; it is restored from the default long-ratio strides.

use crate::decode::PredictionMaps;
use crate::error::{invalid_input, Result};
use crate::grid::Grid;
use crate::targets::{LevelSpec, LocationClass, TargetMaps, DEFAULT_LONG_STRIDES};

pub const TARGET_MAGIC: [u8; 4] = *b"SATM";
pub const PREDICTION_MAGIC: [u8; 4] = *b"SAPM";
pub const HEADER_LEN: usize = 20;

fn write_header(out: &mut Vec<u8>, magic: [u8; 4], level: &LevelSpec) {
    out.extend_from_slice(&magic);
    out.extend_from_slice(&level.stride.to_le_bytes());
    out.extend_from_slice(&(level.grid_w as u32).to_le_bytes());
    out.extend_from_slice(&(level.grid_h as u32).to_le_bytes());
    out.extend_from_slice(&(level.k as f32).to_le_bytes());
}

fn write_f32_grid(out: &mut Vec<u8>, g: &Grid<f64>) {
    for v in g.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// Reads the header, checking the magic, and returns the level with the
/// body that follows.
fn read_header(bytes: &[u8], magic: [u8; 4]) -> Result<(LevelSpec, &[u8])> {
    if bytes.len() < HEADER_LEN {
        return Err(invalid_input(format!("map file too short ({} bytes)", bytes.len())));
    }
    if bytes[..4] != magic {
        return Err(invalid_input(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let stride = u32_at(4);
    let (gw, gh) = (u32_at(8) as usize, u32_at(12) as usize);
    let k = f64::from(f32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")));
    let level = LevelSpec::new(stride, k, gw, gh, DEFAULT_LONG_STRIDES.contains(&stride))?;
    Ok((level, &bytes[HEADER_LEN..]))
}

fn check_body(body: &[u8], cells: usize, bytes_per_cell: usize) -> Result<()> {
    let want = cells
        .checked_mul(bytes_per_cell)
        .ok_or_else(|| invalid_input("grid too large"))?;
    if body.len() != want {
        return Err(invalid_input(format!(
            "map body has {} bytes, expected {want}",
            body.len()
        )));
    }
    Ok(())
}

fn read_f32_grid(body: &[u8], w: usize, h: usize) -> Grid<f64> {
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Grid::from_vec(w, h, data).expect("body length checked")
}

pub fn serialize_targets(maps: &TargetMaps) -> Vec<u8> {
    let n = maps.level.cells();
    let mut out = Vec::with_capacity(HEADER_LEN + 13 * n);
    write_header(&mut out, TARGET_MAGIC, &maps.level);
    out.extend(maps.location.as_slice().iter().map(|c| *c as u8));
    write_f32_grid(&mut out, &maps.orientation);
    write_f32_grid(&mut out, &maps.shape_dw);
    write_f32_grid(&mut out, &maps.shape_dh);
    out
}

pub fn deserialize_targets(bytes: &[u8]) -> Result<TargetMaps> {
    let (level, body) = read_header(bytes, TARGET_MAGIC)?;
    let (w, h, n) = (level.grid_w, level.grid_h, level.cells());
    check_body(body, n, 13)?;
    let classes = body[..n]
        .iter()
        .map(|b| LocationClass::from_byte(*b).ok_or_else(|| invalid_input(format!("bad location byte {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let location = Grid::from_vec(w, h, classes).expect("body length checked");
    let floats = &body[n..];
    let orientation = read_f32_grid(&floats[..4 * n], w, h);
    let shape_dw = read_f32_grid(&floats[4 * n..8 * n], w, h);
    let shape_dh = read_f32_grid(&floats[8 * n..], w, h);
    let shape_valid = location.map(|c| *c == LocationClass::Positive);
    for (i, j, c) in location.iter_cells() {
        let o = *orientation.get(i, j);
        let defined = (0.0..=1.0).contains(&o);
        if *c != LocationClass::Negative && !defined {
            return Err(invalid_input(format!(
                "cell ({i}, {j}) is foreground without an orientation"
            )));
        }
    }
    Ok(TargetMaps {
        level,
        location,
        orientation,
        shape_dw,
        shape_dh,
        shape_valid,
    })
}

pub fn serialize_predictions(maps: &PredictionMaps) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * maps.level.cells());
    write_header(&mut out, PREDICTION_MAGIC, &maps.level);
    write_f32_grid(&mut out, &maps.location_prob);
    write_f32_grid(&mut out, &maps.orientation);
    write_f32_grid(&mut out, &maps.shape_dw);
    write_f32_grid(&mut out, &maps.shape_dh);
    out
}

pub fn deserialize_predictions(bytes: &[u8]) -> Result<PredictionMaps> {
    let (level, body) = read_header(bytes, PREDICTION_MAGIC)?;
    let (w, h, n) = (level.grid_w, level.grid_h, level.cells());
    check_body(body, n, 16)?;
    let grid = |k: usize| read_f32_grid(&body[4 * n * k..4 * n * (k + 1)], w, h);
    PredictionMaps::new(level, grid(0), grid(1), grid(2), grid(3))
}
