use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use selanchor::decode::{
    anchor_statistics, decode_anchors_with_cells, polygon_nms, DecodeParams, PredictionMaps, Proposal,
};
use selanchor::formats::{write_detection_file, Detection};
use selanchor::mapfile::deserialize_predictions;

use super::{emit, percent};
use crate::error::{input_at, invariant, CliError, CliResult};
use crate::inputs::{list_files, read_bytes, write_text};

/// Splits `<image>_s<stride>` into the image id; other stems are used
/// whole.
fn map_image_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rsplit_once("_s") {
        Some((id, s)) if !id.is_empty() && !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => id.to_string(),
        _ => stem,
    }
}

/// Checks that the levels of one image have distinct strides and grids
/// that can all cover one common image size.
fn check_levels(id: &str, maps: &[PredictionMaps]) -> CliResult<()> {
    let mut strides: Vec<u32> = maps.iter().map(|m| m.level.stride).collect();
    strides.sort_unstable();
    if strides.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Input(format!(
            "image '{id}' has two maps with the same stride"
        )));
    }
    // a grid of g cells at stride s covers image sides in ((g - 1) s, g s]
    let fits = |dim: fn(&PredictionMaps) -> usize| {
        let lo = maps
            .iter()
            .map(|m| (dim(m) as u64 - 1) * u64::from(m.level.stride))
            .max()
            .unwrap_or(0);
        let hi = maps
            .iter()
            .map(|m| dim(m) as u64 * u64::from(m.level.stride))
            .min()
            .unwrap_or(0);
        lo < hi
    };
    if !fits(|m| m.level.grid_w) || !fits(|m| m.level.grid_h) {
        return Err(CliError::Input(format!(
            "image '{id}': level grids do not describe one image size"
        )));
    }
    Ok(())
}

pub fn decode(maps_path: &Path, t_a: f64, top_n: Option<usize>, nms_iou: Option<f64>, output: &Path) -> CliResult<()> {
    let params =
        DecodeParams::new(t_a, top_n, nms_iou.unwrap_or(selanchor::decode::DEFAULT_NMS_IOU)).map_err(invariant)?;
    let files = list_files(maps_path, Some("sapm"))?;
    let loaded: Vec<(PathBuf, PredictionMaps)> = files
        .par_iter()
        .map(|f| {
            deserialize_predictions(&read_bytes(f)?)
                .map(|m| (f.clone(), m))
                .map_err(|e| input_at(f, e))
        })
        .collect::<CliResult<_>>()?;

    let mut per_image: BTreeMap<String, Vec<PredictionMaps>> = BTreeMap::new();
    for (path, maps) in loaded {
        per_image.entry(map_image_id(&path)).or_default().push(maps);
    }
    for (id, maps) in &per_image {
        check_levels(id, maps)?;
    }

    let decoded: Vec<(&String, Vec<Proposal>, usize)> = per_image
        .par_iter()
        .map(|(id, maps)| {
            let props: Vec<Proposal> = decode_anchors_with_cells(maps, &params)
                .into_iter()
                .map(|d| d.proposal)
                .collect();
            let cells = maps.iter().map(|m| m.level.cells()).sum();
            (id, props, cells)
        })
        .collect();

    let mut table = String::from("image\tanchors\tcells\tactive(%)\n");
    let mut all = Vec::new();
    let mut total_cells = 0;
    let mut detections = Vec::new();
    for (id, props, cells) in &decoded {
        let s = anchor_statistics(props, *cells);
        let _ = writeln!(table, "{id}\t{}\t{}\t{}", s.count, s.cells_total, percent(s.fraction));
        all.extend_from_slice(props);
        total_cells += cells;
        let kept = match nms_iou {
            Some(t) => polygon_nms(props, t),
            None => props.clone(),
        };
        detections.extend(kept.into_iter().map(|proposal| Detection {
            image_id: (*id).clone(),
            proposal,
        }));
    }
    let s = anchor_statistics(&all, total_cells);
    let _ = writeln!(table, "total\t{}\t{}\t{}", s.count, s.cells_total, percent(s.fraction));
    table.push_str("histogram\tbin\tcount\n");
    for (name, hist) in [("aspect_log2", &s.aspect_log2), ("angle", &s.angle)] {
        for (edge, count) in hist.rows() {
            let _ = writeln!(table, "{name}\t{edge:.4}\t{count}");
        }
    }

    write_text(output, &write_detection_file(&detections))?;
    emit(&table)
}
