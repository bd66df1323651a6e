//! Single-purpose utilities: NMS over a detection file, inline IoU, and
//! format conversion.

use std::path::Path;

use rayon::prelude::*;
use selanchor::decode::polygon_nms;
use selanchor::formats::{parse_gt_bytes, write_detection_file, Detection, GtFormat};
use selanchor::polyiou::{iou as exact_iou, iou_oracle};

use super::emit;
use crate::error::{invariant, parse_listing, CliError, CliResult};
use crate::inputs::{parse_box, read_bytes, read_detections, write_text};

fn deliver(text: &str, output: Option<&Path>) -> CliResult<()> {
    match output {
        Some(path) => write_text(path, text),
        None => emit(text),
    }
}

pub fn nms(detections: &Path, threshold: f64, output: Option<&Path>) -> CliResult<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Invariant(format!(
            "nms-iou must lie in (0, 1), got {threshold}"
        )));
    }
    let per_image: Vec<_> = read_detections(detections)?.into_iter().collect();
    let kept: Vec<Detection> = per_image
        .par_iter()
        .flat_map_iter(|(id, props)| {
            polygon_nms(props, threshold)
                .into_iter()
                .map(move |proposal| Detection {
                    image_id: id.clone(),
                    proposal,
                })
        })
        .collect();
    deliver(&write_detection_file(&kept), output)
}

pub fn iou(a: &str, b: &str, samples: usize, seed: u64) -> CliResult<()> {
    let (a, b) = (parse_box(a)?, parse_box(b)?);
    let sampled = iou_oracle(&a, &b, samples, seed).map_err(invariant)?;
    emit(&format!("exact\t{:.6}\noracle\t{sampled:.6}\n", exact_iou(&a, &b)))
}

pub fn convert(input: &Path, from: GtFormat, to: GtFormat, output: Option<&Path>) -> CliResult<()> {
    let parsed = parse_gt_bytes(&read_bytes(input)?, from);
    if !parsed.errors.is_empty() {
        return Err(CliError::Parse(parse_listing(input, &parsed.errors)));
    }
    let mut text = String::new();
    let mut lossy = Vec::new();
    for (k, r) in parsed.records.iter().enumerate() {
        let (line, approx) = to.write_record(r, k);
        text.push_str(&line);
        text.push('\n');
        if approx {
            lossy.push(k + 1);
        }
    }
    if !lossy.is_empty() {
        let list: Vec<String> = lossy.iter().map(ToString::to_string).collect();
        eprintln!(
            "warning: {}: {} of {} record(s) approximated in {}: {}",
            input.display(),
            lossy.len(),
            parsed.records.len(),
            to.name(),
            list.join(", ")
        );
    }
    deliver(&text, output)
}
