//! Reading ground-truth directories, detection files, and inline values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use selanchor::decode::Proposal;
use selanchor::evalkit::GroundTruthItem;
use selanchor::formats::{parse_gt_bytes, read_detection_bytes, AnnotationRecord, GtFormat};
use selanchor::RotatedBox;

use crate::error::{parse_listing, CliError, CliResult};

/// Image id of a ground-truth file: the file stem without a `gt_` prefix.
pub fn gt_image_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.strip_prefix("gt_") {
        Some(rest) if !rest.is_empty() => rest.to_string(),
        _ => stem,
    }
}

/// Regular, non-hidden files of a directory, sorted by path. A plain file
/// is returned on its own.
pub fn list_files(path: &Path, extension: Option<&str>) -> CliResult<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| CliError::io(path, e))? {
        let entry = entry.map_err(|e| CliError::io(path, e))?;
        let p = entry.path();
        let hidden = p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
        let ext_ok = extension.is_none_or(|ext| p.extension().is_some_and(|e| e == ext));
        if p.is_file() && !hidden && ext_ok {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses every ground-truth file under `path`, keyed by image id. All
/// malformed lines across all files are collected before failing.
pub fn read_gt_dir(path: &Path, format: GtFormat) -> CliResult<BTreeMap<String, Vec<AnnotationRecord>>> {
    let files = list_files(path, None)?;
    let parsed: Vec<_> = files
        .par_iter()
        .map(|f| read_bytes(f).map(|b| (f, parse_gt_bytes(&b, format))))
        .collect::<CliResult<_>>()?;

    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (file, p) in parsed {
        errors.extend(parse_listing(file, &p.errors));
        let id = gt_image_id(file);
        if out.insert(id.clone(), p.records).is_some() {
            return Err(CliError::Input(format!(
                "two ground-truth files map to image id '{id}'"
            )));
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Parse(errors));
    }
    Ok(out)
}

pub fn ground_truth(records: &[AnnotationRecord]) -> Vec<GroundTruthItem> {
    records.iter().map(AnnotationRecord::to_ground_truth).collect()
}

/// Detections grouped by image id, in file order within an image.
pub fn read_detections(path: &Path) -> CliResult<BTreeMap<String, Vec<Proposal>>> {
    let parsed = read_detection_bytes(&read_bytes(path)?);
    if !parsed.errors.is_empty() {
        return Err(CliError::Parse(parse_listing(path, &parsed.errors)));
    }
    let mut out: BTreeMap<String, Vec<Proposal>> = BTreeMap::new();
    for d in parsed.records {
        out.entry(d.image_id).or_default().push(d.proposal);
    }
    Ok(out)
}

/// Per-image detections and ground truth in matching order.
pub type Aligned = (Vec<Vec<Proposal>>, Vec<Vec<GroundTruthItem>>);

/// Lines up detections with ground truth by image id. Images without
/// detections get an empty list; detections for an unknown image are an
/// error.
pub fn align(
    mut dets: BTreeMap<String, Vec<Proposal>>,
    gts: &BTreeMap<String, Vec<AnnotationRecord>>,
) -> CliResult<Aligned> {
    if let Some(id) = dets.keys().find(|id| !gts.contains_key(*id)) {
        return Err(CliError::Input(format!(
            "detections reference image '{id}' with no ground-truth file"
        )));
    }
    let mut d = Vec::with_capacity(gts.len());
    let mut g = Vec::with_capacity(gts.len());
    for (id, records) in gts {
        d.push(dets.remove(id).unwrap_or_default());
        g.push(ground_truth(records));
    }
    Ok((d, g))
}

/// Parses `cx,cy,w,h,theta`, sides in any order.
pub fn parse_box(spec: &str) -> CliResult<RotatedBox> {
    let bad = |why: &str| CliError::Input(format!("malformed box '{spec}': {why}"));
    let values: Vec<f64> = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected five numbers cx,cy,w,h,theta"))?;
    let [cx, cy, w, h, t] = values[..] else {
        return Err(bad("expected five numbers cx,cy,w,h,theta"));
    };
    RotatedBox::normalized(cx, cy, w, h, t).map_err(|e| bad(&e.to_string()))
}

/// Parses `WxH` with positive integer sides.
pub fn parse_size(spec: &str) -> Result<(u32, u32), String> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{spec}'"))?;
    let side = |v: &str| v.trim().parse::<u32>().ok().filter(|v| *v > 0);
    match (side(w), side(h)) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(format!("expected positive integer sides, got '{spec}'")),
    }
}
