use std::fmt::Write;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use selanchor::decode::PredictionMaps;
use selanchor::formats::{AnnotationRecord, GtFormat};
use selanchor::mapfile::{serialize_predictions, serialize_targets};
use selanchor::targets::{
    generate_targets, LevelSpec, ShapeCandidateSet, ShrinkParams, TargetDiagnostic, DEFAULT_LONG_STRIDES,
};
use selanchor::RotatedBox;

use super::emit;
use crate::error::{invariant, CliError, CliResult};
use crate::inputs::read_gt_dir;

pub struct LabelgenConfig {
    pub gt: PathBuf,
    pub gt_format: GtFormat,
    pub image_size: (u32, u32),
    pub sigma: (f64, f64),
    pub k: f64,
    pub strides: Vec<u32>,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub long_ratios: Vec<f64>,
    pub output: PathBuf,
    pub ideal: bool,
}

struct ImageResult {
    id: String,
    files: Vec<(String, Vec<u8>)>,
    counts: (usize, usize, usize),
    warnings: Vec<String>,
}

/// Care boxes whose centre lies inside the image; the rest are reported.
fn usable_boxes(id: &str, records: &[AnnotationRecord], (w, h): (u32, u32)) -> (Vec<RotatedBox>, Vec<String>) {
    let mut boxes = Vec::new();
    let mut warnings = Vec::new();
    for (k, r) in records.iter().enumerate().filter(|(_, r)| !r.dont_care) {
        let b = r.geometry.to_rotated_box();
        let inside = (0.0..=f64::from(w)).contains(&b.cx()) && (0.0..=f64::from(h)).contains(&b.cy());
        if inside {
            boxes.push(b);
        } else {
            warnings.push(format!(
                "warning: {id}: box {} centred at ({:.1}, {:.1}) lies outside the {w}x{h} image, skipped",
                k + 1,
                b.cx(),
                b.cy()
            ));
        }
    }
    (boxes, warnings)
}

fn describe(id: &str, d: &TargetDiagnostic) -> Option<String> {
    match d {
        TargetDiagnostic::TooSmall { gt } => Some(format!("warning: {id}: box {} is too small, skipped", gt + 1)),
        TargetDiagnostic::NoPositiveCell { gt, stride } => Some(format!(
            "warning: {id}: box {} covers no cell centre at stride {stride}",
            gt + 1
        )),
        TargetDiagnostic::ShrinkFallback { .. } | TargetDiagnostic::OrientationWrap { .. } => None,
    }
}

pub fn labelgen(cfg: &LabelgenConfig) -> CliResult<()> {
    let shrink = ShrinkParams::new(cfg.sigma.0, cfg.sigma.1).map_err(invariant)?;
    let candidates =
        ShapeCandidateSet::new(cfg.scales.clone(), cfg.ratios.clone(), cfg.long_ratios.clone()).map_err(invariant)?;
    let (w, h) = cfg.image_size;
    let levels: Vec<LevelSpec> = cfg
        .strides
        .iter()
        .map(|&s| LevelSpec::for_image(s, cfg.k, w, h, DEFAULT_LONG_STRIDES.contains(&s)))
        .collect::<selanchor::Result<_>>()
        .map_err(invariant)?;
    if levels.is_empty() {
        return Err(CliError::Invariant("at least one stride is required".into()));
    }

    let gts = read_gt_dir(&cfg.gt, cfg.gt_format)?;
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;

    let results: Vec<ImageResult> = gts
        .par_iter()
        .map(|(id, records)| {
            let (boxes, mut warnings) = usable_boxes(id, records, cfg.image_size);
            let out = generate_targets(&boxes, &levels, &shrink, &candidates).map_err(invariant)?;
            warnings.extend(out.diagnostics.iter().filter_map(|d| describe(id, d)));
            let mut counts = (0, 0, 0);
            let mut files = Vec::new();
            for m in &out.maps {
                let (p, i, n) = m.counts();
                counts = (counts.0 + p, counts.1 + i, counts.2 + n);
                let stem = format!("{id}_s{}", m.level.stride);
                files.push((format!("{stem}.satm"), serialize_targets(m)));
                if cfg.ideal {
                    files.push((format!("{stem}.sapm"), serialize_predictions(&PredictionMaps::ideal(m))));
                }
            }
            Ok(ImageResult {
                id: id.clone(),
                files,
                counts,
                warnings,
            })
        })
        .collect::<CliResult<_>>()?;

    let mut table = String::from("image\tpositive\tignore\tnegative\n");
    for r in &results {
        for w in &r.warnings {
            eprintln!("{w}");
        }
        for (name, bytes) in &r.files {
            let path = cfg.output.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        let _ = writeln!(table, "{}\t{}\t{}\t{}", r.id, r.counts.0, r.counts.1, r.counts.2);
    }
    emit(&table)
}
