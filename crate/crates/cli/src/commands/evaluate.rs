use std::fmt::Write;
use std::path::Path;

use selanchor::evalkit::{proposal_recall as recall_report, sweep_report, RecallMode};
use selanchor::formats::GtFormat;

use super::{emit, percent};
use crate::error::{invariant, CliResult};
use crate::inputs::{align, read_detections, read_gt_dir, write_text};

pub fn evaluate(
    detections: &Path,
    gt: &Path,
    format: GtFormat,
    thresholds: &[f64],
    output: Option<&Path>,
) -> CliResult<()> {
    let gts = read_gt_dir(gt, format)?;
    let (dets, gts) = align(read_detections(detections)?, &gts)?;
    let reports = sweep_report(&dets, &gts, thresholds).map_err(invariant)?;

    let mut table = String::from("IoU\tP(%)\tR(%)\tF(%)\n");
    let mut machine = String::from("iou_threshold\tprecision\trecall\tf_measure\tmatched\tdetections\tground_truth\n");
    for r in &reports {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}",
            r.iou_threshold,
            percent(r.precision),
            percent(r.recall),
            percent(r.f_measure)
        );
        let _ = writeln!(
            machine,
            "{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            r.iou_threshold, r.precision, r.recall, r.f_measure, r.matched, r.num_detections, r.num_gt
        );
    }
    if let Some(path) = output {
        write_text(path, &machine)?;
    }
    emit(&table)
}

pub fn proposal_recall(
    proposals: &Path,
    gt: &Path,
    format: GtFormat,
    top_n: &[usize],
    output: Option<&Path>,
) -> CliResult<()> {
    let gts = read_gt_dir(gt, format)?;
    let (props, gts) = align(read_detections(proposals)?, &gts)?;
    let modes = RecallMode::standard();
    let report = recall_report(&props, &gts, top_n, &modes).map_err(invariant)?;

    let mut table = String::from("IoU");
    for n in top_n {
        let _ = write!(table, "\tTR{n}");
    }
    table.push('\n');
    for mode in modes {
        table.push_str(&mode.label());
        for &n in top_n {
            let v = report.get(n, mode).unwrap_or(0.0);
            let _ = write!(table, "\t{}", percent(v));
        }
        table.push('\n');
    }
    if let Some(path) = output {
        write_text(path, &report.to_tsv())?;
    }
    emit(&table)
}
