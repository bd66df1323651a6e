//! Detection files: one `image_id cx cy w h theta score` line per
//! proposal, space separated, angles in radians, six decimals.

use super::{clean_line, lines_of, ParseError, ParsedFile};
use crate::decode::Proposal;
use crate::geom::RotatedBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub proposal: Proposal,
}

pub fn format_detection_line(image_id: &str, p: &Proposal) -> String {
    let b = &p.rbox;
    format!(
        "{image_id} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        b.cx(),
        b.cy(),
        b.w(),
        b.h(),
        b.theta(),
        p.score
    )
}

pub fn parse_detection_line(line: &str, line_no: usize) -> Result<Detection, ParseError> {
    let fields: Vec<&str> = clean_line(line).split_whitespace().collect();
    if fields.len() != 7 {
        return Err(ParseError::syntax(
            line_no,
            None,
            format!(
                "expected 7 fields (image_id cx cy w h theta score), found {}",
                fields.len()
            ),
        ));
    }
    let mut v = [0.0; 6];
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = super::number(fields[k + 1], line_no, k + 2)?;
    }
    let [cx, cy, w, h, theta, score] = v;
    // Rounding to six decimals can leave a box whose sides compare the
    // wrong way round or whose angle sits just outside the canonical range.
    let rbox = RotatedBox::normalized(cx, cy, w, h, theta).map_err(|e| ParseError::geometry(line_no, e))?;
    let proposal = Proposal::new(rbox, score).map_err(|e| ParseError::geometry(line_no, e))?;
    Ok(Detection {
        image_id: fields[0].to_string(),
        proposal,
    })
}

/// Parses a detection file, keeping good lines and collecting bad ones.
pub fn read_detection_bytes(bytes: &[u8]) -> ParsedFile<Detection> {
    let mut out = ParsedFile::default();
    for (n, text) in lines_of(bytes) {
        match text.and_then(|t| parse_detection_line(t, n)) {
            Ok(d) => out.records.push(d),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

pub fn write_detection_file(records: &[Detection]) -> String {
    let mut out = String::new();
    for d in records {
        out.push_str(&format_detection_line(&d.image_id, &d.proposal));
        out.push('\n');
    }
    out
}
