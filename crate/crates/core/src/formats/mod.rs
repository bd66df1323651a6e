//! Ground-truth annotation formats (ICDAR2015 quadrilaterals, MSRA-TD500
//! rotated rectangles, ICDAR2013 axis-aligned rectangles) and the
//! detection file format.
//!
//! Line parsers return a record or a [`ParseError`] carrying the 1-based
//! line number. File parsers accept arbitrary bytes, skip blank lines,
//! tolerate a UTF-8 byte-order mark and CRLF endings, and collect every
//! bad line instead of stopping at the first.

mod detections;

pub use detections::{
    format_detection_line, parse_detection_line, read_detection_bytes, write_detection_file, Detection,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::error::Error;
use crate::geom::{quad_to_rotated_box, Point2, Quad, RotatedBox};

/// Transcription marking a region that neither counts as a miss nor as a
/// false alarm.
pub const DONT_CARE_TEXT: &str = "###";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Wrong number of fields or a field that is not a number.
    Syntax,
    /// Numbers parsed but describe an invalid shape.
    Geometry,
    /// The line is not valid UTF-8.
    Encoding,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    /// 1-based field index, when the problem is tied to one field.
    pub field: Option<usize>,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(field) = self.field {
            write!(f, ", field {field}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl ParseError {
    pub(crate) fn syntax(line: usize, field: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            field,
            kind: ParseErrorKind::Syntax,
            message: message.into(),
        }
    }

    pub(crate) fn geometry(line: usize, err: impl fmt::Display) -> Self {
        Self {
            line,
            field: None,
            kind: ParseErrorKind::Geometry,
            message: err.to_string(),
        }
    }
}

/// Axis-aligned rectangle given by its corner coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRect {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl AxisRect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> crate::Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("rectangle coordinates must be finite".into()));
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidGeometry(format!(
                "rectangle ({x_min}, {y_min})-({x_max}, {y_max}) has non-positive extent"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.x_min, self.y_min, self.x_max, self.y_max)
    }

    pub fn to_rotated_box(&self) -> RotatedBox {
        let (w, h) = (self.x_max - self.x_min, self.y_max - self.y_min);
        let (cx, cy) = ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0);
        RotatedBox::normalized(cx, cy, w, h, 0.0).expect("validated rectangle")
    }

    /// Axis-aligned bounds of a rotated box.
    pub fn enclosing(b: &RotatedBox) -> Self {
        let c = b.corners();
        let xs = c.iter().map(|p| p.x);
        let ys = c.iter().map(|p| p.y);
        Self {
            x_min: xs.clone().fold(f64::INFINITY, f64::min),
            x_max: xs.fold(f64::NEG_INFINITY, f64::max),
            y_min: ys.clone().fold(f64::INFINITY, f64::min),
            y_max: ys.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Quad(Quad),
    Rotated(RotatedBox),
    Rect(AxisRect),
}

impl Geometry {
    /// Rotated-box view of the geometry; quads go through the midpoint
    /// construction and are therefore lossy.
    pub fn to_rotated_box(&self) -> RotatedBox {
        match self {
            Geometry::Quad(q) => quad_to_rotated_box(q),
            Geometry::Rotated(b) => *b,
            Geometry::Rect(r) => r.to_rotated_box(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub geometry: Geometry,
    pub transcription: Option<String>,
    pub dont_care: bool,
    pub difficult: bool,
}

impl AnnotationRecord {
    pub fn new(geometry: Geometry, transcription: Option<String>, difficult: bool) -> Self {
        let dont_care = transcription.as_deref() == Some(DONT_CARE_TEXT);
        Self {
            geometry,
            transcription,
            dont_care,
            difficult,
        }
    }

    pub fn to_ground_truth(&self) -> crate::evalkit::GroundTruthItem {
        crate::evalkit::GroundTruthItem {
            rbox: self.geometry.to_rotated_box(),
            dont_care: self.dont_care,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GtFormat {
    Icdar13,
    Icdar15,
    Msra,
}

impl GtFormat {
    pub fn name(&self) -> &'static str {
        match self {
            GtFormat::Icdar13 => "icdar13",
            GtFormat::Icdar15 => "icdar15",
            GtFormat::Msra => "msra",
        }
    }

    pub fn parse_line(&self, line: &str, line_no: usize) -> Result<AnnotationRecord, ParseError> {
        match self {
            GtFormat::Icdar13 => parse_icdar13(line, line_no),
            GtFormat::Icdar15 => parse_icdar15(line, line_no),
            GtFormat::Msra => parse_msra(line, line_no),
        }
    }

    /// Writes one record in this format. `index` fills the MSRA index
    /// column. The second value is true when the geometry had to be
    /// approximated.
    pub fn write_record(&self, record: &AnnotationRecord, index: usize) -> (String, bool) {
        match self {
            GtFormat::Icdar13 => write_icdar13(record),
            GtFormat::Icdar15 => write_icdar15(record),
            GtFormat::Msra => write_msra(record, index),
        }
    }
}

impl fmt::Display for GtFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GtFormat {
    type Err = Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "icdar13" => Ok(GtFormat::Icdar13),
            "icdar15" => Ok(GtFormat::Icdar15),
            "msra" => Ok(GtFormat::Msra),
            other => Err(Error::InvalidInput(format!(
                "unknown format '{other}' (expected icdar13, icdar15, or msra)"
            ))),
        }
    }
}

fn number(field: &str, line: usize, index: usize) -> Result<f64, ParseError> {
    let t = field.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::syntax(
            line,
            Some(index),
            format!("'{t}' is not a finite number"),
        )),
    }
}

fn clean_line(line: &str) -> &str {
    line.strip_prefix('\u{feff}').unwrap_or(line).trim_end()
}

fn transcription(raw: &str) -> Option<String> {
    let t = raw.trim();
    let t = t.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(t);
    (!t.is_empty()).then(|| t.to_string())
}

/// `x1,y1,x2,y2,x3,y3,x4,y4[,transcription]`. Everything after the eighth
/// comma, commas included, is the transcription.
pub fn parse_icdar15(line: &str, line_no: usize) -> Result<AnnotationRecord, ParseError> {
    let line = clean_line(line);
    let fields: Vec<&str> = line.splitn(9, ',').collect();
    let mut coords = [0.0; 8];
    for (k, c) in coords.iter_mut().enumerate() {
        let f = fields.get(k).ok_or_else(|| {
            ParseError::syntax(
                line_no,
                Some(k + 1),
                format!("expected 8 coordinates, found {}", fields.len()),
            )
        })?;
        *c = number(f, line_no, k + 1)?;
    }
    let quad = Quad::from_coords(coords).map_err(|e| ParseError::geometry(line_no, e))?;
    let text = fields.get(8).and_then(|t| transcription(t));
    Ok(AnnotationRecord::new(Geometry::Quad(quad), text, false))
}

/// `index difficulty x y w h theta`, where `(x, y)` is the top-left corner
/// of the unrotated rectangle and the rotation is about its centre.
pub fn parse_msra(line: &str, line_no: usize) -> Result<AnnotationRecord, ParseError> {
    let line = clean_line(line);
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(ParseError::syntax(
            line_no,
            None,
            format!("expected 7 fields, found {}", fields.len()),
        ));
    }
    let v: Vec<f64> = fields
        .iter()
        .enumerate()
        .map(|(k, f)| number(f, line_no, k + 1))
        .collect::<Result<_, _>>()?;
    let (x, y, w, h, theta) = (v[2], v[3], v[4], v[5], v[6]);
    let rbox =
        RotatedBox::normalized(x + w / 2.0, y + h / 2.0, w, h, theta).map_err(|e| ParseError::geometry(line_no, e))?;
    Ok(AnnotationRecord::new(Geometry::Rotated(rbox), None, v[1] != 0.0))
}

/// `x_min, y_min, x_max, y_max[, transcription]` with commas, or the same
/// fields separated by whitespace.
pub fn parse_icdar13(line: &str, line_no: usize) -> Result<AnnotationRecord, ParseError> {
    let line = clean_line(line);
    let (fields, rest): (Vec<&str>, Option<String>) = if line.contains(',') {
        let parts: Vec<&str> = line.splitn(5, ',').collect();
        let rest = parts.get(4).map(|s| s.to_string());
        (parts.into_iter().take(4).collect(), rest)
    } else {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let rest = (parts.len() > 4).then(|| parts[4..].join(" "));
        (parts.into_iter().take(4).collect(), rest)
    };
    let mut v = [0.0; 4];
    for (k, c) in v.iter_mut().enumerate() {
        let f = fields.get(k).ok_or_else(|| {
            ParseError::syntax(
                line_no,
                Some(k + 1),
                format!("expected 4 coordinates, found {}", fields.len()),
            )
        })?;
        *c = number(f, line_no, k + 1)?;
    }
    let rect = AxisRect::new(v[0], v[1], v[2], v[3]).map_err(|e| ParseError::geometry(line_no, e))?;
    let text = rest.as_deref().and_then(transcription);
    Ok(AnnotationRecord::new(Geometry::Rect(rect), text, false))
}

fn quad_of(g: &Geometry) -> Quad {
    match g {
        Geometry::Quad(q) => *q,
        Geometry::Rotated(b) => b.to_quad(),
        Geometry::Rect(r) => r.to_rotated_box().to_quad(),
    }
}

fn with_text(mut line: String, record: &AnnotationRecord, sep: &str) -> String {
    let text = match (&record.transcription, record.dont_care) {
        (Some(t), _) => Some(t.as_str()),
        (None, true) => Some(DONT_CARE_TEXT),
        (None, false) => None,
    };
    if let Some(t) = text {
        line.push_str(sep);
        line.push_str(t);
    }
    line
}

fn join(values: &[f64], sep: &str) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

/// ICDAR2015 line. Exact for every geometry.
pub fn write_icdar15(record: &AnnotationRecord) -> (String, bool) {
    let q = quad_of(&record.geometry);
    (with_text(join(&q.coords(), ","), record, ","), false)
}

/// MSRA-TD500 line. Quads are approximated by their rotated box.
pub fn write_msra(record: &AnnotationRecord, index: usize) -> (String, bool) {
    let lossy = matches!(record.geometry, Geometry::Quad(_));
    let b = record.geometry.to_rotated_box();
    let v = [b.cx() - b.w() / 2.0, b.cy() - b.h() / 2.0, b.w(), b.h(), b.theta()];
    let line = format!("{index} {} {}", u8::from(record.difficult), join(&v, " "));
    (line, lossy)
}

/// ICDAR2013 line. Rotated geometry is replaced by its axis-aligned bounds.
pub fn write_icdar13(record: &AnnotationRecord) -> (String, bool) {
    let (rect, lossy) = match &record.geometry {
        Geometry::Rect(r) => (*r, false),
        Geometry::Rotated(b) => (AxisRect::enclosing(b), b.theta() != 0.0),
        Geometry::Quad(q) => {
            let p: &[Point2; 4] = q.vertices();
            let axis_aligned = (0..4).all(|k| {
                let (a, b) = (p[k], p[(k + 1) % 4]);
                a.x == b.x || a.y == b.y
            });
            (AxisRect::enclosing(&quad_to_rotated_box(q)), !axis_aligned)
        }
    };
    let (x0, y0, x1, y1) = rect.bounds();
    (with_text(join(&[x0, y0, x1, y1], ","), record, ","), lossy)
}

/// Records and per-line errors of one parsed file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile<T> {
    pub records: Vec<T>,
    pub errors: Vec<ParseError>,
}

impl<T> Default for ParsedFile<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            errors: Vec::new(),
        }
    }
}

/// Splits raw bytes into `(line number, text)` pairs, dropping blank lines
/// and reporting lines that are not UTF-8.
pub(crate) fn lines_of(bytes: &[u8]) -> impl Iterator<Item = (usize, Result<&str, ParseError>)> {
    let bytes = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    bytes
        .split(|b| *b == b'\n')
        .enumerate()
        .map(|(k, raw)| {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let text = std::str::from_utf8(raw).map_err(|_| ParseError {
                line: k + 1,
                field: None,
                kind: ParseErrorKind::Encoding,
                message: "line is not valid UTF-8".into(),
            });
            (k + 1, text)
        })
        .filter(|(_, t)| !matches!(t, Ok(s) if s.trim().is_empty()))
}

/// Parses a whole ground-truth file of the given format.
pub fn parse_gt_bytes(bytes: &[u8], format: GtFormat) -> ParsedFile<AnnotationRecord> {
    let mut out = ParsedFile::default();
    for (n, text) in lines_of(bytes) {
        match text.and_then(|t| format.parse_line(t, n)) {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

/// Writes records one per line with a trailing newline. The flag is true
/// if any record was approximated.
pub fn write_gt(records: &[AnnotationRecord], format: GtFormat) -> (String, bool) {
    let mut text = String::new();
    let mut lossy = false;
    for (k, r) in records.iter().enumerate() {
        let (line, l) = format.write_record(r, k);
        lossy |= l;
        text.push_str(&line);
        text.push('\n');
    }
    (text, lossy)
}
