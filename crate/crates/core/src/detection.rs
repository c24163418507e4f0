//! Detections, ground truth, and the line-oriented text format they travel in.
//!
//! One record per line, LF terminated, `.` as decimal separator:
//!
//! ```text
//! frame_id,class,x,y,z,dx,dy,dz,yaw,score
//! ```
//!
//! Ground-truth files drop the trailing `score`. Lines starting with `#` and
//! blank lines are skipped.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::fmt_sig;

/// Significant digits used when writing detection records.
pub const RECORD_DIGITS: usize = 9;

/// Oriented box in the ego frame (x forward, y left, z up), meters and radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64, yaw: f64) -> Result<Self> {
        let b = Box3D {
            x,
            y,
            z,
            dx,
            dy,
            dz,
            yaw,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.x, self.y, self.z, self.dx, self.dy, self.dz, self.yaw];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite box field".into()));
        }
        if self.dx <= 0.0 || self.dy <= 0.0 || self.dz <= 0.0 {
            return Err(Error::InvalidArgument("non-positive extent".into()));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(Error::InvalidArgument(format!(
                "yaw {} outside (-pi, pi]",
                self.yaw
            )));
        }
        Ok(())
    }

    /// Corners of the ground-plane footprint, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hx = self.dx / 2.0;
        let hy = self.dy / 2.0;
        let local = [[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]];
        local.map(|[lx, ly]| [self.x + c * lx - s * ly, self.y + s * lx + c * ly])
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_id: u64,
    pub class_label: String,
    pub bbox: Box3D,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub frame_id: u64,
    pub class_label: String,
    pub bbox: Box3D,
}

/// Common view over detections and ground-truth objects.
pub trait Record: Clone {
    /// Number of comma-separated fields in the text form.
    const FIELDS: usize;

    fn frame_id(&self) -> u64;
    fn class_label(&self) -> &str;
    fn bbox(&self) -> &Box3D;

    fn from_fields(line: usize, fields: &[&str]) -> Result<Self>;
    fn write_fields(&self, out: &mut String);
}

impl Record for Detection {
    const FIELDS: usize = 10;

    fn frame_id(&self) -> u64 {
        self.frame_id
    }
    fn class_label(&self) -> &str {
        &self.class_label
    }
    fn bbox(&self) -> &Box3D {
        &self.bbox
    }

    fn from_fields(line: usize, fields: &[&str]) -> Result<Self> {
        let (frame_id, class_label, bbox) = parse_common(line, fields)?;
        let score = parse_f64(line, fields[9], "score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(line, "score out of range"));
        }
        Ok(Detection {
            frame_id,
            class_label,
            bbox,
            score,
        })
    }

    fn write_fields(&self, out: &mut String) {
        write_common(out, self.frame_id, &self.class_label, &self.bbox);
        let _ = write!(out, ",{}", fmt_sig(self.score, RECORD_DIGITS));
    }
}

impl Record for GroundTruthObject {
    const FIELDS: usize = 9;

    fn frame_id(&self) -> u64 {
        self.frame_id
    }
    fn class_label(&self) -> &str {
        &self.class_label
    }
    fn bbox(&self) -> &Box3D {
        &self.bbox
    }

    fn from_fields(line: usize, fields: &[&str]) -> Result<Self> {
        let (frame_id, class_label, bbox) = parse_common(line, fields)?;
        Ok(GroundTruthObject {
            frame_id,
            class_label,
            bbox,
        })
    }

    fn write_fields(&self, out: &mut String) {
        write_common(out, self.frame_id, &self.class_label, &self.bbox);
    }
}

fn parse_f64(line: usize, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {name} {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {name}")));
    }
    Ok(v)
}

fn parse_common(line: usize, f: &[&str]) -> Result<(u64, String, Box3D)> {
    let frame_id: u64 = f[0]
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid frame_id {:?}", f[0])))?;
    let class_label = f[1].to_string();
    if class_label.is_empty() {
        return Err(Error::parse(line, "empty class label"));
    }
    let names = ["x", "y", "z", "dx", "dy", "dz", "yaw"];
    let mut v = [0.0; 7];
    for (i, name) in names.iter().enumerate() {
        v[i] = parse_f64(line, f[2 + i], name)?;
    }
    if v[3] <= 0.0 || v[4] <= 0.0 || v[5] <= 0.0 {
        return Err(Error::parse(line, "non-positive extent"));
    }
    if !(v[6] > -PI && v[6] <= PI) {
        return Err(Error::parse(line, "yaw out of range"));
    }
    let bbox = Box3D {
        x: v[0],
        y: v[1],
        z: v[2],
        dx: v[3],
        dy: v[4],
        dz: v[5],
        yaw: v[6],
    };
    Ok((frame_id, class_label, bbox))
}

fn write_common(out: &mut String, frame_id: u64, label: &str, b: &Box3D) {
    let _ = write!(out, "{frame_id},{label}");
    for v in [b.x, b.y, b.z, b.dx, b.dy, b.dz, b.yaw] {
        let _ = write!(out, ",{}", fmt_sig(v, RECORD_DIGITS));
    }
}

/// Ordered collection of records, sorted by frame id with stable order
/// within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet<R> {
    pub records: Vec<R>,
    pub labels: BTreeSet<String>,
    pub source: String,
}

pub type DetectionSet = RecordSet<Detection>;
pub type GroundTruthSet = RecordSet<GroundTruthObject>;

impl<R: Record> RecordSet<R> {
    /// Builds a set, stable-sorting by frame id and collecting the label set.
    pub fn new(mut records: Vec<R>, source: impl Into<String>) -> Self {
        records.sort_by_key(|r| r.frame_id());
        let labels = records
            .iter()
            .map(|r| r.class_label().to_string())
            .collect();
        RecordSet {
            records,
            labels,
            source: source.into(),
        }
    }

    pub fn empty(source: impl Into<String>) -> Self {
        Self::new(Vec::new(), source)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, R> {
        self.records.iter()
    }

    /// Same source and label set, different records (order preserved).
    pub fn with_records(&self, records: Vec<R>) -> Self {
        RecordSet {
            records,
            labels: self.labels.clone(),
            source: self.source.clone(),
        }
    }

    /// Contiguous per-frame slices, in frame order.
    pub fn frames(&self) -> Vec<(u64, &[R])> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.records.len() {
            let id = self.records[start].frame_id();
            let mut end = start + 1;
            while end < self.records.len() && self.records[end].frame_id() == id {
                end += 1;
            }
            out.push((id, &self.records[start..end]));
            start = end;
        }
        out
    }

    /// Renders the set in the record text format, with a leading column
    /// comment. An empty set renders as an empty string.
    pub fn to_text(&self) -> String {
        if self.records.is_empty() {
            return String::new();
        }
        let mut out = String::with_capacity(self.records.len() * 64 + 64);
        out.push_str(if R::FIELDS == Detection::FIELDS {
            "# frame_id,class,x,y,z,dx,dy,dz,yaw,score\n"
        } else {
            "# frame_id,class,x,y,z,dx,dy,dz,yaw\n"
        });
        for r in &self.records {
            r.write_fields(&mut out);
            out.push('\n');
        }
        out
    }
}

/// Parser options; an empty `allowed_labels` accepts any non-empty label.
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub allowed_labels: BTreeSet<String>,
}

pub fn parse_records<R: Record>(
    bytes: &[u8],
    source: &str,
    opts: &ParseOptions,
) -> Result<RecordSet<R>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        Error::parse(line, "invalid UTF-8")
    })?;
    let mut records = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx + 1;
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != R::FIELDS {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", R::FIELDS, fields.len()),
            ));
        }
        let rec = R::from_fields(line, &fields)?;
        if !opts.allowed_labels.is_empty() && !opts.allowed_labels.contains(rec.class_label()) {
            return Err(Error::parse(
                line,
                format!("unknown class {:?}", rec.class_label()),
            ));
        }
        records.push(rec);
    }
    Ok(RecordSet::new(records, source))
}

/// Parses a detection file (10 columns).
pub fn parse_detection_file(bytes: &[u8]) -> Result<DetectionSet> {
    parse_records(bytes, "", &ParseOptions::default())
}

/// Parses a ground-truth file (9 columns).
pub fn parse_ground_truth_file(bytes: &[u8]) -> Result<GroundTruthSet> {
    parse_records(bytes, "", &ParseOptions::default())
}

/// How distance from the ego sensor is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeMetric {
    /// Ground-plane range sqrt(x² + y²).
    #[default]
    Bev,
    /// Full Euclidean range including z.
    Euclidean,
}

impl RangeMetric {
    pub fn range(self, b: &Box3D) -> f64 {
        match self {
            RangeMetric::Bev => b.x.hypot(b.y),
            RangeMetric::Euclidean => (b.x * b.x + b.y * b.y + b.z * b.z).sqrt(),
        }
    }
}

/// Ground-plane range of a record's box center.
pub fn range_of<R: Record>(r: &R) -> f64 {
    RangeMetric::Bev.range(r.bbox())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, z: f64) -> Detection {
        Detection {
            frame_id: 0,
            class_label: "car".into(),
            bbox: Box3D::new(x, y, z, 4.0, 2.0, 1.5, 0.0).unwrap(),
            score: 0.5,
        }
    }

    #[test]
    fn parses_single_record() {
        let set = parse_detection_file(b"0,car,10,0,-1,4,2,1.5,0,0.9").unwrap();
        assert_eq!(set.len(), 1);
        let d = &set.records[0];
        assert_eq!(d.frame_id, 0);
        assert_eq!(d.class_label, "car");
        assert_eq!(d.bbox, Box3D::new(10.0, 0.0, -1.0, 4.0, 2.0, 1.5, 0.0).unwrap());
        assert_eq!(d.score, 0.9);
    }

    #[test]
    fn empty_stream_is_empty_set() {
        assert!(parse_detection_file(b"").unwrap().is_empty());
        assert!(parse_detection_file(b"# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn score_out_of_range_names_line() {
        let err = parse_detection_file(b"0,car,10,0,-1,4,2,1.5,0,1.3").unwrap_err();
        assert_eq!(err.to_string(), "score out of range, line 1");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_number() {
        let cases: [(&[u8], &str); 5] = [
            (b"# c\n0,car,10,0,-1,4,2,1.5,0\n", "line 2"),
            (b"0,car,ten,0,-1,4,2,1.5,0,0.5\n", "line 1"),
            (b"0,car,10,0,-1,4,0,1.5,0,0.5\n", "non-positive extent, line 1"),
            (b"\n\n0,car,10,0,-1,4,2,1.5,0,0.5\r\n", "line 3"),
            (b"0,,10,0,-1,4,2,1.5,0,0.5\n", "empty class label, line 1"),
        ];
        for (input, needle) in cases {
            let msg = parse_detection_file(input).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg:?} lacks {needle:?}");
        }
    }

    #[test]
    fn invalid_utf8_reports_line() {
        let err = parse_detection_file(b"0,car,1,0,0,1,1,1,0,0.5\n0,\xff,1,0,0,1,1,1,0,0.5\n")
            .unwrap_err();
        assert!(err.to_string().ends_with("line 2"), "{err}");
    }

    #[test]
    fn scores_at_bounds_are_legal() {
        let set = parse_detection_file(b"0,car,1,0,0,1,1,1,0,0\n0,car,1,0,0,1,1,1,0,1\n").unwrap();
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn loader_sorts_stably_by_frame() {
        let text = b"2,car,1,0,0,1,1,1,0,0.1\n0,a,1,0,0,1,1,1,0,0.2\n2,b,1,0,0,1,1,1,0,0.3\n0,c,1,0,0,1,1,1,0,0.4\n";
        let set = parse_detection_file(text).unwrap();
        let order: Vec<_> = set.iter().map(|d| d.score).collect();
        assert_eq!(order, vec![0.2, 0.4, 0.1, 0.3]);
        assert_eq!(set.frames().len(), 2);
        assert_eq!(set.labels.len(), 4);
    }

    #[test]
    fn label_whitelist() {
        let opts = ParseOptions {
            allowed_labels: ["car".to_string()].into_iter().collect(),
        };
        let err = parse_records::<Detection>(b"0,tree,1,0,0,1,1,1,0,0.5", "t", &opts).unwrap_err();
        assert!(err.to_string().contains("unknown class"));
    }

    #[test]
    fn ground_truth_has_nine_columns() {
        let gt = parse_ground_truth_file(b"3,car,10,0,-1,4,2,1.5,0\n").unwrap();
        assert_eq!(gt.records[0].frame_id, 3);
        assert!(parse_ground_truth_file(b"3,car,10,0,-1,4,2,1.5,0,0.5\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "# frame_id,class,x,y,z,dx,dy,dz,yaw,score\n0,car,10.1234568,-3.5,-1,4.2,1.8,1.5,3.14159265,0.912345678\n1,ped,0.5,0.25,0,0.6,0.6,1.7,-1.5,0\n";
        let set = parse_detection_file(text.as_bytes()).unwrap();
        assert_eq!(set.to_text(), text);
        assert_eq!(parse_detection_file(set.to_text().as_bytes()).unwrap(), set);
    }

    #[test]
    fn range_examples() {
        assert_eq!(range_of(&det(3.0, 4.0, -1.0)), 5.0);
        assert_eq!(range_of(&det(0.0, 0.0, 2.0)), 0.0);
        assert_eq!(range_of(&det(40.0, 0.0, 0.0)), 40.0);
        assert_eq!(RangeMetric::Euclidean.range(&det(0.0, 0.0, 2.0).bbox), 2.0);
    }

    #[test]
    fn range_ignores_yaw_and_z() {
        let mut a = det(7.0, -2.0, 0.0);
        let r = range_of(&a);
        a.bbox.z = 33.0;
        a.bbox.yaw = 1.2;
        assert_eq!(range_of(&a), r);
    }

    #[test]
    fn yaw_normalization() {
        assert!((normalize_yaw(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_yaw(-PI), PI);
        assert_eq!(normalize_yaw(0.5), 0.5);
    }
}
