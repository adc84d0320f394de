//! Face samples: RGB image, landmark set and parsing mask.

use std::ops::Range;

use fat_tensor::Tensor;

use crate::error::{FatError, Result};
use crate::tps::Point;

pub const BACKGROUND: u8 = 0;
pub const SKIN: u8 = 1;
pub const LEFT_BROW: u8 = 2;
pub const RIGHT_BROW: u8 = 3;
pub const LEFT_EYE: u8 = 4;
pub const RIGHT_EYE: u8 = 5;
pub const LIPS: u8 = 6;
pub const HAIR: u8 = 7;
pub const MAX_LABEL: u8 = HAIR;

/// Number of landmarks in the schema.
pub const NUM_LANDMARKS: usize = 30;

/// Fixed landmark ordering: index `i` means the same point on every face.
pub mod schema {
    use std::ops::Range;

    pub const OVAL: Range<usize> = 0..6;
    pub const LEFT_BROW: Range<usize> = 6..10;
    pub const RIGHT_BROW: Range<usize> = 10..14;
    pub const LEFT_EYE: Range<usize> = 14..18;
    pub const RIGHT_EYE: Range<usize> = 18..22;
    pub const LIPS: Range<usize> = 22..28;
    pub const NOSE: Range<usize> = 28..30;
}

/// Landmark indices belonging to a part label, if the label has any.
pub fn part_landmarks(label: u8) -> Option<Range<usize>> {
    match label {
        LEFT_BROW => Some(schema::LEFT_BROW),
        RIGHT_BROW => Some(schema::RIGHT_BROW),
        LEFT_EYE => Some(schema::LEFT_EYE),
        RIGHT_EYE => Some(schema::RIGHT_EYE),
        LIPS => Some(schema::LIPS),
        _ => None,
    }
}

/// Parses a label-set name: `eyebrows`, `eyes`, `lips`, `all`, `none`, or a
/// comma-separated list of label numbers.
pub fn parse_label_set(s: &str) -> Result<Vec<u8>> {
    let labels = match s.trim() {
        "eyebrows" | "brows" => vec![LEFT_BROW, RIGHT_BROW],
        "eyes" => vec![LEFT_EYE, RIGHT_EYE],
        "lips" => vec![LIPS],
        "all" => (1..=MAX_LABEL).collect(),
        "none" | "" => vec![],
        other => other
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<u8>()
                    .ok()
                    .filter(|l| *l <= MAX_LABEL)
                    .ok_or_else(|| FatError::param("label_set", format!("unknown label {v:?}")))
            })
            .collect::<Result<_>>()?,
    };
    Ok(labels)
}

/// `N` points in `[0, 1]²` image coordinates (x right, y down).
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(FatError::param("landmarks", "empty landmark set"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]))
        {
            return Err(FatError::param("landmarks", format!("point {p:?} outside [0, 1]²")));
        }
        Ok(LandmarkSet { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points mapped to the `[-1, 1]²` coordinates used by TPS and grids.
    pub fn normalized(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|p| [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0])
            .collect()
    }

    pub fn subset(&self, range: Range<usize>) -> Vec<Point> {
        self.points[range].to_vec()
    }
}

/// Per-pixel part labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsingMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ParsingMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(FatError::param(
                "parsing_mask",
                format!(
                    "{height}×{width} mask needs {} labels, got {}",
                    height * width,
                    labels.len()
                ),
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(FatError::param("parsing_mask", format!("undefined label {l}")));
        }
        Ok(ParsingMask { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[i * self.width + j]
    }

    /// Label under a `[0, 1]²` point.
    pub fn at_point(&self, p: Point) -> u8 {
        let j = ((p[0] * self.width as f64) as usize).min(self.width - 1);
        let i = ((p[1] * self.height as f64) as usize).min(self.height - 1);
        self.get(i, j)
    }

    /// Nearest-neighbour resampling (labels are categorical).
    pub fn resize_nearest(&self, height: usize, width: usize) -> ParsingMask {
        let mut labels = Vec::with_capacity(height * width);
        for i in 0..height {
            let si = ((i as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for j in 0..width {
                let sj = ((j as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                labels.push(self.get(si.min(self.height - 1), sj.min(self.width - 1)));
            }
        }
        ParsingMask { height, width, labels }
    }

    /// 1.0 where the label is in `active`, else 0.0.
    pub fn indicator(&self, active: &[u8]) -> Vec<f64> {
        self.labels
            .iter()
            .map(|l| if active.contains(l) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Image, landmarks and parsing mask of one face.
#[derive(Clone, Debug)]
pub struct FaceSample {
    /// `3×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    pub landmarks: LandmarkSet,
    pub mask: ParsingMask,
}

impl FaceSample {
    pub fn new(image: Tensor, landmarks: LandmarkSet, mask: ParsingMask) -> Result<Self> {
        if image.rank() != 3 || image.shape()[0] != 3 {
            return Err(FatError::param(
                "face_sample",
                format!("image must be 3×H×W, got {:?}", image.shape()),
            ));
        }
        if image.shape()[1] != mask.height() || image.shape()[2] != mask.width() {
            return Err(FatError::param(
                "face_sample",
                format!(
                    "image {:?} does not match mask {}×{}",
                    image.shape(),
                    mask.height(),
                    mask.width()
                ),
            ));
        }
        if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FatError::param(
                "face_sample",
                format!("pixel value {v} outside [0, 1]"),
            ));
        }
        Ok(FaceSample { image, landmarks, mask })
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }
}
