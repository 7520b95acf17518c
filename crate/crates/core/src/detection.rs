//! Class taxonomy, detection records and the confusion-matrix evidence model.
//!
//! The detector emits a confidence vector over the 13 light classes. Each
//! class belongs to exactly one housing type ([`TlType`]), and each type owns
//! a disjoint subset of valid states that its state filter runs over.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelBox;

/// Number of detector classes (background excluded).
pub const NUM_CLASSES: usize = 13;

/// Traffic-light state classes as labelled by the detector.
///
/// Discriminants follow the detector's confidence-vector layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TlClass {
    #[serde(rename = "3-green")]
    Green3 = 0,
    #[serde(rename = "3-red")]
    Red3 = 1,
    #[serde(rename = "3-yellow")]
    Yellow3 = 2,
    #[serde(rename = "4-gleft")]
    GreenLeft4 = 3,
    #[serde(rename = "4-off")]
    Off4 = 4,
    #[serde(rename = "4-rleft")]
    RedLeft4 = 5,
    #[serde(rename = "4-yleft1")]
    YellowLeft4 = 6,
    #[serde(rename = "4-yleft2")]
    FlashingYellowLeft4 = 7,
    #[serde(rename = "5dh-green")]
    Green5 = 8,
    #[serde(rename = "5dh-red")]
    Red5 = 9,
    #[serde(rename = "5dh-red-gleft")]
    RedGreenLeft5 = 10,
    #[serde(rename = "5dh-red-yleft")]
    RedYellowLeft5 = 11,
    #[serde(rename = "5dh-yellow")]
    Yellow5 = 12,
    #[serde(rename = "background")]
    Background = 13,
}

impl TlClass {
    /// All detector classes in confidence-vector order.
    pub const ALL: [TlClass; NUM_CLASSES] = [
        TlClass::Green3,
        TlClass::Red3,
        TlClass::Yellow3,
        TlClass::GreenLeft4,
        TlClass::Off4,
        TlClass::RedLeft4,
        TlClass::YellowLeft4,
        TlClass::FlashingYellowLeft4,
        TlClass::Green5,
        TlClass::Red5,
        TlClass::RedGreenLeft5,
        TlClass::RedYellowLeft5,
        TlClass::Yellow5,
    ];

    /// Index into the confidence vector; background maps to `NUM_CLASSES`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<TlClass> {
        match index {
            i if i < NUM_CLASSES => Some(Self::ALL[i]),
            NUM_CLASSES => Some(TlClass::Background),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TlClass::Green3 => "3-green",
            TlClass::Red3 => "3-red",
            TlClass::Yellow3 => "3-yellow",
            TlClass::GreenLeft4 => "4-gleft",
            TlClass::Off4 => "4-off",
            TlClass::RedLeft4 => "4-rleft",
            TlClass::YellowLeft4 => "4-yleft1",
            TlClass::FlashingYellowLeft4 => "4-yleft2",
            TlClass::Green5 => "5dh-green",
            TlClass::Red5 => "5dh-red",
            TlClass::RedGreenLeft5 => "5dh-red-gleft",
            TlClass::RedYellowLeft5 => "5dh-red-yleft",
            TlClass::Yellow5 => "5dh-yellow",
            TlClass::Background => "background",
        }
    }

    /// `4-off` is the only class with every bulb dark.
    pub fn is_on(self) -> bool {
        !matches!(self, TlClass::Off4 | TlClass::Background)
    }

    pub fn tl_type(self) -> Result<TlType> {
        class_to_type(self)
    }

    /// Position within the owning type's canonical order (red, yellow,
    /// green, off). Used to break exact ties deterministically.
    pub fn canonical_rank(self) -> usize {
        match self.tl_type() {
            Ok(t) => t
                .valid_states()
                .iter()
                .position(|&c| c == self)
                .unwrap_or(usize::MAX),
            Err(_) => usize::MAX,
        }
    }
}

impl fmt::Display for TlClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TlClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .chain(std::iter::once(TlClass::Background))
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid("class", format!("unknown class `{s}`")))
    }
}

/// Housing type. Each type has its own state filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlType {
    ThreeBulb,
    FourArrow,
    FiveDoghouse,
}

impl TlType {
    pub const ALL: [TlType; 3] = [TlType::ThreeBulb, TlType::FourArrow, TlType::FiveDoghouse];

    /// Valid states in canonical tie-break order.
    pub fn valid_states(self) -> &'static [TlClass] {
        match self {
            TlType::ThreeBulb => &[TlClass::Red3, TlClass::Yellow3, TlClass::Green3],
            TlType::FourArrow => &[
                TlClass::RedLeft4,
                TlClass::YellowLeft4,
                TlClass::FlashingYellowLeft4,
                TlClass::GreenLeft4,
                TlClass::Off4,
            ],
            TlType::FiveDoghouse => &[
                TlClass::Red5,
                TlClass::RedYellowLeft5,
                TlClass::RedGreenLeft5,
                TlClass::Yellow5,
                TlClass::Green5,
            ],
        }
    }

    pub fn num_states(self) -> usize {
        self.valid_states().len()
    }

    pub fn state_index(self, class: TlClass) -> Option<usize> {
        self.valid_states().iter().position(|&c| c == class)
    }

    pub fn contains(self, class: TlClass) -> bool {
        self.state_index(class).is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            TlType::ThreeBulb => "three_bulb",
            TlType::FourArrow => "four_arrow",
            TlType::FiveDoghouse => "five_doghouse",
        }
    }
}

impl fmt::Display for TlType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a detector class onto its housing type by name prefix.
pub fn class_to_type(class: TlClass) -> Result<TlType> {
    let name = class.name();
    if name.starts_with("3-") {
        Ok(TlType::ThreeBulb)
    } else if name.starts_with("4-") {
        Ok(TlType::FourArrow)
    } else if name.starts_with("5dh-") {
        Ok(TlType::FiveDoghouse)
    } else {
        Err(Error::NoType)
    }
}

/// Detector class-confidence vector `x`, with `x[k] = P(o_t = V_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Confidence([f64; NUM_CLASSES]);

impl Confidence {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(values: [f64; NUM_CLASSES]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "confidence",
                "entries must be finite and >= 0",
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(
                "confidence",
                format!("entries sum to {sum}, expected 1"),
            ));
        }
        Ok(Confidence(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_CLASSES] = values.try_into().map_err(|_| {
            Error::invalid(
                "confidence",
                format!("expected {NUM_CLASSES} entries, got {}", values.len()),
            )
        })?;
        Self::new(arr)
    }

    /// All mass on a single class.
    pub fn one_hot(class: TlClass) -> Self {
        let mut v = [0.0; NUM_CLASSES];
        v[class.index()] = 1.0;
        Confidence(v)
    }

    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: TlClass) -> f64 {
        self.0.get(class.index()).copied().unwrap_or(0.0)
    }

    /// Argmax; exact ties go to the lower confidence-vector index.
    pub fn argmax(&self) -> TlClass {
        let mut best = 0;
        for (k, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = k;
            }
        }
        TlClass::ALL[best]
    }

    /// Entries for the type's valid states (canonical order), renormalized.
    /// `None` when the type receives no mass.
    pub fn restricted(&self, tl_type: TlType) -> Option<Vec<f64>> {
        let sub: Vec<f64> = tl_type
            .valid_states()
            .iter()
            .map(|&c| self.get(c))
            .collect();
        let total: f64 = sub.iter().sum();
        if total > 0.0 {
            Some(sub.into_iter().map(|v| v / total).collect())
        } else {
            None
        }
    }
}

/// One detector output box.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection2D {
    pub camera_id: String,
    pub timestamp: f64,
    pub bbox: PixelBox,
    pub confidence: Confidence,
    pub score: f64,
}

impl Detection2D {
    pub fn new(
        camera_id: impl Into<String>,
        timestamp: f64,
        bbox: PixelBox,
        confidence: Confidence,
        score: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(
                "detection",
                format!("score {score} outside [0, 1]"),
            ));
        }
        bbox.validate()?;
        Ok(Detection2D {
            camera_id: camera_id.into(),
            timestamp,
            bbox,
            confidence,
            score,
        })
    }

    pub fn detected_class(&self) -> TlClass {
        self.confidence.argmax()
    }

    pub fn to_record(&self) -> DetectionRecord {
        DetectionRecord {
            camera_id: self.camera_id.clone(),
            t: self.timestamp,
            cx: self.bbox.cx,
            cy: self.bbox.cy,
            h: self.bbox.h,
            w: self.bbox.w,
            conf: self.confidence.values().to_vec(),
            score: self.score,
        }
    }
}

/// One line of the detection JSONL stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub camera_id: String,
    pub t: f64,
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
    pub conf: Vec<f64>,
    pub score: f64,
}

impl TryFrom<DetectionRecord> for Detection2D {
    type Error = Error;

    fn try_from(r: DetectionRecord) -> Result<Self> {
        let confidence = Confidence::from_slice(&r.conf)?;
        Detection2D::new(
            r.camera_id,
            r.t,
            PixelBox::new(r.cx, r.cy, r.h, r.w),
            confidence,
            r.score,
        )
    }
}

/// `C(j, k) = P(true state S_j | observed V_k)`, column-stochastic.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionModel {
    matrix: DMatrix<f64>,
}

impl ConfusionModel {
    pub const COLUMN_TOLERANCE: f64 = 1e-9;

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "confusion matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "confusion",
                "entries must be finite and >= 0",
            ));
        }
        for (k, col) in matrix.column_iter().enumerate() {
            if (col.sum() - 1.0).abs() > Self::COLUMN_TOLERANCE {
                return Err(Error::invalid(
                    "confusion",
                    format!("column {k} sums to {}", col.sum()),
                ));
            }
        }
        Ok(ConfusionModel { matrix })
    }

    pub fn identity(n: usize) -> Self {
        ConfusionModel {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Column-normalizes a count matrix `counts[true][observed]`.
pub fn confusion_from_counts(counts: &[Vec<u64>]) -> Result<ConfusionModel> {
    let n = counts.len();
    if counts.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension(format!("count matrix must be {n}x{n}")));
    }
    let mut matrix = DMatrix::zeros(n, n);
    for k in 0..n {
        let total: u64 = counts.iter().map(|row| row[k]).sum();
        if total == 0 {
            return Err(Error::DegenerateColumn { column: k });
        }
        for j in 0..n {
            matrix[(j, k)] = counts[j][k] as f64 / total as f64;
        }
    }
    Ok(ConfusionModel { matrix })
}
