//! Range images and per-pixel weather labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-pixel weather class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Valid,
    Rain,
    Fog,
    NoReturn,
}

impl Label {
    pub const CODE_VALID: u8 = 0;
    pub const CODE_RAIN: u8 = 1;
    pub const CODE_FOG: u8 = 2;
    pub const CODE_NO_RETURN: u8 = 255;

    pub fn to_code(self) -> u8 {
        match self {
            Label::Valid => Self::CODE_VALID,
            Label::Rain => Self::CODE_RAIN,
            Label::Fog => Self::CODE_FOG,
            Label::NoReturn => Self::CODE_NO_RETURN,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            Self::CODE_VALID => Some(Label::Valid),
            Self::CODE_RAIN => Some(Label::Rain),
            Self::CODE_FOG => Some(Label::Fog),
            Self::CODE_NO_RETURN => Some(Label::NoReturn),
            _ => None,
        }
    }

    /// Index into the 3-class confusion matrix; `None` for no-return.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Valid => Some(0),
            Label::Rain => Some(1),
            Label::Fog => Some(2),
            Label::NoReturn => None,
        }
    }

    pub fn is_clutter(self) -> bool {
        matches!(self, Label::Rain | Label::Fog)
    }
}

/// Cylindrical lidar image: distance matrix D and intensity matrix I,
/// row = ring, column = azimuth segment. Distance 0 is the no-return
/// sentinel; intensity is 0 wherever distance is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage<T> {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, meters.
    pub distance: Vec<T>,
    /// Row-major, [0, 1].
    pub intensity: Vec<T>,
    pub frame_id: String,
    pub timestamp: f64,
}

impl<T: Real> RangeImage<T> {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            distance: vec![T::zero(); rows * cols],
            intensity: vec![T::zero(); rows * cols],
            frame_id: String::new(),
            timestamp: 0.0,
        }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn distance_at(&self, row: usize, col: usize) -> T {
        self.distance[self.idx(row, col)]
    }

    #[inline]
    pub fn intensity_at(&self, row: usize, col: usize) -> T {
        self.intensity[self.idx(row, col)]
    }

    #[inline]
    pub fn has_return(&self, row: usize, col: usize) -> bool {
        self.distance_at(row, col) > T::zero()
    }

    pub fn return_count(&self) -> usize {
        self.distance.iter().filter(|d| **d > T::zero()).count()
    }

    pub fn same_shape<U>(&self, other: &RangeImage<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn check_shape<U>(&self, other: &RangeImage<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ))
        }
    }

    /// Convert the scalar type (e.g. f32 frame -> f64 training input).
    pub fn cast<U: Real>(&self) -> RangeImage<U> {
        RangeImage {
            rows: self.rows,
            cols: self.cols,
            distance: self.distance.iter().map(|d| U::from_f64(d.to_f64_lossy())).collect(),
            intensity: self.intensity.iter().map(|i| U::from_f64(i.to_f64_lossy())).collect(),
            frame_id: self.frame_id.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Per-pixel labels accompanying a [`RangeImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub labels: Vec<Label>,
}

impl LabelImage {
    pub fn filled(rows: usize, cols: usize, label: Label) -> Self {
        Self {
            rows,
            cols,
            labels: vec![label; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Label {
        self.labels[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: Label) {
        self.labels[row * self.cols + col] = label;
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows == rows && self.cols == cols {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{rows}x{cols}"),
                format!("{}x{}", self.rows, self.cols),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_codes_roundtrip() {
        for l in [Label::Valid, Label::Rain, Label::Fog, Label::NoReturn] {
            assert_eq!(Label::from_code(l.to_code()), Some(l));
        }
        assert_eq!(Label::from_code(7), None);
    }

    #[test]
    fn return_count_partitions_pixels() {
        let mut img = RangeImage::<f32>::empty(4, 6);
        img.distance[3] = 12.5;
        img.distance[17] = 3.0;
        let no_return = img.distance.iter().filter(|d| **d == 0.0).count();
        assert_eq!(no_return + img.return_count(), 4 * 6);
    }
}
