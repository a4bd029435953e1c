//! Reference-based autolabeling of weather clutter.
//!
//! Clear-weather frames of a static scene are stacked into a reference;
//! a measured pixel is valid when some reference distance for the same
//! (ring, column) lies within `delta_r`, otherwise it is clutter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Label, LabelImage, RangeImage};
use crate::project::crop_fov;
use crate::scalar::Real;

/// Accumulated clear-weather distance images, rows x cols x frame_count.
#[derive(Debug, Clone)]
pub struct ReferenceStack<T> {
    pub rows: usize,
    pub cols: usize,
    pub frame_count: usize,
    /// Indexed [frame][row * cols + col]; 0 = no return.
    pub distances: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AutolabelParams {
    /// Distance tolerance in meters.
    pub delta_r: f64,
    /// Class assigned to clutter pixels; comes from recording metadata.
    pub weather_class: WeatherClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherClass {
    Rain,
    Fog,
}

impl WeatherClass {
    pub fn label(self) -> Label {
        match self {
            WeatherClass::Rain => Label::Rain,
            WeatherClass::Fog => Label::Fog,
        }
    }
}

impl Default for AutolabelParams {
    fn default() -> Self {
        Self {
            delta_r: 0.35,
            weather_class: WeatherClass::Fog,
        }
    }
}

impl AutolabelParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta_r <= 0.0 {
            return Err(Error::InvalidParameter("delta_r must be positive".into()));
        }
        Ok(())
    }
}

/// Self-check statistics from labeling the reference recording against
/// itself (split in two halves, each labeled against the other's stack).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FalseRateReport {
    pub per_frame_false_counts: Vec<usize>,
    pub mean_per_pixel_false_rate: f64,
    pub std_per_pixel_false_rate: f64,
    pub pixels_per_frame: usize,
}

pub fn accumulate_reference<T: Real>(frames: &[RangeImage<T>]) -> Result<ReferenceStack<T>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("reference accumulation needs at least one frame".into()))?;
    for f in frames {
        first.check_shape(f)?;
    }
    Ok(ReferenceStack {
        rows: first.rows,
        cols: first.cols,
        frame_count: frames.len(),
        distances: frames.iter().map(|f| f.distance.clone()).collect(),
    })
}

/// Label one weather-corrupted frame against the reference stack.
///
/// Per pixel: no-return stays no-return; a return is valid when
/// `min_k |d_ref_k - d| <= delta_r` over reference frames with a return at
/// that pixel, and clutter otherwise. A return over an all-empty reference
/// column is clutter: the clear scene never produced an echo there.
pub fn label_clutter<T: Real>(
    image: &RangeImage<T>,
    reference: &ReferenceStack<T>,
    params: &AutolabelParams,
) -> Result<LabelImage> {
    params.validate()?;
    if image.rows != reference.rows || image.cols != reference.cols {
        return Err(Error::shape(
            format!("{}x{}", reference.rows, reference.cols),
            format!("{}x{}", image.rows, image.cols),
        ));
    }
    let delta_r = T::from_f64(params.delta_r);
    let clutter = params.weather_class.label();
    let mut out = LabelImage::filled(image.rows, image.cols, Label::NoReturn);
    for idx in 0..image.rows * image.cols {
        let d = image.distance[idx];
        if d <= T::zero() {
            continue;
        }
        let mut min_diff: Option<T> = None;
        for frame in &reference.distances {
            let r = frame[idx];
            if r > T::zero() {
                let diff = (r - d).abs();
                min_diff = Some(match min_diff {
                    Some(m) if m <= diff => m,
                    _ => diff,
                });
            }
        }
        let label = match min_diff {
            Some(m) if m <= delta_r => Label::Valid,
            _ => clutter,
        };
        out.labels[idx] = label;
    }
    Ok(out)
}

/// Label both halves of a clear-weather recording against each other and
/// report the per-pixel false rate on a crop of `crop_width` columns
/// starting at column 0.
pub fn reference_self_check<T: Real>(
    frames: &[RangeImage<T>],
    params: &AutolabelParams,
    crop_width: usize,
) -> Result<FalseRateReport> {
    if frames.len() < 2 {
        return Err(Error::EmptyInput(
            "self check needs at least two frames".into(),
        ));
    }
    let mid = frames.len() / 2;
    let (first, second) = frames.split_at(mid);
    let crop_all = |half: &[RangeImage<T>]| -> Result<Vec<RangeImage<T>>> {
        half.iter().map(|f| crop_fov(f, 0, crop_width)).collect()
    };
    let first = crop_all(first)?;
    let second = crop_all(second)?;
    let stack_first = accumulate_reference(&first)?;
    let stack_second = accumulate_reference(&second)?;

    let rows = first[0].rows;
    let pixels_per_frame = rows * crop_width;
    let mut per_frame_false_counts = Vec::with_capacity(frames.len());
    for (half, stack) in [(&first, &stack_second), (&second, &stack_first)] {
        for frame in half.iter() {
            let labels = label_clutter(frame, stack, params)?;
            let false_count = labels.labels.iter().filter(|l| l.is_clutter()).count();
            per_frame_false_counts.push(false_count);
        }
    }
    let rates: Vec<f64> = per_frame_false_counts
        .iter()
        .map(|c| *c as f64 / pixels_per_frame as f64)
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rates.len() as f64;
    Ok(FalseRateReport {
        per_frame_false_counts,
        mean_per_pixel_false_rate: mean,
        std_per_pixel_false_rate: var.sqrt(),
        pixels_per_frame,
    })
}
