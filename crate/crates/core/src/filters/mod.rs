//! Geometric baseline de-noising filters over 3D point neighborhoods.
//!
//! * DROR — neighbor-count filter whose search radius grows with the
//!   planar distance of the point, matching the angular beam spacing.
//! * ROR — fixed-radius neighbor count.
//! * SOR — statistical filter on the mean distance to the k nearest
//!   neighbors against the global mean and standard deviation.

pub mod grid;

use serde::{Deserialize, Serialize};

use crate::autolabel::WeatherClass;
use crate::error::{Error, Result};
use crate::image::{Label, LabelImage, RangeImage};
use crate::scalar::Real;
use crate::sensor::SensorModel;
use grid::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskFlag {
    Keep,
    Clutter,
    NoReturn,
}

/// Per-pixel filter verdict, same shape as the source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierMask {
    pub rows: usize,
    pub cols: usize,
    pub flags: Vec<MaskFlag>,
}

impl OutlierMask {
    pub fn count(&self, flag: MaskFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }

    /// Convert to labels for IoU scoring. A binary filter cannot tell rain
    /// from fog, so clutter maps to the caller's active weather class.
    pub fn to_labels(&self, weather_class: WeatherClass) -> LabelImage {
        LabelImage {
            rows: self.rows,
            cols: self.cols,
            labels: self
                .flags
                .iter()
                .map(|f| match f {
                    MaskFlag::Keep => Label::Valid,
                    MaskFlag::Clutter => weather_class.label(),
                    MaskFlag::NoReturn => Label::NoReturn,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrorParams {
    /// Horizontal angular resolution in radians.
    pub alpha: f64,
    /// Search radius multiplier.
    pub radius_multiplier: f64,
    /// Minimum neighbor count to keep a point.
    pub min_neighbors: usize,
    /// Lower bound on the search radius, meters.
    pub min_search_radius: f64,
}

impl Default for DrorParams {
    fn default() -> Self {
        Self {
            alpha: 0.2f64.to_radians(),
            radius_multiplier: 3.0,
            min_neighbors: 3,
            min_search_radius: 0.04,
        }
    }
}

impl DrorParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0
            || self.radius_multiplier <= 0.0
            || self.min_neighbors == 0
            || self.min_search_radius <= 0.0
        {
            return Err(Error::InvalidParameter(
                "DROR parameters must all be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Search radius for a point at the given planar distance.
    pub fn search_radius(&self, planar_distance: f64) -> f64 {
        (self.radius_multiplier * planar_distance * self.alpha).max(self.min_search_radius)
    }
}

struct FramePoints<T> {
    pixel: Vec<usize>,
    planar: Vec<T>,
    grid_points: Vec<[T; 3]>,
}

fn collect_points<T: Real>(image: &RangeImage<T>, sensor: &SensorModel) -> FramePoints<T> {
    let mut pixel = Vec::new();
    let mut planar = Vec::new();
    let mut grid_points = Vec::new();
    for row in 0..image.rows {
        for col in 0..image.cols {
            let d = image.distance_at(row, col);
            if d > T::zero() {
                pixel.push(row * image.cols + col);
                planar.push(sensor.planar_distance(row, d));
                grid_points.push(sensor.to_cartesian(row, sensor.col_azimuth_deg(col), d));
            }
        }
    }
    FramePoints {
        pixel,
        planar,
        grid_points,
    }
}

fn empty_mask<T: Real>(image: &RangeImage<T>) -> OutlierMask {
    OutlierMask {
        rows: image.rows,
        cols: image.cols,
        flags: image
            .distance
            .iter()
            .map(|d| {
                if *d > T::zero() {
                    MaskFlag::Clutter
                } else {
                    MaskFlag::NoReturn
                }
            })
            .collect(),
    }
}

/// Dynamic radius outlier removal: keep a point iff at least
/// `min_neighbors` other points lie within its distance-scaled radius.
pub fn dror_filter<T: Real>(
    image: &RangeImage<T>,
    sensor: &SensorModel,
    params: &DrorParams,
) -> Result<OutlierMask> {
    params.validate()?;
    let points = collect_points(image, sensor);
    let mut mask = empty_mask(image);
    if points.pixel.is_empty() {
        return Ok(mask);
    }
    let max_radius = points
        .planar
        .iter()
        .map(|p| params.search_radius(p.to_f64_lossy()))
        .fold(params.min_search_radius, f64::max);
    let grid = VoxelGrid::build(points.grid_points, T::from_f64(max_radius));
    for (i, &pix) in points.pixel.iter().enumerate() {
        let radius = params.search_radius(points.planar[i].to_f64_lossy());
        if grid.count_neighbors(i, T::from_f64(radius)) >= params.min_neighbors {
            mask.flags[pix] = MaskFlag::Keep;
        }
    }
    Ok(mask)
}

/// Fixed-radius outlier removal.
pub fn ror_filter<T: Real>(
    image: &RangeImage<T>,
    sensor: &SensorModel,
    radius: f64,
    min_neighbors: usize,
) -> Result<OutlierMask> {
    if radius <= 0.0 {
        return Err(Error::InvalidParameter("ROR radius must be positive".into()));
    }
    let points = collect_points(image, sensor);
    let mut mask = empty_mask(image);
    if points.pixel.is_empty() {
        return Ok(mask);
    }
    let grid = VoxelGrid::build(points.grid_points, T::from_f64(radius));
    for (i, &pix) in points.pixel.iter().enumerate() {
        if grid.count_neighbors(i, T::from_f64(radius)) >= min_neighbors {
            mask.flags[pix] = MaskFlag::Keep;
        }
    }
    Ok(mask)
}

/// Statistical outlier removal: keep a point iff its mean distance to the
/// `k` nearest neighbors is within `global_mean + std_multiplier * global_std`
/// of the per-point means.
pub fn sor_filter<T: Real>(
    image: &RangeImage<T>,
    sensor: &SensorModel,
    k: usize,
    std_multiplier: f64,
) -> Result<OutlierMask> {
    if k == 0 {
        return Err(Error::InvalidParameter("SOR k must be positive".into()));
    }
    let points = collect_points(image, sensor);
    let mut mask = empty_mask(image);
    let n = points.pixel.len();
    if n < k + 1 {
        return Err(Error::EmptyInput(format!(
            "SOR needs at least k+1 = {} returns, got {n}",
            k + 1
        )));
    }
    // heuristic cell size from the bounding box; correctness does not
    // depend on it
    let mut extent = T::zero();
    for axis in 0..3 {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for p in &points.grid_points {
            lo = lo.min(p[axis]);
            hi = hi.max(p[axis]);
        }
        extent = extent.max(hi - lo);
    }
    let cell = (extent / T::from_f64((n as f64).cbrt().max(1.0)))
        .max(T::from_f64(1e-3));
    let grid = VoxelGrid::build(points.grid_points, cell);

    let mean_dists: Vec<f64> = (0..n)
        .map(|i| {
            let d = grid.knn_distances(i, k);
            d.iter().map(|d| d.to_f64_lossy()).sum::<f64>() / d.len() as f64
        })
        .collect();
    let global_mean = mean_dists.iter().sum::<f64>() / n as f64;
    let global_var = mean_dists
        .iter()
        .map(|m| (m - global_mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let threshold = global_mean + std_multiplier * global_var.sqrt();
    for (i, &pix) in points.pixel.iter().enumerate() {
        if mean_dists[i] <= threshold {
            mask.flags[pix] = MaskFlag::Keep;
        }
    }
    Ok(mask)
}
