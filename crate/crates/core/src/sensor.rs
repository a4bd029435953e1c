//! Sensor geometry for a rotating multi-beam lidar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Geometry of a rotating lidar: `rings` vertically stacked send/receive
/// modules sweeping `cols` azimuth segments per revolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorModel {
    pub rings: usize,
    pub cols: usize,
    /// Elevation angle per ring, degrees, strictly monotonic.
    pub vertical_angles: Vec<f64>,
    /// Maximum measurable distance in meters.
    pub max_range: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        // 32 rings over [-25 deg, +15 deg]; the real sensor's table is
        // non-uniform but configurable here.
        Self::uniform(32, 1800, -25.0, 15.0, 200.0)
    }
}

impl SensorModel {
    /// Uniformly spaced vertical angles from `lo_deg` to `hi_deg` inclusive.
    pub fn uniform(rings: usize, cols: usize, lo_deg: f64, hi_deg: f64, max_range: f64) -> Self {
        assert!(rings >= 1 && cols >= 1);
        let step = if rings > 1 {
            (hi_deg - lo_deg) / (rings - 1) as f64
        } else {
            0.0
        };
        let vertical_angles = (0..rings).map(|r| lo_deg + step * r as f64).collect();
        Self {
            rings,
            cols,
            vertical_angles,
            max_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings < 1 || self.cols < 1 {
            return Err(Error::InvalidParameter(
                "sensor needs at least one ring and one column".into(),
            ));
        }
        if self.vertical_angles.len() != self.rings {
            return Err(Error::InvalidParameter(format!(
                "vertical angle table has {} entries for {} rings",
                self.vertical_angles.len(),
                self.rings
            )));
        }
        let increasing = self.vertical_angles.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.vertical_angles.windows(2).all(|w| w[0] > w[1]);
        if self.rings > 1 && !increasing && !decreasing {
            return Err(Error::InvalidParameter(
                "vertical angles must be strictly monotonic".into(),
            ));
        }
        Ok(())
    }

    /// Horizontal angular resolution in degrees; `resolution * cols == 360`.
    pub fn azimuth_resolution_deg(&self) -> f64 {
        360.0 / self.cols as f64
    }

    pub fn azimuth_resolution_rad(&self) -> f64 {
        self.azimuth_resolution_deg().to_radians()
    }

    /// Azimuth of a column's center, degrees.
    pub fn col_azimuth_deg(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.azimuth_resolution_deg()
    }

    /// Cartesian position of a return at (ring, azimuth, distance).
    /// x points along azimuth 0, z up.
    pub fn to_cartesian<T: Real>(&self, ring: usize, azimuth_deg: f64, distance: T) -> [T; 3] {
        let elev = self.vertical_angles[ring].to_radians();
        let az = azimuth_deg.to_radians();
        let d = distance.to_f64_lossy();
        let planar = d * elev.cos();
        [
            T::from_f64(planar * az.cos()),
            T::from_f64(planar * az.sin()),
            T::from_f64(d * elev.sin()),
        ]
    }

    /// Distance projected onto the horizontal plane.
    pub fn planar_distance<T: Real>(&self, ring: usize, distance: T) -> T {
        let elev = self.vertical_angles[ring].to_radians();
        T::from_f64(distance.to_f64_lossy() * elev.cos())
    }
}

/// One lidar echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarReturn<T> {
    pub ring: usize,
    /// Degrees in [0, 360).
    pub azimuth_deg: f64,
    /// Meters, > 0.
    pub distance: T,
    /// Normalized reflectance in [0, 1].
    pub intensity: T,
}

/// All returns of one 360 degree scan.
pub type PointCloud<T> = Vec<LidarReturn<T>>;
