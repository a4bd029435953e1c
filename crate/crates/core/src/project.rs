//! Cylindrical projection of a scan into a range image, the inverse pixel
//! to return conversion, and field-of-view cropping.

use crate::error::{Error, Result};
use crate::image::RangeImage;
use crate::scalar::Real;
use crate::sensor::{LidarReturn, PointCloud, SensorModel};

/// Merge one scan into a cylindrical range image. Row = ring, column =
/// `floor(azimuth / resolution)`. When two returns land on the same pixel
/// the nearer one wins. Pixels without a return keep the 0 sentinel.
pub fn project_scan<T: Real>(
    cloud: &PointCloud<T>,
    sensor: &SensorModel,
) -> Result<RangeImage<T>> {
    sensor.validate()?;
    let mut image = RangeImage::empty(sensor.rings, sensor.cols);
    let res = sensor.azimuth_resolution_deg();
    for (index, ret) in cloud.iter().enumerate() {
        if ret.ring >= sensor.rings {
            return Err(Error::InvalidReturn {
                index,
                reason: format!("ring {} out of range (rings={})", ret.ring, sensor.rings),
            });
        }
        if !(0.0..360.0).contains(&ret.azimuth_deg) {
            return Err(Error::InvalidReturn {
                index,
                reason: format!("azimuth {} deg outside [0, 360)", ret.azimuth_deg),
            });
        }
        if ret.distance <= T::zero() {
            return Err(Error::InvalidReturn {
                index,
                reason: "distance must be positive".into(),
            });
        }
        let col = ((ret.azimuth_deg / res).floor() as usize).min(sensor.cols - 1);
        let idx = image.idx(ret.ring, col);
        let current = image.distance[idx];
        if current == T::zero() || ret.distance < current {
            image.distance[idx] = ret.distance;
            image.intensity[idx] = ret.intensity;
        }
    }
    Ok(image)
}

/// Convert the pixels of a range image back into returns, placing each at
/// its column-center azimuth. Composing with [`project_scan`] is exact.
pub fn image_to_returns<T: Real>(image: &RangeImage<T>, sensor: &SensorModel) -> PointCloud<T> {
    let mut cloud = Vec::with_capacity(image.return_count());
    for row in 0..image.rows {
        for col in 0..image.cols {
            let d = image.distance_at(row, col);
            if d > T::zero() {
                cloud.push(LidarReturn {
                    ring: row,
                    azimuth_deg: sensor.col_azimuth_deg(col),
                    distance: d,
                    intensity: image.intensity_at(row, col),
                });
            }
        }
    }
    cloud
}

/// Crop a horizontal field of view of `width` columns starting at
/// `start_col`, wrapping modulo the image width.
pub fn crop_fov<T: Real>(
    image: &RangeImage<T>,
    start_col: usize,
    width: usize,
) -> Result<RangeImage<T>> {
    if width == 0 {
        return Err(Error::InvalidParameter("crop width must be positive".into()));
    }
    if width > image.cols {
        return Err(Error::InvalidParameter(format!(
            "crop width {} exceeds image width {}",
            width, image.cols
        )));
    }
    let mut out = RangeImage::empty(image.rows, width);
    out.frame_id = image.frame_id.clone();
    out.timestamp = image.timestamp;
    for row in 0..image.rows {
        for c in 0..width {
            let src = (start_col + c) % image.cols;
            let dst = row * width + c;
            out.distance[dst] = image.distance_at(row, src);
            out.intensity[dst] = image.intensity_at(row, src);
        }
    }
    Ok(out)
}

/// Crop the matching label image with the same wrap rule.
pub fn crop_labels(
    labels: &crate::image::LabelImage,
    start_col: usize,
    width: usize,
) -> Result<crate::image::LabelImage> {
    if width == 0 || width > labels.cols {
        return Err(Error::InvalidParameter("bad label crop width".into()));
    }
    let mut out = crate::image::LabelImage::filled(labels.rows, width, crate::image::Label::NoReturn);
    for row in 0..labels.rows {
        for c in 0..width {
            out.set(row, c, labels.at(row, (start_col + c) % labels.cols));
        }
    }
    Ok(out)
}
