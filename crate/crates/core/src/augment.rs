//! Fog and rain augmentation of clear-weather range images.
//!
//! Per return, the maximum sensing range under atmospheric extinction is
//! `d_max = -ln(n / (I + g)) / (2 beta)`. Returns beyond `d_max` are either
//! lost, replaced by a random scatter point with lognormal intensity, or
//! passed through; returns inside `d_max` keep their distance and get their
//! intensity attenuated by `exp(-beta d)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autolabel::WeatherClass;
use crate::error::{Error, Result};
use crate::image::{Label, LabelImage, RangeImage};
use crate::scalar::Real;

/// Lognormal distribution parameters in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LognormalParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lognormal sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeatherParams {
    /// Atmospheric extinction coefficient, 1/m.
    pub beta: f64,
    /// Per-point scatter probability p.
    pub scatter_rate: f64,
    /// Detectable noise floor n, normalized intensity.
    pub noise_floor: f64,
    /// Adaptive laser gain g, normalized intensity.
    pub laser_gain: f64,
    /// Meteorological contrast threshold C_T.
    pub contrast_threshold: f64,
    /// Intensity distribution of scatter points.
    pub clutter_intensity: LognormalParams,
    pub weather_class: WeatherClass,
    pub seed: u64,
}

impl WeatherParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.scatter_rate) {
            return Err(Error::InvalidParameter("scatter_rate must be in [0,1]".into()));
        }
        if self.noise_floor <= 0.0 {
            return Err(Error::InvalidParameter("noise_floor must be positive".into()));
        }
        if self.laser_gain < 0.0 {
            return Err(Error::InvalidParameter("laser_gain must be >= 0".into()));
        }
        if !(0.0 < self.contrast_threshold && self.contrast_threshold < 1.0) {
            return Err(Error::InvalidParameter(
                "contrast_threshold must be in (0,1)".into(),
            ));
        }
        self.clutter_intensity.validate()
    }

    /// Rain defaults: beta 0.01, p 7.5%.
    pub fn rain(seed: u64) -> Self {
        Self {
            beta: 0.01,
            scatter_rate: 0.075,
            noise_floor: 0.05,
            laser_gain: 0.45,
            contrast_threshold: 0.05,
            clutter_intensity: LognormalParams { mu: -1.5, sigma: 0.4 },
            weather_class: WeatherClass::Rain,
            seed,
        }
    }

    /// Chamber-derived rain scatter rates for 15/33/55 mm/h.
    pub fn rain_preset(rate_mm_h: u32, seed: u64) -> Option<Self> {
        let p = match rate_mm_h {
            15 => 0.1061,
            33 => 0.0073,
            55 => 0.0470,
            _ => return None,
        };
        Some(Self {
            scatter_rate: p,
            ..Self::rain(seed)
        })
    }

    /// Fog for a given meteorological visibility in meters. Beta comes from
    /// the visibility relation; the scatter rate from a small built-in
    /// visibility table (override the field for custom rates).
    pub fn fog_from_visibility(visibility_m: f64, seed: u64) -> Result<Self> {
        let contrast_threshold = 0.05;
        let beta = beta_from_visibility(visibility_m, contrast_threshold)?;
        Ok(Self {
            beta,
            scatter_rate: fog_scatter_rate(visibility_m),
            noise_floor: 0.05,
            laser_gain: 0.45,
            contrast_threshold,
            clutter_intensity: LognormalParams { mu: -3.0, sigma: 0.5 },
            weather_class: WeatherClass::Fog,
            seed,
        })
    }

    /// Resolve a preset name: `rain`, `rain15`, `rain33`, `rain55` or
    /// `fog:V=<meters>`.
    pub fn from_preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "rain" => Ok(Self::rain(seed)),
            "rain15" => Ok(Self::rain_preset(15, seed).unwrap()),
            "rain33" => Ok(Self::rain_preset(33, seed).unwrap()),
            "rain55" => Ok(Self::rain_preset(55, seed).unwrap()),
            other => {
                if let Some(v) = other.strip_prefix("fog:V=") {
                    let v: f64 = v.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad fog visibility in preset {other:?}"))
                    })?;
                    Self::fog_from_visibility(v, seed)
                } else {
                    Err(Error::InvalidParameter(format!("unknown preset {other:?}")))
                }
            }
        }
    }
}

/// Fog scatter rate vs meteorological visibility, linear interpolation over
/// a table fit on synthetic chamber statistics. Denser fog scatters more.
fn fog_scatter_rate(visibility_m: f64) -> f64 {
    const TABLE: &[(f64, f64)] = &[
        (10.0, 0.35),
        (20.0, 0.25),
        (30.0, 0.18),
        (50.0, 0.10),
        (100.0, 0.05),
        (300.0, 0.02),
        (1000.0, 0.008),
        (3000.0, 0.003),
    ];
    if visibility_m <= TABLE[0].0 {
        return TABLE[0].1;
    }
    for w in TABLE.windows(2) {
        let ((v0, p0), (v1, p1)) = (w[0], w[1]);
        if visibility_m <= v1 {
            let t = (visibility_m - v0) / (v1 - v0);
            return p0 + t * (p1 - p0);
        }
    }
    TABLE[TABLE.len() - 1].1
}

/// Runway visual range: `V = -ln(C_T) / beta`.
pub fn visibility_beta(beta: f64, contrast_threshold: f64) -> Result<f64> {
    if beta <= 0.0 || !(0.0 < contrast_threshold && contrast_threshold < 1.0) {
        return Err(Error::InvalidParameter(
            "visibility needs beta > 0 and C_T in (0,1)".into(),
        ));
    }
    Ok(-contrast_threshold.ln() / beta)
}

/// Inverse of [`visibility_beta`]: `beta = -ln(C_T) / V`.
pub fn beta_from_visibility(visibility_m: f64, contrast_threshold: f64) -> Result<f64> {
    if visibility_m <= 0.0 || !(0.0 < contrast_threshold && contrast_threshold < 1.0) {
        return Err(Error::InvalidParameter(
            "beta needs visibility > 0 and C_T in (0,1)".into(),
        ));
    }
    Ok(-contrast_threshold.ln() / visibility_m)
}

/// Per-point maximum sensing range `d_max = -ln(n/(I+g)) / (2 beta)`,
/// clamped at 0 when the received intensity cannot clear the noise floor.
pub fn max_sensing_range(intensity: f64, params: &WeatherParams) -> f64 {
    let received = intensity + params.laser_gain;
    if received <= params.noise_floor {
        return 0.0;
    }
    -(params.noise_floor / received).ln() / (2.0 * params.beta)
}

/// Bookkeeping for one augmentation pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AugmentStats {
    /// Returns beyond their d_max (candidates for loss or scatter).
    pub eligible: usize,
    pub lost: usize,
    pub scattered: usize,
    /// Scatter intensities clamped into [0,1]; a high ratio flags an
    /// ill-fitted lognormal.
    pub intensity_clamped: usize,
}

pub fn augment_rain<T: Real>(
    image: &RangeImage<T>,
    params: &WeatherParams,
) -> Result<(RangeImage<T>, LabelImage, AugmentStats)> {
    if params.weather_class != WeatherClass::Rain {
        return Err(Error::InvalidParameter(
            "augment_rain requires weather_class = rain".into(),
        ));
    }
    augment_weather(image, params)
}

pub fn augment_fog<T: Real>(
    image: &RangeImage<T>,
    params: &WeatherParams,
) -> Result<(RangeImage<T>, LabelImage, AugmentStats)> {
    if params.weather_class != WeatherClass::Fog {
        return Err(Error::InvalidParameter(
            "augment_fog requires weather_class = fog".into(),
        ));
    }
    augment_weather(image, params)
}

/// Shared rain/fog skeleton. Deterministic for fixed (image, params, seed):
/// every pixel draws from its own counter-seeded stream, so results do not
/// depend on traversal or parallelization order.
pub fn augment_weather<T: Real>(
    image: &RangeImage<T>,
    params: &WeatherParams,
) -> Result<(RangeImage<T>, LabelImage, AugmentStats)> {
    params.validate()?;
    let mut out = image.clone();
    let mut labels = LabelImage::filled(image.rows, image.cols, Label::NoReturn);
    let mut stats = AugmentStats::default();
    let clutter_label = params.weather_class.label();
    let LognormalParams { mu, sigma } = params.clutter_intensity;

    for idx in 0..image.rows * image.cols {
        let d = image.distance[idx].to_f64_lossy();
        if d <= 0.0 {
            continue;
        }
        let intensity = image.intensity[idx].to_f64_lossy();
        let d_max = max_sensing_range(intensity, params);
        if d_max < d {
            stats.eligible += 1;
            let mut rng = pixel_rng(params.seed, idx as u64);
            let p_lost = 1.0 - (-params.beta * d_max).exp();
            if rng.gen::<f64>() < p_lost {
                // point is lost
                out.distance[idx] = T::zero();
                out.intensity[idx] = T::zero();
                stats.lost += 1;
            } else if rng.gen::<f64>() < params.scatter_rate {
                // random scatter point in (0, d_max]
                let u: f64 = rng.gen();
                let z: f64 = StandardNormal.sample(&mut rng);
                let scatter_d = (1.0 - u) * d_max;
                let raw = (mu + sigma * z).exp();
                let clamped = raw.clamp(0.0, 1.0);
                if clamped != raw {
                    stats.intensity_clamped += 1;
                }
                out.distance[idx] = T::from_f64(scatter_d);
                out.intensity[idx] = T::from_f64(clamped);
                labels.labels[idx] = clutter_label;
                stats.scattered += 1;
                continue;
            } else {
                // pass: point survives unchanged
            }
            if out.distance[idx] > T::zero() {
                labels.labels[idx] = Label::Valid;
            }
        } else {
            // attenuate intensity, keep distance
            let factor = (-params.beta * d).exp();
            out.intensity[idx] = out.intensity[idx] * T::from_f64(factor);
            labels.labels[idx] = Label::Valid;
        }
    }
    Ok((out, labels, stats))
}

/// Lognormal fit in log space: mean of the log samples and their
/// Bessel-corrected standard deviation.
pub fn fit_clutter_intensity(samples: &[f64]) -> Result<LognormalParams> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput(
            "lognormal fit needs at least two samples".into(),
        ));
    }
    let mut logs = Vec::with_capacity(samples.len());
    for s in samples {
        if *s <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lognormal fit needs strictly positive samples, got {s}"
            )));
        }
        logs.push(s.ln());
    }
    let mu = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate lognormal fit: all samples equal (sigma = 0)".into(),
        ));
    }
    Ok(LognormalParams { mu, sigma })
}

fn pixel_rng(seed: u64, pixel: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(pixel)))
}

/// Stateless 64-bit mixer used to derive independent RNG streams.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
