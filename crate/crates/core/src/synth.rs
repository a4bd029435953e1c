//! Procedural static scenes raycast with the sensor model. Stands in for
//! a climate chamber: reference frames are clear-weather recordings of a
//! fixed scene, augmented frames carry exact labels by construction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::{augment_weather, WeatherParams};
use crate::codec;
use crate::error::{Error, Result};
use crate::image::{Label, LabelImage, RangeImage};
use crate::project::{crop_fov, crop_labels};
use crate::scalar::Real;
use crate::sensor::SensorModel;
use crate::Frame;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        reflectance: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        reflectance: f64,
    },
    /// Vertical cylinder (pedestrian-sized props).
    Cylinder {
        center: [f64; 3],
        radius: f64,
        half_height: f64,
        reflectance: f64,
    },
}

impl Primitive {
    fn reflectance(&self) -> f64 {
        match self {
            Primitive::Box { reflectance, .. }
            | Primitive::Sphere { reflectance, .. }
            | Primitive::Cylinder { reflectance, .. } => *reflectance,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Box { half_extents, .. } => half_extents.iter().all(|h| *h > 0.0),
            Primitive::Sphere { radius, .. } => *radius > 0.0,
            Primitive::Cylinder { radius, half_height, .. } => *radius > 0.0 && *half_height > 0.0,
        };
        let r = self.reflectance();
        if !ok {
            return Err(Error::InvalidParameter("degenerate primitive (zero extent)".into()));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("reflectance {r} outside [0,1]")));
        }
        Ok(())
    }

    /// Nearest intersection parameter t > 0 along `origin + t * dir`.
    fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        match self {
            Primitive::Box { center, half_extents, .. } => {
                // slab test
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                for axis in 0..3 {
                    let lo = center[axis] - half_extents[axis];
                    let hi = center[axis] + half_extents[axis];
                    if dir[axis].abs() < 1e-12 {
                        if origin[axis] < lo || origin[axis] > hi {
                            return None;
                        }
                    } else {
                        let t0 = (lo - origin[axis]) / dir[axis];
                        let t1 = (hi - origin[axis]) / dir[axis];
                        t_near = t_near.max(t0.min(t1));
                        t_far = t_far.min(t0.max(t1));
                    }
                }
                if t_near > t_far || t_far < 0.0 {
                    None
                } else if t_near > 0.0 {
                    Some(t_near)
                } else {
                    None // origin inside the box
                }
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = [origin[0] - center[0], origin[1] - center[1], origin[2] - center[2]];
                let b = oc[0] * dir[0] + oc[1] * dir[1] + oc[2] * dir[2];
                let c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                (t > 0.0).then_some(t)
            }
            Primitive::Cylinder { center, radius, half_height, .. } => {
                let mut best: Option<f64> = None;
                // lateral surface
                let ox = origin[0] - center[0];
                let oy = origin[1] - center[1];
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                if a > 1e-12 {
                    let b = ox * dir[0] + oy * dir[1];
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let t = (-b - disc.sqrt()) / a;
                        if t > 0.0 {
                            let z = origin[2] + t * dir[2];
                            if (z - center[2]).abs() <= *half_height {
                                best = Some(t);
                            }
                        }
                    }
                }
                // caps
                for cap in [center[2] - half_height, center[2] + half_height] {
                    if dir[2].abs() > 1e-12 {
                        let t = (cap - origin[2]) / dir[2];
                        if t > 0.0 {
                            let x = origin[0] + t * dir[0] - center[0];
                            let y = origin[1] + t * dir[1] - center[1];
                            if x * x + y * y <= radius * radius
                                && best.map_or(true, |b| t < b)
                            {
                                best = Some(t);
                            }
                        }
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    /// z of an infinite ground plane, if any.
    pub ground_height: Option<f64>,
    pub ground_reflectance: f64,
    pub primitives: Vec<Primitive>,
    /// Sensor z above the world origin.
    pub sensor_height: f64,
    /// Gaussian range noise, meters.
    pub range_noise_sigma: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.range_noise_sigma < 0.0 {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ground_reflectance) {
            return Err(Error::InvalidParameter("ground reflectance outside [0,1]".into()));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        Ok(())
    }

    /// Four static road-scene analogues: parked cars (boxes), pedestrian
    /// props (cylinders), lost cargo (sphere) on a ground plane.
    pub fn builtin_set() -> Vec<SceneSpec> {
        let car = |x: f64, y: f64| Primitive::Box {
            center: [x, y, 0.75],
            half_extents: [2.2, 0.9, 0.75],
            reflectance: 0.6,
        };
        let pedestrian = |x: f64, y: f64| Primitive::Cylinder {
            center: [x, y, 0.9],
            radius: 0.3,
            half_height: 0.9,
            reflectance: 0.45,
        };
        let wall = |x: f64| Primitive::Box {
            center: [x, 0.0, 2.0],
            half_extents: [0.3, 30.0, 2.0],
            reflectance: 0.3,
        };
        // faint wide backdrop beyond the rain-model sensing limit (~140 m
        // for these intensities) so rain augmentation has a sizable set of
        // points to act on; scatter drawn from it lands in the otherwise
        // empty mid-range, as in enclosed-hall recordings
        let backdrop = |x: f64| Primitive::Box {
            center: [x, 0.0, 29.0],
            half_extents: [0.5, 400.0, 31.0],
            reflectance: 0.25,
        };
        let mk = |name: &str, primitives: Vec<Primitive>| SceneSpec {
            name: name.into(),
            ground_height: Some(0.0),
            ground_reflectance: 0.2,
            primitives,
            sensor_height: 1.8,
            range_noise_sigma: 0.02,
        };
        vec![
            mk(
                "crossing",
                vec![
                    car(12.0, -3.0),
                    pedestrian(8.0, 1.5),
                    pedestrian(10.0, -1.0),
                    wall(35.0),
                    backdrop(150.0),
                ],
            ),
            mk(
                "parked_row",
                vec![
                    car(9.0, 3.0),
                    car(14.0, 3.2),
                    car(19.0, 2.8),
                    pedestrian(11.0, -2.0),
                    wall(40.0),
                    backdrop(155.0),
                ],
            ),
            mk(
                "lost_cargo",
                vec![
                    Primitive::Sphere {
                        center: [15.0, 0.5, 0.4],
                        radius: 0.4,
                        reflectance: 0.1,
                    },
                    car(25.0, -2.5),
                    wall(45.0),
                    backdrop(160.0),
                ],
            ),
            mk(
                "guardrail",
                vec![
                    Primitive::Box {
                        center: [18.0, -5.0, 0.5],
                        half_extents: [15.0, 0.2, 0.5],
                        reflectance: 0.7,
                    },
                    pedestrian(13.0, 2.0),
                    car(22.0, 1.0),
                    wall(50.0),
                    backdrop(165.0),
                ],
            ),
        ]
    }
}

/// Raycast one clear-weather frame. Deterministic for a fixed seed; noise
/// is drawn per ray from a counter-seeded stream.
pub fn raycast_scene<T: Real>(
    scene: &SceneSpec,
    sensor: &SensorModel,
    seed: u64,
) -> Result<RangeImage<T>> {
    scene.validate()?;
    sensor.validate()?;
    let origin = [0.0, 0.0, scene.sensor_height];
    let mut image = RangeImage::empty(sensor.rings, sensor.cols);
    for ring in 0..sensor.rings {
        let elev = sensor.vertical_angles[ring].to_radians();
        for col in 0..sensor.cols {
            let az = sensor.col_azimuth_deg(col).to_radians();
            let dir = [elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()];
            let mut hit: Option<(f64, f64)> = None; // (t, reflectance)
            for p in &scene.primitives {
                if let Some(t) = p.intersect(origin, dir) {
                    if hit.map_or(true, |(bt, _)| t < bt) {
                        hit = Some((t, p.reflectance()));
                    }
                }
            }
            if let Some(h) = scene.ground_height {
                if dir[2] < -1e-12 {
                    let t = (h - origin[2]) / dir[2];
                    if t > 0.0 && hit.map_or(true, |(bt, _)| t < bt) {
                        hit = Some((t, scene.ground_reflectance));
                    }
                }
            }
            if let Some((t, reflectance)) = hit {
                if t <= sensor.max_range {
                    let idx = ring * sensor.cols + col;
                    let mut d = t;
                    if scene.range_noise_sigma > 0.0 {
                        let mut rng = ray_rng(seed, idx as u64);
                        let z: f64 = StandardNormal.sample(&mut rng);
                        d = (t + scene.range_noise_sigma * z).max(1e-3);
                    }
                    let intensity = (reflectance / (1.0 + d / 100.0)).clamp(0.0, 1.0);
                    image.distance[idx] = T::from_f64(d);
                    image.intensity[idx] = T::from_f64(intensity);
                }
            }
        }
    }
    Ok(image)
}

fn ray_rng(seed: u64, ray: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(ray)))
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scenes: Vec<SceneSpec>,
    /// Weather preset names resolvable by [`WeatherParams::from_preset`];
    /// empty = reference frames only.
    pub weather_presets: Vec<String>,
    /// Augmented frames per (scene, preset).
    pub frames_per_setting: usize,
    /// Clear frames per scene for autolabel references.
    pub reference_frames: usize,
    /// Split fractions for train/val/test. Frames are assigned per
    /// (scene, weather setting): every setting contributes frames to
    /// every nonzero split, so train and test cover the same scenes with
    /// different noise realizations.
    pub split_fractions: [f64; 3],
    /// Optional (start_col, width) crop applied to every written frame.
    pub crop: Option<(usize, usize)>,
}

impl DatasetSpec {
    pub fn desk_default() -> Self {
        Self {
            scenes: SceneSpec::builtin_set(),
            weather_presets: vec!["rain".into(), "fog:V=30".into(), "fog:V=60".into()],
            frames_per_setting: 10,
            reference_frames: 10,
            split_fractions: [0.60, 0.15, 0.25],
            crop: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub scene: String,
    pub preset: Option<String>,
    pub path: String,
    pub has_labels: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    /// split -> augmented labeled frames
    pub frames: BTreeMap<String, Vec<FrameEntry>>,
    /// scene name -> clear reference frame paths
    pub references: BTreeMap<String, Vec<String>>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// How many of `n` frames in one (scene, setting) block go to each split.
/// Rounding is repaired so all `n` frames are assigned and, when `n`
/// allows, every split with a nonzero fraction gets at least one frame.
fn split_counts(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let total: f64 = fractions.iter().sum();
    if total <= 0.0 || fractions.iter().any(|f| *f < 0.0) {
        return Err(Error::InvalidParameter("bad split fractions".into()));
    }
    let mut counts = [0usize; 3];
    for (i, f) in fractions.iter().enumerate() {
        counts[i] = ((f / total) * n as f64).round() as usize;
    }
    while counts.iter().sum::<usize>() > n {
        let i = (0..3).max_by_key(|i| counts[*i]).unwrap();
        counts[i] -= 1;
    }
    while counts.iter().sum::<usize>() < n {
        let i = (0..3).min_by_key(|i| counts[*i]).unwrap();
        counts[i] += 1;
    }
    let nonzero = fractions.iter().filter(|f| **f > 0.0).count();
    if n >= nonzero {
        for i in 0..3 {
            if fractions[i] > 0.0 && counts[i] == 0 {
                let j = (0..3).max_by_key(|j| counts[*j]).unwrap();
                counts[j] -= 1;
                counts[i] += 1;
            }
        }
    }
    Ok(counts)
}

/// Split of the `frame_idx`-th frame in a block whose per-split counts
/// are `counts`: the first `counts[0]` frames train, then val, then test.
fn split_for_frame(frame_idx: usize, counts: [usize; 3]) -> Split {
    if frame_idx < counts[0] {
        Split::Train
    } else if frame_idx < counts[0] + counts[1] {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generate a labeled dataset on disk: reference frames per scene, and
/// augmented frames whose labels are exact by construction (they record
/// the augmentation branch taken). Fully deterministic from (spec, seed).
pub fn generate_dataset(
    spec: &DatasetSpec,
    sensor: &SensorModel,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let mut unique = std::collections::HashSet::new();
    for scene in &spec.scenes {
        if !unique.insert(scene.name.clone()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate scene name {:?}",
                scene.name
            )));
        }
    }
    let weather_counts = split_counts(spec.frames_per_setting, spec.split_fractions)?;
    let clear_counts = split_counts(spec.reference_frames, spec.split_fractions)?;
    fs::create_dir_all(out_dir.join("ref"))?;
    for split in ["train", "val", "test"] {
        fs::create_dir_all(out_dir.join(split))?;
    }

    let mut manifest = DatasetManifest {
        seed,
        frames: BTreeMap::new(),
        references: BTreeMap::new(),
    };
    for split in ["train", "val", "test"] {
        manifest.frames.insert(split.into(), Vec::new());
    }

    let finish = |image: &Frame, labels: Option<&LabelImage>| -> Result<(Frame, Option<LabelImage>)> {
        match spec.crop {
            Some((start, width)) => {
                let cropped = crop_fov(image, start, width)?;
                let cropped_labels = labels.map(|l| crop_labels(l, start, width)).transpose()?;
                Ok((cropped, cropped_labels))
            }
            None => Ok((image.clone(), labels.cloned())),
        }
    };

    for (scene_idx, scene) in spec.scenes.iter().enumerate() {
        // clear reference frames
        let mut ref_paths = Vec::new();
        for frame_idx in 0..spec.reference_frames {
            let frame_seed = mix(seed ^ mix((scene_idx as u64) << 32 | frame_idx as u64));
            let mut image: Frame = raycast_scene(scene, sensor, frame_seed)?;
            image.frame_id = format!("{}_ref_{frame_idx:03}", scene.name);
            image.timestamp = frame_idx as f64 * 0.1;
            let (image, _) = finish(&image, None)?;
            let rel = format!("ref/{}.lri", image.frame_id);
            codec::write_frame(&out_dir.join(&rel), &image, None)?;
            ref_paths.push(rel);
        }
        manifest.references.insert(scene.name.clone(), ref_paths);

        // augmented weather frames with construction labels
        for (preset_idx, preset) in spec.weather_presets.iter().enumerate() {
            for frame_idx in 0..spec.frames_per_setting {
                let tag = (scene_idx as u64) << 40 | (preset_idx as u64) << 20 | frame_idx as u64;
                let frame_seed = mix(seed ^ mix(tag | 1 << 60));
                let mut image: Frame = raycast_scene(scene, sensor, frame_seed)?;
                image.frame_id = format!(
                    "{}__{}__{frame_idx:03}",
                    scene.name,
                    preset.replace([':', '='], "_")
                );
                image.timestamp = frame_idx as f64 * 0.1;
                let params = WeatherParams::from_preset(preset, mix(seed ^ mix(tag | 1 << 61)))?;
                let (augmented, labels, _) = augment_weather(&image, &params)?;
                let (augmented, labels) = finish(&augmented, Some(&labels))?;
                let split = split_for_frame(frame_idx, weather_counts);
                let rel = format!("{}/{}.lri", split.dir_name(), augmented.frame_id);
                codec::write_frame(&out_dir.join(&rel), &augmented, labels.as_ref())?;
                manifest
                    .frames
                    .get_mut(split.dir_name())
                    .unwrap()
                    .push(FrameEntry {
                        scene: scene.name.clone(),
                        preset: Some(preset.clone()),
                        path: rel,
                        has_labels: true,
                    });
            }
        }
        // with no presets the dataset is reference-only; still expose the
        // clear frames as all-valid samples in the split
        if spec.weather_presets.is_empty() {
            for (frame_idx, rel) in manifest.references[&scene.name].clone().iter().enumerate() {
                let (image, _) = codec::read_frame(&out_dir.join(rel))?;
                let labels = LabelImage {
                    rows: image.rows,
                    cols: image.cols,
                    labels: image
                        .distance
                        .iter()
                        .map(|d| if *d > 0.0 { Label::Valid } else { Label::NoReturn })
                        .collect(),
                };
                let split = split_for_frame(frame_idx, clear_counts);
                let rel = format!("{}/{}_clear_{frame_idx:03}.lri", split.dir_name(), scene.name);
                codec::write_frame(&out_dir.join(&rel), &image, Some(&labels))?;
                manifest
                    .frames
                    .get_mut(split.dir_name())
                    .unwrap()
                    .push(FrameEntry {
                        scene: scene.name.clone(),
                        preset: None,
                        path: rel,
                        has_labels: true,
                    });
            }
        }
    }
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor() -> SensorModel {
        SensorModel::default()
    }

    #[test]
    fn ground_plane_hits_lower_rings_only() {
        let scene = SceneSpec {
            name: "ground".into(),
            ground_height: Some(0.0),
            ground_reflectance: 0.3,
            primitives: vec![],
            sensor_height: 1.8,
            range_noise_sigma: 0.0,
        };
        let img: RangeImage<f64> = raycast_scene(&scene, &sensor(), 0).unwrap();
        // downward rings return ground, horizontal and upward rings miss
        for ring in 0..32 {
            let has = img.distance_at(ring, 0) > 0.0;
            let downward = sensor().vertical_angles[ring] < 0.0;
            // very shallow rays exceed max_range
            let expected = downward
                && 1.8 / (-sensor().vertical_angles[ring].to_radians()).sin() <= 200.0;
            assert_eq!(has, expected, "ring {ring}");
        }
    }

    #[test]
    fn box_dead_ahead_reports_exact_distance() {
        let scene = SceneSpec {
            name: "box".into(),
            ground_height: None,
            ground_reflectance: 0.0,
            primitives: vec![Primitive::Box {
                center: [10.5, 0.0, 1.8],
                half_extents: [0.5, 5.0, 5.0],
                reflectance: 0.5,
            }],
            sensor_height: 1.8,
            range_noise_sigma: 0.0,
        };
        let s = sensor();
        let img: RangeImage<f64> = raycast_scene(&scene, &s, 0).unwrap();
        // horizontal ring straight at the box face x = 10
        let ring = s
            .vertical_angles
            .iter()
            .position(|a| a.abs() < 0.7)
            .unwrap();
        let elev = s.vertical_angles[ring].to_radians();
        let az = s.col_azimuth_deg(0).to_radians();
        let expected = 10.0 / (elev.cos() * az.cos());
        let got = img.distance_at(ring, 0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn raycast_determinism_and_noise() {
        let scene = &SceneSpec::builtin_set()[0];
        let s = sensor();
        let a: RangeImage<f64> = raycast_scene(scene, &s, 5).unwrap();
        let b: RangeImage<f64> = raycast_scene(scene, &s, 5).unwrap();
        assert_eq!(a, b);
        let c: RangeImage<f64> = raycast_scene(scene, &s, 6).unwrap();
        assert_ne!(a.distance, c.distance);
        // same hit pattern, distances differ by O(sigma)
        let mut max_delta = 0.0f64;
        for i in 0..a.distance.len() {
            assert_eq!(a.distance[i] > 0.0, c.distance[i] > 0.0);
            if a.distance[i] > 0.0 {
                max_delta = max_delta.max((a.distance[i] - c.distance[i]).abs());
            }
        }
        assert!(max_delta > 0.0 && max_delta < 0.02 * 12.0, "{max_delta}");
    }

    #[test]
    fn degenerate_primitive_rejected() {
        let scene = SceneSpec {
            name: "bad".into(),
            ground_height: None,
            ground_reflectance: 0.0,
            primitives: vec![Primitive::Sphere {
                center: [5.0, 0.0, 1.0],
                radius: 0.0,
                reflectance: 0.5,
            }],
            sensor_height: 1.8,
            range_noise_sigma: 0.0,
        };
        assert!(raycast_scene::<f64>(&scene, &sensor(), 0).is_err());
    }

    #[test]
    fn split_counts_cover_every_frame() {
        let counts = split_counts(10, [0.6, 0.15, 0.25]).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert!(counts.iter().all(|c| *c >= 1), "{counts:?}");
        // zero-fraction splits stay empty, others are populated
        let counts = split_counts(3, [0.5, 0.0, 0.5]).unwrap();
        assert_eq!(counts[1], 0);
        assert!(counts[0] >= 1 && counts[2] >= 1);
        assert_eq!(counts.iter().sum::<usize>(), 3);
        // frames within a block are assigned in order: train, val, test
        let counts = split_counts(4, [0.5, 0.25, 0.25]).unwrap();
        assert_eq!(counts, [2, 1, 1]);
        assert_eq!(split_for_frame(0, counts), Split::Train);
        assert_eq!(split_for_frame(1, counts), Split::Train);
        assert_eq!(split_for_frame(2, counts), Split::Val);
        assert_eq!(split_for_frame(3, counts), Split::Test);
        assert!(split_counts(5, [0.0, 0.0, 0.0]).is_err());
        assert!(split_counts(5, [-0.1, 0.6, 0.5]).is_err());
    }

    #[test]
    fn every_setting_reaches_train_and_test() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            scenes: SceneSpec::builtin_set().into_iter().take(2).collect(),
            weather_presets: vec!["rain".into(), "fog:V=30".into()],
            frames_per_setting: 4,
            reference_frames: 1,
            split_fractions: [0.5, 0.25, 0.25],
            crop: Some((650, 64)),
        };
        let manifest =
            generate_dataset(&spec, &SensorModel::default(), 3, dir.path()).unwrap();
        for split in ["train", "val", "test"] {
            let entries = &manifest.frames[split];
            for scene in &spec.scenes {
                for preset in &spec.weather_presets {
                    let hits = entries
                        .iter()
                        .filter(|e| e.scene == scene.name && e.preset.as_deref() == Some(preset))
                        .count();
                    assert!(hits >= 1, "{split} missing {}/{preset}", scene.name);
                }
            }
        }
        // duplicate scene names are rejected
        let mut dup = spec.clone();
        dup.scenes.push(dup.scenes[0].clone());
        assert!(generate_dataset(&dup, &SensorModel::default(), 3, dir.path()).is_err());
    }

    #[test]
    fn reference_only_dataset_is_all_valid() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            scenes: SceneSpec::builtin_set().into_iter().take(3).collect(),
            weather_presets: vec![],
            frames_per_setting: 0,
            reference_frames: 2,
            split_fractions: [0.6, 0.15, 0.25],
            crop: Some((650, 100)),
        };
        let s = SensorModel::default();
        let manifest = generate_dataset(&spec, &s, 1, dir.path()).unwrap();
        let mut total = 0;
        for entries in manifest.frames.values() {
            for entry in entries {
                let (image, labels) = codec::read_frame(&dir.path().join(&entry.path)).unwrap();
                let labels = labels.unwrap();
                assert_eq!(labels.count(Label::Rain) + labels.count(Label::Fog), 0);
                assert_eq!(labels.count(Label::Valid), image.return_count());
                total += 1;
            }
        }
        assert_eq!(total, 3 * 2);
    }

    #[test]
    fn dataset_generation_deterministic() {
        let spec = DatasetSpec {
            scenes: SceneSpec::builtin_set().into_iter().take(3).collect(),
            weather_presets: vec!["rain".into()],
            frames_per_setting: 1,
            reference_frames: 1,
            split_fractions: [0.6, 0.15, 0.25],
            crop: Some((650, 64)),
        };
        let s = SensorModel::default();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_dataset(&spec, &s, 7, dir_a.path()).unwrap();
        generate_dataset(&spec, &s, 7, dir_b.path()).unwrap();
        for sub in ["train", "val", "test", "ref"] {
            let mut names: Vec<_> = fs::read_dir(dir_a.path().join(sub))
                .unwrap()
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            for name in names {
                let a = fs::read(dir_a.path().join(sub).join(&name)).unwrap();
                let b = fs::read(dir_b.path().join(sub).join(&name)).unwrap();
                assert_eq!(a, b, "{sub}/{name:?}");
            }
        }
    }
}
