//! Randomized property tests over the frame codec, projection, cropping,
//! evaluation and augmentation invariants.

use proptest::prelude::*;

use lidar_denoise::augment::{
    augment_weather, beta_from_visibility, max_sensing_range, visibility_beta, LognormalParams,
    WeatherParams,
};
use lidar_denoise::autolabel::WeatherClass;
use lidar_denoise::codec::{decode_frame, encode_frame};
use lidar_denoise::eval::{iou_scores, ConfusionMatrix};
use lidar_denoise::filters::grid::{brute_force_radius, VoxelGrid};
use lidar_denoise::project::{crop_fov, crop_labels, image_to_returns, project_scan};
use lidar_denoise::{Frame, Label, LabelImage, SensorModel};

/// Strategy for a small frame with optional labels. Distances of exactly 0
/// mark no-return pixels; labeled frames keep the label/pixel contract
/// (NoReturn exactly where distance is 0).
fn arb_frame(max_rows: usize, max_cols: usize) -> impl Strategy<Value = (Frame, LabelImage)> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(rows, cols)| {
        let n = rows * cols;
        (
            proptest::collection::vec(
                prop_oneof![
                    2 => (0.01f32..200.0).prop_map(Some),
                    1 => Just(None),
                ],
                n,
            ),
            proptest::collection::vec(0.0f32..=1.0, n),
            proptest::collection::vec(0u8..3, n),
            "[a-z0-9_]{0,12}",
            proptest::num::f64::NORMAL,
        )
            .prop_map(move |(dist, intens, labs, frame_id, timestamp)| {
                let mut img = Frame::empty(rows, cols);
                img.frame_id = frame_id;
                img.timestamp = timestamp;
                let mut labels = LabelImage::filled(rows, cols, Label::NoReturn);
                for i in 0..n {
                    if let Some(d) = dist[i] {
                        img.distance[i] = d;
                        img.intensity[i] = intens[i];
                        labels.labels[i] = match labs[i] {
                            0 => Label::Valid,
                            1 => Label::Rain,
                            _ => Label::Fog,
                        };
                    }
                }
                (img, labels)
            })
    })
}

fn rain_params(seed: u64) -> WeatherParams {
    WeatherParams {
        seed,
        ..WeatherParams::rain(seed)
    }
}

proptest! {
    /// Encoding then decoding a frame reproduces every byte of state:
    /// distances, intensities, labels, frame id and timestamp.
    #[test]
    fn codec_roundtrip((img, labels) in arb_frame(4, 24), with_labels in any::<bool>()) {
        let lab = with_labels.then_some(&labels);
        let bytes = encode_frame(&img, lab).unwrap();
        let (back, back_labels) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(back.rows, img.rows);
        prop_assert_eq!(back.cols, img.cols);
        prop_assert_eq!(
            back.distance.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            img.distance.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(
            back.intensity.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            img.intensity.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(&back.frame_id, &img.frame_id);
        prop_assert_eq!(back.timestamp.to_bits(), img.timestamp.to_bits());
        match lab {
            Some(l) => prop_assert_eq!(&back_labels.unwrap().labels, &l.labels),
            None => prop_assert!(back_labels.is_none()),
        }
    }

    /// A decoded frame re-encodes to the identical byte stream.
    #[test]
    fn codec_reencode_is_identical((img, labels) in arb_frame(4, 24)) {
        let bytes = encode_frame(&img, Some(&labels)).unwrap();
        let (back, back_labels) = decode_frame(&bytes).unwrap();
        let again = encode_frame(&back, back_labels.as_ref()).unwrap();
        prop_assert_eq!(again, bytes);
    }

    /// Converting an image to returns and re-projecting reproduces the image
    /// exactly: each pixel's return sits at its column-center azimuth, so no
    /// pixel moves or collides.
    #[test]
    fn reprojection_is_exact((img, _) in arb_frame(4, 24)) {
        let sensor = SensorModel::uniform(img.rows, img.cols, -25.0, 15.0, 250.0);
        let cloud = image_to_returns(&img, &sensor);
        prop_assert_eq!(cloud.len(), img.return_count());
        let back = project_scan(&cloud, &sensor).unwrap();
        prop_assert_eq!(back.distance, img.distance);
        prop_assert_eq!(back.intensity, img.intensity);
    }

    /// Projection keeps the nearest return per pixel regardless of the
    /// order in which the scan is traversed.
    #[test]
    fn projection_order_independent((img, _) in arb_frame(4, 24), seed in any::<u64>()) {
        let sensor = SensorModel::uniform(img.rows, img.cols, -25.0, 15.0, 250.0);
        let mut cloud = image_to_returns(&img, &sensor);
        // Deterministic shuffle driven by the seed.
        let n = cloud.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = lidar_denoise::augment::splitmix64(state);
            cloud.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let back = project_scan(&cloud, &sensor).unwrap();
        prop_assert_eq!(back.distance, img.distance);
    }

    /// Cropping the full width starting at column 0 is the identity, and a
    /// crop of a crop equals one crop with summed offsets (as long as the
    /// inner window does not wrap inside the outer one).
    #[test]
    fn crop_composition(
        (img, labels) in arb_frame(3, 24),
        s1 in 0usize..48,
        s2 in 0usize..24,
        w2 in 1usize..24,
    ) {
        let full = crop_fov(&img, 0, img.cols).unwrap();
        prop_assert_eq!(&full.distance, &img.distance);

        let w1 = img.cols;
        let (s2, w2) = (s2 % w1, w2.min(w1));
        prop_assume!(s2 + w2 <= w1);
        let once = crop_fov(&crop_fov(&img, s1, w1).unwrap(), s2, w2).unwrap();
        let direct = crop_fov(&img, s1 + s2, w2).unwrap();
        prop_assert_eq!(once.distance, direct.distance);
        prop_assert_eq!(once.intensity, direct.intensity);

        let lab_once = crop_labels(&crop_labels(&labels, s1 % w1, w1).unwrap(), s2, w2).unwrap();
        let lab_direct = crop_labels(&labels, (s1 % w1) + s2, w2).unwrap();
        prop_assert_eq!(lab_once.labels, lab_direct.labels);
    }

    /// The confusion matrix is a pure pixel-pair count: splitting a frame
    /// into two column halves and merging their matrices gives the same
    /// counts as scoring the whole frame.
    #[test]
    fn confusion_is_additive((_, gt) in arb_frame(4, 24), (_, pred_src) in arb_frame(4, 24)) {
        // Re-shape the second label image onto the first frame's grid.
        let mut pred = LabelImage::filled(gt.rows, gt.cols, Label::NoReturn);
        for i in 0..gt.labels.len() {
            pred.labels[i] = pred_src.labels[i % pred_src.labels.len()];
        }

        let mut whole = ConfusionMatrix::default();
        whole.update(&pred, &gt).unwrap();

        let w = gt.cols;
        prop_assume!(w >= 2);
        let split = w / 2;
        let mut parts = ConfusionMatrix::default();
        let mut left = ConfusionMatrix::default();
        left.update(&crop_labels(&pred, 0, split).unwrap(), &crop_labels(&gt, 0, split).unwrap())
            .unwrap();
        let mut right = ConfusionMatrix::default();
        right
            .update(
                &crop_labels(&pred, split, w - split).unwrap(),
                &crop_labels(&gt, split, w - split).unwrap(),
            )
            .unwrap();
        parts.merge(&left);
        parts.merge(&right);
        prop_assert_eq!(parts.counts, whole.counts);
    }

    /// Every defined per-class IoU lies in [0,1]; a prediction identical to
    /// the ground truth scores 1.0 on every class that occurs.
    #[test]
    fn iou_bounds_and_perfect_score((_, gt) in arb_frame(4, 24)) {
        let mut conf = ConfusionMatrix::default();
        conf.update(&gt, &gt).unwrap();
        if let Ok(report) = iou_scores(&conf) {
            for iou in report.per_class.into_iter().flatten() {
                prop_assert!((iou - 1.0).abs() < 1e-12);
            }
            prop_assert!((report.mean - 1.0).abs() < 1e-12);
        }

        let (_, other) = (Frame::empty(gt.rows, gt.cols), {
            let mut o = gt.clone();
            o.labels.reverse();
            o
        });
        let mut conf = ConfusionMatrix::default();
        conf.update(&other, &gt).unwrap();
        if let Ok(report) = iou_scores(&conf) {
            for iou in report.per_class.into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&iou));
            }
            prop_assert!((0.0..=1.0).contains(&report.mean));
        }
    }

    /// Augmentation accounting: labels partition the frame, the no-return
    /// delta equals the lost count, scatter points stay within (0, d_max],
    /// and the attenuation branch never raises intensity or moves distance.
    #[test]
    fn augmentation_accounting(
        (img, _) in arb_frame(4, 32),
        seed in any::<u64>(),
        beta in 1e-4f64..0.2,
        p in 0.0f64..1.0,
    ) {
        let params = WeatherParams {
            beta,
            scatter_rate: p,
            ..rain_params(seed)
        };
        let (out, labels, stats) = augment_weather(&img, &params).unwrap();

        let valid = labels.count(Label::Valid);
        let clutter = labels.count(Label::Rain);
        let no_ret = labels.count(Label::NoReturn);
        prop_assert_eq!(labels.count(Label::Fog), 0);
        prop_assert_eq!(valid + clutter + no_ret, img.rows * img.cols);

        let lost = (img.rows * img.cols - out.return_count())
            - (img.rows * img.cols - img.return_count());
        prop_assert_eq!(lost, stats.lost);
        prop_assert_eq!(clutter, stats.scattered);

        for i in 0..img.distance.len() {
            let d_in = img.distance[i] as f64;
            let d_out = out.distance[i] as f64;
            match labels.labels[i] {
                Label::NoReturn => prop_assert_eq!(d_out, 0.0),
                Label::Valid => {
                    // Either attenuated in place or passed through untouched.
                    prop_assert_eq!(d_out, d_in);
                    prop_assert!(out.intensity[i] <= img.intensity[i]);
                }
                _ => {
                    let d_max = max_sensing_range(img.intensity[i] as f64, &params);
                    prop_assert!(d_out > 0.0 && d_out <= d_max);
                    prop_assert!((0.0..=1.0).contains(&(out.intensity[i] as f64)));
                }
            }
        }
    }

    /// Identical (image, params, seed) produce bit-identical output.
    #[test]
    fn augmentation_deterministic((img, _) in arb_frame(4, 24), seed in any::<u64>()) {
        let params = rain_params(seed);
        let (a, la, _) = augment_weather(&img, &params).unwrap();
        let (b, lb, _) = augment_weather(&img, &params).unwrap();
        prop_assert_eq!(
            a.distance.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            b.distance.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(
            a.intensity.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            b.intensity.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(la.labels, lb.labels);
    }

    /// The visibility mapping and its inverse compose to the identity.
    #[test]
    fn visibility_roundtrip(beta in 1e-5f64..1.0, ct in 0.01f64..0.5) {
        let v = visibility_beta(beta, ct).unwrap();
        let back = beta_from_visibility(v, ct).unwrap();
        prop_assert!((back - beta).abs() <= 1e-12 * beta.max(1.0));
    }

    /// Grid-accelerated radius queries return exactly the brute-force
    /// neighbor sets, for arbitrary points, cell sizes and radii.
    #[test]
    fn grid_matches_brute_force(
        pts in proptest::collection::vec(
            (-20.0f64..20.0, -20.0f64..20.0, -5.0f64..5.0),
            1..120,
        ),
        cell in 0.1f64..5.0,
        radius in 0.01f64..6.0,
        center in (-22.0f64..22.0, -22.0f64..22.0, -6.0f64..6.0),
    ) {
        let points: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
        let grid = VoxelGrid::build(points.clone(), cell);
        let mut fast = grid.query_radius(&[center.0, center.1, center.2], radius);
        let mut slow = brute_force_radius(&points, &[center.0, center.1, center.2], radius);
        fast.sort_unstable();
        slow.sort_unstable();
        prop_assert_eq!(fast, slow);
    }

    /// Label codes roundtrip through their byte encoding; unknown codes are
    /// rejected.
    #[test]
    fn label_code_roundtrip(code in any::<u8>()) {
        match Label::from_code(code) {
            Some(label) => prop_assert_eq!(label.to_code(), code),
            None => prop_assert!(![0, 1, 2, 255].contains(&code)),
        }
    }
}

#[test]
fn lognormal_params_reject_bad_sigma() {
    assert!(LognormalParams { mu: 0.0, sigma: 0.0 }.validate().is_err());
    assert!(LognormalParams { mu: -1.5, sigma: 0.4 }.validate().is_ok());
}

#[test]
fn fog_class_uses_fog_labels() {
    let mut img = Frame::empty(2, 8);
    for i in 0..img.distance.len() {
        img.distance[i] = 150.0;
        img.intensity[i] = 0.2;
    }
    let params = WeatherParams {
        scatter_rate: 1.0,
        weather_class: WeatherClass::Fog,
        ..WeatherParams::fog_from_visibility(30.0, 9).unwrap()
    };
    let (_, labels, stats) = augment_weather(&img, &params).unwrap();
    assert_eq!(labels.count(Label::Rain), 0);
    assert_eq!(labels.count(Label::Fog), stats.scattered);
}
