//! Point-wise scoring: confusion matrices, per-class and mean IoU, and
//! weather-degradation reporting from clutter ratios.

use serde::{Deserialize, Serialize};

use crate::autolabel::WeatherClass;
use crate::error::{Error, Result};
use crate::filters::OutlierMask;
use crate::image::{Label, LabelImage};

pub const CLASS_NAMES: [&str; 3] = ["valid", "rain", "fog"];

/// 3x3 confusion counts, rows = ground truth, cols = prediction, classes
/// ordered valid/rain/fog. No-return pixels on either side are excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn update(&mut self, pred: &LabelImage, gt: &LabelImage) -> Result<()> {
        if pred.rows != gt.rows || pred.cols != gt.cols {
            return Err(Error::shape(
                format!("{}x{}", gt.rows, gt.cols),
                format!("{}x{}", pred.rows, pred.cols),
            ));
        }
        for (p, g) in pred.labels.iter().zip(&gt.labels) {
            if let (Some(pi), Some(gi)) = (p.class_index(), g.class_index()) {
                self.counts[gi][pi] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for g in 0..3 {
            for p in 0..3 {
                self.counts[g][p] += other.counts[g][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn tp_fp_fn(&self, class: usize) -> (u64, u64, u64) {
        let tp = self.counts[class][class];
        let fp: u64 = (0..3).filter(|g| *g != class).map(|g| self.counts[g][class]).sum();
        let fn_: u64 = (0..3).filter(|p| *p != class).map(|p| self.counts[class][p]).sum();
        (tp, fp, fn_)
    }
}

/// Per-class IoU. A class with zero support and zero predictions is
/// undefined and excluded from the mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IouReport {
    /// valid / rain / fog; `None` = undefined (no support, no predictions).
    pub per_class: [Option<f64>; 3],
    pub mean: f64,
}

pub fn iou_scores(conf: &ConfusionMatrix) -> Result<IouReport> {
    if conf.total() == 0 {
        return Err(Error::EmptyInput("empty confusion matrix".into()));
    }
    let mut per_class = [None; 3];
    let mut sum = 0.0;
    let mut defined = 0;
    for class in 0..3 {
        let (tp, fp, fn_) = conf.tp_fp_fn(class);
        let denom = tp + fp + fn_;
        if denom > 0 {
            let iou = tp as f64 / denom as f64;
            per_class[class] = Some(iou);
            sum += iou;
            defined += 1;
        }
    }
    Ok(IouReport {
        per_class,
        mean: sum / defined as f64,
    })
}

/// Score a binary filter mask against three-class ground truth. A binary
/// filter cannot tell rain from fog, so its clutter verdict is attributed
/// to each weather class in turn: the rain IoU scores clutter as rain, the
/// fog IoU scores clutter as fog; the valid IoU is identical either way.
pub fn score_clutter_mask(mask: &OutlierMask, gt: &LabelImage) -> Result<IouReport> {
    if mask.rows != gt.rows || mask.cols != gt.cols {
        return Err(Error::shape(
            format!("{}x{}", gt.rows, gt.cols),
            format!("{}x{}", mask.rows, mask.cols),
        ));
    }
    let as_rain = score_with_class(mask, gt, WeatherClass::Rain)?;
    let as_fog = score_with_class(mask, gt, WeatherClass::Fog)?;
    let per_class = [as_rain.per_class[0], as_rain.per_class[1], as_fog.per_class[2]];
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::EmptyInput("no scorable classes".into()));
    }
    Ok(IouReport {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

fn score_with_class(mask: &OutlierMask, gt: &LabelImage, class: WeatherClass) -> Result<IouReport> {
    let mut conf = ConfusionMatrix::default();
    // fold the ground truth's other weather class into the attributed one
    // so the comparison is effectively valid-vs-clutter
    let folded: Vec<Label> = gt
        .labels
        .iter()
        .map(|l| if l.is_clutter() { class.label() } else { *l })
        .collect();
    let folded = LabelImage {
        rows: gt.rows,
        cols: gt.cols,
        labels: folded,
    };
    conf.update(&mask.to_labels(class), &folded)?;
    iou_scores(&conf)
}

/// Sensor degradation estimate for one labeled frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationReport {
    /// (rain + fog) / (rain + fog + valid)
    pub clutter_ratio: f64,
    pub clutter_pixels: usize,
    pub valid_pixels: usize,
    /// Visibility in meters, inverted from a calibration curve if given.
    pub estimated_visibility: Option<f64>,
}

/// Clutter ratio of a labeled frame, optionally inverting a calibrated
/// monotone (visibility, clutter_ratio) curve from a synthetic sweep.
pub fn degradation_report(
    labels: &LabelImage,
    calibration: Option<&[(f64, f64)]>,
) -> Result<DegradationReport> {
    let clutter = labels.labels.iter().filter(|l| l.is_clutter()).count();
    let valid = labels.count(Label::Valid);
    if clutter + valid == 0 {
        return Err(Error::EmptyInput("frame has no labeled pixels".into()));
    }
    let ratio = clutter as f64 / (clutter + valid) as f64;
    Ok(DegradationReport {
        clutter_ratio: ratio,
        clutter_pixels: clutter,
        valid_pixels: valid,
        estimated_visibility: calibration.and_then(|curve| invert_calibration(curve, ratio)),
    })
}

/// Piecewise-linear inversion of a curve sorted by descending visibility
/// (i.e. ascending clutter ratio). Out-of-range ratios clamp to the ends.
fn invert_calibration(curve: &[(f64, f64)], ratio: f64) -> Option<f64> {
    if curve.is_empty() {
        return None;
    }
    if ratio <= curve[0].1 {
        return Some(curve[0].0);
    }
    for w in curve.windows(2) {
        let ((v0, r0), (v1, r1)) = (w[0], w[1]);
        if ratio <= r1 {
            if r1 == r0 {
                return Some(v1);
            }
            let t = (ratio - r0) / (r1 - r0);
            return Some(v0 + t * (v1 - v0));
        }
    }
    Some(curve[curve.len() - 1].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_of(seq: &[Label]) -> LabelImage {
        LabelImage {
            rows: 1,
            cols: seq.len(),
            labels: seq.to_vec(),
        }
    }

    #[test]
    fn perfect_prediction_diagonal() {
        let gt = labels_of(&[Label::Valid; 100]);
        let mut conf = ConfusionMatrix::default();
        conf.update(&gt, &gt).unwrap();
        assert_eq!(conf.counts[0][0], 100);
        assert_eq!(conf.total(), 100);
        let iou = iou_scores(&conf).unwrap();
        assert_eq!(iou.per_class[0], Some(1.0));
        assert_eq!(iou.mean, 1.0);
    }

    #[test]
    fn all_fog_predicted_rain() {
        let gt = labels_of(&[Label::Fog; 40]);
        let pred = labels_of(&[Label::Rain; 40]);
        let mut conf = ConfusionMatrix::default();
        conf.update(&pred, &gt).unwrap();
        assert_eq!(conf.counts[2][1], 40);
        assert_eq!(conf.total(), 40);
    }

    #[test]
    fn accumulation_is_additive() {
        let gt = labels_of(&[Label::Valid, Label::Rain, Label::Fog, Label::NoReturn]);
        let pred = labels_of(&[Label::Valid, Label::Fog, Label::Fog, Label::Valid]);
        let mut once = ConfusionMatrix::default();
        once.update(&pred, &gt).unwrap();
        let mut twice = ConfusionMatrix::default();
        twice.update(&pred, &gt).unwrap();
        twice.update(&pred, &gt).unwrap();
        for g in 0..3 {
            for p in 0..3 {
                assert_eq!(twice.counts[g][p], 2 * once.counts[g][p]);
            }
        }
        // merge agrees with repeated update
        let mut merged = once.clone();
        merged.merge(&once);
        assert_eq!(merged, twice);
    }

    #[test]
    fn no_return_excluded_from_counts() {
        let gt = labels_of(&[Label::NoReturn, Label::Valid]);
        let pred = labels_of(&[Label::Valid, Label::NoReturn]);
        let mut conf = ConfusionMatrix::default();
        conf.update(&pred, &gt).unwrap();
        assert_eq!(conf.total(), 0);
    }

    #[test]
    fn iou_definition() {
        // TP=50, FP=25, FN=25 -> 0.5
        let mut conf = ConfusionMatrix::default();
        conf.counts[0][0] = 50;
        conf.counts[1][0] = 25; // predicted valid, was rain
        conf.counts[0][1] = 25; // predicted rain, was valid
        let iou = iou_scores(&conf).unwrap();
        assert_eq!(iou.per_class[0], Some(0.5));
    }

    #[test]
    fn undefined_class_excluded_from_mean() {
        let mut conf = ConfusionMatrix::default();
        conf.counts[0][0] = 10;
        conf.counts[1][1] = 10;
        // fog has no support and no predictions
        let iou = iou_scores(&conf).unwrap();
        assert_eq!(iou.per_class[2], None);
        assert_eq!(iou.mean, 1.0);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(iou_scores(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn degradation_ratios() {
        let all_valid = labels_of(&[Label::Valid; 10]);
        assert_eq!(degradation_report(&all_valid, None).unwrap().clutter_ratio, 0.0);

        let mut mixed = vec![Label::Valid; 70];
        mixed.extend(vec![Label::Fog; 30]);
        let report = degradation_report(&labels_of(&mixed), None).unwrap();
        assert!((report.clutter_ratio - 0.30).abs() < 1e-12);

        let empty = labels_of(&[Label::NoReturn; 4]);
        assert!(degradation_report(&empty, None).is_err());
    }

    #[test]
    fn calibration_inversion() {
        let curve = [(100.0, 0.05), (50.0, 0.12), (20.0, 0.30), (10.0, 0.50)];
        let report = degradation_report(
            &labels_of(&[vec![Label::Fog; 30], vec![Label::Valid; 70]].concat()),
            Some(&curve),
        )
        .unwrap();
        let v = report.estimated_visibility.unwrap();
        assert!((v - 20.0).abs() < 1e-9, "{v}");
        // midpoint interpolates
        assert!((invert_calibration(&curve, 0.21).unwrap() - 35.0).abs() < 1e-9);
        // clamped ends
        assert_eq!(invert_calibration(&curve, 0.01), Some(100.0));
        assert_eq!(invert_calibration(&curve, 0.9), Some(10.0));
    }

    #[test]
    fn scoring_mask_against_own_labels_is_perfect() {
        use crate::filters::MaskFlag;
        let mask = OutlierMask {
            rows: 1,
            cols: 4,
            flags: vec![MaskFlag::Keep, MaskFlag::Clutter, MaskFlag::Clutter, MaskFlag::NoReturn],
        };
        let gt = labels_of(&[Label::Valid, Label::Rain, Label::Fog, Label::NoReturn]);
        let report = score_clutter_mask(&mask, &gt).unwrap();
        assert_eq!(report.per_class[0], Some(1.0));
        assert_eq!(report.per_class[1], Some(1.0));
        assert_eq!(report.per_class[2], Some(1.0));
        assert_eq!(report.mean, 1.0);
    }
}
