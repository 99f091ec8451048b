//! Detection metrics: rotated IoU, average precision and center-error
//! statistics.

mod iou;

pub use iou::{intersection_area, rotated_iou};

use crate::geometry::OrientedBox;
use serde::{Deserialize, Serialize};

/// Detections and ground truth of one ego evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scene: u64,
    pub timestamp: f64,
    pub detections: Vec<OrientedBox>,
    pub ground_truth: Vec<OrientedBox>,
}

/// Outcome of one pooled detection, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMatch {
    pub record: usize,
    pub detection: usize,
    pub confidence: f64,
    /// Index of the matched ground-truth box when the detection is a TP.
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each detection, recall non-decreasing.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// Pools detections across records in descending confidence order and marks
/// each as TP when it reaches `iou_threshold` with the best still-unmatched
/// ground truth of its own record.
pub fn match_detections(records: &[EvalRecord], iou_threshold: f64) -> Vec<DetectionMatch> {
    let mut order: Vec<(usize, usize)> =
        records.iter().enumerate().flat_map(|(r, rec)| (0..rec.detections.len()).map(move |d| (r, d))).collect();
    // stable: equal confidences keep record/detection order
    order.sort_by(|a, b| {
        let ca = records[a.0].detections[a.1].confidence;
        let cb = records[b.0].detections[b.1].confidence;
        cb.total_cmp(&ca)
    });
    let mut taken: Vec<Vec<bool>> = records.iter().map(|r| vec![false; r.ground_truth.len()]).collect();
    order
        .into_iter()
        .map(|(r, d)| {
            let det = &records[r].detections[d];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in records[r].ground_truth.iter().enumerate() {
                if taken[r][g] {
                    continue;
                }
                let iou = rotated_iou(det, gt);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            let ground_truth = match best {
                Some((g, iou)) if iou >= iou_threshold => {
                    taken[r][g] = true;
                    Some(g)
                }
                _ => None,
            };
            DetectionMatch { record: r, detection: d, confidence: det.confidence, ground_truth }
        })
        .collect()
}

/// Precision/recall curve with all-point interpolated AP, or `None` when
/// the records hold no ground truth.
pub fn pr_curve(records: &[EvalRecord], iou_threshold: f64) -> Option<PrCurve> {
    let n_gt: usize = records.iter().map(|r| r.ground_truth.len()).sum();
    if n_gt == 0 {
        return None;
    }
    let matches = match_detections(records, iou_threshold);
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(matches.len());
    let mut is_tp = Vec::with_capacity(matches.len());
    for (i, m) in matches.iter().enumerate() {
        if m.ground_truth.is_some() {
            tp += 1;
        }
        is_tp.push(m.ground_truth.is_some());
        points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    // precision envelope from the right
    let mut envelope = vec![0.0; points.len()];
    let mut run = 0.0f64;
    for i in (0..points.len()).rev() {
        run = run.max(points[i].1);
        envelope[i] = run;
    }
    // each TP raises recall by 1/n_gt
    let sum: f64 = (0..points.len()).filter(|&i| is_tp[i]).map(|i| envelope[i]).sum();
    Some(PrCurve { points, ap: sum / n_gt as f64 })
}

/// All-point average precision; `None` marks a record set without ground truth.
pub fn average_precision(records: &[EvalRecord], iou_threshold: f64) -> Option<f64> {
    pr_curve(records, iou_threshold).map(|c| c.ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterErrorStats {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub count: usize,
}

/// Center-distance statistics over true positives at IoU 0.5; `None` when
/// there are no true positives.
pub fn center_error_stats(records: &[EvalRecord]) -> Option<CenterErrorStats> {
    let mut errs: Vec<f64> = match_detections(records, 0.5)
        .into_iter()
        .filter_map(|m| {
            m.ground_truth
                .map(|g| records[m.record].detections[m.detection].center_distance(&records[m.record].ground_truth[g]))
        })
        .collect();
    if errs.is_empty() {
        return None;
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) };
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    Some(CenterErrorStats { mean, median, p90: errs[rank - 1], count: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(c: f64, x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(c, x, y, 4.0, 2.0, 0.0)
    }

    fn rec(dets: Vec<OrientedBox>, gts: Vec<OrientedBox>) -> EvalRecord {
        EvalRecord { scene: 0, timestamp: 0.0, detections: dets, ground_truth: gts }
    }

    #[test]
    fn perfect_detector() {
        let gts = vec![bx(1.0, 0.0, 0.0), bx(1.0, 10.0, 0.0)];
        let dets = vec![bx(0.8, 0.0, 0.0), bx(0.7, 10.0, 0.0)];
        assert_eq!(average_precision(&[rec(dets, gts)], 0.5), Some(1.0));
    }

    #[test]
    fn trailing_false_positive_keeps_ap() {
        let r = rec(vec![bx(0.9, 0.0, 0.0), bx(0.8, 30.0, 0.0)], vec![bx(1.0, 0.0, 0.0)]);
        let c = pr_curve(&[r], 0.5).unwrap();
        assert_eq!(c.points, vec![(1.0, 1.0), (1.0, 0.5)]);
        assert_eq!(c.ap, 1.0);
    }

    #[test]
    fn no_ground_truth_is_marked() {
        assert_eq!(average_precision(&[rec(vec![bx(0.9, 0.0, 0.0)], vec![])], 0.5), None);
        assert_eq!(average_precision(&[], 0.5), None);
    }

    #[test]
    fn leading_false_positive_halves_precision() {
        let r = rec(vec![bx(0.9, 30.0, 0.0), bx(0.8, 0.0, 0.0)], vec![bx(1.0, 0.0, 0.0)]);
        assert_eq!(average_precision(&[r], 0.5), Some(0.5));
    }

    #[test]
    fn center_error_of_3_4_5_offset() {
        let r = rec(vec![bx(0.9, 0.3, 0.4)], vec![bx(1.0, 0.0, 0.0)]);
        let s = center_error_stats(&[r]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.median - 0.5).abs() < 1e-12);
        let perfect = rec(vec![bx(0.9, 0.0, 0.0)], vec![bx(1.0, 0.0, 0.0)]);
        let s = center_error_stats(&[perfect]).unwrap();
        assert_eq!((s.mean, s.median, s.p90), (0.0, 0.0, 0.0));
        assert!(center_error_stats(&[rec(vec![], vec![bx(1.0, 0.0, 0.0)])]).is_none());
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let r = rec(vec![bx(0.9, 0.0, 0.0), bx(0.8, 0.1, 0.0)], vec![bx(1.0, 0.0, 0.0)]);
        let m = match_detections(&[r], 0.5);
        assert_eq!(m[0].ground_truth, Some(0));
        assert_eq!(m[1].ground_truth, None);
    }
}
