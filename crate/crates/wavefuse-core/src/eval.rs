//! Detection-quality metrics: greedy NMS, score-sweep matching, average
//! precision at 40 recall positions, relative corruption error, dataset
//! pixel statistics, and the benchmark report with CSV/JSON serialization.

use crate::error::{Error, Result};
use crate::geometry::{iou3d, rotated_bev_iou, Box3D};
use crate::kitti::LabelRecord;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// One scored, classified box.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    pub score: f64,
    pub class: String,
}

impl Detection {
    pub fn new(box3d: Box3D, score: f64, class: impl Into<String>) -> Result<Detection> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::input(format!("score {score} outside [0, 1]")));
        }
        Ok(Detection {
            box3d,
            score,
            class: class.into(),
        })
    }
}

/// Which overlap measure matching uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouKind {
    /// Rotated bird's-eye-view rectangle overlap.
    Bev,
    /// Full volumetric overlap (BEV intersection times z-extent overlap).
    ThreeD,
}

fn overlap(a: &Box3D, b: &Box3D, kind: IouKind) -> f64 {
    match kind {
        IouKind::Bev => rotated_bev_iou(a, b),
        IouKind::ThreeD => iou3d(a, b),
    }
}

/// Indices sorted by descending score, ties broken by original index.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Greedy non-maximum suppression on rotated BEV overlap: walk detections
/// by descending score (ties by original index) and drop any box whose
/// overlap with an already-kept box exceeds `iou_thresh`. Returns kept
/// indices in score order.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<usize> {
    let order = score_order(dets);
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept
            .iter()
            .any(|&k| rotated_bev_iou(&dets[k].box3d, &dets[i].box3d) > iou_thresh);
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Precision/recall points from a score-descending sweep, plus the ground
/// truth count the recalls are relative to. Recall is non-decreasing along
/// the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub points: Vec<(f64, f64)>,
    pub total_gt: usize,
}

/// Labels each detection true/false positive by sweeping descending
/// score: a detection matches the highest-overlap still-unmatched ground
/// truth if that overlap reaches `iou_thresh`. Returns (score, is_tp)
/// pairs in sweep order, ready to pool across scenes before building one
/// curve.
pub fn label_matches(
    dets: &[Detection],
    gts: &[Box3D],
    iou_thresh: f64,
    kind: IouKind,
) -> Vec<(f64, bool)> {
    let order = score_order(dets);
    let mut gt_used = vec![false; gts.len()];
    let mut labels = Vec::with_capacity(dets.len());
    for &i in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_used[g] {
                continue;
            }
            let o = overlap(&dets[i].box3d, gt, kind);
            if best.map_or(true, |(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        let tp = matches!(best, Some((_, o)) if o >= iou_thresh);
        if let (true, Some((g, _))) = (tp, best) {
            gt_used[g] = true;
        }
        labels.push((dets[i].score, tp));
    }
    labels
}

/// Builds the sweep curve from pooled (score, is_tp) labels and the total
/// ground-truth count. Labels are re-sorted by descending score with a
/// stable tie order.
pub fn curve_from_labels(mut labels: Vec<(f64, bool)>, total_gt: usize) -> PRCurve {
    labels.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(labels.len());
    for (i, &(_, is_tp)) in labels.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let recall = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        points.push((recall, tp as f64 / (i + 1) as f64));
    }
    PRCurve { points, total_gt }
}

/// Sweeps detections by descending score; each detection matches the
/// highest-overlap still-unmatched ground truth if that overlap reaches
/// `iou_thresh` (a true positive), otherwise it counts as a false
/// positive. Inputs are assumed to be a single class.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Box3D],
    iou_thresh: f64,
    kind: IouKind,
) -> PRCurve {
    curve_from_labels(label_matches(dets, gts, iou_thresh, kind), gts.len())
}

/// Average precision over the 40 recall anchors {1/40, ..., 40/40}: for
/// each anchor, the best precision among sweep points whose recall reaches
/// it (0 if none), summed and scaled to a percentage. A curve with zero
/// ground truths has no defined recall and is an input error.
pub fn ap_r40(curve: &PRCurve) -> Result<f64> {
    if curve.total_gt == 0 {
        return Err(Error::input("average precision undefined with 0 ground truths"));
    }
    // Suffix max of precision over points sorted by recall: interpolated
    // precision at recall r is the best precision at any recall >= r.
    let mut pts = curve.points.clone();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = pts.len();
    let mut best_at_or_after = vec![0.0f64; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = running.max(pts[i].1);
        best_at_or_after[i] = running;
    }
    let mut sum = 0.0;
    for a in 1..=40 {
        let anchor = a as f64 / 40.0;
        // First point with recall >= anchor.
        let idx = pts.partition_point(|p| p.0 < anchor - 1e-12);
        if idx < n {
            sum += best_at_or_after[idx];
        }
    }
    Ok(100.0 * sum / 40.0)
}

/// Units for relative corruption error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RceUnit {
    /// Percentage points: `100 * (clean - mean(cor)) / clean`.
    Percent,
    /// Plain fraction: `(clean - mean(cor)) / clean`.
    Fraction,
}

/// Relative corruption error in the requested unit. `ap_clean` must be
/// positive and at least one corrupted value must be given.
pub fn rce_with_unit(ap_clean: f64, ap_cor_values: &[f64], unit: RceUnit) -> Result<f64> {
    if !(ap_clean > 0.0) {
        return Err(Error::input(format!(
            "relative corruption error needs ap_clean > 0, got {ap_clean}"
        )));
    }
    if ap_cor_values.is_empty() {
        return Err(Error::input("no corrupted AP values given"));
    }
    let mean = ap_cor_values.iter().sum::<f64>() / ap_cor_values.len() as f64;
    let frac = (ap_clean - mean) / ap_clean;
    Ok(match unit {
        RceUnit::Percent => 100.0 * frac,
        RceUnit::Fraction => frac,
    })
}

/// Relative corruption error as a percentage (the reporting convention).
pub fn rce(ap_clean: f64, ap_cor_values: &[f64]) -> Result<f64> {
    rce_with_unit(ap_clean, ap_cor_values, RceUnit::Percent)
}

/// Per-image mean pixel values and their Gaussian fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStats {
    /// Mean over all pixels and channels, one entry per image.
    pub per_image: Vec<f64>,
    /// Sample mean of the per-image values.
    pub mean: f64,
    /// Population standard deviation of the per-image values.
    pub std: f64,
}

/// Mean pixel value per image plus the (mean, population-std) Gaussian fit
/// over the set. Images may differ in size; the set must be non-empty.
pub fn dataset_pixel_stats(images: &[Tensor]) -> Result<PixelStats> {
    if images.is_empty() {
        return Err(Error::input("pixel stats need at least one image"));
    }
    let mut per_image = Vec::with_capacity(images.len());
    for img in images {
        if img.ndim() != 3 {
            return Err(Error::shape("pixel stats: images must be (h, w, c)"));
        }
        per_image.push(img.data().iter().sum::<f64>() / img.len() as f64);
    }
    let n = per_image.len() as f64;
    let mean = per_image.iter().sum::<f64>() / n;
    let var = per_image.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(PixelStats {
        per_image,
        mean,
        std: var.sqrt(),
    })
}

/// Standard difficulty buckets over label attributes: minimum 2D box
/// height in pixels, maximum occlusion level, maximum truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    fn thresholds(&self) -> (f64, i64, f64) {
        match self {
            Difficulty::Easy => (40.0, 0, 0.15),
            Difficulty::Moderate => (25.0, 1, 0.30),
            Difficulty::Hard => (25.0, 2, 0.50),
        }
    }

    /// Whether a labeled object belongs to this bucket (cumulative: every
    /// easy object is also moderate and hard).
    pub fn admits(&self, label: &LabelRecord) -> bool {
        let (min_height, max_occ, max_trunc) = self.thresholds();
        !label.is_dont_care()
            && label.bbox_height() >= min_height
            && label.occlusion <= max_occ
            && label.truncation <= max_trunc
    }
}

/// AP for one corruption kind at one severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub severity: u8,
    pub ap: f64,
}

/// Mean AP across severities for one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: String,
    pub mean_ap: f64,
}

/// Clean AP, the per-(kind, severity) grid, per-kind means, the overall
/// corrupted mean, and the relative corruption error derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ap_clean: f64,
    pub rows: Vec<ReportRow>,
    pub kind_means: Vec<KindSummary>,
    pub ap_cor_mean: f64,
    pub rce: f64,
}

impl BenchmarkReport {
    /// Assembles a report from the clean AP and the corruption grid,
    /// computing the aggregates. Requires ap_clean > 0 and at least one row.
    pub fn from_results(ap_clean: f64, rows: Vec<ReportRow>) -> Result<BenchmarkReport> {
        let aps: Vec<f64> = rows.iter().map(|r| r.ap).collect();
        let rce_pct = rce(ap_clean, &aps)?;
        let ap_cor_mean = aps.iter().sum::<f64>() / aps.len() as f64;
        let mut kind_means: Vec<KindSummary> = Vec::new();
        for row in &rows {
            if !kind_means.iter().any(|k| k.kind == row.kind) {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.kind == row.kind)
                    .map(|r| r.ap)
                    .collect();
                kind_means.push(KindSummary {
                    kind: row.kind.clone(),
                    mean_ap: vals.iter().sum::<f64>() / vals.len() as f64,
                });
            }
        }
        Ok(BenchmarkReport {
            ap_clean,
            rows,
            kind_means,
            ap_cor_mean,
            rce: rce_pct,
        })
    }

    /// Verifies the stored aggregates against a recomputation from the
    /// rows, to 1e-9.
    pub fn check_consistency(&self) -> Result<()> {
        let aps: Vec<f64> = self.rows.iter().map(|r| r.ap).collect();
        let mean = aps.iter().sum::<f64>() / aps.len().max(1) as f64;
        let want_rce = rce(self.ap_clean, &aps)?;
        if (mean - self.ap_cor_mean).abs() > 1e-9 || (want_rce - self.rce).abs() > 1e-9 {
            return Err(Error::input(format!(
                "report aggregates inconsistent: mean {} vs {}, rce {} vs {}",
                mean, self.ap_cor_mean, want_rce, self.rce
            )));
        }
        Ok(())
    }

    /// CSV with one row per kind and severity; the clean AP appears as a
    /// leading `clean` row with severity 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,severity,ap\n");
        out.push_str(&format!("clean,0,{}\n", self.ap_clean));
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.kind, row.severity, row.ap));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<BenchmarkReport> {
        serde_json::from_str(text).map_err(|e| Error::format(format!("report JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, yaw: f64, score: f64) -> Detection {
        Detection::new(Box3D::car(x, y, 0.0, yaw), score, "Car").unwrap()
    }

    #[test]
    fn detection_score_validated() {
        assert!(Detection::new(Box3D::car(0.0, 0.0, 0.0, 0.0), 1.5, "Car").is_err());
        assert!(Detection::new(Box3D::car(0.0, 0.0, 0.0, 0.0), f64::NAN, "Car").is_err());
        assert!(Detection::new(Box3D::car(0.0, 0.0, 0.0, 0.0), 0.0, "Car").is_ok());
    }

    #[test]
    fn nms_identical_boxes_keeps_best() {
        let dets = vec![det(0.0, 0.0, 0.0, 0.9), det(0.0, 0.0, 0.0, 0.8)];
        assert_eq!(nms(&dets, 0.7), vec![0]);
        // Reversed scores keep the other box.
        let dets = vec![det(0.0, 0.0, 0.0, 0.8), det(0.0, 0.0, 0.0, 0.9)];
        assert_eq!(nms(&dets, 0.7), vec![1]);
    }

    #[test]
    fn nms_disjoint_keeps_all() {
        let dets = vec![
            det(0.0, 0.0, 0.0, 0.5),
            det(20.0, 0.0, 0.0, 0.9),
            det(0.0, 20.0, 0.0, 0.7),
        ];
        let mut kept = nms(&dets, 0.5);
        kept.sort_unstable();
        assert_eq!(kept, vec![0, 1, 2]);
    }

    #[test]
    fn nms_suppression_chain() {
        // a-b and b-c overlap above threshold, a-c below: greedy keeps a,
        // drops b, then keeps c.
        let a = det(0.0, 0.0, 0.0, 0.9);
        let b = det(1.0, 0.0, 0.0, 0.8);
        let c = det(2.0, 0.0, 0.0, 0.7);
        let t = 0.4;
        assert!(rotated_bev_iou(&a.box3d, &b.box3d) > t);
        assert!(rotated_bev_iou(&b.box3d, &c.box3d) > t);
        assert!(rotated_bev_iou(&a.box3d, &c.box3d) < t);
        assert_eq!(nms(&[a, b, c], t), vec![0, 2]);
    }

    #[test]
    fn nms_tie_breaks_by_index() {
        let dets = vec![det(0.0, 0.0, 0.0, 0.5), det(0.0, 0.0, 0.0, 0.5)];
        assert_eq!(nms(&dets, 0.7), vec![0]);
    }

    #[test]
    fn nms_input_order_invariant_on_kept_boxes() {
        let dets = vec![
            det(0.0, 0.0, 0.0, 0.9),
            det(1.0, 0.0, 0.0, 0.8),
            det(10.0, 5.0, 0.4, 0.7),
            det(10.3, 5.0, 0.4, 0.85),
        ];
        let kept_scores = |d: &[Detection]| -> Vec<f64> {
            nms(d, 0.4).iter().map(|&i| d[i].score).collect()
        };
        let base = kept_scores(&dets);
        let mut rev = dets.clone();
        rev.reverse();
        assert_eq!(base, kept_scores(&rev));
    }

    #[test]
    fn match_single_perfect_detection() {
        let gt = [Box3D::car(5.0, 0.0, 0.0, 0.2)];
        let dets = [det(5.0, 0.0, 0.2, 0.9)];
        let curve = match_detections(&dets, &gt, 0.7, IouKind::Bev);
        assert_eq!(curve.points, vec![(1.0, 1.0)]);
        assert_eq!(curve.total_gt, 1);
    }

    #[test]
    fn pooled_labels_reproduce_single_scene_curve() {
        // Two disjoint "scenes" merged through labels must equal one big
        // scene whose ground truths and detections are the union, because
        // the scenes are spatially disjoint (no cross matches possible).
        let gt_a = [Box3D::car(5.0, 0.0, 0.0, 0.0)];
        let gt_b = [Box3D::car(200.0, 0.0, 0.0, 0.0)];
        let dets_a = [det(5.0, 0.0, 0.0, 0.9), det(8.0, 0.0, 0.0, 0.4)];
        let dets_b = [det(200.0, 0.0, 0.1, 0.7)];

        let mut labels = label_matches(&dets_a, &gt_a, 0.7, IouKind::Bev);
        labels.extend(label_matches(&dets_b, &gt_b, 0.7, IouKind::Bev));
        let pooled = curve_from_labels(labels, gt_a.len() + gt_b.len());

        let all_gts = [gt_a[0].clone(), gt_b[0].clone()];
        let all_dets = [dets_a[0].clone(), dets_a[1].clone(), dets_b[0].clone()];
        let joint = match_detections(&all_dets, &all_gts, 0.7, IouKind::Bev);

        assert_eq!(pooled.points, joint.points);
        assert_eq!(pooled.total_gt, joint.total_gt);
        assert!((ap_r40(&pooled).unwrap() - ap_r40(&joint).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn match_no_detections_gives_empty_curve() {
        let gts = [
            Box3D::car(0.0, 0.0, 0.0, 0.0),
            Box3D::car(10.0, 0.0, 0.0, 0.0),
            Box3D::car(20.0, 0.0, 0.0, 0.0),
        ];
        let curve = match_detections(&[], &gts, 0.7, IouKind::Bev);
        assert!(curve.points.is_empty());
        assert_eq!(ap_r40(&curve).unwrap(), 0.0);
    }

    #[test]
    fn match_double_detection_counts_second_as_fp() {
        let gt = [Box3D::car(5.0, 0.0, 0.0, 0.0)];
        let dets = [det(5.0, 0.0, 0.0, 0.9), det(5.0, 0.0, 0.0, 0.8)];
        let curve = match_detections(&dets, &gt, 0.7, IouKind::Bev);
        assert_eq!(curve.points, vec![(1.0, 1.0), (1.0, 0.5)]);
    }

    #[test]
    fn match_prefers_highest_overlap_gt() {
        // Detection halfway between two GTs but closer to the second.
        let gts = [Box3D::car(0.0, 0.0, 0.0, 0.0), Box3D::car(0.6, 0.0, 0.0, 0.0)];
        let dets = [det(0.5, 0.0, 0.0, 0.9)];
        let curve = match_detections(&dets, &gts, 0.5, IouKind::Bev);
        assert_eq!(curve.points, vec![(0.5, 1.0)]);
        // The matched GT must be the nearer one: a second identical
        // detection can still match the farther GT.
        let dets2 = [det(0.5, 0.0, 0.0, 0.9), det(0.1, 0.0, 0.0, 0.8)];
        let curve2 = match_detections(&dets2, &gts, 0.5, IouKind::Bev);
        assert_eq!(curve2.points, vec![(0.5, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn match_recall_non_decreasing() {
        let gts = [
            Box3D::car(0.0, 0.0, 0.0, 0.0),
            Box3D::car(10.0, 0.0, 0.0, 0.0),
        ];
        let dets = [
            det(0.0, 0.0, 0.0, 0.9),
            det(30.0, 0.0, 0.0, 0.8),
            det(10.0, 0.0, 0.0, 0.7),
        ];
        let curve = match_detections(&dets, &gts, 0.7, IouKind::Bev);
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0);
        }
    }

    #[test]
    fn iou3d_matching_respects_height() {
        let gt = [Box3D::new([5.0, 0.0, 0.0], [3.9, 1.6, 1.56], 0.0).unwrap()];
        let high = Box3D::new([5.0, 0.0, 5.0], [3.9, 1.6, 1.56], 0.0).unwrap();
        let dets = [Detection::new(high, 0.9, "Car").unwrap()];
        let bev = match_detections(&dets, &gt, 0.5, IouKind::Bev);
        let full = match_detections(&dets, &gt, 0.5, IouKind::ThreeD);
        assert_eq!(bev.points, vec![(1.0, 1.0)]);
        assert_eq!(full.points, vec![(0.0, 0.0)]);
    }

    /// Direct evaluation of the 40-anchor definition, written separately
    /// from the production suffix-max implementation.
    fn ap_r40_direct(curve: &PRCurve) -> f64 {
        let mut sum = 0.0;
        for a in 1..=40 {
            let anchor = a as f64 / 40.0;
            let best = curve
                .points
                .iter()
                .filter(|(r, _)| *r >= anchor - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0f64, f64::max);
            sum += best;
        }
        100.0 * sum / 40.0
    }

    #[test]
    fn ap_r40_perfect_and_empty() {
        let perfect = PRCurve {
            points: vec![(1.0, 1.0)],
            total_gt: 1,
        };
        assert!((ap_r40(&perfect).unwrap() - 100.0).abs() < 1e-12);
        let empty = PRCurve {
            points: vec![],
            total_gt: 2,
        };
        assert_eq!(ap_r40(&empty).unwrap(), 0.0);
        let no_gt = PRCurve {
            points: vec![],
            total_gt: 0,
        };
        assert!(matches!(ap_r40(&no_gt), Err(Error::Input(_))));
    }

    #[test]
    fn ap_r40_matches_direct_evaluation_on_random_curves() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(31);
        for _ in 0..200 {
            let n = 1 + rng.next_below(8);
            let total_gt = 1 + rng.next_below(5);
            let mut tp = 0usize;
            let mut points = Vec::new();
            for i in 0..n {
                if rng.next_f64() < 0.6 && tp < total_gt {
                    tp += 1;
                }
                points.push((tp as f64 / total_gt as f64, tp as f64 / (i + 1) as f64));
            }
            let curve = PRCurve { points, total_gt };
            let fast = ap_r40(&curve).unwrap();
            let direct = ap_r40_direct(&curve);
            assert!((fast - direct).abs() < 1e-9, "{fast} vs {direct}");
        }
    }

    #[test]
    fn ap_r40_adding_a_true_positive_never_hurts() {
        let base = PRCurve {
            points: vec![(0.5, 1.0), (0.5, 0.5)],
            total_gt: 2,
        };
        let better = PRCurve {
            points: vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)],
            total_gt: 2,
        };
        assert!(ap_r40(&better).unwrap() >= ap_r40(&base).unwrap());
    }

    #[test]
    fn rce_matches_published_arithmetic() {
        // Moderate-difficulty robustness table: clean 88.04, corrupted
        // mean 81.7255, printed error 7.17.
        let r = rce(88.04, &[81.7255]).unwrap();
        assert!((r - 7.17).abs() < 0.02, "rce {r}");
        // Second benchmark: clean 69.91, corrupted mean 63.9066,
        // printed error 8.58.
        let r2 = rce(69.91, &[63.9066]).unwrap();
        assert!((r2 - 8.58).abs() < 0.03, "rce {r2}");
    }

    #[test]
    fn rce_zero_when_unchanged_and_scale_invariant() {
        assert_eq!(rce(50.0, &[50.0, 50.0]).unwrap(), 0.0);
        let a = rce(88.0, &[80.0, 70.0, 85.0]).unwrap();
        let b = rce(88.0 * 3.7, &[80.0 * 3.7, 70.0 * 3.7, 85.0 * 3.7]).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rce_units_and_errors() {
        let pct = rce_with_unit(80.0, &[60.0], RceUnit::Percent).unwrap();
        let frac = rce_with_unit(80.0, &[60.0], RceUnit::Fraction).unwrap();
        assert!((pct - 25.0).abs() < 1e-12);
        assert!((frac - 0.25).abs() < 1e-12);
        assert!(rce(0.0, &[10.0]).is_err());
        assert!(rce(-5.0, &[10.0]).is_err());
        assert!(rce(50.0, &[]).is_err());
    }

    #[test]
    fn pixel_stats_closed_forms() {
        let zero = Tensor::zeros(vec![4, 4, 3]).unwrap();
        let s = dataset_pixel_stats(&[zero.clone(), zero]).unwrap();
        assert_eq!(s.per_image, vec![0.0, 0.0]);
        assert_eq!((s.mean, s.std), (0.0, 0.0));

        let mid = Tensor::filled(vec![2, 3, 3], 128.0).unwrap();
        let s = dataset_pixel_stats(&[mid]).unwrap();
        assert_eq!(s.per_image, vec![128.0]);

        let a = Tensor::filled(vec![4, 4, 3], 100.0).unwrap();
        let b = Tensor::filled(vec![8, 2, 3], 200.0).unwrap();
        let s = dataset_pixel_stats(&[a, b]).unwrap();
        assert!((s.mean - 150.0).abs() < 1e-12);
        assert!((s.std - 50.0).abs() < 1e-12);

        assert!(matches!(dataset_pixel_stats(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn difficulty_buckets_standard_thresholds() {
        let mut label = LabelRecord {
            class_name: "Car".into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: 0.0,
            bbox2d: [100.0, 100.0, 160.0, 150.0], // height 50 px
            dims_hwl: [1.5, 1.6, 3.9],
            location: [0.0, 1.5, 20.0],
            rotation_y: 0.0,
            score: None,
        };
        assert!(Difficulty::Easy.admits(&label));
        assert!(Difficulty::Moderate.admits(&label));
        assert!(Difficulty::Hard.admits(&label));

        label.occlusion = 1; // partly occluded: no longer easy
        assert!(!Difficulty::Easy.admits(&label));
        assert!(Difficulty::Moderate.admits(&label));

        label.bbox2d = [100.0, 100.0, 160.0, 130.0]; // 30 px tall
        assert!(Difficulty::Moderate.admits(&label));
        label.bbox2d = [100.0, 100.0, 160.0, 120.0]; // 20 px tall: gone
        assert!(!Difficulty::Hard.admits(&label));

        label.bbox2d = [100.0, 100.0, 160.0, 150.0];
        label.truncation = 0.45;
        assert!(!Difficulty::Moderate.admits(&label));
        assert!(Difficulty::Hard.admits(&label));

        label.class_name = "DontCare".into();
        assert!(!Difficulty::Hard.admits(&label));
    }

    #[test]
    fn report_aggregates_and_consistency() {
        let rows = vec![
            ReportRow { kind: "fog".into(), severity: 1, ap: 80.0 },
            ReportRow { kind: "fog".into(), severity: 2, ap: 70.0 },
            ReportRow { kind: "density".into(), severity: 1, ap: 90.0 },
            ReportRow { kind: "density".into(), severity: 2, ap: 84.0 },
        ];
        let report = BenchmarkReport::from_results(90.0, rows).unwrap();
        assert!((report.ap_cor_mean - 81.0).abs() < 1e-12);
        assert!((report.rce - 10.0).abs() < 1e-12);
        assert_eq!(report.kind_means.len(), 2);
        assert!((report.kind_means[0].mean_ap - 75.0).abs() < 1e-12);
        assert!((report.kind_means[1].mean_ap - 87.0).abs() < 1e-12);
        report.check_consistency().unwrap();

        let mut broken = report.clone();
        broken.rce = 11.0;
        assert!(broken.check_consistency().is_err());
    }

    #[test]
    fn report_csv_layout() {
        let rows = vec![
            ReportRow { kind: "fog".into(), severity: 1, ap: 80.0 },
            ReportRow { kind: "fog".into(), severity: 2, ap: 70.0 },
        ];
        let report = BenchmarkReport::from_results(90.0, rows).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kind,severity,ap");
        assert_eq!(lines[1], "clean,0,90");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("fog,1,"));
    }

    #[test]
    fn report_json_round_trip() {
        let rows = vec![ReportRow { kind: "snow".into(), severity: 3, ap: 55.5 }];
        let report = BenchmarkReport::from_results(88.0, rows).unwrap();
        let back = BenchmarkReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(BenchmarkReport::from_json("not json").is_err());
    }
}
