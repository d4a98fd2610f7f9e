//! Detection metrics: IoU matching, all-points AP / mAP@50, detection-level
//! precision and recall at a confidence threshold, and image-level OK/NOK
//! verdicts for inspection use cases.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio::{read_json, write_json};
use crate::label::CocoDataset;

pub const IOU_THRESHOLD: f64 = 0.5;

/// `[x, y, width, height]` in pixels.
pub type BBox = [f64; 4];

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    fn validate(&self, index: usize) -> Result<()> {
        if !(self.bbox.iter().all(|v| v.is_finite()) && self.bbox[2] > 0.0 && self.bbox[3] > 0.0) {
            return Err(Error::field(format!("predictions[{index}].bbox"), "width and height must be positive"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::field(format!("predictions[{index}].score"), "must be in [0, 1]"));
        }
        Ok(())
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<Detection>> {
    let dets: Vec<Detection> = read_json(path)?;
    for (i, d) in dets.iter().enumerate() {
        d.validate(i)?;
    }
    Ok(dets)
}

pub fn save_predictions(path: &Path, dets: &[Detection]) -> Result<()> {
    write_json(path, &dets)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// True-positive flag per detection, in input order.
    pub true_positive: Vec<bool>,
    /// GT index matched by each detection.
    pub matched_gt: Vec<Option<usize>>,
    pub unmatched_gt: usize,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.true_positive.iter().filter(|&&t| t).count()
    }
}

/// Greedy one-to-one matching for one image and one category. Detections
/// are visited by descending score (ties: lower index first); each takes
/// the unmatched GT with the highest IoU at or above `threshold` (ties:
/// lower GT index).
pub fn match_detections(scores: &[f64], boxes: &[BBox], gts: &[BBox], threshold: f64) -> MatchResult {
    assert_eq!(scores.len(), boxes.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut matched_gt = vec![None; scores.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&boxes[d], gt);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matched_gt[d] = Some(g);
        }
    }
    MatchResult {
        true_positive: matched_gt.iter().map(Option::is_some).collect(),
        unmatched_gt: taken.iter().filter(|&&t| !t).count(),
        matched_gt,
    }
}

/// All-points interpolated AP from detections already ranked by descending
/// confidence. `None` when there is no ground truth.
///
/// Recall grows by `1 / n_gt` at each true positive, so the area under the
/// interpolated staircase is the mean, over true positives, of the best
/// precision reached at that recall or beyond. The sum is carried out in
/// exact rational arithmetic while it fits, so the result is the double
/// nearest to the true value (5/6 comes out as `5.0 / 6.0`).
pub fn average_precision(ranked_tp: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    // (true positives, rank) at each cutoff; precision = tp / rank
    let mut cut: Vec<(u64, u64)> = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0u64;
    for (i, &hit) in ranked_tp.iter().enumerate() {
        tp += u64::from(hit);
        cut.push((tp, i as u64 + 1));
    }
    // suffix maximum of precision, compared exactly by cross-multiplication
    for i in (0..cut.len().saturating_sub(1)).rev() {
        let (a, b) = (cut[i], cut[i + 1]);
        if u128::from(b.0) * u128::from(a.1) > u128::from(a.0) * u128::from(b.1) {
            cut[i] = b;
        }
    }
    let terms = ranked_tp.iter().zip(&cut).filter(|(&hit, _)| hit).map(|(_, &p)| p);
    if let Some(exact) = exact_mean(terms.clone(), n_gt as u64) {
        return Some(exact);
    }
    let sum: f64 = terms.map(|(t, r)| t as f64 / r as f64).sum();
    Some(sum / n_gt as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `sum(t / r) / n` as a correctly rounded double, if the reduced fraction
/// stays below 2^53 in both parts.
fn exact_mean(terms: impl Iterator<Item = (u64, u64)>, n: u64) -> Option<f64> {
    const LIMIT: u128 = 1 << 53;
    let (mut num, mut den) = (0u128, 1u128);
    for (t, r) in terms {
        let (t, r) = (u128::from(t), u128::from(r));
        let g = gcd(den, r);
        let lcm = den.checked_mul(r / g)?;
        num = num.checked_mul(lcm / den)?.checked_add(t.checked_mul(lcm / r)?)?;
        den = lcm;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    den = den.checked_mul(u128::from(n))?;
    let g = gcd(num, den);
    (num, den) = (num / g, den / g);
    (num < LIMIT && den < LIMIT).then(|| num as f64 / den as f64)
}

/// Per-image OK/NOK rule of an inspection use case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseCaseRule {
    #[serde(default)]
    pub name: String,
    /// Minimum count of confident detections per category name.
    #[serde(default)]
    pub required: BTreeMap<String, u32>,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
    /// Type-label categories: an OK image shows exactly one of them, and
    /// that category is the predicted type.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusive_categories: Vec<String>,
}

fn default_threshold() -> f64 {
    0.5
}

impl UseCaseRule {
    pub fn load(path: &Path) -> Result<Self> {
        let rule: UseCaseRule = read_json(path)?;
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.required.is_empty() && self.exclusive_categories.is_empty() {
            return Err(Error::field("rule.required", "at least one category must be constrained"));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::field("rule.confidence_threshold", "must be in [0, 1]"));
        }
        Ok(())
    }

    fn check_categories(&self, coco: &CocoDataset) -> Result<()> {
        for name in self.required.keys().chain(&self.exclusive_categories) {
            if coco.category_id(name).is_none() {
                return Err(Error::field("rule", format!("category {name:?} is not in the ground truth")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Ok,
    Nok,
}

/// Verdict plus, for type-label rules, the predicted type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Applies `rule` to the category names of one image's confident
/// detections.
pub fn image_verdict<'a>(rule: &UseCaseRule, categories: impl IntoIterator<Item = &'a str>) -> ImageVerdict {
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for c in categories {
        *counts.entry(c).or_default() += 1;
    }
    let mut ok = rule
        .required
        .iter()
        .all(|(name, &n)| counts.get(name.as_str()).copied().unwrap_or(0) >= n);
    let mut label = None;
    if !rule.exclusive_categories.is_empty() {
        let present: Vec<&String> = rule
            .exclusive_categories
            .iter()
            .filter(|c| counts.get(c.as_str()).copied().unwrap_or(0) > 0)
            .collect();
        let total: u32 = present.iter().map(|c| counts[c.as_str()]).sum();
        if total == 1 {
            label = Some(present[0].clone());
        } else {
            ok = false;
        }
    }
    ImageVerdict {
        verdict: if ok { Verdict::Ok } else { Verdict::Nok },
        label: if ok { label } else { None },
    }
}

/// Image-level confusion counts with NOK as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub category_id: u64,
    pub name: String,
    pub gt_count: usize,
    pub detection_count: usize,
    /// `None` for classes without ground truth; they are excluded from mAP.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub use_case: String,
    pub images: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub per_class: Vec<ClassAp>,
    pub confusion: Confusion,
    pub confidence_threshold: f64,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let name = if self.use_case.is_empty() { "use case" } else { &self.use_case };
        let width = name.len().max(8);
        let _ = writeln!(s, "{:<width$}  {:>5}  {:>5}  {:>5}  {:>5}", "", "A", "P", "R", "mAP50");
        let _ = writeln!(
            s,
            "{name:<width$}  {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}",
            self.accuracy, self.precision, self.recall, self.map50
        );
        let c = &self.confusion;
        let _ = writeln!(s, "\nimages {}  (NOK positive)  TP {}  FP {}  TN {}  FN {}", self.images, c.tp, c.fp, c.tn, c.fn_);
        for class in &self.per_class {
            let ap = class.ap.map_or("   -".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "  {:<20} AP50 {ap}  gt {}  det {}", class.name, class.gt_count, class.detection_count);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Scores `predictions` against the COCO ground truth.
///
/// AP uses every detection; precision, recall and verdicts use only the
/// detections at or above the rule's confidence threshold. Precision is 1
/// when nothing is detected and nothing exists, 0 when ground truth is
/// missed entirely; recall is 1 without ground truth.
pub fn evaluate(gt: &CocoDataset, predictions: &[Detection], rule: &UseCaseRule) -> Result<EvalReport> {
    rule.validate()?;
    rule.check_categories(gt)?;
    let image_index: HashMap<u64, usize> = gt.images.iter().enumerate().map(|(i, im)| (im.id, i)).collect();
    for (i, d) in predictions.iter().enumerate() {
        d.validate(i)?;
        if !image_index.contains_key(&d.image_id) {
            return Err(Error::Structure(format!("predictions[{i}] refers to image {} absent from the ground truth", d.image_id)));
        }
        if gt.category_name(d.category_id).is_none() {
            return Err(Error::Structure(format!("predictions[{i}] refers to unknown category {}", d.category_id)));
        }
    }

    // (image, category) -> indices
    let mut gt_groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, a) in gt.annotations.iter().enumerate() {
        gt_groups.entry((a.image_id, a.category_id)).or_default().push(i);
    }
    let mut det_groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, d) in predictions.iter().enumerate() {
        det_groups.entry((d.image_id, d.category_id)).or_default().push(i);
    }
    let keys: std::collections::BTreeSet<(u64, u64)> = gt_groups.keys().chain(det_groups.keys()).copied().collect();

    let threshold = rule.confidence_threshold;
    let mut is_tp = vec![false; predictions.len()];
    let (mut tp_thr, mut det_thr) = (0usize, 0usize);
    for key in keys {
        let gts: Vec<BBox> = gt_groups.get(&key).map_or(vec![], |v| v.iter().map(|&i| gt.annotations[i].bbox).collect());
        let dets = det_groups.get(&key).cloned().unwrap_or_default();
        let scores: Vec<f64> = dets.iter().map(|&i| predictions[i].score).collect();
        let boxes: Vec<BBox> = dets.iter().map(|&i| predictions[i].bbox).collect();
        let m = match_detections(&scores, &boxes, &gts, IOU_THRESHOLD);
        for (k, &i) in dets.iter().enumerate() {
            is_tp[i] = m.true_positive[k];
        }
        // thresholded matching for precision / recall
        let keep: Vec<usize> = (0..dets.len()).filter(|&k| scores[k] >= threshold).collect();
        let ks: Vec<f64> = keep.iter().map(|&k| scores[k]).collect();
        let kb: Vec<BBox> = keep.iter().map(|&k| boxes[k]).collect();
        tp_thr += match_detections(&ks, &kb, &gts, IOU_THRESHOLD).tp_count();
        det_thr += keep.len();
    }
    let n_gt = gt.annotations.len();
    let precision = if det_thr == 0 { if n_gt == 0 { 1.0 } else { 0.0 } } else { ratio(tp_thr, det_thr, 1.0) };
    let recall = ratio(tp_thr, n_gt, 1.0);

    let mut per_class = Vec::new();
    for cat in &gt.categories {
        let gt_count = gt.annotations.iter().filter(|a| a.category_id == cat.id).count();
        let mut ranked: Vec<usize> = (0..predictions.len()).filter(|&i| predictions[i].category_id == cat.id).collect();
        ranked.sort_by(|&a, &b| {
            let (da, db) = (&predictions[a], &predictions[b]);
            db.score.total_cmp(&da.score).then(da.image_id.cmp(&db.image_id)).then(a.cmp(&b))
        });
        let flags: Vec<bool> = ranked.iter().map(|&i| is_tp[i]).collect();
        per_class.push(ClassAp {
            category_id: cat.id,
            name: cat.name.clone(),
            gt_count,
            detection_count: ranked.len(),
            ap: average_precision(&flags, gt_count),
        });
    }
    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map50 = if aps.is_empty() {
        if predictions.is_empty() { 1.0 } else { 0.0 }
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };

    let mut gt_names: Vec<Vec<&str>> = vec![Vec::new(); gt.images.len()];
    for a in &gt.annotations {
        if let (Some(&i), Some(name)) = (image_index.get(&a.image_id), gt.category_name(a.category_id)) {
            gt_names[i].push(name);
        }
    }
    let mut det_names: Vec<Vec<&str>> = vec![Vec::new(); gt.images.len()];
    for d in predictions.iter().filter(|d| d.score >= threshold) {
        det_names[image_index[&d.image_id]].push(gt.category_name(d.category_id).unwrap_or_default());
    }
    let mut confusion = Confusion::default();
    let mut correct = 0usize;
    for (g, p) in gt_names.iter().zip(&det_names) {
        let truth = image_verdict(rule, g.iter().copied());
        let pred = image_verdict(rule, p.iter().copied());
        correct += usize::from(truth == pred);
        match (pred.verdict, truth.verdict) {
            (Verdict::Nok, Verdict::Nok) => confusion.tp += 1,
            (Verdict::Nok, Verdict::Ok) => confusion.fp += 1,
            (Verdict::Ok, Verdict::Ok) => confusion.tn += 1,
            (Verdict::Ok, Verdict::Nok) => confusion.fn_ += 1,
        }
    }

    Ok(EvalReport {
        use_case: rule.name.clone(),
        images: gt.images.len(),
        accuracy: ratio(correct, gt.images.len(), 1.0),
        precision,
        recall,
        map50,
        per_class,
        confusion,
        confidence_threshold: threshold,
    })
}

/// Ground truth replayed as predictions with score 1.
pub fn ground_truth_as_predictions(gt: &CocoDataset) -> Vec<Detection> {
    gt.annotations
        .iter()
        .map(|a| Detection {
            image_id: a.image_id,
            category_id: a.category_id,
            bbox: a.bbox,
            score: 1.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{CocoAnnotation, CocoCategory, CocoImage};

    #[test]
    fn iou_hand_cases() {
        assert_eq!(iou(&[0.0, 0.0, 2.0, 2.0], &[1.0, 1.0, 2.0, 2.0]), 1.0 / 7.0);
        assert_eq!(iou(&[3.0, 4.0, 5.0, 6.0], &[3.0, 4.0, 5.0, 6.0]), 1.0);
        assert_eq!(iou(&[0.0, 0.0, 1.0, 1.0], &[1.0, 0.0, 1.0, 1.0]), 0.0);
        assert_eq!(iou(&[0.0, 0.0, 1.0, 1.0], &[5.0, 5.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn single_perfect_detection_matches() {
        let m = match_detections(&[0.9], &[[0.0, 0.0, 4.0, 4.0]], &[[0.0, 0.0, 4.0, 4.0]], 0.5);
        assert_eq!((m.tp_count(), m.unmatched_gt), (1, 0));
    }

    #[test]
    fn one_gt_only_matches_once() {
        let gt = [[0.0, 0.0, 10.0, 10.0]];
        let m = match_detections(&[0.6, 0.8], &[[0.0, 0.0, 10.0, 9.0], [1.0, 0.0, 10.0, 10.0]], &gt, 0.5);
        assert_eq!(m.true_positive, vec![false, true]);
        // equal scores: lower index wins
        let m = match_detections(&[0.7, 0.7], &[[1.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]], &gt, 0.5);
        assert_eq!(m.true_positive, vec![true, false]);
    }

    #[test]
    fn ap_hand_cases() {
        assert_eq!(average_precision(&[true, false, true], 2), Some(5.0 / 6.0));
        assert_eq!(average_precision(&[true, true], 2), Some(1.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[false], 0), None);
    }

    fn rule_door_lock() -> UseCaseRule {
        UseCaseRule {
            name: "door lock".into(),
            required: [("screw".to_string(), 2)].into(),
            confidence_threshold: 0.5,
            exclusive_categories: vec![],
        }
    }

    #[test]
    fn door_lock_verdicts() {
        let r = rule_door_lock();
        assert_eq!(image_verdict(&r, ["screw", "screw"]).verdict, Verdict::Ok);
        assert_eq!(image_verdict(&r, ["screw"]).verdict, Verdict::Nok);
        assert_eq!(image_verdict(&r, ["screw", "screw", "screw"]).verdict, Verdict::Ok);
    }

    #[test]
    fn type_label_needs_exactly_one() {
        let r = UseCaseRule {
            name: "type label".into(),
            required: BTreeMap::new(),
            confidence_threshold: 0.5,
            exclusive_categories: vec!["a".into(), "b".into()],
        };
        assert_eq!(image_verdict(&r, ["a"]), ImageVerdict { verdict: Verdict::Ok, label: Some("a".into()) });
        assert_eq!(image_verdict(&r, ["a", "b"]).verdict, Verdict::Nok);
        assert_eq!(image_verdict(&r, ["b", "b"]).verdict, Verdict::Nok);
        assert_eq!(image_verdict(&r, std::iter::empty()).verdict, Verdict::Nok);
    }

    fn dataset() -> CocoDataset {
        CocoDataset {
            images: (1..=3).map(|id| CocoImage { id, file_name: format!("{id}.png"), width: 64, height: 64 }).collect(),
            annotations: vec![
                CocoAnnotation { id: 1, image_id: 1, category_id: 1, bbox: [0.0, 0.0, 10.0, 10.0], area: 100.0, iscrowd: 0 },
                CocoAnnotation { id: 2, image_id: 1, category_id: 1, bbox: [20.0, 20.0, 10.0, 10.0], area: 100.0, iscrowd: 0 },
                CocoAnnotation { id: 3, image_id: 2, category_id: 1, bbox: [5.0, 5.0, 10.0, 10.0], area: 100.0, iscrowd: 0 },
            ],
            categories: vec![CocoCategory { id: 1, name: "screw".into() }, CocoCategory { id: 2, name: "cover".into() }],
        }
    }

    #[test]
    fn ground_truth_replay_is_perfect() {
        let gt = dataset();
        let report = evaluate(&gt, &ground_truth_as_predictions(&gt), &rule_door_lock()).unwrap();
        assert_eq!((report.accuracy, report.precision, report.recall, report.map50), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(report.confusion, Confusion { tp: 2, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(report.per_class[1].ap, None);
        assert!(report.table().contains("mAP50"));
    }

    #[test]
    fn unknown_image_is_structural() {
        let gt = dataset();
        let det = Detection { image_id: 9, category_id: 1, bbox: [0.0, 0.0, 1.0, 1.0], score: 0.5 };
        assert!(matches!(evaluate(&gt, &[det], &rule_door_lock()), Err(Error::Structure(_))));
    }

    #[test]
    fn missed_screw_flips_the_verdict() {
        let gt = dataset();
        let mut preds = ground_truth_as_predictions(&gt);
        preds[1].score = 0.3;
        let report = evaluate(&gt, &preds, &rule_door_lock()).unwrap();
        assert_eq!(report.confusion.tp + report.confusion.fp, 3);
        assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.map50, 1.0);
    }

    #[test]
    fn rule_without_constraints_is_rejected() {
        let r = UseCaseRule { required: BTreeMap::new(), ..rule_door_lock() };
        assert!(r.validate().is_err());
    }
}
