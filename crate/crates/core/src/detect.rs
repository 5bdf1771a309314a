//! Detection evaluation: confusion counts at a threshold, and ROC/AUC by
//! sweeping it. The positive class is "out of distribution".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with ground-truth labels (`true` = OOD).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("scores contain NaN".into()));
        }
        Ok(Self { scores, labels })
    }

    /// Concatenates an in-distribution cohort (negatives) and an OOD cohort.
    pub fn from_cohorts(in_dist: &[f64], ood: &[f64]) -> Result<Self> {
        let scores = in_dist.iter().chain(ood).copied().collect();
        let labels = std::iter::repeat_n(false, in_dist.len())
            .chain(std::iter::repeat_n(true, ood.len()))
            .collect();
        Self::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Same scores with every label flipped.
    pub fn negated_labels(&self) -> Self {
        Self {
            scores: self.scores.clone(),
            labels: self.labels.iter().map(|l| !l).collect(),
        }
    }
}

/// Rates are `None` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
    pub tau_used: f64,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Predicts OOD iff `score > tau`.
pub fn confusion_at(scores: &LabeledScores, tau: f64) -> Result<DetectionReport> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &ood) in scores.scores.iter().zip(&scores.labels) {
        match (s > tau, ood) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(DetectionReport {
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        auc: None,
        tau_used: tau,
    })
}

/// ROC polyline `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one vertex per
/// distinct score (thresholds swept from high to low).
pub fn roc_curve(scores: &LabeledScores) -> Result<Vec<(f64, f64)>> {
    let p = scores.positives();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores.scores[order[i]];
        while i < order.len() && scores.scores[order[i]] == s {
            if scores.labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(points)
}

/// Trapezoidal area under the ROC polyline.
pub fn roc_auc(scores: &LabeledScores) -> Result<f64> {
    let pts = roc_curve(scores)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Confusion at `tau` plus AUC when both classes are present.
pub fn evaluate(scores: &LabeledScores, tau: f64) -> Result<DetectionReport> {
    let mut report = confusion_at(scores, tau)?;
    report.auc = match roc_auc(scores) {
        Ok(a) => Some(a),
        Err(Error::DegenerateLabels) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}
