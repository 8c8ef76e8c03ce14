//! Action-matching and parameter-recovery metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::PROB_EPS;
use crate::data::Trajectory;
use crate::error::{Error, Result};
use crate::model::ActionModel;

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: scores.len(), got: labels.len() });
        }
        if scores.is_empty() {
            return Err(Error::InvalidArgument("empty scored set".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("NaN score".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Indices sorted by descending score.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let pos = set.positives();
    let neg = set.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!("{pos} positives, {neg} negatives")));
    }
    // Mann–Whitney: each tie group contributes pos·neg pairs at weight ½.
    let idx = set.descending();
    let mut wins = 0.0;
    let mut neg_above = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let s = set.scores[idx[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < idx.len() && set.scores[idx[j]] == s {
            if set.labels[idx[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        // positives in this group beat every negative strictly below them
        let below = neg - neg_above - gn;
        wins += gp as f64 * below as f64 + 0.5 * gp as f64 * gn as f64;
        neg_above += gn;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Average precision `Σ (R_i − R_{i−1}) P_i` over descending unique thresholds.
pub fn auprc(set: &ScoredSet) -> Result<f64> {
    let pos = set.positives();
    if pos == 0 {
        return Err(Error::SingleClass("no positive labels".into()));
    }
    let idx = set.descending();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = set.scores[idx[i]];
        while i < idx.len() && set.scores[idx[i]] == s {
            if set.labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mean squared error between probabilities and labels.
pub fn brier(set: &ScoredSet) -> Result<f64> {
    if let Some(s) = set.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
    }
    let n = set.scores.len() as f64;
    Ok(set
        .scores
        .iter()
        .zip(&set.labels)
        .map(|(s, &l)| (s - f64::from(l)).powi(2))
        .sum::<f64>()
        / n)
}

/// Mean binary cross-entropy with the same clamp as training.
pub fn cross_entropy(set: &ScoredSet) -> Result<f64> {
    brier(set)?;
    let n = set.scores.len() as f64;
    Ok(set
        .scores
        .iter()
        .zip(&set.labels)
        .map(|(s, &l)| {
            let q = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if l == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum::<f64>()
        / n)
}

/// Estimated values paired with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryPair {
    estimated: Vec<f64>,
    truth: Vec<f64>,
}

impl RecoveryPair {
    pub fn new(estimated: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        if estimated.len() != truth.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), got: estimated.len() });
        }
        if estimated.len() < 2 {
            return Err(Error::InvalidArgument("need at least two pairs".into()));
        }
        Ok(Self { estimated, truth })
    }
}

/// Product-moment correlation, accumulated in one pass with Welford updates.
pub fn pearson(pair: &RecoveryPair) -> Result<f64> {
    let (mut mx, mut my) = (0.0, 0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (k, (&x, &y)) in pair.estimated.iter().zip(&pair.truth).enumerate() {
        let n = (k + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::ZeroVariance("estimated values".into()));
    }
    if !(syy > 0.0) {
        return Err(Error::ZeroVariance("true values".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One metric aggregated over runs; `mean` is `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n_runs: usize,
}

/// `{metric: {mean, stderr, n_runs}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub const AUROC: &str = "auroc";
pub const AUPRC: &str = "auprc";
pub const BRIER: &str = "brier";
pub const CROSS_ENTROPY: &str = "cross_entropy";
pub const PEARSON_PROBABILITY: &str = "pearson_probability";
pub const PEARSON_COEFFICIENT: &str = "pearson_coefficient";

impl EvalReport {
    pub fn single(values: &BTreeMap<String, Option<f64>>) -> Self {
        let metrics = values
            .iter()
            .map(|(k, v)| (k.clone(), MetricSummary { mean: *v, stderr: None, n_runs: usize::from(v.is_some()) }))
            .collect();
        Self { metrics }
    }

    /// Mean and standard error (sample sd / √n) of each metric over runs,
    /// skipping runs where the metric was undefined.
    pub fn aggregate(runs: &[BTreeMap<String, Option<f64>>]) -> Self {
        let mut names: Vec<&String> = runs.iter().flat_map(|r| r.keys()).collect();
        names.sort();
        names.dedup();
        let metrics = names
            .into_iter()
            .map(|name| {
                let vals: Vec<f64> = runs.iter().filter_map(|r| r.get(name).copied().flatten()).collect();
                let n = vals.len();
                let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
                let stderr = (n > 1).then(|| {
                    let m = mean.expect("n > 0");
                    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                });
                (name.clone(), MetricSummary { mean, stderr, n_runs: n })
            })
            .collect();
        Self { metrics }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(|m| m.mean)
    }
}

/// AUROC, AUPRC, Brier and cross-entropy of `model` on the demonstrated actions.
pub fn action_matching<M: ActionModel + ?Sized>(
    model: &M,
    data: &[Trajectory],
) -> Result<BTreeMap<String, Option<f64>>> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for tr in data {
        scores.extend(model.action_probabilities(tr)?);
        labels.extend(&tr.actions);
    }
    let set = ScoredSet::new(scores, labels)?;
    let mut out = BTreeMap::new();
    out.insert(AUROC.to_string(), Some(auroc(&set)?));
    out.insert(AUPRC.to_string(), Some(auprc(&set)?));
    out.insert(BRIER.to_string(), Some(brier(&set)?));
    out.insert(CROSS_ENTROPY.to_string(), Some(cross_entropy(&set)?));
    Ok(out)
}

/// Pooled correlations of estimated vs. true action probabilities and
/// coefficients over every (trajectory, step) of a labeled holdout.
/// Correlations with zero variance on either side are reported as `None`.
pub fn recovery_values<M: ActionModel + ?Sized>(
    model: &M,
    holdout: &[Trajectory],
) -> Result<BTreeMap<String, Option<f64>>> {
    let (mut p_est, mut p_true) = (Vec::new(), Vec::new());
    let (mut c_est, mut c_true) = (Vec::new(), Vec::new());
    for tr in holdout {
        let truth = tr.truth.as_ref().ok_or_else(|| Error::MissingTruth(tr.id.clone()))?;
        p_est.extend(model.action_probabilities(tr)?);
        p_true.extend(truth.iter().map(|s| s.p));
        for (est, tru) in model.coefficients(tr)?.iter().zip(truth) {
            for (e, t) in est.iter().zip(&tru.theta) {
                c_est.push(*e);
                c_true.push(*t);
            }
        }
    }
    let corr = |e: Vec<f64>, t: Vec<f64>| -> Result<Option<f64>> {
        if e.len() < 2 {
            return Ok(None);
        }
        match pearson(&RecoveryPair::new(e, t)?) {
            Ok(r) => Ok(Some(r)),
            Err(Error::ZeroVariance(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut out = BTreeMap::new();
    out.insert(PEARSON_PROBABILITY.to_string(), corr(p_est, p_true)?);
    out.insert(PEARSON_COEFFICIENT.to_string(), corr(c_est, c_true)?);
    Ok(out)
}

/// Action-matching plus recovery metrics as a single-run report.
pub fn recovery_report<M: ActionModel + ?Sized>(model: &M, holdout: &[Trajectory]) -> Result<EvalReport> {
    let mut vals = recovery_values(model, holdout)?;
    vals.extend(action_matching(model, holdout)?);
    Ok(EvalReport::single(&vals))
}
