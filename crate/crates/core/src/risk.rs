//! Linear risk scorer: ridge regression or logistic regression on coded
//! profiles, ROC/AUC evaluation, and false-negative-rate threshold tuning.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::ProfileId;
use crate::design::Design;
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
const IRLS_MAX_ITER: usize = 100;
const IRLS_STEP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

/// `link(bias + w . x)` over the non-intercept coded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub link: Link,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LinearScorer {
    /// Linear predictor for a coded row whose first entry is the intercept.
    pub fn linear(&self, coded_row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(&coded_row[1..]).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn score(&self, coded_row: &[f64]) -> f64 {
        let eta = self.linear(coded_row);
        match self.link {
            Link::Identity => eta,
            Link::Logistic => sigmoid(eta),
        }
    }

    pub fn score_design(&self, design: &Design) -> Result<BTreeMap<ProfileId, f64>> {
        let x = design.coded_matrix();
        if x.ncols() != self.weights.len() + 1 {
            return Err(Error::Schema(format!(
                "scorer has {} weights, design codes {} features",
                self.weights.len(),
                x.ncols() - 1
            )));
        }
        Ok(design
            .profiles()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                (p.id, self.score(&row))
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskClass {
    Low,
    High,
}

/// `High` when strictly above `cutoff`.
pub fn binarize_labels(scores: &BTreeMap<ProfileId, f64>, cutoff: f64) -> BTreeMap<ProfileId, RiskClass> {
    scores
        .iter()
        .map(|(&id, &y)| (id, if y > cutoff { RiskClass::High } else { RiskClass::Low }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FitMode {
    /// Ridge least squares on the continuous labels.
    Regression,
    /// Logistic regression on labels binarized at `cutoff`.
    Classification { cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Penalized objective after each accepted step (logistic only).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fit(design: &Design, labels: &BTreeMap<ProfileId, f64>, mode: FitMode, reg_lambda: f64) -> Result<LinearScorer> {
    fit_traced(design, labels, mode, reg_lambda).map(|(s, _)| s)
}

pub fn fit_traced(
    design: &Design,
    labels: &BTreeMap<ProfileId, f64>,
    mode: FitMode,
    reg_lambda: f64,
) -> Result<(LinearScorer, FitTrace)> {
    if !(reg_lambda.is_finite() && reg_lambda >= 0.0) {
        return Err(Error::Input(format!("ridge lambda {reg_lambda} must be finite and >= 0")));
    }
    let x = design.coded_matrix();
    let y = DVector::from_iterator(
        design.len(),
        design
            .profiles()
            .iter()
            .map(|p| {
                labels
                    .get(&p.id)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("profile {} has no label", p.id)))
            })
            .collect::<Result<Vec<f64>>>()?,
    );
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("labels must be finite".into()));
    }
    match mode {
        FitMode::Regression => {
            let beta = ridge(x, &y, reg_lambda)?;
            Ok((
                to_scorer(&beta, Link::Identity),
                FitTrace { objective: Vec::new(), iterations: 1, converged: true },
            ))
        }
        FitMode::Classification { cutoff } => {
            let targets = y.map(|v| if v > cutoff { 1.0 } else { 0.0 });
            let positives = targets.sum();
            if positives == 0.0 || positives == targets.len() as f64 {
                return Err(Error::DegenerateLabels(format!(
                    "all labels fall on one side of cutoff {cutoff}"
                )));
            }
            let (beta, trace) = logistic_irls(x, &targets, reg_lambda)?;
            Ok((to_scorer(&beta, Link::Logistic), trace))
        }
    }
}

fn to_scorer(beta: &DVector<f64>, link: Link) -> LinearScorer {
    LinearScorer { bias: beta[0], weights: beta.iter().skip(1).copied().collect(), link }
}

/// Ridge solution with an unpenalized intercept, via QR of the augmented
/// system `[X; sqrt(lambda) P] beta = [y; 0]`.
fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let (n, m) = x.shape();
    let extra = if lambda > 0.0 { m - 1 } else { 0 };
    let mut a = DMatrix::zeros(n + extra, m);
    a.rows_mut(0, n).copy_from(x);
    let mut b = DVector::zeros(n + extra);
    b.rows_mut(0, n).copy_from(y);
    for j in 0..extra {
        a[(n + j, j + 1)] = lambda.sqrt();
    }
    if a.nrows() < m {
        return Err(Error::Rank(format!("{n} rows for {m} coefficients; use lambda > 0")));
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..m).any(|i| r[(i, i)].abs() <= scale * 1e-12) {
        return Err(Error::Rank("design matrix is rank deficient; use lambda > 0".into()));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Rank("triangular solve failed; use lambda > 0".into()))
}

fn logistic_objective(x: &DMatrix<f64>, t: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = x * beta;
    let nll: f64 = eta
        .iter()
        .zip(t.iter())
        .map(|(&e, &ti)| {
            // log(1 + exp(e)) - t * e, stable for large |e|.
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            softplus - ti * e
        })
        .sum();
    let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    nll + 0.5 * lambda * penalty
}

/// Damped Newton / IRLS for the ridge-penalized logistic likelihood.
fn logistic_irls(x: &DMatrix<f64>, t: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, FitTrace)> {
    let m = x.ncols();
    let mut beta = DVector::zeros(m);
    let mut obj = logistic_objective(x, t, &beta, lambda);
    let mut objective = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let eta = x * &beta;
        let p = eta.map(sigmoid);
        let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
        let mut grad = x.transpose() * (&p - t);
        let mut hess = x.transpose() * DMatrix::from_diagonal(&w) * x;
        for j in 1..m {
            grad[j] += lambda * beta[j];
            hess[(j, j)] += lambda;
        }
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::Rank("logistic Hessian is singular; use lambda > 0".into()))?;
        let full_step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta - &full_step * scale;
            let cand_obj = logistic_objective(x, t, &candidate, lambda);
            if cand_obj <= obj {
                accepted = Some((candidate, cand_obj));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_obj)) = accepted else {
            converged = true;
            break;
        };
        let step_norm = (&next - &beta).norm();
        beta = next;
        obj = next_obj;
        objective.push(obj);
        if step_norm < IRLS_STEP_TOL {
            converged = true;
            break;
        }
    }
    Ok((beta, FitTrace { objective, iterations, converged }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Profiles scoring `>= threshold` are classified high.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve in descending threshold order, starting at `(+inf, 0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    pub fn accuracy_at(&self, point: &RocPoint) -> f64 {
        let tp = point.tpr * self.positives as f64;
        let tn = (1.0 - point.fpr) * self.negatives as f64;
        (tp + tn) / (self.positives + self.negatives) as f64
    }

    /// Threshold with the highest accuracy (largest threshold on ties).
    pub fn accuracy_optimal_threshold(&self) -> f64 {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if self.accuracy_at(p) > self.accuracy_at(best) + 1e-15 {
                best = p;
            }
        }
        best.threshold
    }
}

pub fn roc_and_auc(scores: &BTreeMap<ProfileId, f64>, truth: &BTreeMap<ProfileId, RiskClass>) -> Result<RocCurve> {
    let mut pairs: Vec<(f64, RiskClass)> = truth
        .iter()
        .map(|(id, &class)| {
            let s = scores
                .get(id)
                .copied()
                .ok_or_else(|| Error::Input(format!("profile {id} has no score")))?;
            if s.is_nan() {
                return Err(Error::Input(format!("profile {id} has a NaN score")));
            }
            Ok((s, class))
        })
        .collect::<Result<_>>()?;
    let positives = pairs.iter().filter(|(_, c)| *c == RiskClass::High).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels("ROC needs both classes present".into()));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == threshold {
            match pairs[i].1 {
                RiskClass::High => tp += 1,
                RiskClass::Low => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum();
    Ok(RocCurve { points, auc, positives, negatives })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedThreshold {
    pub threshold: f64,
    pub fnr: f64,
    /// Set when only classify-everything-high meets the target.
    pub saturated: bool,
}

/// Largest threshold whose empirical false-negative rate is within target.
pub fn tune_threshold(roc: &RocCurve, fnr_target: f64) -> Result<TunedThreshold> {
    if !(fnr_target > 0.0 && fnr_target <= 1.0) {
        return Err(Error::Input(format!("FNR target {fnr_target} outside (0, 1]")));
    }
    let last = roc.points.len() - 1;
    for (i, p) in roc.points.iter().enumerate() {
        let fnr = 1.0 - p.tpr;
        if fnr <= fnr_target + 1e-15 {
            return Ok(TunedThreshold { threshold: p.threshold, fnr, saturated: i == last });
        }
    }
    let p = roc.points[last];
    Ok(TunedThreshold { threshold: p.threshold, fnr: 1.0 - p.tpr, saturated: true })
}

/// Metrics of a scorer at one operating threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub roc: RocCurve,
    pub auc: f64,
    pub classification_error: f64,
    pub fnr: f64,
    pub threshold: f64,
}

pub fn evaluate(
    scores: &BTreeMap<ProfileId, f64>,
    truth: &BTreeMap<ProfileId, RiskClass>,
    threshold: f64,
) -> Result<EvalReport> {
    let roc = roc_and_auc(scores, truth)?;
    let mut errors = 0usize;
    let mut false_neg = 0usize;
    for (id, class) in truth {
        let predicted_high = scores[id] >= threshold;
        match (class, predicted_high) {
            (RiskClass::High, false) => {
                errors += 1;
                false_neg += 1;
            }
            (RiskClass::Low, true) => errors += 1,
            _ => {}
        }
    }
    Ok(EvalReport {
        auc: roc.auc,
        classification_error: errors as f64 / truth.len() as f64,
        fnr: false_neg as f64 / roc.positives as f64,
        threshold,
        roc,
    })
}
