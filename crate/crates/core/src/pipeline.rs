//! Synthetic end-to-end run: ground-truth linear risk, D-optimal train and
//! test designs, questionnaire/oracle labeling, model fit and evaluation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeCatalog, ProfileId};
use crate::choice::{scores_from_study, ScoreTable};
use crate::design::{federov_exchange, Design, ExchangeParams};
use crate::error::{Error, Result};
use crate::prior::LabelPrior;
use crate::questionnaire::{generate_extended, plan_study, random_questionnaires, Questionnaire};
use crate::risk::{binarize_labels, evaluate, fit, roc_and_auc, tune_threshold, FitMode, Link, LinearScorer};
use crate::rng::{child_stream, derive_seed};
use crate::simulation::{Oracle, OracleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub catalog: AttributeCatalog,
    pub n_train: usize,
    pub n_test: usize,
    pub set_size: usize,
    pub questionnaires: usize,
    pub noise_sigma: f64,
    pub prior: LabelPrior,
    /// Standard deviation of ground-truth labels over random profiles.
    pub label_sd: f64,
    pub mode: FitMode,
    pub reg_lambda: f64,
    pub fnr_target: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            catalog: AttributeCatalog::stand_in(),
            n_train: 188,
            n_test: 52,
            set_size: 4,
            questionnaires: 20,
            noise_sigma: 0.1,
            prior: LabelPrior::standard_uniform(),
            label_sd: 0.5,
            mode: FitMode::Classification { cutoff: 0.0 },
            reg_lambda: crate::risk::DEFAULT_RIDGE_LAMBDA,
            fnr_target: 1e-3,
        }
    }
}

/// Random ground-truth scorer: standard normal weights over the coded
/// features, centred and scaled so random profiles have mean 0 and
/// standard deviation `label_sd`.
pub fn synthetic_ground_truth(catalog: &AttributeCatalog, label_sd: f64, seed: u64) -> LinearScorer {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = child_stream(seed, 0x7A0);
    let k = catalog.coded_dim() - 1;
    let raw: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut scorer = LinearScorer { weights: raw, bias: 0.0, link: Link::Identity };
    let mut draws = Vec::with_capacity(4096);
    let mut row = vec![0.0; catalog.coded_dim()];
    for _ in 0..4096 {
        let levels = catalog.random_levels(&mut rng);
        catalog.code_levels_into(&levels, &mut row);
        draws.push(scorer.linear(&row));
    }
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    let scale = label_sd / var.sqrt();
    scorer.weights.iter_mut().for_each(|w| *w *= scale);
    scorer.bias = -mean * scale;
    scorer
}

/// Questionnaires for a labeled design: the group cycle (extended with
/// random partitions) when `n = 4p`, otherwise random partitions.
pub fn study_questionnaires(ids: &[ProfileId], set_size: usize, q: usize, seed: u64) -> Result<Vec<Questionnaire>> {
    if set_size == crate::questionnaire::GROUP_SET_SIZE {
        if let Ok(plan) = plan_study(ids.len()) {
            return generate_extended(ids, &plan, q, seed);
        }
    }
    random_questionnaires(ids, set_size, q, seed)
}

/// Runs the oracle over a design's questionnaires and aggregates the
/// resulting choices into labels.
pub fn label_design(
    design: &Design,
    truth: &BTreeMap<ProfileId, f64>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ScoreTable> {
    let ids = design.ids();
    let qs = study_questionnaires(&ids, config.set_size, config.questionnaires, derive_seed(seed, 1))?;
    let mut oracle = Oracle::new(&OracleConfig {
        prior: config.prior,
        noise_sigma: config.noise_sigma,
        seed: derive_seed(seed, 2),
    })?;
    let responses = oracle.answer_all(&qs, truth)?;
    scores_from_study(&responses, &qs, &config.prior, config.set_size)
}

fn true_labels(design: &Design, truth: &LinearScorer) -> BTreeMap<ProfileId, f64> {
    design
        .profiles()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let row: Vec<f64> = design.coded_matrix().row(i).iter().copied().collect();
            (p.id, truth.score(&row))
        })
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub train_auc: f64,
    pub test_auc: f64,
    /// Test error at the threshold maximizing training accuracy.
    pub test_error: f64,
    pub accuracy_threshold: f64,
    pub fnr_threshold: f64,
    pub fnr_saturated: bool,
    pub test_error_at_fnr: f64,
    pub test_fnr_at_fnr: f64,
    pub weight_cosine: f64,
    /// Share of training labels above the cutoff.
    pub train_high_fraction: f64,
}

pub fn run_pipeline(config: &PipelineConfig, seed: u64) -> Result<PipelineReport> {
    let truth = synthetic_ground_truth(&config.catalog, config.label_sd, derive_seed(seed, 10));
    let train = federov_exchange(&config.catalog, &ExchangeParams::new(config.n_train), derive_seed(seed, 11))?;
    let test = federov_exchange(&config.catalog, &ExchangeParams::new(config.n_test), derive_seed(seed, 12))?
        .with_id_offset(config.n_train as ProfileId);
    let train_ids: HashSet<ProfileId> = train.ids().into_iter().collect();
    if test.ids().iter().any(|id| train_ids.contains(id)) {
        return Err(Error::Input("test profiles overlap the training design".into()));
    }

    let train_truth = true_labels(&train, &truth);
    let test_truth = true_labels(&test, &truth);
    let train_labels = label_design(&train, &train_truth, config, derive_seed(seed, 13))?.labels();

    let cutoff = match config.mode {
        FitMode::Classification { cutoff } => cutoff,
        FitMode::Regression => config.prior.median(),
    };
    let model = fit(&train, &train_labels, config.mode, config.reg_lambda)?;

    let train_scores = model.score_design(&train)?;
    let train_classes = binarize_labels(&train_labels, cutoff);
    let train_roc = roc_and_auc(&train_scores, &train_classes)?;
    let accuracy_threshold = train_roc.accuracy_optimal_threshold();
    let tuned = tune_threshold(&train_roc, config.fnr_target)?;

    let test_scores = model.score_design(&test)?;
    let test_classes = binarize_labels(&test_truth, cutoff);
    let at_accuracy = evaluate(&test_scores, &test_classes, accuracy_threshold)?;
    let at_fnr = evaluate(&test_scores, &test_classes, tuned.threshold)?;

    let high = train_classes.values().filter(|c| **c == crate::risk::RiskClass::High).count();
    Ok(PipelineReport {
        seed,
        train_auc: train_roc.auc,
        test_auc: at_accuracy.auc,
        test_error: at_accuracy.classification_error,
        accuracy_threshold,
        fnr_threshold: tuned.threshold,
        fnr_saturated: tuned.saturated,
        test_error_at_fnr: at_fnr.classification_error,
        test_fnr_at_fnr: at_fnr.fnr,
        weight_cosine: cosine_similarity(&model.weights, &truth.weights),
        train_high_fraction: high as f64 / train_classes.len() as f64,
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_is_standardized() {
        let cat = AttributeCatalog::stand_in();
        let truth = synthetic_ground_truth(&cat, 0.5, 3);
        assert_eq!(truth.weights.len(), cat.coded_dim() - 1);
        let mut rng = child_stream(99, 0);
        let mut row = vec![0.0; cat.coded_dim()];
        let scores: Vec<f64> = (0..20_000)
            .map(|_| {
                cat.code_levels_into(&cat.random_levels(&mut rng), &mut row);
                truth.score(&row)
            })
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64).sqrt();
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((sd - 0.5).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn questionnaire_choice_by_shape() {
        let ids: Vec<ProfileId> = (0..52).collect();
        let qs = study_questionnaires(&ids, 4, 20, 1).unwrap();
        assert_eq!(qs.len(), 20);
        assert_eq!(qs[12].source, crate::questionnaire::QuestionnaireSource::Group);
        assert_eq!(qs[13].source, crate::questionnaire::QuestionnaireSource::Random);
        let ids: Vec<ProfileId> = (0..30).collect();
        let qs = study_questionnaires(&ids, 3, 5, 1).unwrap();
        assert!(qs.iter().all(|q| q.source == crate::questionnaire::QuestionnaireSource::Random));
    }
}
