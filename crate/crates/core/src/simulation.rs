//! Synthetic-oracle studies: an expert stand-in that knows every true label
//! (optionally blurred by Gaussian judgment noise) answers questionnaires, so
//! the whole choice-to-score path can be checked against ground truth.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ProfileId;
use crate::choice::{choice_variance, expected_choice, scores_from_study, ChoiceResponse, MeanChoice};
use crate::error::{Error, Result};
use crate::prior::LabelPrior;
use crate::questionnaire::{generate_extended, plan_study, random_questionnaires, ChoiceSet, Questionnaire};
use crate::rng::{child_stream, derive_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub prior: LabelPrior,
    /// Standard deviation of the per-judgment label noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn exact(prior: LabelPrior, seed: u64) -> Self {
        Self { prior, noise_sigma: 0.0, seed }
    }
}

/// Picks most/least members of `set` from (noisy) true labels. Ties are
/// broken uniformly at random.
pub fn oracle_respond<R: Rng + ?Sized>(
    questionnaire_index: usize,
    set: &ChoiceSet,
    labels: &BTreeMap<ProfileId, f64>,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ChoiceResponse> {
    if set.member_ids.len() < 2 {
        return Err(Error::Input("a choice set needs at least two members".into()));
    }
    let noise = (noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise_sigma))
        .transpose()
        .map_err(|e| Error::Input(format!("noise sigma {noise_sigma}: {e}")))?;
    let values: Vec<f64> = set
        .member_ids
        .iter()
        .map(|id| {
            let y = *labels
                .get(id)
                .ok_or_else(|| Error::Input(format!("profile {id} has no true label")))?;
            Ok(match &noise {
                Some(dist) => y + dist.sample(rng),
                None => y,
            })
        })
        .collect::<Result<_>>()?;

    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = (0..values.len()).filter(|&i| values[i] == max).collect();
    let most = top[rng.random_range(0..top.len())];
    let min = (0..values.len())
        .filter(|&i| i != most)
        .map(|i| values[i])
        .fold(f64::INFINITY, f64::min);
    let bottom: Vec<usize> = (0..values.len()).filter(|&i| i != most && values[i] == min).collect();
    let least = bottom[rng.random_range(0..bottom.len())];
    Ok(ChoiceResponse {
        questionnaire_index,
        set_index: set.set_index,
        most_id: set.member_ids[most],
        least_id: set.member_ids[least],
    })
}

/// Stateful oracle carrying its own seeded stream.
#[derive(Debug, Clone)]
pub struct Oracle {
    noise_sigma: f64,
    rng: StreamRng,
}

impl Oracle {
    pub fn new(config: &OracleConfig) -> Result<Self> {
        if !(config.noise_sigma.is_finite() && config.noise_sigma >= 0.0) {
            return Err(Error::Input(format!("noise sigma {} must be finite and >= 0", config.noise_sigma)));
        }
        Ok(Self { noise_sigma: config.noise_sigma, rng: child_stream(config.seed, 0x0AC1E) })
    }

    pub fn respond(
        &mut self,
        questionnaire_index: usize,
        set: &ChoiceSet,
        labels: &BTreeMap<ProfileId, f64>,
    ) -> Result<ChoiceResponse> {
        oracle_respond(questionnaire_index, set, labels, self.noise_sigma, &mut self.rng)
    }

    pub fn answer(&mut self, questionnaire: &Questionnaire, labels: &BTreeMap<ProfileId, f64>) -> Result<Vec<ChoiceResponse>> {
        questionnaire
            .sets
            .iter()
            .map(|set| self.respond(questionnaire.questionnaire_index, set, labels))
            .collect()
    }

    pub fn answer_all(&mut self, questionnaires: &[Questionnaire], labels: &BTreeMap<ProfileId, f64>) -> Result<Vec<ChoiceResponse>> {
        let mut out = Vec::new();
        for q in questionnaires {
            out.extend(self.answer(q, labels)?);
        }
        Ok(out)
    }
}

/// Outcome of one simulated study against known labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub true_labels: BTreeMap<ProfileId, f64>,
    pub mean_choices: MeanChoice,
    pub estimates: BTreeMap<ProfileId, f64>,
    pub rms_error: f64,
}

pub fn rms_error(truth: &BTreeMap<ProfileId, f64>, estimates: &BTreeMap<ProfileId, f64>) -> f64 {
    let sum: f64 = truth.iter().map(|(id, y)| (estimates[id] - y).powi(2)).sum();
    (sum / truth.len() as f64).sqrt()
}

/// Oracle answers every questionnaire; labels are recovered and scored.
pub fn run_oracle_study(
    true_labels: &BTreeMap<ProfileId, f64>,
    questionnaires: &[Questionnaire],
    config: &OracleConfig,
    set_size: usize,
) -> Result<StudyResult> {
    let mut oracle = Oracle::new(config)?;
    let responses = oracle.answer_all(questionnaires, true_labels)?;
    let table = scores_from_study(&responses, questionnaires, &config.prior, set_size)?;
    let estimates = table.labels();
    Ok(StudyResult {
        true_labels: true_labels.clone(),
        mean_choices: MeanChoice { values: table.mean_choices(), q: table.q },
        rms_error: rms_error(true_labels, &estimates),
        estimates,
    })
}

pub fn draw_labels(n: usize, prior: &LabelPrior, seed: u64) -> BTreeMap<ProfileId, f64> {
    let mut rng = child_stream(seed, 0x1AB);
    (0..n as ProfileId).map(|id| (id, prior.sample(&mut rng))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: ProfileId,
    pub y_true: f64,
    pub mean_choice: f64,
}

/// Labels drawn from `prior`, `q` random partitions, exact oracle.
pub fn scatter_study(n: usize, set_size: usize, q: usize, prior: &LabelPrior, seed: u64) -> Result<Vec<ScatterPoint>> {
    if q == 0 {
        return Err(Error::Input("scatter study needs at least one questionnaire".into()));
    }
    if set_size < 2 || !n.is_multiple_of(set_size) {
        return Err(Error::Input(format!("{n} profiles cannot be split into sets of {set_size}")));
    }
    let labels = draw_labels(n, prior, seed);
    let ids: Vec<ProfileId> = labels.keys().copied().collect();
    let questionnaires = random_questionnaires(&ids, set_size, q, derive_seed(seed, 1))?;
    let result = run_oracle_study(&labels, &questionnaires, &OracleConfig::exact(*prior, derive_seed(seed, 2)), set_size)?;
    Ok(labels
        .iter()
        .map(|(&id, &y)| ScatterPoint { id, y_true: y, mean_choice: result.mean_choices.values[&id] })
        .collect())
}

/// Share of scatter points within `k` standard errors of the expected-choice
/// curve, plus their mean absolute deviation from it.
pub fn envelope_check(points: &[ScatterPoint], prior: &LabelPrior, set_size: usize, q: usize, k: f64) -> (f64, f64) {
    let mut inside = 0usize;
    let mut abs_dev = 0.0;
    for p in points {
        let expected = expected_choice(p.y_true, prior, set_size);
        let bound = k * (choice_variance(p.y_true, prior, set_size) / q as f64).sqrt();
        let dev = (p.mean_choice - expected).abs();
        if dev <= bound + 1e-12 {
            inside += 1;
        }
        abs_dev += dev;
    }
    (inside as f64 / points.len() as f64, abs_dev / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    Random,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsCell {
    pub set_size: usize,
    /// Profiles used: `n` rounded down to a multiple of `set_size`.
    pub n_effective: usize,
    pub q: usize,
    pub mean_rms: f64,
    pub replicate_rms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsTable {
    pub cells: Vec<RmsCell>,
    /// Set sizes that could not be run, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl RmsTable {
    pub fn get(&self, set_size: usize, q: usize) -> Option<&RmsCell> {
        self.cells.iter().find(|c| c.set_size == set_size && c.q == q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsStudy {
    pub n: usize,
    pub set_sizes: Vec<usize>,
    pub q_values: Vec<usize>,
    pub prior: LabelPrior,
    pub strategy: PartitionStrategy,
    pub repeats: usize,
    pub noise_sigma: f64,
}

/// RMS label error for every (set size, questionnaire count) cell, averaged
/// over seeded replicates. Questionnaire counts share one nested sequence per
/// replicate, so larger `q` extends the smaller studies.
pub fn rms_study(study: &RmsStudy, seed: u64) -> Result<RmsTable> {
    if study.repeats == 0 {
        return Err(Error::Input("repeats must be at least 1".into()));
    }
    if study.q_values.contains(&0) {
        return Err(Error::Input("questionnaire counts must be positive".into()));
    }
    let max_q = study.q_values.iter().copied().max().unwrap_or(0);
    let mut skipped = Vec::new();
    let mut runnable = Vec::new();
    for &s in &study.set_sizes {
        if s < 2 || s > study.n {
            skipped.push((s, format!("set size {s} is unusable with {} profiles", study.n)));
        } else if study.strategy == PartitionStrategy::Group && (s != 4 || plan_study(study.n).is_err()) {
            skipped.push((s, format!("group strategy needs set size 4 and n = 4p, got s = {s}, n = {}", study.n)));
        } else {
            runnable.push(s);
        }
    }
    let jobs: Vec<(usize, usize)> = runnable
        .iter()
        .flat_map(|&s| (0..study.repeats).map(move |r| (s, r)))
        .collect();
    let results: Vec<((usize, usize), Vec<f64>)> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let rep_seed = derive_seed(derive_seed(seed, r as u64), s as u64);
            let mut labels = draw_labels(study.n, &study.prior, derive_seed(seed, r as u64));
            labels.retain(|&id, _| (id as usize) < study.n - study.n % s);
            let ids: Vec<ProfileId> = labels.keys().copied().collect();
            let questionnaires = match study.strategy {
                PartitionStrategy::Random => random_questionnaires(&ids, s, max_q, derive_seed(rep_seed, 1))?,
                PartitionStrategy::Group => generate_extended(&ids, &plan_study(study.n)?, max_q, derive_seed(rep_seed, 1))?,
            };
            let config = OracleConfig { prior: study.prior, noise_sigma: study.noise_sigma, seed: derive_seed(rep_seed, 2) };
            let mut oracle = Oracle::new(&config)?;
            let mut responses = Vec::new();
            let mut per_q = Vec::new();
            let mut answered = 0;
            let mut sorted_q = study.q_values.clone();
            sorted_q.sort_unstable();
            sorted_q.dedup();
            let mut rms_by_q = BTreeMap::new();
            for &q in &sorted_q {
                while answered < q {
                    responses.extend(oracle.answer(&questionnaires[answered], &labels)?);
                    answered += 1;
                }
                let table = scores_from_study(&responses, &questionnaires[..q], &study.prior, s)?;
                rms_by_q.insert(q, rms_error(&labels, &table.labels()));
            }
            for &q in &study.q_values {
                per_q.push(rms_by_q[&q]);
            }
            Ok(((s, r), per_q))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &s in &runnable {
        for (qi, &q) in study.q_values.iter().enumerate() {
            let replicate_rms: Vec<f64> = results
                .iter()
                .filter(|((cs, _), _)| *cs == s)
                .map(|(_, v)| v[qi])
                .collect();
            let mean_rms = replicate_rms.iter().sum::<f64>() / replicate_rms.len() as f64;
            cells.push(RmsCell { set_size: s, n_effective: study.n - study.n % s, q, mean_rms, replicate_rms });
        }
    }
    Ok(RmsTable { cells, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::encode_choices;

    fn set(ids: &[ProfileId]) -> ChoiceSet {
        ChoiceSet { set_index: 0, member_ids: ids.to_vec() }
    }

    #[test]
    fn exact_oracle_picks_extremes() {
        let labels = BTreeMap::from([(0, 0.9), (1, -0.2), (2, 0.1), (3, -0.8)]);
        let mut rng = child_stream(1, 0);
        let r = oracle_respond(0, &set(&[0, 1, 2, 3]), &labels, 0.0, &mut rng).unwrap();
        assert_eq!((r.most_id, r.least_id), (0, 3));
        let r2 = oracle_respond(0, &set(&[1, 2]), &labels, 0.0, &mut rng).unwrap();
        assert_eq!((r2.most_id, r2.least_id), (2, 1));
    }

    #[test]
    fn ties_are_broken_uniformly() {
        let labels: BTreeMap<ProfileId, f64> = (0..4).map(|i| (i, 0.3)).collect();
        let mut rng = child_stream(42, 0);
        let mut most = [0usize; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let r = oracle_respond(0, &set(&[0, 1, 2, 3]), &labels, 0.0, &mut rng).unwrap();
            assert_ne!(r.most_id, r.least_id);
            most[r.most_id as usize] += 1;
        }
        for count in most {
            let share = count as f64 / trials as f64;
            assert!((share - 0.25).abs() <= 0.02, "share {share}");
        }
    }

    #[test]
    fn missing_label_is_an_error() {
        let labels = BTreeMap::from([(0, 0.1)]);
        let mut rng = child_stream(0, 0);
        assert!(oracle_respond(0, &set(&[0, 1]), &labels, 0.0, &mut rng).is_err());
    }

    #[test]
    fn scatter_errors_and_conservation() {
        let u = LabelPrior::standard_uniform();
        assert!(matches!(scatter_study(8, 4, 0, &u, 0), Err(Error::Input(_))));
        // One set per questionnaire: exactly one +1 and one -1 each time.
        let pts = scatter_study(6, 6, 3, &u, 5).unwrap();
        let total: f64 = pts.iter().map(|p| p.mean_choice * 3.0).sum();
        assert!(total.abs() < 1e-12);
        let plus = pts.iter().filter(|p| (p.mean_choice - 1.0).abs() < 1e-12).count();
        let minus = pts.iter().filter(|p| (p.mean_choice + 1.0).abs() < 1e-12).count();
        assert_eq!((plus, minus), (1, 1));
    }

    #[test]
    fn pairwise_tally_matches_mean_choice() {
        // s = 2, exact oracle: mean choice = (wins - losses) / q.
        let u = LabelPrior::standard_uniform();
        for seed in 0..5 {
            let n = 12;
            let q = 9;
            let labels = draw_labels(n, &u, seed);
            let ids: Vec<ProfileId> = labels.keys().copied().collect();
            let qs = random_questionnaires(&ids, 2, q, seed + 100).unwrap();
            let result = run_oracle_study(&labels, &qs, &OracleConfig::exact(u, seed), 2).unwrap();
            let mut tally: BTreeMap<ProfileId, i32> = ids.iter().map(|&i| (i, 0)).collect();
            for qn in &qs {
                for s in &qn.sets {
                    let (a, b) = (s.member_ids[0], s.member_ids[1]);
                    let (w, l) = if labels[&a] > labels[&b] { (a, b) } else { (b, a) };
                    *tally.get_mut(&w).unwrap() += 1;
                    *tally.get_mut(&l).unwrap() -= 1;
                }
            }
            for id in ids {
                assert_eq!(result.mean_choices.values[&id], tally[&id] as f64 / q as f64);
            }
        }
    }

    #[test]
    fn deterministic_study() {
        let u = LabelPrior::standard_uniform();
        let labels = draw_labels(20, &u, 3);
        let ids: Vec<ProfileId> = labels.keys().copied().collect();
        let qs = random_questionnaires(&ids, 4, 6, 3).unwrap();
        let cfg = OracleConfig { prior: u, noise_sigma: 0.2, seed: 8 };
        assert_eq!(run_oracle_study(&labels, &qs, &cfg, 4).unwrap(), run_oracle_study(&labels, &qs, &cfg, 4).unwrap());
    }

    #[test]
    fn per_set_conservation_with_noise() {
        let labels = draw_labels(16, &LabelPrior::standard_uniform(), 1);
        let ids: Vec<ProfileId> = labels.keys().copied().collect();
        let qs = random_questionnaires(&ids, 4, 3, 2).unwrap();
        let mut oracle = Oracle::new(&OracleConfig { prior: LabelPrior::standard_uniform(), noise_sigma: 0.5, seed: 3 }).unwrap();
        let responses = oracle.answer_all(&qs, &labels).unwrap();
        let enc = encode_choices(&responses, &qs).unwrap();
        for (e, q) in enc.iter().zip(&qs) {
            for s in &q.sets {
                let sum: i32 = s.member_ids.iter().map(|id| i32::from(e.codes[id])).sum();
                assert_eq!(sum, 0);
            }
        }
    }

    #[test]
    fn rms_study_skips_incompatible_sizes() {
        let study = RmsStudy {
            n: 20,
            set_sizes: vec![3, 4],
            q_values: vec![2, 4],
            prior: LabelPrior::standard_uniform(),
            strategy: PartitionStrategy::Group,
            repeats: 2,
            noise_sigma: 0.0,
        };
        let table = rms_study(&study, 1).unwrap();
        assert_eq!(table.skipped.len(), 1);
        assert_eq!(table.cells.len(), 2);
        assert!(table.get(4, 4).unwrap().mean_rms.is_finite());
    }

    #[test]
    fn rms_study_truncates_to_a_multiple_of_set_size() {
        let study = RmsStudy {
            n: 20,
            set_sizes: vec![3, 25],
            q_values: vec![3],
            prior: LabelPrior::standard_uniform(),
            strategy: PartitionStrategy::Random,
            repeats: 2,
            noise_sigma: 0.0,
        };
        let table = rms_study(&study, 1).unwrap();
        assert_eq!(table.get(3, 3).unwrap().n_effective, 18);
        assert_eq!(table.skipped.len(), 1);
    }
}
