//! From most/least choices to absolute-scale labels.
//!
//! Each answered set encodes its most-risky member as `+1`, its least-risky
//! member as `-1` and the rest as `0`; the per-profile average over `q`
//! questionnaires is the mean choice. Under a label prior with cdf `F`, the
//! expected choice of a profile with label `y` in a set of size `s` is
//!
//! ```text
//! <c(y)> = F(y)^(s-1) - (1 - F(y))^(s-1)
//! ```
//!
//! which is strictly increasing on the prior's support, so labels are
//! recovered by bisection on the mean choice.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::ProfileId;
use crate::error::{Error, Result};
use crate::prior::{bisect_increasing, LabelPrior};
use crate::questionnaire::Questionnaire;

/// One expert answer for one choice set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceResponse {
    pub questionnaire_index: usize,
    pub set_index: usize,
    pub most_id: ProfileId,
    pub least_id: ProfileId,
}

/// Per-profile `{-1, 0, +1}` codes for one fully answered questionnaire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionnaireEncoding {
    pub questionnaire_index: usize,
    pub codes: BTreeMap<ProfileId, i8>,
}

/// Checks a response against the set it answers.
pub fn validate_response(set_members: &[ProfileId], most_id: ProfileId, least_id: ProfileId) -> Result<()> {
    if most_id == least_id {
        return Err(Error::InvalidResponse(format!(
            "most and least risky must differ (both {most_id})"
        )));
    }
    for id in [most_id, least_id] {
        if !set_members.contains(&id) {
            return Err(Error::InvalidResponse(format!("profile {id} is not in the choice set")));
        }
    }
    Ok(())
}

pub fn encode_choices(
    responses: &[ChoiceResponse],
    questionnaires: &[Questionnaire],
) -> Result<Vec<QuestionnaireEncoding>> {
    let by_index: HashMap<usize, &Questionnaire> =
        questionnaires.iter().map(|q| (q.questionnaire_index, q)).collect();
    let mut answers: HashMap<(usize, usize), &ChoiceResponse> = HashMap::with_capacity(responses.len());
    for r in responses {
        let q = by_index.get(&r.questionnaire_index).ok_or_else(|| {
            Error::InvalidResponse(format!("unknown questionnaire {}", r.questionnaire_index))
        })?;
        let set = q.sets.get(r.set_index).ok_or_else(|| {
            Error::InvalidResponse(format!(
                "questionnaire {} has no set {}",
                r.questionnaire_index, r.set_index
            ))
        })?;
        validate_response(&set.member_ids, r.most_id, r.least_id)?;
        if answers.insert((r.questionnaire_index, r.set_index), r).is_some() {
            return Err(Error::IncompleteQuestionnaire(format!(
                "duplicate response for questionnaire {} set {}",
                r.questionnaire_index, r.set_index
            )));
        }
    }
    questionnaires
        .iter()
        .map(|q| {
            let mut codes = BTreeMap::new();
            for set in &q.sets {
                let r = answers.get(&(q.questionnaire_index, set.set_index)).ok_or_else(|| {
                    Error::IncompleteQuestionnaire(format!(
                        "questionnaire {} is missing a response for set {}",
                        q.questionnaire_index, set.set_index
                    ))
                })?;
                for &id in &set.member_ids {
                    let code = if id == r.most_id {
                        1
                    } else if id == r.least_id {
                        -1
                    } else {
                        0
                    };
                    if codes.insert(id, code).is_some() {
                        return Err(Error::Input(format!(
                            "profile {id} appears twice in questionnaire {}",
                            q.questionnaire_index
                        )));
                    }
                }
            }
            Ok(QuestionnaireEncoding { questionnaire_index: q.questionnaire_index, codes })
        })
        .collect()
}

/// Per-profile average of the choice codes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanChoice {
    pub values: BTreeMap<ProfileId, f64>,
    pub q: usize,
}

impl MeanChoice {
    pub fn get(&self, id: ProfileId) -> Option<f64> {
        self.values.get(&id).copied()
    }
}

pub fn mean_choice(encodings: &[QuestionnaireEncoding]) -> Result<MeanChoice> {
    let first = encodings
        .first()
        .ok_or_else(|| Error::Input("mean choice needs at least one questionnaire".into()))?;
    let mut sums: BTreeMap<ProfileId, i64> = first.codes.keys().map(|&id| (id, 0)).collect();
    for enc in encodings {
        if enc.codes.len() != sums.len() {
            return Err(Error::Input(format!(
                "questionnaire {} covers a different profile set",
                enc.questionnaire_index
            )));
        }
        for (id, &code) in &enc.codes {
            let total = sums.get_mut(id).ok_or_else(|| {
                Error::Input(format!(
                    "questionnaire {} covers a different profile set",
                    enc.questionnaire_index
                ))
            })?;
            *total += i64::from(code);
        }
    }
    let q = encodings.len();
    Ok(MeanChoice {
        values: sums.into_iter().map(|(id, s)| (id, s as f64 / q as f64)).collect(),
        q,
    })
}

/// Probabilities that a label `y` is the maximum / minimum of its set.
pub fn extreme_probabilities(y: f64, prior: &LabelPrior, set_size: usize) -> (f64, f64) {
    let k = set_size.saturating_sub(1) as i32;
    (prior.cdf(y).powi(k), prior.survival(y).powi(k))
}

/// Expected choice `F(y)^(s-1) - (1 - F(y))^(s-1)`.
pub fn expected_choice(y: f64, prior: &LabelPrior, set_size: usize) -> f64 {
    let (p_max, p_min) = extreme_probabilities(y, prior, set_size);
    p_max - p_min
}

/// Variance of a single questionnaire's code for label `y`.
pub fn choice_variance(y: f64, prior: &LabelPrior, set_size: usize) -> f64 {
    let (p_max, p_min) = extreme_probabilities(y, prior, set_size);
    let mean = p_max - p_min;
    (p_max + p_min - mean * mean).max(0.0)
}

/// Label whose expected choice equals `mean_choice`.
///
/// Saturated values map to the inversion bounds: the support edges for a
/// uniform prior, the `1e-12` / `1 - 1e-12` quantiles for a normal prior.
pub fn invert_choice(mean_choice: f64, prior: &LabelPrior, set_size: usize) -> Result<f64> {
    if set_size < 2 {
        return Err(Error::Input(format!("set size {set_size} is below 2")));
    }
    if mean_choice.is_nan() || mean_choice.abs() > 1.0 {
        return Err(Error::Input(format!("mean choice {mean_choice} outside [-1, 1]")));
    }
    let (lo, hi) = prior.inversion_bounds();
    if mean_choice == 1.0 {
        return Ok(hi);
    }
    if mean_choice == -1.0 {
        return Ok(lo);
    }
    Ok(bisect_increasing(|y| expected_choice(y, prior, set_size), mean_choice, lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: ProfileId,
    pub mean_choice: f64,
    pub label: f64,
}

/// Recovered labels for every profile of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub q: usize,
    pub set_size: usize,
    pub prior: LabelPrior,
    pub entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    pub fn labels(&self) -> BTreeMap<ProfileId, f64> {
        self.entries.iter().map(|e| (e.id, e.label)).collect()
    }

    pub fn mean_choices(&self) -> BTreeMap<ProfileId, f64> {
        self.entries.iter().map(|e| (e.id, e.mean_choice)).collect()
    }
}

/// Encode, average and invert: the full choice-to-score conversion.
pub fn scores_from_study(
    responses: &[ChoiceResponse],
    questionnaires: &[Questionnaire],
    prior: &LabelPrior,
    set_size: usize,
) -> Result<ScoreTable> {
    if let Some(q) = questionnaires.iter().find(|q| q.set_size() != set_size) {
        return Err(Error::Input(format!(
            "questionnaire {} uses sets of {}, expected {set_size}",
            q.questionnaire_index,
            q.set_size()
        )));
    }
    let encodings = encode_choices(responses, questionnaires)?;
    let mean = mean_choice(&encodings)?;
    scores_from_mean_choice(&mean, prior, set_size)
}

pub fn scores_from_mean_choice(mean: &MeanChoice, prior: &LabelPrior, set_size: usize) -> Result<ScoreTable> {
    let entries = mean
        .values
        .iter()
        .map(|(&id, &c)| {
            Ok(ScoreEntry { id, mean_choice: c, label: invert_choice(c, prior, set_size)? })
        })
        .collect::<Result<_>>()?;
    Ok(ScoreTable { q: mean.q, set_size, prior: *prior, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::questionnaire::{ChoiceSet, QuestionnaireSource};
    use approx::assert_abs_diff_eq;

    fn one_set_questionnaire(index: usize, members: &[ProfileId]) -> Questionnaire {
        Questionnaire {
            questionnaire_index: index,
            source: QuestionnaireSource::Random,
            sets: vec![ChoiceSet { set_index: 0, member_ids: members.to_vec() }],
        }
    }

    fn response(q: usize, most: ProfileId, least: ProfileId) -> ChoiceResponse {
        ChoiceResponse { questionnaire_index: q, set_index: 0, most_id: most, least_id: least }
    }

    #[test]
    fn encode_set_of_four() {
        let q = one_set_questionnaire(0, &[10, 11, 12, 13]);
        let enc = encode_choices(&[response(0, 10, 13)], &[q]).unwrap();
        let codes: Vec<i8> = enc[0].codes.values().copied().collect();
        assert_eq!(codes, vec![1, 0, 0, -1]);
    }

    #[test]
    fn encode_set_of_two() {
        let q = one_set_questionnaire(0, &[1, 2]);
        let enc = encode_choices(&[response(0, 1, 2)], &[q]).unwrap();
        assert_eq!(enc[0].codes[&1], 1);
        assert_eq!(enc[0].codes[&2], -1);
    }

    #[test]
    fn encode_rejects_bad_responses() {
        let q = one_set_questionnaire(0, &[1, 2, 3, 4]);
        let foreign = encode_choices(&[response(0, 1, 9)], std::slice::from_ref(&q));
        assert!(matches!(foreign, Err(Error::InvalidResponse(_))));
        let same = encode_choices(&[response(0, 2, 2)], std::slice::from_ref(&q));
        assert!(matches!(same, Err(Error::InvalidResponse(_))));
        let missing = encode_choices(&[], std::slice::from_ref(&q));
        assert!(matches!(missing, Err(Error::IncompleteQuestionnaire(_))));
        let dup = encode_choices(&[response(0, 1, 2), response(0, 1, 3)], &[q]);
        assert!(matches!(dup, Err(Error::IncompleteQuestionnaire(_))));
    }

    fn encoding(codes: &[i8]) -> Vec<QuestionnaireEncoding> {
        codes
            .iter()
            .enumerate()
            .map(|(i, &c)| QuestionnaireEncoding {
                questionnaire_index: i,
                codes: BTreeMap::from([(7, c)]),
            })
            .collect()
    }

    #[test]
    fn mean_choice_arithmetic() {
        assert_eq!(mean_choice(&encoding(&[1, 1, 1, 1, 1])).unwrap().get(7), Some(1.0));
        assert_eq!(mean_choice(&encoding(&[1, -1, 0, 0])).unwrap().get(7), Some(0.0));
        let m = mean_choice(&encoding(&[1, 1, 0, -1, 1])).unwrap();
        assert_abs_diff_eq!(m.get(7).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(m.q, 5);
        assert!(matches!(mean_choice(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn expected_choice_uniform_examples() {
        let u = LabelPrior::standard_uniform();
        assert_abs_diff_eq!(expected_choice(0.0, &u, 4), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_choice(0.6, &u, 2), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_choice(0.5, &u, 4), 0.406_25, epsilon = 1e-15);
    }

    /// Closed form for the uniform(-1, 1) prior, written out independently.
    fn uniform_closed_form(y: f64, s: usize) -> f64 {
        (y / 2.0 + 0.5).powi(s as i32 - 1) - (-y / 2.0 + 0.5).powi(s as i32 - 1)
    }

    #[test]
    fn uniform_forward_matches_closed_form() {
        let u = LabelPrior::standard_uniform();
        for s in 2..=6 {
            for k in 0..=40 {
                let y = -1.0 + k as f64 / 20.0;
                assert_abs_diff_eq!(expected_choice(y, &u, s), uniform_closed_form(y, s), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn inversion_examples() {
        let u = LabelPrior::standard_uniform();
        let n = LabelPrior::normal(0.0, 2.0).unwrap();
        assert_abs_diff_eq!(invert_choice(0.0, &u, 4).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(invert_choice(0.0, &n, 4).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(invert_choice(0.406_25, &u, 4).unwrap(), 0.5, epsilon = 1e-12);
        // Independent oracle: bisection on u^3 - (1-u)^3 = 0.875, y = 2u - 1.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) - (1.0 - mid).powi(3) < 0.875 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 2.0 * lo - 1.0;
        // Cardano root of y^3 + 3y - 3.5 = 0, the same equation in y.
        let disc = (1.75f64 * 1.75 + 1.0).sqrt();
        let cardano = (1.75 + disc).cbrt() + (1.75 - disc).cbrt();
        assert_abs_diff_eq!(oracle, cardano, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 0.912_991_18, epsilon = 1e-8);
        let y = invert_choice(0.875, &u, 4).unwrap();
        assert_abs_diff_eq!(y, oracle, epsilon = 1e-12);
        assert!((expected_choice(y, &u, 4) - 0.875).abs() <= 1e-9);
    }

    #[test]
    fn inversion_boundaries_and_errors() {
        let u = LabelPrior::standard_uniform();
        assert_eq!(invert_choice(1.0, &u, 4).unwrap(), 1.0);
        assert_eq!(invert_choice(-1.0, &u, 4).unwrap(), -1.0);
        let n = LabelPrior::normal(0.0, 1.0).unwrap();
        let top = invert_choice(1.0, &n, 4).unwrap();
        assert_abs_diff_eq!(n.cdf(top), 1.0 - 1e-12, epsilon = 1e-15);
        assert!(matches!(invert_choice(1.5, &u, 4), Err(Error::Input(_))));
        assert!(matches!(invert_choice(f64::NAN, &u, 4), Err(Error::Input(_))));
    }

    #[test]
    fn scores_single_questionnaire() {
        let q = one_set_questionnaire(0, &[1, 2, 3, 4]);
        let table = scores_from_study(&[response(0, 3, 1)], std::slice::from_ref(&q), &LabelPrior::standard_uniform(), 4).unwrap();
        let labels = table.labels();
        assert_eq!(labels[&3], 1.0);
        assert_eq!(labels[&1], -1.0);
        assert_abs_diff_eq!(labels[&2], 0.0, epsilon = 1e-12);
        let empty = scores_from_study(&[], &[q], &LabelPrior::standard_uniform(), 4);
        assert!(matches!(empty, Err(Error::IncompleteQuestionnaire(_))));
    }

    #[test]
    fn per_set_codes_sum_to_zero() {
        let q = one_set_questionnaire(0, &[5, 6, 7]);
        let enc = encode_choices(&[response(0, 7, 6)], &[q]).unwrap();
        assert_eq!(enc[0].codes.values().map(|&c| i32::from(c)).sum::<i32>(), 0);
    }
}
