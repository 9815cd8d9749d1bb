//! Choice-set questionnaires.
//!
//! The group construction splits `n = 4p` profiles (p prime) into lists
//! `A, B, C, D` of length `p`. Questionnaire `t` holds the sets
//! `<A[k], B[k + t*p1], C[k + t*p2], D[k + t*p3]>` (indices mod p). Because
//! the shifts are distinct and nonzero mod p, any two profiles from different
//! lists meet in at most one set over the `p` questionnaires of the cycle.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::catalog::ProfileId;
use crate::error::{Error, Result};
use crate::rng::{child_stream, derive_seed};

pub const GROUP_SET_SIZE: usize = 4;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Parameters of the group-theoretic construction for `n = 4p` profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub n: usize,
    /// Number of choice sets per questionnaire, and the cycle length.
    pub p: usize,
    pub set_size: usize,
    pub primes: [u64; 3],
}

impl StudyPlan {
    /// Checks every plan invariant.
    pub fn validate(&self) -> Result<()> {
        let p = self.p as u64;
        if self.set_size != GROUP_SET_SIZE || self.n != GROUP_SET_SIZE * self.p || !is_prime(p) {
            return Err(Error::PlanInfeasible(format!(
                "n = {} must equal 4 * prime with set size 4",
                self.n
            )));
        }
        if !shifts_admissible(self.primes, self.n as u64, p) {
            return Err(Error::PlanInfeasible(format!(
                "primes {:?} are not admissible shifts for p = {p}",
                self.primes
            )));
        }
        Ok(())
    }
}

fn shifts_admissible(primes: [u64; 3], n: u64, p: u64) -> bool {
    let [a, b, c] = primes;
    let distinct = a != b && b != c && a != c;
    let all_prime = primes.iter().all(|&q| q > 3 && is_prime(q));
    let products = [a * b, a * c, b * c].iter().all(|&prod| prod > n);
    let residues = [a % p, b % p, c % p];
    let residues_ok = residues.iter().all(|&r| r != 0)
        && residues[0] != residues[1]
        && residues[1] != residues[2]
        && residues[0] != residues[2];
    distinct && all_prime && products && residues_ok
}

/// Derives the plan for `n` profiles: `p = n / 4` and the admissible shift
/// triple with the smallest largest prime (ties broken lexicographically).
///
/// Admissible means: distinct primes above 3, every pairwise product above
/// `n`, and residues mod `p` pairwise distinct and nonzero.
pub fn plan_study(n: usize) -> Result<StudyPlan> {
    if n == 0 || !n.is_multiple_of(GROUP_SET_SIZE) || !is_prime((n / GROUP_SET_SIZE) as u64) {
        return Err(Error::PlanInfeasible(format!(
            "n = {n} is not four times a prime; choose a nearby n of the form 4p"
        )));
    }
    let p = (n / GROUP_SET_SIZE) as u64;
    if p < 5 {
        return Err(Error::PlanInfeasible(format!(
            "p = {p} has fewer than three distinct nonzero residues; need n >= 20"
        )));
    }
    let n64 = n as u64;
    let mut primes: Vec<u64> = Vec::new();
    let mut candidate = 5;
    loop {
        if is_prime(candidate) {
            primes.push(candidate);
            let largest = candidate;
            let below = &primes[..primes.len() - 1];
            for (i, &a) in below.iter().enumerate() {
                for &b in &below[i + 1..] {
                    let triple = [a, b, largest];
                    if shifts_admissible(triple, n64, p) {
                        return Ok(StudyPlan { n, p: p as usize, set_size: GROUP_SET_SIZE, primes: triple });
                    }
                }
            }
        }
        candidate += 2;
    }
}

/// How a questionnaire was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionnaireSource {
    Group,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub set_index: usize,
    pub member_ids: Vec<ProfileId>,
}

impl ChoiceSet {
    pub fn contains(&self, id: ProfileId) -> bool {
        self.member_ids.contains(&id)
    }
}

/// One partition of all profiles into choice sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub questionnaire_index: usize,
    pub source: QuestionnaireSource,
    pub sets: Vec<ChoiceSet>,
}

impl Questionnaire {
    pub fn set_size(&self) -> usize {
        self.sets.first().map_or(0, |s| s.member_ids.len())
    }

    pub fn profile_ids(&self) -> impl Iterator<Item = ProfileId> + '_ {
        self.sets.iter().flat_map(|s| s.member_ids.iter().copied())
    }

    /// Errors unless every id in `ids` appears in exactly one set.
    pub fn check_partition(&self, ids: &[ProfileId]) -> Result<()> {
        let expected: HashSet<ProfileId> = ids.iter().copied().collect();
        let mut seen = HashSet::with_capacity(ids.len());
        for id in self.profile_ids() {
            if !seen.insert(id) {
                return Err(Error::Input(format!(
                    "profile {id} appears twice in questionnaire {}",
                    self.questionnaire_index
                )));
            }
            if !expected.contains(&id) {
                return Err(Error::Input(format!(
                    "unknown profile {id} in questionnaire {}",
                    self.questionnaire_index
                )));
            }
        }
        if seen.len() != expected.len() {
            return Err(Error::Input(format!(
                "questionnaire {} covers {} of {} profiles",
                self.questionnaire_index,
                seen.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}

/// Seeded split of the profiles into the four lists `[A, B, C, D]`.
fn group_lists(profile_ids: &[ProfileId], plan: &StudyPlan, seed: u64) -> Vec<Vec<ProfileId>> {
    let mut keyed = profile_ids.to_vec();
    keyed.shuffle(&mut child_stream(seed, 0));
    keyed.chunks(plan.p).map(|c| c.to_vec()).collect()
}

fn group_questionnaire(lists: &[Vec<ProfileId>], plan: &StudyPlan, t: usize) -> Questionnaire {
    let p = plan.p;
    let shifts: Vec<usize> = std::iter::once(0)
        .chain(plan.primes.iter().map(|&q| ((t as u64 * q) % p as u64) as usize))
        .collect();
    let sets = (0..p)
        .map(|k| ChoiceSet {
            set_index: k,
            member_ids: lists
                .iter()
                .zip(&shifts)
                .map(|(list, &shift)| list[(k + shift) % p])
                .collect(),
        })
        .collect();
    Questionnaire { questionnaire_index: t, source: QuestionnaireSource::Group, sets }
}

/// The full cycle of `p` group-generated questionnaires.
pub fn generate_questionnaires(
    profile_ids: &[ProfileId],
    plan: &StudyPlan,
    seed: u64,
) -> Result<Vec<Questionnaire>> {
    plan.validate()?;
    if profile_ids.len() != plan.n {
        return Err(Error::Input(format!(
            "plan expects {} profiles, got {}",
            plan.n,
            profile_ids.len()
        )));
    }
    if profile_ids.iter().collect::<HashSet<_>>().len() != profile_ids.len() {
        return Err(Error::Input("profile ids must be distinct".into()));
    }
    let lists = group_lists(profile_ids, plan, seed);
    Ok((0..plan.p).map(|t| group_questionnaire(&lists, plan, t)).collect())
}

/// Applies the group action `t` times to questionnaire 0; `t = p` closes the
/// cycle.
pub fn group_action_power(profile_ids: &[ProfileId], plan: &StudyPlan, seed: u64, t: usize) -> Questionnaire {
    let lists = group_lists(profile_ids, plan, seed);
    let mut q = group_questionnaire(&lists, plan, t);
    q.questionnaire_index = t;
    q
}

/// `count` questionnaires: the group cycle first, then seeded random
/// partitions (flagged [`QuestionnaireSource::Random`]) once it is exhausted.
pub fn generate_extended(
    profile_ids: &[ProfileId],
    plan: &StudyPlan,
    count: usize,
    seed: u64,
) -> Result<Vec<Questionnaire>> {
    let mut out = generate_questionnaires(profile_ids, plan, seed)?;
    out.truncate(count);
    if count > out.len() {
        let extra = random_questionnaires(profile_ids, plan.set_size, count - out.len(), derive_seed(seed, 0xF11))?;
        let offset = out.len();
        out.extend(extra.into_iter().map(|mut q| {
            q.questionnaire_index += offset;
            q
        }));
    }
    Ok(out)
}

/// `q` independent uniformly shuffled partitions into sets of `set_size`.
pub fn random_questionnaires(
    profile_ids: &[ProfileId],
    set_size: usize,
    q: usize,
    seed: u64,
) -> Result<Vec<Questionnaire>> {
    if set_size < 2 {
        return Err(Error::Input("set size must be at least 2".into()));
    }
    if profile_ids.is_empty() || !profile_ids.len().is_multiple_of(set_size) {
        return Err(Error::Input(format!(
            "{} profiles cannot be split into sets of {set_size}",
            profile_ids.len()
        )));
    }
    Ok((0..q)
        .map(|i| {
            let mut ids = profile_ids.to_vec();
            ids.shuffle(&mut child_stream(seed, i as u64));
            Questionnaire {
                questionnaire_index: i,
                source: QuestionnaireSource::Random,
                sets: ids
                    .chunks(set_size)
                    .enumerate()
                    .map(|(k, c)| ChoiceSet { set_index: k, member_ids: c.to_vec() })
                    .collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoverage {
    pub unique_pairs: usize,
    pub fraction: f64,
    /// Coverage fraction after the first `i + 1` questionnaires.
    pub curve: Vec<f64>,
}

/// Fraction of the `C(n, 2)` unordered pairs that share at least one set.
/// Ids must lie in `0..n`.
pub fn pair_coverage(questionnaires: &[Questionnaire], n: usize) -> Result<PairCoverage> {
    let total = n * n.saturating_sub(1) / 2;
    if total == 0 {
        return Err(Error::Input("pair coverage needs at least two profiles".into()));
    }
    let mut covered = vec![false; total];
    let mut unique = 0usize;
    let mut curve = Vec::with_capacity(questionnaires.len());
    for q in questionnaires {
        for set in &q.sets {
            for (i, &a) in set.member_ids.iter().enumerate() {
                for &b in &set.member_ids[i + 1..] {
                    let (lo, hi) = if a < b { (a as usize, b as usize) } else { (b as usize, a as usize) };
                    if hi >= n {
                        return Err(Error::Input(format!("profile id {hi} outside 0..{n}")));
                    }
                    let idx = hi * (hi - 1) / 2 + lo;
                    if !covered[idx] {
                        covered[idx] = true;
                        unique += 1;
                    }
                }
            }
        }
        curve.push(unique as f64 / total as f64);
    }
    Ok(PairCoverage { unique_pairs: unique, fraction: unique as f64 / total as f64, curve })
}

/// Closed-form coverage of a full group cycle: `6p^2 / C(4p, 2) = 3p / (4p - 1)`.
pub fn group_cycle_coverage(p: usize) -> f64 {
    3.0 * p as f64 / (4.0 * p as f64 - 1.0)
}
