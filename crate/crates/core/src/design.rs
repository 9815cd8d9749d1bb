//! D-optimal synthetic designs.
//!
//! Designs are built by a Monte Carlo variant of Fedorov's exchange: draw a
//! candidate pool of level combinations, start from a random nonsingular
//! subset, then sweep the design rows and swap each for the candidate that
//! most increases `log det(X'X)`. The exchange gain for removing row `x_i`
//! and adding candidate `x_j` is the classic delta
//!
//! ```text
//! det(M') / det(M) = (1 + d_j)(1 - d_i) + d_ij^2,   d_ab = x_a' M^{-1} x_b
//! ```
//!
//! which lets a full sweep run in `O(n * pool * m)` without refactoring.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeCatalog, Profile, ProfileId};
use crate::error::{Error, Result};
use crate::rng::{child_stream, derive_seed};

/// Relative improvement an exchange must beat to be accepted.
const IMPROVEMENT_EPS: f64 = 1e-10;
const MAX_START_ATTEMPTS: usize = 200;

/// `log det(X'X)` computed from the R factor of a QR decomposition of `X`.
///
/// Returns `f64::NEG_INFINITY` when `X'X` is singular (including `n < m`).
pub fn d_criterion(matrix: &DMatrix<f64>) -> Result<f64> {
    let (n, m) = matrix.shape();
    if n == 0 || m == 0 {
        return Err(Error::Input("model matrix must be non-empty".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("model matrix has non-finite entries".into()));
    }
    if n < m {
        return Ok(f64::NEG_INFINITY);
    }
    let r = matrix.clone().qr().unpack_r();
    let diag: Vec<f64> = (0..m).map(|i| r[(i, i)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    let tol = scale * (n.max(m) as f64) * f64::EPSILON * 16.0;
    if scale == 0.0 || diag.iter().any(|&d| d <= tol) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(2.0 * diag.iter().map(|d| d.ln()).sum::<f64>())
}

/// Normalized D-efficiency `det(X'X)^(1/m) / n`, comparable across run counts.
pub fn normalized_efficiency(log_det: f64, n: usize, m: usize) -> f64 {
    if log_det == f64::NEG_INFINITY {
        return 0.0;
    }
    (log_det / m as f64).exp() / n as f64
}

/// A synthetic example set together with its coded model matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    catalog: AttributeCatalog,
    profiles: Vec<Profile>,
    coded: DMatrix<f64>,
    log_det: f64,
}

impl Design {
    /// Codes `profiles` against `catalog`. Ids must be unique.
    pub fn new(catalog: AttributeCatalog, profiles: Vec<Profile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Input("design has no profiles".into()));
        }
        let mut ids = HashSet::new();
        for p in &profiles {
            catalog.check_levels(&p.levels)?;
            if !ids.insert(p.id) {
                return Err(Error::Schema(format!("duplicate profile id {}", p.id)));
            }
        }
        let coded = coded_matrix(&catalog, profiles.iter().map(|p| p.levels.as_slice()));
        let log_det = d_criterion(&coded)?;
        Ok(Self { catalog, profiles, coded, log_det })
    }

    pub fn catalog(&self) -> &AttributeCatalog {
        &self.catalog
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn coded_matrix(&self) -> &DMatrix<f64> {
        &self.coded
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn ids(&self) -> Vec<ProfileId> {
        self.profiles.iter().map(|p| p.id).collect()
    }

    pub fn normalized_efficiency(&self) -> f64 {
        normalized_efficiency(self.log_det, self.len(), self.catalog.coded_dim())
    }

    /// Coded row of profile `id`, if present.
    pub fn coded_row(&self, id: ProfileId) -> Option<Vec<f64>> {
        let index = self.profiles.iter().position(|p| p.id == id)?;
        Some(self.coded.row(index).iter().copied().collect())
    }

    /// Same profiles with ids shifted by `offset`, e.g. to keep a test design
    /// disjoint from the training design.
    pub fn with_id_offset(&self, offset: ProfileId) -> Design {
        let profiles = self
            .profiles
            .iter()
            .map(|p| Profile { id: p.id + offset, levels: p.levels.clone() })
            .collect();
        Design { profiles, ..self.clone() }
    }

    pub fn to_doc(&self) -> DesignDoc {
        DesignDoc {
            catalog: self.catalog.clone(),
            log_det: self.log_det.is_finite().then_some(self.log_det),
            profiles: self
                .profiles
                .iter()
                .map(|p| ProfileDoc {
                    id: p.id,
                    levels: p
                        .levels
                        .iter()
                        .enumerate()
                        .map(|(a, &l)| {
                            let attr = &self.catalog.attributes()[a];
                            (attr.name.clone(), attr.levels[l].clone())
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: DesignDoc) -> Result<Self> {
        let catalog = doc.catalog;
        let mut profiles = Vec::with_capacity(doc.profiles.len());
        for p in doc.profiles {
            let mut levels = Vec::with_capacity(catalog.len());
            for attr in catalog.attributes() {
                let name = p.levels.get(&attr.name).ok_or_else(|| {
                    Error::Schema(format!("profile {} lacks attribute `{}`", p.id, attr.name))
                })?;
                let level = attr.levels.iter().position(|l| l == name).ok_or_else(|| {
                    Error::Schema(format!(
                        "profile {}: unknown level `{name}` for `{}`",
                        p.id, attr.name
                    ))
                })?;
                levels.push(level);
            }
            if p.levels.len() != catalog.len() {
                return Err(Error::Schema(format!("profile {} has unknown attributes", p.id)));
            }
            profiles.push(Profile { id: p.id, levels });
        }
        Design::new(catalog, profiles)
    }
}

/// Sidecar document: catalog plus profile id -> attribute -> level name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignDoc {
    pub catalog: AttributeCatalog,
    pub log_det: Option<f64>,
    pub profiles: Vec<ProfileDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub id: ProfileId,
    pub levels: BTreeMap<String, String>,
}

fn coded_matrix<'a>(
    catalog: &AttributeCatalog,
    rows: impl ExactSizeIterator<Item = &'a [usize]>,
) -> DMatrix<f64> {
    let m = catalog.coded_dim();
    let n = rows.len();
    let mut out = DMatrix::zeros(n, m);
    let mut buf = vec![0.0; m];
    for (i, levels) in rows.enumerate() {
        catalog.code_levels_into(levels, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Tuning knobs for [`federov_exchange`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeParams {
    pub n: usize,
    pub candidate_pool_size: usize,
    pub max_passes: usize,
    /// Exchanges whose resulting log-det would fall below this are rejected.
    pub log_det_floor: f64,
}

impl ExchangeParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            candidate_pool_size: default_pool_size(n),
            max_passes: 50,
            log_det_floor: -1e6,
        }
    }

    pub fn with_pool(mut self, candidate_pool_size: usize) -> Self {
        self.candidate_pool_size = candidate_pool_size;
        self
    }

    pub fn with_max_passes(mut self, max_passes: usize) -> Self {
        self.max_passes = max_passes;
        self
    }
}

pub fn default_pool_size(n: usize) -> usize {
    (10 * n).max(1000)
}

/// Result of one exchange run with its improvement trace.
#[derive(Debug, Clone)]
pub struct ExchangeOutcome {
    pub design: Design,
    pub initial_log_det: f64,
    /// Log-det after the random start and after every accepted exchange.
    pub trace: Vec<f64>,
    pub passes: usize,
    pub exchanges: usize,
}

/// Monte Carlo Fedorov exchange. Deterministic given `seed`.
pub fn federov_exchange(catalog: &AttributeCatalog, params: &ExchangeParams, seed: u64) -> Result<Design> {
    federov_exchange_traced(catalog, params, seed).map(|o| o.design)
}

pub fn federov_exchange_traced(
    catalog: &AttributeCatalog,
    params: &ExchangeParams,
    seed: u64,
) -> Result<ExchangeOutcome> {
    let m = catalog.coded_dim();
    let n = params.n;
    if n < m {
        return Err(Error::DesignInfeasible(format!(
            "{n} runs cannot support {m} coded parameters"
        )));
    }
    if params.candidate_pool_size < n {
        return Err(Error::Input(format!(
            "candidate pool of {} is smaller than n = {n}",
            params.candidate_pool_size
        )));
    }
    let mut rng = child_stream(seed, 0);
    let pool_levels = candidate_pool(catalog, params.candidate_pool_size, &mut rng)?;
    let pool = coded_matrix(catalog, pool_levels.iter().map(|l| l.as_slice()));
    let pool_len = pool.nrows();

    // Random nonsingular start, rows drawn with replacement from the pool.
    let mut rows: Vec<usize> = Vec::new();
    let mut info = None;
    for _ in 0..MAX_START_ATTEMPTS {
        rows = (0..n).map(|_| rng.random_range(0..pool_len)).collect();
        if let Some(state) = InfoState::from_rows(&pool, &rows) {
            if state.log_det >= params.log_det_floor {
                info = Some(state);
                break;
            }
        }
    }
    let mut info = info.ok_or_else(|| {
        Error::DesignInfeasible(format!(
            "no nonsingular starting design of {n} runs after {MAX_START_ATTEMPTS} draws"
        ))
    })?;
    let initial_log_det = info.log_det;
    let mut trace = vec![initial_log_det];
    let mut d_pool = info.leverages(&pool);
    let mut passes = 0;
    let mut exchanges = 0;

    while passes < params.max_passes {
        passes += 1;
        let mut improved = false;
        for row in rows.iter_mut() {
            let xi = pool.row(*row).transpose();
            let u = &info.inverse * &xi;
            let d_i = xi.dot(&u);
            let cross = &pool * &u;
            let mut best_gain = 1.0 + IMPROVEMENT_EPS;
            let mut best = None;
            for j in 0..pool_len {
                if j == *row {
                    continue;
                }
                let d_ij = cross[j];
                let gain = (1.0 + d_pool[j]) * (1.0 - d_i) + d_ij * d_ij;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(j);
                }
            }
            let Some(j) = best else { continue };
            let new_log_det = info.log_det + best_gain.ln();
            if new_log_det < params.log_det_floor {
                continue;
            }
            let xj = pool.row(j).transpose();
            if !info.exchange(&xi, &xj, best_gain, &pool, &mut d_pool) {
                continue;
            }
            *row = j;
            exchanges += 1;
            improved = true;
            trace.push(info.log_det);
        }
        // Refactor from scratch to shed rank-one update drift.
        if let Some(fresh) = InfoState::from_rows(&pool, &rows) {
            info = fresh;
            d_pool = info.leverages(&pool);
        }
        if !improved {
            break;
        }
    }

    let profiles = rows
        .iter()
        .enumerate()
        .map(|(id, &r)| Profile { id: id as ProfileId, levels: pool_levels[r].clone() })
        .collect();
    let design = Design::new(catalog.clone(), profiles)?;
    Ok(ExchangeOutcome { design, initial_log_det, trace, passes, exchanges })
}

/// Information matrix inverse and log-determinant of the current design.
struct InfoState {
    inverse: DMatrix<f64>,
    log_det: f64,
}

impl InfoState {
    fn from_rows(pool: &DMatrix<f64>, rows: &[usize]) -> Option<Self> {
        let m = pool.ncols();
        let mut info = DMatrix::<f64>::zeros(m, m);
        for &r in rows {
            let x = pool.row(r);
            info.ger(1.0, &x.transpose(), &x.transpose(), 1.0);
        }
        let chol = info.cholesky()?;
        let l = chol.l_dirty();
        let mut log_det = 0.0;
        for i in 0..m {
            let d = l[(i, i)];
            if d.is_nan() || d <= 0.0 {
                return None;
            }
            log_det += 2.0 * d.ln();
        }
        if !log_det.is_finite() {
            return None;
        }
        // Guard against numerically singular information matrices.
        let diag_max = (0..m).map(|i| l[(i, i)]).fold(0.0, f64::max);
        let diag_min = (0..m).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        if diag_min <= diag_max * 1e-7 {
            return None;
        }
        Some(Self { inverse: chol.inverse(), log_det })
    }

    /// `x' M^{-1} x` for every pool row.
    fn leverages(&self, pool: &DMatrix<f64>) -> DVector<f64> {
        let projected = pool * &self.inverse;
        DVector::from_iterator(
            pool.nrows(),
            (0..pool.nrows()).map(|r| projected.row(r).dot(&pool.row(r))),
        )
    }

    /// Replace `remove` by `add` with two Sherman-Morrison updates, keeping
    /// the pool leverages in step.
    fn exchange(
        &mut self,
        remove: &DVector<f64>,
        add: &DVector<f64>,
        gain: f64,
        pool: &DMatrix<f64>,
        leverages: &mut DVector<f64>,
    ) -> bool {
        let ua = &self.inverse * add;
        let da = add.dot(&ua);
        let mut next = &self.inverse - (&ua * ua.transpose()) / (1.0 + da);
        let ur = &next * remove;
        let dr = remove.dot(&ur);
        if 1.0 - dr <= 1e-12 {
            return false;
        }
        next += (&ur * ur.transpose()) / (1.0 - dr);
        let pa = pool * &ua;
        let pr = pool * &ur;
        for j in 0..leverages.len() {
            leverages[j] += pr[j] * pr[j] / (1.0 - dr) - pa[j] * pa[j] / (1.0 + da);
        }
        self.inverse = next;
        self.log_det += gain.ln();
        true
    }
}

fn candidate_pool<R: Rng + ?Sized>(
    catalog: &AttributeCatalog,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if catalog.factorial_size() <= size as u128 {
        return catalog.full_factorial();
    }
    let mut seen = HashSet::with_capacity(size);
    let mut pool = Vec::with_capacity(size);
    let mut attempts = 0usize;
    while pool.len() < size && attempts < size * 50 {
        attempts += 1;
        let levels = catalog.random_levels(rng);
        if seen.insert(levels.clone()) {
            pool.push(levels);
        }
    }
    Ok(pool)
}

/// Uniformly random design of `n` runs (rows drawn independently over the
/// full level space). May be singular.
pub fn random_design(catalog: &AttributeCatalog, n: usize, seed: u64) -> Result<Design> {
    let mut rng = child_stream(seed, 1);
    let profiles = (0..n)
        .map(|id| Profile { id: id as ProfileId, levels: catalog.random_levels(&mut rng) })
        .collect();
    Design::new(catalog.clone(), profiles)
}

/// Best log-det over `count` random nonsingular designs of `n` runs.
pub fn best_random_log_det(catalog: &AttributeCatalog, n: usize, count: usize, seed: u64) -> Result<f64> {
    let values: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            for attempt in 0..MAX_START_ATTEMPTS as u64 {
                let d = random_design(catalog, n, derive_seed(derive_seed(seed, i), attempt))?;
                if d.log_det().is_finite() {
                    return Ok(d.log_det());
                }
            }
            Err(Error::DesignInfeasible(format!("no nonsingular random design of {n} runs")))
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Best design over `restarts` independently seeded exchange runs.
pub fn best_of_restarts(
    catalog: &AttributeCatalog,
    params: &ExchangeParams,
    restarts: usize,
    seed: u64,
) -> Result<Design> {
    if restarts == 0 {
        return Err(Error::Input("restarts must be at least 1".into()));
    }
    let designs: Vec<Design> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| federov_exchange(catalog, params, derive_seed(seed, r)))
        .collect::<Result<_>>()?;
    // First maximum in restart order keeps the reduction schedule-independent.
    let mut best = None::<Design>;
    for d in designs {
        if best.as_ref().is_none_or(|b| d.log_det() > b.log_det()) {
            best = Some(d);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub n: usize,
    pub best_log_det: f64,
    pub normalized_efficiency: f64,
}

/// Best log-det and normalized efficiency for each distinct run count, in
/// ascending order of `n`.
pub fn efficiency_curve(
    catalog: &AttributeCatalog,
    n_values: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<Vec<EfficiencyPoint>> {
    if restarts == 0 {
        return Err(Error::Input("restarts must be at least 1".into()));
    }
    let ns: BTreeSet<usize> = n_values.iter().copied().collect();
    let m = catalog.coded_dim();
    let jobs: Vec<(usize, u64)> = ns
        .iter()
        .flat_map(|&n| (0..restarts as u64).map(move |r| (n, r)))
        .collect();
    let results: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let d = federov_exchange(catalog, &ExchangeParams::new(n), derive_seed(derive_seed(seed, n as u64), r))?;
            Ok((n, d.log_det()))
        })
        .collect::<Result<_>>()?;
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for (n, ld) in results {
        let entry = best.entry(n).or_insert(f64::NEG_INFINITY);
        if ld > *entry {
            *entry = ld;
        }
    }
    Ok(best
        .into_iter()
        .map(|(n, best_log_det)| EfficiencyPoint {
            n,
            best_log_det,
            normalized_efficiency: normalized_efficiency(best_log_det, n, m),
        })
        .collect())
}

/// Frequency with which each run count wins a trial. A trial exchanges
/// `samples_per_trial` designs at uniformly drawn `n` in `[low, high]` and
/// records the `n` with the highest normalized efficiency.
pub fn trial_histogram(
    catalog: &AttributeCatalog,
    n_range: (usize, usize),
    trials: usize,
    samples_per_trial: usize,
    seed: u64,
) -> Result<BTreeMap<usize, usize>> {
    let (low, high) = n_range;
    if low > high {
        return Err(Error::Input(format!("empty run-count range {low}..={high}")));
    }
    if trials == 0 || samples_per_trial == 0 {
        return Err(Error::Input("trials and samples per trial must be at least 1".into()));
    }
    let winners: Vec<usize> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t);
            let mut rng = child_stream(trial_seed, 0);
            let ns: Vec<usize> = (0..samples_per_trial).map(|_| rng.random_range(low..=high)).collect();
            let mut best = (f64::NEG_INFINITY, ns[0]);
            for (k, &n) in ns.iter().enumerate() {
                let d = federov_exchange(catalog, &ExchangeParams::new(n), derive_seed(trial_seed, 1 + k as u64))?;
                let eff = d.normalized_efficiency();
                if eff > best.0 {
                    best = (eff, n);
                }
            }
            Ok(best.1)
        })
        .collect::<Result<_>>()?;
    let mut hist = BTreeMap::new();
    for n in winners {
        *hist.entry(n).or_insert(0) += 1;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Attribute;
    use approx::assert_relative_eq;

    #[test]
    fn d_criterion_identity() {
        assert_relative_eq!(d_criterion(&DMatrix::identity(2, 2)).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn d_criterion_rank_deficient() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(d_criterion(&x).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn d_criterion_orthogonal_pair() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        assert_relative_eq!(d_criterion(&x).unwrap(), 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn d_criterion_rejects_non_finite() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(d_criterion(&x), Err(Error::Input(_))));
    }

    #[test]
    fn d_criterion_agrees_with_determinant() {
        let x = DMatrix::<f64>::from_row_slice(4, 3, &[1.0, 0.2, 3.0, 1.0, -1.0, 0.5, 1.0, 2.0, 2.0, 1.0, 0.0, -1.0]);
        let direct = (x.transpose() * &x).determinant().ln();
        assert_relative_eq!(d_criterion(&x).unwrap(), direct, epsilon = 1e-10);
    }

    #[test]
    fn too_few_runs_is_infeasible() {
        let cat = AttributeCatalog::binary(3);
        let err = federov_exchange(&cat, &ExchangeParams::new(cat.coded_dim() - 1), 1).unwrap_err();
        assert!(matches!(err, Error::DesignInfeasible(_)));
    }

    #[test]
    fn exchange_is_deterministic() {
        let cat = AttributeCatalog::stand_in();
        let params = ExchangeParams::new(40).with_pool(400);
        let a = federov_exchange(&cat, &params, 11).unwrap();
        let b = federov_exchange(&cat, &params, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log_det().to_bits(), b.log_det().to_bits());
    }

    #[test]
    fn exchange_trace_is_monotone() {
        let cat = AttributeCatalog::stand_in();
        for seed in 0..4 {
            let out = federov_exchange_traced(&cat, &ExchangeParams::new(60).with_pool(600), seed).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "trace decreased: {w:?}");
            }
            assert!(out.design.log_det() >= out.initial_log_det - 1e-9);
            assert!(out.exchanges > 0);
        }
    }

    #[test]
    fn pool_smaller_than_n_is_rejected() {
        let cat = AttributeCatalog::binary(3);
        let params = ExchangeParams::new(8).with_pool(4);
        assert!(matches!(federov_exchange(&cat, &params, 0), Err(Error::Input(_))));
    }

    #[test]
    fn saturated_orthogonal_catalog_curve() {
        // Two binary attributes, n = m = 3: the best saturated design has
        // |X'X| = 1 under dummy coding (rows 00, 10, 01).
        let cat = AttributeCatalog::binary(2);
        let curve = efficiency_curve(&cat, &[3], 4, 5).unwrap();
        assert_eq!(curve.len(), 1);
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let oracle = d_criterion(&x).unwrap();
        assert_relative_eq!(curve[0].best_log_det, oracle, epsilon = 1e-9);
        assert_relative_eq!(curve[0].normalized_efficiency, (oracle / 3.0).exp() / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn curve_deduplicates_and_sorts() {
        let cat = AttributeCatalog::binary(3);
        let curve = efficiency_curve(&cat, &[8, 6, 8], 2, 1).unwrap();
        let ns: Vec<usize> = curve.iter().map(|p| p.n).collect();
        assert_eq!(ns, vec![6, 8]);
    }

    #[test]
    fn histogram_degenerate_cases() {
        let cat = AttributeCatalog::binary(3);
        let single = trial_histogram(&cat, (6, 10), 1, 1, 3).unwrap();
        assert_eq!(single.values().sum::<usize>(), 1);
        assert_eq!(single.len(), 1);
        let fixed = trial_histogram(&cat, (8, 8), 5, 3, 3).unwrap();
        assert_eq!(fixed, BTreeMap::from([(8, 5)]));
        assert!(matches!(trial_histogram(&cat, (9, 8), 1, 1, 0), Err(Error::Input(_))));
    }

    #[test]
    fn doc_round_trip() {
        let cat = AttributeCatalog::new(vec![
            Attribute::new("a", &["x", "y"]),
            Attribute::new("b", &["p", "q", "r"]),
        ])
        .unwrap();
        let d = federov_exchange(&cat, &ExchangeParams::new(6), 2).unwrap();
        let json = serde_json::to_string(&d.to_doc()).unwrap();
        let back = Design::from_doc(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
