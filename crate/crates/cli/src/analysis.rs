use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use choicescore_core::catalog::{AttributeCatalog, ProfileId};
use choicescore_core::choice::{expected_choice, scores_from_study};
use choicescore_core::design::{best_of_restarts, efficiency_curve, trial_histogram, ExchangeParams};
use choicescore_core::io::{self as cio, ModelDoc, QuestionnaireDoc};
use choicescore_core::prior::LabelPrior;
use choicescore_core::questionnaire::{generate_questionnaires, pair_coverage, plan_study, random_questionnaires, Questionnaire};
use choicescore_core::risk::{binarize_labels, evaluate, fit, roc_and_auc, tune_threshold, FitMode, DEFAULT_RIDGE_LAMBDA};
use choicescore_core::simulation::{envelope_check, rms_study, scatter_study, PartitionStrategy, RmsStudy};
use clap::{Subcommand, ValueEnum};
use serde_json::json;

fn load_catalog(path: Option<&Path>) -> Result<AttributeCatalog> {
    match path {
        Some(p) => cio::read_catalog(p).with_context(|| format!("reading catalog {}", p.display())),
        None => Ok(AttributeCatalog::stand_in()),
    }
}

fn load_questionnaires(path: &Path) -> Result<(QuestionnaireDoc, Vec<Questionnaire>)> {
    let doc: QuestionnaireDoc = cio::read_json(path).with_context(|| format!("reading {}", path.display()))?;
    let qs = doc.to_questionnaires()?;
    Ok((doc, qs))
}

fn write_questionnaires(out: Option<&Path>, doc: &QuestionnaireDoc) -> Result<()> {
    match out {
        Some(p) => cio::write_json(p, doc)?,
        None => println!("{}", serde_json::to_string_pretty(doc)?),
    }
    Ok(())
}

/// `1..25` (inclusive) or `1,2,5`.
fn parse_counts(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?);
        if a > b {
            bail!("empty range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|v| Ok(v.trim().parse()?)).collect()
}

#[derive(Subcommand)]
pub enum DesignCmd {
    /// Best-of-restarts Fedorov exchange design
    Gen {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; the level sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Best log-det and normalized efficiency across run counts
    Curve {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        n_from: usize,
        #[arg(long)]
        n_to: usize,
        #[arg(long, default_value_t = 10)]
        step: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Frequency of the most efficient run count over random trials
    Hist {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value_t = 250)]
        trials: usize,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        n_from: usize,
        #[arg(long, default_value_t = 250)]
        n_to: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn design(cmd: DesignCmd) -> Result<()> {
    let mut out = io::stdout().lock();
    match cmd {
        DesignCmd::Gen { catalog, n, restarts, pool, seed, out: path } => {
            let catalog = load_catalog(catalog.as_deref())?;
            let mut params = ExchangeParams::new(n);
            if let Some(pool) = pool {
                params = params.with_pool(pool);
            }
            let design = best_of_restarts(&catalog, &params, restarts, seed)?;
            cio::write_design(&path, &design)?;
            eprintln!(
                "{} profiles, m = {}, log det = {:.6}, normalized efficiency = {:.6}",
                design.len(),
                catalog.coded_dim(),
                design.log_det(),
                design.normalized_efficiency()
            );
        }
        DesignCmd::Curve { catalog, n_from, n_to, step, restarts, seed } => {
            let catalog = load_catalog(catalog.as_deref())?;
            let ns: Vec<usize> = (n_from..=n_to).step_by(step.max(1)).collect();
            writeln!(out, "n,best_log_det,normalized_efficiency")?;
            for p in efficiency_curve(&catalog, &ns, restarts, seed)? {
                writeln!(out, "{},{},{}", p.n, p.best_log_det, p.normalized_efficiency)?;
            }
        }
        DesignCmd::Hist { catalog, trials, samples, n_from, n_to, seed } => {
            let catalog = load_catalog(catalog.as_deref())?;
            writeln!(out, "n,count")?;
            for (n, count) in trial_histogram(&catalog, (n_from, n_to), trials, samples, seed)? {
                writeln!(out, "{n},{count}")?;
            }
        }
    }
    Ok(())
}

#[derive(Subcommand)]
pub enum QuestCmd {
    /// Group-theoretic questionnaire cycle (n must be 4 times a prime)
    Gen {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "study")]
        study_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniformly shuffled partitions
    Random {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 4)]
        sets_of: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "study")]
        study_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unique pair coverage, overall and per prefix
    Coverage {
        #[arg(long)]
        questionnaires: PathBuf,
    },
}

pub fn quest(cmd: QuestCmd) -> Result<()> {
    match cmd {
        QuestCmd::Gen { design, seed, study_id, out } => {
            let design = cio::read_design(&design)?;
            let plan = plan_study(design.len())?;
            let qs = generate_questionnaires(&design.ids(), &plan, seed)?;
            eprintln!("p = {}, shifts = {:?}", plan.p, plan.primes);
            write_questionnaires(out.as_deref(), &QuestionnaireDoc::new(study_id, Some(plan), &qs))
        }
        QuestCmd::Random { design, sets_of, count, seed, study_id, out } => {
            let design = cio::read_design(&design)?;
            let qs = random_questionnaires(&design.ids(), sets_of, count, seed)?;
            write_questionnaires(out.as_deref(), &QuestionnaireDoc::new(study_id, None, &qs))
        }
        QuestCmd::Coverage { questionnaires } => {
            let (_, mut qs) = load_questionnaires(&questionnaires)?;
            let ids: BTreeSet<ProfileId> = qs.iter().flat_map(|q| q.profile_ids()).collect();
            let dense: BTreeMap<ProfileId, ProfileId> = ids.iter().enumerate().map(|(i, &id)| (id, i as ProfileId)).collect();
            for q in &mut qs {
                for s in &mut q.sets {
                    s.member_ids.iter_mut().for_each(|id| *id = dense[id]);
                }
            }
            let cov = pair_coverage(&qs, ids.len())?;
            let mut out = io::stdout().lock();
            writeln!(out, "questionnaires,coverage")?;
            for (t, c) in cov.curve.iter().enumerate() {
                writeln!(out, "{},{c}", t + 1)?;
            }
            eprintln!("{} unique pairs, coverage {:.6}", cov.unique_pairs, cov.fraction);
            Ok(())
        }
    }
}

#[derive(Subcommand)]
pub enum ScoreCmd {
    /// Aggregate a response log into labels. Questionnaires without a
    /// complete set of responses are left out.
    Aggregate {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        questionnaires: PathBuf,
        #[arg(long, default_value = "uniform:-1,1")]
        prior: LabelPrior,
        #[arg(long)]
        set_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn score(cmd: ScoreCmd) -> Result<()> {
    let ScoreCmd::Aggregate { responses, questionnaires, prior, set_size, out } = cmd;
    let (doc, qs) = load_questionnaires(&questionnaires)?;
    let records = cio::read_response_log(&responses)?;
    let mut answered: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for r in &records {
        answered.entry(r.response.questionnaire_index).or_default().insert(r.response.set_index);
    }
    let (complete, partial): (Vec<Questionnaire>, Vec<Questionnaire>) = qs
        .into_iter()
        .filter(|q| answered.contains_key(&q.questionnaire_index))
        .partition(|q| answered[&q.questionnaire_index].len() == q.sets.len());
    if !partial.is_empty() {
        let idx: Vec<usize> = partial.iter().map(|q| q.questionnaire_index).collect();
        eprintln!("skipping incomplete questionnaires {idx:?}");
    }
    let keep: BTreeSet<usize> = complete.iter().map(|q| q.questionnaire_index).collect();
    let used: Vec<_> = records
        .iter()
        .map(|r| r.response)
        .filter(|r| keep.contains(&r.questionnaire_index))
        .collect();
    let table = scores_from_study(&used, &complete, &prior, set_size.unwrap_or(doc.set_size))?;
    eprintln!("aggregated {} questionnaires", table.q);
    match out {
        Some(p) => cio::write_scores(&p, &table)?,
        None => cio::write_scores_to(io::stdout().lock(), &table)?,
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Strategy {
    Random,
    Group,
}

#[derive(Subcommand)]
pub enum SimCmd {
    /// Mean choice against true label under an exact oracle
    Scatter {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        s: usize,
        #[arg(long, default_value_t = 25)]
        q: usize,
        #[arg(long, default_value = "uniform:-1,1")]
        prior: LabelPrior,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// RMS label error by set size and questionnaire count
    Rms {
        #[arg(long, default_value_t = 188)]
        n: usize,
        #[arg(long, default_value = "2,3,4,5,6")]
        sizes: String,
        /// Questionnaire counts: `1..25` or a comma list.
        #[arg(long, default_value = "1..25")]
        q: String,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value = "uniform:-1,1")]
        prior: LabelPrior,
        #[arg(long, value_enum, default_value_t = Strategy::Random)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn sim(cmd: SimCmd) -> Result<()> {
    let mut out = io::stdout().lock();
    match cmd {
        SimCmd::Scatter { n, s, q, prior, seed } => {
            let points = scatter_study(n, s, q, &prior, seed)?;
            writeln!(out, "id,y_true,mean_choice,expected_choice")?;
            for p in &points {
                writeln!(out, "{},{},{},{}", p.id, p.y_true, p.mean_choice, expected_choice(p.y_true, &prior, s))?;
            }
            let (inside, mad) = envelope_check(&points, &prior, s, q, 4.0);
            eprintln!("within 4 standard errors: {:.2}%, mean |deviation| = {mad:.4}", inside * 100.0);
        }
        SimCmd::Rms { n, sizes, q, repeats, prior, strategy, noise, seed } => {
            let study = RmsStudy {
                n,
                set_sizes: parse_counts(&sizes)?,
                q_values: parse_counts(&q)?,
                prior,
                strategy: match strategy {
                    Strategy::Random => PartitionStrategy::Random,
                    Strategy::Group => PartitionStrategy::Group,
                },
                repeats,
                noise_sigma: noise,
            };
            let table = rms_study(&study, seed)?;
            writeln!(out, "set_size,n_effective,q,mean_rms")?;
            for c in &table.cells {
                writeln!(out, "{},{},{},{}", c.set_size, c.n_effective, c.q, c.mean_rms)?;
            }
            for (s, why) in &table.skipped {
                eprintln!("skipped set size {s}: {why}");
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Logistic,
    Regression,
}

#[derive(Subcommand)]
pub enum ModelCmd {
    /// Fit on a design and its labels; the stored threshold meets the FNR
    /// target on the training profiles
    Fit {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Logistic)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
        lambda: f64,
        /// High/low boundary on the label scale.
        #[arg(long, default_value_t = 0.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 1e-3)]
        fnr_target: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC, AUC and error on held-out profiles
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 1e-3)]
        fnr_target: f64,
        /// ROC table destination (CSV).
        #[arg(long)]
        roc: Option<PathBuf>,
    },
}

pub fn model(cmd: ModelCmd) -> Result<()> {
    match cmd {
        ModelCmd::Fit { design, scores, mode, lambda, cutoff, fnr_target, out } => {
            let design = cio::read_design(&design)?;
            let labels = cio::read_labels(&scores)?;
            let fit_mode = match mode {
                Mode::Logistic => FitMode::Classification { cutoff },
                Mode::Regression => FitMode::Regression,
            };
            let scorer = fit(&design, &labels, fit_mode, lambda)?;
            let roc = roc_and_auc(&scorer.score_design(&design)?, &binarize_labels(&labels, cutoff))?;
            let tuned = tune_threshold(&roc, fnr_target)?;
            if tuned.saturated {
                eprintln!("FNR target only met by flagging every profile");
            }
            cio::write_json(&out, &ModelDoc::new(&scorer, design.catalog(), tuned.threshold))?;
            eprintln!("training AUC {:.4}, threshold {}", roc.auc, tuned.threshold);
        }
        ModelCmd::Eval { model, design, scores, cutoff, fnr_target, roc } => {
            let doc: ModelDoc = cio::read_json(&model)?;
            let design = cio::read_design(&design)?;
            let scorer = doc.scorer_for(design.catalog())?;
            let predicted = scorer.score_design(&design)?;
            let truth = binarize_labels(&cio::read_labels(&scores)?, cutoff);
            let at_model = evaluate(&predicted, &truth, doc.threshold)?;
            let tuned = tune_threshold(&at_model.roc, fnr_target)?;
            let at_tuned = evaluate(&predicted, &truth, tuned.threshold)?;
            let best = at_model.roc.accuracy_optimal_threshold();
            let at_best = evaluate(&predicted, &truth, best)?;
            if let Some(path) = roc {
                cio::write_roc(&path, &at_model.roc)?;
            }
            let finite = |v: f64| if v.is_finite() { json!(v) } else { json!(v.to_string()) };
            let summary = json!({
                "profiles": truth.len(),
                "positives": at_model.roc.positives,
                "auc": at_model.auc,
                "model_threshold": { "threshold": finite(doc.threshold), "error": at_model.classification_error, "fnr": at_model.fnr },
                "fnr_tuned": { "threshold": finite(tuned.threshold), "saturated": tuned.saturated, "error": at_tuned.classification_error, "fnr": at_tuned.fnr },
                "accuracy_optimal": { "threshold": finite(best), "error": at_best.classification_error, "fnr": at_best.fnr },
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_parse() {
        assert_eq!(parse_counts("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_counts("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_counts("2, 5,6").unwrap(), vec![2, 5, 6]);
        assert!(parse_counts("5..1").is_err());
        assert!(parse_counts("x").is_err());
    }
}
