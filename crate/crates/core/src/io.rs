//! File formats: catalogs, designs (CSV plus level sidecar), questionnaire
//! documents, tab-separated response logs, score tables and models.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{AttributeCatalog, ProfileId};
use crate::choice::{ChoiceResponse, ScoreEntry, ScoreTable};
use crate::design::{Design, DesignDoc};
use crate::error::{Error, Result};
use crate::questionnaire::{ChoiceSet, Questionnaire, QuestionnaireSource, StudyPlan};
use crate::risk::{Link, LinearScorer, RocCurve};

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_catalog(path: &Path) -> Result<AttributeCatalog> {
    read_json(path)
}

/// `design.csv` pairs with `design.levels.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("levels.json")
}

/// Coded matrix as CSV (`id` then coded column names) plus the level
/// sidecar next to it.
pub fn write_design(csv_path: &Path, design: &Design) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["id".to_string()];
    header.extend(design.catalog().coded_column_names());
    w.write_record(&header)?;
    for (i, p) in design.profiles().iter().enumerate() {
        let mut rec = vec![p.id.to_string()];
        rec.extend(design.coded_matrix().row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(&sidecar_path(csv_path), &design.to_doc())
}

/// Loads a design from its sidecar. Accepts the CSV path or the sidecar
/// itself; a CSV whose rows disagree with the sidecar coding is rejected.
pub fn read_design(path: &Path) -> Result<Design> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    let sidecar = if is_json { path.to_path_buf() } else { sidecar_path(path) };
    let design = Design::from_doc(read_json::<DesignDoc>(&sidecar)?)?;
    if !is_json {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut expected = vec!["id".to_string()];
        expected.extend(design.catalog().coded_column_names());
        if header != expected {
            return Err(Error::Schema(format!("{} header does not match its sidecar", path.display())));
        }
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            let id: ProfileId = rec[0]
                .parse()
                .map_err(|_| Error::Schema(format!("bad profile id `{}`", &rec[0])))?;
            let coded = design
                .coded_row(id)
                .ok_or_else(|| Error::Schema(format!("profile {id} missing from sidecar")))?;
            for (field, v) in rec.iter().skip(1).zip(coded) {
                let parsed: f64 = field.parse().map_err(|_| Error::Schema(format!("bad value `{field}`")))?;
                if parsed != v {
                    return Err(Error::Schema(format!("profile {id} coding differs from sidecar")));
                }
            }
            rows += 1;
        }
        if rows != design.len() {
            return Err(Error::Schema(format!("CSV has {rows} rows, sidecar {}", design.len())));
        }
    }
    Ok(design)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireEntry {
    pub index: usize,
    pub source: QuestionnaireSource,
    pub sets: Vec<Vec<ProfileId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireDoc {
    pub study_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<StudyPlan>,
    pub set_size: usize,
    pub questionnaires: Vec<QuestionnaireEntry>,
}

impl QuestionnaireDoc {
    pub fn new(study_id: impl Into<String>, plan: Option<StudyPlan>, questionnaires: &[Questionnaire]) -> Self {
        Self {
            study_id: study_id.into(),
            plan,
            set_size: questionnaires.first().map_or(plan.map_or(0, |p| p.set_size), Questionnaire::set_size),
            questionnaires: questionnaires
                .iter()
                .map(|q| QuestionnaireEntry {
                    index: q.questionnaire_index,
                    source: q.source,
                    sets: q.sets.iter().map(|s| s.member_ids.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_questionnaires(&self) -> Result<Vec<Questionnaire>> {
        self.questionnaires
            .iter()
            .map(|e| {
                if e.sets.iter().any(|s| s.len() != self.set_size) {
                    return Err(Error::Schema(format!(
                        "questionnaire {} has a set whose size is not {}",
                        e.index, self.set_size
                    )));
                }
                Ok(Questionnaire {
                    questionnaire_index: e.index,
                    source: e.source,
                    sets: e
                        .sets
                        .iter()
                        .enumerate()
                        .map(|(k, ids)| ChoiceSet { set_index: k, member_ids: ids.clone() })
                        .collect(),
                })
            })
            .collect()
    }
}

/// One line of the response log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub labeler_id: String,
    pub response: ChoiceResponse,
    /// ISO-8601 timestamp, kept verbatim.
    pub timestamp: String,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let r = &self.response;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.labeler_id, r.questionnaire_index, r.set_index, r.most_id, r.least_id, self.timestamp
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Schema(format!("response line has {} fields, expected 6", fields.len())));
        }
        let num = |i: usize, what: &str| -> Result<u64> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("{what} `{}` is not a non-negative integer", fields[i])))
        };
        let labeler_id = fields[0].trim();
        if labeler_id.is_empty() {
            return Err(Error::Schema("empty labeler id".into()));
        }
        Ok(Self {
            labeler_id: labeler_id.to_string(),
            response: ChoiceResponse {
                questionnaire_index: num(1, "questionnaire index")? as usize,
                set_index: num(2, "set index")? as usize,
                most_id: num(3, "most id")? as ProfileId,
                least_id: num(4, "least id")? as ProfileId,
            },
            timestamp: fields[5].trim().to_string(),
        })
    }
}

/// Parses a response log; blank lines and `#` comments are skipped. Errors
/// name the 1-based line number.
pub fn parse_response_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            LogRecord::parse_line(l).map_err(|e| match e {
                Error::Schema(m) => Error::Schema(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

pub fn read_response_log(path: &Path) -> Result<Vec<LogRecord>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_response_log(&text)
}

pub fn write_response_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    id: ProfileId,
    mean_choice: f64,
    y: f64,
}

pub fn write_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    write_scores_to(File::create(path)?, table)
}

pub fn write_scores_to<W: Write>(out: W, table: &ScoreTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in &table.entries {
        w.serialize(ScoreRow { id: e.id, mean_choice: e.mean_choice, y: e.label })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<ScoreRow>()
        .map(|row| {
            let row = row?;
            Ok(ScoreEntry { id: row.id, mean_choice: row.mean_choice, label: row.y })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<ProfileId, f64>> {
    Ok(read_scores(path)?.into_iter().map(|e| (e.id, e.label)).collect())
}

/// JSON numbers cannot hold infinities; those are written as strings.
mod lenient_f64 {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub weights: Vec<f64>,
    pub feature_names: Vec<String>,
    pub bias: f64,
    pub link: Link,
    #[serde(with = "lenient_f64")]
    pub threshold: f64,
    pub catalog_fingerprint: String,
}

impl ModelDoc {
    pub fn new(scorer: &LinearScorer, catalog: &AttributeCatalog, threshold: f64) -> Self {
        Self {
            weights: scorer.weights.clone(),
            feature_names: catalog.coded_column_names().into_iter().skip(1).collect(),
            bias: scorer.bias,
            link: scorer.link,
            threshold,
            catalog_fingerprint: catalog.fingerprint(),
        }
    }

    pub fn scorer(&self) -> LinearScorer {
        LinearScorer { weights: self.weights.clone(), bias: self.bias, link: self.link }
    }

    /// The scorer, provided `catalog` is the one it was trained on.
    pub fn scorer_for(&self, catalog: &AttributeCatalog) -> Result<LinearScorer> {
        if catalog.fingerprint() != self.catalog_fingerprint {
            return Err(Error::Schema("model was trained on a different attribute catalog".into()));
        }
        Ok(self.scorer())
    }
}

pub fn write_roc(path: &Path, roc: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &roc.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{federov_exchange, ExchangeParams};
    use crate::prior::LabelPrior;
    use crate::questionnaire::{generate_questionnaires, plan_study};

    #[test]
    fn design_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cat = AttributeCatalog::stand_in();
        let d = federov_exchange(&cat, &ExchangeParams::new(40).with_pool(400), 1).unwrap();
        let path = dir.path().join("design.csv");
        write_design(&path, &d).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = read_design(&path).unwrap();
        assert_eq!(back.profiles(), d.profiles());
        assert_eq!(back.catalog(), d.catalog());
        let via_json = read_design(&sidecar_path(&path)).unwrap();
        assert_eq!(via_json.profiles(), d.profiles());
    }

    #[test]
    fn tampered_design_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cat = AttributeCatalog::binary(3);
        let d = federov_exchange(&cat, &ExchangeParams::new(8), 1).unwrap();
        let path = dir.path().join("d.csv");
        write_design(&path, &d).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(read_design(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn questionnaire_doc_round_trip() {
        let ids: Vec<ProfileId> = (0..20).collect();
        let plan = plan_study(20).unwrap();
        let qs = generate_questionnaires(&ids, &plan, 4).unwrap();
        let doc = QuestionnaireDoc::new("s1", Some(plan), &qs);
        let text = serde_json::to_string(&doc).unwrap();
        let back: QuestionnaireDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_questionnaires().unwrap(), qs);
    }

    #[test]
    fn log_line_round_trip_and_errors() {
        let rec = LogRecord {
            labeler_id: "sma-07".into(),
            response: ChoiceResponse { questionnaire_index: 3, set_index: 11, most_id: 40, least_id: 2 },
            timestamp: "2024-05-01T12:00:00Z".into(),
        };
        assert_eq!(LogRecord::parse_line(&rec.to_line()).unwrap(), rec);
        let text = format!("# header\n{}\n\nbad\tline\n", rec.to_line());
        let err = parse_response_log(&text).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(LogRecord::parse_line("a\t1\t2\t-3\t4\tT").is_err());
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = ScoreTable {
            q: 2,
            set_size: 4,
            prior: LabelPrior::standard_uniform(),
            entries: vec![
                ScoreEntry { id: 0, mean_choice: 0.5, label: 0.3 },
                ScoreEntry { id: 1, mean_choice: -1.0, label: -1.0 },
            ],
        };
        let path = dir.path().join("s.csv");
        write_scores(&path, &table).unwrap();
        assert_eq!(read_scores(&path).unwrap(), table.entries);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("id,mean_choice,y\n"));
    }

    #[test]
    fn model_threshold_infinity_survives_json() {
        let cat = AttributeCatalog::binary(2);
        let scorer = LinearScorer { weights: vec![0.5, -1.0], bias: 0.1, link: Link::Logistic };
        let doc = ModelDoc::new(&scorer, &cat, f64::INFINITY);
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        assert!(back.scorer_for(&cat).is_ok());
        assert!(back.scorer_for(&AttributeCatalog::binary(3)).is_err());
    }
}
