//! Best-worst labeling of risk profiles: D-optimal profile designs,
//! balanced questionnaires, choice-to-score inversion, oracle simulation
//! and a linear risk scorer trained on the resulting labels.

pub mod catalog;
pub mod choice;
pub mod design;
pub mod error;
pub mod io;
pub mod prior;
pub mod pipeline;
pub mod questionnaire;
pub mod rng;
pub mod risk;
pub mod simulation;

pub use catalog::{encode_profile, Attribute, AttributeCatalog, Profile, ProfileId};
pub use choice::{
    encode_choices, expected_choice, invert_choice, mean_choice, scores_from_study, ChoiceResponse, MeanChoice,
    QuestionnaireEncoding, ScoreEntry, ScoreTable,
};
pub use design::{d_criterion, federov_exchange, Design, ExchangeParams};
pub use error::{Error, Result};
pub use prior::LabelPrior;
pub use questionnaire::{generate_questionnaires, plan_study, ChoiceSet, Questionnaire, StudyPlan};
pub use risk::{binarize_labels, evaluate, fit, roc_and_auc, tune_threshold, FitMode, LinearScorer, RiskClass};
