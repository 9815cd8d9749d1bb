//! Study lifecycle service: persistence, questionnaire assignment, response
//! intake and aggregation, exposed over HTTP.

pub mod api;
pub mod auth;
pub mod error;
pub mod store;

pub use api::{router, serve, AppState};
pub use error::{Result, ServiceError};
pub use store::{CreateStudy, StudyStatus, StudyStore};
