//! Pluggable bearer-token checks.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, ServiceError};

/// Credentials presented with a request: a bearer token (header or `token`
/// query parameter) and, for session creation, the claimed labeler id.
#[derive(Debug, Default, Clone)]
pub struct Credentials<'a> {
    pub token: Option<&'a str>,
    pub labeler_id: Option<&'a str>,
}

pub trait Authenticator: Send + Sync {
    /// Resolves the labeler making the request.
    fn labeler(&self, creds: &Credentials<'_>) -> Result<String>;

    /// Gate for study administration (create, open, aggregate, import).
    fn admin(&self, creds: &Credentials<'_>) -> Result<()>;
}

fn claimed(creds: &Credentials<'_>) -> Result<String> {
    match creds.labeler_id.or(creds.token) {
        Some(id) if !id.trim().is_empty() => Ok(id.trim().to_string()),
        _ => Err(ServiceError::Unauthorized("labeler id required".into())),
    }
}

/// Accepts any labeler. Intended for local runs and tests.
#[derive(Debug, Default)]
pub struct OpenAccess;

impl Authenticator for OpenAccess {
    fn labeler(&self, creds: &Credentials<'_>) -> Result<String> {
        claimed(creds)
    }

    fn admin(&self, _: &Credentials<'_>) -> Result<()> {
        Ok(())
    }
}

/// Dev mode: any labeler on a fixed roster.
#[derive(Debug)]
pub struct Roster {
    labelers: HashSet<String>,
}

impl Roster {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labelers: I) -> Self {
        Self { labelers: labelers.into_iter().map(Into::into).collect() }
    }
}

impl Authenticator for Roster {
    fn labeler(&self, creds: &Credentials<'_>) -> Result<String> {
        let id = claimed(creds)?;
        if self.labelers.contains(&id) {
            Ok(id)
        } else {
            Err(ServiceError::Unauthorized(format!("labeler `{id}` is not on the roster")))
        }
    }

    fn admin(&self, _: &Credentials<'_>) -> Result<()> {
        Ok(())
    }
}

/// Bearer tokens mapped to labeler ids, plus an administrator token.
#[derive(Debug)]
pub struct TokenTable {
    tokens: HashMap<String, String>,
    admin_token: String,
}

impl TokenTable {
    pub fn new(tokens: HashMap<String, String>, admin_token: impl Into<String>) -> Self {
        Self { tokens, admin_token: admin_token.into() }
    }
}

impl Authenticator for TokenTable {
    fn labeler(&self, creds: &Credentials<'_>) -> Result<String> {
        let token = creds.token.ok_or_else(|| ServiceError::Unauthorized("bearer token required".into()))?;
        let id = self
            .tokens
            .get(token)
            .ok_or_else(|| ServiceError::Unauthorized("unknown token".into()))?;
        match creds.labeler_id {
            Some(claim) if claim != id => {
                Err(ServiceError::Unauthorized(format!("token does not belong to labeler `{claim}`")))
            }
            _ => Ok(id.clone()),
        }
    }

    fn admin(&self, creds: &Credentials<'_>) -> Result<()> {
        if creds.token == Some(self.admin_token.as_str()) {
            Ok(())
        } else {
            Err(ServiceError::Unauthorized("administrator token required".into()))
        }
    }
}
