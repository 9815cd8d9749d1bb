//! Attribute catalogs, profiles, and the dummy coding that maps a profile
//! onto a row of the model matrix.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type ProfileId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<String>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

#[derive(Deserialize)]
struct CatalogDoc {
    attributes: Vec<Attribute>,
}

/// Ordered set of discrete attributes defining the feature space.
///
/// The coded dimension is `1 + sum(levels - 1)`: one intercept column plus a
/// dummy block per attribute whose reference level (index 0) codes to zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CatalogDoc")]
pub struct AttributeCatalog {
    attributes: Vec<Attribute>,
}

impl TryFrom<CatalogDoc> for AttributeCatalog {
    type Error = Error;

    fn try_from(doc: CatalogDoc) -> Result<Self> {
        AttributeCatalog::new(doc.attributes)
    }
}

impl AttributeCatalog {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("catalog has no attributes".into()));
        }
        let mut names = HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", attr.name)));
            }
            if attr.levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` needs at least 2 levels",
                    attr.name
                )));
            }
            let mut seen = HashSet::new();
            for level in &attr.levels {
                if !seen.insert(level.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate level `{level}` in attribute `{}`",
                        attr.name
                    )));
                }
            }
        }
        Ok(Self { attributes })
    }

    /// `count` binary no/yes flags named `flag_00`, `flag_01`, ...
    pub fn binary(count: usize) -> Self {
        let attributes = (0..count)
            .map(|i| Attribute::new(format!("flag_{i:02}"), &["no", "yes"]))
            .collect();
        Self::new(attributes).expect("generated catalog is valid")
    }

    /// Default 24-attribute catalog of KYC-style risk features: twenty binary
    /// flags and four three-level bands. Coded dimension 29.
    pub fn stand_in() -> Self {
        const BANDS: [(&str, [&str; 3]); 4] = [
            ("tenure_band", ["over_5y", "1_to_5y", "under_1y"]),
            ("income_band", ["low", "medium", "high"]),
            ("geography_risk", ["low", "medium", "high"]),
            ("account_activity", ["low", "medium", "high"]),
        ];
        const FLAGS: [&str; 20] = [
            "pep_flag",
            "sanctions_screen_hit",
            "adverse_media_flag",
            "cash_intensive_business",
            "high_risk_industry",
            "offshore_entity",
            "shell_company_indicator",
            "third_party_payments",
            "cross_border_wires",
            "source_of_funds_unverified",
            "beneficial_owner_undisclosed",
            "complex_ownership",
            "prior_sar_filed",
            "prior_alert",
            "rapid_account_opening",
            "multiple_accounts",
            "nominee_director",
            "crypto_exposure",
            "correspondent_banking",
            "incomplete_kyc",
        ];
        let mut attributes: Vec<Attribute> =
            BANDS.iter().map(|(name, levels)| Attribute::new(*name, levels)).collect();
        attributes.extend(FLAGS.iter().map(|name| Attribute::new(*name, &["no", "yes"])));
        Self::new(attributes).expect("stand-in catalog is valid")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Number of model-matrix columns, intercept included.
    pub fn coded_dim(&self) -> usize {
        1 + self.attributes.iter().map(|a| a.levels.len() - 1).sum::<usize>()
    }

    /// Number of distinct level combinations, saturating at `u128::MAX`.
    pub fn factorial_size(&self) -> u128 {
        self.attributes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.levels.len() as u128))
            .unwrap_or(u128::MAX)
    }

    pub fn coded_column_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        for attr in &self.attributes {
            for level in &attr.levels[1..] {
                names.push(format!("{}={}", attr.name, level));
            }
        }
        names
    }

    pub fn check_levels(&self, levels: &[usize]) -> Result<()> {
        if levels.len() != self.attributes.len() {
            return Err(Error::Schema(format!(
                "profile has {} levels, catalog has {} attributes",
                levels.len(),
                self.attributes.len()
            )));
        }
        for (attr, &level) in self.attributes.iter().zip(levels) {
            if level >= attr.levels.len() {
                return Err(Error::Schema(format!(
                    "level {level} out of range for attribute `{}` ({} levels)",
                    attr.name,
                    attr.levels.len()
                )));
            }
        }
        Ok(())
    }

    /// Dummy-coded row for a level assignment. Callers must have validated it.
    pub(crate) fn code_levels_into(&self, levels: &[usize], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        let mut offset = 1;
        for (attr, &level) in self.attributes.iter().zip(levels) {
            if level > 0 {
                out[offset + level - 1] = 1.0;
            }
            offset += attr.levels.len() - 1;
        }
    }

    pub(crate) fn random_levels<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.attributes
            .iter()
            .map(|a| rng.random_range(0..a.levels.len()))
            .collect()
    }

    /// All level combinations in mixed-radix order (last attribute fastest).
    pub fn full_factorial(&self) -> Result<Vec<Vec<usize>>> {
        let size = self.factorial_size();
        if size > 1 << 22 {
            return Err(Error::Input(format!(
                "full factorial of {size} runs is too large to enumerate"
            )));
        }
        let radices: Vec<usize> = self.attributes.iter().map(|a| a.levels.len()).collect();
        let mut rows = Vec::with_capacity(size as usize);
        let mut current = vec![0usize; radices.len()];
        loop {
            rows.push(current.clone());
            let mut pos = radices.len();
            loop {
                if pos == 0 {
                    return Ok(rows);
                }
                pos -= 1;
                current[pos] += 1;
                if current[pos] < radices[pos] {
                    break;
                }
                current[pos] = 0;
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the feature space a
    /// persisted model was trained on.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("catalog serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn level_name(&self, attribute: usize, level: usize) -> &str {
        &self.attributes[attribute].levels[level]
    }
}

/// One synthetic example: a level index per catalog attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Profile {
    pub id: ProfileId,
    pub levels: Vec<usize>,
}

/// Dummy-coded model-matrix row for `profile`, intercept first.
pub fn encode_profile(profile: &Profile, catalog: &AttributeCatalog) -> Result<Vec<f64>> {
    catalog.check_levels(&profile.levels)?;
    let mut row = vec![0.0; catalog.coded_dim()];
    catalog.code_levels_into(&profile.levels, &mut row);
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(levels: &[usize]) -> Profile {
        Profile { id: 0, levels: levels.to_vec() }
    }

    #[test]
    fn binary_attribute_coding() {
        let cat = AttributeCatalog::binary(1);
        assert_eq!(encode_profile(&profile(&[0]), &cat).unwrap(), vec![1.0, 0.0]);
        assert_eq!(encode_profile(&profile(&[1]), &cat).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn three_level_coding_is_full_rank() {
        let cat = AttributeCatalog::new(vec![Attribute::new("band", &["a", "b", "c"])]).unwrap();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|l| encode_profile(&profile(&[l]), &cat).unwrap())
            .collect();
        assert_eq!(rows[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(rows[1], vec![1.0, 1.0, 0.0]);
        assert_eq!(rows[2], vec![1.0, 0.0, 1.0]);
        let m = nalgebra::DMatrix::from_fn(3, 3, |i, j| rows[i][j]);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_level_is_schema_error() {
        let cat = AttributeCatalog::binary(2);
        let err = encode_profile(&profile(&[0, 2]), &cat).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(matches!(encode_profile(&profile(&[0]), &cat), Err(Error::Schema(_))));
    }

    #[test]
    fn catalog_validation() {
        assert!(AttributeCatalog::new(vec![Attribute::new("a", &["x"])]).is_err());
        assert!(AttributeCatalog::new(vec![
            Attribute::new("a", &["x", "y"]),
            Attribute::new("a", &["x", "y"]),
        ])
        .is_err());
        assert!(AttributeCatalog::new(vec![Attribute::new("a", &["x", "x"])]).is_err());
        let json = r#"{"attributes":[{"name":"a","levels":["x"]}]}"#;
        assert!(serde_json::from_str::<AttributeCatalog>(json).is_err());
    }

    #[test]
    fn stand_in_dimensions() {
        let cat = AttributeCatalog::stand_in();
        assert_eq!(cat.len(), 24);
        assert_eq!(cat.coded_dim(), 29);
        assert_eq!(cat.coded_column_names().len(), 29);
    }

    #[test]
    fn full_factorial_enumerates_every_combination() {
        let cat = AttributeCatalog::new(vec![
            Attribute::new("a", &["x", "y"]),
            Attribute::new("b", &["p", "q", "r"]),
        ])
        .unwrap();
        let rows = cat.full_factorial().unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0], vec![0, 0]);
        assert_eq!(rows[5], vec![1, 2]);
        let distinct: HashSet<_> = rows.iter().collect();
        assert_eq!(distinct.len(), 6);
    }
}
