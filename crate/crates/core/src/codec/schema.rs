//! Declarative column typing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    /// Continuous values plus a set of point masses ("singular values").
    Mixed,
    /// Heavy-tailed numeric column, log-transformed before mixture fitting.
    Longtail,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ColumnKind::Categorical)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub singular_values: Vec<f64>,
    /// Declared category set; discovered from data when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub is_target: bool,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
            singular_values: Vec::new(),
            categories: Vec::new(),
            is_target: false,
        }
    }

    pub fn with_singular_values(mut self, values: Vec<f64>) -> Self {
        self.singular_values = values;
        self
    }

    pub fn with_categories(mut self, categories: Vec<String>) -> Self {
        self.categories = categories;
        self
    }

    pub fn target(mut self) -> Self {
        self.is_target = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                return Err(Error::Schema("column with empty name".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            match col.kind {
                ColumnKind::Mixed if col.singular_values.is_empty() => {
                    return Err(Error::Schema(format!(
                        "mixed column `{}` needs singular_values",
                        col.name
                    )));
                }
                ColumnKind::Mixed => {}
                _ if !col.singular_values.is_empty() => {
                    return Err(Error::Schema(format!(
                        "singular_values are only valid on mixed columns (`{}`)",
                        col.name
                    )));
                }
                _ => {}
            }
            if col.singular_values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "non-finite singular value in `{}`",
                    col.name
                )));
            }
            for (i, a) in col.singular_values.iter().enumerate() {
                if col.singular_values[..i].contains(a) {
                    return Err(Error::Schema(format!(
                        "repeated singular value {a} in `{}`",
                        col.name
                    )));
                }
            }
            if !col.categories.is_empty() {
                if col.kind != ColumnKind::Categorical {
                    return Err(Error::Schema(format!(
                        "categories are only valid on categorical columns (`{}`)",
                        col.name
                    )));
                }
                let distinct: HashSet<_> = col.categories.iter().collect();
                if distinct.len() != col.categories.len() {
                    return Err(Error::Schema(format!(
                        "repeated category in `{}`",
                        col.name
                    )));
                }
            }
        }
        let targets = self.columns.iter().filter(|c| c.is_target).count();
        if targets > 1 {
            return Err(Error::Schema(format!(
                "{targets} columns marked is_target; at most one allowed"
            )));
        }
        Ok(())
    }

    pub fn target_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.is_target)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Parses and validates a schema document of the form
/// `{"columns": [{"name": .., "kind": .., ...}, ...]}`.
pub fn parse_schema(config_text: &str) -> Result<TableSchema> {
    let schema: TableSchema = serde_json::from_str(config_text)
        .map_err(|e| Error::Schema(format!("malformed schema document: {e}")))?;
    schema.validate()?;
    Ok(schema)
}
