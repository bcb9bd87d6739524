//! Factor catalogs: ordered `factor_id -> formula` collections defining the
//! candidate universe. File format is UTF-8 lines `factor_id,formula` with
//! `#` comments; the formula itself may contain commas, so only the first
//! comma separates the fields.

use super::parser::{parse_alpha, ParseError};
use super::FactorExpr;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: missing `,` separator")]
    MissingSeparator { line: usize },
    #[error("line {line}: empty factor id")]
    EmptyId { line: usize },
    #[error("line {line}: duplicate factor id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: factor `{id}`: {source}")]
    Parse {
        line: usize,
        id: String,
        #[source]
        source: ParseError,
    },
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub source: String,
    pub expr: FactorExpr,
    /// Free-text slot filled later by semantic profiling.
    pub description: Option<String>,
}

/// Ordered, immutable factor universe. Iteration order equals file order and
/// defines the canonical ordering used everywhere downstream.
#[derive(Debug, Clone)]
pub struct FactorCatalog {
    entries: Vec<CatalogEntry>,
    index: BTreeMap<String, usize>,
}

impl FactorCatalog {
    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        let mut index = BTreeMap::new();
        for (i, entry) in entries.iter().enumerate() {
            if index.insert(entry.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId { line: i + 1, id: entry.id.clone() });
            }
        }
        Ok(FactorCatalog { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.index.get(id).map(|i| &self.entries[*i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn entry_at(&self, idx: usize) -> &CatalogEntry {
        &self.entries[idx]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

/// Parse catalog text. The first failing formula aborts the load with its
/// line number and factor id.
pub fn load_catalog_str(text: &str) -> Result<FactorCatalog, CatalogError> {
    let mut entries = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, formula) =
            line.split_once(',').ok_or(CatalogError::MissingSeparator { line: line_no })?;
        let id = id.trim().to_string();
        let formula = formula.trim().to_string();
        if id.is_empty() {
            return Err(CatalogError::EmptyId { line: line_no });
        }
        if index.contains_key(&id) {
            return Err(CatalogError::DuplicateId { line: line_no, id });
        }
        let expr = parse_alpha(&formula)
            .map_err(|source| CatalogError::Parse { line: line_no, id: id.clone(), source })?;
        index.insert(id.clone(), entries.len());
        entries.push(CatalogEntry { id, source: formula, expr, description: None });
    }
    Ok(FactorCatalog { entries, index })
}

/// Load a catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<FactorCatalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_catalog_str(&text)
}

/// The 40-formula default candidate set shipped with the crate.
pub fn default_catalog() -> FactorCatalog {
    load_catalog_str(include_str!("../../assets/catalog_default.txt"))
        .expect("bundled catalog parses")
}
