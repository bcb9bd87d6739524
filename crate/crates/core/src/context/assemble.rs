//! Decision-context assembly and response parsing.
//!
//! The prompt contract is explicit: the model must answer with a final
//! `<selection>id, id, ...</selection>` block. Parsing is total — any text
//! maps to a `RawResponse` whose status records how the selection was
//! recovered.

use super::client::{CompletionRequest, GenParams, TextGenClient};
use super::profile::FactorProfile;
use super::ContextError;
use crate::dsl::FactorCatalog;
use chrono::NaiveDate;
use serde::Serialize;

pub const DECISION_PREAMBLE: &str = include_str!("../../assets/decision_preamble.txt");

/// Fully rendered decision prompt for one day.
#[derive(Debug, Clone)]
pub struct DecisionContext {
    pub date: NaiveDate,
    /// Candidate ids in catalog order.
    pub candidate_ids: Vec<String>,
    pub prompt: String,
}

impl DecisionContext {
    pub fn request(&self, model: &str, params: &GenParams) -> CompletionRequest {
        CompletionRequest::single_user(model, self.prompt.clone(), params.clone())
    }

    pub fn complete_and_parse(
        &self,
        client: &dyn TextGenClient,
        model: &str,
        params: &GenParams,
        catalog: &FactorCatalog,
    ) -> Result<RawResponse, ContextError> {
        let reply = client.complete(&self.request(model, params))?;
        Ok(parse_selection(&reply, catalog))
    }
}

/// Build the deterministic decision prompt: preamble, numbered profiles in
/// catalog order, the market state, and the answer-format contract. Input
/// profile order does not matter; the output is canonical.
pub fn assemble_context(
    candidates: &[String],
    profiles: &[FactorProfile],
    state_text: &str,
    date: NaiveDate,
    catalog: &FactorCatalog,
) -> Result<DecisionContext, ContextError> {
    let mut ordered: Vec<(usize, &str)> = Vec::with_capacity(candidates.len());
    for id in candidates {
        let pos = catalog
            .position(id)
            .ok_or_else(|| ContextError::UnknownCandidate(id.clone()))?;
        if !ordered.iter().any(|(p, _)| *p == pos) {
            ordered.push((pos, id.as_str()));
        }
    }
    ordered.sort_by_key(|(pos, _)| *pos);

    let mut prompt = String::from(DECISION_PREAMBLE);
    prompt.push_str("\nFactor profiles:\n");
    for (n, (_, id)) in ordered.iter().enumerate() {
        let profile = profiles
            .iter()
            .find(|p| p.factor_id == *id)
            .ok_or_else(|| ContextError::MissingProfile(id.to_string()))?;
        prompt.push_str(&format!("{}. [{}] {}\n", n + 1, id, profile.text));
    }
    prompt.push_str(&format!("\nMarket state ({date}):\n{state_text}\n"));
    prompt.push_str(
        "\nRespond with concise reasoning, then one final line containing exactly \
         <selection>factor_id, factor_id, ...</selection> over the listed ids \
         (an empty <selection></selection> is allowed).\n",
    );

    Ok(DecisionContext {
        date,
        candidate_ids: ordered.into_iter().map(|(_, id)| id.to_string()).collect(),
        prompt,
    })
}

/// How the selection was obtained from the raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// Answer block present and every emitted id valid.
    Clean,
    /// Ids salvaged: either invalid ids inside the block were dropped, or
    /// the block was missing and catalog ids were found in free text.
    Recovered,
    /// Nothing recognizable; the selection is empty.
    Unparsable,
}

/// Parse outcome for one model response. `selection` only ever contains
/// catalog ids; names emitted but unknown land in `invalid_ids`.
#[derive(Debug, Clone, Serialize)]
pub struct RawResponse {
    pub text: String,
    pub selection: Vec<String>,
    pub status: ParseStatus,
    pub invalid_ids: Vec<String>,
}

/// Total parser for model responses: never fails, always yields a status.
pub fn parse_selection(response: &str, catalog: &FactorCatalog) -> RawResponse {
    if let Some(inner) = last_selection_block(response) {
        let mut selection = Vec::new();
        let mut invalid = Vec::new();
        for token in inner.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if catalog.contains(token) {
                if !selection.iter().any(|s| s == token) {
                    selection.push(token.to_string());
                }
            } else if !invalid.iter().any(|s| s == token) {
                invalid.push(token.to_string());
            }
        }
        let status = if invalid.is_empty() { ParseStatus::Clean } else { ParseStatus::Recovered };
        return RawResponse { text: response.to_string(), selection, status, invalid_ids: invalid };
    }

    // Fallback: scan the free text for catalog ids on word boundaries.
    let mut selection = Vec::new();
    for id in catalog.ids() {
        if contains_word(response, id) {
            selection.push(id.to_string());
        }
    }
    if selection.is_empty() {
        RawResponse {
            text: response.to_string(),
            selection,
            status: ParseStatus::Unparsable,
            invalid_ids: Vec::new(),
        }
    } else {
        RawResponse {
            text: response.to_string(),
            selection,
            status: ParseStatus::Recovered,
            invalid_ids: Vec::new(),
        }
    }
}

fn last_selection_block(text: &str) -> Option<&str> {
    let open = "<selection>";
    let close = "</selection>";
    let start = text.rfind(open)?;
    let rest = &text[start + open.len()..];
    let end = rest.find(close)?;
    Some(&rest[..end])
}

fn contains_word(haystack: &str, needle: &str) -> bool {
    let boundary = |c: Option<char>| match c {
        None => true,
        Some(c) => !(c.is_ascii_alphanumeric() || c == '_'),
    };
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let abs = from + pos;
        let before = haystack[..abs].chars().next_back();
        let after = haystack[abs + needle.len()..].chars().next();
        if boundary(before) && boundary(after) {
            return true;
        }
        from = abs + needle.len();
    }
    false
}
