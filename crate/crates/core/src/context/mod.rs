//! Semantic layer: market descriptors, iterative weekly memory, factor
//! profiles, decision-context assembly, and response parsing, all over a
//! pluggable text-generation client.
//!
//! Everything here is deterministic under the mock client: two runs with the
//! same inputs produce identical prompts, memories, and selections. Remote
//! calls carry timeouts and bounded retries and never silently degrade to
//! the mock.

mod assemble;
mod client;
mod descriptors;
mod memory;
mod pipeline;
mod profile;

pub use assemble::{assemble_context, parse_selection, DecisionContext, ParseStatus, RawResponse};
pub use client::{
    ClientError, CompletionRequest, GenParams, HttpClientConfig, HttpTextGenClient, Message,
    MockClient, TextGenClient,
};
pub use descriptors::{news_descriptor, price_descriptor, MarketDescriptors, NewsSource};
pub use memory::{build_global_memory, build_weekly_memory, group_by_iso_week, MemoryState};
pub use pipeline::{
    run_screening_pipeline, PipelineConfig, PipelineRun, ProvenanceEntry, ProvenanceLog,
};
pub use profile::{profile_factor, FactorProfile};

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("client failure: {0}")]
    Client(#[from] ClientError),
    #[error("client failure in week {week}: {source}")]
    WeeklyClient {
        week: usize,
        #[source]
        source: ClientError,
    },
    #[error("client failure for factor {factor_id}: {source}")]
    ProfileClient {
        factor_id: String,
        #[source]
        source: ClientError,
    },
    #[error("missing {field} descriptor for {date}")]
    MissingDescriptor { date: NaiveDate, field: &'static str },
    #[error("no profile for candidate factor {0}")]
    MissingProfile(String),
    #[error("candidate factor {0} not in catalog")]
    UnknownCandidate(String),
    #[error("date index {0} out of panel range")]
    DateOutOfRange(usize),
    #[error("weeks must be contiguous: week {0} followed by {1}")]
    NonContiguousWeeks(usize, usize),
}

/// Truncate to at most `max_chars`, keeping the most recent (trailing)
/// content. Long histories lose their oldest lines first.
pub fn truncate_keep_recent(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let tail: String = text
        .chars()
        .rev()
        .take(max_chars)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    // Cut at the first line break so we do not start mid-line.
    match tail.find('\n') {
        Some(pos) if pos + 1 < tail.len() => tail[pos + 1..].to_string(),
        _ => tail,
    }
}
