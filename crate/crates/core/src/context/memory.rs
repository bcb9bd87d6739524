//! Iterative weekly market memory: each week's atomic descriptors are folded
//! into the running summary through the language model, week by week, until
//! the full window collapses into one global memory text.

use super::client::{CompletionRequest, GenParams, TextGenClient};
use super::descriptors::MarketDescriptors;
use super::{truncate_keep_recent, ContextError};
use chrono::{Datelike, NaiveDate};

/// Running summary after folding week `week_index`. Provenance lists every
/// descriptor date that has fed the summary so far.
#[derive(Debug, Clone)]
pub struct MemoryState {
    pub week_index: usize,
    pub summary: String,
    pub provenance: Vec<NaiveDate>,
    /// Set on the final state covering the whole window.
    pub global: bool,
}

/// Cap on the summary text carried between weeks; older content drops first.
pub const MEMORY_MAX_CHARS: usize = 6000;

/// Fold one week of descriptors into the memory.
pub fn build_weekly_memory(
    week_index: usize,
    descriptors: &[MarketDescriptors],
    previous: Option<&MemoryState>,
    client: &dyn TextGenClient,
    model: &str,
    params: &GenParams,
) -> Result<MemoryState, ContextError> {
    let mut prompt = String::from(
        "You maintain a running memory of market conditions. Merge the prior memory with this \
         week's observations into an updated summary that keeps regime shifts, dominant themes, \
         and notable extremes.\n",
    );
    match previous {
        Some(prev) => {
            prompt.push_str("\nPrior memory:\n");
            prompt.push_str(&prev.summary);
            prompt.push('\n');
        }
        None => prompt.push_str("\nPrior memory: (none)\n"),
    }
    prompt.push_str(&format!("\nWeek {week_index} observations:\n"));
    for d in descriptors {
        prompt.push_str(&format!("[{}] {}\n[{}] {}\n", d.date, d.s_price, d.date, d.s_news));
    }

    let request = CompletionRequest::single_user(model, prompt, params.clone());
    let summary = client
        .complete(&request)
        .map_err(|source| ContextError::WeeklyClient { week: week_index, source })?;
    let summary = truncate_keep_recent(&summary, MEMORY_MAX_CHARS);

    let mut provenance: Vec<NaiveDate> =
        previous.map(|p| p.provenance.clone()).unwrap_or_default();
    provenance.extend(descriptors.iter().map(|d| d.source_date));
    provenance.sort_unstable();
    provenance.dedup();

    Ok(MemoryState { week_index, summary, provenance, global: false })
}

/// Group descriptor references by ISO week, in date order. Week indexes are
/// sequential starting at 1.
pub fn group_by_iso_week(
    descriptors: &[MarketDescriptors],
) -> Vec<(usize, Vec<&MarketDescriptors>)> {
    let mut groups: Vec<((i32, u32), Vec<&MarketDescriptors>)> = Vec::new();
    for d in descriptors {
        let key = (d.date.iso_week().year(), d.date.iso_week().week());
        match groups.last_mut() {
            Some((k, bucket)) if *k == key => bucket.push(d),
            _ => groups.push((key, vec![d])),
        }
    }
    groups.into_iter().enumerate().map(|(i, (_, b))| (i + 1, b)).collect()
}

/// Fold every week in order and return the final memory tagged global.
pub fn build_global_memory(
    descriptors: &[MarketDescriptors],
    client: &dyn TextGenClient,
    model: &str,
    params: &GenParams,
) -> Result<MemoryState, ContextError> {
    let mut memory: Option<MemoryState> = None;
    for (week_index, bucket) in group_by_iso_week(descriptors) {
        let owned: Vec<MarketDescriptors> = bucket.into_iter().cloned().collect();
        let next =
            build_weekly_memory(week_index, &owned, memory.as_ref(), client, model, params)?;
        memory = Some(next);
    }
    let mut memory = memory.unwrap_or(MemoryState {
        week_index: 0,
        summary: "(empty window)".to_string(),
        provenance: Vec::new(),
        global: false,
    });
    memory.global = true;
    Ok(memory)
}
