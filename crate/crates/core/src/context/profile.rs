//! Semantic factor profiles: the global market memory plus a factor's
//! quantitative backtest record, distilled into an instruction-manual style
//! text for the screening policy.

use super::client::{CompletionRequest, GenParams, TextGenClient};
use super::memory::MemoryState;
use super::ContextError;
use crate::dsl::CatalogEntry;
use crate::linear::FactorPerformance;

#[derive(Debug, Clone)]
pub struct FactorProfile {
    pub factor_id: String,
    pub text: String,
    /// The backtest record the profile was generated from.
    pub perf_snapshot: FactorPerformance,
}

/// Render the performance vector the way it is embedded into prompts; tests
/// key on these exact digits.
pub fn perf_digest(perf: &FactorPerformance) -> String {
    let decay: Vec<String> =
        perf.decay.iter().map(|(h, ic)| format!("h{h}={ic:.4}")).collect();
    format!(
        "mean RankIC {:.4}, IC volatility {:.4}, decay [{}], long-short cum return {:.4}, {} obs",
        perf.mean_rank_ic,
        perf.ic_volatility,
        decay.join(", "),
        perf.long_short_cum_return,
        perf.n_obs
    )
}

/// Generate one factor profile. The returned text always opens with a header
/// naming the factor id, so the profile/id invariant holds for any client.
pub fn profile_factor(
    m_global: &MemoryState,
    entry: &CatalogEntry,
    perf: &FactorPerformance,
    client: &dyn TextGenClient,
    model: &str,
    params: &GenParams,
) -> Result<FactorProfile, ContextError> {
    let prompt = format!(
        "Write a screening profile for one alpha factor: its mechanism, the market regimes it \
         suits, and its failure conditions.\n\nGlobal market memory:\n{}\n\nFactor {} formula: \
         {}\nBacktest record: {}\n",
        m_global.summary,
        entry.id,
        entry.source,
        perf_digest(perf),
    );
    let request = CompletionRequest::single_user(model, prompt, params.clone());
    let body = client.complete(&request).map_err(|source| ContextError::ProfileClient {
        factor_id: entry.id.clone(),
        source,
    })?;
    let text = format!("Factor {} profile:\n{}", entry.id, body);
    Ok(FactorProfile { factor_id: entry.id.clone(), text, perf_snapshot: perf.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{GenParams, MockClient};
    use crate::dsl::load_catalog_str;

    fn perf(id: &str, ic: f64) -> FactorPerformance {
        FactorPerformance {
            factor_id: id.into(),
            mean_rank_ic: ic,
            ic_volatility: 0.12,
            decay: vec![(1, ic), (5, ic / 2.0)],
            long_short_cum_return: 0.05,
            n_obs: 100,
            feasible: true,
        }
    }

    fn memory() -> MemoryState {
        MemoryState {
            week_index: 3,
            summary: "choppy, volume-driven market".into(),
            provenance: vec![],
            global: true,
        }
    }

    #[test]
    fn mock_profile_embeds_id_and_rank_ic_digits() {
        let catalog = load_catalog_str("alpha_006,(-1 * correlation(open, volume, 10))").unwrap();
        let entry = catalog.get("alpha_006").unwrap();
        let p = perf("alpha_006", 0.3917);
        let profile = profile_factor(
            &memory(),
            entry,
            &p,
            &MockClient::default(),
            "m",
            &GenParams::default(),
        )
        .unwrap();
        assert!(profile.text.contains("alpha_006"));
        assert!(profile.text.contains("0.3917"), "{}", profile.text);
    }

    #[test]
    fn identical_inputs_give_identical_profiles() {
        let catalog = load_catalog_str("a,rank(close)\n").unwrap();
        let entry = catalog.get("a").unwrap();
        let client = MockClient::default();
        let p = perf("a", 0.1);
        let run = || {
            profile_factor(&memory(), entry, &p, &client, "m", &GenParams::default())
                .unwrap()
                .text
        };
        assert_eq!(run(), run());
    }
}
