use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FuseError;
use crate::kg::{EntityId, ExtendedTriple, FactConfidence, KgSnapshot, SAME_AS_PREDICATE};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceTrustTable {
    pub trust: BTreeMap<String, f64>,
    pub iteration_count: usize,
    pub converged: bool,
    /// Trust after each iteration, starting with the initial values.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<BTreeMap<String, f64>>,
}

impl SourceTrustTable {
    /// Every source at the same trust, e.g. before any estimation ran.
    pub fn uniform<'a>(sources: impl IntoIterator<Item = &'a str>, t: f64) -> Self {
        Self { trust: sources.into_iter().map(|s| (s.to_string(), t)).collect(), ..Default::default() }
    }

    pub fn get(&self, source: &str) -> Option<f64> {
        self.trust.get(source).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub initial: f64,
    #[serde(default)]
    pub initial_overrides: BTreeMap<String, f64>,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self { initial: 0.7, initial_overrides: BTreeMap::new(), epsilon: 1e-6, max_iters: 100 }
    }
}

fn noisy_or(trust: impl IntoIterator<Item = f64>) -> f64 {
    1.0 - trust.into_iter().map(|t| 1.0 - t).product::<f64>()
}

/// 1 − Π (1 − trust(source)) over the fact's sources.
pub fn estimate_fact_confidence(fact: &ExtendedTriple, table: &SourceTrustTable) -> Result<FactConfidence, FuseError> {
    let ts = fact
        .sources
        .iter()
        .map(|s| table.get(s).ok_or_else(|| FuseError::UnknownSource(s.clone())))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(FactConfidence::new(noisy_or(ts).clamp(0.0, 1.0)).expect("clamped"))
}

type Slot<'a> = (&'a EntityId, String, Option<&'a str>, Option<&'a str>);

/// Fixed-point truth discovery. Fact confidence is the noisy-or of its
/// sources' trust; on functional slots competing values share one unit of
/// mass (confidences are rescaled when they sum past 1). A source's trust is
/// the mean confidence of its facts.
pub fn update_source_trust(
    snapshot: &KgSnapshot,
    functional: &BTreeSet<String>,
    cfg: &TrustConfig,
) -> SourceTrustTable {
    let facts: Vec<&ExtendedTriple> = snapshot.triples().filter(|t| t.predicate != SAME_AS_PREDICATE).collect();
    let slot_of: Vec<Option<Slot<'_>>> = facts
        .iter()
        .map(|t| {
            let path = t.predicate_path();
            functional.contains(&path).then_some((&t.subject, path, t.r_id.as_deref(), t.locale.as_deref()))
        })
        .collect();
    let mut trust: BTreeMap<String, f64> = facts
        .iter()
        .flat_map(|t| t.sources.iter())
        .map(|s| (s.clone(), cfg.initial_overrides.get(s).copied().unwrap_or(cfg.initial)))
        .collect();
    let mut table = SourceTrustTable { history: vec![trust.clone()], ..Default::default() };
    for it in 1..=cfg.max_iters {
        let mut conf: Vec<f64> = facts.iter().map(|t| noisy_or(t.sources.iter().map(|s| trust[s]))).collect();
        let mut slot_sum: BTreeMap<&Slot<'_>, f64> = BTreeMap::new();
        for (c, slot) in conf.iter().zip(&slot_of) {
            if let Some(s) = slot {
                *slot_sum.entry(s).or_default() += c;
            }
        }
        for (c, slot) in conf.iter_mut().zip(&slot_of) {
            if let Some(s) = slot {
                let sum = slot_sum[s];
                if sum > 1.0 {
                    *c /= sum;
                }
            }
        }
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for (t, c) in facts.iter().zip(&conf) {
            for s in &t.sources {
                let e = acc.entry(s).or_default();
                e.0 += c;
                e.1 += 1;
            }
        }
        let mut delta: f64 = 0.0;
        for (s, (sum, n)) in acc {
            let v = (sum / n as f64).clamp(0.0, 1.0);
            let old = trust.insert(s.to_string(), v).unwrap_or(v);
            delta = delta.max((v - old).abs());
        }
        table.history.push(trust.clone());
        table.iteration_count = it;
        if delta < cfg.epsilon {
            table.converged = true;
            break;
        }
    }
    table.trust = trust;
    table
}
