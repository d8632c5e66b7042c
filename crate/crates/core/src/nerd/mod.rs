//! Named entity recognition and disambiguation against the graph.

mod annotate;
mod train;
mod view;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuse::ObjectResolver;
use crate::kg::{EntityId, ExtendedTriple, KgSnapshot, Object};
use crate::simstrings::qgram_jaccard;
use crate::text;

pub use annotate::{annotate_text, Annotation, DEFAULT_ANNOTATION_THRESHOLD};
pub use train::{fit_weights, generate_training_examples, TrainingExample};
pub use view::{EntityView, NerdEntityRecord, ViewConfig, INVERSE_SUFFIX, UNTAGGED_LOCALE};

/// Threshold for object resolution during construction.
pub const DEFAULT_RESOLUTION_THRESHOLD: f64 = 0.9;

pub const FEATURE_ALIAS: &str = "alias_similarity";
pub const FEATURE_RELATIONSHIPS: &str = "relationship_overlap";
pub const FEATURE_PROFILE: &str = "profile_overlap";
pub const FEATURE_TYPE: &str = "type_compatibility";
pub const FEATURE_IMPORTANCE: &str = "log_importance";

pub const FEATURES: [&str; 5] =
    [FEATURE_ALIAS, FEATURE_RELATIONSHIPS, FEATURE_PROFILE, FEATURE_TYPE, FEATURE_IMPORTANCE];

#[derive(Debug, Error)]
pub enum NerdError {
    #[error("mention surface is empty")]
    EmptyMention,
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("malformed weights: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mention {
    pub surface: String,
    pub context_tokens: Vec<String>,
    pub type_hint: Option<String>,
}

impl Mention {
    pub fn new(surface: impl Into<String>) -> Result<Self, NerdError> {
        let surface = surface.into();
        if text::fold(&surface).is_empty() {
            return Err(NerdError::EmptyMention);
        }
        Ok(Self { surface, context_tokens: Vec::new(), type_hint: None })
    }

    /// Adds the folded tokens of `context`.
    pub fn with_context(mut self, context: &str) -> Self {
        self.context_tokens.extend(text::words(context));
        self
    }

    pub fn with_type_hint(mut self, t: impl Into<String>) -> Self {
        self.type_hint = Some(t.into());
        self
    }

    /// Context tokens minus stopwords and the mention's own tokens.
    fn evidence(&self) -> BTreeSet<String> {
        let own: BTreeSet<String> = text::words(&self.surface).into_iter().collect();
        self.context_tokens
            .iter()
            .map(|t| text::fold(t))
            .filter(|t| !t.is_empty() && !text::is_stopword(t) && !own.contains(t))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: EntityId,
    pub alias_similarity: f64,
    pub matched_alias: String,
    pub importance: f64,
}

fn alias_similarity(view: &EntityView, mention: &str, alias: &str) -> f64 {
    match &view.encoder {
        Some(enc) => enc.similarity(mention, alias).map(|s| s.max(0.0)).unwrap_or(0.0),
        None => qgram_jaccard(mention, alias, 3),
    }
}

/// Top-`k` candidates by alias similarity, ties broken by importance then id.
/// Aliases sharing no character 3-gram with the mention are never scored.
pub fn retrieve_candidates(view: &EntityView, mention: &Mention, k: usize) -> Vec<Candidate> {
    retrieve_candidates_bounded(view, mention, k, None)
}

/// Like [`retrieve_candidates`] but scores at most `budget` entities, chosen
/// by importance, when the 3-gram prefilter lets more through.
pub fn retrieve_candidates_bounded(
    view: &EntityView,
    mention: &Mention,
    k: usize,
    budget: Option<usize>,
) -> Vec<Candidate> {
    assert!(k >= 1, "k must be at least 1");
    let m = text::fold(&mention.surface);
    if m.is_empty() {
        return Vec::new();
    }
    let aliases: BTreeSet<&String> =
        view::alias_grams(&m).iter().filter_map(|g| view.gram_index.get(g)).flatten().collect();
    let mut pool: BTreeMap<&EntityId, Vec<&String>> = BTreeMap::new();
    for a in aliases {
        for e in &view.alias_index[a] {
            pool.entry(e).or_default().push(a);
        }
    }
    if let Some(hint) = &mention.type_hint {
        pool.retain(|e, _| view.records[*e].types.iter().any(|t| t == hint));
    }
    let mut pool: Vec<(&EntityId, Vec<&String>)> = pool.into_iter().collect();
    if let Some(b) = budget {
        if pool.len() > b {
            pool.sort_by(|x, y| view.importance_of(y.0).total_cmp(&view.importance_of(x.0)).then_with(|| x.0.cmp(y.0)));
            pool.truncate(b);
        }
    }
    let mut out: Vec<Candidate> = pool
        .into_iter()
        .filter_map(|(e, als)| {
            let (sim, alias) = als
                .into_iter()
                .map(|a| (alias_similarity(view, &m, a), a))
                .max_by(|x, y| x.0.total_cmp(&y.0).then_with(|| y.1.cmp(x.1)))?;
            (sim > 0.0).then(|| Candidate {
                entity: e.clone(),
                alias_similarity: sim,
                matched_alias: alias.clone(),
                importance: view.importance_of(e),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.alias_similarity
            .total_cmp(&a.alias_similarity)
            .then_with(|| b.importance.total_cmp(&a.importance))
            .then_with(|| a.entity.cmp(&b.entity))
    });
    out.truncate(k);
    out
}

/// Logistic weights of the one-vs-all scorer. Serialized flat as
/// `{feature: weight, ..., "bias": b, "theta_reject": t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationWeights {
    pub bias: f64,
    pub theta_reject: f64,
    #[serde(flatten)]
    pub features: BTreeMap<String, f64>,
}

impl Default for DisambiguationWeights {
    fn default() -> Self {
        Self {
            bias: -4.0,
            theta_reject: DEFAULT_RESOLUTION_THRESHOLD,
            features: [
                (FEATURE_ALIAS, 4.0),
                (FEATURE_RELATIONSHIPS, 6.0),
                (FEATURE_PROFILE, 2.0),
                (FEATURE_TYPE, 1.0),
                (FEATURE_IMPORTANCE, 3.0),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        }
    }
}

impl DisambiguationWeights {
    pub fn weight(&self, feature: &str) -> f64 {
        self.features.get(feature).copied().unwrap_or(0.0)
    }

    pub fn check(&self) -> Result<(), NerdError> {
        match self.features.keys().find(|k| !FEATURES.contains(&k.as_str())) {
            Some(k) => Err(NerdError::UnknownFeature(k.clone())),
            None => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, NerdError> {
        let w: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        w.check()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<(), NerdError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    fn score(&self, x: &[f64; 5]) -> f64 {
        let z = self.bias + FEATURES.iter().zip(x).map(|(f, v)| self.weight(f) * v).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

/// 1 − 2^−n: one shared token is worth 0.5, each further one halves the gap to 1.
fn saturate(n: usize) -> f64 {
    1.0 - 0.5f64.powi(n as i32)
}

/// Feature vector in [`FEATURES`] order.
pub fn feature_vector(mention: &Mention, candidate: &Candidate, record: &NerdEntityRecord) -> [f64; 5] {
    let ev = mention.evidence();
    let rel = ev.intersection(&record.relationship_tokens()).count();
    let prof = ev.intersection(&record.profile_tokens()).count();
    let typed = mention.type_hint.as_ref().is_some_and(|h| record.types.iter().any(|t| t == h));
    [
        candidate.alias_similarity,
        saturate(rel),
        saturate(prof),
        if typed { 1.0 } else { 0.0 },
        (1.0 + candidate.importance.max(0.0)).ln() / std::f64::consts::LN_2,
    ]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Entity(EntityId),
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationResult {
    pub outcome: Outcome,
    pub confidence: f64,
    /// Independent one-vs-all scores, in candidate order.
    pub per_candidate_scores: Vec<(EntityId, f64)>,
}

impl DisambiguationResult {
    pub fn entity(&self) -> Option<&EntityId> {
        match &self.outcome {
            Outcome::Entity(e) => Some(e),
            Outcome::Reject => None,
        }
    }
}

/// Scores each candidate independently and accepts the best one if it
/// reaches `theta_reject`. Ties go to the earlier candidate.
pub fn disambiguate(
    mention: &Mention,
    candidates: &[Candidate],
    view: &EntityView,
    weights: &DisambiguationWeights,
    theta_reject: f64,
) -> DisambiguationResult {
    let scores: Vec<(EntityId, f64)> = candidates
        .iter()
        .filter_map(|c| {
            let rec = view.get(&c.entity)?;
            Some((c.entity.clone(), weights.score(&feature_vector(mention, c, rec))))
        })
        .collect();
    let best = scores.iter().enumerate().max_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then_with(|| j.cmp(i)));
    match best {
        Some((_, (e, s))) if *s >= theta_reject => DisambiguationResult {
            outcome: Outcome::Entity(e.clone()),
            confidence: *s,
            per_candidate_scores: scores.clone(),
        },
        Some((_, (_, s))) => {
            DisambiguationResult { outcome: Outcome::Reject, confidence: *s, per_candidate_scores: scores.clone() }
        }
        None => DisambiguationResult { outcome: Outcome::Reject, confidence: 0.0, per_candidate_scores: Vec::new() },
    }
}

/// Surface tokens of a subject's facts: literal values as text, entity
/// objects through their view aliases.
fn context_of(view: &EntityView, facts: &[ExtendedTriple], skip: &str) -> Vec<String> {
    let mut out = Vec::new();
    for t in facts {
        match &t.object {
            Object::Literal(l) if l != skip => out.extend(text::words(l)),
            Object::Entity(e) => {
                if let Some(r) = view.get(e) {
                    out.extend(r.aliases().flat_map(text::words));
                }
            }
            _ => {}
        }
    }
    out
}

/// Maps `literal` to a graph entity of `expected_type`, using the subject's
/// other facts as context; an empty `expected_type` gives no type hint.
/// `None` leaves the literal as it is.
pub fn resolve_object(
    view: &EntityView,
    literal: &str,
    subject_context: &[ExtendedTriple],
    expected_type: &str,
    weights: &DisambiguationWeights,
    theta_reject: f64,
) -> Option<EntityId> {
    let mut m = Mention::new(literal).ok()?;
    if !expected_type.is_empty() {
        m = m.with_type_hint(expected_type);
    }
    m.context_tokens = context_of(view, subject_context, literal);
    let cands = retrieve_candidates(view, &m, 10);
    disambiguate(&m, &cands, view, weights, theta_reject).entity().cloned()
}

/// [`ObjectResolver`] backed by an entity view.
pub struct NerdResolver<'a> {
    pub view: &'a EntityView,
    pub weights: &'a DisambiguationWeights,
    pub theta_reject: f64,
}

impl ObjectResolver for NerdResolver<'_> {
    fn resolve(
        &self,
        _snapshot: &KgSnapshot,
        subject_facts: &[ExtendedTriple],
        literal: &str,
        expected_type: &str,
    ) -> Option<EntityId> {
        resolve_object(self.view, literal, subject_facts, expected_type, self.weights, self.theta_reject)
    }
}
