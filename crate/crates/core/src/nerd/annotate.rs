use serde::{Deserialize, Serialize};

use super::{disambiguate, retrieve_candidates, DisambiguationWeights, EntityView, Mention};
use crate::kg::EntityId;
use crate::text::{self, Token};

pub const DEFAULT_ANNOTATION_THRESHOLD: f64 = 0.5;

const CANDIDATES_PER_MENTION: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity: EntityId,
    pub confidence: f64,
}

fn sentences<'a>(s: &str, tokens: &'a [Token]) -> Vec<&'a [Token]> {
    let mut out = Vec::new();
    let mut from = 0;
    for i in 1..tokens.len() {
        if s[tokens[i - 1].end..tokens[i].start].contains(['.', '!', '?']) {
            out.push(&tokens[from..i]);
            from = i;
        }
    }
    if from < tokens.len() {
        out.push(&tokens[from..]);
    }
    out
}

/// Dictionary scan for alias matches (longest first, non-overlapping), each
/// disambiguated with its sentence as context. Rejected mentions are dropped.
pub fn annotate_text(
    s: &str,
    view: &EntityView,
    weights: &DisambiguationWeights,
    theta_reject: f64,
) -> Vec<Annotation> {
    let tokens = text::tokenize(s);
    let mut out = Vec::new();
    for sent in sentences(s, &tokens) {
        let context: Vec<String> = sent.iter().map(|t| t.text.clone()).collect();
        let mut i = 0;
        while i < sent.len() {
            let longest = (1..=view.max_alias_tokens.min(sent.len() - i)).rev().find(|&n| {
                let key = context[i..i + n].join(" ");
                view.alias_index.contains_key(&key)
            });
            let Some(n) = longest else {
                i += 1;
                continue;
            };
            let (start, end) = (sent[i].start, sent[i + n - 1].end);
            i += n;
            let Ok(mut m) = Mention::new(&s[start..end]) else {
                continue;
            };
            m.context_tokens = context.clone();
            let cands = retrieve_candidates(view, &m, CANDIDATES_PER_MENTION);
            let r = disambiguate(&m, &cands, view, weights, theta_reject);
            if let Some(e) = r.entity() {
                out.push(Annotation {
                    start,
                    end,
                    surface: s[start..end].to_string(),
                    entity: e.clone(),
                    confidence: r.confidence,
                });
            }
        }
    }
    out
}
