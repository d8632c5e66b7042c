use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EncoderRegistry, LinkEntity, LinkError, LinkingPayload};
use crate::kg::EntityId;
use crate::simstrings::{edit_similarity, qgram_jaccard};
use crate::text::{fold, normalize, words};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub left: EntityId,
    pub right: EntityId,
    pub probability: f64,
}

/// Value comparators. Multi-valued predicates score the best value pair; a
/// side without values scores 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Exact,
    Jaccard {
        q: usize,
    },
    Edit,
    TokenJaccard,
    /// 1 − |x − y| / scale, floored at 0; non-numbers score 0.
    Numeric {
        scale: f64,
    },
    /// Cosine of a trained encoder, floored at 0.
    Learned {
        string_type: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub predicate: String,
    pub comparator: Comparator,
    pub weight: f64,
    /// Rule models only: the feature fires when its similarity reaches this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// clamp(bias + Σ weight·[sim ≥ threshold], 0, 1)
    Rule,
    /// σ(bias + Σ weight·sim)
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingModel {
    pub kind: ModelKind,
    pub bias: f64,
    pub features: Vec<Feature>,
}

#[derive(Clone, Debug, Default)]
pub struct MatchContext {
    pub encoders: EncoderRegistry,
}

fn compare(c: &Comparator, a: &str, b: &str, ctx: &MatchContext) -> Result<f64, LinkError> {
    Ok(match c {
        Comparator::Exact => f64::from(normalize(a) == normalize(b)),
        Comparator::Jaccard { q } => qgram_jaccard(&fold(a), &fold(b), *q),
        Comparator::Edit => edit_similarity(&normalize(a), &normalize(b)),
        Comparator::TokenJaccard => {
            let wa: BTreeSet<String> = words(a).into_iter().collect();
            let wb: BTreeSet<String> = words(b).into_iter().collect();
            let union = wa.union(&wb).count();
            if union == 0 {
                0.0
            } else {
                wa.intersection(&wb).count() as f64 / union as f64
            }
        }
        Comparator::Numeric { scale } => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(x), Ok(y)) => (1.0 - (x - y).abs() / scale).max(0.0),
            _ => 0.0,
        },
        Comparator::Learned { string_type } => {
            let enc = ctx.encoders.get(string_type).ok_or_else(|| LinkError::MissingEncoder(string_type.clone()))?;
            enc.similarity(a, b).map(|s| s.max(0.0)).unwrap_or(0.0)
        }
    })
}

impl Feature {
    pub fn similarity(&self, a: &LinkEntity, b: &LinkEntity, ctx: &MatchContext) -> Result<f64, LinkError> {
        let mut best: f64 = 0.0;
        for x in a.values(&self.predicate) {
            for y in b.values(&self.predicate) {
                best = best.max(compare(&self.comparator, x, y, ctx)?);
            }
        }
        Ok(best)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MatchingModel {
    pub fn feature_vector(&self, a: &LinkEntity, b: &LinkEntity, ctx: &MatchContext) -> Result<Vec<f64>, LinkError> {
        self.features.iter().map(|f| f.similarity(a, b, ctx)).collect()
    }

    pub fn probability_of(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Logistic => {
                sigmoid(self.bias + self.features.iter().zip(x).map(|(f, v)| f.weight * v).sum::<f64>())
            }
            ModelKind::Rule => {
                let fired: f64 =
                    self.features.iter().zip(x).filter(|(f, v)| **v >= f.threshold).map(|(f, _)| f.weight).sum();
                (self.bias + fired).clamp(0.0, 1.0)
            }
        }
    }

    pub fn probability(&self, a: &LinkEntity, b: &LinkEntity, ctx: &MatchContext) -> Result<f64, LinkError> {
        Ok(self.probability_of(&self.feature_vector(a, b, ctx)?))
    }
}

/// Scores every pair. Pure and symmetric in each pair.
pub fn match_pairs(
    pairs: &[(EntityId, EntityId)],
    payload: &LinkingPayload,
    model: &MatchingModel,
    ctx: &MatchContext,
) -> Result<Vec<ScoredPair>, LinkError> {
    let schema = payload.schema();
    if !payload.entities.is_empty() {
        if let Some(f) = model.features.iter().find(|f| !schema.contains(f.predicate.as_str())) {
            return Err(LinkError::MissingFeaturePredicate(f.predicate.clone()));
        }
    }
    let idx = payload.index();
    pairs
        .iter()
        .map(|(a, b)| {
            let (l, r) = if a <= b { (a, b) } else { (b, a) };
            Ok(ScoredPair { left: l.clone(), right: r.clone(), probability: model.probability(idx[l], idx[r], ctx)? })
        })
        .collect()
}

/// Batch gradient descent on the logistic loss with a small L2 penalty.
/// Updates the weights and bias of a logistic model in place.
pub fn fit_logistic(
    model: &mut MatchingModel,
    examples: &[(LinkEntity, LinkEntity, bool)],
    ctx: &MatchContext,
    epochs: usize,
    lr: f64,
) -> Result<(), LinkError> {
    let xs: Vec<(Vec<f64>, f64)> = examples
        .iter()
        .map(|(a, b, y)| Ok((model.feature_vector(a, b, ctx)?, f64::from(*y))))
        .collect::<Result<_, LinkError>>()?;
    if xs.is_empty() {
        return Ok(());
    }
    let n = xs.len() as f64;
    let l2 = 1e-3;
    for _ in 0..epochs {
        let mut gw = vec![0.0; model.features.len()];
        let mut gb = 0.0;
        for (x, y) in &xs {
            let p = sigmoid(model.bias + model.features.iter().zip(x).map(|(f, v)| f.weight * v).sum::<f64>());
            let d = p - y;
            gb += d;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += d * v;
            }
        }
        model.bias -= lr * gb / n;
        for (f, g) in model.features.iter_mut().zip(&gw) {
            f.weight -= lr * (g / n + l2 * f.weight);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::simstrings::{train_encoder, EncoderConfig, TrainingTriplet, TripletTrainConfig};

    fn ent(id: &str, preds: &[(&str, &str)]) -> LinkEntity {
        let mut predicates: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (p, v) in preds {
            predicates.entry(p.to_string()).or_default().push(v.to_string());
        }
        LinkEntity { id: id.parse().unwrap(), predicates, is_graph_entity: false }
    }

    fn logistic() -> MatchingModel {
        MatchingModel {
            kind: ModelKind::Logistic,
            bias: -6.0,
            features: vec![
                Feature {
                    predicate: "title".into(),
                    comparator: Comparator::Jaccard { q: 3 },
                    weight: 8.0,
                    threshold: 0.5,
                },
                Feature { predicate: "year".into(), comparator: Comparator::Exact, weight: 4.0, threshold: 0.5 },
            ],
        }
    }

    fn payload(es: Vec<LinkEntity>) -> LinkingPayload {
        LinkingPayload { entity_type: "movie".into(), entities: es }
    }

    #[test]
    fn identical_and_disjoint() {
        let a = ent("s:a", &[("title", "Alien"), ("year", "1979")]);
        let b = ent("s:b", &[("title", "Alien"), ("year", "1979")]);
        let c = ent("s:c", &[("title", "Zodiac"), ("year", "2007")]);
        let ctx = MatchContext::default();
        let m = logistic();
        assert!(m.probability(&a, &b, &ctx).unwrap() >= 0.99);
        assert!(m.probability(&a, &c, &ctx).unwrap() <= 0.01);
    }

    #[test]
    fn missing_feature_predicate() {
        let p = payload(vec![ent("s:a", &[("title", "Alien")]), ent("s:b", &[("title", "Alien")])]);
        let pairs = vec![("s:a".parse().unwrap(), "s:b".parse().unwrap())];
        assert!(matches!(
            match_pairs(&pairs, &p, &logistic(), &MatchContext::default()),
            Err(LinkError::MissingFeaturePredicate(p)) if p == "year"
        ));
    }

    #[test]
    fn pairs_are_normalized_and_symmetric() {
        let a = ent("s:a", &[("title", "Alien"), ("year", "1979")]);
        let b = ent("s:b", &[("title", "Aliens"), ("year", "1986")]);
        let p = payload(vec![a.clone(), b.clone()]);
        let ctx = MatchContext::default();
        let fwd = match_pairs(&[(a.id.clone(), b.id.clone())], &p, &logistic(), &ctx).unwrap();
        let rev = match_pairs(&[(b.id.clone(), a.id.clone())], &p, &logistic(), &ctx).unwrap();
        assert_eq!(fwd, rev);
        assert_eq!(fwd[0].left, a.id);
    }

    #[test]
    fn learned_name_feature_beats_rule_on_nickname() {
        let names =
            [("Robert", "Bob"), ("William", "Bill"), ("Richard", "Dick"), ("James", "Jim"), ("Margaret", "Peggy")];
        let mut triplets = Vec::new();
        for (i, (full, nick)) in names.iter().enumerate() {
            for (j, (other, _)) in names.iter().enumerate() {
                if i != j {
                    triplets.push(TrainingTriplet {
                        anchor: format!("{full} Smith"),
                        positive: format!("{nick} Smith"),
                        negative: format!("{other} Jones"),
                    });
                }
            }
        }
        let cfg =
            TripletTrainConfig { encoder: EncoderConfig { ngram: 3, buckets: 512, dim: 16 }, ..Default::default() };
        let enc = train_encoder("person_name", &triplets, &cfg).unwrap().encoder;
        let ctx = MatchContext { encoders: [("person_name".to_string(), enc)].into() };
        let a = ent("s:a", &[("name", "Robert Smith")]);
        let b = ent("s:b", &[("name", "Bob Smith")]);
        let rule = MatchingModel {
            kind: ModelKind::Rule,
            bias: 0.0,
            features: vec![Feature {
                predicate: "name".into(),
                comparator: Comparator::Edit,
                weight: 1.0,
                threshold: 0.8,
            }],
        };
        let learned = MatchingModel {
            kind: ModelKind::Logistic,
            bias: -4.0,
            features: vec![Feature {
                predicate: "name".into(),
                comparator: Comparator::Learned { string_type: "person_name".into() },
                weight: 8.0,
                threshold: 0.5,
            }],
        };
        assert!(learned.probability(&a, &b, &ctx).unwrap() > rule.probability(&a, &b, &ctx).unwrap());
    }

    #[test]
    fn logistic_fit_separates_fixture() {
        let mut m = logistic();
        m.bias = 0.0;
        m.features.iter_mut().for_each(|f| f.weight = 0.0);
        let pos = (
            ent("s:a", &[("title", "Alien"), ("year", "1979")]),
            ent("s:b", &[("title", "Alien."), ("year", "1979")]),
            true,
        );
        let neg = (
            ent("s:c", &[("title", "Heat"), ("year", "1995")]),
            ent("s:d", &[("title", "Zodiac"), ("year", "2007")]),
            false,
        );
        let ctx = MatchContext::default();
        fit_logistic(&mut m, &[pos.clone(), neg.clone()], &ctx, 500, 1.0).unwrap();
        assert!(m.probability(&pos.0, &pos.1, &ctx).unwrap() > 0.8);
        assert!(m.probability(&neg.0, &neg.1, &ctx).unwrap() < 0.2);
    }
}
