use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::kg::EntityId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TransE,
    DistMult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub entities: Vec<EntityId>,
    pub predicates: Vec<String>,
    /// Row-major |entities| × dim.
    pub entity_vectors: Vec<f32>,
    /// Row-major |predicates| × dim.
    pub predicate_vectors: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    dim: usize,
    entities: Vec<EntityId>,
    predicates: Vec<String>,
}

impl EmbeddingModel {
    pub fn entity(&self, i: usize) -> &[f32] {
        &self.entity_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn predicate(&self, i: usize) -> &[f32] {
        &self.predicate_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entity_index(&self, id: &EntityId) -> Result<usize, EmbedError> {
        self.entities.binary_search(id).map_err(|_| EmbedError::UnknownId(id.to_string()))
    }

    pub fn predicate_index(&self, p: &str) -> Result<usize, EmbedError> {
        self.predicates.binary_search_by(|x| x.as_str().cmp(p)).map_err(|_| EmbedError::UnknownId(p.to_string()))
    }

    /// Vector of an entity, if known.
    pub fn vector_of(&self, id: &EntityId) -> Option<&[f32]> {
        self.entity_index(id).ok().map(|i| self.entity(i))
    }

    /// f(θs, θp): θs + θp for TransE, θs ∘ θp for DistMult.
    pub fn query_vector(&self, s: usize, p: usize) -> Vec<f64> {
        let (vs, vp) = (self.entity(s), self.predicate(p));
        match self.kind {
            ModelKind::TransE => vs.iter().zip(vp).map(|(a, b)| f64::from(*a) + f64::from(*b)).collect(),
            ModelKind::DistMult => vs.iter().zip(vp).map(|(a, b)| f64::from(*a) * f64::from(*b)).collect(),
        }
    }

    /// Score of the query vector against entity `o`.
    pub fn score_query(&self, q: &[f64], o: usize) -> f64 {
        let vo = self.entity(o);
        match self.kind {
            ModelKind::TransE => -q.iter().zip(vo).map(|(a, b)| (a - f64::from(*b)).powi(2)).sum::<f64>().sqrt(),
            ModelKind::DistMult => q.iter().zip(vo).map(|(a, b)| a * f64::from(*b)).sum(),
        }
    }

    /// TransE: −‖θs+θp−θo‖₂; DistMult: Σ θs·θp·θo.
    pub fn score_ids(&self, s: usize, p: usize, o: usize) -> f64 {
        match self.kind {
            ModelKind::TransE => self.score_query(&self.query_vector(s, p), o),
            ModelKind::DistMult => self
                .entity(s)
                .iter()
                .zip(self.predicate(p))
                .zip(self.entity(o))
                .map(|((a, b), c)| f64::from(*a) * f64::from(*b) * f64::from(*c))
                .sum(),
        }
    }

    /// Writes the `.kge` format: one JSON header line, then the entity and
    /// predicate matrices as little-endian f32.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), EmbedError> {
        let header = Header {
            kind: self.kind,
            dim: self.dim,
            entities: self.entities.clone(),
            predicates: self.predicates.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| EmbedError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        for x in self.entity_vectors.iter().chain(&self.predicate_vectors) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self, EmbedError> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| EmbedError::Format(e.to_string()))?;
        let mut read_matrix = |rows: usize| -> Result<Vec<f32>, EmbedError> {
            let mut buf = vec![0u8; rows * h.dim * 4];
            r.read_exact(&mut buf).map_err(|_| EmbedError::Format("truncated matrix".into()))?;
            Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
        };
        let entity_vectors = read_matrix(h.entities.len())?;
        let predicate_vectors = read_matrix(h.predicates.len())?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(EmbedError::Format(format!("{} trailing bytes", rest.len())));
        }
        if entity_vectors.iter().chain(&predicate_vectors).any(|x| !x.is_finite()) {
            return Err(EmbedError::Format("non-finite weight".into()));
        }
        Ok(Self {
            kind: h.kind,
            dim: h.dim,
            entities: h.entities,
            predicates: h.predicates,
            entity_vectors,
            predicate_vectors,
        })
    }
}

pub fn score_fact(model: &EmbeddingModel, s: &EntityId, p: &str, o: &EntityId) -> Result<f64, EmbedError> {
    Ok(model.score_ids(model.entity_index(s)?, model.predicate_index(p)?, model.entity_index(o)?))
}

/// Top-`k` objects for (s, p) by a full scan, best first; ties go to the
/// smaller entity id. Entities in `exclude` are skipped.
pub fn predict_object(
    model: &EmbeddingModel,
    s: &EntityId,
    p: &str,
    k: usize,
    exclude: &BTreeSet<EntityId>,
) -> Result<Vec<(EntityId, f64)>, EmbedError> {
    let q = model.query_vector(model.entity_index(s)?, model.predicate_index(p)?);
    let mut scored: Vec<(usize, f64)> = (0..model.entities.len())
        .filter(|&i| !exclude.contains(&model.entities[i]))
        .map(|i| (i, model.score_query(&q, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(i, s)| (model.entities[i].clone(), s)).collect())
}

/// `objects` ordered by score, best first; ties by entity id.
pub fn rank_facts(
    model: &EmbeddingModel,
    s: &EntityId,
    p: &str,
    objects: &[EntityId],
) -> Result<Vec<(EntityId, f64)>, EmbedError> {
    let mut out =
        objects.iter().map(|o| Ok((o.clone(), score_fact(model, s, p, o)?))).collect::<Result<Vec<_>, EmbedError>>()?;
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// The lowest-scoring `percentile` percent of `facts` (rounded up), for
/// auditing. Facts with unknown ids are skipped.
pub fn verify_facts(
    model: &EmbeddingModel,
    facts: &[(EntityId, String, EntityId)],
    percentile: f64,
) -> Vec<((EntityId, String, EntityId), f64)> {
    let mut scored: Vec<(usize, f64)> =
        facts.iter().enumerate().filter_map(|(i, (s, p, o))| score_fact(model, s, p, o).ok().map(|x| (i, x))).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = (percentile.clamp(0.0, 100.0) / 100.0 * scored.len() as f64).ceil() as usize;
    scored.into_iter().take(n).map(|(i, x)| (facts[i].clone(), x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(kind: ModelKind) -> EmbeddingModel {
        EmbeddingModel {
            kind,
            dim: 2,
            entities: ["a", "b", "c"].iter().map(|s| EntityId::graph(*s)).collect(),
            predicates: vec!["p".into()],
            entity_vectors: vec![1.0, 0.0, 1.0, 1.0, 0.5, -1.0],
            predicate_vectors: vec![0.0, 1.0],
        }
    }

    fn g(s: &str) -> EntityId {
        EntityId::graph(s)
    }

    #[test]
    fn hand_computed_scores() {
        let t = toy(ModelKind::TransE);
        // a + p = (1, 1) = b
        assert_eq!(score_fact(&t, &g("a"), "p", &g("b")).unwrap(), 0.0);
        let expected = -((0.5f64).powi(2) + 2.0f64.powi(2)).sqrt();
        assert!((score_fact(&t, &g("a"), "p", &g("c")).unwrap() - expected).abs() < 1e-12);
        assert_eq!(predict_object(&t, &g("a"), "p", 1, &BTreeSet::new()).unwrap()[0].0, g("b"));
        assert_eq!(predict_object(&t, &g("a"), "p", 10, &BTreeSet::new()).unwrap().len(), 3);
        let d = toy(ModelKind::DistMult);
        // a∘p = (0, 0) so every object scores 0; b∘p = (0, 1)
        assert_eq!(score_fact(&d, &g("a"), "p", &g("c")).unwrap(), 0.0);
        assert_eq!(score_fact(&d, &g("b"), "p", &g("c")).unwrap(), -1.0);
        let r = rank_facts(&d, &g("b"), "p", &[g("a"), g("c"), g("b")]).unwrap();
        let order: Vec<&str> = r.iter().map(|(e, _)| e.local_id()).collect();
        assert_eq!(order, ["b", "a", "c"]);
        assert!(matches!(score_fact(&d, &g("zz"), "p", &g("a")), Err(EmbedError::UnknownId(_))));
    }

    #[test]
    fn verify_percentiles() {
        let t = toy(ModelKind::TransE);
        let facts: Vec<(EntityId, String, EntityId)> =
            ["a", "b", "c"].iter().map(|o| (g("a"), "p".to_string(), g(o))).collect();
        assert!(verify_facts(&t, &facts, 0.0).is_empty());
        assert_eq!(verify_facts(&t, &facts, 100.0).len(), 3);
        assert_eq!(verify_facts(&t, &facts, 30.0)[0].0 .2, g("c"));
    }

    #[test]
    fn kge_round_trip() {
        let t = toy(ModelKind::DistMult);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(EmbeddingModel::read_from(&buf[..]).unwrap(), t);
        assert!(EmbeddingModel::read_from(&buf[..buf.len() - 2]).is_err());
    }
}
