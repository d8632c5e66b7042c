use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{feature_vector, retrieve_candidates, Candidate, DisambiguationWeights, EntityView, Mention, FEATURES};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub mention: Mention,
    pub candidate: Candidate,
    pub label: bool,
}

/// Template snippets over the view: an alias placed next to the surface of
/// one of its entity's relationships (the entity is the positive, the other
/// candidates for the alias negatives), plus context-free mentions of shared
/// aliases labelled with the most important candidate.
pub fn generate_training_examples(
    view: &EntityView,
    seed: u64,
    relationships_per_alias: usize,
) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for rec in view.records() {
        for alias in rec.aliases() {
            let Ok(bare) = Mention::new(alias) else {
                continue;
            };
            let cands = retrieve_candidates(view, &bare, 8);
            let mut rels: Vec<&(String, String)> = rec.key_relationships.iter().collect();
            rels.shuffle(&mut rng);
            for (_, surface) in rels.into_iter().take(relationships_per_alias) {
                let m = bare.clone().with_context(&format!("{alias} {surface}"));
                for c in &cands {
                    out.push(TrainingExample {
                        mention: m.clone(),
                        candidate: c.clone(),
                        label: c.entity == rec.entity,
                    });
                }
            }
            let exact: Vec<&Candidate> = cands.iter().filter(|c| c.alias_similarity >= 1.0).collect();
            if exact.len() > 1 && exact[0].entity == rec.entity {
                for c in &cands {
                    out.push(TrainingExample {
                        mention: bare.clone(),
                        candidate: c.clone(),
                        label: c.entity == rec.entity,
                    });
                }
            }
        }
    }
    out
}

/// Batch gradient descent on the log loss with a small L2 penalty, starting
/// from zero weights. `theta_reject` is carried over from `base`.
pub fn fit_weights(
    view: &EntityView,
    examples: &[TrainingExample],
    base: &DisambiguationWeights,
    epochs: usize,
    lr: f64,
) -> DisambiguationWeights {
    let xs: Vec<([f64; 5], f64)> = examples
        .iter()
        .filter_map(|ex| {
            let rec = view.get(&ex.candidate.entity)?;
            Some((feature_vector(&ex.mention, &ex.candidate, rec), f64::from(u8::from(ex.label))))
        })
        .collect();
    let mut w = [0.0f64; 5];
    let mut b = 0.0;
    if !xs.is_empty() {
        let n = xs.len() as f64;
        let l2 = 1e-3;
        for _ in 0..epochs {
            let mut gw = [0.0f64; 5];
            let mut gb = 0.0;
            for (x, y) in &xs {
                let z = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                let d = 1.0 / (1.0 + (-z).exp()) - y;
                gb += d;
                for (g, v) in gw.iter_mut().zip(x) {
                    *g += d * v;
                }
            }
            b -= lr * gb / n;
            for (wi, g) in w.iter_mut().zip(gw) {
                *wi -= lr * (g / n + l2 * *wi);
            }
        }
    }
    DisambiguationWeights {
        bias: b,
        theta_reject: base.theta_reject,
        features: FEATURES.iter().zip(w).map(|(f, v)| (f.to_string(), v)).collect(),
    }
}
