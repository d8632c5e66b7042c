use fnv::FnvHashMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingModel, ModelKind, TrainingView};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    /// TransE only.
    pub margin: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::TransE,
            dim: 32,
            epochs: 200,
            learning_rate: 0.05,
            negatives_per_positive: 4,
            margin: 1.0,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

/// Loss of one (positive, negative) pair and its gradient with respect to
/// each of the five vectors involved (the predicate is shared).
#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub o: Vec<f64>,
    pub sn: Vec<f64>,
    pub on: Vec<f64>,
}

impl PairGradient {
    fn zero(dim: usize, loss: f64) -> Self {
        Self { loss, s: vec![0.0; dim], p: vec![0.0; dim], o: vec![0.0; dim], sn: vec![0.0; dim], on: vec![0.0; dim] }
    }
}

/// max(0, margin + ‖s+p−o‖ − ‖sn+p−on‖).
pub fn transe_pair_loss(s: &[f64], p: &[f64], o: &[f64], sn: &[f64], on: &[f64], margin: f64) -> PairGradient {
    let dim = s.len();
    let dp: Vec<f64> = (0..dim).map(|i| s[i] + p[i] - o[i]).collect();
    let dn: Vec<f64> = (0..dim).map(|i| sn[i] + p[i] - on[i]).collect();
    let np = dp.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = dn.iter().map(|x| x * x).sum::<f64>().sqrt();
    let loss = margin + np - nn;
    if loss <= 0.0 {
        return PairGradient::zero(dim, 0.0);
    }
    let up: Vec<f64> = dp.iter().map(|x| if np > 0.0 { x / np } else { 0.0 }).collect();
    let un: Vec<f64> = dn.iter().map(|x| if nn > 0.0 { x / nn } else { 0.0 }).collect();
    PairGradient {
        loss,
        s: up.clone(),
        p: (0..dim).map(|i| up[i] - un[i]).collect(),
        o: up.iter().map(|x| -x).collect(),
        sn: un.iter().map(|x| -x).collect(),
        on: un,
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// softplus(−⟨s,p,o⟩) + softplus(⟨sn,p,on⟩): logistic loss with label 1 for
/// the positive and 0 for the negative.
pub fn distmult_pair_loss(s: &[f64], p: &[f64], o: &[f64], sn: &[f64], on: &[f64]) -> PairGradient {
    let dim = s.len();
    let fp: f64 = (0..dim).map(|i| s[i] * p[i] * o[i]).sum();
    let fneg: f64 = (0..dim).map(|i| sn[i] * p[i] * on[i]).sum();
    let a = -sigmoid(-fp);
    let b = sigmoid(fneg);
    PairGradient {
        loss: softplus(-fp) + softplus(fneg),
        s: (0..dim).map(|i| a * p[i] * o[i]).collect(),
        p: (0..dim).map(|i| a * s[i] * o[i] + b * sn[i] * on[i]).collect(),
        o: (0..dim).map(|i| a * s[i] * p[i]).collect(),
        sn: (0..dim).map(|i| b * p[i] * on[i]).collect(),
        on: (0..dim).map(|i| b * sn[i] * p[i]).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub epoch_losses: Vec<f64>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| f64::from(*x)).collect()
}

fn add(acc: &mut FnvHashMap<usize, Vec<f64>>, i: usize, g: &[f64]) {
    let e = acc.entry(i).or_insert_with(|| vec![0.0; g.len()]);
    for (a, b) in e.iter_mut().zip(g) {
        *a += b;
    }
}

/// Seeded uniform initialization in ±6/√dim.
pub(crate) fn initialize(view: &TrainingView, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> EmbeddingModel {
    let bound = 6.0 / (cfg.dim as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f32> { (0..n * cfg.dim).map(|_| rng.gen_range(-bound..=bound) as f32).collect() };
    let entity_vectors = draw(view.entities.len());
    let predicate_vectors = draw(view.predicates.len());
    EmbeddingModel {
        kind: cfg.kind,
        dim: cfg.dim,
        entities: view.entities.clone(),
        predicates: view.predicates.clone(),
        entity_vectors,
        predicate_vectors,
    }
}

/// Mini-batch SGD on the mean pair loss of each batch. Each positive gets `negatives_per_positive` corruptions
/// (subject with probability ½, otherwise object, uniform over entities).
/// TransE entity vectors touched by a step are renormalized to unit length.
pub fn train(view: &TrainingView, cfg: &TrainConfig) -> Result<TrainOutcome, EmbedError> {
    cfg.check()?;
    if view.facts.is_empty() {
        return Err(EmbedError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = initialize(view, cfg, &mut rng);
    let n_ent = view.entities.len();
    let dim = cfg.dim;
    let lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..view.facts.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut ge: FnvHashMap<usize, Vec<f64>> = FnvHashMap::default();
            let mut gp: FnvHashMap<usize, Vec<f64>> = FnvHashMap::default();
            for &fi in batch {
                let f = view.facts[fi];
                let (s, p, o) = (widen(model.entity(f.s)), widen(model.predicate(f.p)), widen(model.entity(f.o)));
                for _ in 0..cfg.negatives_per_positive {
                    let (mut sn, mut on) = (f.s, f.o);
                    let corrupt_subject = rng.gen_bool(0.5);
                    let mut r = rng.gen_range(0..n_ent);
                    if n_ent > 1 {
                        let current = if corrupt_subject { f.s } else { f.o };
                        while r == current {
                            r = rng.gen_range(0..n_ent);
                        }
                    }
                    if corrupt_subject {
                        sn = r;
                    } else {
                        on = r;
                    }
                    let (vsn, von) = (widen(model.entity(sn)), widen(model.entity(on)));
                    let g = match cfg.kind {
                        ModelKind::TransE => transe_pair_loss(&s, &p, &o, &vsn, &von, cfg.margin),
                        ModelKind::DistMult => distmult_pair_loss(&s, &p, &o, &vsn, &von),
                    };
                    total += g.loss;
                    pairs += 1;
                    if g.loss == 0.0 {
                        continue;
                    }
                    add(&mut ge, f.s, &g.s);
                    add(&mut ge, f.o, &g.o);
                    add(&mut ge, sn, &g.sn);
                    add(&mut ge, on, &g.on);
                    add(&mut gp, f.p, &g.p);
                }
            }
            let lr = lr / (batch.len() * cfg.negatives_per_positive) as f64;
            for (i, g) in gp {
                for (x, d) in model.predicate_vectors[i * dim..(i + 1) * dim].iter_mut().zip(&g) {
                    *x = (f64::from(*x) - lr * d) as f32;
                }
            }
            for (i, g) in ge {
                let row = &mut model.entity_vectors[i * dim..(i + 1) * dim];
                for (x, d) in row.iter_mut().zip(&g) {
                    *x = (f64::from(*x) - lr * d) as f32;
                }
                if cfg.kind == ModelKind::TransE {
                    let norm = row.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        for x in row.iter_mut() {
                            *x = (f64::from(*x) / norm) as f32;
                        }
                    }
                }
            }
        }
        let mean = total / pairs.max(1) as f64;
        if !mean.is_finite() || model.entity_vectors.iter().chain(&model.predicate_vectors).any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFiniteLoss { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::FactTriple;
    use crate::kg::EntityId;

    fn tiny() -> TrainingView {
        TrainingView {
            entities: (0..4).map(|i| EntityId::graph(format!("e{i}"))).collect(),
            predicates: vec!["p".into()],
            facts: vec![FactTriple { s: 0, p: 0, o: 1 }, FactTriple { s: 2, p: 0, o: 3 }],
        }
    }

    #[test]
    fn zero_epochs_is_the_seeded_init() {
        let cfg = TrainConfig { epochs: 0, seed: 9, ..Default::default() };
        let out = train(&tiny(), &cfg).unwrap();
        let init = initialize(&tiny(), &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(out.model, init);
        let bound = 6.0 / (32f64).sqrt();
        assert!(out.model.entity_vectors.iter().all(|x| f64::from(x.abs()) <= bound + 1e-6));
    }

    #[test]
    fn transe_rows_stay_unit_and_runs_repeat() {
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let a = train(&tiny(), &cfg).unwrap();
        let b = train(&tiny(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        for i in 0..4 {
            let n: f64 = a.model.entity(i).iter().map(|x| f64::from(*x).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
        assert!(a.epoch_losses.iter().all(|l| l.is_finite()));
        let bad = TrainConfig { dim: 0, ..Default::default() };
        assert!(matches!(train(&tiny(), &bad), Err(EmbedError::InvalidConfig(_))));
    }
}
