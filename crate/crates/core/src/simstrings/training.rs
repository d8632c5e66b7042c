//! Distant supervision from the KG and triplet-loss training.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, StringEncoder};
use super::{dot, norm, SimError};
use crate::kg::{EntityId, KgSnapshot};
use crate::text::normalize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// Which entities and predicates feed one string type.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StringTypeSpec {
    pub string_type: String,
    pub entity_type: String,
    #[serde(default = "default_name_predicates")]
    pub name_predicates: Vec<String>,
}

fn default_name_predicates() -> Vec<String> {
    vec!["name".into(), "alias".into()]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub typos_per_string: usize,
    pub negatives_per_positive: usize,
    pub min_triplets: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self { typos_per_string: 1, negatives_per_positive: 2, min_triplets: 8, seed: 17 }
    }
}

/// One random single-character edit: transposition, deletion, duplication or
/// substitution. Returns `None` when every attempt reproduced the input.
pub(crate) fn typo(s: &str, rng: &mut impl Rng) -> Option<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() < 2 {
        return None;
    }
    for _ in 0..8 {
        let mut c = chars.clone();
        let i = rng.gen_range(0..c.len() - 1);
        match rng.gen_range(0..4) {
            0 => c.swap(i, i + 1),
            1 => {
                c.remove(i);
            }
            2 => c.insert(i, c[i]),
            _ => c[i] = (b'a' + rng.gen_range(0..26u8)) as char,
        }
        let out: String = c.into_iter().collect();
        if out != s {
            return Some(out);
        }
    }
    None
}

/// Positives are name/alias pairs of one entity plus typo variants; negatives
/// are names of other (unlinked) entities of the same type.
pub fn generate_training_data(
    snapshot: &KgSnapshot,
    spec: &StringTypeSpec,
    cfg: &AugmentationConfig,
) -> Result<Vec<TrainingTriplet>, SimError> {
    let mut names: BTreeMap<&EntityId, Vec<String>> = BTreeMap::new();
    for id in snapshot.entities() {
        if !snapshot.types_of(id).contains(&spec.entity_type) {
            continue;
        }
        let mut strings: Vec<String> = spec
            .name_predicates
            .iter()
            .flat_map(|p| snapshot.values(id, p))
            .filter_map(|o| o.as_literal())
            .filter(|s| !normalize(s).is_empty())
            .map(str::to_string)
            .collect();
        strings.sort();
        strings.dedup();
        if !strings.is_empty() {
            names.insert(id, strings);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids: Vec<&EntityId> = names.keys().copied().collect();
    let mut triplets = Vec::new();
    if ids.len() < 2 {
        return Err(SimError::InsufficientData { found: 0, required: cfg.min_triplets });
    }
    for (idx, id) in ids.iter().enumerate() {
        let strings = &names[id];
        let mut positives = Vec::new();
        for a in strings {
            for p in strings {
                if a != p {
                    positives.push((a.clone(), p.clone()));
                }
            }
            for _ in 0..cfg.typos_per_string {
                if let Some(t) = typo(a, &mut rng) {
                    positives.push((a.clone(), t));
                }
            }
        }
        for (anchor, positive) in positives {
            for _ in 0..cfg.negatives_per_positive {
                let mut other = rng.gen_range(0..ids.len() - 1);
                if other >= idx {
                    other += 1;
                }
                let negative = names[ids[other]].choose(&mut rng).expect("non-empty").clone();
                if normalize(&negative) == normalize(&anchor) {
                    continue;
                }
                triplets.push(TrainingTriplet { anchor: anchor.clone(), positive: positive.clone(), negative });
            }
        }
    }
    if triplets.len() < cfg.min_triplets {
        return Err(SimError::InsufficientData { found: triplets.len(), required: cfg.min_triplets });
    }
    Ok(triplets)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripletTrainConfig {
    pub encoder: EncoderConfig,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TripletTrainConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), margin: 0.2, learning_rate: 0.5, epochs: 30, seed: 11 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub encoder: StringEncoder,
    /// Mean triplet loss of every epoch, in order.
    pub epoch_losses: Vec<f64>,
}

/// Sparse gradient: bucket -> d loss / d row.
pub(crate) type RowGrad = BTreeMap<usize, Vec<f64>>;

struct Encoded {
    buckets: Vec<usize>,
    unit: Vec<f64>,
    norm: f64,
}

impl StringEncoder {
    fn encode_full(&self, s: &str) -> Result<Encoded, SimError> {
        let buckets = self.buckets_of(s)?;
        let u = self.pooled(&buckets);
        let n = norm(&u);
        if n == 0.0 {
            return Err(SimError::ZeroVector);
        }
        Ok(Encoded { unit: u.iter().map(|x| x / n).collect(), buckets, norm: n })
    }

    /// Pushes d(loss)/d(unit encoding) back onto the table rows of `enc`.
    fn backprop(&self, enc: &Encoded, d_unit: &[f64], grad: &mut RowGrad) {
        // d unit / d pooled = (I - e e^T) / |u|
        let proj = dot(d_unit, &enc.unit);
        let d_pooled: Vec<f64> = d_unit.iter().zip(&enc.unit).map(|(g, e)| (g - proj * e) / enc.norm).collect();
        let share = 1.0 / enc.buckets.len() as f64;
        for &b in &enc.buckets {
            let row = grad.entry(b).or_insert_with(|| vec![0.0; self.cfg.dim]);
            for (r, d) in row.iter_mut().zip(&d_pooled) {
                *r += d * share;
            }
        }
    }

    /// max(0, margin − cos(a, p) + cos(a, n)) and its gradient w.r.t. the table.
    pub(crate) fn triplet_loss(&self, t: &TrainingTriplet, margin: f64) -> Result<(f64, RowGrad), SimError> {
        let a = self.encode_full(&t.anchor)?;
        let p = self.encode_full(&t.positive)?;
        let n = self.encode_full(&t.negative)?;
        let cap = dot(&a.unit, &p.unit);
        let can = dot(&a.unit, &n.unit);
        let loss = margin - cap + can;
        let mut grad = RowGrad::new();
        if loss <= 0.0 {
            return Ok((0.0, grad));
        }
        // dL/da = n - p, dL/dp = -a, dL/dn = a
        let d_a: Vec<f64> = n.unit.iter().zip(&p.unit).map(|(x, y)| x - y).collect();
        let d_p: Vec<f64> = a.unit.iter().map(|x| -x).collect();
        self.backprop(&a, &d_a, &mut grad);
        self.backprop(&p, &d_p, &mut grad);
        self.backprop(&n, &a.unit, &mut grad);
        Ok((loss, grad))
    }

    pub(crate) fn apply(&mut self, grad: &RowGrad, lr: f64) {
        let dim = self.cfg.dim;
        for (&b, g) in grad {
            for (x, d) in self.table[b * dim..(b + 1) * dim].iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
    }
}

/// Plain SGD over shuffled triplets; deterministic for a given seed.
pub fn train_encoder(
    string_type: &str,
    triplets: &[TrainingTriplet],
    cfg: &TripletTrainConfig,
) -> Result<TrainOutcome, SimError> {
    if triplets.is_empty() {
        return Err(SimError::InsufficientData { found: 0, required: 1 });
    }
    let mut encoder = StringEncoder::new(string_type, cfg.encoder.clone(), cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grad) = encoder.triplet_loss(&triplets[i], cfg.margin)?;
            if !loss.is_finite() {
                return Err(SimError::NonFiniteLoss { epoch });
            }
            total += loss;
            encoder.apply(&grad, cfg.learning_rate);
        }
        epoch_losses.push(total / triplets.len() as f64);
    }
    Ok(TrainOutcome { encoder, epoch_losses })
}
