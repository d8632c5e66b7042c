//! String similarity: padded q-gram Jaccard, normalized edit similarity,
//! cosine, and hashed character n-gram encoders trained with a triplet loss.

mod encoder;
mod training;

use std::collections::BTreeSet;

use thiserror::Error;

pub use encoder::{EncoderConfig, StringEncoder};
pub use training::{
    generate_training_data, train_encoder, AugmentationConfig, StringTypeSpec, TrainOutcome, TrainingTriplet,
    TripletTrainConfig,
};

pub const PAD: char = '#';

#[derive(Debug, Error)]
pub enum SimError {
    #[error("string is empty after normalization")]
    EmptyString,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vectors differ in dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("only {found} training triplets, need at least {required}")]
    InsufficientData { found: usize, required: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("malformed encoder file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Padded character q-grams as a set. The empty string has no q-grams.
pub fn qgram_set(s: &str, q: usize) -> BTreeSet<String> {
    assert!(q >= 1, "q must be at least 1");
    if s.is_empty() {
        return BTreeSet::new();
    }
    let pad: String = std::iter::repeat_n(PAD, q - 1).collect();
    let chars: Vec<char> = format!("{pad}{s}{pad}").chars().collect();
    chars.windows(q).map(|w| w.iter().collect()).collect()
}

/// |Qa ∩ Qb| / |Qa ∪ Qb| over padded q-gram sets; two empty strings score 1.
pub fn qgram_jaccard(a: &str, b: &str, q: usize) -> f64 {
    let qa = qgram_set(a, q);
    let qb = qgram_set(b, q);
    let union = qa.union(&qb).count();
    if union == 0 {
        return 1.0;
    }
    qa.intersection(&qb).count() as f64 / union as f64
}

/// 1 − levenshtein / max length, over chars; two empty strings score 1.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimError> {
    if u.len() != v.len() {
        return Err(SimError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(SimError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_examples() {
        assert_eq!(qgram_jaccard("abc", "abc", 2), 1.0);
        assert_eq!(qgram_jaccard("abc", "xyz", 2), 0.0);
        assert_eq!(qgram_jaccard("", "", 3), 1.0);
        assert_eq!(qgram_jaccard("", "a", 3), 0.0);
        // #n ni ig gh ht t#  vs  #n na ac ch ht t#  ->  {#n, ht, t#} / 9
        assert!((qgram_jaccard("night", "nacht", 2) - 3.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn edit_examples() {
        assert!((edit_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert_eq!(edit_similarity("same", "same"), 1.0);
        assert_eq!(edit_similarity("", "ab"), 0.0);
        assert_eq!(edit_similarity("", ""), 1.0);
    }

    #[test]
    fn cosine_examples() {
        let u = [1.0, 2.0, -3.0];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(SimError::ZeroVector)));
    }
}
