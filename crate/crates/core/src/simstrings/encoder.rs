use std::hash::Hasher;
use std::io::{BufRead, Write};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, norm, SimError, PAD};
use crate::text::normalize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub ngram: usize,
    pub buckets: usize,
    pub dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { ngram: 3, buckets: 4096, dim: 64 }
    }
}

/// Character n-gram bag encoder: n-grams are hashed into `buckets` rows of an
/// embedding table, averaged, then L2-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct StringEncoder {
    pub(super) string_type: String,
    pub(super) cfg: EncoderConfig,
    pub(super) table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    string_type: String,
    n: usize,
    buckets: usize,
    dim: usize,
}

impl StringEncoder {
    /// Untrained encoder with a seeded uniform table.
    pub fn new(string_type: impl Into<String>, cfg: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (cfg.dim as f64).sqrt();
        let table = (0..cfg.buckets * cfg.dim).map(|_| rng.gen_range(-scale..scale)).collect();
        Self { string_type: string_type.into(), cfg, table }
    }

    pub fn string_type(&self) -> &str {
        &self.string_type
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// Bucket ids of the padded n-grams of the normalized string (a multiset).
    pub fn buckets_of(&self, s: &str) -> Result<Vec<usize>, SimError> {
        let s = normalize(s);
        if s.is_empty() {
            return Err(SimError::EmptyString);
        }
        let n = self.cfg.ngram;
        let pad: String = std::iter::repeat_n(PAD, n.saturating_sub(1)).collect();
        let chars: Vec<char> = format!("{pad}{s}{pad}").chars().collect();
        Ok(chars
            .windows(n)
            .map(|w| {
                let mut h = FnvHasher::default();
                for c in w {
                    h.write_u32(*c as u32);
                }
                (h.finish() % self.cfg.buckets as u64) as usize
            })
            .collect())
    }

    pub(super) fn row(&self, bucket: usize) -> &[f64] {
        &self.table[bucket * self.cfg.dim..(bucket + 1) * self.cfg.dim]
    }

    /// Mean of the n-gram rows before normalization.
    pub(super) fn pooled(&self, buckets: &[usize]) -> Vec<f64> {
        let mut u = vec![0.0; self.cfg.dim];
        for &b in buckets {
            for (x, r) in u.iter_mut().zip(self.row(b)) {
                *x += r;
            }
        }
        let n = buckets.len() as f64;
        u.iter_mut().for_each(|x| *x /= n);
        u
    }

    /// Unit-norm encoding of `s`.
    pub fn encode(&self, s: &str) -> Result<Vec<f64>, SimError> {
        let u = self.pooled(&self.buckets_of(s)?);
        let n = norm(&u);
        if n == 0.0 {
            return Err(SimError::ZeroVector);
        }
        Ok(u.into_iter().map(|x| x / n).collect())
    }

    /// Cosine of the two encodings.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, SimError> {
        Ok(dot(&self.encode(a)?, &self.encode(b)?).clamp(-1.0, 1.0))
    }

    /// JSON header line, then the table as little-endian f32.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let header = Header {
            string_type: self.string_type.clone(),
            n: self.cfg.ngram,
            buckets: self.cfg.buckets,
            dim: self.cfg.dim,
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| SimError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        for x in &self.table {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self, SimError> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| SimError::Format(e.to_string()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != h.buckets * h.dim * 4 {
            return Err(SimError::Format(format!(
                "expected {} table bytes, found {}",
                h.buckets * h.dim * 4,
                bytes.len()
            )));
        }
        let table = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Ok(Self {
            string_type: h.string_type,
            cfg: EncoderConfig { ngram: h.n, buckets: h.buckets, dim: h.dim },
            table,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simstrings::cosine;

    fn small() -> StringEncoder {
        StringEncoder::new("person_name", EncoderConfig { ngram: 3, buckets: 256, dim: 16 }, 7)
    }

    #[test]
    fn encoding_is_deterministic_and_unit_norm() {
        let e = small();
        let a = e.encode("Robert Smith").unwrap();
        assert_eq!(a, e.encode("Robert Smith").unwrap());
        assert!((norm(&a) - 1.0).abs() < 1e-6);
        assert_eq!(a, e.encode("  robert   SMITH ").unwrap());
    }

    #[test]
    fn untrained_cosine_is_in_range() {
        let e = small();
        let c = cosine(&e.encode("abc").unwrap(), &e.encode("abd").unwrap()).unwrap();
        assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn empty_string_is_rejected() {
        assert!(matches!(small().encode("   "), Err(SimError::EmptyString)));
    }

    #[test]
    fn senc_round_trip() {
        let e = small();
        let mut buf = Vec::new();
        e.write_to(&mut buf).unwrap();
        let back = StringEncoder::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.cfg, e.cfg);
        assert_eq!(back.string_type, "person_name");
        for (a, b) in back.table.iter().zip(&e.table) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(StringEncoder::read_from(&buf[..buf.len() - 1]).is_err());
    }
}
