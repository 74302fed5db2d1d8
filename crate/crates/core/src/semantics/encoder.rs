use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

/// Native text encoder used when no precomputed table is available:
/// character trigram counts hashed into `dim` buckets, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEncoder {
    dim: usize,
    hash_seed: u64,
}

impl FallbackEncoder {
    pub const MIN_DIM: usize = 16;

    pub fn new(dim: usize, hash_seed: u64) -> Result<Self> {
        if dim < Self::MIN_DIM {
            return Err(Error::InvalidArgument(format!(
                "fallback encoder dim must be at least {}, got {dim}",
                Self::MIN_DIM
            )));
        }
        Ok(FallbackEncoder { dim, hash_seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        encode_fallback(text, self.dim, self.hash_seed)
    }

    pub fn encode_f32(&self, text: &str) -> Vec<f32> {
        self.encode(text).into_iter().map(|x| x as f32).collect()
    }
}

/// Lowercases, pads with one space on each side, counts character trigrams
/// into hashed buckets and normalizes. Blank text maps to the zero vector.
pub fn encode_fallback(text: &str, dim: usize, hash_seed: u64) -> Vec<f64> {
    let mut v = vec![0.0f64; dim];
    let trimmed = text.trim();
    if trimmed.is_empty() || dim == 0 {
        return v;
    }
    let chars: Vec<char> = std::iter::once(' ')
        .chain(trimmed.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut buf = [0u8; 12];
    for gram in chars.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = xxh3_64_with_seed(&buf[..len], hash_seed) % dim as u64;
        v[bucket as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::cosine;

    #[test]
    fn deterministic_and_unit_norm() {
        let a = encode_fallback("The Matrix (1999)", 64, 7);
        let b = encode_fallback("The Matrix (1999)", 64, 7);
        assert_eq!(a, b);
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn blank_text_is_zero() {
        assert!(encode_fallback("", 32, 0).iter().all(|&x| x == 0.0));
        assert!(encode_fallback("   ", 32, 0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn short_text_still_encodes() {
        let v = encode_fallback("a", 16, 0);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_bucket_layout() {
        // guards cross-process / cross-version stability of the hash
        let v = encode_fallback("ab", 16, 42);
        let nz: Vec<usize> = (0..16).filter(|&i| v[i] != 0.0).collect();
        let expect: Vec<usize> = {
            let mut b: Vec<usize> = [" ab", "ab "]
                .iter()
                .map(|g| (xxh3_64_with_seed(g.as_bytes(), 42) % 16) as usize)
                .collect();
            b.sort();
            b.dedup();
            b
        };
        assert_eq!(nz, expect);
    }

    #[test]
    fn related_titles_closer_than_unrelated() {
        let enc = FallbackEncoder::new(256, 0).unwrap();
        let a = enc.encode("galaxy rocket orbit");
        let b = enc.encode("rocket orbit nebula");
        let c = enc.encode("kitchen recipe garden");
        assert!(cosine(&a, &b).unwrap() > cosine(&a, &c).unwrap());
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_dim() {
        assert!(FallbackEncoder::new(8, 0).is_err());
        assert!(FallbackEncoder::new(16, 0).is_ok());
    }
}
