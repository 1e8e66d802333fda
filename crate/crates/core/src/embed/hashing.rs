//! Signed feature hashing: a deterministic offline embedding provider.

use super::vector::EmbeddingVector;
use crate::corpus::tokenize;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded 64-bit hash of `bytes`: FNV-1a followed by a splitmix64 finalizer.
pub fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Bucket index and sign for one (lower-cased) token.
pub fn token_slot(token: &str, dim: usize, seed: u64) -> (usize, f64) {
    let h = seeded_hash(seed, token.to_lowercase().as_bytes());
    let bucket = (h % dim as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

/// Term-frequency vector of `text` under signed hashing, L2-normalized.
///
/// Tokens are case-folded. In the rare case that signed collisions cancel
/// every bucket, the unsigned counts are used instead so that any text
/// with at least one token still has a direction.
pub fn hashing_embed(model_id: &str, text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < 2 {
        return Err(Error::invalid(format!("hashing dim must be >= 2, got {dim}")));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::invalid("text has no tokens to embed"));
    }
    let mut signed = vec![0.0; dim];
    let mut unsigned = vec![0.0; dim];
    for token in tokens {
        let (bucket, sign) = token_slot(token, dim, seed);
        signed[bucket] += sign;
        unsigned[bucket] += 1.0;
    }
    let values = if signed.iter().all(|&v| v == 0.0) {
        unsigned
    } else {
        signed
    };
    EmbeddingVector::normalized(model_id, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn tf_scale_removed_by_normalization() {
        let a = hashing_embed("h", "a a", 8, 0).unwrap();
        let b = hashing_embed("h", "a", 8, 0).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn deterministic() {
        let a = hashing_embed("h", "b", 8, 0).unwrap();
        let b = hashing_embed("h", "b", 8, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_cosine_is_exactly_one_after_rounding() {
        let v = hashing_embed("h", "upgrade my mount targets", 64, 3).unwrap();
        let c = dot(&v.values, &v.values).clamp(-1.0, 1.0);
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_vocabularies_without_collisions_are_orthogonal() {
        let left = ["alpha", "beta", "gamma"];
        let right = ["delta", "epsilon"];
        let (dim, seed) = (64, 0);
        // brute-force check that the chosen seed keeps the buckets apart
        let lb: BTreeSet<_> = left.iter().map(|t| token_slot(t, dim, seed).0).collect();
        let rb: BTreeSet<_> = right.iter().map(|t| token_slot(t, dim, seed).0).collect();
        assert!(lb.is_disjoint(&rb), "seed {seed} collides; pick another");
        let a = hashing_embed("h", &left.join(" "), dim, seed).unwrap();
        let b = hashing_embed("h", &right.join(" "), dim, seed).unwrap();
        assert_eq!(dot(&a.values, &b.values), 0.0);
    }

    #[test]
    fn case_folded() {
        let a = hashing_embed("h", "VCN", 16, 1).unwrap();
        let b = hashing_embed("h", "vcn", 16, 1).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn seed_changes_projection() {
        let a = hashing_embed("h", "one two three four", 256, 1).unwrap();
        let b = hashing_embed("h", "one two three four", 256, 2).unwrap();
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn no_tokens_rejected() {
        assert!(hashing_embed("h", "", 8, 0).is_err());
        assert!(hashing_embed("h", "?!", 8, 0).is_err());
        assert!(hashing_embed("h", "a", 1, 0).is_err());
    }

    #[test]
    fn cancelling_collisions_fall_back_to_counts() {
        // find two tokens sharing a bucket with opposite signs
        let dim = 2;
        let (t0, t1) = (0..1000)
            .flat_map(|i| (0..1000).map(move |j| (format!("t{i}"), format!("u{j}"))))
            .find(|(a, b)| {
                let (ba, sa) = token_slot(a, dim, 0);
                let (bb, sb) = token_slot(b, dim, 0);
                ba == bb && sa != sb
            })
            .unwrap();
        let v = hashing_embed("h", &format!("{t0} {t1}"), dim, 0).unwrap();
        assert!((super::super::vector::norm(&v.values) - 1.0).abs() < 1e-12);
    }
}
