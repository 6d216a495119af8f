use rand::RngCore;

use super::KnowledgeError;
use crate::rng::{fnv1a64, stream};

/// Version tag recorded as provenance for anchors from [`hash_embed_text`].
pub const HASH_EMBEDDER: &str = "hash-embed-v1";

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Deterministic bag-of-tokens embedding on the unit sphere.
///
/// Each token seeds a SplitMix64 stream with its FNV-1a hash; the stream's
/// first `dim` outputs, mapped through their top 53 bits to `[-1, 1)`, form
/// the token vector. Token vectors are summed and the sum L2-normalized.
pub fn hash_embed_text(text: &str, dim: usize) -> Result<Vec<f64>, KnowledgeError> {
    if dim == 0 {
        return Err(KnowledgeError::ZeroDimension);
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(KnowledgeError::EmptyText(text.to_string()));
    }
    let mut sum = vec![0.0; dim];
    for token in &tokens {
        let mut rng = stream(fnv1a64(token.as_bytes()));
        for v in sum.iter_mut() {
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            *v += 2.0 * unit - 1.0;
        }
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(KnowledgeError::EmptyText(text.to_string()));
    }
    Ok(sum.into_iter().map(|v| v / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reimplementation of the FNV-1a → SplitMix64 chain, sharing no
    /// code with the crate's hashing or RNG helpers.
    fn oracle(text: &str, dim: usize) -> Vec<f64> {
        let mut sum = vec![0.0f64; dim];
        for token in text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let mut h: u64 = 14695981039346656037;
            for b in token.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211);
            }
            let mut state = h;
            for v in sum.iter_mut() {
                state = state.wrapping_add(0x9E3779B97F4A7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
                z ^= z >> 31;
                *v += ((z >> 11) as f64) * 2f64.powi(-53) * 2.0 - 1.0;
            }
        }
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        sum.iter().map(|v| v / norm).collect()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = hash_embed_text("uniform red region", 64).unwrap();
        let b = hash_embed_text("uniform red region", 64).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_reimplementation() {
        for text in ["uniform red region", "uniform blue region", "Color: Striped-Fill, 2 bands"] {
            let got = hash_embed_text(text, 64).unwrap();
            let want = oracle(text, 64);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-15, "{text}");
            }
        }
    }

    #[test]
    fn red_and_blue_regions_differ() {
        let red = hash_embed_text("uniform red region", 64).unwrap();
        let blue = hash_embed_text("uniform blue region", 64).unwrap();
        assert_ne!(red, blue);
        let cos: f64 = red.iter().zip(&blue).map(|(a, b)| a * b).sum();
        let (ro, bo) = (oracle("uniform red region", 64), oracle("uniform blue region", 64));
        let cos_oracle: f64 = ro.iter().zip(&bo).map(|(a, b)| a * b).sum();
        assert!((cos - cos_oracle).abs() < 1e-14);
        // two of three tokens are shared
        assert!(cos > 0.3 && cos < 0.95, "cosine {cos}");
    }

    #[test]
    fn tokenization_ignores_case_and_punctuation() {
        assert_eq!(tokenize("Color: uniform-RED region!"), vec!["color", "uniform", "red", "region"]);
        let a = hash_embed_text("Uniform RED", 16).unwrap();
        let b = hash_embed_text("uniform, red", 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_token_list_is_rejected() {
        assert!(matches!(hash_embed_text(" ,;- ", 8), Err(KnowledgeError::EmptyText(_))));
        assert!(hash_embed_text("ok", 0).is_err());
    }
}
