use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs; a leading `-` is kept on numbers.
pub(crate) fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_alphanumeric() || c == '_' {
            current.extend(c.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if c == '-' && chars.peek().is_some_and(|n| n.is_ascii_digit()) {
                current.push('-');
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Hashed bag of word n-grams, scaled to unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    max_ngram: usize,
    id: String,
}

impl HashingEmbedder {
    pub fn new(dim: usize, max_ngram: usize) -> Result<Self> {
        if dim == 0 || max_ngram == 0 {
            return Err(Error::Config(
                "hashing embedder needs positive dimension and n-gram size".into(),
            ));
        }
        Ok(HashingEmbedder {
            dim,
            max_ngram,
            id: format!("local-hash-d{dim}-n{max_ngram}"),
        })
    }

    fn bucket(&self, feature: &str) -> usize {
        (fnv1a(feature.as_bytes()) % self.dim as u64) as usize
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::InvalidArgument("cannot embed empty text".into()));
        }
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(text.trim().to_string());
        }
        let mut values = vec![0.0; self.dim];
        for n in 1..=self.max_ngram.min(tokens.len()) {
            for gram in tokens.windows(n) {
                values[self.bucket(&gram.join(" "))] += 1.0;
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        EmbeddingVector::new(values, self.id.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_signed_numbers() {
        assert_eq!(
            tokenize("Reward -5 at [6, 4]; go LEFT!"),
            ["reward", "-5", "at", "6", "4", "go", "left"]
        );
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashingEmbedder::new(256, 2).unwrap();
        let a = e
            .embed("Head left to discover a treasure trove of 100 points.")
            .unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(
            a,
            e.embed("Head left to discover a treasure trove of 100 points.")
                .unwrap()
        );
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        let e = HashingEmbedder::new(16, 1).unwrap();
        assert!((e.embed("?!").unwrap().norm() - 1.0).abs() < 1e-12);
        assert!(e.embed("   ").is_err());
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
