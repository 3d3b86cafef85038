//! Reference-backed oracle with a controlled, reproducible error rate.

use std::collections::BTreeSet;

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use crate::alignment::{Decision, MappingKey};
use crate::prompt::PromptInstance;

use super::{Oracle, OracleError, OracleVerdict};

/// Answers whether a mapping belongs to the reference alignment, flipping
/// the answer with probability `error_rate`.
///
/// The flip draw is a pure function of (seed, mapping identity), so verdicts
/// are independent of query order and of how assessments are scheduled
/// across threads. The same seed and error rate always reproduce the same
/// verdict for the same mapping.
pub struct SimulatedOracle {
    error_rate: f64,
    seed: u64,
    reference: BTreeSet<MappingKey>,
    id: String,
}

impl SimulatedOracle {
    pub fn new(
        error_rate: f64,
        seed: u64,
        reference: impl IntoIterator<Item = MappingKey>,
    ) -> Self {
        SimulatedOracle {
            error_rate,
            seed,
            reference: reference.into_iter().collect(),
            id: format!("simulated-e{error_rate}-s{seed}"),
        }
    }

    pub fn error_rate(&self) -> f64 {
        self.error_rate
    }

    /// Uniform draw in [0, 1) for one mapping, from the first eight bytes of
    /// SHA-256 over the seed and the length-framed mapping identity.
    fn draw(&self, key: &MappingKey) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_be_bytes());
        for part in [key.source.as_str(), key.target.as_str()] {
            hasher.update((part.len() as u64).to_be_bytes());
            hasher.update(part.as_bytes());
        }
        hasher.update(key.relation.symbol().as_bytes());
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(head) as f64 / (u64::MAX as f64 + 1.0)
    }

    /// The decision for one mapping, without going through a prompt.
    pub fn decide(&self, key: &MappingKey) -> Decision {
        let truth = self.reference.contains(key);
        let flip = self.draw(key) < self.error_rate;
        if truth != flip {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

#[async_trait]
impl Oracle for SimulatedOracle {
    fn model_id(&self) -> &str {
        &self.id
    }

    async fn assess(&self, prompt: &PromptInstance) -> Result<OracleVerdict, OracleError> {
        Ok(OracleVerdict::decided(self.decide(&prompt.mapping_key)))
    }
}
