//! Permuted-block randomization with sealed envelopes.

use cxrkit_core::Arm;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::ids::ReaderId;

/// One envelope. The arm is private: read it through [`Allocation::arm`],
/// which refuses while the envelope is sealed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub sequence_index: usize,
    arm: Arm,
    pub sealed: bool,
    pub opened_at_ms: Option<u64>,
    pub reader_id: Option<ReaderId>,
}

impl Allocation {
    pub fn arm(&self) -> Result<Arm, StudyError> {
        if self.sealed {
            Err(StudyError::Concealed {
                sequence_index: self.sequence_index,
            })
        } else {
            Ok(self.arm)
        }
    }

    pub(crate) fn open(&mut self, reader_id: ReaderId, at_ms: u64) -> Arm {
        debug_assert!(self.sealed, "envelope opened twice");
        self.sealed = false;
        self.opened_at_ms = Some(at_ms);
        self.reader_id = Some(reader_id);
        self.arm
    }

    /// The only form of an allocation that leaves the process.
    pub fn view(&self) -> AllocationView {
        AllocationView {
            sequence_index: self.sequence_index,
            sealed: self.sealed,
            opened_at_ms: self.opened_at_ms,
            reader_id: self.reader_id.clone(),
            arm: self.arm().ok(),
        }
    }

    #[cfg(test)]
    pub(crate) fn set_arm_for_test(&mut self, arm: Arm) {
        self.arm = arm;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationView {
    pub sequence_index: usize,
    pub sealed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opened_at_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reader_id: Option<ReaderId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

/// Sealed 1:1 sequence in shuffled blocks of `block_size`.
///
/// A trailing partial block is the prefix of a shuffled full block.
pub fn generate_allocation(
    seed: u64,
    n: usize,
    block_size: usize,
) -> Result<Vec<Allocation>, StudyError> {
    if block_size == 0 || block_size % 2 == 1 {
        return Err(StudyError::OddBlockSize(block_size));
    }
    if n == 0 {
        return Err(StudyError::EmptyAllocation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arms = Vec::with_capacity(n + block_size);
    while arms.len() < n {
        let mut block: Vec<Arm> = (0..block_size)
            .map(|i| {
                if i < block_size / 2 {
                    Arm::AiAssisted
                } else {
                    Arm::StandardCare
                }
            })
            .collect();
        block.shuffle(&mut rng);
        arms.extend(block);
    }
    arms.truncate(n);
    Ok(arms
        .into_iter()
        .enumerate()
        .map(|(sequence_index, arm)| Allocation {
            sequence_index,
            arm,
            sealed: true,
            opened_at_ms: None,
            reader_id: None,
        })
        .collect())
}

/// Breaks every seal of a sequence, for unblinding after the study closes.
/// Consumes the envelopes so nothing sealed survives the call.
pub fn unblind(sequence: Vec<Allocation>) -> Vec<Arm> {
    sequence.into_iter().map(|a| a.arm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unblind_matches_opening_in_order() {
        let seq = generate_allocation(9, 30, 6).unwrap();
        let mut copy = seq.clone();
        assert_eq!(unblind(seq), opened(&mut copy));
    }

    fn opened(seq: &mut [Allocation]) -> Vec<Arm> {
        seq.iter_mut()
            .map(|a| a.open(ReaderId::new(format!("r{}", a.sequence_index)), 0))
            .collect()
    }

    #[test]
    fn blocks_of_four_are_balanced() {
        let mut seq = generate_allocation(42, 20, 4).unwrap();
        let arms = opened(&mut seq);
        for block in arms.chunks(4) {
            assert_eq!(block.iter().filter(|a| **a == Arm::AiAssisted).count(), 2);
        }
        assert_eq!(arms.iter().filter(|a| **a == Arm::AiAssisted).count(), 10);
    }

    #[test]
    fn full_trial_sequence_splits_evenly() {
        let mut seq = generate_allocation(2024, 296, 4).unwrap();
        let arms = opened(&mut seq);
        assert_eq!(arms.iter().filter(|a| **a == Arm::AiAssisted).count(), 148);
        assert_eq!(
            arms.iter().filter(|a| **a == Arm::StandardCare).count(),
            148
        );
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate_allocation(9, 40, 4).unwrap(),
            generate_allocation(9, 40, 4).unwrap()
        );
        assert_ne!(
            opened(&mut generate_allocation(9, 40, 4).unwrap()),
            opened(&mut generate_allocation(10, 40, 4).unwrap())
        );
    }

    #[test]
    fn sealed_arm_is_unreadable() {
        let seq = generate_allocation(1, 4, 4).unwrap();
        assert!(seq.iter().all(|a| a.sealed));
        assert!(matches!(
            seq[2].arm(),
            Err(StudyError::Concealed { sequence_index: 2 })
        ));
        let view = serde_json::to_value(seq[2].view()).unwrap();
        assert!(view.get("arm").is_none());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            generate_allocation(1, 10, 3),
            Err(StudyError::OddBlockSize(3))
        ));
        assert!(matches!(
            generate_allocation(1, 10, 0),
            Err(StudyError::OddBlockSize(0))
        ));
        assert!(matches!(
            generate_allocation(1, 0, 4),
            Err(StudyError::EmptyAllocation)
        ));
    }

    proptest! {
        #[test]
        fn every_complete_block_balanced(seed in any::<u64>(), half in 1usize..5, n in 1usize..120) {
            let block = half * 2;
            let mut seq = generate_allocation(seed, n, block).unwrap();
            prop_assert_eq!(seq.len(), n);
            let arms = opened(&mut seq);
            for chunk in arms.chunks(block).filter(|c| c.len() == block) {
                prop_assert_eq!(chunk.iter().filter(|a| **a == Arm::AiAssisted).count(), half);
            }
            let ai = arms.iter().filter(|a| **a == Arm::AiAssisted).count() as i64;
            prop_assert!((2 * ai - n as i64).abs() <= block as i64);
        }
    }
}
