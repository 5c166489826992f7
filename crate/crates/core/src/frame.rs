//! Feedback frame: the per-slot message that carries the previous slot's
//! outcome into the statistic update.
//!
//! Wire layout, most significant bit first, for a word of
//! `log2(k_max) + 2` bits:
//!
//! ```text
//! [reward][restart][arm index, MSB first]
//! ```
//!
//! With `k_max = 4`, `(reward = 1, restart = 0, arm = 2)` packs to `0b1010`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("arm capacity {0} is not a power of two")]
    CapacityNotPowerOfTwo(usize),
    #[error("arm index {arm} does not fit in a frame for k_max = {k_max}")]
    ArmOutOfRange { arm: usize, k_max: usize },
    #[error("frame word has width {got}, expected {expected} bits")]
    WidthMismatch { got: u32, expected: u32 },
    #[error("frame word {value:#b} has bits set above its {width}-bit width")]
    Overflow { value: u32, width: u32 },
}

/// Decoded feedback: reward of the previous pull, restart request and the
/// arm that was pulled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeedbackFrame {
    pub reward: bool,
    pub restart: bool,
    pub prev_arm: usize,
}

impl FeedbackFrame {
    pub fn new(reward: bool, restart: bool, prev_arm: usize) -> Self {
        Self { reward, restart, prev_arm }
    }

    /// Outcome of pulling `arm` in the previous slot.
    pub fn pull(arm: usize, reward: bool) -> Self {
        Self::new(reward, false, arm)
    }

    /// A frame requesting a fresh experiment. Reward and arm are ignored.
    pub fn restart() -> Self {
        Self::new(false, true, 0)
    }
}

/// A packed frame together with its bit width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameWord {
    pub value: u32,
    pub width: u32,
}

/// Number of bits used for the arm field.
pub fn arm_bits(k_max: usize) -> Result<u32, FrameError> {
    if !k_max.is_power_of_two() || k_max > (1 << 29) {
        return Err(FrameError::CapacityNotPowerOfTwo(k_max));
    }
    Ok(k_max.trailing_zeros())
}

/// Total encoded width, `log2(k_max) + 2`.
pub fn frame_width(k_max: usize) -> Result<u32, FrameError> {
    Ok(arm_bits(k_max)? + 2)
}

pub fn encode_feedback(frame: &FeedbackFrame, k_max: usize) -> Result<FrameWord, FrameError> {
    let arm_bits = arm_bits(k_max)?;
    if frame.prev_arm >= k_max {
        return Err(FrameError::ArmOutOfRange { arm: frame.prev_arm, k_max });
    }
    let value = (u32::from(frame.reward) << (arm_bits + 1))
        | (u32::from(frame.restart) << arm_bits)
        | frame.prev_arm as u32;
    Ok(FrameWord { value, width: arm_bits + 2 })
}

pub fn decode_feedback(word: FrameWord, k_max: usize) -> Result<FeedbackFrame, FrameError> {
    let arm_bits = arm_bits(k_max)?;
    let expected = arm_bits + 2;
    if word.width != expected {
        return Err(FrameError::WidthMismatch { got: word.width, expected });
    }
    if word.value >> expected != 0 {
        return Err(FrameError::Overflow { value: word.value, width: expected });
    }
    let arm_mask = (1u32 << arm_bits) - 1;
    Ok(FeedbackFrame {
        reward: (word.value >> (arm_bits + 1)) & 1 == 1,
        restart: (word.value >> arm_bits) & 1 == 1,
        prev_arm: (word.value & arm_mask) as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(value: u32, width: u32) -> FrameWord {
        FrameWord { value, width }
    }

    #[test]
    fn pinned_layouts() {
        assert_eq!(encode_feedback(&FeedbackFrame::new(true, false, 2), 4), Ok(word(0b1010, 4)));
        assert_eq!(encode_feedback(&FeedbackFrame::new(false, true, 0), 4), Ok(word(0b0100, 4)));
        assert_eq!(encode_feedback(&FeedbackFrame::new(true, true, 5), 8), Ok(word(0b11101, 5)));
    }

    #[test]
    fn pinned_decodes() {
        assert_eq!(decode_feedback(word(0b1010, 4), 4), Ok(FeedbackFrame::new(true, false, 2)));
        assert_eq!(decode_feedback(word(0b0000, 4), 4), Ok(FeedbackFrame::new(false, false, 0)));
    }

    #[test]
    fn exhaustive_round_trip() {
        for k_max in [1usize, 2, 4, 8, 16] {
            for arm in 0..k_max {
                for reward in [false, true] {
                    for restart in [false, true] {
                        let f = FeedbackFrame::new(reward, restart, arm);
                        let w = encode_feedback(&f, k_max).unwrap();
                        assert_eq!(w.width, k_max.trailing_zeros() + 2);
                        assert_eq!(decode_feedback(w, k_max).unwrap(), f);
                    }
                }
            }
        }
    }

    #[test]
    fn arm_out_of_range() {
        assert_eq!(
            encode_feedback(&FeedbackFrame::pull(4, true), 4),
            Err(FrameError::ArmOutOfRange { arm: 4, k_max: 4 })
        );
    }

    #[test]
    fn width_and_capacity_errors() {
        assert_eq!(
            decode_feedback(word(0b1010, 5), 4),
            Err(FrameError::WidthMismatch { got: 5, expected: 4 })
        );
        assert!(matches!(decode_feedback(word(0b10000, 4), 4), Err(FrameError::Overflow { .. })));
        assert_eq!(arm_bits(6), Err(FrameError::CapacityNotPowerOfTwo(6)));
        assert_eq!(arm_bits(0), Err(FrameError::CapacityNotPowerOfTwo(0)));
    }
}
