use serde::{Deserialize, Serialize};

/// Harmonic-in-blocks step sizes: `a(m) = 1 / ⌈(m + 1) / L⌉`.
///
/// Each value is repeated for `L` consecutive iterations, so the sequence is
/// `1` (L times), `1/2` (L times), `1/3`, … . It sums to infinity while its
/// squares sum to `L π² / 6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSchedule {
    pub block_length: u64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { block_length: 10 }
    }
}

impl StepSchedule {
    pub fn new(block_length: u64) -> Self {
        assert!(block_length >= 1, "block length must be positive");
        Self { block_length }
    }

    #[inline]
    pub fn step_size(&self, m: u64) -> f64 {
        1.0 / (m + 1).div_ceil(self.block_length) as f64
    }

    /// `(Σ a(m), Σ a(m)²)` over `m = 0..terms`, summed block by block.
    pub fn partial_sums(&self, terms: u64) -> (f64, f64) {
        let l = self.block_length;
        let (full, rem) = (terms / l, terms % l);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        // smallest terms first
        if rem > 0 {
            let a = 1.0 / (full + 1) as f64;
            sum += rem as f64 * a;
            sum_sq += rem as f64 * a * a;
        }
        for k in (1..=full).rev() {
            let a = 1.0 / k as f64;
            sum += l as f64 * a;
            sum_sq += l as f64 * a * a;
        }
        (sum, sum_sq)
    }

    /// `L π² / 6`, the limit of `Σ a(m)²`.
    pub fn square_sum_limit(&self) -> f64 {
        self.block_length as f64 * std::f64::consts::PI.powi(2) / 6.0
    }
}

/// Free-function form of [`StepSchedule::step_size`].
pub fn step_size(m: u64, schedule: &StepSchedule) -> f64 {
    schedule.step_size(m)
}
