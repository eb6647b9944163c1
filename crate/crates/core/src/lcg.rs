use serde::{Deserialize, Serialize};

/// The fixed linear congruential generator used for every seeded choice in
/// the runtime and the example programs: victim selection, test data, the
/// corpus `random` instruction. Keeping one pinned generator makes seeded
/// runs reproducible bit for bit.
///
/// seed' = (1103515245 * seed + 12345) mod 2^31; num = seed' / 2^31.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lcg {
    pub seed: i64,
}

pub const LCG_MULT: i64 = 1103515245;
pub const LCG_INC: i64 = 12345;
pub const LCG_MOD: i64 = 1 << 31;

impl Lcg {
    pub fn new(seed: i64) -> Lcg {
        Lcg {
            seed: seed.rem_euclid(LCG_MOD),
        }
    }

    /// Advance and return the new raw seed in [0, 2^31).
    pub fn next_seed(&mut self) -> i64 {
        self.seed = (LCG_MULT.wrapping_mul(self.seed) + LCG_INC).rem_euclid(LCG_MOD);
        self.seed
    }

    /// Advance and return a real in [0, 1).
    pub fn next_real(&mut self) -> f64 {
        self.next_seed() as f64 / LCG_MOD as f64
    }

    /// Advance and return an integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_seed() as u64 % n as u64) as usize
    }
}
