//! Scalar LLR population dynamics for belief propagation on the BSC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Belief propagation on the BSC, all-zero codeword, messages as LLRs.
pub struct LlrOracle {
    pub dv: usize,
    pub dc: usize,
    pub m: usize,
    pub iterations: usize,
}

impl LlrOracle {
    pub fn bit_error(&self, p: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = ((1.0 - p) / p).ln();
        let channel = |rng: &mut ChaCha8Rng| if rng.random::<f64>() < p { -l } else { l };
        let mut pop: Vec<f64> = (0..self.m).map(|_| channel(&mut rng)).collect();
        for _ in 0..self.iterations {
            let checks: Vec<f64> = (0..self.m)
                .map(|_| {
                    let prod: f64 = (0..self.dc - 1)
                        .map(|_| (pop[rng.random_range(0..self.m)] / 2.0).tanh())
                        .product();
                    2.0 * prod.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()
                })
                .collect();
            pop = (0..self.m)
                .map(|_| {
                    channel(&mut rng)
                        + (0..self.dv - 1)
                            .map(|_| checks[rng.random_range(0..self.m)])
                            .sum::<f64>()
                })
                .collect();
        }
        // Posterior error of each message, the classical counterpart of its Helstrom error.
        pop.iter()
            .map(|&x| 1.0 / (1.0 + x.abs().exp()))
            .sum::<f64>()
            / self.m as f64
    }

    pub fn threshold(&self, eps: f64, steps: usize, seed: u64) -> f64 {
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            if self.bit_error(mid, seed) < eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
