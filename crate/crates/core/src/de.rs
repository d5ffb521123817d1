//! Monte-Carlo density evolution of PMBPQM messages on regular LDPC ensembles.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{helstrom_qubit, holevo, QubitBSCQ};
use crate::combine::{bit_qubit, check_qubit, BranchDistribution};
use crate::error::{contract, Result};

/// Samples per RNG stream inside one iteration.
const BLOCK: usize = 64;

/// Population of message channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPopulation {
    pub samples: Vec<QubitBSCQ>,
    pub rng_seed: u64,
}

impl ChannelPopulation {
    /// `m` copies of `base`.
    pub fn new(base: QubitBSCQ, m: usize, rng_seed: u64) -> Self {
        Self {
            samples: vec![base; m],
            rng_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn success(&self) -> f64 {
        de_success(self)
    }

    /// Every sample is perfect, or every sample is worthless.
    pub fn is_absorbed(&self) -> bool {
        let perfect = |w: &QubitBSCQ| w.q == 0.0 && w.theta == QubitBSCQ::PERFECT.theta;
        self.samples.iter().all(perfect) || self.samples.iter().all(QubitBSCQ::is_worthless)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub dv: usize,
    pub dc: usize,
    pub m: usize,
    /// Full iterations, each a check half-round followed by a bit half-round.
    pub n: usize,
    pub success_eps: f64,
    pub bisect_steps: usize,
    pub base_channel: QubitBSCQ,
}

impl DEConfig {
    /// M = 5000, N = 100.
    pub fn full(dv: usize, dc: usize, base_channel: QubitBSCQ) -> Self {
        Self {
            dv,
            dc,
            m: 5000,
            n: 100,
            success_eps: 1e-3,
            bisect_steps: 20,
            base_channel,
        }
    }

    /// M = 1000, N = 50.
    pub fn ci(dv: usize, dc: usize, base_channel: QubitBSCQ) -> Self {
        Self {
            m: 1000,
            n: 50,
            ..Self::full(dv, dc, base_channel)
        }
    }

    pub fn with_base(&self, base_channel: QubitBSCQ) -> Self {
        Self {
            base_channel,
            ..self.clone()
        }
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.dv as f64 / self.dc as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.dv < 2 || self.dc < 2 {
            return Err(contract(format!(
                "degrees must be >= 2, got ({}, {})",
                self.dv, self.dc
            )));
        }
        if self.dv >= self.dc {
            return Err(contract(format!(
                "need dv < dc, got ({}, {})",
                self.dv, self.dc
            )));
        }
        if self.m < 100 {
            return Err(contract(format!("population size {} below 100", self.m)));
        }
        if self.n < 1 {
            return Err(contract("at least one iteration required"));
        }
        if !(self.success_eps > 0.0 && self.success_eps < 0.5) {
            return Err(contract(format!(
                "success_eps {} outside (0, 1/2)",
                self.success_eps
            )));
        }
        Ok(())
    }
}

/// Tournament reduction, sampling one branch per combination.
fn reduce<R: Rng>(
    mut items: Vec<QubitBSCQ>,
    op: fn(&QubitBSCQ, &QubitBSCQ) -> BranchDistribution,
    rng: &mut R,
) -> QubitBSCQ {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        for pair in items.chunks(2) {
            next.push(match pair {
                [a, b] => op(a, b).sample(rng),
                [a] => *a,
                _ => unreachable!(),
            });
        }
        items = next;
    }
    items[0]
}

fn draw<R: Rng>(pop: &[QubitBSCQ], k: usize, rng: &mut R) -> Vec<QubitBSCQ> {
    (0..k)
        .map(|_| pop[rng.random_range(0..pop.len())])
        .collect()
}

fn half_round<F>(pop: &[QubitBSCQ], m: usize, seed: u64, update: F) -> Vec<QubitBSCQ>
where
    F: Fn(&[QubitBSCQ], &mut ChaCha8Rng) -> QubitBSCQ + Sync,
{
    let blocks = m.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = BLOCK.min(m - b * BLOCK);
            (0..len).map(|_| update(pop, &mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// One iteration: a check half-round (`dc - 1` inputs, ⊞) followed by a bit
/// half-round (`dv - 1` inputs then the base channel, ⊛).
pub fn de_iterate(pop: &ChannelPopulation, cfg: &DEConfig) -> ChannelPopulation {
    let mut seeds = ChaCha8Rng::seed_from_u64(pop.rng_seed);
    let (check_seed, bit_seed, next_seed) = (seeds.next_u64(), seeds.next_u64(), seeds.next_u64());
    let checks = half_round(&pop.samples, cfg.m, check_seed, |p, rng| {
        reduce(draw(p, cfg.dc - 1, rng), check_qubit, rng)
    });
    let bits = half_round(&checks, cfg.m, bit_seed, |p, rng| {
        let merged = reduce(draw(p, cfg.dv - 1, rng), bit_qubit, rng);
        bit_qubit(&merged, &cfg.base_channel).sample(rng)
    });
    ChannelPopulation {
        samples: bits,
        rng_seed: next_seed,
    }
}

/// Mean Helstrom success over the population.
pub fn de_success(pop: &ChannelPopulation) -> f64 {
    pop.samples.iter().map(helstrom_qubit).sum::<f64>() / pop.samples.len() as f64
}

/// Runs `cfg.n` iterations from the base channel; returns the final population.
pub fn de_run(cfg: &DEConfig, seed: u64) -> Result<ChannelPopulation> {
    cfg.validate()?;
    let mut pop = ChannelPopulation::new(cfg.base_channel, cfg.m, seed);
    for _ in 0..cfg.n {
        if pop.is_absorbed() {
            break;
        }
        pop = de_iterate(&pop, cfg);
    }
    Ok(pop)
}

/// Whether the channel `(theta, q)` decodes reliably under `cfg`.
pub fn below_threshold(theta: f64, q: f64, cfg: &DEConfig, seed: u64) -> Result<bool> {
    let pop = de_run(&cfg.with_base(QubitBSCQ::new(theta, q)?), seed)?;
    Ok(de_success(&pop) > 1.0 - cfg.success_eps)
}

/// Bisection for the largest reliable `q` at angle `theta`.
pub fn de_threshold(theta: f64, cfg: &DEConfig, bisect_steps: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..bisect_steps {
        let mid = 0.5 * (lo + hi);
        if below_threshold(theta, mid, cfg, seed)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Seed for the `index`-th task of a run seeded with `seed`.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub theta: f64,
    pub q_threshold: f64,
    pub p_threshold: f64,
    pub dv: usize,
    pub dc: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

/// Thresholds over a grid of angles; grid points run in parallel.
pub fn threshold_curve(
    cfg: &DEConfig,
    theta_grid: &[f64],
    seed: u64,
) -> Result<Vec<ThresholdPoint>> {
    if theta_grid.is_empty() {
        return Err(contract("empty theta grid"));
    }
    cfg.validate()?;
    theta_grid
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let seed = task_seed(seed, i);
            let q = de_threshold(theta, cfg, cfg.bisect_steps, seed)?;
            Ok(ThresholdPoint {
                theta,
                q_threshold: q,
                p_threshold: q / 2.0,
                dv: cfg.dv,
                dc: cfg.dc,
                m: cfg.m,
                n: cfg.n,
                seed,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolevoPoint {
    pub theta: f64,
    pub q_bound: f64,
    pub rate: f64,
}

const HOLEVO_STEPS: usize = 60;

/// Largest `q` with `holevo(theta, q) >= rate`; 0 when even `q = 0` falls short.
pub fn holevo_q_bound(theta: f64, rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(contract(format!("rate {rate} outside [0, 1]")));
    }
    let info = |q: f64| QubitBSCQ::new(theta, q).map(|w| holevo(&w));
    if info(0.0)? < rate {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..HOLEVO_STEPS {
        let mid = 0.5 * (lo + hi);
        if info(mid)? >= rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn holevo_curve(rate: f64, theta_grid: &[f64]) -> Result<Vec<HolevoPoint>> {
    if theta_grid.is_empty() {
        return Err(contract("empty theta grid"));
    }
    theta_grid
        .iter()
        .map(|&theta| {
            Ok(HolevoPoint {
                theta,
                q_bound: holevo_q_bound(theta, rate)?,
                rate,
            })
        })
        .collect()
}
