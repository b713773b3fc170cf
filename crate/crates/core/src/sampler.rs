//! Metropolis sampling of |ψ|² with up/down spin exchanges.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{EvalError, Evaluator};
use crate::spin::SpinConfiguration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("zero-magnetization sampling needs an even site count, got {0}")]
    OddSites(usize),
    #[error("sampling needs between 2 and 64 sites, got {0}")]
    SiteCount(usize),
    #[error("chain {chain} sits on a node of ψ and found no way off it")]
    Stuck { chain: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Independent chains; 0 means one chain per sample in the batch.
    pub n_chains: usize,
    /// Sweeps of `N` proposals between emitted samples.
    pub sweeps_between: usize,
    /// Sweeps discarded after a chain is created.
    pub burn_in: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_chains: 0, sweeps_between: 1, burn_in: 50 }
    }
}

impl SamplerConfig {
    pub fn chains_for(&self, batch: usize) -> usize {
        if self.n_chains == 0 {
            batch.max(1)
        } else {
            self.n_chains
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.sweeps_between == 0 {
            return Err(SamplerError::Config("sweeps_between must be at least 1".into()));
        }
        Ok(())
    }
}

/// One emitted configuration with its log amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub bits: u64,
    pub log_psi: Complex64,
}

impl Sample {
    pub fn config(&self, n_sites: usize) -> SpinConfiguration {
        SpinConfiguration::from_bits(self.bits, n_sites)
    }
}

#[derive(Debug, Clone)]
pub struct MarkovChain {
    n_sites: usize,
    current: u64,
    /// `Re = -∞` while the chain sits on a node.
    current_log_psi: Complex64,
    up: Vec<usize>,
    down: Vec<usize>,
    rng: ChaCha8Rng,
    proposed: u64,
    accepted: u64,
}

fn check_sites(n_sites: usize) -> Result<(), SamplerError> {
    if !(2..=64).contains(&n_sites) {
        return Err(SamplerError::SiteCount(n_sites));
    }
    if !n_sites.is_multiple_of(2) {
        return Err(SamplerError::OddSites(n_sites));
    }
    Ok(())
}

fn evaluate(eval: &mut dyn Evaluator, bits: u64) -> Result<Complex64, EvalError> {
    match eval.log_psi(bits) {
        Err(EvalError::Node) => Ok(Complex64::new(f64::NEG_INFINITY, 0.0)),
        other => other,
    }
}

impl MarkovChain {
    /// Uniformly random balanced start. `stream` separates chains sharing a seed.
    pub fn new(n_sites: usize, seed: u64, stream: u64, eval: &mut dyn Evaluator) -> Result<Self, SamplerError> {
        check_sites(n_sites)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut sites: Vec<usize> = (0..n_sites).collect();
        sites.shuffle(&mut rng);
        let (up, down) = sites.split_at(n_sites / 2);
        let mut up = up.to_vec();
        up.sort_unstable();
        let mut down = down.to_vec();
        down.sort_unstable();
        let current = up.iter().fold(0u64, |acc, &s| acc | 1 << s);
        let current_log_psi = evaluate(eval, current)?;
        Ok(Self { n_sites, current, current_log_psi, up, down, rng, proposed: 0, accepted: 0 })
    }

    pub fn current(&self) -> SpinConfiguration {
        SpinConfiguration::from_bits(self.current, self.n_sites)
    }

    pub fn current_bits(&self) -> u64 {
        self.current
    }

    pub fn current_log_psi(&self) -> Complex64 {
        self.current_log_psi
    }

    pub fn on_node(&self) -> bool {
        self.current_log_psi.re == f64::NEG_INFINITY
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Re-evaluate the cached amplitude after a parameter change.
    pub fn refresh(&mut self, eval: &mut dyn Evaluator) -> Result<(), EvalError> {
        self.current_log_psi = evaluate(eval, self.current)?;
        Ok(())
    }

    /// One exchange proposal; returns whether it was accepted.
    pub fn step(&mut self, eval: &mut dyn Evaluator) -> Result<bool, EvalError> {
        let i = self.rng.random_range(0..self.up.len());
        let j = self.rng.random_range(0..self.down.len());
        let u: f64 = self.rng.random();
        let (a, b) = (self.up[i], self.down[j]);
        let proposal = self.current ^ (1 << a | 1 << b);
        let lp = evaluate(eval, proposal)?;
        self.proposed += 1;
        let accept = if lp.re == f64::NEG_INFINITY {
            false
        } else if self.on_node() {
            true
        } else {
            u < (2.0 * (lp.re - self.current_log_psi.re)).exp()
        };
        if accept {
            self.current = proposal;
            self.current_log_psi = lp;
            self.up[i] = b;
            self.down[j] = a;
            self.accepted += 1;
        }
        Ok(accept)
    }

    pub fn sweep(&mut self, eval: &mut dyn Evaluator, sweeps: usize) -> Result<(), EvalError> {
        for _ in 0..sweeps * self.n_sites {
            self.step(eval)?;
        }
        Ok(())
    }
}

/// Chains that persist across optimizer steps.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    chains: Vec<MarkovChain>,
    config: SamplerConfig,
    proposed_mark: u64,
    accepted_mark: u64,
}

impl ChainEnsemble {
    /// Creates `n_chains` chains and runs the burn-in sweeps.
    pub fn new(
        n_sites: usize,
        n_chains: usize,
        config: SamplerConfig,
        seed: u64,
        eval: &mut dyn Evaluator,
    ) -> Result<Self, SamplerError> {
        config.validate()?;
        let chains = (0..n_chains.max(1))
            .map(|c| MarkovChain::new(n_sites, seed, c as u64, eval))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ensemble = Self { chains, config, proposed_mark: 0, accepted_mark: 0 };
        for chain in &mut ensemble.chains {
            chain.sweep(eval, config.burn_in)?;
        }
        ensemble.mark();
        Ok(ensemble)
    }

    pub fn chains(&self) -> &[MarkovChain] {
        &self.chains
    }

    fn mark(&mut self) {
        self.proposed_mark = self.chains.iter().map(|c| c.proposed).sum();
        self.accepted_mark = self.chains.iter().map(|c| c.accepted).sum();
    }

    pub fn refresh(&mut self, eval: &mut dyn Evaluator) -> Result<(), EvalError> {
        for chain in &mut self.chains {
            chain.refresh(eval)?;
        }
        Ok(())
    }

    /// Exactly `n_samples` samples, one per chain per `sweeps_between` sweeps,
    /// merged in chain order. Returns the samples and the acceptance rate of
    /// the proposals made.
    pub fn sample(&mut self, n_samples: usize, eval: &mut dyn Evaluator) -> Result<(Vec<Sample>, f64), SamplerError> {
        self.mark();
        let mut out = Vec::with_capacity(n_samples);
        'rounds: while out.len() < n_samples {
            for (idx, chain) in self.chains.iter_mut().enumerate() {
                if out.len() == n_samples {
                    break 'rounds;
                }
                chain.sweep(eval, self.config.sweeps_between)?;
                if chain.on_node() {
                    return Err(SamplerError::Stuck { chain: idx });
                }
                out.push(Sample { bits: chain.current, log_psi: chain.current_log_psi });
            }
        }
        let proposed: u64 = self.chains.iter().map(|c| c.proposed).sum::<u64>() - self.proposed_mark;
        let accepted: u64 = self.chains.iter().map(|c| c.accepted).sum::<u64>() - self.accepted_mark;
        let rate = if proposed == 0 { 1.0 } else { accepted as f64 / proposed as f64 };
        Ok((out, rate))
    }
}

/// Fresh chains, burn-in, then `n_samples` samples.
pub fn sample_batch(
    eval: &mut dyn Evaluator,
    n_sites: usize,
    config: SamplerConfig,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<Sample>, f64), SamplerError> {
    let mut ensemble = ChainEnsemble::new(n_sites, config.chains_for(n_samples), config, seed, eval)?;
    ensemble.sample(n_samples, eval)
}
