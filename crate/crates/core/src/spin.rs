use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpinError {
    #[error("spin value {value} at site {site} is not +1 or -1")]
    InvalidSpin { site: usize, value: i8 },
    #[error("{0} sites do not fit in a 64-bit mask")]
    TooManySites(usize),
    #[error("zero-magnetization sector needs an even site count, got {0}")]
    OddSites(usize),
}

/// Spin-1/2 z-projections on every site, stored as `+1` / `-1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self, SpinError> {
        if let Some((site, &value)) = spins.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(SpinError::InvalidSpin { site, value });
        }
        Ok(Self { spins })
    }

    /// Bit `s` set means site `s` is up.
    pub fn from_bits(bits: u64, n_sites: usize) -> Self {
        assert!(n_sites <= 64);
        let spins = (0..n_sites)
            .map(|s| if bits >> s & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { spins }
    }

    pub fn to_bits(&self) -> Result<u64, SpinError> {
        if self.spins.len() > 64 {
            return Err(SpinError::TooManySites(self.spins.len()));
        }
        Ok(self
            .spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | 1 << i))
    }

    /// Uniformly random configuration with equal numbers of up and down spins.
    pub fn random_balanced<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<Self, SpinError> {
        if !n_sites.is_multiple_of(2) {
            return Err(SpinError::OddSites(n_sites));
        }
        let mut spins: Vec<i8> = (0..n_sites).map(|s| if s < n_sites / 2 { 1 } else { -1 }).collect();
        spins.shuffle(rng);
        Ok(Self { spins })
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Sum of the ±1 entries (twice the total S^z).
    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub(crate) fn from_raw(spins: Vec<i8>) -> Self {
        Self { spins }
    }
}

impl fmt::Debug for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.spins.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect();
        write!(f, "SpinConfiguration({s})")
    }
}
