//! `H = Σ_bonds J S_i·S_j` with spin-1/2 operators on a list of weighted bonds.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::ansatz::{Ansatz, EvalError, Evaluator};
use crate::lattice::LatticeSpec;
use crate::spin::SpinConfiguration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coupling {name} = {value} must be finite and non-negative")]
    BadCoupling { name: &'static str, value: f64 },
    #[error("bond ({a}, {b}) is invalid on {n_sites} sites")]
    BadBond { a: usize, b: usize, n_sites: usize },
    #[error("{0} sites do not fit in a 64-bit configuration mask")]
    TooManySites(usize),
}

/// One undirected exchange term `J S_a·S_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergModel {
    n_sites: usize,
    couplings: Vec<Coupling>,
    lattice: Option<LatticeSpec>,
    j1: f64,
    j2: f64,
}

fn check_coupling(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::BadCoupling { name, value })
    }
}

impl HeisenbergModel {
    /// J1 on nearest-neighbour bonds and J2 on next-nearest ones, each scaled by
    /// the bond multiplicity. Pairs present in both shells are merged.
    pub fn from_lattice(lattice: &LatticeSpec, j1: f64, j2: f64) -> Result<Self, ModelError> {
        check_coupling("J1", j1)?;
        check_coupling("J2", j2)?;
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (bonds, j) in [(lattice.nn_bonds(), j1), (lattice.nnn_bonds(), j2)] {
            for b in bonds {
                *merged.entry((b.a, b.b)).or_default() += j * b.multiplicity as f64;
            }
        }
        let mut model = Self::assemble(lattice.n_sites(), merged)?;
        model.lattice = Some(lattice.clone());
        model.j1 = j1;
        model.j2 = j2;
        Ok(model)
    }

    /// Arbitrary bonds `(a, b, J)`; repeated pairs add up.
    pub fn from_bonds(n_sites: usize, bonds: &[(usize, usize, f64)]) -> Result<Self, ModelError> {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, j) in bonds {
            if a == b || a >= n_sites || b >= n_sites {
                return Err(ModelError::BadBond { a, b, n_sites });
            }
            check_coupling("J", j)?;
            *merged.entry((a.min(b), a.max(b))).or_default() += j;
        }
        Self::assemble(n_sites, merged)
    }

    /// Periodic chain of `n` sites with coupling `j`; `n = 2` is a single bond.
    pub fn ring(n: usize, j: f64) -> Result<Self, ModelError> {
        let bonds: Vec<(usize, usize, f64)> = if n == 2 {
            vec![(0, 1, j)]
        } else {
            (0..n).map(|i| (i, (i + 1) % n, j)).collect()
        };
        Self::from_bonds(n, &bonds)
    }

    fn assemble(n_sites: usize, merged: BTreeMap<(usize, usize), f64>) -> Result<Self, ModelError> {
        if n_sites > 64 {
            return Err(ModelError::TooManySites(n_sites));
        }
        let couplings = merged
            .into_iter()
            .filter(|&(_, j)| j != 0.0)
            .map(|((a, b), j)| Coupling { a, b, j })
            .collect();
        Ok(Self { n_sites, couplings, lattice: None, j1: 0.0, j2: 0.0 })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn lattice(&self) -> Option<&LatticeSpec> {
        self.lattice.as_ref()
    }

    pub fn j1(&self) -> f64 {
        self.j1
    }

    pub fn j2(&self) -> f64 {
        self.j2
    }

    /// `Σ J s_a s_b / 4`
    pub fn diagonal_bits(&self, bits: u64) -> f64 {
        self.couplings
            .iter()
            .map(|c| {
                let parallel = (bits >> c.a & 1) == (bits >> c.b & 1);
                if parallel {
                    0.25 * c.j
                } else {
                    -0.25 * c.j
                }
            })
            .sum()
    }

    /// Diagonal entry first, then one `(σ', J/2)` per antiparallel bond.
    pub fn connected_bits(&self, bits: u64, out: &mut Vec<(u64, f64)>) {
        out.clear();
        out.push((bits, self.diagonal_bits(bits)));
        for c in &self.couplings {
            if (bits >> c.a & 1) != (bits >> c.b & 1) {
                out.push((bits ^ (1 << c.a | 1 << c.b), 0.5 * c.j));
            }
        }
    }

    pub fn connected(&self, config: &SpinConfiguration) -> Vec<(SpinConfiguration, f64)> {
        let bits = config.to_bits().expect("model sites fit in 64 bits");
        let mut out = Vec::new();
        self.connected_bits(bits, &mut out);
        out.into_iter()
            .map(|(b, h)| (SpinConfiguration::from_bits(b, self.n_sites), h))
            .collect()
    }

    /// `Σ_σ' H_σσ' ψ(σ')/ψ(σ)`; connected configurations where ψ vanishes contribute zero.
    pub fn local_energy<A: Ansatz + ?Sized>(&self, wf: &A, config: &SpinConfiguration) -> Result<Complex64, EvalError> {
        let log_psi = wf.log_psi(config)?;
        let mut total = Complex64::default();
        for (other, h) in self.connected(config) {
            if other == *config {
                total += h;
                continue;
            }
            match wf.log_psi(&other) {
                Ok(lp) => total += h * (lp - log_psi).exp(),
                Err(EvalError::Node) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(total)
    }

    /// Same as [`local_energy`](Self::local_energy) through an [`Evaluator`],
    /// given `log ψ(σ)`.
    pub fn local_energy_bits(
        &self,
        eval: &mut dyn Evaluator,
        bits: u64,
        log_psi: Complex64,
        scratch: &mut Vec<(u64, f64)>,
    ) -> Result<Complex64, EvalError> {
        self.connected_bits(bits, scratch);
        let mut total = Complex64::new(scratch[0].1, 0.0);
        for &(other, h) in &scratch[1..] {
            match eval.log_psi(other) {
                Ok(lp) => total += h * (lp - log_psi).exp(),
                Err(EvalError::Node) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(total)
    }
}
