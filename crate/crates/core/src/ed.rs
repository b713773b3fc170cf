//! Exact ground states in the zero-magnetization sector.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{check_length, Ansatz, EvalError};
use crate::heisenberg::HeisenbergModel;
use crate::spin::SpinConfiguration;

/// Largest site count handled (sector dimension 184756).
pub const MAX_SITES: usize = 20;
/// Sectors up to this dimension use a dense eigensolver.
pub const DENSE_LIMIT: usize = 4000;
/// Eigenvalues within this distance of e0 count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Required `‖Hv − e0 v‖` for a unit vector.
pub const RESIDUAL_TOL: f64 = 1e-8;

const LANCZOS_TARGET: f64 = 1e-11;
const KRYLOV_MAX: usize = 300;
const MAX_RESTARTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdError {
    #[error("zero-magnetization sector needs an even site count, got {0}")]
    OddSites(usize),
    #[error("{n_sites} sites is out of ED range (at most {max})")]
    OutOfRange { n_sites: usize, max: usize },
    #[error("Lanczos did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Balanced configurations in increasing bitmask order.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBasis {
    n_sites: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl SectorBasis {
    pub fn new(n_sites: usize) -> Result<Self, EdError> {
        if !n_sites.is_multiple_of(2) {
            return Err(EdError::OddSites(n_sites));
        }
        if n_sites > MAX_SITES {
            return Err(EdError::OutOfRange { n_sites, max: MAX_SITES });
        }
        let half = n_sites / 2;
        let mut states = Vec::new();
        if n_sites == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks the fixed-popcount masks in increasing order
            let mut x: u64 = (1 << half) - 1;
            let limit = 1u64 << n_sites;
            while x < limit {
                states.push(x);
                let c = x & x.wrapping_neg();
                let r = x + c;
                x = (((r ^ x) >> 2) / c) | r;
            }
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { n_sites, states, index })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, bits: u64) -> Option<usize> {
        self.index.get(&bits).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct EdResult {
    /// Total ground energy.
    pub e0: f64,
    pub basis: Arc<SectorBasis>,
    /// Unit vector over `basis`, largest-magnitude entry positive.
    pub ground_vector: Vec<f64>,
    pub degeneracy: usize,
    pub residual: f64,
    pub solver: Solver,
}

/// Summary written next to runs and by the `ed` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdRecord {
    pub n_sites: usize,
    pub sector_dim: usize,
    pub e0: f64,
    pub e0_per_site: f64,
    pub degeneracy: usize,
    pub residual: f64,
    pub solver: Solver,
}

impl EdResult {
    pub fn e0_per_site(&self) -> f64 {
        self.e0 / self.basis.n_sites() as f64
    }

    pub fn record(&self) -> EdRecord {
        EdRecord {
            n_sites: self.basis.n_sites(),
            sector_dim: self.basis.dim(),
            e0: self.e0,
            e0_per_site: self.e0_per_site(),
            degeneracy: self.degeneracy,
            residual: self.residual,
            solver: self.solver,
        }
    }
}

/// `y = H x` over the sector, matrix free.
pub fn apply_hamiltonian(model: &HeisenbergModel, basis: &SectorBasis, x: &[f64], y: &mut [f64]) {
    let mut scratch = Vec::new();
    y.iter_mut().for_each(|v| *v = 0.0);
    for (i, &s) in basis.states().iter().enumerate() {
        model.connected_bits(s, &mut scratch);
        let mut acc = 0.0;
        for &(o, h) in &scratch {
            let j = basis.index_of(o).expect("exchange stays in the sector");
            acc += h * x[j];
        }
        y[i] = acc;
    }
}

pub fn dense_hamiltonian(model: &HeisenbergModel, basis: &SectorBasis) -> DMatrix<f64> {
    let dim = basis.dim();
    let mut h = DMatrix::zeros(dim, dim);
    let mut scratch = Vec::new();
    for (i, &s) in basis.states().iter().enumerate() {
        model.connected_bits(s, &mut scratch);
        for &(o, v) in &scratch {
            h[(i, basis.index_of(o).expect("exchange stays in the sector"))] += v;
        }
    }
    h
}

fn residual_norm(model: &HeisenbergModel, basis: &SectorBasis, v: &[f64], e: f64) -> f64 {
    let mut hv = vec![0.0; v.len()];
    apply_hamiltonian(model, basis, v, &mut hv);
    hv.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn fix_sign(v: &mut [f64]) {
    let (mut best, mut sign) = (0.0, 1.0);
    for &x in v.iter() {
        if x.abs() > best + 1e-14 {
            best = x.abs();
            sign = x.signum();
        }
    }
    v.iter_mut().for_each(|x| *x *= sign);
}

/// Lowest eigenpair of `H` restricted to the complement of `deflate`.
///
/// Lanczos with full reorthogonalization, restarted from the current Ritz
/// vector when the Krylov space fills up.
fn lanczos_lowest(
    model: &HeisenbergModel,
    basis: &SectorBasis,
    deflate: &[Vec<f64>],
    tol: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>, f64), EdError> {
    let dim = basis.dim();
    let project = |w: &mut [f64]| {
        for d in deflate {
            let c = dot(d, w);
            axpy(-c, d, w);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let krylov_max = KRYLOV_MAX.min(dim - deflate.len()).max(1);
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_RESTARTS {
        project(&mut start);
        normalize(&mut start);
        let mut basis_vecs: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        for j in 0..krylov_max {
            iterations += 1;
            apply_hamiltonian(model, basis, &basis_vecs[j], &mut w);
            project(&mut w);
            let a = dot(&basis_vecs[j], &w);
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis_vecs {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
                project(&mut w);
            }
            let b = dot(&w, &w).sqrt();
            let m = alpha.len();
            let exhausted = b < 1e-13 || m == krylov_max;
            if !m.is_multiple_of(5) && !exhausted {
                beta.push(b);
                let mut next = w.clone();
                next.iter_mut().for_each(|x| *x /= b);
                basis_vecs.push(next);
                continue;
            }
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (k, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty tridiagonal");
            let y = eig.eigenvectors.column(k);
            let estimate = b * y[m - 1].abs();
            if estimate < tol || exhausted {
                let mut x = vec![0.0; dim];
                for (i, v) in basis_vecs.iter().enumerate() {
                    axpy(y[i], v, &mut x);
                }
                project(&mut x);
                normalize(&mut x);
                let mut hx = vec![0.0; dim];
                apply_hamiltonian(model, basis, &x, &mut hx);
                let theta = dot(&x, &hx);
                last_residual = hx.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
                if last_residual < tol || b < 1e-13 && last_residual < RESIDUAL_TOL {
                    return Ok((theta, x, last_residual));
                }
                start = x;
                break;
            }
            beta.push(b);
            let mut next = w.clone();
            next.iter_mut().for_each(|x| *x /= b);
            basis_vecs.push(next);
        }
    }
    Err(EdError::NoConvergence { iterations, residual: last_residual })
}

/// Lowest eigenpair, dense for small sectors and Lanczos otherwise.
pub fn ground_state(model: &HeisenbergModel) -> Result<EdResult, EdError> {
    let basis = SectorBasis::new(model.n_sites())?;
    let solver = if basis.dim() <= DENSE_LIMIT { Solver::Dense } else { Solver::Lanczos };
    solve(model, Arc::new(basis), solver)
}

pub fn ground_state_with(model: &HeisenbergModel, solver: Solver) -> Result<EdResult, EdError> {
    let basis = SectorBasis::new(model.n_sites())?;
    solve(model, Arc::new(basis), solver)
}

fn solve(model: &HeisenbergModel, basis: Arc<SectorBasis>, solver: Solver) -> Result<EdResult, EdError> {
    let (e0, mut vector, degeneracy) = match solver {
        Solver::Dense => {
            let eig = SymmetricEigen::new(dense_hamiltonian(model, &basis));
            let (k, &e0) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty sector");
            let degeneracy = eig.eigenvalues.iter().filter(|&&e| e - e0 < DEGENERACY_TOL).count();
            (e0, eig.eigenvectors.column(k).iter().copied().collect::<Vec<f64>>(), degeneracy)
        }
        Solver::Lanczos => {
            let (e0, x, _) = lanczos_lowest(model, &basis, &[], LANCZOS_TARGET, 0)?;
            let mut found = vec![x.clone()];
            while found.len() < basis.dim() {
                let (e, y, _) = lanczos_lowest(model, &basis, &found, 1e-9, found.len() as u64)?;
                if e - e0 >= DEGENERACY_TOL {
                    break;
                }
                found.push(y);
            }
            (e0, x, found.len())
        }
    };
    normalize(&mut vector);
    fix_sign(&mut vector);
    let residual = residual_norm(model, &basis, &vector, e0);
    if residual > RESIDUAL_TOL {
        return Err(EdError::NoConvergence { iterations: 0, residual });
    }
    Ok(EdResult { e0, basis, ground_vector: vector, degeneracy, residual, solver })
}

/// A fixed amplitude table over the sector, usable wherever an [`Ansatz`] is.
///
/// Parameters are the amplitudes, interleaved `re, im`.
#[derive(Debug, Clone)]
pub struct TabulatedWavefunction {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<Complex64>,
}

impl TabulatedWavefunction {
    pub fn new(basis: Arc<SectorBasis>, amplitudes: Vec<Complex64>) -> Self {
        assert_eq!(basis.dim(), amplitudes.len());
        Self { basis, amplitudes }
    }

    pub fn from_result(result: &EdResult) -> Self {
        let amps = result.ground_vector.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(result.basis.clone(), amps)
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    fn lookup(&self, config: &SpinConfiguration) -> Result<usize, EvalError> {
        check_length(config, self.basis.n_sites())?;
        let bits = config.to_bits().map_err(|_| EvalError::OutOfSector)?;
        self.basis.index_of(bits).ok_or(EvalError::OutOfSector)
    }
}

impl Ansatz for TabulatedWavefunction {
    fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    fn n_params(&self) -> usize {
        2 * self.amplitudes.len()
    }

    fn params(&self) -> Vec<f64> {
        self.amplitudes.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params());
        for (z, c) in self.amplitudes.iter_mut().zip(params.chunks_exact(2)) {
            *z = Complex64::new(c[0], c[1]);
        }
    }

    fn log_psi(&self, config: &SpinConfiguration) -> Result<Complex64, EvalError> {
        let a = self.amplitudes[self.lookup(config)?];
        if a.norm() == 0.0 {
            return Err(EvalError::Node);
        }
        Ok(a.ln())
    }

    fn log_psi_and_gradient(&self, config: &SpinConfiguration) -> Result<(Complex64, Vec<Complex64>), EvalError> {
        let i = self.lookup(config)?;
        let a = self.amplitudes[i];
        if a.norm() == 0.0 {
            return Err(EvalError::Node);
        }
        let mut o = vec![Complex64::default(); self.n_params()];
        o[2 * i] = 1.0 / a;
        o[2 * i + 1] = Complex64::i() / a;
        Ok((a.ln(), o))
    }
}

const DUMP_MAGIC: &[u8; 6] = b"EDVEC1";
const DUMP_HEADER: usize = 6 + 4 + 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DumpError {
    #[error("eigenvector dump too short for its header ({0} bytes)")]
    Truncated(usize),
    #[error("bad eigenvector dump magic")]
    BadMagic,
    #[error("dimension {dim} does not match the {n_sites}-site sector")]
    WrongDimension { n_sites: u32, dim: u64 },
    #[error("payload has {got} bytes, expected {expected}")]
    Length { expected: u64, got: u64 },
    #[error("amplitude {0} is not finite")]
    NonFinite(usize),
}

/// Binary dump: `EDVEC1`, `u32` site count, `u64` dimension, then `f64`
/// amplitudes, all little endian.
pub fn encode_eigenvector(n_sites: usize, vector: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER + 8 * vector.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&(n_sites as u32).to_le_bytes());
    out.extend_from_slice(&(vector.len() as u64).to_le_bytes());
    for x in vector {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for i in 0..k.min(n - k) {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

pub fn decode_eigenvector(bytes: &[u8]) -> Result<(usize, Vec<f64>), DumpError> {
    if bytes.len() < DUMP_HEADER {
        return Err(DumpError::Truncated(bytes.len()));
    }
    if &bytes[..6] != DUMP_MAGIC {
        return Err(DumpError::BadMagic);
    }
    let n_sites = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    let dim = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
    let expected_dim = if n_sites % 2 == 0 && n_sites <= 64 {
        binomial(n_sites as u64, n_sites as u64 / 2)
    } else {
        None
    };
    if expected_dim != Some(dim) {
        return Err(DumpError::WrongDimension { n_sites, dim });
    }
    let payload = (bytes.len() - DUMP_HEADER) as u64;
    if dim.checked_mul(8) != Some(payload) {
        return Err(DumpError::Length { expected: dim.saturating_mul(8), got: payload });
    }
    let values: Vec<f64> = bytes[DUMP_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(DumpError::NonFinite(i));
    }
    Ok((n_sites as usize, values))
}
