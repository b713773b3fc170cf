//! The interface the sampler and the energy estimator see.

use num_complex::Complex64;
use thiserror::Error;

use crate::spin::SpinConfiguration;
use crate::symmetry::SymmetryGroup;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    /// ψ(σ) is exactly zero.
    #[error("wavefunction vanishes on this configuration")]
    Node,
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("configuration is outside the tabulated sector")]
    OutOfSector,
    #[error("configuration has {got} sites, expected {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// A parameterized map σ → log ψ(σ).
///
/// Parameters are a flat vector of real components. `O_k = ∂ log ψ / ∂θ_k` is
/// complex because log ψ is complex, even though every θ_k is real.
pub trait Ansatz {
    fn n_sites(&self) -> usize;

    fn n_params(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]);

    fn log_psi(&self, config: &SpinConfiguration) -> Result<Complex64, EvalError>;

    fn log_psi_and_gradient(&self, config: &SpinConfiguration)
        -> Result<(Complex64, Vec<Complex64>), EvalError>;

    /// Group and character with `log ψ(u·σ) = log ψ(σ) + log χ_u`, when the
    /// ansatz guarantees it. Used to share evaluations across an orbit.
    fn symmetry(&self) -> Option<(&SymmetryGroup, &[Complex64])> {
        None
    }

    /// Switch the readout projection; returns false when the ansatz has no
    /// phase-only mode.
    fn set_readout_mode(&mut self, mode: ReadoutMode) -> bool {
        mode == ReadoutMode::Amplitude
    }

    /// Evaluator bound to the current parameters, used for one optimizer step.
    fn evaluator(&self) -> Box<dyn Evaluator + '_>
    where
        Self: Sized,
    {
        Box::new(DirectEvaluator::new(self))
    }
}

/// How the readout turns the raw log-amplitude into the returned value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    #[default]
    Amplitude,
    /// `Re log ψ` forced to zero: uniform amplitudes, learned phases.
    PhaseOnly,
}

impl ReadoutMode {
    pub(crate) fn project(self, z: Complex64) -> Complex64 {
        match self {
            ReadoutMode::Amplitude => z,
            ReadoutMode::PhaseOnly => Complex64::new(0.0, z.im),
        }
    }

    /// Pulls a cotangent on the projected value back onto the raw log ψ.
    pub(crate) fn pull_back(self, grad: Complex64) -> Complex64 {
        self.project(grad)
    }
}

/// Evaluation at fixed parameters, with a reduced gradient accumulator.
///
/// `accumulate_gradient(σ, c)` adds `2 Re(c · conj(O_k(σ)))` to component k,
/// which is the only form in which the energy gradient needs `O`.
pub trait Evaluator {
    fn log_psi(&mut self, bits: u64) -> Result<Complex64, EvalError>;

    fn accumulate_gradient(&mut self, bits: u64, weight: Complex64) -> Result<(), EvalError>;

    /// Returns the accumulated gradient and resets the accumulator.
    fn take_gradient(&mut self) -> Result<Vec<f64>, EvalError>;
}

/// Fallback evaluator going through [`Ansatz::log_psi_and_gradient`].
pub struct DirectEvaluator<'a, A: Ansatz + ?Sized> {
    ansatz: &'a A,
    gradient: Vec<f64>,
}

impl<'a, A: Ansatz + ?Sized> DirectEvaluator<'a, A> {
    pub fn new(ansatz: &'a A) -> Self {
        Self {
            gradient: vec![0.0; ansatz.n_params()],
            ansatz,
        }
    }
}

impl<A: Ansatz + ?Sized> Evaluator for DirectEvaluator<'_, A> {
    fn log_psi(&mut self, bits: u64) -> Result<Complex64, EvalError> {
        self.ansatz
            .log_psi(&SpinConfiguration::from_bits(bits, self.ansatz.n_sites()))
    }

    fn accumulate_gradient(&mut self, bits: u64, weight: Complex64) -> Result<(), EvalError> {
        let config = SpinConfiguration::from_bits(bits, self.ansatz.n_sites());
        let (_, o) = self.ansatz.log_psi_and_gradient(&config)?;
        for (g, ok) in self.gradient.iter_mut().zip(&o) {
            *g += 2.0 * (weight * ok.conj()).re;
        }
        Ok(())
    }

    fn take_gradient(&mut self) -> Result<Vec<f64>, EvalError> {
        Ok(std::mem::replace(&mut self.gradient, vec![0.0; self.ansatz.n_params()]))
    }
}

pub(crate) fn check_length(config: &SpinConfiguration, expected: usize) -> Result<(), EvalError> {
    if config.len() != expected {
        return Err(EvalError::WrongLength { expected, got: config.len() });
    }
    Ok(())
}

/// Principal-branch log of a character value.
pub(crate) fn log_character(chi: Complex64) -> Complex64 {
    chi.ln()
}
