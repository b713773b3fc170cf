//! Stochastic energy gradients, Adam, and the staged training protocol.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{Ansatz, EvalError, Evaluator, ReadoutMode};
use crate::gcnn::{count_params, GcnnConfig, GcnnError, Masking, ParamCount, Wavefunction};
use crate::heisenberg::HeisenbergModel;
use crate::lattice::LatticeSpec;
use crate::symmetry::SymmetryGroup;
use crate::sampler::{sample_batch, ChainEnsemble, Sample, SamplerConfig, SamplerError};

#[derive(Debug, Error)]
pub enum VmcError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("energy became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("ansatz has no phase-only readout")]
    NoPhaseMode,
    #[error("cannot estimate from an empty batch")]
    EmptyBatch,
    #[error("trace sink failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gcnn(#[from] GcnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub phase_preopt_steps: usize,
    pub stage1_steps: usize,
    pub stage1_batch: usize,
    pub stage2_steps: usize,
    pub stage2_batch: usize,
    pub learning_rate: f64,
    /// Divide the learning rate by three.
    pub reduce_learning_rate: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Start every stage from fresh Adam moments.
    pub reset_adam_between_stages: bool,
}

impl TrainSchedule {
    /// 500 phase steps, 10⁴ steps at batch 100, 2·10³ steps at batch 1000.
    pub fn large() -> Self {
        Self {
            phase_preopt_steps: 500,
            stage1_steps: 10_000,
            stage1_batch: 100,
            stage2_steps: 2_000,
            stage2_batch: 1000,
            learning_rate: 3e-3,
            reduce_learning_rate: false,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            reset_adam_between_stages: false,
        }
    }

    pub fn effective_learning_rate(&self) -> f64 {
        if self.reduce_learning_rate {
            self.learning_rate / 3.0
        } else {
            self.learning_rate
        }
    }

    pub fn total_steps(&self) -> usize {
        self.phase_preopt_steps + self.stage1_steps + self.stage2_steps
    }

    pub fn validate(&self) -> Result<(), VmcError> {
        let bad = |m: &str| Err(VmcError::Schedule(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(&format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if (self.phase_preopt_steps > 0 || self.stage1_steps > 0) && self.stage1_batch == 0 {
            return bad("stage1_batch must be positive");
        }
        if self.stage2_steps > 0 && self.stage2_batch == 0 {
            return bad("stage2_batch must be positive");
        }
        Ok(())
    }
}

/// Local-energy statistics of one batch, in total (not per-site) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStats {
    pub mean: Complex64,
    pub variance: f64,
    pub std_error: f64,
    pub acceptance: f64,
    pub n_samples: usize,
}

impl EnergyStats {
    pub fn from_local_energies(e_loc: &[Complex64], acceptance: f64) -> Self {
        let n = e_loc.len();
        let mean = e_loc.iter().sum::<Complex64>() / n as f64;
        let variance = e_loc.iter().map(|e| (e - mean).norm_sqr()).sum::<f64>() / n as f64;
        Self { mean, variance, std_error: (variance / n as f64).sqrt(), acceptance, n_samples: n }
    }

    pub fn per_site(&self, n_sites: usize) -> Self {
        let s = n_sites as f64;
        Self {
            mean: self.mean / s,
            variance: self.variance / (s * s),
            std_error: self.std_error / s,
            ..*self
        }
    }
}

/// Covariance estimator `2 Re(⟨conj(O_k) E_loc⟩ − ⟨conj(O_k)⟩⟨E_loc⟩)` from
/// per-sample `O` vectors.
pub fn estimate_energy_and_gradient<A: Ansatz + ?Sized>(
    wf: &A,
    model: &HeisenbergModel,
    samples: &[Sample],
) -> Result<(EnergyStats, Vec<f64>), VmcError> {
    if samples.is_empty() {
        return Err(VmcError::EmptyBatch);
    }
    let n = samples.len() as f64;
    let mut e_loc = Vec::with_capacity(samples.len());
    let mut o_all = Vec::with_capacity(samples.len());
    for s in samples {
        let config = s.config(wf.n_sites());
        e_loc.push(model.local_energy(wf, &config)?);
        o_all.push(wf.log_psi_and_gradient(&config)?.1);
    }
    let stats = EnergyStats::from_local_energies(&e_loc, 1.0);
    let mut o_mean = vec![Complex64::default(); wf.n_params()];
    let mut oe_mean = vec![Complex64::default(); wf.n_params()];
    for (o, &e) in o_all.iter().zip(&e_loc) {
        for k in 0..o.len() {
            o_mean[k] += o[k].conj() / n;
            oe_mean[k] += o[k].conj() * e / n;
        }
    }
    let grad = oe_mean
        .iter()
        .zip(&o_mean)
        .map(|(oe, o)| 2.0 * (oe - o * stats.mean).re)
        .collect();
    Ok((stats, grad))
}

/// The same estimator through an [`Evaluator`], reducing `O` on the fly with
/// weights `(E_loc − Ē)/n`.
pub fn estimate_with_evaluator(
    eval: &mut dyn Evaluator,
    model: &HeisenbergModel,
    samples: &[Sample],
    acceptance: f64,
) -> Result<(EnergyStats, Vec<f64>), VmcError> {
    if samples.is_empty() {
        return Err(VmcError::EmptyBatch);
    }
    let mut scratch = Vec::new();
    let e_loc = samples
        .iter()
        .map(|s| model.local_energy_bits(eval, s.bits, s.log_psi, &mut scratch))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = EnergyStats::from_local_energies(&e_loc, acceptance);
    let n = samples.len() as f64;
    for (s, e) in samples.iter().zip(&e_loc) {
        eval.accumulate_gradient(s.bits, (e - stats.mean) / n)?;
    }
    Ok((stats, eval.take_gradient()?))
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { learning_rate, beta1, beta2, eps, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn from_schedule(n_params: usize, s: &TrainSchedule) -> Self {
        Self::new(n_params, s.effective_learning_rate(), s.adam_beta1, s.adam_beta2, s.adam_eps)
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Phase,
    Stage1,
    Stage2,
}

/// One line of the training trace; energies per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub stage: Stage,
    pub batch: usize,
    pub energy_re: f64,
    pub energy_im: f64,
    pub variance: f64,
    pub std_error: f64,
    pub acceptance: f64,
    pub wall_ms: f64,
}

pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> std::io::Result<()>;
}

/// Discards records.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) -> std::io::Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// One JSON object per line.
pub struct JsonLinesSink<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for JsonLinesSink<W> {
    fn record(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }
}

/// Everything a training run needs besides the ansatz and the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub schedule: TrainSchedule,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Record wall-clock time per step; off gives byte-identical traces.
    pub wall_clock: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    /// Statistics of the final optimizer step, total units.
    pub last: Option<EnergyStats>,
}

fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let k = match stage {
        Stage::Phase => 1,
        Stage::Stage1 => 2,
        Stage::Stage2 => 3,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

/// Runs `steps` optimizer steps at a fixed batch on a persistent set of chains.
#[allow(clippy::too_many_arguments)]
fn run_stage<A: Ansatz>(
    wf: &mut A,
    model: &HeisenbergModel,
    adam: &mut Adam,
    opts: &TrainOptions,
    stage: Stage,
    steps: usize,
    batch: usize,
    step_offset: usize,
    sink: &mut dyn TraceSink,
) -> Result<Option<EnergyStats>, VmcError> {
    if steps == 0 {
        return Ok(None);
    }
    let n = wf.n_sites();
    let mut ensemble = {
        let mut eval = wf.evaluator();
        ChainEnsemble::new(n, opts.sampler.chains_for(batch), opts.sampler, stage_seed(opts.seed, stage), eval.as_mut())?
    };
    let mut params = wf.params();
    let mut last = None;
    for step in 0..steps {
        let start = Instant::now();
        let (stats, grad) = {
            let mut eval = wf.evaluator();
            if step > 0 {
                ensemble.refresh(eval.as_mut())?;
            }
            let (samples, acceptance) = ensemble.sample(batch, eval.as_mut())?;
            estimate_with_evaluator(eval.as_mut(), model, &samples, acceptance)?
        };
        if !(stats.mean.re.is_finite() && stats.mean.im.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
            return Err(VmcError::NonFinite { step: step_offset + step });
        }
        adam.step(&mut params, &grad);
        wf.set_params(&params);
        let per_site = stats.per_site(n);
        let wall_ms = if opts.wall_clock { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        sink.record(&TraceRecord {
            step: step_offset + step,
            stage,
            batch,
            energy_re: per_site.mean.re,
            energy_im: per_site.mean.im,
            variance: per_site.variance,
            std_error: per_site.std_error,
            acceptance: stats.acceptance,
            wall_ms,
        })?;
        last = Some(stats);
    }
    Ok(last)
}

/// Phase-only training: amplitudes clamped uniform, so the chains sample the
/// sector uniformly.
pub fn phase_preopt<A: Ansatz>(
    wf: &mut A,
    model: &HeisenbergModel,
    adam: &mut Adam,
    opts: &TrainOptions,
    sink: &mut dyn TraceSink,
) -> Result<Option<EnergyStats>, VmcError> {
    let s = opts.schedule;
    if s.phase_preopt_steps == 0 {
        return Ok(None);
    }
    if !wf.set_readout_mode(ReadoutMode::PhaseOnly) {
        return Err(VmcError::NoPhaseMode);
    }
    let out = run_stage(wf, model, adam, opts, Stage::Phase, s.phase_preopt_steps, s.stage1_batch, 0, sink);
    wf.set_readout_mode(ReadoutMode::Amplitude);
    out
}

/// Phase pre-optimization, stage 1, then stage 2; one trace record per step.
pub fn train<A: Ansatz>(
    wf: &mut A,
    model: &HeisenbergModel,
    opts: &TrainOptions,
    sink: &mut dyn TraceSink,
) -> Result<TrainSummary, VmcError> {
    let s = opts.schedule;
    s.validate()?;
    opts.sampler.validate()?;
    let mut adam = Adam::from_schedule(wf.n_params(), &s);
    let mut last = phase_preopt(wf, model, &mut adam, opts, sink)?;
    let mut offset = s.phase_preopt_steps;
    for (stage, steps, batch) in [
        (Stage::Stage1, s.stage1_steps, s.stage1_batch),
        (Stage::Stage2, s.stage2_steps, s.stage2_batch),
    ] {
        if s.reset_adam_between_stages && adam.steps_taken() > 0 {
            adam.reset();
        }
        if let Some(stats) = run_stage(wf, model, &mut adam, opts, stage, steps, batch, offset, sink)? {
            last = Some(stats);
        }
        offset += steps;
    }
    Ok(TrainSummary { steps: offset, last })
}

/// Energy of the current parameters from a fresh set of chains, total units.
pub fn evaluate_energy<A: Ansatz>(
    wf: &A,
    model: &HeisenbergModel,
    sampler: SamplerConfig,
    n_samples: usize,
    seed: u64,
) -> Result<EnergyStats, VmcError> {
    let mut eval = wf.evaluator();
    let (samples, acceptance) = sample_batch(eval.as_mut(), wf.n_sites(), sampler, n_samples, seed)?;
    let mut scratch = Vec::new();
    let e_loc = samples
        .iter()
        .map(|s| model.local_energy_bits(eval.as_mut(), s.bits, s.log_psi, &mut scratch))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnergyStats::from_local_energies(&e_loc, acceptance))
}

/// One trained model of a masking comparison.
#[derive(Debug, Clone)]
pub struct MaskingRun {
    pub masking: Masking,
    pub params: ParamCount,
    pub summary: TrainSummary,
    /// Fresh-chain estimate after training, total units.
    pub final_energy: EnergyStats,
    pub masked_entries_zero: bool,
    pub trace: Vec<TraceRecord>,
    pub wavefunction: Wavefunction,
}

/// Trains one model per masking mode. Every mode shares `base.seed`, the
/// schedule and the sampler seed, so traces line up step by step.
pub fn masking_experiment(
    base: &GcnnConfig,
    group: Arc<SymmetryGroup>,
    lattice: Option<&LatticeSpec>,
    model: &HeisenbergModel,
    opts: &TrainOptions,
    modes: &[Masking],
    eval_samples: usize,
) -> Result<Vec<MaskingRun>, VmcError> {
    opts.schedule.validate()?;
    opts.sampler.validate()?;
    if eval_samples == 0 {
        return Err(VmcError::EmptyBatch);
    }
    let mut runs = Vec::with_capacity(modes.len());
    for &masking in modes {
        let config = GcnnConfig { masking, ..base.clone() };
        let params = count_params(&config, &group, lattice);
        let mut wf = Wavefunction::new(config, Arc::clone(&group), lattice)?;
        let mut trace = Vec::with_capacity(opts.schedule.total_steps());
        let summary = train(&mut wf, model, opts, &mut trace)?;
        let final_energy = evaluate_energy(&wf, model, opts.sampler, eval_samples, opts.seed ^ EVAL_SEED)?;
        runs.push(MaskingRun {
            masking,
            params,
            summary,
            final_energy,
            masked_entries_zero: wf.masked_entries_are_zero(),
            trace,
            wavefunction: wf,
        });
    }
    Ok(runs)
}

/// Mixed into the run seed for post-training energy estimates.
pub const EVAL_SEED: u64 = 0x5EED_E7A1;
