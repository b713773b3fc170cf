//! Complex-valued group-equivariant convolutional wavefunction.
//!
//! Layout of one evaluation:
//!
//! ```text
//! f¹[c, g]   = Γ( Σ_x  W⁰[c, g⁻¹x] σ_x )                 input gather
//! fⁱ⁺¹[c, g] = Γ( Σ_{c', h} Wⁱ[c, c', g⁻¹h] fⁱ[c', h] )    group convolution
//! e[g]       =    Σ_{c', h} R[c', g⁻¹h] fᴸ[c', h]          readout, no Γ
//! ψ(σ)       =    Σ_g χ_g exp(e[g])
//! ```
//!
//! with Γ(z) = SELU(Re z) + i SELU(Im z). Feature maps are indexed `c * |G| + g`.
//! This module holds the direct gather implementation; [`crate::spectral`]
//! evaluates the same network through translation Fourier transforms.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{check_length, Ansatz, EvalError, Evaluator, ReadoutMode};
use crate::lattice::{FilterSupport, LatticeSpec};
use crate::spin::SpinConfiguration;
use crate::symmetry::{CharacterViolation, FilterIndexMap, SymmetryGroup};

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcnnError {
    #[error("n_layers must be at least 1")]
    NoLayers,
    #[error("width must be at least 1")]
    ZeroWidth,
    #[error(transparent)]
    Character(#[from] CharacterViolation),
    #[error("group acts on {group} sites but the lattice has {lattice}")]
    SiteMismatch { group: usize, lattice: usize },
    #[error("parameter vector has {got} components, expected {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("parameter {index} is not finite")]
    NonFiniteParam { index: usize },
}

/// Which group-convolution taps between feature layers are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Masking {
    /// Every tap.
    Full,
    /// Pure translations: convolve over translations, diagonal in the point group.
    Translational,
    /// Pure point-group elements: convolve over d4/d6, diagonal in translations.
    PointGroup,
    /// Identity tap only.
    Diagonal,
}

impl Masking {
    pub const ALL: [Masking; 4] = [
        Masking::Full,
        Masking::Translational,
        Masking::PointGroup,
        Masking::Diagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Masking::Full => "full",
            Masking::Translational => "translational",
            Masking::PointGroup => "point-group",
            Masking::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for Masking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Masking {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Masking::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown masking mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnnConfig {
    /// Feature layers, counting the input layer.
    pub n_layers: usize,
    pub width: usize,
    pub masking: Masking,
    /// Support of the feature and readout taps; the input layer always sees every site.
    pub support: FilterSupport,
    pub character: Vec<Complex64>,
    pub seed: u64,
}

impl GcnnConfig {
    /// Fully symmetric configuration for `group`.
    pub fn symmetric(group: &SymmetryGroup, n_layers: usize, width: usize, seed: u64) -> Self {
        Self {
            n_layers,
            width,
            masking: Masking::Full,
            support: FilterSupport::Full,
            character: vec![Complex64::new(1.0, 0.0); group.order()],
            seed,
        }
    }

    pub fn validate(&self, group: &SymmetryGroup) -> Result<(), GcnnError> {
        if self.n_layers == 0 {
            return Err(GcnnError::NoLayers);
        }
        if self.width == 0 {
            return Err(GcnnError::ZeroWidth);
        }
        group.validate_character(&self.character)?;
        Ok(())
    }
}

/// Complex filter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnnParams {
    /// `[width × N]`
    pub input: Vec<Complex64>,
    /// Per feature layer `[width_out × width_in × |G|]`.
    pub features: Vec<Vec<Complex64>>,
    /// `[width × |G|]`, one output channel.
    pub readout: Vec<Complex64>,
}

impl GcnnParams {
    pub fn zeros(config: &GcnnConfig, order: usize, n_sites: usize) -> Self {
        let w = config.width;
        Self {
            input: vec![Complex64::default(); w * n_sites],
            features: (1..config.n_layers)
                .map(|_| vec![Complex64::default(); w * w * order])
                .collect(),
            readout: vec![Complex64::default(); w * order],
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &Vec<Complex64>> {
        std::iter::once(&self.input)
            .chain(self.features.iter())
            .chain(std::iter::once(&self.readout))
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<Complex64>> {
        std::iter::once(&mut self.input)
            .chain(self.features.iter_mut())
            .chain(std::iter::once(&mut self.readout))
    }

    pub fn n_complex(&self) -> usize {
        self.tensors().map(Vec::len).sum()
    }

    /// Interleaved `re, im`, input layer first, readout last.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .flat_map(|t| t.iter().flat_map(|z| [z.re, z.im]))
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), GcnnError> {
        let expected = 2 * self.n_complex();
        if flat.len() != expected {
            return Err(GcnnError::ParamLength { expected, got: flat.len() });
        }
        if let Some(index) = flat.iter().position(|x| !x.is_finite()) {
            return Err(GcnnError::NonFiniteParam { index });
        }
        let mut it = flat.chunks_exact(2);
        for t in self.tensors_mut() {
            for z in t.iter_mut() {
                let c = it.next().expect("length checked");
                *z = Complex64::new(c[0], c[1]);
            }
        }
        Ok(())
    }
}

/// Which taps survive masking and support restriction.
pub fn live_taps(group: &SymmetryGroup, masking: Masking, support: Option<&LatticeSpec>) -> Vec<bool> {
    group
        .elements()
        .iter()
        .map(|e| {
            let d = e.decomposition;
            let masked_in = match masking {
                Masking::Full => true,
                Masking::Translational => d.rot == 0 && d.refl == 0,
                Masking::PointGroup => d.tx == 0 && d.ty == 0,
                Masking::Diagonal => e.id == group.identity(),
            };
            let supported = support.is_none_or(|lat| lat.support_contains(d.tx as i64, d.ty as i64));
            masked_in && supported
        })
        .collect()
}

/// Live complex entries per tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub input: usize,
    pub feature_layers: Vec<usize>,
    pub readout: usize,
    pub live_taps: usize,
}

impl ParamCount {
    pub fn feature_total(&self) -> usize {
        self.feature_layers.iter().sum()
    }

    /// Each complex weight counted once.
    pub fn complex_total(&self) -> usize {
        self.input + self.feature_total() + self.readout
    }

    /// Real and imaginary parts counted separately.
    pub fn real_total(&self) -> usize {
        2 * self.complex_total()
    }
}

pub fn count_params(config: &GcnnConfig, group: &SymmetryGroup, lattice: Option<&LatticeSpec>) -> ParamCount {
    let support = lattice.filter(|_| config.support == FilterSupport::ThirdNeighbor);
    let taps = live_taps(group, config.masking, support).into_iter().filter(|&x| x).count();
    let w = config.width;
    ParamCount {
        input: w * group.n_sites(),
        feature_layers: vec![w * w * taps; config.n_layers - 1],
        readout: w * taps,
        live_taps: taps,
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[inline]
pub(crate) fn gamma(z: Complex64) -> Complex64 {
    Complex64::new(selu(z.re), selu(z.im))
}

/// Cotangent of Γ: `Γ'` acts on the real and imaginary channels separately.
#[inline]
pub(crate) fn gamma_pullback(pre: Complex64, grad: Complex64) -> Complex64 {
    Complex64::new(selu_derivative(pre.re) * grad.re, selu_derivative(pre.im) * grad.im)
}

/// `log Σ_g χ_g exp(e_g)` with the largest real part factored out.
///
/// Returns the log and the weights `χ_g exp(e_g) / ψ`.
pub(crate) fn character_log_sum_exp(
    embedding: &[Complex64],
    character: &[Complex64],
) -> Result<(Complex64, Vec<Complex64>), EvalError> {
    let shift = embedding.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(EvalError::NonFinite { layer: usize::MAX });
    }
    let terms: Vec<Complex64> = embedding
        .iter()
        .zip(character)
        .map(|(&e, &chi)| chi * (e - shift).exp())
        .collect();
    let sum: Complex64 = terms.iter().sum();
    if sum.norm() == 0.0 {
        return Err(EvalError::Node);
    }
    let log = Complex64::new(shift, 0.0) + sum.ln();
    let weights = terms.into_iter().map(|t| t / sum).collect();
    Ok((log, weights))
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    /// Pre-activations per layer, `[width × |G|]`.
    pub pre: Vec<Vec<Complex64>>,
    /// Post-activations per layer, `[width × |G|]`.
    pub layers: Vec<Vec<Complex64>>,
    /// Final length-one embedding over the group.
    pub embedding: Vec<Complex64>,
}

/// A G-CNN bound to its symmetry group.
#[derive(Debug, Clone)]
pub struct Wavefunction {
    config: GcnnConfig,
    params: GcnnParams,
    group: Arc<SymmetryGroup>,
    index_map: Arc<FilterIndexMap>,
    live: Vec<bool>,
    readout_mode: ReadoutMode,
}

impl Wavefunction {
    /// Build with parameters drawn by [`init_params`].
    pub fn new(
        config: GcnnConfig,
        group: Arc<SymmetryGroup>,
        lattice: Option<&LatticeSpec>,
    ) -> Result<Self, GcnnError> {
        config.validate(&group)?;
        if let Some(lat) = lattice {
            if lat.n_sites() != group.n_sites() {
                return Err(GcnnError::SiteMismatch { group: group.n_sites(), lattice: lat.n_sites() });
            }
        }
        let support = lattice.filter(|_| config.support == FilterSupport::ThirdNeighbor);
        let live = live_taps(&group, config.masking, support);
        let params = init_params(&config, &group, &live);
        let index_map = Arc::new(FilterIndexMap::new(&group));
        Ok(Self {
            config,
            params,
            group,
            index_map,
            live,
            readout_mode: ReadoutMode::Amplitude,
        })
    }

    pub fn config(&self) -> &GcnnConfig {
        &self.config
    }

    pub fn filters(&self) -> &GcnnParams {
        &self.params
    }

    pub fn group(&self) -> &SymmetryGroup {
        &self.group
    }

    pub fn index_map(&self) -> &FilterIndexMap {
        &self.index_map
    }

    pub fn live_taps(&self) -> &[bool] {
        &self.live
    }

    pub fn readout_mode(&self) -> ReadoutMode {
        self.readout_mode
    }

    /// Replace the parameters; masked entries are forced back to zero.
    pub fn set_gcnn_params(&mut self, params: GcnnParams) -> Result<(), GcnnError> {
        let mut flat_check = self.params.clone();
        flat_check.set_flat(&params.to_flat())?;
        self.params = params;
        apply_masking(&mut self.params, &self.live);
        Ok(())
    }

    /// Change the masking mode in place, zeroing the newly masked taps.
    pub fn apply_masking(&mut self, masking: Masking, lattice: Option<&LatticeSpec>) {
        let support = lattice.filter(|_| self.config.support == FilterSupport::ThirdNeighbor);
        self.config.masking = masking;
        self.live = live_taps(&self.group, masking, support);
        apply_masking(&mut self.params, &self.live);
    }

    /// Whether every masked tap holds an exact zero.
    pub fn masked_entries_are_zero(&self) -> bool {
        let order = self.group.order();
        self.params
            .features
            .iter()
            .chain(std::iter::once(&self.params.readout))
            .all(|t| {
                t.iter()
                    .enumerate()
                    .all(|(i, z)| self.live[i % order] || (z.re == 0.0 && z.im == 0.0))
            })
    }

    pub fn forward_features(&self, config: &SpinConfiguration) -> Result<FeatureMaps, EvalError> {
        check_length(config, self.group.n_sites())?;
        let order = self.group.order();
        let w = self.config.width;
        let n = self.group.n_sites();
        let sigma: Vec<f64> = config.spins().iter().map(|&s| s as f64).collect();

        let mut pre = vec![Complex64::default(); w * order];
        for g in 0..order {
            let row = self.index_map.input_row(g);
            for c in 0..w {
                let filt = &self.params.input[c * n..(c + 1) * n];
                pre[c * order + g] = row
                    .iter()
                    .zip(&sigma)
                    .map(|(&x, &s)| filt[x as usize] * s)
                    .sum();
            }
        }
        let mut maps = FeatureMaps { pre: Vec::new(), layers: Vec::new(), embedding: Vec::new() };
        let post: Vec<Complex64> = pre.iter().map(|&z| gamma(z)).collect();
        check_finite(&post, 0)?;
        maps.pre.push(pre);
        maps.layers.push(post);

        for (l, filt) in self.params.features.iter().enumerate() {
            let pre = self.group_conv(filt, maps.layers.last().expect("input layer"), w, w);
            let post: Vec<Complex64> = pre.iter().map(|&z| gamma(z)).collect();
            check_finite(&post, l + 1)?;
            maps.pre.push(pre);
            maps.layers.push(post);
        }
        maps.embedding = self.group_conv(&self.params.readout, maps.layers.last().expect("layer"), 1, w);
        check_finite(&maps.embedding, self.config.n_layers)?;
        Ok(maps)
    }

    /// `out[c, g] = Σ_{c', h} W[c, c', g⁻¹h] f[c', h]`
    fn group_conv(&self, filt: &[Complex64], f: &[Complex64], w_out: usize, w_in: usize) -> Vec<Complex64> {
        let order = self.group.order();
        let mut out = vec![Complex64::default(); w_out * order];
        for g in 0..order {
            let row = self.index_map.feature_row(g);
            for (h, &tap) in row.iter().enumerate() {
                let tap = tap as usize;
                if !self.live[tap] {
                    continue;
                }
                for co in 0..w_out {
                    let mut acc = Complex64::default();
                    for ci in 0..w_in {
                        acc += filt[(co * w_in + ci) * order + tap] * f[ci * order + h];
                    }
                    out[co * order + g] += acc;
                }
            }
        }
        out
    }

    /// Unprojected `log Σ_g χ_g exp(e_g)` and its readout weights.
    fn raw_log_psi(&self, maps: &FeatureMaps) -> Result<(Complex64, Vec<Complex64>), EvalError> {
        character_log_sum_exp(&maps.embedding, &self.config.character)
    }

    /// Real gradient of the real loss whose cotangent on log ψ is `seed`.
    ///
    /// Cotangents use `∂L/∂Re z + i ∂L/∂Im z`; for a holomorphic step `y = a·b`
    /// that makes `ā = conj(b) ȳ`.
    pub(crate) fn backward(&self, config: &SpinConfiguration, maps: &FeatureMaps, weights: &[Complex64], seed: Complex64) -> Vec<Complex64> {
        let order = self.group.order();
        let w = self.config.width;
        let n = self.group.n_sites();
        let seed = self.readout_mode.pull_back(seed);
        let mut grads: Vec<Vec<Complex64>> = self
            .params
            .tensors()
            .map(|t| vec![Complex64::default(); t.len()])
            .collect();
        let n_tensors = grads.len();

        let g_emb: Vec<Complex64> = weights.iter().map(|p| p.conj() * seed).collect();
        let mut g_post = self.group_conv_backward(
            &self.params.readout,
            maps.layers.last().expect("layer"),
            &g_emb,
            1,
            w,
            &mut grads[n_tensors - 1],
        );
        for l in (0..self.config.n_layers).rev() {
            let g_pre: Vec<Complex64> = maps.pre[l]
                .iter()
                .zip(&g_post)
                .map(|(&p, &g)| gamma_pullback(p, g))
                .collect();
            if l == 0 {
                let gin = &mut grads[0];
                for g in 0..order {
                    let row = self.index_map.input_row(g);
                    for c in 0..w {
                        let gz = g_pre[c * order + g];
                        for (x, &s) in config.spins().iter().enumerate() {
                            gin[c * n + row[x] as usize] += gz * s as f64;
                        }
                    }
                }
            } else {
                g_post = self.group_conv_backward(
                    &self.params.features[l - 1],
                    &maps.layers[l - 1],
                    &g_pre,
                    w,
                    w,
                    &mut grads[l],
                );
            }
        }
        for t in grads.iter_mut().skip(1) {
            for (i, z) in t.iter_mut().enumerate() {
                if !self.live[i % order] {
                    *z = Complex64::default();
                }
            }
        }
        grads.into_iter().flatten().collect()
    }

    fn group_conv_backward(
        &self,
        filt: &[Complex64],
        f: &[Complex64],
        g_out: &[Complex64],
        w_out: usize,
        w_in: usize,
        g_filt: &mut [Complex64],
    ) -> Vec<Complex64> {
        let order = self.group.order();
        let mut g_in = vec![Complex64::default(); w_in * order];
        for g in 0..order {
            let row = self.index_map.feature_row(g);
            for (h, &tap) in row.iter().enumerate() {
                let tap = tap as usize;
                if !self.live[tap] {
                    continue;
                }
                for co in 0..w_out {
                    let go = g_out[co * order + g];
                    for ci in 0..w_in {
                        let k = (co * w_in + ci) * order + tap;
                        g_filt[k] += go * f[ci * order + h].conj();
                        g_in[ci * order + h] += filt[k].conj() * go;
                    }
                }
            }
        }
        g_in
    }

    pub fn log_psi(&self, config: &SpinConfiguration) -> Result<Complex64, EvalError> {
        let maps = self.forward_features(config)?;
        let (raw, _) = self.raw_log_psi(&maps)?;
        Ok(wrap_phase(self.readout_mode.project(raw)))
    }

    /// log ψ and `O_k = ∂ log ψ / ∂θ_k` over the flat real parameters.
    pub fn log_psi_and_gradient(&self, config: &SpinConfiguration) -> Result<(Complex64, Vec<Complex64>), EvalError> {
        let maps = self.forward_features(config)?;
        let (raw, weights) = self.raw_log_psi(&maps)?;
        let d_re = self.backward(config, &maps, &weights, Complex64::new(1.0, 0.0));
        let d_im = self.backward(config, &maps, &weights, Complex64::new(0.0, 1.0));
        // complex cotangent entries hold (∂/∂re, ∂/∂im) of one weight
        let o = d_re
            .iter()
            .zip(&d_im)
            .flat_map(|(a, b)| {
                [Complex64::new(a.re, b.re), Complex64::new(a.im, b.im)]
            })
            .collect();
        Ok((wrap_phase(self.readout_mode.project(raw)), o))
    }

    pub fn group_arc(&self) -> &Arc<SymmetryGroup> {
        &self.group
    }
}

/// Reduce the imaginary part into (-π, π].
pub(crate) fn wrap_phase(z: Complex64) -> Complex64 {
    use std::f64::consts::PI;
    let mut im = z.im.rem_euclid(2.0 * PI);
    if im > PI {
        im -= 2.0 * PI;
    }
    Complex64::new(z.re, im)
}

fn check_finite(values: &[Complex64], layer: usize) -> Result<(), EvalError> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite { layer })
    }
}

/// Zero the masked taps of the feature and readout filters. Input filters are
/// never masked.
pub fn apply_masking(params: &mut GcnnParams, live: &[bool]) {
    let order = live.len();
    for t in params.features.iter_mut().chain(std::iter::once(&mut params.readout)) {
        for (i, z) in t.iter_mut().enumerate() {
            if !live[i % order] {
                *z = Complex64::default();
            }
        }
    }
}

/// Complex Gaussian filters with `E|w|² = 1 / fan_in`, where `fan_in` counts
/// input channels times live taps. Variates are drawn for every entry in flat
/// order before masking, so runs that differ only in masking share draws.
pub fn init_params(config: &GcnnConfig, group: &SymmetryGroup, live: &[bool]) -> GcnnParams {
    let order = group.order();
    let n = group.n_sites();
    let taps = live.iter().filter(|&&x| x).count().max(1);
    let mut params = GcnnParams::zeros(config, order, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |t: &mut Vec<Complex64>, fan_in: usize| {
        let scale = (0.5 / fan_in as f64).sqrt();
        for z in t.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = Complex64::new(re * scale, im * scale);
        }
    };
    let w = config.width;
    draw(&mut params.input, n);
    for t in params.features.iter_mut() {
        draw(t, w * taps);
    }
    draw(&mut params.readout, w * taps);
    apply_masking(&mut params, live);
    params
}

impl Ansatz for Wavefunction {
    fn n_sites(&self) -> usize {
        self.group.n_sites()
    }

    fn n_params(&self) -> usize {
        2 * self.params.n_complex()
    }

    fn params(&self) -> Vec<f64> {
        self.params.to_flat()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.params
            .set_flat(params)
            .expect("parameter vector matches the architecture");
        apply_masking(&mut self.params, &self.live);
    }

    fn log_psi(&self, config: &SpinConfiguration) -> Result<Complex64, EvalError> {
        Wavefunction::log_psi(self, config)
    }

    fn log_psi_and_gradient(&self, config: &SpinConfiguration) -> Result<(Complex64, Vec<Complex64>), EvalError> {
        Wavefunction::log_psi_and_gradient(self, config)
    }

    fn symmetry(&self) -> Option<(&SymmetryGroup, &[Complex64])> {
        Some((&self.group, &self.config.character))
    }

    fn set_readout_mode(&mut self, mode: ReadoutMode) -> bool {
        self.readout_mode = mode;
        true
    }

    fn evaluator(&self) -> Box<dyn Evaluator + '_> {
        Box::new(crate::spectral::SpectralEvaluator::new(self))
    }
}
