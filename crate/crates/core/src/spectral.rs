//! Group convolutions evaluated through translation Fourier transforms.
//!
//! Writing `g = (t, p)` and `h = (s, q)`, a group convolution becomes
//!
//! ```text
//! y[c, p](t) = Σ_{c', q} Σ_d K[c, c', p, q](d) f[c', q](t + d)
//! K[c, c', p, q](d) = W[c, c', (p⁻¹d, p⁻¹q)]
//! ```
//!
//! a circular cross-correlation over translations for every pair of point
//! operations. After a 2D DFT over `t` each wavevector needs one dense
//! `(w_out·n_p) × (w_in·n_p)` matrix-vector product. The input layer stays a
//! gather.
//!
//! [`SpectralEvaluator`] also shares work across symmetry orbits: log ψ of any
//! configuration follows from its orbit representative and the character, and
//! `O_k` is constant along an orbit.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use crate::ansatz::{log_character, EvalError, Evaluator};
use crate::gcnn::{character_log_sum_exp, gamma, gamma_pullback, FeatureMaps, Wavefunction};
use crate::spin::SpinConfiguration;

const MAX_TRANS: usize = 64;

/// Fourier-space kernels for one parameter snapshot.
pub struct SpectralPlan<'a> {
    wf: &'a Wavefunction,
    n_p: usize,
    n_t: usize,
    extent: usize,
    order: usize,
    width: usize,
    /// Per convolution (feature layers, then readout), `[k][row][col]` with
    /// `row = c_out·n_p + p` and `col = c_in·n_p + q`.
    kernels: Vec<Vec<Complex64>>,
    /// `exp(-2πi m / extent)`
    twiddle: Vec<Complex64>,
}

/// Forward intermediates kept for the backward pass.
struct Tape {
    maps: FeatureMaps,
    /// Transformed inputs of each convolution, `[k][col]`.
    spectra: Vec<Vec<Complex64>>,
}

impl<'a> SpectralPlan<'a> {
    pub fn new(wf: &'a Wavefunction) -> Self {
        let group = wf.group();
        let extent = group.trans_extent();
        let n_t = group.n_trans();
        assert!(n_t <= MAX_TRANS, "translation group too large for the spectral path");
        let twiddle = (0..extent)
            .map(|m| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * m as f64 / extent as f64))
            .collect();
        let mut plan = Self {
            wf,
            n_p: group.n_point(),
            n_t,
            extent,
            order: group.order(),
            width: wf.config().width,
            kernels: Vec::new(),
            twiddle,
        };
        let params = wf.filters();
        let kernels: Vec<Vec<Complex64>> = params
            .features
            .iter()
            .map(|f| plan.build_kernel(f, plan.width))
            .chain(std::iter::once(plan.build_kernel(&params.readout, 1)))
            .collect();
        plan.kernels = kernels;
        plan
    }

    fn shape(&self, conv: usize) -> (usize, usize) {
        let w_out = if conv == self.wf.filters().features.len() { 1 } else { self.width };
        (w_out * self.n_p, self.width * self.n_p)
    }

    /// 2D DFT over translations with `exp(∓ i k·t)`; `conj` picks the plus sign.
    fn dft2(&self, src: &[Complex64], dst: &mut [Complex64], conj: bool) {
        let e = self.extent;
        if e == 1 {
            dst[0] = src[0];
            return;
        }
        let tw = |m: usize| {
            let z = self.twiddle[m % e];
            if conj {
                z.conj()
            } else {
                z
            }
        };
        let mut tmp = [Complex64::default(); MAX_TRANS];
        for tx in 0..e {
            for ky in 0..e {
                tmp[tx * e + ky] = (0..e).map(|ty| src[tx * e + ty] * tw(ky * ty)).sum();
            }
        }
        for kx in 0..e {
            for ky in 0..e {
                dst[kx * e + ky] = (0..e).map(|tx| tmp[tx * e + ky] * tw(kx * tx)).sum();
            }
        }
    }

    fn build_kernel(&self, filt: &[Complex64], w_out: usize) -> Vec<Complex64> {
        let group = self.wf.group();
        let (n_p, n_t, w_in) = (self.n_p, self.n_t, self.width);
        let (rows, cols) = (w_out * n_p, w_in * n_p);
        let mut out = vec![Complex64::default(); n_t * rows * cols];
        let mut kd = [Complex64::default(); MAX_TRANS];
        let mut kk = [Complex64::default(); MAX_TRANS];
        for p in 0..n_p {
            let pinv = group.point_inverse(p);
            for q in 0..n_p {
                let r = group.point_compose(pinv, q);
                for co in 0..w_out {
                    for ci in 0..w_in {
                        let base = (co * w_in + ci) * self.order + r * n_t;
                        for (d, slot) in kd.iter_mut().enumerate().take(n_t) {
                            *slot = filt[base + group.point_on_trans(pinv, d)];
                        }
                        self.dft2(&kd[..n_t], &mut kk[..n_t], true);
                        let (i, j) = (co * n_p + p, ci * n_p + q);
                        for (k, &v) in kk.iter().enumerate().take(n_t) {
                            out[(k * rows + i) * cols + j] = v;
                        }
                    }
                }
            }
        }
        out
    }

    fn conv_forward(&self, conv: usize, f: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (rows, cols) = self.shape(conv);
        let n_t = self.n_t;
        let kern = &self.kernels[conv];
        let mut fhat = vec![Complex64::default(); n_t * cols];
        let mut buf = [Complex64::default(); MAX_TRANS];
        for j in 0..cols {
            self.dft2(&f[j * n_t..(j + 1) * n_t], &mut buf[..n_t], false);
            for k in 0..n_t {
                fhat[k * cols + j] = buf[k];
            }
        }
        let mut yhat = vec![Complex64::default(); n_t * rows];
        for k in 0..n_t {
            let x = &fhat[k * cols..(k + 1) * cols];
            for i in 0..rows {
                let row = &kern[(k * rows + i) * cols..(k * rows + i + 1) * cols];
                yhat[k * rows + i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
        let mut y = vec![Complex64::default(); rows * n_t];
        let scale = 1.0 / n_t as f64;
        let mut col = [Complex64::default(); MAX_TRANS];
        for i in 0..rows {
            for k in 0..n_t {
                col[k] = yhat[k * rows + i];
            }
            self.dft2(&col[..n_t], &mut y[i * n_t..(i + 1) * n_t], true);
            for z in &mut y[i * n_t..(i + 1) * n_t] {
                *z *= scale;
            }
        }
        (y, fhat)
    }

    /// Returns the input cotangent; adds `ŷ̄(k) conj(f̂(k))` into `acc`.
    fn conv_backward(&self, conv: usize, fhat: &[Complex64], ybar: &[Complex64], acc: &mut [Complex64]) -> Vec<Complex64> {
        let (rows, cols) = self.shape(conv);
        let n_t = self.n_t;
        let kern = &self.kernels[conv];
        let mut ybhat = vec![Complex64::default(); n_t * rows];
        let mut buf = [Complex64::default(); MAX_TRANS];
        for i in 0..rows {
            self.dft2(&ybar[i * n_t..(i + 1) * n_t], &mut buf[..n_t], false);
            for k in 0..n_t {
                ybhat[k * rows + i] = buf[k];
            }
        }
        let mut fbhat = vec![Complex64::default(); n_t * cols];
        for k in 0..n_t {
            let x = &fhat[k * cols..(k + 1) * cols];
            let out = &mut fbhat[k * cols..(k + 1) * cols];
            for i in 0..rows {
                let yb = ybhat[k * rows + i];
                if yb == Complex64::default() {
                    continue;
                }
                let off = (k * rows + i) * cols;
                let row = &kern[off..off + cols];
                let arow = &mut acc[off..off + cols];
                for j in 0..cols {
                    arow[j] += yb * x[j].conj();
                    out[j] += row[j].conj() * yb;
                }
            }
        }
        let mut fbar = vec![Complex64::default(); cols * n_t];
        let scale = 1.0 / n_t as f64;
        let mut col = [Complex64::default(); MAX_TRANS];
        for j in 0..cols {
            for k in 0..n_t {
                col[k] = fbhat[k * cols + j];
            }
            self.dft2(&col[..n_t], &mut fbar[j * n_t..(j + 1) * n_t], true);
            for z in &mut fbar[j * n_t..(j + 1) * n_t] {
                *z *= scale;
            }
        }
        fbar
    }

    /// Filter cotangent `W̄[c, c', (u, r)] = Σ_p R[c, p; c', p r](p·u)` from the
    /// accumulated spectra.
    fn finalize_filter(&self, conv: usize, acc: &[Complex64], w_out: usize) -> Vec<Complex64> {
        let group = self.wf.group();
        let (rows, cols) = self.shape(conv);
        let (n_p, n_t, w_in) = (self.n_p, self.n_t, self.width);
        let scale = 1.0 / n_t as f64;
        let mut grad = vec![Complex64::default(); w_out * w_in * self.order];
        let mut a = [Complex64::default(); MAX_TRANS];
        let mut r = [Complex64::default(); MAX_TRANS];
        for co in 0..w_out {
            for ci in 0..w_in {
                let base = (co * w_in + ci) * self.order;
                for p in 0..n_p {
                    for q in 0..n_p {
                        let (i, j) = (co * n_p + p, ci * n_p + q);
                        for (k, slot) in a.iter_mut().enumerate().take(n_t) {
                            *slot = acc[(k * rows + i) * cols + j];
                        }
                        self.dft2(&a[..n_t], &mut r[..n_t], false);
                        let rr = group.point_compose(group.point_inverse(p), q);
                        for u in 0..n_t {
                            grad[base + rr * n_t + u] += r[group.point_on_trans(p, u)] * scale;
                        }
                    }
                }
            }
        }
        let live = self.wf.live_taps();
        for (i, z) in grad.iter_mut().enumerate() {
            if !live[i % self.order] {
                *z = Complex64::default();
            }
        }
        grad
    }

    fn run_forward(&self, config: &SpinConfiguration) -> Result<Tape, EvalError> {
        let wf = self.wf;
        let (order, w) = (self.order, self.width);
        let n = wf.group().n_sites();
        crate::ansatz::check_length(config, n)?;
        let sigma = config.spins();
        let input = &wf.filters().input;
        let map = wf.index_map();
        let mut pre = vec![Complex64::default(); w * order];
        for g in 0..order {
            let row = map.input_row(g);
            for c in 0..w {
                let filt = &input[c * n..(c + 1) * n];
                let mut acc = Complex64::default();
                for (&x, &s) in row.iter().zip(sigma) {
                    if s > 0 {
                        acc += filt[x as usize];
                    } else {
                        acc -= filt[x as usize];
                    }
                }
                pre[c * order + g] = acc;
            }
        }
        let mut maps = FeatureMaps { pre: Vec::new(), layers: Vec::new(), embedding: Vec::new() };
        let mut spectra = Vec::new();
        let post: Vec<Complex64> = pre.iter().map(|&z| gamma(z)).collect();
        finite(&post, 0)?;
        maps.pre.push(pre);
        maps.layers.push(post);
        let n_conv = self.kernels.len();
        for conv in 0..n_conv {
            let (y, fhat) = self.conv_forward(conv, maps.layers.last().expect("input layer"));
            spectra.push(fhat);
            if conv + 1 == n_conv {
                finite(&y, conv + 1)?;
                maps.embedding = y;
            } else {
                let post: Vec<Complex64> = y.iter().map(|&z| gamma(z)).collect();
                finite(&post, conv + 1)?;
                maps.pre.push(y);
                maps.layers.push(post);
            }
        }
        Ok(Tape { maps, spectra })
    }

    /// Every intermediate feature map, as [`Wavefunction::forward_features`].
    pub fn forward_features(&self, config: &SpinConfiguration) -> Result<FeatureMaps, EvalError> {
        Ok(self.run_forward(config)?.maps)
    }

    /// Unprojected log ψ.
    pub fn raw_log_psi(&self, config: &SpinConfiguration) -> Result<Complex64, EvalError> {
        let tape = self.run_forward(config)?;
        Ok(character_log_sum_exp(&tape.maps.embedding, &self.wf.config().character)?.0)
    }

    /// Backward pass with cotangent `seed` on the projected log ψ; input-layer
    /// cotangents go to `input_grad`, convolution spectra to `accs`.
    fn accumulate(
        &self,
        config: &SpinConfiguration,
        seed: Complex64,
        input_grad: &mut [Complex64],
        accs: &mut [Vec<Complex64>],
    ) -> Result<(), EvalError> {
        let wf = self.wf;
        let tape = self.run_forward(config)?;
        let (_, weights) = character_log_sum_exp(&tape.maps.embedding, &wf.config().character)?;
        let seed = wf.readout_mode().pull_back(seed);
        let mut g: Vec<Complex64> = weights.iter().map(|p| p.conj() * seed).collect();
        for conv in (0..self.kernels.len()).rev() {
            let g_post = self.conv_backward(conv, &tape.spectra[conv], &g, &mut accs[conv]);
            g = tape.maps.pre[conv]
                .iter()
                .zip(&g_post)
                .map(|(&p, &gb)| gamma_pullback(p, gb))
                .collect();
        }
        let (order, w, n) = (self.order, self.width, wf.group().n_sites());
        let map = wf.index_map();
        let sigma = config.spins();
        for gi in 0..order {
            let row = map.input_row(gi);
            for c in 0..w {
                let gz = g[c * order + gi];
                let out = &mut input_grad[c * n..(c + 1) * n];
                for (&x, &s) in row.iter().zip(sigma) {
                    if s > 0 {
                        out[x as usize] += gz;
                    } else {
                        out[x as usize] -= gz;
                    }
                }
            }
        }
        Ok(())
    }

    fn empty_accumulators(&self) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
        let input = vec![Complex64::default(); self.wf.filters().input.len()];
        let accs = self.kernels.iter().map(|k| vec![Complex64::default(); k.len()]).collect();
        (input, accs)
    }

    fn flatten(&self, input: Vec<Complex64>, accs: &[Vec<Complex64>]) -> Vec<f64> {
        let n_conv = self.kernels.len();
        let mut tensors = vec![input];
        for (conv, acc) in accs.iter().enumerate() {
            let w_out = if conv + 1 == n_conv { 1 } else { self.width };
            tensors.push(self.finalize_filter(conv, acc, w_out));
        }
        tensors
            .into_iter()
            .flatten()
            .flat_map(|z| [z.re, z.im])
            .collect()
    }

    /// `Σ_i 2 Re(w_i conj(O_k(σ_i)))` over the given weighted configurations.
    pub fn weighted_gradient(&self, items: &[(SpinConfiguration, Complex64)]) -> Result<Vec<f64>, EvalError> {
        let (mut input, mut accs) = self.empty_accumulators();
        for (config, w) in items {
            self.accumulate(config, 2.0 * w, &mut input, &mut accs)?;
        }
        Ok(self.flatten(input, &accs))
    }
}

fn finite(values: &[Complex64], layer: usize) -> Result<(), EvalError> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite { layer })
    }
}

/// Per-step evaluator for [`Wavefunction`]: spectral convolutions plus an
/// orbit cache.
pub struct SpectralEvaluator<'a> {
    plan: SpectralPlan<'a>,
    log_chi: Vec<Complex64>,
    values: HashMap<u64, Complex64>,
    pending: BTreeMap<u64, Complex64>,
}

impl<'a> SpectralEvaluator<'a> {
    pub fn new(wf: &'a Wavefunction) -> Self {
        Self {
            log_chi: wf.config().character.iter().map(|&c| log_character(c)).collect(),
            plan: SpectralPlan::new(wf),
            values: HashMap::new(),
            pending: BTreeMap::new(),
        }
    }

    /// Distinct orbits evaluated so far.
    pub fn cached_orbits(&self) -> usize {
        self.values.len()
    }
}

impl Evaluator for SpectralEvaluator<'_> {
    fn log_psi(&mut self, bits: u64) -> Result<Complex64, EvalError> {
        let wf = self.plan.wf;
        let (rep, u) = wf.group().orbit_representative(bits);
        let base = match self.values.get(&rep) {
            Some(&v) => v,
            None => {
                let config = SpinConfiguration::from_bits(rep, wf.group().n_sites());
                let v = self.plan.raw_log_psi(&config)?;
                self.values.insert(rep, v);
                v
            }
        };
        let raw = base + self.log_chi[u];
        Ok(crate::gcnn::wrap_phase(wf.readout_mode().project(raw)))
    }

    fn accumulate_gradient(&mut self, bits: u64, weight: Complex64) -> Result<(), EvalError> {
        let (rep, _) = self.plan.wf.group().orbit_representative(bits);
        *self.pending.entry(rep).or_default() += weight;
        Ok(())
    }

    fn take_gradient(&mut self) -> Result<Vec<f64>, EvalError> {
        let n = self.plan.wf.group().n_sites();
        let (mut input, mut accs) = self.plan.empty_accumulators();
        for (&rep, &w) in &self.pending {
            let config = SpinConfiguration::from_bits(rep, n);
            self.plan.accumulate(&config, 2.0 * w, &mut input, &mut accs)?;
        }
        self.pending.clear();
        Ok(self.plan.flatten(input, &accs))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ansatz::Ansatz;
    use crate::ansatz::ReadoutMode;
    use crate::gcnn::{GcnnConfig, Masking};
    use crate::lattice::{FilterSupport, Geometry, LatticeSpec};
    use crate::symmetry::{build_group, CharacterSector, GroupVariant, SymmetryGroup};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    fn networks() -> Vec<Wavefunction> {
        let mut out = Vec::new();
        for (geometry, side) in [(Geometry::Square, 4), (Geometry::Triangular, 4), (Geometry::Triangular, 3)] {
            for (i, masking) in Masking::ALL.into_iter().enumerate() {
                let support = if i % 2 == 0 { FilterSupport::Full } else { FilterSupport::ThirdNeighbor };
                let lat = LatticeSpec::new(geometry, side, support).unwrap();
                let group = Arc::new(SymmetryGroup::wallpaper(&lat));
                let mut cfg = GcnnConfig::symmetric(&group, 3, 2, 40 + i as u64);
                cfg.masking = masking;
                cfg.support = support;
                if i == 1 {
                    cfg.character = CharacterSector::ReflectionOdd.character(&group);
                }
                out.push(Wavefunction::new(cfg, group, Some(&lat)).unwrap());
            }
        }
        let lat = LatticeSpec::new(Geometry::Square, 4, FilterSupport::Full).unwrap();
        for variant in [GroupVariant::Translations, GroupVariant::PointGroup] {
            let group = Arc::new(build_group(&lat, variant).unwrap());
            let cfg = GcnnConfig::symmetric(&group, 2, 3, 5);
            out.push(Wavefunction::new(cfg, group, Some(&lat)).unwrap());
        }
        let group = Arc::new(SymmetryGroup::trivial(4));
        out.push(Wavefunction::new(GcnnConfig::symmetric(&group, 2, 3, 6), group, None).unwrap());
        out
    }

    fn random_config(n: usize, rng: &mut ChaCha8Rng) -> SpinConfiguration {
        if n.is_multiple_of(2) {
            SpinConfiguration::random_balanced(n, rng).unwrap()
        } else {
            SpinConfiguration::new((0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()).unwrap()
        }
    }

    #[test]
    fn forward_matches_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for wf in networks() {
            let plan = SpectralPlan::new(&wf);
            for _ in 0..3 {
                let c = random_config(wf.n_sites(), &mut rng);
                let a = wf.forward_features(&c).unwrap();
                let b = plan.forward_features(&c).unwrap();
                for (la, lb) in a.layers.iter().zip(&b.layers) {
                    for (x, y) in la.iter().zip(lb) {
                        assert!(close(*y, *x, 1e-12));
                    }
                }
                for (x, y) in a.embedding.iter().zip(&b.embedding) {
                    assert!(close(*y, *x, 1e-12));
                }
            }
        }
    }

    #[test]
    fn evaluator_gradient_matches_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mut wf in networks() {
            for mode in [ReadoutMode::Amplitude, ReadoutMode::PhaseOnly] {
                wf.set_readout_mode(mode);
                let n = wf.n_sites();
                let mut expected = vec![0.0; wf.n_params()];
                let mut ev = SpectralEvaluator::new(&wf);
                for _ in 0..4 {
                    let c = random_config(n, &mut rng);
                    let w = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                    let (lp, o) = wf.log_psi_and_gradient(&c).unwrap();
                    let mut amplitude = wf.clone();
                    amplitude.set_readout_mode(ReadoutMode::Amplitude);
                    if amplitude.log_psi(&c).unwrap().re < -10.0 {
                        // configuration fixed by an element with χ ≠ 1: ψ is zero up to rounding
                        continue;
                    }
                    let bits = c.to_bits().unwrap();
                    assert!(close(ev.log_psi(bits).unwrap(), lp, 1e-12));
                    ev.accumulate_gradient(bits, w).unwrap();
                    for (e, ok) in expected.iter_mut().zip(&o) {
                        *e += 2.0 * (w * ok.conj()).re;
                    }
                }
                let got = ev.take_gradient().unwrap();
                let scale = expected.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                for (g, e) in got.iter().zip(&expected) {
                    assert!((g - e).abs() <= 1e-11 * scale, "{g} vs {e}");
                }
            }
        }
    }

    #[test]
    fn orbit_cache_reuses_representatives() {
        let wf = &networks()[0];
        let group = wf.group();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_config(16, &mut rng);
        let mut ev = SpectralEvaluator::new(wf);
        let base = ev.log_psi(c.to_bits().unwrap()).unwrap();
        for u in 0..group.order() {
            let moved = group.apply_to_sites(u, &c).to_bits().unwrap();
            let v = ev.log_psi(moved).unwrap();
            assert!(close(v, base, 1e-12));
            assert!(close(v, wf.log_psi(&SpinConfiguration::from_bits(moved, 16)).unwrap(), 1e-12));
        }
        assert_eq!(ev.cached_orbits(), 1);
    }
}
