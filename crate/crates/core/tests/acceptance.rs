//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to the
//! process stdout so the verdicts survive libtest's output capture.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gcnn_vmc::ansatz::Ansatz;
use gcnn_vmc::config::RunConfig;
use gcnn_vmc::ed::{ground_state_with, SectorBasis, Solver, TabulatedWavefunction};
use gcnn_vmc::gcnn::{count_params, selu, GcnnConfig, Masking, Wavefunction};
use gcnn_vmc::heisenberg::HeisenbergModel;
use gcnn_vmc::lattice::{FilterSupport, Geometry, LatticeSpec};
use gcnn_vmc::sampler::{sample_batch, MarkovChain, SamplerConfig};
use gcnn_vmc::spin::SpinConfiguration;
use gcnn_vmc::symmetry::{CharacterSector, Decomposition, SymmetryGroup};
use gcnn_vmc::vmc::{estimate_with_evaluator, evaluate_energy, masking_experiment, train, NullSink, EVAL_SEED};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

/// `|a − b| / max(1, |a|)` with the phase difference taken mod 2π.
fn log_distance(a: Complex64, b: Complex64) -> f64 {
    let mut d = a - b;
    d.im = d.im - 2.0 * std::f64::consts::PI * (d.im / (2.0 * std::f64::consts::PI)).round();
    d.norm() / a.norm().max(1.0)
}

fn random_config(n: usize, rng: &mut ChaCha8Rng) -> SpinConfiguration {
    SpinConfiguration::random_balanced(n, rng).unwrap()
}

fn wavefunction(geometry: Geometry, side: usize, layers: usize, width: usize, masking: Masking, sector: CharacterSector, seed: u64) -> Wavefunction {
    let lat = LatticeSpec::new(geometry, side, FilterSupport::Full).unwrap();
    let group = Arc::new(SymmetryGroup::wallpaper(&lat));
    let config = GcnnConfig { masking, character: sector.character(&group), ..GcnnConfig::symmetric(&group, layers, width, seed) };
    Wavefunction::new(config, group, Some(&lat)).unwrap()
}

/// Random parameters well away from the initialisation scale.
fn scramble(wf: &mut Wavefunction, scale: f64, rng: &mut ChaCha8Rng) {
    let p: Vec<f64> = (0..wf.n_params()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    wf.set_params(&p);
}

fn gamma(z: Complex64) -> Complex64 {
    Complex64::new(selu(z.re), selu(z.im))
}

fn log_sum_exp(e: &[Complex64], chi: &[Complex64]) -> Complex64 {
    let m = e.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let s: Complex64 = e.iter().zip(chi).map(|(z, c)| c * (z - m).exp()).sum();
    m + s.ln()
}

// ---------------------------------------------------------------- criterion 1

struct System {
    label: &'static str,
    geometry: Geometry,
    j2: f64,
    tolerance: f64,
}

const SYSTEMS: [System; 4] = [
    System { label: "square J2=0", geometry: Geometry::Square, j2: 0.0, tolerance: 0.005 },
    System { label: "square J2=0.5", geometry: Geometry::Square, j2: 0.5, tolerance: 0.015 },
    System { label: "triangular J2=0", geometry: Geometry::Triangular, j2: 0.0, tolerance: 0.015 },
    System { label: "triangular J2=0.125", geometry: Geometry::Triangular, j2: 0.125, tolerance: 0.015 },
];

#[test]
fn criterion_1_desk_training_matches_ed() {
    let mut pass = true;
    let mut details = Vec::new();
    for sys in &SYSTEMS {
        let cfg = RunConfig { geometry: sys.geometry, j2: sys.j2, trace_wall_clock: false, ..RunConfig::desk() };
        cfg.validate().unwrap();
        assert!(cfg.stage1_steps >= 2000 && cfg.stage1_batch == 100);
        let lat = cfg.lattice().unwrap();
        let model = cfg.model(&lat).unwrap();
        let ed = ground_state_with(&model, Solver::Lanczos).unwrap();
        assert_eq!(ed.basis.dim(), 12870);
        let group = cfg.group(&lat);
        let mut wf = Wavefunction::new(cfg.gcnn_config(&group), group, Some(&lat)).unwrap();
        train(&mut wf, &model, &cfg.train_options(), &mut NullSink).unwrap();
        let e = evaluate_energy(&wf, &model, cfg.sampler(), cfg.eval_samples, cfg.seed ^ EVAL_SEED).unwrap().per_site(16);
        let rel = (e.mean.re - ed.e0_per_site()).abs() / ed.e0_per_site().abs();
        pass &= rel <= sys.tolerance;
        details.push(format!(
            "{}: {:.5}±{:.5} vs ED {:.5}, rel {:.3}% ≤ {}%",
            sys.label,
            e.mean.re,
            e.std_error,
            ed.e0_per_site(),
            100.0 * rel,
            100.0 * sys.tolerance
        ));
    }
    report(1, "desk training vs ED", pass, &details.join("; "));
}

// ---------------------------------------------------------------- criterion 2

#[test]
#[ignore = "hours-scale; run with --ignored"]
fn criterion_2_six_by_six_triangular() {
    let mut pass = true;
    let mut details = Vec::new();
    for (j2, bound) in [(0.0, -0.557), (0.125, -0.510)] {
        let cfg = RunConfig { j2, ..RunConfig::large() };
        let lat = cfg.lattice().unwrap();
        let model = cfg.model(&lat).unwrap();
        let group = cfg.group(&lat);
        let mut wf = Wavefunction::new(cfg.gcnn_config(&group), group, Some(&lat)).unwrap();
        train(&mut wf, &model, &cfg.train_options(), &mut NullSink).unwrap();
        let e = evaluate_energy(&wf, &model, cfg.sampler(), cfg.eval_samples, cfg.seed ^ EVAL_SEED).unwrap().per_site(36);
        pass &= e.mean.re <= bound;
        details.push(format!("J2={j2}: {:.5}±{:.5} ≤ {bound}", e.mean.re, e.std_error));
    }
    report(2, "6x6 triangular reproduction", pass, &details.join("; "));
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_masking_ordering() {
    let cfg = RunConfig { geometry: Geometry::Triangular, j2: 0.125, trace_wall_clock: false, ..RunConfig::desk() };
    let lat = cfg.lattice().unwrap();
    let model = cfg.model(&lat).unwrap();
    let group = cfg.group(&lat);
    let runs = masking_experiment(&cfg.gcnn_config(&group), group, Some(&lat), &model, &cfg.train_options(), &Masking::ALL, cfg.eval_samples)
        .unwrap();
    let e: Vec<_> = runs.iter().map(|r| r.final_energy.per_site(16)).collect();
    let le = |a: usize, b: usize| e[a].mean.re <= e[b].mean.re + 2.0 * e[a].std_error.hypot(e[b].std_error);
    let (full, trans, pg, diag) = (0, 1, 2, 3);
    let ordering = le(full, trans) && le(full, pg) && le(pg, diag);
    let zeros = runs.iter().all(|r| r.masked_entries_zero);

    // feature-layer factors on the published 6×6 architecture and at desk size
    let lat6 = LatticeSpec::new(Geometry::Triangular, 6, FilterSupport::Full).unwrap();
    let g6 = SymmetryGroup::wallpaper(&lat6);
    let feat = |g: &SymmetryGroup, m: Masking, layers| {
        count_params(&GcnnConfig { masking: m, ..GcnnConfig::symmetric(g, layers, 16, 0) }, g, None).feature_total()
    };
    let d6 = feat(&g6, Masking::Diagonal, 4);
    let f6 = (feat(&g6, Masking::Translational, 4) / d6, feat(&g6, Masking::PointGroup, 4) / d6);
    let table: Vec<_> = Masking::ALL
        .iter()
        .map(|&m| count_params(&GcnnConfig { masking: m, ..GcnnConfig::symmetric(&g6, 5, 16, 0) }, &g6, None).complex_total())
        .collect();
    let d4 = runs[diag].params.feature_total();
    let f4 = (runs[trans].params.feature_total() / d4, runs[pg].params.feature_total() / d4);
    let counts = f6 == (36, 12) && f4 == (16, 12) && table == [449_856, 38_016, 13_056, 1_616];

    let energies: Vec<_> = runs.iter().zip(&e).map(|(r, s)| format!("{} {:.5}±{:.5}", r.masking, s.mean.re, s.std_error)).collect();
    report(
        3,
        "masking ordering",
        ordering && zeros && counts,
        &format!(
            "{}; factors 6x6 {:?} 4x4 {:?}; counts {:?}; masks intact {zeros}",
            energies.join(", "),
            f6,
            f4,
            table
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_equivariance() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases = [
        (Geometry::Square, 4, CharacterSector::Symmetric),
        (Geometry::Square, 4, CharacterSector::ReflectionOdd),
        (Geometry::Triangular, 4, CharacterSector::Symmetric),
        (Geometry::Triangular, 4, CharacterSector::RotationOdd),
        (Geometry::Triangular, 6, CharacterSector::Symmetric),
    ];
    for (k, &(geometry, side, sector)) in cases.iter().enumerate() {
        let mut wf = wavefunction(geometry, side, 3, 4, Masking::Full, sector, k as u64);
        scramble(&mut wf, 0.2, &mut rng);
        let group = Arc::clone(wf.group_arc());
        let chi = sector.character(&group);
        let order = group.order();
        let n = group.n_sites();
        let mut eval = wf.evaluator();
        let mut pairs = 0;
        while pairs < 100 {
            let sigma = random_config(n, &mut rng);
            let u = rng.random_range(0..order);
            let moved = group.apply_to_sites(u, &sigma);
            let a = wf.forward_features(&sigma).unwrap();
            let b = wf.forward_features(&moved).unwrap();
            for (la, lb) in a.layers.iter().chain([&a.embedding]).zip(b.layers.iter().chain([&b.embedding])) {
                for c in 0..la.len() / order {
                    for g in 0..order {
                        let want = la[c * order + group.compose(group.inverse(u), g)];
                        let got = lb[c * order + g];
                        worst = worst.max((got - want).norm() / want.norm().max(1.0));
                    }
                }
            }
            let (pa, pb) = (wf.log_psi(&sigma).unwrap(), wf.log_psi(&moved).unwrap());
            if pa.re - a.embedding.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max) < -10.0 {
                // σ is fixed by an element with χ = −1, so ψ(σ) is zero up to rounding
                continue;
            }
            worst = worst.max(log_distance(pb, pa + chi[u].ln()));
            let (sa, sb) = (eval.log_psi(sigma.to_bits().unwrap()).unwrap(), eval.log_psi(moved.to_bits().unwrap()).unwrap());
            worst = worst.max(log_distance(sa, pa)).max(log_distance(sb, pb));
            pairs += 1;
            checked += 1;
        }
    }
    report(4, "equivariance", worst < 1e-10, &format!("{checked} pairs over {} groups, worst relative deviation {worst:.2e}", cases.len()));
}

// ---------------------------------------------------------------- criterion 5

fn point_matrix(geometry: Geometry, d: Decomposition) -> [[i64; 2]; 2] {
    let mul = |a: [[i64; 2]; 2], b: [[i64; 2]; 2]| {
        [
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ]
    };
    let mut m = if d.refl == 1 { geometry.reflection_matrix() } else { [[1, 0], [0, 1]] };
    for _ in 0..d.rot {
        m = mul(geometry.rotation_matrix(), m);
    }
    m
}

fn apply(m: [[i64; 2]; 2], (i, j): (i64, i64)) -> (i64, i64) {
    (m[0][0] * i + m[0][1] * j, m[1][0] * i + m[1][1] * j)
}

fn inverse(m: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    assert!(det == 1 || det == -1);
    [[m[1][1] * det, -m[0][1] * det], [-m[1][0] * det, m[0][0] * det]]
}

/// Dense network on raw spins: `SELU`-split activations after every layer but
/// the last, identity-tap weights of a diagonal-masked G-CNN.
fn perceptron(wf: &Wavefunction, tau: &[f64]) -> Complex64 {
    let p = wf.filters();
    let w = wf.config().width;
    let order = wf.group().order();
    let e = wf.group().identity();
    let n = tau.len();
    let mut h: Vec<Complex64> =
        (0..w).map(|c| gamma((0..n).map(|y| p.input[c * n + y] * tau[y]).sum())).collect();
    for layer in &p.features {
        h = (0..w)
            .map(|c| gamma((0..w).map(|ci| layer[(c * w + ci) * order + e] * h[ci]).sum()))
            .collect();
    }
    (0..w).map(|c| p.readout[c * order + e] * h[c]).sum()
}

/// `Σ_g χ_g exp(P(g⁻¹σ))` with `(g⁻¹σ)_y = σ_{g·y}`.
fn symmetry_averaged_perceptron(wf: &Wavefunction, lat: &LatticeSpec, sigma: &SpinConfiguration) -> Complex64 {
    let group = wf.group();
    let geometry = lat.geometry();
    let s: Vec<f64> = sigma.spins().iter().map(|&v| v as f64).collect();
    let e: Vec<Complex64> = group
        .elements()
        .iter()
        .map(|g| {
            let d = g.decomposition;
            let m = point_matrix(geometry, d);
            let tau: Vec<f64> = (0..s.len())
                .map(|y| {
                    let (i, j) = lat.site_coords(y);
                    let (a, b) = apply(m, (i as i64, j as i64));
                    s[lat.site_index(a + d.tx as i64, b + d.ty as i64)]
                })
                .collect();
            perceptron(wf, &tau)
        })
        .collect();
    log_sum_exp(&e, &wf.config().character)
}

/// Ordinary periodic CNN per point-group element `p`, each with its filters
/// pulled back by `p⁻¹`, summed with the character.
fn point_group_averaged_cnn(wf: &Wavefunction, lat: &LatticeSpec, sigma: &SpinConfiguration) -> Complex64 {
    let group = wf.group();
    let geometry = lat.geometry();
    let p = wf.filters();
    let w = wf.config().width;
    let order = group.order();
    let l = lat.side() as i64;
    let n = lat.n_sites();
    let s: Vec<f64> = sigma.spins().iter().map(|&v| v as f64).collect();
    let coords = |x: usize| {
        let (i, j) = lat.site_coords(x);
        (i as i64, j as i64)
    };
    let tap = |(i, j): (i64, i64)| {
        group
            .element_id(Decomposition { tx: i.rem_euclid(l) as usize, ty: j.rem_euclid(l) as usize, rot: 0, refl: 0 })
            .unwrap()
    };
    let mut embedding = vec![Complex64::default(); order];
    for g in group.elements().iter().filter(|g| g.decomposition.tx == 0 && g.decomposition.ty == 0) {
        let m_inv = inverse(point_matrix(geometry, g.decomposition));
        // input: pre[c](t) = Σ_d W0[c, p⁻¹d] σ(t + d)
        let mut f: Vec<Vec<Complex64>> = (0..w)
            .map(|c| {
                (0..n)
                    .map(|t| {
                        let (ti, tj) = coords(t);
                        gamma(
                            (0..n)
                                .map(|d| {
                                    let (di, dj) = coords(d);
                                    let (a, b) = apply(m_inv, (di, dj));
                                    p.input[c * n + lat.site_index(a, b)] * s[lat.site_index(ti + di, tj + dj)]
                                })
                                .sum(),
                        )
                    })
                    .collect()
            })
            .collect();
        let conv = |filt: &[Complex64], f: &[Vec<Complex64>], w_out: usize| -> Vec<Vec<Complex64>> {
            (0..w_out)
                .map(|c| {
                    (0..n)
                        .map(|t| {
                            let (ti, tj) = coords(t);
                            let mut acc = Complex64::default();
                            for d in 0..n {
                                let (di, dj) = coords(d);
                                let k = tap(apply(m_inv, (di, dj)));
                                for (ci, fc) in f.iter().enumerate() {
                                    acc += filt[(c * w + ci) * order + k] * fc[lat.site_index(ti + di, tj + dj)];
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        };
        for layer in &p.features {
            f = conv(layer, &f, w).into_iter().map(|v| v.into_iter().map(gamma).collect()).collect();
        }
        let out = conv(&p.readout, &f, 1).remove(0);
        for (t, z) in out.into_iter().enumerate() {
            let (ti, tj) = coords(t);
            let id = group
                .element_id(Decomposition { tx: ti as usize, ty: tj as usize, ..g.decomposition })
                .unwrap();
            embedding[id] = z;
        }
    }
    log_sum_exp(&embedding, &wf.config().character)
}

#[test]
fn criterion_5_symmetry_averaging_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    type Oracle = fn(&Wavefunction, &LatticeSpec, &SpinConfiguration) -> Complex64;
    let oracles: [(Masking, &str, Oracle); 2] = [
        (Masking::Diagonal, "diagonal vs averaged perceptron", symmetry_averaged_perceptron),
        (Masking::Translational, "point-group-diagonal vs averaged CNN", point_group_averaged_cnn),
    ];
    for (masking, label, oracle) in oracles {
        let mut local: f64 = 0.0;
        for (k, (geometry, side, sector)) in [
            (Geometry::Square, 4, CharacterSector::Symmetric),
            (Geometry::Triangular, 4, CharacterSector::ReflectionOdd),
        ]
        .into_iter()
        .enumerate()
        {
            let lat = LatticeSpec::new(geometry, side, FilterSupport::Full).unwrap();
            let mut wf = wavefunction(geometry, side, 3, 3, masking, sector, 50 + k as u64);
            scramble(&mut wf, 0.3, &mut rng);
            let mut done = 0;
            while done < 50 {
                let sigma = random_config(lat.n_sites(), &mut rng);
                let got = wf.log_psi(&sigma).unwrap();
                let maps = wf.forward_features(&sigma).unwrap();
                if got.re - maps.embedding.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max) < -10.0 {
                    continue;
                }
                local = local.max(log_distance(got, oracle(&wf, &lat, &sigma)));
                done += 1;
            }
        }
        worst = worst.max(local);
        details.push(format!("{label}: {local:.2e}"));
    }
    report(5, "symmetry-averaging equivalence", worst < 1e-10, &format!("50 configs per geometry; {}", details.join("; ")));
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut worst_eval: f64 = 0.0;
    for draw in 0..100u64 {
        let geometry = if draw % 2 == 0 { Geometry::Square } else { Geometry::Triangular };
        let masking = Masking::ALL[(draw / 2 % 4) as usize];
        let preferred = if draw % 3 == 0 { CharacterSector::ReflectionOdd } else { CharacterSector::Symmetric };
        // on 3×3 tori an odd sector can vanish on almost every configuration
        let (mut wf, sigma, log_psi) = [preferred, CharacterSector::Symmetric]
            .into_iter()
            .find_map(|sector| {
                let mut wf = wavefunction(geometry, 3, 2, 2, masking, sector, draw);
                scramble(&mut wf, 0.3, &mut rng);
                let n = wf.n_sites();
                (0..200).find_map(|_| {
                    let spins: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
                    let sigma = SpinConfiguration::new(spins).unwrap();
                    let lp = wf.log_psi(&sigma).unwrap();
                    let top = wf.forward_features(&sigma).unwrap().embedding.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
                    (lp.re - top > -5.0).then_some((sigma, lp))
                })
                .map(|(sigma, lp)| (wf, sigma, lp))
            })
            .unwrap();
        let (lp, o) = wf.log_psi_and_gradient(&sigma).unwrap();
        assert_eq!(lp, log_psi);
        let theta = wf.params();
        let weight = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let from_eval = {
            let mut eval = wf.evaluator();
            eval.log_psi(sigma.to_bits().unwrap()).unwrap();
            eval.accumulate_gradient(sigma.to_bits().unwrap(), weight).unwrap();
            eval.take_gradient().unwrap()
        };
        let live = {
            let mut probe = wf.clone();
            let ones = vec![1.0; theta.len()];
            probe.set_params(&ones);
            probe.params()
        };
        for k in 0..theta.len() {
            let fd = if live[k] == 0.0 {
                Complex64::default()
            } else {
                let mut t = theta.clone();
                t[k] += h;
                wf.set_params(&t);
                let up = wf.log_psi(&sigma).unwrap();
                t[k] -= 2.0 * h;
                wf.set_params(&t);
                let down = wf.log_psi(&sigma).unwrap();
                let mut d = up - down;
                d.im -= 2.0 * std::f64::consts::PI * (d.im / (2.0 * std::f64::consts::PI)).round();
                d / (2.0 * h)
            };
            worst = worst.max((o[k] - fd).norm() / o[k].norm().max(1e-3));
            // the batched evaluator is a second route to the same O
            let ad = 2.0 * (weight * o[k].conj()).re;
            worst_eval = worst_eval.max((from_eval[k] - ad).abs() / (2.0 * weight.norm() * o[k].norm()).max(1e-3));
        }
        wf.set_params(&theta);
    }
    report(
        6,
        "gradient vs finite differences",
        worst < 1e-6 && worst_eval < 1e-10,
        &format!("100 draws on L=3, worst relative error vs finite differences {worst:.2e}; batched evaluator vs per-sample O {worst_eval:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_zero_variance_on_exact_states() {
    let lat = LatticeSpec::new(Geometry::Square, 4, FilterSupport::Full).unwrap();
    let systems = [
        ("2-site", HeisenbergModel::ring(2, 1.0).unwrap()),
        ("4-site", HeisenbergModel::ring(4, 1.0).unwrap()),
        ("4x4", HeisenbergModel::from_lattice(&lat, 1.0, 0.0).unwrap()),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (label, model) in &systems {
        let ed = ground_state_with(model, if model.n_sites() > 8 { Solver::Lanczos } else { Solver::Dense }).unwrap();
        let wf = TabulatedWavefunction::from_result(&ed);
        let mut eval = wf.evaluator();
        let (samples, acceptance) = sample_batch(eval.as_mut(), model.n_sites(), SamplerConfig::default(), 1000, 7).unwrap();
        let (stats, grad) = estimate_with_evaluator(eval.as_mut(), model, &samples, acceptance).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        pass &= stats.variance < 1e-10 && norm < 1e-8 && (stats.mean.re - ed.e0).abs() < 1e-8;
        details.push(format!("{label}: var {:.1e}, |grad| {norm:.1e}", stats.variance));
    }
    report(7, "zero variance", pass, &details.join("; "));
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_sampler_reproduces_born_rule() {
    let basis = Arc::new(SectorBasis::new(4).unwrap());
    let amps: Vec<Complex64> = [0.9, -0.2, 0.5, 1.3, -0.7, 0.35]
        .iter()
        .zip([0.0, 0.4, -1.1, 0.2, 0.0, 2.0])
        .map(|(&r, t)| Complex64::from_polar(r, t))
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let wf = TabulatedWavefunction::new(Arc::clone(&basis), amps.clone());
    let mut eval = wf.evaluator();
    let mut chain = MarkovChain::new(4, 8, 0, eval.as_mut()).unwrap();
    chain.sweep(eval.as_mut(), 100).unwrap();
    let (batches, per_batch) = (100, 1000);
    let mut means = vec![vec![0.0; 6]; batches];
    for batch in means.iter_mut() {
        for _ in 0..per_batch {
            chain.sweep(eval.as_mut(), 1).unwrap();
            batch[basis.index_of(chain.current_bits()).unwrap()] += 1.0 / per_batch as f64;
        }
    }
    let mut worst: f64 = 0.0;
    for s in 0..6 {
        let p = amps[s].norm_sqr() / norm;
        let mean = means.iter().map(|b| b[s]).sum::<f64>() / batches as f64;
        let var = means.iter().map(|b| (b[s] - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        worst = worst.max((mean - p).abs() / se);
    }
    report(8, "sampler Born rule", worst <= 3.0, &format!("1e5 sweeps, worst deviation {worst:.2} standard errors"));
}
