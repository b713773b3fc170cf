use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use gcnn_vmc::ansatz::Ansatz;
use gcnn_vmc::checkpoint::{Checkpoint, CheckpointHeader};
use gcnn_vmc::config::RunConfig;
use gcnn_vmc::ed::{encode_eigenvector, ground_state, EdRecord, EdResult};
use gcnn_vmc::gcnn::{count_params, Masking, ParamCount, Wavefunction};
use gcnn_vmc::heisenberg::HeisenbergModel;
use gcnn_vmc::lattice::LatticeSpec;
use gcnn_vmc::spin::SpinConfiguration;
use gcnn_vmc::symmetry::SymmetryGroup;
use gcnn_vmc::vmc::{self, EnergyStats, JsonLinesSink, TraceRecord, TraceSink, EVAL_SEED};

use crate::error::CliError;
use crate::RunArgs;

/// Mixed into the seed of the independent estimate made by `verify`.
const VERIFY_SEED: u64 = 0x7E51_F1ED;

struct Setup {
    config: RunConfig,
    lattice: LatticeSpec,
    model: HeisenbergModel,
    group: Arc<SymmetryGroup>,
    dir: PathBuf,
}

impl Setup {
    fn new(args: &RunArgs) -> Result<Self, CliError> {
        let config = args.load()?;
        let lattice = config.lattice()?;
        let model = config.model(&lattice)?;
        let group = config.group(&lattice);
        let dir = config.output_dir.clone();
        Ok(Self { config, lattice, model, group, dir })
    }

    /// Creates the run directory and snapshots the effective configuration.
    fn prepare_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        write_file(&self.dir.join("config.toml"), self.config.to_toml_string().as_bytes())
    }

    fn wavefunction(&self, config: &RunConfig) -> Result<Wavefunction, CliError> {
        Ok(Wavefunction::new(config.gcnn_config(&self.group), Arc::clone(&self.group), Some(&self.lattice))?)
    }

    fn header(&self, wf: &Wavefunction) -> CheckpointHeader {
        CheckpointHeader::new(self.config.geometry, self.config.side, wf.config(), self.config.character, wf.n_params())
    }

    /// Exact reference when the sector is small enough; larger systems have none.
    fn reference(&self) -> Result<Option<EdResult>, CliError> {
        if self.model.n_sites() > gcnn_vmc::ed::MAX_SITES {
            return Ok(None);
        }
        Ok(Some(ground_state(&self.model)?))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Forwards records to a trace file and prints occasional progress.
struct Progress<S> {
    inner: S,
    total: usize,
}

impl<S: TraceSink> TraceSink for Progress<S> {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        let every = (self.total / 20).max(1);
        if (r.step + 1).is_multiple_of(every) || r.step + 1 == self.total {
            eprintln!(
                "step {}/{} {:?} E/N = {:.6} ± {:.6}",
                r.step + 1,
                self.total,
                r.stage,
                r.energy_re,
                r.std_error
            );
        }
        self.inner.record(r)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySummary {
    pub energy_per_site: f64,
    pub energy_imag_per_site: f64,
    pub std_error: f64,
    pub variance: f64,
    pub acceptance: f64,
    pub n_samples: usize,
    pub ed_energy_per_site: Option<f64>,
    pub relative_error: Option<f64>,
}

impl EnergySummary {
    fn new(stats: &EnergyStats, n_sites: usize, ed: Option<&EdResult>) -> Self {
        let s = stats.per_site(n_sites);
        let e0 = ed.map(EdResult::e0_per_site);
        Self {
            energy_per_site: s.mean.re,
            energy_imag_per_site: s.mean.im,
            std_error: s.std_error,
            variance: s.variance,
            acceptance: s.acceptance,
            n_samples: s.n_samples,
            ed_energy_per_site: e0,
            relative_error: e0.map(|e0| (s.mean.re - e0).abs() / e0.abs()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub masking: Masking,
    /// Live real parameters; masked entries are stored but not counted.
    pub n_params: usize,
    pub param_count: ParamCount,
    pub steps: usize,
    pub seed: u64,
    pub wall_seconds: f64,
    #[serde(flatten)]
    pub energy: EnergySummary,
}

pub fn train(args: &RunArgs) -> Result<(), CliError> {
    let setup = Setup::new(args)?;
    setup.prepare_dir()?;
    let config = &setup.config;
    let mut wf = setup.wavefunction(config)?;
    let start = Instant::now();
    let trace_path = setup.dir.join("trace.jsonl");
    let file = File::create(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    let mut sink = Progress { inner: JsonLinesSink::new(BufWriter::new(file)), total: config.schedule().total_steps() };
    let summary = vmc::train(&mut wf, &setup.model, &config.train_options(), &mut sink)?;
    sink.inner.into_inner().flush().map_err(|e| CliError::io(&trace_path, e))?;

    let checkpoint = Checkpoint { header: setup.header(&wf), params: wf.params() };
    write_file(&setup.dir.join("checkpoint.bin"), &checkpoint.encode())?;
    let stats = vmc::evaluate_energy(&wf, &setup.model, config.sampler(), config.eval_samples, config.seed ^ EVAL_SEED)?;
    let ed = setup.reference()?;
    let param_count = count_params(wf.config(), &setup.group, Some(&setup.lattice));
    let out = TrainSummary {
        masking: config.masking,
        n_params: param_count.real_total(),
        param_count,
        steps: summary.steps,
        seed: config.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
        energy: EnergySummary::new(&stats, setup.model.n_sites(), ed.as_ref()),
    };
    write_json(&setup.dir.join("summary.json"), &out)?;
    println!("{}", serde_json::to_string(&out).expect("summaries serialize"));
    Ok(())
}

#[derive(Debug, Serialize)]
struct EdOutput<'a> {
    geometry: &'a str,
    side: usize,
    j1: f64,
    j2: f64,
    #[serde(flatten)]
    record: EdRecord,
}

pub fn ed(args: &RunArgs, dump_vector: bool) -> Result<(), CliError> {
    let setup = Setup::new(args)?;
    let result = ground_state(&setup.model)?;
    setup.prepare_dir()?;
    let out = EdOutput {
        geometry: setup.config.geometry.name(),
        side: setup.config.side,
        j1: setup.config.j1,
        j2: setup.config.j2,
        record: result.record(),
    };
    write_json(&setup.dir.join("ed.json"), &out)?;
    if dump_vector {
        write_file(&setup.dir.join("eigenvector.bin"), &encode_eigenvector(result.basis.n_sites(), &result.ground_vector))?;
    }
    println!("{}", serde_json::to_string(&out).expect("records serialize"));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ModeSummary {
    masking: Masking,
    /// Live real parameters.
    n_params: usize,
    param_count: ParamCount,
    /// Feature-layer parameters relative to the diagonal mode.
    feature_factor_vs_diagonal: Option<f64>,
    masked_entries_zero: bool,
    trace: String,
    checkpoint: String,
    #[serde(flatten)]
    energy: EnergySummary,
}

pub fn masking_experiment(args: &RunArgs) -> Result<(), CliError> {
    let setup = Setup::new(args)?;
    if let [only] = setup.config.modes[..] {
        let mut single = args.clone();
        let config = RunConfig { masking: only, ..setup.config.clone() };
        let path = setup.dir.join("config.toml");
        fs::create_dir_all(&setup.dir).map_err(|e| CliError::io(&setup.dir, e))?;
        write_file(&path, config.to_toml_string().as_bytes())?;
        single.config = Some(path);
        single.preset = None;
        return train(&single);
    }
    setup.prepare_dir()?;
    let config = &setup.config;
    let base = setup.wavefunction(config)?.config().clone();
    eprintln!("training {} modes: {:?}", config.modes.len(), config.modes);
    let runs = vmc::masking_experiment(
        &base,
        Arc::clone(&setup.group),
        Some(&setup.lattice),
        &setup.model,
        &config.train_options(),
        &config.modes,
        config.eval_samples,
    )?;
    let ed = setup.reference()?;
    let diagonal = runs.iter().find(|r| r.masking == Masking::Diagonal).map(|r| r.params.feature_total());
    let mut modes = Vec::new();
    for run in &runs {
        let name = run.masking.name();
        let trace = format!("trace-{name}.jsonl");
        let checkpoint = format!("checkpoint-{name}.bin");
        let mut sink = JsonLinesSink::new(Vec::new());
        for r in &run.trace {
            sink.record(r).expect("in-memory sink");
        }
        write_file(&setup.dir.join(&trace), &sink.into_inner())?;
        let wf = &run.wavefunction;
        let ckpt = Checkpoint { header: setup.header(wf), params: wf.params() };
        write_file(&setup.dir.join(&checkpoint), &ckpt.encode())?;
        let summary = ModeSummary {
            masking: run.masking,
            n_params: run.params.real_total(),
            param_count: run.params.clone(),
            feature_factor_vs_diagonal: diagonal.filter(|&d| d > 0).map(|d| run.params.feature_total() as f64 / d as f64),
            masked_entries_zero: run.masked_entries_zero,
            trace,
            checkpoint,
            energy: EnergySummary::new(&run.final_energy, setup.model.n_sites(), ed.as_ref()),
        };
        eprintln!("{name}: E/N = {:.6} ± {:.6}", summary.energy.energy_per_site, summary.energy.std_error);
        modes.push(summary);
    }
    let out = json!({ "seed": config.seed, "modes": modes });
    write_json(&setup.dir.join("summary.json"), &out)?;
    println!("{out}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// `|a − b| / max(1, |a|)`, phase taken mod 2π.
fn log_distance(a: Complex64, b: Complex64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut d = a - b;
    d.im -= tau * (d.im / tau).round();
    d.norm() / a.norm().max(1.0)
}

/// Random sector configurations that are not nodes of the character sum.
fn regular_configs(wf: &Wavefunction, count: usize, rng: &mut ChaCha8Rng) -> Vec<SpinConfiguration> {
    let n = wf.n_sites();
    let mut out = Vec::new();
    for _ in 0..50 * count {
        if out.len() == count {
            break;
        }
        let sigma = SpinConfiguration::random_balanced(n, rng).expect("even site count");
        let (Ok(maps), Ok(lp)) = (wf.forward_features(&sigma), wf.log_psi(&sigma)) else { continue };
        let top = maps.embedding.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if lp.re - top > -10.0 {
            out.push(sigma);
        }
    }
    out
}

fn symmetry_checks(wf: &Wavefunction, seed: u64) -> Vec<Check> {
    let group = wf.group();
    let chi = &wf.config().character;
    let order = group.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs = regular_configs(wf, 4, &mut rng);
    let (mut char_worst, mut layer_worst): (f64, f64) = (0.0, 0.0);
    let mut pairs = 0;
    for sigma in &configs {
        let base = wf.log_psi(sigma).expect("regular configuration");
        let maps = wf.forward_features(sigma).expect("regular configuration");
        for u in 0..order {
            let moved = group.apply_to_sites(u, sigma);
            match wf.log_psi(&moved) {
                Ok(lp) => char_worst = char_worst.max(log_distance(lp, base + chi[u].ln())),
                Err(_) => char_worst = f64::INFINITY,
            }
            // layer equivariance on a subsample of elements
            if rng.random_range(0..order.min(16)) == 0 {
                let moved_maps = wf.forward_features(&moved).expect("image of a regular configuration");
                for (a, b) in maps.layers.iter().zip(&moved_maps.layers) {
                    for c in 0..a.len() / order {
                        for g in 0..order {
                            let want = a[c * order + group.compose(group.inverse(u), g)];
                            layer_worst = layer_worst.max((b[c * order + g] - want).norm() / want.norm().max(1.0));
                        }
                    }
                }
            }
            pairs += 1;
        }
    }
    vec![
        Check {
            name: "character",
            pass: !configs.is_empty() && char_worst < 1e-10,
            detail: format!("{} configurations × {order} elements, worst deviation {char_worst:.2e}", configs.len()),
        },
        Check {
            name: "layer-equivariance",
            pass: !configs.is_empty() && layer_worst < 1e-10,
            detail: format!("{pairs} pairs (layers checked on a subsample), worst deviation {layer_worst:.2e}"),
        },
    ]
}

pub fn verify(args: &RunArgs, checkpoint: &Path, summary: Option<&Path>) -> Result<(), CliError> {
    let setup = Setup::new(args)?;
    let config = &setup.config;
    let bytes = fs::read(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let ckpt = Checkpoint::decode(&bytes)?;
    let mut wf = setup.wavefunction(config)?;
    ckpt.header.check_architecture(&setup.header(&wf))?;
    wf.set_params(&ckpt.params);

    let mut checks = Vec::new();
    let kept = wf.params();
    let same = kept.iter().zip(&ckpt.params).all(|(a, b)| a.to_bits() == b.to_bits());
    checks.push(Check { name: "masked-entries-zero", pass: same, detail: format!("{} parameters", kept.len()) });
    checks.extend(symmetry_checks(&wf, config.seed ^ VERIFY_SEED));

    let stats = vmc::evaluate_energy(&wf, &setup.model, config.sampler(), config.eval_samples, config.seed ^ VERIFY_SEED)?;
    let ed = setup.reference()?;
    let energy = EnergySummary::new(&stats, setup.model.n_sites(), ed.as_ref());
    if let Some(e0) = energy.ed_energy_per_site {
        let pass = energy.energy_per_site >= e0 - 3.0 * energy.std_error;
        checks.push(Check {
            name: "variational-bound",
            pass,
            detail: format!("{:.6} ± {:.6} vs exact {e0:.6}", energy.energy_per_site, energy.std_error),
        });
    }
    let summary_path = summary.map(Path::to_path_buf).or_else(|| {
        let p = checkpoint.with_file_name("summary.json");
        p.exists().then_some(p)
    });
    if let Some(path) = summary_path {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let recorded: TrainSummary = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: not a training summary: {e}", path.display())))?;
        let e = &recorded.energy;
        let margin = 3.0 * e.std_error.hypot(energy.std_error);
        checks.push(Check {
            name: "summary-energy",
            pass: (e.energy_per_site - energy.energy_per_site).abs() <= margin,
            detail: format!("recorded {:.6}, re-estimated {:.6}, allowed {margin:.2e}", e.energy_per_site, energy.energy_per_site),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let out = json!({ "checkpoint": checkpoint.display().to_string(), "pass": pass, "energy": energy, "checks": checks });
    println!("{out}");
    if pass {
        Ok(())
    } else {
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
