//! Execution of a validated run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use colltraj::model::{build_coupling, coupling_spectrum, lorentzian_density};
use colltraj::oracles::{
    calibrated_feedback_dde, jc_pseudomode, lindblad_solve, markovian_spec, mcwf_homodyne, mcwf_photodetection,
    single_excitation_schrodinger, two_port_spec, DdeSpec, LindbladSpec, McwfConfig, McwfDetection,
};
use colltraj::{
    run_ensemble, CouplingVariant, DenseMatrix, Density, EnsembleOptions, EnsembleStats, InitialState,
    MeasurementScheme, Observable, Simulator, SystemHamiltonianSpec, TrajectoryConfig,
};

use crate::config::{Mode, OracleSpec, RunConfigFile};
use crate::output::{histogram_csv, trajectory_ndjson, Outputs, RunManifest, RunStatus, Table};
use crate::CliError;

/// Decorrelates the oracle's random streams from the collision ensemble's.
const ORACLE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// Overrides `out_dir` from the configuration.
    pub out_dir: Option<PathBuf>,
}

/// Per-observable means and standard errors on a time grid.
struct Series {
    times: Vec<f64>,
    mean: Vec<Vec<f64>>,
    stderr: Vec<Vec<f64>>,
}

impl Series {
    fn from_stats(stats: &EnsembleStats) -> Self {
        let n = stats.observables.len();
        Self {
            times: stats.times.clone(),
            mean: (0..n).map(|o| stats.mean(o)).collect(),
            stderr: (0..n).map(|o| stats.stderr(o)).collect(),
        }
    }

    fn table(&self, names: &[&str]) -> Table {
        let mut t = Table::new();
        t.push("time", self.times.clone());
        for (o, name) in names.iter().enumerate() {
            t.push(format!("{name}_mean"), self.mean[o].clone());
            t.push(format!("{name}_stderr"), self.stderr[o].clone());
        }
        t
    }
}

fn ensemble_table(stats: &EnsembleStats, names: &[&str]) -> Table {
    let mut t = Table::new();
    t.push("time", stats.times.clone());
    for (o, name) in names.iter().enumerate() {
        t.push(format!("{name}_mean"), stats.mean(o));
        t.push(format!("{name}_variance"), stats.variance(o));
        t.push(format!("{name}_stderr"), stats.stderr(o));
    }
    t
}

/// `(a − b)/√(σ_a² + σ_b²)`; zero for equal values with no spread.
fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s > 0.0 {
        (a - b) / s
    } else if a == b {
        0.0
    } else {
        (a - b).signum() * f64::INFINITY
    }
}

fn core_error(e: colltraj::Error) -> CliError {
    if e.is_configuration() {
        CliError::Config(e.to_string())
    } else {
        CliError::Numerical(e.to_string())
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("`oracle`: {}", msg())))
    }
}

/// A reference computation, checked against the configuration before anything runs.
enum Oracle {
    Lindblad(LindbladSpec),
    Pseudomode(LindbladSpec, usize),
    SingleExcitation(colltraj::CouplingProfile<f64>),
    Dde(DdeSpec),
    Mcwf(colltraj::oracles::Mcwf),
}

fn unforced(config: &TrajectoryConfig) -> Result<(), CliError> {
    let quiet = match config.system {
        SystemHamiltonianSpec::None => true,
        SystemHamiltonianSpec::DrivenQubit { omega } => omega == 0.0,
        SystemHamiltonianSpec::Squeezer { zeta } => zeta == 0.0,
    };
    require(quiet, || "single-excitation references need an undriven system".into())?;
    require(config.initial == InitialState::Excited, || {
        "single-excitation references start from the excited state".into()
    })
}

impl Oracle {
    fn prepare(spec: &OracleSpec, config: &TrajectoryConfig, file: &RunConfigFile) -> Result<Self, CliError> {
        let dim = config.layout.system_dim;
        let times = config.record_times();
        let kind = format!("{spec:?}");
        Ok(match (*spec, &config.coupling) {
            (OracleSpec::Markovian, CouplingVariant::Point { rate }) => {
                Oracle::Lindblad(markovian_spec(dim, &config.system, *rate, &config.initial, times).map_err(core_error)?)
            }
            (OracleSpec::TwoPort, CouplingVariant::TwoPointFeedback { rate, .. }) => {
                Oracle::Lindblad(two_port_spec(dim, &config.system, *rate, &config.initial, times).map_err(core_error)?)
            }
            (OracleSpec::Pseudomode { cavity_dim }, CouplingVariant::Exponential { rate, memory_rate }) => {
                let omega = match config.system {
                    SystemHamiltonianSpec::None => 0.0,
                    SystemHamiltonianSpec::DrivenQubit { omega } => omega,
                    SystemHamiltonianSpec::Squeezer { .. } => {
                        return Err(CliError::Config("`oracle`: the pseudomode reference needs a driven qubit".into()))
                    }
                };
                require(dim == 2, || "the pseudomode reference needs system_dim = 2".into())?;
                require(config.initial == InitialState::Excited, || {
                    "the pseudomode reference starts from the excited state".into()
                })?;
                let spec = jc_pseudomode(*rate, *memory_rate, omega, cavity_dim, times).map_err(core_error)?;
                Oracle::Pseudomode(spec, cavity_dim)
            }
            (OracleSpec::SingleExcitation, variant) => {
                unforced(config)?;
                let n = config.layout.env_count;
                let profile = build_coupling::<f64>(variant, n, config.dt).map_err(core_error)?;
                let total = n.max(profile.support_span() + config.n_steps + 1);
                Oracle::SingleExcitation(profile.zero_padded(total))
            }
            (OracleSpec::Dde, CouplingVariant::TwoPointFeedback { rate, phase, delay_steps }) => {
                unforced(config)?;
                let spec = DdeSpec {
                    rate: *rate,
                    phase: *phase,
                    delay: *delay_steps as f64 * config.dt,
                    horizon: config.duration(),
                    step: config.dt,
                };
                spec.validate().map_err(core_error)?;
                Oracle::Dde(spec)
            }
            (OracleSpec::Mcwf, CouplingVariant::Point { rate }) => {
                let mc = McwfConfig {
                    system_dim: dim,
                    system: config.system,
                    rate: *rate,
                    detection: McwfDetection::Photodetection,
                    dt: config.dt,
                    n_steps: config.n_steps,
                    master_seed: file.seed ^ ORACLE_SEED_SALT,
                    initial: config.initial.clone(),
                    record: config.record.clone(),
                };
                let m = match config.scheme {
                    MeasurementScheme::Photodetection => mcwf_photodetection(mc),
                    MeasurementScheme::Homodyne { alpha, theta, .. } => mcwf_homodyne(mc, alpha, theta),
                };
                Oracle::Mcwf(m.map_err(core_error)?)
            }
            _ => {
                return Err(CliError::Config(format!(
                    "`oracle`: {kind} does not apply to the {:?} coupling",
                    config.coupling
                )))
            }
        })
    }

    fn evaluate(&self, config: &TrajectoryConfig, trajectories: usize, threads: Option<usize>) -> Result<Series, CliError> {
        let observables = &config.record.observables;
        let times = config.record_times();
        let matrices = |d: usize| -> Result<Vec<DenseMatrix<f64>>, CliError> {
            observables.iter().map(|o| o.matrix::<f64>(d).map_err(core_error)).collect()
        };
        let from_density = |rhos: Vec<DenseMatrix<f64>>, mats: Vec<DenseMatrix<f64>>| Series {
            times: times.clone(),
            mean: mats
                .iter()
                .map(|m| rhos.iter().map(|r| r.matmul(m).trace().re).collect())
                .collect(),
            stderr: vec![vec![0.0; times.len()]; mats.len()],
        };
        let from_population = |pops: Vec<f64>| -> Series {
            let mean = observables
                .iter()
                .map(|o| {
                    pops.iter()
                        .map(|p| match o {
                            Observable::Number => *p,
                            Observable::SigmaZ => 2.0 * p - 1.0,
                            // the reduced state is diagonal in a single-excitation sector
                            _ => 0.0,
                        })
                        .collect()
                })
                .collect();
            Series {
                times: times.clone(),
                mean,
                stderr: vec![vec![0.0; times.len()]; observables.len()],
            }
        };
        let at = |series: &colltraj::oracles::AmplitudeSeries| -> Result<Vec<f64>, CliError> {
            times
                .iter()
                .map(|t| {
                    series
                        .population_at(*t)
                        .ok_or_else(|| CliError::Numerical(format!("reference does not cover t = {t}")))
                })
                .collect()
        };
        Ok(match self {
            Oracle::Lindblad(spec) => {
                let rhos = lindblad_solve(spec).map_err(core_error)?;
                from_density(rhos.iter().map(|r| r.matrix().clone()).collect(), matrices(config.layout.system_dim)?)
            }
            Oracle::Pseudomode(spec, cd) => {
                let rhos = lindblad_solve(spec).map_err(core_error)?;
                let cd = *cd;
                let qubit = |r: &Density| {
                    DenseMatrix::from_fn(2, 2, |i, j| (0..cd).map(|n| r.matrix()[(i * cd + n, j * cd + n)]).sum())
                };
                from_density(rhos.iter().map(qubit).collect(), matrices(2)?)
            }
            Oracle::SingleExcitation(profile) => {
                let series =
                    single_excitation_schrodinger(profile, config.dt, config.duration(), config.dt).map_err(core_error)?;
                from_population(at(&series)?)
            }
            Oracle::Dde(spec) => {
                let cal = calibrated_feedback_dde(spec, config.dt).map_err(core_error)?;
                from_population(at(&cal.model)?)
            }
            Oracle::Mcwf(m) => {
                let opts = EnsembleOptions {
                    threads,
                    ..Default::default()
                };
                Series::from_stats(&run_ensemble(m, trajectories, &opts).map_err(core_error)?)
            }
        })
    }
}

/// Everything checked before the manifest is written.
struct Plan {
    config: TrajectoryConfig,
    simulator: Option<Simulator>,
    oracle: Option<Oracle>,
}

fn plan(file: &RunConfigFile) -> Result<Plan, CliError> {
    let config = file.trajectory_config()?;
    let simulator = match file.mode {
        Mode::Spectrum | Mode::Oracle => None,
        _ => Some(Simulator::new(config.clone()).map_err(core_error)?),
    };
    let oracle = match (file.mode, &file.oracle) {
        (Mode::Oracle | Mode::Compare, Some(spec)) => Some(Oracle::prepare(spec, &config, file)?),
        _ => None,
    };
    Ok(Plan {
        config,
        simulator,
        oracle,
    })
}

fn execute(
    file: &RunConfigFile,
    plan: &Plan,
    options: &RunOptions,
    outputs: &mut Outputs,
    summary: &mut BTreeMap<String, f64>,
) -> Result<(), CliError> {
    let config = &plan.config;
    let names: Vec<&str> = config.record.observables.iter().map(Observable::name).collect();
    let ensemble = |keep: bool| -> Result<EnsembleStats, CliError> {
        let sim = plan.simulator.as_ref().expect("simulator planned");
        let opts = EnsembleOptions {
            threads: options.threads,
            counting: file.counting,
            keep_trajectories: keep,
        };
        let stats = run_ensemble(sim, file.trajectories, &opts).map_err(core_error)?;
        Ok(stats)
    };
    let record_stats = |stats: &EnsembleStats, summary: &mut BTreeMap<String, f64>| {
        summary.insert("trajectories".into(), stats.n_trajectories as f64);
        summary.insert("zero_click_trajectories".into(), stats.zero_click_trajectories as f64);
        summary.insert("max_norm_drift".into(), stats.max_norm_drift);
    };
    match file.mode {
        Mode::Trajectory => {
            let stats = ensemble(true)?;
            record_stats(&stats, summary);
            for t in &stats.trajectories {
                outputs.write(&format!("trajectory_{:05}.ndjson", t.index), &trajectory_ndjson(t, &names))?;
            }
        }
        Mode::Ensemble | Mode::Compare => {
            let stats = ensemble(false)?;
            record_stats(&stats, summary);
            outputs.write("ensemble.csv", &ensemble_table(&stats, &names).to_csv())?;
            if let Some(h) = &stats.histogram {
                outputs.write("histogram.csv", &histogram_csv(h))?;
            }
            let sim = plan.simulator.as_ref().expect("simulator planned");
            for i in 0..file.sample_trajectories.min(file.trajectories) {
                let t = sim.run_trajectory(i as u64).map_err(core_error)?;
                outputs.write(&format!("trajectory_{i:05}.ndjson"), &trajectory_ndjson(&t, &names))?;
            }
            if file.mode == Mode::Compare {
                let oracle = plan.oracle.as_ref().expect("oracle planned");
                let reference = oracle.evaluate(config, file.trajectories, options.threads)?;
                outputs.write("oracle.csv", &reference.table(&names).to_csv())?;
                let collision = Series::from_stats(&stats);
                let mut t = Table::new();
                t.push("time", collision.times.clone());
                for (o, name) in names.iter().enumerate() {
                    let z: Vec<f64> = (0..collision.times.len())
                        .map(|k| {
                            z_score(
                                collision.mean[o][k],
                                collision.stderr[o][k],
                                reference.mean[o][k],
                                reference.stderr[o][k],
                            )
                        })
                        .collect();
                    summary.insert(format!("{name}_max_abs_z"), z.iter().fold(0.0, |m, x| m.max(x.abs())));
                    t.push(format!("{name}_collision_mean"), collision.mean[o].clone());
                    t.push(format!("{name}_collision_stderr"), collision.stderr[o].clone());
                    t.push(format!("{name}_oracle_mean"), reference.mean[o].clone());
                    t.push(format!("{name}_oracle_stderr"), reference.stderr[o].clone());
                    t.push(format!("{name}_z"), z);
                }
                outputs.write("compare.csv", &t.to_csv())?;
            }
        }
        Mode::Oracle => {
            let oracle = plan.oracle.as_ref().expect("oracle planned");
            let reference = oracle.evaluate(config, file.trajectories, options.threads)?;
            outputs.write("oracle.csv", &reference.table(&names).to_csv())?;
        }
        Mode::Spectrum => {
            let profile = build_coupling::<f64>(&config.coupling, config.layout.env_count, config.dt).map_err(core_error)?;
            let spectrum = coupling_spectrum(&profile, config.dt).map_err(core_error)?;
            let omegas = spectrum.symmetric_omegas();
            let mut t = Table::new();
            t.push("k", (0..omegas.len()).map(|k| k as f64).collect());
            t.push("omega", omegas.clone());
            t.push("kappa_sq", spectrum.kappas.iter().map(|k| k.norm_sqr()).collect());
            if let CouplingVariant::Exponential { rate, memory_rate } = config.coupling {
                // |κ_k|² → 2π J(ω_k)/L as the chain grows
                let f = 2.0 * std::f64::consts::PI / spectrum.length;
                let reference = omegas
                    .iter()
                    .map(|w| lorentzian_density(rate, memory_rate, *w).map(|j| f * j))
                    .collect::<colltraj::Result<Vec<f64>>>()
                    .map_err(core_error)?;
                t.push("lorentzian", reference);
            }
            outputs.write("spectrum.csv", &t.to_csv())?;
        }
    }
    Ok(())
}

/// Runs `file`, writing outputs and the manifest into the output directory.
///
/// Configuration problems are reported before anything is written. If the
/// run itself fails, its data files are removed and the manifest is marked failed.
pub fn run(file: &RunConfigFile, options: &RunOptions) -> Result<RunManifest, CliError> {
    let plan = plan(file)?;
    let dir = options
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut outputs = Outputs::create(&dir)?;
    let started = Instant::now();
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: file.seed,
        threads: options.threads,
        config: file.clone(),
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        wall_clock_seconds: None,
        outputs: BTreeMap::new(),
        summary: BTreeMap::new(),
        error: None,
    };
    outputs.write_manifest(&manifest)?;
    let mut summary = BTreeMap::new();
    let result = execute(file, &plan, options, &mut outputs, &mut summary).and_then(|()| outputs.checksums());
    manifest.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    match result {
        Ok(sums) => {
            manifest.status = RunStatus::Complete;
            manifest.outputs = sums;
            manifest.summary = summary;
            outputs.write_manifest(&manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            outputs.remove_all();
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            let _ = outputs.write_manifest(&manifest);
            Err(e)
        }
    }
}
