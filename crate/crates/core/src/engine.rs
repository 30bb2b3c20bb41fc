//! Trajectory loop and ensemble aggregation.
//!
//! Every step prepares the local oscillator (homodyne only), evolves the
//! system and environment for one interval, measures and resets site 0, and
//! shifts the chain. Records are taken after the shift at `t = kΔt`.
//!
//! The Hamiltonian never touches the local oscillator, so the oscillator
//! factor is kept implicit: the state lives on system ⊗ environment and the
//! coherent vector enters only through the measurement probabilities.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisEnumeration, ModeLayout};
use crate::collision::{
    self, coherent_vector, homodyne_eigensystem, HomodyneEigensystem, MeasurementOutcome, MeasurementScheme,
};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::{build_coupling, build_interaction, build_system_h, lowering_matrix, CouplingVariant, SystemHamiltonianSpec};
use crate::propagator::{Propagator, PropagatorConfig, Workspace};
use crate::scalar::{czero, Cx, Real};
use crate::state::{reduce_to_system, DensityMatrix, PureState};
use crate::stats::{histogram, integrate_outcomes, Histogram, Welford};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    Excited,
    Ground,
    Fock { n: usize },
    /// Explicit `[re, im]` system amplitudes; normalized on use.
    Amplitudes { values: Vec<[f64; 2]> },
}

impl InitialState {
    pub fn system_vector<T: Real>(&self, dim: usize) -> Result<Vec<Cx<T>>> {
        let mut v = vec![czero::<T>(); dim];
        let basis_vec = |n: usize, mut v: Vec<Cx<T>>| {
            if n >= dim {
                return Err(Error::InvalidParameter(format!(
                    "initial occupation {n} outside system dimension {dim}"
                )));
            }
            v[n] = Cx::new(T::one(), T::zero());
            Ok(v)
        };
        match self {
            InitialState::Excited => basis_vec(1, v),
            InitialState::Ground => basis_vec(0, v),
            InitialState::Fock { n } => basis_vec(*n, v),
            InitialState::Amplitudes { values } => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: values.len(),
                    });
                }
                let norm: f64 = values.iter().map(|[a, b]| a * a + b * b).sum::<f64>().sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::InvalidParameter("initial amplitudes must have positive norm".into()));
                }
                for (z, [a, b]) in v.iter_mut().zip(values) {
                    *z = Cx::new(T::of(a / norm), T::of(b / norm));
                }
                Ok(v)
            }
        }
    }
}

/// Single-system observables recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `a†a`
    Number,
    /// `a + a†`
    XQuadrature,
    /// `i(a† − a)`
    YQuadrature,
    SigmaX,
    SigmaY,
    SigmaZ,
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::Number => "number",
            Observable::XQuadrature => "x_quadrature",
            Observable::YQuadrature => "y_quadrature",
            Observable::SigmaX => "sigma_x",
            Observable::SigmaY => "sigma_y",
            Observable::SigmaZ => "sigma_z",
        }
    }

    /// The operator on the `dim`-dimensional system; Pauli operators need a qubit.
    pub fn matrix<T: Real>(&self, dim: usize) -> Result<DenseMatrix<T>> {
        let pauli = matches!(self, Observable::SigmaX | Observable::SigmaY | Observable::SigmaZ);
        if pauli && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "{} needs a two-level system, got dimension {dim}",
                self.name()
            )));
        }
        let a = lowering_matrix::<T>(dim);
        let ad = a.adjoint();
        let i = Cx::new(T::zero(), T::one());
        Ok(match self {
            Observable::Number => ad.matmul(&a),
            Observable::XQuadrature | Observable::SigmaX => a.add(&ad),
            Observable::YQuadrature | Observable::SigmaY => ad.sub(&a).scale(i),
            Observable::SigmaZ => ad.matmul(&a).scale(Cx::new(T::of(2.0), T::zero())).sub(&DenseMatrix::identity(2)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordSettings {
    pub observables: Vec<Observable>,
    /// Observables are recorded every `stride` steps.
    pub stride: usize,
    /// Reduced density matrices are recorded every `density_stride` steps; 0 disables them.
    pub density_stride: usize,
}

impl Default for RecordSettings {
    fn default() -> Self {
        Self {
            observables: vec![Observable::Number],
            stride: 1,
            density_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub layout: ModeLayout,
    pub coupling: CouplingVariant,
    #[serde(default)]
    pub system: SystemHamiltonianSpec,
    pub scheme: MeasurementScheme,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub record: RecordSettings,
    #[serde(default)]
    pub propagator: PropagatorConfig,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.scheme.validate(&self.layout)?;
        self.propagator.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step {} must be positive", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if self.record.stride == 0 {
            return Err(Error::InvalidParameter("record stride must be at least 1".into()));
        }
        if let Some(min) = self.coupling.minimal_env_count() {
            if self.layout.env_count < min {
                return Err(Error::InvalidLayout(format!(
                    "coupling needs at least {min} environment sites, layout has {}",
                    self.layout.env_count
                )));
            }
        }
        for obs in &self.record.observables {
            obs.matrix::<f64>(self.layout.system_dim)?;
        }
        Ok(())
    }

    /// Stable 64-bit identifier of the configuration (FNV-1a of its debug form).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in format!("{self:?}").bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Times `kΔt` at which observables are recorded.
    pub fn record_times(&self) -> Vec<f64> {
        (1..=self.n_steps)
            .filter(|k| k % self.record.stride == 0)
            .map(|k| k as f64 * self.dt)
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub outcome: MeasurementOutcome,
    /// Expectations in the order of [`RecordSettings::observables`].
    pub expectations: Vec<f64>,
    pub density: Option<DensityMatrix<f64>>,
    pub purity: f64,
    /// `|‖ψ‖² − 1|` after the coherent evolution of this step.
    pub norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub fingerprint: u64,
    pub index: u64,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    /// Outcome eigenvalue of every step, regardless of the record stride.
    pub outcomes: Vec<f64>,
}

impl Trajectory {
    pub fn click_count(&self) -> usize {
        self.outcomes.iter().filter(|v| **v != 0.0).count()
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.records.iter().map(|r| r.norm_drift).fold(0.0, f64::max)
    }
}

/// Sum of outcome eigenvalues with time in `(burn_in, burn_in + window]`.
pub fn integrated_record(trajectory: &Trajectory, window: f64, burn_in: f64) -> Result<f64> {
    integrate_outcomes(&trajectory.outcomes, trajectory.dt, window, burn_in)
}

/// Anything that produces seeded trajectories with a fixed record layout.
pub trait TrajectorySource: Sync {
    fn run(&self, index: u64) -> Result<Trajectory>;
    fn observables(&self) -> &[Observable];
    fn record_times(&self) -> Vec<f64>;
    fn dt(&self) -> f64;
}

/// Per-trajectory random stream: `master_seed` selects the key, the index the stream.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A validated configuration with its operators prepared.
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    config: TrajectoryConfig,
    basis: Arc<BasisEnumeration>,
    propagator: Propagator<T>,
    homodyne: Option<(HomodyneEigensystem, Vec<Cx<T>>)>,
    initial: Vec<Cx<T>>,
    observables: Vec<DenseMatrix<T>>,
    fingerprint: u64,
}

impl<T: Real> Simulator<T> {
    pub fn new(config: TrajectoryConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout.without_lo();
        let basis = Arc::new(BasisEnumeration::new(layout)?);
        let h = hamiltonian::<T>(&basis, &config)?;
        let propagator = Propagator::new(h, config.dt, config.propagator.clone())?;
        let homodyne = match config.scheme {
            MeasurementScheme::Photodetection => None,
            MeasurementScheme::Homodyne { lo_dim, .. } => {
                let beta = config.scheme.lo_amplitude(config.dt).expect("homodyne has an amplitude");
                Some((homodyne_eigensystem(lo_dim)?, coherent_vector::<T>(beta, lo_dim)?))
            }
        };
        let system = config.initial.system_vector::<T>(layout.system_dim)?;
        let initial = PureState::product_with_vacuum(basis.clone(), &system)?.into_amplitudes();
        let observables = config
            .record
            .observables
            .iter()
            .map(|o| o.matrix::<T>(layout.system_dim))
            .collect::<Result<Vec<_>>>()?;
        let fingerprint = config.fingerprint();
        Ok(Self {
            config,
            basis,
            propagator,
            homodyne,
            initial,
            observables,
            fingerprint,
        })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.config
    }

    /// Basis of system ⊗ environment (without the local oscillator).
    pub fn basis(&self) -> &Arc<BasisEnumeration> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn initial_state(&self) -> PureState<T> {
        PureState::from_amplitudes(self.basis.clone(), self.initial.clone()).expect("dimension fixed at construction")
    }

    pub fn run_trajectory(&self, index: u64) -> Result<Trajectory> {
        let mut rng = trajectory_rng(self.config.master_seed, index);
        let mut ws = self.propagator.workspace();
        self.run_with(index, &mut rng, &mut ws)
    }

    fn run_with(&self, index: u64, rng: &mut ChaCha8Rng, ws: &mut Workspace<T>) -> Result<Trajectory> {
        let cfg = &self.config;
        let ds = cfg.layout.system_dim;
        let mut psi = self.initial.clone();
        let mut scratch = vec![czero::<T>(); psi.len()];
        let mut probs = Vec::new();
        let mut records = Vec::with_capacity(cfg.n_steps / cfg.record.stride);
        let mut outcomes = Vec::with_capacity(cfg.n_steps);
        for k in 1..=cfg.n_steps {
            self.propagator.apply(&mut psi, ws)?;
            let norm_drift = (crate::scalar::norm_sqr(&psi).to64() - 1.0).abs();
            let outcome = match &self.homodyne {
                None => collision::photo_in_place(&mut psi, &self.basis, rng)?,
                Some((eig, coh)) => {
                    collision::homodyne_factored(&mut psi, &mut scratch, &self.basis, coh, eig, rng, &mut probs)?
                }
            };
            collision::shift_into(&psi, &mut scratch, &self.basis)?;
            std::mem::swap(&mut psi, &mut scratch);
            outcomes.push(outcome.eigenvalue);
            if k % cfg.record.stride == 0 {
                let rho = reduce_to_system(&psi, ds);
                let expectations = self.observables.iter().map(|o| rho.expect(o).re.to64()).collect();
                let keep_density = cfg.record.density_stride > 0 && k % cfg.record.density_stride == 0;
                records.push(StepRecord {
                    step: k,
                    time: k as f64 * cfg.dt,
                    outcome,
                    expectations,
                    purity: rho.purity().to64(),
                    density: keep_density.then(|| rho.to_f64()),
                    norm_drift,
                });
            }
        }
        Ok(Trajectory {
            fingerprint: self.fingerprint,
            index,
            dt: cfg.dt,
            records,
            outcomes,
        })
    }

    /// The same loop on the full space including the oscillator, using the
    /// public single-step operations literally. Slow; meant for cross-checks.
    pub fn run_trajectory_full_space(&self, index: u64) -> Result<Trajectory> {
        let cfg = &self.config;
        let full = Arc::new(BasisEnumeration::new(cfg.layout)?);
        let h = hamiltonian::<T>(&full, cfg)?;
        let prop = Propagator::new(h, cfg.dt, cfg.propagator.clone())?;
        let mut ws = prop.workspace();
        let mut rng = trajectory_rng(cfg.master_seed, index);
        let system = cfg.initial.system_vector::<T>(cfg.layout.system_dim)?;
        let mut psi = PureState::product_with_vacuum(full.clone(), &system)?;
        let eig = match cfg.scheme {
            MeasurementScheme::Homodyne { lo_dim, .. } => Some(homodyne_eigensystem(lo_dim)?),
            MeasurementScheme::Photodetection => None,
        };
        let mut records = Vec::new();
        let mut outcomes = Vec::new();
        for k in 1..=cfg.n_steps {
            if let Some(beta) = cfg.scheme.lo_amplitude(cfg.dt) {
                psi = collision::prepare_lo(&psi, beta)?;
            }
            prop.apply(psi.amplitudes_mut(), &mut ws)?;
            let norm_drift = (psi.norm_sqr().to64() - 1.0).abs();
            psi.normalize()?;
            let (outcome, post) = match &eig {
                None => collision::measure_photo(&psi, &mut rng)?,
                Some(eig) => collision::measure_homodyne(&psi, eig, &mut rng)?,
            };
            psi = collision::apply_shift(&post)?;
            outcomes.push(outcome.eigenvalue);
            if k % cfg.record.stride == 0 {
                let rho = crate::state::partial_trace_system(&psi)?;
                let expectations = self.observables.iter().map(|o| rho.expect(o).re.to64()).collect();
                records.push(StepRecord {
                    step: k,
                    time: k as f64 * cfg.dt,
                    outcome,
                    expectations,
                    purity: rho.purity().to64(),
                    density: None,
                    norm_drift,
                });
            }
        }
        Ok(Trajectory {
            fingerprint: self.fingerprint,
            index,
            dt: cfg.dt,
            records,
            outcomes,
        })
    }
}

/// `H_S + H_I` on the given basis.
pub fn hamiltonian<T: Real>(basis: &BasisEnumeration, config: &TrajectoryConfig) -> Result<crate::sparse::SparseOperator<T>> {
    let profile = build_coupling::<T>(&config.coupling, basis.layout().env_count, config.dt)?;
    let hi = build_interaction(basis, &profile, config.dt)?;
    let hs = build_system_h::<T>(basis, &config.system)?;
    hs.add(&hi)
}

impl<T: Real> TrajectorySource for Simulator<T> {
    fn run(&self, index: u64) -> Result<Trajectory> {
        self.run_trajectory(index)
    }

    fn observables(&self) -> &[Observable] {
        &self.config.record.observables
    }

    fn record_times(&self) -> Vec<f64> {
        self.config.record_times()
    }

    fn dt(&self) -> f64 {
        self.config.dt
    }
}

/// Integrated-record settings for counting statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingWindow {
    pub window: f64,
    pub burn_in: f64,
    pub bin_width: f64,
    #[serde(default)]
    pub center: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub counting: Option<CountingWindow>,
    /// Retain every trajectory in the result.
    pub keep_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_trajectories: usize,
    pub observables: Vec<Observable>,
    pub times: Vec<f64>,
    /// `moments[o][t]` for observable `o` at recorded time `t`.
    pub moments: Vec<Vec<Welford>>,
    pub density_times: Vec<f64>,
    pub mean_density: Vec<DenseMatrix<f64>>,
    pub zero_click_trajectories: usize,
    pub integrated: Vec<f64>,
    pub histogram: Option<Histogram>,
    pub max_norm_drift: f64,
    pub trajectories: Vec<Trajectory>,
}

impl EnsembleStats {
    pub fn mean(&self, observable: usize) -> Vec<f64> {
        self.moments[observable].iter().map(Welford::mean).collect()
    }

    pub fn variance(&self, observable: usize) -> Vec<f64> {
        self.moments[observable].iter().map(Welford::variance).collect()
    }

    pub fn stderr(&self, observable: usize) -> Vec<f64> {
        self.moments[observable].iter().map(Welford::stderr).collect()
    }

    pub fn observable_index(&self, o: Observable) -> Option<usize> {
        self.observables.iter().position(|x| *x == o)
    }
}

const CHUNK: usize = 256;

/// Runs trajectories `0..n_traj` and aggregates them in index order, so the
/// result does not depend on the number of threads.
pub fn run_ensemble<S: TrajectorySource + ?Sized>(
    source: &S,
    n_traj: usize,
    options: &EnsembleOptions,
) -> Result<EnsembleStats> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("an ensemble needs at least one trajectory".into()));
    }
    let pool = match options.threads {
        Some(0) => return Err(Error::InvalidParameter("thread count must be positive".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let observables = source.observables().to_vec();
    let times = source.record_times();
    let mut stats = EnsembleStats {
        n_trajectories: n_traj,
        moments: vec![vec![Welford::default(); times.len()]; observables.len()],
        observables,
        times,
        density_times: Vec::new(),
        mean_density: Vec::new(),
        zero_click_trajectories: 0,
        integrated: Vec::new(),
        histogram: None,
        max_norm_drift: 0.0,
        trajectories: Vec::new(),
    };
    let mut start = 0usize;
    while start < n_traj {
        let end = (start + CHUNK).min(n_traj);
        let run = || {
            (start..end)
                .into_par_iter()
                .map(|i| source.run(i as u64))
                .collect::<Vec<_>>()
        };
        let batch = match &pool {
            Some(p) => p.install(run),
            None => run(),
        };
        for (offset, result) in batch.into_iter().enumerate() {
            let index = start + offset;
            let traj = result.map_err(|e| Error::Trajectory {
                index,
                source: Box::new(e),
            })?;
            accumulate(&mut stats, &traj, options)?;
            if options.keep_trajectories {
                stats.trajectories.push(traj);
            }
        }
        start = end;
    }
    let n = n_traj as f64;
    for m in &mut stats.mean_density {
        *m = m.scale(Cx::new(1.0 / n, 0.0));
    }
    if let Some(c) = options.counting {
        stats.histogram = Some(histogram(&stats.integrated, c.bin_width, c.center)?);
    }
    Ok(stats)
}

fn accumulate(stats: &mut EnsembleStats, traj: &Trajectory, options: &EnsembleOptions) -> Result<()> {
    if traj.records.len() != stats.times.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.times.len(),
            found: traj.records.len(),
        });
    }
    for (t, rec) in traj.records.iter().enumerate() {
        for (o, v) in rec.expectations.iter().enumerate() {
            stats.moments[o][t].push(*v);
        }
    }
    let mut d = 0;
    for rec in &traj.records {
        if let Some(rho) = &rec.density {
            if stats.density_times.len() <= d {
                stats.density_times.push(rec.time);
                stats.mean_density.push(rho.matrix().clone());
            } else {
                stats.mean_density[d] = stats.mean_density[d].add(rho.matrix());
            }
            d += 1;
        }
    }
    if traj.click_count() == 0 {
        stats.zero_click_trajectories += 1;
    }
    stats.max_norm_drift = stats.max_norm_drift.max(traj.max_norm_drift());
    if let Some(c) = options.counting {
        stats.integrated.push(integrated_record(traj, c.window, c.burn_in)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::Method;

    fn markov(rate: f64, n_steps: usize) -> TrajectoryConfig {
        TrajectoryConfig {
            layout: ModeLayout::new(2, 1, 1, 0).unwrap(),
            coupling: CouplingVariant::Point { rate },
            system: SystemHamiltonianSpec::None,
            scheme: MeasurementScheme::Photodetection,
            dt: 0.01,
            n_steps,
            master_seed: 11,
            initial: InitialState::Excited,
            record: RecordSettings::default(),
            propagator: PropagatorConfig::with_method(Method::DenseExponential),
        }
    }

    #[test]
    fn decoupled_emitter_stays_excited() {
        let sim = Simulator::<f64>::new(markov(0.0, 50)).unwrap();
        let t = sim.run_trajectory(0).unwrap();
        assert_eq!(t.click_count(), 0);
        assert!(t.records.iter().all(|r| (r.expectations[0] - 1.0).abs() < 1e-12));
        assert_eq!(t.records.len(), 50);
        assert!((t.records[49].time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn emitter_clicks_at_most_once() {
        let sim = Simulator::<f64>::new(markov(1.0, 400)).unwrap();
        for i in 0..20 {
            let t = sim.run_trajectory(i).unwrap();
            assert!(t.click_count() <= 1);
            if let Some(k) = t.outcomes.iter().position(|v| *v == 1.0) {
                assert!(t.records[k..].iter().all(|r| r.expectations[0].abs() < 1e-12));
            }
            assert!(t.records.iter().all(|r| (r.purity - 1.0).abs() < 1e-8));
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let sim = Simulator::<f64>::new(markov(1.0, 100)).unwrap();
        assert_eq!(sim.run_trajectory(3).unwrap(), sim.run_trajectory(3).unwrap());
        assert_ne!(sim.run_trajectory(3).unwrap().outcomes, sim.run_trajectory(4).unwrap().outcomes);
    }

    #[test]
    fn ensemble_independent_of_threads() {
        let sim = Simulator::<f64>::new(markov(1.0, 100)).unwrap();
        let one = run_ensemble(&sim, 300, &EnsembleOptions { threads: Some(1), ..Default::default() }).unwrap();
        let four = run_ensemble(&sim, 300, &EnsembleOptions { threads: Some(4), ..Default::default() }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn single_trajectory_ensemble() {
        let sim = Simulator::<f64>::new(markov(1.0, 30)).unwrap();
        let stats = run_ensemble(&sim, 1, &EnsembleOptions::default()).unwrap();
        let t = sim.run_trajectory(0).unwrap();
        let means = stats.mean(0);
        for (m, r) in means.iter().zip(&t.records) {
            assert_eq!(*m, r.expectations[0]);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = markov(1.0, 10);
        c.n_steps = 0;
        assert!(c.validate().is_err());
        let mut c = markov(1.0, 10);
        c.record.observables = vec![Observable::SigmaY];
        assert!(c.validate().is_ok());
        c.layout = ModeLayout::new(3, 1, 1, 0).unwrap();
        assert!(c.validate().is_err());
        let mut c = markov(1.0, 10);
        c.scheme = MeasurementScheme::Homodyne {
            alpha: 1.0,
            theta: 0.0,
            lo_dim: 4,
        };
        assert!(matches!(c.validate(), Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn trajectory_error_carries_index() {
        let mut c = markov(1.0, 10);
        c.propagator = PropagatorConfig {
            method: Method::AdaptiveRk,
            max_substeps: 1,
            tolerance: 1e-12,
            ..PropagatorConfig::default()
        };
        c.system = SystemHamiltonianSpec::DrivenQubit { omega: 1e4 };
        let sim = Simulator::<f64>::new(c).unwrap();
        let err = run_ensemble(&sim, 3, &EnsembleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Trajectory { index: 0, .. }));
    }

    #[test]
    fn factored_homodyne_matches_full_space_loop() {
        let c = TrajectoryConfig {
            layout: ModeLayout::new(2, 3, 2, 10).unwrap(),
            coupling: CouplingVariant::TwoPointFeedback {
                rate: 1.0,
                phase: 0.3,
                delay_steps: 2,
            },
            system: SystemHamiltonianSpec::DrivenQubit { omega: 0.7 },
            scheme: MeasurementScheme::Homodyne {
                alpha: 3.0,
                theta: 0.4,
                lo_dim: 10,
            },
            dt: 0.05,
            n_steps: 30,
            master_seed: 5,
            initial: InitialState::Excited,
            record: RecordSettings {
                observables: vec![Observable::SigmaY, Observable::Number],
                stride: 1,
                density_stride: 0,
            },
            propagator: PropagatorConfig::with_method(Method::DenseExponential),
        };
        let sim = Simulator::<f64>::new(c).unwrap();
        for i in 0..4 {
            let a = sim.run_trajectory(i).unwrap();
            let b = sim.run_trajectory_full_space(i).unwrap();
            assert_eq!(a.outcomes, b.outcomes);
            for (ra, rb) in a.records.iter().zip(&b.records) {
                for (x, y) in ra.expectations.iter().zip(&rb.expectations) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn counting_window_histogram() {
        let sim = Simulator::<f64>::new(markov(1.0, 200)).unwrap();
        let opts = EnsembleOptions {
            counting: Some(CountingWindow {
                window: 1.0,
                burn_in: 0.5,
                bin_width: 1.0,
                center: 0.0,
            }),
            ..Default::default()
        };
        let stats = run_ensemble(&sim, 50, &opts).unwrap();
        assert_eq!(stats.histogram.unwrap().total(), 50);
    }
}
