//! Conventional Markovian quantum-jump unravelings for direct photodetection
//! and finite-amplitude homodyne detection of a single emitter.
//!
//! Each step first applies `exp(−iH_eff Δt)` and renormalizes, then draws a jump
//! with probabilities `Δt⟨J†J⟩` on the evolved state. Jumping after the coherent
//! part keeps the constant oscillator term of the homodyne rates out of the
//! ensemble error, so steps with a jump do not skip the Hamiltonian evolution.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{sample_outcome, MeasurementOutcome};
use crate::dense::DenseMatrix;
use crate::engine::{trajectory_rng, InitialState, Observable, RecordSettings, StepRecord, Trajectory, TrajectorySource};
use crate::error::{Error, Result};
use crate::model::{lowering_matrix, system_hamiltonian_matrix, SystemHamiltonianSpec};
use crate::scalar::{norm_sqr, Cx};
use crate::state::DensityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum McwfDetection {
    Photodetection,
    /// Jump operators `J± = (α e^{iθ} ∓ i√γ a)/√2`.
    Homodyne { alpha: f64, theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfConfig {
    pub system_dim: usize,
    #[serde(default)]
    pub system: SystemHamiltonianSpec,
    pub rate: f64,
    pub detection: McwfDetection,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub record: RecordSettings,
}

/// Prepared jump unraveling.
#[derive(Debug, Clone)]
pub struct Mcwf {
    config: McwfConfig,
    jumps: Vec<(f64, DenseMatrix<f64>)>,
    jump_products: Vec<DenseMatrix<f64>>,
    no_jump: DenseMatrix<f64>,
    observables: Vec<DenseMatrix<f64>>,
    initial: Vec<Cx<f64>>,
    fingerprint: u64,
}

fn normalize(psi: &mut [Cx<f64>]) -> Result<()> {
    let n = norm_sqr(psi).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Propagation("jump unraveling produced a null state".into()));
    }
    psi.iter_mut().for_each(|z| *z /= n);
    Ok(())
}

fn drive_strength(spec: &SystemHamiltonianSpec) -> f64 {
    match *spec {
        SystemHamiltonianSpec::None => 0.0,
        SystemHamiltonianSpec::DrivenQubit { omega } => omega.abs(),
        SystemHamiltonianSpec::Squeezer { zeta } => zeta.abs(),
    }
}

impl Mcwf {
    pub fn new(config: McwfConfig) -> Result<Self> {
        let d = config.system_dim;
        if !(config.dt > 0.0) || !config.dt.is_finite() || config.n_steps == 0 {
            return Err(Error::InvalidParameter("time step must be positive and n_steps at least 1".into()));
        }
        if !(config.rate >= 0.0) || !config.rate.is_finite() {
            return Err(Error::InvalidParameter(format!("rate {} must be non-negative", config.rate)));
        }
        if config.record.stride == 0 {
            return Err(Error::InvalidParameter("record stride must be at least 1".into()));
        }
        let h = system_hamiltonian_matrix::<f64>(d, &config.system)?;
        let a = lowering_matrix::<f64>(d);
        let root_rate = Complex::new(config.rate.sqrt(), 0.0);
        let jumps: Vec<(f64, DenseMatrix<f64>)> = match config.detection {
            McwfDetection::Photodetection => {
                let scale = config.dt * (config.rate + drive_strength(&config.system));
                if scale > 0.1 {
                    return Err(Error::StepTooCoarse(format!(
                        "Δt(γ + Ω) = {scale} exceeds 0.1"
                    )));
                }
                vec![(1.0, a.scale(root_rate))]
            }
            McwfDetection::Homodyne { alpha, theta } => {
                if !(alpha >= 0.0) || !alpha.is_finite() || !theta.is_finite() {
                    return Err(Error::InvalidParameter("homodyne amplitude must be finite and non-negative".into()));
                }
                let lo = DenseMatrix::identity(d).scale(Complex::from_polar(alpha, theta));
                let field = a.scale(root_rate * Complex::new(0.0, 1.0));
                let s = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                vec![(1.0, lo.sub(&field).scale(s)), (-1.0, lo.add(&field).scale(s))]
            }
        };
        let jump_products: Vec<DenseMatrix<f64>> = jumps.iter().map(|(_, j)| j.adjoint().matmul(j)).collect();
        let mut damping = DenseMatrix::zeros(d, d);
        for p in &jump_products {
            damping = damping.add(p);
        }
        let h_eff = h.sub(&damping.scale(Complex::new(0.0, 0.5)));
        let no_jump = h_eff.scale(Complex::new(0.0, -config.dt)).expm()?;
        let observables = config
            .record
            .observables
            .iter()
            .map(|o| o.matrix::<f64>(d))
            .collect::<Result<Vec<_>>>()?;
        let initial = config.initial.system_vector::<f64>(d)?;
        let fingerprint = {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for b in format!("{config:?}").bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h
        };
        Ok(Self {
            config,
            jumps,
            jump_products,
            no_jump,
            observables,
            initial,
            fingerprint,
        })
    }

    pub fn config(&self) -> &McwfConfig {
        &self.config
    }

    /// Jump probabilities `Δt⟨J†J⟩` for a normalized state.
    pub fn jump_probabilities(&self, psi: &[Cx<f64>]) -> Vec<f64> {
        self.jump_products
            .iter()
            .map(|p| {
                let v = p.matvec(psi);
                psi.iter().zip(&v).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * self.config.dt
            })
            .collect()
    }

    pub fn run_trajectory(&self, index: u64) -> Result<Trajectory> {
        let mut rng = trajectory_rng(self.config.master_seed, index);
        self.run_with(index, &mut rng)
    }

    fn run_with<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> Result<Trajectory> {
        let cfg = &self.config;
        let mut psi = self.initial.clone();
        let mut records = Vec::with_capacity(cfg.n_steps / cfg.record.stride);
        let mut outcomes = Vec::with_capacity(cfg.n_steps);
        let mut probs = Vec::with_capacity(self.jumps.len() + 1);
        for k in 1..=cfg.n_steps {
            psi = self.no_jump.matvec(&psi);
            normalize(&mut psi)?;
            let jump_p = self.jump_probabilities(&psi);
            let total: f64 = jump_p.iter().sum();
            if cfg.detection != McwfDetection::Photodetection && total > 0.5 {
                return Err(Error::StepTooCoarse(format!("jump probability {total} per step exceeds 0.5")));
            }
            if total > 1.0 {
                return Err(Error::StepTooCoarse(format!("jump probability {total} per step exceeds 1")));
            }
            probs.clear();
            probs.push(1.0 - total);
            probs.extend_from_slice(&jump_p);
            let choice = sample_outcome(&probs, rng)?;
            let (label, eigenvalue) = if choice == 0 {
                (0, 0.0)
            } else {
                let (value, j) = &self.jumps[choice - 1];
                psi = j.matvec(&psi);
                normalize(&mut psi)?;
                (*value as i32, *value)
            };
            outcomes.push(eigenvalue);
            if k % cfg.record.stride == 0 {
                let rho = DensityMatrix::pure(&psi);
                let keep_density = cfg.record.density_stride > 0 && k % cfg.record.density_stride == 0;
                records.push(StepRecord {
                    step: k,
                    time: k as f64 * cfg.dt,
                    outcome: MeasurementOutcome {
                        label,
                        eigenvalue,
                        probability: probs[choice],
                    },
                    expectations: self.observables.iter().map(|o| rho.expect(o).re).collect(),
                    purity: 1.0,
                    density: keep_density.then_some(rho),
                    norm_drift: 0.0,
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

impl TrajectorySource for Mcwf {
    fn run(&self, index: u64) -> Result<Trajectory> {
        self.run_trajectory(index)
    }

    fn observables(&self) -> &[Observable] {
        &self.config.record.observables
    }

    fn record_times(&self) -> Vec<f64> {
        (1..=self.config.n_steps)
            .filter(|k| k % self.config.record.stride == 0)
            .map(|k| k as f64 * self.config.dt)
            .collect()
    }

    fn dt(&self) -> f64 {
        self.config.dt
    }
}

/// Photodetection unraveling of `config` (its detection field is overridden).
pub fn mcwf_photodetection(config: McwfConfig) -> Result<Mcwf> {
    Mcwf::new(McwfConfig {
        detection: McwfDetection::Photodetection,
        ..config
    })
}

/// Homodyne unraveling with local-oscillator amplitude `α` and phase `θ`.
pub fn mcwf_homodyne(config: McwfConfig, alpha: f64, theta: f64) -> Result<Mcwf> {
    Mcwf::new(McwfConfig {
        detection: McwfDetection::Homodyne { alpha, theta },
        ..config
    })
}
