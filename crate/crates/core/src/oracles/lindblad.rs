//! Dense Lindblad master-equation solver and the model builders used as
//! references for the collision engine.

use crate::dense::DenseMatrix;
use crate::engine::InitialState;
use crate::error::{Error, Result};
use crate::model::{lowering_matrix, system_hamiltonian_matrix, SystemHamiltonianSpec};
use crate::ode::Dopri5;
use crate::scalar::Cx;
use crate::sparse::SparseOperator;
use crate::state::DensityMatrix;

/// Trace and positivity tolerance on every returned state.
pub const LINDBLAD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LindbladSpec {
    pub hamiltonian: SparseOperator<f64>,
    pub collapse: Vec<SparseOperator<f64>>,
    pub initial: DensityMatrix<f64>,
    /// Output times, non-decreasing and non-negative.
    pub times: Vec<f64>,
}

impl LindbladSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.hamiltonian.dim();
        for op in self.collapse.iter().map(|c| c.dim()).chain([self.initial.dim()]) {
            if op != d {
                return Err(Error::DimensionMismatch { expected: d, found: op });
            }
        }
        self.initial.validate(1e-10, 1e-9)?;
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("output times must be non-negative and sorted".into()));
        }
        Ok(())
    }
}

/// `ρ(t)` at each requested time, by adaptive Dormand–Prince on the dense matrix.
pub fn lindblad_solve(spec: &LindbladSpec) -> Result<Vec<DensityMatrix<f64>>> {
    spec.validate()?;
    let d = spec.hamiltonian.dim();
    let h = spec.hamiltonian.to_dense();
    let ls: Vec<DenseMatrix<f64>> = spec.collapse.iter().map(|l| l.to_dense()).collect();
    let lds: Vec<DenseMatrix<f64>> = ls.iter().map(|l| l.adjoint()).collect();
    let mut damping = DenseMatrix::zeros(d, d);
    for (l, ld) in ls.iter().zip(&lds) {
        damping = damping.add(&ld.matmul(l));
    }
    // H_eff = H − (i/2) Σ L†L;  dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ L ρ L†
    let h_eff = h.sub(&damping.scale(Cx::new(0.0, 0.5)));
    let h_eff_adj = h_eff.adjoint();
    let minus_i = Cx::new(0.0, -1.0);
    let rhs = |x: &[Cx<f64>], dx: &mut [Cx<f64>]| {
        let rho = DenseMatrix::from_row_major(d, d, x.to_vec());
        let mut out = h_eff.matmul(&rho).sub(&rho.matmul(&h_eff_adj)).scale(minus_i);
        for (l, ld) in ls.iter().zip(&lds) {
            out = out.add(&l.matmul(&rho).matmul(ld));
        }
        dx.copy_from_slice(out.as_slice());
    };
    let mut y = spec.initial.matrix().as_slice().to_vec();
    let mut ode = Dopri5::new(d * d);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(spec.times.len());
    for &target in &spec.times {
        if target > t {
            ode.integrate(&mut y, target - t, 1e-11, 1e-12, 1_000_000, rhs)?;
            t = target;
        }
        let m = DenseMatrix::from_row_major(d, d, y.clone());
        let herm = m.add(&m.adjoint()).scale(Cx::new(0.5, 0.0));
        let rho = DensityMatrix::new_unchecked(herm);
        if (rho.trace() - 1.0).abs() > LINDBLAD_TOLERANCE {
            return Err(Error::Propagation(format!("trace drifted to {}", rho.trace())));
        }
        if !rho.matrix().is_positive_semidefinite(LINDBLAD_TOLERANCE) {
            return Err(Error::Propagation(format!("state at t = {target} lost positivity")));
        }
        out.push(rho);
    }
    Ok(out)
}

/// Single-port Markovian emitter: collapse `√rate · a` on the `system_dim` system.
pub fn markovian_spec(
    system_dim: usize,
    system: &SystemHamiltonianSpec,
    rate: f64,
    initial: &InitialState,
    times: Vec<f64>,
) -> Result<LindbladSpec> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("decay rate {rate} must be non-negative")));
    }
    let h = SparseOperator::from_dense(&system_hamiltonian_matrix::<f64>(system_dim, system)?)?;
    let a = SparseOperator::from_dense(&lowering_matrix::<f64>(system_dim))?.scale(Cx::new(rate.sqrt(), 0.0));
    let psi = initial.system_vector::<f64>(system_dim)?;
    Ok(LindbladSpec {
        hamiltonian: h,
        collapse: vec![a],
        initial: DensityMatrix::pure(&psi),
        times,
    })
}

/// Both ports of a two-point coupling acting independently (no loop): collapse `√(2γ) a`.
pub fn two_port_spec(
    system_dim: usize,
    system: &SystemHamiltonianSpec,
    rate_per_port: f64,
    initial: &InitialState,
    times: Vec<f64>,
) -> Result<LindbladSpec> {
    markovian_spec(system_dim, system, 2.0 * rate_per_port, initial, times)
}

/// Pseudomode coupling for the exponential memory profile with rate `γ` and memory rate `λ`.
///
/// The profile's memory kernel is `(γλ/2) e^{−λτ}`, reproduced by a cavity mode
/// with coupling `g = √(γλ/2)` and field decay `κ_c = 2λ`.
pub fn pseudomode_parameters(rate: f64, memory_rate: f64) -> Result<(f64, f64)> {
    if !(rate > 0.0 && memory_rate > 0.0) || !rate.is_finite() || !memory_rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "pseudomode needs positive rates, got γ = {rate}, λ = {memory_rate}"
        )));
    }
    Ok(((rate * memory_rate / 2.0).sqrt(), 2.0 * memory_rate))
}

/// Driven qubit ⊗ damped cavity: `H = Ω σ_x ⊗ I + g(σ⁺c + σ⁻c†)`, collapse `√κ_c c`,
/// initial state `|e⟩ ⊗ |0⟩`. The qubit is the slow index.
pub fn jc_pseudomode(rate: f64, memory_rate: f64, omega: f64, cavity_dim: usize, times: Vec<f64>) -> Result<LindbladSpec> {
    if cavity_dim < 2 {
        return Err(Error::InvalidParameter(format!("cavity truncation {cavity_dim} must be at least 2")));
    }
    let (g, kappa) = pseudomode_parameters(rate, memory_rate)?;
    let sm = lowering_matrix::<f64>(2);
    let c = lowering_matrix::<f64>(cavity_dim);
    let iq = DenseMatrix::<f64>::identity(2);
    let ic = DenseMatrix::<f64>::identity(cavity_dim);
    let drive = sm.add(&sm.adjoint()).scale(Cx::new(omega, 0.0)).kron(&ic);
    let exchange = sm.adjoint().kron(&c);
    let h = drive.add(&exchange.add(&exchange.adjoint()).scale(Cx::new(g, 0.0)));
    let l = iq.kron(&c).scale(Cx::new(kappa.sqrt(), 0.0));
    let mut psi = vec![Cx::new(0.0, 0.0); 2 * cavity_dim];
    psi[cavity_dim] = Cx::new(1.0, 0.0);
    Ok(LindbladSpec {
        hamiltonian: SparseOperator::from_dense(&h)?,
        collapse: vec![SparseOperator::from_dense(&l)?],
        initial: DensityMatrix::pure(&psi),
        times,
    })
}

/// Excited-state population of the qubit factor of a qubit ⊗ cavity state.
pub fn qubit_excited_population(rho: &DensityMatrix<f64>, cavity_dim: usize) -> f64 {
    (0..cavity_dim).map(|n| rho.matrix()[(cavity_dim + n, cavity_dim + n)].re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_decay_is_exponential() {
        let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
        let spec = markovian_spec(2, &SystemHamiltonianSpec::None, 1.3, &InitialState::Excited, times.clone()).unwrap();
        let out = lindblad_solve(&spec).unwrap();
        for (t, rho) in times.iter().zip(&out) {
            assert!((rho.matrix()[(1, 1)].re - (-1.3 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn unitary_limit_is_rabi() {
        let spec = LindbladSpec {
            collapse: vec![],
            ..markovian_spec(2, &SystemHamiltonianSpec::DrivenQubit { omega: 0.8 }, 0.0, &InitialState::Ground, vec![1.1])
                .unwrap()
        };
        let rho = &lindblad_solve(&spec).unwrap()[0];
        assert!((rho.matrix()[(1, 1)].re - (0.8f64 * 1.1).sin().powi(2)).abs() < 1e-9);
        assert!((rho.purity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pseudomode_builder_rejects_bad_input() {
        assert!(jc_pseudomode(1.0, 0.0, 1.0, 2, vec![]).is_err());
        assert!(jc_pseudomode(1.0, 1.0, 1.0, 1, vec![]).is_err());
        let spec = jc_pseudomode(1.0, 1.0, 1.0, 3, vec![0.0]).unwrap();
        assert_eq!(spec.hamiltonian.dim(), 6);
        assert!((qubit_excited_population(&spec.initial, 3) - 1.0).abs() < 1e-15);
    }
}
