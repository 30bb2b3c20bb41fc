//! Pure states over an enumerated basis and reduced system density matrices.

use std::sync::Arc;

use num_complex::Complex;

use crate::basis::{BasisEnumeration, OccupationState};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::{czero, inner, norm_sqr, Cx, Real};
use crate::sparse::SparseOperator;

/// Tolerance on `|‖ψ‖² − 1|` for states treated as normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PureState<T> {
    amplitudes: Vec<Cx<T>>,
    basis: Arc<BasisEnumeration>,
}

impl<T: Real> PureState<T> {
    pub fn zeros(basis: Arc<BasisEnumeration>) -> Self {
        Self {
            amplitudes: vec![czero(); basis.dim()],
            basis,
        }
    }

    pub fn basis_state(basis: Arc<BasisEnumeration>, occ: &OccupationState) -> Result<Self> {
        let idx = basis.index_of(occ)?;
        let mut state = Self::zeros(basis);
        state.amplitudes[idx] = Complex::new(T::one(), T::zero());
        Ok(state)
    }

    /// `|ψ_S⟩ ⊗ |vac⟩` for a system state given in the `d_S`-dimensional basis.
    pub fn product_with_vacuum(basis: Arc<BasisEnumeration>, system: &[Cx<T>]) -> Result<Self> {
        let ds = basis.layout().system_dim;
        if system.len() != ds {
            return Err(Error::DimensionMismatch {
                expected: ds,
                found: system.len(),
            });
        }
        let mut state = Self::zeros(basis);
        for (s, &amp) in system.iter().enumerate() {
            let i = state.basis.index(s, 0, 0);
            state.amplitudes[i] = amp;
        }
        Ok(state)
    }

    pub fn from_amplitudes(basis: Arc<BasisEnumeration>, amplitudes: Vec<Cx<T>>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { amplitudes, basis })
    }

    pub fn amplitudes(&self) -> &[Cx<T>] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Cx<T>] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Cx<T>> {
        self.amplitudes
    }

    pub fn basis(&self) -> &Arc<BasisEnumeration> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.amplitudes)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - T::one()).abs() <= T::tolerance(NORM_TOLERANCE)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::NotNormalized(n.to64()));
        }
        let inv = T::one() / n;
        for a in &mut self.amplitudes {
            *a = *a * inv;
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Cx<T> {
        inner(&self.amplitudes, &other.amplitudes)
    }
}

/// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expectation<T: Real>(state: &PureState<T>, op: &SparseOperator<T>) -> Result<Cx<T>> {
    let applied = op.apply_checked(state.amplitudes())?;
    let norm = state.norm_sqr();
    if !(norm > T::zero()) {
        return Err(Error::NotNormalized(0.0));
    }
    Ok(inner(state.amplitudes(), &applied) / norm)
}

/// Reduced state of the system factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    matrix: DenseMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn new(matrix: DenseMatrix<T>) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate(T::tolerance(1e-10), T::tolerance(1e-9))?;
        Ok(rho)
    }

    pub fn new_unchecked(matrix: DenseMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn pure(psi: &[Cx<T>]) -> Self {
        let n = psi.len();
        Self {
            matrix: DenseMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()),
        }
    }

    pub fn validate(&self, hermitian_tol: T, trace_tol: T) -> Result<()> {
        if !self.matrix.is_hermitian(hermitian_tol) {
            return Err(Error::Precondition("density matrix is not Hermitian".into()));
        }
        let tr = self.matrix.trace();
        if (tr.re - T::one()).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::Precondition(format!("density matrix trace {} != 1", tr.re)));
        }
        if !self.matrix.is_positive_semidefinite(hermitian_tol) {
            return Err(Error::Precondition("density matrix has a negative eigenvalue".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> T {
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    /// `tr(ρ O)`.
    pub fn expect(&self, op: &DenseMatrix<T>) -> Cx<T> {
        let n = self.dim();
        let mut acc = czero();
        for i in 0..n {
            for j in 0..n {
                acc = acc + self.matrix[(i, j)] * op[(j, i)];
            }
        }
        acc
    }

    pub fn to_f64(&self) -> DensityMatrix<f64> {
        let n = self.dim();
        DensityMatrix {
            matrix: DenseMatrix::from_fn(n, n, |i, j| {
                let z = self.matrix[(i, j)];
                Complex::new(z.re.to64(), z.im.to64())
            }),
        }
    }
}

/// Reduced density matrix of the system, tracing out environment and local oscillator.
pub fn partial_trace_system<T: Real>(state: &PureState<T>) -> Result<DensityMatrix<T>> {
    let norm = state.norm_sqr();
    if (norm - T::one()).abs() > T::tolerance(NORM_TOLERANCE) {
        return Err(Error::NotNormalized((norm - T::one()).abs().to64()));
    }
    Ok(reduce_to_system(state.amplitudes(), state.basis().layout().system_dim))
}

/// `ρ_S = Ψ Ψ†` where `Ψ` is the amplitude vector viewed as a `d_S × rest` matrix.
pub(crate) fn reduce_to_system<T: Real>(amplitudes: &[Cx<T>], ds: usize) -> DensityMatrix<T> {
    let stride = amplitudes.len() / ds;
    let mut m = DenseMatrix::zeros(ds, ds);
    for i in 0..ds {
        let row_i = &amplitudes[i * stride..(i + 1) * stride];
        for j in 0..=i {
            let row_j = &amplitudes[j * stride..(j + 1) * stride];
            let v = row_i
                .iter()
                .zip(row_j)
                .fold(czero::<T>(), |acc, (a, b)| acc + a * b.conj());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    DensityMatrix::new_unchecked(m)
}
