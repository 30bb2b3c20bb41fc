//! One-interval evolution `|ψ⟩ → e^{−iHΔt}|ψ⟩` under a sparse Hermitian Hamiltonian.
//!
//! Three interchangeable methods: adaptive Dormand–Prince on the Schrödinger
//! equation (default), a Lanczos–Krylov exponential, and a cached dense
//! exponential for small spaces. None of them renormalizes; norm drift is left
//! visible as a health metric.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dense::{symmetric_tridiagonal_eigen, DenseMatrix};
use crate::error::{Error, Result};
use crate::ode::Dopri5;
use crate::scalar::{all_finite, czero, inner, norm_sqr, Cx, Real};
use crate::sparse::SparseOperator;
use crate::state::PureState;

/// Largest dimension accepted by [`Method::DenseExponential`].
pub const DENSE_EXPONENTIAL_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    AdaptiveRk,
    Krylov,
    DenseExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    pub method: Method,
    pub tolerance: f64,
    pub max_substeps: usize,
    /// Largest Lanczos subspace before the Krylov method halves its substep.
    pub krylov_dim: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk,
            tolerance: 1e-10,
            max_substeps: 100_000,
            krylov_dim: 30,
        }
    }
}

impl PropagatorConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(Error::InvalidParameter(format!(
                "propagator tolerance {} outside (0, 1e-4]",
                self.tolerance
            )));
        }
        if self.max_substeps == 0 {
            return Err(Error::InvalidParameter("max_substeps must be positive".into()));
        }
        if self.krylov_dim < 2 {
            return Err(Error::InvalidParameter("krylov_dim must be at least 2".into()));
        }
        Ok(())
    }
}

/// A Hamiltonian and step prepared for repeated application.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    h: SparseOperator<T>,
    dt: T,
    config: PropagatorConfig,
    dense: Option<DenseMatrix<T>>,
}

/// Per-thread scratch space for [`Propagator::apply`].
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    ode: Dopri5<T>,
    krylov: Vec<Vec<Cx<T>>>,
    scratch: Vec<Cx<T>>,
    krylov_tau: Option<T>,
    krylov_m: usize,
    substeps: usize,
}

impl<T: Real> Workspace<T> {
    /// Substeps (accepted RK steps or Krylov sub-intervals) used by the last call.
    pub fn last_substeps(&self) -> usize {
        self.substeps
    }
}

impl<T: Real> Propagator<T> {
    pub fn new(h: SparseOperator<T>, dt: f64, config: PropagatorConfig) -> Result<Self> {
        config.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        let scale = h.norm_inf().max(T::one());
        if !h.is_hermitian(T::tolerance(1e-12) * scale) {
            return Err(Error::Precondition("Hamiltonian is not Hermitian".into()));
        }
        let dt = T::of(dt);
        let dense = if config.method == Method::DenseExponential {
            if h.dim() > DENSE_EXPONENTIAL_LIMIT {
                return Err(Error::Capacity {
                    dim: h.dim(),
                    limit: DENSE_EXPONENTIAL_LIMIT,
                });
            }
            let u = h.to_dense().scale(Complex::new(T::zero(), -dt)).expm()?;
            Some(u)
        } else {
            None
        };
        Ok(Self {
            h,
            dt,
            config,
            dense,
        })
    }

    pub fn hamiltonian(&self) -> &SparseOperator<T> {
        &self.h
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn workspace(&self) -> Workspace<T> {
        let n = self.h.dim();
        Workspace {
            ode: Dopri5::new(if self.config.method == Method::AdaptiveRk { n } else { 0 }),
            krylov: Vec::new(),
            scratch: vec![czero(); n],
            krylov_tau: None,
            krylov_m: 0,
            substeps: 0,
        }
    }

    /// Replaces `psi` by `e^{−iHΔt} psi`.
    pub fn apply(&self, psi: &mut [Cx<T>], ws: &mut Workspace<T>) -> Result<()> {
        if psi.len() != self.h.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.h.dim(),
                found: psi.len(),
            });
        }
        if !all_finite(psi) {
            return Err(Error::Propagation("non-finite input amplitude".into()));
        }
        match self.config.method {
            Method::AdaptiveRk => {
                let tol = T::tolerance(self.config.tolerance);
                let h = &self.h;
                let minus_i = Complex::new(T::zero(), -T::one());
                ws.substeps = ws.ode.integrate(psi, self.dt, tol, tol, self.config.max_substeps, |x, dx| {
                    h.apply(x, dx);
                    for v in dx.iter_mut() {
                        *v = *v * minus_i;
                    }
                })?;
            }
            Method::Krylov => self.apply_krylov(psi, ws)?,
            Method::DenseExponential => {
                let u = self.dense.as_ref().expect("dense propagator prepared in new");
                u.matvec_into(psi, &mut ws.scratch);
                psi.copy_from_slice(&ws.scratch);
                ws.substeps = 1;
                if !all_finite(psi) {
                    return Err(Error::Propagation("non-finite amplitude encountered".into()));
                }
            }
        }
        Ok(())
    }

    fn apply_krylov(&self, psi: &mut [Cx<T>], ws: &mut Workspace<T>) -> Result<()> {
        let n = psi.len();
        let mmax = self.config.krylov_dim.min(n.max(1));
        if ws.krylov.len() < mmax + 1 {
            ws.krylov = vec![vec![czero(); n]; mmax + 1];
        }
        let tol = T::tolerance(self.config.tolerance);
        let mut remaining = self.dt;
        let mut tau = ws.krylov_tau.unwrap_or(self.dt).min(self.dt);
        let mut substeps = 0usize;
        let mut attempts = 0usize;
        let mut alphas: Vec<T> = Vec::with_capacity(mmax);
        let mut betas: Vec<T> = Vec::with_capacity(mmax);
        while remaining > T::zero() {
            attempts += 1;
            if attempts > self.config.max_substeps {
                return Err(Error::Propagation(format!(
                    "Krylov propagation did not converge within {} substeps",
                    self.config.max_substeps
                )));
            }
            let last = remaining <= tau * T::of(1.0 + 1e-12);
            if last {
                tau = remaining;
            }
            let beta = norm_sqr(psi).sqrt();
            if beta == T::zero() {
                return Ok(());
            }
            for (v, p) in ws.krylov[0].iter_mut().zip(psi.iter()) {
                *v = *p / beta;
            }
            alphas.clear();
            betas.clear();
            let mut coeffs: Option<Vec<Cx<T>>> = None;
            let check_from = ws.krylov_m.saturating_sub(2).max(1);
            for j in 0..mmax {
                {
                    let (head, tail) = ws.krylov.split_at_mut(j + 1);
                    let w = &mut tail[0];
                    self.h.apply(&head[j], w);
                    let alpha = inner(&head[j], w).re;
                    alphas.push(alpha);
                    for (wi, vi) in w.iter_mut().zip(head[j].iter()) {
                        *wi = *wi - *vi * alpha;
                    }
                    if j > 0 {
                        let b = betas[j - 1];
                        for (wi, vi) in w.iter_mut().zip(head[j - 1].iter()) {
                            *wi = *wi - *vi * b;
                        }
                    }
                    // full reorthogonalization; the basis is small
                    for v in head.iter() {
                        let c = inner(v, w);
                        for (wi, vi) in w.iter_mut().zip(v.iter()) {
                            *wi = *wi - *vi * c;
                        }
                    }
                    if !all_finite(w) {
                        return Err(Error::Propagation("non-finite Krylov vector".into()));
                    }
                }
                let b_next = norm_sqr(&ws.krylov[j + 1]).sqrt();
                let invariant = b_next <= T::epsilon() * T::of(64.0) * (alphas[j].abs() + T::one());
                if invariant || j + 1 >= check_from || j + 1 == mmax {
                    let y = small_exponential(&alphas, &betas, tau)?;
                    let err = b_next * y[j].norm();
                    if invariant || err <= tol {
                        coeffs = Some(y);
                        break;
                    }
                }
                if j + 1 < mmax {
                    let inv = T::one() / b_next;
                    for v in ws.krylov[j + 1].iter_mut() {
                        *v = *v * inv;
                    }
                    betas.push(b_next);
                }
            }
            match coeffs {
                Some(y) => {
                    let m = y.len();
                    for p in psi.iter_mut() {
                        *p = czero();
                    }
                    for (k, yk) in y.iter().enumerate() {
                        let s = *yk * beta;
                        for (p, v) in psi.iter_mut().zip(ws.krylov[k].iter()) {
                            *p = *p + *v * s;
                        }
                    }
                    if !all_finite(psi) {
                        return Err(Error::Propagation("non-finite amplitude encountered".into()));
                    }
                    substeps += 1;
                    remaining = if last { T::zero() } else { remaining - tau };
                    ws.krylov_m = m;
                    if !last {
                        ws.krylov_tau = Some(tau);
                        if m + 2 < mmax {
                            tau = tau * T::of(1.5);
                        }
                    } else if ws.krylov_tau.is_none() {
                        ws.krylov_tau = Some(tau);
                    }
                }
                None => {
                    tau = tau * T::of(0.5);
                    ws.krylov_tau = Some(tau);
                    ws.krylov_m = mmax;
                }
            }
        }
        ws.substeps = substeps;
        Ok(())
    }
}

/// First column of `exp(−iτT)` for the symmetric tridiagonal `T`.
fn small_exponential<T: Real>(alphas: &[T], betas: &[T], tau: T) -> Result<Vec<Cx<T>>> {
    let m = alphas.len();
    let (evals, evecs) = symmetric_tridiagonal_eigen(alphas, &betas[..m - 1])?;
    let mut y = vec![czero::<T>(); m];
    for k in 0..m {
        let phase = Complex::new(T::zero(), -tau * evals[k]).exp() * evecs[k];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = *yi + phase * evecs[i * m + k];
        }
    }
    Ok(y)
}

/// Evolves a normalized state for one interval `dt`.
pub fn evolve<T: Real>(
    state: &PureState<T>,
    h: &SparseOperator<T>,
    dt: f64,
    config: &PropagatorConfig,
) -> Result<PureState<T>> {
    if !state.is_normalized() {
        return Err(Error::NotNormalized((state.norm_sqr() - T::one()).abs().to64()));
    }
    let prop = Propagator::new(h.clone(), dt, config.clone())?;
    let mut ws = prop.workspace();
    let mut out = state.clone();
    prop.apply(out.amplitudes_mut(), &mut ws)?;
    Ok(out)
}
