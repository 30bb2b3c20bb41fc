//! Coupling profiles, the position-dependent interaction Hamiltonian, system
//! Hamiltonians and spectral diagnostics of a coupling profile.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::basis::BasisEnumeration;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::{czero, Cx, Real};
use crate::sparse::SparseOperator;

/// How the system couples to the environment chain.
///
/// Rates are stored as rates; the coupling amplitude at an active site is `√rate`
/// so that `|γ_n|²` carries units of a rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingVariant {
    /// Single coupling point at site 0 (Markovian).
    Point { rate: f64 },
    /// Sites 0 and `delay_steps`, with phase `e^{iφ}` on site 0.
    TwoPointFeedback {
        rate: f64,
        phase: f64,
        delay_steps: usize,
    },
    /// `γ_n = √γ λ Δt e^{−λ n Δt}` on every site.
    Exponential { rate: f64, memory_rate: f64 },
    /// Explicit `[re, im]` amplitudes per site.
    Raw { gammas: Vec<[f64; 2]> },
}

impl CouplingVariant {
    /// Shortest chain that can hold the profile, if the variant implies one.
    pub fn minimal_env_count(&self) -> Option<usize> {
        match self {
            CouplingVariant::Point { .. } => Some(1),
            CouplingVariant::TwoPointFeedback { delay_steps, .. } => Some(delay_steps + 1),
            CouplingVariant::Exponential { .. } => None,
            CouplingVariant::Raw { gammas } => Some(gammas.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingProfile<T> {
    pub variant: CouplingVariant,
    gammas: Vec<Cx<T>>,
}

impl<T: Real> CouplingProfile<T> {
    pub fn gammas(&self) -> &[Cx<T>] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Same couplings on a longer chain, with the extra sites decoupled.
    pub fn zero_padded(&self, total: usize) -> Self {
        let mut gammas = self.gammas.clone();
        if total > gammas.len() {
            gammas.resize(total, czero());
        }
        Self {
            variant: self.variant.clone(),
            gammas,
        }
    }

    /// Distance between the first and last coupled sites.
    pub fn support_span(&self) -> usize {
        let nz = |g: &Cx<T>| g.re != T::zero() || g.im != T::zero();
        match (self.gammas.iter().position(nz), self.gammas.iter().rposition(nz)) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// `Σ_n |γ_n|²`.
    pub fn total_strength(&self) -> T {
        self.gammas.iter().map(|g| g.norm_sqr()).sum()
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be a finite non-negative rate, got {v}")));
    }
    Ok(())
}

pub fn build_coupling<T: Real>(variant: &CouplingVariant, env_count: usize, dt: f64) -> Result<CouplingProfile<T>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if env_count == 0 {
        return Err(Error::InvalidParameter("coupling profile needs at least one site".into()));
    }
    let mut gammas = vec![czero::<T>(); env_count];
    match *variant {
        CouplingVariant::Point { rate } => {
            check_rate("rate", rate)?;
            gammas[0] = Complex::new(T::of(rate.sqrt()), T::zero());
        }
        CouplingVariant::TwoPointFeedback {
            rate,
            phase,
            delay_steps,
        } => {
            check_rate("rate", rate)?;
            if !phase.is_finite() {
                return Err(Error::InvalidParameter("feedback phase must be finite".into()));
            }
            if delay_steps == 0 || delay_steps >= env_count {
                return Err(Error::InvalidParameter(format!(
                    "feedback delay of {delay_steps} steps needs 0 < M < N = {env_count}"
                )));
            }
            let amp = rate.sqrt();
            gammas[0] = Complex::from_polar(T::of(amp), T::of(phase));
            gammas[delay_steps] = Complex::new(T::of(amp), T::zero());
        }
        CouplingVariant::Exponential { rate, memory_rate } => {
            check_rate("rate", rate)?;
            if !(memory_rate > 0.0) || !memory_rate.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "memory rate must be positive, got {memory_rate}"
                )));
            }
            let scale = rate.sqrt() * memory_rate * dt;
            for (n, g) in gammas.iter_mut().enumerate() {
                *g = Complex::new(T::of(scale * (-memory_rate * n as f64 * dt).exp()), T::zero());
            }
        }
        CouplingVariant::Raw { gammas: ref raw } => {
            if raw.len() != env_count {
                return Err(Error::DimensionMismatch {
                    expected: env_count,
                    found: raw.len(),
                });
            }
            for (g, [re, im]) in gammas.iter_mut().zip(raw) {
                if !re.is_finite() || !im.is_finite() {
                    return Err(Error::InvalidParameter("raw coupling amplitudes must be finite".into()));
                }
                *g = Complex::new(T::of(*re), T::of(*im));
            }
        }
    }
    Ok(CouplingProfile {
        variant: variant.clone(),
        gammas,
    })
}

/// `H_I = Δt^{-1/2} Σ_n (γ_n a† B_n + γ_n* B_n† a)` on the full space.
pub fn build_interaction<T: Real>(
    basis: &BasisEnumeration,
    profile: &CouplingProfile<T>,
    dt: f64,
) -> Result<SparseOperator<T>> {
    let layout = basis.layout();
    if profile.len() != layout.env_count {
        return Err(Error::DimensionMismatch {
            expected: layout.env_count,
            found: profile.len(),
        });
    }
    let inv_sqrt_dt = T::of(1.0 / dt.sqrt());
    let (ds, lo) = (layout.system_dim, basis.lo_block());
    let mut entries = Vec::new();
    let mut reduced = Vec::with_capacity(layout.env_cap);
    for e in 0..basis.env_block() {
        let sites = basis.env_sites(e);
        for &site in sites {
            let g = profile.gammas[site as usize];
            if g.re == T::zero() && g.im == T::zero() {
                continue;
            }
            reduced.clear();
            reduced.extend(sites.iter().copied().filter(|&p| p != site));
            let target = basis.env_rank(&reduced).expect("removing a site stays inside the block");
            // a† B_n : (s, e, l) -> (s+1, e∖{n}, l)
            for s in 0..ds.saturating_sub(1) {
                let amp = g * inv_sqrt_dt * T::of(((s + 1) as f64).sqrt());
                for l in 0..lo {
                    let from = basis.index(s, e, l);
                    let to = basis.index(s + 1, target, l);
                    entries.push((to, from, amp));
                    entries.push((from, to, amp.conj()));
                }
            }
        }
    }
    SparseOperator::from_triplets(basis.dim(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemHamiltonianSpec {
    None,
    /// `Ω (a† + a)` in the frame rotating at the system frequency.
    DrivenQubit { omega: f64 },
    /// `i ζ (a†² − a²)`.
    Squeezer { zeta: f64 },
}

impl Default for SystemHamiltonianSpec {
    fn default() -> Self {
        SystemHamiltonianSpec::None
    }
}

/// Truncated lowering operator on a `d`-level system.
pub fn lowering_matrix<T: Real>(d: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            Complex::new(T::of((j as f64).sqrt()), T::zero())
        } else {
            czero()
        }
    })
}

/// System Hamiltonian on the `d_S`-dimensional system factor alone.
pub fn system_hamiltonian_matrix<T: Real>(system_dim: usize, spec: &SystemHamiltonianSpec) -> Result<DenseMatrix<T>> {
    let a = lowering_matrix::<T>(system_dim);
    let ad = a.adjoint();
    match *spec {
        SystemHamiltonianSpec::None => Ok(DenseMatrix::zeros(system_dim, system_dim)),
        SystemHamiltonianSpec::DrivenQubit { omega } => {
            if !omega.is_finite() {
                return Err(Error::InvalidParameter("drive strength must be finite".into()));
            }
            Ok(ad.add(&a).scale(Complex::new(T::of(omega), T::zero())))
        }
        SystemHamiltonianSpec::Squeezer { zeta } => {
            if !zeta.is_finite() {
                return Err(Error::InvalidParameter("squeezing rate must be finite".into()));
            }
            if system_dim < 3 {
                return Err(Error::InvalidParameter(format!(
                    "squeezer needs a system dimension of at least 3, got {system_dim}"
                )));
            }
            let two_photon = ad.matmul(&ad).sub(&a.matmul(&a));
            Ok(two_photon.scale(Complex::new(T::zero(), T::of(zeta))))
        }
    }
}

pub fn build_system_h<T: Real>(basis: &BasisEnumeration, spec: &SystemHamiltonianSpec) -> Result<SparseOperator<T>> {
    let h = system_hamiltonian_matrix::<T>(basis.layout().system_dim, spec)?;
    basis.embed_system(&h)
}

/// Discrete spectrum `κ_k = L^{-1/2} Σ_n γ_n e^{i ω_k n Δt}` with `ω_k = 2πk/L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile<T> {
    pub omegas: Vec<T>,
    pub kappas: Vec<Cx<T>>,
    /// Chain length `L = N Δt` in time units.
    pub length: T,
    pub dt: T,
}

impl<T: Real> SpectralProfile<T> {
    /// Frequencies folded onto `(−π/Δt, π/Δt]`.
    pub fn symmetric_omegas(&self) -> Vec<T> {
        let n = self.omegas.len();
        (0..n).map(|k| symmetric_frequency(k, n, self.dt)).collect()
    }

    /// `L/(2π) |κ_k|²`, the spectral density sampled at `ω_k`.
    pub fn density(&self) -> Vec<T> {
        let f = self.length / (T::of(2.0) * T::PI());
        self.kappas.iter().map(|k| k.norm_sqr() * f).collect()
    }
}

/// `ω_k` with indices above `N/2` mapped to `ω_k − 2π/Δt`.
pub fn symmetric_frequency<T: Real>(k: usize, n: usize, dt: T) -> T {
    let two_pi = T::of(2.0) * T::PI();
    let length = dt * T::of(n as f64);
    let w = two_pi * T::of(k as f64) / length;
    if 2 * k > n {
        w - two_pi / dt
    } else {
        w
    }
}

pub fn coupling_spectrum<T: Real>(profile: &CouplingProfile<T>, dt: f64) -> Result<SpectralProfile<T>> {
    let n = profile.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty coupling profile".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let length = dt * n as f64;
    let norm = T::of(1.0 / length.sqrt());
    let mut omegas = Vec::with_capacity(n);
    let mut kappas = Vec::with_capacity(n);
    for k in 0..n {
        omegas.push(T::of(2.0 * std::f64::consts::PI * k as f64 / length));
        let mut acc = czero::<T>();
        for (site, g) in profile.gammas.iter().enumerate() {
            if g.re == T::zero() && g.im == T::zero() {
                continue;
            }
            // ω_k n Δt = 2π (k n mod N) / N, reduced exactly in integers
            let turns = ((k as u128 * site as u128) % n as u128) as f64 / n as f64;
            let phase = Complex::from_polar(T::one(), T::of(2.0 * std::f64::consts::PI * turns));
            acc = acc + g * phase;
        }
        kappas.push(acc * norm);
    }
    Ok(SpectralProfile {
        omegas,
        kappas,
        length: T::of(length),
        dt: T::of(dt),
    })
}

/// `J(ω) = (2π)^{-1} γ λ² / (λ² + ω²)`.
pub fn lorentzian_density<T: Real>(rate: T, memory_rate: T, omega: T) -> Result<T> {
    if !(memory_rate > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "memory rate must be positive, got {memory_rate}"
        )));
    }
    let l2 = memory_rate * memory_rate;
    Ok(rate * l2 / (T::of(2.0) * T::PI() * (l2 + omega * omega)))
}
