//! Measurement of the zeroth environment site, its reset to vacuum, and the
//! chain shift that brings the next site into position.
//!
//! Photodetection measures the site-0 occupation. Homodyne detection measures
//! `Q = C†B + B†C` on the site-0 qubit (`B`) together with a local oscillator
//! (`C`) prepared in a coherent state each step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisEnumeration, ModeLayout};
use crate::error::{Error, Result};
use crate::scalar::{czero, Cx, Real};
use crate::state::PureState;

/// Tolerance on the total outcome probability.
pub const PROBABILITY_TOLERANCE: f64 = 1e-8;
/// Largest weight allowed on site-0 excitations when the chain is shifted.
pub const SHIFT_TOLERANCE: f64 = 1e-10;
/// Largest coherent-state weight that truncation may discard.
pub const LEAKAGE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementScheme {
    Photodetection,
    /// Local oscillator amplitude `α` (square root of a rate), phase `θ`, and
    /// oscillator truncation `lo_dim`.
    Homodyne { alpha: f64, theta: f64, lo_dim: usize },
}

impl MeasurementScheme {
    pub fn lo_dim(&self) -> usize {
        match self {
            MeasurementScheme::Photodetection => 0,
            MeasurementScheme::Homodyne { lo_dim, .. } => *lo_dim,
        }
    }

    pub fn is_homodyne(&self) -> bool {
        matches!(self, MeasurementScheme::Homodyne { .. })
    }

    pub fn validate(&self, layout: &ModeLayout) -> Result<()> {
        match *self {
            MeasurementScheme::Photodetection if layout.lo_dim != 0 => Err(Error::InvalidLayout(
                "photodetection requires lo_dim = 0".into(),
            )),
            MeasurementScheme::Photodetection => Ok(()),
            MeasurementScheme::Homodyne { alpha, theta, lo_dim } => {
                if lo_dim < 2 || layout.lo_dim != lo_dim {
                    return Err(Error::InvalidLayout(format!(
                        "homodyne requires lo_dim >= 2 matching the layout (scheme {lo_dim}, layout {})",
                        layout.lo_dim
                    )));
                }
                if !(alpha >= 0.0) || !alpha.is_finite() || !theta.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "homodyne amplitude {alpha} and phase {theta} must be finite with alpha >= 0"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Coherent amplitude `β = α√Δt e^{iθ}` of the oscillator prepared each step.
    pub fn lo_amplitude(&self, dt: f64) -> Option<Cx<f64>> {
        match *self {
            MeasurementScheme::Photodetection => None,
            MeasurementScheme::Homodyne { alpha, theta, .. } => Some(Cx::from_polar(alpha * dt.sqrt(), theta)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    /// Click count (photodetection) or signed branch index `±n`, `0` for the null space (homodyne).
    pub label: i32,
    pub eigenvalue: f64,
    /// Born probability of this outcome before collapse.
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneBranch {
    pub n: usize,
    pub sign: i8,
    pub eigenvalue: f64,
    /// Coefficients on `|0, n⟩` and `|1, n−1⟩`.
    pub coefficients: [f64; 2],
}

/// Eigenvectors of `Q` on qubit ⊗ oscillator, with the oscillator truncated at `lo_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneEigensystem {
    lo_dim: usize,
    branches: Vec<HomodyneBranch>,
}

impl HomodyneEigensystem {
    pub fn lo_dim(&self) -> usize {
        self.lo_dim
    }

    /// `±√n` branches for `n = 1..lo_dim`, ordered `1+, 1−, 2+, …`.
    pub fn branches(&self) -> &[HomodyneBranch] {
        &self.branches
    }

    /// Null space of `Q`: the vacuum `|0,0⟩` and the truncation edge `|1, lo_dim−1⟩`,
    /// as `(qubit, oscillator)` occupations.
    pub fn zero_subspace(&self) -> [(usize, usize); 2] {
        [(0, 0), (1, self.lo_dim - 1)]
    }

    /// Total number of eigenvectors, `2·lo_dim`.
    pub fn len(&self) -> usize {
        self.branches.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Eigenvector `k` as a real vector indexed by `qubit·lo_dim + n`; the two
    /// null vectors come first, then the branches.
    pub fn vector(&self, k: usize) -> Option<(f64, Vec<f64>)> {
        let d = self.lo_dim;
        let mut v = vec![0.0; 2 * d];
        match k {
            0 => v[0] = 1.0,
            1 => v[d + d - 1] = 1.0,
            _ => {
                let b = self.branches.get(k - 2)?;
                v[b.n] = b.coefficients[0];
                v[d + b.n - 1] = b.coefficients[1];
                return Some((b.eigenvalue, v));
            }
        }
        Some((0.0, v))
    }
}

pub fn homodyne_eigensystem(lo_dim: usize) -> Result<HomodyneEigensystem> {
    if lo_dim < 2 {
        return Err(Error::InvalidParameter(format!("lo_dim {lo_dim} must be at least 2")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut branches = Vec::with_capacity(2 * (lo_dim - 1));
    for n in 1..lo_dim {
        let root = (n as f64).sqrt();
        for sign in [1i8, -1] {
            branches.push(HomodyneBranch {
                n,
                sign,
                eigenvalue: sign as f64 * root,
                coefficients: [s, sign as f64 * s],
            });
        }
    }
    Ok(HomodyneEigensystem { lo_dim, branches })
}

/// Truncated coherent state `∝ e^{−|β|²/2} βⁿ/√n!`, renormalized.
pub fn coherent_vector<T: Real>(beta: Cx<f64>, dim: usize) -> Result<Vec<Cx<T>>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("oscillator dimension must be positive".into()));
    }
    let mut c = Vec::with_capacity(dim);
    let mut term = Cx::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
    let mut kept = 0.0;
    for n in 0..dim {
        if n > 0 {
            term = term * beta / (n as f64).sqrt();
        }
        kept += term.norm_sqr();
        c.push(term);
    }
    let leakage = (1.0 - kept).max(0.0);
    if leakage > LEAKAGE_TOLERANCE {
        return Err(Error::Leakage(leakage));
    }
    let inv = 1.0 / kept.sqrt();
    Ok(c.into_iter()
        .map(|z| Cx::new(T::of(z.re * inv), T::of(z.im * inv)))
        .collect())
}

/// Replaces the local-oscillator factor (assumed vacuum) by the coherent state `β`.
pub fn prepare_lo<T: Real>(state: &PureState<T>, beta: Cx<f64>) -> Result<PureState<T>> {
    let basis = state.basis();
    let d = basis.lo_block();
    if !basis.layout().has_lo() {
        return Err(Error::InvalidLayout("layout has no local oscillator".into()));
    }
    let coh = coherent_vector::<T>(beta, d)?;
    let amps = state.amplitudes();
    let off_vacuum: f64 = amps
        .iter()
        .enumerate()
        .filter(|(i, _)| i % d != 0)
        .map(|(_, z)| z.norm_sqr().to64())
        .sum();
    if off_vacuum > SHIFT_TOLERANCE {
        return Err(Error::Precondition(format!(
            "local oscillator is not in vacuum (weight {off_vacuum:.3e} elsewhere)"
        )));
    }
    let mut out = vec![czero::<T>(); amps.len()];
    for (block, chunk) in out.chunks_mut(d).enumerate() {
        let a = amps[block * d];
        for (o, c) in chunk.iter_mut().zip(&coh) {
            *o = a * *c;
        }
    }
    PureState::from_amplitudes(basis.clone(), out)
}

/// Born-rule choice with negatives clamped and the remainder renormalized.
pub fn sample_outcome<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Result<usize> {
    let sum: f64 = probabilities.iter().sum();
    if probabilities.iter().any(|p| *p < -1e-12 || !p.is_finite())
        || (sum - 1.0).abs() > PROBABILITY_TOLERANCE
    {
        return Err(Error::ProbabilitySum { sum });
    }
    let total: f64 = probabilities.iter().map(|p| p.max(0.0)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probabilities.iter().enumerate() {
        let p = p.max(0.0);
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

fn check_sum(sum: f64, tolerance: f64) -> Result<()> {
    if (sum - 1.0).abs() > tolerance {
        return Err(Error::ProbabilitySum { sum });
    }
    Ok(())
}

/// Photodetection of site 0 in place, followed by the reset of site 0 to vacuum.
pub(crate) fn photo_in_place<T: Real, R: Rng + ?Sized>(
    amps: &mut [Cx<T>],
    basis: &BasisEnumeration,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    let (eb, lb) = (basis.env_block(), basis.lo_block());
    let ds = basis.layout().system_dim;
    let mut p0 = T::zero();
    let mut p1 = T::zero();
    for s in 0..ds {
        for e in 0..eb {
            let start = basis.index(s, e, 0);
            let w: T = amps[start..start + lb].iter().map(|z| z.norm_sqr()).sum();
            if basis.site0_cleared(e).is_some() {
                p1 = p1 + w;
            } else {
                p0 = p0 + w;
            }
        }
    }
    let (p0, p1) = (p0.to64(), p1.to64());
    check_sum(p0 + p1, T::tolerance(PROBABILITY_TOLERANCE).to64())?;
    let k = sample_outcome(&[p0 / (p0 + p1), p1 / (p0 + p1)], rng)?;
    let p = if k == 0 { p0 } else { p1 };
    let inv = T::one() / T::of(p).sqrt();
    for s in 0..ds {
        for e in 0..eb {
            let start = basis.index(s, e, 0);
            let keep = basis.site0_cleared(e).is_some() == (k == 1);
            for z in &mut amps[start..start + lb] {
                *z = if keep { *z * inv } else { czero() };
            }
        }
    }
    if k == 1 {
        for s in 0..ds {
            for e in 0..eb {
                if let Some(cleared) = basis.site0_cleared(e) {
                    let (from, to) = (basis.index(s, e, 0), basis.index(s, cleared, 0));
                    for l in 0..lb {
                        amps[to + l] = amps[from + l];
                        amps[from + l] = czero();
                    }
                }
            }
        }
    }
    Ok(MeasurementOutcome {
        label: k as i32,
        eigenvalue: k as f64,
        probability: p,
    })
}

/// Photodetection of site 0; the returned state has site 0 reset to vacuum.
pub fn measure_photo<T: Real, R: Rng + ?Sized>(
    state: &PureState<T>,
    rng: &mut R,
) -> Result<(MeasurementOutcome, PureState<T>)> {
    check_normalized(state)?;
    let mut amps = state.amplitudes().to_vec();
    let outcome = photo_in_place(&mut amps, state.basis(), rng)?;
    Ok((outcome, PureState::from_amplitudes(state.basis().clone(), amps)?))
}

fn check_normalized<T: Real>(state: &PureState<T>) -> Result<()> {
    if !state.is_normalized() {
        return Err(Error::NotNormalized((state.norm_sqr() - T::one()).abs().to64()));
    }
    Ok(())
}

/// Unnormalized Born weights of the `2·lo_dim` eigenvectors of `Q`, in the
/// order of [`HomodyneEigensystem::vector`], given amplitude access `get(s, e, l)`.
fn homodyne_weights<T, G>(basis: &BasisEnumeration, eig: &HomodyneEigensystem, get: &G) -> Vec<T>
where
    T: Real,
    G: Fn(usize, usize, usize) -> Cx<T>,
{
    let d = eig.lo_dim();
    let half = T::of(0.5);
    let mut acc = vec![T::zero(); eig.len()];
    for s in 0..basis.layout().system_dim {
        for e0 in 0..basis.env_block() {
            if basis.site0_cleared(e0).is_some() {
                continue;
            }
            let e1 = basis.site0_partner(e0);
            let b = |l: usize| e1.map_or_else(czero, |e1| get(s, e1, l));
            acc[0] = acc[0] + get(s, e0, 0).norm_sqr();
            acc[1] = acc[1] + b(d - 1).norm_sqr();
            for n in 1..d {
                let (a, bb) = (get(s, e0, n), b(n - 1));
                let k = 2 + 2 * (n - 1);
                acc[k] = acc[k] + (a + bb).norm_sqr() * half;
                acc[k + 1] = acc[k + 1] + (a - bb).norm_sqr() * half;
            }
        }
    }
    acc
}

/// Projects onto eigenvector `k`, resets qubit and oscillator, and writes the
/// amplitude of every `(s, e)` with site 0 empty through `put(s, e, value)`, scaled by `scale`.
fn homodyne_collapse<T, G, P>(basis: &BasisEnumeration, eig: &HomodyneEigensystem, k: usize, scale: T, get: &G, mut put: P)
where
    T: Real,
    G: Fn(usize, usize, usize) -> Cx<T>,
    P: FnMut(usize, usize, Cx<T>),
{
    let d = eig.lo_dim();
    let root_half = T::of(std::f64::consts::FRAC_1_SQRT_2);
    for s in 0..basis.layout().system_dim {
        for e0 in 0..basis.env_block() {
            if basis.site0_cleared(e0).is_some() {
                continue;
            }
            let e1 = basis.site0_partner(e0);
            let b = |l: usize| e1.map_or_else(czero, |e1| get(s, e1, l));
            let v = match k {
                0 => get(s, e0, 0),
                1 => b(d - 1),
                _ => {
                    let br = eig.branches()[k - 2];
                    let (a, bb) = (get(s, e0, br.n), b(br.n - 1));
                    if br.sign > 0 {
                        (a + bb) * root_half
                    } else {
                        (a - bb) * root_half
                    }
                }
            };
            put(s, e0, v * scale);
        }
    }
}

fn homodyne_label(eig: &HomodyneEigensystem, k: usize) -> (i32, f64) {
    match k {
        0 | 1 => (0, 0.0),
        _ => {
            let br = eig.branches()[k - 2];
            (br.sign as i32 * br.n as i32, br.eigenvalue)
        }
    }
}

/// Sampled homodyne measurement given amplitude access `get(s, e, l)`.
fn homodyne_core<T, R, G, P>(
    basis: &BasisEnumeration,
    eig: &HomodyneEigensystem,
    get: G,
    put: P,
    rng: &mut R,
    probs: &mut Vec<f64>,
) -> Result<MeasurementOutcome>
where
    T: Real,
    R: Rng + ?Sized,
    G: Fn(usize, usize, usize) -> Cx<T>,
    P: FnMut(usize, usize, Cx<T>),
{
    let acc = homodyne_weights(basis, eig, &get);
    probs.clear();
    probs.extend(acc.iter().map(|p| p.to64()));
    let sum: f64 = probs.iter().sum();
    check_sum(sum, T::tolerance(PROBABILITY_TOLERANCE).to64())?;
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let k = sample_outcome(probs, rng)?;
    let p = acc[k].to64();
    homodyne_collapse(basis, eig, k, T::one() / T::of(p).sqrt(), &get, put);
    let (label, eigenvalue) = homodyne_label(eig, k);
    Ok(MeasurementOutcome {
        label,
        eigenvalue,
        probability: p,
    })
}

fn check_lo<T: Real>(state: &PureState<T>, eig: &HomodyneEigensystem) -> Result<()> {
    if state.basis().lo_block() != eig.lo_dim() {
        return Err(Error::DimensionMismatch {
            expected: state.basis().lo_block(),
            found: eig.lo_dim(),
        });
    }
    Ok(())
}

/// Probabilities of no click and of a click at site 0.
pub fn photodetection_probabilities<T: Real>(state: &PureState<T>) -> Result<[f64; 2]> {
    check_normalized(state)?;
    let p1 = site0_weight(state.amplitudes(), state.basis());
    Ok([state.norm_sqr().to64() - p1, p1])
}

/// Born probability of every eigenvector of `Q`, ordered as [`HomodyneEigensystem::vector`].
pub fn homodyne_probabilities<T: Real>(state: &PureState<T>, eig: &HomodyneEigensystem) -> Result<Vec<f64>> {
    check_normalized(state)?;
    check_lo(state, eig)?;
    let (basis, amps) = (state.basis(), state.amplitudes());
    let w = homodyne_weights(basis, eig, &|s, e, l| amps[basis.index(s, e, l)]);
    Ok(w.into_iter().map(|p| p.to64()).collect())
}

/// Post-measurement state for eigenvector `k` of `Q`, with its outcome.
pub fn homodyne_project<T: Real>(
    state: &PureState<T>,
    eig: &HomodyneEigensystem,
    k: usize,
) -> Result<(MeasurementOutcome, PureState<T>)> {
    let probs = homodyne_probabilities(state, eig)?;
    let p = *probs
        .get(k)
        .ok_or_else(|| Error::InvalidParameter(format!("eigenvector {k} out of range")))?;
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("outcome {k} has zero probability")));
    }
    let basis = state.basis().clone();
    let amps = state.amplitudes();
    let mut out = vec![czero::<T>(); amps.len()];
    homodyne_collapse(&basis, eig, k, T::one() / T::of(p).sqrt(), &|s, e, l| amps[basis.index(s, e, l)], |s, e, v| {
        out[basis.index(s, e, 0)] = v
    });
    let (label, eigenvalue) = homodyne_label(eig, k);
    Ok((MeasurementOutcome { label, eigenvalue, probability: p }, PureState::from_amplitudes(basis, out)?))
}

/// Homodyne measurement on the full state; the returned state has site 0 and
/// the oscillator reset to vacuum.
///
/// The null space of `Q` is resolved into its vacuum and truncation-edge
/// vectors, both recorded with eigenvalue 0.
pub fn measure_homodyne<T: Real, R: Rng + ?Sized>(
    state: &PureState<T>,
    eig: &HomodyneEigensystem,
    rng: &mut R,
) -> Result<(MeasurementOutcome, PureState<T>)> {
    check_normalized(state)?;
    check_lo(state, eig)?;
    let basis = state.basis().clone();
    let amps = state.amplitudes();
    let mut out = vec![czero::<T>(); amps.len()];
    let mut probs = Vec::new();
    let outcome = homodyne_core(
        &basis,
        eig,
        |s, e, l| amps[basis.index(s, e, l)],
        |s, e, v| out[basis.index(s, e, 0)] = v,
        rng,
        &mut probs,
    )?;
    Ok((outcome, PureState::from_amplitudes(basis, out)?))
}

/// Homodyne measurement of `|φ_SE⟩ ⊗ |coh⟩` where `phi` lives on the basis
/// without oscillator. Overwrites `phi` with the reset post-measurement state.
pub(crate) fn homodyne_factored<T: Real, R: Rng + ?Sized>(
    phi: &mut [Cx<T>],
    scratch: &mut [Cx<T>],
    basis_se: &BasisEnumeration,
    coh: &[Cx<T>],
    eig: &HomodyneEigensystem,
    rng: &mut R,
    probs: &mut Vec<f64>,
) -> Result<MeasurementOutcome> {
    debug_assert_eq!(basis_se.lo_block(), 1);
    debug_assert_eq!(coh.len(), eig.lo_dim());
    for z in scratch.iter_mut() {
        *z = czero();
    }
    let src: &[Cx<T>] = phi;
    let outcome = homodyne_core(
        basis_se,
        eig,
        |s, e, l| src[basis_se.index(s, e, 0)] * coh[l],
        |s, e, v| scratch[basis_se.index(s, e, 0)] = v,
        rng,
        probs,
    )?;
    phi.copy_from_slice(scratch);
    Ok(outcome)
}

/// Weight on configurations with site 0 occupied.
pub(crate) fn site0_weight<T: Real>(amps: &[Cx<T>], basis: &BasisEnumeration) -> f64 {
    let (eb, lb) = (basis.env_block(), basis.lo_block());
    let mut w = 0.0;
    for s in 0..basis.layout().system_dim {
        for e in 0..eb {
            if basis.site0_cleared(e).is_some() {
                let start = basis.index(s, e, 0);
                w += amps[start..start + lb].iter().map(|z| z.norm_sqr().to64()).sum::<f64>();
            }
        }
    }
    w
}

/// Chain shift `n → n−1` as an index permutation, written into `out`.
pub(crate) fn shift_into<T: Real>(amps: &[Cx<T>], out: &mut [Cx<T>], basis: &BasisEnumeration) -> Result<()> {
    let w = site0_weight(amps, basis);
    if w > SHIFT_TOLERANCE {
        return Err(Error::ShiftPrecondition(w));
    }
    for z in out.iter_mut() {
        *z = czero();
    }
    let (eb, lb) = (basis.env_block(), basis.lo_block());
    for s in 0..basis.layout().system_dim {
        for e in 0..eb {
            if let Some(t) = basis.shift_target(e) {
                let (from, to) = (basis.index(s, e, 0), basis.index(s, t, 0));
                out[to..to + lb].copy_from_slice(&amps[from..from + lb]);
            }
        }
    }
    Ok(())
}

/// Moves every environment excitation from site `n` to `n−1`; site 0 must be empty.
pub fn apply_shift<T: Real>(state: &PureState<T>) -> Result<PureState<T>> {
    let mut out = vec![czero::<T>(); state.dim()];
    shift_into(state.amplitudes(), &mut out, state.basis())?;
    PureState::from_amplitudes(state.basis().clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{enumerate_basis, OccupationState};
    use crate::scalar::cx;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn basis(ds: usize, n: usize, k: usize, lo: usize) -> Arc<BasisEnumeration> {
        Arc::new(enumerate_basis(ModeLayout::new(ds, n, k, lo).unwrap()).unwrap())
    }

    fn occ(s: usize, bits: &[bool], lo: usize) -> OccupationState {
        OccupationState {
            system_n: s,
            env_bits: bits.to_vec(),
            lo_n: lo,
        }
    }

    #[test]
    fn eigensystem_diagonalizes_q() {
        let d = 3;
        let eig = homodyne_eigensystem(d).unwrap();
        assert_eq!(eig.len(), 2 * d);
        // Q on |k, n⟩ with index k*d + n
        let mut q = vec![vec![0.0; 2 * d]; 2 * d];
        for n in 1..d {
            let r = (n as f64).sqrt();
            q[d + n - 1][n] = r;
            q[n][d + n - 1] = r;
        }
        let vecs: Vec<_> = (0..eig.len()).map(|k| eig.vector(k).unwrap()).collect();
        for (lam, v) in &vecs {
            for i in 0..2 * d {
                let qv: f64 = (0..2 * d).map(|j| q[i][j] * v[j]).sum();
                assert!((qv - lam * v[i]).abs() < 1e-14);
            }
        }
        for (a, (_, va)) in vecs.iter().enumerate() {
            for (b, (_, vb)) in vecs.iter().enumerate() {
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(homodyne_eigensystem(1).is_err());
    }

    #[test]
    fn number_projectors_on_first_branch() {
        // N± = ½(B±C)†(B±C); |1+⟩ is an eigenvector of N₊ with 1 and of N₋ with 0.
        let eig = homodyne_eigensystem(3).unwrap();
        let (_, v) = eig.vector(2).unwrap();
        // (B - C)|1+⟩ ∝ |0,0⟩(1 - 1)/√2 = 0
        let b_minus_c = v[3] - v[1];
        assert!(b_minus_c.abs() < 1e-15);
        let b_plus_c = v[3] + v[1];
        assert!((0.5 * b_plus_c * b_plus_c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coherent_vector_mean_and_leakage() {
        let c = coherent_vector::<f64>(Cx::new(1.0, 0.0), 250).unwrap();
        let mean: f64 = c.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((mean - 1.0).abs() < 1e-10);
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let vac = coherent_vector::<f64>(Cx::new(0.0, 0.0), 4).unwrap();
        assert_eq!(vac[0], cx(1.0, 0.0));
        assert!(matches!(coherent_vector::<f64>(Cx::new(3.0, 0.0), 5), Err(Error::Leakage(_))));
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_outcome(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        assert!(matches!(sample_outcome(&[0.5, 0.4], &mut rng), Err(Error::ProbabilitySum { .. })));
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let sa: Vec<_> = (0..50).map(|_| sample_outcome(&[0.5, 0.5], &mut a).unwrap()).collect();
        let sb: Vec<_> = (0..50).map(|_| sample_outcome(&[0.5, 0.5], &mut b).unwrap()).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn empirical_frequencies_within_four_sigma() {
        let p = [0.2, 0.5, 0.3];
        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..n {
            counts[sample_outcome(&p, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(p) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn vacuum_gives_no_click() {
        let b = basis(2, 3, 2, 0);
        let psi = PureState::<f64>::product_with_vacuum(b, &[cx(0.6, 0.0), cx(0.8, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (o, post) = measure_photo(&psi, &mut rng).unwrap();
        assert_eq!(o.label, 0);
        assert!((o.probability - 1.0).abs() < 1e-15);
        assert_eq!(post.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn click_resets_site_zero() {
        let b = basis(2, 3, 2, 0);
        let mut psi = PureState::<f64>::zeros(b.clone());
        let s = 0.5f64.sqrt();
        let i_click = b.index_of(&occ(0, &[true, false, true], 0)).unwrap();
        let i_quiet = b.index_of(&occ(1, &[false, false, false], 0)).unwrap();
        psi.amplitudes_mut()[i_click] = cx(s, 0.0);
        psi.amplitudes_mut()[i_quiet] = cx(s, 0.0);
        let mut clicks = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (o, post) = measure_photo(&psi, &mut rng).unwrap();
            assert!((o.probability - 0.5).abs() < 1e-15);
            let expect = if o.label == 1 {
                clicks += 1;
                b.index_of(&occ(0, &[false, false, true], 0)).unwrap()
            } else {
                i_quiet
            };
            assert!((post.amplitudes()[expect].norm() - 1.0).abs() < 1e-14);
            assert!(post.is_normalized());
        }
        assert!(clicks > 5 && clicks < 35);
    }

    #[test]
    fn photodetection_is_idempotent() {
        let b = basis(2, 2, 1, 0);
        let mut psi = PureState::<f64>::zeros(b.clone());
        psi.amplitudes_mut()[b.index_of(&occ(1, &[false, false], 0)).unwrap()] = cx(0.8, 0.0);
        psi.amplitudes_mut()[b.index_of(&occ(0, &[true, false], 0)).unwrap()] = cx(0.0, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (first, post) = measure_photo(&psi, &mut rng).unwrap();
        let (second, _) = measure_photo(&post, &mut rng).unwrap();
        // after the reset site 0 is empty, so a repeat always reads 0 with certainty
        assert_eq!(second.label, 0);
        assert!((second.probability - 1.0).abs() < 1e-14);
        assert!(first.label == 0 || first.label == 1);
    }

    #[test]
    fn homodyne_vacuum_is_null_outcome() {
        let b = basis(2, 2, 1, 3);
        let psi = PureState::<f64>::product_with_vacuum(b, &[cx(1.0, 0.0), cx(0.0, 0.0)]).unwrap();
        let eig = homodyne_eigensystem(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (o, post) = measure_homodyne(&psi, &eig, &mut rng).unwrap();
        assert_eq!((o.label, o.eigenvalue), (0, 0.0));
        assert!((o.probability - 1.0).abs() < 1e-15);
        assert_eq!(post.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn homodyne_branch_projection() {
        let b = basis(1, 2, 1, 3);
        let eig = homodyne_eigensystem(3).unwrap();
        // |1+⟩ on site 0 ⊗ LO, environment site 1 empty
        let mut psi = PureState::<f64>::zeros(b.clone());
        let s = 0.5f64.sqrt();
        psi.amplitudes_mut()[b.index_of(&occ(0, &[false, false], 1)).unwrap()] = cx(s, 0.0);
        psi.amplitudes_mut()[b.index_of(&occ(0, &[true, false], 0)).unwrap()] = cx(s, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (o, post) = measure_homodyne(&psi, &eig, &mut rng).unwrap();
        assert_eq!(o.label, 1);
        assert!((o.eigenvalue - 1.0).abs() < 1e-15);
        assert!((o.probability - 1.0).abs() < 1e-14);
        assert!((post.amplitudes()[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn factored_homodyne_matches_full_space() {
        let full = basis(2, 3, 2, 10);
        let reduced = basis(2, 3, 2, 0);
        let eig = homodyne_eigensystem(10).unwrap();
        let beta = Cx::from_polar(0.7, 0.4);
        let coh = coherent_vector::<f64>(beta, 10).unwrap();
        let mut phi: Vec<Cx<f64>> = (0..reduced.dim())
            .map(|i| cx((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()))
            .collect();
        let n = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|z| *z /= n);
        let mut amps = vec![czero::<f64>(); full.dim()];
        for s in 0..2 {
            for e in 0..full.env_block() {
                for l in 0..10 {
                    amps[full.index(s, e, l)] = phi[reduced.index(s, e, 0)] * coh[l];
                }
            }
        }
        let psi = PureState::from_amplitudes(full.clone(), amps).unwrap();
        for seed in 0..20 {
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let (o1, post) = measure_homodyne(&psi, &eig, &mut r1).unwrap();
            let mut p = phi.clone();
            let mut scratch = vec![czero(); p.len()];
            let mut probs = Vec::new();
            let o2 = homodyne_factored(&mut p, &mut scratch, &reduced, &coh, &eig, &mut r2, &mut probs).unwrap();
            assert_eq!(o1.label, o2.label);
            assert!((o1.probability - o2.probability).abs() < 1e-14);
            for s in 0..2 {
                for e in 0..full.env_block() {
                    let a = post.amplitudes()[full.index(s, e, 0)];
                    assert!((a - p[reduced.index(s, e, 0)]).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn shift_moves_excitations_down() {
        let b = basis(1, 4, 2, 0);
        let psi = PureState::<f64>::basis_state(b.clone(), &occ(0, &[false, true, false, true], 0)).unwrap();
        let shifted = apply_shift(&psi).unwrap();
        let target = b.index_of(&occ(0, &[true, false, true, false], 0)).unwrap();
        assert_eq!(shifted.amplitudes()[target], cx(1.0, 0.0));
        assert!((shifted.norm_sqr() - 1.0).abs() < 1e-15);
        let vac = PureState::<f64>::product_with_vacuum(b.clone(), &[cx(1.0, 0.0)]).unwrap();
        assert_eq!(apply_shift(&vac).unwrap().amplitudes(), vac.amplitudes());
        let bad = PureState::<f64>::basis_state(b, &occ(0, &[true, false, false, false], 0)).unwrap();
        assert!(matches!(apply_shift(&bad), Err(Error::ShiftPrecondition(_))));
    }

    #[test]
    fn scheme_layout_consistency() {
        let photo = MeasurementScheme::Photodetection;
        let homo = MeasurementScheme::Homodyne {
            alpha: 1.0,
            theta: 0.0,
            lo_dim: 4,
        };
        assert!(photo.validate(&ModeLayout::new(2, 1, 1, 0).unwrap()).is_ok());
        assert!(photo.validate(&ModeLayout::new(2, 1, 1, 4).unwrap()).is_err());
        assert!(homo.validate(&ModeLayout::new(2, 1, 1, 4).unwrap()).is_ok());
        assert!(homo.validate(&ModeLayout::new(2, 1, 1, 0).unwrap()).is_err());
    }
}
