//! Shared helpers for the integration suites. Every check returns a short
//! diagnostic instead of panicking so the same code backs both the property
//! tests and the acceptance summary.

#![allow(dead_code)]

use std::sync::Arc;

use colltraj::model::{build_coupling, build_interaction, coupling_spectrum, lorentzian_density, CouplingProfile};
use colltraj::{
    enumerate_basis, homodyne_eigensystem, homodyne_probabilities, partial_trace_system,
    photodetection_probabilities, run_ensemble, BasisEnumeration, Complex64, CouplingVariant, EnsembleOptions,
    InitialState, MeasurementScheme, Method, ModeLayout, OccupationState, Propagator, PropagatorConfig, PureState,
    RecordSettings, Simulator, SparseOperator, SystemHamiltonianSpec, TrajectoryConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

pub fn random_vector(dim: usize, r: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim).map(|_| c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
    v
}

pub fn random_state(basis: &Arc<BasisEnumeration>, r: &mut ChaCha8Rng) -> PureState<f64> {
    PureState::from_amplitudes(basis.clone(), random_vector(basis.dim(), r)).unwrap()
}

/// Random Hermitian operator with roughly `fill` of its off-diagonal entries set.
pub fn random_hermitian(dim: usize, fill: f64, r: &mut ChaCha8Rng) -> SparseOperator<f64> {
    let mut entries = Vec::new();
    for i in 0..dim {
        entries.push((i, i, c(2.0 * r.random::<f64>() - 1.0, 0.0)));
        for j in 0..i {
            if r.random::<f64>() < fill {
                let z = c(2.0 * r.random::<f64>() - 1.0, 2.0 * r.random::<f64>() - 1.0);
                entries.push((i, j, z));
                entries.push((j, i, z.conj()));
            }
        }
    }
    SparseOperator::from_triplets(dim, entries).unwrap()
}

/// `exp(−iHt)ψ` through a Hermitian eigendecomposition in nalgebra.
pub fn reference_evolution(h: &SparseOperator<f64>, t: f64, psi: &[Complex64]) -> Vec<Complex64> {
    let d = h.dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for (i, j, z) in h.triplets() {
        m[(i, j)] += z;
    }
    let eig = m.symmetric_eigen();
    let v = &eig.eigenvectors;
    let x = nalgebra::DVector::from_column_slice(psi);
    let mut coeffs = v.adjoint() * x;
    for (k, z) in coeffs.iter_mut().enumerate() {
        *z *= Complex64::from_polar(1.0, -eig.eigenvalues[k] * t);
    }
    (v * coeffs).iter().copied().collect()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn raw_profile(raw: Vec<[f64; 2]>, dt: f64) -> colltraj::Result<CouplingProfile<f64>> {
    let n = raw.len();
    build_coupling::<f64>(&CouplingVariant::Raw { gammas: raw }, n, dt)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random round trips index → occupation → index and back, plus the closed-form count.
pub fn check_enumeration(layout: ModeLayout, samples: usize, seed: u64) -> Check {
    let basis = enumerate_basis(layout).map_err(|e| e.to_string())?;
    let env: usize = (0..=layout.env_cap.min(layout.env_count)).map(|j| binomial(layout.env_count, j)).sum();
    let expected = layout.system_dim * env * layout.lo_dim.max(1);
    ensure(basis.dim() == expected, || format!("dimension {} != {expected} for {layout:?}", basis.dim()))?;
    let mut r = rng(seed);
    for _ in 0..samples {
        let i = r.random_range(0..basis.dim());
        let occ = basis.occupation_of(i).map_err(|e| e.to_string())?;
        let back = basis.index_of(&occ).map_err(|e| e.to_string())?;
        ensure(back == i, || format!("index {i} came back as {back}"))?;
        // random occupation within the caps
        let mut bits = vec![false; layout.env_count];
        let weight = r.random_range(0..=layout.env_cap.min(layout.env_count));
        let mut placed = 0;
        while placed < weight {
            let p = r.random_range(0..layout.env_count);
            if !bits[p] {
                bits[p] = true;
                placed += 1;
            }
        }
        let occ = OccupationState {
            system_n: r.random_range(0..layout.system_dim),
            env_bits: bits,
            lo_n: r.random_range(0..layout.lo_dim.max(1)),
        };
        let idx = basis.index_of(&occ).map_err(|e| e.to_string())?;
        let again = basis.occupation_of(idx).map_err(|e| e.to_string())?;
        ensure(again == occ, || format!("occupation {occ:?} came back as {again:?}"))?;
    }
    Ok(())
}

/// Entrywise adjoint check of `H_I` plus the one-quantum-per-mode selection rule.
pub fn check_interaction(layout: ModeLayout, seed: u64, dt: f64) -> Check {
    let basis = enumerate_basis(layout).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let raw: Vec<[f64; 2]> = (0..layout.env_count).map(|_| [r.random::<f64>() - 0.5, r.random::<f64>() - 0.5]).collect();
    let profile = raw_profile(raw, dt).map_err(|e| e.to_string())?;
    let h = build_interaction::<f64>(&basis, &profile, dt).map_err(|e| e.to_string())?;
    for (i, j, z) in h.triplets() {
        ensure(h.get(j, i) == z.conj(), || format!("entry ({i},{j}) has no exact adjoint"))?;
        let (a, b) = (basis.occupation_of(i).unwrap(), basis.occupation_of(j).unwrap());
        ensure(a.lo_n == b.lo_n && a.system_n.abs_diff(b.system_n) == 1, || {
            format!("entry ({i},{j}) does not move exactly one system quantum")
        })?;
        let flipped = a.env_bits.iter().zip(&b.env_bits).filter(|(x, y)| x != y).count();
        let ws: isize = a.env_bits.iter().filter(|x| **x).count() as isize - b.env_bits.iter().filter(|x| **x).count() as isize;
        let ds = a.system_n as isize - b.system_n as isize;
        ensure(flipped == 1 && ws == -ds, || format!("entry ({i},{j}) breaks excitation exchange"))?;
    }
    Ok(())
}

/// Brute-force shift: `|k_{N−1},…,k_1⟩|0⟩ → |0,k_{N−1},…,k_1⟩` written on occupation
/// lists, compared with the library shift on every basis vector with site 0 empty.
pub fn check_shift(layout: ModeLayout) -> Check {
    let basis = Arc::new(enumerate_basis(layout).map_err(|e| e.to_string())?);
    let d = basis.dim();
    let mut columns: Vec<Vec<Complex64>> = Vec::new();
    for i in 0..d {
        let occ = basis.occupation_of(i).unwrap();
        if occ.env_bits[0] {
            continue;
        }
        let mut shifted = occ.clone();
        shifted.env_bits.rotate_left(1);
        let target = basis.index_of(&shifted).map_err(|e| e.to_string())?;
        let mut amps = vec![c(0.0, 0.0); d];
        amps[i] = c(1.0, 0.0);
        let psi = PureState::from_amplitudes(basis.clone(), amps).unwrap();
        let out = colltraj::collision::apply_shift(&psi).map_err(|e| e.to_string())?;
        for (k, z) in out.amplitudes().iter().enumerate() {
            let want = if k == target { 1.0 } else { 0.0 };
            ensure(*z == c(want, 0.0), || format!("shift of basis vector {i} differs at {k}"))?;
        }
        columns.push(out.amplitudes().to_vec());
    }
    // isometry on the site-0-empty subspace
    for (a, ca) in columns.iter().enumerate() {
        for (b, cb) in columns.iter().enumerate().skip(a) {
            let ip: Complex64 = ca.iter().zip(cb).map(|(x, y)| x.conj() * y).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            ensure((ip - want).norm() < 1e-15, || format!("shift columns {a},{b} not orthonormal"))?;
        }
    }
    Ok(())
}

/// Propagator against the eigendecomposition oracle for a random Hermitian operator.
pub fn check_propagator(dim: usize, seed: u64, method: Method, dt: f64) -> Check {
    let mut r = rng(seed);
    let h = random_hermitian(dim, 0.3, &mut r);
    let psi = random_vector(dim, &mut r);
    let reference = reference_evolution(&h, dt, &psi);
    let prop = Propagator::new(h, dt, PropagatorConfig::with_method(method)).map_err(|e| e.to_string())?;
    let mut ws = prop.workspace();
    let mut out = psi.clone();
    prop.apply(&mut out, &mut ws).map_err(|e| e.to_string())?;
    let err = max_diff(&out, &reference);
    ensure(err < 1e-8, || format!("{method:?} differs from the dense exponential by {err:e} (D = {dim})"))
}

pub fn check_partial_trace(layout: ModeLayout, seed: u64) -> Check {
    let basis = Arc::new(enumerate_basis(layout).map_err(|e| e.to_string())?);
    let psi = random_state(&basis, &mut rng(seed));
    let rho = partial_trace_system(&psi).map_err(|e| e.to_string())?;
    rho.validate(1e-12, 1e-12).map_err(|e| e.to_string())
}

/// Photodetection and homodyne outcome probabilities of a random normalized state sum to one.
pub fn check_completeness(layout: ModeLayout, seed: u64) -> Check {
    let basis = Arc::new(enumerate_basis(layout).map_err(|e| e.to_string())?);
    let psi = random_state(&basis, &mut rng(seed));
    let sum = if layout.lo_dim == 0 {
        photodetection_probabilities(&psi).map_err(|e| e.to_string())?.iter().sum::<f64>()
    } else {
        let eig = homodyne_eigensystem(layout.lo_dim).map_err(|e| e.to_string())?;
        let p = homodyne_probabilities(&psi, &eig).map_err(|e| e.to_string())?;
        ensure(p.iter().all(|x| *x >= 0.0), || "negative outcome probability".into())?;
        p.iter().sum::<f64>()
    };
    ensure((sum - 1.0).abs() < 1e-10, || format!("outcome probabilities sum to {sum} for {layout:?}"))
}

pub fn feedback_config(omega: f64, n_steps: usize, seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        layout: ModeLayout::new(2, 6, 2, 0).unwrap(),
        coupling: CouplingVariant::TwoPointFeedback {
            rate: 1.0,
            phase: std::f64::consts::PI,
            delay_steps: 5,
        },
        system: SystemHamiltonianSpec::DrivenQubit { omega },
        scheme: MeasurementScheme::Photodetection,
        dt: 0.05,
        n_steps,
        master_seed: seed,
        initial: InitialState::Excited,
        record: RecordSettings::default(),
        propagator: PropagatorConfig::default(),
    }
}

pub fn homodyne_feedback_config(seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        layout: ModeLayout::new(2, 4, 2, 8).unwrap(),
        scheme: MeasurementScheme::Homodyne {
            alpha: 2.0,
            theta: 0.4,
            lo_dim: 8,
        },
        coupling: CouplingVariant::TwoPointFeedback {
            rate: 1.0,
            phase: 0.7,
            delay_steps: 3,
        },
        dt: 0.02,
        ..feedback_config(0.8, 40, seed)
    }
}

/// Identical configuration and seed give bit-identical trajectories.
pub fn check_reproducible(config: TrajectoryConfig, index: u64) -> Check {
    let a = Simulator::new(config.clone()).map_err(|e| e.to_string())?;
    let b = Simulator::new(config).map_err(|e| e.to_string())?;
    let (ta, tb) = (a.run_trajectory(index), b.run_trajectory(index));
    ensure(ta.is_ok() && ta == tb, || format!("trajectory {index} is not reproducible"))?;
    ensure(ta.unwrap() != a.run_trajectory(index + 1).unwrap(), || "distinct indices gave identical trajectories".into())
}

pub fn check_parallel_invariance(config: TrajectoryConfig, n: usize) -> Check {
    let sim = Simulator::new(config).map_err(|e| e.to_string())?;
    let run = |threads| {
        run_ensemble(
            &sim,
            n,
            &EnsembleOptions {
                threads: Some(threads),
                ..EnsembleOptions::default()
            },
        )
    };
    let (one, four) = (run(1).map_err(|e| e.to_string())?, run(4).map_err(|e| e.to_string())?);
    ensure(one == four, || "ensemble statistics depend on the thread count".into())
}

/// `Σ_k |κ_k|² = Σ_n |γ_n|² / Δt` for a random profile.
pub fn check_parseval(n: usize, dt: f64, seed: u64) -> Check {
    let mut r = rng(seed);
    let raw: Vec<[f64; 2]> = (0..n).map(|_| [r.random::<f64>() - 0.5, r.random::<f64>() - 0.5]).collect();
    let lhs_sites: f64 = raw.iter().map(|[a, b]| a * a + b * b).sum::<f64>() / dt;
    let profile = raw_profile(raw, dt).map_err(|e| e.to_string())?;
    let spec = coupling_spectrum::<f64>(&profile, dt).map_err(|e| e.to_string())?;
    let modes: f64 = spec.kappas.iter().map(|k| k.norm_sqr()).sum();
    ensure((modes - lhs_sites).abs() <= 1e-12 * lhs_sites.max(1.0), || {
        format!("Σ|κ|² = {modes} but Σ|γ|²/Δt = {lhs_sites}")
    })
}

/// Largest relative deviation of the exponential-profile spectral density from the
/// Lorentzian over `|ω| ≤ band·λ`.
pub fn lorentzian_error(n: usize, dt: f64, rate: f64, memory_rate: f64, band: f64) -> f64 {
    let variant = CouplingVariant::Exponential { rate, memory_rate };
    let profile = build_coupling::<f64>(&variant, n, dt).unwrap();
    let spec = coupling_spectrum::<f64>(&profile, dt).unwrap();
    let density = spec.density();
    spec.symmetric_omegas()
        .iter()
        .zip(&density)
        .filter(|(w, _)| w.abs() <= band * memory_rate)
        .map(|(w, j)| {
            let l = lorentzian_density(rate, memory_rate, *w).unwrap();
            (j - l).abs() / l
        })
        .fold(0.0, f64::max)
}

/// Largest |a−b|/σ over a series, ignoring points with σ = 0 and a = b.
/// Standard-error bound for a mean over `n` trajectories that all agree: no
/// departure in `n` trials bounds its probability by `3/n` at 95% confidence,
/// and a departure moves the observable by at most `range`.
pub fn unanimous_stderr(range: f64, n: usize) -> f64 {
    let p = (3.0 / n as f64).min(1.0);
    range * (p * (1.0 - p) / n as f64).sqrt()
}

/// `max_z` with `floor` standing in for standard errors that are exactly zero.
pub fn max_z_floored(a: &[f64], b: &[f64], sigma: &[f64], floor: f64) -> f64 {
    let sigma: Vec<f64> = sigma.iter().map(|s| if *s == 0.0 { floor } else { *s }).collect();
    max_z(a, b, &sigma)
}

pub fn max_z(a: &[f64], b: &[f64], sigma: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(sigma)
        .map(|((x, y), s)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else if *s == 0.0 {
                f64::INFINITY
            } else {
                d / s
            }
        })
        .fold(0.0, f64::max)
}

/// Single-site Markovian configuration (`N = 1`, `K_max = 1`).
pub fn markovian_config(system_dim: usize, rate: f64, dt: f64, scheme: MeasurementScheme, method: Method) -> TrajectoryConfig {
    TrajectoryConfig {
        layout: ModeLayout::new(system_dim, 1, 1, scheme.lo_dim()).unwrap(),
        coupling: CouplingVariant::Point { rate },
        system: SystemHamiltonianSpec::None,
        scheme,
        dt,
        n_steps: 1,
        master_seed: 0,
        initial: InitialState::Excited,
        record: RecordSettings::default(),
        propagator: PropagatorConfig {
            tolerance: 1e-12,
            ..PropagatorConfig::with_method(method)
        },
    }
}

/// The full joint state after the coherent part of one step from `|ψ_S⟩ ⊗ vacuum`
/// (with the oscillator prepared in `|α√Δt e^{iθ}⟩` for homodyne schemes).
pub fn one_step(config: &TrajectoryConfig, system: &[Complex64]) -> PureState<f64> {
    let basis = Arc::new(enumerate_basis(config.layout).unwrap());
    let h = colltraj::engine::hamiltonian::<f64>(&basis, config).unwrap();
    let mut psi = PureState::product_with_vacuum(basis, system).unwrap();
    if let Some(beta) = config.scheme.lo_amplitude(config.dt) {
        psi = colltraj::collision::prepare_lo(&psi, beta).unwrap();
    }
    colltraj::evolve(&psi, &h, config.dt, &config.propagator).unwrap()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// `⟨ψ|J†J|ψ⟩` for `J = (α e^{iθ} ∓ i√γ a)/√2` on a `d`-level system.
pub fn homodyne_jump_weight(psi: &[Complex64], alpha: f64, theta: f64, rate: f64, sign: f64) -> f64 {
    jump_vector(psi, alpha, theta, rate, sign).iter().map(|z| z.norm_sqr()).sum()
}

pub fn jump_vector(psi: &[Complex64], alpha: f64, theta: f64, rate: f64, sign: f64) -> Vec<Complex64> {
    let d = psi.len();
    let lo = Complex64::from_polar(alpha, theta);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..d)
        .map(|n| {
            let a_psi = if n + 1 < d { psi[n + 1] * ((n + 1) as f64).sqrt() } else { c(0.0, 0.0) };
            (lo * psi[n] - c(0.0, sign) * rate.sqrt() * a_psi) * s
        })
        .collect()
}
