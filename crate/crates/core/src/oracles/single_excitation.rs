//! Exact evolution in the one-excitation sector with the environment written
//! in its frequency modes, without Trotter splitting or measurement.
//!
//! Mode `k` has frequency `ω_k` on the symmetric band around zero and couples
//! to the emitter with `κ_k = (NΔt)^{-1/2} Σ_n γ_n e^{−iω_k nΔt}`, so that the
//! site operators `B_n = N^{-1/2} Σ_k b_k e^{−iω_k nΔt}` move one site towards
//! `n = 0` per interval `Δt`.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{symmetric_frequency, CouplingProfile};
use crate::propagator::{Method, Propagator, PropagatorConfig};
use crate::scalar::Cx;
use crate::sparse::SparseOperator;

/// Emitter amplitude sampled on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSeries {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Cx<f64>>,
}

impl AmplitudeSeries {
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Population at `t` by linear interpolation.
    pub fn population_at(&self, t: f64) -> Option<f64> {
        let (t0, t1) = (*self.times.first()?, *self.times.last()?);
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return None;
        }
        if self.times.len() == 1 {
            return Some(self.amplitudes[0].norm_sqr());
        }
        let h = self.times[1] - self.times[0];
        let x = ((t - t0) / h).max(0.0);
        let i = (x.floor() as usize).min(self.times.len() - 2);
        let w = x - i as f64;
        Some((1.0 - w) * self.amplitudes[i].norm_sqr() + w * self.amplitudes[i + 1].norm_sqr())
    }
}

/// Coupling of mode `k` for the given site profile.
pub fn mode_couplings(profile: &CouplingProfile<f64>, dt: f64) -> Vec<Cx<f64>> {
    let n = profile.len();
    let norm = 1.0 / ((n as f64) * dt).sqrt();
    (0..n)
        .map(|k| {
            profile
                .gammas()
                .iter()
                .enumerate()
                .filter(|(_, g)| g.norm_sqr() > 0.0)
                .fold(Complex::new(0.0, 0.0), |acc, (site, g)| {
                    let phase = -2.0 * PI * ((k * site) % n) as f64 / n as f64;
                    acc + g * Complex::from_polar(1.0, phase)
                })
                * norm
        })
        .collect()
}

/// `c(t)` for the emitter starting excited with the chain in vacuum, sampled every
/// `sample_dt` up to `horizon`.
///
/// Fails if an emitted excitation could wrap around the periodic chain and
/// return to the coupled sites before `horizon`.
pub fn single_excitation_schrodinger(
    profile: &CouplingProfile<f64>,
    dt: f64,
    horizon: f64,
    sample_dt: f64,
) -> Result<AmplitudeSeries> {
    if !(dt > 0.0 && horizon >= 0.0 && sample_dt > 0.0) {
        return Err(Error::InvalidParameter("time step, horizon and sampling step must be positive".into()));
    }
    let n = profile.len();
    let reach = (n - profile.support_span()) as f64 * dt;
    if horizon > reach + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} exceeds the wrap-around time {reach} of a {n}-site chain; pad the profile"
        )));
    }
    let kappas = mode_couplings(profile, dt);
    let mut entries = Vec::with_capacity(3 * n);
    for (k, kappa) in kappas.iter().enumerate() {
        let omega = symmetric_frequency(k, n, dt);
        if omega != 0.0 {
            entries.push((1 + k, 1 + k, Complex::new(omega, 0.0)));
        }
        entries.push((0, 1 + k, *kappa));
        entries.push((1 + k, 0, kappa.conj()));
    }
    let h = SparseOperator::from_triplets(n + 1, entries)?;
    let steps = (horizon / sample_dt).round() as usize;
    let cfg = PropagatorConfig {
        method: Method::Krylov,
        tolerance: 1e-11,
        krylov_dim: 40,
        ..PropagatorConfig::default()
    };
    let prop = Propagator::new(h, sample_dt, cfg)?;
    let mut ws = prop.workspace();
    let mut psi = vec![Complex::new(0.0, 0.0); n + 1];
    psi[0] = Complex::new(1.0, 0.0);
    let mut times = vec![0.0];
    let mut amplitudes = vec![psi[0]];
    for s in 1..=steps {
        prop.apply(&mut psi, &mut ws)?;
        times.push(s as f64 * sample_dt);
        amplitudes.push(psi[0]);
    }
    Ok(AmplitudeSeries { times, amplitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_coupling, CouplingVariant};

    #[test]
    fn decoupled_emitter_stays_excited() {
        let p = build_coupling::<f64>(&CouplingVariant::Point { rate: 0.0 }, 50, 0.01).unwrap();
        let s = single_excitation_schrodinger(&p, 0.01, 0.4, 0.01).unwrap();
        assert!(s.amplitudes.iter().all(|c| (c - Complex::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn point_coupling_decays_exponentially() {
        let dt = 0.005;
        let p = build_coupling::<f64>(&CouplingVariant::Point { rate: 1.0 }, 800, dt).unwrap();
        let s = single_excitation_schrodinger(&p, dt, 3.0, 0.05).unwrap();
        for (t, pop) in s.times.iter().zip(s.populations()) {
            assert!((pop - (-t).exp()).abs() < 5e-3, "t = {t}: {pop}");
        }
    }

    #[test]
    fn wrap_around_is_refused() {
        let p = build_coupling::<f64>(&CouplingVariant::Point { rate: 1.0 }, 10, 0.1).unwrap();
        assert!(single_excitation_schrodinger(&p, 0.1, 1.5, 0.1).is_err());
    }
}
