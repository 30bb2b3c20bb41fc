//! Delay-differential model of a two-point feedback loop,
//! `ċ(t) = −Γ₀ c(t) − Γ_fb e^{iφ} c(t−τ)·𝟙[t>τ]`, and its calibration against the
//! full-mode single-excitation oracle.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{build_coupling, CouplingVariant};
use crate::oracles::single_excitation::{single_excitation_schrodinger, AmplitudeSeries};
use crate::scalar::Cx;

/// Largest relative amplitude error accepted by [`calibrate_feedback`].
pub const CALIBRATION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdeSpec {
    /// Decay rate of each coupling port.
    pub rate: f64,
    pub phase: f64,
    pub delay: f64,
    pub horizon: f64,
    pub step: f64,
}

impl DdeSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.rate, self.phase, self.delay, self.horizon, self.step]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.rate < 0.0 || self.delay < 0.0 || self.horizon < 0.0 || !(self.step > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid delay-equation parameters {self:?}")));
        }
        if self.delay > 0.0 && self.step > self.delay / 10.0 + 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "step {} must not exceed a tenth of the delay {}",
                self.step, self.delay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdeCoefficients {
    pub local: f64,
    pub feedback: f64,
}

/// Integrates the delay equation from `c(0) = 1` with classical RK4 on a grid
/// commensurate with the delay; the delayed term uses cubic Hermite interpolation.
pub fn feedback_dde(spec: &DdeSpec, coefficients: DdeCoefficients) -> Result<AmplitudeSeries> {
    spec.validate()?;
    let h = if spec.delay > 0.0 {
        spec.delay / (spec.delay / spec.step).ceil()
    } else {
        spec.step
    };
    let steps = (spec.horizon / h).round() as usize;
    let lag = if spec.delay > 0.0 { (spec.delay / h).round() as usize } else { 0 };
    let e = Complex::from_polar(1.0, spec.phase);
    let (g0, gf) = (coefficients.local, coefficients.feedback);
    let mut c: Vec<Cx<f64>> = Vec::with_capacity(steps + 1);
    let mut dc: Vec<Cx<f64>> = Vec::with_capacity(steps + 1);
    c.push(Complex::new(1.0, 0.0));
    let zero = Complex::new(0.0, 0.0);
    let rhs = |y: Cx<f64>, lagged: Cx<f64>| -> Cx<f64> { -y * g0 - e * lagged * gf };
    if lag == 0 {
        // τ = 0: both ports act locally
        let rate = e * gf + g0;
        for i in 0..steps {
            let y = c[i];
            let k1 = -y * rate;
            let k2 = -(y + k1 * (h / 2.0)) * rate;
            let k3 = -(y + k2 * (h / 2.0)) * rate;
            let k4 = -(y + k3 * h) * rate;
            c.push(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
        }
    } else {
        for i in 0..steps {
            let y = c[i];
            let lag0 = if i >= lag { c[i - lag] } else { zero };
            let k1 = rhs(y, lag0);
            dc.push(k1);
            // delayed value at the half step: Hermite midpoint of grid interval [j, j+1]
            let mid_lag = match i.checked_sub(lag) {
                Some(j) => {
                    // ċ jumps at t = τ; the interval ending there needs the left derivative
                    let right_end = if j + 1 == lag { rhs(c[lag], zero) } else { dc[j + 1] };
                    (c[j] + c[j + 1]) * 0.5 + (dc[j] - right_end) * (h / 8.0)
                }
                None => zero,
            };
            let end_lag = if i + 1 > lag { c[i + 1 - lag] } else { zero };
            let k2 = rhs(y + k1 * (h / 2.0), mid_lag);
            let k3 = rhs(y + k2 * (h / 2.0), mid_lag);
            let k4 = rhs(y + k3 * h, end_lag);
            c.push(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
        }
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Propagation("delay equation produced non-finite amplitudes".into()));
    }
    Ok(AmplitudeSeries {
        times: (0..c.len()).map(|i| i as f64 * h).collect(),
        amplitudes: c,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub coefficients: DdeCoefficients,
    /// `max_t |c_dde − c_ref| / max_t |c_ref|` over the common grid.
    pub relative_error: f64,
    pub reference: AmplitudeSeries,
    pub model: AmplitudeSeries,
}

/// Least-squares fit of real `(Γ₀, Γ_fb)` to a reference amplitude sampled on a grid
/// commensurate with the delay, followed by a check of the integrated delay equation.
pub fn calibrate_feedback(spec: &DdeSpec, reference: &AmplitudeSeries) -> Result<Calibration> {
    spec.validate()?;
    if !(spec.delay > 0.0) {
        return Err(Error::InvalidParameter("calibration needs a positive delay".into()));
    }
    let n = reference.times.len();
    if n < 5 {
        return Err(Error::InvalidParameter("reference series is too short".into()));
    }
    let h = reference.times[1] - reference.times[0];
    let lag = (spec.delay / h).round() as usize;
    if ((lag as f64) * h - spec.delay).abs() > 1e-9 * spec.delay.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "reference sampling {h} does not divide the delay {}",
            spec.delay
        )));
    }
    let e = Complex::from_polar(1.0, spec.phase);
    let c = &reference.amplitudes;
    // normal equations for min Σ |ċ + Γ₀ c + Γ_fb z|² over real coefficients
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 1..n - 1 {
        if i < 3 || i.abs_diff(lag) < 3 {
            continue;
        }
        let deriv = (c[i + 1] - c[i - 1]) / (2.0 * h);
        let z = if i >= lag { e * c[i - lag] } else { Complex::new(0.0, 0.0) };
        a11 += c[i].norm_sqr();
        a12 += (c[i].conj() * z).re;
        a22 += z.norm_sqr();
        b1 -= (c[i].conj() * deriv).re;
        b2 -= (z.conj() * deriv).re;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-300) {
        return Err(Error::Calibration(f64::INFINITY));
    }
    let coefficients = DdeCoefficients {
        local: (b1 * a22 - b2 * a12) / det,
        feedback: (a11 * b2 - a12 * b1) / det,
    };
    let model = feedback_dde(
        &DdeSpec {
            horizon: reference.times[n - 1],
            ..*spec
        },
        coefficients,
    )?;
    let peak = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (t, z) in reference.times.iter().zip(c) {
        let k = (t / (model.times[1] - model.times[0])).round() as usize;
        if let Some(m) = model.amplitudes.get(k) {
            if (model.times[k] - t).abs() < 1e-9 {
                worst = worst.max((m - z).norm());
            }
        }
    }
    let relative_error = worst / peak;
    let result = Calibration {
        coefficients,
        relative_error,
        reference: reference.clone(),
        model,
    };
    if relative_error > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration(relative_error));
    }
    Ok(result)
}

/// Builds the full-mode reference for a two-point loop (chain padded past the
/// horizon) and calibrates the delay equation against it. `oracle_dt` must divide the delay.
pub fn calibrated_feedback_dde(spec: &DdeSpec, oracle_dt: f64) -> Result<Calibration> {
    spec.validate()?;
    let delay_steps = (spec.delay / oracle_dt).round() as usize;
    if delay_steps == 0 || ((delay_steps as f64) * oracle_dt - spec.delay).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "oracle step {oracle_dt} must divide the delay {}",
            spec.delay
        )));
    }
    let variant = CouplingVariant::TwoPointFeedback {
        rate: spec.rate,
        phase: spec.phase,
        delay_steps,
    };
    let sites = delay_steps + 1 + (spec.horizon / oracle_dt).ceil() as usize + 1;
    let profile = build_coupling::<f64>(&variant, delay_steps + 1, oracle_dt)?.zero_padded(sites);
    let reference = single_excitation_schrodinger(&profile, oracle_dt, spec.horizon, spec.step)?;
    calibrate_feedback(spec, &reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(phase: f64, delay: f64) -> DdeSpec {
        DdeSpec {
            rate: 1.0,
            phase,
            delay,
            horizon: 5.0,
            step: 0.01,
        }
    }

    #[test]
    fn zero_delay_is_exponential() {
        let s = feedback_dde(&spec(0.0, 0.0), DdeCoefficients { local: 1.0, feedback: 1.0 }).unwrap();
        for (t, c) in s.times.iter().zip(&s.amplitudes) {
            assert!((c.re - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn destructive_loop_traps_population() {
        // φ = π: c(∞) = 1/(1 + γτ) for Γ₀ = Γ_fb = γ
        let s = feedback_dde(
            &DdeSpec { horizon: 20.0, ..spec(std::f64::consts::PI, 0.5) },
            DdeCoefficients { local: 1.0, feedback: 1.0 },
        )
        .unwrap();
        let last = *s.amplitudes.last().unwrap();
        assert!((last.re - 1.0 / 1.5).abs() < 1e-6, "{last}");
        // decay is not monotone in |c|² only after τ; before τ it is e^{−2t}
        let before = s.population_at(0.4).unwrap();
        assert!((before - (-0.8f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn invalid_specs() {
        assert!(feedback_dde(&DdeSpec { step: 0.2, ..spec(0.0, 0.5) }, DdeCoefficients { local: 1.0, feedback: 1.0 }).is_err());
        assert!(calibrate_feedback(&spec(0.0, 0.0), &AmplitudeSeries { times: vec![], amplitudes: vec![] }).is_err());
    }
}
