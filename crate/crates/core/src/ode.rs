//! Adaptive Dormand–Prince 5(4) integrator for autonomous linear systems over
//! complex vectors. Shared by the Schrödinger propagator and the Lindblad solver.

use crate::error::{Error, Result};
use crate::scalar::{all_finite, czero, Cx, Real};

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone)]
pub(crate) struct Dopri5<T> {
    k: Vec<Vec<Cx<T>>>,
    stage: Vec<Cx<T>>,
    y_new: Vec<Cx<T>>,
    fsal: bool,
    last_h: Option<T>,
}

impl<T: Real> Dopri5<T> {
    pub fn new(n: usize) -> Self {
        Self {
            k: vec![vec![czero(); n]; 7],
            stage: vec![czero(); n],
            y_new: vec![czero(); n],
            fsal: false,
            last_h: None,
        }
    }

    /// Advances `y` by `span` under `y' = f(y)`; returns the number of accepted steps.
    pub fn integrate<F>(&mut self, y: &mut [Cx<T>], span: T, rtol: T, atol: T, max_steps: usize, mut f: F) -> Result<usize>
    where
        F: FnMut(&[Cx<T>], &mut [Cx<T>]),
    {
        let n = y.len();
        if self.stage.len() != n {
            *self = Self::new(n);
        }
        self.fsal = false;
        let mut t = T::zero();
        let mut h = self.last_h.unwrap_or(span).min(span);
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        let e = E.map(T::of);
        while t < span {
            attempts += 1;
            if attempts > max_steps {
                return Err(Error::Propagation(format!(
                    "no convergence within {max_steps} substeps"
                )));
            }
            let last = span - t <= h * T::of(1.0 + 1e-12);
            if last {
                h = span - t;
            }
            if !self.fsal {
                f(y, &mut self.k[0]);
                self.fsal = true;
            }
            for s in 0..6 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, &a) in A[s].iter().enumerate().take(s + 1) {
                        if a != 0.0 {
                            acc = acc + self.k[j][i] * (h * T::of(a));
                        }
                    }
                    self.stage[i] = acc;
                }
                let (_, rest) = self.k.split_at_mut(s + 1);
                f(&self.stage, &mut rest[0]);
                if s == 5 {
                    self.y_new.copy_from_slice(&self.stage);
                }
            }
            // error estimate uses k1..k7, where k7 = f(y_new)
            let mut err = T::zero();
            for i in 0..n {
                let mut d = czero::<T>();
                for (j, &ej) in e.iter().enumerate() {
                    if ej != T::zero() {
                        d = d + self.k[j][i] * ej;
                    }
                }
                let scale = atol + rtol * y[i].norm().max(self.y_new[i].norm());
                err = err.max((d * h).norm() / scale);
            }
            if !err.is_finite() || !all_finite(&self.y_new) {
                return Err(Error::Propagation("non-finite amplitude encountered".into()));
            }
            if err <= T::one() {
                t = if last { span } else { t + h };
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                accepted += 1;
                let grow = if err > T::zero() {
                    (T::of(0.9) * err.powf(T::of(-0.2))).min(T::of(5.0))
                } else {
                    T::of(5.0)
                };
                if !last {
                    h = h * grow.max(T::one());
                }
                self.last_h = Some(if last { h.max(self.last_h.unwrap_or(h)) } else { h });
            } else {
                let shrink = (T::of(0.9) * err.powf(T::of(-0.2))).max(T::of(0.2));
                h = h * shrink;
            }
        }
        Ok(accepted)
    }
}
