//! Piecewise-constant flux pulses as consumed by the evaluation harness.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{qubit_propagator, FluxoniumParams, GateKind, C64};

/// Knot-sampled pulse. Step `k` holds flux `a[k]` for `dt[k]` ns; the last
/// knot closes the pulse and its `dt` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub d2a: Vec<f64>,
    pub dt: Vec<f64>,
}

impl Pulse {
    /// Piecewise-constant pulse from per-step flux values and durations.
    pub fn from_steps(a: &[f64], dt: &[f64]) -> Result<Self> {
        if a.len() != dt.len() || a.is_empty() {
            return Err(Error::InvalidInput("need one duration per flux step".into()));
        }
        let n = a.len() + 1;
        let mut t = Vec::with_capacity(n);
        let mut acc = 0.0;
        t.push(0.0);
        for &h in dt {
            acc += h;
            t.push(acc);
        }
        let mut av = a.to_vec();
        av.push(*a.last().expect("non-empty"));
        let mut dtv = dt.to_vec();
        dtv.push(0.0);
        let p = Self { t, a: av, da: vec![0.0; n], d2a: vec![0.0; n], dt: dtv };
        p.validate()?;
        Ok(p)
    }

    pub fn n_knots(&self) -> usize {
        self.t.len()
    }

    pub fn n_steps(&self) -> usize {
        self.t.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.dt[..self.n_steps()].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::Config("pulse needs at least two knots".into()));
        }
        if [self.a.len(), self.da.len(), self.d2a.len(), self.dt.len()].iter().any(|&l| l != n) {
            return Err(Error::Config("pulse columns have different lengths".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.t) && finite(&self.a) && finite(&self.da) && finite(&self.d2a) && finite(&self.dt)) {
            return Err(Error::Config("pulse contains non-finite values".into()));
        }
        for k in 0..n - 1 {
            let h = self.dt[k];
            if !(h > 0.0) {
                return Err(Error::Config(format!("pulse step {k} has non-positive duration {h}")));
            }
            let gap = self.t[k + 1] - self.t[k];
            if (gap - h).abs() > 1e-9 * self.t[k + 1].abs().max(1.0) {
                return Err(Error::Config(format!("pulse time grid disagrees with dt at step {k}")));
            }
        }
        Ok(())
    }

    /// Closed-system gate unitary with qubit frequency `f_q`.
    pub fn unitary(&self, f_q: f64) -> Matrix2<C64> {
        let mut u = Matrix2::identity();
        for k in 0..self.n_steps() {
            u = qubit_propagator(self.a[k], f_q, self.dt[k]) * u;
        }
        u
    }

    /// Concatenation `self` then `other`.
    pub fn then(&self, other: &Pulse) -> Result<Pulse> {
        let n = self.n_steps();
        let m = other.n_steps();
        let a: Vec<f64> = self.a[..n].iter().chain(&other.a[..m]).copied().collect();
        let dt: Vec<f64> = self.dt[..n].iter().chain(&other.dt[..m]).copied().collect();
        Pulse::from_steps(&a, &dt)
    }
}

/// Constant flux `a` for `duration` ns, split into equal steps no longer
/// than `max_dt`.
pub fn constant_pulse(a: f64, duration: f64, max_dt: f64) -> Result<Pulse> {
    if !(duration > 0.0 && max_dt > 0.0) {
        return Err(Error::InvalidInput("duration and step must be positive".into()));
    }
    let n = (duration / max_dt).ceil().max(1.0) as usize;
    Pulse::from_steps(&vec![a; n], &vec![duration / n as f64; n])
}

/// Textbook flux-pulse realizations of the π/2 gates.
///
/// Z/2 idles for a quarter Larmor period. A flux step to a = f_q for
/// 1/(2√2 f_q) is a Hadamard up to phase, so X/2 = H·Z/2·H and
/// Y/2 = H·Z (a half-period idle followed by H).
pub fn analytic_pulse(kind: GateKind, params: &FluxoniumParams, max_dt: f64) -> Result<Pulse> {
    let f = params.f_q;
    let quarter = 1.0 / (4.0 * f);
    let hadamard = || constant_pulse(f, 1.0 / (2.0 * 2f64.sqrt() * f), max_dt);
    match kind {
        GateKind::ZHalf => constant_pulse(0.0, quarter, max_dt),
        GateKind::XHalf => hadamard()?.then(&constant_pulse(0.0, quarter, max_dt)?)?.then(&hadamard()?),
        GateKind::YHalf => constant_pulse(0.0, 2.0 * quarter, max_dt)?.then(&hadamard()?),
        GateKind::Custom => Err(Error::InvalidInput("no analytic pulse for custom gates".into())),
    }
}
