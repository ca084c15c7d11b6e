//! Flux-dependent T1 interpolation and 1/f flux-noise generation.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cubic spline through measured (flux, T1) points with not-a-knot end
/// conditions and flat extrapolation outside the knot range.
///
/// Knot values are in μs; [`T1Interpolant::t1_ns`] converts to ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Interpolant {
    flux: Vec<f64>,
    t1_us: Vec<f64>,
    // second derivatives at the knots
    curvature: Vec<f64>,
}

pub fn t1_fit(knots: &[(f64, f64)]) -> Result<T1Interpolant> {
    T1Interpolant::fit(knots)
}

impl T1Interpolant {
    pub fn fit(knots: &[(f64, f64)]) -> Result<Self> {
        let n = knots.len();
        if n < 4 {
            return Err(Error::Config(format!("T1 fit needs at least 4 knots, got {n}")));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("T1 knot fluxes must be strictly increasing".into()));
        }
        if knots.iter().any(|&(a, t)| !(t > 0.0) || !a.is_finite() || !t.is_finite()) {
            return Err(Error::Config("T1 knot values must be positive and finite".into()));
        }
        let x: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();

        let mut sys = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        // not-a-knot: third derivative continuous across x[1] and x[n-2]
        sys[(0, 0)] = h[1];
        sys[(0, 1)] = -(h[0] + h[1]);
        sys[(0, 2)] = h[0];
        for i in 1..n - 1 {
            sys[(i, i - 1)] = h[i - 1];
            sys[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            sys[(i, i + 1)] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        sys[(n - 1, n - 3)] = h[n - 2];
        sys[(n - 1, n - 2)] = -(h[n - 3] + h[n - 2]);
        sys[(n - 1, n - 1)] = h[n - 3];
        let m = sys
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular spline system".into()))?;
        let spline = Self { flux: x, t1_us: y, curvature: m.iter().copied().collect() };
        let lo = spline.flux[0];
        let hi = spline.flux[n - 1];
        for i in 0..=2000 {
            let a = lo + (hi - lo) * i as f64 / 2000.0;
            if !(spline.t1_us(a) > 0.0) {
                return Err(Error::Model(format!("T1 spline is not positive at flux {a}")));
            }
        }
        Ok(spline)
    }

    /// Synthetic stand-in for a measured curve: T1 = 100 μs at the
    /// frustration point rising to 700 μs at |a| = 0.5 GHz.
    pub fn synthetic() -> Self {
        Self::fit(&synthetic_t1_knots()).expect("valid synthetic knots")
    }

    /// Constant T1 over a wide flux range.
    pub fn flat(t1_us: f64) -> Result<Self> {
        let knots: Vec<(f64, f64)> = (0..5).map(|i| (-1.0 + 0.5 * i as f64, t1_us)).collect();
        Self::fit(&knots)
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.flux.iter().copied().zip(self.t1_us.iter().copied()).collect()
    }

    fn segment(&self, a: f64) -> usize {
        let n = self.flux.len();
        match self.flux.binary_search_by(|x| x.partial_cmp(&a).expect("finite flux")) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn t1_us(&self, a: f64) -> f64 {
        let n = self.flux.len();
        if a <= self.flux[0] {
            return self.t1_us[0];
        }
        if a >= self.flux[n - 1] {
            return self.t1_us[n - 1];
        }
        let i = self.segment(a);
        let h = self.flux[i + 1] - self.flux[i];
        let t = a - self.flux[i];
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        let b = (self.t1_us[i + 1] - self.t1_us[i]) / h - h * (2.0 * m0 + m1) / 6.0;
        self.t1_us[i] + t * (b + t * (m0 / 2.0 + t * (m1 - m0) / (6.0 * h)))
    }

    /// dT1/da in μs/GHz; zero in the flat extrapolation region.
    pub fn dt1_us(&self, a: f64) -> f64 {
        let n = self.flux.len();
        if a <= self.flux[0] || a >= self.flux[n - 1] {
            return 0.0;
        }
        let i = self.segment(a);
        let h = self.flux[i + 1] - self.flux[i];
        let t = a - self.flux[i];
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        let b = (self.t1_us[i + 1] - self.t1_us[i]) / h - h * (2.0 * m0 + m1) / 6.0;
        b + t * (m0 + t * (m1 - m0) / (2.0 * h))
    }

    pub fn t1_ns(&self, a: f64) -> f64 {
        1e3 * self.t1_us(a)
    }

    pub fn dt1_ns(&self, a: f64) -> f64 {
        1e3 * self.dt1_us(a)
    }

    /// Reads a `flux_GHz,T1_us` CSV with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "flux_GHz" || &headers[1] != "T1_us" {
            return Err(Error::Config(format!(
                "{}: expected header `flux_GHz,T1_us`",
                path.display()
            )));
        }
        let mut knots = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    Error::Config(format!("{}: row {}: {e}", path.display(), line + 2))
                })
            };
            knots.push((parse(0)?, parse(1)?));
        }
        Self::fit(&knots)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["flux_GHz", "T1_us"])?;
        for (a, t) in self.knots() {
            w.write_record([format!("{a:.17e}"), format!("{t:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// T1 = 100 + 2400·a² μs sampled every 0.1 GHz over |a| ≤ 0.5.
pub fn synthetic_t1_knots() -> Vec<(f64, f64)> {
    vec![
        (-0.5, 700.0),
        (-0.4, 484.0),
        (-0.3, 316.0),
        (-0.2, 196.0),
        (-0.1, 124.0),
        (0.0, 100.0),
        (0.1, 124.0),
        (0.2, 196.0),
        (0.3, 316.0),
        (0.4, 484.0),
        (0.5, 700.0),
    ]
}

/// Parameters for a 1/f flux-noise sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinkNoiseSpec {
    /// RMS amplitude in GHz.
    pub sigma: f64,
    /// Sample spacing in ns (one sample per time step).
    pub dt_ns: f64,
    pub length: usize,
    pub seed: u64,
    /// FIR length; `None` picks the largest odd number not above `length`,
    /// which puts the low-frequency cutoff at 1/length.
    pub filter_taps: Option<usize>,
}

impl Default for PinkNoiseSpec {
    fn default() -> Self {
        Self { sigma: 2.5e-5, dt_ns: 0.1, length: 1 << 16, seed: 0, filter_taps: None }
    }
}

impl PinkNoiseSpec {
    pub fn taps(&self) -> usize {
        self.filter_taps.unwrap_or(if self.length % 2 == 1 { self.length } else { self.length.max(2) - 1 })
    }
}

/// FIR with magnitude response 1/√f (cut off below `f_cut`), designed by
/// frequency sampling with linear phase.
pub fn pink_fir(taps: usize, f_cut: f64) -> Vec<f64> {
    let mut spectrum: Vec<Complex64> = (0..taps)
        .map(|k| {
            let kk = k.min(taps - k) as f64;
            let f = kk / taps as f64;
            Complex64::new(1.0 / f.max(f_cut).sqrt(), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(taps).process(&mut spectrum);
    let shift = (taps - 1) / 2;
    (0..taps)
        .map(|j| spectrum[(j + taps - shift) % taps].re / taps as f64)
        .collect()
}

/// Precomputed FIR spectrum for repeated 1/f draws with a fixed length.
pub struct PinkNoiseGenerator {
    sigma: f64,
    length: usize,
    taps: usize,
    filter: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PinkNoiseGenerator {
    pub fn new(spec: &PinkNoiseSpec) -> Result<Self> {
        let len = spec.length;
        let taps = spec.taps();
        if len == 0 || taps == 0 {
            return Err(Error::InvalidInput("noise length and filter taps must be positive".into()));
        }
        if len < taps {
            return Err(Error::InvalidInput(format!("noise length {len} shorter than filter length {taps}")));
        }
        if !(spec.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("noise sigma must be non-negative, got {}", spec.sigma)));
        }
        let h = pink_fir(taps, 1.0 / len as f64);
        let n_fft = (len + 2 * (taps - 1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_fft);
        let inv = planner.plan_fft_inverse(n_fft);
        let mut filter: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        filter.resize(n_fft, Complex64::new(0.0, 0.0));
        fwd.process(&mut filter);
        Ok(Self { sigma: spec.sigma, length: len, taps, filter, fwd, inv })
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// One sequence drawn from `rng`, scaled to sample std `sigma`.
    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let len = self.length;
        if self.sigma == 0.0 {
            return Ok(vec![0.0; len]);
        }
        let taps = self.taps;
        let n_fft = self.filter.len();
        let mut wf: Vec<Complex64> = (0..len + taps - 1)
            .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
            .collect();
        wf.resize(n_fft, Complex64::new(0.0, 0.0));
        self.fwd.process(&mut wf);
        for (w, h) in wf.iter_mut().zip(&self.filter) {
            *w *= h;
        }
        self.inv.process(&mut wf);
        // keep only fully-overlapped outputs of the linear convolution
        let y: Vec<f64> = (0..len).map(|i| wf[i + taps - 1].re / n_fft as f64).collect();
        let std = sample_std(&y);
        if !(std > 0.0) {
            return Err(Error::Numeric("filtered noise has zero variance".into()));
        }
        let scale = self.sigma / std;
        Ok(y.into_iter().map(|v| v * scale).collect())
    }
}

/// Filters standard-normal white noise into a 1/f sequence scaled to sample
/// standard deviation `spec.sigma`.
pub fn pink_noise(spec: &PinkNoiseSpec) -> Result<Vec<f64>> {
    let gen = PinkNoiseGenerator::new(spec)?;
    gen.generate(&mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Population standard deviation about the sample mean.
pub fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Least-squares slope of log10 periodogram against log10 frequency over the
/// two decades centred (in log frequency) on the resolvable band [1/N, 1/2].
pub fn psd_loglog_slope(x: &[f64]) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let lo = (1.0 / n as f64).log10();
    let hi = 0.5f64.log10();
    let centre = 0.5 * (lo + hi);
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, z) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let lf = (k as f64 / n as f64).log10();
        if lf < centre - 1.0 || lf > centre + 1.0 {
            continue;
        }
        let lp = z.norm_sqr().log10();
        sx += lf;
        sy += lp;
        sxx += lf * lf;
        sxy += lf * lp;
        cnt += 1.0;
    }
    (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx)
}

pub fn write_noise_csv(path: &Path, seq: &[f64]) -> Result<()> {
    let mut out = String::from("delta_a_GHz\n");
    for v in seq {
        out.push_str(&format!("{v:.17e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spline_hits_knots_and_flat_data() {
        let t1 = T1Interpolant::synthetic();
        for (a, v) in synthetic_t1_knots() {
            assert_relative_eq!(t1.t1_us(a), v, max_relative = 1e-9);
        }
        let flat = T1Interpolant::flat(250.0).unwrap();
        assert_relative_eq!(flat.t1_us(0.123), 250.0, max_relative = 1e-12);
        assert_eq!(flat.dt1_us(0.3), 0.0);
    }

    #[test]
    fn spline_reproduces_cubics() {
        let f = |a: f64| 3.0 + a - 2.0 * a * a + 0.7 * a * a * a;
        let knots: Vec<(f64, f64)> = [0.0, 0.3, 0.45, 1.0, 1.6, 2.0].iter().map(|&a| (a, f(a))).collect();
        let s = T1Interpolant::fit(&knots).unwrap();
        for i in 0..200 {
            let a = 2.0 * i as f64 / 199.0;
            assert!((s.t1_us(a) - f(a)).abs() < 1e-10, "a={a}");
            let df = 1.0 - 4.0 * a + 2.1 * a * a;
            assert!((s.dt1_us(a) - df).abs() < 1e-9 || a == 0.0 || a == 2.0);
        }
    }

    #[test]
    fn spline_extrapolates_flat_and_stays_positive() {
        let t1 = T1Interpolant::synthetic();
        assert_eq!(t1.t1_us(0.9), t1.t1_us(0.5));
        assert_eq!(t1.t1_us(-3.0), t1.t1_us(-0.5));
        for i in 0..=1000 {
            let a = -0.5 + i as f64 / 1000.0;
            assert!(t1.t1_us(a) > 0.0);
        }
    }

    #[test]
    fn spline_derivative_matches_finite_difference() {
        let t1 = T1Interpolant::synthetic();
        for a in [-0.43, -0.2, 0.01, 0.33] {
            let fd = (t1.t1_us(a + 1e-6) - t1.t1_us(a - 1e-6)) / 2e-6;
            assert!((t1.dt1_us(a) - fd).abs() < 1e-5);
        }
    }

    #[test]
    fn spline_rejects_bad_knots() {
        assert!(T1Interpolant::fit(&[(0.0, 1.0), (0.1, 1.0), (0.2, 1.0)]).is_err());
        assert!(T1Interpolant::fit(&[(0.0, 1.0), (0.2, 1.0), (0.1, 1.0), (0.3, 1.0)]).is_err());
        assert!(T1Interpolant::fit(&[(0.0, 1.0), (0.1, -1.0), (0.2, 1.0), (0.3, 1.0)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t1.csv");
        let t1 = T1Interpolant::synthetic();
        t1.write_csv(&p).unwrap();
        let back = T1Interpolant::from_csv(&p).unwrap();
        assert_eq!(back.knots(), t1.knots());
        std::fs::write(&p, "a,b\n0,1\n").unwrap();
        assert!(T1Interpolant::from_csv(&p).is_err());
    }

    fn spec(sigma: f64, seed: u64, length: usize) -> PinkNoiseSpec {
        PinkNoiseSpec { sigma, seed, length, ..Default::default() }
    }

    #[test]
    fn zero_sigma_gives_zeros() {
        assert!(pink_noise(&spec(0.0, 1, 1000)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let a = pink_noise(&spec(2.5e-5, 7, 4096)).unwrap();
        let b = pink_noise(&spec(2.5e-5, 7, 4096)).unwrap();
        let c = pink_noise(&spec(2.5e-5, 8, 4096)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_is_scaled_exactly_and_linear_in_sigma() {
        let a = pink_noise(&spec(2.5e-5, 3, 5000)).unwrap();
        assert!((sample_std(&a) - 2.5e-5).abs() < 1e-12 * 2.5e-5 + 1e-20);
        let b = pink_noise(&spec(5e-5, 3, 5000)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn noise_rejects_short_sequences() {
        let s = PinkNoiseSpec { filter_taps: Some(257), length: 100, ..Default::default() };
        assert!(pink_noise(&s).is_err());
    }

    #[test]
    fn noise_has_one_over_f_slope() {
        for seed in 0..3 {
            let x = pink_noise(&spec(2.5e-5, seed, 1 << 16)).unwrap();
            let slope = psd_loglog_slope(&x);
            assert!((slope + 1.0).abs() <= 0.15, "seed {seed}: slope {slope}");
        }
    }

    #[test]
    fn white_noise_slope_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1 << 14).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(psd_loglog_slope(&x).abs() < 0.1);
    }
}
