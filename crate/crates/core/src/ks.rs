//! Kuramoto–Sivashinsky equation `u_t + u_xx + u_xxxx + u u_x = 0` on the
//! periodic domain `[-πL, πL)`.
//!
//! Space is Fourier-diagonalized: mode `k` has wavenumber `κ = k/L`, linear
//! symbol `κ² − κ⁴` and nonlinear term `−(iκ/2) FFT(u²)`. Time stepping is
//! ETDRK4 with φ-function weights evaluated by contour averaging.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Grid and time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsConfig {
    /// Bifurcation parameter; the domain is `[-πL, πL)`.
    pub l: f64,
    /// Number of grid points (a power of two).
    pub n: usize,
    pub dt: f64,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            l: 22.0,
            n: 512,
            dt: 0.5,
        }
    }
}

impl KsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ks.L",
                value: self.l,
                reason: "must be positive",
            });
        }
        if !self.n.is_power_of_two() || self.n < 4 {
            return Err(Error::InvalidParameter {
                name: "ks.n",
                value: self.n as f64,
                reason: "must be a power of two (at least 4)",
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ks.dt",
                value: self.dt,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// Grid spacing `2πL/n`.
    pub fn dx(&self) -> f64 {
        2.0 * PI * self.l / self.n as f64
    }

    /// `x_j = −πL + j·dx`, `j = 0 … n−1`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn x(&self, j: usize) -> f64 {
        -PI * self.l + j as f64 * self.dx()
    }

    /// Index of the grid point nearest to `x` (with periodic wrap).
    pub fn nearest_index(&self, x: f64) -> usize {
        let period = 2.0 * PI * self.l;
        let offset = (x + PI * self.l).rem_euclid(period);
        ((offset / self.dx()).round() as usize) % self.n
    }

    /// Signed integer mode index of FFT bin `j`.
    fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }
}

/// Linear growth rate `(k/L)² (1 − (k/L)²)` of Fourier mode `k`.
pub fn linear_growth_rate(k: f64, l: f64) -> f64 {
    let kappa2 = (k / l).powi(2);
    kappa2 * (1.0 - kappa2)
}

/// Physical field and time.
#[derive(Debug, Clone, PartialEq)]
pub struct KsState {
    pub u: Vec<f64>,
    pub t: f64,
}

impl KsState {
    pub fn mean(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.u.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `u₀(x) = cos(x/L) (1 + sin(x/L))` sampled on the grid at `t = 0`.
pub fn ks_initial_condition(cfg: &KsConfig) -> KsState {
    let u = cfg
        .grid()
        .into_iter()
        .map(|x| {
            let theta = x / cfg.l;
            theta.cos() * (1.0 + theta.sin())
        })
        .collect();
    KsState { u, t: 0.0 }
}

/// Per-mode ETDRK4 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Etdrk4Coeffs {
    /// Linear symbol `ℓ_k = κ² − κ⁴`.
    pub linear: Vec<f64>,
    pub e: Vec<f64>,
    pub e2: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

/// Evaluates the ETDRK4 weights, averaging each φ-type function over
/// `contour_points` equispaced points on the unit circle centred at `ℓ_k dt`.
pub fn etdrk4_precompute(cfg: &KsConfig, contour_points: usize) -> Result<Etdrk4Coeffs> {
    cfg.validate()?;
    if contour_points < 16 {
        return Err(Error::InvalidParameter {
            name: "contour_points",
            value: contour_points as f64,
            reason: "need at least 16 contour points",
        });
    }
    let h = cfg.dt;
    let roots: Vec<Complex64> = (0..contour_points)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * (m as f64 + 0.5) / contour_points as f64))
        .collect();
    let count = contour_points as f64;
    let n = cfg.n;
    let mut c = Etdrk4Coeffs {
        linear: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        e2: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        f1: Vec::with_capacity(n),
        f2: Vec::with_capacity(n),
        f3: Vec::with_capacity(n),
    };
    for j in 0..n {
        let kappa = cfg.mode(j).unsigned_abs() as f64 / cfg.l;
        let ell = kappa * kappa - kappa.powi(4);
        let z = ell * h;
        let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
        for r in &roots {
            let lr = r + z;
            let ez = lr.exp();
            let lr2 = lr * lr;
            let lr3 = lr2 * lr;
            q += (((lr * 0.5).exp() - 1.0) / lr).re;
            f1 += ((-4.0 - lr + ez * (4.0 - 3.0 * lr + lr2)) / lr3).re;
            f2 += ((2.0 + lr + ez * (lr - 2.0)) / lr3).re;
            f3 += ((-4.0 - 3.0 * lr - lr2 + ez * (4.0 - lr)) / lr3).re;
        }
        c.linear.push(ell);
        c.e.push(z.exp());
        c.e2.push((z / 2.0).exp());
        c.q.push(h * q / count);
        c.f1.push(h * f1 / count);
        c.f2.push(h * f2 / count);
        c.f3.push(h * f3 / count);
    }
    Ok(c)
}

/// Reusable ETDRK4 integrator for one configuration. Shareable across threads.
#[derive(Clone)]
pub struct KsSolver {
    cfg: KsConfig,
    coeffs: Etdrk4Coeffs,
    /// `−iκ/2` per bin, zero at the Nyquist bin to keep the field real.
    nonlinear: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KsSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KsSolver")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

/// Contour points used by [`KsSolver::new`].
pub const DEFAULT_CONTOUR_POINTS: usize = 32;

impl KsSolver {
    pub fn new(cfg: KsConfig) -> Result<Self> {
        Self::with_contour_points(cfg, DEFAULT_CONTOUR_POINTS)
    }

    pub fn with_contour_points(cfg: KsConfig, contour_points: usize) -> Result<Self> {
        let coeffs = etdrk4_precompute(&cfg, contour_points)?;
        let nonlinear = (0..cfg.n)
            .map(|j| {
                if j == cfg.n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -0.5 * cfg.mode(j) as f64 / cfg.l)
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(KsSolver {
            cfg,
            coeffs,
            nonlinear,
            forward: planner.plan_fft_forward(cfg.n),
            inverse: planner.plan_fft_inverse(cfg.n),
        })
    }

    pub fn config(&self) -> &KsConfig {
        &self.cfg
    }

    pub fn coeffs(&self) -> &Etdrk4Coeffs {
        &self.coeffs
    }

    /// `−(iκ/2) FFT(u²)` evaluated from the spectrum `v`.
    fn nonlinear_term(&self, v: &[Complex64], scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        let scale = 1.0 / self.cfg.n as f64;
        scratch.clear();
        scratch.extend_from_slice(v);
        self.inverse.process(scratch);
        for c in scratch.iter_mut() {
            let u = c.re * scale;
            *c = Complex64::new(u * u, 0.0);
        }
        self.forward.process(scratch);
        scratch
            .iter()
            .zip(&self.nonlinear)
            .map(|(a, g)| a * g)
            .collect()
    }

    /// Advances the field by one `dt`.
    pub fn step(&self, state: &KsState) -> Result<KsState> {
        let n = self.cfg.n;
        if state.u.len() != n {
            return Err(Error::LengthMismatch {
                what: "K-S state",
                expected: n,
                found: state.u.len(),
            });
        }
        let c = &self.coeffs;
        let mut v: Vec<Complex64> = state.u.iter().map(|&u| Complex64::new(u, 0.0)).collect();
        self.forward.process(&mut v);
        let mut scratch = Vec::with_capacity(n);

        let nv = self.nonlinear_term(&v, &mut scratch);
        let a: Vec<Complex64> = (0..n).map(|j| v[j] * c.e2[j] + nv[j] * c.q[j]).collect();
        let na = self.nonlinear_term(&a, &mut scratch);
        let b: Vec<Complex64> = (0..n).map(|j| v[j] * c.e2[j] + na[j] * c.q[j]).collect();
        let nb = self.nonlinear_term(&b, &mut scratch);
        let cc: Vec<Complex64> = (0..n)
            .map(|j| a[j] * c.e2[j] + (nb[j] * 2.0 - nv[j]) * c.q[j])
            .collect();
        let nc = self.nonlinear_term(&cc, &mut scratch);
        for j in 0..n {
            v[j] = v[j] * c.e[j]
                + nv[j] * c.f1[j]
                + (na[j] + nb[j]) * (2.0 * c.f2[j])
                + nc[j] * c.f3[j];
        }

        self.inverse.process(&mut v);
        let scale = 1.0 / n as f64;
        let u: Vec<f64> = v.iter().map(|z| z.re * scale).collect();
        let t = state.t + self.cfg.dt;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::SolverBlowup { t, step: 1 });
        }
        Ok(KsState { u, t })
    }

    /// Applies [`step`](Self::step) `steps` times.
    pub fn propagate(&self, state: &KsState, steps: usize) -> Result<KsState> {
        let mut current = state.clone();
        for k in 0..steps {
            current = self.step(&current).map_err(|e| match e {
                Error::SolverBlowup { t, .. } => Error::SolverBlowup { t, step: k + 1 },
                other => other,
            })?;
        }
        Ok(current)
    }

    /// Complex Fourier coefficient of bin `j` of a field (unnormalized FFT).
    pub fn spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut v);
        v
    }
}

/// One ETDRK4 step; see [`KsSolver::step`].
pub fn ks_step(state: &KsState, solver: &KsSolver) -> Result<KsState> {
    solver.step(state)
}

/// `steps` ETDRK4 steps; see [`KsSolver::propagate`].
pub fn ks_propagate(state: &KsState, solver: &KsSolver, steps: usize) -> Result<KsState> {
    solver.propagate(state, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_solver() -> KsSolver {
        KsSolver::new(KsConfig::default()).unwrap()
    }

    #[test]
    fn initial_condition_values() {
        let cfg = KsConfig::default();
        let s = ks_initial_condition(&cfg);
        assert_eq!(s.t, 0.0);
        // x = 0 sits at j = n/2
        assert!((s.u[cfg.n / 2] - 1.0).abs() < 1e-15);
        // x = πL/2 sits at j = 3n/4
        assert!(s.u[3 * cfg.n / 4].abs() < 1e-15);
        // max of cosθ(1 + sinθ) is (3√3)/4 at θ = π/6, found by dense scanning
        let dense_max = (0..200_000)
            .map(|i| {
                let th = -PI + 2.0 * PI * i as f64 / 200_000.0;
                th.cos() * (1.0 + th.sin())
            })
            .fold(f64::MIN, f64::max);
        assert!((dense_max - 3.0 * 3f64.sqrt() / 4.0).abs() < 1e-8);
        assert!(s.max_abs() <= dense_max + 1e-12);
        assert!(s.max_abs() > dense_max - 1e-3);
    }

    #[test]
    fn growth_rate_values() {
        assert_eq!(linear_growth_rate(0.0, 22.0), 0.0);
        assert_eq!(linear_growth_rate(22.0, 22.0), 0.0);
        let r: f64 = (15.0f64 / 22.0).powi(2);
        assert!((linear_growth_rate(15.0, 22.0) - r * (1.0 - r)).abs() < 1e-15);
        assert!((linear_growth_rate(15.0, 22.0) - 0.24877).abs() < 5e-6);
        assert!(linear_growth_rate(23.0, 22.0) < 0.0);
    }

    #[test]
    fn coefficients_at_mode_zero_match_series_limits() {
        // (e^{z/2} − 1)/z → 1/2 and the three f-weights → 1/6 at z = 0
        let cfg = KsConfig::default();
        let c = etdrk4_precompute(&cfg, 32).unwrap();
        assert_eq!(c.linear[0], 0.0);
        assert_eq!(c.e[0], 1.0);
        assert!((c.q[0] - cfg.dt / 2.0).abs() < 1e-13);
        for f in [&c.f1, &c.f2, &c.f3] {
            assert!((f[0] - cfg.dt / 6.0).abs() < 1e-13);
        }
    }

    #[test]
    fn coefficients_for_damped_modes_and_refinement() {
        let cfg = KsConfig::default();
        let c32 = etdrk4_precompute(&cfg, 32).unwrap();
        let c64 = etdrk4_precompute(&cfg, 64).unwrap();
        for j in 0..cfg.n {
            let z = c32.linear[j] * cfg.dt;
            if z < -1.0 {
                assert!((c32.e[j] - z.exp()).abs() < 1e-12);
            }
            for (a, b) in [
                (&c32.q, &c64.q),
                (&c32.f1, &c64.f1),
                (&c32.f2, &c64.f2),
                (&c32.f3, &c64.f3),
            ] {
                assert!((a[j] - b[j]).abs() < 1e-12, "bin {j}");
            }
        }
        assert!(etdrk4_precompute(&cfg, 8).is_err());
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let solver = paper_solver();
        let zero = KsState {
            u: vec![0.0; 512],
            t: 0.0,
        };
        let next = solver.step(&zero).unwrap();
        assert!(next.u.iter().all(|v| *v == 0.0));
        assert_eq!(next.t, 0.5);
    }

    #[test]
    fn small_modes_follow_linear_growth() {
        let cfg = KsConfig::default();
        let solver = KsSolver::new(cfg).unwrap();
        for k in [1usize, 5, 15, 22, 30] {
            let u: Vec<f64> = cfg
                .grid()
                .iter()
                .map(|x| 1e-8 * (k as f64 * x / cfg.l).cos())
                .collect();
            let start = KsState { u, t: 0.0 };
            let end = solver.propagate(&start, 2).unwrap();
            let a0 = solver.spectrum(&start.u)[k].norm();
            let a1 = solver.spectrum(&end.u)[k].norm();
            let measured = (a1 / a0).ln() / 1.0;
            let expected = linear_growth_rate(k as f64, cfg.l);
            assert!(
                (measured - expected).abs() <= 1e-3 * expected.abs().max(1e-3),
                "k={k}: {measured} vs {expected}"
            );
        }
    }

    #[test]
    fn mean_is_conserved_and_field_stays_real_and_bounded() {
        let solver = paper_solver();
        let mut s = ks_initial_condition(solver.config());
        // shift the mean so conservation is not trivially zero
        s.u.iter_mut().for_each(|v| *v += 0.25);
        let m0 = s.mean();
        let mut peak: f64 = 0.0;
        for _ in 0..600 {
            s = solver.step(&s).unwrap();
            peak = peak.max(s.max_abs());
        }
        assert!((s.mean() - m0).abs() < 1e-8);
        assert!(peak < 10.0, "peak {peak}");
        assert!((s.t - 300.0).abs() < 1e-9);
    }

    #[test]
    fn propagation_composes_bit_for_bit() {
        let solver = paper_solver();
        let s = ks_initial_condition(solver.config());
        let direct = solver.propagate(&s, 30).unwrap();
        let split = solver
            .propagate(&solver.propagate(&s, 12).unwrap(), 18)
            .unwrap();
        assert_eq!(direct, split);
        assert_eq!(solver.propagate(&s, 0).unwrap(), s);
    }

    #[test]
    fn blowup_is_reported() {
        let solver = paper_solver();
        let mut s = ks_initial_condition(solver.config());
        s.u[3] = f64::NAN;
        assert!(matches!(
            solver.propagate(&s, 5),
            Err(Error::SolverBlowup { step: 1, .. })
        ));
        assert!(solver
            .step(&KsState {
                u: vec![0.0; 8],
                t: 0.0
            })
            .is_err());
    }

    #[test]
    fn grid_helpers() {
        let cfg = KsConfig::default();
        assert!((cfg.x(0) + PI * 22.0).abs() < 1e-12);
        assert_eq!(cfg.nearest_index(0.0), 256);
        assert_eq!(cfg.nearest_index(PI * 22.0), 0);
        assert!(KsConfig { n: 500, ..cfg }.validate().is_err());
        assert!(KsConfig { dt: 0.0, ..cfg }.validate().is_err());
    }
}
