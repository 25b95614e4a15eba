//! First-order Krotov optimization of end-to-end single-excitation transfer
//! with one local `z` field on site 1, and minimum-duration scans.
//!
//! The control term is `u(t) σ₁ᶻ/2`, which keeps the dynamics inside the
//! one-excitation sector (dimension `N`). Pulses are piecewise constant on
//! `n_slices` equal slices; each slice is propagated with a Taylor series of
//! the slice propagator summed until the remainder drops below machine
//! precision.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::chain_model::{assemble_hamiltonian, build_couplings, pattern, ChainParams, SubspaceBasis};
use crate::error::{Error, Result};

type CVec = DVector<Complex64>;

/// Optimization settings; defaults follow the reference protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrotovConfig {
    /// Step-size penalty `λ_a`.
    pub lambda_a: f64,
    pub max_iters: usize,
    /// Stop once the infidelity falls below this value.
    pub threshold: f64,
    /// `None` selects `max(1000, ceil(20 T))`.
    pub n_slices: Option<usize>,
    /// Iterations with relative change below `stall_tol` before `λ_a` is halved.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Factor applied to `λ_a` after every accepted iteration (1 disables it).
    pub lambda_decay: f64,
    /// Lower bound for the adapted `λ_a`.
    pub lambda_min: f64,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            lambda_a: 1.0,
            max_iters: 5000,
            threshold: 1e-6,
            n_slices: None,
            stall_window: 50,
            stall_tol: 1e-12,
            lambda_decay: 0.9,
            lambda_min: 1e-3,
        }
    }
}

pub fn default_slices(duration: f64) -> usize {
    1000.max((20.0 * duration).ceil() as usize)
}

/// `S(t) = sin²(πt/T)`.
pub fn shape(t: f64, duration: f64) -> f64 {
    (PI * t / duration).sin().powi(2)
}

/// Default guess `u₀(t) = 0.1 S(t)` sampled at slice midpoints.
pub fn default_guess(duration: f64, n_slices: usize) -> Vec<f64> {
    let dt = duration / n_slices as f64;
    (0..n_slices)
        .map(|k| 0.1 * shape((k as f64 + 0.5) * dt, duration))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseProtocol {
    pub duration: f64,
    pub n_slices: usize,
    /// Control value on each slice (slice midpoints `t_k = (k + 1/2) T/n`).
    pub controls: Vec<f64>,
    /// Shape function at the slice midpoints.
    pub shape: Vec<f64>,
    /// Guess value at `t = 0` and `t = T`, where `S` vanishes.
    pub boundary: (f64, f64),
    /// `λ_a` in force when the run ended.
    pub lambda_a: f64,
    /// Infidelity before the first update and after each accepted iteration.
    pub history: Vec<f64>,
}

impl PulseProtocol {
    pub fn dt(&self) -> f64 {
        self.duration / self.n_slices as f64
    }

    /// Slice midpoints.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_slices).map(|k| (k as f64 + 0.5) * dt).collect()
    }

    /// Piecewise-linear control through the midpoints, pinned to the
    /// boundary values at `t = 0` and `t = T`.
    pub fn value_at(&self, t: f64) -> f64 {
        let dt = self.dt();
        if t <= 0.0 {
            return self.boundary.0;
        }
        if t >= self.duration {
            return self.boundary.1;
        }
        let x = t / dt - 0.5;
        if x <= 0.0 {
            let w = (t / (0.5 * dt)).clamp(0.0, 1.0);
            return self.boundary.0 * (1.0 - w) + self.controls[0] * w;
        }
        let last = self.n_slices - 1;
        if x >= last as f64 {
            let w = ((t - (last as f64 + 0.5) * dt) / (0.5 * dt)).clamp(0.0, 1.0);
            return self.controls[last] * (1.0 - w) + self.boundary.1 * w;
        }
        let k = x.floor() as usize;
        let w = x - k as f64;
        self.controls[k] * (1.0 - w) + self.controls[k + 1] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlResult {
    pub infidelity: f64,
    pub converged: bool,
    pub iterations: usize,
    pub pulse: PulseProtocol,
}

/// One-excitation dynamics with a local field on site 1.
#[derive(Debug, Clone)]
pub struct ControlledChain {
    drift: DMatrix<f64>,
    /// Diagonal of `∂H/∂u`.
    control: Vec<f64>,
    initial: CVec,
    target: CVec,
}

impl ControlledChain {
    pub fn new(params: &ChainParams) -> Result<Self> {
        Self::with_control(params, ControlOperator::SigmaZHalf)
    }

    pub fn with_control(params: &ChainParams, op: ControlOperator) -> Result<Self> {
        params.validate()?;
        if !params.conserves_magnetization() {
            return Err(Error::param(
                "k_dip",
                "sector-based control requires conserved magnetization",
            ));
        }
        let n = params.n_sites;
        let basis = Arc::new(SubspaceBasis::sector(n, 1)?);
        let couplings = build_couplings(params, None)?;
        let h = assemble_hamiltonian(params, &couplings, Arc::clone(&basis))?;
        let drift = h.matrix().map(|z| z.re);
        let site1 = basis.require_index(pattern(&[1]))?;
        let control = (0..basis.dim())
            .map(|i| {
                let excited = i == site1;
                match op {
                    // σᶻ = +1 without excitation, −1 with
                    ControlOperator::SigmaZHalf => if excited { -0.5 } else { 0.5 },
                    ControlOperator::Occupation => if excited { -1.0 } else { 0.0 },
                }
            })
            .collect();
        let unit = |idx: usize| {
            let mut v = CVec::from_element(basis.dim(), Complex64::new(0.0, 0.0));
            v[idx] = Complex64::new(1.0, 0.0);
            v
        };
        Ok(Self {
            drift,
            control,
            initial: unit(site1),
            target: unit(basis.require_index(pattern(&[n]))?),
        })
    }

    pub fn dim(&self) -> usize {
        self.control.len()
    }

    /// `e^{∓i(H₀ + uD)dt} ψ`; `backward` selects the adjoint.
    fn step(&self, psi: &CVec, u: f64, dt: f64, backward: bool) -> CVec {
        let dim = self.dim();
        let factor = if backward { dt } else { -dt };
        let mut acc = psi.clone();
        let mut term = psi.clone();
        let mut next = CVec::from_element(dim, Complex64::new(0.0, 0.0));
        for order in 1..60 {
            for r in 0..dim {
                let mut s = Complex64::new(self.control[r] * u, 0.0) * term[r];
                for c in 0..dim {
                    s += term[c] * self.drift[(r, c)];
                }
                // multiply by −i·factor/order (sign folded into `factor`)
                next[r] = Complex64::new(-s.im, s.re) * (factor / order as f64);
            }
            std::mem::swap(&mut term, &mut next);
            acc += &term;
            if term.norm_squared() < 1e-34 {
                break;
            }
        }
        acc
    }

    /// Final state for a piecewise-constant pulse.
    pub fn evolve(&self, controls: &[f64], duration: f64) -> CVec {
        let dt = duration / controls.len() as f64;
        controls
            .iter()
            .fold(self.initial.clone(), |psi, &u| self.step(&psi, u, dt, false))
    }

    /// Forward trajectory at every slice boundary (`n + 1` states).
    pub fn trajectory(&self, controls: &[f64], duration: f64) -> Vec<CVec> {
        let dt = duration / controls.len() as f64;
        let mut out = Vec::with_capacity(controls.len() + 1);
        out.push(self.initial.clone());
        for &u in controls {
            let next = self.step(out.last().expect("non-empty"), u, dt, false);
            out.push(next);
        }
        out
    }

    /// `J_T = 1 − |⟨target|ψ(T)⟩|²`.
    pub fn infidelity(&self, psi_t: &CVec) -> f64 {
        (1.0 - self.target.dotc(psi_t).norm_sqr()).clamp(0.0, 1.0)
    }
}

/// Coupling of the control field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlOperator {
    /// `σ₁ᶻ/2`, the physical local field.
    SigmaZHalf,
    /// `−n₁`: the same operator with its identity part removed.
    Occupation,
}

/// Runs Krotov iterations from `guess` (slice values) for a pulse of length `duration`.
///
/// Iterations that would raise the infidelity are rejected and retried with
/// `λ_a` doubled, so the recorded history is non-increasing.
pub fn krotov_optimize(
    params: &ChainParams,
    duration: f64,
    guess: Option<Vec<f64>>,
    config: &KrotovConfig,
) -> Result<ControlResult> {
    let chain = ControlledChain::new(params)?;
    krotov_optimize_chain(&chain, duration, guess, config)
}

pub fn krotov_optimize_chain(
    chain: &ControlledChain,
    duration: f64,
    guess: Option<Vec<f64>>,
    config: &KrotovConfig,
) -> Result<ControlResult> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::param("duration", format!("{duration} must be positive")));
    }
    if !(config.lambda_a > 0.0 && config.lambda_a.is_finite()) {
        return Err(Error::param("lambda_a", format!("{} must be positive", config.lambda_a)));
    }
    let n = match (&guess, config.n_slices) {
        (Some(g), _) => g.len(),
        (None, Some(n)) => n,
        (None, None) => default_slices(duration),
    };
    if n == 0 {
        return Err(Error::param("n_slices", "must be positive"));
    }
    if let Some(s) = config.n_slices {
        if s != n {
            return Err(Error::DimensionMismatch {
                what: "guess pulse",
                expected: s,
                got: n,
            });
        }
    }
    let mut controls = guess.unwrap_or_else(|| default_guess(duration, n));
    if controls.iter().any(|u| !u.is_finite()) {
        return Err(Error::param("guess", "non-finite control value"));
    }
    let dt = duration / n as f64;
    let shape_vals: Vec<f64> = (0..n).map(|k| shape((k as f64 + 0.5) * dt, duration)).collect();

    let mut lambda = config.lambda_a;
    let mut psi_t = chain.evolve(&controls, duration);
    let mut j_t = chain.infidelity(&psi_t);
    let mut history = vec![j_t];
    let mut iterations = 0;
    let mut stalled = 0;
    let mut chi = vec![CVec::zeros(chain.dim()); n + 1];

    while iterations < config.max_iters && j_t >= config.threshold {
        // backward co-states under the current pulse
        chi[n] = &chain.target * chain.target.dotc(&psi_t);
        for k in (0..n).rev() {
            chi[k] = chain.step(&chi[k + 1], controls[k], dt, true);
        }

        let mut attempt = 0;
        let (new_controls, new_psi, new_j) = loop {
            let mut updated = controls.clone();
            let mut psi = chain.initial.clone();
            for k in 0..n {
                let overlap: Complex64 = (0..chain.dim())
                    .map(|r| chi[k][r].conj() * chain.control[r] * psi[r])
                    .sum();
                updated[k] += shape_vals[k] / lambda * overlap.im;
                psi = chain.step(&psi, updated[k], dt, false);
            }
            let j_new = chain.infidelity(&psi);
            if j_new <= j_t || attempt >= 40 {
                break (updated, psi, j_new);
            }
            lambda *= 2.0;
            attempt += 1;
        };
        if new_j > j_t {
            // no acceptable step even with a tiny update
            break;
        }
        let rel = (j_t - new_j) / j_t.max(f64::MIN_POSITIVE);
        controls = new_controls;
        psi_t = new_psi;
        j_t = new_j;
        history.push(j_t);
        iterations += 1;

        lambda = (lambda * config.lambda_decay).max(config.lambda_min.min(lambda));
        if rel < config.stall_tol {
            stalled += 1;
            if stalled >= config.stall_window {
                lambda *= 0.5;
                stalled = 0;
            }
        } else {
            stalled = 0;
        }
    }

    let boundary = (0.0, 0.0);
    Ok(ControlResult {
        infidelity: j_t,
        converged: j_t < config.threshold,
        iterations,
        pulse: PulseProtocol {
            duration,
            n_slices: n,
            controls,
            shape: shape_vals,
            boundary,
            lambda_a: lambda,
            history,
        },
    })
}

/// Settings for a minimum-duration scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TminConfig {
    /// Ascending candidate durations.
    pub grid: Vec<f64>,
    /// Infidelity that counts as successful control.
    pub success: f64,
    /// Final bracket width of the bisection refinement.
    pub resolution: f64,
    pub krotov: KrotovConfig,
}

impl Default for TminConfig {
    fn default() -> Self {
        let grid = (0..=158).map(|i| 5.0 + 2.5 * i as f64).collect();
        Self {
            grid,
            success: 1e-4,
            resolution: 1.0,
            krotov: KrotovConfig {
                threshold: 1e-4,
                ..KrotovConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TminResult {
    /// Smallest duration found to succeed, `None` if no grid point does.
    pub t_min: Option<f64>,
    /// `(duration, final infidelity)` for every optimization run, in run order.
    pub evaluated: Vec<(f64, f64)>,
}

/// Locates the control threshold duration.
///
/// Success is assumed monotone in the duration: the grid is searched by
/// bisection over its indices and the crossing bracket is then bisected
/// down to `resolution`. Every run starts from the default guess.
pub fn tmin_scan(params: &ChainParams, config: &TminConfig) -> Result<TminResult> {
    if config.grid.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if config.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("grid", "durations must be strictly ascending"));
    }
    let chain = ControlledChain::new(params)?;
    let mut evaluated = Vec::new();
    let mut run = |t: f64| -> Result<bool> {
        let r = krotov_optimize_chain(&chain, t, None, &config.krotov)?;
        evaluated.push((t, r.infidelity));
        Ok(r.infidelity < config.success)
    };

    let grid = &config.grid;
    let last = grid.len() - 1;
    if !run(grid[last])? {
        return Ok(TminResult { t_min: None, evaluated });
    }
    if run(grid[0])? {
        return Ok(TminResult { t_min: Some(grid[0]), evaluated });
    }
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if run(grid[mid])? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (mut t_lo, mut t_hi) = (grid[lo], grid[hi]);
    while t_hi - t_lo > config.resolution {
        let mid = 0.5 * (t_lo + t_hi);
        if run(mid)? {
            t_hi = mid;
        } else {
            t_lo = mid;
        }
    }
    Ok(TminResult {
        t_min: Some(t_hi),
        evaluated,
    })
}
