//! Unitary time evolution, transfer amplitudes, probabilities and averaged
//! fidelities, field dressing of the two-qubit fidelity, and leakage out of
//! the initial magnetization sector.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain_model::{
    assemble_hamiltonian, build_couplings, pattern, ChainParams, CouplingSet, SubspaceBasis,
};
use crate::error::{Error, Result};
use crate::spectral::{diagonalize, SpectralDecomposition};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Phase recurrences are re-seeded from exact exponentials this often.
const RESYNC: usize = 256;

/// Uniform grid `start, start + step, …` up to `end` (inclusive within rounding).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl TimeGrid {
    pub const DEFAULT_STEP: f64 = 0.05;

    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::param("time grid", "non-finite bound"));
        }
        if step <= 0.0 {
            return Err(Error::param("step", format!("{step} <= 0")));
        }
        if end < start {
            return Err(Error::EmptyWindow);
        }
        Ok(Self { start, end, step })
    }

    /// `[0, end]` with the default step.
    pub fn window(end: f64) -> Result<Self> {
        Self::new(0.0, end, Self::DEFAULT_STEP)
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.at(i))
    }
}

/// `ψ(t) = V e^{−iΛt} V† ψ(0)` for each requested time.
pub fn propagate(
    spec: &SpectralDecomposition,
    initial: &[Complex64],
    times: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    if initial.len() != spec.dim() {
        return Err(Error::BasisMismatch);
    }
    let v = spec.eigenvectors();
    let dim = spec.dim();
    let coeffs: Vec<Complex64> = (0..dim)
        .map(|k| (0..dim).map(|i| v[(i, k)].conj() * initial[i]).sum())
        .collect();
    Ok(times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return initial.to_vec();
            }
            let rotated: Vec<Complex64> = coeffs
                .iter()
                .zip(spec.eigenvalues())
                .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t))
                .collect();
            (0..dim)
                .map(|i| (0..dim).map(|k| v[(i, k)] * rotated[k]).sum())
                .collect()
        })
        .collect())
}

/// Precomputed spectral weights for a set of transition amplitudes
/// `⟨to|e^{−iHt}|from⟩ = Σ_k w_k e^{−iλ_k t}` sharing one spectrum.
#[derive(Debug, Clone)]
pub struct AmplitudeTrace {
    energies: Vec<f64>,
    /// `weights[a][k]` for amplitude `a`.
    weights: Vec<Vec<Complex64>>,
}

impl AmplitudeTrace {
    pub fn new(spec: &SpectralDecomposition, pairs: &[(u32, u32)]) -> Result<Self> {
        let v = spec.eigenvectors();
        let basis = spec.basis();
        let weights = pairs
            .iter()
            .map(|&(from, to)| {
                let a = basis.require_index(from)?;
                let b = basis.require_index(to)?;
                Ok((0..spec.dim()).map(|k| v[(b, k)] * v[(a, k)].conj()).collect())
            })
            .collect::<Result<Vec<Vec<Complex64>>>>()?;
        Ok(Self {
            energies: spec.eigenvalues().to_vec(),
            weights,
        })
    }

    pub fn n_amplitudes(&self) -> usize {
        self.weights.len()
    }

    /// All amplitudes at time `t`.
    pub fn at(&self, t: f64) -> Vec<Complex64> {
        let phases: Vec<Complex64> = self
            .energies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * t))
            .collect();
        self.combine(&phases)
    }

    fn combine(&self, phases: &[Complex64]) -> Vec<Complex64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(phases).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Visits the amplitudes on every grid point in order.
    pub fn for_each_on_grid(&self, grid: &TimeGrid, mut visit: impl FnMut(usize, f64, &[Complex64])) {
        let step: Vec<Complex64> = self
            .energies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * grid.step))
            .collect();
        let mut phases = vec![Complex64::new(1.0, 0.0); self.energies.len()];
        for i in 0..grid.len() {
            let t = grid.at(i);
            if i % RESYNC == 0 {
                for (p, &e) in phases.iter_mut().zip(&self.energies) {
                    *p = Complex64::from_polar(1.0, -e * t);
                }
            }
            let amps = self.combine(&phases);
            visit(i, t, &amps);
            for (p, s) in phases.iter_mut().zip(&step) {
                *p *= s;
            }
        }
    }
}

/// Transfer amplitudes at one time.
///
/// `f_1n = ⟨N|U|1⟩`, `f_2nm1 = ⟨N−1|U|2⟩`, `f_1nm1 = ⟨N−1|U|1⟩`, `f_2n = ⟨N|U|2⟩`
/// and `f_12 = ⟨N−1,N|U|1,2⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeSet {
    pub t: f64,
    pub f_1n: Complex64,
    pub f_2nm1: Complex64,
    pub f_1nm1: Complex64,
    pub f_2n: Complex64,
    pub f_12: Complex64,
}

impl AmplitudeSet {
    fn from_slice(t: f64, a: &[Complex64]) -> Self {
        Self {
            t,
            f_1n: a[0],
            f_2nm1: a[1],
            f_1nm1: a[2],
            f_2n: a[3],
            f_12: a[4],
        }
    }
}

/// How the phase of `f_1N` enters the one-qubit fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMode {
    /// `cos γ = 1`, the phase is assumed compensated by a field.
    Optimal,
    /// `γ = arg f_1N`.
    Bare,
}

/// `F₁ = 1/2 + |f| cos γ / 3 + |f|² / 6`.
pub fn fidelity_f1(f_1n: Complex64, mode: GammaMode) -> f64 {
    let modulus = f_1n.norm();
    let cos_gamma = match mode {
        GammaMode::Optimal => 1.0,
        GammaMode::Bare if modulus > 0.0 => f_1n.re / modulus,
        GammaMode::Bare => 1.0,
    };
    0.5 + modulus * cos_gamma / 3.0 + modulus * modulus / 6.0
}

/// Averaged fidelity for one-excitation entangled two-qubit states.
pub fn fidelity_f12(a: &AmplitudeSet) -> f64 {
    (a.f_1nm1.norm_sqr() + a.f_2n.norm_sqr() + 0.5 * a.f_2nm1.norm_sqr() + 0.5 * a.f_1n.norm_sqr()
        + (a.f_1nm1 * a.f_2n.conj()).re)
        / 3.0
}

/// Averaged fidelity for arbitrary two-qubit states, with the phases of the
/// one- and two-excitation amplitudes dressed by `γ` as a uniform `z` field
/// would: `φ_1N, φ_2,N−1 → φ + γ` and `φ_12 → φ_12 + γ (N−4)/(N−2)`.
pub fn fidelity_f2(a: &AmplitudeSet, gamma: f64, n_sites: usize) -> f64 {
    let (f1, f2, f12) = if gamma == 0.0 {
        (a.f_1n, a.f_2nm1, a.f_12)
    } else {
        let one = Complex64::from_polar(1.0, gamma);
        let two = Complex64::from_polar(1.0, gamma * two_excitation_ratio(n_sites));
        (a.f_1n * one, a.f_2nm1 * one, a.f_12 * two)
    };
    f2_from(f1, f2, f12)
}

fn f2_from(f1: Complex64, f2: Complex64, f12: Complex64) -> f64 {
    let moduli = f1.norm_sqr() + f2.norm_sqr() + f12.norm_sqr();
    let cross = f1 + f2 + f12 + (f2 + f12) * f1.conj() + f12 * f2.conj();
    0.25 + moduli / 20.0 + cross.re / 10.0
}

fn two_excitation_ratio(n_sites: usize) -> f64 {
    (n_sites as f64 - 4.0) / (n_sites as f64 - 2.0)
}

/// Period of `γ ↦ F₂(γ)`: all phase rates are multiples of `1/(N−2)`.
pub fn gamma_period(n_sites: usize) -> f64 {
    let m = n_sites - 2;
    if m % 2 == 0 {
        PI * m as f64
    } else {
        2.0 * PI * m as f64
    }
}

/// Dressing angle produced by a field `b_z` acting for time `t` under
/// `H_Z = (b_z/2) Σσᶻ`: the one-excitation sector gains `e^{−i b_z (N−2) t/2}`.
pub fn gamma_from_field(b_z: f64, t: f64, n_sites: usize) -> f64 {
    -0.5 * (n_sites as f64 - 2.0) * b_z * t
}

/// Inverse of [`gamma_from_field`].
pub fn field_from_gamma(gamma: f64, t: f64, n_sites: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    -2.0 * gamma / ((n_sites as f64 - 2.0) * t)
}

/// Scalar transfer figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    P1,
    P2,
    F1,
    F12,
    F2,
}

impl Metric {
    pub fn needs_two_excitations(self) -> bool {
        matches!(self, Metric::P2 | Metric::F2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::P1 => "p1",
            Metric::P2 => "p2",
            Metric::F1 => "f1",
            Metric::F12 => "f12",
            Metric::F2 => "f2",
        }
    }

    /// Value on an amplitude set; `F₁` uses `cos γ = 1`, `F₂` uses `γ = 0`.
    pub fn evaluate(self, a: &AmplitudeSet, n_sites: usize) -> f64 {
        match self {
            Metric::P1 => a.f_1n.norm_sqr().min(1.0),
            Metric::P2 => a.f_12.norm_sqr().min(1.0),
            Metric::F1 => fidelity_f1(a.f_1n, GammaMode::Optimal),
            Metric::F12 => fidelity_f12(a),
            Metric::F2 => fidelity_f2(a, 0.0, n_sites),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Metric::P1),
            "p2" => Ok(Metric::P2),
            "f1" => Ok(Metric::F1),
            "f12" => Ok(Metric::F12),
            "f2" => Ok(Metric::F2),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Spectral data needed to evaluate transfer amplitudes of one chain.
///
/// Without dipolar coupling the one- and two-excitation sectors are
/// diagonalized separately; with it the full space is used and amplitudes
/// are read off the designated basis states.
#[derive(Debug, Clone)]
pub struct TransferEngine {
    n_sites: usize,
    one: AmplitudeTrace,
    two: Option<AmplitudeTrace>,
}

impl TransferEngine {
    pub fn new(params: &ChainParams) -> Result<Self> {
        let couplings = build_couplings(params, None)?;
        Self::with_couplings(params, &couplings)
    }

    pub fn with_couplings(params: &ChainParams, couplings: &CouplingSet) -> Result<Self> {
        params.validate()?;
        let n = params.n_sites;
        let one_pairs = [
            (pattern(&[1]), pattern(&[n])),
            (pattern(&[2]), pattern(&[n - 1])),
            (pattern(&[1]), pattern(&[n - 1])),
            (pattern(&[2]), pattern(&[n])),
        ];
        let two_pair = (pattern(&[1, 2]), pattern(&[n - 1, n]));
        // N = 2, 3 only support the end-to-end amplitude
        let one_pairs: &[(u32, u32)] = if n >= 4 { &one_pairs } else { &one_pairs[..1] };

        if params.conserves_magnetization() {
            let one_spec = sector_spectrum(params, couplings, 1)?;
            let one = AmplitudeTrace::new(&one_spec, one_pairs)?;
            let two = if n >= 4 {
                let two_spec = sector_spectrum(params, couplings, 2)?;
                Some(AmplitudeTrace::new(&two_spec, &[two_pair])?)
            } else {
                None
            };
            Ok(Self { n_sites: n, one, two })
        } else {
            let full = Arc::new(SubspaceBasis::full(n)?);
            let spec = diagonalize(&assemble_hamiltonian(params, couplings, full)?)?;
            let mut pairs = one_pairs.to_vec();
            if n >= 4 {
                pairs.push(two_pair);
            }
            let one = AmplitudeTrace::new(&spec, &pairs)?;
            Ok(Self { n_sites: n, one, two: None })
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn require_two(&self) -> Result<()> {
        if self.n_sites < 4 {
            return Err(Error::param(
                "n_sites",
                format!("{} < 4: two-excitation metrics need distinct sites 1, 2, N-1, N", self.n_sites),
            ));
        }
        Ok(())
    }

    /// `f_1N(t)`; available for every `N ≥ 2`.
    pub fn f_1n(&self, t: f64) -> Complex64 {
        let phases: Vec<Complex64> = self
            .one
            .energies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * t))
            .collect();
        self.one.weights[0].iter().zip(&phases).map(|(a, b)| a * b).sum()
    }

    pub fn amplitudes(&self, t: f64) -> Result<AmplitudeSet> {
        self.require_two()?;
        let mut a = self.one.at(t);
        if let Some(two) = &self.two {
            a.extend(two.at(t));
        }
        Ok(AmplitudeSet::from_slice(t, &a))
    }

    pub fn metric_at(&self, metric: Metric, t: f64) -> Result<f64> {
        match metric {
            Metric::P1 => Ok(self.f_1n(t).norm_sqr().min(1.0)),
            Metric::F1 => Ok(fidelity_f1(self.f_1n(t), GammaMode::Optimal)),
            _ => Ok(metric.evaluate(&self.amplitudes(t)?, self.n_sites)),
        }
    }

    /// Amplitude sets on every grid point.
    pub fn amplitude_series(&self, grid: &TimeGrid) -> Result<Vec<AmplitudeSet>> {
        self.require_two()?;
        let mut out: Vec<AmplitudeSet> = Vec::with_capacity(grid.len());
        let zero = Complex64::new(0.0, 0.0);
        self.one.for_each_on_grid(grid, |_, t, a| {
            let mut buf = [zero; 5];
            buf[..a.len()].copy_from_slice(a);
            out.push(AmplitudeSet::from_slice(t, &buf));
        });
        if let Some(two) = &self.two {
            two.for_each_on_grid(grid, |i, _, a| out[i].f_12 = a[0]);
        }
        Ok(out)
    }

    /// Metric values on every grid point.
    pub fn series(&self, metric: Metric, grid: &TimeGrid) -> Result<Vec<f64>> {
        match metric {
            Metric::P1 | Metric::F1 => {
                let mut out = Vec::with_capacity(grid.len());
                self.one.for_each_on_grid(grid, |_, _, a| {
                    out.push(match metric {
                        Metric::P1 => a[0].norm_sqr().min(1.0),
                        _ => fidelity_f1(a[0], GammaMode::Optimal),
                    })
                });
                Ok(out)
            }
            _ => Ok(self
                .amplitude_series(grid)?
                .iter()
                .map(|a| metric.evaluate(a, self.n_sites))
                .collect()),
        }
    }

    /// Largest metric value in the window, refined between grid points.
    pub fn max_in_window(&self, metric: Metric, grid: &TimeGrid) -> Result<WindowMax> {
        let values = self.series(metric, grid)?;
        let f = |t: f64| self.metric_at(metric, t).unwrap_or(f64::NEG_INFINITY);
        max_in_window(&values, grid, f)
    }

    /// First time the metric reaches `threshold`, located to `1e-6` by bisection.
    pub fn time_to_threshold(
        &self,
        metric: Metric,
        grid: &TimeGrid,
        threshold: f64,
    ) -> Result<Option<f64>> {
        let values = self.series(metric, grid)?;
        let Some(i) = values.iter().position(|&v| v >= threshold) else {
            return Ok(None);
        };
        if i == 0 {
            return Ok(Some(grid.at(0)));
        }
        let (mut lo, mut hi) = (grid.at(i - 1), grid.at(i));
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if self.metric_at(metric, mid)? >= threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }
}

fn sector_spectrum(
    params: &ChainParams,
    couplings: &CouplingSet,
    k: usize,
) -> Result<SpectralDecomposition> {
    let basis = Arc::new(SubspaceBasis::sector(params.n_sites, k)?);
    diagonalize(&assemble_hamiltonian(params, couplings, basis)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowMax {
    pub t: f64,
    pub value: f64,
}

/// Grid argmax (first on ties) followed by golden-section refinement within
/// one grid step on either side. The refined point replaces the grid point
/// only if strictly better.
pub fn max_in_window(values: &[f64], grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Result<WindowMax> {
    if values.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let t0 = grid.at(best);
    let lo = (t0 - grid.step).max(grid.start);
    let hi = (t0 + grid.step).min(grid.at(values.len() - 1));
    let (t, v) = golden_max(&f, lo, hi, 1e-9);
    if v > values[best] {
        Ok(WindowMax { t, value: v })
    } else {
        Ok(WindowMax {
            t: t0,
            value: values[best],
        })
    }
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Result of jointly optimizing waiting time and a uniform `z` field for `F₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldOptimum {
    pub t: f64,
    pub b_z: f64,
    pub gamma: f64,
    pub f2: f64,
    /// Best `F₂` over the same window without field.
    pub f2_no_field: f64,
    pub t_no_field: f64,
}

/// Points per `2π` of `γ` in the dressing scan.
pub const GAMMA_POINTS_PER_TURN: usize = 720;

/// Maximizes `F₂` over the time grid and the dressing angle.
///
/// `γ` is scanned over one full period of `F₂(γ)` (see [`gamma_period`]),
/// refined by golden section, and mapped to the field of smallest magnitude
/// producing it.
pub fn optimize_bz(params: &ChainParams, grid: &TimeGrid) -> Result<FieldOptimum> {
    if params.n_sites < 4 {
        return Err(Error::param("n_sites", "field optimization needs N >= 4"));
    }
    let n = params.n_sites;
    let engine = TransferEngine::new(params)?;
    let series = engine.amplitude_series(grid)?;
    let period = gamma_period(n);
    let n_gamma = (GAMMA_POINTS_PER_TURN as f64 * period / (2.0 * PI)).round() as usize;
    let dg = period / n_gamma as f64;
    let ratio = two_excitation_ratio(n);

    // precomputed dressing factors for every γ on the scan
    let dress: Vec<(Complex64, Complex64)> = (0..n_gamma)
        .map(|g| {
            let gamma = g as f64 * dg;
            (Complex64::from_polar(1.0, gamma), Complex64::from_polar(1.0, gamma * ratio))
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, 0.0, 0usize, 0usize);
    let mut plain = (f64::NEG_INFINITY, 0.0);
    for (i, a) in series.iter().enumerate() {
        let f0 = f2_from(a.f_1n, a.f_2nm1, a.f_12);
        if f0 > plain.0 {
            plain = (f0, a.t);
        }
        for (g, (one, two)) in dress.iter().enumerate() {
            let v = f2_from(a.f_1n * one, a.f_2nm1 * one, a.f_12 * two);
            if v > best.0 {
                best = (v, a.t, i, g);
            }
        }
    }
    let (mut f2, t, idx, g) = best;
    let a = series[idx];
    let mut gamma = g as f64 * dg;
    let (gr, vr) = golden_max(|x| fidelity_f2(&a, x, n), gamma - dg, gamma + dg, 1e-12);
    if vr > f2 {
        f2 = vr;
        gamma = gr;
    }
    // a grid point with γ = 0 ties with the unassisted optimum; keep it field-free
    if f2 <= plain.0 {
        return Ok(FieldOptimum {
            t: plain.1,
            b_z: 0.0,
            gamma: 0.0,
            f2: plain.0,
            f2_no_field: plain.0,
            t_no_field: plain.1,
        });
    }
    gamma = gamma.rem_euclid(period);
    if gamma > 0.5 * period {
        gamma -= period;
    }
    Ok(FieldOptimum {
        t,
        b_z: field_from_gamma(gamma, t, n),
        gamma,
        f2,
        f2_no_field: plain.0,
        t_no_field: plain.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageReport {
    /// Largest population outside the initial sector over the grid.
    pub max_leakage: f64,
    pub t_at_max: f64,
}

/// Population escaping the `k`-excitation sector, starting from excitations
/// on sites `1..=k` (`k` is 1 or 2), evolved in the full space.
pub fn leakage(params: &ChainParams, k: usize, grid: &TimeGrid) -> Result<LeakageReport> {
    if !(1..=2).contains(&k) {
        return Err(Error::param("k", format!("initial sector {k} not in 1..=2")));
    }
    let n = params.n_sites;
    let couplings = build_couplings(params, None)?;
    let full = Arc::new(SubspaceBasis::full(n)?);
    let spec = diagonalize(&assemble_hamiltonian(params, &couplings, Arc::clone(&full))?)?;
    let from = pattern(&(1..=k).collect::<Vec<_>>());
    let sector = SubspaceBasis::sector(n, k)?;
    let pairs: Vec<(u32, u32)> = sector.states().iter().map(|&s| (from, s)).collect();
    let trace = AmplitudeTrace::new(&spec, &pairs)?;

    let leak = |a: &[Complex64]| (1.0 - a.iter().map(|z| z.norm_sqr()).sum::<f64>()).max(0.0);
    let mut values = Vec::with_capacity(grid.len());
    trace.for_each_on_grid(grid, |_, _, a| values.push(leak(a)));
    let best = max_in_window(&values, grid, |t| leak(&trace.at(t)))?;
    Ok(LeakageReport {
        max_leakage: best.value,
        t_at_max: best.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::build_xxz_hamiltonian;
    use crate::spectral::n4_exact_p1;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec_one(n: usize, eta: f64, delta: f64) -> SpectralDecomposition {
        let params = ChainParams::new(n, eta, delta);
        let c = build_couplings(&params, None).unwrap();
        let b = Arc::new(SubspaceBasis::sector(n, 1).unwrap());
        diagonalize(&build_xxz_hamiltonian(&params, &c, b).unwrap()).unwrap()
    }

    #[test]
    fn propagate_identity_at_zero() {
        let s = spec_one(5, 0.2, 0.3);
        let psi0 = s.basis().basis_state(pattern(&[1])).unwrap();
        let out = propagate(&s, &psi0, &[0.0]).unwrap();
        assert_eq!(out[0], psi0);
    }

    #[test]
    fn eigenstate_only_rotates() {
        let s = spec_one(5, 0.2, 0.3);
        let psi0: Vec<Complex64> = s.eigenvectors().column(2).iter().copied().collect();
        let out = propagate(&s, &psi0, &[3.7]).unwrap();
        let overlap: Complex64 = psi0.iter().zip(&out[0]).map(|(a, b)| a.conj() * b).sum();
        assert_abs_diff_eq!(overlap.norm(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn two_site_swap_at_pi() {
        let s = spec_one(2, 0.0, 0.0);
        let psi0 = s.basis().basis_state(pattern(&[1])).unwrap();
        let out = propagate(&s, &psi0, &[PI]).unwrap();
        assert_abs_diff_eq!(out[0][1].norm_sqr(), 1.0, epsilon = 1e-14);
        let e = TransferEngine::new(&ChainParams::new(2, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e.f_1n(PI).norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn propagate_rejects_wrong_length() {
        let s = spec_one(4, 0.0, 0.0);
        assert_eq!(
            propagate(&s, &[Complex64::new(1.0, 0.0)], &[1.0]),
            Err(Error::BasisMismatch)
        );
    }

    #[test]
    fn amplitudes_vanish_at_origin() {
        let e = TransferEngine::new(&ChainParams::new(6, 0.3, 0.5)).unwrap();
        let a = e.amplitudes(0.0).unwrap();
        assert!(a.f_1n.norm() < 1e-14);
        assert!(a.f_12.norm() < 1e-14);
        assert!(a.f_1nm1.norm() < 1e-14);
    }

    #[test]
    fn short_chains_reject_two_excitation_metrics() {
        let e = TransferEngine::new(&ChainParams::new(3, 0.0, 0.0)).unwrap();
        assert!(e.amplitudes(1.0).is_err());
        assert!(e.metric_at(Metric::P2, 1.0).is_err());
        assert!(e.metric_at(Metric::P1, 1.0).is_ok());
    }

    #[test]
    fn n4_amplitude_matches_closed_form() {
        let e = TransferEngine::new(&ChainParams::new(4, 0.0, 0.0)).unwrap();
        for i in 0..200 {
            let t = 0.37 * i as f64;
            assert_abs_diff_eq!(e.f_1n(t).norm_sqr(), n4_exact_p1(0.0, 0.0, t), epsilon = 1e-10);
        }
    }

    #[test]
    fn grid_recurrence_matches_direct_evaluation() {
        let e = TransferEngine::new(&ChainParams::new(8, -0.4, 0.6)).unwrap();
        let grid = TimeGrid::new(0.0, 500.0, 0.05).unwrap();
        let series = e.amplitude_series(&grid).unwrap();
        for a in series.iter().step_by(997) {
            let direct = e.amplitudes(a.t).unwrap();
            assert!((a.f_1n - direct.f_1n).norm() < 1e-12);
            assert!((a.f_12 - direct.f_12).norm() < 1e-12);
        }
    }

    #[test]
    fn f1_values() {
        assert_abs_diff_eq!(fidelity_f1(Complex64::new(1.0, 0.0), GammaMode::Optimal), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f1(Complex64::new(0.0, 0.0), GammaMode::Optimal), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f1(Complex64::new(-1.0, 0.0), GammaMode::Bare), 1.0 / 3.0, epsilon = 1e-15);
    }

    fn set(f_1n: f64, f_2nm1: f64, f_1nm1: f64, f_2n: f64, f_12: f64) -> AmplitudeSet {
        let c = |x| Complex64::new(x, 0.0);
        AmplitudeSet {
            t: 0.0,
            f_1n: c(f_1n),
            f_2nm1: c(f_2nm1),
            f_1nm1: c(f_1nm1),
            f_2n: c(f_2n),
            f_12: c(f_12),
        }
    }

    #[test]
    fn f12_values() {
        assert_abs_diff_eq!(fidelity_f12(&set(0.0, 0.0, 1.0, 1.0, 0.0)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f12(&set(0.0, 0.0, 0.0, 0.0, 0.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f12(&set(0.0, 0.0, 1.0, -1.0, 0.0)), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn f2_values() {
        assert_abs_diff_eq!(fidelity_f2(&set(1.0, 1.0, 0.0, 0.0, 1.0), 0.0, 8), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f2(&set(0.0, 0.0, 0.0, 0.0, 0.0), 0.0, 8), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_f2(&set(0.0, 0.0, 0.0, 0.0, 0.0), 1.3, 8), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn f2_is_periodic_in_gamma() {
        let e = TransferEngine::new(&ChainParams::new(8, -0.3, 0.4)).unwrap();
        let a = e.amplitudes(17.0).unwrap();
        for n in [5usize, 6, 7, 8] {
            let p = gamma_period(n);
            for g in [0.1, 1.7, 4.0] {
                assert_abs_diff_eq!(fidelity_f2(&a, g, n), fidelity_f2(&a, g + p, n), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn field_dressing_matches_direct_evolution() {
        let params = ChainParams::new(6, -0.35, 0.7);
        let bare = TransferEngine::new(&params).unwrap();
        let b_z = 0.83;
        let dressed = TransferEngine::new(&params.clone().with_field(b_z)).unwrap();
        for &t in &[0.5, 3.0, 11.2, 40.0] {
            let gamma = gamma_from_field(b_z, t, 6);
            let via_gamma = fidelity_f2(&bare.amplitudes(t).unwrap(), gamma, 6);
            let direct = Metric::F2.evaluate(&dressed.amplitudes(t).unwrap(), 6);
            assert_abs_diff_eq!(via_gamma, direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn optimize_bz_dominates() {
        let params = ChainParams::new(6, -0.4, 0.3);
        let grid = TimeGrid::new(0.0, 60.0, 0.05).unwrap();
        let opt = optimize_bz(&params, &grid).unwrap();
        assert!(opt.f2 >= opt.f2_no_field);
        // the reported field reproduces the optimum by direct evolution
        let check = TransferEngine::new(&params.clone().with_field(opt.b_z)).unwrap();
        let direct = check.metric_at(Metric::F2, opt.t).unwrap();
        assert_abs_diff_eq!(direct, opt.f2, epsilon = 1e-8);
    }

    #[test]
    fn optimize_bz_without_gain_keeps_zero_field() {
        // at a single time point t = 0 every amplitude vanishes and the field is irrelevant
        let params = ChainParams::new(6, 0.1, 0.2);
        let grid = TimeGrid::new(0.0, 0.0, 0.05).unwrap();
        let opt = optimize_bz(&params, &grid).unwrap();
        assert_eq!(opt.b_z, 0.0);
        assert_eq!(opt.f2, opt.f2_no_field);
        assert_abs_diff_eq!(opt.f2, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn leakage_zero_without_dipolar() {
        let params = ChainParams::new(5, 0.3, 0.5);
        let grid = TimeGrid::new(0.0, 50.0, 0.1).unwrap();
        assert!(leakage(&params, 1, &grid).unwrap().max_leakage < 1e-12);
    }

    #[test]
    fn window_max_tie_break_and_two_site() {
        let grid = TimeGrid::new(0.0, 5.0, 0.5).unwrap();
        let values = vec![0.7; grid.len()];
        let m = max_in_window(&values, &grid, |_| 0.7).unwrap();
        assert_eq!(m.t, 0.0);
        assert!(max_in_window(&[], &grid, |_| 0.0).is_err());

        let e = TransferEngine::new(&ChainParams::new(2, 0.0, 0.0)).unwrap();
        let m = e.max_in_window(Metric::P1, &TimeGrid::new(0.0, 10.0, 0.05).unwrap()).unwrap();
        assert_abs_diff_eq!(m.t, PI, epsilon = 1e-6);
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dimerized_limits_block_transfer() {
        for &(eta, n) in &[(1.0, 6usize), (-1.0, 6), (-1.0, 4)] {
            let e = TransferEngine::new(&ChainParams::new(n, eta, 0.4)).unwrap();
            for i in 0..50 {
                assert!(e.f_1n(1.3 * i as f64).norm_sqr() < 1e-24);
            }
        }
    }

    #[test]
    fn dipolar_breaks_modulus_symmetry() {
        let grid = TimeGrid::new(0.0, 40.0, 0.5).unwrap();
        let plus = TransferEngine::new(&ChainParams::new(6, 0.3, 0.6).with_dipolar(0.1)).unwrap();
        let minus = TransferEngine::new(&ChainParams::new(6, 0.3, -0.6).with_dipolar(0.1)).unwrap();
        let worst = grid
            .points()
            .map(|t| (plus.f_1n(t).norm() - minus.f_1n(t).norm()).abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "{worst}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn unitarity(eta in -1.0f64..=1.0, delta in -2.0f64..2.0, t in 0.0f64..500.0) {
            let s = spec_one(7, eta, delta);
            let psi0 = s.basis().basis_state(pattern(&[1])).unwrap();
            let psi = &propagate(&s, &psi0, &[t]).unwrap()[0];
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn modulus_mirror_symmetry(eta in -1.0f64..=1.0, delta in 0.0f64..2.0, t in 0.0f64..300.0) {
            let plus = TransferEngine::new(&ChainParams::new(6, eta, delta)).unwrap();
            let minus = TransferEngine::new(&ChainParams::new(6, eta, -delta)).unwrap();
            let a = plus.amplitudes(t).unwrap();
            let b = minus.amplitudes(t).unwrap();
            prop_assert!((a.f_1n.norm() - b.f_1n.norm()).abs() < 1e-10);
            prop_assert!((a.f_12.norm() - b.f_12.norm()).abs() < 1e-10);
        }

        #[test]
        fn f1_monotone_in_modulus(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(fidelity_f1(Complex64::new(lo, 0.0), GammaMode::Optimal)
                < fidelity_f1(Complex64::new(0.0, hi), GammaMode::Optimal));
        }

        #[test]
        fn metrics_stay_in_unit_interval(eta in -1.0f64..=1.0, delta in -2.0f64..2.0, t in 0.0f64..200.0) {
            let e = TransferEngine::new(&ChainParams::new(6, eta, delta)).unwrap();
            let a = e.amplitudes(t).unwrap();
            for m in [Metric::P1, Metric::P2, Metric::F1, Metric::F12, Metric::F2] {
                let v = m.evaluate(&a, 6);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{:?} = {}", m, v);
            }
        }
    }
}
