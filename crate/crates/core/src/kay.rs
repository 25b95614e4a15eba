//! Spectral perfect-transfer search.
//!
//! A mirror-symmetric chain transfers an excitation perfectly at time `T`
//! when every consecutive eigenvalue gap `δ_i` of the one-excitation sector is
//! an odd multiple of `π/T`. For `N = 4` the gaps are known in closed form and
//! the condition becomes two equations in `(η, Δ)` for each odd triple
//! `(q₁, q₂, q₃)`; for longer chains only a relaxed fit is attempted.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::{assemble_hamiltonian, build_couplings, ChainParams, SubspaceBasis};
use crate::error::{Error, Result};
use crate::spectral::{diagonalize, n4_exact_eigenvalues};

/// Default bound on the odd integers.
pub const DEFAULT_Q_MAX: u32 = 37;
/// Gaps below this are treated as degenerate.
pub const MIN_GAP: f64 = 1e-12;

const SEED_CELLS: usize = 200;
const FD_STEP: f64 = 1e-6;
const EXACT_TOL: f64 = 1e-9;
const MERGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaySolution {
    pub eta: f64,
    pub delta: f64,
    pub arrival_time: f64,
    /// Odd multipliers of `π/T`, one per gap.
    pub q: Vec<u32>,
    /// `max_i |δ_i − q_i π/T|`.
    pub residual: f64,
}

/// Consecutive gaps of an ascending spectrum; fails on a (near-)zero gap.
pub fn spectral_gaps(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some((index, &gap)) = gaps.iter().enumerate().find(|(_, g)| !(g.abs() > MIN_GAP)) {
        return Err(Error::DegenerateSpectrum { index, gap });
    }
    Ok(gaps)
}

/// `max_i |δ_i − q_i π/T|`.
pub fn kay_residual(gaps: &[f64], q: &[u32], arrival_time: f64) -> f64 {
    let x = PI / arrival_time;
    gaps.iter()
        .zip(q)
        .map(|(d, &qi)| (d - qi as f64 * x).abs())
        .fold(0.0, f64::max)
}

fn n4_gaps(eta: f64, delta: f64) -> [f64; 3] {
    let l = n4_exact_eigenvalues(eta, delta);
    [l[1] - l[0], l[2] - l[1], l[3] - l[2]]
}

/// All exact `N = 4` solutions with odd `q_i ≤ q_max`, sorted by `(q₁, q₂, q₃, η)`.
///
/// Each triple is solved by damped Newton iteration on
/// `g₁ = q₂δ₁ − q₁δ₂`, `g₂ = q₃δ₂ − q₂δ₃`, seeded from every cell of a
/// 200×200 grid over `η ∈ [−1, 1]`, `Δ ∈ [−2, 2]` in which both functions
/// change sign.
pub fn kay_exact_n4(q_max: u32) -> Result<Vec<KaySolution>> {
    if q_max == 0 || q_max % 2 == 0 {
        return Err(Error::param("q_max", format!("{q_max} is not a positive odd integer")));
    }
    let nodes = SEED_CELLS + 1;
    let eta_at = |i: usize| -1.0 + 2.0 * i as f64 / SEED_CELLS as f64;
    let delta_at = |j: usize| -2.0 + 4.0 * j as f64 / SEED_CELLS as f64;
    let table: Vec<[f64; 3]> = (0..nodes * nodes)
        .map(|k| n4_gaps(eta_at(k / nodes), delta_at(k % nodes)))
        .collect();

    let odd: Vec<u32> = (1..=q_max).step_by(2).collect();
    let mut triples = Vec::with_capacity(odd.len().pow(3));
    for &a in &odd {
        for &b in &odd {
            for &c in &odd {
                triples.push([a, b, c]);
            }
        }
    }

    let mut out: Vec<KaySolution> = triples
        .par_iter()
        .flat_map_iter(|q| solve_triple(*q, &table, nodes, eta_at, delta_at))
        .collect();
    out.sort_by(|a, b| a.q.cmp(&b.q).then(a.eta.total_cmp(&b.eta)));
    Ok(out)
}

fn solve_triple(
    q: [u32; 3],
    table: &[[f64; 3]],
    nodes: usize,
    eta_at: impl Fn(usize) -> f64,
    delta_at: impl Fn(usize) -> f64,
) -> Vec<KaySolution> {
    let [q1, q2, q3] = q.map(f64::from);
    let g = |d: &[f64; 3]| [q2 * d[0] - q1 * d[1], q3 * d[1] - q2 * d[2]];
    let gv: Vec<[f64; 2]> = table.iter().map(g).collect();

    let mut roots: Vec<KaySolution> = Vec::new();
    for i in 0..nodes - 1 {
        for j in 0..nodes - 1 {
            let corners = [
                gv[i * nodes + j],
                gv[i * nodes + j + 1],
                gv[(i + 1) * nodes + j],
                gv[(i + 1) * nodes + j + 1],
            ];
            let changes = |c: usize| {
                let lo = corners.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if !(changes(0) && changes(1)) {
                continue;
            }
            let seed = (
                0.5 * (eta_at(i) + eta_at(i + 1)),
                0.5 * (delta_at(j) + delta_at(j + 1)),
            );
            let Some((eta, delta)) = newton(seed, |e, d| g(&n4_gaps(e, d))) else {
                continue;
            };
            if !(eta.abs() < 1.0) {
                continue;
            }
            let gaps = n4_gaps(eta, delta);
            if gaps.iter().any(|d| !(*d > MIN_GAP)) {
                continue;
            }
            let arrival_time = q2 * PI / gaps[1];
            let residual = kay_residual(&gaps, &q, arrival_time);
            if !(residual < EXACT_TOL) {
                continue;
            }
            if roots
                .iter()
                .any(|r| (r.eta - eta).abs() < MERGE_TOL && (r.delta - delta).abs() < MERGE_TOL)
            {
                continue;
            }
            roots.push(KaySolution {
                eta,
                delta,
                arrival_time,
                q: q.to_vec(),
                residual,
            });
        }
    }
    roots
}

/// Damped Newton iteration with a central-difference Jacobian.
fn newton(start: (f64, f64), f: impl Fn(f64, f64) -> [f64; 2]) -> Option<(f64, f64)> {
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let (mut x, mut y) = start;
    let mut fx = f(x, y);
    for _ in 0..60 {
        if norm(fx) < 1e-14 {
            break;
        }
        let h = FD_STEP;
        let fxp = f(x + h, y);
        let fxm = f(x - h, y);
        let fyp = f(x, y + h);
        let fym = f(x, y - h);
        let a = (fxp[0] - fxm[0]) / (2.0 * h);
        let c = (fxp[1] - fxm[1]) / (2.0 * h);
        let b = (fyp[0] - fym[0]) / (2.0 * h);
        let d = (fyp[1] - fym[1]) / (2.0 * h);
        let det = a * d - b * c;
        if !(det.abs() > 1e-300) || !det.is_finite() {
            return None;
        }
        let dx = (d * fx[0] - b * fx[1]) / det;
        let dy = (a * fx[1] - c * fx[0]) / det;
        let mut damp = 1.0;
        loop {
            let (nx, ny) = (x - damp * dx, y - damp * dy);
            let nf = f(nx, ny);
            if nf.iter().all(|v| v.is_finite()) && norm(nf) < norm(fx) {
                x = nx;
                y = ny;
                fx = nf;
                break;
            }
            damp *= 0.5;
            if damp < 1e-10 {
                return (norm(fx) < 1e-12).then_some((x, y));
            }
        }
    }
    (x.is_finite() && y.is_finite()).then_some((x, y))
}

/// Best odd-multiplier fit of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedFit {
    pub arrival_time: f64,
    pub q: Vec<u32>,
    pub residual: f64,
    /// `residual ≤ ε`.
    pub flagged: bool,
}

/// Smallest `max_i |δ_i − q_i π/T|` over `T` and odd `q_i ≤ q_max`.
///
/// Candidate odd vectors come from rounding `δ_i T/π` along a scan of `T`
/// with step `π/(4 max δ)`; each candidate is then fitted exactly, since for
/// fixed `q` the residual is a convex piecewise-linear function of `π/T`.
pub fn kay_relaxed_fit(eigenvalues: &[f64], epsilon: f64, q_max: u32) -> Result<RelaxedFit> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("{epsilon} must be positive")));
    }
    if q_max == 0 {
        return Err(Error::param("q_max", "must be positive"));
    }
    if eigenvalues.len() < 2 {
        return Err(Error::param("eigenvalues", "need at least two levels"));
    }
    let gaps = spectral_gaps(eigenvalues)?;
    let d_max = gaps.iter().cloned().fold(0.0, f64::max);
    let t_max = q_max as f64 * PI / d_max;
    let step = PI / (4.0 * d_max);

    let mut seen: Vec<Vec<u32>> = Vec::new();
    let mut best: Option<RelaxedFit> = None;
    let mut t = 1.0f64.min(t_max);
    while t <= t_max + 1e-12 {
        let q: Option<Vec<u32>> = gaps
            .iter()
            .map(|d| {
                let v = d * t / PI;
                let odd = (2.0 * ((v - 1.0) / 2.0).round() + 1.0).max(1.0) as u32;
                (odd <= q_max).then_some(odd)
            })
            .collect();
        t += step;
        let Some(q) = q else { continue };
        if seen.contains(&q) {
            continue;
        }
        let (x, residual) = fit_scale(&gaps, &q);
        seen.push(q.clone());
        let better = match &best {
            None => true,
            Some(b) => residual < b.residual,
        };
        if better {
            best = Some(RelaxedFit {
                arrival_time: PI / x,
                q,
                residual,
                flagged: residual <= epsilon,
            });
        }
    }
    best.ok_or_else(|| Error::Numerical("no odd multiplier vector within q_max".into()))
}

/// Minimizes `max_i |δ_i − q_i x|` over `x > 0` by checking every breakpoint.
fn fit_scale(gaps: &[f64], q: &[u32]) -> (f64, f64) {
    let q: Vec<f64> = q.iter().map(|&v| v as f64).collect();
    let eval = |x: f64| {
        gaps.iter()
            .zip(&q)
            .map(|(d, qi)| (d - qi * x).abs())
            .fold(0.0, f64::max)
    };
    let mut candidates = Vec::new();
    for i in 0..gaps.len() {
        candidates.push(gaps[i] / q[i]);
        for j in i + 1..gaps.len() {
            candidates.push((gaps[i] + gaps[j]) / (q[i] + q[j]));
            if q[i] != q[j] {
                candidates.push((gaps[i] - gaps[j]) / (q[i] - q[j]));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|x| *x > 0.0 && x.is_finite())
        .map(|x| (x, eval(x)))
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
}

/// Relaxed fit of the one-excitation spectrum of a chain.
pub fn kay_relaxed(params: &ChainParams, epsilon: f64, q_max: u32) -> Result<RelaxedFit> {
    params.validate()?;
    let basis = Arc::new(SubspaceBasis::sector(params.n_sites, 1)?);
    let couplings = build_couplings(params, None)?;
    let h = assemble_hamiltonian(&params.clone().with_field(0.0), &couplings, basis)?;
    let spec = diagonalize(&h)?;
    kay_relaxed_fit(spec.eigenvalues(), epsilon, q_max)
}
