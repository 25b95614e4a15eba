//! Static coupling disorder: realizations and realization-averaged transfer.
//!
//! Each realization draws `ξ ~ U[−1, 1]` independently per exchange bond and
//! per dipolar pair and rescales `J_i → J_i (1 + D_J ξ_i)`,
//! `K_ij → K_ij (1 + D_K ξ_ij)`. Realization `m` of master seed `s` comes from
//! ChaCha8 stream `m` keyed by `s`, so any realization can be regenerated in
//! isolation and results do not depend on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::{build_couplings, ChainParams};
use crate::error::{Error, Result};
use crate::propagation::{Metric, TransferEngine};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderRealization {
    /// One draw per exchange bond (`N − 1`).
    pub xi_j: Vec<f64>,
    /// One draw per dipolar pair `i < j`, lexicographic.
    pub xi_k: Vec<f64>,
    pub d_j: f64,
    pub d_k: f64,
    pub seed: u64,
    pub index: u64,
}

impl DisorderRealization {
    /// Deterministic realization `index` of master `seed`.
    pub fn sample(seed: u64, index: u64, n_sites: usize, d_j: f64, d_k: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        sample_realization(&mut rng, n_sites, d_j, d_k).map(|mut r| {
            r.seed = seed;
            r.index = index;
            r
        })
    }
}

/// Draws one realization from `rng`; bookkeeping fields `seed`/`index` are left at 0.
pub fn sample_realization<R: Rng + ?Sized>(
    rng: &mut R,
    n_sites: usize,
    d_j: f64,
    d_k: f64,
) -> Result<DisorderRealization> {
    for (name, d) in [("d_j", d_j), ("d_k", d_k)] {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::param(name, format!("{d} is not a non-negative amplitude")));
        }
    }
    if n_sites < 2 {
        return Err(Error::param("n_sites", format!("{n_sites} < 2")));
    }
    let xi_j = (0..n_sites - 1).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let xi_k = (0..n_sites * (n_sites - 1) / 2)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Ok(DisorderRealization {
        xi_j,
        xi_k,
        d_j,
        d_k,
        seed: 0,
        index: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderSummary {
    pub mean: f64,
    pub std_error: f64,
    pub realizations: usize,
    pub arrival_time: f64,
    /// Per-realization metric values in realization order.
    pub values: Vec<f64>,
}

/// Realization-averaged metric at a fixed arrival time `t`.
pub fn averaged_transfer(
    params: &ChainParams,
    metric: Metric,
    t: f64,
    d_j: f64,
    d_k: f64,
    m_r: usize,
    seed: u64,
) -> Result<DisorderSummary> {
    params.validate()?;
    if m_r == 0 {
        return Err(Error::param("realizations", "must be at least 1"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("arrival_time", format!("{t}")));
    }
    let values = (0..m_r as u64)
        .into_par_iter()
        .map(|m| {
            let r = DisorderRealization::sample(seed, m, params.n_sites, d_j, d_k)?;
            let couplings = build_couplings(params, Some(&r))?;
            TransferEngine::with_couplings(params, &couplings)?.metric_at(metric, t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_stderr(&values);
    Ok(DisorderSummary {
        mean,
        std_error,
        realizations: m_r,
        arrival_time: t,
        values,
    })
}

/// Mean and standard error, accumulated as compensated sums of deviations
/// from the first value, so identical samples give that value exactly.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let pivot = values[0];
    let shift = neumaier_sum(values.iter().map(|v| v - pivot)) / n as f64;
    let mean = pivot + shift;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
