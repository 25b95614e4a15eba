//! Parameter-plane maps over `(Δ, η)`.
//!
//! Every cell is an independent evaluation of one metric for a copy of the
//! template chain with that cell's `Δ` and `η`. Cells are evaluated in
//! parallel and stored row-major with `η` as the slow index, so the result
//! does not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::{assemble_hamiltonian, build_couplings, pattern, ChainParams, SubspaceBasis};
use crate::disorder_mc::averaged_transfer;
use crate::error::{Error, Result};
use crate::kay::{kay_relaxed, DEFAULT_Q_MAX};
use crate::propagation::{optimize_bz, Metric, TimeGrid, TransferEngine};
use crate::spectral::{diagonalize, edge_localization};

/// Value written for time-to-threshold cells that never reach the threshold,
/// and for Kay cells whose spectrum is degenerate.
pub const NOT_REACHED: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapMetric {
    MaxP1,
    MaxP2,
    MaxF12,
    /// `F₂` maximized over time and a uniform field.
    MaxF2,
    Chi,
    Chi2,
    TimeToThreshold,
    KayResidual,
    DisorderMean,
}

impl MapMetric {
    pub const ALL: [MapMetric; 9] = [
        MapMetric::MaxP1,
        MapMetric::MaxP2,
        MapMetric::MaxF12,
        MapMetric::MaxF2,
        MapMetric::Chi,
        MapMetric::Chi2,
        MapMetric::TimeToThreshold,
        MapMetric::KayResidual,
        MapMetric::DisorderMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapMetric::MaxP1 => "max-P1",
            MapMetric::MaxP2 => "max-P2",
            MapMetric::MaxF12 => "max-F12",
            MapMetric::MaxF2 => "max-F2",
            MapMetric::Chi => "chi",
            MapMetric::Chi2 => "chi2",
            MapMetric::TimeToThreshold => "time-to-threshold",
            MapMetric::KayResidual => "kay-residual",
            MapMetric::DisorderMean => "disorder-mean",
        }
    }

    /// Meaning of the `aux` column.
    pub fn aux_meaning(self) -> &'static str {
        match self {
            MapMetric::MaxF2 => "optimal field b_z",
            MapMetric::Chi | MapMetric::Chi2 => "splitting of the two dominant eigenstates",
            MapMetric::KayResidual => "1 if residual <= epsilon else 0",
            MapMetric::DisorderMean => "standard error of the mean",
            _ => "unused",
        }
    }
}

impl fmt::Display for MapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Evenly spaced axis values, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRange {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if points == 0 || !start.is_finite() || !end.is_finite() {
            return Err(Error::param("range", "needs finite ends and at least one point"));
        }
        if points > 1 && end < start {
            return Err(Error::param("range", format!("end {end} < start {start}")));
        }
        Ok(Self { start, end, points })
    }

    /// Range from a step, `points = round((end − start)/step) + 1`.
    pub fn with_step(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::param("step", format!("{step} must be positive")));
        }
        Self::new(start, end, ((end - start) / step).round() as usize + 1)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.end
                } else {
                    self.start + (self.end - self.start) * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderOptions {
    pub d_j: f64,
    pub d_k: f64,
    pub realizations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub delta: AxisRange,
    pub eta: AxisRange,
    pub metric: MapMetric,
    pub window: TimeGrid,
    /// Target for time-to-threshold maps.
    pub threshold: f64,
    /// Tolerance for Kay maps.
    pub epsilon: f64,
    pub q_max: u32,
    pub disorder: Option<DisorderOptions>,
}

impl SweepGrid {
    /// 201×201 over `Δ ∈ [−2, 2]`, `η ∈ [−1, 1]`, window `[0, 2000]`.
    pub fn new(metric: MapMetric) -> Self {
        Self {
            delta: AxisRange { start: -2.0, end: 2.0, points: 201 },
            eta: AxisRange { start: -1.0, end: 1.0, points: 201 },
            metric,
            window: TimeGrid::window(2000.0).expect("valid default window"),
            threshold: 0.99,
            epsilon: 1e-3,
            q_max: DEFAULT_Q_MAX,
            disorder: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        AxisRange::new(self.delta.start, self.delta.end, self.delta.points)?;
        AxisRange::new(self.eta.start, self.eta.end, self.eta.points)?;
        if self.eta.start < -1.0 || self.eta.end > 1.0 {
            return Err(Error::param("eta", "range must lie within [-1, 1]"));
        }
        if self.metric == MapMetric::DisorderMean && self.disorder.is_none() {
            return Err(Error::param("disorder", "disorder-mean maps need disorder options"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapCell {
    pub delta: f64,
    pub eta: f64,
    pub value: f64,
    /// Time at which the value is attained, when meaningful.
    pub t_star: Option<f64>,
    pub aux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    /// FNV-1a hash of the JSON-encoded template and grid.
    pub params_hash: String,
    pub seed: Option<u64>,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub grid: SweepGrid,
    pub template: ChainParams,
    pub delta_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    /// Row-major, `η` slow: cell `(i_delta, i_eta)` at `i_eta·n_delta + i_delta`.
    pub cells: Vec<MapCell>,
    pub provenance: Provenance,
}

impl MapResult {
    pub fn cell(&self, i_delta: usize, i_eta: usize) -> &MapCell {
        &self.cells[i_eta * self.delta_values.len() + i_delta]
    }
}

/// Evaluates the grid's metric on every `(Δ, η)` cell of `template`.
pub fn run_sweep(grid: &SweepGrid, template: &ChainParams) -> Result<MapResult> {
    grid.validate()?;
    template.validate()?;
    let delta_values = grid.delta.values();
    let eta_values = grid.eta.values();
    let nd = delta_values.len();
    let cells = (0..nd * eta_values.len())
        .into_par_iter()
        .map(|k| {
            let (delta, eta) = (delta_values[k % nd], eta_values[k / nd]);
            let params = ChainParams { delta, eta, ..template.clone() };
            evaluate_cell(grid, &params)
        })
        .collect::<Result<Vec<_>>>()?;

    let encoded = serde_json::to_string(&(template, grid)).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(MapResult {
        grid: grid.clone(),
        template: template.clone(),
        delta_values,
        eta_values,
        cells,
        provenance: Provenance {
            params_hash: format!("{:016x}", fnv1a(encoded.as_bytes())),
            seed: grid.disorder.as_ref().map(|d| d.seed),
            code_version: crate::VERSION.to_string(),
        },
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// One map cell for a fully specified chain.
pub fn evaluate_cell(grid: &SweepGrid, params: &ChainParams) -> Result<MapCell> {
    let mut cell = MapCell {
        delta: params.delta,
        eta: params.eta,
        value: 0.0,
        t_star: None,
        aux: None,
    };
    let window_max = |metric: Metric| -> Result<(f64, f64)> {
        let m = TransferEngine::new(params)?.max_in_window(metric, &grid.window)?;
        Ok((m.value, m.t))
    };
    match grid.metric {
        MapMetric::MaxP1 | MapMetric::MaxP2 | MapMetric::MaxF12 => {
            let metric = match grid.metric {
                MapMetric::MaxP1 => Metric::P1,
                MapMetric::MaxP2 => Metric::P2,
                _ => Metric::F12,
            };
            let (value, t) = window_max(metric)?;
            cell.value = value;
            cell.t_star = Some(t);
        }
        MapMetric::MaxF2 => {
            let opt = optimize_bz(params, &grid.window)?;
            cell.value = opt.f2;
            cell.t_star = Some(opt.t);
            cell.aux = Some(opt.b_z);
        }
        MapMetric::Chi | MapMetric::Chi2 => {
            let (k, edge) = match grid.metric {
                MapMetric::Chi => (1, pattern(&[1])),
                _ => (2, pattern(&[1, 2])),
            };
            let basis = Arc::new(SubspaceBasis::sector(params.n_sites, k)?);
            let couplings = build_couplings(params, None)?;
            let spec = diagonalize(&assemble_hamiltonian(params, &couplings, basis)?)?;
            let loc = edge_localization(&spec, edge)?;
            cell.value = loc.chi;
            cell.aux = Some(loc.splitting);
        }
        MapMetric::TimeToThreshold => {
            let engine = TransferEngine::new(params)?;
            match engine.time_to_threshold(Metric::P1, &grid.window, grid.threshold)? {
                Some(t) => {
                    cell.value = t;
                    cell.t_star = Some(t);
                }
                None => cell.value = NOT_REACHED,
            }
        }
        MapMetric::KayResidual => match kay_relaxed(params, grid.epsilon, grid.q_max) {
            Ok(fit) => {
                cell.value = fit.residual;
                cell.t_star = Some(fit.arrival_time);
                cell.aux = Some(if fit.flagged { 1.0 } else { 0.0 });
            }
            Err(Error::DegenerateSpectrum { .. }) => cell.value = NOT_REACHED,
            Err(e) => return Err(e),
        },
        MapMetric::DisorderMean => {
            let d = grid
                .disorder
                .as_ref()
                .ok_or_else(|| Error::param("disorder", "missing disorder options"))?;
            let (_, t) = window_max(Metric::P1)?;
            let s = averaged_transfer(params, Metric::P1, t, d.d_j, d.d_k, d.realizations, d.seed)?;
            cell.value = s.mean;
            cell.t_star = Some(t);
            cell.aux = Some(s.std_error);
        }
    }
    Ok(cell)
}
