//! Subcommand implementations. Each computes everything first and writes
//! artifacts only once the computation has succeeded.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use rayon::prelude::*;
use serde_json::json;
use sshchain::chain_model::{
    assemble_hamiltonian, build_couplings, pattern, ChainParams, SubspaceBasis, MAX_FULL_SPACE_SITES,
};
use sshchain::disorder_mc::averaged_transfer;
use sshchain::kay::{kay_exact_n4, DEFAULT_Q_MAX};
use sshchain::krotov::{krotov_optimize, tmin_scan, KrotovConfig, TminConfig};
use sshchain::propagation::{leakage, optimize_bz, Metric, TimeGrid, TransferEngine};
use sshchain::spectral::{diagonalize, edge_localization};
use sshchain::sweep::{run_sweep, AxisRange, DisorderOptions, MapMetric, SweepGrid};

use crate::config::ChainArgs;
use crate::error::CliError;
use crate::output::{fmt_num, fmt_opt, Artifacts, Csv};

type Out = Result<PathBuf, CliError>;

fn window(end: f64, step: f64) -> Result<TimeGrid, CliError> {
    Ok(TimeGrid::new(0.0, end, step)?)
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Excitation sector
    #[arg(long, default_value_t = 1)]
    excitations: usize,
}

pub fn spectrum(a: &SpectrumArgs, out: &Path) -> Out {
    let r = a.chain.resolve()?;
    let p = &r.params;
    if !p.conserves_magnetization() {
        return Err(CliError::Usage("spectrum needs k_dip = 0 (sector Hamiltonian)".into()));
    }
    let basis = Arc::new(SubspaceBasis::sector(p.n_sites, a.excitations)?);
    let couplings = build_couplings(p, None)?;
    let spec = diagonalize(&assemble_hamiltonian(p, &couplings, basis)?)?;
    let edge: Vec<usize> = (1..=a.excitations).collect();
    let loc = edge_localization(&spec, pattern(&edge))?;

    let mut csv = Csv::new(&["eta", "delta", "chi", "k1", "k2", "epsilon", "index", "eigenvalue"]);
    for (i, e) in spec.eigenvalues().iter().enumerate() {
        csv.row([
            fmt_num(p.eta),
            fmt_num(p.delta),
            fmt_num(loc.chi),
            (loc.dominant_indices.0 + 1).to_string(),
            (loc.dominant_indices.1 + 1).to_string(),
            fmt_num(loc.splitting),
            (i + 1).to_string(),
            fmt_num(*e),
        ]);
    }
    let inputs = json!({ "chain": r, "excitations": a.excitations });
    let mut art = Artifacts::new(out);
    art.csv("spectrum.csv", &csv)?;
    art.json(
        "spectrum.json",
        &json!({ "inputs": inputs, "eigenvalues": spec.eigenvalues(), "localization": loc }),
    )?;
    art.finish("spectrum", inputs, r.seed)
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// p1, p2, f1, f12 or f2
    #[arg(long, default_value = "p1")]
    metric: String,
    /// End of the time window [0, window]
    #[arg(long, default_value_t = 2000.0)]
    window: f64,
    #[arg(long, default_value_t = TimeGrid::DEFAULT_STEP)]
    step: f64,
    /// For f2: also optimize a uniform field and trace the metric under it
    #[arg(long)]
    optimize_field: bool,
}

pub fn transfer(a: &TransferArgs, out: &Path) -> Out {
    let mut r = a.chain.resolve()?;
    let metric: Metric = a.metric.parse()?;
    let grid = window(a.window, a.step)?;
    let mut field = None;
    if a.optimize_field {
        if metric != Metric::F2 {
            return Err(CliError::Usage("--optimize-field applies to --metric f2".into()));
        }
        let opt = optimize_bz(&r.params, &grid)?;
        r.params.b_z += opt.b_z;
        field = Some(opt);
    }
    let engine = TransferEngine::new(&r.params)?;
    let values = engine.series(metric, &grid)?;
    let best = engine.max_in_window(metric, &grid)?;

    let mut csv = Csv::new(&["t", metric.name()]);
    for (t, v) in grid.points().zip(&values) {
        csv.row([fmt_num(t), fmt_num(*v)]);
    }
    let inputs = json!({ "chain": r, "metric": metric.name(), "window": grid });
    let summary = json!({
        "inputs": inputs,
        "t_star": best.t,
        "value_star": best.value,
        "b_z_star": r.params.b_z,
        "field_optimum": field,
    });
    let mut art = Artifacts::new(out);
    art.csv("transfer.csv", &csv)?;
    art.json("transfer.json", &summary)?;
    art.finish("transfer", inputs, r.seed)
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// max-P1, max-P2, max-F12, max-F2, chi, chi2, time-to-threshold, kay-residual, disorder-mean
    #[arg(long, default_value = "max-P1")]
    metric: String,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    delta_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    delta_max: f64,
    #[arg(long, default_value_t = 201)]
    delta_points: usize,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    eta_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    eta_max: f64,
    #[arg(long, default_value_t = 201)]
    eta_points: usize,
    #[arg(long, default_value_t = 2000.0)]
    window: f64,
    #[arg(long, default_value_t = TimeGrid::DEFAULT_STEP)]
    step: f64,
    /// Target of time-to-threshold maps
    #[arg(long, default_value_t = 0.99)]
    threshold: f64,
    /// Tolerance of kay-residual maps
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    q_max: u32,
    /// Realizations per cell for disorder-mean maps
    #[arg(long, default_value_t = 100)]
    realizations: usize,
}

pub fn map(a: &MapArgs, out: &Path) -> Out {
    let r = a.chain.resolve()?;
    let metric: MapMetric = a.metric.parse()?;
    let disorder = if metric == MapMetric::DisorderMean {
        let seed = r
            .seed
            .ok_or_else(|| CliError::Usage("disorder-mean maps need --seed".into()))?;
        Some(DisorderOptions {
            d_j: r.d_j,
            d_k: r.d_k,
            realizations: a.realizations,
            seed,
        })
    } else {
        None
    };
    let grid = SweepGrid {
        delta: AxisRange::new(a.delta_min, a.delta_max, a.delta_points)?,
        eta: AxisRange::new(a.eta_min, a.eta_max, a.eta_points)?,
        metric,
        window: window(a.window, a.step)?,
        threshold: a.threshold,
        epsilon: a.epsilon,
        q_max: a.q_max,
        disorder,
    };
    let result = run_sweep(&grid, &r.params)?;

    let mut csv = Csv::new(&["delta", "eta", "value", "t_star", "aux"]);
    for c in &result.cells {
        csv.row([fmt_num(c.delta), fmt_num(c.eta), fmt_num(c.value), fmt_opt(c.t_star), fmt_opt(c.aux)]);
    }
    let inputs = json!({ "chain": r, "grid": grid });
    let sidecar = json!({
        "inputs": inputs,
        "provenance": result.provenance,
        "layout": "one row per cell, eta outer loop, delta inner loop",
        "columns": {
            "value": metric.name(),
            "t_star": "time at which value is attained; empty when not applicable",
            "aux": metric.aux_meaning(),
        },
        "not_reached": "value -1: threshold never reached (time-to-threshold) or degenerate spectrum (kay-residual)",
    });
    let mut art = Artifacts::new(out);
    art.csv("map.csv", &csv)?;
    art.json("map.json", &sidecar)?;
    art.finish("map", inputs, r.seed)
}

#[derive(Debug, Args)]
pub struct KayArgs {
    /// Largest odd multiplier
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    q_max: u32,
}

pub fn kay(a: &KayArgs, out: &Path) -> Out {
    let sols = kay_exact_n4(a.q_max)?;
    let mut csv = Csv::new(&["eta", "delta", "T", "q1", "q2", "q3", "residual"]);
    for s in &sols {
        csv.row([
            fmt_num(s.eta),
            fmt_num(s.delta),
            fmt_num(s.arrival_time),
            s.q[0].to_string(),
            s.q[1].to_string(),
            s.q[2].to_string(),
            fmt_num(s.residual),
        ]);
    }
    let inputs = json!({ "n_sites": 4, "q_max": a.q_max });
    let mut art = Artifacts::new(out);
    art.csv("kay.csv", &csv)?;
    art.finish("kay", inputs, None)
}

#[derive(Debug, Args)]
pub struct DisorderArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value = "p1")]
    metric: String,
    #[arg(long, default_value_t = 100)]
    realizations: usize,
    /// Evaluation time; default is the clean-chain optimum of the metric in the window
    #[arg(long)]
    arrival_time: Option<f64>,
    #[arg(long, default_value_t = 2000.0)]
    window: f64,
    #[arg(long, default_value_t = TimeGrid::DEFAULT_STEP)]
    step: f64,
    /// Also write one row per realization
    #[arg(long)]
    per_realization: bool,
}

pub fn disorder(a: &DisorderArgs, out: &Path) -> Out {
    let r = a.chain.resolve()?;
    let seed = r.seed.ok_or_else(|| CliError::Usage("disorder needs --seed".into()))?;
    let metric: Metric = a.metric.parse()?;
    let t = match a.arrival_time {
        Some(t) => t,
        None => {
            let grid = window(a.window, a.step)?;
            TransferEngine::new(&r.params)?.max_in_window(metric, &grid)?.t
        }
    };
    let s = averaged_transfer(&r.params, metric, t, r.d_j, r.d_k, a.realizations, seed)?;
    let inputs = json!({ "chain": r, "metric": metric.name(), "realizations": a.realizations });
    let mut art = Artifacts::new(out);
    art.json(
        "disorder.json",
        &json!({
            "inputs": inputs,
            "arrival_time": s.arrival_time,
            "mean": s.mean,
            "std_error": s.std_error,
            "realizations": s.realizations,
        }),
    )?;
    if a.per_realization {
        let mut csv = Csv::new(&["realization", metric.name()]);
        for (i, v) in s.values.iter().enumerate() {
            csv.row([i.to_string(), fmt_num(*v)]);
        }
        art.csv("disorder_realizations.csv", &csv)?;
    }
    art.finish("disorder", inputs, Some(seed))
}

#[derive(Debug, Args)]
pub struct DipolarArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Initial excitations on sites 1..=k (1 or 2)
    #[arg(long, default_value_t = 1)]
    excitations: usize,
    #[arg(long, default_value_t = 2000.0)]
    window: f64,
    #[arg(long, default_value_t = TimeGrid::DEFAULT_STEP)]
    step: f64,
}

pub fn dipolar(a: &DipolarArgs, out: &Path) -> Out {
    let r = a.chain.resolve_with(Some(0.1))?;
    if r.params.n_sites > MAX_FULL_SPACE_SITES {
        return Err(CliError::Usage(format!(
            "full-space dynamics limited to N <= {MAX_FULL_SPACE_SITES}"
        )));
    }
    let grid = window(a.window, a.step)?;
    let rep = leakage(&r.params, a.excitations, &grid)?;
    let inputs = json!({ "chain": r, "excitations": a.excitations, "window": grid });
    let mut art = Artifacts::new(out);
    art.json(
        "dipolar.json",
        &json!({ "inputs": inputs, "max_leakage": rep.max_leakage, "t_at_max": rep.t_at_max }),
    )?;
    art.finish("dipolar", inputs, r.seed)
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Pulse duration T
    #[arg(long)]
    duration: f64,
    /// Piecewise-constant slices (default max(1000, ceil(20 T)))
    #[arg(long)]
    slices: Option<usize>,
    /// Initial step penalty
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// Stop once the infidelity is below this value
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
}

pub fn control(a: &ControlArgs, out: &Path) -> Out {
    let r = a.chain.resolve()?;
    let config = KrotovConfig {
        lambda_a: a.lambda,
        max_iters: a.max_iters,
        threshold: a.threshold,
        n_slices: a.slices,
        ..KrotovConfig::default()
    };
    let res = krotov_optimize(&r.params, a.duration, None, &config)?;

    let mut pulse = Csv::new(&["t", "u"]);
    pulse.row([fmt_num(0.0), fmt_num(res.pulse.boundary.0)]);
    for (t, u) in res.pulse.times().iter().zip(&res.pulse.controls) {
        pulse.row([fmt_num(*t), fmt_num(*u)]);
    }
    pulse.row([fmt_num(a.duration), fmt_num(res.pulse.boundary.1)]);
    let mut conv = Csv::new(&["iteration", "infidelity"]);
    for (i, j) in res.pulse.history.iter().enumerate() {
        conv.row([i.to_string(), fmt_num(*j)]);
    }
    let inputs = json!({ "chain": r, "duration": a.duration, "krotov": config });
    let mut art = Artifacts::new(out);
    art.csv("pulse.csv", &pulse)?;
    art.csv("convergence.csv", &conv)?;
    art.json(
        "control.json",
        &json!({
            "inputs": inputs,
            "infidelity": res.infidelity,
            "converged": res.converged,
            "iterations": res.iterations,
            "n_slices": res.pulse.n_slices,
            "final_lambda": res.pulse.lambda_a,
        }),
    )?;
    art.finish("control", inputs, r.seed)
}

#[derive(Debug, Args)]
pub struct TminArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Comma-separated dimerization values (default: --eta)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    etas: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    t_start: f64,
    #[arg(long, default_value_t = 400.0)]
    t_end: f64,
    #[arg(long, default_value_t = 2.5)]
    t_step: f64,
    /// Infidelity counted as success
    #[arg(long, default_value_t = 1e-4)]
    success: f64,
    /// Final bracket width around the threshold duration
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
}

pub fn tmin(a: &TminArgs, out: &Path) -> Out {
    let r = a.chain.resolve()?;
    if !(a.t_step > 0.0 && a.t_end >= a.t_start) {
        return Err(CliError::Usage("need t_step > 0 and t_end >= t_start".into()));
    }
    let points = ((a.t_end - a.t_start) / a.t_step).round() as usize + 1;
    let config = TminConfig {
        grid: (0..points).map(|i| a.t_start + a.t_step * i as f64).collect(),
        success: a.success,
        resolution: a.resolution,
        krotov: KrotovConfig {
            threshold: a.success,
            max_iters: a.max_iters,
            ..KrotovConfig::default()
        },
    };
    let etas = if a.etas.is_empty() { vec![r.params.eta] } else { a.etas.clone() };
    let results = etas
        .par_iter()
        .map(|&eta| {
            let params = ChainParams { eta, ..r.params.clone() };
            tmin_scan(&params, &config)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = Csv::new(&["eta", "delta", "T_min"]);
    for (eta, res) in etas.iter().zip(&results) {
        csv.row([fmt_num(*eta), fmt_num(r.params.delta), fmt_num(res.t_min.unwrap_or(-1.0))]);
    }
    let inputs = json!({
        "chain": r,
        "etas": etas,
        "t_grid": { "start": a.t_start, "end": a.t_end, "step": a.t_step },
        "success": a.success,
        "resolution": a.resolution,
        "max_iters": a.max_iters,
    });
    let mut art = Artifacts::new(out);
    art.csv("tmin.csv", &csv)?;
    art.json(
        "tmin.json",
        &json!({ "inputs": inputs, "not_found": "T_min -1: no grid duration succeeded", "scans": results }),
    )?;
    art.finish("tmin", inputs, r.seed)
}
