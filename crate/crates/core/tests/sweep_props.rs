use proptest::prelude::*;
use sshchain::chain_model::ChainParams;
use sshchain::propagation::{Metric, TimeGrid, TransferEngine};
use sshchain::sweep::{run_sweep, AxisRange, MapMetric, SweepGrid};

fn grid(metric: MapMetric, points: usize, window: f64) -> SweepGrid {
    SweepGrid {
        delta: AxisRange::new(-1.5, 1.5, points).unwrap(),
        eta: AxisRange::new(-0.9, 0.9, points).unwrap(),
        window: TimeGrid::window(window).unwrap(),
        ..SweepGrid::new(metric)
    }
}

#[test]
fn probability_maps_mirror_in_anisotropy() {
    for metric in [MapMetric::MaxP1, MapMetric::MaxP2] {
        let g = grid(metric, 7, 60.0);
        let map = run_sweep(&g, &ChainParams::new(6, 0.0, 0.0)).unwrap();
        let n = map.delta_values.len();
        for i_e in 0..map.eta_values.len() {
            for i_d in 0..n {
                let a = map.cell(i_d, i_e).value;
                let b = map.cell(n - 1 - i_d, i_e).value;
                assert!((a - b).abs() < 1e-8, "{metric} at ({i_d}, {i_e}): {a} vs {b}");
            }
        }
    }
}

#[test]
fn longer_chains_transfer_worse_on_average() {
    let g = grid(MapMetric::MaxP1, 9, 2000.0);
    let means: Vec<f64> = [4, 8, 12]
        .iter()
        .map(|&n| {
            let map = run_sweep(&g, &ChainParams::new(n, 0.0, 0.0)).unwrap();
            map.cells.iter().map(|c| c.value).sum::<f64>() / map.cells.len() as f64
        })
        .collect();
    assert!(means[0] >= means[1] && means[1] >= means[2], "{means:?}");
}

#[test]
fn max_f12_stays_below_point_eight_for_positive_eta() {
    let g = SweepGrid {
        delta: AxisRange::new(-2.0, 2.0, 5).unwrap(),
        eta: AxisRange::new(0.1, 0.9, 5).unwrap(),
        window: TimeGrid::window(2000.0).unwrap(),
        ..SweepGrid::new(MapMetric::MaxF12)
    };
    let map = run_sweep(&g, &ChainParams::new(8, 0.0, 0.0)).unwrap();
    let worst = map.cells.iter().map(|c| c.value).fold(0.0, f64::max);
    assert!(worst < 0.8, "max F12 {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enlarging_the_window_never_lowers_the_maximum(
        eta in -0.95f64..0.95,
        delta in -2.0f64..2.0,
        short in 5.0f64..40.0,
        extra in 1.0f64..40.0,
    ) {
        let engine = TransferEngine::new(&ChainParams::new(6, eta, delta)).unwrap();
        for metric in [Metric::P1, Metric::F12, Metric::P2] {
            let a = engine.max_in_window(metric, &TimeGrid::window(short).unwrap()).unwrap();
            let b = engine.max_in_window(metric, &TimeGrid::window(short + extra).unwrap()).unwrap();
            prop_assert!(b.value >= a.value - 1e-12, "{:?}: {} < {}", metric, b.value, a.value);
        }
    }
}
