use rdlab::experiments::{run_prop2, FourSpeciesConfig};
use rdlab::grid::{Grid, ScalarField};
use rdlab::reaction::{simulate, write_snapshots, ReactionNetwork, SimulationConfig, SpeciesState};

fn small(amplitude: f64) -> FourSpeciesConfig {
    FourSpeciesConfig {
        grid: Grid::new_2d([2.0, 2.0], [24, 24]).unwrap(),
        amplitude,
        t_final: 8.0,
        dt: 1e-2,
        sample_every: 10,
        t_start: Some(1.0),
        ..FourSpeciesConfig::default()
    }
}

#[test]
fn decay_rate_insensitive_to_small_amplitudes() {
    let (lo, _) = run_prop2(&small(0.02)).unwrap();
    let (hi, _) = run_prop2(&small(0.2)).unwrap();
    let rel = (lo.fit.kappa2 - hi.fit.kappa2).abs() / lo.fit.kappa2;
    assert!(rel < 0.2, "{} vs {}", lo.fit.kappa2, hi.fit.kappa2);
}

#[test]
fn sup_distance_decreases_after_transient() {
    let net = ReactionNetwork::four_species([1.0, 2.0, 0.5, 1.5]).unwrap();
    let g = Grid::new_2d([2.0, 2.0], [24, 24]).unwrap();
    let bump = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (std::f64::consts::PI * x[0] / 2.0).cos()).unwrap();
    let mut fields = vec![bump];
    fields.extend((0..3).map(|_| ScalarField::constant(g, 1.0)));
    let init = SpeciesState::new(fields, 0.0).unwrap();
    let cfg = SimulationConfig {
        t_final: 6.0,
        dt: 1e-2,
        sample_every: 5,
        keep_snapshots: false,
        ..SimulationConfig::default()
    };
    let sim = simulate(&net, &init, &cfg).unwrap();
    let d: Vec<f64> = sim.diagnostics.sup_distance.iter().map(|v| v.unwrap()).collect();
    let t = &sim.diagnostics.times;
    let start = t.iter().position(|&x| x >= 0.5).unwrap();
    assert!(d[start..].windows(2).all(|w| w[1] <= w[0]));
    let ent = sim.diagnostics.entropy.last().unwrap().unwrap();
    assert!(ent >= 0.0 && ent < 1e-6);
}

#[test]
fn constant_symmetric_data_stay_put() {
    let net = ReactionNetwork::four_species([1.0, 2.0, 0.5, 1.5]).unwrap();
    let g = Grid::unit(2, 8).unwrap();
    let init = SpeciesState::uniform(g, &[0.7; 4]).unwrap();
    let sim = simulate(&net, &init, &SimulationConfig::default()).unwrap();
    for f in &sim.final_state.fields {
        assert!(f.values().iter().all(|v| (v - 0.7).abs() < 1e-13));
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = small(0.2);
    let run = || {
        let (_, sim) = run_prop2(&FourSpeciesConfig { t_final: 1.0, t_start: None, sample_every: 5, ..cfg.clone() }).unwrap();
        let mut csv = Vec::new();
        sim.diagnostics.write_csv(&mut csv).unwrap();
        let mut bin = Vec::new();
        write_snapshots(&sim.trajectory, &mut bin).unwrap();
        (csv, bin)
    };
    assert_eq!(run(), run());
}
