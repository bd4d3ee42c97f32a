//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the verdicts are always printed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdlab::equilibrium::four_species_equilibrium;
use rdlab::estimates::{lemma33_exponents, lemma36_iteration, prop4_zk_sequence, prop5_pn_sequence, Bound};
use rdlab::experiments::{
    cosine_mode_errors, observed_orders, polynomial_growth_probe, run_prop2, run_prop5,
    verify_duality_ensemble, DualityConfig, FourSpeciesConfig,
};
use rdlab::grid::Grid;
use rdlab::heat::{estimate_cmq, EstimatorConfig, RegularityConstant};
use rdlab::reaction::{simulate, SimulationConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_anchor() -> Outcome {
    let config = EstimatorConfig {
        samples: 64,
        ..EstimatorConfig::default()
    };
    let mut worst = 0.0_f64;
    for grid in [Grid::new_1d(1.0, 64).unwrap(), Grid::new_2d([1.0, 1.0], [64, 64]).unwrap()] {
        for m in [0.5, 1.0, 2.0] {
            let c = estimate_cmq(&grid, m, 2.0, 1.0, &config).map_err(|e| e.to_string())?;
            worst = worst.max(c.value * m);
        }
    }
    check(worst <= 1.05, format!("max m * C_m,2 = {worst:.6} (limit 1.05)"))
}

fn c2_duality() -> Outcome {
    let config = DualityConfig::default();
    let c = RegularityConstant::analytic(0.5 * (config.a + config.b)).unwrap();
    let ens = verify_duality_ensemble(&config, &c).map_err(|e| e.to_string())?;
    let lhs = ens.constants.condition_lhs;
    let pf = ens.constants.prefactor.unwrap_or(f64::NAN);
    let max = ens.max_ratio.unwrap_or(f64::INFINITY);
    check(
        (lhs - 0.5).abs() < 1e-12 && (pf - 4.0).abs() < 1e-12 && max <= 1.0 && ens.checks.len() == 32,
        format!("condition_lhs = {lhs}, prefactor = {pf}, max ratio = {max:.4} over {} data", ens.checks.len()),
    )
}

fn c3_conservation() -> Outcome {
    let cfg = FourSpeciesConfig {
        amplitude: 0.9,
        dt: 1e-3,
        ..FourSpeciesConfig::default()
    };
    let net = cfg.network().unwrap();
    let (init, _) = cfg.initial_state().map_err(|e| e.to_string())?;
    let sim = simulate(
        &net,
        &init,
        &SimulationConfig {
            t_final: 10.0,
            dt: 1e-3,
            sample_every: 100,
            keep_snapshots: false,
            ..SimulationConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let drift = sim.diagnostics.mass_drift().into_iter().fold(0.0, f64::max);
    let min = *sim.diagnostics.running_min.last().unwrap();
    check(drift < 1e-9 && min >= -1e-9, format!("max mass drift = {drift:.2e}, min value = {min:.3e}"))
}

/// Root of the increasing linear function `a1 (m23 - m12 + a1) - (m12 - a1)(m14 - a1)`
/// by plain bisection.
fn bisection_a1(m12: f64, m14: f64, m23: f64) -> f64 {
    let g = |a1: f64| a1 * (m23 - m12 + a1) - (m12 - a1) * (m14 - a1);
    let (mut lo, mut hi) = ((m12 - m23).max(0.0), m12.min(m14));
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c4_equilibrium() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let avg: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.01..10.0));
        let (m12, m14, m23) = (avg[0] + avg[1], avg[0] + avg[3], avg[1] + avg[2]);
        let e = four_species_equilibrium(m12, m14, m23).map_err(|e| e.to_string())?;
        let a1 = bisection_a1(m12, m14, m23);
        let oracle = [a1, m12 - a1, m23 - m12 + a1, m14 - a1];
        for (x, y) in e.values.iter().zip(oracle) {
            worst = worst.max((x - y).abs() / (1.0 + y.abs()));
        }
    }
    let half = four_species_equilibrium(1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let half_err = half.values.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    check(
        worst <= 1e-12 && half_err <= 1e-12,
        format!("max deviation from bisection = {worst:.1e}, (1,0,1,0) error = {half_err:.1e}"),
    )
}

fn c5_decay() -> Outcome {
    let cfg = FourSpeciesConfig {
        t_start: Some(1.0),
        ..FourSpeciesConfig::default()
    };
    let (rep, _) = run_prop2(&cfg).map_err(|e| e.to_string())?;
    let f = &rep.fit;
    check(
        f.kappa2 > 0.0 && f.r_squared > 0.99 && rep.decades >= 2.0,
        format!(
            "kappa2 = {:.4}, kappa1 = {:.4}, r2 = {:.5}, decades = {:.2}",
            f.kappa2, f.kappa1, f.r_squared, rep.decades
        ),
    )
}

fn c6_recursions() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let q = lemma36_iteration(2, 2.5).map_err(|e| e.to_string())?;
    let ok36 = q.terms.len() == 3
        && close(q.terms[0], 2.5)
        && close(q.terms[1], 10.0 / 3.0)
        && close(q.terms[2], 10.0);
    let l33 = lemma33_exponents(3, 2.0).map_err(|e| e.to_string())?;
    let ok33 = matches!(l33.p_infinity, Bound::Finite(x) if close(x, 6.0));
    let pn = prop5_pn_sequence(2.5).map_err(|e| e.to_string())?;
    let okpn = pn.n0 == 1 && close(pn.p_exit.as_f64(), 10.0);
    let zk = prop4_zk_sequence(2, 3, 4.5).map_err(|e| e.to_string())?;
    let okzk = zk.steps_to_target == Bound::Finite(1.0) && close(*zk.terms.last().unwrap(), 6.0);
    check(
        ok36 && ok33 && okpn && okzk,
        format!("q_n = {:?}, p_inf = {}, N0 = {}, z = {:?}", q.terms, l33.p_infinity, pn.n0, zk.terms),
    )
}

fn c7_degenerate() -> Outcome {
    let cfg = FourSpeciesConfig {
        d: [1.0, 2.0, 0.5, 0.0],
        t_final: 5.0,
        ..FourSpeciesConfig::default()
    };
    let (rep, _) = run_prop5(&cfg).map_err(|e| e.to_string())?;
    check(
        rep.growth_factor < 10.0 && rep.inequality_holds,
        format!(
            "sup growth factor = {:.4}, max excess of d_t a4 - a1 a3 = {:.2e} (tolerance {:.2e})",
            rep.growth_factor, rep.inequality_excess, rep.inequality_tolerance
        ),
    )
}

fn c8_growth() -> Outcome {
    let rep = polynomial_growth_probe(&FourSpeciesConfig::default(), &[2.0, 4.0, 8.0, 16.0])
        .map_err(|e| e.to_string())?;
    check(
        rep.exponent <= 0.1 && !rep.super_polynomial,
        format!("growth exponent = {:.2e}, sups = {:?}", rep.exponent, rep.sup_norms),
    )
}

fn c9_convergence() -> Outcome {
    let space = cosine_mode_errors(true, 4, 16, 1e-4, 0.1).map_err(|e| e.to_string())?;
    let time = cosine_mode_errors(false, 4, 64, 0.02, 0.2).map_err(|e| e.to_string())?;
    let so = observed_orders(&space);
    let to = observed_orders(&time);
    let smin = so.iter().copied().fold(f64::INFINITY, f64::min);
    let tmin = to.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        smin >= 1.9 && tmin >= 0.9,
        format!("space orders = {so:.3?}, time orders = {to:.3?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 C_m,2 anchor", c1_anchor),
        ("2 duality ensemble", c2_duality),
        ("3 conservation", c3_conservation),
        ("4 equilibrium oracle", c4_equilibrium),
        ("5 exponential decay", c5_decay),
        ("6 exponent recursions", c6_recursions),
        ("7 degenerate diffusion", c7_degenerate),
        ("8 polynomial growth", c8_growth),
        ("9 scheme convergence", c9_convergence),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
