//! End-to-end drivers: the duality bound on variable-coefficient heat flow,
//! exponential decay of the four-species system, degenerate diffusion and
//! polynomial growth in time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{four_species_equilibrium, four_species_masses, EquilibriumResult};
use crate::error::{Error, Result};
use crate::estimates::{duality_prefactor, standard_provider, DualityReport, Verdict};
use crate::grid::{lp_norm_space, lp_norm_spacetime, Grid, ScalarField};
use crate::heat::{solve_forward_variable_with, CoefficientField, RegularityConstant};
use crate::reaction::{simulate_observed, ReactionNetwork, Simulation, SimulationConfig, SpeciesState};
use crate::solver::NeumannSolver;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityCheck {
    pub anchor: &'static str,
    pub p: f64,
    pub p_conjugate: f64,
    /// `‖u‖_{L^p(Ω_T)}`, trapezoid rule in time.
    pub measured: f64,
    /// `(1 + b D) T^{1/p} ‖u0‖_{L^p(Ω)}`, absent when the smallness condition fails.
    pub bound: Option<f64>,
    /// `measured / bound`, 0 when both vanish.
    pub ratio: Option<f64>,
    /// True when the constant is a certified upper bound at `q = p'`.
    pub guaranteed: bool,
    pub note: Option<String>,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::param("p", format!("must lie in ]2, ∞[, got {p}")));
    }
    Ok(())
}

fn duality_note(report: &DualityReport, p_conj: f64) -> (bool, Option<String>) {
    if !report.condition_holds {
        return (false, Some("smallness condition fails: bound not guaranteed".into()));
    }
    let at_conjugate = (report.c.q - p_conj).abs() < 1e-12;
    let guaranteed = report.verdict == Verdict::Certified && at_conjugate;
    let note = (!guaranteed).then(|| {
        if at_conjugate {
            "constant is only a lower estimate: bound not guaranteed".to_string()
        } else {
            format!(
                "constant taken at q = {} instead of p' = {p_conj}: bound not guaranteed",
                report.c.q
            )
        }
    });
    (guaranteed, note)
}

/// Solves `u_t - Δ(M u) = 0` from `u0` and compares `‖u‖_{L^p(Ω_T)}` with the
/// duality bound built from `c = C_{(a+b)/2, q}`.
pub fn verify_duality(
    u0: &ScalarField,
    coeff: &CoefficientField,
    p: f64,
    t_final: f64,
    dt: f64,
    c: &RegularityConstant,
) -> Result<(DualityCheck, DualityReport)> {
    let solver = NeumannSolver::new(*u0.grid());
    verify_duality_with(&solver, u0, coeff, p, t_final, dt, c)
}

fn verify_duality_with(
    solver: &NeumannSolver,
    u0: &ScalarField,
    coeff: &CoefficientField,
    p: f64,
    t_final: f64,
    dt: f64,
    c: &RegularityConstant,
) -> Result<(DualityCheck, DualityReport)> {
    check_p(p)?;
    let (a, b) = coeff.bounds();
    let report = duality_prefactor(a, b, c.q, c)?;
    let p_conj = p / (p - 1.0);
    let tr = solve_forward_variable_with(solver, u0, coeff, t_final, dt)?;
    let measured = lp_norm_spacetime(&tr, 0, p)?;
    let bound = report
        .prefactor
        .map(|pf| pf * t_final.powf(1.0 / p) * lp_norm_space(u0, p).unwrap_or(f64::NAN));
    let ratio = bound.map(|bd| if bd == 0.0 && measured == 0.0 { 0.0 } else { measured / bd });
    let (guaranteed, note) = duality_note(&report, p_conj);
    Ok((
        DualityCheck {
            anchor: "prop1.duality",
            p,
            p_conjugate: p_conj,
            measured,
            bound,
            ratio,
            guaranteed,
            note,
        },
        report,
    ))
}

/// Seeded nonnegative initial datum. Cycles through i.i.d. cell values, a
/// localised bump and a smooth positive profile.
pub fn sample_initial(grid: &Grid, seed: u64, index: usize) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let [lx, ly] = grid.extents();
    match index % 3 {
        0 => {
            let v = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            ScalarField::from_vec_unchecked(*grid, v)
        }
        1 => {
            let c = [rng.gen_range(0.0..lx), rng.gen_range(0.0..ly.max(1e-300))];
            let w = 0.05 + 0.1 * rng.gen::<f64>();
            ScalarField::from_fn(*grid, |x| {
                let dx = (x[0] - c[0]) / (w * lx);
                let dy = if grid.dims() == 2 { (x[1] - c[1]) / (w * ly) } else { 0.0 };
                (-(dx * dx + dy * dy)).exp()
            })
            .expect("finite bump")
        }
        _ => {
            let phi = smooth_mode_sum(grid, &mut rng, 3);
            let v = phi.values().iter().map(|x| 1.0 + 0.9 * x).collect();
            ScalarField::from_vec_unchecked(*grid, v)
        }
    }
}

/// Mean-zero combination of low cosine modes, scaled to sup norm 1.
fn smooth_mode_sum(grid: &Grid, rng: &mut ChaCha8Rng, kmax: usize) -> ScalarField {
    let [lx, ly] = grid.extents();
    let ky_max = if grid.dims() == 2 { kmax } else { 0 };
    let mut terms = Vec::new();
    for kx in 0..=kmax {
        for ky in 0..=ky_max {
            if kx + ky == 0 {
                continue;
            }
            let amp = rng.gen_range(-1.0..1.0) / (1.0 + (kx * kx + ky * ky) as f64);
            terms.push((kx as f64, ky as f64, amp));
        }
    }
    let pi = std::f64::consts::PI;
    let f = ScalarField::from_fn(*grid, |x| {
        terms
            .iter()
            .map(|&(kx, ky, a)| a * (pi * kx * x[0] / lx).cos() * (pi * ky * x[1] / ly).cos())
            .sum()
    })
    .expect("finite modes");
    let mean = f.mean();
    let v: Vec<f64> = f.values().iter().map(|x| x - mean).collect();
    let s = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    ScalarField::from_vec_unchecked(*grid, v.into_iter().map(|x| x / s).collect())
}

/// Mean-zero smooth perturbation with unit sup norm.
pub fn smooth_perturbation(grid: &Grid, seed: u64, index: usize) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x51_7cc1_b727_220a).wrapping_add(index as u64 * 7919));
    smooth_mode_sum(grid, &mut rng, 3)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualityConfig {
    pub grid: Grid,
    pub a: f64,
    pub b: f64,
    /// Time between flips of the checkerboard coefficient.
    pub period: f64,
    pub p: f64,
    pub t_final: f64,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for DualityConfig {
    fn default() -> Self {
        DualityConfig {
            grid: Grid::new_2d([1.0, 1.0], [64, 64]).expect("valid default grid"),
            a: 1.0,
            b: 3.0,
            period: 0.1,
            p: 3.0,
            t_final: 1.0,
            dt: 1e-2,
            samples: 32,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityEnsemble {
    pub anchor: &'static str,
    pub constants: DualityReport,
    pub checks: Vec<DualityCheck>,
    pub max_ratio: Option<f64>,
    pub all_within_bound: bool,
}

/// Runs [`verify_duality`] over `config.samples` seeded initial data with a
/// checkerboard coefficient in `{a, b}`.
pub fn verify_duality_ensemble(config: &DualityConfig, c: &RegularityConstant) -> Result<DualityEnsemble> {
    if config.samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let coeff = if config.a == config.b {
        CoefficientField::constant(config.a)?
    } else {
        CoefficientField::checkerboard(config.a, config.b, config.period)?
    };
    let solver = NeumannSolver::new(config.grid);
    let results: Vec<(DualityCheck, DualityReport)> = (0..config.samples)
        .into_par_iter()
        .map(|k| {
            let u0 = sample_initial(&config.grid, config.seed, k);
            verify_duality_with(&solver, &u0, &coeff, config.p, config.t_final, config.dt, c)
        })
        .collect::<Result<_>>()?;
    let constants = results[0].1.clone();
    let checks: Vec<DualityCheck> = results.into_iter().map(|r| r.0).collect();
    let max_ratio = checks
        .iter()
        .map(|c| c.ratio)
        .collect::<Option<Vec<f64>>>()
        .map(|r| r.into_iter().fold(0.0, f64::max));
    Ok(DualityEnsemble {
        anchor: "prop1.duality",
        constants,
        all_within_bound: max_ratio.is_some_and(|r| r <= 1.0),
        max_ratio,
        checks,
    })
}

/// Fit of `κ1 exp(-κ2 t)` to a decaying series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kappa1: f64,
    pub kappa2: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
    pub series: Vec<(f64, f64)>,
}

impl DecayFit {
    /// `log10(first / last)` over the fitted window.
    pub fn decades(&self) -> f64 {
        match (self.series.first(), self.series.last()) {
            (Some(a), Some(b)) => (a.1 / b.1).log10(),
            _ => 0.0,
        }
    }
}

/// Ordinary least squares `y = α + β x`, returning `(α, β, r²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let alpha = my - beta * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - alpha - beta * a).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (alpha, beta, r2)
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least squares on `(t, ln value)` over `t >= t_start`.
pub fn fit_decay(series: &[(f64, f64)], t_start: f64) -> Result<DecayFit> {
    let window: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_start).collect();
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::param(
            "series",
            format!("need at least {MIN_FIT_SAMPLES} samples with t >= {t_start}, got {}", window.len()),
        ));
    }
    if let Some((t, v)) = window.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("series", format!("value {v} at t = {t} is not positive")));
    }
    let t: Vec<f64> = window.iter().map(|p| p.0).collect();
    let y: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
    let (alpha, beta, r2) = linear_fit(&t, &y);
    Ok(DecayFit {
        kappa1: alpha.exp(),
        kappa2: -beta,
        window: [t_start, *t.last().unwrap()],
        r_squared: r2,
        series: window,
    })
}

/// Four-species run `A1 + A3 ⇌ A2 + A4` started from a perturbed equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourSpeciesConfig {
    pub grid: Grid,
    pub d: [f64; 4],
    /// State whose conserved masses define the equilibrium.
    pub base: [f64; 4],
    /// Relative size of the smooth perturbation added to the equilibrium.
    pub amplitude: f64,
    pub seed: u64,
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Start of the decay-fit window; defaults to 10% of `t_final`.
    pub t_start: Option<f64>,
    pub ceiling: f64,
}

impl Default for FourSpeciesConfig {
    fn default() -> Self {
        FourSpeciesConfig {
            grid: Grid::new_2d([2.0, 2.0], [64, 64]).expect("valid default grid"),
            d: [1.0, 2.0, 0.5, 1.5],
            base: [1.0, 2.0, 1.0, 0.5],
            amplitude: 0.2,
            seed: 7,
            t_final: 10.0,
            dt: 5e-3,
            sample_every: 20,
            t_start: None,
            ceiling: 1e6,
        }
    }
}

impl FourSpeciesConfig {
    pub fn network(&self) -> Result<ReactionNetwork> {
        ReactionNetwork::four_species(self.d)
    }

    pub fn equilibrium(&self) -> Result<EquilibriumResult> {
        let m = four_species_masses(self.base);
        four_species_equilibrium(m[0], m[1], m[2])
    }

    /// `a_i∞ (1 + amplitude φ_i)` with mean-zero `φ_i`, so the masses and
    /// hence the equilibrium are those of `base`.
    pub fn initial_state(&self) -> Result<(SpeciesState, EquilibriumResult)> {
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(Error::param("amplitude", "must lie in [0, 1)"));
        }
        let eq = self.equilibrium()?;
        let fields = (0..4)
            .map(|i| {
                let phi = smooth_perturbation(&self.grid, self.seed, i);
                let v = phi.values().iter().map(|x| eq.values[i] * (1.0 + self.amplitude * x)).collect();
                ScalarField::new(self.grid, v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((SpeciesState::new(fields, 0.0)?, eq))
    }

    fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            t_final: self.t_final,
            dt: self.dt,
            sample_every: self.sample_every,
            norm_p: 2.0,
            ceiling: self.ceiling,
            keep_snapshots: false,
            ..SimulationConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub anchor: &'static str,
    /// `1 + 2/N`.
    pub exponent: f64,
    /// Exponent at which the constant was actually evaluated.
    pub exponent_used: f64,
    pub c: RegularityConstant,
    pub delta: f64,
    /// `2 / C`.
    pub threshold: f64,
    pub holds: bool,
    pub verdict: Verdict,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub anchor: &'static str,
    pub fit: DecayFit,
    pub decades: f64,
    pub equilibrium: EquilibriumResult,
    /// Worst relative drift of `a1 + a2`, `a2 + a3`, `a1 + a4`.
    pub mass_drift: Vec<f64>,
    pub min_value: f64,
    pub condition: Option<ConditionReport>,
}

fn decay_run(config: &FourSpeciesConfig) -> Result<(DecayReport, Simulation)> {
    let net = config.network()?;
    let (init, eq) = config.initial_state()?;
    let sim = simulate_observed(&net, &init, &config.simulation(), &mut |_, _, _| {})?;
    let series: Vec<(f64, f64)> = sim
        .diagnostics
        .times
        .iter()
        .zip(&sim.diagnostics.sup_distance)
        .map(|(&t, d)| (t, d.unwrap_or(f64::NAN)))
        .collect();
    let t_start = config.t_start.unwrap_or(0.1 * config.t_final);
    let fit = fit_decay(&series, t_start)?;
    Ok((
        DecayReport {
            anchor: "prop2.decay",
            decades: fit.decades(),
            fit,
            equilibrium: eq,
            mass_drift: sim.diagnostics.mass_drift(),
            min_value: *sim.diagnostics.running_min.last().unwrap_or(&f64::NAN),
            condition: None,
        },
        sim,
    ))
}

/// Exponential decay towards equilibrium of the two-dimensional
/// four-species system; no smallness condition on the diffusion spread.
pub fn run_prop2(config: &FourSpeciesConfig) -> Result<(DecayReport, Simulation)> {
    if config.grid.dims() != 2 {
        return Err(Error::param("grid", "this experiment runs in two dimensions"));
    }
    if config.d.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::param("d", "all diffusion rates must be positive"));
    }
    decay_run(config)
}

/// Decay in dimension 1 or 2 together with the smallness condition on the
/// spread at exponent `1 + 2/N`. `c_three_halves` feeds the interpolated
/// upper bound where it applies.
pub fn run_prop3(config: &FourSpeciesConfig, c_three_halves: Option<f64>) -> Result<(DecayReport, Simulation)> {
    if config.d.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::param("d", "all diffusion rates must be positive"));
    }
    let spread = config.network()?.spread();
    let n = config.grid.dims() as f64;
    let exponent = 1.0 + 2.0 / n;
    // Above q = 2 no bound is available; the q = 2 anchor stands in for it.
    let (used, note) = if exponent > 2.0 {
        (2.0, Some(format!("C at q = {exponent} unavailable; evaluated at the q = 2 anchor")))
    } else {
        (exponent, None)
    };
    let refuse = crate::estimates::no_fallback;
    let provider = standard_provider(c_three_halves, &refuse);
    let c = provider(spread.midpoint(), used)?;
    let threshold = 2.0 / c.value;
    let holds = spread.delta < threshold;
    let mut verdict = if spread.delta == 0.0 || (holds && c.is_upper_bound()) {
        Verdict::Certified
    } else if holds {
        Verdict::Plausible
    } else if c.is_upper_bound() {
        Verdict::Undetermined
    } else {
        Verdict::Violated
    };
    if note.is_some() && verdict == Verdict::Certified && spread.delta > 0.0 {
        verdict = Verdict::Plausible;
    }
    let (mut report, sim) = decay_run(config)?;
    report.anchor = "prop3.decay";
    report.condition = Some(ConditionReport {
        anchor: "prop3.smallness",
        exponent,
        exponent_used: used,
        c,
        delta: spread.delta,
        threshold,
        holds,
        verdict,
        note,
    });
    Ok((report, sim))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub anchor: &'static str,
    pub sup_initial: Vec<f64>,
    /// `sup_{[0,T]} ‖a_i‖_∞` per species.
    pub sup_over_run: Vec<f64>,
    /// Largest `sup_over_run / sup_initial`.
    pub growth_factor: f64,
    /// Largest `(a4' - a4)/dt - a1 a3` over steps and cells.
    pub inequality_excess: f64,
    pub inequality_tolerance: f64,
    pub inequality_holds: bool,
    pub mass_drift: Vec<f64>,
    pub min_value: f64,
}

/// Run with `d4 = 0`, tracking sup norms and the one-sided bound
/// `∂t a4 <= a1 a3` at every step.
pub fn run_prop5(config: &FourSpeciesConfig) -> Result<(BoundednessReport, Simulation)> {
    if config.grid.dims() != 2 {
        return Err(Error::param("grid", "this experiment runs in two dimensions"));
    }
    if config.d[3] != 0.0 || config.d[..3].iter().any(|d| !(*d > 0.0)) {
        return Err(Error::param("d", "need d1, d2, d3 > 0 and d4 = 0"));
    }
    let net = config.network()?;
    let (init, _) = config.initial_state()?;
    let mut excess = f64::NEG_INFINITY;
    let mut tolerance = 0.0_f64;
    let mut observer = |prev: &SpeciesState, next: &SpeciesState, dt: f64| {
        let (a1, a3) = (prev.fields[0].values(), prev.fields[2].values());
        let (old, new) = (prev.fields[3].values(), next.fields[3].values());
        let mut sup_source = 0.0_f64;
        for c in 0..old.len() {
            let source = a1[c] * a3[c];
            sup_source = sup_source.max(source);
            excess = excess.max((new[c] - old[c]) / dt - source);
        }
        tolerance = tolerance.max(dt * (1.0 + sup_source));
    };
    let sim = simulate_observed(&net, &init, &config.simulation(), &mut observer)?;
    let sup_initial: Vec<f64> = init.fields.iter().map(|f| f.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect();
    let sup_over_run = sim.diagnostics.running_sup.last().cloned().unwrap_or_default();
    let growth = sup_over_run.iter().zip(&sup_initial).map(|(s, i)| s / i).fold(0.0, f64::max);
    Ok((
        BoundednessReport {
            anchor: "prop5.bounded",
            sup_initial,
            sup_over_run,
            growth_factor: growth,
            inequality_excess: excess,
            inequality_tolerance: tolerance,
            inequality_holds: excess <= tolerance,
            mass_drift: sim.diagnostics.mass_drift(),
            min_value: *sim.diagnostics.running_min.last().unwrap_or(&f64::NAN),
        },
        sim,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub anchor: &'static str,
    pub horizons: Vec<f64>,
    /// `max_i ‖a_i‖_{L^∞(Ω_T)}` for each horizon.
    pub sup_norms: Vec<f64>,
    /// Slope of `log sup` against `log T`.
    pub exponent: f64,
    pub local_slopes: Vec<f64>,
    /// Local slopes increase and end above the tolerance.
    pub super_polynomial: bool,
}

/// Growth exponent of `values` against `horizons` on a log-log scale.
pub fn growth_exponent(horizons: &[f64], values: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
    if horizons.len() != values.len() || horizons.len() < 2 {
        return Err(Error::param("horizons", "need at least two horizons with one value each"));
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) || horizons[0] <= 0.0 {
        return Err(Error::param("horizons", "must be positive and increasing"));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("values", "must be positive"));
    }
    let x: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (_, slope, _) = linear_fit(&x, &y);
    let local: Vec<f64> = (1..x.len()).map(|k| (y[k] - y[k - 1]) / (x[k] - x[k - 1])).collect();
    let rising = local.windows(2).all(|w| w[1] > w[0]) && local.len() > 1;
    let super_poly = rising && *local.last().unwrap() > GROWTH_TOLERANCE;
    Ok((slope, local, super_poly))
}

pub const GROWTH_TOLERANCE: f64 = 0.1;

/// `‖a‖_{L^∞(Ω_T)}` for every `T` in `horizons`, from one run to the
/// largest horizon (the run is deterministic, so prefixes coincide with
/// separate runs).
pub fn polynomial_growth_probe(config: &FourSpeciesConfig, horizons: &[f64]) -> Result<GrowthReport> {
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let mut cfg = config.clone();
    cfg.t_final = t_max;
    let net = cfg.network()?;
    let (init, _) = cfg.initial_state()?;
    let mut sup = init.fields.iter().map(|f| f.max()).fold(0.0, f64::max);
    let mut at: Vec<Option<f64>> = vec![None; horizons.len()];
    let mut observer = |_: &SpeciesState, next: &SpeciesState, dt: f64| {
        sup = next.fields.iter().map(|f| f.max()).fold(sup, f64::max);
        for (slot, &t) in at.iter_mut().zip(horizons) {
            if slot.is_none() && next.time >= t - 0.5 * dt {
                *slot = Some(sup);
            }
        }
    };
    simulate_observed(&net, &init, &cfg.simulation(), &mut observer)?;
    let sup_norms: Vec<f64> = at
        .into_iter()
        .map(|v| v.ok_or_else(|| Error::Numerical("horizon not reached".into())))
        .collect::<Result<_>>()?;
    let (exponent, local_slopes, super_polynomial) = growth_exponent(horizons, &sup_norms)?;
    Ok(GrowthReport {
        anchor: "lemma37.growth",
        horizons: horizons.to_vec(),
        sup_norms,
        exponent,
        local_slopes,
        super_polynomial,
    })
}

/// Observed order of accuracy from errors at successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Errors of the heat solver on the cosine mode `cos(π x / L)` with unit
/// diffusion against the exact decay `exp(-π² t / L²)`, for grids of
/// `n0, 2 n0, ...` cells (`space = true`, fine Crank–Nicolson steps) or
/// step sizes `dt0, dt0/2, ...` (`space = false`, backward Euler against
/// the semi-discrete solution on a fixed grid).
pub fn cosine_mode_errors(space: bool, levels: usize, n0: usize, dt0: f64, t_final: f64) -> Result<Vec<f64>> {
    use crate::heat::{solve_forward_heat, TimeScheme, ZeroForcing};
    let pi = std::f64::consts::PI;
    (0..levels)
        .map(|k| {
            let (n, dt, scheme) = if space {
                (n0 << k, dt0, TimeScheme::CrankNicolson)
            } else {
                (n0, dt0 / (1 << k) as f64, TimeScheme::BackwardEuler)
            };
            let grid = Grid::new_1d(1.0, n)?;
            let u0 = ScalarField::from_fn(grid, |x| (pi * x[0]).cos())?;
            let tr = solve_forward_heat(&u0, 1.0, &ZeroForcing, t_final, dt, scheme)?;
            let decay = if space {
                (-pi * pi * t_final).exp()
            } else {
                let lam = crate::solver::neumann_eigenvalue(1, n, grid.spacing(0));
                (-lam * t_final).exp()
            };
            let last = &tr.last().expect("nonempty")[0];
            Ok(last
                .values()
                .iter()
                .zip(u0.values())
                .map(|(u, c)| (u - decay * c).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::Provenance;

    #[test]
    fn fit_decay_examples() {
        let series: Vec<(f64, f64)> = (0..40).map(|k| {
            let t = k as f64 * 0.25;
            (t, 3.0 * (-2.0 * t).exp())
        }).collect();
        let fit = fit_decay(&series, 0.0).unwrap();
        assert!((fit.kappa1 - 3.0).abs() < 1e-8);
        assert!((fit.kappa2 - 2.0).abs() < 1e-8);
        assert!(fit.r_squared > 1.0 - 1e-12);

        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.7)).collect();
        let fit = fit_decay(&flat, 0.0).unwrap();
        assert!(fit.kappa2.abs() < 1e-14);
        assert!((0.0..=1.0).contains(&fit.r_squared));

        assert!(fit_decay(&series[..9], 0.0).is_err());
        assert!(fit_decay(&series, 8.0).is_err());
        let mut bad = series.clone();
        bad[20].1 = 0.0;
        assert!(fit_decay(&bad, 0.0).is_err());
        assert!(fit_decay(&bad, 5.5).is_ok());
    }

    #[test]
    fn duality_constant_coefficient_and_zero_data() {
        let g = Grid::new_2d([1.0, 1.0], [16, 16]).unwrap();
        let coeff = CoefficientField::constant(1.5).unwrap();
        let c = RegularityConstant::analytic(1.5).unwrap();
        for k in 0..3 {
            let u0 = sample_initial(&g, 1, k);
            let (chk, rep) = verify_duality(&u0, &coeff, 3.0, 0.5, 0.01, &c).unwrap();
            assert_eq!(rep.d, Some(c.value));
            assert!(chk.ratio.unwrap() <= 1.0);
            assert!(!chk.guaranteed);
        }
        let zero = ScalarField::zeros(g);
        let (chk, _) = verify_duality(&zero, &coeff, 3.0, 0.5, 0.01, &c).unwrap();
        assert_eq!(chk.ratio, Some(0.0));
    }

    #[test]
    fn duality_ratio_is_homogeneous() {
        let g = Grid::new_2d([1.0, 1.0], [12, 12]).unwrap();
        let coeff = CoefficientField::checkerboard(1.0, 3.0, 0.1).unwrap();
        let c = RegularityConstant::analytic(2.0).unwrap();
        let u0 = sample_initial(&g, 4, 0);
        let (a, _) = verify_duality(&u0, &coeff, 3.0, 0.3, 0.01, &c).unwrap();
        let (b, _) = verify_duality(&u0.scaled(37.0), &coeff, 3.0, 0.3, 0.01, &c).unwrap();
        assert!((a.ratio.unwrap() - b.ratio.unwrap()).abs() < 1e-10 * a.ratio.unwrap());
    }

    #[test]
    fn duality_reports_failed_condition() {
        let g = Grid::new_2d([1.0, 1.0], [8, 8]).unwrap();
        let coeff = CoefficientField::checkerboard(1.0, 3.0, 0.1).unwrap();
        let c = RegularityConstant::given(2.0, 1.5, 2.0, Provenance::Empirical).unwrap();
        let (chk, _) = verify_duality(&sample_initial(&g, 0, 0), &coeff, 3.0, 0.1, 0.01, &c).unwrap();
        assert_eq!(chk.bound, None);
        assert!(chk.note.unwrap().contains("not guaranteed"));
        assert!(verify_duality(&sample_initial(&g, 0, 0), &coeff, 2.0, 0.1, 0.01, &c).is_err());
    }

    #[test]
    fn perturbations_are_mean_zero_and_seeded() {
        let g = Grid::new_2d([2.0, 1.0], [16, 8]).unwrap();
        let a = smooth_perturbation(&g, 3, 1);
        let b = smooth_perturbation(&g, 3, 1);
        assert_eq!(a.values(), b.values());
        assert!(a.mean().abs() < 1e-15);
        assert!((a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-15);
        assert_ne!(smooth_perturbation(&g, 4, 1).values(), a.values());
        for k in 0..6 {
            assert!(sample_initial(&g, 9, k).min() >= 0.0);
        }
    }

    #[test]
    fn growth_exponent_examples() {
        let h = [2.0, 4.0, 8.0, 16.0];
        let (e, _, sp) = growth_exponent(&h, &[1.3; 4]).unwrap();
        assert!(e.abs() < 1e-15 && !sp);
        let (e, _, _) = growth_exponent(&h, &h.map(|t| 2.0 * t)).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        let (_, _, sp) = growth_exponent(&h, &h.map(|t: f64| t.exp())).unwrap();
        assert!(sp);
    }

    #[test]
    fn heat_forcing_mean_grows_linearly_in_probe() {
        use crate::heat::{solve_forward_heat, FnForcing, TimeScheme};
        let g = Grid::unit(1, 8).unwrap();
        let tr = solve_forward_heat(&ScalarField::zeros(g), 1.0, &FnForcing(|_, _| 1.0), 16.0, 0.5, TimeScheme::BackwardEuler)
            .unwrap();
        let h = [2.0, 4.0, 8.0, 16.0];
        let means: Vec<f64> = h.iter().map(|t| tr.field((t / 0.5) as usize, 0).mean()).collect();
        let (e, _, _) = growth_exponent(&h, &means).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_decay_run() {
        let cfg = FourSpeciesConfig {
            grid: Grid::new_2d([2.0, 2.0], [12, 12]).unwrap(),
            t_final: 4.0,
            dt: 0.01,
            sample_every: 10,
            ..FourSpeciesConfig::default()
        };
        let (rep, _) = run_prop2(&cfg).unwrap();
        assert!(rep.fit.kappa2 > 0.0);
        assert!(rep.mass_drift.iter().all(|d| *d < 1e-12));
        let (rep3, _) = run_prop3(&cfg, None).unwrap();
        let cond = rep3.condition.unwrap();
        assert_eq!(cond.exponent, 2.0);
        assert!(cond.holds);
        assert_eq!(cond.verdict, Verdict::Certified);
    }

    #[test]
    fn prop5_requires_degenerate_species() {
        let cfg = FourSpeciesConfig {
            grid: Grid::new_2d([1.0, 1.0], [8, 8]).unwrap(),
            t_final: 0.5,
            dt: 0.01,
            ..FourSpeciesConfig::default()
        };
        assert!(run_prop5(&cfg).is_err());
        let deg = FourSpeciesConfig { d: [1.0, 2.0, 0.5, 0.0], ..cfg };
        let (rep, _) = run_prop5(&deg).unwrap();
        assert!(rep.inequality_holds, "{} > {}", rep.inequality_excess, rep.inequality_tolerance);
    }
}
