//! Mass-action reaction-diffusion systems for a single reversible reaction
//! `Σ α_i A_i ⇌ Σ β_i A_i` and their IMEX time integration.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{general_equilibrium, EquilibriumResult};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, lp_power, sup_abs, Grid, ScalarField, Trajectory};
use crate::solver::NeumannSolver;

/// Tolerated negativity of user-supplied concentrations.
pub const INPUT_NEG_TOL: f64 = 1e-12;
/// Tolerated negativity produced by a time step before it is rejected.
pub const STEP_NEG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpec", into = "NetworkSpec")]
pub struct ReactionNetwork {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    k: f64,
    l: f64,
    d: Vec<f64>,
}

/// Serialized form `{n, alpha, beta, k, l, d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n: usize,
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub k: f64,
    pub l: f64,
    pub d: Vec<f64>,
}

impl TryFrom<NetworkSpec> for ReactionNetwork {
    type Error = Error;
    fn try_from(s: NetworkSpec) -> Result<Self> {
        if s.alpha.len() != s.n || s.beta.len() != s.n || s.d.len() != s.n {
            return Err(Error::param(
                "network",
                format!(
                    "n = {} but alpha, beta, d have lengths {}, {}, {}",
                    s.n,
                    s.alpha.len(),
                    s.beta.len(),
                    s.d.len()
                ),
            ));
        }
        ReactionNetwork::new(s.alpha, s.beta, s.k, s.l, s.d)
    }
}

impl From<ReactionNetwork> for NetworkSpec {
    fn from(net: ReactionNetwork) -> Self {
        NetworkSpec {
            n: net.alpha.len(),
            alpha: net.alpha,
            beta: net.beta,
            k: net.k,
            l: net.l,
            d: net.d,
        }
    }
}

/// `a = min d_i`, `b = max d_i`, `delta = b - a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpread {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl DiffusionSpread {
    pub fn of(d: &[f64]) -> Self {
        let a = d.iter().copied().fold(f64::INFINITY, f64::min);
        let b = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        DiffusionSpread { a, b, delta: b - a }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

impl ReactionNetwork {
    /// `l` is the forward rate (multiplying `∏ a^α`), `k` the backward one.
    pub fn new(alpha: Vec<u32>, beta: Vec<u32>, k: f64, l: f64, d: Vec<f64>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 || beta.len() != n || d.len() != n {
            return Err(Error::param("network", "alpha, beta and d need one entry per species"));
        }
        for (name, rate) in [("k", k), ("l", l)] {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::param(name, format!("rate must be finite and >= 0, got {rate}")));
            }
        }
        if d.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::param("d", "diffusion rates must be finite and >= 0"));
        }
        let net = ReactionNetwork { alpha, beta, k, l, d };
        if net.q() < 1 {
            return Err(Error::param("alpha/beta", "reaction has no reactants or products"));
        }
        Ok(net)
    }

    /// `A1 + A3 ⇌ A2 + A4` with unit rates.
    pub fn four_species(d: [f64; 4]) -> Result<Self> {
        Self::new(vec![1, 0, 1, 0], vec![0, 1, 0, 1], 1.0, 1.0, d.to_vec())
    }

    pub fn species(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    pub fn beta(&self) -> &[u32] {
        &self.beta
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.k, self.l)
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.d
    }

    pub fn with_diffusion(&self, d: Vec<f64>) -> Result<Self> {
        Self::new(self.alpha.clone(), self.beta.clone(), self.k, self.l, d)
    }

    pub fn with_rates(&self, k: f64, l: f64) -> Result<Self> {
        Self::new(self.alpha.clone(), self.beta.clone(), k, l, self.d.clone())
    }

    /// `Q = max(Σ α_i, Σ β_i)`.
    pub fn q(&self) -> u32 {
        self.alpha.iter().sum::<u32>().max(self.beta.iter().sum())
    }

    /// `β_i - α_i`.
    pub fn stoichiometry(&self) -> Vec<i64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect()
    }

    pub fn has_opposite_signs(&self) -> bool {
        let s = self.stoichiometry();
        s.iter().any(|&x| x > 0) && s.iter().any(|&x| x < 0)
    }

    pub fn spread(&self) -> DiffusionSpread {
        DiffusionSpread::of(&self.d)
    }

    /// Strictly positive weights `γ` with `Σ γ_i (α_i - β_i) = 0`, scaled so
    /// that the smallest weight is 1.
    pub fn conservation_weights(&self) -> Result<Vec<f64>> {
        if !self.has_opposite_signs() {
            return Err(Error::Hypothesis(
                "no two stoichiometric differences beta_i - alpha_i of opposite signs".into(),
            ));
        }
        let s = self.stoichiometry();
        let pos = s.iter().filter(|&&x| x > 0).count() as f64;
        let neg = s.iter().filter(|&&x| x < 0).count() as f64;
        let mut g: Vec<f64> = s
            .iter()
            .map(|&x| match x {
                0 => 1.0,
                x if x > 0 => 1.0 / (x as f64 * pos),
                x => 1.0 / (-x as f64 * neg),
            })
            .collect();
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        g.iter_mut().for_each(|x| *x /= min);
        Ok(g)
    }

    /// A basis of linear conservation laws: `n - 1` vectors spanning the
    /// orthogonal complement of `β - α`, chosen nonnegative when the network
    /// has an opposite-sign pair. For `A1 + A3 ⇌ A2 + A4` this is
    /// `a1 + a2`, `a2 + a3`, `a1 + a4`.
    pub fn conservation_basis(&self) -> Vec<Vec<f64>> {
        let s = self.stoichiometry();
        let n = s.len();
        let unit = |j: usize| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        };
        let Some(p) = s.iter().position(|&x| x != 0) else {
            return (0..n).map(unit).collect();
        };
        let opposite = s.iter().position(|&x| x * s[p] < 0);
        (0..n)
            .filter(|&j| j != p)
            .map(|j| {
                let mut v = vec![0.0; n];
                if s[j] == 0 {
                    v[j] = 1.0;
                } else if s[j] * s[p] < 0 {
                    v[j] = s[p].unsigned_abs() as f64;
                    v[p] = s[j].unsigned_abs() as f64;
                } else if let Some(q) = opposite {
                    v[j] = s[q].unsigned_abs() as f64;
                    v[q] = s[j].unsigned_abs() as f64;
                } else {
                    v[j] = 1.0;
                    v[p] = -(s[j] as f64) / s[p] as f64;
                }
                v
            })
            .collect()
    }

    /// Net reaction velocity `l ∏ a^α - k ∏ a^β` at one point.
    #[inline]
    pub fn velocity(&self, a: &[f64]) -> f64 {
        let mut fwd = self.l;
        let mut bwd = self.k;
        for j in 0..a.len() {
            if self.alpha[j] > 0 {
                fwd *= a[j].powi(self.alpha[j] as i32);
            }
            if self.beta[j] > 0 {
                bwd *= a[j].powi(self.beta[j] as i32);
            }
        }
        fwd - bwd
    }

    /// Pointwise reaction terms at one point.
    pub fn rhs_point(&self, a: &[f64], out: &mut [f64]) {
        let w = self.velocity(a);
        for i in 0..a.len() {
            out[i] = (self.beta[i] as f64 - self.alpha[i] as f64) * w;
        }
    }

    /// Reaction terms of the truncated system, divided by
    /// `1 + (1/r) (Σ a_j²)^{Q/2}`.
    pub fn rhs_point_approx(&self, a: &[f64], r: u32, out: &mut [f64]) {
        self.rhs_point(a, out);
        let s2: f64 = a.iter().map(|x| x * x).sum();
        let denom = 1.0 + s2.powf(0.5 * self.q() as f64) / r as f64;
        out.iter_mut().for_each(|v| *v /= denom);
    }
}

/// Concentrations of every species at one time.
#[derive(Debug, Clone)]
pub struct SpeciesState {
    pub fields: Vec<ScalarField>,
    pub time: f64,
}

impl SpeciesState {
    pub fn new(fields: Vec<ScalarField>, time: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::param("fields", "need at least one species"));
        }
        let grid = *fields[0].grid();
        if fields.iter().any(|f| *f.grid() != grid) {
            return Err(Error::InvalidGrid("species on different grids".into()));
        }
        check_nonnegative(&fields, INPUT_NEG_TOL)?;
        Ok(SpeciesState { fields, time })
    }

    /// Spatially constant state.
    pub fn uniform(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| ScalarField::constant(grid, v)).collect(), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn species(&self) -> usize {
        self.fields.len()
    }

    pub fn averages(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.mean()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.fields.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }

    fn point(&self, idx: usize, buf: &mut [f64]) {
        for (b, f) in buf.iter_mut().zip(&self.fields) {
            *b = f.values()[idx];
        }
    }
}

fn check_nonnegative(fields: &[ScalarField], tol: f64) -> Result<()> {
    for (s, f) in fields.iter().enumerate() {
        if let Some((cell, &value)) = f.values().iter().enumerate().find(|(_, v)| **v < -tol) {
            return Err(Error::Negative {
                species: s,
                cell,
                value,
            });
        }
    }
    Ok(())
}

/// Which right-hand side the integrator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "r")]
pub enum RhsKind {
    #[default]
    Exact,
    /// Truncated right-hand side with parameter `r >= 1`.
    Approximated(u32),
}

fn pointwise_rhs(net: &ReactionNetwork, state: &SpeciesState, kind: RhsKind) -> Result<Vec<Vec<f64>>> {
    check_nonnegative(&state.fields, STEP_NEG_TOL)?;
    if state.species() != net.species() {
        return Err(Error::param(
            "state",
            format!("network has {} species, state has {}", net.species(), state.species()),
        ));
    }
    let n = state.species();
    let cells = state.grid().len();
    let mut out = vec![vec![0.0; cells]; n];
    let mut a = vec![0.0; n];
    let mut r = vec![0.0; n];
    for idx in 0..cells {
        state.point(idx, &mut a);
        match kind {
            RhsKind::Exact => net.rhs_point(&a, &mut r),
            RhsKind::Approximated(rr) => net.rhs_point_approx(&a, rr, &mut r),
        }
        for i in 0..n {
            out[i][idx] = r[i];
        }
    }
    Ok(out)
}

fn wrap(grid: Grid, v: Vec<Vec<f64>>) -> Vec<ScalarField> {
    v.into_iter().map(|x| ScalarField::from_vec_unchecked(grid, x)).collect()
}

/// Mass-action reaction term of every species.
pub fn reaction_rhs(net: &ReactionNetwork, state: &SpeciesState) -> Result<Vec<ScalarField>> {
    Ok(wrap(*state.grid(), pointwise_rhs(net, state, RhsKind::Exact)?))
}

/// Reaction term of the truncated system with parameter `r`.
pub fn reaction_rhs_approx(
    net: &ReactionNetwork,
    state: &SpeciesState,
    r: u32,
) -> Result<Vec<ScalarField>> {
    if r == 0 {
        return Err(Error::param("r", "must be >= 1"));
    }
    Ok(wrap(*state.grid(), pointwise_rhs(net, state, RhsKind::Approximated(r))?))
}

/// Largest step for which the explicit reaction update keeps every species
/// nonnegative, with a safety factor of 1/2. Infinite when nothing reacts.
pub fn suggest_dt(net: &ReactionNetwork, state: &SpeciesState) -> f64 {
    let n = net.species();
    let s = net.stoichiometry();
    let (k, l) = net.rates();
    let mut a = vec![0.0; n];
    let mut worst = 0.0_f64;
    for idx in 0..state.grid().len() {
        state.point(idx, &mut a);
        for i in 0..n {
            // Relative loss rate of species i: the consuming direction always
            // contains a_i at least once.
            let (coef, powers, rate) = match s[i] {
                0 => continue,
                x if x < 0 => (-x as f64, &net.alpha, l),
                x => (x as f64, &net.beta, k),
            };
            let mut r = coef * rate;
            for j in 0..n {
                let e = powers[j] as i32 - if j == i { 1 } else { 0 };
                if e > 0 {
                    r *= a[j].max(0.0).powi(e);
                }
            }
            worst = worst.max(r);
        }
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        0.5 / worst
    }
}

/// Implicit-diffusion, explicit-reaction stepper. Species with zero
/// diffusion get a pure ODE update.
#[derive(Debug, Clone)]
pub struct Imex {
    net: ReactionNetwork,
    solver: NeumannSolver,
    pub rhs: RhsKind,
    pub max_halvings: u32,
}

/// Outcome of one outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStats {
    /// Number of sub-steps actually taken (1 when no rejection happened).
    pub substeps: u32,
}

impl Imex {
    pub fn new(net: ReactionNetwork, grid: Grid) -> Self {
        Imex {
            net,
            solver: NeumannSolver::new(grid),
            rhs: RhsKind::Exact,
            max_halvings: 12,
        }
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.net
    }

    pub fn solver(&self) -> &NeumannSolver {
        &self.solver
    }

    fn attempt(&self, state: &SpeciesState, dt: f64) -> Result<SpeciesState> {
        let r = pointwise_rhs(&self.net, state, self.rhs)?;
        let grid = *state.grid();
        let fields: Vec<ScalarField> = state
            .fields
            .par_iter()
            .zip(r.par_iter())
            .zip(self.net.d.par_iter())
            .map(|((f, ri), &d)| {
                let mut tmp: Vec<f64> = f.values().iter().zip(ri).map(|(u, q)| u + dt * q).collect();
                if d > 0.0 {
                    let b = tmp.clone();
                    self.solver.solve_shifted(dt * d, &b, &mut tmp);
                }
                ScalarField::from_vec_unchecked(grid, tmp)
            })
            .collect();
        Ok(SpeciesState {
            fields,
            time: state.time + dt,
        })
    }

    /// Advances by `dt`. A step whose result dips below `-STEP_NEG_TOL` is
    /// redone as two half steps, up to `max_halvings` levels deep.
    pub fn step(&self, state: &SpeciesState, dt: f64) -> Result<(SpeciesState, StepStats)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        self.step_depth(state, dt, 0)
    }

    fn step_depth(&self, state: &SpeciesState, dt: f64, depth: u32) -> Result<(SpeciesState, StepStats)> {
        let next = self.attempt(state, dt)?;
        let min = next.min_value();
        if !min.is_finite() {
            return Err(Error::NonFinite("species state"));
        }
        if min >= -STEP_NEG_TOL {
            return Ok((next, StepStats { substeps: 1 }));
        }
        if depth >= self.max_halvings {
            return Err(Error::StepRejected {
                retries: depth,
                min_value: min,
            });
        }
        let (mid, s1) = self.step_depth(state, 0.5 * dt, depth + 1)?;
        let (end, s2) = self.step_depth(&mid, 0.5 * dt, depth + 1)?;
        Ok((
            end,
            StepStats {
                substeps: s1.substeps + s2.substeps,
            },
        ))
    }
}

/// One IMEX step of `net` from `state`.
pub fn step_imex(net: &ReactionNetwork, state: &SpeciesState, dt: f64) -> Result<SpeciesState> {
    Ok(Imex::new(net.clone(), *state.grid()).step(state, dt)?.0)
}

/// Pointwise coefficient `M = Σ γ_i d_i a_i / Σ γ_i a_i` of the total-mass
/// equation. Cells without mass get the midpoint of the diffusion range.
/// With `gamma = None` the network's conservation weights are used.
pub fn total_mass_coefficient(
    net: &ReactionNetwork,
    state: &SpeciesState,
    gamma: Option<&[f64]>,
) -> Result<ScalarField> {
    let owned;
    let gamma = match gamma {
        Some(g) => g,
        None => {
            owned = net.conservation_weights()?;
            &owned
        }
    };
    check_gamma(net, gamma)?;
    let support: Vec<f64> = net
        .d
        .iter()
        .zip(gamma)
        .filter(|(_, &g)| g > 0.0)
        .map(|(&d, _)| d)
        .collect();
    let spread = DiffusionSpread::of(&support);
    let grid = *state.grid();
    let values = (0..grid.len())
        .map(|idx| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..net.species() {
                let a = state.fields[i].values()[idx].max(0.0);
                num += gamma[i] * net.d[i] * a;
                den += gamma[i] * a;
            }
            if den > 0.0 {
                (num / den).clamp(spread.a, spread.b)
            } else {
                spread.midpoint()
            }
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(grid, values))
}

fn check_gamma(net: &ReactionNetwork, gamma: &[f64]) -> Result<()> {
    if gamma.len() != net.species() || gamma.iter().any(|g| !(*g >= 0.0)) || gamma.iter().all(|g| *g == 0.0) {
        return Err(Error::param("gamma", "need one nonnegative weight per species, not all zero"));
    }
    let s = net.stoichiometry();
    let dot: f64 = gamma.iter().zip(&s).map(|(g, &x)| g * x as f64).sum();
    let scale: f64 = gamma.iter().zip(&s).map(|(g, &x)| (g * x as f64).abs()).sum::<f64>().max(1.0);
    if dot.abs() > 1e-12 * scale {
        return Err(Error::param("gamma", "weights do not annihilate beta - alpha"));
    }
    Ok(())
}

/// L² norm of the discrete residual `(u' - u)/dt - Δ(Σ γ_i d_i a_i')` of the
/// total-mass equation between two consecutive states.
pub fn mass_equation_residual(
    net: &ReactionNetwork,
    gamma: &[f64],
    prev: &SpeciesState,
    next: &SpeciesState,
    dt: f64,
) -> Result<f64> {
    check_gamma(net, gamma)?;
    let grid = *prev.grid();
    let n = grid.len();
    let mut flux = vec![0.0; n];
    let mut du = vec![0.0; n];
    for i in 0..net.species() {
        for c in 0..n {
            flux[c] += gamma[i] * net.d[i] * next.fields[i].values()[c];
            du[c] += gamma[i] * (next.fields[i].values()[c] - prev.fields[i].values()[c]) / dt;
        }
    }
    let mut lap = vec![0.0; n];
    apply_laplacian(&grid, &flux, &mut lap);
    let res: Vec<f64> = du.iter().zip(&lap).map(|(a, b)| a - b).collect();
    Ok(lp_power(&grid, &res, 2.0).sqrt())
}

/// `Σ_i ∫ a_i ln(a_i / a_i∞) - (a_i - a_i∞)`, with `0 ln 0 = 0`.
pub fn relative_entropy(state: &SpeciesState, eq: &[f64]) -> f64 {
    let vol = state.grid().cell_volume();
    state
        .fields
        .iter()
        .zip(eq)
        .map(|(f, &ai)| {
            f.values()
                .iter()
                .map(|&a| {
                    let a = a.max(0.0);
                    let log_term = if a > 0.0 { a * (a / ai).ln() } else { 0.0 };
                    log_term - (a - ai)
                })
                .sum::<f64>()
                * vol
        })
        .sum()
}

/// `Σ_i ‖a_i - a_i∞‖_∞`.
pub fn sup_distance(state: &SpeciesState, eq: &[f64]) -> f64 {
    state
        .fields
        .iter()
        .zip(eq)
        .map(|(f, &ai)| f.values().iter().fold(0.0_f64, |m, v| m.max((v - ai).abs())))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt: f64,
    /// Store a snapshot and a diagnostics row every this many steps.
    pub sample_every: usize,
    /// Exponent of the per-species L^p diagnostic.
    pub norm_p: f64,
    /// Abort once any sup norm exceeds this value.
    pub ceiling: f64,
    pub rhs: RhsKind,
    /// Keep field snapshots in the returned trajectory.
    pub keep_snapshots: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            t_final: 1.0,
            dt: 1e-3,
            sample_every: 10,
            norm_p: 2.0,
            ceiling: 1e6,
            rhs: RhsKind::Exact,
            keep_snapshots: true,
        }
    }
}

/// Time series recorded along a simulation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    /// One row per sample, one column per conservation law.
    pub masses: Vec<Vec<f64>>,
    pub linf: Vec<Vec<f64>>,
    pub lp: Vec<Vec<f64>>,
    pub entropy: Vec<Option<f64>>,
    pub sup_distance: Vec<Option<f64>>,
    /// Smallest concentration seen over all steps so far.
    pub running_min: Vec<f64>,
    /// Largest sup norm per species over all steps so far.
    pub running_sup: Vec<Vec<f64>>,
}

impl DiagnosticsSeries {
    /// CSV with columns `t, linf_*, lp_*, mass_*, entropy, sup_distance`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let species = self.linf.first().map_or(0, |r| r.len());
        let laws = self.masses.first().map_or(0, |r| r.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=species).map(|i| format!("linf_{i}")));
        header.extend((1..=species).map(|i| format!("lp_{i}")));
        header.extend((1..=laws).map(|i| format!("mass_{i}")));
        header.push("entropy".into());
        header.push("sup_distance".into());
        writeln!(w, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        for k in 0..self.times.len() {
            let mut row = vec![format!("{:e}", self.times[k])];
            row.extend(self.linf[k].iter().map(|v| format!("{v:e}")));
            row.extend(self.lp[k].iter().map(|v| format!("{v:e}")));
            row.extend(self.masses[k].iter().map(|v| format!("{v:e}")));
            row.push(opt(self.entropy[k]));
            row.push(opt(self.sup_distance[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Largest relative deviation of each conservation law from its initial value.
    pub fn mass_drift(&self) -> Vec<f64> {
        let Some(first) = self.masses.first() else {
            return Vec::new();
        };
        (0..first.len())
            .map(|j| {
                let m0 = first[j];
                let scale = m0.abs().max(f64::MIN_POSITIVE);
                self.masses.iter().map(|row| (row[j] - m0).abs() / scale).fold(0.0, f64::max)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub diagnostics: DiagnosticsSeries,
    pub equilibrium: Option<EquilibriumResult>,
    pub final_state: SpeciesState,
    pub rejected_steps: usize,
}

/// Runs the reaction-diffusion system from `initial` to `config.t_final`.
pub fn simulate(net: &ReactionNetwork, initial: &SpeciesState, config: &SimulationConfig) -> Result<Simulation> {
    simulate_observed(net, initial, config, &mut |_, _, _| {})
}

/// Like [`simulate`], calling `observer(prev, next, dt)` after every step.
pub fn simulate_observed(
    net: &ReactionNetwork,
    initial: &SpeciesState,
    config: &SimulationConfig,
    observer: &mut dyn FnMut(&SpeciesState, &SpeciesState, f64),
) -> Result<Simulation> {
    if initial.species() != net.species() {
        return Err(Error::param("initial", "species count does not match the network"));
    }
    if config.sample_every == 0 {
        return Err(Error::param("sample_every", "must be >= 1"));
    }
    if !(config.norm_p >= 1.0) {
        return Err(Error::param("norm_p", "must be >= 1"));
    }
    let steps = crate::heat::step_count(config.t_final, config.dt)?;
    let dt = config.t_final / steps as f64;
    let grid = *initial.grid();

    let mut stepper = Imex::new(net.clone(), grid);
    stepper.rhs = config.rhs;
    let laws = net.conservation_basis();
    let equilibrium = general_equilibrium(net, &initial.averages()).ok();
    let eq_values = equilibrium.as_ref().map(|e| e.values.clone());

    let mut tr = Trajectory::new(grid, net.species());
    let mut diag = DiagnosticsSeries::default();
    let mut running_sup: Vec<f64> = initial.fields.iter().map(|f| sup_abs(f.values())).collect();
    let mut running_min = initial.min_value();

    let record = |state: &SpeciesState, diag: &mut DiagnosticsSeries, tr: &mut Trajectory, rs: &[f64], rm: f64| -> Result<()> {
        let vol = grid.cell_volume();
        diag.times.push(state.time);
        diag.masses.push(
            laws.iter()
                .map(|w| {
                    w.iter()
                        .zip(&state.fields)
                        .map(|(wi, f)| wi * f.values().iter().sum::<f64>())
                        .sum::<f64>()
                        * vol
                })
                .collect(),
        );
        diag.linf.push(state.fields.iter().map(|f| sup_abs(f.values())).collect());
        diag.lp.push(
            state.fields.iter().map(|f| lp_power(&grid, f.values(), config.norm_p).powf(1.0 / config.norm_p)).collect(),
        );
        diag.entropy.push(eq_values.as_ref().map(|e| relative_entropy(state, e)));
        diag.sup_distance.push(eq_values.as_ref().map(|e| sup_distance(state, e)));
        diag.running_min.push(rm);
        diag.running_sup.push(rs.to_vec());
        if config.keep_snapshots || tr.is_empty() {
            tr.push(state.time, state.fields.clone())?;
        }
        Ok(())
    };

    let mut state = SpeciesState {
        fields: initial.fields.clone(),
        time: 0.0,
    };
    record(&state, &mut diag, &mut tr, &running_sup, running_min)?;
    let mut rejected = 0;
    for step in 1..=steps {
        let (mut next, stats) = stepper.step(&state, dt)?;
        next.time = step as f64 * dt;
        if stats.substeps > 1 {
            rejected += 1;
        }
        for (r, f) in running_sup.iter_mut().zip(&next.fields) {
            *r = r.max(sup_abs(f.values()));
        }
        running_min = running_min.min(next.min_value());
        let peak = running_sup.iter().copied().fold(0.0, f64::max);
        if peak > config.ceiling {
            return Err(Error::BlowUp {
                t: next.time,
                value: peak,
                ceiling: config.ceiling,
            });
        }
        observer(&state, &next, dt);
        state = next;
        if step % config.sample_every == 0 || step == steps {
            record(&state, &mut diag, &mut tr, &running_sup, running_min)?;
        }
    }
    Ok(Simulation {
        trajectory: tr,
        diagnostics: diag,
        equilibrium,
        final_state: state,
        rejected_steps: rejected,
    })
}

/// Raw little-endian dump of a trajectory: magic `RDLB`, species, nx, ny and
/// snapshot count as u32, then per snapshot the time followed by every
/// species' values, all f64.
pub fn write_snapshots(tr: &Trajectory, mut w: impl Write) -> std::io::Result<()> {
    let [nx, ny] = tr.grid().cells();
    w.write_all(b"RDLB")?;
    for v in [tr.species(), nx, ny, tr.len()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for k in 0..tr.len() {
        w.write_all(&tr.times()[k].to_le_bytes())?;
        for f in tr.snapshot(k) {
            for v in f.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}
