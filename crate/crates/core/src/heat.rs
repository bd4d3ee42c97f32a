//! Forward and backward heat solvers and empirical maximal-regularity constants.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, lp_power, Grid, ScalarField, Trajectory};
use crate::solver::NeumannSolver;

/// Right-hand side of a heat equation, evaluated at cell centres.
pub trait Forcing: Sync {
    fn eval(&self, grid: &Grid, t: f64, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn eval(&self, _grid: &Grid, _t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Forcing given as a closure of `(t, x)`.
pub struct FnForcing<F>(pub F);

impl<F> Forcing for FnForcing<F>
where
    F: Fn(f64, [f64; 2]) -> f64 + Sync,
{
    fn eval(&self, grid: &Grid, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.0)(t, grid.center(i));
        }
    }
}

/// A single-species trajectory read as a forcing, linear in time between
/// samples and held constant outside the sampled interval.
impl Forcing for Trajectory {
    fn eval(&self, _grid: &Grid, t: f64, out: &mut [f64]) {
        let times = self.times();
        let k = times.partition_point(|&s| s <= t);
        if k == 0 {
            out.copy_from_slice(self.field(0, 0).values());
        } else if k == times.len() {
            out.copy_from_slice(self.field(k - 1, 0).values());
        } else {
            let (t0, t1) = (times[k - 1], times[k]);
            let s = (t - t0) / (t1 - t0);
            let (a, b) = (self.field(k - 1, 0).values(), self.field(k, 0).values());
            for i in 0..out.len() {
                out[i] = (1.0 - s) * a[i] + s * b[i];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

/// Number of uniform steps covering `[0, t_final]` with step at most `dt`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(t_final >= dt) {
        return Err(Error::param("T", format!("need T >= dt, got T = {t_final}, dt = {dt}")));
    }
    Ok(((t_final / dt) - 1e-9).ceil().max(1.0) as usize)
}

fn eval_checked(f: &dyn Forcing, grid: &Grid, t: f64, out: &mut [f64]) -> Result<()> {
    f.eval(grid, t, out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forcing"));
    }
    Ok(())
}

/// Solves `u_t - d Δu = f` with zero-flux boundaries from `u0` up to
/// `t_final`. The step is shrunk so that an integer number of steps lands on
/// `t_final`; every step is recorded.
pub fn solve_forward_heat(
    u0: &ScalarField,
    d: f64,
    forcing: &dyn Forcing,
    t_final: f64,
    dt: f64,
    scheme: TimeScheme,
) -> Result<Trajectory> {
    let solver = NeumannSolver::new(*u0.grid());
    solve_forward_heat_with(&solver, u0, d, forcing, t_final, dt, scheme)
}

pub fn solve_forward_heat_with(
    solver: &NeumannSolver,
    u0: &ScalarField,
    d: f64,
    forcing: &dyn Forcing,
    t_final: f64,
    dt: f64,
    scheme: TimeScheme,
) -> Result<Trajectory> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::param("d", format!("diffusion must be positive, got {d}")));
    }
    let steps = step_count(t_final, dt)?;
    let dt = t_final / steps as f64;
    let grid = *u0.grid();
    let n = grid.len();

    let mut tr = Trajectory::new(grid, 1);
    tr.push(0.0, vec![u0.clone()])?;
    let mut u = u0.values().to_vec();
    let mut f_prev = vec![0.0; n];
    let mut f_next = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut lap = vec![0.0; n];
    eval_checked(forcing, &grid, 0.0, &mut f_prev)?;
    for step in 1..=steps {
        let t = step as f64 * dt;
        eval_checked(forcing, &grid, t, &mut f_next)?;
        match scheme {
            TimeScheme::BackwardEuler => {
                for i in 0..n {
                    rhs[i] = u[i] + dt * f_next[i];
                }
                solver.solve_shifted(dt * d, &rhs, &mut u);
            }
            TimeScheme::CrankNicolson => {
                apply_laplacian(&grid, &u, &mut lap);
                for i in 0..n {
                    rhs[i] = u[i] + 0.5 * dt * d * lap[i] + 0.5 * dt * (f_prev[i] + f_next[i]);
                }
                solver.solve_shifted(0.5 * dt * d, &rhs, &mut u);
            }
        }
        std::mem::swap(&mut f_prev, &mut f_next);
        tr.push(t, vec![ScalarField::from_vec_unchecked(grid, u.clone())])?;
    }
    Ok(tr)
}

type CoefficientFn = dyn Fn(&Grid, f64, usize) -> f64 + Send + Sync;

/// A diffusion coefficient `M(t, x)` together with its claimed bounds `a <= M <= b`.
#[derive(Clone)]
pub struct CoefficientField {
    eval: Arc<CoefficientFn>,
    lower: f64,
    upper: f64,
    constant: Option<f64>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("constant", &self.constant)
            .finish()
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
        return Err(Error::param(
            "bounds",
            format!("need 0 < a <= b < inf, got a = {lower}, b = {upper}"),
        ));
    }
    Ok(())
}

impl CoefficientField {
    pub fn new(
        lower: f64,
        upper: f64,
        eval: impl Fn(&Grid, f64, usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_bounds(lower, upper)?;
        Ok(CoefficientField {
            eval: Arc::new(eval),
            lower,
            upper,
            constant: None,
        })
    }

    pub fn constant(m: f64) -> Result<Self> {
        check_bounds(m, m)?;
        Ok(CoefficientField {
            eval: Arc::new(move |_, _, _| m),
            lower: m,
            upper: m,
            constant: Some(m),
        })
    }

    /// Alternates between `a` and `b` on neighbouring cells, and flips the
    /// pattern every `period` time units.
    pub fn checkerboard(a: f64, b: f64, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::param("period", "must be positive"));
        }
        Self::new(a, b, move |g, t, idx| {
            let nx = g.cells()[0];
            let parity = (idx % nx + idx / nx + (t / period).floor() as usize) % 2;
            if parity == 0 {
                a
            } else {
                b
            }
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    /// Samples `M(t, ·)` and checks it against the declared bounds.
    pub fn sample(&self, grid: &Grid, t: f64, out: &mut [f64]) -> Result<()> {
        let tol = 1e-12 * self.upper;
        for (i, o) in out.iter_mut().enumerate() {
            let v = (self.eval)(grid, t, i);
            if !(v >= self.lower - tol && v <= self.upper + tol) {
                return Err(Error::CoefficientBounds {
                    t,
                    cell: i,
                    value: v,
                    lower: self.lower,
                    upper: self.upper,
                });
            }
            *o = v;
        }
        Ok(())
    }
}

/// Solves `v_t + M Δv = f` backward from `v(T) = 0`. `M` is sampled at the
/// end of each backward step, i.e. at the earlier time level.
pub fn solve_backward_variable(
    grid: &Grid,
    coeff: &CoefficientField,
    forcing: &dyn Forcing,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let solver = NeumannSolver::new(*grid);
    solve_backward_variable_with(&solver, coeff, forcing, t_final, dt)
}

pub fn solve_backward_variable_with(
    solver: &NeumannSolver,
    coeff: &CoefficientField,
    forcing: &dyn Forcing,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let grid = *solver.grid();
    let steps = step_count(t_final, dt)?;
    let dt = t_final / steps as f64;
    let n = grid.len();

    let mut levels = vec![vec![0.0; n]; steps + 1];
    let mut f = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for step in (0..steps).rev() {
        let t = step as f64 * dt;
        eval_checked(forcing, &grid, t, &mut f)?;
        coeff.sample(&grid, t, &mut m)?;
        let (lo, hi) = levels.split_at_mut(step + 1);
        let (v, next) = (&mut lo[step], &hi[0]);
        match coeff.as_constant() {
            Some(mc) => {
                for i in 0..n {
                    rhs[i] = next[i] - dt * f[i];
                }
                solver.solve_shifted(dt * mc, &rhs, v);
            }
            None => {
                for i in 0..n {
                    m[i] = 1.0 / m[i];
                    rhs[i] = m[i] * (next[i] - dt * f[i]);
                }
                v.copy_from_slice(next);
                solver.solve_weighted(&m, dt, &rhs, v, 1e-13)?;
            }
        }
    }
    let mut tr = Trajectory::new(grid, 1);
    for (k, v) in levels.into_iter().enumerate() {
        tr.push(k as f64 * dt, vec![ScalarField::from_vec_unchecked(grid, v)])?;
    }
    Ok(tr)
}

/// Solves `u_t - Δ(M u) = 0` with zero-flux boundaries by backward Euler in
/// `w = M u`. `M` is sampled at the start of each step, which makes this the
/// exact discrete adjoint of [`solve_backward_variable`]:
/// `-<u0, v0> = dt Σ_n <u^{n+1}, f^n>`.
pub fn solve_forward_variable(
    u0: &ScalarField,
    coeff: &CoefficientField,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let solver = NeumannSolver::new(*u0.grid());
    solve_forward_variable_with(&solver, u0, coeff, t_final, dt)
}

pub fn solve_forward_variable_with(
    solver: &NeumannSolver,
    u0: &ScalarField,
    coeff: &CoefficientField,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let grid = *u0.grid();
    if *solver.grid() != grid {
        return Err(Error::InvalidGrid("solver and data on different grids".into()));
    }
    let steps = step_count(t_final, dt)?;
    let dt = t_final / steps as f64;
    let n = grid.len();

    let mut tr = Trajectory::new(grid, 1);
    tr.push(0.0, vec![u0.clone()])?;
    let mut u = u0.values().to_vec();
    let mut m = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for step in 0..steps {
        coeff.sample(&grid, step as f64 * dt, &mut m)?;
        match coeff.as_constant() {
            Some(mc) => {
                rhs.copy_from_slice(&u);
                solver.solve_shifted(dt * mc, &rhs, &mut u);
            }
            None => {
                for i in 0..n {
                    w[i] = m[i] * u[i];
                    m[i] = 1.0 / m[i];
                }
                solver.solve_weighted(&m, dt, &u, &mut w, 1e-13)?;
                for i in 0..n {
                    u[i] = w[i] * m[i];
                }
            }
        }
        tr.push((step + 1) as f64 * dt, vec![ScalarField::from_vec_unchecked(grid, u.clone())])?;
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `C_{m,2} <= 1/m`, from the L² energy identity.
    Analytic,
    /// Upper bound from interpolating between `q = 3/2` and `q = 2`.
    Interpolated,
    /// Lower estimate, maximum ratio over sampled forcings.
    Empirical,
}

/// A value of the maximal-regularity constant `C_{m,q}` and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConstant {
    pub m: f64,
    pub q: f64,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param("m", format!("must be positive, got {m}")));
    }
    Ok(())
}

impl RegularityConstant {
    /// The `q = 2` anchor `1/m`.
    pub fn analytic(m: f64) -> Result<Self> {
        check_m(m)?;
        Ok(RegularityConstant {
            m,
            q: 2.0,
            value: 1.0 / m,
            provenance: Provenance::Analytic,
            grid: None,
            samples: None,
            seed: None,
        })
    }

    /// A value supplied from outside (for instance a previous run), with the
    /// given provenance.
    pub fn given(m: f64, q: f64, value: f64, provenance: Provenance) -> Result<Self> {
        let c = RegularityConstant {
            m,
            q,
            value,
            provenance,
            grid: None,
            samples: None,
            seed: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_m(self.m)?;
        if !(self.q > 1.0 && self.q <= 2.0) {
            return Err(Error::param("q", format!("must lie in ]1, 2], got {}", self.q)));
        }
        if !(self.value > 0.0 && self.value.is_finite()) {
            return Err(Error::param("value", format!("must be positive, got {}", self.value)));
        }
        if self.provenance == Provenance::Analytic
            && (self.q != 2.0 || (self.value * self.m - 1.0).abs() > 1e-12)
        {
            return Err(Error::param("provenance", "analytic constants are 1/m at q = 2"));
        }
        Ok(())
    }

    /// True when the value is an upper bound on the best constant.
    pub fn is_upper_bound(&self) -> bool {
        matches!(self.provenance, Provenance::Analytic | Provenance::Interpolated)
    }
}

/// `C_{m,r} <= m^{-θ} C_{m,3/2}^{1-θ}` with `θ = (4r - 6)/r`, for `r ∈ [3/2, 2]`.
pub fn interpolated_cmr(m: f64, r: f64, c_three_halves: f64) -> Result<RegularityConstant> {
    check_m(m)?;
    if !(1.5..=2.0).contains(&r) {
        return Err(Error::param("r", format!("must lie in [3/2, 2], got {r}")));
    }
    if !(c_three_halves > 0.0 && c_three_halves.is_finite()) {
        return Err(Error::param("C_{m,3/2}", "must be positive"));
    }
    let theta = interpolation_theta(r);
    Ok(RegularityConstant {
        m,
        q: r,
        value: m.powf(-theta) * c_three_halves.powf(1.0 - theta),
        provenance: Provenance::Interpolated,
        grid: None,
        samples: None,
        seed: None,
    })
}

pub fn interpolation_theta(r: f64) -> f64 {
    (4.0 * r - 6.0) / r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub samples: usize,
    pub seed: u64,
    /// Backward-Euler steps across `[0, T]`.
    pub steps: usize,
    /// Adjoint power iterations (used only for `q = 2`).
    pub power_iterations: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            samples: 64,
            seed: 0x5eed,
            steps: 32,
            power_iterations: 25,
        }
    }
}

/// Discrete forcing on the uniform time levels `t_0 .. t_N`.
pub type ForcingLevels = Vec<Vec<f64>>;

/// The discrete map `f ↦ Δv` for the backward heat equation with constant
/// coefficient `m` and backward-Euler stepping.
struct BackwardHeatOperator<'a> {
    solver: &'a NeumannSolver,
    m: f64,
    dt: f64,
    steps: usize,
}

impl BackwardHeatOperator<'_> {
    fn apply(&self, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.solver.grid().len();
        let mut out = vec![vec![0.0; n]; self.steps + 1];
        let mut v = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for step in (0..self.steps).rev() {
            for i in 0..n {
                rhs[i] = v[i] - self.dt * f[step][i];
            }
            self.solver.solve_shifted(self.dt * self.m, &rhs, &mut v);
            apply_laplacian(self.solver.grid(), &v, &mut out[step]);
        }
        out
    }

    /// Transpose with respect to the unweighted Euclidean product.
    fn apply_transpose(&self, h: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.solver.grid().len();
        let mut out = vec![vec![0.0; n]; self.steps + 1];
        let mut z = vec![0.0; n];
        let mut lh = vec![0.0; n];
        for j in 0..self.steps {
            apply_laplacian(self.solver.grid(), &h[j], &mut lh);
            for i in 0..n {
                lh[i] += z[i];
            }
            self.solver.solve_shifted(self.dt * self.m, &lh, &mut z);
            for i in 0..n {
                out[j][i] = -self.dt * z[i];
            }
        }
        out
    }

    fn time_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dt; self.steps + 1];
        w[0] *= 0.5;
        w[self.steps] *= 0.5;
        w
    }
}

fn spacetime_lq(grid: &Grid, weights: &[f64], levels: &[Vec<f64>], q: f64) -> f64 {
    weights
        .iter()
        .zip(levels)
        .map(|(w, l)| w * lp_power(grid, l, q))
        .sum::<f64>()
        .powf(1.0 / q)
}

/// `‖Δv‖_q / ‖f‖_q` for one discrete forcing.
pub fn forcing_ratio(
    grid: &Grid,
    m: f64,
    q: f64,
    t_final: f64,
    forcing: &[Vec<f64>],
) -> Result<f64> {
    let solver = NeumannSolver::new(*grid);
    let steps = forcing.len().saturating_sub(1);
    if steps == 0 || forcing.iter().any(|l| l.len() != grid.len()) {
        return Err(Error::param("forcing", "need at least two levels of grid size"));
    }
    let op = BackwardHeatOperator {
        solver: &solver,
        m,
        dt: t_final / steps as f64,
        steps,
    };
    Ok(ratio_with(&op, grid, q, forcing))
}

fn ratio_with(op: &BackwardHeatOperator<'_>, grid: &Grid, q: f64, f: &[Vec<f64>]) -> f64 {
    let w = op.time_weights();
    let denom = spacetime_lq(grid, &w, f, q);
    if denom == 0.0 {
        return 0.0;
    }
    spacetime_lq(grid, &w, &op.apply(f), q) / denom
}

fn cosine_mode(grid: &Grid, kx: usize, ky: usize) -> Vec<f64> {
    let [lx, ly] = grid.extents();
    let pi = std::f64::consts::PI;
    (0..grid.len())
        .map(|i| {
            let [x, y] = grid.center(i);
            (pi * kx as f64 * x / lx).cos() * (pi * ky as f64 * y / ly).cos()
        })
        .collect()
}

/// Deterministic sample forcing number `index` from the estimator ensemble.
/// The family cycles through smooth random fields, checkerboards and single
/// cosine modes.
pub fn sample_forcing(grid: &Grid, steps: usize, seed: u64, index: usize) -> ForcingLevels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let [nx, ny] = grid.cells();
    let kmax_y = if grid.dims() == 2 { ny } else { 1 };
    let n = grid.len();
    let mut levels = vec![vec![0.0; n]; steps + 1];
    match index % 3 {
        0 => {
            let terms = rng.gen_range(2..6);
            for _ in 0..terms {
                let kx = rng.gen_range(0..(nx / 2).max(2));
                let ky = rng.gen_range(0..(kmax_y / 2).max(1));
                let amp = rng.gen_range(-1.0..1.0);
                let omega = rng.gen_range(0.0..6.0);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mode = cosine_mode(grid, kx, ky);
                for (k, level) in levels.iter_mut().enumerate() {
                    let s = amp * (omega * k as f64 / steps as f64 + phase).cos();
                    for i in 0..n {
                        level[i] += s * mode[i];
                    }
                }
            }
        }
        1 => {
            // Cell checkerboard, possibly restricted to a block, with sign
            // flips in time.
            let bx = rng.gen_range(1..=nx);
            let by = rng.gen_range(1..=ny);
            let flips = rng.gen_range(1..=4usize);
            for (k, level) in levels.iter_mut().enumerate() {
                let tsign = if (k * flips / (steps + 1)) % 2 == 0 { 1.0 } else { -1.0 };
                for (idx, v) in level.iter_mut().enumerate() {
                    let (i, j) = (idx % nx, idx / nx);
                    if i < bx && j < by {
                        *v = tsign * if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    }
                }
            }
        }
        _ => {
            let kx = rng.gen_range(0..nx);
            let ky = rng.gen_range(0..kmax_y);
            let omega = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..20.0) };
            let mode = cosine_mode(grid, kx.max(1), ky);
            for (k, level) in levels.iter_mut().enumerate() {
                let s = (omega * k as f64 / steps as f64).cos();
                for i in 0..n {
                    level[i] = s * mode[i];
                }
            }
        }
    }
    levels
}

/// Full output of the empirical estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalEstimate {
    pub constant: RegularityConstant,
    /// Ratio of each sample forcing, in sample order.
    pub sample_ratios: Vec<f64>,
    /// Ratio reached by the adjoint power iteration (`q = 2` only).
    pub power_ratio: Option<f64>,
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(Error::param("q", format!("must lie in ]1, 2], got {q}")));
    }
    Ok(())
}

/// Lower estimate of `C_{m,q}` on `grid` over `[0, t_final]`.
pub fn estimate_cmq(
    grid: &Grid,
    m: f64,
    q: f64,
    t_final: f64,
    config: &EstimatorConfig,
) -> Result<RegularityConstant> {
    Ok(estimate_cmq_detailed(grid, m, q, t_final, config)?.constant)
}

pub fn estimate_cmq_detailed(
    grid: &Grid,
    m: f64,
    q: f64,
    t_final: f64,
    config: &EstimatorConfig,
) -> Result<EmpiricalEstimate> {
    check_m(m)?;
    check_q(q)?;
    if config.samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    if config.steps == 0 || !(t_final > 0.0) {
        return Err(Error::param("steps", "need a positive horizon and step count"));
    }
    let solver = NeumannSolver::new(*grid);
    let op = BackwardHeatOperator {
        solver: &solver,
        m,
        dt: t_final / config.steps as f64,
        steps: config.steps,
    };
    let sample_ratios: Vec<f64> = (0..config.samples)
        .into_par_iter()
        .map(|s| {
            let f = sample_forcing(grid, config.steps, config.seed, s);
            ratio_with(&op, grid, q, &f)
        })
        .collect();
    let mut best = sample_ratios.iter().copied().fold(0.0, f64::max);

    let power_ratio = if q == 2.0 && config.power_iterations > 0 {
        let r = power_iteration(&op, grid, config)?;
        best = best.max(r);
        Some(r)
    } else {
        None
    };

    Ok(EmpiricalEstimate {
        constant: RegularityConstant {
            m,
            q,
            value: best,
            provenance: Provenance::Empirical,
            grid: Some(*grid),
            samples: Some(config.samples),
            seed: Some(config.seed),
        },
        sample_ratios,
        power_ratio,
    })
}

/// Power iteration on `S* S` in the trapezoid-weighted space-time inner
/// product; returns the best ratio `‖S f‖ / ‖f‖` seen.
fn power_iteration(
    op: &BackwardHeatOperator<'_>,
    grid: &Grid,
    config: &EstimatorConfig,
) -> Result<f64> {
    let w = op.time_weights();
    let mut f = sample_forcing(grid, op.steps, config.seed.wrapping_add(1), 0);
    let check = sample_forcing(grid, op.steps, config.seed.wrapping_add(1), 1);
    for (a, b) in f.iter_mut().zip(&check) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += 0.25 * y;
        }
    }
    f[op.steps].iter_mut().for_each(|v| *v = 0.0);
    let mut best = 0.0_f64;
    for _ in 0..config.power_iterations {
        let norm = spacetime_lq(grid, &w, &f, 2.0);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("power iteration collapsed".into()));
        }
        f.iter_mut().flatten().for_each(|v| *v /= norm);
        let mut g = op.apply(&f);
        best = best.max(spacetime_lq(grid, &w, &g, 2.0));
        for (level, wk) in g.iter_mut().zip(&w) {
            level.iter_mut().for_each(|v| *v *= wk);
        }
        let mut next = op.apply_transpose(&g);
        for (level, wk) in next.iter_mut().zip(&w) {
            level.iter_mut().for_each(|v| *v /= wk);
        }
        f = next;
    }
    Ok(best)
}

/// Empirical estimates at several horizons, for probing time dependence.
pub fn estimate_cmq_time_probe(
    grid: &Grid,
    m: f64,
    q: f64,
    horizons: &[f64],
    config: &EstimatorConfig,
) -> Result<Vec<(f64, RegularityConstant)>> {
    horizons
        .iter()
        .map(|&t| Ok((t, estimate_cmq(grid, m, q, t, config)?)))
        .collect()
}
