//! Configuration files and command-line overrides.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rdlab::experiments::{smooth_perturbation, DualityConfig, FourSpeciesConfig};
use rdlab::grid::{Grid, ScalarField};
use rdlab::heat::{interpolated_cmr, EstimatorConfig, Provenance, RegularityConstant};
use rdlab::reaction::{ReactionNetwork, SimulationConfig, SpeciesState};

use crate::{CliError, CliResult};

/// Parses a TOML file, or JSON when the extension is `.json`.
pub fn load_file<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        Some(p) => load_file(p),
        None => Ok(T::default()),
    }
}

/// Flags shared by the solver commands, applied over the loaded config.
#[derive(Debug, Default)]
pub struct Overrides {
    cells: Option<Vec<usize>>,
    extents: Option<Vec<f64>>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn parse(
        grid: Option<&str>,
        extent: Option<&str>,
        t_final: Option<f64>,
        dt: Option<f64>,
        seed: Option<u64>,
    ) -> CliResult<Self> {
        let cells = grid
            .map(|s| {
                s.split(['x', 'X'])
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::config(format!("--grid expects N or NxM, got `{s}`")))
            })
            .transpose()?;
        let extents = extent
            .map(|s| {
                s.split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::config(format!("--extent expects LX or LX,LY, got `{s}`")))
            })
            .transpose()?;
        Ok(Overrides {
            cells,
            extents,
            t_final,
            dt,
            seed,
        })
    }

    /// `grid` with any `--grid` / `--extent` flags applied. A lone `--grid`
    /// keeps the current extents when the dimension matches, else uses 1.
    pub fn grid(&self, grid: Grid) -> CliResult<Grid> {
        if self.cells.is_none() && self.extents.is_none() {
            return Ok(grid);
        }
        let cells = self
            .cells
            .clone()
            .unwrap_or_else(|| grid.cells()[..grid.dims()].to_vec());
        let extents = match &self.extents {
            Some(e) => e.clone(),
            None if cells.len() == grid.dims() => grid.extents()[..grid.dims()].to_vec(),
            None => vec![1.0; cells.len()],
        };
        if cells.len() != extents.len() {
            return Err(CliError::config(format!(
                "--grid has {} axes but --extent has {}",
                cells.len(),
                extents.len()
            )));
        }
        let g = match cells.len() {
            1 => Grid::new_1d(extents[0], cells[0]),
            2 => Grid::new_2d([extents[0], extents[1]], [cells[0], cells[1]]),
            n => return Err(CliError::config(format!("grids have 1 or 2 axes, got {n}"))),
        };
        Ok(g?)
    }
}

fn default_network() -> ReactionNetwork {
    FourSpeciesConfig::default().network().expect("valid default network")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub network: ReactionNetwork,
    pub grid: Grid,
    /// Species averages of the initial data.
    pub initial: Vec<f64>,
    /// Relative size of the smooth mean-zero perturbation of each species.
    pub amplitude: f64,
    pub seed: u64,
    pub simulation: SimulationConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let four = FourSpeciesConfig::default();
        SimulateConfig {
            network: default_network(),
            grid: Grid::new_2d([2.0, 2.0], [32, 32]).expect("valid default grid"),
            initial: four.base.to_vec(),
            amplitude: four.amplitude,
            seed: four.seed,
            simulation: SimulationConfig::default(),
        }
    }
}

impl SimulateConfig {
    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        self.grid = o.grid(self.grid)?;
        if let Some(t) = o.t_final {
            self.simulation.t_final = t;
        }
        if let Some(dt) = o.dt {
            self.simulation.dt = dt;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        Ok(())
    }

    pub fn resolve(&self) -> CliResult<(ReactionNetwork, SpeciesState, SimulationConfig)> {
        if self.initial.len() != self.network.species() {
            return Err(CliError::config(format!(
                "network has {} species but `initial` has {} entries",
                self.network.species(),
                self.initial.len()
            )));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(CliError::config("`amplitude` must lie in [0, 1)"));
        }
        let fields = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, &avg)| {
                let phi = smooth_perturbation(&self.grid, self.seed, i);
                let v = phi.values().iter().map(|x| avg * (1.0 + self.amplitude * x)).collect();
                ScalarField::new(self.grid, v)
            })
            .collect::<rdlab::Result<Vec<_>>>()?;
        let init = SpeciesState::new(fields, 0.0)?;
        Ok((self.network.clone(), init, self.simulation))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumConfig {
    pub network: ReactionNetwork,
    pub averages: Vec<f64>,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            network: default_network(),
            averages: FourSpeciesConfig::default().base.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub grid: Grid,
    pub a: f64,
    pub b: f64,
    pub period: f64,
    pub p: f64,
    pub q: f64,
    pub t_final: f64,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    /// Value of `C_{(a+b)/2,q}`, taken as an empirical lower estimate.
    pub c: Option<f64>,
    /// `C_{m,3/2}`, interpolated to `q` when `c` is absent.
    pub c_three_halves: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = DualityConfig::default();
        VerifyConfig {
            grid: d.grid,
            a: d.a,
            b: d.b,
            period: d.period,
            p: d.p,
            q: 2.0,
            t_final: d.t_final,
            dt: d.dt,
            samples: d.samples,
            seed: d.seed,
            c: None,
            c_three_halves: None,
        }
    }
}

impl VerifyConfig {
    pub fn apply(
        &mut self,
        o: &Overrides,
        p: Option<f64>,
        q: Option<f64>,
        a: Option<f64>,
        b: Option<f64>,
        samples: Option<usize>,
    ) -> CliResult<()> {
        self.grid = o.grid(self.grid)?;
        self.t_final = o.t_final.unwrap_or(self.t_final);
        self.dt = o.dt.unwrap_or(self.dt);
        self.seed = o.seed.unwrap_or(self.seed);
        self.p = p.unwrap_or(self.p);
        self.q = q.unwrap_or(self.q);
        self.a = a.unwrap_or(self.a);
        self.b = b.unwrap_or(self.b);
        self.samples = samples.unwrap_or(self.samples);
        Ok(())
    }

    pub fn resolve(&self) -> CliResult<(DualityConfig, RegularityConstant)> {
        let m = 0.5 * (self.a + self.b);
        let c = match (self.c, self.c_three_halves) {
            (Some(v), _) => RegularityConstant::given(m, self.q, v, Provenance::Empirical)?,
            (None, Some(c32)) => interpolated_cmr(m, self.q, c32)?,
            (None, None) if self.q == 2.0 => RegularityConstant::analytic(m)?,
            (None, None) => {
                return Err(CliError::config(
                    "q != 2 needs `c` or `c_three_halves` in the config",
                ))
            }
        };
        let duality = DualityConfig {
            grid: self.grid,
            a: self.a,
            b: self.b,
            period: self.period,
            p: self.p,
            t_final: self.t_final,
            dt: self.dt,
            samples: self.samples,
            seed: self.seed,
        };
        Ok((duality, c))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub grid: Grid,
    pub m: f64,
    pub q: f64,
    pub t_final: f64,
    pub estimator: EstimatorConfig,
    /// Extra horizons for probing how the estimate depends on `T`.
    pub horizons: Option<Vec<f64>>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            grid: Grid::new_2d([1.0, 1.0], [32, 32]).expect("valid default grid"),
            m: 1.0,
            q: 2.0,
            t_final: 1.0,
            estimator: EstimatorConfig::default(),
            horizons: None,
        }
    }
}

impl EstimateConfig {
    pub fn apply(
        &mut self,
        o: &Overrides,
        m: Option<f64>,
        q: Option<f64>,
        samples: Option<usize>,
    ) -> CliResult<()> {
        self.grid = o.grid(self.grid)?;
        self.t_final = o.t_final.unwrap_or(self.t_final);
        if let Some(dt) = o.dt {
            if !(dt > 0.0) {
                return Err(CliError::config("--dt must be positive"));
            }
            self.estimator.steps = (self.t_final / dt).round().max(1.0) as usize;
        }
        self.estimator.seed = o.seed.unwrap_or(self.estimator.seed);
        self.m = m.unwrap_or(self.m);
        self.q = q.unwrap_or(self.q);
        self.estimator.samples = samples.unwrap_or(self.estimator.samples);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: FourSpeciesConfig,
    /// `C_{m,3/2}` for the smallness check; absent means fall back to `q = 2`.
    pub c_three_halves: Option<f64>,
    /// Horizons of the growth probe.
    pub horizons: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run: FourSpeciesConfig::default(),
            c_three_halves: None,
            horizons: vec![2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        self.run.grid = o.grid(self.run.grid)?;
        self.run.t_final = o.t_final.unwrap_or(self.run.t_final);
        self.run.dt = o.dt.unwrap_or(self.run.dt);
        self.run.seed = o.seed.unwrap_or(self.run.seed);
        Ok(())
    }
}
