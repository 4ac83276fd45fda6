//! The two stochastic experiments and a deterministic heat-equation oracle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dg_space::DgSpace;
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::noise::{modes_for_cells_exp1, EigenRule, MultiplicativeNoise, QWienerSpec};
use crate::operators::{
    assemble_sipg, assemble_split, AssemblyConfig, DiffusionTensor, WeightFunction,
};
use crate::scalar::Scalar;
use crate::schemes::{
    AffineDrift, Diffusion, Drift, Method, NoDiffusion, Nonlinearity, ProblemInstance, ZeroDrift,
};

pub const PRESET_NAMES: [&str; 4] = ["experiment1", "experiment2", "heat1d", "heat2d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialCondition<T> {
    /// `sin(πx)` in 1-D, `sin(πx) sin(πy)` in 2-D.
    SineProduct,
    /// `S^{-1/5}(1/10 − (3/40)·4(x−1/2)²/S^{2/5})`, clamped at 0.
    Barenblatt { s: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DriftSpec<T> {
    Zero,
    /// `f(v) = a (1 + v) s(x)` with `s` the sine product.
    SineSource { amplitude: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRule {
    /// `N_U = ⌊M^{4/3}⌋`.
    CellsFourThirds,
    /// `N_U = M`.
    EqualCells,
    Fixed(usize),
}

impl ModeRule {
    pub fn modes(&self, cells: usize) -> usize {
        match *self {
            ModeRule::CellsFourThirds => modes_for_cells_exp1(cells),
            ModeRule::EqualCells => cells,
            ModeRule::Fixed(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig<T> {
    pub rule: EigenRule<T>,
    pub modes: ModeRule,
    /// Constant `c` in `B(v) dW = c v dW`.
    pub scale: T,
}

/// Space refinement at a fixed number of time steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSchedule {
    pub cells: Vec<usize>,
    pub n_steps: usize,
    /// `None` compares against the exact solution.
    pub reference_cells: Option<usize>,
}

/// Time refinement at a fixed mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSchedule {
    pub steps: Vec<usize>,
    pub cells: usize,
    /// `None` compares against the exact solution.
    pub reference_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset<T> {
    pub name: String,
    pub dim: usize,
    /// `K = k I`.
    pub diffusion_coefficient: T,
    pub chi_center: T,
    pub chi_delta: T,
    pub sigma: T,
    pub include_symmetry_term: bool,
    pub t_final: T,
    pub initial: InitialCondition<T>,
    pub drift: DriftSpec<T>,
    pub noise: Option<NoiseConfig<T>>,
    pub nonlinearity: Option<Nonlinearity>,
    pub space_schedule: Option<SpaceSchedule>,
    pub time_schedule: Option<TimeSchedule>,
    pub samples: usize,
    pub reference_method: Method,
    /// Mesh and step count of a single `run`.
    pub run_cells: usize,
    pub run_steps: usize,
    /// The exact solution `e^{-dπ²t} X₀` is available.
    pub exact_heat_solution: bool,
}

fn sine_product<T: Scalar>(dim: usize, p: &Point<T>) -> T {
    let pi = T::pi();
    let mut v = (pi * p[0]).sin();
    if dim == 2 {
        v *= (pi * p[1]).sin();
    }
    v
}

/// Stochastic heat equation on the unit square with multiplicative noise.
pub fn experiment1<T: Scalar>() -> ExperimentPreset<T> {
    ExperimentPreset {
        name: "experiment1".into(),
        dim: 2,
        diffusion_coefficient: T::one(),
        chi_center: T::lit(0.5),
        chi_delta: T::lit(0.1),
        sigma: T::lit(3.0),
        include_symmetry_term: true,
        t_final: T::lit(0.1),
        initial: InitialCondition::SineProduct,
        drift: DriftSpec::SineSource {
            amplitude: T::pi() * T::pi(),
        },
        noise: Some(NoiseConfig {
            rule: EigenRule::SemiLinearHeat {
                epsilon: T::lit(2e-5),
            },
            modes: ModeRule::CellsFourThirds,
            scale: T::lit(10.0),
        }),
        nonlinearity: None,
        space_schedule: Some(SpaceSchedule {
            cells: (1..=5).map(|j| 5 << j).collect(),
            n_steps: 1000,
            reference_cells: Some(5 << 7),
        }),
        time_schedule: Some(TimeSchedule {
            steps: (2..=7).map(|j| 1 << j).collect(),
            cells: 200,
            reference_steps: Some(1 << 9),
        }),
        samples: 50,
        reference_method: Method::SemiImplicitEuler,
        run_cells: 32,
        run_steps: 100,
        exact_heat_solution: false,
    }
}

/// Stochastic porous-medium equation on the unit interval.
pub fn experiment2<T: Scalar>() -> ExperimentPreset<T> {
    ExperimentPreset {
        name: "experiment2".into(),
        dim: 1,
        diffusion_coefficient: T::one(),
        chi_center: T::lit(0.5),
        chi_delta: T::lit(0.1),
        sigma: T::lit(3.0),
        include_symmetry_term: false,
        t_final: T::lit(0.01),
        initial: InitialCondition::Barenblatt { s: T::lit(0.02) },
        drift: DriftSpec::Zero,
        noise: Some(NoiseConfig {
            rule: EigenRule::PorousMedium {
                epsilon: T::lit(1e-5),
            },
            modes: ModeRule::EqualCells,
            scale: T::one(),
        }),
        nonlinearity: Some(Nonlinearity { exponent: 4 }),
        space_schedule: None,
        time_schedule: Some(TimeSchedule {
            steps: (4..=10).map(|j| 100 << j).collect(),
            cells: 200,
            reference_steps: Some(100 << 14),
        }),
        samples: 50,
        reference_method: Method::SemiImplicitEuler,
        run_cells: 200,
        run_steps: 1600,
        exact_heat_solution: false,
    }
}

/// `dX + A X dt = 0` with `X₀` the sine product, exact solution
/// `e^{-dπ²t} X₀`.
pub fn deterministic_heat_manufactured<T: Scalar>(dim: usize, cells: usize) -> ExperimentPreset<T> {
    ExperimentPreset {
        name: format!("heat{dim}d"),
        dim,
        diffusion_coefficient: T::one(),
        chi_center: T::lit(0.5),
        chi_delta: T::lit(0.1),
        sigma: T::lit(3.0),
        include_symmetry_term: true,
        t_final: T::lit(0.1),
        initial: InitialCondition::SineProduct,
        drift: DriftSpec::Zero,
        noise: None,
        nonlinearity: None,
        space_schedule: Some(SpaceSchedule {
            cells: (3..=7).map(|j| 1 << j).collect(),
            n_steps: 1000,
            reference_cells: None,
        }),
        time_schedule: Some(TimeSchedule {
            steps: (4..=9).map(|j| 1 << j).collect(),
            cells,
            reference_steps: None,
        }),
        samples: 2,
        reference_method: Method::SemiImplicitEuler,
        run_cells: cells,
        run_steps: 512,
        exact_heat_solution: true,
    }
}

impl<T: Scalar> ExperimentPreset<T> {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "experiment1" => Ok(experiment1()),
            "experiment2" => Ok(experiment2()),
            "heat1d" => Ok(deterministic_heat_manufactured(1, 256)),
            "heat2d" => Ok(deterministic_heat_manufactured(2, 32)),
            _ => Err(Error::invalid(format!(
                "unknown preset '{name}' (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::invalid(format!("{field}: {why}")));
        if self.dim != 1 && self.dim != 2 {
            return bad("dim", "must be 1 or 2");
        }
        if !(self.t_final > T::zero()) {
            return bad("t_final", "must be positive");
        }
        if !(self.sigma > T::zero()) {
            return bad("sigma", "must be positive");
        }
        if !(self.diffusion_coefficient > T::zero()) {
            return bad("diffusion_coefficient", "must be positive");
        }
        if self.chi_delta < T::zero() {
            return bad("chi_delta", "must be non-negative");
        }
        if self.samples < 2 {
            return bad("samples", "need at least two samples");
        }
        if self.run_cells == 0 || self.run_steps == 0 {
            return bad("run_cells", "run mesh and step count must be positive");
        }
        if let InitialCondition::Barenblatt { s } = self.initial {
            if !(s > T::zero()) {
                return bad("initial.s", "must be positive");
            }
        }
        if let Some(sc) = &self.space_schedule {
            if sc.cells.is_empty() || sc.cells.contains(&0) || sc.n_steps == 0 {
                return bad("space_schedule", "levels must be non-empty and positive");
            }
            if sc.cells.windows(2).any(|w| w[0] >= w[1]) {
                return bad("space_schedule.cells", "must be strictly increasing");
            }
            if let Some(r) = sc.reference_cells {
                if sc.cells.iter().any(|&c| c >= r || r % c != 0) {
                    return bad(
                        "space_schedule.reference_cells",
                        "must be a strict common refinement of every level",
                    );
                }
            } else if !self.exact_heat_solution {
                return bad("space_schedule.reference_cells", "no exact solution available");
            }
        }
        if let Some(ts) = &self.time_schedule {
            if ts.steps.is_empty() || ts.steps.contains(&0) || ts.cells == 0 {
                return bad("time_schedule", "levels must be non-empty and positive");
            }
            if ts.steps.windows(2).any(|w| w[0] >= w[1]) {
                return bad("time_schedule.steps", "must be strictly increasing");
            }
            if let Some(r) = ts.reference_steps {
                if ts
                    .steps
                    .iter()
                    .any(|&n| n >= r || r % n != 0 || !(r / n).is_power_of_two())
                {
                    return bad(
                        "time_schedule.reference_steps",
                        "must be a strict dyadic refinement of every level",
                    );
                }
            } else if !self.exact_heat_solution {
                return bad("time_schedule.reference_steps", "no exact solution available");
            }
        }
        Ok(())
    }

    pub fn initial_value(&self, p: &Point<T>) -> T {
        match self.initial {
            InitialCondition::SineProduct => sine_product(self.dim, p),
            InitialCondition::Barenblatt { s } => {
                let d = p[0] - T::lit(0.5);
                let v = s.powf(T::lit(-0.2))
                    * (T::lit(0.1)
                        - T::lit(3.0 / 40.0) * T::lit(4.0) * d * d / s.powf(T::lit(0.4)));
                v.max(T::zero())
            }
        }
    }

    /// The exact solution at time `t`, when known.
    pub fn exact(&self, t: T, p: &Point<T>) -> Option<T> {
        if !self.exact_heat_solution {
            return None;
        }
        let rate = T::from_usize_lossy(self.dim) * T::pi() * T::pi() * self.diffusion_coefficient;
        Some((-rate * t).exp() * self.initial_value(p))
    }

    pub fn weights(&self) -> (WeightFunction<T>, WeightFunction<T>) {
        WeightFunction::strip_pair(self.chi_center, self.chi_delta)
    }

    pub fn assembly(&self) -> AssemblyConfig<T> {
        AssemblyConfig {
            sigma: self.sigma,
            include_symmetry_term: self.include_symmetry_term,
        }
    }

    pub fn noise_spec(&self, cells: usize) -> Option<Result<QWienerSpec<T>>> {
        self.noise
            .as_ref()
            .map(|n| QWienerSpec::new(self.dim, n.rule.clone(), n.modes.modes(cells)))
    }

    /// Number of noise modes a problem on `cells` cells consumes.
    pub fn n_modes(&self, cells: usize) -> usize {
        self.noise.as_ref().map_or(1, |n| n.modes.modes(cells))
    }

    pub fn build_problem(&self, cells: usize) -> Result<ProblemInstance<T>> {
        let space = Arc::new(DgSpace::uniform(self.dim, cells)?);
        let k = DiffusionTensor::constant(self.diffusion_coefficient);
        let cfg = self.assembly();
        let a = assemble_sipg(&space, &k, &cfg)?;
        let (c1, c2) = self.weights();
        let a1 = assemble_split(&space, &k, &c1, &cfg)?;
        let a2 = assemble_split(&space, &k, &c2, &cfg)?;
        let dim = self.dim;
        let drift: Arc<dyn Drift<T>> = match self.drift {
            DriftSpec::Zero => Arc::new(ZeroDrift),
            DriftSpec::SineSource { amplitude } => Arc::new(AffineDrift::from_fields(
                &space,
                move |p| amplitude * sine_product(dim, p),
                move |p| amplitude * sine_product(dim, p),
            )?),
        };
        let diffusion: Arc<dyn Diffusion<T>> = match &self.noise {
            None => Arc::new(NoDiffusion { n_modes: 1 }),
            Some(n) => {
                let spec = QWienerSpec::new(self.dim, n.rule.clone(), n.modes.modes(cells))?;
                Arc::new(MultiplicativeNoise::new(space.clone(), spec, n.scale)?)
            }
        };
        let initial = space.project_l2(|p| self.initial_value(p))?;
        Ok(
            ProblemInstance::new(space, a, [a1, a2], drift, diffusion, initial)?
                .with_nonlinearity(self.nonlinearity),
        )
    }
}

/// JSON overrides on top of a preset. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub preset: Option<String>,
    pub t_final: Option<f64>,
    pub sigma: Option<f64>,
    pub include_symmetry_term: Option<bool>,
    pub diffusion_coefficient: Option<f64>,
    pub chi_center: Option<f64>,
    pub chi_delta: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub noise_scale: Option<f64>,
    pub noise_modes: Option<usize>,
    pub space_cells: Option<Vec<usize>>,
    pub space_steps: Option<usize>,
    pub space_reference_cells: Option<usize>,
    pub time_steps: Option<Vec<usize>>,
    pub time_cells: Option<usize>,
    pub time_reference_steps: Option<usize>,
    pub reference_method: Option<Method>,
    /// Cells and steps for a single `run`.
    pub run_cells: Option<usize>,
    pub run_steps: Option<usize>,
}

impl PresetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Applies the overrides; fails naming the first inconsistent field.
    pub fn apply<T: Scalar>(&self, p: &mut ExperimentPreset<T>) -> Result<()> {
        if let Some(name) = &self.preset {
            if name != &p.name {
                return Err(Error::invalid(format!(
                    "preset: config names '{name}' but '{}' was selected",
                    p.name
                )));
            }
        }
        let set = |dst: &mut T, v: Option<f64>| {
            if let Some(v) = v {
                *dst = T::lit(v);
            }
        };
        set(&mut p.t_final, self.t_final);
        set(&mut p.sigma, self.sigma);
        set(&mut p.diffusion_coefficient, self.diffusion_coefficient);
        set(&mut p.chi_center, self.chi_center);
        set(&mut p.chi_delta, self.chi_delta);
        if let Some(b) = self.include_symmetry_term {
            p.include_symmetry_term = b;
        }
        if let Some(j) = self.samples {
            p.samples = j;
        }
        if let Some(m) = self.reference_method {
            p.reference_method = m;
        }
        if let Some(c) = self.run_cells {
            p.run_cells = c;
        }
        if let Some(n) = self.run_steps {
            p.run_steps = n;
        }
        if self.noise_scale.is_some() || self.noise_modes.is_some() {
            let Some(n) = p.noise.as_mut() else {
                return Err(Error::invalid(format!(
                    "noise_scale: preset '{}' is deterministic",
                    p.name
                )));
            };
            set(&mut n.scale, self.noise_scale);
            if let Some(m) = self.noise_modes {
                n.modes = ModeRule::Fixed(m);
            }
        }
        if self.space_cells.is_some()
            || self.space_steps.is_some()
            || self.space_reference_cells.is_some()
        {
            let Some(s) = p.space_schedule.as_mut() else {
                return Err(Error::invalid(format!(
                    "space_cells: preset '{}' has no space study",
                    p.name
                )));
            };
            if let Some(c) = &self.space_cells {
                s.cells = c.clone();
            }
            if let Some(n) = self.space_steps {
                s.n_steps = n;
            }
            if let Some(r) = self.space_reference_cells {
                s.reference_cells = Some(r);
            }
        }
        if self.time_steps.is_some() || self.time_cells.is_some() || self.time_reference_steps.is_some()
        {
            let Some(s) = p.time_schedule.as_mut() else {
                return Err(Error::invalid(format!(
                    "time_steps: preset '{}' has no time study",
                    p.name
                )));
            };
            if let Some(n) = &self.time_steps {
                s.steps = n.clone();
            }
            if let Some(c) = self.time_cells {
                s.cells = c;
            }
            if let Some(r) = self.time_reference_steps {
                s.reference_steps = Some(r);
            }
        }
        p.validate()
    }
}
