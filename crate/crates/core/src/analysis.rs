//! Strong-error Monte Carlo estimation, convergence studies and
//! observed-order fits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg_space::DgFunction;
use crate::error::{Error, Result};
use crate::noise::{coarsen_path, sample_increments, QWienerPath, QWienerSpec, SeedPolicy};
use crate::presets::ExperimentPreset;
use crate::scalar::Scalar;
use crate::schemes::{Integrator, Method, ProblemInstance};

/// Regularity exponents of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel<T> {
    pub theta_x0: T,
    pub theta_f: T,
    pub theta_b: T,
    pub theta_u: T,
    /// Self-adjoint operators whose split parts commute.
    pub selfadjoint_commuting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedOrders<T> {
    pub time_order: T,
    pub space_order: T,
}

impl<T: Scalar> RateModel<T> {
    pub fn new(theta_x0: T, theta_f: T, theta_b: T, theta_u: T) -> Result<Self> {
        let unit = |v: T| v >= T::zero() && v < T::one();
        let half = |v: T| v >= T::zero() && v < T::lit(0.5);
        if !unit(theta_x0) || !unit(theta_u) || !half(theta_f) || !half(theta_b) {
            return Err(Error::invalid(
                "θ_X0, θ_U must lie in [0, 1) and θ_f, θ_B in [0, 1/2)",
            ));
        }
        Ok(Self {
            theta_x0,
            theta_f,
            theta_b,
            theta_u,
            selfadjoint_commuting: false,
        })
    }
}

pub fn expected_orders<T: Scalar>(m: &RateModel<T>) -> ExpectedOrders<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let time_order = if m.selfadjoint_commuting {
        m.theta_x0.min(half)
    } else {
        m.theta_x0.min(m.theta_f).min(m.theta_b).min(half)
    };
    let space_order = (two * m.theta_b.min(m.theta_u) + T::one())
        .min(two * m.theta_x0.min(m.theta_f) + T::one());
    ExpectedOrders {
        time_order,
        space_order,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit<T> {
    /// `log(e_{i-1}/e_i) / log(p_{i-1}/p_i)` for `i ≥ 1`.
    pub local: Vec<T>,
    /// Least-squares slope of `log e` against `log p`; needs two levels.
    pub slope: Option<T>,
}

pub fn observed_order<T: Scalar>(errors: &[T], params: &[T]) -> Result<OrderFit<T>> {
    if errors.len() != params.len() || errors.is_empty() {
        return Err(Error::invalid("errors and parameters must be non-empty and of equal length"));
    }
    if errors.iter().any(|&e| !(e > T::zero()) || !e.is_finite()) {
        return Err(Error::invalid("errors must be positive and finite"));
    }
    if params.iter().any(|&p| !(p > T::zero())) || params.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("parameters must be positive and strictly decreasing"));
    }
    let local = (1..errors.len())
        .map(|i| (errors[i - 1] / errors[i]).ln() / (params[i - 1] / params[i]).ln())
        .collect();
    let slope = (errors.len() >= 2).then(|| {
        let n = T::from_usize_lossy(errors.len());
        let xs: Vec<T> = params.iter().map(|p| p.ln()).collect();
        let ys: Vec<T> = errors.iter().map(|e| e.ln()).collect();
        let mx = xs.iter().copied().sum::<T>() / n;
        let my = ys.iter().copied().sum::<T>() / n;
        let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
        let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    });
    Ok(OrderFit { local, slope })
}

/// Root-mean-square error and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate<T> {
    pub error: T,
    pub sem: T,
    pub samples: usize,
}

/// Aggregates squared per-sample errors in index order.
pub fn estimate_from_squared<T: Scalar>(sq: &[T]) -> Result<MonteCarloEstimate<T>> {
    let j = sq.len();
    if j < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let n = T::from_usize_lossy(j);
    let mut mean = T::zero();
    for &e in sq {
        mean += e;
    }
    mean /= n;
    let mut var = T::zero();
    for &e in sq {
        var += (e - mean) * (e - mean);
    }
    var /= n - T::one();
    let sem_sq = (var / n).sqrt();
    let error = mean.sqrt();
    let sem = if error > T::zero() {
        sem_sq / (error + error)
    } else {
        T::zero()
    };
    Ok(MonteCarloEstimate {
        error,
        sem,
        samples: j,
    })
}

/// `(J⁻¹ Σ_j ‖X_coarse(ω_j) − X_ref(ω_j)‖²)^{1/2}`. Both runners receive the
/// same policy and sample index and must derive coupled paths from them.
pub fn strong_error_mc<T, C, R>(
    coarse: C,
    reference: R,
    samples: usize,
    policy: SeedPolicy,
) -> Result<MonteCarloEstimate<T>>
where
    T: Scalar,
    C: Fn(SeedPolicy, u64) -> Result<DgFunction<T>> + Sync,
    R: Fn(SeedPolicy, u64) -> Result<DgFunction<T>> + Sync,
{
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let sq: Vec<T> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let wrap = |e: Error| Error::SampleFailure {
                sample: j,
                source: Box::new(e),
            };
            let c = coarse(policy, j as u64).map_err(wrap)?;
            let r = reference(policy, j as u64).map_err(wrap)?;
            let d = c.l2_distance(&r).map_err(wrap)?;
            Ok(d * d)
        })
        .collect::<Result<Vec<T>>>()?;
    estimate_from_squared(&sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Space,
    Time,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Space => "space",
            Axis::Time => "time",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "space" => Ok(Axis::Space),
            "time" => Ok(Axis::Time),
            _ => Err(Error::invalid(format!("unknown axis '{s}' (space, time)"))),
        }
    }
}

/// A discretization level: mesh cells per axis and number of time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub cells: usize,
    pub n_steps: usize,
}

/// Levels of a study, coarse to fine, and the reference (`None` means the
/// preset's exact solution).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyPlan {
    pub axis: Axis,
    pub levels: Vec<Level>,
    pub reference: Option<Level>,
    pub samples: usize,
}

impl StudyPlan {
    pub fn from_preset<T: Scalar>(preset: &ExperimentPreset<T>, axis: Axis) -> Result<Self> {
        preset.validate()?;
        match axis {
            Axis::Space => {
                let s = preset.space_schedule.as_ref().ok_or_else(|| {
                    Error::invalid(format!("preset '{}' has no space study", preset.name))
                })?;
                Ok(Self {
                    axis,
                    levels: s
                        .cells
                        .iter()
                        .map(|&c| Level {
                            cells: c,
                            n_steps: s.n_steps,
                        })
                        .collect(),
                    reference: s.reference_cells.map(|c| Level {
                        cells: c,
                        n_steps: s.n_steps,
                    }),
                    samples: preset.samples,
                })
            }
            Axis::Time => {
                let s = preset.time_schedule.as_ref().ok_or_else(|| {
                    Error::invalid(format!("preset '{}' has no time study", preset.name))
                })?;
                Ok(Self {
                    axis,
                    levels: s
                        .steps
                        .iter()
                        .map(|&n| Level {
                            cells: s.cells,
                            n_steps: n,
                        })
                        .collect(),
                    reference: s.reference_steps.map(|n| Level {
                        cells: s.cells,
                        n_steps: n,
                    }),
                    samples: preset.samples,
                })
            }
        }
    }

    /// Number of steps of the shared base path.
    fn base_steps(&self) -> usize {
        self.reference
            .map(|r| r.n_steps)
            .unwrap_or_else(|| self.levels.iter().map(|l| l.n_steps).max().unwrap_or(1))
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::invalid("study needs at least one level"));
        }
        if self.samples < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let base = self.base_steps();
        for l in &self.levels {
            if l.cells == 0 || l.n_steps == 0 || base % l.n_steps != 0 {
                return Err(Error::invalid(format!(
                    "level {l:?} is not a coarsening of the {base}-step base path"
                )));
            }
        }
        if let Some(r) = self.reference {
            for l in &self.levels {
                let finer = match self.axis {
                    Axis::Space => r.cells > l.cells && r.cells % l.cells == 0,
                    Axis::Time => r.n_steps > l.n_steps,
                };
                if !finer {
                    return Err(Error::invalid(format!(
                        "reference {r:?} is not strictly finer than level {l:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub samples: usize,
    pub error: f64,
    pub sem: f64,
    pub local_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: Method,
    pub preset: String,
    pub axis: Axis,
    pub base_seed: u64,
    pub wall_seconds: f64,
    pub version: String,
    pub slope: Option<f64>,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "level,h,tau,samples,error,sem,local_order";

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let lo = r.local_order.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.level, r.h, r.tau, r.samples, r.error, r.sem, lo
            ));
        }
        s
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Metadata sidecar (everything except the rows).
    pub fn metadata_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "method": self.method,
            "preset": self.preset,
            "axis": self.axis,
            "base_seed": self.base_seed,
            "wall_seconds": self.wall_seconds,
            "version": self.version,
            "slope": self.slope,
            "levels": self.rows.len(),
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

pub fn version_string() -> String {
    format!("dgsplit {}", env!("CARGO_PKG_VERSION"))
}

/// Draws the shared base path for one sample.
fn base_path<T: Scalar>(
    spec: &Option<QWienerSpec<T>>,
    n_modes: usize,
    n_steps: usize,
    t_final: T,
    policy: SeedPolicy,
    sample: u64,
) -> Result<QWienerPath<T>> {
    match spec {
        Some(s) => sample_increments(s, n_steps, t_final, policy, sample),
        None => Ok(QWienerPath::zero(n_steps, n_modes, t_final)),
    }
}

fn coupled_path<T: Scalar>(
    base: &QWienerPath<T>,
    n_steps: usize,
    n_modes: usize,
) -> Result<QWienerPath<T>> {
    coarsen_path(base, base.n_steps / n_steps)?.truncate_modes(n_modes)
}

/// Runs one convergence study per method, sharing reference solutions and
/// paths across methods. Fully deterministic for a given `policy`.
pub fn run_convergence_studies<T: Scalar>(
    preset: &ExperimentPreset<T>,
    plan: &StudyPlan,
    methods: &[Method],
    policy: SeedPolicy,
) -> Result<Vec<ConvergenceReport>> {
    plan.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    if plan.reference.is_none() && !preset.exact_heat_solution {
        return Err(Error::invalid(format!(
            "preset '{}' has no exact solution; a reference level is required",
            preset.name
        )));
    }
    let start = Instant::now();
    let t_f = preset.t_final;
    let base_steps = plan.base_steps();
    let max_cells = plan
        .levels
        .iter()
        .map(|l| l.cells)
        .chain(plan.reference.map(|r| r.cells))
        .max()
        .unwrap_or(1);
    let base_modes = preset.n_modes(max_cells);
    let base_spec = preset.noise_spec(max_cells).transpose()?;

    let mut problems: Vec<(usize, Arc<ProblemInstance<T>>)> = Vec::new();
    let mut problem_for = |cells: usize| -> Result<Arc<ProblemInstance<T>>> {
        if let Some((_, p)) = problems.iter().find(|(c, _)| *c == cells) {
            return Ok(p.clone());
        }
        let p = Arc::new(preset.build_problem(cells)?);
        problems.push((cells, p.clone()));
        Ok(p)
    };
    let level_problems: Vec<Arc<ProblemInstance<T>>> = plan
        .levels
        .iter()
        .map(|l| problem_for(l.cells))
        .collect::<Result<_>>()?;
    let ref_problem = plan.reference.map(|r| problem_for(r.cells)).transpose()?;

    let tau_of = |n: usize| t_f / T::from_usize_lossy(n);
    let ref_integ = match (&ref_problem, plan.reference) {
        (Some(p), Some(r)) => Some(Integrator::new(p, preset.reference_method, tau_of(r.n_steps))?),
        _ => None,
    };
    // integrators[m][l]
    let integrators: Vec<Vec<Integrator<'_, T>>> = methods
        .iter()
        .map(|&m| {
            plan.levels
                .iter()
                .zip(&level_problems)
                .map(|(l, p)| Integrator::new(p, m, tau_of(l.n_steps)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // sq[sample][method * levels + level]
    let nl = plan.levels.len();
    let sq: Vec<Vec<T>> = (0..plan.samples)
        .into_par_iter()
        .map(|j| -> Result<Vec<T>> {
            let wrap = |e: Error| Error::SampleFailure {
                sample: j,
                source: Box::new(e),
            };
            let base = base_path(&base_spec, base_modes, base_steps, t_f, policy, j as u64)
                .map_err(wrap)?;
            let reference = match (&ref_integ, plan.reference) {
                (Some(integ), Some(r)) => {
                    let path = coupled_path(&base, r.n_steps, preset.n_modes(r.cells))
                        .map_err(wrap)?;
                    Some(integ.run(&path, None).map_err(wrap)?.final_state)
                }
                _ => None,
            };
            let mut out = Vec::with_capacity(methods.len() * nl);
            for per_level in &integrators {
                for (l, integ) in plan.levels.iter().zip(per_level) {
                    let path =
                        coupled_path(&base, l.n_steps, preset.n_modes(l.cells)).map_err(wrap)?;
                    let x = integ.run(&path, None).map_err(wrap)?.final_state;
                    let d = match &reference {
                        Some(r) => x.l2_distance(r).map_err(wrap)?,
                        None => x.l2_error_to(|p| preset.exact(t_f, p).expect("exact solution")),
                    };
                    out.push(d * d);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let wall = start.elapsed().as_secs_f64();

    let mut reports = Vec::with_capacity(methods.len());
    for (mi, &method) in methods.iter().enumerate() {
        let mut rows = Vec::with_capacity(nl);
        for (li, l) in plan.levels.iter().enumerate() {
            let col: Vec<T> = sq.iter().map(|s| s[mi * nl + li]).collect();
            let est = estimate_from_squared(&col)?;
            rows.push(ReportRow {
                level: li + 1,
                h: 1.0 / l.cells as f64,
                tau: tau_of(l.n_steps).to_f64_lossy(),
                samples: est.samples,
                error: est.error.to_f64_lossy(),
                sem: est.sem.to_f64_lossy(),
                local_order: None,
            });
        }
        let params: Vec<f64> = rows
            .iter()
            .map(|r| match plan.axis {
                Axis::Space => r.h,
                Axis::Time => r.tau,
            })
            .collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let mut slope = None;
        if let Ok(fit) = observed_order(&errs, &params) {
            for (r, o) in rows.iter_mut().skip(1).zip(fit.local) {
                r.local_order = Some(o);
            }
            slope = fit.slope;
        }
        reports.push(ConvergenceReport {
            method,
            preset: preset.name.clone(),
            axis: plan.axis,
            base_seed: policy.base_seed,
            wall_seconds: wall,
            version: version_string(),
            slope,
            rows,
        });
    }
    Ok(reports)
}

/// Single-method convenience wrapper.
pub fn run_convergence_study<T: Scalar>(
    preset: &ExperimentPreset<T>,
    plan: &StudyPlan,
    method: Method,
    policy: SeedPolicy,
) -> Result<ConvergenceReport> {
    Ok(run_convergence_studies(preset, plan, &[method], policy)?.remove(0))
}
