//! Time integrators: Douglas–Rachford splitting (Y-form), Lie splitting and
//! semi-implicit Euler, for `dX + A X dt = f(t, X) dt + B(X) dW`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dg_space::{DgFunction, DgSpace};
use crate::error::{Error, Result};
use crate::linalg::{LinearSolver, ShiftedSolver};
use crate::noise::QWienerPath;
use crate::operators::SparseOperator;
use crate::scalar::{norm2, Scalar};

/// Discrete drift `f_h(t, v) = P_h f(t, v)`.
pub trait Drift<T>: Send + Sync {
    fn eval(&self, t: T, v: &[T], out: &mut [T]) -> Result<()>;
}

/// Discrete diffusion `B_h(t, v) ΔW` for the mode increments `ΔW_k`.
pub trait Diffusion<T>: Send + Sync {
    fn n_modes(&self) -> usize;
    fn apply(&self, t: T, v: &[T], dw: &[T], out: &mut [T]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl<T: Scalar> Drift<T> for ZeroDrift {
    fn eval(&self, _t: T, _v: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|x| *x = T::zero());
        Ok(())
    }
}

/// `f_h(v) = c + L v` with a fixed vector `c` and matrix `L`.
#[derive(Debug, Clone)]
pub struct AffineDrift<T> {
    pub constant: Vec<T>,
    pub linear: SparseOperator<T>,
}

impl<T: Scalar> AffineDrift<T> {
    pub fn new(constant: Vec<T>, linear: SparseOperator<T>) -> Result<Self> {
        if constant.len() != linear.n {
            return Err(Error::invalid("drift constant and matrix sizes differ"));
        }
        Ok(Self { constant, linear })
    }

    /// `f_h(v) = P_h g + P_h(m v)` for pointwise `g` and `m`.
    pub fn from_fields(
        space: &Arc<DgSpace<T>>,
        g: impl Fn(&[T; 2]) -> T,
        m: impl Fn(&[T; 2]) -> T,
    ) -> Result<Self> {
        let constant = space.project_l2(g)?.coefficients;
        let nl = space.dofs_per_element;
        let blocks = space.multiplier_blocks(m);
        let mut trip = Vec::with_capacity(blocks.len());
        for (e, b) in blocks.chunks_exact(nl * nl).enumerate() {
            for i in 0..nl {
                for j in 0..nl {
                    trip.push((e * nl + i, e * nl + j, b[i * nl + j]));
                }
            }
        }
        Self::new(constant, SparseOperator::from_triplets(space.total_dofs(), trip))
    }
}

impl<T: Scalar> Drift<T> for AffineDrift<T> {
    fn eval(&self, _t: T, v: &[T], out: &mut [T]) -> Result<()> {
        self.linear.apply_into(v, out)?;
        for (o, &c) in out.iter_mut().zip(&self.constant) {
            *o += c;
        }
        Ok(())
    }
}

/// Diffusion that ignores the noise.
#[derive(Debug, Clone, Copy)]
pub struct NoDiffusion {
    pub n_modes: usize,
}

impl<T: Scalar> Diffusion<T> for NoDiffusion {
    fn n_modes(&self) -> usize {
        self.n_modes
    }

    fn apply(&self, _t: T, _v: &[T], _dw: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|x| *x = T::zero());
        Ok(())
    }
}

/// `B_h(v) ΔW = Σ_k ΔW_k L_k v` for fixed matrices `L_k`.
#[derive(Debug, Clone)]
pub struct LinearDiffusion<T> {
    pub operators: Vec<SparseOperator<T>>,
}

impl<T: Scalar> Diffusion<T> for LinearDiffusion<T> {
    fn n_modes(&self) -> usize {
        self.operators.len()
    }

    fn apply(&self, _t: T, v: &[T], dw: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|x| *x = T::zero());
        let mut tmp = vec![T::zero(); v.len()];
        for (op, &d) in self.operators.iter().zip(dw) {
            op.apply_into(v, &mut tmp)?;
            for (o, &t) in out.iter_mut().zip(&tmp) {
                *o += d * t;
            }
        }
        Ok(())
    }
}

/// Pointwise power nonlinearity `Φ(x) = x^p` for the quasi-linear mode,
/// in which every `A_{h,ℓ} v` becomes `A_{h,ℓ} P_h Φ(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub exponent: i32,
}

impl Nonlinearity {
    pub fn phi<T: Scalar>(&self, x: T) -> T {
        x.powi(self.exponent)
    }

    pub fn dphi<T: Scalar>(&self, x: T) -> T {
        if self.exponent == 0 {
            T::zero()
        } else {
            T::lit(self.exponent as f64) * x.powi(self.exponent - 1)
        }
    }
}

/// Everything a time integrator needs.
#[derive(Clone)]
pub struct ProblemInstance<T> {
    pub space: Arc<DgSpace<T>>,
    pub a_full: SparseOperator<T>,
    pub a_split: [SparseOperator<T>; 2],
    pub drift: Arc<dyn Drift<T>>,
    pub diffusion: Arc<dyn Diffusion<T>>,
    pub initial: DgFunction<T>,
    pub nonlinearity: Option<Nonlinearity>,
    pub t0: T,
}

impl<T> fmt::Debug for ProblemInstance<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("dofs", &self.a_full.n)
            .field("nonlinearity", &self.nonlinearity)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(
        space: Arc<DgSpace<T>>,
        a_full: SparseOperator<T>,
        a_split: [SparseOperator<T>; 2],
        drift: Arc<dyn Drift<T>>,
        diffusion: Arc<dyn Diffusion<T>>,
        initial: DgFunction<T>,
    ) -> Result<Self> {
        let n = space.total_dofs();
        if a_full.n != n || a_split[0].n != n || a_split[1].n != n || initial.coefficients.len() != n
        {
            return Err(Error::invalid("operator and space dimensions differ"));
        }
        let sum = a_split[0].linear_combination(T::one(), &a_split[1], T::one());
        let scale = a_full.max_abs().max(T::one());
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        let defect = sum.max_abs_diff(&a_full);
        if defect > tol * scale {
            return Err(Error::invalid(format!(
                "A_1 + A_2 differs from A_h by {defect} (relative tolerance {tol})"
            )));
        }
        Ok(Self {
            space,
            a_full,
            a_split,
            drift,
            diffusion,
            initial,
            nonlinearity: None,
            t0: T::zero(),
        })
    }

    /// Builds `A_h = A_1 + A_2` from the two split operators.
    pub fn from_split(
        space: Arc<DgSpace<T>>,
        a1: SparseOperator<T>,
        a2: SparseOperator<T>,
        drift: Arc<dyn Drift<T>>,
        diffusion: Arc<dyn Diffusion<T>>,
        initial: DgFunction<T>,
    ) -> Result<Self> {
        let full = a1.linear_combination(T::one(), &a2, T::one());
        Self::new(space, full, [a1, a2], drift, diffusion, initial)
    }

    pub fn with_nonlinearity(mut self, phi: Option<Nonlinearity>) -> Self {
        self.nonlinearity = phi;
        self
    }

    /// Replaces the split by `A_1 = A_h`, `A_2 = 0`.
    pub fn collapsed(&self) -> Self {
        let mut p = self.clone();
        p.a_split = [self.a_full.clone(), SparseOperator::zeros(self.a_full.n)];
        p
    }

    pub fn dofs(&self) -> usize {
        self.a_full.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dr")]
    DouglasRachford,
    #[serde(rename = "lie")]
    Lie,
    #[serde(rename = "euler")]
    SemiImplicitEuler,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DouglasRachford, Method::Lie, Method::SemiImplicitEuler];

    pub fn name(&self) -> &'static str {
        match self {
            Method::DouglasRachford => "dr",
            Method::Lie => "lie",
            Method::SemiImplicitEuler => "euler",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dr" => Ok(Method::DouglasRachford),
            "lie" => Ok(Method::Lie),
            "euler" => Ok(Method::SemiImplicitEuler),
            _ => Err(Error::invalid(format!("unknown method '{s}' (dr, lie, euler)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig<T> {
    pub method: Method,
    pub tau: T,
    pub n_steps: usize,
    pub store_trajectory: bool,
    /// Snapshot interval when `store_trajectory` is set.
    pub snapshot_every: usize,
}

impl<T: Scalar> SchemeConfig<T> {
    pub fn new(method: Method, t_final: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("need at least one time step"));
        }
        if !(t_final >= T::zero()) {
            return Err(Error::invalid("final time must be non-negative"));
        }
        Ok(Self {
            method,
            tau: t_final / T::from_usize_lossy(n_steps),
            n_steps,
            store_trajectory: false,
            snapshot_every: 1,
        })
    }

    pub fn t_final(&self) -> T {
        self.tau * T::from_usize_lossy(self.n_steps)
    }
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 40;

/// `v ↦ (I + τA)^{-1} v`, or the solution of `v + τ A P_hΦ(v) = z`.
#[derive(Debug, Clone)]
enum Resolvent<T> {
    Linear(ShiftedSolver<T>),
    Newton {
        a: SparseOperator<T>,
        tau: T,
        phi: Nonlinearity,
        space: Arc<DgSpace<T>>,
    },
}

impl<T: Scalar> Resolvent<T> {
    fn new(
        a: &SparseOperator<T>,
        tau: T,
        phi: Option<Nonlinearity>,
        space: &Arc<DgSpace<T>>,
    ) -> Result<Self> {
        match phi {
            None => Ok(Resolvent::Linear(ShiftedSolver::new(a, tau)?)),
            Some(phi) => {
                if !(tau >= T::zero()) {
                    return Err(Error::invalid("shift τ must be non-negative"));
                }
                Ok(Resolvent::Newton {
                    a: a.clone(),
                    tau,
                    phi,
                    space: space.clone(),
                })
            }
        }
    }

    fn solve(&self, z: &[T]) -> Result<Vec<T>> {
        match self {
            Resolvent::Linear(s) => s.solve(z),
            Resolvent::Newton { a, tau, phi, space } => newton_resolvent(a, *tau, *phi, space, z),
        }
    }
}

/// `P_h Φ(v)` elementwise.
fn project_phi<T: Scalar>(space: &DgSpace<T>, phi: Nonlinearity, v: &[T], out: &mut [T]) {
    let nl = space.dofs_per_element;
    let nq = space.num_qp();
    let mut vals = [T::zero(); crate::dg_space::MAX_QP];
    for e in 0..space.mesh.num_elements() {
        let vq = space.values_at_qp(v, e);
        for q in 0..nq {
            vals[q] = phi.phi(vq[q]);
        }
        space.project_qp_values(&vals[..nq], e, &mut out[e * nl..(e + 1) * nl]);
    }
}

fn newton_residual<T: Scalar>(
    a: &SparseOperator<T>,
    tau: T,
    phi: Nonlinearity,
    space: &DgSpace<T>,
    v: &[T],
    z: &[T],
    work: &mut [T],
    r: &mut [T],
) -> Result<T> {
    project_phi(space, phi, v, work);
    a.apply_into(work, r)?;
    for i in 0..r.len() {
        r[i] = v[i] + tau * r[i] - z[i];
    }
    Ok(norm2(r))
}

fn newton_jacobian<T: Scalar>(
    a: &SparseOperator<T>,
    tau: T,
    phi: Nonlinearity,
    space: &DgSpace<T>,
    v: &[T],
) -> SparseOperator<T> {
    let nl = space.dofs_per_element;
    let ne = space.mesh.num_elements();
    // Blocks of ∫ Φ'(v) φ_i φ_j in the orthonormal basis.
    let mut d = vec![T::zero(); ne * nl * nl];
    for e in 0..ne {
        let vq = space.values_at_qp(v, e);
        let b = &mut d[e * nl * nl..(e + 1) * nl * nl];
        for q in 0..space.num_qp() {
            let w = space.ref_weights[q] * phi.dphi(vq[q]);
            let psi = &space.ref_basis[q];
            for i in 0..nl {
                for j in 0..nl {
                    b[i * nl + j] += w * psi[i] * psi[j];
                }
            }
        }
    }
    let mut trip = Vec::with_capacity(a.nnz() * nl + a.n);
    for i in 0..a.n {
        trip.push((i, i, T::one()));
        for (k, aik) in a.row(i) {
            let (e, lk) = (k / nl, k % nl);
            for j in 0..nl {
                trip.push((i, e * nl + j, tau * aik * d[e * nl * nl + lk * nl + j]));
            }
        }
    }
    SparseOperator::from_triplets(a.n, trip)
}

fn newton_resolvent<T: Scalar>(
    a: &SparseOperator<T>,
    tau: T,
    phi: Nonlinearity,
    space: &DgSpace<T>,
    z: &[T],
) -> Result<Vec<T>> {
    let n = z.len();
    if tau == T::zero() || a.max_abs() == T::zero() {
        return Ok(z.to_vec());
    }
    let tol = T::lit(NEWTON_TOL).max(T::epsilon() * T::lit(256.0)) * norm2(z).max(T::one());
    let mut v = z.to_vec();
    let mut work = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut res = newton_residual(a, tau, phi, space, &v, z, &mut work, &mut r)?;
    for _ in 0..NEWTON_MAX_ITER {
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(v);
        }
        let jac = newton_jacobian(a, tau, phi, space, &v);
        let neg: Vec<T> = r.iter().map(|&x| -x).collect();
        let delta = LinearSolver::new(jac)?.solve(&neg)?;
        let mut lambda = T::one();
        let mut trial = vec![T::zero(); n];
        let mut r_trial = vec![T::zero(); n];
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            for i in 0..n {
                trial[i] = v[i] + lambda * delta[i];
            }
            let rt = newton_residual(a, tau, phi, space, &trial, z, &mut work, &mut r_trial)?;
            if rt.is_finite() && rt < res {
                v.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                res = rt;
                accepted = true;
                break;
            }
            lambda *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    if res <= tol {
        return Ok(v);
    }
    Err(Error::SolverFailure {
        residual: res.to_f64_lossy(),
        reason: "Newton iteration did not converge".into(),
    })
}

/// Integrator state after a step. For DR `y` carries the auxiliary variable;
/// for the other methods it equals `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T> {
    pub y: Vec<T>,
    pub x: Vec<T>,
}

/// Result of [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub final_state: DgFunction<T>,
    /// `(step, state)`, starting with step 0, when snapshots were requested.
    pub snapshots: Vec<(usize, DgFunction<T>)>,
}

impl<T: Scalar> Trajectory<T> {
    /// Snapshots concatenated in the dG binary layout.
    pub fn write_snapshots(&self, w: &mut impl Write) -> Result<()> {
        for (_, s) in &self.snapshots {
            s.write_binary(w)?;
        }
        Ok(())
    }
}

/// A problem with its resolvents for fixed `τ` and method.
pub struct Integrator<'a, T> {
    pub problem: &'a ProblemInstance<T>,
    pub method: Method,
    pub tau: T,
    r1: Option<Resolvent<T>>,
    r2: Option<Resolvent<T>>,
    r_full: Option<Resolvent<T>>,
}

impl<'a, T: Scalar> Integrator<'a, T> {
    pub fn new(problem: &'a ProblemInstance<T>, method: Method, tau: T) -> Result<Self> {
        let phi = problem.nonlinearity;
        let sp = &problem.space;
        let (r1, r2, r_full) = match method {
            Method::SemiImplicitEuler => (
                None,
                None,
                Some(Resolvent::new(&problem.a_full, tau, phi, sp)?),
            ),
            _ => (
                Some(Resolvent::new(&problem.a_split[0], tau, phi, sp)?),
                Some(Resolvent::new(&problem.a_split[1], tau, phi, sp)?),
                None,
            ),
        };
        Ok(Self {
            problem,
            method,
            tau,
            r1,
            r2,
            r_full,
        })
    }

    fn resolvent(r: &Option<Resolvent<T>>) -> &Resolvent<T> {
        r.as_ref().expect("resolvent built for this method")
    }

    /// `x + τ f(t, x) + B(t, x) ΔW`.
    pub fn explicit_part(&self, t: T, x: &[T], dw: &[T]) -> Result<Vec<T>> {
        let n = x.len();
        let nm = self.problem.diffusion.n_modes();
        if dw.len() < nm {
            return Err(Error::invalid(format!(
                "{} noise modes supplied, diffusion needs {nm}",
                dw.len()
            )));
        }
        let mut f = vec![T::zero(); n];
        self.problem.drift.eval(t, x, &mut f)?;
        let mut b = vec![T::zero(); n];
        self.problem.diffusion.apply(t, x, &dw[..nm], &mut b)?;
        let out: Vec<T> = (0..n).map(|i| x[i] + self.tau * f[i] + b[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("non-finite explicit update".into()));
        }
        Ok(out)
    }

    /// `Y¹ = (I+τA₁)^{-1}(X⁰ + τf + BΔW₁)`, `X¹ = (I+τA₂)^{-1} Y¹`.
    pub fn dr_first_step(&self, x0: &[T], dw: &[T]) -> Result<StepState<T>> {
        let rhs = self.explicit_part(self.problem.t0, x0, dw)?;
        let y = Self::resolvent(&self.r1).solve(&rhs)?;
        let x = Self::resolvent(&self.r2).solve(&y)?;
        Ok(StepState { y, x })
    }

    /// `Yⁿ = (I+τA₁)^{-1}[2Xⁿ⁻¹ − Yⁿ⁻¹ + τf + BΔWₙ] + Yⁿ⁻¹ − Xⁿ⁻¹`,
    /// `Xⁿ = (I+τA₂)^{-1} Yⁿ`, with `f` and `B` evaluated at `Xⁿ⁻¹`.
    pub fn dr_step(&self, prev: &StepState<T>, t: T, dw: &[T]) -> Result<StepState<T>> {
        let mut rhs = self.explicit_part(t, &prev.x, dw)?;
        for i in 0..rhs.len() {
            rhs[i] += prev.x[i] - prev.y[i];
        }
        let mut y = Self::resolvent(&self.r1).solve(&rhs)?;
        for i in 0..y.len() {
            y[i] += prev.y[i] - prev.x[i];
        }
        let x = Self::resolvent(&self.r2).solve(&y)?;
        Ok(StepState { y, x })
    }

    /// `Xⁿ = (I+τA₂)^{-1}(I+τA₁)^{-1}(Xⁿ⁻¹ + τf + BΔWₙ)`.
    pub fn lie_step(&self, x: &[T], t: T, dw: &[T]) -> Result<Vec<T>> {
        let rhs = self.explicit_part(t, x, dw)?;
        let z = Self::resolvent(&self.r1).solve(&rhs)?;
        Self::resolvent(&self.r2).solve(&z)
    }

    /// `Xⁿ = (I+τA_h)^{-1}(Xⁿ⁻¹ + τf + BΔWₙ)`.
    pub fn euler_step(&self, x: &[T], t: T, dw: &[T]) -> Result<Vec<T>> {
        let rhs = self.explicit_part(t, x, dw)?;
        Self::resolvent(&self.r_full).solve(&rhs)
    }

    /// Advances from `Xⁿ⁻¹` (step index `n ≥ 1`).
    pub fn step(&self, n: usize, state: &StepState<T>, dw: &[T]) -> Result<StepState<T>> {
        let t = self.problem.t0 + self.tau * T::from_usize_lossy(n - 1);
        match self.method {
            Method::DouglasRachford if n == 1 => self.dr_first_step(&state.x, dw),
            Method::DouglasRachford => self.dr_step(state, t, dw),
            Method::Lie => {
                let x = self.lie_step(&state.x, t, dw)?;
                Ok(StepState { y: x.clone(), x })
            }
            Method::SemiImplicitEuler => {
                let x = self.euler_step(&state.x, t, dw)?;
                Ok(StepState { y: x.clone(), x })
            }
        }
    }

    /// Runs `path.n_steps` steps from the problem's initial value.
    pub fn run(&self, path: &QWienerPath<T>, snapshots: Option<usize>) -> Result<Trajectory<T>> {
        let space = self.problem.space.clone();
        let x0 = self.problem.initial.coefficients.clone();
        let mut state = StepState {
            y: x0.clone(),
            x: x0,
        };
        let mut snaps = Vec::new();
        if snapshots.is_some() {
            snaps.push((0, DgFunction::new(space.clone(), state.x.clone())));
        }
        for n in 1..=path.n_steps {
            state = self
                .step(n, &state, path.step(n - 1))
                .map_err(|e| Error::StepFailure {
                    step: n,
                    source: Box::new(e),
                })?;
            if let Some(every) = snapshots {
                if n % every.max(1) == 0 || n == path.n_steps {
                    snaps.push((n, DgFunction::new(space.clone(), state.x.clone())));
                }
            }
        }
        Ok(Trajectory {
            final_state: DgFunction::new(space, state.x),
            snapshots: snaps,
        })
    }
}

fn check_path<T: Scalar>(cfg: &SchemeConfig<T>, path: &QWienerPath<T>) -> Result<()> {
    if path.n_steps != cfg.n_steps {
        return Err(Error::invalid(format!(
            "path has {} steps, scheme expects {}",
            path.n_steps, cfg.n_steps
        )));
    }
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * cfg.tau.abs().max(T::one());
    if (path.tau - cfg.tau).abs() > tol {
        return Err(Error::invalid(format!(
            "path step {} differs from scheme step {}",
            path.tau, cfg.tau
        )));
    }
    Ok(())
}

/// Runs a full trajectory on the given noise path.
pub fn run_trajectory<T: Scalar>(
    problem: &ProblemInstance<T>,
    cfg: &SchemeConfig<T>,
    path: &QWienerPath<T>,
) -> Result<Trajectory<T>> {
    check_path(cfg, path)?;
    let integ = Integrator::new(problem, cfg.method, cfg.tau)?;
    integ.run(path, cfg.store_trajectory.then_some(cfg.snapshot_every))
}

/// One DR first step.
pub fn dr_first_step<T: Scalar>(
    problem: &ProblemInstance<T>,
    tau: T,
    dw: &[T],
) -> Result<DgFunction<T>> {
    let integ = Integrator::new(problem, Method::DouglasRachford, tau)?;
    let s = integ.dr_first_step(&problem.initial.coefficients, dw)?;
    Ok(DgFunction::new(problem.space.clone(), s.x))
}

/// One DR step in the Y-form from `Yⁿ⁻¹`; returns `(Yⁿ, Xⁿ)`.
pub fn dr_step<T: Scalar>(
    problem: &ProblemInstance<T>,
    tau: T,
    y_prev: &[T],
    dw: &[T],
    t_prev: T,
) -> Result<(Vec<T>, DgFunction<T>)> {
    let integ = Integrator::new(problem, Method::DouglasRachford, tau)?;
    let x_prev = Resolvent::new(
        &problem.a_split[1],
        tau,
        problem.nonlinearity,
        &problem.space,
    )?
    .solve(y_prev)?;
    let s = integ.dr_step(
        &StepState {
            y: y_prev.to_vec(),
            x: x_prev,
        },
        t_prev,
        dw,
    )?;
    Ok((s.y, DgFunction::new(problem.space.clone(), s.x)))
}

pub fn lie_step<T: Scalar>(
    problem: &ProblemInstance<T>,
    tau: T,
    x_prev: &[T],
    dw: &[T],
    t_prev: T,
) -> Result<DgFunction<T>> {
    let integ = Integrator::new(problem, Method::Lie, tau)?;
    Ok(DgFunction::new(
        problem.space.clone(),
        integ.lie_step(x_prev, t_prev, dw)?,
    ))
}

pub fn euler_step<T: Scalar>(
    problem: &ProblemInstance<T>,
    tau: T,
    x_prev: &[T],
    dw: &[T],
    t_prev: T,
) -> Result<DgFunction<T>> {
    let integ = Integrator::new(problem, Method::SemiImplicitEuler, tau)?;
    Ok(DgFunction::new(
        problem.space.clone(),
        integ.euler_step(x_prev, t_prev, dw)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One-element 1-D space carrying scalar surrogates `a₁`, `a₂` on the
    /// constant mode; the slope mode stays at zero.
    fn scalar_problem(a1: f64, a2: f64, x0: f64) -> ProblemInstance<f64> {
        let sp = Arc::new(DgSpace::uniform(1, 1).unwrap());
        let m1 = SparseOperator::from_dense(&[vec![a1, 0.0], vec![0.0, 0.0]]);
        let m2 = SparseOperator::from_dense(&[vec![a2, 0.0], vec![0.0, 0.0]]);
        let init = DgFunction::new(sp.clone(), vec![x0, 0.0]);
        ProblemInstance::from_split(
            sp,
            m1,
            m2,
            Arc::new(ZeroDrift),
            Arc::new(NoDiffusion { n_modes: 1 }),
            init,
        )
        .unwrap()
    }

    #[test]
    fn scalar_first_step() {
        let p = scalar_problem(2.0, 3.0, 1.0);
        let x1 = dr_first_step(&p, 0.1, &[0.0]).unwrap();
        assert!((x1.coefficients[0] - 1.0 / (1.2 * 1.3)).abs() < 1e-15);
        let p = scalar_problem(0.0, 0.0, 1.0);
        let x1 = dr_first_step(&p, 0.1, &[0.0]).unwrap();
        assert_eq!(x1.coefficients[0], 1.0);
    }

    #[test]
    fn scalar_second_step() {
        // X¹ = 1 means Y¹ = (1 + τa₂) X¹ = 2.
        let p = scalar_problem(1.0, 1.0, 1.0);
        let (_, x2) = dr_step(&p, 1.0, &[2.0, 0.0], &[0.0], 0.0).unwrap();
        assert!((x2.coefficients[0] - 0.5).abs() < 1e-15);
        let x = lie_step(&p, 1.0, &[1.0, 0.0], &[0.0], 0.0).unwrap();
        assert!((x.coefficients[0] - 0.25).abs() < 1e-15);
        let x = euler_step(&scalar_problem(1.0, 0.0, 1.0), 1.0, &[1.0, 0.0], &[0.0], 0.0).unwrap();
        assert!((x.coefficients[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn split_consistency_is_checked() {
        let sp = Arc::new(DgSpace::<f64>::uniform(1, 1).unwrap());
        let a = SparseOperator::identity(2);
        let z = SparseOperator::zeros(2);
        let r = ProblemInstance::new(
            sp.clone(),
            a.clone(),
            [z.clone(), z],
            Arc::new(ZeroDrift),
            Arc::new(NoDiffusion { n_modes: 1 }),
            DgFunction::zeros(sp),
        );
        assert!(r.is_err());
    }

    #[test]
    fn path_shape_is_checked() {
        let p = scalar_problem(1.0, 1.0, 1.0);
        let cfg = SchemeConfig::new(Method::Lie, 1.0, 4).unwrap();
        assert!(run_trajectory(&p, &cfg, &QWienerPath::zero(3, 1, 1.0)).is_err());
        assert!(run_trajectory(&p, &cfg, &QWienerPath::zero(4, 1, 2.0)).is_err());
        let t = run_trajectory(&p, &cfg, &QWienerPath::zero(4, 1, 1.0)).unwrap();
        assert!((t.final_state.coefficients[0] - (1.0f64 / 1.5625).powi(4)).abs() < 1e-15);
        assert!(SchemeConfig::<f64>::new(Method::Lie, 1.0, 0).is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("rk4".parse::<Method>().is_err());
    }

    #[test]
    fn newton_resolvent_solves_quasilinear_system() {
        let sp = Arc::new(DgSpace::<f64>::uniform(1, 8).unwrap());
        let a = crate::operators::assemble_sipg(
            &sp,
            &crate::operators::DiffusionTensor::identity(),
            &crate::operators::AssemblyConfig::default(),
        )
        .unwrap();
        let phi = Nonlinearity { exponent: 4 };
        let z = sp
            .project_l2(|p| 0.5 * (std::f64::consts::PI * p[0]).sin())
            .unwrap()
            .coefficients;
        let tau = 1e-3;
        let v = newton_resolvent(&a, tau, phi, &sp, &z).unwrap();
        let mut work = vec![0.0; z.len()];
        let mut r = vec![0.0; z.len()];
        let res = newton_residual(&a, tau, phi, &sp, &v, &z, &mut work, &mut r).unwrap();
        assert!(res < 1e-10);
        // With exponent 1 the resolvent is linear.
        let lin = newton_resolvent(&a, tau, Nonlinearity { exponent: 1 }, &sp, &z).unwrap();
        let exact = crate::linalg::solve_shifted(&a, tau, &z).unwrap();
        for (u, w) in lin.iter().zip(&exact) {
            assert!((u - w).abs() < 1e-10);
        }
    }

    #[test]
    fn step_failure_carries_index() {
        let sp = Arc::new(DgSpace::<f64>::uniform(1, 1).unwrap());
        struct Blowup;
        impl Drift<f64> for Blowup {
            fn eval(&self, t: f64, _v: &[f64], out: &mut [f64]) -> Result<()> {
                let val = if t > 0.15 { f64::NAN } else { 0.0 };
                out.iter_mut().for_each(|x| *x = val);
                Ok(())
            }
        }
        let p = ProblemInstance::from_split(
            sp.clone(),
            SparseOperator::identity(2),
            SparseOperator::zeros(2),
            Arc::new(Blowup),
            Arc::new(NoDiffusion { n_modes: 1 }),
            DgFunction::zeros(sp),
        )
        .unwrap();
        let cfg = SchemeConfig::new(Method::SemiImplicitEuler, 1.0, 10).unwrap();
        match run_trajectory(&p, &cfg, &QWienerPath::zero(10, 1, 1.0)) {
            Err(Error::StepFailure { step, .. }) => assert_eq!(step, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
