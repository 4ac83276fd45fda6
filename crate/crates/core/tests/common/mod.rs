#![allow(dead_code)]

use std::sync::Arc;

use dgsplit::dg_space::{DgFunction, DgSpace};
use dgsplit::noise::QWienerPath;
use dgsplit::operators::{
    assemble_sipg, assemble_split, AssemblyConfig, DiffusionTensor, SparseOperator,
    WeightFunction,
};
use dgsplit::schemes::{AffineDrift, LinearDiffusion, ProblemInstance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dense(op: &SparseOperator<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(op.n, op.n);
    for i in 0..op.n {
        for (j, v) in op.row(i) {
            m[(i, j)] += v;
        }
    }
    m
}

pub fn resolvent(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    (DMatrix::identity(n, n) + a * tau)
        .try_inverse()
        .expect("I + τA invertible")
}

/// Linear test problem with its dense pieces.
pub struct LinearCase {
    pub problem: ProblemInstance<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub c: DVector<f64>,
    pub l: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub x0: DVector<f64>,
}

/// Random split problem on a 1-D mesh: random weight pair, penalty,
/// affine drift and linear multiplicative noise with `modes` modes.
pub fn random_linear_case(seed: u64, cells: usize, modes: usize) -> LinearCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = Arc::new(DgSpace::uniform(1, cells).unwrap());
    let n = sp.total_dofs();
    let center = rng.random_range(0.3..0.7);
    let delta = rng.random_range(0.0..0.25);
    let sigma = rng.random_range(1.5..6.0);
    let (c1, c2) = WeightFunction::strip_pair(center, delta);
    let cfg = AssemblyConfig {
        sigma,
        include_symmetry_term: rng.random_bool(0.7),
    };
    let k = DiffusionTensor::constant(rng.random_range(0.5..2.0));
    let a = assemble_sipg(&sp, &k, &cfg).unwrap();
    let a1 = assemble_split(&sp, &k, &c1, &cfg).unwrap();
    let a2 = assemble_split(&sp, &k, &c2, &cfg).unwrap();
    let mut rand_mat = |scale: f64| {
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                trip.push((i, j, scale * rng.random_range(-1.0..1.0)));
            }
        }
        SparseOperator::from_triplets(n, trip)
    };
    let l = rand_mat(1.0);
    let bops: Vec<SparseOperator<f64>> = (0..modes).map(|_| rand_mat(0.3)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let drift = AffineDrift::new(c.clone(), l.clone()).unwrap();
    let diffusion = LinearDiffusion {
        operators: bops.clone(),
    };
    let problem = ProblemInstance::new(
        sp.clone(),
        a,
        [a1.clone(), a2.clone()],
        Arc::new(drift),
        Arc::new(diffusion),
        DgFunction::new(sp, x0.clone()),
    )
    .unwrap();
    LinearCase {
        problem,
        a1: dense(&a1),
        a2: dense(&a2),
        c: DVector::from_vec(c),
        l: dense(&l),
        b: bops.iter().map(dense).collect(),
        x0: DVector::from_vec(x0),
    }
}

pub fn random_path(seed: u64, n_steps: usize, modes: usize, t_final: f64) -> QWienerPath<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let sd = (t_final / n_steps as f64).sqrt();
    let inc = (0..n_steps * modes)
        .map(|_| sd * rng.random_range(-1.7..1.7))
        .collect();
    QWienerPath::from_increments(n_steps, modes, t_final, inc).unwrap()
}

/// Direct form: `X¹ = R₂R₁(X⁰ + τf + BΔW₁)`,
/// `Xⁿ = S Xⁿ⁻¹ + R₂R₁(τf(Xⁿ⁻¹) + B(Xⁿ⁻¹)ΔWₙ)` with
/// `S = R₂R₁(I + τ²A₁A₂)`.
pub fn s_form_trajectory(case: &LinearCase, tau: f64, path: &QWienerPath<f64>) -> Vec<DVector<f64>> {
    let n = case.x0.len();
    let r1 = resolvent(&case.a1, tau);
    let r2 = resolvent(&case.a2, tau);
    let r21 = &r2 * &r1;
    let s = &r21 * (DMatrix::identity(n, n) + &case.a1 * &case.a2 * (tau * tau));
    let explicit = |x: &DVector<f64>, dw: &[f64]| {
        let mut v = (&case.c + &case.l * x) * tau;
        for (b, &d) in case.b.iter().zip(dw) {
            v += b * x * d;
        }
        v
    };
    let mut xs = vec![case.x0.clone()];
    let x1 = &r21 * (&case.x0 + explicit(&case.x0, path.step(0)));
    xs.push(x1);
    for step in 1..path.n_steps {
        let x = xs.last().unwrap();
        let next = &s * x + &r21 * explicit(x, path.step(step));
        xs.push(next);
    }
    xs
}

/// Max-norm difference relative to `max(1, ‖reference‖_∞)`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Y-form trajectory (every Xⁿ) through the library integrator.
pub fn y_form_trajectory(case: &LinearCase, tau: f64, path: &QWienerPath<f64>) -> Vec<Vec<f64>> {
    use dgsplit::schemes::{Integrator, Method, StepState};
    let integ = Integrator::new(&case.problem, Method::DouglasRachford, tau).unwrap();
    let x0 = case.problem.initial.coefficients.clone();
    let mut st = StepState {
        y: x0.clone(),
        x: x0.clone(),
    };
    let mut xs = vec![x0];
    for n in 1..=path.n_steps {
        st = integ.step(n, &st, path.step(n - 1)).unwrap();
        xs.push(st.x.clone());
    }
    xs
}

/// Y-form vs S-form discrepancy over a whole trajectory.
pub fn y_vs_s_discrepancy(seed: u64) -> f64 {
    let case = random_linear_case(seed, 4, 2);
    let tau = 0.1 / 8.0 * (1.0 + (seed % 5) as f64);
    let path = random_path(seed, 8, 2, tau * 8.0);
    let s = s_form_trajectory(&case, tau, &path);
    let y = y_form_trajectory(&case, tau, &path);
    s.iter()
        .zip(&y)
        .map(|(a, b)| rel_diff(b, a.as_slice()))
        .fold(0.0, f64::max)
}

/// L² error of the stationary SIPG solution of `A_h u_h = P_h(π² sin πx)`.
pub fn stationary_error(cells: usize) -> f64 {
    use dgsplit::linalg::LinearSolver;
    let sp = Arc::new(DgSpace::<f64>::uniform(1, cells).unwrap());
    let pi = std::f64::consts::PI;
    let a = assemble_sipg(&sp, &DiffusionTensor::identity(), &AssemblyConfig::default()).unwrap();
    let rhs = sp.project_l2(|p| pi * pi * (pi * p[0]).sin()).unwrap();
    let u = LinearSolver::new(a).unwrap().solve(&rhs.coefficients).unwrap();
    DgFunction::new(sp, u).l2_error_to(|p| (pi * p[0]).sin())
}
