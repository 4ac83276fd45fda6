mod common;

use std::sync::Arc;

use common::{dense, stationary_error};
use dgsplit::dg_space::DgSpace;
use dgsplit::linalg::{solve_shifted, LinearSolver, ShiftedSolver, SolverKind};
use dgsplit::operators::{
    assemble_sipg, assemble_split, operator_norm_estimate, AssemblyConfig, DiffusionTensor,
    SparseOperator, WeightFunction,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn min_sym_eig(a: &SparseOperator<f64>) -> f64 {
    let d = dense(a);
    let s = (&d + d.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.min()
}

fn spectral_norm(a: &SparseOperator<f64>) -> f64 {
    dense(a).singular_values().max()
}

fn split(dim: usize, m: usize, cfg: &AssemblyConfig<f64>) -> [SparseOperator<f64>; 3] {
    let sp = DgSpace::uniform(dim, m).unwrap();
    let k = DiffusionTensor::identity();
    let (c1, c2) = WeightFunction::strip_pair(0.5, 0.1);
    [
        assemble_sipg(&sp, &k, cfg).unwrap(),
        assemble_split(&sp, &k, &c1, cfg).unwrap(),
        assemble_split(&sp, &k, &c2, cfg).unwrap(),
    ]
}

#[test]
fn two_cell_operator_is_spd() {
    let [a, ..] = split(1, 2, &AssemblyConfig::default());
    assert_eq!(a.n, 4);
    assert!(a.symmetry_defect() <= 1e-14);
    assert!(min_sym_eig(&a) > 0.0);
}

#[test]
fn quadratic_form_of_bubble_is_positive() {
    let sp = Arc::new(DgSpace::<f64>::uniform(1, 32).unwrap());
    let a = assemble_sipg(&sp, &DiffusionTensor::identity(), &AssemblyConfig::default()).unwrap();
    let v = sp.project_l2(|p| p[0] * (1.0 - p[0])).unwrap();
    let av = a.apply(&v.coefficients).unwrap();
    let q: f64 = av.iter().zip(&v.coefficients).map(|(x, y)| x * y).sum();
    assert!(q > 0.0);
}

#[test]
fn nonsymmetric_variant_has_positive_symmetric_part() {
    let cfg = AssemblyConfig {
        sigma: 3.0,
        include_symmetry_term: false,
    };
    let [a, ..] = split(1, 16, &cfg);
    assert!(a.symmetry_defect() > 1e-6);
    assert!(min_sym_eig(&a) > 0.0);
}

#[test]
fn split_operators_are_nonnegative() {
    let cfg = AssemblyConfig::default();
    for dim in [1, 2] {
        for m in [4, 8, 16] {
            let [a, a1, a2] = split(dim, m, &cfg);
            assert!(a.symmetry_defect() <= 1e-12 * a.max_abs());
            for op in [&a1, &a2] {
                let lam = min_sym_eig(op);
                assert!(lam >= -1e-10 * spectral_norm(op), "dim {dim} M {m}: {lam}");
            }
        }
    }
}

#[test]
fn strong_positivity_is_bounded_away_from_zero() {
    let cfg = AssemblyConfig::default();
    let mins: Vec<f64> = [4, 8, 16, 32]
        .iter()
        .map(|&m| min_sym_eig(&split(1, m, &cfg)[0]))
        .collect();
    for &c in &mins {
        assert!(c > 1.0, "{mins:?}");
    }
    for w in mins.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{mins:?}");
    }
}

#[test]
fn operator_norm_scales_like_inverse_h_squared() {
    let cfg = AssemblyConfig::default();
    let norms: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&m| {
            let est = operator_norm_estimate(&split(1, m, &cfg)[1]);
            assert!(est.converged);
            est.value
        })
        .collect();
    for w in norms.windows(2) {
        let r = w[1] / w[0];
        assert!((3.0..=5.0).contains(&r), "{norms:?}");
    }
    let exact = spectral_norm(&split(1, 16, &cfg)[1]);
    assert!((norms[1] - exact).abs() <= 1e-6 * exact);
}

#[test]
fn discrete_trace_constant_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut consts = Vec::new();
    for m in [4, 8, 16] {
        let sp = Arc::new(DgSpace::<f64>::uniform(2, m).unwrap());
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let c: Vec<f64> = (0..sp.total_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for f in &sp.mesh.faces {
                let e = f.plus_element;
                let face: f64 = sp
                    .face_quadrature(f)
                    .iter()
                    .map(|(p, w)| w * sp.eval_in(&c, e, p).powi(2))
                    .sum();
                let nl = sp.dofs_per_element;
                let vol: f64 = c[e * nl..(e + 1) * nl].iter().map(|x| x * x).sum();
                worst = worst.max(face * sp.h() / vol);
            }
        }
        consts.push(worst);
    }
    let (lo, hi) = consts.iter().fold((f64::MAX, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(hi / lo < 1.5, "{consts:?}");
}

#[test]
fn resolvents_are_contractive() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = AssemblyConfig::default();
    for dim in [1, 2] {
        let [a, a1, a2] = split(dim, 8, &cfg);
        for op in [&a, &a1, &a2] {
            for tau in [1e-3, 1e-1, 1.0] {
                let s = ShiftedSolver::new(op, tau).unwrap();
                for _ in 0..5 {
                    let b: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let x = s.solve(&b).unwrap();
                    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!(nx <= (1.0 + 1e-10) * nb);
                }
            }
        }
    }
}

#[test]
fn shifted_solve_matches_dense_lu() {
    let [a, ..] = split(1, 2, &AssemblyConfig::default());
    let b = [1.0, 0.0, 0.0, 0.0];
    let x = solve_shifted(&a, 0.1, &b).unwrap();
    let m = DMatrix::identity(4, 4) + dense(&a) * 0.1;
    let oracle = m.lu().solve(&DVector::from_row_slice(&b)).unwrap();
    for i in 0..4 {
        assert!((x[i] - oracle[i]).abs() < 1e-10);
    }
    let ones = solve_shifted(&SparseOperator::identity(5), 1.0, &[2.0; 5]).unwrap();
    assert_eq!(ones, vec![1.0; 5]);
    assert_eq!(solve_shifted(&a, 0.0, &b).unwrap(), b.to_vec());
}

#[test]
fn sparse_product_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let a = SparseOperator::from_dense(&rows);
    let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dv = dense(&a) * DVector::from_row_slice(&v);
    let sv = a.apply(&v).unwrap();
    for i in 0..4 {
        assert!((sv[i] - dv[i]).abs() <= 1e-14);
    }
    assert_eq!(a.apply(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    assert!(a.apply(&[0.0; 3]).is_err());
}

#[test]
fn iterative_and_direct_solvers_agree_on_2d_problem() {
    let [a, ..] = split(2, 12, &AssemblyConfig::default());
    let m = a.shifted(0.01);
    let b: Vec<f64> = (0..m.n).map(|i| (i as f64 * 0.37).sin()).collect();
    let d = LinearSolver::with_kind(m.clone(), SolverKind::Direct).unwrap().solve(&b).unwrap();
    let it = LinearSolver::with_kind(m.clone(), SolverKind::Iterative).unwrap().solve(&b).unwrap();
    let r = m.apply(&it).unwrap();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = r.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(res <= 1e-10 * nb);
    let diff = d.iter().zip(&it).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8);
}

#[test]
fn stationary_problem_converges_at_second_order() {
    let ms = [8usize, 16, 32, 64, 128];
    let errs: Vec<f64> = ms.iter().map(|&m| stationary_error(m)).collect();
    let hs: Vec<f64> = ms.iter().map(|&m| 1.0 / m as f64).collect();
    let fit = dgsplit::analysis::observed_order(&errs, &hs).unwrap();
    for o in &fit.local {
        assert!((1.8..=2.2).contains(o), "{:?}", fit.local);
    }
}
