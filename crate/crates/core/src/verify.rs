//! Numerical checks of the scalar inequalities and the contraction property
//! behind the error analysis.

use std::fmt;

use crate::dg_space::DgSpace;
use crate::error::Result;
use crate::linalg::{power_iteration, ShiftedSolver};
use crate::operators::{assemble_split, AssemblyConfig, DiffusionTensor, SparseOperator, WeightFunction};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck<T> {
    pub value: T,
    pub bound: T,
    pub holds: bool,
}

fn riemann_sum<T: Scalar>(n: usize, t_f: T, zeta: T) -> T {
    let tau = t_f / T::from_usize_lossy(n);
    let mut s = T::zero();
    for k in 1..=n {
        s += (tau * T::from_usize_lossy(k)).powf(-zeta);
    }
    tau * s
}

/// `τ Σ_{k=1}^{n} t_k^{-ζ}` on a grid of `n` steps over `[0, t_f]`.
///
/// For `ζ = 1` the bound is `1 + ln n`; otherwise it is the integral bound
/// `t_n^{1-ζ}/(1-ζ)`, and the sum at `2n` must also stay within twice the
/// sum at `n`.
pub fn check_riemann_sums<T: Scalar>(n: usize, t_f: T, zeta: T) -> BoundCheck<T> {
    let n = n.max(1);
    let sum = riemann_sum(n, t_f, zeta);
    if zeta == T::one() {
        let bound = T::one() + T::from_usize_lossy(n).ln();
        return BoundCheck {
            value: sum,
            bound,
            holds: sum <= bound * (T::one() + T::epsilon() * T::lit(16.0)),
        };
    }
    let bound = t_f.powf(T::one() - zeta) / (T::one() - zeta);
    let doubled = riemann_sum(2 * n, t_f, zeta);
    let slack = T::one() + T::epsilon() * T::lit(16.0);
    BoundCheck {
        value: sum,
        bound,
        holds: sum <= bound * slack && (doubled - sum).abs() < sum,
    }
}

/// The extremal sequence `u_n = a + b Σ_{k<n} u_k = a(1+b)^n` against
/// `a e^{nb}`, for all `n ≤ N`. Reports the final term.
pub fn check_gronwall<T: Scalar>(a: T, b: T, n_max: usize) -> BoundCheck<T> {
    let slack = T::one() + T::epsilon() * T::lit(64.0);
    let mut sum = T::zero();
    let mut u = a;
    let mut holds = a >= T::zero() && b >= T::zero();
    for n in 0..=n_max {
        u = a + b * sum;
        let bound = a * (T::from_usize_lossy(n) * b).exp();
        holds &= u <= bound * slack;
        sum += u;
    }
    BoundCheck {
        value: u,
        bound: a * (T::from_usize_lossy(n_max) * b).exp(),
        holds,
    }
}

/// `sup_{λ∈[0,1]} |e^{-(n-1)(1-λ)} − λ^{n-1}|` on a uniform grid, against
/// `1/(n-1)` plus a grid slack of `10/grid_points`.
pub fn check_appendix_d_bound<T: Scalar>(n: usize, grid_points: usize) -> BoundCheck<T> {
    let n = n.max(2);
    let grid = grid_points.max(2);
    let m = T::from_usize_lossy(n - 1);
    let mut sup = T::zero();
    for i in 0..grid {
        let lam = T::from_usize_lossy(i) / T::from_usize_lossy(grid - 1);
        let g = (-m * (T::one() - lam)).exp() - lam.powi(n as i32 - 1);
        sup = sup.max(g.abs());
    }
    let bound = T::one() / m;
    BoundCheck {
        value: sup,
        bound,
        holds: sup <= bound + T::lit(10.0) / T::from_usize_lossy(grid),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCheck<T> {
    pub norm: T,
    pub converged: bool,
    pub holds: bool,
}

impl<T> ContractionCheck<T> {
    pub fn passed(&self) -> bool {
        self.converged && self.holds
    }
}

pub const CONTRACTION_TOL: f64 = 1e-8;

/// Spectral-norm estimate of `S^n (I+τA₂)^{-1}` with
/// `S = (I+τA₂)^{-1}(I+τA₁)^{-1}(I+τ²A₁A₂)`.
pub fn check_contraction<T: Scalar>(
    a1: &SparseOperator<T>,
    a2: &SparseOperator<T>,
    tau: T,
    n: usize,
) -> Result<ContractionCheck<T>> {
    let dim = a1.n;
    let r1 = ShiftedSolver::new(a1, tau)?;
    let r2 = ShiftedSolver::new(a2, tau)?;
    let a1t = a1.transpose();
    let a2t = a2.transpose();
    let r1t = ShiftedSolver::new(&a1t, tau)?;
    let r2t = ShiftedSolver::new(&a2t, tau)?;
    let tau2 = tau * tau;
    let mut tmp = vec![T::zero(); dim];
    let mut tmp2 = vec![T::zero(); dim];

    let apply = |v: &[T], out: &mut [T]| -> Result<()> {
        let mut x = r2.solve(v)?;
        for _ in 0..n {
            a2.apply_into(&x, &mut tmp)?;
            a1.apply_into(&tmp, &mut tmp2)?;
            for i in 0..dim {
                tmp2[i] = x[i] + tau2 * tmp2[i];
            }
            x = r2.solve(&r1.solve(&tmp2)?)?;
        }
        out.copy_from_slice(&x);
        Ok(())
    };
    let mut tmp_t = vec![T::zero(); dim];
    let mut tmp_t2 = vec![T::zero(); dim];
    let apply_t = |v: &[T], out: &mut [T]| -> Result<()> {
        let mut x = v.to_vec();
        for _ in 0..n {
            let z = r1t.solve(&r2t.solve(&x)?)?;
            a1t.apply_into(&z, &mut tmp_t)?;
            a2t.apply_into(&tmp_t, &mut tmp_t2)?;
            for i in 0..dim {
                x[i] = z[i] + tau2 * tmp_t2[i];
            }
        }
        out.copy_from_slice(&r2t.solve(&x)?);
        Ok(())
    };
    let it = power_iteration(dim, apply, apply_t, T::lit(1e-10), 20_000);
    Ok(ContractionCheck {
        norm: it.value,
        converged: it.converged,
        holds: it.value <= T::one() + T::lit(CONTRACTION_TOL),
    })
}

/// Split operators of the strip decomposition at `x = 1/2` for `K = I`.
pub fn strip_split_operators<T: Scalar>(
    dim: usize,
    cells: usize,
    sigma: T,
    delta: T,
) -> Result<(SparseOperator<T>, SparseOperator<T>)> {
    let sp = DgSpace::uniform(dim, cells)?;
    let (c1, c2) = WeightFunction::strip_pair(T::lit(0.5), delta);
    let cfg = AssemblyConfig {
        sigma,
        include_symmetry_term: true,
    };
    let k = DiffusionTensor::identity();
    Ok((
        assemble_split(&sp, &k, &c1, &cfg)?,
        assemble_split(&sp, &k, &c2, &cfg)?,
    ))
}

/// One summarized row of the verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub name: &'static str,
    pub cases: usize,
    /// Largest `value / bound` over the sweep.
    pub worst_ratio: f64,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} {:>4} cases  worst value/bound {:>10.6}  {}  ({})",
            self.name,
            self.cases,
            self.worst_ratio,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn summarize(name: &'static str, detail: String, checks: &[(f64, f64, bool)]) -> SuiteRow {
    SuiteRow {
        name,
        cases: checks.len(),
        worst_ratio: checks
            .iter()
            .map(|&(v, b, _)| if b > 0.0 { v / b } else { 0.0 })
            .fold(0.0, f64::max),
        passed: checks.iter().all(|c| c.2),
        detail,
    }
}

/// The four checks over their standard parameter sweeps.
pub fn run_lemma_suite() -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::with_capacity(4);

    let mut r = Vec::new();
    for n in [1usize, 10, 100, 1000] {
        for zeta in [0.0, 0.5, 1.0] {
            let c = check_riemann_sums(n, 1.0f64, zeta);
            r.push((c.value, c.bound, c.holds));
        }
    }
    rows.push(summarize("riemann", "n in {1,10,100,1000}, zeta in {0,0.5,1}".into(), &r));

    let mut g = Vec::new();
    for b in [0.0, 0.1, 1.0] {
        for a in [0.0, 1.0] {
            let c = check_gronwall(a, b, 100);
            g.push((c.value, c.bound, c.holds));
        }
    }
    rows.push(summarize("gronwall", "b in {0,0.1,1}, a in {0,1}, N=100".into(), &g));

    let mut d = Vec::new();
    for n in [2usize, 11, 101, 1001] {
        let c = check_appendix_d_bound::<f64>(n, 100_000);
        d.push((c.value, c.bound, c.holds));
    }
    rows.push(summarize("appendix-d", "n in {2,11,101,1001}, 1e5 grid points".into(), &d));

    let mut k = Vec::new();
    let mut cases = Vec::new();
    for m in [8usize, 16] {
        for tau in [1e-3, 1e-1] {
            for n in [1usize, 10, 100] {
                cases.push((m, tau, n));
            }
        }
    }
    cases.push((16, 1e-2, 100));
    for (m, tau, n) in cases {
        let (a1, a2) = strip_split_operators(1, m, 3.0f64, 0.1)?;
        let c = check_contraction(&a1, &a2, tau, n)?;
        k.push((c.norm, 1.0, c.passed()));
    }
    rows.push(summarize(
        "contraction",
        "dim 1, M in {8,16}, tau in {1e-3,1e-2,1e-1}, n in {1,10,100}".into(),
        &k,
    ));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riemann_examples() {
        let c = check_riemann_sums(10, 1.0f64, 1.0);
        assert!((c.value - 2.928_968_253_968_254).abs() < 1e-12);
        assert!((c.bound - 3.302_585_092_994_046).abs() < 1e-12);
        assert!(c.holds);
        let c = check_riemann_sums(1, 1.0f64, 1.0);
        assert_eq!((c.value, c.bound), (1.0, 1.0));
        assert!(c.holds);
        let c = check_riemann_sums(7, 0.3f64, 0.0);
        assert!((c.value - 0.3).abs() < 1e-15 && c.holds);
    }

    #[test]
    fn gronwall_examples() {
        let c = check_gronwall(1.0f64, 0.0, 10);
        assert_eq!(c.value, 1.0);
        assert!(c.holds);
        let c = check_gronwall(1.0f64, 0.1, 50);
        assert!((c.value - 1.1f64.powi(50)).abs() < 1e-9);
        assert!((c.value - 117.390_852_7).abs() < 1e-6);
        assert!((c.bound - 148.413_159_1).abs() < 1e-6);
        assert!(c.holds);
        let c = check_gronwall(0.0f64, 1.0, 20);
        assert_eq!(c.value, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn appendix_d_examples() {
        let c = check_appendix_d_bound::<f64>(2, 1001);
        assert_eq!(c.bound, 1.0);
        assert!((c.value - (-1.0f64).exp()).abs() < 1e-12);
        assert!(c.holds);
        let c = check_appendix_d_bound::<f64>(11, 100_000);
        assert!((c.bound - 0.1).abs() < 1e-15);
        assert!(c.holds);
    }

    #[test]
    fn contraction_examples() {
        let z = SparseOperator::<f64>::zeros(3);
        let c = check_contraction(&z, &z, 0.1, 5).unwrap();
        assert!((c.norm - 1.0).abs() < 1e-14 && c.passed());
        let one = SparseOperator::from_dense(&[vec![1.0]]);
        let c = check_contraction(&one, &one, 1.0, 1).unwrap();
        assert!((c.norm - 0.25f64).abs() < 1e-12 && c.passed());
        let (a1, a2) = strip_split_operators(1, 16, 3.0f64, 0.1).unwrap();
        assert!(check_contraction(&a1, &a2, 0.01, 100).unwrap().passed());
    }
}
