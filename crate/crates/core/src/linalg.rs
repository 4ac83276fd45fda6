//! Shifted solves `(I + τA) x = b`, banded LU, BiCGStab and power iteration.

use crate::error::{Error, Result};
use crate::operators::SparseOperator;
use crate::scalar::{dot, norm2, Scalar};

/// Above this many unknowns the shifted solver switches to BiCGStab.
pub const DIRECT_SOLVER_MAX_DOFS: usize = 50_000;

/// LU factorization with partial pivoting of a banded matrix.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku` (room for pivoting fill).
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    multipliers: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn factor(a: &SparseOperator<T>) -> Result<Self> {
        let n = a.n;
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            band: vec![T::zero(); n * width],
            multipliers: vec![T::zero(); n * kl],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.idx(i, j);
                lu.band[k] += v;
            }
        }
        let scale = a.max_abs().max(T::min_positive_value());
        let upper = kl + ku;
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = lu.band[lu.idx(i, i)].abs();
            for r in i + 1..=last_row {
                let v = lu.band[lu.idx(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= scale * T::epsilon() * T::lit(1e-3) || !best.is_finite() {
                return Err(Error::SolverFailure {
                    residual: f64::NAN,
                    reason: format!("singular pivot in column {i}"),
                });
            }
            lu.pivots[i] = p;
            let last_col = (i + upper).min(n - 1);
            if p != i {
                for j in i..=last_col {
                    let (a_, b_) = (lu.idx(i, j), lu.idx(p, j));
                    lu.band.swap(a_, b_);
                }
            }
            let d = lu.band[lu.idx(i, i)];
            for r in i + 1..=last_row {
                let kr = lu.idx(r, i);
                let m = lu.band[kr] / d;
                lu.band[kr] = T::zero();
                lu.multipliers[i * kl + (r - i - 1)] = m;
                if m == T::zero() {
                    continue;
                }
                for j in i + 1..=last_col {
                    let u = lu.band[lu.idx(i, j)];
                    let k = lu.idx(r, j);
                    lu.band[k] -= m * u;
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let kl = self.kl;
        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi != T::zero() {
                for r in i + 1..=(i + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.multipliers[i * kl + (r - i - 1)] * bi;
                }
            }
        }
        let upper = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + upper).min(n - 1) {
                acc -= self.band[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.band[self.idx(i, i)];
        }
    }
}

/// Jacobi-preconditioned BiCGStab. Returns the solution and the final relative residual.
pub fn bicgstab<T: Scalar>(
    a: &SparseOperator<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, T)> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], T::zero()));
    }
    let inv_diag: Vec<T> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d != T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect();
    let precond = |v: &[T], out: &mut [T]| {
        for i in 0..n {
            out[i] = inv_diag[i] * v[i];
        }
    };
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut rel = T::one();
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() <= T::min_positive_value() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        a.apply_into(&y, &mut v)?;
        let denom = dot(&r_hat, &v);
        if denom == T::zero() {
            break;
        }
        alpha = rho_new / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            rel = norm2(&s) / bnorm;
            break;
        }
        precond(&s, &mut z);
        a.apply_into(&z, &mut t)?;
        let tt = dot(&t, &t);
        omega = if tt == T::zero() { T::zero() } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm2(&r) / bnorm;
        if rel <= tol || omega == T::zero() {
            break;
        }
        rho = rho_new;
    }
    // True residual.
    let ax = a.apply(&x)?;
    let res: Vec<T> = ax.iter().zip(b).map(|(&u, &v)| u - v).collect();
    let true_rel = norm2(&res) / bnorm;
    if true_rel <= tol {
        Ok((x, true_rel))
    } else {
        Err(Error::SolverFailure {
            residual: true_rel.max(rel).to_f64_lossy(),
            reason: "BiCGStab did not converge".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    Iterative,
}

#[derive(Debug, Clone)]
enum Backend<T> {
    Direct(BandedLu<T>),
    Iterative,
}

/// Solver for a fixed matrix, factored once and then shared read-only.
#[derive(Debug, Clone)]
pub struct LinearSolver<T> {
    matrix: SparseOperator<T>,
    backend: Backend<T>,
    norm_inf: T,
    pub tol: T,
}

impl<T: Scalar> LinearSolver<T> {
    pub fn new(matrix: SparseOperator<T>) -> Result<Self> {
        let kind = if matrix.n <= DIRECT_SOLVER_MAX_DOFS {
            SolverKind::Direct
        } else {
            SolverKind::Iterative
        };
        Self::with_kind(matrix, kind)
    }

    pub fn with_kind(matrix: SparseOperator<T>, kind: SolverKind) -> Result<Self> {
        let floor = T::epsilon() * T::lit(64.0);
        let norm_inf = (0..matrix.n)
            .map(|i| matrix.row(i).map(|(_, v)| v.abs()).sum::<T>())
            .fold(T::zero(), |m, v| m.max(v));
        Ok(match kind {
            SolverKind::Direct => Self {
                backend: Backend::Direct(BandedLu::factor(&matrix)?),
                matrix,
                norm_inf,
                tol: T::lit(1e-12).max(floor),
            },
            SolverKind::Iterative => Self {
                matrix,
                backend: Backend::Iterative,
                norm_inf,
                tol: T::lit(1e-10).max(floor),
            },
        })
    }

    pub fn kind(&self) -> SolverKind {
        match self.backend {
            Backend::Direct(_) => SolverKind::Direct,
            Backend::Iterative => SolverKind::Iterative,
        }
    }

    pub fn matrix(&self) -> &SparseOperator<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.matrix.n {
            return Err(Error::invalid(format!(
                "rhs length {} does not match system size {}",
                b.len(),
                self.matrix.n
            )));
        }
        let bnorm = norm2(b);
        if bnorm == T::zero() {
            return Ok(vec![T::zero(); b.len()]);
        }
        match &self.backend {
            Backend::Iterative => {
                bicgstab(&self.matrix, b, self.tol, 20_000).map(|(x, _)| x)
            }
            Backend::Direct(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                // Iterative refinement until the residual contract holds.
                let mut rel = T::infinity();
                for _ in 0..4 {
                    let ax = self.matrix.apply(&x)?;
                    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&u, &v)| u - v).collect();
                    rel = norm2(&r) / bnorm;
                    if rel <= self.tol {
                        return Ok(x);
                    }
                    lu.solve_in_place(&mut r);
                    for (xi, ri) in x.iter_mut().zip(&r) {
                        *xi += *ri;
                    }
                }
                // Ill-conditioned systems: accept a small normwise backward error.
                let ax = self.matrix.apply(&x)?;
                let r: Vec<T> = b.iter().zip(&ax).map(|(&u, &v)| u - v).collect();
                let backward = norm2(&r) / (self.norm_inf * norm2(&x) + bnorm);
                if backward <= self.tol {
                    return Ok(x);
                }
                Err(Error::SolverFailure {
                    residual: rel.to_f64_lossy(),
                    reason: "residual above tolerance after refinement".into(),
                })
            }
        }
    }
}

/// Solver for `(I + τA) x = b` with τ fixed for the solver's lifetime.
#[derive(Debug, Clone)]
pub struct ShiftedSolver<T> {
    pub tau: T,
    inner: Option<LinearSolver<T>>,
    n: usize,
}

impl<T: Scalar> ShiftedSolver<T> {
    pub fn new(a: &SparseOperator<T>, tau: T) -> Result<Self> {
        Self::build(a, tau, None)
    }

    pub fn with_kind(a: &SparseOperator<T>, tau: T, kind: SolverKind) -> Result<Self> {
        Self::build(a, tau, Some(kind))
    }

    fn build(a: &SparseOperator<T>, tau: T, kind: Option<SolverKind>) -> Result<Self> {
        if !(tau >= T::zero()) {
            return Err(Error::invalid(format!("shift τ must be non-negative, got {tau}")));
        }
        // τ = 0 or A = 0: the system is the identity.
        let inner = if tau == T::zero() || a.max_abs() == T::zero() {
            None
        } else {
            let m = a.shifted(tau);
            Some(match kind {
                Some(k) => LinearSolver::with_kind(m, k)?,
                None => LinearSolver::new(m)?,
            })
        };
        Ok(Self {
            tau,
            inner,
            n: a.n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SolverKind {
        self.inner
            .as_ref()
            .map(|s| s.kind())
            .unwrap_or(SolverKind::Direct)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.n {
            return Err(Error::invalid(format!(
                "rhs length {} does not match operator size {}",
                b.len(),
                self.n
            )));
        }
        match &self.inner {
            None => Ok(b.to_vec()),
            Some(s) => s.solve(b),
        }
    }
}

/// One-shot `(I + τA)^{-1} b`.
pub fn solve_shifted<T: Scalar>(a: &SparseOperator<T>, tau: T, b: &[T]) -> Result<Vec<T>> {
    ShiftedSolver::new(a, tau)?.solve(b)
}

/// Result of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration<T> {
    /// Estimated largest singular value (a lower bound at every iterate).
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value of a linear map given by `apply` and `apply_transpose`,
/// via power iteration on `MᵀM`. Stops when the relative change drops below `tol`.
pub fn power_iteration<T: Scalar>(
    n: usize,
    mut apply: impl FnMut(&[T], &mut [T]) -> Result<()>,
    mut apply_transpose: impl FnMut(&[T], &mut [T]) -> Result<()>,
    tol: T,
    max_iter: usize,
) -> PowerIteration<T> {
    if n == 0 {
        return PowerIteration {
            value: T::zero(),
            converged: true,
            iterations: 0,
        };
    }
    let mut v: Vec<T> = (0..n)
        .map(|i| T::one() + T::lit(0.5) * T::lit((1.3 * i as f64 + 0.7).sin()))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![T::zero(); n];
    let mut u = vec![T::zero(); n];
    let mut prev = T::zero();
    for it in 1..=max_iter {
        if apply(&v, &mut w).is_err() {
            return PowerIteration {
                value: prev,
                converged: false,
                iterations: it,
            };
        }
        let sigma = norm2(&w);
        if sigma == T::zero() {
            return PowerIteration {
                value: T::zero(),
                converged: true,
                iterations: it,
            };
        }
        if it > 1 && (sigma - prev).abs() <= tol * sigma {
            return PowerIteration {
                value: sigma,
                converged: true,
                iterations: it,
            };
        }
        prev = sigma;
        if apply_transpose(&w, &mut u).is_err() {
            return PowerIteration {
                value: prev,
                converged: false,
                iterations: it,
            };
        }
        let nu = norm2(&u);
        if nu == T::zero() {
            break;
        }
        for i in 0..n {
            v[i] = u[i] / nu;
        }
    }
    PowerIteration {
        value: prev,
        converged: false,
        iterations: max_iter,
    }
}
