//! SIPG assembly of the dG diffusion operator and its partition-of-unity splits.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::dg_space::DgSpace;
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, PowerIteration};
use crate::mesh::{FaceKind, Point};
use crate::scalar::Scalar;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseOperator<T> {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets; duplicates are summed
    /// in the order they appear after a stable sort by `(row, col)`.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) out of range for n={n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    /// `out = A v`.
    pub fn apply_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        if v.len() != self.n || out.len() != self.n {
            return Err(Error::invalid(format!(
                "matvec shape mismatch: matrix {}, input {}, output {}",
                self.n,
                v.len(),
                out.len()
            )));
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, a)| a * v[j]).sum();
        }
        Ok(())
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, alpha * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, beta * v)));
        }
        Self::from_triplets(self.n, t)
    }

    /// `I + tau * self`.
    pub fn shifted(&self, tau: T) -> Self {
        Self::identity(self.n).linear_combination(T::one(), self, tau)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.linear_combination(T::one(), other, -T::one()).max_abs()
    }

    pub fn symmetry_defect(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Self {
        self.linear_combination(T::lit(0.5), &self.transpose(), T::lit(0.5))
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    /// True when row `i` has no nonzero entry.
    pub fn row_is_zero(&self, i: usize) -> bool {
        self.row(i).all(|(_, v)| v == T::zero())
    }

    /// Half-bandwidths `(lower, upper)` of the sparsity pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v.to_f64_lossy())?;
            }
        }
        Ok(())
    }
}

type TensorFn<T> = dyn Fn(&Point<T>) -> [[T; 2]; 2] + Send + Sync;

/// Symmetric, uniformly elliptic diffusion coefficient `K(x)`.
#[derive(Clone)]
pub struct DiffusionTensor<T> {
    eval: Arc<TensorFn<T>>,
    /// Lower eigenvalue bound `K0`.
    pub k0: T,
    /// Upper eigenvalue bound `K1`.
    pub k1: T,
}

impl<T> fmt::Debug for DiffusionTensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DiffusionTensor")
    }
}

impl<T: Scalar> DiffusionTensor<T> {
    pub fn identity() -> Self {
        Self::constant(T::one())
    }

    /// `K = k I`.
    pub fn constant(k: T) -> Self {
        Self {
            eval: Arc::new(move |_| [[k, T::zero()], [T::zero(), k]]),
            k0: k,
            k1: k,
        }
    }

    pub fn field(
        eval: impl Fn(&Point<T>) -> [[T; 2]; 2] + Send + Sync + 'static,
        k0: T,
        k1: T,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            k0,
            k1,
        }
    }

    pub fn at(&self, p: &Point<T>) -> [[T; 2]; 2] {
        (self.eval)(p)
    }

    /// Checks symmetry and the eigenvalue interval at the given points.
    pub fn check(&self, points: &[Point<T>]) -> Result<()> {
        let tol = T::lit(1e-12);
        for p in points {
            let k = self.at(p);
            if (k[0][1] - k[1][0]).abs() > tol * (T::one() + k[0][1].abs()) {
                return Err(Error::invalid(format!("K not symmetric at {:?}", p)));
            }
            let tr = k[0][0] + k[1][1];
            let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
            let disc = (tr * tr * T::lit(0.25) - det).max(T::zero()).sqrt();
            let (lo, hi) = (tr * T::lit(0.5) - disc, tr * T::lit(0.5) + disc);
            if lo < self.k0 - tol || hi > self.k1 + tol {
                return Err(Error::invalid(format!(
                    "K eigenvalues [{lo}, {hi}] outside [{}, {}] at {:?}",
                    self.k0, self.k1, p
                )));
            }
        }
        Ok(())
    }
}

type ScalarFn<T> = dyn Fn(&Point<T>) -> T + Send + Sync;

/// One member `χ_ℓ` of a two-function partition of unity.
#[derive(Clone)]
pub struct WeightFunction<T> {
    eval: Arc<ScalarFn<T>>,
    partner: Arc<ScalarFn<T>>,
    /// Overlap half-width.
    pub delta: T,
}

impl<T> fmt::Debug for WeightFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("WeightFunction")
    }
}

impl<T: Scalar> WeightFunction<T> {
    /// The two weights of an overlapping split of the domain along `x`:
    /// the first is 1 for `x < c - δ`, 0 for `x > c + δ`, linear in between;
    /// the second is its complement.
    pub fn strip_pair(center: T, delta: T) -> (Self, Self) {
        let left: Arc<ScalarFn<T>> = Arc::new(move |p: &Point<T>| {
            if delta <= T::zero() {
                return if p[0] < center { T::one() } else { T::zero() };
            }
            ((center - p[0]) / (delta + delta) + T::lit(0.5))
                .max(T::zero())
                .min(T::one())
        });
        let l2 = left.clone();
        let right: Arc<ScalarFn<T>> = Arc::new(move |p: &Point<T>| T::one() - l2(p));
        (
            Self {
                eval: left.clone(),
                partner: right.clone(),
                delta,
            },
            Self {
                eval: right,
                partner: left,
                delta,
            },
        )
    }

    /// `χ ≡ 1` paired with `χ ≡ 0`.
    pub fn unit_pair() -> (Self, Self) {
        let one: Arc<ScalarFn<T>> = Arc::new(|_| T::one());
        let zero: Arc<ScalarFn<T>> = Arc::new(|_| T::zero());
        (
            Self {
                eval: one.clone(),
                partner: zero.clone(),
                delta: T::zero(),
            },
            Self {
                eval: zero,
                partner: one,
                delta: T::zero(),
            },
        )
    }

    /// A custom weight; `partner` should equal `1 - eval`.
    pub fn custom(
        eval: impl Fn(&Point<T>) -> T + Send + Sync + 'static,
        partner: impl Fn(&Point<T>) -> T + Send + Sync + 'static,
        delta: T,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            partner: Arc::new(partner),
            delta,
        }
    }

    pub fn at(&self, p: &Point<T>) -> T {
        (self.eval)(p)
    }

    pub fn partner_at(&self, p: &Point<T>) -> T {
        (self.partner)(p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyConfig<T> {
    /// Penalty parameter σ > 0; the face penalty is `σ / h_e`.
    pub sigma: T,
    pub include_symmetry_term: bool,
}

impl<T: Scalar> Default for AssemblyConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::lit(3.0),
            include_symmetry_term: true,
        }
    }
}

impl<T: Scalar> AssemblyConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.sigma > T::zero() && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("penalty σ must be positive, got {}", self.sigma)))
        }
    }
}

/// The full SIPG operator `A_h`.
pub fn assemble_sipg<T: Scalar>(
    space: &DgSpace<T>,
    k: &DiffusionTensor<T>,
    cfg: &AssemblyConfig<T>,
) -> Result<SparseOperator<T>> {
    cfg.validate()?;
    assemble_weighted(space, k, None, cfg)
}

/// The split operator `A_{h,ℓ}` with every term weighted by `χ_ℓ`.
pub fn assemble_split<T: Scalar>(
    space: &DgSpace<T>,
    k: &DiffusionTensor<T>,
    chi: &WeightFunction<T>,
    cfg: &AssemblyConfig<T>,
) -> Result<SparseOperator<T>> {
    cfg.validate()?;
    assemble_weighted(space, k, Some(chi), cfg)
}

fn weight_at<T: Scalar>(chi: Option<&WeightFunction<T>>, p: &Point<T>) -> Result<T> {
    match chi {
        None => Ok(T::one()),
        Some(w) => {
            let v = w.at(p);
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::InvalidWeight {
                    value: v.to_f64_lossy(),
                    location: format!("({}, {})", p[0], p[1]),
                });
            }
            Ok(v)
        }
    }
}

fn flux<T: Scalar>(k: &[[T; 2]; 2], g: &Point<T>, n: &Point<T>) -> T {
    (k[0][0] * g[0] + k[0][1] * g[1]) * n[0] + (k[1][0] * g[0] + k[1][1] * g[1]) * n[1]
}

fn assemble_weighted<T: Scalar>(
    space: &DgSpace<T>,
    k: &DiffusionTensor<T>,
    chi: Option<&WeightFunction<T>>,
    cfg: &AssemblyConfig<T>,
) -> Result<SparseOperator<T>> {
    let nl = space.dofs_per_element;
    let mesh = &space.mesh;
    let half = T::lit(0.5);
    let mut trip: Vec<(usize, usize, T)> =
        Vec::with_capacity(mesh.num_elements() * nl * nl * (1 + 2 * mesh.dim));

    // Volume terms: (χ K ∇φ_j, ∇φ_i)_T.
    for e in 0..mesh.num_elements() {
        let g = space.basis_gradients(e);
        let mut local = [[T::zero(); 3]; 3];
        for (p, w) in space.quadrature(e) {
            let c = weight_at(chi, &p)? * w;
            let kk = k.at(&p);
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += c * flux(&kk, &g[j], &g[i]);
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                trip.push((space.dof(e, i), space.dof(e, j), local[i][j]));
            }
        }
    }

    // Face terms: consistency, symmetry, penalty.
    for f in &mesh.faces {
        // (element, jump sign, average weight)
        let sides: Vec<(usize, T, T)> = match (f.kind, f.minus_element) {
            (FaceKind::Interior, Some(m)) => {
                vec![(f.plus_element, T::one(), half), (m, -T::one(), half)]
            }
            _ => vec![(f.plus_element, T::one(), T::one())],
        };
        let pen = cfg.sigma / f.h_e;
        let qp = space.face_quadrature(f);
        let mut local = vec![[[T::zero(); 3]; 3]; sides.len() * sides.len()];
        for (p, w) in &qp {
            let c = weight_at(chi, p)? * *w;
            let kk = k.at(p);
            let vals: Vec<[T; 3]> = sides.iter().map(|s| space.basis_at(s.0, p)).collect();
            let fl: Vec<[T; 3]> = sides
                .iter()
                .map(|s| {
                    let g = space.basis_gradients(s.0);
                    [
                        flux(&kk, &g[0], &f.normal),
                        flux(&kk, &g[1], &f.normal),
                        flux(&kk, &g[2], &f.normal),
                    ]
                })
                .collect();
            for (a, &(_, sw, aw)) in sides.iter().enumerate() {
                for (b, &(_, sv, av)) in sides.iter().enumerate() {
                    let blk = &mut local[a * sides.len() + b];
                    for i in 0..nl {
                        for j in 0..nl {
                            let bw = sw * vals[a][i];
                            let bv = sv * vals[b][j];
                            let mut term = -av * fl[b][j] * bw + pen * bv * bw;
                            if cfg.include_symmetry_term {
                                term -= aw * fl[a][i] * bv;
                            }
                            blk[i][j] += c * term;
                        }
                    }
                }
            }
        }
        for (a, &(ew, _, _)) in sides.iter().enumerate() {
            for (b, &(ev, _, _)) in sides.iter().enumerate() {
                let blk = &local[a * sides.len() + b];
                for i in 0..nl {
                    for j in 0..nl {
                        trip.push((space.dof(ew, i), space.dof(ev, j), blk[i][j]));
                    }
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(space.total_dofs(), trip))
}

/// L²-operator norm of `op` on `V_h`. With the orthonormal basis this is the
/// Euclidean spectral norm, estimated by power iteration on `AᵀA`.
pub fn operator_norm_estimate<T: Scalar>(op: &SparseOperator<T>) -> PowerIteration<T> {
    let at = op.transpose();
    power_iteration(
        op.n,
        |v, out| op.apply_into(v, out),
        |v, out| at.apply_into(v, out),
        T::lit(1e-8),
        10_000,
    )
}
