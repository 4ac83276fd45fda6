//! Piecewise-linear discontinuous space with an L²-orthonormal basis per element.
//!
//! On an element with centre `c` and width `h` the reference coordinates are
//! `ξ = 2(x - c_x)/h`, `η = 2(y - c_y)/h` and the basis is
//! `{1, √3 ξ, √3 η} / √|T|`, so the global mass matrix is the identity.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{CartesianMesh, Face, FaceKind, Point};
use crate::quadrature::{GaussLegendre, ASSEMBLY_POINTS};
use crate::scalar::Scalar;

/// Maximum number of volume quadrature points per element.
pub const MAX_QP: usize = ASSEMBLY_POINTS * ASSEMBLY_POINTS;
/// Maximum number of local basis functions.
pub const MAX_LOCAL: usize = 3;

#[derive(Debug, Clone)]
pub struct DgSpace<T> {
    pub mesh: CartesianMesh<T>,
    pub dofs_per_element: usize,
    pub rule: GaussLegendre<T>,
    /// Volume points on `[-1,1]^dim`, x-index fastest.
    pub ref_points: Vec<Point<T>>,
    /// Product weights divided by `2^dim` (they sum to one).
    pub ref_weights: Vec<T>,
    /// Unscaled basis `{1, √3ξ, √3η}` at `ref_points`.
    pub ref_basis: Vec<[T; MAX_LOCAL]>,
}

impl<T: Scalar> DgSpace<T> {
    pub fn new(mesh: CartesianMesh<T>) -> Self {
        let rule = GaussLegendre::<T>::new(ASSEMBLY_POINTS);
        let dim = mesh.dim;
        let s3 = T::lit(3.0).sqrt();
        let half = T::lit(0.5);
        let mut ref_points = Vec::new();
        let mut ref_weights = Vec::new();
        let mut ref_basis = Vec::new();
        if dim == 1 {
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                ref_points.push([x, T::zero()]);
                ref_weights.push(w * half);
                ref_basis.push([T::one(), s3 * x, T::zero()]);
            }
        } else {
            for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    ref_points.push([x, y]);
                    ref_weights.push(wx * wy * half * half);
                    ref_basis.push([T::one(), s3 * x, s3 * y]);
                }
            }
        }
        Self {
            dofs_per_element: dim + 1,
            mesh,
            rule,
            ref_points,
            ref_weights,
            ref_basis,
        }
    }

    pub fn uniform(dim: usize, m: usize) -> Result<Self> {
        Ok(Self::new(CartesianMesh::uniform(dim, m)?))
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn total_dofs(&self) -> usize {
        self.mesh.num_elements() * self.dofs_per_element
    }

    pub fn num_qp(&self) -> usize {
        self.ref_points.len()
    }

    pub fn h(&self) -> T {
        self.mesh.h()
    }

    /// `|T|` of every element.
    pub fn element_volume(&self) -> T {
        self.h().powi(self.dim() as i32)
    }

    /// `1/√|T|`, the scaling between reference and physical basis.
    fn scale(&self) -> T {
        T::one() / self.element_volume().sqrt()
    }

    pub fn dof(&self, element: usize, local: usize) -> usize {
        element * self.dofs_per_element + local
    }

    fn centre(&self, e: usize) -> Point<T> {
        let el = &self.mesh.elements[e];
        let half = el.extent * T::lit(0.5);
        [el.lower[0] + half, el.lower[1] + half]
    }

    pub fn to_reference(&self, e: usize, p: &Point<T>) -> Point<T> {
        let c = self.centre(e);
        let two_over_h = T::lit(2.0) / self.mesh.elements[e].extent;
        [(p[0] - c[0]) * two_over_h, (p[1] - c[1]) * two_over_h]
    }

    pub fn to_physical(&self, e: usize, r: &Point<T>) -> Point<T> {
        let c = self.centre(e);
        let half_h = self.mesh.elements[e].extent * T::lit(0.5);
        let mut p = [c[0] + half_h * r[0], c[1] + half_h * r[1]];
        if self.dim() == 1 {
            p[1] = T::zero();
        }
        p
    }

    /// Physical basis values of element `e` at physical point `p`.
    pub fn basis_at(&self, e: usize, p: &Point<T>) -> [T; MAX_LOCAL] {
        let r = self.to_reference(e, p);
        let s = self.scale();
        let s3 = T::lit(3.0).sqrt();
        let mut v = [s, s * s3 * r[0], T::zero()];
        if self.dim() == 2 {
            v[2] = s * s3 * r[1];
        }
        v
    }

    /// Physical gradients of the local basis (constant on the element).
    pub fn basis_gradients(&self, e: usize) -> [Point<T>; MAX_LOCAL] {
        let g = self.scale() * T::lit(3.0).sqrt() * T::lit(2.0) / self.mesh.elements[e].extent;
        let z = T::zero();
        if self.dim() == 1 {
            [[z, z], [g, z], [z, z]]
        } else {
            [[z, z], [g, z], [z, g]]
        }
    }

    /// Physical quadrature points and weights of element `e`.
    pub fn quadrature(&self, e: usize) -> impl Iterator<Item = (Point<T>, T)> + '_ {
        let vol = self.element_volume();
        self.ref_points
            .iter()
            .zip(&self.ref_weights)
            .map(move |(r, &w)| (self.to_physical(e, r), w * vol))
    }

    /// Face quadrature points (physical) and weights; one point of weight 1 in 1-D.
    pub fn face_quadrature(&self, f: &Face<T>) -> Vec<(Point<T>, T)> {
        if self.dim() == 1 {
            return vec![(f.origin, T::one())];
        }
        let half = f.measure * T::lit(0.5);
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(&s, &w)| (self.mesh.face_point(f, s), w * half))
            .collect()
    }

    /// Values of a coefficient vector at the reference quadrature points of `e`.
    pub fn values_at_qp(&self, coeffs: &[T], e: usize) -> [T; MAX_QP] {
        let s = self.scale();
        let base = e * self.dofs_per_element;
        let c = &coeffs[base..base + self.dofs_per_element];
        let mut out = [T::zero(); MAX_QP];
        for (q, psi) in self.ref_basis.iter().enumerate() {
            let mut v = T::zero();
            for k in 0..self.dofs_per_element {
                v += c[k] * psi[k];
            }
            out[q] = v * s;
        }
        out
    }

    /// Local L² projection of values given at the quadrature points of `e`.
    pub fn project_qp_values(&self, values: &[T], e: usize, out: &mut [T]) {
        let _ = e;
        let s = self.element_volume().sqrt();
        for k in 0..self.dofs_per_element {
            let mut acc = T::zero();
            for (q, psi) in self.ref_basis.iter().enumerate() {
                acc += self.ref_weights[q] * values[q] * psi[k];
            }
            out[k] = acc * s;
        }
    }

    /// L² projection `P_h f` with the fixed quadrature.
    pub fn project_l2(self: &Arc<Self>, f: impl Fn(&Point<T>) -> T) -> Result<DgFunction<T>> {
        let nq = self.num_qp();
        let mut coeffs = vec![T::zero(); self.total_dofs()];
        let mut vals = [T::zero(); MAX_QP];
        for e in 0..self.mesh.num_elements() {
            for (q, r) in self.ref_points.iter().enumerate().take(nq) {
                let p = self.to_physical(e, r);
                let v = f(&p);
                if !v.is_finite() {
                    return Err(Error::NumericInput(format!(
                        "f({}, {}) = {v}",
                        p[0], p[1]
                    )));
                }
                vals[q] = v;
            }
            let base = e * self.dofs_per_element;
            self.project_qp_values(&vals[..nq], e, &mut coeffs[base..base + self.dofs_per_element]);
        }
        Ok(DgFunction::new(self.clone(), coeffs))
    }

    /// Point evaluation of a coefficient vector.
    pub fn eval(&self, coeffs: &[T], p: &Point<T>) -> T {
        let e = self.mesh.locate(p);
        self.eval_in(coeffs, e, p)
    }

    pub fn eval_in(&self, coeffs: &[T], e: usize, p: &Point<T>) -> T {
        let b = self.basis_at(e, p);
        let base = e * self.dofs_per_element;
        (0..self.dofs_per_element).map(|k| coeffs[base + k] * b[k]).sum()
    }

    /// Block-diagonal matrix of `v ↦ P_h(m v)` for a pointwise multiplier `m`,
    /// one `dofs_per_element²` row-major block per element.
    pub fn multiplier_blocks(&self, m: impl Fn(&Point<T>) -> T) -> Vec<T> {
        let nl = self.dofs_per_element;
        let mut blocks = vec![T::zero(); self.mesh.num_elements() * nl * nl];
        for e in 0..self.mesh.num_elements() {
            let b = &mut blocks[e * nl * nl..(e + 1) * nl * nl];
            for (q, r) in self.ref_points.iter().enumerate() {
                let w = self.ref_weights[q] * m(&self.to_physical(e, r));
                let psi = &self.ref_basis[q];
                for i in 0..nl {
                    for j in 0..nl {
                        b[i * nl + j] += w * psi[i] * psi[j];
                    }
                }
            }
        }
        blocks
    }
}

/// Applies a block-diagonal matrix produced by [`DgSpace::multiplier_blocks`].
pub fn apply_blocks<T: Scalar>(blocks: &[T], nl: usize, v: &[T], out: &mut [T]) {
    for (e, b) in blocks.chunks_exact(nl * nl).enumerate() {
        let x = &v[e * nl..(e + 1) * nl];
        for i in 0..nl {
            out[e * nl + i] = (0..nl).map(|j| b[i * nl + j] * x[j]).sum();
        }
    }
}

/// Norms of a dG function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenNorms<T> {
    pub l2: T,
    /// Full broken H¹ norm (L² part plus element gradients).
    pub broken_h1: T,
    pub jump_seminorm: T,
    /// `(broken_h1² + jump_seminorm²)^{1/2}`.
    pub v_h_norm: T,
}

#[derive(Debug, Clone)]
pub struct DgFunction<T> {
    pub space: Arc<DgSpace<T>>,
    pub coefficients: Vec<T>,
}

impl<T: Scalar> DgFunction<T> {
    pub fn new(space: Arc<DgSpace<T>>, coefficients: Vec<T>) -> Self {
        assert_eq!(
            coefficients.len(),
            space.total_dofs(),
            "coefficient vector does not match the space"
        );
        Self {
            space,
            coefficients,
        }
    }

    pub fn zeros(space: Arc<DgSpace<T>>) -> Self {
        let n = space.total_dofs();
        Self::new(space, vec![T::zero(); n])
    }

    pub fn eval(&self, p: &Point<T>) -> T {
        self.space.eval(&self.coefficients, p)
    }

    /// L² norm, evaluated by quadrature.
    pub fn l2_norm(&self) -> T {
        let sp = &self.space;
        let nq = sp.num_qp();
        let vol = sp.element_volume();
        let mut acc = T::zero();
        for e in 0..sp.mesh.num_elements() {
            let v = sp.values_at_qp(&self.coefficients, e);
            for q in 0..nq {
                acc += sp.ref_weights[q] * vol * v[q] * v[q];
            }
        }
        acc.sqrt()
    }

    /// Jump of the function across (or onto, for boundary faces) face `f` at `p`.
    pub fn jump_at(&self, f: &Face<T>, p: &Point<T>) -> T {
        let sp = &self.space;
        let plus = sp.eval_in(&self.coefficients, f.plus_element, p);
        match (f.kind, f.minus_element) {
            (FaceKind::Interior, Some(m)) => plus - sp.eval_in(&self.coefficients, m, p),
            _ => plus,
        }
    }

    pub fn broken_norms(&self) -> BrokenNorms<T> {
        let sp = &self.space;
        let l2 = self.l2_norm();
        let vol = sp.element_volume();
        let nl = sp.dofs_per_element;
        let mut grad2 = T::zero();
        for e in 0..sp.mesh.num_elements() {
            let g = sp.basis_gradients(e);
            let c = &self.coefficients[e * nl..(e + 1) * nl];
            let mut grad = [T::zero(); 2];
            for k in 0..nl {
                grad[0] += c[k] * g[k][0];
                grad[1] += c[k] * g[k][1];
            }
            grad2 += (grad[0] * grad[0] + grad[1] * grad[1]) * vol;
        }
        let mut jump2 = T::zero();
        for f in &sp.mesh.faces {
            let mut acc = T::zero();
            for (p, w) in sp.face_quadrature(f) {
                let j = self.jump_at(f, &p);
                acc += w * j * j;
            }
            jump2 += acc / f.h_e;
        }
        let broken_h1 = (l2 * l2 + grad2).sqrt();
        BrokenNorms {
            l2,
            broken_h1,
            jump_seminorm: jump2.sqrt(),
            v_h_norm: (l2 * l2 + grad2 + jump2).sqrt(),
        }
    }

    /// L² distance to another dG function, possibly on a different uniform
    /// mesh; integrated on the quadrature of the finer of the two meshes.
    pub fn l2_distance(&self, other: &DgFunction<T>) -> Result<T> {
        if self.space.dim() != other.space.dim() {
            return Err(Error::invalid("dimension mismatch in L2 distance"));
        }
        let (fine, coarse) =
            if self.space.mesh.cells_per_axis >= other.space.mesh.cells_per_axis {
                (self, other)
            } else {
                (other, self)
            };
        let sp = &fine.space;
        let nq = sp.num_qp();
        let vol = sp.element_volume();
        let mut acc = T::zero();
        for e in 0..sp.mesh.num_elements() {
            let vf = sp.values_at_qp(&fine.coefficients, e);
            // Nested meshes: the coarse element is the one containing the centre.
            let centre = sp.to_physical(e, &[T::zero(), T::zero()]);
            let ce = coarse.space.mesh.locate(&centre);
            for q in 0..nq {
                let p = sp.to_physical(e, &sp.ref_points[q]);
                let d = vf[q] - coarse.space.eval_in(&coarse.coefficients, ce, &p);
                acc += sp.ref_weights[q] * vol * d * d;
            }
        }
        Ok(acc.sqrt())
    }

    /// `‖self − u‖_{L²}` for a pointwise function `u`, by quadrature.
    pub fn l2_error_to(&self, u: impl Fn(&Point<T>) -> T) -> T {
        let sp = &self.space;
        let mut acc = T::zero();
        for e in 0..sp.mesh.num_elements() {
            let v = sp.values_at_qp(&self.coefficients, e);
            for (q, (p, w)) in sp.quadrature(e).enumerate() {
                let d = v[q] - u(&p);
                acc += w * d * d;
            }
        }
        acc.sqrt()
    }

    /// Little-endian `f64` coefficients, element-major, basis-minor.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        write_f64_le(w, &self.coefficients)
    }

    pub fn read_binary(space: Arc<DgSpace<T>>, r: &mut impl Read) -> Result<Self> {
        let n = space.total_dofs();
        let coeffs = read_f64_le(r, n)?;
        Ok(Self::new(space, coeffs))
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "element,basis,coefficient")?;
        let nl = self.space.dofs_per_element;
        for (i, c) in self.coefficients.iter().enumerate() {
            writeln!(w, "{},{},{}", i / nl, i % nl, c.to_f64_lossy())?;
        }
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub(crate) fn write_f64_le<T: Scalar>(w: &mut impl Write, data: &[T]) -> Result<()> {
    for &c in data {
        w.write_all(&c.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64_le<T: Scalar>(r: &mut impl Read, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(T::lit(f64::from_le_bytes(buf)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(dim: usize, m: usize) -> Arc<DgSpace<f64>> {
        Arc::new(DgSpace::uniform(dim, m).unwrap())
    }

    #[test]
    fn gram_matrix_is_identity() {
        let hi = GaussLegendre::<f64>::new(8);
        for dim in [1, 2] {
            let sp = space(dim, 3);
            for e in 0..sp.mesh.num_elements() {
                let el = &sp.mesh.elements[e];
                let nl = sp.dofs_per_element;
                for i in 0..nl {
                    for j in 0..nl {
                        let g = if dim == 1 {
                            hi.integrate(el.lower[0], el.lower[0] + el.extent, |x| {
                                let b = sp.basis_at(e, &[x, 0.0]);
                                b[i] * b[j]
                            })
                        } else {
                            hi.integrate(el.lower[1], el.lower[1] + el.extent, |y| {
                                hi.integrate(el.lower[0], el.lower[0] + el.extent, |x| {
                                    let b = sp.basis_at(e, &[x, y]);
                                    b[i] * b[j]
                                })
                            })
                        };
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((g - expect).abs() < 1e-12, "dim {dim} e {e} ({i},{j}) = {g}");
                    }
                }
            }
        }
    }

    #[test]
    fn constants_and_affine_reproduced() {
        for m in [1usize, 3, 8] {
            let sp = space(1, m);
            let one = sp.project_l2(|_| 1.0).unwrap();
            assert!((one.l2_norm() - 1.0).abs() < 1e-12);
        }
        let sp = space(1, 4);
        let lin = sp.project_l2(|p| p[0]).unwrap();
        for e in 0..4 {
            for (p, _) in sp.quadrature(e) {
                assert!((lin.eval(&p) - p[0]).abs() < 1e-12);
            }
        }
        let sp2 = space(2, 3);
        let aff = sp2.project_l2(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).unwrap();
        for e in 0..9 {
            for (p, _) in sp2.quadrature(e) {
                assert!((aff.eval(&p) - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let sp = space(1, 4);
        let r = sp.project_l2(|p| if p[0] > 0.5 { f64::NAN } else { 0.0 });
        assert!(matches!(r, Err(Error::NumericInput(_))));
    }

    #[test]
    fn zero_function_norms() {
        let n = DgFunction::zeros(space(2, 4)).broken_norms();
        assert_eq!((n.l2, n.broken_h1, n.jump_seminorm, n.v_h_norm), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_one_jumps_only_on_boundary() {
        let sp = space(1, 2);
        let one = sp.project_l2(|_| 1.0).unwrap();
        let n = one.broken_norms();
        assert!((n.l2 - 1.0).abs() < 1e-12);
        // Two boundary faces with h_e = 1/2 and unit trace.
        assert!((n.jump_seminorm.powi(2) - 4.0).abs() < 1e-12);
        for f in &sp.mesh.faces {
            if f.kind == FaceKind::Interior {
                assert!(one.jump_at(f, &f.origin).abs() < 1e-12);
            }
        }
        assert!((n.v_h_norm.powi(2) - n.broken_h1.powi(2) - n.jump_seminorm.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn left_half_indicator_jump_by_face_enumeration() {
        let sp = space(1, 2);
        let ind = sp.project_l2(|p| if p[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        // Faces at 0 (boundary, trace 1), 1/2 (jump 1), 1 (boundary, trace 0); h_e = 1/2.
        let traces = [1.0f64, 1.0, 0.0];
        let expected: f64 = traces.iter().map(|t| t * t / 0.5).sum();
        assert!((expected - 4.0).abs() < 1e-15);
        let n = ind.broken_norms();
        assert!((n.jump_seminorm.powi(2) - expected).abs() < 1e-12);
        assert!((n.broken_h1 - n.l2).abs() < 1e-12, "gradient part vanishes");
    }

    #[test]
    fn sine_projection_error_ratio() {
        // Oracle: 16-point Gauss per element for ||f - P_h f||.
        let hi = GaussLegendre::<f64>::new(16);
        let f = |x: f64| (std::f64::consts::PI * x).sin();
        let err = |m: usize| {
            let sp = space(1, m);
            let pf = sp.project_l2(|p| f(p[0])).unwrap();
            let mut acc = 0.0;
            for el in &sp.mesh.elements {
                let e = el.index;
                acc += hi.integrate(el.lower[0], el.lower[0] + el.extent, |x| {
                    let d = f(x) - sp.eval_in(&pf.coefficients, e, &[x, 0.0]);
                    d * d
                });
            }
            acc.sqrt()
        };
        let ratio = err(8) / err(16);
        assert!((3.8..=4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn h1_conforming_jumps_decrease() {
        let mut prev = f64::INFINITY;
        for m in [4usize, 8, 16, 32] {
            let sp = space(2, m);
            let v = sp
                .project_l2(|p| (std::f64::consts::PI * p[0]).sin() * p[1] * (1.0 - p[1]))
                .unwrap();
            let j = v.broken_norms().jump_seminorm;
            assert!(j < prev);
            prev = j;
        }
    }

    #[test]
    fn l2_distance_across_nested_meshes() {
        let coarse = space(1, 4).project_l2(|_| 0.0).unwrap();
        let fine = space(1, 16).project_l2(|_| 0.75).unwrap();
        assert!((coarse.l2_distance(&fine).unwrap() - 0.75).abs() < 1e-12);
        let a = space(2, 4).project_l2(|p| p[0] + p[1]).unwrap();
        let b = space(2, 8).project_l2(|p| p[0] + p[1]).unwrap();
        assert!(a.l2_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn binary_and_csv_dump() {
        let sp = space(2, 2);
        let v = sp.project_l2(|p| p[0] * p[1]).unwrap();
        let mut buf = Vec::new();
        v.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * sp.total_dofs());
        assert_eq!(&buf[..8], &v.coefficients[0].to_le_bytes());
        let back = DgFunction::read_binary(sp.clone(), &mut buf.as_slice()).unwrap();
        assert_eq!(back.coefficients, v.coefficients);
        let mut csv = Vec::new();
        v.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + sp.total_dofs());
        assert!(text.lines().nth(4).unwrap().starts_with("1,0,"));
    }

    #[test]
    fn works_in_single_precision() {
        let sp = Arc::new(DgSpace::<f32>::uniform(2, 4).unwrap());
        let v = sp.project_l2(|p| p[0]).unwrap();
        assert!((v.eval(&[0.3, 0.6]) - 0.3).abs() < 1e-5);
    }
}
