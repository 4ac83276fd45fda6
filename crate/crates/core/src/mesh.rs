//! Uniform Cartesian meshes of `(0,1)` and `(0,1)^2`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Spatial point; the second coordinate is ignored in 1-D.
pub type Point<T> = [T; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Element<T> {
    pub index: usize,
    /// Lower-left corner.
    pub lower: Point<T>,
    /// Edge length `h_T`.
    pub extent: T,
}

#[derive(Debug, Clone)]
pub struct Face<T> {
    pub kind: FaceKind,
    /// `T_e^+` for interior faces (the smaller element index), `T_e` on the boundary.
    pub plus_element: usize,
    pub minus_element: Option<usize>,
    /// Length of the edge in 2-D, 1 for the point faces of 1-D meshes.
    pub measure: T,
    /// Unit normal pointing out of `plus_element`.
    pub normal: Point<T>,
    pub h_e: T,
    /// Axis the normal is aligned with.
    pub axis: usize,
    /// Start point of the face; in 2-D the face runs along the other axis for `measure`.
    pub origin: Point<T>,
}

#[derive(Debug, Clone)]
pub struct CartesianMesh<T> {
    pub dim: usize,
    pub cells_per_axis: usize,
    pub elements: Vec<Element<T>>,
    pub faces: Vec<Face<T>>,
    /// Face indices of every element (`2 * dim` each).
    pub element_faces: Vec<Vec<usize>>,
}

impl<T: Scalar> CartesianMesh<T> {
    pub fn uniform(dim: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("cells per axis must be positive"));
        }
        match dim {
            1 => Ok(Self::build_1d(m)),
            2 => Ok(Self::build_2d(m)),
            _ => Err(Error::invalid(format!("dimension {dim} not supported (1 or 2)"))),
        }
    }

    fn coord(i: usize, m: usize) -> T {
        T::from_usize_lossy(i) / T::from_usize_lossy(m)
    }

    fn build_1d(m: usize) -> Self {
        let h = T::one() / T::from_usize_lossy(m);
        let elements = (0..m)
            .map(|i| Element {
                index: i,
                lower: [Self::coord(i, m), T::zero()],
                extent: h,
            })
            .collect();
        let mut faces = Vec::with_capacity(m + 1);
        let mut element_faces = vec![Vec::with_capacity(2); m];
        let one = T::one();
        let mut push = |f: Face<T>, faces: &mut Vec<Face<T>>| {
            let id = faces.len();
            element_faces[f.plus_element].push(id);
            if let Some(e) = f.minus_element {
                element_faces[e].push(id);
            }
            faces.push(f);
        };
        push(
            Face {
                kind: FaceKind::Boundary,
                plus_element: 0,
                minus_element: None,
                measure: one,
                normal: [-one, T::zero()],
                h_e: h,
                axis: 0,
                origin: [T::zero(), T::zero()],
            },
            &mut faces,
        );
        for i in 1..m {
            push(
                Face {
                    kind: FaceKind::Interior,
                    plus_element: i - 1,
                    minus_element: Some(i),
                    measure: one,
                    normal: [one, T::zero()],
                    h_e: h,
                    axis: 0,
                    origin: [Self::coord(i, m), T::zero()],
                },
                &mut faces,
            );
        }
        push(
            Face {
                kind: FaceKind::Boundary,
                plus_element: m - 1,
                minus_element: None,
                measure: one,
                normal: [one, T::zero()],
                h_e: h,
                axis: 0,
                origin: [one, T::zero()],
            },
            &mut faces,
        );
        Self {
            dim: 1,
            cells_per_axis: m,
            elements,
            faces,
            element_faces,
        }
    }

    fn build_2d(m: usize) -> Self {
        let h = T::one() / T::from_usize_lossy(m);
        let one = T::one();
        let zero = T::zero();
        let idx = |i: usize, j: usize| i + m * j;
        let elements = (0..m * m)
            .map(|k| Element {
                index: k,
                lower: [Self::coord(k % m, m), Self::coord(k / m, m)],
                extent: h,
            })
            .collect();
        let mut faces: Vec<Face<T>> = Vec::with_capacity(2 * m * (m + 1));
        let mut element_faces = vec![Vec::with_capacity(4); m * m];
        let mut push = |f: Face<T>| {
            let id = faces.len();
            element_faces[f.plus_element].push(id);
            if let Some(e) = f.minus_element {
                element_faces[e].push(id);
            }
            faces.push(f);
        };
        // Faces normal to x: vertical lines x = i/m.
        for j in 0..m {
            let y0 = Self::coord(j, m);
            for i in 0..=m {
                let x = Self::coord(i, m);
                let face = if i == 0 {
                    Face {
                        kind: FaceKind::Boundary,
                        plus_element: idx(0, j),
                        minus_element: None,
                        measure: h,
                        normal: [-one, zero],
                        h_e: h,
                        axis: 0,
                        origin: [x, y0],
                    }
                } else if i == m {
                    Face {
                        kind: FaceKind::Boundary,
                        plus_element: idx(m - 1, j),
                        minus_element: None,
                        measure: h,
                        normal: [one, zero],
                        h_e: h,
                        axis: 0,
                        origin: [x, y0],
                    }
                } else {
                    Face {
                        kind: FaceKind::Interior,
                        plus_element: idx(i - 1, j),
                        minus_element: Some(idx(i, j)),
                        measure: h,
                        normal: [one, zero],
                        h_e: h,
                        axis: 0,
                        origin: [x, y0],
                    }
                };
                push(face);
            }
        }
        // Faces normal to y: horizontal lines y = j/m.
        for j in 0..=m {
            let y = Self::coord(j, m);
            for i in 0..m {
                let x0 = Self::coord(i, m);
                let face = if j == 0 {
                    Face {
                        kind: FaceKind::Boundary,
                        plus_element: idx(i, 0),
                        minus_element: None,
                        measure: h,
                        normal: [zero, -one],
                        h_e: h,
                        axis: 1,
                        origin: [x0, y],
                    }
                } else if j == m {
                    Face {
                        kind: FaceKind::Boundary,
                        plus_element: idx(i, m - 1),
                        minus_element: None,
                        measure: h,
                        normal: [zero, one],
                        h_e: h,
                        axis: 1,
                        origin: [x0, y],
                    }
                } else {
                    Face {
                        kind: FaceKind::Interior,
                        plus_element: idx(i, j - 1),
                        minus_element: Some(idx(i, j)),
                        measure: h,
                        normal: [zero, one],
                        h_e: h,
                        axis: 1,
                        origin: [x0, y],
                    }
                };
                push(face);
            }
        }
        Self {
            dim: 2,
            cells_per_axis: m,
            elements,
            faces,
            element_faces,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn h(&self) -> T {
        T::one() / T::from_usize_lossy(self.cells_per_axis)
    }

    /// Maximal number of faces per element (`n_0`).
    pub fn faces_per_element(&self) -> usize {
        2 * self.dim
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces
            .iter()
            .filter(|f| f.kind == FaceKind::Interior)
            .count()
    }

    pub fn boundary_face_count(&self) -> usize {
        self.faces.len() - self.interior_face_count()
    }

    /// Element containing `p`; points on shared faces go to the upper cell,
    /// points on the outer boundary are clamped inside.
    pub fn locate(&self, p: &Point<T>) -> usize {
        let m = self.cells_per_axis;
        let cell = |x: T| -> usize {
            let c = (x * T::from_usize_lossy(m)).floor();
            if c < T::zero() {
                0
            } else {
                c.to_usize().unwrap_or(m - 1).min(m - 1)
            }
        };
        match self.dim {
            1 => cell(p[0]),
            _ => cell(p[0]) + m * cell(p[1]),
        }
    }

    /// Point on face `f` at reference parameter `s ∈ [-1, 1]` (ignored in 1-D).
    pub fn face_point(&self, f: &Face<T>, s: T) -> Point<T> {
        if self.dim == 1 {
            return f.origin;
        }
        let t = (s + T::one()) * T::lit(0.5) * f.measure;
        let mut p = f.origin;
        p[1 - f.axis] += t;
        p
    }
}
