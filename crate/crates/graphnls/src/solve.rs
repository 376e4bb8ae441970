//! Sparse linear algebra specialized to the star-graph dof layout.
//!
//! Every matrix this crate assembles (stiffness, stiffness plus diagonal,
//! Crank-Nicolson system, Newton Jacobian) has the same "arrow + tridiagonal"
//! sparsity: a diagonal, one constant off-diagonal coupling consecutive
//! interior nodes of each edge, and the same off-diagonal coupling the vertex
//! to the first interior node of every edge.  Eliminating each edge from the
//! far (Dirichlet) end toward the vertex, with the vertex last, produces an
//! LDL^T factorization with exactly zero fill-in, so factor and solve are both
//! linear in the number of dofs.
//!
//! The factorization is the transpose-symmetric LDL^T (no conjugation), which
//! is exact for the complex-symmetric Crank-Nicolson matrices as well as for
//! real symmetric ones.

use num_complex::Complex64;
use num_traits::{Num, NumAssign};

use crate::error::{Error, Result};
use crate::graph::GraphGrid;

/// Scalar types the star solver works over.
pub trait Scalar: Copy + Num + NumAssign + From<f64> + std::fmt::Debug {
    /// Squared magnitude, used only for pivot breakdown detection.
    fn abs_sq(self) -> f64;
}

impl Scalar for f64 {
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

/// Symmetric matrix with the star sparsity pattern, stored as the diagonal
/// plus one scalar off-diagonal value shared by all couplings.
#[derive(Debug, Clone)]
pub struct StarMatrix<T> {
    n_edges: usize,
    /// Interior nodes per edge (M - 1).
    interior: usize,
    /// Diagonal in dof order (vertex first).
    pub diag: Vec<T>,
    /// The off-diagonal coupling value (vertex-to-first-interior and
    /// consecutive interiors alike).
    pub off: T,
}

impl<T: Scalar> StarMatrix<T> {
    /// A matrix shaped like `grid` with the given diagonal and coupling.
    pub fn new(grid: &GraphGrid, diag: Vec<T>, off: T) -> Self {
        assert_eq!(diag.len(), grid.n_dofs(), "diagonal length must match grid");
        Self {
            n_edges: grid.n_edges(),
            interior: grid.cells_per_edge() - 1,
            diag,
            off,
        }
    }

    /// Number of dofs.
    pub fn n(&self) -> usize {
        1 + self.n_edges * self.interior
    }

    fn edge_start(&self, e: usize) -> usize {
        1 + e * self.interior
    }

    /// y = A x.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n());
        let mut y: Vec<T> = (0..self.n()).map(|i| self.diag[i] * x[i]).collect();
        for e in 0..self.n_edges {
            let s = self.edge_start(e);
            y[0] += self.off * x[s];
            y[s] += self.off * x[0];
            for k in 1..self.interior {
                y[s + k] += self.off * x[s + k - 1];
                y[s + k - 1] += self.off * x[s + k];
            }
        }
        y
    }

    /// Quadratic form x^T A x (no conjugation; real output for real input).
    pub fn quadratic_form(&self, x: &[T]) -> T {
        let y = self.matvec(x);
        let mut acc = T::zero();
        for (a, b) in x.iter().zip(&y) {
            acc += *a * *b;
        }
        acc
    }

    /// LDL^T factorization with the far-to-near, vertex-last elimination
    /// order.  Fails only on (near-)zero pivots, which cannot occur for the
    /// positive-definite and complex-shifted matrices this crate assembles but
    /// can for an indefinite Newton Jacobian passing exactly through zero.
    pub fn ldl(&self) -> Result<StarFactor<T>> {
        let mut d = self.diag.clone();
        let off = self.off;
        let mut vertex = d[0];
        for e in 0..self.n_edges {
            let s = self.edge_start(e);
            for k in (1..self.interior).rev() {
                let piv = d[s + k];
                if piv.abs_sq() < f64::MIN_POSITIVE {
                    return Err(Error::SingularMatrix { index: s + k });
                }
                let upd = off * off / piv;
                d[s + k - 1] -= upd;
            }
            let piv = d[s];
            if piv.abs_sq() < f64::MIN_POSITIVE {
                return Err(Error::SingularMatrix { index: s });
            }
            vertex -= off * off / piv;
        }
        if vertex.abs_sq() < f64::MIN_POSITIVE {
            return Err(Error::SingularMatrix { index: 0 });
        }
        d[0] = vertex;
        Ok(StarFactor {
            n_edges: self.n_edges,
            interior: self.interior,
            d,
            off,
        })
    }
}

impl StarMatrix<f64> {
    /// y = A x for a complex vector over a real matrix.
    pub fn matvec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n());
        let mut y: Vec<Complex64> = (0..self.n()).map(|i| x[i] * self.diag[i]).collect();
        for e in 0..self.n_edges {
            let s = self.edge_start(e);
            y[0] += x[s] * self.off;
            y[s] += x[0] * self.off;
            for k in 1..self.interior {
                y[s + k] += x[s + k - 1] * self.off;
                y[s + k - 1] += x[s + k] * self.off;
            }
        }
        y
    }

    /// The same sparsity with every entry scaled by `i c` and added to a real
    /// diagonal: builds `diag(d) + i c K`, the shape of the Crank-Nicolson
    /// system matrices.
    pub fn complexified(&self, d: &[f64], c: f64) -> StarMatrix<Complex64> {
        assert_eq!(d.len(), self.n());
        let diag = self
            .diag
            .iter()
            .zip(d)
            .map(|(&k, &m)| Complex64::new(m, c * k))
            .collect();
        StarMatrix {
            n_edges: self.n_edges,
            interior: self.interior,
            diag,
            off: Complex64::new(0.0, c * self.off),
        }
    }
}

/// The LDL^T factorization of a [`StarMatrix`].
#[derive(Debug, Clone)]
pub struct StarFactor<T> {
    n_edges: usize,
    interior: usize,
    /// Pivots in dof order (vertex pivot at index 0).
    d: Vec<T>,
    off: T,
}

impl<T: Scalar> StarFactor<T> {
    fn edge_start(&self, e: usize) -> usize {
        1 + e * self.interior
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), 1 + self.n_edges * self.interior);
        let off = self.off;
        // forward substitution in elimination order (far -> near, vertex last)
        for e in 0..self.n_edges {
            let s = self.edge_start(e);
            for k in (1..self.interior).rev() {
                let l = off / self.d[s + k];
                let z = b[s + k];
                b[s + k - 1] -= l * z;
            }
            let l = off / self.d[s];
            let z = b[s];
            b[0] -= l * z;
        }
        // diagonal
        for (x, dv) in b.iter_mut().zip(&self.d) {
            *x = *x / *dv;
        }
        // back substitution (vertex first, then near -> far along each edge)
        for e in 0..self.n_edges {
            let s = self.edge_start(e);
            let l = off / self.d[s];
            let v = b[0];
            b[s] -= l * v;
            for k in 1..self.interior {
                let l = off / self.d[s + k];
                let prev = b[s + k - 1];
                b[s + k] -= l * prev;
            }
        }
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

impl StarFactor<f64> {
    /// All pivots strictly positive, i.e. the factored matrix is positive
    /// definite (Sylvester's criterion along the elimination order).
    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&p| p > 0.0)
    }
}
