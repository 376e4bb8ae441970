//! Star-graph discretization: grid geometry, sampled functions, and the
//! inner products / norms / moments every other module consumes.
//!
//! The graph is a star of `n_edges` half-lines glued at a single vertex.  Each
//! edge is truncated at `edge_length` and carries `cells_per_edge` uniform
//! cells; the outer endpoint (node `M`) holds a homogeneous Dirichlet
//! truncation condition and is never stored.  Continuity at the vertex is
//! structural: all edges share one stored vertex value.
//!
//! Quadrature convention: trapezoidal rule on nodes (equivalently, P1 finite
//! elements with a lumped mass matrix) and forward differences on cells, so
//! the discrete quadratic form assembled in [`crate::operator`] is exactly the
//! sum of the terms computed here.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Geometry of the truncated, discretized star graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphGrid {
    n_edges: usize,
    edge_length: f64,
    cells_per_edge: usize,
}

impl GraphGrid {
    /// Builds a star-graph grid. A star needs at least two edges; use
    /// `n_edges = 2` for the line case.
    pub fn new(n_edges: usize, edge_length: f64, cells_per_edge: usize) -> Result<Self> {
        if n_edges < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_edges must be >= 2 (a star graph), got {n_edges}"
            )));
        }
        Self::with_edge_count(n_edges, edge_length, cells_per_edge)
    }

    /// A single truncated half-line: the equivariant reduction of an
    /// edge-symmetric star problem solves on one edge with the vertex
    /// coupling divided by the edge count.
    pub fn single_edge(edge_length: f64, cells_per_edge: usize) -> Result<Self> {
        Self::with_edge_count(1, edge_length, cells_per_edge)
    }

    /// Internal constructor without the two-edge floor of [`GraphGrid::new`].
    pub(crate) fn with_edge_count(
        n_edges: usize,
        edge_length: f64,
        cells_per_edge: usize,
    ) -> Result<Self> {
        if n_edges == 0 {
            return Err(Error::InvalidParameter("n_edges must be positive".into()));
        }
        if !(edge_length > 0.0) || !edge_length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "edge_length must be positive and finite, got {edge_length}"
            )));
        }
        if cells_per_edge < 4 {
            return Err(Error::InvalidParameter(format!(
                "cells_per_edge must be >= 4, got {cells_per_edge}"
            )));
        }
        Ok(Self {
            n_edges,
            edge_length,
            cells_per_edge,
        })
    }

    /// Number of edges N.
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Truncation length L of each edge.
    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Number of cells M per edge.
    pub fn cells_per_edge(&self) -> usize {
        self.cells_per_edge
    }

    /// Grid spacing h = L / M.
    pub fn spacing(&self) -> f64 {
        self.edge_length / self.cells_per_edge as f64
    }

    /// Coordinate of node `j` (same on every edge).
    pub fn node_x(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    /// Number of stored degrees of freedom: one shared vertex value plus
    /// `M - 1` interior nodes per edge (the Dirichlet node is eliminated).
    pub fn n_dofs(&self) -> usize {
        1 + self.n_edges * (self.cells_per_edge - 1)
    }

    /// Index into the flat dof vector for interior node `j` (1..M-1) of edge `e`.
    #[inline]
    pub(crate) fn dof(&self, edge: usize, j: usize) -> usize {
        debug_assert!(edge < self.n_edges);
        debug_assert!(j >= 1 && j < self.cells_per_edge);
        1 + edge * (self.cells_per_edge - 1) + (j - 1)
    }

    /// Lumped (trapezoidal) mass of the shared vertex node: N * h / 2.
    pub fn vertex_mass(&self) -> f64 {
        self.n_edges as f64 * self.spacing() / 2.0
    }
}

/// A sampled complex-valued function on a [`GraphGrid`].
///
/// Storage layout: index 0 is the shared vertex value, followed by the
/// interior nodes `j = 1..M-1` of edge 0, edge 1, and so on.  The value at
/// node `M` of every edge is identically zero (Dirichlet truncation) and is
/// not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunction {
    grid: GraphGrid,
    values: Vec<Complex64>,
}

impl GraphFunction {
    /// The identically-zero function.
    pub fn zero(grid: GraphGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::ZERO; grid.n_dofs()],
        }
    }

    /// Samples a complex field `f(edge, x)` at every stored node. The vertex
    /// value is taken from `f(0, 0.0)`; for continuity the caller must make
    /// `f(e, 0.0)` edge-independent.
    pub fn from_fn(grid: GraphGrid, mut f: impl FnMut(usize, f64) -> Complex64) -> Self {
        let mut values = vec![Complex64::ZERO; grid.n_dofs()];
        values[0] = f(0, 0.0);
        for e in 0..grid.n_edges() {
            for j in 1..grid.cells_per_edge() {
                values[grid.dof(e, j)] = f(e, grid.node_x(j));
            }
        }
        Self { grid, values }
    }

    /// Samples a real field; every imaginary part is exactly zero.
    pub fn from_real_fn(grid: GraphGrid, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self::from_fn(grid, |e, x| Complex64::new(f(e, x), 0.0))
    }

    /// Wraps an existing dof vector (layout as documented on the type).
    pub fn from_values(grid: GraphGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_dofs() {
            return Err(Error::InvalidParameter(format!(
                "dof vector has length {}, grid needs {}",
                values.len(),
                grid.n_dofs()
            )));
        }
        Ok(Self { grid, values })
    }

    /// The grid this function is sampled on.
    pub fn grid(&self) -> GraphGrid {
        self.grid
    }

    /// Flat dof vector (vertex first, then per-edge interior nodes).
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Mutable access to the flat dof vector.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// The shared vertex value v(0).
    pub fn vertex_value(&self) -> Complex64 {
        self.values[0]
    }

    /// Value at node `j` of edge `e`; `j = 0` is the vertex and `j = M`
    /// returns exactly zero (Dirichlet truncation).
    pub fn node_value(&self, edge: usize, j: usize) -> Complex64 {
        let m = self.grid.cells_per_edge();
        assert!(edge < self.grid.n_edges() && j <= m, "node index out of range");
        if j == 0 {
            self.values[0]
        } else if j == m {
            Complex64::ZERO
        } else {
            self.values[self.grid.dof(edge, j)]
        }
    }

    /// Piecewise-linear evaluation at coordinate `x >= 0` on edge `e`;
    /// zero beyond the truncated domain.
    pub fn eval(&self, edge: usize, x: f64) -> Complex64 {
        let h = self.grid.spacing();
        if x >= self.grid.edge_length() {
            return Complex64::ZERO;
        }
        let s = (x / h).max(0.0);
        let k = (s.floor() as usize).min(self.grid.cells_per_edge() - 1);
        let frac = s - k as f64;
        let a = self.node_value(edge, k);
        let b = self.node_value(edge, k + 1);
        a + (b - a).scale(frac)
    }

    /// True when every stored node has a bit-exact zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Checks that `other` lives on the same grid.
    pub fn same_grid(&self, other: &GraphFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Multiplies every node by a complex scalar.
    pub fn scale_by(&mut self, c: Complex64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Node-wise modulus |v|; the result is real.
    pub fn modulus(&self) -> GraphFunction {
        let values = self
            .values
            .iter()
            .map(|v| Complex64::new(v.norm(), 0.0))
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Trapezoidal L2 pairing: sum_e of the integral of u_e * conj(v_e);
    /// linear in `self`, conjugate-linear in `v`.
    pub fn inner_l2(&self, v: &GraphFunction) -> Result<Complex64> {
        self.same_grid(v)?;
        let h = self.grid.spacing();
        let mut acc = Complex64::ZERO;
        for (a, b) in self.values.iter().zip(&v.values).skip(1) {
            acc += a * b.conj();
        }
        acc *= h;
        acc += self.values[0] * v.values[0].conj() * self.grid.vertex_mass();
        Ok(acc)
    }

    /// Squared L2 norm (trapezoidal).
    pub fn norm_l2_sq(&self) -> f64 {
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for v in self.values.iter().skip(1) {
            acc += v.norm_sqr();
        }
        acc * h + self.values[0].norm_sqr() * self.grid.vertex_mass()
    }

    /// L^q norm by the trapezoidal rule; requires q >= 1.
    pub fn norm_lp(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::InvalidParameter(format!("norm_lp needs q >= 1, got {q}")));
        }
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for v in self.values.iter().skip(1) {
            acc += v.norm().powf(q);
        }
        acc *= h;
        acc += self.values[0].norm().powf(q) * self.grid.vertex_mass();
        Ok(acc.powf(1.0 / q))
    }

    /// Integral of |u|^q without the root (the form the functionals use).
    pub fn lp_power_sum(&self, q: f64) -> f64 {
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for v in self.values.iter().skip(1) {
            acc += v.norm().powf(q);
        }
        acc * h + self.values[0].norm().powf(q) * self.grid.vertex_mass()
    }

    /// Forward differences (v_{j+1} - v_j)/h on every cell of every edge,
    /// including the last cell against the Dirichlet zero.  These are exactly
    /// the gradient terms of the assembled quadratic form.
    pub fn derivative(&self) -> Vec<Vec<Complex64>> {
        let m = self.grid.cells_per_edge();
        let h = self.grid.spacing();
        (0..self.grid.n_edges())
            .map(|e| {
                (0..m)
                    .map(|j| (self.node_value(e, j + 1) - self.node_value(e, j)).unscale(h))
                    .collect()
            })
            .collect()
    }

    /// Squared L2 norm of the forward-difference derivative.
    pub fn grad_norm_sq(&self) -> f64 {
        let m = self.grid.cells_per_edge();
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for e in 0..self.grid.n_edges() {
            let mut prev = self.values[0];
            for j in 1..m {
                let cur = self.values[self.grid.dof(e, j)];
                acc += (cur - prev).norm_sqr();
                prev = cur;
            }
            acc += prev.norm_sqr(); // cell M-1 -> Dirichlet zero
        }
        acc / h
    }

    /// H1 pairing: L2 pairing plus the pairing of forward differences.
    pub fn inner_h1(&self, v: &GraphFunction) -> Result<Complex64> {
        self.same_grid(v)?;
        let m = self.grid.cells_per_edge();
        let h = self.grid.spacing();
        let mut grad = Complex64::ZERO;
        for e in 0..self.grid.n_edges() {
            let mut pu = self.values[0];
            let mut pv = v.values[0];
            for j in 1..m {
                let cu = self.values[self.grid.dof(e, j)];
                let cv = v.values[self.grid.dof(e, j)];
                grad += (cu - pu) * (cv - pv).conj();
                pu = cu;
                pv = cv;
            }
            grad += pu * pv.conj();
        }
        Ok(self.inner_l2(v)? + grad.unscale(h))
    }

    /// Squared H1 norm: ||u||_2^2 + ||u'||_2^2.
    pub fn norm_h1_sq(&self) -> f64 {
        self.norm_l2_sq() + self.grad_norm_sq()
    }

    /// Second moment sum_e integral of x^2 |u_e|^2 (trapezoidal; the vertex
    /// contributes nothing since x = 0 there).
    pub fn x_weighted_norm_sq(&self) -> f64 {
        let m = self.grid.cells_per_edge();
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for e in 0..self.grid.n_edges() {
            for j in 1..m {
                let x = j as f64 * h;
                acc += x * x * self.values[self.grid.dof(e, j)].norm_sqr();
            }
        }
        acc * h
    }

    /// Im of sum_e integral of x * conj(u) * du/dx, with the cell-midpoint x
    /// and the forward cell difference (the momentum-type form behind the
    /// virial identity; multiply by 4 for df/dt).
    pub fn momentum_form(&self) -> f64 {
        let m = self.grid.cells_per_edge();
        let h = self.grid.spacing();
        let mut acc = Complex64::ZERO;
        for e in 0..self.grid.n_edges() {
            let mut prev = self.values[0];
            for j in 1..=m {
                let cur = if j == m {
                    Complex64::ZERO
                } else {
                    self.values[self.grid.dof(e, j)]
                };
                let x_mid = (j as f64 - 0.5) * h;
                acc += (prev + cur).conj() * (cur - prev) * x_mid;
                prev = cur;
            }
        }
        // each cell contributes x_mid * conj(u_j + u_{j+1})/2 * (u_{j+1}-u_j)
        acc.im / 2.0
    }
}
