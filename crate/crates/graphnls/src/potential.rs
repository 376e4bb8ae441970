//! External potentials V on the star graph and their grid quadrature.
//!
//! The discrete quadratic form needs weights w_{e,j} with
//! `sum_{e,j} w_{e,j} |v_{e,j}|^2 ~ (V v, v)_2`.  The weight of node `j` is the
//! exact integral of V over the node's dual cell `[x_j - h/2, x_j + h/2]`
//! intersected with `[0, L]`.  For the inverse-power family the antiderivative
//! `-beta x^{1-alpha} / (1-alpha)` integrates the `x -> 0` singularity
//! analytically, so the singular cell is never point-sampled and the weights
//! telescope to the exact integral of V over the whole edge.

use crate::error::{Error, Result};
use crate::graph::GraphGrid;

/// Decaying, non-positive external potential, identical on every edge unless
/// tabulated per edge.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// V = 0.
    Zero,
    /// V(x) = -beta * x^(-alpha) with beta > 0 and 0 < alpha < 1.
    InversePower { beta: f64, alpha: f64 },
    /// Sampled values (x, V(x)), piecewise-linearly interpolated.  One shared
    /// table applies to every edge; otherwise supply one table per edge.
    Tabulated { tables: Vec<Vec<(f64, f64)>> },
}

impl Potential {
    /// Validated inverse-power constructor: beta > 0, alpha in (0, 1).
    pub fn inverse_power(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "inverse-power potential needs beta > 0, got {beta}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse-power potential needs alpha in (0, 1), got {alpha}"
            )));
        }
        Ok(Self::InversePower { beta, alpha })
    }

    /// Validated tabulated constructor.  Each table must start at x = 0, have
    /// strictly increasing x, at least two samples, and values <= 0 everywhere
    /// (an attractive potential; the positivity argument of the solver relies
    /// on this, so violations are rejected at load time).
    pub fn tabulated(tables: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::TabulatedData("no tables supplied".into()));
        }
        for (e, t) in tables.iter().enumerate() {
            if t.len() < 2 {
                return Err(Error::TabulatedData(format!(
                    "edge {e}: table needs at least two samples, got {}",
                    t.len()
                )));
            }
            if t[0].0.abs() > 1e-12 {
                return Err(Error::TabulatedData(format!(
                    "edge {e}: first sample must sit at x = 0, got x = {}",
                    t[0].0
                )));
            }
            for w in t.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::TabulatedData(format!(
                        "edge {e}: x values must be strictly increasing ({} then {})",
                        w[0].0, w[1].0
                    )));
                }
            }
            for &(x, v) in t {
                if !x.is_finite() || !v.is_finite() {
                    return Err(Error::TabulatedData(format!(
                        "edge {e}: non-finite sample ({x}, {v})"
                    )));
                }
                if v > 0.0 {
                    return Err(Error::TabulatedData(format!(
                        "edge {e}: potential value {v} at x = {x} is positive; \
                         an admissible potential is <= 0 everywhere"
                    )));
                }
            }
        }
        Ok(Self::Tabulated { tables })
    }

    /// Parses one two-column text table: `x  V(x)` per line, `#` comments and
    /// blank lines ignored.
    pub fn parse_table(text: &str) -> Result<Vec<(f64, f64)>> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64> {
                tok.ok_or_else(|| {
                    Error::TabulatedData(format!("line {}: expected two columns", ln + 1))
                })?
                .parse::<f64>()
                .map_err(|_| Error::TabulatedData(format!("line {}: not a number", ln + 1)))
            };
            let x = parse(it.next())?;
            let v = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::TabulatedData(format!(
                    "line {}: expected exactly two columns",
                    ln + 1
                )));
            }
            rows.push((x, v));
        }
        Ok(rows)
    }

    /// Whether all edges share the same potential.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Zero | Self::InversePower { .. } => true,
            Self::Tabulated { tables } => tables.len() == 1,
        }
    }

    /// Whether the virial weight x V'(x) can be produced (needs a derivative;
    /// tabulated data has none).
    pub fn supports_xvprime(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    fn table_for_edge<'a>(tables: &'a [Vec<(f64, f64)>], e: usize) -> &'a [(f64, f64)] {
        if tables.len() == 1 {
            &tables[0]
        } else {
            &tables[e]
        }
    }

    /// Pointwise value V_e(x) for x > 0 (diagnostics only; the quadrature
    /// never samples pointwise).  Tabulated values are interpolated and the
    /// table must cover x.
    fn value_at(&self, e: usize, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::InversePower { beta, alpha } => -beta * x.powf(-alpha),
            Self::Tabulated { tables } => {
                let t = Self::table_for_edge(tables, e);
                match t.binary_search_by(|probe| probe.0.partial_cmp(&x).unwrap()) {
                    Ok(i) => t[i].1,
                    Err(0) => t[0].1,
                    Err(i) if i == t.len() => t[t.len() - 1].1,
                    Err(i) => {
                        let (x0, v0) = t[i - 1];
                        let (x1, v1) = t[i];
                        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
                    }
                }
            }
        }
    }

    /// Exact integral of V_e over [lo, hi] (piecewise-linear interpolant for
    /// tabulated data, closed-form antiderivative otherwise).
    fn integral(&self, e: usize, lo: f64, hi: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::InversePower { beta, alpha } => {
                let anti = |x: f64| -beta * x.powf(1.0 - alpha) / (1.0 - alpha);
                anti(hi) - anti(lo)
            }
            Self::Tabulated { tables } => {
                let t = Self::table_for_edge(tables, e);
                let mut acc = 0.0;
                for w in t.windows(2) {
                    let (x0, v0) = w[0];
                    let (x1, v1) = w[1];
                    let a = lo.max(x0);
                    let b = hi.min(x1);
                    if b > a {
                        let va = v0 + (v1 - v0) * (a - x0) / (x1 - x0);
                        let vb = v0 + (v1 - v0) * (b - x0) / (x1 - x0);
                        acc += 0.5 * (va + vb) * (b - a);
                    }
                }
                acc
            }
        }
    }

    /// Integral of x V'_e(x) over [lo, hi]; only defined off tabulated data.
    /// For the inverse-power family x V'(x) = alpha beta x^(-alpha) = -alpha V(x),
    /// integrated with its own closed-form antiderivative.
    fn xvprime_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        match self {
            Self::Zero => Ok(0.0),
            Self::InversePower { beta, alpha } => {
                let anti = |x: f64| alpha * beta * x.powf(1.0 - alpha) / (1.0 - alpha);
                Ok(anti(hi) - anti(lo))
            }
            Self::Tabulated { .. } => Err(Error::UnsupportedPotential(
                "tabulated potentials carry no derivative data for the virial weight x V'(x)",
            )),
        }
    }

    /// Tabulated data must cover the whole truncated edge [0, L].
    fn check_coverage(&self, grid: &GraphGrid) -> Result<()> {
        if let Self::Tabulated { tables } = self {
            let want = if tables.len() == 1 { 1 } else { grid.n_edges() };
            if tables.len() != want {
                return Err(Error::TabulatedData(format!(
                    "{} tables for {} edges (supply one shared table or one per edge)",
                    tables.len(),
                    grid.n_edges()
                )));
            }
            for (e, t) in tables.iter().enumerate() {
                let last = t[t.len() - 1].0;
                if last < grid.edge_length() {
                    return Err(Error::TabulatedData(format!(
                        "edge {e}: table ends at x = {last} but the edge extends to {}",
                        grid.edge_length()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-edge dual-cell integrals of V, one value per node j = 0..M
    /// (including the Dirichlet node, whose weight never multiplies a dof but
    /// completes the telescoping sum to the exact integral of V over [0, L]).
    pub fn cell_integrals(&self, grid: &GraphGrid) -> Result<Vec<Vec<f64>>> {
        self.check_coverage(grid)?;
        let h = grid.spacing();
        let m = grid.cells_per_edge();
        let mut out = Vec::with_capacity(grid.n_edges());
        for e in 0..grid.n_edges() {
            let mut w = Vec::with_capacity(m + 1);
            for j in 0..=m {
                let x = grid.node_x(j);
                let lo = (x - 0.5 * h).max(0.0);
                let hi = (x + 0.5 * h).min(grid.edge_length());
                w.push(self.integral(e, lo, hi));
            }
            out.push(w);
        }
        Ok(out)
    }

    /// Per-edge dual-cell integrals of the virial weight x V'(x), same layout
    /// as [`Potential::cell_integrals`].
    pub fn xvprime_cell_integrals(&self, grid: &GraphGrid) -> Result<Vec<Vec<f64>>> {
        self.check_coverage(grid)?;
        let h = grid.spacing();
        let m = grid.cells_per_edge();
        let mut out = Vec::with_capacity(grid.n_edges());
        for e in 0..grid.n_edges() {
            let _ = e;
            let mut w = Vec::with_capacity(m + 1);
            for j in 0..=m {
                let x = grid.node_x(j);
                let lo = (x - 0.5 * h).max(0.0);
                let hi = (x + 0.5 * h).min(grid.edge_length());
                w.push(self.xvprime_integral(lo, hi)?);
            }
            out.push(w);
        }
        Ok(out)
    }

    /// Diagnostic report on the standing assumptions: decay along each edge,
    /// sign violations, and availability of the virial weight.
    pub fn check_assumptions(&self, grid: &GraphGrid) -> Result<AssumptionReport> {
        self.check_coverage(grid)?;
        let m = grid.cells_per_edge();
        let tail_start = (0.9 * m as f64) as usize;
        let mut tail_max = Vec::with_capacity(grid.n_edges());
        let mut sign_violations = 0usize;
        for e in 0..grid.n_edges() {
            let mut tmax = f64::NEG_INFINITY;
            for j in 1..=m {
                let v = self.value_at(e, grid.node_x(j));
                if v > 0.0 {
                    sign_violations += 1;
                }
                if j >= tail_start {
                    tmax = tmax.max(v);
                }
            }
            tail_max.push(tmax);
        }
        Ok(AssumptionReport {
            tail_max,
            sign_violations,
            xvprime_available: self.supports_xvprime(),
        })
    }
}

/// Outcome of [`Potential::check_assumptions`].
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// Max of V over the last 10% of each edge (should be small and <= 0 for
    /// a decaying attractive potential).
    pub tail_max: Vec<f64>,
    /// Number of sampled nodes where V > 0.
    pub sign_violations: usize,
    /// Whether the virial weight x V'(x) can be produced.
    pub xvprime_available: bool,
}

impl AssumptionReport {
    /// No sign violations anywhere.
    pub fn ok(&self) -> bool {
        self.sign_violations == 0
    }
}
