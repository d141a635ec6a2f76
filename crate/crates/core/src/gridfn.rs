//! Scalar functions of the state magnitude `r` on `[0, r_max]`, stored as
//! nodal values on an equispaced grid and interpolated linearly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Equispaced nodes `r_k = k * h` on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    r_max: f64,
    n_nodes: usize,
}

impl Grid {
    pub fn new(r_max: f64, n_nodes: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Domain(format!("grid r_max must be positive, got {r_max}")));
        }
        if n_nodes < 3 {
            return Err(Error::Domain(format!("grid needs at least 3 nodes, got {n_nodes}")));
        }
        Ok(Grid { r_max, n_nodes })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / (self.n_nodes - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.n_nodes {
            self.r_max
        } else {
            k as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|k| self.node(k)).collect()
    }

    /// Trapezoidal (lumped) quadrature weights: `h` inside, `h/2` at the ends.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_nodes];
        w[0] = 0.5 * h;
        w[self.n_nodes - 1] = 0.5 * h;
        w
    }

    /// Linear ("hat") basis weights at `r`. Values above `r_max` are
    /// attributed entirely to the last node, matching the clamped
    /// evaluation.
    pub fn hat(&self, r: f64) -> Result<Hat> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("r = {r} is negative or not a number")));
        }
        let last = self.n_nodes - 1;
        if r >= self.r_max {
            return Ok(Hat {
                lo: last,
                w_lo: 1.0,
                hi: last,
                w_hi: 0.0,
            });
        }
        let h = self.spacing();
        let k = ((r / h).floor() as usize).min(last - 1);
        let frac = ((r - self.node(k)) / h).clamp(0.0, 1.0);
        Ok(Hat {
            lo: k,
            w_lo: 1.0 - frac,
            hi: k + 1,
            w_hi: frac,
        })
    }

    /// Accumulates `∫ q(t) φ_k(r(t)) dt` for every node `k` along a path
    /// given as samples `(t, r, q)`, with `r` and `q` linear in `t` between
    /// samples. Sub-intervals are split where `r` crosses a node so each
    /// piece integrates a product of linear functions exactly.
    pub fn scatter_path(&self, samples: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.n_nodes];
        if samples.len() < 2 {
            return Err(Error::Invalid("path needs at least two samples".into()));
        }
        let h = self.spacing();
        let last = self.n_nodes - 1;
        let mut cuts: Vec<f64> = Vec::new();
        for w in samples.windows(2) {
            let (ta, ra, qa) = w[0];
            let (tb, rb, qb) = w[1];
            if !(ra >= 0.0 && rb >= 0.0) {
                return Err(Error::Domain(format!("negative magnitude on path at t = {ta}")));
            }
            let dt = tb - ta;
            if dt == 0.0 {
                continue;
            }
            cuts.clear();
            cuts.push(0.0);
            let (lo, hi) = if ra <= rb { (ra, rb) } else { (rb, ra) };
            if hi > lo {
                let lo_clamped = lo.min(self.r_max);
                let hi_clamped = hi.min(self.r_max);
                let k_start = (lo_clamped / h).floor() as usize + 1;
                let k_end = ((hi_clamped / h).ceil() as usize).min(last);
                for k in k_start..=k_end {
                    let rk = self.node(k);
                    if rk > lo && rk < hi {
                        cuts.push((rk - ra) / (rb - ra));
                    }
                }
            }
            cuts.push(1.0);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let r_at = |s: f64| ra + (rb - ra) * s;
            let q_at = |s: f64| qa + (qb - qa) * s;
            for c in cuts.windows(2) {
                let (s0, s1) = (c[0], c[1]);
                if s1 <= s0 {
                    continue;
                }
                let sm = 0.5 * (s0 + s1);
                let len = dt * (s1 - s0);
                let rm = r_at(sm);
                if rm >= self.r_max {
                    acc[last] += len * 0.5 * (q_at(s0) + q_at(s1));
                    continue;
                }
                let k = ((rm / h).floor() as usize).min(last - 1);
                let rk1 = self.node(k + 1);
                let phi = |s: f64| ((rk1 - r_at(s)) / h).clamp(0.0, 1.0);
                // Simpson is exact for the quadratic q * phi
                let lo_part = len / 6.0 * (q_at(s0) * phi(s0) + 4.0 * q_at(sm) * phi(sm) + q_at(s1) * phi(s1));
                let full = len * 0.5 * (q_at(s0) + q_at(s1));
                acc[k] += lo_part;
                acc[k + 1] += full - lo_part;
            }
        }
        Ok(acc)
    }
}

/// Two-node linear interpolation weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hat {
    pub lo: usize,
    pub w_lo: f64,
    pub hi: usize,
    pub w_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LeftBc {
    #[default]
    Free,
    /// dg/dr = 0 at r = 0.
    Neumann0,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RightBc {
    #[default]
    Free,
    /// g(r_max) = value.
    Dirichlet(f64),
    /// dg/dr = value at r = r_max.
    Neumann(f64),
}

/// Boundary conditions a grid function is declared to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryTags {
    pub left: LeftBc,
    pub right: RightBc,
}

impl BoundaryTags {
    pub const NONE: BoundaryTags = BoundaryTags {
        left: LeftBc::Free,
        right: RightBc::Free,
    };

    pub fn new(left: LeftBc, right: RightBc) -> Self {
        BoundaryTags { left, right }
    }
}

/// Nodal values on a [`Grid`] plus declared boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    bc: BoundaryTags,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at node {k}")));
        }
        Ok(GridFunction {
            grid,
            values,
            bc: BoundaryTags::NONE,
        })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_nodes()])
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n_nodes()],
            bc: BoundaryTags::NONE,
        }
    }

    pub fn with_bc(mut self, bc: BoundaryTags) -> Self {
        self.bc = bc;
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn r_max(&self) -> f64 {
        self.grid.r_max()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bc(&self) -> BoundaryTags {
        self.bc
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Piecewise-linear interpolation; clamps to the last nodal value above
    /// `r_max`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let hat = self.grid.hat(r)?;
        Ok(hat.w_lo * self.values[hat.lo] + hat.w_hi * self.values[hat.hi])
    }

    /// Derivative of the interpolant: centered differences at interior
    /// nodes, the cell slope between nodes, second-order one-sided
    /// differences at boundary nodes unless a Neumann condition is
    /// declared there, and zero above `r_max`.
    pub fn nodal_derivative(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("r = {r} is negative or not a number")));
        }
        let n = self.grid.n_nodes();
        let h = self.grid.spacing();
        let v = &self.values;
        if r > self.r_max() {
            return Ok(0.0);
        }
        if r == 0.0 {
            return Ok(match self.bc.left {
                LeftBc::Neumann0 => 0.0,
                LeftBc::Free => (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h),
            });
        }
        if r == self.r_max() {
            return Ok(match self.bc.right {
                RightBc::Neumann(s) => s,
                _ => (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h),
            });
        }
        let x = r / h;
        let k = x.round();
        if (x - k).abs() < 1e-12 && k >= 1.0 && (k as usize) < n - 1 {
            let k = k as usize;
            return Ok((v[k + 1] - v[k - 1]) / (2.0 * h));
        }
        let hat = self.grid.hat(r)?;
        Ok((v[hat.hi] - v[hat.lo]) / h)
    }

    /// `∇_ξ g(|ξ|) = g'(r) ξ / r`, zero at the origin.
    pub fn grad_wrt_state(&self, xi: [f64; 2]) -> Result<[f64; 2]> {
        let r = xi[0].hypot(xi[1]);
        if r == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let d = self.nodal_derivative(r)?;
        Ok([d * xi[0] / r, d * xi[1] / r])
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        let (a, b) = (self.grid, other.grid);
        if a.n_nodes() != b.n_nodes() || (a.r_max() - b.r_max()).abs() > 1e-12 * a.r_max() {
            return Err(Error::GridMismatch(format!(
                "[0, {}] x {} vs [0, {}] x {}",
                a.r_max(),
                a.n_nodes(),
                b.r_max(),
                b.n_nodes()
            )));
        }
        Ok(())
    }

    /// Trapezoidal `∫ z1 z2 dr` over the grid.
    pub fn l2_inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .grid
            .lumped_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    /// `∫ z1 z2 + ℓ² z1' z2' dr`: trapezoidal for the product term, exact
    /// cell-wise for the derivative term of the linear interpolants.
    pub fn h1_inner(&self, other: &GridFunction, ell: f64) -> Result<f64> {
        if !(ell >= 0.0) {
            return Err(Error::Domain(format!("length scale must be nonnegative, got {ell}")));
        }
        let l2 = self.l2_inner(other)?;
        let h = self.grid.spacing();
        let grad: f64 = self
            .values
            .windows(2)
            .zip(other.values.windows(2))
            .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]) / h)
            .sum();
        Ok(l2 + ell * ell * grad)
    }

    /// `self + alpha * other`, keeping this function's boundary tags.
    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
            bc: self.bc,
        })
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
            bc: self.bc,
        }
    }

    /// `max_k |self_k - other_k|` over nodes with `r_k` in `[lo, hi]`.
    pub fn max_diff_on(&self, other: &GridFunction, lo: f64, hi: f64) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .grid
            .nodes()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .filter(|(r, _)| **r >= lo && **r <= hi)
            .fold(0.0, |m, (_, (a, b))| m.max((a - b).abs())))
    }

    /// CSV text: a `#` schema comment, an optional boundary-tag comment, a
    /// `r,<column>` header and one row per node.
    pub fn to_csv_string(&self, column: &str) -> String {
        let mut out = format!("# columns: r,{column}\n");
        let _ = writeln!(out, "# bc: {}", format_bc(self.bc));
        let _ = writeln!(out, "r,{column}");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r:.17e},{v:.17e}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path, column: &str) -> Result<()> {
        std::fs::write(path, self.to_csv_string(column)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<GridFunction> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    /// Parses the two-column CSV written by [`GridFunction::to_csv_string`].
    /// Nodes must start at 0 and be equispaced.
    pub fn parse_csv(text: &str) -> Result<GridFunction> {
        let mut bc = BoundaryTags::NONE;
        for line in text.lines() {
            if let Some(rest) = line.trim_start().strip_prefix("# bc:") {
                bc = parse_bc(rest.trim())?;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rs = Vec::new();
        let mut vs = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse("grid function csv", e))?;
            if rec.len() != 2 {
                return Err(Error::parse(
                    "grid function csv",
                    format!("expected 2 columns, found {}", rec.len()),
                ));
            }
            let r: f64 = rec[0].parse().map_err(|e| Error::parse("grid function csv", e))?;
            let v: f64 = rec[1].parse().map_err(|e| Error::parse("grid function csv", e))?;
            rs.push(r);
            vs.push(v);
        }
        if rs.len() < 3 {
            return Err(Error::parse("grid function csv", "need at least 3 nodes"));
        }
        let grid = Grid::new(*rs.last().unwrap(), rs.len()).map_err(|e| Error::parse("grid function csv", e))?;
        let h = grid.spacing();
        for (k, r) in rs.iter().enumerate() {
            if !((r - grid.node(k)).abs() <= 1e-9 * grid.r_max().max(1.0)) {
                return Err(Error::parse(
                    "grid function csv",
                    format!("node {k} at r = {r} is not on the equispaced grid (h = {h})"),
                ));
            }
        }
        Ok(GridFunction::new(grid, vs)
            .map_err(|e| Error::parse("grid function csv", e))?
            .with_bc(bc))
    }
}

fn format_bc(bc: BoundaryTags) -> String {
    let left = match bc.left {
        LeftBc::Free => "free".to_string(),
        LeftBc::Neumann0 => "neumann0".to_string(),
    };
    let right = match bc.right {
        RightBc::Free => "free".to_string(),
        RightBc::Dirichlet(v) => format!("dirichlet:{v:e}"),
        RightBc::Neumann(v) => format!("neumann:{v:e}"),
    };
    format!("left={left} right={right}")
}

fn parse_bc(text: &str) -> Result<BoundaryTags> {
    let mut bc = BoundaryTags::NONE;
    for item in text.split_whitespace() {
        let (key, val) = item
            .split_once('=')
            .ok_or_else(|| Error::parse("boundary tags", format!("malformed item `{item}`")))?;
        match key {
            "left" => {
                bc.left = match val {
                    "free" => LeftBc::Free,
                    "neumann0" => LeftBc::Neumann0,
                    _ => return Err(Error::parse("boundary tags", format!("unknown left tag `{val}`"))),
                }
            }
            "right" => {
                bc.right = if val == "free" {
                    RightBc::Free
                } else if let Some(v) = val.strip_prefix("dirichlet:") {
                    RightBc::Dirichlet(parse_finite(v)?)
                } else if let Some(v) = val.strip_prefix("neumann:") {
                    RightBc::Neumann(parse_finite(v)?)
                } else {
                    return Err(Error::parse("boundary tags", format!("unknown right tag `{val}`")));
                }
            }
            _ => return Err(Error::parse("boundary tags", format!("unknown key `{key}`"))),
        }
    }
    Ok(bc)
}

fn parse_finite(s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|e| Error::parse("boundary tags", e))?;
    if !v.is_finite() {
        return Err(Error::parse("boundary tags", "non-finite boundary value"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(r_max: f64, n: usize) -> Grid {
        Grid::new(r_max, n).unwrap()
    }

    #[test]
    fn constant_evaluates_to_constant() {
        let g = GridFunction::constant(grid(2.3, 75), 0.7).unwrap();
        for r in [0.0, 0.01, 1.234, 2.3, 5.0] {
            assert_eq!(g.eval(r).unwrap(), 0.7);
        }
    }

    #[test]
    fn linear_reproduced_mid_cell() {
        let gr = grid(2.0, 9);
        let g = GridFunction::from_fn(gr, |r| r).unwrap();
        let h = gr.spacing();
        for k in 0..8 {
            let r = (k as f64 + 0.5) * h;
            assert!((g.eval(r).unwrap() - r).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_field_growth_rate_interpolates() {
        let g = GridFunction::from_fn(grid(2.3, 75), |r| 0.151 - 0.151 * (r / 2.3).powi(2)).unwrap();
        let h = 2.3 / 74.0;
        let exact = 0.151 * 0.75;
        // interpolation error of a quadratic: h^2/8 * |g''|
        let bound = h * h / 8.0 * 2.0 * 0.151 / (2.3 * 2.3);
        assert!((g.eval(1.15).unwrap() - exact).abs() <= bound + 1e-15);
    }

    #[test]
    fn negative_radius_rejected() {
        let g = GridFunction::zeros(grid(1.0, 5));
        assert!(matches!(g.eval(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(g.nodal_derivative(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn clamps_above_r_max() {
        let g = GridFunction::from_fn(grid(1.0, 5), |r| r * r).unwrap();
        assert_eq!(g.eval(3.0).unwrap(), 1.0);
        assert_eq!(g.nodal_derivative(3.0).unwrap(), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let gr = grid(2.0, 11);
        let c = GridFunction::constant(gr, 3.0).unwrap();
        for r in [0.0, 0.3, 1.0, 2.0] {
            assert_eq!(c.nodal_derivative(r).unwrap(), 0.0);
        }
        let lin = GridFunction::from_fn(gr, |r| r).unwrap();
        for r in [0.05, 0.31, 1.77] {
            assert!((lin.nodal_derivative(r).unwrap() - 1.0).abs() < 1e-12);
        }
        let quad = GridFunction::from_fn(gr, |r| r * r).unwrap();
        for k in 1..10 {
            let rk = gr.node(k);
            assert!((quad.nodal_derivative(rk).unwrap() - 2.0 * rk).abs() < 1e-12);
        }
        // one-sided second-order differences are exact for quadratics
        assert!(quad.nodal_derivative(0.0).unwrap().abs() < 1e-12);
        assert!((quad.nodal_derivative(2.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn neumann_tags_override_boundary_derivative() {
        let gr = grid(2.0, 11);
        let g = GridFunction::from_fn(gr, |r| r)
            .unwrap()
            .with_bc(BoundaryTags::new(LeftBc::Neumann0, RightBc::Neumann(0.25)));
        assert_eq!(g.nodal_derivative(0.0).unwrap(), 0.0);
        assert_eq!(g.nodal_derivative(2.0).unwrap(), 0.25);
    }

    #[test]
    fn grad_wrt_state_examples() {
        let gr = grid(3.0, 301);
        let quad = GridFunction::from_fn(gr, |r| r * r).unwrap();
        // at a node the centered difference of r^2 is exact
        let xi = [0.6, 0.8];
        let g = quad.grad_wrt_state(xi).unwrap();
        assert!((g[0] - 1.2).abs() < 1e-9 && (g[1] - 1.6).abs() < 1e-9);
        assert_eq!(quad.grad_wrt_state([0.0, 0.0]).unwrap(), [0.0, 0.0]);
        let c = GridFunction::constant(gr, 2.0).unwrap();
        assert_eq!(c.grad_wrt_state([0.3, -1.1]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn h1_inner_examples() {
        let one = GridFunction::constant(grid(2.3, 75), 1.0).unwrap();
        for ell in [0.0, 0.5, 3.0] {
            assert!((one.h1_inner(&one, ell).unwrap() - 2.3).abs() < 1e-13);
        }
        let gr = grid(1.0, 201);
        let r = GridFunction::from_fn(gr, |r| r).unwrap();
        let h = gr.spacing();
        // trapezoid error for r^2 is h^2/6 on [0,1]
        assert!((r.h1_inner(&r, 0.0).unwrap() - 1.0 / 3.0).abs() <= h * h / 6.0 + 1e-15);
        let even = GridFunction::from_fn(gr, |r| (r - 0.5).powi(2)).unwrap();
        let odd = GridFunction::from_fn(gr, |r| r - 0.5).unwrap();
        assert!(even.h1_inner(&odd, 0.0).unwrap().abs() < 1e-14);
        assert!(matches!(
            r.h1_inner(&GridFunction::zeros(grid(1.0, 11)), 0.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn scatter_constant_path_and_time_weights() {
        let gr = grid(1.0, 11);
        // path sitting exactly on node 3 for 2 time units
        let path = [(0.0, 0.3, 1.0), (2.0, 0.3, 1.0)];
        let s = gr.scatter_path(&path).unwrap();
        assert!((s[3] - 2.0).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        // monotone sweep over [0, 1] in unit time: ∫ φ_k(r(t)) dt = lumped weight
        let sweep = [(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)];
        let s = gr.scatter_path(&sweep).unwrap();
        for (a, b) in s.iter().zip(gr.lumped_weights()) {
            assert!((a - b).abs() < 1e-14);
        }
        // samples above r_max go to the last node
        let s = gr.scatter_path(&[(0.0, 1.5, 2.0), (1.0, 2.0, 2.0)]).unwrap();
        assert!((s[10] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip_keeps_tags() {
        let g = GridFunction::from_fn(grid(2.3, 7), |r| 0.1 - r * r)
            .unwrap()
            .with_bc(BoundaryTags::new(LeftBc::Neumann0, RightBc::Dirichlet(0.0)));
        let text = g.to_csv_string("value");
        assert!(text.starts_with("# columns: r,value"));
        let back = GridFunction::parse_csv(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(GridFunction::parse_csv("r,value\n0,1\n1,2\n").is_err());
        assert!(GridFunction::parse_csv("r,value\n0,1\n0.5,2\n2,3\n").is_err());
        assert!(GridFunction::parse_csv("r,value\n0,1\n1,x\n2,3\n").is_err());
        assert!(GridFunction::parse_csv("# bc: left=bogus\nr,value\n0,1\n1,2\n2,3\n").is_err());
    }

    proptest! {
        #[test]
        fn h1_inner_symmetric_bilinear_nonneg(
            a in proptest::collection::vec(-5.0f64..5.0, 9),
            b in proptest::collection::vec(-5.0f64..5.0, 9),
            alpha in -3.0f64..3.0,
            ell in 0.0f64..2.0,
        ) {
            let gr = Grid::new(1.7, 9).unwrap();
            let za = GridFunction::new(gr, a).unwrap();
            let zb = GridFunction::new(gr, b).unwrap();
            let ab = za.h1_inner(&zb, ell).unwrap();
            let ba = zb.h1_inner(&za, ell).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
            prop_assert!(za.h1_inner(&za, ell).unwrap() >= 0.0);
            let lhs = za.axpy(alpha, &zb).unwrap().h1_inner(&zb, ell).unwrap();
            let rhs = ab + alpha * zb.h1_inner(&zb, ell).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn affine_functions_reproduced(c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, r in 0.0f64..2.0) {
            let g = GridFunction::from_fn(Grid::new(2.0, 13).unwrap(), |x| c0 + c1 * x).unwrap();
            prop_assert!((g.eval(r).unwrap() - (c0 + c1 * r)).abs() < 1e-12);
        }

        #[test]
        fn state_gradient_parallel_with_radial_magnitude(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            prop_assume!(x.hypot(y) > 1e-3);
            let g = GridFunction::from_fn(Grid::new(3.0, 31).unwrap(), |r| (r - 1.0).powi(3)).unwrap();
            let grad = g.grad_wrt_state([x, y]).unwrap();
            let cross = grad[0] * y - grad[1] * x;
            prop_assert!(cross.abs() < 1e-10);
            let d = g.nodal_derivative(x.hypot(y)).unwrap();
            prop_assert!((grad[0].hypot(grad[1]) - d.abs()).abs() < 1e-10);
        }

        #[test]
        fn csv_parser_never_panics(text in ".{0,200}") {
            let _ = GridFunction::parse_csv(&text);
        }
    }
}
