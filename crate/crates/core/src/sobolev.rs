//! Sobolev gradients and the direct `g3` smoother.
//!
//! Both reduce to the two-point problem `(1 − ℓ² d²/dr²) u = f` on the grid,
//! discretized with centered differences. Neumann ends use a mirrored ghost
//! node so the scheme stays second order.

use crate::adjoint::{quadrature_times, Problem, SolverSettings};
use crate::error::{Error, Result};
use crate::gridfn::{BoundaryTags, Grid, GridFunction, LeftBc, RightBc};
use crate::model::{norm, Measurements};
use crate::ode::Trajectory;

/// Condition imposed at `r_max`; the left end is always `du/dr = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RightCondition {
    Dirichlet(f64),
    Neumann0,
}

/// Solves a tridiagonal system by forward elimination and back substitution.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n || n == 0 {
        return Err(Error::Invalid("tridiagonal bands have inconsistent lengths".into()));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Invalid("singular tridiagonal system".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Invalid("singular tridiagonal system".into()));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::Invalid(format!("smoothing length must be positive, got {ell}")));
    }
    Ok(())
}

/// Solves `(1 − ℓ² u'') = rhs` with `u'(0) = 0` and the given right
/// condition. The result is tagged with the imposed conditions.
pub fn solve_helmholtz(rhs: &GridFunction, ell: f64, right: RightCondition) -> Result<GridFunction> {
    check_ell(ell)?;
    let grid = rhs.grid();
    let n = grid.n_nodes();
    let h = grid.spacing();
    let c = ell * ell / (h * h);
    let f = rhs.values();
    let mut lower = vec![-c; n];
    let mut diag = vec![1.0 + 2.0 * c; n];
    let mut upper = vec![-c; n];
    let mut b = f.to_vec();
    // ghost node u_{-1} = u_1
    upper[0] = -2.0 * c;
    let right_tag = match right {
        RightCondition::Dirichlet(v) => {
            lower[n - 1] = 0.0;
            diag[n - 1] = 1.0;
            b[n - 1] = v;
            RightBc::Dirichlet(v)
        }
        RightCondition::Neumann0 => {
            // ghost node u_n = u_{n-2}
            lower[n - 1] = -2.0 * c;
            RightBc::Neumann(0.0)
        }
    };
    let u = solve_tridiagonal(&lower, &diag, &upper, &b)?;
    Ok(GridFunction::new(grid, u)?.with_bc(BoundaryTags::new(LeftBc::Neumann0, right_tag)))
}

/// Applies the discrete operator `1 − ℓ² d²/dr²` with the same ghost-node
/// rows as [`solve_helmholtz`] (Dirichlet rows act as the identity).
pub fn apply_helmholtz(u: &GridFunction, ell: f64, right: RightCondition) -> Result<Vec<f64>> {
    check_ell(ell)?;
    let grid = u.grid();
    let n = grid.n_nodes();
    let c = ell * ell / (grid.spacing() * grid.spacing());
    let v = u.values();
    let mut out = vec![0.0; n];
    out[0] = (1.0 + 2.0 * c) * v[0] - 2.0 * c * v[1];
    for k in 1..n - 1 {
        out[k] = v[k] - c * (v[k - 1] - 2.0 * v[k] + v[k + 1]);
    }
    out[n - 1] = match right {
        RightCondition::Dirichlet(_) => v[n - 1],
        RightCondition::Neumann0 => (1.0 + 2.0 * c) * v[n - 1] - 2.0 * c * v[n - 2],
    };
    Ok(out)
}

/// One-sided second-order end slopes `((−3u_0 + 4u_1 − u_2)/(2h),
/// (3u_n − 4u_{n−1} + u_{n−2})/(2h))`.
pub fn end_slopes(u: &GridFunction) -> (f64, f64) {
    let v = u.values();
    let n = v.len();
    let h = u.grid().spacing();
    (
        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h),
        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h),
    )
}

fn slope_functional(n: usize, h: f64, left: bool) -> Vec<f64> {
    let mut c = vec![0.0; n];
    let k = 1.0 / (2.0 * h);
    if left {
        c[0] = -3.0 * k;
        c[1] = 4.0 * k;
        c[2] = -k;
    } else {
        c[n - 1] = 3.0 * k;
        c[n - 2] = -4.0 * k;
        c[n - 3] = k;
    }
    c
}

/// H1 representer of an L2 gradient. P1 pins the value at `r_max` so
/// updates keep `g1(r°) = 0`; P2 uses zero slope at both ends so updates
/// keep the end slopes of `g2`.
///
/// The ghost-node solution is projected, in the discrete H1 inner product,
/// onto functions whose one-sided end slopes (see [`end_slopes`]) vanish at
/// the Neumann ends. Every iterate then keeps its nodal end slopes to
/// round-off, and `⟨u, f⟩_L2 = ⟨u, u⟩_H1` still holds for the result.
pub fn sobolev_gradient(l2_grad: &GridFunction, ell: f64, problem: Problem) -> Result<GridFunction> {
    let right = match problem {
        Problem::P1 => RightCondition::Dirichlet(0.0),
        Problem::P2 => RightCondition::Neumann0,
    };
    let u0 = solve_helmholtz(l2_grad, ell, right)?;
    let grid = l2_grad.grid();
    let n = grid.n_nodes();
    let h = grid.spacing();
    let w = grid.lumped_weights();
    let mut cs = vec![slope_functional(n, h, true)];
    if problem == Problem::P2 {
        cs.push(slope_functional(n, h, false));
    }
    // z_i = K⁻¹ c_i where K = W (1 − ℓ² d²/dr²) is the H1 Gram matrix
    let zs = cs
        .iter()
        .map(|c| {
            let rhs = GridFunction::new(grid, c.iter().zip(&w).map(|(c, w)| c / w).collect())?;
            solve_helmholtz(&rhs, ell, right).map(GridFunction::into_values)
        })
        .collect::<Result<Vec<_>>>()?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let m = cs.len();
    let gram: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| dot(&cs[i], &zs[j])).collect()).collect();
    let rhs: Vec<f64> = cs.iter().map(|c| dot(c, u0.values())).collect();
    let lambda = match m {
        1 => vec![rhs[0] / gram[0][0]],
        _ => {
            let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
            vec![
                (gram[1][1] * rhs[0] - gram[0][1] * rhs[1]) / det,
                (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det,
            ]
        }
    };
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::Invalid("singular end-slope projection".into()));
    }
    let mut u = u0.values().to_vec();
    for (l, z) in lambda.iter().zip(&zs) {
        for (u, z) in u.iter_mut().zip(z) {
            *u -= l * z;
        }
    }
    Ok(GridFunction::new(grid, u)?.with_bc(u0.bc()))
}

/// Smooths gridded shift-mode data into `ĝ3`, keeping its value at `r_max`.
pub fn smooth_g3(a3_on_grid: &GridFunction, ell: f64) -> Result<GridFunction> {
    let edge = *a3_on_grid.values().last().unwrap();
    solve_helmholtz(a3_on_grid, ell, RightCondition::Dirichlet(edge))
}

/// Deposits `ã_Δ(t)` on the hat functions at `r(t)` and divides by the
/// deposited time weight, giving an occupation-weighted average per node.
/// Nodes the trajectory never visits copy the nearest visited node.
pub fn bin_a3_measurements(
    traj: &Trajectory<2>,
    meas: &Measurements,
    grid: Grid,
    settings: &SolverSettings,
) -> Result<GridFunction> {
    let times = quadrature_times(meas, settings.quad_points);
    let mut with_value = Vec::with_capacity(times.len());
    let mut with_one = Vec::with_capacity(times.len());
    for &t in &times {
        let r = norm(traj.eval(t)?);
        with_value.push((t, r, meas.interpolate(&meas.a_delta_tilde, t)));
        with_one.push((t, r, 1.0));
    }
    let num = grid.scatter_path(&with_value)?;
    let den = grid.scatter_path(&with_one)?;
    let scale = den.iter().fold(0.0f64, |a, b| a.max(*b));
    let visited: Vec<bool> = den.iter().map(|w| *w > 1e-12 * scale).collect();
    if !visited.iter().any(|v| *v) {
        return Err(Error::Invalid("no grid node is visited by the trajectory".into()));
    }
    let mut values: Vec<f64> = (0..grid.n_nodes())
        .map(|k| if visited[k] { num[k] / den[k] } else { f64::NAN })
        .collect();
    let filled: Vec<usize> = (0..grid.n_nodes()).filter(|k| visited[*k]).collect();
    for k in 0..grid.n_nodes() {
        if !visited[k] {
            let nearest = *filled.iter().min_by_key(|j| j.abs_diff(k)).unwrap();
            values[k] = values[nearest];
        }
    }
    GridFunction::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::Grid;
    use crate::model::{landau_ground_truth, synthesize_measurements, Contamination, LandauParams};
    use crate::ode::Tolerances;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(2.3, 75).unwrap()
    }

    fn cosh_profile(r: f64, ell: f64, r_max: f64) -> f64 {
        1.0 - (r / ell).cosh() / (r_max / ell).cosh()
    }

    #[test]
    fn tridiagonal_small_system() {
        // [[2,1,0],[1,3,1],[0,1,4]] x = [3,5,5] -> x = (1,1,1)
        let x = solve_tridiagonal(&[0.0, 1.0, 1.0], &[2.0, 3.0, 4.0], &[1.0, 1.0, 0.0], &[3.0, 5.0, 5.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_with_neumann_ends_is_reproduced() {
        let f = GridFunction::constant(grid(), 0.37).unwrap();
        let u = solve_helmholtz(&f, 1.0, RightCondition::Neumann0).unwrap();
        for v in u.values() {
            assert!((v - 0.37).abs() < 1e-13);
        }
    }

    #[test]
    fn cosh_closed_form() {
        let f = GridFunction::constant(grid(), 1.0).unwrap();
        let u = solve_helmholtz(&f, 1.0, RightCondition::Dirichlet(0.0)).unwrap();
        let expected = 1.0 - 1.0 / 2.3f64.cosh();
        assert!((u.values()[0] - expected).abs() < 1e-3, "{}", u.values()[0]);
        assert!((expected - 0.8015).abs() < 1e-4);
        assert_eq!(*u.values().last().unwrap(), 0.0);
        assert_eq!(u.bc(), BoundaryTags::new(LeftBc::Neumann0, RightBc::Dirichlet(0.0)));
    }

    #[test]
    fn second_order_convergence() {
        let mut errs = Vec::new();
        for n in [21, 41, 81, 161] {
            let g = Grid::new(2.3, n).unwrap();
            let f = GridFunction::constant(g, 1.0).unwrap();
            let u = solve_helmholtz(&f, 1.0, RightCondition::Dirichlet(0.0)).unwrap();
            let err = g
                .nodes()
                .iter()
                .zip(u.values())
                .map(|(r, v)| (v - cosh_profile(*r, 1.0, 2.3)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio} from {errs:?}");
        }
    }

    #[test]
    fn vanishing_length_tends_to_identity() {
        let g = grid();
        let f = GridFunction::from_fn(g, |r| (1.7 * r).sin() + 0.5).unwrap();
        let interior_gap = |ell: f64| {
            let u = solve_helmholtz(&f, ell, RightCondition::Neumann0).unwrap();
            (5..70)
                .map(|k| (u.values()[k] - f.values()[k]).abs())
                .fold(0.0, f64::max)
        };
        let (a, b) = (interior_gap(2e-2), interior_gap(1e-2));
        assert!(interior_gap(1e-3) < 1e-5);
        let ratio = a / b;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn sobolev_gradient_examples() {
        let g = grid();
        for problem in [Problem::P1, Problem::P2] {
            let z = sobolev_gradient(&GridFunction::zeros(g), 1.0, problem).unwrap();
            assert!(z.values().iter().all(|v| *v == 0.0));
        }
        let c = GridFunction::constant(g, 2.0).unwrap();
        let p1 = sobolev_gradient(&c, 1.0, Problem::P1).unwrap();
        for (r, v) in g.nodes().iter().zip(p1.values()) {
            assert!((v - 2.0 * cosh_profile(*r, 1.0, 2.3)).abs() < 1e-3);
        }
        assert_eq!(*p1.values().last().unwrap(), 0.0);
        let p2 = sobolev_gradient(&c, 1.0, Problem::P2).unwrap();
        for v in p2.values() {
            assert!((v - 2.0).abs() < 1e-13);
        }
        assert_eq!(p2.bc().right, RightBc::Neumann(0.0));
    }

    #[test]
    fn damping_of_cosine_modes() {
        // cos(kr) with k = mπ/L satisfies both Neumann ends
        let g = Grid::new(2.3, 401).unwrap();
        let ell = 0.5;
        for m in [1, 3, 6] {
            let k = m as f64 * std::f64::consts::PI / 2.3;
            let f = GridFunction::from_fn(g, |r| (k * r).cos()).unwrap();
            let u = solve_helmholtz(&f, ell, RightCondition::Neumann0).unwrap();
            let factor = 1.0 / (1.0 + ell * ell * k * k);
            for (r, v) in g.nodes().iter().zip(u.values()) {
                assert!(
                    (v - factor * (k * r).cos()).abs() < 1e-3 * factor.max(0.1),
                    "m={m} r={r}"
                );
            }
        }
    }

    #[test]
    fn smooth_g3_examples() {
        let g = grid();
        let c = GridFunction::constant(g, 1.25).unwrap();
        let s = smooth_g3(&c, 0.1).unwrap();
        for v in s.values() {
            assert!((v - 1.25).abs() < 1e-13);
        }
        let a3 = GridFunction::from_fn(g, |r| r * r).unwrap();
        let s = smooth_g3(&a3, 0.1).unwrap();
        // outside a boundary layer of a few ℓ near r_max
        for (r, v) in g.nodes().iter().zip(s.values()) {
            if *r < 2.3 - 0.5 {
                assert!((v - r * r).abs() <= 0.08, "r={r}");
            }
        }
        assert_eq!(*s.values().last().unwrap(), 2.3 * 2.3);
    }

    fn landau() -> LandauParams {
        LandauParams {
            sigma1: 0.151,
            beta: 0.151 / (2.3 * 2.3),
            omega1: 0.886,
            gamma: 0.15 / (2.3 * 2.3),
            alpha_delta: 1.0,
        }
    }

    #[test]
    fn binning_recovers_a_function_of_radius() {
        let m = landau_ground_truth(&landau(), 75).unwrap();
        let tol = Tolerances::new(1e-10, 1e-10);
        let meas = synthesize_measurements(&m, [0.023, 0.0], 70.0, 500, &Contamination::default(), &tol).unwrap();
        let traj = m.integrate([0.023, 0.0], 70.0, &tol).unwrap();
        let binned = bin_a3_measurements(&traj, &meas, m.grid(), &SolverSettings::default()).unwrap();
        let g = m.grid();
        let h = g.spacing();
        // brute-force occupation average on a fine uniform time grid
        let n_fine = 400_000;
        let mut num = vec![0.0; g.n_nodes()];
        let mut den = vec![0.0; g.n_nodes()];
        for j in 0..=n_fine {
            let t = 70.0 * j as f64 / n_fine as f64;
            let w = if j == 0 || j == n_fine { 0.5 } else { 1.0 };
            let r = norm(traj.eval(t).unwrap());
            let a = meas.interpolate(&meas.a_delta_tilde, t);
            let hat = g.hat(r).unwrap();
            num[hat.lo] += w * hat.w_lo * a;
            den[hat.lo] += w * hat.w_lo;
            num[hat.hi] += w * hat.w_hi * a;
            den[hat.hi] += w * hat.w_hi;
        }
        for (k, (r, v)) in g.nodes().iter().zip(binned.values()).enumerate() {
            if den[k] > 0.0 {
                assert!((v - num[k] / den[k]).abs() < 1e-4, "r={r}: {v} vs {}", num[k] / den[k]);
            }
            if *r > 0.05 {
                // within the variation of r² over the hat support
                assert!((v - r * r).abs() < 2.0 * r * h, "r={r}: {v}");
            }
        }
        let constant = Measurements::new(
            meas.times().to_vec(),
            meas.r_tilde.clone(),
            meas.theta_tilde.clone(),
            vec![0.7; meas.len()],
        )
        .unwrap();
        let binned = bin_a3_measurements(&traj, &constant, m.grid(), &SolverSettings::default()).unwrap();
        assert!(binned.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn binning_averages_harmonic_contamination_on_the_cycle() {
        let m = landau_ground_truth(&landau(), 75).unwrap();
        let tol = Tolerances::new(1e-11, 1e-11);
        let r0 = 2.3;
        let omega = 0.886 + 0.15;
        let period = 2.0 * std::f64::consts::PI / omega;
        let t_final = 10.0 * period;
        let traj = m.integrate([r0, 0.0], t_final, &tol).unwrap();
        let n = 2001;
        let times: Vec<f64> = (0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect();
        let eps = 0.05;
        let a: Vec<f64> = times
            .iter()
            .map(|t| r0 * r0 * (1.0 + eps * (2.0 * omega * t).cos()))
            .collect();
        let meas = Measurements::new(times.clone(), vec![r0; n], times.iter().map(|t| omega * t).collect(), a).unwrap();
        let binned = bin_a3_measurements(&traj, &meas, m.grid(), &SolverSettings::default()).unwrap();
        let at_cycle = *binned.values().last().unwrap();
        assert!((at_cycle - r0 * r0).abs() < 1e-4, "{at_cycle}");
    }

    #[test]
    fn binning_fills_unvisited_nodes() {
        let m = landau_ground_truth(&landau(), 75).unwrap();
        let tol = Tolerances::new(1e-10, 1e-10);
        // start on the cycle: only the last node and its neighbour are visited
        let traj = m.integrate([2.3, 0.0], 20.0, &tol).unwrap();
        let n = 101;
        let times: Vec<f64> = (0..n).map(|i| 0.2 * i as f64).collect();
        let meas = Measurements::new(times, vec![2.3; n], vec![0.0; n], vec![3.0; n]).unwrap();
        let binned = bin_a3_measurements(&traj, &meas, m.grid(), &SolverSettings::default()).unwrap();
        assert!(binned.values().iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn sobolev_gradient_matches_unconstrained_solution_to_second_order() {
        // for smooth data the projection moves the ghost-node solution by O(h²)
        let mut gaps = Vec::new();
        for n in [41, 81, 161] {
            let g = Grid::new(2.3, n).unwrap();
            let f = GridFunction::from_fn(g, |r| (1.3 * r).sin() + r * r).unwrap();
            let plain = solve_helmholtz(&f, 1.0, RightCondition::Neumann0).unwrap();
            let projected = sobolev_gradient(&f, 1.0, Problem::P2).unwrap();
            gaps.push(plain.max_diff_on(&projected, 0.0, 2.3).unwrap());
        }
        for w in gaps.windows(2) {
            assert!(w[0] / w[1] > 3.0, "{gaps:?}");
        }
    }

    proptest! {
        #[test]
        fn sobolev_gradient_keeps_end_slopes_and_descends(
            vals in proptest::collection::vec(-3.0f64..3.0, 20),
            ell in 0.05f64..3.0,
            p2 in proptest::bool::ANY,
        ) {
            let g = Grid::new(2.3, 20).unwrap();
            let f = GridFunction::new(g, vals).unwrap();
            let problem = if p2 { Problem::P2 } else { Problem::P1 };
            let u = sobolev_gradient(&f, ell, problem).unwrap();
            let scale = 1.0 + u.max_abs() / g.spacing();
            let (left, right) = end_slopes(&u);
            prop_assert!(left.abs() < 1e-12 * scale);
            match problem {
                Problem::P1 => prop_assert_eq!(*u.values().last().unwrap(), 0.0),
                Problem::P2 => prop_assert!(right.abs() < 1e-12 * scale),
            }
            // Riesz identity on the constrained space
            let lhs = u.l2_inner(&f).unwrap();
            let rhs = u.h1_inner(&u, ell).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            prop_assert!(lhs >= -1e-14);
        }

        #[test]
        fn maximum_principle(vals in proptest::collection::vec(0.0f64..5.0, 20), ell in 0.05f64..3.0, dir in 0.0f64..2.0) {
            let g = Grid::new(2.3, 20).unwrap();
            let f = GridFunction::new(g, vals).unwrap();
            for right in [RightCondition::Neumann0, RightCondition::Dirichlet(dir)] {
                let u = solve_helmholtz(&f, ell, right).unwrap();
                prop_assert!(u.values().iter().all(|v| *v >= -1e-12));
            }
        }

        #[test]
        fn self_adjoint_under_lumped_weights(
            a in proptest::collection::vec(-2.0f64..2.0, 15),
            b in proptest::collection::vec(-2.0f64..2.0, 15),
            ell in 0.1f64..2.0,
        ) {
            let g = Grid::new(2.3, 15).unwrap();
            let w = g.lumped_weights();
            let mut ua = GridFunction::new(g, a).unwrap();
            let mut ub = GridFunction::new(g, b).unwrap();
            let right = RightCondition::Neumann0;
            let la = apply_helmholtz(&ua, ell, right).unwrap();
            let lb = apply_helmholtz(&ub, ell, right).unwrap();
            let lhs: f64 = (0..15).map(|k| w[k] * ua.values()[k] * lb[k]).sum();
            let rhs: f64 = (0..15).map(|k| w[k] * la[k] * ub.values()[k]).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            // homogeneous Dirichlet: restrict to functions vanishing at r_max
            let mut va = ua.values().to_vec();
            let mut vb = ub.values().to_vec();
            va[14] = 0.0;
            vb[14] = 0.0;
            ua = GridFunction::new(g, va).unwrap();
            ub = GridFunction::new(g, vb).unwrap();
            let right = RightCondition::Dirichlet(0.0);
            let la = apply_helmholtz(&ua, ell, right).unwrap();
            let lb = apply_helmholtz(&ub, ell, right).unwrap();
            let lhs: f64 = (0..14).map(|k| w[k] * ua.values()[k] * lb[k]).sum();
            let rhs: f64 = (0..14).map(|k| w[k] * la[k] * ub.values()[k]).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn solve_inverts_apply(vals in proptest::collection::vec(-3.0f64..3.0, 12), ell in 0.1f64..2.0) {
            let g = Grid::new(1.0, 12).unwrap();
            let f = GridFunction::new(g, vals.clone()).unwrap();
            let u = solve_helmholtz(&f, ell, RightCondition::Neumann0).unwrap();
            let back = apply_helmholtz(&u, ell, RightCondition::Neumann0).unwrap();
            for (x, y) in back.iter().zip(&vals) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
