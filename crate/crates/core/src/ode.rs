//! Adaptive Dormand–Prince 5(4) integration with cubic Hermite dense output.
//!
//! States are fixed-size arrays so that the forward model (2 components),
//! the tangent and adjoint systems with their running quadratures
//! (3 components) and small test problems share one implementation.

use crate::error::{Error, Result};

/// Local error tolerances for the embedded error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rel: 1e-8, abs: 1e-8 }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerances { rel, abs }
    }

    /// Both tolerances multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Tolerances {
            rel: self.rel * factor,
            abs: self.abs * factor,
        }
    }
}

const MAX_STEPS: usize = 5_000_000;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Time-ordered samples of an ODE solution with enough data for
/// cubic Hermite interpolation anywhere on `[t_start, t_end]`.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    times: Vec<f64>,
    states: Vec<[f64; N]>,
    derivs: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    /// Builds a trajectory from samples; `derivs` holds dy/dt at each sample.
    pub fn from_samples(times: Vec<f64>, states: Vec<[f64; N]>, derivs: Vec<[f64; N]>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Invalid("trajectory needs at least two samples".into()));
        }
        if states.len() != times.len() || derivs.len() != times.len() {
            return Err(Error::Invalid(format!(
                "trajectory arrays differ in length: {} times, {} states, {} derivatives",
                times.len(),
                states.len(),
                derivs.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("trajectory times must be strictly increasing".into()));
        }
        if states.iter().chain(&derivs).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory { times, states, derivs })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[[f64; N]] {
        &self.states
    }

    pub fn derivatives(&self) -> &[[f64; N]] {
        &self.derivs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn first(&self) -> [f64; N] {
        self.states[0]
    }

    pub fn last(&self) -> [f64; N] {
        self.states[self.states.len() - 1]
    }

    /// Dense-output evaluation at a single time.
    pub fn eval(&self, t: f64) -> Result<[f64; N]> {
        let (t0, t1) = (self.t_start(), self.t_end());
        let slack = 1e-12 * (t1 - t0).abs().max(1.0);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(Error::Domain(format!(
                "query time {t} outside trajectory span [{t0}, {t1}]"
            )));
        }
        let t = t.clamp(t0, t1);
        // index of the last sample with times[i] <= t
        let i = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len() - 2),
        };
        if t == self.times[i] {
            return Ok(self.states[i]);
        }
        if t == self.times[i + 1] {
            return Ok(self.states[i + 1]);
        }
        let h = self.times[i + 1] - self.times[i];
        let s = (t - self.times[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let (f0, f1) = (&self.derivs[i], &self.derivs[i + 1]);
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
        }
        Ok(out)
    }
}

/// Evaluates the dense output of `traj` at each query time.
pub fn sample_at<const N: usize>(traj: &Trajectory<N>, query_times: &[f64]) -> Result<Vec<[f64; N]>> {
    query_times.iter().map(|&t| traj.eval(t)).collect()
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for k in 0..N {
        let sk = tol.abs + tol.rel * y0[k].abs().max(y1[k].abs());
        acc += (err[k] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn all_finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    span: f64,
    tol: &Tolerances,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let norm = |v: &[f64; N]| {
        let mut acc = 0.0;
        for k in 0..N {
            let sk = tol.abs + tol.rel * y0[k].abs();
            acc += (v[k] / sk).powi(2);
        }
        (acc / N as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = rhs(t0 + h0, &y1);
    let mut diff = [0.0; N];
    for k in 0..N {
        diff[k] = f1[k] - f0[k];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// One Dormand–Prince step of size `h` from `(t, y)` with `k1 = rhs(t, y)`.
/// Returns the fifth-order solution, its derivative at `t_new` and the
/// embedded error estimate.
fn dopri_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    t_new: f64,
) -> ([f64; N], [f64; N], [f64; N])
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = rhs(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = rhs(t_new, &y_new);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, k7, err)
}

/// Integrates with one Dormand–Prince step between consecutive `mesh`
/// points and no error control, e.g. to replay the steps of an earlier
/// adaptive solve.
pub fn integrate_on_mesh<const N: usize, F>(mut rhs: F, y0: [f64; N], mesh: &[f64]) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if mesh.len() < 2 || mesh.windows(2).any(|w| !(w[1] > w[0])) || !mesh.iter().all(|t| t.is_finite()) {
        return Err(Error::Domain("mesh must hold at least two increasing times".into()));
    }
    let mut y = y0;
    let mut k1 = rhs(mesh[0], &y);
    let mut states = vec![y];
    let mut derivs = vec![k1];
    for w in mesh.windows(2) {
        let (y_new, k7, _) = dopri_step(&mut rhs, w[0], &y, &k1, w[1] - w[0], w[1]);
        if !all_finite(&y_new) || !all_finite(&k7) {
            return Err(Error::Integration {
                t: w[1],
                reason: "state is not finite on the fixed mesh".into(),
            });
        }
        y = y_new;
        k1 = k7;
        states.push(y);
        derivs.push(k1);
    }
    Ok(Trajectory {
        times: mesh.to_vec(),
        states,
        derivs,
    })
}

/// Integrates `dy/dt = rhs(t, y)` from `t_span.0` to `t_span.1` (forward in
/// time) with adaptive Dormand–Prince 5(4) steps.
pub fn integrate_forward<const N: usize, F>(
    mut rhs: F,
    y0: [f64; N],
    t_span: (f64, f64),
    tol: &Tolerances,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let (t0, t1) = t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Domain(format!("invalid time span [{t0}, {t1}]")));
    }
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::Domain("tolerances must be positive".into()));
    }
    if !all_finite(&y0) {
        return Err(Error::Integration {
            t: t0,
            reason: "initial state is not finite".into(),
        });
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    if !all_finite(&k1) {
        return Err(Error::Integration {
            t,
            reason: "right-hand side is not finite at the initial state".into(),
        });
    }
    let mut times = vec![t];
    let mut states = vec![y];
    let mut derivs = vec![k1];

    let mut h = initial_step(&mut rhs, t, &y, &k1, span, tol);
    let mut last_rejected = false;
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Integration {
                t,
                reason: format!("exceeded {MAX_STEPS} steps"),
            });
        }
        let h_min = 64.0 * f64::EPSILON * t.abs().max(span).max(1.0);
        if h < h_min {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let last = t + h >= t1 || (t1 - (t + h)) < h_min;
        if last {
            h = t1 - t;
        }

        let t_new = if last { t1 } else { t + h };
        let (y_new, k7, err) = dopri_step(&mut rhs, t, &y, &k1, h, t_new);
        let err_norm = error_norm(&err, &y, &y_new, tol);

        if !err_norm.is_finite() || !all_finite(&y_new) || !all_finite(&k7) {
            // treat as a rejected step with a sharp reduction
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        let mut fac = if err_norm == 0.0 {
            FAC_MAX
        } else {
            SAFETY * err_norm.powf(-0.2)
        };
        if err_norm <= 1.0 {
            if last_rejected {
                fac = fac.min(1.0);
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            times.push(t);
            states.push(y);
            derivs.push(k1);
            last_rejected = false;
            h *= fac.clamp(FAC_MIN, FAC_MAX);
        } else {
            last_rejected = true;
            h *= fac.clamp(FAC_MIN, 1.0);
        }
    }

    Ok(Trajectory { times, states, derivs })
}

/// Integrates `dy/dt = rhs(t, y)` backward from the terminal value `y_end`
/// at `t_span.1` down to `t_span.0`. The returned trajectory is indexed in
/// increasing physical time.
pub fn integrate_backward<const N: usize, F>(
    mut rhs: F,
    y_end: [f64; N],
    t_span: (f64, f64),
    tol: &Tolerances,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::Domain(format!("invalid time span [{t0}, {t1}]")));
    }
    let reversed = integrate_forward(
        |s, y: &[f64; N]| {
            let f = rhs(t1 - s, y);
            let mut out = [0.0; N];
            for k in 0..N {
                out[k] = -f[k];
            }
            out
        },
        y_end,
        (0.0, t1 - t0),
        tol,
    )
    .map_err(|e| match e {
        Error::Integration { t, reason } => Error::Integration { t: t1 - t, reason },
        other => other,
    })?;

    let n = reversed.len();
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    for i in (0..n).rev() {
        times.push(t1 - reversed.times[i]);
        states.push(reversed.states[i]);
        let mut d = reversed.derivs[i];
        for v in d.iter_mut() {
            *v = -*v;
        }
        derivs.push(d);
    }
    times[0] = t0;
    times[n - 1] = t1;
    Ok(Trajectory { times, states, derivs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> Tolerances {
        Tolerances::new(1e-10, 1e-10)
    }

    #[test]
    fn zero_field_keeps_state() {
        let traj = integrate_forward(|_, _| [0.0, 0.0], [1.0, 0.0], (0.0, 10.0), &tight()).unwrap();
        for s in traj.states() {
            assert_eq!(*s, [1.0, 0.0]);
        }
        assert_eq!(traj.eval(3.7).unwrap(), [1.0, 0.0]);
        assert_eq!(traj.t_start(), 0.0);
        assert_eq!(traj.t_end(), 10.0);
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let tol = Tolerances::default();
        let traj = integrate_forward(|_, y| [-y[0], -y[1]], [1.0, 0.0], (0.0, 1.0), &tol).unwrap();
        let y = traj.last();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-7);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn mesh_replay_reproduces_adaptive_solve() {
        let rhs = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let traj = integrate_forward(rhs, [1.0, 0.0], (0.0, 6.0), &tight()).unwrap();
        let replay = integrate_on_mesh(rhs, [1.0, 0.0], traj.times()).unwrap();
        for (a, b) in traj.states().iter().zip(replay.states()) {
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
        }
        let y = replay.last();
        assert!((y[0] - 6f64.cos()).abs() < 1e-8, "{}", y[0]);
    }

    #[test]
    fn mesh_replay_converges_at_fifth_order() {
        let err = |n: usize| {
            let mesh: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let traj = integrate_on_mesh(|_, y| [-y[0]], [1.0], &mesh).unwrap();
            (traj.last()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(4) / err(8);
        assert!(ratio > 25.0 && ratio < 50.0, "ratio {ratio}");
        assert!(integrate_on_mesh(|_, y| [-y[0]], [1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn landau_radius_settles_on_limit_cycle() {
        let sigma = 0.151;
        let beta = sigma / (2.3 * 2.3);
        let rhs = |_t: f64, y: &[f64; 2]| {
            let r2 = y[0] * y[0] + y[1] * y[1];
            let g = sigma - beta * r2;
            [g * y[0], g * y[1]]
        };
        let traj = integrate_forward(rhs, [0.023, 0.0], (0.0, 70.0), &tight()).unwrap();
        let y = traj.last();
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        assert!((r - 2.3).abs() < 1e-3, "r(70) = {r}");
    }

    #[test]
    fn backward_zero_terminal_stays_zero() {
        let traj = integrate_backward(|_, y| [y[0], y[1]], [0.0, 0.0], (0.0, 5.0), &tight()).unwrap();
        assert!(traj.states().iter().all(|s| *s == [0.0, 0.0]));
        assert_eq!(traj.t_start(), 0.0);
        assert_eq!(traj.t_end(), 5.0);
    }

    #[test]
    fn backward_growth_matches_analytic() {
        // dy/dt = -y, y(1) = 1  =>  y(0) = e
        let tol = Tolerances::default();
        let traj = integrate_backward(|_, y| [-y[0], -y[1]], [1.0, 0.0], (0.0, 1.0), &tol).unwrap();
        let y0 = traj.first();
        let e = std::f64::consts::E;
        assert!((y0[0] - e).abs() <= e * 1e-6, "y(0) = {}", y0[0]);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_reversal_consistency() {
        // forward: y' = -y from y(0)=1; backward from the forward end value
        let tol = Tolerances::new(1e-9, 1e-9);
        let fwd = integrate_forward(|_, y| [-y[0]], [1.0], (0.0, 2.0), &tol).unwrap();
        let back = integrate_backward(|_, y| [-y[0]], fwd.last(), (0.0, 2.0), &tol).unwrap();
        let recovered = back.first()[0];
        assert!((recovered - 1.0).abs() <= 2.0 * 1e-9 * 10.0, "recovered {recovered}");
    }

    #[test]
    fn dense_output_exact_at_steps_and_accurate_between() {
        let tol = Tolerances::new(1e-10, 1e-10);
        let traj = integrate_forward(|_, y| [-y[0]], [1.0], (0.0, 3.0), &tol).unwrap();
        for (t, s) in traj.times().iter().zip(traj.states()) {
            assert_eq!(traj.eval(*t).unwrap(), *s);
        }
        let ts = traj.times();
        for w in ts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let h = w[1] - w[0];
            let y = traj.eval(mid).unwrap()[0];
            // cubic Hermite: error bounded by h^4/384 * max|y''''| plus the step error
            let bound = h.powi(4) / 384.0 + 1e-9;
            assert!((y - (-mid).exp()).abs() <= bound, "t={mid} h={h}");
        }
    }

    #[test]
    fn out_of_range_query_fails() {
        let traj = integrate_forward(|_, _| [0.0], [1.0], (0.0, 1.0), &tight()).unwrap();
        assert!(matches!(traj.eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(traj.eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn blow_up_reports_failure_time() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let err = integrate_forward(|_, y| [y[0] * y[0]], [1.0], (0.0, 2.0), &Tolerances::default()).unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!(t > 0.9 && t < 1.0 + 1e-6, "t = {t}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let exact = (-5.0f64).exp();
        let mut prev = f64::INFINITY;
        for tol in [1e-4, 1e-6, 1e-8, 1e-10] {
            let traj = integrate_forward(|_, y| [-y[0]], [1.0], (0.0, 5.0), &Tolerances::new(tol, tol)).unwrap();
            let err = (traj.last()[0] - exact).abs();
            assert!(err < prev, "tol {tol}: {err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn invalid_span_rejected() {
        assert!(integrate_forward(|_, _| [0.0], [1.0], (1.0, 1.0), &tight()).is_err());
        assert!(integrate_backward(|_, _| [0.0], [1.0], (2.0, 1.0), &tight()).is_err());
    }
}
