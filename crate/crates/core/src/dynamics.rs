//! Time integration (fixed-step RK4 and adaptive Dormand–Prince 5(4)),
//! trajectory recording, energy series, Newton refinement of stationary
//! points and convergence detection.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelParams, SemiclassicalState};
use crate::semiclassical::DissipatorKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps { t: f64, max_steps: u64 },
    #[error("initial state is not finite")]
    NonFiniteInitial,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 { dt: f64 },
    /// Adaptive Dormand–Prince 5(4) with mixed error control
    /// |err_i| ≤ atol + rtol·|y_i|.
    Rk45 { rtol: f64, atol: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk45 {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

fn default_stride() -> usize {
    1
}

fn default_max_steps() -> u64 {
    50_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub method: Method,
    pub t_end: f64,
    /// Record every n-th accepted step (the final state is always kept).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

impl SolverConfig {
    pub fn rk45(t_end: f64) -> Self {
        Self {
            method: Method::default(),
            t_end,
            record_stride: 1,
            max_steps: default_max_steps(),
        }
    }

    pub fn rk4(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::Rk4 { dt },
            t_end,
            record_stride: 1,
            max_steps: default_max_steps(),
        }
    }

    pub fn with_stride(self, record_stride: usize) -> Self {
        Self { record_stride, ..self }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |m: &str| Err(IntegrationError::InvalidConfig(m.to_owned()));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive and finite");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1");
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0 && dt.is_finite()) => bad("dt must be positive"),
            Method::Rk45 { rtol, atol } if !(rtol > 0.0 && atol > 0.0) => bad("rtol and atol must be positive"),
            _ => Ok(()),
        }
    }
}

/// Provenance attached to a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub params: Option<ModelParams>,
    pub dissipator: Option<DissipatorKind>,
    pub solver: SolverConfig,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    #[serde(with = "state_rows")]
    pub states: Vec<[f64; N]>,
    pub metadata: RunMetadata,
}

mod state_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[[f64; N]], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|r| r.to_vec()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<Vec<[f64; N]>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        rows.into_iter()
            .map(|r| <[f64; N]>::try_from(r).map_err(|r| serde::de::Error::invalid_length(r.len(), &"state row")))
            .collect()
    }
}

impl<const N: usize> Trajectory<N> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> [f64; N] {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn with_model(mut self, params: &ModelParams, kind: DissipatorKind) -> Self {
        self.metadata.params = Some(*params);
        self.metadata.dissipator = Some(kind);
        self
    }
}

impl Trajectory<5> {
    pub fn final_semiclassical(&self) -> SemiclassicalState {
        self.final_state().into()
    }

    /// Writes `t,q,p,sx,sy,sz,energy` rows with round-trip precision.
    pub fn write_csv<W: Write>(&self, params: &ModelParams, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,q,p,sx,sy,sz,energy")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let e = model::energy(&SemiclassicalState::from(*x), params);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t, x[0], x[1], x[2], x[3], x[4], e
            )?;
        }
        Ok(())
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(&[f64; N], f64)]) -> [f64; N] {
    let mut out = *y;
    for (k, c) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

fn finite<const N: usize>(x: &[f64; N]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Single classical RK4 step.
pub fn rk4_step<const N: usize, F>(f: &F, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let k1 = f(y);
    let k2 = f(&axpy(y, h, &[(&k1, 0.5)]));
    let k3 = f(&axpy(y, h, &[(&k2, 0.5)]));
    let k4 = f(&axpy(y, h, &[(&k3, 1.0)]));
    axpy(
        y,
        h,
        &[(&k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)],
    )
}

// Dormand–Prince 5(4) tableau; the node constants are unused because every
// right-hand side here is autonomous.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Recorder<const N: usize> {
    stride: usize,
    count: usize,
    times: Vec<f64>,
    states: Vec<[f64; N]>,
}

impl<const N: usize> Recorder<N> {
    fn new(stride: usize, y0: [f64; N]) -> Self {
        Self {
            stride,
            count: 0,
            times: vec![0.0],
            states: vec![y0],
        }
    }

    fn push(&mut self, t: f64, y: [f64; N], last: bool) {
        self.count += 1;
        if last || self.count.is_multiple_of(self.stride) {
            self.times.push(t);
            self.states.push(y);
        }
    }
}

/// Integrates ẏ = f(y) from t = 0 to `solver.t_end`.
pub fn integrate<const N: usize, F>(
    f: F,
    y0: [f64; N],
    solver: &SolverConfig,
) -> Result<Trajectory<N>, IntegrationError>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    solver.validate()?;
    if !finite(&y0) {
        return Err(IntegrationError::NonFiniteInitial);
    }
    let t_end = solver.t_end;
    let mut rec = Recorder::new(solver.record_stride, y0);
    let mut t = 0.0;
    let mut y = y0;
    let mut accepted = 0u64;
    let mut rejected = 0u64;

    match solver.method {
        Method::Rk4 { dt } => {
            // Integer step count avoids accumulating round-off in t.
            let n = (t_end / dt - 1e-9).ceil().max(1.0) as u64;
            if n > solver.max_steps {
                return Err(IntegrationError::MaxSteps {
                    t: 0.0,
                    max_steps: solver.max_steps,
                });
            }
            for i in 1..=n {
                let t_next = if i == n { t_end } else { i as f64 * dt };
                y = rk4_step(&f, &y, t_next - t);
                t = t_next;
                if !finite(&y) {
                    return Err(IntegrationError::NonFinite { t });
                }
                accepted += 1;
                rec.push(t, y, i == n);
            }
        }
        Method::Rk45 { rtol, atol } => {
            let err_norm = |y: &[f64; N], yn: &[f64; N], e: &[f64; N]| {
                (0..N)
                    .map(|i| e[i].abs() / (atol + rtol * y[i].abs().max(yn[i].abs())))
                    .fold(0.0, f64::max)
            };
            let mut k1 = f(&y);
            let mut h = initial_step(&f, &y, &k1, rtol, atol, t_end);
            loop {
                if accepted + rejected >= solver.max_steps {
                    return Err(IntegrationError::MaxSteps {
                        t,
                        max_steps: solver.max_steps,
                    });
                }
                let last = t + h >= t_end;
                if last {
                    h = t_end - t;
                }
                if h <= 1e-14 * t.abs().max(1.0) {
                    return Err(IntegrationError::StepUnderflow { t, h });
                }
                let k2 = f(&axpy(&y, h, &[(&k1, A21)]));
                let k3 = f(&axpy(&y, h, &[(&k1, A31), (&k2, A32)]));
                let k4 = f(&axpy(&y, h, &[(&k1, A41), (&k2, A42), (&k3, A43)]));
                let k5 = f(&axpy(&y, h, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)]));
                let k6 = f(&axpy(
                    &y,
                    h,
                    &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)],
                ));
                let yn = axpy(&y, h, &[(&k1, B1), (&k3, B3), (&k4, B4), (&k5, B5), (&k6, B6)]);
                let k7 = f(&yn);
                let e = axpy(
                    &[0.0; N],
                    h,
                    &[(&k1, E1), (&k3, E3), (&k4, E4), (&k5, E5), (&k6, E6), (&k7, E7)],
                );
                let err = if finite(&yn) {
                    err_norm(&y, &yn, &e)
                } else {
                    f64::INFINITY
                };
                if err <= 1.0 {
                    t = if last { t_end } else { t + h };
                    y = yn;
                    k1 = k7;
                    accepted += 1;
                    rec.push(t, y, last);
                    if last {
                        break;
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h *= factor;
                } else {
                    rejected += 1;
                    if !err.is_finite() {
                        h *= 0.2;
                        if !finite(&y) {
                            return Err(IntegrationError::NonFinite { t });
                        }
                    } else {
                        h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                    }
                }
            }
        }
    }

    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
        metadata: RunMetadata {
            params: None,
            dissipator: None,
            solver: *solver,
            accepted_steps: accepted,
            rejected_steps: rejected,
        },
    })
}

fn initial_step<const N: usize, F>(f: &F, y: &[f64; N], k1: &[f64; N], rtol: f64, atol: f64, t_end: f64) -> f64
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let scale = |i: usize| atol + rtol * y[i].abs();
    let d0 = (0..N).map(|i| (y[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
    let d1 = (0..N).map(|i| (k1[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, &[(k1, 1.0)]);
    let k2 = f(&y1);
    let d2 = (0..N).map(|i| ((k2[i] - k1[i]) / scale(i)).powi(2)).sum::<f64>().sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

/// Integrates a semiclassical right-hand side.
pub fn integrate_semiclassical<F>(
    rhs: F,
    x0: SemiclassicalState,
    solver: &SolverConfig,
) -> Result<Trajectory<5>, IntegrationError>
where
    F: Fn(&SemiclassicalState) -> SemiclassicalState,
{
    integrate(
        |y: &[f64; 5]| rhs(&SemiclassicalState::from(*y)).to_array(),
        x0.to_array(),
        solver,
    )
}

/// Newton iteration on rhs(x) = 0 with a central-difference Jacobian.
/// Stops when ‖rhs(x)‖∞ < tol.
pub fn refine_fixed_point<F>(
    rhs: F,
    guess: SemiclassicalState,
    tol: f64,
    max_iter: usize,
) -> Result<SemiclassicalState, NewtonError>
where
    F: Fn(&SemiclassicalState) -> SemiclassicalState,
{
    let eval = |x: &[f64; 5]| rhs(&SemiclassicalState::from(*x)).to_array();
    let norm = |v: &[f64; 5]| v.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let mut x = guess.to_array();
    let mut fx = eval(&x);
    let mut res = norm(&fx);
    for iter in 0..max_iter {
        if res < tol {
            return Ok(x.into());
        }
        let mut jac = DMatrix::<f64>::zeros(5, 5);
        for j in 0..5 {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (eval(&xp), eval(&xm));
            for i in 0..5 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_row_slice(&fx))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(NewtonError::SingularJacobian(iter))?;
        // Backtracking keeps the residual from growing far from the root.
        let mut lambda = 1.0;
        loop {
            let mut trial = x;
            for i in 0..5 {
                trial[i] -= lambda * step[i];
            }
            let ft = eval(&trial);
            let rt = norm(&ft);
            if rt < res || lambda < 1e-4 {
                x = trial;
                fx = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res < tol {
        Ok(x.into())
    } else {
        Err(NewtonError::NotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Pointwise (t, energy) along a semiclassical trajectory.
pub fn energy_series(traj: &Trajectory<5>, params: &ModelParams) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| (*t, model::energy(&SemiclassicalState::from(*x), params)))
        .collect()
}

/// First recorded time after which ‖x − target‖∞ < eps holds up to the end
/// of the trajectory, or `None` if the final state is not within eps.
pub fn detect_convergence<const N: usize>(traj: &Trajectory<N>, target: &[f64; N], eps: f64) -> Option<f64> {
    let dist = |x: &[f64; N]| (0..N).map(|i| (x[i] - target[i]).abs()).fold(0.0, f64::max);
    let mut first = None;
    for (t, x) in traj.times.iter().zip(&traj.states).rev() {
        if dist(x) < eps {
            first = Some(*t);
        } else {
            break;
        }
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassical::{self, ShiftedHoParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::rk4(0.0, 1.0).validate().is_err());
        assert!(SolverConfig::rk4(0.1, -1.0).validate().is_err());
        assert!(SolverConfig::rk45(1.0).with_stride(0).validate().is_err());
        let bad = SolverConfig {
            method: Method::Rk45 { rtol: 0.0, atol: 1e-12 },
            ..SolverConfig::rk45(1.0)
        };
        assert!(bad.validate().is_err());
        assert!(integrate(|y: &[f64; 1]| *y, [f64::NAN], &SolverConfig::rk45(1.0)).is_err());
    }

    #[test]
    fn exponential_growth_both_methods() {
        let exact = 1f64.exp();
        let rk45 = integrate(|y: &[f64; 1]| *y, [1.0], &SolverConfig::rk45(1.0)).unwrap();
        assert_abs_diff_eq!(rk45.final_state()[0], exact, epsilon = 1e-8);
        assert_eq!(rk45.final_time(), 1.0);
        let rk4 = integrate(|y: &[f64; 1]| *y, [1.0], &SolverConfig::rk4(1e-3, 1.0)).unwrap();
        assert_abs_diff_eq!(rk4.final_state()[0], exact, epsilon = 1e-12);
        assert_eq!(rk4.len(), 1001);
        assert!(rk4.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stride_keeps_final_point() {
        let tr = integrate(
            |y: &[f64; 1]| [-y[0]],
            [1.0],
            &SolverConfig::rk4(0.1, 1.05).with_stride(4),
        )
        .unwrap();
        assert_eq!(tr.final_time(), 1.05);
        assert_eq!(tr.times.len(), tr.states.len());
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn blow_up_is_reported() {
        let r = integrate(|y: &[f64; 1]| [y[0] * y[0]], [1.0], &SolverConfig::rk45(2.0));
        assert!(matches!(
            r,
            Err(IntegrationError::StepUnderflow { .. } | IntegrationError::NonFinite { .. })
        ));
        let r = integrate(|y: &[f64; 1]| [y[0] * y[0]], [1.0], &SolverConfig::rk4(0.1, 3.0));
        assert!(matches!(r, Err(IntegrationError::NonFinite { .. })));
    }

    #[test]
    fn rk4_fourth_order_on_damped_oscillator() {
        let hop = ShiftedHoParams {
            omega: 1.0,
            p0: 0.5,
            kappa: 0.1,
            shifted_dissipator: false,
        };
        let x0 = [1.0, 0.0];
        let t_end = 10.0;
        let exact = semiclassical::shifted_ho_exact(x0, t_end, &hop);
        let err = |dt: f64| {
            let tr = integrate(
                |y: &[f64; 2]| semiclassical::shifted_ho_rhs(*y, &hop),
                x0,
                &SolverConfig::rk4(dt, t_end),
            )
            .unwrap();
            let y = tr.final_state();
            (y[0] - exact[0]).abs().max((y[1] - exact[1]).abs())
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn newton_refines_bare_fixed_points() {
        let p = ModelParams::fig2();
        let f = |x: &SemiclassicalState| semiclassical::bare_rhs(x, &p);
        for fp in semiclassical::bare_fixed_points(&p) {
            let same = refine_fixed_point(f, fp, 1e-10, 20).unwrap();
            assert_eq!(same, fp);
            let mut noisy = fp.to_array();
            for (i, v) in noisy.iter_mut().enumerate() {
                *v += 1e-2 * [0.3, -0.7, 0.5, 0.9, -0.4][i];
            }
            let r = refine_fixed_point(f, noisy.into(), 1e-13, 50).unwrap();
            assert!(r.max_abs_diff(&fp) < 1e-10, "{r:?} vs {fp:?}");
        }
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let p = ModelParams::fig2().undamped();
        let f = |x: &SemiclassicalState| semiclassical::unitary_rhs(x, &p);
        let r = refine_fixed_point(f, SemiclassicalState::new(0.1, 0.0, 0.0, 0.0, 1.0), 1e-12, 10);
        assert!(r.is_err());
    }

    #[test]
    fn convergence_detection() {
        let tr = integrate(|y: &[f64; 1]| [-y[0]], [1.0], &SolverConfig::rk4(0.01, 20.0)).unwrap();
        let t = detect_convergence(&tr, &[0.0], 1e-3).unwrap();
        assert_abs_diff_eq!(t, (1e3f64).ln(), epsilon = 0.011);
        assert_eq!(detect_convergence(&tr, &[1.0], 1e-3), None);
        let flat = integrate(|_: &[f64; 1]| [0.0], [2.0], &SolverConfig::rk4(0.1, 1.0)).unwrap();
        assert_eq!(detect_convergence(&flat, &[2.0], 1e-12), Some(0.0));
    }

    #[test]
    fn csv_layout() {
        let p = ModelParams::fig2();
        let (x0, _) = model::normal_minimum(&p);
        let tr = integrate_semiclassical(|x| semiclassical::bare_rhs(x, &p), x0, &SolverConfig::rk4(0.5, 1.0)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,q,p,sx,sy,sz,energy"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -0.2]);
        assert_eq!(text.lines().count(), 4);
    }
}
