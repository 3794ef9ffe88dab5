//! Most probable paths: the curve equation in `(x, a)` variables with
//! `ẋ = a + z`, shooting for the two-point problem, and pointwise flows.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{NoiseModel, VectorFieldSpec};
use crate::geometry::{self, GeometryJet};
use crate::linalg::{mat_mul, mat_vec, norm, solve, transpose, zeros, Matrix};
use crate::om::Path;
use crate::scalar::Scalar;

/// Position and `a = ẋ − z(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MppState<T> {
    pub x: Vec<T>,
    pub a: Vec<T>,
}

/// Right-hand side from a precomputed geometry jet:
///
/// `dx = a + z`,
/// `da^k = −Γ^k_ij dx^i a^j − g*^{kj} ġ_ji a^i − g*^{km} a^i g_ij (∇_m z)^j + (∇f)^k`.
pub fn curve_rhs_from_jet<T: Scalar>(jet: &GeometryJet<T>, a: &[T]) -> (Vec<T>, Vec<T>) {
    let d = jet.dim;
    let dx: Vec<T> = a.iter().zip(&jet.z).map(|(&a, &z)| a + z).collect();
    let ga = mat_vec(&jet.metric, a);
    let gdot_a = mat_vec(&jet.metric_dt, a);
    // covector w_m = a^i g_ij (∇_m z)^j
    let w: Vec<T> = (0..d)
        .map(|m| (0..d).map(|j| ga[j] * jet.z_covariant[j][m]).sum())
        .collect();
    let mut lowered = gdot_a;
    for (l, w) in lowered.iter_mut().zip(&w) {
        *l += *w;
    }
    let raised = mat_vec(&jet.cometric, &lowered);
    let mut da = vec![T::zero(); d];
    for k in 0..d {
        let mut acc = jet.grad_f[k] - raised[k];
        for i in 0..d {
            for j in 0..d {
                acc -= jet.christoffel[k][i][j] * dx[i] * a[j];
            }
        }
        da[k] = acc;
    }
    (dx, da)
}

/// Time derivative of `(x, a)` along a most probable path.
pub fn curve_rhs<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    state: &MppState<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let jet = geometry::evaluate(noise, drift, t, &state.x)?;
    Ok(curve_rhs_from_jet(&jet, &state.a))
}

/// Integration settings shared by the MPP routines.
#[derive(Clone, Copy, Debug)]
pub struct MppOptions<T> {
    /// `‖x‖` above this aborts with `BlowUp`
    pub blowup_bound: T,
}

impl<T: Scalar> Default for MppOptions<T> {
    fn default() -> Self {
        MppOptions {
            blowup_bound: T::lit(1e6),
        }
    }
}

fn axpy<T: Scalar>(x: &[T], s: T, v: &[T]) -> Vec<T> {
    x.iter().zip(v).map(|(&x, &v)| x + s * v).collect()
}

/// Classic RK4 with `N` uniform steps from `x0` with initial velocity `v0`.
/// The returned path carries the analytic velocities `a + z`.
pub fn integrate_mpp<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    x0: &[T],
    v0: &[T],
    horizon: T,
    steps: usize,
    opts: &MppOptions<T>,
) -> Result<Path<T>> {
    if steps < 2 || horizon <= T::zero() {
        return Err(Error::InvalidInput(
            "integration needs a positive horizon and at least 2 steps".into(),
        ));
    }
    if v0.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: v0.len(),
        });
    }
    let h = horizon / T::lit(steps as f64);
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    let mut jet = geometry::evaluate(noise, drift, T::zero(), x0)?;
    let mut x = x0.to_vec();
    let mut a: Vec<T> = v0.iter().zip(&jet.z).map(|(&v, &z)| v - z).collect();
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut vels = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = h * T::lit(k as f64);
        let (k1x, k1a) = curve_rhs_from_jet(&jet, &a);
        times.push(t);
        points.push(x.clone());
        vels.push(k1x.clone());
        if k == steps {
            break;
        }
        let stage = |tt: T, dx: &[T], da: &[T], s: T| -> Result<(Vec<T>, Vec<T>)> {
            let xs = axpy(&x, s, dx);
            let as_ = axpy(&a, s, da);
            let j = geometry::evaluate(noise, drift, tt, &xs)?;
            Ok(curve_rhs_from_jet(&j, &as_))
        };
        let (k2x, k2a) = stage(t + half * h, &k1x, &k1a, half * h)?;
        let (k3x, k3a) = stage(t + half * h, &k2x, &k2a, half * h)?;
        let (k4x, k4a) = stage(t + h, &k3x, &k3a, h)?;
        for i in 0..x.len() {
            x[i] += h * sixth * (k1x[i] + two * k2x[i] + two * k3x[i] + k4x[i]);
            a[i] += h * sixth * (k1a[i] + two * k2a[i] + two * k3a[i] + k4a[i]);
        }
        let size = norm(&x);
        if !size.is_finite() || a.iter().any(|v| !v.is_finite()) || size > opts.blowup_bound {
            return Err(Error::BlowUp {
                t: (t + h).as_f64(),
                norm: size.as_f64(),
            });
        }
        jet = geometry::evaluate(noise, drift, t + h, &x)?;
    }
    Path::new(times, points)?.with_velocities(vels)
}

/// Two-point boundary problem `x(0) = x0`, `x(T) = xT`.
#[derive(Clone, Debug)]
pub struct ShootingProblem<T> {
    pub x0: Vec<T>,
    pub xt: Vec<T>,
    pub horizon: T,
    /// bound on the Euclidean endpoint residual
    pub tolerance: T,
    pub max_iter: usize,
    /// starting velocity; defaults to `(xT − x0)/T`
    pub initial_velocity: Option<Vec<T>>,
}

impl<T: Scalar> ShootingProblem<T> {
    pub fn new(x0: Vec<T>, xt: Vec<T>, horizon: T) -> Self {
        ShootingProblem {
            x0,
            xt,
            horizon,
            tolerance: T::lit(1e-10),
            max_iter: 50,
            initial_velocity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero()) {
            return Err(Error::InvalidInput(
                "shooting horizon must be positive".into(),
            ));
        }
        if self.x0.len() != self.xt.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x0.len(),
                got: self.xt.len(),
            });
        }
        if self.x0.iter().chain(&self.xt).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shooting endpoints"));
        }
        Ok(())
    }
}

/// Outcome of a shooting solve; `converged` is false when the iteration cap
/// was hit, in which case `v0`/`path` are the best iterate.
#[derive(Clone, Debug)]
pub struct ShootResult<T> {
    pub v0: Vec<T>,
    pub path: Path<T>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve the two-point problem; non-convergence is an error.
pub fn shoot<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    prob: &ShootingProblem<T>,
    steps: usize,
    opts: &MppOptions<T>,
) -> Result<ShootResult<T>> {
    let r = shoot_best_effort(noise, drift, prob, steps, opts)?;
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NonConvergence {
            iterations: r.iterations,
            residual: r.residual.as_f64(),
        })
    }
}

/// Damped Newton on the endpoint map with a central-difference Jacobian,
/// switching to Levenberg-Marquardt when a Newton step reduces the residual
/// by less than 1%. Returns the best iterate even when not converged.
pub fn shoot_best_effort<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    prob: &ShootingProblem<T>,
    steps: usize,
    opts: &MppOptions<T>,
) -> Result<ShootResult<T>> {
    prob.validate()?;
    let d = prob.x0.len();
    let endpoint = |v: &[T]| -> Result<(Path<T>, Vec<T>)> {
        let p = integrate_mpp(noise, drift, &prob.x0, v, prob.horizon, steps, opts)?;
        let r = p.end().iter().zip(&prob.xt).map(|(&a, &b)| a - b).collect();
        Ok((p, r))
    };
    let mut v = prob.initial_velocity.clone().unwrap_or_else(|| {
        prob.x0
            .iter()
            .zip(&prob.xt)
            .map(|(&a, &b)| (b - a) / prob.horizon)
            .collect()
    });
    let (mut path, mut r) = endpoint(&v)?;
    let mut res = norm(&r);
    let mut lm = false;
    let mut mu = T::zero();
    let mut iterations = 0;

    while res > prob.tolerance && iterations < prob.max_iter {
        iterations += 1;
        let jac = jacobian(&endpoint, &v, d)?;
        let mut improved = None;
        if !lm {
            let neg: Vec<T> = r.iter().map(|&x| -x).collect();
            match solve(&jac, &neg) {
                Some(delta) => {
                    let mut lambda = T::one();
                    for _ in 0..12 {
                        let trial = axpy(&v, lambda, &delta);
                        if let Some((p, rr)) = try_endpoint(&endpoint, &trial)? {
                            let rn = norm(&rr);
                            if rn < res {
                                improved = Some((trial, p, rr, rn));
                                break;
                            }
                        }
                        lambda *= T::lit(0.5);
                    }
                    let stalled = improved
                        .as_ref()
                        .is_none_or(|(_, _, _, rn)| *rn > T::lit(0.99) * res);
                    if stalled
                        && improved
                            .as_ref()
                            .is_none_or(|(_, _, _, rn)| *rn > prob.tolerance)
                    {
                        log::debug!(
                            "shooting: Newton stalled at residual {:e}, switching to LM",
                            res.as_f64()
                        );
                        lm = true;
                    }
                }
                None => lm = true,
            }
        }
        if improved.is_none() && lm {
            let jt = transpose(&jac);
            let jtj = mat_mul(&jt, &jac);
            let jtr = mat_vec(&jt, &r);
            if mu == T::zero() {
                let scale = (0..d).map(|i| jtj[i][i]).fold(T::zero(), T::max);
                mu = T::lit(1e-3) * scale.max(T::epsilon());
            }
            for _ in 0..30 {
                let mut a: Matrix<T> = jtj.clone();
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += mu;
                }
                let neg: Vec<T> = jtr.iter().map(|&x| -x).collect();
                if let Some(delta) = solve(&a, &neg) {
                    let trial = axpy(&v, T::one(), &delta);
                    if let Some((p, rr)) = try_endpoint(&endpoint, &trial)? {
                        let rn = norm(&rr);
                        if rn < res {
                            improved = Some((trial, p, rr, rn));
                            mu *= T::lit(0.3);
                            break;
                        }
                    }
                }
                mu *= T::lit(4.0);
            }
        }
        match improved {
            Some((nv, p, rr, rn)) => {
                v = nv;
                path = p;
                r = rr;
                res = rn;
            }
            None => break,
        }
    }
    Ok(ShootResult {
        converged: res <= prob.tolerance,
        v0: v,
        path,
        residual: res,
        iterations,
    })
}

/// Integration failures at a trial point are treated as a rejected step.
fn try_endpoint<T: Scalar>(
    endpoint: &impl Fn(&[T]) -> Result<(Path<T>, Vec<T>)>,
    v: &[T],
) -> Result<Option<(Path<T>, Vec<T>)>> {
    match endpoint(v) {
        Ok(x) => Ok(Some(x)),
        Err(Error::EllipticityViolation { .. } | Error::BlowUp { .. } | Error::NonFinite(_)) => {
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn jacobian<T: Scalar>(
    endpoint: &impl Fn(&[T]) -> Result<(Path<T>, Vec<T>)>,
    v: &[T],
    d: usize,
) -> Result<Matrix<T>> {
    let mut jac = zeros(d, d);
    for j in 0..d {
        let h = T::lit(1e-6) * v[j].abs().max(T::one());
        let mut plus = v.to_vec();
        plus[j] += h;
        let mut minus = v.to_vec();
        minus[j] -= h;
        let (_, rp) = endpoint(&plus)?;
        let (_, rm) = endpoint(&minus)?;
        for i in 0..d {
            jac[i][j] = (rp[i] - rm[i]) / (h + h);
        }
    }
    Ok(jac)
}

/// Per-point outcome of [`mpp_flow`].
#[derive(Clone, Debug)]
pub enum PointStatus<T> {
    Converged,
    NotConverged { residual: T },
    Failed(Error),
}

#[derive(Clone, Debug)]
pub struct FlowPoint<T> {
    pub path: Option<Path<T>>,
    pub v0: Vec<T>,
    /// endpoint residual (zero in forward mode)
    pub residual: T,
    pub iterations: usize,
    pub status: PointStatus<T>,
}

/// What [`mpp_flow`] should do with each point.
#[derive(Clone, Debug)]
pub enum FlowMode<'a, T> {
    /// integrate forward with `v0 = z(0, x0) + a0`; `a0 = 0` when absent
    Forward { initial_a: Option<&'a [Vec<T>]> },
    /// shoot to the matching target
    Targets {
        targets: &'a [Vec<T>],
        tolerance: T,
        max_iter: usize,
    },
}

/// Most probable flow evaluated independently on each point, in parallel.
/// Output order matches input order.
pub fn mpp_flow<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    points: &[Vec<T>],
    mode: &FlowMode<'_, T>,
    horizon: T,
    steps: usize,
    opts: &MppOptions<T>,
) -> Result<Vec<FlowPoint<T>>> {
    let expected = points.len();
    match mode {
        FlowMode::Forward { initial_a: Some(a) } if a.len() != expected => {
            return Err(Error::DimensionMismatch {
                expected,
                got: a.len(),
            })
        }
        FlowMode::Targets { targets, .. } if targets.len() != expected => {
            return Err(Error::DimensionMismatch {
                expected,
                got: targets.len(),
            })
        }
        _ => {}
    }
    let run = |i: usize| -> FlowPoint<T> {
        let x0 = &points[i];
        match mode {
            FlowMode::Forward { initial_a } => {
                let forward = || -> Result<(Vec<T>, Path<T>)> {
                    let jet = geometry::evaluate(noise, drift, T::zero(), x0)?;
                    let v0: Vec<T> = match initial_a {
                        Some(a) => jet.z.iter().zip(&a[i]).map(|(&z, &a)| z + a).collect(),
                        None => jet.z.clone(),
                    };
                    let p = integrate_mpp(noise, drift, x0, &v0, horizon, steps, opts)?;
                    Ok((v0, p))
                };
                match forward() {
                    Ok((v0, p)) => FlowPoint {
                        path: Some(p),
                        v0,
                        residual: T::zero(),
                        iterations: 0,
                        status: PointStatus::Converged,
                    },
                    Err(e) => failed(x0.len(), e),
                }
            }
            FlowMode::Targets {
                targets,
                tolerance,
                max_iter,
            } => {
                let mut prob = ShootingProblem::new(x0.clone(), targets[i].clone(), horizon);
                prob.tolerance = *tolerance;
                prob.max_iter = *max_iter;
                match shoot_best_effort(noise, drift, &prob, steps, opts) {
                    Ok(r) => FlowPoint {
                        status: if r.converged {
                            PointStatus::Converged
                        } else {
                            PointStatus::NotConverged {
                                residual: r.residual,
                            }
                        },
                        path: Some(r.path),
                        v0: r.v0,
                        residual: r.residual,
                        iterations: r.iterations,
                    },
                    Err(e) => failed(x0.len(), e),
                }
            }
        }
    };
    Ok((0..expected).into_par_iter().map(run).collect())
}

fn failed<T: Scalar>(d: usize, e: Error) -> FlowPoint<T> {
    FlowPoint {
        path: None,
        v0: vec![T::nan(); d],
        residual: T::nan(),
        iterations: 0,
        status: PointStatus::Failed(e),
    }
}

/// Deterministic flow `ẋ = u(t, x)` by RK4 (the zero-noise reference).
pub fn deterministic_flow<T: Scalar>(
    drift: &VectorFieldSpec<T>,
    x0: &[T],
    horizon: T,
    steps: usize,
) -> Result<Path<T>> {
    if steps < 2 || horizon <= T::zero() {
        return Err(Error::InvalidInput(
            "integration needs a positive horizon and at least 2 steps".into(),
        ));
    }
    let h = horizon / T::lit(steps as f64);
    let half = T::lit(0.5);
    let mut x = x0.to_vec();
    let mut times = vec![T::zero()];
    let mut points = vec![x.clone()];
    let mut vels = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let t = h * T::lit(k as f64);
        let k1 = drift.value(t, &x);
        let k2 = drift.value(t + half * h, &axpy(&x, half * h, &k1));
        let k3 = drift.value(t + half * h, &axpy(&x, half * h, &k2));
        let k4 = drift.value(t + h, &axpy(&x, h, &k3));
        for i in 0..x.len() {
            x[i] += h / T::lit(6.0) * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        vels.push(k1);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                t: (t + h).as_f64(),
                norm: f64::INFINITY,
            });
        }
        times.push(t + h);
        points.push(x.clone());
    }
    vels.push(drift.value(horizon, &x));
    Path::new(times, points)?.with_velocities(vels)
}
