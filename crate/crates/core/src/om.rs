//! Onsager-Machlup integrand and functional on discretized paths, and a
//! direct variational minimizer used to cross-check the MPP equation.

use crate::error::{Error, Result};
use crate::fields::{NoiseModel, VectorFieldSpec};
use crate::geometry::{self, GeometryJet};
use crate::linalg::{mat_vec, max_abs, Matrix};
use crate::scalar::Scalar;

/// A discretized curve `t_k ↦ x_k`.
///
/// `velocities` holds analytic velocities when the producer knows them (the
/// MPP integrator does); otherwise velocities come from [`Path::fd_velocities`].
#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec<T>>,
    pub velocities: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Path<T> {
    pub fn new(times: Vec<T>, points: Vec<Vec<T>>) -> Result<Self> {
        let p = Path {
            times,
            points,
            velocities: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_velocities(mut self, velocities: Vec<Vec<T>>) -> Result<Self> {
        if velocities.len() != self.points.len() || velocities.iter().any(|v| v.len() != self.dim())
        {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: velocities.len(),
            });
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    /// Uniform grid on `[0, horizon]` through the given points.
    pub fn uniform(horizon: T, points: Vec<Vec<T>>) -> Result<Self> {
        let n = points.len().saturating_sub(1).max(1);
        Path::new(uniform_times(horizon, n), points)
    }

    /// Straight line `x0 → x1` on a uniform grid with `n` steps.
    pub fn straight_line(x0: &[T], x1: &[T], horizon: T, n: usize) -> Result<Self> {
        Self::from_fn(horizon, n, |s| {
            x0.iter().zip(x1).map(|(&a, &b)| a + (b - a) * s).collect()
        })
    }

    /// Uniform path `x_k = curve(t_k / horizon)`.
    pub fn from_fn(horizon: T, n: usize, curve: impl Fn(T) -> Vec<T>) -> Result<Self> {
        let times = uniform_times(horizon, n);
        let points = times.iter().map(|&t| curve(t / horizon)).collect();
        Path::new(times, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a path needs at least 3 nodes, got {}",
                self.points.len()
            )));
        }
        if self.times.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: self.times.len(),
            });
        }
        let d = self.points[0].len();
        if d == 0 || self.points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidInput(
                "path points have inconsistent dimension".into(),
            ));
        }
        if self.times.iter().any(|t| !t.is_finite())
            || self.points.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("path"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "path times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn start(&self) -> &[T] {
        &self.points[0]
    }

    pub fn end(&self) -> &[T] {
        &self.points[self.points.len() - 1]
    }

    /// Finite-difference velocities: centered in the interior, one-sided at
    /// the ends.
    pub fn fd_velocities(&self) -> Vec<Vec<T>> {
        let d = self.dim();
        (0..self.len())
            .map(|i| {
                let (idx, w) = stencil(&self.times, i);
                (0..d)
                    .map(|c| (0..3).map(|s| w[s] * self.points[idx[s]][c]).sum())
                    .collect()
            })
            .collect()
    }

    /// Largest Euclidean distance between corresponding nodes.
    pub fn sup_distance(&self, other: &Path<T>) -> T {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&p, &q)| (p - q) * (p - q))
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

fn uniform_times<T: Scalar>(horizon: T, n: usize) -> Vec<T> {
    let step = horizon / T::lit(n as f64);
    (0..=n).map(|k| step * T::lit(k as f64)).collect()
}

/// Node indices and weights of the three-point velocity stencil at node `i`:
/// centered inside, one-sided second order at the ends, exact for quadratics
/// on any grid.
fn stencil<T: Scalar>(times: &[T], i: usize) -> ([usize; 3], [T; 3]) {
    let n = times.len() - 1;
    let two = T::lit(2.0);
    if i == 0 {
        let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
        let s = h1 + h2;
        (
            [0, 1, 2],
            [-(two * h1 + h2) / (h1 * s), s / (h1 * h2), -h1 / (h2 * s)],
        )
    } else if i == n {
        let (h1, h2) = (times[n - 1] - times[n - 2], times[n] - times[n - 1]);
        let s = h1 + h2;
        (
            [n - 2, n - 1, n],
            [h2 / (h1 * s), -s / (h1 * h2), (h1 + two * h2) / (h2 * s)],
        )
    } else {
        let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        let s = h1 + h2;
        (
            [i - 1, i, i + 1],
            [-h2 / (h1 * s), (h2 - h1) / (h1 * h2), h1 / (h2 * s)],
        )
    }
}

/// Midpoint time, position and secant velocity of interval `i`.
fn interval<T: Scalar>(path: &Path<T>, i: usize) -> (T, T, Vec<T>, Vec<T>) {
    let half = T::lit(0.5);
    let h = path.times[i + 1] - path.times[i];
    let (a, b) = (&path.points[i], &path.points[i + 1]);
    let mid = a.iter().zip(b).map(|(&p, &q)| half * (p + q)).collect();
    let vel = a.iter().zip(b).map(|(&p, &q)| (q - p) / h).collect();
    (half * (path.times[i] + path.times[i + 1]), h, mid, vel)
}

/// `H = ½|v − z|²_g + f` evaluated from a precomputed geometry jet.
pub fn integrand_from_jet<T: Scalar>(jet: &GeometryJet<T>, v: &[T]) -> T {
    let a: Vec<T> = v.iter().zip(&jet.z).map(|(&v, &z)| v - z).collect();
    T::lit(0.5) * jet.norm_sq(&a) + jet.f
}

/// Onsager-Machlup integrand `H(t, x, v) = ½(v − z)ᵀ g (v − z) + f`.
pub fn om_integrand<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
    v: &[T],
) -> Result<T> {
    let jet = geometry::evaluate(noise, drift, t, x)?;
    if v.len() != jet.dim {
        return Err(Error::DimensionMismatch {
            expected: jet.dim,
            got: v.len(),
        });
    }
    Ok(integrand_from_jet(&jet, v))
}

/// Discrete functional `Σ_i h_i H(t_{i+½}, x̄_i, (x_{i+1} − x_i)/h_i)`.
///
/// Midpoint rule with secant velocities: second order, and its gradient is a
/// consistent discretization of the Euler-Lagrange operator at every node,
/// endpoints' neighbours included.
pub fn om_integral<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    path: &Path<T>,
) -> Result<T> {
    path.validate()?;
    let mut total = T::zero();
    for i in 0..path.len() - 1 {
        let (t, h, x, v) = interval(path, i);
        let jet = geometry::evaluate(noise, drift, t, &x)?;
        total += h * integrand_from_jet(&jet, &v);
    }
    Ok(total)
}

/// Value of [`om_integral`] and its exact gradient with respect to every node
/// (endpoints included).
pub fn om_gradient<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    path: &Path<T>,
) -> Result<(T, Vec<Vec<T>>)> {
    path.validate()?;
    let d = path.dim();
    let n = path.len();
    let half = T::lit(0.5);
    let mut total = T::zero();
    let mut grad = vec![vec![T::zero(); d]; n];
    for i in 0..n - 1 {
        let (t, h, x, v) = interval(path, i);
        let jet = geometry::evaluate(noise, drift, t, &x)?;
        let a: Vec<T> = v.iter().zip(&jet.z).map(|(&v, &z)| v - z).collect();
        let ga = mat_vec(&jet.metric, &a);
        total += h * (half * crate::linalg::dot(&a, &ga) + jet.f);
        // ∂_m H = ½ aᵀ(∂_m g)a − (∂_m z)ᵀ g a + ∂_m f ;  ∂_v H = g a
        for m in 0..d {
            let mut dh = jet.df[m];
            for p in 0..d {
                for q in 0..d {
                    dh += half * a[p] * jet.metric_grad[m][p][q] * a[q];
                }
                dh -= jet.z_jacobian[p][m] * ga[p];
            }
            grad[i][m] += half * h * dh - ga[m];
            grad[i + 1][m] += half * h * dh + ga[m];
        }
    }
    Ok((total, grad))
}

/// Settings for [`direct_minimize`].
#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions<T> {
    /// stop when the max-norm of the interior gradient falls below this
    pub gradient_tolerance: T,
    pub max_iterations: usize,
    /// number of stored L-BFGS correction pairs
    pub memory: usize,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        MinimizeOptions {
            gradient_tolerance: T::lit(1e-8),
            max_iterations: 10_000,
            memory: 12,
        }
    }
}

/// Result of a successful [`direct_minimize`] call.
#[derive(Clone, Debug)]
pub struct Minimized<T> {
    pub path: Path<T>,
    pub value: T,
    pub gradient_norm: T,
    pub iterations: usize,
}

/// Minimize the discrete functional over interior nodes with endpoints pinned.
///
/// L-BFGS preconditioned by the kinetic Hessian of the flat metric, so the
/// iteration count does not grow with the grid size. Fails with
/// `NonConvergence` when the iteration cap is hit.
pub fn direct_minimize<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    init: &Path<T>,
    opts: &MinimizeOptions<T>,
) -> Result<Minimized<T>> {
    init.validate()?;
    let d = init.dim();
    let n = init.len();
    let m = n - 2;
    let precond = KineticPreconditioner::new(&init.times);

    let mut path = Path::new(init.times.clone(), init.points.clone())?;
    let pack = |g: &[Vec<T>]| -> Vec<T> { g[1..n - 1].iter().flatten().copied().collect() };
    let (mut value, g_full) = om_gradient(noise, drift, &path)?;
    let mut grad = pack(&g_full);
    let mut history: Vec<(Vec<T>, Vec<T>, T)> = Vec::new();

    for iter in 0..=opts.max_iterations {
        let gnorm = max_abs(&grad);
        if gnorm < opts.gradient_tolerance {
            path.velocities = None;
            return Ok(Minimized {
                path,
                value,
                gradient_norm: gnorm,
                iterations: iter,
            });
        }
        if iter == opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: gnorm.as_f64(),
            });
        }

        // two-loop recursion with H0 = γ P⁻¹
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * crate::linalg::dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let mut r = precond.solve(&q, d, m);
        if let Some((s, y, _)) = history.last() {
            let py = precond.solve(y, d, m);
            let gamma = crate::linalg::dot(s, y) / crate::linalg::dot(y, &py);
            r.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = *rho * crate::linalg::dot(y, &r);
            for (ri, &si) in r.iter_mut().zip(s) {
                *ri += (*a - b) * si;
            }
        }
        let mut dir: Vec<T> = r.iter().map(|&v| -v).collect();
        let mut slope = crate::linalg::dot(&grad, &dir);
        if slope >= T::zero() {
            history.clear();
            dir = precond.solve(&grad, d, m).iter().map(|&v| -v).collect();
            slope = crate::linalg::dot(&grad, &dir);
        }

        // backtracking Armijo search
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial = displaced(&path, &dir, step, d)?;
            match om_gradient(noise, drift, &trial) {
                Ok((v, g)) => {
                    let g = pack(&g);
                    let armijo = v <= value + T::lit(1e-4) * step * slope;
                    // near the optimum the decrease drowns in round-off
                    let flat = (v - value).abs()
                        <= T::lit(64.0) * T::epsilon() * value.abs().max(T::one())
                        && max_abs(&g) < gnorm;
                    if armijo || flat {
                        accepted = Some((trial, v, g));
                        break;
                    }
                }
                Err(Error::EllipticityViolation { .. }) | Err(Error::NonFinite(_)) => {}
                Err(e) => return Err(e),
            }
            step *= T::lit(0.5);
        }
        let Some((trial, v, g)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: gnorm.as_f64(),
            });
        };
        let s: Vec<T> = dir.iter().map(|&p| p * step).collect();
        let y: Vec<T> = g.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy = crate::linalg::dot(&s, &y);
        if sy > T::zero() {
            if history.len() == opts.memory {
                history.remove(0);
            }
            history.push((s, y, sy.recip()));
        }
        path = trial;
        value = v;
        grad = g;
    }
    unreachable!("loop returns on the final iteration")
}

fn displaced<T: Scalar>(path: &Path<T>, dir: &[T], step: T, d: usize) -> Result<Path<T>> {
    let mut points = path.points.clone();
    let n = points.len();
    for (k, p) in points[1..n - 1].iter_mut().enumerate() {
        for c in 0..d {
            p[c] += step * dir[k * d + c];
        }
    }
    Path::new(path.times.clone(), points)
}

/// Cholesky factor of the interior block of the Hessian of the flat kinetic
/// energy `½Σ_i |x_{i+1} − x_i|²/h_i`.
struct KineticPreconditioner<T> {
    chol: Matrix<T>,
}

impl<T: Scalar> KineticPreconditioner<T> {
    fn new(times: &[T]) -> Self {
        let n = times.len();
        let m = n - 2;
        let mut k: Matrix<T> = crate::linalg::zeros(m, m);
        for i in 0..n - 1 {
            let r = (times[i + 1] - times[i]).recip();
            let (p, q) = (i, i + 1);
            if p >= 1 {
                k[p - 1][p - 1] += r;
            }
            if q <= m {
                k[q - 1][q - 1] += r;
            }
            if p >= 1 && q <= m {
                k[p - 1][q - 1] -= r;
                k[q - 1][p - 1] -= r;
            }
        }
        // Cholesky, in place in the lower triangle
        for j in 0..m {
            let mut diag: T = k[j][j];
            for p in 0..j {
                diag -= k[j][p] * k[j][p];
            }
            let diag = diag.max(T::epsilon()).sqrt();
            k[j][j] = diag;
            for i in j + 1..m {
                let mut v = k[i][j];
                for p in 0..j {
                    v -= k[i][p] * k[j][p];
                }
                k[i][j] = v / diag;
            }
        }
        KineticPreconditioner { chol: k }
    }

    /// Apply the inverse to a packed interior vector, one coordinate at a time.
    fn solve(&self, r: &[T], d: usize, m: usize) -> Vec<T> {
        let l = &self.chol;
        let mut out = vec![T::zero(); r.len()];
        let mut y = vec![T::zero(); m];
        for c in 0..d {
            for i in 0..m {
                let mut v = r[i * d + c];
                for p in 0..i {
                    v -= l[i][p] * y[p];
                }
                y[i] = v / l[i][i];
            }
            for i in (0..m).rev() {
                let mut v = y[i];
                for p in i + 1..m {
                    v -= l[p][i] * out[p * d + c];
                }
                out[i * d + c] = v / l[i][i];
            }
        }
        out
    }
}
