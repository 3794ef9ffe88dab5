//! Parametric time-dependent vector fields with exact jets.
//!
//! Every variant evaluates through two independent code paths: a plain
//! floating point [`VectorFieldSpec::value`] used by the SDE simulators and
//! the finite-difference oracle, and a [`Taylor`] path that yields spatial
//! derivatives up to third order exactly.

use std::sync::Arc;

use crate::epdiff1d::DriftField;
use crate::error::{Error, Result};
use crate::linalg::{zeros, zeros3, Matrix, Tensor3};
use crate::scalar::Scalar;
use crate::taylor::{Taylor, MAX_DIM, MAX_ORDER};

/// Smooth scalar schedule `s(t)` for [`VectorFieldSpec::TimeScaled`].
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    /// `offset + slope·t`
    Linear {
        offset: T,
        slope: T,
    },
    /// `offset + amplitude·sin(frequency·t + phase)`
    Sine {
        offset: T,
        amplitude: T,
        frequency: T,
        phase: T,
    },
    /// `scale·exp(rate·t)`
    Exponential {
        scale: T,
        rate: T,
    },
}

impl<T: Scalar> Schedule<T> {
    pub fn value(&self, t: T) -> T {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::Linear { offset, slope } => offset + slope * t,
            Schedule::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (frequency * t + phase).sin(),
            Schedule::Exponential { scale, rate } => scale * (rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: T) -> T {
        match *self {
            Schedule::Constant(_) => T::zero(),
            Schedule::Linear { slope, .. } => slope,
            Schedule::Sine {
                amplitude,
                frequency,
                phase,
                ..
            } => amplitude * frequency * (frequency * t + phase).cos(),
            Schedule::Exponential { scale, rate } => scale * rate * (rate * t).exp(),
        }
    }
}

/// A vector field on an open subset of `R^d`, possibly time dependent.
#[derive(Clone, Debug)]
pub enum VectorFieldSpec<T> {
    Constant(Vec<T>),
    /// `matrix·x + offset`
    Linear {
        matrix: Matrix<T>,
        offset: Vec<T>,
    },
    /// `amplitude · exp(−‖x − center‖² / (2 width²))`
    GaussianKernel {
        center: Vec<T>,
        amplitude: Vec<T>,
        width: T,
    },
    /// `exp(−beta ‖x‖²) e_axis` in `R^dim`
    ConformalAxis {
        dim: usize,
        axis: usize,
        beta: T,
    },
    /// `Σ_i exp(−‖x − q_i‖² / (2 width²)) p_i`
    KernelMomentum {
        points: Vec<Vec<T>>,
        momenta: Vec<Vec<T>>,
        width: T,
    },
    /// `amplitude · sin(wavevector·x + phase)`
    Sinusoid {
        amplitude: Vec<T>,
        wavevector: Vec<T>,
        phase: T,
    },
    Sum(Vec<VectorFieldSpec<T>>),
    TimeScaled {
        field: Box<VectorFieldSpec<T>>,
        schedule: Schedule<T>,
    },
    /// Time and space spline of a drift sampled on a periodic 1D grid.
    Grid(Arc<DriftField<T>>),
}

/// Spatial Taylor expansions of each component and of its time derivative.
///
/// Storage is fixed at three components; only the first `dim` are used.
#[derive(Clone, Copy, Debug)]
pub struct FieldTaylor<T> {
    pub dim: usize,
    pub value: [Taylor<T>; MAX_DIM],
    pub dt: [Taylor<T>; MAX_DIM],
    /// components that received any contribution; the others are exactly zero
    pub active: [bool; MAX_DIM],
    pub dt_active: [bool; MAX_DIM],
}

impl<T: Scalar> FieldTaylor<T> {
    fn zero(dim: usize, order: usize) -> Self {
        FieldTaylor {
            dim,
            value: [Taylor::zero(dim, order); MAX_DIM],
            dt: [Taylor::zero(dim, order); MAX_DIM],
            active: [false; MAX_DIM],
            dt_active: [false; MAX_DIM],
        }
    }
}

/// Value and spatial derivatives of a vector field at one point.
///
/// `jacobian[j][i] = ∂_i v^j`, `hessians[j][i][k] = ∂_i∂_k v^j`,
/// `third[j][i][k][l] = ∂_i∂_k∂_l v^j`. Tensors above the requested order are
/// left empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T> {
    pub order: usize,
    pub value: Vec<T>,
    pub jacobian: Matrix<T>,
    pub hessians: Vec<Matrix<T>>,
    pub third: Vec<Tensor3<T>>,
    pub time_derivative: Vec<T>,
}

/// The Gaussian factorizes over coordinates; along each axis the normalized
/// Taylor coefficients of `exp(−s(y+h)²/2) / exp(−s y²/2)` in `h` are
/// `1, −sy, (s²y² − s)/2, (3s²y − s³y³)/6`.
fn gaussian_taylor<T: Scalar>(x: &[T], center: &[T], width: T, order: usize) -> Taylor<T> {
    let s = (width * width).recip();
    let mut r2 = T::zero();
    let mut factors = [[T::zero(); MAX_ORDER + 1]; MAX_DIM];
    for ((f, &a), &c) in factors.iter_mut().zip(x).zip(center) {
        let y = a - c;
        r2 += y * y;
        let sy = s * y;
        *f = [
            T::one(),
            -sy,
            (sy * sy - s) / T::lit(2.0),
            (T::lit(3.0) * s * sy - sy * sy * sy) / T::lit(6.0),
        ];
    }
    Taylor::separable(order, (-s * r2 / T::lit(2.0)).exp(), &factors[..x.len()])
}

fn gaussian_value<T: Scalar>(x: &[T], center: &[T], width: T) -> T {
    let r2: T = x.iter().zip(center).map(|(&a, &c)| (a - c) * (a - c)).sum();
    (-r2 / (T::lit(2.0) * width * width)).exp()
}

impl<T: Scalar> VectorFieldSpec<T> {
    /// Spatial dimension of the field, when it can be inferred.
    pub fn dim(&self) -> Option<usize> {
        match self {
            VectorFieldSpec::Constant(a) => Some(a.len()),
            VectorFieldSpec::Linear { offset, .. } => Some(offset.len()),
            VectorFieldSpec::GaussianKernel { center, .. } => Some(center.len()),
            VectorFieldSpec::ConformalAxis { dim, .. } => Some(*dim),
            VectorFieldSpec::KernelMomentum {
                points, momenta, ..
            } => points.first().or(momenta.first()).map(Vec::len),
            VectorFieldSpec::Sinusoid { amplitude, .. } => Some(amplitude.len()),
            VectorFieldSpec::Sum(list) => list.iter().find_map(|f| f.dim()),
            VectorFieldSpec::TimeScaled { field, .. } => field.dim(),
            VectorFieldSpec::Grid(_) => Some(1),
        }
    }

    /// Check parameters for consistency with dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let check_len = |got: usize| {
            if got == d {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: d, got })
            }
        };
        let finite = |v: &[T], what: &'static str| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(what))
            }
        };
        match self {
            VectorFieldSpec::Constant(a) => {
                check_len(a.len())?;
                finite(a, "constant field")
            }
            VectorFieldSpec::Linear { matrix, offset } => {
                check_len(offset.len())?;
                check_len(matrix.len())?;
                for row in matrix {
                    check_len(row.len())?;
                    finite(row, "linear field matrix")?;
                }
                finite(offset, "linear field offset")
            }
            VectorFieldSpec::GaussianKernel {
                center,
                amplitude,
                width,
            } => {
                check_len(center.len())?;
                check_len(amplitude.len())?;
                finite(center, "kernel center")?;
                finite(amplitude, "kernel amplitude")?;
                if !(*width > T::zero()) {
                    return Err(Error::InvalidInput("kernel width must be positive".into()));
                }
                Ok(())
            }
            VectorFieldSpec::ConformalAxis { dim, axis, beta } => {
                check_len(*dim)?;
                if *axis >= d {
                    return Err(Error::InvalidInput(format!("axis {axis} out of range")));
                }
                finite(&[*beta], "conformal beta")
            }
            VectorFieldSpec::KernelMomentum {
                points,
                momenta,
                width,
            } => {
                if points.len() != momenta.len() {
                    return Err(Error::InvalidInput(
                        "kernel momentum needs one momentum per point".into(),
                    ));
                }
                for (q, p) in points.iter().zip(momenta) {
                    check_len(q.len())?;
                    check_len(p.len())?;
                    finite(q, "kernel point")?;
                    finite(p, "kernel momentum")?;
                }
                if !(*width > T::zero()) {
                    return Err(Error::InvalidInput("kernel width must be positive".into()));
                }
                Ok(())
            }
            VectorFieldSpec::Sinusoid {
                amplitude,
                wavevector,
                phase,
            } => {
                check_len(amplitude.len())?;
                check_len(wavevector.len())?;
                finite(amplitude, "sinusoid amplitude")?;
                finite(wavevector, "sinusoid wavevector")?;
                finite(&[*phase], "sinusoid phase")
            }
            VectorFieldSpec::Sum(list) => list.iter().try_for_each(|f| f.validate(d)),
            VectorFieldSpec::TimeScaled { field, .. } => field.validate(d),
            VectorFieldSpec::Grid(_) => check_len(1),
        }
    }

    /// Field value at `(t, x)`.
    pub fn value(&self, t: T, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.accumulate(t, x, T::one(), &mut out);
        out
    }

    /// `out += weight · v(t, x)`
    pub fn accumulate(&self, t: T, x: &[T], weight: T, out: &mut [T]) {
        match self {
            VectorFieldSpec::Constant(a) => {
                for (o, &v) in out.iter_mut().zip(a) {
                    *o += weight * v;
                }
            }
            VectorFieldSpec::Linear { matrix, offset } => {
                for ((o, row), &b) in out.iter_mut().zip(matrix).zip(offset) {
                    let ax: T = row.iter().zip(x).map(|(&m, &v)| m * v).sum();
                    *o += weight * (ax + b);
                }
            }
            VectorFieldSpec::GaussianKernel {
                center,
                amplitude,
                width,
            } => {
                let k = weight * gaussian_value(x, center, *width);
                for (o, &a) in out.iter_mut().zip(amplitude) {
                    *o += k * a;
                }
            }
            VectorFieldSpec::ConformalAxis { axis, beta, .. } => {
                let r2: T = x.iter().map(|&v| v * v).sum();
                out[*axis] += weight * (-*beta * r2).exp();
            }
            VectorFieldSpec::KernelMomentum {
                points,
                momenta,
                width,
            } => {
                for (q, p) in points.iter().zip(momenta) {
                    let k = weight * gaussian_value(x, q, *width);
                    for (o, &pi) in out.iter_mut().zip(p) {
                        *o += k * pi;
                    }
                }
            }
            VectorFieldSpec::Sinusoid {
                amplitude,
                wavevector,
                phase,
            } => {
                let theta: T = *phase + wavevector.iter().zip(x).map(|(&k, &v)| k * v).sum::<T>();
                let s = weight * theta.sin();
                for (o, &a) in out.iter_mut().zip(amplitude) {
                    *o += s * a;
                }
            }
            VectorFieldSpec::Sum(list) => {
                for f in list {
                    f.accumulate(t, x, weight, out);
                }
            }
            VectorFieldSpec::TimeScaled { field, schedule } => {
                field.accumulate(t, x, weight * schedule.value(t), out)
            }
            VectorFieldSpec::Grid(drift) => out[0] += weight * drift.value(t, x[0]),
        }
    }

    /// Taylor expansion of every component (and its time derivative) around `x`.
    pub fn taylor(&self, t: T, x: &[T], order: usize) -> FieldTaylor<T> {
        let d = x.len();
        let mut out = FieldTaylor::zero(d, order);
        self.taylor_into(t, x, order, T::one(), T::zero(), &mut out);
        out
    }

    /// `out.value += w·v`, `out.dt += w·∂_t v + w_dot·v`.
    fn taylor_into(&self, t: T, x: &[T], order: usize, w: T, w_dot: T, out: &mut FieldTaylor<T>) {
        let d = x.len();
        let add_scaled = |out: &mut FieldTaylor<T>, comp: usize, k: Taylor<T>, a: T| {
            if a == T::zero() {
                return;
            }
            out.value[comp] += k.scale(w * a);
            out.active[comp] = true;
            if w_dot != T::zero() {
                out.dt[comp] += k.scale(w_dot * a);
                out.dt_active[comp] = true;
            }
        };
        match self {
            VectorFieldSpec::Constant(a) => {
                let one = Taylor::constant(d, order, T::one());
                for (j, &aj) in a.iter().enumerate() {
                    add_scaled(out, j, one, aj);
                }
            }
            VectorFieldSpec::Linear { matrix, offset } => {
                let vars = Taylor::variables(x, order);
                for (j, (row, &b)) in matrix.iter().zip(offset).enumerate() {
                    let mut comp = Taylor::constant(d, order, b);
                    for (&m, v) in row.iter().zip(&vars) {
                        comp += v.scale(m);
                    }
                    add_scaled(out, j, comp, T::one());
                }
            }
            VectorFieldSpec::GaussianKernel {
                center,
                amplitude,
                width,
            } => {
                let k = gaussian_taylor(x, center, *width, order);
                for (j, &aj) in amplitude.iter().enumerate() {
                    if aj != T::zero() {
                        add_scaled(out, j, k, aj);
                    }
                }
            }
            VectorFieldSpec::ConformalAxis { axis, beta, .. } => {
                let origin = vec![T::zero(); d];
                let width = (T::lit(2.0) * *beta).sqrt().recip();
                let k = if *beta == T::zero() {
                    Taylor::constant(d, order, T::one())
                } else if *beta > T::zero() {
                    gaussian_taylor(x, &origin, width, order)
                } else {
                    let mut q = Taylor::zero(d, order);
                    for (i, &xi) in x.iter().enumerate() {
                        let y = Taylor::variable(d, order, i, xi);
                        q += y * y;
                    }
                    q.scale(-*beta).exp()
                };
                add_scaled(out, *axis, k, T::one());
            }
            VectorFieldSpec::KernelMomentum {
                points,
                momenta,
                width,
            } => {
                for (q, p) in points.iter().zip(momenta) {
                    let k = gaussian_taylor(x, q, *width, order);
                    for (j, &pj) in p.iter().enumerate() {
                        if pj != T::zero() {
                            add_scaled(out, j, k, pj);
                        }
                    }
                }
            }
            VectorFieldSpec::Sinusoid {
                amplitude,
                wavevector,
                phase,
            } => {
                let mut theta = Taylor::constant(d, order, *phase);
                for (i, (&k, &xi)) in wavevector.iter().zip(x).enumerate() {
                    theta += Taylor::variable(d, order, i, xi).scale(k);
                }
                let s = theta.sin();
                for (j, &aj) in amplitude.iter().enumerate() {
                    if aj != T::zero() {
                        add_scaled(out, j, s, aj);
                    }
                }
            }
            VectorFieldSpec::Sum(list) => {
                for f in list {
                    f.taylor_into(t, x, order, w, w_dot, out);
                }
            }
            VectorFieldSpec::TimeScaled { field, schedule } => {
                let s = schedule.value(t);
                let s_dot = schedule.derivative(t);
                field.taylor_into(t, x, order, w * s, w_dot * s + w * s_dot, out);
            }
            VectorFieldSpec::Grid(drift) => {
                let (derivs, dt_derivs) = drift.jet(t, x[0]);
                let v = Taylor::from_derivatives_1d(order, derivs);
                out.value[0] += v.scale(w);
                out.dt[0] += Taylor::from_derivatives_1d(order, dt_derivs).scale(w);
                out.active[0] = true;
                out.dt_active[0] = true;
                if w_dot != T::zero() {
                    out.dt[0] += v.scale(w_dot);
                }
            }
        }
    }

    /// Value, spatial derivatives up to `order` and time derivative at `(t, x)`.
    pub fn eval_jet(&self, t: T, x: &[T], order: usize) -> Result<Jet<T>> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("jet evaluation point"));
        }
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        let ft = self.taylor(t, x, order);
        Ok(jet_from_taylor(&ft, order))
    }
}

pub(crate) fn jet_from_taylor<T: Scalar>(ft: &FieldTaylor<T>, order: usize) -> Jet<T> {
    let d = ft.dim;
    let value = ft.value[..d].iter().map(Taylor::value).collect();
    let time_derivative = ft.dt[..d].iter().map(Taylor::value).collect();
    let mut jacobian = Vec::new();
    let mut hessians = Vec::new();
    let mut third = Vec::new();
    if order >= 1 {
        jacobian = ft.value[..d].iter().map(Taylor::gradient).collect();
    }
    if order >= 2 {
        hessians = ft.value[..d]
            .iter()
            .map(|c| {
                let mut h = zeros(d, d);
                for i in 0..d {
                    for k in 0..d {
                        h[i][k] = c.partial(&[i, k]);
                    }
                }
                h
            })
            .collect();
    }
    if order >= 3 {
        third = ft.value[..d]
            .iter()
            .map(|c| {
                let mut h = zeros3(d);
                for i in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            h[i][k][l] = c.partial(&[i, k, l]);
                        }
                    }
                }
                h
            })
            .collect();
    }
    Jet {
        order,
        value,
        jacobian,
        hessians,
        third,
        time_derivative,
    }
}

/// Finite-difference jet of `field`, built only from [`VectorFieldSpec::value`].
///
/// Base stencils are second-order central differences; each level is
/// Richardson-extrapolated so the oracle is accurate enough to compare against
/// exact jets. First derivatives use `step`, second derivatives `10·step`
/// and third derivatives `100·step` to keep round-off below truncation error.
/// Test oracle only.
pub fn fd_jet_oracle<T: Scalar>(
    field: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
    order: usize,
    step: T,
) -> Result<Jet<T>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let d = x.len();
    let eval = |shift: &[(usize, T)]| {
        let mut y = x.to_vec();
        for &(i, s) in shift {
            y[i] += s;
        }
        field.value(t, &y)
    };
    let four = T::lit(4.0);
    let three = T::lit(3.0);
    let richardson = |fine: T, coarse: T| (four * fine - coarse) / three;

    let value = field.value(t, x);

    let dtime = |h: T| -> Vec<T> {
        let p = field.value(t + h, x);
        let m = field.value(t - h, x);
        p.iter().zip(&m).map(|(a, b)| (*a - *b) / (h + h)).collect()
    };
    let (tf, tc) = (dtime(step), dtime(step + step));
    let time_derivative = tf
        .iter()
        .zip(&tc)
        .map(|(&f, &c)| richardson(f, c))
        .collect();

    let mut jacobian = Vec::new();
    if order >= 1 {
        jacobian = zeros(d, d);
        for i in 0..d {
            let central = |h: T| {
                let p = eval(&[(i, h)]);
                let m = eval(&[(i, -h)]);
                p.iter()
                    .zip(&m)
                    .map(|(a, b)| (*a - *b) / (h + h))
                    .collect::<Vec<T>>()
            };
            let (f, c) = (central(step), central(step + step));
            for j in 0..d {
                jacobian[j][i] = richardson(f[j], c[j]);
            }
        }
    }

    let mut hessians = Vec::new();
    if order >= 2 {
        let h2 = step * T::lit(10.0);
        hessians = vec![zeros(d, d); d];
        for i in 0..d {
            for k in 0..d {
                let second = |h: T| -> Vec<T> {
                    let mut acc = vec![T::zero(); d];
                    for (si, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let sign = T::lit(si * sk);
                        let v = eval(&[(i, h * T::lit(si)), (k, h * T::lit(sk))]);
                        for (a, b) in acc.iter_mut().zip(&v) {
                            *a += sign * *b;
                        }
                    }
                    acc.iter().map(|a| *a / (four * h * h)).collect()
                };
                let (f, c) = (second(h2), second(h2 + h2));
                for j in 0..d {
                    hessians[j][i][k] = richardson(f[j], c[j]);
                }
            }
        }
    }

    let mut third = Vec::new();
    if order >= 3 {
        let h3 = step * T::lit(100.0);
        third = vec![zeros3(d); d];
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let cube = |h: T| -> Vec<T> {
                        let mut acc = vec![T::zero(); d];
                        for s in 0..8u8 {
                            let sg = |b: u8| if s & b != 0 { -1.0 } else { 1.0 };
                            let (a, b, c) = (sg(1), sg(2), sg(4));
                            let sign = T::lit(a * b * c);
                            let v =
                                eval(&[(i, h * T::lit(a)), (k, h * T::lit(b)), (l, h * T::lit(c))]);
                            for (o, w) in acc.iter_mut().zip(&v) {
                                *o += sign * *w;
                            }
                        }
                        acc.iter().map(|a| *a / (T::lit(8.0) * h * h * h)).collect()
                    };
                    let (d1, d2, d4) = (cube(h3), cube(h3 + h3), cube(four * h3));
                    for j in 0..d {
                        let r1 = richardson(d1[j], d2[j]);
                        let r2 = richardson(d2[j], d4[j]);
                        third[j][i][k][l] = (T::lit(16.0) * r1 - r2) / T::lit(15.0);
                    }
                }
            }
        }
    }

    Ok(Jet {
        order,
        value,
        jacobian,
        hessians,
        third,
        time_derivative,
    })
}

/// The noise fields `σ_j` of a Kunita flow and the uniform ellipticity floor.
#[derive(Clone, Debug)]
pub struct NoiseModel<T> {
    pub sigmas: Vec<VectorFieldSpec<T>>,
    pub ellipticity_floor: T,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(sigmas: Vec<VectorFieldSpec<T>>, ellipticity_floor: T) -> Self {
        NoiseModel {
            sigmas,
            ellipticity_floor,
        }
    }

    /// `σ_j = ∂_j`, j = 1..d: Brownian background noise with Euclidean metric.
    pub fn brownian(dim: usize) -> Self {
        let sigmas = (0..dim)
            .map(|j| {
                let mut a = vec![T::zero(); dim];
                a[j] = T::one();
                VectorFieldSpec::Constant(a)
            })
            .collect();
        NoiseModel::new(sigmas, T::lit(1e-12))
    }

    pub fn dim(&self) -> Option<usize> {
        self.sigmas.iter().find_map(VectorFieldSpec::dim)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::InvalidInput("noise model has no fields".into()));
        }
        if !(self.ellipticity_floor > T::zero()) {
            return Err(Error::InvalidInput(
                "ellipticity floor must be positive".into(),
            ));
        }
        self.sigmas.iter().try_for_each(|s| s.validate(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
        (a - b).abs() <= atol || (a - b).abs() <= rtol * a.abs().max(b.abs())
    }

    fn assert_jets_agree(a: &Jet<f64>, b: &Jet<f64>, rtol: f64, atol: f64) {
        let flat = |j: &Jet<f64>| -> Vec<f64> {
            let mut v = j.value.clone();
            v.extend(j.jacobian.iter().flatten());
            v.extend(j.hessians.iter().flatten().flatten());
            v.extend(j.third.iter().flatten().flatten().flatten());
            v.extend(&j.time_derivative);
            v
        };
        let (fa, fb) = (flat(a), flat(b));
        assert_eq!(fa.len(), fb.len());
        for (k, (x, y)) in fa.iter().zip(&fb).enumerate() {
            assert!(close(*x, *y, rtol, atol), "entry {k}: {x} vs {y}");
        }
    }

    #[test]
    fn constant_field_has_zero_jacobian() {
        let f = VectorFieldSpec::Constant(vec![0.3, -1.2]);
        let jet = f.eval_jet(0.4, &[1.0, 2.0], 1).unwrap();
        assert_eq!(jet.value, vec![0.3, -1.2]);
        assert!(jet.jacobian.iter().flatten().all(|&v| v == 0.0));
        let fd = fd_jet_oracle(&f, 0.4, &[1.0, 2.0], 3, 1e-4).unwrap();
        let exact = f.eval_jet(0.4, &[1.0, 2.0], 3).unwrap();
        assert_jets_agree(&exact, &fd, 0.0, 1e-12);
    }

    #[test]
    fn linear_field_jacobian_is_matrix() {
        let a = vec![vec![0.5, -1.0], vec![2.0, 0.25]];
        let f = VectorFieldSpec::Linear {
            matrix: a.clone(),
            offset: vec![0.1, 0.2],
        };
        let jet = f.eval_jet(0.0, &[1.0, -2.0], 3).unwrap();
        for (v, e) in jet.value.iter().zip([2.6f64, 1.7]) {
            assert!((v - e).abs() < 1e-14);
        }
        assert_eq!(jet.jacobian, a);
        assert!(jet.hessians.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_center_is_critical() {
        let f = VectorFieldSpec::GaussianKernel {
            center: vec![0.0, 0.0],
            amplitude: vec![1.0, 0.0],
            width: 1.0,
        };
        let jet = f.eval_jet(0.0, &[0.0, 0.0], 1).unwrap();
        assert_eq!(jet.value, vec![1.0, 0.0]);
        assert!(jet.jacobian.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_matches_plain_central_differences() {
        let f = VectorFieldSpec::GaussianKernel {
            center: vec![0.0, 0.0],
            amplitude: vec![1.0, 0.0],
            width: 1.0,
        };
        let x = [1.0, 0.0];
        let jet = f.eval_jet(0.0, &x, 2).unwrap();
        let h = 1e-4;
        let v = |y: [f64; 2]| f.value(0.0, &y)[0];
        let fx = (v([1.0 + h, 0.0]) - v([1.0 - h, 0.0])) / (2.0 * h);
        let fxx = (v([1.0 + h, 0.0]) - 2.0 * v(x) + v([1.0 - h, 0.0])) / (h * h);
        let fyy = (v([1.0, h]) - 2.0 * v(x) + v([1.0, -h])) / (h * h);
        assert!(close(jet.value[0], (-0.5f64).exp(), 1e-15, 0.0));
        assert!(close(jet.jacobian[0][0], fx, 1e-6, 0.0));
        assert!(jet.jacobian[0][1].abs() < 1e-15);
        assert!(close(jet.hessians[0][0][0], fxx, 1e-6, 1e-8));
        assert!(close(jet.hessians[0][1][1], fyy, 1e-6, 1e-8));
    }

    #[test]
    fn sinusoid_matches_oracle() {
        let f = VectorFieldSpec::Sinusoid {
            amplitude: vec![0.3, -0.2],
            wavevector: vec![1.0, 2.0],
            phase: 0.4,
        };
        let x = [0.3, -0.7];
        let jet = f.eval_jet(0.0, &x, 3).unwrap();
        let th: f64 = 0.4 + 0.3 - 1.4;
        assert!((jet.value[0] - 0.3 * th.sin()).abs() < 1e-15);
        assert!((jet.jacobian[1][1] + 0.4 * th.cos()).abs() < 1e-15);
        assert_jets_agree(
            &jet,
            &fd_jet_oracle(&f, 0.0, &x, 3, 1e-4).unwrap(),
            1e-5,
            1e-9,
        );
    }

    #[test]
    fn oracle_agrees_on_gaussian_and_sum() {
        let g = |c: [f64; 2], a: [f64; 2], w: f64| VectorFieldSpec::GaussianKernel {
            center: c.to_vec(),
            amplitude: a.to_vec(),
            width: w,
        };
        let single = g([0.0, 0.0], [1.0, 0.0], 1.0);
        let x = [1.0, 0.0];
        assert_jets_agree(
            &single.eval_jet(0.0, &x, 3).unwrap(),
            &fd_jet_oracle(&single, 0.0, &x, 3, 1e-4).unwrap(),
            1e-5,
            1e-9,
        );
        let parts = vec![
            g([0.1, -0.2], [0.5, 0.2], 0.7),
            g([-0.4, 0.3], [-0.1, 0.3], 0.5),
            g([0.6, 0.6], [0.2, -0.4], 0.9),
        ];
        let sum = VectorFieldSpec::Sum(parts.clone());
        let x = [0.2, 0.35];
        let js = sum.eval_jet(0.0, &x, 3).unwrap();
        assert_jets_agree(
            &js,
            &fd_jet_oracle(&sum, 0.0, &x, 3, 1e-4).unwrap(),
            1e-5,
            1e-9,
        );
        // additivity of jets
        let mut acc = parts[0].eval_jet(0.0, &x, 3).unwrap();
        for p in &parts[1..] {
            let j = p.eval_jet(0.0, &x, 3).unwrap();
            for (a, b) in acc
                .third
                .iter_mut()
                .flatten()
                .flatten()
                .flatten()
                .zip(j.third.iter().flatten().flatten().flatten())
            {
                *a += b;
            }
            for (a, b) in acc.value.iter_mut().zip(&j.value) {
                *a += b;
            }
        }
        for (a, b) in acc.value.iter().zip(&js.value) {
            assert!(close(*a, *b, 1e-14, 1e-16));
        }
        for (a, b) in acc
            .third
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .zip(js.third.iter().flatten().flatten().flatten())
        {
            assert!(close(*a, *b, 1e-13, 1e-15));
        }
    }

    #[test]
    fn time_scaled_includes_schedule_derivative() {
        let inner = VectorFieldSpec::GaussianKernel {
            center: vec![0.2],
            amplitude: vec![0.8],
            width: 0.6,
        };
        let f = VectorFieldSpec::TimeScaled {
            field: Box::new(inner.clone()),
            schedule: Schedule::Sine {
                offset: 1.0,
                amplitude: 0.5,
                frequency: 3.0,
                phase: 0.1,
            },
        };
        let (t, x) = (0.7, [0.5]);
        let jet = f.eval_jet(t, &x, 3).unwrap();
        let s = 1.0 + 0.5 * (3.0f64 * t + 0.1).sin();
        assert!(close(jet.value[0], s * inner.value(t, &x)[0], 1e-15, 0.0));
        let fd = fd_jet_oracle(&f, t, &x, 3, 1e-4).unwrap();
        assert_jets_agree(&jet, &fd, 1e-5, 1e-9);
        assert!(jet.time_derivative[0].abs() > 1e-3);
    }

    #[test]
    fn rejects_bad_order_and_nonfinite_input() {
        let f = VectorFieldSpec::Constant(vec![1.0]);
        assert_eq!(f.eval_jet(0.0, &[0.0], 4), Err(Error::UnsupportedOrder(4)));
        assert!(matches!(
            f.eval_jet(0.0, &[f64::NAN], 1),
            Err(Error::NonFinite(_))
        ));
    }
}
