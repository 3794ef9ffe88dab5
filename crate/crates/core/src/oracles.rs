//! Finite-difference reference computations for testing the exact-jet
//! geometry. None of these are used by the solvers.

use crate::error::Result;
use crate::fields::{NoiseModel, VectorFieldSpec};
use crate::geometry;
use crate::linalg::{solve, zeros, zeros3, Matrix, Tensor3};
use crate::scalar::Scalar;

/// Richardson-extrapolated central difference of a vector-valued function
/// along coordinate `k`.
fn central<T: Scalar>(
    f: &impl Fn(&[T]) -> Result<Vec<T>>,
    x: &[T],
    k: usize,
    h: T,
) -> Result<Vec<T>> {
    let diff = |step: T| -> Result<Vec<T>> {
        let mut p = x.to_vec();
        p[k] += step;
        let mut m = x.to_vec();
        m[k] -= step;
        let (fp, fm) = (f(&p)?, f(&m)?);
        Ok(fp
            .iter()
            .zip(&fm)
            .map(|(&a, &b)| (a - b) / (step + step))
            .collect())
    };
    let (d1, d2) = (diff(h)?, diff(h + h)?);
    Ok(d1
        .iter()
        .zip(&d2)
        .map(|(&a, &b)| (T::lit(4.0) * a - b) / T::lit(3.0))
        .collect())
}

fn metric_flat<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T]) -> Result<Vec<T>> {
    let gs = geometry::cometric(noise, t, x)?;
    let d = x.len();
    let mut g = Vec::with_capacity(d * d);
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut e = vec![T::zero(); d];
        e[j] = T::one();
        cols.push(solve(&gs, &e).ok_or(crate::Error::NonFinite("cometric inverse"))?);
    }
    for i in 0..d {
        for col in &cols {
            g.push(col[i]);
        }
    }
    Ok(g)
}

/// `∂_k g_ij` by differencing the numerically inverted cometric.
pub fn fd_metric_gradient<T: Scalar>(
    noise: &NoiseModel<T>,
    t: T,
    x: &[T],
    h: T,
) -> Result<Tensor3<T>> {
    let d = x.len();
    let mut out = zeros3(d);
    for k in 0..d {
        let dg = central(&|y: &[T]| metric_flat(noise, t, y), x, k, h)?;
        for i in 0..d {
            for j in 0..d {
                out[k][i][j] = dg[i * d + j];
            }
        }
    }
    Ok(out)
}

/// Christoffel symbols from a finite-difference metric gradient.
pub fn fd_christoffel<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T], h: T) -> Result<Tensor3<T>> {
    let d = x.len();
    let dg = fd_metric_gradient(noise, t, x, h)?;
    let gs = geometry::cometric(noise, t, x)?;
    let mut gamma = zeros3(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = T::zero();
                for r in 0..d {
                    acc += gs[k][r] * (dg[j][r][i] + dg[i][r][j] - dg[r][i][j]);
                }
                gamma[k][i][j] = T::lit(0.5) * acc;
            }
        }
    }
    Ok(gamma)
}

/// Scalar curvature from finite differences of the exact Christoffel symbols.
pub fn fd_scalar_curvature<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T], h: T) -> Result<T> {
    let d = x.len();
    let flat = |y: &[T]| -> Result<Vec<T>> {
        Ok(geometry::christoffel(noise, t, y)?
            .into_iter()
            .flatten()
            .flatten()
            .collect())
    };
    // dgam[l][k][i][j] = ∂_l Γ^k_ij
    let mut dgam: Vec<Tensor3<T>> = Vec::with_capacity(d);
    for l in 0..d {
        let v = central(&flat, x, l, h)?;
        let mut g = zeros3(d);
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    g[k][i][j] = v[(k * d + i) * d + j];
                }
            }
        }
        dgam.push(g);
    }
    let gam = geometry::christoffel(noise, t, x)?;
    let gs = geometry::cometric(noise, t, x)?;
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            let mut ric = T::zero();
            for k in 0..d {
                ric += dgam[k][k][i][j] - dgam[j][k][i][k];
                for l in 0..d {
                    ric += gam[l][i][j] * gam[k][k][l] - gam[l][i][k] * gam[k][j][l];
                }
            }
            s += gs[i][j] * ric;
        }
    }
    Ok(s)
}

/// Spatial gradient `∂f` of the OM potential by finite differences of `f`.
pub fn fd_potential_gradient<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
    h: T,
) -> Result<Vec<T>> {
    let f = |y: &[T]| -> Result<Vec<T>> { Ok(vec![geometry::om_potential(noise, drift, t, y)?.0]) };
    (0..x.len()).map(|k| Ok(central(&f, x, k, h)?[0])).collect()
}

/// Integrate the geodesic equation `ẍ^k = −Γ^k_ij ẋ^i ẋ^j` by RK4 and return
/// the largest deviation of `|ẋ|²_g` from its initial value.
pub fn geodesic_energy_drift<T: Scalar>(
    noise: &NoiseModel<T>,
    x0: &[T],
    v0: &[T],
    horizon: T,
    steps: usize,
) -> Result<T> {
    let d = x0.len();
    let t = T::zero();
    let rhs = |x: &[T], v: &[T]| -> Result<Vec<T>> {
        let gam = geometry::christoffel(noise, t, x)?;
        Ok((0..d)
            .map(|k| {
                let mut a = T::zero();
                for i in 0..d {
                    for j in 0..d {
                        a -= gam[k][i][j] * v[i] * v[j];
                    }
                }
                a
            })
            .collect())
    };
    let energy = |x: &[T], v: &[T]| -> Result<T> {
        let md = geometry::metric_and_derivatives(noise, t, x)?;
        let g: &Matrix<T> = &md.metric;
        Ok((0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| g[i][j] * v[i] * v[j])
            .sum())
    };
    let h = horizon / T::lit(steps as f64);
    let half = T::lit(0.5);
    let (mut x, mut v) = (x0.to_vec(), v0.to_vec());
    let e0 = energy(&x, &v)?;
    let mut worst = T::zero();
    let add =
        |a: &[T], s: T, b: &[T]| -> Vec<T> { a.iter().zip(b).map(|(&p, &q)| p + s * q).collect() };
    for _ in 0..steps {
        let k1v = rhs(&x, &v)?;
        let k1x = v.clone();
        let x2 = add(&x, half * h, &k1x);
        let v2 = add(&v, half * h, &k1v);
        let k2v = rhs(&x2, &v2)?;
        let x3 = add(&x, half * h, &v2);
        let v3 = add(&v, half * h, &k2v);
        let k3v = rhs(&x3, &v3)?;
        let x4 = add(&x, h, &v3);
        let v4 = add(&v, h, &k3v);
        let k4v = rhs(&x4, &v4)?;
        let sixth = h / T::lit(6.0);
        for i in 0..d {
            x[i] += sixth * (k1x[i] + T::lit(2.0) * (v2[i] + v3[i]) + v4[i]);
            v[i] += sixth * (k1v[i] + T::lit(2.0) * (k2v[i] + k3v[i]) + k4v[i]);
        }
        worst = worst.max((energy(&x, &v)? - e0).abs());
    }
    Ok(worst)
}

/// Cometric by direct summation of `σ_j σ_jᵀ` over plain field values.
pub fn brute_force_cometric<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T]) -> Matrix<T> {
    let d = x.len();
    let mut gs = zeros(d, d);
    for s in &noise.sigmas {
        let v = s.value(t, x);
        for i in 0..d {
            for j in 0..d {
                gs[i][j] += v[i] * v[j];
            }
        }
    }
    gs
}
