//! Riemannian geometry induced by the noise fields of a Kunita flow.
//!
//! The cometric is `g* = Σ_j σ_j ⊗ σ_j` and the metric its inverse. All
//! derived quantities (Christoffel symbols, scalar curvature, the corrected
//! drift `z` with `L = ½Δ_g + z`, and the Onsager-Machlup potential
//! `f = ½ div_g z − S/12 + ¼ tr_g ġ`) are assembled in truncated Taylor
//! arithmetic from third-order jets of the fields, so every derivative is
//! exact up to round-off.

use crate::error::{Error, Result};
use crate::fields::{NoiseModel, VectorFieldSpec};
use crate::linalg::{mat_vec, symmetric_eigenvalues, zeros, zeros3, Matrix, Tensor3};
use crate::scalar::Scalar;
use crate::taylor::Taylor;

type TMatrix<T> = Vec<Vec<Taylor<T>>>;

/// All geometric quantities at one `(t, x)`.
///
/// Index conventions: `christoffel[k][i][j] = Γ^k_{ij}`,
/// `metric_grad[k][i][j] = ∂_k g_{ij}`, `z_jacobian[j][i] = ∂_i z^j`,
/// `z_covariant[j][i] = (∇_i z)^j = ∂_i z^j + Γ^j_{ik} z^k`.
#[derive(Clone, Debug)]
pub struct GeometryJet<T> {
    pub dim: usize,
    pub cometric: Matrix<T>,
    pub metric: Matrix<T>,
    pub det_g: T,
    pub christoffel: Tensor3<T>,
    pub scalar_curvature: T,
    pub metric_dt: Matrix<T>,
    pub cometric_dt: Matrix<T>,
    pub z: Vec<T>,
    pub z_jacobian: Matrix<T>,
    pub z_covariant: Matrix<T>,
    pub div_z: T,
    pub f: T,
    /// spatial gradient `∂_i f` (a covector)
    pub df: Vec<T>,
    /// index-raised gradient `∇f = g*·∂f`
    pub grad_f: Vec<T>,
    pub metric_grad: Tensor3<T>,
    pub cometric_grad: Tensor3<T>,
    pub log_det_grad: Vec<T>,
    pub min_eigenvalue: T,
    /// smallest cometric eigenvalue within ten times the ellipticity floor
    pub near_singular: bool,
}

/// Metric with its first and second spatial derivatives and time derivative.
///
/// `first[k][i][j] = ∂_k g_{ij}`, `second[k][l][i][j] = ∂_k ∂_l g_{ij}`.
#[derive(Clone, Debug)]
pub struct MetricDerivatives<T> {
    pub metric: Matrix<T>,
    pub first: Tensor3<T>,
    pub second: Vec<Tensor3<T>>,
    pub dt: Matrix<T>,
}

/// `φ(y) = c + b·y + ½ yᵀ A y`
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic<T> {
    pub c: T,
    pub b: Vec<T>,
    pub a: Matrix<T>,
}

impl<T: Scalar> Quadratic<T> {
    pub fn value(&self, y: &[T]) -> T {
        let ay = mat_vec(&self.a, y);
        self.c
            + self.b.iter().zip(y).map(|(&b, &v)| b * v).sum::<T>()
            + T::lit(0.5) * ay.iter().zip(y).map(|(&a, &v)| a * v).sum::<T>()
    }

    pub fn gradient(&self, y: &[T]) -> Vec<T> {
        let ay = mat_vec(&self.a, y);
        self.b.iter().zip(ay).map(|(&b, a)| b + a).collect()
    }
}

struct Cometric<T> {
    d: usize,
    sigma: Vec<crate::fields::FieldTaylor<T>>,
    gs: TMatrix<T>,
    gs_dt: TMatrix<T>,
    min_eigenvalue: T,
}

fn values<T: Scalar>(m: &TMatrix<T>) -> Matrix<T> {
    m.iter()
        .map(|r| r.iter().map(Taylor::value).collect())
        .collect()
}

fn truncate<T: Scalar>(m: &TMatrix<T>, order: usize) -> TMatrix<T> {
    m.iter()
        .map(|r| r.iter().map(|v| v.truncate(order)).collect())
        .collect()
}

fn expand_cometric<T: Scalar>(
    noise: &NoiseModel<T>,
    t: T,
    x: &[T],
    order: usize,
) -> Result<Cometric<T>> {
    let d = x.len();
    if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("geometry evaluation point"));
    }
    let sigma: Vec<_> = noise.sigmas.iter().map(|s| s.taylor(t, x, order)).collect();
    let mut gs = vec![vec![Taylor::zero(d, order); d]; d];
    let mut gs_dt = vec![vec![Taylor::zero(d, order); d]; d];
    for i in 0..d {
        for j in i..d {
            let mut acc = Taylor::zero(d, order);
            let mut acc_dt = Taylor::zero(d, order);
            for s in &sigma {
                if s.active[i] && s.active[j] {
                    acc += s.value[i] * s.value[j];
                }
                if s.dt_active[i] && s.active[j] {
                    acc_dt += s.dt[i] * s.value[j];
                }
                if s.active[i] && s.dt_active[j] {
                    acc_dt += s.value[i] * s.dt[j];
                }
            }
            gs[i][j] = acc;
            gs[j][i] = acc;
            gs_dt[i][j] = acc_dt;
            gs_dt[j][i] = acc_dt;
        }
    }
    let min_eigenvalue = symmetric_eigenvalues(&values(&gs))[0];
    if !(min_eigenvalue >= noise.ellipticity_floor) {
        return Err(Error::EllipticityViolation {
            t: t.as_f64(),
            x: x.iter().map(|v| v.as_f64()).collect(),
            min_eigenvalue: min_eigenvalue.as_f64(),
            floor: noise.ellipticity_floor.as_f64(),
        });
    }
    Ok(Cometric {
        d,
        sigma,
        gs,
        gs_dt,
        min_eigenvalue,
    })
}

/// Inverse and determinant of a symmetric Taylor matrix (d ≤ 3) via cofactors.
fn inverse<T: Scalar>(m: &TMatrix<T>) -> (TMatrix<T>, Taylor<T>) {
    let d = m.len();
    match d {
        1 => (vec![vec![m[0][0].recip()]], m[0][0]),
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let r = det.recip();
            let inv = vec![
                vec![m[1][1] * r, -(m[0][1] * r)],
                vec![-(m[1][0] * r), m[0][0] * r],
            ];
            (inv, det)
        }
        3 => {
            let cof = |i: usize, j: usize| {
                let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
                let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
                m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
            };
            let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
            let r = det.recip();
            let inv = (0..3)
                .map(|i| (0..3).map(|j| cof(j, i) * r).collect())
                .collect();
            (inv, det)
        }
        _ => unreachable!("dimension checked by Taylor"),
    }
}

/// Christoffel symbols `Γ^k_{ij} = ½ g^{kr}(∂_j g_{ri} + ∂_i g_{rj} − ∂_r g_{ij})`
/// as Taylor objects of one order less than `g`.
fn christoffel_taylor<T: Scalar>(gs: &TMatrix<T>, g: &TMatrix<T>) -> Vec<TMatrix<T>> {
    let d = g.len();
    let ord = g[0][0].order() - 1;
    let dg: Vec<TMatrix<T>> = (0..d)
        .map(|k| {
            g.iter()
                .map(|r| r.iter().map(|v| v.deriv(k)).collect())
                .collect()
        })
        .collect();
    let gs = truncate(gs, ord);
    let half = T::lit(0.5);
    let mut out = vec![vec![vec![Taylor::zero(d, ord); d]; d]; d];
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut acc = Taylor::zero(d, ord);
                for r in 0..d {
                    acc += gs[k][r] * (dg[j][r][i] + dg[i][r][j] - dg[r][i][j]);
                }
                let v = acc.scale(half);
                out[k][i][j] = v;
                out[k][j][i] = v;
            }
        }
    }
    out
}

/// `S = g^{ij}(∂_kΓ^k_{ij} − ∂_jΓ^k_{ik} + Γ^l_{ij}Γ^k_{kl} − Γ^l_{ik}Γ^k_{jl})`
fn scalar_curvature_taylor<T: Scalar>(gs: &TMatrix<T>, gamma: &[TMatrix<T>]) -> Taylor<T> {
    let d = gs.len();
    let ord = gamma[0][0][0].order() - 1;
    let dgamma: Vec<Vec<TMatrix<T>>> = (0..d)
        .map(|l| {
            gamma
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|r| r.iter().map(|v| v.deriv(l)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let gam: Vec<TMatrix<T>> = gamma.iter().map(|m| truncate(m, ord)).collect();
    let gs = truncate(gs, ord);
    let mut s = Taylor::zero(d, ord);
    for i in 0..d {
        for j in 0..d {
            let mut ric = Taylor::zero(d, ord);
            for k in 0..d {
                ric += dgamma[k][k][i][j] - dgamma[j][k][i][k];
                for l in 0..d {
                    ric += gam[l][i][j] * gam[k][k][l] - gam[l][i][k] * gam[k][j][l];
                }
            }
            s += gs[i][j] * ric;
        }
    }
    s
}

/// Cometric `g* = Σ_j σ_j σ_jᵀ` at `(t, x)`.
pub fn cometric<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T]) -> Result<Matrix<T>> {
    Ok(values(&expand_cometric(noise, t, x, 0)?.gs))
}

/// Metric `g = (g*)⁻¹` with exact first and second spatial derivatives and `ġ`.
pub fn metric_and_derivatives<T: Scalar>(
    noise: &NoiseModel<T>,
    t: T,
    x: &[T],
) -> Result<MetricDerivatives<T>> {
    let c = expand_cometric(noise, t, x, 2)?;
    let d = c.d;
    let (g, _) = inverse(&c.gs);
    let mut first = zeros3(d);
    let mut second = vec![zeros3(d); d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                first[k][i][j] = g[i][j].partial(&[k]);
                for l in 0..d {
                    second[k][l][i][j] = g[i][j].partial(&[k, l]);
                }
            }
        }
    }
    let g0 = values(&g);
    let gs_dt = values(&c.gs_dt);
    let dt = metric_dt_from(&g0, &gs_dt);
    Ok(MetricDerivatives {
        metric: g0,
        first,
        second,
        dt,
    })
}

/// `ġ = −g ġ* g`
fn metric_dt_from<T: Scalar>(g: &Matrix<T>, gs_dt: &Matrix<T>) -> Matrix<T> {
    let d = g.len();
    let mut out = zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = T::zero();
            for a in 0..d {
                for b in 0..d {
                    acc += g[i][a] * gs_dt[a][b] * g[b][j];
                }
            }
            out[i][j] = -acc;
        }
    }
    out
}

/// Christoffel symbols `Γ^k_{ij}` of the Levi-Civita connection of `g`.
pub fn christoffel<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T]) -> Result<Tensor3<T>> {
    let c = expand_cometric(noise, t, x, 1)?;
    let (g, _) = inverse(&c.gs);
    let gamma = christoffel_taylor(&c.gs, &g);
    Ok(gamma.iter().map(values).collect())
}

/// Scalar curvature of `g`.
pub fn scalar_curvature<T: Scalar>(noise: &NoiseModel<T>, t: T, x: &[T]) -> Result<T> {
    let c = expand_cometric(noise, t, x, 2)?;
    let (g, _) = inverse(&c.gs);
    let gamma = christoffel_taylor(&c.gs, &g);
    Ok(scalar_curvature_taylor(&c.gs, &gamma).value())
}

/// The corrected drift `z` with `½Σσ_j² + u = ½Δ_g + z`, and its covariant
/// derivative `(∇z)^j_i`.
pub fn drift_z<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
) -> Result<(Vec<T>, Matrix<T>)> {
    let jet = evaluate(noise, drift, t, x)?;
    Ok((jet.z, jet.z_covariant))
}

/// OM potential `f` and its index-raised gradient `∇f`.
pub fn om_potential<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
) -> Result<(T, Vec<T>)> {
    let jet = evaluate(noise, drift, t, x)?;
    Ok((jet.f, jet.grad_f))
}

/// The generator `(½Σ_j σ_j² + u)φ` at `x`, computed directly from first jets
/// of the fields with `σ²φ = σ·∇(σ·∇φ)`. Independent of [`evaluate`].
pub fn generator_apply<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
    phi: &Quadratic<T>,
) -> Result<T> {
    let d = x.len();
    let grad = phi.gradient(x);
    let mut acc = T::zero();
    for s in &noise.sigmas {
        let jet = s.eval_jet(t, x, 1)?;
        // σ^i σ^k ∂_ik φ + σ^i (∂_i σ^k) ∂_k φ
        for i in 0..d {
            for k in 0..d {
                acc += jet.value[i] * jet.value[k] * phi.a[i][k];
                acc += jet.value[i] * jet.jacobian[k][i] * grad[k];
            }
        }
    }
    let u = drift.value(t, x);
    Ok(T::lit(0.5) * acc + u.iter().zip(&grad).map(|(&a, &b)| a * b).sum::<T>())
}

impl<T: Scalar> GeometryJet<T> {
    /// `Δ_g φ = g^{ij}∂_ij φ + (∂_i g^{ij} + ½ g^{ij} ∂_i log det g) ∂_j φ`
    pub fn laplace_beltrami(&self, phi: &Quadratic<T>, x: &[T]) -> T {
        let d = self.dim;
        let grad = phi.gradient(x);
        let mut acc = T::zero();
        for i in 0..d {
            for j in 0..d {
                acc += self.cometric[i][j] * phi.a[i][j];
                acc += (self.cometric_grad[i][i][j]
                    + T::lit(0.5) * self.cometric[i][j] * self.log_det_grad[i])
                    * grad[j];
            }
        }
        acc
    }

    /// `½Δ_g φ + z·∇φ`; must equal [`generator_apply`].
    pub fn generator(&self, phi: &Quadratic<T>, x: &[T]) -> T {
        let grad = phi.gradient(x);
        T::lit(0.5) * self.laplace_beltrami(phi, x)
            + self.z.iter().zip(&grad).map(|(&a, &b)| a * b).sum::<T>()
    }

    /// `|v|²_g`
    pub fn norm_sq(&self, v: &[T]) -> T {
        let gv = mat_vec(&self.metric, v);
        gv.iter().zip(v).map(|(&a, &b)| a * b).sum()
    }
}

/// Full geometry at `(t, x)` for noise `noise` and Stratonovich drift `drift`.
pub fn evaluate<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
) -> Result<GeometryJet<T>> {
    let c = expand_cometric(noise, t, x, 3)?;
    let d = c.d;
    let half = T::lit(0.5);

    let (g, det_gs) = inverse(&c.gs);
    let log_det_g = -det_gs.ln();

    let gamma = christoffel_taylor(&c.gs, &g); // order 2
    let curvature = scalar_curvature_taylor(&c.gs, &gamma); // order 1

    // z^j = u^j + ½ Σ_r σ_r^i ∂_i σ_r^j − ½ Σ_i (∂_i g*^{ij} + ½ g*^{ij} ∂_i log det g)
    let u = drift.taylor(t, x, 3);
    let gs2 = truncate(&c.gs, 2);
    let dlog: Vec<Taylor<T>> = (0..d).map(|i| log_det_g.deriv(i)).collect();
    let mut z: Vec<Taylor<T>> = u.value[..d].iter().map(|v| v.truncate(2)).collect();
    for s in &c.sigma {
        for j in 0..d {
            if !s.active[j] {
                continue;
            }
            for i in (0..d).filter(|&i| s.active[i]) {
                z[j] += (s.value[i].truncate(2) * s.value[j].deriv(i)).scale(half);
            }
        }
    }
    for j in 0..d {
        for i in 0..d {
            let term = c.gs[i][j].deriv(i) + (gs2[i][j] * dlog[i]).scale(half);
            z[j] -= term.scale(half);
        }
    }

    // div_g z = ∂_i z^i + ½ z^i ∂_i log det g
    let mut div = Taylor::zero(d, 1);
    for i in 0..d {
        div += z[i].deriv(i) + (z[i].truncate(1) * dlog[i].truncate(1)).scale(half);
    }

    // ġ = −g ġ* g, tr_g ġ = g*^{ij} ġ_{ij}
    let g1 = truncate(&g, 1);
    let gs1 = truncate(&c.gs, 1);
    let gsdt1 = truncate(&c.gs_dt, 1);
    let mut trace = Taylor::zero(d, 1);
    let mut gdot = vec![vec![Taylor::zero(d, 1); d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = Taylor::zero(d, 1);
            for a in 0..d {
                for b in 0..d {
                    acc += g1[i][a] * gsdt1[a][b] * g1[b][j];
                }
            }
            gdot[i][j] = -acc;
        }
    }
    for i in 0..d {
        for j in 0..d {
            trace += gs1[i][j] * gdot[i][j];
        }
    }

    let f = div.scale(half) - curvature.scale(T::lit(1.0 / 12.0)) + trace.scale(T::lit(0.25));

    let cometric = values(&c.gs);
    let metric = values(&g);
    let christoffel: Tensor3<T> = gamma.iter().map(values).collect();
    let z0: Vec<T> = z.iter().map(Taylor::value).collect();
    let mut z_jacobian = zeros(d, d);
    let mut z_covariant = zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            z_jacobian[j][i] = z[j].partial(&[i]);
            let mut cov = z_jacobian[j][i];
            for k in 0..d {
                cov += christoffel[j][i][k] * z0[k];
            }
            z_covariant[j][i] = cov;
        }
    }
    let df = f.gradient();
    let grad_f = mat_vec(&cometric, &df);
    let mut metric_grad = zeros3(d);
    let mut cometric_grad = zeros3(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                metric_grad[k][i][j] = g[i][j].partial(&[k]);
                cometric_grad[k][i][j] = c.gs[i][j].partial(&[k]);
            }
        }
    }
    let cometric_dt = values(&c.gs_dt);
    let metric_dt = values(&gdot);
    let floor = noise.ellipticity_floor;

    Ok(GeometryJet {
        dim: d,
        det_g: det_gs.value().recip(),
        scalar_curvature: curvature.value(),
        z: z0,
        div_z: div.value(),
        f: f.value(),
        log_det_grad: log_det_g.gradient(),
        near_singular: c.min_eigenvalue < floor * T::lit(10.0),
        min_eigenvalue: c.min_eigenvalue,
        cometric,
        metric,
        christoffel,
        metric_dt,
        cometric_dt,
        z_jacobian,
        z_covariant,
        df,
        grad_f,
        metric_grad,
        cometric_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Schedule;

    fn conformal(beta: f64) -> NoiseModel<f64> {
        NoiseModel::new(
            (0..2)
                .map(|k| VectorFieldSpec::ConformalAxis {
                    dim: 2,
                    axis: k,
                    beta,
                })
                .collect(),
            1e-9,
        )
    }

    fn zero_drift() -> VectorFieldSpec<f64> {
        VectorFieldSpec::Constant(vec![0.0, 0.0])
    }

    #[test]
    fn brownian_noise_gives_flat_geometry() {
        let noise = NoiseModel::<f64>::brownian(3);
        let u = VectorFieldSpec::Constant(vec![0.3, -0.1, 0.2]);
        let x = [0.4, -1.0, 2.0];
        let j = evaluate(&noise, &u, 0.0, &x).unwrap();
        assert_eq!(j.cometric, crate::linalg::identity(3));
        assert!(j.christoffel.iter().flatten().flatten().all(|&v| v == 0.0));
        assert_eq!(j.scalar_curvature, 0.0);
        assert_eq!(j.z, vec![0.3, -0.1, 0.2]);
        assert_eq!(j.f, 0.0);
        let md = metric_and_derivatives(&noise, 0.0, &x).unwrap();
        assert!(md.first.iter().flatten().flatten().all(|&v| v == 0.0));
        assert!(md
            .second
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .all(|&v| v == 0.0));
        assert!(md.dt.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn conformal_cometric_values() {
        let noise = conformal(1.0);
        let at0 = cometric(&noise, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(at0, crate::linalg::identity(2));
        let at1 = cometric(&noise, 0.0, &[1.0, 0.0]).unwrap();
        let e = (-2.0f64).exp();
        assert!((at1[0][0] - e).abs() < 1e-16 && (at1[1][1] - e).abs() < 1e-16);
        assert_eq!(at1[0][1], 0.0);
    }

    #[test]
    fn conformal_metric_derivative_formula() {
        // g = e^{2λ} I, λ = β‖x‖²: ∂_i g_jk = 2 ∂_iλ g_jk
        let beta = 0.3;
        let x = [1.0, 0.0];
        let md = metric_and_derivatives(&conformal(beta), 0.0, &x).unwrap();
        let g = (2.0 * beta).exp();
        let dl = [2.0 * beta * x[0], 2.0 * beta * x[1]];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let expect = if j == k { 2.0 * dl[i] * g } else { 0.0 };
                    assert!((md.first[i][j][k] - expect).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn conformal_christoffel_and_curvature() {
        let beta = 0.1;
        let gamma = christoffel(&conformal(beta), 0.0, &[1.0, 0.0]).unwrap();
        assert!((gamma[0][0][0] - 0.2).abs() < 1e-14);
        // Γ^1_{22} = −∂_1λ
        assert!((gamma[0][1][1] + 0.2).abs() < 1e-14);
        assert!((gamma[1][0][1] - 0.2).abs() < 1e-14);
        let s = scalar_curvature(&conformal(0.25), 0.0, &[0.0, 0.0]).unwrap();
        assert!((s + 2.0).abs() < 1e-12, "S = {s}");
    }

    #[test]
    fn inverse_identity_and_symmetry() {
        let noise = NoiseModel::new(
            vec![
                VectorFieldSpec::GaussianKernel {
                    center: vec![0.1, 0.2, -0.1],
                    amplitude: vec![0.4, 0.1, 0.0],
                    width: 0.6,
                },
                VectorFieldSpec::Constant(vec![0.3, 0.0, 0.0]),
                VectorFieldSpec::Constant(vec![0.0, 0.3, 0.1]),
                VectorFieldSpec::Constant(vec![0.0, 0.0, 0.3]),
            ],
            1e-6,
        );
        let u = VectorFieldSpec::Constant(vec![0.0; 3]);
        let j = evaluate(&noise, &u, 0.0, &[0.2, -0.3, 0.1]).unwrap();
        let prod = crate::linalg::mat_mul(&j.metric, &j.cometric);
        for i in 0..3 {
            for k in 0..3 {
                let e: f64 = if i == k { 1.0 } else { 0.0 };
                assert!((prod[i][k] - e).abs() < 1e-12);
                for l in 0..3 {
                    assert_eq!(j.christoffel[l][i][k], j.christoffel[l][k][i]);
                }
            }
        }
    }

    #[test]
    fn ellipticity_violation_is_reported() {
        let noise = NoiseModel::new(vec![VectorFieldSpec::Constant(vec![1.0, 0.0])], 1e-6);
        assert!(matches!(
            cometric(&noise, 0.0, &[0.0, 0.0]),
            Err(Error::EllipticityViolation { .. })
        ));
    }

    #[test]
    fn near_singular_flag() {
        let noise = NoiseModel::new(
            vec![
                VectorFieldSpec::Constant(vec![0.05, 0.0]),
                VectorFieldSpec::Constant(vec![0.0, 0.05]),
            ],
            1e-3,
        );
        let j = evaluate(&noise, &zero_drift(), 0.0, &[0.0, 0.0]).unwrap();
        assert!(j.near_singular);
    }

    #[test]
    fn linear_drift_potential_is_half_trace() {
        let noise = NoiseModel::<f64>::brownian(2);
        let u = VectorFieldSpec::Linear {
            matrix: vec![vec![0.3, 1.0], vec![-0.5, 0.7]],
            offset: vec![0.0, 0.0],
        };
        let j = evaluate(&noise, &u, 0.0, &[0.3, -0.2]).unwrap();
        assert!((j.f - 0.5).abs() < 1e-15);
        assert!(j.grad_f.iter().all(|&v| v == 0.0));
        assert_eq!(j.z_covariant, vec![vec![0.3, 1.0], vec![-0.5, 0.7]]);
    }

    #[test]
    fn time_dependent_noise_dt_relations() {
        let noise = NoiseModel::new(
            vec![
                VectorFieldSpec::TimeScaled {
                    field: Box::new(VectorFieldSpec::GaussianKernel {
                        center: vec![0.0, 0.0],
                        amplitude: vec![0.5, 0.2],
                        width: 0.7,
                    }),
                    schedule: Schedule::Linear {
                        offset: 1.0,
                        slope: 0.5,
                    },
                },
                VectorFieldSpec::Constant(vec![0.3, 0.0]),
                VectorFieldSpec::Constant(vec![0.0, 0.3]),
            ],
            1e-6,
        );
        let j = evaluate(&noise, &zero_drift(), 0.4, &[0.1, 0.2]).unwrap();
        // ġ* = −g* ġ g*
        let lhs = &j.cometric_dt;
        let mut rhs: Matrix<f64> = zeros(2, 2);
        for i in 0..2 {
            for k in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        rhs[i][k] -= j.cometric[i][a] * j.metric_dt[a][b] * j.cometric[b][k];
                    }
                }
            }
        }
        for i in 0..2 {
            for k in 0..2 {
                assert!((lhs[i][k] - rhs[i][k]).abs() < 1e-12);
            }
        }
        // compare ġ* with a central difference in t
        let h = 1e-5;
        let p = cometric(&noise, 0.4 + h, &[0.1, 0.2]).unwrap();
        let m = cometric(&noise, 0.4 - h, &[0.1, 0.2]).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let fd = (p[i][k] - m[i][k]) / (2.0 * h);
                assert!((fd - lhs[i][k]).abs() < 1e-8);
            }
        }
    }
}
