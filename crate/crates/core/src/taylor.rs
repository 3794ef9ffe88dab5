//! Truncated multivariate Taylor polynomials.
//!
//! A [`Taylor`] holds the normalized coefficients `c_α = ∂^α f(x₀) / α!` of a
//! smooth function of up to three variables, truncated at total degree three.
//! Arithmetic on these objects is exact forward-mode differentiation: the
//! truncated product of two expansions is the expansion of the product, and
//! composition with a scalar function only needs the first few derivatives of
//! that function at the base value. All exact jets in the crate are built on
//! this type.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;

use crate::scalar::Scalar;

pub const MAX_DIM: usize = 3;
pub const MAX_ORDER: usize = 3;
const MAX_TERMS: usize = 20;

struct Table {
    exps: Vec<[u8; MAX_DIM]>,
    /// number of monomials with degree <= k
    degree_end: [usize; MAX_ORDER + 1],
    /// (lhs, rhs, out) index triples sorted by degree of `out`
    pairs: Vec<(u8, u8, u8)>,
    pairs_end: [usize; MAX_ORDER + 1],
    /// per variable: (source, target, exponent factor)
    deriv: [Vec<(u8, u8, u8)>; MAX_DIM],
    /// α! for each monomial
    alpha_factorial: Vec<f64>,
}

impl Table {
    fn build(dim: usize) -> Self {
        let mut exps: Vec<[u8; MAX_DIM]> = Vec::new();
        let mut degree_end = [0; MAX_ORDER + 1];
        for deg in 0..=MAX_ORDER {
            // graded, lexicographically decreasing within a degree
            let mut level = Vec::new();
            for a in (0..=deg).rev() {
                for b in (0..=(deg - a)).rev() {
                    let c = deg - a - b;
                    let e = [a as u8, b as u8, c as u8];
                    if e.iter().skip(dim).all(|&v| v == 0) {
                        level.push(e);
                    }
                }
            }
            exps.extend(level);
            degree_end[deg] = exps.len();
        }
        let degree = |e: &[u8; MAX_DIM]| e.iter().map(|&v| v as usize).sum::<usize>();
        let index_of = |e: [u8; MAX_DIM]| exps.iter().position(|x| *x == e);

        let mut pairs = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree(a) + degree(b) > MAX_ORDER {
                    continue;
                }
                let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                let k = index_of(s).expect("monomial in table");
                pairs.push((i as u8, j as u8, k as u8));
            }
        }
        pairs.sort_by_key(|&(_, _, k)| degree(&exps[k as usize]));
        let mut pairs_end = [0; MAX_ORDER + 1];
        for (deg, end) in pairs_end.iter_mut().enumerate() {
            *end = pairs
                .iter()
                .filter(|&&(_, _, k)| degree(&exps[k as usize]) <= deg)
                .count();
        }

        let mut deriv: [Vec<(u8, u8, u8)>; MAX_DIM] = Default::default();
        for (var, list) in deriv.iter_mut().enumerate().take(dim) {
            for (src, e) in exps.iter().enumerate() {
                if e[var] == 0 {
                    continue;
                }
                let mut lowered = *e;
                lowered[var] -= 1;
                let dst = index_of(lowered).expect("monomial in table");
                list.push((src as u8, dst as u8, e[var]));
            }
        }

        let fact = |n: u8| (1..=n as u64).product::<u64>() as f64;
        let alpha_factorial = exps
            .iter()
            .map(|e| e.iter().map(|&v| fact(v)).product())
            .collect();

        Table {
            exps,
            degree_end,
            pairs,
            pairs_end,
            deriv,
            alpha_factorial,
        }
    }

    fn index(&self, e: [u8; MAX_DIM]) -> Option<usize> {
        self.exps.iter().position(|x| *x == e)
    }
}

fn table(dim: usize) -> &'static Table {
    static TABLES: OnceLock<[Table; MAX_DIM]> = OnceLock::new();
    let tables = TABLES.get_or_init(|| [Table::build(1), Table::build(2), Table::build(3)]);
    &tables[dim - 1]
}

/// Number of coefficients stored for a given dimension and order.
pub fn terms(dim: usize, order: usize) -> usize {
    table(dim).degree_end[order]
}

/// Truncated Taylor expansion in `dim` variables up to total degree `order`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Taylor<T> {
    dim: u8,
    order: u8,
    c: [T; MAX_TERMS],
}

impl<T: Scalar> Taylor<T> {
    pub fn zero(dim: usize, order: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "taylor dimension {dim}");
        assert!(order <= MAX_ORDER, "taylor order {order}");
        Taylor {
            dim: dim as u8,
            order: order as u8,
            c: [T::zero(); MAX_TERMS],
        }
    }

    pub fn constant(dim: usize, order: usize, value: T) -> Self {
        let mut out = Self::zero(dim, order);
        out.c[0] = value;
        out
    }

    /// The coordinate function `x_var` expanded around `at`.
    pub fn variable(dim: usize, order: usize, var: usize, at: T) -> Self {
        let mut out = Self::constant(dim, order, at);
        if order > 0 {
            out.c[1 + var] = T::one();
        }
        out
    }

    /// Coordinate functions of all variables expanded around `x`.
    pub fn variables(x: &[T], order: usize) -> Vec<Self> {
        (0..x.len())
            .map(|i| Self::variable(x.len(), order, i, x[i]))
            .collect()
    }

    /// Polynomial with given derivatives up to order 3 (1D only).
    pub fn from_derivatives_1d(order: usize, derivs: [T; 4]) -> Self {
        let mut out = Self::zero(1, order);
        let fact = [1.0, 1.0, 2.0, 6.0];
        for k in 0..=order {
            out.c[k] = derivs[k] / T::lit(fact[k]);
        }
        out
    }

    /// `scale · Π_i f_i(h_i)` where `factors[i]` holds the normalized
    /// coefficients of the univariate `f_i` (so `f_i(0) = factors[i][0]`).
    pub fn separable(order: usize, scale: T, factors: &[[T; MAX_ORDER + 1]]) -> Self {
        let dim = factors.len();
        let mut out = Self::zero(dim, order);
        let tab = table(dim);
        for (k, e) in tab.exps[..tab.degree_end[order]].iter().enumerate() {
            let mut c = scale;
            for (f, &p) in factors.iter().zip(e) {
                c *= f[p as usize];
            }
            out.c[k] = c;
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order as usize
    }

    #[inline]
    pub fn value(&self) -> T {
        self.c[0]
    }

    fn len(&self) -> usize {
        terms(self.dim(), self.order())
    }

    /// Partial derivative `∂_{vars[0]} ∂_{vars[1]} …` at the expansion point.
    pub fn partial(&self, vars: &[usize]) -> T {
        assert!(
            vars.len() <= self.order(),
            "derivative beyond truncation order"
        );
        let mut e = [0u8; MAX_DIM];
        for &v in vars {
            assert!(v < self.dim(), "variable index {v} out of range");
            e[v] += 1;
        }
        let tab = table(self.dim());
        let idx = tab.index(e).expect("monomial in table");
        self.c[idx] * T::lit(tab.alpha_factorial[idx])
    }

    pub fn gradient(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.partial(&[i])).collect()
    }

    /// Drop all terms above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        assert!(order <= self.order(), "cannot raise truncation order");
        let mut out = *self;
        out.order = order as u8;
        for v in out.c.iter_mut().skip(terms(self.dim(), order)) {
            *v = T::zero();
        }
        out
    }

    /// Exact partial derivative; the result has one order less.
    pub fn deriv(&self, var: usize) -> Self {
        assert!(self.order > 0, "derivative of an order-0 expansion");
        assert!(var < self.dim(), "variable index {var} out of range");
        let mut out = Self::zero(self.dim(), self.order() - 1);
        let n = out.len();
        for &(src, dst, factor) in &table(self.dim()).deriv[var] {
            let dst = dst as usize;
            if dst < n {
                out.c[dst] += self.c[src as usize] * T::lit(factor as f64);
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for v in out.c.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add_scalar(&self, s: T) -> Self {
        let mut out = *self;
        out.c[0] += s;
        out
    }

    /// `Σ_n s[n] (self − self(x₀))^n` for `n ≤ order`: composition with a
    /// scalar function whose normalized derivatives at `self.value()` are `s`.
    fn compose(&self, s: [T; MAX_ORDER + 1]) -> Self {
        let mut h = *self;
        h.c[0] = T::zero();
        let mut out = Self::constant(self.dim(), self.order(), s[self.order()]);
        for n in (0..self.order()).rev() {
            out = out * h;
            out.c[0] += s[n];
        }
        out
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let r = a.recip();
        self.compose([r, -r * r, r * r * r, -r * r * r * r])
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e, e, e / T::lit(2.0), e / T::lit(6.0)])
    }

    pub fn ln(&self) -> Self {
        let a = self.value();
        let r = a.recip();
        self.compose([a.ln(), r, -r * r / T::lit(2.0), r * r * r / T::lit(3.0)])
    }

    pub fn sqrt(&self) -> Self {
        let a = self.value();
        let s = a.sqrt();
        self.compose([
            s,
            T::lit(0.5) / s,
            -T::lit(0.125) / (s * a),
            T::lit(0.0625) / (s * a * a),
        ])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s / T::lit(2.0), -c / T::lit(6.0)])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c / T::lit(2.0), s / T::lit(6.0)])
    }

    pub fn is_finite(&self) -> bool {
        self.c[..self.len()].iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> Add for Taylor<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let order = self.order.min(rhs.order) as usize;
        let mut out = Self::zero(self.dim(), order);
        for i in 0..out.len() {
            out.c[i] = self.c[i] + rhs.c[i];
        }
        out
    }
}

impl<T: Scalar> Sub for Taylor<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let order = self.order.min(rhs.order) as usize;
        let mut out = Self::zero(self.dim(), order);
        for i in 0..out.len() {
            out.c[i] = self.c[i] - rhs.c[i];
        }
        out
    }
}

impl<T: Scalar> AddAssign for Taylor<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar> SubAssign for Taylor<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Scalar> Neg for Taylor<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for Taylor<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let order = self.order.min(rhs.order) as usize;
        let tab = table(self.dim());
        let mut out = Self::zero(self.dim(), order);
        for &(i, j, k) in &tab.pairs[..tab.pairs_end[order]] {
            out.c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        out
    }
}

impl<T: Scalar> Mul<T> for Taylor<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_counts() {
        assert_eq!(terms(1, 3), 4);
        assert_eq!(terms(2, 3), 10);
        assert_eq!(terms(3, 3), 20);
        assert_eq!(terms(3, 1), 4);
    }

    #[test]
    fn polynomial_partials_are_exact() {
        // f = x² y + 3 y z at (1, 2, -1)
        let v = Taylor::<f64>::variables(&[1.0, 2.0, -1.0], 3);
        let f = v[0] * v[0] * v[1] + (v[1] * v[2]).scale(3.0);
        assert_eq!(f.value(), 2.0 - 6.0);
        assert_eq!(f.partial(&[0]), 4.0);
        assert_eq!(f.partial(&[1]), 1.0 - 3.0);
        assert_eq!(f.partial(&[2]), 6.0);
        assert_eq!(f.partial(&[0, 0]), 4.0);
        assert_eq!(f.partial(&[0, 1]), 2.0);
        assert_eq!(f.partial(&[1, 2]), 3.0);
        assert_eq!(f.partial(&[0, 0, 1]), 2.0);
        assert_eq!(f.partial(&[0, 1, 0]), 2.0);
        assert_eq!(f.partial(&[2, 2, 2]), 0.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let x = Taylor::<f64>::variable(1, 3, 0, 0.7);
        let e = x.exp();
        for k in 0..=3 {
            let vars = vec![0; k];
            assert!((e.partial(&vars) - 0.7f64.exp()).abs() < 1e-14);
        }
        let l = x.ln();
        assert!((l.partial(&[0]) - 1.0 / 0.7).abs() < 1e-13);
        assert!((l.partial(&[0, 0]) + 1.0 / 0.49).abs() < 1e-12);
        assert!((l.partial(&[0, 0, 0]) - 2.0 / 0.343).abs() < 1e-11);
        let r = x.recip();
        assert!((r.partial(&[0, 0, 0]) + 6.0 / 0.7f64.powi(4)).abs() < 1e-10);
        let s = x.sqrt();
        assert!((s.partial(&[0, 0, 0]) - 0.375 * 0.7f64.powf(-2.5)).abs() < 1e-12);
        let (sn, cs) = (x.sin(), x.cos());
        let want = [0.7f64.sin(), 0.7f64.cos(), -0.7f64.sin(), -0.7f64.cos()];
        for k in 0..=3 {
            let vars = vec![0; k];
            assert!((sn.partial(&vars) - want[k]).abs() < 1e-14);
            assert!((cs.partial(&vars) - want[(k + 1) % 4]).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_lowers_order() {
        let v = Taylor::<f64>::variables(&[0.5, -0.25], 3);
        let f = (v[0] * v[1]).exp();
        let fx = f.deriv(0);
        assert_eq!(fx.order(), 2);
        assert!((fx.value() - f.partial(&[0])).abs() < 1e-15);
        assert!((fx.partial(&[1, 1]) - f.partial(&[0, 1, 1])).abs() < 1e-14);
    }

    #[test]
    fn reciprocal_inverts() {
        let v = Taylor::<f64>::variables(&[0.3, 0.2, 0.1], 3);
        let a = (v[0] * v[1] + v[2]).exp() + v[0];
        let one = a * a.recip();
        assert!((one.value() - 1.0).abs() < 1e-15);
        for i in 1..terms(3, 3) {
            assert!(one.c[i].abs() < 1e-13);
        }
    }
}
