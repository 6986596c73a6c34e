//! Truncated Taylor arithmetic.
//!
//! A [`Jet`] stores the normalized Taylor coefficients `c[k] = g^(k)(x0) / k!`
//! of a scalar function `g` around a base point. Every profile in the crate is
//! written once against this type, so first, second and third radial
//! derivatives are exact up to rounding rather than obtained by differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of stored Taylor coefficients (value plus four derivatives).
pub const ORDER: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet(pub [f64; ORDER]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        let mut a = [0.0; ORDER];
        a[0] = c;
        Jet(a)
    }

    /// The independent variable at `x`.
    pub fn variable(x: f64) -> Self {
        let mut a = [0.0; ORDER];
        a[0] = x;
        a[1] = 1.0;
        Jet(a)
    }

    pub fn zero() -> Self {
        Jet([0.0; ORDER])
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// k-th derivative at the base point.
    pub fn deriv(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.0[k] * fact
    }

    /// Jet of the derivative. The top coefficient is lost and set to zero.
    pub fn derivative(&self) -> Self {
        let mut a = [0.0; ORDER];
        for k in 0..ORDER - 1 {
            a[k] = (k + 1) as f64 * self.0[k + 1];
        }
        Jet(a)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut a = self.0;
        for v in a.iter_mut() {
            *v *= s;
        }
        Jet(a)
    }

    pub fn recip(&self) -> Self {
        Jet::constant(1.0) / *self
    }

    pub fn exp(&self) -> Self {
        let a = &self.0;
        let mut g = [0.0; ORDER];
        g[0] = a[0].exp();
        for k in 1..ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * g[k - j];
            }
            g[k] = s / k as f64;
        }
        Jet(g)
    }

    /// `exp(x) - 1` with the value computed without cancellation.
    pub fn exp_m1(&self) -> Self {
        let mut e = self.exp();
        e.0[0] = self.0[0].exp_m1();
        e
    }

    pub fn ln(&self) -> Self {
        let a = &self.0;
        let mut l = [0.0; ORDER];
        l[0] = a[0].ln();
        for k in 1..ORDER {
            let mut s = 0.0;
            for j in 1..k {
                s += j as f64 * l[j] * a[k - j];
            }
            l[k] = (a[k] - s / k as f64) / a[0];
        }
        Jet(l)
    }

    pub fn sqrt(&self) -> Self {
        let a = &self.0;
        let mut s = [0.0; ORDER];
        s[0] = a[0].sqrt();
        for k in 1..ORDER {
            let mut acc = 0.0;
            for j in 1..k {
                acc += s[j] * s[k - j];
            }
            s[k] = (a[k] - acc) / (2.0 * s[0]);
        }
        Jet(s)
    }

    /// `self^p` for a positive base.
    pub fn powf(&self, p: f64) -> Self {
        let a = &self.0;
        let mut g = [0.0; ORDER];
        g[0] = a[0].powf(p);
        for k in 1..ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += (p * j as f64 - (k - j) as f64) * a[j] * g[k - j];
            }
            g[k] = s / (k as f64 * a[0]);
        }
        Jet(g)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Jet::constant(1.0);
        }
        let base = if n > 0 { *self } else { self.recip() };
        let mut out = base;
        for _ in 1..n.unsigned_abs() {
            out = out * base;
        }
        out
    }

    pub fn asinh(&self) -> Self {
        let inner = (*self * *self + 1.0).sqrt();
        let mut out = (*self + inner).ln();
        out.0[0] = self.0[0].asinh();
        out
    }

    /// Evaluates `sum c_k x^k` by Horner's rule.
    pub fn poly(&self, coeffs: &[f64]) -> Self {
        let mut acc = Jet::zero();
        for &c in coeffs.iter().rev() {
            acc = acc * *self + c;
        }
        acc
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(o.0) {
            *x += y;
        }
        Jet(a)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.0[0] += c;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(o.0) {
            *x -= y;
        }
        Jet(a)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.0[0] -= c;
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; ORDER];
        for i in 0..ORDER {
            for j in 0..ORDER - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let mut q = [0.0; ORDER];
        for k in 0..ORDER {
            let mut s = self.0[k];
            for j in 1..=k {
                s -= o.0[j] * q[k - j];
            }
            q[k] = s / o.0[0];
        }
        Jet(q)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, s: f64) -> Jet {
        self.scale(1.0 / s)
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn exp_ln_roundtrip_derivatives() {
        let x = Jet::variable(0.7);
        let y = x.exp().ln();
        for k in 0..ORDER {
            assert!(close(y.0[k], x.0[k], 1e-14), "k={k}");
        }
    }

    #[test]
    fn sqrt_matches_powf_half() {
        let x = Jet::variable(2.3) * Jet::variable(2.3) + 1.0;
        let a = x.sqrt();
        let b = x.powf(0.5);
        for k in 0..ORDER {
            assert!(close(a.0[k], b.0[k], 1e-13));
        }
    }

    #[test]
    fn asinh_derivatives() {
        // d/dx asinh x = (1+x^2)^{-1/2}, d2 = -x (1+x^2)^{-3/2}
        let x0: f64 = 1.3;
        let j = Jet::variable(x0).asinh();
        let q = 1.0 + x0 * x0;
        assert!(close(j.deriv(1), q.powf(-0.5), 1e-14));
        assert!(close(j.deriv(2), -x0 * q.powf(-1.5), 1e-14));
        assert!(close(j.deriv(3), (2.0 * x0 * x0 - 1.0) * q.powf(-2.5), 1e-13));
    }

    #[test]
    fn powf_negative_exponent() {
        let x0: f64 = 3.0;
        let j = Jet::variable(x0).powf(-2.5);
        assert!(close(j.deriv(1), -2.5 * x0.powf(-3.5), 1e-14));
        assert!(close(j.deriv(3), -2.5 * -3.5 * -4.5 * x0.powf(-5.5), 1e-13));
    }

    #[test]
    fn derivative_shift_and_division() {
        let x = Jet::variable(2.0);
        let g = (x * x * x) / (x + 1.0);
        // g' = (3x^2(x+1) - x^3)/(x+1)^2 = (2x^3+3x^2)/(x+1)^2 at 2 -> 28/9
        assert!(close(g.derivative().value(), 28.0 / 9.0, 1e-14));
        assert!(close(g.deriv(1), 28.0 / 9.0, 1e-14));
    }
}
