//! Truncated Taylor jets.
//!
//! [`Jet1`] is a one-variable truncated series used to solve invariant
//! manifold and implicit-function coefficient equations order by order.
//! [`PJet2`] carries a point together with first and second derivatives
//! with respect to two base variables through map compositions; it is the
//! forward-mode sampler behind the horseshoe derivative checks.

use crate::real::Real;
use crate::vec2::{Mat2, Vec2};

/// One-variable truncated Taylor series: `c[0] + c[1] x + ... + c[n] x^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1<R> {
    pub c: Vec<R>,
}

impl<R: Real> Jet1<R> {
    pub fn new(order: usize) -> Self {
        Jet1 {
            c: vec![R::zero(); order + 1],
        }
    }

    pub fn constant(v: R, order: usize) -> Self {
        let mut j = Jet1::new(order);
        j.c[0] = v;
        j
    }

    /// The identity variable `x0 + x`.
    pub fn variable(x0: R, order: usize) -> Self {
        let mut j = Jet1::new(order);
        j.c[0] = x0;
        if order >= 1 {
            j.c[1] = R::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (a, b) in r.c.iter_mut().zip(&o.c) {
            *a += *b;
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (a, b) in r.c.iter_mut().zip(&o.c) {
            *a -= *b;
        }
        r
    }

    pub fn scale(&self, s: R) -> Self {
        let mut r = self.clone();
        for a in r.c.iter_mut() {
            *a *= s;
        }
        r
    }

    pub fn add_const(&self, s: R) -> Self {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.order();
        let mut r = Jet1::new(n);
        for i in 0..=n {
            if self.c[i].is_zero() {
                continue;
            }
            for j in 0..=(n - i) {
                let t = self.c[i] * o.c[j];
                r.c[i + j] += t;
            }
        }
        r
    }

    pub fn square(&self) -> Self {
        self.mul(self)
    }

    /// Reciprocal series; requires a nonzero constant term.
    pub fn recip(&self) -> Self {
        let n = self.order();
        let mut r = Jet1::new(n);
        let inv0 = R::one() / self.c[0];
        r.c[0] = inv0;
        for k in 1..=n {
            let mut acc = R::zero();
            for j in 1..=k {
                acc += self.c[j] * r.c[k - j];
            }
            r.c[k] = -inv0 * acc;
        }
        r
    }

    /// Simultaneous sine and cosine of the series.
    pub fn sin_cos(&self) -> (Self, Self) {
        let n = self.order();
        let mut s = Jet1::new(n);
        let mut c = Jet1::new(n);
        s.c[0] = self.c[0].sin();
        c.c[0] = self.c[0].cos();
        for k in 1..=n {
            let mut sa = R::zero();
            let mut ca = R::zero();
            for j in 1..=k {
                let w = R::from_f64(j as f64) * self.c[j];
                sa += w * c.c[k - j];
                ca += w * s.c[k - j];
            }
            let kf = R::from_f64(k as f64);
            s.c[k] = sa / kf;
            c.c[k] = -ca / kf;
        }
        (s, c)
    }

    pub fn exp(&self) -> Self {
        let n = self.order();
        let mut r = Jet1::new(n);
        r.c[0] = self.c[0].exp();
        for k in 1..=n {
            let mut acc = R::zero();
            for j in 1..=k {
                acc += R::from_f64(j as f64) * self.c[j] * r.c[k - j];
            }
            r.c[k] = acc / R::from_f64(k as f64);
        }
        r
    }

    pub fn eval(&self, x: R) -> R {
        let mut acc = R::zero();
        for &ci in self.c.iter().rev() {
            acc = acc * x + ci;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let n = self.order();
        let mut r = Jet1::new(n.saturating_sub(1));
        for k in 1..=n {
            r.c[k - 1] = self.c[k] * R::from_f64(k as f64);
        }
        r
    }
}

/// Symmetric 2x2 bilinear form (a Hessian of a scalar in two variables).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2<R> {
    pub xx: R,
    pub xy: R,
    pub yy: R,
}

impl<R: Real> Sym2<R> {
    pub fn zero() -> Self {
        Sym2 {
            xx: R::zero(),
            xy: R::zero(),
            yy: R::zero(),
        }
    }

    pub fn scale(self, s: R) -> Self {
        Sym2 {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    pub fn add(self, o: Self) -> Self {
        Sym2 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }

    /// Pullback `A^T S A` of the form by the 2x2 matrix `A`.
    pub fn pullback(self, a: Mat2<R>) -> Self {
        // columns of A
        let u = Vec2::new(a.a, a.c);
        let v = Vec2::new(a.b, a.d);
        let su = Vec2::new(self.xx * u.x + self.xy * u.y, self.xy * u.x + self.yy * u.y);
        let sv = Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y);
        Sym2 {
            xx: u.dot(su),
            xy: u.dot(sv),
            yy: v.dot(sv),
        }
    }

    pub fn max_abs(self) -> R {
        self.xx.abs().max_r(self.xy.abs()).max_r(self.yy.abs())
    }
}

/// Local derivative data of a planar map at a point: value, Jacobian, and
/// per-component Hessians.
#[derive(Clone, Copy, Debug)]
pub struct MapD2<R> {
    pub value: Vec2<R>,
    pub jac: Mat2<R>,
    pub hess_x: Sym2<R>,
    pub hess_y: Sym2<R>,
}

/// A point with first and second derivatives with respect to two base
/// parameters, propagated through compositions.
#[derive(Clone, Copy, Debug)]
pub struct PJet2<R> {
    pub p: Vec2<R>,
    pub jac: Mat2<R>,
    pub hess_x: Sym2<R>,
    pub hess_y: Sym2<R>,
}

impl<R: Real> PJet2<R> {
    /// Seed jet: the identity at `p` (base variables are the coordinates).
    pub fn seed(p: Vec2<R>) -> Self {
        PJet2 {
            p,
            jac: Mat2::identity(),
            hess_x: Sym2::zero(),
            hess_y: Sym2::zero(),
        }
    }

    /// Push the jet through a map given its local derivative data at `self.p`.
    pub fn push(self, d: MapD2<R>) -> Self {
        let j = d.jac.mul_mat(self.jac);
        // chain rule for second derivatives
        let hx = d
            .hess_x
            .pullback(self.jac)
            .add(self.hess_x.scale(d.jac.a))
            .add(self.hess_y.scale(d.jac.b));
        let hy = d
            .hess_y
            .pullback(self.jac)
            .add(self.hess_x.scale(d.jac.c))
            .add(self.hess_y.scale(d.jac.d));
        PJet2 {
            p: d.value,
            jac: j,
            hess_x: hx,
            hess_y: hy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_sin_cos_matches_derivatives() {
        // g(x) = sin(0.3 + 2x): coefficients 2^k/k! * (sin/cos at 0.3)
        let x: Jet1<f64> = Jet1::variable(0.3, 5).scale(1.0); // 0.3 + x
        let u = {
            let mut v = Jet1::new(5);
            v.c[0] = 0.3;
            v.c[1] = 2.0;
            let _ = x;
            v
        };
        let (s, _c) = u.sin_cos();
        assert!((s.c[0] - 0.3f64.sin()).abs() < 1e-15);
        assert!((s.c[1] - 2.0 * 0.3f64.cos()).abs() < 1e-15);
        assert!((s.c[2] + 2.0 * 0.3f64.sin()).abs() < 1e-15); // 4/2! * (-sin)
    }

    #[test]
    fn jet_recip() {
        let mut u: Jet1<f64> = Jet1::new(4);
        u.c[0] = 2.0;
        u.c[1] = 1.0;
        let r = u.recip();
        let check = u.mul(&r);
        assert!((check.c[0] - 1.0).abs() < 1e-15);
        for k in 1..=4 {
            assert!(check.c[k].abs() < 1e-15);
        }
    }

    #[test]
    fn pjet2_composition_second_derivatives() {
        // F(x,y) = (x^2 + y, x y); compose with itself and compare Hessian
        // against central differences.
        fn f(p: Vec2<f64>) -> Vec2<f64> {
            Vec2::new(p.x * p.x + p.y, p.x * p.y)
        }
        fn d2(p: Vec2<f64>) -> MapD2<f64> {
            MapD2 {
                value: f(p),
                jac: Mat2::new(2.0 * p.x, 1.0, p.y, p.x),
                hess_x: Sym2 {
                    xx: 2.0,
                    xy: 0.0,
                    yy: 0.0,
                },
                hess_y: Sym2 {
                    xx: 0.0,
                    xy: 1.0,
                    yy: 0.0,
                },
            }
        }
        let p0 = Vec2::new(0.7, -0.4);
        let jet = PJet2::seed(p0).push(d2(p0));
        let jet = jet.push(d2(jet.p));
        let g = |p: Vec2<f64>| f(f(p));
        let h = 1e-5;
        let gxx = (g(Vec2::new(p0.x + h, p0.y)).x - 2.0 * g(p0).x + g(Vec2::new(p0.x - h, p0.y)).x) / (h * h);
        let gxy = (g(Vec2::new(p0.x + h, p0.y + h)).x - g(Vec2::new(p0.x + h, p0.y - h)).x
            - g(Vec2::new(p0.x - h, p0.y + h)).x
            + g(Vec2::new(p0.x - h, p0.y - h)).x)
            / (4.0 * h * h);
        assert!((jet.hess_x.xx - gxx).abs() < 1e-5, "{} vs {}", jet.hess_x.xx, gxx);
        assert!((jet.hess_x.xy - gxy).abs() < 1e-5);
    }
}
