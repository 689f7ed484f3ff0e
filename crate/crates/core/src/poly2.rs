//! Dense bivariate polynomials truncated at a total degree, and planar
//! polynomial maps built from them. These are the workhorses of the
//! Birkhoff normal-form computation: degrees stay small (<= 13), so a
//! dense triangular table is the simplest representation to verify.

use crate::jet::{MapD2, Sym2};
use crate::real::Real;
use crate::vec2::{Mat2, Vec2};

/// Polynomial in two variables with total degree `<= deg`.
/// Coefficient of `x^i y^j` lives at `idx(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly2<R> {
    pub deg: usize,
    pub c: Vec<R>,
}

#[inline]
fn tri(d: usize) -> usize {
    d * (d + 1) / 2
}

#[inline]
pub fn idx(i: usize, j: usize) -> usize {
    tri(i + j) + j
}

impl<R: Real> Poly2<R> {
    pub fn zero(deg: usize) -> Self {
        Poly2 {
            deg,
            c: vec![R::zero(); tri(deg + 1)],
        }
    }

    pub fn constant(v: R, deg: usize) -> Self {
        let mut p = Poly2::zero(deg);
        p.c[0] = v;
        p
    }

    pub fn monomial(i: usize, j: usize, v: R, deg: usize) -> Self {
        let mut p = Poly2::zero(deg);
        if i + j <= deg {
            p.c[idx(i, j)] = v;
        }
        p
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        if i + j > self.deg {
            R::zero()
        } else {
            self.c[idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: R) {
        assert!(i + j <= self.deg);
        self.c[idx(i, j)] = v;
    }

    pub fn add(&self, o: &Self) -> Self {
        let deg = self.deg.max(o.deg);
        let mut r = Poly2::zero(deg);
        for d in 0..=deg {
            for j in 0..=d {
                let v = self.get(d - j, j) + o.get(d - j, j);
                r.c[idx(d - j, j)] = v;
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let deg = self.deg.max(o.deg);
        let mut r = Poly2::zero(deg);
        for d in 0..=deg {
            for j in 0..=d {
                let v = self.get(d - j, j) - o.get(d - j, j);
                r.c[idx(d - j, j)] = v;
            }
        }
        r
    }

    pub fn scale(&self, s: R) -> Self {
        let mut r = self.clone();
        for v in r.c.iter_mut() {
            *v *= s;
        }
        r
    }

    /// Product truncated at total degree `deg_out`.
    pub fn mul_trunc(&self, o: &Self, deg_out: usize) -> Self {
        let mut r = Poly2::zero(deg_out);
        for da in 0..=self.deg {
            for ja in 0..=da {
                let a = self.c[idx(da - ja, ja)];
                if a.is_zero() {
                    continue;
                }
                let ia = da - ja;
                for db in 0..=o.deg.min(deg_out.saturating_sub(da)) {
                    for jb in 0..=db {
                        let b = o.c[idx(db - jb, jb)];
                        if b.is_zero() {
                            continue;
                        }
                        let ib = db - jb;
                        r.c[idx(ia + ib, ja + jb)] += a * b;
                    }
                }
            }
        }
        r
    }

    pub fn eval(&self, p: Vec2<R>) -> R {
        // Horner in x with inner Horner in y per degree is awkward for the
        // triangular layout; powers are cheap at these degrees.
        let mut xp = vec![R::one(); self.deg + 1];
        let mut yp = vec![R::one(); self.deg + 1];
        for k in 1..=self.deg {
            xp[k] = xp[k - 1] * p.x;
            yp[k] = yp[k - 1] * p.y;
        }
        let mut acc = R::zero();
        for d in 0..=self.deg {
            for j in 0..=d {
                let c = self.c[idx(d - j, j)];
                if !c.is_zero() {
                    acc += c * xp[d - j] * yp[j];
                }
            }
        }
        acc
    }

    pub fn dx(&self) -> Self {
        let mut r = Poly2::zero(self.deg.saturating_sub(1));
        for d in 1..=self.deg {
            for j in 0..=d {
                let i = d - j;
                if i >= 1 {
                    let v = self.c[idx(i, j)] * R::from_f64(i as f64);
                    r.c[idx(i - 1, j)] += v;
                }
            }
        }
        r
    }

    pub fn dy(&self) -> Self {
        let mut r = Poly2::zero(self.deg.saturating_sub(1));
        for d in 1..=self.deg {
            for j in 1..=d {
                let i = d - j;
                let v = self.c[idx(i, j)] * R::from_f64(j as f64);
                r.c[idx(i, j - 1)] += v;
            }
        }
        r
    }

    /// Substitute the component polynomials of `m`, truncating at `deg_out`.
    pub fn compose(&self, m: &PolyMap2<R>, deg_out: usize) -> Self {
        // Powers of m.x and m.y up to needed degree, built incrementally.
        let mut xpow: Vec<Poly2<R>> = vec![Poly2::constant(R::one(), deg_out)];
        let mut ypow: Vec<Poly2<R>> = vec![Poly2::constant(R::one(), deg_out)];
        for k in 1..=self.deg {
            let nx = xpow[k - 1].mul_trunc(&m.x, deg_out);
            xpow.push(nx);
            let ny = ypow[k - 1].mul_trunc(&m.y, deg_out);
            ypow.push(ny);
        }
        let mut acc = Poly2::zero(deg_out);
        for d in 0..=self.deg {
            for j in 0..=d {
                let c = self.c[idx(d - j, j)];
                if c.is_zero() {
                    continue;
                }
                let term = xpow[d - j].mul_trunc(&ypow[j], deg_out).scale(c);
                acc = acc.add(&term);
            }
        }
        acc
    }

    /// Keep only terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: usize) -> Self {
        let mut r = Poly2::zero(self.deg);
        if d <= self.deg {
            for j in 0..=d {
                r.c[idx(d - j, j)] = self.c[idx(d - j, j)];
            }
        }
        r
    }

    pub fn max_coeff_abs(&self) -> R {
        let mut m = R::zero();
        for &v in &self.c {
            m = m.max_r(v.abs());
        }
        m
    }

    pub fn to_f64(&self) -> Poly2<f64> {
        Poly2 {
            deg: self.deg,
            c: self.c.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

/// Planar polynomial map `(x, y) -> (P(x, y), Q(x, y))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMap2<R> {
    pub x: Poly2<R>,
    pub y: Poly2<R>,
}

impl<R: Real> PolyMap2<R> {
    pub fn identity(deg: usize) -> Self {
        PolyMap2 {
            x: Poly2::monomial(1, 0, R::one(), deg),
            y: Poly2::monomial(0, 1, R::one(), deg),
        }
    }

    pub fn linear(m: Mat2<R>, deg: usize) -> Self {
        let mut x = Poly2::zero(deg);
        x.set(1, 0, m.a);
        x.set(0, 1, m.b);
        let mut y = Poly2::zero(deg);
        y.set(1, 0, m.c);
        y.set(0, 1, m.d);
        PolyMap2 { x, y }
    }

    pub fn eval(&self, p: Vec2<R>) -> Vec2<R> {
        Vec2::new(self.x.eval(p), self.y.eval(p))
    }

    pub fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        Mat2::new(
            self.x.dx().eval(p),
            self.x.dy().eval(p),
            self.y.dx().eval(p),
            self.y.dy().eval(p),
        )
    }

    /// Value, Jacobian, and Hessians at a point.
    pub fn d2(&self, p: Vec2<R>) -> MapD2<R> {
        let xd = self.x.dx();
        let yd = self.y.dx();
        let xe = self.x.dy();
        let ye = self.y.dy();
        MapD2 {
            value: self.eval(p),
            jac: Mat2::new(xd.eval(p), xe.eval(p), yd.eval(p), ye.eval(p)),
            hess_x: Sym2 {
                xx: xd.dx().eval(p),
                xy: xd.dy().eval(p),
                yy: xe.dy().eval(p),
            },
            hess_y: Sym2 {
                xx: yd.dx().eval(p),
                xy: yd.dy().eval(p),
                yy: ye.dy().eval(p),
            },
        }
    }

    /// Composition `self(m(.))` truncated at `deg_out`.
    pub fn compose(&self, m: &PolyMap2<R>, deg_out: usize) -> Self {
        PolyMap2 {
            x: self.x.compose(m, deg_out),
            y: self.y.compose(m, deg_out),
        }
    }

    /// Post-scale coordinates: `diag(sx, sy) . self`.
    pub fn scale_output(&self, sx: R, sy: R) -> Self {
        PolyMap2 {
            x: self.x.scale(sx),
            y: self.y.scale(sy),
        }
    }

    /// Pre-scale coordinates: `self . diag(sx, sy)`, done exactly on the
    /// coefficient table.
    pub fn scale_input(&self, sx: R, sy: R) -> Self {
        let mut r = self.clone();
        let deg = r.x.deg;
        let mut sxp = vec![R::one(); deg + 1];
        let mut syp = vec![R::one(); deg + 1];
        for k in 1..=deg {
            sxp[k] = sxp[k - 1] * sx;
            syp[k] = syp[k - 1] * sy;
        }
        for d in 0..=deg {
            for j in 0..=d {
                let f = sxp[d - j] * syp[j];
                r.x.c[idx(d - j, j)] *= f;
                r.y.c[idx(d - j, j)] *= f;
            }
        }
        r
    }

    /// Invert `self(q) = p` by Newton from a seed; the map must have an
    /// invertible Jacobian along the way.
    pub fn invert_newton(&self, p: Vec2<R>, seed: Vec2<R>, tol: R, max_iter: usize) -> Option<Vec2<R>> {
        let mut q = seed;
        for _ in 0..max_iter {
            let f = self.eval(q) - p;
            if f.norm_inf() <= tol {
                return Some(q);
            }
            let j = self.jacobian(q);
            let d = j.solve(f);
            q = q - d;
        }
        let f = self.eval(q) - p;
        if f.norm_inf() <= tol * R::from_f64(100.0) {
            Some(q)
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> PolyMap2<f64> {
        PolyMap2 {
            x: self.x.to_f64(),
            y: self.y.to_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_and_eval() {
        // (1 + x + y)^2 = 1 + 2x + 2y + x^2 + 2xy + y^2
        let mut p: Poly2<f64> = Poly2::zero(1);
        p.set(0, 0, 1.0);
        p.set(1, 0, 1.0);
        p.set(0, 1, 1.0);
        let q = p.mul_trunc(&p, 2);
        assert_eq!(q.get(0, 0), 1.0);
        assert_eq!(q.get(1, 0), 2.0);
        assert_eq!(q.get(0, 1), 2.0);
        assert_eq!(q.get(2, 0), 1.0);
        assert_eq!(q.get(1, 1), 2.0);
        assert_eq!(q.get(0, 2), 1.0);
        let v = q.eval(Vec2::new(0.3, -0.2));
        assert!((v - (1.0f64 + 0.3 - 0.2).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn compose_against_direct_eval() {
        let mut p: Poly2<f64> = Poly2::zero(3);
        p.set(1, 0, 2.0);
        p.set(2, 1, -1.5);
        p.set(0, 3, 0.4);
        let mut m = PolyMap2::identity(3);
        m.x.set(0, 1, 0.7);
        m.y.set(2, 0, -0.3);
        let comp = p.compose(&m, 9);
        let z = Vec2::new(0.11, -0.23);
        let direct = p.eval(m.eval(z));
        assert!((comp.eval(z) - direct).abs() < 1e-12);
    }

    #[test]
    fn newton_inverse() {
        let mut m: PolyMap2<f64> = PolyMap2::identity(3);
        m.x.set(2, 0, 0.3);
        m.y.set(1, 1, -0.2);
        let q = Vec2::new(0.05, -0.08);
        let p = m.eval(q);
        let qi = m.invert_newton(p, p, 1e-14, 50).unwrap();
        assert!((qi - q).norm() < 1e-13);
    }

    #[test]
    fn d2_matches_finite_differences() {
        let mut m: PolyMap2<f64> = PolyMap2::identity(4);
        m.x.set(2, 0, 1.3);
        m.x.set(1, 2, -0.5);
        m.y.set(0, 2, 2.0);
        m.y.set(3, 0, 0.25);
        let p = Vec2::new(0.4, -0.6);
        let d = m.d2(p);
        let h = 1e-5;
        let fxx = (m.eval(Vec2::new(p.x + h, p.y)).x - 2.0 * m.eval(p).x + m.eval(Vec2::new(p.x - h, p.y)).x) / (h * h);
        assert!((d.hess_x.xx - fxx).abs() < 1e-5);
        let jac_fd = (m.eval(Vec2::new(p.x + h, p.y)).y - m.eval(Vec2::new(p.x - h, p.y)).y) / (2.0 * h);
        assert!((d.jac.c - jac_fd).abs() < 1e-8);
    }
}
