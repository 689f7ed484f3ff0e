//! Small fixed-size planar linear algebra over a generic scalar.

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2<R> {
    pub x: R,
    pub y: R,
}

impl<R: Real> Vec2<R> {
    pub fn new(x: R, y: R) -> Self {
        Vec2 { x, y }
    }

    pub fn zero() -> Self {
        Vec2 {
            x: R::zero(),
            y: R::zero(),
        }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Vec2 {
            x: R::from_f64(x),
            y: R::from_f64(y),
        }
    }

    pub fn to_f64(self) -> Vec2<f64> {
        Vec2 {
            x: self.x.to_f64(),
            y: self.y.to_f64(),
        }
    }

    pub fn norm(self) -> R {
        self.x.hypot(self.y)
    }

    pub fn norm_inf(self) -> R {
        self.x.abs().max_r(self.y.abs())
    }

    pub fn dot(self, o: Self) -> R {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> R {
        self.x * o.y - self.y * o.x
    }

    pub fn scale(self, s: R) -> Self {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Unsigned angle between two nonzero vectors, in (0, pi].
    pub fn angle_between(self, o: Self) -> R {
        self.cross(o).abs().atan2(self.dot(o))
    }
}

impl<R: Real> std::ops::Add for Vec2<R> {
    type Output = Vec2<R>;
    fn add(self, o: Vec2<R>) -> Vec2<R> {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<R: Real> std::ops::Sub for Vec2<R> {
    type Output = Vec2<R>;
    fn sub(self, o: Vec2<R>) -> Vec2<R> {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<R: Real> std::ops::Neg for Vec2<R> {
    type Output = Vec2<R>;
    fn neg(self) -> Vec2<R> {
        Vec2::new(-self.x, -self.y)
    }
}

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<R> {
    pub a: R,
    pub b: R,
    pub c: R,
    pub d: R,
}

impl<R: Real> Mat2<R> {
    pub fn new(a: R, b: R, c: R, d: R) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn identity() -> Self {
        Mat2::new(R::one(), R::zero(), R::zero(), R::one())
    }

    pub fn from_f64(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2::new(R::from_f64(a), R::from_f64(b), R::from_f64(c), R::from_f64(d))
    }

    pub fn det(self) -> R {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(self) -> R {
        self.a + self.d
    }

    pub fn mul_vec(self, v: Vec2<R>) -> Vec2<R> {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn mul_mat(self, o: Self) -> Self {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn inverse(self) -> Self {
        let det = self.det();
        Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    /// Solve `self * x = rhs`.
    pub fn solve(self, rhs: Vec2<R>) -> Vec2<R> {
        self.inverse().mul_vec(rhs)
    }

    /// Spectral (2-)norm via the closed-form singular values of a 2x2.
    pub fn norm2(self) -> R {
        let t = self.mul_mat(self.transpose());
        // eigenvalues of symmetric [[p, q], [q, r]]
        let p = t.a;
        let q = t.b;
        let r = t.d;
        let half = R::from_f64(0.5);
        let mean = (p + r) * half;
        let disc = ((p - r) * half * ((p - r) * half) + q * q).sqrt();
        (mean + disc).sqrt()
    }

    /// Real eigenvalues and unit eigenvectors, largest eigenvalue first.
    /// Returns `None` when the eigenvalues are complex.
    pub fn eigen_real(self) -> Option<[(R, Vec2<R>); 2]> {
        let half = R::from_f64(0.5);
        let tr = self.trace();
        let disc = tr * tr - R::from_f64(4.0) * self.det();
        if disc < R::zero() {
            return None;
        }
        let s = disc.sqrt();
        let l1 = (tr + s) * half;
        let l2 = (tr - s) * half;
        let ev = |l: R| -> Vec2<R> {
            // (A - l I) v = 0; pick the better-conditioned row
            let r1 = Vec2::new(self.a - l, self.b);
            let r2 = Vec2::new(self.c, self.d - l);
            let v = if r1.norm() > r2.norm() {
                Vec2::new(-r1.y, r1.x)
            } else {
                Vec2::new(-r2.y, r2.x)
            };
            let v = v.normalized();
            // deterministic sign: positive first component, tie broken by second
            if v.x < R::zero() || (v.x == R::zero() && v.y < R::zero()) {
                -v
            } else {
                v
            }
        };
        Some([(l1, ev(l1)), (l2, ev(l2))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_shear_free_saddle() {
        let m: Mat2<f64> = Mat2::new(0.0, 1.0, 2.0, 0.0);
        let [(l1, v1), (l2, v2)] = m.eigen_real().unwrap();
        assert!((l1 - 2f64.sqrt()).abs() < 1e-14);
        assert!((l2 + 2f64.sqrt()).abs() < 1e-14);
        assert!(m.mul_vec(v1).cross(v1).abs() < 1e-14);
        assert!(m.mul_vec(v2).cross(v2).abs() < 1e-14);
    }

    #[test]
    fn norm2_diag() {
        let m: Mat2<f64> = Mat2::new(2.0, 0.0, 0.0, 0.5);
        assert!((m.norm2() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn solve_round_trip() {
        let m: Mat2<f64> = Mat2::new(3.0, 1.0, -2.0, 4.0);
        let x = Vec2::new(0.7, -1.3);
        let b = m.mul_vec(x);
        let xs = m.solve(b);
        assert!((xs - x).norm() < 1e-14);
    }
}
