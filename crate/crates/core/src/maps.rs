//! The planar map families: the standard map, the area-preserving Henon
//! family, the quadratic family, the affine rescaling between them, the
//! rescaled near-identity family, and the splitting-size function.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::jet::{Jet1, MapD2, Sym2};
use crate::real::Real;
use crate::vec2::{Mat2, Vec2};

/// A planar map with enough structure for manifold computations:
/// evaluation, Jacobian, and evaluation on one-variable jets.
pub trait PlanarMap<R: Real>: Sync {
    fn apply(&self, p: Vec2<R>) -> Vec2<R>;
    fn jacobian(&self, p: Vec2<R>) -> Mat2<R>;
    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>);
}

/// A planar map with a closed-form inverse.
pub trait InvertibleMap<R: Real>: PlanarMap<R> {
    fn apply_inv(&self, p: Vec2<R>) -> Vec2<R>;
}

/// An invertible map whose inverse can also be evaluated on jets.
pub trait JetInvertibleMap<R: Real>: InvertibleMap<R> {
    fn apply_inv_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>);
}

/// View of the inverse of an invertible map as a map in its own right.
pub struct Inv<'a, M>(pub &'a M);

impl<'a, R: Real, M: JetInvertibleMap<R>> PlanarMap<R> for Inv<'a, M> {
    fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        self.0.apply_inv(p)
    }
    fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        self.0.jacobian(self.0.apply_inv(p)).inverse()
    }
    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        self.0.apply_inv_jet(x, y)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StandardMapParams {
    pub k: f64,
}

/// The standard family on the torus (and its lift to the plane).
#[derive(Clone, Copy, Debug)]
pub struct StandardMap<R> {
    pub k: R,
}

impl<R: Real> StandardMap<R> {
    pub fn new(k: R) -> Self {
        StandardMap { k }
    }

    fn kick(&self, x: R) -> R {
        let two_pi = R::pi() * R::from_f64(2.0);
        self.k * (two_pi * x).sin()
    }

    /// One step on the torus, reduced exactly into `[0,1)^2` via floor.
    pub fn apply_torus(&self, p: Vec2<R>) -> Vec2<R> {
        let q = self.apply(p);
        Vec2::new(q.x - q.x.floor(), q.y - q.y.floor())
    }

    /// Exact inverse of the lift.
    pub fn apply_inv_lift(&self, p: Vec2<R>) -> Vec2<R> {
        let x = p.x - p.y;
        let y = p.y - self.kick(x);
        Vec2::new(x, y)
    }
}

impl<R: Real> PlanarMap<R> for StandardMap<R> {
    /// The lift: `(x, y) -> (x + y + k sin 2 pi x, y + k sin 2 pi x)`.
    fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        let s = self.kick(p.x);
        Vec2::new(p.x + p.y + s, p.y + s)
    }

    fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        let two_pi = R::pi() * R::from_f64(2.0);
        let c = two_pi * self.k * (two_pi * p.x).cos();
        Mat2::new(R::one() + c, R::one(), c, R::one())
    }

    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let two_pi = R::pi() * R::from_f64(2.0);
        let (s, _c) = x.scale(two_pi).sin_cos();
        let kick = s.scale(self.k);
        let ny = y.add(&kick);
        (x.add(&ny), ny)
    }
}

impl<R: Real> InvertibleMap<R> for StandardMap<R> {
    fn apply_inv(&self, p: Vec2<R>) -> Vec2<R> {
        self.apply_inv_lift(p)
    }
}

impl<R: Real> JetInvertibleMap<R> for StandardMap<R> {
    fn apply_inv_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let two_pi = R::pi() * R::from_f64(2.0);
        let nx = x.sub(y);
        let (s, _c) = nx.scale(two_pi).sin_cos();
        let ny = y.sub(&s.scale(self.k));
        (nx, ny)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HenonParams {
    pub a: f64,
}

/// Area-preserving Henon family `(x, y) -> (y, -x + a - y^2)`.
#[derive(Clone, Copy, Debug)]
pub struct HenonMap<R> {
    pub a: R,
}

impl<R: Real> HenonMap<R> {
    pub fn new(a: R) -> Self {
        HenonMap { a }
    }
}

impl<R: Real> PlanarMap<R> for HenonMap<R> {
    fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        Vec2::new(p.y, -p.x + self.a - p.y * p.y)
    }

    fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        Mat2::new(
            R::zero(),
            R::one(),
            -R::one(),
            -(p.y + p.y),
        )
    }

    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let ny = y.square().sub(&x.scale(-R::one())).scale(-R::one()).add_const(self.a);
        (y.clone(), ny)
    }
}

impl<R: Real> InvertibleMap<R> for HenonMap<R> {
    /// `(x, y) -> (a - x^2 - y, x)`.
    fn apply_inv(&self, p: Vec2<R>) -> Vec2<R> {
        Vec2::new(self.a - p.x * p.x - p.y, p.x)
    }
}

impl<R: Real> JetInvertibleMap<R> for HenonMap<R> {
    fn apply_inv_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let nx = x.square().add(y).scale(-R::one()).add_const(self.a);
        (nx, x.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointClass {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

pub fn classify_trace(tr: f64) -> FixedPointClass {
    if tr.abs() < 2.0 {
        FixedPointClass::Elliptic
    } else if tr.abs() > 2.0 {
        FixedPointClass::Hyperbolic
    } else {
        FixedPointClass::Parabolic
    }
}

/// Fixed points of the Henon map: solutions of `x = y`, `x^2 + 2x - a = 0`,
/// classified by the trace of the derivative (`-2y`). Empty for `a < -1`.
pub fn henon_fixed_points(a: f64) -> Vec<(Vec2<f64>, f64, FixedPointClass)> {
    let disc = 4.0 + 4.0 * a;
    if disc < 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    if disc == 0.0 {
        let x = -1.0;
        out.push((Vec2::new(x, x), -2.0 * x, classify_trace(-2.0 * x)));
    } else {
        for x in [-1.0 + disc.sqrt() / 2.0, -1.0 - disc.sqrt() / 2.0] {
            out.push((Vec2::new(x, x), -2.0 * x, classify_trace(-2.0 * x)));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub eps: f64,
}

/// Quadratic family `F_eps: (x, y) -> (x + y - x^2 + eps, y - x^2 + eps)`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticFamily<R> {
    pub eps: R,
}

impl<R: Real> QuadraticFamily<R> {
    pub fn new(eps: R) -> Self {
        QuadraticFamily { eps }
    }
}

impl<R: Real> PlanarMap<R> for QuadraticFamily<R> {
    fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        let w = p.y - p.x * p.x + self.eps;
        Vec2::new(p.x + w, w)
    }

    fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        let two_x = p.x + p.x;
        Mat2::new(R::one() - two_x, R::one(), -two_x, R::one())
    }

    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let w = y.sub(&x.square()).add_const(self.eps);
        (x.add(&w), w)
    }
}

impl<R: Real> InvertibleMap<R> for QuadraticFamily<R> {
    fn apply_inv(&self, p: Vec2<R>) -> Vec2<R> {
        let x = p.x - p.y;
        Vec2::new(x, p.y + x * x - self.eps)
    }
}

/// Affine change `Upsilon_delta(u, v) = (-delta^2 + delta^2 u, delta^3 v)`.
#[derive(Clone, Copy, Debug)]
pub struct Upsilon<R> {
    pub delta: R,
}

impl<R: Real> Upsilon<R> {
    pub fn new(delta: R) -> Result<Self> {
        if delta <= R::zero() {
            return Err(CoreError::Domain("Upsilon needs delta > 0".to_string()));
        }
        Ok(Upsilon { delta })
    }

    pub fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        let d2 = self.delta * self.delta;
        let d3 = d2 * self.delta;
        Vec2::new(d2 * (p.x - R::one()), d3 * p.y)
    }

    pub fn apply_inv(&self, p: Vec2<R>) -> Vec2<R> {
        let d2 = self.delta * self.delta;
        let d3 = d2 * self.delta;
        Vec2::new(p.x / d2 + R::one(), p.y / d3)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RescaledParams {
    pub h: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl RescaledParams {
    pub fn from_h(h: f64) -> Result<Self> {
        let delta = delta_of_h(h)?;
        Ok(RescaledParams {
            h,
            delta,
            lambda: h.exp(),
        })
    }
}

/// The rescaled near-identity family
/// `(u, v) -> (u, v) + delta (v, 2u - u^2) + delta^2 (2u - u^2, 0)`,
/// parameterized by `h = log lambda_1` through `delta(h)`.
#[derive(Clone, Copy, Debug)]
pub struct Rescaled<R> {
    pub h: R,
    pub delta: R,
    pub lambda: R,
}

impl<R: Real> Rescaled<R> {
    pub fn from_h(h: R) -> Result<Self> {
        let delta = delta_of_h_r(h)?;
        Ok(Rescaled {
            h,
            delta,
            lambda: h.exp(),
        })
    }

    fn w(&self, u: R) -> R {
        (R::from_f64(2.0) - u) * u
    }
}

impl<R: Real> PlanarMap<R> for Rescaled<R> {
    fn apply(&self, p: Vec2<R>) -> Vec2<R> {
        let w = self.w(p.x);
        let d = self.delta;
        Vec2::new(p.x + d * p.y + d * d * w, p.y + d * w)
    }

    fn jacobian(&self, p: Vec2<R>) -> Mat2<R> {
        let d = self.delta;
        let wp = R::from_f64(2.0) - (p.x + p.x);
        Mat2::new(R::one() + d * d * wp, d, d * wp, R::one())
    }

    fn apply_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let d = self.delta;
        let w = x.scale(R::from_f64(2.0)).sub(&x.square());
        let nx = x.add(&y.scale(d)).add(&w.scale(d * d));
        let ny = y.add(&w.scale(d));
        (nx, ny)
    }
}

impl<R: Real> InvertibleMap<R> for Rescaled<R> {
    /// Exact inverse: `u = u' - delta v'`, then `v = v' - delta w(u)`.
    fn apply_inv(&self, p: Vec2<R>) -> Vec2<R> {
        let u = p.x - self.delta * p.y;
        let v = p.y - self.delta * self.w(u);
        Vec2::new(u, v)
    }
}

impl<R: Real> JetInvertibleMap<R> for Rescaled<R> {
    fn apply_inv_jet(&self, x: &Jet1<R>, y: &Jet1<R>) -> (Jet1<R>, Jet1<R>) {
        let u = x.sub(&y.scale(self.delta));
        let w = u.scale(R::from_f64(2.0)).sub(&u.square());
        let v = y.sub(&w.scale(self.delta));
        (u, v)
    }
}

impl<R: Real> Rescaled<R> {
    /// Value, Jacobian, and Hessians (the only nonlinearity is quadratic).
    pub fn d2(&self, p: Vec2<R>) -> MapD2<R> {
        let d = self.delta;
        let m2 = R::from_f64(-2.0);
        MapD2 {
            value: self.apply(p),
            jac: self.jacobian(p),
            hess_x: Sym2 {
                xx: m2 * d * d,
                xy: R::zero(),
                yy: R::zero(),
            },
            hess_y: Sym2 {
                xx: m2 * d,
                xy: R::zero(),
                yy: R::zero(),
            },
        }
    }

    /// Hessians of the inverse: `u = x - d y` (linear), `v = y - d w(x - d y)`.
    pub fn d2_inv(&self, p: Vec2<R>) -> MapD2<R> {
        let d = self.delta;
        let q = self.apply_inv(p);
        let wp = R::from_f64(2.0) - (q.x + q.x);
        let jac = Mat2::new(
            R::one(),
            -d,
            -d * wp,
            R::one() + d * d * wp,
        );
        let two_d = d + d;
        MapD2 {
            value: q,
            jac,
            hess_x: Sym2::zero(),
            hess_y: Sym2 {
                xx: two_d,
                xy: -two_d * d,
                yy: two_d * d * d,
            },
        }
    }
}

/// `lambda_1(delta) = 1 + delta^2 + sqrt(delta^4 + 2 delta^2)`.
pub fn lambda_of_delta(delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(CoreError::Domain("lambda_of_delta needs delta > 0".to_string()));
    }
    let d2 = delta * delta;
    Ok(1.0 + d2 + (d2 * d2 + 2.0 * d2).sqrt())
}

fn lambda_of_delta_r<R: Real>(delta: R) -> R {
    let d2 = delta * delta;
    R::one() + d2 + (d2 * d2 + d2 + d2).sqrt()
}

/// Invert `h = log lambda_1(delta)` by bisection on `delta in (0, 10]`
/// (`lambda_1` is strictly increasing in `delta`).
pub fn delta_of_h(h: f64) -> Result<f64> {
    delta_of_h_r(h)
}

pub fn delta_of_h_r<R: Real>(h: R) -> Result<R> {
    if h <= R::zero() {
        return Err(CoreError::Domain("delta_of_h needs h > 0".to_string()));
    }
    let target = h.exp();
    let mut lo = R::from_f64(0.0);
    let mut hi = R::from_f64(10.0);
    if lambda_of_delta_r(hi) < target {
        return Err(CoreError::Domain(format!(
            "h={} outside the invertible range of the rescaling",
            h.to_f64()
        )));
    }
    let half = R::from_f64(0.5);
    for _ in 0..(R::sig_bits() as usize + 20) {
        let mid = (lo + hi) * half;
        if lambda_of_delta_r(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * half)
}

/// Splitting-size function value; the exponentially small factor can
/// underflow the working precision, in which case only the logarithm is
/// meaningful and `value` is `None`.
#[derive(Clone, Copy, Debug)]
pub struct MuValue<R> {
    pub value: Option<R>,
    pub ln_value: R,
}

/// `mu(h) = 16 sqrt(2) pi |theta1| h^{-7} exp(-2 pi^2 / h)`.
pub fn mu<R: Real>(h: R, theta1: R) -> Result<MuValue<R>> {
    if h <= R::zero() || theta1 <= R::zero() {
        return Err(CoreError::Domain(
            "mu needs h > 0 and theta1 > 0".to_string(),
        ));
    }
    let pref = R::from_f64(16.0) * R::from_f64(2.0).sqrt() * R::pi() * theta1;
    let ln_value = pref.ln() - R::from_f64(7.0) * h.ln() - R::from_f64(2.0) * R::pi() * R::pi() / h;
    let value = pref * h.powi(-7) * (-(R::from_f64(2.0) * R::pi() * R::pi()) / h).exp();
    if value <= R::tiny() {
        Ok(MuValue {
            value: None,
            ln_value,
        })
    } else {
        Ok(MuValue {
            value: Some(value),
            ln_value,
        })
    }
}

/// Sample of a derivative matrix at a point, as reported by the map ops.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JacobianSample {
    pub point: (f64, f64),
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl JacobianSample {
    pub fn from_mat(point: Vec2<f64>, m: Mat2<f64>) -> Self {
        JacobianSample {
            point: (point.x, point.y),
            a: m.a,
            b: m.b,
            c: m.c,
            d: m.d,
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }
}

/// Eigendata of a saddle fixed point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleData {
    pub location: (f64, f64),
    pub lambda: f64,
    pub h: f64,
    pub unstable: (f64, f64),
    pub stable: (f64, f64),
}

/// Extract saddle eigendata at a fixed point of `map`; the point must be
/// fixed to `tol` and hyperbolic (`|trace| > 2` for the area-preserving
/// maps used here).
pub fn saddle_data<M: PlanarMap<f64>>(map: &M, point: Vec2<f64>, tol: f64) -> Result<SaddleData> {
    let image = map.apply(point);
    if (image - point).norm() > tol {
        return Err(CoreError::InvalidInput(format!(
            "point ({}, {}) is not fixed (moved by {:e})",
            point.x,
            point.y,
            (image - point).norm()
        )));
    }
    let j = map.jacobian(point);
    if j.trace().abs() <= 2.0 {
        return Err(CoreError::InvalidInput(format!(
            "fixed point is not a saddle: |trace| = {} <= 2",
            j.trace().abs()
        )));
    }
    let eig = j
        .eigen_real()
        .ok_or_else(|| CoreError::InvalidInput("complex eigenvalues at saddle".to_string()))?;
    let (l1, v1) = eig[0];
    let (l2, v2) = eig[1];
    let (lu, vu, vs) = if l1.abs() > l2.abs() {
        (l1, v1, v2)
    } else {
        (l2, v2, v1)
    };
    Ok(SaddleData {
        location: (point.x, point.y),
        lambda: lu,
        h: lu.abs().ln(),
        unstable: (vu.x, vu.y),
        stable: (vs.x, vs.y),
    })
}
