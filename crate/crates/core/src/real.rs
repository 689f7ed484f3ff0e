//! Scalar abstraction.
//!
//! All core numerics are written against [`Real`], a floating-point-like
//! scalar built on the `num-traits` ring/sign traits plus the elementary
//! functions the toolkit needs. `f64` is the default implementation;
//! [`X128`] is a software float with a 128-bit significand used when the
//! working quantities (splitting sizes, `lambda^{-2n}` scales) fall below
//! what doubles can resolve.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Neg;
use std::sync::OnceLock;

use num_traits::{NumAssign, Signed};

/// Floating-point scalar used by the core numerics.
pub trait Real:
    NumAssign + Signed + PartialOrd + Copy + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self {
        self.sin() / self.cos()
    }
    fn atan2(self, other: Self) -> Self;
    fn cosh(self) -> Self {
        let e = self.exp();
        (e + Self::one() / e) / Self::from_f64(2.0)
    }
    fn sinh(self) -> Self {
        let e = self.exp();
        (e - Self::one() / e) / Self::from_f64(2.0)
    }
    fn floor(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, e: Self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        (e * self.ln()).exp()
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn min_r(self, other: Self) -> Self {
        if self < other {
            self
        } else {
            other
        }
    }
    fn max_r(self, other: Self) -> Self {
        if self > other {
            self
        } else {
            other
        }
    }
    fn is_finite(self) -> bool;

    fn pi() -> Self;
    fn ln2() -> Self;
    /// Relative spacing of representable numbers near 1.
    fn epsilon() -> Self;
    /// Smallest positive value considered resolvable (underflow guard).
    fn tiny() -> Self;
    /// Significand width in bits.
    fn sig_bits() -> u32;
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn atan2(self, other: Self) -> Self {
        f64::atan2(self, other)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn floor(self) -> Self {
        f64::floor(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn hypot(self, other: Self) -> Self {
        f64::hypot(self, other)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn ln2() -> Self {
        std::f64::consts::LN_2
    }
    fn epsilon() -> Self {
        f64::EPSILON
    }
    fn tiny() -> Self {
        f64::MIN_POSITIVE
    }
    fn sig_bits() -> u32 {
        53
    }
}

/// Software binary float: sign, 128-bit normalized significand, and a
/// wide binary exponent. Value is `sign * m * 2^(e - 127)` with the top
/// significand bit always set for finite nonzero values. Arithmetic
/// truncates toward zero; each operation is accurate to within a few
/// units in the 128th bit, which is what the splitting measurements need
/// (estimates with margins, not correctly rounded results).
#[derive(Clone, Copy, Debug)]
pub struct X128 {
    neg: bool,
    kind: Kind,
    /// Normalized significand; bit 127 set when `kind == Finite`.
    m: u128,
    /// Value = m * 2^(e - 127).
    e: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Zero,
    Finite,
    Inf,
    Nan,
}

const TOP: u128 = 1u128 << 127;

impl X128 {
    pub const fn zero_const() -> Self {
        X128 {
            neg: false,
            kind: Kind::Zero,
            m: 0,
            e: 0,
        }
    }

    fn nan() -> Self {
        X128 {
            neg: false,
            kind: Kind::Nan,
            m: 0,
            e: 0,
        }
    }

    fn inf(neg: bool) -> Self {
        X128 {
            neg,
            kind: Kind::Inf,
            m: 0,
            e: 0,
        }
    }

    fn make(neg: bool, mut m: u128, mut e: i32) -> Self {
        if m == 0 {
            return Self::zero_const();
        }
        let lz = m.leading_zeros() as i32;
        if lz > 0 {
            m <<= lz;
            e -= lz;
        }
        if e > i32::MAX / 2 {
            return Self::inf(neg);
        }
        if e < i32::MIN / 2 {
            return Self::zero_const();
        }
        X128 {
            neg,
            kind: Kind::Finite,
            m,
            e,
        }
    }

    pub fn from_u128_shifted(m: u128, e: i32) -> Self {
        Self::make(false, m, e)
    }

    fn is_nan_k(&self) -> bool {
        self.kind == Kind::Nan
    }

    /// Magnitude comparison of finite values.
    fn cmp_mag(&self, other: &Self) -> Ordering {
        match self.e.cmp(&other.e) {
            Ordering::Equal => self.m.cmp(&other.m),
            o => o,
        }
    }

    fn add_mag(a: &Self, b: &Self) -> (u128, i32) {
        // |a| >= |b| assumed
        let d = (a.e - b.e) as u32;
        let bm = if d >= 128 { 0 } else { b.m >> d };
        let (sum, carry) = a.m.overflowing_add(bm);
        if carry {
            ((sum >> 1) | TOP, a.e + 1)
        } else {
            (sum, a.e)
        }
    }

    fn sub_mag(a: &Self, b: &Self) -> (u128, i32) {
        // |a| >= |b| assumed
        let d = (a.e - b.e) as u32;
        let bm = if d >= 128 { 0 } else { b.m >> d };
        (a.m - bm, a.e)
    }

    fn mul_sig(a: u128, b: u128) -> (u128, i32) {
        // Top 128 bits of the 256-bit product, plus exponent adjustment.
        let (ah, al) = ((a >> 64) as u64, a as u64);
        let (bh, bl) = ((b >> 64) as u64, b as u64);
        let hh = (ah as u128) * (bh as u128);
        let hl = (ah as u128) * (bl as u128);
        let lh = (al as u128) * (bh as u128);
        let ll = (al as u128) * (bl as u128);
        let mid = (ll >> 64)
            .wrapping_add(hl as u64 as u128)
            .wrapping_add(lh as u64 as u128);
        let hi = hh + (hl >> 64) + (lh >> 64) + (mid >> 64);
        // hi is in [2^126, 2^128)
        if hi & TOP != 0 {
            (hi, 1)
        } else {
            ((hi << 1) | ((mid >> 63) & 1), 0)
        }
    }

    fn recip(self) -> Self {
        match self.kind {
            Kind::Zero => Self::inf(self.neg),
            Kind::Inf => Self::zero_const(),
            Kind::Nan => Self::nan(),
            Kind::Finite => {
                // reciprocal of the mantissa part (value in [1, 2)), with the
                // binary exponent handled exactly
                let mant = X128 {
                    neg: false,
                    kind: Kind::Finite,
                    m: self.m,
                    e: 0,
                };
                let mut r = Self::from_f64(1.0 / mant.to_f64_lossy_mag());
                let two = Self::from_f64(2.0);
                for _ in 0..3 {
                    r = r * (two - mant * r);
                }
                r.neg = self.neg;
                r.ldexp(-self.e)
            }
        }
    }

    fn to_f64_lossy_mag(self) -> f64 {
        // Magnitude only; used as a Newton seed.
        let top = (self.m >> 74) as u64; // 54 bits
        ldexp_f64(top as f64, self.e - 127 + 74)
    }

    fn ldexp(mut self, k: i32) -> Self {
        if self.kind == Kind::Finite {
            let e = self.e as i64 + k as i64;
            if e > (i32::MAX / 2) as i64 {
                return Self::inf(self.neg);
            }
            if e < (i32::MIN / 2) as i64 {
                return Self::zero_const();
            }
            self.e = e as i32;
        }
        self
    }

    fn abs_v(mut self) -> Self {
        self.neg = false;
        self
    }
}

fn exp2i(k: i32) -> f64 {
    // 2^k as f64 without powi edge cases for large |k|
    if k >= -1022 && k <= 1023 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else if k > 1023 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `v * 2^k`, splitting the scaling so intermediate factors stay normal.
fn ldexp_f64(v: f64, k: i32) -> f64 {
    if (-1000..=1000).contains(&k) {
        v * exp2i(k)
    } else {
        let k1 = k / 2;
        let k2 = k - k1;
        if k1.abs() > 1020 || k2.abs() > 1020 {
            // doubly extreme: saturates to 0 or infinity anyway
            return v * exp2i(k1.clamp(-1022, 1023)) * exp2i(k2.clamp(-1022, 1023));
        }
        v * exp2i(k1) * exp2i(k2)
    }
}

impl PartialEq for X128 {
    fn eq(&self, other: &Self) -> bool {
        if self.is_nan_k() || other.is_nan_k() {
            return false;
        }
        if self.kind == Kind::Zero && other.kind == Kind::Zero {
            return true;
        }
        self.neg == other.neg && self.kind == other.kind && self.m == other.m && self.e == other.e
    }
}

impl PartialOrd for X128 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.is_nan_k() || other.is_nan_k() {
            return None;
        }
        let sa = if self.kind == Kind::Zero {
            0
        } else if self.neg {
            -1
        } else {
            1
        };
        let sb = if other.kind == Kind::Zero {
            0
        } else if other.neg {
            -1
        } else {
            1
        };
        if sa != sb {
            return Some(sa.cmp(&sb));
        }
        if sa == 0 {
            return Some(Ordering::Equal);
        }
        let mag = match (self.kind, other.kind) {
            (Kind::Inf, Kind::Inf) => Ordering::Equal,
            (Kind::Inf, _) => Ordering::Greater,
            (_, Kind::Inf) => Ordering::Less,
            _ => self.cmp_mag(other),
        };
        Some(if sa > 0 { mag } else { mag.reverse() })
    }
}

impl Neg for X128 {
    type Output = X128;
    fn neg(mut self) -> X128 {
        if self.kind != Kind::Zero {
            self.neg = !self.neg;
        }
        self
    }
}

impl std::ops::Add for X128 {
    type Output = X128;
    fn add(self, rhs: X128) -> X128 {
        match (self.kind, rhs.kind) {
            (Kind::Nan, _) | (_, Kind::Nan) => X128::nan(),
            (Kind::Inf, Kind::Inf) => {
                if self.neg == rhs.neg {
                    self
                } else {
                    X128::nan()
                }
            }
            (Kind::Inf, _) => self,
            (_, Kind::Inf) => rhs,
            (Kind::Zero, _) => rhs,
            (_, Kind::Zero) => self,
            (Kind::Finite, Kind::Finite) => {
                let (big, small) = if self.cmp_mag(&rhs) == Ordering::Less {
                    (&rhs, &self)
                } else {
                    (&self, &rhs)
                };
                if big.neg == small.neg {
                    let (m, e) = X128::add_mag(big, small);
                    X128::make(big.neg, m, e)
                } else {
                    let (m, e) = X128::sub_mag(big, small);
                    X128::make(big.neg, m, e)
                }
            }
        }
    }
}

impl std::ops::Sub for X128 {
    type Output = X128;
    fn sub(self, rhs: X128) -> X128 {
        self + (-rhs)
    }
}

impl std::ops::Mul for X128 {
    type Output = X128;
    fn mul(self, rhs: X128) -> X128 {
        match (self.kind, rhs.kind) {
            (Kind::Nan, _) | (_, Kind::Nan) => X128::nan(),
            (Kind::Zero, Kind::Inf) | (Kind::Inf, Kind::Zero) => X128::nan(),
            (Kind::Zero, _) | (_, Kind::Zero) => X128::zero_const(),
            (Kind::Inf, _) | (_, Kind::Inf) => X128::inf(self.neg != rhs.neg),
            (Kind::Finite, Kind::Finite) => {
                let (m, adj) = X128::mul_sig(self.m, rhs.m);
                let e = self.e as i64 + rhs.e as i64 + adj as i64;
                if e > (i32::MAX / 2) as i64 {
                    return X128::inf(self.neg != rhs.neg);
                }
                if e < (i32::MIN / 2) as i64 {
                    return X128::zero_const();
                }
                X128::make(self.neg != rhs.neg, m, e as i32)
            }
        }
    }
}

impl std::ops::Div for X128 {
    type Output = X128;
    fn div(self, rhs: X128) -> X128 {
        self * rhs.recip()
    }
}

impl std::ops::Rem for X128 {
    type Output = X128;
    fn rem(self, rhs: X128) -> X128 {
        let q = (self / rhs).trunc_v();
        self - q * rhs
    }
}

impl std::ops::AddAssign for X128 {
    fn add_assign(&mut self, rhs: X128) {
        *self = *self + rhs;
    }
}
impl std::ops::SubAssign for X128 {
    fn sub_assign(&mut self, rhs: X128) {
        *self = *self - rhs;
    }
}
impl std::ops::MulAssign for X128 {
    fn mul_assign(&mut self, rhs: X128) {
        *self = *self * rhs;
    }
}
impl std::ops::DivAssign for X128 {
    fn div_assign(&mut self, rhs: X128) {
        *self = *self / rhs;
    }
}
impl std::ops::RemAssign for X128 {
    fn rem_assign(&mut self, rhs: X128) {
        *self = *self % rhs;
    }
}

impl X128 {
    fn trunc_v(self) -> Self {
        if self.kind != Kind::Finite {
            return self;
        }
        // Integer part: bits of m above the binary point at position e.
        if self.e < 0 {
            return Self::zero_const();
        }
        if self.e >= 127 {
            return self;
        }
        let keep = (self.e + 1) as u32;
        let mask = if keep >= 128 {
            u128::MAX
        } else {
            !(u128::MAX >> keep)
        };
        Self::make(self.neg, self.m & mask, self.e)
    }

    fn floor_v(self) -> Self {
        let t = self.trunc_v();
        if self.neg && t != self {
            t - Self::from_f64(1.0)
        } else {
            t
        }
    }
}

impl fmt::Display for X128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.to_f64())
    }
}

impl num_traits::Zero for X128 {
    fn zero() -> Self {
        X128::zero_const()
    }
    fn is_zero(&self) -> bool {
        self.kind == Kind::Zero
    }
}

impl num_traits::One for X128 {
    fn one() -> Self {
        X128::from_f64(1.0)
    }
}

impl num_traits::Num for X128 {
    type FromStrRadixErr = std::num::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        assert_eq!(radix, 10, "only radix 10 supported");
        s.parse::<f64>().map(X128::from_f64)
    }
}

impl num_traits::Signed for X128 {
    fn abs(&self) -> Self {
        self.abs_v()
    }
    fn abs_sub(&self, other: &Self) -> Self {
        let d = *self - *other;
        if d.neg {
            X128::zero_const()
        } else {
            d
        }
    }
    fn signum(&self) -> Self {
        match self.kind {
            Kind::Zero => X128::zero_const(),
            Kind::Nan => X128::nan(),
            _ => {
                if self.neg {
                    -X128::from_f64(1.0)
                } else {
                    X128::from_f64(1.0)
                }
            }
        }
    }
    fn is_positive(&self) -> bool {
        self.kind != Kind::Zero && self.kind != Kind::Nan && !self.neg
    }
    fn is_negative(&self) -> bool {
        self.kind != Kind::Zero && self.kind != Kind::Nan && self.neg
    }
}

impl X128 {
    fn from_u64(n: u64) -> Self {
        if n == 0 {
            return X128::zero_const();
        }
        X128::make(false, (n as u128) << 64, 63)
    }
}

static PI_X: OnceLock<X128> = OnceLock::new();
static LN2_X: OnceLock<X128> = OnceLock::new();

fn compute_pi() -> X128 {
    // Machin: pi = 16 atan(1/5) - 4 atan(1/239), atan by Taylor series.
    fn atan_inv(n: u64) -> X128 {
        let one = X128::from_f64(1.0);
        let inv = one / X128::from_u64(n);
        let inv2 = inv * inv;
        let mut term = inv;
        let mut sum = X128::zero_const();
        let mut k: u64 = 0;
        loop {
            let d = X128::from_u64(2 * k + 1);
            let c = term / d;
            sum = if k % 2 == 0 { sum + c } else { sum - c };
            term = term * inv2;
            if term.kind == Kind::Zero || term.e < sum.e - 135 {
                break;
            }
            k += 1;
        }
        sum
    }
    let a = atan_inv(5).ldexp(4);
    let b = atan_inv(239).ldexp(2);
    a - b
}

fn compute_ln2() -> X128 {
    // ln 2 = sum_{k>=1} 1/(k 2^k)
    let mut sum = X128::zero_const();
    for k in 1..=140u64 {
        let t = (X128::from_f64(1.0) / X128::from_u64(k)).ldexp(-(k as i32));
        sum = sum + t;
    }
    sum
}

impl Real for X128 {
    fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            return X128::nan();
        }
        if x.is_infinite() {
            return X128::inf(x < 0.0);
        }
        if x == 0.0 {
            return X128::zero_const();
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            // subnormal
            (frac as u128, -1074 + 51)
        } else {
            ((frac | (1u64 << 52)) as u128, biased - 1023)
        };
        X128::make(neg, m << 75, e)
    }

    fn to_f64(self) -> f64 {
        match self.kind {
            Kind::Zero => 0.0,
            Kind::Nan => f64::NAN,
            Kind::Inf => {
                if self.neg {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Kind::Finite => {
                // round-to-nearest on the top 53 bits
                let top = (self.m >> 74) as u64; // 54 bits
                let rounded = (top >> 1) + (top & 1);
                let v = ldexp_f64(rounded as f64, self.e - 127 + 75);
                if self.neg {
                    -v
                } else {
                    v
                }
            }
        }
    }

    fn sqrt(self) -> Self {
        match self.kind {
            Kind::Zero => self,
            Kind::Nan => self,
            _ if self.neg => X128::nan(),
            Kind::Inf => self,
            Kind::Finite => {
                // sqrt(m * 2^(2k + r)) = sqrt(m * 2^r) * 2^k with r in {0, 1}
                let parity = self.e.rem_euclid(2);
                let k = (self.e - parity) / 2;
                let mant = X128 {
                    neg: false,
                    kind: Kind::Finite,
                    m: self.m,
                    e: parity,
                };
                let mut y = X128::from_f64(mant.to_f64_lossy_mag().sqrt());
                let half = X128::from_f64(0.5);
                for _ in 0..3 {
                    y = (y + mant / y) * half;
                }
                y.ldexp(k)
            }
        }
    }

    fn exp(self) -> Self {
        match self.kind {
            Kind::Zero => X128::from_f64(1.0),
            Kind::Nan => self,
            Kind::Inf => {
                if self.neg {
                    X128::zero_const()
                } else {
                    self
                }
            }
            Kind::Finite => {
                let xf = self.to_f64();
                if xf > 7.0e8 {
                    return X128::inf(false);
                }
                if xf < -7.0e8 {
                    return X128::zero_const();
                }
                let ln2 = X128::ln2();
                let kf = (xf / std::f64::consts::LN_2).round();
                let k = kf as i32;
                let r = self - X128::from_f64(kf) * ln2;
                // |r| <= ln2/2 + slack; Taylor sum
                let mut term = X128::from_f64(1.0);
                let mut sum = term;
                for n in 1..=40u64 {
                    term = term * r / X128::from_u64(n);
                    sum = sum + term;
                    if term.kind == Kind::Zero || term.e < sum.e - 135 {
                        break;
                    }
                }
                sum.ldexp(k)
            }
        }
    }

    fn ln(self) -> Self {
        match self.kind {
            Kind::Zero => X128::inf(true),
            Kind::Nan => self,
            _ if self.neg => X128::nan(),
            Kind::Inf => self,
            Kind::Finite => {
                // x = m * 2^e27, m in [1,2): ln x = e*ln2 + 2 atanh((m-1)/(m+1))
                let mut e = self.e;
                let mut y = X128 {
                    neg: false,
                    kind: Kind::Finite,
                    m: self.m,
                    e: 0,
                }; // in [1, 2)
                let sqrt2 = X128::from_f64(2.0).sqrt();
                if y > sqrt2 {
                    y = y.ldexp(-1);
                    e += 1;
                }
                let one = X128::from_f64(1.0);
                let z = (y - one) / (y + one);
                let z2 = z * z;
                let mut term = z;
                let mut sum = X128::zero_const();
                let mut k: u64 = 0;
                loop {
                    let c = term / X128::from_u64(2 * k + 1);
                    sum = sum + c;
                    term = term * z2;
                    if term.kind == Kind::Zero || (sum.kind == Kind::Finite && term.e < sum.e - 135) {
                        break;
                    }
                    k += 1;
                    if k > 200 {
                        break;
                    }
                }
                sum.ldexp(1) + X128::from_f64(e as f64) * X128::ln2()
            }
        }
    }

    fn sin(self) -> Self {
        sincos(self).0
    }

    fn cos(self) -> Self {
        sincos(self).1
    }

    fn atan2(self, other: Self) -> Self {
        let y = self;
        let x = other;
        if y.kind == Kind::Nan || x.kind == Kind::Nan {
            return X128::nan();
        }
        let mut th = X128::from_f64(y.to_f64().atan2(x.to_f64()));
        // Newton on f(th) = sin(th)*x - cos(th)*y
        for _ in 0..3 {
            let (s, c) = sincos(th);
            let f = s * x - c * y;
            let d = c * x + s * y;
            if d.kind == Kind::Zero {
                break;
            }
            th = th - f / d;
        }
        th
    }

    fn floor(self) -> Self {
        self.floor_v()
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return X128::from_f64(1.0);
        }
        let neg = n < 0;
        let mut k = n.unsigned_abs();
        let mut base = self;
        let mut acc = X128::from_f64(1.0);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        if neg {
            acc.recip()
        } else {
            acc
        }
    }

    fn is_finite(self) -> bool {
        matches!(self.kind, Kind::Zero | Kind::Finite)
    }

    fn pi() -> Self {
        *PI_X.get_or_init(compute_pi)
    }

    fn ln2() -> Self {
        *LN2_X.get_or_init(compute_ln2)
    }

    fn epsilon() -> Self {
        X128::from_f64(1.0).ldexp(-127)
    }

    fn tiny() -> Self {
        X128::from_f64(1.0).ldexp(-1_000_000)
    }

    fn sig_bits() -> u32 {
        128
    }
}

fn sincos(x: X128) -> (X128, X128) {
    match x.kind {
        Kind::Zero => (X128::zero_const(), X128::from_f64(1.0)),
        Kind::Nan | Kind::Inf => (X128::nan(), X128::nan()),
        Kind::Finite => {
            let half_pi = X128::pi().ldexp(-1);
            let qf = (x.to_f64() / (std::f64::consts::PI / 2.0)).round();
            let q = qf as i64;
            let r = x - X128::from_f64(qf) * half_pi;
            // Taylor on |r| <= pi/4 + slack
            let r2 = r * r;
            let mut s = r;
            let mut term = r;
            let mut n: u64 = 1;
            loop {
                term = term * r2 / X128::from_u64((n + 1) * (n + 2));
                s = if (n / 2) % 2 == 0 { s - term } else { s + term };
                if term.kind == Kind::Zero || (s.kind == Kind::Finite && term.e < s.e - 135) {
                    break;
                }
                n += 2;
                if n > 80 {
                    break;
                }
            }
            let mut c = X128::from_f64(1.0);
            let mut termc = X128::from_f64(1.0);
            let mut m: u64 = 0;
            loop {
                termc = termc * r2 / X128::from_u64((m + 1) * (m + 2));
                c = if (m / 2) % 2 == 0 { c - termc } else { c + termc };
                if termc.kind == Kind::Zero || (c.kind == Kind::Finite && termc.e < c.e - 135) {
                    break;
                }
                m += 2;
                if m > 80 {
                    break;
                }
            }
            match q.rem_euclid(4) {
                0 => (s, c),
                1 => (c, -s),
                2 => (-s, -c),
                _ => (-c, s),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn close(a: X128, b: X128, rel: f64) -> bool {
        let d = (a - b).abs_v();
        let s = a.abs_v().max_r(b.abs_v());
        if s.is_zero() {
            return d.is_zero();
        }
        (d / s).to_f64() < rel
    }

    #[test]
    fn f64_round_trip() {
        for &v in &[0.0, 1.0, -1.0, 0.5, 3.141592653589793, 1e-300, -2.5e120, 123456789.123] {
            assert_eq!(X128::from_f64(v).to_f64(), v);
        }
    }

    #[test]
    fn arithmetic_matches_f64_at_double_precision() {
        let cases = [(1.25, 3.5), (1e-8, 7.0), (-4.0, 0.3), (2.0, -0.125)];
        for &(a, b) in &cases {
            let (xa, xb) = (X128::from_f64(a), X128::from_f64(b));
            assert_eq!((xa + xb).to_f64(), a + b);
            assert_eq!((xa - xb).to_f64(), a - b);
            assert_eq!((xa * xb).to_f64(), a * b);
            assert!(((xa / xb).to_f64() - a / b).abs() <= (a / b).abs() * 1e-15);
        }
    }

    #[test]
    fn pi_and_ln2_digits() {
        // reference values to ~36 decimal digits
        let pi = X128::pi();
        let pi_lo = X128::from_f64(3.14159265358979323846264338327950288418e0);
        assert!(close(pi, pi_lo, 1e-16));
        // pi - 3.141592653589793 (f64) = 1.2246467991473532e-16-ish residual check
        let resid = (pi - X128::from_f64(3.141592653589793)).to_f64();
        assert!((resid - 1.2246467991473532e-16).abs() < 1e-26, "resid={resid:e}");
        let ln2 = X128::ln2();
        let resid2 = (ln2 - X128::from_f64(0.6931471805599453)).to_f64();
        assert!((resid2 - 2.3190468138462996e-17).abs() < 1e-27, "resid2={resid2:e}");
    }

    #[test]
    fn identities_at_extended_precision() {
        let vals = [0.3, 1.7, 12.0, 1e-3, 42.42];
        for &v in &vals {
            let x = X128::from_f64(v);
            assert!(close(x.ln().exp(), x, 1e-36), "exp(ln {v})");
            assert!(close(x.sqrt() * x.sqrt(), x, 1e-36), "sqrt {v}");
            let (s, c) = (x.sin(), x.cos());
            assert!(close(s * s + c * c, X128::from_f64(1.0), 1e-36), "sincos {v}");
            let th = s.atan2(c);
            let wrapped = X128::from_f64(v)
                - X128::pi().ldexp(1) * X128::from_f64(((v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).floor());
            assert!(close(th, wrapped, 1e-30), "atan2 {v}: {th} vs {wrapped}");
        }
    }

    #[test]
    fn exp_small_scales() {
        // e^{-2 pi^2 / h} at h = 0.4 is ~ 3e-22; check against ln round trip
        let h = X128::from_f64(0.4);
        let arg = -(X128::pi() * X128::pi()).ldexp(1) / h;
        let v = arg.exp();
        assert!(close(v.ln(), arg, 1e-33));
        assert!(v.to_f64() > 0.0);
    }

    #[test]
    fn floor_and_powi() {
        assert_eq!(X128::from_f64(2.7).floor().to_f64(), 2.0);
        assert_eq!(X128::from_f64(-2.3).floor().to_f64(), -3.0);
        assert_eq!(X128::from_f64(5.0).floor().to_f64(), 5.0);
        assert!(close(
            X128::from_f64(3.0).powi(7),
            X128::from_f64(2187.0),
            1e-37
        ));
        assert!(close(
            X128::from_f64(2.0).powi(-3),
            X128::from_f64(0.125),
            1e-37
        ));
    }

    #[test]
    fn comparisons() {
        let a = X128::from_f64(1.5);
        let b = X128::from_f64(-2.5);
        assert!(b < a);
        assert!(a > X128::zero_const());
        assert!(b < X128::zero_const());
        assert_eq!(a.max_r(b), a);
        assert_eq!(a.min_r(b), b);
    }

    #[test]
    fn cancellation_keeps_extended_bits() {
        // (1 + 2^-100) - 1 = 2^-100 exactly representable
        let one = X128::from_f64(1.0);
        let tiny = one.ldexp(-100);
        let s = (one + tiny) - one;
        assert_eq!(s.partial_cmp(&tiny), Some(Ordering::Equal));
    }
}
