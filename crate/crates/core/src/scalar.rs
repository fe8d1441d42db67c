//! Scalar abstraction shared by residual and objective evaluation.
//!
//! Residuals are written once, generic over [`Real`], and evaluated either on
//! plain `f64` or on a [`DirJet`], a one-sided second-order Taylor jet along a
//! fixed direction. Jets give directional derivatives of the nonsmooth pieces
//! (`|·|`, `[·]₊`, `min`, `√`) without finite differences.

use std::ops::{Add, Mul, Neg, Sub};

use crate::residuals::min_dirderiv;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + std::fmt::Debug
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn abs_val(self) -> Self;
    /// `max(self, 0)`.
    fn pos_part(self) -> Self;
    fn min_of(self, other: Self) -> Self;
    fn root(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn abs_val(self) -> Self {
        self.abs()
    }
    fn pos_part(self) -> Self {
        self.max(0.0)
    }
    fn min_of(self, other: Self) -> Self {
        self.min(other)
    }
    fn root(self) -> Self {
        self.sqrt()
    }
}

/// `g(t) = v + d1·t + d2·t²/2 + o(t²)` as `t ↓ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirJet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl DirJet {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        DirJet { v, d1, d2 }
    }

    /// A coordinate seeded with slope `d1`.
    pub fn seed(v: f64, d1: f64) -> Self {
        DirJet { v, d1, d2: 0.0 }
    }

    /// Sign of the germ of `g` at `t = 0⁺`.
    fn germ_sign(self) -> f64 {
        for c in [self.v, self.d1, self.d2] {
            if c > 0.0 {
                return 1.0;
            }
            if c < 0.0 {
                return -1.0;
            }
        }
        0.0
    }
}

impl Add for DirJet {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        DirJet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for DirJet {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        DirJet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for DirJet {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        DirJet::new(
            self.v * o.v,
            self.v * o.d1 + self.d1 * o.v,
            self.v * o.d2 + 2.0 * self.d1 * o.d1 + self.d2 * o.v,
        )
    }
}

impl Neg for DirJet {
    type Output = Self;
    fn neg(self) -> Self {
        DirJet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Real for DirJet {
    fn cst(v: f64) -> Self {
        DirJet::new(v, 0.0, 0.0)
    }

    fn value(self) -> f64 {
        self.v
    }

    fn abs_val(self) -> Self {
        if self.germ_sign() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn pos_part(self) -> Self {
        if self.germ_sign() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    fn min_of(self, other: Self) -> Self {
        if self.v < other.v {
            return self;
        }
        if self.v > other.v {
            return other;
        }
        let d1 = min_dirderiv(self.v, other.v, self.d1, other.d1);
        let d2 = if self.d1 < other.d1 {
            self.d2
        } else if self.d1 > other.d1 {
            other.d2
        } else {
            self.d2.min(other.d2)
        };
        DirJet::new(self.v, d1, d2)
    }

    fn root(self) -> Self {
        if self.v > 0.0 {
            let s = self.v.sqrt();
            let d1 = self.d1 / (2.0 * s);
            let d2 = self.d2 / (2.0 * s) - self.d1 * self.d1 / (4.0 * s * self.v);
            return DirJet::new(s, d1, d2);
        }
        if self.v < 0.0 {
            return DirJet::new(f64::NAN, f64::NAN, f64::NAN);
        }
        // v = 0: g ≈ d1·t or d2·t²/2. Second coefficient of √g is not
        // determined by a second-order jet; 0 is a placeholder.
        if self.d1 > 0.0 {
            DirJet::new(0.0, f64::INFINITY, 0.0)
        } else if self.d1 == 0.0 && self.d2 >= 0.0 {
            DirJet::new(0.0, (self.d2 / 2.0).sqrt(), 0.0)
        } else {
            DirJet::new(f64::NAN, f64::NAN, f64::NAN)
        }
    }
}

/// One-sided derivative at `t = 0⁺` of `r(t)^gamma`, where `r ≥ 0` is given
/// as a jet. Returns `+inf` when the power kink makes the slope unbounded.
pub fn power_slope(r: DirJet, gamma: f64) -> f64 {
    if r.v > 0.0 {
        return gamma * r.v.powf(gamma - 1.0) * r.d1;
    }
    if r.d1 > 0.0 {
        return if gamma < 1.0 { f64::INFINITY } else { r.d1 };
    }
    if r.d1 < 0.0 {
        // r would go negative; outside the residual's domain.
        return f64::NAN;
    }
    // r ≈ (d2/2)·t², so r^γ ≈ (d2/2)^γ · t^{2γ}.
    let c = r.d2 / 2.0;
    if c <= 0.0 {
        return 0.0;
    }
    if (gamma - 0.5).abs() < 1e-15 {
        c.sqrt()
    } else if gamma > 0.5 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Secant check of a jet expression against its f64 evaluation.
    fn secant(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        (f(t) - f(0.0)) / t
    }

    #[test]
    fn product_jet_matches_expansion() {
        let a = DirJet::seed(1.5, 2.0);
        let b = DirJet::seed(-0.5, 3.0);
        let p = a * b;
        let f = |t: f64| (1.5 + 2.0 * t) * (-0.5 + 3.0 * t);
        assert!((p.v - f(0.0)).abs() < 1e-15);
        assert!((p.d1 - secant(f, 1e-7)).abs() < 1e-5);
        assert_eq!(p.d2, 12.0);
    }

    #[test]
    fn abs_and_pos_at_zero_follow_direction() {
        let g = DirJet::seed(0.0, -3.0);
        assert_eq!(g.abs_val(), DirJet::new(0.0, 3.0, 0.0));
        assert_eq!(g.pos_part(), DirJet::zero());
        let sq = DirJet::seed(0.0, 1.0) * DirJet::seed(0.0, 1.0);
        assert_eq!((-sq).abs_val(), sq);
    }

    #[test]
    fn root_of_quadratic_germ_is_linear() {
        let y = DirJet::seed(0.0, 1.0);
        let r = (y * y).root();
        assert_eq!(r.v, 0.0);
        assert!((r.d1 - 1.0).abs() < 1e-15);
        assert_eq!(DirJet::seed(0.0, 1.0).root().d1, f64::INFINITY);
    }

    #[test]
    fn power_slope_cases() {
        let lin = DirJet::seed(0.0, 2.0);
        assert_eq!(power_slope(lin, 1.0), 2.0);
        assert_eq!(power_slope(lin, 0.5), f64::INFINITY);
        let quad = DirJet::new(0.0, 0.0, 2.0);
        assert_eq!(power_slope(quad, 0.5), 1.0);
        assert_eq!(power_slope(quad, 1.0), 0.0);
        let smooth = DirJet::seed(4.0, 1.0);
        assert!((power_slope(smooth, 0.5) - 0.25).abs() < 1e-15);
    }
}
