//! Double-double arithmetic (an unevaluated sum `hi + lo` of two `f64`, about 32 significant
//! digits) and a forward pass that uses it.
//!
//! Only used as a reference: central differences of an `f64` loss lose about
//! `ulp(L) / step` to rounding, which swamps gradient components below `1e-5` or so.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::network::{Activation, Network};
use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN_2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// Splits `e^x = 2^k (1 + m)` with `|m|` below about `0.42`.
    fn reduce_exp(self) -> (i32, Dd) {
        let k = (self.hi / LN_2.hi).round();
        // |r| <= ln2/2, then r / 2^10 so the series converges fast.
        const SQUARINGS: i32 = 10;
        let r = (self - LN_2 * k).ldexp(-SQUARINGS);
        let mut term = r;
        let mut sum = r;
        for n in 2..30 {
            term = term * r / n as f64;
            sum = sum + term;
            if term.hi.abs() < 1e-36 * sum.hi.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        // expm1(2y) = expm1(y) * (expm1(y) + 2)
        for _ in 0..SQUARINGS {
            sum = sum * (sum + 2.0);
        }
        (k as i32, sum)
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.hi > 709.0 || !self.hi.is_finite() {
            return Dd::from(self.hi.exp());
        }
        let (k, m) = self.reduce_exp();
        // two steps keep the scaling exact when 2^k alone would underflow
        (m + 1.0).ldexp(k / 2).ldexp(k - k / 2)
    }

    /// `e^x − 1`, accurate for small `|x|` as well.
    pub fn exp_m1(self) -> Self {
        if self.hi < -745.0 || self.hi > 709.0 || !self.hi.is_finite() {
            return Dd::from(self.hi.exp_m1());
        }
        match self.reduce_exp() {
            (0, m) => m,
            _ => self.exp() - Dd::ONE,
        }
    }

    /// Natural logarithm by Newton steps on `exp`.
    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::from(f64::NAN);
        }
        let mut x = Dd::from(self.hi.ln());
        for _ in 0..2 {
            // x + a·e^(−x) − 1; absolute error near 1e-32, so relative error grows as a → 1
            x = x + (self * (-x).exp() - Dd::ONE);
        }
        x
    }

    pub fn tanh(self) -> Self {
        let a = self.abs();
        if a.hi > 40.0 {
            return Dd::from(self.hi.signum());
        }
        let e = (a * 2.0).exp_m1();
        let t = e / (e + 2.0);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        self + Dd::from(b)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::from(b)
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

/// Logits of `net` on `inputs`, computed in double-double.
pub fn logits_dd(net: &Network, inputs: &Matrix) -> Vec<Vec<Dd>> {
    inputs
        .iter_rows()
        .map(|x| {
            let mut h: Vec<Dd> = x.iter().map(|&v| Dd::from(v)).collect();
            for layer in net.layers() {
                h = (0..layer.out_dim())
                    .map(|o| {
                        let z: Dd = layer
                            .weights
                            .row(o)
                            .iter()
                            .zip(&h)
                            .map(|(&w, &a)| a * w)
                            .sum::<Dd>()
                            + layer.bias[o];
                        match layer.activation {
                            Activation::Tanh => z.tanh(),
                            Activation::Identity => z,
                        }
                    })
                    .collect();
            }
            h
        })
        .collect()
}

/// `log softmax(z / T)` of one row in double-double.
pub fn log_softmax_dd(z: &[Dd], temperature: f64) -> Vec<Dd> {
    let scaled: Vec<Dd> = z.iter().map(|&v| v / temperature).collect();
    let m = scaled
        .iter()
        .copied()
        .fold(Dd::from(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    let lse = scaled.iter().map(|&v| (v - m).exp()).sum::<Dd>().ln() + m;
    scaled.into_iter().map(|v| v - lse).collect()
}
