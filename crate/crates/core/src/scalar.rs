//! Scalar abstractions shared by the metric catalog and the verification layers.
//!
//! [`Smooth`] is the minimal arithmetic needed to evaluate the closed-form metric
//! catalog; it is implemented for `f32`, `f64` and for the truncated Taylor
//! polynomial [`Jet2`], which lets the same closed forms produce exact partial
//! derivatives up to fourth order in two variables.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Arithmetic closed under the elementary functions used by the metric catalog.
pub trait Smooth:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    /// Leading (point) value, used for domain checks.
    fn lead(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
}

macro_rules! smooth_float {
    ($t:ty) => {
        impl Smooth for $t {
            fn cst(x: f64) -> Self {
                x as $t
            }
            fn lead(&self) -> f64 {
                *self as f64
            }
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
        }
    };
}
smooth_float!(f32);
smooth_float!(f64);

/// Floating-point scalar accepted by the generic metric layer.
pub trait Real: Smooth + Float + FromPrimitive + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 conversion")
    }
}
impl Real for f32 {}
impl Real for f64 {}

/// Maximum total degree carried by [`Jet2`].
pub const JET_ORDER: usize = 4;
const NCOEF: usize = 15;

const fn build_index() -> [[usize; JET_ORDER + 1]; JET_ORDER + 1] {
    let mut table = [[usize::MAX; JET_ORDER + 1]; JET_ORDER + 1];
    let mut k = 0;
    let mut deg = 0;
    while deg <= JET_ORDER {
        let mut i = deg as isize;
        while i >= 0 {
            let j = deg - i as usize;
            table[i as usize][j] = k;
            k += 1;
            i -= 1;
        }
        deg += 1;
    }
    table
}
const INDEX: [[usize; JET_ORDER + 1]; JET_ORDER + 1] = build_index();

const fn build_pairs() -> [(usize, usize); NCOEF] {
    let mut out = [(0, 0); NCOEF];
    let mut i = 0;
    while i <= JET_ORDER {
        let mut j = 0;
        while i + j <= JET_ORDER {
            out[INDEX[i][j]] = (i, j);
            j += 1;
        }
        i += 1;
    }
    out
}
const PAIRS: [(usize, usize); NCOEF] = build_pairs();

const FACT: [f64; JET_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Truncated bivariate Taylor polynomial of total degree [`JET_ORDER`].
///
/// Coefficient `(i, j)` multiplies `dt^i dx^j`, so it equals
/// `∂_t^i ∂_x^j u / (i! j!)` at the expansion point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    c: [f64; NCOEF],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = v;
        Jet2 { c }
    }

    /// Independent variable `which` (0 = t, 1 = x) expanded about `value`.
    pub fn var(value: f64, which: usize) -> Self {
        let mut j = Self::constant(value);
        let k = if which == 0 { INDEX[1][0] } else { INDEX[0][1] };
        j.c[k] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative `∂_t^i ∂_x^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        if i + j > JET_ORDER {
            return 0.0;
        }
        self.c[INDEX[i][j]] * FACT[i] * FACT[j]
    }

    pub fn grad(&self) -> [f64; 2] {
        [self.partial(1, 0), self.partial(0, 1)]
    }

    /// Derivative jet along coordinate `which`; the top degree becomes unknown and is zeroed.
    pub fn d(&self, which: usize) -> Self {
        let mut out = [0.0; NCOEF];
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            let (src, mult) = if which == 0 {
                if i + j >= JET_ORDER {
                    continue;
                }
                (INDEX[i + 1][j], (i + 1) as f64)
            } else {
                if i + j >= JET_ORDER {
                    continue;
                }
                (INDEX[i][j + 1], (j + 1) as f64)
            };
            out[k] = self.c[src] * mult;
        }
        Jet2 { c: out }
    }

    /// Evaluates the truncated polynomial at offset `(dt, dx)`.
    pub fn eval_offset(&self, dt: f64, dx: f64) -> f64 {
        PAIRS
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| self.c[k] * dt.powi(i as i32) * dx.powi(j as i32))
            .sum()
    }

    fn compose(self, derivs: [f64; JET_ORDER + 1]) -> Self {
        let mut u = self;
        u.c[0] = 0.0;
        let mut acc = Self::constant(derivs[0]);
        let mut power = Self::constant(1.0);
        for (k, dk) in derivs.iter().enumerate().skip(1) {
            power = power * u;
            acc = acc + power.scale(*dk / FACT[k]);
        }
        acc
    }

    pub fn scale(mut self, s: f64) -> Self {
        for v in self.c.iter_mut() {
            *v *= s;
        }
        self
    }

    pub fn powi(self, n: i32) -> Self {
        let a = self.c[0];
        let nf = n as f64;
        let mut d = [0.0; JET_ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef * a.powi(n - k as i32);
            coef *= nf - k as f64;
        }
        self.compose(d)
    }

    pub fn powf(self, p: f64) -> Self {
        let a = self.c[0];
        let mut d = [0.0; JET_ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef * a.powf(p - k as f64);
            coef *= p - k as f64;
        }
        self.compose(d)
    }

    pub fn recip(self) -> Self {
        self.powi(-1)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, o: Jet2) -> Jet2 {
        for k in 0..NCOEF {
            self.c[k] += o.c[k];
        }
        self
    }
}
impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(mut self, o: Jet2) -> Jet2 {
        for k in 0..NCOEF {
            self.c[k] -= o.c[k];
        }
        self
    }
}
impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}
impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut out = [0.0; NCOEF];
        for (ka, &(ia, ja)) in PAIRS.iter().enumerate() {
            let a = self.c[ka];
            if a == 0.0 {
                continue;
            }
            for (kb, &(ib, jb)) in PAIRS.iter().enumerate() {
                if ia + ib + ja + jb > JET_ORDER {
                    continue;
                }
                out[INDEX[ia + ib][ja + jb]] += a * o.c[kb];
            }
        }
        Jet2 { c: out }
    }
}
impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}
impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, o: f64) -> Jet2 {
        self.c[0] += o;
        self
    }
}
impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, o: f64) -> Jet2 {
        self.c[0] -= o;
        self
    }
}
impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, o: f64) -> Jet2 {
        self.scale(o)
    }
}
impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        o.scale(self)
    }
}
impl AddAssign for Jet2 {
    fn add_assign(&mut self, o: Jet2) {
        *self = *self + o;
    }
}
impl SubAssign for Jet2 {
    fn sub_assign(&mut self, o: Jet2) {
        *self = *self - o;
    }
}
impl MulAssign for Jet2 {
    fn mul_assign(&mut self, o: Jet2) {
        *self = *self * o;
    }
}

impl Smooth for Jet2 {
    fn cst(x: f64) -> Self {
        Jet2::constant(x)
    }
    fn lead(&self) -> f64 {
        self.c[0]
    }
    fn sin(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c, s])
    }
    fn cos(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s, c])
    }
    fn exp(self) -> Self {
        let e = self.c[0].exp();
        self.compose([e; JET_ORDER + 1])
    }
    fn ln(self) -> Self {
        let a = self.c[0];
        self.compose([
            a.ln(),
            1.0 / a,
            -1.0 / (a * a),
            2.0 / (a * a * a),
            -6.0 / (a * a * a * a),
        ])
    }
    fn sqrt(self) -> Self {
        self.powf(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_matches_closed_form() {
        let t = Jet2::var(0.3, 0);
        let x = Jet2::var(-0.7, 1);
        let u = t * t * x + x.sin();
        assert!((u.partial(1, 1) - 2.0 * 0.3).abs() < 1e-14);
        assert!((u.partial(0, 3) + (-0.7f64).cos()).abs() < 1e-14);
        assert!((u.partial(2, 1) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composition_of_exp_ln_is_identity() {
        let t = Jet2::var(0.4, 0);
        let x = Jet2::var(1.1, 1);
        let u = t * x + 2.0;
        let v = u.ln().exp();
        for k in 0..NCOEF {
            assert!((u.c[k] - v.c[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn division_and_derivative_commute_with_quotient_rule() {
        let t = Jet2::var(0.2, 0);
        let x = Jet2::var(0.9, 1);
        let q = x / (t * t + 1.0);
        let expect = -2.0 * 0.2 * 0.9 / (1.04f64 * 1.04);
        assert!((q.d(0).value() - expect).abs() < 1e-14);
        assert!((q.partial(1, 0) - expect).abs() < 1e-14);
    }
}
