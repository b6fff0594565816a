//! Reverse-mode differentiation on a thread-local tape.
//!
//! A [`Var`] is a copyable handle (tape index plus primal value). Nodes may
//! have any number of parents, so dot products, affine maps and norms each
//! record a single node instead of a chain of binary ones. Values that do not
//! depend on any input carry no tape index and record nothing.
//!
//! Recording is scoped by [`gradient`]; one recording per thread at a time.

use crate::real::Real;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use std::cell::RefCell;
use std::cmp::Ordering;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

const CONST: u32 = u32::MAX;

#[derive(Default)]
struct Tape {
    recording: bool,
    // node i owns parents[starts[i]..starts[i + 1]]
    starts: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Tape {
    fn reset(&mut self) {
        self.starts.clear();
        self.parents.clear();
        self.partials.clear();
        self.starts.push(0);
    }

    fn len(&self) -> usize {
        self.starts.len() - 1
    }

    #[inline]
    fn push_edge(&mut self, parent: u32, partial: f64) {
        self.parents.push(parent);
        self.partials.push(partial);
    }

    #[inline]
    fn close(&mut self) -> u32 {
        let idx = self.len() as u32;
        self.starts.push(self.parents.len() as u32);
        idx
    }

    fn backward(&self, output: u32) -> Vec<f64> {
        let mut adj = vec![0.0; self.len()];
        if output == CONST {
            return adj;
        }
        adj[output as usize] = 1.0;
        for node in (0..=output as usize).rev() {
            let a = adj[node];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (self.starts[node] as usize, self.starts[node + 1] as usize);
            for e in lo..hi {
                adj[self.parents[e] as usize] += a * self.partials[e];
            }
        }
        adj
    }
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::default());
}

/// Differentiable scalar.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Default for Var {
    fn default() -> Self {
        Var::constant(0.0)
    }
}

impl Var {
    #[inline]
    pub fn constant(val: f64) -> Self {
        Var { idx: CONST, val }
    }

    #[inline]
    pub fn val(self) -> f64 {
        self.val
    }

    /// True when the value depends on a recorded input.
    #[inline]
    pub fn is_tracked(self) -> bool {
        self.idx != CONST
    }

    /// Records a node with the given (parent, partial) edges. Untracked
    /// parents and zero partials are dropped; no edges yields a constant.
    #[inline]
    fn node<I: IntoIterator<Item = (Var, f64)>>(val: f64, edges: I) -> Var {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            let mark = t.parents.len();
            for (p, d) in edges {
                if p.idx != CONST && d != 0.0 {
                    t.push_edge(p.idx, d);
                }
            }
            if t.parents.len() == mark {
                Var::constant(val)
            } else {
                Var { idx: t.close(), val }
            }
        })
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Var {
        if self.idx == CONST {
            return Var::constant(val);
        }
        Var::node(val, [(self, d)])
    }

    #[inline]
    fn binary(a: Var, da: f64, b: Var, db: f64, val: f64) -> Var {
        if a.idx == CONST && b.idx == CONST {
            return Var::constant(val);
        }
        Var::node(val, [(a, da), (b, db)])
    }
}

/// Result of one recorded evaluation.
#[derive(Debug, Clone)]
pub struct Gradient<X> {
    pub value: f64,
    /// d value / d input, zero for inputs that were not active.
    pub grad: Vec<f64>,
    pub extra: X,
}

/// Evaluates `f` at `point` while recording, then back-propagates.
///
/// Inputs whose `active` flag is false enter as constants and receive a zero
/// gradient. `f` returns the scalar to differentiate plus any side data.
///
/// Panics on nested use within one thread.
pub fn gradient<X>(
    point: &[f64],
    active: &[bool],
    f: impl FnOnce(&[Var]) -> (Var, X),
) -> Gradient<X> {
    assert_eq!(point.len(), active.len(), "active mask length mismatch");
    let inputs: Vec<Var> = TAPE.with(|t| {
        let mut t = t.borrow_mut();
        assert!(!t.recording, "nested gradient recording on one thread");
        t.recording = true;
        t.reset();
        point
            .iter()
            .zip(active)
            .map(|(&v, &a)| {
                if a {
                    Var { idx: t.close(), val: v }
                } else {
                    Var::constant(v)
                }
            })
            .collect()
    });
    struct Release;
    impl Drop for Release {
        fn drop(&mut self) {
            TAPE.with(|t| {
                let mut t = t.borrow_mut();
                t.recording = false;
                t.reset();
            });
        }
    }
    let _release = Release;
    let (out, extra) = f(&inputs);
    let adj = TAPE.with(|t| t.borrow().backward(out.idx));
    let grad = inputs
        .iter()
        .map(|v| if v.idx == CONST { 0.0 } else { adj[v.idx as usize] })
        .collect();
    Gradient {
        value: out.val,
        grad,
        extra,
    }
}

/// Number of nodes in the current thread's tape (diagnostics).
pub fn tape_len() -> usize {
    TAPE.with(|t| t.borrow().starts.len().saturating_sub(1))
}

// ---- arithmetic ----

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        Var::binary(self, 1.0, o, 1.0, self.val + o.val)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        Var::binary(self, 1.0, o, -1.0, self.val - o.val)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        Var::binary(self, o.val, o, self.val, self.val * o.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        Var::binary(self, 1.0 / o.val, o, -q / o.val, q)
    }
}

impl Rem for Var {
    type Output = Var;
    fn rem(self, o: Var) -> Var {
        let r = self.val % o.val;
        Var::binary(self, 1.0, o, -(self.val / o.val).trunc(), r)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Var {
            #[inline]
            fn $m(&mut self, o: Var) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl PartialEq for Var {
    fn eq(&self, o: &Var) -> bool {
        self.val == o.val
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, o: &Var) -> Option<Ordering> {
        self.val.partial_cmp(&o.val)
    }
}

impl Zero for Var {
    fn zero() -> Self {
        Var::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.val == 0.0
    }
}

impl One for Var {
    fn one() -> Self {
        Var::constant(1.0)
    }
}

impl Num for Var {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        <f64 as Num>::from_str_radix(s, radix).map(Var::constant)
    }
}

impl ToPrimitive for Var {
    fn to_i64(&self) -> Option<i64> {
        self.val.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.val.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.val)
    }
}

impl NumCast for Var {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        n.to_f64().map(Var::constant)
    }
}

impl FromPrimitive for Var {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Var::constant(n as f64))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Var::constant(n as f64))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Var::constant(n))
    }
    fn from_f32(n: f32) -> Option<Self> {
        Some(Var::constant(n as f64))
    }
}

macro_rules! consts {
    ($($name:ident),*) => {
        impl FloatConst for Var {
            $(fn $name() -> Self { Var::constant(<f64 as FloatConst>::$name()) })*
        }
    };
}
consts!(
    E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4,
    FRAC_PI_6, FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
);

// derivative expressed through input `x` and output `y`
macro_rules! unary_fns {
    ($($name:ident => |$x:ident, $y:ident| $d:expr;)*) => {
        $(
            #[inline]
            fn $name(self) -> Self {
                let $x = self.val;
                let $y = $x.$name();
                self.unary($y, $d)
            }
        )*
    };
}

macro_rules! flat_fns {
    ($($name:ident),*) => {
        $(fn $name(self) -> Self { Var::constant(self.val.$name()) })*
    };
}

impl Float for Var {
    fn nan() -> Self {
        Var::constant(f64::NAN)
    }
    fn infinity() -> Self {
        Var::constant(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Var::constant(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Var::constant(-0.0)
    }
    fn min_value() -> Self {
        Var::constant(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Var::constant(f64::MIN_POSITIVE)
    }
    fn max_value() -> Self {
        Var::constant(f64::MAX)
    }
    fn epsilon() -> Self {
        Var::constant(f64::EPSILON)
    }
    fn is_nan(self) -> bool {
        self.val.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.val.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.val.is_finite()
    }
    fn is_normal(self) -> bool {
        self.val.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.val.classify()
    }
    fn is_sign_positive(self) -> bool {
        self.val.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.val.is_sign_negative()
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.val)
    }

    flat_fns!(floor, ceil, round, trunc, signum);

    fn fract(self) -> Self {
        self.unary(self.val.fract(), 1.0)
    }

    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), d)
    }

    unary_fns! {
        recip => |x, y| -y * y;
        exp => |x, y| y;
        exp2 => |x, y| y * std::f64::consts::LN_2;
        exp_m1 => |x, y| y + 1.0;
        ln => |x, y| 1.0 / x;
        ln_1p => |x, y| 1.0 / (1.0 + x);
        log2 => |x, y| 1.0 / (x * std::f64::consts::LN_2);
        log10 => |x, y| 1.0 / (x * std::f64::consts::LN_10);
        cbrt => |x, y| if y == 0.0 { 0.0 } else { 1.0 / (3.0 * y * y) };
        sin => |x, y| x.cos();
        cos => |x, y| -x.sin();
        tan => |x, y| 1.0 + y * y;
        asin => |x, y| 1.0 / (1.0 - x * x).sqrt();
        acos => |x, y| -1.0 / (1.0 - x * x).sqrt();
        atan => |x, y| 1.0 / (1.0 + x * x);
        sinh => |x, y| x.cosh();
        cosh => |x, y| x.sinh();
        tanh => |x, y| 1.0 - y * y;
        asinh => |x, y| 1.0 / (x * x + 1.0).sqrt();
        acosh => |x, y| 1.0 / (x * x - 1.0).sqrt();
        atanh => |x, y| 1.0 / (1.0 - x * x);
    }

    fn sqrt(self) -> Self {
        let y = self.val.sqrt();
        let d = if y > 0.0 { 0.5 / y } else { 0.0 };
        self.unary(y, d)
    }

    fn powi(self, n: i32) -> Self {
        let y = self.val.powi(n);
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(y, d)
    }

    fn powf(self, e: Self) -> Self {
        let y = self.val.powf(e.val);
        let da = if e.val == 0.0 {
            0.0
        } else {
            e.val * self.val.powf(e.val - 1.0)
        };
        let de = if self.val > 0.0 { y * self.val.ln() } else { 0.0 };
        Var::binary(self, da, e, de, y)
    }

    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }

    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }

    fn max(self, o: Self) -> Self {
        if self.val >= o.val || o.val.is_nan() {
            self
        } else {
            o
        }
    }

    fn min(self, o: Self) -> Self {
        if self.val <= o.val || o.val.is_nan() {
            self
        } else {
            o
        }
    }

    fn abs_sub(self, o: Self) -> Self {
        if self.val > o.val {
            self - o
        } else {
            Var::constant(0.0)
        }
    }

    fn hypot(self, o: Self) -> Self {
        let h = self.val.hypot(o.val);
        if h == 0.0 {
            return Var::binary(self, 0.0, o, 0.0, 0.0);
        }
        Var::binary(self, self.val / h, o, o.val / h, h)
    }

    fn atan2(self, x: Self) -> Self {
        let r2 = self.val * self.val + x.val * x.val;
        let y = self.val.atan2(x.val);
        if r2 == 0.0 {
            return Var::constant(y);
        }
        Var::binary(self, x.val / r2, x, -self.val / r2, y)
    }

    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
}

impl Real for Var {
    #[inline]
    fn lit(v: f64) -> Self {
        Var::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    fn affine(bias: Self, coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        let val = coeffs
            .iter()
            .zip(xs)
            .fold(bias.val, |acc, (&c, x)| acc + c * x.val);
        Var::node(
            val,
            std::iter::once((bias, 1.0)).chain(xs.iter().zip(coeffs).map(|(&x, &c)| (x, c))),
        )
    }

    fn custom(value: f64, partials: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(partials.len(), xs.len());
        Var::node(value, xs.iter().zip(partials).map(|(&x, &d)| (x, d)))
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x.val * y.val);
        Var::node(
            val,
            a.iter()
                .zip(b)
                .flat_map(|(&x, &y)| [(x, y.val), (y, x.val)]),
        )
    }

    fn sum_all(xs: &[Self]) -> Self {
        let val = xs.iter().fold(0.0, |acc, x| acc + x.val);
        Var::node(val, xs.iter().map(|&x| (x, 1.0)))
    }

    fn norm(xs: &[Self]) -> Self {
        let n = xs.iter().fold(0.0, |acc, x| acc + x.val * x.val).sqrt();
        if n == 0.0 {
            return Var::constant(0.0);
        }
        Var::node(n, xs.iter().map(|&x| (x, x.val / n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn squared_norm_gradient() {
        let g = gradient(&[1.0, 2.0], &[true, true], |x| (x[0] * x[0] + x[1] * x[1], ()));
        assert_eq!(g.value, 5.0);
        assert_eq!(g.grad, vec![2.0, 4.0]);
    }

    #[test]
    fn inactive_inputs_get_zero_gradient() {
        let g = gradient(&[1.0, 2.0], &[true, false], |x| (x[0] * x[1], ()));
        assert_eq!(g.grad, vec![2.0, 0.0]);
    }

    #[test]
    fn independent_input_gets_zero_gradient() {
        let g = gradient(&[3.0, 7.0], &[true, true], |x| (x[0].sin(), ()));
        assert_eq!(g.grad[1], 0.0);
        assert!((g.grad[0] - 3.0f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        fn generic<T: Real>(x: &[T]) -> T {
            let a = x[0];
            let b = x[1];
            let c = x[2];
            let n = T::norm(&[a, b, c]);
            let d = T::dot(&[a, b], &[b, c]);
            let aff = T::affine(c, &[0.5, -2.0], &[a, b]);
            (a * b).tanh() + (b / c).exp() + a.hypot(c) + n * d + aff.sin() + c.powf(a)
                + a.atan2(b)
                + T::sum_all(&[a, b, c]).powi(3)
                + (b * b + T::one()).ln()
        }
        let x = [0.3, -0.7, 1.3];
        let g = gradient(&x, &[true; 3], |v| (generic(v), ()));
        assert!((g.value - generic(&x)).abs() < 1e-14);
        for i in 0..3 {
            let num = fd(|p| generic(p), &x, i);
            assert!((g.grad[i] - num).abs() < 1e-6 * (1.0 + num.abs()), "{i}: {} vs {num}", g.grad[i]);
        }
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let g = gradient(&[2.0], &[true], |x| {
            let y = x[0] * x[0];
            (y * y + y, ())
        });
        // d/dx (x^4 + x^2) = 4x^3 + 2x
        assert_eq!(g.grad[0], 36.0);
    }

    #[test]
    fn tape_is_released_after_recording() {
        let _ = gradient(&[1.0], &[true], |x| (x[0] * x[0], ()));
        assert_eq!(tape_len(), 0);
        let c = Var::constant(2.0) * Var::constant(3.0);
        assert!(!c.is_tracked());
        assert_eq!(c.val(), 6.0);
    }

    #[test]
    fn sqrt_at_zero_has_zero_derivative() {
        let g = gradient(&[0.0], &[true], |x| (x[0].sqrt(), ()));
        assert_eq!(g.grad[0], 0.0);
        let g = gradient(&[0.0, 0.0], &[true, true], |x| (Var::norm(x), ()));
        assert_eq!(g.grad, vec![0.0, 0.0]);
    }
}
