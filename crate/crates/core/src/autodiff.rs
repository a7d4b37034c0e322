//! Tape-based reverse-mode differentiation.
//!
//! [`Var`] is a `Copy` scalar carrying its value and an index into a
//! thread-local tape. Each arithmetic operation involving at least one
//! recorded variable appends a node holding the local partial derivatives
//! with respect to its (at most two) operands. Operations on constants
//! produce constants and are not recorded, which keeps tapes for large
//! grids with few learnable inputs compact.
//!
//! ```
//! use crowdmpm::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x + x * 2.0;
//! let grads = tape.backward(y);
//! assert_eq!(y.value(), 15.0);
//! assert_eq!(grads.wrt(x), 8.0);
//! ```

use std::cell::RefCell;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::real::Real;

const CONST: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
struct TapeData {
    active: bool,
    nodes: Vec<Node>,
}

thread_local! {
    static TAPE: RefCell<TapeData> = RefCell::new(TapeData::default());
}

fn push(parents: [u32; 2], partials: [f64; 2]) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        assert!(t.active, "recorded Var used with no active Tape on this thread");
        let idx = t.nodes.len();
        assert!(idx < CONST as usize, "tape overflow");
        t.nodes.push(Node { parents, partials });
        idx as u32
    })
}

/// Exclusive handle to this thread's tape. Dropping it discards the
/// recording; only one may be alive per thread.
pub struct Tape {
    // Tapes are thread-local; keep the handle on its thread.
    _not_send: PhantomData<*const ()>,
}

impl Tape {
    pub fn new() -> Self {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            assert!(!t.active, "a Tape is already active on this thread");
            t.active = true;
            t.nodes.clear();
        });
        Tape { _not_send: PhantomData }
    }

    /// Registers an independent input.
    pub fn var(&self, value: f64) -> Var {
        Var { val: value, idx: push([CONST, CONST], [0.0, 0.0]) }
    }

    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Propagates adjoints from `output` back to every recorded node.
    pub fn backward(&self, output: Var) -> Gradients {
        TAPE.with(|t| {
            let t = t.borrow();
            let mut adj = vec![0.0; t.nodes.len()];
            if output.idx == CONST {
                return Gradients { adj };
            }
            adj[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let node = t.nodes[i];
                for k in 0..2 {
                    let p = node.parents[k];
                    if p != CONST {
                        adj[p as usize] += a * node.partials[k];
                    }
                }
            }
            Gradients { adj }
        })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.active = false;
            t.nodes = Vec::new();
        });
    }
}

pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    /// d(output)/d(v). Zero for constants.
    pub fn wrt(&self, v: Var) -> f64 {
        if v.idx == CONST {
            0.0
        } else {
            self.adj[v.idx as usize]
        }
    }
}

/// A scalar that records its computational history on the thread's tape.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl Var {
    pub fn constant(val: f64) -> Self {
        Var { val, idx: CONST }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.idx == CONST
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Var {
        if self.idx == CONST {
            Var::constant(val)
        } else {
            Var { val, idx: push([self.idx, CONST], [d, 0.0]) }
        }
    }

    #[inline]
    fn binary(self, other: Var, val: f64, da: f64, db: f64) -> Var {
        match (self.idx == CONST, other.idx == CONST) {
            (true, true) => Var::constant(val),
            (false, true) => Var { val, idx: push([self.idx, CONST], [da, 0.0]) },
            (true, false) => Var { val, idx: push([other.idx, CONST], [db, 0.0]) },
            (false, false) => Var { val, idx: push([self.idx, other.idx], [da, db]) },
        }
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, c: f64) -> Var {
        self.unary(self.val + c, 1.0)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, c: f64) -> Var {
        self.unary(self.val - c, 1.0)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, c: f64) -> Var {
        self.unary(self.val * c, c)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, c: f64) -> Var {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl AddAssign for Var {
    #[inline]
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl SubAssign for Var {
    #[inline]
    fn sub_assign(&mut self, o: Var) {
        *self = *self - o;
    }
}

impl MulAssign<f64> for Var {
    #[inline]
    fn mul_assign(&mut self, c: f64) {
        *self = *self * c;
    }
}

impl Real for Var {
    const PARALLEL: bool = false;

    #[inline]
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    #[inline]
    fn val(self) -> f64 {
        self.val
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn ln_1p(self) -> Self {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
}
