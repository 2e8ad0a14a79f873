//! Append-only reverse-mode tape over scalar operations.
//!
//! [`Var`] is a handle carrying the primal value plus an index into the
//! tape's record list; arithmetic on `Var`s pushes one record with the local
//! partial derivatives. Constants (from [`Real::lift`] or `Var op f64`) are
//! folded into the partials and never allocate records, so fully-clamped
//! branches cost nothing.
//!
//! The backward pass walks records in reverse index order, which is a
//! reverse topological order because the tape is append-only. Gradients of
//! leaves that never feed the seeded outputs are exactly zero.

use crate::scalar::{fm, Real};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::ops::{Add, Div, Mul, Neg, Sub};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Rec {
    p0: u32,
    p1: u32,
    d0: f64,
    d1: f64,
}

/// Record storage for one rollout (or one checkpointed segment of one).
///
/// A tape is single-threaded; independent tapes on different threads are
/// fine.
pub struct Tape {
    recs: RefCell<Vec<Rec>>,
    budget: usize,
}

impl Tape {
    /// Default record budget: ~4 GB of records (24 bytes each).
    pub const DEFAULT_BUDGET: usize = 178_000_000;

    pub fn new() -> Self {
        Self::with_budget(Self::DEFAULT_BUDGET)
    }

    pub fn with_budget(budget: usize) -> Self {
        assert!(budget < NONE as usize);
        Tape { recs: RefCell::new(Vec::new()), budget }
    }

    pub fn len(&self) -> usize {
        self.recs.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True once the record count passed the budget; callers poll this at
    /// step granularity so one step may overshoot.
    pub fn over_budget(&self) -> bool {
        self.len() > self.budget
    }

    /// New leaf (input slot). Its adjoint is read back after `backward`.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Rec { p0: NONE, p1: NONE, d0: 0.0, d1: 0.0 });
        Var { tape: self, idx, val: value }
    }

    /// Constant: participates in arithmetic but records nothing and has no
    /// gradient.
    pub fn constant(&self, value: f64) -> Var<'_> {
        Var { tape: self, idx: NONE, val: value }
    }

    fn push(&self, rec: Rec) -> u32 {
        let mut recs = self.recs.borrow_mut();
        let idx = recs.len();
        assert!(idx < NONE as usize, "tape record index overflow");
        recs.push(rec);
        idx as u32
    }

    fn unary(&self, p: u32, d: f64, val: f64) -> Var<'_> {
        if p == NONE {
            return self.constant(val);
        }
        let idx = self.push(Rec { p0: p, p1: NONE, d0: d, d1: 0.0 });
        Var { tape: self, idx, val }
    }

    fn binary(&self, p0: u32, d0: f64, p1: u32, d1: f64, val: f64) -> Var<'_> {
        match (p0 == NONE, p1 == NONE) {
            (true, true) => self.constant(val),
            (false, true) => self.unary(p0, d0, val),
            (true, false) => self.unary(p1, d1, val),
            (false, false) => {
                let idx = self.push(Rec { p0, p1, d0, d1 });
                Var { tape: self, idx, val }
            }
        }
    }

    /// Reverse sweep from a single scalar output seeded with 1.
    pub fn backward(&self, output: Var<'_>) -> Adjoints {
        self.backward_seeded(&[(output, 1.0)])
    }

    /// Reverse sweep with explicit cotangent seeds on several outputs.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Adjoints {
        let recs = self.recs.borrow();
        let mut adj = vec![0.0f64; recs.len()];
        for &(v, s) in seeds {
            debug_assert!(core::ptr::eq(v.tape, self));
            if v.idx != NONE {
                adj[v.idx as usize] += s;
            }
        }
        for i in (0..recs.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let r = recs[i];
            if r.p0 != NONE {
                adj[r.p0 as usize] += r.d0 * a;
            }
            if r.p1 != NONE {
                adj[r.p1 as usize] += r.d1 * a;
            }
        }
        Adjoints { adj }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a backward sweep; query per-leaf gradients with [`Adjoints::grad`].
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn grad(&self, v: Var<'_>) -> f64 {
        if v.idx == NONE {
            0.0
        } else {
            self.adj[v.idx as usize]
        }
    }
}

/// Tape-recorded scalar. 24 bytes, `Copy`; freely stored in state vectors.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.idx == NONE
    }
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val
    }
}

impl PartialOrd for Var<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        self.val.partial_cmp(&other.val)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.binary(self.idx, 1.0, rhs.idx, 1.0, self.val + rhs.val)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.binary(self.idx, 1.0, rhs.idx, -1.0, self.val - rhs.val)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape.binary(self.idx, rhs.val, rhs.idx, self.val, self.val * rhs.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        // The primal must be the rounded quotient itself so taped replays
        // are bit-identical to the plain f64 path.
        let val = self.val / rhs.val;
        let inv = 1.0 / rhs.val;
        self.tape.binary(self.idx, inv, rhs.idx, -val * inv, val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(self.idx, -1.0, -self.val)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, 1.0, self.val + rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, 1.0, self.val - rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, rhs, self.val * rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, 1.0 / rhs, self.val / rhs)
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn primal(self) -> f64 {
        self.val
    }

    #[inline]
    fn lift(self, value: f64) -> Self {
        self.tape.constant(value)
    }

    fn sqrt(self) -> Self {
        let s = fm::sqrt(self.val);
        // Subgradient 0 at the origin; keeps zero-force norms quiet.
        let d = if s == 0.0 { 0.0 } else { 0.5 / s };
        self.tape.unary(self.idx, d, s)
    }

    fn exp(self) -> Self {
        let e = fm::exp(self.val);
        self.tape.unary(self.idx, e, e)
    }

    fn ln(self) -> Self {
        self.tape.unary(self.idx, 1.0 / self.val, fm::ln(self.val))
    }

    fn sin(self) -> Self {
        self.tape.unary(self.idx, fm::cos(self.val), fm::sin(self.val))
    }

    fn cos(self) -> Self {
        self.tape.unary(self.idx, -fm::sin(self.val), fm::cos(self.val))
    }

    fn tanh(self) -> Self {
        let t = fm::tanh(self.val);
        self.tape.unary(self.idx, 1.0 - t * t, t)
    }

    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.tape.unary(self.idx, d, fm::abs(self.val))
    }

    fn max_zero(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            self.tape.constant(0.0)
        }
    }
}
