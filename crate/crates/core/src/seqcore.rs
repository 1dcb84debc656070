//! Integer dilation sequences.
//!
//! Generalized Fibonacci sequences `Fib(a, b)` follow `f(n+1) = f(n) + f(n-1)`
//! from `f1 = a`, `f2 = b`. Row `i` of the Wythoff array is `Fib(a_i, b_i)`
//! with `a_i = floor(floor(i*phi)*phi)` and `b_i = floor(floor(i*phi)*phi^2)`;
//! the rows partition the positive integers. The floors are evaluated with
//! exact integer arithmetic, never with floating point.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Golden ratio `(1 + sqrt 5) / 2`.
pub const PHI: f64 = 1.618_033_988_749_895;
/// Conjugate root `(1 - sqrt 5) / 2`.
pub const PSI: f64 = -0.618_033_988_749_895;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Initial pair `(f1, f2)` of a generalized Fibonacci sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FibParams {
    pub a: u64,
    pub b: u64,
}

impl FibParams {
    pub fn new(a: u64, b: u64) -> Self {
        Self { a, b }
    }

    /// The pair two recurrence steps further along: `(a+b, a+2b)`.
    pub fn advance2(self) -> Self {
        let c = self.a + self.b;
        Self { a: c, b: c + self.b }
    }
}

/// Generation rule of a [`DilationSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SequenceRule {
    /// Generalized Fibonacci `Fib(a, b)`.
    Fib { a: u64, b: u64 },
    /// `(c*n)` for `n >= 1`.
    Linear { step: u64 },
    /// `(c*n + shift)` for `n >= 1`.
    LinearShifted { step: u64, shift: u64 },
    /// `(base^n)` for `n >= 1`.
    Power { base: u64 },
    /// `(n^exponent)` for `n >= 1`.
    Poly { exponent: u32 },
}

impl fmt::Display for SequenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SequenceRule::Fib { a, b } => write!(f, "Fib({a},{b})"),
            SequenceRule::Linear { step } => write!(f, "({step}n)"),
            SequenceRule::LinearShifted { step, shift } => write!(f, "({step}n+{shift})"),
            SequenceRule::Power { base } => write!(f, "({base}^n)"),
            SequenceRule::Poly { exponent } => write!(f, "(n^{exponent})"),
        }
    }
}

/// Offsets in generation order. Duplicates are kept (`Fib(1,1)` yields 1 twice);
/// set semantics only apply once a support set is formed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilationSequence {
    elements: Vec<u64>,
    rule: SequenceRule,
    cap: u64,
}

impl DilationSequence {
    /// Wraps an explicit element list, e.g. for testing support-set construction.
    pub fn from_elements(elements: Vec<u64>, rule: SequenceRule, cap: u64) -> Self {
        Self { elements, rule, cap }
    }

    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn rule(&self) -> SequenceRule {
        self.rule
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Elements of `Fib(a, b)` up to `w`.
///
/// The initial pair is always returned, even when it exceeds `w`; the loop then
/// appends `last + second_last` while that sum stays `<= w`. Window filtering
/// is done when the support set is built.
pub fn generalized_fibonacci(a: u64, b: u64, w: u64) -> DilationSequence {
    let mut elements = vec![a, b];
    loop {
        let n = elements.len();
        let next = elements[n - 1].saturating_add(elements[n - 2]);
        if next > w {
            break;
        }
        // Fib(0, 0) never grows; stop instead of looping forever.
        if next == 0 && n >= 2 && elements[n - 1] == 0 {
            break;
        }
        elements.push(next);
    }
    DilationSequence {
        elements,
        rule: SequenceRule::Fib { a, b },
        cap: w,
    }
}

fn floor_phi_times(m: u64) -> u64 {
    // floor(m*phi) = floor((m + sqrt(5 m^2)) / 2); 5m^2 is never a square for m >= 1,
    // so the integer square root gives the exact floor.
    let m = m as u128;
    let r = (5 * m * m).isqrt();
    ((m + r) / 2) as u64
}

/// Row `i >= 1` of the Wythoff array.
pub fn wythoff_pair(i: u64) -> FibParams {
    assert!(i >= 1, "Wythoff rows are indexed from 1");
    let m = floor_phi_times(i);
    let a = floor_phi_times(m);
    // floor(m*phi^2) = floor(m*phi + m) = floor(m*phi) + m
    FibParams { a, b: a + m }
}

/// Row `i` stepped back twice through the recurrence.
pub fn modified_wythoff_pair(i: u64) -> FibParams {
    let FibParams { a, b } = wythoff_pair(i);
    let b_m = b - a;
    let a_m = a - b_m;
    FibParams { a: a_m, b: b_m }
}

/// Closed form of `f_n` of `Fib(a, b)` for `n >= 2`:
/// `((b - a psi) phi^(n-1) + (a phi - b) psi^(n-1)) / sqrt 5`.
pub fn binet(a: u64, b: u64, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::arg("binet needs n >= 2; use binet_from_first for n = 1"));
    }
    let (a, b) = (a as f64, b as f64);
    let e = (n - 1) as i32;
    let v = ((b - a * PSI) * PHI.powi(e) + (a * PHI - b) * PSI.powi(e)) / SQRT5;
    check_range(v, n)
}

/// Closed form for `n >= 1`:
/// `((a - (b - a) psi) phi^n + ((b - a) phi - a) psi^n) / sqrt 5`.
pub fn binet_from_first(a: u64, b: u64, n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::arg("terms are indexed from 1"));
    }
    let (a, b) = (a as f64, b as f64);
    let e = n as i32;
    let d = b - a;
    let v = ((a - d * PSI) * PHI.powi(e) + (d * PHI - a) * PSI.powi(e)) / SQRT5;
    check_range(v, n)
}

fn check_range(v: f64, n: u32) -> Result<f64> {
    // Past u64 the recurrence has nothing exact to agree with.
    if !v.is_finite() || v >= u64::MAX as f64 {
        return Err(Error::Overflow { n });
    }
    Ok(v)
}

/// One of the ablation families, truncated at `w`.
pub fn family_sequence(rule: SequenceRule, w: u64) -> Result<DilationSequence> {
    if w == 0 {
        return Err(Error::arg("window must be >= 1"));
    }
    let elements: Vec<u64> = match rule {
        SequenceRule::Fib { a, b } => {
            let mut s = generalized_fibonacci(a, b, w).elements;
            s.retain(|&x| x <= w);
            s
        }
        SequenceRule::Linear { step } => {
            if step == 0 {
                return Err(Error::arg("linear step must be >= 1"));
            }
            (1..).map(|n| step * n).take_while(|&x| x <= w).collect()
        }
        SequenceRule::LinearShifted { step, shift } => {
            if step == 0 {
                return Err(Error::arg("linear step must be >= 1"));
            }
            (1..).map(|n| step * n + shift).take_while(|&x| x <= w).collect()
        }
        SequenceRule::Power { base } => {
            if base < 2 {
                return Err(Error::arg("power base must be >= 2"));
            }
            std::iter::successors(Some(base), |&x| x.checked_mul(base))
                .take_while(|&x| x <= w)
                .collect()
        }
        SequenceRule::Poly { exponent } => {
            if !(2..=3).contains(&exponent) {
                return Err(Error::arg("polynomial exponent must be 2 or 3"));
            }
            (1u64..)
                .map(|n| n.pow(exponent))
                .take_while(|&x| x <= w)
                .collect()
        }
    };
    if elements.is_empty() {
        return Err(Error::EmptySequence(rule.to_string()));
    }
    Ok(DilationSequence {
        elements,
        rule,
        cap: w,
    })
}
