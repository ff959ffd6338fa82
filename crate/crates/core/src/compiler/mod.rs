//! Offline recurrence compiler.
//!
//! A contracted ERI class is lowered to a straight-line [`ExecutionPlan`]:
//!
//! 1. [`deconstruct`] splits a contracted quartet into `K*L*M*N` primitive tasks.
//! 2. The horizontal (HRR) and vertical (VRR) recurrences are abstracted into
//!    a [`RecurrenceDAG`] over [`IntegralNode`]s.
//! 3. [`search_path`] walks the DAG top-down, choosing at every node the
//!    recurrence position with the lowest `(new - reused) + lambda * momentum`.
//! 4. [`generate_plan`] reverses the path and emits instructions from the
//!    `[00|00]^(m)` base case up to the target components.
//!
//! Recurrences used (`A`, `B`, `C`, `D` shell centers, `p = alpha + beta`,
//! `q = gamma + delta`, `W = (pP + qQ)/(p+q)`, `rho = pq/(p+q)`):
//!
//! ```text
//! HRR  [a(b+1i)|cd]     = [(a+1i)b|cd] + (A-B)_i [ab|cd]          (same on the ket)
//! VRR  [(e+1i)0|f0]^m   = PA_i [e0|f0]^m + WP_i [e0|f0]^(m+1)
//!                        + e_i/2p ([(e-1i)0|f0]^m - rho/p [(e-1i)0|f0]^(m+1))
//!                        + f_i/2(p+q) [e0|(f-1i)0]^(m+1)           (mirror for f)
//! base [00|00]^m        = 2 pi^(5/2) / (p q sqrt(p+q)) K_ab K_cd F_m(rho |P-Q|^2)
//! ```
//!
//! VRR nodes (`b = d = 0`) are evaluated per primitive quadruple and summed
//! into contracted registers; HRR runs once on the contracted values since
//! its coefficients depend only on `A-B` and `C-D`.

mod dag;
mod plan;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::{Momentum, Shell};

pub use dag::{
    build_dag, derive, find_optimal_position, positions, search_path, search_path_with, Candidate,
    Derivation, PathStep, RecurrenceDAG, SearchPath,
};
pub use plan::{
    compile, compile_classes, compile_random, compile_with, generate_plan, plan_stats, ExecutionPlan, Instr, Op, PlanSet,
    PlanStats, Term,
};

pub const DEFAULT_LAMBDA: f64 = 2.0;

/// Total momenta `(L_a, L_b, L_c, L_d)` of a quartet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EriClass(pub [u32; 4]);

impl EriClass {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of Cartesian target components.
    pub fn n_components(&self) -> usize {
        self.0.iter().map(|&l| crate::input::n_cartesian(l)).product()
    }

    /// Every class with each momentum at most `l_max`.
    pub fn all_up_to(l_max: u32) -> Vec<EriClass> {
        let r = 0..=l_max;
        let mut out = Vec::new();
        for a in r.clone() {
            for b in r.clone() {
                for c in r.clone() {
                    for d in r.clone() {
                        out.push(EriClass([a, b, c, d]));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for EriClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a},{b},{c},{d})")
    }
}

impl FromStr for EriClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad ERI class `{s}`")))?;
        let arr: [u32; 4] = parts
            .try_into()
            .map_err(|_| Error::InvalidArgument(format!("ERI class `{s}` needs four momenta")))?;
        Ok(EriClass(arr))
    }
}

/// Intermediate `[a b | c d]^(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntegralNode {
    pub a: Momentum,
    pub b: Momentum,
    pub c: Momentum,
    pub d: Momentum,
    pub m: u8,
}

impl IntegralNode {
    pub fn base(m: u8) -> Self {
        IntegralNode {
            a: Momentum::ZERO,
            b: Momentum::ZERO,
            c: Momentum::ZERO,
            d: Momentum::ZERO,
            m,
        }
    }

    pub fn is_base(&self) -> bool {
        self.a.is_zero() && self.b.is_zero() && self.c.is_zero() && self.d.is_zero()
    }

    /// VRR-level node: evaluated per primitive quadruple.
    pub fn is_primitive_level(&self) -> bool {
        self.b.is_zero() && self.d.is_zero()
    }

    pub fn slot(&self, slot: Slot) -> Momentum {
        match slot {
            Slot::A => self.a,
            Slot::B => self.b,
            Slot::C => self.c,
            Slot::D => self.d,
        }
    }

    pub fn total(&self) -> u32 {
        self.a.total() + self.b.total() + self.c.total() + self.d.total()
    }

    /// Expansion priority; every child of a node sorts strictly lower.
    pub(crate) fn priority(&self) -> (u32, u32) {
        (self.total(), self.b.total() + self.d.total())
    }
}

impl fmt::Display for IntegralNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} {}|{} {}]^({})", self.a, self.b, self.c, self.d, self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
    C,
    D,
}

/// A recurrence position: the momentum slot to reduce and the Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub slot: Slot,
    pub axis: u8,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.slot, ['x', 'y', 'z'][self.axis as usize])
    }
}

/// Symbolic scalar bound per primitive quadruple (or per quartet for `AB`, `CD`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    One,
    PA(u8),
    PB(u8),
    WP(u8),
    WQ(u8),
    QC(u8),
    QD(u8),
    AB(u8),
    CD(u8),
    /// `1/2p`
    Inv2p,
    /// `1/2q`
    Inv2q,
    /// `rho/p`
    RhoOverP,
    /// `rho/q`
    RhoOverQ,
    /// `1/2(p+q)`
    Inv2pq,
}

pub const N_KINDS: usize = 30;

impl Kind {
    pub fn index(self) -> usize {
        match self {
            Kind::One => 0,
            Kind::PA(i) => 1 + i as usize,
            Kind::PB(i) => 4 + i as usize,
            Kind::WP(i) => 7 + i as usize,
            Kind::WQ(i) => 10 + i as usize,
            Kind::QC(i) => 13 + i as usize,
            Kind::QD(i) => 16 + i as usize,
            Kind::AB(i) => 19 + i as usize,
            Kind::CD(i) => 22 + i as usize,
            Kind::Inv2p => 25,
            Kind::Inv2q => 26,
            Kind::RhoOverP => 27,
            Kind::RhoOverQ => 28,
            Kind::Inv2pq => 29,
        }
    }

    fn name(self) -> String {
        let ax = |i: u8| ['x', 'y', 'z'][i as usize];
        match self {
            Kind::One => "1".into(),
            Kind::PA(i) => format!("pa_{}", ax(i)),
            Kind::PB(i) => format!("pb_{}", ax(i)),
            Kind::WP(i) => format!("wp_{}", ax(i)),
            Kind::WQ(i) => format!("wq_{}", ax(i)),
            Kind::QC(i) => format!("qc_{}", ax(i)),
            Kind::QD(i) => format!("qd_{}", ax(i)),
            Kind::AB(i) => format!("ab_{}", ax(i)),
            Kind::CD(i) => format!("cd_{}", ax(i)),
            Kind::Inv2p => "inv_2p".into(),
            Kind::Inv2q => "inv_2q".into(),
            Kind::RhoOverP => "rho_p".into(),
            Kind::RhoOverQ => "rho_q".into(),
            Kind::Inv2pq => "inv_2pq".into(),
        }
    }
}

/// `scale * first * second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coef {
    pub scale: i32,
    pub first: Kind,
    pub second: Kind,
}

impl Coef {
    pub const ONE: Coef = Coef::of(Kind::One);

    pub const fn of(kind: Kind) -> Self {
        Coef {
            scale: 1,
            first: kind,
            second: Kind::One,
        }
    }

    pub fn eval(&self, values: &[f64; N_KINDS]) -> f64 {
        self.scale as f64 * values[self.first.index()] * values[self.second.index()]
    }
}

impl fmt::Display for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.scale != 1 || (self.first == Kind::One && self.second == Kind::One) {
            parts.push(format!("{:.1}", self.scale as f64));
        }
        for k in [self.first, self.second] {
            if k != Kind::One {
                parts.push(k.name());
            }
        }
        write!(f, "{}", parts.join(" * "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompilerConfig {
    pub lambda: f64,
    /// Ties in the cost go to the first candidate in enumeration order.
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    FirstInOrder,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig {
            lambda: DEFAULT_LAMBDA,
            tie_break: TieBreak::FirstInOrder,
        }
    }
}

impl CompilerConfig {
    pub fn with_lambda(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(CompilerConfig {
            lambda,
            ..Default::default()
        })
    }
}

/// One primitive quadruple `[a_k b_l | c_m d_n]` of a contracted quartet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveTask {
    /// `(k, l, m, n)`.
    pub index: [usize; 4],
    pub exponents: [f64; 4],
    /// `D_ak D_bl D_cm D_dn`.
    pub coef: f64,
}

/// Splits a contracted quartet into its `K*L*M*N` primitive tasks.
pub fn deconstruct(quartet: [&Shell; 4]) -> Vec<PrimitiveTask> {
    let [a, b, c, d] = quartet;
    let mut out = Vec::with_capacity(a.k() * b.k() * c.k() * d.k());
    for k in 0..a.k() {
        for l in 0..b.k() {
            for m in 0..c.k() {
                for n in 0..d.k() {
                    out.push(PrimitiveTask {
                        index: [k, l, m, n],
                        exponents: [a.exponents[k], b.exponents[l], c.exponents[m], d.exponents[n]],
                        coef: a.coefficients[k] * b.coefficients[l] * c.coefficients[m] * d.coefficients[n],
                    });
                }
            }
        }
    }
    out
}
