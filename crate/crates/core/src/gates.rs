//! The sixteen two-input Boolean functions and their real-valued relaxations.
//!
//! Opcode `i` is the function whose truth column, read over the input pairs
//! `(0,0), (0,1), (1,0), (1,1)`, spells the 4-bit number `i` most significant
//! bit first. This ordering is part of the model and netlist formats.

use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GateOpcode(u8);

/// Which operand of a two-input gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputSide {
    A,
    B,
}

const NAMES: [&str; 16] = [
    "FALSE",
    "AND",
    "A_AND_NOT_B",
    "A",
    "NOT_A_AND_B",
    "B",
    "XOR",
    "OR",
    "NOR",
    "XNOR",
    "NOT_B",
    "A_OR_NOT_B",
    "NOT_A",
    "NOT_A_OR_B",
    "NAND",
    "TRUE",
];

impl GateOpcode {
    pub const FALSE: Self = Self(0);
    pub const AND: Self = Self(1);
    pub const A_AND_NOT_B: Self = Self(2);
    pub const A: Self = Self(3);
    pub const NOT_A_AND_B: Self = Self(4);
    pub const B: Self = Self(5);
    pub const XOR: Self = Self(6);
    pub const OR: Self = Self(7);
    pub const NOR: Self = Self(8);
    pub const XNOR: Self = Self(9);
    pub const NOT_B: Self = Self(10);
    pub const A_OR_NOT_B: Self = Self(11);
    pub const NOT_A: Self = Self(12);
    /// Implication `A => B`.
    pub const NOT_A_OR_B: Self = Self(13);
    pub const NAND: Self = Self(14);
    pub const TRUE: Self = Self(15);

    pub const COUNT: usize = 16;

    pub const fn new(index: u8) -> Option<Self> {
        if index < 16 {
            Some(Self(index))
        } else {
            None
        }
    }

    pub const fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = GateOpcode> + Clone {
        (0..16u8).map(GateOpcode)
    }

    pub fn name(self) -> &'static str {
        NAMES[self.0 as usize]
    }

    /// Outputs at `(0,0), (0,1), (1,0), (1,1)`.
    pub fn truth_table(self) -> [bool; 4] {
        [0, 1, 2, 3].map(|p| self.bit_at(p))
    }

    /// Builds the opcode from its truth column.
    pub fn from_truth_table(tt: [bool; 4]) -> Self {
        let idx = tt.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
        Self(idx)
    }

    #[inline]
    fn bit_at(self, pos: u8) -> bool {
        (self.0 >> (3 - pos)) & 1 == 1
    }

    #[inline]
    pub fn eval_hard(self, a: bool, b: bool) -> bool {
        self.bit_at(2 * a as u8 + b as u8)
    }

    /// Word-level evaluation: lane `i` of the result is the gate applied to
    /// lane `i` of `a` and `b`.
    #[inline(always)]
    pub fn eval_word(self, a: u64, b: u64) -> u64 {
        match self.0 {
            0 => 0,
            1 => a & b,
            2 => a & !b,
            3 => a,
            4 => !a & b,
            5 => b,
            6 => a ^ b,
            7 => a | b,
            8 => !(a | b),
            9 => !(a ^ b),
            10 => !b,
            11 => a | !b,
            12 => !a,
            13 => !a | b,
            14 => !(a & b),
            _ => !0,
        }
    }

    /// Relaxed arithmetic form on `[0,1]^2`.
    #[inline]
    pub fn eval_soft<F: Float>(self, a: F, b: F) -> F {
        let one = F::one();
        let ab = a * b;
        match self.0 {
            0 => F::zero(),
            1 => ab,
            2 => a - ab,
            3 => a,
            4 => b - ab,
            5 => b,
            6 => a + b - (ab + ab),
            7 => a + b - ab,
            8 => one - (a + b - ab),
            9 => one - (a + b - (ab + ab)),
            10 => one - b,
            11 => one - b + ab,
            12 => one - a,
            13 => one - a + ab,
            14 => one - ab,
            _ => one,
        }
    }

    /// Exact partial derivatives `(d/da, d/db)` of the relaxed form.
    #[inline]
    pub fn grad_soft<F: Float>(self, a: F, b: F) -> (F, F) {
        let [_, ca, cb, cab] = self.bilinear_coeffs();
        let (ca, cb, cab) = (F::from(ca).unwrap(), F::from(cb).unwrap(), F::from(cab).unwrap());
        (ca + cab * b, cb + cab * a)
    }

    /// Coefficients `[c0, ca, cb, cab]` with `soft(a, b) = c0 + ca*a + cb*b + cab*a*b`.
    /// Every relaxed form is bilinear, so these four numbers determine it.
    pub const fn bilinear_coeffs(self) -> [f64; 4] {
        let f00 = ((self.0 >> 3) & 1) as f64;
        let f01 = ((self.0 >> 2) & 1) as f64;
        let f10 = ((self.0 >> 1) & 1) as f64;
        let f11 = (self.0 & 1) as f64;
        [f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00]
    }

    /// The opcode `op'` with `op'(a, b) = self(!a, b)` (or `self(a, !b)`).
    pub fn negate_input(self, which: InputSide) -> Self {
        let tt = self.truth_table();
        let permuted = match which {
            InputSide::A => [tt[2], tt[3], tt[0], tt[1]],
            InputSide::B => [tt[1], tt[0], tt[3], tt[2]],
        };
        Self::from_truth_table(permuted)
    }

    /// The opcode with operands exchanged: `op'(a, b) = self(b, a)`.
    pub fn swap_inputs(self) -> Self {
        let tt = self.truth_table();
        Self::from_truth_table([tt[0], tt[2], tt[1], tt[3]])
    }

    /// Output as a function of `b` when `a` is fixed to `value`: `(f(0), f(1))`.
    pub fn restrict_a(self, value: bool) -> (bool, bool) {
        (self.eval_hard(value, false), self.eval_hard(value, true))
    }

    /// Output as a function of `a` when `b` is fixed to `value`.
    pub fn restrict_b(self, value: bool) -> (bool, bool) {
        (self.eval_hard(false, value), self.eval_hard(true, value))
    }

    pub fn depends_on_a(self) -> bool {
        let tt = self.truth_table();
        tt[0] != tt[2] || tt[1] != tt[3]
    }

    pub fn depends_on_b(self) -> bool {
        let tt = self.truth_table();
        tt[0] != tt[1] || tt[2] != tt[3]
    }
}

impl fmt::Display for GateOpcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateOpcode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(s))
            .map(|i| GateOpcode(i as u8))
            .ok_or_else(|| Error::Config(alloc::format!("unknown gate `{s}`")))
    }
}

/// Elementwise connective joining a skip block's input with its transformed output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SkipConnective {
    And,
    Or,
    Xnor,
    NotB,
    #[default]
    Implication,
    /// Per-position 16-way mixture, trained like any other gate.
    Learned,
}

impl SkipConnective {
    pub fn opcode(self) -> Option<GateOpcode> {
        match self {
            SkipConnective::And => Some(GateOpcode::AND),
            SkipConnective::Or => Some(GateOpcode::OR),
            SkipConnective::Xnor => Some(GateOpcode::XNOR),
            SkipConnective::NotB => Some(GateOpcode::NOT_B),
            SkipConnective::Implication => Some(GateOpcode::NOT_A_OR_B),
            SkipConnective::Learned => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SkipConnective::And => 0,
            SkipConnective::Or => 1,
            SkipConnective::Xnor => 2,
            SkipConnective::NotB => 3,
            SkipConnective::Implication => 4,
            SkipConnective::Learned => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => SkipConnective::And,
            1 => SkipConnective::Or,
            2 => SkipConnective::Xnor,
            3 => SkipConnective::NotB,
            4 => SkipConnective::Implication,
            5 => SkipConnective::Learned,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SkipConnective::And => "and",
            SkipConnective::Or => "or",
            SkipConnective::Xnor => "xnor",
            SkipConnective::NotB => "not_b",
            SkipConnective::Implication => "implication",
            SkipConnective::Learned => "learned",
        }
    }
}

impl FromStr for SkipConnective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "and" => SkipConnective::And,
            "or" => SkipConnective::Or,
            "xnor" => SkipConnective::Xnor,
            "not_b" | "notb" => SkipConnective::NotB,
            "implication" | "implies" | "not_a_or_b" => SkipConnective::Implication,
            "learned" => SkipConnective::Learned,
            _ => return Err(Error::Config(alloc::format!("unknown skip connective `{s}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Row = ([u8; 4], fn(f64, f64) -> f64);

    // Truth columns and arithmetic forms transcribed row by row from the
    // reference table of two-input functions.
    const TABLE: [Row; 16] = [
        ([0, 0, 0, 0], |_, _| 0.0),
        ([0, 0, 0, 1], |a, b| a * b),
        ([0, 0, 1, 0], |a, b| a - a * b),
        ([0, 0, 1, 1], |a, _| a),
        ([0, 1, 0, 0], |a, b| b - a * b),
        ([0, 1, 0, 1], |_, b| b),
        ([0, 1, 1, 0], |a, b| a + b - 2.0 * a * b),
        ([0, 1, 1, 1], |a, b| a + b - a * b),
        ([1, 0, 0, 0], |a, b| 1.0 - (a + b - a * b)),
        ([1, 0, 0, 1], |a, b| 1.0 - (a + b - 2.0 * a * b)),
        ([1, 0, 1, 0], |_, b| 1.0 - b),
        ([1, 0, 1, 1], |a, b| 1.0 - b + a * b),
        ([1, 1, 0, 0], |a, _| 1.0 - a),
        ([1, 1, 0, 1], |a, b| 1.0 - a + a * b),
        ([1, 1, 1, 0], |a, b| 1.0 - a * b),
        ([1, 1, 1, 1], |_, _| 1.0),
    ];

    #[test]
    fn truth_tables_match_reference_rows() {
        for (op, (tt, _)) in GateOpcode::all().zip(TABLE.iter()) {
            assert_eq!(op.truth_table(), tt.map(|x| x == 1), "{op}");
        }
        assert!(GateOpcode::AND.eval_hard(true, true));
        assert!(!GateOpcode::XOR.eval_hard(true, true));
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            assert!(!GateOpcode::FALSE.eval_hard(a, b));
        }
    }

    #[test]
    fn soft_forms_match_reference_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (op, (_, form)) in GateOpcode::all().zip(TABLE.iter()) {
            for _ in 0..50 {
                let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
                assert!((op.eval_soft(a, b) - form(a, b)).abs() < 1e-15, "{op}");
            }
        }
        assert_eq!(GateOpcode::AND.eval_soft(0.5, 0.5), 0.25);
        assert_eq!(GateOpcode::NOT_A_OR_B.eval_soft(1.0, 1.0), 1.0);
        assert_eq!(GateOpcode::XOR.eval_soft(0.5, 0.5), 0.5);
    }

    #[test]
    fn soft_equals_hard_at_corners() {
        for op in GateOpcode::all() {
            for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                let soft: f64 = op.eval_soft(a as u8 as f64, b as u8 as f64);
                assert_eq!(soft, op.eval_hard(a, b) as u8 as f64);
            }
        }
    }

    #[test]
    fn word_eval_matches_hard() {
        let a = 0b0011u64;
        let b = 0b0101u64;
        for op in GateOpcode::all() {
            let w = op.eval_word(a, b);
            for lane in 0..4 {
                let expect = op.eval_hard((a >> lane) & 1 == 1, (b >> lane) & 1 == 1);
                assert_eq!((w >> lane) & 1 == 1, expect, "{op} lane {lane}");
            }
        }
    }

    #[test]
    fn gradients_examples() {
        assert_eq!(GateOpcode::AND.grad_soft(0.3, 0.7), (0.7, 0.3));
        assert_eq!(GateOpcode::TRUE.grad_soft(0.2, 0.9), (0.0, 0.0));
        let (da, db) = GateOpcode::NOT_A_OR_B.grad_soft(0.25, 0.6);
        assert!((da - (0.6 - 1.0)).abs() < 1e-15);
        assert_eq!(db, 0.25);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for op in GateOpcode::all() {
            for _ in 0..100 {
                let a = rng.random_range(0.05..0.95);
                let b = rng.random_range(0.05..0.95);
                let fd_a = (op.eval_soft(a + h, b) - op.eval_soft(a - h, b)) / (2.0 * h);
                let fd_b = (op.eval_soft(a, b + h) - op.eval_soft(a, b - h)) / (2.0 * h);
                let (ga, gb) = op.grad_soft(a, b);
                for (g, fd) in [(ga, fd_a), (gb, fd_b)] {
                    let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-12);
                    assert!(g == fd || err < 1e-6, "{op}: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn negation_examples_and_closure() {
        assert_eq!(GateOpcode::AND.negate_input(InputSide::A), GateOpcode::NOT_A_AND_B);
        assert_eq!(GateOpcode::TRUE.negate_input(InputSide::B), GateOpcode::TRUE);
        for side in [InputSide::A, InputSide::B] {
            let mut seen = [false; 16];
            for op in GateOpcode::all() {
                let n = op.negate_input(side);
                assert_eq!(n.negate_input(side), op);
                seen[n.index() as usize] = true;
                for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                    let expect = match side {
                        InputSide::A => op.eval_hard(!a, b),
                        InputSide::B => op.eval_hard(a, !b),
                    };
                    assert_eq!(n.eval_hard(a, b), expect);
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn names_round_trip() {
        for op in GateOpcode::all() {
            assert_eq!(op.name().parse::<GateOpcode>().unwrap(), op);
        }
        assert!("MAYBE".parse::<GateOpcode>().is_err());
    }

    #[test]
    fn skip_connectives_map_to_opcodes() {
        assert_eq!(SkipConnective::default(), SkipConnective::Implication);
        assert_eq!(SkipConnective::Implication.opcode(), Some(GateOpcode::NOT_A_OR_B));
        assert_eq!(SkipConnective::NotB.opcode(), Some(GateOpcode::NOT_B));
        for code in 0..6 {
            let c = SkipConnective::from_code(code).unwrap();
            assert_eq!(c.code(), code);
            assert_eq!(c.name().parse::<SkipConnective>().unwrap(), c);
        }
    }
}
