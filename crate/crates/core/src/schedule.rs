//! Bilinear instruction schedules for block matrix multiplication.
//!
//! An instruction `m_i` multiplies a signed sum of A-tiles (its LHS) by a
//! signed sum of B-tiles (its RHS) and adds the product, with a sign, into
//! one or more C-tiles. A schedule is correct when, expanded symbolically,
//! every `C[r][c]` receives exactly `sum_p A[r][p] * B[p][c]`.
//!
//! Two-level schedules are built by [`compose`], the tensor product of two
//! one-level schedules; `compose(base, base)` is Strassen squared with 49
//! instructions over a 4x4 grid.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// `sign * X[row][col]` for one of the three operand matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedOperand {
    pub row: usize,
    pub col: usize,
    pub sign: Sign,
}

impl SignedOperand {
    pub const fn new(row: usize, col: usize, sign: Sign) -> Self {
        SignedOperand { row, col, sign }
    }

    pub const fn plus(row: usize, col: usize) -> Self {
        Self::new(row, col, Sign::Plus)
    }

    pub const fn minus(row: usize, col: usize) -> Self {
        Self::new(row, col, Sign::Minus)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrassenInstruction {
    pub lhs: Vec<SignedOperand>,
    pub rhs: Vec<SignedOperand>,
    pub outputs: Vec<SignedOperand>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    grid_dim: usize,
    instructions: Vec<StrassenInstruction>,
}

impl Schedule {
    pub fn new(grid_dim: usize, instructions: Vec<StrassenInstruction>) -> Self {
        Schedule { grid_dim, instructions }
    }

    pub fn grid_dim(&self) -> usize {
        self.grid_dim
    }

    /// Recursion depth: 1 for a 2x2 grid, 2 for a 4x4 grid.
    pub fn level(&self) -> u32 {
        self.grid_dim.max(1).trailing_zeros()
    }

    pub fn instructions(&self) -> &[StrassenInstruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn verify(&self) -> VerificationReport {
        verify_schedule(self)
    }

    /// One instruction per line, each `{"lhs":[[r,c,s],..],"rhs":[..],"out":[..]}`.
    pub fn to_json(&self) -> String {
        let mut s = String::from("[\n");
        for (i, ins) in self.instructions.iter().enumerate() {
            let json = InstructionJson::from(ins);
            s.push_str("  ");
            s.push_str(&serde_json::to_string(&json).expect("plain integer arrays"));
            if i + 1 < self.instructions.len() {
                s.push(',');
            }
            s.push('\n');
        }
        s.push_str("]\n");
        s
    }

    /// Parses the [`Schedule::to_json`] format. The grid dimension is the
    /// smallest power of two covering every index.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<InstructionJson> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schedule json: {e}")))?;
        let mut max_idx = 0usize;
        let mut instructions = Vec::with_capacity(raw.len());
        for ins in raw {
            let conv = |ops: Vec<[i64; 3]>| -> Result<Vec<SignedOperand>> {
                ops.into_iter()
                    .map(|[r, c, s]| {
                        let sign = Sign::from_i64(s).ok_or_else(|| Error::Config(format!("sign {s} is not +1/-1")))?;
                        let (r, c) = (usize::try_from(r), usize::try_from(c));
                        match (r, c) {
                            (Ok(r), Ok(c)) => Ok(SignedOperand::new(r, c, sign)),
                            _ => Err(Error::Config("negative tile index".into())),
                        }
                    })
                    .collect()
            };
            let ins = StrassenInstruction {
                lhs: conv(ins.lhs)?,
                rhs: conv(ins.rhs)?,
                outputs: conv(ins.out)?,
            };
            for op in ins.lhs.iter().chain(&ins.rhs).chain(&ins.outputs) {
                max_idx = max_idx.max(op.row).max(op.col);
            }
            instructions.push(ins);
        }
        let grid_dim = (max_idx + 1).next_power_of_two().max(2);
        Ok(Schedule::new(grid_dim, instructions))
    }
}

#[derive(Serialize, Deserialize)]
struct InstructionJson {
    lhs: Vec<[i64; 3]>,
    rhs: Vec<[i64; 3]>,
    out: Vec<[i64; 3]>,
}

impl From<&StrassenInstruction> for InstructionJson {
    fn from(ins: &StrassenInstruction) -> Self {
        let conv = |ops: &[SignedOperand]| {
            ops.iter()
                .map(|o| [o.row as i64, o.col as i64, o.sign.as_i32() as i64])
                .collect()
        };
        InstructionJson {
            lhs: conv(&ins.lhs),
            rhs: conv(&ins.rhs),
            out: conv(&ins.outputs),
        }
    }
}

fn ins(lhs: &[SignedOperand], rhs: &[SignedOperand], outputs: &[SignedOperand]) -> StrassenInstruction {
    StrassenInstruction {
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
        outputs: outputs.to_vec(),
    }
}

/// Strassen's 1969 seven-product schedule over a 2x2 grid.
pub fn base_schedule() -> Schedule {
    use SignedOperand as O;
    let (p, m) = (O::plus, O::minus);
    Schedule::new(
        2,
        vec![
            // (A00 + A11)(B00 + B11)
            ins(&[p(0, 0), p(1, 1)], &[p(0, 0), p(1, 1)], &[p(0, 0), p(1, 1)]),
            // (A10 + A11) B00
            ins(&[p(1, 0), p(1, 1)], &[p(0, 0)], &[p(1, 0), m(1, 1)]),
            // A00 (B01 - B11)
            ins(&[p(0, 0)], &[p(0, 1), m(1, 1)], &[p(0, 1), p(1, 1)]),
            // A11 (B10 - B00)
            ins(&[p(1, 1)], &[p(1, 0), m(0, 0)], &[p(0, 0), p(1, 0)]),
            // (A00 + A01) B11
            ins(&[p(0, 0), p(0, 1)], &[p(1, 1)], &[m(0, 0), p(0, 1)]),
            // (A10 - A00)(B00 + B01)
            ins(&[p(1, 0), m(0, 0)], &[p(0, 0), p(0, 1)], &[p(1, 1)]),
            // (A01 - A11)(B10 + B11)
            ins(&[p(0, 1), m(1, 1)], &[p(1, 0), p(1, 1)], &[p(0, 0)]),
        ],
    )
}

/// The `grid_dim^3` single-operand schedule, ordered by (row, col, inner).
pub fn standard_schedule(grid_dim: usize) -> Schedule {
    let mut instructions = Vec::with_capacity(grid_dim.pow(3));
    for r in 0..grid_dim {
        for c in 0..grid_dim {
            for p in 0..grid_dim {
                instructions.push(ins(
                    &[SignedOperand::plus(r, p)],
                    &[SignedOperand::plus(p, c)],
                    &[SignedOperand::plus(r, c)],
                ));
            }
        }
    }
    Schedule::new(grid_dim, instructions)
}

/// Strassen squared: `compose(base, base)`, 49 instructions over 4x4 tiles.
pub fn strassen2() -> Schedule {
    compose(&base_schedule(), &base_schedule()).expect("base schedule verifies")
}

/// One Strassen level on the outer 2x2 blocks, standard products inside:
/// 56 instructions over 4x4 tiles.
pub fn strassen1() -> Schedule {
    compose(&base_schedule(), &standard_schedule(2)).expect("base and standard verify")
}

fn kron(outer: &[SignedOperand], inner: &[SignedOperand], inner_dim: usize) -> Vec<SignedOperand> {
    let mut out = Vec::with_capacity(outer.len() * inner.len());
    for o in outer {
        for i in inner {
            out.push(SignedOperand::new(
                o.row * inner_dim + i.row,
                o.col * inner_dim + i.col,
                o.sign * i.sign,
            ));
        }
    }
    out
}

/// Tensor product of two verified schedules. Instruction `i * |inner| + j`
/// pairs outer instruction `i` with inner instruction `j`; every operand list
/// is the cross product of the two, with tile index
/// `outer_index * inner.grid_dim + inner_index` and multiplied signs.
pub fn compose(outer: &Schedule, inner: &Schedule) -> Result<Schedule> {
    for (name, s) in [("outer", outer), ("inner", inner)] {
        let report = verify_schedule(s);
        if !report.passed() {
            return Err(Error::UnverifiedSchedule(format!("{name}: {report}")));
        }
    }
    let grid_dim = outer.grid_dim * inner.grid_dim;
    if grid_dim > 4 {
        return Err(Error::Config(format!(
            "composed grid {grid_dim}x{grid_dim}; at most two levels (4x4) are supported"
        )));
    }
    let d = inner.grid_dim;
    let mut instructions = Vec::with_capacity(outer.len() * inner.len());
    for o in &outer.instructions {
        for i in &inner.instructions {
            instructions.push(StrassenInstruction {
                lhs: kron(&o.lhs, &i.lhs, d),
                rhs: kron(&o.rhs, &i.rhs, d),
                outputs: kron(&o.outputs, &i.outputs, d),
            });
        }
    }
    Ok(Schedule::new(grid_dim, instructions))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub output: (usize, usize),
    pub lhs: (usize, usize),
    pub rhs: (usize, usize),
    pub expected: i64,
    pub actual: i64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C{}{}: A{}{}*B{}{} has coefficient {} (expected {})",
            self.output.0, self.output.1, self.lhs.0, self.lhs.1, self.rhs.0, self.rhs.1, self.actual, self.expected
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    /// Malformed instructions (index range, duplicates, operand counts).
    pub structural: Vec<String>,
    /// Monomials whose expanded coefficient is wrong.
    pub discrepancies: Vec<Discrepancy>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.structural.is_empty() && self.discrepancies.is_empty()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("ok");
        }
        let mut first = true;
        for s in &self.structural {
            if !first {
                f.write_str("; ")?;
            }
            f.write_str(s)?;
            first = false;
        }
        for d in &self.discrepancies {
            if !first {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
            first = false;
        }
        Ok(())
    }
}

fn allowed_sizes(grid_dim: usize) -> &'static [usize] {
    match grid_dim {
        2 => &[1, 2],
        4 => &[1, 2, 4],
        _ => &[],
    }
}

/// Expands every instruction over formal non-commuting tile symbols and
/// compares the coefficient of each `A[a] * B[b]` in each `C[c]` against
/// block GeMM. Failures are reported, never raised.
pub fn verify_schedule(s: &Schedule) -> VerificationReport {
    let mut report = VerificationReport::default();
    let g = s.grid_dim;
    let sizes = allowed_sizes(g);
    if sizes.is_empty() {
        report.structural.push(format!("grid dimension {g} (expected 2 or 4)"));
        return report;
    }

    let mut covered = vec![false; g * g];
    for (idx, ins) in s.instructions.iter().enumerate() {
        for (name, ops) in [("lhs", &ins.lhs), ("rhs", &ins.rhs), ("out", &ins.outputs)] {
            if !sizes.contains(&ops.len()) {
                report
                    .structural
                    .push(format!("m{idx}: {} {name} operands (allowed {sizes:?})", ops.len()));
            }
            for (k, op) in ops.iter().enumerate() {
                if op.row >= g || op.col >= g {
                    report.structural.push(format!(
                        "m{idx}: {name} tile ({}, {}) outside {g}x{g} grid",
                        op.row, op.col
                    ));
                }
                if ops[..k].iter().any(|o| (o.row, o.col) == (op.row, op.col)) {
                    report
                        .structural
                        .push(format!("m{idx}: duplicate {name} tile ({}, {})", op.row, op.col));
                }
            }
        }
        for op in &ins.outputs {
            if op.row < g && op.col < g {
                covered[op.row * g + op.col] = true;
            }
        }
    }
    for (i, c) in covered.iter().enumerate() {
        if !c {
            report.structural.push(format!("C{}{} is never written", i / g, i % g));
        }
    }
    if !report.structural.is_empty() {
        return report;
    }

    // coeff[(c, a, b)] for C-tile c, A-tile a, B-tile b (flattened indices)
    let n = g * g;
    let mut coeff = vec![0i64; n * n * n];
    for ins in &s.instructions {
        for o in &ins.outputs {
            for l in &ins.lhs {
                for r in &ins.rhs {
                    let key = ((o.row * g + o.col) * n + l.row * g + l.col) * n + r.row * g + r.col;
                    coeff[key] += (o.sign * l.sign * r.sign).as_i32() as i64;
                }
            }
        }
    }
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let (cr, cc) = (c / g, c % g);
                let (ar, ac) = (a / g, a % g);
                let (br, bc) = (b / g, b % g);
                let expected = (ar == cr && bc == cc && ac == br) as i64;
                let actual = coeff[(c * n + a) * n + b];
                if actual != expected {
                    report.discrepancies.push(Discrepancy {
                        output: (cr, cc),
                        lhs: (ar, ac),
                        rhs: (br, bc),
                        expected,
                        actual,
                    });
                }
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub multiplications: usize,
    pub lhs_adds: usize,
    pub rhs_adds: usize,
    pub output_accumulations: usize,
}

pub fn op_count_report(s: &Schedule) -> OpCounts {
    let ins = &s.instructions;
    OpCounts {
        multiplications: ins.len(),
        lhs_adds: ins.iter().map(|i| i.lhs.len().saturating_sub(1)).sum(),
        rhs_adds: ins.iter().map(|i| i.rhs.len().saturating_sub(1)).sum(),
        output_accumulations: ins.iter().map(|i| i.outputs.len()).sum(),
    }
}

/// Histogram of operand-list lengths, keyed by length.
pub fn size_histogram(s: &Schedule, pick: impl Fn(&StrassenInstruction) -> usize) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for ins in &s.instructions {
        *h.entry(pick(ins)).or_default() += 1;
    }
    h
}
