//! Algebraic intermediate representation: execution traces, constraint
//! expressions and the machinery to check a trace against a constraint
//! system row by row.
//!
//! A trace is a rectangular grid of field elements, one column per
//! register and one row per step; its length is a power of two so it can
//! be interpolated over a multiplicative subgroup. Constraints come in two
//! kinds: *transitions*, polynomial relations between a row and its
//! successor that are switched on per-row by a public 0/1 mask column, and
//! *boundaries*, which pin a single cell to a public value. Masks and
//! periodic columns (e.g. round-constant schedules) are public: both
//! prover and verifier derive them from the statement, so they are never
//! committed.
//!
//! The concrete constraint system for credential predicates lives in
//! [`predicate`].

pub mod predicate;

use thiserror::Error;

use crate::field::Felt;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AirError {
    /// Parameter set fails validation (sizes, powers of two, ranges).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// A statement is inconsistent with the parameter set.
    #[error("invalid statement: {0}")]
    InvalidStatement(String),
    /// Witness vectors have the wrong shape for the parameters.
    #[error("witness shape does not match parameters")]
    WitnessShape,
    /// An attribute value does not fit in the configured bit range.
    #[error("attribute {index} exceeds the {bits}-bit range")]
    AttributeOutOfRange { index: usize, bits: u8 },
    /// The claimed attribute is below the stated threshold.
    #[error("attribute does not meet the threshold")]
    PredicateUnsatisfied,
    /// The membership path does not lead to the stated root.
    #[error("membership path does not match the stated root")]
    MembershipMismatch,
    /// A trace has the wrong column count or length for the air.
    #[error("trace shape does not match the constraint system")]
    ColumnMismatch,
    /// A constraint evaluated to a nonzero value on some row.
    #[error("constraint `{name}` violated at row {row}")]
    ConstraintViolation { name: String, row: usize },
}

/// Column-major execution trace. Length is fixed at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    columns: Vec<Vec<Felt>>,
    length: usize,
}

impl Trace {
    /// An all-zero trace with the given shape. `length` must be a power
    /// of two.
    pub fn new(num_columns: usize, length: usize) -> Trace {
        assert!(length.is_power_of_two(), "trace length must be a power of two");
        Trace {
            columns: vec![vec![Felt::ZERO; length]; num_columns],
            length,
        }
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn cell(&self, column: usize, row: usize) -> Felt {
        self.columns[column][row]
    }

    pub fn set(&mut self, column: usize, row: usize, value: Felt) {
        self.columns[column][row] = value;
    }

    pub fn column(&self, column: usize) -> &[Felt] {
        &self.columns[column]
    }

    /// Copies row `row` into `out` (one slot per column).
    pub fn read_row(&self, row: usize, out: &mut [Felt]) {
        for (c, col) in self.columns.iter().enumerate() {
            out[c] = col[row];
        }
    }
}

/// A multivariate polynomial over the cells of two adjacent trace rows,
/// public periodic columns and public inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(Felt),
    /// Column value on the current row.
    Cur(usize),
    /// Column value on the next row.
    Next(usize),
    /// Public periodic column value on the current row.
    Periodic(usize),
    /// Public input by index.
    Pub(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

/// Current-row column reference.
pub fn cur(column: usize) -> Expr {
    Expr::Cur(column)
}

/// Next-row column reference.
pub fn next(column: usize) -> Expr {
    Expr::Next(column)
}

/// Constant expression.
pub fn konst(value: u64) -> Expr {
    Expr::Const(Felt::new(value))
}

impl Expr {
    pub fn pow(self, exp: u32) -> Expr {
        Expr::Pow(Box::new(self), exp)
    }

    /// Evaluates the expression against one row pair.
    pub fn eval(&self, cur: &[Felt], next: &[Felt], periodic: &[Felt], pubs: &[Felt]) -> Felt {
        match self {
            Expr::Const(v) => *v,
            Expr::Cur(c) => cur[*c],
            Expr::Next(c) => next[*c],
            Expr::Periodic(i) => periodic[*i],
            Expr::Pub(i) => pubs[*i],
            Expr::Add(a, b) => a.eval(cur, next, periodic, pubs) + b.eval(cur, next, periodic, pubs),
            Expr::Sub(a, b) => a.eval(cur, next, periodic, pubs) - b.eval(cur, next, periodic, pubs),
            Expr::Mul(a, b) => a.eval(cur, next, periodic, pubs) * b.eval(cur, next, periodic, pubs),
            Expr::Pow(a, e) => a.eval(cur, next, periodic, pubs).pow(*e as u64),
        }
    }

    /// Total degree, counting every column reference (current, next or
    /// periodic) as degree 1.
    pub fn degree(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Pub(_) => 0,
            Expr::Cur(_) | Expr::Next(_) | Expr::Periodic(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) => a.degree().max(b.degree()),
            Expr::Mul(a, b) => a.degree() + b.degree(),
            Expr::Pow(a, e) => a.degree() * (*e as usize),
        }
    }

    fn max_column(&self) -> Option<usize> {
        match self {
            Expr::Cur(c) | Expr::Next(c) => Some(*c),
            Expr::Const(_) | Expr::Periodic(_) | Expr::Pub(_) => None,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_column().max(b.max_column()),
            Expr::Pow(a, _) => a.max_column(),
        }
    }

    fn max_periodic(&self) -> Option<usize> {
        match self {
            Expr::Periodic(i) => Some(*i),
            Expr::Const(_) | Expr::Cur(_) | Expr::Next(_) | Expr::Pub(_) => None,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.max_periodic().max(b.max_periodic())
            }
            Expr::Pow(a, _) => a.max_periodic(),
        }
    }

    fn max_pub(&self) -> Option<usize> {
        match self {
            Expr::Pub(i) => Some(*i),
            Expr::Const(_) | Expr::Cur(_) | Expr::Next(_) | Expr::Periodic(_) => None,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_pub().max(b.max_pub()),
            Expr::Pow(a, _) => a.max_pub(),
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

/// A masked transition constraint: on every row where the mask column is
/// nonzero, `expr` must evaluate to zero against (row, row + 1).
#[derive(Clone, Debug)]
pub struct Transition {
    pub name: String,
    /// Index into [`Air::masks`].
    pub mask: usize,
    pub expr: Expr,
}

/// A boundary constraint pinning one cell to a public value.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub name: String,
    pub column: usize,
    pub row: usize,
    pub value: Felt,
}

/// A complete constraint system over a fixed trace shape.
#[derive(Clone, Debug)]
pub struct Air {
    pub trace_length: usize,
    pub num_columns: usize,
    /// Public 0/1 selector columns, each of length `trace_length`.
    pub masks: Vec<Vec<Felt>>,
    /// Public value columns (round-constant schedules and the like).
    pub periodics: Vec<Vec<Felt>>,
    /// Public scalar inputs referenced by `Expr::Pub`.
    pub public_inputs: Vec<Felt>,
    pub transitions: Vec<Transition>,
    pub boundaries: Vec<Boundary>,
}

impl Air {
    /// Structural validation: shapes line up, indices are in range, masks
    /// are boolean and never select the final row (which has no successor
    /// inside the domain).
    pub fn validate(&self) -> Result<(), AirError> {
        let n = self.trace_length;
        if !n.is_power_of_two() {
            return Err(AirError::InvalidParams("trace length must be a power of two".into()));
        }
        for (i, m) in self.masks.iter().enumerate() {
            if m.len() != n {
                return Err(AirError::InvalidParams(format!("mask {i} has wrong length")));
            }
            if m.iter().any(|&v| v != Felt::ZERO && v != Felt::ONE) {
                return Err(AirError::InvalidParams(format!("mask {i} is not boolean")));
            }
            if m[n - 1] != Felt::ZERO {
                return Err(AirError::InvalidParams(format!("mask {i} selects the final row")));
            }
        }
        for (i, p) in self.periodics.iter().enumerate() {
            if p.len() != n {
                return Err(AirError::InvalidParams(format!("periodic {i} has wrong length")));
            }
        }
        for t in &self.transitions {
            if t.mask >= self.masks.len() {
                return Err(AirError::InvalidParams(format!("constraint `{}` uses unknown mask", t.name)));
            }
            if t.expr.max_column().is_some_and(|c| c >= self.num_columns) {
                return Err(AirError::InvalidParams(format!("constraint `{}` uses unknown column", t.name)));
            }
            if t.expr.max_periodic().is_some_and(|i| i >= self.periodics.len()) {
                return Err(AirError::InvalidParams(format!("constraint `{}` uses unknown periodic", t.name)));
            }
            if t.expr.max_pub().is_some_and(|i| i >= self.public_inputs.len()) {
                return Err(AirError::InvalidParams(format!("constraint `{}` uses unknown public input", t.name)));
            }
        }
        for b in &self.boundaries {
            if b.column >= self.num_columns || b.row >= n {
                return Err(AirError::InvalidParams(format!("boundary `{}` out of range", b.name)));
            }
        }
        Ok(())
    }

    /// Largest transition-constraint degree; drives the composition
    /// polynomial's degree budget.
    pub fn max_constraint_degree(&self) -> usize {
        self.transitions.iter().map(|t| t.expr.degree()).max().unwrap_or(0)
    }

    /// Periodic-column values on one row, gathered for [`Expr::eval`].
    pub fn periodic_row(&self, row: usize, out: &mut [Felt]) {
        for (i, p) in self.periodics.iter().enumerate() {
            out[i] = p[row];
        }
    }

    /// Checks every constraint on every row of a concrete trace. This is
    /// the ground-truth notion of validity that the proof system argues;
    /// the prover runs it before committing.
    pub fn check_trace(&self, trace: &Trace) -> Result<(), AirError> {
        if trace.num_columns() != self.num_columns || trace.length() != self.trace_length {
            return Err(AirError::ColumnMismatch);
        }
        let n = self.trace_length;
        let mut cur_row = vec![Felt::ZERO; self.num_columns];
        let mut next_row = vec![Felt::ZERO; self.num_columns];
        let mut per_row = vec![Felt::ZERO; self.periodics.len()];
        for row in 0..n - 1 {
            trace.read_row(row, &mut cur_row);
            trace.read_row(row + 1, &mut next_row);
            self.periodic_row(row, &mut per_row);
            for t in &self.transitions {
                if self.masks[t.mask][row] == Felt::ZERO {
                    continue;
                }
                let v = t.expr.eval(&cur_row, &next_row, &per_row, &self.public_inputs);
                if v != Felt::ZERO {
                    return Err(AirError::ConstraintViolation {
                        name: t.name.clone(),
                        row,
                    });
                }
            }
        }
        for b in &self.boundaries {
            if trace.cell(b.column, b.row) != b.value {
                return Err(AirError::ConstraintViolation {
                    name: b.name.clone(),
                    row: b.row,
                });
            }
        }
        Ok(())
    }
}
