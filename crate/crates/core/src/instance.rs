//! LP data: the constraint system `Ax ≤ b` and the objective `max cᵀx`.
//!
//! Text format, one instance per file:
//!
//! ```text
//! n d
//! a_11 ... a_1d b_1
//! ...
//! a_n1 ... a_nd b_n
//! c_1 ... c_d
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{dot, DenseMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The feasible set `{x : Ax ≤ b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl Polyhedron {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self, InstanceError> {
        if b.len() != a.rows() {
            return Err(InstanceError::Shape(format!("A has {} rows but b has {} entries", a.rows(), b.len())));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::NonFinite("b"));
        }
        Ok(Self { a, b })
    }

    /// Number of constraints.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Number of variables.
    pub fn d(&self) -> usize {
        self.a.cols()
    }

    /// `b_i - a_iᵀx`
    #[inline]
    pub fn slack(&self, i: usize, x: &[f64]) -> f64 {
        self.b[i] - dot(self.a.row(i), x)
    }

    /// Largest constraint violation `max_i (a_iᵀx - b_i)`, or `-inf` when empty.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.n()).map(|i| -self.slack(i, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n()).all(|i| self.slack(i, x) >= -tol)
    }

    /// Both `A` and `b` multiplied by `factor`; the feasible set is unchanged
    /// for positive factors.
    pub fn scaled(&self, factor: f64) -> Polyhedron {
        Polyhedron { a: self.a.scale(factor), b: self.b.iter().map(|v| v * factor).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub polyhedron: Polyhedron,
    pub c: Vec<f64>,
}

impl LpInstance {
    pub fn new(polyhedron: Polyhedron, c: Vec<f64>) -> Result<Self, InstanceError> {
        if c.len() != polyhedron.d() {
            return Err(InstanceError::Shape(format!("c has {} entries but d = {}", c.len(), polyhedron.d())));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::NonFinite("c"));
        }
        Ok(Self { polyhedron, c })
    }

    pub fn from_parts(a: DenseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self, InstanceError> {
        Self::new(Polyhedron::new(a, b)?, c)
    }

    pub fn n(&self) -> usize {
        self.polyhedron.n()
    }

    pub fn d(&self) -> usize {
        self.polyhedron.d()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.polyhedron.a
    }

    pub fn b(&self) -> &[f64] {
        &self.polyhedron.b
    }

    pub fn parse(text: &str) -> Result<Self, InstanceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(InstanceError::Parse { line: 1, message: "empty file".into() })?;
        let dims = parse_numbers::<usize>(hline, header)?;
        let [n, d] = dims[..] else {
            return Err(InstanceError::Parse { line: hline, message: format!("expected `n d`, got {} values", dims.len()) });
        };
        if d == 0 {
            return Err(InstanceError::Parse { line: hline, message: "d must be positive".into() });
        }

        let mut a = Vec::with_capacity(n * d);
        let mut b = Vec::with_capacity(n);
        for row in 0..n {
            let (line, content) = lines.next().ok_or(InstanceError::Parse {
                line: hline,
                message: format!("expected {n} constraint rows, found {row}"),
            })?;
            let vals = parse_numbers::<f64>(line, content)?;
            if vals.len() != d + 1 {
                return Err(InstanceError::Parse { line, message: format!("expected {} values, got {}", d + 1, vals.len()) });
            }
            a.extend_from_slice(&vals[..d]);
            b.push(vals[d]);
        }
        let (cline, content) = lines.next().ok_or(InstanceError::Parse { line: hline, message: "missing objective row".into() })?;
        let c = parse_numbers::<f64>(cline, content)?;
        if c.len() != d {
            return Err(InstanceError::Parse { line: cline, message: format!("expected {d} objective values, got {}", c.len()) });
        }
        if let Some((line, _)) = lines.next() {
            return Err(InstanceError::Parse { line, message: "trailing content after objective row".into() });
        }
        let a = DenseMatrix::new(n, d, a).map_err(|e| InstanceError::Parse { line: hline, message: e.to_string() })?;
        Self::from_parts(a, b, c)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n(), self.d());
        for i in 0..self.n() {
            let mut fields: Vec<String> = self.a().row(i).iter().map(|v| format!("{v:?}")).collect();
            fields.push(format!("{:?}", self.b()[i]));
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        let c: Vec<String> = self.c.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", c.join(" "));
        out
    }
}

fn parse_numbers<T: std::str::FromStr>(line: usize, content: &str) -> Result<Vec<T>, InstanceError> {
    content
        .split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| InstanceError::Parse { line, message: format!("cannot parse `{tok}`") }))
        .collect()
}

/// The box `-1 ≤ x_i ≤ 1` in `d` dimensions with objective `c`.
pub fn unit_box(d: usize, c: Vec<f64>) -> LpInstance {
    let mut rows = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut r = vec![0.0; d];
        r[i] = 1.0;
        rows.push(r.clone());
        r[i] = -1.0;
        rows.push(r);
    }
    LpInstance::from_parts(DenseMatrix::from_rows(&rows).unwrap(), vec![1.0; 2 * d], c).unwrap()
}
