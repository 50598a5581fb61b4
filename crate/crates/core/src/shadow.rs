//! Shadow vertex pivot engine.
//!
//! Starting from a feasible basis optimal for `y`, the walk keeps the current
//! basis optimal for `y_λ = (1 - λ)·y + λ·y2` while `λ` sweeps from 0 to 1.
//! Each pivot drops the basis row whose multiplier reaches zero first and
//! brings in the row that becomes tight along the freed edge.

use std::collections::HashSet;

use thiserror::Error;

use crate::instance::Polyhedron;
use crate::linalg::{dot, factorize, norm_inf, BasisFactorization, LinalgError};

/// Multipliers may dip this far below zero (relative) and still count as optimal.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Constraint violation accepted when asserting feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// `a_iᵀw` must be below `-DIRECTION_TOL` for row `i` to block an edge.
pub const DIRECTION_TOL: f64 = 1e-11;
/// Minimal λ advance that counts as progress.
pub const STALL_PROGRESS: f64 = 1e-12;
/// Ratio-test steps below this are treated as a violated precondition.
pub const NEGATIVE_STEP_TOL: f64 = 1e-9;
pub const DEFAULT_PIVOT_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("invalid basis {indices:?}: {reason}")]
    InvalidBasis { indices: Vec<usize>, reason: String },
    #[error("basis {indices:?} is singular")]
    Singular { indices: Vec<usize> },
    #[error("start basis is not optimal for the start objective (min multiplier {min_multiplier:e})")]
    NotOptimal { min_multiplier: f64 },
    #[error("no λ progress on two consecutive pivots at λ = {lambda}")]
    NumericalStall { lambda: f64 },
    #[error("ratio test produced negative step {step:e}")]
    NegativeStep { step: f64 },
    #[error("pivot limit {limit} exceeded")]
    PivotLimitExceeded { limit: usize },
    #[error("basis {indices:?} visited twice")]
    CycleDetected { indices: Vec<usize> },
}

/// A sorted set of `d` tight rows with its factorization and basic solution.
#[derive(Debug, Clone)]
pub struct Basis {
    indices: Vec<usize>,
    factorization: BasisFactorization,
    x: Vec<f64>,
}

impl Basis {
    pub fn new(poly: &Polyhedron, mut indices: Vec<usize>) -> Result<Self, ShadowError> {
        indices.sort_unstable();
        if indices.len() != poly.d() {
            return Err(ShadowError::InvalidBasis {
                reason: format!("expected {} indices", poly.d()),
                indices,
            });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) || indices.last().is_some_and(|&i| i >= poly.n()) {
            return Err(ShadowError::InvalidBasis { reason: "duplicate or out-of-range row".into(), indices });
        }
        let sub = poly.a.select_rows(&indices);
        let factorization = match factorize(&sub) {
            Ok(f) => f,
            Err(LinalgError::Singular { .. }) => return Err(ShadowError::Singular { indices }),
            Err(e) => return Err(ShadowError::InvalidBasis { indices, reason: e.to_string() }),
        };
        let rhs: Vec<f64> = indices.iter().map(|&i| poly.b[i]).collect();
        let x = factorization.solve(&rhs);
        Ok(Self { indices, factorization, x })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Basic solution `A_I⁻¹ b_I`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn factorization(&self) -> &BasisFactorization {
        &self.factorization
    }

    /// `A_I⁻ᵀ y`, ordered like [`Self::indices`].
    pub fn multipliers(&self, y: &[f64]) -> Vec<f64> {
        self.factorization.solve_transpose(y)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.binary_search(&row).is_ok()
    }

    pub fn position(&self, row: usize) -> Option<usize> {
        self.indices.binary_search(&row).ok()
    }

    pub fn is_feasible(&self, poly: &Polyhedron, tol: f64) -> bool {
        poly.contains(&self.x, tol)
    }

    pub fn is_optimal_for(&self, y: &[f64]) -> bool {
        let mu = self.multipliers(y);
        min_value(&mu) >= -OPTIMALITY_TOL * (1.0 + norm_inf(&mu))
    }
}

fn min_value(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Result of the breakpoint search on the current basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStep {
    pub lambda: f64,
    /// Row whose multiplier hits zero at `lambda`; `None` once `lambda` reaches 1.
    pub leaving: Option<usize>,
}

/// Largest `λ ∈ [lambda_lo, 1]` for which every multiplier of `y_λ` stays
/// nonnegative on `basis`.
pub fn max_lambda(basis: &Basis, y: &[f64], y2: &[f64], lambda_lo: f64) -> LambdaStep {
    let mu_y = basis.multipliers(y);
    let mu_y2 = basis.multipliers(y2);
    let mut best: Option<(f64, usize)> = None;
    for (pos, (&m0, &m1)) in mu_y.iter().zip(&mu_y2).enumerate() {
        let at_lo = (1.0 - lambda_lo) * m0 + lambda_lo * m1;
        let decrease = at_lo - m1;
        if m1 - m0 >= 0.0 || decrease <= 0.0 {
            continue;
        }
        let root = (lambda_lo + (1.0 - lambda_lo) * at_lo / decrease).max(lambda_lo);
        // strict comparison keeps the smallest row index on ties
        if best.is_none_or(|(b, _)| root < b) {
            best = Some((root, pos));
        }
    }
    match best {
        Some((lambda, pos)) if lambda < 1.0 => LambdaStep { lambda, leaving: Some(basis.indices[pos]) },
        _ => LambdaStep { lambda: 1.0, leaving: None },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioStep {
    /// `None` when no row blocks the edge.
    pub step: Option<f64>,
    pub entering: Option<usize>,
    /// Edge direction `-A_I⁻¹ e_j` obtained by relaxing the leaving row.
    pub direction: Vec<f64>,
}

/// Walks from `x_I` along the edge that relaxes `leaving` until the first
/// nonbasic row becomes tight.
pub fn ratio_test(poly: &Polyhedron, basis: &Basis, leaving: usize) -> Result<RatioStep, ShadowError> {
    let pos = basis.position(leaving).ok_or_else(|| ShadowError::InvalidBasis {
        indices: basis.indices.clone(),
        reason: format!("row {leaving} is not basic"),
    })?;
    let mut unit = vec![0.0; poly.d()];
    unit[pos] = 1.0;
    let w = basis.factorization.solve(&unit);
    let direction: Vec<f64> = w.iter().map(|v| -v).collect();

    let mut best: Option<(f64, usize)> = None;
    for i in 0..poly.n() {
        if basis.contains(i) {
            continue;
        }
        let aw = dot(poly.a.row(i), &w);
        if aw >= -DIRECTION_TOL {
            continue;
        }
        let step = poly.slack(i, &basis.x) / (-aw);
        if best.is_none_or(|(b, _)| step < b) {
            best = Some((step, i));
        }
    }
    match best {
        None => Ok(RatioStep { step: None, entering: None, direction }),
        Some((step, _)) if step < -NEGATIVE_STEP_TOL => Err(ShadowError::NegativeStep { step }),
        Some((step, i)) => Ok(RatioStep { step: Some(step.max(0.0)), entering: Some(i), direction }),
    }
}

#[derive(Debug, Clone)]
pub enum PivotOutcome {
    Advanced { basis: Basis, lambda: f64, leaving: usize, entering: usize, step: f64 },
    Finished(Basis),
    /// The edge freed by `leaving` at breakpoint `lambda` is an infinite ray
    /// from the current vertex.
    Unbounded { ray: Vec<f64>, from: Basis, leaving: usize, lambda: f64 },
}

/// Bases visited by one shadow walk and the breakpoints at which each became optimal.
#[derive(Debug, Clone)]
pub struct ShadowPath {
    pub bases: Vec<Basis>,
    pub lambdas: Vec<f64>,
    pub start_objective: Vec<f64>,
    pub end_objective: Vec<f64>,
}

impl ShadowPath {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn pivots(&self) -> usize {
        self.bases.len().saturating_sub(1)
    }

    pub fn index_sequence(&self) -> Vec<Vec<usize>> {
        self.bases.iter().map(|b| b.indices.clone()).collect()
    }

    pub fn last(&self) -> &Basis {
        self.bases.last().expect("shadow path is never empty")
    }
}

/// Incremental shadow vertex walk; [`ShadowWalk::step`] performs one pivot.
#[derive(Debug)]
pub struct ShadowWalk<'a> {
    poly: &'a Polyhedron,
    y: Vec<f64>,
    y2: Vec<f64>,
    basis: Basis,
    lambda: f64,
    path: ShadowPath,
    seen: HashSet<Vec<usize>>,
    stalls: usize,
    limit: usize,
}

impl<'a> ShadowWalk<'a> {
    pub fn new(poly: &'a Polyhedron, y: &[f64], y2: &[f64], start: Basis, limit: usize) -> Result<Self, ShadowError> {
        let mu = start.multipliers(y);
        let min_mu = min_value(&mu);
        if min_mu < -OPTIMALITY_TOL * (1.0 + norm_inf(&mu)) {
            return Err(ShadowError::NotOptimal { min_multiplier: min_mu });
        }
        let mut seen = HashSet::new();
        seen.insert(start.indices.clone());
        let path = ShadowPath {
            bases: vec![start.clone()],
            lambdas: vec![0.0],
            start_objective: y.to_vec(),
            end_objective: y2.to_vec(),
        };
        Ok(Self { poly, y: y.to_vec(), y2: y2.to_vec(), basis: start, lambda: 0.0, path, seen, stalls: 0, limit })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pivots(&self) -> usize {
        self.path.pivots()
    }

    pub fn path(&self) -> &ShadowPath {
        &self.path
    }

    pub fn into_path(self) -> ShadowPath {
        self.path
    }

    /// Objective at the current breakpoint.
    pub fn objective(&self) -> Vec<f64> {
        crate::linalg::lerp(&self.y, &self.y2, self.lambda)
    }

    pub fn step(&mut self) -> Result<PivotOutcome, ShadowError> {
        let next = max_lambda(&self.basis, &self.y, &self.y2, self.lambda);
        let Some(leaving) = next.leaving else {
            self.lambda = 1.0;
            return Ok(PivotOutcome::Finished(self.basis.clone()));
        };
        if next.lambda - self.lambda < STALL_PROGRESS {
            self.stalls += 1;
            if self.stalls >= 2 {
                return Err(ShadowError::NumericalStall { lambda: self.lambda });
            }
        } else {
            self.stalls = 0;
        }
        self.lambda = next.lambda;

        let ratio = ratio_test(self.poly, &self.basis, leaving)?;
        let (Some(step), Some(entering)) = (ratio.step, ratio.entering) else {
            return Ok(PivotOutcome::Unbounded {
                ray: ratio.direction,
                from: self.basis.clone(),
                leaving,
                lambda: self.lambda,
            });
        };
        if self.path.pivots() >= self.limit {
            return Err(ShadowError::PivotLimitExceeded { limit: self.limit });
        }
        let mut indices: Vec<usize> = self.basis.indices.iter().copied().filter(|&i| i != leaving).collect();
        indices.push(entering);
        indices.sort_unstable();
        if !self.seen.insert(indices.clone()) {
            return Err(ShadowError::CycleDetected { indices });
        }
        let basis = Basis::new(self.poly, indices)?;
        self.basis = basis.clone();
        self.path.bases.push(basis.clone());
        self.path.lambdas.push(self.lambda);
        Ok(PivotOutcome::Advanced { basis, lambda: self.lambda, leaving, entering, step })
    }

    /// Pivots until the walk finishes or reports an unbounded edge.
    pub fn run(&mut self) -> Result<PivotOutcome, ShadowError> {
        loop {
            match self.step()? {
                PivotOutcome::Advanced { .. } => continue,
                done => return Ok(done),
            }
        }
    }
}

/// Follows the shadow path from `y` to `y2` starting at `start`.
pub fn run_shadow_path(
    poly: &Polyhedron,
    y: &[f64],
    y2: &[f64],
    start: Basis,
    limit: usize,
) -> Result<(ShadowPath, PivotOutcome), ShadowError> {
    let mut walk = ShadowWalk::new(poly, y, y2, start, limit)?;
    let outcome = walk.run()?;
    Ok((walk.into_path(), outcome))
}
