//! Three-phase shadow vertex solver.
//!
//! 1. Solve the unit LP `Ax ≤ 1` for a random objective `Z`, starting from a
//!    basis of `d` artificial rows that cut off a small cap around `R·e_d`.
//! 2. Follow the interpolation LP `Ax + (1 - b)t ≤ 1` from its `t = 0` slice to
//!    the `t = 1` slice, or prove that the input is empty.
//! 3. Walk the shadow path of the input LP from `Z` to `c`.

use thiserror::Error;

use crate::instance::{LpInstance, Polyhedron};
use crate::linalg::{dot, factorize, norm, norm_inf, norm_l1, DenseMatrix, LinalgError};
use crate::randgen::RngStream;
use crate::shadow::{
    run_shadow_path, Basis, PivotOutcome, ShadowError, ShadowWalk, DEFAULT_PIVOT_LIMIT, DIRECTION_TOL,
    FEASIBILITY_TOL, OPTIMALITY_TOL,
};

pub const DEFAULT_MAX_RESTARTS: usize = 64;
/// Height of the artificial simplex above the origin along `e_d`.
pub const ARTIFICIAL_HEIGHT: f64 = 3.0;
pub const RAY_TOL: f64 = 1e-9;
pub const CERTIFICATE_RESIDUAL_TOL: f64 = 1e-8;
pub const CERTIFICATE_GAP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("the unit LP construction needs d ≥ 3, got d = {0}")]
    DimensionTooSmall(usize),
    #[error("phase 1 failed {attempts} times; last failure: {last_failure}")]
    RestartLimitExceeded { attempts: usize, last_failure: String },
    #[error("invalid certificate: {0}")]
    CertificateInvalid(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_restarts: usize,
    /// Noise on the artificial simplex vertices; `None` picks [`default_artificial_sigma`].
    pub artificial_sigma: Option<f64>,
    pub pivot_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_restarts: DEFAULT_MAX_RESTARTS, artificial_sigma: None, pivot_limit: DEFAULT_PIVOT_LIMIT }
    }
}

/// `1 / (10·sqrt(ln d))`
pub fn artificial_radius(d: usize) -> f64 {
    1.0 / (10.0 * (d as f64).ln().sqrt())
}

/// A fifth of the inradius of the artificial simplex.
pub fn default_artificial_sigma(d: usize) -> f64 {
    artificial_radius(d) / (5.0 * (d as f64 - 1.0))
}

/// Vertices of a regular simplex with unit circumradius, centred at the
/// origin inside `e_d^⊥`.
pub fn regular_simplex(d: usize) -> Vec<Vec<f64>> {
    let circumradius = ((d as f64 - 1.0) / d as f64).sqrt();
    (0..d)
        .map(|i| {
            let mut u = vec![0.0; d];
            // Helmert coordinates of e_i - 1/d
            for k in 1..d {
                let h = if i < k {
                    1.0
                } else if i == k {
                    -(k as f64)
                } else {
                    0.0
                };
                u[k - 1] = h / ((k * (k + 1)) as f64).sqrt() / circumradius;
            }
            u
        })
        .collect()
}

/// The unit LP with `d` artificial rows appended.
#[derive(Debug, Clone)]
pub struct UnitLpPrime {
    pub a: DenseMatrix,
    /// Unrotated perturbed simplex vertices `s_i`.
    pub s: Vec<Vec<f64>>,
    pub rotation: DenseMatrix,
    /// Artificial rows `R·s_i`.
    pub artificial: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

impl UnitLpPrime {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    /// `[A; R·S] x ≤ 1`
    pub fn combined(&self) -> Polyhedron {
        let extra = DenseMatrix::from_rows(&self.artificial).expect("artificial rows are d-vectors");
        let a = self.a.vstack(&extra).expect("same column count");
        let m = a.rows();
        Polyhedron::new(a, vec![1.0; m]).expect("matching rhs")
    }

    pub fn start_indices(&self) -> Vec<usize> {
        (self.n()..self.n() + self.d()).collect()
    }

    /// `R·e_d`
    pub fn start_objective(&self) -> Vec<f64> {
        self.rotation.column(self.d() - 1)
    }

    pub fn is_artificial(&self, row: usize) -> bool {
        row >= self.n()
    }
}

pub fn build_unit_lp_prime(rng: &mut RngStream, a: &DenseMatrix, sigma: f64) -> Result<UnitLpPrime, SolveError> {
    let d = a.cols();
    if d < 3 {
        return Err(SolveError::DimensionTooSmall(d));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SolveError::BadInput(format!("artificial sigma {sigma}")));
    }
    let r = artificial_radius(d);
    let rotation = rng.random_rotation(d);
    let s: Vec<Vec<f64>> = regular_simplex(d)
        .into_iter()
        .map(|u| {
            let mut mean: Vec<f64> = u.iter().map(|v| r * v).collect();
            mean[d - 1] = ARTIFICIAL_HEIGHT;
            rng.gaussian_vector(&mean, sigma)
        })
        .collect();
    let artificial = s.iter().map(|si| rotation.mul_vec(si)).collect();
    let z = rng.standard_normal_vec(d);
    Ok(UnitLpPrime { a: a.clone(), s, rotation, artificial, z })
}

/// Why a phase-1 attempt was discarded.
#[derive(Debug, Clone, PartialEq)]
pub enum RestartReason {
    StartInfeasible,
    StartNotOptimal,
    ArtificialInOptimum,
    RayNotImproving,
    Numerical(String),
}

#[derive(Debug, Clone)]
pub enum Phase1Outcome {
    /// Rows of `A` forming a `Z`-optimal basis of `Ax ≤ 1`.
    Optimal { indices: Vec<usize>, z: Vec<f64> },
    /// `A·ray ≤ 0` with `cᵀray > 0`.
    Unbounded { ray: Vec<f64>, z: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Phase1Result {
    pub outcome: Phase1Outcome,
    /// Attempts used, including the successful one.
    pub attempts: usize,
    pub pivots: usize,
    pub failures: Vec<RestartReason>,
}

impl Phase1Result {
    pub fn restarts(&self) -> usize {
        self.attempts - 1
    }
}

/// Phase 1 with restarts. A phase-1 ray is accepted as an unboundedness
/// certificate only when it improves `c`; otherwise the attempt is redrawn.
pub fn phase1_solve(
    rng: &mut RngStream,
    a: &DenseMatrix,
    c: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Phase1Result, SolveError> {
    let d = a.cols();
    if d < 3 {
        return Err(SolveError::DimensionTooSmall(d));
    }
    if opts.max_restarts == 0 {
        return Err(SolveError::BadInput("max_restarts must be at least 1".into()));
    }
    let sigma = opts.artificial_sigma.unwrap_or_else(|| default_artificial_sigma(d));
    let mut failures = Vec::new();
    let mut pivots = 0;
    for attempt in 1..=opts.max_restarts {
        let unit = build_unit_lp_prime(rng, a, sigma)?;
        match phase1_attempt(&unit, c, opts.pivot_limit, &mut pivots) {
            Ok(outcome) => return Ok(Phase1Result { outcome, attempts: attempt, pivots, failures }),
            Err(AttemptError::Restart(reason)) => failures.push(reason),
            Err(AttemptError::Fatal(e)) => return Err(e),
        }
    }
    Err(SolveError::RestartLimitExceeded {
        attempts: opts.max_restarts,
        last_failure: format!("{:?}", failures.last()),
    })
}

enum AttemptError {
    Restart(RestartReason),
    Fatal(SolveError),
}

impl From<ShadowError> for AttemptError {
    fn from(e: ShadowError) -> Self {
        match e {
            ShadowError::PivotLimitExceeded { .. } => AttemptError::Fatal(e.into()),
            other => AttemptError::Restart(RestartReason::Numerical(other.to_string())),
        }
    }
}

fn phase1_attempt(
    unit: &UnitLpPrime,
    c: Option<&[f64]>,
    limit: usize,
    pivots: &mut usize,
) -> Result<Phase1Outcome, AttemptError> {
    let poly = unit.combined();
    let start = Basis::new(&poly, unit.start_indices())?;
    if !unit.a.mul_vec(start.x()).iter().all(|v| *v <= 1.0 + FEASIBILITY_TOL) {
        return Err(AttemptError::Restart(RestartReason::StartInfeasible));
    }
    let y = unit.start_objective();
    if !start.is_optimal_for(&y) {
        return Err(AttemptError::Restart(RestartReason::StartNotOptimal));
    }
    let mut walk = ShadowWalk::new(&poly, &y, &unit.z, start, limit)?;
    let result = walk.run();
    *pivots += walk.pivots();
    match result? {
        PivotOutcome::Finished(basis) => {
            if basis.indices().iter().any(|&i| unit.is_artificial(i)) {
                Err(AttemptError::Restart(RestartReason::ArtificialInOptimum))
            } else {
                Ok(Phase1Outcome::Optimal { indices: basis.indices().to_vec(), z: unit.z.clone() })
            }
        }
        PivotOutcome::Unbounded { ray, .. } => match c {
            Some(c) if dot(c, &ray) <= 0.0 => Err(AttemptError::Restart(RestartReason::RayNotImproving)),
            _ => Ok(Phase1Outcome::Unbounded { ray, z: unit.z.clone() }),
        },
        PivotOutcome::Advanced { .. } => unreachable!("run only stops on a terminal outcome"),
    }
}

/// `[A | 1 - b] (x, t) ≤ 1`
#[derive(Debug, Clone)]
pub struct InterpolationLp {
    pub lifted: Polyhedron,
}

impl InterpolationLp {
    pub fn new(poly: &Polyhedron) -> Self {
        let col: Vec<f64> = poly.b.iter().map(|v| 1.0 - v).collect();
        let a = poly.a.append_column(&col).expect("column length matches rows");
        let n = a.rows();
        Self { lifted: Polyhedron::new(a, vec![1.0; n]).expect("matching rhs") }
    }

    /// Whether `(x, t)` satisfies the lifted system.
    pub fn contains(&self, x: &[f64], t: f64, tol: f64) -> bool {
        let mut p = x.to_vec();
        p.push(t);
        self.lifted.contains(&p, tol)
    }
}

#[derive(Debug, Clone)]
pub enum Phase2Outcome {
    /// Rows of the input forming a feasible `Z`-optimal basis.
    Optimal(Vec<usize>),
    Infeasible(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Phase2Result {
    pub outcome: Phase2Outcome,
    pub pivots: usize,
}

/// Lifts a `Z`-optimal unit-LP basis to a `Z`-optimal basis of `Ax ≤ b`.
///
/// The edge `{A_I x + (1 - b_I)t = 1}` is optimal for `(Z, μᵀ(1 - b_I))`
/// where `μ = A_I⁻ᵀZ`. Its first vertex in the `+t` direction starts a shadow
/// walk toward `e_{d+1}`; the first path edge reaching `t = 1` gives the answer.
pub fn phase2_solve(poly: &Polyhedron, unit_basis: &[usize], z: &[f64], limit: usize) -> Result<Phase2Result, SolveError> {
    let d = poly.d();
    let int_lp = InterpolationLp::new(poly);
    let lifted = &int_lp.lifted;
    let unit_poly = Polyhedron::new(poly.a.clone(), vec![1.0; poly.n()]).expect("matching rhs");
    let unit = Basis::new(&unit_poly, unit_basis.to_vec())?;
    let mu = unit.multipliers(z);
    let lift_col: Vec<f64> = unit.indices().iter().map(|&i| 1.0 - poly.b[i]).collect();
    let tau = dot(&mu, &lift_col);

    // the lifted edge through I: x(t) = x_I + t·dx
    let dx: Vec<f64> = unit.factorization().solve(&lift_col).iter().map(|v| -v).collect();
    let mut w = dx.clone();
    w.push(1.0);
    let mut point = unit.x().to_vec();
    point.push(0.0);
    let mut first: Option<(f64, usize)> = None;
    for i in 0..lifted.n() {
        if unit.contains(i) {
            continue;
        }
        let aw = dot(lifted.a.row(i), &w);
        if aw <= DIRECTION_TOL {
            continue;
        }
        let step = lifted.slack(i, &point) / aw;
        if first.is_none_or(|(s, _)| step < s) {
            first = Some((step, i));
        }
    }
    let (step, entering) = match first {
        Some((step, i)) if step < 1.0 => (step, i),
        _ => return Ok(Phase2Result { outcome: Phase2Outcome::Optimal(unit.indices().to_vec()), pivots: 0 }),
    };
    if step < -crate::shadow::NEGATIVE_STEP_TOL {
        return Err(ShadowError::NegativeStep { step }.into());
    }

    let mut w0 = z.to_vec();
    w0.push(tau);
    let mut target = vec![0.0; d + 1];
    target[d] = 1.0;
    let mut indices = unit.indices().to_vec();
    indices.push(entering);
    let start = Basis::new(lifted, indices)?;
    let mut walk = ShadowWalk::new(lifted, &w0, &target, start, limit)?;
    let mut pivots = 1;
    loop {
        let before = walk.basis().clone();
        match walk.step()? {
            PivotOutcome::Advanced { basis, leaving, .. } => {
                pivots += 1;
                if basis.x()[d] >= 1.0 {
                    let edge = without(before.indices(), leaving);
                    return Ok(Phase2Result { outcome: Phase2Outcome::Optimal(edge), pivots });
                }
            }
            PivotOutcome::Unbounded { ray, from, leaving, .. } => {
                if ray[d] <= 0.0 {
                    return Err(SolveError::CertificateInvalid(format!(
                        "lifted ray does not increase t ({:e})",
                        ray[d]
                    )));
                }
                return Ok(Phase2Result { outcome: Phase2Outcome::Optimal(without(from.indices(), leaving)), pivots });
            }
            PivotOutcome::Finished(basis) => {
                let nu = basis.multipliers(&target);
                let mut y = vec![0.0; poly.n()];
                for (&row, &v) in basis.indices().iter().zip(&nu) {
                    y[row] = v.max(0.0);
                }
                let total = norm_l1(&y);
                if total > 0.0 {
                    y.iter_mut().for_each(|v| *v /= total);
                }
                verify_farkas(poly, &y)?;
                return Ok(Phase2Result { outcome: Phase2Outcome::Infeasible(y), pivots });
            }
        }
    }
}

fn without(indices: &[usize], row: usize) -> Vec<usize> {
    indices.iter().copied().filter(|&i| i != row).collect()
}

/// Checks `y ≥ 0`, `‖yᵀA‖∞ ≤ 1e-8·‖y‖₁` and `yᵀb < -1e-10`.
pub fn verify_farkas(poly: &Polyhedron, y: &[f64]) -> Result<(), SolveError> {
    if y.len() != poly.n() || y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SolveError::CertificateInvalid("y must be a finite nonnegative n-vector".into()));
    }
    let l1 = norm_l1(y);
    let residual = norm_inf(&poly.a.tr_mul_vec(y));
    if !(l1 > 0.0) || residual > CERTIFICATE_RESIDUAL_TOL * l1 {
        return Err(SolveError::CertificateInvalid(format!("‖yᵀA‖∞ = {residual:e} with ‖y‖₁ = {l1:e}")));
    }
    let gap = dot(y, &poly.b);
    if gap >= -CERTIFICATE_GAP_TOL {
        return Err(SolveError::CertificateInvalid(format!("yᵀb = {gap:e}")));
    }
    Ok(())
}

/// Checks `A·ray ≤ 1e-9·‖ray‖` and `cᵀray > 0`.
pub fn verify_ray(poly: &Polyhedron, c: &[f64], ray: &[f64]) -> Result<(), SolveError> {
    let scale = norm(ray);
    let worst = poly.a.mul_vec(ray).into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !(scale > 0.0) || worst > RAY_TOL * scale {
        return Err(SolveError::CertificateInvalid(format!("max (A r)_i = {worst:e}")));
    }
    if dot(c, ray) <= 0.0 {
        return Err(SolveError::CertificateInvalid("ray does not improve c".into()));
    }
    Ok(())
}

/// Checks primal feasibility and dual feasibility of `basis` for `c`.
pub fn verify_optimal(poly: &Polyhedron, c: &[f64], indices: &[usize]) -> Result<Vec<f64>, SolveError> {
    let basis = Basis::new(poly, indices.to_vec())?;
    let x = basis.x().to_vec();
    let violation = poly.max_violation(&x);
    if violation > FEASIBILITY_TOL * (1.0 + norm_inf(&x)) {
        return Err(SolveError::CertificateInvalid(format!("vertex violates a row by {violation:e}")));
    }
    let mu = basis.multipliers(c);
    let min_mu = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_mu < -OPTIMALITY_TOL * (1.0 + norm_inf(&mu)) {
        return Err(SolveError::CertificateInvalid(format!("multiplier {min_mu:e}")));
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Optimal { basis: Vec<usize>, x: Vec<f64>, value: f64 },
    Unbounded { ray: Vec<f64> },
    Infeasible { certificate: Vec<f64> },
}

impl SolveOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            SolveOutcome::Optimal { .. } => "optimal",
            SolveOutcome::Unbounded { .. } => "unbounded",
            SolveOutcome::Infeasible { .. } => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhasePivots {
    pub phase1: usize,
    pub phase2: usize,
    pub phase3: usize,
}

impl PhasePivots {
    pub fn total(&self) -> usize {
        self.phase1 + self.phase2 + self.phase3
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub outcome: SolveOutcome,
    pub pivots: PhasePivots,
    /// Phase-1 attempts, at least 1.
    pub attempts: usize,
    pub z: Vec<f64>,
    /// Bases visited in phase 3, from the `Z`-optimal vertex onward.
    pub phase3_path: Vec<Vec<usize>>,
}

/// Phase 3: the shadow path from `z` to `c`.
pub fn phase3_solve(
    poly: &Polyhedron,
    c: &[f64],
    z_basis: &[usize],
    z: &[f64],
    limit: usize,
) -> Result<(SolveOutcome, Vec<Vec<usize>>), SolveError> {
    let start = Basis::new(poly, z_basis.to_vec())?;
    let (path, outcome) = run_shadow_path(poly, z, c, start, limit)?;
    let outcome = match outcome {
        PivotOutcome::Finished(basis) => {
            let x = basis.x().to_vec();
            SolveOutcome::Optimal { basis: basis.indices().to_vec(), value: dot(c, &x), x }
        }
        PivotOutcome::Unbounded { ray, .. } => SolveOutcome::Unbounded { ray },
        PivotOutcome::Advanced { .. } => unreachable!("run only stops on a terminal outcome"),
    };
    Ok((outcome, path.index_sequence()))
}

/// Solves `max cᵀx s.t. Ax ≤ b` and verifies the returned certificate.
pub fn solve(rng: &mut RngStream, instance: &LpInstance, opts: &SolverOptions) -> Result<SolveReport, SolveError> {
    let d = instance.d();
    if d < 3 {
        return Err(SolveError::DimensionTooSmall(d));
    }
    let original = &instance.polyhedron;
    let c = &instance.c;
    let max_norm = original.a.max_row_norm();
    let scale = if max_norm > 1.0 { 1.0 / max_norm } else { 1.0 };
    let poly = if scale < 1.0 { original.scaled(scale) } else { original.clone() };

    let p1 = phase1_solve(rng, &poly.a, Some(c), opts)?;
    let mut pivots = PhasePivots { phase1: p1.pivots, ..Default::default() };
    let (unit_basis, z) = match p1.outcome {
        Phase1Outcome::Unbounded { ray, z } => {
            verify_ray(original, c, &ray)?;
            let outcome = SolveOutcome::Unbounded { ray };
            return Ok(SolveReport { outcome, pivots, attempts: p1.attempts, z, phase3_path: Vec::new() });
        }
        Phase1Outcome::Optimal { indices, z } => (indices, z),
    };

    let p2 = phase2_solve(&poly, &unit_basis, &z, opts.pivot_limit)?;
    pivots.phase2 = p2.pivots;
    let z_basis = match p2.outcome {
        Phase2Outcome::Infeasible(y) => {
            // certificates are invariant under positive row scaling of (A, b) jointly
            verify_farkas(original, &y)?;
            let outcome = SolveOutcome::Infeasible { certificate: y };
            return Ok(SolveReport { outcome, pivots, attempts: p1.attempts, z, phase3_path: Vec::new() });
        }
        Phase2Outcome::Optimal(basis) => basis,
    };

    let (outcome, path) = phase3_solve(&poly, c, &z_basis, &z, opts.pivot_limit)?;
    pivots.phase3 = path.len() - 1;
    match &outcome {
        SolveOutcome::Optimal { basis, .. } => {
            verify_optimal(original, c, basis)?;
        }
        SolveOutcome::Unbounded { ray } => verify_ray(original, c, ray)?,
        SolveOutcome::Infeasible { .. } => unreachable!(),
    }
    let outcome = match outcome {
        SolveOutcome::Optimal { basis, .. } => {
            // report x from the unscaled data
            let x = factorize(&original.a.select_rows(&basis))?.solve(&basis.iter().map(|&i| original.b[i]).collect::<Vec<_>>());
            SolveOutcome::Optimal { value: dot(c, &x), basis, x }
        }
        other => other,
    };
    Ok(SolveReport { outcome, pivots, attempts: p1.attempts, z, phase3_path: path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::unit_box;
    use crate::oracle::{enumerate_feasible_bases, lp_optimum_oracle, OracleOutcome};

    fn sphere_instance(seed: u64, n: usize, d: usize, sigma: f64) -> LpInstance {
        let mut rng = RngStream::new(seed, 99);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.uniform_sphere(d)).collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let c = rng.standard_normal_vec(d);
        let mut noise = RngStream::new(seed, 100);
        crate::randgen::perturb(&mut noise, &a, &vec![1.0; n], &c, sigma, true).unwrap().instance
    }

    #[test]
    fn simplex_vertices_are_regular() {
        for d in 3..8 {
            let u = regular_simplex(d);
            let sum: Vec<f64> = (0..d).map(|k| u.iter().map(|v| v[k]).sum()).collect();
            assert!(norm(&sum) < 1e-12);
            let expected_gap = (2.0 * d as f64 / (d as f64 - 1.0)).sqrt();
            for i in 0..d {
                assert!((norm(&u[i]) - 1.0).abs() < 1e-12);
                assert_eq!(u[i][d - 1], 0.0);
                for j in 0..i {
                    let gap = norm(&crate::linalg::sub(&u[i], &u[j]));
                    assert!((gap - expected_gap).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn construction_constants() {
        assert!((artificial_radius(3) - 0.0954).abs() < 1e-4);
        let mut rng = RngStream::new(1, 0);
        let unit = build_unit_lp_prime(&mut rng, &DenseMatrix::identity(3), 0.0).unwrap();
        for s in &unit.s {
            assert_eq!(s[2], 3.0);
            let mut flat = s.clone();
            flat[2] = 0.0;
            assert!((norm(&flat) - artificial_radius(3)).abs() < 1e-12);
        }
        assert!(matches!(
            build_unit_lp_prime(&mut rng, &DenseMatrix::identity(2), 0.0),
            Err(SolveError::DimensionTooSmall(2))
        ));
    }

    #[test]
    fn unperturbed_start_is_valid() {
        let mut rng = RngStream::new(5, 0);
        for d in 3..7 {
            let unit = build_unit_lp_prime(&mut rng, &DenseMatrix::identity(d), 0.0).unwrap();
            let poly = unit.combined();
            let start = Basis::new(&poly, unit.start_indices()).unwrap();
            assert!(start.is_optimal_for(&unit.start_objective()));
            let mu = start.multipliers(&unit.start_objective());
            assert!(mu.iter().all(|m| (m - 1.0 / (3.0 * d as f64)).abs() < 1e-12));
            assert!((norm(start.x()) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn start_basis_success_rate() {
        let mut rng = RngStream::new(11, 0);
        let (d, n) = (5, 20);
        let mut ok = 0;
        for _ in 0..1000 {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| crate::linalg::scaled(&rng.uniform_sphere(d), 2.0 * rng.uniform())).collect();
            let a = DenseMatrix::from_rows(&rows).unwrap();
            let unit = build_unit_lp_prime(&mut rng, &a, 0.01).unwrap();
            let poly = unit.combined();
            let Ok(start) = Basis::new(&poly, unit.start_indices()) else { continue };
            if a.mul_vec(start.x()).iter().all(|v| *v <= 1.0) && start.is_optimal_for(&unit.start_objective()) {
                ok += 1;
            }
        }
        assert!(ok >= 850, "{ok} / 1000");
    }

    #[test]
    fn interpolation_slices() {
        let inst = sphere_instance(3, 12, 3, 0.05);
        let int_lp = InterpolationLp::new(&inst.polyhedron);
        let unit = Polyhedron::new(inst.a().clone(), vec![1.0; inst.n()]).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut hits = 0;
        while hits < 100 {
            let x = crate::linalg::scaled(&rng.uniform_sphere(3), 3.0 * rng.uniform());
            if unit.contains(&x, 0.0) {
                hits += 1;
                assert!(int_lp.contains(&x, 0.0, 1e-12));
            }
            assert_eq!(inst.polyhedron.contains(&x, 0.0), int_lp.contains(&x, 1.0, 0.0));
        }
    }

    #[test]
    fn phase1_matches_unit_oracle() {
        let opts = SolverOptions::default();
        for seed in 0..20 {
            let inst = sphere_instance(seed, 15, 3, 0.05);
            let unit = Polyhedron::new(inst.a().clone(), vec![1.0; inst.n()]).unwrap();
            let mut rng = RngStream::new(seed, 1);
            let r = phase1_solve(&mut rng, inst.a(), None, &opts).unwrap();
            let Phase1Outcome::Optimal { indices, z } = r.outcome else { panic!("bounded unit LP") };
            let unit_inst = LpInstance::new(unit.clone(), z.clone()).unwrap();
            let OracleOutcome::Optimal { value, .. } = lp_optimum_oracle(&unit_inst, &z).unwrap() else { panic!() };
            let b = Basis::new(&unit, indices).unwrap();
            assert!((dot(&z, b.x()) - value).abs() < 1e-9 * (1.0 + value.abs()));
        }
    }

    #[test]
    fn phase2_trivial_when_b_is_one() {
        let inst = sphere_instance(8, 12, 3, 0.0);
        let opts = SolverOptions::default();
        let mut rng = RngStream::new(8, 1);
        let Phase1Outcome::Optimal { indices, z } = phase1_solve(&mut rng, inst.a(), None, &opts).unwrap().outcome else {
            panic!()
        };
        let r = phase2_solve(&inst.polyhedron, &indices, &z, DEFAULT_PIVOT_LIMIT).unwrap();
        let Phase2Outcome::Optimal(b) = r.outcome else { panic!() };
        assert_eq!(b, indices);
        assert_eq!(r.pivots, 0);
    }

    #[test]
    fn phase2_matches_z_oracle() {
        let opts = SolverOptions::default();
        for seed in 0..100 {
            let inst = sphere_instance(seed, 14, 3, 0.1);
            let mut rng = RngStream::new(seed, 2);
            let Phase1Outcome::Optimal { indices, z } = phase1_solve(&mut rng, inst.a(), None, &opts).unwrap().outcome
            else {
                continue;
            };
            let r = phase2_solve(&inst.polyhedron, &indices, &z, DEFAULT_PIVOT_LIMIT).unwrap();
            match (r.outcome, lp_optimum_oracle(&inst, &z).unwrap()) {
                (Phase2Outcome::Optimal(b), OracleOutcome::Optimal { value, .. }) => {
                    let x = verify_optimal(&inst.polyhedron, &z, &b).unwrap();
                    assert!((dot(&z, &x) - value).abs() < 1e-8 * (1.0 + value.abs()), "seed {seed}");
                }
                (Phase2Outcome::Infeasible(y), OracleOutcome::Infeasible) => {
                    verify_farkas(&inst.polyhedron, &y).unwrap();
                }
                (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn negative_rhs_is_infeasible() {
        let inst = sphere_instance(21, 12, 3, 0.0);
        let poly = Polyhedron::new(inst.a().clone(), vec![-1.0; 12]).unwrap();
        let bad = LpInstance::new(poly, inst.c.clone()).unwrap();
        assert!(enumerate_feasible_bases(&bad.polyhedron).unwrap().is_empty());
        let mut rng = RngStream::new(0, 0);
        let r = solve(&mut rng, &bad, &SolverOptions::default()).unwrap();
        let SolveOutcome::Infeasible { certificate } = r.outcome else { panic!("{:?}", r.outcome) };
        verify_farkas(&bad.polyhedron, &certificate).unwrap();
    }

    #[test]
    fn box_corner() {
        let inst = unit_box(3, vec![1.0, 0.0, 0.0]);
        let mut rng = RngStream::new(2, 0);
        let c = vec![1.0, 0.5, 0.25];
        let inst = LpInstance::new(inst.polyhedron, c).unwrap();
        let r = solve(&mut rng, &inst, &SolverOptions::default()).unwrap();
        let SolveOutcome::Optimal { x, value, .. } = &r.outcome else { panic!() };
        for (got, want) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((value - 1.75).abs() < 1e-12);
        assert_eq!(r.pivots.total(), r.pivots.phase1 + r.pivots.phase2 + r.pivots.phase3);
    }

    #[test]
    fn infeasible_sandwich() {
        // x_1 ≤ 0 and -x_1 ≤ -1 inside a box
        let mut rows: Vec<Vec<f64>> = (0..3).flat_map(|i| [1.0, -1.0].map(|s| {
            let mut r = vec![0.0; 3];
            r[i] = s;
            r
        })).collect();
        let mut b = vec![1.0; 6];
        rows.push(vec![1.0, 0.0, 0.0]);
        b.push(0.0);
        rows.push(vec![-1.0, 0.0, 0.0]);
        b.push(-1.0);
        let inst = LpInstance::from_parts(DenseMatrix::from_rows(&rows).unwrap(), b, vec![0.3, 0.2, 0.1]).unwrap();
        let mut rng = RngStream::new(6, 0);
        let r = solve(&mut rng, &inst, &SolverOptions::default()).unwrap();
        assert!(matches!(r.outcome, SolveOutcome::Infeasible { .. }), "{:?}", r.outcome);
    }

    #[test]
    fn phase3_zero_pivots_when_c_parallel() {
        let inst = sphere_instance(30, 15, 3, 0.05);
        let mut rng = RngStream::new(30, 1);
        let opts = SolverOptions::default();
        let Phase1Outcome::Optimal { indices, z } = phase1_solve(&mut rng, inst.a(), None, &opts).unwrap().outcome else {
            panic!()
        };
        let Phase2Outcome::Optimal(zb) = phase2_solve(&inst.polyhedron, &indices, &z, DEFAULT_PIVOT_LIMIT).unwrap().outcome
        else {
            panic!()
        };
        let c2 = crate::linalg::scaled(&z, 2.5);
        let (out, path) = phase3_solve(&inst.polyhedron, &c2, &zb, &z, DEFAULT_PIVOT_LIMIT).unwrap();
        assert_eq!(path.len(), 1);
        let SolveOutcome::Optimal { basis, .. } = out else { panic!() };
        assert_eq!(basis, zb);

        // exactly -Z would pass through the zero objective
        let mut neg: Vec<f64> = z.iter().map(|v| -v).collect();
        neg[0] += 0.1;
        let (out, _) = phase3_solve(&inst.polyhedron, &neg, &zb, &z, DEFAULT_PIVOT_LIMIT).unwrap();
        let SolveOutcome::Optimal { value, .. } = out else { panic!() };
        let OracleOutcome::Optimal { value: want, .. } = lp_optimum_oracle(&inst, &neg).unwrap() else { panic!() };
        assert!((value - want).abs() < 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn open_stack_is_unbounded() {
        // half-spaces whose normals all have negative first coordinate
        let mut rng = RngStream::new(40, 0);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let mut u = rng.uniform_sphere(3);
                u[0] = -u[0].abs() - 0.2;
                u
            })
            .collect();
        let inst = LpInstance::from_parts(DenseMatrix::from_rows(&rows).unwrap(), vec![1.0; 10], vec![1.0, 0.1, 0.0]).unwrap();
        let r = solve(&mut rng, &inst, &SolverOptions::default()).unwrap();
        let SolveOutcome::Unbounded { ray } = &r.outcome else { panic!("{:?}", r.outcome) };
        verify_ray(&inst.polyhedron, &inst.c, ray).unwrap();
        assert!(matches!(lp_optimum_oracle(&inst, &inst.c).unwrap(), OracleOutcome::Unbounded { .. }));
    }

    #[test]
    fn pivot_accounting_and_reproducibility() {
        let inst = sphere_instance(50, 25, 4, 0.05);
        let run = || solve(&mut RngStream::new(7, 3), &inst, &SolverOptions::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.pivots, b.pivots);
        assert_eq!(a.pivots.phase3, a.phase3_path.len() - 1);
    }
}
