//! Near-ball polytopes built from dense sphere sets, and the geometric checks
//! that force long simplex paths between opposite vertices.

use std::collections::HashMap;

use thiserror::Error;

use crate::instance::Polyhedron;
use crate::linalg::{dot, norm, DenseMatrix};
use crate::oracle::{bfs_distance, discover_vertex_graph, OracleError, DISCOVERY_GUARD};
use crate::randgen::{global_noise_radius, perturb, RandError, RngStream, SmoothedInstance};
use crate::three_phase::{solve, SolveError, SolveOutcome, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowerBoundError {
    #[error("audit point at distance {distance} from the set exceeds eta = {eta}")]
    AuditFailed { eta: f64, distance: f64 },
    #[error("basis row {row} has nonpositive right-hand side {rhs}")]
    NonpositiveRhs { row: usize, rhs: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("c-maximizer not found: {0}")]
    NoOptimum(String),
    #[error(transparent)]
    Rand(#[from] RandError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Unit vectors pairwise at least `eta` apart, audited for `eta`-density.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSet {
    pub eta: f64,
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    /// Consecutive rejections that ended the greedy phase.
    pub streak: usize,
    pub audit_samples: usize,
    pub audited: bool,
}

impl DenseSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in 0..i {
                best = best.min(distance(&self.points[i], &self.points[j]));
            }
        }
        best
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Uniform grid with cell side `eta`; any two points closer than `eta` lie
/// in adjacent cells.
struct SpatialHash {
    eta: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    offsets: Vec<Vec<i64>>,
}

impl SpatialHash {
    fn new(eta: f64, d: usize) -> Self {
        let mut offsets = vec![Vec::new()];
        for _ in 0..d {
            offsets = offsets.into_iter().flat_map(|o| (-1..=1).map(move |s| [o.clone(), vec![s]].concat())).collect();
        }
        Self { eta, cells: HashMap::new(), offsets }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.eta).floor() as i64).collect()
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        self.cells.entry(self.key(x)).or_default().push(id);
    }

    /// Distance to the nearest stored point among adjacent cells, or `inf`.
    fn nearest(&self, x: &[f64], points: &[Vec<f64>]) -> f64 {
        let base = self.key(x);
        let mut best = f64::INFINITY;
        for off in &self.offsets {
            let cell: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(ids) = self.cells.get(&cell) {
                for &i in ids {
                    best = best.min(distance(x, &points[i]));
                }
            }
        }
        best
    }
}

/// Greedy packing from streamed sphere samples that stops after `streak`
/// consecutive rejections, followed by an audit with `audit_samples` fresh points.
pub fn greedy_dense_set_with_streak(
    rng: &mut RngStream,
    eta: f64,
    d: usize,
    streak: usize,
    audit_samples: usize,
) -> Result<DenseSet, LowerBoundError> {
    if !(eta > 0.0 && eta <= 2.0) || d < 2 {
        return Err(LowerBoundError::BadParameter(format!("eta = {eta}, d = {d}")));
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut grid = SpatialHash::new(eta, d);
    let mut rejected = 0;
    while rejected < streak {
        let x = rng.uniform_sphere(d);
        if grid.nearest(&x, &points) < eta {
            rejected += 1;
        } else {
            grid.insert(&x, points.len());
            points.push(x);
            rejected = 0;
        }
    }
    let mut set = DenseSet { eta, d, points, streak, audit_samples, audited: false };
    audit(rng, &mut set, &grid)?;
    Ok(set)
}

fn audit(rng: &mut RngStream, set: &mut DenseSet, grid: &SpatialHash) -> Result<(), LowerBoundError> {
    for _ in 0..set.audit_samples {
        let x = rng.uniform_sphere(set.d);
        let dist = grid.nearest(&x, &set.points);
        if dist > set.eta {
            return Err(LowerBoundError::AuditFailed { eta: set.eta, distance: dist });
        }
    }
    set.audited = true;
    Ok(())
}

/// [`greedy_dense_set_with_streak`] starting with a streak of
/// `4·audit_samples` and doubling it after each failed audit, up to four rounds.
pub fn greedy_dense_set(rng: &mut RngStream, eta: f64, d: usize, audit_samples: usize) -> Result<DenseSet, LowerBoundError> {
    let mut streak = 4 * audit_samples.max(1);
    let mut last = None;
    for _ in 0..4 {
        match greedy_dense_set_with_streak(rng, eta, d, streak, audit_samples) {
            Err(e @ LowerBoundError::AuditFailed { .. }) => {
                last = Some(e);
                streak *= 2;
            }
            other => return other,
        }
    }
    Err(last.expect("at least one round ran"))
}

/// `⌊(4/σ)^d⌋`, or 0 when `sigma` is 0.
pub fn lb_row_count(sigma: f64, d: usize) -> usize {
    if sigma <= 0.0 {
        return 0;
    }
    ((4.0 / sigma).powi(d as i32) + 1e-9).floor() as usize
}

/// Rows are the dense points, topped up with uniform sphere points to
/// `⌊(4/σ)^d⌋` rows; `b̄ = 1` and both `A` and `b` are perturbed.
pub fn build_lb_instance(
    rng: &mut RngStream,
    dense: &DenseSet,
    sigma: f64,
    c: &[f64],
) -> Result<SmoothedInstance, LowerBoundError> {
    let mut rows = dense.points.clone();
    let target = lb_row_count(sigma, dense.d).max(rows.len());
    while rows.len() < target {
        rows.push(rng.uniform_sphere(dense.d));
    }
    let abar = DenseMatrix::from_rows(&rows).map_err(RandError::from)?;
    let n = rows.len();
    // rows of (abar, 1) have norm √2; scaling both by 1/√2 gives the same polyhedron
    Ok(perturb(rng, &abar, &vec![1.0; n], c, sigma, true)?)
}

/// Every row within `eta` of its unperturbed value and every `b_i` within `eta` of 1.
pub fn norm_event(inst: &SmoothedInstance, eta: f64) -> bool {
    inst.max_row_noise() <= eta && inst.b().iter().all(|b| (b - 1.0).abs() <= eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    /// `min_i b_i/‖a_i‖ ≥ 1 - 2η`
    pub inner_ok: bool,
    /// Every vertex has norm at most `1 + 4η`.
    pub outer_ok: bool,
    pub inner_margin: f64,
    pub outer_margin: f64,
    /// `η ≤ 1/8`, where the ball sandwich is guaranteed.
    pub in_regime: bool,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.inner_ok && self.outer_ok
    }
}

pub fn sandwich_check(poly: &Polyhedron, eta: f64, vertices: &[Vec<f64>]) -> SandwichReport {
    let inner = (0..poly.n()).map(|i| poly.b[i] / norm(poly.a.row(i))).fold(f64::INFINITY, f64::min);
    let outer = vertices.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let inner_margin = inner - (1.0 - 2.0 * eta);
    let outer_margin = (1.0 + 4.0 * eta) - outer;
    SandwichReport {
        inner_ok: inner_margin >= 0.0,
        outer_ok: outer_margin >= 0.0,
        inner_margin,
        outer_margin,
        in_regime: eta <= 0.125,
    }
}

/// Diameter of the polar facet `conv(a_j / b_j : j ∈ basis)`.
pub fn polar_facet_diameter(poly: &Polyhedron, basis: &[usize]) -> Result<f64, LowerBoundError> {
    let mut pts = Vec::with_capacity(basis.len());
    for &j in basis {
        let rhs = poly.b[j];
        if rhs <= 0.0 {
            return Err(LowerBoundError::NonpositiveRhs { row: j, rhs });
        }
        pts.push(poly.a.row(j).iter().map(|v| v / rhs).collect::<Vec<f64>>());
    }
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.max(distance(&pts[i], &pts[j]));
        }
    }
    Ok(best)
}

/// `(d - 1)(2/(Rγ) - 2)`
pub fn rel_diam_bound(d: usize, big_r: f64, gamma: f64) -> f64 {
    (d as f64 - 1.0) * (2.0 / (big_r * gamma) - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterParams {
    pub audit_samples: usize,
    pub guard: usize,
}

impl Default for DiameterParams {
    fn default() -> Self {
        Self { audit_samples: 100_000, guard: DISCOVERY_GUARD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiameterRecord {
    pub d: usize,
    pub sigma: f64,
    pub n: usize,
    pub dense_size: usize,
    /// `4σ·sqrt(d ln n)`
    pub eta: f64,
    pub norm_event: bool,
    pub sandwich: SandwichReport,
    pub vertices: usize,
    pub distance: usize,
    pub distance_reverse: usize,
    /// Largest polar facet diameter; `None` when some `b_i ≤ 0` puts the
    /// origin outside the polytope.
    pub gamma: Option<f64>,
    pub r_measured: f64,
    pub r_nominal: f64,
    pub bound: Option<f64>,
}

impl DiameterRecord {
    /// The path-length inequality, when its preconditions hold.
    pub fn bound_holds(&self) -> Option<bool> {
        self.bound.map(|b| self.distance as f64 >= b)
    }

    /// `γ ≤ 8√η`, when `γ` is defined.
    pub fn facet_bound_holds(&self) -> Option<bool> {
        self.gamma.map(|g| g <= 8.0 * self.eta.sqrt())
    }
}

/// Builds a near-ball instance, maps its 1-skeleton from the `c`-maximizer
/// and measures the edge distance to the `c`-minimizer.
pub fn diameter_experiment(
    rng: &mut RngStream,
    d: usize,
    sigma: f64,
    c: &[f64],
    params: DiameterParams,
) -> Result<DiameterRecord, LowerBoundError> {
    if !(sigma > 0.0) || c.len() != d {
        return Err(LowerBoundError::BadParameter(format!("sigma = {sigma}, |c| = {}", c.len())));
    }
    let dense = greedy_dense_set(rng, sigma.min(2.0), d, params.audit_samples)?;
    let inst = build_lb_instance(rng, &dense, sigma, c)?;
    let poly = &inst.instance.polyhedron;
    let n = poly.n();
    let eta = global_noise_radius(sigma, d, n);

    let mut solver_rng = rng.fork(rng.stream().wrapping_add(1));
    let report = solve(&mut solver_rng, &inst.instance, &SolverOptions::default())?;
    let SolveOutcome::Optimal { basis, .. } = report.outcome else {
        return Err(LowerBoundError::NoOptimum(report.outcome.kind().into()));
    };
    let graph = discover_vertex_graph(poly, &basis, params.guard)?;
    let top = graph.find(&basis).expect("start basis is in the graph");
    let bottom = (0..graph.len())
        .min_by(|&i, &j| dot(c, &graph.points[i]).total_cmp(&dot(c, &graph.points[j])))
        .expect("graph has the start vertex");
    let distance = bfs_distance(&graph, top, bottom)?;
    let distance_reverse = bfs_distance(&graph, bottom, top)?;

    let r_measured = graph.points.iter().map(|p| norm(p)).fold(0.0, f64::max);
    let sandwich = sandwich_check(poly, eta, &graph.points);
    let gamma = graph
        .bases
        .iter()
        .map(|b| polar_facet_diameter(poly, b))
        .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))
        .ok()
        .filter(|_| poly.b.iter().all(|&b| b > 0.0));
    Ok(DiameterRecord {
        d,
        sigma,
        n,
        dense_size: dense.len(),
        eta,
        norm_event: norm_event(&inst, eta),
        sandwich,
        vertices: graph.len(),
        distance,
        distance_reverse,
        bound: gamma.map(|g| rel_diam_bound(d, r_measured, g)),
        gamma,
        r_measured,
        r_nominal: 1.0 + 4.0 * eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::build_vertex_graph;

    #[test]
    fn antipodal_set_at_eta_two() {
        let mut rng = RngStream::new(1, 0);
        let s = greedy_dense_set(&mut rng, 2.0, 2, 1000).unwrap();
        assert!(s.len() <= 2 && s.audited);
    }

    #[test]
    fn packing_size_and_separation() {
        let mut rng = RngStream::new(2, 0);
        let s = greedy_dense_set(&mut rng, 0.5, 3, 100_000).unwrap();
        assert!(s.len() <= 512);
        assert!(s.min_pairwise_distance() >= 0.5);
        assert!(s.points.iter().all(|p| (norm(p) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn audit_rejects_sparse_set() {
        let mut rng = RngStream::new(3, 0);
        let err = greedy_dense_set_with_streak(&mut rng, 0.2, 3, 1, 10_000).unwrap_err();
        assert!(matches!(err, LowerBoundError::AuditFailed { .. }));
    }

    #[test]
    fn row_count_sizing() {
        assert_eq!(lb_row_count(0.25, 3), 4096);
        assert_eq!(lb_row_count(0.0, 3), 0);
        assert_eq!(lb_row_count(1.0, 2), 16);
    }

    #[test]
    fn unperturbed_sandwich() {
        let mut rng = RngStream::new(4, 0);
        let dense = greedy_dense_set(&mut rng, 0.1, 3, 20_000).unwrap();
        let inst = build_lb_instance(&mut rng, &dense, 0.0, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(inst.instance.n(), dense.len());
        let poly = &inst.instance.polyhedron;
        let start = crate::oracle::enumerate_feasible_bases(poly);
        // too many rows to enumerate; find one vertex through the solver instead
        assert!(start.is_err());
        let report = solve(&mut rng, &inst.instance, &SolverOptions::default()).unwrap();
        let SolveOutcome::Optimal { basis, .. } = report.outcome else { panic!() };
        let g = discover_vertex_graph(poly, &basis, DISCOVERY_GUARD).unwrap();
        let s = sandwich_check(poly, 0.1, &g.points);
        assert!(s.inner_ok && s.outer_ok && s.in_regime, "{s:?}");
        let gamma = g.bases.iter().map(|b| polar_facet_diameter(poly, b).unwrap()).fold(0.0, f64::max);
        assert!(gamma <= 8.0 * 0.1f64.sqrt());
    }

    #[test]
    fn deliberate_sandwich_breaks() {
        let cube_ball = {
            let mut rng = RngStream::new(5, 0);
            let dense = greedy_dense_set(&mut rng, 0.5, 3, 20_000).unwrap();
            build_lb_instance(&mut rng, &dense, 0.0, &[1.0, 0.0, 0.0]).unwrap().instance.polyhedron
        };
        let vertices = build_vertex_graph(&cube_ball).unwrap().points;
        assert!(sandwich_check(&cube_ball, 0.5, &vertices).holds());

        // one row at norm 3 pushes its half-space to distance 1/3
        let mut a = cube_ball.a.clone();
        for v in a.row_mut(0) {
            *v *= 3.0;
        }
        let tight = Polyhedron::new(a, cube_ball.b.clone()).unwrap();
        let v = build_vertex_graph(&tight).unwrap().points;
        let s = sandwich_check(&tight, 0.1, &v);
        assert!(!s.inner_ok);

        // all rows at norm 0.5 double the polytope
        let loose = Polyhedron::new(cube_ball.a.scale(0.5), cube_ball.b.clone()).unwrap();
        let v = build_vertex_graph(&loose).unwrap().points;
        let s = sandwich_check(&loose, 0.1, &v);
        assert!(s.inner_ok && !s.outer_ok);
    }

    #[test]
    fn facet_diameters() {
        let a = DenseMatrix::identity(3);
        let p = Polyhedron::new(a, vec![1.0; 3]).unwrap();
        assert!((polar_facet_diameter(&p, &[0, 1, 2]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let a = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [1.0, 1e-6, 0.0], [1.0, 0.0, 1e-6]]).unwrap();
        let p = Polyhedron::new(a, vec![1.0; 3]).unwrap();
        assert!(polar_facet_diameter(&p, &[0, 1, 2]).unwrap() < 2e-6);
        let p = Polyhedron::new(DenseMatrix::identity(3), vec![1.0, -1.0, 1.0]).unwrap();
        assert_eq!(polar_facet_diameter(&p, &[0, 1, 2]), Err(LowerBoundError::NonpositiveRhs { row: 1, rhs: -1.0 }));
    }

    #[test]
    fn bound_formula() {
        let b = rel_diam_bound(3, 1.4, 0.5);
        assert!((b - 1.714).abs() < 1e-3);
    }

    #[test]
    fn small_diameter_experiment() {
        let mut rng = RngStream::new(6, 0);
        let c = [0.3, -0.5, 0.8];
        let rec = diameter_experiment(&mut rng, 3, 0.3, &c, DiameterParams { audit_samples: 20_000, ..Default::default() })
            .unwrap();
        assert_eq!(rec.n, 2370);
        assert_eq!(rec.distance, rec.distance_reverse);
        assert!(rec.distance >= 1);
        if let Some(holds) = rec.bound_holds() {
            assert!(holds, "{rec:?}");
        }

        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        let mut rng = RngStream::new(6, 0);
        let flipped = diameter_experiment(&mut rng, 3, 0.3, &neg, DiameterParams { audit_samples: 20_000, ..Default::default() })
            .unwrap();
        assert_eq!(flipped.distance, rec.distance);
    }
}
