//! Measurements on recorded shadow paths and shadow polygons.

use std::f64::consts::{E, PI};

use thiserror::Error;

use crate::instance::Polyhedron;
use crate::linalg::{dot, factorize, norm, DenseMatrix, LinalgError};
use crate::oracle::{plane_frame, OracleError};
use crate::randgen::RngStream;
use crate::shadow::{run_shadow_path, Basis, PivotOutcome, ShadowError, ShadowPath};

/// Vertex norms below this make the relative slack meaningless.
pub const ZERO_VERTEX_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("vertex norm {0:e} too small for a relative slack")]
    ZeroVertex(f64),
    #[error("polygon is not convex")]
    NonConvexInput,
    #[error("need at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ln(1/0.99) / (2d)`
pub fn default_margin_threshold(d: usize) -> f64 {
    (1.0f64 / 0.99).ln() / (2.0 * d as f64)
}

/// `σ / (5000 · d^1.5 · ln(n)^1.5)`
pub fn default_gap_threshold(sigma: f64, d: usize, n: usize) -> f64 {
    sigma / (5000.0 * (d as f64).powf(1.5) * (n as f64).ln().powf(1.5))
}

/// Maximum over `λ ∈ [0, 1]` of the smallest coordinate of `A_I⁻ᵀ((1-λ)c + λc2)`,
/// and a `λ` attaining it.
pub fn multiplier_margin(basis: &Basis, c: &[f64], c2: &[f64]) -> (f64, f64) {
    let m0 = basis.multipliers(c);
    let m1 = basis.multipliers(c2);
    let at = |l: f64| m0.iter().zip(&m1).map(|(a, b)| a + l * (b - a)).fold(f64::INFINITY, f64::min);
    let mut candidates = vec![0.0, 1.0];
    for i in 0..m0.len() {
        for j in 0..i {
            let (si, sj) = (m1[i] - m0[i], m1[j] - m0[j]);
            if si != sj {
                let l = (m0[j] - m0[i]) / (si - sj);
                if (0.0..=1.0).contains(&l) {
                    candidates.push(l);
                }
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for l in candidates {
        let v = at(l);
        if v > best.0 {
            best = (v, l);
        }
    }
    best
}

/// `min_{j ∉ I} (b_j - a_jᵀx_I) / ‖x_I‖`; `+inf` when every row is basic.
pub fn relative_slack(poly: &Polyhedron, basis: &Basis) -> Result<f64, AnalysisError> {
    let nx = norm(basis.x());
    if nx < ZERO_VERTEX_NORM {
        return Err(AnalysisError::ZeroVertex(nx));
    }
    Ok((0..poly.n()).filter(|&j| !basis.contains(j)).map(|j| poly.slack(j, basis.x()) / nx).fold(f64::INFINITY, f64::min))
}

/// Counts behind the inequality `3|S| ≤ 2k + |T^S| + 2|V|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriplesCount {
    pub members: usize,
    /// Members whose two path neighbors are also members.
    pub triples: usize,
    /// Maximal runs of consecutive members.
    pub components: usize,
    pub path_len: usize,
}

impl TriplesCount {
    pub fn holds(&self) -> bool {
        3 * self.members <= 2 * self.components + self.triples + 2 * self.path_len
    }
}

pub fn count_triples(membership: &[bool]) -> TriplesCount {
    let len = membership.len();
    let members = membership.iter().filter(|&&m| m).count();
    let triples = (1..len.saturating_sub(1)).filter(|&i| membership[i - 1] && membership[i] && membership[i + 1]).count();
    let components = (0..len).filter(|&i| membership[i] && (i == 0 || !membership[i - 1])).count();
    TriplesCount { members, triples, components, path_len: len }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisRecord {
    pub indices: Vec<usize>,
    pub margin: f64,
    pub margin_lambda: f64,
    /// `None` when the vertex is too close to the origin.
    pub slack: Option<f64>,
    pub projected_norm: f64,
    /// Projected distance to each path neighbor divided by `projected_norm`.
    pub neighbor_distances: Vec<f64>,
    /// Turning angle of the projected path; `None` at the endpoints.
    pub exterior_angle: Option<f64>,
    pub in_m: bool,
    pub in_g: bool,
    pub in_h: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub records: Vec<BasisRecord>,
    /// Triples statistics for `S = M ∩ G`.
    pub good: TriplesCount,
    pub hermits: usize,
}

impl PathReport {
    pub fn membership_m_and_g(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.in_m && r.in_g).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub m: f64,
    pub g: f64,
    pub rho: f64,
}

/// Per-basis measurements of a path recorded between objectives `c` and `c2`.
/// Projections use the orthonormal frame of `span(c, c2)`.
pub fn classify_path(
    path: &[Vec<usize>],
    poly: &Polyhedron,
    c: &[f64],
    c2: &[f64],
    th: Thresholds,
) -> Result<PathReport, AnalysisError> {
    let frame = plane_frame(c, c2)?;
    let bases: Vec<Basis> = path.iter().map(|idx| Basis::new(poly, idx.clone())).collect::<Result<_, _>>()?;
    let proj: Vec<[f64; 2]> = bases.iter().map(|b| [dot(&frame[0], b.x()), dot(&frame[1], b.x())]).collect();
    let len = bases.len();
    let mut records = Vec::with_capacity(len);
    for (i, basis) in bases.iter().enumerate() {
        let (margin, margin_lambda) = multiplier_margin(basis, c, c2);
        let slack = match relative_slack(poly, basis) {
            Ok(s) => Some(s),
            Err(AnalysisError::ZeroVertex(_)) => None,
            Err(e) => return Err(e),
        };
        let pn = proj[i][0].hypot(proj[i][1]);
        let neighbors: Vec<usize> = [i.checked_sub(1), (i + 1 < len).then_some(i + 1)].into_iter().flatten().collect();
        let neighbor_distances: Vec<f64> = neighbors
            .iter()
            .map(|&j| (proj[j][0] - proj[i][0]).hypot(proj[j][1] - proj[i][1]) / pn)
            .collect();
        let exterior_angle = (neighbors.len() == 2).then(|| turn(proj[i - 1], proj[i], proj[i + 1]).abs());
        records.push(BasisRecord {
            indices: basis.indices().to_vec(),
            margin,
            margin_lambda,
            slack,
            projected_norm: pn,
            in_m: margin >= th.m,
            in_g: slack.is_some_and(|s| s >= th.g),
            in_h: neighbor_distances.iter().all(|&r| r >= th.rho),
            neighbor_distances,
            exterior_angle,
        });
    }
    let membership: Vec<bool> = records.iter().map(|r| r.in_m && r.in_g).collect();
    let hermits = records.iter().filter(|r| r.in_h).count();
    Ok(PathReport { good: count_triples(&membership), hermits, records })
}

fn turn(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - b[0], c[1] - b[1]];
    (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1])
}

/// Exterior angles of a convex polygon given in either orientation.
pub fn exterior_angles(polygon: &[[f64; 2]]) -> Result<Vec<f64>, AnalysisError> {
    let m = polygon.len();
    if m < 3 {
        return Err(AnalysisError::TooFewVertices(m));
    }
    let mut angles: Vec<f64> = (0..m).map(|i| turn(polygon[(i + m - 1) % m], polygon[i], polygon[(i + 1) % m])).collect();
    if angles.iter().all(|&a| a < 0.0) {
        angles.iter_mut().for_each(|a| *a = -*a);
    }
    if angles.iter().any(|&a| !(a > 0.0 && a < PI)) {
        return Err(AnalysisError::NonConvexInput);
    }
    Ok(angles)
}

/// `∫ ‖x‖⁻¹ dx` over the part of the closed polygon boundary inside the
/// annulus `r ≤ ‖x‖ ≤ big_r`.
pub fn boundary_integral(polygon: &[[f64; 2]], big_r: f64, r: f64) -> Result<f64, AnalysisError> {
    if !(r > 0.0 && big_r > r) {
        return Err(AnalysisError::BadParameter(format!("annulus ({big_r}, {r})")));
    }
    let m = polygon.len();
    let mut total = 0.0;
    for i in 0..m {
        let (p, q) = (polygon[i], polygon[(i + 1) % m]);
        total += edge_integral(p, [q[0] - p[0], q[1] - p[1]], big_r, r);
    }
    Ok(total)
}

fn edge_integral(p: [f64; 2], v: [f64; 2], big_r: f64, r: f64) -> f64 {
    let vv = v[0] * v[0] + v[1] * v[1];
    if vv == 0.0 {
        return 0.0;
    }
    let pv = p[0] * v[0] + p[1] * v[1];
    let pp = p[0] * p[0] + p[1] * p[1];
    let closest = -pv / vv;
    let mut cuts = vec![0.0, 1.0, closest];
    for rad in [r, big_r] {
        // vv s² + 2 pv s + pp - rad² = 0
        let disc = pv * pv - vv * (pp - rad * rad);
        if disc >= 0.0 {
            let sq = disc.sqrt();
            cuts.push((-pv - sq) / vv);
            cuts.push((-pv + sq) / vv);
        }
    }
    cuts.retain(|s| (0.0..=1.0).contains(s));
    cuts.sort_by(f64::total_cmp);
    let at = |s: f64| [p[0] + s * v[0], p[1] + s * v[1]];
    let nv = vv.sqrt();
    let antiderivative = |s: f64, forward: bool| {
        let x = at(s);
        let nx = x[0].hypot(x[1]);
        let vx = v[0] * x[0] + v[1] * x[1];
        if forward {
            (nv * nx + vx).ln()
        } else {
            -(nv * nx - vx).ln()
        }
    };
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = at(0.5 * (w[0] + w[1]));
            let nm = mid[0].hypot(mid[1]);
            if nm < r || nm > big_r {
                return 0.0;
            }
            let forward = 0.5 * (w[0] + w[1]) >= closest;
            antiderivative(w[1], forward) - antiderivative(w[0], forward)
        })
        .sum()
}

/// `4π⌈log₂(R/r)⌉`
pub fn donut_bound(big_r: f64, r: f64) -> f64 {
    4.0 * PI * (big_r / r).log2().ceil()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeTrial {
    pub trials: usize,
    /// Fraction of trials where the segment meets the cone.
    pub p0: f64,
    /// Fraction where it meets the cone shifted by the margin.
    pub pm: f64,
    /// Mean and standard deviation of `1[hit at m] - 0.99·1[hit at 0]`.
    pub diff_mean: f64,
    pub diff_sd: f64,
}

impl ConeTrial {
    pub fn std_error(&self) -> f64 {
        self.diff_sd / (self.trials as f64).sqrt()
    }

    /// `pm ≥ 0.99·p0` within three standard errors.
    pub fn passes(&self) -> bool {
        self.diff_mean >= -3.0 * self.std_error()
    }
}

/// Monte Carlo frequency that `[c + Z, c2 + Z]` meets `{y : B⁻¹y ≥ 0}` and
/// `{y : B⁻¹y ≥ m}` for `Z` drawn from the exponential ball.
pub fn segment_cone_trial(
    rng: &mut RngStream,
    b: &DenseMatrix,
    c: &[f64],
    c2: &[f64],
    m: f64,
    trials: usize,
) -> Result<ConeTrial, AnalysisError> {
    let d = b.rows();
    let f = factorize(b)?;
    if trials == 0 {
        return Err(AnalysisError::BadParameter("trials must be positive".into()));
    }
    let base0 = f.solve(c);
    let base1 = f.solve(c2);
    let (mut h0, mut hm) = (0usize, 0usize);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let zc = f.solve(&rng.exp_ball_sample(d));
        let u0: Vec<f64> = base0.iter().zip(&zc).map(|(a, z)| a + z).collect();
        let u1: Vec<f64> = base1.iter().zip(&zc).map(|(a, z)| a + z).collect();
        let hit0 = segment_meets(&u0, &u1, 0.0);
        let hitm = segment_meets(&u0, &u1, m);
        h0 += hit0 as usize;
        hm += hitm as usize;
        let x = hitm as u8 as f64 - 0.99 * hit0 as u8 as f64;
        sum += x;
        sum_sq += x * x;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(ConeTrial { trials, p0: h0 as f64 / n, pm: hm as f64 / n, diff_mean: mean, diff_sd: var.sqrt() })
}

/// Whether some `λ ∈ [0, 1]` has `u0 + λ(u1 - u0) ≥ thr` coordinatewise.
fn segment_meets(u0: &[f64], u1: &[f64], thr: f64) -> bool {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (&a, &b) in u0.iter().zip(u1) {
        let slope = b - a;
        let gap = thr - a;
        if slope == 0.0 {
            if a < thr {
                return false;
            }
        } else if slope > 0.0 {
            lo = lo.max(gap / slope);
        } else {
            hi = hi.min(gap / slope);
        }
        if lo > hi {
            return false;
        }
    }
    true
}

/// Objectives `Z, Z + 2⁰c, …, Z + 2^k c, c`. Every one lies on the ray
/// through the segment `[Z, c]` after rescaling, so consecutive shadow paths
/// concatenate to the path from `Z` to `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSchedule {
    pub c: Vec<f64>,
    pub z: Vec<f64>,
    pub k: usize,
    pub objectives: Vec<Vec<f64>>,
}

/// `5d⌈log₂(n·t)⌉` with `t = 2ed·ln n`.
pub fn schedule_length(n: usize, d: usize) -> usize {
    let t = 2.0 * E * d as f64 * (n as f64).ln();
    5 * d * ((n as f64 * t).log2().ceil() as usize)
}

pub fn build_schedule(c: &[f64], z: &[f64], n: usize, d: usize) -> ObjectiveSchedule {
    schedule_with_k(c, z, schedule_length(n, d))
}

pub fn schedule_with_k(c: &[f64], z: &[f64], k: usize) -> ObjectiveSchedule {
    let mut objectives = vec![z.to_vec()];
    for i in 0..=k {
        let s = 2f64.powi(i as i32);
        objectives.push(z.iter().zip(c).map(|(zv, cv)| zv + s * cv).collect());
    }
    objectives.push(c.to_vec());
    ObjectiveSchedule { c: c.to_vec(), z: z.to_vec(), k, objectives }
}

/// Walks each consecutive pair of the schedule, chaining end bases.
pub fn run_schedule(
    poly: &Polyhedron,
    schedule: &ObjectiveSchedule,
    start: Basis,
    limit: usize,
) -> Result<Vec<ShadowPath>, AnalysisError> {
    let mut paths = Vec::with_capacity(schedule.objectives.len() - 1);
    let mut basis = start;
    for pair in schedule.objectives.windows(2) {
        let (path, outcome) = run_shadow_path(poly, &pair[0], &pair[1], basis, limit)?;
        let PivotOutcome::Finished(end) = outcome else {
            return Err(AnalysisError::BadParameter("schedule segment is unbounded".into()));
        };
        basis = end;
        paths.push(path);
    }
    Ok(paths)
}
