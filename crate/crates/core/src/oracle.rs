//! Brute-force ground truth for small instances.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::instance::{LpInstance, Polyhedron};
use crate::linalg::{dot, factorize, norm, sub};
use crate::shadow::{ratio_test, Basis, ShadowError};

pub const ENUMERATION_GUARD: f64 = 1e7;
pub const VERTEX_FEASIBILITY_TOL: f64 = 1e-9;
pub const HULL_COLLINEAR_TOL: f64 = 1e-12;
pub const PREIMAGE_TOL: f64 = 1e-9;
pub const DISCOVERY_GUARD: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("binom(n, d) = {0:e} exceeds the enumeration guard")]
    TooLarge(f64),
    #[error("hull point has {count} pre-images")]
    DegenerateShadow { count: usize },
    #[error("objectives are linearly dependent")]
    DependentObjectives,
    #[error("feasible set is nonempty but has no vertex")]
    NonPointed,
    #[error("vertex {to} unreachable from {from}")]
    Unreachable { from: usize, to: usize },
    #[error(transparent)]
    Shadow(#[from] ShadowError),
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All bases `I` with `A_I` invertible and `A x_I ≤ b + 1e-9`.
pub fn enumerate_feasible_bases(poly: &Polyhedron) -> Result<Vec<Basis>, OracleError> {
    let count = binomial(poly.n(), poly.d());
    if count > ENUMERATION_GUARD {
        return Err(OracleError::TooLarge(count));
    }
    let mut out = Vec::new();
    for_each_subset(poly.n(), poly.d(), |idx| {
        let sub = poly.a.select_rows(idx);
        let Ok(f) = factorize(&sub) else { return };
        let rhs: Vec<f64> = idx.iter().map(|&i| poly.b[i]).collect();
        let x = f.solve(&rhs);
        if poly.contains(&x, VERTEX_FEASIBILITY_TOL) {
            out.push(Basis::new(poly, idx.to_vec()).expect("factorization succeeded above"));
        }
    });
    Ok(out)
}

/// Infinite edges of the feasible vertices: directions `-A_I⁻¹e_j` with `Aw ≤ 0`.
pub fn basis_rays(poly: &Polyhedron, bases: &[Basis]) -> Vec<(usize, Vec<f64>)> {
    let mut rays = Vec::new();
    for (k, basis) in bases.iter().enumerate() {
        for pos in 0..poly.d() {
            let mut e = vec![0.0; poly.d()];
            e[pos] = 1.0;
            let w: Vec<f64> = basis.factorization().solve(&e).iter().map(|v| -v).collect();
            let scale = norm(&w);
            if poly.a.mul_vec(&w).iter().all(|v| *v <= VERTEX_FEASIBILITY_TOL * scale) {
                rays.push((k, w.iter().map(|v| v / scale).collect()));
            }
        }
    }
    rays
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal { basis: Vec<usize>, x: Vec<f64>, value: f64 },
    Unbounded { ray: Vec<f64> },
    Infeasible,
}

impl OracleOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            OracleOutcome::Optimal { .. } => "optimal",
            OracleOutcome::Unbounded { .. } => "unbounded",
            OracleOutcome::Infeasible => "infeasible",
        }
    }
}

/// `max objectiveᵀx` over the instance's polyhedron by enumeration.
///
/// Unboundedness is only detected through infinite edges at feasible
/// vertices, which covers every pointed polyhedron.
pub fn lp_optimum_oracle(instance: &LpInstance, objective: &[f64]) -> Result<OracleOutcome, OracleError> {
    let poly = &instance.polyhedron;
    let bases = enumerate_feasible_bases(poly)?;
    if bases.is_empty() {
        return if grid_has_feasible_point(poly) { Err(OracleError::NonPointed) } else { Ok(OracleOutcome::Infeasible) };
    }
    let obj_scale = norm(objective);
    if let Some((_, ray)) = basis_rays(poly, &bases).into_iter().find(|(_, w)| dot(objective, w) > 1e-12 * obj_scale) {
        return Ok(OracleOutcome::Unbounded { ray });
    }
    let best = bases
        .iter()
        .map(|b| (dot(objective, b.x()), b))
        .fold(None, |acc: Option<(f64, &Basis)>, (v, b)| match acc {
            Some((bv, _)) if bv >= v => acc,
            _ => Some((v, b)),
        })
        .expect("nonempty");
    Ok(OracleOutcome::Optimal { basis: best.1.indices().to_vec(), x: best.1.x().to_vec(), value: best.0 })
}

fn grid_has_feasible_point(poly: &Polyhedron) -> bool {
    const STEPS: usize = 9;
    const HALF_WIDTH: f64 = 4.0;
    let d = poly.d();
    let total = STEPS.saturating_pow(d as u32).min(1 << 20);
    let mut x = vec![0.0; d];
    (0..total).any(|mut code| {
        for v in x.iter_mut() {
            *v = -HALF_WIDTH + 2.0 * HALF_WIDTH * (code % STEPS) as f64 / (STEPS - 1) as f64;
            code /= STEPS;
        }
        poly.contains(&x, 0.0)
    })
}

/// Orthonormal basis of `span(c, z)` with the first vector along `c`.
pub fn plane_frame(c: &[f64], z: &[f64]) -> Result<[Vec<f64>; 2], OracleError> {
    let nc = norm(c);
    if nc == 0.0 {
        return Err(OracleError::DependentObjectives);
    }
    let f1: Vec<f64> = c.iter().map(|v| v / nc).collect();
    let proj = dot(z, &f1);
    let rest: Vec<f64> = z.iter().zip(&f1).map(|(zv, fv)| zv - proj * fv).collect();
    let nr = norm(&rest);
    if nr <= 1e-12 * norm(z).max(1.0) {
        return Err(OracleError::DependentObjectives);
    }
    Ok([f1, rest.iter().map(|v| v / nr).collect()])
}

pub fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain); returns indices into
/// `points`, dropping collinear points.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].partial_cmp(&points[j]).expect("finite points"));
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() < 3 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(order.iter()) } else { Box::new(order.iter().rev()) };
        for &i in iter {
            while hull.len() >= start + 2
                && cross2(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= HULL_COLLINEAR_TOL
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullVertex {
    /// `None` for the far points standing in for unbounded directions.
    pub basis: Option<Vec<usize>>,
    pub point: Vec<f64>,
    pub projected: [f64; 2],
}

/// Projection of the feasible set onto `span(c, z)`.
#[derive(Debug, Clone)]
pub struct ShadowPolygon {
    pub frame: [Vec<f64>; 2],
    /// Counter-clockwise.
    pub vertices: Vec<HullVertex>,
    pub unbounded: bool,
}

impl ShadowPolygon {
    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        [dot(&self.frame[0], x), dot(&self.frame[1], x)]
    }

    fn argmax(&self, dir: [f64; 2]) -> usize {
        let score = |v: &HullVertex| dir[0] * v.projected[0] + dir[1] * v.projected[1];
        let mut best = 0;
        for (i, v) in self.vertices.iter().enumerate() {
            if score(v) > score(&self.vertices[best]) {
                best = i;
            }
        }
        best
    }

    /// Basis labels of the hull vertices maximizing the objectives on the
    /// segment from `from` to `to`, in order.
    pub fn arc(&self, from: &[f64], to: &[f64]) -> Vec<Option<Vec<usize>>> {
        let (p, q) = (self.project(from), self.project(to));
        let forward = p[0] * q[1] - p[1] * q[0] > 0.0;
        let (start, end) = (self.argmax(p), self.argmax(q));
        let m = self.vertices.len();
        let mut out = vec![self.vertices[start].basis.clone()];
        let mut i = start;
        while i != end {
            i = if forward { (i + 1) % m } else { (i + m - 1) % m };
            out.push(self.vertices[i].basis.clone());
        }
        out
    }

    /// Sum of the exterior turning angles of a bounded polygon.
    pub fn exterior_angle_sum(&self) -> f64 {
        let pts: Vec<[f64; 2]> = self.vertices.iter().map(|v| v.projected).collect();
        let m = pts.len();
        (0..m)
            .map(|i| {
                let (a, b, c) = (pts[(i + m - 1) % m], pts[i], pts[(i + 1) % m]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - b[0], c[1] - b[1]];
                (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1])
            })
            .sum()
    }
}

/// Distance used for the far points that represent unbounded directions.
const FAR: f64 = 1e6;

pub fn shadow_polygon_oracle(poly: &Polyhedron, c: &[f64], z: &[f64]) -> Result<ShadowPolygon, OracleError> {
    let frame = plane_frame(c, z)?;
    let bases = enumerate_feasible_bases(poly)?;
    let proj = |x: &[f64]| [dot(&frame[0], x), dot(&frame[1], x)];
    let mut candidates: Vec<HullVertex> = bases
        .iter()
        .map(|b| HullVertex { basis: Some(b.indices().to_vec()), point: b.x().to_vec(), projected: proj(b.x()) })
        .collect();
    let rays = basis_rays(poly, &bases);
    let unbounded = rays.iter().any(|(_, w)| {
        let p = proj(w);
        p[0].hypot(p[1]) > 1e-9
    });
    for (k, w) in &rays {
        let p = proj(w);
        let len = p[0].hypot(p[1]);
        if len <= 1e-9 {
            continue;
        }
        let point: Vec<f64> = bases[*k].x().iter().zip(w).map(|(x, d)| x + FAR * d / len).collect();
        candidates.push(HullVertex { basis: None, projected: proj(&point), point });
    }
    let pts: Vec<[f64; 2]> = candidates.iter().map(|v| v.projected).collect();
    let hull = convex_hull(&pts);
    for &h in &hull {
        if candidates[h].basis.is_none() {
            continue;
        }
        let count = candidates
            .iter()
            .filter(|v| v.basis.is_some())
            .filter(|v| (v.projected[0] - pts[h][0]).hypot(v.projected[1] - pts[h][1]) <= PREIMAGE_TOL)
            .count();
        if count > 1 {
            return Err(OracleError::DegenerateShadow { count });
        }
    }
    let vertices = hull.into_iter().map(|i| candidates[i].clone()).collect();
    Ok(ShadowPolygon { frame, vertices, unbounded })
}

/// Vertices and edges of the 1-skeleton, keyed by basis.
#[derive(Debug, Clone, Default)]
pub struct VertexGraph {
    pub bases: Vec<Vec<usize>>,
    pub points: Vec<Vec<f64>>,
    pub adjacency: Vec<Vec<usize>>,
}

impl VertexGraph {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn find(&self, basis: &[usize]) -> Option<usize> {
        let mut key = basis.to_vec();
        key.sort_unstable();
        self.bases.iter().position(|b| *b == key)
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        if u != v && !self.adjacency[u].contains(&v) {
            self.adjacency[u].push(v);
            self.adjacency[v].push(u);
        }
    }
}

/// Full 1-skeleton by enumeration: two vertices are adjacent when their
/// bases share `d - 1` rows and the points differ.
pub fn build_vertex_graph(poly: &Polyhedron) -> Result<VertexGraph, OracleError> {
    let bases = enumerate_feasible_bases(poly)?;
    let mut g = VertexGraph {
        bases: bases.iter().map(|b| b.indices().to_vec()).collect(),
        points: bases.iter().map(|b| b.x().to_vec()).collect(),
        adjacency: vec![Vec::new(); bases.len()],
    };
    let mut facets: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (v, b) in g.bases.iter().enumerate() {
        for skip in 0..b.len() {
            let key: Vec<usize> = b.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, r)| *r).collect();
            facets.entry(key).or_default().push(v);
        }
    }
    let mut pairs = Vec::new();
    for members in facets.values() {
        for (i, &u) in members.iter().enumerate() {
            for &v in &members[i + 1..] {
                if norm(&sub(&g.points[u], &g.points[v])) > PREIMAGE_TOL {
                    pairs.push((u.min(v), u.max(v)));
                }
            }
        }
    }
    pairs.sort_unstable();
    for (u, v) in pairs {
        g.add_edge(u, v);
    }
    Ok(g)
}

/// 1-skeleton reachable from `start` by single pivots, without enumeration.
pub fn discover_vertex_graph(poly: &Polyhedron, start: &[usize], guard: usize) -> Result<VertexGraph, OracleError> {
    let first = Basis::new(poly, start.to_vec())?;
    let mut g = VertexGraph::default();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    index.insert(first.indices().to_vec(), 0);
    g.bases.push(first.indices().to_vec());
    g.points.push(first.x().to_vec());
    g.adjacency.push(Vec::new());
    queue.push_back(first);
    while let Some(basis) = queue.pop_front() {
        let u = index[basis.indices()];
        for &leaving in basis.indices() {
            let step = ratio_test(poly, &basis, leaving)?;
            let Some(entering) = step.entering else { continue };
            let mut key: Vec<usize> = basis.indices().iter().copied().filter(|&i| i != leaving).collect();
            key.push(entering);
            key.sort_unstable();
            let v = match index.get(&key) {
                Some(&v) => v,
                None => {
                    if g.len() >= guard {
                        return Err(OracleError::TooLarge(guard as f64));
                    }
                    let next = Basis::new(poly, key.clone())?;
                    let v = g.len();
                    index.insert(key.clone(), v);
                    g.bases.push(key);
                    g.points.push(next.x().to_vec());
                    g.adjacency.push(Vec::new());
                    queue.push_back(next);
                    v
                }
            };
            g.add_edge(u, v);
        }
    }
    Ok(g)
}

/// Shortest path length in edges.
pub fn bfs_distance(graph: &VertexGraph, from: usize, to: usize) -> Result<usize, OracleError> {
    let mut dist = vec![usize::MAX; graph.len()];
    let mut queue = VecDeque::from([from]);
    dist[from] = 0;
    while let Some(u) = queue.pop_front() {
        if u == to {
            return Ok(dist[u]);
        }
        for &v in &graph.adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Err(OracleError::Unreachable { from, to })
}
