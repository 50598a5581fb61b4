//! Experiment configs, per-trial records, CSV/JSON/SVG output.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    classify_path, default_gap_threshold, default_margin_threshold, segment_cone_trial, Thresholds,
};
use crate::linalg::{scaled, DenseMatrix};
use crate::lower_bound::{diameter_experiment, DiameterParams, DiameterRecord};
use crate::oracle::DISCOVERY_GUARD;
use crate::randgen::{smoothed_instance, RngStream};
use crate::shadow::DEFAULT_PIVOT_LIMIT;
use crate::three_phase::{solve, SolveOutcome, SolverOptions, DEFAULT_MAX_RESTARTS};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const SHADOW_COLUMNS: &[&str] = &[
    "schema",
    "experiment",
    "sigma",
    "trial",
    "d",
    "n",
    "seed",
    "stream",
    "status",
    "outcome",
    "attempts",
    "pivots_phase1",
    "pivots_phase2",
    "pivots_phase3",
    "pivots_total",
    "path_len",
    "frac_m",
    "frac_g",
    "frac_t",
    "frac_h",
    "min_proj_norm",
    "max_proj_norm",
    "error",
];

pub const LOWERBOUND_COLUMNS: &[&str] = &[
    "schema",
    "experiment",
    "sigma",
    "trial",
    "d",
    "n",
    "seed",
    "stream",
    "status",
    "dense_size",
    "eta",
    "norm_event",
    "inner_ok",
    "outer_ok",
    "inner_margin",
    "outer_margin",
    "in_regime",
    "vertices",
    "distance",
    "distance_reverse",
    "gamma",
    "facet_bound_ok",
    "r_measured",
    "r_nominal",
    "bound",
    "bound_ok",
    "error",
];

pub const CONE_COLUMNS: &[&str] = &[
    "schema", "experiment", "config", "d", "seed", "stream", "trials", "m", "p0", "pm", "diff_mean", "std_error", "passes",
];

/// Appended to every table when wall-clock timing is switched on.
pub const WALL_TIME_COLUMN: &str = "wall_ms";

/// Solver streams use the trial stream under this seed offset so that the
/// instance noise and the solver draws never share a stream.
const SOLVER_SEED_SALT: u64 = 0x5eed_501e;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub sigmas: Vec<f64>,
    /// Trials per sigma; the number of seeds for lower-bound runs.
    pub trials: usize,
    pub seed: u64,
    pub stream_base: u64,
    pub perturb_b: bool,
    pub max_restarts: usize,
    pub pivot_limit: usize,
    pub rho: f64,
    pub audit_samples: usize,
    pub guard: usize,
    /// Number of random `(B, c, c2)` triples for cone runs.
    pub configs: usize,
    pub margin: Option<f64>,
    pub wall_time: bool,
    pub plot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            d: 4,
            n: 50,
            sigmas: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            trials: 200,
            seed: 1,
            stream_base: 0,
            perturb_b: false,
            max_restarts: DEFAULT_MAX_RESTARTS,
            pivot_limit: DEFAULT_PIVOT_LIMIT,
            rho: 0.1,
            audit_samples: 100_000,
            guard: DISCOVERY_GUARD,
            configs: 20,
            margin: None,
            wall_time: false,
            plot: true,
        }
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(HarnessError::Config { line, message: format!("expected key = value, got `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            let err = |message: String| HarnessError::Config { line, message };
            let num = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{key}` expects an integer, got `{v}`")));
            let real = |v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, got `{v}`")));
            let flag = |v: &str| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(err(format!("`{key}` expects true or false, got `{v}`"))),
            };
            match key {
                "name" => {
                    if value.is_empty() || !value.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                        return Err(err(format!("name `{value}` must be nonempty [A-Za-z0-9_-]")));
                    }
                    cfg.name = value.to_string();
                }
                "d" => cfg.d = num(value)?,
                "n" => cfg.n = num(value)?,
                "sigma" | "sigmas" => cfg.sigmas = value.split(',').map(|v| real(v.trim())).collect::<Result<_, _>>()?,
                "trials" => cfg.trials = num(value)?,
                "seed" => cfg.seed = value.parse().map_err(|_| err(format!("bad seed `{value}`")))?,
                "stream_base" => cfg.stream_base = value.parse().map_err(|_| err(format!("bad stream_base `{value}`")))?,
                "perturb_b" => cfg.perturb_b = flag(value)?,
                "max_restarts" => cfg.max_restarts = num(value)?,
                "pivot_limit" => cfg.pivot_limit = num(value)?,
                "rho" => cfg.rho = real(value)?,
                "audit_samples" => cfg.audit_samples = num(value)?,
                "guard" => cfg.guard = num(value)?,
                "configs" => cfg.configs = num(value)?,
                "margin" => cfg.margin = Some(real(value)?),
                "wall_time" => cfg.wall_time = flag(value)?,
                "plot" => cfg.plot = flag(value)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.to_string()));
        if self.d == 0 || self.n == 0 || self.trials == 0 || self.max_restarts == 0 || self.pivot_limit == 0 {
            return bad("d, n, trials, max_restarts and pivot_limit must be positive");
        }
        if self.audit_samples == 0 || self.guard == 0 || self.configs == 0 {
            return bad("audit_samples, guard and configs must be positive");
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("sigma grid must be nonempty and positive");
        }
        if self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sigma grid must be strictly increasing");
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if self.margin.is_some_and(|m| !(m.is_finite() && m >= 0.0)) {
            return bad("margin must be nonnegative");
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn csv_table(columns: &[&str], rows: &[Vec<String>], wall: Option<&[f64]>) -> String {
    let mut out = columns.join(",");
    if wall.is_some() {
        out.push(',');
        out.push_str(WALL_TIME_COLUMN);
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        debug_assert_eq!(row.len(), columns.len());
        out.push_str(&row.join(","));
        if let Some(w) = wall {
            let _ = write!(out, ",{:.3}", w[i]);
        }
        out.push('\n');
    }
    out
}

/// One shadow-size trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowRecord {
    pub sigma: f64,
    pub trial: usize,
    pub stream: u64,
    pub outcome: Option<&'static str>,
    pub attempts: usize,
    pub pivots: [usize; 3],
    pub path_len: usize,
    pub frac: Option<[f64; 4]>,
    pub proj_norm_range: Option<(f64, f64)>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl ShadowRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn total_pivots(&self) -> usize {
        self.pivots.iter().sum()
    }

    fn csv_fields(&self, cfg: &ExperimentConfig) -> Vec<String> {
        let frac = |k: usize| fmt_opt(self.frac.map(|f| f[k]));
        vec![
            CSV_SCHEMA_VERSION.to_string(),
            cfg.name.clone(),
            format!("{}", self.sigma),
            self.trial.to_string(),
            cfg.d.to_string(),
            cfg.n.to_string(),
            cfg.seed.to_string(),
            self.stream.to_string(),
            if self.ok() { "ok" } else { "error" }.into(),
            self.outcome.unwrap_or("").into(),
            self.attempts.to_string(),
            self.pivots[0].to_string(),
            self.pivots[1].to_string(),
            self.pivots[2].to_string(),
            self.total_pivots().to_string(),
            self.path_len.to_string(),
            frac(0),
            frac(1),
            frac(2),
            frac(3),
            fmt_opt(self.proj_norm_range.map(|r| r.0)),
            fmt_opt(self.proj_norm_range.map(|r| r.1)),
            sanitize(self.error.as_deref().unwrap_or("")),
        ]
    }
}

/// Builds the trial's instance. Rows `(ā_i, b̄_i) = (u_i, 1)/√2` with `u_i`
/// uniform on the sphere; the unperturbed data are fixed per trial index, so
/// every sigma sees the same rows, objective and standard normal draws.
pub fn shadow_trial_instance(cfg: &ExperimentConfig, sigma: f64, trial: usize) -> crate::randgen::SmoothedInstance {
    let stream = cfg.stream_base + trial as u64;
    let mut rng = RngStream::new(cfg.seed, stream);
    let rows: Vec<Vec<f64>> = (0..cfg.n).map(|_| scaled(&rng.uniform_sphere(cfg.d), FRAC_1_SQRT_2)).collect();
    let c = rng.uniform_sphere(cfg.d);
    let abar = DenseMatrix::from_rows(&rows).expect("rows share dimension d");
    smoothed_instance(&mut rng, &abar, &vec![FRAC_1_SQRT_2; cfg.n], &c, sigma, cfg.perturb_b)
        .expect("rows have unit norm by construction")
}

pub fn shadow_trial(cfg: &ExperimentConfig, sigma: f64, trial: usize) -> ShadowRecord {
    let stream = cfg.stream_base + trial as u64;
    let clock = Instant::now();
    let inst = shadow_trial_instance(cfg, sigma, trial);
    let mut rng = RngStream::new(cfg.seed ^ SOLVER_SEED_SALT, stream);
    let opts = SolverOptions { max_restarts: cfg.max_restarts, artificial_sigma: None, pivot_limit: cfg.pivot_limit };
    let mut rec = ShadowRecord {
        sigma,
        trial,
        stream,
        outcome: None,
        attempts: 0,
        pivots: [0; 3],
        path_len: 0,
        frac: None,
        proj_norm_range: None,
        error: None,
        wall_ms: 0.0,
    };
    match solve(&mut rng, &inst.instance, &opts) {
        Ok(report) => {
            rec.outcome = Some(report.outcome.kind());
            rec.attempts = report.attempts;
            rec.pivots = [report.pivots.phase1, report.pivots.phase2, report.pivots.phase3];
            rec.path_len = report.phase3_path.len();
            if matches!(report.outcome, SolveOutcome::Optimal { .. }) {
                let th = Thresholds {
                    m: default_margin_threshold(cfg.d),
                    g: default_gap_threshold(sigma, cfg.d, cfg.n),
                    rho: cfg.rho,
                };
                match classify_path(&report.phase3_path, &inst.instance.polyhedron, &report.z, &inst.instance.c, th) {
                    Ok(pr) => {
                        let len = pr.records.len() as f64;
                        let count = |f: &dyn Fn(&crate::analysis::BasisRecord) -> bool| {
                            pr.records.iter().filter(|r| f(r)).count() as f64 / len
                        };
                        rec.frac = Some([
                            count(&|r| r.in_m),
                            count(&|r| r.in_g),
                            pr.good.triples as f64 / len,
                            count(&|r| r.in_h),
                        ]);
                        let norms = pr.records.iter().map(|r| r.projected_norm);
                        rec.proj_norm_range = Some((
                            norms.clone().fold(f64::INFINITY, f64::min),
                            norms.fold(f64::NEG_INFINITY, f64::max),
                        ));
                    }
                    Err(e) => rec.error = Some(format!("classify: {e}")),
                }
            }
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    rec
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_pivots: f64,
    pub median_pivots: f64,
    pub mean_phase1: f64,
    pub mean_phase2: f64,
    pub mean_phase3: f64,
    pub geometric_mean_attempts: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ShadowSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub perturb_b: bool,
    pub columns: Vec<String>,
    pub per_sigma: Vec<SigmaSummary>,
    /// Least-squares slope of `ln(mean pivots)` against `ln(sigma)`.
    pub loglog_slope: Option<f64>,
    pub nonincreasing: bool,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn geometric_mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

/// Slope of the least-squares line through `(ln x, ln y)`; `None` with fewer
/// than two usable points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn summarize_shadow(cfg: &ExperimentConfig, rows: &[ShadowRecord]) -> ShadowSummary {
    let per_sigma: Vec<SigmaSummary> = cfg
        .sigmas
        .iter()
        .map(|&sigma| {
            let group: Vec<&ShadowRecord> = rows.iter().filter(|r| r.sigma == sigma).collect();
            let ok: Vec<&&ShadowRecord> = group.iter().filter(|r| r.ok()).collect();
            let col = |f: &dyn Fn(&ShadowRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let totals = col(&|r| r.total_pivots() as f64);
            SigmaSummary {
                sigma,
                trials: group.len(),
                failures: group.len() - ok.len(),
                mean_pivots: mean(&totals),
                median_pivots: median(&totals),
                mean_phase1: mean(&col(&|r| r.pivots[0] as f64)),
                mean_phase2: mean(&col(&|r| r.pivots[1] as f64)),
                mean_phase3: mean(&col(&|r| r.pivots[2] as f64)),
                geometric_mean_attempts: geometric_mean(&col(&|r| r.attempts as f64)),
            }
        })
        .collect();
    let means: Vec<f64> = per_sigma.iter().map(|s| s.mean_pivots).collect();
    ShadowSummary {
        schema_version: CSV_SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        d: cfg.d,
        n: cfg.n,
        seed: cfg.seed,
        perturb_b: cfg.perturb_b,
        columns: SHADOW_COLUMNS.iter().map(|s| s.to_string()).collect(),
        loglog_slope: loglog_slope(&cfg.sigmas, &means),
        nonincreasing: means.windows(2).all(|w| w[1] <= w[0]),
        per_sigma,
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Rows ordered by sigma, then trial index, regardless of `jobs`.
pub fn run_shadow_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ShadowRecord>, HarnessError> {
    cfg.validate()?;
    if cfg.d < 3 {
        return Err(HarnessError::Invalid("the solver needs d ≥ 3".into()));
    }
    let tasks: Vec<(f64, usize)> = cfg.sigmas.iter().flat_map(|&s| (0..cfg.trials).map(move |t| (s, t))).collect();
    Ok(pool(jobs)?.install(|| tasks.par_iter().map(|&(s, t)| shadow_trial(cfg, s, t)).collect()))
}

pub fn shadow_csv(cfg: &ExperimentConfig, rows: &[ShadowRecord]) -> String {
    let fields: Vec<Vec<String>> = rows.iter().map(|r| r.csv_fields(cfg)).collect();
    let wall: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
    csv_table(SHADOW_COLUMNS, &fields, cfg.wall_time.then_some(&wall[..]))
}

/// Log-log scatter of mean pivots against sigma with the fitted line.
pub fn shadow_svg(summary: &ShadowSummary) -> String {
    let (w, h, pad) = (480.0, 360.0, 48.0);
    let pts: Vec<(f64, f64)> = summary
        .per_sigma
        .iter()
        .filter(|s| s.mean_pivots > 0.0)
        .map(|s| (s.sigma.log10(), s.mean_pivots.log10()))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}: mean pivots vs sigma (log-log)</text>"#,
        w / 2.0,
        summary.experiment
    );
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    if !pts.is_empty() {
        let (x0, x1) = bounds(pts.iter().map(|p| p.0));
        let (y0, y1) = bounds(pts.iter().map(|p| p.1));
        let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        for &(x, y) in &pts {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/>"#, sx(x), sy(y));
        }
        if let Some(slope) = summary.loglog_slope {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let line = |x: f64| my + slope * (x - mx);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="4 3"/>"#,
                sx(x0),
                sy(line(x0)),
                sx(x1),
                sy(line(x1))
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">slope {slope:.3}</text>"#,
                w - pad - 90.0,
                pad
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="11">sigma 10^{x0:.2} .. 10^{x1:.2}, pivots 10^{y0:.2} .. 10^{y1:.2}</text>"#,
            h - 12.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Min and max, widened when they coincide.
fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[derive(Debug, Clone)]
pub struct LowerBoundRow {
    pub sigma: f64,
    pub trial: usize,
    pub stream: u64,
    pub result: Result<DiameterRecord, String>,
    pub wall_ms: f64,
}

pub fn lowerbound_trial(cfg: &ExperimentConfig, sigma: f64, trial: usize) -> LowerBoundRow {
    let stream = cfg.stream_base + trial as u64;
    let clock = Instant::now();
    let mut rng = RngStream::new(cfg.seed, stream);
    let c = rng.uniform_sphere(cfg.d);
    let params = DiameterParams { audit_samples: cfg.audit_samples, guard: cfg.guard };
    let result = diameter_experiment(&mut rng, cfg.d, sigma, &c, params).map_err(|e| e.to_string());
    LowerBoundRow { sigma, trial, stream, result, wall_ms: clock.elapsed().as_secs_f64() * 1e3 }
}

pub fn run_lowerbound_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<LowerBoundRow>, HarnessError> {
    cfg.validate()?;
    if cfg.d < 3 {
        return Err(HarnessError::Invalid("the solver needs d ≥ 3".into()));
    }
    let tasks: Vec<(f64, usize)> = cfg.sigmas.iter().flat_map(|&s| (0..cfg.trials).map(move |t| (s, t))).collect();
    Ok(pool(jobs)?.install(|| tasks.par_iter().map(|&(s, t)| lowerbound_trial(cfg, s, t)).collect()))
}

pub fn lowerbound_csv(cfg: &ExperimentConfig, rows: &[LowerBoundRow]) -> String {
    let b = |v: Option<bool>| v.map_or(String::new(), |x| x.to_string());
    let fields: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let head = vec![
                CSV_SCHEMA_VERSION.to_string(),
                cfg.name.clone(),
                format!("{}", row.sigma),
                row.trial.to_string(),
                cfg.d.to_string(),
            ];
            let tail = match &row.result {
                Ok(r) => vec![
                    r.n.to_string(),
                    cfg.seed.to_string(),
                    row.stream.to_string(),
                    "ok".into(),
                    r.dense_size.to_string(),
                    format!("{}", r.eta),
                    r.norm_event.to_string(),
                    r.sandwich.inner_ok.to_string(),
                    r.sandwich.outer_ok.to_string(),
                    format!("{}", r.sandwich.inner_margin),
                    format!("{}", r.sandwich.outer_margin),
                    r.sandwich.in_regime.to_string(),
                    r.vertices.to_string(),
                    r.distance.to_string(),
                    r.distance_reverse.to_string(),
                    fmt_opt(r.gamma),
                    b(r.facet_bound_holds()),
                    format!("{}", r.r_measured),
                    format!("{}", r.r_nominal),
                    fmt_opt(r.bound),
                    b(r.bound_holds()),
                    String::new(),
                ],
                Err(e) => {
                    let mut v = vec![String::new(), cfg.seed.to_string(), row.stream.to_string(), "error".into()];
                    v.extend(std::iter::repeat_n(String::new(), 17));
                    v.push(sanitize(e));
                    v
                }
            };
            [head, tail].concat()
        })
        .collect();
    let wall: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
    csv_table(LOWERBOUND_COLUMNS, &fields, cfg.wall_time.then_some(&wall[..]))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LowerBoundSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub d: usize,
    pub runs: usize,
    pub failures: usize,
    pub norm_event_runs: usize,
    /// Runs where the norm event held but the sandwich failed.
    pub sandwich_violations: usize,
    /// Runs where the sandwich held with `η ≤ 1/8` but `γ > 8√η`.
    pub facet_bound_violations: usize,
    /// `γ > 8√η` on any run, regardless of regime.
    pub facet_bound_exceeded: usize,
    pub in_regime_runs: usize,
    pub distance_bound_violations: usize,
    pub min_distance: Option<usize>,
    pub max_gamma: Option<f64>,
}

pub fn summarize_lowerbound(cfg: &ExperimentConfig, rows: &[LowerBoundRow]) -> LowerBoundSummary {
    let ok: Vec<&DiameterRecord> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    LowerBoundSummary {
        schema_version: CSV_SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        d: cfg.d,
        runs: rows.len(),
        failures: rows.len() - ok.len(),
        norm_event_runs: ok.iter().filter(|r| r.norm_event).count(),
        sandwich_violations: ok.iter().filter(|r| r.norm_event && !r.sandwich.holds()).count(),
        facet_bound_violations: ok
            .iter()
            .filter(|r| r.sandwich.holds() && r.sandwich.in_regime && r.facet_bound_holds() == Some(false))
            .count(),
        facet_bound_exceeded: ok.iter().filter(|r| r.facet_bound_holds() == Some(false)).count(),
        in_regime_runs: ok.iter().filter(|r| r.sandwich.in_regime).count(),
        distance_bound_violations: ok.iter().filter(|r| r.bound_holds() == Some(false)).count(),
        min_distance: ok.iter().map(|r| r.distance).min(),
        max_gamma: ok.iter().filter_map(|r| r.gamma).reduce(f64::max),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConeRow {
    pub config: usize,
    pub stream: u64,
    pub trials: usize,
    pub m: f64,
    pub p0: f64,
    pub pm: f64,
    pub diff_mean: f64,
    pub std_error: f64,
    pub passes: bool,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Random `B` with column norms in `[0.5, 2]`, and `c`, `c2` with standard
/// deviation 2 per coordinate.
pub fn cone_configuration(rng: &mut RngStream, d: usize) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let mut b = DenseMatrix::zeros(d, d);
    for j in 0..d {
        let col = scaled(&rng.uniform_sphere(d), 0.5 + 1.5 * rng.uniform());
        for (i, v) in col.into_iter().enumerate() {
            b.set(i, j, v);
        }
    }
    let c = scaled(&rng.standard_normal_vec(d), 2.0);
    let c2 = scaled(&rng.standard_normal_vec(d), 2.0);
    (b, c, c2)
}

pub fn cone_trial_row(cfg: &ExperimentConfig, config: usize) -> Result<ConeRow, HarnessError> {
    let stream = cfg.stream_base + config as u64;
    let clock = Instant::now();
    let mut rng = RngStream::new(cfg.seed, stream);
    let (b, c, c2) = cone_configuration(&mut rng, cfg.d);
    let m = cfg.margin.unwrap_or_else(|| default_margin_threshold(cfg.d));
    let t = segment_cone_trial(&mut rng, &b, &c, &c2, m, cfg.trials).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    Ok(ConeRow {
        config,
        stream,
        trials: cfg.trials,
        m,
        p0: t.p0,
        pm: t.pm,
        diff_mean: t.diff_mean,
        std_error: t.std_error(),
        passes: t.passes(),
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run_cone_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ConeRow>, HarnessError> {
    cfg.validate()?;
    pool(jobs)?.install(|| (0..cfg.configs).into_par_iter().map(|k| cone_trial_row(cfg, k)).collect())
}

pub fn cone_csv(cfg: &ExperimentConfig, rows: &[ConeRow]) -> String {
    let fields: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                CSV_SCHEMA_VERSION.to_string(),
                cfg.name.clone(),
                r.config.to_string(),
                cfg.d.to_string(),
                cfg.seed.to_string(),
                r.stream.to_string(),
                r.trials.to_string(),
                format!("{}", r.m),
                format!("{}", r.p0),
                format!("{}", r.pm),
                format!("{}", r.diff_mean),
                format!("{}", r.std_error),
                r.passes.to_string(),
            ]
        })
        .collect();
    let wall: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
    csv_table(CONE_COLUMNS, &fields, cfg.wall_time.then_some(&wall[..]))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConeSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub d: usize,
    pub configs: usize,
    pub trials: usize,
    pub m: f64,
    pub passing: usize,
    pub rows: Vec<ConeRow>,
}

pub fn summarize_cone(cfg: &ExperimentConfig, rows: &[ConeRow]) -> ConeSummary {
    ConeSummary {
        schema_version: CSV_SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        d: cfg.d,
        configs: rows.len(),
        trials: cfg.trials,
        m: cfg.margin.unwrap_or_else(|| default_margin_threshold(cfg.d)),
        passing: rows.iter().filter(|r| r.passes).count(),
        rows: rows.to_vec(),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summaries serialize");
    s.push('\n');
    s
}

/// Writes `<name>.csv`, `<name>.summary.json` and, when enabled, `<name>.svg`.
pub fn write_shadow_outputs(
    cfg: &ExperimentConfig,
    rows: &[ShadowRecord],
    out: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(out)?;
    let summary = summarize_shadow(cfg, rows);
    let mut written = vec![out.join(format!("{}.csv", cfg.name)), out.join(format!("{}.summary.json", cfg.name))];
    write_file(&written[0], &shadow_csv(cfg, rows))?;
    write_file(&written[1], &to_json(&summary))?;
    if cfg.plot {
        let p = out.join(format!("{}.svg", cfg.name));
        write_file(&p, &shadow_svg(&summary))?;
        written.push(p);
    }
    Ok(written)
}

pub fn write_lowerbound_outputs(
    cfg: &ExperimentConfig,
    rows: &[LowerBoundRow],
    out: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(out)?;
    let written = vec![out.join(format!("{}.csv", cfg.name)), out.join(format!("{}.summary.json", cfg.name))];
    write_file(&written[0], &lowerbound_csv(cfg, rows))?;
    write_file(&written[1], &to_json(&summarize_lowerbound(cfg, rows)))?;
    Ok(written)
}

pub fn write_cone_outputs(cfg: &ExperimentConfig, rows: &[ConeRow], out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(out)?;
    let written = vec![out.join(format!("{}.csv", cfg.name)), out.join(format!("{}.summary.json", cfg.name))];
    write_file(&written[0], &cone_csv(cfg, rows))?;
    write_file(&written[1], &to_json(&summarize_cone(cfg, rows)))?;
    Ok(written)
}

fn create_dir(out: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::Io { path: out.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            d: 3,
            n: 12,
            sigmas: vec![0.05, 0.1],
            trials: 4,
            ..Default::default()
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::parse("# shadow\nname = run1\nd=4\nn = 50\nsigmas = 0.01, 0.1\ntrials=3 # inline\n")
            .unwrap();
        assert_eq!((cfg.name.as_str(), cfg.d, cfg.n, cfg.trials), ("run1", 4, 50, 3));
        assert_eq!(cfg.sigmas, vec![0.01, 0.1]);
        assert!(matches!(ExperimentConfig::parse("dd = 3"), Err(HarnessError::Config { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("\nd = x"), Err(HarnessError::Config { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("sigmas = 0.1, 0.05"), Err(HarnessError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("sigmas = 0.1, 0.1"), Err(HarnessError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("trials = 0"), Err(HarnessError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("name = a/b"), Err(HarnessError::Config { .. })));
    }

    #[test]
    fn statistics_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((geometric_mean(&[1.0, 4.0]) - 2.0).abs() < 1e-15);
        let xs = [0.01, 0.1, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 7.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[0.1], &[3.0]), None);
    }

    #[test]
    fn common_random_numbers_across_sigma() {
        let cfg = small();
        let a = shadow_trial_instance(&cfg, 0.05, 2);
        let b = shadow_trial_instance(&cfg, 0.1, 2);
        assert_eq!(a.abar, b.abar);
        assert_eq!(a.instance.c, b.instance.c);
        let ratio = b.a_noise.get(3, 1) / a.a_noise.get(3, 1);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rows_independent_of_jobs() {
        let cfg = small();
        let one = run_shadow_experiment(&cfg, 1).unwrap();
        let three = run_shadow_experiment(&cfg, 3).unwrap();
        assert_eq!(shadow_csv(&cfg, &one), shadow_csv(&cfg, &three));
        assert_eq!(one.len(), 8);
        let csv = shadow_csv(&cfg, &one);
        let header_cols = csv.lines().next().unwrap().split(',').count();
        assert_eq!(header_cols, SHADOW_COLUMNS.len());
        assert!(csv.lines().all(|l| l.split(',').count() == header_cols));
    }

    #[test]
    fn single_trial_summary() {
        let cfg = ExperimentConfig { trials: 1, sigmas: vec![0.1], ..small() };
        let rows = run_shadow_experiment(&cfg, 1).unwrap();
        let s = summarize_shadow(&cfg, &rows);
        assert_eq!(s.per_sigma.len(), 1);
        assert_eq!(s.loglog_slope, None);
        assert!(s.nonincreasing);
        assert!(shadow_svg(&s).ends_with("</svg>\n"));
    }

    #[test]
    fn wall_time_column_is_optional() {
        let cfg = ExperimentConfig { trials: 1, sigmas: vec![0.1], wall_time: true, ..small() };
        let rows = run_shadow_experiment(&cfg, 1).unwrap();
        assert!(shadow_csv(&cfg, &rows).lines().next().unwrap().ends_with(",wall_ms"));
    }

    #[test]
    fn cone_rows_deterministic() {
        let cfg = ExperimentConfig { d: 3, trials: 2000, configs: 3, ..Default::default() };
        let a = run_cone_experiment(&cfg, 2).unwrap();
        let b = run_cone_experiment(&cfg, 1).unwrap();
        assert_eq!(cone_csv(&cfg, &a), cone_csv(&cfg, &b));
    }
}
