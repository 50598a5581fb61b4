//! Seeded random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream)`: the seed
//! picks the key and the stream id selects an independent ChaCha stream, so a
//! Monte Carlo trial can own the stream numbered by its trial index and runs
//! stay reproducible regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::instance::{LpInstance, Polyhedron};
use crate::linalg::{factorize, norm, DenseMatrix, LinalgError};

/// Slack allowed on the unit-norm condition for unperturbed rows.
pub const ROW_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandError {
    #[error("row {row} of (abar, bbar) has norm {norm} > 1")]
    NormViolation { row: usize, norm: f64 },
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh stream sharing this seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.standard_normal()).collect()
    }

    /// `mean + sigma·N(0, I)`.
    pub fn gaussian_vector(&mut self, mean: &[f64], sigma: f64) -> Vec<f64> {
        assert!(sigma >= 0.0, "sigma must be nonnegative");
        mean.iter()
            .map(|m| {
                let z = self.standard_normal();
                if sigma == 0.0 {
                    *m
                } else {
                    m + sigma * z
                }
            })
            .collect()
    }

    /// Gamma(shape, 1) via the Marsaglia–Tsang sampler.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0).expect("gamma shape must be positive").sample(&mut self.rng)
    }

    /// Uniform point on the unit sphere `S^{d-1}`.
    pub fn uniform_sphere(&mut self, d: usize) -> Vec<f64> {
        assert!(d >= 1, "dimension must be positive");
        loop {
            let v = self.standard_normal_vec(d);
            let n = norm(&v);
            if n > 1e-300 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Sample with density proportional to `exp(-‖x‖)`: uniform direction,
    /// Gamma(d, 1) radius.
    pub fn exp_ball_sample(&mut self, d: usize) -> Vec<f64> {
        let dir = self.uniform_sphere(d);
        let radius = self.gamma(d as f64);
        dir.into_iter().map(|x| x * radius).collect()
    }

    /// Haar-random rotation in SO(d).
    ///
    /// Gram–Schmidt on the columns of a Gaussian matrix gives the Q factor with
    /// a positive R diagonal, which is Haar on O(d); negating the first column
    /// when the determinant is negative maps it onto SO(d).
    pub fn random_rotation(&mut self, d: usize) -> DenseMatrix {
        assert!(d >= 1, "dimension must be positive");
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        while cols.len() < d {
            let mut v = self.standard_normal_vec(d);
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &cols {
                    let p = crate::linalg::dot(&v, q);
                    crate::linalg::axpy(-p, q, &mut v);
                }
            }
            let n = norm(&v);
            if n < 1e-8 {
                continue;
            }
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
        let mut r = DenseMatrix::zeros(d, d);
        for (c, col) in cols.iter().enumerate() {
            for (row, v) in col.iter().enumerate() {
                r.set(row, c, *v);
            }
        }
        let det = factorize(&r).map(|f| f.determinant()).unwrap_or(1.0);
        if det < 0.0 {
            for row in 0..d {
                let v = r.get(row, 0);
                r.set(row, 0, -v);
            }
        }
        r
    }
}

/// A perturbed LP together with its unperturbed data and the recorded noise.
#[derive(Debug, Clone)]
pub struct SmoothedInstance {
    pub abar: DenseMatrix,
    pub bbar: Vec<f64>,
    pub sigma: f64,
    pub a_noise: DenseMatrix,
    /// `None` when `b` was kept fixed.
    pub b_noise: Option<Vec<f64>>,
    pub instance: LpInstance,
}

impl SmoothedInstance {
    pub fn a(&self) -> &DenseMatrix {
        &self.instance.polyhedron.a
    }

    pub fn b(&self) -> &[f64] {
        &self.instance.polyhedron.b
    }

    /// Largest perturbation norm over rows, combining the `a` and `b` parts.
    pub fn max_row_noise(&self) -> f64 {
        (0..self.a_noise.rows()).map(|i| norm(self.a_noise.row(i))).fold(0.0, f64::max)
    }

    pub fn max_rhs_noise(&self) -> f64 {
        self.b_noise.as_ref().map_or(0.0, |n| n.iter().fold(0.0, |m, v: &f64| m.max(v.abs())))
    }
}

/// Adds Gaussian noise of standard deviation `sigma` to `abar` and, when
/// `perturb_b` is set, to `bbar`. Rows of `(abar, bbar)` must have norm ≤ 1.
pub fn smoothed_instance(
    rng: &mut RngStream,
    abar: &DenseMatrix,
    bbar: &[f64],
    c: &[f64],
    sigma: f64,
    perturb_b: bool,
) -> Result<SmoothedInstance, RandError> {
    check_unit_rows(abar, bbar)?;
    perturb(rng, abar, bbar, c, sigma, perturb_b)
}

/// Same as [`smoothed_instance`] without the unit-norm precondition on the
/// unperturbed rows.
pub(crate) fn perturb(
    rng: &mut RngStream,
    abar: &DenseMatrix,
    bbar: &[f64],
    c: &[f64],
    sigma: f64,
    perturb_b: bool,
) -> Result<SmoothedInstance, RandError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(RandError::BadSigma(sigma));
    }
    if bbar.len() != abar.rows() || c.len() != abar.cols() {
        return Err(RandError::Shape(format!(
            "abar {}x{}, bbar {}, c {}",
            abar.rows(),
            abar.cols(),
            bbar.len(),
            c.len()
        )));
    }
    let (n, d) = (abar.rows(), abar.cols());
    let zero_row = vec![0.0; d];
    let mut noise = Vec::with_capacity(n * d);
    for _ in 0..n {
        noise.extend(rng.gaussian_vector(&zero_row, sigma));
    }
    let a_noise = DenseMatrix::new(n, d, noise)?;
    let a_data: Vec<f64> = abar.as_slice().iter().zip(a_noise.as_slice()).map(|(x, e)| x + e).collect();
    let a = DenseMatrix::new(n, d, a_data)?;
    let (b, b_noise) = if perturb_b {
        let e = rng.gaussian_vector(&vec![0.0; n], sigma);
        (bbar.iter().zip(&e).map(|(x, y)| x + y).collect(), Some(e))
    } else {
        (bbar.to_vec(), None)
    };
    let instance = LpInstance::new(Polyhedron::new(a, b).map_err(|e| RandError::Shape(e.to_string()))?, c.to_vec())
        .map_err(|e| RandError::Shape(e.to_string()))?;
    Ok(SmoothedInstance { abar: abar.clone(), bbar: bbar.to_vec(), sigma, a_noise, b_noise, instance })
}

fn check_unit_rows(abar: &DenseMatrix, bbar: &[f64]) -> Result<(), RandError> {
    for i in 0..abar.rows() {
        let r = abar.row(i);
        let nrm = (crate::linalg::dot(r, r) + bbar.get(i).map_or(0.0, |b| b * b)).sqrt();
        if nrm > 1.0 + ROW_NORM_TOLERANCE {
            return Err(RandError::NormViolation { row: i, norm: nrm });
        }
    }
    Ok(())
}

/// `4·sigma·sqrt(d·ln n)`, the radius that bounds all `n` Gaussian noise
/// vectors in dimension `d` with probability at least `1 - n^{-d}`.
pub fn global_noise_radius(sigma: f64, d: usize, n: usize) -> f64 {
    4.0 * sigma * ((d as f64) * (n as f64).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, DenseMatrix};

    #[test]
    fn identical_streams_reproduce() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
        let mut c = RngStream::new(42, 8);
        assert_ne!(RngStream::new(42, 7).standard_normal(), c.standard_normal());
    }

    #[test]
    fn zero_sigma_returns_mean() {
        let mut rng = RngStream::new(1, 0);
        let mean = [0.25, -1.5, 3.0];
        assert_eq!(rng.gaussian_vector(&mean, 0.0), mean.to_vec());
    }

    #[test]
    fn gaussian_sample_mean_clt() {
        let mut rng = RngStream::new(2, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| rng.gaussian_vector(&[0.0], 1.0)[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn gaussian_global_diameter_event() {
        // d=3, sigma=0.1, n=100: radius 4·0.1·sqrt(3 ln 100)
        let mut rng = RngStream::new(3, 0);
        let radius = global_noise_radius(0.1, 3, 100);
        let trials = 100_000;
        let exceed = (0..trials).filter(|_| norm(&rng.gaussian_vector(&[0.0; 3], 0.1)) > radius).count();
        assert!((exceed as f64) / (trials as f64) < 1e-4, "{exceed}");
    }

    #[test]
    fn sphere_d1_is_balanced() {
        let mut rng = RngStream::new(4, 0);
        let n = 10_000;
        let plus = (0..n)
            .filter(|_| {
                let v = rng.uniform_sphere(1);
                assert!((v[0].abs() - 1.0).abs() < 1e-12);
                v[0] > 0.0
            })
            .count() as f64;
        let expected = n as f64 / 2.0;
        let chi2 = 2.0 * (plus - expected).powi(2) / expected;
        // chi-square critical value, 1 dof, 0.01 level
        assert!(chi2 < 6.635, "chi2 {chi2}");
    }

    #[test]
    fn sphere_points_are_unit() {
        let mut rng = RngStream::new(5, 0);
        for d in 1..8 {
            let v = rng.uniform_sphere(d);
            assert!((norm(&v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        let mut rng = RngStream::new(6, 0);
        for trial in 0..1000 {
            let d = 1 + trial % 7;
            let r = rng.random_rotation(d);
            let rtr = r.transpose().mul_mat(&r);
            assert!(rtr.max_abs_diff(&DenseMatrix::identity(d)) < 1e-10);
            let det = factorize(&r).unwrap().determinant();
            assert!((det - 1.0).abs() < 1e-10, "det {det}");
        }
    }

    #[test]
    fn smoothed_instance_records_noise() {
        let mut rng = RngStream::new(7, 0);
        let abar = DenseMatrix::from_rows(&[[0.5, 0.0], [0.0, 0.5], [-0.5, -0.5]]).unwrap();
        let bbar = [0.5, 0.5, 0.5];
        let inst = smoothed_instance(&mut rng, &abar, &bbar, &[1.0, 0.0], 0.05, true).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(inst.a().get(i, j), abar.get(i, j) + inst.a_noise.get(i, j));
            }
            assert_eq!(inst.b()[i], bbar[i] + inst.b_noise.as_ref().unwrap()[i]);
        }
    }

    #[test]
    fn unit_lp_mode_keeps_b() {
        let mut rng = RngStream::new(8, 0);
        let abar = DenseMatrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let inst = smoothed_instance(&mut rng, &abar, &[1.0, 1.0], &[1.0, 1.0], 0.1, false);
        // (0.5, 0, 1) has norm > 1
        assert!(matches!(inst, Err(RandError::NormViolation { row: 0, .. })));
        let abar = DenseMatrix::from_rows(&[[0.6, 0.0], [0.0, 0.6]]).unwrap();
        let inst = smoothed_instance(&mut rng, &abar, &[0.8, 0.8], &[1.0, 1.0], 0.1, false).unwrap();
        assert_eq!(inst.b(), &[0.8, 0.8]);
        assert!(inst.b_noise.is_none());
    }

    #[test]
    fn perturbed_rows_stay_in_global_radius() {
        // d=3, n=20, sigma=0.05: every perturbed row norm ≤ 1 + radius with
        // frequency at least 1 - 20^-3.
        let (d, n, sigma) = (3, 20, 0.05);
        let radius = global_noise_radius(sigma, d, n);
        let trials = 4000;
        let mut failures = 0;
        for t in 0..trials {
            let mut rng = RngStream::new(9, t);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.uniform_sphere(d)).collect();
            let abar = DenseMatrix::from_rows(&rows).unwrap();
            let inst = smoothed_instance(&mut rng, &abar, &vec![0.0; n], &[1.0, 0.0, 0.0], sigma, false).unwrap();
            if (0..n).any(|i| norm(inst.a().row(i)) > 1.0 + radius) {
                failures += 1;
            }
        }
        assert!((failures as f64 / trials as f64) <= (n as f64).powi(-3), "{failures}");
    }

    #[test]
    fn exp_ball_mean_norm() {
        let mut rng = RngStream::new(10, 0);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| norm(&rng.exp_ball_sample(3))).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.02 * 3.0, "mean {mean}");
    }

    #[test]
    fn rotation_maps_e1_uniformly() {
        // R·e1 must satisfy the sphere-mass small-band bound in d=3.
        let mut rng = RngStream::new(11, 0);
        let (d, alpha, trials) = (3usize, 0.05, 20_000);
        let hits = (0..trials)
            .filter(|_| {
                let r = rng.random_rotation(d);
                let col = r.column(0);
                dot(&col, &[1.0, 0.0, 0.0]).abs() <= alpha
            })
            .count();
        let freq = hits as f64 / trials as f64;
        assert!(freq <= alpha * (d as f64 * std::f64::consts::E).sqrt(), "{freq}");
        // a uniform point in d=3 has |θ·e1| uniform on [0,1]
        assert!((freq - alpha).abs() < 4.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt());
    }
}
