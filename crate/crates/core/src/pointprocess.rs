//! Log-Gaussian Cox processes on a mesh: the vertex-weight discretisation of
//! the likelihood, forward simulation by thinning, and the posterior mode of
//! the log-intensity.
//!
//! With `w_j = ⟨ψ_j, 1⟩` and `η` piecewise linear,
//! `l(η) = −Σ_j w_j exp(η_j) + Σ_i η(y_i)`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind, Point, ProjectionMatrix};
use crate::rng::{element_rng, stream};
use crate::sparse::{CholeskyFactor, Ordering, SparseSymMatrix};

/// Log-intensities below this are treated as zero intensity.
pub const ETA_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    pub points: Vec<Point>,
}

impl PointPattern {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Discretised likelihood for a fixed mesh and pattern.
#[derive(Debug, Clone)]
pub struct LgcpLikelihood {
    pub weights: Vec<f64>,
    /// `Aᵀ1`: basis mass of the pattern at each vertex.
    pub counts: Vec<f64>,
}

impl LgcpLikelihood {
    pub fn new(mesh: &Mesh, pattern: &PointPattern) -> Result<Self> {
        let a = mesh.evaluate_basis(&pattern.points);
        Self::from_projection(mesh.vertex_weights(), &a)
    }

    pub fn from_projection(weights: Vec<f64>, a: &ProjectionMatrix) -> Result<Self> {
        let a = a.interior()?;
        if a.ncols() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: a.ncols(),
            });
        }
        let counts = a.mul_vec_transpose(&vec![1.0; a.nrows()]);
        Ok(Self { weights, counts })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: eta.len(),
            });
        }
        if let Some(i) = eta.iter().position(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("eta[{i}] is not finite")));
        }
        Ok(())
    }

    pub fn value(&self, eta: &[f64]) -> Result<f64> {
        self.check(eta)?;
        Ok(eta
            .iter()
            .zip(self.weights.iter().zip(&self.counts))
            .map(|(e, (w, c))| c * e - w * e.exp())
            .sum())
    }

    pub fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        Ok(eta
            .iter()
            .zip(self.weights.iter().zip(&self.counts))
            .map(|(e, (w, c))| c - w * e.exp())
            .collect())
    }

    /// Diagonal of the (negative definite) Hessian.
    pub fn hessian_diag(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        Ok(eta
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| -w * e.exp())
            .collect())
    }
}

pub fn lgcp_loglik(eta: &[f64], mesh: &Mesh, pattern: &PointPattern) -> Result<f64> {
    LgcpLikelihood::new(mesh, pattern)?.value(eta)
}

fn uniform_in_simplex<R: Rng>(mesh: &Mesh, s: usize, rng: &mut R) -> (Point, Vec<f64>) {
    let t = mesh.simplex(s);
    let v: Vec<Point> = t.iter().map(|&i| mesh.vertex(i)).collect();
    if t.len() == 2 {
        let u: f64 = rng.random();
        let x = v[0][0] + u * (v[1][0] - v[0][0]);
        ([x, 0.0, 0.0], vec![1.0 - u, u])
    } else {
        let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let l = [1.0 - r1 - r2, r1, r2];
        let p = [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
            0.0,
        ];
        (p, l.to_vec())
    }
}

/// Simulates a pattern with intensity `exp(η)`, `η` interpolated linearly.
///
/// Each simplex draws `Poisson(λ_max |t|)` uniform candidates, with
/// `λ_max = exp(max vertex η)`, and keeps each with probability
/// `λ(s)/λ_max`. Simplices use independent random streams.
pub fn simulate_lgcp(eta: &[f64], mesh: &Mesh, seed: u64) -> Result<PointPattern> {
    if mesh.kind() == MeshKind::Sphere {
        return Err(Error::invalid(
            "simulation is only available on flat meshes",
        ));
    }
    if eta.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_vertices(),
            found: eta.len(),
        });
    }
    if eta.iter().any(|e| e.is_nan() || *e == f64::INFINITY) {
        return Err(Error::invalid("eta must not be NaN or +inf"));
    }
    let eta: Vec<f64> = eta.iter().map(|e| e.max(ETA_FLOOR)).collect();
    let mut points = Vec::new();
    for s in 0..mesh.n_simplices() {
        let t = mesh.simplex(s);
        let eta_max = t.iter().map(|&i| eta[i]).fold(f64::NEG_INFINITY, f64::max);
        let mean = eta_max.exp() * mesh.simplex_measure(s);
        if !(mean > 0.0) {
            continue;
        }
        if !mean.is_finite() || mean > 1e9 {
            return Err(Error::invalid(format!(
                "expected count {mean:e} in simplex {s} is too large"
            )));
        }
        let mut rng = element_rng(seed, stream::LGCP_TRIANGLE, s as u64);
        let count = Poisson::new(mean)
            .map_err(|e| Error::invalid(format!("poisson: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            let (p, l) = uniform_in_simplex(mesh, s, &mut rng);
            let eta_p: f64 = t.iter().zip(&l).map(|(&i, w)| w * eta[i]).sum();
            let u: f64 = rng.random();
            if u < (eta_p - eta_max).exp() {
                points.push(p);
            }
        }
    }
    Ok(PointPattern { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LgcpFit {
    pub eta: Vec<f64>,
    /// Precision of the Gaussian approximation, `Q + diag(w exp(η*))`.
    pub precision: SparseSymMatrix,
    pub factor: CholeskyFactor,
    /// Penalised objective after each iteration, starting at the initial value.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl LgcpFit {
    pub fn marginal_sd(&self) -> Vec<f64> {
        self.factor
            .selected_inverse()
            .diag()
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }
}

/// `−½(η−μ)ᵀQ(η−μ) + l(η)`.
pub fn penalised_objective(
    q: &SparseSymMatrix,
    mu: &[f64],
    lik: &LgcpLikelihood,
    eta: &[f64],
) -> Result<f64> {
    let d: Vec<f64> = eta.iter().zip(mu).map(|(e, m)| e - m).collect();
    Ok(-0.5 * q.quad_form(&d) + lik.value(eta)?)
}

/// Posterior mode of `η` under the prior `N(μ, Q⁻¹)` by damped Newton.
pub fn lgcp_fit_eta(
    q: &SparseSymMatrix,
    mu: &[f64],
    mesh: &Mesh,
    pattern: &PointPattern,
    options: &NewtonOptions,
) -> Result<LgcpFit> {
    let lik = LgcpLikelihood::new(mesh, pattern)?;
    lgcp_fit_with(q, mu, &lik, options)
}

pub fn lgcp_fit_with(
    q: &SparseSymMatrix,
    mu: &[f64],
    lik: &LgcpLikelihood,
    options: &NewtonOptions,
) -> Result<LgcpFit> {
    let n = lik.n();
    if q.n() != n || mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if q.n() != n { q.n() } else { mu.len() },
        });
    }
    let mut eta = mu.to_vec();
    let mut obj = penalised_objective(q, mu, lik, &eta)?;
    let mut trace = vec![obj];
    let gradient = |eta: &[f64]| -> Result<Vec<f64>> {
        let d: Vec<f64> = eta.iter().zip(mu).map(|(e, m)| e - m).collect();
        let qd = q.mul_vec(&d);
        Ok(lik
            .gradient(eta)?
            .iter()
            .zip(&qd)
            .map(|(g, p)| g - p)
            .collect())
    };
    let hessian = |eta: &[f64]| -> Result<SparseSymMatrix> {
        let h: Vec<f64> = lik.hessian_diag(eta)?.iter().map(|x| -x).collect();
        q.add_scaled(1.0, &SparseSymMatrix::diagonal(&h), 1.0)
    };
    for it in 0..=options.max_iterations {
        let g = gradient(&eta)?;
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm < options.gradient_tolerance {
            let precision = hessian(&eta)?;
            let factor = CholeskyFactor::factorize(&precision, Ordering::Amd)?;
            return Ok(LgcpFit {
                eta,
                precision,
                factor,
                objective_trace: trace,
                iterations: it,
            });
        }
        if it == options.max_iterations {
            break;
        }
        let h = hessian(&eta)?;
        let step = CholeskyFactor::factorize(&h, Ordering::Amd)?.solve(&g)?;
        // Near the optimum the objective change falls below its rounding
        // error and the line search can no longer rank candidates.
        let predicted: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        if predicted <= 1e-12 * (1.0 + obj.abs()) {
            eta.iter_mut().zip(&step).for_each(|(e, s)| *e += s);
            obj = penalised_objective(q, mu, lik, &eta)?;
            trace.push(obj);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let cand: Vec<f64> = eta.iter().zip(&step).map(|(e, s)| e + t * s).collect();
            if cand.iter().all(|x| x.is_finite()) {
                let v = penalised_objective(q, mu, lik, &cand)?;
                if v >= obj {
                    eta = cand;
                    obj = v;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        trace.push(obj);
        if !accepted {
            return Err(Error::NoConvergence(format!(
                "no ascent step at iteration {it} (gradient norm {gnorm:e})"
            )));
        }
    }
    Err(Error::NoConvergence(format!(
        "Newton iteration did not converge in {} iterations",
        options.max_iterations
    )))
}
