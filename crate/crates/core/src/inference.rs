//! Gaussian conditioning (kriging), posterior marginals, prediction, the
//! hyperparameter log-posterior and its Nelder–Mead maximisation.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::assembly::FemMatrices;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, ProjectionMatrix};
use crate::precision::{build_precision, FieldModel};
use crate::sparse::{CholeskyFactor, Ordering, SparseMatrix, SparseSymMatrix};

/// Point observations `y_i = u(s_i) + e_i`, `e_i ~ N(0, 1/noise_precision_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub locations: Vec<Point>,
    pub values: Vec<f64>,
    pub noise_precision: Vec<f64>,
}

impl Observations {
    pub fn new(locations: Vec<Point>, values: Vec<f64>, noise_precision: Vec<f64>) -> Result<Self> {
        let m = locations.len();
        for len in [values.len(), noise_precision.len()] {
            if len != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: len,
                });
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("observation {i} is not finite")));
        }
        if let Some(i) = noise_precision
            .iter()
            .position(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::invalid(format!(
                "noise precision of observation {i} must be positive"
            )));
        }
        Ok(Self {
            locations,
            values,
            noise_precision,
        })
    }

    pub fn with_scalar_noise(
        locations: Vec<Point>,
        values: Vec<f64>,
        noise_precision: f64,
    ) -> Result<Self> {
        let m = locations.len();
        Self::new(locations, values, vec![noise_precision; m])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub q_post: SparseSymMatrix,
    pub mu_post: Vec<f64>,
    pub mu_prior: Vec<f64>,
    pub factor: CholeskyFactor,
}

/// `Aᵀ diag(d) A` as a symmetric matrix.
fn weighted_gram(a: &SparseMatrix, d: &[f64]) -> Result<SparseSymMatrix> {
    let at = a.transpose();
    let ones = vec![1.0; at.nrows()];
    SparseSymMatrix::from_lower_of(&at.scale(&ones, d).matmul(a)?)
}

/// Conditions `u ~ N(μ_u, Q_u⁻¹)` on observations through the basis matrix.
pub fn condition(
    q_u: &SparseSymMatrix,
    mu_u: &[f64],
    a: &ProjectionMatrix,
    obs: &Observations,
) -> Result<Posterior> {
    condition_matrix(q_u, mu_u, a.interior()?, &obs.values, &obs.noise_precision)
}

/// Conditioning with an arbitrary sparse observation matrix (for example a
/// horizontally concatenated `A` of several components).
pub fn condition_matrix(
    q_u: &SparseSymMatrix,
    mu_u: &[f64],
    a: &SparseMatrix,
    y: &[f64],
    noise_precision: &[f64],
) -> Result<Posterior> {
    let n = q_u.n();
    if a.ncols() != n || mu_u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if a.ncols() != n {
                a.ncols()
            } else {
                mu_u.len()
            },
        });
    }
    if y.len() != a.nrows() || noise_precision.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: y.len().min(noise_precision.len()),
        });
    }
    let q_post = q_u.add_scaled(1.0, &weighted_gram(a, noise_precision)?, 1.0)?;
    let factor = CholeskyFactor::factorize(&q_post, Ordering::Amd)?;
    let a_mu = a.mul_vec(mu_u);
    let weighted: Vec<f64> = (0..y.len())
        .map(|i| noise_precision[i] * (y[i] - a_mu[i]))
        .collect();
    let delta = factor.solve(&a.mul_vec_transpose(&weighted))?;
    let mu_post = mu_u.iter().zip(&delta).map(|(m, d)| m + d).collect();
    Ok(Posterior {
        q_post,
        mu_post,
        mu_prior: mu_u.to_vec(),
        factor,
    })
}

/// Posterior means and standard deviations at the vertices.
pub fn posterior_marginals(post: &Posterior) -> (Vec<f64>, Vec<f64>) {
    let sigma = post.factor.selected_inverse();
    let sd = sigma.diag().into_iter().map(f64::sqrt).collect();
    (post.mu_post.clone(), sd)
}

/// Kriging predictions; exterior points carry `NaN` and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub exterior: Vec<bool>,
}

pub fn predict(post: &Posterior, mesh: &Mesh, points: &[Point]) -> Prediction {
    let a = mesh.evaluate_basis(points);
    predict_with(post, &a)
}

/// Prediction from a precomputed basis matrix. Covariances between the
/// vertices of a point's simplex come from the selected inverse, or from a
/// solved column when an entry lies outside its pattern.
pub fn predict_with(post: &Posterior, a: &ProjectionMatrix) -> Prediction {
    let sigma = post.factor.selected_inverse();
    let mut columns: HashMap<usize, Vec<f64>> = HashMap::new();
    let m = a.n_points();
    let mut mean = vec![f64::NAN; m];
    let mut sd = vec![f64::NAN; m];
    for i in 0..m {
        if a.exterior[i] {
            continue;
        }
        let (cols, w) = a.matrix.row(i);
        mean[i] = cols
            .iter()
            .zip(w)
            .map(|(&j, wj)| wj * post.mu_post[j])
            .sum();
        let mut var = 0.0;
        for (p, &j) in cols.iter().enumerate() {
            for (q, &k) in cols.iter().enumerate() {
                let cov = if sigma.contains(j, k) {
                    sigma.get(j, k)
                } else {
                    columns
                        .entry(k)
                        .or_insert_with(|| post.factor.inverse_column(k))[j]
                };
                var += w[p] * w[q] * cov;
            }
        }
        sd[i] = var.max(0.0).sqrt();
    }
    Prediction {
        mean,
        sd,
        exterior: a.exterior.clone(),
    }
}

/// Hyperparameters on the log scale; `extra` holds coefficients of
/// log-linear basis expansions of `κ(s)`, `τ(s)` for non-stationary models.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub log_kappa: f64,
    pub log_tau: f64,
    pub log_tau_e: f64,
    pub extra: Vec<f64>,
}

impl HyperParams {
    pub fn new(log_kappa: f64, log_tau: f64, log_tau_e: f64) -> Self {
        Self {
            log_kappa,
            log_tau,
            log_tau_e,
            extra: Vec::new(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_kappa, self.log_tau, self.log_tau_e];
        v.extend(&self.extra);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: v.len(),
            });
        }
        Ok(Self {
            log_kappa: v[0],
            log_tau: v[1],
            log_tau_e: v[2],
            extra: v[3..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }

    pub fn kappa(&self) -> f64 {
        self.log_kappa.exp()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    /// Observation noise precision `τ_e²`.
    pub fn noise_precision(&self) -> f64 {
        (2.0 * self.log_tau_e).exp()
    }

    /// `key=value` lines with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "log_kappa={:.16e}\nlog_tau={:.16e}\nlog_tau_e={:.16e}\n",
            self.log_kappa, self.log_tau, self.log_tau_e
        );
        for (i, v) in self.extra.iter().enumerate() {
            out.push_str(&format!("extra_{i}={v:.16e}\n"));
        }
        out
    }
}

/// Independent Gaussian priors on the entries of [`HyperParams::to_vec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl GaussianPrior {
    pub fn log_density(&self, theta: &HyperParams) -> f64 {
        theta
            .to_vec()
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| {
                let z = (x - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }
}

/// Improper flat prior.
pub fn flat_prior(_: &HyperParams) -> f64 {
    0.0
}

/// Builds `(Q_u, μ_u)` for a hyperparameter value.
pub trait ModelBuilder {
    fn build(&self, theta: &HyperParams) -> Result<(SparseSymMatrix, Vec<f64>)>;
}

impl<F> ModelBuilder for F
where
    F: Fn(&HyperParams) -> Result<(SparseSymMatrix, Vec<f64>)>,
{
    fn build(&self, theta: &HyperParams) -> Result<(SparseSymMatrix, Vec<f64>)> {
        self(theta)
    }
}

/// Stationary Whittle–Matérn prior with zero mean and `(κ, τ) = exp(θ₀, θ₁)`.
pub struct StationaryBuilder<'a> {
    pub mesh: &'a Mesh,
    pub fem: &'a FemMatrices,
    pub alpha: f64,
}

impl ModelBuilder for StationaryBuilder<'_> {
    fn build(&self, theta: &HyperParams) -> Result<(SparseSymMatrix, Vec<f64>)> {
        let model = FieldModel::stationary(self.mesh, self.alpha, theta.kappa(), theta.tau())?;
        let q = build_precision(&model, self.fem)?;
        Ok((q, vec![0.0; self.fem.n()]))
    }
}

/// Gaussian log-density `log N(x; μ, Q⁻¹)` from a factor of `Q`.
fn log_gauss(q: &SparseSymMatrix, logdet: f64, x: &[f64], mu: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    0.5 * logdet - 0.5 * q.quad_form(&d) - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

/// `log π(θ) + log π(u|θ) + log π(y|u,θ) − log π(u|y,θ)` at `u`.
///
/// All normalising constants are kept, so the result equals the log prior
/// plus the exact log marginal likelihood `log π(y|θ)` for every `u`.
pub fn log_posterior_theta_at(
    builder: &dyn ModelBuilder,
    a: &SparseMatrix,
    y: &[f64],
    theta: &HyperParams,
    prior: &dyn Fn(&HyperParams) -> f64,
    u: Option<&[f64]>,
) -> Result<f64> {
    let (q_u, mu_u) = builder.build(theta)?;
    let noise = vec![theta.noise_precision(); y.len()];
    let post = condition_matrix(&q_u, &mu_u, a, y, &noise)?;
    let prior_factor = CholeskyFactor::factorize(&q_u, Ordering::Amd)?;
    let u = u.unwrap_or(&post.mu_post);
    let au = a.mul_vec(u);
    let log_lik: f64 = (0..y.len())
        .map(|i| {
            let r = y[i] - au[i];
            0.5 * noise[i].ln() - 0.5 * noise[i] * r * r - 0.5 * (2.0 * PI).ln()
        })
        .sum();
    let log_prior_u = log_gauss(&q_u, prior_factor.logdet(), u, &mu_u);
    let log_post_u = log_gauss(&post.q_post, post.factor.logdet(), u, &post.mu_post);
    Ok(prior(theta) + log_prior_u + log_lik - log_post_u)
}

/// The θ log-posterior evaluated at `u = μ_{u|y}`. Factorisation failures
/// give `−∞` (the value is rejected by the optimiser).
pub fn log_posterior_theta(
    builder: &dyn ModelBuilder,
    a: &SparseMatrix,
    y: &[f64],
    theta: &HyperParams,
    prior: &dyn Fn(&HyperParams) -> f64,
) -> f64 {
    if !theta.is_finite() {
        return f64::NEG_INFINITY;
    }
    match log_posterior_theta_at(builder, a, y, theta, prior, None) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => f64::NEG_INFINITY,
        Err(e) => {
            log::warn!("theta {:?} rejected: {e}", theta.to_vec());
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the simplex diameter (∞-norm).
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: HyperParams,
    pub log_posterior: f64,
    /// Every evaluation `(θ, log posterior)` in order.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for (i, (x, f)) in self.trace.iter().enumerate() {
            let xs: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&format!(
                "eval={i} theta={} log_post={f:.16e}\n",
                xs.join(",")
            ));
        }
        out
    }
}

/// Maximises `f` by Nelder–Mead; converged when the simplex diameter is
/// below `tolerance` or after `max_iterations` iterations.
pub fn nelder_mead_max(
    f: &mut dyn FnMut(&[f64]) -> f64,
    init: &[f64],
    options: &FitOptions,
) -> (Vec<f64>, f64, Vec<(Vec<f64>, f64)>, usize, bool) {
    let n = init.len();
    let mut trace = Vec::new();
    let mut eval = |x: &[f64], trace: &mut Vec<(Vec<f64>, f64)>| -> f64 {
        let v = f(x);
        trace.push((x.to_vec(), v));
        // Minimise the negative; rejected points are +∞.
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((init.to_vec(), eval(init, &mut trace)));
    for i in 0..n {
        let mut x = init.to_vec();
        x[i] += options.initial_step;
        let v = eval(&x, &mut trace);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    while iterations < options.max_iterations {
        simplex.sort_by(by_value);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < options.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (worst.0[k] - centroid[k]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut trace);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut trace);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut trace);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut trace);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n)
                        .map(|k| best[k] + 0.5 * (item.0[k] - best[k]))
                        .collect();
                    let v = eval(&x, &mut trace);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(by_value);
    let (x, v) = simplex.swap_remove(0);
    (x, -v, trace, iterations, converged)
}

/// Maximises the θ log-posterior from `init`.
pub fn fit_theta(
    builder: &dyn ModelBuilder,
    a: &SparseMatrix,
    y: &[f64],
    init: &HyperParams,
    prior: &dyn Fn(&HyperParams) -> f64,
    options: &FitOptions,
) -> Result<FitResult> {
    if !init.is_finite() {
        return Err(Error::invalid("initial hyperparameters must be finite"));
    }
    let extra_len = init.extra.len();
    let mut objective = |x: &[f64]| -> f64 {
        match HyperParams::from_slice(x) {
            Ok(theta) if theta.extra.len() == extra_len => {
                log_posterior_theta(builder, a, y, &theta, prior)
            }
            _ => f64::NEG_INFINITY,
        }
    };
    let (x, value, trace, iterations, converged) =
        nelder_mead_max(&mut objective, &init.to_vec(), options);
    if !value.is_finite() {
        return Err(Error::NoFeasibleTheta);
    }
    Ok(FitResult {
        theta: HyperParams::from_slice(&x)?,
        log_posterior: value,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::dense_reference;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_builder(
        q: f64,
        mu: f64,
    ) -> impl Fn(&HyperParams) -> Result<(SparseSymMatrix, Vec<f64>)> {
        move |theta: &HyperParams| {
            let scale = (2.0 * theta.log_tau).exp();
            Ok((SparseSymMatrix::diagonal(&[q * scale]), vec![mu]))
        }
    }

    #[test]
    fn identity_shrinkage() {
        let q = SparseSymMatrix::identity(3);
        let a = SparseMatrix::identity(3);
        let y = [1.0, -2.0, 4.0];
        let post = condition_matrix(&q, &[0.0; 3], &a, &y, &[1.0; 3]).unwrap();
        assert_eq!(post.q_post, SparseSymMatrix::diagonal(&[2.0; 3]));
        for i in 0..3 {
            assert!((post.mu_post[i] - y[i] / 2.0).abs() < 1e-15);
        }
        let (_, sd) = posterior_marginals(&post);
        assert!(sd.iter().all(|s| (s - 0.5f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn interpolation_and_prior_limits() {
        let mesh = Mesh::unit_square(6).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let model = FieldModel::stationary(&mesh, 2.0, 4.0, 0.5).unwrap();
        let q = build_precision(&model, &fem).unwrap();
        let idx = [3usize, 17, 30];
        let locs: Vec<Point> = idx.iter().map(|&i| mesh.vertex(i)).collect();
        let y = vec![1.5, -0.5, 2.0];
        let mu = vec![0.1; fem.n()];
        let obs = Observations::with_scalar_noise(locs.clone(), y.clone(), 1e12).unwrap();
        let a = mesh.evaluate_basis(&locs);
        let post = condition(&q, &mu, &a, &obs).unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert!((post.mu_post[i] - y[k]).abs() < 1e-6);
        }
        let pred = predict(&post, &mesh, &locs);
        for k in 0..3 {
            assert!((pred.mean[k] - y[k]).abs() < 1e-6);
        }
        let weak = Observations::with_scalar_noise(locs, y, 1e-12).unwrap();
        let post = condition(&q, &mu, &a, &weak).unwrap();
        assert!(post.mu_post.iter().all(|m| (m - 0.1).abs() < 1e-9));
        let diff = post.q_post.add_scaled(1.0, &q, -1.0).unwrap();
        assert!(diff.lower_triplets().all(|(_, _, v)| v.abs() < 1e-9));
    }

    fn random_case(
        n_side: usize,
        m: usize,
        seed: u64,
    ) -> (
        Mesh,
        SparseSymMatrix,
        Vec<f64>,
        ProjectionMatrix,
        Observations,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = Mesh::unit_square(n_side).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let kappa: Vec<f64> = (0..fem.n())
            .map(|_| 2.0 + 3.0 * rng.random::<f64>())
            .collect();
        let tau: Vec<f64> = (0..fem.n()).map(|_| 0.5 + rng.random::<f64>()).collect();
        let model = FieldModel::nonstationary(&mesh, 2.0, kappa, tau).unwrap();
        let q = build_precision(&model, &fem).unwrap();
        let mu: Vec<f64> = (0..fem.n()).map(|_| rng.random::<f64>() - 0.5).collect();
        let locs: Vec<Point> = (0..m)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), 0.0])
            .collect();
        let y: Vec<f64> = (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let noise: Vec<f64> = (0..m).map(|_| 1.0 + 10.0 * rng.random::<f64>()).collect();
        let a = mesh.evaluate_basis(&locs);
        (mesh, q, mu, a, Observations::new(locs, y, noise).unwrap())
    }

    #[test]
    fn matches_dense_reference() {
        // 7×7 grid: 64 vertices.
        let (_, q, mu, a, obs) = random_case(7, 20, 4);
        let post = condition(&q, &mu, &a, &obs).unwrap();
        let (mean, sd) = posterior_marginals(&post);
        let dense = dense_reference(
            &q.to_dense(),
            &DVector::from_vec(mu.clone()),
            &a.matrix.to_dense(),
            &DVector::from_vec(obs.values.clone()),
            &DVector::from_vec(obs.noise_precision.clone()),
        )
        .unwrap();
        for i in 0..q.n() {
            assert!((mean[i] - dense.mu_post[i]).abs() < 1e-9);
            assert!((sd[i] * sd[i] - dense.sigma_post[(i, i)]).abs() < 1e-9);
        }
    }

    #[test]
    fn larger_noise_precision_reduces_sd() {
        let (_, q, mu, a, obs) = random_case(6, 5, 8);
        let sd_at = |p: f64| {
            let mut o = obs.clone();
            o.noise_precision[0] = p;
            let post = condition(&q, &mu, &a, &o).unwrap();
            predict_with(&post, &a).sd[0]
        };
        assert!(sd_at(100.0) < sd_at(1.0));
    }

    #[test]
    fn centroid_prediction_is_barycentric_average() {
        let (mesh, q, mu, a, obs) = random_case(5, 6, 2);
        let post = condition(&q, &mu, &a, &obs).unwrap();
        let t = mesh.simplex(7).to_vec();
        let c: Point = {
            let v: Vec<Point> = t.iter().map(|&i| mesh.vertex(i)).collect();
            [
                (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                (v[0][1] + v[1][1] + v[2][1]) / 3.0,
                0.0,
            ]
        };
        let pred = predict(&post, &mesh, &[c, [5.0, 5.0, 0.0]]);
        let avg = t.iter().map(|&i| post.mu_post[i]).sum::<f64>() / 3.0;
        assert!((pred.mean[0] - avg).abs() < 1e-12);
        assert_eq!(pred.exterior, vec![false, true]);
        assert!(pred.mean[1].is_nan());
        // Variance against a dense computation.
        let sigma = post.q_post.to_dense().try_inverse().unwrap();
        let mut var = 0.0;
        for &i in &t {
            for &j in &t {
                var += sigma[(i, j)] / 9.0;
            }
        }
        assert!((pred.sd[0] - var.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn exterior_observation_is_an_error() {
        let (mesh, q, mu, _, _) = random_case(4, 1, 1);
        let locs = vec![[2.0, 0.5, 0.0]];
        let obs = Observations::with_scalar_noise(locs.clone(), vec![1.0], 1.0).unwrap();
        let a = mesh.evaluate_basis(&locs);
        assert!(matches!(
            condition(&q, &mu, &a, &obs),
            Err(Error::ExteriorPoint(0))
        ));
    }

    #[test]
    fn scalar_marginal_likelihood() {
        let (q, mu, y) = (2.0, 0.3, 1.1);
        let builder = scalar_builder(q, mu);
        let a = SparseMatrix::identity(1);
        let theta = HyperParams::new(0.0, 0.0, 0.4);
        let te2 = theta.noise_precision();
        let var = 1.0 / q + 1.0 / te2;
        let expected = -0.5 * (2.0 * PI * var).ln() - 0.5 * (y - mu) * (y - mu) / var;
        let got = log_posterior_theta(&builder, &a, &[y], &theta, &flat_prior);
        assert!((got - expected).abs() < 1e-12);
        let shifted = log_posterior_theta(&builder, &a, &[y], &theta, &|_| 3.25);
        assert_eq!(shifted, got + 3.25);
        let at_zero =
            log_posterior_theta_at(&builder, &a, &[y], &theta, &flat_prior, Some(&[0.0])).unwrap();
        assert!((at_zero - got).abs() < 1e-9);
    }

    #[test]
    fn theta_objective_matches_dense_marginal_likelihood() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 5, 4).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let builder = StationaryBuilder {
            mesh: &mesh,
            fem: &fem,
            alpha: 2.0,
        };
        let locs: Vec<Point> = (0..12)
            .map(|i| [(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract(), 0.0])
            .collect();
        let a = mesh.evaluate_basis(&locs);
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let theta = HyperParams::new(1.2, -0.3, 0.7);
        let got = log_posterior_theta(&builder, &a.matrix, &y, &theta, &flat_prior);
        let (q, mu) = builder.build(&theta).unwrap();
        let dense = dense_reference(
            &q.to_dense(),
            &DVector::from_vec(mu),
            &a.matrix.to_dense(),
            &DVector::from_vec(y.clone()),
            &DVector::from_element(12, theta.noise_precision()),
        )
        .unwrap();
        assert!((got - dense.marginal_loglik).abs() < 1e-8);
        let at_zero = log_posterior_theta_at(
            &builder,
            &a.matrix,
            &y,
            &theta,
            &flat_prior,
            Some(&vec![0.0; q.n()]),
        )
        .unwrap();
        assert!((at_zero - got).abs() < 1e-9);
    }

    #[test]
    fn failed_factorisation_is_rejected() {
        let builder = |_: &HyperParams| -> Result<(SparseSymMatrix, Vec<f64>)> {
            Ok((SparseSymMatrix::diagonal(&[-1.0]), vec![0.0]))
        };
        let a = SparseMatrix::identity(1);
        let v = log_posterior_theta(
            &builder,
            &a,
            &[0.0],
            &HyperParams::new(0.0, 0.0, -5.0),
            &flat_prior,
        );
        assert_eq!(v, f64::NEG_INFINITY);
        let r = fit_theta(
            &builder,
            &a,
            &[0.0],
            &HyperParams::new(0.0, 0.0, -5.0),
            &flat_prior,
            &FitOptions::default(),
        );
        assert!(matches!(r, Err(Error::NoFeasibleTheta)));
    }

    #[test]
    fn nelder_mead_recovers_scalar_optimum() {
        // y ~ N(μ, 1/(q e^{2θ₁}) + e^{−2θ₂}); fix θ₂ through a sharp prior,
        // then the optimum satisfies 1/(q e^{2θ₁}) = (y−μ)² − e^{−2θ₂}.
        let (q, mu, y) = (1.0, 0.0, 2.0);
        let builder = scalar_builder(q, mu);
        let a = SparseMatrix::identity(1);
        let noise_log = 0.5;
        let prior = move |t: &HyperParams| {
            -1e6 * (t.log_tau_e - noise_log).powi(2) - 1e6 * t.log_kappa.powi(2)
        };
        let fit = fit_theta(
            &builder,
            &a,
            &[y],
            &HyperParams::new(0.0, 0.3, 0.0),
            &prior,
            &FitOptions::default(),
        )
        .unwrap();
        let prior_var = (y - mu) * (y - mu) - (-2.0 * noise_log).exp();
        let expected = 0.5 * (1.0 / (q * prior_var)).ln();
        assert!(fit.converged);
        assert!(
            (fit.theta.log_tau - expected).abs() < 1e-4,
            "{:?}",
            fit.theta
        );
        assert!(!fit.trace.is_empty());
        let again = fit_theta(
            &builder,
            &a,
            &[y],
            &fit.theta,
            &prior,
            &FitOptions::default(),
        )
        .unwrap();
        assert!((again.log_posterior - fit.log_posterior).abs() < 1e-8);
    }

    #[test]
    fn nelder_mead_on_quadratic() {
        let mut f = |x: &[f64]| -((x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2));
        let (x, v, _, _, converged) = nelder_mead_max(&mut f, &[0.0, 0.0], &FitOptions::default());
        assert!(converged);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
        assert!(v > -1e-9);
    }

    #[test]
    fn dense_gram_matches() {
        let a = SparseMatrix::from_triplets(2, 3, [(0, 0, 0.5), (0, 2, 0.5), (1, 1, 1.0)]).unwrap();
        let g = weighted_gram(&a, &[2.0, 3.0]).unwrap().to_dense();
        let ad = a.to_dense();
        let expected =
            ad.transpose() * DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])) * ad;
        assert!((g - expected).amax() < 1e-15);
    }
}
