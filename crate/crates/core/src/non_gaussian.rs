//! Type-G fields driven by normal inverse Gaussian (NIG) or generalised
//! asymmetric Laplace (GAL) noise, sampled through the conditional Gaussian
//! representation `u | v ~ N(τ⁻¹K⁻¹(μ(v−h) + γh), τ⁻²σ² K⁻¹diag(v)K⁻¹)`.
//!
//! Mixing conventions, chosen so that `E[v_j] = h_j`:
//! NIG uses `v_j ~ IG(mean h_j, shape η h_j²)`, GAL uses
//! `v_j ~ Gamma(shape ν h_j, rate ν)`. Large `η` or `ν` gives the Gaussian
//! limit `v ≈ h`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::assembly::FemMatrices;
use crate::error::{Error, Result};
use crate::precision::shifted_stiffness;
use crate::rng::{element_rng, standard_normals, stream};
use crate::sparse::{CholeskyFactor, Ordering, SparseSymMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingFamily {
    /// Inverse Gaussian mixing with shape `eta·h²`.
    Nig { eta: f64 },
    /// Gamma mixing with shape `nu·h` and rate `nu`.
    Gal { nu: f64 },
}

impl MixingFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MixingFamily::Nig { .. } => "nig",
            MixingFamily::Gal { .. } => "gal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeGNoise {
    pub family: MixingFamily,
    /// Location `γ`.
    pub gamma: f64,
    /// Skewness `μ`.
    pub mu: f64,
    pub sigma: f64,
}

impl TypeGNoise {
    pub fn new(family: MixingFamily, gamma: f64, mu: f64, sigma: f64) -> Result<Self> {
        let mixing = match family {
            MixingFamily::Nig { eta } => eta,
            MixingFamily::Gal { nu } => nu,
        };
        if !(mixing.is_finite() && mixing > 0.0) {
            return Err(Error::invalid(format!(
                "{} mixing parameter must be positive",
                family.name()
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(gamma.is_finite() && mu.is_finite()) {
            return Err(Error::invalid("gamma and mu must be finite"));
        }
        Ok(Self {
            family,
            gamma,
            mu,
            sigma,
        })
    }
}

/// Inverse Gaussian draw with the given mean and shape
/// (Michael, Schucany and Haas, 1976).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let y = z * z;
    let my = mean * y;
    let x = mean + mean * my / (2.0 * shape)
        - mean / (2.0 * shape) * (4.0 * shape * my + my * my).sqrt();
    // Cancellation can push x to zero for extreme shapes.
    let x = x.max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// Mixing variables `v_j`, one independent draw per cell measure `h_j`.
pub fn sample_mixing(noise: &TypeGNoise, h: &[f64], seed: u64) -> Result<Vec<f64>> {
    if let Some(j) = h.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::invalid(format!(
            "cell measure h[{j}] must be positive"
        )));
    }
    h.iter()
        .enumerate()
        .map(|(j, &hj)| {
            let mut rng = element_rng(seed, stream::MIXING, j as u64);
            match noise.family {
                MixingFamily::Nig { eta } => {
                    Ok(sample_inverse_gaussian(hj, eta * hj * hj, &mut rng))
                }
                MixingFamily::Gal { nu } => {
                    let g = Gamma::new(nu * hj, 1.0 / nu)
                        .map_err(|e| Error::invalid(format!("gamma mixing: {e}")))?;
                    Ok(g.sample(&mut rng))
                }
            }
        })
        .collect()
}

/// Type-G field on a mesh with operator `K = κ²C + G`.
#[derive(Debug, Clone)]
pub struct TypeGField {
    pub k: SparseSymMatrix,
    pub tau: f64,
    pub h: Vec<f64>,
    pub noise: TypeGNoise,
    factor: CholeskyFactor,
}

impl TypeGField {
    pub fn new(k: SparseSymMatrix, tau: f64, h: Vec<f64>, noise: TypeGNoise) -> Result<Self> {
        if h.len() != k.n() {
            return Err(Error::DimensionMismatch {
                expected: k.n(),
                found: h.len(),
            });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        if let Some(j) = h.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid(format!(
                "cell measure h[{j}] must be positive"
            )));
        }
        let factor = CholeskyFactor::factorize(&k, Ordering::Amd)?;
        Ok(Self {
            k,
            tau,
            h,
            noise,
            factor,
        })
    }

    /// Stationary field with `h` the lumped mass diagonal.
    pub fn from_fem(fem: &FemMatrices, kappa: f64, tau: f64, noise: TypeGNoise) -> Result<Self> {
        let k = shifted_stiffness(&vec![kappa; fem.n()], fem)?;
        Self::new(k, tau, fem.c_lumped.clone(), noise)
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Conditional mean `τ⁻¹K⁻¹(μ(v−h) + γh)` given mixing variables.
    pub fn conditional_mean(&self, v: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = v
            .iter()
            .zip(&self.h)
            .map(|(vj, hj)| self.noise.mu * (vj - hj) + self.noise.gamma * hj)
            .collect();
        self.solve_scaled(&rhs)
    }

    /// Draw given mixing variables and standard normals `z`.
    pub fn sample_given(&self, v: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() || z.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: v.len().min(z.len()),
            });
        }
        let n = &self.noise;
        let rhs: Vec<f64> = (0..self.n())
            .map(|j| n.mu * (v[j] - self.h[j]) + n.gamma * self.h[j] + n.sigma * v[j].sqrt() * z[j])
            .collect();
        self.solve_scaled(&rhs)
    }

    fn solve_scaled(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.factor.solve(rhs)?;
        u.iter_mut().for_each(|x| *x /= self.tau);
        Ok(u)
    }
}

/// Draws `v` and then `u | v`; deterministic per seed.
pub fn sample_type_g_field(field: &TypeGField, seed: u64) -> Result<Vec<f64>> {
    let v = sample_mixing(&field.noise, &field.h, seed)?;
    let z = standard_normals(seed, stream::TYPE_G_NORMAL, field.n());
    field.sample_given(&v, &z)
}
