//! Closed-form and brute-force references: Matérn covariance and its SPDE
//! parameterisation, the spectral density on ℝᵈ, the Legendre series for
//! the sphere, the folded (Neumann) Matérn covariance on an interval, and a
//! dense-matrix Gaussian conditioning reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Matérn parameters: inverse range `kappa`, smoothness `nu`, variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub kappa: f64,
    pub nu: f64,
    pub sigma2: f64,
}

impl MaternParams {
    pub fn new(kappa: f64, nu: f64, sigma2: f64) -> Result<Self> {
        if !(kappa > 0.0 && nu > 0.0 && sigma2 > 0.0) {
            return Err(Error::invalid("Matérn parameters must be positive"));
        }
        Ok(Self { kappa, nu, sigma2 })
    }

    /// Parameters of the stationary solution of `(κ² − Δ)^{α/2} τ u = W` on ℝᵈ.
    pub fn from_spde(kappa: f64, tau: f64, alpha: f64, d: usize) -> Result<Self> {
        let sigma2 = matern_sigma2(kappa, tau, alpha, d)?;
        Self::new(kappa, alpha - d as f64 / 2.0, sigma2)
    }

    /// Distance at which the correlation is about 0.1: `√(8ν)/κ`.
    pub fn practical_range(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.kappa
    }
}

const BESSEL_EPS: f64 = 1e-16;
const BESSEL_MAXIT: usize = 10_000;

/// `(gam1, gam2, 1/Γ(1+μ), 1/Γ(1−μ))` for `|μ| ≤ 1/2`, as used by Temme's
/// series; `gam1 = (1/Γ(1−μ) − 1/Γ(1+μ)) / (2μ)`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    let gam2 = 0.5 * (gammi + gampl);
    let gam1 = if mu.abs() < 1e-3 {
        // 1/Γ(1+x) = 1 + c₂x + c₃x² + c₄x³ + c₅x⁴ + c₆x⁵ + …
        const C2: f64 = 0.577_215_664_901_532_9;
        const C4: f64 = -0.042_002_635_034_095_2;
        const C6: f64 = -0.042_197_734_555_544_3;
        let m2 = mu * mu;
        -(C2 + m2 * (C4 + m2 * C6))
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    (gam1, gam2, gampl, gammi)
}

/// Modified Bessel function of the second kind `K_ν(x)` for `ν ≥ 0`, `x > 0`.
///
/// `K_μ` and `K_{μ+1}` with `|μ| ≤ 1/2` come from Temme's series for `x < 2`
/// and from Steed's continued fraction otherwise; forward recurrence then
/// raises the order to `ν`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x > 0.0, "bessel_k needs nu >= 0 and x > 0");
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let (mut kmu, mut k1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < BESSEL_EPS {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < BESSEL_EPS {
            1.0
        } else {
            e.sinh() / e
        };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..BESSEL_MAXIT {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * BESSEL_EPS {
                break;
            }
        }
        kmu = sum;
        k1 = sum1 * xi2;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..BESSEL_MAXIT {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < BESSEL_EPS {
                break;
            }
        }
        h *= a1;
        kmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        k1 = kmu * (mu + x + 0.5 - h) * xi;
    }
    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    kmu
}

/// Matérn covariance `σ² / (Γ(ν) 2^{ν−1}) (κr)^ν K_ν(κr)`.
pub fn matern_cov(r: f64, p: &MaternParams) -> f64 {
    assert!(r >= 0.0, "distance must be non-negative");
    let x = p.kappa * r;
    if x == 0.0 {
        return p.sigma2;
    }
    if x > 700.0 {
        return 0.0;
    }
    p.sigma2 / (gamma(p.nu) * 2f64.powf(p.nu - 1.0)) * x.powf(p.nu) * bessel_k(p.nu, x)
}

/// Marginal variance `Γ(ν) / (Γ(α) (4π)^{d/2} κ^{2ν} τ²)` with `ν = α − d/2`.
pub fn matern_sigma2(kappa: f64, tau: f64, alpha: f64, d: usize) -> Result<f64> {
    let nu = alpha - d as f64 / 2.0;
    if !(nu > 0.0) {
        return Err(Error::invalid(format!(
            "alpha = {alpha} must exceed d/2 = {}",
            d as f64 / 2.0
        )));
    }
    if !(kappa > 0.0 && tau > 0.0) {
        return Err(Error::invalid("kappa and tau must be positive"));
    }
    Ok(gamma(nu)
        / (gamma(alpha) * (4.0 * PI).powf(d as f64 / 2.0) * kappa.powf(2.0 * nu) * tau * tau))
}

/// `τ` giving marginal variance `sigma2` (inverse of [`matern_sigma2`]).
pub fn tau_for_variance(kappa: f64, alpha: f64, d: usize, sigma2: f64) -> Result<f64> {
    let unit = matern_sigma2(kappa, 1.0, alpha, d)?;
    Ok((unit / sigma2).sqrt())
}

/// Spectral density `{τ² (2π)^d (κ² + ‖k‖²)^α}^{−1}` on ℝᵈ.
pub fn spectral_density_rd(k_norm: f64, kappa: f64, tau: f64, alpha: f64, d: usize) -> f64 {
    1.0 / (tau * tau * (2.0 * PI).powi(d as i32) * (kappa * kappa + k_norm * k_norm).powf(alpha))
}

/// Legendre polynomials `P_0(x), …, P_kmax(x)` by the three-term recurrence.
pub fn legendre_values(x: f64, k_max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(k_max + 1);
    p.push(1.0);
    if k_max >= 1 {
        p.push(x);
    }
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        p.push(next);
    }
    p
}

/// Truncated Legendre series for the covariance on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSeries {
    pub value: f64,
    /// Upper bound on `Σ_{k > k_max} (2k+1) S(k)`, which bounds the
    /// truncation error since `|P_k| ≤ 1`.
    pub tail_bound: f64,
}

/// Spherical Whittle–Matérn spectrum `S(k) = (4π)^{-1} τ^{-2} (κ² + k(k+1))^{-α}`.
pub fn sphere_spectrum(k: usize, kappa: f64, tau: f64, alpha: f64) -> f64 {
    let kf = k as f64;
    (kappa * kappa + kf * (kf + 1.0)).powf(-alpha) / (4.0 * PI * tau * tau)
}

/// Covariance at geodesic angle `angle` on the unit sphere,
/// `Σ_{k ≤ k_max} (2k+1) S(k) P_k(cos angle)`.
pub fn sphere_cov_series(
    angle: f64,
    kappa: f64,
    tau: f64,
    alpha: f64,
    k_max: usize,
) -> Result<SphereSeries> {
    if !(alpha > 1.0) {
        return Err(Error::invalid("the spherical series needs alpha > 1"));
    }
    if k_max < 10 {
        return Err(Error::invalid("k_max must be at least 10"));
    }
    if !(0.0..=PI).contains(&angle) {
        return Err(Error::invalid("angle must lie in [0, pi]"));
    }
    let p = legendre_values(angle.cos(), k_max);
    let value = (0..=k_max)
        .map(|k| (2 * k + 1) as f64 * sphere_spectrum(k, kappa, tau, alpha) * p[k])
        .sum();
    Ok(SphereSeries {
        value,
        tail_bound: sphere_tail_bound(kappa, tau, alpha, k_max),
    })
}

/// `Σ_{k > k_max} (2k+1) S(k)`, bounded by summing explicitly until the terms
/// are decreasing and then by the integral `∫_K^∞ (2x+1)(κ²+x(x+1))^{−α} dx`.
pub fn sphere_tail_bound(kappa: f64, tau: f64, alpha: f64, k_max: usize) -> f64 {
    let k2 = kappa * kappa;
    let mut k = k_max;
    let mut explicit = 0.0;
    // Terms decrease once k(k+1) > κ² − 1/2 (for α ≥ 1).
    while (k as f64) * (k as f64 + 1.0) <= k2 - 0.5 {
        k += 1;
        explicit += (2 * k + 1) as f64 * sphere_spectrum(k, kappa, tau, alpha);
    }
    let kf = k as f64;
    let integral =
        (k2 + kf * (kf + 1.0)).powf(1.0 - alpha) / (alpha - 1.0) / (4.0 * PI * tau * tau);
    explicit + integral
}

/// Folded Matérn covariance on `[0, length]` by the method of images:
/// `Σ_{k=−terms}^{terms} [ρ(|s−s₂+2kL|) + ρ(|s+s₂+2kL|)]`.
pub fn folded_matern_1d(s: f64, s2: f64, p: &MaternParams, length: f64, terms: usize) -> f64 {
    let t = terms as i64;
    (-t..=t)
        .map(|k| {
            let shift = 2.0 * k as f64 * length;
            matern_cov((s - s2 + shift).abs(), p) + matern_cov((s + s2 + shift).abs(), p)
        })
        .sum()
}

/// Estimate of the omitted images of [`folded_matern_1d`]: four images at
/// distance at least `2·terms·L`, doubled for the geometric remainder.
pub fn folded_matern_tail(p: &MaternParams, length: f64, terms: usize) -> f64 {
    8.0 * matern_cov(2.0 * (terms.max(1)) as f64 * length, p)
}

/// Dense posterior and marginal likelihood for `y = A u + e`,
/// `u ~ N(μ, Q⁻¹)`, `e ~ N(0, diag(noise_precision)⁻¹)`.
#[derive(Debug, Clone)]
pub struct DenseReference {
    pub mu_post: DVector<f64>,
    pub sigma_post: DMatrix<f64>,
    pub marginal_loglik: f64,
}

pub const DENSE_REFERENCE_CAP: usize = 500;

pub fn dense_reference(
    q_u: &DMatrix<f64>,
    mu_u: &DVector<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_precision: &DVector<f64>,
) -> Result<DenseReference> {
    let n = q_u.nrows();
    if n > DENSE_REFERENCE_CAP {
        return Err(Error::SizeCap {
            size: n,
            cap: DENSE_REFERENCE_CAP,
        });
    }
    let m = a.nrows();
    if a.ncols() != n || y.len() != m || noise_precision.len() != m || mu_u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let q_e = DMatrix::from_diagonal(noise_precision);
    let q_post = q_u + a.transpose() * &q_e * a;
    let sigma_post = q_post
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            index: 0,
            pivot: f64::NAN,
        })?
        .inverse();
    let resid = y - a * mu_u;
    let mu_post = mu_u + &sigma_post * a.transpose() * &q_e * &resid;

    let sigma_u = q_u
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            index: 0,
            pivot: f64::NAN,
        })?
        .inverse();
    let cov_y =
        a * sigma_u * a.transpose() + DMatrix::from_diagonal(&noise_precision.map(|p| 1.0 / p));
    let chol = cov_y.cholesky().ok_or(Error::NotPositiveDefinite {
        index: 0,
        pivot: f64::NAN,
    })?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = resid.dot(&chol.solve(&resid));
    let marginal_loglik = -0.5 * (m as f64 * (2.0 * PI).ln() + logdet + quad);
    Ok(DenseReference {
        mu_post,
        sigma_post,
        marginal_loglik,
    })
}
