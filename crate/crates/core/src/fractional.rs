//! Fractional smoothness through rational approximation.
//!
//! With lumped `C`, `K = diag(κ²)C + G` and `L = C⁻¹K`, the field weights of
//! the integer model have covariance `τ⁻² L^{−α} C⁻¹`. For `α = k + f` with
//! `0 < f < 1`, `x^{f/2} ≈ p(x)/q(x)` on the spectrum of `L` gives
//!
//! ```text
//! u = P x,   P = τ⁻¹ q(L),   Q_x = S(L)ᵀ B S(L),   S(x) = x^{⌊k/2⌋} p(x),
//! ```
//!
//! with `B = C` for even `k` and `B = K` for odd `k`. `Q_x` is exported as a
//! sparse matrix, but it is far too ill-conditioned to factorise once
//! `m ≥ 3`, so covariances and samples use the equivalent factored form
//! `τ⁻² R(L) B⁻¹ R(Lᵀ)`, `R = q/S`, where every factor of `R` is a shifted
//! solve with `K − zC`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::FemMatrices;
use crate::error::{Error, Result};
use crate::precision::{build_precision, shifted_stiffness, FieldModel};
use crate::rng;
use crate::sparse::{CholeskyFactor, Ordering, SparseMatrix, SparseSymMatrix};

pub const MAX_ORDER: usize = 8;
pub const DEFAULT_ORDER: usize = 4;

const FIT_POINTS: usize = 2000;
const CHECK_POINTS: usize = 10_000;
const SK_ITERATIONS: usize = 12;
const LAWSON_ITERATIONS: usize = 150;

/// `x^{exponent} ≈ scale · Π(x − zeros) / Π(x − poles)` on `interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFit {
    pub exponent: f64,
    pub order: usize,
    pub interval: (f64, f64),
    pub scale: f64,
    pub zeros: Vec<f64>,
    pub poles: Vec<f64>,
    /// Maximum relative error on a 10⁴-point log-spaced grid.
    pub sup_error: f64,
}

impl RationalFit {
    pub fn eval(&self, x: f64) -> f64 {
        let num: f64 = self.zeros.iter().map(|z| x - z).product();
        let den: f64 = self.poles.iter().map(|r| x - r).product();
        self.scale * num / den
    }

    /// Monomial coefficients (lowest degree first) of the numerator
    /// `scale · Π(x − zeros)`.
    pub fn numerator_coefficients(&self) -> Vec<f64> {
        poly_from_roots(&self.zeros)
            .into_iter()
            .map(|c| c * self.scale)
            .collect()
    }

    /// Monic denominator `Π(x − poles)`, lowest degree first.
    pub fn denominator_coefficients(&self) -> Vec<f64> {
        poly_from_roots(&self.poles)
    }
}

fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Chebyshev polynomials `T_0..T_m` at `t`.
fn chebyshev(t: f64, m: usize) -> Vec<f64> {
    let mut v = vec![1.0, t];
    for k in 2..=m {
        v.push(2.0 * t * v[k - 1] - v[k - 2]);
    }
    v.truncate(m + 1);
    v
}

/// Chebyshev series to monomial coefficients (lowest degree first).
fn chebyshev_to_monomial(c: &[f64]) -> Vec<f64> {
    let m = c.len();
    let mut out = vec![0.0; m];
    let mut t_prev = vec![1.0];
    let mut t_cur = vec![0.0, 1.0];
    for (k, ck) in c.iter().enumerate() {
        let tk: &Vec<f64> = match k {
            0 => &t_prev,
            1 => &t_cur,
            _ => {
                let mut next = vec![0.0; k + 1];
                for (i, v) in t_cur.iter().enumerate() {
                    next[i + 1] += 2.0 * v;
                }
                for (i, v) in t_prev.iter().enumerate() {
                    next[i] -= v;
                }
                t_prev = std::mem::replace(&mut t_cur, next);
                &t_cur
            }
        };
        for (i, v) in tk.iter().enumerate() {
            out[i] += ck * v;
        }
    }
    out
}

/// Real roots of a monomial polynomial, with its effective degree and
/// leading coefficient. Fails on complex roots.
fn real_roots(coeffs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-13 * max {
        deg -= 1;
    }
    let lead = coeffs[deg];
    if deg == 0 {
        return Ok((Vec::new(), lead));
    }
    let mut companion = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let eig = companion.complex_eigenvalues();
    let mut roots = Vec::with_capacity(deg);
    for z in eig.iter() {
        if z.im.abs() > 1e-7 * (1.0 + z.re.abs()) {
            return Err(Error::NoConvergence(format!(
                "rational fit produced a complex root {} {:+}i",
                z.re, z.im
            )));
        }
        roots.push(z.re);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((roots, lead))
}

/// Maps the roots of a degree-≤m polynomial in `y = (x − s)/(x + s)` back to
/// `x`. Returns the `x`-roots (missing degrees become roots at `−s`) and the
/// factor multiplying the leading coefficient.
fn mobius_roots(y_roots: &[f64], m: usize, s: f64) -> (Vec<f64>, f64) {
    let mut x_roots = Vec::with_capacity(m);
    let mut lead = 1.0;
    for &z in y_roots {
        lead *= 1.0 - z;
        x_roots.push(s * (1.0 + z) / (1.0 - z));
    }
    x_roots.resize(m, -s);
    (x_roots, lead)
}

/// Near-minimax relative-error fit of `x^{alpha_frac/2}` by a `(m, m)`
/// rational function on `[lo, hi]`.
///
/// Linearised least squares (Sanathanan–Koerner) with Lawson reweighting on
/// 2000 log-spaced points, in the Möbius variable `y = (x − s)/(x + s)`,
/// `s = √(lo·hi)`, which maps the interval symmetrically onto `(−1, 1)` and
/// keeps the rational degree.
pub fn rational_fit(alpha_frac: f64, interval: (f64, f64), m: usize) -> Result<RationalFit> {
    let (lo, hi) = interval;
    if !(alpha_frac > 0.0 && alpha_frac < 1.0) {
        return Err(Error::invalid(format!(
            "fractional part {alpha_frac} must lie in (0, 1)"
        )));
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("invalid interval [{lo}, {hi}]")));
    }
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(Error::invalid(format!(
            "order m = {m} must lie in 1..={MAX_ORDER}"
        )));
    }
    let beta = alpha_frac / 2.0;
    let s = (lo * hi).sqrt();
    let y_max = (hi - s) / (hi + s);
    let xs = log_grid(lo, hi, FIT_POINTS);
    let ts: Vec<f64> = xs.iter().map(|x| (x - s) / (x + s) / y_max).collect();
    let fs: Vec<f64> = xs.iter().map(|x| x.powf(beta)).collect();
    let basis: Vec<Vec<f64>> = ts.iter().map(|&t| chebyshev(t, m)).collect();

    let n = xs.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut q_prev = vec![1.0f64; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for it in 0..SK_ITERATIONS + LAWSON_ITERATIONS {
        let mut a = DMatrix::zeros(n, 2 * (m + 1));
        for i in 0..n {
            let row_scale = weights[i].sqrt() / (fs[i] * q_prev[i].abs());
            for k in 0..=m {
                a[(i, k)] = basis[i][k] * row_scale;
                a[(i, m + 1 + k)] = -fs[i] * basis[i][k] * row_scale;
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested V");
        let (kmin, _) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, &sv)| if sv < acc.1 { (i, sv) } else { acc },
                );
        let coef: Vec<f64> = v_t.row(kmin).iter().copied().collect();
        let (pc, qc) = coef.split_at(m + 1);
        let mut errs = vec![0.0; n];
        let mut sup = 0.0f64;
        for i in 0..n {
            let p: f64 = basis[i].iter().zip(pc).map(|(b, c)| b * c).sum();
            let q: f64 = basis[i].iter().zip(qc).map(|(b, c)| b * c).sum();
            q_prev[i] = q;
            errs[i] = ((p / q - fs[i]) / fs[i]).abs();
            sup = sup.max(errs[i]);
        }
        if !sup.is_finite() || q_prev.contains(&0.0) {
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| sup < *b) {
            best = Some((sup, coef.clone()));
        }
        if it >= SK_ITERATIONS {
            let total: f64 = weights.iter().zip(&errs).map(|(w, e)| w * e).sum();
            if total == 0.0 {
                break;
            }
            for (w, e) in weights.iter_mut().zip(&errs) {
                *w *= e / total;
            }
        }
    }
    let (_, coef) = best.ok_or_else(|| {
        Error::NoConvergence(format!(
            "rational fit of x^{beta} on [{lo}, {hi}] with m = {m} produced no finite iterate"
        ))
    })?;
    let (pc, qc) = coef.split_at(m + 1);
    let to_y = |c: &[f64]| -> Vec<f64> {
        // Polynomial in t = y / y_max to polynomial in y.
        chebyshev_to_monomial(c)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v / y_max.powi(i as i32))
            .collect()
    };
    let (p_roots, p_lead) = real_roots(&to_y(pc))?;
    let (q_roots, q_lead) = real_roots(&to_y(qc))?;
    let (zeros, pf) = mobius_roots(&p_roots, m, s);
    let (poles, qf) = mobius_roots(&q_roots, m, s);
    let mut fit = RationalFit {
        exponent: beta,
        order: m,
        interval,
        scale: p_lead * pf / (q_lead * qf),
        zeros,
        poles,
        sup_error: 0.0,
    };
    fit.sup_error = log_grid(lo, hi, CHECK_POINTS)
        .into_iter()
        .map(|x| ((fit.eval(x) - x.powf(beta)) / x.powf(beta)).abs())
        .fold(0.0, f64::max);
    if !(fit.sup_error < 0.5) {
        return Err(Error::NoConvergence(format!(
            "rational fit of x^{beta} on [{lo}, {hi}] with m = {m}: sup relative error {}",
            fit.sup_error
        )));
    }
    Ok(fit)
}

/// `[λ_lo, λ_hi]` bracketing the spectrum of `L = diag(κ²) + C⁻¹G`:
/// `λ_lo = min κ²` and `λ_hi` is the Gershgorin bound of the symmetric form
/// `C^{−1/2} K C^{−1/2}`.
pub fn spectral_interval(kappa: &[f64], fem: &FemMatrices) -> Result<(f64, f64)> {
    let n = fem.n();
    let k = shifted_stiffness(kappa, fem)?;
    let isq: Vec<f64> = fem.c_lumped.iter().map(|c| 1.0 / c.sqrt()).collect();
    let lh = k.congruence_diag(&isq);
    let lo = kappa.iter().map(|k| k * k).fold(f64::INFINITY, f64::min);
    let mut rows = vec![0.0f64; n];
    for (i, j, val) in lh.lower_triplets() {
        rows[i] += val.abs();
        if i != j {
            rows[j] += val.abs();
        }
    }
    let hi = rows.into_iter().fold(0.0, f64::max);
    Ok((lo, hi.max(lo * 1.05)))
}

#[derive(Debug, Clone)]
enum Representation {
    /// Integer `α`: `P = I`, covariance from the factor of `Q`.
    Integer { factor: CholeskyFactor },
    Rational {
        tau: Vec<f64>,
        c: Vec<f64>,
        /// Factor of `K`, used for `L⁻¹` and for `B = K`.
        k_factor: CholeskyFactor,
        half_k: usize,
        odd_k: bool,
        scale: f64,
        /// `(z, r, factor of K − zC)` for each paired zero and pole.
        pairs: Vec<(f64, f64, CholeskyFactor)>,
    },
}

/// `u = P x` with `x ~ N(0, Q_x⁻¹)`.
#[derive(Debug, Clone)]
pub struct RationalOperator {
    pub alpha: f64,
    pub p: SparseMatrix,
    pub q_x: SparseSymMatrix,
    pub order: usize,
    pub interval: (f64, f64),
    /// Sup relative error of the scalar rational fit (0 for integer `α`).
    pub sup_error: f64,
    pub fit: Option<RationalFit>,
    repr: Representation,
}

/// `Π (L − root)` as a sparse matrix, with `L = C⁻¹K`.
fn polynomial_in_l(l: &SparseMatrix, roots: &[f64], power: usize) -> Result<SparseMatrix> {
    let n = l.nrows();
    let eye = SparseMatrix::identity(n);
    let mut out = eye.clone();
    for _ in 0..power {
        out = out.matmul(l)?;
    }
    for r in roots {
        out = out.matmul(&l.add_scaled(1.0, &eye, -r)?)?;
    }
    Ok(out)
}

pub fn build_fractional(
    model: &FieldModel,
    fem: &FemMatrices,
    m: usize,
) -> Result<RationalOperator> {
    let alpha = model.alpha;
    let d = model.dimension as f64;
    if !(alpha > d / 2.0) {
        return Err(Error::invalid(format!(
            "alpha = {alpha} must exceed d/2 = {}",
            d / 2.0
        )));
    }
    if model.n() != fem.n() {
        return Err(Error::DimensionMismatch {
            expected: fem.n(),
            found: model.n(),
        });
    }
    let interval = spectral_interval(&model.kappa, fem)?;
    let n = fem.n();
    if model.is_integer_alpha() {
        let q = build_precision(model, fem)?;
        let factor = CholeskyFactor::factorize(&q, Ordering::Amd)?;
        return Ok(RationalOperator {
            alpha,
            p: SparseMatrix::identity(n),
            q_x: q,
            order: m,
            interval,
            sup_error: 0.0,
            fit: None,
            repr: Representation::Integer { factor },
        });
    }
    let k_int = alpha.floor() as usize;
    let frac = alpha - k_int as f64;
    let fit = rational_fit(frac, interval, m)?;
    if let Some(z) = fit.zeros.iter().find(|z| **z >= interval.0) {
        return Err(Error::NoConvergence(format!(
            "rational fit has a numerator root {z} inside the spectrum (lower bound {})",
            interval.0
        )));
    }
    let half_k = k_int / 2;
    let odd_k = k_int % 2 == 1;

    let k = shifted_stiffness(&model.kappa, fem)?;
    let inv_c: Vec<f64> = fem.c_lumped.iter().map(|c| 1.0 / c).collect();
    let l = k.to_full().scale(&inv_c, &vec![1.0; n]);
    let inv_tau: Vec<f64> = model.tau.iter().map(|t| 1.0 / t).collect();
    let p = polynomial_in_l(&l, &fit.poles, 0)?.scale(&inv_tau, &vec![1.0 / fit.scale; n]);
    let s = polynomial_in_l(&l, &fit.zeros, half_k)?;
    let b_s = if odd_k {
        k.to_full().matmul(&s)?
    } else {
        s.scale(&fem.c_lumped, &vec![1.0; n])
    };
    let q_x = SparseSymMatrix::from_lower_of(&s.transpose().matmul(&b_s)?)?;

    let k_factor = CholeskyFactor::factorize(&k, Ordering::Amd)?;
    let c_diag = SparseSymMatrix::diagonal(&fem.c_lumped);
    let perm = k_factor.permutation().to_vec();
    let scale = fit.scale;
    let mut pairs = Vec::with_capacity(m);
    for (&z, &r) in fit.zeros.iter().zip(&fit.poles) {
        let shifted = k.add_scaled(1.0, &c_diag, -z)?;
        let f = CholeskyFactor::factorize_with_permutation(&shifted, perm.clone())?;
        pairs.push((z, r, f));
    }
    Ok(RationalOperator {
        alpha,
        p,
        q_x,
        order: m,
        interval,
        sup_error: fit.sup_error,
        fit: Some(fit),
        repr: Representation::Rational {
            tau: model.tau.clone(),
            c: fem.c_lumped.clone(),
            k_factor,
            half_k,
            odd_k,
            scale,
            pairs,
        },
    })
}

impl RationalOperator {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `R(L) v` (`transpose = false`) or `R(Lᵀ) v`.
    fn apply_r(&self, v: &[f64], transpose: bool) -> Vec<f64> {
        let Representation::Rational {
            c,
            k_factor,
            half_k,
            scale,
            pairs,
            ..
        } = &self.repr
        else {
            unreachable!("rational representation")
        };
        let mul_c = |x: &[f64]| -> Vec<f64> { x.iter().zip(c).map(|(a, b)| a * b).collect() };
        // (L − z)⁻¹ = (K − zC)⁻¹ C and (Lᵀ − z)⁻¹ = C (K − zC)⁻¹.
        let shifted_solve = |f: &CholeskyFactor, x: &[f64]| -> Vec<f64> {
            if transpose {
                mul_c(&f.solve(x).expect("dimension"))
            } else {
                f.solve(&mul_c(x)).expect("dimension")
            }
        };
        let mut out = v.to_vec();
        for _ in 0..*half_k {
            out = shifted_solve(k_factor, &out);
        }
        for (z, r, f) in pairs {
            let y = shifted_solve(f, &out);
            for (o, yi) in out.iter_mut().zip(&y) {
                *o += (z - r) * yi;
            }
        }
        out.iter_mut().for_each(|x| *x /= scale);
        out
    }

    /// Column `j` of the covariance `P Q_x⁻¹ Pᵀ`, evaluated in factored form.
    pub fn covariance_column(&self, j: usize) -> Vec<f64> {
        match &self.repr {
            Representation::Integer { factor } => factor.inverse_column(j),
            Representation::Rational {
                tau,
                c,
                k_factor,
                odd_k,
                ..
            } => {
                let mut e = vec![0.0; self.n()];
                e[j] = 1.0 / tau[j];
                let mut w = self.apply_r(&e, true);
                if *odd_k {
                    w = k_factor.solve(&w).expect("dimension");
                } else {
                    w.iter_mut().zip(c).for_each(|(x, ci)| *x /= ci);
                }
                let mut u = self.apply_r(&w, false);
                u.iter_mut().zip(tau).for_each(|(x, t)| *x /= t);
                u
            }
        }
    }

    /// Dense covariance of `u` (small problems only).
    pub fn covariance_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            out.set_column(j, &DVector::from_vec(self.covariance_column(j)));
        }
        out
    }

    /// One draw of `u`, fully determined by `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        match &self.repr {
            Representation::Integer { factor } => factor.sample(seed),
            Representation::Rational {
                tau,
                c,
                k_factor,
                odd_k,
                ..
            } => {
                let z = rng::standard_normals(seed, rng::stream::FRACTIONAL_NORMAL, self.n());
                // w ~ N(0, B⁻¹)
                let w = if *odd_k {
                    k_factor.transform_standard_normal(&z).expect("dimension")
                } else {
                    z.iter().zip(c).map(|(zi, ci)| zi / ci.sqrt()).collect()
                };
                let mut u = self.apply_r(&w, false);
                u.iter_mut().zip(tau).for_each(|(x, t)| *x /= t);
                u
            }
        }
    }

    /// Text header describing the approximation, as `key=value` lines.
    pub fn header_text(&self) -> String {
        let mut out = format!(
            "alpha={:.16e}\nm={}\nlambda_lo={:.16e}\nlambda_hi={:.16e}\nsup_error={:.16e}\n",
            self.alpha, self.order, self.interval.0, self.interval.1, self.sup_error
        );
        if let Some(fit) = &self.fit {
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.16e}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!(
                "scale={:.16e}\nzeros={}\npoles={}\n",
                fit.scale,
                join(&fit.zeros),
                join(&fit.poles)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn fourth_root_fit_accuracy() {
        let fit = rational_fit(0.5, (1.0, 10.0), 3).unwrap();
        assert!(fit.sup_error < 1e-4, "{}", fit.sup_error);
        for x in [1.0, 2.5, 7.0, 10.0] {
            assert!((fit.eval(x) / f64::powf(x, 0.25) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn error_decreases_with_order() {
        for (frac, interval) in [(0.5, (1.0, 10.0)), (0.3, (8.0, 4.0e4)), (0.9, (1.0, 1.0e3))] {
            let errs: Vec<f64> = (1..=4)
                .map(|m| rational_fit(frac, interval, m).unwrap().sup_error)
                .collect();
            for w in errs.windows(2) {
                assert!(w[1] < w[0], "{frac} {interval:?} {errs:?}");
            }
        }
    }

    #[test]
    fn coefficients_reproduce_product_form() {
        let fit = rational_fit(0.6, (2.0, 500.0), 4).unwrap();
        let horner = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, v| acc * x + v);
        let (num, den) = (fit.numerator_coefficients(), fit.denominator_coefficients());
        assert_eq!(num.len(), 5);
        for x in [2.0, 30.0, 500.0] {
            let r = horner(&num, x) / horner(&den, x);
            assert!((r / fit.eval(x) - 1.0).abs() < 1e-10);
        }
        assert!(fit.zeros.iter().all(|z| *z < 2.0));
    }

    #[test]
    fn rejects_invalid_fit_requests() {
        assert!(rational_fit(0.0, (1.0, 10.0), 3).is_err());
        assert!(rational_fit(1.0, (1.0, 10.0), 3).is_err());
        assert!(rational_fit(0.5, (1.0, 10.0), 0).is_err());
        assert!(rational_fit(0.5, (1.0, 10.0), 9).is_err());
        assert!(rational_fit(0.5, (0.0, 10.0), 2).is_err());
    }

    fn dense_l_eigenvalues(kappa: &[f64], fem: &FemMatrices) -> Vec<f64> {
        let k = shifted_stiffness(kappa, fem).unwrap();
        let isq: Vec<f64> = fem.c_lumped.iter().map(|c| 1.0 / c.sqrt()).collect();
        let lh = k.congruence_diag(&isq).to_dense();
        lh.symmetric_eigenvalues().iter().copied().collect()
    }

    #[test]
    fn spectral_interval_brackets_spectrum() {
        let meshes = [
            Mesh::unit_square(12).unwrap(),
            Mesh::interval(0.0, 3.0, 250).unwrap(),
            Mesh::rectangle(0.0, 2.0, 0.0, 1.0, 16, 7).unwrap(),
            Mesh::icosphere(2).unwrap(),
        ];
        for mesh in &meshes {
            let fem = FemMatrices::assemble(mesh, None).unwrap();
            let kappa: Vec<f64> = mesh.vertices().iter().map(|v| 1.0 + v[0].abs()).collect();
            let (lo, hi) = spectral_interval(&kappa, &fem).unwrap();
            let eig = dense_l_eigenvalues(&kappa, &fem);
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let max = eig.iter().copied().fold(0.0, f64::max);
            assert!(lo <= min && max <= hi, "[{lo}, {hi}] vs [{min}, {max}]");
        }
    }

    #[test]
    fn integer_alpha_delegates() {
        let mesh = Mesh::unit_square(5).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let model = FieldModel::stationary(&mesh, 2.0, 3.0, 1.0).unwrap();
        let op = build_fractional(&model, &fem, 4).unwrap();
        assert_eq!(op.p, SparseMatrix::identity(fem.n()));
        assert_eq!(op.q_x, build_precision(&model, &fem).unwrap());
        let inv = op.q_x.to_dense().try_inverse().unwrap();
        assert!((op.covariance_dense() - inv).amax() < 1e-10);
    }

    #[test]
    fn rejects_alpha_below_half_dimension() {
        let mesh = Mesh::unit_square(3).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let model = FieldModel::stationary(&mesh, 1.0, 3.0, 1.0).unwrap();
        assert!(build_fractional(&model, &fem, 2).is_err());
    }

    #[test]
    fn factored_covariance_matches_sparse_pair() {
        // Small, well-conditioned case where Q_x can be inverted densely.
        let mesh = Mesh::interval(0.0, 1.0, 20).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        for alpha in [1.5, 2.3, 2.7] {
            let model = FieldModel::stationary(&mesh, alpha, 6.0, 1.3).unwrap();
            let op = build_fractional(&model, &fem, 1).unwrap();
            let p = op.p.to_dense();
            let sigma = &p * op.q_x.to_dense().try_inverse().unwrap() * p.transpose();
            let factored = op.covariance_dense();
            assert!(
                (&sigma - &factored).amax() <= 1e-8 * factored.amax(),
                "alpha={alpha}"
            );
        }
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mesh = Mesh::unit_square(10).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        for alpha in [1.5, 2.5] {
            let model = FieldModel::stationary(&mesh, alpha, 4.0, 1.0).unwrap();
            let op = build_fractional(&model, &fem, 4).unwrap();
            let s = op.covariance_dense();
            let scale = s.amax();
            assert!((&s - s.transpose()).amax() <= 1e-12 * scale);
            let sym = (&s + s.transpose()) * 0.5;
            let min = sym.symmetric_eigenvalues().min();
            assert!(min >= -1e-10 * scale, "{min}");
        }
    }

    #[test]
    fn fractional_variance_lies_between_integer_neighbours() {
        let mesh = Mesh::interval(0.0, 4.0, 200).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let var = |alpha: f64| {
            let model = FieldModel::stationary(&mesh, alpha, 3.0, 1.0).unwrap();
            build_fractional(&model, &fem, 4)
                .unwrap()
                .covariance_column(100)[100]
        };
        let (v1, v15, v2) = (var(1.0), var(1.5), var(2.0));
        let expected = crate::oracles::matern_sigma2(3.0, 1.0, 1.5, 1).unwrap();
        assert!(v1 > v15 && v15 > v2);
        assert!((v15 / expected - 1.0).abs() < 0.02, "{v15} vs {expected}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let mesh = Mesh::unit_square(6).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let model = FieldModel::stationary(&mesh, 1.7, 4.0, 1.0).unwrap();
        let op = build_fractional(&model, &fem, 3).unwrap();
        assert_eq!(op.sample(9), op.sample(9));
        assert_ne!(op.sample(9), op.sample(10));
        assert!(op.header_text().contains("m=3\n"));
    }
}
