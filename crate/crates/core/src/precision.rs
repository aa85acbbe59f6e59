//! Precision matrices of Whittle–Matérn fields with integer `α`, barrier
//! fields, and separable space-time models.
//!
//! With lumped mass `C`, `K = diag(κ²)C + G` and `Q = diag(τ) K (C⁻¹K)^{α−1} diag(τ)`.
//! `κ` is sampled at the vertices.

use crate::assembly::{FemMatrices, Tensor2};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{SparseMatrix, SparseSymMatrix};

pub const MAX_ALPHA: usize = 4;

/// Default cap on the dimension `T·n` of a space-time precision.
pub const DEFAULT_SPACETIME_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub alpha: f64,
    /// Spatial dimension of the mesh (1 for intervals, 2 otherwise).
    pub dimension: usize,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
    pub anisotropy: Option<Vec<Tensor2>>,
    pub barrier_mask: Option<Vec<bool>>,
}

fn check_positive(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(i) => Err(Error::invalid(format!(
            "{name}[{i}] = {} must be positive and finite",
            v[i]
        ))),
        None => Ok(()),
    }
}

impl FieldModel {
    pub fn stationary(mesh: &Mesh, alpha: f64, kappa: f64, tau: f64) -> Result<Self> {
        let n = mesh.n_vertices();
        Self::nonstationary(mesh, alpha, vec![kappa; n], vec![tau; n])
    }

    pub fn nonstationary(mesh: &Mesh, alpha: f64, kappa: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        let n = mesh.n_vertices();
        for v in [&kappa, &tau] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        check_positive("kappa", &kappa)?;
        check_positive("tau", &tau)?;
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::invalid(format!(
                "alpha = {alpha} must be at least 1"
            )));
        }
        Ok(Self {
            alpha,
            dimension: mesh.dimension(),
            kappa,
            tau,
            anisotropy: None,
            barrier_mask: None,
        })
    }

    pub fn with_anisotropy(mut self, tensors: Vec<Tensor2>) -> Self {
        self.anisotropy = Some(tensors);
        self
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    /// Smoothness `ν = α − d/2`.
    pub fn nu(&self) -> f64 {
        self.alpha - self.dimension as f64 / 2.0
    }

    /// Practical correlation range `√(8ν)/κ` at each vertex.
    pub fn practical_range(&self) -> Vec<f64> {
        let c = (8.0 * self.nu()).sqrt();
        self.kappa.iter().map(|k| c / k).collect()
    }

    pub fn is_stationary(&self) -> bool {
        let same = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        same(&self.kappa) && same(&self.tau)
    }

    pub fn is_integer_alpha(&self) -> bool {
        self.alpha.fract() == 0.0
    }

    /// FEM matrices for this model, including any anisotropy tensors.
    pub fn assemble(&self, mesh: &Mesh) -> Result<FemMatrices> {
        FemMatrices::assemble(mesh, self.anisotropy.as_deref())
    }
}

/// `K = diag(κ²)C + G` with lumped `C`.
pub fn shifted_stiffness(kappa: &[f64], fem: &FemMatrices) -> Result<SparseSymMatrix> {
    let d: Vec<f64> = kappa
        .iter()
        .zip(&fem.c_lumped)
        .map(|(k, c)| k * k * c)
        .collect();
    SparseSymMatrix::diagonal(&d).add_scaled(1.0, &fem.g, 1.0)
}

pub fn build_precision(model: &FieldModel, fem: &FemMatrices) -> Result<SparseSymMatrix> {
    let alpha = model.alpha;
    if alpha.fract() != 0.0 || !(1.0..=MAX_ALPHA as f64).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha = {alpha} is not an integer in 1..={MAX_ALPHA}"
        )));
    }
    if model.n() != fem.n() {
        return Err(Error::DimensionMismatch {
            expected: fem.n(),
            found: model.n(),
        });
    }
    let k = shifted_stiffness(&model.kappa, fem)?;
    let mut q = k.clone();
    if alpha as usize > 1 {
        let k_full = k.to_full();
        let inv_c: Vec<f64> = fem.c_lumped.iter().map(|c| 1.0 / c).collect();
        let ones = vec![1.0; fem.n()];
        let cinv_k = k_full.scale(&inv_c, &ones);
        let mut prod: SparseMatrix = k_full;
        for _ in 1..alpha as usize {
            prod = prod.matmul(&cinv_k)?;
        }
        q = SparseSymMatrix::from_lower_of(&prod)?;
    }
    Ok(q.congruence_diag(&model.tau))
}

/// Per-vertex `κ` for a barrier model with `α = 2`: `√(8ν)/range_normal`
/// everywhere, multiplied by `range_factor` at vertices whose incident
/// triangles are all in the barrier.
pub fn make_barrier_kappa(
    mesh: &Mesh,
    barrier_mask: &[bool],
    range_normal: f64,
    range_factor: f64,
) -> Result<Vec<f64>> {
    if barrier_mask.len() != mesh.n_simplices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_simplices(),
            found: barrier_mask.len(),
        });
    }
    if !(range_normal > 0.0 && range_normal.is_finite()) {
        return Err(Error::invalid("range_normal must be positive"));
    }
    if !(range_factor >= 10.0 && range_factor.is_finite()) {
        return Err(Error::invalid(format!(
            "range_factor = {range_factor} is below the minimum of 10"
        )));
    }
    let nu = 2.0 - mesh.dimension() as f64 / 2.0;
    let kappa = (8.0 * nu).sqrt() / range_normal;
    let mut all_barrier = vec![true; mesh.n_vertices()];
    for (s, &masked) in barrier_mask.iter().enumerate() {
        if !masked {
            for &v in mesh.simplex(s) {
                all_barrier[v] = false;
            }
        }
    }
    Ok(all_barrier
        .into_iter()
        .map(|b| if b { kappa * range_factor } else { kappa })
        .collect())
}

/// Barrier field model (`α = 2`) with the given `τ`.
pub fn barrier_model(
    mesh: &Mesh,
    barrier_mask: Vec<bool>,
    range_normal: f64,
    range_factor: f64,
    tau: f64,
) -> Result<FieldModel> {
    let kappa = make_barrier_kappa(mesh, &barrier_mask, range_normal, range_factor)?;
    let mut model = FieldModel::nonstationary(mesh, 2.0, kappa, vec![tau; mesh.n_vertices()])?;
    model.barrier_mask = Some(barrier_mask);
    Ok(model)
}

/// Unit-variance AR(1) precision of length `t`.
pub fn ar1_precision(phi: f64, t: usize) -> Result<SparseSymMatrix> {
    if !(phi.abs() < 1.0) {
        return Err(Error::invalid(format!(
            "|phi| = {} must be below 1",
            phi.abs()
        )));
    }
    if t < 2 {
        return Err(Error::invalid(
            "an AR(1) precision needs at least 2 time steps",
        ));
    }
    let s = 1.0 / (1.0 - phi * phi);
    let mut entries = Vec::with_capacity(2 * t);
    for i in 0..t {
        let d = if i == 0 || i == t - 1 {
            s
        } else {
            (1.0 + phi * phi) * s
        };
        entries.push((i, i, d));
        if i > 0 {
            entries.push((i, i - 1, -phi * s));
        }
    }
    SparseSymMatrix::from_triplets(t, entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeModel {
    pub spatial: FieldModel,
    pub time_steps: usize,
    pub h_t: f64,
    pub damping: f64,
}

impl SpaceTimeModel {
    pub fn new(spatial: FieldModel, time_steps: usize, h_t: f64, damping: f64) -> Result<Self> {
        if time_steps < 2 {
            return Err(Error::invalid(
                "a space-time model needs at least 2 time steps",
            ));
        }
        if !(h_t > 0.0 && damping > 0.0 && h_t.is_finite() && damping.is_finite()) {
            return Err(Error::invalid("h_t and damping must be positive"));
        }
        Ok(Self {
            spatial,
            time_steps,
            h_t,
            damping,
        })
    }

    /// Model with unit time step and the given autocorrelation `φ ∈ (0, 1)`.
    pub fn from_phi(spatial: FieldModel, time_steps: usize, phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::invalid("phi must lie in (0, 1)"));
        }
        Self::new(spatial, time_steps, 1.0, -phi.ln())
    }

    /// `φ = exp(−h_t·a)`.
    pub fn phi(&self) -> f64 {
        (-self.h_t * self.damping).exp()
    }
}

/// `Q_t ⊗ Q_s`, with space-time index `t·n + i`.
pub fn build_spacetime_precision(
    st: &SpaceTimeModel,
    fem: &FemMatrices,
) -> Result<SparseSymMatrix> {
    build_spacetime_precision_capped(st, fem, DEFAULT_SPACETIME_CAP)
}

pub fn build_spacetime_precision_capped(
    st: &SpaceTimeModel,
    fem: &FemMatrices,
    cap: usize,
) -> Result<SparseSymMatrix> {
    let size = st.time_steps.saturating_mul(fem.n());
    if size > cap {
        return Err(Error::SizeCap { size, cap });
    }
    let q_s = build_precision(&st.spatial, fem)?;
    let q_t = ar1_precision(st.phi(), st.time_steps)?;
    Ok(q_t.kron(&q_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CholeskyFactor, Ordering};

    fn square(n: usize) -> (Mesh, FemMatrices) {
        let mesh = Mesh::unit_square(n).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        (mesh, fem)
    }

    #[test]
    fn alpha_two_matches_explicit_product() {
        let (mesh, fem) = square(4);
        let (kappa, tau) = (2.0, 1.5);
        let model = FieldModel::stationary(&mesh, 2.0, kappa, tau).unwrap();
        let q = build_precision(&model, &fem).unwrap().to_dense();
        let k = shifted_stiffness(&model.kappa, &fem).unwrap().to_dense();
        let cinv = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            fem.n(),
            fem.c_lumped.iter().map(|c| 1.0 / c),
        ));
        let expected = &k * cinv * &k * (tau * tau);
        assert!((&q - &expected).norm() <= 1e-12 * expected.norm());
        assert_eq!(q, q.transpose());
        assert!(q.clone().cholesky().is_some());
    }

    #[test]
    fn large_kappa_limit() {
        let (mesh, fem) = square(3);
        let kappa = 1e4;
        let model = FieldModel::stationary(&mesh, 2.0, kappa, 1.0).unwrap();
        let q = build_precision(&model, &fem).unwrap();
        let f = CholeskyFactor::factorize(&q, Ordering::Amd).unwrap();
        let s = f.selected_inverse();
        for i in 0..fem.n() {
            let expected = 1.0 / (kappa.powi(4) * fem.c_lumped[i]);
            assert!((s.get(i, i) - expected).abs() <= 1e-3 * expected);
        }
    }

    #[test]
    fn sparsity_grows_with_alpha() {
        let (mesh, fem) = square(6);
        let mut last = 0;
        let k = shifted_stiffness(&vec![1.0; fem.n()], &fem)
            .unwrap()
            .to_dense();
        let mut power = nalgebra::DMatrix::<f64>::identity(fem.n(), fem.n());
        for alpha in 1..=4 {
            let model = FieldModel::stationary(&mesh, alpha as f64, 1.0, 1.0).unwrap();
            let q = build_precision(&model, &fem).unwrap();
            assert!(q.nnz_lower() >= last);
            last = q.nnz_lower();
            // Pattern equals the α-th power of the graph of K.
            power = &power * k.map(|v| (v != 0.0) as u8 as f64);
            for i in 0..fem.n() {
                for j in 0..=i {
                    assert_eq!(
                        q.contains(i, j),
                        power[(i, j)] != 0.0,
                        "alpha={alpha} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_models() {
        let (mesh, fem) = square(2);
        let mut model = FieldModel::stationary(&mesh, 2.0, 1.0, 1.0).unwrap();
        model.alpha = 5.0;
        assert!(build_precision(&model, &fem).is_err());
        model.alpha = 1.5;
        assert!(build_precision(&model, &fem).is_err());
        assert!(FieldModel::stationary(&mesh, 2.0, 0.0, 1.0).is_err());
        assert!(FieldModel::stationary(&mesh, 2.0, 1.0, f64::NAN).is_err());
        let other = FemMatrices::assemble(&Mesh::unit_square(3).unwrap(), None).unwrap();
        model.alpha = 2.0;
        assert!(matches!(
            build_precision(&model, &other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn green_identity_on_small_model() {
        let (mesh, fem) = square(8);
        let kappa: Vec<f64> = mesh.vertices().iter().map(|v| 1.0 + v[0]).collect();
        let tau: Vec<f64> = mesh.vertices().iter().map(|v| 0.5 + v[1]).collect();
        let model = FieldModel::nonstationary(&mesh, 2.0, kappa, tau).unwrap();
        let q = build_precision(&model, &fem).unwrap().to_dense();
        let sigma = q.clone().try_inverse().unwrap();
        let eye = nalgebra::DMatrix::<f64>::identity(fem.n(), fem.n());
        assert!((&q * &sigma - eye).amax() < 1e-8);
    }

    #[test]
    fn ar1_examples() {
        assert_eq!(
            ar1_precision(0.0, 3).unwrap().to_dense(),
            nalgebra::DMatrix::identity(3, 3)
        );
        let inv = ar1_precision(0.5, 4)
            .unwrap()
            .to_dense()
            .try_inverse()
            .unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = 0.5f64.powi((i as i32 - j as i32).abs());
                assert!((inv[(i, j)] - expected).abs() < 1e-12);
            }
        }
        let q = ar1_precision(0.9, 2).unwrap();
        assert!((q.get(0, 0) - 1.0 / 0.19).abs() < 1e-12);
        assert!((q.get(1, 0) + 0.9 / 0.19).abs() < 1e-12);
        assert!(ar1_precision(1.0, 3).is_err());
        assert!(ar1_precision(0.5, 1).is_err());
    }

    #[test]
    fn barrier_kappa_cases() {
        let mesh = Mesh::unit_square(4).unwrap();
        let none = vec![false; mesh.n_simplices()];
        let k = make_barrier_kappa(&mesh, &none, 0.5, 20.0).unwrap();
        assert!(k.iter().all(|v| (*v - 8f64.sqrt() / 0.5).abs() < 1e-15));
        let all = vec![true; mesh.n_simplices()];
        let k = make_barrier_kappa(&mesh, &all, 0.5, 20.0).unwrap();
        assert!(k
            .iter()
            .all(|v| (*v - 20.0 * 8f64.sqrt() / 0.5).abs() < 1e-12));
        assert!(make_barrier_kappa(&mesh, &all, 0.5, 5.0).is_err());
        assert!(make_barrier_kappa(&mesh, &all[1..], 0.5, 20.0).is_err());
    }

    #[test]
    fn spacetime_structure() {
        let (mesh, fem) = square(3);
        let spatial = FieldModel::stationary(&mesh, 2.0, 3.0, 1.0).unwrap();
        assert!(SpaceTimeModel::new(spatial.clone(), 1, 1.0, 1.0).is_err());
        let st = SpaceTimeModel::new(spatial.clone(), 2, 1.0, 0.5).unwrap();
        assert!((st.phi() - (-0.5f64).exp()).abs() < 1e-15);

        let q_s = build_precision(&spatial, &fem).unwrap();
        let n = fem.n();
        // φ → 0 gives block-diag(Q_s, Q_s).
        let st0 = SpaceTimeModel::new(spatial.clone(), 2, 1.0, 800.0).unwrap();
        let q0 = build_spacetime_precision(&st0, &fem).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(q0.get(i, j), q_s.get(i, j));
                assert_eq!(q0.get(n + i, n + j), q_s.get(i, j));
                assert_eq!(q0.get(n + i, j), 0.0);
            }
        }

        let st = SpaceTimeModel::new(spatial, 4, 1.0, 0.3).unwrap();
        let q = build_spacetime_precision(&st, &fem).unwrap();
        let sigma = q.to_dense().try_inverse().unwrap();
        let sigma_s = q_s.to_dense().try_inverse().unwrap();
        for t in 0..4 {
            let block = sigma.view((t * n, t * n), (n, n));
            assert!((block - &sigma_s).amax() < 1e-9);
        }
        assert!(matches!(
            build_spacetime_precision_capped(&st, &fem, 10),
            Err(Error::SizeCap { .. })
        ));
    }
}
