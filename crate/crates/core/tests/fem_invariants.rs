use proptest::prelude::*;
use spdekit::precision::{build_precision, FieldModel};
use spdekit::sparse::matrix_market::{read_symmetric, write_symmetric};
use spdekit::{CholeskyFactor, FemMatrices, Mesh, Ordering};

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stiffness_annihilates_constants(nx in 1usize..9, ny in 1usize..9, w in 0.2f64..5.0, h in 0.2f64..5.0) {
        let mesh = Mesh::rectangle(0.0, w, 0.0, h, nx, ny).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let g1 = fem.g.mul_vec(&vec![1.0; fem.n()]);
        prop_assert!(max_abs(&g1) < 1e-12 * (1.0 + max_abs(&fem.g.diag())));
    }

    #[test]
    fn mass_sums_to_area(nx in 1usize..9, ny in 1usize..9, w in 0.2f64..5.0, h in 0.2f64..5.0) {
        let mesh = Mesh::rectangle(0.0, w, 0.0, h, nx, ny).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        let lumped: f64 = fem.c_lumped.iter().sum();
        let consistent: f64 = fem.c_consistent.mul_vec(&vec![1.0; fem.n()]).iter().sum();
        prop_assert!((lumped - w * h).abs() < 1e-12 * w * h);
        prop_assert!((consistent - w * h).abs() < 1e-12 * w * h);
    }

    #[test]
    fn domain_scaling(n in 1usize..8, s in 0.1f64..10.0) {
        let base = FemMatrices::assemble(&Mesh::unit_square(n).unwrap(), None).unwrap();
        let scaled = FemMatrices::assemble(&Mesh::rectangle(0.0, s, 0.0, s, n, n).unwrap(), None).unwrap();
        for (i, j, v) in base.c_consistent.lower_triplets() {
            prop_assert!((scaled.c_consistent.get(i, j) - s * s * v).abs() < 1e-10 * s * s);
        }
        for (i, j, v) in base.g.lower_triplets() {
            prop_assert!((scaled.g.get(i, j) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn interval_quadratic_form_is_dirichlet_energy(cells in 1usize..40, len in 0.5f64..4.0, slope in -3.0f64..3.0) {
        let fem = FemMatrices::assemble(&Mesh::interval(0.0, len, cells).unwrap(), None).unwrap();
        let u: Vec<f64> = (0..=cells).map(|i| slope * len * i as f64 / cells as f64).collect();
        let energy = fem.g.quad_form(&u);
        prop_assert!((energy - slope * slope * len).abs() < 1e-9 * (1.0 + energy));
    }
}

#[test]
fn assembly_is_deterministic() {
    let mesh = Mesh::icosphere(2).unwrap();
    let a = FemMatrices::assemble(&mesh, None).unwrap();
    let b = FemMatrices::assemble(&mesh, None).unwrap();
    assert_eq!(write_symmetric(&a.g), write_symmetric(&b.g));
    assert_eq!(
        write_symmetric(&a.c_consistent),
        write_symmetric(&b.c_consistent)
    );
}

#[test]
fn precision_round_trips_through_matrix_market() {
    let mesh = Mesh::unit_square(6).unwrap();
    let model = FieldModel::stationary(&mesh, 2.0, 4.0, 1.5).unwrap();
    let q = build_precision(&model, &model.assemble(&mesh).unwrap()).unwrap();
    let back = read_symmetric(&write_symmetric(&q)).unwrap();
    assert_eq!(back.nnz_lower(), q.nnz_lower());
    for (i, j, v) in q.lower_triplets() {
        assert_eq!(back.get(i, j), v);
    }
    let f1 = CholeskyFactor::factorize(&q, Ordering::Amd).unwrap();
    let f2 = CholeskyFactor::factorize(&back, Ordering::Amd).unwrap();
    assert_eq!(f1.logdet(), f2.logdet());
}

#[test]
fn higher_alpha_is_smoother() {
    // Mean squared neighbour difference of unit-variance samples drops as alpha grows.
    let mesh = Mesh::interval(0.0, 10.0, 400).unwrap();
    let roughness = |alpha: f64| {
        let model = FieldModel::stationary(&mesh, alpha, 2.0, 1.0).unwrap();
        let q = build_precision(&model, &model.assemble(&mesh).unwrap()).unwrap();
        let f = CholeskyFactor::factorize(&q, Ordering::Amd).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for seed in 0..20 {
            let x = f.sample(seed);
            num += x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
            den += x.iter().map(|v| v * v).sum::<f64>();
        }
        num / den
    };
    let r1 = roughness(1.0);
    let r2 = roughness(2.0);
    assert!(r2 < 0.5 * r1, "alpha=1 {r1}, alpha=2 {r2}");
}
