//! Finite-element matrices for piecewise-linear bases: the consistent mass
//! matrix `C`, its lumped diagonal, and the stiffness matrix `G`.
//!
//! Element contributions are accumulated in ascending simplex order and then
//! in local-index order, so repeated assemblies are bit-identical.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind, Point};
use crate::sparse::SparseSymMatrix;

/// Per-triangle 2×2 diffusion tensor `H` in `∇·(H∇u)`.
///
/// Planar tensors are in global coordinates. On the sphere they are expressed
/// in the facet frame `(e1, e2)`, with `e1` along the first edge of the
/// triangle and `e2 = n × e1`.
pub type Tensor2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct FemMatrices {
    pub c_consistent: SparseSymMatrix,
    pub c_lumped: Vec<f64>,
    pub g: SparseSymMatrix,
}

impl FemMatrices {
    pub fn assemble(mesh: &Mesh, anisotropy: Option<&[Tensor2]>) -> Result<Self> {
        let (c_consistent, c_lumped) = assemble_mass(mesh);
        let g = assemble_stiffness(mesh, anisotropy)?;
        Ok(Self {
            c_consistent,
            c_lumped,
            g,
        })
    }

    pub fn n(&self) -> usize {
        self.c_lumped.len()
    }
}

/// Consistent mass matrix and its row sums.
pub fn assemble_mass(mesh: &Mesh) -> (SparseSymMatrix, Vec<f64>) {
    let mut triplets = Vec::new();
    for s in 0..mesh.n_simplices() {
        let t = mesh.simplex(s);
        let m = mesh.simplex_measure(s);
        let (diag, off) = match mesh.kind() {
            MeshKind::Interval => (m / 3.0, m / 6.0),
            _ => (m / 6.0, m / 12.0),
        };
        for a in 0..t.len() {
            for b in 0..=a {
                triplets.push((t[a], t[b], if a == b { diag } else { off }));
            }
        }
    }
    let c = SparseSymMatrix::from_triplets(mesh.n_vertices(), triplets)
        .expect("mass entries are finite");
    let lumped = c.mul_vec(&vec![1.0; mesh.n_vertices()]);
    (c, lumped)
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn check_spd(h: &Tensor2, triangle: usize) -> Result<()> {
    let scale = h[0][0].abs().max(h[1][1].abs()).max(1.0);
    let symmetric = (h[0][1] - h[1][0]).abs() <= 1e-12 * scale;
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let finite = h.iter().flatten().all(|v| v.is_finite());
    if finite && symmetric && h[0][0] > 0.0 && det > 0.0 {
        Ok(())
    } else {
        Err(Error::NotSpdTensor(triangle))
    }
}

/// Gradients of the three barycentric functions of a triangle, expressed in
/// a 2D frame of its plane, and the triangle area.
fn triangle_gradients(p: [Point; 3], kind: MeshKind) -> ([[f64; 2]; 3], f64) {
    let n = match kind {
        MeshKind::Planar => [0.0, 0.0, 1.0],
        _ => {
            let c = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            let r = dot(&c, &c).sqrt();
            [c[0] / r, c[1] / r, c[2] / r]
        }
    };
    let twice_area = dot(&n, &cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0])));
    // Local frame: global axes for planar meshes, facet frame on the sphere.
    let (e1, e2) = match kind {
        MeshKind::Planar => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        _ => {
            let d = sub(&p[1], &p[0]);
            let r = dot(&d, &d).sqrt();
            let e1 = [d[0] / r, d[1] / r, d[2] / r];
            (e1, cross(&n, &e1))
        }
    };
    let mut grads = [[0.0; 2]; 3];
    for (i, g) in grads.iter_mut().enumerate() {
        // ∇λ_i = n × (p_{i+2} - p_{i+1}) / (2T)
        let edge = sub(&p[(i + 2) % 3], &p[(i + 1) % 3]);
        let v = cross(&n, &edge);
        *g = [dot(&v, &e1) / twice_area, dot(&v, &e2) / twice_area];
    }
    (grads, 0.5 * twice_area)
}

/// Stiffness matrix `G_ij = ⟨H∇ψ_i, ∇ψ_j⟩` with optional per-triangle `H`.
pub fn assemble_stiffness(mesh: &Mesh, anisotropy: Option<&[Tensor2]>) -> Result<SparseSymMatrix> {
    if let Some(h) = anisotropy {
        if mesh.kind() == MeshKind::Interval {
            return Err(Error::invalid(
                "anisotropy tensors require a triangulated mesh",
            ));
        }
        if h.len() != mesh.n_simplices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_simplices(),
                found: h.len(),
            });
        }
        for (t, tensor) in h.iter().enumerate() {
            check_spd(tensor, t)?;
        }
    }
    let mut triplets = Vec::new();
    for s in 0..mesh.n_simplices() {
        let t = mesh.simplex(s);
        match mesh.kind() {
            MeshKind::Interval => {
                let inv = 1.0 / mesh.simplex_measure(s);
                triplets.push((t[0], t[0], inv));
                triplets.push((t[1], t[0], -inv));
                triplets.push((t[1], t[1], inv));
            }
            kind => {
                let p = [mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2])];
                let (grads, area) = triangle_gradients(p, kind);
                for a in 0..3 {
                    let ga = match anisotropy {
                        Some(h) => {
                            let h = &h[s];
                            [
                                h[0][0] * grads[a][0] + h[0][1] * grads[a][1],
                                h[1][0] * grads[a][0] + h[1][1] * grads[a][1],
                            ]
                        }
                        None => grads[a],
                    };
                    for b in 0..=a {
                        let v = area * (ga[0] * grads[b][0] + ga[1] * grads[b][1]);
                        triplets.push((t[a], t[b], v));
                    }
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.n_vertices(), triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::load_mesh;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn single_triangle_mass() {
        let mesh = load_mesh("planar\n3\n0 0\n2 0\n0 1\n1\n0 1 2\n").unwrap();
        let (c, lumped) = assemble_mass(&mesh);
        let area = 1.0;
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert_close(c.get(i, j), expected, 1e-15);
            }
            assert_close(lumped[i], area / 3.0, 1e-15);
        }
    }

    #[test]
    fn right_triangle_stiffness() {
        let mesh = load_mesh("planar\n3\n0 0\n1 0\n0 1\n1\n0 1 2\n").unwrap();
        let g = assemble_stiffness(&mesh, None).unwrap();
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_close(g.get(i, j), 0.5 * expected[i][j], 1e-15);
            }
        }
    }

    #[test]
    fn interval_segment_matrices() {
        let h = 0.3;
        let mesh = Mesh::interval(1.0, 1.0 + h, 1).unwrap();
        let fem = FemMatrices::assemble(&mesh, None).unwrap();
        assert_close(fem.c_consistent.get(0, 0), 2.0 * h / 6.0, 1e-15);
        assert_close(fem.c_consistent.get(1, 0), h / 6.0, 1e-15);
        assert_close(fem.c_lumped[0], h / 2.0, 1e-15);
        assert_close(fem.g.get(0, 0), 1.0 / h, 1e-12);
        assert_close(fem.g.get(0, 1), -1.0 / h, 1e-12);
    }

    #[test]
    fn identity_tensor_matches_isotropic_exactly() {
        let mesh = Mesh::rectangle(0.0, 2.0, 0.0, 1.0, 5, 3).unwrap();
        let eye = vec![[[1.0, 0.0], [0.0, 1.0]]; mesh.n_simplices()];
        assert_eq!(
            assemble_stiffness(&mesh, Some(&eye)).unwrap(),
            assemble_stiffness(&mesh, None).unwrap()
        );
    }

    #[test]
    fn non_spd_tensor_names_triangle() {
        let mesh = Mesh::unit_square(2).unwrap();
        let mut h = vec![[[1.0, 0.0], [0.0, 1.0]]; mesh.n_simplices()];
        h[5] = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            assemble_stiffness(&mesh, Some(&h)),
            Err(Error::NotSpdTensor(5))
        ));
        h[5] = [[1.0, 0.1], [0.0, 1.0]];
        assert!(matches!(
            assemble_stiffness(&mesh, Some(&h)),
            Err(Error::NotSpdTensor(5))
        ));
    }

    #[test]
    fn anisotropic_stiffness_scales_directional_energy() {
        // H = diag(4, 1): the x-derivative energy of u(x, y) = x is multiplied by 4.
        let mesh = Mesh::unit_square(4).unwrap();
        let h = vec![[[4.0, 0.0], [0.0, 1.0]]; mesh.n_simplices()];
        let g = assemble_stiffness(&mesh, Some(&h)).unwrap();
        let gi = assemble_stiffness(&mesh, None).unwrap();
        let ux: Vec<f64> = mesh.vertices().iter().map(|v| v[0]).collect();
        let uy: Vec<f64> = mesh.vertices().iter().map(|v| v[1]).collect();
        assert_close(g.quad_form(&ux), 4.0, 1e-12);
        assert_close(gi.quad_form(&ux), 1.0, 1e-12);
        assert_close(g.quad_form(&uy), 1.0, 1e-12);
    }
}
