//! Triangulated domains: intervals, planar triangulations and spherical
//! triangulations, with piecewise-linear basis evaluation.
//!
//! Mesh file format (line oriented, `#` starts a comment):
//!
//! ```text
//! planar
//! 4
//! 0 0
//! 1 0
//! 1 1
//! 0 1
//! 2
//! 0 1 2
//! 0 2 3
//! ```
//!
//! The first line is the kind (`interval`, `planar` or `sphere`), followed by
//! the vertex count and one line of 1, 2 or 3 coordinates per vertex, then the
//! simplex count and one line of 0-based vertex indices (2 or 3) per simplex.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Coordinates of a point; unused trailing components are zero.
pub type Point = [f64; 3];

/// Above this many point-simplex pairs, point location uses a grid index.
const BRUTE_FORCE_LIMIT: usize = 10_000_000;

/// Barycentric tolerance for point-in-simplex tests.
const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Interval,
    Planar,
    Sphere,
}

impl MeshKind {
    /// Number of stored coordinates per vertex.
    pub fn coords(self) -> usize {
        match self {
            MeshKind::Interval => 1,
            MeshKind::Planar => 2,
            MeshKind::Sphere => 3,
        }
    }

    fn simplex_size(self) -> usize {
        match self {
            MeshKind::Interval => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshKind::Interval => "interval",
            MeshKind::Planar => "planar",
            MeshKind::Sphere => "sphere",
        }
    }
}

impl std::str::FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(MeshKind::Interval),
            "planar" => Ok(MeshKind::Planar),
            "sphere" => Ok(MeshKind::Sphere),
            other => Err(Error::parse(1, format!("unknown mesh kind '{other}'"))),
        }
    }
}

/// A validated, immutable simplicial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    kind: MeshKind,
    vertices: Vec<Point>,
    simplices: Vec<usize>,
    boundary: Vec<bool>,
}

/// Basis evaluation matrix `A` with `A[i][j] = ψ_j(s_i)`.
///
/// Rows of points outside the domain are empty and flagged in `exterior`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub matrix: SparseMatrix,
    pub exterior: Vec<bool>,
}

impl ProjectionMatrix {
    pub fn n_points(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn exterior_rows(&self) -> Vec<usize> {
        (0..self.exterior.len())
            .filter(|&i| self.exterior[i])
            .collect()
    }

    /// The matrix, or an error naming the first exterior point.
    pub fn interior(&self) -> Result<&SparseMatrix> {
        match self.exterior.iter().position(|&e| e) {
            Some(i) => Err(Error::ExteriorPoint(i)),
            None => Ok(&self.matrix),
        }
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl Mesh {
    /// Validates and normalises a mesh: sphere vertices are projected onto the
    /// unit sphere, planar triangles are oriented counter-clockwise and
    /// spherical triangles outward.
    pub fn new(kind: MeshKind, vertices: Vec<Point>, simplices: Vec<Vec<usize>>) -> Result<Self> {
        let k = kind.simplex_size();
        let n = vertices.len();
        let mut vertices = vertices;
        if kind == MeshKind::Sphere {
            for v in &mut vertices {
                let r = norm(v);
                if r == 0.0 || !r.is_finite() {
                    return Err(Error::invalid("sphere vertex at the origin"));
                }
                // Already-normalised input is kept bit-for-bit.
                if (r - 1.0).abs() > 4.0 * f64::EPSILON {
                    v.iter_mut().for_each(|c| *c /= r);
                }
            }
        }
        let mut flat = Vec::with_capacity(simplices.len() * k);
        for (s, simplex) in simplices.iter().enumerate() {
            if simplex.len() != k {
                return Err(Error::invalid(format!(
                    "simplex {s} has {} vertices, expected {k}",
                    simplex.len()
                )));
            }
            for &v in simplex {
                if v >= n {
                    return Err(Error::IndexOutOfRange {
                        simplex: s,
                        vertex: v,
                        n_vertices: n,
                    });
                }
            }
            flat.extend_from_slice(simplex);
        }
        let mut mesh = Mesh {
            kind,
            vertices,
            simplices: flat,
            boundary: vec![false; n],
        };
        mesh.orient_and_check_degeneracy()?;
        mesh.check_connectivity()?;
        mesh.boundary = mesh.detect_boundary();
        Ok(mesh)
    }

    fn orient_and_check_degeneracy(&mut self) -> Result<()> {
        let k = self.kind.simplex_size();
        for s in 0..self.n_simplices() {
            let idx = &self.simplices[s * k..(s + 1) * k];
            if idx
                .iter()
                .enumerate()
                .any(|(a, x)| idx[a + 1..].contains(x))
            {
                return Err(Error::DegenerateSimplex(s));
            }
            let p: Vec<Point> = idx.iter().map(|&i| self.vertices[i]).collect();
            match self.kind {
                MeshKind::Interval => {
                    if (p[1][0] - p[0][0]).abs() == 0.0 {
                        return Err(Error::DegenerateSimplex(s));
                    }
                }
                MeshKind::Planar | MeshKind::Sphere => {
                    let e1 = sub(&p[1], &p[0]);
                    let e2 = sub(&p[2], &p[0]);
                    let e3 = sub(&p[2], &p[1]);
                    let scale = dot(&e1, &e1).max(dot(&e2, &e2)).max(dot(&e3, &e3));
                    let n = cross(&e1, &e2);
                    let twice_area = norm(&n);
                    if !(twice_area > 1e-12 * scale) {
                        return Err(Error::DegenerateSimplex(s));
                    }
                    let flip = match self.kind {
                        MeshKind::Planar => n[2] < 0.0,
                        _ => dot(&n, &p[0]) < 0.0,
                    };
                    if flip {
                        self.simplices.swap(s * k + 1, s * k + 2);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_connectivity(&self) -> Result<()> {
        let ns = self.n_simplices();
        let mut uf = UnionFind::new(ns);
        let mut used = vec![false; self.n_vertices()];
        match self.kind {
            MeshKind::Interval => {
                let mut owner: HashMap<usize, usize> = HashMap::new();
                for s in 0..ns {
                    for &v in self.simplex(s) {
                        used[v] = true;
                        if let Some(&t) = owner.get(&v) {
                            uf.union(s, t);
                        } else {
                            owner.insert(v, s);
                        }
                    }
                }
            }
            _ => {
                let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
                for s in 0..ns {
                    let t = self.simplex(s);
                    for &v in t {
                        used[v] = true;
                    }
                    for e in 0..3 {
                        let (a, b) = (t[e], t[(e + 1) % 3]);
                        let key = (a.min(b), a.max(b));
                        if let Some(&o) = owner.get(&key) {
                            uf.union(s, o);
                        } else {
                            owner.insert(key, s);
                        }
                    }
                }
            }
        }
        let simplex_components = (0..ns).filter(|&s| uf.find(s) == s).count();
        let isolated = used.iter().filter(|u| !**u).count();
        let components = simplex_components + isolated;
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(())
    }

    fn detect_boundary(&self) -> Vec<bool> {
        let mut boundary = vec![false; self.n_vertices()];
        match self.kind {
            MeshKind::Interval => {
                let mut count = vec![0usize; self.n_vertices()];
                for s in 0..self.n_simplices() {
                    for &v in self.simplex(s) {
                        count[v] += 1;
                    }
                }
                for (b, c) in boundary.iter_mut().zip(count) {
                    *b = c == 1;
                }
            }
            _ => {
                let mut count: HashMap<(usize, usize), usize> = HashMap::new();
                for s in 0..self.n_simplices() {
                    let t = self.simplex(s);
                    for e in 0..3 {
                        let (a, b) = (t[e], t[(e + 1) % 3]);
                        *count.entry((a.min(b), a.max(b))).or_default() += 1;
                    }
                }
                for ((a, b), c) in count {
                    if c == 1 {
                        boundary[a] = true;
                        boundary[b] = true;
                    }
                }
            }
        }
        boundary
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Intrinsic dimension `d` of the domain (1 for intervals, 2 otherwise).
    pub fn dimension(&self) -> usize {
        match self.kind {
            MeshKind::Interval => 1,
            _ => 2,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.simplices.len() / self.kind.simplex_size()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        let k = self.kind.simplex_size();
        &self.simplices[s * k..(s + 1) * k]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&v| self.boundary[v])
            .collect()
    }

    /// Length or (planar facet) area of simplex `s`.
    pub fn simplex_measure(&self, s: usize) -> f64 {
        let t = self.simplex(s);
        let p0 = self.vertices[t[0]];
        let p1 = self.vertices[t[1]];
        match self.kind {
            MeshKind::Interval => (p1[0] - p0[0]).abs(),
            _ => {
                let p2 = self.vertices[t[2]];
                0.5 * norm(&cross(&sub(&p1, &p0), &sub(&p2, &p0)))
            }
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_simplices())
            .map(|s| self.simplex_measure(s))
            .sum()
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.kind.simplex_size();
        let mut edges = Vec::new();
        for s in 0..self.n_simplices() {
            let t = self.simplex(s);
            for a in 0..k {
                for b in a + 1..k {
                    edges.push((t[a].min(t[b]), t[a].max(t[b])));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// `w_j = ⟨ψ_j, 1⟩`: each simplex contributes `|simplex| / (k)` to its
    /// `k` vertices.
    pub fn vertex_weights(&self) -> Vec<f64> {
        let k = self.kind.simplex_size() as f64;
        let mut w = vec![0.0; self.n_vertices()];
        for s in 0..self.n_simplices() {
            let share = self.simplex_measure(s) / k;
            for &v in self.simplex(s) {
                w[v] += share;
            }
        }
        w
    }

    /// Barycentric weights of `p` in simplex `s`, if `p` lies inside.
    pub fn barycentric(&self, s: usize, p: &Point) -> Option<Vec<f64>> {
        let t = self.simplex(s);
        let v = |i: usize| self.vertices[t[i]];
        let weights = match self.kind {
            MeshKind::Interval => {
                let (a, b) = (v(0)[0], v(1)[0]);
                let u = (p[0] - a) / (b - a);
                vec![1.0 - u, u]
            }
            MeshKind::Planar => {
                let (a, b, c) = (v(0), v(1), v(2));
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
                let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
                vec![1.0 - l1 - l2, l1, l2]
            }
            MeshKind::Sphere => {
                let (a, b, c) = (v(0), v(1), v(2));
                let n = cross(&sub(&b, &a), &sub(&c, &a));
                let denom = dot(&n, p);
                if denom <= 0.0 {
                    return None;
                }
                // Gnomonic projection onto the facet plane.
                let scale = dot(&n, &a) / denom;
                let q = [p[0] * scale, p[1] * scale, p[2] * scale];
                let nn = dot(&n, &n);
                let area = |x: &Point, y: &Point| dot(&n, &cross(&sub(x, &q), &sub(y, &q))) / nn;
                vec![area(&b, &c), area(&c, &a), area(&a, &b)]
            }
        };
        if weights.iter().all(|&w| w >= -INSIDE_TOL) {
            let clamped: Vec<f64> = weights.iter().map(|&w| w.max(0.0)).collect();
            let total: f64 = clamped.iter().sum();
            Some(clamped.iter().map(|w| w / total).collect())
        } else {
            None
        }
    }

    /// Lowest-index simplex containing `p` and the barycentric weights.
    pub fn locate(&self, p: &Point) -> Option<(usize, Vec<f64>)> {
        (0..self.n_simplices()).find_map(|s| self.barycentric(s, p).map(|w| (s, w)))
    }

    /// Evaluates all basis functions at `points`.
    pub fn evaluate_basis(&self, points: &[Point]) -> ProjectionMatrix {
        if points.len().saturating_mul(self.n_simplices()) <= BRUTE_FORCE_LIMIT {
            self.evaluate_basis_with(points, |p| self.locate(p))
        } else {
            let index = GridIndex::build(self);
            self.evaluate_basis_with(points, |p| index.locate(self, p))
        }
    }

    /// Same as [`Mesh::evaluate_basis`] but always through the grid index.
    pub fn evaluate_basis_indexed(&self, points: &[Point]) -> ProjectionMatrix {
        let index = GridIndex::build(self);
        self.evaluate_basis_with(points, |p| index.locate(self, p))
    }

    fn evaluate_basis_with(
        &self,
        points: &[Point],
        locate: impl Fn(&Point) -> Option<(usize, Vec<f64>)>,
    ) -> ProjectionMatrix {
        let mut exterior = vec![false; points.len()];
        let mut triplets = Vec::with_capacity(points.len() * 3);
        for (i, p) in points.iter().enumerate() {
            let p = if self.kind == MeshKind::Sphere {
                let r = norm(p);
                [p[0] / r, p[1] / r, p[2] / r]
            } else {
                *p
            };
            match locate(&p) {
                Some((s, w)) => {
                    for (&v, &wt) in self.simplex(s).iter().zip(&w) {
                        if wt > 0.0 {
                            triplets.push((i, v, wt));
                        }
                    }
                }
                None => exterior[i] = true,
            }
        }
        let matrix = SparseMatrix::from_triplets(points.len(), self.n_vertices(), triplets)
            .expect("barycentric weights are finite");
        ProjectionMatrix { matrix, exterior }
    }

    /// Serialises the mesh in the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.kind.name());
        let _ = writeln!(out, "{}", self.n_vertices());
        let c = self.kind.coords();
        for v in &self.vertices {
            let coords: Vec<String> = v[..c].iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "{}", coords.join(" "));
        }
        let _ = writeln!(out, "{}", self.n_simplices());
        for s in 0..self.n_simplices() {
            let idx: Vec<String> = self.simplex(s).iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", idx.join(" "));
        }
        out
    }

    /// Uniform interval mesh on `[a, b]` with `cells` segments.
    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        if !(b > a) || cells == 0 {
            return Err(Error::invalid("interval needs b > a and at least one cell"));
        }
        let h = (b - a) / cells as f64;
        let vertices = (0..=cells)
            .map(|i| {
                let x = if i == cells { b } else { a + h * i as f64 };
                [x, 0.0, 0.0]
            })
            .collect();
        let segments = (0..cells).map(|i| vec![i, i + 1]).collect();
        Mesh::new(MeshKind::Interval, vertices, segments)
    }

    /// Regular triangulation of `[x0, x1] × [y0, y1]` with `nx × ny` cells,
    /// each split along the same diagonal. Vertex `(i, j)` has index
    /// `j·(nx + 1) + i`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || nx == 0 || ny == 0 {
            return Err(Error::invalid("rectangle needs positive extent and cells"));
        }
        let coord = |lo: f64, hi: f64, k: usize, n: usize| {
            if k == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n as f64
            }
        };
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([coord(x0, x1, i, nx), coord(y0, y1, j, ny), 0.0]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(MeshKind::Planar, vertices, triangles)
    }

    /// Unit-square mesh with `n × n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    /// Icosahedron refined `refinements` times by edge-midpoint subdivision,
    /// with new vertices projected to the unit sphere.
    pub fn icosphere(refinements: usize) -> Result<Self> {
        let (mut vertices, mut faces) = icosahedron();
        for _ in 0..refinements {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
                *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let (p, q) = (vertices[a], vertices[b]);
                    let m = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                    let r = norm(&m);
                    vertices.push([m[0] / r, m[1] / r, m[2] / r]);
                    vertices.len() - 1
                })
            };
            for f in &faces {
                let ab = mid(f[0], f[1], &mut vertices);
                let bc = mid(f[1], f[2], &mut vertices);
                let ca = mid(f[2], f[0], &mut vertices);
                next.push(vec![f[0], ab, ca]);
                next.push(vec![f[1], bc, ab]);
                next.push(vec![f[2], ca, bc]);
                next.push(vec![ab, bc, ca]);
            }
            faces = next;
        }
        Mesh::new(MeshKind::Sphere, vertices, faces)
    }
}

/// Unit-norm icosahedron vertices and faces.
pub(crate) fn icosahedron() -> (Vec<Point>, Vec<Vec<usize>>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|v| {
            let r = norm(v);
            [v[0] / r, v[1] / r, v[2] / r]
        })
        .collect();
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces.iter().map(|f| f.to_vec()).collect())
}

/// Parses and validates a mesh file.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::parse(text.lines().count().max(1), format!("missing {what}")))
    };
    let (line, kind_text) = next("mesh kind")?;
    let kind: MeshKind = kind_text
        .parse()
        .map_err(|_| Error::parse(line, format!("unknown mesh kind '{kind_text}'")))?;
    let count = |line: usize, s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse(line, format!("invalid count '{s}': {e}")))
    };
    let (line, n_text) = next("vertex count")?;
    let n = count(line, n_text)?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, l) = next("vertex line")?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(line, format!("invalid coordinate '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        if coords.len() != kind.coords() {
            return Err(Error::parse(
                line,
                format!(
                    "expected {} coordinates, found {}",
                    kind.coords(),
                    coords.len()
                ),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::parse(line, "non-finite coordinate"));
        }
        let mut p = [0.0; 3];
        p[..coords.len()].copy_from_slice(&coords);
        vertices.push(p);
    }
    let (line, m_text) = next("simplex count")?;
    let m = count(line, m_text)?;
    let mut simplices = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, l) = next("simplex line")?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::parse(line, format!("invalid index '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        if idx.len() != kind.simplex_size() {
            return Err(Error::parse(
                line,
                format!(
                    "expected {} indices, found {}",
                    kind.simplex_size(),
                    idx.len()
                ),
            ));
        }
        simplices.push(idx);
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::parse(line, "unexpected trailing content"));
    }
    Mesh::new(kind, vertices, simplices)
}

/// Uniform grid over the vertex bounding box; each cell lists the simplices
/// whose (expanded) bounding box overlaps it, in ascending order.
struct GridIndex {
    lo: [f64; 3],
    cell: [f64; 3],
    dims: [usize; 3],
    cells: Vec<Vec<usize>>,
}

impl GridIndex {
    fn build(mesh: &Mesh) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in mesh.vertices() {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let active: Vec<usize> = (0..3).filter(|&a| hi[a] > lo[a]).collect();
        let per_axis = (mesh.n_simplices() as f64)
            .powf(1.0 / active.len().max(1) as f64)
            .ceil()
            .max(1.0) as usize;
        let mut dims = [1usize; 3];
        let mut cell = [1.0; 3];
        for &a in &active {
            dims[a] = per_axis;
            cell[a] = (hi[a] - lo[a]) / per_axis as f64;
        }
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut index = GridIndex {
            lo,
            cell,
            dims,
            cells: Vec::new(),
        };
        for s in 0..mesh.n_simplices() {
            let t = mesh.simplex(s);
            let mut blo = [f64::INFINITY; 3];
            let mut bhi = [f64::NEG_INFINITY; 3];
            for &v in t {
                let p = mesh.vertex(v);
                for a in 0..3 {
                    blo[a] = blo[a].min(p[a]);
                    bhi[a] = bhi[a].max(p[a]);
                }
            }
            // Spherical caps bulge past their facet by at most 1 - dist(plane, 0).
            let margin = if mesh.kind() == MeshKind::Sphere {
                let (a, b, c) = (mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2]));
                let n = cross(&sub(&b, &a), &sub(&c, &a));
                1.0 - dot(&n, &a) / norm(&n) + 1e-9
            } else {
                1e-9 * (1.0 + bhi.iter().zip(&blo).map(|(h, l)| h - l).fold(0.0, f64::max))
            };
            let c0 = index.cell_coords(&blo.map(|x| x - margin));
            let c1 = index.cell_coords(&bhi.map(|x| x + margin));
            for i in c0[0]..=c1[0] {
                for j in c0[1]..=c1[1] {
                    for k in c0[2]..=c1[2] {
                        cells[index.flat(i, j, k)].push(s);
                    }
                }
            }
        }
        index.cells = cells;
        index
    }

    fn cell_coords(&self, p: &Point) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let x = ((p[a] - self.lo[a]) / self.cell[a]).floor();
            c[a] = x.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        c
    }

    fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    fn locate(&self, mesh: &Mesh, p: &Point) -> Option<(usize, Vec<f64>)> {
        let c = self.cell_coords(p);
        self.cells[self.flat(c[0], c[1], c[2])]
            .iter()
            .find_map(|&s| mesh.barycentric(s, p).map(|w| (s, w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "planar\n4\n0 0\n1 0\n1 1\n0 1\n2\n0 1 2\n0 2 3\n";

    #[test]
    fn loads_unit_square() {
        let mesh = load_mesh(SQUARE).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_simplices(), 2);
        assert_eq!(mesh.boundary_vertices(), vec![0, 1, 2, 3]);
        assert!((mesh.vertex_weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loads_interval_with_comments() {
        let text = "# interval\ninterval\n3\n0\n0.5 # mid\n1\n2\n0 1\n1 2\n";
        let mesh = load_mesh(text).unwrap();
        assert_eq!(mesh.kind(), MeshKind::Interval);
        assert_eq!(mesh.boundary_vertices(), vec![0, 2]);
        assert_eq!(mesh.vertex_weights(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn clockwise_triangles_are_reoriented() {
        let mesh = load_mesh("planar\n3\n0 0\n0 1\n1 0\n1\n0 1 2\n").unwrap();
        assert_eq!(mesh.simplex(0), &[0, 2, 1]);
    }

    #[test]
    fn parse_errors_report_line_numbers() {
        let err = load_mesh("planar\n2\n0 0\n1 x\n0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = load_mesh("planar\n3\n0 0\n1 0\n0 1\n1\n0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
        assert!(matches!(
            load_mesh("cube\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_invalid_topology() {
        let out_of_range = load_mesh("planar\n3\n0 0\n1 0\n0 1\n1\n0 1 3\n");
        assert!(matches!(
            out_of_range,
            Err(Error::IndexOutOfRange { vertex: 3, .. })
        ));
        let degenerate = load_mesh("planar\n3\n0 0\n1 0\n2 0\n1\n0 1 2\n");
        assert!(matches!(degenerate, Err(Error::DegenerateSimplex(0))));
        // Two triangles touching at a single vertex are not edge-connected.
        let bowtie = "planar\n5\n0 0\n1 0\n0 1\n-1 0\n0 -1\n2\n0 1 2\n0 3 4\n";
        assert!(matches!(
            load_mesh(bowtie),
            Err(Error::Disconnected { components: 2 })
        ));
        let unused = load_mesh("interval\n3\n0\n1\n5\n1\n0 1\n");
        assert!(matches!(unused, Err(Error::Disconnected { .. })));
    }

    #[test]
    fn icosahedron_file_is_normalised() {
        let (vertices, faces) = icosahedron();
        let mut text = String::from("sphere\n12\n");
        for (k, v) in vertices.iter().enumerate() {
            let s = 1.0 + if k % 2 == 0 { 1e-9 } else { -1e-9 };
            text += &format!("{} {} {}\n", v[0] * s, v[1] * s, v[2] * s);
        }
        text += "20\n";
        for f in &faces {
            text += &format!("{} {} {}\n", f[0], f[1], f[2]);
        }
        let mesh = load_mesh(&text).unwrap();
        assert_eq!((mesh.n_vertices(), mesh.n_simplices()), (12, 20));
        for v in mesh.vertices() {
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        assert!(mesh.boundary_vertices().is_empty());
        // Every facet is oriented outward.
        for s in 0..mesh.n_simplices() {
            let t = mesh.simplex(s);
            let (a, b, c) = (mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2]));
            assert!(dot(&cross(&sub(&b, &a), &sub(&c, &a)), &a) > 0.0);
        }
    }

    #[test]
    fn icosphere_weights_equal_facet_area() {
        let mesh = Mesh::icosphere(2).unwrap();
        assert_eq!(mesh.n_vertices(), 162);
        let direct: f64 = (0..mesh.n_simplices())
            .map(|s| mesh.simplex_measure(s))
            .sum();
        let weights: f64 = mesh.vertex_weights().iter().sum();
        assert!((weights - direct).abs() < 1e-12);
        assert!(direct < 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn basis_at_nodes_centroids_and_midpoints() {
        let mesh = load_mesh(SQUARE).unwrap();
        let a = mesh.evaluate_basis(&[[1.0, 1.0, 0.0], [2.0 / 3.0, 1.0 / 3.0, 0.0]]);
        assert_eq!(a.matrix.row(0), (&[2usize][..], &[1.0][..]));
        let (cols, vals) = a.matrix.row(1);
        assert_eq!(cols, &[0, 1, 2]);
        for v in vals {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let line = load_mesh("interval\n3\n0\n0.5\n1\n2\n0 1\n1 2\n").unwrap();
        let b = line.evaluate_basis(&[[0.25, 0.0, 0.0]]);
        assert_eq!(b.matrix.row(0), (&[0usize, 1][..], &[0.5, 0.5][..]));
    }

    #[test]
    fn exterior_points_are_flagged() {
        let mesh = load_mesh(SQUARE).unwrap();
        let a = mesh.evaluate_basis(&[[0.5, 0.5, 0.0], [1.5, 0.5, 0.0]]);
        assert_eq!(a.exterior, vec![false, true]);
        assert_eq!(a.matrix.row(1).0.len(), 0);
        assert!(matches!(a.interior(), Err(Error::ExteriorPoint(1))));
    }

    #[test]
    fn grid_index_matches_brute_force() {
        let mesh = Mesh::rectangle(-1.0, 2.0, 0.0, 1.0, 9, 5).unwrap();
        let points: Vec<Point> = (0..200)
            .map(|k| {
                let x = -1.2 + 3.4 * ((k * 37) % 200) as f64 / 200.0;
                let y = -0.1 + 1.2 * ((k * 91) % 200) as f64 / 200.0;
                [x, y, 0.0]
            })
            .collect();
        assert_eq!(
            mesh.evaluate_basis(&points),
            mesh.evaluate_basis_indexed(&points)
        );
        let sphere = Mesh::icosphere(2).unwrap();
        let pts: Vec<Point> = (0..100)
            .map(|k| {
                let th = 0.3 + 2.5 * (k as f64 / 100.0);
                let ph = 6.0 * ((k * 17) % 100) as f64 / 100.0;
                [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
            })
            .collect();
        let brute = sphere.evaluate_basis(&pts);
        assert!(brute.exterior.iter().all(|e| !e));
        assert_eq!(brute, sphere.evaluate_basis_indexed(&pts));
    }

    #[test]
    fn save_then_load_is_identity() {
        for mesh in [
            Mesh::rectangle(0.0, 1.0, 0.0, 0.7, 3, 4).unwrap(),
            Mesh::interval(-1.0, 2.0, 7).unwrap(),
            Mesh::icosphere(1).unwrap(),
        ] {
            assert_eq!(load_mesh(&mesh.to_text()).unwrap(), mesh);
        }
    }
}
