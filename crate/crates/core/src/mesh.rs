//! Planar simplicial meshes, uniform red refinement and the nested
//! piecewise-linear hierarchy built from it.
//!
//! Vertices are never renumbered by refinement: level `l + 1` keeps the
//! vertices of level `l` at their indices and appends the edge midpoints
//! sorted lexicographically by coordinates. Degrees of freedom are the
//! interior vertices, numbered in vertex order.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Signed area of the triangle `(a, b, c)`.
pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// A conforming triangulation of a polygonal domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: usize,
    domain_measure: f64,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh and checks its invariants: counter-clockwise triangles,
    /// every edge shared by at most two triangles, and boundary flags that
    /// agree with the edges owned by a single triangle.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        level: usize,
        domain_measure: f64,
    ) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} boundary flags for {} vertices",
                boundary.len(),
                vertices.len()
            )));
        }
        let mut dof_of_vertex = vec![None; vertices.len()];
        let mut vertex_of_dof = Vec::new();
        for (v, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let mesh = Self {
            vertices,
            triangles,
            boundary,
            level,
            domain_measure,
            dof_of_vertex,
            vertex_of_dof,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut area_sum = 0.0;
        for (k, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} references a missing vertex"
                )));
            }
            let area = self.triangle_area(k);
            if area <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} has non-positive signed area {area}"
                )));
            }
            area_sum += area;
        }
        for (edge, count) in self.edge_counts() {
            match count {
                1 => {
                    if !self.boundary[edge.0] || !self.boundary[edge.1] {
                        return Err(Error::InvalidArgument(format!(
                            "boundary edge {edge:?} has an endpoint not flagged as boundary"
                        )));
                    }
                }
                2 => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "edge {edge:?} belongs to {count} triangles"
                    )))
                }
            }
        }
        let rel = (area_sum - self.domain_measure).abs() / self.domain_measure.abs().max(1e-300);
        if rel > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "domain measure {} differs from the sum of triangle areas {area_sum}",
                self.domain_measure
            )));
        }
        Ok(())
    }

    /// Edge `(min, max)` -> number of incident triangles, in first-seen order.
    pub fn edge_counts(&self) -> Vec<((usize, usize), usize)> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<((usize, usize), usize)> = Vec::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (a.min(b), a.max(b));
                match index.get(&key) {
                    Some(&i) => edges[i].1 += 1,
                    None => {
                        index.insert(key, edges.len());
                        edges.push((key, 1));
                    }
                }
            }
        }
        edges
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of interior vertices, i.e. the dimension of the zero-trace P1 space.
    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn triangle_points(&self, k: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[k];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangle_points(k);
        signed_area(a, b, c)
    }

    /// Finds a triangle containing `p` and the barycentric coordinates of `p`
    /// in it. Linear scan; intended for verification, not inner loops.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-12;
        for k in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(k);
            let area = signed_area(a, b, c);
            let l0 = signed_area(p, b, c) / area;
            let l1 = signed_area(a, p, c) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -SLACK && l1 >= -SLACK && l2 >= -SLACK {
                return Some((k, [l0, l1, l2]));
            }
        }
        None
    }

    /// Plain-text export: a `vertices <n> triangles <m>` header, one
    /// `x y boundary_flag` line per vertex, then one line of three 0-based
    /// vertex indices per triangle.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vertices {} triangles {}",
            self.vertices.len(),
            self.triangles.len()
        );
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], u8::from(b));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Structured crisscross triangulation of the unit square: every cell is cut
/// by both diagonals, so each cell contributes four triangles and one
/// interior centre vertex.
pub fn generate_unit_square(n_cells_per_side: usize) -> Result<Mesh> {
    let n = n_cells_per_side;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "n_cells_per_side must be at least 1".into(),
        ));
    }
    // Integer coordinates on the half-cell lattice keep ordering exact.
    let mut keys: Vec<(usize, usize)> = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for i in 0..=n {
        for j in 0..=n {
            keys.push((2 * i, 2 * j));
        }
    }
    for i in 0..n {
        for j in 0..n {
            keys.push((2 * i + 1, 2 * j + 1));
        }
    }
    keys.sort_unstable();
    let index: HashMap<(usize, usize), usize> =
        keys.iter().enumerate().map(|(k, &key)| (key, k)).collect();
    let scale = 1.0 / (2 * n) as f64;
    let vertices: Vec<[f64; 2]> = keys
        .iter()
        .map(|&(i, j)| [i as f64 * scale, j as f64 * scale])
        .collect();
    let boundary: Vec<bool> = keys
        .iter()
        .map(|&(i, j)| i == 0 || j == 0 || i == 2 * n || j == 2 * n)
        .collect();

    let mut triangles = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = index[&(2 * i, 2 * j)];
            let b = index[&(2 * i + 2, 2 * j)];
            let c = index[&(2 * i + 2, 2 * j + 2)];
            let d = index[&(2 * i, 2 * j + 2)];
            let m = index[&(2 * i + 1, 2 * j + 1)];
            triangles.extend_from_slice(&[[a, b, m], [b, c, m], [c, d, m], [d, a, m]]);
        }
    }
    Mesh::new(vertices, triangles, boundary, 0, 1.0)
}

/// How a fine-mesh vertex arises from the coarse mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    Coarse(usize),
    Midpoint(usize, usize),
}

/// Red refinement: every triangle is split into four congruent children
/// through its edge midpoints. Returns the fine mesh and the origin of each
/// fine vertex.
pub fn refine_with_origins(mesh: &Mesh) -> Result<(Mesh, Vec<VertexOrigin>)> {
    let edges = mesh.edge_counts();
    let mut midpoints: Vec<((usize, usize), [f64; 2], bool)> = edges
        .iter()
        .map(|&((a, b), count)| {
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            (
                (a, b),
                [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                count == 1,
            )
        })
        .collect();
    midpoints.sort_by(|x, y| {
        x.1[0]
            .partial_cmp(&y.1[0])
            .unwrap()
            .then(x.1[1].partial_cmp(&y.1[1]).unwrap())
    });

    let n_old = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut origins: Vec<VertexOrigin> = (0..n_old).map(VertexOrigin::Coarse).collect();
    let mut mid_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(midpoints.len());
    for (k, (edge, p, on_boundary)) in midpoints.iter().enumerate() {
        vertices.push(*p);
        boundary.push(*on_boundary);
        origins.push(VertexOrigin::Midpoint(edge.0, edge.1));
        mid_index.insert(*edge, n_old + k);
    }
    let mid = |a: usize, b: usize| mid_index[&(a.min(b), a.max(b))];

    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    let fine = Mesh::new(
        vertices,
        triangles,
        boundary,
        mesh.level + 1,
        mesh.domain_measure,
    )?;
    Ok((fine, origins))
}

/// Red refinement of `mesh`; see [`refine_with_origins`].
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    refine_with_origins(mesh).map(|(fine, _)| fine)
}

/// Sparse map from coarse coefficients (interior vertices) to fine
/// coefficients. Each fine row has one or two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    rows: Vec<Vec<(usize, f64)>>,
    coarse_dofs: usize,
}

impl Prolongation {
    fn from_origins(coarse: &Mesh, fine: &Mesh, origins: &[VertexOrigin]) -> Self {
        let rows = (0..fine.num_dofs())
            .map(|fd| match origins[fine.vertex_of_dof(fd)] {
                VertexOrigin::Coarse(v) => coarse
                    .dof_of_vertex(v)
                    .map(|cd| vec![(cd, 1.0)])
                    .unwrap_or_default(),
                VertexOrigin::Midpoint(a, b) => [a, b]
                    .iter()
                    .filter_map(|&v| coarse.dof_of_vertex(v).map(|cd| (cd, 0.5)))
                    .collect(),
            })
            .collect();
        Self {
            rows,
            coarse_dofs: coarse.num_dofs(),
        }
    }

    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coarse.len(), self.coarse_dofs);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * coarse[c]).sum())
            .collect()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }
}

/// Nested meshes `0..=finest` produced by repeated red refinement, with the
/// prolongation between consecutive levels.
#[derive(Debug, Clone)]
pub struct RefinementHierarchy {
    meshes: Vec<Mesh>,
    prolongations: Vec<Prolongation>,
}

impl RefinementHierarchy {
    /// Refines `base` `refinements` times. The base mesh becomes level 0.
    pub fn new(base: Mesh, refinements: usize) -> Result<Self> {
        let mut base = base;
        base.level = 0;
        let mut meshes = vec![base];
        let mut prolongations = Vec::with_capacity(refinements);
        for _ in 0..refinements {
            let coarse = meshes.last().unwrap();
            let (fine, origins) = refine_with_origins(coarse)?;
            prolongations.push(Prolongation::from_origins(coarse, &fine, &origins));
            meshes.push(fine);
        }
        Ok(Self {
            meshes,
            prolongations,
        })
    }

    /// Unit-square hierarchy with `finest + 1` levels.
    pub fn unit_square(n_cells_per_side: usize, finest: usize) -> Result<Self> {
        Self::new(generate_unit_square(n_cells_per_side)?, finest)
    }

    pub fn num_levels(&self) -> usize {
        self.meshes.len()
    }

    pub fn finest_level(&self) -> usize {
        self.meshes.len() - 1
    }

    pub fn mesh(&self, level: usize) -> Result<&Mesh> {
        self.meshes.get(level).ok_or(Error::LevelOutOfRange {
            level,
            available: self.meshes.len(),
        })
    }

    pub fn meshes(&self) -> &[Mesh] {
        &self.meshes
    }

    /// Map from level `level` to level `level + 1`.
    pub fn prolongation(&self, level: usize) -> Result<&Prolongation> {
        self.prolongations.get(level).ok_or(Error::LevelOutOfRange {
            level: level + 1,
            available: self.meshes.len(),
        })
    }

    /// Carries coefficients from `from_level` to the finer `to_level`.
    pub fn prolongate(&self, coeffs: &[f64], from_level: usize, to_level: usize) -> Result<Vec<f64>> {
        let available = self.meshes.len();
        if from_level >= available || to_level >= available {
            return Err(Error::LevelOutOfRange {
                level: from_level.max(to_level),
                available,
            });
        }
        if from_level > to_level {
            return Err(Error::InvalidArgument(format!(
                "cannot prolongate from level {from_level} down to level {to_level}"
            )));
        }
        let expected = self.meshes[from_level].num_dofs();
        if coeffs.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector has length {} but level {from_level} has {expected} dofs",
                coeffs.len()
            )));
        }
        let mut out = coeffs.to_vec();
        for level in from_level..to_level {
            out = self.prolongations[level].apply(&out);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_crisscross() {
        let m = generate_unit_square(1).unwrap();
        assert_eq!(m.num_triangles(), 4);
        assert_eq!(m.num_vertices(), 5);
        assert_eq!(m.num_dofs(), 1);
        assert_eq!(m.vertices()[m.vertex_of_dof(0)], [0.5, 0.5]);
        assert_eq!(m.domain_measure(), 1.0);
    }

    #[test]
    fn two_by_two_counts() {
        let m = generate_unit_square(2).unwrap();
        assert_eq!(m.num_triangles(), 16);
        assert_eq!(m.num_vertices(), 13);
        // four cell centres plus the middle grid vertex
        assert_eq!(m.num_dofs(), 5);
    }

    #[test]
    fn rejects_zero_cells() {
        assert!(generate_unit_square(0).is_err());
    }

    #[test]
    fn areas_partition_the_square() {
        for n in 1..7 {
            let m = generate_unit_square(n).unwrap();
            let total: f64 = (0..m.num_triangles()).map(|k| m.triangle_area(k)).sum();
            assert!((total - 1.0).abs() < 1e-12, "n = {n}: {total}");
        }
    }

    #[test]
    fn vertices_sorted_lexicographically() {
        let m = generate_unit_square(3).unwrap();
        for w in m.vertices().windows(2) {
            assert!(w[0][0] < w[1][0] || (w[0][0] == w[1][0] && w[0][1] < w[1][1]));
        }
    }

    #[test]
    fn refinement_keeps_old_vertices_and_adds_one_per_edge() {
        let coarse = generate_unit_square(1).unwrap();
        let edges = coarse.edge_counts().len();
        let fine = refine_uniform(&coarse).unwrap();
        assert_eq!(fine.num_triangles(), 16);
        assert_eq!(fine.num_vertices(), coarse.num_vertices() + edges);
        assert_eq!(&fine.vertices()[..5], coarse.vertices());
        assert_eq!(fine.level(), 1);
        let total: f64 = (0..fine.num_triangles()).map(|k| fine.triangle_area(k)).sum();
        assert!((total - fine.domain_measure()).abs() < 1e-12);
    }

    #[test]
    fn midpoint_boundary_flag_follows_parent_edge() {
        let coarse = generate_unit_square(2).unwrap();
        let (fine, origins) = refine_with_origins(&coarse).unwrap();
        let counts: HashMap<(usize, usize), usize> = coarse.edge_counts().into_iter().collect();
        for (v, origin) in origins.iter().enumerate() {
            if let VertexOrigin::Midpoint(a, b) = *origin {
                assert_eq!(fine.boundary_flags()[v], counts[&(a, b)] == 1);
            }
        }
    }

    #[test]
    fn mesh_invariants_hold_across_levels() {
        let h = RefinementHierarchy::unit_square(1, 4).unwrap();
        for m in h.meshes() {
            for ((_, _), count) in m.edge_counts() {
                assert!(count == 1 || count == 2);
            }
            for k in 0..m.num_triangles() {
                assert!(m.triangle_area(k) > 0.0);
            }
        }
    }

    #[test]
    fn prolongation_identity_and_range() {
        let h = RefinementHierarchy::unit_square(1, 2).unwrap();
        let c = vec![0.7];
        assert_eq!(h.prolongate(&c, 0, 0).unwrap(), c);
        assert!(h.prolongate(&c, 0, 3).is_err());
        assert!(h.prolongate(&[0.0; 13], 1, 0).is_err());
    }

    #[test]
    fn prolongated_midpoints_average_endpoints() {
        let h = RefinementHierarchy::unit_square(1, 1).unwrap();
        let fine = h.prolongate(&[1.0], 0, 1).unwrap();
        let mesh = h.mesh(1).unwrap();
        for (d, &val) in fine.iter().enumerate() {
            let p = mesh.vertices()[mesh.vertex_of_dof(d)];
            // coarse hat of the centre vertex: 1 at the centre, 0 on the boundary
            let expected = if p == [0.5, 0.5] { 1.0 } else { 0.5 };
            assert_eq!(val, expected, "vertex {p:?}");
        }
    }

    #[test]
    fn text_export_layout() {
        let m = generate_unit_square(1).unwrap();
        let text = m.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "vertices 5 triangles 4");
        assert_eq!(lines.len(), 1 + 5 + 4);
        assert_eq!(lines[1], "0 0 1");
        assert!(lines.contains(&"0.5 0.5 0"));
        for l in &lines[6..] {
            let idx: Vec<usize> = l.split(' ').map(|s| s.parse().unwrap()).collect();
            assert_eq!(idx.len(), 3);
            assert!(idx.iter().all(|&i| i < 5));
        }
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = generate_unit_square(2).unwrap();
        let (k, bary) = m.locate([0.3, 0.1]).unwrap();
        let pts = m.triangle_points(k);
        let x = bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0];
        let y = bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1];
        assert!((x - 0.3).abs() < 1e-14 && (y - 0.1).abs() < 1e-14);
        assert!(m.locate([1.5, 0.5]).is_none());
    }

    #[test]
    fn new_rejects_clockwise_triangles() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let r = Mesh::new(v, vec![[0, 2, 1]], vec![true; 3], 0, 0.5);
        assert!(r.is_err());
    }
}
