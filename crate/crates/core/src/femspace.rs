//! Continuous piecewise-linear functions vanishing on the boundary.
//!
//! A [`FemFunction`] stores one coefficient per interior vertex of its
//! level's mesh; boundary values are zero by construction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;

/// Coefficients of a zero-trace P1 function on a given mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    pub level: usize,
    pub coeffs: Vec<f64>,
}

impl FemFunction {
    pub fn new(level: usize, coeffs: Vec<f64>) -> Self {
        Self { level, coeffs }
    }

    pub fn zeros(level: usize, len: usize) -> Self {
        Self::new(level, vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::new(self.level, self.coeffs.iter().map(|c| t * c).collect())
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        debug_assert_eq!(self.level, other.level);
        Self::new(
            self.level,
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }
}

/// Geometry of one triangle: area, gradients of the three barycentric
/// coordinates, and the dof index of each vertex (None on the boundary).
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
    pub dofs: [Option<usize>; 3],
}

/// The P1 space on one mesh, with precomputed element geometry and
/// quadrature points.
#[derive(Debug, Clone)]
pub struct P1Space<'m> {
    mesh: &'m Mesh,
    elements: Vec<ElementGeometry>,
    rule: QuadratureRule,
    qpoints: Vec<[f64; 2]>,
    fine_rule: QuadratureRule,
}

/// Edge subdivisions of [`P1Space::fine_rule`].
pub const FINE_RULE_SUBDIVISIONS: usize = 8;

impl<'m> P1Space<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        Self::with_rule(mesh, QuadratureRule::default())
    }

    pub fn with_rule(mesh: &'m Mesh, rule: QuadratureRule) -> Self {
        let mut elements = Vec::with_capacity(mesh.num_triangles());
        let mut qpoints = Vec::with_capacity(mesh.num_triangles() * rule.len());
        for (k, tri) in mesh.triangles().iter().enumerate() {
            let [a, b, c] = mesh.triangle_points(k);
            let area = mesh.triangle_area(k);
            let inv = 1.0 / (2.0 * area);
            // grad of barycentric l_i is the rotated opposite edge over 2A
            let grads = [
                [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ];
            let dofs = [
                mesh.dof_of_vertex(tri[0]),
                mesh.dof_of_vertex(tri[1]),
                mesh.dof_of_vertex(tri[2]),
            ];
            elements.push(ElementGeometry { area, grads, dofs });
            qpoints.extend(rule.map_points(&[a, b, c]));
        }
        let fine_rule = QuadratureRule::composite(&rule, FINE_RULE_SUBDIVISIONS);
        Self {
            mesh,
            elements,
            rule,
            qpoints,
            fine_rule,
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn level(&self) -> usize {
        self.mesh.level()
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    pub fn elements(&self) -> &[ElementGeometry] {
        &self.elements
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Composite version of [`Self::rule`], used for reaction integrands on
    /// elements where a state component reaches zero.
    pub fn fine_rule(&self) -> &QuadratureRule {
        &self.fine_rule
    }

    /// Physical quadrature points of element `k`.
    pub fn element_qpoints(&self, k: usize) -> &[[f64; 2]] {
        let n = self.rule.len();
        &self.qpoints[k * n..(k + 1) * n]
    }

    pub fn zero(&self) -> FemFunction {
        FemFunction::zeros(self.level(), self.num_dofs())
    }

    /// Nodal interpolant of `g` (boundary values are dropped).
    pub fn interpolate(&self, g: impl Fn([f64; 2]) -> f64) -> FemFunction {
        let coeffs = (0..self.num_dofs())
            .map(|d| g(self.mesh.vertices()[self.mesh.vertex_of_dof(d)]))
            .collect();
        FemFunction::new(self.level(), coeffs)
    }

    /// Hat function of dof `k`.
    pub fn basis_function(&self, k: usize) -> FemFunction {
        let mut f = self.zero();
        f.coeffs[k] = 1.0;
        f
    }

    pub fn check(&self, f: &FemFunction) -> Result<()> {
        if f.level != self.level() {
            return Err(Error::LevelMismatch {
                expected: self.level(),
                found: f.level,
            });
        }
        if f.coeffs.len() != self.num_dofs() {
            return Err(Error::InvalidArgument(format!(
                "function has {} coefficients but level {} has {} dofs",
                f.coeffs.len(),
                self.level(),
                self.num_dofs()
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn local_values(&self, coeffs: &[f64], k: usize) -> [f64; 3] {
        let dofs = &self.elements[k].dofs;
        [
            dofs[0].map_or(0.0, |d| coeffs[d]),
            dofs[1].map_or(0.0, |d| coeffs[d]),
            dofs[2].map_or(0.0, |d| coeffs[d]),
        ]
    }

    #[inline]
    pub(crate) fn grad_from_coeffs(&self, coeffs: &[f64], k: usize) -> [f64; 2] {
        let vals = self.local_values(coeffs, k);
        let g = &self.elements[k].grads;
        [
            vals[0] * g[0][0] + vals[1] * g[1][0] + vals[2] * g[2][0],
            vals[0] * g[0][1] + vals[1] * g[1][1] + vals[2] * g[2][1],
        ]
    }

    /// Exact (constant) gradient of `f` on triangle `element`.
    pub fn gradient_on_element(&self, f: &FemFunction, element: usize) -> Result<[f64; 2]> {
        self.check(f)?;
        if element >= self.elements.len() {
            return Err(Error::InvalidArgument(format!(
                "element {element} out of range ({} triangles)",
                self.elements.len()
            )));
        }
        Ok(self.grad_from_coeffs(&f.coeffs, element))
    }

    /// Value of `f` at barycentric point `bary` of triangle `element`.
    pub fn value_at(&self, f: &FemFunction, element: usize, bary: [f64; 3]) -> f64 {
        let v = self.local_values(&f.coeffs, element);
        v[0] * bary[0] + v[1] * bary[1] + v[2] * bary[2]
    }

    /// Value of `f` at an arbitrary point of the domain (linear search).
    pub fn evaluate(&self, f: &FemFunction, p: [f64; 2]) -> Option<f64> {
        self.mesh
            .locate(p)
            .map(|(k, bary)| self.value_at(f, k, bary))
    }

    /// Integral of `h(x, f(x))` by the space's quadrature rule.
    pub fn integrate_with(&self, f: &FemFunction, h: impl Fn([f64; 2], f64) -> f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.elements.len() {
            let vals = self.local_values(&f.coeffs, k);
            let scale = 2.0 * self.elements[k].area;
            for ((l, w), x) in self
                .rule
                .points()
                .iter()
                .zip(self.rule.weights())
                .zip(self.element_qpoints(k))
            {
                let fx = vals[0] * l[0] + vals[1] * l[1] + vals[2] * l[2];
                total += scale * w * h(*x, fx);
            }
        }
        total
    }

    /// `(∫ |f|^p)^(1/p)` by quadrature.
    pub fn norm_lp(&self, f: &FemFunction, p: f64) -> Result<f64> {
        check_exponent(p)?;
        self.check(f)?;
        Ok(self.integrate_with(f, |_, v| v.abs().powf(p)).powf(1.0 / p))
    }

    /// `||∇f||_p`, exact for P1 since gradients are elementwise constant.
    pub fn seminorm_w1p(&self, f: &FemFunction, p: f64) -> Result<f64> {
        check_exponent(p)?;
        self.check(f)?;
        Ok(self.grad_power_sum(&f.coeffs, p).powf(1.0 / p))
    }

    /// `Σ_T |T| |∇f|_T^p`, i.e. `||∇f||_p^p`.
    pub(crate) fn grad_power_sum(&self, coeffs: &[f64], p: f64) -> f64 {
        (0..self.elements.len())
            .map(|k| {
                let g = self.grad_from_coeffs(coeffs, k);
                let m = g[0].hypot(g[1]);
                if m == 0.0 {
                    0.0
                } else {
                    self.elements[k].area * m.powf(p)
                }
            })
            .sum()
    }

    /// `||∇φ_k||_p` for every hat function.
    pub fn hat_seminorms(&self, p: f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_dofs()];
        for e in &self.elements {
            for (i, d) in e.dofs.iter().enumerate() {
                if let Some(d) = *d {
                    acc[d] += e.area * e.grads[i][0].hypot(e.grads[i][1]).powf(p);
                }
            }
        }
        acc.into_iter().map(|s| s.powf(1.0 / p)).collect()
    }

    /// Per-vertex CSV `vertex_id,x,y,u_value,v_value`; boundary vertices carry 0.
    pub fn field_csv(&self, u: &FemFunction, v: &FemFunction) -> Result<String> {
        self.check(u)?;
        self.check(v)?;
        let mut out = String::from("vertex_id,x,y,u_value,v_value\n");
        for (i, p) in self.mesh.vertices().iter().enumerate() {
            let (uv, vv) = match self.mesh.dof_of_vertex(i) {
                Some(d) => (u.coeffs[d], v.coeffs[d]),
                None => (0.0, 0.0),
            };
            let _ = writeln!(out, "{i},{},{},{uv},{vv}", p[0], p[1]);
        }
        Ok(out)
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Exponent(format!("exponent {p} must exceed 1")))
    }
}
