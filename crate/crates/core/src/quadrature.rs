//! Symmetric quadrature rules on the reference triangle.

/// Points in barycentric coordinates with weights for the reference
/// triangle `{(0,0), (1,0), (0,1)}`; weights sum to its area, 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    /// One-point centroid rule, exact for degree 1.
    pub fn centroid() -> Self {
        Self {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            degree: 1,
        }
    }

    /// Three interior points, exact for degree 2.
    pub fn degree2() -> Self {
        let a = 1.0 / 6.0;
        let b = 2.0 / 3.0;
        Self {
            points: vec![[b, a, a], [a, b, a], [a, a, b]],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        }
    }

    /// Six-point Strang-Fix/Dunavant rule, exact for degree 4.
    pub fn degree4() -> Self {
        let a1 = 0.445_948_490_915_964_886_318_329_253_883;
        let w1 = 0.223_381_589_678_011_465_944_640_202_150;
        let a2 = 0.091_576_213_509_770_743_459_571_463_402;
        let w2 = 0.109_951_743_655_321_867_388_693_130_517;
        let b1 = 1.0 - 2.0 * a1;
        let b2 = 1.0 - 2.0 * a2;
        Self {
            points: vec![
                [b1, a1, a1],
                [a1, b1, a1],
                [a1, a1, b1],
                [b2, a2, a2],
                [a2, b2, a2],
                [a2, a2, b2],
            ],
            weights: vec![0.5 * w1, 0.5 * w1, 0.5 * w1, 0.5 * w2, 0.5 * w2, 0.5 * w2],
            degree: 4,
        }
    }

    /// `base` applied on each of the `m²` congruent sub-triangles
    /// (`m` subdivisions per edge). Same polynomial degree, but it resolves
    /// integrands that are only piecewise smooth or singular at an edge.
    pub fn composite(base: &Self, m: usize) -> Self {
        assert!(m >= 1, "composite rule needs at least one subdivision");
        let inv = 1.0 / m as f64;
        let mut subs = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m - i {
                let b = |a: usize, c: usize| [a as f64 * inv, c as f64 * inv];
                subs.push([b(i, j), b(i + 1, j), b(i, j + 1)]);
                if i + j + 1 < m {
                    subs.push([b(i + 1, j), b(i + 1, j + 1), b(i, j + 1)]);
                }
            }
        }
        let mut points = Vec::with_capacity(subs.len() * base.len());
        let mut weights = Vec::with_capacity(subs.len() * base.len());
        for s in &subs {
            for (l, w) in base.points.iter().zip(&base.weights) {
                let l1 = l[0] * s[0][0] + l[1] * s[1][0] + l[2] * s[2][0];
                let l2 = l[0] * s[0][1] + l[1] * s[1][1] + l[2] * s[2][1];
                points.push([1.0 - l1 - l2, l1, l2]);
                weights.push(w * inv * inv);
            }
        }
        Self {
            points,
            weights,
            degree: base.degree,
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical coordinates of the rule's points on triangle `tri`.
    pub fn map_points(&self, tri: &[[f64; 2]; 3]) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|l| {
                [
                    l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                    l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
                ]
            })
            .collect()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::degree4()
    }
}
