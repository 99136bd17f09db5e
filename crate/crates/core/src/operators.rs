//! Assembly of the competing (p,q)-operator, the Nemytskii vectors, the
//! full residual and its Jacobian on a P1 space.
//!
//! Vectors are raw dualities against hat functions: entry `k` of
//! [`apply_competing`] is `∫ (|∇f|^(p-2) − μ|∇f|^(q-2)) ∇f·∇φ_k`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::femspace::{check_exponent, FemFunction, P1Space};
use crate::linalg::SparseMatrix;
use crate::quadrature::QuadratureRule;
use crate::reactions::{critical_exponent, partials_or_fd, Reaction, ReactionArgs, ReactionHandle};

/// Exponents, coefficients and reactions of the system.
#[derive(Clone)]
pub struct ProblemSpec {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub mu: [f64; 2],
    pub reactions: [ReactionHandle; 2],
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("p", &self.p)
            .field("q", &self.q)
            .field("mu", &self.mu)
            .field("f1", &self.reactions[0].describe())
            .field("f2", &self.reactions[1].describe())
            .finish()
    }
}

/// Checks `1 < q_i < p_i < N = 2`.
pub fn validate_exponents(p: [f64; 2], q: [f64; 2]) -> Result<()> {
    for i in 0..2 {
        let n = i + 1;
        if !(p[i].is_finite() && q[i].is_finite()) {
            return Err(Error::Exponent(format!("p{n} and q{n} must be finite")));
        }
        if q[i] <= 1.0 {
            return Err(Error::Exponent(format!(
                "q{n} = {} <= 1 violates 1<q_i<p_i<N=2",
                q[i]
            )));
        }
        if q[i] >= p[i] {
            return Err(Error::Exponent(format!(
                "q{n} = {} >= p{n} = {} violates 1<q_i<p_i<N=2",
                q[i], p[i]
            )));
        }
        if p[i] >= 2.0 {
            return Err(Error::Exponent(format!(
                "p{n} = {} >= 2 violates p_i < N = 2 (1<q_i<p_i<N=2)",
                p[i]
            )));
        }
    }
    Ok(())
}

impl ProblemSpec {
    pub fn new(p: [f64; 2], q: [f64; 2], mu: [f64; 2], reactions: [ReactionHandle; 2]) -> Result<Self> {
        validate_exponents(p, q)?;
        if !mu.iter().all(|m| m.is_finite()) {
            return Err(Error::InvalidArgument("mu must be finite".into()));
        }
        Ok(Self {
            p,
            q,
            mu,
            reactions,
        })
    }

    /// Critical Sobolev exponents `p_i* = 2 p_i/(2 − p_i)`.
    pub fn p_star(&self) -> [f64; 2] {
        [critical_exponent(self.p[0]), critical_exponent(self.p[1])]
    }
}

/// The pair `(u_h, v_h)` on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub u: FemFunction,
    pub v: FemFunction,
}

impl PairState {
    pub fn new(u: FemFunction, v: FemFunction) -> Result<Self> {
        if u.level != v.level {
            return Err(Error::LevelMismatch {
                expected: u.level,
                found: v.level,
            });
        }
        if u.len() != v.len() {
            return Err(Error::InvalidArgument(format!(
                "u has {} coefficients, v has {}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(space: &P1Space) -> Self {
        Self {
            u: space.zero(),
            v: space.zero(),
        }
    }

    pub fn level(&self) -> usize {
        self.u.level
    }

    pub fn dofs(&self) -> usize {
        self.u.len()
    }

    /// `[u; v]`
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.u.coeffs.clone();
        y.extend_from_slice(&self.v.coeffs);
        y
    }

    pub fn from_vec(level: usize, y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self {
            u: FemFunction::new(level, y[..n].to_vec()),
            v: FemFunction::new(level, y[n..].to_vec()),
        }
    }

    /// `‖u‖_{1,p1} + ‖v‖_{1,p2}`
    pub fn pair_norm(&self, space: &P1Space, p: [f64; 2]) -> Result<f64> {
        Ok(space.seminorm_w1p(&self.u, p[0])? + space.seminorm_w1p(&self.v, p[1])?)
    }
}

/// Residual vectors of the two equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub r_u: Vec<f64>,
    pub r_v: Vec<f64>,
}

impl ResidualPair {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.r_u.clone();
        y.extend_from_slice(&self.r_v);
        y
    }

    pub fn from_vec(y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self {
            r_u: y[..n].to_vec(),
            r_v: y[n..].to_vec(),
        }
    }

    /// `⟨r, (φ, ψ)⟩ = Σ r_u φ + Σ r_v ψ`
    pub fn pair_with(&self, phi: &[f64], psi: &[f64]) -> f64 {
        crate::linalg::dot(&self.r_u, phi) + crate::linalg::dot(&self.r_v, psi)
    }
}

/// Scalar flux coefficient `a(|g|²)` with `flux = a g`.
#[inline]
pub(crate) fn flux_coefficient(gsq: f64, p: f64, q: f64, mu: f64, eps: f64) -> f64 {
    let s = eps * eps + gsq;
    if s == 0.0 {
        return 0.0;
    }
    s.powf(0.5 * (p - 2.0)) - mu * s.powf(0.5 * (q - 2.0))
}

/// `a'(s)` with respect to `s = |g|²`.
#[inline]
fn flux_coefficient_derivative(s: f64, p: f64, q: f64, mu: f64) -> f64 {
    0.5 * (p - 2.0) * s.powf(0.5 * (p - 4.0)) - mu * 0.5 * (q - 2.0) * s.powf(0.5 * (q - 4.0))
}

fn check_len(space: &P1Space, coeffs: &[f64]) -> Result<()> {
    if coeffs.len() != space.num_dofs() {
        return Err(Error::InvalidArgument(format!(
            "vector has {} entries but level {} has {} dofs",
            coeffs.len(),
            space.level(),
            space.num_dofs()
        )));
    }
    Ok(())
}

/// Regularized operator vector with modulus `(ε² + |∇f|²)^(1/2)`;
/// `eps = 0` gives the exact operator.
pub fn apply_competing_eps(
    space: &P1Space,
    coeffs: &[f64],
    p: f64,
    q: f64,
    mu: f64,
    eps: f64,
) -> Vec<f64> {
    let local: Vec<[f64; 3]> = (0..space.elements().len())
        .into_par_iter()
        .map(|k| {
            let e = &space.elements()[k];
            let g = space.grad_from_coeffs(coeffs, k);
            let a = flux_coefficient(g[0] * g[0] + g[1] * g[1], p, q, mu, eps);
            let fx = e.area * a * g[0];
            let fy = e.area * a * g[1];
            [
                fx * e.grads[0][0] + fy * e.grads[0][1],
                fx * e.grads[1][0] + fy * e.grads[1][1],
                fx * e.grads[2][0] + fy * e.grads[2][1],
            ]
        })
        .collect();
    let mut out = vec![0.0; space.num_dofs()];
    for (e, vals) in space.elements().iter().zip(&local) {
        for i in 0..3 {
            if let Some(d) = e.dofs[i] {
                out[d] += vals[i];
            }
        }
    }
    out
}

/// `A(f) = −Δ_p f + μ Δ_q f` tested against every hat function.
pub fn apply_competing(space: &P1Space, f: &FemFunction, p: f64, q: f64, mu: f64) -> Result<Vec<f64>> {
    space.check(f)?;
    check_exponent(p)?;
    check_exponent(q)?;
    Ok(apply_competing_eps(space, &f.coeffs, p, q, mu, 0.0))
}

/// `⟨residual, g⟩ = Σ_k residual_k g_k`.
pub fn pairing_with_function(space: &P1Space, residual: &[f64], g: &FemFunction) -> Result<f64> {
    space.check(g)?;
    check_len(space, residual)?;
    Ok(crate::linalg::dot(residual, &g.coeffs))
}

/// `E(t) = t^p ‖∇f0‖_p^p − μ t^q ‖∇f0‖_q^q` on the given grid.
///
/// Both terms use gradient norms, as `⟨A(t f0), t f0⟩` does. A variant with
/// the plain `‖f0‖_q^q` in the second term is sometimes quoted for this
/// energy; it has the same sign pattern but a different root.
pub fn probe_nonmonotonicity(
    space: &P1Space,
    f0: &FemFunction,
    p: f64,
    q: f64,
    mu: f64,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    space.check(f0)?;
    check_exponent(p)?;
    check_exponent(q)?;
    if f0.is_zero() {
        return Err(Error::InvalidArgument("probe direction f0 must be nonzero".into()));
    }
    if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "t grid must be positive and sorted ascending".into(),
        ));
    }
    let np = space.grad_power_sum(&f0.coeffs, p);
    let nq = space.grad_power_sum(&f0.coeffs, q);
    Ok(t_grid
        .iter()
        .map(|&t| (t, t.powf(p) * np - mu * t.powf(q) * nq))
        .collect())
}

/// Positive root `t* = (μ ‖∇f0‖_q^q / ‖∇f0‖_p^p)^(1/(p−q))` of the probe energy.
pub fn probe_root(space: &P1Space, f0: &FemFunction, p: f64, q: f64, mu: f64) -> Option<f64> {
    if mu <= 0.0 || f0.is_zero() {
        return None;
    }
    let np = space.grad_power_sum(&f0.coeffs, p);
    let nq = space.grad_power_sum(&f0.coeffs, q);
    Some((mu * nq / np).powf(1.0 / (p - q)))
}

/// Whether the linear function with vertex values `vals` comes within its
/// own spread of zero on the element (including sign changes).
fn near_zero(vals: [f64; 3]) -> bool {
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap = if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
    gap <= hi - lo
}

/// Quadrature rule for the reaction on element `k` with the values and
/// gradients of `u`, `v` at its points. Reactions are typically only
/// Hölder at `s = 0` or `t = 0` (think `|s|^(α−2) s`), and Dirichlet states
/// vanish on every boundary edge, so elements where either component
/// comes close to zero get the composite rule.
fn element_args<'a>(space: &'a P1Space, u: &[f64], v: &[f64], k: usize) -> (&'a QuadratureRule, Vec<ReactionArgs>) {
    let uv = space.local_values(u, k);
    let vv = space.local_values(v, k);
    let xi = space.grad_from_coeffs(u, k);
    let nu = space.grad_from_coeffs(v, k);
    let args = |rule: &QuadratureRule, pts: &[[f64; 2]]| -> Vec<ReactionArgs> {
        rule.points()
            .iter()
            .zip(pts)
            .map(|(l, x)| ReactionArgs {
                x: *x,
                s: uv[0] * l[0] + uv[1] * l[1] + uv[2] * l[2],
                t: vv[0] * l[0] + vv[1] * l[1] + vv[2] * l[2],
                xi,
                nu,
            })
            .collect()
    };
    if near_zero(uv) || near_zero(vv) {
        let rule = space.fine_rule();
        let pts = rule.map_points(&space.mesh().triangle_points(k));
        (rule, args(rule, &pts))
    } else {
        (space.rule(), args(space.rule(), space.element_qpoints(k)))
    }
}

fn nemytskii_raw(space: &P1Space, reaction: &dyn Reaction, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let local: Vec<Result<[f64; 3]>> = (0..space.elements().len())
        .into_par_iter()
        .map(|k| {
            let scale = 2.0 * space.elements()[k].area;
            let mut acc = [0.0; 3];
            let (rule, args) = element_args(space, u, v, k);
            for (j, (a, (l, w))) in args
                .iter()
                .zip(rule.points().iter().zip(rule.weights()))
                .enumerate()
            {
                let val = reaction.eval(a);
                if !val.is_finite() {
                    return Err(Error::NonFiniteReaction {
                        value: val,
                        x: a.x[0],
                        y: a.x[1],
                        element: k,
                        point: j,
                    });
                }
                for i in 0..3 {
                    acc[i] += scale * w * val * l[i];
                }
            }
            Ok(acc)
        })
        .collect();
    let mut out = vec![0.0; space.num_dofs()];
    for (e, vals) in space.elements().iter().zip(local) {
        let vals = vals?;
        for i in 0..3 {
            if let Some(d) = e.dofs[i] {
                out[d] += vals[i];
            }
        }
    }
    Ok(out)
}

/// Entry `k` is `∫ f(x, u, v, ∇u, ∇v) φ_k` by quadrature.
pub fn assemble_nemytskii(space: &P1Space, reaction: &dyn Reaction, state: &PairState) -> Result<Vec<f64>> {
    space.check(&state.u)?;
    space.check(&state.v)?;
    nemytskii_raw(space, reaction, &state.u.coeffs, &state.v.coeffs)
}

/// Concatenated residual `[r_u; r_v]` with regularization `eps`.
pub fn residual_vec(space: &P1Space, spec: &ProblemSpec, y: &[f64], eps: f64) -> Result<Vec<f64>> {
    let n = space.num_dofs();
    if y.len() != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "state vector has {} entries, expected {}",
            y.len(),
            2 * n
        )));
    }
    let (u, v) = y.split_at(n);
    let mut r = apply_competing_eps(space, u, spec.p[0], spec.q[0], spec.mu[0], eps);
    r.extend(apply_competing_eps(space, v, spec.p[1], spec.q[1], spec.mu[1], eps));
    let n1 = nemytskii_raw(space, spec.reactions[0].as_ref(), u, v)?;
    let n2 = nemytskii_raw(space, spec.reactions[1].as_ref(), u, v)?;
    for k in 0..n {
        r[k] -= n1[k];
        r[n + k] -= n2[k];
    }
    Ok(r)
}

/// `𝒜(u, v) = A(u, v) − (N_f1(u, v), N_f2(u, v))` tested against hat functions.
pub fn residual_a(space: &P1Space, spec: &ProblemSpec, state: &PairState) -> Result<ResidualPair> {
    space.check(&state.u)?;
    space.check(&state.v)?;
    Ok(ResidualPair::from_vec(&residual_vec(space, spec, &state.to_vec(), 0.0)?))
}

/// Jacobian of [`residual_vec`] at `y` with regularization `eps`, as a
/// `2n × 2n` sparse matrix ordered `[u; v]`.
pub fn jacobian_vec(space: &P1Space, spec: &ProblemSpec, y: &[f64], eps: f64) -> Result<SparseMatrix> {
    let n = space.num_dofs();
    if y.len() != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "state vector has {} entries, expected {}",
            y.len(),
            2 * n
        )));
    }
    let (u, v) = y.split_at(n);
    let blocks: Vec<Result<Vec<(usize, usize, f64)>>> = (0..space.elements().len())
        .into_par_iter()
        .map(|k| {
            let e = &space.elements()[k];
            let mut out = Vec::with_capacity(4 * 9);
            // flux part, one block per component
            for (comp, coeffs) in [u, v].into_iter().enumerate() {
                let g = space.grad_from_coeffs(coeffs, k);
                let gsq = g[0] * g[0] + g[1] * g[1];
                let mut s = eps * eps + gsq;
                if s == 0.0 {
                    s = 1e-24;
                }
                let (p, q, mu) = (spec.p[comp], spec.q[comp], spec.mu[comp]);
                let a = s.powf(0.5 * (p - 2.0)) - mu * s.powf(0.5 * (q - 2.0));
                let b = 2.0 * flux_coefficient_derivative(s, p, q, mu);
                let off = comp * n;
                for i in 0..3 {
                    let Some(di) = e.dofs[i] else { continue };
                    let gi = e.grads[i];
                    let gi_g = gi[0] * g[0] + gi[1] * g[1];
                    for j in 0..3 {
                        let Some(dj) = e.dofs[j] else { continue };
                        let gj = e.grads[j];
                        let val = e.area
                            * (a * (gi[0] * gj[0] + gi[1] * gj[1])
                                + b * gi_g * (gj[0] * g[0] + gj[1] * g[1]));
                        out.push((off + di, off + dj, val));
                    }
                }
            }
            // reaction part
            let scale = 2.0 * e.area;
            let (rule, args) = element_args(space, u, v, k);
            for (row, reaction) in spec.reactions.iter().enumerate() {
                let mut m_u = [[0.0; 3]; 3];
                let mut m_v = [[0.0; 3]; 3];
                for (a, (l, w)) in args
                    .iter()
                    .zip(rule.points().iter().zip(rule.weights()))
                {
                    let d = partials_or_fd(reaction.as_ref(), a)?;
                    if !d.is_finite() {
                        return Err(Error::NonFiniteProbe { argument: "partials" });
                    }
                    for j in 0..3 {
                        let gj = e.grads[j];
                        let du = d.ds * l[j] + d.dxi[0] * gj[0] + d.dxi[1] * gj[1];
                        let dv = d.dt * l[j] + d.dnu[0] * gj[0] + d.dnu[1] * gj[1];
                        for i in 0..3 {
                            m_u[i][j] += scale * w * du * l[i];
                            m_v[i][j] += scale * w * dv * l[i];
                        }
                    }
                }
                let off = row * n;
                for i in 0..3 {
                    let Some(di) = e.dofs[i] else { continue };
                    for j in 0..3 {
                        let Some(dj) = e.dofs[j] else { continue };
                        out.push((off + di, dj, -m_u[i][j]));
                        out.push((off + di, n + dj, -m_v[i][j]));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut triplets = Vec::new();
    for b in blocks {
        triplets.extend(b?);
    }
    SparseMatrix::from_triplets(2 * n, &triplets)
}

/// Regularized Jacobian of [`residual_a`] at `state`.
pub fn jacobian(space: &P1Space, spec: &ProblemSpec, state: &PairState, eps: f64) -> Result<SparseMatrix> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} must be >= 0")));
    }
    space.check(&state.u)?;
    space.check(&state.v)?;
    jacobian_vec(space, spec, &state.to_vec(), eps)
}

/// Standard P1 stiffness matrix `∫ ∇φ_j·∇φ_i`.
pub fn laplace_stiffness(space: &P1Space) -> Result<SparseMatrix> {
    let mut t = Vec::new();
    for e in space.elements() {
        for i in 0..3 {
            let Some(di) = e.dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = e.dofs[j] else { continue };
                let v = e.area * (e.grads[i][0] * e.grads[j][0] + e.grads[i][1] * e.grads[j][1]);
                t.push((di, dj, v));
            }
        }
    }
    SparseMatrix::from_triplets(space.num_dofs(), &t)
}

/// Hat-function integrals `∫ φ_k = |supp φ_k| / 3`.
pub fn hat_integrals(space: &P1Space) -> Vec<f64> {
    let mut out = vec![0.0; space.num_dofs()];
    for e in space.elements() {
        for d in e.dofs.iter().flatten() {
            out[*d] += e.area / 3.0;
        }
    }
    out
}
