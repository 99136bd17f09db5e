//! Reaction terms `f(x, s, t, ξ, ν)` and the built-in example family.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expression};
use crate::hypotheses::{H2Choice, HypothesisConstants};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;

/// Arguments of a reaction: point `x`, values `s = u(x)`, `t = v(x)`,
/// gradients `xi = ∇u(x)`, `nu = ∇v(x)`.
pub type ReactionArgs = Bindings;

/// Partial derivatives of a reaction with respect to `s`, `t`, `ξ`, `ν`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Partials {
    pub ds: f64,
    pub dt: f64,
    pub dxi: [f64; 2],
    pub dnu: [f64; 2],
}

impl Partials {
    pub fn is_finite(&self) -> bool {
        self.ds.is_finite()
            && self.dt.is_finite()
            && self.dxi.iter().chain(&self.dnu).all(|v| v.is_finite())
    }
}

pub trait Reaction: Send + Sync {
    fn eval(&self, a: &ReactionArgs) -> f64;

    /// Analytic partials, if the reaction provides them.
    fn partials(&self, _a: &ReactionArgs) -> Option<Partials> {
        None
    }

    fn describe(&self) -> String {
        "reaction".into()
    }
}

pub type ReactionHandle = Arc<dyn Reaction>;

impl fmt::Debug for dyn Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reaction({})", self.describe())
    }
}

/// Central differences with step `1e-6 (1 + |arg|)` in every argument.
pub fn central_partials(r: &dyn Reaction, a: &ReactionArgs) -> Result<Partials> {
    let diff = |name: &'static str, set: &dyn Fn(&mut ReactionArgs, f64), at: f64| {
        let h = 1e-6 * (1.0 + at.abs());
        let mut plus = *a;
        set(&mut plus, at + h);
        let mut minus = *a;
        set(&mut minus, at - h);
        let d = (r.eval(&plus) - r.eval(&minus)) / (2.0 * h);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonFiniteProbe { argument: name })
        }
    };
    Ok(Partials {
        ds: diff("s", &|b, v| b.s = v, a.s)?,
        dt: diff("t", &|b, v| b.t = v, a.t)?,
        dxi: [
            diff("xi1", &|b, v| b.xi[0] = v, a.xi[0])?,
            diff("xi2", &|b, v| b.xi[1] = v, a.xi[1])?,
        ],
        dnu: [
            diff("nu1", &|b, v| b.nu[0] = v, a.nu[0])?,
            diff("nu2", &|b, v| b.nu[1] = v, a.nu[1])?,
        ],
    })
}

/// Analytic partials when available, central differences otherwise.
pub fn partials_or_fd(r: &dyn Reaction, a: &ReactionArgs) -> Result<Partials> {
    match r.partials(a) {
        Some(p) => Ok(p),
        None => central_partials(r, a),
    }
}

/// Wraps a reaction so that `partials` always answers, by central differences.
pub struct FiniteDifferencePartials {
    inner: ReactionHandle,
}

impl FiniteDifferencePartials {
    pub fn try_partials(&self, a: &ReactionArgs) -> Result<Partials> {
        central_partials(self.inner.as_ref(), a)
    }
}

pub fn finite_difference_partials(reaction: ReactionHandle) -> FiniteDifferencePartials {
    FiniteDifferencePartials { inner: reaction }
}

impl Reaction for FiniteDifferencePartials {
    fn eval(&self, a: &ReactionArgs) -> f64 {
        self.inner.eval(a)
    }

    fn partials(&self, a: &ReactionArgs) -> Option<Partials> {
        self.try_partials(a).ok()
    }

    fn describe(&self) -> String {
        format!("fd({})", self.inner.describe())
    }
}

/// Reaction given by a parsed expression.
#[derive(Debug, Clone)]
pub struct ExpressionReaction {
    expr: Expression,
}

impl ExpressionReaction {
    pub fn new(expr: Expression) -> Self {
        Self { expr }
    }

    pub fn parse(src: &str) -> Result<Self> {
        Expression::parse(src).map(Self::new)
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }
}

impl Reaction for ExpressionReaction {
    fn eval(&self, a: &ReactionArgs) -> f64 {
        self.expr.eval(a)
    }

    fn describe(&self) -> String {
        self.expr.source().to_string()
    }
}

/// Reaction backed by a closure.
pub struct FnReaction<F> {
    f: F,
    label: String,
}

impl<F: Fn(&ReactionArgs) -> f64 + Send + Sync> FnReaction<F> {
    pub fn new(label: &str, f: F) -> Self {
        Self {
            f,
            label: label.into(),
        }
    }
}

impl<F: Fn(&ReactionArgs) -> f64 + Send + Sync> Reaction for FnReaction<F> {
    fn eval(&self, a: &ReactionArgs) -> f64 {
        (self.f)(a)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

pub fn zero_reaction() -> ReactionHandle {
    Arc::new(FnReaction::new("0", |_| 0.0))
}

/// Scalar function of position, e.g. `h_i`, `σ_i`, `γ_i`.
#[derive(Clone)]
pub struct SpatialFn {
    f: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for SpatialFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpatialFn({})", self.label)
    }
}

impl SpatialFn {
    pub fn new(label: impl Into<String>, f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn from_expression(e: Expression) -> Self {
        let label = e.source().to_string();
        Self::new(label, move |x| e.eval_at(x))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `|self| + c`
    pub fn abs_plus(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self::new(format!("|{}| + {c}", self.label), move |x| f(x).abs() + c)
    }

    /// `∫ |self|` over the mesh by the degree-4 rule.
    pub fn l1_norm(&self, mesh: &Mesh) -> f64 {
        let rule = QuadratureRule::degree4();
        (0..mesh.num_triangles())
            .map(|k| {
                let scale = 2.0 * mesh.triangle_area(k);
                rule.map_points(&mesh.triangle_points(k))
                    .iter()
                    .zip(rule.weights())
                    .map(|(x, w)| scale * w * self.eval(*x).abs())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `p* = 2p/(2 − p)` in two dimensions.
pub fn critical_exponent(p: f64) -> f64 {
    2.0 * p / (2.0 - p)
}

/// `r' = r/(r − 1)`
pub fn conjugate(r: f64) -> f64 {
    r / (r - 1.0)
}

/// `sup_{x ≥ 0} x^a − k x^b` for `0 < a < b`, `k > 0`.
pub fn young_slack(a: f64, b: f64, k: f64) -> f64 {
    let x = (a / (k * b)).powf(1.0 / (b - a));
    x.powf(a) * (1.0 - a / b)
}

/// Parameters of the built-in reaction pair.
#[derive(Debug, Clone)]
pub struct ExampleReactionParams {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub h: [SpatialFn; 2],
}

impl ExampleReactionParams {
    /// `α_i = 1.5`, `β_i` at 80% of its upper bound, `h_i ≡ 0`.
    pub fn defaults(p: [f64; 2]) -> Self {
        let b = beta_bounds(p);
        Self {
            alpha: [1.5, 1.5],
            beta: [0.8 * b[0], 0.8 * b[1]],
            h: [SpatialFn::constant(0.0), SpatialFn::constant(0.0)],
        }
    }

    pub fn validate(&self, p: [f64; 2]) -> Result<()> {
        let b = beta_bounds(p);
        for i in 0..2 {
            if !(1.0 <= self.alpha[i] && self.alpha[i] < p[i]) {
                return Err(Error::InvalidArgument(format!(
                    "alpha{} = {} must satisfy 1 <= alpha < p{} = {}",
                    i + 1,
                    self.alpha[i],
                    i + 1,
                    p[i]
                )));
            }
            if !(1.0 <= self.beta[i] && self.beta[i] < b[i]) {
                return Err(Error::InvalidArgument(format!(
                    "beta{} = {} must satisfy 1 <= beta < p{i1}/(p{i1}*)' = {}",
                    i + 1,
                    self.beta[i],
                    b[i],
                    i1 = i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Upper bounds `p_i/(p_i*)'` for `β_i`.
pub fn beta_bounds(p: [f64; 2]) -> [f64; 2] {
    [
        p[0] / conjugate(critical_exponent(p[0])),
        p[1] / conjugate(critical_exponent(p[1])),
    ]
}

/// Coupling exponents `[p2/(p1*)', p1/(p2*)']`.
pub fn coupling_exponents(p: [f64; 2]) -> [f64; 2] {
    [
        p[1] / conjugate(critical_exponent(p[0])),
        p[0] / conjugate(critical_exponent(p[1])),
    ]
}

/// One equation of the example pair. For `which = 0`:
/// `f = |s|^(α-2) s + s/(s²+1) (|t|^a + |ξ|^β + |ν|^a + h(x))`;
/// `which = 1` swaps the roles of `(s, ξ)` and `(t, ν)` in the obvious way.
#[derive(Debug, Clone)]
pub struct ExampleReaction {
    which: usize,
    alpha: f64,
    beta: f64,
    coupling: f64,
    h: SpatialFn,
}

#[inline]
fn signed_pow(s: f64, e: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.signum() * s.abs().powf(e)
    }
}

#[inline]
fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Gradient of `|v|^e`, zero at the origin.
#[inline]
fn grad_pow(v: [f64; 2], e: f64) -> [f64; 2] {
    let m = norm(v);
    if m == 0.0 {
        [0.0, 0.0]
    } else {
        let c = e * m.powf(e - 2.0);
        [c * v[0], c * v[1]]
    }
}

const DERIVATIVE_FLOOR: f64 = 1e-12;

impl ExampleReaction {
    fn bracket(&self, a: &ReactionArgs) -> f64 {
        let h = self.h.eval(a.x);
        if self.which == 0 {
            a.t.abs().powf(self.coupling)
                + norm(a.xi).powf(self.beta)
                + norm(a.nu).powf(self.coupling)
                + h
        } else {
            a.s.abs().powf(self.coupling)
                + norm(a.xi).powf(self.coupling)
                + norm(a.nu).powf(self.beta)
                + h
        }
    }
}

impl Reaction for ExampleReaction {
    fn eval(&self, a: &ReactionArgs) -> f64 {
        let own = if self.which == 0 { a.s } else { a.t };
        signed_pow(own, self.alpha - 1.0) + own / (own * own + 1.0) * self.bracket(a)
    }

    fn partials(&self, a: &ReactionArgs) -> Option<Partials> {
        let (own, other) = if self.which == 0 { (a.s, a.t) } else { (a.t, a.s) };
        let w = own * own + 1.0;
        let g = own / w;
        let dg = (1.0 - own * own) / (w * w);
        let d_own = (self.alpha - 1.0) * own.abs().max(DERIVATIVE_FLOOR).powf(self.alpha - 2.0)
            + dg * self.bracket(a);
        let d_other = g * self.coupling * signed_pow(other, self.coupling - 1.0);
        let (exp_xi, exp_nu) = if self.which == 0 {
            (self.beta, self.coupling)
        } else {
            (self.coupling, self.beta)
        };
        let gx = grad_pow(a.xi, exp_xi);
        let gn = grad_pow(a.nu, exp_nu);
        let dxi = [g * gx[0], g * gx[1]];
        let dnu = [g * gn[0], g * gn[1]];
        Some(if self.which == 0 {
            Partials {
                ds: d_own,
                dt: d_other,
                dxi,
                dnu,
            }
        } else {
            Partials {
                ds: d_other,
                dt: d_own,
                dxi,
                dnu,
            }
        })
    }

    fn describe(&self) -> String {
        let (own, other, xi_e, nu_e) = if self.which == 0 {
            ("s", "t", self.beta, self.coupling)
        } else {
            ("t", "s", self.coupling, self.beta)
        };
        format!(
            "|{own}|^({a}-2)*{own} + {own}/({own}^2+1)*(|{other}|^{c} + |xi|^{xi_e} + |nu|^{nu_e} + {h})",
            a = self.alpha,
            c = self.coupling,
            h = self.h.label()
        )
    }
}

/// Young slacks `ĉ_i` making the signed products obey the dissipativity
/// bound with the chosen `(c_i, d_i)`.
pub fn example_slacks(params: &ExampleReactionParams, p: [f64; 2], choice: &H2Choice) -> [f64; 2] {
    let a = coupling_exponents(p);
    let c1 = young_slack(params.alpha[0], p[0], choice.d[0])
        + young_slack(a[0], p[1], choice.d[0])
        + young_slack(params.beta[0], p[0], choice.c[0])
        + young_slack(a[0], p[1], choice.c[0]);
    let c2 = young_slack(a[1], p[0], choice.d[1])
        + young_slack(params.alpha[1], p[1], choice.d[1])
        + young_slack(a[1], p[0], choice.c[1])
        + young_slack(params.beta[1], p[1], choice.c[1]);
    [c1, c2]
}

/// The example reaction pair with its growth constants `C_i = 1`,
/// `σ_i = |h_i| + 3`, and dissipativity data `γ_i = |h_i| + ĉ_i`.
pub fn build_example_reactions(
    params: &ExampleReactionParams,
    p: [f64; 2],
    choice: &H2Choice,
    mesh: &Mesh,
) -> Result<(ReactionHandle, ReactionHandle, HypothesisConstants)> {
    params.validate(p)?;
    choice.validate()?;
    let a = coupling_exponents(p);
    let f1 = ExampleReaction {
        which: 0,
        alpha: params.alpha[0],
        beta: params.beta[0],
        coupling: a[0],
        h: params.h[0].clone(),
    };
    let f2 = ExampleReaction {
        which: 1,
        alpha: params.alpha[1],
        beta: params.beta[1],
        coupling: a[1],
        h: params.h[1].clone(),
    };
    let slack = example_slacks(params, p, choice);
    let gamma = [params.h[0].abs_plus(slack[0]), params.h[1].abs_plus(slack[1])];
    let constants = HypothesisConstants {
        growth: [1.0, 1.0],
        sigma: [params.h[0].abs_plus(3.0), params.h[1].abs_plus(3.0)],
        prime: None,
        c: choice.c,
        d: choice.d,
        gamma_l1: [gamma[0].l1_norm(mesh), gamma[1].l1_norm(mesh)],
        gamma,
    };
    Ok((Arc::new(f1), Arc::new(f2), constants))
}
