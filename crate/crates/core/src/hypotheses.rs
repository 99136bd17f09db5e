//! Sampling-based audit of the growth and dissipativity hypotheses on a
//! reaction pair, the coercivity margin, and the a-priori radius.
//!
//! A passing report means "no violation found on the samples", not a proof.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::reactions::{conjugate, critical_exponent, Reaction, ReactionArgs, SpatialFn};

/// Dissipativity coefficients `c_i` (gradient terms) and `d_i` (value terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Choice {
    pub c: [f64; 2],
    pub d: [f64; 2],
}

impl Default for H2Choice {
    fn default() -> Self {
        Self {
            c: [0.25, 0.25],
            d: [0.5, 0.5],
        }
    }
}

impl H2Choice {
    pub fn validate(&self) -> Result<()> {
        if self.c.iter().chain(&self.d).all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "c_i, d_i must be positive, got c = {:?}, d = {:?}",
                self.c, self.d
            )))
        }
    }
}

/// Constants of the strengthened growth condition.
#[derive(Debug, Clone)]
pub struct PrimeConstants {
    pub d: [f64; 2],
    pub r: [f64; 2],
    pub s: [f64; 2],
    pub sigma: [SpatialFn; 2],
}

#[derive(Debug, Clone)]
pub struct HypothesisConstants {
    /// `C_i`
    pub growth: [f64; 2],
    /// `σ_i`
    pub sigma: [SpatialFn; 2],
    pub prime: Option<PrimeConstants>,
    pub c: [f64; 2],
    pub d: [f64; 2],
    pub gamma: [SpatialFn; 2],
    /// `‖γ_i‖_1`
    pub gamma_l1: [f64; 2],
}

impl HypothesisConstants {
    /// Constants for reactions that vanish identically.
    pub fn trivial(c: [f64; 2], d: [f64; 2]) -> Self {
        Self {
            growth: [1.0, 1.0],
            sigma: [SpatialFn::constant(0.0), SpatialFn::constant(0.0)],
            prime: None,
            c,
            d,
            gamma: [SpatialFn::constant(0.0), SpatialFn::constant(0.0)],
            gamma_l1: [0.0, 0.0],
        }
    }

    pub fn validate(&self, p: [f64; 2]) -> Result<()> {
        let positive = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v:?}")))
            }
        };
        positive("C_i", &self.growth)?;
        positive("c_i", &self.c)?;
        positive("d_i", &self.d)?;
        if let Some(pr) = &self.prime {
            positive("D_i", &pr.d)?;
            for i in 0..2 {
                let ps = critical_exponent(p[i]);
                for (name, v) in [("r", pr.r[i]), ("s", pr.s[i])] {
                    if !(v > 1.0 && v < ps) {
                        return Err(Error::InvalidArgument(format!(
                            "{name}{} = {v} must lie in (1, p{}*) = (1, {ps})",
                            i + 1,
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The growth constants implied by the strengthened condition:
    /// `C_i = D_i`, `σ_i = σ'_i + 4 D_i`.
    pub fn implied_growth(prime: &PrimeConstants) -> ([f64; 2], [SpatialFn; 2]) {
        (
            prime.d,
            [
                shifted(&prime.sigma[0], 4.0 * prime.d[0]),
                shifted(&prime.sigma[1], 4.0 * prime.d[1]),
            ],
        )
    }
}

fn shifted(f: &SpatialFn, c: f64) -> SpatialFn {
    let g = f.clone();
    SpatialFn::new(format!("{} + {c}", f.label()), move |x| g.eval(x) + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H1,
    H1Prime,
    H2,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H1Prime => "H1prime",
            Hypothesis::H2 => "H2",
        }
    }
}

/// How samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub samples: usize,
    /// Largest sampled magnitude of `s`, `t`, `|ξ|`, `|ν|`.
    pub max_magnitude: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            samples: 100_000,
            max_magnitude: 1e4,
            seed: 0,
        }
    }
}

/// Draws `(x, s, t, ξ, ν)`: `x` at quadrature points of the mesh, magnitudes
/// log-uniform in `[1e-4, max]` with 10% exact zeros, random signs and
/// directions.
pub fn draw_samples(mesh: &Mesh, plan: &SamplingPlan) -> Vec<ReactionArgs> {
    let rule = QuadratureRule::degree4();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let hi = plan.max_magnitude.max(1e-4).log10();
    let mag = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.1) {
            0.0
        } else {
            10f64.powf(rng.random_range(-4.0..=hi))
        }
    };
    (0..plan.samples)
        .map(|_| {
            let k = rng.random_range(0..mesh.num_triangles());
            let j = rng.random_range(0..rule.len());
            let x = rule.map_points(&mesh.triangle_points(k))[j];
            let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let s = sign(&mut rng) * mag(&mut rng);
            let t = sign(&mut rng) * mag(&mut rng);
            let a1 = rng.random_range(0.0..std::f64::consts::TAU);
            let m1 = mag(&mut rng);
            let a2 = rng.random_range(0.0..std::f64::consts::TAU);
            let m2 = mag(&mut rng);
            ReactionArgs {
                x,
                s,
                t,
                xi: [m1 * a1.cos(), m1 * a1.sin()],
                nu: [m2 * a2.cos(), m2 * a2.sin()],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample: usize,
    /// 1 or 2
    pub equation: usize,
    pub args: ReactionArgs,
    pub lhs: f64,
    pub rhs: f64,
}

/// Largest number of violations kept in a report; the count is exact.
pub const MAX_RECORDED_VIOLATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub hypothesis: Hypothesis,
    pub samples_tested: usize,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    /// `1 − [c1 + c2 + (d1 + d2)/min λ]`, only for H2.
    pub coercivity_margin: Option<f64>,
    /// H2 only: the margin does not exceed twice its drift between the
    /// coarsest and finest eigenvalue estimates.
    pub conditional: bool,
    pub passed: bool,
}

impl CheckReport {
    pub const CSV_HEADER: &'static str =
        "hypothesis,samples_tested,violations,coercivity_margin,conditional,passed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.hypothesis.label(),
            self.samples_tested,
            self.violation_count,
            self.coercivity_margin.map_or(String::new(), |m| format!("{m}")),
            self.conditional,
            self.passed
        )
    }

    pub fn violations_csv(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            let a = &v.args;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.hypothesis.label(),
                v.sample,
                v.equation,
                a.x[0],
                a.x[1],
                a.s,
                a.t,
                a.xi[0],
                a.xi[1],
                a.nu[0],
                a.nu[1],
                v.lhs,
                v.rhs
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} samples, {} violations",
            self.hypothesis.label(),
            self.samples_tested,
            self.violation_count
        );
        if let Some(m) = self.coercivity_margin {
            let _ = write!(s, ", coercivity margin {m:.6}");
            if self.conditional {
                s.push_str(" (conditional on discrete eigenvalues)");
            }
        }
        s.push_str(if self.passed { ": no violation found" } else { ": FAILED" });
        s
    }
}

pub const VIOLATIONS_CSV_HEADER: &str = "hypothesis,sample,equation,x,y,s,t,xi1,xi2,nu1,nu2,lhs,rhs";

/// `lhs > rhs + 1e-12 (1 + |rhs|)` counts as a violation.
#[inline]
fn violated(lhs: f64, rhs: f64) -> bool {
    !(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()))
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn run_check(
    samples: &[ReactionArgs],
    eval: impl Fn(usize, &ReactionArgs) -> Result<(f64, f64)> + Sync,
) -> Result<(usize, Vec<Violation>)> {
    let found: Vec<Result<Vec<Violation>>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, a)| {
            let mut v = Vec::new();
            for eq in 0..2 {
                let (lhs, rhs) = eval(eq, a)?;
                if violated(lhs, rhs) {
                    v.push(Violation {
                        sample: idx,
                        equation: eq + 1,
                        args: *a,
                        lhs,
                        rhs,
                    });
                }
            }
            Ok(v)
        })
        .collect();
    let mut count = 0;
    let mut kept = Vec::new();
    for v in found {
        for viol in v? {
            count += 1;
            if kept.len() < MAX_RECORDED_VIOLATIONS {
                kept.push(viol);
            }
        }
    }
    Ok((count, kept))
}

fn eval_checked(r: &dyn Reaction, a: &ReactionArgs) -> Result<f64> {
    let v = r.eval(a);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteReaction {
            value: v,
            x: a.x[0],
            y: a.x[1],
            element: usize::MAX,
            point: usize::MAX,
        })
    }
}

/// Right-hand side bracket of the growth condition for equation `eq`.
pub fn growth_bracket(p: [f64; 2], eq: usize, a: &ReactionArgs) -> f64 {
    let ps = [critical_exponent(p[0]), critical_exponent(p[1])];
    let c = conjugate(ps[eq]);
    let (es, et) = if eq == 0 {
        (ps[0] - 1.0, ps[1] / c)
    } else {
        (ps[0] / c, ps[1] - 1.0)
    };
    a.s.abs().powf(es) + a.t.abs().powf(et) + norm(a.xi).powf(p[0] / c) + norm(a.nu).powf(p[1] / c)
}

/// Exponents `[p1*/r', p2*/r', p1/r', p2/r']` of the strengthened condition.
pub fn prime_exponents(p: [f64; 2], r: f64) -> [f64; 4] {
    let rc = conjugate(r);
    [
        critical_exponent(p[0]) / rc,
        critical_exponent(p[1]) / rc,
        p[0] / rc,
        p[1] / rc,
    ]
}

pub fn check_h1(
    reactions: [&dyn Reaction; 2],
    p: [f64; 2],
    growth: [f64; 2],
    sigma: &[SpatialFn; 2],
    samples: &[ReactionArgs],
) -> Result<CheckReport> {
    let (count, violations) = run_check(samples, |eq, a| {
        let lhs = eval_checked(reactions[eq], a)?.abs();
        Ok((lhs, growth[eq] * growth_bracket(p, eq, a) + sigma[eq].eval(a.x)))
    })?;
    Ok(CheckReport {
        hypothesis: Hypothesis::H1,
        samples_tested: samples.len(),
        violation_count: count,
        violations,
        coercivity_margin: None,
        conditional: false,
        passed: count == 0,
    })
}

pub fn check_h1prime(
    reactions: [&dyn Reaction; 2],
    p: [f64; 2],
    prime: &PrimeConstants,
    samples: &[ReactionArgs],
) -> Result<CheckReport> {
    let exps = [prime_exponents(p, prime.r[0]), prime_exponents(p, prime.r[1])];
    let (count, violations) = run_check(samples, |eq, a| {
        let e = exps[eq];
        let lhs = eval_checked(reactions[eq], a)?.abs();
        let bracket = a.s.abs().powf(e[0])
            + a.t.abs().powf(e[1])
            + norm(a.xi).powf(e[2])
            + norm(a.nu).powf(e[3]);
        Ok((lhs, prime.d[eq] * bracket + prime.sigma[eq].eval(a.x)))
    })?;
    Ok(CheckReport {
        hypothesis: Hypothesis::H1Prime,
        samples_tested: samples.len(),
        violation_count: count,
        violations,
        coercivity_margin: None,
        conditional: false,
        passed: count == 0,
    })
}

/// First-eigenvalue estimates for `p1` and `p2` on the finest and coarsest
/// levels used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaTrend {
    pub fine: [f64; 2],
    pub coarse: Option<[f64; 2]>,
}

impl LambdaTrend {
    pub fn exact(lambda: [f64; 2]) -> Self {
        Self {
            fine: lambda,
            coarse: None,
        }
    }
}

/// `1 − [c1 + c2 + (d1 + d2)/(λ1 ∧ λ2)]`
pub fn coercivity_margin(c: [f64; 2], d: [f64; 2], lambda: [f64; 2]) -> f64 {
    1.0 - (c[0] + c[1] + (d[0] + d[1]) / lambda[0].min(lambda[1]))
}

pub fn check_h2(
    reactions: [&dyn Reaction; 2],
    p: [f64; 2],
    constants: &HypothesisConstants,
    lambda: &LambdaTrend,
    samples: &[ReactionArgs],
) -> Result<CheckReport> {
    let (c, d) = (constants.c, constants.d);
    let (count, violations) = run_check(samples, |eq, a| {
        let own = if eq == 0 { a.s } else { a.t };
        let lhs = eval_checked(reactions[eq], a)? * own;
        let rhs = c[eq] * (norm(a.xi).powf(p[0]) + norm(a.nu).powf(p[1]))
            + d[eq] * (a.s.abs().powf(p[0]) + a.t.abs().powf(p[1]))
            + constants.gamma[eq].eval(a.x);
        Ok((lhs, rhs))
    })?;
    let margin = coercivity_margin(c, d, lambda.fine);
    let conditional = match lambda.coarse {
        Some(coarse) => margin <= 2.0 * (margin - coercivity_margin(c, d, coarse)).abs(),
        None => true,
    };
    Ok(CheckReport {
        hypothesis: Hypothesis::H2,
        samples_tested: samples.len(),
        violation_count: count,
        violations,
        coercivity_margin: Some(margin),
        conditional,
        passed: count == 0 && margin > 0.0,
    })
}

/// Inputs of the a-priori radius computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusInputs {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub mu: [f64; 2],
    pub c: [f64; 2],
    pub d: [f64; 2],
    /// `λ_{1,p1}`, `λ_{1,p2}`
    pub lambda: [f64; 2],
    /// `‖γ1‖_1 + ‖γ2‖_1`
    pub gamma_l1_sum: f64,
    pub domain_measure: f64,
}

impl RadiusInputs {
    /// `k_i = 1 − c1 − c2 − (d1 + d2)/λ_{1,p_i}`
    pub fn k(&self) -> [f64; 2] {
        let base = 1.0 - self.c[0] - self.c[1];
        let dd = self.d[0] + self.d[1];
        [base - dd / self.lambda[0], base - dd / self.lambda[1]]
    }

    /// `a_i = |μ_i| |Ω|^((p_i − q_i)/p_i)`
    pub fn a(&self) -> [f64; 2] {
        [0, 1].map(|i| {
            self.mu[i].abs() * self.domain_measure.powf((self.p[i] - self.q[i]) / self.p[i])
        })
    }

    /// Lower bound of `⟨B(y), y⟩` on the splitting `ρ1 + ρ2 = R`.
    pub fn energy(&self, rho1: f64, r: f64) -> f64 {
        let k = self.k();
        let a = self.a();
        let rho2 = (r - rho1).max(0.0);
        k[0] * rho1.powf(self.p[0]) + k[1] * rho2.powf(self.p[1])
            - a[0] * rho1.powf(self.q[0])
            - a[1] * rho2.powf(self.q[1])
            - self.gamma_l1_sum
    }

    /// Minimum of [`Self::energy`] over splittings of `r`.
    pub fn worst_split(&self, r: f64) -> f64 {
        const GRID: usize = 4096;
        let f = |x: f64| self.energy(x, r);
        let mut best_i = 0;
        let mut best = f(0.0);
        for i in 1..=GRID {
            let v = f(r * i as f64 / GRID as f64);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        // golden-section refinement in the neighbouring cells
        let h = r / GRID as f64;
        let mut lo = (best_i as f64 - 1.0).max(0.0) * h;
        let mut hi = ((best_i as f64 + 1.0) * h).min(r);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..100 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        best.min(f1).min(f2).min(f(r))
    }
}

/// Floor returned when every radius works.
pub const R_MIN: f64 = 1.0;

/// Smallest `R` such that every splitting `ρ1 + ρ2 = R` gives a nonnegative
/// energy lower bound; `R_MIN` when every `R > 0` qualifies.
pub fn apriori_radius(inputs: &RadiusInputs) -> Result<f64> {
    let lambda_min = [inputs.lambda[0].min(inputs.lambda[1]); 2];
    let margin = coercivity_margin(inputs.c, inputs.d, lambda_min);
    if !(margin > 0.0) {
        return Err(Error::CoercivityViolated { margin });
    }
    let a = inputs.a();
    if inputs.gamma_l1_sum <= 0.0 && a[0] == 0.0 && a[1] == 0.0 {
        return Ok(R_MIN);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while inputs.worst_split(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidArgument("a-priori radius search diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if inputs.worst_split(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    // tiny upward rounding keeps the returned radius on the safe side of
    // quadrature-free grid scans
    Ok(hi * (1.0 + 1e-9))
}
