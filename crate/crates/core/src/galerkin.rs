//! Ball-constrained level solves and the refinement-hierarchy driver with
//! its generalized-solution diagnostics.
//!
//! Diagnostics compare every level against the finest computed level: a
//! level-`ℓ` pair is prolongated to the finest mesh, where the residual
//! and all pairings are evaluated.

use std::fmt::Write as _;

use crate::eigen::EigenEstimate;
use crate::error::{Error, Result};
use crate::femspace::{FemFunction, P1Space};
use crate::hypotheses::CheckReport;
use crate::linalg::{dot, norm2, SparseMatrix};
use crate::mesh::RefinementHierarchy;
use crate::newton::{self, NewtonOptions, NonlinearSystem};
use crate::operators::{
    apply_competing, assemble_nemytskii, jacobian_vec, residual_a, residual_vec, PairState, ProblemSpec,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Bound on [`LevelSolution::residual_linf`].
    pub tol: f64,
    pub newton: NewtonOptions,
    /// Amplitude of `sin(πx) sin(πy)` in both components of the first
    /// level's initial guess. Zero starts from the zero pair.
    pub initial_amplitude: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            newton: NewtonOptions::default(),
            initial_amplitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    pub state: PairState,
    /// `max_k |⟨𝒜(u,v), φ_k⟩| / ‖φ_k‖_{1,p_i}` over both equations.
    pub residual_linf: f64,
    pub pair_norm: f64,
    pub radius: f64,
    pub newton_iterations: usize,
    pub epsilon_final: f64,
    pub inside_ball: bool,
    pub used_fallback: bool,
}

impl LevelSolution {
    pub fn level(&self) -> usize {
        self.state.level()
    }
}

/// The level system, measured in hat-normalized residuals and confined to
/// the ball `‖(u,v)‖ ≤ R` by radial rescaling.
struct LevelSystem<'s, 'm> {
    space: &'s P1Space<'m>,
    spec: &'s ProblemSpec,
    /// `1 / ‖φ_k‖_{1,p_i}` for `[u; v]`
    weights: Vec<f64>,
    radius: f64,
}

impl<'s, 'm> LevelSystem<'s, 'm> {
    fn new(space: &'s P1Space<'m>, spec: &'s ProblemSpec, radius: f64) -> Self {
        let mut weights: Vec<f64> = space.hat_seminorms(spec.p[0]).iter().map(|h| 1.0 / h).collect();
        weights.extend(space.hat_seminorms(spec.p[1]).iter().map(|h| 1.0 / h));
        Self {
            space,
            spec,
            weights,
            radius,
        }
    }

    fn pair_norm(&self, y: &[f64]) -> f64 {
        let n = self.space.num_dofs();
        let (u, v) = y.split_at(n);
        let level = self.space.level();
        // both components have the right length, so the seminorms cannot fail
        let nu = self
            .space
            .seminorm_w1p(&FemFunction::new(level, u.to_vec()), self.spec.p[0])
            .unwrap_or(f64::INFINITY);
        let nv = self
            .space
            .seminorm_w1p(&FemFunction::new(level, v.to_vec()), self.spec.p[1])
            .unwrap_or(f64::INFINITY);
        nu + nv
    }
}

impl NonlinearSystem for LevelSystem<'_, '_> {
    fn dim(&self) -> usize {
        2 * self.space.num_dofs()
    }

    fn residual(&self, y: &[f64], eps: f64) -> Result<Vec<f64>> {
        residual_vec(self.space, self.spec, y, eps)
    }

    fn jacobian(&self, y: &[f64], eps: f64) -> Result<SparseMatrix> {
        jacobian_vec(self.space, self.spec, y, eps)
    }

    fn measure(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.weights).fold(0.0, |m, (r, w)| m.max((r * w).abs()))
    }

    fn merit(&self, r: &[f64]) -> f64 {
        let scaled: Vec<f64> = r.iter().zip(&self.weights).map(|(r, w)| r * w).collect();
        norm2(&scaled)
    }

    fn project(&self, y: &mut [f64]) -> Result<bool> {
        let norm = self.pair_norm(y);
        if norm <= self.radius {
            return Ok(false);
        }
        let t = self.radius / norm;
        for v in y.iter_mut() {
            *v *= t;
        }
        Ok(true)
    }
}

/// Hat-normalized sup norm of the residual at `state`.
pub fn residual_linf(space: &P1Space, spec: &ProblemSpec, state: &PairState) -> Result<f64> {
    let sys = LevelSystem::new(space, spec, f64::INFINITY);
    Ok(sys.measure(&residual_a(space, spec, state)?.to_vec()))
}

fn sine_guess(space: &P1Space, amplitude: f64) -> PairState {
    let pi = std::f64::consts::PI;
    let f = space.interpolate(|x| amplitude * (pi * x[0]).sin() * (pi * x[1]).sin());
    PairState { u: f.clone(), v: f }
}

/// Solves `𝒜(u, v) = 0` on one level inside the ball of radius `radius`.
///
/// Without `init` the guess is `initial_amplitude · sin(πx) sin(πy)` in both
/// components. Iterates leaving the ball are rescaled onto its boundary.
pub fn solve_level(
    spec: &ProblemSpec,
    hierarchy: &RefinementHierarchy,
    level: usize,
    init: Option<&PairState>,
    radius: f64,
    opts: &SolveOptions,
) -> Result<LevelSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
    }
    let mesh = hierarchy.mesh(level)?;
    let space = P1Space::new(mesh);
    let y0 = match init {
        Some(s) => {
            space.check(&s.u)?;
            space.check(&s.v)?;
            s.to_vec()
        }
        None => sine_guess(&space, opts.initial_amplitude).to_vec(),
    };
    let sys = LevelSystem::new(&space, spec, radius);
    let newton_opts = NewtonOptions {
        tol: opts.tol,
        ..opts.newton
    };
    let out = newton::solve(&sys, &y0, &newton_opts)?;
    let state = PairState::from_vec(level, &out.y);
    let pair_norm = state.pair_norm(&space, spec.p)?;
    Ok(LevelSolution {
        residual_linf: out.residual,
        pair_norm,
        radius,
        newton_iterations: out.iterations,
        epsilon_final: out.epsilon_final,
        // radial rescaling can overshoot the boundary by rounding only
        inside_ball: pair_norm <= radius * (1.0 + 1e-12),
        used_fallback: out.used_fallback,
        state,
    })
}

/// Test functions for [`check_weak_solution`].
#[derive(Debug, Clone, PartialEq)]
pub enum TestBattery {
    /// Each function is tested in both slots, `(φ, 0)` and `(0, φ)`.
    Functions(Vec<FemFunction>),
    /// Every hat function of the given level.
    FullBasis { level: usize },
}

/// `max |⟨𝒜(u,v), (φ,0)⟩|, |⟨𝒜(u,v), (0,φ)⟩|` over the battery.
///
/// The pairing is evaluated on the finer of the solution level and the
/// battery level, prolongating whichever side is coarser.
pub fn check_weak_solution(
    hierarchy: &RefinementHierarchy,
    spec: &ProblemSpec,
    state: &PairState,
    battery: &TestBattery,
) -> Result<f64> {
    let from = state.level();
    let battery_level = match battery {
        TestBattery::Functions(fs) => fs.iter().map(|f| f.level).max().unwrap_or(from),
        TestBattery::FullBasis { level } => *level,
    };
    let target = from.max(battery_level);
    let space = P1Space::new(hierarchy.mesh(target)?);
    let lifted = PairState {
        u: FemFunction::new(target, hierarchy.prolongate(&state.u.coeffs, from, target)?),
        v: FemFunction::new(target, hierarchy.prolongate(&state.v.coeffs, from, target)?),
    };
    let r = residual_a(&space, spec, &lifted)?;
    match battery {
        TestBattery::FullBasis { .. } => Ok(r
            .r_u
            .iter()
            .chain(&r.r_v)
            .fold(0.0, |m: f64, v| m.max(v.abs()))),
        TestBattery::Functions(fs) => {
            let mut worst = 0.0f64;
            for f in fs {
                let g = hierarchy.prolongate(&f.coeffs, f.level, target)?;
                worst = worst.max(dot(&r.r_u, &g).abs()).max(dot(&r.r_v, &g).abs());
            }
            Ok(worst)
        }
    }
}

/// Both sides of `‖u‖_{1,p1}^{p1} = μ1 ‖u‖_{1,q1}^{q1} + ∫ N_f1(u,v) u`
/// and its analogue for `v`, as `[(lhs, rhs); 2]`.
pub fn energy_identity(space: &P1Space, spec: &ProblemSpec, state: &PairState) -> Result<[(f64, f64); 2]> {
    let mut out = [(0.0, 0.0); 2];
    for (i, w) in [&state.u, &state.v].into_iter().enumerate() {
        let lhs = space.seminorm_w1p(w, spec.p[i])?.powf(spec.p[i]);
        let nem = assemble_nemytskii(space, spec.reactions[i].as_ref(), state)?;
        let rhs = spec.mu[i] * space.seminorm_w1p(w, spec.q[i])?.powf(spec.q[i]) + dot(&nem, &w.coeffs);
        out[i] = (lhs, rhs);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelFailure {
    pub level: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub levels: Vec<LevelSolution>,
    pub radius: f64,
    /// Pair norms per level.
    pub condition_a: Vec<f64>,
    /// Per level, max over the level-0 battery of the finest-level residual
    /// of the prolongated pair.
    pub condition_b: Vec<f64>,
    /// `⟨𝒜(u_ℓ,v_ℓ), (u_ℓ−u*, v_ℓ−v*)⟩` with `(u*,v*)` the finest solution.
    pub condition_c: Vec<f64>,
    /// As `condition_c` with the operator part `A` alone.
    pub condition_c_prime: Vec<f64>,
    /// `‖u_ℓ−u*‖_{1,p1} + ‖v_ℓ−v*‖_{1,p2}`.
    pub strong_convergence: Vec<f64>,
    /// `|lhs − rhs|` of [`energy_identity`], max over both equations.
    pub energy_gap: Vec<f64>,
    pub lambda_estimates: Vec<EigenEstimate>,
    pub hypothesis_reports: Vec<CheckReport>,
    pub failure: Option<LevelFailure>,
}

impl SolveReport {
    pub const CSV_HEADER: &'static str =
        "level,dofs,pair_norm,R,residual_linf,condition_b_max,condition_c,condition_c_prime,strong_convergence";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, s) in self.levels.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.level(),
                s.state.dofs(),
                s.pair_norm,
                self.radius,
                s.residual_linf,
                self.condition_b[i],
                self.condition_c[i],
                self.condition_c_prime[i],
                self.strong_convergence[i]
            );
        }
        out
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Solves levels `0..levels` in sequence, warm-starting each level with
/// the prolongated previous solution, then evaluates the diagnostics
/// against the finest solved level. A failing level stops the run and is
/// recorded in [`SolveReport::failure`]; diagnostics cover the levels
/// solved before it.
pub fn run_hierarchy(
    spec: &ProblemSpec,
    hierarchy: &RefinementHierarchy,
    levels: usize,
    radius: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 levels, got {levels}")));
    }
    if levels > hierarchy.num_levels() {
        return Err(Error::LevelOutOfRange {
            level: levels - 1,
            available: hierarchy.num_levels(),
        });
    }
    let mut solved: Vec<LevelSolution> = Vec::with_capacity(levels);
    let mut failure = None;
    for level in 0..levels {
        let init = match solved.last() {
            Some(prev) => Some(PairState {
                u: FemFunction::new(level, hierarchy.prolongate(&prev.state.u.coeffs, level - 1, level)?),
                v: FemFunction::new(level, hierarchy.prolongate(&prev.state.v.coeffs, level - 1, level)?),
            }),
            None => None,
        };
        match solve_level(spec, hierarchy, level, init.as_ref(), radius, opts) {
            Ok(s) => solved.push(s),
            Err(e) => {
                failure = Some(LevelFailure {
                    level,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    let mut report = SolveReport {
        radius,
        condition_a: solved.iter().map(|s| s.pair_norm).collect(),
        condition_b: Vec::new(),
        condition_c: Vec::new(),
        condition_c_prime: Vec::new(),
        strong_convergence: Vec::new(),
        energy_gap: Vec::new(),
        lambda_estimates: Vec::new(),
        hypothesis_reports: Vec::new(),
        failure,
        levels: solved,
    };
    diagnostics(spec, hierarchy, &mut report)?;
    Ok(report)
}

fn diagnostics(spec: &ProblemSpec, hierarchy: &RefinementHierarchy, report: &mut SolveReport) -> Result<()> {
    let Some(finest) = report.levels.last() else {
        return Ok(());
    };
    let top = finest.level();
    let space = P1Space::new(hierarchy.mesh(top)?);
    let star = finest.state.clone();
    let battery: Vec<Vec<f64>> = (0..hierarchy.mesh(0)?.num_dofs())
        .map(|k| {
            let mut e = vec![0.0; hierarchy.mesh(0)?.num_dofs()];
            e[k] = 1.0;
            hierarchy.prolongate(&e, 0, top)
        })
        .collect::<Result<_>>()?;
    for s in &report.levels {
        let l = s.level();
        let lifted = PairState {
            u: FemFunction::new(top, hierarchy.prolongate(&s.state.u.coeffs, l, top)?),
            v: FemFunction::new(top, hierarchy.prolongate(&s.state.v.coeffs, l, top)?),
        };
        let du = lifted.u.axpy(-1.0, &star.u);
        let dv = lifted.v.axpy(-1.0, &star.v);
        let r = residual_a(&space, spec, &lifted)?;
        let b = battery
            .iter()
            .map(|g| dot(&r.r_u, g).abs().max(dot(&r.r_v, g).abs()))
            .fold(0.0, f64::max);
        let a_u = apply_competing(&space, &lifted.u, spec.p[0], spec.q[0], spec.mu[0])?;
        let a_v = apply_competing(&space, &lifted.v, spec.p[1], spec.q[1], spec.mu[1])?;
        report.condition_b.push(b);
        report.condition_c.push(r.pair_with(&du.coeffs, &dv.coeffs));
        report
            .condition_c_prime
            .push(dot(&a_u, &du.coeffs) + dot(&a_v, &dv.coeffs));
        report
            .strong_convergence
            .push(space.seminorm_w1p(&du, spec.p[0])? + space.seminorm_w1p(&dv, spec.p[1])?);
        let own = P1Space::new(hierarchy.mesh(l)?);
        let gaps = energy_identity(&own, spec, &s.state)?;
        report
            .energy_gap
            .push(gaps.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(())
}
