//! TOML run configuration: parsing, validation, overrides and conversion
//! into solver inputs.
//!
//! Unknown keys are errors. Exponent constraints are checked at parse time
//! and reported with the line and column of the offending key.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::galerkin::SolveOptions;
use crate::hypotheses::{H2Choice, HypothesisConstants, PrimeConstants, SamplingPlan};
use crate::mesh::{Mesh, RefinementHierarchy};
use crate::newton::NewtonOptions;
use crate::operators::{validate_exponents, ProblemSpec};
use crate::reactions::{build_example_reactions, ExampleReactionParams, ExpressionReaction, SpatialFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub reactions: ReactionsConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
}

fn default_output_dir() -> String {
    "pqg-output".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    UnitSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub cells_per_side: usize,
    /// Number of solved levels, `0..levels`.
    pub levels: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            kind: DomainKind::UnitSquare,
            cells_per_side: 2,
            levels: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_p")]
    pub p: Spanned<[f64; 2]>,
    #[serde(default = "default_q")]
    pub q: Spanned<[f64; 2]>,
    #[serde(default = "default_mu")]
    pub mu: [f64; 2],
}

fn default_p() -> Spanned<[f64; 2]> {
    Spanned::new(0..0, [1.8, 1.7])
}

fn default_q() -> Spanned<[f64; 2]> {
    Spanned::new(0..0, [1.3, 1.2])
}

fn default_mu() -> [f64; 2] {
    [0.3, 0.3]
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            p: default_p(),
            q: default_q(),
            mu: default_mu(),
        }
    }
}

impl ProblemConfig {
    pub fn p(&self) -> [f64; 2] {
        *self.p.get_ref()
    }

    pub fn q(&self) -> [f64; 2] {
        *self.q.get_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReactionsConfig {
    /// The built-in pair; unset fields take the built-in defaults.
    Example44 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<[f64; 2]>,
        /// Expressions in `x`, `y`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<[String; 2]>,
    },
    Expression { f1: String, f2: String },
}

impl Default for ReactionsConfig {
    fn default() -> Self {
        ReactionsConfig::Example44 {
            alpha: None,
            beta: None,
            h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimeConfig {
    pub d: [f64; 2],
    pub r: [f64; 2],
    pub s: [f64; 2],
    pub sigma: [String; 2],
}

/// Hypothesis constants. For the built-in pair, `growth`, `sigma` and
/// `gamma` default to the certified values and override them when set;
/// expression reactions must provide all three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default = "default_c")]
    pub c: [f64; 2],
    #[serde(default = "default_d")]
    pub d: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prime: Option<PrimeConfig>,
}

fn default_c() -> [f64; 2] {
    H2Choice::default().c
}

fn default_d() -> [f64; 2] {
    H2Choice::default().d
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            c: default_c(),
            d: default_d(),
            growth: None,
            sigma: None,
            gamma: None,
            prime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub stages: usize,
    pub max_halvings: usize,
    pub ptc_steps: usize,
    pub initial_amplitude: f64,
    /// Solve even when a hypothesis check fails.
    pub override_hypotheses: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let n = NewtonOptions::default();
        Self {
            tol: 1e-8,
            max_iterations: n.max_iterations,
            eps_start: n.eps_start,
            eps_end: n.eps_end,
            stages: n.stages,
            max_halvings: n.max_halvings,
            ptc_steps: n.ptc_steps,
            initial_amplitude: 0.0,
            override_hypotheses: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub samples: usize,
    pub max_magnitude: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = SamplingPlan::default();
        Self {
            samples: s.samples,
            max_magnitude: s.max_magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub inner_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let e = EigenOptions::default();
        Self {
            tol: e.tol,
            max_iterations: e.max_iterations,
            inner_tol: e.newton.tol,
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn at(text: &str, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> Error {
    let (line, col) = line_col(text, span.start);
    Error::Config(format!("line {line}, column {col}: {msg}"))
}

fn positive(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v:?}")))
    }
}

fn spatial(name: &str, src: &str) -> Result<SpatialFn> {
    Expression::parse_spatial(src)
        .map(SpatialFn::from_expression)
        .map_err(|e| Error::Config(format!("{name}: {e}")))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => at(text, span, e.message()),
        None => Error::Config(e.message().to_string()),
    })?;
    cfg.validate_with_source(text)?;
    Ok(cfg)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            output_dir: default_output_dir(),
            domain: DomainConfig::default(),
            problem: ProblemConfig::default(),
            reactions: ReactionsConfig::default(),
            constants: ConstantsConfig::default(),
            solver: SolverConfig::default(),
            sampling: SamplingConfig::default(),
            eigen: EigenConfig::default(),
        }
    }
}

impl RunConfig {
    /// Canonical TOML form; parsing it yields an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source("")
    }

    fn validate_with_source(&self, text: &str) -> Result<()> {
        let p = self.problem.p();
        let q = self.problem.q();
        // point at q when only q is at fault
        if let Err(e) = validate_exponents(p, q) {
            let p_ok = p.iter().all(|v| *v > 1.0 && *v < 2.0);
            let span = if p_ok { self.problem.q.span() } else { self.problem.p.span() };
            return Err(at(text, span, e));
        }
        if !self.problem.mu.iter().all(|m| m.is_finite()) {
            return Err(Error::Config(format!("mu must be finite, got {:?}", self.problem.mu)));
        }
        if self.domain.cells_per_side == 0 {
            return Err(Error::Config("domain.cells_per_side must be at least 1".into()));
        }
        if self.domain.levels < 2 {
            return Err(Error::Config(format!(
                "domain.levels = {} but at least 2 levels are needed",
                self.domain.levels
            )));
        }
        positive("constants.c", &self.constants.c)?;
        positive("constants.d", &self.constants.d)?;
        if let Some(g) = &self.constants.growth {
            positive("constants.growth", g)?;
        }
        for (name, fs) in [("constants.sigma", &self.constants.sigma), ("constants.gamma", &self.constants.gamma)] {
            if let Some(fs) = fs {
                for f in fs {
                    spatial(name, f)?;
                }
            }
        }
        if let Some(pr) = &self.constants.prime {
            self.prime_constants(pr)?;
        }
        match &self.reactions {
            ReactionsConfig::Example44 { .. } => {
                self.example_params()?.validate(p).map_err(|e| Error::Config(e.to_string()))?;
            }
            ReactionsConfig::Expression { f1, f2 } => {
                ExpressionReaction::parse(f1).map_err(|e| Error::Config(format!("reactions.f1: {e}")))?;
                ExpressionReaction::parse(f2).map_err(|e| Error::Config(format!("reactions.f2: {e}")))?;
                if self.constants.growth.is_none() || self.constants.sigma.is_none() || self.constants.gamma.is_none() {
                    return Err(Error::Config(
                        "expression reactions need constants.growth, constants.sigma and constants.gamma".into(),
                    ));
                }
            }
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.eps_start > 0.0 && s.eps_end > 0.0 && s.eps_end <= s.eps_start) {
            return Err(Error::Config(
                "solver needs tol > 0 and 0 < eps_end <= eps_start".into(),
            ));
        }
        if s.stages == 0 || s.max_iterations == 0 {
            return Err(Error::Config("solver.stages and solver.max_iterations must be at least 1".into()));
        }
        if !s.initial_amplitude.is_finite() {
            return Err(Error::Config("solver.initial_amplitude must be finite".into()));
        }
        if self.sampling.samples == 0 || !(self.sampling.max_magnitude >= 1e-4) {
            return Err(Error::Config(
                "sampling needs samples >= 1 and max_magnitude >= 1e-4".into(),
            ));
        }
        let e = &self.eigen;
        if !(e.tol > 0.0 && e.inner_tol > 0.0) || e.max_iterations == 0 {
            return Err(Error::Config("eigen tolerances must be positive".into()));
        }
        Ok(())
    }

    fn example_params(&self) -> Result<ExampleReactionParams> {
        let ReactionsConfig::Example44 { alpha, beta, h } = &self.reactions else {
            return Err(Error::Config("reactions are not the built-in pair".into()));
        };
        let mut params = ExampleReactionParams::defaults(self.problem.p());
        if let Some(a) = alpha {
            params.alpha = *a;
        }
        if let Some(b) = beta {
            params.beta = *b;
        }
        if let Some([h1, h2]) = h {
            params.h = [spatial("reactions.h", h1)?, spatial("reactions.h", h2)?];
        }
        Ok(params)
    }

    fn prime_constants(&self, pr: &PrimeConfig) -> Result<PrimeConstants> {
        positive("constants.prime.d", &pr.d)?;
        let out = PrimeConstants {
            d: pr.d,
            r: pr.r,
            s: pr.s,
            sigma: [
                spatial("constants.prime.sigma", &pr.sigma[0])?,
                spatial("constants.prime.sigma", &pr.sigma[1])?,
            ],
        };
        let probe = HypothesisConstants {
            prime: Some(out.clone()),
            ..HypothesisConstants::trivial([1.0; 2], [1.0; 2])
        };
        probe
            .validate(self.problem.p())
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(out)
    }

    pub fn hierarchy(&self) -> Result<RefinementHierarchy> {
        RefinementHierarchy::unit_square(self.domain.cells_per_side, self.domain.levels - 1)
    }

    pub fn h2_choice(&self) -> H2Choice {
        H2Choice {
            c: self.constants.c,
            d: self.constants.d,
        }
    }

    /// Builds the problem and its hypothesis constants; `mesh` is used for
    /// the `‖γ_i‖_1` quadratures.
    pub fn build(&self, mesh: &Mesh) -> Result<(ProblemSpec, HypothesisConstants)> {
        let p = self.problem.p();
        let (f1, f2, mut constants) = match &self.reactions {
            ReactionsConfig::Example44 { .. } => {
                build_example_reactions(&self.example_params()?, p, &self.h2_choice(), mesh)?
            }
            ReactionsConfig::Expression { f1, f2 } => {
                let c = HypothesisConstants::trivial(self.constants.c, self.constants.d);
                (
                    Arc::new(ExpressionReaction::parse(f1)?) as _,
                    Arc::new(ExpressionReaction::parse(f2)?) as _,
                    c,
                )
            }
        };
        if let Some(g) = self.constants.growth {
            constants.growth = g;
        }
        if let Some([s1, s2]) = &self.constants.sigma {
            constants.sigma = [spatial("constants.sigma", s1)?, spatial("constants.sigma", s2)?];
        }
        if let Some([g1, g2]) = &self.constants.gamma {
            constants.gamma = [spatial("constants.gamma", g1)?, spatial("constants.gamma", g2)?];
            constants.gamma_l1 = [constants.gamma[0].l1_norm(mesh), constants.gamma[1].l1_norm(mesh)];
        }
        if let Some(pr) = &self.constants.prime {
            constants.prime = Some(self.prime_constants(pr)?);
        }
        let spec = ProblemSpec::new(p, self.problem.q(), self.problem.mu, [f1, f2])?;
        Ok((spec, constants))
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tol: s.tol,
            newton: NewtonOptions {
                tol: s.tol,
                max_iterations: s.max_iterations,
                eps_start: s.eps_start,
                eps_end: s.eps_end,
                stages: s.stages,
                max_halvings: s.max_halvings,
                ptc_steps: s.ptc_steps,
            },
            initial_amplitude: s.initial_amplitude,
        }
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            samples: self.sampling.samples,
            max_magnitude: self.sampling.max_magnitude,
            seed: self.seed,
        }
    }

    pub fn eigen_options(&self) -> EigenOptions {
        let base = EigenOptions::default();
        EigenOptions {
            tol: self.eigen.tol,
            max_iterations: self.eigen.max_iterations,
            newton: NewtonOptions {
                tol: self.eigen.inner_tol,
                ..base.newton
            },
        }
    }
}

/// Applies `key.path=value` overrides to a document. Values are read as
/// TOML values when possible and as strings otherwise.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    if overrides.is_empty() {
        return Ok(text.to_string());
    }
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => at(text, span, e.message()),
        None => Error::Config(e.message().to_string()),
    })?;
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            return Err(Error::Config(format!("override `{o}` is not of the form key=value")));
        };
        let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let path: Vec<&str> = key.trim().split('.').collect();
        let mut table = &mut doc;
        for part in &path[..path.len() - 1] {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
        }
        table.insert(path[path.len() - 1].to_string(), value);
    }
    toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.solver.tol, 1e-8);
        assert_eq!(cfg.solver.stages, 6);
        assert_eq!(cfg.sampling.samples, 100_000);
    }

    #[test]
    fn exponent_errors_carry_positions() {
        let text = "[problem]\np = [2.5, 1.7]\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 2, column 5"), "{e}");
        assert!(e.contains("N=2"), "{e}");
        let text = "[problem]\np = [1.8, 1.7]\nq = [1.9, 1.2]\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(e.contains("q1 = 1.9 >= p1 = 1.8 violates 1<q_i<p_i<N=2"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("[solver]\ntoll = 1e-8\n").is_err());
        assert!(parse_config("colour = 3\n").is_err());
        assert!(parse_config("[reactions]\nkind = \"example44\"\ngamma = 1\n").is_err());
    }

    #[test]
    fn syntax_errors_have_positions() {
        let e = parse_config("[problem]\nmu = [0.3,\n").unwrap_err().to_string();
        assert!(e.contains("line "), "{e}");
    }

    #[test]
    fn expression_reactions_need_constants() {
        let text = "[reactions]\nkind = \"expression\"\nf1 = \"1\"\nf2 = \"0\"\n";
        assert!(parse_config(text).is_err());
        let text = format!(
            "{text}[constants]\ngrowth = [1.0, 1.0]\nsigma = [\"1\", \"1\"]\ngamma = [\"0\", \"0\"]\n"
        );
        let cfg = parse_config(&text).unwrap();
        let mesh = crate::mesh::generate_unit_square(2).unwrap();
        let (spec, c) = cfg.build(&mesh).unwrap();
        assert_eq!(c.gamma_l1, [0.0, 0.0]);
        assert_eq!(spec.mu, [0.3, 0.3]);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = apply_overrides("", &["problem.mu=[-0.5, -0.5]".into(), "output_dir=out dir".into()]).unwrap();
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.problem.mu, [-0.5, -0.5]);
        assert_eq!(cfg.output_dir, "out dir");
        assert!(apply_overrides("", &["novalue".into()]).is_err());
    }

    #[test]
    fn round_trip_of_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(parse_config(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
