//! Hypothesis audits on the built-in pair and the a-priori radius.

use std::sync::Arc;

use pq_galerkin::eigen::{estimate_lambda1, EigenOptions};
use pq_galerkin::hypotheses::{
    apriori_radius, check_h1, check_h1prime, check_h2, draw_samples, H2Choice, HypothesisConstants, LambdaTrend,
    PrimeConstants, RadiusInputs, SamplingPlan,
};
use pq_galerkin::reactions::{
    build_example_reactions, critical_exponent, ExampleReactionParams, FnReaction, Reaction, SpatialFn,
};
use pq_galerkin::*;

const P: [f64; 2] = [1.8, 1.7];

fn example(mesh: &Mesh) -> (ReactionHandle, ReactionHandle, HypothesisConstants) {
    build_example_reactions(&ExampleReactionParams::defaults(P), P, &H2Choice::default(), mesh).unwrap()
}

fn plan(samples: usize) -> SamplingPlan {
    SamplingPlan {
        samples,
        ..Default::default()
    }
}

#[test]
fn strengthened_growth_holds_and_implies_growth() {
    let mesh = generate_unit_square(2).unwrap();
    let (f1, f2, _) = example(&mesh);
    let samples = draw_samples(&mesh, &plan(100_000));
    let r = P.map(|p| 0.99 * critical_exponent(p));
    let prime = PrimeConstants {
        d: [2.0, 2.0],
        r,
        s: r,
        sigma: [SpatialFn::constant(3.0), SpatialFn::constant(3.0)],
    };
    let reactions = [f1.as_ref(), f2.as_ref()];
    let strong = check_h1prime(reactions, P, &prime, &samples).unwrap();
    assert!(strong.passed, "{}", strong.summary());
    let (growth, sigma) = HypothesisConstants::implied_growth(&prime);
    let weak = check_h1(reactions, P, growth, &sigma, &samples).unwrap();
    assert!(weak.passed, "{}", weak.summary());
}

#[test]
fn implication_holds_for_a_passing_toy_reaction() {
    // |s|^(p1*/r') is exactly on the strengthened bound
    let mesh = generate_unit_square(2).unwrap();
    let samples = draw_samples(&mesh, &plan(20_000));
    let r = [4.0, 4.0];
    let e = critical_exponent(P[0]) * 3.0 / 4.0;
    let f: Arc<dyn Reaction> = Arc::new(FnReaction::new("edge", move |a| a.s.abs().powf(e)));
    let prime = PrimeConstants {
        d: [1.0, 1.0],
        r,
        s: r,
        sigma: [SpatialFn::constant(0.5), SpatialFn::constant(0.5)],
    };
    assert!(check_h1prime([f.as_ref(), f.as_ref()], P, &prime, &samples).unwrap().passed);
    let (growth, sigma) = HypothesisConstants::implied_growth(&prime);
    assert!(check_h1([f.as_ref(), f.as_ref()], P, growth, &sigma, &samples).unwrap().passed);
}

#[test]
fn dissipativity_passes_for_the_builtin_pair() {
    let h = RefinementHierarchy::unit_square(2, 3).unwrap();
    let mesh = h.mesh(3).unwrap();
    let (f1, f2, constants) = example(mesh);
    let opts = EigenOptions::default();
    let lam = |level| P.map(|p| estimate_lambda1(p, &h, level, &opts).unwrap().lambda);
    let trend = LambdaTrend {
        fine: lam(3),
        coarse: Some(lam(0)),
    };
    let samples = draw_samples(mesh, &plan(50_000));
    let report = check_h2([f1.as_ref(), f2.as_ref()], P, &constants, &trend, &samples).unwrap();
    assert!(report.passed, "{}", report.summary());
    assert!(report.coercivity_margin.unwrap() > 0.0);
}

fn base_inputs() -> RadiusInputs {
    RadiusInputs {
        p: P,
        q: [1.3, 1.2],
        mu: [0.3, 0.3],
        c: [0.1, 0.1],
        d: [0.2, 0.2],
        lambda: [18.0, 17.0],
        gamma_l1_sum: 1.5,
        domain_measure: 1.0,
    }
}

#[test]
fn radius_is_monotone_in_mu_and_budget() {
    let mut prev = 0.0;
    for mu in [0.0, 0.2, 0.5, 1.0, 2.0] {
        let r = apriori_radius(&RadiusInputs {
            mu: [mu, -mu],
            ..base_inputs()
        })
        .unwrap();
        assert!(r >= prev, "mu {mu}: {r} < {prev}");
        prev = r;
    }
    let mut prev = 0.0;
    for c in [0.1, 1.0, 5.0, 50.0] {
        let r = apriori_radius(&RadiusInputs {
            gamma_l1_sum: c,
            ..base_inputs()
        })
        .unwrap();
        assert!(r >= prev);
        prev = r;
    }
}

#[test]
fn radius_floor_and_rejection() {
    let none = RadiusInputs {
        mu: [0.0, 0.0],
        gamma_l1_sum: 0.0,
        ..base_inputs()
    };
    assert_eq!(apriori_radius(&none).unwrap(), 1.0);
    let bad = RadiusInputs {
        c: [0.6, 0.6],
        ..base_inputs()
    };
    assert!(matches!(apriori_radius(&bad), Err(Error::CoercivityViolated { .. })));
}
