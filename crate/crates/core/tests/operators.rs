//! Assembly checks against independent re-implementations.

use std::sync::Arc;

use nalgebra::DMatrix;
use pq_galerkin::operators::{
    apply_competing, assemble_nemytskii, jacobian, laplace_stiffness, pairing_with_function, residual_a,
};
use pq_galerkin::hypotheses::growth_bracket;
use pq_galerkin::reactions::{
    build_example_reactions, zero_reaction, ExampleReactionParams, FnReaction, Partials, ReactionArgs,
};
use pq_galerkin::hypotheses::H2Choice;
use pq_galerkin::quadrature::QuadratureRule;
use pq_galerkin::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_fn(space: &P1Space, rng: &mut ChaCha8Rng) -> FemFunction {
    FemFunction::new(
        space.level(),
        (0..space.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

/// Gradient of the P1 function on triangle `k` from vertex coordinates.
fn brute_gradient(mesh: &Mesh, f: &FemFunction, k: usize) -> [f64; 2] {
    let t = mesh.triangles()[k];
    let x = mesh.triangle_points(k);
    let val = |i: usize| mesh.dof_of_vertex(t[i]).map_or(0.0, |d| f.coeffs[d]);
    let (a, b, c) = (val(0), val(1), val(2));
    let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
    let gx = ((b - a) * (x[2][1] - x[0][1]) - (c - a) * (x[1][1] - x[0][1])) / det;
    let gy = ((c - a) * (x[1][0] - x[0][0]) - (b - a) * (x[2][0] - x[0][0])) / det;
    [gx, gy]
}

fn hat_gradient(mesh: &Mesh, k: usize, local: usize) -> [f64; 2] {
    let mut e = FemFunction::zeros(0, mesh.num_dofs());
    let v = mesh.triangles()[k][local];
    let Some(d) = mesh.dof_of_vertex(v) else {
        return [0.0, 0.0];
    };
    e.coeffs[d] = 1.0;
    brute_gradient(mesh, &e, k)
}

#[test]
fn competing_operator_matches_brute_force_assembly() {
    let mesh = refine_uniform(&generate_unit_square(2).unwrap()).unwrap();
    let space = P1Space::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_fn(&space, &mut rng);
    let (p, q, mu) = (1.8, 1.3, 0.7);
    let fast = apply_competing(&space, &f, p, q, mu).unwrap();
    let mut slow = vec![0.0; mesh.num_dofs()];
    for k in 0..mesh.num_triangles() {
        let g = brute_gradient(&mesh, &f, k);
        let m = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let coef = if m == 0.0 { 0.0 } else { m.powf(p - 2.0) - mu * m.powf(q - 2.0) };
        for local in 0..3 {
            if let Some(d) = mesh.dof_of_vertex(mesh.triangles()[k][local]) {
                let gp = hat_gradient(&mesh, k, local);
                slow[d] += mesh.triangle_area(k) * coef * (g[0] * gp[0] + g[1] * gp[1]);
            }
        }
    }
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn pairing_rejects_level_mismatch() {
    let h = RefinementHierarchy::unit_square(2, 1).unwrap();
    let space = P1Space::new(h.mesh(1).unwrap());
    let r = vec![0.0; space.num_dofs()];
    let g = FemFunction::zeros(0, 5);
    assert!(pairing_with_function(&space, &r, &g).is_err());
    assert_eq!(pairing_with_function(&space, &r, &space.zero()).unwrap(), 0.0);
}

/// `f1` of the built-in pair with an arbitrary `β1`, written out directly.
fn example_f1(beta: f64, a1: f64) -> impl Fn(&ReactionArgs) -> f64 + Send + Sync {
    move |a: &ReactionArgs| {
        let s = a.s;
        let lead = if s == 0.0 { 0.0 } else { s.signum() * s.abs().sqrt() };
        let xi = a.xi[0].hypot(a.xi[1]);
        let nu = a.nu[0].hypot(a.nu[1]);
        lead + s / (s * s + 1.0) * (a.t.abs().powf(a1) + xi.powf(beta) + nu.powf(a1))
    }
}

/// `∫ f φ_k` with the degree-4 rule on each of the `m²` congruent
/// sub-triangles of every element.
fn refined_nemytskii(
    mesh: &Mesh,
    f: &dyn Fn(&ReactionArgs) -> f64,
    u: &FemFunction,
    v: &FemFunction,
    m: usize,
) -> Vec<f64> {
    let rule = QuadratureRule::degree4();
    let mut out = vec![0.0; mesh.num_dofs()];
    let space = P1Space::new(mesh);
    for k in 0..mesh.num_triangles() {
        let xi = brute_gradient(mesh, u, k);
        let nu = brute_gradient(mesh, v, k);
        let x = mesh.triangle_points(k);
        let area = mesh.triangle_area(k) / (m * m) as f64;
        // sub-triangles in barycentric lattice coordinates
        let mut subs = Vec::new();
        for i in 0..m {
            for j in 0..m - i {
                let b = |a: usize, c: usize| [a as f64 / m as f64, c as f64 / m as f64];
                subs.push([b(i, j), b(i + 1, j), b(i, j + 1)]);
                if i + j + 1 < m {
                    subs.push([b(i + 1, j), b(i + 1, j + 1), b(i, j + 1)]);
                }
            }
        }
        for s in subs {
            for (l, w) in rule.points().iter().zip(rule.weights()) {
                // barycentric (λ1, λ2) of the element at this point
                let l1 = l[0] * s[0][0] + l[1] * s[1][0] + l[2] * s[2][0];
                let l2 = l[0] * s[0][1] + l[1] * s[1][1] + l[2] * s[2][1];
                let bary = [1.0 - l1 - l2, l1, l2];
                let pt = [
                    bary[0] * x[0][0] + bary[1] * x[1][0] + bary[2] * x[2][0],
                    bary[0] * x[0][1] + bary[1] * x[1][1] + bary[2] * x[2][1],
                ];
                let args = ReactionArgs {
                    x: pt,
                    s: space.value_at(u, k, bary),
                    t: space.value_at(v, k, bary),
                    xi,
                    nu,
                };
                let val = f(&args) * 2.0 * area * w;
                for local in 0..3 {
                    if let Some(d) = mesh.dof_of_vertex(mesh.triangles()[k][local]) {
                        out[d] += val * bary[local];
                    }
                }
            }
        }
    }
    out
}

#[test]
fn example_nemytskii_matches_refined_quadrature() {
    let mesh = refine_uniform(&generate_unit_square(2).unwrap()).unwrap();
    let space = P1Space::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // nonnegative coefficients: |s|^(1/2) is singular only on the boundary,
    // where the 100x oracle is itself accurate to ~1e-6
    let positive = |rng: &mut ChaCha8Rng| {
        FemFunction::new(1, (0..space.num_dofs()).map(|_| rng.random_range(0.0..1.0)).collect())
    };
    let u = positive(&mut rng);
    let v = positive(&mut rng);
    let state = PairState::new(u.clone(), v.clone()).unwrap();
    let a1 = 1.7 * 17.0 / 18.0;
    for beta in [0.5, 1.36] {
        let f = example_f1(beta, a1);
        let reaction = FnReaction::new("f1", example_f1(beta, a1));
        let fast = assemble_nemytskii(&space, &reaction, &state).unwrap();
        let slow = refined_nemytskii(&mesh, &f, &u, &v, 10);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "beta {beta}: {a} vs {b}");
        }
    }
}

/// Sign-changing states put the square-root singularity inside elements;
/// the 100x oracle is then off by a few 1e-4 per entry, so the reference
/// is 6400x finer and the comparison is in the max norm.
#[test]
fn sign_changing_nemytskii_matches_fine_reference() {
    let mesh = refine_uniform(&generate_unit_square(2).unwrap()).unwrap();
    let space = P1Space::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = random_fn(&space, &mut rng);
    let v = random_fn(&space, &mut rng);
    let state = PairState::new(u.clone(), v.clone()).unwrap();
    let a1 = 1.7 * 17.0 / 18.0;
    for beta in [0.5, 1.36] {
        let f = example_f1(beta, a1);
        let fast = assemble_nemytskii(&space, &FnReaction::new("f1", example_f1(beta, a1)), &state).unwrap();
        let truth = refined_nemytskii(&mesh, &f, &u, &v, 80);
        let err = fast.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = truth.iter().map(|b| b.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4 * scale, "beta {beta}: {err:e} vs {scale}");
    }
}

#[test]
fn example_nemytskii_respects_growth_bound() {
    let p = [1.8, 1.7];
    let h = RefinementHierarchy::unit_square(2, 2).unwrap();
    let mesh = h.mesh(2).unwrap();
    let space = P1Space::new(mesh);
    let (f1, f2, c) =
        build_example_reactions(&ExampleReactionParams::defaults(p), p, &H2Choice::default(), mesh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for scale in [0.1, 1.0, 10.0, 100.0] {
        let u = random_fn(&space, &mut rng).scaled(scale);
        let v = random_fn(&space, &mut rng).scaled(scale);
        let state = PairState::new(u.clone(), v.clone()).unwrap();
        for (eq, f) in [&f1, &f2].into_iter().enumerate() {
            let n = assemble_nemytskii(&space, f.as_ref(), &state).unwrap();
            let bound = FnReaction::new("bound", {
                let sigma = c.sigma[eq].clone();
                let growth = c.growth[eq];
                move |a: &ReactionArgs| growth * growth_bracket(p, eq, a) + sigma.eval(a.x)
            });
            let b = assemble_nemytskii(&space, &bound, &state).unwrap();
            for (x, y) in n.iter().zip(&b) {
                assert!(x.abs() <= *y * (1.0 + 1e-12), "scale {scale}: {x} > {y}");
            }
        }
    }
}

/// Linear reaction with exact partials: `f1 = 2s + t/2 + 0.3 ξ1`,
/// `f2 = s − t + 0.2 ν2`.
struct Linear(usize);

impl Reaction for Linear {
    fn eval(&self, a: &ReactionArgs) -> f64 {
        if self.0 == 0 {
            2.0 * a.s + 0.5 * a.t + 0.3 * a.xi[0]
        } else {
            a.s - a.t + 0.2 * a.nu[1]
        }
    }

    fn partials(&self, _a: &ReactionArgs) -> Option<Partials> {
        Some(if self.0 == 0 {
            Partials {
                ds: 2.0,
                dt: 0.5,
                dxi: [0.3, 0.0],
                dnu: [0.0, 0.0],
            }
        } else {
            Partials {
                ds: 1.0,
                dt: -1.0,
                dxi: [0.0, 0.0],
                dnu: [0.0, 0.2],
            }
        })
    }

    fn describe(&self) -> String {
        format!("linear {}", self.0)
    }
}

#[test]
fn linear_jacobian_is_stiffness_minus_coupling() {
    let mesh = refine_uniform(&generate_unit_square(2).unwrap()).unwrap();
    let space = P1Space::new(&mesh);
    let n = mesh.num_dofs();
    // p = q = 2, μ = 0 lies outside the validated range, so build it directly
    let spec = ProblemSpec {
        p: [2.0, 2.0],
        q: [2.0, 2.0],
        mu: [0.0, 0.0],
        reactions: [Arc::new(Linear(0)), Arc::new(Linear(1))],
    };
    // exact P1 mass and convection-type matrices
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut conv = [DMatrix::<f64>::zeros(n, n), DMatrix::<f64>::zeros(n, n)];
    for k in 0..mesh.num_triangles() {
        let area = mesh.triangle_area(k);
        let t = mesh.triangles()[k];
        for i in 0..3 {
            let Some(di) = mesh.dof_of_vertex(t[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = mesh.dof_of_vertex(t[j]) else { continue };
                mass[(di, dj)] += area / 12.0 * if i == j { 2.0 } else { 1.0 };
                let g = hat_gradient(&mesh, k, j);
                conv[0][(di, dj)] += g[0] * area / 3.0;
                conv[1][(di, dj)] += g[1] * area / 3.0;
            }
        }
    }
    let stiff = laplace_stiffness(&space).unwrap().to_dense();
    let mut expect = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let k = stiff[i][j];
            expect[(i, j)] = k - 2.0 * mass[(i, j)] - 0.3 * conv[0][(i, j)];
            expect[(i, n + j)] = -0.5 * mass[(i, j)];
            expect[(n + i, j)] = -mass[(i, j)];
            expect[(n + i, n + j)] = k + mass[(i, j)] - 0.2 * conv[1][(i, j)];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..2 {
        let state = PairState::new(random_fn(&space, &mut rng), random_fn(&space, &mut rng)).unwrap();
        let j = jacobian(&space, &spec, &state, 0.0).unwrap().to_dense();
        for a in 0..2 * n {
            for b in 0..2 * n {
                assert!((j[a][b] - expect[(a, b)]).abs() <= 1e-12, "({a},{b})");
            }
        }
    }
}

#[test]
fn jacobian_matches_directional_finite_differences() {
    let h = RefinementHierarchy::unit_square(2, 2).unwrap();
    let mesh = h.mesh(2).unwrap();
    let space = P1Space::new(mesh);
    let p = [1.8, 1.7];
    let (f1, f2, _) =
        build_example_reactions(&ExampleReactionParams::defaults(p), p, &H2Choice::default(), mesh).unwrap();
    let spec = ProblemSpec::new(p, [1.3, 1.2], [0.4, -0.3], [f1, f2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let state = PairState::new(random_fn(&space, &mut rng), random_fn(&space, &mut rng)).unwrap();
    let dir = PairState::new(random_fn(&space, &mut rng), random_fn(&space, &mut rng)).unwrap();
    let j = jacobian(&space, &spec, &state, 1e-8).unwrap();
    let jv = j.matvec(&dir.to_vec());
    let step = 1e-6;
    let shifted = |t: f64| {
        let y: Vec<f64> = state.to_vec().iter().zip(dir.to_vec()).map(|(a, b)| a + t * b).collect();
        residual_a(&space, &spec, &PairState::from_vec(2, &y)).unwrap().to_vec()
    };
    let (rp, rm) = (shifted(step), shifted(-step));
    let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * step)).collect();
    let num: f64 = jv.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(num / den <= 1e-5, "relative error {}", num / den);
}

#[test]
fn pure_p_laplace_jacobian_is_symmetric_psd() {
    let h = RefinementHierarchy::unit_square(2, 1).unwrap();
    let space = P1Space::new(h.mesh(1).unwrap());
    let spec = ProblemSpec::new([1.8, 1.7], [1.3, 1.2], [0.0, 0.0], [zero_reaction(), zero_reaction()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for eps in [1e-8, 1e-2, 0.0] {
        let state = PairState::new(random_fn(&space, &mut rng), random_fn(&space, &mut rng)).unwrap();
        let j = jacobian(&space, &spec, &state, eps).unwrap().to_dense();
        let n = j.len();
        let m = DMatrix::from_fn(n, n, |a, b| j[a][b]);
        assert!((&m - m.transpose()).amax() <= 1e-12 * m.amax());
        let min = m.symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-10, "eps {eps}: min eigenvalue {min}");
    }
}

