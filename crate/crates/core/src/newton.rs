//! Damped Newton with ε-continuation and a pseudo-transient fallback for
//! regularized nonlinear systems `R_ε(y) = 0`.

use crate::error::{Error, Result};
use crate::linalg::{norm2, SparseMatrix};

/// A nonlinear system whose residual and Jacobian depend on a
/// regularization parameter `ε ≥ 0`; `ε = 0` is the true residual.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;

    fn residual(&self, y: &[f64], eps: f64) -> Result<Vec<f64>>;

    fn jacobian(&self, y: &[f64], eps: f64) -> Result<SparseMatrix>;

    /// Convergence measure compared against the tolerance.
    fn measure(&self, r: &[f64]) -> f64;

    /// Merit function for the line search; defaults to the Euclidean norm.
    fn merit(&self, r: &[f64]) -> f64 {
        norm2(r)
    }

    /// Maps an iterate back into the admissible set; returns true if it moved.
    fn project(&self, _y: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub stages: usize,
    pub max_halvings: usize,
    pub ptc_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 50,
            eps_start: 1e-2,
            eps_end: 1e-8,
            stages: 6,
            max_halvings: 30,
            ptc_steps: 200,
        }
    }
}

impl NewtonOptions {
    /// Geometric schedule from `eps_start` to `eps_end`.
    pub fn schedule(&self) -> Vec<f64> {
        if self.stages <= 1 {
            return vec![self.eps_end];
        }
        let ratio = self.eps_end / self.eps_start;
        (0..self.stages)
            .map(|k| self.eps_start * ratio.powf(k as f64 / (self.stages - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub y: Vec<f64>,
    /// Measure of the true (`ε = 0`) residual at `y`.
    pub residual: f64,
    pub iterations: usize,
    pub epsilon_final: f64,
    /// True-residual measure after every accepted step.
    pub history: Vec<f64>,
    pub used_fallback: bool,
    pub projections: usize,
}

struct Run<'a, S: NonlinearSystem + ?Sized> {
    sys: &'a S,
    opts: NewtonOptions,
    y: Vec<f64>,
    iterations: usize,
    history: Vec<f64>,
    best: Vec<f64>,
    best_residual: f64,
    used_fallback: bool,
    projections: usize,
}

enum StageEnd {
    Converged,
    Stalled,
}

impl<'a, S: NonlinearSystem + ?Sized> Run<'a, S> {
    fn record(&mut self) -> Result<f64> {
        let m = self.sys.measure(&self.sys.residual(&self.y, 0.0)?);
        self.history.push(m);
        if m < self.best_residual {
            self.best_residual = m;
            self.best.clone_from(&self.y);
        }
        Ok(m)
    }

    fn project(&mut self) -> Result<()> {
        if self.sys.project(&mut self.y)? {
            self.projections += 1;
        }
        Ok(())
    }

    /// Newton on `R_eps` with the Jacobian at `jac_eps`, until the
    /// `R_eps` measure drops below `stage_tol`.
    fn newton(&mut self, eps: f64, jac_eps: f64, stage_tol: f64) -> Result<StageEnd> {
        let mut r = self.sys.residual(&self.y, eps)?;
        let mut merit = self.sys.merit(&r);
        for _ in 0..self.opts.max_iterations {
            if self.sys.measure(&r) <= stage_tol {
                return Ok(StageEnd::Converged);
            }
            let j = self.sys.jacobian(&self.y, jac_eps)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = match j.solve(&rhs) {
                Ok(d) => d,
                Err(_) => return Ok(StageEnd::Stalled),
            };
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=self.opts.max_halvings {
                let mut trial: Vec<f64> = self.y.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
                let moved = self.sys.project(&mut trial)?;
                if let Ok(rt) = self.sys.residual(&trial, eps) {
                    let mt = self.sys.merit(&rt);
                    if mt.is_finite() && mt < merit {
                        accepted = Some((trial, rt, mt, moved));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, rt, mt, moved)) = accepted else {
                return Ok(StageEnd::Stalled);
            };
            self.y = trial;
            if moved {
                self.projections += 1;
            }
            r = rt;
            merit = mt;
            self.iterations += 1;
            self.record()?;
        }
        Ok(if self.sys.measure(&r) <= stage_tol {
            StageEnd::Converged
        } else {
            StageEnd::Stalled
        })
    }

    /// Linearly implicit pseudo-transient continuation
    /// `(D/Δt + J) δ = −R` with switched-evolution-relaxation time steps.
    fn pseudo_transient(&mut self, eps: f64, stage_tol: f64) -> Result<()> {
        self.used_fallback = true;
        let mut r = self.sys.residual(&self.y, eps)?;
        let mut merit = self.sys.merit(&r);
        let mut dt = 1e-2;
        for _ in 0..self.opts.ptc_steps {
            if self.sys.measure(&r) <= stage_tol || dt > 1e12 {
                break;
            }
            let j = self.sys.jacobian(&self.y, eps)?;
            let diag: Vec<f64> = j
                .diagonal()
                .iter()
                .map(|d| d.abs().max(1e-12) / dt)
                .collect();
            let m = j.add_diagonal(&diag)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let Ok(delta) = m.solve(&rhs) else {
                dt *= 0.1;
                continue;
            };
            let mut trial: Vec<f64> = self.y.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let moved = self.sys.project(&mut trial)?;
            let rt = match self.sys.residual(&trial, eps) {
                Ok(rt) => rt,
                Err(_) => {
                    dt *= 0.1;
                    continue;
                }
            };
            let mt = self.sys.merit(&rt);
            if !mt.is_finite() || mt > 10.0 * merit {
                dt *= 0.1;
                continue;
            }
            dt *= (merit / mt.max(1e-300)).clamp(0.1, 10.0);
            self.y = trial;
            if moved {
                self.projections += 1;
            }
            r = rt;
            merit = mt;
            self.iterations += 1;
            self.record()?;
        }
        Ok(())
    }

    fn stage(&mut self, eps: f64, jac_eps: f64, stage_tol: f64) -> Result<bool> {
        if let StageEnd::Converged = self.newton(eps, jac_eps, stage_tol)? {
            return Ok(true);
        }
        self.pseudo_transient(eps, stage_tol)?;
        Ok(matches!(self.newton(eps, jac_eps, stage_tol)?, StageEnd::Converged))
    }
}

/// Solves `R_0(y) = 0` from `y0`.
///
/// Each ε stage runs damped Newton on `R_ε` (stage tolerance `max(tol, ε)`),
/// falling back to pseudo-transient continuation when the line search
/// stalls. A final polish runs Newton on the true residual with the
/// `ε_end` Jacobian. Fails with [`Error::Stagnation`] carrying the best
/// iterate when the true residual never reaches `tol`.
pub fn solve<S: NonlinearSystem + ?Sized>(sys: &S, y0: &[f64], opts: &NewtonOptions) -> Result<NewtonOutcome> {
    if y0.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "initial guess has {} entries, system has {}",
            y0.len(),
            sys.dim()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let mut run = Run {
        sys,
        opts: *opts,
        y: y0.to_vec(),
        iterations: 0,
        history: Vec::new(),
        best: y0.to_vec(),
        best_residual: f64::INFINITY,
        used_fallback: false,
        projections: 0,
    };
    run.project()?;
    let mut eps_final = 0.0;
    if run.record()? > opts.tol {
        for eps in opts.schedule() {
            eps_final = eps;
            run.stage(eps, eps, opts.tol.max(eps))?;
            if *run.history.last().unwrap_or(&f64::INFINITY) <= opts.tol {
                break;
            }
        }
        if *run.history.last().unwrap_or(&f64::INFINITY) > opts.tol {
            run.stage(0.0, opts.eps_end, opts.tol)?;
        }
    }
    let final_residual = *run.history.last().unwrap_or(&f64::INFINITY);
    if final_residual <= opts.tol {
        return Ok(NewtonOutcome {
            y: run.y,
            residual: final_residual,
            iterations: run.iterations,
            epsilon_final: eps_final,
            history: run.history,
            used_fallback: run.used_fallback,
            projections: run.projections,
        });
    }
    Err(Error::Stagnation {
        best: run.best,
        best_residual: run.best_residual,
        iterations: run.iterations,
        history: run.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y_i^3 + y_i − b_i = 0` regularized by `ε y_i`.
    struct Cubic {
        b: Vec<f64>,
    }

    impl NonlinearSystem for Cubic {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual(&self, y: &[f64], eps: f64) -> Result<Vec<f64>> {
            Ok(y.iter().zip(&self.b).map(|(v, b)| v * v * v + v + eps * v - b).collect())
        }
        fn jacobian(&self, y: &[f64], eps: f64) -> Result<SparseMatrix> {
            let t: Vec<_> = y.iter().enumerate().map(|(i, v)| (i, i, 3.0 * v * v + 1.0 + eps)).collect();
            SparseMatrix::from_triplets(y.len(), &t)
        }
        fn measure(&self, r: &[f64]) -> f64 {
            crate::linalg::norm_inf(r)
        }
    }

    #[test]
    fn schedule_is_geometric() {
        let s = NewtonOptions::default().schedule();
        assert_eq!(s.len(), 6);
        assert!((s[0] - 1e-2).abs() < 1e-18);
        assert!((s[5] - 1e-8).abs() < 1e-20);
        assert!((s[1] / s[0] - s[2] / s[1]).abs() < 1e-12);
    }

    #[test]
    fn solves_a_cubic() {
        let sys = Cubic { b: vec![10.0, -2.0, 0.0, 1e3] };
        let out = solve(&sys, &[0.0; 4], &NewtonOptions::default()).unwrap();
        assert!(out.residual <= 1e-8);
        assert!((out.y[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_is_returned_immediately() {
        let sys = Cubic { b: vec![0.0; 3] };
        let out = solve(&sys, &[0.0; 3], &NewtonOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    /// No root: `y^2 + 1 = 0`.
    struct NoRoot;

    impl NonlinearSystem for NoRoot {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, y: &[f64], _eps: f64) -> Result<Vec<f64>> {
            Ok(vec![y[0] * y[0] + 1.0])
        }
        fn jacobian(&self, y: &[f64], _eps: f64) -> Result<SparseMatrix> {
            SparseMatrix::from_triplets(1, &[(0, 0, 2.0 * y[0] + 1e-3)])
        }
        fn measure(&self, r: &[f64]) -> f64 {
            r[0].abs()
        }
    }

    #[test]
    fn stagnation_carries_best_iterate() {
        let opts = NewtonOptions {
            ptc_steps: 20,
            ..Default::default()
        };
        match solve(&NoRoot, &[0.7], &opts) {
            Err(Error::Stagnation { best, best_residual, .. }) => {
                assert_eq!(best.len(), 1);
                assert!(best_residual >= 1.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
