//! Levenberg-Marquardt damped least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A nonlinear least-squares model.
///
/// The residual vector must have a fixed length between two calls to
/// [`LeastSquaresProblem::relinearize`].
pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;

    /// Residuals at `params`, or `None` where the model is undefined.
    fn residuals(&self, params: &DVector<f64>) -> Option<DVector<f64>>;

    /// Objective used to accept or reject a step. Defaults to the residual sum of squares.
    fn objective(&self, params: &DVector<f64>) -> Option<f64> {
        self.residuals(params).map(|r| r.norm_squared())
    }

    /// Hook invoked at every accepted iterate before the Jacobian is formed.
    fn relinearize(&mut self, _params: &DVector<f64>) {}

    /// Finite-difference step for each parameter.
    fn step_sizes(&self, params: &DVector<f64>) -> DVector<f64> {
        params.map(|p| 1e-6 * p.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_tolerance: 1e-8,
            initial_damping: 1e-3,
            max_damping: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    ZeroObjective,
    DampingExhausted,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: DVector<f64>,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub termination: Termination,
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &mut P,
    init: DVector<f64>,
    config: &LmConfig,
) -> Result<LmSolution> {
    let n = problem.num_params();
    assert_eq!(init.len(), n, "parameter vector length");
    let mut params = init;
    problem.relinearize(&params);
    let mut cost = problem
        .objective(&params)
        .filter(|c| c.is_finite())
        .ok_or_else(|| Error::Diverged("objective undefined at initialization".into()))?;
    let initial_objective = cost;
    let mut history = vec![cost];
    let mut damping = config.initial_damping;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if cost <= f64::MIN_POSITIVE {
            termination = Termination::ZeroObjective;
            break;
        }
        iterations += 1;
        let residuals = problem
            .residuals(&params)
            .ok_or_else(|| Error::Diverged("residuals undefined at accepted iterate".into()))?;
        let jacobian = numerical_jacobian(problem, &params, &residuals);
        let jtj = jacobian.transpose() * &jacobian;
        let gradient = jacobian.transpose() * &residuals;
        if !gradient.iter().all(|g| g.is_finite()) {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        let diag_floor = jtj.diagonal().amax().max(1e-300) * 1e-12;

        let mut accepted = false;
        while damping <= config.max_damping {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += damping * jtj[(i, i)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&gradient));
            let candidate = &params + &delta;
            match problem.objective(&candidate).filter(|c| c.is_finite()) {
                Some(new_cost) if new_cost < cost => {
                    let decrease = (cost - new_cost) / cost;
                    params = candidate;
                    cost = new_cost;
                    history.push(cost);
                    damping = (damping / 10.0).max(1e-12);
                    problem.relinearize(&params);
                    accepted = true;
                    if decrease < config.relative_tolerance {
                        termination = Termination::Converged;
                    }
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !accepted {
            termination = Termination::DampingExhausted;
            break;
        }
        if termination == Termination::Converged {
            break;
        }
    }

    Ok(LmSolution {
        params,
        initial_objective,
        objective: cost,
        iterations,
        history,
        termination,
    })
}

fn numerical_jacobian<P: LeastSquaresProblem>(
    problem: &P,
    params: &DVector<f64>,
    r0: &DVector<f64>,
) -> DMatrix<f64> {
    let steps = problem.step_sizes(params);
    let mut jac = DMatrix::zeros(r0.len(), params.len());
    let mut p = params.clone();
    for j in 0..params.len() {
        let h = steps[j];
        p[j] = params[j] + h;
        let plus = problem.residuals(&p);
        p[j] = params[j] - h;
        let minus = problem.residuals(&p);
        p[j] = params[j];
        let column = match (plus, minus) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - r0) / h,
            (None, Some(b)) => (r0 - b) / h,
            (None, None) => DVector::zeros(r0.len()),
        };
        jac.set_column(j, &column);
    }
    jac
}
