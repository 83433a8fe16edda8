//! Direct quasi-Newton maximization of the composite log-likelihood, kept as
//! a benchmark against EM.
//!
//! BFGS runs on unconstrained coordinates: logit α, log of every rate and
//! offspring parameter, raw β. Gradients come from the Fisher-identity score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;
use crate::uncertainty::composite_score;
use crate::window::WindowPartition;

use super::composite_loglik;
use super::mstep::{clamp_alpha, clamp_rate};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectResult {
    pub params: ModelParams,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Number of leading coordinates that are not hazard coefficients.
fn positive_block(params: &ModelParams) -> usize {
    params.dim() - params.hazard.dim()
}

fn to_free(params: &ModelParams) -> Vec<f64> {
    let theta = params.to_vec();
    let k = positive_block(params);
    theta
        .iter()
        .enumerate()
        .map(|(j, &v)| match j {
            0 => (v / (1.0 - v)).ln(),
            j if j < k => v.max(1e-10).ln(),
            _ => v,
        })
        .collect()
}

fn from_free(template: &ModelParams, u: &[f64]) -> ModelParams {
    let k = positive_block(template);
    let theta: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(j, &v)| match j {
            0 => clamp_alpha(1.0 / (1.0 + (-v).exp())),
            j if j < k => clamp_rate(v.clamp(-700.0, 700.0).exp()),
            _ => v,
        })
        .collect();
    template.with_vec(&theta)
}

/// `dθ/du` for each coordinate.
fn jacobian_diag(params: &ModelParams) -> Vec<f64> {
    let theta = params.to_vec();
    let k = positive_block(params);
    theta
        .iter()
        .enumerate()
        .map(|(j, &v)| match j {
            0 => v * (1.0 - v),
            j if j < k => v,
            _ => 1.0,
        })
        .collect()
}

struct Objective<'a> {
    partition: &'a WindowPartition,
    template: &'a ModelParams,
    evaluations: usize,
}

impl Objective<'_> {
    /// Negative log-likelihood and its gradient in free coordinates.
    fn eval(&mut self, u: &DVector<f64>) -> (f64, DVector<f64>, ModelParams) {
        self.evaluations += 1;
        let params = from_free(self.template, u.as_slice());
        let ll = composite_loglik(self.partition, &params);
        if !ll.is_finite() {
            return (f64::INFINITY, DVector::zeros(u.len()), params);
        }
        let score = composite_score(self.partition, &params);
        let jac = jacobian_diag(&params);
        let g = DVector::from_iterator(u.len(), score.iter().zip(&jac).map(|(s, d)| -s * d));
        (-ll, g, params)
    }
}

/// BFGS with Armijo backtracking from `start`.
pub fn direct_fit(partition: &WindowPartition, start: &ModelParams, max_iterations: usize, tolerance: f64) -> Result<DirectResult> {
    start.validate()?;
    let mut obj = Objective {
        partition,
        template: start,
        evaluations: 0,
    };
    let n = start.dim();
    let mut u = DVector::from_vec(to_free(start));
    let (mut f, mut g, mut params) = obj.eval(&u);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iterations {
        iterations = it;
        if g.amax() < tolerance * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &u + &dir * step;
            let (fc, gc, pc) = obj.eval(&cand);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc, pc));
                break;
            }
            step *= 0.5;
        }
        let Some((u_new, f_new, g_new, p_new)) = accepted else {
            break;
        };
        let s = &u_new - &u;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
        }
        let delta = f - f_new;
        u = u_new;
        f = f_new;
        g = g_new;
        params = p_new;
        if delta.abs() < 1e-12 * (1.0 + f.abs()) && g.amax() < 1e-4 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }
    Ok(DirectResult {
        params,
        loglik: -f,
        iterations,
        evaluations: obj.evaluations,
        converged,
    })
}
