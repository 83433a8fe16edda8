//! Periodic parent hazards `λ(t; β) = exp(β · b(t))` with a one-day period.
//!
//! Two basis families are supported: an intercept plus `q` harmonic pairs
//! `cos(2πjt), sin(2πjt)`, and `q` cyclic cubic B-splines on equally spaced
//! knots. Both are log-linear in `β`, which keeps the M-step objective
//! concave.

pub mod bspline;
pub mod quadrature;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default knot count for the cyclic B-spline family (both endpoints counted).
pub const DEFAULT_KNOTS: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HazardFamily {
    /// Exponential-sinusoidal with `harmonics` frequency pairs.
    Sinusoidal { harmonics: usize },
    /// Cyclic cubic B-spline. `knots` are equally spaced on [0, 1] and
    /// include both endpoints, so `knots.len() - 1` basis functions exist.
    CyclicBspline { knots: Vec<f64> },
}

impl HazardFamily {
    pub fn bspline_with_knots(count: usize) -> Self {
        let m = count.saturating_sub(1).max(1);
        HazardFamily::CyclicBspline {
            knots: (0..count).map(|i| i as f64 / m as f64).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HazardFamily::Sinusoidal { harmonics } => 1 + 2 * harmonics,
            HazardFamily::CyclicBspline { knots } => knots.len().saturating_sub(1),
        }
    }

    /// Number of equal-width quadrature panels per day.
    fn panels(&self) -> usize {
        match self {
            HazardFamily::Sinusoidal { harmonics: 0 } => 1,
            HazardFamily::Sinusoidal { harmonics } => 4 * harmonics,
            HazardFamily::CyclicBspline { knots } => knots.len() - 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HazardFamily::Sinusoidal { .. } => Ok(()),
            HazardFamily::CyclicBspline { knots } => {
                if knots.len() < 5 {
                    return Err(Error::InvalidHazard(format!(
                        "cyclic cubic B-spline needs at least 5 knots, got {}",
                        knots.len()
                    )));
                }
                let m = (knots.len() - 1) as f64;
                for (i, k) in knots.iter().enumerate() {
                    if (k - i as f64 / m).abs() > 1e-9 {
                        return Err(Error::InvalidHazard(format!(
                            "knots must be equally spaced on [0, 1]; knot {i} is {k}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    #[serde(flatten)]
    pub family: HazardFamily,
    pub beta: Vec<f64>,
}

impl HazardSpec {
    pub fn new(family: HazardFamily, beta: Vec<f64>) -> Result<Self> {
        let spec = HazardSpec { family, beta };
        spec.validate()?;
        Ok(spec)
    }

    /// Sinusoidal hazard; the harmonic count is read off `beta.len() = 1 + 2q`.
    pub fn sinusoidal(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.len().is_multiple_of(2) {
            return Err(Error::InvalidHazard(format!(
                "sinusoidal coefficients must have odd length 1+2q, got {}",
                beta.len()
            )));
        }
        let harmonics = (beta.len() - 1) / 2;
        Self::new(HazardFamily::Sinusoidal { harmonics }, beta)
    }

    pub fn bspline(knots: usize, beta: Vec<f64>) -> Result<Self> {
        Self::new(HazardFamily::bspline_with_knots(knots), beta)
    }

    /// A constant hazard `rate` expressed in the given family.
    pub fn constant(family: HazardFamily, rate: f64) -> Self {
        let dim = family.dim();
        let beta = match family {
            HazardFamily::Sinusoidal { .. } => {
                let mut b = vec![0.0; dim];
                b[0] = rate.ln();
                b
            }
            HazardFamily::CyclicBspline { .. } => vec![rate.ln(); dim],
        };
        HazardSpec { family, beta }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.beta.len() != self.family.dim() {
            return Err(Error::InvalidHazard(format!(
                "expected {} coefficients, got {}",
                self.family.dim(),
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidHazard("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Self {
        HazardSpec {
            family: self.family.clone(),
            beta,
        }
    }

    /// Basis vector `b(t)` at time `t` (days).
    pub fn basis_into(&self, t: f64, out: &mut [f64]) {
        let u = t - t.floor();
        match &self.family {
            HazardFamily::Sinusoidal { harmonics } => {
                out[0] = 1.0;
                for j in 1..=*harmonics {
                    let w = TAU * j as f64 * u;
                    out[2 * j - 1] = w.cos();
                    out[2 * j] = w.sin();
                }
            }
            HazardFamily::CyclicBspline { knots } => {
                bspline::basis_into(u, knots.len() - 1, out);
            }
        }
    }

    pub fn basis(&self, t: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        self.basis_into(t, &mut b);
        b
    }

    /// Linear predictor `log λ(t)`.
    pub fn log_rate(&self, t: f64) -> f64 {
        let u = t - t.floor();
        match &self.family {
            HazardFamily::Sinusoidal { harmonics } => {
                let mut eta = self.beta[0];
                for j in 1..=*harmonics {
                    let w = TAU * j as f64 * u;
                    eta += self.beta[2 * j - 1] * w.cos() + self.beta[2 * j] * w.sin();
                }
                eta
            }
            HazardFamily::CyclicBspline { knots } => {
                let (idx, val) = bspline::active(u, knots.len() - 1);
                idx.iter().zip(val).map(|(k, v)| self.beta[*k] * v).sum()
            }
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.log_rate(t).exp()
    }

    /// Visit quadrature nodes covering [a, b] as `(t, weight)` pairs.
    ///
    /// Whole days are folded onto a single pass over [0, 1) with the weight
    /// multiplied by the day count, so long gaps cost the same as one day.
    pub fn for_each_node(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
        debug_assert!(a <= b);
        if b <= a {
            return;
        }
        let panels = self.family.panels();
        let da = a.floor();
        let db = b.floor();
        let ua = a - da;
        let ub = b - db;
        if da == db {
            visit_fraction(panels, ua, ub, 1.0, &mut f);
            return;
        }
        visit_fraction(panels, ua, 1.0, 1.0, &mut f);
        let whole = db - da - 1.0;
        if whole > 0.0 {
            visit_fraction(panels, 0.0, 1.0, whole, &mut f);
        }
        visit_fraction(panels, 0.0, ub, 1.0, &mut f);
    }

    /// `∫_a^b λ(t) dt`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(Error::InvalidHazard(format!(
                "integration bounds reversed: [{a}, {b}]"
            )));
        }
        Ok(self.integral(a, b))
    }

    /// Unchecked `∫_a^b λ`; returns 0 for `b <= a`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        self.for_each_node(a, b, |t, w| s += w * self.evaluate(t));
        s
    }

    /// `∫_a^b b(t) λ(t) dt`, accumulated into `out` with factor `scale`.
    pub fn integral_basis_into(&self, a: f64, b: f64, scale: f64, out: &mut [f64]) {
        let mut basis = vec![0.0; self.dim()];
        self.for_each_node(a, b, |t, w| {
            self.basis_into(t, &mut basis);
            let lw = scale * w * self.beta_dot(&basis).exp();
            for (o, bk) in out.iter_mut().zip(&basis) {
                *o += lw * bk;
            }
        });
    }

    /// Largest hazard value on a uniform grid of `points` per day.
    pub fn grid_max(&self, points: usize) -> f64 {
        (0..points)
            .map(|k| self.evaluate(k as f64 / points as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[inline]
    fn beta_dot(&self, basis: &[f64]) -> f64 {
        self.beta.iter().zip(basis).map(|(b, x)| b * x).sum()
    }
}

fn visit_fraction(panels: usize, u0: f64, u1: f64, scale: f64, f: &mut impl FnMut(f64, f64)) {
    if u1 <= u0 {
        return;
    }
    let h = 1.0 / panels as f64;
    let first = ((u0 / h).floor() as usize).min(panels - 1);
    for p in first..panels {
        let lo = (p as f64 * h).max(u0);
        let hi = if p + 1 == panels {
            u1
        } else {
            ((p + 1) as f64 * h).min(u1)
        };
        if hi > lo {
            quadrature::for_each_node(lo, hi, |t, w| f(t, w * scale));
        }
        if (p + 1) as f64 * h >= u1 {
            break;
        }
    }
}

/// Weighted log-likelihood contribution of the parent hazard:
///
/// `Σ_i w_i log λ(t_i) − Σ_j v_j ∫_{a_j}^{b_j} λ(t) dt`.
///
/// Concave in `β` because `log λ` is linear in `β`.
#[derive(Clone, Debug, Default)]
pub struct HazardObjective {
    pub points: Vec<(f64, f64)>,
    pub intervals: Vec<(f64, f64, f64)>,
}

impl HazardObjective {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_point(&mut self, t: f64, weight: f64) {
        self.points.push((t, weight));
    }

    pub fn add_interval(&mut self, a: f64, b: f64, weight: f64) {
        self.intervals.push((a, b, weight));
    }

    pub fn value(&self, spec: &HazardSpec) -> f64 {
        let pts: f64 = self
            .points
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|(t, w)| w * spec.log_rate(*t))
            .sum();
        let exposure: f64 = self
            .intervals
            .iter()
            .filter(|(_, _, w)| *w != 0.0)
            .map(|(a, b, w)| w * spec.integral(*a, *b))
            .sum();
        pts - exposure
    }

    pub fn gradient(&self, spec: &HazardSpec) -> Vec<f64> {
        let p = spec.dim();
        let mut g = vec![0.0; p];
        let mut basis = vec![0.0; p];
        for (t, w) in &self.points {
            if *w == 0.0 {
                continue;
            }
            spec.basis_into(*t, &mut basis);
            for (gk, bk) in g.iter_mut().zip(&basis) {
                *gk += w * bk;
            }
        }
        for (a, b, w) in &self.intervals {
            if *w != 0.0 {
                spec.integral_basis_into(*a, *b, -w, &mut g);
            }
        }
        g
    }

    /// Value, gradient and Hessian in one pass over the quadrature nodes.
    pub fn derivatives(&self, spec: &HazardSpec) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = spec.dim();
        let mut value = 0.0;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        let mut basis = vec![0.0; p];
        for (t, w) in &self.points {
            if *w == 0.0 {
                continue;
            }
            spec.basis_into(*t, &mut basis);
            value += w * spec.beta_dot(&basis);
            for k in 0..p {
                g[k] += w * basis[k];
            }
        }
        for (a, b, w) in &self.intervals {
            if *w == 0.0 {
                continue;
            }
            spec.for_each_node(*a, *b, |t, qw| {
                spec.basis_into(t, &mut basis);
                let lw = w * qw * spec.beta_dot(&basis).exp();
                value -= lw;
                for k in 0..p {
                    let bk = lw * basis[k];
                    g[k] -= bk;
                    for l in 0..=k {
                        h[(k, l)] -= bk * basis[l];
                    }
                }
            });
        }
        for k in 0..p {
            for l in 0..k {
                h[(l, k)] = h[(k, l)];
            }
        }
        (value, g, h)
    }

    /// Newton ascent from `start` with step halving; returns the improved spec
    /// and the number of Newton steps taken. Never returns a point with a lower
    /// objective than `start`.
    pub fn maximize(&self, start: &HazardSpec, max_iter: usize) -> (HazardSpec, usize) {
        let mut current = start.clone();
        let (mut value, mut g, mut h) = self.derivatives(&current);
        let p = current.dim();
        let mut steps = 0;
        for _ in 0..max_iter {
            let neg_h = -h.clone();
            let direction = match neg_h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    let ridge = 1e-8 * (1.0 + neg_h.diagonal().amax());
                    match (neg_h + DMatrix::identity(p, p) * ridge).cholesky() {
                        Some(ch) => ch.solve(&g),
                        None => g.clone(),
                    }
                }
            };
            let decrement = g.dot(&direction);
            if !(decrement > 1e-20) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let beta: Vec<f64> = current
                    .beta
                    .iter()
                    .zip(direction.iter())
                    .map(|(b, d)| b + step * d)
                    .collect();
                let candidate = current.with_beta(beta);
                let cand_value = self.value(&candidate);
                if cand_value.is_finite() && cand_value > value {
                    accepted = Some((candidate, cand_value));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, cand_value)) = accepted else {
                break;
            };
            let gain = cand_value - value;
            current = candidate;
            steps += 1;
            (value, g, h) = self.derivatives(&current);
            if gain < 1e-13 * (1.0 + value.abs()) || decrement < 1e-18 {
                break;
            }
        }
        (current, steps)
    }
}
