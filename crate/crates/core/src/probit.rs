//! Maximum-likelihood probit regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, normal_cdf, normal_cdf_pair, normal_pdf, Matrix, QrFactor};

/// Distance from 0 or 1 at which a fitted probability signals separation.
pub const SEPARATION_EPS: f64 = 1e-12;

// Linear predictors beyond this are numerically saturated.
const ETA_LIMIT: f64 = 37.0;
const MAX_HALVINGS: usize = 40;
const LL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fitted_probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbitOptions {
    /// Convergence threshold on the max-norm of the log-likelihood gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}

/// `Φ(η)` kept strictly inside (0, 1).
fn prob(eta: f64) -> f64 {
    normal_cdf(eta).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Per-row contribution: log-likelihood, score factor d/dη and Fisher weight.
fn row_terms(eta: f64, y: f64) -> (f64, f64, f64) {
    let eta = eta.clamp(-ETA_LIMIT, ETA_LIMIT);
    let pdf = normal_pdf(eta);
    let (p, q) = normal_cdf_pair(eta);
    let ll = if y == 1.0 { p.ln() } else { q.ln() };
    // d/dη of y log Φ + (1 - y) log(1 - Φ).
    let score = if y == 1.0 { pdf / p } else { -pdf / q };
    let weight = pdf * pdf / (p * q);
    (ll, score, weight)
}

pub fn log_likelihood(design: &Matrix, response: &[f64], beta: &[f64]) -> Result<f64> {
    let eta = design.mul_vec(beta)?;
    Ok(eta.iter().zip(response).map(|(&e, &y)| row_terms(e, y).0).sum())
}

/// Analytic gradient of the log-likelihood.
pub fn gradient(design: &Matrix, response: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let eta = design.mul_vec(beta)?;
    let mut g = vec![0.0; design.cols()];
    for (i, (&e, &y)) in eta.iter().zip(response).enumerate() {
        let s = row_terms(e, y).1;
        for (gj, xj) in g.iter_mut().zip(design.row(i)) {
            *gj += s * xj;
        }
    }
    Ok(g)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn validate(design: &Matrix, response: &[f64]) -> Result<()> {
    if design.rows() != response.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {}",
            design.rows(),
            response.len()
        )));
    }
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain("probit response must be 0/1".into()));
    }
    let ones = response.iter().filter(|&&y| y == 1.0).count();
    if ones == 0 || ones == response.len() {
        return Err(Error::DegenerateResponse("probit response has a single class".into()));
    }
    Ok(())
}

/// Fits a probit model by Fisher scoring with step-halving.
///
/// Each step solves the weighted least-squares problem
/// `min Σ wᵢ (eᵢ − xᵢδ)²` with Fisher weights `wᵢ = φ²/(Φ(1−Φ))` and working
/// residuals `eᵢ = sᵢ/wᵢ` (s the score factor) through a QR factorization of
/// `√w·X`. A step that lowers the log-likelihood by more than rounding
/// noise is halved until it does not.
pub fn fit_probit(design: &Matrix, response: &[f64], options: ProbitOptions) -> Result<ProbitFit> {
    validate(design, response)?;
    QrFactor::new(design)?;

    let k = design.cols();
    let mut beta = vec![0.0; k];
    let mut cur = Evaluation::at(design, response, &beta)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        if max_abs(&cur.grad) <= options.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let step = QrFactor::new(&cur.weighted)
            .and_then(|qr| qr.solve(&cur.working))
            .map_err(|_| Error::Separation { n_extreme: count_extreme(&cur.eta) })?;

        let ll = cur.ll;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + scale * d).collect();
            let next = Evaluation::at(design, response, &trial)?;
            // Near the optimum the likelihood is flat to rounding; a full
            // step that loses only rounding noise is still accepted.
            if next.ll >= ll - LL_SLACK * (1.0 + ll.abs()) {
                beta = trial;
                cur = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No ascent possible in floating point: we are at the optimum to
            // machine precision unless the gradient says otherwise.
            converged = max_abs(&cur.grad) <= options.tol;
            break;
        }
    }
    if !converged && max_abs(&cur.grad) <= options.tol {
        converged = true;
    }

    let n_extreme = count_extreme(&cur.eta);
    if n_extreme > 0 {
        return Err(Error::Separation { n_extreme });
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm: max_abs(&cur.grad),
            last_iterate: beta,
        });
    }
    Ok(ProbitFit {
        fitted_probabilities: cur.eta.iter().map(|&e| prob(e)).collect(),
        coefficients: beta,
        log_likelihood: cur.ll,
        iterations,
        converged,
    })
}

/// Everything one Fisher step needs at a given coefficient vector.
struct Evaluation {
    eta: Vec<f64>,
    ll: f64,
    grad: Vec<f64>,
    /// `√w·X`.
    weighted: Matrix,
    /// `s/√w`.
    working: Vec<f64>,
}

impl Evaluation {
    fn at(design: &Matrix, response: &[f64], beta: &[f64]) -> Result<Self> {
        let (n, k) = (design.rows(), design.cols());
        let eta = design.mul_vec(beta)?;
        let mut ll = 0.0;
        let mut grad = vec![0.0; k];
        let mut weighted = Vec::with_capacity(n * k);
        let mut working = Vec::with_capacity(n);
        for (i, (&e, &y)) in eta.iter().zip(response).enumerate() {
            let (l, s, w) = row_terms(e, y);
            ll += l;
            let sw = w.max(1e-300).sqrt();
            let row = design.row(i);
            for (gj, xj) in grad.iter_mut().zip(row) {
                *gj += s * xj;
            }
            weighted.extend(row.iter().map(|x| x * sw));
            working.push(s / sw);
        }
        Ok(Self { eta, ll, grad, weighted: Matrix::new(n, k, weighted)?, working })
    }
}

fn count_extreme(eta: &[f64]) -> usize {
    eta.iter()
        .filter(|&&e| {
            let p = normal_cdf(e);
            p < SEPARATION_EPS || p > 1.0 - SEPARATION_EPS
        })
        .count()
}

/// `Φ(xβ)` for each row of `design`.
pub fn predict_proba(fit: &ProbitFit, design: &Matrix) -> Result<Vec<f64>> {
    predict_with(&fit.coefficients, design)
}

pub fn predict_with(coefficients: &[f64], design: &Matrix) -> Result<Vec<f64>> {
    if design.cols() != coefficients.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, model has {} coefficients",
            design.cols(),
            coefficients.len()
        )));
    }
    Ok((0..design.rows()).map(|i| prob(dot(design.row(i), coefficients))).collect())
}
