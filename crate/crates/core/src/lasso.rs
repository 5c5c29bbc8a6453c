//! L1-penalized regression by cyclic coordinate descent, and the
//! cross-fitted doubly robust (AIPW) treatment-effect estimator built on it.
//!
//! Columns are standardized internally to mean 0 and variance 1 (population
//! divisor); the intercept is never penalized. Coefficients are reported on
//! the original scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{mean, sample_variance, Matrix, RngState};
use crate::ols::{EffectEstimate, EstimatorKind};

/// Probability bounds for logistic fits and AIPW propensities.
pub const PROB_CLAMP: f64 = 1e-6;
const MIN_IRLS_WEIGHT: f64 = 1e-5;
const MAX_SWEEPS: usize = 100_000;
const MAX_IRLS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub family: Family,
    pub intercept: f64,
    /// Slopes on the original column scale.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub sweeps: usize,
}

impl LassoFit {
    /// Linear predictor `b0 + xβ` per row.
    pub fn linear_predictor(&self, design: &Matrix) -> Result<Vec<f64>> {
        let eta = design.mul_vec(&self.coefficients)?;
        Ok(eta.into_iter().map(|e| e + self.intercept).collect())
    }

    /// Conditional mean: identity link for Gaussian fits, clamped logistic
    /// probabilities for binomial fits.
    pub fn predict(&self, design: &Matrix) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(design)?;
        Ok(match self.family {
            Family::Gaussian => eta,
            Family::Binomial => eta.into_iter().map(sigmoid_clamped).collect(),
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_clamped(x: f64) -> f64 {
    sigmoid(x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column-major standardized copy of a design.
struct Standardized {
    n: usize,
    p: usize,
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardized {
    fn new(design: &Matrix) -> Self {
        let (n, p) = (design.rows(), design.cols());
        let means = design.column_means();
        let mut cols = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for j in 0..p {
            let c = design.column(j);
            let var = c.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * means[j].abs().max(1.0) {
                cols.push(c.iter().map(|v| (v - means[j]) / sd).collect());
                sds.push(sd);
            } else {
                cols.push(vec![0.0; n]);
                sds.push(0.0);
            }
        }
        Self { n, p, cols, means, sds }
    }

    /// Maps standardized-scale `(b0, β)` to the original scale.
    fn unscale(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = beta
            .iter()
            .zip(&self.sds)
            .map(|(b, &s)| if s > 0.0 { b / s } else { 0.0 })
            .collect();
        let shift: f64 = slopes.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (b0 - shift, slopes)
    }

    /// Standardized-scale `(b0, β)` from original-scale values.
    fn rescale(&self, intercept: f64, slopes: &[f64]) -> (f64, Vec<f64>) {
        let beta: Vec<f64> = slopes.iter().zip(&self.sds).map(|(b, s)| b * s).collect();
        let shift: f64 = slopes.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (intercept + shift, beta)
    }

    fn gradient(&self, weights: Option<&[f64]>, resid: &[f64], j: usize) -> f64 {
        let c = &self.cols[j];
        let s: f64 = match weights {
            None => c.iter().zip(resid).map(|(x, r)| x * r).sum(),
            Some(w) => c.iter().zip(resid).zip(w).map(|((x, r), w)| x * r * w).sum(),
        };
        s / self.n as f64
    }

    /// `max_j |(1/n) Σ w x_j (z − z̄_w)|`: the smallest λ giving an empty model.
    fn lambda_max(&self, z: &[f64], weights: Option<&[f64]>) -> f64 {
        let wsum: f64 = weights.map_or(self.n as f64, |w| w.iter().sum());
        let zbar = match weights {
            None => z.iter().sum::<f64>() / wsum,
            Some(w) => z.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum,
        };
        let centered: Vec<f64> = z.iter().map(|v| v - zbar).collect();
        (0..self.p).map(|j| self.gradient(weights, &centered, j).abs()).fold(0.0, f64::max)
    }
}

/// Solver state on the standardized scale.
struct CdState {
    b0: f64,
    beta: Vec<f64>,
    resid: Vec<f64>,
}

impl CdState {
    fn new(xs: &Standardized, z: &[f64], b0: f64, beta: Vec<f64>) -> Self {
        let mut resid: Vec<f64> = z.iter().map(|v| v - b0).collect();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (r, x) in resid.iter_mut().zip(&xs.cols[j]) {
                    *r -= b * x;
                }
            }
        }
        Self { b0, beta, resid }
    }
}

/// Weighted penalized least squares
/// `(1/2n) Σ wᵢ (zᵢ − b0 − xᵢβ)² + λ‖β‖₁` by cyclic coordinate descent,
/// alternating full sweeps with sweeps over the active set.
///
/// Stops when a full sweep moves no coefficient by more than `tol` and every
/// coordinate satisfies its optimality condition within `tol`.
fn coordinate_descent(
    xs: &Standardized,
    weights: Option<&[f64]>,
    lambda: f64,
    tol: f64,
    state: &mut CdState,
    mut on_sweep: impl FnMut(&CdState),
) -> Result<usize> {
    let n = xs.n as f64;
    let wsum: f64 = weights.map_or(n, |w| w.iter().sum());
    let curvature: Vec<f64> = (0..xs.p)
        .map(|j| match weights {
            None => {
                if xs.sds[j] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Some(w) => xs.cols[j].iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>() / n,
        })
        .collect();

    let mut sweeps = 0;
    let mut full = true;
    loop {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweeps - 1,
                gradient_norm: f64::NAN,
                last_iterate: state.beta.clone(),
            });
        }
        let mut max_change = 0.0f64;

        let shift = match weights {
            None => state.resid.iter().sum::<f64>() / wsum,
            Some(w) => state.resid.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / wsum,
        };
        if shift != 0.0 {
            state.b0 += shift;
            state.resid.iter_mut().for_each(|r| *r -= shift);
            max_change = max_change.max(shift.abs());
        }

        for j in 0..xs.p {
            let a = curvature[j];
            if a <= 0.0 || (!full && state.beta[j] == 0.0) {
                continue;
            }
            let old = state.beta[j];
            let g = xs.gradient(weights, &state.resid, j) + a * old;
            let new = soft_threshold(g, lambda) / a;
            if new != old {
                let delta = new - old;
                for (r, x) in state.resid.iter_mut().zip(&xs.cols[j]) {
                    *r -= delta * x;
                }
                state.beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        on_sweep(state);

        if max_change > tol {
            full = false;
        } else if !full {
            full = true;
        } else if kkt_residual(xs, weights, lambda, state) <= tol {
            return Ok(sweeps);
        }
    }
}

/// Largest violation of the lasso optimality conditions on the
/// standardized scale.
fn kkt_residual(xs: &Standardized, weights: Option<&[f64]>, lambda: f64, state: &CdState) -> f64 {
    (0..xs.p)
        .filter(|&j| xs.sds[j] > 0.0)
        .map(|j| {
            let g = xs.gradient(weights, &state.resid, j);
            let b = state.beta[j];
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn validate_inputs(design: &Matrix, response: &[f64], lambda: f64) -> Result<()> {
    if design.rows() != response.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {}",
            design.rows(),
            response.len()
        )));
    }
    if design.rows() == 0 {
        return Err(Error::EmptySample("lasso on zero rows".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lasso penalty must be finite and >= 0, got {lambda}")));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso response".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Stop when no coefficient moves by more than this in a full sweep.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-7 }
    }
}

/// Gaussian lasso: minimizes `(1/2n)‖y − b0 − Xβ‖² + λ‖β‖₁`.
pub fn fit_lasso(design: &Matrix, response: &[f64], lambda: f64, tol: f64) -> Result<LassoFit> {
    validate_inputs(design, response, lambda)?;
    let xs = Standardized::new(design);
    fit_gaussian_standardized(&xs, response, lambda, tol, None, |_| {})
}

/// Gaussian lasso that reports the penalized objective after every sweep.
pub fn fit_lasso_traced(design: &Matrix, response: &[f64], lambda: f64, tol: f64) -> Result<(LassoFit, Vec<f64>)> {
    validate_inputs(design, response, lambda)?;
    let xs = Standardized::new(design);
    let n = xs.n as f64;
    let mut trace = Vec::new();
    let fit = fit_gaussian_standardized(&xs, response, lambda, tol, None, |s| {
        let rss: f64 = s.resid.iter().map(|r| r * r).sum();
        let l1: f64 = s.beta.iter().map(|b| b.abs()).sum();
        trace.push(rss / (2.0 * n) + lambda * l1);
    })?;
    Ok((fit, trace))
}

fn fit_gaussian_standardized(
    xs: &Standardized,
    response: &[f64],
    lambda: f64,
    tol: f64,
    warm: Option<&LassoFit>,
    on_sweep: impl FnMut(&CdState),
) -> Result<LassoFit> {
    let (b0, beta) = match warm {
        Some(f) => xs.rescale(f.intercept, &f.coefficients),
        None => (mean(response), vec![0.0; xs.p]),
    };
    let mut state = CdState::new(xs, response, b0, beta);
    let sweeps = coordinate_descent(xs, None, lambda, tol, &mut state, on_sweep)?;
    Ok(finish(xs, Family::Gaussian, lambda, &state, sweeps))
}

fn finish(xs: &Standardized, family: Family, lambda: f64, state: &CdState, sweeps: usize) -> LassoFit {
    let (intercept, coefficients) = xs.unscale(state.b0, &state.beta);
    LassoFit {
        family,
        intercept,
        active_set: (0..xs.p).filter(|&j| state.beta[j] != 0.0).collect(),
        coefficients,
        lambda,
        sweeps,
    }
}

/// L1-penalized logistic regression:
/// minimizes `−(1/n) loglik(b0, β) + λ‖β‖₁` by iteratively reweighted
/// coordinate descent (at most 100 reweighting rounds).
pub fn fit_logistic_lasso(design: &Matrix, response: &[f64], lambda: f64) -> Result<LassoFit> {
    fit_logistic_lasso_with(design, response, lambda, LassoOptions::default())
}

pub fn fit_logistic_lasso_with(design: &Matrix, response: &[f64], lambda: f64, options: LassoOptions) -> Result<LassoFit> {
    validate_inputs(design, response, lambda)?;
    check_binary_response(response)?;
    let xs = Standardized::new(design);
    fit_binomial_standardized(&xs, response, lambda, options.tol, None)
}

fn check_binary_response(response: &[f64]) -> Result<()> {
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain("logistic response must be 0/1".into()));
    }
    let ones = response.iter().filter(|&&y| y == 1.0).count();
    if ones == 0 || ones == response.len() {
        return Err(Error::DegenerateResponse("logistic response has a single class".into()));
    }
    Ok(())
}

fn fit_binomial_standardized(
    xs: &Standardized,
    response: &[f64],
    lambda: f64,
    tol: f64,
    warm: Option<&LassoFit>,
) -> Result<LassoFit> {
    let ybar = mean(response);
    let (mut b0, mut beta) = match warm {
        Some(f) => xs.rescale(f.intercept, &f.coefficients),
        None => ((ybar / (1.0 - ybar)).ln(), vec![0.0; xs.p]),
    };
    let mut total_sweeps = 0;
    for _ in 0..MAX_IRLS {
        let mut eta = vec![b0; xs.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(&xs.cols[j]) {
                    *e += b * x;
                }
            }
        }
        let mut w = Vec::with_capacity(xs.n);
        let mut z = Vec::with_capacity(xs.n);
        for (&e, &y) in eta.iter().zip(response) {
            let p = sigmoid(e);
            let wi = (p * (1.0 - p)).max(MIN_IRLS_WEIGHT);
            w.push(wi);
            z.push(e + (y - p) / wi);
        }
        let mut state = CdState::new(xs, &z, b0, beta.clone());
        total_sweeps += coordinate_descent(xs, Some(&w), lambda, tol * 0.1, &mut state, |_| {})?;
        let change = beta
            .iter()
            .zip(&state.beta)
            .map(|(a, b)| (a - b).abs())
            .fold((b0 - state.b0).abs(), f64::max);
        b0 = state.b0;
        beta = state.beta;
        if change <= tol {
            let state = CdState { b0, beta, resid: Vec::new() };
            return Ok(finish(xs, Family::Binomial, lambda, &state, total_sweeps));
        }
    }
    Err(Error::NonConvergence { iterations: MAX_IRLS, gradient_norm: f64::NAN, last_iterate: beta })
}

/// Largest violation of the optimality conditions of `fit` on `(design,
/// response)`, measured on the standardized scale. Recomputed from scratch.
pub fn kkt_violation(fit: &LassoFit, design: &Matrix, response: &[f64]) -> Result<f64> {
    let xs = Standardized::new(design);
    let (b0, beta) = xs.rescale(fit.intercept, &fit.coefficients);
    let mut resid = Vec::with_capacity(xs.n);
    for i in 0..xs.n {
        let eta = b0 + (0..xs.p).map(|j| beta[j] * xs.cols[j][i]).sum::<f64>();
        resid.push(match fit.family {
            Family::Gaussian => response[i] - eta,
            Family::Binomial => response[i] - sigmoid(eta),
        });
    }
    let state = CdState { b0, beta, resid };
    let intercept_grad = state.resid.iter().sum::<f64>() / xs.n as f64;
    Ok(kkt_residual(&xs, None, fit.lambda, &state).max(intercept_grad.abs()))
}

/// Penalty chosen by K-fold cross-validation over a geometric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPath {
    pub grid: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_len: usize,
    /// Smallest grid value as a fraction of the null-model threshold.
    pub min_ratio: f64,
    pub tol: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { folds: 5, grid_len: 25, min_ratio: 1e-3, tol: 1e-7 }
    }
}

fn fold_assignment(n: usize, folds: usize, rng: RngState) -> Vec<usize> {
    let perm = rng.generator().permutation(n);
    let mut fold = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

/// Selects λ minimizing K-fold prediction error (squared error for the
/// Gaussian family, binomial deviance for the binomial family).
pub fn cross_validate(design: &Matrix, response: &[f64], family: Family, options: CvOptions, rng: RngState) -> Result<CvPath> {
    validate_inputs(design, response, 0.0)?;
    if family == Family::Binomial {
        check_binary_response(response)?;
    }
    let xs = Standardized::new(design);
    let lambda_max = xs.lambda_max(response, None);
    if lambda_max <= 0.0 || options.grid_len < 2 {
        return Ok(CvPath { grid: vec![lambda_max], cv_error: vec![0.0], lambda: lambda_max });
    }
    let ratio = options.min_ratio.powf(1.0 / (options.grid_len - 1) as f64);
    let grid: Vec<f64> = (0..options.grid_len).map(|k| lambda_max * ratio.powi(k as i32)).collect();

    let folds = options.folds.clamp(2, design.rows());
    let assignment = fold_assignment(design.rows(), folds, rng);
    let mut err = vec![0.0; grid.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..design.rows()).filter(|&i| assignment[i] != k).collect();
        let test: Vec<usize> = (0..design.rows()).filter(|&i| assignment[i] == k).collect();
        let xt = design.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| response[i]).collect();
        let xv = design.select_rows(&test);
        let yv: Vec<f64> = test.iter().map(|&i| response[i]).collect();
        let path = fit_path(&xt, &yt, family, &grid, options.tol)?;
        for (e, fit) in err.iter_mut().zip(&path) {
            let pred = fit.predict(&xv)?;
            *e += loss(family, &yv, &pred);
        }
    }
    let best = err
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let n = design.rows() as f64;
    Ok(CvPath { lambda: grid[best], cv_error: err.iter().map(|e| e / n).collect(), grid })
}

fn loss(family: Family, y: &[f64], pred: &[f64]) -> f64 {
    match family {
        Family::Gaussian => y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum(),
        Family::Binomial => y
            .iter()
            .zip(pred)
            .map(|(&a, &p)| -2.0 * if a == 1.0 { p.ln() } else { (1.0 - p).ln() })
            .sum(),
    }
}

/// Warm-started fits along a decreasing λ grid.
pub fn fit_path(design: &Matrix, response: &[f64], family: Family, grid: &[f64], tol: f64) -> Result<Vec<LassoFit>> {
    validate_inputs(design, response, 0.0)?;
    let xs = Standardized::new(design);
    let mut out: Vec<LassoFit> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm = out.last();
        let fit = match family {
            Family::Gaussian => fit_gaussian_standardized(&xs, response, lambda, tol, warm, |_| {})?,
            Family::Binomial => fit_binomial_standardized(&xs, response, lambda, tol, warm)?,
        };
        out.push(fit);
    }
    Ok(out)
}

/// CV-selected fit on the full data.
pub fn fit_cv(design: &Matrix, response: &[f64], family: Family, options: CvOptions, rng: RngState) -> Result<LassoFit> {
    let path = cross_validate(design, response, family, options, rng)?;
    // Refit along the grid down to the chosen λ so the final fit is warm-started.
    let upto: Vec<f64> = path.grid.iter().copied().take_while(|&l| l >= path.lambda).collect();
    let fits = fit_path(design, response, family, &upto, options.tol)?;
    Ok(fits.into_iter().last().expect("grid contains the chosen lambda"))
}

#[derive(Debug, Clone, Copy)]
pub struct DoubleLassoOptions {
    /// Cross-fitting folds.
    pub folds: usize,
    pub seed: u64,
    pub cv: CvOptions,
}

impl Default for DoubleLassoOptions {
    fn default() -> Self {
        Self { folds: 5, seed: 0, cv: CvOptions::default() }
    }
}

/// Nuisance fits of one cross-fitting fold.
#[derive(Debug, Clone)]
pub struct FoldFits {
    pub outcome_treated: LassoFit,
    pub outcome_control: LassoFit,
    pub propensity: LassoFit,
    /// KKT violations of the three fits on their own training data.
    pub kkt: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct AipwResult {
    pub effect: EffectEstimate,
    pub influence: Vec<f64>,
    pub n_clamped: usize,
    pub folds: Vec<FoldFits>,
}

/// Cross-fitted AIPW average treatment effect with lasso nuisance models.
pub fn ate_double_lasso(outcome: &[f64], treated: &[f64], controls: &Matrix, options: DoubleLassoOptions) -> Result<EffectEstimate> {
    Ok(aipw_cross_fit(outcome, treated, controls, controls, options)?.effect)
}

/// AIPW with separate covariate sets for the outcome and propensity models.
///
/// `τ̂ = mean[m̂₁ − m̂₀ + D(Y − m̂₁)/p̂ − (1−D)(Y − m̂₀)/(1 − p̂)]`, nuisance
/// predictions made out-of-fold; SE is the sample SD of the summands over √n.
pub fn aipw_cross_fit(
    outcome: &[f64],
    treated: &[f64],
    outcome_covariates: &Matrix,
    propensity_covariates: &Matrix,
    options: DoubleLassoOptions,
) -> Result<AipwResult> {
    let n = outcome.len();
    if treated.len() != n || outcome_covariates.rows() != n || propensity_covariates.rows() != n {
        return Err(Error::Dimension("AIPW inputs differ in length".into()));
    }
    if treated.iter().any(|&d| d != 0.0 && d != 1.0) {
        return Err(Error::Domain("treatment indicator must be 0/1".into()));
    }
    if options.folds < 2 {
        return Err(Error::Config("cross-fitting needs at least 2 folds".into()));
    }
    let root = RngState::new(options.seed);
    let assignment = fold_assignment(n, options.folds, root.substream(0));
    let fold_rows: Vec<Vec<usize>> =
        (0..options.folds).map(|k| (0..n).filter(|&i| assignment[i] == k).collect()).collect();
    for (k, rows) in fold_rows.iter().enumerate() {
        let t = rows.iter().filter(|&&i| treated[i] == 1.0).count();
        if t == 0 || t == rows.len() {
            return Err(Error::EmptySample(format!("cross-fitting fold {k} lacks a treatment arm")));
        }
    }

    let per_fold: Vec<Result<(Vec<(usize, f64, f64, f64)>, FoldFits)>> = fold_rows
        .par_iter()
        .enumerate()
        .map(|(k, test)| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != k).collect();
            let arm = |d: f64| -> Vec<usize> { train.iter().copied().filter(|&i| treated[i] == d).collect() };
            let (tr1, tr0) = (arm(1.0), arm(0.0));
            if tr1.len() < 2 || tr0.len() < 2 {
                return Err(Error::EmptySample(format!("training data of fold {k} lacks a treatment arm")));
            }
            let stream = root.substream(1 + k as u64);
            let pick = |rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| outcome[i]).collect() };
            let x1 = outcome_covariates.select_rows(&tr1);
            let y1 = pick(&tr1);
            let x0 = outcome_covariates.select_rows(&tr0);
            let y0 = pick(&tr0);
            let xp = propensity_covariates.select_rows(&train);
            let dp: Vec<f64> = train.iter().map(|&i| treated[i]).collect();

            let m1 = fit_cv(&x1, &y1, Family::Gaussian, options.cv, stream.substream(0))?;
            let m0 = fit_cv(&x0, &y0, Family::Gaussian, options.cv, stream.substream(1))?;
            let ps = fit_cv(&xp, &dp, Family::Binomial, options.cv, stream.substream(2))?;
            let kkt = [
                kkt_violation(&m1, &x1, &y1)?,
                kkt_violation(&m0, &x0, &y0)?,
                kkt_violation(&ps, &xp, &dp)?,
            ];

            let xo = outcome_covariates.select_rows(test);
            let xq = propensity_covariates.select_rows(test);
            let p1 = m1.predict(&xo)?;
            let p0 = m0.predict(&xo)?;
            let raw = ps.linear_predictor(&xq)?;
            let preds = test
                .iter()
                .enumerate()
                .map(|(t, &i)| (i, p1[t], p0[t], sigmoid(raw[t])))
                .collect();
            Ok((preds, FoldFits { outcome_treated: m1, outcome_control: m0, propensity: ps, kkt }))
        })
        .collect();

    let mut influence = vec![0.0; n];
    let mut n_clamped = 0;
    let mut folds = Vec::with_capacity(options.folds);
    for res in per_fold {
        let (preds, fits) = res?;
        for (i, m1, m0, p_raw) in preds {
            let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if p != p_raw {
                n_clamped += 1;
            }
            let (y, d) = (outcome[i], treated[i]);
            influence[i] = m1 - m0 + d * (y - m1) / p - (1.0 - d) * (y - m0) / (1.0 - p);
        }
        folds.push(fits);
    }
    let est = mean(&influence);
    let se = (sample_variance(&influence) / n as f64).sqrt();
    let mut effect = EffectEstimate::new(est, se, EstimatorKind::DoubleLasso, n);
    if n_clamped * 10 > n {
        effect.warnings.push(format!(
            "propensity clamp to [{PROB_CLAMP}, {}] engaged on {n_clamped} of {n} rows",
            1.0 - PROB_CLAMP
        ));
    }
    Ok(AipwResult { effect, influence, n_clamped, folds })
}
