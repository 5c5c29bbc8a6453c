//! Least squares with heteroscedasticity-robust covariance, and the two
//! regression-based intervention-effect estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, mean, normal_p_value, sample_variance, Matrix, QrFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RobustKind {
    Hc0,
    #[default]
    Hc1,
    Hc3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub robust_covariance: Matrix,
}

impl OlsFit {
    pub fn standard_error(&self, j: usize) -> f64 {
        self.robust_covariance.get(j, j).max(0.0).sqrt()
    }
}

/// OLS fit with sandwich covariance `(X'X)⁻¹ X' diag(c·r²) X (X'X)⁻¹`.
pub fn fit_ols(design: &Matrix, response: &[f64], robust: RobustKind) -> Result<OlsFit> {
    let qr = QrFactor::new(design)?;
    let coefficients = qr.solve(response)?;
    let fitted = design.mul_vec(&coefficients)?;
    let residuals: Vec<f64> = response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let bread = qr.unscaled_covariance();
    let (n, k) = (design.rows(), design.cols());

    let scale = |i: usize| -> f64 {
        match robust {
            RobustKind::Hc0 => 1.0,
            RobustKind::Hc1 => {
                if n > k {
                    n as f64 / (n - k) as f64
                } else {
                    1.0
                }
            }
            RobustKind::Hc3 => {
                let row = design.row(i);
                let h = (0..k).map(|a| row[a] * dot(bread.row(a), row)).sum::<f64>();
                1.0 / (1.0 - h).max(1e-12).powi(2)
            }
        }
    };

    let mut meat_data = vec![0.0; k * k];
    for i in 0..n {
        let row = design.row(i);
        let w = residuals[i] * residuals[i] * scale(i);
        if w == 0.0 {
            continue;
        }
        for a in 0..k {
            let wa = w * row[a];
            for b in 0..k {
                meat_data[a * k + b] += wa * row[b];
            }
        }
    }
    let meat = Matrix::new(k, k, meat_data)?;
    let sandwich = bread.matmul(&meat)?.matmul(&bread)?;
    // Symmetrize away rounding asymmetry.
    let mut sym = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            sym[a * k + b] = 0.5 * (sandwich.get(a, b) + sandwich.get(b, a));
        }
    }
    Ok(OlsFit { coefficients, residuals, robust_covariance: Matrix::new(k, k, sym)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MeanDifference,
    OlsControls,
    DoubleLasso,
    IpwTotal,
    ObComponent,
    IpwComponent,
}

/// Scalar effect with normal-approximation inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub p_value: f64,
    pub estimator_kind: EstimatorKind,
    pub n_used: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EffectEstimate {
    pub fn new(estimate: f64, standard_error: f64, kind: EstimatorKind, n_used: usize) -> Self {
        Self {
            estimate,
            standard_error,
            p_value: normal_p_value(estimate, standard_error),
            estimator_kind: kind,
            n_used,
            warnings: Vec::new(),
        }
    }
}

fn check_binary(treated: &[f64], n: usize) -> Result<()> {
    if treated.len() != n {
        return Err(Error::Dimension(format!("{} outcomes but {} treatment flags", n, treated.len())));
    }
    if treated.iter().any(|&d| d != 0.0 && d != 1.0) {
        return Err(Error::Domain("treatment indicator must be 0/1".into()));
    }
    Ok(())
}

/// Difference in means with the unequal-variance (Welch) standard error.
pub fn ate_mean_difference(outcome: &[f64], treated: &[f64]) -> Result<EffectEstimate> {
    check_binary(treated, outcome.len())?;
    let (y1, y0): (Vec<f64>, Vec<f64>) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (&y, &d) in outcome.iter().zip(treated) {
            if d == 1.0 {
                a.push(y)
            } else {
                b.push(y)
            }
        }
        (a, b)
    };
    if y1.is_empty() || y0.is_empty() {
        return Err(Error::EmptySample("mean difference needs both treatment arms".into()));
    }
    let est = mean(&y1) - mean(&y0);
    let se = (sample_variance(&y1) / y1.len() as f64 + sample_variance(&y0) / y0.len() as f64).sqrt();
    Ok(EffectEstimate::new(est, se, EstimatorKind::MeanDifference, outcome.len()))
}

/// Coefficient on the treatment in `Y ~ 1 + D + W`, HC1 standard error.
pub fn ate_ols_controls(outcome: &[f64], treated: &[f64], controls: &Matrix) -> Result<EffectEstimate> {
    ate_ols_controls_with(outcome, treated, controls, RobustKind::Hc1)
}

pub fn ate_ols_controls_with(
    outcome: &[f64],
    treated: &[f64],
    controls: &Matrix,
    robust: RobustKind,
) -> Result<EffectEstimate> {
    check_binary(treated, outcome.len())?;
    if controls.rows() != outcome.len() {
        return Err(Error::Dimension("controls and outcome differ in rows".into()));
    }
    let base = Matrix::from_columns(&[vec![1.0; outcome.len()], treated.to_vec()])?;
    let design = base.hstack(controls)?;
    let fit = fit_ols(&design, outcome, robust)?;
    Ok(EffectEstimate::new(fit.coefficients[1], fit.standard_error(1), EstimatorKind::OlsControls, outcome.len()))
}
