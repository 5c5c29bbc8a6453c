//! Inverse-probability-weighted mediation decomposition.
//!
//! With `p(W) = Pr(G=1|W)` and `p(X,W) = Pr(G=1|X,W)` estimated by probit,
//! the G = 1 referenced components are normalized sample analogues of
//!
//! ```text
//! indirect = E[Y·G/p(W)] − E[Y·G·(1 − p(X,W)) / (p(X,W)·(1 − p(W)))]
//! direct   = E[Y·G·(1 − p(X,W)) / (p(X,W)·(1 − p(W)))] − E[Y·(1−G)/(1 − p(W))]
//! ```
//!
//! where each weight vector is rescaled to sum to one over the rows of the
//! group it applies to. The G = 0 referenced components exchange the roles
//! of the groups and are reported on the same G = 1 minus G = 0 scale.

use serde::{Deserialize, Serialize};

use crate::data::{complete_cases, AnalysisSample, Dataset, MediatorSet, RoleMap};
use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::oaxaca::{DecompositionMethod, DecompositionResult};
use crate::probit::{fit_probit, ProbitOptions};

/// Propensity scores `Pr(G=1|W)` and `Pr(G=1|X,W)` per analysis row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityPair {
    pub p_w: Vec<f64>,
    pub p_xw: Vec<f64>,
}

impl PropensityPair {
    pub fn new(p_w: Vec<f64>, p_xw: Vec<f64>) -> Result<Self> {
        if p_w.len() != p_xw.len() {
            return Err(Error::Dimension("score vectors differ in length".into()));
        }
        if p_w.iter().chain(&p_xw).any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Domain("propensity scores must lie strictly inside (0, 1)".into()));
        }
        Ok(Self { p_w, p_xw })
    }

    pub fn len(&self) -> usize {
        self.p_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_w.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            p_w: idx.iter().map(|&i| self.p_w[i]).collect(),
            p_xw: idx.iter().map(|&i| self.p_xw[i]).collect(),
        }
    }
}

/// Which scores the trimming rule inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimTarget {
    #[default]
    BothScores,
    MediatorScoreOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmingPolicy {
    pub lower: f64,
    pub upper: f64,
    pub target: TrimTarget,
}

impl Default for TrimmingPolicy {
    fn default() -> Self {
        Self { lower: 0.02, upper: 0.98, target: TrimTarget::BothScores }
    }
}

impl TrimmingPolicy {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower < upper && upper <= 1.0) {
            return Err(Error::Config(format!("trimming bounds need 0 <= lower < upper <= 1, got ({lower}, {upper})")));
        }
        Ok(Self { lower, upper, target: TrimTarget::BothScores })
    }

    /// Symmetric policy `[t, 1 − t]`.
    pub fn symmetric(t: f64) -> Result<Self> {
        Self::new(t, 1.0 - t)
    }

    fn inside(&self, p: f64) -> bool {
        p >= self.lower && p <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimOutcome {
    /// Positions (into the score vectors) that survive.
    pub kept: Vec<usize>,
    pub n_trimmed: usize,
}

/// Drops rows whose scores fall outside `[lower, upper]`.
pub fn trim(scores: &PropensityPair, policy: &TrimmingPolicy) -> Result<TrimOutcome> {
    let kept: Vec<usize> = (0..scores.len())
        .filter(|&i| {
            policy.inside(scores.p_xw[i])
                && (policy.target == TrimTarget::MediatorScoreOnly || policy.inside(scores.p_w[i]))
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySample("every row was trimmed".into()));
    }
    Ok(TrimOutcome { n_trimmed: scores.len() - kept.len(), kept })
}

/// Complete-case analysis frame with fitted propensity scores.
#[derive(Debug, Clone)]
pub struct PropensityEstimate {
    pub sample: AnalysisSample,
    pub group: Vec<f64>,
    pub outcome: Vec<f64>,
    pub scores: PropensityPair,
}

/// Columns used by the weighting analyses: G, Y, mediators, controls.
pub fn analysis_columns(roles: &RoleMap, mediator_set: MediatorSet) -> Vec<String> {
    let mut used = vec![roles.group.clone(), roles.outcome.clone()];
    used.extend(roles.mediators(mediator_set));
    used.extend(roles.controls.iter().cloned());
    used
}

fn probit_scores(design: &Matrix, names: &[String], group: &[f64], label: &str) -> Result<Vec<f64>> {
    fit_probit(design, group, ProbitOptions::default())
        .map(|f| f.fitted_probabilities)
        .map_err(|e| match e {
            Error::Singular { column } => Error::Collinear {
                context: format!("propensity model {label}"),
                name: if column == 0 { "intercept".into() } else { names[column - 1].clone() },
            },
            other => other,
        })
}

/// Probit fits of G on `[1, W]` and on `[1, X, W]` over the complete cases.
pub fn estimate_propensities(data: &Dataset, roles: &RoleMap, mediator_set: MediatorSet) -> Result<PropensityEstimate> {
    let sample = complete_cases(data, &analysis_columns(roles, mediator_set))?;
    let rows = &sample.kept_row_indices;
    let group = data.values(&roles.group, rows)?;
    let outcome = data.values(&roles.outcome, rows)?;

    let w_names = roles.controls.clone();
    let mut xw_names = roles.mediators(mediator_set);
    xw_names.extend(w_names.iter().cloned());

    let design_w = data.matrix(&w_names, rows)?.with_intercept();
    let design_xw = data.matrix(&xw_names, rows)?.with_intercept();
    let p_w = probit_scores(&design_w, &w_names, &group, "Pr(G=1|W)")?;
    let p_xw = probit_scores(&design_xw, &xw_names, &group, "Pr(G=1|X,W)")?;
    Ok(PropensityEstimate { sample, group, outcome, scores: PropensityPair { p_w, p_xw } })
}

/// Normalized weight vectors of both reference-group estimators.
///
/// Each vector is zero outside the group it applies to and sums to one
/// inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct MediationWeights {
    /// `1/p(W)` on G = 1.
    pub treated_w: Vec<f64>,
    /// `(1 − p(X,W)) / (p(X,W)(1 − p(W)))` on G = 1.
    pub treated_cross: Vec<f64>,
    /// `1/(1 − p(W))` on G = 0.
    pub control_w: Vec<f64>,
    /// `p(X,W) / ((1 − p(X,W)) p(W))` on G = 0.
    pub control_cross: Vec<f64>,
}

fn normalized(group: &[f64], on: f64, raw: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = group.iter().enumerate().map(|(i, &g)| if g == on { raw(i) } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySample(format!("no rows with G={on} after trimming")));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

pub fn mediation_weights(group: &[f64], scores: &PropensityPair) -> Result<MediationWeights> {
    if group.len() != scores.len() {
        return Err(Error::Dimension("group and scores differ in length".into()));
    }
    let (pw, pxw) = (&scores.p_w, &scores.p_xw);
    Ok(MediationWeights {
        treated_w: normalized(group, 1.0, |i| 1.0 / pw[i])?,
        treated_cross: normalized(group, 1.0, |i| (1.0 - pxw[i]) / (pxw[i] * (1.0 - pw[i])))?,
        control_w: normalized(group, 0.0, |i| 1.0 / (1.0 - pw[i]))?,
        control_cross: normalized(group, 0.0, |i| pxw[i] / ((1.0 - pxw[i]) * pw[i]))?,
    })
}

/// The five decomposition components from given outcomes, groups and scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpwComponents {
    pub total: f64,
    pub indirect_ref_female: f64,
    pub direct_ref_female: f64,
    pub indirect_ref_male: f64,
    pub direct_ref_male: f64,
}

pub fn ipw_components(outcome: &[f64], group: &[f64], scores: &PropensityPair) -> Result<IpwComponents> {
    if outcome.len() != group.len() {
        return Err(Error::Dimension("outcome and group differ in length".into()));
    }
    let w = mediation_weights(group, scores)?;
    let wmean = |weights: &[f64]| -> f64 { weights.iter().zip(outcome).map(|(a, b)| a * b).sum() };
    // E[Y(1,X(1))], E[Y(1,X(0))], E[Y(0,X(0))], E[Y(0,X(1))].
    let y11 = wmean(&w.treated_w);
    let y10 = wmean(&w.treated_cross);
    let y00 = wmean(&w.control_w);
    let y01 = wmean(&w.control_cross);
    Ok(IpwComponents {
        total: y11 - y00,
        indirect_ref_male: y11 - y10,
        direct_ref_male: y10 - y00,
        indirect_ref_female: y01 - y00,
        direct_ref_female: y11 - y01,
    })
}

/// Full pipeline: listwise deletion, probit scores, trimming, then
/// weights recomputed and renormalized on the trimmed sample.
pub fn ipw_mediation(data: &Dataset, roles: &RoleMap, mediator_set: MediatorSet, policy: &TrimmingPolicy) -> Result<DecompositionResult> {
    let est = estimate_propensities(data, roles, mediator_set)?;
    let trimmed = trim(&est.scores, policy)?;
    let y: Vec<f64> = trimmed.kept.iter().map(|&i| est.outcome[i]).collect();
    let g: Vec<f64> = trimmed.kept.iter().map(|&i| est.group[i]).collect();
    let scores = est.scores.select(&trimmed.kept);
    let c = ipw_components(&y, &g, &scores)?;
    Ok(DecompositionResult {
        method: DecompositionMethod::Ipw,
        mediator_set,
        total_gap: c.total,
        indirect_ref_female: c.indirect_ref_female,
        direct_ref_female: c.direct_ref_female,
        indirect_ref_male: c.indirect_ref_male,
        direct_ref_male: c.direct_ref_male,
        n_used: trimmed.kept.len(),
        n_dropped_missing: est.sample.n_dropped_missing,
        n_trimmed: trimmed.n_trimmed,
        inference: None,
    })
}
