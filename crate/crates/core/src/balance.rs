//! Covariate balance tables, common-support histograms and the wage
//! expectation arithmetic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, MediatorSet, RoleMap};
use crate::error::{Error, Result};
use crate::ipw::{estimate_propensities, mediation_weights, trim, PropensityPair, TrimmingPolicy};
use crate::numkit::normal_p_value;

/// CHF value of one salary category.
pub const CHF_PER_CATEGORY: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub name: String,
    pub mean_group0: f64,
    pub mean_group1: f64,
    pub difference: f64,
    pub p_value: f64,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
    pub weighted: bool,
    pub trim_policy_used: Option<TrimmingPolicy>,
}

impl BalanceTable {
    pub fn max_abs_difference(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.difference.abs()))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variable", "mean_group0", "mean_group1", "difference", "p_value", "n_missing"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.mean_group0.to_string(),
                r.mean_group1.to_string(),
                r.difference.to_string(),
                r.p_value.to_string(),
                r.n_missing.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weighted mean and the variance of that mean.
///
/// The variance is `n/(n−1) · Σw²(x−m)² / (Σw)²`, which equals `s²/n` when
/// all weights are equal.
fn weighted_moments(x: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let m = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let n = x.len() as f64;
    let ss: f64 = x.iter().zip(w).map(|(a, b)| (b * (a - m)).powi(2)).sum();
    let var = n / (n - 1.0) * ss / (sw * sw);
    let sw2: f64 = w.iter().map(|b| b * b).sum();
    (m, var, sw * sw / sw2)
}

/// Welch-Satterthwaite p-value from per-group mean variances and
/// (effective) sizes.
fn welch_p_value(diff: f64, v: [f64; 2], n: [f64; 2]) -> f64 {
    let se2 = v[0] + v[1];
    if !(se2 > 0.0) {
        return normal_p_value(diff, 0.0);
    }
    let df = se2 * se2 / (v[0] * v[0] / (n[0] - 1.0) + v[1] * v[1] / (n[1] - 1.0));
    let t = diff / se2.sqrt();
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).min(1.0),
        Err(_) => normal_p_value(diff, se2.sqrt()),
    }
}

/// Mean comparison of `variables` between the groups of `group`.
///
/// Each variable uses the rows where it and the group are observed.
/// Without weights the test is Welch's t-test. With weights the means are
/// normalized within group and the test uses Kish effective sizes with the
/// weights treated as fixed; equal weights reproduce the unweighted table.
pub fn balance_table_for(data: &Dataset, group: &str, variables: &[String], weights: Option<&[f64]>) -> Result<BalanceTable> {
    if let Some(w) = weights {
        if w.len() != data.n_rows() {
            return Err(Error::Dimension(format!("{} weights for {} rows", w.len(), data.n_rows())));
        }
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain("balance weights must be finite and nonnegative".into()));
        }
    }
    let g = data.column(group)?;
    let mut rows = Vec::with_capacity(variables.len());
    for name in variables {
        let col = data.column(name)?;
        let mut xs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut ws: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for r in 0..data.n_rows() {
            if let (Some(gv), Some(xv)) = (g.value(r), col.value(r)) {
                let k = usize::from(gv == 1.0);
                xs[k].push(xv);
                ws[k].push(weights.map_or(1.0, |w| w[r]));
            }
        }
        for k in 0..2 {
            let mass: f64 = ws[k].iter().sum();
            if xs[k].len() < 2 || !(mass > 0.0) {
                return Err(Error::EmptySample(format!("group {k} has fewer than two weighted observations of `{name}`")));
            }
        }
        let (m0, v0, n0) = weighted_moments(&xs[0], &ws[0]);
        let (m1, v1, n1) = weighted_moments(&xs[1], &ws[1]);
        let difference = m1 - m0;
        rows.push(BalanceRow {
            name: name.clone(),
            mean_group0: m0,
            mean_group1: m1,
            difference,
            p_value: welch_p_value(difference, [v0, v1], [n0, n1]),
            n_missing: col.n_missing(),
        });
    }
    Ok(BalanceTable { rows, weighted: weights.is_some(), trim_policy_used: None })
}

/// Balance of all controls and mediators between the groups.
pub fn balance_table(data: &Dataset, roles: &RoleMap, weights: Option<&[f64]>) -> Result<BalanceTable> {
    let mut vars = roles.controls.clone();
    vars.extend(roles.mediators(MediatorSet::M1PlusM2));
    balance_table_for(data, &roles.group, &vars, weights)
}

/// Balance after weighting both groups to the G = 0 mediator distribution
/// at the pooled control distribution.
///
/// G = 1 rows get `(1 − p(X,W)) / (p(X,W)(1 − p(W)))` and G = 0 rows get
/// `1/(1 − p(W))`, computed on the trimmed analysis sample. Returns the
/// table and the trimmed sample it was computed on.
pub fn reweighted_balance(
    data: &Dataset,
    roles: &RoleMap,
    mediator_set: MediatorSet,
    policy: &TrimmingPolicy,
) -> Result<(BalanceTable, Dataset)> {
    let est = estimate_propensities(data, roles, mediator_set)?;
    let trimmed = trim(&est.scores, policy)?;
    let rows: Vec<usize> = trimmed.kept.iter().map(|&i| est.sample.kept_row_indices[i]).collect();
    let sub = data.select_rows(&rows);
    let g: Vec<f64> = trimmed.kept.iter().map(|&i| est.group[i]).collect();
    let w = mediation_weights(&g, &est.scores.select(&trimmed.kept))?;
    let combined: Vec<f64> = w.treated_cross.iter().zip(&w.control_w).map(|(a, b)| a + b).collect();
    let mut vars = roles.controls.clone();
    vars.extend(roles.mediators(mediator_set));
    let mut table = balance_table_for(&sub, &roles.group, &vars, Some(&combined))?;
    table.trim_policy_used = Some(*policy);
    Ok((table, sub))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportHistogram {
    pub bin_edges: Vec<f64>,
    pub counts_group0: Vec<usize>,
    pub counts_group1: Vec<usize>,
}

impl SupportHistogram {
    /// Histogram intersection of the two group shares, in [0, 1].
    pub fn overlap(&self) -> f64 {
        let n0: usize = self.counts_group0.iter().sum();
        let n1: usize = self.counts_group1.iter().sum();
        if n0 == 0 || n1 == 0 {
            return 0.0;
        }
        self.counts_group0
            .iter()
            .zip(&self.counts_group1)
            .map(|(&a, &b)| (a as f64 / n0 as f64).min(b as f64 / n1 as f64))
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lower", "bin_upper", "count_group0", "count_group1"])?;
        for b in 0..self.counts_group0.len() {
            w.write_record([
                self.bin_edges[b].to_string(),
                self.bin_edges[b + 1].to_string(),
                self.counts_group0[b].to_string(),
                self.counts_group1[b].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-group histogram of `p(X,W)` over equal-width bins on [0, 1].
pub fn common_support(scores: &PropensityPair, group: &[f64], bins: usize) -> Result<SupportHistogram> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    if group.len() != scores.len() {
        return Err(Error::Dimension("group and scores differ in length".into()));
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|b| b as f64 / bins as f64).collect();
    let mut counts = [vec![0usize; bins], vec![0usize; bins]];
    for (&p, &g) in scores.p_xw.iter().zip(group) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        counts[usize::from(g == 1.0)][b] += 1;
    }
    let [counts_group0, counts_group1] = counts;
    Ok(SupportHistogram { bin_edges, counts_group0, counts_group1 })
}

/// Percentage by which the expected wage exceeds the realized one.
pub fn expectation_gap_pct(expected_wage: f64, realized_wage: f64) -> Result<f64> {
    if !(realized_wage > 0.0) || !(expected_wage > 0.0) {
        return Err(Error::Domain("wages must be positive".into()));
    }
    Ok(100.0 * (expected_wage - realized_wage) / realized_wage)
}

pub fn categories_to_chf(categories: f64) -> f64 {
    categories * CHF_PER_CATEGORY
}
